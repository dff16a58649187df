//! Graph-augmented inference: vote for a head class over parsed triplets,
//! prepend it to the raw text, and classify by cosine similarity.
//!
//! Both argmax steps break ties by the lexicographically smallest class
//! name so results never depend on hash iteration order.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::relation_text::{render_training_text, ParsedTriplet, RelationLexicon};
use crate::task_graph::TaskSubgraph;
use crate::text_encoder::TextEncoder;
use crate::triple_store::{EntityId, KnowledgeGraph};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum InferenceError {
    #[error("no candidate classes to classify against")]
    EmptyCandidates,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VoteTally {
    pub counts: BTreeMap<EntityId, usize>,
    pub matched: Vec<(ParsedTriplet, EntityId)>,
    pub unmatched: Vec<ParsedTriplet>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vote {
    pub tally: VoteTally,
    pub head: Option<EntityId>,
    /// Every class sharing the winning count, in name order.
    pub leaders: Vec<EntityId>,
}

impl Vote {
    pub fn is_tie(&self) -> bool {
        self.leaders.len() > 1
    }
}

pub fn vote_head(triplets: &[ParsedTriplet], subgraph: &TaskSubgraph, graph: &KnowledgeGraph) -> Vote {
    let mut tally = VoteTally::default();
    for t in triplets {
        match t.path_key(graph).and_then(|k| subgraph.class_of_pair(&k)) {
            Some(class) => {
                *tally.counts.entry(class).or_default() += 1;
                tally.matched.push((t.clone(), class));
            }
            None => tally.unmatched.push(t.clone()),
        }
    }
    let Some(&best) = tally.counts.values().max() else {
        return Vote { tally, ..Default::default() };
    };
    let mut leaders: Vec<EntityId> = tally
        .counts
        .iter()
        .filter(|&(_, &n)| n == best)
        .map(|(&c, _)| c)
        .collect();
    leaders.sort_by(|a, b| graph.entity_name(*a).cmp(graph.entity_name(*b)));
    Vote { head: leaders.first().copied(), tally, leaders }
}

/// `<head> <raw>`, or `raw` unchanged without a head.
pub fn augment_text(raw: &str, head: Option<EntityId>, graph: &KnowledgeGraph) -> String {
    match head {
        None => raw.to_owned(),
        Some(h) if raw.is_empty() => graph.entity_name(h).to_owned(),
        Some(h) => format!("{} {raw}", graph.entity_name(h)),
    }
}

/// Index of the maximum score; exact ties go to the smallest name.
/// Returns whether a tie occurred.
pub fn argmax_by_name(scores: &[f64], names: &[String]) -> Option<(usize, bool)> {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut winner: Option<usize> = None;
    let mut tied = false;
    for (i, &s) in scores.iter().enumerate() {
        if s != best {
            continue;
        }
        match winner {
            None => winner = Some(i),
            Some(w) => {
                tied = true;
                if names[i] < names[w] {
                    winner = Some(i);
                }
            }
        }
    }
    winner.map(|w| (w, tied))
}

/// Which text represents a class on the similarity side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassText {
    #[default]
    Name,
    NameWithTriplets,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub graph_head: Option<EntityId>,
    pub augmented_text: String,
    /// Index into the candidate set.
    pub final_class: usize,
    pub final_name: String,
    pub similarity_scores: Vec<f64>,
    pub tied: bool,
}

/// Candidate classes with their encoded target texts.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    names: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl CandidateSet {
    pub fn from_names(names: Vec<String>, encoder: &dyn TextEncoder) -> Result<Self, InferenceError> {
        let texts = names.clone();
        Self::with_texts(names, &texts, encoder)
    }

    fn with_texts(names: Vec<String>, texts: &[String], encoder: &dyn TextEncoder) -> Result<Self, InferenceError> {
        if names.is_empty() {
            return Err(InferenceError::EmptyCandidates);
        }
        let vectors = texts.iter().map(|t| encoder.encode(t)).collect();
        Ok(Self { names, vectors })
    }

    /// All classes assigned so far.
    pub fn from_subgraph(
        subgraph: &TaskSubgraph,
        graph: &KnowledgeGraph,
        encoder: &dyn TextEncoder,
        class_text: ClassText,
    ) -> Result<Self, InferenceError> {
        let mut names = Vec::new();
        let mut texts = Vec::new();
        for a in subgraph.assignments() {
            let name = graph.entity_name(a.class).to_owned();
            let text = match class_text {
                ClassText::Name => name.clone(),
                ClassText::NameWithTriplets => {
                    render_training_text(a, graph).map_or_else(|_| name.clone(), |t| t.text)
                }
            };
            names.push(name);
            texts.push(text);
        }
        Self::with_texts(names, &texts, encoder)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn classify(&self, augmented: &str, encoder: &dyn TextEncoder) -> Prediction {
        let query = encoder.encode(augmented);
        let nonzero: Vec<(usize, f64)> = query
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, x)| x != 0.0)
            .collect();
        // Both sides are unit-norm or zero, so the dot product is the cosine.
        let scores: Vec<f64> = self
            .vectors
            .iter()
            .map(|v| nonzero.iter().map(|&(i, x)| x * v[i]).sum())
            .collect();
        let (winner, tied) = argmax_by_name(&scores, &self.names).expect("candidate set is non-empty");
        Prediction {
            graph_head: None,
            augmented_text: augmented.to_owned(),
            final_class: winner,
            final_name: self.names[winner].clone(),
            similarity_scores: scores,
            tied,
        }
    }

    /// Highest-scoring candidates, ties in name order.
    pub fn top_k(&self, scores: &[f64], k: usize) -> Vec<(String, f64)> {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.names[a].cmp(&self.names[b]))
        });
        idx.into_iter().take(k).map(|i| (self.names[i].clone(), scores[i])).collect()
    }
}

pub fn classify(
    augmented: &str,
    candidate_classes: &[String],
    encoder: &dyn TextEncoder,
) -> Result<Prediction, InferenceError> {
    Ok(CandidateSet::from_names(candidate_classes.to_vec(), encoder)?.classify(augmented, encoder))
}

#[derive(Debug, Clone)]
pub struct Inference {
    pub triplets: Vec<ParsedTriplet>,
    pub vote: Vote,
    pub prediction: Prediction,
}

/// Parse, vote, augment and classify against one subgraph snapshot.
pub struct InferenceEngine<'a> {
    pub graph: &'a KnowledgeGraph,
    pub subgraph: &'a TaskSubgraph,
    pub lexicon: &'a RelationLexicon,
    pub candidates: &'a CandidateSet,
    pub encoder: &'a dyn TextEncoder,
}

impl InferenceEngine<'_> {
    pub fn infer(&self, raw: &str) -> Inference {
        let triplets = self.lexicon.parse(raw);
        let vote = vote_head(&triplets, self.subgraph, self.graph);
        let augmented = augment_text(raw, vote.head, self.graph);
        let mut prediction = self.candidates.classify(&augmented, self.encoder);
        prediction.graph_head = vote.head;
        Inference { triplets, vote, prediction }
    }

    pub fn diagnostic(&self, raw: &str, inference: &Inference) -> Diagnostic {
        let g = self.graph;
        let name = |e: EntityId| g.entity_name(e).to_owned();
        let mut triplets = Vec::new();
        for (t, class) in &inference.vote.tally.matched {
            triplets.push(DiagTriplet { relation: t.relation_label(g), tail: t.tail.clone(), class: Some(name(*class)) });
        }
        for t in &inference.vote.tally.unmatched {
            triplets.push(DiagTriplet { relation: t.relation_label(g), tail: t.tail.clone(), class: None });
        }
        let p = &inference.prediction;
        Diagnostic {
            raw: raw.to_owned(),
            triplets,
            tally: inference.vote.tally.counts.iter().map(|(&c, &n)| (name(c), n)).collect(),
            graph_head: inference.vote.head.map(name),
            vote_tie: inference.vote.is_tie(),
            augmented: p.augmented_text.clone(),
            final_class: p.final_name.clone(),
            similarity_tie: p.tied,
            top3: self.candidates.top_k(&p.similarity_scores, 3),
        }
    }
}

/// One JSON-lines diagnostic record.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostic {
    pub raw: String,
    pub triplets: Vec<DiagTriplet>,
    pub tally: BTreeMap<String, usize>,
    pub graph_head: Option<String>,
    pub vote_tie: bool,
    pub augmented: String,
    pub final_class: String,
    pub similarity_tie: bool,
    pub top3: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagTriplet {
    pub relation: String,
    pub tail: String,
    pub class: Option<String>,
}
