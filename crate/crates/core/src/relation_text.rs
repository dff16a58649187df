//! Relation-aware text: rendering assignments into training text and
//! keyword-anchored parsing of generated text back into triplets.
//!
//! Grammar (version [`GRAMMAR_VERSION`]): one clause per relation path,
//! `<class> <Relation> <tail>`, with second-hop paths written as
//! `<class> <R1>_<R2> <tail>`. Clauses are joined by `". "` and the text
//! ends with `"."`.

use std::collections::{HashMap, HashSet};

use crate::task_graph::{ClassAssignment, RelationPath};
use crate::triple_store::{EntityId, KnowledgeGraph, RelationId};

pub const GRAMMAR_VERSION: u32 = 1;

/// Instruction given to the generator at inference time.
pub const INSTRUCTION_PROMPT: &str =
    "Describe details of this photo from color, species, location, background, etc.";

const STOP_WORDS: [&str; 3] = ["a", "an", "the"];

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("assignment for `{0}` has no relation paths")]
    EmptyAssignment(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingText {
    pub class: EntityId,
    pub text: String,
}

/// A `(relation path, tail)` pair recovered from text. The tail is the
/// normalized surface form and may not name any entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParsedTriplet {
    pub first: RelationId,
    pub second: Option<RelationId>,
    pub tail: String,
}

impl ParsedTriplet {
    pub fn relation_label(&self, graph: &KnowledgeGraph) -> String {
        match self.second {
            None => graph.relation_name(self.first).to_owned(),
            Some(s) => format!("{}_{}", graph.relation_name(self.first), graph.relation_name(s)),
        }
    }

    /// The subgraph key this triplet would match, if its tail is an entity.
    pub fn path_key(&self, graph: &KnowledgeGraph) -> Option<RelationPath> {
        let tail = graph.entity_exact(&self.tail)?;
        Some(RelationPath { first: self.first, second: self.second, tail })
    }
}

/// One clause of the grammar for an arbitrary subject.
pub fn render_clause(subject: &str, path: &RelationPath, graph: &KnowledgeGraph) -> String {
    format!("{subject} {} {}", path.relation_label(graph), graph.entity_name(path.tail))
}

pub fn render_training_text(
    assignment: &ClassAssignment,
    graph: &KnowledgeGraph,
) -> Result<TrainingText, RenderError> {
    let class = graph.entity_name(assignment.class);
    if assignment.paths.is_empty() {
        return Err(RenderError::EmptyAssignment(class.to_owned()));
    }
    let clauses: Vec<String> = assignment
        .paths
        .iter()
        .map(|p| render_clause(class, p, graph))
        .collect();
    Ok(TrainingText {
        class: assignment.class,
        text: format!("{}.", clauses.join(". ")),
    })
}

/// Case-insensitive relation keyword table for one graph.
///
/// Relation names that differ only by case collapse onto the first one.
#[derive(Debug, Clone)]
pub struct RelationLexicon {
    keywords: HashMap<String, RelationId>,
}

impl RelationLexicon {
    pub fn new(graph: &KnowledgeGraph) -> Self {
        let mut keywords = HashMap::new();
        for (id, name) in graph.relations() {
            keywords.entry(name.to_lowercase()).or_insert(id);
        }
        Self { keywords }
    }

    /// Match a lowercased token as a single keyword or an `R1_R2` pair.
    fn keyword(&self, token: &str) -> Option<(RelationId, Option<RelationId>)> {
        if let Some(&r) = self.keywords.get(token) {
            return Some((r, None));
        }
        token.match_indices('_').find_map(|(i, _)| {
            let first = *self.keywords.get(&token[..i])?;
            let second = *self.keywords.get(&token[i + 1..])?;
            Some((first, Some(second)))
        })
    }

    pub fn parse(&self, text: &str) -> Vec<ParsedTriplet> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let mut current: Option<((RelationId, Option<RelationId>), Vec<String>)> = None;

        let mut finish = |current: &mut Option<((RelationId, Option<RelationId>), Vec<String>)>| {
            if let Some(((first, second), tail)) = current.take() {
                if !tail.is_empty() {
                    let t = ParsedTriplet { first, second, tail: tail.join("_") };
                    if seen.insert(t.clone()) {
                        out.push(t);
                    }
                }
            }
        };

        for token in lex(text) {
            match token {
                Token::Boundary => finish(&mut current),
                Token::Word(word) => {
                    if let Some(rel) = self.keyword(&word) {
                        finish(&mut current);
                        current = Some((rel, Vec::new()));
                    } else if let Some((_, tail)) = current.as_mut() {
                        if tail.is_empty() && STOP_WORDS.contains(&word.as_str()) {
                            continue;
                        }
                        tail.push(word);
                    }
                }
            }
        }
        finish(&mut current);
        out
    }
}

/// Parse with a throwaway lexicon. Prefer [`RelationLexicon::parse`] in loops.
pub fn parse_triplets(text: &str, graph: &KnowledgeGraph) -> Vec<ParsedTriplet> {
    RelationLexicon::new(graph).parse(text)
}

#[derive(Debug, PartialEq, Eq)]
enum Token {
    Word(String),
    Boundary,
}

fn is_boundary(c: char) -> bool {
    matches!(c, '.' | ',' | ';' | '!' | '?')
}

fn lex(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<Token>| {
        let trimmed = word.trim_matches(|c: char| "\"'()[]{}:".contains(c));
        if !trimmed.is_empty() {
            tokens.push(Token::Word(trimmed.to_lowercase()));
        }
        word.clear();
    };
    for c in text.chars() {
        if c.is_whitespace() {
            flush(&mut word, &mut tokens);
        } else if is_boundary(c) {
            flush(&mut word, &mut tokens);
            tokens.push(Token::Boundary);
        } else {
            word.push(c);
        }
    }
    flush(&mut word, &mut tokens);
    tokens
}
