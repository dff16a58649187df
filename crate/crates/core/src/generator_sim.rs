//! Simulated generative model output for a test sample of a known class.
//!
//! Three modes:
//! - `oracle`: the class's training text verbatim.
//! - `corrupted`: each triplet is dropped with `p_drop`, otherwise swapped
//!   with `p_swap` for a triplet of a confusable class. Clause subjects use
//!   the class mention, which collapses to a coarse ancestor with
//!   `p_hypernym`.
//! - `baseline_gmm`: `This is a photo of <mention>`.
//!
//! Every sample draws from its own stream derived from `(seed, keys...)`,
//! and the mention is always drawn first so the corrupted and baseline
//! modes see the same mention for the same stream.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::relation_text::{render_clause, render_training_text};
use crate::task_graph::{RelationPath, TaskSubgraph};
use crate::triple_store::{EntityId, KnowledgeGraph, RelationId};

const FILLER_RESOURCE: &str = include_str!("../resources/filler.txt");

/// Mention used when a class has neither a hypernym nor a confusable.
pub const GENERIC_MENTION: &str = "object";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GenerateError {
    #[error("class `{0}` has no relation paths to generate from")]
    NoAssignment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    Oracle,
    Corrupted,
    BaselineGmm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub mode: GeneratorMode,
    #[serde(default)]
    pub p_drop: f64,
    #[serde(default)]
    pub p_swap: f64,
    #[serde(default)]
    pub p_hypernym: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub filler: bool,
}

impl GeneratorConfig {
    pub fn oracle() -> Self {
        Self { mode: GeneratorMode::Oracle, p_drop: 0.0, p_swap: 0.0, p_hypernym: 0.0, seed: 0, filler: false }
    }

    pub fn corrupted(p_drop: f64, p_swap: f64, p_hypernym: f64) -> Self {
        Self { mode: GeneratorMode::Corrupted, p_drop, p_swap, p_hypernym, ..Self::oracle() }
    }

    pub fn baseline(p_hypernym: f64) -> Self {
        Self { mode: GeneratorMode::BaselineGmm, p_hypernym, ..Self::oracle() }
    }

    /// The same config in another mode; used for paired comparisons.
    pub fn with_mode(self, mode: GeneratorMode) -> Self {
        Self { mode, ..self }
    }

    /// Returns the name of the first out-of-range probability.
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [("p_drop", self.p_drop), ("p_swap", self.p_swap), ("p_hypernym", self.p_hypernym)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("generator.{name} must be in [0, 1], got {p}"));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// RNG streams
// ---------------------------------------------------------------------------

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a base seed with sample coordinates into an independent stream seed.
pub fn derive_stream(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream_rng(stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream)
}

// ---------------------------------------------------------------------------
// Filler templates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FillerTemplates {
    pub wrap: Vec<String>,
    pub standalone: Vec<String>,
}

impl FillerTemplates {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut wrap = Vec::new();
        let mut standalone = Vec::new();
        let mut section = None;
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[wrap]" => section = Some(&mut wrap),
                "[standalone]" => section = Some(&mut standalone),
                _ => match section.as_deref_mut() {
                    Some(v) => v.push(line.to_owned()),
                    None => return Err(format!("template outside a section: {line}")),
                },
            }
        }
        if let Some(bad) = wrap.iter().find(|t| !t.ends_with("{subject} {relation} {tail}.")) {
            return Err(format!("wrap template must end with the clause: {bad}"));
        }
        if wrap.is_empty() || standalone.is_empty() {
            return Err("both [wrap] and [standalone] sections need templates".into());
        }
        Ok(Self { wrap, standalone })
    }

    pub fn builtin() -> &'static FillerTemplates {
        static BUILTIN: OnceLock<FillerTemplates> = OnceLock::new();
        BUILTIN.get_or_init(|| FillerTemplates::parse(FILLER_RESOURCE).expect("bundled filler templates are valid"))
    }
}

// ---------------------------------------------------------------------------
// Confusables
// ---------------------------------------------------------------------------

/// Assigned classes sharing at least one tail entity in the full graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusableMap {
    map: HashMap<EntityId, Vec<EntityId>>,
}

impl ConfusableMap {
    pub fn get(&self, class: EntityId) -> &[EntityId] {
        self.map.get(&class).map_or(&[], Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityId, &[EntityId])> {
        self.map.iter().map(|(&k, v)| (k, v.as_slice()))
    }
}

pub fn build_confusables(subgraph: &TaskSubgraph, graph: &KnowledgeGraph) -> ConfusableMap {
    let classes: Vec<EntityId> = subgraph.classes().collect();
    let mut by_tail: HashMap<EntityId, Vec<EntityId>> = HashMap::new();
    for &c in &classes {
        let tails: HashSet<EntityId> = graph.facts_of(c).iter().map(|f| f.tail).collect();
        for t in tails {
            by_tail.entry(t).or_default().push(c);
        }
    }
    let mut map = HashMap::with_capacity(classes.len());
    for &c in &classes {
        let mut others: HashSet<EntityId> = HashSet::new();
        for f in graph.facts_of(c) {
            if let Some(holders) = by_tail.get(&f.tail) {
                others.extend(holders.iter().copied().filter(|&o| o != c));
            }
        }
        let mut others: Vec<EntityId> = others.into_iter().collect();
        others.sort_by(|a, b| graph.entity_name(*a).cmp(graph.entity_name(*b)));
        map.insert(c, others);
    }
    ConfusableMap { map }
}

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

/// Generation context for one subgraph snapshot.
pub struct Simulator<'a> {
    graph: &'a KnowledgeGraph,
    subgraph: &'a TaskSubgraph,
    confusables: ConfusableMap,
    swap_pool: HashMap<EntityId, Vec<RelationPath>>,
    hypernyms: HashMap<EntityId, EntityId>,
    filler: &'a FillerTemplates,
}

impl<'a> Simulator<'a> {
    pub fn new(graph: &'a KnowledgeGraph, subgraph: &'a TaskSubgraph) -> Self {
        Self::with_filler(graph, subgraph, FillerTemplates::builtin())
    }

    pub fn with_filler(graph: &'a KnowledgeGraph, subgraph: &'a TaskSubgraph, filler: &'a FillerTemplates) -> Self {
        let confusables = build_confusables(subgraph, graph);
        let mut swap_pool = HashMap::new();
        let mut hypernyms = HashMap::new();
        let isa: Option<RelationId> = graph
            .relations()
            .find(|(_, n)| n.eq_ignore_ascii_case("IsA"))
            .map(|(id, _)| id);
        for class in subgraph.classes() {
            let pool: Vec<RelationPath> = confusables
                .get(class)
                .iter()
                .filter_map(|&o| subgraph.assignment(o))
                .flat_map(|a| a.paths.iter().copied())
                .collect();
            swap_pool.insert(class, pool);
            if let Some(isa) = isa {
                if let Some(f) = graph.facts_of(class).iter().find(|f| f.relation == isa) {
                    hypernyms.insert(class, f.tail);
                }
            }
        }
        Self { graph, subgraph, confusables, swap_pool, hypernyms, filler }
    }

    pub fn confusables(&self) -> &ConfusableMap {
        &self.confusables
    }

    pub fn hypernym(&self, class: EntityId) -> Option<EntityId> {
        self.hypernyms.get(&class).copied()
    }

    fn mention(&self, class: EntityId, config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> String {
        let collapse = rng.gen::<f64>() < config.p_hypernym;
        let pick: f64 = rng.gen();
        if !collapse {
            return self.graph.entity_name(class).to_owned();
        }
        if let Some(h) = self.hypernym(class) {
            return self.graph.entity_name(h).to_owned();
        }
        let conf = self.confusables.get(class);
        if conf.is_empty() {
            return GENERIC_MENTION.to_owned();
        }
        let i = ((pick * conf.len() as f64) as usize).min(conf.len() - 1);
        self.graph.entity_name(conf[i]).to_owned()
    }

    /// Simulated output for one sample of `true_class`.
    pub fn generate(&self, true_class: EntityId, config: &GeneratorConfig, stream: u64) -> Result<String, GenerateError> {
        let mut rng = stream_rng(stream);
        let mention = self.mention(true_class, config, &mut rng);
        if config.mode == GeneratorMode::BaselineGmm {
            return Ok(format!("This is a photo of {mention}"));
        }

        let assignment = self
            .subgraph
            .assignment(true_class)
            .filter(|a| !a.paths.is_empty())
            .ok_or_else(|| GenerateError::NoAssignment(self.graph.entity_name(true_class).to_owned()))?;
        if config.mode == GeneratorMode::Oracle {
            return Ok(render_training_text(assignment, self.graph).expect("non-empty").text);
        }

        let pool = self.swap_pool.get(&true_class).map_or(&[][..], Vec::as_slice);
        let mut survivors = Vec::with_capacity(assignment.paths.len());
        for path in &assignment.paths {
            if rng.gen_bool(config.p_drop) {
                continue;
            }
            let swap = rng.gen_bool(config.p_swap);
            match pool.choose(&mut rng) {
                Some(other) if swap => survivors.push(*other),
                _ => survivors.push(*path),
            }
        }
        Ok(self.compose(&mention, &survivors, config.filler, &mut rng))
    }

    fn compose(&self, subject: &str, paths: &[RelationPath], filler: bool, rng: &mut ChaCha8Rng) -> String {
        let lead = self.filler.standalone.choose(rng).expect("non-empty");
        if paths.is_empty() {
            return lead.clone();
        }
        if !filler {
            let clauses: Vec<String> = paths.iter().map(|p| render_clause(subject, p, self.graph)).collect();
            return format!("{}.", clauses.join(". "));
        }
        let mut parts = vec![lead.clone()];
        for p in paths {
            let template = self.filler.wrap.choose(rng).expect("non-empty");
            parts.push(
                template
                    .replace("{subject}", subject)
                    .replace("{relation}", &p.relation_label(self.graph))
                    .replace("{tail}", self.graph.entity_name(p.tail)),
            );
        }
        parts.join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation_text::parse_triplets;

    const FIG2: &str = "\
granny_smith\tIsA\tfruit
granny_smith\tReceiveAction\teaten
granny_smith\tAtLocation\tstore
pineapple\tIsA\tfruit
pineapple\tAtLocation\tstore
pineapple\tAtLocation\tpizza
lemon\tHasProperty\tsour
";

    fn setup() -> (KnowledgeGraph, TaskSubgraph) {
        let g = KnowledgeGraph::from_reader(FIG2.as_bytes()).unwrap();
        let mut sub = TaskSubgraph::new();
        sub.extend(&g, &["granny_smith"], 2).unwrap();
        sub.extend(&g, &["pineapple", "lemon"], 2).unwrap();
        (g, sub)
    }

    #[test]
    fn oracle_renders_training_text() {
        let (g, sub) = setup();
        let sim = Simulator::new(&g, &sub);
        let text = sim.generate(g.entity("granny_smith").unwrap(), &GeneratorConfig::oracle(), 7).unwrap();
        assert_eq!(text, "granny_smith IsA fruit. granny_smith ReceiveAction eaten.");
    }

    #[test]
    fn baseline_without_collapse() {
        let (g, sub) = setup();
        let sim = Simulator::new(&g, &sub);
        let text = sim.generate(g.entity("granny_smith").unwrap(), &GeneratorConfig::baseline(0.0), 1).unwrap();
        assert_eq!(text, "This is a photo of granny_smith");
    }

    #[test]
    fn baseline_collapse_uses_hypernym_then_confusable() {
        let (g, sub) = setup();
        let sim = Simulator::new(&g, &sub);
        let gs = sim.generate(g.entity("granny_smith").unwrap(), &GeneratorConfig::baseline(1.0), 1).unwrap();
        assert_eq!(gs, "This is a photo of fruit");
        let lemon = sim.generate(g.entity("lemon").unwrap(), &GeneratorConfig::baseline(1.0), 1).unwrap();
        assert_eq!(lemon, format!("This is a photo of {GENERIC_MENTION}"));
    }

    #[test]
    fn drop_everything_leaves_filler_only() {
        let (g, sub) = setup();
        let sim = Simulator::new(&g, &sub);
        for filler in [false, true] {
            let cfg = GeneratorConfig { filler, ..GeneratorConfig::corrupted(1.0, 0.0, 0.0) };
            for s in 0..20 {
                let text = sim.generate(g.entity("pineapple").unwrap(), &cfg, s).unwrap();
                assert!(!text.is_empty());
                assert!(parse_triplets(&text, &g).is_empty(), "{text}");
            }
        }
    }

    #[test]
    fn no_corruption_recovers_all_triplets() {
        let (g, sub) = setup();
        let sim = Simulator::new(&g, &sub);
        let cfg = GeneratorConfig { filler: true, ..GeneratorConfig::corrupted(0.0, 0.0, 0.0) };
        let text = sim.generate(g.entity("pineapple").unwrap(), &cfg, 3).unwrap();
        let ts = parse_triplets(&text, &g);
        let tails: Vec<&str> = ts.iter().map(|t| t.tail.as_str()).collect();
        assert_eq!(tails, ["store", "pizza"], "{text}");
    }

    #[test]
    fn full_swap_uses_confusable_triplets() {
        let (g, sub) = setup();
        let sim = Simulator::new(&g, &sub);
        let cfg = GeneratorConfig::corrupted(0.0, 1.0, 0.0);
        let text = sim.generate(g.entity("granny_smith").unwrap(), &cfg, 11).unwrap();
        for t in parse_triplets(&text, &g) {
            let owner = sub.class_of_pair(&t.path_key(&g).unwrap());
            assert_eq!(owner, g.entity("pineapple"), "{text}");
        }
    }

    #[test]
    fn empty_assignment_is_reported() {
        let g = KnowledgeGraph::from_reader("a\tIsA\tb\n".as_bytes()).unwrap();
        let mut sub = TaskSubgraph::new();
        sub.extend(&g, &["b"], 1).unwrap();
        let sim = Simulator::new(&g, &sub);
        let b = g.entity("b").unwrap();
        assert_eq!(
            sim.generate(b, &GeneratorConfig::oracle(), 0),
            Err(GenerateError::NoAssignment("b".into()))
        );
        assert!(sim.generate(b, &GeneratorConfig::baseline(0.0), 0).is_ok());
    }

    #[test]
    fn generation_is_reproducible() {
        let (g, sub) = setup();
        let sim = Simulator::new(&g, &sub);
        let cfg = GeneratorConfig { filler: true, ..GeneratorConfig::corrupted(0.3, 0.3, 0.3) };
        let class = g.entity("pineapple").unwrap();
        for i in 0..50u64 {
            let stream = derive_stream(99, &[2, i]);
            assert_eq!(sim.generate(class, &cfg, stream), sim.generate(class, &cfg, stream));
        }
        assert_ne!(derive_stream(1, &[0, 1]), derive_stream(1, &[1, 0]));
    }

    #[test]
    fn confusables_fig2() {
        let (g, sub) = setup();
        let conf = build_confusables(&sub, &g);
        let gs = g.entity("granny_smith").unwrap();
        let pa = g.entity("pineapple").unwrap();
        assert_eq!(conf.get(gs), [pa]);
        assert_eq!(conf.get(pa), [gs]);
        assert!(conf.get(g.entity("lemon").unwrap()).is_empty());
        for (c, others) in conf.iter() {
            assert!(!others.contains(&c));
            for &o in others {
                assert!(conf.get(o).contains(&c));
            }
        }
    }

    #[test]
    fn config_validation_names_field() {
        let cfg = GeneratorConfig::corrupted(0.2, 1.5, 0.0);
        assert!(cfg.validate().unwrap_err().contains("p_swap"));
        assert!(GeneratorConfig::oracle().validate().is_ok());
    }

    #[test]
    fn bundled_filler_is_valid() {
        let f = FillerTemplates::builtin();
        assert!(f.wrap.len() >= 2 && f.standalone.len() >= 2);
        assert!(FillerTemplates::parse("[wrap]\nno clause here\n[standalone]\nx.\n").is_err());
    }
}
