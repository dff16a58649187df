//! Deterministic synthetic graphs for tests, experiments and benchmarks.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::generator_sim::{FillerTemplates, GENERIC_MENTION};
use crate::text_encoder::{tokenize, HashingEncoder};
use crate::triple_store::{AddOutcome, GraphBuilder, KnowledgeGraph};

const PRIVATE_RELATIONS: [&str; 6] = ["HasProperty", "HasA", "UsedFor", "CapableOf", "MadeOf", "Desires"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaxonomyConfig {
    pub classes: usize,
    /// Classes per genus. Members share an `IsA` tail and an `AtLocation`
    /// tail, which makes them confusable with each other.
    pub genus_size: usize,
    /// Facts per class with a tail no other class has.
    pub private_facts: usize,
    /// When set, class names are chosen so that no two classes, and no class
    /// and any other token the simulator can emit, share a bucket of a
    /// hashing encoder of this dimension.
    pub distinct_buckets: Option<usize>,
}

impl Default for TaxonomyConfig {
    fn default() -> Self {
        Self { classes: 200, genus_size: 4, private_facts: 4, distinct_buckets: None }
    }
}

#[derive(Debug)]
pub struct Taxonomy {
    pub graph: KnowledgeGraph,
    pub classes: Vec<String>,
}

/// Tokens the simulator and the baseline prompt may produce besides class
/// and tail names.
fn fixed_tokens() -> Vec<String> {
    let f = FillerTemplates::builtin();
    let mut text: Vec<&str> = vec!["This is a photo of", GENERIC_MENTION, "IsA AtLocation"];
    text.extend(PRIVATE_RELATIONS);
    text.extend(f.wrap.iter().map(String::as_str));
    text.extend(f.standalone.iter().map(String::as_str));
    text.iter().flat_map(|t| tokenize(t).collect::<Vec<_>>()).collect()
}

/// A genus-structured taxonomy. Class `i` belongs to genus `i / genus_size`.
pub fn taxonomy(cfg: &TaxonomyConfig) -> Taxonomy {
    let genera = cfg.classes.div_ceil(cfg.genus_size.max(1));
    let tail_names = |c: usize| -> Vec<String> {
        (0..cfg.private_facts).map(|k| format!("trait{:06}", c * cfg.private_facts + k)).collect()
    };

    let classes: Vec<String> = match cfg.distinct_buckets {
        None => (0..cfg.classes).map(|i| format!("species{i:05}")).collect(),
        Some(dim) => {
            let enc = HashingEncoder::new(dim);
            let mut used: HashSet<usize> = fixed_tokens().iter().map(|t| enc.bucket(t)).collect();
            for g in 0..genera {
                used.insert(enc.bucket(&format!("genus{g:04}")));
                used.insert(enc.bucket(&format!("habitat{g:04}")));
            }
            for c in 0..cfg.classes {
                used.extend(tail_names(c).iter().map(|t| enc.bucket(t)));
            }
            assert!(used.len() + cfg.classes <= dim, "dimension {dim} cannot separate {} classes", cfg.classes);
            let mut names = Vec::with_capacity(cfg.classes);
            let mut i = 0usize;
            while names.len() < cfg.classes {
                let name = format!("species{i:05}");
                if used.insert(enc.bucket(&name)) {
                    names.push(name);
                }
                i += 1;
            }
            names
        }
    };

    let mut b = GraphBuilder::new();
    for (c, name) in classes.iter().enumerate() {
        let g = c / cfg.genus_size.max(1);
        b.add(name, "IsA", &format!("genus{g:04}"));
        b.add(name, "AtLocation", &format!("habitat{g:04}"));
        for (k, tail) in tail_names(c).iter().enumerate() {
            b.add(name, PRIVATE_RELATIONS[k % PRIVATE_RELATIONS.len()], tail);
        }
    }
    for g in 0..genera {
        b.add(&format!("genus{g:04}"), "IsA", &format!("family{:03}", g / 5));
    }
    Taxonomy { graph: b.build().expect("taxonomy has facts"), classes }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomGraphConfig {
    pub classes: usize,
    pub relations: usize,
    pub tails: usize,
    pub facts_per_class: usize,
    /// Tail-to-tail facts, which give classes two-hop paths.
    pub tail_facts: usize,
}

/// Random graph with class heads `c<i>` and tails `t<j>`. Facts may point
/// from a class to another class.
pub fn random_graph(cfg: &RandomGraphConfig, seed: u64) -> Taxonomy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes: Vec<String> = (0..cfg.classes).map(|i| format!("c{i}")).collect();
    let relations: Vec<String> = (0..cfg.relations.max(1)).map(|i| format!("R{i}")).collect();
    let tails: Vec<String> = (0..cfg.tails.max(1)).map(|i| format!("t{i}")).collect();
    let mut b = GraphBuilder::new();
    for c in &classes {
        for _ in 0..cfg.facts_per_class {
            let r = relations.choose(&mut rng).expect("non-empty");
            if rng.gen_bool(0.1) {
                b.add(c, r, classes.choose(&mut rng).expect("non-empty"));
            } else {
                b.add(c, r, tails.choose(&mut rng).expect("non-empty"));
            }
        }
    }
    for _ in 0..cfg.tail_facts {
        let h = tails.choose(&mut rng).expect("non-empty");
        let t = tails.choose(&mut rng).expect("non-empty");
        b.add(h, relations.choose(&mut rng).expect("non-empty"), t);
    }
    if b.is_empty() {
        b.add("c0", &relations[0], "t0");
    }
    let graph = b.build().expect("non-empty");
    let classes = classes.into_iter().filter(|c| graph.entity(c).is_some()).collect();
    Taxonomy { graph, classes }
}

pub const SCALE_ENTITIES: usize = 574_270;
pub const SCALE_RELATIONS: usize = 50;
pub const SCALE_FACTS: usize = 1_380_131;

const SCALE_RELATION_NAMES: [&str; SCALE_RELATIONS] = [
    "RelatedTo", "FormOf", "IsA", "PartOf", "HasA", "UsedFor", "CapableOf", "AtLocation", "Causes", "HasSubevent",
    "HasFirstSubevent", "HasLastSubevent", "HasPrerequisite", "HasProperty", "MotivatedByGoal", "ObstructedBy",
    "Desires", "CreatedBy", "Synonym", "Antonym", "DistinctFrom", "DerivedFrom", "SymbolOf", "DefinedAs", "MannerOf",
    "LocatedNear", "HasContext", "SimilarTo", "EtymologicallyRelatedTo", "EtymologicallyDerivedFrom", "CausesDesire",
    "MadeOf", "ReceivesAction", "ExternalURL", "InstanceOf", "Entails", "NotDesires", "NotUsedFor", "NotCapableOf",
    "NotHasProperty", "DbpediaGenre", "DbpediaLanguage", "DbpediaOccupation", "DbpediaCapital", "DbpediaField",
    "DbpediaProduct", "DbpediaGenus", "DbpediaInfluencedBy", "DbpediaKnownFor", "DbpediaLeader",
];

pub fn scale_entity_name(i: usize) -> String {
    format!("e{i:06}")
}

/// A graph with exactly [`SCALE_ENTITIES`] entities, [`SCALE_RELATIONS`]
/// relations and [`SCALE_FACTS`] facts. A ring over all entities
/// guarantees every entity is interned; the rest are random edges.
pub fn scale_graph(seed: u64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = (0..SCALE_ENTITIES).map(scale_entity_name).collect();
    let mut b = GraphBuilder::new();
    for i in 0..SCALE_ENTITIES {
        let r = SCALE_RELATION_NAMES[i % SCALE_RELATIONS];
        b.add(&names[i], r, &names[(i + 1) % SCALE_ENTITIES]);
    }
    let mut added = SCALE_ENTITIES;
    while added < SCALE_FACTS {
        let h = rng.gen_range(0..SCALE_ENTITIES);
        let t = rng.gen_range(0..SCALE_ENTITIES);
        let r = SCALE_RELATION_NAMES[rng.gen_range(0..SCALE_RELATIONS)];
        if b.add(&names[h], r, &names[t]) == AddOutcome::Added {
            added += 1;
        }
    }
    b.build().expect("non-empty")
}

/// `n` evenly spaced entities of the scale graph.
pub fn scale_classes(n: usize) -> Vec<String> {
    let step = (SCALE_ENTITIES / n.max(1)).max(1);
    (0..n).map(|i| scale_entity_name((i * step) % SCALE_ENTITIES)).collect()
}
