//! In-memory common-sense triple store.
//!
//! Facts are interned into dense ids and held in two immutable indexes:
//! a CSR layout keyed by head (facts sorted by head, relation, tail) and a
//! `(relation, tail) -> heads` index used by head voting.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Default cap on enumerated two-hop paths per head.
pub const DEFAULT_TWO_HOP_LIMIT: usize = 1000;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("graph contains no facts")]
    EmptyGraph,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fact {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// A second-hop chain `head -r1-> via -r2-> tail`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TwoHop {
    pub relations: [RelationId; 2],
    pub via: EntityId,
    pub tail: EntityId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub entities: usize,
    pub relations: usize,
    pub facts: usize,
    pub duplicates_dropped: usize,
    pub self_loops_dropped: usize,
}

/// Lowercase, trim, and collapse internal whitespace runs into one `_`.
pub fn normalize_name(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for (i, word) in raw.split_whitespace().enumerate() {
        if i > 0 {
            out.push('_');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Relation keywords keep their case; only surrounding and internal
/// whitespace is normalized.
fn normalize_relation(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join("_")
}

#[derive(Debug, Clone, Default)]
struct Interner {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    fn len(&self) -> usize {
        self.names.len()
    }
}

/// Outcome of a single [`GraphBuilder::add`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddOutcome {
    Added,
    Duplicate,
    SelfLoop,
}

/// Accumulates facts and produces an immutable [`KnowledgeGraph`].
///
/// Ids are assigned in order of first appearance (head before tail), so
/// feeding the same facts in the same order always yields the same graph.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    entities: Interner,
    relations: Interner,
    seen: HashSet<(u32, u32, u32)>,
    facts: Vec<Fact>,
    duplicates: usize,
    self_loops: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one fact from raw surface forms. Names must be non-empty after
    /// normalization; the caller is responsible for checking that.
    pub fn add(&mut self, head: &str, relation: &str, tail: &str) -> AddOutcome {
        let head = normalize_name(head);
        let tail = normalize_name(tail);
        let relation = normalize_relation(relation);
        self.add_normalized(&head, &relation, &tail)
    }

    fn add_normalized(&mut self, head: &str, relation: &str, tail: &str) -> AddOutcome {
        if head == tail {
            self.self_loops += 1;
            return AddOutcome::SelfLoop;
        }
        let h = self.entities.intern(head);
        let r = self.relations.intern(relation);
        let t = self.entities.intern(tail);
        if !self.seen.insert((h, r, t)) {
            self.duplicates += 1;
            return AddOutcome::Duplicate;
        }
        self.facts.push(Fact {
            head: EntityId(h),
            relation: RelationId(r),
            tail: EntityId(t),
        });
        AddOutcome::Added
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn build(self) -> Result<KnowledgeGraph, GraphError> {
        if self.facts.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        let mut facts = self.facts;
        facts.sort_unstable();

        let n_entities = self.entities.len();
        let mut head_offsets = vec![0u32; n_entities + 1];
        for f in &facts {
            head_offsets[f.head.index() + 1] += 1;
        }
        for i in 0..n_entities {
            head_offsets[i + 1] += head_offsets[i];
        }

        let mut by_pair_order: Vec<usize> = (0..facts.len()).collect();
        by_pair_order.sort_unstable_by_key(|&i| {
            let f = &facts[i];
            (f.relation, f.tail, f.head)
        });
        let mut pair_heads = Vec::with_capacity(facts.len());
        let mut pair_ranges: HashMap<(RelationId, EntityId), (u32, u32)> = HashMap::new();
        for &i in &by_pair_order {
            let f = facts[i];
            let pos = pair_heads.len() as u32;
            pair_ranges
                .entry((f.relation, f.tail))
                .and_modify(|(_, len)| *len += 1)
                .or_insert((pos, 1));
            pair_heads.push(f.head);
        }

        let stats = LoadStats {
            entities: n_entities,
            relations: self.relations.len(),
            facts: facts.len(),
            duplicates_dropped: self.duplicates,
            self_loops_dropped: self.self_loops,
        };

        Ok(KnowledgeGraph {
            entities: self.entities,
            relations: self.relations,
            facts,
            head_offsets,
            pair_heads,
            pair_ranges,
            stats,
        })
    }
}

/// The full common-sense graph with head and pair indexes. Immutable.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Interner,
    relations: Interner,
    facts: Vec<Fact>,
    head_offsets: Vec<u32>,
    pair_heads: Vec<EntityId>,
    pair_ranges: HashMap<(RelationId, EntityId), (u32, u32)>,
    stats: LoadStats,
}

impl KnowledgeGraph {
    /// Load a `head<TAB>relation<TAB>tail` file. Lines starting with `#`
    /// and blank lines are skipped.
    pub fn load_tsv(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let file = File::open(path)?;
        Self::from_reader(BufReader::new(file))
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self, GraphError> {
        let mut builder = GraphBuilder::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(GraphError::MalformedLine {
                    line: line_no,
                    reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let head = normalize_name(fields[0]);
            let relation = normalize_relation(fields[1]);
            let tail = normalize_name(fields[2]);
            for (what, value) in [("head", &head), ("relation", &relation), ("tail", &tail)] {
                if value.is_empty() {
                    return Err(GraphError::MalformedLine {
                        line: line_no,
                        reason: format!("empty {what}"),
                    });
                }
            }
            builder.add_normalized(&head, &relation, &tail);
        }
        builder.build()
    }

    /// Write the graph back out as TSV in index order.
    pub fn write_tsv(&self, mut out: impl Write) -> io::Result<()> {
        for f in &self.facts {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.entity_name(f.head),
                self.relation_name(f.relation),
                self.entity_name(f.tail)
            )?;
        }
        Ok(())
    }

    pub fn stats(&self) -> &LoadStats {
        &self.stats
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_facts(&self) -> usize {
        self.facts.len()
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    /// Look up an entity by surface form; the query is normalized first.
    pub fn entity(&self, name: &str) -> Option<EntityId> {
        self.entities.get(&normalize_name(name)).map(EntityId)
    }

    /// Look up an already-normalized entity name without re-normalizing.
    pub fn entity_exact(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entities.names[id.index()]
    }

    pub fn relation(&self, name: &str) -> Option<RelationId> {
        self.relations.get(&normalize_relation(name)).map(RelationId)
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relations.names[id.index()]
    }

    pub fn relations(&self) -> impl Iterator<Item = (RelationId, &str)> {
        self.relations
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (RelationId(i as u32), n.as_str()))
    }

    /// All facts with this head, ordered by (relation id, tail id).
    pub fn facts_of(&self, head: EntityId) -> &[Fact] {
        let i = head.index();
        if i >= self.entities.len() {
            return &[];
        }
        let start = self.head_offsets[i] as usize;
        let end = self.head_offsets[i + 1] as usize;
        &self.facts[start..end]
    }

    /// Heads `h` with `(h, relation, tail)` in the graph, ascending by id.
    pub fn heads_for(&self, relation: RelationId, tail: EntityId) -> &[EntityId] {
        match self.pair_ranges.get(&(relation, tail)) {
            Some(&(start, len)) => &self.pair_heads[start as usize..(start + len) as usize],
            None => &[],
        }
    }

    pub fn contains(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        let probe = Fact { head, relation, tail };
        self.facts_of(head).binary_search(&probe).is_ok()
    }

    /// Second-hop chains from `head`, excluding chains that return to
    /// `head` or stay on the intermediate node. Keys `(r1, r2, tail)` are
    /// unique; the first intermediate in index order wins. At most `limit`
    /// chains are produced.
    pub fn two_hop_facts(&self, head: EntityId, limit: usize) -> Vec<TwoHop> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for first in self.facts_of(head) {
            let via = first.tail;
            for second in self.facts_of(via) {
                if out.len() >= limit {
                    return out;
                }
                let tail = second.tail;
                if tail == head || tail == via {
                    continue;
                }
                if seen.insert((first.relation, second.relation, tail)) {
                    out.push(TwoHop {
                        relations: [first.relation, second.relation],
                        via,
                        tail,
                    });
                }
            }
        }
        out
    }
}
