//! Incremental per-task subgraph allocation.
//!
//! Every arriving class is granted up to `r_target` `(relation path, tail)`
//! keys that no earlier class holds. Direct facts are tried first in index
//! order; second-hop chains fill any remaining slots. Keys are reserved
//! forever, so assignments of earlier tasks never change.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::relation_text::GRAMMAR_VERSION;
use crate::triple_store::{EntityId, KnowledgeGraph, RelationId, DEFAULT_TWO_HOP_LIMIT};

/// Default number of relation paths granted per class.
pub const DEFAULT_R_TARGET: usize = 3;

const EXPORT_FORMAT: u32 = 1;
const EXPORT_COLUMNS: &str = "task\tclass\trelation\ttail";

#[derive(Debug, thiserror::Error)]
pub enum TaskGraphError {
    #[error("r_target must be positive")]
    InvalidTarget,
    #[error("class `{0}` is already assigned or repeated in this task")]
    DuplicateClass(String),
    #[error("subgraph import, line {line}: {reason}")]
    Import { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A relation sequence of length one or two ending at `tail`. This is the
/// exclusivity key: no two classes may hold the same path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationPath {
    pub first: RelationId,
    pub second: Option<RelationId>,
    pub tail: EntityId,
}

impl RelationPath {
    pub fn direct(relation: RelationId, tail: EntityId) -> Self {
        Self { first: relation, second: None, tail }
    }

    pub fn two_hop(first: RelationId, second: RelationId, tail: EntityId) -> Self {
        Self { first, second: Some(second), tail }
    }

    pub fn len(&self) -> usize {
        1 + usize::from(self.second.is_some())
    }

    pub fn is_two_hop(&self) -> bool {
        self.second.is_some()
    }

    pub fn relations(&self) -> impl Iterator<Item = RelationId> {
        std::iter::once(self.first).chain(self.second)
    }

    /// Relation names joined with `_`, e.g. `RelatedTo_RelatedTo`.
    pub fn relation_label(&self, graph: &KnowledgeGraph) -> String {
        match self.second {
            None => graph.relation_name(self.first).to_owned(),
            Some(second) => format!(
                "{}_{}",
                graph.relation_name(self.first),
                graph.relation_name(second)
            ),
        }
    }
}

/// Resolve `IsA` or `RelatedTo_RelatedTo` against the graph's relations.
/// A whole-label match wins over a split, so relation names containing `_`
/// still resolve.
pub fn resolve_relation_label(
    graph: &KnowledgeGraph,
    label: &str,
) -> Option<(RelationId, Option<RelationId>)> {
    if let Some(r) = graph.relation(label) {
        return Some((r, None));
    }
    label.match_indices('_').find_map(|(i, _)| {
        let first = graph.relation(&label[..i])?;
        let second = graph.relation(&label[i + 1..])?;
        Some((first, Some(second)))
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassAssignment {
    pub class: EntityId,
    pub task_index: usize,
    pub paths: Vec<RelationPath>,
}

#[derive(Debug, Clone, Copy)]
pub struct AllocationOptions {
    pub two_hop_limit: usize,
}

impl Default for AllocationOptions {
    fn default() -> Self {
        Self { two_hop_limit: DEFAULT_TWO_HOP_LIMIT }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassAllocation {
    pub class: String,
    pub requested: usize,
    pub granted: usize,
    pub fallback_used: bool,
    pub unknown: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub task_index: usize,
    pub classes: Vec<ClassAllocation>,
    /// Classes granted fewer than `requested` paths, unknown ones included.
    pub shortfall: Vec<String>,
    pub unknown: Vec<String>,
}

impl AllocationReport {
    /// Fold a later task's report into this one.
    pub fn merge(&mut self, other: AllocationReport) {
        self.task_index = other.task_index;
        self.classes.extend(other.classes);
        self.shortfall.extend(other.shortfall);
        self.unknown.extend(other.unknown);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportStats {
    pub bytes: u64,
    pub classes: usize,
    pub paths: usize,
}

/// Evolving assignment of exclusive relation paths to classes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskSubgraph {
    assignments: Vec<ClassAssignment>,
    class_index: HashMap<EntityId, usize>,
    pair_to_class: HashMap<RelationPath, EntityId>,
    task_entities: Vec<Vec<EntityId>>,
    seen_entities: HashSet<EntityId>,
}

impl TaskSubgraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_tasks(&self) -> usize {
        self.task_entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Assignments in allocation order (task, then class order within it).
    pub fn assignments(&self) -> &[ClassAssignment] {
        &self.assignments
    }

    pub fn assignment(&self, class: EntityId) -> Option<&ClassAssignment> {
        self.class_index.get(&class).map(|&i| &self.assignments[i])
    }

    pub fn classes(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.assignments.iter().map(|a| a.class)
    }

    pub fn class_of_pair(&self, path: &RelationPath) -> Option<EntityId> {
        self.pair_to_class.get(path).copied()
    }

    pub fn is_used(&self, path: &RelationPath) -> bool {
        self.pair_to_class.contains_key(path)
    }

    pub fn used_pairs(&self) -> impl Iterator<Item = &RelationPath> {
        self.pair_to_class.keys()
    }

    pub fn pair_to_class(&self) -> &HashMap<RelationPath, EntityId> {
        &self.pair_to_class
    }

    pub fn num_paths(&self) -> usize {
        self.pair_to_class.len()
    }

    /// Entities first introduced by task `t`: its classes plus the tails
    /// they were granted that no earlier task had introduced.
    pub fn task_entities(&self, task: usize) -> &[EntityId] {
        self.task_entities.get(task).map_or(&[], Vec::as_slice)
    }

    pub fn extend(
        &mut self,
        graph: &KnowledgeGraph,
        new_classes: &[impl AsRef<str>],
        r_target: usize,
    ) -> Result<AllocationReport, TaskGraphError> {
        self.extend_with(graph, new_classes, r_target, AllocationOptions::default())
    }

    /// Allocate paths for one task's classes, in the order given.
    pub fn extend_with(
        &mut self,
        graph: &KnowledgeGraph,
        new_classes: &[impl AsRef<str>],
        r_target: usize,
        options: AllocationOptions,
    ) -> Result<AllocationReport, TaskGraphError> {
        if r_target == 0 {
            return Err(TaskGraphError::InvalidTarget);
        }

        let mut resolved = Vec::with_capacity(new_classes.len());
        let mut batch = HashSet::new();
        for name in new_classes {
            let name = name.as_ref();
            let id = graph.entity(name);
            if let Some(id) = id {
                if self.class_index.contains_key(&id) || !batch.insert(id) {
                    return Err(TaskGraphError::DuplicateClass(name.to_owned()));
                }
            }
            resolved.push((name, id));
        }

        let task_index = self.task_entities.len();
        self.task_entities.push(Vec::new());
        let mut report = AllocationReport { task_index, ..Default::default() };

        for (name, id) in resolved {
            let Some(class) = id else {
                log::warn!("unknown class `{name}`; no entity in graph");
                report.classes.push(ClassAllocation {
                    class: name.to_owned(),
                    requested: r_target,
                    granted: 0,
                    fallback_used: false,
                    unknown: true,
                });
                report.shortfall.push(name.to_owned());
                report.unknown.push(name.to_owned());
                continue;
            };

            let (paths, fallback_used) = self.select_paths(graph, class, r_target, options);
            let granted = paths.len();
            if granted < r_target {
                log::warn!("class `{name}` granted {granted} of {r_target} relation paths");
                report.shortfall.push(graph.entity_name(class).to_owned());
            }
            report.classes.push(ClassAllocation {
                class: graph.entity_name(class).to_owned(),
                requested: r_target,
                granted,
                fallback_used,
                unknown: false,
            });
            self.insert(ClassAssignment { class, task_index, paths });
        }
        Ok(report)
    }

    fn select_paths(
        &self,
        graph: &KnowledgeGraph,
        class: EntityId,
        r_target: usize,
        options: AllocationOptions,
    ) -> (Vec<RelationPath>, bool) {
        let mut paths = Vec::with_capacity(r_target);
        for fact in graph.facts_of(class) {
            if paths.len() == r_target {
                return (paths, false);
            }
            let key = RelationPath::direct(fact.relation, fact.tail);
            if !self.is_used(&key) {
                paths.push(key);
            }
        }
        if paths.len() == r_target {
            return (paths, false);
        }

        let mut fallback_used = false;
        for hop in graph.two_hop_facts(class, options.two_hop_limit) {
            if paths.len() == r_target {
                break;
            }
            let key = RelationPath::two_hop(hop.relations[0], hop.relations[1], hop.tail);
            if !self.is_used(&key) {
                paths.push(key);
                fallback_used = true;
            }
        }
        (paths, fallback_used)
    }

    fn insert(&mut self, assignment: ClassAssignment) {
        let task = assignment.task_index;
        for entity in std::iter::once(assignment.class).chain(assignment.paths.iter().map(|p| p.tail)) {
            if self.seen_entities.insert(entity) {
                self.task_entities[task].push(entity);
            }
        }
        for path in &assignment.paths {
            self.pair_to_class.insert(*path, assignment.class);
        }
        self.class_index.insert(assignment.class, self.assignments.len());
        self.assignments.push(assignment);
    }

    // ---------------------------------------------------------------------
    // Export / import
    // ---------------------------------------------------------------------

    pub fn write_tsv(&self, graph: &KnowledgeGraph, out: impl Write) -> io::Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(
            out,
            "# kgcil-subgraph format={EXPORT_FORMAT} grammar={GRAMMAR_VERSION} tasks={}",
            self.num_tasks()
        )?;
        writeln!(out, "{EXPORT_COLUMNS}")?;
        for a in &self.assignments {
            let class = graph.entity_name(a.class);
            if a.paths.is_empty() {
                writeln!(out, "{}\t{class}\t\t", a.task_index)?;
            }
            for p in &a.paths {
                writeln!(
                    out,
                    "{}\t{class}\t{}\t{}",
                    a.task_index,
                    p.relation_label(graph),
                    graph.entity_name(p.tail)
                )?;
            }
        }
        out.flush()
    }

    pub fn to_tsv_bytes(&self, graph: &KnowledgeGraph) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_tsv(graph, &mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Write the subgraph to `path` and report its size on disk.
    pub fn export(&self, graph: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<ExportStats, TaskGraphError> {
        let bytes = self.to_tsv_bytes(graph);
        std::fs::write(path, &bytes)?;
        Ok(ExportStats {
            bytes: bytes.len() as u64,
            classes: self.assignments.len(),
            paths: self.num_paths(),
        })
    }

    pub fn import(graph: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<Self, TaskGraphError> {
        Self::from_reader(graph, BufReader::new(File::open(path)?))
    }

    pub fn from_reader(graph: &KnowledgeGraph, reader: impl BufRead) -> Result<Self, TaskGraphError> {
        let err = |line: usize, reason: String| TaskGraphError::Import { line, reason };
        let mut lines = reader.lines().enumerate();

        let tasks = match lines.next() {
            Some((_, header)) => parse_header(&header?).ok_or_else(|| err(1, "bad header".into()))?,
            None => return Err(err(1, "missing header".into())),
        };
        match lines.next().map(|(_, cols)| cols).transpose()? {
            Some(cols) if cols == EXPORT_COLUMNS => {}
            _ => return Err(err(2, "missing column header".into())),
        }

        let mut sub = TaskSubgraph {
            task_entities: vec![Vec::new(); tasks],
            ..Default::default()
        };
        let mut current: Option<ClassAssignment> = None;
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(err(line_no, format!("expected 4 fields, found {}", fields.len())));
            }
            let task: usize = fields[0]
                .parse()
                .map_err(|_| err(line_no, format!("bad task index `{}`", fields[0])))?;
            if task >= tasks {
                return Err(err(line_no, format!("task {task} exceeds header count {tasks}")));
            }
            let class = graph
                .entity_exact(fields[1])
                .ok_or_else(|| err(line_no, format!("unknown class `{}`", fields[1])))?;

            let same = current.as_ref().is_some_and(|c| c.class == class && c.task_index == task);
            if !same {
                if let Some(done) = current.take() {
                    sub.insert_checked(done, line_no)?;
                }
                current = Some(ClassAssignment { class, task_index: task, paths: Vec::new() });
            }
            if fields[2].is_empty() && fields[3].is_empty() {
                continue;
            }
            let (first, second) = resolve_relation_label(graph, fields[2])
                .ok_or_else(|| err(line_no, format!("unknown relation `{}`", fields[2])))?;
            let tail = graph
                .entity_exact(fields[3])
                .ok_or_else(|| err(line_no, format!("unknown tail `{}`", fields[3])))?;
            let path = RelationPath { first, second, tail };
            current.as_mut().expect("set above").paths.push(path);
        }
        if let Some(done) = current.take() {
            sub.insert_checked(done, 0)?;
        }
        Ok(sub)
    }

    fn insert_checked(&mut self, a: ClassAssignment, line: usize) -> Result<(), TaskGraphError> {
        if self.class_index.contains_key(&a.class) {
            return Err(TaskGraphError::Import { line, reason: "class appears twice".into() });
        }
        if let Some(last) = self.assignments.last() {
            if a.task_index < last.task_index {
                return Err(TaskGraphError::Import { line, reason: "task indexes out of order".into() });
            }
        }
        let mut local = HashSet::new();
        for p in &a.paths {
            if self.is_used(p) || !local.insert(*p) {
                return Err(TaskGraphError::Import { line, reason: "relation path assigned twice".into() });
            }
        }
        self.insert(a);
        Ok(())
    }
}

fn parse_header(line: &str) -> Option<usize> {
    let rest = line.strip_prefix("# kgcil-subgraph ")?;
    let mut tasks = None;
    for field in rest.split_whitespace() {
        let (k, v) = field.split_once('=')?;
        match k {
            "format" if v != EXPORT_FORMAT.to_string() => return None,
            "tasks" => tasks = v.parse().ok(),
            _ => {}
        }
    }
    tasks
}
