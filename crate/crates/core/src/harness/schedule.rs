//! Task schedules: how an ordered class list is cut into sessions.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Split {
    /// All classes divided equally across `tasks` sessions.
    B0 { tasks: usize },
    /// A base session of `base_size` classes, the rest divided equally
    /// across `tasks` incremental sessions.
    BaseIncremental { base_size: usize, tasks: usize },
    /// A base session, then `way`-class sessions. `shot` is recorded only;
    /// allocation does not consume samples.
    FewShot {
        #[serde(default = "default_base")]
        base_size: usize,
        #[serde(default = "default_way")]
        way: usize,
        #[serde(default = "default_shot")]
        shot: usize,
    },
}

fn default_base() -> usize {
    60
}
fn default_way() -> usize {
    5
}
fn default_shot() -> usize {
    5
}

impl Split {
    pub fn few_shot() -> Self {
        Split::FewShot { base_size: default_base(), way: default_way(), shot: default_shot() }
    }

    pub fn describe(&self) -> String {
        match *self {
            Split::B0 { tasks } => format!("B0-{tasks} tasks"),
            Split::BaseIncremental { base_size, tasks } => format!("B{base_size}-{tasks} tasks"),
            Split::FewShot { base_size, way, shot } => format!("base {base_size}, {way}-way {shot}-shot"),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("schedule has no classes")]
    Empty,
    #[error("class `{0}` listed twice")]
    DuplicateClass(String),
    #[error("{0}")]
    Invalid(String),
}

/// Spread `n` items over `parts` groups, the first `n % parts` one larger.
fn equal_sizes(n: usize, parts: usize) -> Vec<usize> {
    let (q, r) = (n / parts, n % parts);
    (0..parts).map(|i| q + usize::from(i < r)).collect()
}

/// Session sizes for `n` classes under `split`.
pub fn session_sizes(split: &Split, n: usize) -> Result<Vec<usize>, ScheduleError> {
    let invalid = |m: String| Err(ScheduleError::Invalid(m));
    match *split {
        Split::B0 { tasks } => {
            if tasks == 0 || tasks > n {
                return invalid(format!("B0 needs 1..={n} tasks, got {tasks}"));
            }
            Ok(equal_sizes(n, tasks))
        }
        Split::BaseIncremental { base_size, tasks } => {
            if base_size == 0 || base_size >= n {
                return invalid(format!("base_size must be in 1..{n}, got {base_size}"));
            }
            if tasks == 0 || tasks > n - base_size {
                return invalid(format!("{tasks} incremental tasks cannot split {} classes", n - base_size));
            }
            let mut sizes = vec![base_size];
            sizes.extend(equal_sizes(n - base_size, tasks));
            Ok(sizes)
        }
        Split::FewShot { base_size, way, .. } => {
            if base_size == 0 || base_size >= n || way == 0 {
                return invalid(format!("few-shot needs 0 < base_size < {n} and way > 0"));
            }
            if (n - base_size) % way != 0 {
                return invalid(format!("{} incremental classes are not a multiple of way={way}", n - base_size));
            }
            let mut sizes = vec![base_size];
            sizes.extend(std::iter::repeat_n(way, (n - base_size) / way));
            Ok(sizes)
        }
    }
}

/// Cut an ordered class list into disjoint sessions.
pub fn split_sessions(ordered: &[String], split: &Split) -> Result<Vec<Vec<String>>, ScheduleError> {
    if ordered.is_empty() {
        return Err(ScheduleError::Empty);
    }
    let mut seen = HashSet::new();
    if let Some(dup) = ordered.iter().find(|c| !seen.insert(c.as_str())) {
        return Err(ScheduleError::DuplicateClass(dup.clone()));
    }
    let mut rest = ordered;
    let mut out = Vec::new();
    for size in session_sizes(split, ordered.len())? {
        let (head, tail) = rest.split_at(size);
        out.push(head.to_vec());
        rest = tail;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSchedule {
    pub classes: Vec<String>,
    pub split: Split,
    pub samples_per_class: usize,
}

pub const DEFAULT_SAMPLES_PER_CLASS: usize = 100;
