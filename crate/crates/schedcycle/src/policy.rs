//! Deterministic memoryless schedulers.
//!
//! Every policy here maps a scheduling state to exactly one decision, with
//! no dependence on wall-clock time or on history beyond the state itself.
//! That property is what makes schedule cycles meaningful: once a state
//! recurs, the whole future recurs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{step, SystemState};
use crate::task::{TaskId, TaskSystem, Tick};

/// How a fixed task-level priority order is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityRule {
    /// Use the explicit `priority` field of each task (lower value wins).
    Explicit,
    /// Shorter period wins.
    RateMonotonic,
    /// Shorter relative deadline wins.
    DeadlineMonotonic,
}

/// A scheduling policy.
#[derive(Debug, Clone)]
pub enum SchedulerSpec {
    /// Fixed task-level priorities; ties break toward the lower task id.
    FixedTaskPriority { rule: PriorityRule },
    /// Earliest absolute deadline of the pending head jobs first.
    GlobalEdf,
    /// Largest remaining processing time of the head jobs first.
    Lrptf,
    /// Explicit state-to-decision table, with an optional policy for states
    /// the table does not cover. An uncovered state without fallback idles.
    TableDriven {
        table: DecisionTable,
        fallback: Option<Box<SchedulerSpec>>,
    },
}

impl fmt::Display for SchedulerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchedulerSpec::FixedTaskPriority { rule } => match rule {
                PriorityRule::Explicit => write!(f, "fpp:explicit"),
                PriorityRule::RateMonotonic => write!(f, "fpp:rm"),
                PriorityRule::DeadlineMonotonic => write!(f, "fpp:dm"),
            },
            SchedulerSpec::GlobalEdf => write!(f, "edf"),
            SchedulerSpec::Lrptf => write!(f, "lrptf"),
            SchedulerSpec::TableDriven { .. } => write!(f, "table"),
        }
    }
}

/// Ticks until the head job's absolute deadline, counted from now. Negative
/// once the deadline has passed. Derived purely from the state: with `q`
/// pending jobs the head was released `phase + (q-1)*period` ticks ago.
fn head_deadline_distance(system: &TaskSystem, state: &SystemState, i: usize) -> i128 {
    let task = &system.tasks[i];
    let q = state.remaining[i].div_ceil(task.wcet) as i128;
    let phase = match state.clocks[i] {
        crate::sim::TaskClock::Released(phase) => phase as i128,
        crate::sim::TaskClock::Unreleased { .. } => unreachable!("pending job implies a release"),
    };
    task.deadline as i128 - phase - (q - 1) * task.period as i128
}

/// Remaining service of the head job.
fn head_remaining(system: &TaskSystem, state: &SystemState, i: usize) -> Tick {
    let wcet = system.tasks[i].wcet;
    (state.remaining[i] - 1) % wcet + 1
}

impl SchedulerSpec {
    /// Checks that the policy can rank every task of the system.
    pub fn validate_for(&self, system: &TaskSystem) -> Result<()> {
        match self {
            SchedulerSpec::FixedTaskPriority {
                rule: PriorityRule::Explicit,
            } => {
                let missing: Vec<TaskId> = system
                    .tasks
                    .iter()
                    .filter(|t| t.priority.is_none())
                    .map(|t| t.id)
                    .collect();
                if missing.is_empty() {
                    Ok(())
                } else {
                    Err(Error::SchedulerConfig(format!(
                        "explicit priorities requested but tasks {missing:?} have none"
                    )))
                }
            }
            SchedulerSpec::TableDriven {
                fallback: Some(inner),
                ..
            } => inner.validate_for(system),
            _ => Ok(()),
        }
    }

    /// Picks the decision for `state`: eligible head jobs sorted by the
    /// policy's preference, seated greedily up to the processor count,
    /// skipping candidates that collide with a mutual exclusion. Started
    /// non-preemptive jobs are seated before anything else.
    pub fn decide(&self, system: &TaskSystem, state: &SystemState) -> Result<Vec<TaskId>> {
        if let SchedulerSpec::TableDriven { table, fallback } = self {
            if let Some(decision) = table.entries.get(&state.canonical_key()) {
                return Ok(decision.clone());
            }
            return match fallback {
                Some(inner) => inner.decide(system, state),
                None => Ok(Vec::new()),
            };
        }

        let mut ranked = state.eligible_indices(system);
        let rank_key = |i: usize| -> Result<(i128, i128, TaskId)> {
            let task = &system.tasks[i];
            let key = match self {
                SchedulerSpec::FixedTaskPriority { rule } => match rule {
                    PriorityRule::Explicit => match task.priority {
                        Some(p) => (p as i128, 0),
                        None => {
                            return Err(Error::SchedulerConfig(format!(
                                "task {} has no explicit priority",
                                task.id
                            )))
                        }
                    },
                    PriorityRule::RateMonotonic => (task.period as i128, 0),
                    PriorityRule::DeadlineMonotonic => (task.deadline as i128, 0),
                },
                SchedulerSpec::GlobalEdf => (head_deadline_distance(system, state, i), 0),
                SchedulerSpec::Lrptf => (-(head_remaining(system, state, i) as i128), 0),
                SchedulerSpec::TableDriven { .. } => unreachable!(),
            };
            Ok((key.0, key.1, task.id))
        };
        let mut keys = Vec::with_capacity(ranked.len());
        for &i in &ranked {
            keys.push((rank_key(i)?, i));
        }
        keys.sort();
        ranked = keys.into_iter().map(|(_, i)| i).collect();

        let capacity = system.processors as usize;
        let mut seated: Vec<usize> = state.obligated_indices(system);
        if seated.len() > capacity {
            return Err(Error::InvariantViolated(format!(
                "{} started non-preemptive jobs exceed {} processors",
                seated.len(),
                capacity
            )));
        }
        for i in ranked {
            if seated.len() == capacity {
                break;
            }
            if seated.contains(&i) {
                continue;
            }
            let id = system.tasks[i].id;
            let conflicts = system.constraints.iter().any(|c| match c {
                crate::task::Constraint::Excludes { a, b } => {
                    let other = if *a == id {
                        Some(*b)
                    } else if *b == id {
                        Some(*a)
                    } else {
                        None
                    };
                    other.is_some_and(|o| seated.iter().any(|&s| system.tasks[s].id == o))
                }
                _ => false,
            });
            if !conflicts {
                seated.push(i);
            }
        }
        let mut decision: Vec<TaskId> = seated.into_iter().map(|i| system.tasks[i].id).collect();
        decision.sort_unstable();
        Ok(decision)
    }
}

/// Parses the command-line form of a scheduler:
/// `edf`, `lrptf`, `fpp:rm`, `fpp:dm`, `fpp:explicit`, or `table:<file>`.
pub fn parse_scheduler(spec: &str) -> Result<SchedulerSpec> {
    match spec {
        "edf" => Ok(SchedulerSpec::GlobalEdf),
        "lrptf" => Ok(SchedulerSpec::Lrptf),
        "fpp:rm" => Ok(SchedulerSpec::FixedTaskPriority {
            rule: PriorityRule::RateMonotonic,
        }),
        "fpp:dm" => Ok(SchedulerSpec::FixedTaskPriority {
            rule: PriorityRule::DeadlineMonotonic,
        }),
        "fpp:explicit" => Ok(SchedulerSpec::FixedTaskPriority {
            rule: PriorityRule::Explicit,
        }),
        other => match other.strip_prefix("table:") {
            Some(path) => load_table(Path::new(path)),
            None => Err(Error::SchedulerConfig(format!(
                "unknown scheduler '{other}' (expected edf, lrptf, fpp:rm, fpp:dm, \
                 fpp:explicit, or table:<file>)"
            ))),
        },
    }
}

/// State-keyed decision table. Keys are canonical state encodings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecisionTable {
    pub entries: BTreeMap<Vec<u8>, Vec<TaskId>>,
}

/// On-disk form of a decision table: hex-encoded state keys, and an optional
/// fallback scheduler in command-line syntax.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fallback: Option<String>,
    entries: BTreeMap<String, Vec<TaskId>>,
}

fn hex_encode(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hex_decode(s: &str) -> Result<Vec<u8>> {
    if !s.len().is_multiple_of(2) || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::input(format!("malformed state key '{s}'")));
    }
    Ok((0..s.len() / 2)
        .map(|i| u8::from_str_radix(&s[2 * i..2 * i + 2], 16).unwrap())
        .collect())
}

impl DecisionTable {
    pub fn insert(&mut self, key: Vec<u8>, decision: Vec<TaskId>) {
        self.entries.insert(key, decision);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Loads a table-driven scheduler from its JSON file.
pub fn load_table(path: &Path) -> Result<SchedulerSpec> {
    let text = std::fs::read_to_string(path)?;
    let file: TableFile = serde_json::from_str(&text)
        .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    if file.schema != 1 {
        return Err(Error::input(format!(
            "unsupported decision table schema {}",
            file.schema
        )));
    }
    let mut table = DecisionTable::default();
    for (key, decision) in file.entries {
        table.insert(hex_decode(&key)?, decision);
    }
    let fallback = match file.fallback {
        Some(spec) => Some(Box::new(parse_scheduler(&spec)?)),
        None => None,
    };
    Ok(SchedulerSpec::TableDriven { table, fallback })
}

/// Saves a table-driven scheduler as JSON.
pub fn save_table(
    table: &DecisionTable,
    fallback: Option<&SchedulerSpec>,
    path: &Path,
) -> Result<()> {
    let file = TableFile {
        schema: 1,
        fallback: fallback.map(|f| f.to_string()),
        entries: table
            .entries
            .iter()
            .map(|(k, v)| (hex_encode(k), v.clone()))
            .collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Builds a decision table that replays `decisions` from the initial state.
/// The sequence must be self-consistent: if a state recurs, its decision
/// must recur with it, otherwise no memoryless scheduler can produce the
/// sequence and the conflicting ticks are reported.
pub fn make_adversary_table(
    system: &TaskSystem,
    decisions: &[Vec<TaskId>],
) -> Result<DecisionTable> {
    system.ensure_valid()?;
    let mut table = DecisionTable::default();
    let mut first_seen: BTreeMap<Vec<u8>, Tick> = BTreeMap::new();
    let mut state = SystemState::initial(system);
    for (t, decision) in decisions.iter().enumerate() {
        let t = t as Tick;
        let key = state.canonical_key();
        match table.entries.get(&key) {
            Some(existing) if existing != decision => {
                return Err(Error::ConflictingDecision {
                    first_tick: first_seen[&key],
                    second_tick: t,
                    first: existing.clone(),
                    second: decision.clone(),
                });
            }
            Some(_) => {}
            None => {
                first_seen.insert(key.clone(), t);
                table.insert(key, decision.clone());
            }
        }
        state = step(system, &state, decision, t)?.0;
    }
    Ok(table)
}
