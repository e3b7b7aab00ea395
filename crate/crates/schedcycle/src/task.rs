//! Periodic task systems on identical multiprocessors.
//!
//! A task releases a job every `period` ticks starting at `offset`; each job
//! needs `wcet` ticks of service and must finish within `deadline` ticks of
//! its release. Deadlines are unconstrained: they may exceed the period, in
//! which case several jobs of one task can be pending at once. Pending jobs
//! of a task are served in release (FIFO) order and a task never runs on two
//! processors in the same tick.

use num::{BigInt, BigRational};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete time. All releases, deadlines, and scheduling decisions happen at
/// integer ticks; execution occupies unit intervals `[t, t+1)`.
pub type Tick = u64;

/// Task identifier. Ids are unique and contiguous starting at 1, so `id - 1`
/// indexes the task list of a validated system.
pub type TaskId = u32;

/// One periodic task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub id: TaskId,
    /// Release time of the first job.
    pub offset: Tick,
    /// Service demand of every job, in ticks.
    pub wcet: Tick,
    /// Distance between consecutive releases.
    pub period: Tick,
    /// Relative deadline of every job, counted from its release.
    pub deadline: Tick,
    /// Explicit priority for fixed-task-priority scheduling; smaller wins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<i64>,
}

impl Task {
    /// Release instant of job `index` (the first job has index 0).
    pub fn release(&self, index: u64) -> Tick {
        self.offset + index * self.period
    }

    /// Absolute deadline of job `index`.
    pub fn absolute_deadline(&self, index: u64) -> Tick {
        self.release(index) + self.deadline
    }

    /// Exact utilization `wcet / period`.
    pub fn utilization(&self) -> BigRational {
        BigRational::new(BigInt::from(self.wcet), BigInt::from(self.period))
    }
}

/// One job of a task. `index` counts releases from 0, so the release instant
/// is `offset + index * period`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JobId {
    pub task: TaskId,
    pub index: u64,
}

impl JobId {
    pub fn new(task: TaskId, index: u64) -> Self {
        JobId { task, index }
    }
}

impl std::fmt::Display for JobId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "task {} job {}", self.task, self.index)
    }
}

/// Structural constraints between tasks.
///
/// All four forms are defined in terms of job indices, service progress, and
/// co-scheduling only, never in terms of absolute time, so shifting every
/// offset leaves their meaning unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    /// Job `k` of `producer` must complete before job `k` of `consumer`
    /// starts, for every `k`. Both tasks must share one period, or the
    /// pairing drifts apart without bound.
    Precedes { producer: TaskId, consumer: TaskId },
    /// `a` and `b` never execute in the same tick.
    Excludes { a: TaskId, b: TaskId },
    /// Each job of `task` becomes ineligible for `delay` ticks once it has
    /// received `after` ticks of service (`after < wcet`).
    Suspends { task: TaskId, after: Tick, delay: Tick },
    /// Jobs of `task` run to completion once started: a started job must be
    /// scheduled every tick until it finishes, unless a suspension blocks it.
    NonPreemptive { task: TaskId },
}

impl Constraint {
    /// Task ids the constraint mentions.
    pub fn references(&self) -> Vec<TaskId> {
        match *self {
            Constraint::Precedes { producer, consumer } => vec![producer, consumer],
            Constraint::Excludes { a, b } => vec![a, b],
            Constraint::Suspends { task, .. } | Constraint::NonPreemptive { task } => vec![task],
        }
    }
}

/// Severity of a validation finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    /// The system is structurally unusable; simulation and bounds refuse it.
    Error,
    /// Suspicious but simulable (for example utilization above the processor
    /// count, which merely guarantees deadline misses).
    Warning,
}

/// One validation finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            message: message.into(),
        }
    }

    fn warning(message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            message: message.into(),
        }
    }

    pub(crate) fn join(diags: &[Diagnostic]) -> String {
        diags
            .iter()
            .map(|d| d.message.as_str())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// A periodic task system on `processors` identical processors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSystem {
    pub processors: u32,
    pub tasks: Vec<Task>,
    pub constraints: Vec<Constraint>,
}

impl TaskSystem {
    /// Builds a system, ordering tasks by id.
    pub fn new(processors: u32, mut tasks: Vec<Task>, constraints: Vec<Constraint>) -> Self {
        tasks.sort_by_key(|t| t.id);
        TaskSystem {
            processors,
            tasks,
            constraints,
        }
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    /// The task with the given id, if present.
    pub fn task(&self, id: TaskId) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Position of `id` in the task list of a validated system.
    pub(crate) fn index_of(&self, id: TaskId) -> usize {
        (id - 1) as usize
    }

    /// Least common multiple of all periods. The hyperperiod of an empty
    /// system is 1, the neutral element of lcm.
    pub fn hyperperiod(&self) -> Result<Tick> {
        let mut h: Tick = 1;
        for task in &self.tasks {
            h = checked_lcm(h, task.period)?;
        }
        Ok(h)
    }

    /// Exact total utilization, the sum of `wcet / period` over all tasks.
    pub fn utilization(&self) -> BigRational {
        self.tasks
            .iter()
            .map(Task::utilization)
            .fold(BigRational::from_integer(BigInt::from(0)), |acc, u| acc + u)
    }

    /// Largest offset (0 for an empty system).
    pub fn max_offset(&self) -> Tick {
        self.tasks.iter().map(|t| t.offset).max().unwrap_or(0)
    }

    /// The synchronous counterpart: every offset is dropped to 0 and every
    /// relative deadline grows by the dropped offset, so each job keeps its
    /// absolute deadline while releasing no later than before. Any schedule
    /// that meets all deadlines of the original system also meets all
    /// deadlines of the counterpart when replayed tick for tick.
    pub fn synchronize(&self) -> TaskSystem {
        let tasks = self
            .tasks
            .iter()
            .map(|t| Task {
                id: t.id,
                offset: 0,
                wcet: t.wcet,
                period: t.period,
                deadline: t.deadline + t.offset,
                priority: t.priority,
            })
            .collect();
        TaskSystem {
            processors: self.processors,
            tasks,
            constraints: self.constraints.clone(),
        }
    }

    /// Structural validation. Errors make the system unusable; warnings flag
    /// systems that are simulable but cannot meet all deadlines.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();

        if self.processors == 0 {
            diags.push(Diagnostic::error("processor count must be at least 1"));
        }

        for (pos, task) in self.tasks.iter().enumerate() {
            let expected = (pos + 1) as TaskId;
            if task.id != expected {
                diags.push(Diagnostic::error(format!(
                    "task ids must be contiguous from 1 in order; position {} has id {}",
                    pos + 1,
                    task.id
                )));
            }
            if task.wcet == 0 {
                diags.push(Diagnostic::error(format!("task {}: wcet must be positive", task.id)));
            }
            if task.period == 0 {
                diags.push(Diagnostic::error(format!(
                    "task {}: period must be positive",
                    task.id
                )));
            }
            if task.deadline == 0 {
                diags.push(Diagnostic::error(format!(
                    "task {}: deadline must be positive",
                    task.id
                )));
            }
            if task.deadline > 0 && task.wcet > task.deadline {
                diags.push(Diagnostic::warning(format!(
                    "task {}: wcet {} exceeds deadline {}; every job misses",
                    task.id, task.wcet, task.deadline
                )));
            }
        }

        let known = |id: TaskId| self.tasks.iter().any(|t| t.id == id);
        let mut suspended: Vec<TaskId> = Vec::new();
        for (pos, constraint) in self.constraints.iter().enumerate() {
            for id in constraint.references() {
                if !known(id) {
                    diags.push(Diagnostic::error(format!(
                        "constraint {}: unknown task id {}",
                        pos + 1,
                        id
                    )));
                }
            }
            match *constraint {
                Constraint::Precedes { producer, consumer } if producer == consumer => {
                    diags.push(Diagnostic::error(format!(
                        "constraint {}: a task cannot precede itself",
                        pos + 1
                    )));
                }
                // Job-to-job precedence pairs the k-th jobs of both tasks,
                // which drift apart forever under different rates: the
                // completion lag grows without bound and no schedule, even a
                // feasible one, can ever revisit a state.
                Constraint::Precedes { producer, consumer } => {
                    if let (Some(p), Some(c)) = (self.task(producer), self.task(consumer)) {
                        if p.period != c.period {
                            diags.push(Diagnostic::error(format!(
                                "constraint {}: precedence requires equal periods, but \
                                 task {} has period {} and task {} has period {}",
                                pos + 1,
                                producer,
                                p.period,
                                consumer,
                                c.period
                            )));
                        }
                    }
                }
                Constraint::Excludes { a, b } if a == b => {
                    diags.push(Diagnostic::error(format!(
                        "constraint {}: a task cannot exclude itself",
                        pos + 1
                    )));
                }
                Constraint::Suspends { task, after, .. } => {
                    if let Some(t) = self.task(task) {
                        if after >= t.wcet {
                            diags.push(Diagnostic::error(format!(
                                "constraint {}: suspension point {} not below wcet {} of task {}",
                                pos + 1,
                                after,
                                t.wcet,
                                task
                            )));
                        }
                    }
                    if suspended.contains(&task) {
                        diags.push(Diagnostic::error(format!(
                            "constraint {}: task {} already has a suspension",
                            pos + 1,
                            task
                        )));
                    }
                    suspended.push(task);
                }
                _ => {}
            }
        }

        let explicit: Vec<i64> = self.tasks.iter().filter_map(|t| t.priority).collect();
        if !explicit.is_empty() {
            let mut sorted = explicit.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != explicit.len() {
                diags.push(Diagnostic::warning(
                    "explicit priorities are not unique; fixed-priority scheduling will refuse them",
                ));
            }
        }

        if !self.tasks.is_empty() && self.tasks.iter().all(|t| t.period > 0) {
            let m = BigRational::from_integer(BigInt::from(self.processors));
            if self.utilization() > m {
                diags.push(Diagnostic::warning(format!(
                    "utilization {} exceeds the {} available processors; deadline misses are certain",
                    self.utilization(),
                    self.processors
                )));
            }
        }

        diags
    }

    /// Fails with [`Error::InvalidSystem`] if validation finds any error.
    pub fn ensure_valid(&self) -> Result<()> {
        let errors: Vec<Diagnostic> = self
            .validate()
            .into_iter()
            .filter(|d| d.severity == Severity::Error)
            .collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSystem(errors))
        }
    }
}

/// Checked least common multiple.
pub(crate) fn checked_lcm(a: Tick, b: Tick) -> Result<Tick> {
    if a == 0 || b == 0 {
        return Ok(0);
    }
    let g = num::integer::gcd(a, b);
    (a / g)
        .checked_mul(b)
        .ok_or_else(|| Error::overflow(format!("lcm({a}, {b})")))
}

/// Ceiling of `a / b` for positive `b`, exact for negative `a` as well
/// (`ceil(-1 / 8) = 0`).
pub(crate) fn ceil_div(a: i128, b: i128) -> i128 {
    debug_assert!(b > 0);
    let q = a.div_euclid(b);
    if a.rem_euclid(b) != 0 {
        q + 1
    } else {
        q
    }
}
