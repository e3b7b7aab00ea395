//! Tick-level schedule state machine.
//!
//! Time advances in unit ticks. At tick `t` the state already reflects every
//! release up to and including `t`; a scheduler picks at most one pending job
//! per task and at most `processors` jobs in total, execution occupies
//! `[t, t+1)`, and the successor state reflects the releases at `t+1`. The
//! per-task backlog is served in release order, so a state never needs more
//! than one remaining-work number per task.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{Constraint, JobId, TaskId, TaskSystem, Tick};

/// Local clock of one task.
///
/// A task whose first release is at most one period away is represented as
/// `Released(period - wait)` with an empty backlog: from that point on its
/// releases fall exactly where the wrapping phase puts them, so the state is
/// observationally identical to a released task that happens to be idle.
/// Collapsing the two is what lets recurrence detection see through the
/// initial offsets. `Unreleased` is only needed while the wait still exceeds
/// one period, where no phase value can express it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskClock {
    /// The first release is still `countdown > period` ticks away.
    Unreleased { countdown: Tick },
    /// Ticks elapsed since the latest (possibly virtual) release, in
    /// `[0, period)`.
    Released(Tick),
}

/// Runtime fact attached to one structural constraint, stored parallel to
/// [`TaskSystem::constraints`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintRuntime {
    /// For a precedence: completed producer jobs minus completed consumer
    /// jobs. The consumer's head job may start only while this is positive.
    Lag(u64),
    /// For a suspension: ticks of blocking left, and whether the head job's
    /// suspension has already been triggered.
    Suspension { timer: Tick, served: bool },
    /// Constraints that need no runtime state.
    Stateless,
}

/// Complete scheduling state at one tick: released unfinished work and local
/// clock per task, plus constraint runtime facts. For independent preemptive
/// systems `constraint_state` carries no information and the state reduces to
/// the backlog/clock tuple. `running` records the previous tick's decision
/// for continuity bookkeeping; it is derived information and never part of
/// state identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemState {
    pub remaining: Vec<Tick>,
    pub clocks: Vec<TaskClock>,
    pub constraint_state: Vec<ConstraintRuntime>,
    pub running: Vec<TaskId>,
}

/// Remaining work of the head (oldest pending) job, given the task backlog.
/// All jobs of a task demand `wcet`, so the backlog decomposes uniquely.
fn head_remaining(backlog: Tick, wcet: Tick) -> Tick {
    debug_assert!(backlog > 0);
    (backlog - 1) % wcet + 1
}

impl SystemState {
    /// State at tick 0: synchronous tasks have released their first job;
    /// offset tasks wait with an empty backlog, as a wrapped phase when the
    /// offset fits in one period and as an explicit countdown otherwise.
    pub fn initial(system: &TaskSystem) -> SystemState {
        let mut state = SystemState {
            remaining: Vec::with_capacity(system.tasks.len()),
            clocks: Vec::with_capacity(system.tasks.len()),
            constraint_state: system
                .constraints
                .iter()
                .map(|c| match c {
                    Constraint::Precedes { .. } => ConstraintRuntime::Lag(0),
                    Constraint::Suspends { .. } => ConstraintRuntime::Suspension {
                        timer: 0,
                        served: false,
                    },
                    _ => ConstraintRuntime::Stateless,
                })
                .collect(),
            running: Vec::new(),
        };
        for task in &system.tasks {
            if task.offset == 0 {
                state.remaining.push(task.wcet);
                state.clocks.push(TaskClock::Released(0));
            } else if task.offset <= task.period {
                state.remaining.push(0);
                state.clocks.push(TaskClock::Released(task.period - task.offset));
            } else {
                state.remaining.push(0);
                state.clocks.push(TaskClock::Unreleased {
                    countdown: task.offset,
                });
            }
        }
        trigger_due_suspensions(system, &mut state);
        state
    }

    /// Backlog per task just before the releases of the current tick: tasks
    /// whose clock sits on a release instant have one `wcet` peeled off. A
    /// phase of 0 with a backlog below one `wcet` marks a first release that
    /// is still a full period away, not an actual release.
    pub fn pre_state(&self, system: &TaskSystem) -> Vec<Tick> {
        self.remaining
            .iter()
            .zip(&self.clocks)
            .zip(&system.tasks)
            .map(|((&rem, clock), task)| match clock {
                TaskClock::Released(0) if rem >= task.wcet => rem - task.wcet,
                _ => rem,
            })
            .collect()
    }

    /// Byte encoding of state identity: backlog, clocks, and constraint
    /// runtime. The derived `running` record is excluded. For one fixed
    /// system the encoding is injective, so two states evolve identically
    /// under a memoryless scheduler iff their keys are equal.
    pub fn canonical_key(&self) -> Vec<u8> {
        let mut key =
            Vec::with_capacity(self.remaining.len() * 17 + self.constraint_state.len() * 10);
        for (&rem, clock) in self.remaining.iter().zip(&self.clocks) {
            key.extend_from_slice(&rem.to_le_bytes());
            match clock {
                TaskClock::Unreleased { countdown } => {
                    key.push(0);
                    key.extend_from_slice(&countdown.to_le_bytes());
                }
                TaskClock::Released(phase) => {
                    key.push(1);
                    key.extend_from_slice(&phase.to_le_bytes());
                }
            }
        }
        self.append_constraint_key(&mut key);
        key
    }

    /// The constraint-runtime portion of the canonical key.
    pub(crate) fn append_constraint_key(&self, key: &mut Vec<u8>) {
        for rt in &self.constraint_state {
            match rt {
                ConstraintRuntime::Lag(lag) => {
                    key.push(0);
                    key.extend_from_slice(&lag.to_le_bytes());
                }
                ConstraintRuntime::Suspension { timer, served } => {
                    key.push(1);
                    key.extend_from_slice(&timer.to_le_bytes());
                    key.push(u8::from(*served));
                }
                ConstraintRuntime::Stateless => key.push(2),
            }
        }
    }

    /// Service already received by the head job of task index `i`, when a
    /// job is pending.
    pub(crate) fn head_progress(&self, system: &TaskSystem, i: usize) -> Option<Tick> {
        let backlog = self.remaining[i];
        if backlog == 0 {
            return None;
        }
        let wcet = system.tasks[i].wcet;
        Some(wcet - head_remaining(backlog, wcet))
    }

    /// True when the head job of task index `i` has started but not finished.
    fn head_started(&self, system: &TaskSystem, i: usize) -> bool {
        matches!(self.head_progress(system, i), Some(p) if p > 0)
    }

    /// True when some suspension currently blocks task index `i`.
    fn suspended(&self, system: &TaskSystem, i: usize) -> bool {
        let id = system.tasks[i].id;
        system
            .constraints
            .iter()
            .zip(&self.constraint_state)
            .any(|(c, rt)| {
                matches!(c, Constraint::Suspends { task, .. } if *task == id)
                    && matches!(rt, ConstraintRuntime::Suspension { timer, .. } if *timer > 0)
            })
    }

    /// True when every precedence feeding task index `i` has a completed
    /// producer job for the consumer's head job.
    fn precedence_ready(&self, system: &TaskSystem, i: usize) -> bool {
        let id = system.tasks[i].id;
        system
            .constraints
            .iter()
            .zip(&self.constraint_state)
            .all(|(c, rt)| match (c, rt) {
                (Constraint::Precedes { consumer, .. }, ConstraintRuntime::Lag(lag)) => {
                    *consumer != id || *lag >= 1
                }
                _ => true,
            })
    }

    /// Task indices whose head job may be picked this tick: a job is pending,
    /// no suspension blocks it, and no precedence starves it.
    pub fn eligible_indices(&self, system: &TaskSystem) -> Vec<usize> {
        (0..system.tasks.len())
            .filter(|&i| {
                self.remaining[i] > 0
                    && !self.suspended(system, i)
                    && self.precedence_ready(system, i)
            })
            .collect()
    }

    /// Task indices whose started non-preemptive head job must be scheduled
    /// this tick (started, unfinished, and not blocked by a suspension).
    pub fn obligated_indices(&self, system: &TaskSystem) -> Vec<usize> {
        system
            .constraints
            .iter()
            .filter_map(|c| match c {
                Constraint::NonPreemptive { task } => Some(system.index_of(*task)),
                _ => None,
            })
            .filter(|&i| self.head_started(system, i) && !self.suspended(system, i))
            .collect()
    }
}

/// Fires pending suspensions: a head job that has exactly `after` ticks of
/// service and has not been suspended yet starts its blocking window.
fn trigger_due_suspensions(system: &TaskSystem, state: &mut SystemState) {
    for (pos, constraint) in system.constraints.iter().enumerate() {
        let Constraint::Suspends { task, after, delay } = constraint else {
            continue;
        };
        let i = system.index_of(*task);
        let ConstraintRuntime::Suspension { timer, served } = &mut state.constraint_state[pos]
        else {
            continue;
        };
        if !*served && *timer == 0 && state.remaining[i] > 0 {
            let progress = system.tasks[i].wcet - head_remaining(state.remaining[i], system.tasks[i].wcet);
            if progress == *after {
                *timer = *delay;
                *served = true;
            }
        }
    }
}

/// What one tick produced, in terms of task list indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepEffects {
    /// Tasks whose head job completed during the tick.
    pub completed: Vec<usize>,
    /// Tasks that released a job at the new tick.
    pub released: Vec<usize>,
}

/// Validates `decision` (strictly increasing task ids) against `state` at
/// tick `t`. All scheduling rules live here: per-task pending jobs only, at
/// most one pick per task, capacity, suspensions, precedences, mutual
/// exclusion, and non-preemptive continuity.
pub fn validate_decision(
    system: &TaskSystem,
    state: &SystemState,
    decision: &[TaskId],
    t: Tick,
) -> Result<()> {
    let invalid = |rule: String| Error::InvalidDecision { tick: t, rule };

    if !decision.windows(2).all(|w| w[0] < w[1]) {
        return Err(invalid(format!(
            "decision {decision:?} must list distinct task ids in increasing order"
        )));
    }
    if decision.len() > system.processors as usize {
        return Err(invalid(format!(
            "decision selects {} jobs but only {} processors exist",
            decision.len(),
            system.processors
        )));
    }
    for &id in decision {
        if system.task(id).is_none() {
            return Err(invalid(format!("unknown task id {id}")));
        }
        let i = system.index_of(id);
        if state.remaining[i] == 0 {
            return Err(invalid(format!("task {id} has no pending job")));
        }
        if state.suspended(system, i) {
            return Err(invalid(format!("task {id} is suspended")));
        }
        if !state.precedence_ready(system, i) {
            return Err(invalid(format!(
                "task {id} waits for a producer job to complete"
            )));
        }
    }
    for constraint in &system.constraints {
        if let Constraint::Excludes { a, b } = constraint {
            if decision.contains(a) && decision.contains(b) {
                return Err(invalid(format!(
                    "tasks {a} and {b} exclude each other but are co-scheduled"
                )));
            }
        }
    }
    for i in state.obligated_indices(system) {
        let id = system.tasks[i].id;
        if !decision.contains(&id) {
            return Err(invalid(format!(
                "non-preemptive task {id} has a started job and must keep running"
            )));
        }
    }
    Ok(())
}

/// Executes one tick: runs `decision` on `[t, t+1)` and returns the state at
/// `t+1` (releases at `t+1` already applied) plus what completed/released.
///
/// The successor depends only on `state` and `decision`, never on `t`
/// itself; `t` is taken for error reporting.
pub fn step(
    system: &TaskSystem,
    state: &SystemState,
    decision: &[TaskId],
    t: Tick,
) -> Result<(SystemState, StepEffects)> {
    validate_decision(system, state, decision, t)?;

    let mut next = state.clone();
    let mut effects = StepEffects::default();

    // Suspension timers active during this tick run down at its end; the
    // trigger scan below only ever touches timers that are at zero, so a
    // freshly started window is not shortened.
    let ticking: Vec<usize> = next
        .constraint_state
        .iter()
        .enumerate()
        .filter_map(|(pos, rt)| match rt {
            ConstraintRuntime::Suspension { timer, .. } if *timer > 0 => Some(pos),
            _ => None,
        })
        .collect();

    for &id in decision {
        let i = system.index_of(id);
        let wcet = system.tasks[i].wcet;
        let finishes_job = head_remaining(next.remaining[i], wcet) == 1;
        next.remaining[i] -= 1;
        if finishes_job {
            effects.completed.push(i);
            // The next pending job, if any, has a fresh suspension budget.
            for (pos, constraint) in system.constraints.iter().enumerate() {
                if matches!(constraint, Constraint::Suspends { task, .. } if *task == id) {
                    if let ConstraintRuntime::Suspension { served, .. } =
                        &mut next.constraint_state[pos]
                    {
                        *served = false;
                    }
                }
            }
        }
    }

    // Precedence lags move with completions.
    for (pos, constraint) in system.constraints.iter().enumerate() {
        if let Constraint::Precedes { producer, consumer } = constraint {
            let ConstraintRuntime::Lag(lag) = &mut next.constraint_state[pos] else {
                continue;
            };
            if effects.completed.contains(&system.index_of(*producer)) {
                *lag += 1;
            }
            if effects.completed.contains(&system.index_of(*consumer)) {
                debug_assert!(*lag >= 1, "consumer completed without producer lead");
                *lag -= 1;
            }
        }
    }

    // Clocks advance; wrapping (or reaching the first release) adds one job.
    for (i, task) in system.tasks.iter().enumerate() {
        let released = match next.clocks[i] {
            TaskClock::Unreleased { countdown } => {
                // Invariant: countdown > period, so no release happens here;
                // the clock degrades to a wrapped phase once within a period.
                let wait = countdown - 1;
                next.clocks[i] = if wait <= task.period {
                    TaskClock::Released(task.period - wait)
                } else {
                    TaskClock::Unreleased { countdown: wait }
                };
                false
            }
            TaskClock::Released(phase) => {
                if phase + 1 == task.period {
                    next.clocks[i] = TaskClock::Released(0);
                    true
                } else {
                    next.clocks[i] = TaskClock::Released(phase + 1);
                    false
                }
            }
        };
        if released {
            next.remaining[i] += task.wcet;
            effects.released.push(i);
        }
    }

    for pos in ticking {
        if let ConstraintRuntime::Suspension { timer, .. } = &mut next.constraint_state[pos] {
            *timer -= 1;
        }
    }
    trigger_due_suspensions(system, &mut next);

    next.running = decision.to_vec();
    Ok((next, effects))
}

/// Pending head jobs eligible at tick `t`, with absolute job indices derived
/// from wall-clock arithmetic: `index = released(t) - pending`, where
/// `released(t)` counts release instants up to `t` and `pending` is the
/// backlog divided into jobs.
pub fn eligible_jobs(system: &TaskSystem, state: &SystemState, t: Tick) -> Vec<JobId> {
    state
        .eligible_indices(system)
        .into_iter()
        .map(|i| {
            let task = &system.tasks[i];
            let released = released_jobs(task.offset, task.period, t);
            let pending = state.remaining[i].div_ceil(task.wcet);
            debug_assert!(released >= pending as u128);
            JobId::new(task.id, (released - pending as u128) as u64)
        })
        .collect()
}

/// Number of jobs of a task released at instants `<= t`.
pub(crate) fn released_jobs(offset: Tick, period: Tick, t: Tick) -> u128 {
    if t < offset {
        0
    } else {
        (t as u128 - offset as u128) / period as u128 + 1
    }
}

/// What happened in one trace: the processor assignment per tick plus
/// release, completion, and miss events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleTrace {
    pub processors: u32,
    /// `rows[t][cpu]` is the task occupying the processor during `[t, t+1)`.
    /// Assignments are canonical: occupied cells first, ordered by task id.
    pub rows: Vec<Vec<Option<TaskId>>>,
    pub events: Vec<Event>,
    /// Number of simulated ticks; rows cover `[0, horizon)`.
    pub horizon: Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Release,
    Completion,
    Miss,
}

/// Something that happened to one job at one tick. Completion events carry
/// the instant service finished; miss events carry the passed deadline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub job: JobId,
    pub tick: Tick,
}

impl ScheduleTrace {
    pub fn first_miss(&self) -> Option<Event> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::Miss)
            .min_by_key(|e| (e.tick, e.job.task, e.job.index))
            .copied()
    }

    /// Idle processor-ticks in the window `[from, to)`.
    pub fn idle_slots(&self, from: Tick, to: Tick) -> u64 {
        self.rows[from as usize..to as usize]
            .iter()
            .map(|row| row.iter().filter(|cell| cell.is_none()).count() as u64)
            .sum()
    }
}

/// Step-by-step simulator: owns the current state, wall clock, job counters,
/// and the trace being recorded.
pub struct Simulator<'a> {
    pub system: &'a TaskSystem,
    pub state: SystemState,
    pub now: Tick,
    released: Vec<u64>,
    completed: Vec<u64>,
    trace: ScheduleTrace,
}

impl<'a> Simulator<'a> {
    pub fn new(system: &'a TaskSystem) -> Result<Self> {
        system.ensure_valid()?;
        let state = SystemState::initial(system);
        let mut trace = ScheduleTrace {
            processors: system.processors,
            rows: Vec::new(),
            events: Vec::new(),
            horizon: 0,
        };
        let mut released = vec![0u64; system.tasks.len()];
        for (i, task) in system.tasks.iter().enumerate() {
            if task.offset == 0 {
                released[i] = 1;
                trace.events.push(Event {
                    kind: EventKind::Release,
                    job: JobId::new(task.id, 0),
                    tick: 0,
                });
            }
        }
        Ok(Simulator {
            system,
            state,
            now: 0,
            released,
            completed: vec![0; system.tasks.len()],
            trace,
        })
    }

    /// Eligible head jobs right now, with absolute job indices.
    pub fn eligible(&self) -> Vec<JobId> {
        self.state
            .eligible_indices(self.system)
            .into_iter()
            .map(|i| JobId::new(self.system.tasks[i].id, self.completed[i]))
            .collect()
    }

    /// Head job of the task at list index `i`, if one is pending.
    pub fn head_job(&self, i: usize) -> Option<JobId> {
        if self.state.remaining[i] == 0 {
            None
        } else {
            Some(JobId::new(self.system.tasks[i].id, self.completed[i]))
        }
    }

    pub fn trace(&self) -> &ScheduleTrace {
        &self.trace
    }

    pub fn into_trace(self) -> ScheduleTrace {
        self.trace
    }

    /// Runs one tick with the given decision (strictly increasing task ids),
    /// recording the assignment row and all events, including misses of any
    /// job whose deadline passes at the new instant.
    pub fn advance(&mut self, decision: &[TaskId]) -> Result<()> {
        let (next, effects) = step(self.system, &self.state, decision, self.now)?;

        let mut row: Vec<Option<TaskId>> = decision.iter().copied().map(Some).collect();
        row.resize(self.system.processors as usize, None);
        self.trace.rows.push(row);

        let t_next = self.now + 1;
        for &i in &effects.completed {
            self.trace.events.push(Event {
                kind: EventKind::Completion,
                job: JobId::new(self.system.tasks[i].id, self.completed[i]),
                tick: t_next,
            });
            self.completed[i] += 1;
        }
        for &i in &effects.released {
            self.trace.events.push(Event {
                kind: EventKind::Release,
                job: JobId::new(self.system.tasks[i].id, self.released[i]),
                tick: t_next,
            });
            self.released[i] += 1;
        }

        // A job misses when its deadline instant arrives and it is not done.
        // Job j of a task has its deadline at offset + j*period + deadline;
        // at most one job per task can hit any single instant.
        for (i, task) in self.system.tasks.iter().enumerate() {
            let t128 = t_next as u128;
            let lead = task.offset as u128 + task.deadline as u128;
            if t128 < lead {
                continue;
            }
            let since = t128 - lead;
            if !since.is_multiple_of(task.period as u128) {
                continue;
            }
            let j = (since / task.period as u128) as u64;
            if self.completed[i] <= j {
                self.trace.events.push(Event {
                    kind: EventKind::Miss,
                    job: JobId::new(task.id, j),
                    tick: t_next,
                });
            }
        }

        self.state = next;
        self.now = t_next;
        self.trace.horizon = t_next;
        Ok(())
    }

    /// Convenience wrapper taking head jobs instead of task ids.
    pub fn advance_jobs(&mut self, decision: &[JobId]) -> Result<()> {
        for job in decision {
            let i = self.system.index_of(job.task);
            if self.completed.get(i).copied() != Some(job.index) {
                return Err(Error::InvalidDecision {
                    tick: self.now,
                    rule: format!("{job} is not the head job of its task"),
                });
            }
        }
        let mut ids: Vec<TaskId> = decision.iter().map(|j| j.task).collect();
        ids.sort_unstable();
        self.advance(&ids)
    }
}

/// Recomputes every deadline miss of a trace from its assignment rows alone
/// and returns them sorted by deadline instant. The trace's own events are
/// not consulted, which makes this an independent check of the simulator's
/// bookkeeping. Jobs whose deadline falls beyond the trace horizon are not
/// judged.
pub fn check_deadlines(system: &TaskSystem, trace: &ScheduleTrace) -> Result<Vec<Event>> {
    system.ensure_valid()?;
    let n = system.tasks.len();
    let mut service = vec![0u64; n];
    let mut completion_ticks: Vec<Vec<Tick>> = vec![Vec::new(); n];

    for (t, row) in trace.rows.iter().enumerate() {
        let mut seen = Vec::new();
        for cell in row.iter().flatten() {
            if seen.contains(cell) {
                return Err(Error::InconsistentTrace {
                    tick: t as Tick,
                    reason: format!("task {cell} occupies two processors"),
                });
            }
            seen.push(*cell);
            let Some(task) = system.task(*cell) else {
                return Err(Error::InconsistentTrace {
                    tick: t as Tick,
                    reason: format!("unknown task id {cell}"),
                });
            };
            let i = system.index_of(*cell);
            service[i] += 1;
            let released = released_jobs(task.offset, task.period, t as Tick);
            if service[i] as u128 > released * task.wcet as u128 {
                return Err(Error::InconsistentTrace {
                    tick: t as Tick,
                    reason: format!("task {cell} executes beyond its released work"),
                });
            }
            if service[i].is_multiple_of(task.wcet) {
                completion_ticks[i].push(t as Tick + 1);
            }
        }
    }

    let mut misses = Vec::new();
    for (i, task) in system.tasks.iter().enumerate() {
        for j in 0..released_jobs(task.offset, task.period, trace.horizon) {
            let deadline =
                task.offset as u128 + j * task.period as u128 + task.deadline as u128;
            if deadline > trace.horizon as u128 {
                break;
            }
            let done = completion_ticks[i]
                .get(j as usize)
                .map(|&e| e as u128 <= deadline)
                .unwrap_or(false);
            if !done {
                misses.push(Event {
                    kind: EventKind::Miss,
                    job: JobId::new(task.id, j as u64),
                    tick: deadline as Tick,
                });
            }
        }
    }
    misses.sort_by_key(|e| (e.tick, e.job.task, e.job.index));
    Ok(misses)
}
