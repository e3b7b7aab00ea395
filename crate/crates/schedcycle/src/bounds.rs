//! Analytic simulation-interval bounds.
//!
//! Each bound gives a tick `B` such that simulating `[0, B)` is guaranteed to
//! expose the full behaviour of a deterministic state-based scheduler: by `B`
//! a feasible schedule has revisited a state, so everything after `B` repeats.
//! Bounds differ in how much they assume about the system:
//!
//!  - the *general product* bound `H * prod((O_i + D_i - T_i)_0 + 1)` applies
//!    to every system handled by this crate (asynchronous releases, deadlines
//!    beyond periods, any number of processors),
//!  - the *synchronous product* bound `H * prod((D_i - T_i)_0 + 1)` is the
//!    same quantity for systems whose offsets are all zero,
//!  - `sn`/`sn_hat` are fixed-task-priority bounds built from a priority
//!    ladder of first-release alignment points; `sn` additionally requires
//!    every deadline to fit within its period,
//!  - the classic `O_max + 2H` value is reported for reference only: it was
//!    derived for single-processor fixed-priority and deadline-driven
//!    scheduling and does not cover the general setting.
//!
//! `(a)_0` is shorthand for `max(a, 0)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{ceil_div, checked_lcm, TaskId, TaskSystem, Tick};

/// Outcome of a bound that is not defined for every system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundValue {
    Value(Tick),
    /// The bound's hypotheses do not hold; the reason says which one failed.
    NotApplicable(String),
}

impl BoundValue {
    pub fn value(&self) -> Option<Tick> {
        match *self {
            BoundValue::Value(v) => Some(v),
            BoundValue::NotApplicable(_) => None,
        }
    }

    pub fn reason(&self) -> Option<&str> {
        match self {
            BoundValue::Value(_) => None,
            BoundValue::NotApplicable(reason) => Some(reason),
        }
    }
}

fn checked_add(a: Tick, b: Tick, context: &str) -> Result<Tick> {
    a.checked_add(b)
        .ok_or_else(|| Error::overflow(context.to_string()))
}

fn checked_mul(a: Tick, b: Tick, context: &str) -> Result<Tick> {
    a.checked_mul(b)
        .ok_or_else(|| Error::overflow(context.to_string()))
}

/// `O_max + 2H`, the classic uniprocessor reference value.
pub fn leung_bound(system: &TaskSystem) -> Result<Tick> {
    let h = system.hyperperiod()?;
    let two_h = checked_mul(h, 2, "2 * hyperperiod")?;
    checked_add(system.max_offset(), two_h, "max offset + 2 * hyperperiod")
}

/// Checks that `priority` lists every task id exactly once, highest first.
fn check_priority_order(system: &TaskSystem, priority: &[TaskId]) -> Result<()> {
    let mut seen: Vec<TaskId> = priority.to_vec();
    seen.sort_unstable();
    let expected: Vec<TaskId> = system.tasks.iter().map(|t| t.id).collect();
    if seen != expected {
        return Err(Error::input(format!(
            "priority order {priority:?} is not a permutation of the task ids"
        )));
    }
    Ok(())
}

/// First release of the task at or after instant `from`, per its own grid.
fn first_release_at_or_after(offset: Tick, period: Tick, from: Tick) -> Result<Tick> {
    let k = ceil_div(from as i128 - offset as i128, period as i128);
    let k = k.max(0) as u64;
    let step = checked_mul(k, period, "release grid step")?;
    checked_add(offset, step, "release grid point")
}

/// Fixed-task-priority ladder value `S_n` for constrained deadlines.
///
/// `S_1` is the offset of the highest-priority task; each further `S_i` is
/// the first release of task `i` at or after `S_{i-1}`. The simulation
/// interval is `[0, S_n + H)`. Requires every deadline to be at most its
/// period; otherwise the value is reported as not applicable.
pub fn sn_bound(system: &TaskSystem, priority: &[TaskId]) -> Result<BoundValue> {
    check_priority_order(system, priority)?;
    if system.tasks.is_empty() {
        return Ok(BoundValue::NotApplicable("system has no tasks".into()));
    }
    if let Some(t) = system.tasks.iter().find(|t| t.deadline > t.period) {
        return Ok(BoundValue::NotApplicable(format!(
            "requires deadlines within periods, but task {} has deadline {} > period {}",
            t.id, t.deadline, t.period
        )));
    }
    let mut s: Tick = 0;
    for (rank, id) in priority.iter().enumerate() {
        let task = system.task(*id).expect("checked permutation");
        s = if rank == 0 {
            task.offset
        } else {
            first_release_at_or_after(task.offset, task.period, s)?
        };
    }
    Ok(BoundValue::Value(s))
}

/// Fixed-task-priority ladder value `S_hat_n` for arbitrary deadlines.
///
/// Builds on the same ladder as [`sn_bound`] but adds, at each rank, the
/// least common multiple of the periods of the ranks so far, giving room for
/// backlogs that outlive one period. The simulation interval is
/// `[0, S_hat_n + H]`.
pub fn sn_hat_bound(system: &TaskSystem, priority: &[TaskId]) -> Result<BoundValue> {
    check_priority_order(system, priority)?;
    if system.tasks.is_empty() {
        return Ok(BoundValue::NotApplicable("system has no tasks".into()));
    }
    let mut s: Tick = 0;
    let mut h_so_far: Tick = 1;
    for (rank, id) in priority.iter().enumerate() {
        let task = system.task(*id).expect("checked permutation");
        h_so_far = checked_lcm(h_so_far, task.period)?;
        s = if rank == 0 {
            task.offset
        } else {
            let aligned = first_release_at_or_after(task.offset, task.period, s)?;
            checked_add(aligned, h_so_far, "ladder value + period lcm")?
        };
    }
    Ok(BoundValue::Value(s))
}

/// Product of per-task backlog factors times the hyperperiod.
fn product_bound(system: &TaskSystem, spill: impl Fn(&crate::task::Task) -> i128) -> Result<Tick> {
    let h = system.hyperperiod()?;
    let mut bound = h;
    for task in &system.tasks {
        let factor = spill(task).max(0) as u64 + 1;
        bound = checked_mul(bound, factor, "product bound factor")?;
    }
    Ok(bound)
}

/// `H * prod((D_i - T_i)_0 + 1)` for synchronous systems (all offsets zero).
///
/// Each factor counts how many residues of unfinished work task `i` can carry
/// across a hyperperiod boundary in a feasible schedule; the product counts
/// the distinguishable boundary states, so some boundary state repeats within
/// that many hyperperiods. Reported as not applicable when any offset is
/// nonzero.
pub fn sync_product_bound(system: &TaskSystem) -> Result<BoundValue> {
    if let Some(t) = system.tasks.iter().find(|t| t.offset != 0) {
        return Ok(BoundValue::NotApplicable(format!(
            "requires a synchronous system, but task {} has offset {}",
            t.id, t.offset
        )));
    }
    product_bound(system, |t| t.deadline as i128 - t.period as i128).map(BoundValue::Value)
}

/// `H * prod((O_i + D_i - T_i)_0 + 1)`, the general simulation-interval
/// bound for asynchronous systems with arbitrary deadlines.
///
/// It is the synchronous product bound applied to [`TaskSystem::synchronize`],
/// whose deadlines are `D_i + O_i`: every feasible schedule of the original
/// system is also feasible for the synchronous counterpart, so a bound for
/// the counterpart covers the original.
pub fn general_product_bound(system: &TaskSystem) -> Result<Tick> {
    product_bound(system, |t| {
        t.offset as i128 + t.deadline as i128 - t.period as i128
    })
}

/// The minimum applicable interval end and where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BestBound {
    pub value: Tick,
    /// One of `general_product`, `sn`, `sn_hat`.
    pub source: String,
}

/// All interval bounds for one system, as reported by `schedcycle bounds`.
///
/// Interval ends are the first tick *not* needed: simulating `[0, end)`
/// suffices. Inapplicable bounds are `None` with the reason listed in
/// `applicability_notes`. The reference value `leung_end` never enters
/// `best`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub schema: u32,
    pub hyperperiod: Tick,
    pub max_offset: Tick,
    /// Exact utilization as a rational literal, e.g. `"7/4"`.
    pub utilization: String,
    pub leung_end: Tick,
    pub sn: Option<Tick>,
    pub sn_interval_end: Option<Tick>,
    pub sn_hat: Option<Tick>,
    pub sn_hat_interval_end: Option<Tick>,
    pub sync_product_end: Tick,
    pub general_product_end: Tick,
    pub best: BestBound,
    pub applicability_notes: Vec<String>,
}

pub const REPORT_SCHEMA: u32 = 1;

/// Computes every bound for `system`. The ladder bounds `sn`/`sn_hat` need a
/// total priority order (highest first) and are omitted without one.
pub fn bounds_report(system: &TaskSystem, priority: Option<&[TaskId]>) -> Result<BoundsReport> {
    system.ensure_valid()?;
    let h = system.hyperperiod()?;
    let mut notes = Vec::new();

    let leung_end = leung_bound(system)?;
    notes.push(
        "leung_end is reference only (single-processor fixed-priority and deadline-driven \
         derivation) and never selected as best"
            .to_string(),
    );

    let general_product_end = general_product_bound(system)?;

    let sync_product_end = match sync_product_bound(system)? {
        BoundValue::Value(v) => v,
        BoundValue::NotApplicable(_) => {
            notes.push(
                "sync_product_end is computed on the synchronized counterpart because offsets \
                 are nonzero"
                    .to_string(),
            );
            let sync = system.synchronize();
            match sync_product_bound(&sync)? {
                BoundValue::Value(v) => v,
                BoundValue::NotApplicable(reason) => {
                    return Err(Error::InvariantViolated(format!(
                        "synchronized system must admit the synchronous product bound: {reason}"
                    )))
                }
            }
        }
    };
    if sync_product_end != general_product_end {
        return Err(Error::InvariantViolated(format!(
            "product bounds must agree through synchronization \
             (sync {sync_product_end} vs general {general_product_end})"
        )));
    }

    let (mut sn, mut sn_interval_end) = (None, None);
    let (mut sn_hat, mut sn_hat_interval_end) = (None, None);
    match priority {
        None => notes.push("sn and sn_hat need a priority order; none was given".to_string()),
        Some(order) => {
            match sn_bound(system, order)? {
                BoundValue::Value(v) => {
                    sn = Some(v);
                    sn_interval_end = Some(checked_add(v, h, "sn + hyperperiod")?);
                }
                BoundValue::NotApplicable(reason) => notes.push(format!("sn: {reason}")),
            }
            match sn_hat_bound(system, order)? {
                BoundValue::Value(v) => {
                    sn_hat = Some(v);
                    sn_hat_interval_end = Some(checked_add(v, h, "sn_hat + hyperperiod")?);
                }
                BoundValue::NotApplicable(reason) => notes.push(format!("sn_hat: {reason}")),
            }
        }
    }

    let mut best = BestBound {
        value: general_product_end,
        source: "general_product".to_string(),
    };
    for (value, source) in [(sn_interval_end, "sn"), (sn_hat_interval_end, "sn_hat")] {
        if let Some(v) = value {
            if v < best.value {
                best = BestBound {
                    value: v,
                    source: source.to_string(),
                };
            }
        }
    }

    Ok(BoundsReport {
        schema: REPORT_SCHEMA,
        hyperperiod: h,
        max_offset: system.max_offset(),
        utilization: system.utilization().to_string(),
        leung_end,
        sn,
        sn_interval_end,
        sn_hat,
        sn_hat_interval_end,
        sync_product_end,
        general_product_end,
        best,
        applicability_notes: notes,
    })
}
