//! Schedule recurrence detection.
//!
//! A deterministic memoryless scheduler on a periodic system walks a finite
//! state space, so its schedule is ultimately periodic: a transient prefix
//! followed by a cycle that repeats forever. Locating that cycle reduces the
//! infinite feasibility question to a finite simulation, and the analytic
//! bounds in [`crate::bounds`] cap how long the search can take.

use std::collections::HashMap;

use num::{BigInt, BigRational, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::error::{Error, Result};
use crate::policy::SchedulerSpec;
use crate::sim::{Event, EventKind, ScheduleTrace, Simulator, SystemState};
use crate::task::{TaskSystem, Tick};

/// Canonical byte key identifying a state up to future behavior.
pub fn canonical_state_key(state: &SystemState) -> Vec<u8> {
    state.canonical_key()
}

/// Controls for the recurrence search.
#[derive(Debug, Clone, Copy, Default)]
pub struct CycleConfig {
    /// Latest tick by which a revisit must be found. Defaults to the general
    /// analytic bound plus one hyperperiod of slack, so a run overshooting
    /// the bound is detected rather than silently truncated.
    pub horizon: Option<Tick>,
    /// Abort at the first deadline miss instead of chasing the recurrence of
    /// a schedule already known to be infeasible.
    pub stop_on_miss: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// A state recurred; the schedule is eventually periodic.
    CycleFound,
    /// Stopped at the first deadline miss (only with `stop_on_miss`).
    MissFound,
    /// No recurrence within the horizon.
    HorizonExhausted,
}

/// Outcome of a recurrence search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleReport {
    pub schema: u32,
    pub scheduler: String,
    pub verdict: Verdict,
    /// Search horizon in effect.
    pub horizon: Tick,
    /// Ticks before the cycle starts.
    pub transient_len: Option<Tick>,
    /// Length of the repeating cycle.
    pub period_len: Option<Tick>,
    /// True when a cycle was found and no job with a judged deadline missed
    /// it, which by periodicity extends to the whole infinite schedule.
    pub feasible: bool,
    pub first_miss: Option<Event>,
    /// Idle processor-ticks across one cycle, when one was found.
    pub steady_idle_slots: Option<u64>,
}

pub const REPORT_SCHEMA: u32 = 1;

/// Key for comparing states at hyperperiod boundaries of a synchronous
/// system by their backlog just before the boundary releases. At such
/// instants every local clock is zero, so this is the full state with the
/// clocks projected away.
fn boundary_key(system: &TaskSystem, state: &SystemState) -> Vec<u8> {
    let mut key = Vec::new();
    for rem in state.pre_state(system) {
        key.extend_from_slice(&rem.to_le_bytes());
    }
    state.append_constraint_key(&mut key);
    key
}

/// Idle processor-ticks that any cycle of this system must show: over one
/// cycle the released work equals the executed work, so idleness is pinned
/// to `period * (processors - utilization)` exactly.
pub fn expected_steady_idle(system: &TaskSystem, period: Tick) -> Result<u64> {
    let m = BigRational::from_integer(BigInt::from(system.processors));
    let slots = BigRational::from_integer(BigInt::from(period)) * (m - system.utilization());
    if !slots.is_integer() {
        return Err(Error::InvariantViolated(format!(
            "cycle of {period} ticks implies fractional idleness {slots}"
        )));
    }
    slots
        .to_integer()
        .to_u64()
        .ok_or_else(|| Error::InvariantViolated("negative or huge idleness".into()))
}

/// Simulates `policy` on `system` until a state revisit, a miss (with
/// `stop_on_miss`), or the horizon. On a revisit the simulation continues
/// far enough past it to judge the deadline of every job released before
/// the revisit; by periodicity those judgments settle feasibility outright.
pub fn find_cycle(
    system: &TaskSystem,
    policy: &SchedulerSpec,
    config: &CycleConfig,
) -> Result<(CycleReport, ScheduleTrace)> {
    system.ensure_valid()?;
    policy.validate_for(system)?;
    let hyperperiod = system.hyperperiod()?;
    let horizon = match config.horizon {
        Some(h) => h,
        None => bounds::general_product_bound(system)?
            .checked_add(hyperperiod)
            .ok_or_else(|| Error::overflow("recurrence search horizon"))?,
    };

    let synchronous = system.max_offset() == 0 && !system.tasks.is_empty();
    let mut boundary_seen: HashMap<Vec<u8>, Tick> = HashMap::new();
    let mut boundary_revisit: Option<(Tick, Tick)> = None;
    fn track_boundary(
        t: Tick,
        key: Vec<u8>,
        revisit: &mut Option<(Tick, Tick)>,
        seen: &mut HashMap<Vec<u8>, Tick>,
    ) {
        if revisit.is_none() {
            match seen.get(&key) {
                Some(&t1) => *revisit = Some((t1, t)),
                None => {
                    seen.insert(key, t);
                }
            }
        }
    }

    let mut sim = Simulator::new(system)?;
    let mut seen: HashMap<Vec<u8>, Tick> = HashMap::new();
    let mut revisit: Option<(Tick, Tick)> = None;
    loop {
        let t = sim.now;
        if synchronous && t % hyperperiod == 0 {
            track_boundary(
                t,
                boundary_key(system, &sim.state),
                &mut boundary_revisit,
                &mut boundary_seen,
            );
        }
        let key = sim.state.canonical_key();
        if let Some(&first) = seen.get(&key) {
            revisit = Some((first, t));
            break;
        }
        if t >= horizon {
            break;
        }
        seen.insert(key, t);
        let decision = policy.decide(system, &sim.state)?;
        sim.advance(&decision)?;
        if config.stop_on_miss && sim.trace().first_miss().is_some() {
            break;
        }
    }
    drop(seen);

    let mut report = CycleReport {
        schema: REPORT_SCHEMA,
        scheduler: policy.to_string(),
        verdict: Verdict::HorizonExhausted,
        horizon,
        transient_len: None,
        period_len: None,
        feasible: false,
        first_miss: sim.trace().first_miss(),
        steady_idle_slots: None,
    };

    let Some((transient, revisit_tick)) = revisit else {
        if config.stop_on_miss && report.first_miss.is_some() {
            report.verdict = Verdict::MissFound;
        }
        return Ok((report, sim.into_trace()));
    };
    let period = revisit_tick - transient;

    // Judge every job released before the revisit: the last such deadline
    // falls before revisit + max deadline. For synchronous systems, also run
    // to the boundary-state revisit so the cross-check below has its data.
    let max_deadline = system.tasks.iter().map(|t| t.deadline).max().unwrap_or(0);
    let mut target = revisit_tick
        .checked_add(max_deadline)
        .ok_or_else(|| Error::overflow("deadline adjudication horizon"))?;
    if synchronous {
        let first_boundary = transient.div_ceil(hyperperiod) * hyperperiod;
        target = target.max(first_boundary + period);
    }
    while sim.now < target {
        let t = sim.now;
        if synchronous && t % hyperperiod == 0 {
            track_boundary(
                t,
                boundary_key(system, &sim.state),
                &mut boundary_revisit,
                &mut boundary_seen,
            );
        }
        let decision = policy.decide(system, &sim.state)?;
        sim.advance(&decision)?;
    }
    if synchronous && sim.now % hyperperiod == 0 {
        track_boundary(
            sim.now,
            boundary_key(system, &sim.state),
            &mut boundary_revisit,
            &mut boundary_seen,
        );
    }

    let trace = sim.into_trace();
    let first_miss = trace
        .events
        .iter()
        .filter(|e| {
            e.kind == EventKind::Miss && {
                let task = system.task(e.job.task).expect("event task exists");
                (task.offset as u128 + e.job.index as u128 * task.period as u128)
                    < revisit_tick as u128
            }
        })
        .min_by_key(|e| (e.tick, e.job.task, e.job.index))
        .copied();

    let observed_idle = trace.idle_slots(transient, revisit_tick);
    let expected_idle = expected_steady_idle(system, period)?;
    if observed_idle != expected_idle {
        return Err(Error::InvariantViolated(format!(
            "cycle [{transient}, {revisit_tick}) shows {observed_idle} idle slots, \
             work conservation demands {expected_idle}"
        )));
    }

    // Synchronous cross-check: comparing backlogs at hyperperiod boundaries
    // must rediscover the same cycle, shifted to the first boundary at or
    // after the transient.
    if synchronous {
        let first_boundary = transient.div_ceil(hyperperiod) * hyperperiod;
        if boundary_revisit != Some((first_boundary, first_boundary + period)) {
            return Err(Error::InvariantViolated(format!(
                "boundary backlogs recur as {boundary_revisit:?}, expected \
                 ({first_boundary}, {})",
                first_boundary + period
            )));
        }
    }

    report.verdict = Verdict::CycleFound;
    report.transient_len = Some(transient);
    report.period_len = Some(period);
    report.first_miss = first_miss;
    report.feasible = first_miss.is_none();
    report.steady_idle_slots = Some(observed_idle);
    Ok((report, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{dual_core_system, offset_pair, single_core_system};
    use crate::policy::PriorityRule;
    use crate::task::JobId;

    fn dm() -> SchedulerSpec {
        SchedulerSpec::FixedTaskPriority {
            rule: PriorityRule::DeadlineMonotonic,
        }
    }

    #[test]
    fn edf_on_the_dual_core_pair_settles_after_two_hyperperiods() {
        let sys = dual_core_system();
        let (report, trace) =
            find_cycle(&sys, &SchedulerSpec::GlobalEdf, &CycleConfig::default()).unwrap();
        assert_eq!(report.verdict, Verdict::CycleFound);
        assert_eq!(report.transient_len, Some(8));
        assert_eq!(report.period_len, Some(4));
        assert!(report.feasible);
        assert_eq!(report.first_miss, None);
        assert_eq!(report.steady_idle_slots, Some(1));
        assert_eq!(report.horizon, 20); // product bound 16 plus hyperperiod 4
        assert!(trace.horizon >= 12);
    }

    #[test]
    fn lrptf_on_the_dual_core_pair_cycles_immediately() {
        let sys = dual_core_system();
        let (report, _) =
            find_cycle(&sys, &SchedulerSpec::Lrptf, &CycleConfig::default()).unwrap();
        assert_eq!(report.verdict, Verdict::CycleFound);
        assert_eq!(report.transient_len, Some(0));
        assert_eq!(report.period_len, Some(4));
        assert!(report.feasible);
        assert_eq!(report.steady_idle_slots, Some(1));
    }

    #[test]
    fn deadline_monotonic_starves_the_long_task() {
        let sys = dual_core_system();
        let (report, _) = find_cycle(
            &sys,
            &dm(),
            &CycleConfig {
                stop_on_miss: true,
                ..CycleConfig::default()
            },
        )
        .unwrap();
        assert_eq!(report.verdict, Verdict::MissFound);
        assert_eq!(report.transient_len, None);
        assert!(!report.feasible);
        let miss = report.first_miss.unwrap();
        assert_eq!(miss.job, JobId::new(3, 1));
        assert_eq!(miss.tick, 11);
    }

    #[test]
    fn starvation_without_stopping_exhausts_the_horizon() {
        // The backlog of task 3 grows forever, so no state ever recurs.
        let sys = dual_core_system();
        let (report, _) = find_cycle(&sys, &dm(), &CycleConfig::default()).unwrap();
        assert_eq!(report.verdict, Verdict::HorizonExhausted);
        assert!(!report.feasible);
        let miss = report.first_miss.unwrap();
        assert_eq!((miss.job, miss.tick), (JobId::new(3, 1), 11));
    }

    #[test]
    fn every_builtin_policy_cycles_at_once_on_the_single_core_pair() {
        let sys = single_core_system();
        for policy in [SchedulerSpec::GlobalEdf, SchedulerSpec::Lrptf, dm()] {
            let (report, _) = find_cycle(&sys, &policy, &CycleConfig::default()).unwrap();
            assert_eq!(report.verdict, Verdict::CycleFound, "{policy}");
            assert_eq!(report.transient_len, Some(0), "{policy}");
            assert_eq!(report.period_len, Some(4), "{policy}");
            assert!(report.feasible, "{policy}");
            assert_eq!(report.steady_idle_slots, Some(1), "{policy}");
        }
    }

    #[test]
    fn offsets_fold_into_the_cycle_when_behavior_repeats() {
        // The offset task's pre-release wait looks exactly like its idle
        // phase inside the cycle, so the whole schedule is periodic from
        // tick 0 and the revisit lands on the product bound.
        let sys = offset_pair();
        let (report, _) =
            find_cycle(&sys, &SchedulerSpec::GlobalEdf, &CycleConfig::default()).unwrap();
        assert_eq!(report.verdict, Verdict::CycleFound);
        assert_eq!(report.transient_len, Some(0));
        assert_eq!(report.period_len, Some(8));
        assert!(report.feasible);
        assert_eq!(report.steady_idle_slots, Some(3));
    }

    #[test]
    fn tight_horizons_end_the_search_unresolved() {
        let sys = dual_core_system();
        let (report, trace) = find_cycle(
            &sys,
            &SchedulerSpec::GlobalEdf,
            &CycleConfig {
                horizon: Some(5),
                stop_on_miss: false,
            },
        )
        .unwrap();
        assert_eq!(report.verdict, Verdict::HorizonExhausted);
        assert_eq!(report.transient_len, None);
        assert!(!report.feasible);
        assert_eq!(trace.horizon, 5);
    }

    #[test]
    fn expected_idleness_follows_work_conservation() {
        assert_eq!(expected_steady_idle(&dual_core_system(), 4).unwrap(), 1);
        assert_eq!(expected_steady_idle(&single_core_system(), 4).unwrap(), 1);
        assert_eq!(expected_steady_idle(&offset_pair(), 8).unwrap(), 3);
        // A period that is not a multiple of every period would imply
        // fractional idleness; such cycles cannot exist.
        assert!(expected_steady_idle(&dual_core_system(), 2).is_err());
    }
}
