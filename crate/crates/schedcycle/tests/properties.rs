//! Randomized invariants: offset removal, bound identities, deterministic
//! replay, the per-tick state equation, soundness of the enumerator's
//! pruning, tightness of its revisit extremes, and lossless round-trips of
//! every interchange format.

use proptest::prelude::*;

use schedcycle::bounds::{bounds_report, general_product_bound, sync_product_bound, BoundValue};
use schedcycle::cycle::{find_cycle, CycleConfig, Verdict};
use schedcycle::explore::{build_graph, extremal_cycles, verify_bound, DEFAULT_VERTEX_CAP};
use schedcycle::io::{emit_system, parse_system, parse_trace_csv, write_trace_csv};
use schedcycle::policy::{make_adversary_table, parse_scheduler, SchedulerSpec};
use schedcycle::sim::{Simulator, TaskClock};
use schedcycle::{Constraint, Error, Task, TaskId, TaskSystem, Tick};

fn arb_task(id: TaskId, max_period: Tick) -> impl Strategy<Value = Task> {
    (1..=max_period).prop_flat_map(move |period| {
        (0u64..=3, 1u64..=4, 1..=2 * period).prop_map(move |(offset, wcet, deadline)| Task {
            id,
            offset,
            wcet,
            period,
            deadline,
            priority: None,
        })
    })
}

/// Constraints over the first two tasks, weighted toward none. Precedence
/// is only valid between tasks of equal period, so that arm pins the
/// consumer's period to the producer's instead of leaving it random.
fn arb_constraints(tasks: &[Task]) -> BoxedStrategy<(Vec<Constraint>, Option<Tick>)> {
    if tasks.len() < 2 {
        return Just((Vec::new(), None)).boxed();
    }
    let wcet = tasks[0].wcet;
    let period = tasks[0].period;
    prop_oneof![
        4 => Just((Vec::new(), None)),
        1 => Just((
            vec![Constraint::Precedes { producer: 1, consumer: 2 }],
            Some(period),
        )),
        1 => Just((vec![Constraint::Excludes { a: 1, b: 2 }], None)),
        1 => (0..wcet, 1u64..=2).prop_map(|(after, delay)| {
            (vec![Constraint::Suspends { task: 1, after, delay }], None)
        }),
        1 => Just((vec![Constraint::NonPreemptive { task: 2 }], None)),
    ]
    .boxed()
}

fn arb_system(max_tasks: usize, max_period: Tick) -> impl Strategy<Value = TaskSystem> {
    (1..=max_tasks).prop_flat_map(move |n| {
        let tasks: Vec<_> = (1..=n).map(|i| arb_task(i as TaskId, max_period)).collect();
        (1u32..=2, tasks).prop_flat_map(|(processors, tasks)| {
            arb_constraints(&tasks).prop_map(move |(cs, pinned_period)| {
                let mut tasks = tasks.clone();
                if let Some(period) = pinned_period {
                    tasks[1].period = period;
                    tasks[1].deadline = tasks[1].deadline.min(2 * period);
                }
                TaskSystem::new(processors, tasks, cs)
            })
        })
    })
}

fn arb_scheduler() -> impl Strategy<Value = SchedulerSpec> {
    prop_oneof![
        Just("edf"),
        Just("lrptf"),
        Just("fpp:rm"),
        Just("fpp:dm"),
    ]
    .prop_map(|name| parse_scheduler(name).unwrap())
}

proptest! {
    /// Zeroing offsets moves releases earlier but keeps every job's absolute
    /// deadline, and doing it twice changes nothing further.
    #[test]
    fn synchronizing_preserves_absolute_deadlines(sys in arb_system(3, 6)) {
        let sync = sys.synchronize();
        for (orig, zeroed) in sys.tasks.iter().zip(&sync.tasks) {
            prop_assert_eq!(zeroed.offset, 0);
            prop_assert_eq!(zeroed.period, orig.period);
            prop_assert_eq!(zeroed.wcet, orig.wcet);
            for j in 0..4u64 {
                let original = orig.offset + j * orig.period + orig.deadline;
                let shifted = j * zeroed.period + zeroed.deadline;
                prop_assert_eq!(original, shifted);
            }
        }
        prop_assert_eq!(sync.synchronize(), sync);
    }

    /// The offset-aware product bound of a system equals the synchronous
    /// product bound of its offset-free counterpart.
    #[test]
    fn product_bound_matches_synchronized_counterpart(sys in arb_system(3, 6)) {
        let general = general_product_bound(&sys)?;
        match sync_product_bound(&sys.synchronize())? {
            BoundValue::Value(v) => prop_assert_eq!(general, v),
            BoundValue::NotApplicable(why) => {
                return Err(TestCaseError::fail(format!("must apply: {why}")));
            }
        }
        let report = bounds_report(&sys, None)?;
        prop_assert_eq!(report.general_product_end, general);
        prop_assert!(report.best.value <= general);
    }

    /// Two searches over the same system and scheduler agree byte for byte.
    #[test]
    fn recurrence_search_is_deterministic(
        sys in arb_system(3, 6),
        spec in arb_scheduler(),
    ) {
        let config = CycleConfig { horizon: None, stop_on_miss: true };
        let first = find_cycle(&sys, &spec, &config)?;
        let second = find_cycle(&sys, &spec, &config)?;
        prop_assert_eq!(first.0, second.0);
        prop_assert_eq!(first.1, second.1);
    }

    /// Per tick, each task's backlog shrinks by its service and grows by one
    /// wcet exactly at release instants.
    #[test]
    fn backlog_follows_the_state_equation(
        sys in arb_system(3, 6),
        spec in arb_scheduler(),
    ) {
        let mut sim = Simulator::new(&sys)?;
        for _ in 0..20 {
            let before = sim.state.clone();
            let decision = spec.decide(&sys, &sim.state)?;
            sim.advance(&decision)?;
            let now = sim.now;
            for (i, task) in sys.tasks.iter().enumerate() {
                let served = decision.contains(&task.id) as u64;
                // Wall-clock release oracle, independent of the clock state.
                let released = if now >= task.offset && (now - task.offset) % task.period == 0 {
                    prop_assert_eq!(&sim.state.clocks[i], &TaskClock::Released(0));
                    task.wcet
                } else {
                    0
                };
                prop_assert_eq!(
                    sim.state.remaining[i],
                    before.remaining[i] - served + released,
                    "task {} at tick {}", task.id, now - 1
                );
            }
        }
    }

    /// Rows store the decision itself: occupied cells first, sorted by task
    /// id, never repeating a task.
    #[test]
    fn trace_rows_are_canonical(
        sys in arb_system(3, 6),
        spec in arb_scheduler(),
    ) {
        let config = CycleConfig { horizon: Some(30), stop_on_miss: false };
        let (_, trace) = find_cycle(&sys, &spec, &config)?;
        for row in &trace.rows {
            prop_assert_eq!(row.len(), sys.processors as usize);
            let ids: Vec<TaskId> = row.iter().flatten().copied().collect();
            prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
            let tail_empty = row.iter().skip_while(|c| c.is_some()).all(|c| c.is_none());
            prop_assert!(tail_empty, "idle cells must trail the occupied ones");
        }
    }

    /// Every state a feasible schedule passes through survives exhaustive
    /// pruning, and each of its decisions is a legal edge.
    #[test]
    fn feasible_runs_stay_in_the_surviving_subgraph(
        sys in arb_system(2, 4),
        spec in arb_scheduler(),
    ) {
        let (report, trace) = find_cycle(&sys, &spec, &CycleConfig::default())?;
        prop_assume!(report.verdict == Verdict::CycleFound && report.feasible);
        let graph = build_graph(&sys, DEFAULT_VERTEX_CAP)?;
        let mut at = graph.initial;
        for (t, row) in trace.rows.iter().enumerate() {
            let vertex = &graph.vertices[at];
            prop_assert!(vertex.pruned.is_none(), "pruned state reached at tick {t}");
            prop_assert!(vertex.surviving, "dead state reached at tick {t}");
            let decision: Vec<TaskId> = row.iter().flatten().copied().collect();
            let edge = vertex.edges.iter().find(|e| e.decision == decision);
            match edge {
                Some(edge) => at = edge.to,
                None => return Err(TestCaseError::fail(format!("no edge at tick {t}"))),
            }
        }
    }

    /// The enumerator's latest-revisit figure is exact: checking it as a
    /// bound succeeds, and one tick less fails. Instances where the exact
    /// longest-path search blows its step budget are skipped.
    #[test]
    fn max_revisit_is_a_tight_bound(sys in arb_system(2, 4)) {
        let graph = build_graph(&sys, DEFAULT_VERTEX_CAP)?;
        let extremes = match extremal_cycles(&graph) {
            Err(Error::SearchBudgetExceeded { .. }) => {
                return Err(TestCaseError::reject("search budget"));
            }
            other => other?,
        };
        if let Some(extremes) = extremes {
            prop_assert!(verify_bound(&graph, extremes.max_revisit)?);
            prop_assert!(!verify_bound(&graph, extremes.max_revisit - 1)?);
        }
    }

    /// parse is the inverse of emit for systems, including constraints.
    #[test]
    fn system_json_round_trips(sys in arb_system(3, 6)) {
        prop_assert_eq!(parse_system(&emit_system(&sys))?, sys);
    }

    /// parse is the inverse of emit for traces (events live elsewhere).
    #[test]
    fn trace_csv_round_trips(
        sys in arb_system(3, 6),
        spec in arb_scheduler(),
    ) {
        let config = CycleConfig { horizon: Some(24), stop_on_miss: false };
        let (_, trace) = find_cycle(&sys, &spec, &config)?;
        let parsed = parse_trace_csv(&write_trace_csv(&trace))?;
        prop_assert_eq!(parsed.processors, trace.processors);
        prop_assert_eq!(parsed.horizon, trace.horizon);
        prop_assert_eq!(parsed.rows, trace.rows);
        prop_assert!(parsed.events.is_empty());
    }

    /// A decision table distilled from a trace drives the simulator through
    /// the identical schedule.
    #[test]
    fn distilled_tables_replay_their_source(
        sys in arb_system(2, 4),
        spec in arb_scheduler(),
    ) {
        let (report, trace) = find_cycle(&sys, &spec, &CycleConfig::default())?;
        prop_assume!(report.verdict == Verdict::CycleFound && report.feasible);
        let decisions: Vec<Vec<TaskId>> = trace
            .rows
            .iter()
            .map(|row| row.iter().flatten().copied().collect())
            .collect();
        let table = make_adversary_table(&sys, &decisions)?;
        let tabular = SchedulerSpec::TableDriven { table, fallback: None };
        let (replay_report, replay_trace) = find_cycle(&sys, &tabular, &CycleConfig::default())?;
        prop_assert_eq!(replay_report.transient_len, report.transient_len);
        prop_assert_eq!(replay_report.period_len, report.period_len);
        prop_assert_eq!(replay_trace.rows, trace.rows);
    }
}
