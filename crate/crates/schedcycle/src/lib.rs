/*! Simulation-interval analysis for periodic task systems on identical
multiprocessors.

Deterministic schedulers that decide from the current backlog and local
clocks alone drive every periodic task system into a repeating pattern: a
transient prefix followed by a cyclic phase. This crate

 - simulates such schedulers tick by tick (fixed task priority, global EDF,
   longest-remaining-time-first, and table-driven policies, with optional
   precedence, exclusion, self-suspension, and non-preemptive constraints),
 - detects the transient and cyclic phase of a schedule by hashing states,
 - computes analytic upper bounds on how long a simulation must run before
   the cycle is guaranteed to have closed, and
 - cross-validates those bounds against an exhaustive enumeration of every
   feasible schedule on small instances.

The [`task`] module defines the system model, [`bounds`] the analytic
interval bounds, [`sim`] the tick-level state machine, [`policy`] the
schedulers, [`cycle`] the cycle detector, [`explore`] the exhaustive
enumerator, and [`io`]/[`gantt`] the file formats and renderings used by the
`schedcycle` command-line tool.
*/

pub mod bounds;
pub mod cycle;
pub mod error;
pub mod explore;
pub mod gantt;
pub mod io;
pub mod policy;
pub mod sim;
pub mod task;

pub use error::{Error, Result};
pub use task::{Constraint, Diagnostic, JobId, Severity, Task, TaskId, TaskSystem, Tick};

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::task::{Task, TaskId, TaskSystem, Tick};

    pub fn task(id: TaskId, offset: Tick, wcet: Tick, period: Tick, deadline: Tick) -> Task {
        Task {
            id,
            offset,
            wcet,
            period,
            deadline,
            priority: None,
        }
    }

    /// Two unit tasks with period 2 and one heavy task needing 3 ticks every
    /// 4 with a deadline past its period, on two processors. Utilization 7/4.
    pub fn dual_core_system() -> TaskSystem {
        TaskSystem::new(
            2,
            vec![
                task(1, 0, 1, 2, 2),
                task(2, 0, 1, 2, 2),
                task(3, 0, 3, 4, 7),
            ],
            vec![],
        )
    }

    /// One task of 2 ticks every 4 (deadline 5) and one unit task every 4,
    /// on a single processor. Utilization 3/4.
    pub fn single_core_system() -> TaskSystem {
        TaskSystem::new(1, vec![task(1, 0, 2, 4, 5), task(2, 0, 1, 4, 4)], vec![])
    }

    /// Two offset tasks sharing period 8, single processor.
    pub fn offset_pair() -> TaskSystem {
        TaskSystem::new(1, vec![task(1, 1, 2, 8, 7), task(2, 0, 3, 8, 8)], vec![])
    }

    /// Offset pair with differing periods 12 and 8, single processor.
    pub fn offset_pair_long() -> TaskSystem {
        TaskSystem::new(1, vec![task(1, 1, 2, 12, 7), task(2, 0, 3, 8, 9)], vec![])
    }
}
