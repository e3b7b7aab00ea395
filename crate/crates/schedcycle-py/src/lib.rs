//! Python bindings. One class, `System`, wraps a task system and exposes the
//! analyses; reports cross the boundary as the same JSON and CSV documents
//! the command line reads and writes, so Python callers can feed them
//! straight back to files or other tools.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use schedcycle::bounds::bounds_report;
use schedcycle::cycle::{find_cycle, CycleConfig};
use schedcycle::explore::{build_graph, extremal_cycles, verify_bound, DEFAULT_VERTEX_CAP};
use schedcycle::gantt::{render_gantt, render_gantt_svg};
use schedcycle::io::{
    emit_bounds_report, emit_cycle_report, emit_explore_report, emit_system, parse_cycle_report,
    parse_system, parse_trace_csv, write_trace_csv, ExploreReport,
};
use schedcycle::policy::parse_scheduler;
use schedcycle::{Error, Severity, TaskId, TaskSystem, Tick};

/// Bad inputs become ValueError, resource and invariant failures
/// RuntimeError.
fn to_py(err: Error) -> PyErr {
    match err {
        Error::Input(_) | Error::InvalidSystem(_) | Error::SchedulerConfig(_) | Error::Json(_) => {
            PyValueError::new_err(err.to_string())
        }
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

/// A periodic task system on identical processors.
#[pyclass(frozen)]
struct System {
    inner: TaskSystem,
}

#[pymethods]
impl System {
    /// Parses the JSON interchange document (`processors`, `tasks`,
    /// optional `constraints`).
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<System> {
        let inner = parse_system(text).map_err(to_py)?;
        Ok(System { inner })
    }

    fn to_json(&self) -> String {
        emit_system(&self.inner)
    }

    #[getter]
    fn processors(&self) -> u32 {
        self.inner.processors
    }

    #[getter]
    fn task_count(&self) -> usize {
        self.inner.tasks.len()
    }

    fn hyperperiod(&self) -> PyResult<Tick> {
        self.inner.hyperperiod().map_err(to_py)
    }

    /// Exact total utilization as a rational string such as "7/4".
    fn utilization(&self) -> String {
        self.inner.utilization().to_string()
    }

    /// Validation findings, each prefixed with "error:" or "warning:".
    fn warnings(&self) -> Vec<String> {
        self.inner
            .validate()
            .into_iter()
            .map(|d| {
                let tag = match d.severity {
                    Severity::Error => "error",
                    Severity::Warning => "warning",
                };
                format!("{tag}: {}", d.message)
            })
            .collect()
    }

    /// The same system with every offset set to zero.
    fn synchronize(&self) -> System {
        System {
            inner: self.inner.synchronize(),
        }
    }

    /// Analytic simulation-interval bounds as a JSON report. `priority`
    /// orders task ids from highest to lowest for the fixed-priority bound.
    #[pyo3(signature = (priority=None))]
    fn bounds(&self, priority: Option<Vec<TaskId>>) -> PyResult<String> {
        let report = bounds_report(&self.inner, priority.as_deref()).map_err(to_py)?;
        Ok(emit_bounds_report(&report))
    }

    /// Runs `scheduler` until a state revisits, a deadline is missed (with
    /// `stop_on_miss`), or `horizon` runs out. Returns the cycle report as
    /// JSON and the schedule trace as CSV.
    #[pyo3(signature = (scheduler, horizon=None, stop_on_miss=false))]
    fn simulate(
        &self,
        scheduler: &str,
        horizon: Option<Tick>,
        stop_on_miss: bool,
    ) -> PyResult<(String, String)> {
        let policy = parse_scheduler(scheduler).map_err(to_py)?;
        let config = CycleConfig {
            horizon,
            stop_on_miss,
        };
        let (report, trace) = find_cycle(&self.inner, &policy, &config).map_err(to_py)?;
        Ok((emit_cycle_report(&report), write_trace_csv(&trace)))
    }

    /// Renders a trace CSV as a Gantt chart, plain text by default or SVG
    /// with `svg=True`. A cycle report JSON marks the transient and cycle.
    #[pyo3(signature = (trace_csv, report_json=None, svg=false))]
    fn gantt(&self, trace_csv: &str, report_json: Option<&str>, svg: bool) -> PyResult<String> {
        let trace = parse_trace_csv(trace_csv).map_err(to_py)?;
        let report = report_json
            .map(parse_cycle_report)
            .transpose()
            .map_err(to_py)?;
        let render = if svg { render_gantt_svg } else { render_gantt };
        render(&self.inner, &trace, report.as_ref()).map_err(to_py)
    }

    /// Exhaustively enumerates feasible schedules and returns the summary
    /// (graph size, feasibility, extremal cycle structure) as JSON.
    #[pyo3(signature = (vertex_cap=None))]
    fn enumerate(&self, vertex_cap: Option<usize>) -> PyResult<String> {
        let graph = build_graph(&self.inner, vertex_cap.unwrap_or(DEFAULT_VERTEX_CAP))
            .map_err(to_py)?;
        let extremes = extremal_cycles(&graph).map_err(to_py)?;
        let report = ExploreReport::new(&graph, extremes.as_ref(), None, None);
        Ok(emit_explore_report(&report))
    }

    /// True when every feasible schedule revisits a state by `bound`.
    #[pyo3(signature = (bound, vertex_cap=None))]
    fn verify_bound(&self, bound: Tick, vertex_cap: Option<usize>) -> PyResult<bool> {
        let graph = build_graph(&self.inner, vertex_cap.unwrap_or(DEFAULT_VERTEX_CAP))
            .map_err(to_py)?;
        verify_bound(&graph, bound).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "System(processors={}, tasks={})",
            self.inner.processors,
            self.inner.tasks.len()
        )
    }
}

#[pymodule]
fn schedcycle_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<System>()?;
    Ok(())
}
