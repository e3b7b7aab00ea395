//! Interchange formats: task systems and reports as JSON, traces and events
//! as CSV.
//!
//! JSON documents reject unknown keys so that typos surface as errors rather
//! than silently ignored settings. Reports carry a `schema` version for
//! forward compatibility. CSV traces hold one row per tick and one column
//! per processor, with `-` marking an idle slot.

use serde::{Deserialize, Serialize};

use crate::bounds::BoundsReport;
use crate::cycle::CycleReport;
use crate::error::{Error, Result};
use crate::explore::{Extremes, ScheduleGraph};
use crate::sim::{Event, ScheduleTrace};
use crate::task::{Constraint, Task, TaskId, TaskSystem, Tick};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemJson {
    processors: u32,
    tasks: Vec<Task>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    constraints: Vec<ConstraintJson>,
}

/// Flat constraint record. A tagged enum would be the natural fit, but it
/// could not reject unknown keys, so the dispatch on `kind` is manual.
#[derive(Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ConstraintJson {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    producer: Option<TaskId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    consumer: Option<TaskId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<TaskId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<TaskId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    task: Option<TaskId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    after: Option<Tick>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delay: Option<Tick>,
}

fn required<T>(field: Option<T>, kind: &str, name: &str) -> Result<T> {
    field.ok_or_else(|| Error::input(format!("constraint kind '{kind}' requires field '{name}'")))
}

impl ConstraintJson {
    fn into_constraint(self) -> Result<Constraint> {
        let kind = self.kind.as_str();
        let fields: [(&str, bool); 7] = [
            ("producer", self.producer.is_some()),
            ("consumer", self.consumer.is_some()),
            ("a", self.a.is_some()),
            ("b", self.b.is_some()),
            ("task", self.task.is_some()),
            ("after", self.after.is_some()),
            ("delay", self.delay.is_some()),
        ];
        let allowed: &[&str] = match kind {
            "precedes" => &["producer", "consumer"],
            "excludes" => &["a", "b"],
            "suspends" => &["task", "after", "delay"],
            "non_preemptive" => &["task"],
            other => {
                return Err(Error::input(format!(
                    "unknown constraint kind '{other}' (expected precedes, excludes, \
                     suspends, or non_preemptive)"
                )))
            }
        };
        for (name, present) in fields {
            if present && !allowed.contains(&name) {
                return Err(Error::input(format!(
                    "constraint kind '{kind}' does not take field '{name}'"
                )));
            }
        }
        Ok(match kind {
            "precedes" => Constraint::Precedes {
                producer: required(self.producer, kind, "producer")?,
                consumer: required(self.consumer, kind, "consumer")?,
            },
            "excludes" => Constraint::Excludes {
                a: required(self.a, kind, "a")?,
                b: required(self.b, kind, "b")?,
            },
            "suspends" => Constraint::Suspends {
                task: required(self.task, kind, "task")?,
                after: required(self.after, kind, "after")?,
                delay: required(self.delay, kind, "delay")?,
            },
            "non_preemptive" => Constraint::NonPreemptive {
                task: required(self.task, kind, "task")?,
            },
            _ => unreachable!(),
        })
    }

    fn from_constraint(constraint: &Constraint) -> ConstraintJson {
        let mut json = ConstraintJson::default();
        match constraint {
            Constraint::Precedes { producer, consumer } => {
                json.kind = "precedes".into();
                json.producer = Some(*producer);
                json.consumer = Some(*consumer);
            }
            Constraint::Excludes { a, b } => {
                json.kind = "excludes".into();
                json.a = Some(*a);
                json.b = Some(*b);
            }
            Constraint::Suspends { task, after, delay } => {
                json.kind = "suspends".into();
                json.task = Some(*task);
                json.after = Some(*after);
                json.delay = Some(*delay);
            }
            Constraint::NonPreemptive { task } => {
                json.kind = "non_preemptive".into();
                json.task = Some(*task);
            }
        }
        json
    }
}

/// Parses and validates a task system from its JSON form.
pub fn parse_system(text: &str) -> Result<TaskSystem> {
    let json: SystemJson =
        serde_json::from_str(text).map_err(|e| Error::input(format!("task system: {e}")))?;
    let constraints = json
        .constraints
        .into_iter()
        .map(ConstraintJson::into_constraint)
        .collect::<Result<Vec<_>>>()?;
    let system = TaskSystem::new(json.processors, json.tasks, constraints);
    system.ensure_valid()?;
    Ok(system)
}

/// Serializes a task system to its JSON form.
pub fn emit_system(system: &TaskSystem) -> String {
    let json = SystemJson {
        processors: system.processors,
        tasks: system.tasks.clone(),
        constraints: system
            .constraints
            .iter()
            .map(ConstraintJson::from_constraint)
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&json).expect("system serializes");
    text.push('\n');
    text
}

fn emit_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text
}

pub fn emit_bounds_report(report: &BoundsReport) -> String {
    emit_json(report)
}

pub fn parse_bounds_report(text: &str) -> Result<BoundsReport> {
    serde_json::from_str(text).map_err(|e| Error::input(format!("bounds report: {e}")))
}

pub fn emit_cycle_report(report: &CycleReport) -> String {
    emit_json(report)
}

pub fn parse_cycle_report(text: &str) -> Result<CycleReport> {
    serde_json::from_str(text).map_err(|e| Error::input(format!("cycle report: {e}")))
}

/// Summary of an exhaustive enumeration: graph size, feasibility, and the
/// extremal cycle structure when a feasible schedule exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreReport {
    pub schema: u32,
    pub vertices: usize,
    pub surviving: usize,
    pub pruned: usize,
    /// Whether any feasible schedule exists at all.
    pub feasible: bool,
    pub max_period: Option<Tick>,
    pub max_transient: Option<Tick>,
    pub max_revisit: Option<Tick>,
    pub bound_checked: Option<Tick>,
    pub bound_holds: Option<bool>,
}

impl ExploreReport {
    pub fn new(
        graph: &ScheduleGraph,
        extremes: Option<&Extremes>,
        bound_checked: Option<Tick>,
        bound_holds: Option<bool>,
    ) -> Self {
        ExploreReport {
            schema: 1,
            vertices: graph.vertex_count(),
            surviving: graph.surviving_count(),
            pruned: graph.pruned_count(),
            feasible: extremes.is_some(),
            max_period: extremes.map(|e| e.max_period),
            max_transient: extremes.map(|e| e.max_transient),
            max_revisit: extremes.map(|e| e.max_revisit),
            bound_checked,
            bound_holds,
        }
    }
}

pub fn emit_explore_report(report: &ExploreReport) -> String {
    emit_json(report)
}

pub fn parse_explore_report(text: &str) -> Result<ExploreReport> {
    serde_json::from_str(text).map_err(|e| Error::input(format!("enumeration report: {e}")))
}

/// Writes the processor assignment rows: `tick,cpu0,cpu1,...` with `-` for
/// an idle processor.
pub fn write_trace_csv(trace: &ScheduleTrace) -> String {
    let mut out = String::from("tick");
    for cpu in 0..trace.processors {
        out.push_str(&format!(",cpu{cpu}"));
    }
    out.push('\n');
    for (t, row) in trace.rows.iter().enumerate() {
        out.push_str(&t.to_string());
        for cell in row {
            match cell {
                Some(id) => out.push_str(&format!(",{id}")),
                None => out.push_str(",-"),
            }
        }
        out.push('\n');
    }
    out
}

/// Reads a trace written by [`write_trace_csv`]. Events are not part of the
/// CSV; use [`crate::sim::check_deadlines`] to re-derive misses.
pub fn parse_trace_csv(text: &str) -> Result<ScheduleTrace> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::input("empty trace"))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.first() != Some(&"tick") || columns.len() < 2 {
        return Err(Error::input(format!("malformed trace header '{header}'")));
    }
    for (i, name) in columns[1..].iter().enumerate() {
        if *name != format!("cpu{i}") {
            return Err(Error::input(format!("unexpected trace column '{name}'")));
        }
    }
    let processors = (columns.len() - 1) as u32;

    let mut rows = Vec::new();
    for (index, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(Error::input(format!(
                "trace row {index} has {} cells, expected {}",
                cells.len(),
                columns.len()
            )));
        }
        let tick: Tick = cells[0]
            .parse()
            .map_err(|_| Error::input(format!("bad tick '{}'", cells[0])))?;
        if tick != index as Tick {
            return Err(Error::input(format!(
                "trace rows must be consecutive from 0; row {index} is labeled {tick}"
            )));
        }
        let mut row = Vec::with_capacity(processors as usize);
        for cell in &cells[1..] {
            row.push(match *cell {
                "-" => None,
                id => Some(
                    id.parse::<TaskId>()
                        .map_err(|_| Error::input(format!("bad task id '{id}'")))?,
                ),
            });
        }
        rows.push(row);
    }
    Ok(ScheduleTrace {
        processors,
        horizon: rows.len() as Tick,
        rows,
        events: Vec::new(),
    })
}

/// Writes the event log: `kind,task,job,tick`, in recording order.
pub fn write_events_csv(events: &[Event]) -> String {
    let mut out = String::from("kind,task,job,tick\n");
    for event in events {
        let kind = match event.kind {
            crate::sim::EventKind::Release => "release",
            crate::sim::EventKind::Completion => "completion",
            crate::sim::EventKind::Miss => "miss",
        };
        out.push_str(&format!(
            "{kind},{},{},{}\n",
            event.job.task, event.job.index, event.tick
        ));
    }
    out
}
