//! Exhaustive enumeration of feasible schedules.
//!
//! Instead of fixing one scheduler, this module explores every decision any
//! scheduler could take, merging states that recur. The result is a graph
//! whose infinite paths are exactly the deadline-meeting schedules, which
//! makes it an independent oracle: simulated schedules must appear as paths
//! in it, and analytic recurrence bounds must dominate every walk a
//! deterministic memoryless scheduler can realize.
//!
//! States that have already missed a deadline, or provably must miss one,
//! are pruned. Pruning keeps the reachable space finite: a job pending past
//! its deadline kills its state, so backlogs cannot grow without bound.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::sim::{step, SystemState, TaskClock};
use crate::task::{TaskId, TaskSystem, Tick};

pub const DEFAULT_VERTEX_CAP: usize = 1_000_000;

/// Edge budget for the exhaustive path searches, which are exponential in
/// the worst case and meant for small instances.
const SEARCH_STEP_BUDGET: u64 = 4_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub decision: Vec<TaskId>,
    pub to: usize,
}

#[derive(Debug, Clone)]
pub struct Vertex {
    pub state: SystemState,
    /// Tick at which breadth-first exploration first reached this state.
    pub first_tick: Tick,
    /// Why the state cannot belong to any feasible schedule, if so.
    pub pruned: Option<String>,
    /// True when an infinite deadline-meeting schedule starts here.
    pub surviving: bool,
    /// Successors, one per distinct legal decision, in canonical decision
    /// order. Pruned vertices are not expanded.
    pub edges: Vec<Edge>,
}

/// The merged graph of every schedule of a system.
#[derive(Debug, Clone)]
pub struct ScheduleGraph {
    pub vertices: Vec<Vertex>,
    pub initial: usize,
}

/// Extremal lasso shapes realizable by deterministic memoryless schedulers:
/// each is a simple vertex path plus one edge closing into it, the walk such
/// a scheduler produces when its per-state choices are fixed along the path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extremes {
    /// Longest cycle, in ticks.
    pub max_period: Tick,
    /// Longest stretch before entering a cycle.
    pub max_transient: Tick,
    /// Latest possible first state revisit (max transient plus period over
    /// single lassos, which need not be the sum of the two maxima).
    pub max_revisit: Tick,
    /// Vertex ids of one cycle realizing `max_period`.
    pub period_witness: Vec<usize>,
    /// Vertex ids of one stem realizing `max_transient`.
    pub transient_witness: Vec<usize>,
}

/// Checks whether a state has already missed a deadline or provably must.
/// Only necessary conditions are used, so no feasible state is ever pruned:
/// a task serves its backlog in release order on at most one processor, so
/// its k-th oldest job cannot finish within `head_remaining + k * wcet`
/// ticks, and across tasks at most `processors` ticks of work fit per tick.
fn prune_reason(system: &TaskSystem, state: &SystemState) -> Option<String> {
    let mut due: Vec<(i128, i128)> = Vec::new();
    for (i, task) in system.tasks.iter().enumerate() {
        if state.remaining[i] == 0 {
            continue;
        }
        let phase = match state.clocks[i] {
            TaskClock::Released(phase) => phase as i128,
            TaskClock::Unreleased { .. } => unreachable!("backlog implies a release"),
        };
        let pending = state.remaining[i].div_ceil(task.wcet) as i128;
        let head_remaining = ((state.remaining[i] - 1) % task.wcet + 1) as i128;
        let head_distance = task.deadline as i128 - phase - (pending - 1) * task.period as i128;
        for k in 0..pending {
            let distance = head_distance + k * task.period as i128;
            let earliest_finish = head_remaining + k * task.wcet as i128;
            if earliest_finish > distance {
                return Some(format!(
                    "task {} cannot finish {} ticks of work within {} ticks",
                    task.id, earliest_finish, distance
                ));
            }
            let work = if k == 0 {
                head_remaining
            } else {
                task.wcet as i128
            };
            due.push((distance, work));
        }
    }
    due.sort_unstable();
    let mut demand: i128 = 0;
    for &(distance, work) in &due {
        demand += work;
        if demand > system.processors as i128 * distance {
            return Some(format!(
                "{demand} ticks of work are due within {distance} ticks on {} processor{}",
                system.processors,
                if system.processors == 1 { "" } else { "s" }
            ));
        }
    }
    None
}

/// Every legal decision in `state`: subsets of the eligible tasks within
/// the processor count that contain all started non-preemptive jobs and
/// respect mutual exclusion, idling included.
fn legal_decisions(system: &TaskSystem, state: &SystemState) -> Vec<Vec<TaskId>> {
    let eligible = state.eligible_indices(system);
    let obligated = state.obligated_indices(system);
    let capacity = system.processors as usize;
    let excluded: Vec<(TaskId, TaskId)> = system
        .constraints
        .iter()
        .filter_map(|c| match c {
            crate::task::Constraint::Excludes { a, b } => Some((*a, *b)),
            _ => None,
        })
        .collect();

    let mut decisions = Vec::new();
    'mask: for mask in 0u32..(1 << eligible.len()) {
        let picked: Vec<usize> = eligible
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask & (1 << bit) != 0)
            .map(|(_, &i)| i)
            .collect();
        if picked.len() > capacity || !obligated.iter().all(|i| picked.contains(i)) {
            continue;
        }
        let ids: Vec<TaskId> = picked.iter().map(|&i| system.tasks[i].id).collect();
        for (a, b) in &excluded {
            if ids.contains(a) && ids.contains(b) {
                continue 'mask;
            }
        }
        decisions.push(ids);
    }
    decisions
}

/// Explores every schedule of `system` breadth-first, merging recurring
/// states, then marks as surviving exactly the vertices from which some
/// schedule meets all deadlines forever.
pub fn build_graph(system: &TaskSystem, vertex_cap: usize) -> Result<ScheduleGraph> {
    system.ensure_valid()?;
    if system.tasks.len() > 31 {
        return Err(Error::input("decision enumeration supports at most 31 tasks"));
    }

    let mut vertices: Vec<Vertex> = Vec::new();
    let mut index: HashMap<Vec<u8>, usize> = HashMap::new();
    let intern = |state: SystemState,
                      tick: Tick,
                      vertices: &mut Vec<Vertex>,
                      index: &mut HashMap<Vec<u8>, usize>|
     -> Result<usize> {
        let key = state.canonical_key();
        if let Some(&id) = index.get(&key) {
            return Ok(id);
        }
        if vertices.len() >= vertex_cap {
            return Err(Error::VertexCapExceeded { cap: vertex_cap });
        }
        let pruned = prune_reason(system, &state);
        vertices.push(Vertex {
            state,
            first_tick: tick,
            pruned,
            surviving: false,
            edges: Vec::new(),
        });
        index.insert(key, vertices.len() - 1);
        Ok(vertices.len() - 1)
    };

    let root = intern(
        SystemState::initial(system),
        0,
        &mut vertices,
        &mut index,
    )?;
    let mut queue = std::collections::VecDeque::new();
    if vertices[root].pruned.is_none() {
        queue.push_back(root);
    }
    while let Some(v) = queue.pop_front() {
        let state = vertices[v].state.clone();
        let tick = vertices[v].first_tick;
        let mut edges = Vec::new();
        for decision in legal_decisions(system, &state) {
            let (next, _) = step(system, &state, &decision, tick)?;
            let known = index.contains_key(&next.canonical_key());
            let to = intern(next, tick + 1, &mut vertices, &mut index)?;
            if !known && vertices[to].pruned.is_none() {
                queue.push_back(to);
            }
            edges.push(Edge { decision, to });
        }
        vertices[v].edges = edges;
    }

    // A vertex survives iff it is not pruned and can keep making progress
    // into surviving vertices forever; on a finite graph that is the
    // greatest fixpoint of "unpruned and has a surviving successor".
    let mut alive: Vec<bool> = vertices.iter().map(|v| v.pruned.is_none()).collect();
    loop {
        let mut changed = false;
        for (i, vertex) in vertices.iter().enumerate() {
            if alive[i] && !vertex.edges.iter().any(|e| alive[e.to]) {
                alive[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for (vertex, alive) in vertices.iter_mut().zip(alive) {
        vertex.surviving = alive;
    }

    Ok(ScheduleGraph {
        vertices,
        initial: root,
    })
}

impl ScheduleGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn surviving_count(&self) -> usize {
        self.vertices.iter().filter(|v| v.surviving).count()
    }

    pub fn pruned_count(&self) -> usize {
        self.vertices.iter().filter(|v| v.pruned.is_some()).count()
    }

    /// Looks up the vertex holding exactly this state.
    pub fn find_state(&self, state: &SystemState) -> Option<usize> {
        let key = state.canonical_key();
        self.vertices
            .iter()
            .position(|v| v.state.canonical_key() == key)
    }
}

struct PathSearch<'g> {
    graph: &'g ScheduleGraph,
    on_path: Vec<Option<usize>>,
    path: Vec<usize>,
    steps: u64,
}

impl PathSearch<'_> {
    fn budget(&mut self) -> Result<()> {
        self.steps += 1;
        if self.steps > SEARCH_STEP_BUDGET {
            Err(Error::SearchBudgetExceeded {
                budget: SEARCH_STEP_BUDGET,
            })
        } else {
            Ok(())
        }
    }
}

/// The longest cycle, transient, and revisit time over every walk of the
/// surviving subgraph that a deterministic memoryless scheduler can produce.
/// `None` when no feasible scheduler exists at all.
pub fn extremal_cycles(graph: &ScheduleGraph) -> Result<Option<Extremes>> {
    if !graph.vertices[graph.initial].surviving {
        return Ok(None);
    }
    let mut search = PathSearch {
        graph,
        on_path: vec![None; graph.vertices.len()],
        path: Vec::new(),
        steps: 0,
    };
    let mut best = Extremes {
        max_period: 0,
        max_transient: 0,
        max_revisit: 0,
        period_witness: Vec::new(),
        transient_witness: Vec::new(),
    };

    fn dfs(search: &mut PathSearch, v: usize, best: &mut Extremes) -> Result<()> {
        search.on_path[v] = Some(search.path.len());
        search.path.push(v);
        let edges = &search.graph.vertices[v].edges;
        for edge in edges {
            if !search.graph.vertices[edge.to].surviving {
                continue;
            }
            search.budget()?;
            if let Some(start) = search.on_path[edge.to] {
                let period = (search.path.len() - start) as Tick;
                let transient = start as Tick;
                if period > best.max_period {
                    best.max_period = period;
                    best.period_witness = search.path[start..].to_vec();
                }
                if transient > best.max_transient {
                    best.max_transient = transient;
                    best.transient_witness = search.path[..start].to_vec();
                }
                best.max_revisit = best.max_revisit.max(search.path.len() as Tick);
            } else {
                dfs(search, edge.to, best)?;
            }
        }
        search.path.pop();
        search.on_path[v] = None;
        Ok(())
    }

    dfs(&mut search, graph.initial, &mut best)?;
    Ok(Some(best))
}

/// Verifies that every deterministic memoryless scheduler that never misses
/// a deadline revisits a state within `bound` ticks. A walk revisits at the
/// tick equal to its vertex count, so it suffices that no simple path of the
/// surviving subgraph has more than `bound` vertices; when the whole
/// surviving subgraph is at most that large the answer is immediate.
pub fn verify_bound(graph: &ScheduleGraph, bound: Tick) -> Result<bool> {
    if !graph.vertices[graph.initial].surviving {
        return Ok(true);
    }
    if graph.surviving_count() as u64 <= bound {
        return Ok(true);
    }
    let mut search = PathSearch {
        graph,
        on_path: vec![None; graph.vertices.len()],
        path: Vec::new(),
        steps: 0,
    };

    fn dfs(search: &mut PathSearch, v: usize, bound: Tick) -> Result<bool> {
        search.on_path[v] = Some(search.path.len());
        search.path.push(v);
        if search.path.len() as Tick > bound {
            search.path.pop();
            search.on_path[v] = None;
            return Ok(false);
        }
        let edges = &search.graph.vertices[v].edges;
        for edge in edges {
            if !search.graph.vertices[edge.to].surviving || search.on_path[edge.to].is_some() {
                continue;
            }
            search.budget()?;
            if !dfs(search, edge.to, bound)? {
                return Ok(false);
            }
        }
        search.path.pop();
        search.on_path[v] = None;
        Ok(true)
    }

    dfs(&mut search, graph.initial, bound)
}

fn clock_label(clock: &TaskClock) -> String {
    match clock {
        TaskClock::Released(phase) => phase.to_string(),
        TaskClock::Unreleased { countdown } => format!("-{countdown}"),
    }
}

fn decision_label(decision: &[TaskId]) -> String {
    if decision.is_empty() {
        "idle".into()
    } else {
        decision
            .iter()
            .map(|id| id.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Renders the graph in DOT form, ranked by discovery tick. Edges that lead
/// back to an already-discovered state (the recurrences) are dashed; pruned
/// vertices are filled red, unpruned but doomed ones gray.
pub fn export_graph(graph: &ScheduleGraph) -> String {
    use std::collections::BTreeMap;
    use std::fmt::Write;

    let mut out = String::new();
    out.push_str("digraph schedules {\n  rankdir=LR;\n  node [shape=box, fontname=\"monospace\"];\n");
    let mut levels: BTreeMap<Tick, Vec<usize>> = BTreeMap::new();
    for (i, v) in graph.vertices.iter().enumerate() {
        levels.entry(v.first_tick).or_default().push(i);
    }
    for (i, v) in graph.vertices.iter().enumerate() {
        let backlog = v
            .state
            .remaining
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let clocks = v
            .state
            .clocks
            .iter()
            .map(clock_label)
            .collect::<Vec<_>>()
            .join(",");
        let mut label = format!("[{backlog}] @({clocks})");
        let mut style = String::new();
        if let Some(reason) = &v.pruned {
            label.push_str("\\n");
            label.push_str(reason);
            style = ", style=filled, fillcolor=\"#ffdddd\"".into();
        } else if !v.surviving {
            style = ", color=gray, fontcolor=gray".into();
        }
        if i == graph.initial {
            style.push_str(", penwidth=2");
        }
        let _ = writeln!(out, "  v{i} [label=\"{label}\"{style}];");
    }
    for (tick, members) in &levels {
        let names: Vec<String> = members.iter().map(|i| format!("v{i}")).collect();
        let _ = writeln!(
            out,
            "  {{ rank=same; /* tick {tick} */ {}; }}",
            names.join("; ")
        );
    }
    for (i, v) in graph.vertices.iter().enumerate() {
        for edge in &v.edges {
            let dashed = if graph.vertices[edge.to].first_tick <= v.first_tick {
                ", style=dashed"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "  v{i} -> v{} [label=\"{}\"{dashed}];",
                edge.to,
                decision_label(&edge.decision)
            );
        }
    }
    out.push_str("}\n");
    out
}
