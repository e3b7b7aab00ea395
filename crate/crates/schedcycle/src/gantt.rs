//! Gantt rendering of schedule traces, as monospace text or SVG.
//!
//! Both renderers draw one row per processor with cells labeled by task id,
//! then one marker row per task carrying its release and deadline instants
//! (deadline misses highlighted), and, when a recurrence report is supplied,
//! the boundary between the transient prefix and the repeating cycle. All
//! output is deterministic byte for byte.

use std::fmt::Write as _;

use crate::cycle::CycleReport;
use crate::error::Result;
use crate::sim::{check_deadlines, released_jobs, ScheduleTrace};
use crate::task::{TaskSystem, Tick};

/// Marker for one instant on a task's timeline.
#[derive(Clone, Copy, PartialEq)]
enum Mark {
    Release,
    Deadline,
    Both,
    Miss,
}

impl Mark {
    fn glyph(self) -> char {
        match self {
            Mark::Release => 'r',
            Mark::Deadline => 'd',
            Mark::Both => 'b',
            Mark::Miss => 'x',
        }
    }
}

/// Release/deadline/miss markers per task, indexed by instant `0..=horizon`.
/// Derived from the system's arithmetic and the assignment rows alone, so
/// traces loaded from CSV (which carry no events) render identically to
/// freshly simulated ones.
fn task_marks(system: &TaskSystem, trace: &ScheduleTrace) -> Result<Vec<Vec<Option<Mark>>>> {
    let instants = trace.horizon as usize + 1;
    let mut marks = vec![vec![None; instants]; system.tasks.len()];
    for (i, task) in system.tasks.iter().enumerate() {
        for j in 0..released_jobs(task.offset, task.period, trace.horizon) {
            let release = task.offset as u128 + j * task.period as u128;
            if release <= trace.horizon as u128 {
                let slot = &mut marks[i][release as usize];
                *slot = Some(if slot.is_some() { Mark::Both } else { Mark::Release });
            }
            let deadline = release + task.deadline as u128;
            if deadline <= trace.horizon as u128 {
                let slot = &mut marks[i][deadline as usize];
                *slot = Some(if slot.is_some() { Mark::Both } else { Mark::Deadline });
            }
        }
    }
    for miss in check_deadlines(system, trace)? {
        marks[system.index_of(miss.job.task)][miss.tick as usize] = Some(Mark::Miss);
    }
    Ok(marks)
}

fn phase_note(report: &CycleReport) -> Option<String> {
    match (report.transient_len, report.period_len) {
        (Some(t), Some(p)) => Some(format!(
            "transient [0, {t}), cycle [{t}, {}) repeating forever",
            t + p
        )),
        _ => report.first_miss.map(|miss| {
            format!(
                "first missed deadline: task {} job {} at tick {}",
                miss.job.task, miss.job.index, miss.tick
            )
        }),
    }
}

/// Renders the trace as monospace text.
pub fn render_gantt(
    system: &TaskSystem,
    trace: &ScheduleTrace,
    report: Option<&CycleReport>,
) -> Result<String> {
    let marks = task_marks(system, trace)?;
    let width = system
        .tasks
        .iter()
        .map(|t| t.id.to_string().len() + 1)
        .max()
        .unwrap_or(2)
        .max(2);
    let label_width = system
        .tasks
        .iter()
        .map(|t| format!("task {}", t.id).len())
        .chain((0..trace.processors).map(|c| format!("cpu{c}").len()))
        .chain(["tick".len()])
        .max()
        .unwrap_or(4)
        + 2;
    let ticks = trace.horizon as usize;
    let line_len = label_width + width * (ticks + 1);

    fn line(grid: &mut Vec<Vec<u8>>, line_len: usize, label: &str) -> usize {
        let mut row = vec![b' '; line_len];
        row[..label.len()].copy_from_slice(label.as_bytes());
        grid.push(row);
        grid.len() - 1
    }
    let mut grid: Vec<Vec<u8>> = Vec::new();

    let header = line(&mut grid, line_len, "tick");
    let mut t = 0;
    while t <= ticks {
        let text = t.to_string();
        let at = label_width + width * t;
        grid[header][at..at + text.len()].copy_from_slice(text.as_bytes());
        t += 5;
    }
    for cpu in 0..trace.processors as usize {
        let row = line(&mut grid, line_len, &format!("cpu{cpu}"));
        for (t, cells) in trace.rows.iter().enumerate() {
            let at = label_width + width * t;
            match cells[cpu] {
                Some(id) => {
                    let text = id.to_string();
                    grid[row][at..at + text.len()].copy_from_slice(text.as_bytes());
                }
                None => grid[row][at] = b'.',
            }
        }
    }
    for (i, task) in system.tasks.iter().enumerate() {
        let row = line(&mut grid, line_len, &format!("task {}", task.id));
        for (instant, mark) in marks[i].iter().enumerate() {
            if let Some(mark) = mark {
                grid[row][label_width + width * instant] = mark.glyph() as u8;
            }
        }
    }
    if let Some(report) = report {
        if let (Some(t), Some(p)) = (report.transient_len, report.period_len) {
            let row = line(&mut grid, line_len, "cycle");
            for (instant, glyph) in [(t, b'['), (t + p, b')')] {
                if instant <= ticks as Tick {
                    grid[row][label_width + width * instant as usize] = glyph;
                }
            }
        }
    }

    let mut out = String::new();
    for row in grid {
        let text = String::from_utf8(row).expect("ascii grid");
        out.push_str(text.trim_end());
        out.push('\n');
    }
    if let Some(note) = report.and_then(phase_note) {
        out.push_str(&note);
        out.push('\n');
    }
    Ok(out)
}

fn task_color(id: u32) -> String {
    format!("hsl({}, 65%, 72%)", (id as u64 * 67) % 360)
}

/// Renders the trace as a standalone SVG document.
pub fn render_gantt_svg(
    system: &TaskSystem,
    trace: &ScheduleTrace,
    report: Option<&CycleReport>,
) -> Result<String> {
    let marks = task_marks(system, trace)?;
    const CELL_W: usize = 16;
    const ROW_H: usize = 22;
    const LEFT: usize = 72;
    const TOP: usize = 24;
    let rows = trace.processors as usize + system.tasks.len();
    let width = LEFT + CELL_W * (trace.horizon as usize + 1) + 8;
    let height = TOP + ROW_H * rows + 28;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"monospace\" font-size=\"11\">"
    );
    let _ = writeln!(svg, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");

    // Tick ruler.
    let mut t = 0;
    while t <= trace.horizon as usize {
        let x = LEFT + CELL_W * t;
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{}\" fill=\"#555\">{t}</text>",
            TOP - 8
        );
        t += 5;
    }

    for cpu in 0..trace.processors as usize {
        let y = TOP + ROW_H * cpu;
        let _ = writeln!(
            svg,
            "<text x=\"4\" y=\"{}\" fill=\"#000\">cpu{cpu}</text>",
            y + ROW_H - 7
        );
        for (t, cells) in trace.rows.iter().enumerate() {
            if let Some(id) = cells[cpu] {
                let x = LEFT + CELL_W * t;
                let _ = writeln!(
                    svg,
                    "<rect x=\"{x}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\" \
                     stroke=\"#666\"/>",
                    y + 3,
                    CELL_W,
                    ROW_H - 6,
                    task_color(id)
                );
                let _ = writeln!(
                    svg,
                    "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{id}</text>",
                    x + CELL_W / 2,
                    y + ROW_H - 7
                );
            }
        }
    }

    for (i, task) in system.tasks.iter().enumerate() {
        let y = TOP + ROW_H * (trace.processors as usize + i);
        let mid = y + ROW_H / 2;
        let _ = writeln!(
            svg,
            "<text x=\"4\" y=\"{}\" fill=\"#000\">task {}</text>",
            y + ROW_H - 7,
            task.id
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{LEFT}\" y1=\"{mid}\" x2=\"{}\" y2=\"{mid}\" stroke=\"#ccc\"/>",
            LEFT + CELL_W * (trace.horizon as usize + 1)
        );
        for (instant, mark) in marks[i].iter().enumerate() {
            let Some(mark) = mark else { continue };
            let x = LEFT + CELL_W * instant;
            match mark {
                Mark::Release | Mark::Both => {
                    let _ = writeln!(
                        svg,
                        "<path d=\"M{} {} L{} {} L{} {} Z\" fill=\"#2a7\"/>",
                        x - 4,
                        mid + 5,
                        x + 4,
                        mid + 5,
                        x,
                        mid - 3
                    );
                }
                _ => {}
            }
            match mark {
                Mark::Deadline | Mark::Both => {
                    let _ = writeln!(
                        svg,
                        "<path d=\"M{} {} L{} {} L{} {} Z\" fill=\"#36c\"/>",
                        x - 4,
                        mid - 5,
                        x + 4,
                        mid - 5,
                        x,
                        mid + 3
                    );
                }
                Mark::Miss => {
                    let _ = writeln!(
                        svg,
                        "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" fill=\"#c22\" \
                         font-weight=\"bold\">x</text>",
                        mid + 4
                    );
                }
                _ => {}
            }
        }
    }

    if let Some(report) = report {
        if let (Some(t), Some(p)) = (report.transient_len, report.period_len) {
            for boundary in [t, t + p] {
                if boundary <= trace.horizon {
                    let x = LEFT + CELL_W * boundary as usize;
                    let _ = writeln!(
                        svg,
                        "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#36c\" \
                         stroke-dasharray=\"4 3\"/>",
                        TOP - 4,
                        TOP + ROW_H * rows + 4
                    );
                }
            }
        }
        if let Some(note) = phase_note(report) {
            let _ = writeln!(
                svg,
                "<text x=\"4\" y=\"{}\" fill=\"#333\">{note}</text>",
                height - 10
            );
        }
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}
