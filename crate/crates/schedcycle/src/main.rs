//! Command-line front end: analytic bounds, scheduler simulation, exhaustive
//! enumeration, and Gantt rendering over JSON/CSV/DOT files.
//!
//! Exit codes: 0 success or feasible, 2 deadline miss (or bound/feasibility
//! check failed), 3 horizon or vertex budget exhausted, 4 input error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use schedcycle::bounds::bounds_report;
use schedcycle::cycle::{find_cycle, CycleConfig, CycleReport, Verdict};
use schedcycle::explore::{
    build_graph, export_graph, extremal_cycles, verify_bound, DEFAULT_VERTEX_CAP,
};
use schedcycle::gantt::{render_gantt, render_gantt_svg};
use schedcycle::io::{
    emit_bounds_report, emit_cycle_report, emit_explore_report, parse_cycle_report, parse_system,
    parse_trace_csv, write_events_csv, write_trace_csv, ExploreReport,
};
use schedcycle::policy::parse_scheduler;
use schedcycle::{Error, Result, TaskId, Tick};

#[derive(Parser)]
#[command(
    name = "schedcycle",
    version,
    about = "Simulation-interval analysis for periodic task systems",
    after_help = "Exit codes: 0 success/feasible, 2 deadline miss found, \
                  3 horizon exhausted, 4 input error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute analytic simulation-interval bounds for a task system.
    Bounds(BoundsArgs),
    /// Simulate a scheduler until a state revisit, a miss, or the horizon.
    Simulate(SimulateArgs),
    /// Enumerate every feasible schedule of a small system exhaustively.
    Enumerate(EnumerateArgs),
    /// Render a saved trace as a Gantt chart.
    Gantt(GanttArgs),
}

#[derive(Args)]
struct BoundsArgs {
    /// Task system description (JSON).
    system: PathBuf,
    /// Priority order for the rank-based bounds, highest first (task ids).
    #[arg(long, value_delimiter = ',')]
    priority: Vec<TaskId>,
    /// Also write the report to this file.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Task system description (JSON).
    system: PathBuf,
    /// Scheduler: edf, lrptf, fpp:rm, fpp:dm, fpp:explicit, or table:<file>.
    #[arg(long)]
    scheduler: String,
    /// Simulate at most this many ticks (default: analytic bound plus one
    /// hyperperiod, which provably suffices for feasible schedules).
    #[arg(long)]
    horizon: Option<Tick>,
    /// Stop at the first missed deadline instead of continuing the search.
    #[arg(long)]
    stop_on_miss: bool,
    /// Write the per-tick processor assignment as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write release/completion/miss events as CSV.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Write the cycle report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write a Gantt rendering of the trace.
    #[arg(long)]
    gantt: Option<PathBuf>,
    /// Render the Gantt output as SVG instead of text.
    #[arg(long)]
    svg: bool,
    /// Print the cycle report as JSON on stdout instead of a summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EnumerateArgs {
    /// Task system description (JSON).
    system: PathBuf,
    /// Abort after interning this many states.
    #[arg(long, default_value_t = DEFAULT_VERTEX_CAP)]
    vertex_cap: usize,
    /// Check that no feasible schedule revisits a state later than this.
    #[arg(long)]
    verify_bound: Option<Tick>,
    /// Write the reachability graph in DOT format.
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Write the enumeration report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print the enumeration report as JSON on stdout instead of a summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GanttArgs {
    /// Task system description (JSON).
    system: PathBuf,
    /// Trace CSV as written by `simulate --trace`.
    trace: PathBuf,
    /// Cycle report JSON; marks the transient/cycle boundary when given.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Render SVG instead of text.
    #[arg(long)]
    svg: bool,
    /// Write the rendering to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::VertexCapExceeded { .. } | Error::SearchBudgetExceeded { .. } => {
                    ExitCode::from(3)
                }
                _ => ExitCode::from(4),
            }
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Bounds(args) => run_bounds(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Enumerate(args) => run_enumerate(args),
        Command::Gantt(args) => run_gantt(args),
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

/// Output paths must be pairwise distinct or later writes clobber earlier
/// ones silently.
fn ensure_distinct(paths: &[Option<&PathBuf>]) -> Result<()> {
    let given: Vec<&PathBuf> = paths.iter().flatten().copied().collect();
    for (i, a) in given.iter().enumerate() {
        if given[i + 1..].contains(a) {
            return Err(Error::input(format!(
                "output path {} given twice",
                a.display()
            )));
        }
    }
    Ok(())
}

fn run_bounds(args: BoundsArgs) -> Result<ExitCode> {
    let system = parse_system(&read_file(&args.system)?)?;
    let priority = (!args.priority.is_empty()).then_some(args.priority.as_slice());
    let report = bounds_report(&system, priority)?;
    let text = emit_bounds_report(&report);
    if let Some(path) = &args.output {
        write_file(path, &text)?;
    }
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn verdict_exit(report: &CycleReport) -> ExitCode {
    match report.verdict {
        Verdict::HorizonExhausted => ExitCode::from(3),
        Verdict::MissFound => ExitCode::from(2),
        Verdict::CycleFound if report.feasible => ExitCode::SUCCESS,
        Verdict::CycleFound => ExitCode::from(2),
    }
}

fn run_simulate(args: SimulateArgs) -> Result<ExitCode> {
    ensure_distinct(&[
        args.trace.as_ref(),
        args.events.as_ref(),
        args.report.as_ref(),
        args.gantt.as_ref(),
    ])?;
    let system = parse_system(&read_file(&args.system)?)?;
    let scheduler = parse_scheduler(&args.scheduler)?;
    let config = CycleConfig {
        horizon: args.horizon,
        stop_on_miss: args.stop_on_miss,
    };
    let (report, trace) = find_cycle(&system, &scheduler, &config)?;

    if let Some(path) = &args.trace {
        write_file(path, &write_trace_csv(&trace))?;
    }
    if let Some(path) = &args.events {
        write_file(path, &write_events_csv(&trace.events))?;
    }
    if let Some(path) = &args.report {
        write_file(path, &emit_cycle_report(&report))?;
    }
    if let Some(path) = &args.gantt {
        let rendering = if args.svg {
            render_gantt_svg(&system, &trace, Some(&report))?
        } else {
            render_gantt(&system, &trace, Some(&report))?
        };
        write_file(path, &rendering)?;
    }

    if args.json {
        print!("{}", emit_cycle_report(&report));
    } else {
        let verdict = match report.verdict {
            Verdict::CycleFound => "cycle found",
            Verdict::MissFound => "deadline miss",
            Verdict::HorizonExhausted => "horizon exhausted",
        };
        println!("scheduler: {}", report.scheduler);
        println!("verdict: {verdict}");
        if let (Some(t), Some(p)) = (report.transient_len, report.period_len) {
            println!("transient: {t}");
            println!("period: {p}");
        }
        println!("feasible: {}", report.feasible);
        if let Some(idle) = report.steady_idle_slots {
            println!("steady idle slots: {idle}");
        }
        if let Some(miss) = &report.first_miss {
            println!("first miss: {} at tick {}", miss.job, miss.tick);
        }
    }
    Ok(verdict_exit(&report))
}

fn run_enumerate(args: EnumerateArgs) -> Result<ExitCode> {
    ensure_distinct(&[args.dot.as_ref(), args.report.as_ref()])?;
    let system = parse_system(&read_file(&args.system)?)?;
    let graph = build_graph(&system, args.vertex_cap)?;
    let extremes = extremal_cycles(&graph)?;
    let holds = args
        .verify_bound
        .map(|b| verify_bound(&graph, b))
        .transpose()?;

    let report = ExploreReport::new(&graph, extremes.as_ref(), args.verify_bound, holds);

    if let Some(path) = &args.dot {
        write_file(path, &export_graph(&graph))?;
    }
    let text = emit_explore_report(&report);
    if let Some(path) = &args.report {
        write_file(path, &text)?;
    }
    if args.json {
        print!("{text}");
    } else {
        println!(
            "vertices: {} (surviving {}, pruned {})",
            report.vertices, report.surviving, report.pruned
        );
        match &extremes {
            Some(e) => {
                println!("max period: {}", e.max_period);
                println!("max transient: {}", e.max_transient);
                println!("max revisit: {}", e.max_revisit);
            }
            None => println!("no feasible schedule exists"),
        }
        if let (Some(b), Some(h)) = (report.bound_checked, report.bound_holds) {
            println!("bound {b} holds: {h}");
        }
    }

    if !report.feasible || holds == Some(false) {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn run_gantt(args: GanttArgs) -> Result<ExitCode> {
    let system = parse_system(&read_file(&args.system)?)?;
    let trace = parse_trace_csv(&read_file(&args.trace)?)?;
    let report = args
        .report
        .as_ref()
        .map(|p| parse_cycle_report(&read_file(p)?))
        .transpose()?;
    let rendering = if args.svg {
        render_gantt_svg(&system, &trace, report.as_ref())?
    } else {
        render_gantt(&system, &trace, report.as_ref())?
    };
    match &args.output {
        Some(path) => write_file(path, &rendering)?,
        None => print!("{rendering}"),
    }
    Ok(ExitCode::SUCCESS)
}
