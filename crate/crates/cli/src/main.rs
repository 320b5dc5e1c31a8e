use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use newmark_bea::compensation::{
    damping_compensation, fourth_order_compensation, CompensationKind, FOURTH_ORDER_BETA, FOURTH_ORDER_GAMMA,
};
use newmark_bea::harness::{
    self, accuracy_runtime_benchmark, builtin, convergence_study, energy_trace, expectation_failures,
    relative_energy_drift, run_scenario, BenchOptions, Scenario,
};
use newmark_bea::integrators::reference_solution;
use newmark_bea::io::svg::{Axes, Plot, Series};
use newmark_bea::io::{self as nio, OutputFormat};
use newmark_bea::Method;

#[derive(Parser, Debug)]
#[command(
    name = "newmark",
    version,
    about = "Newmark integration, distorted equations and compensated systems",
    arg_required_else_help = true
)]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in scenario name instead of a file (see `newmark list`).
    #[arg(long, global = true, value_name = "NAME", conflicts_with = "config")]
    scenario: Option<String>,
    /// Output directory; overrides NEWMARK_OUT_DIR and the scenario file.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Fail with exit code 1 when a fitted slope misses its expected order.
    #[arg(long, global = true)]
    ci: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Svg,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Damping,
    FourthOrder,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate every method at the first time step and write trajectories.
    Run,
    /// Convergence study at t_eval over the time-step schedule.
    Converge,
    /// Total-energy traces of every method and of the reference solution.
    Energy,
    /// Accuracy against stepping time over the time-step schedule.
    Bench {
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Stop refining a method once its position error reaches this value.
        #[arg(long)]
        target: Option<f64>,
    },
    /// Write compensated damping and stiffness matrices (Matrix Market) and the compensated forcing.
    Compensate {
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Time step; defaults to the first step of the scenario.
        #[arg(long)]
        dt: Option<f64>,
        /// Newmark γ for damping compensation; defaults to the first Newmark method.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// List built-in scenarios and systems.
    List,
}

struct Context_ {
    scenario: Scenario,
    dir: PathBuf,
    formats: Vec<OutputFormat>,
    files: Vec<String>,
}

impl Context_ {
    fn wants(&self, f: OutputFormat) -> bool {
        self.formats.contains(&f)
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn plot(&mut self, name: &str, plot: &Plot<'_>) -> Result<()> {
        if self.wants(OutputFormat::Svg) {
            let w = self.create(name)?;
            plot.write(w)?;
        }
        Ok(())
    }

    fn finish(self, command: &str, mut extra: Map<String, Value>) -> Result<()> {
        extra.insert("command".into(), json!(command));
        extra.insert("scenario".into(), json!(self.scenario.name));
        extra.insert("files".into(), json!(self.files));
        nio::write_manifest(&self.dir, extra)?;
        println!("wrote {} file(s) to {}", self.files.len() + 1, self.dir.display());
        Ok(())
    }
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn load(cli: &Cli) -> Result<Context_> {
    let (scenario, output) = match (&cli.config, &cli.scenario) {
        (Some(path), _) => {
            let l = nio::load_scenario(path).with_context(|| format!("loading {}", path.display()))?;
            (l.scenario, l.output)
        }
        (None, Some(name)) => (builtin::scenario(name)?, nio::config::OutputSection::default()),
        (None, None) => {
            Cli::command()
                .error(
                    clap::error::ErrorKind::MissingRequiredArgument,
                    "one of --config <PATH> or --scenario <NAME> is required",
                )
                .exit();
        }
    };
    let dir = nio::output_directory(cli.out.as_deref(), &output.directory);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let formats = match cli.format {
        Some(FormatArg::Csv) => vec![OutputFormat::Csv],
        Some(FormatArg::Svg) => vec![OutputFormat::Svg],
        Some(FormatArg::Both) => vec![OutputFormat::Csv, OutputFormat::Svg],
        None => output.formats,
    };
    Ok(Context_ {
        scenario,
        dir,
        formats,
        files: Vec::new(),
    })
}

fn cmd_run(mut ctx: Context_) -> Result<bool> {
    let runs = run_scenario(&ctx.scenario)?;
    let sys = ctx.scenario.system.clone();
    for r in &runs {
        println!(
            "{}: {} steps of {} in {:.3}s",
            r.spec.label,
            r.trajectory.len().saturating_sub(1),
            r.dt,
            r.wall_time.as_secs_f64()
        );
        if ctx.wants(OutputFormat::Csv) {
            let w = ctx.create(&format!("trajectory-{}.csv", file_label(&r.spec.label)))?;
            r.trajectory.write_csv(&sys, w)?;
        }
    }
    let curves: Vec<(String, Vec<(f64, f64)>)> = runs
        .iter()
        .map(|r| (r.spec.label.clone(), r.trajectory.states.iter().map(|s| (s.t, s.q[0])).collect()))
        .collect();
    let plot = Plot {
        title: "first position component",
        x_label: "t",
        y_label: "q_1",
        axes: Axes::Linear,
        series: curves.iter().map(|(l, p)| Series { label: l, points: p }).collect(),
    };
    if !curves.is_empty() {
        ctx.plot("run.svg", &plot)?;
    }
    let dt = runs.first().map(|r| r.dt);
    ctx.finish("run", Map::from_iter([("dt".to_string(), json!(dt))]))?;
    Ok(true)
}

fn cmd_converge(mut ctx: Context_, ci: bool) -> Result<bool> {
    let report = convergence_study(&ctx.scenario)?;
    for f in &report.fits {
        let show = |s: Option<f64>| s.map_or("n/a".to_string(), |s| format!("{s:.3}"));
        println!("{}: slope q {}, slope v {}", f.label, show(f.slope_q), show(f.slope_v));
    }
    if ctx.wants(OutputFormat::Csv) {
        let w = ctx.create("report.csv")?;
        report.write_csv(w)?;
    }
    let mut curves: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for f in &report.fits {
        for (var, pick) in [("q", true), ("v", false)] {
            let pts = report
                .rows_for(&f.label)
                .map(|r| (r.dt, if pick { r.error_q } else { r.error_v }))
                .collect();
            curves.push((format!("{} {var}", f.label), pts));
        }
    }
    let plot = Plot {
        title: "error at t_eval",
        x_label: "log2 dt",
        y_label: "log2 error",
        axes: Axes::LogLog,
        series: curves.iter().map(|(l, p)| Series { label: l, points: p }).collect(),
    };
    if !curves.is_empty() {
        ctx.plot("report.svg", &plot)?;
    }
    let failures = expectation_failures(&ctx.scenario, &report);
    for f in &failures {
        eprintln!("slope check failed: {f}");
    }
    ctx.finish("converge", Map::new())?;
    Ok(!ci || failures.is_empty())
}

fn cmd_energy(mut ctx: Context_) -> Result<bool> {
    let runs = run_scenario(&ctx.scenario)?;
    let sys = ctx.scenario.system.clone();
    let mut traces = Vec::new();
    for r in &runs {
        traces.push((r.spec.label.clone(), energy_trace(&r.trajectory, &sys)?));
    }
    if let Some(dt) = runs.first().map(|r| r.dt) {
        let reference = reference_solution(&sys, dt, ctx.scenario.t_end)?;
        traces.push(("reference".to_string(), energy_trace(&reference, &sys)?));
    }
    for (label, t) in &traces {
        println!("{label}: relative energy drift {:.3e}", relative_energy_drift(t));
    }
    if ctx.wants(OutputFormat::Csv) {
        let w = ctx.create("energy.csv")?;
        let refs: Vec<(&str, &[(f64, f64)])> = traces.iter().map(|(l, t)| (l.as_str(), t.as_slice())).collect();
        harness::write_energy_csv(&refs, w)?;
    }
    let plot = Plot {
        title: "total energy",
        x_label: "t",
        y_label: "E",
        axes: Axes::Linear,
        series: traces.iter().map(|(l, p)| Series { label: l, points: p }).collect(),
    };
    if !traces.is_empty() {
        ctx.plot("energy.svg", &plot)?;
    }
    ctx.finish("energy", Map::new())?;
    Ok(true)
}

fn cmd_bench(mut ctx: Context_, repeats: usize, target: Option<f64>) -> Result<bool> {
    if repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    let rows = accuracy_runtime_benchmark(&ctx.scenario, BenchOptions { repeats, target })?;
    for r in &rows {
        println!(
            "{}: dt {:.4e}, {} steps, error q {:.3e}, stepping {:.4}s ({:.2}us/step), construction {:.4}s",
            r.label,
            r.dt,
            r.steps,
            r.error_q,
            r.wall_time.as_secs_f64(),
            r.per_step().as_secs_f64() * 1e6,
            r.construction_time.as_secs_f64()
        );
    }
    if ctx.wants(OutputFormat::Csv) {
        let w = ctx.create("bench.csv")?;
        harness::write_bench_csv(&rows, w)?;
    }
    let mut labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    labels.dedup();
    let curves: Vec<(&str, Vec<(f64, f64)>)> = labels
        .iter()
        .map(|&l| {
            let pts = rows
                .iter()
                .filter(|r| r.label == l)
                .map(|r| (r.wall_time.as_secs_f64(), r.error_q))
                .collect();
            (l, pts)
        })
        .collect();
    let plot = Plot {
        title: "error against stepping time",
        x_label: "log2 wall time [s]",
        y_label: "log2 error",
        axes: Axes::LogLog,
        series: curves.iter().map(|(l, p)| Series { label: l, points: p }).collect(),
    };
    if !curves.is_empty() {
        ctx.plot("bench.svg", &plot)?;
    }
    ctx.finish("bench", Map::from_iter([("repeats".to_string(), json!(repeats))]))?;
    Ok(true)
}

fn cmd_compensate(
    mut ctx: Context_,
    kind: KindArg,
    dt: Option<f64>,
    gamma: Option<f64>,
    beta: Option<f64>,
) -> Result<bool> {
    let s = &ctx.scenario;
    let dt = match dt {
        Some(dt) => dt,
        None => *s.schedule.dts().first().context("scenario has no time step")?,
    };
    let first_newmark = s.methods.iter().find_map(|m| match m.method {
        Method::Newmark { gamma, beta } => Some((gamma, beta)),
        _ => None,
    });
    let sys = s.system.clone();
    let comp = match kind {
        KindArg::FourthOrder => {
            let g = gamma.unwrap_or(FOURTH_ORDER_GAMMA);
            let b = beta.unwrap_or(FOURTH_ORDER_BETA);
            if g != FOURTH_ORDER_GAMMA || b != FOURTH_ORDER_BETA {
                return Err(newmark_bea::Error::CompensationMismatch { gamma: g, beta: b }.into());
            }
            fourth_order_compensation(&sys, dt)?
        }
        KindArg::Damping => {
            let (g, b) = match (gamma, beta, first_newmark) {
                (Some(g), Some(b), _) => (g, b),
                (None, None, Some(p)) => p,
                _ => bail!("damping compensation needs --gamma and --beta or a Newmark method in the scenario"),
            };
            damping_compensation(&sys, g, b, dt)?
        }
    };
    nio::write_matrix_market(&comp.damping, ctx.create("damping.mtx")?)?;
    nio::write_matrix_market(&comp.stiffness, ctx.create("stiffness.mtx")?)?;
    if ctx.wants(OutputFormat::Csv) {
        use std::io::Write;
        let steps = newmark_bea::integrators::step_count(ctx.scenario.t_end, dt)?;
        let n = sys.n();
        let mut w = ctx.create("forcing.csv")?;
        let header: Vec<String> = (1..=n).map(|i| format!("f_{i}")).collect();
        writeln!(w, "t,{}", header.join(","))?;
        for j in 0..=steps {
            let t = j as f64 * dt;
            let f = comp.forcing.value(t)?;
            let vals: Vec<String> = f.iter().map(|x| format!("{x:e}")).collect();
            writeln!(w, "{t:e},{}", vals.join(","))?;
        }
    }
    let kind_name = match comp.kind {
        CompensationKind::Damping => "damping",
        CompensationKind::FourthOrder => "fourth-order",
        CompensationKind::None => "none",
    };
    println!(
        "{kind_name} compensation for dt = {dt}, gamma = {}, beta = {}",
        comp.gamma, comp.beta
    );
    let extra = Map::from_iter([
        ("kind".to_string(), json!(kind_name)),
        ("dt".to_string(), json!(dt)),
        ("gamma".to_string(), json!(comp.gamma)),
        ("beta".to_string(), json!(comp.beta)),
    ]);
    ctx.finish("compensate", extra)?;
    Ok(true)
}

fn run(cli: &Cli) -> Result<bool> {
    if let Command::List = cli.command {
        println!("scenarios:");
        for name in builtin::SCENARIO_NAMES {
            println!("  {name}");
        }
        println!("systems:");
        for name in builtin::SYSTEM_NAMES {
            println!("  {name}");
        }
        return Ok(true);
    }
    let ctx = load(cli)?;
    match &cli.command {
        Command::Run => cmd_run(ctx),
        Command::Converge => cmd_converge(ctx, cli.ci),
        Command::Energy => cmd_energy(ctx),
        Command::Bench { repeats, target } => cmd_bench(ctx, *repeats, *target),
        Command::Compensate { kind, dt, gamma, beta } => cmd_compensate(ctx, *kind, *dt, *gamma, *beta),
        Command::List => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
