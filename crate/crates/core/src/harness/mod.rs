//! Scenario runner: method comparisons, convergence studies, energy traces
//! and the accuracy-versus-runtime benchmark.

pub mod builtin;
pub mod exact;

use std::io::Write;
use std::time::{Duration, Instant};

use crate::bea::{distorted_system, DistortionCoefficients, DvfField};
use crate::compensation::{damping_compensation, fourth_order_compensation, CompensationKind};
use crate::error::{Error, Result};
use crate::integrators::{
    final_state, integrate, reference_solution, reference_solution_with, rk4_integrate, step_count, Method,
    State, StepperConfig, Trajectory, REFERENCE_REFINEMENT,
};
use crate::linalg::Vector;
use crate::model::{total_energy, SecondOrderSystem};

pub use exact::ExactFn;

/// What errors are measured against.
#[derive(Clone)]
pub enum Reference {
    /// RK4 at 1/100 of each working step.
    FineRk4,
    /// Closed-form `(q, v)` at a given time.
    Exact(ExactFn),
}

impl std::fmt::Debug for Reference {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Reference::FineRk4 => f.write_str("FineRk4"),
            Reference::Exact(_) => f.write_str("Exact(..)"),
        }
    }
}

impl Reference {
    /// Reference state at `t`, a multiple of `dt`.
    pub fn state_at(&self, sys: &SecondOrderSystem, dt: f64, t: f64) -> Result<(Vector, Vector)> {
        match self {
            Reference::FineRk4 => {
                let r = reference_solution(sys, dt, t)?;
                let s = r.last();
                Ok((s.q.clone(), s.v.clone()))
            }
            Reference::Exact(f) => f(t),
        }
    }
}

/// Expected observed order of a method, checked in CI mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expectation {
    pub order: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodSpec {
    pub label: String,
    pub method: Method,
    pub compensation: CompensationKind,
    pub expect: Option<Expectation>,
}

impl MethodSpec {
    pub fn new(label: impl Into<String>, method: Method) -> Self {
        MethodSpec {
            label: label.into(),
            method,
            compensation: CompensationKind::None,
            expect: None,
        }
    }

    pub fn compensated(mut self, kind: CompensationKind) -> Self {
        self.compensation = kind;
        self
    }

    pub fn expect_order(mut self, order: f64, tolerance: f64) -> Self {
        self.expect = Some(Expectation { order, tolerance });
        self
    }

    /// The system actually stepped at `dt` and the time spent building it.
    pub fn prepare(&self, sys: &SecondOrderSystem, dt: f64) -> Result<(SecondOrderSystem, Duration)> {
        let start = Instant::now();
        let comp = match self.compensation {
            CompensationKind::None => return Ok((sys.clone(), Duration::ZERO)),
            CompensationKind::Damping => match self.method {
                Method::Newmark { gamma, beta } => damping_compensation(sys, gamma, beta, dt)?,
                other => {
                    return Err(Error::Unsupported(format!(
                        "damping compensation needs a Newmark method, not {other}"
                    )))
                }
            },
            CompensationKind::FourthOrder => fourth_order_compensation(sys, dt)?,
        };
        comp.check_method(&self.method, dt)?;
        let out = comp.system()?;
        Ok((out, start.elapsed()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DtSchedule {
    /// `start, start/2, …` with `halvings` halvings.
    Halving { start: f64, halvings: usize },
    List(Vec<f64>),
}

impl DtSchedule {
    pub fn dts(&self) -> Vec<f64> {
        match self {
            DtSchedule::Halving { start, halvings } => (0..=*halvings).map(|k| start / 2f64.powi(k as i32)).collect(),
            DtSchedule::List(v) => v.clone(),
        }
    }
}

/// What a convergence study measures errors against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Study {
    /// The scenario's reference solution.
    #[default]
    Reference,
    /// The distorted vector field and distorted system of each Newmark
    /// method; rows are labelled `<label>/field` and `<label>/system`.
    Distortion,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub system: SecondOrderSystem,
    pub methods: Vec<MethodSpec>,
    pub t_end: f64,
    pub t_eval: f64,
    pub schedule: DtSchedule,
    pub reference: Reference,
    pub study: Study,
}

impl Scenario {
    pub fn new(name: impl Into<String>, system: SecondOrderSystem) -> Self {
        Scenario {
            name: name.into(),
            system,
            methods: Vec::new(),
            t_end: 1.0,
            t_eval: 1.0,
            schedule: DtSchedule::List(vec![0.1]),
            reference: Reference::FineRk4,
            study: Study::Reference,
        }
    }

    pub fn study(mut self, study: Study) -> Self {
        self.study = study;
        self
    }

    pub fn methods(mut self, methods: Vec<MethodSpec>) -> Self {
        self.methods = methods;
        self
    }

    pub fn times(mut self, t_end: f64, t_eval: f64) -> Self {
        self.t_end = t_end;
        self.t_eval = t_eval;
        self
    }

    pub fn schedule(mut self, schedule: DtSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn reference(mut self, reference: Reference) -> Self {
        self.reference = reference;
        self
    }

    fn first_dt(&self) -> Result<f64> {
        self.schedule
            .dts()
            .first()
            .copied()
            .ok_or_else(|| Error::Config(format!("scenario {:?} has no time step", self.name)))
    }
}

#[derive(Clone, Debug)]
pub struct MethodRun {
    pub spec: MethodSpec,
    pub dt: f64,
    /// The system that was stepped (compensated when requested).
    pub simulated: SecondOrderSystem,
    pub trajectory: Trajectory,
    pub wall_time: Duration,
    pub construction_time: Duration,
}

pub fn run_method(sys: &SecondOrderSystem, spec: &MethodSpec, dt: f64, t_end: f64) -> Result<MethodRun> {
    let (simulated, construction_time) = spec.prepare(sys, dt)?;
    let cfg = StepperConfig::new(dt, spec.method)?;
    let start = Instant::now();
    let trajectory = integrate(&simulated, &cfg, t_end)?;
    Ok(MethodRun {
        spec: spec.clone(),
        dt,
        simulated,
        trajectory,
        wall_time: start.elapsed(),
        construction_time,
    })
}

/// Runs every method, in order, at the first step of the schedule up to `t_end`.
pub fn run_scenario(s: &Scenario) -> Result<Vec<MethodRun>> {
    if s.methods.is_empty() {
        return Ok(Vec::new());
    }
    let dt = s.first_dt()?;
    s.methods.iter().map(|m| run_method(&s.system, m, dt, s.t_end)).collect()
}

/// Least-squares slope of `log₂ e` against `log₂ Δt`.
pub fn observed_order(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter("observed order needs at least two points".into()));
    }
    if let Some(&(h, e)) = points.iter().find(|&&(h, e)| !(e > 0.0 && h > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-positive error {e} at dt = {h}")));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("observed order needs distinct step sizes".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub label: String,
    pub dt: f64,
    pub error_q: f64,
    pub error_v: f64,
    /// Set from the first row whose error fails to decrease; such rows are
    /// left out of the slope fit.
    pub floor_q: bool,
    pub floor_v: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    pub label: String,
    pub slope_q: Option<f64>,
    pub slope_v: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub fits: Vec<SlopeFit>,
}

impl ConvergenceReport {
    pub fn fit(&self, label: &str) -> Option<&SlopeFit> {
        self.fits.iter().find(|f| f.label == label)
    }

    pub fn rows_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a ConvergenceRow> + 'a {
        self.rows.iter().filter(move |r| r.label == label)
    }

    /// Builds rows and fits from raw `(Δt, e_q, e_v)` triples of one method,
    /// ordered by decreasing `Δt`.
    pub fn push_method(&mut self, label: &str, errors: &[(f64, f64, f64)]) {
        let floor_q = floor_flags(errors.iter().map(|e| e.1));
        let floor_v = floor_flags(errors.iter().map(|e| e.2));
        let fit = |sel: fn(&(f64, f64, f64)) -> f64, flags: &[bool]| {
            let pts: Vec<(f64, f64)> = errors
                .iter()
                .zip(flags)
                .filter(|(_, &f)| !f)
                .map(|(e, _)| (e.0, sel(e)))
                .collect();
            observed_order(&pts).ok()
        };
        self.fits.push(SlopeFit {
            label: label.to_string(),
            slope_q: fit(|e| e.1, &floor_q),
            slope_v: fit(|e| e.2, &floor_v),
        });
        for (i, &(dt, eq, ev)) in errors.iter().enumerate() {
            self.rows.push(ConvergenceRow {
                label: label.to_string(),
                dt,
                error_q: eq,
                error_v: ev,
                floor_q: floor_q[i],
                floor_v: floor_v[i],
            });
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "method,dt,error_q,error_v,floor_q,floor_v")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.label,
                fmt_f64(r.dt),
                fmt_f64(r.error_q),
                fmt_f64(r.error_v),
                r.floor_q,
                r.floor_v
            )?;
        }
        Ok(())
    }
}

/// Sticky flag: true from the first entry that is not strictly below its
/// predecessor (or is not a positive finite number).
fn floor_flags(errors: impl Iterator<Item = f64>) -> Vec<bool> {
    let mut out = Vec::new();
    let mut prev = f64::INFINITY;
    let mut hit = false;
    for e in errors {
        hit = hit || !(e > 0.0 && e.is_finite() && e < prev);
        out.push(hit);
        prev = e;
    }
    out
}

fn deviation(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm()
}

/// Errors at `t_eval` of every method for every step in the schedule.
pub fn convergence_study(s: &Scenario) -> Result<ConvergenceReport> {
    let dts = s.schedule.dts();
    if dts.len() < 4 {
        return Err(Error::Config(format!(
            "a convergence study needs at least 4 time steps, got {}",
            dts.len()
        )));
    }
    if s.study == Study::Distortion {
        let mut report = ConvergenceReport::default();
        for m in &s.methods {
            let Method::Newmark { gamma, beta } = m.method else {
                return Err(Error::Unsupported(format!("distortion study needs Newmark methods, not {}", m.method)));
            };
            if m.compensation != CompensationKind::None {
                return Err(Error::Unsupported("distortion study of a compensated system".into()));
            }
            let rows = distortion_deviation_study(&s.system, gamma, beta, &dts, s.t_eval)?;
            for (suffix, pick) in [
                ("field", (|d: &DistortionDeviation| (d.dt, d.field_q, d.field_v)) as fn(&DistortionDeviation) -> _),
                ("system", |d: &DistortionDeviation| (d.dt, d.system_q, d.system_v)),
            ] {
                let errors: Vec<_> = rows.iter().map(pick).collect();
                report.push_method(&format!("{}/{suffix}", m.label), &errors);
            }
        }
        return Ok(report);
    }
    let mut references = Vec::with_capacity(dts.len());
    for &dt in &dts {
        references.push(s.reference.state_at(&s.system, dt, s.t_eval)?);
    }
    let mut report = ConvergenceReport::default();
    for m in &s.methods {
        let mut errors = Vec::with_capacity(dts.len());
        for (&dt, (rq, rv)) in dts.iter().zip(&references) {
            let (sys, _) = m.prepare(&s.system, dt)?;
            let state = final_state(&sys, &StepperConfig::new(dt, m.method)?, s.t_eval)?;
            errors.push((dt, deviation(&state.q, rq), deviation(&state.v, rv)));
        }
        report.push_method(&m.label, &errors);
    }
    Ok(report)
}

/// Methods whose fitted slopes miss their expectation, one message each.
/// Distortion-study rows match the expectation of their method.
pub fn expectation_failures(s: &Scenario, report: &ConvergenceReport) -> Vec<String> {
    let mut out = Vec::new();
    for fit in &report.fits {
        let base = fit.label.split('/').next().unwrap_or(&fit.label);
        let Some(exp) = s.methods.iter().find(|m| m.label == base).and_then(|m| m.expect) else {
            continue;
        };
        for (var, slope) in [("q", fit.slope_q), ("v", fit.slope_v)] {
            match slope {
                Some(p) if (p - exp.order).abs() <= exp.tolerance => {}
                Some(p) => out.push(format!(
                    "{} {var}: slope {p:.3}, expected {}±{}",
                    fit.label, exp.order, exp.tolerance
                )),
                None => out.push(format!("{} {var}: no slope could be fitted", fit.label)),
            }
        }
    }
    out
}

/// Deviation at `t_eval` between Newmark iterates and the solutions of the
/// truncated distorted vector field and of the distorted second-order system,
/// both integrated with RK4 at `Δt / refinement`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistortionDeviation {
    pub dt: f64,
    pub field_q: f64,
    pub field_v: f64,
    pub system_q: f64,
    pub system_v: f64,
}

pub fn distortion_deviation_study(
    sys: &SecondOrderSystem,
    gamma: f64,
    beta: f64,
    dts: &[f64],
    t_eval: f64,
) -> Result<Vec<DistortionDeviation>> {
    dts.iter()
        .map(|&dt| {
            let steps = step_count(t_eval, dt)?;
            let newmark = final_state(sys, &StepperConfig::new(dt, Method::Newmark { gamma, beta })?, t_eval)?;

            let field = DvfField::new(DistortionCoefficients::new(sys, gamma, beta, dt)?);
            let ys = rk4_integrate(&field, &field.initial_state(), dt, steps, REFERENCE_REFINEMENT)?;
            let (fq, fv) = field.split(ys.last().expect("rk4 output holds the initial state"));

            let distorted = distorted_system(sys, gamma, beta, dt)?;
            let r = reference_solution_with(&distorted.to_system()?, dt, t_eval, REFERENCE_REFINEMENT)?;
            let end = r.last();
            let sv = distorted.velocity_from_rate(end.t, &end.q, &end.v)?;
            Ok(DistortionDeviation {
                dt,
                field_q: deviation(&newmark.q, &fq),
                field_v: deviation(&newmark.v, &fv),
                system_q: deviation(&newmark.q, &end.q),
                system_v: deviation(&newmark.v, &sv),
            })
        })
        .collect()
}

impl DistortionDeviation {
    /// Convergence report with the two comparisons as methods `field` and `system`.
    pub fn report(rows: &[DistortionDeviation]) -> ConvergenceReport {
        let mut r = ConvergenceReport::default();
        let field: Vec<_> = rows.iter().map(|d| (d.dt, d.field_q, d.field_v)).collect();
        let system: Vec<_> = rows.iter().map(|d| (d.dt, d.system_q, d.system_v)).collect();
        r.push_method("field", &field);
        r.push_method("system", &system);
        r
    }
}

/// Total energy along a trajectory, always with the matrices of `sys`. Pass
/// the original system when the trajectory came from a compensated one.
pub fn energy_trace(traj: &Trajectory, sys: &SecondOrderSystem) -> Result<Vec<(f64, f64)>> {
    traj.states
        .iter()
        .map(|s| Ok((s.t, total_energy(sys, &s.q, &s.v)?)))
        .collect()
}

/// `max |E(t) − E(t₀)| / |E(t₀)|` over the trace.
pub fn relative_energy_drift(trace: &[(f64, f64)]) -> f64 {
    let Some(&(_, e0)) = trace.first() else {
        return 0.0;
    };
    let dev = trace.iter().map(|&(_, e)| (e - e0).abs()).fold(0.0, f64::max);
    if e0 == 0.0 {
        dev
    } else {
        dev / e0.abs()
    }
}

/// Rate `λ` of the least-squares fit `ln E ≈ c + λ t`.
pub fn fitted_energy_rate(trace: &[(f64, f64)]) -> Result<f64> {
    if trace.iter().any(|&(_, e)| !(e > 0.0)) {
        return Err(Error::InvalidParameter("energy fit needs positive energies".into()));
    }
    if trace.len() < 2 {
        return Err(Error::InvalidParameter("energy fit needs at least two points".into()));
    }
    let pts: Vec<(f64, f64)> = trace.iter().map(|&(t, e)| (t, e.ln())).collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let me = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let ste: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - me)).sum();
    Ok(ste / stt)
}

pub fn write_energy_csv<W: Write>(traces: &[(&str, &[(f64, f64)])], mut w: W) -> Result<()> {
    writeln!(w, "method,t,energy")?;
    for (label, trace) in traces {
        for &(t, e) in trace.iter() {
            writeln!(w, "{label},{},{}", fmt_f64(t), fmt_f64(e))?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub label: String,
    pub dt: f64,
    pub steps: usize,
    pub error_q: f64,
    pub error_v: f64,
    /// Maximum stepping time over the repeats.
    pub wall_time: Duration,
    pub construction_time: Duration,
}

impl BenchRow {
    pub fn per_step(&self) -> Duration {
        self.wall_time / self.steps.max(1) as u32
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchOptions {
    pub repeats: usize,
    /// Stop halving a method once its position error reaches this value.
    pub target: Option<f64>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            repeats: 5,
            target: None,
        }
    }
}

/// Every method at every step of the schedule, `repeats` times each; the
/// reported wall time is the maximum over the repeats and covers stepping
/// only. Runs are serial.
pub fn accuracy_runtime_benchmark(s: &Scenario, opts: BenchOptions) -> Result<Vec<BenchRow>> {
    let dts = s.schedule.dts();
    let mut rows = Vec::new();
    for m in &s.methods {
        for &dt in &dts {
            let (sys, construction_time) = m.prepare(&s.system, dt)?;
            let cfg = StepperConfig::new(dt, m.method)?;
            let steps = step_count(s.t_eval, dt)?;
            let mut wall_time = Duration::ZERO;
            let mut last: Option<State> = None;
            for _ in 0..opts.repeats.max(1) {
                let start = Instant::now();
                let state = final_state(&sys, &cfg, s.t_eval)?;
                wall_time = wall_time.max(start.elapsed());
                last = Some(state);
            }
            let state = last.expect("at least one repeat");
            let (rq, rv) = s.reference.state_at(&s.system, dt, s.t_eval)?;
            let row = BenchRow {
                label: m.label.clone(),
                dt,
                steps,
                error_q: deviation(&state.q, &rq),
                error_v: deviation(&state.v, &rv),
                wall_time,
                construction_time,
            };
            let done = opts.target.is_some_and(|t| row.error_q <= t);
            rows.push(row);
            if done {
                break;
            }
        }
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut w: W) -> Result<()> {
    writeln!(w, "method,dt,steps,error_q,error_v,wall_time_s,per_step_s,construction_time_s")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.label,
            fmt_f64(r.dt),
            r.steps,
            fmt_f64(r.error_q),
            fmt_f64(r.error_v),
            fmt_f64(r.wall_time.as_secs_f64()),
            fmt_f64(r.per_step().as_secs_f64()),
            fmt_f64(r.construction_time.as_secs_f64())
        )?;
    }
    Ok(())
}

fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}
