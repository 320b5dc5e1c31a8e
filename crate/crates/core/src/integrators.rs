//! Fixed-step integrators: Newmark, generalized-α (same stepping code),
//! classical RK4 and explicit Euler on the first-order view, and the
//! fine-step RK4 reference.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_finite, Factorization, Matrix, Vector};
use crate::model::{first_order_view, total_energy, SecondOrderSystem, VectorField};

/// Ratio between the working step and the reference solver's step.
pub const REFERENCE_REFINEMENT: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Method {
    Newmark { gamma: f64, beta: f64 },
    GeneralizedAlpha { rho: f64 },
    Rk4,
    ExplicitEuler,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Newmark { gamma, beta } => write!(f, "newmark(gamma={gamma}, beta={beta})"),
            Method::GeneralizedAlpha { rho } => write!(f, "generalized-alpha(rho={rho})"),
            Method::Rk4 => f.write_str("rk4"),
            Method::ExplicitEuler => f.write_str("explicit-euler"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub method: Method,
}

impl StepperConfig {
    pub fn new(dt: f64, method: Method) -> Result<Self> {
        let cfg = StepperConfig { dt, method };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {}", self.dt)));
        }
        match self.method {
            Method::GeneralizedAlpha { rho } if !(0.0..=1.0).contains(&rho) => Err(
                Error::InvalidParameter(format!("spectral radius must lie in [0, 1], got {rho}")),
            ),
            Method::Newmark { gamma, beta } if !(gamma.is_finite() && beta.is_finite()) => {
                Err(Error::InvalidParameter("Newmark parameters must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Parameters of the shared Newmark / generalized-α recursion. Plain
/// Newmark is `alpha_m = alpha_f = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewmarkParams {
    pub gamma: f64,
    pub beta: f64,
    pub alpha_m: f64,
    pub alpha_f: f64,
}

impl NewmarkParams {
    pub fn newmark(gamma: f64, beta: f64) -> Self {
        NewmarkParams {
            gamma,
            beta,
            alpha_m: 0.0,
            alpha_f: 0.0,
        }
    }

    /// Optimal generalized-α parameters for high-frequency spectral radius `rho`.
    pub fn from_rho(rho: f64) -> Self {
        let alpha_m = (2.0 * rho - 1.0) / (rho + 1.0);
        let alpha_f = rho / (rho + 1.0);
        let gamma = 0.5 - alpha_m + alpha_f;
        let beta = 0.25 * (1.0 - alpha_m + alpha_f).powi(2);
        NewmarkParams {
            gamma,
            beta,
            alpha_m,
            alpha_f,
        }
    }

    pub fn for_method(method: Method) -> Option<Self> {
        match method {
            Method::Newmark { gamma, beta } => Some(Self::newmark(gamma, beta)),
            Method::GeneralizedAlpha { rho } => Some(Self::from_rho(rho)),
            Method::Rk4 | Method::ExplicitEuler => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    pub q: Vector,
    pub v: Vector,
    pub a: Vector,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub method: String,
    pub dt: f64,
    pub system_digest: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.t)
    }

    /// State on the grid point nearest to `t`.
    pub fn at(&self, t: f64) -> Option<&State> {
        if self.states.is_empty() || t < -0.5 * self.meta.dt {
            return None;
        }
        let j = (t / self.meta.dt).round() as usize;
        self.states.get(j)
    }

    /// CSV with header `t,q_1..q_n,v_1..v_n,a_1..a_n,energy`; energy uses `sys`.
    pub fn write_csv<W: Write>(&self, sys: &SecondOrderSystem, mut w: W) -> Result<()> {
        let n = sys.n();
        let mut header = vec!["t".to_string()];
        for p in ["q", "v", "a"] {
            header.extend((1..=n).map(|i| format!("{p}_{i}")));
        }
        header.push("energy".into());
        writeln!(w, "{}", header.join(","))?;
        for s in &self.states {
            let e = total_energy(sys, &s.q, &s.v)?;
            let mut row = vec![fmt_f64(s.t)];
            row.extend(s.q.iter().chain(s.v.iter()).chain(s.a.iter()).map(|x| fmt_f64(*x)));
            row.push(fmt_f64(e));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Round-trippable decimal.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

/// Trajectory recorded up to a failure, with the failure.
#[derive(Debug)]
pub struct IntegrationFailure {
    pub partial: Trajectory,
    pub error: Error,
}

impl fmt::Display for IntegrationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} states)", self.error, self.partial.len())
    }
}

impl std::error::Error for IntegrationFailure {}

impl From<IntegrationFailure> for Error {
    fn from(f: IntegrationFailure) -> Self {
        f.error
    }
}

/// `M⁻¹ (F(0) − C v₀ − K q₀)`
pub fn initial_acceleration(sys: &SecondOrderSystem, q0: &Vector, v0: &Vector) -> Result<Vector> {
    sys.acceleration(0.0, q0, v0)
}

/// Newmark-family stepper holding the factorized effective matrix
/// `(1−αm) M + (1−αf) γ Δt C + (1−αf) β Δt² K`.
#[derive(Debug)]
pub struct NewmarkStepper {
    sys: SecondOrderSystem,
    params: NewmarkParams,
    dt: f64,
    effective: Factorization,
    // F at the current time, reused by the αf-weighted load
    load: Option<(f64, Vector)>,
}

impl NewmarkStepper {
    pub fn new(sys: &SecondOrderSystem, params: NewmarkParams, dt: f64) -> Result<Self> {
        let NewmarkParams {
            gamma,
            beta,
            alpha_m,
            alpha_f,
        } = params;
        let eff = Matrix::lin_comb(&[
            (1.0 - alpha_m, sys.mass()),
            ((1.0 - alpha_f) * gamma * dt, sys.damping()),
            ((1.0 - alpha_f) * beta * dt * dt, sys.stiffness()),
        ])?;
        let effective = Factorization::new(&eff).map_err(|e| Error::StepFailure {
            step: 0,
            t: 0.0,
            reason: format!("effective matrix: {e}"),
        })?;
        Ok(NewmarkStepper {
            sys: sys.clone(),
            params,
            dt,
            effective,
            load: None,
        })
    }

    pub fn params(&self) -> NewmarkParams {
        self.params
    }

    pub fn initial_state(&self) -> Result<State> {
        let a = initial_acceleration(&self.sys, self.sys.q0(), self.sys.v0())?;
        Ok(State {
            t: 0.0,
            q: self.sys.q0().clone(),
            v: self.sys.v0().clone(),
            a,
        })
    }

    /// Advances `state` to `t1`. `t1` is passed explicitly so grid times stay `j·Δt`.
    pub fn step_to(&mut self, state: &State, t1: f64) -> Result<State> {
        let NewmarkParams {
            gamma,
            beta,
            alpha_m,
            alpha_f,
        } = self.params;
        let dt = self.dt;
        let (q, v, a) = (&state.q, &state.v, &state.a);

        let f1 = self.sys.forcing().value(t1)?;
        let mut rhs = if alpha_f != 0.0 {
            let f0 = match self.load.take() {
                Some((t, f)) if t == state.t => f,
                _ => self.sys.forcing().value(state.t)?,
            };
            &f1 * (1.0 - alpha_f) + f0 * alpha_f
        } else {
            f1.clone()
        };
        if alpha_m != 0.0 {
            self.sys.mass().gemv(&mut rhs, -alpha_m, a, 1.0);
        }
        let v_pred = v * alpha_f + (v + a * ((1.0 - gamma) * dt)) * (1.0 - alpha_f);
        let q_pred = q * alpha_f + (q + v * dt + a * ((0.5 - beta) * dt * dt)) * (1.0 - alpha_f);
        self.sys.damping().gemv(&mut rhs, -1.0, &v_pred, 1.0);
        self.sys.stiffness().gemv(&mut rhs, -1.0, &q_pred, 1.0);
        self.effective.solve_in_place(&mut rhs);
        let a1 = rhs;

        let q1 = q + v * dt + (a * (0.5 - beta) + &a1 * beta) * (dt * dt);
        let v1 = v + (a * (1.0 - gamma) + &a1 * gamma) * dt;
        if !(is_finite(&q1) && is_finite(&v1) && is_finite(&a1)) {
            return Err(Error::StepFailure {
                step: (t1 / dt).round() as usize,
                t: t1,
                reason: "non-finite state".into(),
            });
        }
        if alpha_f != 0.0 {
            self.load = Some((t1, f1));
        }
        Ok(State {
            t: t1,
            q: q1,
            v: v1,
            a: a1,
        })
    }

    pub fn step(&mut self, state: &State) -> Result<State> {
        self.step_to(state, state.t + self.dt)
    }
}

/// One Newmark step (builds and factorizes the effective matrix).
pub fn newmark_step(sys: &SecondOrderSystem, state: &State, gamma: f64, beta: f64, dt: f64) -> Result<State> {
    NewmarkStepper::new(sys, NewmarkParams::newmark(gamma, beta), dt)?.step(state)
}

/// One generalized-α step with explicit parameters (see [`NewmarkParams::from_rho`]).
pub fn generalized_alpha_step(
    sys: &SecondOrderSystem,
    state: &State,
    params: NewmarkParams,
    dt: f64,
) -> Result<State> {
    NewmarkStepper::new(sys, params, dt)?.step(state)
}

pub fn rk4_step(field: &dyn VectorField, y: &Vector, t: f64, dt: f64) -> Result<Vector> {
    let k1 = field.eval(t, y)?;
    let k2 = field.eval(t + 0.5 * dt, &(y + &k1 * (0.5 * dt)))?;
    let k3 = field.eval(t + 0.5 * dt, &(y + &k2 * (0.5 * dt)))?;
    let k4 = field.eval(t + dt, &(y + &k3 * dt))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

pub fn explicit_euler_step(field: &dyn VectorField, y: &Vector, t: f64, dt: f64) -> Result<Vector> {
    Ok(y + field.eval(t, y)? * dt)
}

/// RK4 over `steps · substeps` steps of size `dt / substeps`, returning the
/// state at every coarse step (including `y0`).
pub fn rk4_integrate(
    field: &dyn VectorField,
    y0: &Vector,
    dt: f64,
    steps: usize,
    substeps: usize,
) -> Result<Vec<Vector>> {
    let h = dt / substeps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0.clone();
    out.push(y.clone());
    for j in 0..steps {
        for s in 0..substeps {
            let t = j as f64 * dt + s as f64 * h;
            y = rk4_step(field, &y, t, h)?;
        }
        if !is_finite(&y) {
            return Err(Error::StepFailure {
                step: j + 1,
                t: (j + 1) as f64 * dt,
                reason: "non-finite state".into(),
            });
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Number of steps `J` with `J·Δt = t_end`; anything else is rejected.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter(format!("t_end must be >= 0, got {t_end}")));
    }
    let j = (t_end / dt).round();
    if (j * dt - t_end).abs() > 1e-9 * t_end.max(dt) {
        return Err(Error::InvalidParameter(format!(
            "t_end = {t_end} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(j as usize)
}

fn meta(sys: &SecondOrderSystem, cfg: &StepperConfig) -> TrajectoryMeta {
    TrajectoryMeta {
        method: cfg.method.to_string(),
        dt: cfg.dt,
        system_digest: sys.digest(),
    }
}

pub fn integrate(
    sys: &SecondOrderSystem,
    cfg: &StepperConfig,
    t_end: f64,
) -> std::result::Result<Trajectory, IntegrationFailure> {
    let mut states = Vec::new();
    let result = drive(sys, cfg, t_end, |s| states.push(s.clone()));
    let traj = Trajectory {
        meta: meta(sys, cfg),
        states,
    };
    match result {
        Ok(_) => Ok(traj),
        Err(error) => Err(IntegrationFailure { partial: traj, error }),
    }
}

/// Like [`integrate`] but keeps only the final state.
pub fn final_state(sys: &SecondOrderSystem, cfg: &StepperConfig, t_end: f64) -> Result<State> {
    drive(sys, cfg, t_end, |_| {})
}

/// Runs the configured stepper, handing every state (initial state
/// included) to `sink`, and returns the last one.
fn drive(
    sys: &SecondOrderSystem,
    cfg: &StepperConfig,
    t_end: f64,
    mut sink: impl FnMut(&State),
) -> Result<State> {
    cfg.validate()?;
    let steps = step_count(t_end, cfg.dt)?;
    let dt = cfg.dt;
    let a0 = initial_acceleration(sys, sys.q0(), sys.v0())?;
    let mut state = State {
        t: 0.0,
        q: sys.q0().clone(),
        v: sys.v0().clone(),
        a: a0,
    };
    sink(&state);

    match NewmarkParams::for_method(cfg.method) {
        Some(params) => {
            let mut stepper = NewmarkStepper::new(sys, params, dt)?;
            for j in 1..=steps {
                state = stepper.step_to(&state, j as f64 * dt)?;
                sink(&state);
            }
        }
        None => {
            let view = first_order_view(sys, false);
            let mut y = view.pack(0.0, sys.q0(), sys.v0());
            for j in 1..=steps {
                let t0 = (j - 1) as f64 * dt;
                let t1 = j as f64 * dt;
                y = match cfg.method {
                    Method::Rk4 => rk4_step(&view, &y, t0, dt)?,
                    _ => explicit_euler_step(&view, &y, t0, dt)?,
                };
                if !is_finite(&y) {
                    return Err(Error::StepFailure {
                        step: j,
                        t: t1,
                        reason: "non-finite state".into(),
                    });
                }
                let (q, v) = view.split(&y);
                let a = sys.acceleration(t1, &q, &v)?;
                state = State { t: t1, q, v, a };
                sink(&state);
            }
        }
    }
    Ok(state)
}

/// RK4 at `Δt / 100`, sampled on the `Δt` grid.
pub fn reference_solution(sys: &SecondOrderSystem, dt: f64, t_end: f64) -> Result<Trajectory> {
    reference_solution_with(sys, dt, t_end, REFERENCE_REFINEMENT)
}

pub fn reference_solution_with(
    sys: &SecondOrderSystem,
    dt: f64,
    t_end: f64,
    refinement: usize,
) -> Result<Trajectory> {
    let steps = step_count(t_end, dt)?;
    let view = first_order_view(sys, false);
    let ys = rk4_integrate(&view, &view.initial_state(), dt, steps, refinement.max(1))?;
    let states = ys
        .iter()
        .enumerate()
        .map(|(j, y)| {
            let t = j as f64 * dt;
            let (q, v) = view.split(y);
            let a = sys.acceleration(t, &q, &v)?;
            Ok(State { t, q, v, a })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        meta: TrajectoryMeta {
            method: format!("reference(rk4, dt/{refinement})"),
            dt,
            system_digest: sys.digest(),
        },
        states,
    })
}
