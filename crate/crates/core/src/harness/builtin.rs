//! Built-in systems and the named scenarios used by the CLI and the acceptance suite.

use std::f64::consts::PI;

use crate::compensation::CompensationKind;
use crate::error::{Error, Result};
use crate::integrators::Method;
use crate::linalg::{Factorization, Matrix, Vector};
use crate::model::{DerivativeMode, Forcing, SecondOrderSystem, Storage};

use super::exact::{DrivenOscillator, ModalReference};
use super::{DtSchedule, MethodSpec, Reference, Scenario, Study};

pub const SYSTEM_NAMES: &[&str] = &["oscillator-1dof", "paper-3dof", "fe-beam-synthetic"];

pub const SCENARIO_NAMES: &[&str] = &[
    "ee-oscillator",
    "dvf-time",
    "dvf-error",
    "damping-undamped",
    "damping-damped",
    "fourth-order-1dof",
    "fourth-order-1dof-numeric",
    "fourth-order-3dof-harmonic",
    "pulse",
    "square-wave",
    "fe-benchmark",
];

pub const THREE_DOF_MASS: [f64; 9] = [
    4.6965, 1.4187, 1.6038, //
    1.4187, 4.7195, 1.5540, //
    1.6038, 1.5540, 4.4809,
];
pub const THREE_DOF_STIFFNESS: [f64; 9] = [
    4.5316, 1.6906, 1.6784, //
    1.6906, 4.7245, 1.4670, //
    1.6784, 1.4670, 4.3618,
];
pub const THREE_DOF_DAMPING: [f64; 9] = [
    0.033921, 0.003909, 0.007335, //
    0.003909, 0.030597, 0.002903, //
    0.007335, 0.002903, 0.031755,
];
pub const THREE_DOF_AMPLITUDE: [f64; 3] = [-0.040790, -0.006630, -0.006914];
pub const THREE_DOF_FREQUENCY: [f64; 3] = [0.2457, 0.2587, 0.3262];
pub const THREE_DOF_Q0: [f64; 3] = [0.1, 0.0, 0.0];

pub const PULSE_SHAPE: f64 = 0.2;
pub const PULSE_CUTOFF: f64 = 14.0;
pub const PULSE_AMPLITUDE: [f64; 3] = [1.0, 0.0, 0.0];

/// Evaluation time of the convergence studies.
pub const T_EVAL: f64 = 0.4;
/// Step of the long-horizon 3-DoF demonstrations.
pub const DEMO_DT: f64 = 0.7;
/// 143 steps of 0.7: the first grid point at or past t = 100.
pub const DEMO_T_END: f64 = 100.1;

pub const ONE_DOF_DAMPING_RATIO: f64 = 0.02;
pub const ONE_DOF_OMEGA: f64 = 2.0 * PI;
pub const ONE_DOF_DRIVE_AMPLITUDE: f64 = 0.8;
pub const ONE_DOF_DRIVE_RATIO: f64 = 10.0;

/// `ẍ + 2ξω ẋ + ω² x = 0.8 cos(10 ω t)` with `x₀ = ẋ₀ = 1`.
pub fn oscillator_1dof(mode: DerivativeMode) -> Result<SecondOrderSystem> {
    let p = oscillator_1dof_exact();
    let forcing = Forcing::sinusoids(vec![p.amplitude], vec![p.drive], vec![PI / 2.0], mode)?;
    SecondOrderSystem::builder(
        Matrix::from_row_slice(1, &[p.m]),
        Matrix::from_row_slice(1, &[p.c]),
        Matrix::from_row_slice(1, &[p.k]),
    )
    .forcing(forcing)
    .initial_conditions(Vector::from_element(1, p.x0), Vector::from_element(1, p.v0))
    .build()
}

pub fn oscillator_1dof_exact() -> DrivenOscillator {
    let w = ONE_DOF_OMEGA;
    DrivenOscillator {
        m: 1.0,
        c: 2.0 * ONE_DOF_DAMPING_RATIO * w,
        k: w * w,
        amplitude: ONE_DOF_DRIVE_AMPLITUDE,
        drive: ONE_DOF_DRIVE_RATIO * w,
        x0: 1.0,
        v0: 1.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThreeDofLoad {
    None,
    Sinusoid,
    SquareWave,
    Pulse,
}

/// The 3-DoF system. The pulse load starts from rest; every other load
/// starts from `q₀ = (0.1, 0, 0)`, `v₀ = 0`.
pub fn three_dof(damped: bool, load: ThreeDofLoad, mode: DerivativeMode) -> Result<SecondOrderSystem> {
    let damping = if damped {
        Matrix::from_row_slice(3, &THREE_DOF_DAMPING)
    } else {
        Matrix::zeros(3, false)
    };
    let forcing = match load {
        ThreeDofLoad::None => Forcing::zero(3),
        ThreeDofLoad::Sinusoid => Forcing::sinusoids(THREE_DOF_AMPLITUDE.to_vec(), THREE_DOF_FREQUENCY.to_vec(), vec![0.0; 3], mode)?,
        ThreeDofLoad::SquareWave => Forcing::square_wave(THREE_DOF_AMPLITUDE.to_vec(), THREE_DOF_FREQUENCY.to_vec())?,
        ThreeDofLoad::Pulse => Forcing::pulse(PULSE_AMPLITUDE.to_vec(), PULSE_SHAPE, PULSE_CUTOFF, mode)?,
    };
    let q0 = if load == ThreeDofLoad::Pulse {
        Vector::zeros(3)
    } else {
        Vector::from_row_slice(&THREE_DOF_Q0)
    };
    SecondOrderSystem::builder(
        Matrix::from_row_slice(3, &THREE_DOF_MASS),
        damping,
        Matrix::from_row_slice(3, &THREE_DOF_STIFFNESS),
    )
    .forcing(forcing)
    .initial_conditions(q0, Vector::zeros(3))
    .build()
}

/// Undamped unit-mass oscillator `ẍ + ω² x = 0`, `x₀ = 1`, `ẋ₀ = 0`.
pub fn unit_oscillator(omega: f64) -> Result<SecondOrderSystem> {
    SecondOrderSystem::builder(
        Matrix::identity(1),
        Matrix::zeros(1, false),
        Matrix::from_row_slice(1, &[omega * omega]),
    )
    .initial_conditions(Vector::from_element(1, 1.0), Vector::zeros(1))
    .build()
}

/// Linear two-node elements on a bar of length `length`, clamped at the
/// left end, with axial stiffness `ea` and a distributed elastic foundation
/// `foundation`. Consistent mass. The bar starts at rest in the static shape
/// of a tip load, scaled to unit maximum deflection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeChain {
    pub elements: usize,
    pub ea: f64,
    pub foundation: f64,
    pub density: f64,
    pub length: f64,
}

impl Default for FeChain {
    fn default() -> Self {
        FeChain {
            elements: 300,
            ea: 1e-3,
            foundation: 1.0,
            density: 1.0,
            length: 1.0,
        }
    }
}

pub fn fe_chain(p: &FeChain) -> Result<SecondOrderSystem> {
    if p.elements < 2 || !(p.ea > 0.0 && p.density > 0.0 && p.length > 0.0 && p.foundation >= 0.0) {
        return Err(Error::InvalidParameter(format!("invalid chain parameters {p:?}")));
    }
    let n = p.elements;
    let h = p.length / n as f64;
    let me = p.density * h / 6.0;
    let ke = p.ea / h;
    let kf = p.foundation * h / 6.0;
    let mut m = Vec::new();
    let mut k = Vec::new();
    // node e+1 is unknown e; node 0 is clamped
    for e in 0..n {
        let nodes = [e as isize - 1, e as isize];
        for (a, &i) in nodes.iter().enumerate() {
            for (b, &j) in nodes.iter().enumerate() {
                if i < 0 || j < 0 {
                    continue;
                }
                let diag = a == b;
                let mass = me * if diag { 2.0 } else { 1.0 };
                let stiff = ke * if diag { 1.0 } else { -1.0 } + kf * if diag { 2.0 } else { 1.0 };
                m.push((i as usize, j as usize, mass));
                k.push((i as usize, j as usize, stiff));
            }
        }
    }
    let mass = Matrix::from_triplets(n, n, m)?;
    let stiffness = Matrix::from_triplets(n, n, k)?;
    let mut load = Vector::zeros(n);
    load[n - 1] = 1.0;
    let mut q0 = Factorization::new(&stiffness)?.solve(&load);
    let peak = q0.amax();
    q0 /= peak;
    SecondOrderSystem::builder(mass, Matrix::zeros(n, true), stiffness)
        .storage(Storage::Sparse)
        .initial_conditions(q0, Vector::zeros(n))
        .build()
}

/// Largest step `t_eval / N` not exceeding `2.7 / ω_max`.
pub fn fe_start_dt(reference: &ModalReference, t_eval: f64) -> f64 {
    let steps = (t_eval * reference.max_frequency() / 2.7).ceil().max(1.0);
    t_eval / steps
}

/// Built-in systems addressable by name from a scenario file.
pub fn system(name: &str, mode: DerivativeMode) -> Result<SecondOrderSystem> {
    match name {
        "oscillator-1dof" => oscillator_1dof(mode),
        "paper-3dof" => three_dof(true, ThreeDofLoad::Sinusoid, mode),
        "fe-beam-synthetic" => fe_chain(&FeChain::default()),
        other => Err(Error::Config(format!(
            "unknown built-in system {other:?}; expected one of {SYSTEM_NAMES:?}"
        ))),
    }
}

/// The natural reference of a built-in system: closed form where one exists.
pub fn reference_for(name: &str, sys: &SecondOrderSystem) -> Result<Reference> {
    Ok(match name {
        "oscillator-1dof" => Reference::Exact(oscillator_1dof_exact().exact_fn()),
        "fe-beam-synthetic" => Reference::Exact(ModalReference::new(sys)?.exact_fn()),
        _ => Reference::FineRk4,
    })
}

fn newmark(gamma: f64, beta: f64) -> Method {
    Method::Newmark { gamma, beta }
}

fn spec(label: &str, method: Method) -> MethodSpec {
    MethodSpec::new(label, method)
}

fn fourth_order_methods() -> Vec<MethodSpec> {
    vec![
        spec("newmark", newmark(0.5, 1.0 / 6.0)).expect_order(2.0, 0.3),
        spec("n4c", newmark(0.5, 1.0 / 6.0))
            .compensated(CompensationKind::FourthOrder)
            .expect_order(4.0, 0.4),
        spec("generalized-alpha", Method::GeneralizedAlpha { rho: 1.0 }).expect_order(2.0, 0.3),
        spec("rk4", Method::Rk4).expect_order(4.0, 0.3),
    ]
}

fn damping_methods() -> Vec<MethodSpec> {
    vec![
        spec("newmark", newmark(0.55, 0.28)),
        spec("newmark-compensated", newmark(0.55, 0.28)).compensated(CompensationKind::Damping),
        spec("generalized-alpha", Method::GeneralizedAlpha { rho: 0.9 }),
        spec("rk4", Method::Rk4),
    ]
}

fn fixed(dt: f64) -> DtSchedule {
    DtSchedule::List(vec![dt])
}

/// Named built-in scenarios.
pub fn scenario(name: &str) -> Result<Scenario> {
    let analytic = DerivativeMode::Analytic;
    let central = DerivativeMode::CentralDifference;
    let s = match name {
        "ee-oscillator" => Scenario::new(name, unit_oscillator(1.0)?)
            .methods(vec![spec("explicit-euler", Method::ExplicitEuler)])
            .times(10.0, 10.0)
            .schedule(fixed(0.1)),
        "dvf-time" => Scenario::new(name, three_dof(true, ThreeDofLoad::Sinusoid, analytic)?)
            .methods(vec![spec("newmark", newmark(0.55, 0.28))])
            .times(DEMO_T_END, DEMO_T_END)
            .schedule(fixed(DEMO_DT)),
        "dvf-error" => Scenario::new(name, three_dof(true, ThreeDofLoad::Sinusoid, analytic)?)
            .methods(vec![spec("newmark", newmark(0.55, 0.28)).expect_order(3.0, 0.3)])
            .times(T_EVAL, T_EVAL)
            .schedule(DtSchedule::Halving { start: 0.1, halvings: 4 })
            .study(Study::Distortion),
        "damping-undamped" | "damping-damped" => {
            let damped = name == "damping-damped";
            Scenario::new(name, three_dof(damped, ThreeDofLoad::None, analytic)?)
                .methods(damping_methods())
                .times(DEMO_T_END, DEMO_T_END)
                .schedule(fixed(DEMO_DT))
        }
        "fourth-order-1dof" | "fourth-order-1dof-numeric" => {
            let mode = if name.ends_with("numeric") { central } else { analytic };
            let sys = oscillator_1dof(mode)?;
            Scenario::new(name, sys)
                .methods(fourth_order_methods())
                .times(T_EVAL, T_EVAL)
                .schedule(DtSchedule::Halving {
                    start: T_EVAL / 32.0,
                    halvings: 4,
                })
                .reference(Reference::Exact(oscillator_1dof_exact().exact_fn()))
        }
        "fourth-order-3dof-harmonic" => Scenario::new(name, three_dof(true, ThreeDofLoad::Sinusoid, analytic)?)
            .methods(fourth_order_methods())
            .times(DEMO_T_END, DEMO_T_END)
            .schedule(fixed(DEMO_DT)),
        "pulse" => Scenario::new(name, three_dof(false, ThreeDofLoad::Pulse, central)?)
            .methods(fourth_order_methods())
            .times(DEMO_T_END, DEMO_T_END)
            .schedule(fixed(DEMO_DT)),
        "square-wave" => Scenario::new(name, three_dof(true, ThreeDofLoad::SquareWave, central)?)
            .methods(fourth_order_methods())
            .times(DEMO_T_END, DEMO_T_END)
            .schedule(fixed(DEMO_DT)),
        "fe-benchmark" => {
            let sys = fe_chain(&FeChain::default())?;
            let modal = ModalReference::new(&sys)?;
            let t_eval = 5.0;
            let start = fe_start_dt(&modal, t_eval);
            Scenario::new(name, sys)
                .methods(vec![
                    spec("generalized-alpha", Method::GeneralizedAlpha { rho: 1.0 }),
                    spec("n4c", newmark(0.5, 1.0 / 6.0)).compensated(CompensationKind::FourthOrder),
                ])
                .times(t_eval, t_eval)
                .schedule(DtSchedule::Halving { start, halvings: 11 })
                .reference(Reference::Exact(modal.exact_fn()))
        }
        other => {
            return Err(Error::Config(format!(
                "unknown scenario {other:?}; expected one of {SCENARIO_NAMES:?}"
            )))
        }
    };
    Ok(s)
}
