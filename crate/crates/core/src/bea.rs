//! Backward error analysis of the Newmark scheme.
//!
//! The Newmark iterates coincide (to `O(Δt³)`) with the exact flow of a
//! distorted vector field. This module evaluates that field, rewrites it as a
//! distorted second-order system `M q̈ + C̃ q̇ + K̃ q = F̃(t)`, and carries the
//! explicit-Euler oscillator example used as a sanity check of the approach.
//!
//! Notation: `G = M⁻¹C`, `H = M⁻¹K`, `η = γ/2 − β − 1/12` and
//! `B = Δt(γ−½)I − Δt²((γ−½)² + 1/12) C M⁻¹`. None of them is stored as an
//! explicit matrix; they are applied through the mass factorization.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{store_like, Matrix, Vector};
use crate::model::{Excitation, SecondOrderSystem, Storage, VectorField};

/// Δt-dependent quantities of the Newmark distortion for one `(sys, γ, β, Δt)`.
#[derive(Clone, Debug)]
pub struct DistortionCoefficients {
    sys: SecondOrderSystem,
    pub gamma: f64,
    pub beta: f64,
    pub dt: f64,
    pub eta: f64,
}

impl DistortionCoefficients {
    pub fn new(sys: &SecondOrderSystem, gamma: f64, beta: f64, dt: f64) -> Result<Self> {
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be >= 0, got {dt}")));
        }
        Ok(DistortionCoefficients {
            sys: sys.clone(),
            gamma,
            beta,
            dt,
            eta: 0.5 * gamma - beta - 1.0 / 12.0,
        })
    }

    pub fn system(&self) -> &SecondOrderSystem {
        &self.sys
    }

    /// `M⁻¹ C x`
    pub fn apply_g(&self, x: &Vector) -> Vector {
        self.sys.solve_mass(&self.sys.damping().mul_vec(x))
    }

    /// `M⁻¹ K x`
    pub fn apply_h(&self, x: &Vector) -> Vector {
        self.sys.solve_mass(&self.sys.stiffness().mul_vec(x))
    }

    fn b_scalars(&self) -> (f64, f64) {
        let d = self.gamma - 0.5;
        (self.dt * d, self.dt * self.dt * (d * d + 1.0 / 12.0))
    }

    /// `B x = Δt(γ−½) x − Δt²((γ−½)² + 1/12) C M⁻¹ x`
    pub fn apply_b(&self, x: &Vector) -> Vector {
        let (s1, s2) = self.b_scalars();
        x * s1 - self.sys.damping().mul_vec(&self.sys.solve_mass(x)) * s2
    }

    /// `B X` for a dense matrix argument.
    pub fn apply_b_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (s1, s2) = self.b_scalars();
        let cm = self.sys.damping().mul_dense(&self.sys.mass_factorization().solve_matrix(x));
        x * s1 - cm * s2
    }

    /// Forcing and its derivatives at `tau`, differenced with the simulation step.
    fn forcing_at(&self, tau: f64) -> Result<[Vector; 3]> {
        self.sys.forcing().value_and_derivatives(tau, self.dt)
    }

    fn a_from(&self, q: &Vector, v: &Vector, f: &Vector, f1: &Vector) -> Vector {
        let hq = self.apply_h(q);
        let gv = self.apply_g(v);
        let minv_f = self.sys.solve_mass(f);
        -self.apply_g(&hq) + self.apply_h(v) - self.apply_g(&gv) + self.apply_g(&minv_f)
            - self.sys.solve_mass(f1)
    }
}

/// `A(τ, q, v) = −GHq + (H − G²)v + GM⁻¹F(τ) − M⁻¹F′(τ)`.
///
/// `h` is the differencing step for forcings with numeric derivatives.
pub fn a_field(sys: &SecondOrderSystem, tau: f64, q: &Vector, v: &Vector, h: f64) -> Result<Vector> {
    let coeffs = DistortionCoefficients::new(sys, 0.5, 0.25, h)?;
    let [f, f1, _] = sys.forcing().value_and_derivatives(tau, h)?;
    Ok(coeffs.a_from(q, v, &f, &f1))
}

/// Value of the truncated distorted field. The clock component is always 1.
#[derive(Clone, Debug, PartialEq)]
pub struct DvfValue {
    pub clock: f64,
    pub q: Vector,
    pub v: Vector,
}

/// Distorted vector field of the Newmark method, truncated after `Δt²`:
///
/// * `f_q = v + Δt² η A`
/// * `f_v = −M⁻¹(Kq + Cv − F) + Δt(½−γ) A + Δt² f_v2`
/// * `f_v2 = (1/12)[H(Hq + Gv − M⁻¹F) + M⁻¹F″] + ((γ−½)² + 1/12) G A`
pub fn dvf_eval(c: &DistortionCoefficients, tau: f64, q: &Vector, v: &Vector) -> Result<DvfValue> {
    let sys = &c.sys;
    if c.dt == 0.0 {
        return Ok(DvfValue {
            clock: 1.0,
            q: v.clone(),
            v: sys.acceleration(tau, q, v)?,
        });
    }
    let [f, f1, f2] = c.forcing_at(tau)?;
    let mut acc = f.clone();
    sys.damping().gemv(&mut acc, -1.0, v, 1.0);
    sys.stiffness().gemv(&mut acc, -1.0, q, 1.0);
    sys.mass_factorization().solve_in_place(&mut acc);

    let a = c.a_from(q, v, &f, &f1);
    let dt = c.dt;
    let d = c.gamma - 0.5;
    // Hq + Gv − M⁻¹F = −acc
    let fv2 = (c.apply_h(&-&acc) + sys.solve_mass(&f2)) / 12.0 + c.apply_g(&a) * (d * d + 1.0 / 12.0);
    let fq = v + &a * (dt * dt * c.eta);
    let fv = &acc + &a * (dt * (0.5 - c.gamma)) + fv2 * (dt * dt);
    Ok(DvfValue { clock: 1.0, q: fq, v: fv })
}

/// The truncated distorted field as a first-order system on `(q; v)`.
#[derive(Clone, Debug)]
pub struct DvfField {
    coeffs: DistortionCoefficients,
}

impl DvfField {
    pub fn new(coeffs: DistortionCoefficients) -> Self {
        DvfField { coeffs }
    }

    pub fn initial_state(&self) -> Vector {
        let sys = self.coeffs.system();
        pack(sys.q0(), sys.v0())
    }

    pub fn split(&self, y: &Vector) -> (Vector, Vector) {
        split(y, self.coeffs.system().n())
    }
}

impl VectorField for DvfField {
    fn dim(&self) -> usize {
        2 * self.coeffs.system().n()
    }

    fn eval(&self, t: f64, y: &Vector) -> Result<Vector> {
        let (q, v) = self.split(y);
        let f = dvf_eval(&self.coeffs, t, &q, &v)?;
        Ok(pack(&f.q, &f.v))
    }
}

fn pack(q: &Vector, v: &Vector) -> Vector {
    let n = q.len();
    let mut y = Vector::zeros(2 * n);
    y.rows_mut(0, n).copy_from(q);
    y.rows_mut(n, n).copy_from(v);
    y
}

fn split(y: &Vector, n: usize) -> (Vector, Vector) {
    (y.rows(0, n).into_owned(), y.rows(n, n).into_owned())
}

/// `F̃(t) = F − B(CM⁻¹F − F′) + Δt²(η − 1/12)(KM⁻¹F − F″)`
#[derive(Debug)]
pub struct DistortedForcing {
    coeffs: DistortionCoefficients,
}

impl Excitation for DistortedForcing {
    fn dim(&self) -> usize {
        self.coeffs.system().n()
    }

    fn value(&self, t: f64) -> Result<Vector> {
        let c = &self.coeffs;
        let sys = c.system();
        if c.dt == 0.0 {
            return sys.forcing().value(t);
        }
        let [f, f1, f2] = c.forcing_at(t)?;
        let minv_f = sys.solve_mass(&f);
        let cmf = sys.damping().mul_vec(&minv_f);
        let kmf = sys.stiffness().mul_vec(&minv_f);
        let w = c.dt * c.dt * (c.eta - 1.0 / 12.0);
        Ok(&f - c.apply_b(&(cmf - f1)) + (kmf - f2) * w)
    }

    fn value_and_derivatives(&self, _t: f64, _h: f64) -> Result<[Vector; 3]> {
        Err(Error::Unsupported("distorted forcing has no derivatives".into()))
    }
}

/// `M q̈ + C̃ q̇ + K̃ q = F̃(t)` with `q̇(0) = v₀ + Δt² η A(0, q₀, v₀)`.
#[derive(Clone, Debug)]
pub struct DistortedSystem {
    pub damping: Matrix,
    pub stiffness: Matrix,
    pub forcing: Arc<DistortedForcing>,
    pub velocity_correction: Vector,
    coeffs: DistortionCoefficients,
}

impl DistortedSystem {
    pub fn coefficients(&self) -> &DistortionCoefficients {
        &self.coeffs
    }

    /// The distorted equation as a system with the original mass matrix.
    pub fn to_system(&self) -> Result<SecondOrderSystem> {
        let base = self.coeffs.system();
        base.with_parts(self.damping.clone(), self.stiffness.clone(), self.forcing.clone())?
            .with_initial_conditions(base.q0().clone(), base.v0() + &self.velocity_correction)
    }

    /// Maps the distorted solution's `q̇` back to the scheme's velocity
    /// variable: `v = q̇ − Δt² η A(t, q, q̇)`.
    pub fn velocity_from_rate(&self, t: f64, q: &Vector, rate: &Vector) -> Result<Vector> {
        let c = &self.coeffs;
        if c.dt == 0.0 {
            return Ok(rate.clone());
        }
        let [f, f1, _] = c.forcing_at(t)?;
        Ok(rate - c.a_from(q, rate, &f, &f1) * (c.dt * c.dt * c.eta))
    }
}

pub fn distorted_system(sys: &SecondOrderSystem, gamma: f64, beta: f64, dt: f64) -> Result<DistortedSystem> {
    let c = DistortionCoefficients::new(sys, gamma, beta, dt)?;
    let lu = sys.mass_factorization();
    let cd = sys.damping().to_dense();
    let kd = sys.stiffness().to_dense();
    let minv_c = lu.solve_matrix(&cd);
    let minv_k = lu.solve_matrix(&kd);
    let cmc = sys.damping().mul_dense(&minv_c);
    let kmc = sys.stiffness().mul_dense(&minv_c);
    let cmk = sys.damping().mul_dense(&minv_k);
    let kmk = sys.stiffness().mul_dense(&minv_k);
    let w = dt * dt * (c.eta - 1.0 / 12.0);

    let c_tilde = &cd + c.apply_b_matrix(&(&kd - cmc)) + kmc * w;
    let k_tilde = &kd - c.apply_b_matrix(&cmk) + kmk * w;

    let correction = if dt == 0.0 {
        Vector::zeros(sys.n())
    } else {
        let [f, f1, _] = c.forcing_at(0.0)?;
        c.a_from(sys.q0(), sys.v0(), &f, &f1) * (dt * dt * c.eta)
    };
    let sparse = sys.storage() == Storage::Sparse;
    Ok(DistortedSystem {
        damping: store_like(c_tilde, sparse),
        stiffness: store_like(k_tilde, sparse),
        forcing: Arc::new(DistortedForcing { coeffs: c.clone() }),
        velocity_correction: correction,
        coeffs: c,
    })
}

/// Distorted oscillator of the explicit Euler method applied to
/// `m ẍ + k x = 0`, truncated after `Δt²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EulerDistortion {
    pub mass: f64,
    pub damping: f64,
    pub stiffness: f64,
    pub omega: f64,
    pub dt: f64,
    /// Exponent of the amplitude envelope `exp(growth_rate · t)`.
    pub growth_rate: f64,
    /// Oscillation frequency `ω − Δt² ω³ / 3`.
    pub frequency: f64,
}

pub fn euler_oscillator_distortion(omega: f64, dt: f64) -> Result<EulerDistortion> {
    EulerDistortion::new(1.0, omega * omega, dt)
}

impl EulerDistortion {
    pub fn new(m: f64, k: f64, dt: f64) -> Result<Self> {
        if !(m > 0.0 && k > 0.0) {
            return Err(Error::InvalidParameter(format!("need m > 0 and k > 0, got {m}, {k}")));
        }
        let omega = (k / m).sqrt();
        Ok(EulerDistortion {
            mass: m * (1.0 + dt * dt * k / (3.0 * m)),
            damping: -dt * k + dt.powi(3) * k * k / (6.0 * m),
            stiffness: k * (1.0 - dt * dt * k / (12.0 * m)),
            omega,
            dt,
            growth_rate: 0.5 * dt * omega * omega,
            frequency: omega - dt * dt * omega.powi(3) / 3.0,
        })
    }

    /// Position from the closed-form solution of the truncated distorted
    /// equation. The initial slope comes from the truncated position equation
    /// `ẋ = v + (Δt/2)ω²x − (Δt²/3)ω²v`.
    pub fn position(&self, x0: f64, v0: f64, t: f64) -> f64 {
        let w2 = self.omega * self.omega;
        let rate0 = v0 + 0.5 * self.dt * w2 * x0 - self.dt * self.dt / 3.0 * w2 * v0;
        let c1 = x0;
        let c2 = (rate0 - self.growth_rate * x0) / self.frequency;
        let wt = self.frequency * t;
        (self.growth_rate * t).exp() * (c1 * wt.cos() + c2 * wt.sin())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::{newmark_step, rk4_integrate, State};
    use crate::model::{first_order_view, DerivativeMode, Forcing};
    use nalgebra::DMatrix;

    fn two_dof(c_scale: f64, forcing: Forcing) -> SecondOrderSystem {
        SecondOrderSystem::builder(
            Matrix::from_row_slice(2, &[2.0, 0.4, 0.4, 1.5]),
            Matrix::from_row_slice(2, &[0.3, -0.05, -0.05, 0.2]).into_storage(false).scaled(c_scale),
            Matrix::from_row_slice(2, &[5.0, -1.0, -1.0, 3.0]),
        )
        .forcing(forcing)
        .initial_conditions(Vector::from_vec(vec![0.3, -0.1]), Vector::from_vec(vec![0.2, 0.5]))
        .build()
        .unwrap()
    }

    fn smooth_forcing() -> Forcing {
        Forcing::sinusoids(vec![0.2, -0.1], vec![1.1, 0.7], vec![0.3, 0.0], DerivativeMode::Analytic).unwrap()
    }

    impl Matrix {
        fn scaled(self, s: f64) -> Matrix {
            Matrix::lin_comb(&[(s, &self)]).unwrap()
        }
    }

    fn dense(m: &Matrix) -> DMatrix<f64> {
        m.to_dense()
    }

    #[test]
    fn a_field_undamped_unforced_is_hv() {
        let sys = two_dof(0.0, Forcing::zero(2));
        let q = Vector::from_vec(vec![0.7, -0.2]);
        let v = Vector::from_vec(vec![0.1, 0.4]);
        let a = a_field(&sys, 0.0, &q, &v, 0.1).unwrap();
        let minv = dense(sys.mass()).try_inverse().unwrap();
        let want = &minv * dense(sys.stiffness()) * &v;
        assert!((a - want).norm() < 1e-12);
    }

    #[test]
    fn a_field_constant_forcing_at_rest() {
        let f = Vector::from_vec(vec![1.0, -2.0]);
        let sys = two_dof(1.0, Forcing::constant(f.clone()));
        let z = Vector::zeros(2);
        let a = a_field(&sys, 3.0, &z, &z, 0.1).unwrap();
        let minv = dense(sys.mass()).try_inverse().unwrap();
        let want = &minv * dense(sys.damping()) * &minv * f;
        assert!((a - want).norm() < 1e-14);
    }

    #[test]
    fn a_field_matches_dense_inverse_oracle() {
        let sys = crate::harness::builtin::three_dof(true, crate::harness::builtin::ThreeDofLoad::Sinusoid, DerivativeMode::Analytic).unwrap();
        let minv = dense(sys.mass()).try_inverse().unwrap();
        let g = &minv * dense(sys.damping());
        let h = &minv * dense(sys.stiffness());
        let [f, f1, _] = sys.forcing().value_and_derivatives(0.0, 0.1).unwrap();
        let (q, v) = (sys.q0(), sys.v0());
        let want = -(&g * &h * q) + (&h - &g * &g) * v + &g * &minv * &f - &minv * &f1;
        let got = a_field(&sys, 0.0, q, v, 0.1).unwrap();
        assert!((got - want).norm() < 1e-10);
    }

    #[test]
    fn coefficient_operators_match_dense() {
        let sys = two_dof(1.0, Forcing::zero(2));
        let c = DistortionCoefficients::new(&sys, 0.55, 0.28, 0.1).unwrap();
        assert!((c.eta - (0.275 - 0.28 - 1.0 / 12.0)).abs() < 1e-16);
        let minv = dense(sys.mass()).try_inverse().unwrap();
        let x = Vector::from_vec(vec![0.3, -1.2]);
        assert!((c.apply_g(&x) - &minv * dense(sys.damping()) * &x).norm() < 1e-12);
        assert!((c.apply_h(&x) - &minv * dense(sys.stiffness()) * &x).norm() < 1e-12);
        let b = DMatrix::identity(2, 2) * (0.1 * 0.05) - dense(sys.damping()) * &minv * (0.01 * (0.0025 + 1.0 / 12.0));
        assert!((c.apply_b(&x) - &b * &x).norm() < 1e-12);
    }

    #[test]
    fn dvf_at_zero_step_is_original_field() {
        let sys = two_dof(1.0, smooth_forcing());
        let c = DistortionCoefficients::new(&sys, 0.55, 0.28, 0.0).unwrap();
        let view = first_order_view(&sys, false);
        let q = Vector::from_vec(vec![0.1, 0.2]);
        let v = Vector::from_vec(vec![-0.3, 0.4]);
        let d = dvf_eval(&c, 1.3, &q, &v).unwrap();
        let y = view.pack(0.0, &q, &v);
        let (fq, fv) = view.split(&view.eval(1.3, &y).unwrap());
        assert_eq!(d.clock, 1.0);
        assert_eq!(d.q, fq);
        assert_eq!(d.v, fv);
    }

    #[test]
    fn undamped_trapezoidal_has_no_first_order_velocity_term() {
        let sys = two_dof(0.0, Forcing::zero(2));
        let q = Vector::from_vec(vec![0.1, 0.2]);
        let v = Vector::from_vec(vec![-0.3, 0.4]);
        let acc = sys.acceleration(0.0, &q, &v).unwrap();
        let scaled = |dt: f64| {
            let c = DistortionCoefficients::new(&sys, 0.5, 0.25, dt).unwrap();
            (dvf_eval(&c, 0.0, &q, &v).unwrap().v - &acc) / (dt * dt)
        };
        assert!((scaled(0.1) - scaled(0.05)).norm() < 1e-12);
    }

    #[test]
    fn second_order_velocity_term_independent_of_v_without_damping() {
        let sys = two_dof(0.0, smooth_forcing());
        let c = DistortionCoefficients::new(&sys, 0.5, 0.25, 0.1).unwrap();
        let q = Vector::from_vec(vec![0.1, 0.2]);
        let corr = |v: &Vector| dvf_eval(&c, 0.4, &q, v).unwrap().v - sys.acceleration(0.4, &q, v).unwrap();
        let v1 = Vector::from_vec(vec![-0.3, 0.4]);
        let v2 = Vector::from_vec(vec![1.0, -2.0]);
        assert!((corr(&v1) - corr(&v2)).norm() < 1e-14);

        let damped = two_dof(1.0, smooth_forcing());
        let c = DistortionCoefficients::new(&damped, 0.5, 0.25, 0.1).unwrap();
        let corr = |v: &Vector| dvf_eval(&c, 0.4, &q, v).unwrap().v - damped.acceleration(0.4, &q, v).unwrap();
        assert!((corr(&v1) - corr(&v2)).norm() > 1e-6);
    }

    #[test]
    fn position_correction_is_second_order() {
        let sys = two_dof(1.0, smooth_forcing());
        let q = Vector::from_vec(vec![0.1, 0.2]);
        let v = Vector::from_vec(vec![-0.3, 0.4]);
        let errs: Vec<f64> = (0..4)
            .map(|k| {
                let dt = 0.1 / 2f64.powi(k);
                let c = DistortionCoefficients::new(&sys, 0.55, 0.28, dt).unwrap();
                (dvf_eval(&c, 0.5, &q, &v).unwrap().q - &v).norm()
            })
            .collect();
        for w in errs.windows(2) {
            assert!(((w[0] / w[1]).log2() - 2.0).abs() < 0.2);
        }
    }

    fn newmark_vs_dvf(sys: &SecondOrderSystem, dt: f64, steps: usize) -> f64 {
        let (g, b) = (0.55, 0.28);
        let mut s = State {
            t: 0.0,
            q: sys.q0().clone(),
            v: sys.v0().clone(),
            a: sys.acceleration(0.0, sys.q0(), sys.v0()).unwrap(),
        };
        for _ in 0..steps {
            s = newmark_step(sys, &s, g, b, dt).unwrap();
        }
        let field = DvfField::new(DistortionCoefficients::new(sys, g, b, dt).unwrap());
        let ys = rk4_integrate(&field, &field.initial_state(), dt, steps, 100).unwrap();
        let (q, v) = field.split(ys.last().unwrap());
        ((&s.q - q).norm_squared() + (&s.v - v).norm_squared()).sqrt()
    }

    // The local (one-step) defect of the truncated field is O(Δt⁴); over a
    // fixed horizon it accumulates to O(Δt³).
    #[test]
    fn newmark_tracks_truncated_field() {
        let sys = two_dof(1.0, smooth_forcing());
        let hs: Vec<f64> = (0..4).map(|k| 0.1 / 2f64.powi(k)).collect();
        let one: Vec<f64> = hs.iter().map(|&h| newmark_vs_dvf(&sys, h, 1)).collect();
        for w in one.windows(2) {
            let p = (w[0] / w[1]).log2();
            assert!((p - 4.0).abs() < 0.3, "one-step slope {p}");
        }
        let fixed: Vec<f64> = hs.iter().map(|&h| newmark_vs_dvf(&sys, h, (0.4 / h).round() as usize)).collect();
        let p = crate::harness::observed_order(&hs.iter().copied().zip(fixed.iter().copied()).collect::<Vec<_>>()).unwrap();
        assert!((p - 3.0).abs() < 0.3, "fixed-horizon slope {p}");
    }

    #[test]
    fn distorted_system_zero_step_is_identity() {
        let sys = two_dof(1.0, smooth_forcing());
        let d = distorted_system(&sys, 0.55, 0.28, 0.0).unwrap();
        assert_eq!(d.damping.to_dense(), dense(sys.damping()));
        assert_eq!(d.stiffness.to_dense(), dense(sys.stiffness()));
        assert_eq!(d.velocity_correction, Vector::zeros(2));
        assert_eq!(d.forcing.value(0.7).unwrap(), sys.forcing().value(0.7).unwrap());
    }

    #[test]
    fn distorted_trapezoid_family_undamped() {
        let sys = two_dof(0.0, smooth_forcing());
        let (dt, beta) = (0.1, 0.2);
        let d = distorted_system(&sys, 0.5, beta, dt).unwrap();
        let minv = dense(sys.mass()).try_inverse().unwrap();
        let k = dense(sys.stiffness());
        let w = dt * dt * (0.25 - beta - 1.0 / 12.0 - 1.0 / 12.0);
        assert!(d.damping.to_dense().abs().max() == 0.0);
        let kt = &k + &k * &minv * &k * w;
        assert!((d.stiffness.to_dense() - kt).abs().max() < 1e-13);
        let t = 0.9;
        let [f, _, f2] = sys.forcing().value_and_derivatives(t, dt).unwrap();
        let ft = &f + (&k * &minv * &f - f2) * w;
        assert!((d.forcing.value(t).unwrap() - ft).norm() < 1e-14);
    }

    #[test]
    fn distorted_damping_reduced_form() {
        let sys = two_dof(1.0, Forcing::zero(2));
        let (dt, beta) = (0.2, 0.3);
        let d = distorted_system(&sys, 0.5, beta, dt).unwrap();
        let minv = dense(sys.mass()).try_inverse().unwrap();
        let (c, k) = (dense(sys.damping()), dense(sys.stiffness()));
        let want = &c
            + ((&k * &minv * &c) * (1.0 - 12.0 * beta) - &c * &minv * (&k - &c * &minv * &c)) * (dt * dt / 12.0);
        assert!((d.damping.to_dense() - want).abs().max() < 1e-13);
    }

    #[test]
    fn velocity_correction_uses_a_at_start() {
        let sys = two_dof(1.0, smooth_forcing());
        let (g, b, dt) = (0.55, 0.28, 0.1);
        let d = distorted_system(&sys, g, b, dt).unwrap();
        let a = a_field(&sys, 0.0, sys.q0(), sys.v0(), dt).unwrap();
        let eta = 0.5 * g - b - 1.0 / 12.0;
        assert!((&d.velocity_correction - a * (dt * dt * eta)).norm() < 1e-15);
        let ds = d.to_system().unwrap();
        assert_eq!(ds.v0(), &(sys.v0() + &d.velocity_correction));
    }

    #[test]
    fn euler_distortion_values() {
        let e = EulerDistortion::new(1.0, 1.0, 0.0).unwrap();
        assert_eq!((e.mass, e.damping, e.stiffness), (1.0, 0.0, 1.0));
        let e = EulerDistortion::new(1.0, 1.0, 0.1).unwrap();
        assert!((e.damping - (-0.1 + 0.001 / 6.0)).abs() < 1e-15);
        assert!((e.damping + 0.0998333).abs() < 1e-7);
        let e = euler_oscillator_distortion(1.0, 0.1).unwrap();
        assert!((e.frequency - (1.0 - 0.01 / 3.0)).abs() < 1e-15);
        assert_eq!(e.growth_rate, 0.05);
        assert!(euler_oscillator_distortion(0.0, 0.1).is_err());
    }

    #[test]
    fn euler_iterates_follow_distorted_solution() {
        let e = euler_oscillator_distortion(1.0, 0.1).unwrap();
        let (mut x, mut v) = (1.0f64, 0.0f64);
        let (mut gap_model, mut gap_exact) = (0.0f64, 0.0f64);
        for j in 1..=100 {
            let (xn, vn) = (x + 0.1 * v, v - 0.1 * x);
            x = xn;
            v = vn;
            let t = j as f64 * 0.1;
            gap_model = gap_model.max((x - e.position(1.0, 0.0, t)).abs());
            gap_exact = gap_exact.max((x - t.cos()).abs());
        }
        assert!(gap_model < gap_exact);
    }
}
