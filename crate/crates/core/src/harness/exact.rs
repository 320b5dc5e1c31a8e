//! Closed-form reference solutions.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::model::SecondOrderSystem;

pub type ExactFn = Arc<dyn Fn(f64) -> Result<(Vector, Vector)> + Send + Sync>;

/// Underdamped `m ẍ + c ẋ + k x = a cos(Ω t)`: particular plus homogeneous solution.
#[derive(Clone, Copy, Debug)]
pub struct DrivenOscillator {
    pub m: f64,
    pub c: f64,
    pub k: f64,
    pub amplitude: f64,
    pub drive: f64,
    pub x0: f64,
    pub v0: f64,
}

impl DrivenOscillator {
    pub fn state(&self, t: f64) -> (f64, f64) {
        let &DrivenOscillator {
            m,
            c,
            k,
            amplitude,
            drive: w_f,
            x0,
            v0,
        } = self;
        // particular x_p = X cos Ωt + Y sin Ωt
        let d = k - m * w_f * w_f;
        let det = d * d + (c * w_f).powi(2);
        let x = amplitude * d / det;
        let y = amplitude * c * w_f / det;
        let wn = (k / m).sqrt();
        let zeta = c / (2.0 * m * wn);
        let wd = wn * (1.0 - zeta * zeta).sqrt();
        let sigma = zeta * wn;
        let a = x0 - x;
        let b = (v0 - y * w_f + sigma * a) / wd;
        let e = (-sigma * t).exp();
        let (cd, sd) = ((wd * t).cos(), (wd * t).sin());
        let (cf, sf) = ((w_f * t).cos(), (w_f * t).sin());
        let pos = e * (a * cd + b * sd) + x * cf + y * sf;
        let vel = e * (-sigma * (a * cd + b * sd) + wd * (-a * sd + b * cd)) + w_f * (-x * sf + y * cf);
        (pos, vel)
    }

    pub fn exact_fn(self) -> ExactFn {
        Arc::new(move |t| {
            let (q, v) = self.state(t);
            Ok((Vector::from_element(1, q), Vector::from_element(1, v)))
        })
    }
}

/// Free response of an undamped, unforced system by modal superposition.
#[derive(Clone, Debug)]
pub struct ModalReference {
    pub frequencies: Vector,
    modes: DMatrix<f64>,
    position: Vector,
    velocity: Vector,
}

impl ModalReference {
    /// Solves `K φ = ω² M φ` through the Cholesky factor of a symmetric
    /// positive-definite `M`. Damping must be zero; the forcing is ignored.
    pub fn new(sys: &SecondOrderSystem) -> Result<Self> {
        if !sys.damping().is_all_zero() {
            return Err(Error::Unsupported("modal reference needs an undamped system".into()));
        }
        let m = sys.mass().to_dense();
        let k = sys.stiffness().to_dense();
        let chol = m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("mass matrix is not symmetric positive definite".into()))?;
        let l = chol.l();
        let linv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("Cholesky factor".into()))?;
        let a = &linv * &k * linv.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let eig = SymmetricEigen::new(a);
        if eig.eigenvalues.iter().any(|&w2| w2 <= 0.0) {
            return Err(Error::InvalidParameter("stiffness matrix is not positive definite".into()));
        }
        let modes = linv.transpose() * eig.eigenvectors;
        let proj = modes.transpose() * &m;
        Ok(ModalReference {
            frequencies: eig.eigenvalues.map(f64::sqrt),
            position: &proj * sys.q0(),
            velocity: &proj * sys.v0(),
            modes,
        })
    }

    pub fn max_frequency(&self) -> f64 {
        self.frequencies.max()
    }

    pub fn state(&self, t: f64) -> (Vector, Vector) {
        let n = self.frequencies.len();
        let mut cq = Vector::zeros(n);
        let mut cv = Vector::zeros(n);
        for i in 0..n {
            let w = self.frequencies[i];
            let (c, s) = ((w * t).cos(), (w * t).sin());
            cq[i] = self.position[i] * c + self.velocity[i] / w * s;
            cv[i] = -self.position[i] * w * s + self.velocity[i] * c;
        }
        (&self.modes * cq, &self.modes * cv)
    }

    pub fn exact_fn(self) -> ExactFn {
        let me = Arc::new(self);
        Arc::new(move |t| Ok(me.state(t)))
    }
}
