//! Compensated systems: modified damping, stiffness and forcing chosen so
//! that the Newmark distortion cancels through a given order in `Δt`.
//!
//! * [`damping_compensation`] removes the numerical damping for any `(γ, β)`.
//! * [`fourth_order_compensation`] makes `γ = 1/2, β = 1/6` fourth-order accurate.
//!
//! Compensated matrices depend on `Δt` and must only be stepped with the step
//! (and Newmark parameters) they were built for; [`CompensatedSystem::check_method`]
//! enforces this.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::Method;
use crate::linalg::{store_like, Matrix, Vector};
use crate::model::{Excitation, SecondOrderSystem, Storage};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompensationKind {
    #[default]
    None,
    Damping,
    FourthOrder,
}

pub const FOURTH_ORDER_GAMMA: f64 = 0.5;
pub const FOURTH_ORDER_BETA: f64 = 1.0 / 6.0;

#[derive(Clone, Debug)]
pub struct CompensatedSystem {
    pub kind: CompensationKind,
    pub damping: Matrix,
    pub stiffness: Matrix,
    pub forcing: Arc<dyn Excitation>,
    pub dt: f64,
    pub gamma: f64,
    pub beta: f64,
    base: SecondOrderSystem,
}

impl CompensatedSystem {
    pub fn base(&self) -> &SecondOrderSystem {
        &self.base
    }

    /// The compensated equation with the original mass matrix and initial conditions.
    pub fn system(&self) -> Result<SecondOrderSystem> {
        self.base
            .with_parts(self.damping.clone(), self.stiffness.clone(), self.forcing.clone())
    }

    /// Refuses any method other than Newmark with the parameters and step
    /// this system was built for. Parameters are compared exactly.
    pub fn check_method(&self, method: &Method, dt: f64) -> Result<()> {
        let (gamma, beta) = match method {
            Method::Newmark { gamma, beta } => (*gamma, *beta),
            other => {
                return match self.kind {
                    CompensationKind::FourthOrder => Err(Error::CompensationMismatch {
                        gamma: f64::NAN,
                        beta: f64::NAN,
                    }),
                    _ => Err(Error::Unsupported(format!("compensated systems run with Newmark only, not {other}"))),
                };
            }
        };
        if gamma != self.gamma || beta != self.beta {
            return match self.kind {
                CompensationKind::FourthOrder => Err(Error::CompensationMismatch { gamma, beta }),
                _ => Err(Error::InvalidParameter(format!(
                    "damping compensation built for gamma = {}, beta = {}, not {gamma}, {beta}",
                    self.gamma, self.beta
                ))),
            };
        }
        if dt != self.dt {
            return Err(Error::InvalidParameter(format!(
                "compensation built for dt = {}, not {dt}",
                self.dt
            )));
        }
        Ok(())
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt >= 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("time step must be >= 0, got {dt}")))
    }
}

/// `Ĉ = C + Δt Ĉ₁ + Δt² Ĉ₂` with
/// `Ĉ₁ = (γ−½)(CM⁻¹C − K)` and
/// `Ĉ₂ = ((γ−½)² − 1/12) CM⁻¹CM⁻¹C − (γ² − γ/2 − β + 1/12) KM⁻¹C + (1/12) CM⁻¹K`.
pub fn damping_compensation(sys: &SecondOrderSystem, gamma: f64, beta: f64, dt: f64) -> Result<CompensatedSystem> {
    check_dt(dt)?;
    let lu = sys.mass_factorization();
    let (c, k) = (sys.damping(), sys.stiffness());
    let cd = c.to_dense();
    let kd = k.to_dense();
    let minv_c = lu.solve_matrix(&cd);
    let minv_k = lu.solve_matrix(&kd);
    let cmc = c.mul_dense(&minv_c);
    let cmcmc = c.mul_dense(&lu.solve_matrix(&cmc));
    let kmc = k.mul_dense(&minv_c);
    let cmk = c.mul_dense(&minv_k);

    let d = gamma - 0.5;
    let c1 = (&cmc - &kd) * d;
    let c2 = cmcmc * (d * d - 1.0 / 12.0) - kmc * (gamma * gamma - 0.5 * gamma - beta + 1.0 / 12.0) + cmk / 12.0;
    let c_hat = cd + c1 * dt + c2 * (dt * dt);

    Ok(CompensatedSystem {
        kind: CompensationKind::Damping,
        damping: store_like(c_hat, sys.storage() == Storage::Sparse),
        stiffness: k.clone(),
        forcing: sys.forcing().clone(),
        dt,
        gamma,
        beta,
        base: sys.clone(),
    })
}

/// Fourth-order compensation for `γ = 1/2, β = 1/6`:
///
/// * `Ĉ = C + (Δt²/12)(CM⁻¹K + KM⁻¹C − CM⁻¹CM⁻¹C)`
/// * `K̂ = K + (Δt²/12)(KM⁻¹K − CM⁻¹CM⁻¹K)`
/// * `F̂ = F − (Δt²/12)(CM⁻¹(CM⁻¹F − F′) − KM⁻¹F + F″)`
pub fn fourth_order_compensation(sys: &SecondOrderSystem, dt: f64) -> Result<CompensatedSystem> {
    check_dt(dt)?;
    let lu = sys.mass_factorization();
    let (c, k) = (sys.damping(), sys.stiffness());
    let cd = c.to_dense();
    let kd = k.to_dense();
    let w = dt * dt / 12.0;

    let (c_hat, k_hat) = if c.is_all_zero() {
        let kmk = k.mul_dense(&lu.solve_matrix(&kd));
        (cd, kd + kmk * w)
    } else {
        let minv_c = lu.solve_matrix(&cd);
        let minv_k = lu.solve_matrix(&kd);
        let cmk = c.mul_dense(&minv_k);
        let kmc = k.mul_dense(&minv_c);
        let cmc = c.mul_dense(&minv_c);
        let cmcmc = c.mul_dense(&lu.solve_matrix(&cmc));
        let kmk = k.mul_dense(&minv_k);
        let cmcmk = c.mul_dense(&lu.solve_matrix(&cmk));
        (&cd + (&cmk + kmc - cmcmc) * w, &kd + (kmk - cmcmk) * w)
    };
    let sparse = sys.storage() == Storage::Sparse;
    Ok(CompensatedSystem {
        kind: CompensationKind::FourthOrder,
        damping: store_like(c_hat, sparse),
        stiffness: store_like(k_hat, sparse),
        forcing: Arc::new(CompensatedForcing {
            sys: sys.clone(),
            dt,
        }),
        dt,
        gamma: FOURTH_ORDER_GAMMA,
        beta: FOURTH_ORDER_BETA,
        base: sys.clone(),
    })
}

/// `F̂(t)` of the fourth-order compensation. In central-difference mode each
/// evaluation samples the original forcing at `t − Δt`, `t`, `t + Δt`.
#[derive(Debug)]
pub struct CompensatedForcing {
    sys: SecondOrderSystem,
    dt: f64,
}

impl Excitation for CompensatedForcing {
    fn dim(&self) -> usize {
        self.sys.n()
    }

    fn value(&self, t: f64) -> Result<Vector> {
        let sys = &self.sys;
        if self.dt == 0.0 {
            return sys.forcing().value(t);
        }
        let [f, f1, f2] = sys.forcing().value_and_derivatives(t, self.dt)?;
        let minv_f = sys.solve_mass(&f);
        let mut inner = sys.damping().mul_vec(&minv_f) - f1;
        sys.mass_factorization().solve_in_place(&mut inner);
        let correction = sys.damping().mul_vec(&inner) - sys.stiffness().mul_vec(&minv_f) + f2;
        Ok(f - correction * (self.dt * self.dt / 12.0))
    }

    fn value_and_derivatives(&self, _t: f64, _h: f64) -> Result<[Vector; 3]> {
        Err(Error::Unsupported("compensated forcing has no derivatives".into()))
    }
}

pub fn compensated_forcing_eval(comp: &CompensatedSystem, t: f64) -> Result<Vector> {
    comp.forcing.value(t)
}
