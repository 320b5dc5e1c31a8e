//! Linear second-order systems `M q̈ + C q̇ + K q = F(t)`, the forcing
//! functions that drive them, and their first-order views.
//!
//! Every `M⁻¹x` in the crate is a solve against the factorization stored on
//! [`SecondOrderSystem`]; the inverse mass matrix is never formed.

use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Factorization, Matrix, Vector};

/// A time-dependent load vector with access to its first two derivatives.
pub trait Excitation: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, t: f64) -> Result<Vector>;

    /// `[F, F′, F″]` at `t`. `h` is the differencing step when derivatives
    /// are approximated numerically; analytic sources ignore it.
    fn value_and_derivatives(&self, t: f64, h: f64) -> Result<[Vector; 3]>;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    #[default]
    Analytic,
    CentralDifference,
}

pub type TimeFn = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

/// User-supplied closures for a forcing and (optionally) its derivatives.
#[derive(Clone)]
pub struct AnalyticForcing {
    pub dim: usize,
    pub value: TimeFn,
    pub first: Option<TimeFn>,
    pub second: Option<TimeFn>,
}

impl fmt::Debug for AnalyticForcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AnalyticForcing")
            .field("dim", &self.dim)
            .field("first", &self.first.is_some())
            .field("second", &self.second.is_some())
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    Linear,
    /// Piecewise cubic Hermite with finite-difference slopes.
    Cubic,
}

#[derive(Clone, Debug)]
pub enum ForcingKind {
    Zero {
        dim: usize,
    },
    /// `F_i(t) = a_i sin(ω_i t + φ_i)`
    Sinusoids {
        amplitude: Vec<f64>,
        frequency: Vec<f64>,
        phase: Vec<f64>,
    },
    /// `F_i(t) = a_i sign(sin(ω_i t))`, with `sign(0) = 0`.
    SquareWave {
        amplitude: Vec<f64>,
        frequency: Vec<f64>,
    },
    /// `F(t) = a exp(t / (μ t*)) (1 - t/t*)³` for `t ≤ t*`, zero afterwards.
    Pulse {
        amplitude: Vec<f64>,
        shape: f64,
        cutoff: f64,
    },
    Analytic(AnalyticForcing),
    Sampled {
        times: Vec<f64>,
        values: Vec<Vector>,
        interpolation: Interpolation,
    },
}

#[derive(Clone, Debug)]
pub struct Forcing {
    kind: ForcingKind,
    mode: DerivativeMode,
}

impl Forcing {
    pub fn new(kind: ForcingKind, mode: DerivativeMode) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match &kind {
            ForcingKind::Zero { dim } => {
                if *dim == 0 {
                    return bad("forcing dimension must be positive".into());
                }
            }
            ForcingKind::Sinusoids {
                amplitude,
                frequency,
                phase,
            } => {
                if amplitude.is_empty()
                    || frequency.len() != amplitude.len()
                    || phase.len() != amplitude.len()
                {
                    return bad("sinusoid amplitude/frequency/phase lengths differ".into());
                }
            }
            ForcingKind::SquareWave {
                amplitude,
                frequency,
            } => {
                if amplitude.is_empty() || frequency.len() != amplitude.len() {
                    return bad("square-wave amplitude/frequency lengths differ".into());
                }
                if mode != DerivativeMode::CentralDifference {
                    return bad("square-wave forcing requires central-difference derivatives".into());
                }
            }
            ForcingKind::Pulse {
                amplitude,
                shape,
                cutoff,
            } => {
                if amplitude.is_empty() {
                    return bad("pulse amplitude is empty".into());
                }
                if !(*shape > 0.0 && *cutoff > 0.0) {
                    return bad(format!("pulse needs shape > 0 and cutoff > 0, got {shape}, {cutoff}"));
                }
            }
            ForcingKind::Analytic(a) => {
                if a.dim == 0 {
                    return bad("forcing dimension must be positive".into());
                }
            }
            ForcingKind::Sampled {
                times,
                values,
                interpolation: _,
            } => {
                if times.len() < 2 || times.len() != values.len() {
                    return bad("sampled forcing needs at least two samples and one value per time".into());
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("sample times must be strictly increasing".into());
                }
                let dim = values[0].len();
                if dim == 0 || values.iter().any(|v| v.len() != dim) {
                    return bad("sampled values must share one positive dimension".into());
                }
                if mode != DerivativeMode::CentralDifference {
                    return bad("sampled forcing requires central-difference derivatives".into());
                }
            }
        }
        Ok(Forcing { kind, mode })
    }

    pub fn zero(dim: usize) -> Self {
        Forcing {
            kind: ForcingKind::Zero { dim },
            mode: DerivativeMode::Analytic,
        }
    }

    pub fn sinusoids(
        amplitude: Vec<f64>,
        frequency: Vec<f64>,
        phase: Vec<f64>,
        mode: DerivativeMode,
    ) -> Result<Self> {
        Self::new(
            ForcingKind::Sinusoids {
                amplitude,
                frequency,
                phase,
            },
            mode,
        )
    }

    pub fn square_wave(amplitude: Vec<f64>, frequency: Vec<f64>) -> Result<Self> {
        Self::new(
            ForcingKind::SquareWave {
                amplitude,
                frequency,
            },
            DerivativeMode::CentralDifference,
        )
    }

    pub fn pulse(amplitude: Vec<f64>, shape: f64, cutoff: f64, mode: DerivativeMode) -> Result<Self> {
        Self::new(
            ForcingKind::Pulse {
                amplitude,
                shape,
                cutoff,
            },
            mode,
        )
    }

    pub fn analytic(
        dim: usize,
        value: TimeFn,
        first: Option<TimeFn>,
        second: Option<TimeFn>,
        mode: DerivativeMode,
    ) -> Result<Self> {
        Self::new(
            ForcingKind::Analytic(AnalyticForcing {
                dim,
                value,
                first,
                second,
            }),
            mode,
        )
    }

    pub fn constant(value: Vector) -> Self {
        let n = value.len();
        let v = value.clone();
        Forcing {
            kind: ForcingKind::Analytic(AnalyticForcing {
                dim: n,
                value: Arc::new(move |_| v.clone()),
                first: Some(Arc::new(move |_| Vector::zeros(n))),
                second: Some(Arc::new(move |_| Vector::zeros(n))),
            }),
            mode: DerivativeMode::Analytic,
        }
    }

    pub fn sampled(times: Vec<f64>, values: Vec<Vector>, interpolation: Interpolation) -> Result<Self> {
        Self::new(
            ForcingKind::Sampled {
                times,
                values,
                interpolation,
            },
            DerivativeMode::CentralDifference,
        )
    }

    pub fn kind(&self) -> &ForcingKind {
        &self.kind
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn with_mode(&self, mode: DerivativeMode) -> Result<Self> {
        Self::new(self.kind.clone(), mode)
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ForcingKind::Zero { dim } => *dim,
            ForcingKind::Sinusoids { amplitude, .. }
            | ForcingKind::SquareWave { amplitude, .. }
            | ForcingKind::Pulse { amplitude, .. } => amplitude.len(),
            ForcingKind::Analytic(a) => a.dim,
            ForcingKind::Sampled { values, .. } => values[0].len(),
        }
    }

    pub fn evaluate(&self, t: f64) -> Result<Vector> {
        check_time(t)?;
        Ok(match &self.kind {
            ForcingKind::Zero { dim } => Vector::zeros(*dim),
            ForcingKind::Sinusoids {
                amplitude,
                frequency,
                phase,
            } => Vector::from_iterator(
                amplitude.len(),
                (0..amplitude.len()).map(|i| amplitude[i] * (frequency[i] * t + phase[i]).sin()),
            ),
            ForcingKind::SquareWave {
                amplitude,
                frequency,
            } => Vector::from_iterator(
                amplitude.len(),
                (0..amplitude.len()).map(|i| amplitude[i] * sign((frequency[i] * t).sin())),
            ),
            ForcingKind::Pulse {
                amplitude,
                shape,
                cutoff,
            } => {
                let s = pulse_profile(t, *shape, *cutoff, 0);
                Vector::from_iterator(amplitude.len(), amplitude.iter().map(|a| a * s))
            }
            ForcingKind::Analytic(a) => {
                let v = (a.value)(t);
                if v.len() != a.dim {
                    return Err(Error::Dimension {
                        what: "analytic forcing value",
                        expected: a.dim,
                        found: v.len(),
                    });
                }
                v
            }
            ForcingKind::Sampled {
                times,
                values,
                interpolation,
            } => interpolate(times, values, *interpolation, t)?,
        })
    }

    /// First (`order = 1`) or second (`order = 2`) time derivative.
    ///
    /// In central-difference mode `h` is the stencil step; near `t = 0` the
    /// one-sided second-order stencils are used instead.
    pub fn derivative(&self, t: f64, order: u8, h: f64) -> Result<Vector> {
        if order != 1 && order != 2 {
            return Err(Error::InvalidParameter(format!(
                "derivative order must be 1 or 2, got {order}"
            )));
        }
        check_time(t)?;
        match self.mode {
            DerivativeMode::Analytic => self.analytic_derivative(t, order),
            DerivativeMode::CentralDifference => {
                check_step(h)?;
                let [_, d1, d2] = self.differenced(t, h, order == 2)?;
                Ok(if order == 1 { d1 } else { d2 })
            }
        }
    }

    fn analytic_derivative(&self, t: f64, order: u8) -> Result<Vector> {
        match &self.kind {
            ForcingKind::Zero { dim } => Ok(Vector::zeros(*dim)),
            ForcingKind::Sinusoids {
                amplitude,
                frequency,
                phase,
            } => Ok(Vector::from_iterator(
                amplitude.len(),
                (0..amplitude.len()).map(|i| {
                    let arg = frequency[i] * t + phase[i];
                    if order == 1 {
                        amplitude[i] * frequency[i] * arg.cos()
                    } else {
                        -amplitude[i] * frequency[i] * frequency[i] * arg.sin()
                    }
                }),
            )),
            ForcingKind::Pulse {
                amplitude,
                shape,
                cutoff,
            } => {
                let s = pulse_profile(t, *shape, *cutoff, order);
                Ok(Vector::from_iterator(amplitude.len(), amplitude.iter().map(|a| a * s)))
            }
            ForcingKind::Analytic(a) => {
                let f = if order == 1 { &a.first } else { &a.second };
                match f {
                    Some(f) => {
                        let v = f(t);
                        if v.len() != a.dim {
                            return Err(Error::Dimension {
                                what: "analytic forcing derivative",
                                expected: a.dim,
                                found: v.len(),
                            });
                        }
                        Ok(v)
                    }
                    None => Err(Error::Unsupported(format!(
                        "analytic forcing has no closure for derivative order {order}"
                    ))),
                }
            }
            ForcingKind::SquareWave { .. } | ForcingKind::Sampled { .. } => Err(Error::Unsupported(
                "square-wave and sampled forcings have no analytic derivatives".into(),
            )),
        }
    }

    /// `[F, F′, F″]` from finite differences. Three evaluations for
    /// `t ≥ h`; four with the one-sided stencils otherwise (three when
    /// `want_second` is false).
    fn differenced(&self, t: f64, h: f64, want_second: bool) -> Result<[Vector; 3]> {
        let f0 = self.evaluate(t)?;
        if t - h >= 0.0 {
            let fm = self.evaluate(t - h)?;
            let fp = self.evaluate(t + h)?;
            let d1 = (&fp - &fm) / (2.0 * h);
            let d2 = (&fp - &f0 * 2.0 + &fm) / (h * h);
            Ok([f0, d1, d2])
        } else {
            let f1 = self.evaluate(t + h)?;
            let f2 = self.evaluate(t + 2.0 * h)?;
            let d1 = (&f0 * -3.0 + &f1 * 4.0 - &f2) / (2.0 * h);
            let d2 = if want_second {
                let f3 = self.evaluate(t + 3.0 * h)?;
                (&f0 * 2.0 - &f1 * 5.0 + &f2 * 4.0 - &f3) / (h * h)
            } else {
                Vector::zeros(f0.len())
            };
            Ok([f0, d1, d2])
        }
    }
}

impl Excitation for Forcing {
    fn dim(&self) -> usize {
        Forcing::dim(self)
    }

    fn value(&self, t: f64) -> Result<Vector> {
        self.evaluate(t)
    }

    fn value_and_derivatives(&self, t: f64, h: f64) -> Result<[Vector; 3]> {
        check_time(t)?;
        match self.mode {
            DerivativeMode::Analytic => Ok([
                self.evaluate(t)?,
                self.analytic_derivative(t, 1)?,
                self.analytic_derivative(t, 2)?,
            ]),
            DerivativeMode::CentralDifference => {
                check_step(h)?;
                self.differenced(t, h, true)
            }
        }
    }
}

pub fn evaluate_forcing(f: &Forcing, t: f64) -> Result<Vector> {
    f.evaluate(t)
}

pub fn forcing_derivative(f: &Forcing, t: f64, order: u8, dt: f64) -> Result<Vector> {
    f.derivative(t, order, dt)
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("forcing time must be finite and >= 0, got {t}")))
    }
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("differencing step must be positive, got {h}")))
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `order`-th derivative of `exp(t/(μt*)) (1 - t/t*)³`, zero past the cutoff.
/// At `t = t*` the left limit is returned.
fn pulse_profile(t: f64, shape: f64, cutoff: f64, order: u8) -> f64 {
    if t > cutoff {
        return 0.0;
    }
    let r = 1.0 / (shape * cutoff);
    let u = 1.0 - t / cutoff;
    let e = (t * r).exp();
    let tc = cutoff;
    match order {
        0 => e * u.powi(3),
        1 => e * (r * u.powi(3) - 3.0 * u * u / tc),
        _ => e * (r * r * u.powi(3) - 6.0 * r * u * u / tc + 6.0 * u / (tc * tc)),
    }
}

fn interpolate(times: &[f64], values: &[Vector], interp: Interpolation, t: f64) -> Result<Vector> {
    let (start, end) = (times[0], times[times.len() - 1]);
    if t < start || t > end {
        return Err(Error::OutOfRange { t, start, end });
    }
    // index of the left sample of the bracketing interval
    let i = match times.partition_point(|&s| s <= t) {
        0 => 0,
        p if p >= times.len() => times.len() - 2,
        p => p - 1,
    };
    let (t0, t1) = (times[i], times[i + 1]);
    let h = t1 - t0;
    let s = (t - t0) / h;
    let (y0, y1) = (&values[i], &values[i + 1]);
    match interp {
        Interpolation::Linear => Ok(y0 * (1.0 - s) + y1 * s),
        Interpolation::Cubic => {
            let slope = |k: usize| -> Vector {
                if k == 0 {
                    (&values[1] - &values[0]) / (times[1] - times[0])
                } else if k == times.len() - 1 {
                    (&values[k] - &values[k - 1]) / (times[k] - times[k - 1])
                } else {
                    (&values[k + 1] - &values[k - 1]) / (times[k + 1] - times[k - 1])
                }
            };
            let (m0, m1) = (slope(i), slope(i + 1));
            let s2 = s * s;
            let s3 = s2 * s;
            let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
            let h10 = s3 - 2.0 * s2 + s;
            let h01 = -2.0 * s3 + 3.0 * s2;
            let h11 = s3 - s2;
            Ok(y0 * h00 + m0 * (h10 * h) + y1 * h01 + m1 * (h11 * h))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Storage {
    #[default]
    Dense,
    Sparse,
}

/// `M q̈ + C q̇ + K q = F(t)` with initial conditions and a stored mass factorization.
#[derive(Clone, Debug)]
pub struct SecondOrderSystem {
    mass: Arc<Matrix>,
    damping: Arc<Matrix>,
    stiffness: Arc<Matrix>,
    forcing: Arc<dyn Excitation>,
    q0: Vector,
    v0: Vector,
    storage: Storage,
    mass_lu: Arc<Factorization>,
}

pub struct SystemBuilder {
    mass: Matrix,
    damping: Matrix,
    stiffness: Matrix,
    forcing: Option<Arc<dyn Excitation>>,
    q0: Option<Vector>,
    v0: Option<Vector>,
    storage: Option<Storage>,
}

impl SystemBuilder {
    pub fn forcing(mut self, f: impl Excitation + 'static) -> Self {
        self.forcing = Some(Arc::new(f));
        self
    }

    pub fn shared_forcing(mut self, f: Arc<dyn Excitation>) -> Self {
        self.forcing = Some(f);
        self
    }

    pub fn initial_conditions(mut self, q0: Vector, v0: Vector) -> Self {
        self.q0 = Some(q0);
        self.v0 = Some(v0);
        self
    }

    pub fn storage(mut self, storage: Storage) -> Self {
        self.storage = Some(storage);
        self
    }

    pub fn build(self) -> Result<SecondOrderSystem> {
        let n = self.mass.nrows();
        if n == 0 {
            return Err(Error::InvalidParameter("system needs at least one degree of freedom".into()));
        }
        for (what, m) in [
            ("mass", &self.mass),
            ("damping", &self.damping),
            ("stiffness", &self.stiffness),
        ] {
            if m.nrows() != m.ncols() {
                return Err(Error::NotSquare {
                    what,
                    rows: m.nrows(),
                    cols: m.ncols(),
                });
            }
            if m.nrows() != n {
                return Err(Error::Dimension {
                    what,
                    expected: n,
                    found: m.nrows(),
                });
            }
        }
        let storage = self.storage.unwrap_or(if self.mass.is_sparse() {
            Storage::Sparse
        } else {
            Storage::Dense
        });
        let sparse = storage == Storage::Sparse;
        let mass = self.mass.into_storage(sparse);
        let mass_lu = Factorization::new(&mass).map_err(|e| match e {
            Error::Singular(msg) => Error::Singular(format!("mass matrix: {msg}")),
            other => other,
        })?;
        let convert = |m: Matrix| {
            if sparse {
                m.into_storage(true).compact()
            } else {
                m.into_storage(false)
            }
        };
        let forcing = self.forcing.unwrap_or_else(|| Arc::new(Forcing::zero(n)));
        if forcing.dim() != n {
            return Err(Error::Dimension {
                what: "forcing",
                expected: n,
                found: forcing.dim(),
            });
        }
        let q0 = self.q0.unwrap_or_else(|| Vector::zeros(n));
        let v0 = self.v0.unwrap_or_else(|| Vector::zeros(n));
        for (what, v) in [("q0", &q0), ("v0", &v0)] {
            if v.len() != n {
                return Err(Error::Dimension {
                    what,
                    expected: n,
                    found: v.len(),
                });
            }
        }
        Ok(SecondOrderSystem {
            mass: Arc::new(mass),
            damping: Arc::new(convert(self.damping)),
            stiffness: Arc::new(convert(self.stiffness)),
            forcing,
            q0,
            v0,
            storage,
            mass_lu: Arc::new(mass_lu),
        })
    }
}

impl SecondOrderSystem {
    pub fn builder(mass: Matrix, damping: Matrix, stiffness: Matrix) -> SystemBuilder {
        SystemBuilder {
            mass,
            damping,
            stiffness,
            forcing: None,
            q0: None,
            v0: None,
            storage: None,
        }
    }

    pub fn n(&self) -> usize {
        self.q0.len()
    }

    pub fn mass(&self) -> &Matrix {
        &self.mass
    }

    pub fn damping(&self) -> &Matrix {
        &self.damping
    }

    pub fn stiffness(&self) -> &Matrix {
        &self.stiffness
    }

    pub fn forcing(&self) -> &Arc<dyn Excitation> {
        &self.forcing
    }

    pub fn q0(&self) -> &Vector {
        &self.q0
    }

    pub fn v0(&self) -> &Vector {
        &self.v0
    }

    pub fn storage(&self) -> Storage {
        self.storage
    }

    pub fn mass_factorization(&self) -> &Factorization {
        &self.mass_lu
    }

    /// `M⁻¹ x`
    pub fn solve_mass(&self, x: &Vector) -> Vector {
        self.mass_lu.solve(x)
    }

    /// `M⁻¹ X` as a dense matrix.
    pub fn solve_mass_matrix(&self, x: &Matrix) -> DMatrix<f64> {
        self.mass_lu.solve_matrix(&x.to_dense())
    }

    /// `M⁻¹ (F(t) − C v − K q)`
    pub fn acceleration(&self, t: f64, q: &Vector, v: &Vector) -> Result<Vector> {
        let mut rhs = self.forcing.value(t)?;
        self.damping.gemv(&mut rhs, -1.0, v, 1.0);
        self.stiffness.gemv(&mut rhs, -1.0, q, 1.0);
        self.mass_lu.solve_in_place(&mut rhs);
        Ok(rhs)
    }

    /// `M a + C v + K q − F(t)`
    pub fn residual(&self, t: f64, q: &Vector, v: &Vector, a: &Vector) -> Result<Vector> {
        let mut r = -self.forcing.value(t)?;
        self.mass.gemv(&mut r, 1.0, a, 1.0);
        self.damping.gemv(&mut r, 1.0, v, 1.0);
        self.stiffness.gemv(&mut r, 1.0, q, 1.0);
        Ok(r)
    }

    /// Same mass matrix and initial conditions with new damping, stiffness and forcing.
    pub fn with_parts(
        &self,
        damping: Matrix,
        stiffness: Matrix,
        forcing: Arc<dyn Excitation>,
    ) -> Result<Self> {
        let n = self.n();
        for (what, m) in [("damping", &damping), ("stiffness", &stiffness)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Dimension {
                    what,
                    expected: n,
                    found: m.nrows(),
                });
            }
        }
        if forcing.dim() != n {
            return Err(Error::Dimension {
                what: "forcing",
                expected: n,
                found: forcing.dim(),
            });
        }
        let sparse = self.storage == Storage::Sparse;
        let convert = |m: Matrix| {
            if sparse {
                m.into_storage(true).compact()
            } else {
                m.into_storage(false)
            }
        };
        Ok(SecondOrderSystem {
            damping: Arc::new(convert(damping)),
            stiffness: Arc::new(convert(stiffness)),
            forcing,
            ..self.clone()
        })
    }

    pub fn with_forcing(&self, forcing: Arc<dyn Excitation>) -> Result<Self> {
        self.with_parts((*self.damping).clone(), (*self.stiffness).clone(), forcing)
    }

    pub fn with_initial_conditions(&self, q0: Vector, v0: Vector) -> Result<Self> {
        let n = self.n();
        for (what, v) in [("q0", &q0), ("v0", &v0)] {
            if v.len() != n {
                return Err(Error::Dimension {
                    what,
                    expected: n,
                    found: v.len(),
                });
            }
        }
        Ok(SecondOrderSystem {
            q0,
            v0,
            ..self.clone()
        })
    }

    /// Hash of the matrices and initial conditions, for trajectory metadata.
    pub fn digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for m in [&*self.mass, &*self.damping, &*self.stiffness] {
            m.nrows().hash(&mut h);
            match m {
                Matrix::Dense(d) => d.iter().for_each(|v| v.to_bits().hash(&mut h)),
                Matrix::Sparse(s) => s.triplet_iter().for_each(|(i, j, v)| {
                    (i, j, v.to_bits()).hash(&mut h);
                }),
            }
        }
        self.q0.iter().chain(self.v0.iter()).for_each(|v| v.to_bits().hash(&mut h));
        h.finish()
    }
}

/// `½ vᵀ M v + ½ qᵀ K q`
pub fn total_energy(sys: &SecondOrderSystem, q: &Vector, v: &Vector) -> Result<f64> {
    energy_with(sys.mass(), sys.stiffness(), q, v)
}

pub(crate) fn energy_with(mass: &Matrix, stiffness: &Matrix, q: &Vector, v: &Vector) -> Result<f64> {
    let n = mass.nrows();
    for (what, x) in [("q", q), ("v", v)] {
        if x.len() != n {
            return Err(Error::Dimension {
                what,
                expected: n,
                found: x.len(),
            });
        }
    }
    Ok(0.5 * v.dot(&mass.mul_vec(v)) + 0.5 * q.dot(&stiffness.mul_vec(q)))
}

/// A first-order system `ẏ = f(t, y)`.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &Vector) -> Result<Vector>;
}

/// `(q; v)` or, when autonomous, `(τ; q; v)` with `τ̇ = 1`.
#[derive(Clone, Debug)]
pub struct FirstOrderView {
    sys: SecondOrderSystem,
    autonomous: bool,
}

pub fn first_order_view(sys: &SecondOrderSystem, autonomous: bool) -> FirstOrderView {
    FirstOrderView {
        sys: sys.clone(),
        autonomous,
    }
}

impl FirstOrderView {
    pub fn system(&self) -> &SecondOrderSystem {
        &self.sys
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    fn offset(&self) -> usize {
        usize::from(self.autonomous)
    }

    pub fn initial_state(&self) -> Vector {
        self.pack(0.0, self.sys.q0(), self.sys.v0())
    }

    pub fn pack(&self, tau: f64, q: &Vector, v: &Vector) -> Vector {
        let n = self.sys.n();
        let o = self.offset();
        let mut y = Vector::zeros(2 * n + o);
        if self.autonomous {
            y[0] = tau;
        }
        y.rows_mut(o, n).copy_from(q);
        y.rows_mut(o + n, n).copy_from(v);
        y
    }

    pub fn split(&self, y: &Vector) -> (Vector, Vector) {
        let n = self.sys.n();
        let o = self.offset();
        (y.rows(o, n).into_owned(), y.rows(o + n, n).into_owned())
    }
}

impl VectorField for FirstOrderView {
    fn dim(&self) -> usize {
        2 * self.sys.n() + self.offset()
    }

    fn eval(&self, t: f64, y: &Vector) -> Result<Vector> {
        if y.len() != self.dim() {
            return Err(Error::Dimension {
                what: "first-order state",
                expected: self.dim(),
                found: y.len(),
            });
        }
        let tau = if self.autonomous { y[0] } else { t };
        let (q, v) = self.split(y);
        let a = self.sys.acceleration(tau, &q, &v)?;
        Ok(self.pack(1.0, &v, &a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sys11_forcing() -> Forcing {
        Forcing::sinusoids(
            vec![-0.040790, -0.006630, -0.006914],
            vec![0.2457, 0.2587, 0.3262],
            vec![0.0; 3],
            DerivativeMode::Analytic,
        )
        .unwrap()
    }

    #[test]
    fn sinusoid_bank_vanishes_at_zero() {
        assert_eq!(sys11_forcing().evaluate(0.0).unwrap(), Vector::zeros(3));
    }

    #[test]
    fn pulse_is_zero_at_and_after_cutoff() {
        let p = Forcing::pulse(vec![1.0, 0.0, 0.0], 0.2, 14.0, DerivativeMode::Analytic).unwrap();
        assert_eq!(p.evaluate(14.0).unwrap(), Vector::zeros(3));
        assert_eq!(p.evaluate(20.0).unwrap(), Vector::zeros(3));
        assert!((p.evaluate(0.0).unwrap()[0] - 1.0).abs() < 1e-15);
        assert_eq!(p.derivative(14.0, 2, 0.0).unwrap(), Vector::zeros(3));
    }

    #[test]
    fn pulse_derivatives_match_differences() {
        let p = Forcing::pulse(vec![1.0], 0.2, 14.0, DerivativeMode::Analytic).unwrap();
        let h = 1e-4;
        for &t in &[0.5, 3.0, 9.0, 13.5] {
            let fd1 = (p.evaluate(t + h).unwrap()[0] - p.evaluate(t - h).unwrap()[0]) / (2.0 * h);
            let fd2 = (p.evaluate(t + h).unwrap()[0] - 2.0 * p.evaluate(t).unwrap()[0]
                + p.evaluate(t - h).unwrap()[0])
                / (h * h);
            assert!((p.derivative(t, 1, 0.0).unwrap()[0] - fd1).abs() < 1e-6 * (1.0 + fd1.abs()));
            assert!((p.derivative(t, 2, 0.0).unwrap()[0] - fd2).abs() < 1e-4 * (1.0 + fd2.abs()));
        }
    }

    #[test]
    fn square_wave_at_one() {
        let sq = Forcing::square_wave(
            vec![-0.040790, -0.006630, -0.006914],
            vec![0.2457, 0.2587, 0.3262],
        )
        .unwrap();
        let f = sq.evaluate(1.0).unwrap();
        assert_eq!(f.as_slice(), &[-0.040790, -0.006630, -0.006914]);
        assert_eq!(sq.evaluate(0.0).unwrap(), Vector::zeros(3));
    }

    #[test]
    fn square_wave_rejects_analytic_mode() {
        let r = Forcing::new(
            ForcingKind::SquareWave {
                amplitude: vec![1.0],
                frequency: vec![1.0],
            },
            DerivativeMode::Analytic,
        );
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn constant_forcing_has_zero_derivative() {
        let c = Forcing::constant(Vector::from_vec(vec![2.0, -1.0]));
        assert_eq!(c.derivative(3.7, 1, 0.1).unwrap(), Vector::zeros(2));
        let cd = c.with_mode(DerivativeMode::CentralDifference).unwrap();
        assert_eq!(cd.derivative(3.7, 1, 0.1).unwrap(), Vector::zeros(2));
        assert_eq!(cd.derivative(0.0, 2, 0.1).unwrap(), Vector::zeros(2));
    }

    #[test]
    fn central_stencils_exact_on_linear_forcing() {
        let f = Forcing::analytic(
            1,
            Arc::new(|t| Vector::from_element(1, 0.5 * t)),
            None,
            None,
            DerivativeMode::CentralDifference,
        )
        .unwrap();
        // dyadic values keep the arithmetic exact
        assert_eq!(f.derivative(1.0, 1, 0.25).unwrap()[0], 0.5);
        assert_eq!(f.derivative(1.0, 2, 0.25).unwrap()[0], 0.0);
        assert_eq!(f.derivative(0.0, 1, 0.25).unwrap()[0], 0.5);
        assert_eq!(f.derivative(0.0, 2, 0.25).unwrap()[0], 0.0);
    }

    #[test]
    fn analytic_without_closure_is_unsupported() {
        let f = Forcing::analytic(
            1,
            Arc::new(|t| Vector::from_element(1, t)),
            None,
            None,
            DerivativeMode::Analytic,
        )
        .unwrap();
        assert!(matches!(f.derivative(1.0, 1, 0.1), Err(Error::Unsupported(_))));
    }

    fn oscillator_forcing(mode: DerivativeMode) -> Forcing {
        let w = 2.0 * PI;
        Forcing::sinusoids(vec![0.8], vec![10.0 * w], vec![0.3], mode).unwrap()
    }

    #[test]
    fn central_difference_converges_at_second_order() {
        let exact = oscillator_forcing(DerivativeMode::Analytic);
        let num = oscillator_forcing(DerivativeMode::CentralDifference);
        let t = 0.213;
        for order in [1u8, 2] {
            let want = exact.derivative(t, order, 0.0).unwrap()[0];
            let errs: Vec<f64> = (0..5)
                .map(|k| {
                    let h = 1e-3 / 2f64.powi(k);
                    (num.derivative(t, order, h).unwrap()[0] - want).abs()
                })
                .collect();
            for w in errs.windows(2) {
                let p = (w[0] / w[1]).log2();
                assert!((p - 2.0).abs() < 0.2, "order {order}: slope {p}");
            }
        }
    }

    #[test]
    fn one_sided_stencils_are_second_order() {
        let exact = oscillator_forcing(DerivativeMode::Analytic);
        let num = oscillator_forcing(DerivativeMode::CentralDifference);
        let t = 0.0;
        for order in [1u8, 2] {
            let want = exact.derivative(t, order, 0.0).unwrap()[0];
            let e1 = (num.derivative(t, order, 1e-3).unwrap()[0] - want).abs();
            let e2 = (num.derivative(t, order, 5e-4).unwrap()[0] - want).abs();
            let p = (e1 / e2).log2();
            assert!((p - 2.0).abs() < 0.25, "order {order}: slope {p}");
        }
    }

    #[test]
    fn sampled_linear_and_range() {
        let f = Forcing::sampled(
            vec![0.0, 1.0, 2.0],
            vec![
                Vector::from_element(1, 0.0),
                Vector::from_element(1, 2.0),
                Vector::from_element(1, 0.0),
            ],
            Interpolation::Linear,
        )
        .unwrap();
        assert_eq!(f.evaluate(0.5).unwrap()[0], 1.0);
        assert_eq!(f.evaluate(2.0).unwrap()[0], 0.0);
        assert!(matches!(f.evaluate(2.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn sampled_cubic_reproduces_nodes_and_quadratic_inside() {
        let times: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let values = times.iter().map(|t| Vector::from_element(1, t * t)).collect();
        let f = Forcing::sampled(times, values, Interpolation::Cubic).unwrap();
        assert!((f.evaluate(0.3).unwrap()[0] - 0.09).abs() < 1e-15);
        // central slopes are exact for quadratics away from the ends
        assert!((f.evaluate(0.55).unwrap()[0] - 0.3025).abs() < 1e-14);
    }

    #[test]
    fn negative_time_rejected() {
        assert!(sys11_forcing().evaluate(-1.0).is_err());
    }

    fn unit_system(n: usize) -> SecondOrderSystem {
        SecondOrderSystem::builder(Matrix::identity(n), Matrix::zeros(n, false), Matrix::identity(n))
            .build()
            .unwrap()
    }

    #[test]
    fn energy_basics() {
        let s = unit_system(2);
        let z = Vector::zeros(2);
        assert_eq!(total_energy(&s, &z, &z).unwrap(), 0.0);
        let q = Vector::from_vec(vec![1.0, 0.0]);
        assert_eq!(total_energy(&s, &q, &z).unwrap(), 0.5);
        assert!(total_energy(&s, &Vector::zeros(3), &z).is_err());
    }

    #[test]
    fn singular_mass_rejected() {
        let r = SecondOrderSystem::builder(
            Matrix::from_row_slice(2, &[1.0, 1.0, 1.0, 1.0]),
            Matrix::zeros(2, false),
            Matrix::identity(2),
        )
        .build();
        assert!(matches!(r, Err(Error::Singular(_))));
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let r = SecondOrderSystem::builder(Matrix::identity(2), Matrix::zeros(3, false), Matrix::identity(2))
            .build();
        assert!(matches!(r, Err(Error::Dimension { .. })));
        let r = SecondOrderSystem::builder(Matrix::identity(2), Matrix::zeros(2, false), Matrix::identity(2))
            .initial_conditions(Vector::zeros(3), Vector::zeros(2))
            .build();
        assert!(r.is_err());
    }

    #[test]
    fn free_particle_field() {
        let s = SecondOrderSystem::builder(
            Matrix::identity(2),
            Matrix::zeros(2, false),
            Matrix::zeros(2, false),
        )
        .build()
        .unwrap();
        let view = first_order_view(&s, false);
        let y = Vector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(view.eval(0.0, &y).unwrap().as_slice(), &[3.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn oscillator_field_and_autonomous_clock() {
        let w2 = 4.0;
        let s = SecondOrderSystem::builder(
            Matrix::identity(1),
            Matrix::zeros(1, false),
            Matrix::from_row_slice(1, &[w2]),
        )
        .build()
        .unwrap();
        let view = first_order_view(&s, false);
        let dy = view.eval(0.0, &Vector::from_vec(vec![0.5, -1.0])).unwrap();
        assert_eq!(dy.as_slice(), &[-1.0, -2.0]);
        let aut = first_order_view(&s, true);
        assert_eq!(aut.dim(), 3);
        let dy = aut.eval(99.0, &Vector::from_vec(vec![0.0, 0.5, -1.0])).unwrap();
        assert_eq!(dy.as_slice(), &[1.0, -1.0, -2.0]);
        assert_eq!(aut.initial_state()[0], 0.0);
    }
}
