//! JSON scenario files.
//!
//! ```json
//! {
//!   "name": "oscillator",
//!   "system": { "builtin": "oscillator-1dof" },
//!   "methods": [
//!     { "name": "newmark", "gamma": 0.5, "beta": "1/6" },
//!     { "name": "newmark", "gamma": 0.5, "beta": "1/6", "compensation": "fourth-order", "label": "n4c" },
//!     { "name": "rk4" }
//!   ],
//!   "run": { "dt": 0.0125, "t_end": 0.4, "halvings": 4 },
//!   "output": { "directory": "out", "formats": ["csv", "svg"] }
//! }
//! ```
//!
//! Unknown keys are rejected. Numbers may be written as rational strings
//! such as `"1/6"`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compensation::CompensationKind;
use crate::error::{Error, Result};
use crate::harness::builtin;
use crate::harness::{DtSchedule, MethodSpec, Reference, Scenario, Study};
use crate::integrators::{step_count, Method};
use crate::linalg::{Matrix, Vector};
use crate::model::{DerivativeMode, Forcing, Interpolation, SecondOrderSystem, Storage};

use super::matrix_market::load_matrix_market;

/// A number, or a string `"a/b"` / `"x"` holding one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Num(pub f64);

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::F(x) => Ok(Num(x)),
            Raw::S(s) => parse_number(&s).map(Num).map_err(serde::de::Error::custom),
        }
    }
}

fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("invalid number {s:?}"));
    match s.split_once('/') {
        Some((a, b)) => {
            let den = parse(b)?;
            if den == 0.0 {
                return Err(format!("zero denominator in {s:?}"));
            }
            Ok(parse(a)? / den)
        }
        None => parse(s),
    }
}

fn nums(v: &[Num]) -> Vec<f64> {
    v.iter().map(|n| n.0).collect()
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub system: SystemSection,
    #[serde(default)]
    pub forcing: Option<ForcingSection>,
    #[serde(default)]
    pub initial_conditions: Option<InitialConditions>,
    pub methods: Vec<MethodEntry>,
    #[serde(default)]
    pub compensation: CompensationSection,
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum SystemSection {
    Builtin(BuiltinSystem),
    Matrices(MatrixSystem),
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinSystem {
    pub builtin: String,
    #[serde(default)]
    pub derivatives: DerivativeMode,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSystem {
    pub mass: MatrixSource,
    #[serde(default)]
    pub damping: Option<MatrixSource>,
    pub stiffness: MatrixSource,
    #[serde(default)]
    pub storage: Option<Storage>,
}

/// A Matrix Market path (relative to the scenario file) or inline rows.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Path(PathBuf),
    Rows(Vec<Vec<Num>>),
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForcingSection {
    Zero,
    Constant {
        value: Vec<Num>,
    },
    Sinusoids {
        amplitude: Vec<Num>,
        frequency: Vec<Num>,
        #[serde(default)]
        phase: Option<Vec<Num>>,
        #[serde(default)]
        derivatives: DerivativeMode,
    },
    SquareWave {
        amplitude: Vec<Num>,
        frequency: Vec<Num>,
    },
    Pulse {
        amplitude: Vec<Num>,
        shape: Num,
        cutoff: Num,
        #[serde(default)]
        derivatives: DerivativeMode,
    },
    Sampled {
        times: Vec<Num>,
        values: Vec<Vec<Num>>,
        #[serde(default)]
        interpolation: InterpolationName,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpolationName {
    #[default]
    Linear,
    Cubic,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    pub q0: Vec<Num>,
    #[serde(default)]
    pub v0: Option<Vec<Num>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Newmark,
    GeneralizedAlpha,
    Rk4,
    ExplicitEuler,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MethodEntry {
    pub name: MethodName,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub gamma: Option<Num>,
    #[serde(default)]
    pub beta: Option<Num>,
    #[serde(default)]
    pub rho: Option<Num>,
    /// Overrides the scenario-wide compensation for this entry.
    #[serde(default)]
    pub compensation: Option<CompensationKind>,
    /// Observed order asserted by `converge --ci`.
    #[serde(default)]
    pub expected_order: Option<Num>,
    #[serde(default)]
    pub order_tolerance: Option<Num>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CompensationSection {
    #[serde(default)]
    pub kind: CompensationKind,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum DtSpec {
    One(Num),
    Many(Vec<Num>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    Rk4,
    Exact,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub dt: DtSpec,
    pub t_end: Num,
    #[serde(default)]
    pub t_eval: Option<Num>,
    #[serde(default)]
    pub halvings: Option<usize>,
    #[serde(default)]
    pub reference: Option<ReferenceKind>,
    #[serde(default)]
    pub study: StudyKind,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    #[default]
    Reference,
    Distortion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Svg,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Svg => "svg",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv]
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

/// A validated scenario together with its output settings.
#[derive(Clone, Debug)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub output: OutputSection,
    pub config: ScenarioConfig,
}

/// Parses a scenario document; schema errors carry the offending field path.
pub fn parse_config(doc: &str) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(doc);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            Error::Config(inner.to_string())
        } else {
            Error::Config(format!("{path}: {inner}"))
        }
    })
}

/// Parses and materializes a scenario; relative matrix paths resolve
/// against `base_dir`.
pub fn parse_scenario(doc: &str, base_dir: &Path) -> Result<LoadedScenario> {
    let config = parse_config(doc)?;
    let scenario = config.materialize(base_dir)?;
    Ok(LoadedScenario {
        scenario,
        output: config.output.clone(),
        config,
    })
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<LoadedScenario> {
    let path = path.as_ref();
    let doc = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut loaded = parse_scenario(&doc, base)?;
    if loaded.config.name.is_none() {
        if let Some(stem) = path.file_stem() {
            loaded.scenario.name = stem.to_string_lossy().into_owned();
        }
    }
    Ok(loaded)
}

fn vector(what: &str, v: &[Num], n: usize) -> Result<Vector> {
    if v.len() != n {
        return Err(Error::Config(format!("{what}: expected {n} entries, found {}", v.len())));
    }
    Ok(Vector::from_vec(nums(v)))
}

fn load_matrix(what: &str, src: &MatrixSource, base: &Path) -> Result<Matrix> {
    match src {
        MatrixSource::Path(p) => load_matrix_market(base.join(p)),
        MatrixSource::Rows(rows) => {
            let n = rows.len();
            if n == 0 || rows.iter().any(|r| r.len() != n) {
                return Err(Error::Config(format!("system.{what}: inline matrix must be square and non-empty")));
            }
            let flat: Vec<f64> = rows.iter().flat_map(|r| nums(r)).collect();
            Ok(Matrix::from_row_slice(n, &flat))
        }
    }
}

impl ForcingSection {
    pub fn build(&self, n: usize) -> Result<Forcing> {
        let f = match self {
            ForcingSection::Zero => Forcing::zero(n),
            ForcingSection::Constant { value } => Forcing::constant(vector("forcing.value", value, n)?),
            ForcingSection::Sinusoids {
                amplitude,
                frequency,
                phase,
                derivatives,
            } => {
                let phase = phase.as_ref().map(|p| nums(p)).unwrap_or_else(|| vec![0.0; amplitude.len()]);
                Forcing::sinusoids(nums(amplitude), nums(frequency), phase, *derivatives)?
            }
            ForcingSection::SquareWave { amplitude, frequency } => {
                Forcing::square_wave(nums(amplitude), nums(frequency))?
            }
            ForcingSection::Pulse {
                amplitude,
                shape,
                cutoff,
                derivatives,
            } => Forcing::pulse(nums(amplitude), shape.0, cutoff.0, *derivatives)?,
            ForcingSection::Sampled {
                times,
                values,
                interpolation,
            } => {
                let values = values
                    .iter()
                    .map(|v| vector("forcing.values", v, n))
                    .collect::<Result<Vec<_>>>()?;
                let interp = match interpolation {
                    InterpolationName::Linear => Interpolation::Linear,
                    InterpolationName::Cubic => Interpolation::Cubic,
                };
                Forcing::sampled(nums(times), values, interp)?
            }
        };
        if f.dim() != n {
            return Err(Error::Config(format!(
                "forcing has {} components but the system has {n} degrees of freedom",
                f.dim()
            )));
        }
        Ok(f)
    }
}

impl MethodEntry {
    pub fn method(&self, index: usize) -> Result<Method> {
        let need = |v: Option<Num>, field: &str| {
            v.map(|n| n.0)
                .ok_or_else(|| Error::Config(format!("methods[{index}]: missing field `{field}`")))
        };
        let forbid = |v: Option<Num>, field: &str| match v {
            Some(_) => Err(Error::Config(format!(
                "methods[{index}]: `{field}` does not apply to {:?}",
                self.name
            ))),
            None => Ok(()),
        };
        Ok(match self.name {
            MethodName::Newmark => {
                forbid(self.rho, "rho")?;
                Method::Newmark {
                    gamma: need(self.gamma, "gamma")?,
                    beta: need(self.beta, "beta")?,
                }
            }
            MethodName::GeneralizedAlpha => {
                forbid(self.gamma, "gamma")?;
                forbid(self.beta, "beta")?;
                Method::GeneralizedAlpha {
                    rho: need(self.rho, "rho")?,
                }
            }
            MethodName::Rk4 | MethodName::ExplicitEuler => {
                forbid(self.gamma, "gamma")?;
                forbid(self.beta, "beta")?;
                forbid(self.rho, "rho")?;
                if self.name == MethodName::Rk4 {
                    Method::Rk4
                } else {
                    Method::ExplicitEuler
                }
            }
        })
    }

    fn default_label(&self, compensation: CompensationKind) -> String {
        let base = match self.name {
            MethodName::Newmark => "newmark",
            MethodName::GeneralizedAlpha => "generalized-alpha",
            MethodName::Rk4 => "rk4",
            MethodName::ExplicitEuler => "explicit-euler",
        };
        match compensation {
            CompensationKind::None => base.to_string(),
            CompensationKind::Damping => format!("{base}-damping-compensated"),
            CompensationKind::FourthOrder => format!("{base}-fourth-order"),
        }
    }
}

impl ScenarioConfig {
    /// Resolves built-ins and matrix files and checks the run section.
    pub fn materialize(&self, base_dir: &Path) -> Result<Scenario> {
        let (system, builtin_name) = self.build_system(base_dir)?;
        let schedule = self.schedule()?;
        let t_end = self.run.t_end.0;
        let t_eval = self.run.t_eval.map(|t| t.0).unwrap_or(t_end);
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::Config(format!("run.t_end: must be positive, got {t_end}")));
        }
        if !(t_eval > 0.0 && t_eval <= t_end * (1.0 + 1e-12)) {
            return Err(Error::Config(format!("run.t_eval: must lie in (0, t_end], got {t_eval}")));
        }
        for dt in schedule.dts() {
            for (field, t) in [("t_end", t_end), ("t_eval", t_eval)] {
                step_count(t, dt).map_err(|e| Error::Config(format!("run.{field}: {e}")))?;
            }
        }

        let mut methods = Vec::with_capacity(self.methods.len());
        for (i, entry) in self.methods.iter().enumerate() {
            let method = entry.method(i)?;
            let compensation = match entry.compensation {
                Some(kind) => kind,
                None if matches!(method, Method::Newmark { .. }) => self.compensation.kind,
                None => CompensationKind::None,
            };
            if compensation != CompensationKind::None && !matches!(method, Method::Newmark { .. }) {
                return Err(Error::Config(format!(
                    "methods[{i}]: compensation applies to Newmark entries only"
                )));
            }
            if compensation == CompensationKind::FourthOrder {
                if let Method::Newmark { gamma, beta } = method {
                    if gamma != crate::compensation::FOURTH_ORDER_GAMMA || beta != crate::compensation::FOURTH_ORDER_BETA {
                        return Err(Error::CompensationMismatch { gamma, beta });
                    }
                }
            }
            let label = entry.label.clone().unwrap_or_else(|| entry.default_label(compensation));
            let mut spec = MethodSpec::new(label, method).compensated(compensation);
            match (entry.expected_order, entry.order_tolerance) {
                (Some(order), tol) => spec = spec.expect_order(order.0, tol.map_or(0.3, |t| t.0)),
                (None, Some(_)) => {
                    return Err(Error::Config(format!(
                        "methods[{i}]: `order_tolerance` needs `expected_order`"
                    )))
                }
                (None, None) => {}
            }
            methods.push(spec);
        }

        let reference = match (self.run.reference, &builtin_name) {
            (Some(ReferenceKind::Rk4), _) => Reference::FineRk4,
            (requested, Some(name)) if self.forcing.is_none() && self.initial_conditions.is_none() => {
                match builtin::reference_for(name, &system)? {
                    Reference::FineRk4 if requested == Some(ReferenceKind::Exact) => {
                        return Err(Error::Config(format!("run.reference: no closed form for {name:?}")))
                    }
                    r => r,
                }
            }
            (Some(ReferenceKind::Exact), _) => {
                return Err(Error::Config(
                    "run.reference: a closed form exists only for unmodified built-in systems".into(),
                ))
            }
            (None, _) => Reference::FineRk4,
        };

        Ok(Scenario::new(self.name.clone().unwrap_or_else(|| "scenario".into()), system)
            .methods(methods)
            .times(t_end, t_eval)
            .schedule(schedule)
            .reference(reference)
            .study(match self.run.study {
                StudyKind::Reference => Study::Reference,
                StudyKind::Distortion => Study::Distortion,
            }))
    }

    fn schedule(&self) -> Result<DtSchedule> {
        let check = |dt: f64| {
            if dt > 0.0 && dt.is_finite() {
                Ok(dt)
            } else {
                Err(Error::Config(format!("run.dt: time step must be positive, got {dt}")))
            }
        };
        match (&self.run.dt, self.run.halvings) {
            (DtSpec::One(dt), Some(h)) => Ok(DtSchedule::Halving {
                start: check(dt.0)?,
                halvings: h,
            }),
            (DtSpec::One(dt), None) => Ok(DtSchedule::List(vec![check(dt.0)?])),
            (DtSpec::Many(_), Some(_)) => Err(Error::Config(
                "run.halvings: cannot be combined with a list of time steps".into(),
            )),
            (DtSpec::Many(list), None) => {
                if list.is_empty() {
                    return Err(Error::Config("run.dt: empty list".into()));
                }
                Ok(DtSchedule::List(list.iter().map(|d| check(d.0)).collect::<Result<_>>()?))
            }
        }
    }

    fn build_system(&self, base: &Path) -> Result<(SecondOrderSystem, Option<String>)> {
        match &self.system {
            SystemSection::Builtin(BuiltinSystem { builtin, derivatives }) => {
                let mut sys = builtin::system(builtin, *derivatives)?;
                let n = sys.n();
                if let Some(f) = &self.forcing {
                    sys = sys.with_forcing(std::sync::Arc::new(f.build(n)?))?;
                }
                if let Some(ic) = &self.initial_conditions {
                    sys = sys.with_initial_conditions(
                        vector("initial_conditions.q0", &ic.q0, n)?,
                        self.velocity(ic, n)?,
                    )?;
                }
                Ok((sys, Some(builtin.clone())))
            }
            SystemSection::Matrices(MatrixSystem {
                mass,
                damping,
                stiffness,
                storage,
            }) => {
                let m = load_matrix("mass", mass, base)?;
                let n = m.nrows();
                let k = load_matrix("stiffness", stiffness, base)?;
                let c = match damping {
                    Some(src) => load_matrix("damping", src, base)?,
                    None => Matrix::zeros(n, m.is_sparse()),
                };
                let mut b = SecondOrderSystem::builder(m, c, k);
                if let Some(s) = storage {
                    b = b.storage(*s);
                }
                if let Some(f) = &self.forcing {
                    b = b.forcing(f.build(n)?);
                }
                if let Some(ic) = &self.initial_conditions {
                    b = b.initial_conditions(vector("initial_conditions.q0", &ic.q0, n)?, self.velocity(ic, n)?);
                }
                Ok((b.build()?, None))
            }
        }
    }

    fn velocity(&self, ic: &InitialConditions, n: usize) -> Result<Vector> {
        match &ic.v0 {
            Some(v) => vector("initial_conditions.v0", v, n),
            None => Ok(Vector::zeros(n)),
        }
    }
}
