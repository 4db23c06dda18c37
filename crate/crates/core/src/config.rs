//! Run configuration and the built-in scenario library.
//!
//! Every field has a default, so a configuration file only needs the keys
//! it changes. Unknown keys are rejected to catch typos.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fit_lambda, FitOptions, FitResult, GridTable, PairField, VectorField};
use crate::hodge::{EigenSettings, Metric, MetricKind};
use crate::lie::{DualVector, LieAlgebra};
use crate::mesh::{MeshSpec, TorusMesh, MIN_RESOLUTION};
use crate::sym::{SymInner, DEFAULT_DEGREE_CAP};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub algebra: AlgebraConfig,
    pub mesh: MeshSpec,
    pub lambda: LambdaSpec,
    pub omega: OmegaSpec,
    pub spencer: SpencerConfig,
    pub metric: MetricConfig,
    pub tolerances: Tolerances,
    pub eigen: EigenConfig,
    pub fit: FitConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgebraConfig {
    /// Built-in name: `so3`, `su2` or `so4`.
    pub name: String,
    /// Structure-constant text file; overrides `name` when set.
    pub file: Option<PathBuf>,
}

impl Default for AlgebraConfig {
    fn default() -> Self {
        Self {
            name: "so3".into(),
            file: None,
        }
    }
}

impl AlgebraConfig {
    pub fn load(&self) -> Result<LieAlgebra> {
        match &self.file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::AlgebraParse(format!("{}: {e}", path.display())))?;
                let name = path.file_stem().map_or("custom".into(), |s| s.to_string_lossy().into_owned());
                LieAlgebra::parse_text(name, &text)
            }
            None => LieAlgebra::builtin(&self.name),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaKind {
    /// `λ ≡ coeffs`.
    Constant,
    /// `λ(x) = (1 + amplitude · sin x_axis) · coeffs`.
    VortexSin,
    Zero,
    /// Per-vertex rows in `table`.
    Table,
    /// Result of the `[fit]` run from a seeded random start.
    Fitted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaSpec {
    pub kind: LambdaKind,
    /// Dual-basis coefficients; defaults to the last dual basis vector.
    pub coeffs: Option<Vec<f64>>,
    pub amplitude: f64,
    pub axis: usize,
    pub table: Option<Vec<Vec<f64>>>,
    pub perturbation: Option<Perturbation>,
}

impl Default for LambdaSpec {
    fn default() -> Self {
        Self {
            kind: LambdaKind::Constant,
            coeffs: None,
            amplitude: 0.5,
            axis: 0,
            table: None,
            perturbation: None,
        }
    }
}

/// Additive random field: i.i.d. uniform vertex values in
/// `[−amplitude, amplitude]`, interpolated bilinearly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaKind {
    Zero,
    /// `ω_a ≡ components[a]`.
    Constant,
    /// `ω₁ = scale · e₁`, `ω₂ = scale · e₂`.
    ConstantCurvature,
    /// `ω₁ = amplitude · sin(x₂) · direction`, other components zero.
    SinProfile,
    /// `tables[a]` holds per-vertex rows of `ω_a`.
    Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmegaSpec {
    pub kind: OmegaKind,
    pub components: Option<Vec<Vec<f64>>>,
    pub scale: f64,
    pub amplitude: f64,
    pub direction: Option<Vec<f64>>,
    pub tables: Option<Vec<Vec<Vec<f64>>>>,
}

impl Default for OmegaSpec {
    fn default() -> Self {
        Self {
            kind: OmegaKind::Zero,
            components: None,
            scale: 1.0,
            amplitude: 1.0,
            direction: None,
            tables: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpencerConfig {
    pub truncation: usize,
    pub sym_inner: SymInner,
    pub max_degree: usize,
}

impl Default for SpencerConfig {
    fn default() -> Self {
        Self {
            truncation: 0,
            sym_inner: SymInner::Plain,
            max_degree: DEFAULT_DEGREE_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub kind: MetricKind,
    pub alpha: f64,
    pub enhanced: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            kind: MetricKind::A,
            alpha: 0.5,
            enhanced: false,
        }
    }
}

impl MetricConfig {
    pub fn metric(&self) -> Result<Metric> {
        let mut m = match self.kind {
            MetricKind::A => Metric::a(),
            MetricKind::B => Metric::b(),
            MetricKind::Mixed => Metric::mixed(self.alpha)?,
        };
        m.enhanced = self.enhanced;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Kernel tolerance, relative to `max(1, λ_max)`; the precision
    /// parameter of the computation.
    pub eigen: f64,
    /// Bound for decomposition orthogonality and harmonic-basis checks.
    pub orthogonality: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eigen: 1e-8,
            orthogonality: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenConfig {
    pub dense_limit: usize,
    pub num_eigenvalues: usize,
    pub max_iterations: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        let d = EigenSettings::default();
        Self {
            dense_limit: d.dense_limit,
            num_eigenvalues: d.num_eigenvalues,
            max_iterations: d.max_iterations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub alpha: f64,
    pub max_iterations: usize,
    pub tol: f64,
    /// Reference covector whose line is the target set; defaults to the
    /// last dual basis vector.
    pub target: Option<Vec<f64>>,
    /// Amplitude of the random starting field around the target.
    pub initial_noise: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let d = FitOptions::default();
        Self {
            alpha: d.alpha,
            max_iterations: d.max_iterations,
            tol: d.tol,
            target: None,
            initial_noise: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub report: String,
    pub spectra: String,
    pub dump_harmonics: bool,
    pub plots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("spencer-out"),
            report: "report.json".into(),
            spectra: "spectra.csv".into(),
            dump_harmonics: false,
            plots: false,
        }
    }
}

/// Assembled inputs of a run.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub algebra: Arc<LieAlgebra>,
    pub mesh: Arc<TorusMesh>,
    pub field: Arc<PairField>,
    pub fit: Option<FitResult>,
}

impl RunConfig {
    /// Checks the invariants that do not need the algebra or fields.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.tolerances.eigen > 0.0) || !(self.tolerances.orthogonality > 0.0) {
            return fail("tolerances must be positive".into());
        }
        if self.metric.kind == MetricKind::Mixed && !(0.0..=1.0).contains(&self.metric.alpha) {
            return fail(format!("metric.alpha must lie in [0, 1], got {}", self.metric.alpha));
        }
        if !(1..=2).contains(&self.mesh.dim) {
            return Err(Error::UnsupportedDimension(self.mesh.dim));
        }
        if self.mesh.resolution.len() != self.mesh.dim {
            return fail(format!("mesh.resolution needs {} entries", self.mesh.dim));
        }
        if let Some(&n) = self.mesh.resolution.iter().find(|&&n| n < MIN_RESOLUTION) {
            return Err(Error::ResolutionTooSmall(n));
        }
        if self.spencer.truncation > self.spencer.max_degree {
            return Err(Error::DegreeCapExceeded {
                requested: self.spencer.truncation,
                cap: self.spencer.max_degree,
            });
        }
        if self.eigen.num_eigenvalues == 0 || self.eigen.max_iterations == 0 {
            return fail("eigen.num_eigenvalues and eigen.max_iterations must be positive".into());
        }
        if !(self.fit.alpha >= 0.0) || !(self.fit.tol > 0.0) {
            return fail("fit.alpha must be ≥ 0 and fit.tol > 0".into());
        }
        Ok(())
    }

    pub fn eigen_settings(&self) -> EigenSettings {
        EigenSettings {
            tol: self.tolerances.eigen,
            dense_limit: self.eigen.dense_limit,
            num_eigenvalues: self.eigen.num_eigenvalues,
            max_iterations: self.eigen.max_iterations,
            seed: self.seed,
        }
    }

    /// Loads the algebra, builds the mesh and samples the pair.
    pub fn build_inputs(&self) -> Result<Inputs> {
        self.validate()?;
        let algebra = Arc::new(self.algebra.load()?);
        let mesh = Arc::new(self.mesh.build()?);
        let omega = self.omega_fields(&algebra, &mesh)?;
        let (lambda, fit) = self.lambda_field(&algebra, &mesh, &omega)?;
        let field = Arc::new(PairField::sample(mesh.clone(), algebra.clone(), lambda, omega)?);
        Ok(Inputs { algebra, mesh, field, fit })
    }

    fn default_covector(d: usize) -> Vec<f64> {
        (0..d).map(|i| if i + 1 == d { 1.0 } else { 0.0 }).collect()
    }

    fn vector(&self, v: &[f64], d: usize, what: &str) -> Result<DVector<f64>> {
        if v.len() != d {
            return Err(Error::Config(format!("{what} needs {d} coefficients, got {}", v.len())));
        }
        Ok(DVector::from_row_slice(v))
    }

    fn table(&self, mesh: &TorusMesh, rows: &[Vec<f64>], d: usize, what: &str) -> Result<GridTable> {
        let values = rows.iter().map(|r| self.vector(r, d, what)).collect::<Result<Vec<_>>>()?;
        GridTable::new(mesh, values)
    }

    pub fn omega_fields(&self, alg: &LieAlgebra, mesh: &TorusMesh) -> Result<Vec<VectorField>> {
        let (n, d) = (mesh.dim(), alg.dim());
        let spec = &self.omega;
        let missing = |key: &str| Error::Config(format!("omega.{key} is required for kind {:?}", spec.kind));
        match spec.kind {
            OmegaKind::Zero => Ok(vec![VectorField::zero(d); n]),
            OmegaKind::Constant => {
                let comps = spec.components.as_ref().ok_or_else(|| missing("components"))?;
                if comps.len() != n {
                    return Err(Error::Config(format!("omega.components needs {n} rows")));
                }
                comps.iter().map(|c| Ok(VectorField::constant(self.vector(c, d, "omega.components")?))).collect()
            }
            OmegaKind::ConstantCurvature => {
                if n != 2 || d < 2 {
                    return Err(Error::Config("constant-curvature ω needs a 2-torus and dim g ≥ 2".into()));
                }
                Ok(vec![VectorField::constant(spec.scale * alg.basis(0)), VectorField::constant(spec.scale * alg.basis(1))])
            }
            OmegaKind::SinProfile => {
                if n != 2 {
                    return Err(Error::Config("sin-profile ω needs a 2-torus".into()));
                }
                let dir = match &spec.direction {
                    Some(v) => self.vector(v, d, "omega.direction")?,
                    None => DVector::from_row_slice(&Self::default_covector(d)),
                };
                let a = spec.amplitude;
                Ok(vec![VectorField::scalar_times(dir, move |x| a * x[1].sin()), VectorField::zero(d)])
            }
            OmegaKind::Table => {
                let tables = spec.tables.as_ref().ok_or_else(|| missing("tables"))?;
                if tables.len() != n {
                    return Err(Error::Config(format!("omega.tables needs {n} tables")));
                }
                tables.iter().map(|t| Ok(VectorField::table(self.table(mesh, t, d, "omega.tables")?))).collect()
            }
        }
    }

    fn lambda_field(&self, alg: &LieAlgebra, mesh: &TorusMesh, omega: &[VectorField]) -> Result<(VectorField, Option<FitResult>)> {
        let d = alg.dim();
        let spec = &self.lambda;
        let coeffs = match &spec.coeffs {
            Some(c) => self.vector(c, d, "lambda.coeffs")?,
            None => DVector::from_row_slice(&Self::default_covector(d)),
        };
        let mut fit = None;
        let base = match spec.kind {
            LambdaKind::Constant => VectorField::constant(coeffs),
            LambdaKind::Zero => VectorField::zero(d),
            LambdaKind::VortexSin => {
                if spec.axis >= mesh.dim() {
                    return Err(Error::Config(format!("lambda.axis {} out of range", spec.axis)));
                }
                let (a, axis) = (spec.amplitude, spec.axis);
                VectorField::scalar_times(coeffs, move |x| 1.0 + a * x[axis].sin())
            }
            LambdaKind::Table => {
                let rows = spec.table.as_ref().ok_or_else(|| Error::Config("lambda.table is required for kind table".into()))?;
                VectorField::table(self.table(mesh, rows, d, "lambda.table")?)
            }
            LambdaKind::Fitted => {
                let result = self.run_fit(alg, mesh, omega)?;
                let field = result.into_field(mesh)?;
                fit = Some(result);
                field
            }
        };
        let field = match &spec.perturbation {
            Some(p) if p.amplitude != 0.0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
                let values = (0..mesh.vertex_count())
                    .map(|_| DVector::from_fn(d, |_, _| rng.gen_range(-p.amplitude..=p.amplitude)))
                    .collect();
                base.plus(&VectorField::table(GridTable::new(mesh, values)?))
            }
            _ => base,
        };
        Ok((field, fit))
    }

    /// Runs the `[fit]` section from a random start scattered around the
    /// target covector.
    pub fn run_fit(&self, alg: &LieAlgebra, mesh: &TorusMesh, omega: &[VectorField]) -> Result<FitResult> {
        let d = alg.dim();
        let target = match &self.fit.target {
            Some(t) => self.vector(t, d, "fit.target")?,
            None => DVector::from_row_slice(&Self::default_covector(d)),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = self.fit.initial_noise;
        let initial: Vec<DualVector> = (0..mesh.vertex_count())
            .map(|_| DualVector(&target + DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0) * noise)))
            .collect();
        let opts = FitOptions {
            alpha: self.fit.alpha,
            max_iterations: self.fit.max_iterations,
            tol: self.fit.tol,
            seed: self.seed,
        };
        fit_lambda(mesh, alg, omega, &VectorField::constant(target), &initial, &opts)
    }
}

/// Names of the built-in scenarios.
pub const SCENARIOS: [(&str, &str); 4] = [
    ("torus-fluid", "so(3) on T² 16×16, constant λ = e3*, flat ω, J = 0, metric A"),
    ("su2-flat", "su(2) on T² 8×8, constant λ = e3*, flat ω, J = 1, metric A"),
    ("su2-curved", "su(2) on T² 8×8, constant λ = e3*, constant curvature ω = ½e1 dx + ½e2 dy, J = 1, metric B"),
    ("fit-demo", "so(3) on T² 12×12, λ fitted to the e3* line under a flat connection, J = 0"),
];

pub fn scenario(name: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    match name {
        "torus-fluid" => {}
        "su2-flat" => {
            cfg.algebra.name = "su2".into();
            cfg.mesh.resolution = vec![8, 8];
            cfg.spencer.truncation = 1;
        }
        "su2-curved" => {
            cfg.algebra.name = "su2".into();
            cfg.mesh.resolution = vec![8, 8];
            cfg.spencer.truncation = 1;
            cfg.omega.kind = OmegaKind::ConstantCurvature;
            cfg.omega.scale = 0.5;
            cfg.metric.kind = MetricKind::B;
        }
        "fit-demo" => {
            cfg.mesh.resolution = vec![12, 12];
            cfg.lambda.kind = LambdaKind::Fitted;
            cfg.fit.alpha = 1.0;
        }
        other => {
            return Err(Error::Config(format!(
                "unknown scenario `{other}` (available: {})",
                SCENARIOS.map(|(n, _)| n).join(", ")
            )))
        }
    }
    Ok(cfg)
}
