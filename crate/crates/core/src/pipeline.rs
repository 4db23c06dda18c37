//! End-to-end runs: the six-step cohomology computation, the metric
//! comparison, and the refinement study.
//!
//! Steps, in order: (1) choose the metric, (2) assemble the discrete
//! Laplacians, (3) solve the eigenproblems, (4) extract the zero modes,
//! (5) build the harmonic bases, (6) analyze dimensions and diagnostics.
//! Failures carry the step number.

use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Inputs, RunConfig};
use crate::error::{Error, Result};
use crate::geometry::Transversality;
use crate::hodge::{
    elliptic_constant_estimate, harmonic_space, nilpotency_residuals, random_vector, sandwich_check, DegreeSpectrum, EllipticConstants,
    HarmonicSpace, Metric, MetricEquivalence, SandwichReport, SpencerAssembly,
};
use crate::mesh::TorusMesh;
use crate::sym::{SymAlgebra, SymInner};

/// Relative bounds every spectrum must meet.
pub const SELF_ADJOINTNESS_BOUND: f64 = 1e-10;
pub const NEGATIVITY_BOUND: f64 = 1e-10;

const STAGES: [&str; 6] = [
    "metric selection",
    "Laplacian assembly",
    "eigenvalue solve",
    "harmonic extraction",
    "cohomology basis",
    "dimension analysis",
];

fn at_step<T>(step: u8, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        already @ Error::Pipeline { .. } => already,
        other => Error::Pipeline {
            step,
            stage: STAGES[step as usize - 1],
            source: Box::new(other),
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub dim: usize,
    pub resolution: Vec<usize>,
    pub sides: Vec<f64>,
}

impl From<&TorusMesh> for MeshSummary {
    fn from(m: &TorusMesh) -> Self {
        Self {
            dim: m.dim(),
            resolution: m.resolution().to_vec(),
            sides: m.sides().to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicCheck {
    pub degree: usize,
    /// `max |BᵀMB − I|`.
    pub orthonormality_defect: f64,
    /// `max_h max(‖𝒟h‖, ‖𝒟*h‖)` over the basis.
    pub closure_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub cartan_residual: f64,
    pub alignment_distance: f64,
}

/// Everything a run reports. Every key is always present; `null` marks
/// quantities that do not apply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// The only field that differs between identical runs.
    pub generated_at_unix: u64,
    pub seed: u64,
    pub algebra: String,
    pub algebra_dim: usize,
    pub mesh: MeshSummary,
    pub metric: String,
    pub truncation: usize,
    pub sym_inner: SymInner,
    pub degrees: Vec<DegreeSpectrum>,
    /// Harmonic dimension per total degree of the truncated complex.
    pub dimensions: Vec<usize>,
    pub betti_reference: Vec<usize>,
    pub metric_equivalence: MetricEquivalence,
    pub sandwich: SandwichReport,
    pub elliptic_constants: EllipticConstants,
    pub transversality: Transversality,
    pub constraint_strength: f64,
    pub cartan_residual: f64,
    pub nilpotency_residuals: Vec<f64>,
    /// `max |𝒟ⁿ⁺¹𝒟ⁿ|` per degree.
    pub complex_defects: Vec<f64>,
    pub anticommutation_residual: f64,
    pub harmonic_checks: Vec<HarmonicCheck>,
    pub fit: Option<FitSummary>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub report: SpectrumReport,
    pub harmonics: Vec<HarmonicSpace>,
    pub assembly: SpencerAssembly,
    pub inputs: Inputs,
}

pub fn assemble(cfg: &RunConfig, inputs: &Inputs, metric: Metric) -> Result<SpencerAssembly> {
    let sym = SymAlgebra::new(inputs.algebra.dim(), cfg.spencer.max_degree)?;
    SpencerAssembly::assemble(inputs.field.clone(), sym, cfg.spencer.truncation, cfg.spencer.sym_inner, metric)
}

/// Eigensolves every total degree (in parallel) and checks the spectral
/// contract: self-adjointness, non-negativity, ascending order.
pub fn solve_all(asm: &SpencerAssembly, cfg: &RunConfig) -> Result<Vec<HarmonicSpace>> {
    let settings = cfg.eigen_settings();
    let spaces: Vec<HarmonicSpace> = at_step(
        3,
        (0..=asm.top_degree())
            .into_par_iter()
            .map(|n| harmonic_space(asm, n, &settings))
            .collect::<Result<_>>(),
    )?;
    for hs in &spaces {
        let s = &hs.spectrum;
        let violation = if s.self_adjointness_residual >= SELF_ADJOINTNESS_BOUND {
            Some(format!("self-adjointness residual {:e}", s.self_adjointness_residual))
        } else if !s.eigenvalues.windows(2).all(|w| w[0] <= w[1]) {
            Some("eigenvalues not sorted".into())
        } else if s.eigenvalues.first().is_some_and(|&v| v < -NEGATIVITY_BOUND * s.lambda_max.max(1.0)) {
            Some(format!("negative eigenvalue {:e}", s.eigenvalues[0]))
        } else {
            None
        };
        if let Some(msg) = violation {
            return at_step(3, Err(Error::EigensolverFailure(format!("degree {}: {msg}", s.degree))));
        }
    }
    Ok(spaces)
}

fn harmonic_check(asm: &SpencerAssembly, hs: &HarmonicSpace) -> HarmonicCheck {
    let n = hs.degree;
    let b = &hs.basis;
    let mut defect: f64 = 0.0;
    let mut closure: f64 = 0.0;
    for i in 0..b.ncols() {
        let bi = b.column(i).into_owned();
        for j in 0..b.ncols() {
            let ip = asm.inner_product(n, &bi, &b.column(j).into_owned());
            defect = defect.max((ip - if i == j { 1.0 } else { 0.0 }).abs());
        }
        if n < asm.top_degree() {
            let d = asm.differential(n).mul_vec(&bi);
            closure = closure.max(asm.norm(n + 1, &d));
        }
        if n > 0 {
            let dstar = asm.apply_adjoint(n - 1, &bi);
            closure = closure.max(asm.norm(n - 1, &dstar));
        }
    }
    HarmonicCheck {
        degree: n,
        orthonormality_defect: defect,
        closure_residual: closure,
    }
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Runs all six steps for one configuration.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput> {
    // Step 1: inputs and the metric they induce.
    let inputs = at_step(1, cfg.build_inputs())?;
    let metric = at_step(1, cfg.metric.metric())?;
    run_with_inputs(cfg, inputs, metric)
}

pub fn run_with_inputs(cfg: &RunConfig, inputs: Inputs, metric: Metric) -> Result<PipelineOutput> {
    // Step 2.
    let asm = at_step(2, assemble(cfg, &inputs, metric))?;
    // Step 3.
    let harmonics = solve_all(&asm, cfg)?;
    // Steps 4 and 5: orthonormal zero modes that are closed and coclosed.
    let checks: Vec<HarmonicCheck> = harmonics.iter().map(|hs| harmonic_check(&asm, hs)).collect();
    for c in &checks {
        if c.orthonormality_defect > cfg.tolerances.orthogonality.max(1e-8) {
            return at_step(
                4,
                Err(Error::EigensolverFailure(format!(
                    "harmonic basis of degree {} is not orthonormal (defect {:e})",
                    c.degree, c.orthonormality_defect
                ))),
            );
        }
        let hs = &harmonics[c.degree];
        let bound = 10.0 * hs.spectrum.zero_tolerance.sqrt();
        if c.closure_residual > bound {
            return at_step(
                5,
                Err(Error::EigensolverFailure(format!(
                    "harmonic forms of degree {} are not closed and coclosed (residual {:e})",
                    c.degree, c.closure_residual
                ))),
            );
        }
    }

    // Step 6: dimensions and diagnostics.
    let field = &inputs.field;
    let eq = MetricEquivalence::from_field(field, metric.enhanced);
    let sandwich = at_step(6, sandwich_check(&asm, &eq, 200, cfg.seed))?;
    let elliptic = at_step(6, elliptic_constant_estimate(&asm, &eq))?;
    let nilpotency = at_step(6, nilpotency_residuals(&asm))?;
    let cartan = field.cartan_residual().global;
    let complex_defects: Vec<f64> = (0..=asm.top_degree()).map(|n| asm.complex_defect(n)).collect();

    let mut warnings = Vec::new();
    if cartan > 1e-10 {
        warnings.push(format!(
            "Cartan residual {cartan:.3e}: (λ, ω) is not a compatible pair, results describe the discretized complex only"
        ));
    }
    if cfg.spencer.truncation > 0 {
        warnings.push(format!(
            "dimensions are for the complex truncated at Sym degree {}",
            cfg.spencer.truncation
        ));
    }
    if let Some((j, r)) = nilpotency.iter().enumerate().find(|(_, r)| **r > 1e-10) {
        warnings.push(format!("δ∘δ does not vanish pointwise (‖Δ_{}Δ_{}‖ = {r:.3e}); D² ≠ 0", j + 1, j));
    }
    for hs in &harmonics {
        if hs.spectrum.solver == "shift-invert" {
            warnings.push(format!(
                "degree {}: iterative solver, {} lowest eigenvalues only",
                hs.degree,
                hs.spectrum.eigenvalues.len()
            ));
        }
    }

    let report = SpectrumReport {
        generated_at_unix: now_unix(),
        seed: cfg.seed,
        algebra: inputs.algebra.name().to_string(),
        algebra_dim: inputs.algebra.dim(),
        mesh: MeshSummary::from(inputs.mesh.as_ref()),
        metric: metric.tag(),
        truncation: cfg.spencer.truncation,
        sym_inner: cfg.spencer.sym_inner,
        degrees: harmonics.iter().map(|h| h.spectrum.clone()).collect(),
        dimensions: harmonics.iter().map(HarmonicSpace::dimension).collect(),
        betti_reference: inputs.mesh.betti_reference(),
        metric_equivalence: eq,
        sandwich,
        elliptic_constants: elliptic,
        transversality: field.transversality_minimum(),
        constraint_strength: field.constraint_strength(),
        cartan_residual: cartan,
        nilpotency_residuals: nilpotency,
        complex_defects,
        anticommutation_residual: asm.anticommutation_residual(),
        harmonic_checks: checks,
        fit: inputs.fit.as_ref().map(|f| FitSummary {
            iterations: f.iterations,
            initial_objective: f.trace[0],
            final_objective: *f.trace.last().unwrap_or(&0.0),
            cartan_residual: f.cartan_residual,
            alignment_distance: f.alignment_distance,
        }),
        warnings,
    };
    Ok(PipelineOutput {
        report,
        harmonics,
        assembly: asm,
        inputs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioCurve {
    pub degree: usize,
    /// `λ_i(B) / λ_i(A)` for the nonzero eigenvalues, in order.
    pub ratios: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub metric_equivalence: MetricEquivalence,
    pub sandwich: SandwichReport,
    pub dimensions_a: Vec<usize>,
    pub dimensions_b: Vec<usize>,
    pub dimensions_identical: bool,
    pub ratio_curves: Vec<RatioCurve>,
    /// `max |‖u‖²_mixed − (α‖u‖²_A + (1−α)‖u‖²_B)| / ‖u‖²_mixed` over
    /// random cochains and α ∈ {¼, ½, ¾}.
    pub mixed_interpolation_residual: f64,
    pub inf_kappa: f64,
    pub sup_kappa: f64,
}

/// Runs the same complex under metrics A and B and compares them.
pub fn compare_metrics(cfg: &RunConfig) -> Result<(ComparisonReport, PipelineOutput, PipelineOutput)> {
    let inputs = at_step(1, cfg.build_inputs())?;
    let enhanced = cfg.metric.enhanced;
    let a = run_with_inputs(cfg, inputs.clone(), Metric { enhanced, ..Metric::a() })?;
    let b = run_with_inputs(cfg, inputs, Metric::b())?;
    let eq = a.report.metric_equivalence;
    let ratio_curves = a
        .harmonics
        .iter()
        .zip(&b.harmonics)
        .map(|(ha, hb)| {
            let nonzero = |h: &HarmonicSpace| -> Vec<f64> {
                h.spectrum.eigenvalues.iter().copied().filter(|&v| v >= h.spectrum.zero_tolerance).collect()
            };
            let (va, vb) = (nonzero(ha), nonzero(hb));
            RatioCurve {
                degree: ha.degree,
                ratios: va.iter().zip(&vb).map(|(x, y)| y / x).collect(),
            }
        })
        .collect();

    let asm = &a.assembly;
    let ma = asm.masses_for(&Metric { enhanced, ..Metric::a() })?;
    let mb = asm.masses_for(&Metric::b())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xc0ffee);
    let mut worst: f64 = 0.0;
    for alpha in [0.25, 0.5, 0.75] {
        let mm = asm.masses_for(&Metric { enhanced, ..Metric::mixed(alpha)? })?;
        for n in 0..=asm.top_degree() {
            let u: DVector<f64> = random_vector(&mut rng, asm.space_dim(n));
            let norm = |m: &DVector<f64>| u.iter().zip(m.iter()).map(|(x, w)| x * x * w).sum::<f64>();
            let mixed = norm(&mm[n]);
            if mixed > 0.0 {
                worst = worst.max((mixed - (alpha * norm(&ma[n]) + (1.0 - alpha) * norm(&mb[n]))).abs() / mixed);
            }
        }
    }
    let report = ComparisonReport {
        metric_equivalence: eq,
        sandwich: a.report.sandwich,
        dimensions_identical: a.report.dimensions == b.report.dimensions,
        dimensions_a: a.report.dimensions.clone(),
        dimensions_b: b.report.dimensions.clone(),
        ratio_curves,
        mixed_interpolation_residual: worst,
        inf_kappa: eq.inf_kappa,
        sup_kappa: eq.sup_kappa,
    };
    Ok((report, a, b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub resolution: Vec<usize>,
    pub spacing: f64,
    pub first_nonzero_eigenvalue: f64,
    pub exact: f64,
    pub error: f64,
    /// `log(e_prev / e) / log(h_prev / h)`; `None` on the first row.
    pub observed_order: Option<f64>,
    pub dimensions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub dimensions_stable: bool,
    pub min_order: f64,
}

/// Unit-weight circle template for [`convergence_study`]: `T¹` of length
/// `2π`, flat connection, metric B, `J = 0`. Its first nonzero eigenvalue
/// is exactly 1.
pub fn circle_template() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.mesh.dim = 1;
    cfg.mesh.resolution = vec![8];
    cfg.mesh.side = None;
    cfg.metric.kind = crate::hodge::MetricKind::B;
    cfg
}

/// Refinement study of the first nonzero eigenvalue of `Δ⁰`. The exact
/// value is the flat-torus one, `(2π/L)²` for the longest side `L`, so the
/// template should have unit weight (e.g. metric B with a flat connection).
pub fn convergence_study(template: &RunConfig, resolutions: &[usize]) -> Result<ConvergenceTable> {
    if resolutions.len() < 3 {
        return Err(Error::Config(format!(
            "a convergence study needs at least 3 resolutions, got {}",
            resolutions.len()
        )));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(resolutions.len());
    for &n in resolutions {
        let mut cfg = template.clone();
        cfg.mesh.resolution = vec![n; cfg.mesh.dim];
        let out = run_pipeline(&cfg)?;
        let sides = out.inputs.mesh.sides().to_vec();
        let exact = sides
            .iter()
            .map(|l| (2.0 * std::f64::consts::PI / l).powi(2))
            .fold(f64::INFINITY, f64::min);
        let s0 = &out.report.degrees[0];
        let first = s0
            .eigenvalues
            .iter()
            .copied()
            .find(|&v| v >= s0.zero_tolerance)
            .ok_or_else(|| Error::EigensolverFailure("no nonzero eigenvalue in degree 0".into()))?;
        let spacing = out.inputs.mesh.spacing().into_iter().fold(0.0, f64::max);
        let error = (first - exact).abs();
        let observed_order = rows.last().map(|prev| (prev.error / error).ln() / (prev.spacing / spacing).ln());
        rows.push(ConvergenceRow {
            resolution: cfg.mesh.resolution.clone(),
            spacing,
            first_nonzero_eigenvalue: first,
            exact,
            error,
            observed_order,
            dimensions: out.report.dimensions,
        });
    }
    let dimensions_stable = rows.windows(2).all(|w| w[0].dimensions == w[1].dimensions);
    let min_order = rows.iter().filter_map(|r| r.observed_order).fold(f64::INFINITY, f64::min);
    Ok(ConvergenceTable {
        rows,
        dimensions_stable,
        min_order,
    })
}
