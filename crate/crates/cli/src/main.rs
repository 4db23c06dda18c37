//! `spencer` — Spencer cohomology of compatible pairs on discretized flat tori.
//!
//! Exit codes are a stable contract: 0 success, 1 usage or config parse
//! error, 2 validation failure, 3 pipeline failure (the failing step is
//! printed). `SPENCER_THREADS` caps the worker-thread count.

mod output;
mod plot;
mod settings;

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use spencer_core::config::Inputs;
use spencer_core::geometry::DEGENERACY_THRESHOLD;
use spencer_core::hodge::{green_apply, hodge_decompose, random_vector, DecompositionResiduals};
use spencer_core::pipeline::{run_with_inputs, ConvergenceTable};
use spencer_core::{circle_template, compare_metrics, convergence_study, Error, Metric, RunConfig, SCENARIOS};

use settings::ConfigArgs;

#[derive(Parser)]
#[command(name = "spencer", version, about = "Spencer cohomology of compatible pairs on discretized flat tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the algebra, the pair (λ, ω) and the configuration without solving.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compute the cohomology dimensions; writes the report JSON and spectra CSV.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (overrides `output.dir`).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Dump the harmonic bases as binary arrays.
        #[arg(long)]
        dump_harmonics: bool,
        /// Emit PNG plots (spectrum scatter, weight heatmap).
        #[arg(long)]
        plots: bool,
    },
    /// Run under metrics A and B and compare spectra, dimensions and norms.
    CompareMetrics {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Hodge-decompose a cochain into harmonic, exact and coexact parts.
    Decompose {
        #[command(flatten)]
        config: ConfigArgs,
        /// Total degree of the cochain.
        #[arg(short, long)]
        degree: usize,
        /// Cochain file (`.csv`, or binary with a `.json` header); a seeded
        /// random cochain when omitted.
        #[arg(short, long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Refinement study of the first nonzero eigenvalue in degree 0.
    /// Without --config/--scenario, the unit-weight circle of length 2π.
    Convergence {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(short, long, value_delimiter = ',', default_value = "8,16,32,64")]
        resolutions: Vec<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    ListScenarios,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Bin,
}

#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Validation(String),
    Pipeline { step: u8, message: String },
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Pipeline { .. } => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

/// Pipeline errors keep their step; an optimizer that fails while building
/// a fitted λ belongs to step 1; everything else is a violated invariant.
fn classify(e: Error) -> Failure {
    match e {
        Error::Pipeline { step, .. } => Failure::Pipeline {
            step,
            message: e.to_string(),
        },
        Error::NonConvergence { .. } | Error::StepCollapse { .. } => Failure::Pipeline {
            step: 1,
            message: e.to_string(),
        },
        other => Failure::Validation(other.to_string()),
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = configure_threads().and_then(|()| dispatch(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) => eprintln!("error: {e:#}"),
                Failure::Validation(msg) => eprintln!("validation failed: {msg}"),
                Failure::Pipeline { step, message } => eprintln!("pipeline failed at step {step}: {message}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn configure_threads() -> Outcome {
    let Ok(raw) = std::env::var("SPENCER_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow::anyhow!("SPENCER_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| anyhow::anyhow!("configuring thread pool: {e}"))?;
    Ok(())
}

fn dispatch(cmd: Command) -> Outcome {
    match cmd {
        Command::Validate { config } => validate(&config),
        Command::Run {
            config,
            out,
            dump_harmonics,
            plots,
        } => run(&config, out, dump_harmonics, plots),
        Command::CompareMetrics { config, out } => compare(&config, out),
        Command::Decompose {
            config,
            degree,
            input,
            format,
            out,
        } => decompose(&config, degree, input.as_deref(), format, out),
        Command::Convergence { config, resolutions, out } => convergence(&config, &resolutions, out),
        Command::ListScenarios => {
            for (name, description) in SCENARIOS {
                println!("{name:<12} {description}");
            }
            Ok(())
        }
    }
}

fn prepare(args: &ConfigArgs) -> Result<(RunConfig, Inputs, Metric), Failure> {
    let cfg = args.load()?;
    let inputs = cfg.build_inputs().map_err(classify)?;
    let metric = cfg.metric.metric().map_err(classify)?;
    Ok((cfg, inputs, metric))
}

fn out_dir(cfg: &RunConfig, out: Option<PathBuf>) -> anyhow::Result<PathBuf> {
    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&dir).map_err(|e| anyhow::anyhow!("creating {}: {e}", dir.display()))?;
    Ok(dir)
}

fn check_line(label: &str, value: impl Display, ok: bool) {
    println!("  {label:<24} {value:<40} {}", if ok { "ok" } else { "FAIL" });
}

fn tuple(v: &[usize]) -> String {
    let parts: Vec<String> = v.iter().map(ToString::to_string).collect();
    format!("({})", parts.join(", "))
}

fn validate(args: &ConfigArgs) -> Outcome {
    let cfg = args.load()?;
    cfg.validate().map_err(classify)?;
    let alg = cfg.algebra.load().map_err(classify)?;
    println!("algebra {} (dim {})", alg.name(), alg.dim());
    check_line("Jacobi identity", format!("max residual {:.3e}", alg.max_jacobi_residual()), true);
    check_line("Killing form", "−B positive definite", true);
    check_line("ad-invariance", format!("max defect {:.3e}", alg.max_ad_invariance_defect()), true);

    let inputs = cfg.build_inputs().map_err(classify)?;
    let field = &inputs.field;
    let mesh = &inputs.mesh;
    println!("mesh T{} {:?}, sides {:?}", superscript(mesh.dim()), mesh.resolution(), mesh.sides());
    let min_lambda = field
        .lambda_vertices()
        .iter()
        .map(|l| alg.dual_norm(l))
        .fold(f64::INFINITY, f64::min);
    check_line("λ non-degenerate", format!("min ‖λ‖ = {min_lambda:.6e}"), true);

    let cartan = field.cartan_residual().global;
    let compatible = cartan <= 1e-10;
    println!(
        "  {:<24} {:<40} {}",
        "Cartan residual",
        format!("{cartan:.6e}"),
        if compatible { "ok" } else { "warning" }
    );
    if !compatible {
        eprintln!("warning: dλ + ad*_ω λ ≠ 0; (λ, ω) is not a compatible pair");
    }
    let t = field.transversality_minimum();
    let transverse = t.margin > DEGENERACY_THRESHOLD;
    check_line("transversality margin", format!("{:.6e} (gap {:.6e})", t.margin, t.gap), transverse);
    println!("  {:<24} {:.6e}", "constraint strength", field.constraint_strength());
    if let Some(fit) = &inputs.fit {
        println!(
            "  {:<24} {} iterations, Cartan residual {:.3e}",
            "fitted λ", fit.iterations, fit.cartan_residual
        );
    }
    if transverse {
        println!("valid");
        Ok(())
    } else {
        Err(Failure::Validation(format!("strong transversality fails (margin {:.3e})", t.margin)))
    }
}

fn superscript(n: usize) -> &'static str {
    match n {
        1 => "¹",
        2 => "²",
        _ => "ⁿ",
    }
}

fn run(args: &ConfigArgs, out: Option<PathBuf>, dump: bool, plots: bool) -> Outcome {
    let (cfg, inputs, metric) = prepare(args)?;
    let res = run_with_inputs(&cfg, inputs, metric).map_err(classify)?;
    let report = &res.report;

    println!(
        "{} on T{} {:?}, metric {}, J = {}",
        report.algebra,
        superscript(report.mesh.dim),
        report.mesh.resolution,
        report.metric,
        report.truncation
    );
    println!("  {:>3}  {:>6}  {:>7}  {:>13}  {:>13}  solver", "n", "dim H", "space", "λ_max", "first λ > 0");
    for s in &report.degrees {
        let first = s.eigenvalues.iter().find(|&&v| v >= s.zero_tolerance);
        println!(
            "  {:>3}  {:>6}  {:>7}  {:>13.6e}  {:>13}  {}",
            s.degree,
            s.kernel_dimension,
            s.space_dimension,
            s.lambda_max,
            first.map_or("—".into(), |v| format!("{v:.6e}")),
            s.solver
        );
    }
    println!("dimensions {}", tuple(&report.dimensions));
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }

    let dir = out_dir(&cfg, out)?;
    let report_path = dir.join(&cfg.output.report);
    let spectra_path = dir.join(&cfg.output.spectra);
    output::write_json(&report_path, report)?;
    output::write_spectra(&spectra_path, report)?;
    println!("wrote {} and {}", report_path.display(), spectra_path.display());
    if dump || cfg.output.dump_harmonics {
        let files = output::dump_harmonics(&dir, &res.harmonics, &report.metric)?;
        println!("wrote {} harmonic basis arrays", files.len());
    }
    if plots || cfg.output.plots {
        plot::spectrum_scatter(&dir.join("spectrum.png"), report)?;
        let weights = metric.weights(res.inputs.field.as_ref(), 0);
        plot::weight_heatmap(&dir.join("weights.png"), &res.inputs.mesh, &weights)?;
        println!("wrote spectrum.png and weights.png");
    }
    Ok(())
}

fn compare(args: &ConfigArgs, out: Option<PathBuf>) -> Outcome {
    let cfg = args.load()?;
    cfg.build_inputs().map_err(classify)?;
    let (cmp, _, _) = compare_metrics(&cfg).map_err(classify)?;
    let eq = &cmp.metric_equivalence;
    println!("weights      w ∈ [{:.6e}, {:.6e}]   κ ∈ [{:.6e}, {:.6e}]", eq.inf_w, eq.sup_w, eq.inf_kappa, eq.sup_kappa);
    println!("constants    c₁ = {:.6e}   c₂ = {:.6e}", eq.c1, eq.c2);
    println!(
        "sandwich     {:.6e} ≤ ‖u‖²_B/‖u‖²_A ≤ {:.6e} over {} samples: {}",
        cmp.sandwich.min_ratio,
        cmp.sandwich.max_ratio,
        cmp.sandwich.samples,
        if cmp.sandwich.holds { "holds" } else { "VIOLATED" }
    );
    println!("dimensions   A {}   B {}", tuple(&cmp.dimensions_a), tuple(&cmp.dimensions_b));
    println!("mixed metric interpolation residual {:.3e}", cmp.mixed_interpolation_residual);
    for c in &cmp.ratio_curves {
        let lo = c.ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = c.ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if c.ratios.is_empty() {
            println!("  degree {}: no nonzero eigenvalues", c.degree);
        } else {
            println!("  degree {}: λ_B/λ_A ∈ [{lo:.6e}, {hi:.6e}] over {} eigenvalues", c.degree, c.ratios.len());
        }
    }
    let dir = out_dir(&cfg, out)?;
    let path = dir.join("comparison.json");
    output::write_json(&path, &cmp)?;
    println!("wrote {}", path.display());
    if !cmp.dimensions_identical {
        return Err(Failure::Pipeline {
            step: 6,
            message: "cohomology dimensions differ between metrics A and B".into(),
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct DecompositionSummary {
    degree: usize,
    metric: String,
    length: usize,
    harmonic_dimension: usize,
    norms: [f64; 4],
    residuals: DecompositionResiduals,
    green_residual: f64,
}

fn decompose(args: &ConfigArgs, degree: usize, input: Option<&Path>, format: Format, out: Option<PathBuf>) -> Outcome {
    let (cfg, inputs, metric) = prepare(args)?;
    let res = run_with_inputs(&cfg, inputs, metric).map_err(classify)?;
    let asm = &res.assembly;
    if degree > asm.top_degree() {
        return Err(Failure::Validation(format!(
            "degree {degree} exceeds the top degree {} of the complex",
            asm.top_degree()
        )));
    }
    let u = match input {
        Some(path) => output::read_cochain(path)?,
        None => random_vector(&mut ChaCha8Rng::seed_from_u64(cfg.seed), asm.space_dim(degree)),
    };
    let hs = &res.harmonics[degree];
    let dec = hodge_decompose(asm, hs, &u).map_err(classify)?;
    let green = green_apply(asm, hs, &u).map_err(classify)?;

    let norm = |v: &DVector<f64>| asm.norm(degree, v);
    let summary = DecompositionSummary {
        degree,
        metric: res.report.metric.clone(),
        length: u.len(),
        harmonic_dimension: hs.dimension(),
        norms: [norm(&u), norm(&dec.harmonic), norm(&dec.exact), norm(&dec.coexact)],
        residuals: dec.residuals,
        green_residual: green.residual,
    };
    println!("degree {degree}, {} entries, dim H = {}", u.len(), hs.dimension());
    println!("  {:<22} {:.6e}", "‖u‖", summary.norms[0]);
    println!("  {:<22} {:.6e}", "‖harmonic‖", summary.norms[1]);
    println!("  {:<22} {:.6e}", "‖exact‖", summary.norms[2]);
    println!("  {:<22} {:.6e}", "‖coexact‖", summary.norms[3]);
    println!("  {:<22} {:.3e}", "reconstruction", dec.residuals.reconstruction);
    println!("  {:<22} {:.3e}", "⟨harmonic, exact⟩", dec.residuals.harmonic_exact);
    println!("  {:<22} {:.3e}", "⟨harmonic, coexact⟩", dec.residuals.harmonic_coexact);
    println!("  {:<22} {:.3e}", "⟨exact, coexact⟩", dec.residuals.exact_coexact);
    println!("  {:<22} {:.3e}", "Green residual", green.residual);

    let dir = out_dir(&cfg, out)?;
    for (name, v) in [("harmonic", &dec.harmonic), ("exact", &dec.exact), ("coexact", &dec.coexact)] {
        match format {
            Format::Csv => output::write_cochain_csv(&dir.join(format!("{name}.csv")), v)?,
            Format::Bin => output::write_array(
                &dir.join(format!("{name}.bin")),
                &DMatrix::from_column_slice(v.len(), 1, v.as_slice()),
                degree,
                &summary.metric,
            )?,
        }
    }
    output::write_json(&dir.join("decomposition.json"), &summary)?;
    println!("wrote harmonic, exact, coexact and decomposition.json to {}", dir.display());
    Ok(())
}

fn convergence(args: &ConfigArgs, resolutions: &[usize], out: Option<PathBuf>) -> Outcome {
    if resolutions.len() < 3 {
        return Err(Failure::Usage(anyhow::anyhow!(
            "a convergence study needs at least 3 resolutions, got {}",
            resolutions.len()
        )));
    }
    let template = if args.config.is_none() && args.scenario.is_none() {
        let mut value = toml::Value::try_from(circle_template()).map_err(anyhow::Error::from)?;
        for o in &args.overrides {
            settings::apply_override(&mut value, o)?;
        }
        value.try_into().map_err(anyhow::Error::from)?
    } else {
        args.load()?
    };
    template.validate().map_err(classify)?;
    let table: ConvergenceTable = convergence_study(&template, resolutions).map_err(classify)?;
    println!("  {:>10}  {:>12}  {:>16}  {:>12}  {:>6}  dimensions", "N", "h", "first λ > 0", "error", "order");
    for r in &table.rows {
        println!(
            "  {:>10}  {:>12.6e}  {:>16.12}  {:>12.6e}  {:>6}  {}",
            format!("{:?}", r.resolution),
            r.spacing,
            r.first_nonzero_eigenvalue,
            r.error,
            r.observed_order.map_or("—".into(), |o| format!("{o:.3}")),
            tuple(&r.dimensions)
        );
    }
    println!(
        "minimum observed order {:.3}; dimensions {}",
        table.min_order,
        if table.dimensions_stable { "stable" } else { "CHANGE" }
    );
    let dir = out_dir(&template, out)?;
    let path = dir.join("convergence.json");
    output::write_json(&path, &table)?;
    println!("wrote {}", path.display());
    Ok(())
}
