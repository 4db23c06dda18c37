//! Shared fixtures for the criterion benches.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spencer_core::config::{LambdaKind, OmegaKind};
use spencer_core::hodge::random_vector;
use spencer_core::pipeline::assemble;
use spencer_core::{Metric, RunConfig, SpencerAssembly};

/// so(3) on an `n × n` torus with non-constant λ and a sin-profile ω, so
/// every weight varies and no block is trivially scalar.
pub fn varying_config(n: usize, truncation: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.mesh.resolution = vec![n, n];
    cfg.lambda.kind = LambdaKind::VortexSin;
    cfg.lambda.coeffs = Some(vec![0.3, -0.2, 1.0]);
    cfg.omega.kind = OmegaKind::SinProfile;
    cfg.omega.amplitude = 0.7;
    cfg.spencer.truncation = truncation;
    cfg
}

pub fn varying_assembly(n: usize, truncation: usize) -> (RunConfig, SpencerAssembly) {
    let cfg = varying_config(n, truncation);
    let inputs = cfg.build_inputs().expect("valid bench inputs");
    let asm = assemble(&cfg, &inputs, Metric::a()).expect("assembly");
    (cfg, asm)
}

pub fn random_cochain(asm: &SpencerAssembly, degree: usize, seed: u64) -> DVector<f64> {
    random_vector(&mut ChaCha8Rng::seed_from_u64(seed), asm.space_dim(degree))
}
