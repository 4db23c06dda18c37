//! Spencer cohomology of compatible pairs on flat tori.
//!
//! The crate is layered bottom-up: [`lie`] (structure constants, Killing
//! form, coadjoint action), [`sym`] (symmetric powers of `g`), [`spencer`]
//! (the constraint operator `δ^λ`), [`mesh`] (discrete exterior calculus on
//! `T¹`/`T²`), [`geometry`] (the pair `(λ, ω)` and its weights), [`hodge`]
//! (assembled complex, Laplacians, spectra, decompositions), and
//! [`pipeline`] / [`config`] for complete runs.

pub mod config;
pub mod error;
pub mod geometry;
pub mod hodge;
pub mod lie;
pub mod linalg;
pub mod mesh;
pub mod pipeline;
pub mod spencer;
pub mod sym;

pub use config::{scenario, RunConfig, SCENARIOS};
pub use error::{Error, Result};
pub use geometry::{fit_lambda, FitOptions, FitResult, PairField, VectorField, WeightKind};
pub use hodge::{EigenSettings, HarmonicSpace, Metric, MetricKind, SpencerAssembly};
pub use lie::{DualVector, LieAlgebra};
pub use mesh::{Cochain, MassMatrix, TorusMesh};
pub use pipeline::{circle_template, compare_metrics, convergence_study, run_pipeline, PipelineOutput, SpectrumReport};
pub use spencer::SpencerMaps;
pub use sym::{SymAlgebra, SymInner, SymTensor};
