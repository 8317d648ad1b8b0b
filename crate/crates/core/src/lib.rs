//! Reactive point processes.
//!
//! A reactive point process models event streams whose intensity rises after
//! each event (self-excitation), falls after each inspection (self-regulation),
//! and saturates so that neither effect grows without bound. This crate
//! evaluates, simulates and fits such processes and uses them to compare
//! inspection policies.

pub mod abc;
pub mod cf;
pub mod error;
pub mod intensity;
pub mod io;
pub mod kernels;
pub mod likelihood;
pub mod model;
pub mod policy;
pub mod ranking;
pub mod rng;
pub mod simulate;
pub mod synth;

pub use abc::{
    abc_fit, abc_sweep, closest_point, fit_proposals, dne, fit_manifold, gap_histogram, kl, low_region, sample_prior,
    AbcConfig, AbcFit, ClosestPoint, GapHistogram, LowRegion, Manifold, Proposal, SummaryStats,
};
pub use cf::{
    build_trails, cf_curve, cf_fit, estimate_baseline, fit_excitation_curve, fit_saturation_curve,
    BaselineEstimate, CfCurve, CfFit, CfFitConfig, CurveFit, Trail, TrailConfig,
};
pub use error::{Result, RppError};
pub use intensity::{intensity, EntityModel, IntensityFn, Regulator, Response};
pub use kernels::{g1, g2, g3, g4, link_beta, link_gamma};
pub use likelihood::{integrate_intensity, log_likelihood, LogLikelihood};
pub use model::{
    Covariates, EntityRecord, Inspection, InspectionEffect, InspectionOutcome, KernelParams,
    RateModel, RepairKernel, RepairKernelParams, RppParams,
};
pub use io::{ingest, CorpusFiles, FitMethod, IngestOptions, ModelArtifact, NormalizationBounds, Provenance};
pub use policy::{
    optimal_y, repair_g4, run_policy, sample_outcome, schedule_brightline, PolicyConfig, PolicyReport,
};
pub use ranking::{
    compare_models, fit_constant_beta, rank_at_event, sign_test, vulnerability_snapshot, RankReport,
    RankRow, SignTest,
};
pub use simulate::{
    corpus_simulate, simulate_entity, simulate_without_saturation, SimConfig, SimResult,
};
pub use synth::{generate_synthetic, Calibration, SyntheticCorpus};
