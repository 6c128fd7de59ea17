//! Complier analysis for binary-instrument persuasion experiments.
//!
//! Given a randomized encouragement `Z`, an information treatment `T`,
//! and a binary behavioural outcome `Y`, this crate identifies the
//! joint distribution of the potential outcomes among compliers,
//! profiles the latent persuasion types (always-voters, never-voters,
//! mobilised voters) by treatment and covariates, compares the local
//! persuasion rate with its popular approximation, runs a sharp
//! falsification test of the identifying assumptions via nonnegative
//! feasibility of a linear system, and carries a sensitivity analysis
//! for the monotone-treatment-response assumption.
//!
//! Everything estimable is a Wald ratio with a dedicated transform
//! pair, so the delta-method and weak-identification-robust inference
//! in [`inference`] apply to every estimand uniformly. The [`oracle`]
//! module provides synthetic populations with exact moments and
//! directly computed ground truth, which back the test suite end to
//! end.
//!
//! See the `examples/` directory for one runnable program per
//! capability, and the `persuasion-iv` binary for the file-based
//! pipeline.

pub mod cli;
pub mod error;
pub mod estimands;
pub mod falsifier;
pub mod inference;
pub mod moments;
pub mod oracle;
pub mod sample;
pub mod sensitivity;

pub use error::{Error, Result};
pub use estimands::{
    compare_dk_local, conditional_cdf, joint_po, kappa_moment, marginal_po, persuasion_rates,
    profile_at_nt, profile_joint_indicator, profile_marginal, profile_persuasion, ComplierJointPo,
    MarginalPo, PersuasionRates, PersuasionTarget, TakerGroup, TypeProfile, WaldEstimand,
};
pub use falsifier::{
    build_system, solve_feasibility, subsample_test, test_statistic, FalsifierResult,
    FalsifierSystem, Restrictions,
};
pub use inference::{ar_confidence_set, ar_test, delta_inference, ArResult, RatioInference};
pub use moments::{
    arm_mean, wald_components, wald_ratio, MomentSource, TransformSpec, WaldComponents,
};
pub use oracle::{oracle_estimands, population_moments, LatentDgp};
pub use sample::{
    load_csv, partition_cells, restrict_pair, write_csv, BinningSpec, CellPartition, CsvSchema,
    ObservedRow, ObservedSample,
};
pub use sensitivity::{sensitivity_curve, SensitivityPoint};
