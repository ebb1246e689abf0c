//! Asymptotic privacy guarantees against hypothesis-testing adversaries.
//!
//! The crate computes single-letter error exponents — the minimal KL
//! divergence and minimal Chernoff information between induced observation
//! distributions over distortion-constrained policy polytopes — synthesizes
//! the optimal memoryless privacy-preserving policies, and validates the
//! exponents against exact finite-horizon adversary oracles (randomized
//! Neyman-Pearson, deterministic threshold, and Bayes likelihood-ratio tests)
//! and Monte Carlo simulation. A smart-meter energy-management specialization
//! builds the supply-side constraint sets and ships the worked demand models.

pub mod adversary;
pub mod distributions;
pub mod error;
pub mod exponents;
pub mod io;
pub mod policies;
pub mod smartmeter;

mod scalar;

pub use adversary::{
    bayes_exact, exponent_trend, np_exact, np_threshold_test, ObservationModel, RegionSummary,
    TestMode, TestResult, TestSpec, TrendRow,
};
pub use distributions::{
    chernoff, chernoff_coeff, kl, marginal, renyi, Alphabet, ConditionalPmf, Pmf, PolicyPair,
    SourceModel,
};
pub use error::{Error, Result};
pub use exponents::{
    expected_distortion, quantize_to_demand_alphabet, solve_nu, solve_nu_opts, solve_nu_tau,
    solve_nu_tau_opts, solve_phi, solve_phi_opts, sweep_exponent, ConstraintSet, DistortionSpec,
    ExponentKind, ExponentResult, PolicyCheck, SolveOptions, SweepAudit, SweepOptions, SweepRow,
    SweepTable,
};
pub use policies::{
    memoryless_policy_apply, sample_iid, two_phase_apply, typical_set_decision, Hypothesis,
    PolicyTrace, TwoPhaseConfig, TwoPhaseRunner, TwoPhaseVariant,
};
pub use smartmeter::{
    apply_to_trace, build_energy_constraint, smart_meter_exponents, DemandModel, EnergyConstraint,
    TraceApplication,
};
