//! Distributed sequential detection with Byzantine sensors.
//!
//! Each of `s` sensors runs a local SPRT on its log-likelihood ratio and
//! latches the first time it crosses either barrier. A fusion rule either sums
//! the statistics (sum-SPRT) or waits for `r` sensors to agree (voting). Up to
//! `c` sensors may be compromised and deliver adversarial observations.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod adversary;
pub mod detection;
pub mod error;
pub mod models;
pub mod montecarlo;
pub mod oracle;
pub mod quadrature;
pub mod real;
pub mod trial;

pub use adversary::{AttackKind, AttackSpec, AttackStrategy, AttackerView, Placement};
pub use detection::{Decision, DetectorRule, SensorPanel, Thresholds};
pub use error::{Error, Result};
pub use models::{Family, FiniteAlphabet, Hypothesis, HypothesisModel, InfoConstants, Support};
pub use montecarlo::{
    estimate_gamma_curve, estimate_operating_point, equilibrium_sandwich_report, unknown_c_report,
    ErrorEstimate, ErrorKind, Estimator, GammaCurve, GammaPoint, OperatingPoint, SandwichReport,
    UnknownCReport,
};
pub use oracle::{exact_voting_operating_point, CrossingLaw, ExactOperatingPoint, OracleAttack};
pub use real::Real;
pub use trial::{run_trial, Sampling, Scenario, TrialOutcome, Verdict};

pub type Model = HypothesisModel<f64>;
pub type Alphabet = FiniteAlphabet<f64>;
pub type Barriers = Thresholds<f64>;
pub type Panel = SensorPanel<f64>;
pub type Rule = DetectorRule;
pub type Attack = AttackSpec<f64>;
pub type Setup = Scenario<f64>;
pub type ExactPoint = ExactOperatingPoint<f64>;
