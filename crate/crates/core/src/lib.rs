//! Finding the true endpoints of loan repayment histories.
//!
//! Loan extracts often keep an account alive for months after it actually
//! closed, reporting a run of zero or near-zero month-end balances. This
//! crate detects those trailing zero-valued balance (TZB) periods against a
//! small-balance threshold, searches a grid of thresholds for the one that
//! best separates credible history from the trailing run, discards the
//! trailing records, and measures the effect on default-spell survival
//! curves and workout loss rates.
//!
//! The numerical core is generic over the scalar type ([`Field`] for exact
//! arithmetic, [`Real`] where a square root is needed), so it runs on `f64`,
//! `f32` or an exact rational. The aliases below fix the common `f64` case.

pub mod analytics;
pub mod data;
pub mod month;
pub mod optimise;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod treatment;
pub mod tzb;

pub use analytics::{
    curve_mae, discrete_hazard, distribution_summary, extract_default_spells, km_estimator,
    km_from_durations, workout_loss_rate, AnalyticsError, DefaultSpell, Histogram, SpellOutcome,
    SurvivalCurve, SurvivalRow,
};
pub use data::{
    ingest_csv, read_csv, save_csv, subsample_clustered, write_csv, DataError, IngestOptions,
    IngestReport, LoanHistory, LoanRecord, NegativeBalancePolicy, Portfolio, TerminalStatus,
};
pub use month::YearMonth;
pub use optimise::{
    calibrate_w, evaluate_threshold, optimal_region, optimise, portfolio_contamination,
    portfolio_means, Calibration, OptimisationOutcome, OptimiseError, OptimiseOptions,
    PortfolioMeans, Region, SearchSpace, ThresholdEvaluation,
};
pub use scalar::{Field, Real};
pub use synth::{
    evaluate_recovery, generate, GroundTruth, LoanTruth, RecoveryMetrics, SynthError, SynthParams,
};
pub use treatment::{age_impact, apply_policy, AgeImpact, Scope, TreatmentError, TreatmentReport};
pub use tzb::{
    assess, contamination_degree, find_tzb_start, loan_objective, mean_pre_tzb_balance,
    mean_tzb_balance, tzb_membership, TzbAssessment, TzbError, TzbParams,
};

pub type LoanRecordF64 = LoanRecord<f64>;
pub type LoanHistoryF64 = LoanHistory<f64>;
pub type PortfolioF64 = Portfolio<f64>;
pub type TzbParamsF64 = TzbParams<f64>;
pub type TzbAssessmentF64 = TzbAssessment<f64>;
pub type SearchSpaceF64 = SearchSpace<f64>;
pub type ThresholdEvaluationF64 = ThresholdEvaluation<f64>;
pub type OptimisationOutcomeF64 = OptimisationOutcome<f64>;
pub type TreatmentReportF64 = TreatmentReport<f64>;
pub type DefaultSpellF64 = DefaultSpell<f64>;
pub type SurvivalCurveF64 = SurvivalCurve<f64>;
