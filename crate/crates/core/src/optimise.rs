//! Portfolio-level threshold search.
//!
//! For every candidate threshold `b` each account is assessed, the loan
//! objectives of the TZB-set are pooled into `f(b) = sum(l_i) / s`, where
//! `s` is their sample standard deviation, and the best threshold is the
//! argmax of `f` over the search space. The weight `w` defaults to the
//! midpoint of the portfolio contamination degrees at the two extremes of
//! the search space.
//!
//! All reductions run in ascending loan id order, so results are identical
//! whatever the number of worker threads.

use crate::data::{DataError, LoanHistory, Portfolio};
use crate::scalar::{mean, sample_std, Field, Real};
use crate::tzb::{self, TzbAssessment, TzbError, TzbParams};
use rayon::prelude::*;
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum OptimiseError {
    #[error("portfolio is empty")]
    EmptyPortfolio,
    #[error("invalid search space: {0}")]
    InvalidSearchSpace(String),
    #[error("no threshold in the search space yields a defined objective (TZB-set of at least 2 accounts with non-zero spread)")]
    NoDefinedObjective,
    #[error("contamination degree undefined at every threshold; cannot calibrate w")]
    UndefinedEndpoint,
    #[error("portfolio contamination undefined: both means are zero")]
    DegenerateDenominator,
    #[error("quantile must lie strictly between 0 and 1")]
    InvalidQuantile,
    #[error("optimal region needs at least one defined curve point")]
    EmptyCurve,
    #[error(transparent)]
    Tzb(#[from] TzbError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// The 24 candidate thresholds used by default.
pub const DEFAULT_THRESHOLDS: [f64; 24] = [
    0.0, 10.0, 25.0, 50.0, 75.0, 100.0, 150.0, 200.0, 250.0, 300.0, 400.0, 500.0, 750.0, 1000.0,
    1250.0, 1500.0, 1750.0, 2000.0, 2500.0, 3000.0, 4000.0, 5000.0, 7500.0, 10000.0,
];

pub const DEFAULT_REGION_QUANTILE: f64 = 0.25;

/// Strictly increasing, non-empty, non-negative thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace<T> {
    thresholds: Vec<T>,
}

impl<T: Field> SearchSpace<T> {
    pub fn new(thresholds: Vec<T>) -> Result<Self, OptimiseError> {
        if thresholds.is_empty() {
            return Err(OptimiseError::InvalidSearchSpace("no thresholds".into()));
        }
        if thresholds[0] < T::zero() {
            return Err(OptimiseError::InvalidSearchSpace(
                "negative threshold".into(),
            ));
        }
        if thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(OptimiseError::InvalidSearchSpace(
                "thresholds must be strictly increasing".into(),
            ));
        }
        Ok(Self { thresholds })
    }

    pub fn default_grid() -> Self {
        Self {
            thresholds: DEFAULT_THRESHOLDS
                .iter()
                .map(|&b| T::from_f64_lossy(b))
                .collect(),
        }
    }

    pub fn thresholds(&self) -> &[T] {
        &self.thresholds
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortfolioMeans<T> {
    /// Mean M1 over the TZB-set; `None` when the set is empty.
    pub m1_bar: Option<T>,
    /// Mean M2 over all accounts, each at its own true end.
    pub m2_bar: T,
}

/// Portfolio-level statistics at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdEvaluation<T> {
    pub b: T,
    pub n_accounts: usize,
    pub n_s: usize,
    pub l_bar: Option<T>,
    pub s_bar: Option<T>,
    pub f_value: Option<T>,
    pub m1_bar: Option<T>,
    pub m2_bar: T,
    pub phi_bar: Option<T>,
    pub prevalence: T,
    /// Mean history length after discarding detected TZB-periods.
    pub mean_age: T,
    pub mean_tzb_len: Option<T>,
    /// Accounts whose M2 window had fewer than `tau` months.
    pub m2_truncated: usize,
}

fn assess_all<T: Field>(
    portfolio: &Portfolio<T>,
    params: &TzbParams<T>,
) -> Result<Vec<TzbAssessment<T>>, TzbError> {
    let histories: Vec<&LoanHistory<T>> = portfolio.history_refs();
    histories
        .par_iter()
        .map(|h| tzb::assess(h, params))
        .collect()
}

fn means_of<T: Field>(assessments: &[TzbAssessment<T>]) -> PortfolioMeans<T> {
    let m1: Vec<T> = assessments.iter().filter_map(|a| a.m1).collect();
    let m2: Vec<T> = assessments.iter().map(|a| a.m2).collect();
    PortfolioMeans {
        m1_bar: mean(&m1),
        m2_bar: mean(&m2).unwrap_or_else(T::zero),
    }
}

/// M1 averaged over the TZB-set and M2 averaged over every account.
pub fn portfolio_means<T: Field>(
    portfolio: &Portfolio<T>,
    b: T,
    tau: usize,
    min_len: usize,
) -> Result<PortfolioMeans<T>, OptimiseError> {
    if portfolio.is_empty() {
        return Err(OptimiseError::EmptyPortfolio);
    }
    let params = TzbParams::new(b, tau, min_len, T::zero())?;
    Ok(means_of(&assess_all(portfolio, &params)?))
}

pub fn portfolio_contamination<T: Field>(m1_bar: T, m2_bar: T) -> Result<T, OptimiseError> {
    tzb::contamination_degree(m1_bar, m2_bar).map_err(|_| OptimiseError::DegenerateDenominator)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration<T> {
    pub midpoint: T,
    /// Thresholds whose contamination degrees formed the midpoint.
    pub low_b: T,
    pub high_b: T,
    /// How many extremes had to fall back to the nearest defined threshold.
    pub fallbacks: usize,
}

/// Midpoint of the contamination degrees at the first and last threshold.
/// An extreme with undefined degree falls back to the nearest threshold
/// (moving inwards) that has one.
pub fn calibrate_w<T: Field>(
    curve_phi: &[(T, Option<T>)],
) -> Result<Calibration<T>, OptimiseError> {
    let low = curve_phi.iter().position(|(_, phi)| phi.is_some());
    let high = curve_phi.iter().rposition(|(_, phi)| phi.is_some());
    let (Some(low), Some(high)) = (low, high) else {
        return Err(OptimiseError::UndefinedEndpoint);
    };
    let (low_b, low_phi) = curve_phi[low];
    let (high_b, high_phi) = curve_phi[high];
    let two = T::from_count(2);
    Ok(Calibration {
        midpoint: (low_phi.unwrap() + high_phi.unwrap()) / two,
        low_b,
        high_b,
        fallbacks: usize::from(low != 0) + usize::from(high != curve_phi.len() - 1),
    })
}

fn summarise<T: Real>(b: T, assessments: &[TzbAssessment<T>], w: T) -> ThresholdEvaluation<T> {
    let n = assessments.len();
    let means = means_of(assessments);
    let objectives: Vec<T> = assessments
        .iter()
        .filter_map(|a| a.m1.map(|m1| tzb::loan_objective(m1, a.m2, w)))
        .collect();
    let n_s = objectives.len();
    let l_bar = mean(&objectives);
    let s_bar = sample_std(&objectives);
    let total = objectives.iter().fold(T::zero(), |acc, &l| acc + l);
    let f_value = s_bar.filter(|s| *s > T::zero()).map(|s| total / s);
    let phi_bar = means
        .m1_bar
        .and_then(|m1| portfolio_contamination(m1, means.m2_bar).ok());
    let ages: Vec<T> = assessments
        .iter()
        .map(|a| T::from_count(a.retained_len()))
        .collect();
    let tzb_lens: Vec<T> = assessments
        .iter()
        .filter(|a| a.is_tzb())
        .map(|a| T::from_count(a.tzb_len()))
        .collect();
    ThresholdEvaluation {
        b,
        n_accounts: n,
        n_s,
        l_bar,
        s_bar,
        f_value,
        m1_bar: means.m1_bar,
        m2_bar: means.m2_bar,
        phi_bar,
        prevalence: T::from_count(n_s) / T::from_count(n.max(1)),
        mean_age: mean(&ages).unwrap_or_else(T::zero),
        mean_tzb_len: mean(&tzb_lens),
        m2_truncated: assessments.iter().filter(|a| a.m2_truncated).count(),
    }
}

/// All statistics for one threshold with a fixed `w`.
pub fn evaluate_threshold<T: Real>(
    portfolio: &Portfolio<T>,
    params: &TzbParams<T>,
) -> Result<ThresholdEvaluation<T>, OptimiseError> {
    if portfolio.is_empty() {
        return Err(OptimiseError::EmptyPortfolio);
    }
    params.validate()?;
    let assessments = assess_all(portfolio, params)?;
    Ok(summarise(params.b, &assessments, params.w))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimiseOptions<T> {
    pub tau: usize,
    pub min_len: usize,
    /// Fixed weight; `None` calibrates it from the contamination midpoint.
    pub w: Option<T>,
    pub region_quantile: T,
}

impl<T: Field> Default for OptimiseOptions<T> {
    fn default() -> Self {
        Self {
            tau: tzb::DEFAULT_TAU,
            min_len: tzb::DEFAULT_MIN_LEN,
            w: None,
            region_quantile: T::from_f64_lossy(DEFAULT_REGION_QUANTILE),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimisationOutcome<T> {
    pub curve: Vec<ThresholdEvaluation<T>>,
    pub b_star: T,
    pub region: Region<T>,
    pub w_used: T,
    /// Contamination midpoint; `None` only if it is undefined and `w` was given.
    pub calibration: Option<Calibration<T>>,
    /// Thresholds left out of the argmax because `f` is undefined there.
    pub excluded: Vec<T>,
}

impl<T: Field> OptimisationOutcome<T> {
    pub fn midpoint(&self) -> Option<T> {
        self.calibration.map(|c| c.midpoint)
    }

    pub fn best(&self) -> &ThresholdEvaluation<T> {
        self.curve
            .iter()
            .find(|e| e.b == self.b_star)
            .expect("b* is on the curve")
    }
}

/// Evaluates every threshold and picks the maximiser of `f`. Ties go to the
/// smallest threshold.
pub fn optimise<T: Real>(
    portfolio: &Portfolio<T>,
    space: &SearchSpace<T>,
    options: &OptimiseOptions<T>,
) -> Result<OptimisationOutcome<T>, OptimiseError> {
    if portfolio.is_empty() {
        return Err(OptimiseError::EmptyPortfolio);
    }
    let mut scans = Vec::with_capacity(space.thresholds().len());
    for &b in space.thresholds() {
        let params = TzbParams::new(
            b,
            options.tau,
            options.min_len,
            options.w.unwrap_or_else(T::zero),
        )?;
        scans.push((b, assess_all(portfolio, &params)?));
    }
    // f needs two TZB accounts whatever w is; report that before calibration.
    if scans
        .iter()
        .all(|(_, a)| a.iter().filter(|x| x.is_tzb()).count() < 2)
    {
        return Err(OptimiseError::NoDefinedObjective);
    }
    let curve_phi: Vec<(T, Option<T>)> = scans
        .iter()
        .map(|(b, assessments)| {
            let m = means_of(assessments);
            (
                *b,
                m.m1_bar
                    .and_then(|m1| portfolio_contamination(m1, m.m2_bar).ok()),
            )
        })
        .collect();
    let calibration = match (calibrate_w(&curve_phi), options.w) {
        (Ok(c), _) => Some(c),
        (Err(_), Some(_)) => None,
        (Err(e), None) => return Err(e),
    };
    let w_used = match options.w {
        Some(w) => w,
        None => calibration.expect("calibrated above").midpoint,
    };
    TzbParams::new(T::zero(), options.tau, options.min_len, w_used)?;

    let curve: Vec<ThresholdEvaluation<T>> = scans
        .iter()
        .map(|(b, assessments)| summarise(*b, assessments, w_used))
        .collect();
    let defined: Vec<(T, T)> = curve
        .iter()
        .filter_map(|e| e.f_value.map(|f| (e.b, f)))
        .collect();
    let excluded = curve
        .iter()
        .filter(|e| e.f_value.is_none())
        .map(|e| e.b)
        .collect();
    if defined.is_empty() {
        return Err(OptimiseError::NoDefinedObjective);
    }
    let b_star = argmax_smallest(&defined);
    let region = optimal_region(&defined, options.region_quantile)?;
    Ok(OptimisationOutcome {
        curve,
        b_star,
        region,
        w_used,
        calibration,
        excluded,
    })
}

fn argmax_smallest<T: Field>(curve: &[(T, T)]) -> T {
    let mut best = curve[0];
    for &(b, f) in &curve[1..] {
        if f > best.1 || (f == best.1 && b < best.0) {
            best = (b, f);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region<T> {
    pub thresholds: Vec<T>,
    /// All `f` values were equal, so the whole curve is returned.
    pub degenerate: bool,
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
fn quantile_sorted<T: Real>(sorted: &[T], q: T) -> T {
    let h = T::from_count(sorted.len() - 1) * q;
    let lo = h.floor();
    let k = lo.to_usize().unwrap_or(0);
    if k + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[k] + (h - lo) * (sorted[k + 1] - sorted[k])
}

/// Points of the `(b, f)` curve close to its maximum. Both axes are min-max
/// scaled to `[0, 1]` before taking Euclidean distances to the maximiser;
/// points within the `quantile`-quantile of those distances form the region.
pub fn optimal_region<T: Real>(curve: &[(T, T)], quantile: T) -> Result<Region<T>, OptimiseError> {
    if !(quantile > T::zero() && quantile < T::one()) {
        return Err(OptimiseError::InvalidQuantile);
    }
    if curve.is_empty() {
        return Err(OptimiseError::EmptyCurve);
    }
    let (b_min, b_max) = min_max(curve.iter().map(|p| p.0));
    let (f_min, f_max) = min_max(curve.iter().map(|p| p.1));
    if f_min == f_max {
        return Ok(Region {
            thresholds: curve.iter().map(|p| p.0).collect(),
            degenerate: true,
        });
    }
    let scale = |x: T, lo: T, hi: T| {
        if hi > lo {
            (x - lo) / (hi - lo)
        } else {
            T::zero()
        }
    };
    let b_star = argmax_smallest(curve);
    let f_star = curve.iter().find(|p| p.0 == b_star).unwrap().1;
    let (xs, ys) = (scale(b_star, b_min, b_max), scale(f_star, f_min, f_max));
    let distances: Vec<T> = curve
        .iter()
        .map(|&(b, f)| {
            let dx = scale(b, b_min, b_max) - xs;
            let dy = scale(f, f_min, f_max) - ys;
            (dx * dx + dy * dy).sqrt()
        })
        .collect();
    let mut sorted = distances.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let cutoff = quantile_sorted(&sorted, quantile);
    let thresholds = curve
        .iter()
        .zip(&distances)
        .filter(|(p, d)| **d <= cutoff || p.0 == b_star)
        .map(|(p, _)| p.0)
        .collect();
    Ok(Region {
        thresholds,
        degenerate: false,
    })
}

fn min_max<T: Real>(values: impl Iterator<Item = T>) -> (T, T) {
    values.fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

fn opt<T: Field>(v: Option<T>) -> String {
    v.map(|x| format_value(x)).unwrap_or_default()
}

/// Shortest round-trip decimal form of a value as `f64`.
pub fn format_value<T: Field>(v: T) -> String {
    format!("{}", v.to_f64_lossy())
}

pub const CURVE_COLUMNS: [&str; 11] = [
    "b",
    "n_s",
    "l_bar",
    "s_bar",
    "f",
    "m1_bar",
    "m2_bar",
    "phi_bar",
    "prevalence",
    "mean_age",
    "mean_tzb_len",
];

/// Writes the curve as CSV; undefined values are empty fields.
pub fn write_curve_csv<T: Field, W: Write>(
    curve: &[ThresholdEvaluation<T>],
    writer: W,
) -> Result<(), OptimiseError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(CURVE_COLUMNS).map_err(DataError::from)?;
    for e in curve {
        w.write_record([
            format_value(e.b),
            e.n_s.to_string(),
            opt(e.l_bar),
            opt(e.s_bar),
            opt(e.f_value),
            opt(e.m1_bar),
            format_value(e.m2_bar),
            opt(e.phi_bar),
            format_value(e.prevalence),
            format_value(e.mean_age),
            opt(e.mean_tzb_len),
        ])
        .map_err(DataError::from)?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}
