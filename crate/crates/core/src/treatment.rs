//! Discarding detected TZB-periods under a chosen threshold.

use crate::data::{DataError, LoanHistory, Portfolio};
use crate::optimise::format_value;
use crate::scalar::{mean, median_count, Field};
use crate::tzb::{self, TzbError};
use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, thiserror::Error)]
pub enum TreatmentError {
    #[error("threshold must be >= 0")]
    NegativeThreshold,
    #[error("min_len must be >= 1")]
    InvalidMinLen,
    #[error("portfolios do not hold the same accounts")]
    MismatchedPortfolios,
    #[error(transparent)]
    Tzb(#[from] TzbError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scope {
    /// Only written-off and settled accounts are truncated.
    #[default]
    TerminatedOnly,
    AllAccounts,
}

impl Scope {
    pub fn code(self) -> &'static str {
        match self {
            Scope::TerminatedOnly => "terminated",
            Scope::AllAccounts => "all",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "terminated" | "terminatedonly" | "terminated-only" => Ok(Scope::TerminatedOnly),
            "all" | "allaccounts" | "all-accounts" => Ok(Scope::AllAccounts),
            other => Err(format!(
                "unknown scope {other:?} (expected terminated or all)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentReport<T> {
    pub policy_b: T,
    pub scope: Scope,
    /// Accounts with a detected TZB-period, in or out of scope.
    pub tzb_accounts: usize,
    pub accounts_affected: usize,
    pub records_discarded: usize,
    pub mean_tzb_len: Option<T>,
    pub median_tzb_len: Option<T>,
    /// Share of detected TZB accounts that are terminated.
    pub terminated_share_of_tzb: Option<T>,
    /// Sum of the discarded balances.
    pub discarded_balance: T,
}

impl<T: Field> TreatmentReport<T> {
    fn fields(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<T>| v.map(format_value).unwrap_or_default();
        vec![
            ("policy_b", format_value(self.policy_b)),
            ("scope", self.scope.to_string()),
            ("tzb_accounts", self.tzb_accounts.to_string()),
            ("accounts_affected", self.accounts_affected.to_string()),
            ("records_discarded", self.records_discarded.to_string()),
            ("mean_tzb_len", opt(self.mean_tzb_len)),
            ("median_tzb_len", opt(self.median_tzb_len)),
            ("terminated_share_of_tzb", opt(self.terminated_share_of_tzb)),
            ("discarded_balance", format_value(self.discarded_balance)),
        ]
    }

    pub fn to_kv(&self) -> String {
        self.fields()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Header line and value line.
    pub fn to_csv(&self) -> String {
        let fields = self.fields();
        let header: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
        let values: Vec<String> = fields.into_iter().map(|(_, v)| v).collect();
        format!("{}\n{}\n", header.join(","), values.join(","))
    }
}

struct Outcome<T> {
    history: LoanHistory<T>,
    detected: bool,
    terminated: bool,
    discarded: usize,
    discarded_balance: T,
}

/// Returns a new portfolio in which every in-scope account with a TZB-period
/// at threshold `b` ends at its true end. The input is left untouched.
pub fn apply_policy<T: Field>(
    portfolio: &Portfolio<T>,
    b: T,
    min_len: usize,
    scope: Scope,
) -> Result<(Portfolio<T>, TreatmentReport<T>), TreatmentError> {
    if b < T::zero() {
        return Err(TreatmentError::NegativeThreshold);
    }
    if min_len < 1 {
        return Err(TreatmentError::InvalidMinLen);
    }
    let histories = portfolio.history_refs();
    let outcomes: Vec<Outcome<T>> = histories
        .par_iter()
        .map(|h| {
            let t_z = tzb::find_tzb_start(h, b, min_len);
            let terminated = h.is_terminated();
            let in_scope = matches!(scope, Scope::AllAccounts) || terminated;
            match (t_z, in_scope) {
                (Some(tz), true) => {
                    let keep = h.position_of(tz).expect("t_z within history");
                    let discarded_balance = h.records()[keep..]
                        .iter()
                        .fold(T::zero(), |acc, r| acc + r.balance);
                    Outcome {
                        history: h.truncated(keep),
                        detected: true,
                        terminated,
                        discarded: h.len() - keep,
                        discarded_balance,
                    }
                }
                (detected, _) => Outcome {
                    history: (*h).clone(),
                    detected: detected.is_some(),
                    terminated,
                    discarded: 0,
                    discarded_balance: T::zero(),
                },
            }
        })
        .collect();

    let lens: Vec<usize> = outcomes
        .iter()
        .filter(|o| o.discarded > 0)
        .map(|o| o.discarded)
        .collect();
    let tzb_accounts = outcomes.iter().filter(|o| o.detected).count();
    let terminated_tzb = outcomes
        .iter()
        .filter(|o| o.detected && o.terminated)
        .count();
    let lens_t: Vec<T> = lens.iter().map(|&l| T::from_count(l)).collect();
    let report = TreatmentReport {
        policy_b: b,
        scope,
        tzb_accounts,
        accounts_affected: lens.len(),
        records_discarded: lens.iter().sum(),
        mean_tzb_len: mean(&lens_t),
        median_tzb_len: median_count(&lens),
        terminated_share_of_tzb: (tzb_accounts > 0)
            .then(|| T::from_count(terminated_tzb) / T::from_count(tzb_accounts)),
        discarded_balance: outcomes
            .iter()
            .fold(T::zero(), |acc, o| acc + o.discarded_balance),
    };
    let treated = Portfolio::from_histories(outcomes.into_iter().map(|o| o.history))?;
    Ok((treated, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeImpact<T> {
    pub mean_before: T,
    pub mean_after: T,
    pub median_before: T,
    pub median_after: T,
    /// `mean_before - mean_after`.
    pub mean_reduction: T,
    pub median_reduction: T,
}

/// Account ages (history lengths in months) before and after treatment.
pub fn age_impact<T: Field>(
    before: &Portfolio<T>,
    after: &Portfolio<T>,
) -> Result<AgeImpact<T>, TreatmentError> {
    if !before.same_loans(after) || before.is_empty() {
        return Err(TreatmentError::MismatchedPortfolios);
    }
    let ages = |p: &Portfolio<T>| p.histories().map(LoanHistory::len).collect::<Vec<_>>();
    let (a, b) = (ages(before), ages(after));
    let to_t = |v: &[usize]| v.iter().map(|&x| T::from_count(x)).collect::<Vec<T>>();
    let mean_before = mean(&to_t(&a)).unwrap();
    let mean_after = mean(&to_t(&b)).unwrap();
    let median_before: T = median_count(&a).unwrap();
    let median_after: T = median_count(&b).unwrap();
    Ok(AgeImpact {
        mean_before,
        mean_after,
        median_before,
        median_after,
        mean_reduction: mean_before - mean_after,
        median_reduction: median_before - median_after,
    })
}
