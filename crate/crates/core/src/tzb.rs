//! Per-account trailing zero-valued balance (TZB) detection and measures.
//!
//! For a threshold `b`, the true end `t'` of an account is the earliest
//! period from which every remaining balance is `<= b`, provided at least
//! `min_len` records follow it. The TZB-period is `t' + 1 ..= T`; the record
//! at `t'` itself is the last credible (small) balance and is retained.
//!
//! Period arguments and results are the account's own period indices
//! (see [`LoanHistory::first_period`]).

use crate::data::LoanHistory;
use crate::scalar::Field;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TzbError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("measure undefined for an account without a TZB-period")]
    UndefinedForNonTzb,
    #[error("empty averaging window ending at period {t_end}")]
    EmptyWindow { t_end: u32 },
    #[error("contamination degree undefined: both means are zero")]
    DegenerateDenominator,
}

pub const DEFAULT_TAU: usize = 6;
pub const DEFAULT_MIN_LEN: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TzbParams<T> {
    /// Small-balance threshold.
    pub b: T,
    /// Length of the pre-end averaging window.
    pub tau: usize,
    /// Minimum TZB-period length.
    pub min_len: usize,
    /// Weight applied to the pre-end mean in the loan objective.
    pub w: T,
}

impl<T: Field> TzbParams<T> {
    pub fn new(b: T, tau: usize, min_len: usize, w: T) -> Result<Self, TzbError> {
        let p = Self { b, tau, min_len, w };
        p.validate()?;
        Ok(p)
    }

    pub fn with_threshold(b: T) -> Self {
        Self {
            b,
            tau: DEFAULT_TAU,
            min_len: DEFAULT_MIN_LEN,
            w: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<(), TzbError> {
        if self.b < T::zero() {
            return Err(TzbError::InvalidParams(format!(
                "b must be >= 0, got {:?}",
                self.b
            )));
        }
        if self.tau < 1 {
            return Err(TzbError::InvalidParams("tau must be >= 1".into()));
        }
        if self.min_len < 1 {
            return Err(TzbError::InvalidParams("min_len must be >= 1".into()));
        }
        if self.w < T::zero() || self.w > T::one() {
            return Err(TzbError::InvalidParams(format!(
                "w must lie in [0, 1], got {:?}",
                self.w
            )));
        }
        Ok(())
    }
}

/// 0-based position of the TZB start in a balance vector, if any.
pub fn tzb_start_position<T: Field>(balances: &[T], b: T, min_len: usize) -> Option<usize> {
    let n = balances.len();
    let trailing = balances.iter().rev().take_while(|&&x| x <= b).count();
    if trailing == 0 {
        return None;
    }
    // earliest t' with all balances from t' on <= b
    let true_end = n - trailing;
    // records strictly after t'
    (n - 1 - true_end >= min_len).then_some(true_end + 1)
}

/// Period index `t_z` at which the TZB-period starts, or `None`.
pub fn find_tzb_start<T: Field>(history: &LoanHistory<T>, b: T, min_len: usize) -> Option<u32> {
    let balances: Vec<T> = history.records().iter().map(|r| r.balance).collect();
    tzb_start_position(&balances, b, min_len).map(|pos| history.first_period() + pos as u32)
}

/// `Z_t` for every record: true from `t_z` to the end, false before.
pub fn tzb_membership<T: Field>(history: &LoanHistory<T>, b: T, min_len: usize) -> Vec<bool> {
    membership_from_start(history, find_tzb_start(history, b, min_len))
}

fn membership_from_start<T: Field>(history: &LoanHistory<T>, t_z: Option<u32>) -> Vec<bool> {
    let first = history.first_period();
    history
        .records()
        .iter()
        .enumerate()
        .map(|(k, _)| t_z.is_some_and(|tz| first + k as u32 >= tz))
        .collect()
}

/// M1: mean balance over `t_z ..= T`, divided by the number of terms.
pub fn mean_tzb_balance<T: Field>(
    history: &LoanHistory<T>,
    t_z: Option<u32>,
) -> Result<T, TzbError> {
    let t_z = t_z.ok_or(TzbError::UndefinedForNonTzb)?;
    let start = history
        .position_of(t_z)
        .ok_or(TzbError::UndefinedForNonTzb)?;
    let total = history.records()[start..]
        .iter()
        .fold(T::zero(), |acc, r| acc + r.balance);
    Ok(total / T::from_count(history.len() - start))
}

/// M2: mean balance over the `tau` periods ending at (and including) the
/// true end `t_end`. Shorter histories average whatever is available.
pub fn mean_pre_tzb_balance<T: Field>(
    history: &LoanHistory<T>,
    t_end: u32,
    tau: usize,
) -> Result<T, TzbError> {
    let (value, _) = pre_end_window(history, t_end, tau)?;
    Ok(value)
}

/// M2 and the number of terms actually averaged.
pub fn pre_end_window<T: Field>(
    history: &LoanHistory<T>,
    t_end: u32,
    tau: usize,
) -> Result<(T, usize), TzbError> {
    if tau < 1 {
        return Err(TzbError::InvalidParams("tau must be >= 1".into()));
    }
    let end = history
        .position_of(t_end)
        .ok_or(TzbError::EmptyWindow { t_end })?;
    let start = (end + 1).saturating_sub(tau);
    let window = &history.records()[start..=end];
    let total = window.iter().fold(T::zero(), |acc, r| acc + r.balance);
    Ok((total / T::from_count(window.len()), window.len()))
}

/// `m1 / (m1 + m2)`.
pub fn contamination_degree<T: Field>(m1: T, m2: T) -> Result<T, TzbError> {
    let denom = m1 + m2;
    if denom == T::zero() {
        return Err(TzbError::DegenerateDenominator);
    }
    Ok(m1 / denom)
}

/// `w * m2 - m1`.
pub fn loan_objective<T: Field>(m1: T, m2: T, w: T) -> T {
    w * m2 - m1
}

/// Everything the optimiser and treatment need to know about one account at
/// one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct TzbAssessment<T> {
    pub loan_id: String,
    pub t_z: Option<u32>,
    /// `t_z - 1` for TZB accounts, the last period otherwise.
    pub true_end: u32,
    pub last_period: u32,
    pub observed_len: usize,
    pub m1: Option<T>,
    pub m2: T,
    /// Whether the M2 window had fewer than `tau` months available.
    pub m2_truncated: bool,
    pub phi: Option<T>,
    pub loan_objective: Option<T>,
}

impl<T: Field> TzbAssessment<T> {
    pub fn is_tzb(&self) -> bool {
        self.t_z.is_some()
    }

    /// Number of records in the TZB-period (0 for non-TZB accounts).
    pub fn tzb_len(&self) -> usize {
        self.t_z
            .map_or(0, |tz| (self.last_period + 1 - tz) as usize)
    }

    /// Length of the history once the TZB-period is discarded.
    pub fn retained_len(&self) -> usize {
        self.observed_len - self.tzb_len()
    }

    pub fn membership(&self) -> Vec<bool> {
        let keep = self.retained_len();
        (0..self.observed_len).map(|k| k >= keep).collect()
    }
}

/// Runs detection and all per-account measures at `params`.
pub fn assess<T: Field>(
    history: &LoanHistory<T>,
    params: &TzbParams<T>,
) -> Result<TzbAssessment<T>, TzbError> {
    let t_z = find_tzb_start(history, params.b, params.min_len);
    let true_end = t_z.map_or(history.last_period(), |tz| tz - 1);
    let (m2, terms) = pre_end_window(history, true_end, params.tau)?;
    let m1 = match t_z {
        Some(_) => Some(mean_tzb_balance(history, t_z)?),
        None => None,
    };
    let phi = m1.and_then(|m1| contamination_degree(m1, m2).ok());
    let loan_objective = m1.map(|m1| loan_objective(m1, m2, params.w));
    Ok(TzbAssessment {
        loan_id: history.loan_id().to_string(),
        t_z,
        true_end,
        last_period: history.last_period(),
        observed_len: history.len(),
        m1,
        m2,
        m2_truncated: terms < params.tau,
        phi,
        loan_objective,
    })
}
