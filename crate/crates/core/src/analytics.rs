//! Default spells, workout loss rates, Kaplan-Meier time-to-write-off
//! curves with discrete hazards, and small comparison helpers.
//!
//! Cures are treated as right-censoring when estimating time to write-off
//! (latent risks), so `F(t)` is the write-off lifetime distribution.

use crate::data::{DataError, LoanHistory, Portfolio, TerminalStatus};
use crate::optimise::format_value;
use crate::scalar::{mean, Field};
use rayon::prelude::*;
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error("loss rate requested for a spell that was not written off (loan {0})")]
    NotWrittenOff(String),
    #[error("spell of loan {0} has non-positive exposure at default")]
    NonPositiveExposure(String),
    #[error("empty input")]
    EmptyInput,
    #[error("curves are on different grids ({0} vs {1} points)")]
    GridMismatch(usize, usize),
    #[error("histogram needs at least one bin")]
    InvalidBins,
    #[error(transparent)]
    Data(#[from] DataError),
}

pub const DEFAULT_HORIZON_MONTHS: usize = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpellOutcome {
    WriteOff,
    /// Cured, or still in default at the end of the data.
    Censored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefaultSpell<T> {
    pub loan_id: String,
    /// Period index of the first month in default.
    pub spell_start: u32,
    /// Months in default, counting the first.
    pub duration: usize,
    pub outcome: SpellOutcome,
    /// Balance in the first month of the spell.
    pub ead: T,
    /// `(months since default, receipt)` for every month of the spell.
    pub cashflows: Vec<(usize, T)>,
}

fn spells_of<T: Field>(history: &LoanHistory<T>) -> Vec<DefaultSpell<T>> {
    let records = history.records();
    let written_off = history.terminal_status() == TerminalStatus::WriteOff;
    let mut spells = Vec::new();
    let mut k = 0;
    while k < records.len() {
        if !records[k].in_default {
            k += 1;
            continue;
        }
        let start = k;
        while k < records.len() && records[k].in_default {
            k += 1;
        }
        let run = &records[start..k];
        let outcome = if k == records.len() && written_off {
            SpellOutcome::WriteOff
        } else {
            SpellOutcome::Censored
        };
        spells.push(DefaultSpell {
            loan_id: history.loan_id().to_string(),
            spell_start: run[0].period_index,
            duration: run.len(),
            outcome,
            ead: run[0].balance,
            cashflows: run
                .iter()
                .enumerate()
                .map(|(j, r)| (j, r.receipt))
                .collect(),
        });
    }
    spells
}

/// One spell per maximal run of in-default months, in loan id order.
pub fn extract_default_spells<T: Field>(portfolio: &Portfolio<T>) -> Vec<DefaultSpell<T>> {
    let histories = portfolio.history_refs();
    let per_loan: Vec<Vec<DefaultSpell<T>>> = histories.par_iter().map(|h| spells_of(h)).collect();
    per_loan.into_iter().flatten().collect()
}

/// Realised loss `(EAD - PV(receipts)) / EAD`, discounting each receipt to
/// the default month at `annual_rate / 12` compounded monthly.
pub fn workout_loss_rate<T: Field>(
    spell: &DefaultSpell<T>,
    annual_rate: T,
    clamp: bool,
) -> Result<T, AnalyticsError> {
    if spell.outcome != SpellOutcome::WriteOff {
        return Err(AnalyticsError::NotWrittenOff(spell.loan_id.clone()));
    }
    if spell.ead <= T::zero() {
        return Err(AnalyticsError::NonPositiveExposure(spell.loan_id.clone()));
    }
    let monthly = T::one() + annual_rate / T::from_count(12);
    let pv = spell
        .cashflows
        .iter()
        .fold(T::zero(), |acc, &(offset, amount)| {
            acc + amount / num_traits::pow(monthly, offset)
        });
    let loss = (spell.ead - pv) / spell.ead;
    Ok(if clamp { clamp_unit(loss) } else { loss })
}

fn clamp_unit<T: Field>(x: T) -> T {
    if x < T::zero() {
        T::zero()
    } else if x > T::one() {
        T::one()
    } else {
        x
    }
}

/// Loss rates of every written-off spell with positive exposure.
pub fn write_off_losses<T: Field>(
    spells: &[DefaultSpell<T>],
    annual_rate: T,
    clamp: bool,
) -> Vec<T> {
    spells
        .iter()
        .filter_map(|s| workout_loss_rate(s, annual_rate, clamp).ok())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalRow<T> {
    pub t: usize,
    pub at_risk: usize,
    pub events: usize,
    pub censored: usize,
    /// `S(t)`.
    pub survival: T,
    /// `F(t) = 1 - S(t)`.
    pub cdf: T,
    /// `f(t) = F(t) - F(t-1)`.
    pub density: T,
    /// `h(t) = f(t) / S(t-1)`.
    pub hazard: T,
}

/// Tabulated curve at integer months `0, 1, ..`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve<T> {
    pub rows: Vec<SurvivalRow<T>>,
}

impl<T: Field> SurvivalCurve<T> {
    pub fn survival_at(&self, t: usize) -> T {
        match self.rows.iter().rev().find(|r| r.t <= t) {
            Some(r) => r.survival,
            None => T::one(),
        }
    }

    pub fn max_t(&self) -> usize {
        self.rows.last().map_or(0, |r| r.t)
    }

    /// Rows with `t <= horizon`.
    pub fn truncated(&self, horizon: usize) -> Self {
        Self {
            rows: self
                .rows
                .iter()
                .copied()
                .filter(|r| r.t <= horizon)
                .collect(),
        }
    }

    /// The curve on the grid `0..=horizon`. Past the last observed time the
    /// survival estimate is carried forward with no events.
    pub fn on_grid(&self, horizon: usize) -> Self {
        let last = self.rows.last().copied();
        let rows = (0..=horizon)
            .map(|t| match self.rows.get(t) {
                Some(r) => *r,
                None => {
                    let s = last.map_or(T::one(), |r| r.survival);
                    SurvivalRow {
                        t,
                        at_risk: 0,
                        events: 0,
                        censored: 0,
                        survival: s,
                        cdf: T::one() - s,
                        density: T::zero(),
                        hazard: T::zero(),
                    }
                }
            })
            .collect();
        Self { rows }
    }

    pub fn column(&self, pick: impl Fn(&SurvivalRow<T>) -> T) -> Vec<T> {
        self.rows.iter().map(pick).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), AnalyticsError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["t", "at_risk", "events", "S", "F", "f", "h"])
            .map_err(DataError::from)?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                r.at_risk.to_string(),
                r.events.to_string(),
                format_value(r.survival),
                format_value(r.cdf),
                format_value(r.density),
                format_value(r.hazard),
            ])
            .map_err(DataError::from)?;
        }
        w.flush().map_err(|source| DataError::Io {
            path: "<writer>".into(),
            source,
        })?;
        Ok(())
    }
}

/// Product-limit estimate from `(duration, event)` pairs; durations must be
/// at least 1. At a tied time events are counted before censorings, so a
/// censored duration `u` is still at risk at `u`.
pub fn km_from_durations<T: Field>(
    observations: &[(usize, bool)],
) -> Result<SurvivalCurve<T>, AnalyticsError> {
    if observations.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    let max_t = observations.iter().map(|o| o.0).max().unwrap_or(0);
    let mut events = vec![0usize; max_t + 1];
    let mut censored = vec![0usize; max_t + 1];
    for &(d, event) in observations {
        if event {
            events[d] += 1;
        } else {
            censored[d] += 1;
        }
    }
    let mut at_risk = observations.len();
    let mut rows = Vec::with_capacity(max_t + 1);
    let mut survival = T::one();
    // durations of 0 leave before month 1
    at_risk -= events[0] + censored[0];
    rows.push(SurvivalRow {
        t: 0,
        at_risk: observations.len(),
        events: 0,
        censored: 0,
        survival,
        cdf: T::zero(),
        density: T::zero(),
        hazard: T::zero(),
    });
    for t in 1..=max_t {
        let (n, d) = (at_risk, events[t]);
        if n > 0 && d > 0 {
            survival = survival * T::from_count(n - d) / T::from_count(n);
        }
        rows.push(SurvivalRow {
            t,
            at_risk: n,
            events: d,
            censored: censored[t],
            survival,
            cdf: T::one() - survival,
            density: T::zero(),
            hazard: T::zero(),
        });
        at_risk -= d + censored[t];
    }
    Ok(discrete_hazard(SurvivalCurve { rows }))
}

/// Kaplan-Meier estimate of time to write-off over default spells.
pub fn km_estimator<T: Field>(
    spells: &[DefaultSpell<T>],
) -> Result<SurvivalCurve<T>, AnalyticsError> {
    let obs: Vec<(usize, bool)> = spells
        .iter()
        .map(|s| (s.duration, s.outcome == SpellOutcome::WriteOff))
        .collect();
    km_from_durations(&obs)
}

/// Fills `f(t) = S(t-1) - S(t)` and `h(t) = f(t) / S(t-1)` (zero where
/// `S(t-1) = 0`), the probability of write-off at `t` given survival to `t-1`.
pub fn discrete_hazard<T: Field>(mut curve: SurvivalCurve<T>) -> SurvivalCurve<T> {
    let mut prev = T::one();
    for row in curve.rows.iter_mut() {
        if row.t == 0 {
            row.density = T::one() - row.survival;
            row.hazard = row.density;
        } else {
            row.density = prev - row.survival;
            row.hazard = if prev == T::zero() {
                T::zero()
            } else {
                row.density / prev
            };
        }
        row.cdf = T::one() - row.survival;
        prev = row.survival;
    }
    curve
}

/// Mean absolute difference between two curves on the same grid.
pub fn curve_mae<T: Field>(a: &[T], b: &[T]) -> Result<T, AnalyticsError> {
    if a.len() != b.len() {
        return Err(AnalyticsError::GridMismatch(a.len(), b.len()));
    }
    let diffs: Vec<T> = a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).collect();
    mean(&diffs).ok_or(AnalyticsError::EmptyInput)
}

/// Fixed-width histogram plus the sample mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<T> {
    pub lower: T,
    pub width: T,
    pub counts: Vec<usize>,
    pub mean: T,
}

impl<T: Field> Histogram<T> {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), AnalyticsError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["bin_lower", "bin_upper", "count"])
            .map_err(DataError::from)?;
        for (k, c) in self.counts.iter().enumerate() {
            let lo = self.lower + self.width * T::from_count(k);
            w.write_record([
                format_value(lo),
                format_value(lo + self.width),
                c.to_string(),
            ])
            .map_err(DataError::from)?;
        }
        w.flush().map_err(|source| DataError::Io {
            path: "<writer>".into(),
            source,
        })?;
        Ok(())
    }
}

/// Histogram over `range` (defaults to the data's min and max). The last
/// bin is closed on the right; values outside the range are ignored by the
/// counts but not by the mean.
pub fn distribution_summary<T: Field>(
    values: &[T],
    bins: usize,
    range: Option<(T, T)>,
) -> Result<Histogram<T>, AnalyticsError> {
    if bins == 0 {
        return Err(AnalyticsError::InvalidBins);
    }
    let mean = mean(values).ok_or(AnalyticsError::EmptyInput)?;
    let (lo, hi) = range.unwrap_or_else(|| {
        values.iter().fold((values[0], values[0]), |(lo, hi), &v| {
            (if v < lo { v } else { lo }, if v > hi { v } else { hi })
        })
    });
    let span = hi - lo;
    let width = if span > T::zero() {
        span / T::from_count(bins)
    } else {
        T::one()
    };
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v < lo || v > hi {
            continue;
        }
        let mut k = 0;
        while k + 1 < bins && v >= lo + width * T::from_count(k + 1) {
            k += 1;
        }
        counts[k] += 1;
    }
    Ok(Histogram {
        lower: lo,
        width,
        counts,
        mean,
    })
}

pub fn write_spells_csv<T: Field, W: Write>(
    spells: &[DefaultSpell<T>],
    annual_rate: T,
    writer: W,
) -> Result<(), AnalyticsError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record([
        "LoanID",
        "SpellStart",
        "Duration",
        "Outcome",
        "EAD",
        "LossRate",
    ])
    .map_err(DataError::from)?;
    for s in spells {
        let loss = workout_loss_rate(s, annual_rate, false)
            .map(format_value)
            .unwrap_or_default();
        w.write_record([
            s.loan_id.clone(),
            s.spell_start.to_string(),
            s.duration.to_string(),
            match s.outcome {
                SpellOutcome::WriteOff => "WOFF".to_string(),
                SpellOutcome::Censored => "CENSORED".to_string(),
            },
            crate::data::format_cents(s.ead),
            loss,
        ])
        .map_err(DataError::from)?;
    }
    w.flush().map_err(|source| DataError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}
