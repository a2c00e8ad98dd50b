//! Synthetic amortising loan portfolios with known true endpoints.
//!
//! Each loan pays a level instalment until it settles, defaults (and then
//! cures or is written off) or reaches the end of the observation window.
//! Loans originate either inside the window or up to `max_seasoning` months
//! before it opens; a seasoned loan is observed from the window start with
//! its scheduled balance, so older loans run off to the floor and settle
//! within the window.
//! Settlement and write-off leave a small residual balance in `[0, cap]`
//! on the terminating record, which is the account's true end. A scheduled
//! payment that would take the balance to the genuine floor or below
//! settles the loan instead, so every balance before a true end is above
//! the floor.
//!
//! A terminated loan is corrupted with probability `tzb_fraction`: the
//! terminal status moves to an appended tail whose balances start from the
//! residual and accrue interest monthly, and whose final balance is zero.
//! Receipts in the tail are zero; a written-off loan stays flagged in
//! default throughout its tail.
//!
//! Loan `i` draws only from the stream `SeededStream::new(seed, i)` and
//! every amount is rounded to cents, so a portfolio is a pure function of
//! the parameters.

use crate::data::{DataError, LoanHistory, LoanRecord, Portfolio, TerminalStatus};
use crate::month::YearMonth;
use crate::rng::SeededStream;
use crate::scalar::Field;
use crate::tzb::TzbAssessment;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("assessments and ground truth cover different loans")]
    LoanSetMismatch,
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_loans: usize,
    pub term_months: u32,
    pub principal_range: (f64, f64),
    pub annual_rate_range: (f64, f64),
    /// Monthly probability that a performing loan defaults.
    pub p_default: f64,
    /// Monthly probability that a defaulted loan cures.
    pub p_cure: f64,
    /// Monthly probability that a defaulted loan is written off.
    pub p_writeoff: f64,
    /// Monthly probability that a performing loan settles early.
    pub p_settle: f64,
    /// Probability that a terminated loan receives a TZB tail.
    pub tzb_fraction: f64,
    pub tail_len_mean: f64,
    pub max_tail_len: u32,
    /// Upper bound of the residual balance left at termination.
    pub tail_balance_cap: f64,
    /// Annual rate at which tail balances accrue.
    pub tail_accrual_rate: f64,
    /// Every balance before a true end exceeds this.
    pub genuine_floor: f64,
    /// Fraction of the outstanding balance recovered at write-off.
    pub recovery_range: (f64, f64),
    pub start_month: YearMonth,
    /// Loans are observed up to the end of this window.
    pub window_months: u32,
    /// Longest time on book before the window opens; must be below the term.
    pub max_seasoning: u32,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_loans: 10_000,
            term_months: 240,
            principal_range: (100_000.0, 1_500_000.0),
            annual_rate_range: (0.07, 0.14),
            p_default: 0.004,
            p_cure: 0.08,
            p_writeoff: 0.05,
            p_settle: 0.008,
            tzb_fraction: 0.25,
            tail_len_mean: 18.0,
            max_tail_len: 36,
            tail_balance_cap: 50.0,
            tail_accrual_rate: 0.22,
            genuine_floor: 2_000.0,
            recovery_range: (0.3, 0.9),
            start_month: YearMonth::new(2007, 1).expect("valid month"),
            window_months: 192,
            max_seasoning: 180,
            seed: 20_240_501,
        }
    }
}

impl SynthParams {
    // negated comparisons so that NaN parameters are rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_string()));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.n_loans < 1 {
            return bad("n_loans must be >= 1");
        }
        if self.term_months < 1 || self.window_months < 1 {
            return bad("term_months and window_months must be >= 1");
        }
        if self.max_seasoning >= self.term_months {
            return bad("max_seasoning must be below term_months");
        }
        for (name, p) in [
            ("p_default", self.p_default),
            ("p_cure", self.p_cure),
            ("p_writeoff", self.p_writeoff),
            ("p_settle", self.p_settle),
            ("tzb_fraction", self.tzb_fraction),
        ] {
            if !prob(p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if self.p_cure + self.p_writeoff > 1.0 {
            return bad("p_cure + p_writeoff must not exceed 1");
        }
        let (p_lo, p_hi) = self.principal_range;
        if !(p_lo > 0.0 && p_lo <= p_hi) {
            return bad("principal_range must be positive and ordered");
        }
        let (r_lo, r_hi) = self.annual_rate_range;
        if !(r_lo >= 0.0 && r_lo <= r_hi) {
            return bad("annual_rate_range must be non-negative and ordered");
        }
        let (c_lo, c_hi) = self.recovery_range;
        if !(c_lo >= 0.0 && c_lo <= c_hi) {
            return bad("recovery_range must be non-negative and ordered");
        }
        if !(self.tail_balance_cap >= 0.0) || !(self.tail_accrual_rate >= 0.0) {
            return bad("tail_balance_cap and tail_accrual_rate must be >= 0");
        }
        if !(self.tail_len_mean >= 1.0) || self.max_tail_len < 1 {
            return bad("tail_len_mean and max_tail_len must be >= 1");
        }
        if !(self.genuine_floor >= self.tail_balance_cap) {
            return bad("genuine_floor must be at least tail_balance_cap");
        }
        Ok(())
    }

    /// Largest balance any tail can reach.
    pub fn max_tail_balance(&self) -> f64 {
        self.tail_balance_cap * (1.0 + self.tail_accrual_rate / 12.0).powi(self.max_tail_len as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoanTruth {
    /// Period index of the last genuine record.
    pub true_end: u32,
    pub injected: bool,
    pub tail_len: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub loans: BTreeMap<String, LoanTruth>,
}

impl GroundTruth {
    pub fn injected_count(&self) -> usize {
        self.loans.values().filter(|t| t.injected).count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SynthError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["LoanID", "TrueEnd", "Injected", "TailLen"])
            .map_err(DataError::from)?;
        for (id, t) in &self.loans {
            w.write_record([
                id.clone(),
                t.true_end.to_string(),
                u8::from(t.injected).to_string(),
                t.tail_len.to_string(),
            ])
            .map_err(DataError::from)?;
        }
        w.flush().map_err(|source| DataError::Io {
            path: "<writer>".into(),
            source,
        })?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, SynthError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut loans = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(DataError::from)?;
            let row = rec.position().map(|p| p.line()).unwrap_or(0);
            let get = |k: usize| rec.get(k).unwrap_or("").trim();
            let bad = |column: &'static str, k: usize| {
                SynthError::Data(DataError::UnparseableRow {
                    loan_id: get(0).to_string(),
                    row,
                    column,
                    value: get(k).to_string(),
                })
            };
            let truth = LoanTruth {
                true_end: get(1).parse().map_err(|_| bad("TrueEnd", 1))?,
                injected: match get(2) {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad("Injected", 2)),
                },
                tail_len: get(3).parse().map_err(|_| bad("TailLen", 3))?,
            };
            loans.insert(get(0).to_string(), truth);
        }
        Ok(Self { loans })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(BufReader::new(f))
    }
}

fn cents(x: f64) -> i64 {
    (x * 100.0).round() as i64
}

struct Row {
    balance: i64,
    receipt: i64,
    in_default: bool,
    status: TerminalStatus,
}

fn generate_loan(params: &SynthParams, index: usize) -> (Vec<LoanRecord<i64>>, LoanTruth) {
    let mut rng = SeededStream::new(params.seed, index as u64);
    let principal = cents(rng.uniform_in(params.principal_range.0, params.principal_range.1));
    let rate = (rng.uniform_in(params.annual_rate_range.0, params.annual_rate_range.1) * 10_000.0)
        .round()
        / 10_000.0;
    let monthly = rate / 12.0;
    let n = params.term_months as f64;
    let instalment = if monthly > 0.0 {
        cents(principal as f64 / 100.0 * monthly / (1.0 - (1.0 + monthly).powf(-n)))
    } else {
        cents(principal as f64 / 100.0 / n)
    };
    let span = params.window_months.saturating_sub(12).max(1) as u64 + params.max_seasoning as u64;
    let offset = rng.below(span) as i64 - params.max_seasoning as i64;
    let first_seen = params.start_month.plus(offset.max(0));
    let available = (params.window_months as i64 - offset.max(0)) as usize;
    let floor = cents(params.genuine_floor);
    let residual = |rng: &mut SeededStream| cents(rng.uniform_in(0.0, params.tail_balance_cap));
    let scheduled = |balance: i64| balance + (balance as f64 * monthly).round() as i64 - instalment;

    let mut balance = principal;
    for _ in offset..0 {
        if scheduled(balance) <= floor {
            break;
        }
        balance = scheduled(balance);
    }
    let mut rows: Vec<Row> = Vec::with_capacity(available);
    let mut defaulted = false;
    let mut terminated = None;
    while rows.len() < available && terminated.is_none() {
        let interest = (balance as f64 * monthly).round() as i64;
        if defaulted {
            let u = rng.uniform();
            if u < params.p_writeoff {
                let recovered = cents(
                    balance as f64 / 100.0
                        * rng.uniform_in(params.recovery_range.0, params.recovery_range.1),
                );
                let left = residual(&mut rng);
                rows.push(Row {
                    balance: left,
                    receipt: recovered,
                    in_default: true,
                    status: TerminalStatus::WriteOff,
                });
                terminated = Some(TerminalStatus::WriteOff);
                continue;
            } else if u >= params.p_writeoff + params.p_cure {
                let partial = if rng.bernoulli(0.3) {
                    cents(instalment as f64 / 100.0 * rng.uniform())
                } else {
                    0
                };
                // a defaulted balance never pays down through the floor
                let partial = partial.min((balance + interest - floor - 1).max(0));
                balance = balance + interest - partial;
                rows.push(Row {
                    balance,
                    receipt: partial,
                    in_default: true,
                    status: TerminalStatus::Active,
                });
                continue;
            }
            defaulted = false;
        } else if rng.bernoulli(params.p_default) {
            defaulted = true;
            balance += interest;
            rows.push(Row {
                balance,
                receipt: 0,
                in_default: true,
                status: TerminalStatus::Active,
            });
            continue;
        }
        let after = scheduled(balance);
        if rng.bernoulli(params.p_settle) || after <= floor {
            let left = residual(&mut rng);
            rows.push(Row {
                balance: left,
                receipt: balance + interest - left,
                in_default: false,
                status: TerminalStatus::Settlement,
            });
            terminated = Some(TerminalStatus::Settlement);
        } else {
            balance = after;
            rows.push(Row {
                balance,
                receipt: instalment,
                in_default: false,
                status: TerminalStatus::Active,
            });
        }
    }

    let true_end = rows.len() as u32;
    let mut tail_len = 0usize;
    if let Some(status) = terminated {
        let room = available - rows.len();
        if rng.bernoulli(params.tzb_fraction) && room > 0 {
            let wanted = rng
                .geometric(params.tail_len_mean)
                .min(params.max_tail_len as u64) as usize;
            tail_len = wanted.min(room);
            let start = rows.last().unwrap().balance as f64;
            let growth = 1.0 + params.tail_accrual_rate / 12.0;
            let in_default = status == TerminalStatus::WriteOff;
            rows.last_mut().unwrap().status = TerminalStatus::Active;
            for k in 1..=tail_len {
                let last = k == tail_len;
                rows.push(Row {
                    balance: if last {
                        0
                    } else {
                        (start * growth.powi(k as i32)).round() as i64
                    },
                    receipt: 0,
                    in_default,
                    status: if last { status } else { TerminalStatus::Active },
                });
            }
        }
    }

    let records = rows
        .into_iter()
        .enumerate()
        .map(|(k, r)| LoanRecord {
            period_index: k as u32 + 1,
            calendar_month: first_seen.plus(k as i64),
            balance: r.balance,
            principal,
            instalment,
            receipt: r.receipt,
            interest_rate: (rate * 10_000.0).round() as i64,
            in_default: r.in_default,
            status: r.status,
        })
        .collect();
    let truth = LoanTruth {
        true_end,
        injected: tail_len > 0,
        tail_len,
    };
    (records, truth)
}

pub fn loan_id(index: usize) -> String {
    format!("L{:07}", index + 1)
}

/// Generates the portfolio and its ground truth.
pub fn generate<T: Field>(params: &SynthParams) -> Result<(Portfolio<T>, GroundTruth), SynthError> {
    params.validate()?;
    let loans: Vec<(Vec<LoanRecord<i64>>, LoanTruth)> = (0..params.n_loans)
        .into_par_iter()
        .map(|i| generate_loan(params, i))
        .collect();
    let mut truth = GroundTruth::default();
    let mut histories = Vec::with_capacity(loans.len());
    for (i, (records, t)) in loans.into_iter().enumerate() {
        let id = loan_id(i);
        let records = records
            .into_iter()
            .map(|r| LoanRecord {
                period_index: r.period_index,
                calendar_month: r.calendar_month,
                balance: T::from_cents(r.balance),
                principal: T::from_cents(r.principal),
                instalment: T::from_cents(r.instalment),
                receipt: T::from_cents(r.receipt),
                interest_rate: T::from_i64(r.interest_rate).expect("rate") / T::from_count(10_000),
                in_default: r.in_default,
                status: r.status,
            })
            .collect();
        histories.push(LoanHistory::new(id.clone(), records)?);
        truth.loans.insert(id, t);
    }
    Ok((Portfolio::from_histories(histories)?, truth))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryMetrics {
    pub injected: usize,
    pub exactly_recovered: usize,
    pub uncorrupted: usize,
    pub false_positives: usize,
    /// Share of injected loans whose detected true end matches; `None`
    /// without injected loans.
    pub exact_recovery_rate: Option<f64>,
    pub false_positive_rate: Option<f64>,
    /// Mean `|detected end - true end|` in months over all loans.
    pub mean_abs_endpoint_error: f64,
}

/// Compares detections against the generator's ground truth.
pub fn evaluate_recovery<T: Field>(
    assessments: &[TzbAssessment<T>],
    truth: &GroundTruth,
) -> Result<RecoveryMetrics, SynthError> {
    if assessments.len() != truth.loans.len() {
        return Err(SynthError::LoanSetMismatch);
    }
    let mut m = RecoveryMetrics {
        injected: 0,
        exactly_recovered: 0,
        uncorrupted: 0,
        false_positives: 0,
        exact_recovery_rate: None,
        false_positive_rate: None,
        mean_abs_endpoint_error: 0.0,
    };
    let mut total_error = 0u64;
    for a in assessments {
        let t = truth
            .loans
            .get(&a.loan_id)
            .ok_or(SynthError::LoanSetMismatch)?;
        if t.injected {
            m.injected += 1;
            if a.t_z.is_some_and(|tz| tz - 1 == t.true_end) {
                m.exactly_recovered += 1;
            }
        } else {
            m.uncorrupted += 1;
            if a.is_tzb() {
                m.false_positives += 1;
            }
        }
        total_error += (a.true_end as i64 - t.true_end as i64).unsigned_abs();
    }
    let rate = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    m.exact_recovery_rate = rate(m.exactly_recovered, m.injected);
    m.false_positive_rate = rate(m.false_positives, m.uncorrupted);
    m.mean_abs_endpoint_error = total_error as f64 / assessments.len().max(1) as f64;
    Ok(m)
}
