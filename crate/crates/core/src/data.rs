//! Loan panel data: records, per-account histories, portfolios, CSV
//! ingestion/serialisation and clustered subsampling.
//!
//! The CSV schema (header names case-insensitive, any column order):
//!
//! | column         | content                                   |
//! |----------------|-------------------------------------------|
//! | `LoanID`       | opaque account identifier                 |
//! | `Date`         | `YYYY-MM` (a `YYYY-MM-DD` month-end is accepted) |
//! | `Balance`      | month-end balance, at most 2 decimals     |
//! | `Principal`    | original principal                        |
//! | `Instalment`   | expected instalment                       |
//! | `Receipt`      | net cash flow received (may be negative)  |
//! | `InterestRate` | annual rate as a fraction                 |
//! | `InDefault`    | `0` or `1`                                |
//! | `Status`       | `ACTIVE`, `WOFF` or `SETTLE`              |
//! | `Period`       | optional; period index of the row         |
//!
//! `Period` lets an extract that starts part-way through an account keep
//! the account's own month numbering. Without it, each account is numbered
//! `1..T` from its first row.

use crate::month::YearMonth;
use crate::rng::SeededStream;
use crate::scalar::Field;
use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0}")]
    MissingColumn(&'static str),
    #[error("loan {loan_id}: row {row}: expected {expected}, found {found}")]
    NonContiguousHistory {
        loan_id: String,
        row: u64,
        expected: String,
        found: String,
    },
    #[error("loan {loan_id}: row {row}: duplicate record for {month}")]
    DuplicateRecord {
        loan_id: String,
        row: u64,
        month: YearMonth,
    },
    #[error("loan {loan_id}: row {row}: cannot parse {column} value {value:?}")]
    UnparseableRow {
        loan_id: String,
        row: u64,
        column: &'static str,
        value: String,
    },
    #[error("loan {loan_id}: row {row}: negative balance {value}")]
    NegativeBalance {
        loan_id: String,
        row: u64,
        value: String,
    },
    #[error("loan {0}: empty history")]
    EmptyHistory(String),
    #[error("duplicate loan {0}")]
    DuplicateLoan(String),
    #[error("sample of {requested} accounts requested from a portfolio of {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("sample size must be at least 1")]
    EmptySample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TerminalStatus {
    Active,
    WriteOff,
    Settlement,
}

impl TerminalStatus {
    pub fn code(self) -> &'static str {
        match self {
            Self::Active => "ACTIVE",
            Self::WriteOff => "WOFF",
            Self::Settlement => "SETTLE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ACTIVE" => Some(Self::Active),
            "WOFF" => Some(Self::WriteOff),
            "SETTLE" => Some(Self::Settlement),
            _ => None,
        }
    }

    pub fn is_terminated(self) -> bool {
        !matches!(self, Self::Active)
    }
}

impl fmt::Display for TerminalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// One month of one account.
#[derive(Debug, Clone, PartialEq)]
pub struct LoanRecord<T> {
    pub period_index: u32,
    pub calendar_month: YearMonth,
    pub balance: T,
    pub principal: T,
    pub instalment: T,
    pub receipt: T,
    pub interest_rate: T,
    pub in_default: bool,
    pub status: TerminalStatus,
}

/// Contiguous monthly records of a single account, ordered by period.
#[derive(Debug, Clone, PartialEq)]
pub struct LoanHistory<T> {
    loan_id: String,
    records: Vec<LoanRecord<T>>,
}

impl<T: Field> LoanHistory<T> {
    /// Validates that periods and calendar months both advance by exactly
    /// one from record to record.
    pub fn new(loan_id: impl Into<String>, records: Vec<LoanRecord<T>>) -> Result<Self, DataError> {
        let loan_id = loan_id.into();
        let first = records
            .first()
            .ok_or_else(|| DataError::EmptyHistory(loan_id.clone()))?;
        if first.period_index == 0 {
            return Err(DataError::NonContiguousHistory {
                loan_id,
                row: 1,
                expected: "period >= 1".into(),
                found: "period 0".into(),
            });
        }
        for (k, pair) in records.windows(2).enumerate() {
            let (prev, cur) = (&pair[0], &pair[1]);
            if cur.period_index != prev.period_index + 1 {
                return Err(DataError::NonContiguousHistory {
                    loan_id,
                    row: k as u64 + 2,
                    expected: format!("period {}", prev.period_index + 1),
                    found: format!("period {}", cur.period_index),
                });
            }
            if cur.calendar_month != prev.calendar_month.next() {
                return Err(DataError::NonContiguousHistory {
                    loan_id,
                    row: k as u64 + 2,
                    expected: prev.calendar_month.next().to_string(),
                    found: cur.calendar_month.to_string(),
                });
            }
        }
        Ok(Self { loan_id, records })
    }

    pub fn loan_id(&self) -> &str {
        &self.loan_id
    }

    pub fn records(&self) -> &[LoanRecord<T>] {
        &self.records
    }

    /// Observed lifetime in months (the record count).
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first_period(&self) -> u32 {
        self.records[0].period_index
    }

    pub fn last_period(&self) -> u32 {
        self.records[self.records.len() - 1].period_index
    }

    pub fn balances(&self) -> Vec<T> {
        self.records.iter().map(|r| r.balance).collect()
    }

    /// Position (0-based) of a period index within this history.
    pub fn position_of(&self, period: u32) -> Option<usize> {
        let first = self.first_period();
        (period >= first && period <= self.last_period()).then(|| (period - first) as usize)
    }

    /// Write-off if any record is flagged written off, otherwise settlement
    /// if any record is flagged settled, otherwise active.
    pub fn terminal_status(&self) -> TerminalStatus {
        let mut status = TerminalStatus::Active;
        for r in &self.records {
            match r.status {
                TerminalStatus::WriteOff => return TerminalStatus::WriteOff,
                TerminalStatus::Settlement => status = TerminalStatus::Settlement,
                TerminalStatus::Active => {}
            }
        }
        status
    }

    pub fn is_terminated(&self) -> bool {
        self.terminal_status().is_terminated()
    }

    /// Keeps the first `keep` records. The account's terminal status is
    /// carried onto the new last record so the termination event is re-timed
    /// rather than lost.
    pub fn truncated(&self, keep: usize) -> Self {
        assert!(keep >= 1 && keep <= self.len(), "invalid truncation length");
        let status = self.terminal_status();
        let mut records = self.records[..keep].to_vec();
        if keep < self.len() {
            for r in records.iter_mut() {
                r.status = TerminalStatus::Active;
            }
            records[keep - 1].status = status;
        }
        Self {
            loan_id: self.loan_id.clone(),
            records,
        }
    }
}

/// Accounts keyed (and iterated) in ascending loan id order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Portfolio<T> {
    loans: BTreeMap<String, LoanHistory<T>>,
}

impl<T: Field> Portfolio<T> {
    pub fn from_histories(
        histories: impl IntoIterator<Item = LoanHistory<T>>,
    ) -> Result<Self, DataError> {
        let mut loans = BTreeMap::new();
        for h in histories {
            if loans.contains_key(h.loan_id()) {
                return Err(DataError::DuplicateLoan(h.loan_id().to_string()));
            }
            loans.insert(h.loan_id().to_string(), h);
        }
        Ok(Self { loans })
    }

    pub fn len(&self) -> usize {
        self.loans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loans.is_empty()
    }

    pub fn get(&self, loan_id: &str) -> Option<&LoanHistory<T>> {
        self.loans.get(loan_id)
    }

    pub fn histories(&self) -> impl ExactSizeIterator<Item = &LoanHistory<T>> + Clone {
        self.loans.values()
    }

    /// Histories as a slice-friendly vector, in loan id order.
    pub fn history_refs(&self) -> Vec<&LoanHistory<T>> {
        self.loans.values().collect()
    }

    pub fn loan_ids(&self) -> impl Iterator<Item = &str> {
        self.loans.keys().map(String::as_str)
    }

    pub fn record_count(&self) -> usize {
        self.loans.values().map(LoanHistory::len).sum()
    }

    pub fn same_loans(&self, other: &Self) -> bool {
        self.loans.len() == other.loans.len() && self.loans.keys().eq(other.loans.keys())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativeBalancePolicy {
    #[default]
    Floor,
    Error,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub negative_balance: NegativeBalancePolicy,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows_read: u64,
    pub rows_dropped: u64,
    pub balances_floored: u64,
    pub loans: usize,
}

impl IngestReport {
    pub fn to_kv(&self) -> String {
        format!(
            "rows_read={}\nrows_dropped={}\nbalances_floored={}\nloans={}\n",
            self.rows_read, self.rows_dropped, self.balances_floored, self.loans
        )
    }
}

/// Parses a decimal currency amount with at most two fractional digits
/// into integer cents, without going through binary floating point.
pub fn parse_cents(s: &str) -> Option<i64> {
    let s = s.trim();
    let (negative, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|c| c.is_ascii_digit())
        || !frac_part.bytes().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let frac_trimmed = frac_part.trim_end_matches('0');
    if frac_trimmed.len() > 2 {
        return None;
    }
    let whole: i64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().ok()?
    };
    let mut frac: i64 = 0;
    for (k, c) in frac_trimmed.bytes().enumerate() {
        frac += (c - b'0') as i64 * if k == 0 { 10 } else { 1 };
    }
    let cents = whole.checked_mul(100)?.checked_add(frac)?;
    Some(if negative { -cents } else { cents })
}

/// Formats a currency amount with exactly two decimals.
pub fn format_cents<T: Field>(value: T) -> String {
    let cents = (value.to_f64_lossy() * 100.0).round() as i64;
    let sign = if cents < 0 { "-" } else { "" };
    let c = cents.unsigned_abs();
    format!("{sign}{}.{:02}", c / 100, c % 100)
}

struct Columns {
    loan_id: usize,
    date: usize,
    balance: usize,
    principal: usize,
    instalment: usize,
    receipt: usize,
    interest_rate: usize,
    in_default: usize,
    status: usize,
    period: Option<usize>,
}

impl Columns {
    fn locate(headers: &csv::StringRecord) -> Result<Self, DataError> {
        let find = |name: &'static str| {
            headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(name))
                .ok_or(DataError::MissingColumn(name))
        };
        Ok(Self {
            loan_id: find("LoanID")?,
            date: find("Date")?,
            balance: find("Balance")?,
            principal: find("Principal")?,
            instalment: find("Instalment")?,
            receipt: find("Receipt")?,
            interest_rate: find("InterestRate")?,
            in_default: find("InDefault")?,
            status: find("Status")?,
            period: find("Period").ok(),
        })
    }
}

struct RawRow<T> {
    row: u64,
    period: Option<u32>,
    record: LoanRecord<T>,
}

/// Reads a portfolio from a CSV file.
pub fn ingest_csv<T: Field>(
    path: impl AsRef<Path>,
    options: &IngestOptions,
) -> Result<(Portfolio<T>, IngestReport), DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(BufReader::new(file), options)
}

pub fn read_csv<T: Field, R: Read>(
    reader: R,
    options: &IngestOptions,
) -> Result<(Portfolio<T>, IngestReport), DataError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let cols = Columns::locate(rdr.headers()?)?;
    let mut report = IngestReport::default();
    let mut grouped: BTreeMap<String, Vec<RawRow<T>>> = BTreeMap::new();

    for result in rdr.records() {
        let rec = result?;
        let row = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.iter().all(|f| f.trim().is_empty()) {
            report.rows_dropped += 1;
            continue;
        }
        report.rows_read += 1;
        let loan_id = rec.get(cols.loan_id).unwrap_or("").trim().to_string();
        let field = |idx: usize| rec.get(idx).unwrap_or("").trim();
        let bad = |column: &'static str, value: &str| DataError::UnparseableRow {
            loan_id: loan_id.clone(),
            row,
            column,
            value: value.to_string(),
        };
        if loan_id.is_empty() {
            return Err(bad("LoanID", ""));
        }
        let money = |idx: usize, column: &'static str| {
            parse_cents(field(idx)).ok_or_else(|| bad(column, field(idx)))
        };

        let month: YearMonth = field(cols.date)
            .parse()
            .map_err(|_| bad("Date", field(cols.date)))?;
        let mut balance_cents = money(cols.balance, "Balance")?;
        if balance_cents < 0 {
            match options.negative_balance {
                NegativeBalancePolicy::Floor => {
                    balance_cents = 0;
                    report.balances_floored += 1;
                }
                NegativeBalancePolicy::Error => {
                    return Err(DataError::NegativeBalance {
                        loan_id,
                        row,
                        value: field(cols.balance).to_string(),
                    })
                }
            }
        }
        let principal = money(cols.principal, "Principal")?;
        let instalment = money(cols.instalment, "Instalment")?;
        let receipt = money(cols.receipt, "Receipt")?;
        let rate: f64 = field(cols.interest_rate)
            .parse()
            .ok()
            .filter(|r: &f64| r.is_finite() && *r >= 0.0)
            .ok_or_else(|| bad("InterestRate", field(cols.interest_rate)))?;
        let in_default = match field(cols.in_default) {
            "0" => false,
            "1" => true,
            other => return Err(bad("InDefault", other)),
        };
        let status = TerminalStatus::parse(field(cols.status))
            .ok_or_else(|| bad("Status", field(cols.status)))?;
        let period = match cols.period {
            Some(idx) => Some(
                field(idx)
                    .parse::<u32>()
                    .ok()
                    .filter(|p| *p >= 1)
                    .ok_or_else(|| bad("Period", field(idx)))?,
            ),
            None => None,
        };

        grouped.entry(loan_id).or_default().push(RawRow {
            row,
            period,
            record: LoanRecord {
                period_index: 0,
                calendar_month: month,
                balance: T::from_cents(balance_cents),
                principal: T::from_cents(principal),
                instalment: T::from_cents(instalment),
                receipt: T::from_cents(receipt),
                interest_rate: T::from_f64_lossy(rate),
                in_default,
                status,
            },
        });
    }

    let mut histories = Vec::with_capacity(grouped.len());
    for (loan_id, mut rows) in grouped {
        rows.sort_by_key(|r| (r.record.calendar_month, r.row));
        for pair in rows.windows(2) {
            if pair[0].record.calendar_month == pair[1].record.calendar_month {
                return Err(DataError::DuplicateRecord {
                    loan_id,
                    row: pair[1].row,
                    month: pair[1].record.calendar_month,
                });
            }
            let expected = pair[0].record.calendar_month.next();
            if pair[1].record.calendar_month != expected {
                return Err(DataError::NonContiguousHistory {
                    loan_id,
                    row: pair[1].row,
                    expected: expected.to_string(),
                    found: pair[1].record.calendar_month.to_string(),
                });
            }
        }
        let first_period = rows[0].period.unwrap_or(1);
        let mut records = Vec::with_capacity(rows.len());
        for (k, raw) in rows.into_iter().enumerate() {
            let expected = first_period + k as u32;
            if let Some(p) = raw.period {
                if p != expected {
                    return Err(DataError::NonContiguousHistory {
                        loan_id,
                        row: raw.row,
                        expected: format!("period {expected}"),
                        found: format!("period {p}"),
                    });
                }
            }
            let mut record = raw.record;
            record.period_index = expected;
            records.push(record);
        }
        histories.push(LoanHistory::new(loan_id, records)?);
    }
    let portfolio = Portfolio::from_histories(histories)?;
    report.loans = portfolio.len();
    Ok((portfolio, report))
}

/// Writes a portfolio in the ingestion schema. The `Period` column is
/// emitted only when some account does not start at period 1.
pub fn write_csv<T: Field, W: Write>(portfolio: &Portfolio<T>, writer: W) -> Result<(), DataError> {
    let with_period = portfolio.histories().any(|h| h.first_period() != 1);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header = vec![
        "LoanID",
        "Date",
        "Balance",
        "Principal",
        "Instalment",
        "Receipt",
        "InterestRate",
        "InDefault",
        "Status",
    ];
    if with_period {
        header.push("Period");
    }
    w.write_record(&header)?;
    for h in portfolio.histories() {
        for r in h.records() {
            let mut row = vec![
                h.loan_id().to_string(),
                r.calendar_month.to_string(),
                format_cents(r.balance),
                format_cents(r.principal),
                format_cents(r.instalment),
                format_cents(r.receipt),
                format!("{}", r.interest_rate.to_f64_lossy()),
                if r.in_default { "1" } else { "0" }.to_string(),
                r.status.code().to_string(),
            ];
            if with_period {
                row.push(r.period_index.to_string());
            }
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|source| DataError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn save_csv<T: Field>(
    portfolio: &Portfolio<T>,
    path: impl AsRef<Path>,
) -> Result<(), DataError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_csv(portfolio, BufWriter::new(file))
}

/// Draws `n_accounts` whole histories uniformly without replacement
/// (partial Fisher-Yates over the loan ids in ascending order, driven by
/// the seeded stream `(seed, 0)`).
pub fn subsample_clustered<T: Field>(
    portfolio: &Portfolio<T>,
    n_accounts: usize,
    seed: u64,
) -> Result<Portfolio<T>, DataError> {
    if n_accounts == 0 {
        return Err(DataError::EmptySample);
    }
    if n_accounts > portfolio.len() {
        return Err(DataError::SampleTooLarge {
            requested: n_accounts,
            available: portfolio.len(),
        });
    }
    let mut ids: Vec<&str> = portfolio.loan_ids().collect();
    let mut rng = SeededStream::new(seed, 0);
    for i in 0..n_accounts {
        let j = i + rng.below((ids.len() - i) as u64) as usize;
        ids.swap(i, j);
    }
    Portfolio::from_histories(
        ids[..n_accounts]
            .iter()
            .map(|id| portfolio.loans[*id].clone()),
    )
}
