#![allow(dead_code)]

use truend::{Field, LoanHistory, LoanRecord, Portfolio, TerminalStatus, YearMonth};

pub const WORKED_EXAMPLE_CSV: &str = include_str!("../fixtures/worked_example.csv");

/// A history with periods `1..` starting in January 2010, built from balances
/// given in cents so any scalar type can hold them exactly.
pub fn history<T: Field>(id: &str, cents: &[i64], status: TerminalStatus) -> LoanHistory<T> {
    let start = YearMonth::new(2010, 1).unwrap();
    let last = cents.len().saturating_sub(1);
    let records = cents
        .iter()
        .enumerate()
        .map(|(k, &c)| LoanRecord {
            period_index: k as u32 + 1,
            calendar_month: start.plus(k as i64),
            balance: T::from_cents(c),
            principal: T::from_cents(10_000_000),
            instalment: T::zero(),
            receipt: T::zero(),
            interest_rate: T::zero(),
            in_default: false,
            status: if k == last {
                status
            } else {
                TerminalStatus::Active
            },
        })
        .collect();
    LoanHistory::new(id, records).unwrap()
}

pub fn portfolio<T: Field>(histories: Vec<LoanHistory<T>>) -> Portfolio<T> {
    Portfolio::from_histories(histories).unwrap()
}
