mod common;

use common::{history, portfolio};
use num_rational::Ratio;
use proptest::prelude::*;
use truend::optimise::DEFAULT_THRESHOLDS;
use truend::*;

type Exact = Ratio<i64>;

const STATUSES: [TerminalStatus; 3] = [
    TerminalStatus::Active,
    TerminalStatus::WriteOff,
    TerminalStatus::Settlement,
];

/// Balances in cents, mixing exact zeros, small amounts and large ones so
/// trailing runs at every grid threshold turn up often.
fn balances() -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(
        prop_oneof![Just(0i64), 0i64..=60_000, 100_000i64..=100_000_000],
        1..30,
    )
}

fn loans() -> impl Strategy<Value = Vec<(Vec<i64>, usize)>> {
    prop::collection::vec((balances(), 0usize..3), 1..16)
}

fn build<T: Field>(loans: &[(Vec<i64>, usize)]) -> Portfolio<T> {
    portfolio(
        loans
            .iter()
            .enumerate()
            .map(|(i, (cents, s))| history(&format!("A{i:03}"), cents, STATUSES[*s]))
            .collect(),
    )
}

/// Earliest `t'` with every balance from `t'` on at most `b` and at least
/// `min_len` records after it, by exhaustive search.
fn brute_force_start(cents: &[i64], b: i64, min_len: usize) -> Option<u32> {
    let n = cents.len();
    (0..n)
        .find(|&tp| cents[tp..].iter().all(|&x| x <= b) && n - 1 - tp >= min_len)
        .map(|tp| tp as u32 + 2)
}

proptest! {
    #[test]
    fn detection_matches_exhaustive_search(cents in balances(), b in 0i64..=1_000_000, min_len in 1usize..4) {
        let h = history::<Exact>("A", &cents, TerminalStatus::Settlement);
        prop_assert_eq!(find_tzb_start(&h, Exact::from_cents(b), min_len), brute_force_start(&cents, b, min_len));
    }

    #[test]
    fn detected_start_is_minimal(cents in balances(), b in 0i64..=1_000_000, min_len in 1usize..4) {
        let h = history::<f64>("A", &cents, TerminalStatus::Settlement);
        let bf = b as f64 / 100.0;
        if let Some(tz) = find_tzb_start(&h, bf, min_len) {
            let bal = h.balances();
            let t_end = tz as usize - 1;
            prop_assert!(tz >= 2 && tz as usize <= h.len());
            prop_assert!(h.len() - t_end >= min_len);
            prop_assert!(bal[t_end - 1..].iter().all(|&x| x <= bf));
            if t_end >= 2 {
                prop_assert!(bal[t_end - 2] > bf);
            }
        }
    }

    #[test]
    fn inclusion_is_monotone_in_threshold(cents in balances(), lo in 0i64..=500_000, extra in 0i64..=500_000) {
        let h = history::<f64>("A", &cents, TerminalStatus::WriteOff);
        let (b, b2) = (lo as f64 / 100.0, (lo + extra) as f64 / 100.0);
        if let Some(tz) = find_tzb_start(&h, b, 1) {
            let tz2 = find_tzb_start(&h, b2, 1);
            prop_assert!(tz2.is_some());
            prop_assert!(tz2.unwrap() <= tz);
        }
    }

    #[test]
    fn membership_is_a_true_suffix(cents in balances(), b in 0i64..=1_000_000) {
        let h = history::<f64>("A", &cents, TerminalStatus::Active);
        let z = tzb_membership(&h, b as f64 / 100.0, 1);
        prop_assert_eq!(z.len(), h.len());
        let first = z.iter().position(|&x| x).unwrap_or(z.len());
        prop_assert!(z[first..].iter().all(|&x| x));
        prop_assert!(z[..first].iter().all(|&x| !x));
    }

    #[test]
    fn assessment_invariants(cents in balances(), b in 0i64..=1_000_000, tau in 1usize..10) {
        let h = history::<Exact>("A", &cents, TerminalStatus::Settlement);
        let bq = Exact::from_cents(b);
        let params = TzbParams::new(bq, tau, 1, Ratio::new(1, 2)).unwrap();
        let a = assess(&h, &params).unwrap();
        prop_assert_eq!(a.is_tzb(), a.t_z.is_some());
        prop_assert_eq!(a.is_tzb(), a.m1.is_some());
        prop_assert!(a.m2 >= Exact::from_count(0));
        if let Some(m1) = a.m1 {
            prop_assert!(m1 <= bq);
            prop_assert_eq!(a.retained_len() + a.tzb_len(), h.len());
            if let Some(phi) = a.phi {
                prop_assert!(phi >= Exact::from_count(0) && phi <= Exact::from_count(1));
                prop_assert_eq!(phi == Exact::from_count(0), m1 == Exact::from_count(0));
            }
        } else {
            prop_assert_eq!(a.true_end, h.last_period());
        }
    }

    #[test]
    fn contamination_increases_with_m1(m1 in 0i64..1_000_000, step in 1i64..1_000, m2 in 1i64..1_000_000_000) {
        let (m1, m2, step) = (Exact::from_cents(m1), Exact::from_cents(m2), Exact::from_cents(step));
        let phi = contamination_degree(m1, m2).unwrap();
        prop_assert!(phi >= Exact::from_count(0) && phi < Exact::from_count(1));
        prop_assert!(contamination_degree(m1 + step, m2).unwrap() > phi);
    }

    #[test]
    fn loan_objective_is_affine(m1 in 0i64..1_000_000, m2 in 0i64..1_000_000_000, w in 0i64..=1000, c in 1i64..50) {
        let (m1, m2) = (Exact::from_cents(m1), Exact::from_cents(m2));
        let w = Ratio::new(w, 1000);
        let c = Exact::from_count(c as usize);
        prop_assert_eq!(loan_objective(m1 * c, m2 * c, w), loan_objective(m1, m2, w) * c);
    }

    #[test]
    fn prevalence_and_m1_bar_follow_the_grid(loans in loans()) {
        let p = build::<f64>(&loans);
        let mut last = -1.0;
        for &b in DEFAULT_THRESHOLDS.iter() {
            let e = evaluate_threshold(&p, &TzbParams::with_threshold(b)).unwrap();
            prop_assert!(e.prevalence >= last);
            last = e.prevalence;
            if let Some(m1) = e.m1_bar {
                prop_assert!(m1 <= b);
            }
            prop_assert!(e.f_value.is_none() || e.n_s >= 2);
        }
    }

    #[test]
    fn zero_weight_objective_is_never_positive(loans in loans(), b in 0usize..24) {
        let p = build::<f64>(&loans);
        let e = evaluate_threshold(&p, &TzbParams::with_threshold(DEFAULT_THRESHOLDS[b])).unwrap();
        if let Some(f) = e.f_value {
            prop_assert!(f <= 0.0);
        }
    }

    #[test]
    fn evaluation_ignores_insertion_order(loans in loans(), b in 0usize..24, seed in any::<u64>()) {
        let p = build::<f64>(&loans);
        let mut shuffled: Vec<LoanHistoryF64> = p.histories().cloned().collect();
        let mut rng = truend::rng::SeededStream::new(seed, 0);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let q = Portfolio::from_histories(shuffled).unwrap();
        let params = TzbParams::new(DEFAULT_THRESHOLDS[b], 6, 1, 0.001).unwrap();
        prop_assert_eq!(evaluate_threshold(&p, &params).unwrap(), evaluate_threshold(&q, &params).unwrap());
    }

    // With the n-1 divisor, duplicating every account scales s̄ by
    // sqrt(2(n-1)/(2n-1)) rather than leaving it unchanged.
    #[test]
    fn duplicating_the_portfolio(loans in loans(), b in 0usize..24) {
        let p = build::<f64>(&loans);
        let doubled: Vec<LoanHistoryF64> = p
            .histories()
            .flat_map(|h| [h.clone(), LoanHistory::new(format!("{}-copy", h.loan_id()), h.records().to_vec()).unwrap()])
            .collect();
        let q = Portfolio::from_histories(doubled).unwrap();
        let params = TzbParams::new(DEFAULT_THRESHOLDS[b], 6, 1, 0.01).unwrap();
        let (e, d) = (evaluate_threshold(&p, &params).unwrap(), evaluate_threshold(&q, &params).unwrap());
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs()));
        prop_assert_eq!(d.n_s, 2 * e.n_s);
        prop_assert_eq!(d.prevalence, e.prevalence);
        prop_assert!(close(d.m2_bar, e.m2_bar));
        if let (Some(a), Some(b)) = (e.phi_bar, d.phi_bar) {
            prop_assert!(close(a, b));
        }
        if let (Some(a), Some(b)) = (e.l_bar, d.l_bar) {
            prop_assert!(close(a, b));
        }
        if let (Some(s), Some(sd), Some(f), Some(fd)) = (e.s_bar, d.s_bar, e.f_value, d.f_value) {
            let n = e.n_s as f64;
            let ratio = (2.0 * (n - 1.0) / (2.0 * n - 1.0)).sqrt();
            prop_assert!(close(sd, s * ratio));
            prop_assert!(close(fd, 2.0 * f / ratio));
        }
    }

    #[test]
    fn treatment_is_idempotent(loans in loans(), b in 0usize..24, all in any::<bool>(), min_len in 1usize..3) {
        let p = build::<Exact>(&loans);
        let b = Exact::from_f64_lossy(DEFAULT_THRESHOLDS[b]);
        let scope = if all { Scope::AllAccounts } else { Scope::TerminatedOnly };
        let (once, first) = apply_policy(&p, b, min_len, scope).unwrap();
        let (twice, second) = apply_policy(&once, b, min_len, scope).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(second.records_discarded, 0);
        prop_assert_eq!(once.record_count() + first.records_discarded, p.record_count());
        // every discarded balance is at most b
        prop_assert!(first.discarded_balance <= b * Exact::from_count(first.records_discarded));
        for h in once.histories() {
            prop_assert_eq!(h.terminal_status(), p.get(h.loan_id()).unwrap().terminal_status());
        }
    }

    #[test]
    fn csv_round_trip(loans in loans()) {
        let p = build::<Exact>(&loans);
        let mut out = Vec::new();
        write_csv(&p, &mut out).unwrap();
        let (q, report) = read_csv::<Exact, _>(out.as_slice(), &IngestOptions::default()).unwrap();
        prop_assert_eq!(report.rows_dropped, 0);
        prop_assert_eq!(q, p);
    }

    #[test]
    fn subsample_takes_whole_histories(loans in loans(), seed in any::<u64>(), k in 1usize..16) {
        let p = build::<f64>(&loans);
        let n = k.min(p.len());
        let s = subsample_clustered(&p, n, seed).unwrap();
        prop_assert_eq!(s.len(), n);
        for h in s.histories() {
            prop_assert_eq!(h, p.get(h.loan_id()).unwrap());
        }
        prop_assert_eq!(&s, &subsample_clustered(&p, n, seed).unwrap());
    }

    #[test]
    fn km_survival_is_the_product_of_hazards(obs in prop::collection::vec((1usize..12, any::<bool>()), 1..40)) {
        let c: SurvivalCurveF64 = km_from_durations(&obs).unwrap();
        let mut product = 1.0;
        for r in &c.rows[1..] {
            product *= 1.0 - r.hazard;
            prop_assert!((r.survival - product).abs() < 1e-10);
            prop_assert!((r.cdf + r.survival - 1.0).abs() < 1e-15);
        }
        let e: SurvivalCurve<Exact> = km_from_durations(&obs).unwrap();
        let mut product = Exact::from_count(1);
        for r in &e.rows[1..] {
            product *= Exact::from_count(1) - r.hazard;
            prop_assert_eq!(r.survival, product);
        }
    }

    #[test]
    fn undiscounted_loss_is_exact(ead in 1i64..100_000_000, flows in prop::collection::vec((0usize..24, 0i64..10_000_000), 0..8)) {
        let spell = DefaultSpell {
            loan_id: "A".into(),
            spell_start: 1,
            duration: 24,
            outcome: SpellOutcome::WriteOff,
            ead: Exact::from_cents(ead),
            cashflows: flows.iter().map(|&(o, c)| (o, Exact::from_cents(c))).collect(),
        };
        let total: i64 = flows.iter().map(|f| f.1).sum();
        let expected = Exact::from_count(1) - Ratio::new(total, ead);
        prop_assert_eq!(workout_loss_rate(&spell, Exact::from_count(0), false).unwrap(), expected);
    }

    #[test]
    fn dropping_zero_tail_never_raises_loss(
        ead in 1i64..100_000_000,
        flows in prop::collection::vec(0i64..10_000_000, 1..12),
        tail in 0usize..12,
        rate in 0usize..3,
    ) {
        let rate = [0.0, 0.05, 0.10][rate];
        let cashflows: Vec<(usize, f64)> = flows.iter().enumerate().map(|(k, &c)| (k, c as f64 / 100.0)).collect();
        let mut with_tail = cashflows.clone();
        with_tail.extend((0..tail).map(|k| (flows.len() + k, 0.0)));
        let spell = |cf: Vec<(usize, f64)>| DefaultSpell {
            loan_id: "A".into(),
            spell_start: 1,
            duration: cf.len(),
            outcome: SpellOutcome::WriteOff,
            ead: ead as f64 / 100.0,
            cashflows: cf,
        };
        let before = workout_loss_rate(&spell(with_tail), rate, false).unwrap();
        let after = workout_loss_rate(&spell(cashflows), rate, false).unwrap();
        prop_assert!(after <= before);
    }
}
