//! End-to-end acceptance suite. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line, then exits non-zero if any
//! criterion failed.

use num_rational::Ratio;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;
use truend::rng::SeededStream;
use truend::*;

const WORKED_EXAMPLE_CSV: &str = include_str!("../../core/tests/fixtures/worked_example.csv");
/// The Z column of the worked example, periods 56 to 69.
const WORKED_EXAMPLE_Z: [u8; 14] = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1];

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(seconds: f64, started: Instant) -> Result<f64, String> {
    let elapsed = started.elapsed().as_secs_f64();
    if elapsed < seconds {
        Ok(elapsed)
    } else {
        Err(format!("took {elapsed:.2}s, limit {seconds}s"))
    }
}

struct Shared {
    params: SynthParams,
    portfolio: PortfolioF64,
    truth: GroundTruth,
    generated_in: f64,
    b_star: Option<f64>,
    w_full: Option<f64>,
}

fn worked_example_golden() -> Outcome {
    let started = Instant::now();
    let (p, _) = read_csv::<f64, _>(WORKED_EXAMPLE_CSV.as_bytes(), &IngestOptions::default())
        .map_err(|e| e.to_string())?;
    let h = p.get("T1").ok_or("loan T1 missing")?;
    let a = assess(h, &TzbParams::new(500.0, 6, 1, 0.0).unwrap()).map_err(|e| e.to_string())?;
    let m1 = a.m1.ok_or("M1 undefined")?;
    let z: Vec<bool> = WORKED_EXAMPLE_Z.iter().map(|&z| z == 1).collect();
    let (treated, _) =
        apply_policy(&p, 500.0, 1, Scope::TerminatedOnly).map_err(|e| e.to_string())?;
    let end = treated.get("T1").ok_or("treated T1 missing")?.last_period();
    let secs = within(1.0, started)?;
    let detail = format!(
        "t_z={:?} M1={m1:.5} M2={:.5} end={end} ({secs:.3}s)",
        a.t_z, a.m2
    );
    check(
        a.t_z == Some(62)
            && (m1 - 161.36).abs() <= 0.005
            && (a.m2 - 6053.66).abs() <= 0.005
            && a.membership() == z
            && tzb_membership(h, 500.0, 1) == z
            && end == 61,
        detail,
    )
}

fn endpoint_recovery(s: &Shared) -> Outcome {
    let started = Instant::now();
    let injected_share = s.truth.injected_count() as f64 / s.portfolio.len() as f64;
    let mut notes = Vec::new();
    let mut ok = s.params.n_loans == 10_000
        && s.params.tzb_fraction == 0.25
        && s.params.tail_balance_cap == 50.0
        && s.params.genuine_floor == 2_000.0;
    for b in [100.0, 300.0, 500.0, 1000.0] {
        let tzb = TzbParams::with_threshold(b);
        let assessments: Vec<TzbAssessmentF64> = s
            .portfolio
            .histories()
            .map(|h| assess(h, &tzb))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let m = evaluate_recovery(&assessments, &s.truth).map_err(|e| e.to_string())?;
        let e = evaluate_threshold(&s.portfolio, &tzb).map_err(|e| e.to_string())?;
        ok &= m.exact_recovery_rate == Some(1.0)
            && m.false_positives == 0
            && e.prevalence == injected_share;
        notes.push(format!(
            "b={b}: recovered {}/{} fp={} prevalence={}",
            m.exactly_recovered, m.injected, m.false_positives, e.prevalence
        ));
    }
    let secs =
        within(10.0, started).map_err(|e| format!("{e} (+{:.2}s generation)", s.generated_in))?;
    let total = secs + s.generated_in;
    if total >= 10.0 {
        return Err(format!("generation plus assessment took {total:.2}s"));
    }
    check(
        ok,
        format!(
            "{}; injected share {injected_share} ({total:.2}s)",
            notes.join("; ")
        ),
    )
}

fn b_star_localisation(s: &mut Shared) -> Outcome {
    let started = Instant::now();
    let o = optimise(
        &s.portfolio,
        &SearchSpace::default_grid(),
        &OptimiseOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let secs = within(60.0, started)?;
    s.b_star = Some(o.b_star);
    s.w_full = o.midpoint();
    check(
        o.b_star > 50.0 && o.b_star < 2000.0 && o.midpoint().is_some(),
        format!(
            "b*={} w={} region={:?} ({secs:.2}s)",
            o.b_star, o.w_used, o.region.thresholds
        ),
    )
}

fn monotone_prevalence(s: &Shared) -> Outcome {
    let grid = SearchSpace::<f64>::default_grid();
    let mut draw = SeededStream::new(4, 0);
    let mut portfolios = vec![(s.portfolio.clone(), 1)];
    for seed in 1..=20u64 {
        let params = SynthParams {
            n_loans: 200,
            seed,
            tzb_fraction: draw.uniform(),
            tail_balance_cap: draw.uniform_in(0.0, 1900.0),
            tail_accrual_rate: draw.uniform_in(0.0, 0.5),
            ..SynthParams::default()
        };
        let (p, _) = generate::<f64>(&params).map_err(|e| e.to_string())?;
        portfolios.push((p, 1 + draw.below(4) as usize));
    }
    for (k, (p, min_len)) in portfolios.iter().enumerate() {
        let mut last = (0usize, 0.0f64);
        for &b in grid.thresholds() {
            let params = TzbParams::new(b, 6, *min_len, 0.0).unwrap();
            let e = evaluate_threshold(p, &params).map_err(|e| e.to_string())?;
            if e.prevalence < last.1 || e.n_s < last.0 {
                return Err(format!(
                    "portfolio {k}: prevalence drops to {} at b={b}",
                    e.prevalence
                ));
            }
            last = (e.n_s, e.prevalence);
        }
    }
    Ok(format!(
        "{} portfolios x 24 thresholds non-decreasing",
        portfolios.len()
    ))
}

fn km_oracle() -> Outcome {
    // censoring-free: S(t) = 1 - #{d <= t}/n, exactly
    let mut sets = 0usize;
    for n in 1..=6u32 {
        for code in 0..4usize.pow(n) {
            let durations: Vec<usize> = (0..n).map(|i| code / 4usize.pow(i) % 4 + 1).collect();
            let obs: Vec<(usize, bool)> = durations.iter().map(|&d| (d, true)).collect();
            let curve = km_from_durations::<Ratio<i64>>(&obs).map_err(|e| e.to_string())?;
            for t in 0..=5 {
                let cdf = Ratio::new(
                    durations.iter().filter(|&&d| d <= t).count() as i64,
                    n as i64,
                );
                if curve.survival_at(t) != Ratio::from_integer(1) - cdf {
                    return Err(format!("durations {durations:?} at t={t}"));
                }
            }
            sets += 1;
        }
    }
    // censored: S(t) = prod (1 - d_u/n_u), with d_u and n_u counted from the raw data
    let mut draw = SeededStream::new(5, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = 1 + draw.below(40) as usize;
        let obs: Vec<(usize, bool)> = (0..n)
            .map(|_| (1 + draw.below(15) as usize, draw.bernoulli(0.6)))
            .collect();
        let curve = discrete_hazard(km_from_durations::<f64>(&obs).map_err(|e| e.to_string())?);
        let mut product = 1.0;
        for t in 0..=16 {
            if t > 0 {
                let at_risk = obs.iter().filter(|o| o.0 >= t).count();
                let events = obs.iter().filter(|o| o.0 == t && o.1).count();
                if at_risk > 0 {
                    let h = events as f64 / at_risk as f64;
                    product *= 1.0 - h;
                    let row = curve.rows.iter().find(|r| r.t == t);
                    if let Some(r) = row {
                        worst = worst.max((r.hazard - h).abs());
                    }
                }
            }
            worst = worst.max((curve.survival_at(t) - product).abs());
        }
    }
    check(
        worst <= 1e-10,
        format!("{sets} censoring-free sets exact; 1000 censored sets max deviation {worst:e}"),
    )
}

fn spell(ead: f64, cashflows: Vec<(usize, f64)>) -> DefaultSpellF64 {
    DefaultSpell {
        loan_id: "X".into(),
        spell_start: 1,
        duration: 13,
        outcome: SpellOutcome::WriteOff,
        ead,
        cashflows,
    }
}

fn workout_loss() -> Outcome {
    // present value in exact rationals: 50 * (120/121)^12 against 100
    let v: Ratio<i128> = Ratio::new(120, 121);
    let pv = (0..12).fold(Ratio::from_integer(50i128), |acc, _| acc * v);
    let oracle_ratio = Ratio::from_integer(1) - pv / Ratio::from_integer(100);
    let oracle = *oracle_ratio.numer() as f64 / *oracle_ratio.denom() as f64;
    let cases = [
        (spell(100.0, vec![]), 0.0, 1.0),
        (spell(100.0, vec![(0, 100.0)]), 0.0, 0.0),
        (spell(100.0, vec![(12, 50.0)]), 0.10, oracle),
    ];
    let mut got = Vec::new();
    let mut ok = true;
    for (s, rate, expected) in cases {
        let l = workout_loss_rate(&s, rate, false).map_err(|e| e.to_string())?;
        ok &= (l - expected).abs() <= 1e-6;
        got.push(l);
    }
    check(ok, format!("losses {got:?}; discounted oracle {oracle}"))
}

fn treated(s: &Shared) -> Result<(PortfolioF64, f64), String> {
    let b = s.b_star.ok_or("b* unavailable")?;
    let (t, _) =
        apply_policy(&s.portfolio, b, 1, Scope::TerminatedOnly).map_err(|e| e.to_string())?;
    Ok((t, b))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn loss_direction(s: &Shared) -> Outcome {
    let (after, b) = treated(s)?;
    // precondition: nothing discarded carried a cash flow
    for h in s.portfolio.histories() {
        let keep = after
            .get(h.loan_id())
            .ok_or("loan lost in treatment")?
            .len();
        if h.records()[keep..].iter().any(|r| r.receipt != 0.0) {
            return Err(format!("loan {} lost a non-zero receipt", h.loan_id()));
        }
    }
    let before_spells = extract_default_spells(&s.portfolio);
    let after_spells = extract_default_spells(&after);
    let mut notes = Vec::new();
    let mut ok = true;
    for rate in [0.0, 0.05, 0.10] {
        let lb = mean(&analytics::write_off_losses(&before_spells, rate, false));
        let la = mean(&analytics::write_off_losses(&after_spells, rate, false));
        ok &= la <= lb;
        notes.push(format!("r={rate}: {la:.6} <= {lb:.6}"));
    }
    check(ok, format!("b={b}; {}", notes.join("; ")))
}

fn event_timing(s: &Shared) -> Outcome {
    let (after, b) = treated(s)?;
    let horizon = s.params.max_tail_len as usize;
    let before = km_estimator(&extract_default_spells(&s.portfolio)).map_err(|e| e.to_string())?;
    let after = km_estimator(&extract_default_spells(&after)).map_err(|e| e.to_string())?;
    let fb = before.on_grid(horizon).column(|r| r.cdf);
    let fa = after.on_grid(horizon).column(|r| r.cdf);
    let violations: Vec<usize> = (0..=horizon).filter(|&t| fa[t] < fb[t]).collect();
    let gap = (0..=horizon).map(|t| fa[t] - fb[t]).fold(0.0, f64::max);
    check(
        violations.is_empty(),
        format!(
            "b={b}, t<={horizon}: largest F_after-F_before {gap:.6}, violations at {violations:?}"
        ),
    )
}

fn run_pipeline(dir: &Path, threads: usize) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    std::fs::write(
        dir.join("run.cfg"),
        "# acceptance pipeline\nseed = 20240501\nn_loans = 10000\nsubsample = 1500\n",
    )
    .map_err(|e| e.to_string())?;
    let exe = env!("CARGO_BIN_EXE_truend");
    let threads = threads.to_string();
    let step = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(exe)
            .args(args)
            .args(["--config", "run.cfg", "--threads", &threads])
            .current_dir(dir)
            .output()
            .map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(format!(
                "{args:?}: {}",
                String::from_utf8_lossy(&out.stderr)
            ))
        }
    };
    step(&["synth", "--out", "synth"])?;
    step(&[
        "optimise",
        "--input",
        "synth/portfolio.csv",
        "--out",
        "optimise",
    ])?;
    let outcome =
        std::fs::read_to_string(dir.join("optimise/outcome.txt")).map_err(|e| e.to_string())?;
    let b = outcome
        .lines()
        .find_map(|l| l.strip_prefix("b_star="))
        .ok_or("outcome.txt has no b_star")?
        .to_string();
    step(&[
        "apply",
        "--input",
        "synth/portfolio.csv",
        "--b",
        &b,
        "--out",
        "apply",
    ])?;
    step(&[
        "impact",
        "--input",
        "synth/portfolio.csv",
        "--after",
        "apply/treated.csv",
        "--out",
        "impact",
    ])
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for sub in ["synth", "optimise", "apply", "impact"] {
        let mut names: Vec<PathBuf> = std::fs::read_dir(root.join(sub))
            .map(|rd| {
                rd.filter_map(|e| e.ok())
                    .map(|e| PathBuf::from(sub).join(e.file_name()))
                    .collect()
            })
            .unwrap_or_default();
        names.sort();
        out.extend(names);
    }
    out
}

fn determinism() -> Outcome {
    let started = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs = [("a", 1), ("b", 8), ("c", 1)];
    for (name, threads) in runs {
        run_pipeline(&tmp.path().join(name), threads)?;
    }
    let reference = files_under(&tmp.path().join("a"));
    if reference.len() < 20 {
        return Err(format!("only {} output files", reference.len()));
    }
    for (name, _) in &runs[1..] {
        let files = files_under(&tmp.path().join(name));
        if files != reference {
            return Err(format!("run {name} wrote a different file set"));
        }
        for f in &files {
            let x = std::fs::read(tmp.path().join("a").join(f)).map_err(|e| e.to_string())?;
            let y = std::fs::read(tmp.path().join(name).join(f)).map_err(|e| e.to_string())?;
            if x != y {
                return Err(format!("{} differs between runs a and {name}", f.display()));
            }
        }
    }
    Ok(format!(
        "{} files identical across 3 runs (threads 1, 8, 1) ({:.1}s)",
        reference.len(),
        started.elapsed().as_secs_f64()
    ))
}

fn subsample_robustness(s: &Shared) -> Outcome {
    let (b_full, w_full) = (
        s.b_star.ok_or("b* unavailable")?,
        s.w_full.ok_or("w unavailable")?,
    );
    let sample =
        subsample_clustered(&s.portfolio, 1500, s.params.seed).map_err(|e| e.to_string())?;
    let o = optimise(
        &sample,
        &SearchSpace::default_grid(),
        &OptimiseOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let w = o.midpoint().ok_or("subsample midpoint undefined")?;
    let rel = (w - w_full).abs() / w_full;
    check(
        o.b_star == b_full && rel <= 0.20,
        format!(
            "b*: {} vs {b_full}; w: {w} vs {w_full} (relative {rel:.3})",
            o.b_star
        ),
    )
}

fn main() {
    let params = SynthParams::default();
    let started = Instant::now();
    let (portfolio, truth) = generate::<f64>(&params).expect("default generator parameters");
    let mut shared = Shared {
        params,
        portfolio,
        truth,
        generated_in: started.elapsed().as_secs_f64(),
        b_star: None,
        w_full: None,
    };

    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "worked example golden", worked_example_golden()),
        (2, "oracle endpoint recovery", endpoint_recovery(&shared)),
        (3, "b* localisation", b_star_localisation(&mut shared)),
        (4, "monotone prevalence", monotone_prevalence(&shared)),
        (5, "Kaplan-Meier oracle", km_oracle()),
        (6, "workout loss", workout_loss()),
        (7, "loss direction", loss_direction(&shared)),
        (8, "event timing", event_timing(&shared)),
        (9, "determinism", determinism()),
        (10, "subsample robustness", subsample_robustness(&shared)),
    ];

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
