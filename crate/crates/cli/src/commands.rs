use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::RunOutputs;
use std::fmt::Write as _;
use std::path::Path;
use truend::optimise::write_curve_csv;
use truend::{
    age_impact, apply_policy, curve_mae, discrete_hazard, distribution_summary,
    extract_default_spells, km_estimator, optimise, read_csv, subsample_clustered, write_csv,
    DefaultSpellF64, IngestOptions, OptimisationOutcomeF64, OptimiseOptions, PortfolioF64,
    SearchSpace, SurvivalCurveF64, TreatmentError,
};

fn required<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
    value
        .as_ref()
        .ok_or_else(|| CliError::usage(format!("--{flag} is required")))
}

fn ingest(
    outputs: &mut RunOutputs,
    role: &str,
    path: &Path,
) -> Result<(PortfolioF64, String), CliError> {
    let bytes = outputs.read_input(role, path)?;
    let (portfolio, report) = read_csv(&bytes[..], &IngestOptions::default())?;
    Ok((portfolio, report.to_kv()))
}

fn csv_bytes<E>(write: impl FnOnce(&mut Vec<u8>) -> Result<(), E>) -> Result<Vec<u8>, CliError>
where
    CliError: From<E>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let out = required(&cfg.out, "out")?;
    let params = cfg.synth_params();
    params.validate()?;
    let mut outputs = RunOutputs::create(out)?;
    let (portfolio, truth) = truend::generate::<f64>(&params)?;
    outputs.write("portfolio.csv", &csv_bytes(|b| write_csv(&portfolio, b))?)?;
    outputs.write("truth.csv", &csv_bytes(|b| truth.write_csv(b))?)?;
    outputs.finish("synth", &cfg.echo())
}

fn outcome_text(outcome: &OptimisationOutcomeF64, fixed_w: bool, accounts: usize) -> String {
    let mut s = String::new();
    let best = outcome.best();
    let _ = writeln!(s, "b_star={}", outcome.b_star);
    let _ = writeln!(
        s,
        "f_star={}",
        best.f_value.map(|f| f.to_string()).unwrap_or_default()
    );
    let _ = writeln!(s, "w={}", outcome.w_used);
    let _ = writeln!(s, "w_source={}", if fixed_w { "fixed" } else { "auto" });
    match &outcome.calibration {
        Some(c) => {
            let _ = writeln!(s, "midpoint={}", c.midpoint);
            let _ = writeln!(s, "midpoint_low_b={}", c.low_b);
            let _ = writeln!(s, "midpoint_high_b={}", c.high_b);
            let _ = writeln!(s, "midpoint_fallbacks={}", c.fallbacks);
        }
        None => {
            let _ = writeln!(s, "midpoint=");
        }
    }
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
    let _ = writeln!(s, "region={}", join(&outcome.region.thresholds));
    let _ = writeln!(s, "region_degenerate={}", outcome.region.degenerate);
    let _ = writeln!(s, "excluded={}", join(&outcome.excluded));
    let _ = writeln!(s, "accounts={accounts}");
    let _ = writeln!(s, "prevalence_at_b_star={}", best.prevalence);
    s
}

pub fn optimise_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let input = required(&cfg.input, "input")?;
    let out = required(&cfg.out, "out")?;
    let space = SearchSpace::new(cfg.thresholds.values())?;
    let options = OptimiseOptions {
        tau: cfg.tau,
        min_len: cfg.min_len,
        w: cfg.w.fixed(),
        ..OptimiseOptions::default()
    };
    let mut outputs = RunOutputs::create(out)?;
    let (portfolio, report) = ingest(&mut outputs, "portfolio", input)?;
    let outcome = optimise(&portfolio, &space, &options)?;
    let subsample = match cfg.subsample {
        Some(n) => {
            let sample = subsample_clustered(&portfolio, n, cfg.seed)?;
            Some(optimise(&sample, &space, &options)?)
        }
        None => None,
    };

    outputs.write("ingest_report.txt", report.as_bytes())?;
    outputs.write(
        "curve.csv",
        &csv_bytes(|b| write_curve_csv(&outcome.curve, b))?,
    )?;
    let fixed = options.w.is_some();
    outputs.write(
        "outcome.txt",
        outcome_text(&outcome, fixed, portfolio.len()).as_bytes(),
    )?;
    if let (Some(sub), Some(n)) = (&subsample, cfg.subsample) {
        outputs.write(
            "curve_subsample.csv",
            &csv_bytes(|b| write_curve_csv(&sub.curve, b))?,
        )?;
        outputs.write(
            "outcome_subsample.txt",
            outcome_text(sub, fixed, n).as_bytes(),
        )?;
    }
    outputs.finish("optimise", &cfg.echo())
}

pub fn apply(cfg: &RunConfig) -> Result<(), CliError> {
    let input = required(&cfg.input, "input")?;
    let out = required(&cfg.out, "out")?;
    let b = *required(&cfg.b, "b")?;
    let mut outputs = RunOutputs::create(out)?;
    let (portfolio, report) = ingest(&mut outputs, "portfolio", input)?;
    let (treated, treatment) = apply_policy(&portfolio, b, cfg.min_len, cfg.scope)?;
    outputs.write("ingest_report.txt", report.as_bytes())?;
    outputs.write("treated.csv", &csv_bytes(|buf| write_csv(&treated, buf))?)?;
    outputs.write("treatment_report.csv", treatment.to_csv().as_bytes())?;
    outputs.write("treatment_report.txt", treatment.to_kv().as_bytes())?;
    outputs.finish("apply", &cfg.echo())
}

struct Side {
    spells: Vec<DefaultSpellF64>,
    curve: SurvivalCurveF64,
    losses: Vec<f64>,
    ages: Vec<f64>,
}

impl Side {
    fn measure(portfolio: &PortfolioF64, cfg: &RunConfig) -> Result<Self, CliError> {
        let spells = extract_default_spells(portfolio);
        let curve = discrete_hazard(km_estimator(&spells)?.on_grid(cfg.horizon));
        let losses = truend::analytics::write_off_losses(&spells, cfg.discount_rate, false);
        let ages = portfolio.histories().map(|h| h.len() as f64).collect();
        Ok(Self {
            spells,
            curve,
            losses,
            ages,
        })
    }
}

fn hazard_table(curve: &SurvivalCurveF64) -> String {
    let mut s = String::from("t,at_risk,events,h\n");
    for r in &curve.rows {
        let _ = writeln!(s, "{},{},{},{}", r.t, r.at_risk, r.events, r.hazard);
    }
    s
}

fn histogram_bytes(values: &[f64], bins: usize, range: (f64, f64)) -> Result<Vec<u8>, CliError> {
    let hist = distribution_summary(values, bins, Some(range))?;
    csv_bytes(|b| hist.write_csv(b))
}

fn mean(v: &[f64]) -> String {
    if v.is_empty() {
        String::new()
    } else {
        (v.iter().sum::<f64>() / v.len() as f64).to_string()
    }
}

pub fn impact(cfg: &RunConfig) -> Result<(), CliError> {
    let input = required(&cfg.input, "input")?;
    let after_path = required(&cfg.after, "after")?;
    let out = required(&cfg.out, "out")?;
    if cfg.bins == 0 {
        return Err(CliError::usage("bins must be >= 1"));
    }
    let mut outputs = RunOutputs::create(out)?;
    let (before, _) = ingest(&mut outputs, "before", input)?;
    let (after, _) = ingest(&mut outputs, "after", after_path)?;
    if !before.same_loans(&after) {
        return Err(TreatmentError::MismatchedPortfolios.into());
    }
    let ages = age_impact(&before, &after)?;
    let b = Side::measure(&before, cfg)?;
    let a = Side::measure(&after, cfg)?;

    for (tag, side) in [("before", &b), ("after", &a)] {
        outputs.write(
            &format!("survival_{tag}.csv"),
            &csv_bytes(|buf| side.curve.write_csv(buf))?,
        )?;
        outputs.write(
            &format!("hazard_{tag}.csv"),
            hazard_table(&side.curve).as_bytes(),
        )?;
        outputs.write(
            &format!("spells_{tag}.csv"),
            &csv_bytes(|buf| {
                truend::analytics::write_spells_csv(&side.spells, cfg.discount_rate, buf)
            })?,
        )?;
    }

    // Both sides share bin edges so the histograms compare bin for bin.
    let max_age = b.ages.iter().chain(&a.ages).fold(0.0_f64, |m, &x| m.max(x));
    let age_bins = ((max_age / 12.0).ceil() as usize).max(1);
    for (tag, side) in [("before", &b), ("after", &a)] {
        outputs.write(
            &format!("age_hist_{tag}.csv"),
            &histogram_bytes(&side.ages, age_bins, (0.0, 12.0 * age_bins as f64))?,
        )?;
    }
    let all_losses: Vec<f64> = b.losses.iter().chain(&a.losses).copied().collect();
    if !all_losses.is_empty() {
        let lo = all_losses
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            .min(0.0);
        let hi = all_losses
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            .max(1.0);
        for (tag, side) in [("before", &b), ("after", &a)] {
            if !side.losses.is_empty() {
                outputs.write(
                    &format!("loss_hist_{tag}.csv"),
                    &histogram_bytes(&side.losses, cfg.bins, (lo, hi))?,
                )?;
            }
        }
    }

    let mut s = String::new();
    type Column = fn(&truend::SurvivalRow<f64>) -> f64;
    let pairs: [(&str, Column); 4] = [
        ("S", |r| r.survival),
        ("F", |r| r.cdf),
        ("f", |r| r.density),
        ("h", |r| r.hazard),
    ];
    for (name, pick) in pairs {
        let mae = curve_mae(&b.curve.column(pick), &a.curve.column(pick))?;
        let _ = writeln!(s, "mae_{name}={mae}");
    }
    let _ = writeln!(s, "horizon={}", cfg.horizon);
    let _ = writeln!(s, "spells_before={}", b.spells.len());
    let _ = writeln!(s, "spells_after={}", a.spells.len());
    let _ = writeln!(s, "writeoffs_before={}", b.losses.len());
    let _ = writeln!(s, "writeoffs_after={}", a.losses.len());
    let _ = writeln!(s, "discount_rate={}", cfg.discount_rate);
    let _ = writeln!(s, "mean_loss_before={}", mean(&b.losses));
    let _ = writeln!(s, "mean_loss_after={}", mean(&a.losses));
    let _ = writeln!(s, "mean_age_before={}", ages.mean_before);
    let _ = writeln!(s, "mean_age_after={}", ages.mean_after);
    let _ = writeln!(s, "median_age_before={}", ages.median_before);
    let _ = writeln!(s, "median_age_after={}", ages.median_after);
    let _ = writeln!(s, "mean_age_reduction={}", ages.mean_reduction);
    let _ = writeln!(s, "median_age_reduction={}", ages.median_reduction);
    outputs.write("mae.txt", s.as_bytes())?;
    outputs.finish("impact", &cfg.echo())
}
