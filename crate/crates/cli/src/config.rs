//! Run configuration: defaults, then a flat `key=value` file, then flags.
//!
//! The file format is one `key = value` per line; blank lines and lines
//! starting with `#` are ignored. Keys use the flag names with `-` or `_`.
//! Unknown keys are rejected so a typo never silently falls back to a
//! default.

use crate::error::CliError;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use truend::optimise::DEFAULT_THRESHOLDS;
use truend::{Scope, SynthParams};

#[derive(Debug, Clone, PartialEq)]
pub enum Thresholds {
    Default24,
    List(Vec<f64>),
}

impl Thresholds {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Thresholds::Default24 => DEFAULT_THRESHOLDS.to_vec(),
            Thresholds::List(v) => v.clone(),
        }
    }

    fn parse(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("default24") || s.eq_ignore_ascii_case("default") {
            return Ok(Thresholds::Default24);
        }
        s.split([',', ';'])
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|_| format!("bad threshold {t:?}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Thresholds::List)
    }

    fn echo(&self) -> String {
        match self {
            Thresholds::Default24 => "default24".into(),
            Thresholds::List(v) => v.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Auto,
    Fixed(f64),
}

impl Weight {
    pub fn fixed(self) -> Option<f64> {
        match self {
            Weight::Auto => None,
            Weight::Fixed(w) => Some(w),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    /// Treated portfolio for `impact`.
    pub after: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub thresholds: Thresholds,
    pub tau: usize,
    pub min_len: usize,
    pub w: Weight,
    /// Policy threshold for `apply`.
    pub b: Option<f64>,
    pub scope: Scope,
    pub discount_rate: f64,
    pub horizon: usize,
    pub seed: u64,
    pub subsample: Option<usize>,
    pub bins: usize,
    /// Worker threads; never part of the echo since it cannot change output.
    pub threads: Option<usize>,
    pub synth: SynthParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthParams::default();
        Self {
            input: None,
            after: None,
            out: None,
            thresholds: Thresholds::Default24,
            tau: truend::tzb::DEFAULT_TAU,
            min_len: truend::tzb::DEFAULT_MIN_LEN,
            w: Weight::Auto,
            b: None,
            scope: Scope::TerminatedOnly,
            discount_rate: 0.0,
            horizon: truend::analytics::DEFAULT_HORIZON_MONTHS,
            seed: synth.seed,
            subsample: None,
            bins: 20,
            threads: None,
            synth,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::usage(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        match k {
            "input" => self.input = Some(PathBuf::from(value)),
            "after" => self.after = Some(PathBuf::from(value)),
            "out" | "output_dir" => self.out = Some(PathBuf::from(value)),
            "thresholds" => self.thresholds = Thresholds::parse(value).map_err(CliError::Usage)?,
            "tau" => self.tau = num(k, value)?,
            "min_len" => self.min_len = num(k, value)?,
            "w" => {
                self.w = if value.eq_ignore_ascii_case("auto") {
                    Weight::Auto
                } else {
                    Weight::Fixed(num(k, value)?)
                }
            }
            "b" => self.b = Some(num(k, value)?),
            "scope" => self.scope = value.parse().map_err(CliError::Usage)?,
            "discount_rate" => self.discount_rate = num(k, value)?,
            "horizon" | "horizon_months" => self.horizon = num(k, value)?,
            "seed" => self.seed = num(k, value)?,
            "subsample" | "subsample_n" => self.subsample = Some(num(k, value)?),
            "bins" => self.bins = num(k, value)?,
            "threads" => self.threads = Some(num(k, value)?),
            "n_loans" => self.synth.n_loans = num(k, value)?,
            "term_months" => self.synth.term_months = num(k, value)?,
            "window_months" => self.synth.window_months = num(k, value)?,
            "max_seasoning" => self.synth.max_seasoning = num(k, value)?,
            "tzb_fraction" => self.synth.tzb_fraction = num(k, value)?,
            "tail_len_mean" => self.synth.tail_len_mean = num(k, value)?,
            "max_tail_len" => self.synth.max_tail_len = num(k, value)?,
            "tail_balance_cap" => self.synth.tail_balance_cap = num(k, value)?,
            "tail_accrual_rate" => self.synth.tail_accrual_rate = num(k, value)?,
            "genuine_floor" => self.synth.genuine_floor = num(k, value)?,
            "p_default" => self.synth.p_default = num(k, value)?,
            "p_cure" => self.synth.p_cure = num(k, value)?,
            "p_writeoff" => self.synth.p_writeoff = num(k, value)?,
            "p_settle" => self.synth.p_settle = num(k, value)?,
            _ => return Err(CliError::usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::usage(format!("{}:{}: expected key=value", path.display(), n + 1))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn synth_params(&self) -> SynthParams {
        SynthParams {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    /// Every setting that can influence output, one `key=value` per line in
    /// a fixed order. Feeding it back as a config file reproduces the run.
    pub fn echo(&self) -> String {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let opt = |v: Option<String>| v.unwrap_or_default();
        let s = &self.synth;
        let mut out = String::new();
        let entries: Vec<(&str, String)> = vec![
            ("input", path(&self.input)),
            ("after", path(&self.after)),
            ("out", path(&self.out)),
            ("thresholds", self.thresholds.echo()),
            ("tau", self.tau.to_string()),
            ("min_len", self.min_len.to_string()),
            (
                "w",
                match self.w {
                    Weight::Auto => "auto".into(),
                    Weight::Fixed(w) => w.to_string(),
                },
            ),
            ("b", opt(self.b.map(|b| b.to_string()))),
            ("scope", self.scope.to_string()),
            ("discount_rate", self.discount_rate.to_string()),
            ("horizon", self.horizon.to_string()),
            ("seed", self.seed.to_string()),
            ("subsample", opt(self.subsample.map(|n| n.to_string()))),
            ("bins", self.bins.to_string()),
            ("n_loans", s.n_loans.to_string()),
            ("term_months", s.term_months.to_string()),
            ("window_months", s.window_months.to_string()),
            ("max_seasoning", s.max_seasoning.to_string()),
            ("tzb_fraction", s.tzb_fraction.to_string()),
            ("tail_len_mean", s.tail_len_mean.to_string()),
            ("max_tail_len", s.max_tail_len.to_string()),
            ("tail_balance_cap", s.tail_balance_cap.to_string()),
            ("tail_accrual_rate", s.tail_accrual_rate.to_string()),
            ("genuine_floor", s.genuine_floor.to_string()),
            ("p_default", s.p_default.to_string()),
            ("p_cure", s.p_cure.to_string()),
            ("p_writeoff", s.p_writeoff.to_string()),
            ("p_settle", s.p_settle.to_string()),
        ];
        for (k, v) in entries {
            if !v.is_empty() {
                let _ = writeln!(out, "{k}={v}");
            }
        }
        out
    }
}
