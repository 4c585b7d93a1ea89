//! Monte Carlo RMSE harness over chain families, sample sizes and
//! estimators.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::Unit;
use crate::entropy::{EntropyEstimator, PolyEstimatorParams};
use crate::error::{Error, Result};
use crate::markov::{
    entropy_rate_exact, generate, stationary, ChainFamily, StationaryDist, TransitionMatrix,
};
use crate::rate::{bias_bound_thm2, conditional_rate, lz_rate, MatchPolicy};
use crate::sim::{derive_seed, sample_path, substream_seed};

/// Sample sizes, either listed or log-spaced as `"lo:hi:count"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<usize>),
    Spec(String),
}

impl Grid {
    pub fn values(&self) -> Result<Vec<usize>> {
        let mut v = match self {
            Grid::List(v) => v.clone(),
            Grid::Spec(s) => parse_grid(s)?,
        };
        v.sort_unstable();
        v.dedup();
        if v.is_empty() || v[0] < 2 {
            return Err(Error::InvalidConfig(
                "grid values must be at least 2".into(),
            ));
        }
        Ok(v)
    }
}

/// `lo:hi:count` gives `count` log-spaced integers from `lo` to `hi`;
/// anything else is a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::Parse(format!("bad grid {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [lo, hi, count] => {
            let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
            let count: usize = count.trim().parse().map_err(|_| bad())?;
            if !(lo > 0.0 && hi >= lo) || count == 0 {
                return Err(bad());
            }
            if count == 1 {
                return Ok(vec![lo.round() as usize]);
            }
            let step = (hi / lo).ln() / (count - 1) as f64;
            Ok((0..count)
                .map(|i| (lo * (step * i as f64).exp()).round() as usize)
                .collect())
        }
        [list] => list
            .split(',')
            .map(|x| x.trim().parse().map_err(|_| bad()))
            .collect(),
        _ => Err(bad()),
    }
}

fn default_trials() -> usize {
    10
}

fn default_estimators() -> Vec<String> {
    vec!["emp".into(), "opt".into()]
}

fn default_lz_max_n() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(rename = "S", alias = "states")]
    pub states: usize,
    /// Family specs as accepted by `ChainFamily::from_str`.
    pub families: Vec<String>,
    pub n: Grid,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Any of `emp`, `opt`, `mm`, `lz`.
    #[serde(default = "default_estimators")]
    pub estimators: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub unit: Unit,
    #[serde(default)]
    pub overlay_thm2: bool,
    /// `lz` is only evaluated at grid points up to this size.
    #[serde(default = "default_lz_max_n")]
    pub lz_max_n: usize,
    #[serde(default)]
    pub poly: PolyEstimatorParams,
}

impl BenchConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string())),
            _ => toml::from_str(&text).map_err(|e| Error::Parse(e.to_string())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.states < 2 {
            return Err(Error::InvalidConfig("S must be at least 2".into()));
        }
        if self.families.is_empty() || self.estimators.is_empty() {
            return Err(Error::InvalidConfig(
                "need at least one family and one estimator".into(),
            ));
        }
        self.families()?;
        self.n.values()?;
        for e in &self.estimators {
            RateMethod::parse(e, self.poly)?;
        }
        self.poly.validate()
    }

    fn families(&self) -> Result<Vec<ChainFamily>> {
        self.families.iter().map(|f| f.parse()).collect()
    }
}

/// Rate estimators the harness can run.
#[derive(Debug, Clone, Copy, PartialEq)]
enum RateMethod {
    Conditional(&'static str, EntropyEstimator),
    Lz,
}

impl RateMethod {
    fn parse(name: &str, poly: PolyEstimatorParams) -> Result<Self> {
        Ok(match name {
            "emp" => RateMethod::Conditional("emp", EntropyEstimator::Plugin),
            "opt" => RateMethod::Conditional("opt", EntropyEstimator::Poly(poly)),
            "mm" => RateMethod::Conditional("mm", EntropyEstimator::MillerMadow),
            "lz" => RateMethod::Lz,
            other => return Err(Error::InvalidConfig(format!("unknown estimator {other:?}"))),
        })
    }

    fn name(&self) -> &'static str {
        match self {
            RateMethod::Conditional(name, _) => name,
            RateMethod::Lz => "lz",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub family: String,
    #[serde(rename = "S")]
    pub states: usize,
    pub n: usize,
    pub estimator: String,
    pub rmse: f64,
    pub mean_error: f64,
    pub trials: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// Stable 64-bit label hash (FNV-1a).
fn label_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Seed of one trial, derived from `(master, family, n, trial)` only.
pub fn trial_seed(master: u64, family: &str, n: usize, trial: usize) -> u64 {
    derive_seed(&[master, label_hash(family), n as u64, trial as u64])
}

struct Trial {
    family: usize,
    n: usize,
    /// `estimate - truth` per method, or the failure message.
    errors: Vec<std::result::Result<f64, String>>,
}

type Chain = (TransitionMatrix, StationaryDist, f64);

fn chain_with_rate(family: &ChainFamily, states: usize, seed: u64) -> Result<Chain> {
    let t = generate(family.clone(), states, seed)?;
    let pi = stationary(&t)?;
    let rate = entropy_rate_exact(&t, &pi);
    Ok((t, pi, rate))
}

fn run_trial(
    chain: &Result<Chain>,
    methods: &[RateMethod],
    n: usize,
    seed: u64,
    lz_max_n: usize,
) -> Vec<std::result::Result<f64, String>> {
    let (t, pi, truth) = match chain {
        Ok(c) => c,
        Err(e) => return vec![Err(e.to_string()); methods.len()],
    };
    let path = match sample_path(t, pi, n, substream_seed(seed, 1)) {
        Ok(p) => p,
        Err(e) => return vec![Err(e.to_string()); methods.len()],
    };
    methods
        .iter()
        .map(|m| {
            let estimate = match m {
                RateMethod::Conditional(_, est) => conditional_rate(&path, est),
                RateMethod::Lz if n > lz_max_n => return Ok(f64::NAN),
                RateMethod::Lz => lz_rate(&path, MatchPolicy::Centered),
            };
            estimate.map(|e| e.value - truth).map_err(|e| e.to_string())
        })
        .collect()
}

/// Runs every `(family, n, trial)` cell and aggregates per estimator. Rows
/// are sorted by `(family, n, estimator)`; the output depends only on the
/// configuration, not on thread count or scheduling.
pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    config.validate()?;
    let families = config.families()?;
    let labels: Vec<String> = families.iter().map(ToString::to_string).collect();
    let grid = config.n.values()?;
    let methods: Vec<RateMethod> = config
        .estimators
        .iter()
        .map(|e| RateMethod::parse(e, config.poly))
        .collect::<Result<_>>()?;

    // deterministic families share a single matrix
    let fixed: Vec<Option<Result<Chain>>> = families
        .iter()
        .map(|f| (!f.is_random()).then(|| chain_with_rate(f, config.states, 0)))
        .collect();

    let jobs: Vec<(usize, usize, usize)> = (0..families.len())
        .flat_map(|f| {
            grid.iter()
                .flat_map(move |&n| (0..config.trials).map(move |t| (f, n, t)))
        })
        .collect();
    let trials: Vec<Trial> = jobs
        .par_iter()
        .map(|&(f, n, trial)| {
            let seed = trial_seed(config.seed, &labels[f], n, trial);
            let drawn;
            let chain = match &fixed[f] {
                Some(c) => c,
                None => {
                    drawn = chain_with_rate(&families[f], config.states, substream_seed(seed, 0));
                    &drawn
                }
            };
            Trial {
                family: f,
                n,
                errors: run_trial(chain, &methods, n, seed, config.lz_max_n),
            }
        })
        .collect();

    let mut rows = Vec::new();
    for (f, label) in labels.iter().enumerate() {
        for &n in &grid {
            let cell: Vec<&Trial> = trials
                .iter()
                .filter(|t| t.family == f && t.n == n)
                .collect();
            for (m, method) in methods.iter().enumerate() {
                if matches!(method, RateMethod::Lz) && n > config.lz_max_n {
                    continue;
                }
                let mut row = BenchRow {
                    family: label.clone(),
                    states: config.states,
                    n,
                    estimator: method.name().to_string(),
                    rmse: f64::NAN,
                    mean_error: f64::NAN,
                    trials: config.trials,
                    seed: config.seed,
                    error: None,
                };
                let errs: std::result::Result<Vec<f64>, String> =
                    cell.iter().map(|t| t.errors[m].clone()).collect();
                match errs {
                    Ok(errs) => {
                        let k = errs.len() as f64;
                        row.mean_error = errs.iter().sum::<f64>() / k;
                        row.rmse = (errs.iter().map(|e| e * e).sum::<f64>() / k).sqrt();
                        row.rmse = config.unit.from_nats(row.rmse);
                        row.mean_error = config.unit.from_nats(row.mean_error);
                    }
                    Err(msg) => row.error = Some(msg),
                }
                rows.push(row);
            }
            if config.overlay_thm2 {
                let bound = config.unit.from_nats(bias_bound_thm2(config.states, n));
                rows.push(BenchRow {
                    family: label.clone(),
                    states: config.states,
                    n,
                    estimator: "thm2_bound".into(),
                    rmse: bound,
                    mean_error: bound,
                    trials: 0,
                    seed: config.seed,
                    error: None,
                });
            }
        }
    }
    rows.sort_by(|a, b| (&a.family, a.n, &a.estimator).cmp(&(&b.family, b.n, &b.estimator)));
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Parse(format!("unknown report format {other:?}"))),
        }
    }
}

/// Rounds to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn fmt_value(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        round_sig9(x).to_string()
    }
}

/// Writes rows as CSV (`family,S,n,estimator,rmse,mean_error,trials,seed`,
/// plus `error` when any row failed) or as a JSON array with the same
/// rounded values.
pub fn emit_report<W: Write>(rows: &[BenchRow], format: ReportFormat, mut out: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no rows to report".into()));
    }
    let with_error = rows.iter().any(|r| r.error.is_some());
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            let mut header = vec![
                "family",
                "S",
                "n",
                "estimator",
                "rmse",
                "mean_error",
                "trials",
                "seed",
            ];
            if with_error {
                header.push("error");
            }
            w.write_record(&header)
                .map_err(|e| Error::Parse(e.to_string()))?;
            for r in rows {
                let mut rec = vec![
                    r.family.clone(),
                    r.states.to_string(),
                    r.n.to_string(),
                    r.estimator.clone(),
                    fmt_value(r.rmse),
                    fmt_value(r.mean_error),
                    r.trials.to_string(),
                    r.seed.to_string(),
                ];
                if with_error {
                    rec.push(r.error.clone().unwrap_or_default());
                }
                w.write_record(&rec)
                    .map_err(|e| Error::Parse(e.to_string()))?;
            }
            w.flush()?;
        }
        ReportFormat::Json => {
            let rounded: Vec<BenchRow> = rows
                .iter()
                .map(|r| BenchRow {
                    rmse: round_sig9(r.rmse),
                    mean_error: round_sig9(r.mean_error),
                    ..r.clone()
                })
                .collect();
            serde_json::to_writer_pretty(&mut out, &rounded)
                .map_err(|e| Error::Parse(e.to_string()))?;
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> BenchConfig {
        BenchConfig {
            states: 5,
            families: vec!["memoryless".into(), "uniform_spectrum:0.2".into()],
            n: Grid::List(vec![50, 200]),
            trials: 4,
            estimators: default_estimators(),
            seed: 17,
            output: None,
            unit: Unit::Nats,
            overlay_thm2: false,
            lz_max_n: default_lz_max_n(),
            poly: PolyEstimatorParams::default(),
        }
    }

    #[test]
    fn grid_specs() {
        assert_eq!(parse_grid("100:10000:3").unwrap(), vec![100, 1000, 10000]);
        assert_eq!(parse_grid("5, 7,9").unwrap(), vec![5, 7, 9]);
        assert!(parse_grid("1:2").is_err());
        assert!(Grid::List(vec![1, 5]).values().is_err());
        assert_eq!(Grid::Spec("10:10:4".into()).values().unwrap(), vec![10]);
    }

    #[test]
    fn rows_are_sorted_and_deterministic() {
        let rows = run_bench(&config()).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 2);
        let keys: Vec<_> = rows
            .iter()
            .map(|r| (r.family.clone(), r.n, r.estimator.clone()))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(rows, run_bench(&config()).unwrap());
        for r in &rows {
            assert!(r.rmse >= r.mean_error.abs() - 1e-12);
        }
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for fam in ["zipf", "geometric"] {
            for n in [100, 1000] {
                for t in 0..50 {
                    assert!(seen.insert(trial_seed(3, fam, n, t)));
                }
            }
        }
    }

    #[test]
    fn data_rich_memoryless_is_accurate() {
        let cfg = BenchConfig {
            states: 4,
            families: vec!["memoryless".into()],
            n: Grid::List(vec![1600]),
            estimators: vec!["emp".into()],
            ..config()
        };
        let rows = run_bench(&cfg).unwrap();
        assert!(rows[0].rmse <= 0.05);
    }

    #[test]
    fn csv_and_json_agree() {
        let mut cfg = config();
        cfg.overlay_thm2 = true;
        let rows = run_bench(&cfg).unwrap();
        let overlay: Vec<_> = rows
            .iter()
            .filter(|r| r.estimator == "thm2_bound")
            .collect();
        assert_eq!(overlay.len(), 4);
        assert!(
            (overlay[0].rmse - bias_bound_thm2(5, overlay[0].n)).abs() < 1e-9,
            "{:?}",
            overlay[0]
        );

        let mut csv_buf = Vec::new();
        emit_report(&rows, ReportFormat::Csv, &mut csv_buf).unwrap();
        let mut json_buf = Vec::new();
        emit_report(&rows, ReportFormat::Json, &mut json_buf).unwrap();
        let parsed: Vec<BenchRow> = serde_json::from_slice(&json_buf).unwrap();
        let text = String::from_utf8(csv_buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("family,S,n,estimator,rmse,mean_error,trials,seed")
        );
        for (line, row) in lines.zip(&parsed) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[4].parse::<f64>().unwrap(), row.rmse);
            assert_eq!(f[5].parse::<f64>().unwrap(), row.mean_error);
        }
    }

    #[test]
    fn one_row_is_two_lines() {
        let row = BenchRow {
            family: "zipf".into(),
            states: 3,
            n: 10,
            estimator: "emp".into(),
            rmse: 0.123_456_789_123,
            mean_error: -0.1,
            trials: 1,
            seed: 0,
            error: None,
        };
        let mut buf = Vec::new();
        emit_report(&[row], ReportFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("zipf,3,10,emp,0.123456789,-0.1,1,0"));
    }

    #[test]
    fn config_files_parse() {
        let toml_text = "S = 10\nfamilies = [\"zipf\"]\nn = \"100:1000:3\"\ntrials = 2\n";
        let cfg: BenchConfig = toml::from_str(toml_text).unwrap();
        assert_eq!(cfg.n.values().unwrap(), vec![100, 316, 1000]);
        assert_eq!(cfg.estimators, default_estimators());
        let json_text = r#"{"S": 10, "families": ["geometric"], "n": [20, 40]}"#;
        let cfg: BenchConfig = serde_json::from_str(json_text).unwrap();
        assert_eq!(cfg.trials, 10);
        assert!(
            toml::from_str::<BenchConfig>("S = 3\nfamilies = []\nn = [3]\nbogus = 1\n").is_err()
        );
    }
}
