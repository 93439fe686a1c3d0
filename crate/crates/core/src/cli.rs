//! Command-line front end: flat key/value configs, event logs, reports, and
//! the `simulate`, `sweep`, `profile` and `analyze` subcommands.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bounds::classical_limit;
use crate::error::Error;
use crate::estimation::{build_likelihood, estimation_error, expected_error_quadrature, Displacement, PriorModel};
use crate::montecarlo::{
    event_rng, retarget_variance, run_experiment, run_summary, sample_outcome, EventRecord, OutcomeSampler, RunConfig,
    RunSummary,
};
use crate::wigner::{apply_loss, PhotonMixture};

pub const EVENT_HEADER: [&str; 8] = ["xi", "eta", "y_x", "y_p", "selected", "est_xi", "est_eta", "sq_err"];

const KNOWN_KEYS: &[&str] = &[
    "v",
    "r",
    "probe",
    "ancilla",
    "loss",
    "probe_loss",
    "ancilla_loss",
    "n_events",
    "seed",
    "axis",
    "values",
    "mc",
    "max_radius",
    "bins",
    "samples",
];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("event file schema mismatch: {0}")]
    Schema(String),
}

impl CliError {
    /// 3 for degenerate selections, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::DegenerateSelection(_) | Error::NoEvents | Error::DegeneratePosterior(_)) => 3,
            _ => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::Usage(format!("line {}: unknown key `{key}`", lineno + 1)));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!("line {}: duplicate key `{key}`", lineno + 1)));
        }
    }
    Ok(map)
}

fn get_parsed<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> CliResult<Option<T>> {
    map.get(key)
        .map(|raw| {
            raw.parse::<T>()
                .map_err(|_| CliError::Usage(format!("bad value for `{key}`: `{raw}`")))
        })
        .transpose()
}

fn get_mixture(map: &BTreeMap<String, String>, key: &str) -> CliResult<PhotonMixture> {
    match map.get(key) {
        Some(raw) => raw.parse().map_err(|e: Error| CliError::Usage(format!("`{key}`: {e}"))),
        None => Ok(PhotonMixture::single_photon()),
    }
}

/// Experiment parameters shared by all subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub v: f64,
    pub r: f64,
    pub probe: PhotonMixture,
    pub ancilla: PhotonMixture,
    pub probe_loss: f64,
    pub ancilla_loss: f64,
    pub n_events: u64,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_map(map: &BTreeMap<String, String>) -> CliResult<Self> {
        let v = get_parsed(map, "v")?.unwrap_or(0.34);
        let r = get_parsed(map, "r")?.unwrap_or(0.2);
        let loss: f64 = get_parsed(map, "loss")?.unwrap_or(0.0);
        let cfg = Self {
            v,
            r,
            probe: get_mixture(map, "probe")?,
            ancilla: get_mixture(map, "ancilla")?,
            probe_loss: get_parsed(map, "probe_loss")?.unwrap_or(loss),
            ancilla_loss: get_parsed(map, "ancilla_loss")?.unwrap_or(loss),
            n_events: get_parsed(map, "n_events")?.unwrap_or(168_917),
            seed: get_parsed(map, "seed")?.unwrap_or(0),
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> CliResult<()> {
        if !(self.v.is_finite() && self.v >= 0.0) {
            return Err(CliError::Usage(format!("v must be nonnegative, got {}", self.v)));
        }
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(CliError::Usage(format!("r must be nonnegative, got {}", self.r)));
        }
        for loss in [self.probe_loss, self.ancilla_loss] {
            if !(0.0..=1.0).contains(&loss) {
                return Err(CliError::Usage(format!("loss must lie in [0, 1], got {loss}")));
            }
        }
        if self.n_events == 0 {
            return Err(CliError::Usage("n_events must be at least 1".into()));
        }
        Ok(())
    }

    pub fn effective_probe(&self) -> CliResult<PhotonMixture> {
        Ok(apply_loss(&self.probe, self.probe_loss)?)
    }

    pub fn effective_ancilla(&self) -> CliResult<PhotonMixture> {
        Ok(apply_loss(&self.ancilla, self.ancilla_loss)?)
    }

    pub fn run_config(&self) -> CliResult<RunConfig> {
        if !(self.v > 0.0) {
            return Err(CliError::Usage("v must be positive for estimation".into()));
        }
        Ok(RunConfig {
            v: self.v,
            r: self.r,
            probe: self.effective_probe()?,
            ancilla: self.effective_ancilla()?,
            n_events: self.n_events,
            seed: self.seed,
        })
    }

    fn echo(&self) -> CliResult<ConfigEcho> {
        Ok(ConfigEcho {
            v: self.v,
            r: self.r,
            probe: self.effective_probe()?.to_string(),
            ancilla: self.effective_ancilla()?.to_string(),
            n_events: self.n_events,
            seed: self.seed,
        })
    }
}

pub fn load_config(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_key_values(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PriorVariance,
    SelectionRadius,
    Loss,
}

impl FromStr for SweepAxis {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "prior_variance" | "v" => Ok(Self::PriorVariance),
            "selection_radius" | "r" => Ok(Self::SelectionRadius),
            "loss" => Ok(Self::Loss),
            other => Err(CliError::Usage(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub fixed: ExperimentConfig,
}

impl SweepSpec {
    pub fn from_map(map: &BTreeMap<String, String>) -> CliResult<Self> {
        let axis: SweepAxis = map
            .get("axis")
            .ok_or_else(|| CliError::Usage("sweep needs `axis`".into()))?
            .parse()?;
        let values = map
            .get("values")
            .ok_or_else(|| CliError::Usage("sweep needs `values`".into()))?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Usage(format!("bad sweep value `{s}`")))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        let spec = Self {
            axis,
            values,
            fixed: ExperimentConfig::from_map(map)?,
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> CliResult<()> {
        if self.values.is_empty() {
            return Err(CliError::Usage("sweep values are empty".into()));
        }
        for &x in &self.values {
            let ok = match self.axis {
                SweepAxis::PriorVariance | SweepAxis::SelectionRadius => x.is_finite() && x > 0.0,
                SweepAxis::Loss => (0.0..=1.0).contains(&x),
            };
            if !ok {
                return Err(CliError::Usage(format!("sweep value {x} is outside the axis domain")));
            }
        }
        Ok(())
    }

    pub fn config_at(&self, value: f64) -> ExperimentConfig {
        let mut cfg = self.fixed.clone();
        match self.axis {
            SweepAxis::PriorVariance => cfg.v = value,
            SweepAxis::SelectionRadius => cfg.r = value,
            SweepAxis::Loss => {
                cfg.probe_loss = value;
                cfg.ancilla_loss = value;
            }
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub v: f64,
    pub r: f64,
    pub probe: String,
    pub ancilla: String,
    pub n_events: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationReport {
    pub config: ConfigEcho,
    pub v_prime: f64,
    pub v_prime_stderr: f64,
    pub v_prime_c: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
    pub select_prob: f64,
    pub select_prob_stderr: f64,
    pub n_selected: u64,
    pub n_failed: u64,
    pub n_events: u64,
}

impl EstimationReport {
    fn from_summary(config: ConfigEcho, summary: &RunSummary, v_prime_c: f64) -> CliResult<Self> {
        let err = summary.error.ok_or(Error::NoEvents)?;
        Ok(Self {
            config,
            v_prime: err.v_prime,
            v_prime_stderr: err.stderr,
            v_prime_c,
            ratio: err.v_prime / v_prime_c,
            ratio_stderr: err.stderr / v_prime_c,
            select_prob: summary.select_prob(),
            select_prob_stderr: summary.select_prob_stderr(),
            n_selected: summary.n_selected,
            n_failed: summary.n_failed,
            n_events: summary.n_events,
        })
    }

    const CSV_HEADER: &'static str = "v,r,probe,ancilla,n_events_config,seed,v_prime,v_prime_stderr,v_prime_c,\
ratio,ratio_stderr,select_prob,select_prob_stderr,n_selected,n_failed,n_events";

    pub fn to_csv(&self) -> String {
        let c = &self.config;
        format!(
            "{}\n{},{},\"{}\",\"{}\",{},{},{},{},{},{},{},{},{},{},{},{}\n",
            Self::CSV_HEADER,
            c.v,
            c.r,
            c.probe,
            c.ancilla,
            c.n_events,
            c.seed,
            self.v_prime,
            self.v_prime_stderr,
            self.v_prime_c,
            self.ratio,
            self.ratio_stderr,
            self.select_prob,
            self.select_prob_stderr,
            self.n_selected,
            self.n_failed,
            self.n_events
        )
    }
}

/// Report for a batch of already-analysed events.
pub fn report_from_events(cfg: &ExperimentConfig, events: &[EventRecord]) -> CliResult<EstimationReport> {
    estimation_error(events)?;
    let summary = RunSummary::from_events(events);
    let v_prime_c = classical_limit(cfg.v, cfg.r)?.v_prime_c;
    EstimationReport::from_summary(cfg.echo()?, &summary, v_prime_c)
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_events(path: &Path, events: &[EventRecord]) -> CliResult<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_to_io(path, e))?;
    write_events_to(&mut wtr, events).map_err(|e| csv_to_io(path, e))?;
    wtr.flush().map_err(io_err(path))
}

pub fn events_to_csv(events: &[EventRecord]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    write_events_to(&mut wtr, events).expect("in-memory write");
    String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("ascii output")
}

fn write_events_to<W: std::io::Write>(wtr: &mut csv::Writer<W>, events: &[EventRecord]) -> csv::Result<()> {
    wtr.write_record(EVENT_HEADER)?;
    for e in events {
        wtr.write_record([
            fmt_f64(e.xi),
            fmt_f64(e.eta),
            fmt_f64(e.y_x),
            fmt_f64(e.y_p),
            e.selected.to_string(),
            fmt_opt(e.est_xi),
            fmt_opt(e.est_eta),
            fmt_opt(e.sq_err),
        ])?;
    }
    Ok(())
}

fn csv_to_io(path: &Path, e: csv::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    }
}

pub fn read_events(path: &Path) -> CliResult<Vec<EventRecord>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_events(&text)
}

pub fn parse_events(text: &str) -> CliResult<Vec<EventRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| CliError::Schema(e.to_string()))?.clone();
    if header.iter().ne(EVENT_HEADER) {
        return Err(CliError::Schema(format!(
            "expected header `{}`",
            EVENT_HEADER.join(",")
        )));
    }
    let mut events = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::Schema(e.to_string()))?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let num = |i: usize| {
            field(i)
                .parse::<f64>()
                .map_err(|_| CliError::Schema(format!("row {}: column `{}` is not a number", row + 1, EVENT_HEADER[i])))
        };
        let opt = |i: usize| {
            if field(i).is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        let selected = field(4)
            .parse::<bool>()
            .map_err(|_| CliError::Schema(format!("row {}: `selected` must be true/false", row + 1)))?;
        events.push(EventRecord {
            xi: num(0)?,
            eta: num(1)?,
            y_x: num(2)?,
            y_p: num(3)?,
            selected,
            est_xi: opt(5)?,
            est_eta: opt(6)?,
            sq_err: opt(7)?,
        });
    }
    Ok(events)
}

pub struct SimulateOutput {
    pub events: Vec<EventRecord>,
    pub report: EstimationReport,
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> CliResult<SimulateOutput> {
    let events = run_experiment(&cfg.run_config()?)?;
    let report = report_from_events(cfg, &events)?;
    Ok(SimulateOutput { events, report })
}

/// Re-runs selection and estimation on stored events, optionally retargeting
/// the prior variance downwards from the configured `cfg.v`.
pub fn cmd_analyze(
    cfg: &ExperimentConfig,
    events: &[EventRecord],
    v: Option<f64>,
    r: Option<f64>,
) -> CliResult<EstimationReport> {
    let mut target = cfg.clone();
    target.v = v.unwrap_or(cfg.v);
    target.r = r.unwrap_or(cfg.r);
    let prior = PriorModel::new(target.v)?;
    let kernel = build_likelihood(&cfg.effective_probe()?, &cfg.effective_ancilla()?)?;
    let pool: Vec<EventRecord> = if target.v == cfg.v {
        events.to_vec()
    } else {
        retarget_variance(events, &kernel, cfg.v, target.v, cfg.seed)?
    };
    let analysed: Vec<EventRecord> = pool
        .par_iter()
        .map(|e| e.reanalyze(&prior, &kernel, target.r))
        .collect();
    report_from_events(&target, &analysed)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub v: f64,
    pub r: f64,
    pub probe: String,
    pub ancilla: String,
    pub v_prime: f64,
    pub v_prime_c: f64,
    pub ratio: f64,
    pub select_prob: f64,
    pub mc: Option<McColumns>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McColumns {
    pub n_events: u64,
    pub n_selected: u64,
    pub v_prime: f64,
    pub v_prime_stderr: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
    pub select_prob: f64,
    pub select_prob_stderr: f64,
}

fn row_seed(seed: u64, row: usize) -> u64 {
    seed ^ (row as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One row per sweep value, in input order. `mc` adds a Monte-Carlo replay per row.
pub fn cmd_sweep(spec: &SweepSpec, mc: Option<u64>) -> CliResult<Vec<SweepRow>> {
    spec.values
        .par_iter()
        .enumerate()
        .map(|(i, &value)| {
            let cfg = spec.config_at(value);
            let run = cfg.run_config()?;
            let prior = PriorModel::new(cfg.v)?;
            let kernel = build_likelihood(&run.probe, &run.ancilla)?;
            let quad = expected_error_quadrature(&prior, &kernel, cfg.r)?;
            let v_prime_c = classical_limit(cfg.v, cfg.r)?.v_prime_c;
            let mc = match mc.filter(|&n| n > 0) {
                Some(n) => {
                    let summary = run_summary(&RunConfig {
                        n_events: n,
                        seed: row_seed(cfg.seed, i),
                        ..run.clone()
                    })?;
                    let err = summary.error.ok_or(Error::NoEvents)?;
                    Some(McColumns {
                        n_events: n,
                        n_selected: summary.n_selected,
                        v_prime: err.v_prime,
                        v_prime_stderr: err.stderr,
                        ratio: err.v_prime / v_prime_c,
                        ratio_stderr: err.stderr / v_prime_c,
                        select_prob: summary.select_prob(),
                        select_prob_stderr: summary.select_prob_stderr(),
                    })
                }
                None => None,
            };
            Ok(SweepRow {
                axis_value: value,
                v: cfg.v,
                r: cfg.r,
                probe: run.probe.to_string(),
                ancilla: run.ancilla.to_string(),
                v_prime: quad.v_prime,
                v_prime_c,
                ratio: quad.v_prime / v_prime_c,
                select_prob: quad.select_prob,
                mc,
            })
        })
        .collect()
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "axis_value,v,r,probe,ancilla,v_prime,v_prime_c,ratio,select_prob,mc_n_events,\
mc_n_selected,mc_v_prime,mc_v_prime_stderr,mc_ratio,mc_ratio_stderr,mc_select_prob,mc_select_prob_stderr\n",
    );
    for row in rows {
        let _ = write!(
            out,
            "{},{},{},\"{}\",\"{}\",{},{},{},{}",
            row.axis_value,
            row.v,
            row.r,
            row.probe,
            row.ancilla,
            row.v_prime,
            row.v_prime_c,
            row.ratio,
            row.select_prob
        );
        match &row.mc {
            Some(m) => {
                let _ = writeln!(
                    out,
                    ",{},{},{},{},{},{},{},{}",
                    m.n_events,
                    m.n_selected,
                    m.v_prime,
                    m.v_prime_stderr,
                    m.ratio,
                    m.ratio_stderr,
                    m.select_prob,
                    m.select_prob_stderr
                );
            }
            None => out.push_str(",,,,,,,,\n"),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileOptions {
    pub max_radius: f64,
    pub bins: usize,
    pub samples: u64,
}

impl ProfileOptions {
    pub fn from_map(map: &BTreeMap<String, String>) -> CliResult<Self> {
        let opts = Self {
            max_radius: get_parsed(map, "max_radius")?.unwrap_or(3.0),
            bins: get_parsed(map, "bins")?.unwrap_or(30),
            samples: get_parsed(map, "samples")?.unwrap_or(1_000_000),
        };
        if !(opts.max_radius > 0.0) || opts.bins == 0 {
            return Err(CliError::Usage("profile needs max_radius > 0 and bins >= 1".into()));
        }
        Ok(opts)
    }
}

/// One annulus `[r_lo, r_hi)` of the zero-displacement outcome distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub r_lo: f64,
    pub r_hi: f64,
    pub radius: f64,
    /// Model density at the bin centre.
    pub model_density: f64,
    /// Model density averaged over the annulus.
    pub model_bin_density: f64,
    pub hist_density: f64,
    pub hist_stderr: f64,
    pub count: u64,
}

/// Radial profile of `p(y | 0, 0)` with a binned Monte-Carlo histogram.
pub fn cmd_profile(cfg: &ExperimentConfig, opts: &ProfileOptions) -> CliResult<Vec<ProfileRow>> {
    let kernel = build_likelihood(&cfg.effective_probe()?, &cfg.effective_ancilla()?)?;
    let profile = kernel.outcome_profile();
    let sampler = OutcomeSampler::new(&kernel)?;
    let width = opts.max_radius / opts.bins as f64;

    let bin_of = |i: u64| {
        let mut rng = event_rng(cfg.seed, i);
        let y = sample_outcome(&sampler, Displacement::new(0.0, 0.0), &mut rng);
        let rho = y.radius_squared().sqrt();
        ((rho / width) as usize).min(opts.bins)
    };
    let counts = (0..opts.samples)
        .into_par_iter()
        .fold(
            || vec![0u64; opts.bins + 1],
            |mut acc, i| {
                acc[bin_of(i)] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; opts.bins + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    let rule = GaussLegendre::new(16.try_into().expect("nonzero"));
    let n = opts.samples as f64;
    Ok((0..opts.bins)
        .map(|b| {
            let r_lo = b as f64 * width;
            let r_hi = r_lo + width;
            let (t_lo, t_hi) = (r_lo * r_lo, r_hi * r_hi);
            let area = std::f64::consts::PI * (t_hi - t_lo);
            let model_bin_density = rule.integrate(t_lo, t_hi, |t| profile.value_at_s(t)) / (t_hi - t_lo);
            let count = counts[b];
            let frac = count as f64 / n;
            let radius = 0.5 * (r_lo + r_hi);
            ProfileRow {
                r_lo,
                r_hi,
                radius,
                model_density: profile.value_at_s(radius * radius),
                model_bin_density,
                hist_density: frac / area,
                hist_stderr: (frac * (1.0 - frac) / n).sqrt() / area,
                count,
            }
        })
        .collect())
}

pub fn profile_to_csv(rows: &[ProfileRow]) -> String {
    let mut out = String::from("r_lo,r_hi,radius,model_density,model_bin_density,hist_density,hist_stderr,count\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.r_lo, r.r_hi, r.radius, r.model_density, r.model_bin_density, r.hist_density, r.hist_stderr, r.count
        );
    }
    out
}

#[derive(Debug, Parser)]
#[command(
    name = "dhest",
    version,
    about = "Single-shot displacement estimation with single photons"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an experiment; writes events.csv, report.csv and report.json into --out.
    Simulate(SimulateArgs),
    /// Tabulate v' / v'_C along one axis by quadrature, with optional Monte Carlo.
    Sweep(SweepArgs),
    /// Radial profile of the outcome distribution at zero displacement.
    Profile(ProfileArgs),
    /// Re-analyse a stored event file.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub v: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Monte-Carlo events per row.
    #[arg(long)]
    pub mc: Option<u64>,
    #[arg(long)]
    pub v: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Number of simulated outcomes for the histogram.
    #[arg(long)]
    pub mc: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub v: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
}

fn experiment(
    common: &CommonArgs,
    v: Option<f64>,
    r: Option<f64>,
) -> CliResult<(BTreeMap<String, String>, ExperimentConfig)> {
    let map = load_config(&common.config)?;
    let mut cfg = ExperimentConfig::from_map(&map)?;
    if let Some(v) = v {
        cfg.v = v;
    }
    if let Some(r) = r {
        cfg.r = r;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.check()?;
    Ok((map, cfg))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serialisable report") + "\n"
}

/// Writes `table` to `out` (plus a `.json` sibling), or prints it.
fn emit_table<T: Serialize>(out: Option<&Path>, csv: &str, rows: &T) -> CliResult<()> {
    match out {
        Some(path) => {
            write_file(path, csv)?;
            write_file(&path.with_extension("json"), &json(rows))
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(args) => {
            let (_, cfg) = experiment(&args.common, args.v, args.r)?;
            let output = cmd_simulate(&cfg)?;
            if let Some(dir) = &args.common.out {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
                write_events(&dir.join("events.csv"), &output.events)?;
                write_file(&dir.join("report.csv"), &output.report.to_csv())?;
                write_file(&dir.join("report.json"), &json(&output.report))?;
            }
            print!("{}", json(&output.report));
        }
        Command::Sweep(args) => {
            let (map, _) = experiment(&args.common, args.v, args.r)?;
            let mut spec = SweepSpec::from_map(&map)?;
            if let Some(v) = args.v {
                spec.fixed.v = v;
            }
            if let Some(r) = args.r {
                spec.fixed.r = r;
            }
            if let Some(seed) = args.common.seed {
                spec.fixed.seed = seed;
            }
            let mc = args.mc.or(get_parsed(&map, "mc")?);
            let rows = cmd_sweep(&spec, mc)?;
            emit_table(args.common.out.as_deref(), &sweep_to_csv(&rows), &rows)?;
        }
        Command::Profile(args) => {
            let (map, cfg) = experiment(&args.common, None, None)?;
            let mut opts = ProfileOptions::from_map(&map)?;
            if let Some(n) = args.mc {
                opts.samples = n;
            }
            let rows = cmd_profile(&cfg, &opts)?;
            emit_table(args.common.out.as_deref(), &profile_to_csv(&rows), &rows)?;
        }
        Command::Analyze(args) => {
            let (_, cfg) = experiment(&args.common, None, None)?;
            let events = read_events(&args.events)?;
            let report = cmd_analyze(&cfg, &events, args.v, args.r)?;
            if let Some(path) = &args.common.out {
                write_file(path, &report.to_csv())?;
                write_file(&path.with_extension("json"), &json(&report))?;
            }
            print!("{}", json(&report));
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const IMPERFECT: &str = "0:0.25,1:0.73,2:0.02";

    fn cfg_text(extra: &str) -> String {
        format!("probe = {IMPERFECT}\nancilla = {IMPERFECT}\nv = 0.34\nr = 0.2\nseed = 5\n{extra}")
    }

    #[test]
    fn parses_config() {
        let map = parse_key_values(&cfg_text("n_events = 100 # trailing comment\n")).unwrap();
        let cfg = ExperimentConfig::from_map(&map).unwrap();
        assert_eq!(cfg.n_events, 100);
        assert_eq!(cfg.probe, IMPERFECT.parse().unwrap());
        assert_eq!(cfg.seed, 5);
        assert!(parse_key_values("bogus = 1").is_err());
        assert!(parse_key_values("v = 1\nv = 2").is_err());
        assert!(parse_key_values("v 1").is_err());
        let map = parse_key_values(&cfg_text("n_events = 0\n")).unwrap();
        assert_eq!(ExperimentConfig::from_map(&map).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn loss_keys_compose_per_arm() {
        let map = parse_key_values("probe = photon\nancilla = photon\nloss = 0.3\nancilla_loss = 0.5").unwrap();
        let cfg = ExperimentConfig::from_map(&map).unwrap();
        assert_eq!(cfg.effective_probe().unwrap().probability(0), 0.3);
        assert_eq!(cfg.effective_ancilla().unwrap().probability(0), 0.5);
    }

    #[test]
    fn sweep_spec_validation() {
        let map = parse_key_values(&cfg_text("axis = loss\nvalues = 0.1, 0.5")).unwrap();
        let spec = SweepSpec::from_map(&map).unwrap();
        assert_eq!(spec.values, vec![0.1, 0.5]);
        assert_eq!(spec.config_at(0.5).probe_loss, 0.5);
        for bad in [
            "axis = loss\nvalues = 1.5",
            "axis = v\nvalues = -1",
            "axis = r",
            "axis = speed\nvalues = 1",
        ] {
            let map = parse_key_values(&cfg_text(bad)).unwrap();
            assert!(SweepSpec::from_map(&map).is_err(), "{bad}");
        }
    }

    #[test]
    fn events_round_trip_bit_exact() {
        let cfg = ExperimentConfig::from_map(&parse_key_values(&cfg_text("n_events = 3000")).unwrap()).unwrap();
        let events = run_experiment(&cfg.run_config().unwrap()).unwrap();
        let text = events_to_csv(&events);
        assert!(text.starts_with("xi,eta,y_x,y_p,selected,est_xi,est_eta,sq_err\n"));
        let back = parse_events(&text).unwrap();
        assert_eq!(back.len(), events.len());
        for (a, b) in events.iter().zip(&back) {
            assert_eq!(a.xi.to_bits(), b.xi.to_bits());
            assert_eq!(a.y_p.to_bits(), b.y_p.to_bits());
            assert_eq!(a.sq_err.map(f64::to_bits), b.sq_err.map(f64::to_bits));
        }
        assert_eq!(&back, &events);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let err = parse_events("xi,eta,y\n1,2,3\n").unwrap_err();
        assert!(matches!(err, CliError::Schema(_)));
        assert_eq!(err.exit_code(), 2);
        let err = parse_events("xi,eta,y_x,y_p,selected,est_xi,est_eta,sq_err\n1,2,3,4,maybe,,,\n").unwrap_err();
        assert!(matches!(err, CliError::Schema(_)));
    }

    #[test]
    fn degenerate_selection_exit_code() {
        let mut cfg = ExperimentConfig::from_map(&parse_key_values(&cfg_text("n_events = 50")).unwrap()).unwrap();
        cfg.r = 1e-9;
        let err = cmd_simulate(&cfg).err().unwrap();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn report_ratio_arithmetic() {
        let cfg = ExperimentConfig::from_map(&parse_key_values(&cfg_text("n_events = 20000")).unwrap()).unwrap();
        let out = cmd_simulate(&cfg).unwrap();
        let r = &out.report;
        assert!((r.ratio - r.v_prime / r.v_prime_c).abs() <= 1e-12);
        assert!(r.to_csv().lines().count() == 2);
    }
}
