//! Simulated replay of the experiment: random displacements from the prior,
//! dual-homodyne outcomes from the likelihood, post-selection and estimation.
//!
//! Every event draws from its own ChaCha8 stream keyed by `(seed, event index)`,
//! so results do not depend on how events are spread across worker threads.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    build_likelihood, mean_and_stderr, post_select, posterior_mean, Displacement, ErrorEstimate, LikelihoodKernel,
    Outcome, PriorModel,
};
use crate::wigner::{PhotonMixture, RadialPolyGaussian};

const ENVELOPE_SAFETY: f64 = 1.1;
const ENVELOPE_GRID: usize = 4096;
const RETARGET_DOMAIN: u64 = 0x5245_5441_5247_4554;
const SUMMARY_CHUNK: u64 = 1 << 16;

/// Deterministic per-event random stream.
pub fn event_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `(ξ, η)` i.i.d. normal with per-axis variance `v/2`.
pub fn sample_displacement<R: Rng + ?Sized>(prior: &PriorModel, rng: &mut R) -> Displacement {
    let sigma = prior.per_axis_variance().sqrt();
    let xi: f64 = rng.sample(StandardNormal);
    let eta: f64 = rng.sample(StandardNormal);
    Displacement::new(sigma * xi, sigma * eta)
}

/// Exact rejection sampler for `p(y | d)`.
///
/// `s = |√2 y - d|²` has density `π P(s) e^{-λs}`; proposals are exponential
/// with rate `λ' ≤ λ` under the envelope `π c e^{-λ's}`.
#[derive(Debug, Clone)]
pub struct OutcomeSampler {
    kernel: RadialPolyGaussian,
    rate: f64,
    bound: f64,
}

impl OutcomeSampler {
    pub fn new(k: &LikelihoodKernel) -> Result<Self> {
        let kernel = k.kernel().clone();
        let lambda = kernel.lambda();
        let degree = kernel.degree();
        let fractions: &[f64] = if degree == 0 {
            &[1.0]
        } else {
            &[0.95, 0.9, 0.85, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2]
        };

        let mut best: Option<(f64, f64, f64)> = None;
        for &q in fractions {
            let rate = lambda * q;
            let bound = envelope_bound(&kernel, lambda - rate)?;
            let acceptance = rate / (PI * bound);
            if best.is_none_or(|(_, _, a)| acceptance > a) {
                best = Some((rate, bound, acceptance));
            }
        }
        let (rate, bound, _) = best.expect("at least one candidate rate");
        Ok(Self { kernel, rate, bound })
    }

    /// Expected fraction of proposals accepted.
    pub fn acceptance_rate(&self) -> f64 {
        self.rate * self.kernel.integral() / (PI * self.bound)
    }

    fn tilted(&self, s: f64) -> f64 {
        self.kernel.polynomial(s) * (-(self.kernel.lambda() - self.rate) * s).exp()
    }

    /// Draws `u = √2 y - d` from the kernel.
    pub fn sample_kernel<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let s = loop {
            let e: f64 = rng.sample(Exp1);
            let s = e / self.rate;
            let u: f64 = rng.random();
            if u * self.bound < self.tilted(s) {
                break s;
            }
        };
        let theta = 2.0 * PI * rng.random::<f64>();
        let rho = s.sqrt();
        (rho * theta.cos(), rho * theta.sin())
    }
}

/// `c ≥ sup_{s≥0} P(s) e^{-γ s}`, grid maximum inflated by the safety factor.
///
/// The grid is extended until `Σ|c_k| s^k e^{-γs}`, which is decreasing past
/// `deg/γ`, falls under the envelope.
fn envelope_bound(kernel: &RadialPolyGaussian, gamma: f64) -> Result<f64> {
    let degree = kernel.degree();
    let tilted = |s: f64| kernel.polynomial(s) * (-gamma * s).exp();
    if degree == 0 {
        let c0 = kernel.coeffs()[0];
        if !(c0 > 0.0) {
            return Err(Error::Envelope("kernel is not positive".into()));
        }
        return Ok(ENVELOPE_SAFETY * c0);
    }
    if gamma <= 0.0 {
        return Err(Error::Envelope("polynomial kernel needs a slower proposal rate".into()));
    }
    let tail = |s: f64| {
        kernel
            .coeffs()
            .iter()
            .enumerate()
            .map(|(k, c)| c.abs() * s.powi(k as i32))
            .sum::<f64>()
            * (-gamma * s).exp()
    };
    let mut s_max = (degree as f64 / gamma).max(1.0);
    loop {
        let step = s_max / ENVELOPE_GRID as f64;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..=ENVELOPE_GRID {
            let g = tilted(i as f64 * step);
            lo = lo.min(g);
            hi = hi.max(g);
        }
        if !(hi > 0.0) || lo < -1e-12 * hi {
            return Err(Error::Envelope(format!("kernel polynomial is negative (min {lo:e})")));
        }
        let bound = ENVELOPE_SAFETY * hi;
        if tail(s_max) <= bound {
            return Ok(bound);
        }
        s_max *= 2.0;
        if s_max > 1e6 {
            return Err(Error::Envelope("tail bound did not converge".into()));
        }
    }
}

pub fn sample_outcome<R: Rng + ?Sized>(sampler: &OutcomeSampler, d: Displacement, rng: &mut R) -> Outcome {
    let (ux, up) = sampler.sample_kernel(rng);
    Outcome::new((ux + d.xi) / SQRT_2, (up + d.eta) / SQRT_2)
}

/// One simulated shot. Estimates are present only for selected events whose
/// posterior was well defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub xi: f64,
    pub eta: f64,
    pub y_x: f64,
    pub y_p: f64,
    pub selected: bool,
    pub est_xi: Option<f64>,
    pub est_eta: Option<f64>,
    pub sq_err: Option<f64>,
}

impl EventRecord {
    pub fn displacement(&self) -> Displacement {
        Displacement::new(self.xi, self.eta)
    }

    pub fn outcome(&self) -> Outcome {
        Outcome::new(self.y_x, self.y_p)
    }

    /// Recomputes selection and estimates for a prior and radius.
    pub fn reanalyze(&self, prior: &PriorModel, kernel: &LikelihoodKernel, r: f64) -> Self {
        let selected = post_select(self.outcome(), r);
        let mut out = Self {
            selected,
            est_xi: None,
            est_eta: None,
            sq_err: None,
            ..self.clone()
        };
        if selected {
            if let Ok(summary) = posterior_mean(prior, kernel, self.outcome()) {
                let ex = self.xi - summary.mean_xi;
                let ep = self.eta - summary.mean_eta;
                out.est_xi = Some(summary.mean_xi);
                out.est_eta = Some(summary.mean_eta);
                out.sq_err = Some(ex * ex + ep * ep);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub v: f64,
    pub r: f64,
    pub probe: PhotonMixture,
    pub ancilla: PhotonMixture,
    pub n_events: u64,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v.is_finite() && self.v > 0.0) {
            return Err(Error::Domain(format!("v must be positive, got {}", self.v)));
        }
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(Error::Domain(format!("r must be nonnegative, got {}", self.r)));
        }
        if self.n_events == 0 {
            return Err(Error::Domain("n_events must be at least 1".into()));
        }
        Ok(())
    }
}

struct Simulation {
    prior: PriorModel,
    kernel: LikelihoodKernel,
    sampler: OutcomeSampler,
    r: f64,
    seed: u64,
}

impl Simulation {
    fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let prior = PriorModel::new(cfg.v)?;
        let kernel = build_likelihood(&cfg.probe, &cfg.ancilla)?;
        let sampler = OutcomeSampler::new(&kernel)?;
        Ok(Self {
            prior,
            kernel,
            sampler,
            r: cfg.r,
            seed: cfg.seed,
        })
    }

    fn event(&self, index: u64) -> EventRecord {
        let mut rng = event_rng(self.seed, index);
        let d = sample_displacement(&self.prior, &mut rng);
        let y = sample_outcome(&self.sampler, d, &mut rng);
        let raw = EventRecord {
            xi: d.xi,
            eta: d.eta,
            y_x: y.y_x,
            y_p: y.y_p,
            selected: false,
            est_xi: None,
            est_eta: None,
            sq_err: None,
        };
        raw.reanalyze(&self.prior, &self.kernel, self.r)
    }
}

pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<EventRecord>> {
    let sim = Simulation::new(cfg)?;
    Ok((0..cfg.n_events).into_par_iter().map(|i| sim.event(i)).collect())
}

/// Aggregate statistics of a run without keeping every record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_events: u64,
    pub n_selected: u64,
    /// Selected events whose posterior was degenerate.
    pub n_failed: u64,
    pub error: Option<ErrorEstimate>,
}

impl RunSummary {
    pub fn from_events(events: &[EventRecord]) -> Self {
        let n_selected = events.iter().filter(|e| e.selected).count() as u64;
        let errors: Vec<f64> = events.iter().filter(|e| e.selected).filter_map(|e| e.sq_err).collect();
        Self::from_errors(events.len() as u64, n_selected, &errors)
    }

    fn from_errors(n_events: u64, n_selected: u64, errors: &[f64]) -> Self {
        let error = (!errors.is_empty()).then(|| mean_and_stderr(errors));
        Self {
            n_events,
            n_selected,
            n_failed: n_selected - errors.len() as u64,
            error,
        }
    }

    pub fn select_prob(&self) -> f64 {
        self.n_selected as f64 / self.n_events as f64
    }

    /// Binomial standard error of the selection fraction.
    pub fn select_prob_stderr(&self) -> f64 {
        let p = self.select_prob();
        (p * (1.0 - p) / self.n_events as f64).sqrt()
    }
}

/// Same events as [`run_experiment`], reduced on the fly.
pub fn run_summary(cfg: &RunConfig) -> Result<RunSummary> {
    let sim = Simulation::new(cfg)?;
    let n_chunks = cfg.n_events.div_ceil(SUMMARY_CHUNK);
    let chunks: Vec<(u64, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * SUMMARY_CHUNK;
            let end = (start + SUMMARY_CHUNK).min(cfg.n_events);
            let mut selected = 0;
            let mut errors = Vec::new();
            for i in start..end {
                let e = sim.event(i);
                if e.selected {
                    selected += 1;
                    errors.extend(e.sq_err);
                }
            }
            (selected, errors)
        })
        .collect();
    let n_selected = chunks.iter().map(|(n, _)| n).sum();
    let errors: Vec<f64> = chunks.into_iter().flat_map(|(_, e)| e).collect();
    Ok(RunSummary::from_errors(cfg.n_events, n_selected, &errors))
}

/// Rejection-resamples events so surviving displacements follow the prior
/// with `v_target`, then recomputes estimates under that prior.
///
/// Acceptance is `exp(-|d|² (1/v_target - 1/v_source))`.
pub fn retarget_variance(
    events: &[EventRecord],
    kernel: &LikelihoodKernel,
    v_source: f64,
    v_target: f64,
    seed: u64,
) -> Result<Vec<EventRecord>> {
    PriorModel::new(v_source)?;
    let target = PriorModel::new(v_target)?;
    if v_target > v_source {
        return Err(Error::UnsupportedDirection {
            source_v: v_source,
            target_v: v_target,
        });
    }
    let rate = 1.0 / v_target - 1.0 / v_source;
    let kept: Vec<Option<EventRecord>> = events
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let mut rng = event_rng(seed ^ RETARGET_DOMAIN, i as u64);
            let u: f64 = rng.random();
            let accept = (-(e.xi * e.xi + e.eta * e.eta) * rate).exp();
            (u < accept).then(|| {
                let mut out = EventRecord {
                    est_xi: None,
                    est_eta: None,
                    sq_err: None,
                    ..e.clone()
                };
                if e.selected {
                    if let Ok(summary) = posterior_mean(&target, kernel, e.outcome()) {
                        let ex = e.xi - summary.mean_xi;
                        let ep = e.eta - summary.mean_eta;
                        out.est_xi = Some(summary.mean_xi);
                        out.est_eta = Some(summary.mean_eta);
                        out.sq_err = Some(ex * ex + ep * ep);
                    }
                }
                out
            })
        })
        .collect();
    Ok(kept.into_iter().flatten().collect())
}
