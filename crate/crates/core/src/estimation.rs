//! Bayesian estimation of both displacement parameters from one dual-homodyne shot.
//!
//! The outcome density is `p(y | d) = 2 K(√2 y - d)` where `K` is the
//! convolution of the probe and ancilla Wigner functions; the factor 2 is the
//! Jacobian of `y -> √2 y`. With the isotropic Gaussian prior the posterior
//! integrand is a single Gaussian times a polynomial, so a polar
//! Gauss-Laguerre x trapezoid rule centred on the Gaussian part integrates it
//! exactly once the node counts exceed the polynomial degree.

use std::f64::consts::{PI, SQRT_2};

use gauss_quad::laguerre::GaussLaguerre;
use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montecarlo::EventRecord;
use crate::wigner::{convolve, mixture_wigner, PhotonMixture, QuadraturePoint, RadialPolyGaussian};

const KERNEL_MASS_TOL: f64 = 1e-9;
/// Default Gauss-Legendre order for integrals over the selection disk.
pub const DISK_NODES: usize = 48;

/// Isotropic Gaussian prior `1/(π v) exp(-(ξ² + η²)/v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorModel {
    v: f64,
}

impl PriorModel {
    pub fn new(v: f64) -> Result<Self> {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("prior variance must be positive, got {v}")));
        }
        Ok(Self { v })
    }

    /// Total variance over both components.
    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn per_axis_variance(&self) -> f64 {
        self.v / 2.0
    }

    pub fn density(&self, d: Displacement) -> f64 {
        (-(d.xi * d.xi + d.eta * d.eta) / self.v).exp() / (PI * self.v)
    }

    /// The prior as a unit-mass radial function of `(ξ, η)`.
    pub fn as_radial(&self) -> RadialPolyGaussian {
        RadialPolyGaussian::gaussian(1.0 / self.v).expect("positive variance")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    pub xi: f64,
    pub eta: f64,
}

impl Displacement {
    pub fn new(xi: f64, eta: f64) -> Self {
        Self { xi, eta }
    }
}

/// Dual-homodyne readings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub y_x: f64,
    pub y_p: f64,
}

impl Outcome {
    pub fn new(y_x: f64, y_p: f64) -> Self {
        Self { y_x, y_p }
    }

    pub fn radius_squared(&self) -> f64 {
        self.y_x * self.y_x + self.y_p * self.y_p
    }
}

/// Normalised probe/ancilla convolution kernel with its posterior quadrature rule.
#[derive(Debug, Clone)]
pub struct LikelihoodKernel {
    kernel: RadialPolyGaussian,
    radial_nodes: Vec<(f64, f64)>,
    angles: Vec<(f64, f64)>,
}

impl LikelihoodKernel {
    /// Wraps a unit-mass, nonnegative radial kernel.
    pub fn from_kernel(kernel: RadialPolyGaussian) -> Result<Self> {
        let mass = kernel.integral();
        if (mass - 1.0).abs() > KERNEL_MASS_TOL {
            return Err(Error::InvalidFunction(format!("kernel integrates to {mass}, not 1")));
        }
        let peak = (0..=2000)
            .map(|i| kernel.polynomial(i as f64 * 0.05).abs())
            .fold(0.0, f64::max);
        let negative = (0..=2000).any(|i| kernel.polynomial(i as f64 * 0.05) < -1e-12 * peak);
        if negative {
            return Err(Error::InvalidFunction("kernel takes negative values".into()));
        }

        // Second posterior moments make the integrand a trig polynomial of
        // degree 2D+2 in the angle and a polynomial of degree D+1 in ρ².
        let degree = kernel.degree();
        let n_radial = degree + 4;
        let n_angle = 2 * degree + 8;
        let laguerre = GaussLaguerre::new(
            n_radial.try_into().expect("nonzero"),
            0.0.try_into().expect("valid alpha"),
        );
        let radial_nodes = laguerre.as_node_weight_pairs().to_vec();
        let angles = (0..n_angle)
            .map(|j| {
                let theta = 2.0 * PI * j as f64 / n_angle as f64;
                (theta.cos(), theta.sin())
            })
            .collect();
        Ok(Self {
            kernel,
            radial_nodes,
            angles,
        })
    }

    pub fn kernel(&self) -> &RadialPolyGaussian {
        &self.kernel
    }

    /// `p(y | d) = 2 K(√2 y - d)`.
    pub fn density(&self, y: Outcome, d: Displacement) -> f64 {
        let u = QuadraturePoint::new(SQRT_2 * y.y_x - d.xi, SQRT_2 * y.y_p - d.eta);
        2.0 * self.kernel.evaluate(u)
    }

    /// Outcome density of `y` at zero displacement as a radial function of `y`.
    pub fn outcome_profile(&self) -> RadialPolyGaussian {
        let k = &self.kernel;
        let coeffs = k
            .coeffs()
            .iter()
            .enumerate()
            .map(|(j, c)| 2.0 * c * 2f64.powi(j as i32))
            .collect();
        RadialPolyGaussian::new(2.0 * k.lambda(), coeffs).expect("rescaled kernel is valid")
    }
}

pub fn build_likelihood(probe: &PhotonMixture, ancilla: &PhotonMixture) -> Result<LikelihoodKernel> {
    let kernel = convolve(&mixture_wigner(probe)?, &mixture_wigner(ancilla)?)?;
    LikelihoodKernel::from_kernel(kernel)
}

pub fn prior_density(prior: &PriorModel, d: Displacement) -> f64 {
    prior.density(d)
}

pub fn likelihood_density(k: &LikelihoodKernel, y: Outcome, d: Displacement) -> f64 {
    k.density(y, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean_xi: f64,
    pub mean_eta: f64,
    pub var_xi: f64,
    pub var_eta: f64,
    /// `ln p(y)`, the log of the outcome's marginal density.
    pub log_evidence: f64,
}

impl PosteriorSummary {
    pub fn total_variance(&self) -> f64 {
        self.var_xi + self.var_eta
    }

    pub fn mean(&self) -> Displacement {
        Displacement::new(self.mean_xi, self.mean_eta)
    }
}

/// Gaussian part of `prior(d) · p(y|d)`: `exp(-α |d - m|²) · exp(-β |z|²)`, `z = √2 y`.
struct GaussianFactor {
    alpha: f64,
    beta: f64,
    centre: (f64, f64),
    offset: (f64, f64),
}

impl GaussianFactor {
    fn new(prior: &PriorModel, k: &LikelihoodKernel, y: Outcome) -> Self {
        let lambda = k.kernel.lambda();
        let inv_v = 1.0 / prior.v;
        let alpha = inv_v + lambda;
        let beta = lambda * inv_v / alpha;
        let z = (SQRT_2 * y.y_x, SQRT_2 * y.y_p);
        let centre = (lambda * z.0 / alpha, lambda * z.1 / alpha);
        Self {
            alpha,
            beta,
            centre,
            offset: (z.0 - centre.0, z.1 - centre.1),
        }
    }
}

struct Moments {
    mass: f64,
    first: (f64, f64),
    second: (f64, f64),
}

fn integrate_moments(k: &LikelihoodKernel, g: &GaussianFactor) -> Moments {
    let mut mass = 0.0;
    let mut first = (0.0, 0.0);
    let mut second = (0.0, 0.0);
    for &(x, w) in &k.radial_nodes {
        let rho = (x / g.alpha).sqrt();
        for &(c, s) in &k.angles {
            let dx = rho * c;
            let dp = rho * s;
            let ux = g.offset.0 - dx;
            let up = g.offset.1 - dp;
            let weight = w * k.kernel.polynomial(ux * ux + up * up);
            mass += weight;
            first.0 += weight * dx;
            first.1 += weight * dp;
            second.0 += weight * dx * dx;
            second.1 += weight * dp * dp;
        }
    }
    Moments { mass, first, second }
}

/// Log of the polar-rule measure: `∫∫ d²δ = ½ ∫dt ∫dθ`, `t = x/α`.
fn log_measure(k: &LikelihoodKernel, g: &GaussianFactor) -> f64 {
    (0.5 / g.alpha * 2.0 * PI / k.angles.len() as f64).ln()
}

pub fn posterior_mean(prior: &PriorModel, k: &LikelihoodKernel, y: Outcome) -> Result<PosteriorSummary> {
    let g = GaussianFactor::new(prior, k, y);
    let m = integrate_moments(k, &g);
    if !(m.mass.is_finite() && m.mass > 0.0) {
        return Err(Error::DegeneratePosterior(format!(
            "evidence integral {} at outcome ({}, {})",
            m.mass, y.y_x, y.y_p
        )));
    }
    let shift = (m.first.0 / m.mass, m.first.1 / m.mass);
    let var_xi = (m.second.0 / m.mass - shift.0 * shift.0).max(0.0);
    let var_eta = (m.second.1 / m.mass - shift.1 * shift.1).max(0.0);
    let z2 = 2.0 * y.radius_squared();
    let log_evidence = (2.0 / (PI * prior.v)).ln() - g.beta * z2 + log_measure(k, &g) + m.mass.ln();
    Ok(PosteriorSummary {
        mean_xi: g.centre.0 + shift.0,
        mean_eta: g.centre.1 + shift.1,
        var_xi,
        var_eta,
        log_evidence,
    })
}

/// Normalised posterior density `p(d | y)`.
pub fn posterior_density(prior: &PriorModel, k: &LikelihoodKernel, y: Outcome, d: Displacement) -> Result<f64> {
    let summary = posterior_mean(prior, k, y)?;
    let joint = prior.density(d) * k.density(y, d);
    Ok(joint * (-summary.log_evidence).exp())
}

/// `y_x² + y_p² < r²`, boundary excluded.
pub fn post_select(y: Outcome, r: f64) -> bool {
    y.radius_squared() < r * r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub v_prime: f64,
    pub stderr: f64,
    pub n_selected: usize,
}

/// Mean of `(ξ-ξ̃)² + (η-η̃)²` over selected events that carry estimates.
pub fn estimation_error(events: &[EventRecord]) -> Result<ErrorEstimate> {
    let errors: Vec<f64> = events.iter().filter(|e| e.selected).filter_map(|e| e.sq_err).collect();
    if errors.is_empty() {
        return Err(Error::NoEvents);
    }
    Ok(mean_and_stderr(&errors))
}

pub(crate) fn mean_and_stderr(values: &[f64]) -> ErrorEstimate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let ss: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    ErrorEstimate {
        v_prime: mean,
        stderr,
        n_selected: n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedError {
    pub v_prime: f64,
    pub select_prob: f64,
}

/// Deterministic `v'` and selection probability for a selection disk of radius `r`.
///
/// Uses that the posterior-mean estimator's conditional MSE equals the
/// posterior variance, integrated over the disk with the marginal `p(y)`.
pub fn expected_error_quadrature(prior: &PriorModel, k: &LikelihoodKernel, r: f64) -> Result<ExpectedError> {
    expected_error_quadrature_with(prior, k, r, DISK_NODES)
}

pub fn expected_error_quadrature_with(
    prior: &PriorModel,
    k: &LikelihoodKernel,
    r: f64,
    nodes: usize,
) -> Result<ExpectedError> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Domain(format!("selection radius must be positive, got {r}")));
    }
    let rule = GaussLegendre::new(nodes.try_into().map_err(|_| Error::Domain("zero nodes".into()))?);
    // Radial symmetry: integrate over t = |y|² in [0, r²] with d²y = π dt.
    let r2 = r * r;
    let samples = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| {
            let t = 0.5 * r2 * (x + 1.0);
            let summary = posterior_mean(prior, k, Outcome::new(t.sqrt(), 0.0))?;
            Ok((0.5 * r2 * w, summary))
        })
        .collect::<Result<Vec<_>>>()?;
    let log_max = samples
        .iter()
        .map(|(_, s)| s.log_evidence)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut mass = 0.0;
    let mut weighted_var = 0.0;
    for (w, s) in &samples {
        let p = w * (s.log_evidence - log_max).exp();
        mass += p;
        weighted_var += p * s.total_variance();
    }
    let select_prob = PI * mass * log_max.exp();
    if !(select_prob >= 1e-12) {
        return Err(Error::DegenerateSelection(select_prob));
    }
    Ok(ExpectedError {
        v_prime: weighted_var / mass,
        select_prob,
    })
}
