//! Closed-form phase-space algebra for Fock-diagonal states.
//!
//! Conventions: `[x, p] = i`, so the vacuum has variance 1/2 per quadrature and
//! `W_0(x, p) = exp(-(x² + p²)) / π`. Every object handled here is radially
//! symmetric and of the form `exp(-λ s) · Σ_k c_k s^k` with `s = x² + p²`,
//! which is closed under convex combination and 2D convolution.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest Fock number with a tabulated Wigner function.
pub const MAX_FOCK: u32 = 4;
/// Largest polynomial degree a [`RadialPolyGaussian`] may carry.
pub const MAX_DEGREE: usize = 8;

const MIXTURE_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraturePoint {
    pub x: f64,
    pub p: f64,
}

impl QuadraturePoint {
    pub fn new(x: f64, p: f64) -> Self {
        Self { x, p }
    }

    pub fn radius_squared(&self) -> f64 {
        self.x * self.x + self.p * self.p
    }
}

/// Photon-number distribution of a Fock-diagonal state.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonMixture {
    weights: BTreeMap<u32, f64>,
}

impl PhotonMixture {
    /// Builds a mixture from `(photon number, probability)` pairs.
    ///
    /// Zero-probability entries are dropped.
    pub fn new<I>(weights: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        let mut map = BTreeMap::new();
        for (n, prob) in weights {
            if !prob.is_finite() || prob < 0.0 {
                return Err(Error::InvalidMixture(format!(
                    "probability {prob} for n={n} is not a nonnegative number"
                )));
            }
            if map.insert(n, prob).is_some() {
                return Err(Error::InvalidMixture(format!("photon number {n} listed twice")));
            }
        }
        map.retain(|_, prob| *prob > 0.0);
        let total: f64 = map.values().sum();
        if (total - 1.0).abs() > MIXTURE_SUM_TOL {
            return Err(Error::InvalidMixture(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { weights: map })
    }

    pub fn fock(n: u32) -> Self {
        Self {
            weights: BTreeMap::from([(n, 1.0)]),
        }
    }

    pub fn vacuum() -> Self {
        Self::fock(0)
    }

    pub fn single_photon() -> Self {
        Self::fock(1)
    }

    pub fn probability(&self, n: u32) -> f64 {
        self.weights.get(&n).copied().unwrap_or(0.0)
    }

    /// Nonzero components in increasing photon number.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.weights.iter().map(|(&n, &p)| (n, p))
    }

    pub fn max_photon_number(&self) -> u32 {
        self.weights.keys().next_back().copied().unwrap_or(0)
    }
}

impl fmt::Display for PhotonMixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(n, p)| format!("{n}:{p}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Parses `vacuum`, `single_photon`, or a list such as `0:0.25,1:0.73,2:0.02`.
impl FromStr for PhotonMixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "vacuum" => return Ok(Self::vacuum()),
            "single_photon" | "photon" => return Ok(Self::single_photon()),
            _ => {}
        }
        let mut pairs = Vec::new();
        for item in s.split(',').map(str::trim).filter(|item| !item.is_empty()) {
            let (n, prob) = item
                .split_once(':')
                .ok_or_else(|| Error::InvalidMixture(format!("expected `n:probability`, got `{item}`")))?;
            let n: u32 = n
                .trim()
                .parse()
                .map_err(|_| Error::InvalidMixture(format!("bad photon number `{n}`")))?;
            let prob: f64 = prob
                .trim()
                .parse()
                .map_err(|_| Error::InvalidMixture(format!("bad probability `{prob}`")))?;
            pairs.push((n, prob));
        }
        if pairs.is_empty() {
            return Err(Error::InvalidMixture("empty mixture".into()));
        }
        Self::new(pairs)
    }
}

/// `f(x, p) = exp(-λ s) · Σ_k c_k s^k` with `s = x² + p²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialPolyGaussian {
    lambda: f64,
    coeffs: Vec<f64>,
}

impl RadialPolyGaussian {
    pub fn new(lambda: f64, coeffs: Vec<f64>) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidFunction(format!("lambda must be positive, got {lambda}")));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidFunction("non-finite coefficient".into()));
        }
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        if coeffs.len() - 1 > MAX_DEGREE {
            return Err(Error::Unsupported(format!(
                "polynomial degree {} exceeds the cap of {MAX_DEGREE}",
                coeffs.len() - 1
            )));
        }
        Ok(Self { lambda, coeffs })
    }

    /// Unit-mass isotropic Gaussian `(λ/π) exp(-λ s)`.
    pub fn gaussian(lambda: f64) -> Result<Self> {
        Self::new(lambda, vec![lambda / PI])
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// The polynomial factor `Σ_k c_k s^k`, without the Gaussian.
    pub fn polynomial(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn value_at_s(&self, s: f64) -> f64 {
        (-self.lambda * s).exp() * self.polynomial(s)
    }

    pub fn evaluate(&self, pt: QuadraturePoint) -> f64 {
        self.value_at_s(pt.radius_squared())
    }

    /// `∫∫ f dx dp = π Σ_k c_k k! / λ^{k+1}`.
    pub fn integral(&self) -> f64 {
        let mut total = 0.0;
        let mut moment = 1.0 / self.lambda;
        for (k, &c) in self.coeffs.iter().enumerate() {
            if k > 0 {
                moment *= k as f64 / self.lambda;
            }
            total += c * moment;
        }
        PI * total
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lambda: self.lambda,
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }
}

/// Power-series coefficients of the Laguerre polynomial `L_n(t)`.
pub(crate) fn laguerre_coeffs(n: usize) -> Vec<f64> {
    let mut coeffs = Vec::with_capacity(n + 1);
    let mut term = 1.0;
    for k in 0..=n {
        if k > 0 {
            term *= -((n - k + 1) as f64) / ((k * k) as f64);
        }
        coeffs.push(term);
    }
    coeffs
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Wigner function of the Fock state `|n⟩`: `(-1)^n/π · exp(-s) · L_n(2s)`.
pub fn fock_wigner(n: u32) -> Result<RadialPolyGaussian> {
    if n > MAX_FOCK {
        return Err(Error::Unsupported(format!(
            "Fock state |{n}> (supported up to |{MAX_FOCK}>)"
        )));
    }
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let coeffs = laguerre_coeffs(n as usize)
        .into_iter()
        .enumerate()
        .map(|(k, c)| sign / PI * c * 2f64.powi(k as i32))
        .collect();
    RadialPolyGaussian::new(1.0, coeffs)
}

/// Convex combination of Fock Wigner functions.
pub fn mixture_wigner(mix: &PhotonMixture) -> Result<RadialPolyGaussian> {
    let mut coeffs = vec![0.0; mix.max_photon_number() as usize + 1];
    for (n, prob) in mix.iter() {
        let w = fock_wigner(n)?;
        for (acc, c) in coeffs.iter_mut().zip(w.coeffs()) {
            *acc += prob * c;
        }
    }
    RadialPolyGaussian::new(1.0, coeffs)
}

/// Pure-loss channel with the given loss fraction.
///
/// Each `|n⟩` becomes the binomial mixture `C(n,k) (1-loss)^k loss^(n-k)`.
pub fn apply_loss(mix: &PhotonMixture, loss: f64) -> Result<PhotonMixture> {
    if !(0.0..=1.0).contains(&loss) {
        return Err(Error::Domain(format!("loss must lie in [0, 1], got {loss}")));
    }
    let keep = 1.0 - loss;
    let mut out: BTreeMap<u32, f64> = BTreeMap::new();
    for (n, prob) in mix.iter() {
        let mut binom = 1.0;
        for k in 0..=n {
            if k > 0 {
                binom *= (n - k + 1) as f64 / k as f64;
            }
            let pk = binom * keep.powi(k as i32) * loss.powi((n - k) as i32);
            *out.entry(k).or_insert(0.0) += prob * pk;
        }
    }
    PhotonMixture::new(out)
}

/// Hankel-domain image of `f`: `F(Q) = π exp(-μ Q) Σ_m d_m Q^m`, `μ = 1/(4λ)`.
///
/// Returns `(μ, d)` with the leading `π` stripped.
fn fourier_image(f: &RadialPolyGaussian) -> (f64, Vec<f64>) {
    let lambda = f.lambda();
    let mu = 0.25 / lambda;
    let mut d = vec![0.0; f.coeffs().len()];
    for (k, &c) in f.coeffs().iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        // ∫_0^∞ s^k e^{-λs} J0(√(Qs)) ds = k! λ^{-k-1} e^{-Q/(4λ)} L_k(Q/(4λ))
        let scale = c * factorial(k) / lambda.powi(k as i32 + 1);
        for (m, l) in laguerre_coeffs(k).into_iter().enumerate() {
            d[m] += scale * l * mu.powi(m as i32);
        }
    }
    (mu, d)
}

/// Exact 2D convolution `(a * b)(u) = ∫∫ a(w) b(u - w) d²w`.
pub fn convolve(a: &RadialPolyGaussian, b: &RadialPolyGaussian) -> Result<RadialPolyGaussian> {
    let degree = a.degree() + b.degree();
    if degree > MAX_DEGREE {
        return Err(Error::Unsupported(format!(
            "convolution degree {degree} exceeds the cap of {MAX_DEGREE}"
        )));
    }
    let (mu_a, da) = fourier_image(a);
    let (mu_b, db) = fourier_image(b);
    let mu = mu_a + mu_b;
    let lambda = 0.25 / mu;

    let mut product = vec![0.0; degree + 1];
    for (i, x) in da.iter().enumerate() {
        for (j, y) in db.iter().enumerate() {
            product[i + j] += x * y;
        }
    }

    // Inverse transform: (1/4π²)·π·π² ∫ Q^m e^{-μQ} J0(√(SQ)) dQ = (π/4) m! μ^{-m-1} e^{-λS} L_m(λS)
    let mut coeffs = vec![0.0; degree + 1];
    for (m, &dm) in product.iter().enumerate() {
        if dm == 0.0 {
            continue;
        }
        let scale = 0.25 * PI * dm * factorial(m) / mu.powi(m as i32 + 1);
        for (j, l) in laguerre_coeffs(m).into_iter().enumerate() {
            coeffs[j] += scale * l * lambda.powi(j as i32);
        }
    }
    RadialPolyGaussian::new(lambda, coeffs)
}

pub fn evaluate(f: &RadialPolyGaussian, pt: QuadraturePoint) -> f64 {
    f.evaluate(pt)
}

/// Evaluates `f` at `(r, 0)` for each radius.
pub fn radial_profile(f: &RadialPolyGaussian, radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    radii
        .iter()
        .map(|&r| {
            if !(r >= 0.0) {
                return Err(Error::Domain(format!("radius must be nonnegative, got {r}")));
            }
            Ok((r, f.value_at_s(r * r)))
        })
        .collect()
}
