//! Brute-force oracles shared by the integration suites. Nothing here calls
//! into the closed-form convolution or the polar posterior rule.

#![allow(dead_code)]

use dhest::estimation::{Displacement, LikelihoodKernel, Outcome, PriorModel};
use dhest::wigner::{QuadraturePoint, RadialPolyGaussian};

pub fn imperfect() -> dhest::wigner::PhotonMixture {
    dhest::wigner::PhotonMixture::new([(0, 0.25), (1, 0.73), (2, 0.02)]).unwrap()
}

/// `(f * g)(u)` by a uniform Riemann sum over `[-extent, extent]²`.
pub fn grid_convolve(f: &RadialPolyGaussian, g: &RadialPolyGaussian, u: (f64, f64), step: f64, extent: f64) -> f64 {
    let n = (2.0 * extent / step).round() as i64;
    let mut acc = 0.0;
    for i in 0..=n {
        let wx = -extent + i as f64 * step;
        for j in 0..=n {
            let wp = -extent + j as f64 * step;
            acc += f.evaluate(QuadraturePoint::new(wx, wp)) * g.evaluate(QuadraturePoint::new(u.0 - wx, u.1 - wp));
        }
    }
    acc * step * step
}

pub struct GridPosterior {
    pub evidence: f64,
    pub mean: (f64, f64),
    pub total_variance: f64,
}

/// Posterior moments by a Riemann sum of prior × likelihood on a square grid.
pub fn grid_posterior(prior: &PriorModel, k: &LikelihoodKernel, y: Outcome, step: f64, extent: f64) -> GridPosterior {
    let n = (2.0 * extent / step).round() as i64;
    let (mut z, mut mx, mut mp, mut m2) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..=n {
        let xi = -extent + i as f64 * step;
        for j in 0..=n {
            let eta = -extent + j as f64 * step;
            let d = Displacement::new(xi, eta);
            let w = prior.density(d) * k.density(y, d);
            z += w;
            mx += w * xi;
            mp += w * eta;
            m2 += w * (xi * xi + eta * eta);
        }
    }
    let mean = (mx / z, mp / z);
    GridPosterior {
        evidence: z * step * step,
        mean,
        total_variance: m2 / z - mean.0 * mean.0 - mean.1 * mean.1,
    }
}

pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (m, values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}
