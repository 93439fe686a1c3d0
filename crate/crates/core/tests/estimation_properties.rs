mod common;

use std::f64::consts::SQRT_2;

use common::{grid_posterior, imperfect};
use dhest::estimation::{
    build_likelihood, expected_error_quadrature, posterior_density, posterior_mean, Displacement, Outcome, PriorModel,
};
use dhest::wigner::{convolve, PhotonMixture};
use proptest::prelude::*;

#[test]
fn posterior_normalised_on_independent_grid() {
    let k = build_likelihood(&imperfect(), &imperfect()).unwrap();
    for (v, y) in [
        (0.34, (0.0, 0.0)),
        (0.13, (0.5, -0.3)),
        (1.2, (-2.0, 2.0)),
        (0.8, (3.0, 0.0)),
    ] {
        let prior = PriorModel::new(v).unwrap();
        let y = Outcome::new(y.0, y.1);
        let step = 0.025;
        let extent = 6.0;
        let n = (2.0 * extent / step) as i64;
        let summary = posterior_mean(&prior, &k, y).unwrap();
        let mut total = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let d = Displacement::new(-extent + i as f64 * step, -extent + j as f64 * step);
                total += prior.density(d) * k.density(y, d);
            }
        }
        let normalised = total * step * step * (-summary.log_evidence).exp();
        assert!((normalised - 1.0).abs() < 1e-6, "v={v}: {normalised}");

        let d = Displacement::new(summary.mean_xi, summary.mean_eta);
        let direct = posterior_density(&prior, &k, y, d).unwrap();
        assert!((direct - prior.density(d) * k.density(y, d) / (total * step * step)).abs() < 1e-6 * direct);
    }
}

#[test]
fn evidence_matches_prior_kernel_convolution() {
    let k = build_likelihood(&imperfect(), &PhotonMixture::single_photon()).unwrap();
    let prior = PriorModel::new(0.34).unwrap();
    let marginal = convolve(&prior.as_radial(), k.kernel()).unwrap();
    for y in [(0.0, 0.0), (0.3, 0.1), (1.5, -0.5)] {
        let s = posterior_mean(&prior, &k, Outcome::new(y.0, y.1)).unwrap();
        let p = 2.0 * marginal.value_at_s(2.0 * (y.0 * y.0 + y.1 * y.1));
        assert!((s.log_evidence - p.ln()).abs() < 1e-12);
    }
}

#[test]
fn moments_match_grid_oracle() {
    let k = build_likelihood(&imperfect(), &imperfect()).unwrap();
    for (v, y) in [(0.34, (0.05, 0.0)), (0.8, (0.4, -0.7)), (0.13, (1.0, 1.0))] {
        let prior = PriorModel::new(v).unwrap();
        let y = Outcome::new(y.0, y.1);
        let s = posterior_mean(&prior, &k, y).unwrap();
        let g = grid_posterior(&prior, &k, y, 0.01, 6.0);
        assert!((s.mean_xi - g.mean.0).abs() < 1e-9);
        assert!((s.mean_eta - g.mean.1).abs() < 1e-9);
        assert!((s.total_variance() - g.total_variance).abs() < 1e-9);
        assert!((s.log_evidence - g.evidence.ln()).abs() < 1e-9);
    }
}

#[test]
fn selection_probability_matches_grid() {
    let k = build_likelihood(&imperfect(), &imperfect()).unwrap();
    let prior = PriorModel::new(0.34).unwrap();
    let marginal = convolve(&prior.as_radial(), k.kernel()).unwrap();
    let r = 0.5;
    let step = 0.002;
    let n = (r / step) as i64;
    let mut total = 0.0;
    for i in -n..=n {
        for j in -n..=n {
            let y = (i as f64 * step, j as f64 * step);
            let s = y.0 * y.0 + y.1 * y.1;
            if s < r * r {
                total += 2.0 * marginal.value_at_s(2.0 * s);
            }
        }
    }
    let quad = expected_error_quadrature(&prior, &k, r).unwrap();
    assert!(((quad.select_prob - total * step * step) / quad.select_prob).abs() < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reflection_negates_mean(v in 0.05..2.0f64, yx in -2.0..2.0f64, yp in -2.0..2.0f64) {
        let k = build_likelihood(&imperfect(), &imperfect()).unwrap();
        let prior = PriorModel::new(v).unwrap();
        let a = posterior_mean(&prior, &k, Outcome::new(yx, yp)).unwrap();
        let b = posterior_mean(&prior, &k, Outcome::new(-yx, yp)).unwrap();
        prop_assert!((a.mean_xi + b.mean_xi).abs() < 1e-12);
        prop_assert!((a.mean_eta - b.mean_eta).abs() < 1e-12);
    }

    #[test]
    fn vacuum_matches_conjugate_gaussian(v in 0.01..5.0f64, yx in -3.0..3.0f64, yp in -3.0..3.0f64) {
        let vac = PhotonMixture::vacuum();
        let k = build_likelihood(&vac, &vac).unwrap();
        let s = posterior_mean(&PriorModel::new(v).unwrap(), &k, Outcome::new(yx, yp)).unwrap();
        let gain = v / (v + 2.0) * SQRT_2;
        prop_assert!((s.mean_xi - gain * yx).abs() < 1e-6);
        prop_assert!((s.mean_eta - gain * yp).abs() < 1e-6);
        prop_assert!((s.total_variance() - 2.0 * v / (v + 2.0)).abs() < 1e-6);
    }

    /// With a nearly flat prior the posterior mean tracks the outcome shift.
    #[test]
    fn wide_prior_equivariance(a in -1.0..1.0f64, b in -1.0..1.0f64, yx in -1.0..1.0f64, yp in -1.0..1.0f64) {
        let k = build_likelihood(&imperfect(), &imperfect()).unwrap();
        let prior = PriorModel::new(1e6).unwrap();
        let base = posterior_mean(&prior, &k, Outcome::new(yx, yp)).unwrap();
        let moved = posterior_mean(&prior, &k, Outcome::new(yx + a / SQRT_2, yp + b / SQRT_2)).unwrap();
        prop_assert!((moved.mean_xi - base.mean_xi - a).abs() < 1e-5);
        prop_assert!((moved.mean_eta - base.mean_eta - b).abs() < 1e-5);
    }
}
