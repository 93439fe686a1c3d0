//! Classical limit: the error reached by the same dual-homodyne scheme fed with vacuum.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimation::{build_likelihood, expected_error_quadrature, PriorModel};
use crate::wigner::PhotonMixture;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalLimit {
    pub v: f64,
    pub v_prime_c: f64,
}

/// `v'_C` by quadrature with vacuum probe and ancilla. Independent of `r`.
pub fn classical_limit(v: f64, r: f64) -> Result<ClassicalLimit> {
    let prior = PriorModel::new(v)?;
    let vacuum = PhotonMixture::vacuum();
    let kernel = build_likelihood(&vacuum, &vacuum)?;
    let e = expected_error_quadrature(&prior, &kernel, r)?;
    Ok(ClassicalLimit {
        v,
        v_prime_c: e.v_prime,
    })
}

/// `2v / (v + 2)`.
pub fn classical_limit_closed_form(v: f64) -> f64 {
    2.0 * v / (v + 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_closed_form() {
        let c = classical_limit(0.34, 0.2).unwrap();
        assert!((c.v_prime_c - 0.29060).abs() < 1e-5);
        assert!((c.v_prime_c - classical_limit_closed_form(0.34)).abs() < 1e-12);
    }

    #[test]
    fn small_prior_limit() {
        for v in [1e-3, 1e-5] {
            let c = classical_limit(v, 0.2).unwrap();
            assert!(c.v_prime_c < v && c.v_prime_c > 0.0);
            assert!((c.v_prime_c / v - 1.0).abs() < v);
        }
    }

    #[test]
    fn independent_of_radius() {
        let a = classical_limit(0.34, 0.2).unwrap().v_prime_c;
        let b = classical_limit(0.34, 0.7).unwrap().v_prime_c;
        assert!((a - b).abs() < 1e-9);
        for v in [0.05, 0.5, 3.0] {
            let values: Vec<f64> = [0.05, 0.3, 1.0, 2.0]
                .iter()
                .map(|&r| classical_limit(v, r).unwrap().v_prime_c)
                .collect();
            for x in &values {
                assert!((x - values[0]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn strictly_increasing_and_below_prior() {
        let mut last = 0.0;
        for i in 1..60 {
            let v = 0.05 * i as f64;
            let c = classical_limit(v, 0.5).unwrap().v_prime_c;
            assert!(c > last && c < v);
            last = c;
        }
        assert!(classical_limit(0.0, 0.2).is_err());
    }
}
