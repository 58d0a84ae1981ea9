//! Flat torus T^d with per-axis periods.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Periodic box [0, p_1) x ... x [0, p_d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Torus {
    periods: Vec<f64>,
}

impl Torus {
    pub fn new(periods: Vec<f64>) -> Result<Self> {
        if periods.is_empty() {
            return Err(Error::InvalidParameter("torus dimension must be >= 1".into()));
        }
        if periods.iter().any(|&p| !p.is_finite() || p <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "torus periods must be positive and finite, got {periods:?}"
            )));
        }
        Ok(Self { periods })
    }

    /// Unit torus [0,1)^d.
    pub fn unit(d: usize) -> Result<Self> {
        Self::new(vec![1.0; d])
    }

    pub fn dim(&self) -> usize {
        self.periods.len()
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    /// Wrap a point into the fundamental domain, coordinate-wise.
    pub fn wrap(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        for (xi, &p) in x.iter_mut().zip(&self.periods) {
            *xi = xi.rem_euclid(p);
            // rem_euclid can return exactly p when xi is a tiny negative number.
            if *xi >= p {
                *xi -= p;
            }
        }
    }

    pub fn wrapped(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        self.wrap(&mut y);
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_into_fundamental_domain() {
        let t = Torus::new(vec![1.0, 2.0]).unwrap();
        let mut x = [1.25, -0.5];
        t.wrap(&mut x);
        assert!((x[0] - 0.25).abs() < 1e-15);
        assert!((x[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn wrap_handles_negative_epsilon() {
        let t = Torus::unit(1).unwrap();
        let mut x = [-1e-18];
        t.wrap(&mut x);
        assert!(x[0] >= 0.0 && x[0] < 1.0);
    }

    #[test]
    fn rejects_bad_periods() {
        assert!(Torus::new(vec![]).is_err());
        assert!(Torus::new(vec![0.0]).is_err());
        assert!(Torus::new(vec![-1.0]).is_err());
    }
}
