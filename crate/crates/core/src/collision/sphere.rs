//! Quadrature rules on the unit sphere S^{d-1} with total weight 1.
//!
//! The collision gain integrand is invariant under omega -> -omega (the
//! deflection c omega with c = (v - u) . omega does not change), so every
//! rule here keeps one representative per antipodal pair and doubles its
//! weight. This halves the work in the pair loops without any accuracy
//! loss.

use crate::error::{Error, Result};
use crate::numerics::gauss_legendre;

/// Antipodally reduced sphere rule: points on one half of S^{d-1} whose
/// (doubled) weights sum to 1.
///
/// * d = 2: `6 * order` uniform points on the circle, offset half a step so
///   no point lies on a coordinate axis; the half with positive y survives.
/// * d = 3: Gauss-Legendre with `order` nodes in the polar cosine times
///   `2 * order` uniform azimuthal points; the upper hemisphere survives
///   (the equatorial ring, present for odd `order`, keeps its first half).
#[derive(Debug, Clone)]
pub struct SphereRule {
    dim: usize,
    order: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl SphereRule {
    /// Build the rule for `dim` in {2, 3} and `order >= 1`.
    pub fn new(dim: usize, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("sphere order must be >= 1".into()));
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        match dim {
            2 => {
                let m = 6 * order;
                for k in 0..m {
                    let alpha = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / m as f64;
                    let (s, c) = alpha.sin_cos();
                    if s > 0.0 {
                        points.push(c);
                        points.push(s);
                        weights.push(2.0 / m as f64);
                    }
                }
            }
            3 => {
                let (t_nodes, t_wts) = gauss_legendre(order);
                let m = 2 * order;
                for (a, &t) in t_nodes.iter().enumerate() {
                    if t < -1e-14 {
                        continue;
                    }
                    let equatorial = t.abs() <= 1e-14;
                    let t = if equatorial { 0.0 } else { t };
                    let sin_theta = (1.0 - t * t).sqrt();
                    // Weight for the integral mean over the sphere:
                    // dt / 2 times dphi / (2 pi), doubled for the dropped
                    // antipode.
                    let wq = 2.0 * (t_wts[a] / 2.0) / m as f64;
                    for k in 0..m {
                        let phi = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / m as f64;
                        if equatorial && phi >= std::f64::consts::PI {
                            continue;
                        }
                        points.push(sin_theta * phi.cos());
                        points.push(sin_theta * phi.sin());
                        points.push(t);
                        weights.push(wq);
                    }
                }
            }
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "sphere rule needs dim in {{2, 3}}, got {dim}"
                )))
            }
        }
        Ok(SphereRule {
            dim,
            order,
            points,
            weights,
        })
    }

    /// Sphere dimension parameter d (points live on S^{d-1}).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Rule order.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of retained points.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// True when the rule is empty (never, for valid parameters).
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Flat point coordinates, `dim` per point.
    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    /// Doubled weights; they sum to 1.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_sum_to_one_and_points_are_unit() {
        for (dim, order) in [(2usize, 1usize), (2, 3), (3, 1), (3, 3), (3, 4)] {
            let rule = SphereRule::new(dim, order).unwrap();
            let total: f64 = rule.weights().iter().sum();
            assert_relative_eq!(total, 1.0, max_relative = 1e-13);
            for k in 0..rule.len() {
                let p = &rule.points_flat()[k * dim..(k + 1) * dim];
                let norm2: f64 = p.iter().map(|x| x * x).sum();
                assert_relative_eq!(norm2, 1.0, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn integrates_even_quadratics_exactly() {
        // Mean of omega_a^2 over the sphere is 1/d; the reduced rule must
        // reproduce it because the integrand is antipodally even.
        for dim in [2usize, 3] {
            let rule = SphereRule::new(dim, 3).unwrap();
            for a in 0..dim {
                let mut acc = 0.0;
                for k in 0..rule.len() {
                    let p = &rule.points_flat()[k * dim..(k + 1) * dim];
                    acc += rule.weights()[k] * p[a] * p[a];
                }
                assert_relative_eq!(acc, 1.0 / dim as f64, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn quartic_moment_matches_closed_form() {
        // Mean of omega_1^4: 3/8 on the circle, 1/5 on the 2-sphere.
        let expected = [0.375, 0.2];
        for (i, dim) in [2usize, 3].into_iter().enumerate() {
            let rule = SphereRule::new(dim, 4).unwrap();
            let mut acc = 0.0;
            for k in 0..rule.len() {
                let p = &rule.points_flat()[k * dim..(k + 1) * dim];
                acc += rule.weights()[k] * p[0].powi(4);
            }
            assert_relative_eq!(acc, expected[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(SphereRule::new(1, 3).is_err());
        assert!(SphereRule::new(4, 3).is_err());
        assert!(SphereRule::new(3, 0).is_err());
    }
}
