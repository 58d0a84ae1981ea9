//! Hamiltonian characteristics on the torus and their variational flow.
//!
//! The characteristics of H(x, v) = |v|^2/2 + phi(x) are integrated with
//! velocity-Verlet (symplectic, time-reversible). The tangent blocks
//! Jxv = dX/dv and Jvv = dV/dv ride along with the same splitting, starting
//! from Jxv = 0, Jvv = I at the anchor time, so det Jxv tracks conjugate
//! points of the backward flow. Positions are wrapped into the fundamental
//! domain; the tangent dynamics only sees the periodic force field, so
//! wrapping never touches it.

pub mod covering;

use crate::error::{Error, Result};
use crate::potential::PotentialField;

/// A phase-space point (x, v).
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.len() != v.len() || x.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "phase point dims: x has {}, v has {}",
                x.len(),
                v.len()
            )));
        }
        Ok(Self { x, v })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// One recorded state along a trajectory.
#[derive(Debug, Clone)]
pub struct FlowSample {
    /// Time of this sample.
    pub s: f64,
    /// Position, wrapped into the torus.
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// dX/dv, row-major d x d; empty when integrated without tangent.
    pub jxv: Vec<f64>,
    /// dV/dv, row-major d x d; empty when integrated without tangent.
    pub jvv: Vec<f64>,
    /// det dX/dv; NaN when integrated without tangent.
    pub det: f64,
    /// H(x, v) at this sample.
    pub energy: f64,
}

/// Result of integrating one characteristic.
#[derive(Debug, Clone)]
pub struct PhaseFlowResult {
    pub samples: Vec<FlowSample>,
    /// max_k |H_k - H_0| over every internal step, not just recorded ones.
    pub energy_drift: f64,
    pub with_tangent: bool,
}

impl PhaseFlowResult {
    pub fn final_sample(&self) -> &FlowSample {
        self.samples.last().expect("integration records at least the initial sample")
    }

    /// Energy conservation check.
    pub fn validate_energy(&self, tol: f64) -> Result<()> {
        if self.energy_drift > tol {
            return Err(Error::InvalidParameter(format!(
                "energy drift {} exceeds tolerance {tol}",
                self.energy_drift
            )));
        }
        Ok(())
    }

    /// Speed band: | |V(s)| - |v| | <= 2 sqrt(sup phi) at every sample.
    pub fn validate_speed_band(&self, field: &PotentialField, slack: f64) -> Result<()> {
        let bound = 2.0 * field.sup_norm().sqrt() + slack;
        let v0 = norm(&self.samples[0].v);
        for s in &self.samples {
            let dev = (norm(&s.v) - v0).abs();
            if dev > bound {
                return Err(Error::InvalidParameter(format!(
                    "speed deviation {dev} at s = {} exceeds band {bound}",
                    s.s
                )));
            }
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Determinant of a small row-major d x d matrix.
pub fn det_small(m: &[f64], d: usize) -> f64 {
    debug_assert_eq!(m.len(), d * d);
    match d {
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => {
            // Gaussian elimination with partial pivoting.
            let mut a = m.to_vec();
            let mut det = 1.0;
            for col in 0..d {
                let mut piv = col;
                for r in (col + 1)..d {
                    if a[r * d + col].abs() > a[piv * d + col].abs() {
                        piv = r;
                    }
                }
                if a[piv * d + col] == 0.0 {
                    return 0.0;
                }
                if piv != col {
                    for k in 0..d {
                        a.swap(col * d + k, piv * d + k);
                    }
                    det = -det;
                }
                let p = a[col * d + col];
                det *= p;
                for r in (col + 1)..d {
                    let f = a[r * d + col] / p;
                    for k in col..d {
                        a[r * d + k] -= f * a[col * d + k];
                    }
                }
            }
            det
        }
    }
}

/// Borrowed view of the integrator state after one step.
pub(crate) struct StepView<'a> {
    pub s: f64,
    pub x: &'a [f64],
    pub v: &'a [f64],
    /// Empty slices when tangent transport is off.
    pub jxv: &'a [f64],
    pub jvv: &'a [f64],
    pub energy: f64,
}

/// Core streaming integrator. Runs velocity-Verlet from time `t` to `s_end`
/// (either direction), invoking `cb` at the initial state and after every
/// step. Returns the worst energy drift seen.
pub(crate) fn stream<F: FnMut(&StepView)>(
    field: &PotentialField,
    x0: &[f64],
    v0: &[f64],
    t: f64,
    s_end: f64,
    dt: f64,
    tangent: bool,
    cb: &mut F,
) -> Result<f64> {
    let d = field.dim();
    if x0.len() != d || v0.len() != d {
        return Err(Error::InvalidParameter("phase point dimension != field dimension".into()));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let curv = field.hess_max_sampled().sqrt();
    if dt * curv > 0.5 {
        return Err(Error::StepTooLarge { dt, product: dt * curv });
    }
    let span = s_end - t;
    let n_steps = if span == 0.0 { 0 } else { (span.abs() / dt - 1e-9).ceil().max(1.0) as usize };
    let h = if n_steps == 0 { 0.0 } else { span / n_steps as f64 };

    let mut x = field.torus().wrapped(x0);
    let mut v = v0.to_vec();
    let mut grad = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    let (mut jxv, mut jvv, mut scratch) = if tangent {
        let mut jvv = vec![0.0; d * d];
        for i in 0..d {
            jvv[i * d + i] = 1.0;
        }
        (vec![0.0; d * d], jvv, vec![0.0; d * d])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };

    let phi0 = field.eval_into(&x, Some(&mut grad), if tangent { Some(&mut hess) } else { None });
    let e0 = 0.5 * v.iter().map(|a| a * a).sum::<f64>() + phi0;
    let mut drift: f64 = 0.0;
    cb(&StepView { s: t, x: &x, v: &v, jxv: &jxv, jvv: &jvv, energy: e0 });

    for k in 1..=n_steps {
        let hh = 0.5 * h;
        // Half kick (force and Hessian at current x are already cached).
        for i in 0..d {
            v[i] -= hh * grad[i];
        }
        if tangent {
            // jvv += hh * (-hess) * jxv
            mat_acc_neg(&mut jvv, &hess, &jxv, hh, d, &mut scratch);
        }
        // Drift.
        for i in 0..d {
            x[i] += h * v[i];
        }
        field.torus().wrap(&mut x);
        if tangent {
            for i in 0..d * d {
                jxv[i] += h * jvv[i];
            }
        }
        // Fresh force at the new position, second half kick.
        let phi =
            field.eval_into(&x, Some(&mut grad), if tangent { Some(&mut hess) } else { None });
        for i in 0..d {
            v[i] -= hh * grad[i];
        }
        if tangent {
            mat_acc_neg(&mut jvv, &hess, &jxv, hh, d, &mut scratch);
        }
        let s = t + k as f64 * h;
        let energy = 0.5 * v.iter().map(|a| a * a).sum::<f64>() + phi;
        drift = drift.max((energy - e0).abs());
        cb(&StepView { s, x: &x, v: &v, jxv: &jxv, jvv: &jvv, energy });
    }
    Ok(drift)
}

/// acc += factor * (-hess) * j, using `scratch` for the product.
fn mat_acc_neg(acc: &mut [f64], hess: &[f64], j: &[f64], factor: f64, d: usize, scratch: &mut [f64]) {
    for i in 0..d {
        for col in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += hess[i * d + k] * j[k * d + col];
            }
            scratch[i * d + col] = s;
        }
    }
    for i in 0..d * d {
        acc[i] -= factor * scratch[i];
    }
}

/// Integrate the characteristic through `start` anchored at time `t`, out to
/// time `s` (s < t runs backward), recording every `sample_every`-th step.
///
/// With `with_tangent`, the sample carries dX/dv, dV/dv and det dX/dv for
/// the variational flow anchored at `t` (dX/dv = 0, dV/dv = I there).
pub fn integrate_sampled(
    field: &PotentialField,
    start: &PhasePoint,
    t: f64,
    s: f64,
    dt: f64,
    with_tangent: bool,
    sample_every: usize,
) -> Result<PhaseFlowResult> {
    let every = sample_every.max(1);
    let mut samples = Vec::new();
    let mut count = 0usize;
    let span_steps = if s == t { 0 } else { ((s - t).abs() / dt - 1e-9).ceil().max(1.0) as usize };
    let drift = stream(field, &start.x, &start.v, t, s, dt, with_tangent, &mut |view| {
        let is_last = count == span_steps;
        if count % every == 0 || is_last {
            let d = view.x.len();
            samples.push(FlowSample {
                s: view.s,
                x: view.x.to_vec(),
                v: view.v.to_vec(),
                jxv: view.jxv.to_vec(),
                jvv: view.jvv.to_vec(),
                det: if with_tangent { det_small(view.jxv, d) } else { f64::NAN },
                energy: view.energy,
            });
        }
        count += 1;
    })?;
    Ok(PhaseFlowResult { samples, energy_drift: drift, with_tangent })
}

/// [`integrate_sampled`] recording every step.
pub fn integrate(
    field: &PotentialField,
    start: &PhasePoint,
    t: f64,
    s: f64,
    dt: f64,
    with_tangent: bool,
) -> Result<PhaseFlowResult> {
    integrate_sampled(field, start, t, s, dt, with_tangent, 1)
}

/// Endpoint only: where does (x, v) at time t land at time s?
pub fn flow_endpoint(
    field: &PotentialField,
    x: &[f64],
    v: &[f64],
    t: f64,
    s: f64,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = field.dim();
    let mut xe = vec![0.0; d];
    let mut ve = vec![0.0; d];
    stream(field, x, v, t, s, dt, false, &mut |view| {
        xe.copy_from_slice(view.x);
        ve.copy_from_slice(view.v);
    })?;
    Ok((xe, ve))
}

/// Determinant series det dX(s; t0)/dv for s in [0, t0]: the backward
/// characteristic anchored at (x, v) at time t0. Returns (s, det, energy
/// drift at that sample) triples in decreasing s order.
pub fn det_along(
    field: &PotentialField,
    point: &PhasePoint,
    t0: f64,
    dt: f64,
) -> Result<PhaseFlowResult> {
    if !(t0 > 0.0) {
        return Err(Error::InvalidParameter(format!("t0 must be positive, got {t0}")));
    }
    integrate(field, point, t0, 0.0, dt, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cosine(d: usize) -> PotentialField {
        PotentialField::cosine(d, d - 1, 2.0, 1.0).unwrap()
    }

    #[test]
    fn free_flight_is_exact() {
        let p = PotentialField::constant(2, 1.0).unwrap();
        let start = PhasePoint::new(vec![0.1, 0.2], vec![0.3, -0.4]).unwrap();
        let r = integrate(&p, &start, 0.0, 2.0, 0.01, false).unwrap();
        let end = r.final_sample();
        assert!((end.x[0] - (0.1 + 0.6_f64).rem_euclid(1.0)).abs() < 1e-12);
        assert!((end.x[1] - (0.2 - 0.8_f64).rem_euclid(1.0)).abs() < 1e-12);
        assert_eq!(r.energy_drift, 0.0);
    }

    #[test]
    fn free_flight_backward_det_is_power_of_span() {
        // det dX(s; t)/dv = (s - t)^d for straight lines, exactly, including
        // the d even sign structure.
        let d = 3;
        let p = PotentialField::constant(d, 1.5).unwrap();
        let start = PhasePoint::new(vec![0.5, 0.25, 0.75], vec![1.0, -2.0, 0.5]).unwrap();
        let r = det_along(&p, &start, 1.0, 1e-2).unwrap();
        for s in &r.samples {
            let expect = (s.s - 1.0).powi(d as i32);
            assert!(
                (s.det - expect).abs() <= 1e-10 * expect.abs().max(1.0),
                "s = {}, det = {}, expect = {expect}",
                s.s,
                s.det
            );
        }
    }

    #[test]
    fn energy_conserved_and_speed_band() {
        let p = cosine(2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let start = PhasePoint::new(
                vec![rng.gen::<f64>(), rng.gen::<f64>()],
                vec![rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0],
            )
            .unwrap();
            let r = integrate_sampled(&p, &start, 0.0, 5.0, 1e-3, false, 50).unwrap();
            r.validate_energy(5e-5).unwrap();
            r.validate_speed_band(&p, 1e-6).unwrap();
        }
    }

    #[test]
    fn group_property_composition() {
        // Flow over [0, 1] then [1, 2] lands where the flow over [0, 2] does.
        let p = cosine(2);
        let start = PhasePoint::new(vec![0.3, 0.8], vec![0.7, -0.2]).unwrap();
        let dt = 1e-3;
        let (x1, v1) = flow_endpoint(&p, &start.x, &start.v, 0.0, 1.0, dt).unwrap();
        let (x2, v2) = flow_endpoint(&p, &x1, &v1, 1.0, 2.0, dt).unwrap();
        let (xd, vd) = flow_endpoint(&p, &start.x, &start.v, 0.0, 2.0, dt).unwrap();
        for i in 0..2 {
            let dx = (x2[i] - xd[i]).abs();
            let dx = dx.min((dx - 1.0).abs());
            assert!(dx < 1e-9, "x mismatch {dx}");
            assert!((v2[i] - vd[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn time_reversal_recovers_start() {
        let p = cosine(3);
        let start = PhasePoint::new(vec![0.1, 0.9, 0.4], vec![0.5, 0.3, -0.8]).unwrap();
        let dt = 1e-3;
        let (x1, v1) = flow_endpoint(&p, &start.x, &start.v, 0.0, 1.5, dt).unwrap();
        let (x0, v0) = flow_endpoint(&p, &x1, &v1, 1.5, 0.0, dt).unwrap();
        for i in 0..3 {
            let dx = (x0[i] - start.x[i]).abs();
            let dx = dx.min((dx - 1.0).abs());
            assert!(dx < 1e-10, "axis {i}: {dx}");
            assert!((v0[i] - start.v[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn tangent_matches_central_differences() {
        // dX/dv and dV/dv against central differences in the launch velocity.
        let p = cosine(2);
        let x0 = vec![0.2, 0.6];
        let v0 = vec![0.4, 0.9];
        let t0 = 1.0;
        let dt = 5e-4;
        let start = PhasePoint::new(x0.clone(), v0.clone()).unwrap();
        let r = det_along(&p, &start, t0, dt).unwrap();
        let end = r.final_sample();
        let h = 1e-6;
        for j in 0..2 {
            let mut vp = v0.clone();
            let mut vm = v0.clone();
            vp[j] += h;
            vm[j] -= h;
            let (xp, wp) = flow_endpoint(&p, &x0, &vp, t0, 0.0, dt).unwrap();
            let (xm, wm) = flow_endpoint(&p, &x0, &vm, t0, 0.0, dt).unwrap();
            for i in 0..2 {
                let mut dxf = xp[i] - xm[i];
                // Unwrap across the periodic seam.
                if dxf > 0.5 {
                    dxf -= 1.0;
                }
                if dxf < -0.5 {
                    dxf += 1.0;
                }
                let fd_x = dxf / (2.0 * h);
                let fd_v = (wp[i] - wm[i]) / (2.0 * h);
                assert!(
                    (fd_x - end.jxv[i * 2 + j]).abs() < 5e-4,
                    "jxv[{i}][{j}]: fd {fd_x} vs {}",
                    end.jxv[i * 2 + j]
                );
                assert!(
                    (fd_v - end.jvv[i * 2 + j]).abs() < 5e-4,
                    "jvv[{i}][{j}]: fd {fd_v} vs {}",
                    end.jvv[i * 2 + j]
                );
            }
        }
    }

    #[test]
    fn planar_orbit_det_factorizes() {
        // Potential varies only along x3. Launching with v3 = 0 from the
        // cosine minimum keeps that coordinate frozen, so Jxv is block
        // diagonal: two free-flight axes times a harmonic factor with
        // frequency w = 2 pi (phi'' = +(2 pi)^2 at the minimum):
        //
        //   det(s) = (s - t0)^2 * sin(w (s - t0)) / w.
        let p = PotentialField::cosine(3, 2, 2.0, 1.0).unwrap();
        let start = PhasePoint::new(vec![0.3, 0.7, 0.5], vec![0.8, -0.6, 0.0]).unwrap();
        let r = det_along(&p, &start, 1.0, 1e-3).unwrap();
        let w = 2.0 * std::f64::consts::PI;
        for s in r.samples.iter().step_by(100) {
            let free = (s.s - 1.0) * (s.s - 1.0);
            let frozen = ((s.s - 1.0) * w).sin() / w;
            let expect = free * frozen;
            assert!(
                (s.det - expect).abs() < 2e-3 * expect.abs().max(1e-3),
                "s = {}: det {} vs {}",
                s.s,
                s.det,
                expect
            );
        }
    }

    #[test]
    fn endpoint_against_fine_reference() {
        // Coarse dt = 1e-3 vs a dt = 1e-5 reference on a single-active-axis
        // cosine field: endpoint position error well under 1e-4.
        let p = PotentialField::cosine(2, 1, 1.5, 0.05).unwrap();
        let start = PhasePoint::new(vec![0.2, 0.7], vec![0.9, 0.35]).unwrap();
        let (xc, vc) = flow_endpoint(&p, &start.x, &start.v, 0.0, 5.0, 1e-3).unwrap();
        let (xf, vf) = flow_endpoint(&p, &start.x, &start.v, 0.0, 5.0, 1e-5).unwrap();
        for i in 0..2 {
            let dx = (xc[i] - xf[i]).abs();
            let dx = dx.min((dx - 1.0).abs());
            assert!(dx < 1e-4, "axis {i}: position error {dx}");
            assert!((vc[i] - vf[i]).abs() < 1e-4, "axis {i}: velocity error");
        }
    }

    #[test]
    fn det_sign_change_matches_bisection_oracle() {
        // A trapped orbit on the d = 1 cosine field has a conjugate time
        // inside the window. Locate it from the coarse series by linear
        // interpolation, then refine with bisection on the fine-step
        // integrator; both must agree to 1e-4 in s.
        let p = PotentialField::cosine(1, 0, 1.5, 0.4).unwrap();
        let start = PhasePoint::new(vec![0.3], vec![0.4]).unwrap();
        let t0 = 3.0;
        let series = det_along(&p, &start, t0, 1e-3).unwrap();
        // First sign change strictly inside (skip the anchored zero at t0).
        let mut coarse = None;
        for w in series.samples.windows(2) {
            if w[0].s < t0 - 0.05 && w[0].det * w[1].det < 0.0 {
                let f = w[0].det / (w[0].det - w[1].det);
                coarse = Some(w[0].s + f * (w[1].s - w[0].s));
                break;
            }
        }
        let coarse = coarse.expect("trapped orbit must have a conjugate time");
        let det_at = |s: f64| -> f64 {
            if s == t0 {
                return 0.0;
            }
            integrate(&p, &start, t0, s, 1e-4, true).unwrap().final_sample().det
        };
        let refined = crate::numerics::bisect(coarse - 0.02, coarse + 0.02, 1e-9, det_at)
            .expect("bracket holds the sign change");
        assert!(
            (refined - coarse).abs() < 1e-4,
            "coarse {coarse} vs refined {refined}"
        );
    }

    #[test]
    fn step_too_large_rejected() {
        let p = cosine(2);
        let start = PhasePoint::new(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        let err = integrate(&p, &start, 0.0, 1.0, 0.2, false).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge { .. }), "{err:?}");
    }
}
