//! Truncated Fourier potentials on the torus.
//!
//! A potential is phi(x) = offset + sum_t amp_t cos(2 pi k_t . (x / p)),
//! with integer frequency multi-indices k_t. The constructor certifies the
//! normalization 1 <= phi(x) from the coefficients alone
//! (offset - sum |amp| >= 1), and caches a strict upper bound `sup_norm`
//! together with sampled extrema and curvature. Value, gradient, and Hessian
//! all come from the same closed-form series; nothing here differentiates
//! numerically.

use crate::error::{Error, Result};
use crate::numerics::jacobi_eigen;
use crate::torus::Torus;
use serde::{Deserialize, Serialize};

/// One cosine term: amplitude * cos(2 pi k . (x / p)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub freq: Vec<i64>,
    pub amplitude: f64,
}

/// Potential value with first and second derivatives at a point.
#[derive(Debug, Clone)]
pub struct PotentialEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Row-major d x d, exactly symmetric.
    pub hessian: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PotentialField {
    torus: Torus,
    offset: f64,
    terms: Vec<FourierTerm>,
    /// 2 pi k_i / p_i per term, precomputed.
    omegas: Vec<Vec<f64>>,
    sup_norm: f64,
    certified_min: f64,
    sampled_max: f64,
    sampled_min: f64,
    /// max over a sample grid of the Hessian spectral norm.
    hess_max_sampled: f64,
    /// certified bound sum |amp| |omega|^2 >= ||hess|| everywhere.
    hess_sup_bound: f64,
}

impl PotentialField {
    /// Build and validate. Fails unless offset - sum |amplitude| >= 1, which
    /// certifies the required lower bound 1 <= phi.
    pub fn new(torus: Torus, offset: f64, terms: Vec<FourierTerm>) -> Result<Self> {
        Self::with_admissibility(torus, offset, terms, true)
    }

    /// Test-only constructor that skips the lower-bound certification, for
    /// exercising degenerate limits such as a vanishing potential.
    #[cfg(test)]
    pub(crate) fn test_unchecked(torus: Torus, offset: f64, terms: Vec<FourierTerm>) -> Result<Self> {
        Self::with_admissibility(torus, offset, terms, false)
    }

    fn with_admissibility(
        torus: Torus,
        offset: f64,
        terms: Vec<FourierTerm>,
        certify: bool,
    ) -> Result<Self> {
        let d = torus.dim();
        if !offset.is_finite() {
            return Err(Error::InvalidParameter("potential offset must be finite".into()));
        }
        for t in &terms {
            if t.freq.len() != d {
                return Err(Error::InvalidParameter(format!(
                    "frequency multi-index length {} != dimension {d}",
                    t.freq.len()
                )));
            }
            if !t.amplitude.is_finite() {
                return Err(Error::InvalidParameter("term amplitude must be finite".into()));
            }
            if t.freq.iter().all(|&k| k == 0) {
                return Err(Error::InvalidParameter(
                    "zero frequency term: fold constants into the offset".into(),
                ));
            }
        }
        let amp_sum: f64 = terms.iter().map(|t| t.amplitude.abs()).sum();
        let certified_min = offset - amp_sum;
        if certify && certified_min < 1.0 {
            return Err(Error::PotentialBelowOne { certified_min });
        }
        let omegas: Vec<Vec<f64>> = terms
            .iter()
            .map(|t| {
                t.freq
                    .iter()
                    .zip(torus.periods())
                    .map(|(&k, &p)| 2.0 * std::f64::consts::PI * k as f64 / p)
                    .collect()
            })
            .collect();
        let hess_sup_bound: f64 = terms
            .iter()
            .zip(&omegas)
            .map(|(t, om)| t.amplitude.abs() * om.iter().map(|w| w * w).sum::<f64>())
            .sum();
        let mut field = Self {
            torus,
            offset,
            terms,
            omegas,
            sup_norm: offset + amp_sum,
            certified_min,
            sampled_max: f64::NEG_INFINITY,
            sampled_min: f64::INFINITY,
            hess_max_sampled: 0.0,
            hess_sup_bound,
        };
        field.scan_samples();
        let bound = offset + amp_sum;
        field.sup_norm = if field.sampled_max >= bound { field.sampled_max.next_up() } else { bound };
        Ok(field)
    }

    /// Constant potential phi = value (value >= 1).
    pub fn constant(d: usize, value: f64) -> Result<Self> {
        Self::new(Torus::unit(d)?, value, Vec::new())
    }

    /// offset + amplitude * cos(2 pi x_axis) on the unit torus.
    pub fn cosine(d: usize, axis: usize, offset: f64, amplitude: f64) -> Result<Self> {
        if axis >= d {
            return Err(Error::InvalidParameter(format!("axis {axis} out of range for d = {d}")));
        }
        let mut freq = vec![0i64; d];
        freq[axis] = 1;
        Self::new(Torus::unit(d)?, offset, vec![FourierTerm { freq, amplitude }])
    }

    fn scan_samples(&mut self) {
        let d = self.dim();
        let per_axis: usize = match d {
            1..=3 => 64,
            4 => 16,
            5 => 8,
            _ => 4,
        };
        let total = per_axis.pow(d as u32);
        let mut x = vec![0.0; d];
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        let mut max_v = f64::NEG_INFINITY;
        let mut min_v = f64::INFINITY;
        let mut max_h: f64 = 0.0;
        // Hessian spectral norm is sampled on a coarser sub-lattice.
        let hess_stride = (per_axis / 16).max(1);
        for flat in 0..total {
            let mut rem = flat;
            let mut on_hess_lattice = true;
            for a in (0..d).rev() {
                let idx = rem % per_axis;
                rem /= per_axis;
                x[a] = self.torus.periods()[a] * idx as f64 / per_axis as f64;
                on_hess_lattice &= idx % hess_stride == 0;
            }
            let v = if on_hess_lattice {
                let v = self.eval_into(&x, Some(&mut grad), Some(&mut hess));
                let (evs, _) = jacobi_eigen(hess.clone(), d);
                for ev in evs {
                    max_h = max_h.max(ev.abs());
                }
                v
            } else {
                self.eval_into(&x, None, None)
            };
            max_v = max_v.max(v);
            min_v = min_v.min(v);
        }
        self.sampled_max = max_v;
        self.sampled_min = min_v;
        self.hess_max_sampled = max_h;
    }

    pub fn dim(&self) -> usize {
        self.torus.dim()
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn terms(&self) -> &[FourierTerm] {
        &self.terms
    }

    /// Strict upper bound: phi(x) < sup_norm at every sampled point, and
    /// phi <= offset + sum|amp| <= sup_norm everywhere.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    /// Certified lower bound from the coefficients (>= 1).
    pub fn certified_min(&self) -> f64 {
        self.certified_min
    }

    pub fn sampled_range(&self) -> (f64, f64) {
        (self.sampled_min, self.sampled_max)
    }

    /// Max sampled spectral norm of the Hessian.
    pub fn hess_max_sampled(&self) -> f64 {
        self.hess_max_sampled
    }

    /// Certified bound on the Hessian spectral norm.
    pub fn hess_sup_bound(&self) -> f64 {
        self.hess_sup_bound
    }

    /// Value, and optionally gradient / Hessian, from the closed form.
    /// Scratch-free: callers in hot loops pass preallocated slices.
    pub fn eval_into(&self, x: &[f64], grad: Option<&mut [f64]>, hess: Option<&mut [f64]>) -> f64 {
        let d = self.dim();
        debug_assert_eq!(x.len(), d);
        let mut value = self.offset;
        if let Some(g) = &grad {
            debug_assert_eq!(g.len(), d);
        }
        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }
        let mut hess = hess;
        if let Some(h) = hess.as_deref_mut() {
            debug_assert_eq!(h.len(), d * d);
            h.fill(0.0);
        }
        for (term, omega) in self.terms.iter().zip(&self.omegas) {
            let mut phase = 0.0;
            for (wi, xi) in omega.iter().zip(x) {
                phase += wi * xi;
            }
            let (s, c) = phase.sin_cos();
            value += term.amplitude * c;
            if let Some(g) = grad.as_deref_mut() {
                let f = -term.amplitude * s;
                for (gi, wi) in g.iter_mut().zip(omega) {
                    *gi += f * wi;
                }
            }
            if let Some(h) = hess.as_deref_mut() {
                let f = -term.amplitude * c;
                for i in 0..d {
                    let fwi = f * omega[i];
                    h[i * d + i] += fwi * omega[i];
                    for j in (i + 1)..d {
                        let v = fwi * omega[j];
                        h[i * d + j] += v;
                        h[j * d + i] += v;
                    }
                }
            }
        }
        value
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.eval_into(x, None, None)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.eval_into(x, Some(&mut g), None);
        g
    }

    pub fn eval(&self, x: &[f64]) -> PotentialEval {
        let d = self.dim();
        let mut gradient = vec![0.0; d];
        let mut hessian = vec![0.0; d * d];
        let value = self.eval_into(x, Some(&mut gradient), Some(&mut hessian));
        PotentialEval { value, gradient, hessian }
    }

    /// Serialize to the declarative key-value text format. Floats print in
    /// shortest round-trip form, so parse(serialize(p)) == p bit-exactly.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        out.push_str("schema kinlab-potential-v1\n");
        out.push_str(&format!("dimension {}\n", self.dim()));
        out.push_str("period");
        for p in self.torus.periods() {
            out.push_str(&format!(" {p}"));
        }
        out.push('\n');
        out.push_str(&format!("offset {}\n", self.offset));
        for t in &self.terms {
            out.push_str("term");
            for k in &t.freq {
                out.push_str(&format!(" {k}"));
            }
            out.push_str(&format!(" {}\n", t.amplitude));
        }
        out
    }

    /// Parse the key-value text format produced by [`serialize`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut dimension: Option<usize> = None;
        let mut periods: Option<Vec<f64>> = None;
        let mut offset: Option<f64> = None;
        let mut terms: Vec<FourierTerm> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let key = it.next().unwrap();
            let rest: Vec<&str> = it.collect();
            let ctx = |msg: &str| Error::Format(format!("potential line {}: {msg}", lineno + 1));
            match key {
                "schema" => {
                    if rest != ["kinlab-potential-v1"] {
                        return Err(ctx(&format!("unsupported schema {rest:?}")));
                    }
                }
                "dimension" => {
                    let d: usize = rest
                        .first()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| ctx("dimension wants one integer"))?;
                    dimension = Some(d);
                }
                "period" => {
                    let ps: Option<Vec<f64>> = rest.iter().map(|s| s.parse().ok()).collect();
                    periods = Some(ps.ok_or_else(|| ctx("period wants real values"))?);
                }
                "offset" => {
                    offset = Some(
                        rest.first()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| ctx("offset wants one real"))?,
                    );
                }
                "term" => {
                    if rest.len() < 2 {
                        return Err(ctx("term wants k_1 .. k_d amplitude"));
                    }
                    let (ks, amp) = rest.split_at(rest.len() - 1);
                    let freq: Option<Vec<i64>> = ks.iter().map(|s| s.parse().ok()).collect();
                    let amplitude: f64 =
                        amp[0].parse().map_err(|_| ctx("term amplitude not a real"))?;
                    terms.push(FourierTerm {
                        freq: freq.ok_or_else(|| ctx("term frequencies must be integers"))?,
                        amplitude,
                    });
                }
                other => return Err(ctx(&format!("unknown key {other:?}"))),
            }
        }
        let d = dimension.ok_or_else(|| Error::Format("potential: missing dimension".into()))?;
        let periods = periods.unwrap_or_else(|| vec![1.0; d]);
        if periods.len() != d {
            return Err(Error::Format(format!(
                "potential: {} periods for dimension {d}",
                periods.len()
            )));
        }
        let offset = offset.ok_or_else(|| Error::Format("potential: missing offset".into()))?;
        for t in &terms {
            if t.freq.len() != d {
                return Err(Error::Format(format!(
                    "potential: term index length {} != dimension {d}",
                    t.freq.len()
                )));
            }
        }
        Self::new(Torus::new(periods)?, offset, terms)
    }
}

/// Orthonormal basis of the common kernel of all sampled force directions:
/// directions e with e . grad phi(x) = 0 for every sample x.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegenerateSubspace {
    /// n orthonormal vectors spanning the degenerate subspace.
    pub basis: Vec<Vec<f64>>,
    pub n: usize,
    /// All d singular values of the sampled gradient matrix, descending.
    pub singular_values: Vec<f64>,
}

/// Default relative rank tolerance for [`degenerate_subspace`].
pub const RANK_TOL_DEFAULT: f64 = 1e-8;

/// Compute the degenerate subspace from gradients sampled on a uniform
/// lattice with `samples_per_axis` points per axis (>= 10, so the total
/// sample count is >= 10^d).
pub fn degenerate_subspace(
    field: &PotentialField,
    samples_per_axis: usize,
    rank_tol: f64,
) -> Result<DegenerateSubspace> {
    let d = field.dim();
    if samples_per_axis < 10 {
        return Err(Error::InvalidParameter(format!(
            "need >= 10 samples per axis, got {samples_per_axis}"
        )));
    }
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::InvalidParameter(format!("rank_tol must be in (0,1), got {rank_tol}")));
    }
    // Accumulate A = sum g g^T; singular values of the stacked gradient
    // matrix are the square roots of A's eigenvalues.
    let mut a = vec![0.0; d * d];
    let mut x = vec![0.0; d];
    let mut g = vec![0.0; d];
    let total = samples_per_axis.pow(d as u32);
    for flat in 0..total {
        let mut rem = flat;
        for axis in (0..d).rev() {
            let idx = rem % samples_per_axis;
            rem /= samples_per_axis;
            x[axis] = field.torus().periods()[axis] * idx as f64 / samples_per_axis as f64;
        }
        field.eval_into(&x, Some(&mut g), None);
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] += g[i] * g[j];
            }
        }
    }
    let (evals, evecs) = jacobi_eigen(a, d);
    // Ascending eigenvalues; clamp tiny negatives from roundoff.
    let sv_ascending: Vec<f64> = evals.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let sv_max = *sv_ascending.last().unwrap();
    let mut basis = Vec::new();
    let mut n = 0;
    if sv_max == 0.0 {
        // Identically zero force: everything is degenerate.
        basis = evecs;
        n = d;
    } else {
        let threshold = rank_tol * sv_max;
        for (sv, vec) in sv_ascending.iter().zip(&evecs) {
            if *sv > threshold / 10.0 && *sv < threshold * 10.0 {
                return Err(Error::DegenerateRankAmbiguous { value: *sv, threshold });
            }
            if *sv <= threshold {
                basis.push(vec.clone());
                n += 1;
            }
        }
    }
    let mut singular_values = sv_ascending;
    singular_values.reverse();
    Ok(DegenerateSubspace { basis, n, singular_values })
}
