//! Tensor-product grids: a truncated velocity box with trapezoidal
//! quadrature and a uniform periodic spatial grid.
//!
//! Velocity nodes are built mirror-symmetrically so that v -> -v maps the
//! node set onto itself bit-for-bit; collision kernels rely on that to keep
//! discrete symmetries exact. Flat indices are row-major with axis 0
//! slowest.

use crate::error::{Error, Result};
use crate::torus::Torus;

/// Flatten a multi-index with `n` points per axis, axis 0 slowest.
#[inline]
pub fn flatten(idx: &[usize], n: usize) -> usize {
    let mut f = 0;
    for &i in idx {
        f = f * n + i;
    }
    f
}

/// Inverse of [`flatten`].
#[inline]
pub fn unflatten(mut flat: usize, n: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = flat % n;
        flat /= n;
    }
}

/// Cubic Lagrange weights on four consecutive uniform nodes for a point at
/// fraction `t` past the second node.
#[inline]
fn cubic_weights(t: f64) -> [f64; 4] {
    let a = t + 1.0;
    let b = t;
    let c = t - 1.0;
    let d = t - 2.0;
    [-b * c * d / 6.0, a * c * d / 2.0, -a * b * d / 2.0, a * b * c / 6.0]
}

/// Uniform symmetric velocity box [-v_max, v_max]^d with trapezoidal
/// quadrature weights.
#[derive(Debug, Clone)]
pub struct VelocityGrid {
    dim: usize,
    n: usize,
    v_max: f64,
    h: f64,
    /// Per-axis nodes; exactly mirror symmetric.
    axis: Vec<f64>,
    /// Per-axis trapezoid weights (h/2 at the ends, h inside).
    axis_w: Vec<f64>,
    /// All node coordinates, flat index i at nodes[i*dim..(i+1)*dim].
    nodes: Vec<f64>,
    /// Tensor-product quadrature weight per flat index.
    weights: Vec<f64>,
}

impl VelocityGrid {
    pub fn new(dim: usize, n: usize, v_max: f64) -> Result<Self> {
        if dim == 0 || dim > 3 {
            return Err(Error::InvalidParameter(format!(
                "velocity grid dimension must be 1..=3, got {dim}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "velocity grid needs at least 2 points per axis, got {n}"
            )));
        }
        if !(v_max > 0.0) || !v_max.is_finite() {
            return Err(Error::InvalidParameter(format!("v_max must be positive, got {v_max}")));
        }
        let h = 2.0 * v_max / (n - 1) as f64;
        let mut axis = vec![0.0; n];
        for i in 0..n / 2 {
            let a = -v_max + i as f64 * h;
            axis[i] = a;
            axis[n - 1 - i] = -a;
        }
        if n % 2 == 1 {
            axis[n / 2] = 0.0;
        }
        let mut axis_w = vec![h; n];
        axis_w[0] = 0.5 * h;
        axis_w[n - 1] = 0.5 * h;

        let total = n.pow(dim as u32);
        let mut nodes = vec![0.0; total * dim];
        let mut weights = vec![1.0; total];
        let mut idx = vec![0usize; dim];
        for flat in 0..total {
            unflatten(flat, n, &mut idx);
            let mut w = 1.0;
            for (a, &i) in idx.iter().enumerate() {
                nodes[flat * dim + a] = axis[i];
                w *= axis_w[i];
            }
            weights[flat] = w;
        }
        Ok(Self { dim, n, v_max, h, axis, axis_w, nodes, weights })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total node count n^d.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    /// Axis spacing.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn axis_nodes(&self) -> &[f64] {
        &self.axis
    }

    pub fn axis_weights(&self) -> &[f64] {
        &self.axis_w
    }

    /// Coordinates of node `flat`.
    #[inline]
    pub fn node(&self, flat: usize) -> &[f64] {
        &self.nodes[flat * self.dim..(flat + 1) * self.dim]
    }

    /// All coordinates, d per node.
    pub fn nodes_flat(&self) -> &[f64] {
        &self.nodes
    }

    #[inline]
    pub fn weight(&self, flat: usize) -> f64 {
        self.weights[flat]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Flat index of -v given the flat index of v. Exact because nodes are
    /// mirror symmetric.
    #[inline]
    pub fn neg_index(&self, flat: usize) -> usize {
        let mut idx = [0usize; 3];
        let idx = &mut idx[..self.dim];
        unflatten(flat, self.n, idx);
        for i in idx.iter_mut() {
            *i = self.n - 1 - *i;
        }
        flatten(idx, self.n)
    }

    /// Squared norm of node `flat`.
    #[inline]
    pub fn speed2(&self, flat: usize) -> f64 {
        self.node(flat).iter().map(|a| a * a).sum()
    }

    /// Multilinear stencil for an arbitrary point. Fills `idx_out`/`w_out`
    /// (capacity >= 2^d) and returns the entry count, or None when the point
    /// lies outside the closed box (drop policy).
    #[inline]
    pub fn stencil_linear(&self, v: &[f64], idx_out: &mut [usize], w_out: &mut [f64]) -> Option<usize> {
        let d = self.dim;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..d {
            let u = (v[a] + self.v_max) / self.h;
            if !(u >= 0.0) || u > (self.n - 1) as f64 + 1e-12 {
                return None;
            }
            let mut i0 = u.floor() as usize;
            if i0 > self.n - 2 {
                i0 = self.n - 2;
            }
            base[a] = i0;
            frac[a] = (u - i0 as f64).clamp(0.0, 1.0);
        }
        let count = 1usize << d;
        for corner in 0..count {
            let mut w = 1.0;
            let mut flat = 0usize;
            for a in 0..d {
                let hi = (corner >> a) & 1;
                w *= if hi == 1 { frac[a] } else { 1.0 - frac[a] };
                flat = flat * self.n + base[a] + hi;
            }
            idx_out[corner] = flat;
            w_out[corner] = w;
        }
        Some(count)
    }

    /// Cubic Lagrange stencil (4 nodes per axis, degrading to linear within
    /// one cell of the boundary). Capacity needed: 4^d. Returns None outside
    /// the box.
    pub fn stencil_cubic(&self, v: &[f64], idx_out: &mut [usize], w_out: &mut [f64]) -> Option<usize> {
        let d = self.dim;
        let mut offs: [[usize; 4]; 3] = [[0; 4]; 3];
        let mut wts: [[f64; 4]; 3] = [[0.0; 4]; 3];
        let mut cnt = [0usize; 3];
        for a in 0..d {
            let u = (v[a] + self.v_max) / self.h;
            if !(u >= 0.0) || u > (self.n - 1) as f64 + 1e-12 {
                return None;
            }
            let mut i0 = u.floor() as usize;
            if i0 > self.n - 2 {
                i0 = self.n - 2;
            }
            let t = (u - i0 as f64).clamp(0.0, 1.0);
            if i0 >= 1 && i0 + 2 <= self.n - 1 {
                let w4 = cubic_weights(t);
                for k in 0..4 {
                    offs[a][k] = i0 - 1 + k;
                    wts[a][k] = w4[k];
                }
                cnt[a] = 4;
            } else {
                offs[a][0] = i0;
                offs[a][1] = i0 + 1;
                wts[a][0] = 1.0 - t;
                wts[a][1] = t;
                cnt[a] = 2;
            }
        }
        let mut count = 1;
        for a in 0..d {
            count *= cnt[a];
        }
        let mut sel = [0usize; 3];
        for (slot, entry) in idx_out.iter_mut().zip(w_out.iter_mut()).take(count).enumerate() {
            let mut rem = slot;
            for a in (0..d).rev() {
                sel[a] = rem % cnt[a];
                rem /= cnt[a];
            }
            let mut w = 1.0;
            let mut flat = 0usize;
            for a in 0..d {
                w *= wts[a][sel[a]];
                flat = flat * self.n + offs[a][sel[a]];
            }
            *entry.0 = flat;
            *entry.1 = w;
        }
        Some(count)
    }

    /// Single-axis interpolation stencil: node offsets and weights along one
    /// axis at coordinate `x`, either cubic Lagrange (4 nodes, degrading to
    /// linear within one cell of the boundary) or linear (2 nodes). Returns
    /// the node count, or None when `x` lies outside the closed axis range.
    /// Tensor products of this stencil reproduce `stencil_linear` and
    /// `stencil_cubic`; hot loops fuse the product with their own scatter.
    #[inline]
    pub fn axis_stencil(
        &self,
        x: f64,
        cubic: bool,
        offs: &mut [usize; 4],
        wts: &mut [f64; 4],
    ) -> Option<usize> {
        let u = (x + self.v_max) / self.h;
        if !(u >= 0.0) || u > (self.n - 1) as f64 + 1e-12 {
            return None;
        }
        let mut i0 = u.floor() as usize;
        if i0 > self.n - 2 {
            i0 = self.n - 2;
        }
        let t = (u - i0 as f64).clamp(0.0, 1.0);
        if cubic && i0 >= 1 && i0 + 2 <= self.n - 1 {
            let w4 = cubic_weights(t);
            for k in 0..4 {
                offs[k] = i0 - 1 + k;
                wts[k] = w4[k];
            }
            Some(4)
        } else {
            offs[0] = i0;
            offs[1] = i0 + 1;
            wts[0] = 1.0 - t;
            wts[1] = t;
            Some(2)
        }
    }

    /// Interpolate a nodal field at an arbitrary point (multilinear); None
    /// outside the box.
    pub fn interp_linear(&self, values: &[f64], v: &[f64]) -> Option<f64> {
        let mut idx = [0usize; 8];
        let mut w = [0.0f64; 8];
        let count = self.stencil_linear(v, &mut idx, &mut w)?;
        let mut s = 0.0;
        for k in 0..count {
            s += w[k] * values[idx[k]];
        }
        Some(s)
    }
}

/// Uniform grid on the torus; every node carries the same weight
/// prod_j (p_j / m).
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    torus: Torus,
    m: usize,
    /// Per-axis node coordinates, one block of m per axis.
    axis: Vec<f64>,
    node_weight: f64,
}

impl SpatialGrid {
    pub fn new(torus: Torus, m: usize) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidParameter("spatial grid needs at least 1 point".into()));
        }
        let d = torus.dim();
        let mut axis = vec![0.0; d * m];
        let mut node_weight = 1.0;
        for a in 0..d {
            let p = torus.periods()[a];
            let h = p / m as f64;
            node_weight *= h;
            for i in 0..m {
                axis[a * m + i] = i as f64 * h;
            }
        }
        Ok(Self { torus, m, axis, node_weight })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn dim(&self) -> usize {
        self.torus.dim()
    }

    /// Points per axis.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Total node count m^d.
    pub fn len(&self) -> usize {
        self.m.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight of every node.
    pub fn node_weight(&self) -> f64 {
        self.node_weight
    }

    /// Coordinate of node `i` on `axis`.
    #[inline]
    pub fn axis_node(&self, axis: usize, i: usize) -> f64 {
        self.axis[axis * self.m + i]
    }

    /// Write the coordinates of flat node `flat` into `out`.
    #[inline]
    pub fn node_into(&self, flat: usize, out: &mut [f64]) {
        let d = self.dim();
        let mut idx = [0usize; 3];
        debug_assert!(d <= 3);
        unflatten(flat, self.m, &mut idx[..d]);
        for a in 0..d {
            out[a] = self.axis_node(a, idx[a]);
        }
    }

    /// Periodic multilinear stencil; capacity 2^d; always succeeds.
    #[inline]
    pub fn stencil_linear(&self, x: &[f64], idx_out: &mut [usize], w_out: &mut [f64]) -> usize {
        let d = self.dim();
        let m = self.m;
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..d {
            let p = self.torus.periods()[a];
            let h = p / m as f64;
            let u = (x[a] / h).rem_euclid(m as f64);
            let i0 = (u.floor() as usize).min(m - 1);
            base[a] = i0;
            frac[a] = (u - i0 as f64).clamp(0.0, 1.0);
        }
        let count = 1usize << d;
        for corner in 0..count {
            let mut w = 1.0;
            let mut flat = 0usize;
            for a in 0..d {
                let hi = (corner >> a) & 1;
                w *= if hi == 1 { frac[a] } else { 1.0 - frac[a] };
                let i = if hi == 1 { (base[a] + 1) % m } else { base[a] };
                flat = flat * m + i;
            }
            idx_out[corner] = flat;
            w_out[corner] = w;
        }
        count
    }

    /// Periodic cubic Lagrange stencil; capacity 4^d. Requires m >= 4.
    pub fn stencil_cubic(&self, x: &[f64], idx_out: &mut [usize], w_out: &mut [f64]) -> Result<usize> {
        let d = self.dim();
        let m = self.m;
        if m < 4 {
            return Err(Error::InvalidParameter(format!(
                "cubic stencil needs at least 4 points per axis, got {m}"
            )));
        }
        let mut offs: [[usize; 4]; 3] = [[0; 4]; 3];
        let mut wts: [[f64; 4]; 3] = [[0.0; 4]; 3];
        for a in 0..d {
            let p = self.torus.periods()[a];
            let h = p / m as f64;
            let u = (x[a] / h).rem_euclid(m as f64);
            let i0 = (u.floor() as usize).min(m - 1);
            let t = (u - i0 as f64).clamp(0.0, 1.0);
            let w4 = cubic_weights(t);
            for k in 0..4 {
                offs[a][k] = (i0 + m + k - 1) % m;
                wts[a][k] = w4[k];
            }
        }
        let count = 1usize << (2 * d);
        let mut sel = [0usize; 3];
        for slot in 0..count {
            let mut rem = slot;
            for a in (0..d).rev() {
                sel[a] = rem % 4;
                rem /= 4;
            }
            let mut w = 1.0;
            let mut flat = 0usize;
            for a in 0..d {
                w *= wts[a][sel[a]];
                flat = flat * m + offs[a][sel[a]];
            }
            idx_out[slot] = flat;
            w_out[slot] = w;
        }
        Ok(count)
    }

    /// Interpolate a nodal field (multilinear, periodic).
    pub fn interp_linear(&self, values: &[f64], x: &[f64]) -> f64 {
        let mut idx = [0usize; 8];
        let mut w = [0.0f64; 8];
        let count = self.stencil_linear(x, &mut idx, &mut w);
        let mut s = 0.0;
        for k in 0..count {
            s += w[k] * values[idx[k]];
        }
        s
    }
}
