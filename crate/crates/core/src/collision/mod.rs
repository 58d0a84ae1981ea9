//! Cutoff hard-potential collision operator on a velocity box.
//!
//! The collision kernel is B(v - u, omega) = |v - u|^gamma q0 with
//! 0 < gamma <= 1 and a constant angular factor q0 normalized so that the
//! sphere integral of q0 is 1. Post-collision velocities follow the
//! deflection rule
//!
//! ```text
//! u' = u + [(v - u) . omega] omega,    v' = v - [(v - u) . omega] omega,
//! ```
//!
//! which conserves momentum and kinetic energy pairwise. Around the global
//! Maxwellian mu(v) = exp(-|v|^2 / 2) the linearization
//!
//! ```text
//! L f = -(1 / sqrt(mu)) [ Q(mu, sqrt(mu) f) + Q(sqrt(mu) f, mu) ] = nu f - K f
//! ```
//!
//! splits into the multiplication operator nu(v) = integral of |v - u|^gamma
//! mu(u) du and a compact integral part K = K2 - K1. Energy conservation
//! turns every exponential prefactor in K2 into a product of terms that are
//! at most one,
//!
//! ```text
//! K2 f(v) = int B sqrt(mu(u)) [ e^{-|u'|^2/4} f(v') + e^{-|v'|^2/4} f(u') ] domega du,
//! K1 f(v) = int B sqrt(mu(u) mu(v)) f(u) du,
//! ```
//!
//! so the assembly never divides by a small Maxwellian. The discrete K is
//! stored as the symmetric core S[i][j] = sqrt(W_i W_j) k(v_i, v_j) on the
//! trapezoid-weighted velocity grid; off-grid post-collision points are
//! scattered onto neighbouring nodes by multilinear weights, and velocities
//! leaving the box are dropped with their quadrature mass recorded.
//!
//! Everything here is deterministic: fixed loop orders, no threading, and
//! seeded start vectors for the iterative eigensolvers.

mod cache;
mod sphere;

pub use cache::{load_kernel_file, save_kernel_file};
pub use sphere::SphereRule;

use crate::error::{Error, Result};
use crate::grids::VelocityGrid;
use crate::numerics::{self, lanczos_lowest};
use crate::potential::PotentialField;
use once_cell::sync::OnceCell;
use serde::{Deserialize, Serialize};

/// Relative operator-action asymmetry above which the assembled kernel is
/// rejected. The gated metric is ||(S - S^T) g|| / ||S g|| with the
/// square-root-Maxwellian probe g, which converges under velocity refinement
/// and therefore detects a genuinely under-resolved quadrature. The entrywise
/// (Frobenius) asymmetry is also recorded, but it is dominated by
/// cell-average spread of the 1/|v - v'| factor across near-diagonal cells
/// — noise that cancels in quadrature and does not shrink with the mesh — so
/// it is diagnostic only.
pub const DEFAULT_ASYMMETRY_TOL: f64 = 1e-3;

/// Fraction of quadrature mass leaving the velocity box above which a
/// cutoff-loss warning is raised.
pub const CUTOFF_WARN_FRACTION: f64 = 0.01;

/// Nodes where mu(v) falls below this floor are excluded from quotient
/// operations (division by sqrt(mu)) and the output is set to zero there.
const MU_FLOOR: f64 = 1e-300;

/// Scatter sides whose post-collision energy factor e^{-|v'|^2/4} falls below
/// this value are skipped during kernel assembly; their contribution is below
/// 1e-18 of a typical kernel entry.
const NEGLIGIBLE_SIDE: f64 = 1e-18;

/// Angular factor of the collision kernel. Only the normalized constant
/// kernel is implemented; the enum keeps the configuration explicit and
/// extensible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngularKernel {
    /// q0 = 1 / |S^{d-1}|, total sphere mass 1.
    Uniform,
}

/// Interpolation order used to scatter post-collision velocities onto the
/// grid during kernel assembly. Cubic reproduces quadratics (hence the
/// collision invariants) exactly away from the box boundary, which sharpens
/// the kernel symmetry by two orders in the mesh width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpOrder {
    /// Multilinear, 2^d stencil nodes.
    Linear,
    /// Cubic Lagrange, up to 4^d stencil nodes (linear fallback at the
    /// boundary).
    Cubic,
}

/// Parameters fixing a collision model and its quadrature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionParams {
    /// Velocity dimension (2 or 3; the deflection geometry is trivial in 1D).
    pub dim: usize,
    /// Nodes per velocity axis.
    pub nodes_per_axis: usize,
    /// Velocity box half-width.
    pub v_max: f64,
    /// Relative-speed exponent, 0 < gamma <= 1 (hard potentials).
    pub gamma: f64,
    /// Weight exponent for the weighted kernel bounds; must exceed dim / 2.
    pub beta: f64,
    /// Sphere-rule order (see [`SphereRule::new`]).
    pub sphere_order: usize,
    /// Angular factor.
    pub q0: AngularKernel,
    /// Scatter interpolation order for kernel assembly.
    pub kernel_interp: InterpOrder,
    /// Pre-symmetrization relative-asymmetry tolerance.
    pub asym_tol: f64,
}

impl CollisionParams {
    /// Defaults for dimension `dim`: 24 nodes per axis on [-6, 6]^d,
    /// gamma = 1, beta = dim / 2 + 1, sphere order 3.
    pub fn new(dim: usize) -> Self {
        CollisionParams {
            dim,
            nodes_per_axis: 24,
            v_max: 6.0,
            gamma: 1.0,
            beta: dim as f64 / 2.0 + 1.0,
            sphere_order: 3,
            q0: AngularKernel::Uniform,
            kernel_interp: InterpOrder::Cubic,
            asym_tol: DEFAULT_ASYMMETRY_TOL,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim < 2 || self.dim > 3 {
            return Err(Error::InvalidParameter(format!(
                "collision deflection geometry needs dim in {{2, 3}}, got {}",
                self.dim
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if !(self.beta > self.dim as f64 / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must exceed dim/2 = {}, got {}",
                self.dim as f64 / 2.0,
                self.beta
            )));
        }
        if self.nodes_per_axis < 4 {
            return Err(Error::InvalidParameter(
                "nodes_per_axis must be at least 4".into(),
            ));
        }
        if !(self.v_max > 0.0) {
            return Err(Error::InvalidParameter("v_max must be positive".into()));
        }
        if self.sphere_order == 0 {
            return Err(Error::InvalidParameter("sphere_order must be >= 1".into()));
        }
        if !(self.asym_tol > 0.0) {
            return Err(Error::InvalidParameter("asym_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Assembly diagnostics for the kernel table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssemblyReport {
    /// Total velocity nodes.
    pub n_total: usize,
    /// Relative operator-action asymmetry ||(S - S^T) g|| / ||S g|| of the
    /// raw table before symmetrization, probed with g_i = sqrt(W_i mu_i).
    /// This is the gated metric.
    pub asymmetry_action: f64,
    /// Entrywise (Frobenius) relative asymmetry of the raw table. Diagnostic
    /// only: near-diagonal cell-average spread of the singular kernel factor
    /// keeps it O(0.1) at practical resolutions while canceling in quadrature.
    pub asymmetry_entrywise: f64,
    /// Fraction of scatter quadrature mass dropped at the box boundary.
    pub dropped_fraction: f64,
}

/// Dense symmetric kernel core S[i][j] = sqrt(W_i W_j) k(v_i, v_j), where
/// K f (v_i) = sum_j k(v_i, v_j) W_j f_j.
#[derive(Debug)]
pub struct KernelTable {
    n_total: usize,
    core: Vec<f64>,
    report: AssemblyReport,
}

impl KernelTable {
    /// Total velocity nodes (core is n_total x n_total).
    pub fn n_total(&self) -> usize {
        self.n_total
    }

    /// Flat row-major symmetric core.
    pub fn core(&self) -> &[f64] {
        &self.core
    }

    /// Assembly diagnostics.
    pub fn report(&self) -> &AssemblyReport {
        &self.report
    }

    /// Kernel value k(v_i, v_j) recovered from the core.
    pub fn kernel_value(&self, i: usize, j: usize, grid: &VelocityGrid) -> f64 {
        self.core[i * self.n_total + j] / (grid.weight(i) * grid.weight(j)).sqrt()
    }
}

/// Diagnostics from one bilinear collision application.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QStats {
    /// Fraction of gain quadrature mass dropped because a post-collision
    /// velocity left the box.
    pub dropped_fraction: f64,
    /// True when `dropped_fraction` exceeds [`CUTOFF_WARN_FRACTION`].
    pub cutoff_warning: bool,
    /// Largest relative collision-invariant moment before the conservation
    /// projection.
    pub pre_projection_rel: f64,
    /// Nodes excluded from a sqrt(mu) quotient by the underflow floor.
    pub excluded_nodes: usize,
}

/// Fitted constant for the kernel envelope
/// (|v-v'| + |v-v'|^{-1}) exp(-|v-v'|^2/8 - (|v|^2-|v'|^2)^2 / (8|v-v'|^2)).
///
/// A table entry represents kernel mass gathered from the whole grid cell
/// around the target node, so each pair is compared against the envelope
/// maximized over that cell (a rigorous interval bound). Entries below
/// `floor_abs = floor_rel * max |k|` are double-precision quadrature noise
/// and are excluded from the fit; every node pair then satisfies
/// |k| <= max(c_fit * envelope, floor_abs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeFit {
    /// Smallest constant making the cell-maximized envelope dominate every
    /// node pair above the noise floor.
    pub c_fit: f64,
    /// Node pair attaining the fit.
    pub worst_pair: (usize, usize),
    /// Relative noise floor used for the fit.
    pub floor_rel: f64,
    /// Absolute noise floor, `floor_rel` times the largest kernel entry.
    pub floor_abs: f64,
    /// Number of off-diagonal pairs at or below the noise floor.
    pub below_floor: usize,
    /// Largest ratio |k| / envelope among below-floor pairs (diagnostic for
    /// how far the noise tail sits from the fitted envelope).
    pub noise_ratio: f64,
}

/// Cutoff hard-potential collision model on a fixed velocity grid.
///
/// The collision frequency is assembled eagerly (an O(n^2) pairwise sum);
/// the dense kernel table is assembled on first use and can be saved to or
/// loaded from a binary cache file.
#[derive(Debug)]
pub struct CollisionModel {
    params: CollisionParams,
    grid: VelocityGrid,
    sphere: SphereRule,
    nu: Vec<f64>,
    mu: Vec<f64>,
    sqrt_mu: Vec<f64>,
    sqrt_w: Vec<f64>,
    inv_sqrt_w: Vec<f64>,
    kernel: OnceCell<KernelTable>,
}

impl CollisionModel {
    /// Build the grid and collision frequency for `params`.
    pub fn new(params: CollisionParams) -> Result<Self> {
        params.validate()?;
        let grid = VelocityGrid::new(params.dim, params.nodes_per_axis, params.v_max)?;
        let sphere = SphereRule::new(params.dim, params.sphere_order)?;
        let n = grid.len();
        let mut mu = Vec::with_capacity(n);
        let mut sqrt_mu = Vec::with_capacity(n);
        let mut sqrt_w = Vec::with_capacity(n);
        let mut inv_sqrt_w = Vec::with_capacity(n);
        for i in 0..n {
            let s2 = grid.speed2(i);
            mu.push((-0.5 * s2).exp());
            sqrt_mu.push((-0.25 * s2).exp());
            let w = grid.weight(i);
            sqrt_w.push(w.sqrt());
            inv_sqrt_w.push(1.0 / w.sqrt());
        }
        let nu = assemble_nu(&grid, &mu, params.gamma);
        Ok(CollisionModel {
            params,
            grid,
            sphere,
            nu,
            mu,
            sqrt_mu,
            sqrt_w,
            inv_sqrt_w,
            kernel: OnceCell::new(),
        })
    }

    /// Model parameters.
    pub fn params(&self) -> &CollisionParams {
        &self.params
    }

    /// Velocity grid.
    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    /// Sphere quadrature rule.
    pub fn sphere(&self) -> &SphereRule {
        &self.sphere
    }

    /// Per-node collision frequency.
    pub fn nu_values(&self) -> &[f64] {
        &self.nu
    }

    /// Largest collision frequency on the grid.
    pub fn nu_max(&self) -> f64 {
        self.nu.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// Smallest collision frequency on the grid.
    pub fn nu_min(&self) -> f64 {
        self.nu.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// Per-node Maxwellian mu(v) = exp(-|v|^2 / 2).
    pub fn mu_values(&self) -> &[f64] {
        &self.mu
    }

    /// Per-node sqrt(mu).
    pub fn sqrt_mu_values(&self) -> &[f64] {
        &self.sqrt_mu
    }

    /// Collision frequency at an arbitrary velocity by the same grid
    /// quadrature that fills `nu_values`.
    pub fn collision_frequency(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.params.dim);
        let d = self.params.dim;
        let nodes = self.grid.nodes_flat();
        let mut acc = 0.0;
        for j in 0..self.grid.len() {
            let mut r2 = 0.0;
            for a in 0..d {
                let t = v[a] - nodes[j * d + a];
                r2 += t * t;
            }
            acc += speed_pow(r2, self.params.gamma) * self.grid.weight(j) * self.mu[j];
        }
        acc
    }

    /// Comparability constants (c1, c2) with
    /// c1 (1 + |v|)^gamma <= nu(v) <= c2 (1 + |v|)^gamma on the grid.
    pub fn nu_comparability(&self) -> (f64, f64) {
        let mut c1 = f64::INFINITY;
        let mut c2 = 0.0f64;
        for i in 0..self.grid.len() {
            let base = (1.0 + self.grid.speed2(i).sqrt()).powf(self.params.gamma);
            let ratio = self.nu[i] / base;
            c1 = c1.min(ratio);
            c2 = c2.max(ratio);
        }
        (c1, c2)
    }

    /// The symmetric kernel table, assembled on first call.
    pub fn kernel(&self) -> Result<&KernelTable> {
        self.kernel.get_or_try_init(|| self.assemble_kernel())
    }

    /// The kernel table if it has already been assembled or loaded.
    pub fn kernel_if_assembled(&self) -> Option<&KernelTable> {
        self.kernel.get()
    }

    /// Save the assembled kernel table to a binary cache file.
    pub fn save_kernel_cache(&self, path: &std::path::Path) -> Result<()> {
        let table = self.kernel()?;
        cache::save_kernel_file(path, &self.params, &self.nu, table)
    }

    /// Load a kernel table from a binary cache file written for identical
    /// parameters. Fails if a table is already assembled.
    pub fn load_kernel_cache(&self, path: &std::path::Path) -> Result<()> {
        if self.kernel.get().is_some() {
            return Err(Error::InvalidParameter(
                "kernel table already assembled; cannot load a cache over it".into(),
            ));
        }
        let table = cache::load_kernel_file(path, &self.params, &self.nu)?;
        self.kernel
            .set(table)
            .map_err(|_| Error::InvalidParameter("kernel table set concurrently".into()))
    }

    /// Assemble the dense symmetric kernel core.
    fn assemble_kernel(&self) -> Result<KernelTable> {
        let n = self.grid.len();
        let (mut s, total, dropped) = self.assemble_raw_core();

        // Measure both raw-asymmetry metrics, gate on the operator-action
        // one, then symmetrize in place.
        let asymmetry_entrywise = raw_asymmetry(&s, n);
        let probe: Vec<f64> = (0..n)
            .map(|i| self.grid.weight(i).sqrt() * self.sqrt_mu[i])
            .collect();
        let asymmetry_action = action_asymmetry(&s, n, &probe);
        if asymmetry_action > self.params.asym_tol {
            return Err(Error::AsymmetryExceeded {
                measured: asymmetry_action,
                threshold: self.params.asym_tol,
            });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (s[i * n + j] + s[j * n + i]);
                s[i * n + j] = m;
                s[j * n + i] = m;
            }
        }

        let dropped_fraction = if total > 0.0 { dropped / total } else { 0.0 };
        Ok(KernelTable {
            n_total: n,
            core: s,
            report: AssemblyReport {
                n_total: n,
                asymmetry_action,
                asymmetry_entrywise,
                dropped_fraction,
            },
        })
    }

    /// Scatter-assemble the raw (unsymmetrized) kernel core together with the
    /// kernel-mass accounting `(core, total_mass, dropped_mass)`. The dropped
    /// mass measures kernel rows truncated by the velocity box; it is
    /// independent of any particular distribution the operator later acts on.
    fn assemble_raw_core(&self) -> (Vec<f64>, f64, f64) {
        let d = self.params.dim;
        let n_ax = self.grid.n();
        let n = self.grid.len();
        let nodes = self.grid.nodes_flat();
        let gamma = self.params.gamma;
        let mut s = vec![0.0f64; n * n];
        let mut dropped = 0.0;
        let mut total = 0.0;
        let mut up = [0.0f64; 3];
        let mut vp = [0.0f64; 3];
        let mut offs = [[0usize; 4]; 3];
        let mut wts = [[0.0f64; 4]; 3];
        let mut cnt = [0usize; 3];
        let sph_pts = self.sphere.points_flat();
        let sph_w = self.sphere.weights();
        let n_sph = sph_w.len();
        let cubic = self.params.kernel_interp == InterpOrder::Cubic;

        // Scatter one post-collision point into rows ri and rj with row
        // factors wi and wj (the per-column 1/sqrt(W) scaling is applied in a
        // single pass afterwards). Returns false when the point left the box.
        let scatter = |s: &mut [f64],
                       p: &[f64],
                       ri: usize,
                       rj: usize,
                       wi: f64,
                       wj: f64,
                       offs: &mut [[usize; 4]; 3],
                       wts: &mut [[f64; 4]; 3],
                       cnt: &mut [usize; 3]|
         -> bool {
            for a in 0..d {
                match self
                    .grid
                    .axis_stencil(p[a], cubic, &mut offs[a], &mut wts[a])
                {
                    Some(c) => cnt[a] = c,
                    None => return false,
                }
            }
            // The innermost-axis stencil nodes are consecutive, so each
            // (outer-index) combination updates a contiguous column span in
            // both target rows.
            let c_last = cnt[d - 1];
            let base_last = offs[d - 1][0];
            let w_last = &wts[d - 1][..c_last];
            if d == 2 {
                for k0 in 0..cnt[0] {
                    let b0 = offs[0][k0] * n_ax + base_last;
                    let wi0 = wi * wts[0][k0];
                    let wj0 = wj * wts[0][k0];
                    for (t, &w) in s[ri + b0..ri + b0 + c_last].iter_mut().zip(w_last) {
                        *t += wi0 * w;
                    }
                    for (t, &w) in s[rj + b0..rj + b0 + c_last].iter_mut().zip(w_last) {
                        *t += wj0 * w;
                    }
                }
            } else {
                for k0 in 0..cnt[0] {
                    let w0 = wts[0][k0];
                    let b0 = offs[0][k0] * n_ax;
                    for k1 in 0..cnt[1] {
                        let w01 = w0 * wts[1][k1];
                        let b1 = (b0 + offs[1][k1]) * n_ax + base_last;
                        let wi01 = wi * w01;
                        let wj01 = wj * w01;
                        for (t, &w) in s[ri + b1..ri + b1 + c_last].iter_mut().zip(w_last) {
                            *t += wi01 * w;
                        }
                        for (t, &w) in s[rj + b1..rj + b1 + c_last].iter_mut().zip(w_last) {
                            *t += wj01 * w;
                        }
                    }
                }
            }
            true
        };

        // The pair loop is tiled so the scatter targets (two table rows per
        // pair) stay cache-resident; a naive i < j sweep touches rows spread
        // over the full table, which is DRAM-sized at production resolutions.
        const TILE: usize = 256;
        let mut tiles: Vec<(usize, usize)> = Vec::new();
        let nb = n.div_ceil(TILE);
        for bi in 0..nb {
            for bj in bi..nb {
                tiles.push((bi, bj));
            }
        }
        for (bi, bj) in tiles {
            let i_end = ((bi + 1) * TILE).min(n);
            let j_end = ((bj + 1) * TILE).min(n);
            for i in bi * TILE..i_end {
                let vi = &nodes[i * d..i * d + d];
                let ri = i * n;
                let j_start = if bi == bj { i + 1 } else { bj * TILE };
                for j in j_start..j_end {
                    let vj = &nodes[j * d..j * d + d];
                    let rj = j * n;
                    let mut r2 = 0.0;
                    for a in 0..d {
                        let t = vi[a] - vj[a];
                        r2 += t * t;
                    }
                    let b_bar = speed_pow(r2, gamma);
                    // Row prefactors: row i integrates against u = v_j and vice
                    // versa. The shared bracket e_u st(v') + e_v st(u') is the
                    // same for both rows.
                    let a_i = self.sqrt_w[i] * self.grid.weight(j) * self.sqrt_mu[j] * b_bar;
                    let a_j = self.sqrt_w[j] * self.grid.weight(i) * self.sqrt_mu[i] * b_bar;
                    // Collision energy identity: |u'|^2 + |v'|^2 = |v_i|^2 +
                    // |v_j|^2, so e_u * e_v = sqrt(mu_i) * sqrt(mu_j) and the
                    // second energy factor is a division, not a second exp.
                    // Both factors live in [e^{-54}, 1] on the velocity box.
                    let smu_ij = self.sqrt_mu[i] * self.sqrt_mu[j];
                    for k in 0..n_sph {
                        let om = &sph_pts[k * d..k * d + d];
                        let q = sph_w[k];
                        let mut c = 0.0;
                        for a in 0..d {
                            c += (vi[a] - vj[a]) * om[a];
                        }
                        let mut su = 0.0;
                        for a in 0..d {
                            up[a] = vj[a] + c * om[a];
                            vp[a] = vi[a] - c * om[a];
                            su += up[a] * up[a];
                        }
                        let e_u = (-0.25 * su).exp();
                        let e_v = smu_ij / e_u;
                        let aiq = a_i * q;
                        let ajq = a_j * q;
                        let side_mass = (a_i + a_j) * q;
                        // Side 1: factor e_u scattered at v'. Sides whose energy
                        // factor is below NEGLIGIBLE_SIDE contribute less than
                        // 1e-18 of a typical entry and are skipped outright.
                        if e_u > NEGLIGIBLE_SIDE {
                            total += side_mass * e_u;
                            if !scatter(
                                &mut s,
                                &vp[..d],
                                ri,
                                rj,
                                aiq * e_u,
                                ajq * e_u,
                                &mut offs,
                                &mut wts,
                                &mut cnt,
                            ) {
                                dropped += side_mass * e_u;
                            }
                        }
                        // Side 2: factor e_v scattered at u'.
                        if e_v > NEGLIGIBLE_SIDE {
                            total += side_mass * e_v;
                            if !scatter(
                                &mut s,
                                &up[..d],
                                ri,
                                rj,
                                aiq * e_v,
                                ajq * e_v,
                                &mut offs,
                                &mut wts,
                                &mut cnt,
                            ) {
                                dropped += side_mass * e_v;
                            }
                        }
                    }
                }
            }
        }

        // Deferred per-column 1/sqrt(W) scaling of the scatter phase.
        for row in s.chunks_exact_mut(n) {
            for (x, f) in row.iter_mut().zip(self.inv_sqrt_w.iter()) {
                *x *= f;
            }
        }

        // Subtract the pointwise part K1 with kernel
        // |v - v'|^gamma sqrt(mu(v) mu(v')); its core is exactly symmetric.
        for i in 0..n {
            let vi = &nodes[i * d..i * d + d];
            for j in (i + 1)..n {
                let vj = &nodes[j * d..j * d + d];
                let mut r2 = 0.0;
                for a in 0..d {
                    let t = vi[a] - vj[a];
                    r2 += t * t;
                }
                let k1 = speed_pow(r2, gamma)
                    * self.sqrt_mu[i]
                    * self.sqrt_mu[j]
                    * self.sqrt_w[i]
                    * self.sqrt_w[j];
                s[i * n + j] -= k1;
                s[j * n + i] -= k1;
            }
        }

        (s, total, dropped)
    }

    /// Bilinear collision operator Q(F1, F2) on nodal slices, with the
    /// collision invariants restored exactly by a Maxwellian-weighted
    /// projection. Returns the projected output and quadrature diagnostics.
    pub fn apply_q(&self, f1: &[f64], f2: &[f64]) -> Result<(Vec<f64>, QStats)> {
        self.check_slice(f1)?;
        self.check_slice(f2)?;
        let d = self.params.dim;
        let n = self.grid.len();
        let nodes = self.grid.nodes_flat();
        let gamma = self.params.gamma;
        let mut out = vec![0.0f64; n];
        let mut dropped = 0.0;
        let mut total = 0.0;
        let mut up = [0.0f64; 3];
        let mut vp = [0.0f64; 3];
        let mut idx_u = [0usize; 8];
        let mut wst_u = [0.0f64; 8];
        let mut idx_v = [0usize; 8];
        let mut wst_v = [0.0f64; 8];
        let sph_pts = self.sphere.points_flat();
        let sph_w = self.sphere.weights();
        let n_sph = sph_w.len();
        let same = std::ptr::eq(f1.as_ptr(), f2.as_ptr());

        // Loss part: F2(v) * sum_u B F1(u). The inner sum over u is shared
        // against both slices via a single pairwise sweep.
        let mut loss1 = vec![0.0f64; n]; // sum_j B_ij W_j f1_j
        for i in 0..n {
            let vi = &nodes[i * d..i * d + d];
            let mut acc = 0.0;
            for j in 0..n {
                let vj = &nodes[j * d..j * d + d];
                let mut r2 = 0.0;
                for a in 0..d {
                    let t = vi[a] - vj[a];
                    r2 += t * t;
                }
                acc += speed_pow(r2, gamma) * self.grid.weight(j) * f1[j];
            }
            loss1[i] = acc;
        }

        // Gain part by an unordered pairwise sweep: the pair (i, j) feeds
        // row i with F1(u') F2(v') and row j with F1(v') F2(u'), where both
        // post-collision points are shared.
        for i in 0..n {
            let vi = &nodes[i * d..i * d + d];
            let wi = self.grid.weight(i);
            for j in (i + 1)..n {
                let vj = &nodes[j * d..j * d + d];
                let wj = self.grid.weight(j);
                let mut r2 = 0.0;
                for a in 0..d {
                    let t = vi[a] - vj[a];
                    r2 += t * t;
                }
                let b_bar = speed_pow(r2, gamma);
                let mass_i = b_bar * wj * (f1[j] * f2[i]).abs();
                let mass_j = b_bar * wi * (f1[i] * f2[j]).abs();
                for k in 0..n_sph {
                    let om = &sph_pts[k * d..k * d + d];
                    let q = sph_w[k];
                    let mut c = 0.0;
                    for a in 0..d {
                        c += (vi[a] - vj[a]) * om[a];
                    }
                    let mut in_box = true;
                    for a in 0..d {
                        up[a] = vj[a] + c * om[a];
                        vp[a] = vi[a] - c * om[a];
                    }
                    total += (mass_i + mass_j) * q;
                    let cnt_v = match self.grid.stencil_linear(&vp[..d], &mut idx_v, &mut wst_v) {
                        Some(c) => c,
                        None => {
                            in_box = false;
                            0
                        }
                    };
                    let cnt_u = match self.grid.stencil_linear(&up[..d], &mut idx_u, &mut wst_u) {
                        Some(c) => c,
                        None => {
                            in_box = false;
                            0
                        }
                    };
                    if !in_box {
                        dropped += (mass_i + mass_j) * q;
                        continue;
                    }
                    let mut f1_u = 0.0;
                    let mut f2_u = 0.0;
                    for t in 0..cnt_u {
                        f1_u += wst_u[t] * f1[idx_u[t]];
                        if !same {
                            f2_u += wst_u[t] * f2[idx_u[t]];
                        }
                    }
                    let mut f1_v = 0.0;
                    let mut f2_v = 0.0;
                    for t in 0..cnt_v {
                        f1_v += wst_v[t] * f1[idx_v[t]];
                        if !same {
                            f2_v += wst_v[t] * f2[idx_v[t]];
                        }
                    }
                    if same {
                        f2_u = f1_u;
                        f2_v = f1_v;
                    }
                    out[i] += b_bar * wj * q * f1_u * f2_v;
                    out[j] += b_bar * wi * q * f1_v * f2_u;
                }
            }
        }

        // Reference magnitudes for the conservation defect: the loss part
        // is the collision throughput; the near-equilibrium output itself
        // cancels to quadrature noise and would inflate a relative metric.
        let mut reference = vec![0.0f64; n];
        for i in 0..n {
            reference[i] = (f2[i] * loss1[i]).abs();
            out[i] -= f2[i] * loss1[i];
        }

        let pre_projection_rel = self.conserve_project(&mut out, &reference)?;
        let dropped_fraction = if total > 0.0 { dropped / total } else { 0.0 };
        Ok((
            out,
            QStats {
                dropped_fraction,
                cutoff_warning: dropped_fraction > CUTOFF_WARN_FRACTION,
                pre_projection_rel,
                excluded_nodes: 0,
            },
        ))
    }

    /// Bilinear form around the Maxwellian:
    /// Gamma(f1, f2) = Q(sqrt(mu) f1, sqrt(mu) f2) / sqrt(mu).
    /// Nodes with mu below the underflow floor are zeroed and counted.
    pub fn apply_gamma(&self, f1: &[f64], f2: &[f64]) -> Result<(Vec<f64>, QStats)> {
        self.check_slice(f1)?;
        self.check_slice(f2)?;
        let n = self.grid.len();
        let mut g1 = vec![0.0; n];
        let mut g2 = vec![0.0; n];
        for i in 0..n {
            g1[i] = self.sqrt_mu[i] * f1[i];
            g2[i] = self.sqrt_mu[i] * f2[i];
        }
        let (mut q, mut stats) = self.apply_q(&g1, &g2)?;
        let mut excluded = 0usize;
        for i in 0..n {
            if self.mu[i] < MU_FLOOR {
                q[i] = 0.0;
                excluded += 1;
            } else {
                q[i] /= self.sqrt_mu[i];
            }
        }
        stats.excluded_nodes = excluded;
        Ok((q, stats))
    }

    /// Integral part K f of the linearized operator (kernel-table matvec).
    pub fn apply_k(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_slice(f)?;
        let table = self.kernel()?;
        let n = table.n_total;
        let mut scaled = vec![0.0; n];
        for i in 0..n {
            scaled[i] = self.sqrt_w[i] * f[i];
        }
        let mut out = vec![0.0; n];
        for i in 0..n {
            let row = &table.core[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += row[j] * scaled[j];
            }
            out[i] = acc * self.inv_sqrt_w[i];
        }
        Ok(out)
    }

    /// Linearized operator L f = nu f - K f.
    pub fn apply_l(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.apply_k(f)?;
        for i in 0..out.len() {
            out[i] = self.nu[i] * f[i] - out[i];
        }
        Ok(out)
    }

    /// Weight w(x, v) = (|v|^2 / 2 + phi)^{beta/2} for all grid nodes at a
    /// fixed potential value.
    pub fn weights_at(&self, phi: f64) -> Vec<f64> {
        let half_beta = 0.5 * self.params.beta;
        (0..self.grid.len())
            .map(|i| (0.5 * self.grid.speed2(i) + phi).powf(half_beta))
            .collect()
    }

    /// Weighted integral operator K_w h = w K(h / w) at torus point `x`.
    pub fn apply_kw(&self, field: &PotentialField, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        if field.dim() != self.params.dim {
            return Err(Error::InvalidParameter(format!(
                "potential dimension {} does not match collision dimension {}",
                field.dim(),
                self.params.dim
            )));
        }
        self.check_slice(h)?;
        let phi = field.value(x);
        let w = self.weights_at(phi);
        check_weight_floor(&w)?;
        let n = self.grid.len();
        let mut inner = vec![0.0; n];
        for i in 0..n {
            inner[i] = h[i] / w[i];
        }
        let mut out = self.apply_k(&inner)?;
        for i in 0..n {
            out[i] *= w[i];
        }
        Ok(out)
    }

    /// Row sums sum_j |k_w(v_i, v_j)| W_j of the weighted kernel at a fixed
    /// potential value.
    ///
    /// The grid-converged profile rises to a single interior maximum near
    /// |v| ~ 3.4 and decays monotonically toward the box edge; the
    /// inverse-speed envelope C / (1 + |v|) is an upper bound whose fitted
    /// constant is attained near the edge, not at the origin.
    pub fn weighted_row_sums(&self, phi: f64) -> Result<Vec<f64>> {
        let table = self.kernel()?;
        let n = table.n_total;
        let w = self.weights_at(phi);
        check_weight_floor(&w)?;
        let mut sums = vec![0.0; n];
        for i in 0..n {
            let row = &table.core[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                // |k_ij| W_j = |S_ij| sqrt(W_j / W_i).
                acc += row[j].abs() * self.sqrt_w[j] * self.inv_sqrt_w[i] / w[j];
            }
            sums[i] = acc * w[i];
        }
        Ok(sums)
    }

    /// Fit the smallest constant C with |k(v, v')| <= C (r + 1/r)
    /// exp(-r^2/8 - (|v|^2 - |v'|^2)^2 / (8 r^2)) over all off-diagonal node
    /// pairs, r = |v - v'|, with the envelope maximized over the target grid
    /// cell and entries below `floor_rel * max |k|` treated as quadrature
    /// noise (see [`EnvelopeFit`]).
    pub fn envelope_fit(&self, floor_rel: f64) -> Result<EnvelopeFit> {
        if !(floor_rel >= 0.0 && floor_rel < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "envelope noise floor must lie in [0, 1), got {floor_rel}"
            )));
        }
        let table = self.kernel()?;
        let d = self.params.dim;
        let n = table.n_total;
        let nodes = self.grid.nodes_flat();
        let h = self.grid.h();
        let mut k_max = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let k = (table.core[i * n + j] * self.inv_sqrt_w[i] * self.inv_sqrt_w[j]).abs();
                k_max = k_max.max(k);
            }
        }
        let floor_abs = floor_rel * k_max;
        let mut c_fit = 0.0f64;
        let mut worst = (0usize, 0usize);
        let mut below = 0usize;
        let mut noise_ratio = 0.0f64;
        for i in 0..n {
            let vi = &nodes[i * d..i * d + d];
            let s2i = self.grid.speed2(i);
            for j in (i + 1)..n {
                let vj = &nodes[j * d..j * d + d];
                let env = envelope_cell_upper(vi, s2i, vj, h);
                let k = (table.core[i * n + j] * self.inv_sqrt_w[i] * self.inv_sqrt_w[j]).abs();
                let ratio = k / env;
                if k <= floor_abs {
                    below += 1;
                    noise_ratio = noise_ratio.max(ratio);
                } else if ratio > c_fit {
                    c_fit = ratio;
                    worst = (i, j);
                }
            }
        }
        Ok(EnvelopeFit {
            c_fit,
            worst_pair: worst,
            floor_rel,
            floor_abs,
            below_floor: below,
            noise_ratio,
        })
    }

    /// Fit the smallest constant C with
    /// w(v) / w(v') <= C (1 + |v - v'|^2)^{beta/2} over all node pairs at a
    /// fixed potential value.
    pub fn weight_ratio_fit(&self, phi: f64) -> f64 {
        let d = self.params.dim;
        let n = self.grid.len();
        let nodes = self.grid.nodes_flat();
        let w = self.weights_at(phi);
        let half_beta = 0.5 * self.params.beta;
        let mut c = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mut r2 = 0.0;
                for a in 0..d {
                    let t = nodes[i * d + a] - nodes[j * d + a];
                    r2 += t * t;
                }
                let bound = (1.0 + r2).powf(half_beta);
                c = c.max(w[i] / w[j] / bound);
            }
        }
        c
    }

    /// Relative null-space residuals ||L phi|| / ||nu phi|| for the
    /// collision invariants phi in {sqrt(mu), v_a sqrt(mu), |v|^2 sqrt(mu)},
    /// in weighted L2 norms.
    pub fn null_residuals(&self) -> Result<Vec<f64>> {
        let d = self.params.dim;
        let n = self.grid.len();
        let nodes = self.grid.nodes_flat();
        let mut residuals = Vec::with_capacity(d + 2);
        for k in 0..d + 2 {
            let mut phi = vec![0.0; n];
            for i in 0..n {
                let factor = match k {
                    0 => 1.0,
                    _ if k <= d => nodes[i * d + (k - 1)],
                    _ => self.grid.speed2(i),
                };
                phi[i] = factor * self.sqrt_mu[i];
            }
            let l_phi = self.apply_l(&phi)?;
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                num += self.grid.weight(i) * l_phi[i] * l_phi[i];
                den += self.grid.weight(i) * (self.nu[i] * phi[i]).powi(2);
            }
            residuals.push((num / den).sqrt());
        }
        Ok(residuals)
    }

    /// Smallest eigenvalue of the symmetrized discrete L (in the
    /// quadrature-weighted inner product), with its Lanczos residual bound.
    pub fn lowest_eigenvalue(&self, seed: u64, max_iter: usize) -> Result<(f64, f64)> {
        let table = self.kernel()?;
        let n = table.n_total;
        let start = seeded_start(n, seed);
        let pairs = lanczos_lowest(n, max_iter, 1, &start, |x, y| {
            dense_symm_matvec(&table.core, n, x, y);
            for i in 0..n {
                y[i] = self.nu[i] * x[i] - y[i];
            }
        });
        let p = &pairs[0];
        Ok((p.value, p.residual))
    }

    /// Microscopic spectral gap: the minimum of <L f, f> / ||f||_nu^2 over
    /// f nu-orthogonal to span{sqrt(mu), v_a sqrt(mu), |v|^2 sqrt(mu)}.
    pub fn spectral_gap(&self, seed: u64, max_iter: usize) -> Result<f64> {
        let table = self.kernel()?;
        let d = self.params.dim;
        let n = table.n_total;
        let nodes = self.grid.nodes_flat();
        // Operator M = D^{-1/2} (nu - S) D^{-1/2} with D = diag(nu) in the
        // sqrt(W)-scaled basis; the constraint directions are
        // p_k = D^{1/2} sqrt(W) phi_k, orthonormalized.
        let sqrt_nu: Vec<f64> = self.nu.iter().map(|x| x.sqrt()).collect();
        let mut constraints: Vec<Vec<f64>> = Vec::with_capacity(d + 2);
        for k in 0..d + 2 {
            let mut p = vec![0.0; n];
            for i in 0..n {
                let factor = match k {
                    0 => 1.0,
                    _ if k <= d => nodes[i * d + (k - 1)],
                    _ => self.grid.speed2(i),
                };
                p[i] = sqrt_nu[i] * self.sqrt_w[i] * factor * self.sqrt_mu[i];
            }
            for prev in &constraints {
                let c = numerics::dot(prev, &p);
                numerics::axpy(&mut p, -c, prev);
            }
            let nrm = numerics::norm2(&p);
            if nrm < 1e-12 {
                return Err(Error::InvariantViolation(
                    "collision-invariant constraint set is numerically dependent".into(),
                ));
            }
            numerics::scale(&mut p, 1.0 / nrm);
            constraints.push(p);
        }
        // Push the constraint directions to a large eigenvalue so the low
        // end of the projected operator is the gap.
        let shift = 10.0;
        let start = {
            let mut s = seeded_start(n, seed ^ 0x9e37_79b9_7f4a_7c15);
            project_out(&mut s, &constraints);
            s
        };
        let mut tmp = vec![0.0; n];
        let mut residual = vec![0.0; n];
        let pairs = lanczos_lowest(n, max_iter, 1, &start, |x, y| {
            // y = P M P x + shift (I - P) x
            tmp.copy_from_slice(x);
            residual.copy_from_slice(x);
            project_out(&mut tmp, &constraints);
            for i in 0..n {
                residual[i] -= tmp[i];
            }
            for i in 0..n {
                tmp[i] /= sqrt_nu[i];
            }
            dense_symm_matvec(&table.core, n, &tmp, y);
            for i in 0..n {
                y[i] = (self.nu[i] * tmp[i] - y[i]) / sqrt_nu[i];
            }
            project_out(y, &constraints);
            for i in 0..n {
                y[i] += shift * residual[i];
            }
        });
        Ok(pairs[0].value)
    }

    /// Maxwellian-weighted projection restoring the collision invariants:
    /// subtracts mu(v) (c . phi(v)) so that every moment
    /// sum_i W_i out_i phi_k(v_i) vanishes, phi in {1, v, |v|^2}. Returns
    /// the largest pre-projection moment relative to the same moment of the
    /// nonnegative `reference` magnitudes.
    fn conserve_project(&self, out: &mut [f64], reference: &[f64]) -> Result<f64> {
        let d = self.params.dim;
        let n = self.grid.len();
        let nodes = self.grid.nodes_flat();
        let m = d + 2;
        let mut moments = vec![0.0; m];
        let mut scales = vec![0.0; m];
        for i in 0..n {
            let wq = self.grid.weight(i);
            for k in 0..m {
                let factor = match k {
                    0 => 1.0,
                    _ if k <= d => nodes[i * d + (k - 1)],
                    _ => self.grid.speed2(i),
                };
                moments[k] += wq * out[i] * factor;
                scales[k] += wq * reference[i] * factor.abs();
            }
        }
        let mut gram = vec![0.0; m * m];
        for i in 0..n {
            let wq = self.grid.weight(i) * self.mu[i];
            let mut phi = [0.0f64; 5];
            phi[0] = 1.0;
            for a in 0..d {
                phi[a + 1] = nodes[i * d + a];
            }
            phi[d + 1] = self.grid.speed2(i);
            for k in 0..m {
                for l in k..m {
                    gram[k * m + l] += wq * phi[k] * phi[l];
                }
            }
        }
        for k in 0..m {
            for l in 0..k {
                gram[k * m + l] = gram[l * m + k];
            }
        }
        let coeff = numerics::cholesky_solve(gram, m, &moments)?;
        for i in 0..n {
            let mut corr = coeff[0];
            for a in 0..d {
                corr += coeff[a + 1] * nodes[i * d + a];
            }
            corr += coeff[d + 1] * self.grid.speed2(i);
            out[i] -= self.mu[i] * corr;
        }
        let mut rel = 0.0f64;
        for k in 0..m {
            if scales[k] > 0.0 {
                rel = rel.max(moments[k].abs() / scales[k]);
            }
        }
        Ok(rel)
    }

    fn check_slice(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.grid.len() {
            return Err(Error::InvalidParameter(format!(
                "slice length {} does not match grid size {}",
                f.len(),
                self.grid.len()
            )));
        }
        if f.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "slice contains non-finite values".into(),
            ));
        }
        Ok(())
    }
}

/// Reject weight vectors containing non-positive entries: dividing by such a
/// weight is singular. This happens only when a grid node sits exactly at
/// v = 0 (odd nodes per axis) while the potential value is zero.
fn check_weight_floor(w: &[f64]) -> Result<()> {
    if w.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter(
            "velocity weight vanishes at a grid node; use a positive potential value \
             or an even number of nodes per axis"
                .into(),
        ));
    }
    Ok(())
}

/// Upper bound of the kernel envelope
/// (r + 1/r) exp(-r^2/8 - (|v|^2 - |v'|^2)^2 / (8 r^2)) over v' ranging in
/// the grid cell of half-width h/2 around `vj`, where r = |vi - v'| and
/// |vi|^2 = s2i. Each factor is bounded separately by interval arithmetic,
/// so the result dominates the pointwise envelope everywhere in the cell.
fn envelope_cell_upper(vi: &[f64], s2i: f64, vj: &[f64], h: f64) -> f64 {
    let half = 0.5 * h;
    let mut r2min = 0.0;
    let mut r2max = 0.0;
    let mut s_lo = 0.0;
    let mut s_hi = 0.0;
    for a in 0..vi.len() {
        let dist = (vi[a] - vj[a]).abs();
        let lo = (dist - half).max(0.0);
        let hi = dist + half;
        r2min += lo * lo;
        r2max += hi * hi;
        let xlo = vj[a] - half;
        let xhi = vj[a] + half;
        let mut qlo = xlo.abs().min(xhi.abs());
        if xlo <= 0.0 && xhi >= 0.0 {
            qlo = 0.0;
        }
        let qhi = xlo.abs().max(xhi.abs());
        s_lo += qlo * qlo;
        s_hi += qhi * qhi;
    }
    let rmin = r2min.sqrt();
    let rmax = r2max.sqrt();
    // r + 1/r attains its maximum over [rmin, rmax] at an endpoint.
    let f = (rmin + 1.0 / rmin).max(rmax + 1.0 / rmax);
    let ds = if s2i < s_lo {
        s_lo - s2i
    } else if s2i > s_hi {
        s2i - s_hi
    } else {
        0.0
    };
    f * (-0.125 * r2min - ds * ds / (8.0 * r2max)).exp()
}

/// Frobenius relative asymmetry sqrt(sum (s_ij - s_ji)^2 / sum s_ij^2) of a
/// dense row-major n x n matrix.
fn raw_asymmetry(s: &[f64], n: usize) -> f64 {
    let mut diff2 = 0.0;
    let mut norm2 = 0.0;
    for i in 0..n {
        norm2 += s[i * n + i] * s[i * n + i];
        for j in (i + 1)..n {
            let a = s[i * n + j];
            let b = s[j * n + i];
            diff2 += (a - b) * (a - b);
            norm2 += a * a + b * b;
        }
    }
    if norm2 > 0.0 {
        (diff2 / norm2).sqrt()
    } else {
        0.0
    }
}

/// Relative operator-action asymmetry ||(S - S^T) g|| / ||S g|| of a dense
/// row-major n x n matrix on the probe vector g. S g and S^T g are fused into
/// one pass over the table.
fn action_asymmetry(s: &[f64], n: usize, g: &[f64]) -> f64 {
    let mut sg = vec![0.0f64; n];
    let mut stg = vec![0.0f64; n];
    for i in 0..n {
        let row = &s[i * n..(i + 1) * n];
        let gi = g[i];
        let mut acc = 0.0;
        for (j, &sij) in row.iter().enumerate() {
            acc += sij * g[j];
            stg[j] += sij * gi;
        }
        sg[i] = acc;
    }
    let mut diff2 = 0.0;
    let mut norm2 = 0.0;
    for i in 0..n {
        let d = sg[i] - stg[i];
        diff2 += d * d;
        norm2 += sg[i] * sg[i];
    }
    if norm2 > 0.0 {
        (diff2 / norm2).sqrt()
    } else {
        0.0
    }
}

/// |v - u|^gamma from the squared distance, with a fast path for gamma = 1.
#[inline]
fn speed_pow(r2: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        r2.sqrt()
    } else {
        r2.powf(0.5 * gamma)
    }
}

/// Pairwise collision frequency nu_i = sum_j |v_i - v_j|^gamma W_j mu_j.
fn assemble_nu(grid: &VelocityGrid, mu: &[f64], gamma: f64) -> Vec<f64> {
    let d = grid.dim();
    let n = grid.len();
    let nodes = grid.nodes_flat();
    let mut nu = vec![0.0; n];
    for i in 0..n {
        let vi = &nodes[i * d..i * d + d];
        let mut acc = 0.0;
        for j in 0..n {
            let vj = &nodes[j * d..j * d + d];
            let mut r2 = 0.0;
            for a in 0..d {
                let t = vi[a] - vj[a];
                r2 += t * t;
            }
            acc += speed_pow(r2, gamma) * grid.weight(j) * mu[j];
        }
        nu[i] = acc;
    }
    nu
}

/// y = S x for a dense symmetric row-major matrix.
fn dense_symm_matvec(s: &[f64], n: usize, x: &[f64], y: &mut [f64]) {
    for i in 0..n {
        let row = &s[i * n..(i + 1) * n];
        let mut acc = 0.0;
        for j in 0..n {
            acc += row[j] * x[j];
        }
        y[i] = acc;
    }
}

/// Deterministic pseudo-random start vector for the eigensolvers.
fn seeded_start(n: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Remove the components of `x` along an orthonormal set.
fn project_out(x: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = numerics::dot(b, x);
        numerics::axpy(x, -c, b);
    }
}

#[cfg(test)]
mod tests;
