//! Linear L2 decay machinery: the empirical positivity constant of the
//! linearized collision operator along conservation-constrained runs, the
//! macroscopic-equation residuals, the Gram nondegeneracy check behind the
//! uniqueness of the null solution, and the discrete-time decay bootstrap
//! that turns the positivity constant into an exponential rate.

use crate::collision::CollisionModel;
use crate::equilibrium::Background;
use crate::error::{Error, Result};
use crate::grids::SpatialGrid;
use crate::numerics;
use crate::potential::{DegenerateSubspace, PotentialField};
use crate::spectral::TorusDifferentiator;
use serde::{Deserialize, Serialize};

/// Exponential-decay fit of a norm series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted rate: norm(t) ~ C e^{-lambda t}.
    pub lambda: f64,
    /// Fitted prefactor.
    pub c: f64,
    /// Quality of the least-squares fit of log norm vs t, in [0, 1].
    pub r_squared: f64,
    /// Time window the fit was performed on.
    pub window: (f64, f64),
}

/// Where a set of macroscopic fields came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroSource {
    /// Hydrodynamic projection coefficients of a simulated solution.
    ProjectedFromSolution,
    /// Hand-constructed fields (test families, perturbations).
    Synthetic,
}

/// Time series of macroscopic fields (a, b, c) on the spatial grid.
///
/// Layouts: `a[k][ix]` and `c[k][ix]` are scalars at time `times[k]` and
/// spatial node `ix`; `b[k][ix * d + comp]` is the d-vector field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MacroFields {
    pub times: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub source: MacroSource,
}

/// Sup-norm residuals of the macroscopic equations, one per equation, plus
/// the derived Laplace identity for b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroResiduals {
    /// da/dt - grad(Phi) . b.
    pub me1: f64,
    /// db/dt + grad(a) - 2 c grad(Phi), sup over components.
    pub me2: f64,
    /// dc/dt + d b_i / d x_i, sup over every axis i separately.
    pub me3: f64,
    /// d_j b_i + d_i b_j for i != j, sup over pairs.
    pub me4: f64,
    /// grad(c), sup over components.
    pub me5: f64,
    /// Laplace(b_i) - (d - 2) d_i (dc/dt), sup over components.
    pub laplace_b: f64,
}

impl MacroResiduals {
    /// Largest of the five equation residuals (the Laplace identity is
    /// derived, not an independent equation).
    pub fn max_equation(&self) -> f64 {
        self.me1
            .max(self.me2)
            .max(self.me3)
            .max(self.me4)
            .max(self.me5)
    }
}

/// One linearized-solution trajectory: perturbation snapshots on the phase
/// grid (space-major layout, `values[ix * nv + iv]`) at increasing times.
#[derive(Debug, Clone)]
pub struct LinearTrajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
}

/// Empirical positivity constant of the linearized operator over a battery
/// of conservation-constrained runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositivityEstimate {
    /// Minimum over runs of int_0^1 <L f, f> ds / int_0^1 ||f||_nu^2 ds.
    pub m_hat: f64,
    /// The per-run ratios, in run order.
    pub per_run: Vec<f64>,
    /// Largest linear-invariant drift seen in any snapshot, relative to the
    /// run's initial L2 norm.
    pub worst_invariant_drift: f64,
}

/// Output of the null-solution nondegeneracy check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GramCheck {
    /// Determinant of the 2x2 Gram matrix of {sqrt(mu_E), (Phi + |v|^2/2)
    /// sqrt(mu_E)} in phase-space quadrature.
    pub determinant: f64,
    pub g00: f64,
    pub g01: f64,
    pub g11: f64,
    /// int int (e . v)^2 mu_E for each degenerate direction e.
    pub vsq_integrals: Vec<f64>,
    /// True when the determinant clears the relative floor and every
    /// degenerate-direction coefficient is strictly positive, so the
    /// constraint system forces (phi_0, c_0, b_0) = 0.
    pub pass: bool,
}

/// Result of the discrete-time decay bootstrap on a norm series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    /// Least-squares exponential fit over the whole series.
    pub fit: DecayFit,
    /// Largest lambda with e^{2 lambda N} ||f(N)||^2 <= ||f(0)||^2 for every
    /// whole unit interval N in range (0 for a constant series; negative if
    /// the series ends above its start).
    pub lambda_discrete: f64,
    /// Root of lambda e^{2 lambda} = nu_0 M_hat e^{-sup Phi}.
    pub lambda_admissible: f64,
    /// Whether the discrete inequality holds at `lambda_admissible`.
    pub discrete_holds: bool,
    /// True when the series is flat to rounding, so the fit rate carries no
    /// information.
    pub degenerate_fit: bool,
}

/// Relative floor for the Gram determinant: `det > GRAM_DET_FLOOR * g00 *
/// g11` is required for a pass.
pub const GRAM_DET_FLOOR: f64 = 1e-12;

/// Relative slack allowed for norm growth across a unit interval before
/// [`Error::NonMonotone`] is raised.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// Empirical positivity constant of Proposition-style coercivity along
/// conservation-constrained linearized runs.
///
/// For each run the ratio int_0^1 <L f(s), f(s)> ds / int_0^1 ||f(s)||_nu^2
/// ds is computed by trapezoid quadrature over the snapshots inside [0, 1];
/// `m_hat` is the minimum over runs. Every snapshot must keep the linear
/// invariants <sqrt(mu_E), f>, <(Phi + |v|^2/2) sqrt(mu_E), f>, and
/// <(e . v) sqrt(mu_E), f> along each degenerate direction e within
/// `invariant_tol` relative to the run's initial L2 norm.
pub fn positivity_constant(
    bg: &Background,
    model: &CollisionModel,
    subspace: &DegenerateSubspace,
    runs: &[LinearTrajectory],
    invariant_tol: f64,
) -> Result<PositivityEstimate> {
    if runs.is_empty() {
        return Err(Error::InvalidParameter(
            "positivity constant needs at least one run".into(),
        ));
    }
    if bg.velocity_grid().len() != model.grid().len()
        || bg.velocity_grid().dim() != model.grid().dim()
    {
        return Err(Error::InvalidParameter(
            "background velocity grid does not match the collision model".into(),
        ));
    }
    let nx = bg.n_space();
    let nv = bg.n_velocity();
    let d = bg.velocity_grid().dim();
    let vg = bg.velocity_grid();
    let sg = bg.spatial_grid();
    let nodes = vg.nodes_flat();
    let sqrt_mu_e = bg.sqrt_mu_e();
    let phi = bg.phi();

    // Invariant moment functions evaluated per phase node: mass, energy, and
    // one momentum per degenerate direction.
    let n_inv = 2 + subspace.n;
    let mut per_run = Vec::with_capacity(runs.len());
    let mut worst_drift = 0.0f64;

    for (run_idx, run) in runs.iter().enumerate() {
        if run.times.len() != run.snapshots.len() || run.times.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "run {run_idx}: need matching times and snapshots, at least 2"
            )));
        }
        for w in run.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParameter(format!(
                    "run {run_idx}: times must increase strictly"
                )));
            }
        }
        if run.times[0].abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "run {run_idx}: series must start at t = 0, got {}",
                run.times[0]
            )));
        }
        if run.times[run.times.len() - 1] < 1.0 - 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "run {run_idx}: series must cover [0, 1], ends at {}",
                run.times[run.times.len() - 1]
            )));
        }

        let norm0 = bg.phase_norm(&run.snapshots[0]);
        if !(norm0 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "run {run_idx}: initial snapshot has zero norm (not a valid run)"
            )));
        }

        // Trapezoid weights on the samples restricted to [0, 1].
        let mut cut = run.times.len();
        for (k, &t) in run.times.iter().enumerate() {
            if t > 1.0 + 1e-9 {
                cut = k;
                break;
            }
        }
        let times = &run.times[..cut];
        let mut numerator = 0.0;
        let mut denominator = 0.0;
        for (k, snap) in run.snapshots.iter().enumerate() {
            if snap.len() != nx * nv {
                return Err(Error::InvalidParameter(format!(
                    "run {run_idx}: snapshot {k} has {} values, phase grid has {}",
                    snap.len(),
                    nx * nv
                )));
            }

            // Linear-invariant drift, relative to the initial norm.
            let mut inv = vec![0.0f64; n_inv];
            for ix in 0..nx {
                let wx = sg.node_weight();
                let fx = &snap[ix * nv..(ix + 1) * nv];
                let sm = &sqrt_mu_e[ix * nv..(ix + 1) * nv];
                let p = phi[ix];
                for iv in 0..nv {
                    let wv = vg.weight(iv) * wx;
                    let base = sm[iv] * fx[iv] * wv;
                    inv[0] += base;
                    inv[1] += (p + 0.5 * vg.speed2(iv)) * base;
                    for (s, dir) in subspace.basis.iter().enumerate() {
                        let mut ev = 0.0;
                        for a in 0..d {
                            ev += dir[a] * nodes[iv * d + a];
                        }
                        inv[2 + s] += ev * base;
                    }
                }
            }
            for &q in &inv {
                let drift = q.abs() / norm0;
                worst_drift = worst_drift.max(drift);
                if drift > invariant_tol {
                    return Err(Error::InvariantViolation(format!(
                        "run {run_idx}, snapshot {k}: linear invariant drift {drift:.3e} \
                         exceeds {invariant_tol:.3e}"
                    )));
                }
            }

            if k >= cut {
                continue;
            }
            // <L f, f> and ||f||_nu^2 at this snapshot, x-slice by x-slice.
            let mut e_num = 0.0;
            let mut e_den = 0.0;
            let nu = model.nu_values();
            for ix in 0..nx {
                let fx = &snap[ix * nv..(ix + 1) * nv];
                let lfx = model.apply_l(fx)?;
                let mut acc_n = 0.0;
                let mut acc_d = 0.0;
                for iv in 0..nv {
                    let wv = vg.weight(iv);
                    acc_n += wv * lfx[iv] * fx[iv];
                    acc_d += wv * nu[iv] * fx[iv] * fx[iv];
                }
                e_num += sg.node_weight() * acc_n;
                e_den += sg.node_weight() * acc_d;
            }
            // Trapezoid weight for sample k within [0, 1].
            let left = if k == 0 { times[0] } else { times[k - 1] };
            let right = if k + 1 < cut { times[k + 1] } else { times[cut - 1] };
            let wt = 0.5 * (right - left);
            numerator += wt * e_num;
            denominator += wt * e_den;
        }
        if !(denominator > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "run {run_idx}: vanishing collision-frequency norm over [0, 1]"
            )));
        }
        per_run.push(numerator / denominator);
    }
    let m_hat = per_run.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PositivityEstimate {
        m_hat,
        per_run,
        worst_invariant_drift: worst_drift,
    })
}

/// Sup-norm residuals of the macroscopic equations for the fields `mf` under
/// the potential `field`.
///
/// Spatial derivatives are spectral on the torus; the time derivative is a
/// central difference in the interior and one-sided at the series ends;
/// grad(Phi) is analytic.
pub fn macroscopic_residual(
    field: &PotentialField,
    grid: &SpatialGrid,
    mf: &MacroFields,
) -> Result<MacroResiduals> {
    let d = grid.dim();
    if field.dim() != d {
        return Err(Error::InvalidParameter(format!(
            "potential dimension {} does not match spatial grid {}",
            field.dim(),
            d
        )));
    }
    let nt = mf.times.len();
    if nt < 2 {
        return Err(Error::InvalidParameter(
            "macroscopic residuals need at least 2 time samples".into(),
        ));
    }
    if mf.a.len() != nt || mf.b.len() != nt || mf.c.len() != nt {
        return Err(Error::InvalidParameter(
            "macroscopic field series lengths must match the time samples".into(),
        ));
    }
    let nx = grid.len();
    for k in 0..nt {
        if mf.a[k].len() != nx || mf.c[k].len() != nx || mf.b[k].len() != nx * d {
            return Err(Error::InvalidParameter(format!(
                "macroscopic fields at sample {k} do not match the spatial grid"
            )));
        }
        if k + 1 < nt && !(mf.times[k + 1] > mf.times[k]) {
            return Err(Error::InvalidParameter(
                "macroscopic time samples must increase strictly".into(),
            ));
        }
    }

    let diff = TorusDifferentiator::new(grid)?;
    let mut x = vec![0.0; d];
    let mut grad_phi = vec![0.0; nx * d];
    for ix in 0..nx {
        grid.node_into(ix, &mut x);
        let g = field.gradient(&x);
        grad_phi[ix * d..(ix + 1) * d].copy_from_slice(&g);
    }

    // Time derivative of a scalar series at sample k, node ix.
    let ddt = |series: &[Vec<f64>], k: usize, ix: usize| -> f64 {
        if k == 0 {
            (series[1][ix] - series[0][ix]) / (mf.times[1] - mf.times[0])
        } else if k + 1 == nt {
            (series[nt - 1][ix] - series[nt - 2][ix]) / (mf.times[nt - 1] - mf.times[nt - 2])
        } else {
            (series[k + 1][ix] - series[k - 1][ix]) / (mf.times[k + 1] - mf.times[k - 1])
        }
    };
    let ddt_b = |k: usize, ix: usize, comp: usize| -> f64 {
        if k == 0 {
            (mf.b[1][ix * d + comp] - mf.b[0][ix * d + comp]) / (mf.times[1] - mf.times[0])
        } else if k + 1 == nt {
            (mf.b[nt - 1][ix * d + comp] - mf.b[nt - 2][ix * d + comp])
                / (mf.times[nt - 1] - mf.times[nt - 2])
        } else {
            (mf.b[k + 1][ix * d + comp] - mf.b[k - 1][ix * d + comp])
                / (mf.times[k + 1] - mf.times[k - 1])
        }
    };

    let mut me1 = 0.0f64;
    let mut me2 = 0.0f64;
    let mut me3 = 0.0f64;
    let mut me4 = 0.0f64;
    let mut me5 = 0.0f64;
    let mut laplace_b = 0.0f64;

    let mut b_comp = vec![0.0; nx];
    for k in 0..nt {
        let grad_a = diff.gradient(&mf.a[k])?;
        let grad_c = diff.gradient(&mf.c[k])?;

        // Per-component spatial work on b: partial derivatives and
        // Laplacians.
        let mut db = vec![vec![0.0; nx * d]; d]; // db[j][ix*d+i] = d_j b_i
        let mut lap_b = vec![vec![0.0; nx]; d];
        for comp in 0..d {
            for ix in 0..nx {
                b_comp[ix] = mf.b[k][ix * d + comp];
            }
            for (axis, slot) in db.iter_mut().enumerate() {
                let der = diff.partial(&b_comp, axis)?;
                for ix in 0..nx {
                    slot[ix * d + comp] = der[ix];
                }
            }
            lap_b[comp] = diff.laplacian(&b_comp)?;
        }

        // dc/dt as a field, for the derived Laplace identity.
        let mut cdot = vec![0.0; nx];
        for (ix, slot) in cdot.iter_mut().enumerate() {
            *slot = ddt(&mf.c, k, ix);
        }
        let grad_cdot = diff.gradient(&cdot)?;

        for ix in 0..nx {
            let gp = &grad_phi[ix * d..(ix + 1) * d];
            let mut gp_dot_b = 0.0;
            for a in 0..d {
                gp_dot_b += gp[a] * mf.b[k][ix * d + a];
            }
            me1 = me1.max((ddt(&mf.a, k, ix) - gp_dot_b).abs());

            let cdot_ix = cdot[ix];
            for i in 0..d {
                me2 =
                    me2.max((ddt_b(k, ix, i) + grad_a[i][ix] - 2.0 * mf.c[k][ix] * gp[i]).abs());
                me3 = me3.max((cdot_ix + db[i][ix * d + i]).abs());
                me5 = me5.max(grad_c[i][ix].abs());
                laplace_b =
                    laplace_b.max((lap_b[i][ix] - (d as f64 - 2.0) * grad_cdot[i][ix]).abs());
                for j in 0..i {
                    me4 = me4.max((db[j][ix * d + i] + db[i][ix * d + j]).abs());
                }
            }
        }
    }

    Ok(MacroResiduals {
        me1,
        me2,
        me3,
        me4,
        me5,
        laplace_b,
    })
}

/// Nondegeneracy of the constraint system that forces the null solution.
///
/// Assembles the 2x2 Gram matrix of {sqrt(mu_E), (Phi + |v|^2/2)
/// sqrt(mu_E)} by phase quadrature, and the coefficient int int (e . v)^2
/// mu_E for every degenerate direction e. A strictly positive determinant
/// plus strictly positive coefficients make (phi_0, c_0, b_0) = 0 the unique
/// solution.
pub fn null_solution_test(bg: &Background, subspace: &DegenerateSubspace) -> GramCheck {
    let nx = bg.n_space();
    let nv = bg.n_velocity();
    let d = bg.velocity_grid().dim();
    let vg = bg.velocity_grid();
    let sg = bg.spatial_grid();
    let nodes = vg.nodes_flat();
    let mu_e = bg.mu_e();
    let phi = bg.phi();

    let mut g00 = 0.0;
    let mut g01 = 0.0;
    let mut g11 = 0.0;
    let mut vsq = vec![0.0f64; subspace.n];
    for ix in 0..nx {
        let p = phi[ix];
        let wx = sg.node_weight();
        for iv in 0..nv {
            let w = wx * vg.weight(iv) * mu_e[ix * nv + iv];
            let energy = p + 0.5 * vg.speed2(iv);
            g00 += w;
            g01 += energy * w;
            g11 += energy * energy * w;
            for (s, dir) in subspace.basis.iter().enumerate() {
                let mut ev = 0.0;
                for a in 0..d {
                    ev += dir[a] * nodes[iv * d + a];
                }
                vsq[s] += ev * ev * w;
            }
        }
    }
    let determinant = g00 * g11 - g01 * g01;
    let pass = determinant > GRAM_DET_FLOOR * g00 * g11 && vsq.iter().all(|&q| q > 0.0);
    GramCheck {
        determinant,
        g00,
        g01,
        g11,
        vsq_integrals: vsq,
        pass,
    }
}

/// Root of lambda e^{2 lambda} = nu0 * m_hat * e^{-phi_sup}, by bisection.
pub fn admissible_lambda(m_hat: f64, nu0: f64, phi_sup: f64) -> Result<f64> {
    let rhs = nu0 * m_hat * (-phi_sup).exp();
    if !(rhs > 0.0) || !rhs.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "admissible-rate equation needs a positive finite right side, got {rhs}"
        )));
    }
    let g = |lam: f64| lam * (2.0 * lam).exp() - rhs;
    let mut hi = 1.0;
    let mut tries = 0;
    while g(hi) < 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::InvalidParameter(
                "admissible-rate bracket expansion failed".into(),
            ));
        }
    }
    numerics::bisect(0.0, hi, 1e-13, g)
}

/// Discrete-time decay bootstrap of a norm series.
///
/// Returns the least-squares exponential fit, the largest rate satisfying
/// the whole-unit-interval inequality e^{2 lambda N} ||f(t0 + N)||^2 <=
/// ||f(t0)||^2, and the admissible rate from lambda e^{2 lambda} =
/// nu0 * m_hat * e^{-phi_sup}. Norm values at integer offsets are read by
/// log-linear interpolation (exact at sample points). Raises
/// [`Error::NonMonotone`] when the norm grows across a unit interval beyond
/// [`MONOTONE_SLACK`].
pub fn decay_bootstrap(
    series: &[(f64, f64)],
    m_hat: f64,
    nu0: f64,
    phi_sup: f64,
) -> Result<BootstrapOutcome> {
    if series.len() < 2 {
        return Err(Error::InvalidParameter(
            "decay bootstrap needs at least 2 samples".into(),
        ));
    }
    for w in series.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::InvalidParameter(
                "norm-series times must increase strictly".into(),
            ));
        }
    }
    for &(t, n) in series {
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "norm series must be positive and finite, got {n} at t = {t}"
            )));
        }
    }
    let t0 = series[0].0;
    let t_end = series[series.len() - 1].0;
    let span = t_end - t0;
    if span < 5.0 - 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "decay bootstrap needs at least 5 unit intervals, series spans {span}"
        )));
    }

    // Least-squares fit of log norm vs t over the whole series.
    let xs: Vec<f64> = series.iter().map(|&(t, _)| t).collect();
    let ys: Vec<f64> = series.iter().map(|&(_, n)| n.ln()).collect();
    let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
    let degenerate_fit = ys
        .iter()
        .all(|&y| (y - mean_y).abs() <= 1e-12 * (1.0 + mean_y.abs()));
    let line = numerics::fit_line(&xs, &ys)?;
    let fit = DecayFit {
        // A flat series has no rate information; report exactly zero
        // instead of the cancellation roundoff of the least-squares slope.
        lambda: if degenerate_fit { 0.0 } else { -line.slope },
        c: line.intercept.exp(),
        r_squared: line.r_squared,
        window: (t0, t_end),
    };

    // Log-linear interpolation of the norm at an absolute time.
    let log_norm_at = |t: f64| -> f64 {
        let k = xs.partition_point(|&s| s < t - 1e-12);
        if k < xs.len() && (xs[k] - t).abs() <= 1e-12 {
            return ys[k];
        }
        let hi = k.min(xs.len() - 1).max(1);
        let lo = hi - 1;
        let u = (t - xs[lo]) / (xs[hi] - xs[lo]);
        ys[lo] + u * (ys[hi] - ys[lo])
    };

    let whole = (span + 1e-9).floor() as usize;
    let mut lambda_discrete = f64::INFINITY;
    let mut prev = log_norm_at(t0);
    let base = prev;
    for n in 1..=whole {
        let cur = log_norm_at(t0 + n as f64);
        let ratio = (cur - prev).exp();
        if ratio > 1.0 + MONOTONE_SLACK {
            return Err(Error::NonMonotone { index: n, ratio });
        }
        lambda_discrete = lambda_discrete.min((base - cur) / n as f64);
        prev = cur;
    }
    let lambda_admissible = admissible_lambda(m_hat, nu0, phi_sup)?;
    let discrete_holds = lambda_admissible <= lambda_discrete + 1e-12;
    Ok(BootstrapOutcome {
        fit,
        lambda_discrete,
        lambda_admissible,
        discrete_holds,
        degenerate_fit,
    })
}
