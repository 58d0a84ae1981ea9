//! Small numerical building blocks: dense symmetric eigensolvers, Lanczos
//! iteration for large symmetric operators, Gauss-Legendre rules, least
//! squares line fits, and scalar root bracketing.
//!
//! Everything here is deterministic and dependency-free; sizes are desk
//! scale (small dense problems, Krylov bases of a few hundred vectors).

use crate::error::{Error, Result};

/// Dense symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// `a` is row-major n x n and is consumed. Returns (eigenvalues ascending,
/// eigenvectors as rows of the returned matrix, i.e. `vecs[k]` is the
/// eigenvector for `vals[k]`).
pub fn jacobi_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(a.len(), n * n);
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a[i * n + j] * a[i * n + j];
            }
        }
        s
    };
    let scale: f64 = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max).max(1e-300);
    for _sweep in 0..100 {
        if off(&a) <= (1e-30 * scale * scale).max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[p * n + k];
                    let vkq = v[q * n + k];
                    v[p * n + k] = c * vkp - s * vkq;
                    v[q * n + k] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let vecs: Vec<Vec<f64>> = order.iter().map(|&i| v[i * n..(i + 1) * n].to_vec()).collect();
    (vals, vecs)
}

/// Solve the SPD system A x = b by Cholesky; A row-major n x n, consumed.
pub fn cholesky_solve(mut a: Vec<f64>, n: usize, b: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "matrix not positive definite at pivot {j} (d = {d})"
            )));
        }
        let dj = d.sqrt();
        a[j * n + j] = dj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / dj;
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * y[k];
        }
        y[i] = s / a[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= a[k * n + i] * x[k];
        }
        x[i] = s / a[i * n + i];
    }
    Ok(x)
}

/// Least-squares straight line y ~= intercept + slope * x.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidParameter("line fit needs >= 2 points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 {
        return Err(Error::InvalidParameter("line fit degenerate: all x equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy <= 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(LineFit { slope, intercept, r_squared })
}

/// Bisection for a continuous function with a sign change on [lo, hi].
pub fn bisect(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::InvalidParameter(format!(
            "bisection bracket has no sign change: f({lo}) = {flo}, f({hi}) = {fhi}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 || (hi - lo) < tol {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-angle initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        let (_, d) = legendre(n, 0.0);
        nodes[n / 2] = 0.0;
        weights[n / 2] = 2.0 / (d * d);
    }
    (nodes, weights)
}

/// Legendre P_n(x) and derivative P_n'(x) by upward recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (p0 - x * p1) / (1.0 - x * x);
    (p1, d)
}

/// Symmetric tridiagonal eigendecomposition (implicit QL with Wilkinson
/// shifts, EISPACK tql2 lineage). `diag` and `off` (off[i] couples i and
/// i+1) are consumed. Returns eigenvalues ascending and, for each, the
/// eigenvector in the tridiagonal basis.
pub fn tridiag_eigen(mut diag: Vec<f64>, mut off: Vec<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = diag.len();
    assert!(off.len() + 1 == n || (n == 0 && off.is_empty()));
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    off.push(0.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 100, "tridiagonal QL failed to converge");
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let r0 = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r0.copysign(g));
            let (mut s, mut c) = (1.0, 1.0);
            let mut p = 0.0;
            let mut underflowed = false;
            for i in (l..m).rev() {
                let mut f = s * off[i];
                let b = c * off[i];
                let r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    underflowed = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                let t = (diag[i] - g) * s + 2.0 * c * b;
                p = s * t;
                diag[i + 1] = g + p;
                g = c * t - b;
                for k in 0..n {
                    f = z[(i + 1) * n + k];
                    z[(i + 1) * n + k] = s * z[i * n + k] + c * f;
                    z[i * n + k] = c * z[i * n + k] - s * f;
                }
            }
            if underflowed {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let vecs: Vec<Vec<f64>> = order.iter().map(|&i| z[i * n..(i + 1) * n].to_vec()).collect();
    (vals, vecs)
}

/// One converged extremal eigenpair estimate out of a Lanczos run.
#[derive(Debug, Clone)]
pub struct RitzPair {
    pub value: f64,
    pub vector: Vec<f64>,
    /// ||A q - value q|| estimate from the Lanczos recurrence.
    pub residual: f64,
}

/// Lanczos iteration with full reorthogonalization for a symmetric operator
/// given as a matvec closure. Returns up to `want` Ritz pairs from the low
/// end of the spectrum (ascending).
///
/// The starting vector must be nonzero; it is normalized internally.
pub fn lanczos_lowest(
    n: usize,
    max_iter: usize,
    want: usize,
    start: &[f64],
    mut matvec: impl FnMut(&[f64], &mut [f64]),
) -> Vec<RitzPair> {
    assert_eq!(start.len(), n);
    let m = max_iter.min(n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut alphas: Vec<f64> = Vec::with_capacity(m);
    let mut betas: Vec<f64> = Vec::new();
    let mut q = start.to_vec();
    let norm = norm2(&q);
    assert!(norm > 0.0, "Lanczos start vector is zero");
    scale(&mut q, 1.0 / norm);
    let mut w = vec![0.0; n];
    let mut last_beta = 0.0;
    for j in 0..m {
        matvec(&q, &mut w);
        let alpha = dot(&q, &w);
        alphas.push(alpha);
        axpy(&mut w, -alpha, &q);
        if j > 0 {
            let b = betas[j - 1];
            axpy(&mut w, -b, &basis[j - 1]);
        }
        // Full reorthogonalization, twice for safety.
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                axpy(&mut w, -c, b);
            }
            let c = dot(&q, &w);
            axpy(&mut w, -c, &q);
        }
        basis.push(std::mem::replace(&mut q, vec![0.0; n]));
        let beta = norm2(&w);
        if beta < 1e-300 || j + 1 == m {
            // The recurrence residual of the final step survives in `beta`
            // even though it never enters the tridiagonal matrix.
            last_beta = beta;
            if j + 1 < m {
                betas.push(0.0);
            }
            break;
        }
        betas.push(beta);
        q.copy_from_slice(&w);
        scale(&mut q, 1.0 / beta);
    }
    let k = alphas.len();
    let off: Vec<f64> = betas.iter().take(k.saturating_sub(1)).copied().collect();
    let (vals, vecs) = tridiag_eigen(alphas, off);
    let take = want.min(vals.len());
    let mut out = Vec::with_capacity(take);
    for r in 0..take {
        let mut vector = vec![0.0; n];
        for (j, b) in basis.iter().enumerate() {
            axpy(&mut vector, vecs[r][j], b);
        }
        let nv = norm2(&vector);
        if nv > 0.0 {
            scale(&mut vector, 1.0 / nv);
        }
        let residual = (last_beta * vecs[r][k - 1]).abs();
        out.push(RitzPair { value: vals[r], vector, residual });
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(y: &mut [f64], alpha: f64) {
    for yi in y.iter_mut() {
        *yi *= alpha;
    }
}
