//! Conjugate-time covering: partition phase space into cells, sample each
//! cell's trajectories, and cover every detected zero of det(dX/dv) by small
//! time intervals, reporting the uniform floor delta_star that |det| keeps
//! outside them.
//!
//! For each cell of a per-axis space x velocity partition the sampled
//! trajectories are the 2^{2d} cell corners, the center, and a configurable
//! number of deterministic interior points. A zero event is a sample time
//! with |det| below a cell-relative threshold, or a sign change between
//! neighbouring samples. Events are padded by epsilon/(4 M1) on both sides
//! and merged; chains of events closer than twice the padding coalesce, so
//! a zero band swept across the cell by parameter drift is covered as one
//! interval provided the cell is sampled densely enough. Each cell's total
//! covered time must stay within the epsilon budget.

use crate::error::{Error, Result};
use crate::flow::{det_small, stream};
use crate::potential::PotentialField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Mixed-radix unflatten, axis 0 slowest.
#[inline]
fn mixed_unflatten(mut flat: usize, dims: &[usize], out: &mut [usize]) {
    for a in (0..dims.len()).rev() {
        out[a] = flat % dims[a];
        flat /= dims[a];
    }
}

/// Partition and detection parameters for [`build_covering`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoveringGrid {
    /// M1: time cells; interval padding is epsilon / (4 M1).
    pub time_cells: usize,
    /// M2: space cells per axis.
    pub space_cells: Vec<usize>,
    /// M3: velocity cells per axis.
    pub velocity_cells: Vec<usize>,
    /// Integrator step for the determinant series.
    pub dt: f64,
    /// Zero threshold relative to the cell median of |det|.
    pub zero_rel: f64,
    /// Extra deterministic interior sample trajectories per cell; these
    /// contribute zero events like the corners and center do.
    pub extra_samples: usize,
    /// Additional per-cell probe trajectories that only deepen the reported
    /// floor: they enter the delta_star minimum but never create events, so
    /// the floor converges toward the cell infimum without widening the
    /// intervals it is measured against.
    pub floor_probes: usize,
}

impl CoveringGrid {
    /// Isotropic partition: the same cell count on every axis.
    pub fn isotropic(dim: usize, time_cells: usize, space_cells: usize, velocity_cells: usize, dt: f64) -> Self {
        Self {
            time_cells,
            space_cells: vec![space_cells; dim],
            velocity_cells: vec![velocity_cells; dim],
            dt,
            zero_rel: 1e-3,
            extra_samples: 4,
            floor_probes: 8,
        }
    }
}

/// A closed time interval [lo, hi] within [0, T0].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ZeroInterval {
    #[inline]
    pub fn contains(&self, s: f64) -> bool {
        self.lo <= s && s <= self.hi
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }
}

/// Covering data for one phase cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellCovering {
    /// Per-axis space cell index.
    pub space_cell: Vec<usize>,
    /// Per-axis velocity cell index.
    pub velocity_cell: Vec<usize>,
    /// Disjoint, sorted zero intervals within [0, T0].
    pub intervals: Vec<ZeroInterval>,
    /// Median of |det| over the cell's sampled series.
    pub median_abs_det: f64,
    /// Absolute zero threshold used for this cell.
    pub zero_thresh: f64,
}

impl CellCovering {
    /// Is `s` inside some interval of this cell?
    pub fn covers(&self, s: f64) -> bool {
        let k = self.intervals.partition_point(|iv| iv.hi < s);
        k < self.intervals.len() && self.intervals[k].contains(s)
    }

    pub fn covered_length(&self) -> f64 {
        self.intervals.iter().map(|iv| iv.len()).sum()
    }
}

/// Result of an independent random audit of a covering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditStats {
    pub samples: usize,
    pub seed: u64,
    /// (trajectory, time) pairs with |det| < delta_star.
    pub times_below_floor: usize,
    /// Pairs below the floor that no interval of their cell covers.
    pub violations: usize,
}

/// The covering: partitions, per-cell intervals, and the empirical floor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoveringReport {
    pub schema: String,
    pub dim: usize,
    /// Backward horizon: series run over s in [0, T0].
    pub t0: f64,
    /// Velocity cutoff N; trajectories start inside the box [-4N, 4N]^d.
    pub velocity_cutoff: f64,
    /// Total per-cell interval-length budget; padding is epsilon/(4 M1).
    pub epsilon: f64,
    /// min |det| over every sampled (trajectory, time) pair outside the
    /// owning cell's intervals. Positive by construction.
    pub delta_star: f64,
    pub time_cells: usize,
    pub space_cells: Vec<usize>,
    pub velocity_cells: Vec<usize>,
    pub dt: f64,
    pub zero_rel: f64,
    /// Largest per-cell covered length (diagnostic against the budget).
    pub worst_covered_length: f64,
    pub cells: Vec<CellCovering>,
    pub audit: Option<AuditStats>,
}

impl CoveringReport {
    /// The cell owning phase point (x, v); None if v is outside the box.
    pub fn cell_index(&self, field: &PotentialField, x: &[f64], v: &[f64]) -> Option<usize> {
        let d = self.dim;
        let b = 4.0 * self.velocity_cutoff;
        let mut flat = 0usize;
        for a in 0..d {
            let m = self.space_cells[a];
            let p = field.torus().periods()[a];
            let u = (x[a] / p).rem_euclid(1.0) * m as f64;
            let i = (u.floor() as usize).min(m - 1);
            flat = flat * m + i;
        }
        for a in 0..d {
            let m = self.velocity_cells[a];
            if v[a] < -b || v[a] > b {
                return None;
            }
            let u = (v[a] + b) / (2.0 * b) * m as f64;
            let i = (u.floor() as usize).min(m - 1);
            flat = flat * m + i;
        }
        Some(flat)
    }
}

/// One determinant series at the shared sample times.
struct DetSeries {
    det: Vec<f64>,
}

fn det_series(
    field: &PotentialField,
    x: &[f64],
    v: &[f64],
    t0: f64,
    dt: f64,
    expected_len: usize,
) -> Result<DetSeries> {
    let d = field.dim();
    let mut det = Vec::with_capacity(expected_len);
    stream(field, x, v, t0, 0.0, dt, true, &mut |view| {
        det.push(det_small(view.jxv, d));
    })?;
    debug_assert_eq!(det.len(), expected_len);
    Ok(DetSeries { det })
}

/// Merge padded events into disjoint sorted intervals clipped to [0, t0].
fn merge_events(events: &mut Vec<f64>, pad: f64, t0: f64) -> Vec<ZeroInterval> {
    if events.is_empty() {
        return Vec::new();
    }
    events.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<ZeroInterval> = Vec::new();
    for &e in events.iter() {
        let lo = (e - pad).max(0.0);
        let hi = (e + pad).min(t0);
        match out.last_mut() {
            Some(last) if lo <= last.hi => last.hi = last.hi.max(hi),
            _ => out.push(ZeroInterval { lo, hi }),
        }
    }
    out
}

/// Build the zero-determinant covering for backward characteristics over
/// [0, T0], with trajectory sources on the cell corners, centers, and
/// `extra_samples` deterministic interior points.
pub fn build_covering(
    field: &PotentialField,
    t0: f64,
    velocity_cutoff: f64,
    epsilon: f64,
    grid: &CoveringGrid,
) -> Result<CoveringReport> {
    let d = field.dim();
    if !(t0 > 0.0) || !(velocity_cutoff > 0.0) || !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(
            "covering needs positive T0, velocity cutoff and epsilon".into(),
        ));
    }
    if grid.space_cells.len() != d || grid.velocity_cells.len() != d {
        return Err(Error::InvalidParameter(
            "covering cell counts must list one entry per axis".into(),
        ));
    }
    if grid.time_cells == 0
        || grid.space_cells.iter().any(|&m| m == 0)
        || grid.velocity_cells.iter().any(|&m| m == 0)
    {
        return Err(Error::InvalidParameter("covering cell counts must be positive".into()));
    }
    let m2 = &grid.space_cells;
    let m3 = &grid.velocity_cells;
    let b = 4.0 * velocity_cutoff;
    let n_steps = (t0 / grid.dt - 1e-9).ceil().max(1.0) as usize;
    let series_len = n_steps + 1;
    let h = -t0 / n_steps as f64;
    let times: Vec<f64> = (0..series_len).map(|k| t0 + k as f64 * h).collect();
    let pad = epsilon / (4.0 * grid.time_cells as f64);
    let periods = field.torus().periods().to_vec();

    // Shared corner trajectories: a periodic lattice over space cells and an
    // open one (m3 + 1 per axis) over velocity cells.
    let vel_corner_dims: Vec<usize> = m3.iter().map(|&m| m + 1).collect();
    let space_corner_total: usize = m2.iter().product();
    let vel_corner_total: usize = vel_corner_dims.iter().product();
    let mut corner_series: Vec<DetSeries> = Vec::with_capacity(space_corner_total * vel_corner_total);
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut v = vec![0.0; d];
    for sc in 0..space_corner_total {
        mixed_unflatten(sc, m2, &mut idx);
        for a in 0..d {
            x[a] = idx[a] as f64 * periods[a] / m2[a] as f64;
        }
        for vc in 0..vel_corner_total {
            mixed_unflatten(vc, &vel_corner_dims, &mut idx);
            for a in 0..d {
                v[a] = -b + idx[a] as f64 * (2.0 * b / m3[a] as f64);
            }
            corner_series.push(det_series(field, &x, &v, t0, grid.dt, series_len)?);
        }
    }

    let space_cells_total: usize = m2.iter().product();
    let vel_cells_total: usize = m3.iter().product();
    let cells_total = space_cells_total * vel_cells_total;
    let mut cells: Vec<CellCovering> = Vec::with_capacity(cells_total);
    let mut abs_buf: Vec<f64> = Vec::new();
    let mut events: Vec<f64> = Vec::new();
    let mut sidx = vec![0usize; d];
    let mut vidx = vec![0usize; d];
    let mut worst_covered = 0.0f64;

    let mut cell_corner_refs: Vec<Vec<usize>> = vec![Vec::new(); cells_total];
    let mut interior_series: Vec<Vec<DetSeries>> = Vec::with_capacity(cells_total);

    for cell in 0..cells_total {
        mixed_unflatten(cell / vel_cells_total, m2, &mut sidx);
        mixed_unflatten(cell % vel_cells_total, m3, &mut vidx);

        // Corner references: 2^d space corners x 2^d velocity corners.
        let refs = &mut cell_corner_refs[cell];
        for mask_s in 0..(1usize << d) {
            let mut sc = 0usize;
            for a in 0..d {
                let i = (sidx[a] + ((mask_s >> a) & 1)) % m2[a];
                sc = sc * m2[a] + i;
            }
            for mask_v in 0..(1usize << d) {
                let mut vc = 0usize;
                for a in 0..d {
                    vc = vc * vel_corner_dims[a] + vidx[a] + ((mask_v >> a) & 1);
                }
                refs.push(sc * vel_corner_total + vc);
            }
        }

        // Center plus deterministic interior samples.
        let mut own: Vec<DetSeries> = Vec::with_capacity(1 + grid.extra_samples);
        for a in 0..d {
            x[a] = (sidx[a] as f64 + 0.5) * periods[a] / m2[a] as f64;
            v[a] = -b + (vidx[a] as f64 + 0.5) * (2.0 * b / m3[a] as f64);
        }
        own.push(det_series(field, &x, &v, t0, grid.dt, series_len)?);
        if grid.extra_samples > 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de ^ cell as u64);
            for _ in 0..grid.extra_samples {
                for a in 0..d {
                    let fx: f64 = rng.gen();
                    let fv: f64 = rng.gen();
                    x[a] = (sidx[a] as f64 + fx) * periods[a] / m2[a] as f64;
                    v[a] = -b + (vidx[a] as f64 + fv) * (2.0 * b / m3[a] as f64);
                }
                own.push(det_series(field, &x, &v, t0, grid.dt, series_len)?);
            }
        }
        interior_series.push(own);

        // Median |det| over all of the cell's series.
        abs_buf.clear();
        for &r in refs.iter() {
            abs_buf.extend(corner_series[r].det.iter().map(|a| a.abs()));
        }
        for s in interior_series[cell].iter() {
            abs_buf.extend(s.det.iter().map(|a| a.abs()));
        }
        let mid = abs_buf.len() / 2;
        let (_, med, _) = abs_buf.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
        let median = *med;
        let thresh = (grid.zero_rel * median).max(f64::MIN_POSITIVE);

        // Zero events: threshold hits and sign changes.
        events.clear();
        let mut scan = |series: &DetSeries| {
            let det = &series.det;
            for k in 0..det.len() {
                if det[k].abs() <= thresh {
                    events.push(times[k]);
                } else if k + 1 < det.len() && det[k] * det[k + 1] < 0.0 {
                    let f = det[k] / (det[k] - det[k + 1]);
                    events.push(times[k] + f * (times[k + 1] - times[k]));
                }
            }
        };
        for &r in refs.iter() {
            scan(&corner_series[r]);
        }
        for s in interior_series[cell].iter() {
            scan(s);
        }
        let intervals = merge_events(&mut events, pad, t0);
        let total: f64 = intervals.iter().map(|iv| iv.len()).sum();
        worst_covered = worst_covered.max(total);
        if total > epsilon {
            return Err(Error::CoverageBudgetExceeded { fraction: total / epsilon, budget: epsilon });
        }
        cells.push(CellCovering {
            space_cell: sidx.clone(),
            velocity_cell: vidx.clone(),
            intervals,
            median_abs_det: median,
            zero_thresh: thresh,
        });
    }

    // delta_star: min |det| over every sampled pair outside its cell's
    // intervals, floor probes included. Probe series are generated here and
    // discarded immediately; they never feed back into the intervals.
    let mut delta_star = f64::INFINITY;
    for (cell, cc) in cells.iter().enumerate() {
        let mut scan = |series: &DetSeries| {
            for (k, &dv) in series.det.iter().enumerate() {
                if !cc.covers(times[k]) {
                    delta_star = delta_star.min(dv.abs());
                }
            }
        };
        for &r in cell_corner_refs[cell].iter() {
            scan(&corner_series[r]);
        }
        for s in interior_series[cell].iter() {
            scan(s);
        }
        if grid.floor_probes > 0 {
            mixed_unflatten(cell / vel_cells_total, m2, &mut sidx);
            mixed_unflatten(cell % vel_cells_total, m3, &mut vidx);
            let mut rng =
                ChaCha8Rng::seed_from_u64(0xf100f ^ (cell as u64).wrapping_mul(0x9e37_79b9));
            for _ in 0..grid.floor_probes {
                for a in 0..d {
                    let fx: f64 = rng.gen();
                    let fv: f64 = rng.gen();
                    x[a] = (sidx[a] as f64 + fx) * periods[a] / m2[a] as f64;
                    v[a] = -b + (vidx[a] as f64 + fv) * (2.0 * b / m3[a] as f64);
                }
                let probe = det_series(field, &x, &v, t0, grid.dt, series_len)?;
                scan(&probe);
            }
        }
    }
    if !delta_star.is_finite() {
        return Err(Error::NoSamplesOutside);
    }
    if delta_star <= 0.0 {
        return Err(Error::InvariantViolation(
            "a zero determinant escaped the covering intervals".into(),
        ));
    }

    Ok(CoveringReport {
        schema: "kinlab-covering-v1".into(),
        dim: d,
        t0,
        velocity_cutoff,
        epsilon,
        delta_star,
        time_cells: grid.time_cells,
        space_cells: m2.clone(),
        velocity_cells: m3.clone(),
        dt: grid.dt,
        zero_rel: grid.zero_rel,
        worst_covered_length: worst_covered,
        cells,
        audit: None,
    })
}

/// Independent audit: draw `samples` random phase points in the torus times
/// the velocity box, rerun their determinant series, and verify that every
/// time with |det| < delta_star is covered by the owning cell's intervals.
pub fn audit_covering(
    field: &PotentialField,
    report: &CoveringReport,
    samples: usize,
    seed: u64,
) -> Result<AuditStats> {
    let d = field.dim();
    if d != report.dim {
        return Err(Error::InvalidParameter("field dimension != covering dimension".into()));
    }
    let b = 4.0 * report.velocity_cutoff;
    let n_steps = (report.t0 / report.dt - 1e-9).ceil().max(1.0) as usize;
    let series_len = n_steps + 1;
    let h = -report.t0 / n_steps as f64;
    let times: Vec<f64> = (0..series_len).map(|k| report.t0 + k as f64 * h).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut below = 0usize;
    let mut violations = 0usize;
    for _ in 0..samples {
        for a in 0..d {
            x[a] = rng.gen::<f64>() * field.torus().periods()[a];
            v[a] = (rng.gen::<f64>() * 2.0 - 1.0) * b;
        }
        let cell = report
            .cell_index(field, &x, &v)
            .expect("audit velocities are drawn inside the box");
        let cc = &report.cells[cell];
        let series = det_series(field, &x, &v, report.t0, report.dt, series_len)?;
        for (k, &dv) in series.det.iter().enumerate() {
            if dv.abs() < report.delta_star {
                below += 1;
                if !cc.covers(times[k]) {
                    violations += 1;
                }
            }
        }
    }
    Ok(AuditStats { samples, seed, times_below_floor: below, violations })
}
