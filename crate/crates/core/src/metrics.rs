//! Chamfer and Earth Mover's distances, farthest point sampling, and the
//! image/depth preservation loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ColoredPointCloud, Point3, Rgb};
use crate::par;
use crate::raster::{DepthImage, RgbImage};
use crate::spatial::PointIndex;

/// Largest size accepted by [`emd_exact`].
pub const EMD_EXACT_MAX: usize = 512;
/// Epsilon-scaling phases used by [`emd_auto`] above the exact guard.
pub const DEFAULT_AUCTION_PHASES: usize = 8;
/// Presentation factor applied to reported CD and EMD.
pub const REPORT_SCALE: f64 = 100.0;

fn require_non_empty(p: &ColoredPointCloud, q: &ColoredPointCloud) -> Result<()> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::invalid("metric needs two non-empty clouds"));
    }
    Ok(())
}

/// For each point of `from`, index and distance of its nearest point in `to`.
pub fn nearest_pairs(from: &[Point3], to: &[Point3]) -> Vec<(usize, f64)> {
    let index = PointIndex::build(to);
    par::map(from, |p| index.nearest(p).expect("target set is non-empty"))
}

/// Mean over `from` of the distance to the nearest point of `to`.
pub fn one_sided_mean_nn(from: &[Point3], to: &[Point3]) -> f64 {
    let pairs = nearest_pairs(from, to);
    pairs.iter().map(|(_, d)| d).sum::<f64>() / from.len() as f64
}

/// `(1/2|P|) Σ_p min_q ‖p − q‖ + (1/2|Q|) Σ_q min_p ‖q − p‖`.
pub fn chamfer_l1(p: &ColoredPointCloud, q: &ColoredPointCloud) -> Result<f64> {
    require_non_empty(p, q)?;
    let a = one_sided_mean_nn(p.points(), q.points());
    let b = one_sided_mean_nn(q.points(), p.points());
    Ok(0.5 * a + 0.5 * b)
}

/// Same halved convention as [`chamfer_l1`] with squared distances.
pub fn chamfer_l2_squared(p: &ColoredPointCloud, q: &ColoredPointCloud) -> Result<f64> {
    require_non_empty(p, q)?;
    let side = |from: &[Point3], to: &[Point3]| {
        nearest_pairs(from, to).iter().map(|(_, d)| d * d).sum::<f64>() / from.len() as f64
    };
    Ok(0.5 * side(p.points(), q.points()) + 0.5 * side(q.points(), p.points()))
}

/// Colour disagreement over geometric nearest-neighbour pairs, symmetric and
/// halved like [`chamfer_l1`].
pub fn chamfer_rgb(p: &ColoredPointCloud, q: &ColoredPointCloud) -> Result<f64> {
    require_non_empty(p, q)?;
    let (Some(pc), Some(qc)) = (p.colors(), q.colors()) else {
        return Err(Error::invalid("RGB chamfer needs coloured clouds"));
    };
    let side = |from: &[Point3], fc: &[Rgb], to: &[Point3], tc: &[Rgb]| {
        let pairs = nearest_pairs(from, to);
        pairs
            .iter()
            .enumerate()
            .map(|(i, (j, _))| (fc[i] - tc[*j]).norm())
            .sum::<f64>()
            / from.len() as f64
    };
    let a = side(p.points(), pc, q.points(), qc);
    let b = side(q.points(), qc, p.points(), pc);
    Ok(0.5 * a + 0.5 * b)
}

fn check_equal_sizes(p: &ColoredPointCloud, q: &ColoredPointCloud) -> Result<()> {
    require_non_empty(p, q)?;
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "EMD needs equal sizes, got {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// Optimal assignment of rows to columns for a square cost matrix
/// (row-major), by shortest augmenting paths with potentials.
pub fn solve_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // p[j]: row (1-based) matched to column j; column 0 is a sentinel
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            let row = &cost[(i0 - 1) * n..i0 * n];
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    assignment
}

/// Minimum mean distance over bijections, solved exactly. Sizes must match
/// and not exceed [`EMD_EXACT_MAX`].
pub fn emd_exact(p: &ColoredPointCloud, q: &ColoredPointCloud) -> Result<f64> {
    check_equal_sizes(p, q)?;
    let n = p.len();
    if n > EMD_EXACT_MAX {
        return Err(Error::invalid(format!(
            "exact EMD is limited to {EMD_EXACT_MAX} points, got {n}"
        )));
    }
    let (a, b) = (p.points(), q.points());
    let cost: Vec<f64> = (0..n * n).map(|k| (a[k / n] - b[k % n]).norm()).collect();
    let assignment = solve_assignment(&cost, n);
    Ok(assignment.iter().enumerate().map(|(i, j)| cost[i * n + j]).sum::<f64>() / n as f64)
}

/// Auction assignment with epsilon scaling; `phases` is the number of
/// scaling phases (epsilon starts at a quarter of the largest distance and
/// shrinks fivefold per phase). The result is the mean cost of a valid
/// bijection, so it never undercuts [`emd_exact`].
pub fn emd_approx(p: &ColoredPointCloud, q: &ColoredPointCloud, phases: usize) -> Result<f64> {
    check_equal_sizes(p, q)?;
    if phases == 0 {
        return Err(Error::invalid("auction needs at least one phase"));
    }
    let (a, b) = (p.points(), q.points());
    let n = a.len();
    let (lo, hi) = crate::geometry::bounding_box(&[a, b].concat()).expect("non-empty");
    let max_cost = (hi - lo).norm();
    if max_cost == 0.0 {
        return Ok(0.0);
    }
    const NONE: usize = usize::MAX;
    let mut prices = vec![0.0f64; n];
    let mut owner = vec![NONE; n];
    let mut assigned = vec![NONE; n];
    let mut eps = max_cost / 4.0;
    for _ in 0..phases {
        owner.fill(NONE);
        assigned.fill(NONE);
        let mut queue: std::collections::VecDeque<usize> = (0..n).collect();
        while let Some(i) = queue.pop_front() {
            let (mut j1, mut v1, mut v2) = (NONE, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for j in 0..n {
                let value = -(a[i] - b[j]).norm() - prices[j];
                if value > v1 {
                    v2 = v1;
                    v1 = value;
                    j1 = j;
                } else if value > v2 {
                    v2 = value;
                }
            }
            let increment = if v2.is_finite() { v1 - v2 + eps } else { eps };
            prices[j1] += increment;
            let prev = owner[j1];
            if prev != NONE {
                assigned[prev] = NONE;
                queue.push_back(prev);
            }
            owner[j1] = i;
            assigned[i] = j1;
        }
        eps /= 5.0;
    }
    Ok(assigned.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).norm()).sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmdSolver {
    Exact,
    Approx,
}

/// EMD between clouds of any size: both are FPS-resampled to the smaller
/// size, then solved exactly up to [`EMD_EXACT_MAX`] points and by auction
/// beyond.
pub fn emd_auto(p: &ColoredPointCloud, q: &ColoredPointCloud) -> Result<(f64, EmdSolver)> {
    require_non_empty(p, q)?;
    let m = p.len().min(q.len());
    let p = if p.len() > m { fps_sample(p, m)? } else { p.clone() };
    let q = if q.len() > m { fps_sample(q, m)? } else { q.clone() };
    if m <= EMD_EXACT_MAX {
        Ok((emd_exact(&p, &q)?, EmdSolver::Exact))
    } else {
        Ok((emd_approx(&p, &q, DEFAULT_AUCTION_PHASES)?, EmdSolver::Approx))
    }
}

/// Farthest point sampling from index 0, ties to the lowest index. Returns
/// the chosen indices and, for each, its distance to the previously chosen
/// set at the moment of selection (infinite for the first).
pub fn fps_indices(points: &[Point3], n: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    if n > points.len() {
        return Err(Error::invalid(format!(
            "cannot sample {n} points from {}",
            points.len()
        )));
    }
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let mut chosen = vec![0];
    let mut dists = vec![f64::INFINITY];
    let mut min_d: Vec<f64> = points.iter().map(|p| (p - points[0]).norm()).collect();
    while chosen.len() < n {
        let mut best = 0;
        for (i, d) in min_d.iter().enumerate() {
            if *d > min_d[best] {
                best = i;
            }
        }
        chosen.push(best);
        dists.push(min_d[best]);
        let c = points[best];
        for (d, p) in min_d.iter_mut().zip(points) {
            *d = d.min((p - c).norm());
        }
    }
    Ok((chosen, dists))
}

pub fn fps_sample(cloud: &ColoredPointCloud, n: usize) -> Result<ColoredPointCloud> {
    let (idx, _) = fps_indices(cloud.points(), n)?;
    Ok(cloud.select(&idx))
}

/// `w1 · MSE(rgb) + w2 · MSE(depth)`; the RGB term averages over all pixels
/// and channels, the depth term over pixels valid in both depth maps.
pub fn preservation_loss(
    img_a: &RgbImage,
    img_b: &RgbImage,
    depth_a: &DepthImage,
    depth_b: &DepthImage,
    w1: f64,
    w2: f64,
) -> Result<f64> {
    if img_a.dims() != img_b.dims() || depth_a.dims() != depth_b.dims() {
        return Err(Error::invalid("preservation loss inputs differ in size"));
    }
    if img_a.is_empty() {
        return Err(Error::invalid("preservation loss needs non-empty images"));
    }
    let rgb = img_a
        .pixels()
        .iter()
        .zip(img_b.pixels())
        .map(|(x, y)| (x - y).norm_squared())
        .sum::<f64>()
        / (3 * img_a.pixels().len()) as f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..depth_a.depth().len() {
        if depth_a.valid()[i] && depth_b.valid()[i] {
            let d = depth_a.depth()[i] - depth_b.depth()[i];
            sum += d * d;
            count += 1;
        }
    }
    let depth = if count > 0 {
        sum / count as f64
    } else if w2 > 0.0 {
        return Err(Error::invalid("no pixel has valid depth in both maps"));
    } else {
        0.0
    };
    Ok(w1 * rgb + w2 * depth)
}

/// Reported metrics, already multiplied by [`REPORT_SCALE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cd: f64,
    pub emd: f64,
    pub n_p: usize,
    pub n_q: usize,
    pub emd_solver: EmdSolver,
}

impl MetricReport {
    /// Chamfer-ℓ1 and EMD of two clouds, scaled for presentation.
    pub fn compute(p: &ColoredPointCloud, q: &ColoredPointCloud) -> Result<Self> {
        let cd = chamfer_l1(p, q)?;
        let (emd, emd_solver) = emd_auto(p, q)?;
        Ok(Self {
            cd: cd * REPORT_SCALE,
            emd: emd * REPORT_SCALE,
            n_p: p.len(),
            n_q: q.len(),
            emd_solver,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}
