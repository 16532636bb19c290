//! Scale-adaptive alignment of a generated shape to the partial input, and
//! fusion of the two.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ColoredPointCloud, CompletionConfig, Point3, SimilarityTransform};
use crate::metrics::{chamfer_l1, chamfer_rgb};
use crate::par;
use crate::spatial::{median, nearest_neighbor_spacing, PointIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentOutcome {
    /// Maps the normalized generated cloud into the partial's normalized frame.
    pub transform: SimilarityTransform,
    pub objective: f64,
    pub scale_grid_value: f64,
    pub icp_iterations: usize,
}

/// One grid scale of a sweep; `None` fields mean ICP failed at that scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEvaluation {
    pub scale: f64,
    pub objective: Option<f64>,
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSweep {
    pub outcome: AlignmentOutcome,
    pub grid: Vec<GridEvaluation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub completed: ColoredPointCloud,
    pub partial_count: usize,
    pub miss_count: usize,
    pub outcome: AlignmentOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Rigid transform taking the source onto the target.
    pub transform: SimilarityTransform,
    /// Number of accepted rigid updates.
    pub iterations: usize,
    /// Correspondence RMS before the first update and after each one.
    pub rms_history: Vec<f64>,
}

/// Centre on the bounding box and scale the longest side to 1.
pub fn normalize_unit(cloud: &ColoredPointCloud) -> Result<(ColoredPointCloud, SimilarityTransform)> {
    let (lo, hi) = cloud
        .bounding_box()
        .ok_or_else(|| Error::invalid("cannot normalize an empty cloud"))?;
    let extent = (hi - lo).max();
    if !(extent > 0.0) {
        return Err(Error::degenerate("cloud has zero extent"));
    }
    let scale = 1.0 / extent;
    let center = (lo + hi) * 0.5;
    let t = SimilarityTransform {
        scale,
        rotation: Matrix3::identity(),
        translation: -center * scale,
    };
    Ok((cloud.transformed(&t), t))
}

/// Least-squares rigid motion taking `source[i]` to `target[i]`.
pub fn kabsch_step(source: &[Point3], target: &[Point3]) -> Result<SimilarityTransform> {
    if source.len() != target.len() || source.len() < 3 {
        return Err(Error::invalid("kabsch needs two equal-length sets of at least 3 points"));
    }
    let n = source.len() as f64;
    let sc = source.iter().sum::<Vector3<f64>>() / n;
    let tc = target.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, t) in source.iter().zip(target) {
        h += (s - sc) * (t - tc).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u computed"), svd.v_t.expect("v computed"));
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| sv[*b].total_cmp(&sv[*a]));
    if !(sv[order[0]] > 0.0) || sv[order[1]] <= 1e-12 * sv[order[0]] {
        return Err(Error::degenerate("correspondences are collinear or coincident"));
    }
    let mut v = v_t.transpose();
    if (v * u.transpose()).determinant() < 0.0 {
        let k = order[2];
        for r in 0..3 {
            v[(r, k)] = -v[(r, k)];
        }
    }
    let rotation = v * u.transpose();
    Ok(SimilarityTransform::rigid(rotation, tc - rotation * sc))
}

/// Point-to-point ICP with exact nearest neighbours. Stops when the RMS
/// drops by less than `icp_tol`, hits zero, or after `icp_max_iters` updates.
/// An update that would raise the RMS is rejected, so `rms_history` is
/// non-increasing.
pub fn icp_align(source: &ColoredPointCloud, target: &ColoredPointCloud, config: &CompletionConfig) -> Result<IcpResult> {
    icp_points(source.points(), target.points(), config.icp_max_iters, config.icp_tol)
}

pub fn icp_points(source: &[Point3], target: &[Point3], max_iters: usize, tol: f64) -> Result<IcpResult> {
    if source.len() < 3 || target.len() < 3 {
        return Err(Error::invalid("ICP needs at least 3 points on each side"));
    }
    let index = PointIndex::build(target);
    let correspond = |t: &SimilarityTransform| {
        let moved: Vec<Point3> = source.iter().map(|p| t.apply(p)).collect();
        let pairs = par::map(&moved, |p| index.nearest(p).expect("target non-empty"));
        let rms = (pairs.iter().map(|(_, d)| d * d).sum::<f64>() / moved.len() as f64).sqrt();
        (moved, pairs, rms)
    };
    let mut current = SimilarityTransform::identity();
    let (mut moved, mut pairs, rms) = correspond(&current);
    let mut history = vec![rms];
    while history.len() <= max_iters && *history.last().unwrap() > 0.0 {
        let matched: Vec<Point3> = pairs.iter().map(|(j, _)| target[*j]).collect();
        let step = kabsch_step(&moved, &matched)?;
        let candidate = step.compose(&current);
        let (m, p, rms) = correspond(&candidate);
        let prev = *history.last().unwrap();
        if rms > prev {
            break;
        }
        current = candidate;
        moved = m;
        pairs = p;
        history.push(rms);
        if prev - rms < tol {
            break;
        }
    }
    Ok(IcpResult {
        transform: current,
        iterations: history.len() - 1,
        rms_history: history,
    })
}

/// `alpha · CD_xyz + beta · CD_rgb`; colours are only needed when `beta > 0`.
pub fn combined_objective(partial: &ColoredPointCloud, candidate: &ColoredPointCloud, alpha: f64, beta: f64) -> Result<f64> {
    let geometric = if alpha > 0.0 { alpha * chamfer_l1(partial, candidate)? } else { 0.0 };
    let color = if beta > 0.0 { beta * chamfer_rgb(partial, candidate)? } else { 0.0 };
    Ok(geometric + color)
}

fn evaluate_scale(
    partial: &ColoredPointCloud,
    gen: &ColoredPointCloud,
    scale: f64,
    config: &CompletionConfig,
) -> Result<AlignmentOutcome> {
    let scaled: Vec<Point3> = gen.points().iter().map(|p| p * scale).collect();
    let icp = icp_points(partial.points(), &scaled, config.icp_max_iters, config.icp_tol)?;
    // partial → scaled gen is x ↦ Rx + t; invert it to carry gen onto the partial
    let r_t = icp.transform.rotation.transpose();
    let transform = SimilarityTransform::new(scale, r_t, -(r_t * icp.transform.translation))?;
    let candidate = gen.transformed(&transform);
    let objective = combined_objective(partial, &candidate, config.alpha, config.beta)?;
    Ok(AlignmentOutcome {
        transform,
        objective,
        scale_grid_value: scale,
        icp_iterations: icp.iterations,
    })
}

/// Sweep the configured scale grid, aligning the scaled generated cloud to
/// the partial at each scale and keeping the lowest objective (ties: closest
/// to 1, then smaller scale).
pub fn dynamic_scale_adaptation(
    partial: &ColoredPointCloud,
    gen: &ColoredPointCloud,
    config: &CompletionConfig,
) -> Result<ScaleSweep> {
    config.validate()?;
    if config.beta > 0.0 && !(partial.has_colors() && gen.has_colors()) {
        return Err(Error::invalid("colour term needs coloured partial and generated clouds"));
    }
    let grid = config.scale_grid();
    let runs = par::map(&grid, |&s| evaluate_scale(partial, gen, s, config));
    let mut best: Option<&AlignmentOutcome> = None;
    for outcome in runs.iter().flatten() {
        let better = match best {
            None => true,
            Some(b) => {
                let key = |o: &AlignmentOutcome| (o.objective, (o.scale_grid_value - 1.0).abs(), o.scale_grid_value);
                let (x, y) = (key(outcome), key(b));
                x.0 < y.0 || (x.0 == y.0 && (x.1 < y.1 || (x.1 == y.1 && x.2 < y.2)))
            }
        };
        if better {
            best = Some(outcome);
        }
    }
    let Some(best) = best.cloned() else {
        let first = runs.into_iter().find_map(|r| r.err()).expect("grid is non-empty");
        return Err(first);
    };
    let grid = grid
        .iter()
        .zip(&runs)
        .map(|(&scale, r)| GridEvaluation {
            scale,
            objective: r.as_ref().ok().map(|o| o.objective),
            iterations: r.as_ref().ok().map(|o| o.icp_iterations),
        })
        .collect();
    Ok(ScaleSweep { outcome: best, grid })
}

/// `scale,objective,iterations` rows; failed scales have empty fields.
pub fn grid_csv(grid: &[GridEvaluation]) -> String {
    let mut out = String::from("scale,objective,iterations\n");
    for g in grid {
        let obj = g.objective.map(|v| format!("{v:?}")).unwrap_or_default();
        let it = g.iterations.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{:?},{obj},{it}", g.scale);
    }
    out
}

/// `overlap_radius_factor` × median nearest-neighbour spacing of `partial`.
pub fn overlap_radius(partial: &ColoredPointCloud, config: &CompletionConfig) -> Result<f64> {
    let mut spacing = nearest_neighbor_spacing(partial.points());
    let m = median(&mut spacing).ok_or_else(|| Error::invalid("overlap radius needs at least 2 partial points"))?;
    Ok(config.overlap_radius_factor * m)
}

/// Drop generated points within the overlap radius of any partial point.
pub fn remove_overlap(
    gen_aligned: &ColoredPointCloud,
    partial: &ColoredPointCloud,
    config: &CompletionConfig,
) -> Result<ColoredPointCloud> {
    let r = overlap_radius(partial, config)?;
    Ok(remove_within(gen_aligned, partial, r))
}

/// Keep the points of `gen` farther than `radius` from every point of `partial`.
pub fn remove_within(gen: &ColoredPointCloud, partial: &ColoredPointCloud, radius: f64) -> ColoredPointCloud {
    let index = PointIndex::build(partial.points());
    let keep = par::map(gen.points(), |p| index.nearest(p).is_none_or(|(_, d)| d > radius));
    gen.filter(|i, _| keep[i])
}

/// `partial` followed by `miss`.
pub fn fuse(partial: &ColoredPointCloud, miss: &ColoredPointCloud, outcome: &AlignmentOutcome) -> FusionResult {
    FusionResult {
        completed: partial.concat(miss),
        partial_count: partial.len(),
        miss_count: miss.len(),
        outcome: outcome.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{is_proper_rotation, Rgb};
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn cloud(points: Vec<Point3>) -> ColoredPointCloud {
        ColoredPointCloud::new(points).unwrap()
    }

    /// Asymmetric blob: random points in an anisotropic box with a bump.
    fn blob(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|i| {
                let p = Point3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.3..0.3), rng.gen_range(-0.2..0.2));
                if i % 5 == 0 {
                    p + Point3::new(0.3, 0.2, 0.1) * p.x.abs()
                } else {
                    p
                }
            })
            .collect()
    }

    fn random_rotation(rng: &mut ChaCha8Rng, max_deg: f64) -> Matrix3<f64> {
        let axis = Unit::new_normalize(Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        Rotation3::from_axis_angle(&axis, rng.gen_range(0.0..max_deg).to_radians()).into_inner()
    }

    #[test]
    fn normalize_examples() {
        let mut corners = Vec::new();
        for x in [-1.0, 1.0] {
            for y in [-1.0, 1.0] {
                for z in [-1.0, 1.0] {
                    corners.push(Point3::new(x, y, z));
                }
            }
        }
        let (n, t) = normalize_unit(&cloud(corners)).unwrap();
        assert_eq!(t.scale, 0.5);
        assert!(n.points().iter().all(|p| p.iter().all(|c| c.abs() == 0.5)));
        let (again, t2) = normalize_unit(&n).unwrap();
        assert!((t2.scale - 1.0).abs() < 1e-12 && t2.translation.norm() < 1e-12);
        assert_eq!(again.points(), n.points());
        assert!(normalize_unit(&cloud(vec![Point3::new(1.0, 2.0, 3.0); 3])).is_err());
    }

    proptest! {
        #[test]
        fn normalize_round_trip(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point3> = (0..50).map(|_| Point3::new(rng.gen_range(-9.0..9.0), rng.gen_range(-2.0..5.0), rng.gen())).collect();
            let c = cloud(pts.clone());
            let (n, t) = normalize_unit(&c).unwrap();
            let (lo, hi) = n.bounding_box().unwrap();
            prop_assert!(lo.iter().chain(hi.iter()).all(|v| v.abs() <= 0.5 + 1e-12));
            prop_assert!(lo.iter().chain(hi.iter()).any(|v| (v.abs() - 0.5).abs() < 1e-12));
            let back = n.transformed(&t.inverse());
            for (a, b) in back.points().iter().zip(&pts) {
                prop_assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn kabsch_examples() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
            Point3::new(0.0, 0.0, 3.0),
        ];
        let id = kabsch_step(&pts, &pts).unwrap();
        assert!((id.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(id.translation.norm() < 1e-12);

        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2).into_inner();
        let rotated: Vec<Point3> = pts.iter().map(|p| rz * p).collect();
        let t = kabsch_step(&pts, &rotated).unwrap();
        assert!((t.rotation - rz).norm() < 1e-9);

        let mirrored: Vec<Point3> = pts.iter().map(|p| Point3::new(-p.x, p.y, p.z)).collect();
        let m = kabsch_step(&pts, &mirrored).unwrap();
        assert!(is_proper_rotation(&m.rotation, 1e-9));

        let line: Vec<Point3> = (0..4).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(kabsch_step(&line, &line), Err(Error::Degenerate(_))));
    }

    #[test]
    fn icp_recovers_rigid_motion() {
        let config = CompletionConfig::default();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let target = blob(&mut rng, 400);
            let r = random_rotation(&mut rng, 15.0);
            let t = Vector3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
            let motion = SimilarityTransform::rigid(r, t);
            let source: Vec<Point3> = target.iter().map(|p| motion.apply(p)).collect();
            let res = icp_align(&cloud(source), &cloud(target), &config).unwrap();
            let inv = motion.inverse();
            assert!((res.transform.rotation - inv.rotation).norm() < 1e-6);
            assert!((res.transform.translation - inv.translation).norm() < 1e-6);
            assert!(res.rms_history.windows(2).all(|w| w[1] <= w[0]));
            assert!(is_proper_rotation(&res.transform.rotation, 1e-9));
        }
    }

    #[test]
    fn icp_identity_and_noise() {
        let config = CompletionConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pts = blob(&mut rng, 300);
        let res = icp_align(&cloud(pts.clone()), &cloud(pts.clone()), &config).unwrap();
        assert!(res.iterations <= 2);
        assert!((res.transform.rotation - Matrix3::identity()).norm() < 1e-12);

        let noise = Normal::new(0.0, 0.005).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let (target, _) = normalize_unit(&cloud(blob(&mut rng, 500))).unwrap();
            let r = random_rotation(&mut rng, 10.0);
            let t = Vector3::new(0.03, -0.02, 0.01);
            let motion = SimilarityTransform::rigid(r, t);
            let source: Vec<Point3> = target
                .points()
                .iter()
                .map(|p| motion.apply(p) + Vector3::from_fn(|_, _| noise.sample(&mut rng)))
                .collect();
            let res = icp_align(&cloud(source), &target, &config).unwrap();
            assert!((res.transform.translation - motion.inverse().translation).norm() < 0.01);
            assert!(res.rms_history.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    fn colored(points: Vec<Point3>, color: Rgb) -> ColoredPointCloud {
        let n = points.len();
        ColoredPointCloud::with_colors(points, vec![color; n]).unwrap()
    }

    #[test]
    fn objective_examples() {
        let pts = vec![Point3::zeros(), Point3::new(1.0, 0.0, 0.0)];
        let a = colored(pts.clone(), Rgb::new(0.2, 0.2, 0.2));
        let b = colored(pts, Rgb::new(0.3, 0.3, 0.3));
        assert_eq!(combined_objective(&a, &a, 1.0, 1.0).unwrap(), 0.0);
        assert!((combined_objective(&a, &b, 1.0, 1.0).unwrap() - 0.03f64.sqrt()).abs() < 1e-12);

        // P = {0, 2}, Q = {0.5, 3} on the x axis, colours by hand.
        let p = ColoredPointCloud::with_colors(
            vec![Point3::zeros(), Point3::new(2.0, 0.0, 0.0)],
            vec![Rgb::new(1.0, 0.0, 0.0), Rgb::new(0.0, 0.0, 0.0)],
        )
        .unwrap();
        let q = ColoredPointCloud::with_colors(
            vec![Point3::new(0.5, 0.0, 0.0), Point3::new(3.0, 0.0, 0.0)],
            vec![Rgb::new(0.0, 0.0, 0.0), Rgb::new(0.0, 0.6, 0.8)],
        )
        .unwrap();
        // CD: P→Q (0.5 + 1)/2, Q→P (0.5 + 1)/2 → 0.75
        // RGB pairs: 0↔0.5 (red vs black) and 2↔3 (black vs (0,.6,.8)), each
        // colour distance 1 → 1.0
        let want = 2.0 * 0.75 + 0.5 * 1.0;
        assert!((combined_objective(&p, &q, 2.0, 0.5).unwrap() - want).abs() < 1e-15);
        assert!(combined_objective(&p, &q.without_colors(), 1.0, 1.0).is_err());
        assert!(combined_objective(&p, &q.without_colors(), 1.0, 0.0).is_ok());
    }

    #[test]
    fn sweep_recovers_known_scale() {
        let config = CompletionConfig::default();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
            let (partial, _) = normalize_unit(&cloud(blob(&mut rng, 600))).unwrap();
            let colors: Vec<Rgb> = partial.points().iter().map(|p| p.add_scalar(0.5)).collect();
            let partial = partial.recolored(colors).unwrap();
            let r = random_rotation(&mut rng, 15.0);
            let t = Vector3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
            let gen = partial.transformed(&SimilarityTransform::rigid(r, t).compose(&SimilarityTransform::uniform_scale(1.0 / 1.1)));
            let sweep = dynamic_scale_adaptation(&partial, &gen, &config).unwrap();
            assert!((sweep.outcome.scale_grid_value - 1.1).abs() < 1e-9, "seed {seed}: {:?}", sweep.grid);
            for g in &sweep.grid {
                if g.scale != sweep.outcome.scale_grid_value {
                    assert!(sweep.outcome.objective < g.objective.unwrap());
                }
            }
            let recomputed = combined_objective(&partial, &gen.transformed(&sweep.outcome.transform), config.alpha, config.beta).unwrap();
            assert!((recomputed - sweep.outcome.objective).abs() <= 1e-9);
            assert!(is_proper_rotation(&sweep.outcome.transform.rotation, 1e-9));
        }
    }

    #[test]
    fn sweep_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (partial, _) = normalize_unit(&cloud(blob(&mut rng, 300))).unwrap();
        let partial = partial.recolored(vec![Rgb::new(0.1, 0.5, 0.9); 300]).unwrap();
        let sweep = dynamic_scale_adaptation(&partial, &partial, &CompletionConfig::default()).unwrap();
        assert_eq!(sweep.outcome.scale_grid_value, 1.0);
        assert!(sweep.outcome.objective.abs() < 1e-9);
        assert!((sweep.outcome.transform.rotation - Matrix3::identity()).norm() < 1e-9);
        assert_eq!(sweep.grid.len(), 5);
    }

    fn ring(n: usize, radius: f64, z: f64, color: Rgb) -> ColoredPointCloud {
        let pts = (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                Point3::new(radius * a.cos(), radius * a.sin(), z)
            })
            .collect();
        colored(pts, color)
    }

    /// The partial red ring fits the blue ring of the generated shape at
    /// scale 1.0 and its red ring at 1.1; only colour tells them apart.
    #[test]
    fn colour_breaks_geometric_ambiguity() {
        let red = Rgb::new(1.0, 0.0, 0.0);
        let blue = Rgb::new(0.0, 0.0, 1.0);
        let partial = ring(200, 0.3, 0.0, red);
        let gen = ring(200, 0.3, 0.15, blue).concat(&ring(200, 0.3 / 1.1, -0.15, red));
        let geometric = CompletionConfig {
            beta: 0.0,
            ..CompletionConfig::default()
        };
        let with_color = CompletionConfig {
            beta: 1.0,
            ..CompletionConfig::default()
        };
        let a = dynamic_scale_adaptation(&partial, &gen, &geometric).unwrap();
        let b = dynamic_scale_adaptation(&partial, &gen, &with_color).unwrap();
        assert!((a.outcome.scale_grid_value - 1.0).abs() < 1e-9, "{:?}", a.grid);
        assert!((b.outcome.scale_grid_value - 1.1).abs() < 1e-9, "{:?}", b.grid);
        let aligned = gen.transformed(&b.outcome.transform);
        assert!(chamfer_rgb(&partial, &aligned).unwrap() < chamfer_rgb(&partial, &gen.transformed(&a.outcome.transform)).unwrap());
    }

    #[test]
    fn argmin_over_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (partial, _) = normalize_unit(&cloud(blob(&mut rng, 400))).unwrap();
        let (gen, _) = normalize_unit(&cloud(blob(&mut rng, 400))).unwrap();
        let config = CompletionConfig {
            beta: 0.0,
            ..CompletionConfig::default()
        };
        let sweep = dynamic_scale_adaptation(&partial, &gen, &config).unwrap();
        for g in &sweep.grid {
            assert!(sweep.outcome.objective <= g.objective.unwrap());
        }
        let csv = grid_csv(&sweep.grid);
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.starts_with("scale,objective,iterations\n0.8,"));
    }

    #[test]
    fn overlap_examples() {
        let config = CompletionConfig::default();
        let pts: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let partial = cloud(pts.clone());
        assert!(remove_overlap(&partial, &partial, &config).unwrap().is_empty());
        let r = overlap_radius(&partial, &config).unwrap();
        assert_eq!(r, 2.0);
        let far = cloud(pts.iter().map(|p| p + Vector3::new(0.0, 10.0 * r, 0.0)).collect());
        assert_eq!(remove_overlap(&far, &partial, &config).unwrap(), far);
    }

    #[test]
    fn overlap_interleaved_lattice() {
        // partial on even lattice sites; gen alternates between points at
        // distance 0.5r and 1.5r from the nearest partial site
        let config = CompletionConfig::default();
        let partial: Vec<Point3> = (0..20)
            .flat_map(|i| (0..20).map(move |j| Point3::new(i as f64, j as f64, 0.0)))
            .collect();
        let partial = cloud(partial);
        let r = overlap_radius(&partial, &config).unwrap();
        let gen: Vec<Point3> = (0..200)
            .map(|k| {
                let base = Point3::new((k % 20) as f64, (k / 20) as f64, 0.0);
                let lift = if k % 2 == 0 { 0.5 * r } else { 1.5 * r };
                base + Vector3::new(0.0, 0.0, lift)
            })
            .collect();
        let kept = remove_overlap(&cloud(gen.clone()), &partial, &config).unwrap();
        let want: Vec<Point3> = gen
            .iter()
            .filter(|g| partial.points().iter().map(|p| (p - *g).norm()).fold(f64::INFINITY, f64::min) > r)
            .copied()
            .collect();
        assert_eq!(kept.points(), &want[..]);
        assert_eq!(kept.len(), 100);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn overlap_matches_brute_force(seed in any::<u64>(), factor in 0.5f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let partial = cloud((0..800).map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen())).collect());
            let gen = cloud((0..1200).map(|_| Point3::new(rng.gen_range(-0.2..1.2), rng.gen(), rng.gen())).collect());
            let config = CompletionConfig { overlap_radius_factor: factor, ..CompletionConfig::default() };
            let r = overlap_radius(&partial, &config).unwrap();
            let kept = remove_overlap(&gen, &partial, &config).unwrap();
            let want: Vec<Point3> = gen.points().iter()
                .filter(|g| partial.points().iter().map(|p| (p - *g).norm()).fold(f64::INFINITY, f64::min) > r)
                .copied().collect();
            prop_assert_eq!(kept.points(), &want[..]);
        }
    }

    #[test]
    fn fuse_keeps_partial_first() {
        let partial = colored(vec![Point3::new(0.1, 0.2, 0.3), Point3::new(0.4, 0.5, 0.6)], Rgb::new(1.0, 0.0, 0.0));
        let outcome = AlignmentOutcome {
            transform: SimilarityTransform::identity(),
            objective: 0.0,
            scale_grid_value: 1.0,
            icp_iterations: 0,
        };
        let empty = fuse(&partial, &colored(vec![], Rgb::zeros()), &outcome);
        assert_eq!(empty.completed, partial);
        let miss = colored(vec![Point3::new(9.0, 9.0, 9.0)], Rgb::new(0.0, 1.0, 0.0));
        let f = fuse(&partial, &miss, &outcome);
        assert_eq!(f.completed.len(), f.partial_count + f.miss_count);
        assert_eq!(&f.completed.points()[..2], partial.points());
    }
}
