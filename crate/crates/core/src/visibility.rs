//! Hidden point removal and scan-viewpoint selection.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, ColoredPointCloud, CompletionConfig, Point3};
use crate::hull::ConvexHull;
use crate::par;

/// Camera distance from the cloud centre, in bounding-sphere radii.
pub const CAMERA_DISTANCE_FACTOR: f64 = 2.5;

#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityResult {
    /// Strictly increasing indices into the input cloud.
    pub visible_indices: Vec<usize>,
    /// Flip radius `R`.
    pub flip_radius: f64,
}

impl VisibilityResult {
    pub fn count(&self) -> usize {
        self.visible_indices.len()
    }
}

/// `p ↦ v + d̂ (2R − ‖p − v‖)` for every point.
pub fn flip_points(points: &[Point3], viewpoint: &Point3, radius: f64) -> Result<Vec<Point3>> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = p - viewpoint;
            let n = d.norm();
            if n <= 1e-12 {
                return Err(Error::degenerate(format!("point {i} coincides with the viewpoint")));
            }
            Ok(viewpoint + d * ((2.0 * radius - n) / n))
        })
        .collect()
}

/// Spherical flip of a cloud about `viewpoint`. Order and colours are kept.
pub fn spherical_flip(cloud: &ColoredPointCloud, viewpoint: &Point3, radius: f64) -> Result<ColoredPointCloud> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid("flip radius must be positive"));
    }
    let flipped = flip_points(cloud.points(), viewpoint, radius)?;
    ColoredPointCloud::from_parts(flipped, cloud.colors().map(<[_]>::to_vec))
}

/// Hidden point removal: flip with `R = radius_factor · max ‖p − v‖`, take
/// the hull of the flipped points plus the viewpoint, and report the input
/// points whose images are hull vertices.
pub fn hidden_point_removal(
    cloud: &ColoredPointCloud,
    viewpoint: &Point3,
    radius_factor: f64,
) -> Result<VisibilityResult> {
    if !(radius_factor >= 1.0 && radius_factor.is_finite()) {
        return Err(Error::invalid("radius_factor must be at least 1"));
    }
    let points = cloud.points();
    if points.len() < 3 {
        return Err(Error::invalid("hidden point removal needs at least 3 points"));
    }
    let max_dist = points.iter().map(|p| (p - viewpoint).norm()).fold(0.0, f64::max);
    let radius = radius_factor * max_dist;
    let mut flipped = flip_points(points, viewpoint, radius)?;
    flipped.push(*viewpoint);
    let hull = ConvexHull::build(&flipped)?;
    let n = points.len();
    Ok(VisibilityResult {
        visible_indices: hull.vertices.into_iter().filter(|&i| i < n).collect(),
        flip_radius: radius,
    })
}

/// Centre of the bounding box and the radius of the enclosing sphere about it.
pub fn bounding_sphere(cloud: &ColoredPointCloud) -> Result<(Point3, f64)> {
    let (lo, hi) = cloud
        .bounding_box()
        .ok_or_else(|| Error::invalid("cannot place cameras around an empty cloud"))?;
    let center = (lo + hi) * 0.5;
    let radius = cloud.points().iter().map(|p| (p - center).norm()).fold(0.0, f64::max);
    if radius <= 0.0 {
        return Err(Error::degenerate("cloud has zero extent"));
    }
    Ok((center, radius))
}

/// Unit directions of a Fibonacci sphere lattice (`count = 2` gives the
/// two poles).
pub fn fibonacci_directions(count: usize) -> Vec<Vector3<f64>> {
    if count == 2 {
        return vec![Vector3::z(), -Vector3::z()];
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

fn ring_directions(count: usize) -> Vec<Vector3<f64>> {
    (0..count)
        .map(|i| {
            let phi = 2.0 * PI * i as f64 / count as f64;
            Vector3::new(phi.cos(), phi.sin(), 0.0)
        })
        .collect()
}

fn camera_up(direction: &Vector3<f64>) -> Vector3<f64> {
    if direction.cross(&Vector3::z()).norm() < 1e-6 {
        Vector3::y()
    } else {
        Vector3::z()
    }
}

/// `count` cameras on a Fibonacci lattice around the cloud, 60° FOV, 512².
pub fn place_cameras(cloud: &ColoredPointCloud, count: usize) -> Result<Vec<CameraPose>> {
    let config = CompletionConfig {
        camera_count: count,
        ..CompletionConfig::default()
    };
    place_cameras_with(cloud, &config)
}

/// Cameras per `config.camera_count`, `vertical_fov`, `depth_resolution`
/// and `zero_elevation`.
pub fn place_cameras_with(cloud: &ColoredPointCloud, config: &CompletionConfig) -> Result<Vec<CameraPose>> {
    let count = config.camera_count;
    if count < 2 {
        return Err(Error::invalid("camera count must be at least 2"));
    }
    let (center, radius) = bounding_sphere(cloud)?;
    let distance = CAMERA_DISTANCE_FACTOR * radius;
    let dirs = if config.zero_elevation {
        ring_directions(count)
    } else {
        fibonacci_directions(count)
    };
    dirs.iter()
        .map(|d| {
            CameraPose::new(
                center + d * distance,
                center,
                camera_up(&-d),
                config.vertical_fov,
                config.depth_resolution,
            )
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ViewpointSelection {
    pub index: usize,
    pub camera: CameraPose,
    pub visibility: VisibilityResult,
    /// Visible point count for every candidate camera.
    pub visible_counts: Vec<usize>,
}

/// The camera seeing the most points; ties go to the lowest index.
pub fn select_scan_viewpoint(
    cloud: &ColoredPointCloud,
    cameras: &[CameraPose],
    radius_factor: f64,
) -> Result<ViewpointSelection> {
    if cameras.is_empty() {
        return Err(Error::invalid("no candidate cameras"));
    }
    let results = par::map(cameras, |cam| hidden_point_removal(cloud, &cam.position, radius_factor));
    let results: Vec<VisibilityResult> = results.into_iter().collect::<Result<_>>()?;
    let visible_counts: Vec<usize> = results.iter().map(VisibilityResult::count).collect();
    let mut best = 0;
    for (i, c) in visible_counts.iter().enumerate() {
        if *c > visible_counts[best] {
            best = i;
        }
    }
    let visibility = results.into_iter().nth(best).expect("index in range");
    Ok(ViewpointSelection {
        index: best,
        camera: cameras[best].clone(),
        visibility,
        visible_counts,
    })
}

/// `camera_index,visible_count` rows with a header.
pub fn visible_counts_csv(counts: &[usize]) -> String {
    let mut out = String::from("camera_index,visible_count\n");
    for (i, c) in counts.iter().enumerate() {
        let _ = writeln!(out, "{i},{c}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: Vec<Point3>) -> ColoredPointCloud {
        ColoredPointCloud::new(points).unwrap()
    }

    fn unit_sphere(n: usize, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| loop {
                let p = Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let r = p.norm();
                if r > 0.1 && r <= 1.0 {
                    break p / r;
                }
            })
            .collect()
    }

    /// First intersection parameter of the ray `o + t·d` with a sphere.
    fn ray_sphere(o: &Point3, d: &Vector3<f64>, radius: f64) -> Option<f64> {
        let b = o.dot(d);
        let c = o.norm_squared() - radius * radius;
        let disc = b * b - d.norm_squared() * c;
        (disc >= 0.0).then(|| (-b - disc.sqrt()) / d.norm_squared())
    }

    #[test]
    fn flip_examples() {
        let v = Point3::zeros();
        let out = flip_points(&[Point3::new(1.0, 0.0, 0.0)], &v, 2.0).unwrap();
        assert_eq!(out[0], Point3::new(3.0, 0.0, 0.0));
        let on_sphere = Point3::new(0.0, 1.2, 1.6);
        let out = flip_points(&[on_sphere], &v, 2.0).unwrap();
        assert!((out[0] - on_sphere).norm() < 1e-15);
        assert!(matches!(flip_points(&[v], &v, 1.0), Err(Error::Degenerate(m)) if m.contains("point 0")));
    }

    #[test]
    fn flip_is_an_involution_and_keeps_colors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3> = (0..200).map(|_| Point3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let colors: Vec<_> = pts.iter().map(|p| p.map(|c| c * 0.5)).collect();
        let c = ColoredPointCloud::with_colors(pts.clone(), colors.clone()).unwrap();
        let v = Point3::new(-1.0, 0.3, 2.0);
        let r = 5.0;
        let once = spherical_flip(&c, &v, r).unwrap();
        assert_eq!(once.colors().unwrap(), &colors[..]);
        let twice = spherical_flip(&once, &v, r).unwrap();
        for (a, b) in twice.points().iter().zip(&pts) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn flip_geometry(
            p in prop::array::uniform3(-5.0f64..5.0),
            v in prop::array::uniform3(-5.0f64..5.0),
            factor in 1.0f64..200.0,
        ) {
            let p = Point3::from(p);
            let v = Point3::from(v);
            let d = (p - v).norm();
            prop_assume!(d > 1e-6);
            let r = factor * d;
            let q = flip_points(&[p], &v, r).unwrap()[0];
            prop_assert!(((q - v).norm() + d - 2.0 * r).abs() <= 1e-9 * r.max(1.0));
            let cross = (p - v).normalize().cross(&(q - v).normalize()).norm();
            prop_assert!(cross <= 1e-9);
        }
    }

    #[test]
    fn sphere_cap_matches_ray_cast() {
        let pts = unit_sphere(2000, 17);
        let cam = Point3::new(0.0, 0.0, 3.0);
        let vis = hidden_point_removal(&cloud(pts.clone()), &cam, 100.0).unwrap();
        assert!(vis.flip_radius >= pts.iter().map(|p| (p - cam).norm()).fold(0.0, f64::max));
        assert!(vis.visible_indices.windows(2).all(|w| w[0] < w[1]));
        let silhouette = (1.0f64 / 3.0).acos();
        let (mut agree, mut total) = (0, 0);
        for (i, p) in pts.iter().enumerate() {
            let angle = p.z.clamp(-1.0, 1.0).acos();
            if (angle - silhouette).abs() < 2f64.to_radians() {
                continue;
            }
            let t = ray_sphere(&cam, &(p - cam), 1.0).unwrap();
            let truth = (t - 1.0).abs() < 1e-9;
            total += 1;
            agree += usize::from(truth == vis.visible_indices.binary_search(&i).is_ok());
        }
        assert!(agree as f64 >= 0.95 * total as f64, "{agree}/{total}");
    }

    #[test]
    fn square_facing_camera_fully_visible() {
        let pts = vec![
            Point3::new(-1.0, -1.0, 0.0),
            Point3::new(1.0, -1.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(-1.0, 1.0, 0.0),
            Point3::new(1e-6, -2e-6, -1e-6),
        ];
        let vis = hidden_point_removal(&cloud(pts), &Point3::new(0.0, 0.0, 5.0), 100.0).unwrap();
        for i in 0..4 {
            assert!(vis.visible_indices.contains(&i));
        }
    }

    #[test]
    fn inner_sphere_hidden_in_cap() {
        for seed in 0..3 {
            let mut pts = unit_sphere(8000, seed);
            let outer = pts.len();
            pts.extend(unit_sphere(1000, seed + 100).into_iter().map(|p| p * 0.5));
            let cam = Point3::new(0.0, 0.0, 3.0);
            let vis = hidden_point_removal(&cloud(pts.clone()), &cam, 100.0).unwrap();
            let cap = (1.0f64 / 3.0).acos() - 2f64.to_radians();
            for &i in &vis.visible_indices {
                if i >= outer {
                    let angle = pts[i].normalize().z.acos();
                    assert!(angle >= cap, "inner point {i} visible at {:.1} deg", angle.to_degrees());
                }
            }
        }
    }

    #[test]
    fn camera_lattice() {
        let c = cloud(unit_sphere(500, 1));
        let (center, radius) = bounding_sphere(&c).unwrap();
        let two = place_cameras(&c, 2).unwrap();
        let a = two[0].position - center;
        let b = two[1].position - center;
        assert!((a.normalize() + b.normalize()).norm() < 1e-12);

        let cams = place_cameras(&c, 42).unwrap();
        let dist = CAMERA_DISTANCE_FACTOR * radius;
        for cam in &cams {
            assert!(((cam.position - center).norm() - dist).abs() < 1e-9);
            assert!((cam.look_at - center).norm() == 0.0);
        }
        // Hexagonal packing of n caps on the unit sphere: angle ≈ sqrt(8π / (√3 n)).
        let ideal = (8.0 * PI / (3f64.sqrt() * 42.0)).sqrt();
        let mut min_sep = f64::INFINITY;
        for i in 0..cams.len() {
            for j in i + 1..cams.len() {
                let u = (cams[i].position - center).normalize();
                let w = (cams[j].position - center).normalize();
                min_sep = min_sep.min(u.dot(&w).clamp(-1.0, 1.0).acos());
            }
        }
        assert!(min_sep >= 0.75 * ideal, "{} vs {}", min_sep, ideal);
        assert_eq!(cams, place_cameras(&c, 42).unwrap());
    }

    #[test]
    fn zero_elevation_ring() {
        let c = cloud(unit_sphere(300, 2));
        let config = CompletionConfig {
            camera_count: 8,
            zero_elevation: true,
            ..CompletionConfig::default()
        };
        let (center, _) = bounding_sphere(&c).unwrap();
        for cam in place_cameras_with(&c, &config).unwrap() {
            assert!((cam.position.z - center.z).abs() < 1e-12);
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let c = cloud(unit_sphere(1500, 8));
        let cam = place_cameras(&c, 6).unwrap()[3].clone();
        let sel = select_scan_viewpoint(&c, &[cam.clone(), cam.clone(), cam], 100.0).unwrap();
        assert_eq!(sel.index, 0);
        assert!(sel.visible_counts.iter().all(|&n| n == sel.visible_counts[0]));
    }

    #[test]
    fn hemisphere_bowl_selects_top_camera() {
        let pts: Vec<Point3> = unit_sphere(4000, 12).into_iter().filter(|p| p.z < 0.0).collect();
        let c = cloud(pts);
        let cams = place_cameras(&c, 26).unwrap();
        let sel = select_scan_viewpoint(&c, &cams, 100.0).unwrap();
        let angle = sel.camera.direction().dot(&-Vector3::z()).clamp(-1.0, 1.0).acos();
        assert!(angle.to_degrees() < 30.0, "{}", angle.to_degrees());
        assert_eq!(sel.visibility.count(), sel.visible_counts[sel.index]);
        assert_eq!(sel.visible_counts.iter().max(), Some(&sel.visibility.count()));
    }

    #[test]
    fn counts_csv() {
        assert_eq!(visible_counts_csv(&[3, 5]), "camera_index,visible_count\n0,3\n1,5\n");
    }
}
