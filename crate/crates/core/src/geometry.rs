//! Value types shared by every stage: point clouds, cameras, similarity
//! transforms and the completion configuration.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;
/// RGB triple with channels in `[0, 1]`.
pub type Rgb = Vector3<f64>;

/// Ordered list of 3D points with optional per-point colors.
///
/// Construction validates that every coordinate is finite and that colors,
/// when present, match the point count. Filtering keeps survivors in their
/// original relative order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColoredPointCloud {
    points: Vec<Point3>,
    colors: Option<Vec<Rgb>>,
}

impl ColoredPointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        check_finite(&points, "point")?;
        Ok(Self {
            points,
            colors: None,
        })
    }

    pub fn with_colors(points: Vec<Point3>, colors: Vec<Rgb>) -> Result<Self> {
        if colors.len() != points.len() {
            return Err(Error::invalid(format!(
                "{} colors for {} points",
                colors.len(),
                points.len()
            )));
        }
        check_finite(&points, "point")?;
        check_finite(&colors, "color")?;
        Ok(Self {
            points,
            colors: Some(colors),
        })
    }

    pub fn from_parts(points: Vec<Point3>, colors: Option<Vec<Rgb>>) -> Result<Self> {
        match colors {
            Some(c) => Self::with_colors(points, c),
            None => Self::new(points),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn colors(&self) -> Option<&[Rgb]> {
        self.colors.as_deref()
    }

    pub fn has_colors(&self) -> bool {
        self.colors.is_some()
    }

    pub fn into_parts(self) -> (Vec<Point3>, Option<Vec<Rgb>>) {
        (self.points, self.colors)
    }

    /// Replace (or attach) the color channel, keeping geometry untouched.
    pub fn recolored(&self, colors: Vec<Rgb>) -> Result<Self> {
        if colors.len() != self.points.len() {
            return Err(Error::invalid("color count does not match point count"));
        }
        check_finite(&colors, "color")?;
        Ok(Self {
            points: self.points.clone(),
            colors: Some(colors),
        })
    }

    pub fn without_colors(&self) -> Self {
        Self {
            points: self.points.clone(),
            colors: None,
        }
    }

    /// Sub-cloud of the given indices, in the order given.
    pub fn select(&self, indices: &[usize]) -> Self {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let colors = self
            .colors
            .as_ref()
            .map(|c| indices.iter().map(|&i| c[i]).collect());
        Self { points, colors }
    }

    /// Keep points for which `keep` is true, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(usize, &Point3) -> bool) -> Self {
        let indices: Vec<usize> = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, p)| keep(*i, p))
            .map(|(i, _)| i)
            .collect();
        self.select(&indices)
    }

    /// `self` followed by `other`. The result is colored only when both are.
    pub fn concat(&self, other: &Self) -> Self {
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let colors = match (&self.colors, &other.colors) {
            (Some(a), Some(b)) => {
                let mut c = a.clone();
                c.extend_from_slice(b);
                Some(c)
            }
            _ => None,
        };
        Self { points, colors }
    }

    pub fn transformed(&self, transform: &SimilarityTransform) -> Self {
        Self {
            points: self.points.iter().map(|p| transform.apply(p)).collect(),
            colors: self.colors.clone(),
        }
    }

    pub fn bounding_box(&self) -> Option<(Point3, Point3)> {
        bounding_box(&self.points)
    }
}

fn check_finite(values: &[Vector3<f64>], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
        Some(i) => Err(Error::invalid(format!("{what} {i} has a non-finite coordinate"))),
        None => Ok(()),
    }
}

pub fn bounding_box(points: &[Point3]) -> Option<(Point3, Point3)> {
    let first = points.first()?;
    let mut lo = *first;
    let mut hi = *first;
    for p in &points[1..] {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    Some((lo, hi))
}

/// Pinhole camera looking from `position` towards `look_at`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Point3,
    pub look_at: Point3,
    pub up: Vector3<f64>,
    /// Vertical field of view in degrees.
    pub vertical_fov: f64,
    /// `(width, height)` in pixels.
    pub resolution: (usize, usize),
}

/// Projection of a point into a camera: continuous pixel coordinates
/// (column, row) and depth along the forward axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl CameraPose {
    pub fn new(
        position: Point3,
        look_at: Point3,
        up: Vector3<f64>,
        vertical_fov: f64,
        resolution: (usize, usize),
    ) -> Result<Self> {
        let cam = Self {
            position,
            look_at,
            up,
            vertical_fov,
            resolution,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.vertical_fov > 0.0 && self.vertical_fov < 180.0) {
            return Err(Error::invalid(format!(
                "vertical_fov {} outside (0, 180)",
                self.vertical_fov
            )));
        }
        if self.resolution.0 == 0 || self.resolution.1 == 0 {
            return Err(Error::invalid("camera resolution must be non-zero"));
        }
        let forward = self.look_at - self.position;
        if forward.norm() <= f64::EPSILON {
            return Err(Error::invalid("camera look_at coincides with position"));
        }
        if forward.normalize().cross(&self.up).norm() <= 1e-9 * self.up.norm().max(1e-300) {
            return Err(Error::invalid("camera up is parallel to the viewing direction"));
        }
        Ok(())
    }

    /// Orthonormal camera basis `(right, up, forward)`.
    pub fn basis(&self) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let forward = (self.look_at - self.position).normalize();
        let right = forward.cross(&self.up).normalize();
        let up = right.cross(&forward);
        (right, up, forward)
    }

    /// Focal length in pixels (square pixels).
    pub fn focal_px(&self) -> f64 {
        let half = (self.vertical_fov.to_radians() * 0.5).tan();
        self.resolution.1 as f64 * 0.5 / half
    }

    /// Project a world point. Returns `None` for points at or behind the
    /// camera plane.
    pub fn project(&self, p: &Point3) -> Option<Projection> {
        let (right, up, forward) = self.basis();
        self.project_with(&(right, up, forward), self.focal_px(), p)
    }

    pub(crate) fn project_with(
        &self,
        basis: &(Vector3<f64>, Vector3<f64>, Vector3<f64>),
        focal: f64,
        p: &Point3,
    ) -> Option<Projection> {
        let d = p - self.position;
        let z = d.dot(&basis.2);
        if z <= 0.0 {
            return None;
        }
        let x = d.dot(&basis.0);
        let y = d.dot(&basis.1);
        let (w, h) = self.resolution;
        Some(Projection {
            u: w as f64 * 0.5 + focal * x / z,
            v: h as f64 * 0.5 - focal * y / z,
            depth: z,
        })
    }

    /// Unit viewing direction.
    pub fn direction(&self) -> Vector3<f64> {
        (self.look_at - self.position).normalize()
    }
}

/// `x ↦ scale · rotation · x + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Checked constructor: rotation must be proper orthogonal within 1e-9
    /// and the scale strictly positive.
    pub fn new(scale: f64, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = Self {
            scale,
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid(format!("scale {} must be positive", self.scale)));
        }
        if !is_proper_rotation(&self.rotation, 1e-9) {
            return Err(Error::invalid("rotation is not proper orthogonal"));
        }
        if !self.translation.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("translation is not finite"));
        }
        Ok(())
    }

    pub fn rigid(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            scale: 1.0,
            rotation,
            translation,
        }
    }

    pub fn uniform_scale(scale: f64) -> Self {
        Self {
            scale,
            ..Self::identity()
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p * self.scale + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation * self.scale + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }
}

pub fn is_proper_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    let gram = r.transpose() * r - Matrix3::identity();
    gram.iter().all(|v| v.abs() <= tol) && (r.determinant() - 1.0).abs() <= tol
}

/// Tunable knobs for a completion run. Serialized as a flat JSON object
/// whose keys match the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletionConfig {
    /// Weight of the geometric Chamfer term.
    pub alpha: f64,
    /// Weight of the RGB Chamfer term.
    pub beta: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub scale_step: f64,
    /// Number of candidate cameras on the viewing sphere.
    pub camera_count: usize,
    pub depth_resolution: (usize, usize),
    /// Vertical field of view of the candidate cameras, degrees.
    pub vertical_fov: f64,
    /// Restrict candidate cameras to the horizontal ring (elevation 0).
    pub zero_elevation: bool,
    pub raw_splat_px: usize,
    pub full_splat_px: usize,
    pub overlap_radius_factor: f64,
    pub icp_max_iters: usize,
    pub icp_tol: f64,
    /// Flip radius as a multiple of the farthest point distance.
    pub hpr_radius_factor: f64,
    pub w1: f64,
    pub w2: f64,
    pub rng_seed: u64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.1,
            scale_min: 0.8,
            scale_max: 1.2,
            scale_step: 0.1,
            camera_count: 42,
            depth_resolution: (512, 512),
            vertical_fov: 60.0,
            zero_elevation: false,
            raw_splat_px: 1,
            full_splat_px: 5,
            overlap_radius_factor: 2.0,
            icp_max_iters: 50,
            icp_tol: 1e-6,
            hpr_radius_factor: 100.0,
            w1: 1.0,
            w2: 1.0,
            rng_seed: 0,
        }
    }
}

impl CompletionConfig {
    pub fn validate(&self) -> Result<()> {
        let non_negative = [("alpha", self.alpha), ("beta", self.beta), ("w1", self.w1), ("w2", self.w2)];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be a non-negative number")));
            }
        }
        let positive = [
            ("scale_step", self.scale_step),
            ("scale_min", self.scale_min),
            ("overlap_radius_factor", self.overlap_radius_factor),
            ("icp_tol", self.icp_tol),
            ("hpr_radius_factor", self.hpr_radius_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.scale_min <= self.scale_max) {
            return Err(Error::invalid("scale_min must not exceed scale_max"));
        }
        if self.camera_count == 0 || self.icp_max_iters == 0 {
            return Err(Error::invalid("camera_count and icp_max_iters must be positive"));
        }
        if self.raw_splat_px == 0 || self.full_splat_px == 0 {
            return Err(Error::invalid("splat sizes must be positive"));
        }
        if self.raw_splat_px > self.full_splat_px {
            return Err(Error::invalid("raw_splat_px must not exceed full_splat_px"));
        }
        if self.depth_resolution.0 == 0 || self.depth_resolution.1 == 0 {
            return Err(Error::invalid("depth_resolution must be non-zero"));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < 180.0) {
            return Err(Error::invalid("vertical_fov must lie in (0, 180)"));
        }
        Ok(())
    }

    /// The scale grid `scale_min, scale_min + step, …` up to `scale_max`.
    pub fn scale_grid(&self) -> Vec<f64> {
        let slack = self.scale_step * 1e-9;
        (0..)
            .map(|i| round12(self.scale_min + i as f64 * self.scale_step))
            .take_while(|s| *s <= self.scale_max + slack)
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            let offset = line_col_to_offset(text, e.line(), e.column());
            Error::parse("config", offset, e.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Drop accumulated float noise so grid values print as written (1.2, not
/// 1.2000000000000002).
fn round12(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

fn line_col_to_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    #[test]
    fn default_grid_runs_point_eight_to_one_point_two() {
        let grid = CompletionConfig::default().scale_grid();
        assert_eq!(grid.len(), 5);
        for (g, want) in grid.iter().zip([0.8, 0.9, 1.0, 1.1, 1.2]) {
            assert!((g - want).abs() < 1e-12);
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = CompletionConfig {
            beta: 0.25,
            rng_seed: u64::MAX,
            ..CompletionConfig::default()
        };
        let back = CompletionConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        assert!(matches!(
            CompletionConfig::from_json("{\"alpah\": 1}"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            CompletionConfig::from_json("{\"raw_splat_px\": 6, \"full_splat_px\": 5}"),
            Err(Error::InvalidInput(_))
        ));
        let partial = CompletionConfig::from_json("{\"alpha\": 2.0}").unwrap();
        assert_eq!(partial.alpha, 2.0);
        assert_eq!(partial.camera_count, 42);
    }

    #[test]
    fn transform_inverse_and_compose() {
        let r = Rotation3::from_euler_angles(0.3, -0.2, 1.1).into_inner();
        let t = SimilarityTransform::new(1.7, r, Vector3::new(0.1, -2.0, 3.0)).unwrap();
        let p = Point3::new(0.4, 0.5, -0.6);
        let back = t.inverse().apply(&t.apply(&p));
        assert!((back - p).norm() < 1e-12);
        let twice = t.compose(&t).apply(&p);
        assert!((twice - t.apply(&t.apply(&p))).norm() < 1e-12);
    }

    #[test]
    fn rejects_improper_rotation() {
        let mirror = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(SimilarityTransform::new(1.0, mirror, Vector3::zeros()).is_err());
        assert!(SimilarityTransform::new(0.0, Matrix3::identity(), Vector3::zeros()).is_err());
    }

    #[test]
    fn cloud_rejects_nan_and_length_mismatch() {
        assert!(ColoredPointCloud::new(vec![Point3::new(f64::NAN, 0.0, 0.0)]).is_err());
        assert!(ColoredPointCloud::with_colors(vec![Point3::zeros()], vec![]).is_err());
    }

    #[test]
    fn filter_preserves_order() {
        let pts: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let cloud = ColoredPointCloud::new(pts).unwrap();
        let odd = cloud.filter(|i, _| i % 2 == 1);
        let xs: Vec<f64> = odd.points().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![1.0, 3.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn camera_validation() {
        let up = Vector3::z();
        assert!(CameraPose::new(Point3::new(0.0, 0.0, 3.0), Point3::zeros(), up, 60.0, (64, 64)).is_err());
        assert!(CameraPose::new(Point3::new(3.0, 0.0, 0.0), Point3::zeros(), up, 180.0, (64, 64)).is_err());
        let cam = CameraPose::new(Point3::new(3.0, 0.0, 0.0), Point3::zeros(), up, 60.0, (64, 64)).unwrap();
        let p = cam.project(&Point3::zeros()).unwrap();
        assert_eq!((p.u, p.v, p.depth), (32.0, 32.0, 3.0));
        assert!(cam.project(&Point3::new(4.0, 0.0, 0.0)).is_none());
    }
}
