//! Analytic test shapes, area-uniformly sampled and coloured by position.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{ColoredPointCloud, Point3, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    /// Radius 0.5.
    Sphere,
    /// 1.0 × 0.7 × 0.45 surface.
    Box,
    /// Major radius 0.35, tube radius 0.15, axis +z.
    Torus,
    /// Open cylinder (r 0.3, h 0.8) with a bottom and a half-ring handle on +x.
    Mug,
    /// Seat, backrest and four legs, each a cuboid surface; 0.5 wide, 0.94 tall.
    Chair,
}

impl Shape {
    pub const ALL: [Shape; 5] = [Shape::Sphere, Shape::Box, Shape::Torus, Shape::Mug, Shape::Chair];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Sphere => "sphere",
            Shape::Box => "box",
            Shape::Torus => "torus",
            Shape::Mug => "mug",
            Shape::Chair => "chair",
        }
    }

    /// `n` surface points, coloured by [`position_color`].
    pub fn sample(self, n: usize, seed: u64) -> ColoredPointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Point3> = (0..n)
            .map(|_| match self {
                Shape::Sphere => sphere_point(&mut rng, 0.5),
                Shape::Box => box_point(&mut rng, Point3::new(0.5, 0.35, 0.225)),
                Shape::Torus => torus_point(&mut rng, 0.35, 0.15),
                Shape::Mug => mug_point(&mut rng),
                Shape::Chair => chair_point(&mut rng),
            })
            .collect();
        let colors = points.iter().map(position_color).collect();
        ColoredPointCloud::with_colors(points, colors).expect("matching lengths")
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Shape::ALL
            .into_iter()
            .find(|shape| shape.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown shape {s:?} (sphere, box, torus, mug, chair)")))
    }
}

/// Smooth RGB gradient over the unit box, `c = clamp(p + 0.5)`.
pub fn position_color(p: &Point3) -> Rgb {
    p.map(|v| (v + 0.5).clamp(0.0, 1.0))
}

fn sphere_point(rng: &mut ChaCha8Rng, r: f64) -> Point3 {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi = rng.gen_range(0.0..TAU);
    let s = (1.0 - z * z).max(0.0).sqrt();
    Point3::new(s * phi.cos(), s * phi.sin(), z) * r
}

fn box_point(rng: &mut ChaCha8Rng, half: Point3) -> Point3 {
    let areas = [half.y * half.z, half.x * half.z, half.x * half.y];
    let total: f64 = areas.iter().sum();
    let mut pick = rng.gen::<f64>() * total;
    let mut axis = 2;
    for (i, a) in areas.iter().enumerate() {
        if pick < *a {
            axis = i;
            break;
        }
        pick -= a;
    }
    let mut p = Point3::from_fn(|i, _| rng.gen_range(-half[i]..=half[i]));
    p[axis] = if rng.gen::<bool>() { half[axis] } else { -half[axis] };
    p
}

/// Point on a torus about +z as `(x, y, z)`, major angle restricted to `arc`.
fn tube_point(rng: &mut ChaCha8Rng, big: f64, small: f64, arc: (f64, f64)) -> (f64, f64, f64) {
    // tube angle density ∝ big + small·cos(t)
    let t = loop {
        let t = rng.gen_range(0.0..TAU);
        if rng.gen::<f64>() * (big + small) <= big + small * t.cos() {
            break t;
        }
    };
    let phi = rng.gen_range(arc.0..arc.1);
    let radial = big + small * t.cos();
    (radial * phi.cos(), radial * phi.sin(), small * t.sin())
}

fn torus_point(rng: &mut ChaCha8Rng, big: f64, small: f64) -> Point3 {
    let (x, y, z) = tube_point(rng, big, small, (0.0, TAU));
    Point3::new(x, y, z)
}

fn mug_point(rng: &mut ChaCha8Rng) -> Point3 {
    let (r, h) = (0.3, 0.8);
    let (hb, hs) = (0.18, 0.05);
    let side = TAU * r * h;
    let bottom = PI * r * r;
    let handle = PI * hb * TAU * hs;
    let pick = rng.gen::<f64>() * (side + bottom + handle);
    if pick < side {
        let phi = rng.gen_range(0.0..TAU);
        Point3::new(r * phi.cos(), r * phi.sin(), rng.gen_range(-h / 2.0..=h / 2.0))
    } else if pick < side + bottom {
        let rho = r * rng.gen::<f64>().sqrt();
        let phi = rng.gen_range(0.0..TAU);
        Point3::new(rho * phi.cos(), rho * phi.sin(), -h / 2.0)
    } else {
        // half ring in the xz-plane, outside the wall
        let (a, b, c) = tube_point(rng, hb, hs, (-PI / 2.0, PI / 2.0));
        Point3::new(r + a, c, b)
    }
}

/// Cuboids as `(center, half extents)`, z up, backrest on -y.
const CHAIR_PARTS: [([f64; 3], [f64; 3]); 6] = [
    ([0.0, 0.0, 0.0], [0.25, 0.25, 0.03]),
    ([0.0, -0.22, 0.25], [0.25, 0.03, 0.22]),
    ([0.21, 0.21, -0.25], [0.025, 0.025, 0.22]),
    ([-0.21, 0.21, -0.25], [0.025, 0.025, 0.22]),
    ([0.21, -0.21, -0.25], [0.025, 0.025, 0.22]),
    ([-0.21, -0.21, -0.25], [0.025, 0.025, 0.22]),
];

fn chair_point(rng: &mut ChaCha8Rng) -> Point3 {
    let area = |h: &[f64; 3]| h[0] * h[1] + h[1] * h[2] + h[0] * h[2];
    let total: f64 = CHAIR_PARTS.iter().map(|(_, h)| area(h)).sum();
    let mut pick = rng.gen::<f64>() * total;
    let mut part = CHAIR_PARTS[CHAIR_PARTS.len() - 1];
    for p in CHAIR_PARTS {
        if pick < area(&p.1) {
            part = p;
            break;
        }
        pick -= area(&p.1);
    }
    Point3::from(part.0) + box_point(rng, Point3::from(part.1))
}

/// Load a named shape or `ply:<path>`.
pub fn load_shape(spec: &str, n: usize, seed: u64) -> Result<ColoredPointCloud> {
    if let Some(path) = spec.strip_prefix("ply:") {
        let bytes = std::fs::read(path)?;
        let cloud = crate::io::read_ply(&bytes)?;
        return Ok(if cloud.has_colors() {
            cloud
        } else {
            let colors = cloud.points().iter().map(position_color).collect();
            cloud.recolored(colors)?
        });
    }
    Ok(spec.parse::<Shape>()?.sample(n, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_lie_on_their_surfaces() {
        let s = Shape::Sphere.sample(500, 1);
        assert!(s.points().iter().all(|p| (p.norm() - 0.5).abs() < 1e-12));
        let b = Shape::Box.sample(500, 1);
        for p in b.points() {
            let on_face = (p.x.abs() - 0.5).abs() < 1e-12 || (p.y.abs() - 0.35).abs() < 1e-12 || (p.z.abs() - 0.225).abs() < 1e-12;
            assert!(on_face && p.x.abs() <= 0.5 && p.y.abs() <= 0.35 && p.z.abs() <= 0.225);
        }
        let t = Shape::Torus.sample(500, 1);
        for p in t.points() {
            let ring = (p.x.hypot(p.y) - 0.35).hypot(p.z);
            assert!((ring - 0.15).abs() < 1e-12);
        }
        let m = Shape::Mug.sample(2000, 1);
        assert!(m.points().iter().any(|p| p.x > 0.4), "handle present");
        for c in m.colors().unwrap() {
            assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn sampling_is_area_uniform() {
        // box faces receive points in proportion to their areas
        let b = Shape::Box.sample(40_000, 3);
        let on_x = b.points().iter().filter(|p| (p.x.abs() - 0.5).abs() < 1e-12).count() as f64;
        let expected = 0.35 * 0.225 / (0.35 * 0.225 + 0.5 * 0.225 + 0.5 * 0.35);
        assert!((on_x / 40_000.0 - expected).abs() < 0.01);
        // torus: the outer half holds 1/2 + r/(πR) of the area
        let t = Shape::Torus.sample(40_000, 3);
        let outer = t.points().iter().filter(|p| p.x.hypot(p.y) > 0.35).count() as f64 / 40_000.0;
        let exact = 0.5 + 0.15 / (PI * 0.35);
        assert!((outer - exact).abs() < 0.01, "{outer} vs {exact}");
    }

    #[test]
    fn chair_has_legs_and_back() {
        let c = Shape::Chair.sample(5000, 2);
        let (lo, hi) = c.bounding_box().unwrap();
        assert!((lo.z + 0.47).abs() < 1e-9 && (hi.z - 0.47).abs() < 1e-9);
        assert!(c.points().iter().any(|p| p.z < -0.4 && p.x > 0.18 && p.y > 0.18));
        assert!(c.points().iter().any(|p| p.z > 0.4 && p.y < -0.19));
    }

    #[test]
    fn parse_and_determinism() {
        assert_eq!("torus".parse::<Shape>().unwrap(), Shape::Torus);
        assert!("cone".parse::<Shape>().is_err());
        assert_eq!(Shape::Mug.sample(100, 5), Shape::Mug.sample(100, 5));
        assert_ne!(Shape::Mug.sample(100, 5), Shape::Mug.sample(100, 6));
    }
}
