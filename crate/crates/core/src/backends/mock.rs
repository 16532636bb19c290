use nalgebra::{Rotation3, Unit, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    BackendRequestContext, DepthInpainter, DepthToImage, GeneratedShape, ImageTo3d, DEFAULT_SAMPLE_COUNT,
    MIN_SAMPLE_COUNT,
};
use crate::error::{Error, Result};
use crate::fusion::normalize_unit;
use crate::geometry::{CameraPose, ColoredPointCloud, Point3, Rgb, SimilarityTransform};
use crate::raster::{BinaryMask, DepthImage, RgbImage};
use crate::visibility::CAMERA_DISTANCE_FACTOR;

/// Fills masked pixels by repeated 8-neighbour averaging (Gauss-Seidel,
/// optionally over-relaxed) until no pixel moves by more than `tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionInpainter {
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// 1.0 is plain neighbour averaging.
    pub relaxation: f64,
}

impl Default for DiffusionInpainter {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_sweeps: 20_000,
            relaxation: 1.9,
        }
    }
}

impl DepthInpainter for DiffusionInpainter {
    fn inpaint_depth(&self, raw: &DepthImage, mask: &BinaryMask, _ctx: &BackendRequestContext) -> Result<DepthImage> {
        if raw.dims() != mask.dims() {
            return Err(Error::invalid("inpaint mask and depth differ in size"));
        }
        if mask.and(&raw.occupancy())?.count() > 0 {
            return Err(Error::invalid("inpaint mask overlaps known depth"));
        }
        if mask.count() == 0 {
            return Ok(raw.clone());
        }
        let valid = raw.valid();
        let known = raw.valid_count();
        if known == 0 {
            return Err(Error::invalid("depth has no valid pixel to diffuse from"));
        }
        let init = raw.depth().iter().zip(valid).filter(|(_, v)| **v).map(|(d, _)| d).sum::<f64>() / known as f64;
        let (w, h) = raw.dims();
        let bits = mask.bits();
        let mut values = raw.depth().to_vec();
        let holes: Vec<usize> = (0..w * h).filter(|&i| bits[i]).collect();
        let mut neighbours: Vec<Vec<usize>> = Vec::with_capacity(holes.len());
        for &i in &holes {
            values[i] = init;
            let (col, row) = ((i % w) as i64, (i / w) as i64);
            let mut nb = Vec::with_capacity(8);
            for dr in -1..=1i64 {
                for dc in -1..=1i64 {
                    let (c, r) = (col + dc, row + dr);
                    if (dr, dc) == (0, 0) || c < 0 || r < 0 || c >= w as i64 || r >= h as i64 {
                        continue;
                    }
                    let j = r as usize * w + c as usize;
                    if valid[j] || bits[j] {
                        nb.push(j);
                    }
                }
            }
            neighbours.push(nb);
        }
        let omega = self.relaxation;
        for _ in 0..self.max_sweeps {
            let mut max_change = 0.0f64;
            for (k, &i) in holes.iter().enumerate() {
                let nb = &neighbours[k];
                if nb.is_empty() {
                    continue;
                }
                let mean = nb.iter().map(|&j| values[j]).sum::<f64>() / nb.len() as f64;
                let step = omega * (mean - values[i]);
                values[i] += step;
                max_change = max_change.max(step.abs());
            }
            if max_change < self.tolerance {
                break;
            }
        }
        let out_valid: Vec<bool> = valid.iter().zip(bits).map(|(a, b)| *a || *b).collect();
        DepthImage::from_parts(w, h, values, out_valid)
    }
}

/// Red → yellow → cyan → blue over `t ∈ [0, 1]` (near is red). Injective and
/// never black.
pub fn colormap(t: f64) -> Rgb {
    let t = t.clamp(0.0, 1.0) * 3.0;
    if t <= 1.0 {
        Rgb::new(1.0, t, 0.0)
    } else if t <= 2.0 {
        let a = t - 1.0;
        Rgb::new(1.0 - a, 1.0, a)
    } else {
        Rgb::new(0.0, 3.0 - t, 1.0)
    }
}

/// Closest `t` whose colour matches `c`; `None` for (near-)black pixels.
pub fn colormap_inverse(c: &Rgb) -> Option<f64> {
    if c.max() < 0.5 {
        return None;
    }
    let candidates = [
        (c.y.clamp(0.0, 1.0)) / 3.0,
        (1.0 + c.z.clamp(0.0, 1.0)) / 3.0,
        (3.0 - c.y.clamp(0.0, 1.0)) / 3.0,
    ];
    candidates
        .into_iter()
        .min_by(|a, b| (colormap(*a) - c).norm_squared().total_cmp(&(colormap(*b) - c).norm_squared()))
}

fn quantize(c: Rgb) -> Rgb {
    c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}

/// Renders depth through [`colormap`], normalized to the valid depth range;
/// invalid pixels are black. Channels are quantized to 8 bits.
#[derive(Debug, Clone, Copy, Default)]
pub struct ColormapImager;

impl DepthToImage for ColormapImager {
    fn depth_to_image(&self, depth: &DepthImage, _ctx: &BackendRequestContext) -> Result<RgbImage> {
        let (near, far) = depth
            .valid_range()
            .ok_or_else(|| Error::invalid("depth has no valid pixel"))?;
        let span = far - near;
        let pixels = depth
            .depth()
            .iter()
            .zip(depth.valid())
            .map(|(d, ok)| {
                if !ok {
                    Rgb::zeros()
                } else {
                    let t = if span > 0.0 { (d - near) / span } else { 0.0 };
                    quantize(colormap(t))
                }
            })
            .collect();
        RgbImage::from_pixels(depth.width(), depth.height(), pixels)
    }
}

/// Stand-in generator: decodes the colormap back to depth, lifts the
/// foreground pixels through the scan camera and mirrors them behind the
/// look-at plane to close the shape. The result is normalized to the unit
/// box. Depth is decoded to the band between `d - r` and `d`, where `d` is
/// the camera distance and `r` the implied object radius.
#[derive(Debug, Clone, PartialEq)]
pub struct ColormapLift {
    pub sample_count: usize,
}

impl Default for ColormapLift {
    fn default() -> Self {
        Self {
            sample_count: DEFAULT_SAMPLE_COUNT,
        }
    }
}

impl ImageTo3d for ColormapLift {
    fn image_to_3d(&self, image: &RgbImage, ctx: &BackendRequestContext) -> Result<GeneratedShape> {
        if image.is_empty() {
            return Err(Error::invalid("image is empty"));
        }
        if self.sample_count < MIN_SAMPLE_COUNT {
            return Err(Error::invalid(format!("sample_count must be at least {MIN_SAMPLE_COUNT}")));
        }
        let (w, h) = image.dims();
        let camera = match &ctx.view {
            Some(c) if c.resolution == (w, h) => c.clone(),
            Some(_) => return Err(Error::invalid("image size does not match the view camera")),
            None => CameraPose::new(Point3::new(0.0, 0.0, CAMERA_DISTANCE_FACTOR), Point3::zeros(), Vector3::y(), 60.0, (w, h))?,
        };
        let foreground: Vec<(usize, f64)> = image
            .pixels()
            .iter()
            .enumerate()
            .filter_map(|(i, c)| colormap_inverse(c).map(|t| (i, t)))
            .collect();
        if foreground.is_empty() {
            return Err(Error::invalid("image has no foreground pixel"));
        }
        let (right, up, forward) = camera.basis();
        let focal = camera.focal_px();
        let dist = (camera.look_at - camera.position).norm();
        let radius = dist / CAMERA_DISTANCE_FACTOR;
        let (near, far) = (dist - radius, dist);
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.rng_seed);
        let front = self.sample_count.div_ceil(2);
        let mut points = Vec::with_capacity(self.sample_count);
        let mut colors = Vec::with_capacity(self.sample_count);
        let mut back = Vec::with_capacity(self.sample_count - front);
        for k in 0..front {
            let (i, t) = foreground[rng.gen_range(0..foreground.len())];
            let u = (i % w) as f64 + rng.gen::<f64>();
            let v = (i / w) as f64 + rng.gen::<f64>();
            let z = near + t * (far - near);
            let lateral = right * ((u - w as f64 * 0.5) * z / focal) + up * ((h as f64 * 0.5 - v) * z / focal);
            points.push(camera.position + lateral + forward * z);
            colors.push(image.pixels()[i]);
            if k < self.sample_count - front {
                back.push((camera.position + lateral + forward * (2.0 * dist - z), image.pixels()[i]));
            }
        }
        for (p, c) in back {
            points.push(p);
            colors.push(c);
        }
        let (cloud, _) = normalize_unit(&ColoredPointCloud::with_colors(points, colors)?)?;
        GeneratedShape::new(cloud, "mock:colormap-lift")
    }
}

/// Test oracle: ignores the image and returns a known complete cloud under a
/// seeded similarity, `x ↦ (R x + t) / s`, plus Gaussian noise. Aligning the
/// result back needs scale `s`, which is what scale-recovery harnesses check.
/// It reads data a real system cannot have, so it is never a default.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthShapeMock {
    pub ground_truth: ColoredPointCloud,
    /// `s` is drawn uniformly from these values.
    pub scales: Vec<f64>,
    pub max_rotation_deg: f64,
    pub max_translation: f64,
    pub noise_sigma: f64,
    pub sample_count: usize,
}

impl GroundTruthShapeMock {
    pub fn new(ground_truth: ColoredPointCloud, scales: Vec<f64>) -> Self {
        Self {
            ground_truth,
            scales,
            max_rotation_deg: 0.0,
            max_translation: 0.0,
            noise_sigma: 0.0,
            sample_count: DEFAULT_SAMPLE_COUNT,
        }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667_f3bc_c908)
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (f64, SimilarityTransform) {
        let s = self.scales[rng.gen_range(0..self.scales.len())];
        let axis = loop {
            let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                break Unit::new_normalize(v);
            }
        };
        let angle = rng.gen::<f64>() * self.max_rotation_deg.to_radians();
        let rotation = Rotation3::from_axis_angle(&axis, angle).into_inner();
        let dir = loop {
            let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                break v / n;
            }
        };
        let t = dir * (rng.gen::<f64>() * self.max_translation);
        (s, SimilarityTransform::rigid(rotation, t))
    }

    /// The true scale `s` and the full transform applied for this seed.
    pub fn perturbation(&self, seed: u64) -> (f64, SimilarityTransform) {
        let (s, rigid) = self.draw(&mut Self::rng(seed));
        (s, SimilarityTransform::uniform_scale(1.0 / s).compose(&rigid))
    }

    /// The generated cloud for a seed.
    pub fn generate(&self, seed: u64) -> Result<ColoredPointCloud> {
        if self.scales.is_empty() || self.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("ground-truth mock needs positive scales"));
        }
        if !self.ground_truth.has_colors() {
            return Err(Error::invalid("ground-truth cloud must be coloured"));
        }
        let n = self.ground_truth.len();
        if n == 0 {
            return Err(Error::invalid("ground-truth cloud is empty"));
        }
        let mut rng = Self::rng(seed);
        let (s, rigid) = self.draw(&mut rng);
        let transform = SimilarityTransform::uniform_scale(1.0 / s).compose(&rigid);
        let picked: Vec<usize> = if self.sample_count <= n {
            let mut idx = sample(&mut rng, n, self.sample_count).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..self.sample_count).map(|_| rng.gen_range(0..n)).collect()
        };
        let subset = self.ground_truth.select(&picked).transformed(&transform);
        if self.noise_sigma > 0.0 {
            let normal = Normal::new(0.0, self.noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
            let (pts, colors) = subset.into_parts();
            let noisy = pts
                .into_iter()
                .map(|p| p + Vector3::from_fn(|_, _| normal.sample(&mut rng)))
                .collect();
            ColoredPointCloud::from_parts(noisy, colors)
        } else {
            Ok(subset)
        }
    }
}

impl ImageTo3d for GroundTruthShapeMock {
    fn image_to_3d(&self, _image: &RgbImage, ctx: &BackendRequestContext) -> Result<GeneratedShape> {
        GeneratedShape::new(self.generate(ctx.rng_seed)?, "mock:ground-truth")
    }
}
