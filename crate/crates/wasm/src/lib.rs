//! Browser bindings for the demo page: visibility, depth prompting and the
//! scale sweep on the built-in shapes.

use pcfill::backends::{BackendRequestContext, ColormapImager, DepthInpainter, DepthToImage, DiffusionInpainter, GroundTruthShapeMock};
use pcfill::depth::{build_inpaint_mask, project_depth, silhouette_mask};
use pcfill::error::{Error, Result};
use pcfill::fusion::{dynamic_scale_adaptation, normalize_unit};
use pcfill::geometry::{CameraPose, ColoredPointCloud, CompletionConfig, Point3};
use pcfill::raster::to_u8;
use pcfill::shapes::Shape;
use pcfill::visibility::{bounding_sphere, hidden_point_removal, CAMERA_DISTANCE_FACTOR};
use wasm_bindgen::prelude::*;

const MAX_POINTS: usize = 50_000;

fn unit_shape(shape: &str, points: usize, seed: u64) -> Result<ColoredPointCloud> {
    if !(16..=MAX_POINTS).contains(&points) {
        return Err(Error::InvalidInput(format!("point count must lie in 16..={MAX_POINTS}")));
    }
    Ok(normalize_unit(&shape.parse::<Shape>()?.sample(points, seed))?.0)
}

/// Camera on the sphere around the cloud, angles in degrees, +z up.
fn orbit_camera(cloud: &ColoredPointCloud, azimuth: f64, elevation: f64, resolution: usize) -> Result<CameraPose> {
    let (center, radius) = bounding_sphere(cloud)?;
    let (az, el) = (azimuth.to_radians(), elevation.clamp(-85.0, 85.0).to_radians());
    let dir = Point3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
    CameraPose::new(
        center + dir * CAMERA_DISTANCE_FACTOR * radius,
        center,
        Point3::z(),
        60.0,
        (resolution, resolution),
    )
}

pub fn visibility_flags(shape: &str, points: usize, seed: u64, azimuth: f64, elevation: f64, gamma: f64) -> Result<Vec<f32>> {
    let cloud = unit_shape(shape, points, seed)?;
    let cam = orbit_camera(&cloud, azimuth, elevation, 64)?;
    let vis = hidden_point_removal(&cloud, &cam.position, gamma)?;
    let mut flags = vec![0.0f32; cloud.len()];
    for i in vis.visible_indices {
        flags[i] = 1.0;
    }
    Ok(cloud
        .points()
        .iter()
        .zip(flags)
        .flat_map(|(p, f)| [p.x as f32, p.y as f32, p.z as f32, f])
        .collect())
}

pub fn depth_panels(shape: &str, points: usize, seed: u64, azimuth: f64, elevation: f64, resolution: usize) -> Result<Vec<u8>> {
    if !(16..=256).contains(&resolution) {
        return Err(Error::InvalidInput("resolution must lie in 16..=256".into()));
    }
    let config = CompletionConfig::default();
    let cloud = unit_shape(shape, points, seed)?;
    let cam = orbit_camera(&cloud, azimuth, elevation, resolution)?;
    let vis = hidden_point_removal(&cloud, &cam.position, config.hpr_radius_factor)?;
    let visible = cloud.select(&vis.visible_indices);
    let raw = project_depth(&visible, &cam, config.raw_splat_px)?;
    let full = silhouette_mask(&visible, &cam, config.full_splat_px)?;
    let mask = build_inpaint_mask(&full, &raw)?;
    let ctx = BackendRequestContext::new("", seed);
    let filled = DiffusionInpainter::default().inpaint_depth(&raw, &mask, &ctx)?;
    let image = ColormapImager.depth_to_image(&filled, &ctx)?;

    let (near, far) = raw.valid_range().unwrap_or((0.0, 1.0));
    let span = (far - near).max(1e-12);
    let n = resolution;
    let mut rgba = vec![0u8; 3 * n * n * 4];
    let mut put = |panel: usize, col: usize, row: usize, c: [u8; 3]| {
        let at = (row * 3 * n + panel * n + col) * 4;
        rgba[at..at + 4].copy_from_slice(&[c[0], c[1], c[2], 255]);
    };
    for row in 0..n {
        for col in 0..n {
            let grey = raw.get(col, row).map_or(0, |d| to_u8(1.0 - 0.8 * (d - near) / span));
            put(0, col, row, [grey; 3]);
            let m = if mask.get(col, row) {
                [230, 40, 40]
            } else if full.get(col, row) {
                [90, 90, 90]
            } else {
                [0, 0, 0]
            };
            put(1, col, row, m);
            let c = image.get(col, row);
            put(2, col, row, [to_u8(c.x), to_u8(c.y), to_u8(c.z)]);
        }
    }
    Ok(rgba)
}

pub fn sweep_curve(shape: &str, points: usize, seed: u64, true_scale: f64, beta: f64) -> Result<Vec<f64>> {
    let config = CompletionConfig {
        scale_min: 0.6,
        scale_max: 1.4,
        scale_step: 0.05,
        beta,
        ..CompletionConfig::default()
    };
    let gt = unit_shape(shape, points, seed)?;
    let mut mock = GroundTruthShapeMock::new(gt.clone(), vec![true_scale]);
    mock.max_rotation_deg = 15.0;
    mock.max_translation = 0.05;
    mock.noise_sigma = 0.002;
    mock.sample_count = points;
    let sweep = dynamic_scale_adaptation(&gt, &mock.generate(seed)?, &config)?;
    Ok(sweep
        .grid
        .iter()
        .flat_map(|g| [g.scale, g.objective.unwrap_or(f64::NAN)])
        .collect())
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// `[x, y, z, visible]` per point of the normalized shape.
#[wasm_bindgen(js_name = hprView)]
pub fn hpr_view(shape: &str, points: usize, seed: u32, azimuth: f64, elevation: f64, gamma: f64) -> Result<Vec<f32>, JsError> {
    visibility_flags(shape, points, seed.into(), azimuth, elevation, gamma).map_err(js)
}

/// RGBA strip of three `resolution²` panels: raw depth, inpaint mask, image
/// of the inpainted depth.
#[wasm_bindgen(js_name = depthPrompt)]
pub fn depth_prompt(shape: &str, points: usize, seed: u32, azimuth: f64, elevation: f64, resolution: usize) -> Result<Vec<u8>, JsError> {
    depth_panels(shape, points, seed.into(), azimuth, elevation, resolution).map_err(js)
}

/// `[scale, objective]` pairs; failed scales carry NaN.
#[wasm_bindgen(js_name = scaleSweep)]
pub fn scale_sweep(shape: &str, points: usize, seed: u32, true_scale: f64, beta: f64) -> Result<Vec<f64>, JsError> {
    sweep_curve(shape, points, seed.into(), true_scale, beta).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn visibility_layout() {
        let out = visibility_flags("mug", 500, 1, 30.0, 20.0, 100.0).unwrap();
        assert_eq!(out.len(), 2000);
        let seen = out.chunks(4).filter(|c| c[3] == 1.0).count();
        assert!(seen > 50 && seen < 500, "{seen}");
    }

    #[test]
    fn panels_have_holes_inside_the_silhouette() {
        let n = 48;
        let rgba = depth_panels("box", 3000, 2, 20.0, 30.0, n).unwrap();
        assert_eq!(rgba.len(), 3 * n * n * 4);
        let red = rgba.chunks(4).filter(|c| c[..3] == [230, 40, 40]).count();
        assert!(red > 0);
        assert!(rgba.chunks(4).all(|c| c[3] == 255));
    }

    #[test]
    fn sweep_finds_the_true_scale() {
        let curve = sweep_curve("chair", 1500, 3, 1.1, 0.0).unwrap();
        assert_eq!(curve.len(), 2 * 17);
        let best = curve
            .chunks(2)
            .min_by(|a, b| a[1].total_cmp(&b[1]))
            .map(|c| c[0])
            .unwrap();
        assert!((best - 1.1).abs() < 1e-9, "{curve:?}");
    }

    #[test]
    fn bad_arguments() {
        assert!(visibility_flags("cone", 500, 1, 0.0, 0.0, 100.0).is_err());
        assert!(depth_panels("box", 500, 1, 0.0, 0.0, 4).is_err());
        assert!(sweep_curve("box", 5, 1, 1.0, 0.0).is_err());
    }
}
