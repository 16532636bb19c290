//! Z-buffer point splatting, silhouette and inpainting masks, and colour
//! transfer from an image back onto the cloud.

use crate::error::{Error, Result};
use crate::geometry::{CameraPose, ColoredPointCloud, Rgb};
use crate::raster::{BinaryMask, DepthImage, RgbImage};
use crate::spatial::PointIndex;
use crate::visibility::VisibilityResult;

/// Pixel `(col, row)` containing a projected point, possibly off-image.
fn pixel_of(u: f64, v: f64) -> (i64, i64) {
    (u.floor() as i64, v.floor() as i64)
}

/// Render the cloud as `(2k − 1)²` squares keeping the nearest depth per
/// pixel. Points at or behind the camera plane are skipped.
pub fn project_depth(cloud: &ColoredPointCloud, camera: &CameraPose, splat_px: usize) -> Result<DepthImage> {
    camera.validate()?;
    if splat_px == 0 {
        return Err(Error::invalid("splat size must be positive"));
    }
    let (w, h) = camera.resolution;
    let mut image = DepthImage::empty(w, h);
    let basis = camera.basis();
    let focal = camera.focal_px();
    let reach = splat_px as i64 - 1;
    for p in cloud.points() {
        let Some(proj) = camera.project_with(&basis, focal, p) else {
            continue;
        };
        if !(proj.u.is_finite() && proj.v.is_finite()) {
            continue;
        }
        let (cu, cv) = pixel_of(proj.u, proj.v);
        let c0 = (cu - reach).max(0);
        let c1 = (cu + reach).min(w as i64 - 1);
        let r0 = (cv - reach).max(0);
        let r1 = (cv + reach).min(h as i64 - 1);
        for row in r0..=r1 {
            for col in c0..=c1 {
                image.splat_min(row as usize * w + col as usize, proj.depth);
            }
        }
    }
    Ok(image)
}

/// Pixels covered by the cloud at splat size `splat_px`.
pub fn silhouette_mask(cloud: &ColoredPointCloud, camera: &CameraPose, splat_px: usize) -> Result<BinaryMask> {
    Ok(project_depth(cloud, camera, splat_px)?.occupancy())
}

/// Holes inside the silhouette: `full ∧ ¬occupancy(raw)`.
pub fn build_inpaint_mask(full: &BinaryMask, raw: &DepthImage) -> Result<BinaryMask> {
    full.and(&raw.occupancy().not())
}

/// Colour visible points from their pixel in `image`; every other point
/// takes the colour of its nearest coloured visible point. Geometry is
/// untouched.
pub fn colorize_from_image(
    cloud: &ColoredPointCloud,
    image: &RgbImage,
    camera: &CameraPose,
    visible: &VisibilityResult,
) -> Result<ColoredPointCloud> {
    if image.dims() != camera.resolution {
        return Err(Error::invalid(format!(
            "image is {}x{} but the camera renders {}x{}",
            image.width(),
            image.height(),
            camera.resolution.0,
            camera.resolution.1
        )));
    }
    let points = cloud.points();
    let (w, h) = camera.resolution;
    let basis = camera.basis();
    let focal = camera.focal_px();
    let mut colors: Vec<Option<Rgb>> = vec![None; points.len()];
    for &i in &visible.visible_indices {
        let Some(p) = points.get(i) else {
            return Err(Error::invalid(format!("visible index {i} out of range")));
        };
        if let Some(proj) = camera.project_with(&basis, focal, p) {
            let (col, row) = pixel_of(proj.u, proj.v);
            let col = col.clamp(0, w as i64 - 1) as usize;
            let row = row.clamp(0, h as i64 - 1) as usize;
            colors[i] = Some(image.get(col, row));
        }
    }
    let sources: Vec<usize> = (0..points.len()).filter(|&i| colors[i].is_some()).collect();
    if sources.is_empty() {
        return Err(Error::degenerate("no visible points to colour from"));
    }
    let source_points: Vec<_> = sources.iter().map(|&i| points[i]).collect();
    let index = PointIndex::build(&source_points);
    let filled = (0..points.len())
        .map(|i| {
            colors[i].unwrap_or_else(|| {
                let (j, _) = index.nearest(&points[i]).expect("non-empty index");
                colors[sources[j]].expect("source is coloured")
            })
        })
        .collect();
    cloud.recolored(filled)
}
