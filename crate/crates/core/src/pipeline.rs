//! End-to-end completion: viewpoint selection, depth prompting, generation,
//! scale-adaptive alignment and fusion. Also the synthetic-partial and
//! evaluation helpers used by the benchmark.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backends::{BackendRequestContext, Backends};
use crate::depth::{build_inpaint_mask, colorize_from_image, project_depth, silhouette_mask};
use crate::error::{Error, Result, Stage};
use crate::fusion::{
    dynamic_scale_adaptation, fuse, grid_csv, normalize_unit, remove_overlap, AlignmentOutcome, FusionResult,
    ScaleSweep,
};
use crate::geometry::{CameraPose, ColoredPointCloud, CompletionConfig, SimilarityTransform};
use crate::io::{read_depth_pgm, read_ply, read_ppm, write_depth_pgm, write_mask_pgm, write_ply, write_ppm};
use crate::metrics::{fps_sample, MetricReport};
use crate::raster::{DepthImage, RgbImage};
use crate::visibility::{hidden_point_removal, place_cameras_with, select_scan_viewpoint, visible_counts_csv};

/// Artifact file names inside a dump directory.
pub mod artifact {
    pub const VISIBLE_COUNTS: &str = "visible_counts.csv";
    pub const RAW_DEPTH: &str = "raw_depth.pgm";
    pub const FULL_MASK: &str = "full_mask.pgm";
    pub const INPAINT_MASK: &str = "inpaint_mask.pgm";
    pub const INPAINTED_DEPTH: &str = "inpainted_depth.pgm";
    pub const IMAGE: &str = "image.ppm";
    pub const PARTIAL_COLORIZED: &str = "partial_colorized.ply";
    pub const GENERATED: &str = "generated.ply";
    pub const SCALE_GRID: &str = "scale_grid.csv";
    pub const ALIGNMENT: &str = "alignment.json";
    /// Aligned generated cloud, in the partial's normalized frame.
    pub const ALIGNED: &str = "aligned_generated.ply";
    /// Missing part, in the input frame.
    pub const MISS: &str = "miss.ply";
    pub const RUN_RECORD: &str = "run_record.json";
}

/// Where a resumed run picks up. Each point skips every stage up to and
/// including the one that produced the named artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ResumePoint {
    /// Load the inpainted depth.
    Inpainted,
    /// Load the generated image.
    Image,
    /// Load the generated shape.
    Generated,
    /// Load the aligned shape and the alignment.
    Aligned,
    /// Load the missing part and the alignment.
    Miss,
}

impl FromStr for ResumePoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inpainted" => Ok(Self::Inpainted),
            "image" => Ok(Self::Image),
            "generated" => Ok(Self::Generated),
            "aligned" => Ok(Self::Aligned),
            "miss" => Ok(Self::Miss),
            _ => Err(Error::invalid(format!(
                "unknown resume point {s:?} (inpainted, image, generated, aligned, miss)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Write every intermediate artifact here.
    pub dump_dir: Option<PathBuf>,
    /// Reload artifacts from a previous dump instead of recomputing.
    pub resume: Option<(ResumePoint, PathBuf)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRunRecord {
    pub config: CompletionConfig,
    pub selected_camera_index: usize,
    pub visible_count: usize,
    /// `(scale, objective)` for every grid value; `None` where ICP failed.
    pub grid_objectives: Vec<(f64, Option<f64>)>,
    pub outcome: AlignmentOutcome,
    pub partial_count: usize,
    pub miss_count: usize,
    pub generator: String,
    pub metrics: Option<MetricReport>,
    /// Seconds per stage.
    pub wall_times: BTreeMap<String, f64>,
}

impl PipelineRunRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    /// JSON with the wall times cleared, for comparing runs.
    pub fn to_json_without_times(&self) -> String {
        let mut copy = self.clone();
        copy.wall_times.clear();
        copy.to_json()
    }
}

struct Timer {
    times: BTreeMap<String, f64>,
}

impl Timer {
    fn run<T>(&mut self, stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f().map_err(|e| e.at_stage(stage));
        *self.times.entry(stage.name().to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }
}

struct Dumper<'a>(Option<&'a Path>);

impl Dumper<'_> {
    fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        if let Some(dir) = self.0 {
            fs::write(dir.join(name), bytes).map_err(|e| Error::from(e).at_stage(Stage::Dump))?;
        }
        Ok(())
    }
}

fn load(dir: &Path, name: &str) -> Result<Vec<u8>> {
    fs::read(dir.join(name)).map_err(|e| Error::from(e).at_stage(Stage::Resume))
}

// Stage outputs go through their file codecs so that a fresh run and a run
// resumed from dumped files see the same values.
fn canonical_depth(d: &DepthImage) -> Result<DepthImage> {
    read_depth_pgm(&write_depth_pgm(d))
}

fn canonical_image(i: &RgbImage) -> Result<RgbImage> {
    read_ppm(&write_ppm(i))
}

fn canonical_cloud(c: &ColoredPointCloud) -> Result<ColoredPointCloud> {
    read_ply(&write_ply(c))
}

#[derive(Serialize, Deserialize)]
struct AlignmentFile {
    sweep: ScaleSweep,
    generator: String,
}

/// Complete `partial` with the given backends. The output holds the input
/// points first, with bit-identical coordinates (and the input colours when
/// it has them), followed by the generated missing part.
pub fn complete(
    partial: &ColoredPointCloud,
    prompt: &str,
    config: &CompletionConfig,
    backends: &Backends,
) -> Result<(FusionResult, PipelineRunRecord)> {
    complete_with(partial, prompt, config, backends, &RunOptions::default())
}

pub fn complete_with(
    partial: &ColoredPointCloud,
    prompt: &str,
    config: &CompletionConfig,
    backends: &Backends,
    options: &RunOptions,
) -> Result<(FusionResult, PipelineRunRecord)> {
    config.validate()?;
    if partial.len() < 4 {
        return Err(Error::invalid("partial cloud needs at least 4 points"));
    }
    if let Some(dir) = &options.dump_dir {
        fs::create_dir_all(dir).map_err(|e| Error::from(e).at_stage(Stage::Dump))?;
    }
    let dump = Dumper(options.dump_dir.as_deref());
    let resume = options.resume.as_ref().map(|(p, d)| (*p, d.as_path()));
    let from = |point: ResumePoint| resume.filter(|(p, _)| *p >= point).map(|(_, d)| d);
    let mut timer = Timer {
        times: BTreeMap::new(),
    };

    let cameras = timer.run(Stage::PlaceCameras, || place_cameras_with(partial, config))?;
    let selection = timer.run(Stage::SelectViewpoint, || {
        select_scan_viewpoint(partial, &cameras, config.hpr_radius_factor)
    })?;
    dump.write(artifact::VISIBLE_COUNTS, visible_counts_csv(&selection.visible_counts))?;
    let camera = selection.camera.clone();

    let (raw, mask) = timer.run(Stage::ProjectDepth, || {
        let raw = project_depth(partial, &camera, config.raw_splat_px)?;
        let full = silhouette_mask(partial, &camera, config.full_splat_px)?;
        let mask = build_inpaint_mask(&full, &raw)?;
        dump.write(artifact::FULL_MASK, write_mask_pgm(&full))?;
        Ok((raw, mask))
    })?;
    dump.write(artifact::RAW_DEPTH, write_depth_pgm(&raw))?;
    dump.write(artifact::INPAINT_MASK, write_mask_pgm(&mask))?;

    let ctx = BackendRequestContext {
        view: Some(camera.clone()),
        ..BackendRequestContext::new(prompt, config.rng_seed)
    };

    let late = from(ResumePoint::Aligned);
    let (sweep, generator, miss, colorized) = if let Some(dir) = late {
        let (file, colorized) = timer.run(Stage::Resume, || {
            let bytes = load(dir, artifact::ALIGNMENT)?;
            let file: AlignmentFile =
                serde_json::from_slice(&bytes).map_err(|e| Error::invalid(format!("alignment file: {e}")))?;
            Ok((file, read_ply(&load(dir, artifact::PARTIAL_COLORIZED)?)?))
        })?;
        let miss = if from(ResumePoint::Miss).is_some() {
            timer.run(Stage::Resume, || read_ply(&load(dir, artifact::MISS)?))?
        } else {
            let aligned = timer.run(Stage::Resume, || read_ply(&load(dir, artifact::ALIGNED)?))?;
            let (_, to_unit) = timer.run(Stage::Normalize, || normalize_unit(partial))?;
            miss_from_aligned(&aligned, partial, &to_unit, config, &mut timer)?
        };
        (file.sweep, file.generator, miss, colorized)
    } else {
        let image = match from(ResumePoint::Image) {
            Some(dir) => timer.run(Stage::Resume, || read_ppm(&load(dir, artifact::IMAGE)?))?,
            None => {
                let inpainted = match from(ResumePoint::Inpainted) {
                    Some(dir) => timer.run(Stage::Resume, || read_depth_pgm(&load(dir, artifact::INPAINTED_DEPTH)?))?,
                    None => timer.run(Stage::InpaintDepth, || {
                        canonical_depth(&backends.inpainter.inpaint_depth(&raw, &mask, &ctx)?)
                    })?,
                };
                dump.write(artifact::INPAINTED_DEPTH, write_depth_pgm(&inpainted))?;
                timer.run(Stage::DepthToImage, || {
                    canonical_image(&backends.imager.depth_to_image(&inpainted, &ctx)?)
                })?
            }
        };
        dump.write(artifact::IMAGE, write_ppm(&image))?;
        let colorized = timer.run(Stage::Colorize, || {
            colorize_from_image(partial, &image, &camera, &selection.visibility)
        })?;
        dump.write(artifact::PARTIAL_COLORIZED, write_ply(&colorized))?;

        let (generated, generator) = match from(ResumePoint::Generated) {
            Some(dir) => (
                timer.run(Stage::Resume, || read_ply(&load(dir, artifact::GENERATED)?))?,
                "resumed".to_string(),
            ),
            None => timer.run(Stage::ImageTo3d, || {
                let shape = backends.generator.image_to_3d(&image, &ctx)?;
                Ok((canonical_cloud(&shape.cloud)?, shape.provenance))
            })?,
        };
        dump.write(artifact::GENERATED, write_ply(&generated))?;

        let ((partial_unit, to_unit), (gen_unit, _)) = timer.run(Stage::Normalize, || {
            Ok((normalize_unit(&colorized)?, normalize_unit(&generated)?))
        })?;
        let sweep = timer.run(Stage::ScaleAdaptation, || dynamic_scale_adaptation(&partial_unit, &gen_unit, config))?;
        dump.write(artifact::SCALE_GRID, grid_csv(&sweep.grid))?;
        let file = AlignmentFile { sweep, generator };
        dump.write(artifact::ALIGNMENT, serde_json::to_string_pretty(&file).expect("alignment serializes"))?;
        let aligned = timer.run(Stage::ScaleAdaptation, || {
            canonical_cloud(&gen_unit.transformed(&file.sweep.outcome.transform))
        })?;
        dump.write(artifact::ALIGNED, write_ply(&aligned))?;
        let miss = miss_from_aligned(&aligned, partial, &to_unit, config, &mut timer)?;
        (file.sweep, file.generator, miss, colorized)
    };
    dump.write(artifact::MISS, write_ply(&miss))?;

    let keep = if partial.has_colors() {
        partial.clone()
    } else {
        let colors = colorized.colors().map(<[_]>::to_vec).unwrap_or_default();
        partial.recolored(colors).map_err(|e| e.at_stage(Stage::Colorize))?
    };
    let result = timer.run(Stage::Fuse, || Ok(fuse(&keep, &miss, &sweep.outcome)))?;

    let record = PipelineRunRecord {
        config: config.clone(),
        selected_camera_index: selection.index,
        visible_count: selection.visibility.count(),
        grid_objectives: sweep.grid.iter().map(|g| (g.scale, g.objective)).collect(),
        outcome: sweep.outcome.clone(),
        partial_count: result.partial_count,
        miss_count: result.miss_count,
        generator,
        metrics: None,
        wall_times: timer.times,
    };
    dump.write(artifact::RUN_RECORD, record.to_json_without_times())?;
    Ok((result, record))
}

fn miss_from_aligned(
    aligned: &ColoredPointCloud,
    partial: &ColoredPointCloud,
    to_unit: &SimilarityTransform,
    config: &CompletionConfig,
    timer: &mut Timer,
) -> Result<ColoredPointCloud> {
    let partial_unit = partial.transformed(to_unit);
    let miss_unit = timer.run(Stage::RemoveOverlap, || remove_overlap(aligned, &partial_unit, config))?;
    timer.run(Stage::Fuse, || canonical_cloud(&miss_unit.transformed(&to_unit.inverse())))
}

/// The points of `complete` visible from `camera` (hidden point removal with
/// `config.hpr_radius_factor`).
pub fn synth_partial(complete: &ColoredPointCloud, camera: &CameraPose, config: &CompletionConfig) -> Result<ColoredPointCloud> {
    camera.validate()?;
    let visible = hidden_point_removal(complete, &camera.position, config.hpr_radius_factor)?;
    Ok(complete.select(&visible.visible_indices))
}

/// FPS both clouds to `n_points`, then Chamfer-ℓ1 and EMD (exact up to 512
/// points), reported ×100.
pub fn evaluate(completed: &ColoredPointCloud, ground_truth: &ColoredPointCloud, n_points: usize) -> Result<MetricReport> {
    if n_points == 0 {
        return Err(Error::invalid("n_points must be positive"));
    }
    if n_points > completed.len() || n_points > ground_truth.len() {
        return Err(Error::invalid(format!(
            "n_points {n_points} exceeds cloud sizes ({} completed, {} ground truth)",
            completed.len(),
            ground_truth.len()
        )));
    }
    MetricReport::compute(&fps_sample(completed, n_points)?, &fps_sample(ground_truth, n_points)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::GroundTruthShapeMock;
    use crate::error::BackendFailure;
    use crate::geometry::Point3;
    use crate::metrics::{chamfer_l1, EmdSolver};
    use crate::shapes::Shape;
    use crate::visibility::place_cameras;
    use nalgebra::Vector3;

    fn small_config() -> CompletionConfig {
        CompletionConfig {
            depth_resolution: (128, 128),
            camera_count: 20,
            ..CompletionConfig::default()
        }
    }

    fn fixture(seed: u64) -> (ColoredPointCloud, ColoredPointCloud) {
        let gt = Shape::Torus.sample(3000, seed);
        let cams = place_cameras(&gt, 42).unwrap();
        let partial = synth_partial(&gt, &cams[(seed as usize * 7) % 42], &CompletionConfig::default()).unwrap();
        (gt, partial)
    }

    fn mock() -> Backends {
        Backends::from_url("mock:", 2048).unwrap()
    }

    #[test]
    fn keeps_input_points_and_records_grid() {
        let (_, partial) = fixture(1);
        let config = small_config();
        let (result, record) = complete(&partial, "a ring", &config, &mock()).unwrap();
        let out = result.completed.points();
        assert_eq!(result.partial_count, partial.len());
        for (a, b) in out.iter().zip(partial.points()) {
            for k in 0..3 {
                assert_eq!(a[k].to_bits(), b[k].to_bits());
            }
        }
        assert_eq!(&result.completed.colors().unwrap()[..partial.len()], partial.colors().unwrap());
        assert_eq!(record.grid_objectives.len(), config.scale_grid().len());
        let min = record
            .grid_objectives
            .iter()
            .filter_map(|(_, o)| *o)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min, record.outcome.objective);
        assert!(record.miss_count > 0);
        assert_eq!(record.generator, "mock:colormap-lift");
    }

    #[test]
    fn deterministic_and_resumable() {
        let (_, partial) = fixture(2);
        let partial = partial.without_colors();
        let config = small_config();
        let dir = std::env::temp_dir().join(format!("pcfill-pipeline-{}", std::process::id()));
        let opts = RunOptions {
            dump_dir: Some(dir.clone()),
            resume: None,
        };
        let (first, rec1) = complete_with(&partial, "x", &config, &mock(), &opts).unwrap();
        let (second, rec2) = complete(&partial, "x", &config, &mock()).unwrap();
        assert_eq!(write_ply(&first.completed), write_ply(&second.completed));
        assert_eq!(rec1.to_json_without_times(), rec2.to_json_without_times());
        for name in [
            artifact::RAW_DEPTH,
            artifact::FULL_MASK,
            artifact::INPAINT_MASK,
            artifact::INPAINTED_DEPTH,
            artifact::IMAGE,
            artifact::GENERATED,
            artifact::ALIGNED,
            artifact::MISS,
            artifact::SCALE_GRID,
            artifact::RUN_RECORD,
        ] {
            assert!(dir.join(name).exists(), "{name} missing");
        }
        // skipped stages get a dead backend, so any call to them fails
        let dead = || Backends::from_url("http://127.0.0.1:9", 2048).unwrap();
        for point in [ResumePoint::Inpainted, ResumePoint::Image, ResumePoint::Generated, ResumePoint::Aligned, ResumePoint::Miss] {
            let live = mock();
            let backends = Backends {
                inpainter: dead().inpainter,
                imager: if point == ResumePoint::Inpainted { live.imager } else { dead().imager },
                generator: if point <= ResumePoint::Image { live.generator } else { dead().generator },
            };
            let opts = RunOptions {
                dump_dir: None,
                resume: Some((point, dir.clone())),
            };
            let (resumed, _) = complete_with(&partial, "x", &config, &backends, &opts).unwrap();
            assert_eq!(write_ply(&resumed.completed), write_ply(&first.completed), "{point:?}");
        }
        let _ = fs::remove_dir_all(&dir);
    }

    #[test]
    fn unreachable_backend_is_stage_tagged() {
        let (_, partial) = fixture(3);
        let backends = Backends::from_url("http://127.0.0.1:9", 2048).unwrap();
        let err = complete(&partial, "x", &small_config(), &backends).unwrap_err();
        match &err {
            Error::Stage { stage, source } => {
                assert_eq!(*stage, Stage::InpaintDepth);
                assert!(matches!(**source, Error::Backend { kind: BackendFailure::Transport, .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn ground_truth_generator_covers_the_shape() {
        for shape in Shape::ALL {
            let gt = normalize_unit(&shape.sample(8192, 4)).unwrap().0;
            let cams = place_cameras(&gt, 42).unwrap();
            let partial = synth_partial(&gt, &cams[11], &CompletionConfig::default()).unwrap();
            let oracle = GroundTruthShapeMock::new(gt.clone(), vec![1.0]);
            let backends = mock().with_generator(oracle);
            let (result, record) = complete(&partial, "x", &small_config(), &backends).unwrap();
            let cd_all = chamfer_l1(&result.completed, &gt).unwrap() * 100.0;
            let cd_partial = chamfer_l1(&partial, &gt).unwrap() * 100.0;
            assert!(cd_all < cd_partial, "{shape}: {cd_all} vs {cd_partial}");
            // a partial cap or ring against the full shape pulls the chamfer
            // objective towards smaller scales; shapes with edges pin it
            if matches!(shape, Shape::Box | Shape::Mug | Shape::Chair) {
                assert!(cd_all < 0.5, "{shape}: {cd_all}");
                assert_eq!(record.outcome.scale_grid_value, 1.0);
            }
        }
    }

    #[test]
    fn synth_partial_examples() {
        let config = CompletionConfig::default();
        let mut fractions = Vec::new();
        for seed in 0..5 {
            let sphere = Shape::Sphere.sample(4000, seed);
            // far camera on the equator: the visible cap approaches a hemisphere
            let cam = CameraPose::new(Point3::new(25.0, 0.0, 0.0), Point3::zeros(), Vector3::z(), 5.0, (64, 64)).unwrap();
            let part = synth_partial(&sphere, &cam, &config).unwrap();
            fractions.push(part.len() as f64 / sphere.len() as f64);
            let originals: std::collections::HashSet<[u64; 3]> =
                sphere.points().iter().map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()]).collect();
            assert!(part.points().iter().all(|p| originals.contains(&[p.x.to_bits(), p.y.to_bits(), p.z.to_bits()])));
        }
        assert!(fractions.iter().all(|f| (0.45..=0.55).contains(f)), "{fractions:?}");

        let sphere = Shape::Sphere.sample(2000, 9);
        let inside = CameraPose::new(Point3::zeros(), Point3::new(1.0, 0.0, 0.0), Vector3::z(), 60.0, (64, 64)).unwrap();
        assert_eq!(synth_partial(&sphere, &inside, &config).unwrap().len(), 2000);
    }

    #[test]
    fn evaluate_examples() {
        let gt = Shape::Box.sample(600, 1);
        let r = evaluate(&gt, &gt, 256).unwrap();
        assert_eq!((r.cd, r.emd), (0.0, 0.0));
        assert_eq!(r.emd_solver, EmdSolver::Exact);
        assert!(evaluate(&gt, &gt, 601).is_err());

        let p = ColoredPointCloud::new(vec![Point3::zeros(), Point3::new(1.0, 0.0, 0.0)]).unwrap();
        let q = ColoredPointCloud::new(vec![Point3::new(0.0, 0.5, 0.0), Point3::new(1.0, 0.5, 0.0)]).unwrap();
        let r = evaluate(&p, &q, 2).unwrap();
        assert!((r.cd - 50.0).abs() < 1e-12 && (r.emd - 50.0).abs() < 1e-12);
        assert!(r.to_json().contains("\"emd_solver\":\"exact\""));
    }
}
