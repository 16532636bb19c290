//! Synthetic benchmark: complete shape → single-view partial → completion,
//! scored against the complete shape.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backends::{Backends, GroundTruthShapeMock};
use crate::error::{Error, Result};
use crate::fusion::normalize_unit;
use crate::geometry::{ColoredPointCloud, CompletionConfig, SimilarityTransform};
use crate::metrics::{chamfer_l1, REPORT_SCALE};
use crate::par;
use crate::pipeline::{complete, synth_partial};
use crate::shapes::Shape;
use crate::visibility::place_cameras_with;

/// Which image-to-3D stage the benchmark plugs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchGenerator {
    /// [`GroundTruthShapeMock`] around the true shape.
    GroundTruth,
    /// The default colormap-lift mock.
    Colormap,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub trials: usize,
    pub seed: u64,
    pub config: CompletionConfig,
    /// Points sampled on each ground-truth shape.
    pub gt_points: usize,
    pub generator: BenchGenerator,
    /// Trial `i` uses `shapes[i % shapes.len()]`.
    pub shapes: Vec<Shape>,
    /// Perturbation of the ground-truth mock.
    pub max_rotation_deg: f64,
    pub max_translation: f64,
    pub noise_sigma: f64,
}

impl BenchOptions {
    pub fn new(trials: usize, seed: u64, config: CompletionConfig) -> Self {
        Self {
            trials,
            seed,
            config,
            gt_points: 8192,
            generator: BenchGenerator::GroundTruth,
            shapes: Shape::ALL.to_vec(),
            max_rotation_deg: 15.0,
            max_translation: 0.05,
            noise_sigma: 0.002,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchTrial {
    pub seed: u64,
    pub shape: Shape,
    pub camera_index: usize,
    /// Scale that maps the normalized generated cloud onto the normalized
    /// partial when both are exact; `NaN` for generators without a known pose.
    pub s_true: f64,
    pub s_recovered: f64,
    /// Chamfer-ℓ1 × 100 against the ground truth.
    pub cd_partial: f64,
    pub cd_completed: f64,
    pub ground_truth: ColoredPointCloud,
    pub partial: ColoredPointCloud,
    pub completed: ColoredPointCloud,
}

fn longest_side(cloud: &ColoredPointCloud) -> f64 {
    cloud.bounding_box().map_or(0.0, |(lo, hi)| (hi - lo).max())
}

/// Trial `index`: shapes cycle, the camera is drawn from the lattice by the
/// trial seed.
pub fn bench_trial(index: usize, options: &BenchOptions) -> Result<BenchTrial> {
    let seed = options.seed.wrapping_add(index as u64);
    let config = CompletionConfig {
        rng_seed: seed,
        ..options.config.clone()
    };
    if options.shapes.is_empty() {
        return Err(Error::invalid("bench needs at least one shape"));
    }
    let shape = options.shapes[index % options.shapes.len()];
    let (gt, _) = normalize_unit(&shape.sample(options.gt_points, seed))?;
    let cameras = place_cameras_with(&gt, &config)?;
    let camera_index = ChaCha8Rng::seed_from_u64(seed).gen_range(0..cameras.len());
    let partial = synth_partial(&gt, &cameras[camera_index], &config)?;

    let (backends, s_true) = match options.generator {
        BenchGenerator::GroundTruth => {
            let mut oracle = GroundTruthShapeMock::new(gt.clone(), config.scale_grid());
            oracle.max_rotation_deg = options.max_rotation_deg;
            oracle.max_translation = options.max_translation;
            oracle.noise_sigma = options.noise_sigma;
            oracle.sample_count = options.gt_points;
            let (_, perturbation) = oracle.perturbation(seed);
            let rotated = gt.transformed(&SimilarityTransform::rigid(perturbation.rotation, Default::default()));
            let s_true = longest_side(&rotated) / longest_side(&partial);
            (Backends::mock().with_generator(oracle), s_true)
        }
        BenchGenerator::Colormap => (Backends::mock(), f64::NAN),
    };
    let (result, record) = complete(&partial, shape.name(), &config, &backends)?;
    Ok(BenchTrial {
        seed,
        shape,
        camera_index,
        s_true,
        s_recovered: record.outcome.scale_grid_value,
        cd_partial: chamfer_l1(&partial, &gt)? * REPORT_SCALE,
        cd_completed: chamfer_l1(&result.completed, &gt)? * REPORT_SCALE,
        ground_truth: gt,
        partial,
        completed: result.completed,
    })
}

/// All trials; independent runs execute in parallel.
pub fn run_bench(options: &BenchOptions) -> Result<Vec<BenchTrial>> {
    let indices: Vec<usize> = (0..options.trials).collect();
    par::map(&indices, |&i| bench_trial(i, options)).into_iter().collect()
}

/// `seed,s_true,s_recovered,cd_partial,cd_completed` with a header row.
pub fn bench_csv(trials: &[BenchTrial]) -> String {
    let mut out = String::from("seed,s_true,s_recovered,cd_partial,cd_completed\n");
    for t in trials {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?}",
            t.seed, t.s_true, t.s_recovered, t.cd_partial, t.cd_completed
        );
    }
    out
}
