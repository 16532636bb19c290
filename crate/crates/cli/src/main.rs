use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pcfill::backends::{Backends, DEFAULT_SAMPLE_COUNT};
use pcfill::error::{Error, Result};
use pcfill::geometry::CompletionConfig;
use pcfill::harness::{bench_csv, run_bench, BenchGenerator, BenchOptions};
use pcfill::io::{read_ply, write_ply};
use pcfill::pipeline::{complete_with, evaluate, synth_partial, ResumePoint, RunOptions};
use pcfill::shapes::{load_shape, Shape};
use pcfill::visibility::place_cameras_with;

const BACKEND_ENV: &str = "PCFILL_BACKEND_URL";

#[derive(Parser)]
#[command(name = "pcfill", version, about = "Point-cloud completion with pluggable generative backends")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complete a partial point cloud.
    Complete {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "")]
        prompt: String,
        /// JSON configuration; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `mock:` or `http://host:port`. Falls back to $PCFILL_BACKEND_URL.
        #[arg(long)]
        backend: Option<String>,
        #[arg(long)]
        output: PathBuf,
        /// Write every intermediate artifact here.
        #[arg(long)]
        dump_dir: Option<PathBuf>,
        /// Resume from artifacts of an earlier dump.
        #[arg(long, value_enum)]
        resume: Option<ResumeArg>,
        /// Directory holding the artifacts to resume from (default: --dump-dir).
        #[arg(long)]
        resume_dir: Option<PathBuf>,
        /// Points requested from the image-to-3D stage.
        #[arg(long, default_value_t = DEFAULT_SAMPLE_COUNT)]
        sample_count: usize,
    },
    /// Cut a single-view partial out of a complete shape.
    Synth {
        /// sphere, box, torus, mug, chair or ply:<path>.
        #[arg(long)]
        shape: String,
        #[arg(long)]
        camera_index: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        /// Points sampled on an analytic shape.
        #[arg(long, default_value_t = 8192)]
        points: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the complete shape here.
        #[arg(long)]
        complete_output: Option<PathBuf>,
    },
    /// Compare a completed cloud with ground truth; prints JSON.
    Eval {
        #[arg(long)]
        completed: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 2048)]
        n: usize,
    },
    /// Synthetic benchmark; prints CSV.
    Bench {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write ground truth, partial and completed PLYs per trial here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 8192)]
        points: usize,
        #[arg(long, value_enum, default_value_t = GeneratorArg::GroundTruth)]
        generator: GeneratorArg,
        /// Comma-separated shapes to cycle through.
        #[arg(long, value_delimiter = ',')]
        shapes: Option<Vec<String>>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ResumeArg {
    Inpainted,
    Image,
    Generated,
    Aligned,
    Miss,
}

impl From<ResumeArg> for ResumePoint {
    fn from(r: ResumeArg) -> Self {
        match r {
            ResumeArg::Inpainted => ResumePoint::Inpainted,
            ResumeArg::Image => ResumePoint::Image,
            ResumeArg::Generated => ResumePoint::Generated,
            ResumeArg::Aligned => ResumePoint::Aligned,
            ResumeArg::Miss => ResumePoint::Miss,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GeneratorArg {
    GroundTruth,
    Colormap,
}

fn read_config(path: Option<&Path>) -> Result<CompletionConfig> {
    match path {
        Some(p) => CompletionConfig::from_json(&fs::read_to_string(p)?),
        None => Ok(CompletionConfig::default()),
    }
}

fn read_cloud(path: &Path) -> Result<pcfill::geometry::ColoredPointCloud> {
    read_ply(&fs::read(path)?)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::write(path, bytes)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Complete {
            input,
            prompt,
            config,
            backend,
            output,
            dump_dir,
            resume,
            resume_dir,
            sample_count,
        } => {
            let config = read_config(config.as_deref())?;
            let url = backend
                .or_else(|| std::env::var(BACKEND_ENV).ok())
                .ok_or_else(|| Error::InvalidInput(format!("no backend: pass --backend or set {BACKEND_ENV}")))?;
            let backends = Backends::from_url(&url, sample_count)?;
            let partial = read_cloud(&input)?;
            let resume = match resume {
                Some(point) => {
                    let dir = resume_dir
                        .or_else(|| dump_dir.clone())
                        .ok_or_else(|| Error::InvalidInput("--resume needs --resume-dir or --dump-dir".into()))?;
                    Some((point.into(), dir))
                }
                None => None,
            };
            let options = RunOptions { dump_dir, resume };
            let (result, record) = complete_with(&partial, &prompt, &config, &backends, &options)?;
            write_file(&output, write_ply(&result.completed))?;
            eprintln!(
                "camera {} ({} visible), scale {}, objective {:.6}, {} + {} points",
                record.selected_camera_index,
                record.visible_count,
                record.outcome.scale_grid_value,
                record.outcome.objective,
                result.partial_count,
                result.miss_count
            );
        }
        Command::Synth {
            shape,
            camera_index,
            seed,
            output,
            points,
            config,
            complete_output,
        } => {
            let config = read_config(config.as_deref())?;
            let full = load_shape(&shape, points, seed)?;
            let cameras = place_cameras_with(&full, &config)?;
            let camera = cameras.get(camera_index).ok_or_else(|| {
                Error::InvalidInput(format!("camera index {camera_index} out of range (0..{})", cameras.len()))
            })?;
            let partial = synth_partial(&full, camera, &config)?;
            write_file(&output, write_ply(&partial))?;
            if let Some(path) = complete_output {
                write_file(&path, write_ply(&full))?;
            }
            eprintln!("{} of {} points visible", partial.len(), full.len());
        }
        Command::Eval { completed, gt, n } => {
            let report = evaluate(&read_cloud(&completed)?, &read_cloud(&gt)?, n)?;
            println!("{}", report.to_json());
        }
        Command::Bench {
            trials,
            seed,
            config,
            out_dir,
            points,
            generator,
            shapes,
        } => {
            let mut options = BenchOptions::new(trials, seed, read_config(config.as_deref())?);
            options.gt_points = points;
            options.generator = match generator {
                GeneratorArg::GroundTruth => BenchGenerator::GroundTruth,
                GeneratorArg::Colormap => BenchGenerator::Colormap,
            };
            if let Some(names) = shapes {
                options.shapes = names.iter().map(|s| s.parse::<Shape>()).collect::<Result<_>>()?;
            }
            let results = run_bench(&options)?;
            if let Some(dir) = out_dir {
                fs::create_dir_all(&dir)?;
                for t in &results {
                    fs::write(dir.join(format!("trial_{}_gt.ply", t.seed)), write_ply(&t.ground_truth))?;
                    fs::write(dir.join(format!("trial_{}_partial.ply", t.seed)), write_ply(&t.partial))?;
                    fs::write(dir.join(format!("trial_{}_completed.ply", t.seed)), write_ply(&t.completed))?;
                }
            }
            print!("{}", bench_csv(&results));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pcfill: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
