//! Command-line interface: dataset synthesis, training, rendering,
//! scene partitioning, block merging, and image-set evaluation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error,
//! 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use gsplat::config::TrainConfig;
use gsplat::error::{Error, Result};
use gsplat::image_io::{load_image, save_image};
use gsplat::losses::{psnr, ssim_metric};
use gsplat::partitioner::{
    assign_cameras, compute_bounds, filter_outliers, merge_blocks, subdivide, CameraAssignConfig,
    ScenePartition,
};
use gsplat::ply::{load_ply, save_ply};
use gsplat::rasterizer::render;
use gsplat::sfm::{export_bundles, SfmDataset};
use gsplat::synth::{generate, write as write_synth, SynthScene};
use gsplat::trainer::{init_cloud, TrainView, Trainer};

#[derive(Parser)]
#[command(
    name = "gsplat",
    about = "Differentiable Gaussian-splat reconstruction from sparse captures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (sparse reconstruction, ground
    /// truth images, reference cloud).
    Synth {
        /// Scene name: toy, town, or edge.
        #[arg(long)]
        scene: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a Gaussian cloud against a dataset directory.
    Train {
        /// Dataset directory holding cameras.txt, images.txt, points3D.txt.
        #[arg(long)]
        data: PathBuf,
        /// Ground-truth image directory; defaults to DATA/images.
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// TOML configuration file; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Enhanced-loss cadence in iterations (0 disables).
        #[arg(long)]
        attn_interval: Option<u64>,
        /// Skip mean-1 normalization of the attention map.
        #[arg(long)]
        no_attn_norm: bool,
        /// Hold out every k-th view for evaluation.
        #[arg(long)]
        holdout: Option<u64>,
        /// Disable the scale constraint and selective split schedules.
        #[arg(long)]
        no_constraints: bool,
    },
    /// Render every dataset view with a trained model.
    Render {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Subdivide a dataset into n^3 blocks and export per-block bundles.
    Partition {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Blocks per axis.
        #[arg(long, default_value_t = 2)]
        blocks: usize,
        /// Outlier threshold as a multiple of the block half-diagonal.
        #[arg(long, default_value_t = 1.5)]
        theta: f64,
        /// Percentile trimmed from each end when bounding the scene.
        #[arg(long, default_value_t = 1.0)]
        percentile: f64,
        /// Minimum visible points for camera-block assignment.
        #[arg(long, default_value_t = 20)]
        min_views: usize,
    },
    /// Merge per-block trained models into one cloud.
    Merge {
        /// partition.json produced by the partition command.
        #[arg(long)]
        partition: PathBuf,
        /// Directory holding block_i_j_k/model.ply files.
        #[arg(long)]
        blocks_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Drop Gaussians that drifted outside their block.
        #[arg(long)]
        cull_boundary: bool,
    },
    /// Compare two image directories by filename; prints JSON metrics.
    Eval {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not failures.
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { scene, seed, out } => {
            let scene: SynthScene = scene.parse()?;
            let output = generate(scene, seed)?;
            write_synth(&output, &out)?;
            println!(
                "wrote {} views and {} points to {}",
                output.views.len(),
                output.dataset.points.len(),
                out.display()
            );
            Ok(())
        }
        Command::Train {
            data,
            images,
            out,
            config,
            iterations,
            seed,
            attn_interval,
            no_attn_norm,
            holdout,
            no_constraints,
        } => {
            let mut cfg = match config {
                Some(path) => TrainConfig::load_toml(&path)?,
                None => TrainConfig::default(),
            };
            if let Some(v) = iterations {
                cfg.iterations = v;
            }
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = attn_interval {
                cfg.attn_interval = v;
            }
            if no_attn_norm {
                cfg.attention.normalize = false;
            }
            if let Some(v) = holdout {
                cfg.holdout_every = v;
            }
            if no_constraints {
                cfg.constraints.constraint_stop_iteration = 0;
            }
            cfg.validate()?;
            train(&data, images.as_deref(), &out, cfg)
        }
        Command::Render { model, data, out } => render_views(&model, &data, &out),
        Command::Partition {
            data,
            out,
            blocks,
            theta,
            percentile,
            min_views,
        } => partition(&data, &out, blocks, theta, percentile, min_views),
        Command::Merge {
            partition,
            blocks_dir,
            out,
            cull_boundary,
        } => merge(&partition, &blocks_dir, &out, cull_boundary),
        Command::Eval { a, b } => eval(&a, &b),
    }
}

fn load_views(data: &Path, images: Option<&Path>) -> Result<(SfmDataset, Vec<TrainView>)> {
    let dataset = SfmDataset::load(data)?;
    let image_dir = images
        .map(Path::to_path_buf)
        .unwrap_or_else(|| data.join("images"));
    let cameras = dataset.to_cameras(Some(&image_dir))?;
    let mut views = Vec::with_capacity(cameras.len());
    for camera in cameras {
        let path = camera.image_path.clone().expect("path set above");
        let truth = load_image(&path)?;
        views.push(TrainView { camera, truth });
    }
    Ok((dataset, views))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Serialize)]
struct TrainSummary {
    iterations: u64,
    gaussians: usize,
    train: gsplat::trainer::EvalMetrics,
    holdout: Option<gsplat::trainer::EvalMetrics>,
}

fn train(data: &Path, images: Option<&Path>, out: &Path, cfg: TrainConfig) -> Result<()> {
    let (dataset, views) = load_views(data, images)?;
    let colors: Vec<[u8; 3]> = dataset.points.iter().map(|p| p.color).collect();
    let cloud = init_cloud(&dataset.positions(), &colors, &cfg)?;
    create_dir(out)?;
    let checkpoints = out.join("checkpoints");
    let checkpoint_interval = cfg.checkpoint_interval;
    if checkpoint_interval > 0 {
        create_dir(&checkpoints)?;
    }
    let mut trainer = Trainer::new(cfg, cloud, views)?;
    trainer.run(|t, record| {
        if checkpoint_interval > 0 && record.iteration % checkpoint_interval == 0 {
            save_ply(
                &t.cloud,
                &checkpoints.join(format!("iter_{:06}.ply", record.iteration)),
            )?;
        }
        Ok(())
    })?;

    save_ply(&trainer.cloud, &out.join("model.ply"))?;
    let log_path = out.join("loss_log.jsonl");
    std::fs::write(&log_path, trainer.loss_log()).map_err(|source| Error::Io {
        path: log_path,
        source,
    })?;

    let summary = TrainSummary {
        iterations: trainer.cfg.iterations,
        gaussians: trainer.cloud.len(),
        train: trainer.evaluate(&trainer.views)?,
        holdout: if trainer.holdout.is_empty() {
            None
        } else {
            Some(trainer.evaluate(&trainer.holdout)?)
        },
    };
    let body = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Format(format!("summary serialization: {e}")))?;
    let metrics_path = out.join("metrics.json");
    std::fs::write(&metrics_path, &body).map_err(|source| Error::Io {
        path: metrics_path,
        source,
    })?;
    println!("{body}");
    Ok(())
}

fn render_views(model: &Path, data: &Path, out: &Path) -> Result<()> {
    let cloud = load_ply(model)?;
    let dataset = SfmDataset::load(data)?;
    let cameras = dataset.to_cameras(None)?;
    create_dir(out)?;
    let raster = gsplat::rasterizer::RasterConfig::default();
    for (camera, meta) in cameras.iter().zip(&dataset.images) {
        let (image, _) = render(&cloud, camera, &raster);
        save_image(&image, &out.join(&meta.name))?;
    }
    println!("rendered {} views to {}", cameras.len(), out.display());
    Ok(())
}

fn partition(
    data: &Path,
    out: &Path,
    blocks: usize,
    theta: f64,
    percentile: f64,
    min_views: usize,
) -> Result<()> {
    let dataset = SfmDataset::load(data)?;
    let points = dataset.positions();
    let bbox = compute_bounds(&points, percentile)?;
    let mut partition = subdivide(&points, &bbox, blocks)?;
    filter_outliers(&mut partition, &points, theta);
    let assign = CameraAssignConfig {
        min_views,
        ..CameraAssignConfig::default()
    };
    assign_cameras(
        &mut partition,
        &dataset.camera_positions(),
        &dataset.visibility(),
        &assign,
    );
    create_dir(out)?;
    let bundles = export_bundles(&dataset, &partition, out)?;
    let body = serde_json::to_string_pretty(&partition)
        .map_err(|e| Error::Format(format!("partition serialization: {e}")))?;
    let path = out.join("partition.json");
    std::fs::write(&path, body).map_err(|source| Error::Io { path, source })?;
    println!(
        "partitioned {} points into {} blocks ({} trainable bundles, {} outliers discarded)",
        points.len(),
        partition.blocks.len(),
        bundles.len(),
        partition.discarded.len()
    );
    Ok(())
}

fn merge(partition_path: &Path, blocks_dir: &Path, out: &Path, cull_boundary: bool) -> Result<()> {
    let text = std::fs::read_to_string(partition_path).map_err(|source| Error::Io {
        path: partition_path.to_path_buf(),
        source,
    })?;
    let partition: ScenePartition = serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: partition_path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut inputs = Vec::new();
    for block in &partition.blocks {
        if !block.trainable {
            continue;
        }
        // Accept both flat block_i_j_k.ply files and per-block output
        // directories from the train command.
        let flat = blocks_dir.join(format!("{}.ply", block.dir_name()));
        let nested = blocks_dir.join(block.dir_name()).join("model.ply");
        let cloud = if flat.exists() {
            Some(load_ply(&flat)?)
        } else if nested.exists() {
            Some(load_ply(&nested)?)
        } else {
            eprintln!("warning: missing block model {}", flat.display());
            None
        };
        inputs.push((block.index, cloud));
    }
    let (merged, report) = merge_blocks(&inputs, &partition, cull_boundary);
    save_ply(&merged, out)?;
    println!(
        "merged {} blocks ({} missing, {} culled) into {} gaussians",
        report.merged_blocks,
        report.missing_blocks.len(),
        report.culled,
        merged.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalPair {
    name: String,
    psnr: f64,
    ssim: f64,
}

#[derive(Serialize)]
struct EvalOutput {
    pairs: Vec<EvalPair>,
    mean_psnr: f64,
    mean_ssim: f64,
}

fn eval(a: &Path, b: &Path) -> Result<()> {
    let mut names: Vec<String> = std::fs::read_dir(a)
        .map_err(|source| Error::Io {
            path: a.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".png") || n.ends_with(".ppm"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no images found in {}",
            a.display()
        )));
    }
    let mut pairs = Vec::new();
    for name in names {
        let other = b.join(&name);
        if !other.exists() {
            return Err(Error::Validation(format!(
                "{} has no counterpart in {}",
                name,
                b.display()
            )));
        }
        let ia = load_image(&a.join(&name))?;
        let ib = load_image(&other)?;
        pairs.push(EvalPair {
            psnr: psnr(&ia, &ib)?.min(100.0),
            ssim: ssim_metric(&ia, &ib)?,
            name,
        });
    }
    let n = pairs.len() as f64;
    let output = EvalOutput {
        mean_psnr: pairs.iter().map(|p| p.psnr).sum::<f64>() / n,
        mean_ssim: pairs.iter().map(|p| p.ssim).sum::<f64>() / n,
        pairs,
    };
    let body = serde_json::to_string_pretty(&output)
        .map_err(|e| Error::Format(format!("eval serialization: {e}")))?;
    println!("{body}");
    Ok(())
}
