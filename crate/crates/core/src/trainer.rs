//! The optimization loop: seeded view scheduling, rendering, the
//! combined objective with its enhanced-image cadence, backpropagation,
//! Adam updates, and the densification / scale-constraint schedules.

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::compute_attention_map;
use crate::camera::Camera;
use crate::config::TrainConfig;
use crate::constraints::{
    apply_scale_constraint, densify_and_prune, init_scales, selective_split,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::losses::{attention_scheduled, psnr, ssim_metric, total_loss, LossReport};
use crate::optimizer::{adam_step, exponential_lr, AdamState};
use crate::rasterizer::{render, render_backward};
use crate::scene::{logit, GaussianCloud};

/// One training (or evaluation) view: a camera and its ground truth.
#[derive(Debug, Clone)]
pub struct TrainView {
    pub camera: Camera,
    pub truth: Image,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub image_id: u32,
    pub loss: LossReport,
    pub gaussians: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub psnr: f64,
    pub ssim: f64,
    pub views: usize,
}

/// Build the initial cloud from sparse points: density-adaptive
/// isotropic scales, identity rotations, uniform starting opacity, and
/// base color from the reconstruction (zeroed first-order harmonics
/// when enabled).
pub fn init_cloud(
    points: &[Vector3<f64>],
    colors: &[[u8; 3]],
    cfg: &TrainConfig,
) -> Result<GaussianCloud> {
    if points.len() != colors.len() {
        return Err(Error::ContractViolation(format!(
            "{} points but {} colors",
            points.len(),
            colors.len()
        )));
    }
    let log_scales = init_scales(points, cfg.dense_factor)?;
    let mut cloud = GaussianCloud::with_capacity(points.len());
    if cfg.use_sh1 {
        cloud.sh1 = Some(Vec::with_capacity(points.len()));
    }
    let opacity = logit(cfg.init_opacity);
    for (i, p) in points.iter().enumerate() {
        cloud.push(
            *p,
            log_scales[i],
            nalgebra::Vector4::new(1.0, 0.0, 0.0, 0.0),
            opacity,
            Vector3::new(
                colors[i][0] as f64 / 255.0,
                colors[i][1] as f64 / 255.0,
                colors[i][2] as f64 / 255.0,
            ),
            cfg.use_sh1.then_some([0.0; 9]),
        );
    }
    cloud.validate()?;
    Ok(cloud)
}

/// Split views into training and holdout sets: every `holdout_every`-th
/// view (1-based) is held out; 0 keeps everything for training.
pub fn split_holdout(views: Vec<TrainView>, holdout_every: u64) -> (Vec<TrainView>, Vec<TrainView>) {
    if holdout_every == 0 {
        return (views, Vec::new());
    }
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for (i, v) in views.into_iter().enumerate() {
        if (i as u64 + 1) % holdout_every == 0 {
            holdout.push(v);
        } else {
            train.push(v);
        }
    }
    (train, holdout)
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub cloud: GaussianCloud,
    pub views: Vec<TrainView>,
    pub holdout: Vec<TrainView>,
    pub records: Vec<IterationRecord>,
    state: AdamState,
    rng: ChaCha8Rng,
    /// Shuffled view order for the current epoch, consumed back to front.
    epoch_order: Vec<usize>,
    /// Positional gradient accumulation between densification passes.
    grad_norm_sum: Vec<f64>,
    grad_count: Vec<u32>,
    max_radii: Vec<f64>,
    scene_extent: f64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, cloud: GaussianCloud, views: Vec<TrainView>) -> Result<Trainer> {
        cfg.validate()?;
        cloud.validate()?;
        if views.is_empty() {
            return Err(Error::InsufficientData("no training views".into()));
        }
        for v in &views {
            v.camera.validate()?;
            if v.camera.width != v.truth.width || v.camera.height != v.truth.height {
                return Err(Error::ContractViolation(format!(
                    "view {}: camera is {}x{} but ground truth is {}x{}",
                    v.camera.image_id,
                    v.camera.width,
                    v.camera.height,
                    v.truth.width,
                    v.truth.height
                )));
            }
        }
        let (views, holdout) = split_holdout(views, cfg.holdout_every);
        if views.is_empty() {
            return Err(Error::InsufficientData(
                "holdout split left no training views".into(),
            ));
        }
        let scene_extent = scene_extent(&cloud, &views);
        let n = cloud.len();
        let state = AdamState::new(&cloud);
        Ok(Trainer {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            cloud,
            views,
            holdout,
            records: Vec::new(),
            state,
            epoch_order: Vec::new(),
            grad_norm_sum: vec![0.0; n],
            grad_count: vec![0; n],
            max_radii: vec![0.0; n],
            scene_extent,
        })
    }

    fn next_view(&mut self) -> usize {
        if self.epoch_order.is_empty() {
            self.epoch_order = (0..self.views.len()).collect();
            self.epoch_order.shuffle(&mut self.rng);
        }
        self.epoch_order.pop().expect("non-empty epoch")
    }

    fn reset_accumulators(&mut self) {
        let n = self.cloud.len();
        self.grad_norm_sum = vec![0.0; n];
        self.grad_count = vec![0; n];
        self.max_radii = vec![0.0; n];
    }

    /// Run one iteration (1-based). Returns the loss record.
    pub fn step(&mut self, iteration: u64) -> Result<IterationRecord> {
        let view_idx = self.next_view();
        let camera = self.views[view_idx].camera.clone();
        let image_id = camera.image_id;

        let (rendered, aux) = render(&self.cloud, &camera, &self.cfg.raster);
        let scheduled = attention_scheduled(iteration, self.cfg.attn_interval);
        let map = if scheduled {
            Some(compute_attention_map(
                &rendered,
                &self.views[view_idx].truth,
                &self.cfg.attention,
            )?)
        } else {
            None
        };
        let (report, d_image) = total_loss(
            &rendered,
            map.as_ref(),
            &self.views[view_idx].truth,
            &self.cfg.loss,
            iteration,
            self.cfg.attn_interval,
        )?;
        if !report.total.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite loss at iteration {iteration} on view {image_id}: \
                 l1={} dssim={} edge={} freq={} over {} gaussians",
                report.l1,
                report.dssim,
                report.edge,
                report.frequency,
                self.cloud.len()
            )));
        }
        let grads = render_backward(&self.cloud, &camera, &aux, &d_image, &self.cfg.raster)?;
        if !grads.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite parameter gradients at iteration {iteration} on view {image_id}"
            )));
        }
        for i in 0..self.cloud.len() {
            if aux.radii[i] > 0.0 {
                self.grad_norm_sum[i] += grads.screen[i];
                self.grad_count[i] += 1;
                self.max_radii[i] = self.max_radii[i].max(aux.radii[i]);
            }
        }

        let mut lrs = self.cfg.lr;
        lrs.position = exponential_lr(
            self.cfg.lr.position,
            self.cfg.position_lr_final,
            iteration,
            self.cfg.position_lr_horizon(),
        );
        adam_step(&mut self.cloud, &grads, &mut self.state, &lrs)?;
        for age in &mut self.cloud.ages {
            *age += 1;
        }

        self.run_schedules(iteration)?;

        let record = IterationRecord {
            iteration,
            image_id,
            loss: report,
            gaussians: self.cloud.len(),
        };
        self.records.push(record);
        Ok(record)
    }

    fn run_schedules(&mut self, iteration: u64) -> Result<()> {
        let dcfg = self.cfg.densify;
        let mut ccfg = self.cfg.constraints;
        // stop_iteration 0 turns the constraint machinery off entirely,
        // including the clamp applied to freshly split children.
        if ccfg.constraint_stop_iteration == 0 {
            ccfg.tau = f64::INFINITY;
        }

        let densify_due = iteration >= self.cfg.densify_start
            && iteration <= self.cfg.densify_stop
            && iteration % dcfg.densify_interval == 0;
        if densify_due {
            let mean_grads: Vec<f64> = self
                .grad_norm_sum
                .iter()
                .zip(&self.grad_count)
                .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
                .collect();
            let summary = densify_and_prune(
                &mut self.cloud,
                &mean_grads,
                &self.max_radii,
                &dcfg,
                &ccfg,
                self.scene_extent,
                &mut self.rng,
            )?;
            self.state.remap(&summary.kept, summary.appended);
            self.reset_accumulators();
        }

        let constraint_due = ccfg.constraint_interval > 0
            && iteration % ccfg.constraint_interval == 0
            && iteration <= ccfg.constraint_stop_iteration;
        if constraint_due {
            apply_scale_constraint(&mut self.cloud, &ccfg);
            let summary = selective_split(&mut self.cloud, &ccfg, &mut self.rng);
            if summary.appended > 0 || summary.kept.iter().any(|k| !k) {
                self.state.remap(&summary.kept, summary.appended);
                self.reset_accumulators();
            }
        }

        if self.cfg.opacity_reset_interval > 0
            && iteration % self.cfg.opacity_reset_interval == 0
            && iteration <= self.cfg.densify_stop
        {
            let floor = logit(0.01);
            for o in &mut self.cloud.opacities {
                *o = o.min(floor);
            }
        }
        Ok(())
    }

    /// Train for the configured number of iterations. `on_iteration`
    /// runs after every step (checkpointing, progress output).
    pub fn run(
        &mut self,
        mut on_iteration: impl FnMut(&Trainer, &IterationRecord) -> Result<()>,
    ) -> Result<()> {
        for iteration in 1..=self.cfg.iterations {
            let record = self.step(iteration)?;
            on_iteration(self, &record)?;
        }
        Ok(())
    }

    /// Mean reconstruction quality over a view set. Infinite per-view
    /// PSNR (an exact match) is capped at 100 dB before averaging.
    pub fn evaluate(&self, views: &[TrainView]) -> Result<EvalMetrics> {
        if views.is_empty() {
            return Err(Error::InsufficientData("no views to evaluate".into()));
        }
        let mut psnr_sum = 0.0;
        let mut ssim_sum = 0.0;
        for v in views {
            let (rendered, _) = render(&self.cloud, &v.camera, &self.cfg.raster);
            psnr_sum += psnr(&rendered, &v.truth)?.min(100.0);
            ssim_sum += ssim_metric(&rendered, &v.truth)?;
        }
        Ok(EvalMetrics {
            psnr: psnr_sum / views.len() as f64,
            ssim: ssim_sum / views.len() as f64,
            views: views.len(),
        })
    }

    /// One JSON object per iteration, newline separated. Identical
    /// seeds and inputs must reproduce this byte for byte.
    pub fn loss_log(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serialization"));
            out.push('\n');
        }
        out
    }
}

/// Scene extent: the largest distance from the cloud centroid to any
/// camera position, the usual normalization for densify thresholds.
fn scene_extent(cloud: &GaussianCloud, views: &[TrainView]) -> f64 {
    let n = cloud.len().max(1) as f64;
    let centroid = cloud
        .positions
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p)
        / n;
    views
        .iter()
        .map(|v| (v.camera.position() - centroid).norm())
        .fold(1e-6_f64, f64::max)
}
