//! Adam optimization over the Gaussian cloud parameter groups, with
//! moment remapping across densification so surviving Gaussians keep
//! their optimizer history.

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rasterizer::GradientBuffer;
use crate::scene::GaussianCloud;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// Per-group learning rates. The position rate is typically supplied by
/// an exponential decay schedule each step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub position: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
    pub sh1: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            position: 1.6e-4,
            scale: 5e-3,
            rotation: 1e-3,
            opacity: 5e-2,
            color: 2.5e-3,
            sh1: 2.5e-3 / 20.0,
        }
    }
}

/// Exponential interpolation from `lr_init` at step 0 to `lr_final` at
/// `max_steps`, constant afterwards.
pub fn exponential_lr(lr_init: f64, lr_final: f64, step: u64, max_steps: u64) -> f64 {
    if max_steps == 0 {
        return lr_final;
    }
    let t = (step as f64 / max_steps as f64).clamp(0.0, 1.0);
    (lr_init.ln() * (1.0 - t) + lr_final.ln() * t).exp()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Moments {
    positions: Vec<Vector3<f64>>,
    log_scales: Vec<Vector3<f64>>,
    rotations: Vec<Vector4<f64>>,
    opacities: Vec<f64>,
    colors: Vec<Vector3<f64>>,
    sh1: Option<Vec<[f64; 9]>>,
}

impl Moments {
    fn zeros(n: usize, with_sh1: bool) -> Self {
        Moments {
            positions: vec![Vector3::zeros(); n],
            log_scales: vec![Vector3::zeros(); n],
            rotations: vec![Vector4::zeros(); n],
            opacities: vec![0.0; n],
            colors: vec![Vector3::zeros(); n],
            sh1: with_sh1.then(|| vec![[0.0; 9]; n]),
        }
    }

    fn remap(&mut self, kept: &[bool], appended: usize) {
        fn apply<T: Copy + Default>(v: &mut Vec<T>, kept: &[bool], appended: usize) {
            let mut w = 0usize;
            for r in 0..v.len() {
                if kept[r] {
                    v[w] = v[r];
                    w += 1;
                }
            }
            v.truncate(w);
            v.extend(std::iter::repeat(T::default()).take(appended));
        }
        apply(&mut self.positions, kept, appended);
        apply(&mut self.log_scales, kept, appended);
        apply(&mut self.rotations, kept, appended);
        apply(&mut self.opacities, kept, appended);
        apply(&mut self.colors, kept, appended);
        if let Some(sh1) = &mut self.sh1 {
            apply(sh1, kept, appended);
        }
    }

    fn len(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    m: Moments,
    v: Moments,
    pub step: u64,
}

impl AdamState {
    pub fn new(cloud: &GaussianCloud) -> Self {
        AdamState {
            m: Moments::zeros(cloud.len(), cloud.sh1.is_some()),
            v: Moments::zeros(cloud.len(), cloud.sh1.is_some()),
            step: 0,
        }
    }

    /// Keep moment rows flagged in `kept` and append `appended` zero
    /// rows, mirroring a densification pass over the cloud.
    pub fn remap(&mut self, kept: &[bool], appended: usize) {
        self.m.remap(kept, appended);
        self.v.remap(kept, appended);
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn adam_update(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64, bc1: f64, bc2: f64) {
    *m = BETA1 * *m + (1.0 - BETA1) * g;
    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
}

/// One Adam step over every parameter group. Quaternions are
/// renormalized afterwards so the stored rotations stay unit length.
pub fn adam_step(
    cloud: &mut GaussianCloud,
    grads: &GradientBuffer,
    state: &mut AdamState,
    lrs: &LearningRates,
) -> Result<()> {
    let n = cloud.len();
    if grads.positions.len() != n || state.len() != n {
        return Err(Error::ContractViolation(format!(
            "optimizer shape mismatch: cloud {n}, grads {}, state {}",
            grads.positions.len(),
            state.len()
        )));
    }
    state.step += 1;
    let bc1 = 1.0 - BETA1.powi(state.step as i32);
    let bc2 = 1.0 - BETA2.powi(state.step as i32);
    for i in 0..n {
        for a in 0..3 {
            adam_update(
                &mut cloud.positions[i][a],
                grads.positions[i][a],
                &mut state.m.positions[i][a],
                &mut state.v.positions[i][a],
                lrs.position,
                bc1,
                bc2,
            );
            adam_update(
                &mut cloud.log_scales[i][a],
                grads.log_scales[i][a],
                &mut state.m.log_scales[i][a],
                &mut state.v.log_scales[i][a],
                lrs.scale,
                bc1,
                bc2,
            );
            adam_update(
                &mut cloud.colors[i][a],
                grads.colors[i][a],
                &mut state.m.colors[i][a],
                &mut state.v.colors[i][a],
                lrs.color,
                bc1,
                bc2,
            );
        }
        for a in 0..4 {
            adam_update(
                &mut cloud.rotations[i][a],
                grads.rotations[i][a],
                &mut state.m.rotations[i][a],
                &mut state.v.rotations[i][a],
                lrs.rotation,
                bc1,
                bc2,
            );
        }
        adam_update(
            &mut cloud.opacities[i],
            grads.opacities[i],
            &mut state.m.opacities[i],
            &mut state.v.opacities[i],
            lrs.opacity,
            bc1,
            bc2,
        );
        let norm = cloud.rotations[i].norm();
        if norm > 1e-12 {
            cloud.rotations[i] /= norm;
        } else {
            cloud.rotations[i] = Vector4::new(1.0, 0.0, 0.0, 0.0);
        }
    }
    if let (Some(sh), Some(gsh), Some(msh), Some(vsh)) = (
        cloud.sh1.as_mut(),
        grads.sh1.as_ref(),
        state.m.sh1.as_mut(),
        state.v.sh1.as_mut(),
    ) {
        for i in 0..n {
            for a in 0..9 {
                adam_update(
                    &mut sh[i][a],
                    gsh[i][a],
                    &mut msh[i][a],
                    &mut vsh[i][a],
                    lrs.sh1,
                    bc1,
                    bc2,
                );
            }
        }
    }
    Ok(())
}
