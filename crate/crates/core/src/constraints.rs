//! Gaussian size management: density-adaptive scale initialization, the
//! scale clamp, the aged selective split, and clone/split/prune
//! densification with a post-split size filter.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{quat_to_rotation, sigmoid, GaussianCloud};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintConfig {
    /// Scale threshold: axes larger than this get clamped.
    pub tau: f64,
    /// Modulating factor applied to oversized axes.
    pub alpha: f64,
    /// Aged Gaussians with a larger max axis than this are split.
    pub omega: f64,
    /// Iterations before a Gaussian counts as aged.
    pub age_threshold: u32,
    /// Iterations between clamp passes.
    pub constraint_interval: u64,
    /// No clamp passes after this iteration.
    pub constraint_stop_iteration: u64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        ConstraintConfig {
            tau: 0.3,
            alpha: 0.2,
            omega: 0.3,
            age_threshold: 3000,
            constraint_interval: 1000,
            constraint_stop_iteration: 10_000,
        }
    }
}

impl ConstraintConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0
            || self.omega <= 0.0
            || !(0.0..1.0).contains(&self.alpha)
            || self.alpha == 0.0
            || self.constraint_interval < 1
        {
            return Err(Error::InvalidParameter(
                "constraint config requires 0 < alpha < 1, tau > 0, omega > 0, interval >= 1"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct DensifyConfig {
    /// Mean positional-gradient norm that triggers clone/split.
    pub grad_threshold: f64,
    /// Gaussians with activated opacity below this are pruned.
    pub opacity_prune: f64,
    /// Iterations between densification passes.
    pub densify_interval: u64,
    /// Scale divisor for split children.
    pub split_factor: f64,
    /// Fraction of the scene extent separating clone from split.
    pub percent_dense: f64,
    /// Prune Gaussians whose screen radius exceeded this many pixels
    /// (0 disables).
    pub max_screen_radius: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        DensifyConfig {
            grad_threshold: 2e-4,
            opacity_prune: 0.005,
            densify_interval: 100,
            split_factor: 1.6,
            percent_dense: 0.01,
            max_screen_radius: 0.0,
        }
    }
}

impl DensifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grad_threshold <= 0.0
            || self.opacity_prune <= 0.0
            || self.split_factor <= 0.0
            || self.densify_interval < 1
        {
            return Err(Error::InvalidParameter(
                "densify config requires positive thresholds".into(),
            ));
        }
        Ok(())
    }
}

/// How a mutation pass changed the cloud; lets the optimizer remap its
/// per-parameter state.
#[derive(Debug, Clone, Default)]
pub struct MutationSummary {
    /// Survival mask over the pre-mutation population.
    pub kept: Vec<bool>,
    /// Gaussians appended after the retained originals.
    pub appended: usize,
    pub clones: usize,
    pub splits: usize,
    pub pruned: usize,
}

/// Density-adaptive isotropic log-scales from nearest-neighbor distances.
/// Points whose mean 3-NN distance is below the corpus median count as
/// dense and get `dense_factor` times the distance; sparse points get the
/// distance unscaled.
pub fn init_scales(points: &[Vector3<f64>], dense_factor: f64) -> Result<Vec<Vector3<f64>>> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "scale initialization needs at least 4 points, got {}",
            points.len()
        )));
    }
    let n = points.len();
    let mut mean_knn = Vec::with_capacity(n);
    for i in 0..n {
        // Track the three smallest distances to other points.
        let mut best = [f64::INFINITY; 3];
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = (points[i] - points[j]).norm();
            if d < best[2] {
                best[2] = d;
                if best[2] < best[1] {
                    best.swap(1, 2);
                }
                if best[1] < best[0] {
                    best.swap(0, 1);
                }
            }
        }
        mean_knn.push((best[0] + best[1] + best[2]) / 3.0);
    }
    let mut sorted = mean_knn.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[n / 2];

    Ok(mean_knn
        .into_iter()
        .map(|d| {
            let factor = if d < median { dense_factor } else { 1.0 };
            // Floor keeps log well-defined for duplicate points.
            let s = (factor * d).max(1e-7);
            Vector3::from_element(s.ln())
        })
        .collect())
}

/// Multiply every scale axis exceeding tau by alpha, once. Returns the
/// number of clamped axes.
pub fn apply_scale_constraint(cloud: &mut GaussianCloud, cfg: &ConstraintConfig) -> usize {
    let ln_alpha = cfg.alpha.ln();
    let ln_tau = cfg.tau.ln();
    let mut clamped = 0;
    for ls in &mut cloud.log_scales {
        for axis in 0..3 {
            if ls[axis] > ln_tau {
                ls[axis] += ln_alpha;
                clamped += 1;
            }
        }
    }
    clamped
}

fn sample_from_covariance<R: Rng>(
    cloud: &GaussianCloud,
    index: usize,
    rng: &mut R,
) -> Vector3<f64> {
    let r = quat_to_rotation(&cloud.rotations[index]);
    let s = cloud.log_scales[index].map(f64::exp);
    let m = Matrix3::from_columns(&[r.column(0) * s[0], r.column(1) * s[1], r.column(2) * s[2]]);
    let z = Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    cloud.positions[index] + m * z
}

fn push_split_children<R: Rng>(
    children: &mut GaussianCloud,
    cloud: &GaussianCloud,
    index: usize,
    split_factor: f64,
    rng: &mut R,
) {
    let child_scales = cloud.log_scales[index].map(|v| v - split_factor.ln());
    for _ in 0..2 {
        let pos = sample_from_covariance(cloud, index, rng);
        children.push(
            pos,
            child_scales,
            cloud.rotations[index],
            cloud.opacities[index],
            cloud.colors[index],
            cloud.sh1.as_ref().map(|s| s[index]),
        );
    }
}

/// Split every aged Gaussian whose largest axis exceeds omega into two
/// children sampled from the parent's covariance. Returns the summary;
/// `summary.splits` is the number of parents split.
pub fn selective_split<R: Rng>(
    cloud: &mut GaussianCloud,
    cfg: &ConstraintConfig,
    rng: &mut R,
) -> MutationSummary {
    let n = cloud.len();
    let mut kept = vec![true; n];
    let mut children = GaussianCloud::default();
    if cloud.sh1.is_some() {
        children.sh1 = Some(Vec::new());
    }
    let mut splits = 0;
    for i in 0..n {
        if cloud.ages[i] < cfg.age_threshold {
            continue;
        }
        let max_scale = cloud.log_scales[i].map(f64::exp).max();
        if max_scale > cfg.omega {
            push_split_children(&mut children, cloud, i, 1.6, rng);
            kept[i] = false;
            splits += 1;
        }
    }
    let appended = children.len();
    if splits > 0 {
        cloud.retain_indices(&kept);
        cloud.extend_from(&children);
    }
    MutationSummary {
        kept,
        appended,
        clones: 0,
        splits,
        pruned: 0,
    }
}

/// One 3DGS densification pass followed by the post-split size filter:
/// clone small high-gradient Gaussians, split large ones, prune
/// transparent or oversized-on-screen ones, then clamp the scales of all
/// newly created Gaussians.
pub fn densify_and_prune<R: Rng>(
    cloud: &mut GaussianCloud,
    mean_position_grads: &[f64],
    max_screen_radii: &[f64],
    dcfg: &DensifyConfig,
    ccfg: &ConstraintConfig,
    scene_extent: f64,
    rng: &mut R,
) -> Result<MutationSummary> {
    let n = cloud.len();
    if mean_position_grads.len() != n || max_screen_radii.len() != n {
        return Err(Error::ContractViolation(
            "densification statistics do not match the cloud size".into(),
        ));
    }
    let split_limit = dcfg.percent_dense * scene_extent;
    let mut kept = vec![true; n];
    let mut children = GaussianCloud::default();
    if cloud.sh1.is_some() {
        children.sh1 = Some(Vec::new());
    }
    let mut clones = 0;
    let mut splits = 0;
    for i in 0..n {
        if mean_position_grads[i] >= dcfg.grad_threshold {
            let max_scale = cloud.log_scales[i].map(f64::exp).max();
            if max_scale <= split_limit {
                children.push(
                    cloud.positions[i],
                    cloud.log_scales[i],
                    cloud.rotations[i],
                    cloud.opacities[i],
                    cloud.colors[i],
                    cloud.sh1.as_ref().map(|s| s[i]),
                );
                clones += 1;
            } else {
                push_split_children(&mut children, cloud, i, dcfg.split_factor, rng);
                kept[i] = false;
                splits += 1;
            }
        }
    }
    let mut pruned = 0;
    for i in 0..n {
        if !kept[i] {
            continue;
        }
        let transparent = sigmoid(cloud.opacities[i]) < dcfg.opacity_prune;
        let oversized =
            dcfg.max_screen_radius > 0.0 && max_screen_radii[i] > dcfg.max_screen_radius;
        if transparent || oversized {
            kept[i] = false;
            pruned += 1;
        }
    }

    // Post-split filter: newly created Gaussians get the scale clamp
    // immediately.
    apply_scale_constraint(&mut children, ccfg);

    let appended = children.len();
    cloud.retain_indices(&kept);
    cloud.extend_from(&children);
    Ok(MutationSummary {
        kept,
        appended,
        clones,
        splits,
        pruned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::logit;
    use approx::assert_relative_eq;
    use nalgebra::Vector4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud_with_scales(scales: &[[f64; 3]]) -> GaussianCloud {
        let mut cloud = GaussianCloud::default();
        for s in scales {
            cloud.push(
                Vector3::zeros(),
                Vector3::new(s[0].ln(), s[1].ln(), s[2].ln()),
                Vector4::new(1.0, 0.0, 0.0, 0.0),
                logit(0.5),
                Vector3::new(0.5, 0.5, 0.5),
                None,
            );
        }
        cloud
    }

    #[test]
    fn init_scales_symmetric_tetrahedron() {
        // Unit tetrahedron: all pairwise distances equal, so all scales equal.
        let s = 1.0 / 2f64.sqrt();
        let points = vec![
            Vector3::new(1.0, 0.0, -s),
            Vector3::new(-1.0, 0.0, -s),
            Vector3::new(0.0, 1.0, s),
            Vector3::new(0.0, -1.0, s),
        ];
        let scales = init_scales(&points, 0.5).unwrap();
        for sc in &scales {
            assert_relative_eq!(sc[0], scales[0][0], epsilon = 1e-12);
            assert_relative_eq!(sc[0], sc[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn init_scales_dense_cluster_gets_smaller_scales() {
        let mut points = Vec::new();
        // Sparse cube of side 1 and dense cube of side 0.1, far apart.
        for corner in 0..8 {
            let c = |b: usize| ((corner >> b) & 1) as f64;
            points.push(Vector3::new(c(0), c(1), c(2)));
        }
        for corner in 0..8 {
            let c = |b: usize| ((corner >> b) & 1) as f64 * 0.1;
            points.push(Vector3::new(10.0 + c(0), c(1), c(2)));
        }
        let scales = init_scales(&points, 0.5).unwrap();
        // Brute-force oracle: every dense-cube scale strictly below every
        // sparse-cube scale.
        let sparse_min = scales[..8].iter().map(|s| s[0]).fold(f64::INFINITY, f64::min);
        let dense_max = scales[8..].iter().map(|s| s[0]).fold(f64::NEG_INFINITY, f64::max);
        assert!(dense_max < sparse_min);
    }

    #[test]
    fn init_scales_needs_four_points() {
        let points = vec![Vector3::zeros(); 3];
        assert!(matches!(
            init_scales(&points, 0.5),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn scale_clamp_paper_constants() {
        // axis 0.5 with tau=0.3, alpha=0.2 -> 0.1
        let mut cloud = cloud_with_scales(&[[0.5, 0.2, 0.2]]);
        let cfg = ConstraintConfig::default();
        let clamped = apply_scale_constraint(&mut cloud, &cfg);
        assert_eq!(clamped, 1);
        assert_relative_eq!(cloud.scale(0)[0], 0.1, epsilon = 1e-12);
        assert_relative_eq!(cloud.scale(0)[1], 0.2, epsilon = 1e-12);
    }

    #[test]
    fn scale_clamp_boundary_is_strict() {
        let mut cloud = cloud_with_scales(&[[0.3, 0.3, 0.3]]);
        let before = cloud.log_scales.clone();
        let clamped = apply_scale_constraint(&mut cloud, &ConstraintConfig::default());
        assert_eq!(clamped, 0);
        assert_eq!(cloud.log_scales, before);
    }

    #[test]
    fn scale_clamp_applies_once_per_pass() {
        // 2.0 -> 0.4 after one pass; still above tau but untouched until
        // the next scheduled pass.
        let mut cloud = cloud_with_scales(&[[2.0, 0.1, 0.1]]);
        let cfg = ConstraintConfig::default();
        apply_scale_constraint(&mut cloud, &cfg);
        assert_relative_eq!(cloud.scale(0)[0], 0.4, epsilon = 1e-12);
        apply_scale_constraint(&mut cloud, &cfg);
        assert_relative_eq!(cloud.scale(0)[0], 0.08, epsilon = 1e-12);
    }

    #[test]
    fn selective_split_requires_age_and_size() {
        let cfg = ConstraintConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);

        // All scales below omega: nothing happens.
        let mut small = cloud_with_scales(&[[0.2, 0.2, 0.2], [0.1, 0.1, 0.1]]);
        small.ages = vec![5000, 5000];
        assert_eq!(selective_split(&mut small, &cfg, &mut rng).splits, 0);
        assert_eq!(small.len(), 2);

        // Aged and oversized: one split, net growth by one.
        let mut aged = cloud_with_scales(&[[0.5, 0.1, 0.1]]);
        aged.ages = vec![5000];
        let summary = selective_split(&mut aged, &cfg, &mut rng);
        assert_eq!(summary.splits, 1);
        assert_eq!(aged.len(), 2);
        assert!(aged.ages.iter().all(|&a| a == 0));

        // Young but oversized: untouched.
        let mut young = cloud_with_scales(&[[0.5, 0.1, 0.1]]);
        young.ages = vec![10];
        assert_eq!(selective_split(&mut young, &cfg, &mut rng).splits, 0);
        assert_eq!(young.len(), 1);
    }

    #[test]
    fn densify_no_change_without_gradients() {
        let mut cloud = cloud_with_scales(&[[0.1; 3], [0.1; 3]]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let summary = densify_and_prune(
            &mut cloud,
            &[0.0, 0.0],
            &[1.0, 1.0],
            &DensifyConfig::default(),
            &ConstraintConfig::default(),
            1.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(summary.clones + summary.splits + summary.pruned, 0);
    }

    #[test]
    fn densify_clones_small_high_gradient_gaussian() {
        let mut cloud = cloud_with_scales(&[[0.001; 3]]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let summary = densify_and_prune(
            &mut cloud,
            &[1.0],
            &[1.0],
            &DensifyConfig::default(),
            &ConstraintConfig::default(),
            1.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(summary.clones, 1);
        assert_eq!(cloud.len(), 2);
    }

    #[test]
    fn split_children_are_clamped_by_post_filter() {
        // A huge high-gradient Gaussian splits; children at 2.0/1.6 = 1.25
        // still exceed tau and must come back already clamped.
        let mut cloud = cloud_with_scales(&[[2.0; 3]]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let summary = densify_and_prune(
            &mut cloud,
            &[1.0],
            &[1.0],
            &DensifyConfig::default(),
            &ConstraintConfig::default(),
            1.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(summary.splits, 1);
        assert_eq!(cloud.len(), 2);
        for i in 0..2 {
            assert_relative_eq!(cloud.scale(i).max(), 2.0 / 1.6 * 0.2, epsilon = 1e-9);
        }
    }

    #[test]
    fn population_accounting_holds() {
        let mut cloud = cloud_with_scales(&[[0.001; 3], [0.5; 3], [0.1; 3]]);
        cloud.opacities[2] = logit(0.001); // below the prune threshold
        let before = cloud.len();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let summary = densify_and_prune(
            &mut cloud,
            &[1.0, 1.0, 0.0],
            &[1.0; 3],
            &DensifyConfig::default(),
            &ConstraintConfig::default(),
            1.0,
            &mut rng,
        )
        .unwrap();
        // clone of #0 (+1), split of #1 (+2 children, -1 parent), prune #2 (-1)
        assert_eq!(summary.clones, 1);
        assert_eq!(summary.splits, 1);
        assert_eq!(summary.pruned, 1);
        assert_eq!(
            cloud.len(),
            before + summary.clones + summary.splits - summary.pruned
        );
    }
}
