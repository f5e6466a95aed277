//! Subdivision of a large scene into an n x n x n block grid: robust
//! bounds, per-block point assignment, outlier discard, camera
//! classification, bundle export, and merged-scene assembly.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::GaussianCloud;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BoundingBox {
    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        )
    }

    pub fn half_diagonal(&self) -> f64 {
        Vector3::new(
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        )
        .norm()
            / 2.0
    }

    /// Half-open membership with the global top face closed.
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn expanded(&self, factor: f64) -> BoundingBox {
        let c = self.center();
        let mut out = *self;
        for a in 0..3 {
            let half = 0.5 * (self.max[a] - self.min[a]) * factor;
            out.min[a] = c[a] - half;
            out.max[a] = c[a] + half;
        }
        out
    }
}

/// One cell of the subdivision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Block {
    pub index: [usize; 3],
    pub bounds: BoundingBox,
    /// Indices into the input point set, in input order.
    pub point_ids: Vec<usize>,
    /// Out-of-box points nearest to this block, pending the outlier filter.
    pub outlier_candidates: Vec<usize>,
    pub camera_ids: Vec<u32>,
    pub trainable: bool,
}

impl Block {
    pub fn center(&self) -> Vector3<f64> {
        self.bounds.center()
    }

    pub fn dir_name(&self) -> String {
        format!(
            "block_{}_{}_{}",
            self.index[0], self.index[1], self.index[2]
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenePartition {
    pub n: usize,
    pub bbox: BoundingBox,
    /// Blocks in (k-major last) i + n*j + n*n*k order.
    pub blocks: Vec<Block>,
    pub discarded: Vec<usize>,
}

impl ScenePartition {
    pub fn block(&self, i: usize, j: usize, k: usize) -> &Block {
        &self.blocks[i + self.n * j + self.n * self.n * k]
    }
}

/// Robust bounding box: per-axis percentile bounds (p from each end)
/// expanded by 1%, with degenerate axes widened to a minimum extent.
pub fn compute_bounds(points: &[Vector3<f64>], percentile: f64) -> Result<BoundingBox> {
    if points.is_empty() {
        return Err(Error::InsufficientData(
            "cannot bound an empty point set".into(),
        ));
    }
    let mut min = [0.0; 3];
    let mut max = [0.0; 3];
    let n = points.len();
    for a in 0..3 {
        let mut vals: Vec<f64> = points.iter().map(|p| p[a]).collect();
        vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let lo_idx = ((percentile / 100.0) * (n - 1) as f64).round() as usize;
        let hi_idx = (((100.0 - percentile) / 100.0) * (n - 1) as f64).round() as usize;
        min[a] = vals[lo_idx.min(n - 1)];
        max[a] = vals[hi_idx.min(n - 1)];
    }
    for a in 0..3 {
        let extent = max[a] - min[a];
        if extent < 1e-3 {
            let c = 0.5 * (min[a] + max[a]);
            min[a] = c - 5e-4;
            max[a] = c + 5e-4;
        } else {
            min[a] -= 0.01 * extent;
            max[a] += 0.01 * extent;
        }
    }
    Ok(BoundingBox { min, max })
}

/// Split the box into n^3 equal blocks and assign every in-box point by
/// the half-open interval test (top faces closed on the last block).
/// Out-of-box points become outlier candidates of the nearest block.
pub fn subdivide(points: &[Vector3<f64>], bbox: &BoundingBox, n: usize) -> Result<ScenePartition> {
    if n < 1 {
        return Err(Error::InvalidParameter("block count must be >= 1".into()));
    }
    let step: Vec<f64> = (0..3).map(|a| (bbox.max[a] - bbox.min[a]) / n as f64).collect();
    let mut blocks = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let idx = [i, j, k];
                let mut bmin = [0.0; 3];
                let mut bmax = [0.0; 3];
                for a in 0..3 {
                    bmin[a] = bbox.min[a] + idx[a] as f64 * step[a];
                    bmax[a] = if idx[a] == n - 1 {
                        bbox.max[a]
                    } else {
                        bbox.min[a] + (idx[a] + 1) as f64 * step[a]
                    };
                }
                blocks.push(Block {
                    index: idx,
                    bounds: BoundingBox {
                        min: bmin,
                        max: bmax,
                    },
                    point_ids: Vec::new(),
                    outlier_candidates: Vec::new(),
                    camera_ids: Vec::new(),
                    trainable: false,
                });
            }
        }
    }
    let clamp_axis = |p: f64, a: usize| -> usize {
        if step[a] <= 0.0 {
            return 0;
        }
        (((p - bbox.min[a]) / step[a]).floor().max(0.0) as usize).min(n - 1)
    };
    for (pid, p) in points.iter().enumerate() {
        let in_box = (0..3).all(|a| p[a] >= bbox.min[a] && p[a] <= bbox.max[a])
            && (0..3).all(|a| p[a] < bbox.max[a] || clamp_axis(p[a], a) == n - 1);
        let bi = clamp_axis(p.x, 0);
        let bj = clamp_axis(p.y, 1);
        let bk = clamp_axis(p.z, 2);
        let slot = bi + n * bj + n * n * bk;
        if in_box {
            blocks[slot].point_ids.push(pid);
        } else {
            blocks[slot].outlier_candidates.push(pid);
        }
    }
    Ok(ScenePartition {
        n,
        bbox: *bbox,
        blocks,
        discarded: Vec::new(),
    })
}

/// Discard every point farther from its block center than
/// theta = multiplier * block half-diagonal. Out-of-box candidates within
/// the threshold are adopted into their block.
pub fn filter_outliers(
    partition: &mut ScenePartition,
    points: &[Vector3<f64>],
    theta_multiplier: f64,
) {
    let mut discarded = Vec::new();
    for block in &mut partition.blocks {
        let center = block.bounds.center();
        let theta = theta_multiplier * block.bounds.half_diagonal();
        // Member points sit inside the block, so with multiplier >= 1 only
        // out-of-box candidates can actually be discarded.
        let members = std::mem::take(&mut block.point_ids);
        let candidates = std::mem::take(&mut block.outlier_candidates);
        let mut kept: Vec<usize> = Vec::with_capacity(members.len());
        for pid in members.into_iter().chain(candidates) {
            if (points[pid] - center).norm() > theta {
                discarded.push(pid);
            } else {
                kept.push(pid);
            }
        }
        kept.sort_unstable();
        block.point_ids = kept;
    }
    discarded.sort_unstable();
    partition.discarded = discarded;
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraAssignConfig {
    /// Minimum visible retained points inside a block to claim a camera.
    pub min_views: usize,
    /// Block bounds expansion factor for the position rule.
    pub bounds_expand: f64,
}

impl Default for CameraAssignConfig {
    fn default() -> Self {
        CameraAssignConfig {
            min_views: 20,
            bounds_expand: 1.2,
        }
    }
}

/// Assign cameras to blocks: a camera belongs to a block when at least
/// `min_views` of its visible points lie there, or when its position lies
/// within the block's expanded bounds. A camera may land in several
/// blocks; blocks without cameras (or without points) are untrainable.
pub fn assign_cameras(
    partition: &mut ScenePartition,
    cameras: &[(u32, Vector3<f64>)],
    visibility: &[(u32, Vec<usize>)],
    cfg: &CameraAssignConfig,
) {
    let n = partition.n;
    // Point id -> block slot for the retained points.
    let mut point_block = std::collections::HashMap::new();
    for (slot, block) in partition.blocks.iter().enumerate() {
        for &pid in &block.point_ids {
            point_block.insert(pid, slot);
        }
    }
    let mut per_block: Vec<Vec<u32>> = vec![Vec::new(); n * n * n];
    for (cam_id, position) in cameras {
        let visible = visibility
            .iter()
            .find(|(id, _)| id == cam_id)
            .map(|(_, pts)| pts.as_slice())
            .unwrap_or(&[]);
        let mut counts = vec![0usize; n * n * n];
        for pid in visible {
            if let Some(&slot) = point_block.get(pid) {
                counts[slot] += 1;
            }
        }
        for (slot, block) in partition.blocks.iter().enumerate() {
            let by_views = counts[slot] >= cfg.min_views;
            let by_position = block.bounds.expanded(cfg.bounds_expand).contains(position);
            if by_views || by_position {
                per_block[slot].push(*cam_id);
            }
        }
    }
    for (block, mut cams) in partition.blocks.iter_mut().zip(per_block) {
        cams.sort_unstable();
        block.camera_ids = cams;
        block.trainable = !block.camera_ids.is_empty() && !block.point_ids.is_empty();
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct MergeReport {
    pub merged_blocks: usize,
    pub missing_blocks: Vec<[usize; 3]>,
    pub culled: usize,
}

/// Concatenate trained per-block clouds. With `cull_boundary` set,
/// Gaussians that drifted outside their source block's bounds are
/// dropped to avoid duplicated mass at block seams. Missing blocks are
/// tolerated and recorded.
pub fn merge_blocks(
    block_clouds: &[([usize; 3], Option<GaussianCloud>)],
    partition: &ScenePartition,
    cull_boundary: bool,
) -> (GaussianCloud, MergeReport) {
    let mut merged = GaussianCloud::default();
    let mut report = MergeReport::default();
    for (index, cloud) in block_clouds {
        let Some(cloud) = cloud else {
            report.missing_blocks.push(*index);
            continue;
        };
        let bounds = partition.block(index[0], index[1], index[2]).bounds;
        if cull_boundary {
            let keep: Vec<bool> = cloud
                .positions
                .iter()
                .map(|p| bounds.contains(p))
                .collect();
            let mut kept = cloud.clone();
            let before = kept.len();
            kept.retain_indices(&keep);
            report.culled += before - kept.len();
            merged.extend_from(&kept);
        } else {
            merged.extend_from(cloud);
        }
        report.merged_blocks += 1;
    }
    (merged, report)
}
