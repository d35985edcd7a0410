//! Per-region visual representation: the region feature `o`, scene context
//! `g`, normalized location `l`, pooled appearance difference `dv` and the
//! location-difference block `dl`, concatenated in that order.

use serde::{Deserialize, Serialize};

use crate::dataset::{ContextSource, ObjectRegion, Scene};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::tensor::l2_norm;

pub const LOCATION_DIM: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonSet {
    SameCategory,
    DifferentCategory,
    AllObjects,
}

impl ComparisonSet {
    pub const ALL: [ComparisonSet; 3] = [
        ComparisonSet::SameCategory,
        ComparisonSet::DifferentCategory,
        ComparisonSet::AllObjects,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ComparisonSet::SameCategory => "same_category",
            ComparisonSet::DifferentCategory => "different_category",
            ComparisonSet::AllObjects => "all_objects",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Min,
    Max,
    Avg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComparisonConfig {
    pub comparison_set: ComparisonSet,
    pub pooling: Pooling,
    pub max_location_neighbors: usize,
    pub epsilon: f64,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            comparison_set: ComparisonSet::SameCategory,
            pooling: Pooling::Avg,
            max_location_neighbors: 5,
            epsilon: 1e-8,
        }
    }
}

impl ComparisonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_location_neighbors == 0 {
            return Err(Error::Config("max_location_neighbors must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Everything that shapes the input representation of the speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    #[serde(flatten)]
    pub comparison: ComparisonConfig,
    pub context_source: ContextSource,
    /// Include `dv` and `dl`; when false both blocks are zero (the
    /// comparison-free baseline).
    pub visual_comparison: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            comparison: ComparisonConfig::default(),
            context_source: ContextSource::Global,
            visual_comparison: true,
        }
    }
}

impl FeatureConfig {
    pub fn location_diff_dim(&self) -> usize {
        LOCATION_DIM * self.comparison.max_location_neighbors
    }

    /// Length of the concatenated representation for region features of
    /// dimension `d`.
    pub fn bundle_dim(&self, d: usize) -> usize {
        3 * d + LOCATION_DIM + self.location_diff_dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub l: [f64; LOCATION_DIM],
    pub dv: Vec<f64>,
    pub dl: Vec<f64>,
}

impl FeatureBundle {
    pub fn concat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.o.len() * 3 + LOCATION_DIM + self.dl.len());
        v.extend_from_slice(&self.o);
        v.extend_from_slice(&self.g);
        v.extend_from_slice(&self.l);
        v.extend_from_slice(&self.dv);
        v.extend_from_slice(&self.dl);
        v
    }
}

/// `[x_tl/W, y_tl/H, x_br/W, y_br/H, w·h/(W·H)]`
pub fn encode_location(bbox: &BoundingBox, width: f64, height: f64) -> Result<[f64; LOCATION_DIM]> {
    if !(width > 0.0 && height > 0.0) {
        return Err(Error::Domain(format!("image size {width}x{height}")));
    }
    if !bbox.within(width, height) {
        return Err(Error::Domain(format!(
            "box {bbox:?} outside {width}x{height} image"
        )));
    }
    Ok([
        bbox.x_tl / width,
        bbox.y_tl / height,
        bbox.x_br / width,
        bbox.y_br / height,
        bbox.area() / (width * height),
    ])
}

/// Regions other than `target` admitted by `set`, in their original order.
pub fn select_comparisons<'a>(
    target: &ObjectRegion,
    regions: &'a [ObjectRegion],
    set: ComparisonSet,
) -> Vec<&'a ObjectRegion> {
    regions
        .iter()
        .filter(|r| r.region_id != target.region_id)
        .filter(|r| match set {
            ComparisonSet::SameCategory => r.category_id == target.category_id,
            ComparisonSet::DifferentCategory => r.category_id != target.category_id,
            ComparisonSet::AllObjects => true,
        })
        .collect()
}

/// Pooled L2-normalized differences `(o_i − o_j)/‖o_i − o_j‖`. Pairs closer
/// than `epsilon` contribute a zero vector; no comparisons give zeros.
pub fn visual_difference(
    target: &ObjectRegion,
    comparisons: &[&ObjectRegion],
    cfg: &ComparisonConfig,
) -> Result<Vec<f64>> {
    let d = target.feature.len();
    let mut pooled = vec![0.0; d];
    if comparisons.is_empty() {
        return Ok(pooled);
    }
    if let Some(bad) = comparisons.iter().find(|c| c.feature.len() != d) {
        return Err(Error::dim(format!(
            "region {} has feature dimension {}, target {} has {d}",
            bad.region_id,
            bad.feature.len(),
            target.region_id
        )));
    }
    let init = match cfg.pooling {
        Pooling::Avg => 0.0,
        Pooling::Min => f64::INFINITY,
        Pooling::Max => f64::NEG_INFINITY,
    };
    pooled.iter_mut().for_each(|v| *v = init);
    let mut diff = vec![0.0; d];
    for other in comparisons {
        for (k, slot) in diff.iter_mut().enumerate() {
            *slot = target.feature[k] - other.feature[k];
        }
        let norm = l2_norm(&diff);
        if norm < cfg.epsilon {
            diff.iter_mut().for_each(|v| *v = 0.0);
        } else {
            diff.iter_mut().for_each(|v| *v /= norm);
        }
        for (p, &u) in pooled.iter_mut().zip(&diff) {
            *p = match cfg.pooling {
                Pooling::Avg => *p + u,
                Pooling::Min => p.min(u),
                Pooling::Max => p.max(u),
            };
        }
    }
    if cfg.pooling == Pooling::Avg {
        let n = comparisons.len() as f64;
        pooled.iter_mut().for_each(|v| *v /= n);
    }
    Ok(pooled)
}

/// Same-category neighbors sorted by center distance (ties by region id),
/// at most `max_location_neighbors`, each contributing
/// `[Δx_tl/w, Δy_tl/h, Δx_br/w, Δy_br/h, w_j·h_j/(w·h)]` with
/// `Δ = neighbor − target`. Unused blocks stay zero.
pub fn location_difference(
    target: &ObjectRegion,
    regions: &[ObjectRegion],
    cfg: &ComparisonConfig,
) -> Result<Vec<f64>> {
    let t = &target.bbox;
    let (w, h) = (t.width(), t.height());
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::Domain(format!(
            "region {} has a zero-area box",
            target.region_id
        )));
    }
    let mut neighbors = select_comparisons(target, regions, ComparisonSet::SameCategory);
    neighbors.sort_by(|a, b| {
        t.center_distance(&a.bbox)
            .total_cmp(&t.center_distance(&b.bbox))
            .then(a.region_id.cmp(&b.region_id))
    });
    let mut out = vec![0.0; LOCATION_DIM * cfg.max_location_neighbors];
    for (block, n) in out
        .chunks_exact_mut(LOCATION_DIM)
        .zip(neighbors.iter().take(cfg.max_location_neighbors))
    {
        let b = &n.bbox;
        block.copy_from_slice(&[
            (b.x_tl - t.x_tl) / w,
            (b.y_tl - t.y_tl) / h,
            (b.x_br - t.x_br) / w,
            (b.y_br - t.y_br) / h,
            b.area() / (w * h),
        ]);
    }
    Ok(out)
}

/// The scene context vector for `source`. A missing `global` row is
/// synthesized as the mean region feature; windowed scales must be stored.
pub fn context_vector(scene: &Scene, source: ContextSource, dim: usize) -> Result<Vec<f64>> {
    if source == ContextSource::None {
        return Ok(vec![0.0; dim]);
    }
    if let Some(v) = scene.context_features.get(&source) {
        if v.len() != dim {
            return Err(Error::dim(format!(
                "context {} of scene {} has dimension {}",
                source.name(),
                scene.scene_id,
                v.len()
            )));
        }
        return Ok(v.clone());
    }
    if source == ContextSource::Global {
        let mut mean = vec![0.0; dim];
        if scene.regions.is_empty() {
            return Ok(mean);
        }
        for r in &scene.regions {
            for (m, v) in mean.iter_mut().zip(&r.feature) {
                *m += v;
            }
        }
        let n = scene.regions.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        return Ok(mean);
    }
    Err(Error::MissingFeature(format!(
        "scene {} has no {} context row",
        scene.scene_id,
        source.name()
    )))
}

/// Builds the full representation for `target`, comparing it against the
/// other entries of `regions` (which must contain the target).
pub fn bundle_in(
    target: &ObjectRegion,
    regions: &[ObjectRegion],
    scene: &Scene,
    cfg: &FeatureConfig,
) -> Result<FeatureBundle> {
    if !regions.iter().any(|r| r.region_id == target.region_id) {
        return Err(Error::Domain(format!(
            "region {} is not among the comparison regions",
            target.region_id
        )));
    }
    let d = target.feature.len();
    let l = encode_location(&target.bbox, scene.width, scene.height)?;
    let g = context_vector(scene, cfg.context_source, d)?;
    let (dv, dl) = if cfg.visual_comparison {
        let comps = select_comparisons(target, regions, cfg.comparison.comparison_set);
        (
            visual_difference(target, &comps, &cfg.comparison)?,
            location_difference(target, regions, &cfg.comparison)?,
        )
    } else {
        (vec![0.0; d], vec![0.0; cfg.location_diff_dim()])
    };
    Ok(FeatureBundle {
        o: target.feature.clone(),
        g,
        l,
        dv,
        dl,
    })
}

/// [`bundle_in`] against all regions of the target's scene.
pub fn bundle(target: &ObjectRegion, scene: &Scene, cfg: &FeatureConfig) -> Result<FeatureBundle> {
    bundle_in(target, &scene.regions, scene, cfg)
}

/// Representations of every region of `scene`, in region order.
pub fn scene_bundles(scene: &Scene, cfg: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    scene
        .regions
        .iter()
        .map(|r| bundle(r, scene, cfg).map(|b| b.concat()))
        .collect()
}
