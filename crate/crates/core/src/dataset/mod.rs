//! Scenes, regions and referring expressions, plus the on-disk formats they
//! are loaded from.
//!
//! The annotation file is one JSON document:
//!
//! ```json
//! {
//!   "categories":  [{"id": 1, "name": "person"}],
//!   "images":      [{"id": 7, "width": 640, "height": 480}],
//!   "annotations": [{"id": 70, "image_id": 7, "category_id": 1, "bbox": [x, y, w, h]}],
//!   "refs":        [{"id": 700, "ann_id": 70, "raw": "the man on the left",
//!                    "tokens": ["the", "man", "on", "the", "left"], "kind": "absolute"}]
//! }
//! ```
//!
//! `categories`, `tokens` and `kind` are optional. Region features live in a
//! separate [`FeatureFile`].

pub mod features;
pub mod split;
pub mod vocab;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IntegrityKind, Result};
use crate::geometry::BoundingBox;

pub use features::{context_key, parse_context_key, FeatureFile, CONTEXT_BIT};
pub use split::{split_people_vs_objects, split_per_object, PeopleObjectsSplit, SplitFile};
pub use vocab::{build_vocabulary, tokenize, Vocabulary, BOS, END, UNK};

/// Where the scene-level context vector `g` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextSource {
    None,
    Global,
    Scale2,
    Scale3,
    Scale4,
}

impl ContextSource {
    pub const ALL: [ContextSource; 5] = [
        ContextSource::None,
        ContextSource::Global,
        ContextSource::Scale2,
        ContextSource::Scale3,
        ContextSource::Scale4,
    ];

    pub fn tag(self) -> Option<u64> {
        match self {
            ContextSource::None => None,
            ContextSource::Global => Some(0),
            ContextSource::Scale2 => Some(2),
            ContextSource::Scale3 => Some(3),
            ContextSource::Scale4 => Some(4),
        }
    }

    pub fn from_tag(tag: u64) -> Option<Self> {
        match tag {
            0 => Some(ContextSource::Global),
            2 => Some(ContextSource::Scale2),
            3 => Some(ContextSource::Scale3),
            4 => Some(ContextSource::Scale4),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ContextSource::None => "none",
            ContextSource::Global => "global",
            ContextSource::Scale2 => "scale2",
            ContextSource::Scale3 => "scale3",
            ContextSource::Scale4 => "scale4",
        }
    }
}

impl std::str::FromStr for ContextSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ContextSource::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown context source {s}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRegion {
    pub region_id: u64,
    pub scene_id: u64,
    pub category_id: u64,
    pub bbox: BoundingBox,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: u64,
    pub width: f64,
    pub height: f64,
    pub regions: Vec<ObjectRegion>,
    pub context_features: BTreeMap<ContextSource, Vec<f64>>,
}

impl Scene {
    pub fn region(&self, region_id: u64) -> Option<&ObjectRegion> {
        self.regions.iter().find(|r| r.region_id == region_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefExpression {
    pub expression_id: u64,
    pub region_id: u64,
    pub tokens: Vec<String>,
    pub raw_text: String,
    /// Free-form label carried through from the annotation file
    /// (the synthetic generator writes `absolute`, `relative` or `location`).
    pub kind: Option<String>,
}

// --- annotation schema -------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRecord {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefRecord {
    pub id: u64,
    pub ann_id: u64,
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<CategoryRecord>>,
    #[serde(default)]
    pub images: Vec<ImageRecord>,
    #[serde(default)]
    pub annotations: Vec<AnnotationRecord>,
    #[serde(default)]
    pub refs: Vec<RefRecord>,
}

impl AnnotationFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotation records serialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

// --- dataset -----------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub categories: BTreeMap<u64, String>,
    pub scenes: Vec<Scene>,
    pub expressions: Vec<RefExpression>,
    pub feature_dim: usize,
    region_index: HashMap<u64, (usize, usize)>,
    refs_by_region: HashMap<u64, Vec<usize>>,
}

fn ann_err(msg: impl Into<String>) -> Error {
    Error::integrity(IntegrityKind::Annotation, msg)
}

impl Dataset {
    /// Cross-links annotations with feature rows. Dangling references,
    /// duplicate ids and missing features are integrity errors.
    pub fn from_parts(ann: &AnnotationFile, features: &FeatureFile) -> Result<Self> {
        let categories: BTreeMap<u64, String> = match &ann.categories {
            Some(list) => {
                let mut map = BTreeMap::new();
                for c in list {
                    if map.insert(c.id, c.name.clone()).is_some() {
                        return Err(ann_err(format!("duplicate category {}", c.id)));
                    }
                }
                map
            }
            None => ann
                .annotations
                .iter()
                .map(|a| (a.category_id, format!("category{}", a.category_id)))
                .collect(),
        };

        let mut scene_pos: HashMap<u64, usize> = HashMap::new();
        let mut scenes: Vec<Scene> = Vec::with_capacity(ann.images.len());
        for img in &ann.images {
            if img.id & CONTEXT_BIT != 0 || img.id >= 1 << 60 {
                return Err(ann_err(format!("image id {} outside the usable range", img.id)));
            }
            if !(img.width > 0.0 && img.height > 0.0) {
                return Err(ann_err(format!("image {} has non-positive size", img.id)));
            }
            if scene_pos.insert(img.id, scenes.len()).is_some() {
                return Err(ann_err(format!("duplicate image id {}", img.id)));
            }
            scenes.push(Scene {
                scene_id: img.id,
                width: img.width,
                height: img.height,
                regions: Vec::new(),
                context_features: BTreeMap::new(),
            });
        }

        let dim = features.dim;
        let mut seen = HashSet::new();
        for a in &ann.annotations {
            if !seen.insert(a.id) {
                return Err(ann_err(format!("duplicate region id {}", a.id)));
            }
            if a.id & CONTEXT_BIT != 0 {
                return Err(ann_err(format!("region id {} uses the reserved bit", a.id)));
            }
            let &si = scene_pos
                .get(&a.image_id)
                .ok_or_else(|| ann_err(format!("region {} references unknown image {}", a.id, a.image_id)))?;
            if !categories.contains_key(&a.category_id) {
                return Err(ann_err(format!(
                    "region {} has unknown category {}",
                    a.id, a.category_id
                )));
            }
            let bbox = BoundingBox::from_xywh(a.bbox).map_err(|e| ann_err(format!("region {}: {e}", a.id)))?;
            let scene = &mut scenes[si];
            if !bbox.within(scene.width, scene.height) {
                return Err(ann_err(format!("region {} lies outside its image", a.id)));
            }
            let row = features.rows.get(&a.id).ok_or_else(|| {
                Error::integrity(
                    IntegrityKind::Feature,
                    format!("region {} has no feature row", a.id),
                )
            })?;
            scene.regions.push(ObjectRegion {
                region_id: a.id,
                scene_id: a.image_id,
                category_id: a.category_id,
                bbox,
                feature: row.iter().map(|&v| v as f64).collect(),
            });
        }

        for (&key, row) in features.rows.range(CONTEXT_BIT..) {
            let Some((scene_id, source)) = parse_context_key(key) else {
                return Err(Error::integrity(
                    IntegrityKind::Feature,
                    format!("unrecognised context key {key:#x}"),
                ));
            };
            if let Some(&si) = scene_pos.get(&scene_id) {
                scenes[si]
                    .context_features
                    .insert(source, row.iter().map(|&v| v as f64).collect());
            }
        }

        scenes.sort_by_key(|s| s.scene_id);
        for s in &mut scenes {
            s.regions.sort_by_key(|r| r.region_id);
        }
        let mut region_index = HashMap::new();
        for (si, s) in scenes.iter().enumerate() {
            for (ri, r) in s.regions.iter().enumerate() {
                region_index.insert(r.region_id, (si, ri));
            }
        }

        let mut expressions = Vec::with_capacity(ann.refs.len());
        let mut refs_by_region: HashMap<u64, Vec<usize>> = HashMap::new();
        let mut seen_refs = HashSet::new();
        for r in &ann.refs {
            if !seen_refs.insert(r.id) {
                return Err(ann_err(format!("duplicate expression id {}", r.id)));
            }
            if !region_index.contains_key(&r.ann_id) {
                return Err(ann_err(format!(
                    "expression {} references unknown region {}",
                    r.id, r.ann_id
                )));
            }
            let tokens = match &r.tokens {
                Some(t) => t.iter().map(|s| s.to_lowercase()).collect(),
                None => tokenize(&r.raw),
            };
            if tokens.is_empty() {
                return Err(ann_err(format!("expression {} has no tokens", r.id)));
            }
            refs_by_region.entry(r.ann_id).or_default().push(expressions.len());
            expressions.push(RefExpression {
                expression_id: r.id,
                region_id: r.ann_id,
                tokens,
                raw_text: r.raw.clone(),
                kind: r.kind.clone(),
            });
        }

        Ok(Dataset {
            categories,
            scenes,
            expressions,
            feature_dim: dim,
            region_index,
            refs_by_region,
        })
    }

    pub fn region(&self, region_id: u64) -> Option<&ObjectRegion> {
        self.region_index
            .get(&region_id)
            .map(|&(s, r)| &self.scenes[s].regions[r])
    }

    pub fn scene_of(&self, region_id: u64) -> Option<&Scene> {
        self.region_index.get(&region_id).map(|&(s, _)| &self.scenes[s])
    }

    pub fn scene(&self, scene_id: u64) -> Option<&Scene> {
        self.scenes
            .binary_search_by_key(&scene_id, |s| s.scene_id)
            .ok()
            .map(|i| &self.scenes[i])
    }

    pub fn expressions_for(&self, region_id: u64) -> impl Iterator<Item = &RefExpression> {
        self.refs_by_region
            .get(&region_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.expressions[i])
    }

    pub fn num_regions(&self) -> usize {
        self.region_index.len()
    }

    pub fn category_id(&self, name: &str) -> Option<u64> {
        self.categories
            .iter()
            .find(|(_, n)| n.as_str() == name)
            .map(|(&id, _)| id)
    }
}

pub fn load_dataset(annotation_path: impl AsRef<Path>, feature_path: impl AsRef<Path>) -> Result<Dataset> {
    let ann = AnnotationFile::load(annotation_path)?;
    let features = FeatureFile::load(feature_path)?;
    Dataset::from_parts(&ann, &features)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// One 100×80 scene, two regions (two giraffes), three expressions.
    pub fn small() -> (AnnotationFile, FeatureFile) {
        let ann = AnnotationFile {
            categories: Some(vec![CategoryRecord {
                id: 25,
                name: "giraffe".into(),
            }]),
            images: vec![ImageRecord {
                id: 1,
                width: 100.0,
                height: 80.0,
            }],
            annotations: vec![
                AnnotationRecord {
                    id: 10,
                    image_id: 1,
                    category_id: 25,
                    bbox: [5.0, 5.0, 20.0, 30.0],
                },
                AnnotationRecord {
                    id: 11,
                    image_id: 1,
                    category_id: 25,
                    bbox: [50.0, 10.0, 25.0, 40.0],
                },
            ],
            refs: vec![
                RefRecord {
                    id: 100,
                    ann_id: 10,
                    raw: "Giraffe on the left".into(),
                    tokens: None,
                    kind: None,
                },
                RefRecord {
                    id: 101,
                    ann_id: 10,
                    raw: "small giraffe".into(),
                    tokens: None,
                    kind: None,
                },
                RefRecord {
                    id: 102,
                    ann_id: 11,
                    raw: "tall giraffe".into(),
                    tokens: Some(vec!["tall".into(), "giraffe".into()]),
                    kind: Some("absolute".into()),
                },
            ],
        };
        let mut feats = FeatureFile::new(3);
        feats.insert(10, vec![1.0, 0.0, 0.5]).unwrap();
        feats.insert(11, vec![0.0, 1.0, 0.25]).unwrap();
        (ann, feats)
    }
}
