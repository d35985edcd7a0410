//! Localizing the referred region: every candidate is scored by the untied
//! log-likelihood of the expression given its representation, and the best
//! candidate wins (lowest region id on ties).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::context::{bundle_in, scene_bundles, FeatureConfig};
use crate::dataset::{Dataset, FeatureFile, ObjectRegion, Scene, Vocabulary};
use crate::error::{Error, IntegrityKind, Result};
pub use crate::geometry::iou;
use crate::geometry::BoundingBox;
use crate::parallel::par_map;
use crate::speaker::Speaker;

/// IoU a detected box must exceed to count as the referred region.
pub const IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub region_id: u64,
    pub bbox: BoundingBox,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub region_id: u64,
    pub score: f64,
}

/// Sorts scores descending; equal scores are ordered by region id.
pub fn rank_scores(mut scored: Vec<Ranked>) -> Vec<Ranked> {
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.region_id.cmp(&b.region_id)));
    scored
}

/// Scores every candidate for an encoded expression (ending in `END`).
pub fn comprehend(speaker: &Speaker, tokens: &[usize], candidates: &[Candidate]) -> Result<Vec<Ranked>> {
    if candidates.is_empty() {
        return Err(Error::Domain("no candidates to rank".into()));
    }
    let scored = candidates
        .iter()
        .map(|c| {
            Ok(Ranked {
                region_id: c.region_id,
                score: speaker.sentence_logprob(&c.features, tokens)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_scores(scored))
}

/// Ground-truth candidates: every region of the scene.
pub fn ground_truth_candidates(scene: &Scene, cfg: &FeatureConfig) -> Result<Vec<Candidate>> {
    Ok(scene
        .regions
        .iter()
        .zip(scene_bundles(scene, cfg)?)
        .map(|(r, features)| Candidate {
            region_id: r.region_id,
            bbox: r.bbox,
            features,
        })
        .collect())
}

/// Detected candidates; comparisons are made among the detections.
pub fn detection_candidates(scene: &Scene, detected: &[ObjectRegion], cfg: &FeatureConfig) -> Result<Vec<Candidate>> {
    detected
        .iter()
        .map(|d| {
            Ok(Candidate {
                region_id: d.region_id,
                bbox: d.bbox,
                features: bundle_in(d, detected, scene, cfg)?.concat(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub id: u64,
    /// `[x, y, width, height]`
    pub bbox: [f64; 4],
    pub category_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScene {
    pub image_id: u64,
    pub candidates: Vec<DetectionRecord>,
}

/// Detector output: boxes per image plus a feature file (path relative to
/// the JSON file) holding a row per detection id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFile {
    pub feature_file: String,
    pub scenes: Vec<DetectionScene>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Detections {
    pub by_scene: BTreeMap<u64, Vec<ObjectRegion>>,
}

impl Detections {
    /// Boxes are clipped to the image; every id needs a feature row of the
    /// dataset's dimension.
    pub fn from_parts(file: &DetectionFile, features: &FeatureFile, dataset: &Dataset) -> Result<Self> {
        let fail = |m: String| Error::integrity(IntegrityKind::Feature, m);
        if features.dim != dataset.feature_dim {
            return Err(fail(format!(
                "detection features have dimension {}, dataset has {}",
                features.dim, dataset.feature_dim
            )));
        }
        let mut by_scene = BTreeMap::new();
        for ds in &file.scenes {
            let scene = dataset.scene(ds.image_id).ok_or_else(|| {
                Error::integrity(
                    IntegrityKind::Annotation,
                    format!("detections reference unknown image {}", ds.image_id),
                )
            })?;
            let mut regions = Vec::with_capacity(ds.candidates.len());
            for c in &ds.candidates {
                let row = features
                    .rows
                    .get(&c.id)
                    .ok_or_else(|| fail(format!("no feature row for detection {}", c.id)))?;
                let [x, y, w, h] = c.bbox;
                let bbox = BoundingBox::new(
                    x.max(0.0),
                    y.max(0.0),
                    (x + w).min(scene.width),
                    (y + h).min(scene.height),
                )?;
                regions.push(ObjectRegion {
                    region_id: c.id,
                    scene_id: ds.image_id,
                    category_id: c.category_id,
                    bbox,
                    feature: row.iter().map(|&v| v as f64).collect(),
                });
            }
            regions.sort_by_key(|r| r.region_id);
            if by_scene.insert(ds.image_id, regions).is_some() {
                return Err(fail(format!("image {} listed twice", ds.image_id)));
            }
        }
        Ok(Detections { by_scene })
    }

    pub fn load(path: impl AsRef<Path>, dataset: &Dataset) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: DetectionFile = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        let feat_path = path.parent().unwrap_or(Path::new(".")).join(&file.feature_file);
        let features = FeatureFile::load(&feat_path)?;
        Self::from_parts(&file, &features, dataset)
    }
}

#[derive(Debug, Clone)]
pub enum CandidateSource {
    GroundTruth,
    Detections(Detections),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub expression_id: u64,
    pub region_id: u64,
    pub predicted: Option<u64>,
    pub correct: bool,
    pub kind: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComprehensionReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub per_kind: BTreeMap<String, Tally>,
    /// Scenes without detections; their expressions count as failures.
    pub missing_scenes: Vec<u64>,
    pub predictions: Vec<Prediction>,
}

/// Accuracy over every expression of the regions in `region_set`.
pub fn evaluate_comprehension(
    dataset: &Dataset,
    vocab: &Vocabulary,
    speaker: &Speaker,
    features: &FeatureConfig,
    region_set: &BTreeSet<u64>,
    source: &CandidateSource,
    workers: usize,
) -> Result<ComprehensionReport> {
    let scenes: Vec<&Scene> = dataset
        .scenes
        .iter()
        .filter(|s| s.regions.iter().any(|r| region_set.contains(&r.region_id)))
        .collect();
    let per_scene = par_map(&scenes, workers, |scene| {
        let candidates = match source {
            CandidateSource::GroundTruth => Some(ground_truth_candidates(scene, features)?),
            CandidateSource::Detections(d) => match d.by_scene.get(&scene.scene_id) {
                Some(det) if !det.is_empty() => Some(detection_candidates(scene, det, features)?),
                _ => None,
            },
        };
        let mut preds = Vec::new();
        for r in scene.regions.iter().filter(|r| region_set.contains(&r.region_id)) {
            for e in dataset.expressions_for(r.region_id) {
                let (predicted, correct) = match &candidates {
                    None => (None, false),
                    Some(c) => {
                        let top = comprehend(speaker, &vocab.encode_expression(&e.tokens), c)?[0];
                        let correct = match source {
                            CandidateSource::GroundTruth => top.region_id == r.region_id,
                            CandidateSource::Detections(_) => {
                                let b = c.iter().find(|c| c.region_id == top.region_id).expect("ranked candidate").bbox;
                                iou(&b, &r.bbox) > IOU_THRESHOLD
                            }
                        };
                        (Some(top.region_id), correct)
                    }
                };
                preds.push(Prediction {
                    expression_id: e.expression_id,
                    region_id: r.region_id,
                    predicted,
                    correct,
                    kind: e.kind.clone(),
                });
            }
        }
        Ok((scene.scene_id, candidates.is_none(), preds))
    })?;

    let mut report = ComprehensionReport::default();
    for (scene_id, missing, preds) in per_scene {
        if missing && !preds.is_empty() {
            report.missing_scenes.push(scene_id);
        }
        for p in preds {
            report.total += 1;
            report.correct += p.correct as usize;
            let kind = p.kind.clone().unwrap_or_else(|| "unlabeled".into());
            let t = report.per_kind.entry(kind).or_default();
            t.total += 1;
            t.correct += p.correct as usize;
            report.predictions.push(p);
        }
    }
    report.accuracy = Tally {
        correct: report.correct,
        total: report.total,
    }
    .accuracy();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speaker::{SpeakerConfig, OUT_BIAS, OUT_WEIGHT};

    fn cand(id: u64, f: Vec<f64>) -> Candidate {
        Candidate {
            region_id: id,
            bbox: BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
            features: f,
        }
    }

    fn speaker() -> Speaker {
        Speaker::new(
            SpeakerConfig {
                word_dim: 3,
                visual_dim: 3,
                hidden_dim: 4,
                vocab_size: 6,
                feature_dim: 3,
                hdif_epsilon: 1e-8,
            },
            7,
        )
        .unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = BoundingBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let b = BoundingBox::new(1.0, 1.0, 3.0, 3.0).unwrap();
        let far = BoundingBox::new(5.0, 5.0, 6.0, 6.0).unwrap();
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &far), 0.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn hand_set_scores_rank() {
        let r = rank_scores(vec![
            Ranked { region_id: 10, score: -1.2 },
            Ranked { region_id: 11, score: -0.3 },
            Ranked { region_id: 12, score: -2.0 },
        ]);
        assert_eq!(r.iter().map(|x| x.region_id).collect::<Vec<_>>(), vec![11, 10, 12]);
    }

    #[test]
    fn single_candidate_and_empty() {
        let s = speaker();
        let r = comprehend(&s, &[3, 1], &[cand(4, vec![0.1, 0.2, 0.3])]).unwrap();
        assert_eq!(r[0].region_id, 4);
        assert!(comprehend(&s, &[3, 1], &[]).is_err());
    }

    #[test]
    fn duplicate_of_true_region_resolved_by_lowest_id() {
        let s = speaker();
        let f = vec![0.4, -0.1, 0.2];
        let r = comprehend(&s, &[4, 1], &[cand(9, f.clone()), cand(3, f.clone()), cand(5, vec![0.0, 0.9, -0.9])]).unwrap();
        let top_two: Vec<u64> = r.iter().filter(|x| x.score == r[0].score).map(|x| x.region_id).collect();
        if top_two.len() == 2 {
            assert_eq!(r[0].region_id, 3);
        } else {
            // the distinct candidate scored higher; ties still ordered by id
            let pos3 = r.iter().position(|x| x.region_id == 3).unwrap();
            let pos9 = r.iter().position(|x| x.region_id == 9).unwrap();
            assert!(pos3 < pos9);
        }
    }

    #[test]
    fn order_invariance() {
        let s = speaker();
        let cs = vec![cand(1, vec![0.1, 0.2, 0.3]), cand(2, vec![-0.5, 0.0, 0.5]), cand(3, vec![0.9, 0.9, -0.1])];
        let mut rev = cs.clone();
        rev.reverse();
        assert_eq!(comprehend(&s, &[5, 3, 1], &cs).unwrap(), comprehend(&s, &[5, 3, 1], &rev).unwrap());
    }

    #[test]
    fn uniform_model_ties_pick_lowest_id() {
        let mut s = speaker();
        s.params.value_mut(OUT_WEIGHT).unwrap().data_mut().fill(0.0);
        s.params.value_mut(OUT_BIAS).unwrap().data_mut().fill(0.0);
        let r = comprehend(&s, &[3, 1], &[cand(8, vec![1.0, 0.0, 0.0]), cand(2, vec![0.0, 1.0, 0.0])]).unwrap();
        assert_eq!(r[0].region_id, 2);
    }
}
