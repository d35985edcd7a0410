//! Decoding expressions for held-out regions and scoring them against the
//! human references.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::context::{scene_bundles, FeatureConfig};
use crate::dataset::{Dataset, Scene, Vocabulary};
use crate::error::Result;
use crate::metrics::{corpus_scores, duplicate_rate, GenerationScores};
use crate::parallel::par_map;
use crate::speaker::{DecodeMode, Speaker};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    pub tied: bool,
    pub max_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            mode: DecodeMode::Greedy,
            tied: false,
            max_len: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub scene_id: u64,
    pub region_id: u64,
    pub category_id: u64,
    pub tokens: Vec<String>,
}

/// Decodes one expression per region of `scene` in `region_set` that has
/// references. Same-category regions are decoded together so tied decoding
/// can compare them.
pub fn generate_scene(
    speaker: &Speaker,
    vocab: &Vocabulary,
    scene: &Scene,
    dataset: &Dataset,
    features: &FeatureConfig,
    region_set: &BTreeSet<u64>,
    decode: &DecodeConfig,
) -> Result<Vec<Generated>> {
    let wanted: Vec<usize> = scene
        .regions
        .iter()
        .enumerate()
        .filter(|(_, r)| region_set.contains(&r.region_id) && dataset.expressions_for(r.region_id).next().is_some())
        .map(|(i, _)| i)
        .collect();
    if wanted.is_empty() {
        return Ok(Vec::new());
    }
    let bundles = scene_bundles(scene, features)?;
    let mut by_cat: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for &i in &wanted {
        by_cat.entry(scene.regions[i].category_id).or_default().push(i);
    }
    let mut out = Vec::with_capacity(wanted.len());
    for (cat, members) in by_cat {
        let feats: Vec<Vec<f64>> = members.iter().map(|&i| bundles[i].clone()).collect();
        let decoded = speaker.generate(&feats, decode.mode, decode.tied, decode.max_len)?;
        for (&i, ids) in members.iter().zip(decoded) {
            out.push(Generated {
                scene_id: scene.scene_id,
                region_id: scene.regions[i].region_id,
                category_id: cat,
                tokens: vocab.decode(&ids),
            });
        }
    }
    out.sort_by_key(|g| g.region_id);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    #[serde(flatten)]
    pub scores: GenerationScores,
    pub duplicate_rate: f64,
    pub objects: usize,
    pub scenes: usize,
    pub outputs: Vec<Generated>,
}

/// Scores generated expressions against each region's references.
pub fn score_outputs(dataset: &Dataset, outputs: Vec<Generated>) -> Result<GenerationReport> {
    let pairs: Vec<(Vec<String>, Vec<Vec<String>>)> = outputs
        .iter()
        .map(|g| {
            let refs = dataset.expressions_for(g.region_id).map(|e| e.tokens.clone()).collect();
            (g.tokens.clone(), refs)
        })
        .collect();
    let scores = corpus_scores(&pairs)?;
    let mut per_scene: BTreeMap<u64, Vec<(u64, Vec<String>)>> = BTreeMap::new();
    for g in &outputs {
        per_scene.entry(g.scene_id).or_default().push((g.category_id, g.tokens.clone()));
    }
    let scenes: Vec<_> = per_scene.into_values().collect();
    Ok(GenerationReport {
        scores,
        duplicate_rate: duplicate_rate(&scenes),
        objects: outputs.len(),
        scenes: scenes.len(),
        outputs,
    })
}

pub fn evaluate_generation(
    dataset: &Dataset,
    vocab: &Vocabulary,
    speaker: &Speaker,
    features: &FeatureConfig,
    region_set: &BTreeSet<u64>,
    decode: &DecodeConfig,
    workers: usize,
) -> Result<GenerationReport> {
    let scenes: Vec<&Scene> = dataset
        .scenes
        .iter()
        .filter(|s| s.regions.iter().any(|r| region_set.contains(&r.region_id)))
        .collect();
    let outputs = par_map(&scenes, workers, |scene| {
        generate_scene(speaker, vocab, scene, dataset, features, region_set, decode)
    })?;
    score_outputs(dataset, outputs.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{fixtures, AnnotationFile, FeatureFile};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn dataset() -> Dataset {
        let (ann, feats): (AnnotationFile, FeatureFile) = fixtures::small();
        Dataset::from_parts(&ann, &feats).unwrap()
    }

    #[test]
    fn echo_outputs_score_top() {
        let ds = dataset();
        let outputs: Vec<Generated> = ds
            .scenes
            .iter()
            .flat_map(|s| s.regions.iter())
            .filter_map(|r| {
                ds.expressions_for(r.region_id).next().map(|e| Generated {
                    scene_id: r.scene_id,
                    region_id: r.region_id,
                    category_id: r.category_id,
                    tokens: e.tokens.clone(),
                })
            })
            .collect();
        let rep = score_outputs(&ds, outputs).unwrap();
        assert!((rep.scores.bleu1 - 1.0).abs() < 1e-12);
        assert!((rep.scores.rouge_l - 1.0).abs() < 1e-12);
        assert!(rep.duplicate_rate == 0.0 || rep.objects < 2);
    }

    #[test]
    fn hand_computed_table() {
        let ds = dataset();
        let g = |r: u64, t: &str| Generated { scene_id: 1, region_id: r, category_id: 25, tokens: toks(t) };
        // region 10 refs: "giraffe on the left", "small giraffe"; region 11: "tall giraffe"
        let rep = score_outputs(&ds, vec![g(10, "giraffe"), g(11, "tall giraffe")]).unwrap();
        // "giraffe": closest ref length 2, BP = e^-1, all precisions 1
        let b = ((-1f64).exp() + 1.0) / 2.0;
        assert!((rep.scores.bleu1 - b).abs() < 1e-12);
        assert!((rep.scores.bleu2 - b).abs() < 1e-12);
        // ROUGE-L vs "small giraffe": P = 1, R = 1/2
        let r = (2.44 * 0.5 / (0.5 + 1.44) + 1.0) / 2.0;
        assert!((rep.scores.rouge_l - r).abs() < 1e-12);
        // METEOR: Fmean = 0.5/(0.9 + 0.05), one chunk of one match halves it;
        // the echo scores 1 - 0.5/8
        let m = (0.5 / 0.95 * 0.5 + (1.0 - 0.5 / 8.0)) / 2.0;
        assert!((rep.scores.meteor - m).abs() < 1e-12);
        assert_eq!(rep.duplicate_rate, 0.0);

        let rep = score_outputs(&ds, vec![g(10, "tall giraffe"), g(11, "tall giraffe")]).unwrap();
        assert_eq!(rep.duplicate_rate, 1.0);
    }
}
