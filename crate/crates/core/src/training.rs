//! Optimization loop: maximum likelihood or the discriminative softmax-ratio
//! objective, scene mini-batches, gradient clipping, step decay, and
//! best-validation model selection.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::comprehension::{self, CandidateSource};
use crate::context::{scene_bundles, FeatureConfig};
use crate::dataset::{Dataset, Vocabulary};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::speaker::{sequence_nll, SequenceBatch, Speaker, SpeakerConfig};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Mle,
    Mmi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: Objective,
    pub mmi_weight: f64,
    pub tied: bool,
    pub learning_rate: f64,
    pub grad_clip_norm: f64,
    pub epochs: usize,
    pub batch_scenes: usize,
    pub seed: u64,
    pub max_negatives: usize,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub val_fraction: f64,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::Mle,
            mmi_weight: 1.0,
            tied: false,
            learning_rate: 1.0,
            grad_clip_norm: 5.0,
            epochs: 20,
            batch_scenes: 16,
            seed: 0,
            max_negatives: 5,
            decay_every: 10,
            decay_factor: 0.5,
            val_fraction: 0.1,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_scenes == 0 {
            return bad("batch_scenes must be >= 1");
        }
        if !(self.mmi_weight >= 0.0 && self.mmi_weight.is_finite()) {
            return bad("mmi_weight must be >= 0");
        }
        if !(self.grad_clip_norm > 0.0) {
            return bad("grad_clip_norm must be > 0");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must be in [0, 1)");
        }
        if self.decay_every == 0 || !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay_every >= 1 and decay_factor in (0, 1] required");
        }
        if self.workers == 0 {
            return bad("workers must be >= 1");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

/// Width of the speaker's internal layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub visual_dim: usize,
    pub hidden_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            word_dim: 32,
            visual_dim: 32,
            hidden_dim: 48,
        }
    }
}

impl ModelConfig {
    pub fn speaker_config(&self, vocab_size: usize, feature_dim: usize) -> SpeakerConfig {
        SpeakerConfig {
            word_dim: self.word_dim,
            visual_dim: self.visual_dim,
            hidden_dim: self.hidden_dim,
            vocab_size,
            feature_dim,
            hdif_epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRegion {
    pub region_id: u64,
    pub category_id: u64,
    pub center: (f64, f64),
    pub features: Vec<f64>,
}

/// A referred region and its encoded expressions (each ending in `END`).
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub region: usize,
    pub expressions: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedScene {
    pub scene_id: u64,
    pub regions: Vec<PreparedRegion>,
    pub targets: Vec<Target>,
}

impl PreparedScene {
    /// Up to `cap` distractors for region index `target`: same-category
    /// regions when any exist, otherwise every other region; nearest
    /// centers first, ties by region id.
    pub fn negatives(&self, target: usize, cap: usize) -> Vec<usize> {
        let t = &self.regions[target];
        let others = |same: bool| -> Vec<usize> {
            (0..self.regions.len())
                .filter(|&j| j != target && (!same || self.regions[j].category_id == t.category_id))
                .collect()
        };
        let mut pool = others(true);
        if pool.is_empty() {
            pool = others(false);
        }
        let dist = |j: usize| {
            let c = self.regions[j].center;
            (c.0 - t.center.0).hypot(c.1 - t.center.1)
        };
        pool.sort_by(|&a, &b| {
            dist(a)
                .total_cmp(&dist(b))
                .then(self.regions[a].region_id.cmp(&self.regions[b].region_id))
        });
        pool.truncate(cap);
        pool
    }
}

/// Precomputes representations for every region of the scenes containing a
/// referred region from `region_set`.
pub fn prepare_scenes(
    dataset: &Dataset,
    vocab: &Vocabulary,
    features: &FeatureConfig,
    region_set: &BTreeSet<u64>,
) -> Result<Vec<PreparedScene>> {
    let mut out = Vec::new();
    for scene in &dataset.scenes {
        let mut targets = Vec::new();
        for (idx, r) in scene.regions.iter().enumerate() {
            if !region_set.contains(&r.region_id) {
                continue;
            }
            let expressions: Vec<Vec<usize>> = dataset
                .expressions_for(r.region_id)
                .map(|e| vocab.encode_expression(&e.tokens))
                .collect();
            if !expressions.is_empty() {
                targets.push(Target {
                    region: idx,
                    expressions,
                });
            }
        }
        if targets.is_empty() {
            continue;
        }
        let bundles = scene_bundles(scene, features)?;
        let regions = scene
            .regions
            .iter()
            .zip(bundles)
            .map(|(r, features)| PreparedRegion {
                region_id: r.region_id,
                category_id: r.category_id,
                center: r.bbox.center(),
                features,
            })
            .collect();
        out.push(PreparedScene {
            scene_id: scene.scene_id,
            regions,
            targets,
        });
    }
    Ok(out)
}

/// Teacher-forced rows for the likelihood term. Untied: one row per
/// expression. Tied: each same-category group of targets is unrolled
/// `max expressions` times; in instance `k` target `i` uses its expression
/// `k mod count_i`, and the instance's rows share a group label.
pub fn likelihood_batch(scenes: &[&PreparedScene], tied: bool) -> SequenceBatch {
    let mut batch = SequenceBatch::default();
    let mut group = 0;
    for scene in scenes {
        if !tied {
            for t in &scene.targets {
                for e in &t.expressions {
                    batch.push(scene.regions[t.region].features.clone(), e.clone(), group);
                    group += 1;
                }
            }
            continue;
        }
        let categories: BTreeSet<u64> = scene
            .targets
            .iter()
            .map(|t| scene.regions[t.region].category_id)
            .collect();
        for cat in categories {
            let members: Vec<&Target> = scene
                .targets
                .iter()
                .filter(|t| scene.regions[t.region].category_id == cat)
                .collect();
            let instances = members.iter().map(|t| t.expressions.len()).max().unwrap_or(0);
            for k in 0..instances {
                for t in &members {
                    let e = &t.expressions[k % t.expressions.len()];
                    batch.push(scene.regions[t.region].features.clone(), e.clone(), group);
                }
                group += 1;
            }
        }
    }
    batch
}

/// Candidate rows for the ratio term: for every (target, expression), the
/// target row followed by its negatives, all carrying that expression.
pub fn ratio_batch(scenes: &[&PreparedScene], max_negatives: usize) -> (SequenceBatch, Vec<Vec<usize>>) {
    let mut batch = SequenceBatch::default();
    let mut sets = Vec::new();
    for scene in scenes {
        for t in &scene.targets {
            let negs = scene.negatives(t.region, max_negatives);
            for e in &t.expressions {
                let mut set = Vec::with_capacity(negs.len() + 1);
                for &r in std::iter::once(&t.region).chain(&negs) {
                    set.push(batch.len());
                    batch.push(scene.regions[r].features.clone(), e.clone(), batch.len());
                }
                sets.push(set);
            }
        }
    }
    (batch, sets)
}

fn mean(tape: &mut Tape, column: Var) -> Result<Var> {
    let n = tape.value(column).len();
    let s = tape.sum(column)?;
    tape.scale(s, 1.0 / n as f64)
}

/// Mean negative log-likelihood over the likelihood rows.
pub fn mle_loss(
    tape: &mut Tape,
    params: &ParamStore,
    cfg: &SpeakerConfig,
    scenes: &[&PreparedScene],
    tied: bool,
) -> Result<Var> {
    let batch = likelihood_batch(scenes, tied);
    if batch.is_empty() {
        return Err(Error::Config("empty training batch".into()));
    }
    let nll = sequence_nll(tape, params, cfg, &batch, tied)?;
    mean(tape, nll)
}

/// `mle_loss + λ · mean_r −log( P(r|o_t) / Σ_{j ∈ {t} ∪ negatives} P(r|o_j) )`,
/// with untied likelihoods for every candidate.
pub fn mmi_loss(
    tape: &mut Tape,
    params: &ParamStore,
    cfg: &SpeakerConfig,
    scenes: &[&PreparedScene],
    tied: bool,
    weight: f64,
    max_negatives: usize,
) -> Result<Var> {
    let mle = mle_loss(tape, params, cfg, scenes, tied)?;
    let (batch, sets) = ratio_batch(scenes, max_negatives);
    let nll = sequence_nll(tape, params, cfg, &batch, false)?;
    let ratio = tape.softmax_ratio(nll, &sets)?;
    let ratio = mean(tape, ratio)?;
    let ratio = tape.scale(ratio, weight)?;
    tape.add(mle, ratio)
}

/// The ratio term for hand-supplied log-probabilities, target first.
pub fn mmi_ratio_term(logprobs: &[f64]) -> Result<f64> {
    if logprobs.is_empty() {
        return Err(Error::Domain("empty candidate set".into()));
    }
    Ok(crate::tensor::log_sum_exp(logprobs) - logprobs[0])
}

pub fn objective_loss(
    tape: &mut Tape,
    params: &ParamStore,
    cfg: &SpeakerConfig,
    scenes: &[&PreparedScene],
    train: &TrainConfig,
) -> Result<Var> {
    match train.objective {
        Objective::Mle => mle_loss(tape, params, cfg, scenes, train.tied),
        Objective::Mmi => mmi_loss(
            tape,
            params,
            cfg,
            scenes,
            train.tied,
            train.mmi_weight,
            train.max_negatives,
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best-validation epoch (the last epoch without a
    /// validation set).
    pub speaker: Speaker,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub train_scenes: Vec<u64>,
    pub val_scenes: Vec<u64>,
}

/// Seeded scene-level holdout: `round(fraction · n)` scenes go to validation.
pub fn holdout_scenes(scene_ids: &[u64], fraction: f64, seed: u64) -> (Vec<u64>, Vec<u64>) {
    let mut ids = scene_ids.to_vec();
    ids.sort_unstable();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x7661_6c69_6461_7465));
    let n_val = ((fraction * ids.len() as f64).round() as usize).min(ids.len());
    let mut val = ids.split_off(ids.len() - n_val);
    val.sort_unstable();
    ids.sort_unstable();
    (ids, val)
}

/// Trains a fresh speaker on the expressions of `region_set`.
pub fn train(
    dataset: &Dataset,
    vocab: &Vocabulary,
    features: &FeatureConfig,
    model: &ModelConfig,
    region_set: &BTreeSet<u64>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    features.comparison.validate()?;
    let prepared = prepare_scenes(dataset, vocab, features, region_set)?;
    if prepared.is_empty() {
        return Err(Error::Config("no referred regions in the training set".into()));
    }
    let ids: Vec<u64> = prepared.iter().map(|s| s.scene_id).collect();
    let (train_ids, val_ids) = holdout_scenes(&ids, cfg.val_fraction, cfg.seed);
    let val_set: BTreeSet<u64> = val_ids.iter().copied().collect();
    let train_scenes: Vec<&PreparedScene> =
        prepared.iter().filter(|s| !val_set.contains(&s.scene_id)).collect();
    let val_regions: BTreeSet<u64> = prepared
        .iter()
        .filter(|s| val_set.contains(&s.scene_id))
        .flat_map(|s| s.targets.iter().map(|t| s.regions[t.region].region_id))
        .collect();

    let speaker_cfg = model.speaker_config(vocab.len(), features.bundle_dim(dataset.feature_dim));
    let mut speaker = Speaker::new(speaker_cfg, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train_scenes.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore)> = None;
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_scenes) {
            let scenes: Vec<&PreparedScene> = chunk.iter().map(|&i| train_scenes[i]).collect();
            let mut tape = Tape::new();
            let loss = objective_loss(&mut tape, &speaker.params, &speaker.config, &scenes, cfg)
                .map_err(|e| non_finite(e, step, &scenes))?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(non_finite(Error::Numeric("loss".into()), step, &scenes));
            }
            speaker.params.zero_grad();
            tape.backward(loss, &mut speaker.params)?;
            speaker.params.clip_grad_norm(cfg.grad_clip_norm);
            for (_, p) in speaker.params.iter_mut() {
                let g = p.grad.data().to_vec();
                for (v, g) in p.value.data_mut().iter_mut().zip(g) {
                    *v -= lr * g;
                }
            }
            total += value;
            batches += 1;
            step += 1;
        }
        let val_acc = if val_regions.is_empty() {
            None
        } else {
            let report = comprehension::evaluate_comprehension(
                dataset,
                vocab,
                &speaker,
                features,
                &val_regions,
                &CandidateSource::GroundTruth,
                cfg.workers,
            )?;
            Some(report.accuracy)
        };
        log.push(EpochLog {
            epoch: epoch + 1,
            loss: total / batches.max(1) as f64,
            val_acc,
        });
        let score = val_acc.unwrap_or(f64::NEG_INFINITY);
        let better = match &best {
            None => true,
            Some((b, _, _)) => val_acc.is_none() || score > *b,
        };
        if better {
            best = Some((score, epoch + 1, speaker.params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    let mut params = params;
    params.zero_grad();
    Ok(TrainOutcome {
        speaker: Speaker::from_params(speaker.config.clone(), params)?,
        log,
        best_epoch,
        train_scenes: train_ids,
        val_scenes: val_ids,
    })
}

fn non_finite(err: Error, step: usize, scenes: &[&PreparedScene]) -> Error {
    match err {
        Error::Numeric(msg) => Error::Numeric(format!(
            "non-finite {msg} at step {step} (scenes {:?})",
            scenes.iter().map(|s| s.scene_id).collect::<Vec<_>>()
        )),
        other => other,
    }
}

/// `epoch,loss,val_acc` with an empty accuracy field when no validation ran.
pub fn write_metrics_csv(path: impl AsRef<Path>, log: &[EpochLog]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("epoch,loss,val_acc\n");
    for e in log {
        let acc = e.val_acc.map(|a| format!("{a:.6}")).unwrap_or_default();
        text.push_str(&format!("{},{:.6},{}\n", e.epoch, e.loss, acc));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;
    use crate::speaker::{OUT_BIAS, OUT_WEIGHT};

    fn cfg() -> SpeakerConfig {
        SpeakerConfig {
            word_dim: 3,
            visual_dim: 3,
            hidden_dim: 4,
            vocab_size: 6,
            feature_dim: 4,
            hdif_epsilon: 1e-8,
        }
    }

    fn region(id: u64, cat: u64, x: f64, f: [f64; 4]) -> PreparedRegion {
        PreparedRegion {
            region_id: id,
            category_id: cat,
            center: (x, 0.0),
            features: f.to_vec(),
        }
    }

    fn scene(id: u64, regions: Vec<PreparedRegion>, targets: Vec<(usize, Vec<Vec<usize>>)>) -> PreparedScene {
        PreparedScene {
            scene_id: id,
            regions,
            targets: targets
                .into_iter()
                .map(|(region, expressions)| Target { region, expressions })
                .collect(),
        }
    }

    fn two_scenes() -> Vec<PreparedScene> {
        vec![
            scene(
                1,
                vec![region(1, 1, 0.0, [0.5, -0.2, 0.1, 0.9]), region(2, 1, 3.0, [-0.4, 0.3, 0.8, 0.0])],
                vec![(0, vec![vec![3, 4, 1]]), (1, vec![vec![5, 3, 1]])],
            ),
            scene(
                2,
                vec![region(3, 2, 0.0, [0.1, 0.2, -0.7, 0.4]), region(4, 2, 1.0, [0.9, -0.5, 0.2, -0.3])],
                vec![(0, vec![vec![4, 4, 1]]), (1, vec![vec![3, 5, 1]])],
            ),
        ]
    }

    fn uniform_speaker() -> Speaker {
        let mut s = Speaker::new(cfg(), 0).unwrap();
        s.params.value_mut(OUT_WEIGHT).unwrap().data_mut().fill(0.0);
        s.params.value_mut(OUT_BIAS).unwrap().data_mut().fill(0.0);
        s
    }

    #[test]
    fn uniform_mle_is_t_log_v() {
        let s = uniform_speaker();
        let scenes = two_scenes();
        let refs: Vec<&PreparedScene> = scenes.iter().collect();
        let mut tape = Tape::new();
        let l = mle_loss(&mut tape, &s.params, &s.config, &refs, false).unwrap();
        assert!((tape.value(l).item() - 3.0 * 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_expression_mle_is_negative_logprob() {
        let s = Speaker::new(cfg(), 4).unwrap();
        let sc = scene(9, vec![region(1, 1, 0.0, [0.2, 0.1, 0.0, -0.3])], vec![(0, vec![vec![3, 1]])]);
        let mut tape = Tape::new();
        let l = mle_loss(&mut tape, &s.params, &s.config, &[&sc], false).unwrap();
        let lp = s.sentence_logprob(&sc.regions[0].features, &[3, 1]).unwrap();
        assert!((tape.value(l).item() + lp).abs() < 1e-12);
    }

    #[test]
    fn ratio_term_examples() {
        assert!((mmi_ratio_term(&[-1.0, -2.0]).unwrap() - 0.313_261_687_518_222_8).abs() < 1e-12);
        assert!(mmi_ratio_term(&[-3.0]).unwrap().abs() < 1e-15);
        assert!((mmi_ratio_term(&[-0.7, -0.7]).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn identical_regions_give_ln2_ratio() {
        let s = Speaker::new(cfg(), 2).unwrap();
        let f = [0.3, 0.3, -0.1, 0.2];
        let sc = scene(1, vec![region(1, 1, 0.0, f), region(2, 1, 5.0, f)], vec![(0, vec![vec![4, 1]])]);
        let mut tape = Tape::new();
        let mmi = mmi_loss(&mut tape, &s.params, &s.config, &[&sc], false, 1.0, 5).unwrap();
        let mut t2 = Tape::new();
        let mle = mle_loss(&mut t2, &s.params, &s.config, &[&sc], false).unwrap();
        let diff = tape.value(mmi).item() - t2.value(mle).item();
        assert!((diff - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_region_scene_ratio_zero() {
        let s = Speaker::new(cfg(), 2).unwrap();
        let sc = scene(1, vec![region(1, 1, 0.0, [0.1, 0.2, 0.3, 0.4])], vec![(0, vec![vec![4, 1]])]);
        let mut tape = Tape::new();
        let mmi = mmi_loss(&mut tape, &s.params, &s.config, &[&sc], false, 1.0, 5).unwrap();
        let mut t2 = Tape::new();
        let mle = mle_loss(&mut t2, &s.params, &s.config, &[&sc], false).unwrap();
        assert_eq!(tape.value(mmi).item(), t2.value(mle).item());
    }

    #[test]
    fn mmi_at_least_mle() {
        let scenes = two_scenes();
        let refs: Vec<&PreparedScene> = scenes.iter().collect();
        for seed in 0..5 {
            let s = Speaker::new(cfg(), seed).unwrap();
            for tied in [false, true] {
                let mut t1 = Tape::new();
                let a = mmi_loss(&mut t1, &s.params, &s.config, &refs, tied, 0.7, 5).unwrap();
                let mut t2 = Tape::new();
                let b = mle_loss(&mut t2, &s.params, &s.config, &refs, tied).unwrap();
                assert!(t1.value(a).item() > t2.value(b).item());
            }
        }
    }

    #[test]
    fn negatives_same_category_first_then_all() {
        let sc = scene(
            1,
            vec![
                region(1, 1, 0.0, [0.0; 4]),
                region(2, 2, 1.0, [0.0; 4]),
                region(3, 1, 9.0, [0.0; 4]),
                region(4, 1, 4.0, [0.0; 4]),
            ],
            vec![],
        );
        assert_eq!(sc.negatives(0, 5), vec![3, 2]);
        assert_eq!(sc.negatives(0, 1), vec![3]);
        // region 2 is alone in its category: every other region qualifies
        assert_eq!(sc.negatives(1, 5), vec![0, 3, 2]);
    }

    #[test]
    fn tied_batch_cycles_expressions() {
        let sc = scene(
            1,
            vec![region(1, 1, 0.0, [0.0; 4]), region(2, 1, 1.0, [1.0; 4]), region(3, 2, 2.0, [2.0; 4])],
            vec![
                (0, vec![vec![3, 1], vec![4, 1], vec![5, 1]]),
                (1, vec![vec![5, 5, 1]]),
                (2, vec![vec![3, 1]]),
            ],
        );
        let b = likelihood_batch(&[&sc], true);
        assert_eq!(b.tokens, vec![vec![3, 1], vec![5, 5, 1], vec![4, 1], vec![5, 5, 1], vec![5, 1], vec![5, 5, 1], vec![3, 1]]);
        assert_eq!(b.groups, vec![0, 0, 1, 1, 2, 2, 3]);
        assert_eq!(likelihood_batch(&[&sc], false).len(), 5);
    }

    #[test]
    fn full_mmi_gradient_check() {
        let mut s = Speaker::new(cfg(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (_, p) in s.params.iter_mut() {
            for v in p.value.data_mut() {
                *v = rand::Rng::random_range(&mut rng, -0.5..0.5);
            }
        }
        let scenes = two_scenes();
        let refs: Vec<&PreparedScene> = scenes.iter().collect();
        let c = s.config.clone();
        let report = grad_check(&s.params, |p, t| mmi_loss(t, p, &c, &refs, true, 1.0, 5), 1e-5).unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig { learning_rate: 2.0, ..Default::default() };
        assert_eq!(c.learning_rate_at(9), 2.0);
        assert_eq!(c.learning_rate_at(10), 1.0);
        assert_eq!(c.learning_rate_at(25), 0.5);
    }

    #[test]
    fn holdout_is_partition() {
        let ids: Vec<u64> = (1..=20).collect();
        let (t, v) = holdout_scenes(&ids, 0.1, 3);
        assert_eq!(v.len(), 2);
        assert_eq!(t.len(), 18);
        assert!(v.iter().all(|x| !t.contains(x)));
        assert_eq!(holdout_scenes(&ids, 0.1, 3), (t, v));
    }
}
