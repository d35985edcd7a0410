use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use refexp::checkpoint::{load_model, save_model, CheckpointMeta};
use refexp::comprehension::{evaluate_comprehension, CandidateSource, ComprehensionReport, Detections, Tally};
use refexp::context::{ComparisonSet, FeatureConfig, Pooling};
use refexp::dataset::{build_vocabulary, load_dataset, ContextSource, Dataset, SplitFile, Vocabulary};
use refexp::generation::{evaluate_generation, score_outputs, DecodeConfig, GenerationReport};
use refexp::speaker::{DecodeMode, Speaker};
use refexp::synth::{generate as synthesize, SynthConfig};
use refexp::training::{train as fit, write_metrics_csv, ModelConfig, Objective, TrainConfig};
use refexp::{Error, IntegrityKind};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::report::{render, EvalReport};
use crate::*;

pub const RESOLVED: &str = "config.resolved.json";

pub fn run(cli: Cli) -> CliResult<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Data(DataCommand::Validate { annotations, features }) => validate(&annotations, &features),
        Command::Data(DataCommand::Split(a)) => split(a, seed),
        Command::Synth(a) => synth(a, seed),
        Command::Train(a) => train(a, seed),
        Command::Comprehend(a) => comprehend(a, seed),
        Command::Generate(a) => generate(a, seed),
        Command::Eval(a) => eval(a, seed),
        Command::Report(a) => report(a, seed),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

fn parent_dir(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Records the effective settings of a command that writes a single file,
/// keyed by that file's name, alongside any earlier entries.
fn merge_resolved(out: &Path, value: Value) -> CliResult<()> {
    let dir = parent_dir(out);
    create_dir(&dir)?;
    let path = dir.join(RESOLVED);
    let mut all: BTreeMap<String, Value> = if path.exists() {
        read_json(&path).unwrap_or_default()
    } else {
        BTreeMap::new()
    };
    let key = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    all.insert(key, value);
    write_json(&path, &all)
}

fn validate(annotations: &Path, features: &Path) -> CliResult<()> {
    let ds = load_dataset(annotations, features)?;
    let regions = ds.num_regions();
    println!(
        "ok: {} scenes, {} regions, {} expressions, {} categories, feature dim {}",
        ds.scenes.len(),
        regions,
        ds.expressions.len(),
        ds.categories.len(),
        ds.feature_dim
    );
    Ok(())
}

fn split(a: SplitArgs, seed: Option<u64>) -> CliResult<()> {
    let seed = seed.unwrap_or(0);
    let ds = load_dataset(&a.annotations, &a.features)?;
    let file = match a.mode {
        SplitMode::PerObject => SplitFile::per_object(&ds, a.ratio, seed)?,
        SplitMode::PeopleVsObjects => {
            let person = ds.category_id(&a.person_category).ok_or_else(|| {
                Error::Config(format!("category {:?} not in the annotation file", a.person_category))
            })?;
            SplitFile::people_vs_objects(&ds, person, a.test_fraction, seed)?
        }
    };
    create_dir(&a.out_dir)?;
    write_json(&a.out_dir.join("split.json"), &file)?;
    let mode = match a.mode {
        SplitMode::PerObject => "per-object",
        SplitMode::PeopleVsObjects => "people-vs-objects",
    };
    write_json(
        &a.out_dir.join(RESOLVED),
        &json!({
            "annotations": a.annotations,
            "features": a.features,
            "mode": mode,
            "ratio": a.ratio,
            "test_fraction": a.test_fraction,
            "person_category": a.person_category,
            "seed": seed,
        }),
    )?;
    let sizes: Vec<String> = file.sets.iter().map(|(k, v)| format!("{k}={}", v.len())).collect();
    println!("split {mode}: {}", sizes.join(" "));
    Ok(())
}

fn synth(a: SynthArgs, seed: Option<u64>) -> CliResult<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = a.num_scenes {
        cfg.num_scenes = n;
    }
    if let Some(f) = a.relative_fraction {
        cfg.relative_fraction = f;
    }
    if let Some(s) = a.noise_sigma {
        cfg.noise_sigma = s;
    }
    if a.no_location_words {
        cfg.location_words = false;
    }
    let data = synthesize(&cfg)?;
    data.write(&a.out_dir)?;
    write_json(&a.out_dir.join(RESOLVED), &cfg)?;
    println!(
        "synth: {} scenes, {} regions, {} expressions -> {}",
        data.annotations.images.len(),
        data.annotations.annotations.len(),
        data.annotations.refs.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn default_train_split() -> String {
    "train".into()
}

fn default_min_count() -> usize {
    1
}

/// The `train --config` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainFile {
    pub annotations: PathBuf,
    pub feature_file: PathBuf,
    #[serde(default)]
    pub split_file: Option<PathBuf>,
    #[serde(default = "default_train_split")]
    pub train_split: String,
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

fn relative_to(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn train_regions(ds: &Dataset, split: Option<&SplitFile>, name: &str) -> CliResult<BTreeSet<u64>> {
    match split {
        Some(s) => Ok(s.regions(name)?),
        None => Ok(all_regions(ds)),
    }
}

fn all_regions(ds: &Dataset) -> BTreeSet<u64> {
    ds.scenes.iter().flat_map(|s| s.regions.iter().map(|r| r.region_id)).collect()
}

fn vocabulary_of(ds: &Dataset, regions: &BTreeSet<u64>, min_count: usize) -> Vocabulary {
    build_vocabulary(
        ds.expressions
            .iter()
            .filter(|e| regions.contains(&e.region_id))
            .map(|e| e.tokens.as_slice()),
        min_count,
    )
}

fn train(a: TrainArgs, seed: Option<u64>) -> CliResult<()> {
    let mut cfg: TrainFile = read_json(&a.config)?;
    let base = parent_dir(&a.config);
    cfg.annotations = relative_to(&base, &cfg.annotations);
    cfg.feature_file = relative_to(&base, &cfg.feature_file);
    cfg.split_file = cfg.split_file.as_ref().map(|p| relative_to(&base, p));
    let out_dir = match (&a.out_dir, &cfg.out_dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => relative_to(&base, d),
        (None, None) => return Err(Failure::usage("no output directory: pass --out-dir or set out_dir")),
    };
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(o) = a.objective {
        cfg.train.objective = match o {
            ObjectiveArg::Mle => Objective::Mle,
            ObjectiveArg::Mmi => Objective::Mmi,
        };
    }
    if let Some(t) = a.tied {
        cfg.train.tied = t;
    }
    if let Some(lr) = a.learning_rate {
        cfg.train.learning_rate = lr;
    }
    if let Some(b) = a.batch_scenes {
        cfg.train.batch_scenes = b;
    }
    if let Some(w) = a.mmi_weight {
        cfg.train.mmi_weight = w;
    }
    if let Some(v) = a.val_fraction {
        cfg.train.val_fraction = v;
    }
    if let Some(c) = a.comparison_set {
        cfg.features.comparison.comparison_set = match c {
            ComparisonSetArg::SameCategory => ComparisonSet::SameCategory,
            ComparisonSetArg::DifferentCategory => ComparisonSet::DifferentCategory,
            ComparisonSetArg::AllObjects => ComparisonSet::AllObjects,
        };
    }
    if let Some(p) = a.pooling {
        cfg.features.comparison.pooling = match p {
            PoolingArg::Min => Pooling::Min,
            PoolingArg::Max => Pooling::Max,
            PoolingArg::Avg => Pooling::Avg,
        };
    }
    if let Some(c) = a.context_source {
        cfg.features.context_source = match c {
            ContextSourceArg::Global => ContextSource::Global,
            ContextSourceArg::Scale2 => ContextSource::Scale2,
            ContextSourceArg::Scale3 => ContextSource::Scale3,
            ContextSourceArg::Scale4 => ContextSource::Scale4,
            ContextSourceArg::None => ContextSource::None,
        };
    }
    if let Some(k) = a.max_location_neighbors {
        cfg.features.comparison.max_location_neighbors = k;
    }
    if let Some(e) = a.epsilon {
        cfg.features.comparison.epsilon = e;
    }
    if let Some(v) = a.visual_comparison {
        cfg.features.visual_comparison = v;
    }
    // train is single-worker
    cfg.train.workers = 1;

    let ds = load_dataset(&cfg.annotations, &cfg.feature_file)?;
    let split = cfg.split_file.as_ref().map(SplitFile::load).transpose()?;
    let regions = train_regions(&ds, split.as_ref(), &cfg.train_split)?;
    let vocab = vocabulary_of(&ds, &regions, cfg.min_count);
    let outcome = fit(&ds, &vocab, &cfg.features, &cfg.model, &regions, &cfg.train)?;

    create_dir(&out_dir)?;
    let mut meta = CheckpointMeta::new(&outcome.speaker, &vocab, cfg.min_count, &cfg.features);
    meta.annotations = Some(cfg.annotations.display().to_string());
    meta.feature_file = Some(cfg.feature_file.display().to_string());
    meta.split_file = cfg.split_file.as_ref().map(|p| p.display().to_string());
    meta.train_split = Some(cfg.train_split.clone());
    meta.val_scenes = outcome.val_scenes.clone();
    meta.train = Some(cfg.train.clone());
    meta.best_epoch = Some(outcome.best_epoch);
    save_model(out_dir.join("model.ckpt"), &outcome.speaker, &meta)?;
    write_metrics_csv(out_dir.join("metrics.csv"), &outcome.log)?;
    write_json(&out_dir.join(RESOLVED), &cfg)?;

    let last = outcome.log.last().expect("at least one epoch");
    let best = &outcome.log[outcome.best_epoch - 1];
    println!(
        "trained {} epochs on {} scenes: final loss {:.4}, best epoch {}{}",
        outcome.log.len(),
        outcome.train_scenes.len(),
        last.loss,
        outcome.best_epoch,
        best.val_acc.map(|a| format!(" (val acc {a:.4})")).unwrap_or_default()
    );
    Ok(())
}

struct Loaded {
    speaker: Speaker,
    vocab: Vocabulary,
    meta: CheckpointMeta,
    dataset: Dataset,
    split: Option<SplitFile>,
    resolved: Value,
}

fn load(m: &ModelArgs, seed: Option<u64>) -> CliResult<Loaded> {
    if m.workers == 0 {
        return Err(Failure::usage("--workers must be >= 1"));
    }
    let (speaker, vocab, meta) = load_model(&m.checkpoint)?;
    let pick = |flag: &Option<PathBuf>, recorded: &Option<String>, what: &str| -> CliResult<PathBuf> {
        flag.clone()
            .or_else(|| recorded.as_ref().map(PathBuf::from))
            .ok_or_else(|| Failure::usage(format!("checkpoint records no {what}; pass --{what}")))
    };
    let annotations = pick(&m.annotations, &meta.annotations, "annotations")?;
    let features = pick(&m.features, &meta.feature_file, "features")?;
    let split_path = m.split_file.clone().or_else(|| meta.split_file.as_ref().map(PathBuf::from));
    let dataset = load_dataset(&annotations, &features)?;
    let split = split_path.as_ref().map(SplitFile::load).transpose()?;

    // the dataset must reproduce the vocabulary the model was trained with
    let train_name = meta.train_split.clone().unwrap_or_else(default_train_split);
    if let Ok(regions) = train_regions(&dataset, split.as_ref(), &train_name) {
        let rebuilt = vocabulary_of(&dataset, &regions, meta.min_count);
        if rebuilt.hash() != meta.vocab_hash {
            return Err(Error::integrity(
                IntegrityKind::Vocabulary,
                format!(
                    "vocabulary of {} (split {train_name:?}) does not match the checkpoint",
                    annotations.display()
                ),
            )
            .into());
        }
    }
    let resolved = json!({
        "checkpoint": m.checkpoint,
        "annotations": annotations,
        "features": features,
        "split_file": split_path,
        "workers": m.workers,
        "seed": seed,
    });
    Ok(Loaded {
        speaker,
        vocab,
        meta,
        dataset,
        split,
        resolved,
    })
}

impl Loaded {
    fn regions(&self, name: &str) -> CliResult<BTreeSet<u64>> {
        if let Some(s) = &self.split {
            if s.sets.contains_key(name) {
                return Ok(s.regions(name)?);
            }
        }
        match name {
            "all" => Ok(all_regions(&self.dataset)),
            "val" => {
                let scenes: BTreeSet<u64> = self.meta.val_scenes.iter().copied().collect();
                Ok(self
                    .dataset
                    .scenes
                    .iter()
                    .filter(|s| scenes.contains(&s.scene_id))
                    .flat_map(|s| s.regions.iter().map(|r| r.region_id))
                    .collect())
            }
            _ => Err(Failure::usage(format!(
                "unknown split {name:?} (have {:?}, val, all)",
                self.split.as_ref().map(|s| s.sets.keys().cloned().collect::<Vec<_>>()).unwrap_or_default()
            ))),
        }
    }

    fn candidates(&self, spec: &str) -> CliResult<CandidateSource> {
        if spec == "gt" {
            Ok(CandidateSource::GroundTruth)
        } else {
            Ok(CandidateSource::Detections(Detections::load(spec, &self.dataset)?))
        }
    }

    fn comprehension(&self, split: &str, source: &CandidateSource, workers: usize) -> CliResult<ComprehensionReport> {
        let regions = self.regions(split)?;
        Ok(evaluate_comprehension(
            &self.dataset,
            &self.vocab,
            &self.speaker,
            &self.meta.features,
            &regions,
            source,
            workers,
        )?)
    }

    fn generation(&self, split: &str, decode: &DecodeConfig, workers: usize) -> CliResult<GenerationReport> {
        let regions = self.regions(split)?;
        Ok(evaluate_generation(
            &self.dataset,
            &self.vocab,
            &self.speaker,
            &self.meta.features,
            &regions,
            decode,
            workers,
        )?)
    }
}

fn decode_config(d: &DecodeArgs) -> CliResult<DecodeConfig> {
    let mode = match d.decode {
        DecodeArg::Greedy => DecodeMode::Greedy,
        DecodeArg::Beam if d.beam_width == 0 => return Err(Failure::usage("--beam-width must be >= 1")),
        DecodeArg::Beam => DecodeMode::Beam(d.beam_width),
    };
    if d.max_len == 0 {
        return Err(Failure::usage("--max-len must be >= 1"));
    }
    Ok(DecodeConfig {
        mode,
        tied: d.tied,
        max_len: d.max_len,
    })
}

fn print_comprehension(split: &str, r: &ComprehensionReport) {
    println!("{split}: accuracy {:.4} ({}/{})", r.accuracy, r.correct, r.total);
    for (kind, t) in &r.per_kind {
        println!("  {kind}: {:.4} ({}/{})", t.accuracy(), t.correct, t.total);
    }
    if !r.missing_scenes.is_empty() {
        println!("  {} scenes without detections", r.missing_scenes.len());
    }
}

fn print_generation(split: &str, r: &GenerationReport) {
    let s = &r.scores;
    println!(
        "{split}: bleu1 {:.4} bleu2 {:.4} rouge_l {:.4} meteor {:.4} duplicate_rate {:.4} ({} objects, {} scenes)",
        s.bleu1, s.bleu2, s.rouge_l, s.meteor, r.duplicate_rate, r.objects, r.scenes
    );
}

fn comprehend(a: ComprehendArgs, seed: Option<u64>) -> CliResult<()> {
    let l = load(&a.model, seed)?;
    let source = l.candidates(&a.candidates)?;
    let r = l.comprehension(&a.split, &source, a.model.workers)?;
    print_comprehension(&a.split, &r);
    if let Some(out) = &a.out {
        create_dir(&parent_dir(out))?;
        write_json(out, &r)?;
        let mut resolved = l.resolved.clone();
        resolved["split"] = json!(a.split);
        resolved["candidates"] = json!(a.candidates);
        merge_resolved(out, resolved)?;
    }
    Ok(())
}

fn generate(a: GenerateArgs, seed: Option<u64>) -> CliResult<()> {
    let l = load(&a.model, seed)?;
    let decode = decode_config(&a.decode)?;
    let r = l.generation(&a.split, &decode, a.model.workers)?;
    print_generation(&a.split, &r);
    if let Some(out) = &a.out {
        create_dir(&parent_dir(out))?;
        write_json(out, &r)?;
        let mut resolved = l.resolved.clone();
        resolved["split"] = json!(a.split);
        resolved["decode"] = json!(decode);
        merge_resolved(out, resolved)?;
    }
    Ok(())
}

fn comprehension_metrics(correct: usize, total: usize, per_kind: &BTreeMap<String, Tally>) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::from([
        ("accuracy".to_string(), Tally { correct, total }.accuracy()),
        ("expressions".to_string(), total as f64),
    ]);
    for (kind, t) in per_kind {
        m.insert(format!("accuracy/{kind}"), t.accuracy());
    }
    m
}

fn generation_metrics(r: &GenerationReport) -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("bleu1".to_string(), r.scores.bleu1),
        ("bleu2".to_string(), r.scores.bleu2),
        ("rouge_l".to_string(), r.scores.rouge_l),
        ("meteor".to_string(), r.scores.meteor),
        ("duplicate_rate".to_string(), r.duplicate_rate),
        ("objects".to_string(), r.objects as f64),
        ("scenes".to_string(), r.scenes as f64),
    ])
}

fn eval(a: EvalArgs, seed: Option<u64>) -> CliResult<()> {
    let l = load(&a.model, seed)?;
    let mut splits = BTreeMap::new();
    let mut resolved = l.resolved.clone();
    resolved["splits"] = json!(a.splits);
    let task;
    let metrics = match a.task {
        Task::Comprehension => {
            task = "comprehension";
            let source = l.candidates(&a.candidates)?;
            resolved["candidates"] = json!(a.candidates);
            let (mut correct, mut total) = (0, 0);
            let mut kinds: BTreeMap<String, Tally> = BTreeMap::new();
            for name in &a.splits {
                let r = l.comprehension(name, &source, a.model.workers)?;
                print_comprehension(name, &r);
                correct += r.correct;
                total += r.total;
                for (k, t) in &r.per_kind {
                    let e = kinds.entry(k.clone()).or_default();
                    e.correct += t.correct;
                    e.total += t.total;
                }
                splits.insert(name.clone(), comprehension_metrics(r.correct, r.total, &r.per_kind));
            }
            comprehension_metrics(correct, total, &kinds)
        }
        Task::Generation => {
            task = "generation";
            let decode = decode_config(&a.decode)?;
            resolved["decode"] = json!(decode);
            let mut outputs = Vec::new();
            for name in &a.splits {
                let r = l.generation(name, &decode, a.model.workers)?;
                print_generation(name, &r);
                splits.insert(name.clone(), generation_metrics(&r));
                outputs.extend(r.outputs);
            }
            generation_metrics(&score_outputs(&l.dataset, outputs)?)
        }
    };
    let label = a.label.clone().unwrap_or_else(|| {
        parent_dir(&a.model.checkpoint)
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "model".into())
    });
    let report = EvalReport {
        task: task.into(),
        label,
        split_names: a.splits.clone(),
        metrics,
        splits,
    };
    create_dir(&parent_dir(&a.out))?;
    write_json(&a.out, &report)?;
    merge_resolved(&a.out, resolved)
}

fn report(a: ReportArgs, seed: Option<u64>) -> CliResult<()> {
    let reports: Vec<EvalReport> = a.reports.iter().map(|p| read_json(p)).collect::<CliResult<_>>()?;
    let (tables, csv) = render(&reports);
    create_dir(&a.out_dir)?;
    let write = |name: &str, text: &str| -> CliResult<()> {
        let p = a.out_dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e).into())
    };
    write("tables.txt", &tables)?;
    write("report.csv", &csv)?;
    write_json(&a.out_dir.join(RESOLVED), &json!({ "reports": a.reports, "seed": seed }))?;
    print!("{tables}");
    Ok(())
}
