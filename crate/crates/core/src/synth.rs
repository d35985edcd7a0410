//! Seeded synthetic scenes with attribute "features" and templated
//! expressions.
//!
//! Three scene types:
//! * absolute: 2–4 same-category objects with distinct colors ("the red square");
//! * relative: two feature-identical twins and a differently colored companion
//!   of the same category; one twin stands next to the companion, the other
//!   apart ("the paired blue square" / "the lone blue square"). Only relative
//!   geometry separates the twins;
//! * contrast: three same-category objects, two sharing a color, plus other
//!   objects; the odd one is "the different square". Only comparison with the
//!   same-category objects reveals it.
//!
//! Objects of other categories may be added to any scene. Every expression is
//! checked by a symbolic resolver to pick out exactly its target. Templates
//! for one object differ only in the leading determiner, so the word that
//! tells objects apart comes early.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    context_key, tokenize, AnnotationFile, AnnotationRecord, CategoryRecord, ContextSource, FeatureFile,
    ImageRecord, RefRecord,
};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub const KIND_ABSOLUTE: &str = "absolute";
pub const KIND_RELATIVE: &str = "relative";
pub const KIND_CONTRAST: &str = "contrast";
pub const KIND_LOCATION: &str = "location";

/// Center distance (in units of the larger box side of the pair) within
/// which two objects count as next to each other.
/// Shade gap between the odd object of a contrast scene and its twins.
pub const SHADE_GAP: f64 = 0.5;

pub const NEAR_FACTOR: f64 = 1.5;
const GAP: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_scenes: usize,
    /// Inclusive range of same-category objects in absolute scenes.
    pub objects_per_scene: [usize; 2],
    pub categories: Vec<String>,
    pub colors: Vec<String>,
    pub feature_dim: usize,
    /// Share of scenes whose targets are separable only by relative geometry.
    pub relative_fraction: f64,
    /// Share of the remaining scenes that are odd-one-out scenes.
    pub contrast_fraction: f64,
    /// Probability of one extra object of another category in absolute and
    /// relative scenes (contrast scenes always get one or two).
    pub extra_object_prob: f64,
    /// Allow "on the left/right"; off emulates a location-word taboo.
    pub location_words: bool,
    pub noise_sigma: f64,
    pub image_width: f64,
    pub image_height: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_scenes: 1000,
            objects_per_scene: [2, 4],
            categories: ["person", "dog", "square", "ball"].map(String::from).to_vec(),
            colors: ["red", "green", "blue", "yellow"].map(String::from).to_vec(),
            feature_dim: 16,
            relative_fraction: 0.5,
            contrast_fraction: 0.5,
            extra_object_prob: 0.5,
            location_words: true,
            noise_sigma: 0.1,
            image_width: 640.0,
            image_height: 480.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.relative_fraction) {
            return bad(format!("relative_fraction {} not in [0, 1]", self.relative_fraction));
        }
        if !(0.0..=1.0).contains(&self.contrast_fraction) || !(0.0..=1.0).contains(&self.extra_object_prob) {
            return bad("contrast_fraction and extra_object_prob must be in [0, 1]".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        let [lo, hi] = self.objects_per_scene;
        if lo < 2 || hi < lo {
            return bad(format!("objects_per_scene {lo}..{hi} must satisfy 2 <= min <= max"));
        }
        if self.colors.len() < hi.max(2) {
            return bad(format!("need at least {} colors", hi.max(2)));
        }
        if self.categories.len() < 3 {
            return bad("need at least 3 categories".into());
        }
        if self.feature_dim < self.categories.len() + self.colors.len() + 2 {
            return bad(format!(
                "feature_dim {} too small for {} categories and {} colors",
                self.feature_dim,
                self.categories.len(),
                self.colors.len()
            ));
        }
        if !(self.image_width >= 320.0 && self.image_height >= 240.0) {
            return bad("image must be at least 320x240".into());
        }
        let words: Vec<String> = self.categories.iter().chain(&self.colors).cloned().collect();
        for w in &words {
            if tokenize(w) != vec![w.clone()] {
                return bad(format!("{w:?} is not a single lowercase token"));
            }
        }
        if words.iter().enumerate().any(|(i, w)| words[..i].contains(w)) {
            return bad("category and color names must be distinct".into());
        }
        Ok(())
    }
}

/// An object before noise: its attributes and placement.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthObject {
    pub category: usize,
    pub color: usize,
    pub shade: f64,
    pub size: f64,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    Absolute,
    Relative,
    Contrast,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub annotations: AnnotationFile,
    pub features: FeatureFile,
    /// Noise-free attribute vectors by region id.
    pub clean: BTreeMap<u64, Vec<f64>>,
    pub scene_kinds: BTreeMap<u64, SceneKind>,
}

impl SynthDataset {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.annotations.save(dir.join(ANNOTATIONS_FILE))?;
        self.features.save(dir.join(FEATURES_FILE))
    }
}

pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const FEATURES_FILE: &str = "features.bin";

fn aspect(category: &str) -> (f64, f64) {
    match category {
        "person" => (0.7, 1.3),
        "dog" => (1.3, 0.9),
        _ => (1.0, 1.0),
    }
}

struct Builder<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn dims(&self, category: usize, size: f64) -> (f64, f64) {
        let side = 40.0 + 40.0 * size;
        let (aw, ah) = aspect(&self.cfg.categories[category]);
        (side * aw, side * ah)
    }

    fn free(b: &BoundingBox, placed: &[SynthObject]) -> bool {
        placed.iter().all(|o| {
            let g = o.bbox;
            b.x_br + GAP <= g.x_tl || g.x_br + GAP <= b.x_tl || b.y_br + GAP <= g.y_tl || g.y_br + GAP <= b.y_tl
        })
    }

    fn box_at(&self, cx: f64, cy: f64, w: f64, h: f64) -> Option<BoundingBox> {
        let (x, y) = (cx - w / 2.0, cy - h / 2.0);
        if x < 0.0 || y < 0.0 || x + w > self.cfg.image_width || y + h > self.cfg.image_height {
            return None;
        }
        BoundingBox::new(x, y, x + w, y + h).ok()
    }

    /// A free box whose center satisfies `accept`, or `None` after many tries.
    fn place(
        &mut self,
        w: f64,
        h: f64,
        placed: &[SynthObject],
        accept: impl Fn(&BoundingBox) -> bool,
    ) -> Option<BoundingBox> {
        for _ in 0..2000 {
            let cx = self.rng.random_range(w / 2.0..self.cfg.image_width - w / 2.0);
            let cy = self.rng.random_range(h / 2.0..self.cfg.image_height - h / 2.0);
            if let Some(b) = self.box_at(cx, cy, w, h) {
                if Self::free(&b, placed) && accept(&b) {
                    return Some(b);
                }
            }
        }
        None
    }

    fn object(&mut self, category: usize, color: usize, shade: f64, size: f64, placed: &[SynthObject]) -> Option<SynthObject> {
        let (w, h) = self.dims(category, size);
        let bbox = self.place(w, h, placed, |_| true)?;
        Some(SynthObject { category, color, shade, size, bbox })
    }

    fn attrs(&mut self) -> (f64, f64) {
        let shade = (self.rng.random_range(0.0..1.0f64) * 100.0).round() / 100.0;
        let size = (self.rng.random_range(0.0..1.0f64) * 100.0).round() / 100.0;
        (shade, size)
    }

    fn extras(&mut self, main: usize, count: usize, placed: &mut Vec<SynthObject>) -> Option<()> {
        let mut cats: Vec<usize> = (0..self.cfg.categories.len()).filter(|&c| c != main).collect();
        cats.shuffle(&mut self.rng);
        for &c in cats.iter().take(count) {
            let color = self.rng.random_range(0..self.cfg.colors.len());
            let (shade, size) = self.attrs();
            let o = self.object(c, color, shade, size, placed)?;
            placed.push(o);
        }
        Some(())
    }

    fn absolute(&mut self) -> Option<Vec<SynthObject>> {
        let cat = self.rng.random_range(0..self.cfg.categories.len());
        let [lo, hi] = self.cfg.objects_per_scene;
        let n = self.rng.random_range(lo..=hi);
        let mut colors: Vec<usize> = (0..self.cfg.colors.len()).collect();
        colors.shuffle(&mut self.rng);
        let mut placed = Vec::new();
        for &color in colors.iter().take(n) {
            let (shade, size) = self.attrs();
            let o = self.object(cat, color, shade, size, &placed)?;
            placed.push(o);
        }
        if self.rng.random_bool(self.cfg.extra_object_prob) {
            self.extras(cat, 1, &mut placed)?;
        }
        Some(placed)
    }

    fn relative(&mut self) -> Option<Vec<SynthObject>> {
        let cat = self.rng.random_range(0..self.cfg.categories.len());
        let twin_color = self.rng.random_range(0..self.cfg.colors.len());
        let mut comp_color = self.rng.random_range(0..self.cfg.colors.len() - 1);
        if comp_color >= twin_color {
            comp_color += 1;
        }
        let (shade, size) = self.attrs();
        let (cshade, csize) = self.attrs();
        let mut placed = Vec::new();
        let companion = self.object(cat, comp_color, cshade, csize, &placed)?;
        placed.push(companion.clone());

        let (w, h) = self.dims(cat, size);
        let side = |b: &BoundingBox| b.width().max(b.height());
        let near_limit = NEAR_FACTOR * side(&companion.bbox).max(w.max(h));
        let c0 = companion.bbox;
        // near twin: a random direction at a distance just beyond touching
        let mut near = None;
        for _ in 0..2000 {
            let angle = self.rng.random_range(0.0..std::f64::consts::TAU);
            let dist = self.rng.random_range(0.5..1.0) * near_limit;
            let (cx, cy) = c0.center();
            if let Some(b) = self.box_at(cx + dist * angle.cos(), cy + dist * angle.sin(), w, h) {
                if Self::free(&b, &placed) && b.center_distance(&c0) <= near_limit * 0.95 {
                    near = Some(b);
                    break;
                }
            }
        }
        let near = SynthObject { category: cat, color: twin_color, shade, size, bbox: near? };
        placed.push(near.clone());
        // far twin: clear of both with a wide margin
        let far_limit = 1.3 * near_limit;
        let nb = near.bbox;
        let far = self.place(w, h, &placed, |b| b.center_distance(&c0) > far_limit && b.center_distance(&nb) > far_limit)?;
        placed.push(SynthObject { category: cat, color: twin_color, shade, size, bbox: far });
        if self.rng.random_bool(self.cfg.extra_object_prob) {
            self.extras(cat, 1, &mut placed)?;
        }
        Some(placed)
    }

    fn contrast(&mut self) -> Option<Vec<SynthObject>> {
        let cat = self.rng.random_range(0..self.cfg.categories.len());
        let color = self.rng.random_range(0..self.cfg.colors.len());
        let (shade, size) = self.attrs();
        // The odd one differs from its twins only in shade, in either
        // direction. Shade leaves the box untouched, so no geometric cue.
        let shade = shade * (1.0 - SHADE_GAP);
        let (shade, odd_shade) = if self.rng.random_bool(0.5) {
            (shade, shade + SHADE_GAP)
        } else {
            (shade + SHADE_GAP, shade)
        };
        let mut placed = Vec::new();
        for sh in [odd_shade, shade, shade] {
            let o = self.object(cat, color, sh, size, &placed)?;
            placed.push(o);
        }
        let extra = self.rng.random_range(1..=2);
        self.extras(cat, extra, &mut placed)?;
        Some(placed)
    }
}

/// Parsed form of a generated expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub category: usize,
    pub color: Option<usize>,
    pub relation: Option<Relation>,
    pub side: Option<Side>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// Has a same-category neighbor, optionally of a given color.
    Near(Option<usize>),
    Lone,
    Different,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    /// Neither leftmost nor rightmost of exactly three matches.
    Middle,
}

pub fn parse_expression(tokens: &[String], cfg: &SynthConfig) -> Option<Query> {
    let find = |names: &[String], from: usize| {
        tokens
            .iter()
            .enumerate()
            .skip(from)
            .find_map(|(i, t)| names.iter().position(|n| n == t).map(|k| (i, k)))
    };
    let (head, category) = find(&cfg.categories, 0)?;
    let color = tokens[..head]
        .iter()
        .find_map(|t| cfg.colors.iter().position(|c| c == t));
    let has = |w: &str| tokens.iter().any(|t| t == w);
    let relation = if has("different") || has("odd") {
        Some(Relation::Different)
    } else if has("lone") || has("own") {
        Some(Relation::Lone)
    } else if has("beside") {
        let other = tokens.iter().position(|t| t == "beside")?;
        Some(Relation::Near(Some(tokens[other..].iter().find_map(|t| cfg.colors.iter().position(|c| c == t))?)))
    } else if has("next") || has("paired") {
        Some(Relation::Near(None))
    } else {
        None
    };
    let side = if has("left") {
        Some(Side::Left)
    } else if has("right") {
        Some(Side::Right)
    } else if has("middle") {
        Some(Side::Middle)
    } else {
        None
    };
    Some(Query { category, color, relation, side })
}

fn is_near(a: &SynthObject, b: &SynthObject) -> bool {
    let side = |o: &SynthObject| o.bbox.width().max(o.bbox.height());
    a.bbox.center_distance(&b.bbox) <= NEAR_FACTOR * side(a).max(side(b))
}

/// Indices of the scene objects a query picks out.
pub fn resolve(query: &Query, objects: &[SynthObject]) -> Vec<usize> {
    let same: Vec<usize> = (0..objects.len()).filter(|&i| objects[i].category == query.category).collect();
    let mut matches: Vec<usize> = same
        .iter()
        .copied()
        .filter(|&i| query.color.is_none_or(|c| objects[i].color == c))
        .filter(|&i| {
            let o = &objects[i];
            let others = same.iter().filter(|&&j| j != i).map(|&j| &objects[j]);
            match query.relation {
                None => true,
                Some(Relation::Near(color)) => others
                    .filter(|n| color.is_none_or(|c| n.color == c))
                    .any(|n| is_near(o, n)),
                Some(Relation::Lone) => others.clone().all(|n| !is_near(o, n)),
                Some(Relation::Different) => {
                    let rest: Vec<&SynthObject> = others.collect();
                    rest.len() >= 2
                        && rest.iter().all(|n| n.color == o.color && n.shade == rest[0].shade)
                        && rest[0].shade != o.shade
                }
            }
        })
        .collect();
    if let Some(side) = query.side {
        let x = |i: usize| objects[i].bbox.center().0;
        let pick = match side {
            Side::Left => matches.iter().copied().min_by(|&a, &b| x(a).total_cmp(&x(b))),
            Side::Right => matches.iter().copied().max_by(|&a, &b| x(a).total_cmp(&x(b))),
            Side::Middle if matches.len() == 3 => {
                let mut m = matches.clone();
                m.sort_by(|&a, &b| x(a).total_cmp(&x(b)));
                Some(m[1])
            }
            Side::Middle => None,
        };
        matches = pick.into_iter().collect();
    }
    matches
}

/// (expression text, kind) candidates for object `i`.
fn expressions(kind: SceneKind, i: usize, objects: &[SynthObject], cfg: &SynthConfig) -> Vec<(String, &'static str)> {
    let o = &objects[i];
    let noun = &cfg.categories[o.category];
    let color = &cfg.colors[o.color];
    let same: Vec<usize> = (0..objects.len())
        .filter(|&j| objects[j].category == o.category)
        .collect();
    let main_category = match kind {
        SceneKind::Absolute => same.len() >= 2,
        _ => same.len() >= 3,
    };
    if !main_category {
        return vec![(format!("the {noun}"), KIND_ABSOLUTE), (format!("the {color} {noun}"), KIND_ABSOLUTE)];
    }
    let x = |j: usize| objects[j].bbox.center().0;
    let extreme = |left: bool, pool: &[usize]| {
        pool.iter().all(|&j| j == i || if left { x(i) < x(j) } else { x(i) > x(j) })
    };
    let side_phrase = |pool: &[usize]| -> Option<&'static str> {
        if !cfg.location_words {
            None
        } else if extreme(true, pool) {
            Some("left")
        } else if extreme(false, pool) {
            Some("right")
        } else {
            None
        }
    };
    match kind {
        SceneKind::Absolute => {
            let mut v = vec![(format!("the {color} {noun}"), KIND_ABSOLUTE), (format!("{color} {noun}"), KIND_ABSOLUTE)];
            if let Some(s) = side_phrase(&same) {
                v.push((format!("the {color} {noun} on the {s}"), KIND_LOCATION));
            }
            v
        }
        SceneKind::Relative => {
            let twins = same.iter().filter(|&&j| objects[j].color == o.color).count();
            if twins < 2 {
                return vec![(format!("the {color} {noun}"), KIND_ABSOLUTE), (format!("{color} {noun}"), KIND_ABSOLUTE)];
            }
            let word = if same.iter().any(|&j| j != i && is_near(o, &objects[j])) {
                "paired"
            } else {
                "lone"
            };
            vec![
                (format!("the {word} {color} {noun}"), KIND_RELATIVE),
                (format!("{word} {color} {noun}"), KIND_RELATIVE),
            ]
        }
        SceneKind::Contrast => {
            let others: Vec<&SynthObject> = same.iter().filter(|&&j| j != i).map(|&j| &objects[j]).collect();
            if others.iter().all(|n| n.shade != o.shade) {
                return vec![(format!("the different {noun}"), KIND_CONTRAST), (format!("different {noun}"), KIND_CONTRAST)];
            }
            if !cfg.location_words {
                return Vec::new();
            }
            match side_phrase(&same) {
                Some(s) => vec![(format!("the {color} {noun} on the {s}"), KIND_LOCATION)],
                None if same.len() == 3 => vec![(format!("the {color} {noun} in the middle"), KIND_LOCATION)],
                None => Vec::new(),
            }
        }
    }
}

/// The noise-free feature vector: category and color one-hots, shade, size,
/// zero padding.
pub fn clean_features(o: &SynthObject, cfg: &SynthConfig) -> Vec<f64> {
    let mut f = vec![0.0; cfg.feature_dim];
    let nc = cfg.categories.len();
    f[o.category] = 1.0;
    f[nc + o.color] = 1.0;
    f[nc + cfg.colors.len()] = o.shade;
    f[nc + cfg.colors.len() + 1] = o.size;
    f
}

/// Context rows: the mean feature over all regions (`global`) and over the
/// regions centered inside a central window covering `1/k` of each image
/// side (`scale{k}`; zeros when the window is empty).
fn context_rows(cfg: &SynthConfig, objects: &[SynthObject], feats: &[Vec<f32>]) -> Vec<(ContextSource, Vec<f32>)> {
    let mean = |idx: &[usize]| -> Vec<f32> {
        let mut m = vec![0.0f64; cfg.feature_dim];
        for &i in idx {
            for (a, &v) in m.iter_mut().zip(&feats[i]) {
                *a += v as f64;
            }
        }
        let n = idx.len().max(1) as f64;
        m.into_iter().map(|v| (v / n) as f32).collect()
    };
    let all: Vec<usize> = (0..objects.len()).collect();
    let mut rows = vec![(ContextSource::Global, mean(&all))];
    for (k, source) in [(2.0, ContextSource::Scale2), (3.0, ContextSource::Scale3), (4.0, ContextSource::Scale4)] {
        let (hw, hh) = (cfg.image_width / (2.0 * k), cfg.image_height / (2.0 * k));
        let (mx, my) = (cfg.image_width / 2.0, cfg.image_height / 2.0);
        let inside: Vec<usize> = all
            .iter()
            .copied()
            .filter(|&i| {
                let (cx, cy) = objects[i].bbox.center();
                (cx - mx).abs() <= hw && (cy - my).abs() <= hh
            })
            .collect();
        rows.push((source, mean(&inside)));
    }
    rows
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut b = Builder {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut ann = AnnotationFile {
        categories: Some(
            cfg.categories
                .iter()
                .enumerate()
                .map(|(i, n)| CategoryRecord { id: i as u64 + 1, name: n.clone() })
                .collect(),
        ),
        ..Default::default()
    };
    let mut features = FeatureFile::new(cfg.feature_dim);
    let mut clean = BTreeMap::new();
    let mut kinds = BTreeMap::new();
    let mut next_region = 1u64;
    let mut next_ref = 1u64;

    for s in 0..cfg.num_scenes {
        let scene_id = s as u64 + 1;
        let kind = if b.rng.random_bool(cfg.relative_fraction) {
            SceneKind::Relative
        } else if b.rng.random_bool(cfg.contrast_fraction) {
            SceneKind::Contrast
        } else {
            SceneKind::Absolute
        };
        let mut objects = loop {
            let attempt = match kind {
                SceneKind::Absolute => b.absolute(),
                SceneKind::Relative => b.relative(),
                SceneKind::Contrast => b.contrast(),
            };
            if let Some(o) = attempt {
                break o;
            }
        };
        // region ids must not reveal roles
        objects.shuffle(&mut b.rng);

        ann.images.push(ImageRecord {
            id: scene_id,
            width: cfg.image_width,
            height: cfg.image_height,
        });
        let mut noisy = Vec::with_capacity(objects.len());
        for o in &objects {
            let region_id = next_region;
            next_region += 1;
            let c = clean_features(o, cfg);
            let f: Vec<f32> = c.iter().map(|v| (v + noise.sample(&mut b.rng)) as f32).collect();
            features.insert(region_id, f.clone())?;
            noisy.push(f);
            clean.insert(region_id, c);
            ann.annotations.push(AnnotationRecord {
                id: region_id,
                image_id: scene_id,
                category_id: o.category as u64 + 1,
                bbox: o.bbox.to_xywh(),
            });
        }
        for (i, _) in objects.iter().enumerate() {
            let region_id = next_region - objects.len() as u64 + i as u64;
            for (raw, k) in expressions(kind, i, &objects, cfg) {
                let tokens = tokenize(&raw);
                let q = parse_expression(&tokens, cfg)
                    .ok_or_else(|| Error::Domain(format!("unparseable template {raw:?}")))?;
                if resolve(&q, &objects) != vec![i] {
                    return Err(Error::Domain(format!("scene {scene_id}: {raw:?} is ambiguous")));
                }
                ann.refs.push(RefRecord {
                    id: next_ref,
                    ann_id: region_id,
                    raw,
                    tokens: Some(tokens),
                    kind: Some(k.to_string()),
                });
                next_ref += 1;
            }
        }
        for (source, row) in context_rows(cfg, &objects, &noisy) {
            let key = context_key(scene_id, source).expect("stored sources have keys");
            features.insert(key, row)?;
        }
        kinds.insert(scene_id, kind);
    }
    Ok(SynthDataset {
        annotations: ann,
        features,
        clean,
        scene_kinds: kinds,
    })
}
