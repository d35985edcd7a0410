//! Train/test partitions: per-object (regions of one scene may straddle
//! sides) and people-vs-objects (whole scenes, testA/testB).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Shuffles all region ids (sorted first) with the seed and puts the first
/// `round(ratio · n)` into train.
pub fn split_per_object(dataset: &Dataset, ratio: f64, seed: u64) -> Result<(Vec<u64>, Vec<u64>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} not in (0, 1)")));
    }
    let mut ids: Vec<u64> = dataset
        .scenes
        .iter()
        .flat_map(|s| s.regions.iter().map(|r| r.region_id))
        .collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_train = ((ratio * ids.len() as f64).round() as usize).min(ids.len());
    let test = ids.split_off(n_train);
    let mut train = ids;
    train.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PeopleObjectsSplit {
    pub train: Vec<u64>,
    pub test_a: Vec<u64>,
    pub test_b: Vec<u64>,
}

/// Scene-level split. A scene is testA-eligible when at least two referred
/// regions are people, testB-eligible when at least two referred regions
/// share a non-person category; testA wins when both hold. A seeded
/// `test_fraction` of each eligible pool goes to test, everything else to
/// train. Returned ids are scene ids.
pub fn split_people_vs_objects(
    dataset: &Dataset,
    person_category_id: u64,
    test_fraction: f64,
    seed: u64,
) -> Result<PeopleObjectsSplit> {
    if !dataset.categories.contains_key(&person_category_id) && !dataset.scenes.is_empty() {
        return Err(Error::Config(format!(
            "person category {person_category_id} is not in the category table"
        )));
    }
    if !(test_fraction > 0.0 && test_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "test fraction {test_fraction} not in (0, 1]"
        )));
    }
    let mut pool_a = Vec::new();
    let mut pool_b = Vec::new();
    let mut train = Vec::new();
    for scene in &dataset.scenes {
        let mut per_category: BTreeMap<u64, usize> = BTreeMap::new();
        for r in &scene.regions {
            if dataset.expressions_for(r.region_id).next().is_some() {
                *per_category.entry(r.category_id).or_default() += 1;
            }
        }
        let people = per_category.get(&person_category_id).copied().unwrap_or(0);
        let objects = per_category
            .iter()
            .any(|(&c, &n)| c != person_category_id && n >= 2);
        if people >= 2 {
            pool_a.push(scene.scene_id);
        } else if objects {
            pool_b.push(scene.scene_id);
        } else {
            train.push(scene.scene_id);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut take = |pool: &mut Vec<u64>, train: &mut Vec<u64>| -> Vec<u64> {
        pool.shuffle(&mut rng);
        let n = ((test_fraction * pool.len() as f64).round() as usize).min(pool.len());
        let rest = pool.split_off(n);
        train.extend(rest);
        let mut test = std::mem::take(pool);
        test.sort_unstable();
        test
    };
    let test_a = take(&mut pool_a, &mut train);
    let test_b = take(&mut pool_b, &mut train);
    train.sort_unstable();
    Ok(PeopleObjectsSplit {
        train,
        test_a,
        test_b,
    })
}

/// Named region-id sets as written by `refexp data split`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFile {
    pub mode: String,
    pub seed: u64,
    pub sets: BTreeMap<String, Vec<u64>>,
}

impl SplitFile {
    pub fn per_object(dataset: &Dataset, ratio: f64, seed: u64) -> Result<Self> {
        let (train, test) = split_per_object(dataset, ratio, seed)?;
        Ok(SplitFile {
            mode: "per-object".into(),
            seed,
            sets: BTreeMap::from([("train".into(), train), ("test".into(), test)]),
        })
    }

    pub fn people_vs_objects(
        dataset: &Dataset,
        person_category_id: u64,
        test_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let split = split_people_vs_objects(dataset, person_category_id, test_fraction, seed)?;
        let regions_of = |scenes: &[u64]| -> Vec<u64> {
            let mut ids: Vec<u64> = scenes
                .iter()
                .filter_map(|&s| dataset.scene(s))
                .flat_map(|s| s.regions.iter().map(|r| r.region_id))
                .collect();
            ids.sort_unstable();
            ids
        };
        Ok(SplitFile {
            mode: "people-vs-objects".into(),
            seed,
            sets: BTreeMap::from([
                ("train".into(), regions_of(&split.train)),
                ("testA".into(), regions_of(&split.test_a)),
                ("testB".into(), regions_of(&split.test_b)),
            ]),
        })
    }

    pub fn regions(&self, name: &str) -> Result<BTreeSet<u64>> {
        self.sets
            .get(name)
            .map(|v| v.iter().copied().collect())
            .ok_or_else(|| {
                Error::Config(format!(
                    "split {name:?} not found (have {:?})",
                    self.sets.keys().collect::<Vec<_>>()
                ))
            })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("split serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
