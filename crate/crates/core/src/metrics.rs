//! Sentence-level generation metrics over token lists and the scene-level
//! duplicate rate. Corpus scores are means of sentence scores.

use std::collections::HashMap;

use crate::error::{Error, Result};

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

fn check_refs(references: &[Vec<String>]) -> Result<()> {
    if references.is_empty() {
        return Err(Error::Domain("at least one reference is required".into()));
    }
    Ok(())
}

/// Smoothed sentence BLEU up to `max_n`: clipped n-gram precision, add-one
/// smoothing for n ≥ 2, geometric mean, brevity penalty against the closest
/// reference length (shorter wins ties). An empty candidate scores 0.
pub fn bleu(candidate: &[String], references: &[Vec<String>], max_n: usize) -> Result<f64> {
    check_refs(references)?;
    if max_n == 0 {
        return Err(Error::Config("BLEU order must be >= 1".into()));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand = ngrams(candidate, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in references {
            for (g, c) in ngrams(r, n) {
                let e = max_ref.entry(g).or_default();
                *e = (*e).max(c);
            }
        }
        let matched: usize = cand
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let total = candidate.len().saturating_sub(n - 1);
        let p = if n == 1 {
            matched as f64 / total as f64
        } else {
            (matched as f64 + 1.0) / (total as f64 + 1.0)
        };
        if p == 0.0 {
            return Ok(0.0);
        }
        log_sum += p.ln();
    }
    let c = candidate.len();
    let r = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("non-empty references");
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok(bp * (log_sum / max_n as f64).exp())
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub const ROUGE_BETA: f64 = 1.2;

/// ROUGE-L F-measure with β = 1.2, maximized over references.
pub fn rouge_l(candidate: &[String], references: &[Vec<String>]) -> Result<f64> {
    check_refs(references)?;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    Ok(references
        .iter()
        .map(|r| {
            let l = lcs_len(candidate, r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let p = l / candidate.len() as f64;
            let rec = l / r.len() as f64;
            (1.0 + b2) * p * rec / (rec + b2 * p)
        })
        .fold(0.0, f64::max))
}

/// Number of contiguous chunks in an alignment given as (candidate index,
/// reference index) pairs sorted by candidate index.
fn chunks(alignment: &[(usize, usize)]) -> usize {
    let mut n = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(c, r) in alignment {
        match prev {
            Some((pc, pr)) if c == pc + 1 && r == pr + 1 => {}
            _ => n += 1,
        }
        prev = Some((c, r));
    }
    n
}

/// Maximum exact-match alignment with the fewest chunks. Matches are
/// maximal in count first (bipartite over equal tokens), then chunk count
/// is minimized by exhaustive search over each token type's assignment
/// when that is small, falling back to a greedy left-to-right choice.
fn best_alignment(candidate: &[String], reference: &[String]) -> (usize, usize) {
    // Per token type, the positions in each sentence.
    let mut types: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (i, t) in candidate.iter().enumerate() {
        let k = *seen.entry(t.as_str()).or_insert_with(|| {
            types.push((Vec::new(), Vec::new()));
            types.len() - 1
        });
        types[k].0.push(i);
    }
    for (j, t) in reference.iter().enumerate() {
        if let Some(&k) = seen.get(t.as_str()) {
            types[k].1.push(j);
        }
    }
    types.retain(|(_, r)| !r.is_empty());
    let matches: usize = types.iter().map(|(c, r)| c.len().min(r.len())).sum();
    if matches == 0 {
        return (0, 0);
    }

    // Each type contributes an injective map from its smaller side to the
    // larger one; enumerate all combinations if the space is small.
    let options: Vec<Vec<Vec<(usize, usize)>>> = types
        .iter()
        .map(|(c, r)| type_assignments(c, r))
        .collect();
    let space: f64 = options.iter().map(|o| o.len() as f64).product();
    let mut best = usize::MAX;
    if space <= 20_000.0 {
        let mut idx = vec![0usize; options.len()];
        loop {
            let mut al: Vec<(usize, usize)> = idx
                .iter()
                .zip(&options)
                .flat_map(|(&i, o)| o[i].iter().copied())
                .collect();
            al.sort_unstable();
            best = best.min(chunks(&al));
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return (matches, best);
                }
                idx[k] += 1;
                if idx[k] < options[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
    let mut al: Vec<(usize, usize)> = options.iter().flat_map(|o| o[0].iter().copied()).collect();
    al.sort_unstable();
    (matches, chunks(&al))
}

/// Injective pairings between the candidate and reference positions of one
/// token type (at most `CAP` of them).
fn type_assignments(c: &[usize], r: &[usize]) -> Vec<Vec<(usize, usize)>> {
    const CAP: usize = 200;
    let k = c.len().min(r.len());
    let mut out = Vec::new();
    let swap = c.len() > r.len();
    let (small, large) = if swap { (r, c) } else { (c, r) };
    let mut used = vec![false; large.len()];
    let mut cur = Vec::with_capacity(k);
    fn rec(
        i: usize,
        small: &[usize],
        large: &[usize],
        used: &mut [bool],
        cur: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
        swap: bool,
    ) {
        if out.len() >= CAP {
            return;
        }
        if i == small.len() {
            out.push(cur.clone());
            return;
        }
        for j in 0..large.len() {
            if used[j] {
                continue;
            }
            used[j] = true;
            cur.push(if swap { (large[j], small[i]) } else { (small[i], large[j]) });
            rec(i + 1, small, large, used, cur, out, swap);
            cur.pop();
            used[j] = false;
        }
    }
    rec(0, small, large, &mut used, &mut cur, &mut out, swap);
    out
}

/// METEOR restricted to exact matches: `Fmean = P·R / (0.9·P + 0.1·R)`,
/// fragmentation penalty `0.5·(chunks/matches)³`, maximized over references.
pub fn meteor(candidate: &[String], references: &[Vec<String>]) -> Result<f64> {
    check_refs(references)?;
    Ok(references
        .iter()
        .map(|r| {
            let (m, ch) = best_alignment(candidate, r);
            if m == 0 {
                return 0.0;
            }
            let p = m as f64 / candidate.len() as f64;
            let rec = m as f64 / r.len() as f64;
            let fmean = p * rec / (0.9 * p + 0.1 * rec);
            let penalty = 0.5 * (ch as f64 / m as f64).powi(3);
            fmean * (1.0 - penalty)
        })
        .fold(0.0, f64::max))
}

/// Fraction of scenes in which two objects of the same category received
/// identical expressions. Each scene lists `(category, expression)` per
/// object; scenes without two same-category objects are not counted.
pub fn duplicate_rate(scenes: &[Vec<(u64, Vec<String>)>]) -> f64 {
    let mut eligible = 0usize;
    let mut dup = 0usize;
    for scene in scenes {
        let mut per_cat: HashMap<u64, Vec<&Vec<String>>> = HashMap::new();
        for (c, e) in scene {
            per_cat.entry(*c).or_default().push(e);
        }
        if per_cat.values().all(|v| v.len() < 2) {
            continue;
        }
        eligible += 1;
        let has_dup = per_cat.values().any(|v| {
            let mut seen = std::collections::HashSet::new();
            v.iter().any(|e| !seen.insert(*e))
        });
        dup += has_dup as usize;
    }
    if eligible == 0 {
        0.0
    } else {
        dup as f64 / eligible as f64
    }
}

/// Corpus means of the sentence scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GenerationScores {
    pub bleu1: f64,
    pub bleu2: f64,
    pub rouge_l: f64,
    pub meteor: f64,
}

pub fn corpus_scores(pairs: &[(Vec<String>, Vec<Vec<String>>)]) -> Result<GenerationScores> {
    if pairs.is_empty() {
        return Ok(GenerationScores::default());
    }
    let mut s = GenerationScores::default();
    for (cand, refs) in pairs {
        s.bleu1 += bleu(cand, refs, 1)?;
        s.bleu2 += bleu(cand, refs, 2)?;
        s.rouge_l += rouge_l(cand, refs)?;
        s.meteor += meteor(cand, refs)?;
    }
    let n = pairs.len() as f64;
    s.bleu1 /= n;
    s.bleu2 /= n;
    s.rouge_l /= n;
    s.meteor /= n;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn bleu_examples() {
        let refs = [t("the red ball")];
        assert!((bleu(&t("the red ball"), &refs, 2).unwrap() - 1.0).abs() < 1e-12);
        assert!((bleu(&t("the red ball"), &refs, 1).unwrap() - 1.0).abs() < 1e-12);
        // "the the the" vs "the cat": clipped unigram precision 1/3, no penalty
        let b = bleu(&t("the the the"), &[t("the cat")], 1).unwrap();
        assert!((b - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(bleu(&[], &refs, 2).unwrap(), 0.0);
        assert_eq!(bleu(&t("blue dog"), &refs, 2).unwrap(), 0.0);
        assert!(bleu(&t("x"), &[], 1).is_err());
    }

    #[test]
    fn bleu_brevity_and_smoothing_by_hand() {
        // candidate "red ball" vs "the red ball": p1 = 1, p2 = (1+1)/(1+1) = 1,
        // BP = exp(1 - 3/2)
        let b = bleu(&t("red ball"), &[t("the red ball")], 2).unwrap();
        assert!((b - (-0.5f64).exp()).abs() < 1e-12);
        // "ball red" vs "red ball": p1 = 1, p2 = (0+1)/(1+1)
        let b = bleu(&t("ball red"), &[t("red ball")], 2).unwrap();
        assert!((b - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rouge_examples() {
        assert!((rouge_l(&t("a b c"), &[t("a b c")]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rouge_l(&t("x y"), &[t("a b")]).unwrap(), 0.0);
        // LCS("a c", "a b c") = 2: P = 1, R = 2/3
        let (p, r, b2) = (1.0, 2.0 / 3.0, 1.44);
        let want = (1.0 + b2) * p * r / (r + b2 * p);
        assert!((rouge_l(&t("a c"), &[t("z"), t("a b c")]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn meteor_examples() {
        // identical 3-token sentence: one chunk, penalty 0.5/27
        let m = meteor(&t("the red ball"), &[t("the red ball")]).unwrap();
        assert!((m - (1.0 - 0.5 / 27.0)).abs() < 1e-12);
        // reversed pair: 2 chunks of 2 matches
        let m = meteor(&t("ball red"), &[t("red ball")]).unwrap();
        assert!((m - 0.5).abs() < 1e-12);
        assert_eq!(meteor(&t("x"), &[t("y")]).unwrap(), 0.0);
    }

    #[test]
    fn meteor_prefers_contiguous_alignment() {
        // "the" appears twice in the reference; the alignment must pick the
        // copy adjacent to "dog" to form a single chunk
        let m = meteor(&t("the dog"), &[t("the cat the dog")]).unwrap();
        let (p, r) = (1.0, 0.5);
        let fmean = p * r / (0.9 * p + 0.1 * r);
        assert!((m - fmean * (1.0 - 0.5 / 8.0)).abs() < 1e-12);
    }

    #[test]
    fn duplicate_rate_examples() {
        let a = t("left dog");
        let b = t("right dog");
        let s1 = vec![(1, a.clone()), (1, a.clone())];
        let s2 = vec![(1, a.clone()), (1, b.clone())];
        assert_eq!(duplicate_rate(&[s1.clone(), s2.clone()]), 0.5);
        assert_eq!(duplicate_rate(std::slice::from_ref(&s2)), 0.0);
        // identical expressions across categories are not duplicates
        assert_eq!(duplicate_rate(&[vec![(1, a.clone()), (2, a.clone()), (1, b.clone())]]), 0.0);
        assert_eq!(duplicate_rate(&[vec![(1, a.clone())]]), 0.0);
        assert_eq!(duplicate_rate(&[]), 0.0);
    }

    fn sentence() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec(proptest::sample::select(vec!["a", "b", "c", "d"]), 1..7)
            .prop_map(|v| v.into_iter().map(str::to_string).collect())
    }

    proptest! {
        #[test]
        fn metrics_in_unit_interval(c in sentence(), refs in proptest::collection::vec(sentence(), 1..4)) {
            for v in [bleu(&c, &refs, 1).unwrap(), bleu(&c, &refs, 2).unwrap(), rouge_l(&c, &refs).unwrap(), meteor(&c, &refs).unwrap()] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }

        #[test]
        fn echo_scores_top(c in sentence()) {
            let refs = vec![c.clone()];
            prop_assert!((bleu(&c, &refs, 1).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!((rouge_l(&c, &refs).unwrap() - 1.0).abs() < 1e-12);
            let m = c.len() as f64;
            prop_assert!((meteor(&c, &refs).unwrap() - (1.0 - 0.5 / (m * m * m))).abs() < 1e-12);
        }

        #[test]
        fn reference_order_invariance(c in sentence(), mut refs in proptest::collection::vec(sentence(), 1..4)) {
            let before = (bleu(&c, &refs, 2).unwrap(), rouge_l(&c, &refs).unwrap(), meteor(&c, &refs).unwrap());
            refs.reverse();
            let after = (bleu(&c, &refs, 2).unwrap(), rouge_l(&c, &refs).unwrap(), meteor(&c, &refs).unwrap());
            prop_assert_eq!(before, after);
        }

        #[test]
        fn duplicate_rate_order_invariance(
            scenes in proptest::collection::vec(proptest::collection::vec((0u64..2, sentence()), 1..5), 1..6),
        ) {
            let base = duplicate_rate(&scenes);
            let mut shuffled: Vec<_> = scenes.iter().rev().cloned().collect();
            for s in &mut shuffled {
                s.reverse();
            }
            prop_assert_eq!(base, duplicate_rate(&shuffled));
        }
    }
}
