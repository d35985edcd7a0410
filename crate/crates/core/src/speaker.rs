//! Recurrent speaker with tied joint decoding.
//!
//! A region's concatenated representation `x` is projected to
//! `v = x·W_m + b_m`. At every step the LSTM consumes `[embed(w_{t−1}) ‖ v ‖ h_{t−1}]`
//! and the next word is drawn from `softmax([h_t ‖ h_dif_t]·W_h + b_h)`, where
//! `h_dif` pools normalized differences between this object's hidden state and
//! those of the other objects decoded alongside it. Untied decoding feeds a
//! zero `h_dif`.
//!
//! Two independent evaluation routes exist: [`sequence_nll`] records the
//! computation on a [`Tape`] for training, and the `Speaker` methods evaluate
//! the same model with plain loops for scoring and decoding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{BOS, END};
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::{l2_norm, log_softmax, sigmoid, softmax, Tensor};

pub const PROJ_WEIGHT: &str = "proj.weight";
pub const PROJ_BIAS: &str = "proj.bias";
pub const EMBED: &str = "embed";
pub const LSTM_WEIGHT: &str = "lstm.weight";
pub const LSTM_BIAS: &str = "lstm.bias";
/// `[2H × V]`; rows `H..2H` read the hidden difference.
pub const OUT_WEIGHT: &str = "out.weight";
pub const OUT_BIAS: &str = "out.bias";

pub const INIT_SCALE: f64 = 0.08;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerConfig {
    pub word_dim: usize,
    pub visual_dim: usize,
    pub hidden_dim: usize,
    pub vocab_size: usize,
    /// Length of the concatenated region representation.
    pub feature_dim: usize,
    #[serde(default = "default_hdif_epsilon")]
    pub hdif_epsilon: f64,
}

fn default_hdif_epsilon() -> f64 {
    1e-8
}

impl SpeakerConfig {
    fn lstm_input(&self) -> usize {
        self.word_dim + self.visual_dim + self.hidden_dim
    }

    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let h = self.hidden_dim;
        vec![
            (PROJ_WEIGHT, vec![self.feature_dim, self.visual_dim]),
            (PROJ_BIAS, vec![1, self.visual_dim]),
            (EMBED, vec![self.vocab_size, self.word_dim]),
            (LSTM_WEIGHT, vec![self.lstm_input(), 4 * h]),
            (LSTM_BIAS, vec![1, 4 * h]),
            (OUT_WEIGHT, vec![2 * h, self.vocab_size]),
            (OUT_BIAS, vec![1, self.vocab_size]),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if [self.word_dim, self.visual_dim, self.hidden_dim, self.feature_dim]
            .contains(&0)
            || self.vocab_size <= END
        {
            return Err(Error::Config(format!("degenerate speaker dimensions {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "width")]
pub enum DecodeMode {
    Greedy,
    Beam(usize),
}

/// Per-object decoding state.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub finished: bool,
    pub tokens: Vec<usize>,
}

impl DecoderState {
    pub fn new(hidden: usize) -> Self {
        DecoderState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
            finished: false,
            tokens: Vec::new(),
        }
    }

    fn last_token(&self) -> usize {
        self.tokens.last().copied().unwrap_or(BOS)
    }
}

/// `(1/n) Σ_{j≠i} (h_i − h_j)/‖h_i − h_j‖` over the other entries; pairs
/// closer than `eps` contribute zero, a lone entry gives zeros.
pub fn hidden_difference(hiddens: &[&[f64]], i: usize, eps: f64) -> Vec<f64> {
    let hi = hiddens[i];
    let mut out = vec![0.0; hi.len()];
    if hiddens.len() < 2 {
        return out;
    }
    let inv_n = 1.0 / (hiddens.len() - 1) as f64;
    let mut diff = vec![0.0; hi.len()];
    for (j, hj) in hiddens.iter().enumerate() {
        if j == i {
            continue;
        }
        for k in 0..hi.len() {
            diff[k] = hi[k] - hj[k];
        }
        let norm = l2_norm(&diff);
        if norm < eps {
            continue;
        }
        for (o, d) in out.iter_mut().zip(&diff) {
            *o += inv_n * d / norm;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Speaker {
    pub config: SpeakerConfig,
    pub params: ParamStore,
}

impl Speaker {
    /// Uniform initialization in `[−0.08, 0.08]`.
    pub fn new(config: SpeakerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape) in config.param_shapes() {
            params.insert_uniform(name, &shape, INIT_SCALE, &mut rng)?;
        }
        Ok(Speaker { config, params })
    }

    /// Wraps an existing store after checking every parameter's shape.
    pub fn from_params(config: SpeakerConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        for (name, shape) in config.param_shapes() {
            let got = params.value(name)?.shape();
            if got != shape.as_slice() {
                return Err(Error::dim(format!(
                    "parameter {name} has shape {got:?}, expected {shape:?}"
                )));
            }
        }
        if params.len() != config.param_shapes().len() {
            return Err(Error::Config("unexpected extra parameters".into()));
        }
        Ok(Speaker { config, params })
    }

    fn p(&self, name: &str) -> &Tensor {
        self.params.value(name).expect("validated parameter set")
    }

    /// `x·W_m + b_m`
    pub fn project(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.config.feature_dim {
            return Err(Error::dim(format!(
                "representation has {} entries, projection expects {}",
                features.len(),
                self.config.feature_dim
            )));
        }
        let x = Tensor::matrix(1, features.len(), features.to_vec())?;
        Ok(x.matmul(self.p(PROJ_WEIGHT))?
            .add(self.p(PROJ_BIAS))?
            .into_data())
    }

    /// One LSTM update from `(h, c)` given the previous token and projected
    /// visual vector `v`. Gates are ordered input, forget, output, candidate.
    pub fn lstm_step(&self, h: &[f64], c: &[f64], token: usize, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let cfg = &self.config;
        let hd = cfg.hidden_dim;
        if token >= cfg.vocab_size {
            return Err(Error::Index {
                index: token,
                extent: cfg.vocab_size,
            });
        }
        if h.len() != hd || c.len() != hd || v.len() != cfg.visual_dim {
            return Err(Error::dim("lstm state dimensions"));
        }
        let emb = self.p(EMBED).row(token);
        let w = self.p(LSTM_WEIGHT).data();
        let mut z = self.p(LSTM_BIAS).data().to_vec();
        let n = 4 * hd;
        for (p, &x) in emb.iter().chain(v).chain(h).enumerate() {
            if x == 0.0 {
                continue;
            }
            for (zk, wk) in z.iter_mut().zip(&w[p * n..(p + 1) * n]) {
                *zk += x * wk;
            }
        }
        let mut h_new = vec![0.0; hd];
        let mut c_new = vec![0.0; hd];
        for k in 0..hd {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[hd + k]);
            let o = sigmoid(z[2 * hd + k]);
            let g = z[3 * hd + k].tanh();
            c_new[k] = f * c[k] + i * g;
            h_new[k] = o * c_new[k].tanh();
        }
        Ok((h_new, c_new))
    }

    pub fn word_logits(&self, h: &[f64], hdif: &[f64]) -> Vec<f64> {
        let w = self.p(OUT_WEIGHT).data();
        let v = self.config.vocab_size;
        let mut logits = self.p(OUT_BIAS).data().to_vec();
        for (p, &x) in h.iter().chain(hdif).enumerate() {
            if x == 0.0 {
                continue;
            }
            for (l, wk) in logits.iter_mut().zip(&w[p * v..(p + 1) * v]) {
                *l += x * wk;
            }
        }
        logits
    }

    /// `softmax(W_h [h ‖ h_dif] + b_h)`
    pub fn word_distribution(&self, h: &[f64], hdif: &[f64]) -> Vec<f64> {
        softmax(&self.word_logits(h, hdif))
    }

    /// Teacher-forced log-probabilities of a group of expressions decoded in
    /// lockstep. With `tied`, every step's `h_dif` is taken over the group;
    /// a member past its `END` keeps its final state. Each token list must
    /// end with `END`.
    pub fn group_logprobs(&self, rows: &[(&[f64], &[usize])], tied: bool) -> Result<Vec<f64>> {
        let hd = self.config.hidden_dim;
        let mut vs = Vec::with_capacity(rows.len());
        for (features, tokens) in rows {
            if tokens.last() != Some(&END) {
                return Err(Error::Domain("expression must end with END".into()));
            }
            vs.push(self.project(features)?);
        }
        let mut states: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![0.0; hd], vec![0.0; hd]); rows.len()];
        let mut logp = vec![0.0; rows.len()];
        let max_len = rows.iter().map(|(_, t)| t.len()).max().unwrap_or(0);
        let zeros = vec![0.0; hd];
        for t in 0..max_len {
            for (i, (_, tokens)) in rows.iter().enumerate() {
                if t < tokens.len() {
                    let prev = if t == 0 { BOS } else { tokens[t - 1] };
                    states[i] = self.lstm_step(&states[i].0, &states[i].1, prev, &vs[i])?;
                }
            }
            let hs: Vec<&[f64]> = states.iter().map(|s| s.0.as_slice()).collect();
            for (i, (_, tokens)) in rows.iter().enumerate() {
                if t >= tokens.len() {
                    continue;
                }
                let hdif = if tied {
                    hidden_difference(&hs, i, self.config.hdif_epsilon)
                } else {
                    zeros.clone()
                };
                let lp = log_softmax(&self.word_logits(hs[i], &hdif));
                let target = tokens[t];
                if target >= lp.len() {
                    return Err(Error::Index {
                        index: target,
                        extent: lp.len(),
                    });
                }
                logp[i] += lp[target];
            }
        }
        Ok(logp)
    }

    /// Untied teacher-forced log-probability of one expression (ending in `END`).
    pub fn sentence_logprob(&self, features: &[f64], tokens: &[usize]) -> Result<f64> {
        Ok(self.group_logprobs(&[(features, tokens)], false)?[0])
    }

    /// Decodes one expression per object. Tied greedy decoding runs all
    /// objects in lockstep; tied beam search lets each object's beam compare
    /// against the other objects' greedy trajectories. Outputs end with `END`
    /// unless truncated at `max_len` tokens.
    pub fn generate(
        &self,
        features: &[Vec<f64>],
        mode: DecodeMode,
        tied: bool,
        max_len: usize,
    ) -> Result<Vec<Vec<usize>>> {
        if max_len == 0 {
            return Err(Error::Config("max_len must be >= 1".into()));
        }
        let vs = features
            .iter()
            .map(|f| self.project(f))
            .collect::<Result<Vec<_>>>()?;
        let (greedy, trajectories) = self.greedy_lockstep(&vs, tied, max_len)?;
        match mode {
            DecodeMode::Greedy => Ok(greedy),
            DecodeMode::Beam(width) => {
                if width == 0 {
                    return Err(Error::Config("beam width must be >= 1".into()));
                }
                (0..vs.len())
                    .map(|i| {
                        let co = tied.then_some((&trajectories, i));
                        self.beam_search(&vs[i], co, width, max_len)
                    })
                    .collect()
            }
        }
    }

    /// Returns the decoded tokens and, per object, the hidden state after
    /// every step (repeating the frozen state once finished).
    #[allow(clippy::type_complexity)]
    fn greedy_lockstep(
        &self,
        vs: &[Vec<f64>],
        tied: bool,
        max_len: usize,
    ) -> Result<(Vec<Vec<usize>>, Vec<Vec<Vec<f64>>>)> {
        let hd = self.config.hidden_dim;
        let mut states: Vec<DecoderState> = vs.iter().map(|_| DecoderState::new(hd)).collect();
        let mut traj: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(max_len); vs.len()];
        let zeros = vec![0.0; hd];
        for _ in 0..max_len {
            if states.iter().all(|s| s.finished) {
                break;
            }
            for (s, v) in states.iter_mut().zip(vs) {
                if !s.finished {
                    let (h, c) = self.lstm_step(&s.h, &s.c, s.last_token(), v)?;
                    s.h = h;
                    s.c = c;
                }
            }
            let hs: Vec<&[f64]> = states.iter().map(|s| s.h.as_slice()).collect();
            let mut picks = vec![None; states.len()];
            for (i, s) in states.iter().enumerate() {
                traj[i].push(s.h.clone());
                if s.finished {
                    continue;
                }
                let hdif = if tied {
                    hidden_difference(&hs, i, self.config.hdif_epsilon)
                } else {
                    zeros.clone()
                };
                picks[i] = Some(argmax(&self.word_logits(&s.h, &hdif)));
            }
            for (s, pick) in states.iter_mut().zip(picks) {
                if let Some(tok) = pick {
                    s.tokens.push(tok);
                    s.finished = tok == END;
                }
            }
        }
        Ok((states.into_iter().map(|s| s.tokens).collect(), traj))
    }

    fn beam_search(
        &self,
        v: &[f64],
        co: Option<(&Vec<Vec<Vec<f64>>>, usize)>,
        width: usize,
        max_len: usize,
    ) -> Result<Vec<usize>> {
        struct Hyp {
            tokens: Vec<usize>,
            h: Vec<f64>,
            c: Vec<f64>,
            logp: f64,
        }
        let hd = self.config.hidden_dim;
        let mut alive = vec![Hyp {
            tokens: Vec::new(),
            h: vec![0.0; hd],
            c: vec![0.0; hd],
            logp: 0.0,
        }];
        let mut finished: Vec<(Vec<usize>, f64)> = Vec::new();
        for t in 0..max_len {
            if alive.is_empty() || finished.len() >= width {
                break;
            }
            // (hyp index, token, score, h, c)
            let mut cands: Vec<(usize, usize, f64)> = Vec::new();
            let mut next_states = Vec::with_capacity(alive.len());
            for (hi, hyp) in alive.iter().enumerate() {
                let prev = hyp.tokens.last().copied().unwrap_or(BOS);
                let (h, c) = self.lstm_step(&hyp.h, &hyp.c, prev, v)?;
                let hdif = match co {
                    Some((traj, me)) => {
                        let mut hs: Vec<&[f64]> = Vec::with_capacity(traj.len());
                        for (j, tj) in traj.iter().enumerate() {
                            if j == me {
                                hs.push(&h);
                            } else {
                                let step = t.min(tj.len().saturating_sub(1));
                                hs.push(tj.get(step).map(Vec::as_slice).unwrap_or(&h));
                            }
                        }
                        hidden_difference(&hs, me, self.config.hdif_epsilon)
                    }
                    None => vec![0.0; hd],
                };
                let lp = log_softmax(&self.word_logits(&h, &hdif));
                for (tok, l) in lp.iter().enumerate() {
                    cands.push((hi, tok, hyp.logp + l));
                }
                next_states.push((h, c));
            }
            cands.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
            let mut next = Vec::with_capacity(width);
            for (hi, tok, score) in cands {
                if next.len() + finished.len() >= width {
                    break;
                }
                let mut tokens = alive[hi].tokens.clone();
                tokens.push(tok);
                if tok == END {
                    finished.push((tokens, score));
                } else {
                    next.push(Hyp {
                        tokens,
                        h: next_states[hi].0.clone(),
                        c: next_states[hi].1.clone(),
                        logp: score,
                    });
                }
            }
            alive = next;
        }
        let best_finished = finished
            .into_iter()
            .reduce(|a, b| if b.1 > a.1 { b } else { a });
        Ok(match best_finished {
            Some((tokens, _)) => tokens,
            None => alive
                .into_iter()
                .reduce(|a, b| if b.logp > a.logp { b } else { a })
                .map(|h| h.tokens)
                .unwrap_or_default(),
        })
    }
}

/// First index of the maximum (lowest token id wins ties).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Teacher-forced rows for [`sequence_nll`]. Rows sharing a `groups` label
/// are decoded in lockstep and see each other through `h_dif` when tied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SequenceBatch {
    pub features: Vec<Vec<f64>>,
    pub tokens: Vec<Vec<usize>>,
    pub groups: Vec<usize>,
}

impl SequenceBatch {
    pub fn push(&mut self, features: Vec<f64>, tokens: Vec<usize>, group: usize) {
        self.features.push(features);
        self.tokens.push(tokens);
        self.groups.push(group);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Records the speaker on `tape` and returns an `n × 1` column of per-row
/// negative log-likelihoods (summed over steps, `END` included).
pub fn sequence_nll(
    tape: &mut Tape,
    params: &ParamStore,
    cfg: &SpeakerConfig,
    batch: &SequenceBatch,
    tied: bool,
) -> Result<Var> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Config("empty sequence batch".into()));
    }
    let hd = cfg.hidden_dim;
    let mut x = Vec::with_capacity(n * cfg.feature_dim);
    for (f, t) in batch.features.iter().zip(&batch.tokens) {
        if f.len() != cfg.feature_dim {
            return Err(Error::dim(format!(
                "row has {} features, expected {}",
                f.len(),
                cfg.feature_dim
            )));
        }
        if t.last() != Some(&END) {
            return Err(Error::Domain("expression must end with END".into()));
        }
        x.extend_from_slice(f);
    }
    let x = tape.constant(Tensor::matrix(n, cfg.feature_dim, x)?)?;
    let wm = tape.param(params, PROJ_WEIGHT)?;
    let bm = tape.param(params, PROJ_BIAS)?;
    let emb = tape.param(params, EMBED)?;
    let wl = tape.param(params, LSTM_WEIGHT)?;
    let bl = tape.param(params, LSTM_BIAS)?;
    let wh = tape.param(params, OUT_WEIGHT)?;
    let bh = tape.param(params, OUT_BIAS)?;

    let xw = tape.matmul(x, wm)?;
    let v = tape.add_row(xw, bm)?;
    let mut h = tape.zeros(n, hd);
    let mut c = tape.zeros(n, hd);
    let zeros = tape.zeros(n, hd);
    let max_len = batch.tokens.iter().map(Vec::len).max().unwrap_or(0);
    let mut total: Option<Var> = None;

    for t in 0..max_len {
        let active: Vec<bool> = batch.tokens.iter().map(|tok| t < tok.len()).collect();
        let inputs: Vec<usize> = batch
            .tokens
            .iter()
            .map(|tok| match t {
                0 => BOS,
                _ => tok.get(t - 1).copied().unwrap_or(END),
            })
            .collect();
        let targets: Vec<usize> = batch
            .tokens
            .iter()
            .map(|tok| tok.get(t).copied().unwrap_or(END))
            .collect();

        let e = tape.gather(emb, &inputs)?;
        let zin = tape.concat(&[e, v, h])?;
        let z = tape.matmul(zin, wl)?;
        let z = tape.add_row(z, bl)?;
        let zi = tape.slice(z, 0, hd)?;
        let zf = tape.slice(z, hd, 2 * hd)?;
        let zo = tape.slice(z, 2 * hd, 3 * hd)?;
        let zg = tape.slice(z, 3 * hd, 4 * hd)?;
        let i = tape.sigmoid(zi)?;
        let f = tape.sigmoid(zf)?;
        let o = tape.sigmoid(zo)?;
        let g = tape.tanh(zg)?;
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_new = tape.add(fc, ig)?;
        let tc = tape.tanh(c_new)?;
        let h_new = tape.mul(o, tc)?;
        if active.iter().all(|&a| a) {
            h = h_new;
            c = c_new;
        } else {
            h = tape.blend(&active, h_new, h)?;
            c = tape.blend(&active, c_new, c)?;
        }

        let hdif = if tied {
            tape.hidden_difference(h, &batch.groups, cfg.hdif_epsilon)?
        } else {
            zeros
        };
        let hcat = tape.concat(&[h, hdif])?;
        let logits = tape.matmul(hcat, wh)?;
        let logits = tape.add_row(logits, bh)?;
        let nll = tape.cross_entropy_rows(logits, &targets, &active)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, nll)?,
            None => nll,
        });
    }
    total.ok_or_else(|| Error::Config("empty expressions".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;

    pub(crate) fn tiny_config() -> SpeakerConfig {
        SpeakerConfig {
            word_dim: 3,
            visual_dim: 4,
            hidden_dim: 5,
            vocab_size: 7,
            feature_dim: 6,
            hdif_epsilon: 1e-8,
        }
    }

    fn set_all(s: &mut Speaker, value: f64) {
        for (_, p) in s.params.iter_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v = value);
        }
    }

    fn feats(seed: u64, n: usize) -> Vec<f64> {
        (0..n).map(|k| ((seed * 31 + k as u64 * 7) % 11) as f64 / 5.0 - 1.0).collect()
    }

    #[test]
    fn projection_examples() {
        let mut s = Speaker::new(tiny_config(), 1).unwrap();
        s.params.value_mut(PROJ_WEIGHT).unwrap().data_mut().fill(0.0);
        let b = s.params.value(PROJ_BIAS).unwrap().data().to_vec();
        assert_eq!(s.project(&feats(3, 6)).unwrap(), b);
        assert!(matches!(s.project(&[1.0; 5]), Err(Error::Dimension(_))));

        // square identity-like projection passes the representation through
        let mut cfg = tiny_config();
        cfg.visual_dim = cfg.feature_dim;
        let mut s = Speaker::new(cfg, 1).unwrap();
        *s.params.value_mut(PROJ_WEIGHT).unwrap() = Tensor::identity(6);
        s.params.value_mut(PROJ_BIAS).unwrap().data_mut().fill(0.0);
        assert_eq!(s.project(&feats(4, 6)).unwrap(), feats(4, 6));
    }

    #[test]
    fn projection_matches_independent_affine_map() {
        let s = Speaker::new(tiny_config(), 42).unwrap();
        let x = feats(9, 6);
        let w = s.params.value(PROJ_WEIGHT).unwrap();
        let b = s.params.value(PROJ_BIAS).unwrap();
        let got = s.project(&x).unwrap();
        for col in 0..4 {
            let mut acc = b.data()[col];
            for (row, xv) in x.iter().enumerate() {
                acc += xv * w.get(row, col);
            }
            assert!((got[col] - acc).abs() < 1e-14);
        }
    }

    #[test]
    fn lstm_step_at_zero_params() {
        let mut s = Speaker::new(tiny_config(), 1).unwrap();
        set_all(&mut s, 0.0);
        let (h, c) = s.lstm_step(&[0.0; 5], &[0.0; 5], 3, &[0.0; 4]).unwrap();
        assert_eq!(h, vec![0.0; 5]);
        assert_eq!(c, vec![0.0; 5]);
    }

    #[test]
    fn forget_gate_saturation_keeps_cell() {
        let mut s = Speaker::new(tiny_config(), 5).unwrap();
        let hd = 5;
        {
            let b = s.params.value_mut(LSTM_BIAS).unwrap().data_mut();
            b[hd..2 * hd].fill(50.0);
        }
        let c0 = [0.3, -0.2, 0.9, 0.0, -1.1];
        let h0 = [0.1, 0.2, -0.3, 0.05, 0.0];
        let v = [0.2, -0.1, 0.0, 0.4];
        let (_, c1) = s.lstm_step(&h0, &c0, 4, &v).unwrap();

        // input term recomputed by hand: i * g from the same pre-activations
        let emb = s.params.value(EMBED).unwrap().row(4).to_vec();
        let w = s.params.value(LSTM_WEIGHT).unwrap();
        let b = s.params.value(LSTM_BIAS).unwrap();
        let x: Vec<f64> = emb.iter().chain(&v).chain(&h0).copied().collect();
        for k in 0..hd {
            let pre = |col: usize| b.data()[col] + x.iter().enumerate().map(|(r, xv)| xv * w.get(r, col)).sum::<f64>();
            let input = sigmoid(pre(k)) * pre(3 * hd + k).tanh();
            assert!((c1[k] - (c0[k] + input)).abs() < 1e-12);
        }
    }

    #[test]
    fn hidden_difference_examples() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(hidden_difference(&[&[1.0, 2.0]], 0, 1e-8), vec![0.0, 0.0]);
        let d = hidden_difference(&[&[1.0, 0.0], &[0.0, 1.0]], 0, 1e-8);
        assert!((d[0] - r).abs() < 1e-12 && (d[1] + r).abs() < 1e-12);
        let same = [0.4, -0.2];
        assert_eq!(hidden_difference(&[&same, &same, &same], 1, 1e-8), vec![0.0, 0.0]);
    }

    #[test]
    fn word_distribution_examples() {
        let mut s = Speaker::new(tiny_config(), 2).unwrap();
        let h = feats(1, 5);
        let hd = feats(2, 5);
        let p = s.word_distribution(&h, &hd);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        // independent softmax of an independently computed affine map
        let w = s.params.value(OUT_WEIGHT).unwrap();
        let b = s.params.value(OUT_BIAS).unwrap();
        let logits: Vec<f64> = (0..7)
            .map(|k| b.data()[k] + h.iter().chain(&hd).enumerate().map(|(r, x)| x * w.get(r, k)).sum::<f64>())
            .collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        for (pk, lk) in p.iter().zip(&logits) {
            assert!((pk - lk.exp() / z).abs() < 1e-12);
        }

        // zeroing the hidden-difference rows removes the dependency
        s.params.value_mut(OUT_WEIGHT).unwrap().data_mut()[5 * 7..].fill(0.0);
        assert_eq!(s.word_distribution(&h, &hd), s.word_distribution(&h, &[9.0; 5]));

        set_all(&mut s, 0.0);
        assert!(s.word_distribution(&h, &hd).iter().all(|&q| (q - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn uniform_model_logprob() {
        let mut s = Speaker::new(tiny_config(), 2).unwrap();
        s.params.value_mut(OUT_WEIGHT).unwrap().data_mut().fill(0.0);
        s.params.value_mut(OUT_BIAS).unwrap().data_mut().fill(0.0);
        let tokens = [3, 4, 5, END];
        let lp = s.sentence_logprob(&feats(0, 6), &tokens).unwrap();
        assert!((lp + 4.0 * 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn logprob_matches_manual_step_accumulation() {
        let s = Speaker::new(tiny_config(), 8).unwrap();
        let x = feats(5, 6);
        let tokens = [4, 3, END];
        let v = s.project(&x).unwrap();
        let (mut h, mut c) = (vec![0.0; 5], vec![0.0; 5]);
        let mut manual = 0.0;
        let mut prev = BOS;
        for &tok in &tokens {
            (h, c) = s.lstm_step(&h, &c, prev, &v).unwrap();
            manual += s.word_distribution(&h, &[0.0; 5])[tok].ln();
            prev = tok;
        }
        let lp = s.sentence_logprob(&x, &tokens).unwrap();
        assert!((lp - manual).abs() < 1e-12);
        assert!(lp <= 0.0);
    }

    #[test]
    fn tied_equals_untied_for_single_object() {
        let s = Speaker::new(tiny_config(), 3).unwrap();
        let x = feats(2, 6);
        let t = [5usize, 6, END];
        assert_eq!(
            s.group_logprobs(&[(&x, &t)], true).unwrap(),
            s.group_logprobs(&[(&x, &t)], false).unwrap()
        );
        for mode in [DecodeMode::Greedy, DecodeMode::Beam(3)] {
            assert_eq!(
                s.generate(std::slice::from_ref(&x), mode, true, 8).unwrap(),
                s.generate(std::slice::from_ref(&x), mode, false, 8).unwrap()
            );
        }
    }

    #[test]
    fn rigged_end_gives_single_token_outputs() {
        let mut s = Speaker::new(tiny_config(), 3).unwrap();
        s.params.value_mut(OUT_BIAS).unwrap().data_mut()[END] = 100.0;
        let out = s
            .generate(&[feats(1, 6), feats(2, 6)], DecodeMode::Greedy, true, 5)
            .unwrap();
        assert_eq!(out, vec![vec![END], vec![END]]);
        let out = s.generate(&[feats(1, 6)], DecodeMode::Beam(2), false, 5).unwrap();
        assert_eq!(out, vec![vec![END]]);
    }

    #[test]
    fn truncation_at_max_len() {
        let mut s = Speaker::new(tiny_config(), 3).unwrap();
        s.params.value_mut(OUT_BIAS).unwrap().data_mut()[4] = 100.0;
        let out = s.generate(&[feats(1, 6)], DecodeMode::Greedy, false, 3).unwrap();
        assert_eq!(out, vec![vec![4, 4, 4]]);
        assert!(s.generate(&[feats(1, 6)], DecodeMode::Greedy, false, 0).is_err());
    }

    #[test]
    fn tape_and_loop_routes_agree() {
        let s = Speaker::new(tiny_config(), 11).unwrap();
        let rows = [
            (feats(1, 6), vec![3usize, 4, END]),
            (feats(2, 6), vec![5usize, END]),
            (feats(3, 6), vec![6usize, 3, 4, 5, END]),
            (feats(4, 6), vec![4usize, END]),
        ];
        let groups = [0usize, 0, 0, 1];
        for tied in [false, true] {
            let mut batch = SequenceBatch::default();
            for ((f, t), &g) in rows.iter().zip(&groups) {
                batch.push(f.clone(), t.clone(), g);
            }
            let mut tape = Tape::new();
            let nll = sequence_nll(&mut tape, &s.params, &s.config, &batch, tied).unwrap();
            let tape_vals = tape.value(nll).data().to_vec();

            let g0: Vec<(&[f64], &[usize])> = rows[..3].iter().map(|(f, t)| (f.as_slice(), t.as_slice())).collect();
            let mut loop_vals = s.group_logprobs(&g0, tied).unwrap();
            loop_vals.extend(s.group_logprobs(&[(&rows[3].0, &rows[3].1)], tied).unwrap());
            for (a, b) in tape_vals.iter().zip(&loop_vals) {
                assert!((a + b).abs() < 1e-10, "tied={tied}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn full_speaker_gradient_check() {
        let mut s = Speaker::new(tiny_config(), 21).unwrap();
        // larger weights keep every gradient entry well above roundoff
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for (_, p) in s.params.iter_mut() {
            for v in p.value.data_mut() {
                *v = rand::Rng::random_range(&mut rng, -0.5..0.5);
            }
        }
        let mut batch = SequenceBatch::default();
        batch.push(feats(1, 6), vec![3, 4, END], 0);
        batch.push(feats(2, 6), vec![5, END], 0);
        let cfg = s.config.clone();
        let report = grad_check(
            &s.params,
            |p, t| {
                let nll = sequence_nll(t, p, &cfg, &batch, true)?;
                t.sum(nll)
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn beam_width_one_matches_greedy_untied() {
        let s = Speaker::new(tiny_config(), 17).unwrap();
        let f = vec![feats(1, 6), feats(7, 6)];
        assert_eq!(
            s.generate(&f, DecodeMode::Beam(1), false, 6).unwrap(),
            s.generate(&f, DecodeMode::Greedy, false, 6).unwrap()
        );
    }
}
