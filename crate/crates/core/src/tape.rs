//! Recorded computation tape with per-operation analytic backward passes.
//!
//! Every node value is a matrix (`rows × cols`). Parameters enter the tape
//! through [`Tape::param`], which copies the current value out of a
//! [`ParamStore`]; [`Tape::backward`] accumulates the resulting gradients back
//! into the store, so calling it twice without a reset doubles them.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{self, l2_norm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(String),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    Gather(Var, Vec<usize>),
    Blend(Vec<bool>, Var, Var),
    HiddenDiff {
        input: Var,
        groups: Vec<Vec<usize>>,
        eps: f64,
    },
    CrossEntropy {
        logits: Var,
        mask: Vec<bool>,
        probs: Vec<f64>,
    },
    Sum(Var),
    SoftmaxRatio {
        scores: Var,
        sets: Vec<Vec<usize>>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

fn as_matrix(t: Tensor) -> Tensor {
    if t.rank() == 2 {
        t
    } else {
        let (r, c) = (t.rows(), t.cols());
        Tensor::matrix(r, c, t.into_data()).expect("same element count")
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite value produced by {}",
                op_name(&op)
            )));
        }
        self.nodes.push(Node {
            value: as_matrix(value),
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.push(Tensor::zeros(&[rows, cols]), Op::Leaf)
            .expect("zeros are finite")
    }

    /// Binds a parameter from the store. Repeated calls reuse the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store.value(name)?.clone();
        let v = self.push(value, Op::Param(name.to_string()))?;
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::MatMul(a, b))
    }

    /// Elementwise sum of equally shaped operands.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "add {:?} + {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let value = self.value(a).add(self.value(b))?;
        self.push(value, Op::Add(a, b))
    }

    /// Adds a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (_, c) = self.shape(a);
        if self.shape(row) != (1, c) {
            return Err(Error::dim(format!(
                "bias {:?} does not match {:?}",
                self.shape(row),
                self.shape(a)
            )));
        }
        let value = self.value(a).add(self.value(row))?;
        self.push(value, Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim("sub shape mismatch"));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let (r, c) = self.shape(a);
        self.push(Tensor::matrix(r, c, data)?, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        self.push(value, Op::Mul(a, b))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).tanh();
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).sigmoid();
        self.push(value, Op::Sigmoid(a))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v * factor);
        self.push(value, Op::Scale(a, factor))
    }

    /// Column-wise concatenation of operands with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.shape(parts[0]).0;
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(Error::dim("concat row mismatch"));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        self.push(Tensor::matrix(rows, cols, data)?, Op::Concat(parts.to_vec()))
    }

    /// Columns `start..end` of `a`.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if start >= end || end > cols {
            return Err(Error::dim(format!("slice {start}..{end} of {cols} columns")));
        }
        let src = self.value(a);
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&src.row(r)[start..end]);
        }
        self.push(
            Tensor::matrix(rows, end - start, data)?,
            Op::Slice(a, start, end),
        )
    }

    /// Row lookup into an embedding table.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, cols) = self.shape(table);
        let src = self.value(table);
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index {
                    index: id,
                    extent: rows,
                });
            }
            data.extend_from_slice(src.row(id));
        }
        self.push(
            Tensor::matrix(ids.len(), cols, data)?,
            Op::Gather(table, ids.to_vec()),
        )
    }

    /// Row-wise select: row `i` comes from `a` where `mask[i]`, else from `b`.
    pub fn blend(&mut self, mask: &[bool], a: Var, b: Var) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if self.shape(b) != (rows, cols) || mask.len() != rows {
            return Err(Error::dim("blend shape mismatch"));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for (r, &m) in mask.iter().enumerate() {
            let src = if m { self.value(a) } else { self.value(b) };
            data.extend_from_slice(src.row(r));
        }
        self.push(
            Tensor::matrix(rows, cols, data)?,
            Op::Blend(mask.to_vec(), a, b),
        )
    }

    /// For every row `i`, the mean over the other rows `j` of its group of
    /// `(h_i − h_j) / ‖h_i − h_j‖`. Pairs closer than `eps` contribute zero;
    /// a row alone in its group gets a zero vector. `groups[i]` labels row `i`.
    pub fn hidden_difference(&mut self, input: Var, groups: &[usize], eps: f64) -> Result<Var> {
        let (rows, cols) = self.shape(input);
        if groups.len() != rows {
            return Err(Error::dim("group labels do not match rows"));
        }
        let members = group_members(groups);
        let h = self.value(input);
        let mut data = vec![0.0; rows * cols];
        let mut diff = vec![0.0; cols];
        for set in &members {
            if set.len() < 2 {
                continue;
            }
            let inv_n = 1.0 / (set.len() - 1) as f64;
            for &i in set {
                for &j in set {
                    if i == j {
                        continue;
                    }
                    for (k, d) in diff.iter_mut().enumerate() {
                        *d = h.get(i, k) - h.get(j, k);
                    }
                    let norm = l2_norm(&diff);
                    if norm < eps {
                        continue;
                    }
                    let out = &mut data[i * cols..(i + 1) * cols];
                    for (o, d) in out.iter_mut().zip(&diff) {
                        *o += inv_n * d / norm;
                    }
                }
            }
        }
        self.push(
            Tensor::matrix(rows, cols, data)?,
            Op::HiddenDiff {
                input,
                groups: members,
                eps,
            },
        )
    }

    /// Per-row negative log-likelihood `−log softmax(logits_i)[targets_i]`
    /// as an `n × 1` column; rows with `mask[i] == false` yield zero.
    pub fn cross_entropy_rows(
        &mut self,
        logits: Var,
        targets: &[usize],
        mask: &[bool],
    ) -> Result<Var> {
        let (rows, cols) = self.shape(logits);
        if targets.len() != rows || mask.len() != rows {
            return Err(Error::dim("targets/mask do not match logits rows"));
        }
        let mut out = vec![0.0; rows];
        let mut probs = vec![0.0; rows * cols];
        for r in 0..rows {
            if !mask[r] {
                continue;
            }
            let (loss, grad) = tensor::softmax_cross_entropy(self.value(logits).row(r), targets[r])?;
            out[r] = loss;
            probs[r * cols..(r + 1) * cols].copy_from_slice(&grad);
        }
        self.push(
            Tensor::matrix(rows, 1, out)?,
            Op::CrossEntropy {
                logits,
                mask: mask.to_vec(),
                probs,
            },
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::matrix(1, 1, vec![s])?, Op::Sum(a))
    }

    /// Softmax-ratio terms over candidate sets of a column of negative
    /// log-likelihoods. For each set (target first), the output is
    /// `−log( exp(−s_t) / Σ_j exp(−s_j) )`.
    pub fn softmax_ratio(&mut self, scores: Var, sets: &[Vec<usize>]) -> Result<Var> {
        let (rows, cols) = self.shape(scores);
        if cols != 1 {
            return Err(Error::dim("softmax_ratio expects a column"));
        }
        let s = self.value(scores).data();
        let mut out = Vec::with_capacity(sets.len());
        for set in sets {
            if set.is_empty() || set.iter().any(|&i| i >= rows) {
                return Err(Error::dim("bad candidate set"));
            }
            let neg: Vec<f64> = set.iter().map(|&i| -s[i]).collect();
            out.push(s[set[0]] + tensor::log_sum_exp(&neg));
        }
        self.push(
            Tensor::matrix(sets.len(), 1, out)?,
            Op::SoftmaxRatio {
                scores,
                sets: sets.to_vec(),
            },
        )
    }

    /// Reverse pass from a `1 × 1` root; parameter gradients are added into `store`.
    pub fn backward(&self, root: Var, store: &mut ParamStore) -> Result<()> {
        if self.shape(root) != (1, 1) {
            return Err(Error::dim("backward root must be a scalar"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(name) => {
                    let p = store
                        .get_mut(name)
                        .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))?;
                    if p.grad.len() != g.len() {
                        return Err(Error::dim(format!("gradient shape for {name}")));
                    }
                    for (acc, v) in p.grad.data_mut().iter_mut().zip(&g) {
                        *acc += v;
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.shape(*a);
                    let n = self.shape(*b).1;
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    tensor::matmul_a_bt_acc(&g, bv, slot(&mut grads, *a, m * k), m, k, n);
                    tensor::matmul_at_b_acc(av, &g, slot(&mut grads, *b, k * n), m, k, n);
                }
                Op::Add(a, b) => {
                    add_into(slot(&mut grads, *a, g.len()), &g);
                    add_into(slot(&mut grads, *b, g.len()), &g);
                }
                Op::AddRow(a, row) => {
                    add_into(slot(&mut grads, *a, g.len()), &g);
                    let c = self.shape(*row).1;
                    let gr = slot(&mut grads, *row, c);
                    for (i, v) in g.iter().enumerate() {
                        gr[i % c] += v;
                    }
                }
                Op::Sub(a, b) => {
                    add_into(slot(&mut grads, *a, g.len()), &g);
                    let gb = slot(&mut grads, *b, g.len());
                    for (acc, v) in gb.iter_mut().zip(&g) {
                        *acc -= v;
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    let ga = slot(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                    let gb = slot(&mut grads, *b, g.len());
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let ga = slot(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let ga = slot(&mut grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                }
                Op::Scale(a, f) => {
                    let ga = slot(&mut grads, *a, g.len());
                    for (acc, v) in ga.iter_mut().zip(&g) {
                        *acc += v * f;
                    }
                }
                Op::Concat(parts) => {
                    let rows = node.value.rows();
                    let total = node.value.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let c = self.shape(p).1;
                        let gp = slot(&mut grads, p, rows * c);
                        for r in 0..rows {
                            add_into(
                                &mut gp[r * c..(r + 1) * c],
                                &g[r * total + offset..r * total + offset + c],
                            );
                        }
                        offset += c;
                    }
                }
                Op::Slice(a, start, end) => {
                    let (rows, cols) = self.shape(*a);
                    let w = end - start;
                    let ga = slot(&mut grads, *a, rows * cols);
                    for r in 0..rows {
                        add_into(&mut ga[r * cols + start..r * cols + end], &g[r * w..(r + 1) * w]);
                    }
                }
                Op::Gather(table, ids) => {
                    let (rows, cols) = self.shape(*table);
                    let gt = slot(&mut grads, *table, rows * cols);
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * cols..(id + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    }
                }
                Op::Blend(mask, a, b) => {
                    let cols = node.value.cols();
                    let len = g.len();
                    for (r, &m) in mask.iter().enumerate() {
                        let target = if m { *a } else { *b };
                        let gt = slot(&mut grads, target, len);
                        add_into(&mut gt[r * cols..(r + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    }
                }
                Op::HiddenDiff { input, groups, eps } => {
                    let (rows, cols) = self.shape(*input);
                    let h = self.value(*input);
                    let gh = slot(&mut grads, *input, rows * cols);
                    let mut u = vec![0.0; cols];
                    for set in groups {
                        if set.len() < 2 {
                            continue;
                        }
                        let inv_n = 1.0 / (set.len() - 1) as f64;
                        for &i in set {
                            let gi = &g[i * cols..(i + 1) * cols];
                            for &j in set {
                                if i == j {
                                    continue;
                                }
                                for (k, d) in u.iter_mut().enumerate() {
                                    *d = h.get(i, k) - h.get(j, k);
                                }
                                let norm = l2_norm(&u);
                                if norm < *eps {
                                    continue;
                                }
                                u.iter_mut().for_each(|d| *d /= norm);
                                let proj: f64 = u.iter().zip(gi).map(|(a, b)| a * b).sum();
                                for k in 0..cols {
                                    let gd = inv_n * (gi[k] - u[k] * proj) / norm;
                                    gh[i * cols + k] += gd;
                                    gh[j * cols + k] -= gd;
                                }
                            }
                        }
                    }
                }
                Op::CrossEntropy {
                    logits,
                    mask,
                    probs,
                } => {
                    let (rows, cols) = self.shape(*logits);
                    let gl = slot(&mut grads, *logits, rows * cols);
                    for r in 0..rows {
                        if !mask[r] || g[r] == 0.0 {
                            continue;
                        }
                        for c in 0..cols {
                            gl[r * cols + c] += g[r] * probs[r * cols + c];
                        }
                    }
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    let ga = slot(&mut grads, *a, n);
                    ga.iter_mut().for_each(|v| *v += g[0]);
                }
                Op::SoftmaxRatio { scores, sets } => {
                    let s = self.value(*scores).data();
                    let n = s.len();
                    let gs = slot(&mut grads, *scores, n);
                    for (k, set) in sets.iter().enumerate() {
                        let neg: Vec<f64> = set.iter().map(|&i| -s[i]).collect();
                        let p = tensor::softmax(&neg);
                        gs[set[0]] += g[k];
                        for (&i, pi) in set.iter().zip(&p) {
                            gs[i] -= g[k] * pi;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, v) in acc.iter_mut().zip(g) {
        *a += v;
    }
}

fn group_members(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (row, &label) in labels.iter().enumerate() {
        let slot = *index.entry(label).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[slot].push(row);
    }
    members
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Param(_) => "param",
        Op::MatMul(..) => "matmul",
        Op::Add(..) | Op::AddRow(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Tanh(_) => "tanh",
        Op::Sigmoid(_) => "sigmoid",
        Op::Scale(..) => "scale",
        Op::Concat(_) => "concat",
        Op::Slice(..) => "slice",
        Op::Gather(..) => "gather",
        Op::Blend(..) => "blend",
        Op::HiddenDiff { .. } => "hidden_difference",
        Op::CrossEntropy { .. } => "cross_entropy",
        Op::Sum(_) => "sum",
        Op::SoftmaxRatio { .. } => "softmax_ratio",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut store = ParamStore::new();
        store
            .insert("z", Tensor::matrix(1, 3, vec![1.0, 2.0, 0.5]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let z = tape.param(&store, "z").unwrap();
        let ce = tape.cross_entropy_rows(z, &[1], &[true]).unwrap();
        let loss = tape.sum(ce).unwrap();
        tape.backward(loss, &mut store).unwrap();
        let mut expected = tensor::softmax(&[1.0, 2.0, 0.5]);
        expected[1] -= 1.0;
        let got = store.get("z").unwrap().grad.data();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn masked_rows_contribute_nothing() {
        let mut store = ParamStore::new();
        store
            .insert("z", Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let z = tape.param(&store, "z").unwrap();
        let ce = tape.cross_entropy_rows(z, &[0, 1], &[true, false]).unwrap();
        assert_eq!(tape.value(ce).data()[1], 0.0);
        let loss = tape.sum(ce).unwrap();
        tape.backward(loss, &mut store).unwrap();
        assert_eq!(&store.get("z").unwrap().grad.data()[2..], &[0.0, 0.0]);
    }

    #[test]
    fn hidden_difference_forward() {
        let mut tape = Tape::new();
        let h = tape
            .constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap())
            .unwrap();
        let d = tape.hidden_difference(h, &[0, 0], 1e-8).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let v = tape.value(d).data();
        assert!((v[0] - r).abs() < 1e-12 && (v[1] + r).abs() < 1e-12);
        assert!((v[2] + r).abs() < 1e-12 && (v[3] - r).abs() < 1e-12);

        // separate groups never interact
        let d = tape.hidden_difference(h, &[0, 1], 1e-8).unwrap();
        assert!(tape.value(d).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn softmax_ratio_hand_value() {
        let mut tape = Tape::new();
        let s = tape
            .constant(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap())
            .unwrap();
        let r = tape.softmax_ratio(s, &[vec![0, 1]]).unwrap();
        let expected = -((-1f64).exp() / ((-1f64).exp() + (-2f64).exp())).ln();
        assert!((tape.value(r).item() - expected).abs() < 1e-12);
        assert!((expected - 0.3133).abs() < 1e-4);
    }

    #[test]
    fn backward_twice_doubles() {
        let mut store = ParamStore::new();
        store
            .insert("w", Tensor::matrix(2, 2, vec![0.3, -0.2, 0.1, 0.4]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let w = tape.param(&store, "w").unwrap();
        let t = tape.tanh(w).unwrap();
        let m = tape.mul(t, w).unwrap();
        let loss = tape.sum(m).unwrap();
        tape.backward(loss, &mut store).unwrap();
        let once = store.get("w").unwrap().grad.clone();
        tape.backward(loss, &mut store).unwrap();
        let twice = &store.get("w").unwrap().grad;
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert_eq!(2.0 * a, *b);
        }
    }
}
