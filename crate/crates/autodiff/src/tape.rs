use std::collections::HashMap;

use crate::kernels::{matmul, matmul_a_bt_acc, matmul_at_b_acc};
use crate::{AutodiffError, Result, Tensor};

const BN_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

/// Whether batch normalization uses batch statistics or frozen running ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Eval,
}

/// Per-channel batch statistics observed by a training-mode batch norm.
/// `var` is the unbiased estimate used for running averages.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    BatchedMatMul { a: Var, b: Var },
    Add { a: Var, b: Var },
    AddRow { a: Var, bias: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, factor: f64 },
    Concat { parts: Vec<Var>, axis: usize },
    Gather { a: Var, rows: Vec<usize> },
    WeightedGather { a: Var, rows: Vec<usize>, weights: Vec<f64>, k: usize },
    GroupMax { a: Var, argmax: Vec<usize> },
    Relu { a: Var },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, batch: bool },
    Softmax { a: Var },
    Reshape { a: Var },
    Sum { a: Var },
    Mean { a: Var },
    CrossEntropy { logits: Var, probs: Vec<f64>, labels: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records operations in creation (hence topological) order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    signature: Option<u64>,
}

fn mix(h: u64, x: u64) -> u64 {
    (h ^ x).wrapping_mul(0x0000_0100_0000_01b3)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Starts hashing every data-dependent branch (ReLU masks, max-pool
    /// winners, recorded neighbor selections). Two evaluations with the same
    /// signature followed the same piecewise-smooth region.
    pub fn track_branches(&mut self) {
        self.signature = Some(0xcbf2_9ce4_8422_2325);
    }

    pub fn branch_signature(&self) -> Option<u64> {
        self.signature
    }

    /// Folds externally computed discrete choices (e.g. neighbor indices)
    /// into the branch signature.
    pub fn record_branch(&mut self, choices: &[usize]) {
        if let Some(h) = self.signature.as_mut() {
            for &c in choices {
                *h = mix(*h, c as u64);
            }
            *h = mix(*h, u64::MAX);
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Records an input; it receives a gradient iff `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let needs_grad = value.requires_grad();
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value: value.with_grad(false), op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, needs_grad: bool) -> Result<Var> {
        if !value.data().iter().fold(0.0, |acc, v| acc + v * 0.0).is_finite() {
            return Err(AutodiffError::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> AutodiffError {
        AutodiffError::Shape { op, lhs: self.shape(a).to_vec(), rhs: self.shape(b).to_vec() }
    }

    /// `[m,k] · [k,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.shape_err("matmul", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let needs = self.needs(a) || self.needs(b);
        self.push("matmul", Tensor::from_parts(vec![m, n], data), Op::MatMul { a, b }, needs)
    }

    /// `[g,m,k] · [g,k,n]`, one product per leading index.
    pub fn batched_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(self.shape_err("batched_matmul", a, b));
        }
        let (g, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(g * m * n);
        for i in 0..g {
            data.extend(matmul(&da[i * m * k..(i + 1) * m * k], &db[i * k * n..(i + 1) * k * n], m, k, n));
        }
        let needs = self.needs(a) || self.needs(b);
        self.push("batched_matmul", Tensor::from_parts(vec![g, m, n], data), Op::BatchedMatMul { a, b }, needs)
    }

    fn elementwise(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_err(name, a, b));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(self.shape(a).to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.elementwise("add", a, b, |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        self.push("add", value, Op::Add { a, b }, needs)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.elementwise("sub", a, b, |x, y| x - y)?;
        let needs = self.needs(a) || self.needs(b);
        self.push("sub", value, Op::Sub { a, b }, needs)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.elementwise("mul", a, b, |x, y| x * y)?;
        let needs = self.needs(a) || self.needs(b);
        self.push("mul", value, Op::Mul { a, b }, needs)
    }

    /// Adds a length-`c` vector to every row of a tensor whose last dimension is `c`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb.len() != 1 || sa.last() != Some(&sb[0]) {
            return Err(self.shape_err("add_bias", a, bias));
        }
        let c = sb[0];
        let b = self.value(bias).data();
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_exact_mut(c) {
            for (x, bj) in row.iter_mut().zip(b) {
                *x += bj;
            }
        }
        let value = Tensor::from_parts(sa.to_vec(), data);
        let needs = self.needs(a) || self.needs(bias);
        self.push("add_bias", value, Op::AddRow { a, bias }, needs)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let data = self.value(a).data().iter().map(|x| x * factor).collect();
        let value = Tensor::from_parts(self.shape(a).to_vec(), data);
        let needs = self.needs(a);
        self.push("scale", value, Op::Scale { a, factor }, needs)
    }

    /// Concatenates tensors of equal rank along `axis`.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| AutodiffError::Argument("concat of nothing".into()))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(AutodiffError::Argument(format!("concat axis {axis} for rank {}", base.len())));
        }
        for &p in &parts[1..] {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(self.shape_err("concat", first, p));
            }
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let total_axis: usize = parts.iter().map(|&p| self.shape(p)[axis]).sum();
        let mut data = Vec::with_capacity(outer * total_axis * inner);
        for o in 0..outer {
            for &p in parts {
                let chunk = self.shape(p)[axis] * inner;
                data.extend_from_slice(&self.value(p).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total_axis;
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push("concat", Tensor::from_parts(shape, data), Op::Concat { parts: parts.to_vec(), axis }, needs)
    }

    /// Selects rows (first-axis slices) by index; repetitions allowed.
    pub fn gather(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (n, w) = (t.rows(), t.row_len());
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(AutodiffError::Argument(format!("gather index {bad} out of {n} rows")));
        }
        if rows.is_empty() {
            return Err(AutodiffError::Argument("gather of zero rows".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            data.extend_from_slice(t.row(r));
        }
        let mut shape = t.shape().to_vec();
        shape[0] = rows.len();
        let needs = self.needs(a);
        self.push("gather", Tensor::from_parts(shape, data), Op::Gather { a, rows: rows.to_vec() }, needs)
    }

    /// `out[i] = Σ_j weights[i·k + j] · a[rows[i·k + j]]`, a fixed sparse
    /// combination of rows (interpolation).
    pub fn weighted_gather(&mut self, a: Var, rows: &[usize], weights: &[f64], k: usize) -> Result<Var> {
        if k == 0 || rows.len() != weights.len() || rows.is_empty() || rows.len() % k != 0 {
            return Err(AutodiffError::Argument(format!(
                "weighted_gather: {} rows, {} weights, k = {k}",
                rows.len(),
                weights.len()
            )));
        }
        let t = self.value(a);
        let (n, w) = (t.rows(), t.row_len());
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(AutodiffError::Argument(format!("weighted_gather index {bad} out of {n} rows")));
        }
        let out_rows = rows.len() / k;
        let mut data = vec![0.0; out_rows * w];
        for i in 0..out_rows {
            let out = &mut data[i * w..(i + 1) * w];
            for j in 0..k {
                let (r, wt) = (rows[i * k + j], weights[i * k + j]);
                for (o, x) in out.iter_mut().zip(t.row(r)) {
                    *o += wt * x;
                }
            }
        }
        let mut shape = t.shape().to_vec();
        shape[0] = out_rows;
        let needs = self.needs(a);
        let op = Op::WeightedGather { a, rows: rows.to_vec(), weights: weights.to_vec(), k };
        self.push("weighted_gather", Tensor::from_parts(shape, data), op, needs)
    }

    /// Max over consecutive groups of `group` rows: `[g·group, …] → [g, …]`.
    /// Gradient flows to the first maximal row of each group.
    pub fn reduce_max(&mut self, a: Var, group: usize) -> Result<Var> {
        let t = self.value(a);
        let (n, w) = (t.rows(), t.row_len());
        if group == 0 || n % group != 0 {
            return Err(AutodiffError::Argument(format!("reduce_max: {n} rows not divisible into groups of {group}")));
        }
        let groups = n / group;
        let src = t.data();
        let mut data = Vec::with_capacity(groups * w);
        let mut argmax = Vec::with_capacity(groups * w);
        for g in 0..groups {
            for c in 0..w {
                let mut best = g * group * w + c;
                for m in 1..group {
                    let idx = (g * group + m) * w + c;
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                data.push(src[best]);
                argmax.push(best);
            }
        }
        let mut shape = t.shape().to_vec();
        shape[0] = groups;
        if self.signature.is_some() {
            self.record_branch(&argmax);
        }
        let needs = self.needs(a);
        self.push("reduce_max", Tensor::from_parts(shape, data), Op::GroupMax { a, argmax }, needs)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let data: Vec<f64> = t.data().iter().map(|&x| x.max(0.0)).collect();
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        if let Some(mut h) = self.signature {
            for (i, &x) in value.data().iter().enumerate() {
                if x > 0.0 {
                    h = mix(h, i as u64);
                }
            }
            self.signature = Some(mix(h, u64::MAX));
        }
        let needs = self.needs(a);
        self.push("relu", value, Op::Relu { a }, needs)
    }

    /// Per-channel normalization of a `[n, c]` input followed by `γ·x̂ + β`.
    ///
    /// In [`NormMode::Train`] the batch statistics are used and returned so the
    /// caller can update running averages; in [`NormMode::Eval`] `running`
    /// (mean, variance) must be supplied.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: NormMode,
        running: Option<(&[f64], &[f64])>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 || self.shape(gamma) != [sx[1]] || self.shape(beta) != [sx[1]] {
            return Err(self.shape_err("batch_norm", x, gamma));
        }
        let (n, c) = (sx[0], sx[1]);
        let xd = self.value(x).data();
        let (mean, var, stats) = match mode {
            NormMode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for row in xd.chunks_exact(c) {
                    for (m, x) in mean.iter_mut().zip(row) {
                        *m += x;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                for row in xd.chunks_exact(c) {
                    for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                        let d = x - m;
                        *v += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= n as f64);
                let unbiased = if n > 1 {
                    var.iter().map(|v| v * n as f64 / (n - 1) as f64).collect()
                } else {
                    var.clone()
                };
                let stats = BatchStats { mean: mean.clone(), var: unbiased };
                (mean, var, Some(stats))
            }
            NormMode::Eval => {
                let (rm, rv) = running.ok_or_else(|| {
                    AutodiffError::Argument("batch_norm in eval mode needs running statistics".into())
                })?;
                if rm.len() != c || rv.len() != c {
                    return Err(AutodiffError::Argument("running statistics length mismatch".into()));
                }
                (rm.to_vec(), rv.to_vec(), None)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let mut xhat = Vec::with_capacity(if needs { n * c } else { 0 });
        let mut out = Vec::with_capacity(n * c);
        for row in xd.chunks_exact(c) {
            for j in 0..c {
                let h = (row[j] - mean[j]) * inv_std[j];
                if needs {
                    xhat.push(h);
                }
                out.push(g[j] * h + b[j]);
            }
        }
        let op = Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch: mode == NormMode::Train };
        let v = self.push("batch_norm", Tensor::from_parts(sx, out), op, needs)?;
        Ok((v, stats))
    }

    /// Row-wise softmax of a 2D tensor.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.shape().len() != 2 {
            return Err(AutodiffError::Argument(format!("softmax expects 2D input, got {:?}", t.shape())));
        }
        let c = t.shape()[1];
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(c) {
            softmax_in_place(row);
        }
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        let needs = self.needs(a);
        self.push("softmax", value, Op::Softmax { a }, needs)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if shape.iter().product::<usize>() != t.numel() || shape.contains(&0) {
            return Err(AutodiffError::Shape { op: "reshape", lhs: t.shape().to_vec(), rhs: shape.to_vec() });
        }
        let value = Tensor::from_parts(shape.to_vec(), t.data().to_vec());
        let needs = self.needs(a);
        self.push("reshape", value, Op::Reshape { a }, needs)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let needs = self.needs(a);
        self.push("sum", Tensor::scalar(s), Op::Sum { a }, needs)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        let needs = self.needs(a);
        self.push("mean", Tensor::scalar(s), Op::Mean { a }, needs)
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of `logits`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let s = t.shape();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(AutodiffError::Shape {
                op: "softmax_cross_entropy",
                lhs: s.to_vec(),
                rhs: vec![labels.len()],
            });
        }
        let (n, c) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(AutodiffError::Argument(format!("label {bad} out of {c} classes")));
        }
        let mut probs = t.data().to_vec();
        let mut loss = 0.0;
        for (r, row) in probs.chunks_mut(c).enumerate() {
            let lse = log_sum_exp(row);
            loss += lse - row[labels[r]];
            softmax_in_place(row);
        }
        loss /= n as f64;
        let needs = self.needs(logits);
        let op = Op::CrossEntropy { logits, probs, labels: labels.to_vec() };
        self.push("softmax_cross_entropy", Tensor::scalar(loss), op, needs)
    }

    /// Reverse pass from a scalar `output`. Consumes the tape.
    pub fn backward(self, output: Var) -> Result<Gradients> {
        let out_shape = self.shape(output).to_vec();
        if self.value(output).numel() != 1 {
            return Err(AutodiffError::NotScalar { shape: out_shape });
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(nodes.len());
        grads.resize_with(nodes.len(), || None);
        grads[output.0] = Some(vec![1.0]);
        let mut leaves = HashMap::new();

        for i in (0..=output.0).rev() {
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let val = |v: Var| nodes[v.0].value.data();
            let shape = |v: Var| nodes[v.0].value.shape();
            let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
                if nodes[v.0].needs_grad {
                    let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
                    f(slot);
                }
            };
            match &node.op {
                Op::Leaf => {
                    leaves.insert(Var(i), Tensor::from_parts(node.value.shape().to_vec(), g));
                }
                Op::MatMul { a, b } => {
                    let (m, k, n) = (shape(*a)[0], shape(*a)[1], shape(*b)[1]);
                    acc(*a, &mut |ga| matmul_a_bt_acc(&g, val(*b), m, k, n, ga));
                    acc(*b, &mut |gb| matmul_at_b_acc(val(*a), &g, m, k, n, gb));
                }
                Op::BatchedMatMul { a, b } => {
                    let (bs, m, k, n) = (shape(*a)[0], shape(*a)[1], shape(*a)[2], shape(*b)[2]);
                    acc(*a, &mut |ga| {
                        for t in 0..bs {
                            matmul_a_bt_acc(
                                &g[t * m * n..(t + 1) * m * n],
                                &val(*b)[t * k * n..(t + 1) * k * n],
                                m,
                                k,
                                n,
                                &mut ga[t * m * k..(t + 1) * m * k],
                            );
                        }
                    });
                    acc(*b, &mut |gb| {
                        for t in 0..bs {
                            matmul_at_b_acc(
                                &val(*a)[t * m * k..(t + 1) * m * k],
                                &g[t * m * n..(t + 1) * m * n],
                                m,
                                k,
                                n,
                                &mut gb[t * k * n..(t + 1) * k * n],
                            );
                        }
                    });
                }
                Op::Add { a, b } => {
                    acc(*a, &mut |ga| add_into(ga, &g, 1.0));
                    acc(*b, &mut |gb| add_into(gb, &g, 1.0));
                }
                Op::Sub { a, b } => {
                    acc(*a, &mut |ga| add_into(ga, &g, 1.0));
                    acc(*b, &mut |gb| add_into(gb, &g, -1.0));
                }
                Op::Mul { a, b } => {
                    acc(*a, &mut |ga| {
                        for ((o, gi), bi) in ga.iter_mut().zip(&g).zip(val(*b)) {
                            *o += gi * bi;
                        }
                    });
                    acc(*b, &mut |gb| {
                        for ((o, gi), ai) in gb.iter_mut().zip(&g).zip(val(*a)) {
                            *o += gi * ai;
                        }
                    });
                }
                Op::AddRow { a, bias } => {
                    acc(*a, &mut |ga| add_into(ga, &g, 1.0));
                    let c = shape(*bias)[0];
                    acc(*bias, &mut |gb| {
                        for (i, gi) in g.iter().enumerate() {
                            gb[i % c] += gi;
                        }
                    });
                }
                Op::Scale { a, factor } => acc(*a, &mut |ga| add_into(ga, &g, *factor)),
                Op::Concat { parts, axis } => {
                    let s0 = shape(parts[0]);
                    let outer: usize = s0[..*axis].iter().product();
                    let inner: usize = s0[axis + 1..].iter().product();
                    let total: usize = parts.iter().map(|&p| shape(p)[*axis] * inner).sum();
                    let mut offset = 0;
                    for &p in parts {
                        let chunk = shape(p)[*axis] * inner;
                        acc(p, &mut |gp| {
                            for o in 0..outer {
                                let src = &g[o * total + offset..o * total + offset + chunk];
                                add_into(&mut gp[o * chunk..(o + 1) * chunk], src, 1.0);
                            }
                        });
                        offset += chunk;
                    }
                }
                Op::Gather { a, rows } => {
                    let w = nodes[a.0].value.row_len();
                    acc(*a, &mut |ga| {
                        for (i, &r) in rows.iter().enumerate() {
                            add_into(&mut ga[r * w..(r + 1) * w], &g[i * w..(i + 1) * w], 1.0);
                        }
                    });
                }
                Op::WeightedGather { a, rows, weights, k } => {
                    let w = nodes[a.0].value.row_len();
                    acc(*a, &mut |ga| {
                        for (j, (&r, &wt)) in rows.iter().zip(weights).enumerate() {
                            let i = j / k;
                            add_into(&mut ga[r * w..(r + 1) * w], &g[i * w..(i + 1) * w], wt);
                        }
                    });
                }
                Op::GroupMax { a, argmax } => acc(*a, &mut |ga| {
                    for (gi, &src) in g.iter().zip(argmax) {
                        ga[src] += gi;
                    }
                }),
                Op::Relu { a } => {
                    let out = node.value.data();
                    acc(*a, &mut |ga| {
                        for ((o, gi), y) in ga.iter_mut().zip(&g).zip(out) {
                            if *y > 0.0 {
                                *o += gi;
                            }
                        }
                    });
                }
                Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch } => {
                    let c = inv_std.len();
                    let n = g.len() / c;
                    let gam = val(*gamma);
                    let mut sum_dy = vec![0.0; c];
                    let mut sum_dy_xhat = vec![0.0; c];
                    for (grow, hrow) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                        for j in 0..c {
                            sum_dy[j] += grow[j];
                            sum_dy_xhat[j] += grow[j] * hrow[j];
                        }
                    }
                    acc(*gamma, &mut |gg| add_into(gg, &sum_dy_xhat, 1.0));
                    acc(*beta, &mut |gb| add_into(gb, &sum_dy, 1.0));
                    acc(*x, &mut |gx| {
                        let nf = n as f64;
                        let scale: Vec<f64> = gam.iter().zip(inv_std).map(|(a, s)| a * s).collect();
                        let rows = gx.chunks_exact_mut(c).zip(g.chunks_exact(c)).zip(xhat.chunks_exact(c));
                        for ((orow, grow), hrow) in rows {
                            for j in 0..c {
                                orow[j] += if *batch {
                                    scale[j] / nf * (nf * grow[j] - sum_dy[j] - hrow[j] * sum_dy_xhat[j])
                                } else {
                                    scale[j] * grow[j]
                                };
                            }
                        }
                    });
                }
                Op::Softmax { a } => {
                    let y = node.value.data();
                    let c = node.value.shape()[1];
                    acc(*a, &mut |ga| {
                        for ((orow, grow), yrow) in ga.chunks_mut(c).zip(g.chunks(c)).zip(y.chunks(c)) {
                            let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                            for j in 0..c {
                                orow[j] += yrow[j] * (grow[j] - dot);
                            }
                        }
                    });
                }
                Op::Reshape { a } => acc(*a, &mut |ga| add_into(ga, &g, 1.0)),
                Op::Sum { a } => acc(*a, &mut |ga| ga.iter_mut().for_each(|o| *o += g[0])),
                Op::Mean { a } => {
                    let n = nodes[a.0].value.numel() as f64;
                    acc(*a, &mut |ga| ga.iter_mut().for_each(|o| *o += g[0] / n));
                }
                Op::CrossEntropy { logits, probs, labels } => {
                    let n = labels.len();
                    let c = probs.len() / n;
                    let scale = g[0] / n as f64;
                    acc(*logits, &mut |gl| {
                        for (r, &l) in labels.iter().enumerate() {
                            for j in 0..c {
                                let onehot = if j == l { 1.0 } else { 0.0 };
                                gl[r * c + j] += scale * (probs[r * c + j] - onehot);
                            }
                        }
                    });
                }
            }
        }
        Ok(Gradients { leaves })
    }
}

fn add_into(dst: &mut [f64], src: &[f64], factor: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += factor * s;
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    row.iter_mut().for_each(|x| *x /= z);
}

/// Gradients of every `requires_grad` leaf reachable from the output.
#[derive(Debug, Default)]
pub struct Gradients {
    leaves: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(&v)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.leaves.remove(&v)
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }
}
