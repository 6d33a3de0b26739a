use std::sync::Arc;

use rand::Rng;

use super::sparse::{SparseMatrix, SparsePattern};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    LeftScalar,
    RightScalar,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM {
        adj: Arc<SparseMatrix>,
        h: Var,
    },
    /// `out[u] = w[nnz + u] * h[u] + sum_e w[e] * h[col(e)]` over row `u` of the pattern.
    WeightedAggregate {
        pattern: Arc<SparsePattern>,
        weights: Var,
        h: Var,
    },
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, f64),
    AddScalar(Var),
    AddBias(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    MaskMul(Var, Arc<Vec<f64>>),
    Sum(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Arc<Vec<usize>>,
        rows: Arc<Vec<usize>>,
        probs: Vec<f64>,
    },
    EdgeCosine {
        pattern: Arc<SparsePattern>,
        h: Var,
        norms: Vec<f64>,
    },
    Importance {
        pattern: Arc<SparsePattern>,
        s: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records executed operations so gradients can be replayed in reverse order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
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

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads.clear();
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a leaf. Its `requires_grad` flag is taken from the tensor.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let rg = t.requires_grad();
        let value =
            Tensor::new(t.shape().to_vec(), t.data().to_vec()).expect("shape already valid");
        self.push(value, Op::Leaf, rg)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Adds the tape gradient of `v` (if any) into `target`'s accumulator.
    pub fn accumulate_into(&self, v: Var, target: &mut Tensor) -> Result<()> {
        if let Some(g) = self.grad(v) {
            target.accumulate_grad(g)?;
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.cols() != bv.rows() {
            return Err(Error::shape("matmul", av.shape(), bv.shape()));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let out = matmul_raw(av.data(), bv.data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg))
    }

    /// Sparse-dense product; the sparse operand is a constant.
    pub fn spmm(&mut self, adj: Arc<SparseMatrix>, h: Var) -> Result<Var> {
        let hv = self.value(h);
        if hv.shape().len() != 2 || adj.n_cols() != hv.rows() {
            return Err(Error::shape(
                "spmm",
                &[adj.n_rows(), adj.n_cols()],
                hv.shape(),
            ));
        }
        let d = hv.cols();
        let mut out = vec![0.0; adj.n_rows() * d];
        let pat = adj.pattern();
        for r in 0..adj.n_rows() {
            let dst = &mut out[r * d..(r + 1) * d];
            for e in pat.row_range(r) {
                let w = adj.values()[e];
                let src = hv.row(pat.indices()[e]);
                dst.iter_mut().zip(src).for_each(|(o, x)| *o += w * x);
            }
        }
        let rg = self.rg(h);
        let t = Tensor::matrix(adj.n_rows(), d, out)?;
        Ok(self.push(t, Op::SpMM { adj, h }, rg))
    }

    /// Aggregates rows of `h` over a square pattern with per-entry weights plus
    /// one self weight per row; `weights` has length `nnz + n`.
    pub fn weighted_aggregate(
        &mut self,
        pattern: Arc<SparsePattern>,
        weights: Var,
        h: Var,
    ) -> Result<Var> {
        let n = pattern.n_rows();
        let nnz = pattern.nnz();
        let (wv, hv) = (self.value(weights), self.value(h));
        if pattern.n_cols() != n || hv.shape().len() != 2 || hv.rows() != n {
            return Err(Error::shape(
                "weighted_aggregate",
                &[n, pattern.n_cols()],
                hv.shape(),
            ));
        }
        if wv.numel() != nnz + n {
            return Err(Error::shape(
                "weighted_aggregate weights",
                &[nnz + n],
                wv.shape(),
            ));
        }
        let d = hv.cols();
        let w = wv.data();
        let mut out = vec![0.0; n * d];
        for u in 0..n {
            let dst = &mut out[u * d..(u + 1) * d];
            let ws = w[nnz + u];
            dst.iter_mut().zip(hv.row(u)).for_each(|(o, x)| *o = ws * x);
            for e in pattern.row_range(u) {
                let we = w[e];
                if we == 0.0 {
                    continue;
                }
                let src = hv.row(pattern.indices()[e]);
                dst.iter_mut().zip(src).for_each(|(o, x)| *o += we * x);
            }
        }
        let rg = self.rg(weights) || self.rg(h);
        let t = Tensor::matrix(n, d, out)?;
        Ok(self.push(
            t,
            Op::WeightedAggregate {
                pattern,
                weights,
                h,
            },
            rg,
        ))
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() == bv.shape() {
            Ok(Broadcast::Same)
        } else if av.is_scalar() {
            Ok(Broadcast::LeftScalar)
        } else if bv.is_scalar() {
            Ok(Broadcast::RightScalar)
        } else {
            Err(Error::shape(op, av.shape(), bv.shape()))
        }
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        bc: Broadcast,
        f: impl Fn(f64, f64) -> f64,
    ) -> (Tensor, bool) {
        let (av, bv) = (self.value(a), self.value(b));
        let (shape, data) = match bc {
            Broadcast::Same => (
                av.shape().to_vec(),
                av.data()
                    .iter()
                    .zip(bv.data())
                    .map(|(x, y)| f(*x, *y))
                    .collect(),
            ),
            Broadcast::LeftScalar => {
                let x = av.item();
                (
                    bv.shape().to_vec(),
                    bv.data().iter().map(|y| f(x, *y)).collect(),
                )
            }
            Broadcast::RightScalar => {
                let y = bv.item();
                (
                    av.shape().to_vec(),
                    av.data().iter().map(|x| f(*x, y)).collect(),
                )
            }
        };
        let rg = self.rg(a) || self.rg(b);
        (Tensor::new(shape, data).expect("broadcast shape"), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let bc = self.broadcast("add", a, b)?;
        let (t, rg) = self.binary(a, b, bc, |x, y| x + y);
        Ok(self.push(t, Op::Add(a, b, bc), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let bc = self.broadcast("sub", a, b)?;
        let (t, rg) = self.binary(a, b, bc, |x, y| x - y);
        Ok(self.push(t, Op::Sub(a, b, bc), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let bc = self.broadcast("mul", a, b)?;
        let (t, rg) = self.binary(a, b, bc, |x, y| x * y);
        Ok(self.push(t, Op::Mul(a, b, bc), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let av = self.value(a);
        let t = Tensor::new(
            av.shape().to_vec(),
            av.data().iter().map(|x| c * x).collect(),
        )
        .expect("same shape");
        let rg = self.rg(a);
        self.push(t, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let av = self.value(a);
        let t = Tensor::new(
            av.shape().to_vec(),
            av.data().iter().map(|x| c + x).collect(),
        )
        .expect("same shape");
        let rg = self.rg(a);
        self.push(t, Op::AddScalar(a), rg)
    }

    /// Adds a `1 x n` (or length-`n`) bias to every row of an `m x n` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if xv.shape().len() != 2 || bv.numel() != xv.cols() {
            return Err(Error::shape("add_bias", xv.shape(), bv.shape()));
        }
        let n = xv.cols();
        let b = bv.data();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + b[i % n])
            .collect();
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(t, Op::AddBias(x, bias), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let t = Tensor::new(
            av.shape().to_vec(),
            av.data()
                .iter()
                .map(|&x| if x < 0.0 { 0.0 } else { x })
                .collect(),
        )
        .expect("same shape");
        let rg = self.rg(a);
        self.push(t, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let t = Tensor::new(
            av.shape().to_vec(),
            av.data().iter().map(|&x| sigmoid(x)).collect(),
        )
        .expect("same shape");
        let rg = self.rg(a);
        self.push(t, Op::Sigmoid(a), rg)
    }

    /// Elementwise product with a constant multiplier.
    pub fn mask_mul(&mut self, a: Var, mask: Arc<Vec<f64>>) -> Result<Var> {
        let av = self.value(a);
        if av.numel() != mask.len() {
            return Err(Error::shape("mask_mul", av.shape(), &[mask.len()]));
        }
        let data = av
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(x, m)| x * m)
            .collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::MaskMul(a, mask), rg))
    }

    /// Inverted dropout: kept entries are scaled by `1 / (1 - rate)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::validation(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(a).numel())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        self.mask_mul(a, Arc::new(mask))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Mean over `rows` of `-log softmax(logits)[label]`, stabilized by row-max subtraction.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        mask: &[bool],
    ) -> Result<Var> {
        let lv = self.value(logits);
        if lv.shape().len() != 2 || labels.len() != lv.rows() || mask.len() != lv.rows() {
            return Err(Error::shape(
                "softmax_cross_entropy",
                lv.shape(),
                &[labels.len(), mask.len()],
            ));
        }
        let c = lv.cols();
        let rows: Vec<usize> = (0..lv.rows()).filter(|&i| mask[i]).collect();
        if rows.is_empty() {
            return Err(Error::Precondition(
                "cross-entropy mask selects no nodes".into(),
            ));
        }
        let mut probs = vec![0.0; rows.len() * c];
        let mut loss = 0.0;
        for (k, &r) in rows.iter().enumerate() {
            let y = labels[r];
            if y >= c {
                return Err(Error::validation(format!(
                    "label {y} at node {r} out of range for {c} classes"
                )));
            }
            let row = lv.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let log_z = z.ln() + max;
            loss += log_z - row[y];
            for j in 0..c {
                probs[k * c + j] = (row[j] - log_z).exp();
            }
        }
        loss /= rows.len() as f64;
        let rg = self.rg(logits);
        let op = Op::SoftmaxCrossEntropy {
            logits,
            labels: Arc::new(labels.to_vec()),
            rows: Arc::new(rows),
            probs,
        };
        Ok(self.push(Tensor::scalar(loss), op, rg))
    }

    /// Cosine similarity of the two endpoint rows for every stored entry; zero
    /// when either row has zero norm.
    pub fn edge_cosine(&mut self, pattern: Arc<SparsePattern>, h: Var) -> Result<Var> {
        let hv = self.value(h);
        if hv.shape().len() != 2
            || hv.rows() != pattern.n_rows()
            || pattern.n_cols() != pattern.n_rows()
        {
            return Err(Error::shape(
                "edge_cosine",
                &[pattern.n_rows(), pattern.n_cols()],
                hv.shape(),
            ));
        }
        let n = hv.rows();
        let norms: Vec<f64> = (0..n).map(|u| norm2(hv.row(u))).collect();
        let mut out = vec![0.0; pattern.nnz()];
        for u in 0..n {
            for e in pattern.row_range(u) {
                let v = pattern.indices()[e];
                let denom = norms[u] * norms[v];
                if denom > 0.0 {
                    out[e] = dot(hv.row(u), hv.row(v)) / denom;
                }
            }
        }
        let rg = self.rg(h);
        let t = Tensor::new(vec![pattern.nnz()], out)?;
        Ok(self.push(t, Op::EdgeCosine { pattern, h, norms }, rg))
    }

    /// Per-row neighbor importance from nonnegative similarities `s` (length
    /// `nnz`). Output has length `nnz + n`: entry weights then self weights.
    pub fn importance(&mut self, pattern: Arc<SparsePattern>, s: Var) -> Result<Var> {
        let sv = self.value(s);
        if sv.numel() != pattern.nnz() {
            return Err(Error::shape("importance", &[pattern.nnz()], sv.shape()));
        }
        let n = pattern.n_rows();
        let nnz = pattern.nnz();
        let mut out = vec![0.0; nnz + n];
        for u in 0..n {
            let range = pattern.row_range(u);
            let (total, count) = row_mass(&sv.data()[range.clone()]);
            if count == 0 {
                out[nnz + u] = 1.0;
                continue;
            }
            let shrink = count as f64 / (count as f64 + 1.0);
            for e in range {
                out[e] = sv.data()[e].max(0.0) / total * shrink;
            }
            out[nnz + u] = 1.0 / (count as f64 + 1.0);
        }
        let rg = self.rg(s);
        let t = Tensor::new(vec![nnz + n], out)?;
        Ok(self.push(t, Op::Importance { pattern, s }, rg))
    }

    fn add_grad(&mut self, v: Var, g: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        }
    }

    /// Reverse-mode sweep from `root`, seeded with ones. Leaf gradients
    /// accumulate across calls; interior gradients are reset first.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        for (node, g) in self.nodes.iter().zip(self.grads.iter_mut()) {
            if !matches!(node.op, Op::Leaf) {
                *g = None;
            }
        }
        let seed = vec![1.0; self.nodes[root.0].value.numel()];
        self.add_grad(root, seed);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.grads[i].clone() else {
                continue;
            };
            self.backward_node(i, &g);
        }
        Ok(())
    }

    fn backward_node(&mut self, i: usize, g: &[f64]) {
        let mut pending: Vec<(Var, Vec<f64>)> = Vec::new();
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if self.rg(*a) {
                    // dA = dC * B^T
                    let mut da = vec![0.0; m * k];
                    for r in 0..m {
                        for c in 0..n {
                            let gv = g[r * n + c];
                            if gv == 0.0 {
                                continue;
                            }
                            for j in 0..k {
                                da[r * k + j] += gv * bv.data()[j * n + c];
                            }
                        }
                    }
                    pending.push((*a, da));
                }
                if self.rg(*b) {
                    // dB = A^T * dC
                    let mut db = vec![0.0; k * n];
                    for r in 0..m {
                        for j in 0..k {
                            let x = av.data()[r * k + j];
                            if x == 0.0 {
                                continue;
                            }
                            for c in 0..n {
                                db[j * n + c] += x * g[r * n + c];
                            }
                        }
                    }
                    pending.push((*b, db));
                }
            }
            Op::SpMM { adj, h } => {
                if self.rg(*h) {
                    let d = self.value(*h).cols();
                    let mut dh = vec![0.0; adj.n_cols() * d];
                    let pat = adj.pattern();
                    for r in 0..adj.n_rows() {
                        for e in pat.row_range(r) {
                            let w = adj.values()[e];
                            let c = pat.indices()[e];
                            for j in 0..d {
                                dh[c * d + j] += w * g[r * d + j];
                            }
                        }
                    }
                    pending.push((*h, dh));
                }
            }
            Op::WeightedAggregate {
                pattern,
                weights,
                h,
            } => {
                let (wv, hv) = (self.value(*weights), self.value(*h));
                let n = pattern.n_rows();
                let nnz = pattern.nnz();
                let d = hv.cols();
                if self.rg(*weights) {
                    let mut dw = vec![0.0; nnz + n];
                    for u in 0..n {
                        let gu = &g[u * d..(u + 1) * d];
                        dw[nnz + u] = dot(gu, hv.row(u));
                        for e in pattern.row_range(u) {
                            dw[e] = dot(gu, hv.row(pattern.indices()[e]));
                        }
                    }
                    pending.push((*weights, dw));
                }
                if self.rg(*h) {
                    let w = wv.data();
                    let mut dh = vec![0.0; n * d];
                    for u in 0..n {
                        let gu = &g[u * d..(u + 1) * d];
                        let ws = w[nnz + u];
                        for j in 0..d {
                            dh[u * d + j] += ws * gu[j];
                        }
                        for e in pattern.row_range(u) {
                            let v = pattern.indices()[e];
                            for j in 0..d {
                                dh[v * d + j] += w[e] * gu[j];
                            }
                        }
                    }
                    pending.push((*h, dh));
                }
            }
            Op::Add(a, b, bc) | Op::Sub(a, b, bc) => {
                let sign = if matches!(node.op, Op::Sub(..)) {
                    -1.0
                } else {
                    1.0
                };
                let reduce = |g: &[f64]| vec![g.iter().sum::<f64>()];
                match bc {
                    Broadcast::Same => {
                        pending.push((*a, g.to_vec()));
                        pending.push((*b, g.iter().map(|x| sign * x).collect()));
                    }
                    Broadcast::LeftScalar => {
                        pending.push((*a, reduce(g)));
                        pending.push((*b, g.iter().map(|x| sign * x).collect()));
                    }
                    Broadcast::RightScalar => {
                        pending.push((*a, g.to_vec()));
                        pending.push((*b, vec![sign * g.iter().sum::<f64>()]));
                    }
                }
            }
            Op::Mul(a, b, bc) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                match bc {
                    Broadcast::Same => {
                        pending.push((*a, g.iter().zip(bv).map(|(g, y)| g * y).collect()));
                        pending.push((*b, g.iter().zip(av).map(|(g, x)| g * x).collect()));
                    }
                    Broadcast::LeftScalar => {
                        let x = av[0];
                        pending.push((*a, vec![g.iter().zip(bv).map(|(g, y)| g * y).sum()]));
                        pending.push((*b, g.iter().map(|g| g * x).collect()));
                    }
                    Broadcast::RightScalar => {
                        let y = bv[0];
                        pending.push((*a, g.iter().map(|g| g * y).collect()));
                        pending.push((*b, vec![g.iter().zip(av).map(|(g, x)| g * x).sum()]));
                    }
                }
            }
            Op::Scale(a, c) => pending.push((*a, g.iter().map(|x| c * x).collect())),
            Op::AddScalar(a) => pending.push((*a, g.to_vec())),
            Op::AddBias(x, bias) => {
                let n = self.value(*x).cols();
                let mut db = vec![0.0; n];
                for (i, gv) in g.iter().enumerate() {
                    db[i % n] += gv;
                }
                pending.push((*x, g.to_vec()));
                pending.push((*bias, db));
            }
            Op::Relu(a) => {
                let av = self.value(*a).data();
                pending.push((
                    *a,
                    g.iter()
                        .zip(av)
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                        .collect(),
                ));
            }
            Op::Sigmoid(a) => {
                let out = node.value.data();
                pending.push((
                    *a,
                    g.iter().zip(out).map(|(g, s)| g * s * (1.0 - s)).collect(),
                ));
            }
            Op::MaskMul(a, mask) => {
                pending.push((*a, g.iter().zip(mask.iter()).map(|(g, m)| g * m).collect()));
            }
            Op::Sum(a) => {
                let n = self.value(*a).numel();
                pending.push((*a, vec![g[0]; n]));
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                rows,
                probs,
            } => {
                let lv = self.value(*logits);
                let c = lv.cols();
                let scale = g[0] / rows.len() as f64;
                let mut dl = vec![0.0; lv.numel()];
                for (k, &r) in rows.iter().enumerate() {
                    for j in 0..c {
                        dl[r * c + j] = scale * probs[k * c + j];
                    }
                    dl[r * c + labels[r]] -= scale;
                }
                pending.push((*logits, dl));
            }
            Op::EdgeCosine { pattern, h, norms } => {
                let hv = self.value(*h);
                let d = hv.cols();
                let mut dh = vec![0.0; hv.numel()];
                for u in 0..pattern.n_rows() {
                    for e in pattern.row_range(u) {
                        let v = pattern.indices()[e];
                        let denom = norms[u] * norms[v];
                        if denom == 0.0 || g[e] == 0.0 {
                            continue;
                        }
                        let cos = node.value.data()[e];
                        let (hu, hw) = (hv.row(u), hv.row(v));
                        let (nu2, nv2) = (norms[u] * norms[u], norms[v] * norms[v]);
                        for j in 0..d {
                            dh[u * d + j] += g[e] * (hw[j] / denom - cos * hu[j] / nu2);
                            dh[v * d + j] += g[e] * (hu[j] / denom - cos * hw[j] / nv2);
                        }
                    }
                }
                pending.push((*h, dh));
            }
            Op::Importance { pattern, s } => {
                let sv = self.value(*s).data();
                let mut ds = vec![0.0; sv.len()];
                for u in 0..pattern.n_rows() {
                    let range = pattern.row_range(u);
                    let (total, count) = row_mass(&sv[range.clone()]);
                    if count == 0 {
                        continue;
                    }
                    let shrink = count as f64 / (count as f64 + 1.0);
                    let weighted: f64 = range.clone().map(|e| g[e] * sv[e].max(0.0)).sum();
                    for e in range {
                        if sv[e] > 0.0 {
                            ds[e] = shrink * (g[e] / total - weighted / (total * total));
                        }
                    }
                }
                pending.push((*s, ds));
            }
        }
        for (v, gv) in pending {
            self.add_grad(v, gv);
        }
    }
}

fn row_mass(s: &[f64]) -> (f64, usize) {
    s.iter()
        .filter(|&&x| x > 0.0)
        .fold((0.0, 0), |(t, c), &x| (t + x, c + 1))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        let dst = &mut out[r * n..(r + 1) * n];
        for j in 0..k {
            let x = a[r * k + j];
            if x == 0.0 {
                continue;
            }
            let src = &b[j * n..(j + 1) * n];
            dst.iter_mut().zip(src).for_each(|(o, y)| *o += x * y);
        }
    }
    out
}
