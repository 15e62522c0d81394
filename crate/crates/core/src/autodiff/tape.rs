//! The recording tape and its differentiable operations.

use super::tensor::{gemm, Tensor};
use super::TensorError;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    Concat(Var, Var),
    SliceCols(Var, usize),
    SumAll(Var),
    MeanAll(Var),
    SumRows(Var),
    SumCols(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    Log(Var),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    BceWithLogits(Var, Vec<f64>),
    Triplet(Var, TripletCache),
}

#[derive(Debug, Clone)]
struct TripletCache {
    /// Active `(anchor, positive, negative)` triplets (positive hinge).
    active: Vec<(usize, usize, usize)>,
    count: usize,
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a computation so that [`Tape::backward`] can replay it in
/// reverse. Parents always precede children in the node list.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every recorded value.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not influence the output
    /// or was recorded as a constant.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn check_same(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::shape(op, a.shape(), b.shape()));
    }
    Ok(())
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A trainable input whose gradient is reported by `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        check_same("add", self.value(a), self.value(b))?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    /// Adds the `1 x c` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, TensorError> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(TensorError::shape("add_row", x.shape(), b.shape()));
        }
        let mut value = x.clone();
        for r in 0..value.rows() {
            for (v, bb) in value.row_mut(r).iter_mut().zip(b.data()) {
                *v += bb;
            }
        }
        let ng = self.ng(a) || self.ng(bias);
        Ok(self.push(value, Op::AddRow(a, bias), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        check_same("sub", self.value(a), self.value(b))?;
        let mut value = self.value(a).clone();
        for (x, y) in value.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *x -= y;
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Sub(a, b), ng))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        check_same("hadamard", self.value(a), self.value(b))?;
        let mut value = self.value(a).clone();
        for (x, y) in value.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *x *= y;
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Hadamard(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, s), ng)
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rows() != y.rows() {
            return Err(TensorError::shape("concat", x.shape(), y.shape()));
        }
        let mut value = Tensor::zeros(x.rows(), x.cols() + y.cols());
        for r in 0..x.rows() {
            let row = value.row_mut(r);
            row[..x.cols()].copy_from_slice(x.row(r));
            row[x.cols()..].copy_from_slice(y.row(r));
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Concat(a, b), ng))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let x = self.value(a);
        if start > end || end > x.cols() {
            return Err(TensorError::Range {
                op: "slice_cols",
                shape: x.shape(),
                start,
                end,
            });
        }
        let mut value = Tensor::zeros(x.rows(), end - start);
        for r in 0..x.rows() {
            value.row_mut(r).copy_from_slice(&x.row(r)[start..end]);
        }
        let ng = self.ng(a);
        Ok(self.push(value, Op::SliceCols(a, start), ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        let ng = self.ng(a);
        self.push(value, Op::SumAll(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let value = Tensor::scalar(x.data().iter().sum::<f64>() / x.len().max(1) as f64);
        let ng = self.ng(a);
        self.push(value, Op::MeanAll(a), ng)
    }

    /// Sum over axis 0: `r x c -> 1 x c`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = Tensor::zeros(1, x.cols());
        for r in 0..x.rows() {
            for (v, xx) in value.data_mut().iter_mut().zip(x.row(r)) {
                *v += xx;
            }
        }
        let ng = self.ng(a);
        self.push(value, Op::SumRows(a), ng)
    }

    /// Sum over axis 1: `r x c -> r x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = (0..x.rows()).map(|r| x.row(r).iter().sum()).collect();
        let value = Tensor::from_vec(x.rows(), 1, data).expect("shape");
        let ng = self.ng(a);
        self.push(value, Op::SumCols(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let ng = self.ng(a);
        self.push(value, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let ng = self.ng(a);
        self.push(value, Op::Tanh(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let ng = self.ng(a);
        self.push(value, Op::Relu(a), ng)
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let ng = self.ng(a);
        self.push(value, Op::Softmax(a), ng)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        let ng = self.ng(a);
        self.push(value, Op::Log(a), ng)
    }

    /// Row `i` of the result is row `index[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var, TensorError> {
        let x = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= x.rows()) {
            return Err(TensorError::Index {
                op: "gather_rows",
                shape: x.shape(),
                index: bad,
            });
        }
        let mut value = Tensor::zeros(index.len(), x.cols());
        for (r, &i) in index.iter().enumerate() {
            value.row_mut(r).copy_from_slice(x.row(i));
        }
        let ng = self.ng(a);
        Ok(self.push(value, Op::GatherRows(a, index.to_vec()), ng))
    }

    /// `out_rows x c` result where row `index[i]` accumulates row `i` of `a`.
    pub fn scatter_add_rows(&mut self, a: Var, index: &[usize], out_rows: usize) -> Result<Var, TensorError> {
        let x = self.value(a);
        if index.len() != x.rows() {
            return Err(TensorError::shape("scatter_add_rows", x.shape(), [index.len(), x.cols()]));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= out_rows) {
            return Err(TensorError::Index {
                op: "scatter_add_rows",
                shape: [out_rows, x.cols()],
                index: bad,
            });
        }
        let mut value = Tensor::zeros(out_rows, x.cols());
        for (r, &i) in index.iter().enumerate() {
            for (v, xx) in value.row_mut(i).iter_mut().zip(x.row(r)) {
                *v += xx;
            }
        }
        let ng = self.ng(a);
        Ok(self.push(value, Op::ScatterAddRows(a, index.to_vec()), ng))
    }

    /// Mean binary cross-entropy of an `n x 1` column of logits.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64]) -> Result<Var, TensorError> {
        let z = self.value(logits);
        if z.cols() != 1 || z.rows() != targets.len() || targets.is_empty() {
            return Err(TensorError::shape("bce_with_logits", z.shape(), [targets.len(), 1]));
        }
        let total: f64 = z
            .data()
            .iter()
            .zip(targets)
            .map(|(&x, &y)| softplus(x) - y * x)
            .sum();
        let value = Tensor::scalar(total / targets.len() as f64);
        let ng = self.ng(logits);
        Ok(self.push(value, Op::BceWithLogits(logits, targets.to_vec()), ng))
    }

    /// Mean hinge `max(0, d(a,p) - d(a,n) + margin)` over every in-batch
    /// triplet with `a != p`, `label[a] == label[p] != label[n]`, where `d`
    /// is squared Euclidean distance between rows of `x`. Zero when no
    /// triplet exists; see [`count_triplets`].
    pub fn triplet_margin(&mut self, x: Var, labels: &[u8], margin: f64) -> Result<Var, TensorError> {
        let p = self.value(x);
        if p.rows() != labels.len() {
            return Err(TensorError::shape("triplet_margin", p.shape(), [labels.len(), p.cols()]));
        }
        let n = p.rows();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d: f64 = p.row(i).iter().zip(p.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        let mut total = 0.0;
        let mut count = 0;
        let mut active = Vec::new();
        for a in 0..n {
            for pos in 0..n {
                if pos == a || labels[pos] != labels[a] {
                    continue;
                }
                for neg in 0..n {
                    if labels[neg] == labels[a] {
                        continue;
                    }
                    count += 1;
                    let h = dist[a * n + pos] - dist[a * n + neg] + margin;
                    if h > 0.0 {
                        total += h;
                        active.push((a, pos, neg));
                    }
                }
            }
        }
        let value = Tensor::scalar(if count == 0 { 0.0 } else { total / count as f64 });
        let ng = self.ng(x);
        Ok(self.push(value, Op::Triplet(x, TripletCache { active, count }), ng))
    }

    /// Reverse sweep from the scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients, TensorError> {
        let out_shape = self.value(output).shape();
        if out_shape != [1, 1] {
            return Err(TensorError::shape("backward", out_shape, [1, 1]));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::scalar(1.0));
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.propagate(&node.op, &node.value, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.needs_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, delta: Tensor| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                if self.ng(*a) {
                    let mut da = Tensor::zeros(x.rows(), x.cols());
                    gemm(g, false, y, true, &mut da, 0.0);
                    acc(*a, da);
                }
                if self.ng(*b) {
                    let mut db = Tensor::zeros(y.rows(), y.cols());
                    gemm(x, true, g, false, &mut db, 0.0);
                    acc(*b, db);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, bias) => {
                acc(*a, g.clone());
                if self.ng(*bias) {
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, gg) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d += gg;
                        }
                    }
                    acc(*bias, db);
                }
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Hadamard(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                if self.ng(*a) {
                    let mut da = g.clone();
                    for (d, yy) in da.data_mut().iter_mut().zip(y.data()) {
                        *d *= yy;
                    }
                    acc(*a, da);
                }
                if self.ng(*b) {
                    let mut db = g.clone();
                    for (d, xx) in db.data_mut().iter_mut().zip(x.data()) {
                        *d *= xx;
                    }
                    acc(*b, db);
                }
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
            Op::Concat(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let mut da = Tensor::zeros(g.rows(), ca);
                let mut db = Tensor::zeros(g.rows(), cb);
                for r in 0..g.rows() {
                    da.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    db.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::SliceCols(a, start) => {
                let x = self.value(*a);
                let mut da = Tensor::zeros(x.rows(), x.cols());
                for r in 0..g.rows() {
                    da.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*a, da);
            }
            Op::SumAll(a) => {
                let x = self.value(*a);
                acc(*a, Tensor::filled(x.rows(), x.cols(), g.item()));
            }
            Op::MeanAll(a) => {
                let x = self.value(*a);
                acc(*a, Tensor::filled(x.rows(), x.cols(), g.item() / x.len().max(1) as f64));
            }
            Op::SumRows(a) => {
                let x = self.value(*a);
                let mut da = Tensor::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    da.row_mut(r).copy_from_slice(g.row(0));
                }
                acc(*a, da);
            }
            Op::SumCols(a) => {
                let x = self.value(*a);
                let mut da = Tensor::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    da.row_mut(r).fill(g.get(r, 0));
                }
                acc(*a, da);
            }
            Op::Sigmoid(a) => {
                let mut da = g.clone();
                for (d, y) in da.data_mut().iter_mut().zip(out.data()) {
                    *d *= y * (1.0 - y);
                }
                acc(*a, da);
            }
            Op::Tanh(a) => {
                let mut da = g.clone();
                for (d, y) in da.data_mut().iter_mut().zip(out.data()) {
                    *d *= 1.0 - y * y;
                }
                acc(*a, da);
            }
            Op::Relu(a) => {
                let mut da = g.clone();
                for (d, y) in da.data_mut().iter_mut().zip(out.data()) {
                    if *y <= 0.0 {
                        *d = 0.0;
                    }
                }
                acc(*a, da);
            }
            Op::Softmax(a) => {
                let mut da = g.clone();
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let dot: f64 = g.row(r).iter().zip(y).map(|(gg, yy)| gg * yy).sum();
                    for (d, yy) in da.row_mut(r).iter_mut().zip(y) {
                        *d = yy * (*d - dot);
                    }
                }
                acc(*a, da);
            }
            Op::Log(a) => {
                let mut da = g.clone();
                for (d, x) in da.data_mut().iter_mut().zip(self.value(*a).data()) {
                    *d /= x;
                }
                acc(*a, da);
            }
            Op::GatherRows(a, index) => {
                let x = self.value(*a);
                let mut da = Tensor::zeros(x.rows(), x.cols());
                for (r, &i) in index.iter().enumerate() {
                    for (d, gg) in da.row_mut(i).iter_mut().zip(g.row(r)) {
                        *d += gg;
                    }
                }
                acc(*a, da);
            }
            Op::ScatterAddRows(a, index) => {
                let x = self.value(*a);
                let mut da = Tensor::zeros(x.rows(), x.cols());
                for (r, &i) in index.iter().enumerate() {
                    da.row_mut(r).copy_from_slice(g.row(i));
                }
                acc(*a, da);
            }
            Op::BceWithLogits(a, targets) => {
                let z = self.value(*a);
                let scale = g.item() / targets.len() as f64;
                let data = z
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&x, &y)| (sigmoid(x) - y) * scale)
                    .collect();
                acc(*a, Tensor::from_vec(z.rows(), 1, data).expect("shape"));
            }
            Op::Triplet(a, cache) => {
                let p = self.value(*a);
                let mut da = Tensor::zeros(p.rows(), p.cols());
                if cache.count > 0 {
                    let w = g.item() / cache.count as f64;
                    // d|pi - pj|^2 / dpi = 2 (pi - pj)
                    let mut pull = |i: usize, j: usize, s: f64| {
                        for c in 0..p.cols() {
                            let diff = 2.0 * s * (p.get(i, c) - p.get(j, c));
                            da.data_mut()[i * p.cols() + c] += diff;
                            da.data_mut()[j * p.cols() + c] -= diff;
                        }
                    };
                    for &(anc, pos, neg) in &cache.active {
                        pull(anc, pos, w);
                        pull(anc, neg, -w);
                    }
                }
                acc(*a, da);
            }
        }
    }
}

/// Number of valid triplets the triplet loss averages over.
pub fn count_triplets(labels: &[u8]) -> usize {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    pos * pos.saturating_sub(1) * neg + neg * neg.saturating_sub(1) * pos
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn sigmoid_and_tanh_at_zero() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::scalar(0.0));
        let s = tape.sigmoid(z);
        let h = tape.tanh(z);
        assert_eq!(tape.value(s).item(), 0.5);
        assert_eq!(tape.value(h).item(), 0.0);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // y = x*x + x  =>  dy/dx = 2x + 1
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let xx = tape.hadamard(x, x).unwrap();
        let y = tape.add(xx, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 7.0);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::scalar(2.0));
        let b = tape.constant(Tensor::scalar(5.0));
        let y = tape.hadamard(a, b).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(a).unwrap().item(), 5.0);
        assert!(g.get(b).is_none());
    }

    #[test]
    fn shape_errors_name_shapes() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::zeros(2, 3));
        let b = tape.param(Tensor::zeros(3, 2));
        let err = tape.add(a, b).unwrap_err();
        assert_eq!(err.to_string(), "add: incompatible shapes [2, 3] and [3, 2]");
        assert!(tape.backward(a).is_err());
    }

    #[test]
    fn gather_scatter_round_trip() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let g = tape.gather_rows(x, &[1, 1, 0]).unwrap();
        let s = tape.scatter_add_rows(g, &[0, 1, 1], 2).unwrap();
        assert_eq!(tape.value(s), &t(&[vec![3.0, 4.0], vec![4.0, 6.0]]));
        assert!(tape.gather_rows(x, &[2]).is_err());
    }

    #[test]
    fn bce_matches_closed_form() {
        let mut tape = Tape::new();
        let z = tape.param(t(&[vec![0.0], vec![2.0]]));
        let l = tape.bce_with_logits(z, &[1.0, 0.0]).unwrap();
        let expect = (2f64.ln() + (1.0 + 2f64.exp()).ln()) / 2.0;
        assert!((tape.value(l).item() - expect).abs() < 1e-12);
    }

    #[test]
    fn triplet_at_collapsed_anchor_equals_margin() {
        // a = p and d(a, n) = 0: every hinge equals the margin
        let mut tape = Tape::new();
        let x = tape.param(t(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]));
        let l = tape.triplet_margin(x, &[1, 1, 0], 0.5).unwrap();
        assert!((tape.value(l).item() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn triplet_zero_when_margin_satisfied() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[vec![0.0], vec![0.0], vec![5.0], vec![5.0]]));
        let l = tape.triplet_margin(x, &[0, 0, 1, 1], 0.5).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
        assert_eq!(count_triplets(&[0, 0, 1, 1]), 8);
    }

    #[test]
    fn triplet_without_valid_triplets_is_zero() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[vec![0.0], vec![3.0]]));
        let l = tape.triplet_margin(x, &[1, 1], 0.5).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
        assert_eq!(count_triplets(&[1, 1]), 0);
        assert_eq!(count_triplets(&[1, 0]), 0);
    }
}
