//! Tape-based reverse-mode differentiation over 2D tensors.
//!
//! Every op appends a node holding its value; [`Graph::backward`] walks the
//! tape in reverse and accumulates gradients only along paths that reach a
//! parameter.

use crate::error::{ModelError, Result};
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

pub const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        rstd: Vec<f64>,
    },
    Gelu(Var),
    Sigmoid(Var),
    Exp(Var),
    Mean(Var),
    Sum(Var),
    Mse(Var, Tensor),
    GatherRows(Var, Vec<usize>),
    PairwiseSqDist(Var, Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn shape_err(op: &str, a: [usize; 2], b: [usize; 2]) -> ModelError {
    ModelError::Shape(format!("{op}: {}x{} vs {}x{}", a[0], a[1], b[0], b[1]))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Param(_) => true,
            Op::Leaf => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; never receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, &[])
    }

    /// Learnable tensor identified by `index` in the caller's parameter list.
    pub fn param(&mut self, index: usize, value: Tensor) -> Var {
        self.push(value, Op::Param(index), &[])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(shape_err("matmul", av.shape(), bv.shape()));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let mut out = vec![0.0; m * n];
        gemm_nn(av.data(), bv.data(), &mut out, m, k, n);
        Ok(self.push(Tensor::new(m, n, out)?, Op::MatMul(a, b), &[a, b]))
    }

    /// `a * b^T`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(shape_err("matmul_nt", av.shape(), bv.shape()));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.rows());
        let mut out = vec![0.0; m * n];
        gemm_nt(av.data(), bv.data(), &mut out, m, k, n);
        Ok(self.push(Tensor::new(m, n, out)?, Op::MatMulNt(a, b), &[a, b]))
    }

    fn zip(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(name, av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(av.rows(), av.cols(), data)?;
        Ok(self.push(t, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a `1 x c` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        if rv.rows() != 1 || rv.cols() != xv.cols() {
            return Err(shape_err("add_row", xv.shape(), rv.shape()));
        }
        let c = xv.cols();
        let data = xv.data().iter().enumerate().map(|(k, &v)| v + rv.data()[k % c]).collect();
        let t = Tensor::new(xv.rows(), c, data)?;
        Ok(self.push(t, Op::AddRow(x, row), &[x, row]))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let t = self.value(x).map(|v| v * s);
        self.push(t, Op::Scale(x, s), &[x])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.value(p).rows())
            .ok_or_else(|| ModelError::Shape("concat of nothing".into()))?;
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(shape_err("concat_cols", [rows, cols], v.shape()));
            }
            cols += v.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let t = Tensor::new(rows, cols, data)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts
            .first()
            .map(|&p| self.value(p).cols())
            .ok_or_else(|| ModelError::Shape("concat of nothing".into()))?;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(shape_err("concat_rows", [data.len() / cols, cols], v.shape()));
            }
            data.extend_from_slice(v.data());
        }
        let t = Tensor::new(data.len() / cols, cols, data)?;
        Ok(self.push(t, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let xv = self.value(x);
        if width == 0 || start + width > xv.cols() {
            return Err(ModelError::Shape(format!(
                "slice_cols {start}..{} of {} columns",
                start + width,
                xv.cols()
            )));
        }
        let mut data = Vec::with_capacity(xv.rows() * width);
        for r in 0..xv.rows() {
            data.extend_from_slice(&xv.row(r)[start..start + width]);
        }
        let t = Tensor::new(xv.rows(), width, data)?;
        Ok(self.push(t, Op::SliceCols(x, start), &[x]))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let c = xv.cols();
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            row.iter_mut().for_each(|v| *v /= s);
        }
        let t = Tensor::new(xv.rows(), c, data).expect("same shape");
        self.push(t, Op::SoftmaxRows(x), &[x])
    }

    /// Per-row normalisation to zero mean and unit variance, then `* gamma + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols();
        for p in [gamma, beta] {
            let pv = self.value(p);
            if pv.rows() != 1 || pv.cols() != c {
                return Err(shape_err("layer_norm", xv.shape(), pv.shape()));
            }
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        let mut rstd = Vec::with_capacity(xv.rows());
        for r in 0..xv.rows() {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd.push(s);
            for k in 0..c {
                let h = (row[k] - mean) * s;
                xhat[r * c + k] = h;
                out[r * c + k] = h * g[k] + b[k];
            }
        }
        let rows = xv.rows();
        let xhat = Tensor::new(rows, c, xhat)?;
        let t = Tensor::new(rows, c, out)?;
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
        ))
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_K * v * v * v)).tanh()));
        self.push(t, Op::Gelu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(t, Op::Sigmoid(x), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let t = self.value(x).map(f64::exp);
        self.push(t, Op::Exp(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let t = Tensor::scalar(v.sum() / v.len() as f64);
        self.push(t, Op::Mean(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let t = Tensor::scalar(self.value(x).sum());
        self.push(t, Op::Sum(x), &[x])
    }

    /// Mean squared difference to a constant target.
    pub fn mse(&mut self, x: Var, target: &Tensor) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != target.shape() {
            return Err(shape_err("mse", xv.shape(), target.shape()));
        }
        let s: f64 = xv.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let t = Tensor::scalar(s / xv.len() as f64);
        Ok(self.push(t, Op::Mse(x, target.clone()), &[x]))
    }

    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if rows.is_empty() {
            return Err(ModelError::Shape("gather of no rows".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * xv.cols());
        for &r in rows {
            if r >= xv.rows() {
                return Err(ModelError::Shape(format!("row {r} of {}", xv.rows())));
            }
            data.extend_from_slice(xv.row(r));
        }
        let t = Tensor::new(rows.len(), xv.cols(), data)?;
        Ok(self.push(t, Op::GatherRows(x, rows.to_vec()), &[x]))
    }

    /// `out[i][j] = |a_i - b_j|^2`.
    pub fn pairwise_sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(shape_err("pairwise_sq_dist", av.shape(), bv.shape()));
        }
        let t = Tensor::from_fn(av.rows(), bv.rows(), |i, j| {
            av.row(i).iter().zip(bv.row(j)).map(|(x, y)| (x - y) * (x - y)).sum()
        });
        Ok(self.push(t, Op::PairwiseSqDist(a, b), &[a, b]))
    }

    /// Gradients of the scalar `loss` for every parameter reached from it,
    /// as `(parameter index, gradient)`; a parameter used several times
    /// appears once with the summed gradient.
    pub fn backward(&self, loss: Var) -> Result<Vec<(usize, Tensor)>> {
        if self.nodes.is_empty() {
            return Err(ModelError::State("backward called before any forward pass".into()));
        }
        if loss.0 >= self.nodes.len() {
            return Err(ModelError::State("loss does not belong to this graph".into()));
        }
        if self.value(loss).shape() != [1, 1] {
            return Err(ModelError::Shape(format!("loss must be scalar, got {:?}", self.value(loss).shape())));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out: Vec<(usize, Tensor)> = Vec::new();
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            self.step(id, &node.op, g, &mut grads, &mut out);
        }
        out.sort_by_key(|(k, _)| *k);
        Ok(out)
    }

    fn step(&self, id: usize, op: &Op, g: Tensor, grads: &mut [Option<Tensor>], out: &mut Vec<(usize, Tensor)>) {
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(e) => e.add_assign(&t),
                slot => *slot = Some(t),
            }
        };
        let needs = |v: Var| self.nodes[v.0].needs_grad;
        let y = &self.nodes[id].value;
        match op {
            Op::Leaf => {}
            Op::Param(k) => match out.iter_mut().find(|(i, _)| i == k) {
                Some((_, e)) => e.add_assign(&g),
                None => out.push((*k, g)),
            },
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if needs(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm_nt(g.data(), bv.data(), &mut da, m, n, k);
                    acc(*a, Tensor::new(m, k, da).expect("shape"));
                }
                if needs(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm_tn(av.data(), g.data(), &mut db, k, m, n);
                    acc(*b, Tensor::new(k, n, db).expect("shape"));
                }
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                if needs(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm_nn(g.data(), bv.data(), &mut da, m, n, k);
                    acc(*a, Tensor::new(m, k, da).expect("shape"));
                }
                if needs(*b) {
                    let mut db = vec![0.0; n * k];
                    gemm_tn(g.data(), av.data(), &mut db, n, m, k);
                    acc(*b, Tensor::new(n, k, db).expect("shape"));
                }
            }
            Op::Add(a, b) => {
                if needs(*b) {
                    acc(*b, g.clone());
                }
                acc(*a, g);
            }
            Op::Sub(a, b) => {
                if needs(*b) {
                    acc(*b, g.map(|v| -v));
                }
                acc(*a, g);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if needs(*a) {
                    acc(*a, zip_with(&g, bv, |x, y| x * y));
                }
                if needs(*b) {
                    acc(*b, zip_with(&g, av, |x, y| x * y));
                }
            }
            Op::AddRow(x, r) => {
                if needs(*r) {
                    acc(*r, column_sums(&g));
                }
                acc(*x, g);
            }
            Op::Scale(x, s) => acc(*x, g.map(|v| v * s)),
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if needs(p) {
                        acc(p, Tensor::from_fn(g.rows(), w, |r, c| g.get(r, start + c)));
                    }
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let c = g.cols();
                let mut start = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if needs(p) {
                        let part = g.data()[start..start + n].to_vec();
                        acc(p, Tensor::new(n / c, c, part).expect("shape"));
                    }
                    start += n;
                }
            }
            Op::SliceCols(x, start) => {
                let xv = self.value(*x);
                let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        dx.set(r, start + c, g.get(r, c));
                    }
                }
                acc(*x, dx);
            }
            Op::SoftmaxRows(x) => {
                let c = y.cols();
                let mut dx = g.data().to_vec();
                for (r, row) in dx.chunks_mut(c).enumerate() {
                    let yr = y.row(r);
                    let dot: f64 = row.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for (d, &yv) in row.iter_mut().zip(yr) {
                        *d = yv * (*d - dot);
                    }
                }
                acc(*x, Tensor::new(y.rows(), c, dx).expect("shape"));
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let c = xhat.cols();
                let gv = self.value(*gamma).data();
                if needs(*gamma) {
                    acc(*gamma, column_sums(&zip_with(&g, xhat, |a, b| a * b)));
                }
                if needs(*beta) {
                    acc(*beta, column_sums(&g));
                }
                if needs(*x) {
                    let mut dx = vec![0.0; g.len()];
                    for r in 0..g.rows() {
                        let gr = g.row(r);
                        let hr = xhat.row(r);
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        for k in 0..c {
                            let d = gr[k] * gv[k];
                            m1 += d;
                            m2 += d * hr[k];
                        }
                        m1 /= c as f64;
                        m2 /= c as f64;
                        for k in 0..c {
                            dx[r * c + k] = rstd[r] * (gr[k] * gv[k] - m1 - hr[k] * m2);
                        }
                    }
                    acc(*x, Tensor::new(g.rows(), c, dx).expect("shape"));
                }
            }
            Op::Gelu(x) => {
                let xv = self.value(*x);
                acc(
                    *x,
                    zip_with(&g, xv, |d, v| {
                        let th = (GELU_C * (v + GELU_K * v * v * v)).tanh();
                        let dth = (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_K * v * v);
                        d * (0.5 * (1.0 + th) + 0.5 * v * dth)
                    }),
                );
            }
            Op::Sigmoid(x) => acc(*x, zip_with(&g, y, |d, s| d * s * (1.0 - s))),
            Op::Exp(x) => acc(*x, zip_with(&g, y, |d, e| d * e)),
            Op::Mean(x) => {
                let xv = self.value(*x);
                acc(*x, Tensor::filled(xv.rows(), xv.cols(), g.get(0, 0) / xv.len() as f64));
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                acc(*x, Tensor::filled(xv.rows(), xv.cols(), g.get(0, 0)));
            }
            Op::Mse(x, target) => {
                let xv = self.value(*x);
                let s = 2.0 * g.get(0, 0) / xv.len() as f64;
                acc(*x, zip_with(xv, target, |a, b| s * (a - b)));
            }
            Op::GatherRows(x, rows) => {
                let xv = self.value(*x);
                let c = xv.cols();
                let mut dx = Tensor::zeros(xv.rows(), c);
                for (k, &r) in rows.iter().enumerate() {
                    for j in 0..c {
                        let v = dx.get(r, j) + g.get(k, j);
                        dx.set(r, j, v);
                    }
                }
                acc(*x, dx);
            }
            Op::PairwiseSqDist(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let d = av.cols();
                let mut da = Tensor::zeros(av.rows(), d);
                let mut db = Tensor::zeros(bv.rows(), d);
                for i in 0..av.rows() {
                    for j in 0..bv.rows() {
                        let w = 2.0 * g.get(i, j);
                        if w == 0.0 {
                            continue;
                        }
                        for k in 0..d {
                            let diff = w * (av.get(i, k) - bv.get(j, k));
                            da.set(i, k, da.get(i, k) + diff);
                            db.set(j, k, db.get(j, k) - diff);
                        }
                    }
                }
                if needs(*a) {
                    acc(*a, da);
                }
                if needs(*b) {
                    acc(*b, db);
                }
            }
        }
    }
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}

fn column_sums(g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, v) in out.data_mut().iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut s = seed;
        let data = (0..rows * cols)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        Tensor::new(rows, cols, data).unwrap()
    }

    #[test]
    fn backward_before_forward_is_a_state_error() {
        let g = Graph::new();
        assert!(matches!(g.backward(Var(0)), Err(ModelError::State(_))));
    }

    #[test]
    fn square_norm_gradient_is_twice_x() {
        let mut g = Graph::new();
        let x0 = t(3, 2, 1);
        let x = g.param(0, x0.clone());
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.len(), 1);
        for (a, b) in grads[0].1.data().iter().zip(x0.data()) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn unused_parameters_get_no_gradient() {
        let mut g = Graph::new();
        let a = g.param(0, t(2, 2, 1));
        let _b = g.param(1, t(2, 2, 2));
        let loss = g.sum(a);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.leaf(t(4, 7, 3).map(|v| 30.0 * v));
        let y = g.softmax_rows(x);
        for r in 0..4 {
            let s: f64 = g.value(y).row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.param(0, t(2, 2, 1));
        assert!(matches!(g.backward(x), Err(ModelError::Shape(_))));
    }

    /// Central differences of `build` w.r.t. every entry of every param.
    fn check(params: Vec<Tensor>, build: impl Fn(&mut Graph, &[Var]) -> Var) {
        let eval = |ps: &[Tensor]| {
            let mut g = Graph::new();
            let vars: Vec<Var> = ps.iter().enumerate().map(|(k, p)| g.param(k, p.clone())).collect();
            let l = build(&mut g, &vars);
            g.value(l).get(0, 0)
        };
        let mut g = Graph::new();
        let vars: Vec<Var> = params.iter().enumerate().map(|(k, p)| g.param(k, p.clone())).collect();
        let l = build(&mut g, &vars);
        let grads = g.backward(l).unwrap();
        let h = 1e-6;
        for (k, analytic) in grads {
            for e in 0..params[k].len() {
                let mut plus = params.clone();
                plus[k].data_mut()[e] += h;
                let mut minus = params.clone();
                minus[k].data_mut()[e] -= h;
                let num = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.data()[e];
                let err = (a - num).abs() / (a.abs() + num.abs()).max(1e-8);
                assert!(err < 1e-6 || (a - num).abs() < 1e-9, "param {k}[{e}]: analytic {a} numeric {num}");
            }
        }
    }

    #[test]
    fn op_gradients_match_finite_differences() {
        check(vec![t(3, 4, 1), t(4, 2, 2), t(1, 2, 3)], |g, v| {
            let m = g.matmul(v[0], v[1]).unwrap();
            let r = g.add_row(m, v[2]).unwrap();
            let s = g.gelu(r);
            let e = g.softmax_rows(s);
            let y = g.sigmoid(e);
            g.mse(y, &Tensor::filled(3, 2, 0.3)).unwrap()
        });
        check(vec![t(3, 4, 4), t(5, 4, 5), t(1, 4, 6), t(1, 4, 7)], |g, v| {
            let ln = g.layer_norm(v[0], v[2], v[3]).unwrap();
            let a = g.matmul_nt(ln, v[1]).unwrap();
            let c = g.concat_cols(&[a, ln]).unwrap();
            let c = g.concat_rows(&[c, c]).unwrap();
            let sl = g.slice_cols(c, 2, 5).unwrap();
            let sc = g.scale(sl, 0.7);
            let ex = g.exp(sc);
            let sub = g.sub(ex, sl).unwrap();
            let mul = g.mul(sub, sl).unwrap();
            g.mean(mul)
        });
        check(vec![t(4, 3, 8), t(3, 3, 9)], |g, v| {
            let rows = g.gather_rows(v[0], &[0, 2, 2, 3]).unwrap();
            let d = g.pairwise_sq_dist(rows, v[1]).unwrap();
            let k = g.scale(d, -0.5);
            let e = g.exp(k);
            let s = g.sum(e);
            let two = g.add(s, s).unwrap();
            g.scale(two, 0.25)
        });
    }
}
