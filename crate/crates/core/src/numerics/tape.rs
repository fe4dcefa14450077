//! Minimal reverse-mode gradient engine.
//!
//! A [`Tape`] records primitive operations eagerly: every call computes the
//! output value immediately and appends a node. Node ids grow monotonically,
//! so the record is always in topological order and [`Tape::backward`] is a
//! single reverse sweep that visits each node once.
//!
//! The primitive set is closed: the [`Op`] enum is private and the only way
//! to add a node is through the methods below, each of which validates
//! shapes and degenerate inputs before recording anything.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{norm, Tensor};
use super::vector::softmax_unchecked;
use crate::error::{Error, Result};

/// Probability floor applied inside `log` by the cross-entropy composite.
pub const LOG_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Param,
    Constant,
    Add(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul(usize, usize),
    Transpose(usize),
    AddRow(usize, usize),
    ConcatRows(usize, usize),
    Exp(usize),
    Log(usize),
    Relu(usize),
    Sum(usize),
    SoftmaxRows(usize),
    CrossEntropy {
        logits: usize,
        targets: Tensor,
        probs: Tensor,
        unclamped: Vec<bool>,
    },
    L2Norm(usize),
    Cosine {
        a: usize,
        b: usize,
        a_hat: Tensor,
        b_hat: Tensor,
        a_norm: Vec<f64>,
        b_norm: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of the right shape when nothing flowed.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn shape_err(op: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::dim(format!("{op}: shapes {:?} and {:?}", a.shape(), b.shape()))
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                component: format!("tape node {} ({})", self.nodes.len(), op_name(&op)),
            });
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Result<Var> {
        self.push(Op::Param, t)
    }

    /// Non-trainable leaf; never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(Op::Constant, t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("add", va, vb));
        }
        let out = va.zip_map(vb, |x, y| x + y)?;
        self.push(Op::Add(a.0, b.0), out)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("mul", va, vb));
        }
        let out = va.zip_map(vb, |x, y| x * y)?;
        self.push(Op::Mul(a.0, b.0), out)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a.0, s), out)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x + s);
        self.push(Op::AddScalar(a.0), out)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a.0, b.0), out)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose();
        self.push(Op::Transpose(a.0), out)
    }

    /// Adds a row vector to every row of a matrix (bias add).
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var> {
        let (vm, vr) = (self.value(m), self.value(row));
        if vr.len() != vm.cols() {
            return Err(shape_err("add_row", vm, vr));
        }
        let mut out = vm.as_matrix();
        let c = out.cols();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(vr.data()) {
                *o += b;
            }
        }
        debug_assert_eq!(c, vr.len());
        self.push(Op::AddRow(m.0, row.0), out)
    }

    /// Stacks `a` on top of `b`.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(shape_err("concat_rows", va, vb));
        }
        let mut data = va.data().to_vec();
        data.extend_from_slice(vb.data());
        let out = Tensor::matrix(va.rows() + vb.rows(), va.cols(), data)?;
        self.push(Op::ConcatRows(a.0, b.0), out)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(libm::exp);
        self.push(Op::Exp(a.0), out)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.data().iter().any(|&x| x <= 0.0) {
            return Err(Error::degenerate("log of non-positive value"));
        }
        let out = va.map(libm::log);
        self.push(Op::Log(a.0), out)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a.0), out)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a.0), out)
    }

    /// Row-wise max-shifted softmax of a matrix.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a).as_matrix();
        let mut out = va.clone();
        for r in 0..va.rows() {
            let p = softmax_unchecked(va.row(r));
            out.row_mut(r).copy_from_slice(&p);
        }
        self.push(Op::SoftmaxRows(a.0), out)
    }

    /// Row-wise softmax with a non-negative prior per column:
    /// `wᵢⱼ = qⱼ·exp(zᵢⱼ) / Σⱼ' qⱼ'·exp(zᵢⱼ')`. Columns with `qⱼ = 0` get
    /// exactly zero weight.
    pub fn softmax_rows_weighted(&mut self, a: Var, prior: &[f64]) -> Result<Var> {
        let va = self.value(a).as_matrix();
        if prior.len() != va.cols() {
            return Err(Error::dim(format!(
                "softmax prior of length {} for {} columns",
                prior.len(),
                va.cols()
            )));
        }
        if prior.iter().any(|&q| !(q >= 0.0) || !q.is_finite()) {
            return Err(Error::degenerate("softmax prior must be finite and non-negative"));
        }
        if !prior.iter().any(|&q| q > 0.0) {
            return Err(Error::degenerate("softmax prior is all zero"));
        }
        let mut out = va.clone();
        for r in 0..va.rows() {
            let row = va.row(r);
            let mx = row
                .iter()
                .zip(prior)
                .filter(|(_, &q)| q > 0.0)
                .map(|(&z, _)| z)
                .fold(f64::NEG_INFINITY, f64::max);
            let o = out.row_mut(r);
            let mut total = 0.0;
            for ((o, &z), &q) in o.iter_mut().zip(row).zip(prior) {
                *o = if q > 0.0 { q * libm::exp(z - mx) } else { 0.0 };
                total += *o;
            }
            for o in o.iter_mut() {
                *o /= total;
            }
        }
        self.push(Op::SoftmaxRows(a.0), out)
    }

    /// Mean soft-target cross-entropy of row-wise softmax:
    /// `−(1/n) Σᵢ Σₖ Tᵢₖ · log max(pᵢₖ, ε)`.
    ///
    /// `mask` (same shape as the logits) drops entries from the softmax
    /// entirely; masked entries must carry zero target mass.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: Tensor,
        mask: Option<&[bool]>,
    ) -> Result<Var> {
        let z = self.value(logits).as_matrix();
        let (n, k) = (z.rows(), z.cols());
        if targets.rows() != n || targets.cols() != k {
            return Err(shape_err("softmax_cross_entropy", &z, &targets));
        }
        if n == 0 || k == 0 {
            return Err(Error::dim("softmax_cross_entropy on empty logits"));
        }
        if let Some(m) = mask {
            if m.len() != n * k {
                return Err(Error::dim("softmax_cross_entropy mask length"));
            }
        }
        let keep = |i: usize, j: usize| mask.map_or(true, |m| m[i * k + j]);
        let log_eps = libm::log(LOG_EPS);
        let mut probs = Tensor::zeros(&[n, k]);
        let mut unclamped = vec![false; n * k];
        let mut loss = 0.0;
        for i in 0..n {
            let zi = z.row(i);
            let mut mx = f64::NEG_INFINITY;
            for j in 0..k {
                if keep(i, j) {
                    mx = mx.max(zi[j]);
                }
            }
            if mx == f64::NEG_INFINITY {
                return Err(Error::degenerate("softmax row with every entry masked"));
            }
            let mut zsum = 0.0;
            for j in 0..k {
                if keep(i, j) {
                    zsum += libm::exp(zi[j] - mx);
                }
            }
            let lse = mx + libm::log(zsum);
            for j in 0..k {
                let t = targets.get(i, j);
                if !keep(i, j) {
                    if t != 0.0 {
                        return Err(Error::degenerate("target mass on a masked logit"));
                    }
                    continue;
                }
                let logp = zi[j] - lse;
                probs.set(i, j, libm::exp(logp));
                let clamped = logp < log_eps;
                unclamped[i * k + j] = !clamped;
                if t != 0.0 {
                    loss -= t * if clamped { log_eps } else { logp };
                }
            }
        }
        let out = Tensor::scalar(loss / n as f64);
        self.push(
            Op::CrossEntropy {
                logits: logits.0,
                targets,
                probs,
                unclamped,
            },
            out,
        )
    }

    /// Euclidean norm of all elements.
    pub fn l2_norm(&mut self, a: Var) -> Result<Var> {
        let n = norm(self.value(a).data());
        if n == 0.0 {
            return Err(Error::degenerate("l2 norm gradient undefined at zero"));
        }
        self.push(Op::L2Norm(a.0), Tensor::scalar(n))
    }

    /// Pairwise cosine similarity between the rows of `a` (n×d) and `b`
    /// (m×d), giving an n×m matrix.
    pub fn cosine_matrix(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a).as_matrix(), self.value(b).as_matrix());
        if va.cols() != vb.cols() {
            return Err(shape_err("cosine_matrix", &va, &vb));
        }
        let normalize = |m: &Tensor| -> Result<(Tensor, Vec<f64>)> {
            let mut hat = m.clone();
            let mut norms = Vec::with_capacity(m.rows());
            for r in 0..m.rows() {
                let nr = norm(m.row(r));
                if nr == 0.0 {
                    return Err(Error::degenerate(format!(
                        "cosine similarity of zero-norm row {r}"
                    )));
                }
                for x in hat.row_mut(r) {
                    *x /= nr;
                }
                norms.push(nr);
            }
            Ok((hat, norms))
        };
        let (a_hat, a_norm) = normalize(&va)?;
        let (b_hat, b_norm) = normalize(&vb)?;
        let out = a_hat.matmul_t(&b_hat)?;
        self.push(
            Op::Cosine {
                a: a.0,
                b: b.0,
                a_hat,
                b_hat,
                a_norm,
                b_norm,
            },
            out,
        )
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::dim("backward from a non-scalar node"));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.nodes[loss.0].value.shape(), 1.0));

        fn acc(grads: &mut [Option<Tensor>], i: usize, g: Tensor) {
            match &mut grads[i] {
                Some(t) => t.add_assign_scaled(&g, 1.0),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let val = |i: usize| &self.nodes[i].value;
            match &node.op {
                Op::Param | Op::Constant => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, g.zip_map(val(*b), |x, y| x * y)?);
                    acc(&mut grads, *b, g.zip_map(val(*a), |x, y| x * y)?);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.map(|x| x * s)),
                Op::AddScalar(a) => acc(&mut grads, *a, g),
                Op::MatMul(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    let ga = g.matmul_t(vb)?;
                    let gb = va.transpose().matmul(&g)?;
                    acc(&mut grads, *a, reshape_like(ga, va));
                    acc(&mut grads, *b, reshape_like(gb, vb));
                }
                Op::Transpose(a) => {
                    let ga = g.transpose();
                    acc(&mut grads, *a, reshape_like(ga, val(*a)));
                }
                Op::AddRow(m, r) => {
                    let mut gr = alloc::vec![0.0; g.cols()];
                    for row in g.row_iter() {
                        for (o, &x) in gr.iter_mut().zip(row) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *r, Tensor::new(val(*r).shape().to_vec(), gr)?);
                    acc(&mut grads, *m, reshape_like(g, val(*m)));
                }
                Op::ConcatRows(a, b) => {
                    let split = val(*a).len();
                    let (ga, gb) = g.data().split_at(split);
                    acc(&mut grads, *a, Tensor::new(val(*a).shape().to_vec(), ga.to_vec())?);
                    acc(&mut grads, *b, Tensor::new(val(*b).shape().to_vec(), gb.to_vec())?);
                }
                Op::Exp(a) => acc(&mut grads, *a, g.zip_map(&node.value, |x, y| x * y)?),
                Op::Log(a) => acc(&mut grads, *a, g.zip_map(val(*a), |x, y| x / y)?),
                Op::Relu(a) => acc(
                    &mut grads,
                    *a,
                    g.zip_map(val(*a), |x, y| if y > 0.0 { x } else { 0.0 })?,
                ),
                Op::Sum(a) => {
                    let s = g.data()[0];
                    acc(&mut grads, *a, Tensor::filled(val(*a).shape(), s));
                }
                Op::SoftmaxRows(a) => {
                    let p = &node.value;
                    let mut ga = p.clone();
                    for r in 0..p.rows() {
                        let (pr, gr) = (p.row(r), g.row(r));
                        let inner: f64 = pr.iter().zip(gr).map(|(x, y)| x * y).sum();
                        for (o, (&pi, &gi)) in ga.row_mut(r).iter_mut().zip(pr.iter().zip(gr)) {
                            *o = pi * (gi - inner);
                        }
                    }
                    acc(&mut grads, *a, reshape_like(ga, val(*a)));
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                    unclamped,
                } => {
                    let s = g.data()[0];
                    let (n, k) = (probs.rows(), probs.cols());
                    let mut gz = Tensor::zeros(&[n, k]);
                    for i in 0..n {
                        let mut mass = 0.0;
                        for j in 0..k {
                            if unclamped[i * k + j] {
                                mass += targets.get(i, j);
                            }
                        }
                        for j in 0..k {
                            let own = if unclamped[i * k + j] {
                                targets.get(i, j)
                            } else {
                                0.0
                            };
                            gz.set(i, j, s * (probs.get(i, j) * mass - own) / n as f64);
                        }
                    }
                    acc(&mut grads, *logits, reshape_like(gz, val(*logits)));
                }
                Op::L2Norm(a) => {
                    let s = g.data()[0] / node.value.data()[0];
                    acc(&mut grads, *a, val(*a).map(|x| x * s));
                }
                Op::Cosine {
                    a,
                    b,
                    a_hat,
                    b_hat,
                    a_norm,
                    b_norm,
                } => {
                    let c = &node.value;
                    let d = a_hat.cols();
                    let mut ga = Tensor::zeros(&[a_hat.rows(), d]);
                    let mut gb = Tensor::zeros(&[b_hat.rows(), d]);
                    for i in 0..a_hat.rows() {
                        for j in 0..b_hat.rows() {
                            let gij = g.get(i, j);
                            if gij == 0.0 {
                                continue;
                            }
                            let cij = c.get(i, j);
                            let (ai, bj) = (a_hat.row(i), b_hat.row(j));
                            let sa = gij / a_norm[i];
                            let sb = gij / b_norm[j];
                            for t in 0..d {
                                ga.data_mut()[i * d + t] += sa * (bj[t] - cij * ai[t]);
                                gb.data_mut()[j * d + t] += sb * (ai[t] - cij * bj[t]);
                            }
                        }
                    }
                    acc(&mut grads, *a, reshape_like(ga, val(*a)));
                    acc(&mut grads, *b, reshape_like(gb, val(*b)));
                }
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Constant) {
                grads[i] = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }
}

fn reshape_like(t: Tensor, like: &Tensor) -> Tensor {
    if t.shape() == like.shape() {
        return t;
    }
    Tensor::new(like.shape().to_vec(), t.into_data()).expect("gradient size matches value")
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Param => "param",
        Op::Constant => "constant",
        Op::Add(..) => "add",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::AddScalar(..) => "add_scalar",
        Op::MatMul(..) => "matmul",
        Op::Transpose(..) => "transpose",
        Op::AddRow(..) => "add_row",
        Op::ConcatRows(..) => "concat_rows",
        Op::Exp(..) => "exp",
        Op::Log(..) => "log",
        Op::Relu(..) => "relu",
        Op::Sum(..) => "sum",
        Op::SoftmaxRows(..) => "softmax_rows",
        Op::CrossEntropy { .. } => "softmax_cross_entropy",
        Op::L2Norm(..) => "l2_norm",
        Op::Cosine { .. } => "cosine_matrix",
    }
}

/// Evaluates `build` on a fresh tape with `params` as trainable leaves and
/// returns the scalar value together with one gradient per parameter.
pub fn value_and_grad<F>(params: &[Tensor], build: F) -> Result<(f64, Vec<Tensor>)>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = params
        .iter()
        .map(|p| tape.param(p.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    Ok((tape.scalar(loss), vars.iter().map(|&v| grads.wrt(v)).collect()))
}

/// Central differences `(f(p+h) − f(p−h)) / 2h`, one coordinate at a time.
pub fn finite_difference_gradient<F>(params: &[Tensor], h: f64, mut f: F) -> Result<Vec<Tensor>>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::config("h", "step must be positive"));
    }
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut g = Tensor::zeros(params[p].shape());
        for i in 0..params[p].len() {
            let orig = work[p].data()[i];
            work[p].data_mut()[i] = orig + h;
            let up = f(&work)?;
            work[p].data_mut()[i] = orig - h;
            let down = f(&work)?;
            work[p].data_mut()[i] = orig;
            g.data_mut()[i] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}

/// Largest coordinate-wise relative error `|a − b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[Tensor], b: &[Tensor], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.data().iter().zip(y.data()))
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn squared_norm_gradient() {
        let w = Tensor::vector(vec![1.0, 2.0]);
        let (v, g) = value_and_grad(&[w], |t, p| {
            let sq = t.mul(p[0], p[0])?;
            t.sum(sq)
        })
        .unwrap();
        assert_eq!(v, 5.0);
        assert_eq!(g[0].data(), &[2.0, 4.0]);
    }

    #[test]
    fn cross_entropy_gradient_at_uniform() {
        let z = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        let target = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let (v, g) = value_and_grad(&[z], |t, p| t.softmax_cross_entropy(p[0], target, None))
            .unwrap();
        assert!((v - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((g[0].data()[0] + 0.5).abs() < 1e-15);
        assert!((g[0].data()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn finite_difference_examples() {
        let sq = finite_difference_gradient(&[Tensor::vector(vec![3.0])], 1e-5, |p| {
            Ok(p[0].data()[0] * p[0].data()[0])
        })
        .unwrap();
        assert!((sq[0].data()[0] - 6.0).abs() < 1e-9);
        let ex = finite_difference_gradient(&[Tensor::vector(vec![0.0])], 1e-5, |p| {
            Ok(libm::exp(p[0].data()[0]))
        })
        .unwrap();
        assert!((ex[0].data()[0] - 1.0).abs() < 1e-9);
        assert!(finite_difference_gradient(&[], 0.0, |_| Ok(0.0)).is_err());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let p = t.param(Tensor::vector(vec![3.0, 4.0])).unwrap();
        let m = t.mul(c, p).unwrap();
        let s = t.sum(m).unwrap();
        let g = t.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.wrt(c).data(), &[0.0, 0.0]);
        assert_eq!(g.wrt(p).data(), &[1.0, 2.0]);
    }

    #[test]
    fn construction_errors() {
        let mut t = Tape::new();
        let a = t.param(Tensor::zeros(&[2, 3])).unwrap();
        let b = t.param(Tensor::zeros(&[3, 2])).unwrap();
        assert!(t.add(a, b).is_err());
        assert!(t.log(a).is_err());
        assert!(t.cosine_matrix(a, a).is_err());
        assert!(t.l2_norm(a).is_err());
        let big = t.param(Tensor::vector(vec![1e6])).unwrap();
        assert!(matches!(t.exp(big), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn backward_visits_each_node_once() {
        // x used twice: gradient must accumulate, not double-propagate
        let (_, g) = value_and_grad(&[Tensor::vector(vec![2.0])], |t, p| {
            let a = t.scale(p[0], 3.0)?;
            let b = t.add(a, p[0])?;
            let c = t.add(b, b)?;
            t.sum(c)
        })
        .unwrap();
        assert_eq!(g[0].data(), &[8.0]);
    }
}
