use std::sync::Arc;

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;

use super::{Real, SparseOperator};
use crate::error::{Error, Result};

/// Scores are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before taking logs.
pub const BCE_CLAMP: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T: Real> {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Concat(Var, Var),
    Dropout(Var, Array2<T>),
    Spmm(Arc<SparseOperator<T>>, Var),
    Sum(Var),
    Bce {
        scores: Var,
        rows: Vec<usize>,
        targets: Vec<T>,
    },
}

struct Node<T: Real> {
    value: Array2<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a forward computation. Nodes are appended in evaluation order, so
/// index order is a topological order.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape<T>(a: &Array2<T>) -> (usize, usize) {
    a.dim()
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_of(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Array2<T> {
        &self.nodes[v.0].value
    }

    /// A constant input; never receives a gradient.
    pub fn constant(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Array2<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.ncols(),
            vb.nrows(),
            "matmul shape mismatch: {:?} x {:?}",
            shape(va),
            shape(vb)
        );
        let out = va.dot(vb);
        let rg = self.grad_of(a) || self.grad_of(b);
        self.push(out, Op::MatMul(a, b), rg)
    }

    /// Adds a `1 × m` bias row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (vx, vb) = (self.value(x), self.value(bias));
        assert!(
            vb.nrows() == 1 && vb.ncols() == vx.ncols(),
            "add_bias shape mismatch: {:?} + {:?}",
            shape(vx),
            shape(vb)
        );
        let out = vx + vb;
        let rg = self.grad_of(x) || self.grad_of(bias);
        self.push(out, Op::AddBias(x, bias), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(shape(va), shape(vb), "add shape mismatch: {:?} + {:?}", shape(va), shape(vb));
        let out = va + vb;
        let rg = self.grad_of(a) || self.grad_of(b);
        self.push(out, Op::Add(a, b), rg)
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(shape(va), shape(vb), "mul shape mismatch: {:?} * {:?}", shape(va), shape(vb));
        let out = va * vb;
        let rg = self.grad_of(a) || self.grad_of(b);
        self.push(out, Op::Mul(a, b), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.grad_of(x);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| {
            if v >= T::zero() {
                T::one() / (T::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::one() + e)
            }
        });
        let rg = self.grad_of(x);
        self.push(out, Op::Sigmoid(x), rg)
    }

    /// Concatenate along the feature (column) axis: row `i` becomes `[a_i ‖ b_i]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.nrows(),
            vb.nrows(),
            "concat shape mismatch: {:?} | {:?}",
            shape(va),
            shape(vb)
        );
        let out = concatenate(Axis(1), &[va.view(), vb.view()]).expect("row counts checked");
        let rg = self.grad_of(a) || self.grad_of(b);
        self.push(out, Op::Concat(a, b), rg)
    }

    /// Inverted dropout: each entry is zeroed with probability `p`, survivors
    /// are scaled by `1 / (1 - p)`. `p == 0` returns `x` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Var {
        assert!((0.0..1.0).contains(&p), "dropout probability {p} outside [0, 1)");
        if p == 0.0 {
            return x;
        }
        let scale = T::from_f64(1.0 / (1.0 - p));
        let mask = self
            .value(x)
            .mapv(|_| if rng.random::<f64>() < p { T::zero() } else { scale });
        let out = self.value(x) * &mask;
        let rg = self.grad_of(x);
        self.push(out, Op::Dropout(x, mask), rg)
    }

    /// Sparse-dense product `op · x`.
    pub fn spmm(&mut self, op: &Arc<SparseOperator<T>>, x: Var) -> Var {
        let out = op.forward.mul_dense(self.value(x).view());
        let rg = self.grad_of(x);
        self.push(out, Op::Spmm(Arc::clone(op), x), rg)
    }

    /// Sum of all entries as a `1 × 1` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().fold(T::zero(), |acc, &v| acc + v);
        let rg = self.grad_of(x);
        self.push(Array2::from_elem((1, 1), total), Op::Sum(x), rg)
    }

    /// Mean binary cross-entropy over the given rows of an `n × 1` score column.
    pub fn bce_loss(&mut self, scores: Var, rows: &[usize], targets: &[T]) -> Var {
        let vs = self.value(scores);
        assert_eq!(vs.ncols(), 1, "bce scores must be a column, got {:?}", shape(vs));
        assert_eq!(rows.len(), targets.len(), "bce rows/targets length mismatch");
        let lo = T::from_f64(BCE_CLAMP);
        let hi = T::one() - lo;
        let mut total = 0.0f64;
        for (&r, &y) in rows.iter().zip(targets) {
            let s = clamp(vs[[r, 0]], lo, hi);
            let l = y * s.ln() + (T::one() - y) * (T::one() - s).ln();
            total -= l.to_f64();
        }
        let mean = if rows.is_empty() { 0.0 } else { total / rows.len() as f64 };
        let rg = self.grad_of(scores);
        self.push(
            Array2::from_elem((1, 1), T::from_f64(mean)),
            Op::Bce {
                scores,
                rows: rows.to_vec(),
                targets: targets.to_vec(),
            },
            rg,
        )
    }

    /// Reverse pass from a scalar node. Only nodes that depend on a
    /// [`Tape::param`] leaf receive gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let root = self.nodes.get(loss.0).ok_or(Error::NotScalarLoss((0, 0)))?;
        if root.value.dim() != (1, 1) {
            return Err(Error::NotScalarLoss(root.value.dim()));
        }
        let mut grads: Vec<Option<Array2<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array2::from_elem((1, 1), T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.grad_of(*a) {
                        let ga = g.dot(&self.value(*b).t());
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.grad_of(*b) {
                        let gb = self.value(*a).t().dot(&g);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::AddBias(x, b) => {
                    if self.grad_of(*b) {
                        let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                        accumulate(&mut grads, *b, gb);
                    }
                    if self.grad_of(*x) {
                        accumulate(&mut grads, *x, g.clone());
                    }
                }
                Op::Add(a, b) => {
                    if self.grad_of(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.grad_of(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                }
                Op::Mul(a, b) => {
                    if self.grad_of(*a) {
                        accumulate(&mut grads, *a, &g * self.value(*b));
                    }
                    if self.grad_of(*b) {
                        accumulate(&mut grads, *b, &g * self.value(*a));
                    }
                }
                Op::Relu(x) => {
                    let mut gx = g.clone();
                    gx.zip_mut_with(&node.value, |d, &out| {
                        if out <= T::zero() {
                            *d = T::zero();
                        }
                    });
                    accumulate(&mut grads, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let mut gx = g.clone();
                    gx.zip_mut_with(&node.value, |d, &s| *d *= s * (T::one() - s));
                    accumulate(&mut grads, *x, gx);
                }
                Op::Concat(a, b) => {
                    let split = self.value(*a).ncols();
                    if self.grad_of(*a) {
                        accumulate(&mut grads, *a, g.slice(s![.., ..split]).to_owned());
                    }
                    if self.grad_of(*b) {
                        accumulate(&mut grads, *b, g.slice(s![.., split..]).to_owned());
                    }
                }
                Op::Dropout(x, mask) => {
                    accumulate(&mut grads, *x, &g * mask);
                }
                Op::Spmm(op, x) => {
                    let gx = op.transpose.mul_dense(g.view());
                    accumulate(&mut grads, *x, gx);
                }
                Op::Sum(x) => {
                    let gx = Array2::from_elem(self.value(*x).dim(), g[[0, 0]]);
                    accumulate(&mut grads, *x, gx);
                }
                Op::Bce {
                    scores,
                    rows,
                    targets,
                } => {
                    let vs = self.value(*scores);
                    let mut gs = Array2::zeros(vs.dim());
                    let lo = T::from_f64(BCE_CLAMP);
                    let hi = T::one() - lo;
                    let m = T::from_f64(rows.len().max(1) as f64);
                    let upstream = g[[0, 0]];
                    for (&r, &y) in rows.iter().zip(targets) {
                        // gradient evaluated at the clamped score
                        let s = clamp(vs[[r, 0]], lo, hi);
                        let d = (-(y / s) + (T::one() - y) / (T::one() - s)) / m;
                        gs[[r, 0]] += upstream * d;
                    }
                    accumulate(&mut grads, *scores, gs);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn clamp<T: Real>(v: T, lo: T, hi: T) -> T {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Array2<T>>], v: Var, g: Array2<T>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

/// Gradients from one backward pass, indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Array2<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Array2<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of `shape` when `v` did not influence the loss.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<T> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(shape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_values() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(array![[-1.0, 0.0, 2.0]]);
        let y = t.relu(x);
        assert_eq!(t.value(y), &array![[0.0, 0.0, 2.0]]);
    }

    #[test]
    fn sum_relu_gradient() {
        let mut t = Tape::<f64>::new();
        let x = t.param(array![[1.0, -1.0]]);
        let r = t.relu(x);
        let f = t.sum(r);
        let g = t.backward(f).unwrap();
        assert_eq!(g.get(x).unwrap(), &array![[1.0, 0.0]]);
    }

    #[test]
    fn linear_gradient_is_input_broadcast() {
        // f(W) = sum(x · W) with x 1×3, W 3×2: dW[i, j] = x[i]
        let mut t = Tape::<f64>::new();
        let x = t.constant(array![[1.0, 2.0, 3.0]]);
        let w = t.param(array![[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]]);
        let y = t.matmul(x, w);
        let f = t.sum(y);
        let g = t.backward(f).unwrap();
        assert_eq!(g.get(w).unwrap(), &array![[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]);
        assert!(g.get(x).is_none(), "constants receive no gradient");
    }

    #[test]
    fn dropout_zero_is_identity() {
        let mut t = Tape::<f32>::new();
        let x = t.param(array![[1.0, 2.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = t.dropout(x, 0.0, &mut rng);
        assert_eq!(x, y);
    }

    #[test]
    fn dropout_mask_mean_is_one() {
        let mut t = Tape::<f64>::new();
        let n = 100_000;
        let x = t.constant(Array2::from_elem((1, n), 2.0));
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let y = t.dropout(x, 0.2, &mut rng);
        let ratio = t.value(y).iter().map(|v| v / 2.0).sum::<f64>() / n as f64;
        assert!((ratio - 1.0).abs() < 0.01, "mean ratio {ratio}");
    }

    #[test]
    fn bce_known_values() {
        let mut t = Tape::<f64>::new();
        let s = t.constant(array![[0.5], [1.0]]);
        let l = t.bce_loss(s, &[0], &[1.0]);
        assert!((t.value(l)[[0, 0]] - std::f64::consts::LN_2).abs() < 1e-12);
        let l = t.bce_loss(s, &[1], &[1.0]);
        let v = t.value(l)[[0, 0]];
        assert!(v >= 0.0 && v < 2e-7, "clamped loss {v}");
    }

    #[test]
    fn backward_requires_scalar() {
        let mut t = Tape::<f64>::new();
        let x = t.param(array![[1.0, 2.0]]);
        assert!(matches!(t.backward(x), Err(Error::NotScalarLoss((1, 2)))));
        let empty = Tape::<f64>::new();
        assert!(empty.backward(Var(0)).is_err());
    }

    #[test]
    #[should_panic(expected = "matmul shape mismatch: (2, 3) x (2, 3)")]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(Array2::zeros((2, 3)));
        let b = t.constant(Array2::zeros((2, 3)));
        t.matmul(a, b);
    }

    #[test]
    fn shared_input_gradients_accumulate() {
        // f(x) = sum(x * x) → 2x
        let mut t = Tape::<f64>::new();
        let x = t.param(array![[3.0, -2.0]]);
        let y = t.mul(x, x);
        let f = t.sum(y);
        let g = t.backward(f).unwrap();
        assert_eq!(g.get(x).unwrap(), &array![[6.0, -4.0]]);
    }
}
