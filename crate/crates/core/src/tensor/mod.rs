//! Minimal dense 2-D tensor engine with reverse-mode differentiation.
//!
//! Tensors are immutable row-major buffers behind an `Rc`. An op whose
//! inputs carry a recording handle pushes a backward closure onto the shared
//! [`Tape`]; `backward()` on a scalar loss sweeps the tape in reverse and
//! accumulates gradients into the sinks of watched parameters.
//!
//! Everything is deterministic for a fixed input and seed: reductions run in
//! a fixed ascending order, and the rayon row-parallel matmul paths assign
//! whole output rows to tasks so results are bitwise identical to the serial
//! path for any thread count.

mod gradcheck;
mod matrix;
mod params;
mod tape;

pub use gradcheck::{grad_check, GradCheckEntry, GradCheckReport};
pub use matrix::{max_abs_diff as dense_max_abs_diff, DenseMatrix};
pub use params::{AdamState, Params};
pub use tape::Tape;

use std::cell::RefCell;
use std::rc::Rc;

use rayon::prelude::*;
use thiserror::Error;

use crate::rng::Rng64;
use crate::Real;
use tape::{accumulate, accumulate_scaled};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: non-finite input")]
    NonFiniteInput { op: &'static str },
    #[error("dropout probability {0} outside [0, 1)")]
    InvalidProbability(Real),
    #[error("mask selects no rows")]
    EmptyMask,
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("backward requires a 1x1 scalar, got {rows}x{cols}")]
    NotAScalar { rows: usize, cols: usize },
    #[error("backward requires a tensor recorded on a tape")]
    NotRecorded,
    #[error("parameter '{name}' has no populated gradient")]
    MissingGradient { name: String },
}

type GradSink = Rc<RefCell<Option<Vec<Real>>>>;

/// Dense 2-D tensor with optional gradient sink and optional tape handle.
#[derive(Clone)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Rc<Vec<Real>>,
    grad: Option<GradSink>,
    rec: Option<(Tape, usize)>,
}

// Row-parallel kernels switch on at roughly this many multiply-adds.
const PAR_FLOPS: usize = 1 << 18;

/// `alpha * (a @ b)` with `a` n-by-k and `b` k-by-m.
pub(crate) fn mm_nn(
    alpha: Real,
    a: &[Real],
    n: usize,
    k: usize,
    b: &[Real],
    m: usize,
) -> Vec<Real> {
    let mut out = vec![0.0; n * m];
    let body = |i: usize, row: &mut [Real]| {
        for kk in 0..k {
            let aik = a[i * k + kk];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[kk * m..(kk + 1) * m];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
        if alpha != 1.0 {
            for o in row.iter_mut() {
                *o *= alpha;
            }
        }
    };
    if n * m * k >= PAR_FLOPS {
        out.par_chunks_mut(m)
            .enumerate()
            .for_each(|(i, row)| body(i, row));
    } else {
        for (i, row) in out.chunks_mut(m).enumerate() {
            body(i, row);
        }
    }
    out
}

/// `alpha * (a @ b^T)` with `a` n-by-k and `b` m-by-k.
pub(crate) fn mm_nt(
    alpha: Real,
    a: &[Real],
    n: usize,
    k: usize,
    b: &[Real],
    m: usize,
) -> Vec<Real> {
    let mut out = vec![0.0; n * m];
    let body = |i: usize, row: &mut [Real]| {
        let arow = &a[i * k..(i + 1) * k];
        for (j, o) in row.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            *o = alpha * acc;
        }
    };
    if n * m * k >= PAR_FLOPS {
        out.par_chunks_mut(m)
            .enumerate()
            .for_each(|(i, row)| body(i, row));
    } else {
        for (i, row) in out.chunks_mut(m).enumerate() {
            body(i, row);
        }
    }
    out
}

/// `alpha * (a^T @ g)` with `a` n-by-k and `g` n-by-m; output k-by-m.
pub(crate) fn mm_tn(
    alpha: Real,
    a: &[Real],
    n: usize,
    k: usize,
    g: &[Real],
    m: usize,
) -> Vec<Real> {
    let mut out = vec![0.0; k * m];
    let body = |kk: usize, row: &mut [Real]| {
        for i in 0..n {
            let aik = a[i * k + kk];
            if aik == 0.0 {
                continue;
            }
            let grow = &g[i * m..(i + 1) * m];
            for (o, &gv) in row.iter_mut().zip(grow) {
                *o += aik * gv;
            }
        }
        if alpha != 1.0 {
            for o in row.iter_mut() {
                *o *= alpha;
            }
        }
    };
    if n * m * k >= PAR_FLOPS {
        out.par_chunks_mut(m)
            .enumerate()
            .for_each(|(kk, row)| body(kk, row));
    } else {
        for (kk, row) in out.chunks_mut(m).enumerate() {
            body(kk, row);
        }
    }
    out
}

fn join_tapes(inputs: &[&Tensor]) -> Option<Tape> {
    let mut found: Option<&Tape> = None;
    for t in inputs {
        if let Some((tape, _)) = &t.rec {
            match found {
                None => found = Some(tape),
                Some(f) => assert!(
                    Tape::same_tape(f, tape),
                    "inputs were recorded on different tapes"
                ),
            }
        }
    }
    found.cloned()
}

impl Tensor {
    // ----- construction -----

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Real>) -> Tensor {
        assert_eq!(
            data.len(),
            rows * cols,
            "data length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Tensor {
            rows,
            cols,
            data: Rc::new(data),
            grad: None,
            rec: None,
        }
    }

    pub fn from_rows(rows: &[Vec<Real>]) -> Tensor {
        Tensor::from_dense(&DenseMatrix::from_rows(rows))
    }

    pub fn from_dense(m: &DenseMatrix) -> Tensor {
        Tensor::from_vec(m.rows(), m.cols(), m.data().to_vec())
    }

    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix::new(self.rows, self.cols, self.data.as_ref().clone())
    }

    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor::from_vec(rows, cols, vec![0.0; rows * cols])
    }

    pub fn full(rows: usize, cols: usize, v: Real) -> Tensor {
        Tensor::from_vec(rows, cols, vec![v; rows * cols])
    }

    pub fn ones(rows: usize, cols: usize) -> Tensor {
        Tensor::full(rows, cols, 1.0)
    }

    pub fn eye(n: usize) -> Tensor {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor::from_vec(n, n, data)
    }

    pub fn uniform(rows: usize, cols: usize, lo: Real, hi: Real, rng: &mut Rng64) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.range(lo, hi)).collect();
        Tensor::from_vec(rows, cols, data)
    }

    /// Attach an (initially unpopulated) gradient sink, making this tensor a
    /// trainable parameter.
    pub fn with_grad(mut self) -> Tensor {
        if self.grad.is_none() {
            self.grad = Some(Rc::new(RefCell::new(None)));
        }
        self
    }

    // ----- accessors -----

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Real {
        assert!(i < self.rows && j < self.cols, "index out of bounds");
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[Real] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Value of a 1x1 tensor.
    pub fn scalar(&self) -> Real {
        assert_eq!((self.rows, self.cols), (1, 1), "scalar() on non-scalar");
        self.data[0]
    }

    pub fn is_recorded(&self) -> bool {
        self.rec.is_some()
    }

    pub fn has_grad_sink(&self) -> bool {
        self.grad.is_some()
    }

    /// Copy of the accumulated gradient, if populated.
    pub fn grad(&self) -> Option<Vec<Real>> {
        self.grad.as_ref().and_then(|s| s.borrow().clone())
    }

    /// Remove and return the accumulated gradient.
    pub fn take_grad(&self) -> Option<Vec<Real>> {
        self.grad.as_ref().and_then(|s| s.borrow_mut().take())
    }

    pub fn clear_grad(&self) {
        if let Some(s) = &self.grad {
            *s.borrow_mut() = None;
        }
    }

    /// Mutable access to the values. Copies the buffer if other handles to
    /// it are still alive.
    pub fn values_mut(&mut self) -> &mut Vec<Real> {
        Rc::make_mut(&mut self.data)
    }

    fn node_id(&self) -> Option<usize> {
        self.rec.as_ref().map(|(_, id)| *id)
    }

    fn recorded(mut self, tape: Option<Tape>, id: Option<usize>) -> Tensor {
        self.rec = match (tape, id) {
            (Some(t), Some(i)) => Some((t, i)),
            _ => None,
        };
        self
    }

    // ----- recording -----

    /// Register this tensor as a leaf on `tape`. Gradients reaching the leaf
    /// during `backward` are summed into its gradient sink.
    pub fn watch(&self, tape: &Tape) -> Tensor {
        let sink = self
            .grad
            .clone()
            .expect("watch() requires a gradient-enabled tensor; call with_grad() first");
        let size = self.data.len();
        let id = tape.push(
            size,
            Box::new(move |g, _| {
                let mut slot = sink.borrow_mut();
                let buf = slot.get_or_insert_with(|| vec![0.0; size]);
                for (b, s) in buf.iter_mut().zip(g) {
                    *b += *s;
                }
            }),
        );
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: Rc::clone(&self.data),
            grad: self.grad.clone(),
            rec: Some((tape.clone(), id)),
        }
    }

    /// Reverse sweep from a recorded 1x1 scalar. Consumes and clears the tape.
    pub fn backward(&self) -> Result<(), TensorError> {
        if (self.rows, self.cols) != (1, 1) {
            return Err(TensorError::NotAScalar {
                rows: self.rows,
                cols: self.cols,
            });
        }
        match &self.rec {
            None => Err(TensorError::NotRecorded),
            Some((tape, id)) => {
                tape.backward_from(*id);
                Ok(())
            }
        }
    }

    // ----- ops -----

    /// Matrix product `self @ rhs`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.matmul_scaled(rhs, 1.0)
    }

    /// `alpha * (self @ rhs)`.
    pub fn matmul_scaled(&self, rhs: &Tensor, alpha: Real) -> Result<Tensor, TensorError> {
        if self.cols != rhs.rows {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let (n, k, m) = (self.rows, self.cols, rhs.cols);
        let out = mm_nn(alpha, &self.data, n, k, &rhs.data, m);
        let tape = join_tapes(&[self, rhs]);
        let id = tape.as_ref().map(|t| {
            let (a_id, b_id) = (self.node_id(), rhs.node_id());
            let (a, b) = (Rc::clone(&self.data), Rc::clone(&rhs.data));
            t.push(
                n * m,
                Box::new(move |g, grads| {
                    if let Some(id) = a_id {
                        let da = mm_nt(alpha, g, n, m, &b, k);
                        accumulate(grads, id, n * k, &da);
                    }
                    if let Some(id) = b_id {
                        let db = mm_tn(alpha, &a, n, k, g, m);
                        accumulate(grads, id, k * m, &db);
                    }
                }),
            )
        });
        Ok(Tensor::from_vec(n, m, out).recorded(tape, id))
    }

    /// `alpha * (self @ rhs^T)`; rhs is m-by-k with k matching `self.cols`.
    pub fn matmul_nt_scaled(&self, rhs: &Tensor, alpha: Real) -> Result<Tensor, TensorError> {
        if self.cols != rhs.cols {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_nt",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let (n, k, m) = (self.rows, self.cols, rhs.rows);
        let out = mm_nt(alpha, &self.data, n, k, &rhs.data, m);
        let tape = join_tapes(&[self, rhs]);
        let id = tape.as_ref().map(|t| {
            let (a_id, b_id) = (self.node_id(), rhs.node_id());
            let (a, b) = (Rc::clone(&self.data), Rc::clone(&rhs.data));
            t.push(
                n * m,
                Box::new(move |g, grads| {
                    if let Some(id) = a_id {
                        let da = mm_nn(alpha, g, n, m, &b, k);
                        accumulate(grads, id, n * k, &da);
                    }
                    if let Some(id) = b_id {
                        let db = mm_tn(alpha, g, n, m, &a, k);
                        accumulate(grads, id, m * k, &db);
                    }
                }),
            )
        });
        Ok(Tensor::from_vec(n, m, out).recorded(tape, id))
    }

    fn elementwise_binary(
        &self,
        rhs: &Tensor,
        op: &'static str,
        f: impl Fn(Real, Real) -> Real,
        dl: Real,
        dr: Real,
    ) -> Result<Tensor, TensorError> {
        if self.shape() != rhs.shape() {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let out: Vec<Real> = self
            .data
            .iter()
            .zip(rhs.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        let size = out.len();
        let tape = join_tapes(&[self, rhs]);
        let id = tape.as_ref().map(|t| {
            let (a_id, b_id) = (self.node_id(), rhs.node_id());
            t.push(
                size,
                Box::new(move |g, grads| {
                    if let Some(id) = a_id {
                        accumulate_scaled(grads, id, size, g, dl);
                    }
                    if let Some(id) = b_id {
                        accumulate_scaled(grads, id, size, g, dr);
                    }
                }),
            )
        });
        Ok(Tensor::from_vec(self.rows, self.cols, out).recorded(tape, id))
    }

    /// Elementwise sum of two equal-shape tensors.
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.elementwise_binary(rhs, "add", |a, b| a + b, 1.0, 1.0)
    }

    /// Elementwise difference.
    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.elementwise_binary(rhs, "sub", |a, b| a - b, 1.0, -1.0)
    }

    /// Convex-style mixture `gamma * self + (1 - gamma) * rhs`.
    pub fn mix(&self, rhs: &Tensor, gamma: Real) -> Result<Tensor, TensorError> {
        self.elementwise_binary(
            rhs,
            "mix",
            move |a, b| gamma * a + (1.0 - gamma) * b,
            gamma,
            1.0 - gamma,
        )
    }

    /// Hadamard (elementwise) product.
    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        if self.shape() != rhs.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul",
                lhs: self.shape(),
                rhs: rhs.shape(),
            });
        }
        let out: Vec<Real> = self
            .data
            .iter()
            .zip(rhs.data.iter())
            .map(|(&a, &b)| a * b)
            .collect();
        let size = out.len();
        let tape = join_tapes(&[self, rhs]);
        let id = tape.as_ref().map(|t| {
            let (a_id, b_id) = (self.node_id(), rhs.node_id());
            let (a, b) = (Rc::clone(&self.data), Rc::clone(&rhs.data));
            t.push(
                size,
                Box::new(move |g, grads| {
                    if let Some(id) = a_id {
                        let da: Vec<Real> =
                            g.iter().zip(b.iter()).map(|(&gv, &bv)| gv * bv).collect();
                        accumulate(grads, id, size, &da);
                    }
                    if let Some(id) = b_id {
                        let db: Vec<Real> =
                            g.iter().zip(a.iter()).map(|(&gv, &av)| gv * av).collect();
                        accumulate(grads, id, size, &db);
                    }
                }),
            )
        });
        Ok(Tensor::from_vec(self.rows, self.cols, out).recorded(tape, id))
    }

    /// Multiply every entry by a constant.
    pub fn scale(&self, c: Real) -> Tensor {
        let out: Vec<Real> = self.data.iter().map(|&v| c * v).collect();
        let size = out.len();
        let tape = join_tapes(&[self]);
        let id = tape.as_ref().map(|t| {
            let a_id = self.node_id();
            t.push(
                size,
                Box::new(move |g, grads| {
                    if let Some(id) = a_id {
                        accumulate_scaled(grads, id, size, g, c);
                    }
                }),
            )
        });
        Tensor::from_vec(self.rows, self.cols, out).recorded(tape, id)
    }

    /// Add a 1-by-cols bias row to every row.
    pub fn add_row(&self, bias: &Tensor) -> Result<Tensor, TensorError> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: self.shape(),
                rhs: bias.shape(),
            });
        }
        let (n, m) = (self.rows, self.cols);
        let mut out = self.data.as_ref().clone();
        for row in out.chunks_mut(m) {
            for (o, &b) in row.iter_mut().zip(bias.data.iter()) {
                *o += b;
            }
        }
        let tape = join_tapes(&[self, bias]);
        let id = tape.as_ref().map(|t| {
            let (a_id, b_id) = (self.node_id(), bias.node_id());
            t.push(
                n * m,
                Box::new(move |g, grads| {
                    if let Some(id) = a_id {
                        accumulate(grads, id, n * m, g);
                    }
                    if let Some(id) = b_id {
                        let mut db = vec![0.0; m];
                        for row in g.chunks(m) {
                            for (d, &gv) in db.iter_mut().zip(row) {
                                *d += gv;
                            }
                        }
                        accumulate(grads, id, m, &db);
                    }
                }),
            )
        });
        Ok(Tensor::from_vec(n, m, out).recorded(tape, id))
    }

    /// Sum of all entries, as a 1x1 tensor.
    pub fn sum(&self) -> Tensor {
        let total: Real = self.data.iter().sum();
        let size = self.data.len();
        let tape = join_tapes(&[self]);
        let id = tape.as_ref().map(|t| {
            let a_id = self.node_id();
            t.push(
                1,
                Box::new(move |g, grads| {
                    if let Some(id) = a_id {
                        let da = vec![g[0]; size];
                        accumulate(grads, id, size, &da);
                    }
                }),
            )
        });
        Tensor::from_vec(1, 1, vec![total]).recorded(tape, id)
    }

    /// Row-wise softmax, stabilized by row-max subtraction.
    pub fn softmax_rows(&self) -> Result<Tensor, TensorError> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFiniteInput { op: "softmax_rows" });
        }
        let (n, m) = (self.rows, self.cols);
        let mut out = vec![0.0; n * m];
        for (orow, xrow) in out.chunks_mut(m).zip(self.data.chunks(m)) {
            let max = xrow.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
            let mut sum = 0.0;
            for (o, &x) in orow.iter_mut().zip(xrow) {
                let e = (x - max).exp();
                *o = e;
                sum += e;
            }
            for o in orow.iter_mut() {
                *o /= sum;
            }
        }
        let tape = join_tapes(&[self]);
        let y = Rc::new(out);
        let id = tape.as_ref().map(|t| {
            let a_id = self.node_id();
            let y = Rc::clone(&y);
            t.push(
                n * m,
                Box::new(move |g, grads| {
                    if let Some(id) = a_id {
                        let mut dx = vec![0.0; n * m];
                        for ((drow, grow), yrow) in
                            dx.chunks_mut(m).zip(g.chunks(m)).zip(y.chunks(m))
                        {
                            let dot: Real = grow.iter().zip(yrow).map(|(&gv, &yv)| gv * yv).sum();
                            for ((d, &gv), &yv) in drow.iter_mut().zip(grow).zip(yrow) {
                                *d = yv * (gv - dot);
                            }
                        }
                        accumulate(grads, id, n * m, &dx);
                    }
                }),
            )
        });
        let data = Rc::try_unwrap(y).unwrap_or_else(|rc| rc.as_ref().clone());
        Ok(Tensor {
            rows: n,
            cols: m,
            data: Rc::new(data),
            grad: None,
            rec: None,
        }
        .recorded(tape, id))
    }

    /// Per-row normalization to mean 0 / variance 1 (biased variance,
    /// `eps`-guarded), followed by elementwise scale and shift.
    pub fn layer_norm(
        &self,
        scale: &Tensor,
        shift: &Tensor,
        eps: Real,
    ) -> Result<Tensor, TensorError> {
        let (n, m) = (self.rows, self.cols);
        for (t, name) in [(scale, "scale"), (shift, "shift")] {
            if t.rows != 1 || t.cols != m {
                let _ = name;
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    lhs: self.shape(),
                    rhs: t.shape(),
                });
            }
        }
        let mut out = vec![0.0; n * m];
        let mut xhat = vec![0.0; n * m];
        let mut inv_std = vec![0.0; n];
        for i in 0..n {
            let xrow = &self.data[i * m..(i + 1) * m];
            let mean = xrow.iter().sum::<Real>() / m as Real;
            let var = xrow.iter().map(|&x| (x - mean) * (x - mean)).sum::<Real>() / m as Real;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[i] = inv;
            for j in 0..m {
                let xh = (xrow[j] - mean) * inv;
                xhat[i * m + j] = xh;
                out[i * m + j] = xh * scale.data[j] + shift.data[j];
            }
        }
        let tape = join_tapes(&[self, scale, shift]);
        let id = tape.as_ref().map(|t| {
            let (x_id, sc_id, sh_id) = (self.node_id(), scale.node_id(), shift.node_id());
            let sc = Rc::clone(&scale.data);
            let xhat = Rc::new(xhat);
            let inv_std = Rc::new(inv_std);
            t.push(
                n * m,
                Box::new(move |g, grads| {
                    if let Some(id) = sc_id {
                        let mut dsc = vec![0.0; m];
                        for (grow, xrow) in g.chunks(m).zip(xhat.chunks(m)) {
                            for ((d, &gv), &xh) in dsc.iter_mut().zip(grow).zip(xrow) {
                                *d += gv * xh;
                            }
                        }
                        accumulate(grads, id, m, &dsc);
                    }
                    if let Some(id) = sh_id {
                        let mut dsh = vec![0.0; m];
                        for grow in g.chunks(m) {
                            for (d, &gv) in dsh.iter_mut().zip(grow) {
                                *d += gv;
                            }
                        }
                        accumulate(grads, id, m, &dsh);
                    }
                    if let Some(id) = x_id {
                        let mut dx = vec![0.0; n * m];
                        for i in 0..n {
                            let grow = &g[i * m..(i + 1) * m];
                            let xrow = &xhat[i * m..(i + 1) * m];
                            // u = dL/dxhat for this row
                            let mut mean_u = 0.0;
                            let mut mean_ux = 0.0;
                            for j in 0..m {
                                let u = grow[j] * sc[j];
                                mean_u += u;
                                mean_ux += u * xrow[j];
                            }
                            mean_u /= m as Real;
                            mean_ux /= m as Real;
                            let inv = inv_std[i];
                            for j in 0..m {
                                let u = grow[j] * sc[j];
                                dx[i * m + j] = inv * (u - mean_u - xrow[j] * mean_ux);
                            }
                        }
                        accumulate(grads, id, n * m, &dx);
                    }
                }),
            )
        });
        Ok(Tensor::from_vec(n, m, out).recorded(tape, id))
    }

    /// Parametric ReLU: `x` where `x >= 0`, else `a * x`. `a` is a trainable
    /// 1x1 tensor.
    pub fn prelu(&self, slope: &Tensor) -> Result<Tensor, TensorError> {
        if slope.shape() != (1, 1) {
            return Err(TensorError::ShapeMismatch {
                op: "prelu",
                lhs: self.shape(),
                rhs: slope.shape(),
            });
        }
        let a = slope.data[0];
        let out: Vec<Real> = self
            .data
            .iter()
            .map(|&x| if x >= 0.0 { x } else { a * x })
            .collect();
        let size = out.len();
        let tape = join_tapes(&[self, slope]);
        let id = tape.as_ref().map(|t| {
            let (x_id, a_id) = (self.node_id(), slope.node_id());
            let x = Rc::clone(&self.data);
            t.push(
                size,
                Box::new(move |g, grads| {
                    if let Some(id) = x_id {
                        let dx: Vec<Real> = g
                            .iter()
                            .zip(x.iter())
                            .map(|(&gv, &xv)| if xv >= 0.0 { gv } else { a * gv })
                            .collect();
                        accumulate(grads, id, size, &dx);
                    }
                    if let Some(id) = a_id {
                        let da: Real = g
                            .iter()
                            .zip(x.iter())
                            .filter(|(_, &xv)| xv < 0.0)
                            .map(|(&gv, &xv)| gv * xv)
                            .sum();
                        accumulate(grads, id, 1, &[da]);
                    }
                }),
            )
        });
        Ok(Tensor::from_vec(self.rows, self.cols, out).recorded(tape, id))
    }

    /// Inverted dropout. In training mode each entry is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`; in eval mode
    /// (or at `p == 0`) this is the identity. The mask consumes one draw per
    /// entry, so it is reproducible from the generator state.
    pub fn dropout(&self, p: Real, training: bool, rng: &mut Rng64) -> Result<Tensor, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidProbability(p));
        }
        if !training || p == 0.0 {
            return Ok(self.clone());
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<Real> = (0..self.data.len())
            .map(|_| if rng.uniform() < p { 0.0 } else { keep })
            .collect();
        let out: Vec<Real> = self.data.iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let size = out.len();
        let tape = join_tapes(&[self]);
        let id = tape.as_ref().map(|t| {
            let x_id = self.node_id();
            let mask = Rc::new(mask);
            t.push(
                size,
                Box::new(move |g, grads| {
                    if let Some(id) = x_id {
                        let dx: Vec<Real> =
                            g.iter().zip(mask.iter()).map(|(&gv, &m)| gv * m).collect();
                        accumulate(grads, id, size, &dx);
                    }
                }),
            )
        });
        Ok(Tensor::from_vec(self.rows, self.cols, out).recorded(tape, id))
    }

    /// Column-wise concatenation of tensors with equal row counts.
    pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor, TensorError> {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let n = parts[0].rows;
        for p in parts {
            if p.rows != n {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: parts[0].shape(),
                    rhs: p.shape(),
                });
            }
        }
        let m: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = vec![0.0; n * m];
        let mut offset = 0;
        for p in parts {
            for i in 0..n {
                out[i * m + offset..i * m + offset + p.cols].copy_from_slice(p.row(i));
            }
            offset += p.cols;
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        let tape = join_tapes(&refs);
        let id = tape.as_ref().map(|t| {
            let meta: Vec<(Option<usize>, usize)> =
                parts.iter().map(|p| (p.node_id(), p.cols)).collect();
            t.push(
                n * m,
                Box::new(move |g, grads| {
                    let mut offset = 0;
                    for &(pid, pcols) in &meta {
                        if let Some(id) = pid {
                            let mut dp = vec![0.0; n * pcols];
                            for i in 0..n {
                                dp[i * pcols..(i + 1) * pcols]
                                    .copy_from_slice(&g[i * m + offset..i * m + offset + pcols]);
                            }
                            accumulate(grads, id, n * pcols, &dp);
                        }
                        offset += pcols;
                    }
                }),
            )
        });
        Ok(Tensor::from_vec(n, m, out).recorded(tape, id))
    }

    /// Mean negative log-softmax over the rows selected by `mask`, as a 1x1
    /// tensor. Gradients flow to the logits only.
    pub fn softmax_cross_entropy(
        &self,
        labels: &[usize],
        mask: &[bool],
    ) -> Result<Tensor, TensorError> {
        let (n, c) = (self.rows, self.cols);
        assert_eq!(labels.len(), n, "labels length must match logit rows");
        assert_eq!(mask.len(), n, "mask length must match logit rows");
        for &label in labels {
            if label >= c {
                return Err(TensorError::LabelOutOfRange {
                    label,
                    num_classes: c,
                });
            }
        }
        let count = mask.iter().filter(|&&b| b).count();
        if count == 0 {
            return Err(TensorError::EmptyMask);
        }
        let mut total = 0.0;
        for i in 0..n {
            if !mask[i] {
                continue;
            }
            let row = self.row(i);
            let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<Real>().ln();
            total += lse - row[labels[i]];
        }
        let loss = total / count as Real;
        let tape = join_tapes(&[self]);
        let id = tape.as_ref().map(|t| {
            let x_id = self.node_id();
            let x = Rc::clone(&self.data);
            let labels = labels.to_vec();
            let mask = mask.to_vec();
            t.push(
                1,
                Box::new(move |g, grads| {
                    if let Some(id) = x_id {
                        let scale = g[0] / count as Real;
                        let mut dx = vec![0.0; n * c];
                        for i in 0..n {
                            if !mask[i] {
                                continue;
                            }
                            let row = &x[i * c..(i + 1) * c];
                            let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
                            let mut sum = 0.0;
                            for &v in row {
                                sum += (v - max).exp();
                            }
                            for j in 0..c {
                                let p = (row[j] - max).exp() / sum;
                                let onehot = if j == labels[i] { 1.0 } else { 0.0 };
                                dx[i * c + j] = scale * (p - onehot);
                            }
                        }
                        accumulate(grads, id, n * c, &dx);
                    }
                }),
            )
        });
        Ok(Tensor::from_vec(1, 1, vec![loss]).recorded(tape, id))
    }
}

/// Largest absolute entry-wise difference between equal-shape tensors.
pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> Real {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in max_abs_diff");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, Real::max)
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("recorded", &self.is_recorded())
            .field("data", &self.data)
            .finish()
    }
}
