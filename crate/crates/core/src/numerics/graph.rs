//! Define-by-run reverse-mode differentiation over rank-2 tensors.
//!
//! A [`Graph`] is a tape: every primitive appends a node holding its value
//! and the operation that produced it. [`Graph::backward`] walks the tape in
//! reverse and accumulates vector-Jacobian products. The tape is rebuilt on
//! every forward pass, so there is no graph reuse or invalidation to manage.

use super::linalg::{self, CholeskyFactor, BASE_JITTER};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Shift(Var),
    ScaleBy(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    MulRow(Var, Var),
    MatMul(Var, Var, bool, bool),
    Transpose(Var),
    Tanh(Var),
    Elu(Var),
    Exp(Var),
    Log(Var),
    Sin(Var),
    Square(Var),
    Sqrt(Var),
    Sum(Var),
    SumCols(Var),
    SumRows(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Diag(Var),
    DiagEmbed(Var),
    Broadcast(Var),
    Cholesky(Var),
    TriSolve(Var, Var, bool),
    LogDet(Var, CholeskyFactor),
    SqDist(Var, Var),
    Dist(Var, Var),
    LowerExpDiag(Var),
}

/// One entry of the tape.
#[derive(Clone, Debug)]
pub struct Node {
    pub value: Tensor,
    pub requires_grad: bool,
    op: Op,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the output with respect to `v`; zeros if `v` does not
    /// influence the output.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

pub struct Graph {
    nodes: Vec<Node>,
    base_jitter: f64,
    jitter_events: usize,
    max_jitter: f64,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

fn shape2(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl Graph {
    pub fn new() -> Self {
        Self::with_jitter(BASE_JITTER)
    }

    pub fn with_jitter(base_jitter: f64) -> Self {
        Self {
            nodes: Vec::new(),
            base_jitter,
            jitter_events: 0,
            max_jitter: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of Cholesky factorizations that needed jitter.
    pub fn jitter_events(&self) -> usize {
        self.jitter_events
    }

    pub fn max_jitter(&self) -> f64 {
        self.max_jitter
    }

    pub fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        shape2(&self.nodes[v.0].value)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf that participates in differentiation.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Moves a leaf's value off the tape, leaving a `0 x 0` placeholder.
    /// Later reads of `v` see the placeholder.
    pub fn take_leaf(&mut self, v: Var) -> Tensor {
        let node = &mut self.nodes[v.0];
        assert!(matches!(node.op, Op::Leaf), "take_leaf on a computed node");
        std::mem::replace(&mut node.value, Tensor::zeros(0, 0))
    }

    pub fn constant_scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    fn check_same(&self, a: Var, b: Var, what: &str) {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(sa, sb, "{what}: shapes {sa:?} and {sb:?} differ");
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "add");
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "sub");
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "mul");
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Mul(a, b), rg)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.check_same(a, b, "div");
        let v = self.value(a).zip_map(self.value(b), |x, y| x / y);
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Div(a, b), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        let rg = self.rg(&[a]);
        self.push(v, Op::Neg(a), rg)
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        let rg = self.rg(&[a]);
        self.push(v, Op::Scale(a, s), rg)
    }

    /// Addition of a constant to every entry.
    pub fn shift(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        let rg = self.rg(&[a]);
        self.push(v, Op::Shift(a), rg)
    }

    /// `a * s` for a `1x1` variable `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        assert_eq!(self.shape(s), (1, 1), "scale_by expects a scalar");
        let sv = self.scalar(s);
        let v = self.value(a).scale(sv);
        let rg = self.rg(&[a, s]);
        self.push(v, Op::ScaleBy(a, s), rg)
    }

    /// Adds the `1 x c` row `r` to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Var {
        let (ar, ac) = self.shape(a);
        assert_eq!(self.shape(r), (1, ac), "add_row shape");
        let rv = self.value(r).data().to_vec();
        let av = self.value(a);
        let v = Tensor::from_fn(ar, ac, |i, j| av.get(i, j) + rv[j]);
        let rg = self.rg(&[a, r]);
        self.push(v, Op::AddRow(a, r), rg)
    }

    /// Scales row `i` of `a` by `c[i]` (`c` is `r x 1`), i.e. `diag(c) a`.
    pub fn mul_col(&mut self, a: Var, c: Var) -> Var {
        let (ar, ac) = self.shape(a);
        assert_eq!(self.shape(c), (ar, 1), "mul_col shape");
        let cv = self.value(c).data().to_vec();
        let av = self.value(a);
        let v = Tensor::from_fn(ar, ac, |i, j| av.get(i, j) * cv[i]);
        let rg = self.rg(&[a, c]);
        self.push(v, Op::MulCol(a, c), rg)
    }

    /// Scales column `j` of `a` by `r[j]` (`r` is `1 x c`), i.e. `a diag(r)`.
    pub fn mul_row(&mut self, a: Var, r: Var) -> Var {
        let (ar, ac) = self.shape(a);
        assert_eq!(self.shape(r), (1, ac), "mul_row shape");
        let rv = self.value(r).data().to_vec();
        let av = self.value(a);
        let v = Tensor::from_fn(ar, ac, |i, j| av.get(i, j) * rv[j]);
        let rg = self.rg(&[a, r]);
        self.push(v, Op::MulRow(a, r), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        self.matmul_t(a, false, b, false)
    }

    /// `op(a) op(b)` where `op` transposes when the flag is set.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Var {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        let m = if ta { ac } else { ar };
        let n = if tb { br } else { bc };
        let mut out = Tensor::zeros(m, n);
        gemm(1.0, self.value(a), ta, self.value(b), tb, 0.0, &mut out);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::MatMul(a, b, ta, tb), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(v, Op::Transpose(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(tanh);
        let rg = self.rg(&[a]);
        self.push(v, Op::Tanh(a), rg)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        let rg = self.rg(&[a]);
        self.push(v, Op::Elu(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        let rg = self.rg(&[a]);
        self.push(v, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        let rg = self.rg(&[a]);
        self.push(v, Op::Log(a), rg)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::sin);
        let rg = self.rg(&[a]);
        self.push(v, Op::Sin(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        let rg = self.rg(&[a]);
        self.push(v, Op::Square(a), rg)
    }

    /// Square root; negative round-off is clamped to zero, and the gradient
    /// at zero is taken as zero.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0).sqrt());
        let rg = self.rg(&[a]);
        self.push(v, Op::Sqrt(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(v, Op::Sum(a), rg)
    }

    /// Row sums as an `r x 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let v = Tensor::column((0..av.rows()).map(|i| av.row(i).iter().sum()).collect());
        let rg = self.rg(&[a]);
        self.push(v, Op::SumCols(a), rg)
    }

    /// Column sums as a `1 x c` row.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let (r, c) = (av.rows(), av.cols());
        let mut out = Tensor::zeros(1, c);
        for i in 0..r {
            for j in 0..c {
                out.data_mut()[j] += av.get(i, j);
            }
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::SumRows(a), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice_cols(start, len);
        let rg = self.rg(&[a]);
        self.push(v, Op::SliceCols(a, start), rg)
    }

    pub fn col(&mut self, a: Var, j: usize) -> Var {
        self.slice_cols(a, j, 1)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        let idx: Vec<usize> = (start..start + len).collect();
        let v = av.select_rows(&idx);
        let rg = self.rg(&[a]);
        self.push(v, Op::SliceRows(a, start), rg)
    }

    /// Rows `idx` of `a` (repeats allowed); the gradient scatter-adds.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let v = self.value(a).select_rows(idx);
        let rg = self.rg(&[a]);
        self.push(v, Op::GatherRows(a, idx.to_vec()), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let r = self.shape(parts[0]).0;
        let total: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut out = Tensor::zeros(r, total);
        let mut off = 0;
        for p in parts {
            let pv = self.value(*p);
            assert_eq!(pv.rows(), r, "concat_cols row mismatch");
            for i in 0..r {
                for j in 0..pv.cols() {
                    out.set(i, off + j, pv.get(i, j));
                }
            }
            off += pv.cols();
        }
        let rg = self.rg(parts);
        self.push(out, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let c = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let pv = self.value(*p);
            assert_eq!(pv.cols(), c, "concat_rows column mismatch");
            data.extend_from_slice(pv.data());
            rows += pv.rows();
        }
        let out = Tensor::from_vec(&[rows, c], data).expect("concat_rows");
        let rg = self.rg(parts);
        self.push(out, Op::ConcatRows(parts.to_vec()), rg)
    }

    /// Diagonal of a square matrix as an `n x 1` column.
    pub fn diag(&mut self, a: Var) -> Var {
        let v = Tensor::column(self.value(a).diag());
        let rg = self.rg(&[a]);
        self.push(v, Op::Diag(a), rg)
    }

    /// `n x n` diagonal matrix from an `n x 1` column.
    pub fn diag_embed(&mut self, a: Var) -> Var {
        let v = Tensor::diag_from(self.value(a).data());
        let rg = self.rg(&[a]);
        self.push(v, Op::DiagEmbed(a), rg)
    }

    /// Broadcasts a `1x1` variable to an `r x c` tensor.
    pub fn broadcast(&mut self, s: Var, rows: usize, cols: usize) -> Var {
        assert_eq!(self.shape(s), (1, 1), "broadcast expects a scalar");
        let v = Tensor::full(rows, cols, self.scalar(s));
        let rg = self.rg(&[s]);
        self.push(v, Op::Broadcast(s), rg)
    }

    /// Lower Cholesky factor of the symmetric part of `a`, with the jitter
    /// escalation policy of [`linalg::cholesky`].
    pub fn cholesky(&mut self, a: Var) -> Result<Var> {
        let sym = {
            let av = self.value(a);
            av.zip_map(&av.transpose(), |x, y| 0.5 * (x + y))
        };
        let f = linalg::cholesky(&sym, self.base_jitter)?;
        self.note_jitter(f.jitter_used);
        let rg = self.rg(&[a]);
        Ok(self.push(f.lower, Op::Cholesky(a), rg))
    }

    fn note_jitter(&mut self, jitter: f64) {
        if jitter > 0.0 {
            self.jitter_events += 1;
            self.max_jitter = self.max_jitter.max(jitter);
        }
    }

    /// `L⁻¹ B` (or `L⁻ᵀ B` when `transpose`) for lower-triangular `L`.
    pub fn trisolve(&mut self, l: Var, b: Var, transpose: bool) -> Var {
        let (lv, bv) = (self.value(l), self.value(b));
        assert_eq!(lv.rows(), bv.rows(), "trisolve shape");
        let x = if transpose {
            linalg::solve_lower_transpose(lv, bv)
        } else {
            linalg::solve_lower(lv, bv)
        };
        let rg = self.rg(&[l, b]);
        self.push(x, Op::TriSolve(l, b, transpose), rg)
    }

    /// `(L Lᵀ)⁻¹ B` through two triangular solves.
    pub fn chol_solve(&mut self, l: Var, b: Var) -> Var {
        let y = self.trisolve(l, b, false);
        self.trisolve(l, y, true)
    }

    /// `log |A|` of a symmetric positive-definite matrix.
    pub fn logdet(&mut self, a: Var) -> Result<Var> {
        let sym = {
            let av = self.value(a);
            av.zip_map(&av.transpose(), |x, y| 0.5 * (x + y))
        };
        let f = linalg::cholesky(&sym, self.base_jitter)?;
        self.note_jitter(f.jitter_used);
        let v = Tensor::scalar(f.logdet());
        let rg = self.rg(&[a]);
        Ok(self.push(v, Op::LogDet(a, f), rg))
    }

    /// `2 Σ log diag(L)`, the log-determinant of `L Lᵀ`.
    pub fn logdet_from_chol(&mut self, l: Var) -> Var {
        let d = self.diag(l);
        let ld = self.log(d);
        let s = self.sum(ld);
        self.scale(s, 2.0)
    }

    /// Pairwise squared Euclidean distances between rows of `x1` and `x2`.
    pub fn sqdist(&mut self, x1: Var, x2: Var) -> Var {
        let (a, b) = (self.value(x1), self.value(x2));
        assert_eq!(a.cols(), b.cols(), "sqdist column mismatch");
        let v = Tensor::from_fn(a.rows(), b.rows(), |i, j| {
            a.row(i)
                .iter()
                .zip(b.row(j))
                .map(|(p, q)| (p - q) * (p - q))
                .sum()
        });
        let rg = self.rg(&[x1, x2]);
        self.push(v, Op::SqDist(x1, x2), rg)
    }

    /// Pairwise Euclidean distances; the subgradient at coincident points is
    /// zero.
    pub fn dist(&mut self, x1: Var, x2: Var) -> Var {
        let (a, b) = (self.value(x1), self.value(x2));
        assert_eq!(a.cols(), b.cols(), "dist column mismatch");
        let v = Tensor::from_fn(a.rows(), b.rows(), |i, j| {
            a.row(i)
                .iter()
                .zip(b.row(j))
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt()
        });
        let rg = self.rg(&[x1, x2]);
        self.push(v, Op::Dist(x1, x2), rg)
    }

    /// Lower triangle of a square `raw` with its diagonal exponentiated; a
    /// Cholesky-style parameterization of a positive-definite matrix.
    pub fn lower_exp_diag(&mut self, raw: Var) -> Var {
        let r = self.value(raw);
        let n = r.rows();
        let v = Tensor::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Greater => r.get(i, j),
            std::cmp::Ordering::Equal => r.get(i, i).exp(),
            std::cmp::Ordering::Less => 0.0,
        });
        let rg = self.rg(&[raw]);
        self.push(v, Op::LowerExpDiag(raw), rg)
    }

    /// Reverse sweep from the scalar `out`.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let (r, c) = self.shape(out);
        if (r, c) != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got {r}x{c}"
            )));
        }
        let n = out.0 + 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Tensor::scalar(1.0));
        for i in (0..n).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| shape2(&n.value)).collect(),
        })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if wants(*a) {
                    acc(grads, *a, g.clone());
                }
                if wants(*b) {
                    acc(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    acc(grads, *a, g.clone());
                }
                if wants(*b) {
                    acc(grads, *b, g.scale(-1.0));
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    acc(grads, *a, g.zip_map(val(*b), |x, y| x * y));
                }
                if wants(*b) {
                    acc(grads, *b, g.zip_map(val(*a), |x, y| x * y));
                }
            }
            Op::Div(a, b) => {
                let bv = val(*b);
                if wants(*a) {
                    acc(grads, *a, g.zip_map(bv, |x, y| x / y));
                }
                if wants(*b) {
                    let t = g.zip_map(y, |x, q| x * q).zip_map(bv, |x, d| -x / d);
                    acc(grads, *b, t);
                }
            }
            Op::Neg(a) => acc(grads, *a, g.scale(-1.0)),
            Op::Scale(a, s) => acc(grads, *a, g.scale(*s)),
            Op::Shift(a) => acc(grads, *a, g.clone()),
            Op::ScaleBy(a, s) => {
                let sv = val(*s).item();
                if wants(*a) {
                    acc(grads, *a, g.scale(sv));
                }
                if wants(*s) {
                    let d: f64 = g.data().iter().zip(val(*a).data()).map(|(p, q)| p * q).sum();
                    acc(grads, *s, Tensor::scalar(d));
                }
            }
            Op::AddRow(a, r) => {
                if wants(*a) {
                    acc(grads, *a, g.clone());
                }
                if wants(*r) {
                    let mut t = Tensor::zeros(1, g.cols());
                    for ii in 0..g.rows() {
                        for j in 0..g.cols() {
                            t.data_mut()[j] += g.get(ii, j);
                        }
                    }
                    acc(grads, *r, t);
                }
            }
            Op::MulCol(a, c) => {
                let (av, cv) = (val(*a), val(*c));
                if wants(*a) {
                    acc(
                        grads,
                        *a,
                        Tensor::from_fn(g.rows(), g.cols(), |p, q| g.get(p, q) * cv.data()[p]),
                    );
                }
                if wants(*c) {
                    let t = Tensor::column(
                        (0..g.rows())
                            .map(|p| g.row(p).iter().zip(av.row(p)).map(|(x, y)| x * y).sum())
                            .collect(),
                    );
                    acc(grads, *c, t);
                }
            }
            Op::MulRow(a, r) => {
                let (av, rv) = (val(*a), val(*r));
                if wants(*a) {
                    acc(
                        grads,
                        *a,
                        Tensor::from_fn(g.rows(), g.cols(), |p, q| g.get(p, q) * rv.data()[q]),
                    );
                }
                if wants(*r) {
                    let mut t = Tensor::zeros(1, g.cols());
                    for p in 0..g.rows() {
                        for q in 0..g.cols() {
                            t.data_mut()[q] += g.get(p, q) * av.get(p, q);
                        }
                    }
                    acc(grads, *r, t);
                }
            }
            Op::MatMul(a, b, ta, tb) => {
                let (av, bv) = (val(*a), val(*b));
                if wants(*a) {
                    let (ar, ac) = shape2(av);
                    acc_with(grads, *a, ar, ac, |out, beta| {
                        if *ta {
                            gemm(1.0, bv, *tb, g, true, beta, out)
                        } else {
                            gemm(1.0, g, false, bv, !*tb, beta, out)
                        }
                    });
                }
                if wants(*b) {
                    let (br, bc) = shape2(bv);
                    acc_with(grads, *b, br, bc, |out, beta| {
                        if *tb {
                            gemm(1.0, g, true, av, *ta, beta, out)
                        } else {
                            gemm(1.0, av, !*ta, g, false, beta, out)
                        }
                    });
                }
            }
            Op::Transpose(a) => acc(grads, *a, g.transpose()),
            Op::Tanh(a) => acc(grads, *a, g.zip_map(y, |x, t| x * (1.0 - t * t))),
            Op::Elu(a) => {
                let xv = val(*a);
                let t = Tensor::from_fn(g.rows(), g.cols(), |p, q| {
                    let d = if xv.get(p, q) > 0.0 { 1.0 } else { y.get(p, q) + 1.0 };
                    g.get(p, q) * d
                });
                acc(grads, *a, t);
            }
            Op::Exp(a) => acc(grads, *a, g.zip_map(y, |x, e| x * e)),
            Op::Log(a) => acc(grads, *a, g.zip_map(val(*a), |x, v| x / v)),
            Op::Sin(a) => acc(grads, *a, g.zip_map(val(*a), |x, v| x * v.cos())),
            Op::Square(a) => acc(grads, *a, g.zip_map(val(*a), |x, v| 2.0 * x * v)),
            Op::Sqrt(a) => acc(
                grads,
                *a,
                g.zip_map(y, |x, s| if s > 0.0 { 0.5 * x / s } else { 0.0 }),
            ),
            Op::Sum(a) => {
                let (r, c) = shape2(val(*a));
                acc(grads, *a, Tensor::full(r, c, g.item()));
            }
            Op::SumCols(a) => {
                let (r, c) = shape2(val(*a));
                acc(grads, *a, Tensor::from_fn(r, c, |p, _| g.data()[p]));
            }
            Op::SumRows(a) => {
                let (r, c) = shape2(val(*a));
                acc(grads, *a, Tensor::from_fn(r, c, |_, q| g.data()[q]));
            }
            Op::SliceCols(a, start) => {
                let (r, c) = shape2(val(*a));
                let (s, w) = (*start, g.cols());
                acc(
                    grads,
                    *a,
                    Tensor::from_fn(r, c, |p, q| if q >= s && q < s + w { g.get(p, q - s) } else { 0.0 }),
                );
            }
            Op::SliceRows(a, start) => {
                let (r, c) = shape2(val(*a));
                let (s, h) = (*start, g.rows());
                acc(
                    grads,
                    *a,
                    Tensor::from_fn(r, c, |p, q| if p >= s && p < s + h { g.get(p - s, q) } else { 0.0 }),
                );
            }
            Op::GatherRows(a, idx) => {
                let (r, c) = shape2(val(*a));
                acc_with(grads, *a, r, c, |out, _| {
                    for (k, &row) in idx.iter().enumerate() {
                        for q in 0..c {
                            let cur = out.get(row, q);
                            out.set(row, q, cur + g.get(k, q));
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let (r, c) = shape2(val(*p));
                    if wants(*p) {
                        acc(grads, *p, Tensor::from_fn(r, c, |a, b| g.get(a, off + b)));
                    }
                    off += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let (r, c) = shape2(val(*p));
                    if wants(*p) {
                        acc(grads, *p, Tensor::from_fn(r, c, |a, b| g.get(off + a, b)));
                    }
                    off += r;
                }
            }
            Op::Diag(a) => {
                let n = val(*a).rows();
                acc(grads, *a, Tensor::diag_from(g.data()).reshape(&[n, n]).unwrap());
            }
            Op::DiagEmbed(a) => acc(grads, *a, Tensor::column(g.diag())),
            Op::Broadcast(s) => acc(grads, *s, Tensor::scalar(g.sum())),
            Op::Cholesky(a) => acc(grads, *a, cholesky_backward(y, g)),
            Op::TriSolve(l, b, transpose) => {
                let lv = val(*l);
                // B̄ = L⁻ᵀ X̄ (or L⁻¹ X̄ for the transposed solve).
                let bbar = if *transpose {
                    linalg::solve_lower(lv, g)
                } else {
                    linalg::solve_lower_transpose(lv, g)
                };
                if wants(*l) {
                    let n = lv.rows();
                    let mut lbar = Tensor::zeros(n, n);
                    if *transpose {
                        gemm(-1.0, y, false, &bbar, true, 0.0, &mut lbar);
                    } else {
                        gemm(-1.0, &bbar, false, y, true, 0.0, &mut lbar);
                    }
                    tril_in_place(&mut lbar);
                    acc(grads, *l, lbar);
                }
                if wants(*b) {
                    acc(grads, *b, bbar);
                }
            }
            Op::LogDet(a, f) => {
                let n = f.dim();
                let inv = f.solve(&Tensor::eye(n));
                let inv = inv.zip_map(&inv.transpose(), |x, y| 0.5 * (x + y));
                acc(grads, *a, inv.scale(g.item()));
            }
            Op::SqDist(x1, x2) => {
                let (a, b) = (val(*x1), val(*x2));
                let d = a.cols();
                if wants(*x1) {
                    let mut t = Tensor::zeros(a.rows(), d);
                    for p in 0..a.rows() {
                        for q in 0..b.rows() {
                            let w = 2.0 * g.get(p, q);
                            for k in 0..d {
                                let cur = t.get(p, k);
                                t.set(p, k, cur + w * (a.get(p, k) - b.get(q, k)));
                            }
                        }
                    }
                    acc(grads, *x1, t);
                }
                if wants(*x2) {
                    let mut t = Tensor::zeros(b.rows(), d);
                    for p in 0..a.rows() {
                        for q in 0..b.rows() {
                            let w = 2.0 * g.get(p, q);
                            for k in 0..d {
                                let cur = t.get(q, k);
                                t.set(q, k, cur - w * (a.get(p, k) - b.get(q, k)));
                            }
                        }
                    }
                    acc(grads, *x2, t);
                }
            }
            Op::Dist(x1, x2) => {
                let (a, b) = (val(*x1), val(*x2));
                let d = a.cols();
                let mut t1 = Tensor::zeros(a.rows(), d);
                let mut t2 = Tensor::zeros(b.rows(), d);
                for p in 0..a.rows() {
                    for q in 0..b.rows() {
                        let dist = y.get(p, q);
                        if dist <= 0.0 {
                            continue;
                        }
                        let w = g.get(p, q) / dist;
                        for k in 0..d {
                            let diff = w * (a.get(p, k) - b.get(q, k));
                            let c1 = t1.get(p, k);
                            t1.set(p, k, c1 + diff);
                            let c2 = t2.get(q, k);
                            t2.set(q, k, c2 - diff);
                        }
                    }
                }
                if wants(*x1) {
                    acc(grads, *x1, t1);
                }
                if wants(*x2) {
                    acc(grads, *x2, t2);
                }
            }
            Op::LowerExpDiag(raw) => {
                let n = y.rows();
                acc(
                    grads,
                    *raw,
                    Tensor::from_fn(n, n, |p, q| match p.cmp(&q) {
                        std::cmp::Ordering::Greater => g.get(p, q),
                        std::cmp::Ordering::Equal => g.get(p, p) * y.get(p, p),
                        std::cmp::Ordering::Less => 0.0,
                    }),
                );
            }
        }
    }
}

/// `tanh` through `expm1`, which is cheaper than the libm routine and
/// accurate near zero.
fn tanh(x: f64) -> f64 {
    if x.abs() > 20.0 {
        return x.signum();
    }
    let e = (2.0 * x).exp_m1();
    e / (e + 2.0)
}

fn acc(grads: &mut [Option<Tensor>], v: Var, t: Tensor) {
    match &mut grads[v.0] {
        Some(g) => g.add_assign(&t),
        slot @ None => *slot = Some(t),
    }
}

/// Accumulates into the gradient slot of `v` through `f(out, beta)`, where
/// `beta` is 0 for a fresh slot (its contents may be overwritten) and 1
/// otherwise.
fn acc_with(grads: &mut [Option<Tensor>], v: Var, r: usize, c: usize, f: impl FnOnce(&mut Tensor, f64)) {
    let slot = &mut grads[v.0];
    let beta = if slot.is_none() {
        *slot = Some(Tensor::zeros(r, c));
        0.0
    } else {
        1.0
    };
    f(slot.as_mut().unwrap(), beta);
}

fn tril_in_place(t: &mut Tensor) {
    let n = t.rows();
    for i in 0..n {
        for j in i + 1..n {
            t.set(i, j, 0.0);
        }
    }
}

/// Symmetric gradient of `A ↦ chol(A)`: with `P = Φ(Lᵀ L̄)` (lower triangle,
/// halved diagonal), `Ā = sym(L⁻ᵀ P L⁻¹)`.
fn cholesky_backward(l: &Tensor, lbar: &Tensor) -> Tensor {
    let n = l.rows();
    let mut lbar = lbar.clone();
    tril_in_place(&mut lbar);
    let mut p = Tensor::zeros(n, n);
    gemm(1.0, l, true, &lbar, false, 0.0, &mut p);
    for i in 0..n {
        for j in i + 1..n {
            p.set(i, j, 0.0);
        }
        let d = p.get(i, i);
        p.set(i, i, 0.5 * d);
    }
    // S = L⁻ᵀ P L⁻¹ = L⁻ᵀ (L⁻ᵀ Pᵀ)ᵀ
    let t = linalg::solve_lower_transpose(l, &p.transpose());
    let s = linalg::solve_lower_transpose(l, &t.transpose());
    s.zip_map(&s.transpose(), |x, y| 0.5 * (x + y))
}

/// Evaluates `f` on fresh parameter leaves built from `inputs` and returns
/// the scalar value with one gradient per input.
pub fn value_and_grad<F>(f: F, inputs: &[Tensor]) -> Result<(f64, Vec<Tensor>)>
where
    F: FnOnce(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;
    let value = g.scalar(out);
    Ok((value, vars.iter().map(|v| grads.get(*v)).collect()))
}
