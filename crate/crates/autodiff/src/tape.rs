//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] owns every node created during one forward build. Operations
//! append nodes in creation order, which is a topological order by
//! construction, so [`Tape::backward`] is a single reverse sweep.

use crate::error::{AutodiffError, Result};
use crate::tensor::{gemm, Real, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow { a: Var, row: Var },
    Scale { a: Var, factor: S },
    Concat { parts: Vec<Var>, axis: usize },
    Relu(Var),
    Exp(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    RowNorms(Var),
    NormalizeRows(Var),
    MaxCols { a: Var, argmax: Vec<usize> },
    Conv1d { x: Var, w: Var, bias: Option<Var> },
    Embedding { table: Var, tokens: Vec<usize>, padding: Option<usize> },
    GatherRows { a: Var, index: Vec<usize> },
    LogSumExpRows(Var),
    Transpose(Var),
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node<S> {
    value: Tensor<S>,
    grad: Option<Vec<S>>,
    op: Op<S>,
    requires_grad: bool,
}

/// Recorded computation for one forward build.
#[derive(Debug, Clone)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
    backward_done: bool,
}

impl<S: Real> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn dims(op: &'static str, t: &Tensor<impl Real>) -> Result<(usize, usize)> {
    t.dims2().ok_or_else(|| AutodiffError::NotMatrix {
        op,
        shape: t.shape().to_vec(),
    })
}

fn mismatch<S: Real>(op: &'static str, a: &Tensor<S>, b: &Tensor<S>) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn matrix<S: Real>(rows: usize, cols: usize, data: Vec<S>) -> Tensor<S> {
    Tensor::new(vec![rows, cols], data).expect("internal shape bookkeeping")
}

impl<S: Real> Tape<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable input: gradients are accumulated for it.
    pub fn leaf(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> S {
        self.nodes[v.0].value.data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient, if backward reached this node.
    pub fn grad(&self, v: Var) -> Option<Tensor<S>> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    pub fn grad_data(&self, v: Var) -> Option<&[S]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<&Tensor<S>> {
        self.nodes
            .get(v.0)
            .map(|n| &n.value)
            .ok_or(AutodiffError::UnknownVar(v.0))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    // ---------------------------------------------------------------- ops

    /// `a · b` for `m×k` and `k×n` matrices.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` for `m×k` and `n×k` matrices.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (ta, tb) = (self.check(a)?, self.check(b)?);
        let (m, k) = dims("matmul", ta)?;
        let (br, bc) = dims("matmul", tb)?;
        let (k2, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let mut out = vec![S::zero(); m * n];
        gemm(ta.data(), m, k, false, tb.data(), br, bc, trans_b, &mut out, false);
        let rg = self.rg(&[a, b]);
        Ok(self.push(matrix(m, n, out), Op::MatMul { a, b, trans_b }, rg))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(S, S) -> S,
        op: Op<S>,
    ) -> Result<Var> {
        let (ta, tb) = (self.check(a)?, self.check(b)?);
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a `1×n` row to every row of an `m×n` matrix (bias broadcast).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.check(a)?, self.check(row)?);
        let (m, n) = dims("add_row", ta)?;
        if tr.dims2() != Some((1, n)) {
            return Err(mismatch("add_row", ta, tr));
        }
        let r = tr.data();
        let mut data = ta.data().to_vec();
        for i in 0..m {
            for (x, &b) in data[i * n..(i + 1) * n].iter_mut().zip(r) {
                *x += b;
            }
        }
        let rg = self.rg(&[a, row]);
        Ok(self.push(matrix(m, n, data), Op::AddRow { a, row }, rg))
    }

    pub fn scale(&mut self, a: Var, factor: S) -> Result<Var> {
        let ta = self.check(a)?;
        let data = ta.data().iter().map(|&x| x * factor).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Scale { a, factor }, rg))
    }

    /// Concatenates 2-D tensors along `axis` (0 stacks rows, 1 joins columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(AutodiffError::InvalidArgument {
                op: "concat",
                message: "no inputs".into(),
            });
        }
        if axis > 1 {
            return Err(AutodiffError::InvalidArgument {
                op: "concat",
                message: format!("axis {axis} out of range for 2-D tensors"),
            });
        }
        let first = self.check(parts[0])?;
        let (r0, c0) = dims("concat", first)?;
        let mut total = 0;
        for &p in parts {
            let t = self.check(p)?;
            let (r, c) = dims("concat", t)?;
            if (axis == 0 && c != c0) || (axis == 1 && r != r0) {
                return Err(mismatch("concat", first, t));
            }
            total += if axis == 0 { r } else { c };
        }
        let value = if axis == 0 {
            let mut data = Vec::with_capacity(total * c0);
            for &p in parts {
                data.extend_from_slice(self.nodes[p.0].value.data());
            }
            matrix(total, c0, data)
        } else {
            let mut data = Vec::with_capacity(r0 * total);
            for i in 0..r0 {
                for &p in parts {
                    data.extend_from_slice(self.nodes[p.0].value.row(i));
                }
            }
            matrix(r0, total, data)
        };
        let rg = self.rg(parts);
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    fn map(&mut self, a: Var, f: impl Fn(S) -> S, op: Op<S>) -> Result<Var> {
        let ta = self.check(a)?;
        let data = ta.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, op, rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map(a, |x| if x > S::zero() { x } else { S::zero() }, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.map(a, |x| x.exp(), Op::Exp(a))
    }

    /// Natural log; every input element must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        let ta = self.check(a)?;
        if let Some(bad) = ta.data().iter().find(|&&x| !(x > S::zero())) {
            return Err(AutodiffError::InvalidArgument {
                op: "log",
                message: format!("non-positive input {bad:?}"),
            });
        }
        self.map(a, |x| x.ln(), Op::Log(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.check(a)?.data().iter().copied().sum();
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::scalar(total), Op::Sum(a), rg))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ta = self.check(a)?;
        if ta.is_empty() {
            return Err(AutodiffError::InvalidArgument {
                op: "mean",
                message: "empty tensor".into(),
            });
        }
        let total: S = ta.data().iter().copied().sum();
        let value = total / S::of(ta.len() as f64);
        let rg = self.rg(&[a]);
        Ok(self.push(Tensor::scalar(value), Op::Mean(a), rg))
    }

    /// Sum along each row: `m×n → m×1`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.check(a)?;
        let (m, n) = dims("sum_rows", ta)?;
        let data = (0..m)
            .map(|i| ta.data()[i * n..(i + 1) * n].iter().copied().sum())
            .collect();
        let rg = self.rg(&[a]);
        Ok(self.push(matrix(m, 1, data), Op::SumRows(a), rg))
    }

    /// Euclidean norm of each row: `m×n → m×1`. The gradient at a zero row is 0.
    pub fn row_norms(&mut self, a: Var) -> Result<Var> {
        let ta = self.check(a)?;
        let (m, n) = dims("row_norms", ta)?;
        let data = (0..m)
            .map(|i| {
                ta.data()[i * n..(i + 1) * n]
                    .iter()
                    .map(|&x| x * x)
                    .sum::<S>()
                    .sqrt()
            })
            .collect();
        let rg = self.rg(&[a]);
        Ok(self.push(matrix(m, 1, data), Op::RowNorms(a), rg))
    }

    /// Scales each row to unit length; zero rows stay zero.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.check(a)?;
        let (m, n) = dims("normalize_rows", ta)?;
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(n.max(1)).take(m) {
            let norm = row.iter().map(|&x| x * x).sum::<S>().sqrt();
            if norm > S::zero() {
                row.iter_mut().for_each(|x| *x = *x / norm);
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(matrix(m, n, data), Op::NormalizeRows(a), rg))
    }

    /// Column-wise maximum `n×h → 1×h`. Ties go to the lowest row index.
    pub fn max_cols(&mut self, a: Var) -> Result<Var> {
        let ta = self.check(a)?;
        let (m, n) = dims("max_cols", ta)?;
        if m == 0 {
            return Err(AutodiffError::InvalidArgument {
                op: "max_cols",
                message: "no rows to pool".into(),
            });
        }
        let d = ta.data();
        let mut best = d[..n].to_vec();
        let mut argmax = vec![0usize; n];
        for i in 1..m {
            for (j, &x) in d[i * n..(i + 1) * n].iter().enumerate() {
                if x > best[j] {
                    best[j] = x;
                    argmax[j] = i;
                }
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(matrix(1, n, best), Op::MaxCols { a, argmax }, rg))
    }

    /// 1-D convolution, stride 1, no padding.
    ///
    /// `x` is `L×C_in` (positions by channels), `w` has shape
    /// `[K, C_in, C_out]` and `bias` is `1×C_out`. Output is `(L−K+1)×C_out`.
    pub fn conv1d(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let (tx, tw) = (self.check(x)?, self.check(w)?);
        let (len, c_in) = dims("conv1d", tx)?;
        let (k, wc_in, c_out) = match tw.shape() {
            [k, ci, co] => (*k, *ci, *co),
            _ => return Err(mismatch("conv1d", tx, tw)),
        };
        if wc_in != c_in {
            return Err(mismatch("conv1d", tx, tw));
        }
        if k == 0 || k > len {
            return Err(AutodiffError::InvalidArgument {
                op: "conv1d",
                message: format!("kernel length {k} does not fit sequence length {len}"),
            });
        }
        let out_len = len - k + 1;
        let mut out = vec![S::zero(); out_len * c_out];
        if let Some(b) = bias {
            let tb = self.check(b)?;
            if tb.dims2() != Some((1, c_out)) {
                return Err(mismatch("conv1d", tw, tb));
            }
            for row in out.chunks_mut(c_out) {
                row.copy_from_slice(tb.data());
            }
        }
        // Window t of x is the contiguous slice x[t*C_in .. (t+K)*C_in], so the
        // unfolded input is a strided view with row stride C_in.
        // SAFETY: the last window ends at (out_len-1)*c_in + k*c_in = len*c_in.
        unsafe {
            S::gemm_raw(
                out_len,
                k * c_in,
                c_out,
                S::one(),
                tx.data().as_ptr(),
                c_in as isize,
                1,
                tw.data().as_ptr(),
                c_out as isize,
                1,
                S::one(),
                out.as_mut_ptr(),
                c_out as isize,
                1,
            );
        }
        let mut inputs = vec![x, w];
        inputs.extend(bias);
        let rg = self.rg(&inputs);
        Ok(self.push(matrix(out_len, c_out, out), Op::Conv1d { x, w, bias }, rg))
    }

    /// Row lookup into an embedding table. The `padding` row receives no gradient.
    pub fn embedding(&mut self, table: Var, tokens: &[usize], padding: Option<usize>) -> Result<Var> {
        let tt = self.check(table)?;
        let (vocab, width) = dims("embedding", tt)?;
        if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab) {
            return Err(AutodiffError::InvalidArgument {
                op: "embedding",
                message: format!("token {bad} outside vocabulary of {vocab}"),
            });
        }
        let mut data = Vec::with_capacity(tokens.len() * width);
        for &t in tokens {
            data.extend_from_slice(tt.row(t));
        }
        let rg = self.rg(&[table]);
        Ok(self.push(
            matrix(tokens.len(), width, data),
            Op::Embedding {
                table,
                tokens: tokens.to_vec(),
                padding,
            },
            rg,
        ))
    }

    /// Selects rows by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let ta = self.check(a)?;
        let (m, n) = dims("gather_rows", ta)?;
        if let Some(&bad) = index.iter().find(|&&i| i >= m) {
            return Err(AutodiffError::InvalidArgument {
                op: "gather_rows",
                message: format!("row {bad} outside {m} rows"),
            });
        }
        let mut data = Vec::with_capacity(index.len() * n);
        for &i in index {
            data.extend_from_slice(ta.row(i));
        }
        let rg = self.rg(&[a]);
        Ok(self.push(
            matrix(index.len(), n, data),
            Op::GatherRows {
                a,
                index: index.to_vec(),
            },
            rg,
        ))
    }

    /// `log Σ_j exp(a_ij)` per row, evaluated with the row maximum subtracted.
    pub fn logsumexp_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.check(a)?;
        let (m, n) = dims("logsumexp_rows", ta)?;
        if n == 0 {
            return Err(AutodiffError::InvalidArgument {
                op: "logsumexp_rows",
                message: "empty rows".into(),
            });
        }
        let data = (0..m)
            .map(|i| {
                let row = &ta.data()[i * n..(i + 1) * n];
                let max = row.iter().copied().fold(S::neg_infinity(), S::max);
                if max.is_infinite() {
                    return max;
                }
                max + row.iter().map(|&x| (x - max).exp()).sum::<S>().ln()
            })
            .collect();
        let rg = self.rg(&[a]);
        Ok(self.push(matrix(m, 1, data), Op::LogSumExpRows(a), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.check(a)?;
        let (m, n) = dims("transpose", ta)?;
        let d = ta.data();
        let mut data = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = d[i * n + j];
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(matrix(n, m, data), Op::Transpose(a), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let ta = self.check(a)?;
        let value = Tensor::new(shape, ta.data().to_vec()).map_err(|_| AutodiffError::InvalidArgument {
            op: "reshape",
            message: format!("cannot view {:?} with a different element count", ta.shape()),
        })?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    // ----------------------------------------------------------- backward

    /// Propagates `∂loss/∂node` to every node that requires a gradient.
    ///
    /// May run once per tape.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(AutodiffError::BackwardTwice);
        }
        let lv = self.check(loss)?;
        if !lv.is_scalar() {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        self.backward_done = true;
        self.nodes[loss.0].grad = Some(vec![S::one()]);
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad || matches!(self.nodes[id].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.nodes[id].grad.take() else {
                continue;
            };
            let contributions = self.input_grads(id, &g);
            self.nodes[id].grad = Some(g);
            for (target, delta) in contributions {
                let node = &mut self.nodes[target.0];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
                    None => node.grad = Some(delta),
                }
            }
        }
        Ok(())
    }

    fn input_grads(&self, id: usize, g: &[S]) -> Vec<(Var, Vec<S>)> {
        let node = &self.nodes[id];
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k) = ta.dims2().unwrap();
                let (br, bc) = tb.dims2().unwrap();
                let n = if *trans_b { br } else { bc };
                if wants(*a) {
                    // dA = G·Bᵀ, or G·B when the forward used Bᵀ
                    let mut da = vec![S::zero(); m * k];
                    gemm(g, m, n, false, tb.data(), br, bc, !*trans_b, &mut da, false);
                    out.push((*a, da));
                }
                if wants(*b) {
                    let mut db = vec![S::zero(); br * bc];
                    if *trans_b {
                        // dB = Gᵀ·A
                        gemm(g, m, n, true, ta.data(), m, k, false, &mut db, false);
                    } else {
                        // dB = Aᵀ·G
                        gemm(ta.data(), m, k, true, g, m, n, false, &mut db, false);
                    }
                    out.push((*b, db));
                }
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    out.push((*a, g.to_vec()));
                }
                if wants(*b) {
                    out.push((*b, g.to_vec()));
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    out.push((*a, g.to_vec()));
                }
                if wants(*b) {
                    out.push((*b, g.iter().map(|&x| -x).collect()));
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                if wants(*a) {
                    out.push((*a, g.iter().zip(tb.data()).map(|(&x, &y)| x * y).collect()));
                }
                if wants(*b) {
                    out.push((*b, g.iter().zip(ta.data()).map(|(&x, &y)| x * y).collect()));
                }
            }
            Op::AddRow { a, row } => {
                if wants(*a) {
                    out.push((*a, g.to_vec()));
                }
                if wants(*row) {
                    let n = val(*row).len();
                    let mut dr = vec![S::zero(); n];
                    for chunk in g.chunks(n) {
                        dr.iter_mut().zip(chunk).for_each(|(d, &x)| *d += x);
                    }
                    out.push((*row, dr));
                }
            }
            Op::Scale { a, factor } => {
                if wants(*a) {
                    out.push((*a, g.iter().map(|&x| x * *factor).collect()));
                }
            }
            Op::Concat { parts, axis } => {
                let (rows, cols) = node.value.dims2().unwrap();
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = val(p).dims2().unwrap();
                    if wants(p) {
                        let d = if *axis == 0 {
                            g[offset * cols..(offset + pr) * cols].to_vec()
                        } else {
                            (0..rows)
                                .flat_map(|i| g[i * cols + offset..i * cols + offset + pc].iter().copied())
                                .collect()
                        };
                        out.push((p, d));
                    }
                    offset += if *axis == 0 { pr } else { pc };
                }
            }
            Op::Relu(a) => {
                if wants(*a) {
                    let d = g
                        .iter()
                        .zip(val(*a).data())
                        .map(|(&x, &v)| if v > S::zero() { x } else { S::zero() })
                        .collect();
                    out.push((*a, d));
                }
            }
            Op::Exp(a) => {
                if wants(*a) {
                    let d = g.iter().zip(node.value.data()).map(|(&x, &y)| x * y).collect();
                    out.push((*a, d));
                }
            }
            Op::Log(a) => {
                if wants(*a) {
                    let d = g.iter().zip(val(*a).data()).map(|(&x, &v)| x / v).collect();
                    out.push((*a, d));
                }
            }
            Op::Sum(a) => {
                if wants(*a) {
                    out.push((*a, vec![g[0]; val(*a).len()]));
                }
            }
            Op::Mean(a) => {
                if wants(*a) {
                    let n = val(*a).len();
                    out.push((*a, vec![g[0] / S::of(n as f64); n]));
                }
            }
            Op::SumRows(a) => {
                if wants(*a) {
                    let (m, n) = val(*a).dims2().unwrap();
                    let d = (0..m).flat_map(|i| std::iter::repeat(g[i]).take(n)).collect();
                    out.push((*a, d));
                }
            }
            Op::RowNorms(a) => {
                if wants(*a) {
                    let ta = val(*a);
                    let (_, n) = ta.dims2().unwrap();
                    let norms = node.value.data();
                    let d = ta
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(idx, &x)| {
                            let i = idx / n.max(1);
                            if norms[i] > S::zero() {
                                g[i] * x / norms[i]
                            } else {
                                S::zero()
                            }
                        })
                        .collect();
                    out.push((*a, d));
                }
            }
            Op::NormalizeRows(a) => {
                if wants(*a) {
                    let ta = val(*a);
                    let (m, n) = ta.dims2().unwrap();
                    let y = node.value.data();
                    let mut d = vec![S::zero(); m * n];
                    for i in 0..m {
                        let xs = &ta.data()[i * n..(i + 1) * n];
                        let norm = xs.iter().map(|&x| x * x).sum::<S>().sqrt();
                        if norm > S::zero() {
                            let ys = &y[i * n..(i + 1) * n];
                            let gs = &g[i * n..(i + 1) * n];
                            let dot: S = ys.iter().zip(gs).map(|(&p, &q)| p * q).sum();
                            for j in 0..n {
                                d[i * n + j] = (gs[j] - ys[j] * dot) / norm;
                            }
                        }
                    }
                    out.push((*a, d));
                }
            }
            Op::MaxCols { a, argmax } => {
                if wants(*a) {
                    let (m, n) = val(*a).dims2().unwrap();
                    let mut d = vec![S::zero(); m * n];
                    for (j, &i) in argmax.iter().enumerate() {
                        d[i * n + j] += g[j];
                    }
                    out.push((*a, d));
                }
            }
            Op::Conv1d { x, w, bias } => {
                let (tx, tw) = (val(*x), val(*w));
                let (len, c_in) = tx.dims2().unwrap();
                let (k, c_out) = (tw.shape()[0], tw.shape()[2]);
                let out_len = len - k + 1;
                if wants(*w) {
                    let mut dw = vec![S::zero(); k * c_in * c_out];
                    // dW = Uᵀ·G with U the strided window view of x.
                    // SAFETY: same view as the forward pass, transposed.
                    unsafe {
                        S::gemm_raw(
                            k * c_in,
                            out_len,
                            c_out,
                            S::one(),
                            tx.data().as_ptr(),
                            1,
                            c_in as isize,
                            g.as_ptr(),
                            c_out as isize,
                            1,
                            S::zero(),
                            dw.as_mut_ptr(),
                            c_out as isize,
                            1,
                        );
                    }
                    out.push((*w, dw));
                }
                if let Some(b) = bias {
                    if wants(*b) {
                        let mut db = vec![S::zero(); c_out];
                        for row in g.chunks(c_out) {
                            db.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
                        }
                        out.push((*b, db));
                    }
                }
                if wants(*x) {
                    let mut dx = vec![S::zero(); len * c_in];
                    // dx[t+j] += G[t]·W[j]ᵀ for each kernel offset j.
                    for j in 0..k {
                        // SAFETY: rows j..j+out_len of dx are in bounds since
                        // j + out_len <= len; W[j] is a C_in×C_out block.
                        unsafe {
                            S::gemm_raw(
                                out_len,
                                c_out,
                                c_in,
                                S::one(),
                                g.as_ptr(),
                                c_out as isize,
                                1,
                                tw.data().as_ptr().add(j * c_in * c_out),
                                1,
                                c_out as isize,
                                S::one(),
                                dx.as_mut_ptr().add(j * c_in),
                                c_in as isize,
                                1,
                            );
                        }
                    }
                    out.push((*x, dx));
                }
            }
            Op::Embedding { table, tokens, padding } => {
                if wants(*table) {
                    let tt = val(*table);
                    let (_, width) = tt.dims2().unwrap();
                    let mut d = vec![S::zero(); tt.len()];
                    for (pos, &t) in tokens.iter().enumerate() {
                        if Some(t) == *padding {
                            continue;
                        }
                        let src = &g[pos * width..(pos + 1) * width];
                        d[t * width..(t + 1) * width]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(a, &b)| *a += b);
                    }
                    out.push((*table, d));
                }
            }
            Op::GatherRows { a, index } => {
                if wants(*a) {
                    let ta = val(*a);
                    let (_, n) = ta.dims2().unwrap();
                    let mut d = vec![S::zero(); ta.len()];
                    for (pos, &i) in index.iter().enumerate() {
                        d[i * n..(i + 1) * n]
                            .iter_mut()
                            .zip(&g[pos * n..(pos + 1) * n])
                            .for_each(|(a, &b)| *a += b);
                    }
                    out.push((*a, d));
                }
            }
            Op::LogSumExpRows(a) => {
                if wants(*a) {
                    let ta = val(*a);
                    let (m, n) = ta.dims2().unwrap();
                    let lse = node.value.data();
                    let mut d = vec![S::zero(); m * n];
                    for i in 0..m {
                        if lse[i].is_infinite() {
                            continue;
                        }
                        for j in 0..n {
                            d[i * n + j] = g[i] * (ta.data()[i * n + j] - lse[i]).exp();
                        }
                    }
                    out.push((*a, d));
                }
            }
            Op::Transpose(a) => {
                if wants(*a) {
                    let (m, n) = val(*a).dims2().unwrap();
                    let mut d = vec![S::zero(); m * n];
                    for i in 0..m {
                        for j in 0..n {
                            d[i * n + j] = g[j * m + i];
                        }
                    }
                    out.push((*a, d));
                }
            }
            Op::Reshape(a) => {
                if wants(*a) {
                    out.push((*a, g.to_vec()));
                }
            }
        }
        out
    }
}
