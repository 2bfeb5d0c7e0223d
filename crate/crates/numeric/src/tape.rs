//! Define-by-run reverse-mode differentiation.
//!
//! Every op evaluates eagerly and appends a node to the [`Tape`]. Nodes are
//! only ever appended, so the node order is already a topological order and
//! [`Tape::backward`] is a single reverse sweep. A tape is built per
//! training step (or per example) and consumed by `backward`.

use rand::{Rng, RngCore};

use crate::error::{NumericError, Result};
use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, Var),
    ScaleConst(Var, f64),
    OneMinus(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    SliceCols { input: Var, start: usize },
    SelectRow { input: Var, row: usize },
    Transpose(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    Embedding { table: Var, ids: Vec<usize> },
    Dropout { input: Var, mask: Vec<f64> },
    CrossEntropyLogits { logits: Var, target: usize, probs: Vec<f64> },
    CrossEntropyProbs { probs: Var, target: usize },
    BceLogits { logit: Var, label: f64 },
    Sum(Var),
    ScatterAdd { input: Var, index: Vec<usize> },
    PadCols(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of primitive applications for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NumericError {
    NumericError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn invalid(op: &'static str, msg: impl Into<String>) -> NumericError {
    NumericError::InvalidArgument {
        op,
        msg: msg.into(),
    }
}

fn require_rank2(op: &'static str, t: &Tensor) -> Result<()> {
    if t.rank() == 2 {
        Ok(())
    } else {
        Err(invalid(op, format!("expected rank-2 tensor, got {:?}", t.shape())))
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

fn softmax_row(src: &[f64], dst: &mut [f64]) {
    let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = (s - max).exp();
        total += *d;
    }
    for d in dst.iter_mut() {
        *d /= total;
    }
}

fn accumulate<'a>(grads: &'a mut [Option<Vec<f64>>], var: Var, len: usize) -> &'a mut [f64] {
    grads[var.0].get_or_insert_with(|| vec![0.0; len])
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, op: &'static str, value: Tensor, record: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(NumericError::NonFinite { op });
        }
        self.nodes.push(Node { value, op: record });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A value that takes part in the computation but receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push("constant", value, Op::Constant)
    }

    /// Brings a parameter onto the tape. Repeated calls for the same
    /// parameter return the same node, so gradients from every use are
    /// summed before they reach the [`ParamSet`].
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        if id.0 >= self.param_vars.len() {
            self.param_vars.resize(id.0 + 1, None);
        }
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: params.value(id).clone(),
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        require_rank2("matmul", ta)?;
        require_rank2("matmul", tb)?;
        if ta.cols() != tb.rows() {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let (ad, bd) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = ad[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                for (o, &bv) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                    *o += aip * bv;
                }
            }
        }
        self.push("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b))
    }

    fn elementwise(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        record: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push(op, value, record)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds the `[1, C]` row `r` to every row of the `[R, C]` matrix `m`.
    pub fn add_row(&mut self, m: Var, r: Var) -> Result<Var> {
        let (tm, tr) = (self.value(m), self.value(r));
        require_rank2("add_row", tm)?;
        if tr.shape() != [1, tm.cols()] {
            return Err(mismatch("add_row", tm, tr));
        }
        let c = tm.cols();
        let mut data = tm.data().to_vec();
        for row in data.chunks_mut(c) {
            for (d, &b) in row.iter_mut().zip(tr.data()) {
                *d += b;
            }
        }
        let value = Tensor::from_parts(tm.shape().to_vec(), data);
        self.push("add_row", value, Op::AddRow(m, r))
    }

    /// Multiplies every element of `a` by the `[1, 1]` tensor `s`.
    pub fn scale(&mut self, a: Var, s: Var) -> Result<Var> {
        let (ta, ts) = (self.value(a), self.value(s));
        if ts.numel() != 1 {
            return Err(mismatch("scale", ta, ts));
        }
        let k = ts.item();
        let data = ta.data().iter().map(|v| v * k).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push("scale", value, Op::Scale(a, s))
    }

    pub fn scale_const(&mut self, a: Var, k: f64) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|v| v * k).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push("scale_const", value, Op::ScaleConst(a, k))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|v| 1.0 - v).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push("one_minus", value, Op::OneMinus(a))
    }

    /// Concatenates rank-2 tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| invalid("concat", "no inputs"))?;
        if axis > 1 {
            return Err(invalid("concat", format!("axis {axis} out of range")));
        }
        let t0 = self.value(first);
        require_rank2("concat", t0)?;
        let (rows, cols) = (t0.rows(), t0.cols());
        for &v in &inputs[1..] {
            let t = self.value(v);
            require_rank2("concat", t)?;
            let ok = if axis == 0 { t.cols() == cols } else { t.rows() == rows };
            if !ok {
                return Err(mismatch("concat", t0, t));
            }
        }
        let value = if axis == 0 {
            let mut data = Vec::new();
            let mut total_rows = 0;
            for &v in inputs {
                let t = self.value(v);
                total_rows += t.rows();
                data.extend_from_slice(t.data());
            }
            Tensor::from_parts(vec![total_rows, cols], data)
        } else {
            let total_cols: usize = inputs.iter().map(|&v| self.value(v).cols()).sum();
            let mut data = Vec::with_capacity(rows * total_cols);
            for r in 0..rows {
                for &v in inputs {
                    data.extend_from_slice(self.value(v).row_slice(r));
                }
            }
            Tensor::from_parts(vec![rows, total_cols], data)
        };
        self.push(
            "concat",
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        )
    }

    /// Columns `start..end` of a rank-2 tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let ta = self.value(a);
        require_rank2("slice_cols", ta)?;
        if start > end || end > ta.cols() {
            return Err(invalid(
                "slice_cols",
                format!("range {start}..{end} outside {} columns", ta.cols()),
            ));
        }
        let width = end - start;
        let mut data = Vec::with_capacity(ta.rows() * width);
        for r in 0..ta.rows() {
            data.extend_from_slice(&ta.row_slice(r)[start..end]);
        }
        let value = Tensor::from_parts(vec![ta.rows(), width], data);
        self.push("slice_cols", value, Op::SliceCols { input: a, start })
    }

    /// Row `row` of a rank-2 tensor, as a `[1, C]` tensor.
    pub fn select_row(&mut self, a: Var, row: usize) -> Result<Var> {
        let ta = self.value(a);
        require_rank2("select_row", ta)?;
        if row >= ta.rows() {
            return Err(invalid(
                "select_row",
                format!("row {row} outside {} rows", ta.rows()),
            ));
        }
        let value = Tensor::row(ta.row_slice(row).to_vec());
        self.push("select_row", value, Op::SelectRow { input: a, row })
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        require_rank2("transpose", ta)?;
        let (r, c) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = ta.data()[i * c + j];
            }
        }
        self.push("transpose", Tensor::from_parts(vec![c, r], data), Op::Transpose(a))
    }

    fn unary(&mut self, op: &'static str, a: Var, f: impl Fn(f64) -> f64, record: Op) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push(op, value, record)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    /// Row-wise softmax over the last axis, max-subtracted for stability.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        require_rank2("softmax", ta)?;
        if ta.cols() == 0 {
            return Err(invalid("softmax", "empty axis"));
        }
        let c = ta.cols();
        let mut data = vec![0.0; ta.numel()];
        for (src, dst) in ta.data().chunks(c).zip(data.chunks_mut(c)) {
            softmax_row(src, dst);
        }
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push("softmax", value, Op::Softmax(a))
    }

    /// Gathers rows of `table` (`[V, E]`) into an `[ids.len(), E]` tensor.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        require_rank2("embedding", tt)?;
        if ids.is_empty() {
            return Err(invalid("embedding", "no ids"));
        }
        let (v, e) = (tt.rows(), tt.cols());
        let mut data = Vec::with_capacity(ids.len() * e);
        for &id in ids {
            if id >= v {
                return Err(invalid("embedding", format!("id {id} outside table of {v} rows")));
            }
            data.extend_from_slice(tt.row_slice(id));
        }
        let value = Tensor::from_parts(vec![ids.len(), e], data);
        self.push(
            "embedding",
            value,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// Inverted dropout: at train time each element is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`. In eval mode
    /// (or with `p == 0`) the input handle is returned unchanged.
    pub fn dropout(&mut self, a: Var, p: f64, train: bool, rng: &mut dyn RngCore) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid("dropout", format!("rate {p} outside [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let ta = self.value(a);
        let mask: Vec<f64> = (0..ta.numel())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = ta.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        self.push("dropout", value, Op::Dropout { input: a, mask })
    }

    /// `-log softmax(logits)[target]` for `[1, V]` logits, fused for
    /// stability. Returns a `[1, 1]` loss.
    pub fn cross_entropy_logits(&mut self, logits: Var, target: usize) -> Result<Var> {
        let tl = self.value(logits);
        if tl.rank() != 2 || tl.rows() != 1 {
            return Err(invalid("cross_entropy", format!("expected [1, V], got {:?}", tl.shape())));
        }
        if target >= tl.cols() {
            return Err(invalid("cross_entropy", format!("target {target} outside {}", tl.cols())));
        }
        let mut probs = vec![0.0; tl.cols()];
        softmax_row(tl.data(), &mut probs);
        let max = tl.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + tl.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - tl.data()[target];
        self.push(
            "cross_entropy",
            Tensor::scalar(loss),
            Op::CrossEntropyLogits {
                logits,
                target,
                probs,
            },
        )
    }

    /// `-log probs[target]` for a `[1, V]` probability row.
    pub fn cross_entropy_probs(&mut self, probs: Var, target: usize) -> Result<Var> {
        let tp = self.value(probs);
        if tp.rank() != 2 || tp.rows() != 1 {
            return Err(invalid("cross_entropy", format!("expected [1, V], got {:?}", tp.shape())));
        }
        if target >= tp.cols() {
            return Err(invalid("cross_entropy", format!("target {target} outside {}", tp.cols())));
        }
        let loss = -tp.data()[target].ln();
        self.push(
            "cross_entropy",
            Tensor::scalar(loss),
            Op::CrossEntropyProbs { probs, target },
        )
    }

    /// Binary cross-entropy on a `[1, 1]` logit, computed without forming
    /// the sigmoid.
    pub fn bce_logits(&mut self, logit: Var, label: f64) -> Result<Var> {
        let tl = self.value(logit);
        if tl.numel() != 1 {
            return Err(invalid("bce_logits", format!("expected scalar, got {:?}", tl.shape())));
        }
        let z = tl.item();
        let loss = z.max(0.0) - z * label + (-z.abs()).exp().ln_1p();
        self.push("bce_logits", Tensor::scalar(loss), Op::BceLogits { logit, label })
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total = self.value(a).sum();
        self.push("sum", Tensor::scalar(total), Op::Sum(a))
    }

    /// Sums the `[1, T]` row `a` into a `[1, width]` row: `out[index[i]] += a[i]`.
    pub fn scatter_add(&mut self, a: Var, index: &[usize], width: usize) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 2 || ta.rows() != 1 || ta.cols() != index.len() {
            return Err(invalid(
                "scatter_add",
                format!("input {:?} vs {} indices", ta.shape(), index.len()),
            ));
        }
        let mut data = vec![0.0; width];
        for (&v, &i) in ta.data().iter().zip(index) {
            if i >= width {
                return Err(invalid("scatter_add", format!("index {i} outside width {width}")));
            }
            data[i] += v;
        }
        self.push(
            "scatter_add",
            Tensor::from_parts(vec![1, width], data),
            Op::ScatterAdd {
                input: a,
                index: index.to_vec(),
            },
        )
    }

    /// Right-pads every row with zeros up to `width` columns.
    pub fn pad_cols(&mut self, a: Var, width: usize) -> Result<Var> {
        let ta = self.value(a);
        require_rank2("pad_cols", ta)?;
        if width < ta.cols() {
            return Err(invalid("pad_cols", format!("width {width} < {}", ta.cols())));
        }
        let c = ta.cols();
        let mut data = vec![0.0; ta.rows() * width];
        for r in 0..ta.rows() {
            data[r * width..r * width + c].copy_from_slice(ta.row_slice(r));
        }
        self.push(
            "pad_cols",
            Tensor::from_parts(vec![ta.rows(), width], data),
            Op::PadCols(a),
        )
    }

    /// Reverse sweep from the scalar `loss`. Gradients of every parameter
    /// reached are added into `params`; the tape is consumed.
    pub fn backward(self, loss: Var, params: &mut ParamSet) -> Result<()> {
        let Tape { nodes, .. } = self;
        if loss.0 >= nodes.len() {
            return Err(NumericError::Detached);
        }
        if nodes[loss.0].value.numel() != 1 {
            return Err(NumericError::NotScalar(nodes[loss.0].value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![1.0]);
        let mut reached_param = false;

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    params.accumulate_grad(*id, &g);
                    reached_param = true;
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    {
                        let da = accumulate(&mut grads, *a, m * k);
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let brow = &tb.data()[p * n..(p + 1) * n];
                                da[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    }
                    let db = accumulate(&mut grads, *b, k * n);
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = ta.data()[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            for (d, &gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += aip * gv;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(accumulate(&mut grads, *a, g.len()), &g, 1.0);
                    add_into(accumulate(&mut grads, *b, g.len()), &g, 1.0);
                }
                Op::Sub(a, b) => {
                    add_into(accumulate(&mut grads, *a, g.len()), &g, 1.0);
                    add_into(accumulate(&mut grads, *b, g.len()), &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    let da = accumulate(&mut grads, *a, g.len());
                    for ((d, gv), bv) in da.iter_mut().zip(&g).zip(tb.data()) {
                        *d += gv * bv;
                    }
                    let db = accumulate(&mut grads, *b, g.len());
                    for ((d, gv), av) in db.iter_mut().zip(&g).zip(ta.data()) {
                        *d += gv * av;
                    }
                }
                Op::AddRow(m, r) => {
                    add_into(accumulate(&mut grads, *m, g.len()), &g, 1.0);
                    let c = val(*r).numel();
                    let dr = accumulate(&mut grads, *r, c);
                    for row in g.chunks(c) {
                        add_into(dr, row, 1.0);
                    }
                }
                Op::Scale(a, s) => {
                    let (ta, ts) = (val(*a), val(*s));
                    let k = ts.item();
                    add_into(accumulate(&mut grads, *a, g.len()), &g, k);
                    let ds: f64 = g.iter().zip(ta.data()).map(|(x, y)| x * y).sum();
                    accumulate(&mut grads, *s, 1)[0] += ds;
                }
                Op::ScaleConst(a, k) => {
                    add_into(accumulate(&mut grads, *a, g.len()), &g, *k);
                }
                Op::OneMinus(a) => {
                    add_into(accumulate(&mut grads, *a, g.len()), &g, -1.0);
                }
                Op::Concat { inputs, axis } => {
                    if *axis == 0 {
                        let mut offset = 0;
                        for &v in inputs {
                            let len = val(v).numel();
                            add_into(accumulate(&mut grads, v, len), &g[offset..offset + len], 1.0);
                            offset += len;
                        }
                    } else {
                        let total = node.value.cols();
                        let rows = node.value.rows();
                        let mut col = 0;
                        for &v in inputs {
                            let w = val(v).cols();
                            let dv = accumulate(&mut grads, v, rows * w);
                            for r in 0..rows {
                                add_into(
                                    &mut dv[r * w..(r + 1) * w],
                                    &g[r * total + col..r * total + col + w],
                                    1.0,
                                );
                            }
                            col += w;
                        }
                    }
                }
                Op::SliceCols { input, start } => {
                    let full = val(*input).cols();
                    let rows = node.value.rows();
                    let w = node.value.cols();
                    let di = accumulate(&mut grads, *input, rows * full);
                    for r in 0..rows {
                        add_into(
                            &mut di[r * full + start..r * full + start + w],
                            &g[r * w..(r + 1) * w],
                            1.0,
                        );
                    }
                }
                Op::SelectRow { input, row } => {
                    let ti = val(*input);
                    let c = ti.cols();
                    let di = accumulate(&mut grads, *input, ti.numel());
                    add_into(&mut di[row * c..(row + 1) * c], &g, 1.0);
                }
                Op::Transpose(a) => {
                    let ta = val(*a);
                    let (r, c) = (ta.rows(), ta.cols());
                    let da = accumulate(&mut grads, *a, r * c);
                    for i in 0..r {
                        for j in 0..c {
                            da[i * c + j] += g[j * r + i];
                        }
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let da = accumulate(&mut grads, *a, g.len());
                    for ((d, gv), yv) in da.iter_mut().zip(&g).zip(y) {
                        *d += gv * (1.0 - yv * yv);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let da = accumulate(&mut grads, *a, g.len());
                    for ((d, gv), yv) in da.iter_mut().zip(&g).zip(y) {
                        *d += gv * yv * (1.0 - yv);
                    }
                }
                Op::Softmax(a) => {
                    let c = node.value.cols();
                    let y = node.value.data();
                    let da = accumulate(&mut grads, *a, g.len());
                    for ((drow, grow), yrow) in da.chunks_mut(c).zip(g.chunks(c)).zip(y.chunks(c)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                        for ((d, gv), yv) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += yv * (gv - dot);
                        }
                    }
                }
                Op::Embedding { table, ids } => {
                    let tt = val(*table);
                    let e = tt.cols();
                    let dt = accumulate(&mut grads, *table, tt.numel());
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut dt[id * e..(id + 1) * e], &g[r * e..(r + 1) * e], 1.0);
                    }
                }
                Op::Dropout { input, mask } => {
                    let di = accumulate(&mut grads, *input, g.len());
                    for ((d, gv), m) in di.iter_mut().zip(&g).zip(mask) {
                        *d += gv * m;
                    }
                }
                Op::CrossEntropyLogits {
                    logits,
                    target,
                    probs,
                } => {
                    let gl = g[0];
                    let dl = accumulate(&mut grads, *logits, probs.len());
                    for (j, (d, p)) in dl.iter_mut().zip(probs).enumerate() {
                        let onehot = if j == *target { 1.0 } else { 0.0 };
                        *d += gl * (p - onehot);
                    }
                }
                Op::CrossEntropyProbs { probs, target } => {
                    let tp = val(*probs);
                    let p = tp.data()[*target];
                    let dp = accumulate(&mut grads, *probs, tp.numel());
                    dp[*target] -= g[0] / p;
                }
                Op::BceLogits { logit, label } => {
                    let z = val(*logit).item();
                    accumulate(&mut grads, *logit, 1)[0] += g[0] * (sigmoid(z) - label);
                }
                Op::Sum(a) => {
                    let n = val(*a).numel();
                    let da = accumulate(&mut grads, *a, n);
                    for d in da.iter_mut() {
                        *d += g[0];
                    }
                }
                Op::ScatterAdd { input, index } => {
                    let di = accumulate(&mut grads, *input, index.len());
                    for (d, &i) in di.iter_mut().zip(index) {
                        *d += g[i];
                    }
                }
                Op::PadCols(a) => {
                    let ta = val(*a);
                    let (rows, c) = (ta.rows(), ta.cols());
                    let width = node.value.cols();
                    let da = accumulate(&mut grads, *a, rows * c);
                    for r in 0..rows {
                        add_into(&mut da[r * c..(r + 1) * c], &g[r * width..r * width + c], 1.0);
                    }
                }
            }
        }
        if reached_param {
            Ok(())
        } else {
            Err(NumericError::Detached)
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64], k: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}
