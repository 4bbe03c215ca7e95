//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is an append-only record of primitive applications. Builder
//! methods evaluate eagerly (define-by-run), so forward values are always
//! available, and [`Graph::backward`] walks the record once in reverse
//! creation order to accumulate adjoints from any scalar result.
//!
//! Determinism contract: every reduction runs sequentially left-to-right,
//! so a fixed seed yields bit-identical forward values and gradients.

use crate::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected rank {expected} operand, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("backward target has shape {shape:?}, expected a scalar")]
    NotScalar { shape: Vec<usize> },
    #[error("{op}: {reason}")]
    Invalid { op: &'static str, reason: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
}

fn shape_err(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> AutodiffError {
    AutodiffError::Shape {
        op,
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
    }
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueId(usize);

/// Zero-padding convention for [`Graph::conv1d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvPadding {
    /// Output length equals input length; kernel centred on each step.
    Same,
    /// Output step `t` sees inputs `t, t-d, .., t-(k-1)d` only.
    Causal { dilation: usize },
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// scale * x + shift, elementwise with constants; only the scale
    /// matters for the backward pass.
    AffineScalar {
        x: usize,
        scale: f64,
    },
    AddRowBroadcast {
        x: usize,
        row: usize,
    },
    MulRowBroadcast {
        x: usize,
        row: usize,
    },
    SoftmaxRows {
        x: usize,
        mask: Option<usize>,
    },
    LayerNormRows {
        x: usize,
        eps: f64,
    },
    Conv1d {
        x: usize,
        w: usize,
        padding: ConvPadding,
    },
    MaxPool1d {
        x: usize,
        switches: Vec<usize>,
    },
    Elu(usize),
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Sqrt(usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceRows {
        x: usize,
        start: usize,
    },
    SliceCols {
        x: usize,
        start: usize,
        end: usize,
    },
    GatherRows {
        x: usize,
        indices: Vec<usize>,
    },
    /// Copy `base`, then overwrite row `indices[r]` with row `r` of `rows`.
    ScatterRowsOverwrite {
        base: usize,
        rows: usize,
        indices: Vec<usize>,
    },
    MeanRows(usize),
    RepeatRows {
        row: usize,
        count: usize,
    },
    CumMeanRows(usize),
    Mean(usize),
    Sum(usize),
    SumOfSquares(usize),
    RowSumSq(usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Topologically ordered record of primitive applications.
///
/// Backward visits each node exactly once; inputs that do not influence the
/// target keep a zero gradient.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient w.r.t. `id`; zero tensor if the value was unused.
    pub fn wrt(&self, id: ValueId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }

    pub fn get(&self, id: ValueId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(n),
        }
    }

    /// Number of recorded operations (including leaves).
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> ValueId {
        self.nodes.push(Node { value, op });
        ValueId(self.nodes.len() - 1)
    }

    /// Record an input value. Constants and trainable parameters are both
    /// leaves; callers keep the ids of whatever they want gradients for.
    pub fn input(&mut self, t: Tensor) -> ValueId {
        self.push(t, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> ValueId {
        self.input(Tensor::scalar(v))
    }

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(shape_err("matmul", ta, tb));
        }
        let out = matmul_nn(ta, tb);
        Ok(self.push(out, Op::Matmul(a.0, b.0)))
    }

    pub fn transpose(&mut self, a: ValueId) -> Result<ValueId, AutodiffError> {
        let t = self.value(a);
        if t.rank() != 2 {
            return Err(AutodiffError::Rank {
                op: "transpose",
                expected: 2,
                shape: t.shape().to_vec(),
            });
        }
        let out = t.transpose2().expect("rank checked");
        Ok(self.push(out, Op::Transpose(a.0)))
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        Ok(self.push(out, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("sub", ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x - y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        Ok(self.push(out, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mul", ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        Ok(self.push(out, Op::Mul(a.0, b.0)))
    }

    pub fn affine(&mut self, x: ValueId, scale: f64, shift: f64) -> ValueId {
        let out = self.value(x).map(|v| scale * v + shift);
        self.push(out, Op::AffineScalar { x: x.0, scale })
    }

    pub fn scale(&mut self, x: ValueId, scale: f64) -> ValueId {
        self.affine(x, scale, 0.0)
    }

    /// `x[m,n] + row[n]`, broadcast over rows.
    pub fn add_row_broadcast(&mut self, x: ValueId, row: ValueId) -> Result<ValueId, AutodiffError> {
        let (tx, tr) = (self.value(x), self.value(row));
        if tx.rank() != 2 || tr.rank() != 1 || tr.shape()[0] != tx.shape()[1] {
            return Err(shape_err("add_row_broadcast", tx, tr));
        }
        let n = tx.shape()[1];
        let mut out = tx.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += tr.data()[i % n];
        }
        Ok(self.push(out, Op::AddRowBroadcast { x: x.0, row: row.0 }))
    }

    /// `x[m,n] * row[n]`, broadcast over rows.
    pub fn mul_row_broadcast(&mut self, x: ValueId, row: ValueId) -> Result<ValueId, AutodiffError> {
        let (tx, tr) = (self.value(x), self.value(row));
        if tx.rank() != 2 || tr.rank() != 1 || tr.shape()[0] != tx.shape()[1] {
            return Err(shape_err("mul_row_broadcast", tx, tr));
        }
        let n = tx.shape()[1];
        let mut out = tx.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= tr.data()[i % n];
        }
        Ok(self.push(out, Op::MulRowBroadcast { x: x.0, row: row.0 }))
    }

    /// Row-wise softmax with an optional additive mask (same shape as `x`),
    /// computed with the usual row-max subtraction.
    pub fn softmax_rows(&mut self, x: ValueId, mask: Option<ValueId>) -> Result<ValueId, AutodiffError> {
        let tx = self.value(x);
        if tx.rank() == 0 || tx.rank() > 2 {
            return Err(AutodiffError::Rank {
                op: "softmax_rows",
                expected: 2,
                shape: tx.shape().to_vec(),
            });
        }
        let mut scores = tx.clone();
        if let Some(m) = mask {
            let tm = self.value(m);
            if tm.shape() != scores.shape() {
                return Err(shape_err("softmax_rows(mask)", &scores, tm));
            }
            for (s, &v) in scores.data_mut().iter_mut().zip(tm.data()) {
                *s += v;
            }
        }
        let (rows, cols) = (scores.rows(), scores.cols());
        let mut out = scores.clone();
        for r in 0..rows {
            let slice = &mut out.data_mut()[r * cols..(r + 1) * cols];
            let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for v in slice.iter_mut() {
                *v = (*v - max).exp();
                denom += *v;
            }
            for v in slice.iter_mut() {
                *v /= denom;
            }
        }
        Ok(self.push(
            out,
            Op::SoftmaxRows {
                x: x.0,
                mask: mask.map(|m| m.0),
            },
        ))
    }

    /// Normalize each row to zero mean and unit variance.
    pub fn layer_norm_rows(&mut self, x: ValueId, eps: f64) -> Result<ValueId, AutodiffError> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(AutodiffError::Rank {
                op: "layer_norm_rows",
                expected: 2,
                shape: tx.shape().to_vec(),
            });
        }
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        let mut out = tx.clone();
        for r in 0..m {
            let slice = &mut out.data_mut()[r * n..(r + 1) * n];
            let mean = slice.iter().sum::<f64>() / n as f64;
            let var = slice.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for v in slice.iter_mut() {
                *v = (*v - mean) * inv;
            }
        }
        Ok(self.push(out, Op::LayerNormRows { x: x.0, eps }))
    }

    /// 1-D convolution over time: `x[L,C_in]`, `w[k,C_in,C_out]` -> `[L,C_out]`.
    pub fn conv1d(&mut self, x: ValueId, w: ValueId, padding: ConvPadding) -> Result<ValueId, AutodiffError> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tx.rank() != 2 || tw.rank() != 3 || tw.shape()[1] != tx.shape()[1] {
            return Err(shape_err("conv1d", tx, tw));
        }
        if let ConvPadding::Causal { dilation } = padding {
            if dilation == 0 {
                return Err(AutodiffError::Invalid {
                    op: "conv1d",
                    reason: "dilation must be >= 1".into(),
                });
            }
        }
        let out = conv1d_forward(tx, tw, padding);
        Ok(self.push(out, Op::Conv1d { x: x.0, w: w.0, padding }))
    }

    /// Max pooling over time with window 2 and stride 2; odd trailing rows
    /// are dropped (floor semantics). Ties resolve to the earlier step.
    pub fn maxpool1d(&mut self, x: ValueId) -> Result<ValueId, AutodiffError> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(AutodiffError::Rank {
                op: "maxpool1d",
                expected: 2,
                shape: tx.shape().to_vec(),
            });
        }
        let (l, c) = (tx.shape()[0], tx.shape()[1]);
        let lo = l / 2;
        let mut out = Tensor::zeros(&[lo, c]);
        let mut switches = vec![0usize; lo * c];
        for t in 0..lo {
            for j in 0..c {
                let a = tx.data()[(2 * t) * c + j];
                let b = tx.data()[(2 * t + 1) * c + j];
                let (v, src) = if b > a { (b, 2 * t + 1) } else { (a, 2 * t) };
                out.data_mut()[t * c + j] = v;
                switches[t * c + j] = src * c + j;
            }
        }
        Ok(self.push(out, Op::MaxPool1d { x: x.0, switches }))
    }

    pub fn elu(&mut self, x: ValueId) -> ValueId {
        let out = self.value(x).map(|v| if v >= 0.0 { v } else { v.exp() - 1.0 });
        self.push(out, Op::Elu(x.0))
    }

    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x.0))
    }

    pub fn tanh(&mut self, x: ValueId) -> ValueId {
        let out = self.value(x).map(f64::tanh);
        self.push(out, Op::Tanh(x.0))
    }

    pub fn sigmoid(&mut self, x: ValueId) -> ValueId {
        let out = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(out, Op::Sigmoid(x.0))
    }

    /// Elementwise square root; the input must be nonnegative.
    pub fn sqrt(&mut self, x: ValueId) -> Result<ValueId, AutodiffError> {
        let tx = self.value(x);
        if tx.data().iter().any(|&v| v < 0.0) {
            return Err(AutodiffError::Invalid {
                op: "sqrt",
                reason: "negative input".into(),
            });
        }
        let out = tx.map(f64::sqrt);
        Ok(self.push(out, Op::Sqrt(x.0)))
    }

    pub fn concat_rows(&mut self, parts: &[ValueId]) -> Result<ValueId, AutodiffError> {
        if parts.is_empty() {
            return Err(AutodiffError::Invalid {
                op: "concat_rows",
                reason: "no operands".into(),
            });
        }
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.cols() != cols {
                return Err(shape_err("concat_rows", self.value(parts[0]), t));
            }
            rows += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(vec![rows, cols], data).expect("counted");
        Ok(self.push(out, Op::ConcatRows(parts.iter().map(|p| p.0).collect())))
    }

    pub fn concat_cols(&mut self, parts: &[ValueId]) -> Result<ValueId, AutodiffError> {
        if parts.is_empty() {
            return Err(AutodiffError::Invalid {
                op: "concat_cols",
                reason: "no operands".into(),
            });
        }
        let rows = self.value(parts[0]).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.shape()[0] != rows {
                return Err(shape_err("concat_cols", self.value(parts[0]), t));
            }
            widths.push(t.shape()[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = Tensor::zeros(&[rows, total]);
        for r in 0..rows {
            let mut offset = 0;
            for (&p, &w) in parts.iter().zip(&widths) {
                let t = &self.nodes[p.0].value;
                out.data_mut()[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&t.data()[r * w..(r + 1) * w]);
                offset += w;
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.iter().map(|p| p.0).collect())))
    }

    pub fn slice_rows(&mut self, x: ValueId, start: usize, end: usize) -> Result<ValueId, AutodiffError> {
        let tx = self.value(x);
        if tx.rank() != 2 || start > end || end > tx.shape()[0] {
            return Err(AutodiffError::Invalid {
                op: "slice_rows",
                reason: format!("range {start}..{end} on shape {:?}", tx.shape()),
            });
        }
        let n = tx.shape()[1];
        let data = tx.data()[start * n..end * n].to_vec();
        let out = Tensor::new(vec![end - start, n], data).expect("counted");
        Ok(self.push(out, Op::SliceRows { x: x.0, start }))
    }

    pub fn slice_cols(&mut self, x: ValueId, start: usize, end: usize) -> Result<ValueId, AutodiffError> {
        let tx = self.value(x);
        if tx.rank() != 2 || start > end || end > tx.shape()[1] {
            return Err(AutodiffError::Invalid {
                op: "slice_cols",
                reason: format!("range {start}..{end} on shape {:?}", tx.shape()),
            });
        }
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for r in 0..m {
            data.extend_from_slice(&tx.data()[r * n + start..r * n + end]);
        }
        let out = Tensor::new(vec![m, w], data).expect("counted");
        Ok(self.push(out, Op::SliceCols { x: x.0, start, end }))
    }

    pub fn gather_rows(&mut self, x: ValueId, indices: &[usize]) -> Result<ValueId, AutodiffError> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(AutodiffError::Rank {
                op: "gather_rows",
                expected: 2,
                shape: tx.shape().to_vec(),
            });
        }
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            if i >= m {
                return Err(AutodiffError::Invalid {
                    op: "gather_rows",
                    reason: format!("row {i} out of bounds for {m} rows"),
                });
            }
            data.extend_from_slice(&tx.data()[i * n..(i + 1) * n]);
        }
        let out = Tensor::new(vec![indices.len(), n], data).expect("counted");
        Ok(self.push(
            out,
            Op::GatherRows {
                x: x.0,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Copy `base` and overwrite row `indices[r]` with row `r` of `rows`.
    /// Indices must be distinct and in bounds.
    pub fn scatter_rows_overwrite(
        &mut self,
        base: ValueId,
        rows: ValueId,
        indices: &[usize],
    ) -> Result<ValueId, AutodiffError> {
        let (tb, tr) = (self.value(base), self.value(rows));
        if tb.rank() != 2 || tr.rank() != 2 || tb.shape()[1] != tr.shape()[1] {
            return Err(shape_err("scatter_rows_overwrite", tb, tr));
        }
        if tr.shape()[0] != indices.len() {
            return Err(AutodiffError::Invalid {
                op: "scatter_rows_overwrite",
                reason: format!("{} rows for {} indices", tr.shape()[0], indices.len()),
            });
        }
        let m = tb.shape()[0];
        let mut seen = vec![false; m];
        for &i in indices {
            if i >= m || seen[i] {
                return Err(AutodiffError::Invalid {
                    op: "scatter_rows_overwrite",
                    reason: format!("index {i} out of bounds or duplicated"),
                });
            }
            seen[i] = true;
        }
        let n = tb.shape()[1];
        let mut out = tb.clone();
        for (r, &i) in indices.iter().enumerate() {
            out.data_mut()[i * n..(i + 1) * n].copy_from_slice(&tr.data()[r * n..(r + 1) * n]);
        }
        Ok(self.push(
            out,
            Op::ScatterRowsOverwrite {
                base: base.0,
                rows: rows.0,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Column means: `[m,n] -> [1,n]`.
    pub fn mean_rows(&mut self, x: ValueId) -> Result<ValueId, AutodiffError> {
        let tx = self.value(x);
        if tx.rank() != 2 || tx.shape()[0] == 0 {
            return Err(AutodiffError::Rank {
                op: "mean_rows",
                expected: 2,
                shape: tx.shape().to_vec(),
            });
        }
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        let mut out = Tensor::zeros(&[1, n]);
        for r in 0..m {
            for j in 0..n {
                out.data_mut()[j] += tx.data()[r * n + j];
            }
        }
        for v in out.data_mut() {
            *v /= m as f64;
        }
        Ok(self.push(out, Op::MeanRows(x.0)))
    }

    /// Tile a `[1,n]` row `count` times into `[count,n]`.
    pub fn repeat_rows(&mut self, row: ValueId, count: usize) -> Result<ValueId, AutodiffError> {
        let tr = self.value(row);
        if tr.rank() != 2 || tr.shape()[0] != 1 {
            return Err(AutodiffError::Rank {
                op: "repeat_rows",
                expected: 2,
                shape: tr.shape().to_vec(),
            });
        }
        let n = tr.shape()[1];
        let mut data = Vec::with_capacity(count * n);
        for _ in 0..count {
            data.extend_from_slice(tr.data());
        }
        let out = Tensor::new(vec![count, n], data).expect("counted");
        Ok(self.push(out, Op::RepeatRows { row: row.0, count }))
    }

    /// Running row means: output row `i` is the mean of input rows `0..=i`.
    pub fn cummean_rows(&mut self, x: ValueId) -> Result<ValueId, AutodiffError> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(AutodiffError::Rank {
                op: "cummean_rows",
                expected: 2,
                shape: tx.shape().to_vec(),
            });
        }
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        let mut out = Tensor::zeros(&[m, n]);
        let mut acc = vec![0.0; n];
        for r in 0..m {
            for j in 0..n {
                acc[j] += tx.data()[r * n + j];
                out.data_mut()[r * n + j] = acc[j] / (r + 1) as f64;
            }
        }
        Ok(self.push(out, Op::CumMeanRows(x.0)))
    }

    pub fn mean(&mut self, x: ValueId) -> Result<ValueId, AutodiffError> {
        let tx = self.value(x);
        if tx.is_empty() {
            return Err(AutodiffError::Invalid {
                op: "mean",
                reason: "empty tensor".into(),
            });
        }
        let v = tx.data().iter().sum::<f64>() / tx.len() as f64;
        Ok(self.push(Tensor::scalar(v), Op::Mean(x.0)))
    }

    pub fn sum(&mut self, x: ValueId) -> ValueId {
        let v = self.value(x).data().iter().sum::<f64>();
        self.push(Tensor::scalar(v), Op::Sum(x.0))
    }

    pub fn sum_of_squares(&mut self, x: ValueId) -> ValueId {
        let v = self.value(x).data().iter().map(|v| v * v).sum::<f64>();
        self.push(Tensor::scalar(v), Op::SumOfSquares(x.0))
    }

    /// Row-wise sum of squares: `[m,n] -> [m,1]`.
    pub fn row_sum_sq(&mut self, x: ValueId) -> Result<ValueId, AutodiffError> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(AutodiffError::Rank {
                op: "row_sum_sq",
                expected: 2,
                shape: tx.shape().to_vec(),
            });
        }
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        let mut out = Tensor::zeros(&[m, 1]);
        for r in 0..m {
            out.data_mut()[r] = tx.data()[r * n..(r + 1) * n].iter().map(|v| v * v).sum();
        }
        Ok(self.push(out, Op::RowSumSq(x.0)))
    }

    /// Reverse-mode accumulation from a scalar result.
    pub fn backward(&self, target: ValueId) -> Result<Gradients, AutodiffError> {
        let tv = self.value(target);
        if tv.len() != 1 {
            return Err(AutodiffError::NotScalar {
                shape: tv.shape().to_vec(),
            });
        }
        if !tv.all_finite() {
            return Err(AutodiffError::NonFinite { op: "backward" });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[target.0] = Some(Tensor::new(tv.shape().to_vec(), vec![1.0]).expect("scalar"));

        for i in (0..=target.0).rev() {
            let Some(gout) = grads[i].take() else { continue };
            self.accumulate(i, &gout, &mut grads);
            grads[i] = Some(gout);
        }
        Ok(Gradients {
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            grads,
        })
    }

    fn accumulate(&self, node: usize, gout: &Tensor, grads: &mut [Option<Tensor>]) {
        let add_to = |grads: &mut [Option<Tensor>], parent: usize, contrib: Tensor| {
            match &mut grads[parent] {
                Some(g) => g.axpy(1.0, &contrib).expect("gradient shapes agree"),
                slot @ None => *slot = Some(contrib),
            }
        };
        let val = |idx: usize| &self.nodes[idx].value;

        match &self.nodes[node].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                // dA = dC * B^T, dB = A^T * dC
                add_to(grads, *a, matmul_nt(gout, val(*b)));
                add_to(grads, *b, matmul_tn(val(*a), gout));
            }
            Op::Transpose(a) => {
                add_to(grads, *a, gout.transpose2().expect("rank 2"));
            }
            Op::Add(a, b) => {
                add_to(grads, *a, gout.clone());
                add_to(grads, *b, gout.clone());
            }
            Op::Sub(a, b) => {
                add_to(grads, *a, gout.clone());
                add_to(grads, *b, gout.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let ga = elementwise_mul(gout, val(*b));
                let gb = elementwise_mul(gout, val(*a));
                add_to(grads, *a, ga);
                add_to(grads, *b, gb);
            }
            Op::AffineScalar { x, scale } => {
                add_to(grads, *x, gout.map(|v| scale * v));
            }
            Op::AddRowBroadcast { x, row } => {
                add_to(grads, *x, gout.clone());
                let n = val(*row).shape()[0];
                let mut rg = Tensor::zeros(&[n]);
                for (i, v) in gout.data().iter().enumerate() {
                    rg.data_mut()[i % n] += v;
                }
                add_to(grads, *row, rg);
            }
            Op::MulRowBroadcast { x, row } => {
                let tx = val(*x);
                let tr = val(*row);
                let n = tr.shape()[0];
                let mut gx = gout.clone();
                for (i, v) in gx.data_mut().iter_mut().enumerate() {
                    *v *= tr.data()[i % n];
                }
                add_to(grads, *x, gx);
                let mut rg = Tensor::zeros(&[n]);
                for (i, v) in gout.data().iter().enumerate() {
                    rg.data_mut()[i % n] += v * tx.data()[i];
                }
                add_to(grads, *row, rg);
            }
            Op::SoftmaxRows { x, mask } => {
                let y = &self.nodes[node].value;
                let (rows, cols) = (y.rows(), y.cols());
                let mut gx = Tensor::zeros(y.shape());
                for r in 0..rows {
                    let yr = &y.data()[r * cols..(r + 1) * cols];
                    let gr = &gout.data()[r * cols..(r + 1) * cols];
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for j in 0..cols {
                        gx.data_mut()[r * cols + j] = yr[j] * (gr[j] - dot);
                    }
                }
                if let Some(m) = mask {
                    add_to(grads, *m, gx.clone());
                }
                add_to(grads, *x, gx);
            }
            Op::LayerNormRows { x, eps } => {
                let tx = val(*x);
                let y = &self.nodes[node].value;
                let (m, n) = (tx.shape()[0], tx.shape()[1]);
                let mut gx = Tensor::zeros(tx.shape());
                for r in 0..m {
                    let xr = &tx.data()[r * n..(r + 1) * n];
                    let yr = &y.data()[r * n..(r + 1) * n];
                    let gr = &gout.data()[r * n..(r + 1) * n];
                    let mean = xr.iter().sum::<f64>() / n as f64;
                    let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let g_mean = gr.iter().sum::<f64>() / n as f64;
                    let gy_dot = gr.iter().zip(yr).map(|(g, y)| g * y).sum::<f64>() / n as f64;
                    for j in 0..n {
                        gx.data_mut()[r * n + j] = inv * (gr[j] - g_mean - yr[j] * gy_dot);
                    }
                }
                add_to(grads, *x, gx);
            }
            Op::Conv1d { x, w, padding } => {
                let (gx, gw) = conv1d_backward(val(*x), val(*w), gout, *padding);
                add_to(grads, *x, gx);
                add_to(grads, *w, gw);
            }
            Op::MaxPool1d { x, switches } => {
                let mut gx = Tensor::zeros(val(*x).shape());
                for (o, &src) in switches.iter().enumerate() {
                    gx.data_mut()[src] += gout.data()[o];
                }
                add_to(grads, *x, gx);
            }
            Op::Elu(x) => {
                let tx = val(*x);
                let y = &self.nodes[node].value;
                let mut gx = gout.clone();
                for (i, v) in gx.data_mut().iter_mut().enumerate() {
                    if tx.data()[i] < 0.0 {
                        *v *= y.data()[i] + 1.0;
                    }
                }
                add_to(grads, *x, gx);
            }
            Op::Relu(x) => {
                let tx = val(*x);
                let mut gx = gout.clone();
                for (i, v) in gx.data_mut().iter_mut().enumerate() {
                    if tx.data()[i] <= 0.0 {
                        *v = 0.0;
                    }
                }
                add_to(grads, *x, gx);
            }
            Op::Tanh(x) => {
                let y = &self.nodes[node].value;
                let mut gx = gout.clone();
                for (i, v) in gx.data_mut().iter_mut().enumerate() {
                    *v *= 1.0 - y.data()[i] * y.data()[i];
                }
                add_to(grads, *x, gx);
            }
            Op::Sigmoid(x) => {
                let y = &self.nodes[node].value;
                let mut gx = gout.clone();
                for (i, v) in gx.data_mut().iter_mut().enumerate() {
                    let s = y.data()[i];
                    *v *= s * (1.0 - s);
                }
                add_to(grads, *x, gx);
            }
            Op::Sqrt(x) => {
                let y = &self.nodes[node].value;
                let mut gx = gout.clone();
                for (i, v) in gx.data_mut().iter_mut().enumerate() {
                    *v *= 0.5 / y.data()[i];
                }
                add_to(grads, *x, gx);
            }
            Op::ConcatRows(parts) => {
                let cols = self.nodes[node].value.cols();
                let mut row = 0;
                for &p in parts {
                    let rows = val(p).shape()[0];
                    let data = gout.data()[row * cols..(row + rows) * cols].to_vec();
                    add_to(grads, p, Tensor::new(vec![rows, cols], data).expect("counted"));
                    row += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let total = self.nodes[node].value.shape()[1];
                let rows = self.nodes[node].value.shape()[0];
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).shape()[1];
                    let mut g = Tensor::zeros(&[rows, w]);
                    for r in 0..rows {
                        g.data_mut()[r * w..(r + 1) * w]
                            .copy_from_slice(&gout.data()[r * total + offset..r * total + offset + w]);
                    }
                    add_to(grads, p, g);
                    offset += w;
                }
            }
            Op::SliceRows { x, start } => {
                let tx = val(*x);
                let n = tx.shape()[1];
                let mut gx = Tensor::zeros(tx.shape());
                let rows = gout.shape()[0];
                gx.data_mut()[start * n..(start + rows) * n].copy_from_slice(gout.data());
                add_to(grads, *x, gx);
            }
            Op::SliceCols { x, start, end } => {
                let tx = val(*x);
                let (m, n) = (tx.shape()[0], tx.shape()[1]);
                let w = end - start;
                let mut gx = Tensor::zeros(&[m, n]);
                for r in 0..m {
                    gx.data_mut()[r * n + start..r * n + end]
                        .copy_from_slice(&gout.data()[r * w..(r + 1) * w]);
                }
                add_to(grads, *x, gx);
            }
            Op::GatherRows { x, indices } => {
                let tx = val(*x);
                let n = tx.shape()[1];
                let mut gx = Tensor::zeros(tx.shape());
                for (r, &i) in indices.iter().enumerate() {
                    for j in 0..n {
                        gx.data_mut()[i * n + j] += gout.data()[r * n + j];
                    }
                }
                add_to(grads, *x, gx);
            }
            Op::ScatterRowsOverwrite { base, rows, indices } => {
                let n = val(*base).shape()[1];
                let mut gbase = gout.clone();
                let mut grows = Tensor::zeros(val(*rows).shape());
                for (r, &i) in indices.iter().enumerate() {
                    grows.data_mut()[r * n..(r + 1) * n].copy_from_slice(&gout.data()[i * n..(i + 1) * n]);
                    for v in &mut gbase.data_mut()[i * n..(i + 1) * n] {
                        *v = 0.0;
                    }
                }
                add_to(grads, *base, gbase);
                add_to(grads, *rows, grows);
            }
            Op::MeanRows(x) => {
                let tx = val(*x);
                let (m, n) = (tx.shape()[0], tx.shape()[1]);
                let mut gx = Tensor::zeros(tx.shape());
                for r in 0..m {
                    for j in 0..n {
                        gx.data_mut()[r * n + j] = gout.data()[j] / m as f64;
                    }
                }
                add_to(grads, *x, gx);
            }
            Op::RepeatRows { row, count } => {
                let n = val(*row).shape()[1];
                let mut g = Tensor::zeros(&[1, n]);
                for r in 0..*count {
                    for j in 0..n {
                        g.data_mut()[j] += gout.data()[r * n + j];
                    }
                }
                add_to(grads, *row, g);
            }
            Op::CumMeanRows(x) => {
                let tx = val(*x);
                let (m, n) = (tx.shape()[0], tx.shape()[1]);
                let mut gx = Tensor::zeros(tx.shape());
                let mut acc = vec![0.0; n];
                for r in (0..m).rev() {
                    for j in 0..n {
                        acc[j] += gout.data()[r * n + j] / (r + 1) as f64;
                        gx.data_mut()[r * n + j] = acc[j];
                    }
                }
                add_to(grads, *x, gx);
            }
            Op::Mean(x) => {
                let tx = val(*x);
                let g = gout.data()[0] / tx.len() as f64;
                add_to(grads, *x, Tensor::full(tx.shape(), g));
            }
            Op::Sum(x) => {
                let tx = val(*x);
                add_to(grads, *x, Tensor::full(tx.shape(), gout.data()[0]));
            }
            Op::SumOfSquares(x) => {
                let tx = val(*x);
                let g = gout.data()[0];
                add_to(grads, *x, tx.map(|v| 2.0 * v * g));
            }
            Op::RowSumSq(x) => {
                let tx = val(*x);
                let (m, n) = (tx.shape()[0], tx.shape()[1]);
                let mut gx = Tensor::zeros(tx.shape());
                for r in 0..m {
                    let g = gout.data()[r];
                    for j in 0..n {
                        gx.data_mut()[r * n + j] = 2.0 * tx.data()[r * n + j] * g;
                    }
                }
                add_to(grads, *x, gx);
            }
        }
    }
}

fn elementwise_mul(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn matmul_nn(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = Tensor::zeros(&[m, n]);
    let (ad, bd) = (a.data(), b.data());
    let od = out.data_mut();
    for i in 0..m {
        let orow = &mut od[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = ad[i * k + kk];
            let brow = &bd[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

/// `a * b^T` where `a` is `[m,n]` and `b` is `[k,n]`.
fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, n) = (a.shape()[0], a.shape()[1]);
    let k = b.shape()[0];
    let mut out = Tensor::zeros(&[m, k]);
    for i in 0..m {
        let arow = &a.data()[i * n..(i + 1) * n];
        for j in 0..k {
            let brow = &b.data()[j * n..(j + 1) * n];
            let mut acc = 0.0;
            for t in 0..n {
                acc += arow[t] * brow[t];
            }
            out.data_mut()[i * k + j] = acc;
        }
    }
    out
}

/// `a^T * b` where `a` is `[m,k]` and `b` is `[m,n]`.
fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = Tensor::zeros(&[k, n]);
    let od = out.data_mut();
    for i in 0..m {
        let brow = &b.data()[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a.data()[i * k + kk];
            let orow = &mut od[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

fn conv_src(t: usize, dk: usize, k: usize, padding: ConvPadding) -> isize {
    match padding {
        ConvPadding::Same => t as isize + dk as isize - ((k - 1) / 2) as isize,
        ConvPadding::Causal { dilation } => t as isize - ((k - 1 - dk) * dilation) as isize,
    }
}

fn conv1d_forward(x: &Tensor, w: &Tensor, padding: ConvPadding) -> Tensor {
    let (l, cin) = (x.shape()[0], x.shape()[1]);
    let (k, cout) = (w.shape()[0], w.shape()[2]);
    let mut out = Tensor::zeros(&[l, cout]);
    for t in 0..l {
        for dk in 0..k {
            let src = conv_src(t, dk, k, padding);
            if src < 0 || src >= l as isize {
                continue;
            }
            let src = src as usize;
            for ci in 0..cin {
                let xv = x.data()[src * cin + ci];
                let wrow = &w.data()[(dk * cin + ci) * cout..(dk * cin + ci + 1) * cout];
                let orow = &mut out.data_mut()[t * cout..(t + 1) * cout];
                for co in 0..cout {
                    orow[co] += xv * wrow[co];
                }
            }
        }
    }
    out
}

fn conv1d_backward(x: &Tensor, w: &Tensor, gout: &Tensor, padding: ConvPadding) -> (Tensor, Tensor) {
    let (l, cin) = (x.shape()[0], x.shape()[1]);
    let (k, cout) = (w.shape()[0], w.shape()[2]);
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(w.shape());
    for t in 0..l {
        for dk in 0..k {
            let src = conv_src(t, dk, k, padding);
            if src < 0 || src >= l as isize {
                continue;
            }
            let src = src as usize;
            let grow = &gout.data()[t * cout..(t + 1) * cout];
            for ci in 0..cin {
                let xv = x.data()[src * cin + ci];
                let wrow = &w.data()[(dk * cin + ci) * cout..(dk * cin + ci + 1) * cout];
                let mut acc = 0.0;
                for co in 0..cout {
                    acc += grow[co] * wrow[co];
                    gw.data_mut()[(dk * cin + ci) * cout + co] += grow[co] * xv;
                }
                gx.data_mut()[src * cin + ci] += acc;
            }
        }
    }
    (gx, gw)
}

/// Uniform random tensor in `[-1, 1)` from a seeded generator.
pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    Tensor::new(shape.to_vec(), data).expect("counted")
}

/// Finite-difference step for [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Compare reverse-mode gradients of a scalar-valued composition against
/// central finite differences at step `1e-5`.
///
/// Returns the maximum over all input elements of
/// `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: &F, shapes: &[Vec<usize>], seed: u64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Graph, &[ValueId]) -> Result<ValueId, AutodiffError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Tensor> = shapes.iter().map(|s| random_tensor(s, &mut rng)).collect();
    grad_check_at(f, &inputs)
}

/// [`grad_check`] at caller-supplied input values.
pub fn grad_check_at<F>(f: &F, inputs: &[Tensor]) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Graph, &[ValueId]) -> Result<ValueId, AutodiffError>,
{
    let eval = |points: &[Tensor]| -> Result<f64, AutodiffError> {
        let mut g = Graph::new();
        let ids: Vec<ValueId> = points.iter().map(|t| g.input(t.clone())).collect();
        let out = f(&mut g, &ids)?;
        let v = g.value(out).scalar_value().map_err(|_| AutodiffError::NotScalar {
            shape: g.value(out).shape().to_vec(),
        })?;
        if !v.is_finite() {
            return Err(AutodiffError::NonFinite { op: "grad_check" });
        }
        Ok(v)
    };

    let mut graph = Graph::new();
    let ids: Vec<ValueId> = inputs.iter().map(|t| graph.input(t.clone())).collect();
    let out = f(&mut graph, &ids)?;
    if !graph.value(out).all_finite() {
        return Err(AutodiffError::NonFinite { op: "grad_check" });
    }
    let grads = graph.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut probe = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.wrt(ids[i]);
        for e in 0..input.len() {
            let base = input.data()[e];
            probe[i].data_mut()[e] = base + GRAD_CHECK_STEP;
            let plus = eval(&probe)?;
            probe[i].data_mut()[e] = base - GRAD_CHECK_STEP;
            let minus = eval(&probe)?;
            probe[i].data_mut()[e] = base;
            let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
            let rel = (analytic.data()[e] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

type BuildFn = Box<dyn Fn(&mut Graph, &[ValueId]) -> Result<ValueId, AutodiffError>>;

/// Run [`grad_check`] once per differentiable primitive, each wrapped in a
/// small scalar-valued composition, and report the worst relative error per
/// op. Backs the `grad-check` subcommand and the release gate.
pub fn primitive_gradient_checks(seed: u64) -> Vec<(&'static str, f64)> {
    let cases: Vec<(&'static str, Vec<Vec<usize>>, BuildFn)> = vec![
        (
            "matmul",
            vec![vec![3, 4], vec![4, 2]],
            Box::new(|g, ids| {
                let y = g.matmul(ids[0], ids[1])?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "transpose",
            vec![vec![3, 4]],
            Box::new(|g, ids| {
                let y = g.transpose(ids[0])?;
                let z = g.matmul(ids[0], y)?;
                Ok(g.sum(z))
            }),
        ),
        (
            "add",
            vec![vec![2, 5], vec![2, 5]],
            Box::new(|g, ids| {
                let y = g.add(ids[0], ids[1])?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "sub",
            vec![vec![2, 5], vec![2, 5]],
            Box::new(|g, ids| {
                let y = g.sub(ids[0], ids[1])?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "mul",
            vec![vec![2, 5], vec![2, 5]],
            Box::new(|g, ids| {
                let y = g.mul(ids[0], ids[1])?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "affine",
            vec![vec![6]],
            Box::new(|g, ids| {
                let y = g.affine(ids[0], 2.5, -0.75);
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "add_row_broadcast",
            vec![vec![3, 4], vec![4]],
            Box::new(|g, ids| {
                let y = g.add_row_broadcast(ids[0], ids[1])?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "mul_row_broadcast",
            vec![vec![3, 4], vec![4]],
            Box::new(|g, ids| {
                let y = g.mul_row_broadcast(ids[0], ids[1])?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "softmax_rows",
            vec![vec![3, 5]],
            Box::new(|g, ids| {
                let y = g.softmax_rows(ids[0], None)?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "softmax_rows_masked",
            vec![vec![3, 5], vec![3, 5]],
            Box::new(|g, ids| {
                let y = g.softmax_rows(ids[0], Some(ids[1]))?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "layer_norm_rows",
            vec![vec![3, 6], vec![3, 6]],
            Box::new(|g, ids| {
                let y = g.layer_norm_rows(ids[0], 1e-5)?;
                let w = g.mul(y, ids[1])?;
                Ok(g.mean(w)?)
            }),
        ),
        (
            "conv1d_same",
            vec![vec![6, 2], vec![3, 2, 2]],
            Box::new(|g, ids| {
                let y = g.conv1d(ids[0], ids[1], ConvPadding::Same)?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "conv1d_causal_dilated",
            vec![vec![8, 2], vec![3, 2, 2]],
            Box::new(|g, ids| {
                let y = g.conv1d(ids[0], ids[1], ConvPadding::Causal { dilation: 2 })?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "maxpool1d",
            vec![vec![6, 3]],
            Box::new(|g, ids| {
                let y = g.maxpool1d(ids[0])?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "elu",
            vec![vec![2, 6]],
            Box::new(|g, ids| {
                let y = g.elu(ids[0]);
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "relu",
            vec![vec![2, 6]],
            Box::new(|g, ids| {
                let y = g.relu(ids[0]);
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "tanh",
            vec![vec![2, 6]],
            Box::new(|g, ids| {
                let y = g.tanh(ids[0]);
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "sigmoid",
            vec![vec![2, 6]],
            Box::new(|g, ids| {
                let y = g.sigmoid(ids[0]);
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "sqrt",
            vec![vec![2, 5]],
            Box::new(|g, ids| {
                let shifted = g.affine(ids[0], 1.0, 2.0);
                let y = g.sqrt(shifted)?;
                Ok(g.sum(y))
            }),
        ),
        (
            "concat_rows",
            vec![vec![2, 3], vec![4, 3]],
            Box::new(|g, ids| {
                let y = g.concat_rows(&[ids[0], ids[1]])?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "concat_cols",
            vec![vec![3, 2], vec![3, 4]],
            Box::new(|g, ids| {
                let y = g.concat_cols(&[ids[0], ids[1]])?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "slice_rows",
            vec![vec![5, 3]],
            Box::new(|g, ids| {
                let y = g.slice_rows(ids[0], 1, 4)?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "slice_cols",
            vec![vec![3, 5]],
            Box::new(|g, ids| {
                let y = g.slice_cols(ids[0], 2, 5)?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "gather_rows",
            vec![vec![4, 3]],
            Box::new(|g, ids| {
                let y = g.gather_rows(ids[0], &[2, 0, 2])?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "scatter_rows_overwrite",
            vec![vec![4, 3], vec![2, 3]],
            Box::new(|g, ids| {
                let y = g.scatter_rows_overwrite(ids[0], ids[1], &[1, 3])?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "mean_rows",
            vec![vec![4, 3]],
            Box::new(|g, ids| {
                let y = g.mean_rows(ids[0])?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "repeat_rows",
            vec![vec![1, 4]],
            Box::new(|g, ids| {
                let y = g.repeat_rows(ids[0], 3)?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "cummean_rows",
            vec![vec![5, 3]],
            Box::new(|g, ids| {
                let y = g.cummean_rows(ids[0])?;
                Ok(g.sum_of_squares(y))
            }),
        ),
        (
            "mean",
            vec![vec![3, 4]],
            Box::new(|g, ids| {
                let sq = g.mul(ids[0], ids[0])?;
                Ok(g.mean(sq)?)
            }),
        ),
        (
            "sum",
            vec![vec![3, 4]],
            Box::new(|g, ids| {
                let sq = g.mul(ids[0], ids[0])?;
                Ok(g.sum(sq))
            }),
        ),
        (
            "sum_of_squares",
            vec![vec![3, 4]],
            Box::new(|g, ids| Ok(g.sum_of_squares(ids[0]))),
        ),
        (
            "row_sum_sq",
            vec![vec![4, 3]],
            Box::new(|g, ids| {
                let y = g.row_sum_sq(ids[0])?;
                Ok(g.sum_of_squares(y))
            }),
        ),
    ];

    cases
        .into_iter()
        .map(|(name, shapes, f)| {
            let err = grad_check(&f, &shapes, seed).expect("primitive check must evaluate");
            (name, err)
        })
        .collect()
}
