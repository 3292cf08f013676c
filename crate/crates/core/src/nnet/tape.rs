//! A small reverse-mode differentiation tape over `ndarray` matrices.
//!
//! Operations record themselves as nodes; `backward` walks the tape in
//! reverse, accumulating gradients. The op set is exactly what the grid
//! network and its constrained loss need. Non-smooth ops (abs, relu,
//! max) use the one-sided subgradient at their kink, which the gradient
//! checker avoids by construction.

use ndarray::{Array2, Axis};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `A · Bᵀ`
    MatMulTransB(Var, Var),
    Add(Var, Var),
    /// `A + row` with the 1×d row broadcast over A's rows.
    AddRow(Var, Var),
    Scale(Var, f64),
    /// Elementwise product with a constant (masking).
    MulConst(Var, Array2<f64>),
    /// `s·x + t` elementwise.
    Affine(Var, f64, f64),
    Gelu(Var),
    Relu(Var),
    Abs(Var),
    SoftmaxRows(Var),
    /// `(x, gain, bias)` with gain and bias 1×d.
    LayerNorm(Var, Var, Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    /// Rows of a table selected by constant indices.
    GatherRows(Var, Vec<usize>),
    SumAll(Var),
    MaxAll(Var),
    /// Per-row maximum: n×k → n×1.
    RowMax(Var),
    ElemMax(Var, Var),
    /// Summed `-log softmax(logits)[target]` over rows; value is 1×1.
    CrossEntropy(Var, Vec<usize>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

const LN_EPS: f64 = 1e-5;

/// The recording tape. Create one per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub(crate) fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
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

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn matmul_trans_b(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        self.push(value, Op::MatMulTransB(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let value = self.value(a) + &self.value(row).row(0);
        self.push(value, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        self.push(value, Op::Scale(a, c))
    }

    pub fn mul_const(&mut self, a: Var, mask: Array2<f64>) -> Var {
        let value = self.value(a) * &mask;
        self.push(value, Op::MulConst(a, mask))
    }

    pub fn affine(&mut self, a: Var, s: f64, t: f64) -> Var {
        let value = self.value(a).mapv(|v| s * v + t);
        self.push(value, Op::Affine(a, s, t))
    }

    pub fn gelu_op(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(gelu);
        self.push(value, Op::Gelu(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|v| v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::abs);
        self.push(value, Op::Abs(a))
    }

    pub fn softmax_rows_op(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let mut value = xv.clone();
        for mut row in value.rows_mut() {
            let mean = row.mean().unwrap();
            let var = row.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
            let denom = (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) / denom);
        }
        let value = &value * &self.value(gain).row(0) + &self.value(bias).row(0);
        self.push(value, Op::LayerNorm(x, gain, bias))
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Var {
        let rows = self.value(parts[0]).nrows();
        let total: usize = parts.iter().map(|&p| self.value(p).ncols()).sum();
        let mut value = Array2::zeros((rows, total));
        let mut at = 0;
        for &p in &parts {
            let v = self.value(p);
            value
                .slice_mut(ndarray::s![.., at..at + v.ncols()])
                .assign(v);
            at += v.ncols();
        }
        self.push(value, Op::ConcatCols(parts))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).slice(ndarray::s![.., start..end]).to_owned();
        self.push(value, Op::SliceCols(a, start, end))
    }

    pub fn gather_rows(&mut self, table: Var, indices: Vec<usize>) -> Var {
        let t = self.value(table);
        let mut value = Array2::zeros((indices.len(), t.ncols()));
        for (i, &idx) in indices.iter().enumerate() {
            value.row_mut(i).assign(&t.row(idx));
        }
        self.push(value, Op::GatherRows(table, indices))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(value, Op::SumAll(a))
    }

    pub fn max_all(&mut self, a: Var) -> Var {
        let value = Array2::from_elem(
            (1, 1),
            self.value(a).iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
        self.push(value, Op::MaxAll(a))
    }

    pub fn row_max(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mut value = Array2::zeros((v.nrows(), 1));
        for (i, row) in v.rows().into_iter().enumerate() {
            value[[i, 0]] = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        self.push(value, Op::RowMax(a))
    }

    pub fn elem_max(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        let mut value = av.clone();
        value.zip_mut_with(bv, |x, &y| *x = x.max(y));
        self.push(value, Op::ElemMax(a, b))
    }

    /// Summed cross-entropy of row-wise softmax against target indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<usize>) -> Var {
        let probs = softmax_rows(self.value(logits));
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            total -= probs[[i, t]].max(f64::MIN_POSITIVE).ln();
        }
        self.push(Array2::from_elem((1, 1), total), Op::CrossEntropy(logits, targets))
    }

    /// Gradients of the scalar `root` with respect to every node.
    /// Nodes unreachable from the root have `None`.
    pub fn backward(&self, root: Var) -> Vec<Option<Array2<f64>>> {
        assert_eq!(self.value(root).dim(), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::from_elem((1, 1), 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        grads
    }

    fn accumulate(grads: &mut [Option<Array2<f64>>], var: Var, delta: Array2<f64>) {
        match &mut grads[var.0] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, node: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        match &self.nodes[node].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = g.dot(&self.value(*b).t());
                let db = self.value(*a).t().dot(g);
                Self::accumulate(grads, *a, da);
                Self::accumulate(grads, *b, db);
            }
            Op::MatMulTransB(a, b) => {
                let da = g.dot(self.value(*b));
                let db = g.t().dot(self.value(*a));
                Self::accumulate(grads, *a, da);
                Self::accumulate(grads, *b, db);
            }
            Op::Add(a, b) => {
                Self::accumulate(grads, *a, g.clone());
                Self::accumulate(grads, *b, g.clone());
            }
            Op::AddRow(a, row) => {
                Self::accumulate(grads, *a, g.clone());
                let drow = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                Self::accumulate(grads, *row, drow);
            }
            Op::Scale(a, c) => {
                Self::accumulate(grads, *a, g * *c);
            }
            Op::MulConst(a, mask) => {
                Self::accumulate(grads, *a, g * mask);
            }
            Op::Affine(a, s, _) => {
                Self::accumulate(grads, *a, g * *s);
            }
            Op::Gelu(a) => {
                let da = self.value(*a).mapv(gelu_grad) * g;
                Self::accumulate(grads, *a, da);
            }
            Op::Relu(a) => {
                let da = self.value(*a).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }) * g;
                Self::accumulate(grads, *a, da);
            }
            Op::Abs(a) => {
                let da = self.value(*a).mapv(f64::signum) * g;
                Self::accumulate(grads, *a, da);
            }
            Op::SoftmaxRows(a) => {
                let p = &self.nodes[node].value;
                let mut da = p * g;
                for (mut row, (grow, prow)) in da
                    .rows_mut()
                    .into_iter()
                    .zip(g.rows().into_iter().zip(p.rows()))
                {
                    let dot: f64 = grow.iter().zip(prow.iter()).map(|(x, y)| x * y).sum();
                    row.zip_mut_with(&prow, |d, &pv| *d -= pv * dot);
                }
                Self::accumulate(grads, *a, da);
            }
            Op::LayerNorm(x, gain, bias) => {
                let xv = self.value(*x);
                let gv = self.value(*gain).row(0).to_owned();
                let d = xv.ncols() as f64;
                let mut dx = Array2::zeros(xv.dim());
                let mut dgain = Array2::zeros((1, xv.ncols()));
                let mut dbias = Array2::zeros((1, xv.ncols()));
                for (i, row) in xv.rows().into_iter().enumerate() {
                    let mean = row.mean().unwrap();
                    let var = row.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
                    let denom = (var + LN_EPS).sqrt();
                    let xhat = row.mapv(|v| (v - mean) / denom);
                    let grow = g.row(i);
                    for j in 0..xv.ncols() {
                        dgain[[0, j]] += grow[j] * xhat[j];
                        dbias[[0, j]] += grow[j];
                    }
                    // d xhat
                    let dxhat: Vec<f64> = (0..xv.ncols()).map(|j| grow[j] * gv[j]).collect();
                    let mean_dxhat: f64 = dxhat.iter().sum::<f64>() / d;
                    let mean_dxhat_xhat: f64 =
                        dxhat.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
                    for j in 0..xv.ncols() {
                        dx[[i, j]] =
                            (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat) / denom;
                    }
                }
                Self::accumulate(grads, *x, dx);
                Self::accumulate(grads, *gain, dgain);
                Self::accumulate(grads, *bias, dbias);
            }
            Op::ConcatCols(parts) => {
                let mut at = 0;
                for &p in parts {
                    let w = self.value(p).ncols();
                    let dp = g.slice(ndarray::s![.., at..at + w]).to_owned();
                    Self::accumulate(grads, p, dp);
                    at += w;
                }
            }
            Op::SliceCols(a, start, end) => {
                let mut da = Array2::zeros(self.value(*a).dim());
                da.slice_mut(ndarray::s![.., *start..*end]).assign(g);
                Self::accumulate(grads, *a, da);
            }
            Op::GatherRows(table, indices) => {
                let mut dt = Array2::zeros(self.value(*table).dim());
                for (i, &idx) in indices.iter().enumerate() {
                    let mut row = dt.row_mut(idx);
                    row += &g.row(i);
                }
                Self::accumulate(grads, *table, dt);
            }
            Op::SumAll(a) => {
                let da = Array2::from_elem(self.value(*a).dim(), g[[0, 0]]);
                Self::accumulate(grads, *a, da);
            }
            Op::MaxAll(a) => {
                let av = self.value(*a);
                let mut da = Array2::zeros(av.dim());
                let mut best = (0, 0);
                let mut best_v = f64::NEG_INFINITY;
                for ((i, j), &v) in av.indexed_iter() {
                    if v > best_v {
                        best_v = v;
                        best = (i, j);
                    }
                }
                da[best] = g[[0, 0]];
                Self::accumulate(grads, *a, da);
            }
            Op::RowMax(a) => {
                let av = self.value(*a);
                let mut da = Array2::zeros(av.dim());
                for (i, row) in av.rows().into_iter().enumerate() {
                    let mut best = 0;
                    for (j, &v) in row.iter().enumerate() {
                        if v > row[best] {
                            best = j;
                        }
                    }
                    da[[i, best]] = g[[i, 0]];
                }
                Self::accumulate(grads, *a, da);
            }
            Op::ElemMax(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let mut da = Array2::zeros(av.dim());
                let mut db = Array2::zeros(bv.dim());
                for ((i, j), &ga) in g.indexed_iter() {
                    if av[[i, j]] >= bv[[i, j]] {
                        da[[i, j]] = ga;
                    } else {
                        db[[i, j]] = ga;
                    }
                }
                Self::accumulate(grads, *a, da);
                Self::accumulate(grads, *b, db);
            }
            Op::CrossEntropy(logits, targets) => {
                let probs = softmax_rows(self.value(*logits));
                let mut dl = probs;
                for (i, &t) in targets.iter().enumerate() {
                    dl[[i, t]] -= 1.0;
                }
                Self::accumulate(grads, *logits, dl * g[[0, 0]]);
            }
        }
    }
}
