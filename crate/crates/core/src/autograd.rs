//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! bound from a [`ParamStore`] at most once per tape, so a parameter used in
//! several places (tied weights) accumulates a single gradient.

use std::collections::HashMap;

use ndarray::{s, Array2, Axis, Zip};

pub type Mat = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable matrices. Vectors are stored as `1 × n`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter; panics on a duplicate name (a construction bug).
    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "parameter {name} registered twice"
        );
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Mat> {
        self.index.get(name).map(|&i| &self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Mat)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

/// Per-parameter gradients; `None` for parameters the loss never touched.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.mapv_inplace(|x| x * factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads
            .iter()
            .flatten()
            .all(|g| g.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    Gather {
        src: Var,
        rows: Vec<usize>,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Softmax(Var),
    Reshape(Var),
    PoolRows {
        weights: Var,
        values: Var,
    },
    Bce {
        logits: Var,
        targets: Mat,
        weights: Mat,
        norm: f64,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Mat,
    },
    Combine(Vec<(Var, f64)>),
}

struct Node {
    value: Mat,
    op: Op,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    bound: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            bound: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.push(self.params.get(id).clone(), Op::Param(id));
        self.bound[id.0] = Some(v);
        v
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds the `1 × c` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::AddRow(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a) * factor;
        self.push(v, Op::Scale(a, factor))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(v, Op::Gelu(a))
    }

    /// Row-wise layer normalization with population variance.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        let out = &xhat * self.value(gain) + self.value(bias);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    /// Stacks the listed rows of `src` (embedding lookup, row selection).
    pub fn gather(&mut self, src: Var, rows: Vec<usize>) -> Var {
        let sv = self.value(src);
        let v = sv.select(Axis(0), &rows);
        self.push(v, Op::Gather { src, rows })
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x).slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::SliceRows { x, start })
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let v = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols { x, start })
    }

    pub fn concat_rows(&mut self, parts: Vec<Var>) -> Var {
        if parts.len() == 1 {
            return parts[0];
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("matching column counts");
        self.push(v, Op::ConcatRows(parts))
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Var {
        if parts.len() == 1 {
            return parts[0];
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("matching row counts");
        self.push(v, Op::ConcatCols(parts))
    }

    /// Row-wise softmax. Masked-out entries get probability exactly zero and
    /// take no part in the max or the normalizer.
    pub fn softmax(&mut self, a: Var, mask: Option<&Array2<bool>>) -> Var {
        let mut v = self.value(a).clone();
        for (r, mut row) in v.rows_mut().into_iter().enumerate() {
            let keep = |c: usize| mask.is_none_or(|m| m[[r, c]]);
            let max = row
                .iter()
                .enumerate()
                .filter(|(c, _)| keep(*c))
                .map(|(_, x)| *x)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (c, x) in row.iter_mut().enumerate() {
                if keep(c) {
                    *x = (*x - max).exp();
                    sum += *x;
                } else {
                    *x = 0.0;
                }
            }
            row.mapv_inplace(|x| x / sum);
        }
        self.push(v, Op::Softmax(a))
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let src = self.value(a);
        let flat: Vec<f64> = src.iter().copied().collect();
        let v = Array2::from_shape_vec((rows, cols), flat).expect("reshape preserves size");
        self.push(v, Op::Reshape(a))
    }

    /// `out[t] = Σ_j weights[t, j] · values[t·n + j]` with `n = weights.ncols()`.
    pub fn pool_rows(&mut self, weights: Var, values: Var) -> Var {
        let w = self.value(weights);
        let vals = self.value(values);
        let (t, n) = w.dim();
        assert_eq!(vals.nrows(), t * n, "pool_rows shape mismatch");
        let mut out = Mat::zeros((t, vals.ncols()));
        for i in 0..t {
            let mut row = out.row_mut(i);
            for j in 0..n {
                row.scaled_add(w[[i, j]], &vals.row(i * n + j));
            }
        }
        self.push(out, Op::PoolRows { weights, values })
    }

    /// `Σ weights · [softplus(s) − y·s] / norm`, the weighted binary
    /// cross-entropy of logits `s`, as a `1 × 1` value.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Mat, weights: Mat, norm: f64) -> Var {
        let s = self.value(logits);
        assert_eq!(s.dim(), targets.dim(), "bce target shape");
        assert_eq!(s.dim(), weights.dim(), "bce weight shape");
        let mut total = 0.0;
        Zip::from(s)
            .and(&targets)
            .and(&weights)
            .for_each(|&s, &y, &w| {
                total += w * (softplus(s) - y * s);
            });
        let v = Mat::from_elem((1, 1), total / norm);
        self.push(
            v,
            Op::Bce {
                logits,
                targets,
                weights,
                norm,
            },
        )
    }

    /// Mean softmax cross-entropy of `logits` rows against class `targets`.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<usize>) -> Var {
        let l = self.value(logits);
        assert_eq!(l.nrows(), targets.len(), "one target per row");
        let mut probs = l.clone();
        let mut total = 0.0;
        for (mut row, &t) in probs.rows_mut().into_iter().zip(&targets) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[t];
            row.mapv_inplace(|x| (x - lse).exp());
        }
        let n = targets.len().max(1) as f64;
        let v = Mat::from_elem((1, 1), total / n);
        self.push(
            v,
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            },
        )
    }

    /// `Σ coef · scalar` over `1 × 1` values.
    pub fn combine(&mut self, terms: Vec<(Var, f64)>) -> Var {
        let total = terms.iter().map(|(v, c)| c * self.scalar(*v)).sum::<f64>();
        self.push(Mat::from_elem((1, 1), total), Op::Combine(terms))
    }

    /// Back-propagates from a `1 × 1` output.
    pub fn backward(&self, out: Var) -> Gradients {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Mat::ones(self.value(out).dim()));
        let mut param_grads: Vec<Option<Mat>> = vec![None; self.params.len()];

        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => accumulate(&mut param_grads[id.0], g),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::MatMulBt(a, b) => {
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[b.0], g.clone());
                    accumulate(&mut grads[a.0], g);
                }
                Op::AddRow(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads[b.0], gb);
                    accumulate(&mut grads[a.0], g);
                }
                Op::Scale(a, f) => accumulate(&mut grads[a.0], g * *f),
                Op::Gelu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(*a))
                        .for_each(|g, &x| *g *= gelu_grad(x));
                    accumulate(&mut grads[a.0], ga);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gbias = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let ggain = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gxhat = &g * self.value(*gain);
                    let d = gxhat.ncols() as f64;
                    let mut gx = gxhat.clone();
                    for (r, mut row) in gx.rows_mut().into_iter().enumerate() {
                        let gr = gxhat.row(r);
                        let xr = xhat.row(r);
                        let mean_g = gr.sum() / d;
                        let mean_gx = gr.dot(&xr) / d;
                        Zip::from(&mut row)
                            .and(&gr)
                            .and(&xr)
                            .for_each(|o, &gv, &xv| {
                                *o = inv_std[r] * (gv - mean_g - xv * mean_gx);
                            });
                    }
                    accumulate(&mut grads[bias.0], gbias);
                    accumulate(&mut grads[gain.0], ggain);
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Gather { src, rows } => {
                    let slot =
                        grads[src.0].get_or_insert_with(|| Mat::zeros(self.value(*src).dim()));
                    for (i, &r) in rows.iter().enumerate() {
                        let mut dst = slot.row_mut(r);
                        dst += &g.row(i);
                    }
                }
                Op::SliceRows { x, start } => {
                    let slot = grads[x.0].get_or_insert_with(|| Mat::zeros(self.value(*x).dim()));
                    let mut dst = slot.slice_mut(s![*start..*start + g.nrows(), ..]);
                    dst += &g;
                }
                Op::SliceCols { x, start } => {
                    let slot = grads[x.0].get_or_insert_with(|| Mat::zeros(self.value(*x).dim()));
                    let mut dst = slot.slice_mut(s![.., *start..*start + g.ncols()]);
                    dst += &g;
                }
                Op::ConcatRows(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let n = self.value(*p).nrows();
                        accumulate(&mut grads[p.0], g.slice(s![at..at + n, ..]).to_owned());
                        at += n;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let n = self.value(*p).ncols();
                        accumulate(&mut grads[p.0], g.slice(s![.., at..at + n]).to_owned());
                        at += n;
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut ga = &g * y;
                    for (r, mut row) in ga.rows_mut().into_iter().enumerate() {
                        let dot = g.row(r).dot(&y.row(r));
                        Zip::from(&mut row)
                            .and(&y.row(r))
                            .for_each(|o, &yv| *o -= yv * dot);
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Reshape(a) => {
                    let dim = self.value(*a).dim();
                    let flat: Vec<f64> = g.iter().copied().collect();
                    let ga = Array2::from_shape_vec(dim, flat).expect("reshape preserves size");
                    accumulate(&mut grads[a.0], ga);
                }
                Op::PoolRows { weights, values } => {
                    let w = self.value(*weights);
                    let vals = self.value(*values);
                    let (t, n) = w.dim();
                    let mut gw = Mat::zeros((t, n));
                    let mut gv = Mat::zeros(vals.dim());
                    for i in 0..t {
                        let gi = g.row(i);
                        for j in 0..n {
                            gw[[i, j]] = gi.dot(&vals.row(i * n + j));
                            gv.row_mut(i * n + j).scaled_add(w[[i, j]], &gi);
                        }
                    }
                    accumulate(&mut grads[weights.0], gw);
                    accumulate(&mut grads[values.0], gv);
                }
                Op::Bce {
                    logits,
                    targets,
                    weights,
                    norm,
                } => {
                    let up = g[[0, 0]] / norm;
                    let mut gs = self.value(*logits).clone();
                    Zip::from(&mut gs)
                        .and(targets)
                        .and(weights)
                        .for_each(|s, &y, &w| *s = up * w * (sigmoid(*s) - y));
                    accumulate(&mut grads[logits.0], gs);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let up = g[[0, 0]] / targets.len().max(1) as f64;
                    let mut gl = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        gl[[r, t]] -= 1.0;
                    }
                    gl.mapv_inplace(|x| x * up);
                    accumulate(&mut grads[logits.0], gl);
                }
                Op::Combine(terms) => {
                    for (v, c) in terms {
                        accumulate(&mut grads[v.0], Mat::from_elem((1, 1), g[[0, 0]] * c));
                    }
                }
            }
        }
        Gradients { grads: param_grads }
    }
}

fn accumulate(slot: &mut Option<Mat>, g: Mat) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}
