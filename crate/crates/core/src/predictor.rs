//! Prediction head: average pooling over ROIs, hyperbolic dense layers
//! `ReLU(Wᵀ log₀ᶜ(P(x)) + b)`, a plain linear logit layer, and softmax
//! cross-entropy.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{project_log_row, project_log_row_backward, CurvatureConfig};
use crate::matrix::{dot, Matrix};

/// Column means of the node embeddings.
pub fn average_pool(x: &Matrix) -> Result<Vec<f64>> {
    if x.rows() == 0 {
        return Err(Error::Empty("pooling input"));
    }
    Ok(x.column_means())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadSpec {
    /// Input width followed by the hidden widths.
    pub dims: Vec<usize>,
    pub classes: usize,
    pub curvature: CurvatureConfig,
    /// Skip the log map (Euclidean baseline pipelines).
    #[serde(default = "yes")]
    pub hyperbolic: bool,
}

fn yes() -> bool {
    true
}

impl HeadSpec {
    /// Two hidden layers of width 32 and a two-class output.
    pub fn default_for(input: usize) -> Self {
        Self {
            dims: vec![input, 32, 32],
            classes: 2,
            curvature: CurvatureConfig::default(),
            hyperbolic: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::InvalidConfig("head dims must be nonempty and ≥ 1".into()));
        }
        if self.classes < 2 {
            return Err(Error::InvalidConfig("head needs at least two classes".into()));
        }
        Ok(())
    }

    pub fn n_hidden(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn tensor_shapes(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        for k in 0..self.n_hidden() {
            out.push((format!("layer{k}.weight"), (self.dims[k], self.dims[k + 1])));
            out.push((format!("layer{k}.bias"), (1, self.dims[k + 1])));
        }
        let last = *self.dims.last().expect("validated");
        out.push(("out.weight".into(), (last, self.classes)));
        out.push(("out.bias".into(), (1, self.classes)));
        out
    }
}

/// Borrowed head weights: `(W, b)` per hidden layer, then the logit layer.
#[derive(Clone, Debug)]
pub struct HnnParams<'a> {
    pub hidden: Vec<(&'a Matrix, &'a [f64])>,
    pub out: (&'a Matrix, &'a [f64]),
}

impl<'a> HnnParams<'a> {
    /// Groups tensors given in [`HeadSpec::tensor_shapes`] order.
    pub fn from_tensors(spec: &HeadSpec, tensors: &[&'a Matrix]) -> Result<Self> {
        let shapes = spec.tensor_shapes();
        if shapes.len() != tensors.len() {
            return Err(Error::DimensionMismatch {
                context: "head tensor count",
                expected: shapes.len(),
                found: tensors.len(),
            });
        }
        for ((name, shape), t) in shapes.iter().zip(tensors) {
            if t.shape() != *shape {
                return Err(Error::InvalidConfig(format!(
                    "tensor head.{name}: expected {}x{}, got {}x{}",
                    shape.0,
                    shape.1,
                    t.rows(),
                    t.cols()
                )));
            }
        }
        let pairs: Vec<(&Matrix, &[f64])> =
            tensors.chunks(2).map(|c| (c[0], c[1].data())).collect();
        let (out, hidden) = pairs.split_last().expect("at least the logit layer");
        Ok(Self {
            hidden: hidden.to_vec(),
            out: *out,
        })
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct HeadCache {
    /// Input of each hidden layer.
    pub inputs: Vec<Vec<f64>>,
    pub transformed: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    /// Input of the logit layer.
    pub last: Vec<f64>,
    pub logits: Vec<f64>,
}

/// `y = Wᵀx + b` for `W` stored `D × M`.
fn affine(w: &Matrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for (xi, row) in x.iter().zip(w.row_iter()) {
        if *xi != 0.0 {
            for (o, wv) in y.iter_mut().zip(row) {
                *o += xi * wv;
            }
        }
    }
    y
}

pub(crate) fn head_forward(x: &[f64], p: &HnnParams<'_>, spec: &HeadSpec) -> HeadCache {
    let mut cache = HeadCache::default();
    let mut h = x.to_vec();
    for (w, b) in &p.hidden {
        let t = if spec.hyperbolic {
            let mut t = vec![0.0; h.len()];
            project_log_row(&h, &mut t, &spec.curvature);
            t
        } else {
            h.clone()
        };
        let pre = affine(w, b, &t);
        let next = pre.iter().map(|&z| z.max(0.0)).collect();
        cache.inputs.push(core::mem::replace(&mut h, next));
        cache.transformed.push(t);
        cache.pre.push(pre);
    }
    cache.logits = affine(p.out.0, p.out.1, &h);
    cache.last = h;
    cache
}

pub(crate) struct HeadGrads {
    /// Gradients in storage order.
    pub tensors: Vec<Matrix>,
    pub input: Vec<f64>,
}

fn outer(x: &[f64], g: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(x.len(), g.len());
    for (i, &xi) in x.iter().enumerate() {
        for (o, &gj) in m.row_mut(i).iter_mut().zip(g) {
            *o = xi * gj;
        }
    }
    m
}

/// `W g` for `W` stored `D × M`.
fn back_affine(w: &Matrix, g: &[f64]) -> Vec<f64> {
    w.row_iter().map(|row| dot(row, g)).collect()
}

pub(crate) fn head_backward(
    p: &HnnParams<'_>,
    spec: &HeadSpec,
    cache: &HeadCache,
    grad_logits: &[f64],
) -> HeadGrads {
    let mut rev: Vec<Matrix> = Vec::with_capacity(2 * p.hidden.len() + 2);
    rev.push(Matrix::row_vector(grad_logits));
    rev.push(outer(&cache.last, grad_logits));
    let mut g = back_affine(p.out.0, grad_logits);
    for k in (0..p.hidden.len()).rev() {
        let g_pre: Vec<f64> = g
            .iter()
            .zip(&cache.pre[k])
            .map(|(&gv, &z)| if z > 0.0 { gv } else { 0.0 })
            .collect();
        rev.push(Matrix::row_vector(&g_pre));
        rev.push(outer(&cache.transformed[k], &g_pre));
        let g_t = back_affine(p.hidden[k].0, &g_pre);
        g = if spec.hyperbolic {
            let mut gx = vec![0.0; g_t.len()];
            project_log_row_backward(&cache.inputs[k], &g_t, &mut gx, &spec.curvature);
            gx
        } else {
            g_t
        };
    }
    rev.reverse();
    HeadGrads {
        tensors: rev,
        input: g,
    }
}

/// Logits of the head for a pooled feature vector.
pub fn hnn_forward(x: &[f64], p: &HnnParams<'_>, spec: &HeadSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    if x.len() != spec.dims[0] {
        return Err(Error::DimensionMismatch {
            context: "head input",
            expected: spec.dims[0],
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("head input"));
    }
    if p.hidden.len() != spec.n_hidden() {
        return Err(Error::DimensionMismatch {
            context: "head layers",
            expected: spec.n_hidden(),
            found: p.hidden.len(),
        });
    }
    let mut width = x.len();
    for (k, (w, b)) in p.hidden.iter().enumerate() {
        crate::layers::check_width(k, w.rows(), width)?;
        if b.len() != w.cols() {
            return Err(Error::DimensionMismatch {
                context: "head bias",
                expected: w.cols(),
                found: b.len(),
            });
        }
        width = w.cols();
    }
    crate::layers::check_width(p.hidden.len(), p.out.0.rows(), width)?;
    if p.out.1.len() != p.out.0.cols() {
        return Err(Error::DimensionMismatch {
            context: "logit bias",
            expected: p.out.0.cols(),
            found: p.out.1.len(),
        });
    }
    Ok(head_forward(x, p, spec).logits)
}

/// Stable softmax cross-entropy: `(loss, probabilities)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = logits.iter().map(|l| l - max).collect();
    let lse = libm::log(shifted.iter().map(|&s| libm::exp(s)).sum::<f64>());
    let probs: Vec<f64> = shifted.iter().map(|&s| libm::exp(s - lse)).collect();
    (lse - shifted[label], probs)
}

/// `∂loss/∂logits = p − onehot(label)`.
pub fn cross_entropy_grad(probs: &[f64], label: usize) -> Vec<f64> {
    let mut g = probs.to_vec();
    g[label] -= 1.0;
    g
}
