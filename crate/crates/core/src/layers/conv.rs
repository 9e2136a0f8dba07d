use alloc::vec::Vec;

use super::{check_width, LayerConfig};
use crate::error::{Error, Result};
use crate::manifold::{project_log_rows, project_log_rows_backward};
use crate::matrix::{gemm, matmul, Matrix, Op};

/// Weight `D × M` and bias `M` of a convolution layer.
#[derive(Clone, Copy, Debug)]
pub struct DenseLayerParams<'a> {
    pub weight: &'a Matrix,
    pub bias: &'a [f64],
}

#[derive(Clone, Debug, Default)]
pub(crate) struct ConvCache {
    /// Input after `log₀ᶜ(P(·))` (or the raw input for Euclidean layers).
    pub transformed: Matrix,
    /// `T W + 1bᵀ`.
    pub pre: Matrix,
    /// `Â (T W + 1bᵀ)`.
    pub agg: Matrix,
}

pub(crate) struct ConvGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub input: Option<Matrix>,
    pub operator: Option<Matrix>,
}

pub(crate) fn conv_forward(
    a_norm: &Matrix,
    x: &Matrix,
    p: &DenseLayerParams<'_>,
    cfg: &LayerConfig,
    hyperbolic: bool,
) -> (Matrix, ConvCache) {
    let transformed = if hyperbolic {
        project_log_rows(x, &cfg.curvature)
    } else {
        x.clone()
    };
    let m = p.weight.cols();
    let mut pre = Matrix::zeros(x.rows(), m);
    for i in 0..pre.rows() {
        pre.row_mut(i).copy_from_slice(p.bias);
    }
    gemm(1.0, &transformed, Op::N, p.weight, Op::N, 1.0, &mut pre);
    let agg = matmul(a_norm, Op::N, &pre, Op::N);
    let lambda = if hyperbolic { cfg.lambda } else { 0.0 };
    let out = if lambda == 0.0 {
        agg.map(|z| cfg.activate(z))
    } else {
        agg.map(|z| cfg.activate(z) + lambda * libm::cos(z))
    };
    (
        out,
        ConvCache {
            transformed,
            pre,
            agg,
        },
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    a_norm: &Matrix,
    x: &Matrix,
    p: &DenseLayerParams<'_>,
    cfg: &LayerConfig,
    hyperbolic: bool,
    cache: &ConvCache,
    grad_out: &Matrix,
    want_input: bool,
    want_operator: bool,
) -> ConvGrads {
    let lambda = if hyperbolic { cfg.lambda } else { 0.0 };
    let mut grad_agg = grad_out.clone();
    for (g, &z) in grad_agg.data_mut().iter_mut().zip(cache.agg.data()) {
        *g *= cfg.activate_grad(z) - lambda * libm::sin(z);
    }
    let grad_pre = matmul(a_norm, Op::T, &grad_agg, Op::N);
    let operator = want_operator.then(|| matmul(&grad_agg, Op::N, &cache.pre, Op::T));
    let weight = matmul(&cache.transformed, Op::T, &grad_pre, Op::N);
    let bias = grad_pre.column_sums();
    let input = want_input.then(|| {
        let grad_t = matmul(&grad_pre, Op::N, p.weight, Op::T);
        if hyperbolic {
            project_log_rows_backward(x, &grad_t, &cfg.curvature)
        } else {
            grad_t
        }
    });
    ConvGrads {
        weight,
        bias,
        input,
        operator,
    }
}

pub(crate) fn check_conv(
    layer: usize,
    a_norm: &Matrix,
    x: &Matrix,
    p: &DenseLayerParams<'_>,
) -> Result<()> {
    if !a_norm.is_square() || a_norm.rows() != x.rows() {
        return Err(Error::DimensionMismatch {
            context: "normalized adjacency",
            expected: x.rows(),
            found: a_norm.cols(),
        });
    }
    check_width(layer, p.weight.rows(), x.cols())?;
    if p.bias.len() != p.weight.cols() {
        return Err(Error::DimensionMismatch {
            context: "bias length",
            expected: p.weight.cols(),
            found: p.bias.len(),
        });
    }
    Ok(())
}

/// Single HKGCN layer on a normalised adjacency.
pub fn hkgcn_layer(
    a_norm: &Matrix,
    x: &Matrix,
    p: &DenseLayerParams<'_>,
    cfg: &LayerConfig,
) -> Result<Matrix> {
    check_conv(0, a_norm, x, p)?;
    Ok(conv_forward(a_norm, x, p, cfg, true).0)
}

/// Euclidean GCN layer `f(Â(XW + 1bᵀ))`, same bias placement as HKGCN.
pub fn gcn_layer(
    a_norm: &Matrix,
    x: &Matrix,
    p: &DenseLayerParams<'_>,
    cfg: &LayerConfig,
) -> Result<Matrix> {
    check_conv(0, a_norm, x, p)?;
    Ok(conv_forward(a_norm, x, p, cfg, false).0)
}
