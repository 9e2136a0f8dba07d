use alloc::vec;
use alloc::vec::Vec;

use super::{check_width, LayerConfig};
use crate::error::{Error, Result};
use crate::manifold::{project_log_rows, project_log_rows_backward};
use crate::matrix::{gemm, matmul, Matrix, Op};

/// One attention head: transform `W` (`M × D`), attention vector
/// `a = [a_src ‖ a_dst]` of length `2M`, optional bias of length `M`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionHead<'a> {
    pub weight: &'a Matrix,
    pub attention: &'a [f64],
    pub bias: Option<&'a [f64]>,
}

#[derive(Clone, Debug)]
pub struct AttentionLayerParams<'a> {
    pub heads: Vec<AttentionHead<'a>>,
}

/// Neighbourhoods `N(i)` used by the attention softmax; every node is its
/// own neighbour.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborMask {
    n: usize,
    allowed: Vec<bool>,
}

impl NeighborMask {
    /// Nonzero pattern of `adjacency` plus self-loops.
    pub fn from_adjacency(adjacency: &Matrix) -> Result<Self> {
        if !adjacency.is_square() {
            return Err(Error::DimensionMismatch {
                context: "attention mask",
                expected: adjacency.rows(),
                found: adjacency.cols(),
            });
        }
        let n = adjacency.rows();
        let mut allowed: Vec<bool> = adjacency.data().iter().map(|&v| v != 0.0).collect();
        for i in 0..n {
            allowed[i * n + i] = true;
        }
        Ok(Self { n, allowed })
    }

    pub fn full(n: usize) -> Self {
        Self {
            n,
            allowed: vec![true; n * n],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.n + j]
    }

    pub fn edge_count(&self) -> usize {
        self.allowed.iter().filter(|&&a| a).count()
    }
}

#[derive(Clone, Debug, Default)]
pub(crate) struct HeadCache {
    /// `u_j` stacked as rows.
    pub u: Matrix,
    /// Scores before LeakyReLU; zero outside the mask.
    pub pre: Matrix,
    pub alpha: Matrix,
    /// `x' = α U`.
    pub agg: Matrix,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct AttentionCache {
    pub transformed: Matrix,
    pub heads: Vec<HeadCache>,
}

pub(crate) struct HeadGrads {
    pub weight: Matrix,
    pub attention: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

pub(crate) struct AttentionGrads {
    pub heads: Vec<HeadGrads>,
    pub input: Option<Matrix>,
}

fn head_forward(
    mask: &NeighborMask,
    t: &Matrix,
    head: &AttentionHead<'_>,
    cfg: &LayerConfig,
) -> HeadCache {
    let n = t.rows();
    let m = head.weight.rows();
    let mut u = Matrix::zeros(n, m);
    if let Some(b) = head.bias {
        for i in 0..n {
            u.row_mut(i).copy_from_slice(b);
        }
    }
    gemm(1.0, t, Op::N, head.weight, Op::T, 1.0, &mut u);
    let (a_src, a_dst) = head.attention.split_at(m);
    let s_src: Vec<f64> = u.row_iter().map(|r| crate::matrix::dot(r, a_src)).collect();
    let s_dst: Vec<f64> = u.row_iter().map(|r| crate::matrix::dot(r, a_dst)).collect();
    let mut pre = Matrix::zeros(n, n);
    let mut alpha = Matrix::zeros(n, n);
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for j in 0..n {
            if mask.contains(i, j) {
                let p = s_src[i] + s_dst[j];
                pre[(i, j)] = p;
                let e = if p > 0.0 { p } else { cfg.leaky_slope * p };
                alpha[(i, j)] = e;
                max = max.max(e);
            }
        }
        let mut total = 0.0;
        for j in 0..n {
            if mask.contains(i, j) {
                let w = libm::exp(alpha[(i, j)] - max);
                alpha[(i, j)] = w;
                total += w;
            }
        }
        alpha.row_mut(i).iter_mut().for_each(|a| *a /= total);
    }
    let agg = matmul(&alpha, Op::N, &u, Op::N);
    HeadCache {
        u,
        pre,
        alpha,
        agg,
    }
}

pub(crate) fn attention_forward(
    mask: &NeighborMask,
    x: &Matrix,
    p: &AttentionLayerParams<'_>,
    cfg: &LayerConfig,
    hyperbolic: bool,
) -> (Matrix, AttentionCache) {
    let transformed = if hyperbolic {
        project_log_rows(x, &cfg.curvature)
    } else {
        x.clone()
    };
    let lambda = if hyperbolic { cfg.lambda } else { 0.0 };
    let heads: Vec<HeadCache> = p
        .heads
        .iter()
        .map(|h| head_forward(mask, &transformed, h, cfg))
        .collect();
    let m = p.heads[0].weight.rows();
    let mut out = Matrix::zeros(x.rows(), m * heads.len());
    for (h, hc) in heads.iter().enumerate() {
        for i in 0..x.rows() {
            let dst = &mut out.row_mut(i)[h * m..(h + 1) * m];
            for (o, &z) in dst.iter_mut().zip(hc.agg.row(i)) {
                *o = cfg.activate(z) + lambda * libm::cos(z);
            }
        }
    }
    (out, AttentionCache { transformed, heads })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_backward(
    mask: &NeighborMask,
    x: &Matrix,
    p: &AttentionLayerParams<'_>,
    cfg: &LayerConfig,
    hyperbolic: bool,
    cache: &AttentionCache,
    grad_out: &Matrix,
    want_input: bool,
) -> AttentionGrads {
    let n = x.rows();
    let lambda = if hyperbolic { cfg.lambda } else { 0.0 };
    let t = &cache.transformed;
    let mut grad_t = want_input.then(|| Matrix::zeros(n, t.cols()));
    let mut heads = Vec::with_capacity(p.heads.len());
    for (h, (head, hc)) in p.heads.iter().zip(&cache.heads).enumerate() {
        let m = head.weight.rows();
        let mut grad_agg = grad_out.column_block(h * m, m);
        for (g, &z) in grad_agg.data_mut().iter_mut().zip(hc.agg.data()) {
            *g *= cfg.activate_grad(z) - lambda * libm::sin(z);
        }
        let grad_alpha = matmul(&grad_agg, Op::N, &hc.u, Op::T);
        let mut grad_u = matmul(&hc.alpha, Op::T, &grad_agg, Op::N);

        let mut grad_src = vec![0.0; n];
        let mut grad_dst = vec![0.0; n];
        for i in 0..n {
            let a = hc.alpha.row(i);
            let ga = grad_alpha.row(i);
            let inner: f64 = (0..n).filter(|&j| mask.contains(i, j)).map(|j| a[j] * ga[j]).sum();
            for j in 0..n {
                if mask.contains(i, j) {
                    let ge = a[j] * (ga[j] - inner);
                    let gp = if hc.pre[(i, j)] > 0.0 { ge } else { cfg.leaky_slope * ge };
                    grad_src[i] += gp;
                    grad_dst[j] += gp;
                }
            }
        }
        let (a_src, a_dst) = head.attention.split_at(m);
        let mut grad_attention = vec![0.0; 2 * m];
        for i in 0..n {
            let ui = hc.u.row(i);
            let (gs, gd) = grad_attention.split_at_mut(m);
            for k in 0..m {
                gs[k] += grad_src[i] * ui[k];
                gd[k] += grad_dst[i] * ui[k];
            }
            let gu = grad_u.row_mut(i);
            for k in 0..m {
                gu[k] += grad_src[i] * a_src[k] + grad_dst[i] * a_dst[k];
            }
        }
        let weight = matmul(&grad_u, Op::T, t, Op::N);
        let bias = head.bias.map(|_| grad_u.column_sums());
        if let Some(gt) = grad_t.as_mut() {
            gemm(1.0, &grad_u, Op::N, head.weight, Op::N, 1.0, gt);
        }
        heads.push(HeadGrads {
            weight,
            attention: grad_attention,
            bias,
        });
    }
    let input = grad_t.map(|gt| {
        if hyperbolic {
            project_log_rows_backward(x, &gt, &cfg.curvature)
        } else {
            gt
        }
    });
    AttentionGrads { heads, input }
}

pub(crate) fn check_attention(
    layer: usize,
    mask: &NeighborMask,
    x: &Matrix,
    p: &AttentionLayerParams<'_>,
) -> Result<()> {
    if mask.n_nodes() != x.rows() {
        return Err(Error::DimensionMismatch {
            context: "attention mask",
            expected: x.rows(),
            found: mask.n_nodes(),
        });
    }
    let first = p.heads.first().ok_or(Error::Empty("attention heads"))?;
    let m = first.weight.rows();
    for head in &p.heads {
        check_width(layer, head.weight.cols(), x.cols())?;
        if head.weight.rows() != m || head.attention.len() != 2 * m {
            return Err(Error::DimensionMismatch {
                context: "attention vector",
                expected: 2 * m,
                found: head.attention.len(),
            });
        }
        if let Some(b) = head.bias {
            if b.len() != m {
                return Err(Error::DimensionMismatch {
                    context: "attention bias",
                    expected: m,
                    found: b.len(),
                });
            }
        }
    }
    Ok(())
}

/// Single HKGAT layer; heads are concatenated.
pub fn hkgat_layer(
    mask: &NeighborMask,
    x: &Matrix,
    p: &AttentionLayerParams<'_>,
    cfg: &LayerConfig,
) -> Result<Matrix> {
    check_attention(0, mask, x, p)?;
    Ok(attention_forward(mask, x, p, cfg, true).0)
}

/// Euclidean GAT layer: no log map and no cosine branch.
pub fn gat_layer(
    mask: &NeighborMask,
    x: &Matrix,
    p: &AttentionLayerParams<'_>,
    cfg: &LayerConfig,
) -> Result<Matrix> {
    check_attention(0, mask, x, p)?;
    Ok(attention_forward(mask, x, p, cfg, false).0)
}

/// Attention weights `α_ij` averaged over heads.
pub fn attention_coefficients(
    mask: &NeighborMask,
    x: &Matrix,
    p: &AttentionLayerParams<'_>,
    cfg: &LayerConfig,
    hyperbolic: bool,
) -> Result<Matrix> {
    check_attention(0, mask, x, p)?;
    let (_, cache) = attention_forward(mask, x, p, cfg, hyperbolic);
    Ok(average_heads(&cache))
}

pub(crate) fn average_heads(cache: &AttentionCache) -> Matrix {
    let mut avg = cache.heads[0].alpha.clone();
    for hc in &cache.heads[1..] {
        avg.add_scaled(&hc.alpha, 1.0);
    }
    avg.scale(1.0 / cache.heads.len() as f64);
    avg
}
