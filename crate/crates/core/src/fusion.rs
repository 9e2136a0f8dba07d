//! SC-FC coupling: a cross-modality graph whose adjacency holds cosine
//! similarities between FC and SC node embeddings, and whose node features
//! are the two normalised embeddings side by side.
//!
//! A_C is signed and generally asymmetric. A convolution second stage uses
//! `((A_C + A_Cᵀ)/2 + 1)/2` so the degree normalisation sees nonnegative
//! symmetric weights; an attention second stage takes the nonzero pattern of
//! A_C (normally every pair) as its neighbourhoods.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graphs::{normalize_backward, normalize_unchecked};
use crate::layers::{
    encode_graph, encoder_backward, encoder_forward, EncoderCache, EncoderParams, EncoderSpec,
    GraphOperator, NeighborMask,
};
use crate::matrix::{gemm, matmul, norm, Matrix, Op};

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingGraph {
    pub adjacency: Matrix,
    pub features: Matrix,
}

impl CouplingGraph {
    pub fn new(xf: &Matrix, xs: &Matrix) -> Result<Self> {
        Ok(Self {
            adjacency: coupling_adjacency(xf, xs)?,
            features: coupling_features(xf, xs)?,
        })
    }
}

/// Row-wise L2 normalisation; zero rows stay zero. Also returns the norms.
pub(crate) fn row_normalize_with_norms(x: &Matrix) -> (Matrix, Vec<f64>) {
    let mut out = x.clone();
    let mut norms = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let n = norm(x.row(i));
        if n > 0.0 {
            out.row_mut(i).iter_mut().for_each(|v| *v /= n);
        }
        norms.push(n);
    }
    (out, norms)
}

pub fn row_normalize(x: &Matrix) -> Matrix {
    row_normalize_with_norms(x).0
}

/// Adjoint of [`row_normalize`]: `(g − (y·g) y) / ‖x‖`, zero for zero rows.
fn row_normalize_backward(y: &Matrix, norms: &[f64], grad: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(y.rows(), y.cols());
    for (i, &n) in norms.iter().enumerate() {
        if n == 0.0 {
            continue;
        }
        let yi = y.row(i);
        let gi = grad.row(i);
        let proj = crate::matrix::dot(yi, gi);
        for ((o, &g), &yv) in out.row_mut(i).iter_mut().zip(gi).zip(yi) {
            *o = (g - proj * yv) / n;
        }
    }
    out
}

fn check_pair(xf: &Matrix, xs: &Matrix) -> Result<()> {
    if xf.rows() != xs.rows() {
        return Err(Error::DimensionMismatch {
            context: "coupling rows",
            expected: xf.rows(),
            found: xs.rows(),
        });
    }
    Ok(())
}

/// `A_C[i][j]` = cosine similarity of FC row `i` and SC row `j`.
pub fn coupling_adjacency(xf: &Matrix, xs: &Matrix) -> Result<Matrix> {
    check_pair(xf, xs)?;
    if xf.cols() != xs.cols() {
        return Err(Error::DimensionMismatch {
            context: "coupling embedding width",
            expected: xf.cols(),
            found: xs.cols(),
        });
    }
    Ok(matmul(&row_normalize(xf), Op::N, &row_normalize(xs), Op::T))
}

/// `X_C = [row_normalize(xf) | row_normalize(xs)]`.
pub fn coupling_features(xf: &Matrix, xs: &Matrix) -> Result<Matrix> {
    check_pair(xf, xs)?;
    row_normalize(xf).hconcat(&row_normalize(xs))
}

/// `((A + Aᵀ)/2 + 1)/2`: symmetric with entries in `[0, 1]`.
pub fn shifted_symmetric(a: &Matrix) -> Matrix {
    let n = a.rows();
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = ((a[(i, j)] + a[(j, i)]) * 0.5 + 1.0) * 0.5;
        }
    }
    s
}

/// Graph operator of the coupling stage for the given encoder.
pub fn coupling_operator(spec: &EncoderSpec, a_c: &Matrix) -> Result<GraphOperator> {
    if spec.kind.is_attention() {
        Ok(GraphOperator::Mask(NeighborMask::from_adjacency(a_c)?))
    } else {
        Ok(GraphOperator::Normalized(normalize_unchecked(&shifted_symmetric(a_c)).0))
    }
}

/// Builds the coupling graph of two embeddings and encodes it with the
/// second-stage encoder.
pub fn couple_and_encode(
    xf: &Matrix,
    xs: &Matrix,
    spec: &EncoderSpec,
    params: &EncoderParams<'_>,
) -> Result<Matrix> {
    let g = CouplingGraph::new(xf, xs)?;
    if g.adjacency.data().iter().any(|v| v.abs() > 1.0 + 1e-9) {
        return Err(Error::NonFinite("coupling adjacency"));
    }
    let op = coupling_operator(spec, &g.adjacency)?;
    encode_graph(spec, params, &op, &g.features)
}

#[derive(Clone, Debug)]
pub(crate) struct CouplingCache {
    pub f_hat: Matrix,
    pub f_norms: Vec<f64>,
    pub s_hat: Matrix,
    pub s_norms: Vec<f64>,
    /// Shifted symmetric weights and `d^{-1/2}` (convolution stages only).
    pub shifted: Option<(Matrix, Vec<f64>)>,
    pub op: GraphOperator,
    pub encoder: EncoderCache,
}

pub(crate) fn coupling_forward(
    xf: &Matrix,
    xs: &Matrix,
    spec: &EncoderSpec,
    params: &EncoderParams<'_>,
) -> CouplingCache {
    let (f_hat, f_norms) = row_normalize_with_norms(xf);
    let (s_hat, s_norms) = row_normalize_with_norms(xs);
    let a_c = matmul(&f_hat, Op::N, &s_hat, Op::T);
    let (op, shifted) = if spec.kind.is_attention() {
        let mask = NeighborMask::from_adjacency(&a_c).expect("square by construction");
        (GraphOperator::Mask(mask), None)
    } else {
        let s = shifted_symmetric(&a_c);
        let (a_norm, inv_sqrt) = normalize_unchecked(&s);
        (GraphOperator::Normalized(a_norm), Some((s, inv_sqrt)))
    };
    let features = f_hat.hconcat(&s_hat).expect("same rows");
    let encoder = encoder_forward(spec, params, &op, &features);
    CouplingCache {
        f_hat,
        f_norms,
        s_hat,
        s_norms,
        shifted,
        op,
        encoder,
    }
}

pub(crate) struct CouplingGrads {
    pub tensors: Vec<Matrix>,
    pub xf: Matrix,
    pub xs: Matrix,
}

/// Backpropagates through the second-stage encoder, the coupling
/// adjacency (convolution stages) and the row normalisations.
pub(crate) fn coupling_backward(
    spec: &EncoderSpec,
    params: &EncoderParams<'_>,
    cache: &CouplingCache,
    grad_out: &Matrix,
) -> CouplingGrads {
    let want_op = cache.shifted.is_some();
    let g = encoder_backward(spec, params, &cache.op, &cache.encoder, grad_out, true, want_op);
    let grad_features = g.input.expect("input gradient requested");
    let mf = cache.f_hat.cols();
    let mut grad_f_hat = grad_features.column_block(0, mf);
    let mut grad_s_hat = grad_features.column_block(mf, cache.s_hat.cols());
    if let (Some((s, inv_sqrt)), Some(g_norm)) = (&cache.shifted, g.operator.as_ref()) {
        let g_s = normalize_backward(s, inv_sqrt, g_norm);
        let n = g_s.rows();
        let mut g_a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                g_a[(i, j)] = 0.25 * (g_s[(i, j)] + g_s[(j, i)]);
            }
        }
        gemm(1.0, &g_a, Op::N, &cache.s_hat, Op::N, 1.0, &mut grad_f_hat);
        gemm(1.0, &g_a, Op::T, &cache.f_hat, Op::N, 1.0, &mut grad_s_hat);
    }
    CouplingGrads {
        tensors: g.tensors,
        xf: row_normalize_backward(&cache.f_hat, &cache.f_norms, &grad_f_hat),
        xs: row_normalize_backward(&cache.s_hat, &cache.s_norms, &grad_s_hat),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{EncoderKind, EncoderWeights};
    use crate::manifold::CurvatureConfig;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, m: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(n, m, data).unwrap()
    }

    #[test]
    fn hand_adjacency() {
        let r = core::f64::consts::FRAC_1_SQRT_2;
        let xf = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let xs = Matrix::from_rows(&[[r, r], [r, -r]]).unwrap();
        let a = coupling_adjacency(&xf, &xs).unwrap();
        let expect = [r, r, r, -r];
        for (v, e) in a.data().iter().zip(expect) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn self_similarity_and_orthogonality() {
        let x = Matrix::from_rows(&[[3.0, 4.0], [-1.0, 2.0], [0.5, 0.0]]).unwrap();
        let a = coupling_adjacency(&x, &x).unwrap();
        for i in 0..3 {
            assert!((a[(i, i)] - 1.0).abs() < 1e-15);
        }
        let xf = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let xs = Matrix::from_rows(&[[0.0, 5.0]]).unwrap();
        assert_eq!(coupling_adjacency(&xf, &xs).unwrap()[(0, 0)], 0.0);
    }

    #[test]
    fn features_and_zero_rows() {
        let xf = Matrix::from_rows(&[[0.6, 0.8], [0.0, 0.0]]).unwrap();
        let xs = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        let f = coupling_features(&xf, &xs).unwrap();
        assert_eq!(f.shape(), (2, 5));
        assert_eq!(f.row(0), &[0.6, 0.8, 1.0, 0.0, 0.0]);
        assert_eq!(f.row(1), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(coupling_adjacency(&xf, &xs).is_err());
        assert!(coupling_features(&xf, &Matrix::zeros(3, 2)).is_err());
    }

    fn second_stage(kind: EncoderKind, width: usize) -> (EncoderSpec, EncoderWeights) {
        let mut spec = EncoderSpec::default_for(kind, 2 * width);
        spec.dims = alloc::vec![2 * width, 5, 3];
        if kind.is_attention() {
            spec.layers[0].heads = 2;
        }
        if kind.is_hyperbolic() {
            spec = spec.with_geometry(0.1, CurvatureConfig::new(0.5, 1e-5).unwrap());
        }
        let w = EncoderWeights::init(spec.clone(), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        (spec, w)
    }

    #[test]
    fn euclidean_limit_of_coupling_stage() {
        let xf = random(6, 4, 1);
        let xs = random(6, 4, 2);
        let (spec, w) = second_stage(EncoderKind::Hkgcn, 4);
        let spec = spec.with_geometry(0.0, CurvatureConfig::new(1e-12, 1e-5).unwrap());
        let h = couple_and_encode(&xf, &xs, &spec, &w.params().unwrap()).unwrap();
        let e = couple_and_encode(&xf, &xs, &spec.with_kind(EncoderKind::Gcn), &w.params().unwrap())
            .unwrap();
        assert!(h.max_abs_diff(&e) < 1e-9);
    }

    #[test]
    fn backward_matches_finite_differences() {
        for kind in [EncoderKind::Hkgcn, EncoderKind::Hkgat] {
            let xf = random(5, 4, 3);
            let xs = random(5, 4, 4);
            let (spec, w) = second_stage(kind, 4);
            let p = w.params().unwrap();
            let g = random(5, spec.output_width(), 5);
            let loss = |xf: &Matrix, xs: &Matrix| {
                let c = coupling_forward(xf, xs, &spec, &p);
                crate::matrix::dot(c.encoder.output.data(), g.data())
            };
            let cache = coupling_forward(&xf, &xs, &spec, &p);
            let grads = coupling_backward(&spec, &p, &cache, &g);
            let h = 1e-6;
            for (which, gx) in [(0, &grads.xf), (1, &grads.xs)] {
                for idx in 0..xf.len() {
                    let (mut fp, mut sp) = (xf.clone(), xs.clone());
                    let (mut fm, mut sm) = (xf.clone(), xs.clone());
                    if which == 0 {
                        fp.data_mut()[idx] += h;
                        fm.data_mut()[idx] -= h;
                    } else {
                        sp.data_mut()[idx] += h;
                        sm.data_mut()[idx] -= h;
                    }
                    let fd = (loss(&fp, &sp) - loss(&fm, &sm)) / (2.0 * h);
                    let an = gx.data()[idx];
                    assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()), "{kind:?} {which} {idx}: {fd} {an}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn adjacency_bounded_and_equivariant(seed in 0u64..1000, n in 2usize..7) {
            let xf = random(n, 3, seed);
            let xs = random(n, 3, seed + 7);
            let a = coupling_adjacency(&xf, &xs).unwrap();
            prop_assert!(a.data().iter().all(|v| v.abs() <= 1.0 + 1e-9));
            let aa = coupling_adjacency(&xf, &xf).unwrap();
            for i in 0..n {
                prop_assert!((aa[(i, i)] - 1.0).abs() < 1e-12);
            }
            let perm: Vec<usize> = (0..n).rev().collect();
            for kind in [EncoderKind::Hkgcn, EncoderKind::Hkgat] {
                let (spec, w) = second_stage(kind, 3);
                let p = w.params().unwrap();
                let y = couple_and_encode(&xf, &xs, &spec, &p).unwrap();
                let yp = couple_and_encode(&xf.permute_rows(&perm), &xs.permute_rows(&perm), &spec, &p)
                    .unwrap();
                prop_assert!(yp.max_abs_diff(&y.permute_rows(&perm)) < 1e-10);
            }
        }
    }
}
