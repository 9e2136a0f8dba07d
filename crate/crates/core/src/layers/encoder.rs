use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngExt};

use super::attention::{check_attention, AttentionGrads};
use super::conv::{check_conv, ConvGrads};
use super::{
    attention_backward, attention_forward, conv_backward, conv_forward, AttentionCache,
    AttentionHead, AttentionLayerParams, ConvCache, DenseLayerParams, EncoderKind, EncoderSpec,
    NeighborMask,
};
use crate::error::{Error, Result};
use crate::graphs::normalize_adjacency;
use crate::matrix::Matrix;

/// Graph structure as a layer consumes it.
#[derive(Clone, Debug, PartialEq)]
pub enum GraphOperator {
    /// `Â` for convolution layers.
    Normalized(Matrix),
    /// Neighbourhoods for attention layers.
    Mask(NeighborMask),
}

impl GraphOperator {
    pub fn n_nodes(&self) -> usize {
        match self {
            GraphOperator::Normalized(a) => a.rows(),
            GraphOperator::Mask(m) => m.n_nodes(),
        }
    }
}

/// Turns a raw adjacency into the operator the given encoder kind uses.
///
/// Signed FC weights enter the convolution operator by magnitude, since
/// the degree normalisation needs nonnegative weights; attention only looks
/// at which entries are nonzero.
pub fn prepare_operator(kind: EncoderKind, adjacency: &Matrix) -> Result<GraphOperator> {
    if !adjacency.all_finite() {
        return Err(Error::NonFinite("adjacency"));
    }
    if kind.is_attention() {
        Ok(GraphOperator::Mask(NeighborMask::from_adjacency(adjacency)?))
    } else {
        Ok(GraphOperator::Normalized(normalize_adjacency(&adjacency.map(f64::abs))?))
    }
}

#[derive(Clone, Debug)]
pub enum LayerParams<'a> {
    Dense(DenseLayerParams<'a>),
    Attention(AttentionLayerParams<'a>),
}

/// Borrowed weights of a full encoder.
#[derive(Clone, Debug)]
pub struct EncoderParams<'a> {
    pub layers: Vec<LayerParams<'a>>,
}

impl<'a> EncoderParams<'a> {
    /// Groups tensors given in [`EncoderSpec::tensor_shapes`] order.
    pub fn from_tensors(spec: &EncoderSpec, tensors: &[&'a Matrix]) -> Result<Self> {
        let shapes = spec.tensor_shapes();
        if shapes.len() != tensors.len() {
            return Err(Error::DimensionMismatch {
                context: "encoder tensor count",
                expected: shapes.len(),
                found: tensors.len(),
            });
        }
        for ((name, shape), t) in shapes.iter().zip(tensors) {
            if t.shape() != *shape {
                return Err(Error::InvalidConfig(format!(
                    "tensor {name}: expected {}x{}, got {}x{}",
                    shape.0,
                    shape.1,
                    t.rows(),
                    t.cols()
                )));
            }
        }
        let mut it = tensors.iter().copied();
        let mut layers = Vec::with_capacity(spec.n_layers());
        for cfg in &spec.layers {
            if spec.kind.is_attention() {
                let mut heads = Vec::with_capacity(cfg.heads);
                for _ in 0..cfg.heads {
                    let weight = it.next().unwrap();
                    let attention = it.next().unwrap().data();
                    let bias = spec.attention_bias.then(|| it.next().unwrap().data());
                    heads.push(AttentionHead {
                        weight,
                        attention,
                        bias,
                    });
                }
                layers.push(LayerParams::Attention(AttentionLayerParams { heads }));
            } else {
                let weight = it.next().unwrap();
                let bias = it.next().unwrap().data();
                layers.push(LayerParams::Dense(DenseLayerParams { weight, bias }));
            }
        }
        Ok(Self { layers })
    }
}

/// Owned encoder weights in storage order.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderWeights {
    pub spec: EncoderSpec,
    pub tensors: Vec<Matrix>,
}

impl EncoderWeights {
    pub fn init<R: Rng + ?Sized>(spec: EncoderSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let tensors = init_encoder_tensors(&spec, rng)
            .into_iter()
            .map(|(_, t)| t)
            .collect();
        Ok(Self { spec, tensors })
    }

    pub fn params(&self) -> Result<EncoderParams<'_>> {
        let refs: Vec<&Matrix> = self.tensors.iter().collect();
        EncoderParams::from_tensors(&self.spec, &refs)
    }
}

/// Glorot-uniform weights and zero biases, named as in
/// [`EncoderSpec::tensor_shapes`].
pub fn init_encoder_tensors<R: Rng + ?Sized>(
    spec: &EncoderSpec,
    rng: &mut R,
) -> Vec<(String, Matrix)> {
    spec.tensor_shapes()
        .into_iter()
        .map(|(name, (r, c))| {
            let t = if name.ends_with(".bias") {
                Matrix::zeros(r, c)
            } else {
                glorot(r, c, rng)
            };
            (name, t)
        })
        .collect()
}

pub(crate) fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let limit = libm::sqrt(6.0 / (rows + cols) as f64);
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized buffer")
}

#[derive(Clone, Debug)]
pub(crate) enum LayerCache {
    Conv(ConvCache),
    Attention(AttentionCache),
}

#[derive(Clone, Debug)]
pub(crate) struct EncoderCache {
    /// Input of every layer; `inputs[0]` is the node features.
    pub inputs: Vec<Matrix>,
    pub layers: Vec<LayerCache>,
    pub output: Matrix,
}

pub(crate) struct EncoderGrads {
    /// Gradients in storage order.
    pub tensors: Vec<Matrix>,
    pub input: Option<Matrix>,
    /// `∂L/∂Â` summed over layers (convolution kinds only).
    pub operator: Option<Matrix>,
}

fn layer_forward(
    spec: &EncoderSpec,
    k: usize,
    p: &LayerParams<'_>,
    op: &GraphOperator,
    x: &Matrix,
) -> (Matrix, LayerCache) {
    let cfg = &spec.layers[k];
    let hyp = spec.kind.is_hyperbolic();
    match (p, op) {
        (LayerParams::Dense(d), GraphOperator::Normalized(a)) => {
            let (y, c) = conv_forward(a, x, d, cfg, hyp);
            (y, LayerCache::Conv(c))
        }
        (LayerParams::Attention(ap), GraphOperator::Mask(m)) => {
            let (y, c) = attention_forward(m, x, ap, cfg, hyp);
            (y, LayerCache::Attention(c))
        }
        _ => panic!("layer kind and graph operator disagree"),
    }
}

pub(crate) fn encoder_forward(
    spec: &EncoderSpec,
    params: &EncoderParams<'_>,
    op: &GraphOperator,
    x: &Matrix,
) -> EncoderCache {
    let mut cache = EncoderCache {
        inputs: alloc::vec![x.clone()],
        layers: Vec::with_capacity(spec.n_layers()),
        output: Matrix::default(),
    };
    encoder_forward_from(spec, params, op, &mut cache, 0);
    cache
}

/// Recomputes layers `start..` from `cache.inputs[start]`.
pub(crate) fn encoder_forward_from(
    spec: &EncoderSpec,
    params: &EncoderParams<'_>,
    op: &GraphOperator,
    cache: &mut EncoderCache,
    start: usize,
) {
    let n = params.layers.len();
    cache.inputs.truncate(start + 1);
    cache.layers.truncate(start);
    if n == 0 {
        cache.output = cache.inputs[0].clone();
        return;
    }
    for k in start..n {
        let (y, c) = layer_forward(spec, k, &params.layers[k], op, &cache.inputs[k]);
        cache.layers.push(c);
        if k + 1 < n {
            cache.inputs.push(y);
        } else {
            cache.output = y;
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn encoder_backward(
    spec: &EncoderSpec,
    params: &EncoderParams<'_>,
    op: &GraphOperator,
    cache: &EncoderCache,
    grad_out: &Matrix,
    want_input: bool,
    want_operator: bool,
) -> EncoderGrads {
    let n_layers = params.layers.len();
    let mut per_layer: Vec<Vec<Matrix>> = Vec::with_capacity(n_layers);
    let mut grad = grad_out.clone();
    let mut operator = None::<Matrix>;
    let hyp = spec.kind.is_hyperbolic();
    for k in (0..n_layers).rev() {
        let need_input = k > 0 || want_input;
        let cfg = &spec.layers[k];
        let x = &cache.inputs[k];
        match (&params.layers[k], &cache.layers[k], op) {
            (LayerParams::Dense(d), LayerCache::Conv(c), GraphOperator::Normalized(a)) => {
                let ConvGrads {
                    weight,
                    bias,
                    input,
                    operator: g_op,
                } = conv_backward(a, x, d, cfg, hyp, c, &grad, need_input, want_operator);
                per_layer.push(alloc::vec![weight, Matrix::row_vector(&bias)]);
                if let Some(g) = g_op {
                    match operator.as_mut() {
                        Some(acc) => acc.add_scaled(&g, 1.0),
                        None => operator = Some(g),
                    }
                }
                if let Some(g) = input {
                    grad = g;
                }
            }
            (LayerParams::Attention(ap), LayerCache::Attention(c), GraphOperator::Mask(m)) => {
                let AttentionGrads { heads, input } =
                    attention_backward(m, x, ap, cfg, hyp, c, &grad, need_input);
                let mut tensors = Vec::new();
                for h in heads {
                    tensors.push(h.weight);
                    tensors.push(Matrix::row_vector(&h.attention));
                    if let Some(b) = h.bias {
                        tensors.push(Matrix::row_vector(&b));
                    }
                }
                per_layer.push(tensors);
                if let Some(g) = input {
                    grad = g;
                }
            }
            _ => panic!("layer kind and graph operator disagree"),
        }
    }
    per_layer.reverse();
    EncoderGrads {
        tensors: per_layer.into_iter().flatten().collect(),
        input: want_input.then_some(grad),
        operator,
    }
}

/// Runs the encoder on node features `x`, validating every layer.
pub fn encode_graph(
    spec: &EncoderSpec,
    params: &EncoderParams<'_>,
    op: &GraphOperator,
    x: &Matrix,
) -> Result<Matrix> {
    spec.validate()?;
    if params.layers.len() != spec.n_layers() {
        return Err(Error::DimensionMismatch {
            context: "encoder layers",
            expected: spec.n_layers(),
            found: params.layers.len(),
        });
    }
    if op.n_nodes() != x.rows() {
        return Err(Error::DimensionMismatch {
            context: "graph nodes",
            expected: op.n_nodes(),
            found: x.rows(),
        });
    }
    let mut h = x.clone();
    for (k, p) in params.layers.iter().enumerate() {
        match (p, op) {
            (LayerParams::Dense(d), GraphOperator::Normalized(a)) => check_conv(k, a, &h, d)?,
            (LayerParams::Attention(ap), GraphOperator::Mask(m)) => {
                check_attention(k, m, &h, ap)?;
                if ap.heads.len() != spec.layers[k].heads {
                    return Err(Error::DimensionMismatch {
                        context: "attention heads",
                        expected: spec.layers[k].heads,
                        found: ap.heads.len(),
                    });
                }
            }
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "layer {k}: parameters do not match the {} graph operator",
                    spec.kind.name()
                )))
            }
        }
        h = layer_forward(spec, k, p, op, &h).0;
        if !h.all_finite() {
            return Err(Error::NonFinite("encoder activations"));
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::CurvatureConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ring(n: usize) -> Matrix {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            a[(i, (i + 1) % n)] = 1.0;
            a[((i + 1) % n, i)] = 1.0;
        }
        a
    }

    fn features(n: usize, d: usize) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        Matrix::from_vec(n, d, data).unwrap()
    }

    fn small_spec(kind: EncoderKind) -> EncoderSpec {
        let mut s = EncoderSpec::default_for(kind, 3);
        s.dims = alloc::vec![3, 4, 2];
        if kind.is_attention() {
            s.layers[0].heads = 2;
        }
        s.with_geometry(
            if kind.is_hyperbolic() { 0.2 } else { 0.0 },
            CurvatureConfig::new(0.3, 1e-5).unwrap(),
        )
    }

    #[test]
    fn output_width_and_errors() {
        for kind in [EncoderKind::Hkgcn, EncoderKind::Hkgat, EncoderKind::Gcn, EncoderKind::Gat] {
            let spec = small_spec(kind);
            let w = EncoderWeights::init(spec.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let op = prepare_operator(kind, &ring(5)).unwrap();
            let y = encode_graph(&spec, &w.params().unwrap(), &op, &features(5, 3)).unwrap();
            assert_eq!(y.shape(), (5, spec.output_width()));
            let err = encode_graph(&spec, &w.params().unwrap(), &op, &features(5, 4)).unwrap_err();
            assert!(matches!(err, Error::LayerDim { layer: 0, expected: 3, found: 4 }));
        }
    }

    #[test]
    fn mismatched_operator_is_rejected() {
        let spec = small_spec(EncoderKind::Hkgcn);
        let w = EncoderWeights::init(spec.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let op = prepare_operator(EncoderKind::Hkgat, &ring(5)).unwrap();
        assert!(encode_graph(&spec, &w.params().unwrap(), &op, &features(5, 3)).is_err());
    }

    #[test]
    fn bad_tensor_shape_is_named() {
        let spec = small_spec(EncoderKind::Gcn);
        let a = Matrix::zeros(3, 4);
        let b = Matrix::zeros(1, 5);
        let c = Matrix::zeros(4, 2);
        let d = Matrix::zeros(1, 2);
        let err = EncoderParams::from_tensors(&spec, &[&a, &b, &c, &d]).unwrap_err();
        assert!(format!("{err}").contains("layer0.bias"));
    }

    #[test]
    fn euclidean_limit_matches_gcn() {
        // λ = 0 and tiny c: the hyperbolic layer collapses to GCN
        let mut spec = small_spec(EncoderKind::Hkgcn);
        spec = spec.with_geometry(0.0, CurvatureConfig::new(1e-12, 1e-5).unwrap());
        let w = EncoderWeights::init(spec.clone(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let op = prepare_operator(EncoderKind::Hkgcn, &ring(6)).unwrap();
        let x = features(6, 3);
        let y_h = encode_graph(&spec, &w.params().unwrap(), &op, &x).unwrap();
        let gspec = spec.with_kind(EncoderKind::Gcn);
        let y_e = encode_graph(&gspec, &w.params().unwrap(), &op, &x).unwrap();
        assert!(y_h.max_abs_diff(&y_e) < 1e-9);
    }

    #[test]
    fn backward_matches_finite_differences() {
        for kind in [EncoderKind::Hkgcn, EncoderKind::Hkgat] {
            let mut spec = small_spec(kind);
            spec.attention_bias = kind.is_attention();
            let w = EncoderWeights::init(spec.clone(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            let mut w = w;
            // nonzero biases so their gradient path is exercised
            for t in &mut w.tensors {
                if t.rows() == 1 && t.cols() == 4 {
                    t.data_mut().iter_mut().for_each(|v| *v = 0.1);
                }
            }
            let op = prepare_operator(kind, &ring(5)).unwrap();
            let x = features(5, 3);
            let g = features(5, spec.output_width()).map(|v| v * 2.0);
            let loss = |w: &EncoderWeights, x: &Matrix| {
                let c = encoder_forward(&spec, &w.params().unwrap(), &op, x);
                crate::matrix::dot(c.output.data(), g.data())
            };
            let cache = encoder_forward(&spec, &w.params().unwrap(), &op, &x);
            let grads = encoder_backward(&spec, &w.params().unwrap(), &op, &cache, &g, true, false);
            assert_eq!(grads.tensors.len(), w.tensors.len());
            let h = 1e-6;
            for ti in 0..w.tensors.len() {
                for idx in 0..w.tensors[ti].len() {
                    let mut wp = w.clone();
                    wp.tensors[ti].data_mut()[idx] += h;
                    let mut wm = w.clone();
                    wm.tensors[ti].data_mut()[idx] -= h;
                    let fd = (loss(&wp, &x) - loss(&wm, &x)) / (2.0 * h);
                    let an = grads.tensors[ti].data()[idx];
                    assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()), "{kind:?} t{ti}[{idx}] {fd} {an}");
                }
            }
            let gx = grads.input.unwrap();
            for idx in 0..x.len() {
                let mut xp = x.clone();
                xp.data_mut()[idx] += h;
                let mut xm = x.clone();
                xm.data_mut()[idx] -= h;
                let fd = (loss(&w, &xp) - loss(&w, &xm)) / (2.0 * h);
                assert!((fd - gx.data()[idx]).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn operator_gradient_matches_finite_differences() {
        let spec = small_spec(EncoderKind::Hkgcn);
        let w = EncoderWeights::init(spec.clone(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let a = normalize_adjacency(&ring(4)).unwrap();
        let x = features(4, 3);
        let g = features(4, 2);
        let loss = |a: &Matrix| {
            let op = GraphOperator::Normalized(a.clone());
            let c = encoder_forward(&spec, &w.params().unwrap(), &op, &x);
            crate::matrix::dot(c.output.data(), g.data())
        };
        let op = GraphOperator::Normalized(a.clone());
        let cache = encoder_forward(&spec, &w.params().unwrap(), &op, &x);
        let grads = encoder_backward(&spec, &w.params().unwrap(), &op, &cache, &g, false, true);
        let ga = grads.operator.unwrap();
        for idx in 0..a.len() {
            let mut ap = a.clone();
            ap.data_mut()[idx] += 1e-6;
            let mut am = a.clone();
            am.data_mut()[idx] -= 1e-6;
            let fd = (loss(&ap) - loss(&am)) / 2e-6;
            assert!((fd - ga.data()[idx]).abs() < 1e-6);
        }
    }
}
