//! Graph encoders: HKGCN and HKGAT layers, their Euclidean GCN/GAT
//! counterparts, and stacked encoders Ψ.
//!
//! Hyperbolic layers map every input row through `log₀ᶜ(P(·))` before the
//! linear transform, then add a `λ·cos` branch to the usual activation:
//!
//! ```text
//! HKGCN:  Y = f(Â(log₀ᶜ(P(X))W + 1bᵀ)) + λ cos(Â(log₀ᶜ(P(X))W + 1bᵀ))
//! HKGAT:  u_j = W log₀ᶜ(P(x_j)) + b,  e_ij = LeakyReLU(aᵀ[u_i ‖ u_j]),
//!         x'_i = Σ_j softmax_j(e_ij) u_j,  y_i = ELU(x'_i) + λ cos(x'_i)
//! ```
//!
//! The Euclidean kinds skip the map and the cosine branch, so with `λ = 0`
//! and `c → 0` each hyperbolic layer degenerates to its counterpart.

mod attention;
mod conv;
mod encoder;

pub use attention::{
    attention_coefficients, gat_layer, hkgat_layer, AttentionHead, AttentionLayerParams,
    NeighborMask,
};
pub use conv::{gcn_layer, hkgcn_layer, DenseLayerParams};
pub use encoder::{
    encode_graph, init_encoder_tensors, prepare_operator, EncoderParams, EncoderWeights,
    GraphOperator, LayerParams,
};

pub(crate) use attention::{attention_backward, attention_forward, average_heads, AttentionCache};
pub(crate) use conv::{conv_backward, conv_forward, ConvCache};
pub(crate) use encoder::{
    encoder_backward, encoder_forward, encoder_forward_from, glorot, EncoderCache, LayerCache,
};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::CurvatureConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Hkgcn,
    Hkgat,
    Gcn,
    Gat,
}

impl EncoderKind {
    pub fn is_hyperbolic(self) -> bool {
        matches!(self, EncoderKind::Hkgcn | EncoderKind::Hkgat)
    }

    pub fn is_attention(self) -> bool {
        matches!(self, EncoderKind::Hkgat | EncoderKind::Gat)
    }

    pub fn euclidean(self) -> Self {
        match self {
            EncoderKind::Hkgcn | EncoderKind::Gcn => EncoderKind::Gcn,
            EncoderKind::Hkgat | EncoderKind::Gat => EncoderKind::Gat,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Hkgcn => "hkgcn",
            EncoderKind::Hkgat => "hkgat",
            EncoderKind::Gcn => "gcn",
            EncoderKind::Gat => "gat",
        }
    }
}

impl core::str::FromStr for EncoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hkgcn" => Ok(Self::Hkgcn),
            "hkgat" => Ok(Self::Hkgat),
            "gcn" => Ok(Self::Gcn),
            "gat" => Ok(Self::Gat),
            other => Err(Error::InvalidConfig(format!("unknown encoder kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerActivation {
    Relu,
    Elu,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub curvature: CurvatureConfig,
    /// Scale of the cosine branch.
    pub lambda: f64,
    pub heads: usize,
    pub activation: LayerActivation,
    pub elu_alpha: f64,
    /// Negative slope of the attention LeakyReLU.
    pub leaky_slope: f64,
}

impl LayerConfig {
    pub fn convolution() -> Self {
        Self {
            curvature: CurvatureConfig::default(),
            lambda: 0.01,
            heads: 1,
            activation: LayerActivation::Relu,
            elu_alpha: 1.0,
            leaky_slope: 0.2,
        }
    }

    pub fn attention(heads: usize) -> Self {
        Self {
            heads,
            activation: LayerActivation::Elu,
            ..Self::convolution()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("lambda must be ≥ 0, got {}", self.lambda)));
        }
        if self.heads == 0 {
            return Err(Error::InvalidConfig("heads must be ≥ 1".into()));
        }
        if !(self.elu_alpha > 0.0) {
            return Err(Error::InvalidConfig("elu_alpha must be > 0".into()));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::InvalidConfig("leaky_slope must lie in (0, 1)".into()));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn activate(&self, z: f64) -> f64 {
        match self.activation {
            LayerActivation::Relu => z.max(0.0),
            LayerActivation::Elu => {
                if z >= 0.0 {
                    z
                } else {
                    self.elu_alpha * libm::expm1(z)
                }
            }
        }
    }

    /// Derivative with `ReLU′(0) = 0`.
    #[inline]
    pub(crate) fn activate_grad(&self, z: f64) -> f64 {
        match self.activation {
            LayerActivation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            LayerActivation::Elu => {
                if z >= 0.0 {
                    1.0
                } else {
                    self.elu_alpha * libm::exp(z)
                }
            }
        }
    }
}

/// Layer stack of one encoder Ψ.
///
/// `dims[0]` is the input width and `dims[k + 1]` the per-head output width of
/// layer `k`; heads are concatenated, so layer `k + 1` consumes
/// `heads_k · dims[k + 1]` columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub dims: Vec<usize>,
    pub layers: Vec<LayerConfig>,
    /// Bias on the attention transform (`u_j = W x_j + b`); off by default.
    #[serde(default)]
    pub attention_bias: bool,
}

impl EncoderSpec {
    pub fn new(
        kind: EncoderKind,
        dims: Vec<usize>,
        layers: Vec<LayerConfig>,
        attention_bias: bool,
    ) -> Result<Self> {
        let spec = Self {
            kind,
            dims,
            layers,
            attention_bias,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Two layers of width 64; attention kinds use 4 heads then 1.
    pub fn default_for(kind: EncoderKind, input_dim: usize) -> Self {
        let layers = if kind.is_attention() {
            vec![LayerConfig::attention(4), LayerConfig::attention(1)]
        } else {
            vec![LayerConfig::convolution(); 2]
        };
        let mut spec = Self {
            kind,
            dims: vec![input_dim, 64, 64],
            layers,
            attention_bias: false,
        };
        if !kind.is_hyperbolic() {
            spec.layers.iter_mut().for_each(|l| l.lambda = 0.0);
        }
        spec
    }

    /// Same layer stack with the given kind (weights stay compatible).
    pub fn with_kind(&self, kind: EncoderKind) -> Self {
        let mut s = self.clone();
        s.kind = kind;
        s
    }

    pub fn with_geometry(mut self, lambda: f64, curvature: CurvatureConfig) -> Self {
        for l in &mut self.layers {
            l.lambda = lambda;
            l.curvature = curvature;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.len() != self.layers.len() + 1 {
            return Err(Error::InvalidConfig(format!(
                "{} layer configs need {} dims, got {}",
                self.layers.len(),
                self.layers.len() + 1,
                self.dims.len()
            )));
        }
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidConfig("layer dims must be ≥ 1".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            l.validate()?;
            if !self.kind.is_attention() && l.heads != 1 {
                return Err(Error::InvalidConfig(format!(
                    "layer {k}: {} layers are single-head",
                    self.kind.name()
                )));
            }
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Width of the matrix fed into layer `k`.
    pub fn input_width(&self, k: usize) -> usize {
        if k == 0 {
            self.dims[0]
        } else {
            self.layers[k - 1].heads * self.dims[k]
        }
    }

    pub fn output_width(&self) -> usize {
        match self.layers.last() {
            Some(l) => l.heads * self.dims[self.layers.len()],
            None => self.dims[0],
        }
    }

    /// Shapes of the trainable tensors in storage order.
    pub fn tensor_shapes(&self) -> Vec<(alloc::string::String, (usize, usize))> {
        let mut out = Vec::new();
        for k in 0..self.n_layers() {
            let (d, m) = (self.input_width(k), self.dims[k + 1]);
            if self.kind.is_attention() {
                for h in 0..self.layers[k].heads {
                    out.push((format!("layer{k}.head{h}.weight"), (m, d)));
                    out.push((format!("layer{k}.head{h}.attention"), (1, 2 * m)));
                    if self.attention_bias {
                        out.push((format!("layer{k}.head{h}.bias"), (1, m)));
                    }
                }
            } else {
                out.push((format!("layer{k}.weight"), (d, m)));
                out.push((format!("layer{k}.bias"), (1, m)));
            }
        }
        out
    }

    /// Number of tensors owned by layer `k`.
    pub(crate) fn tensors_in_layer(&self, k: usize) -> usize {
        if self.kind.is_attention() {
            self.layers[k].heads * if self.attention_bias { 3 } else { 2 }
        } else {
            2
        }
    }
}

pub(crate) fn check_width(layer: usize, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LayerDim {
            layer,
            expected,
            found,
        });
    }
    Ok(())
}
