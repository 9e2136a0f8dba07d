use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{coupling_backward, coupling_forward, CouplingCache};
use crate::graphs::{Modality, Subject};
use crate::layers::{
    encoder_backward, encoder_forward, init_encoder_tensors, prepare_operator, EncoderCache,
    EncoderKind, EncoderParams, EncoderSpec, GraphOperator,
};
use crate::manifold::CurvatureConfig;
use crate::matrix::Matrix;
use crate::predictor::{
    cross_entropy_grad, head_backward, head_forward, softmax_cross_entropy, HeadCache, HeadSpec,
    HnnParams,
};

/// Full pipeline: two modality encoders, the coupling-stage encoder and
/// the prediction head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// First and second modality; FC and SC unless ASL replaces SC.
    pub modalities: [Modality; 2],
    pub fc: EncoderSpec,
    pub sc: EncoderSpec,
    pub coupling: EncoderSpec,
    pub head: HeadSpec,
}

impl ModelSpec {
    /// Default architecture for a backbone: width-64 encoders, a coupling
    /// stage on the 128-wide concatenation, and a 32-32 head.
    pub fn default_for(kind: EncoderKind, fc_input: usize, sc_input: usize) -> Self {
        let fc = EncoderSpec::default_for(kind, fc_input);
        let sc = EncoderSpec::default_for(kind, sc_input);
        let coupling = EncoderSpec::default_for(kind, fc.output_width() + sc.output_width());
        let mut head = HeadSpec::default_for(coupling.output_width());
        head.hyperbolic = kind.is_hyperbolic();
        Self {
            modalities: [Modality::Fc, Modality::Sc],
            fc,
            sc,
            coupling,
            head,
        }
    }

    pub fn kind(&self) -> EncoderKind {
        self.fc.kind
    }

    pub fn encoders(&self) -> [&EncoderSpec; 3] {
        [&self.fc, &self.sc, &self.coupling]
    }

    /// Sets λ on every encoder layer and the curvature everywhere.
    pub fn with_geometry(mut self, lambda: f64, curvature: CurvatureConfig) -> Self {
        self.fc = self.fc.with_geometry(lambda, curvature);
        self.sc = self.sc.with_geometry(lambda, curvature);
        self.coupling = self.coupling.with_geometry(lambda, curvature);
        self.head.curvature = curvature;
        self
    }

    /// Same shapes with GCN/GAT encoders and a Euclidean head.
    pub fn euclidean(&self) -> Self {
        let kind = self.kind().euclidean();
        let mut s = self.clone();
        s.fc = s.fc.with_kind(kind);
        s.sc = s.sc.with_kind(kind);
        s.coupling = s.coupling.with_kind(kind);
        s.head.hyperbolic = false;
        s
    }

    pub fn validate(&self) -> Result<()> {
        for e in self.encoders() {
            e.validate()?;
            if e.kind != self.kind() {
                return Err(Error::InvalidConfig(format!(
                    "all encoders must share one kind, found {} and {}",
                    self.kind().name(),
                    e.kind.name()
                )));
            }
        }
        self.head.validate()?;
        if self.modalities[0] == self.modalities[1] {
            return Err(Error::InvalidConfig("the two modalities must differ".into()));
        }
        if self.fc.output_width() != self.sc.output_width() {
            return Err(Error::InvalidConfig(format!(
                "coupling needs equal embedding widths, got {} and {}",
                self.fc.output_width(),
                self.sc.output_width()
            )));
        }
        let joint = self.fc.output_width() + self.sc.output_width();
        if self.coupling.dims[0] != joint {
            return Err(Error::LayerDim {
                layer: 0,
                expected: joint,
                found: self.coupling.dims[0],
            });
        }
        if self.head.dims[0] != self.coupling.output_width() {
            return Err(Error::InvalidConfig(format!(
                "head input {} does not match coupling output {}",
                self.head.dims[0],
                self.coupling.output_width()
            )));
        }
        Ok(())
    }

    /// Prefixed tensor names and shapes in storage order.
    pub fn tensor_shapes(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        for (prefix, e) in STAGES.iter().zip(self.encoders()) {
            for (n, s) in e.tensor_shapes() {
                out.push((format!("{prefix}.{n}"), s));
            }
        }
        for (n, s) in self.head.tensor_shapes() {
            out.push((format!("head.{n}"), s));
        }
        out
    }

    fn stage_counts(&self) -> [usize; 4] {
        [
            self.fc.tensor_shapes().len(),
            self.sc.tensor_shapes().len(),
            self.coupling.tensor_shapes().len(),
            self.head.tensor_shapes().len(),
        ]
    }
}

const STAGES: [&str; 3] = ["fc", "sc", "coupling"];

/// Ordered named tensors with same-shape gradient buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore {
    names: Vec<String>,
    values: Vec<Matrix>,
    grads: Vec<Matrix>,
    index: BTreeMap<String, usize>,
    pub seed: u64,
}

impl ParameterStore {
    pub fn new(seed: u64) -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            index: BTreeMap::new(),
            seed,
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidConfig(format!("duplicate tensor name {name}")));
        }
        self.index.insert(name.clone(), self.names.len());
        self.grads.push(Matrix::zeros(value.rows(), value.cols()));
        self.values.push(value);
        self.names.push(name);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn grads(&self) -> &[Matrix] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [Matrix] {
        &mut self.grads
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.position(name).map(|i| &self.values[i])
    }

    pub fn grad(&self, name: &str) -> Option<&Matrix> {
        self.position(name).map(|i| &self.grads[i])
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }
}

/// A subject with its graph operators precomputed for one model kind.
#[derive(Clone, Debug)]
pub struct PreparedSubject {
    pub id: String,
    pub label: u8,
    pub(crate) ops: [GraphOperator; 2],
    pub(crate) features: [Matrix; 2],
}

impl PreparedSubject {
    pub fn n_rois(&self) -> usize {
        self.features[0].rows()
    }
}

#[derive(Clone, Debug)]
pub(crate) struct ForwardCache {
    pub fc: EncoderCache,
    pub sc: EncoderCache,
    pub coupling: CouplingCache,
    pub pooled: Vec<f64>,
    pub head: HeadCache,
    pub loss: f64,
    pub probs: Vec<f64>,
}

/// Parameters of every stage, borrowed from the store.
pub(crate) struct StageParams<'a> {
    pub fc: EncoderParams<'a>,
    pub sc: EncoderParams<'a>,
    pub coupling: EncoderParams<'a>,
    pub head: HnnParams<'a>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub store: ParameterStore,
}

impl Model {
    /// Glorot-initialised model; the same seed gives the same weights.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new(seed);
        for (prefix, e) in STAGES.iter().zip(spec.encoders()) {
            for (n, t) in init_encoder_tensors(e, &mut rng) {
                store.push(format!("{prefix}.{n}"), t)?;
            }
        }
        for (n, (r, c)) in spec.head.tensor_shapes() {
            let t = if n.ends_with(".bias") {
                Matrix::zeros(r, c)
            } else {
                crate::layers::glorot(r, c, &mut rng)
            };
            store.push(format!("head.{n}"), t)?;
        }
        Ok(Self { spec, store })
    }

    /// Copies every tensor whose name (and shape) matches; returns how many
    /// were loaded. Unknown names are ignored.
    pub fn import_weights<'a, I>(&mut self, tensors: I) -> Result<usize>
    where
        I: IntoIterator<Item = (&'a str, &'a Matrix)>,
    {
        let mut loaded = 0;
        for (name, t) in tensors {
            if let Some(i) = self.store.position(name) {
                let dst = &mut self.store.values[i];
                if dst.shape() != t.shape() {
                    return Err(Error::InvalidConfig(format!(
                        "tensor {name}: expected {}x{}, got {}x{}",
                        dst.rows(),
                        dst.cols(),
                        t.rows(),
                        t.cols()
                    )));
                }
                dst.clone_from(t);
                loaded += 1;
            }
        }
        Ok(loaded)
    }

    pub(crate) fn stage_ranges(&self) -> [core::ops::Range<usize>; 4] {
        let c = self.spec.stage_counts();
        let mut start = 0;
        core::array::from_fn(|i| {
            let r = start..start + c[i];
            start += c[i];
            r
        })
    }

    pub(crate) fn params(&self) -> StageParams<'_> {
        let r = self.stage_ranges();
        let refs: Vec<&Matrix> = self.store.values.iter().collect();
        let enc = |i: usize, spec: &EncoderSpec| {
            EncoderParams::from_tensors(spec, &refs[r[i].clone()]).expect("store matches spec")
        };
        StageParams {
            fc: enc(0, &self.spec.fc),
            sc: enc(1, &self.spec.sc),
            coupling: enc(2, &self.spec.coupling),
            head: HnnParams::from_tensors(&self.spec.head, &refs[r[3].clone()])
                .expect("store matches spec"),
        }
    }

    /// Builds graph operators for the model's encoder kind.
    pub fn prepare(&self, subject: &Subject) -> Result<PreparedSubject> {
        let kind = self.spec.kind();
        let mut ops = Vec::with_capacity(2);
        let mut features = Vec::with_capacity(2);
        for (m, e) in self.spec.modalities.iter().zip([&self.spec.fc, &self.spec.sc]) {
            let g = subject.graph(*m)?;
            crate::layers::check_width(0, e.dims[0], g.features.cols())?;
            ops.push(prepare_operator(kind, &g.adjacency)?);
            features.push(g.features.clone());
        }
        let [f0, f1]: [Matrix; 2] = features.try_into().expect("two modalities");
        let [o0, o1]: [GraphOperator; 2] = ops.try_into().expect("two modalities");
        Ok(PreparedSubject {
            id: subject.id.clone(),
            label: subject.label,
            ops: [o0, o1],
            features: [f0, f1],
        })
    }

    pub(crate) fn forward_cache(&self, s: &PreparedSubject) -> ForwardCache {
        let p = self.params();
        let fc = encoder_forward(&self.spec.fc, &p.fc, &s.ops[0], &s.features[0]);
        let sc = encoder_forward(&self.spec.sc, &p.sc, &s.ops[1], &s.features[1]);
        let coupling = coupling_forward(&fc.output, &sc.output, &self.spec.coupling, &p.coupling);
        let pooled = coupling.encoder.output.column_means();
        let head = head_forward(&pooled, &p.head, &self.spec.head);
        let (loss, probs) = softmax_cross_entropy(&head.logits, s.label as usize);
        ForwardCache {
            fc,
            sc,
            coupling,
            pooled,
            head,
            loss,
            probs,
        }
    }

    /// Loss and class probabilities for one subject.
    pub fn forward(&self, s: &PreparedSubject) -> Result<(f64, Vec<f64>)> {
        let c = self.forward_cache(s);
        if !c.loss.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        Ok((c.loss, c.probs))
    }

    /// Probability of the positive class.
    pub fn predict(&self, s: &PreparedSubject) -> Result<f64> {
        Ok(self.forward(s)?.1[1])
    }

    /// Gradients of the subject loss, in storage order.
    pub(crate) fn gradients(&self, s: &PreparedSubject, cache: &ForwardCache) -> Vec<Matrix> {
        let p = self.params();
        let g_logits = cross_entropy_grad(&cache.probs, s.label as usize);
        let head = head_backward(&p.head, &self.spec.head, &cache.head, &g_logits);
        let n = cache.coupling.encoder.output.rows();
        let mut g_out = Matrix::zeros(n, head.input.len());
        for i in 0..n {
            for (o, g) in g_out.row_mut(i).iter_mut().zip(&head.input) {
                *o = g / n as f64;
            }
        }
        let cp = coupling_backward(&self.spec.coupling, &p.coupling, &cache.coupling, &g_out);
        let fc = encoder_backward(&self.spec.fc, &p.fc, &s.ops[0], &cache.fc, &cp.xf, false, false);
        let sc = encoder_backward(&self.spec.sc, &p.sc, &s.ops[1], &cache.sc, &cp.xs, false, false);
        let mut out = fc.tensors;
        out.extend(sc.tensors);
        out.extend(cp.tensors);
        out.extend(head.tensors);
        out
    }

    /// Runs forward and backward, adding `scale · ∂loss/∂θ` into the store's
    /// gradient buffers. Returns the loss.
    pub fn accumulate_gradients(&mut self, s: &PreparedSubject, scale: f64) -> Result<f64> {
        let cache = self.forward_cache(s);
        if !cache.loss.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        let grads = self.gradients(s, &cache);
        for (acc, g) in self.store.grads.iter_mut().zip(&grads) {
            acc.add_scaled(g, scale);
        }
        Ok(cache.loss)
    }

    /// Node embeddings produced by the coupling stage.
    pub fn coupling_embedding(&self, s: &PreparedSubject) -> Matrix {
        self.forward_cache(s).coupling.encoder.output
    }

    /// Head-averaged attention of the first coupling-stage layer.
    pub fn coupling_attention(&self, s: &PreparedSubject) -> Result<Matrix> {
        if !self.spec.kind().is_attention() {
            return Err(Error::NotAttention);
        }
        let cache = self.forward_cache(s);
        match &cache.coupling.encoder.layers[0] {
            crate::layers::LayerCache::Attention(a) => Ok(crate::layers::average_heads(a)),
            crate::layers::LayerCache::Conv(_) => Err(Error::NotAttention),
        }
    }
}
