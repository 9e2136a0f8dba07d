//! Run configuration: one JSON file whose values may be overridden by flags.
//! Every default reproduces the reference architecture and optimiser.

use std::path::{Path, PathBuf};

use hkgf_core::evaluation::CvPlan;
use hkgf_core::graphs::FcOptions;
use hkgf_core::layers::{EncoderKind, EncoderSpec, LayerConfig};
use hkgf_core::manifold::CurvatureConfig;
use hkgf_core::predictor::HeadSpec;
use hkgf_core::training::{ModelSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::read_json;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: EncoderKind,
    /// Per-head width of every encoder layer.
    pub hidden: usize,
    /// Heads per encoder layer for attention kinds; its length sets the depth.
    pub heads: Vec<usize>,
    /// Encoder depth for convolution kinds.
    pub layers: usize,
    pub lambda: f64,
    pub curvature: f64,
    pub epsilon: f64,
    pub head_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Hkgcn,
            hidden: 64,
            heads: vec![4, 1],
            layers: 2,
            lambda: 0.01,
            curvature: 1e-3,
            epsilon: 1e-5,
            head_hidden: vec![32, 32],
        }
    }
}

impl ModelConfig {
    fn encoder(&self, input: usize, curvature: CurvatureConfig) -> Result<EncoderSpec> {
        let lambda = if self.kind.is_hyperbolic() { self.lambda } else { 0.0 };
        let layers: Vec<LayerConfig> = if self.kind.is_attention() {
            self.heads.iter().map(|&h| LayerConfig::attention(h)).collect()
        } else {
            vec![LayerConfig::convolution(); self.layers]
        };
        let layers = layers
            .into_iter()
            .map(|l| LayerConfig { lambda, curvature, ..l })
            .collect::<Vec<_>>();
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(self.hidden, layers.len()));
        Ok(EncoderSpec::new(self.kind, dims, layers, false)?)
    }

    /// Full pipeline spec for the given modality feature widths.
    pub fn build(&self, fc_input: usize, sc_input: usize) -> Result<ModelSpec> {
        let curvature = CurvatureConfig::new(self.curvature, self.epsilon)?;
        let fc = self.encoder(fc_input, curvature)?;
        let sc = self.encoder(sc_input, curvature)?;
        let coupling = self.encoder(fc.output_width() + sc.output_width(), curvature)?;
        let mut dims = vec![coupling.output_width()];
        dims.extend(&self.head_hidden);
        let head = HeadSpec {
            dims,
            curvature,
            hyperbolic: self.kind.is_hyperbolic(),
            ..HeadSpec::default_for(0)
        };
        let mut spec = ModelSpec::default_for(self.kind, fc_input, sc_input);
        spec.fc = fc;
        spec.sc = sc;
        spec.coupling = coupling;
        spec.head = head;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvConfig {
    pub folds: usize,
    pub repeats: usize,
    /// Explicit per-repeat seeds; derived from the run seed when absent.
    pub seeds: Option<Vec<u64>>,
    pub stratified: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            repeats: 5,
            seeds: None,
            stratified: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub cv: CvConfig,
    pub fc: FcOptions,
    pub manifest: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn cv_plan(&self) -> CvPlan {
        let mut plan = CvPlan::with_repeats(self.cv.folds, self.cv.repeats, self.seed);
        if let Some(seeds) = &self.cv.seeds {
            plan.seeds = seeds.clone();
        }
        plan.stratified = self.cv.stratified;
        plan
    }

    /// Checks everything that can be checked before data is loaded.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.cv_plan().validate()?;
        CurvatureConfig::new(self.model.curvature, self.model.epsilon)?;
        if self.model.hidden == 0 || self.model.head_hidden.contains(&0) {
            return Err(CliError::Invalid("layer widths must be ≥ 1".into()));
        }
        if !(self.fc.keep_fraction > 0.0 && self.fc.keep_fraction <= 1.0) {
            return Err(CliError::Invalid(format!(
                "fc.keep_fraction must lie in (0, 1], got {}",
                self.fc.keep_fraction
            )));
        }
        // a dummy build catches depth/head/λ mistakes early
        self.model.build(4, 12)?;
        Ok(())
    }
}
