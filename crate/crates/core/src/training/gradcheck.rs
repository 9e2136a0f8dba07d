//! Central finite-difference check of the analytic gradients.
//!
//! Each scalar is perturbed by `±h` with `h = 1e-4 · max(|θ|, 1)` and only
//! the part of the pipeline downstream of the touched layer is recomputed.
//! A perturbation that flips the sign of any ReLU/LeakyReLU/ELU input would
//! straddle a kink, so the step is shrunk tenfold (twice at most); a scalar
//! whose every step still flips a sign is counted as skipped rather than
//! compared.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::model::{ForwardCache, Model, PreparedSubject};
use crate::fusion::coupling_forward;
use crate::layers::{encoder_forward_from, EncoderCache, EncoderSpec, LayerCache};
use crate::predictor::{head_forward, softmax_cross_entropy, HeadCache};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub scalars: usize,
    /// Largest `|a − n| / max(|a|, |n|)` over compared scalars.
    pub worst_rel_err: f64,
    pub worst_index: usize,
    /// Scalars too close to an activation kink to compare.
    pub kink_skipped: usize,
    /// Set unless the worst error is strictly below the tolerance.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| !t.flagged)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().fold(0.0, |m, t| m.max(t.worst_rel_err))
    }

    pub fn scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.scalars).sum()
    }

    pub fn kink_skipped(&self) -> usize {
        self.tensors.iter().map(|t| t.kink_skipped).sum()
    }

    pub fn flagged(&self) -> impl Iterator<Item = &TensorCheck> {
        self.tensors.iter().filter(|t| t.flagged)
    }
}

/// Errors below this combined magnitude are not meaningful in double precision.
const MAGNITUDE_FLOOR: f64 = 1e-8;

pub fn gradcheck(model: &Model, subject: &PreparedSubject, tolerance: f64) -> GradcheckReport {
    run(model, subject, tolerance, None)
}

/// Same as [`gradcheck`] but corrupts the analytic gradient of the first
/// scalar of `tensor`; used to test that failures are reported.
#[doc(hidden)]
pub fn gradcheck_with_fault(
    model: &Model,
    subject: &PreparedSubject,
    tolerance: f64,
    tensor: &str,
) -> GradcheckReport {
    run(model, subject, tolerance, Some(tensor))
}

fn run(
    model: &Model,
    subject: &PreparedSubject,
    tolerance: f64,
    fault: Option<&str>,
) -> GradcheckReport {
    let base = model.forward_cache(subject);
    let mut analytic = model.gradients(subject, &base);
    if let Some(name) = fault {
        if let Some(i) = model.store.position(name) {
            if let Some(g) = analytic[i].data_mut().first_mut() {
                *g += 0.01 * (1.0 + g.abs());
            }
        }
    }
    let mut ev = Evaluator::new(model.clone(), subject, base);
    let ranges = model.stage_ranges();
    let mut tensors = Vec::with_capacity(model.store.len());
    for (stage, range) in ranges.iter().enumerate() {
        let spec = match stage {
            0 => Some(&model.spec.fc),
            1 => Some(&model.spec.sc),
            2 => Some(&model.spec.coupling),
            _ => None,
        };
        let layer_of = layer_map(spec, range.len());
        for (local, t) in range.clone().enumerate() {
            let layer = layer_of[local];
            let mut check = TensorCheck {
                name: model.store.names()[t].clone(),
                scalars: model.store.values()[t].len(),
                worst_rel_err: 0.0,
                worst_index: 0,
                kink_skipped: 0,
                flagged: false,
            };
            for idx in 0..check.scalars {
                match ev.numeric(t, idx, stage, layer) {
                    Some(n) => {
                        let a = analytic[t].data()[idx];
                        let scale = a.abs().max(n.abs());
                        let err = if a.abs() + n.abs() > MAGNITUDE_FLOOR {
                            (a - n).abs() / scale
                        } else {
                            0.0
                        };
                        if err > check.worst_rel_err {
                            check.worst_rel_err = err;
                            check.worst_index = idx;
                        }
                    }
                    None => check.kink_skipped += 1,
                }
            }
            check.flagged = !(check.worst_rel_err < tolerance);
            tensors.push(check);
        }
    }
    GradcheckReport { tolerance, tensors }
}

/// Layer index owning each tensor of an encoder stage (0 for the head).
fn layer_map(spec: Option<&EncoderSpec>, len: usize) -> Vec<usize> {
    match spec {
        None => alloc::vec![0; len],
        Some(s) => (0..s.n_layers())
            .flat_map(|k| core::iter::repeat_n(k, s.tensors_in_layer(k)))
            .collect(),
    }
}

struct Evaluator<'a> {
    model: Model,
    subject: &'a PreparedSubject,
    base: ForwardCache,
    base_fp: [u64; 4],
}

impl<'a> Evaluator<'a> {
    fn new(model: Model, subject: &'a PreparedSubject, base: ForwardCache) -> Self {
        let base_fp = [
            encoder_fingerprint(&base.fc),
            encoder_fingerprint(&base.sc),
            encoder_fingerprint(&base.coupling.encoder),
            head_fingerprint(&base.head),
        ];
        Self {
            model,
            subject,
            base,
            base_fp,
        }
    }

    fn numeric(&mut self, t: usize, idx: usize, stage: usize, layer: usize) -> Option<f64> {
        let theta = self.model.store.values()[t].data()[idx];
        let label = self.subject.label as usize;
        let mut h = 1e-4 * theta.abs().max(1.0);
        for _ in 0..3 {
            let plus = self.logits_at(t, idx, theta + h, stage, layer);
            let minus = self.logits_at(t, idx, theta - h, stage, layer);
            self.model.store.values_mut()[t].data_mut()[idx] = theta;
            if plus.1 == self.base_fp && minus.1 == self.base_fp {
                // divide by the step actually taken after rounding
                let step = (theta + h) - (theta - h);
                return Some(loss_difference(&plus.0, &minus.0, label) / step);
            }
            h *= 0.1;
        }
        None
    }

    fn logits_at(
        &mut self,
        t: usize,
        idx: usize,
        value: f64,
        stage: usize,
        layer: usize,
    ) -> (Vec<f64>, [u64; 4]) {
        self.model.store.values_mut()[t].data_mut()[idx] = value;
        let m = &self.model;
        let s = self.subject;
        let p = m.params();
        let mut fp = self.base_fp;
        let mut fresh_fc = None;
        let mut fresh_sc = None;
        match stage {
            0 => {
                let mut enc = self.base.fc.clone();
                encoder_forward_from(&m.spec.fc, &p.fc, &s.ops[0], &mut enc, layer);
                fp[0] = encoder_fingerprint(&enc);
                fresh_fc = Some(enc);
            }
            1 => {
                let mut enc = self.base.sc.clone();
                encoder_forward_from(&m.spec.sc, &p.sc, &s.ops[1], &mut enc, layer);
                fp[1] = encoder_fingerprint(&enc);
                fresh_sc = Some(enc);
            }
            _ => {}
        }
        let pooled = match stage {
            0 | 1 => {
                let xf = fresh_fc.as_ref().unwrap_or(&self.base.fc);
                let xs = fresh_sc.as_ref().unwrap_or(&self.base.sc);
                let cp = coupling_forward(&xf.output, &xs.output, &m.spec.coupling, &p.coupling);
                fp[2] = encoder_fingerprint(&cp.encoder);
                cp.encoder.output.column_means()
            }
            2 => {
                let mut enc = self.base.coupling.encoder.clone();
                encoder_forward_from(&m.spec.coupling, &p.coupling, &self.base.coupling.op, &mut enc, layer);
                fp[2] = encoder_fingerprint(&enc);
                enc.output.column_means()
            }
            _ => self.base.pooled.clone(),
        };
        let head = head_forward(&pooled, &p.head, &m.spec.head);
        fp[3] = head_fingerprint(&head);
        (head.logits, fp)
    }
}

/// `L(plus) − L(minus)` for the softmax cross-entropy, evaluated from the
/// logit differences so the two nearly equal losses are never subtracted.
fn loss_difference(plus: &[f64], minus: &[f64], label: usize) -> f64 {
    let (_, p) = softmax_cross_entropy(minus, label);
    let delta: Vec<f64> = plus.iter().zip(minus).map(|(a, b)| a - b).collect();
    let s: f64 = p.iter().zip(&delta).map(|(pk, dk)| pk * libm::expm1(*dk)).sum();
    libm::log1p(s) - delta[label]
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn signs(&mut self, values: &[f64]) {
        for &v in values {
            self.0 ^= (v > 0.0) as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

fn encoder_fingerprint(cache: &EncoderCache) -> u64 {
    let mut h = Fnv::new();
    for layer in &cache.layers {
        match layer {
            LayerCache::Conv(c) => h.signs(c.agg.data()),
            LayerCache::Attention(a) => {
                for hc in &a.heads {
                    h.signs(hc.pre.data());
                    h.signs(hc.agg.data());
                }
            }
        }
    }
    h.0
}

fn head_fingerprint(cache: &HeadCache) -> u64 {
    let mut h = Fnv::new();
    for pre in &cache.pre {
        h.signs(pre);
    }
    h.0
}
