//! End-to-end gradients, Adam with L2-coupled weight decay, the training
//! loop and finite-difference gradient checking.

mod gradcheck;
mod model;

pub use gradcheck::{gradcheck, gradcheck_with_fault, GradcheckReport, TensorCheck};
pub use model::{Model, ModelSpec, ParameterStore, PreparedSubject};

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-4,
            batch_size: 128,
            epochs: 50,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("{what}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be ≥ 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        Ok(())
    }
}

/// First and second moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParameterStore) -> Self {
        let zeros = || {
            store
                .values()
                .iter()
                .map(|t| Matrix::zeros(t.rows(), t.cols()))
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One Adam update from the gradients currently in the store.
pub fn adam_step(store: &mut ParameterStore, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    for (name, g) in store.names().iter().zip(store.grads()) {
        if !g.all_finite() {
            return Err(Error::NanGradient(name.clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    let grads: Vec<Matrix> = store.grads().to_vec();
    for (i, (theta, g)) in store.values_mut().iter_mut().zip(&grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (k, (th, &gk)) in theta.data_mut().iter_mut().zip(g.data()).enumerate() {
            let gk = gk + cfg.weight_decay * *th;
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            *th -= cfg.learning_rate * m_hat / (libm::sqrt(v_hat) + cfg.adam_epsilon);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean training loss of each epoch, measured before each batch update.
    pub epoch_loss: Vec<f64>,
}

/// Mean loss over `subjects` without touching gradients.
pub fn mean_loss(model: &Model, subjects: &[PreparedSubject]) -> Result<f64> {
    if subjects.is_empty() {
        return Err(Error::Empty("subjects"));
    }
    let mut total = 0.0;
    for s in subjects {
        total += model.forward(s)?.0;
    }
    Ok(total / subjects.len() as f64)
}

/// Mini-batch Adam over subjects. The shuffle order comes from `cfg.seed`,
/// so a run is fully reproducible.
pub fn train(model: &mut Model, subjects: &[PreparedSubject], cfg: &TrainConfig) -> Result<TrainHistory> {
    cfg.validate()?;
    if subjects.is_empty() {
        return Err(Error::Empty("training subjects"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&model.store);
    let mut order: Vec<usize> = (0..subjects.len()).collect();
    let mut history = TrainHistory::default();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.store.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                total += model.accumulate_gradients(&subjects[i], scale)?;
            }
            adam_step(&mut model.store, &mut state, cfg)?;
        }
        history.epoch_loss.push(total / subjects.len() as f64);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::generate_synthetic_cohort;
    use crate::layers::EncoderKind;

    #[test]
    fn adam_first_step_is_minus_lr() {
        let mut store = ParameterStore::new(0);
        store.push("w", Matrix::row_vector(&[0.5])).unwrap();
        store.grads_mut()[0] = Matrix::row_vector(&[1.0]);
        let cfg = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
        let mut st = AdamState::new(&store);
        adam_step(&mut store, &mut st, &cfg).unwrap();
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε)
        let expect = 0.5 - 1e-4 / (1.0 + 1e-8);
        assert!((store.values()[0].data()[0] - expect).abs() < 1e-18);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut store = ParameterStore::new(0);
        store.push("w", Matrix::row_vector(&[0.5, -2.0])).unwrap();
        let before = store.clone();
        let cfg = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
        let mut st = AdamState::new(&store);
        adam_step(&mut store, &mut st, &cfg).unwrap();
        assert_eq!(store.values(), before.values());
    }

    #[test]
    fn nan_gradient_names_the_tensor() {
        let mut store = ParameterStore::new(0);
        store.push("a", Matrix::row_vector(&[1.0])).unwrap();
        store.push("b", Matrix::row_vector(&[1.0])).unwrap();
        store.grads_mut()[1] = Matrix::row_vector(&[f64::NAN]);
        let mut st = AdamState::new(&store);
        let err = adam_step(&mut store, &mut st, &TrainConfig::default()).unwrap_err();
        assert_eq!(err, Error::NanGradient("b".into()));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParameterStore::new(0);
        store.push("a", Matrix::zeros(1, 1)).unwrap();
        assert!(store.push("a", Matrix::zeros(1, 1)).is_err());
    }

    fn toy(kind: EncoderKind) -> (Model, Vec<PreparedSubject>) {
        let cohort = generate_synthetic_cohort(8, 8, 1.0, 4).unwrap();
        let spec = ModelSpec::default_for(kind, 8, 24);
        let model = Model::new(spec, 1).unwrap();
        let prepared = cohort.iter().map(|s| model.prepare(s).unwrap()).collect();
        (model, prepared)
    }

    #[test]
    fn small_step_decreases_loss() {
        for kind in [EncoderKind::Hkgcn, EncoderKind::Hkgat] {
            let (mut model, subjects) = toy(kind);
            let before = mean_loss(&model, &subjects).unwrap();
            model.store.zero_grads();
            for s in &subjects {
                model.accumulate_gradients(s, 1.0 / subjects.len() as f64).unwrap();
            }
            let grads = model.store.grads().to_vec();
            for (v, g) in model.store.values_mut().iter_mut().zip(&grads) {
                v.add_scaled(g, -1e-3);
            }
            assert!(mean_loss(&model, &subjects).unwrap() < before);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (model, subjects) = toy(EncoderKind::Hkgcn);
        let cfg = TrainConfig { epochs: 3, batch_size: 3, seed: 9, ..TrainConfig::default() };
        let mut a = model.clone();
        let mut b = model.clone();
        let ha = train(&mut a, &subjects, &cfg).unwrap();
        let hb = train(&mut b, &subjects, &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.store.values(), b.store.values());
    }

    #[test]
    fn gradcheck_small_models() {
        for kind in [EncoderKind::Hkgcn, EncoderKind::Hkgat, EncoderKind::Gcn, EncoderKind::Gat] {
            let cohort = generate_synthetic_cohort(2, 8, 1.0, 2).unwrap();
            let mut spec = ModelSpec::default_for(kind, 8, 24);
            for e in [&mut spec.fc, &mut spec.sc] {
                e.dims = alloc::vec![e.dims[0], 3, 3];
            }
            spec.coupling.dims = alloc::vec![6, 3, 3];
            if kind.is_attention() {
                for e in [&mut spec.fc, &mut spec.sc, &mut spec.coupling] {
                    e.layers[0].heads = 2;
                }
            }
            spec.head.dims = alloc::vec![3, 4, 4];
            let model = Model::new(spec, 3).unwrap();
            let s = model.prepare(&cohort[1]).unwrap();
            let report = gradcheck(&model, &s, 1e-4);
            assert!(report.passed(), "{kind:?}: {:?}", report.flagged().collect::<Vec<_>>());
            assert_eq!(report.scalars(), model.store.scalar_count());
            let faulty = gradcheck_with_fault(&model, &s, 1e-4, "head.out.bias");
            assert!(!faulty.passed());
            assert!(gradcheck(&model, &s, 0.0).tensors.iter().all(|t| t.flagged));
        }
    }
}
