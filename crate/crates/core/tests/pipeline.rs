use hkgf_core::evaluation::{cross_validate, CvPlan};
use hkgf_core::graphs::{generate_synthetic_cohort, Modality, Subject};
use hkgf_core::layers::EncoderKind;
use hkgf_core::training::{mean_loss, train, Model, ModelSpec, PreparedSubject, TrainConfig};

fn setup(kind: EncoderKind, n: usize, seed: u64) -> (Vec<Subject>, ModelSpec) {
    let cohort = generate_synthetic_cohort(n, 10, 1.0, seed).unwrap();
    let fc = cohort[0].graph(Modality::Fc).unwrap().feature_dim();
    let sc = cohort[0].graph(Modality::Sc).unwrap().feature_dim();
    (cohort, ModelSpec::default_for(kind, fc, sc))
}

fn prepared(model: &Model, cohort: &[Subject]) -> Vec<PreparedSubject> {
    cohort.iter().map(|s| model.prepare(s).unwrap()).collect()
}

#[test]
fn training_is_deterministic_and_lowers_loss() {
    let (cohort, spec) = setup(EncoderKind::Hkgcn, 16, 2);
    let cfg = TrainConfig { epochs: 8, learning_rate: 1e-3, batch_size: 8, seed: 7, ..TrainConfig::default() };
    let run = || {
        let mut model = Model::new(spec.clone(), 7).unwrap();
        let subjects = prepared(&model, &cohort);
        let before = mean_loss(&model, &subjects).unwrap();
        let h = train(&mut model, &subjects, &cfg).unwrap();
        (before, mean_loss(&model, &subjects).unwrap(), h.epoch_loss)
    };
    let (before, after, losses) = run();
    assert_eq!(losses.len(), 8);
    assert!(after < before, "{before} -> {after}");
    assert_eq!(run().2, losses);
}

#[test]
fn cv_report_is_reproducible() {
    let (cohort, spec) = setup(EncoderKind::Hkgat, 12, 3);
    let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
    let plan = CvPlan::with_repeats(3, 2, 5);
    let a = cross_validate(&cohort, &spec, &cfg, &plan).unwrap();
    let b = cross_validate(&cohort, &spec, &cfg, &plan).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.repeats.len(), 2);
    let auc = a.get("auc").unwrap();
    assert!(auc.per_repeat.iter().all(|v| (0.0..=100.0).contains(v)));
}
