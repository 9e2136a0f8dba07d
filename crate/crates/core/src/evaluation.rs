//! Classification metrics, the repeated stratified cross-validation protocol
//! and discriminative-connection extraction.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{correlation_matrix, Subject};
use crate::matrix::Matrix;
use crate::stats::{mean, sample_std, welch_t_test};
use crate::training::{train, Model, ModelSpec, PreparedSubject, TrainConfig};

/// Metrics of a single run, in percent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub acc: f64,
    pub f1: f64,
    pub bac: f64,
    pub sen: f64,
    pub spe: f64,
    pub pre: f64,
    /// Metrics whose denominator was zero and were reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

pub const METRIC_NAMES: [&str; 7] = ["auc", "acc", "f1", "bac", "sen", "spe", "pre"];

impl MetricsReport {
    pub fn values(&self) -> [f64; 7] {
        [self.auc, self.acc, self.f1, self.bac, self.sen, self.spe, self.pre]
    }
}

fn check_inputs(labels: &[u8], scores: &[f64]) -> Result<()> {
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            context: "labels vs scores",
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("labels"));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidConfig(format!("label must be 0 or 1, got {l}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    Ok(())
}

/// Mann–Whitney AUC in `[0, 1]`: the fraction of (positive, negative) pairs
/// ordered correctly, ties counted ½.
pub fn auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    check_inputs(labels, scores)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass("AUC is undefined"));
    }
    // sweep groups of equal score: each positive beats every negative seen so
    // far and ties with the negatives of its own group
    let mut wins = 0.0;
    let mut neg_below = 0usize;
    let mut k = 0;
    while k < idx.len() {
        let mut end = k;
        while end < idx.len() && scores[idx[end]] == scores[idx[k]] {
            end += 1;
        }
        let group = &idx[k..end];
        let pos = group.iter().filter(|&&i| labels[i] == 1).count();
        let neg = group.len() - pos;
        wins += pos as f64 * (neg_below as f64 + 0.5 * neg as f64);
        neg_below += neg;
        k = end;
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

pub fn compute_metrics(labels: &[u8], scores: &[f64], threshold: f64) -> Result<MetricsReport> {
    let auc = auc(labels, scores)?;
    let (mut tp, mut tn, mut fp, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for (&l, &s) in labels.iter().zip(scores) {
        match (l == 1, s >= threshold) {
            (true, true) => tp += 1,
            (true, false) => fneg += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    let mut warnings = Vec::new();
    let mut ratio = |num: usize, den: usize, name: &str| {
        if den == 0 {
            warnings.push(format!("{name}: zero denominator, reported as 0"));
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let sen = ratio(tp, tp + fneg, "sen");
    let spe = ratio(tn, tn + fp, "spe");
    let pre = ratio(tp, tp + fp, "pre");
    let f1 = ratio(2 * tp, 2 * tp + fp + fneg, "f1");
    let acc = (tp + tn) as f64 / labels.len() as f64;
    let (sen, spe) = (100.0 * sen, 100.0 * spe);
    Ok(MetricsReport {
        auc: 100.0 * auc,
        acc: 100.0 * acc,
        f1: 100.0 * f1,
        bac: (sen + spe) / 2.0,
        sen,
        spe,
        pre: 100.0 * pre,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvPlan {
    pub folds: usize,
    pub repeats: usize,
    /// One seed per repeat; it fixes the split, the initialisation and the
    /// batch order of every fold in that repeat.
    pub seeds: Vec<u64>,
    pub stratified: bool,
}

impl CvPlan {
    /// 5 folds × 5 repeats with seeds `seed, seed + 1, …`.
    pub fn standard(seed: u64) -> Self {
        Self::with_repeats(5, 5, seed)
    }

    pub fn with_repeats(folds: usize, repeats: usize, seed: u64) -> Self {
        Self {
            folds,
            repeats,
            seeds: (0..repeats as u64).map(|r| seed.wrapping_add(r)).collect(),
            stratified: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidConfig("folds must be ≥ 2".into()));
        }
        if self.repeats == 0 || self.seeds.len() != self.repeats {
            return Err(Error::InvalidConfig(format!(
                "need one seed per repeat ({} repeats, {} seeds)",
                self.repeats,
                self.seeds.len()
            )));
        }
        Ok(())
    }
}

/// Fold index of every subject. Stratified plans deal each shuffled class
/// round-robin over the folds, continuing where the previous class stopped.
pub fn fold_assignment(labels: &[u8], folds: usize, stratified: bool, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0; labels.len()];
    let groups: Vec<Vec<usize>> = if stratified {
        (0..=1u8)
            .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
            .collect()
    } else {
        vec![(0..labels.len()).collect()]
    };
    let mut next = 0;
    for mut g in groups {
        g.shuffle(&mut rng);
        for i in g {
            out[i] = next % folds;
            next += 1;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub metrics: MetricsReport,
    /// Held-out positive-class probability of every subject.
    pub scores: Vec<f64>,
}

/// Mixes a repeat seed with a fold index into an independent stream seed.
fn fold_seed(seed: u64, fold: usize) -> u64 {
    let mut z = seed ^ (fold as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One repeat: train on all folds but one, score the held-out fold, pool the
/// held-out predictions and compute metrics on them.
pub fn cv_repeat(
    cohort: &[Subject],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    plan: &CvPlan,
    repeat: usize,
) -> Result<RepeatResult> {
    plan.validate()?;
    let seed = *plan
        .seeds
        .get(repeat)
        .ok_or_else(|| Error::InvalidConfig(format!("repeat {repeat} out of range")))?;
    let labels: Vec<u8> = cohort.iter().map(|s| s.label).collect();
    let assign = fold_assignment(&labels, plan.folds, plan.stratified, seed);
    for fold in 0..plan.folds {
        let held: Vec<u8> = (0..cohort.len())
            .filter(|&i| assign[i] == fold)
            .map(|i| labels[i])
            .collect();
        if !(held.contains(&0) && held.contains(&1)) {
            return Err(Error::FoldSingleClass { repeat, fold });
        }
    }
    // preparation only depends on the graphs, not on the weights
    let template = Model::new(spec.clone(), 0)?;
    let prepared: Vec<PreparedSubject> = cohort
        .iter()
        .map(|s| template.prepare(s))
        .collect::<Result<_>>()?;
    let mut scores = vec![0.0; cohort.len()];
    for fold in 0..plan.folds {
        let fseed = fold_seed(seed, fold);
        let train_set: Vec<PreparedSubject> = (0..cohort.len())
            .filter(|&i| assign[i] != fold)
            .map(|i| prepared[i].clone())
            .collect();
        let mut model = Model::new(spec.clone(), fseed)?;
        let fold_cfg = TrainConfig { seed: fseed, ..cfg.clone() };
        train(&mut model, &train_set, &fold_cfg)?;
        for i in (0..cohort.len()).filter(|&i| assign[i] == fold) {
            scores[i] = model.predict(&prepared[i])?;
        }
    }
    let metrics = compute_metrics(&labels, &scores, 0.5)?;
    Ok(RepeatResult {
        repeat,
        seed,
        metrics,
        scores,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation across repeats.
    pub std: f64,
    pub per_repeat: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub metrics: Vec<MetricSummary>,
    pub repeats: Vec<RepeatResult>,
}

impl CvReport {
    pub fn get(&self, metric: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == metric)
    }
}

/// Mean and sample std of every metric; repeats are sorted by index first so
/// the result does not depend on completion order.
pub fn aggregate(mut repeats: Vec<RepeatResult>) -> Result<CvReport> {
    if repeats.is_empty() {
        return Err(Error::Empty("repeats"));
    }
    repeats.sort_by_key(|r| r.repeat);
    let metrics = METRIC_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let per_repeat: Vec<f64> = repeats.iter().map(|r| r.metrics.values()[k]).collect();
            MetricSummary {
                metric: (*name).into(),
                mean: mean(&per_repeat),
                std: sample_std(&per_repeat),
                per_repeat,
            }
        })
        .collect();
    Ok(CvReport { metrics, repeats })
}

pub fn cross_validate(
    cohort: &[Subject],
    spec: &ModelSpec,
    cfg: &TrainConfig,
    plan: &CvPlan,
) -> Result<CvReport> {
    plan.validate()?;
    let repeats = (0..plan.repeats)
        .map(|r| cv_repeat(cohort, spec, cfg, plan, r))
        .collect::<Result<Vec<_>>>()?;
    aggregate(repeats)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedConnection {
    pub roi_a: usize,
    pub roi_b: usize,
    /// p-value for the correlation route, mean attention for the attention route.
    pub score: f64,
}

fn check_labelled<T>(items: &[T], labels: &[u8]) -> Result<()> {
    if items.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "subjects vs labels",
            expected: items.len(),
            found: labels.len(),
        });
    }
    if items.is_empty() {
        return Err(Error::Empty("subjects"));
    }
    Ok(())
}

fn common_size(mats: &[Matrix], square: bool) -> Result<usize> {
    let (r, c) = mats[0].shape();
    for m in mats {
        if m.shape() != (r, c) {
            return Err(Error::DimensionMismatch {
                context: "per-subject matrix shape",
                expected: r,
                found: m.rows(),
            });
        }
        if !m.all_finite() {
            return Err(Error::NonFinite("per-subject matrix"));
        }
    }
    if square && r != c {
        return Err(Error::DimensionMismatch {
            context: "attention matrix must be square",
            expected: r,
            found: c,
        });
    }
    Ok(r)
}

/// ROI pairs whose embedding correlation differs between classes (Welch
/// p < 0.05), most significant first; at most `top_k` are returned.
pub fn discriminative_connections_correlation(
    embeddings: &[Matrix],
    labels: &[u8],
    top_k: usize,
) -> Result<Vec<RankedConnection>> {
    check_labelled(embeddings, labels)?;
    let n = common_size(embeddings, false)?;
    let corr: Vec<Matrix> = embeddings
        .iter()
        .map(correlation_matrix)
        .collect::<Result<_>>()?;
    let mut ranked = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (c, &l) in corr.iter().zip(labels) {
                if l == 1 { a.push(c[(i, j)]) } else { b.push(c[(i, j)]) }
            }
            let p = welch_t_test(&a, &b)?.p;
            if p < 0.05 {
                ranked.push(RankedConnection { roi_a: i, roi_b: j, score: p });
            }
        }
    }
    // stable: equal p-values keep lexicographic order
    ranked.sort_by(|x, y| x.score.total_cmp(&y.score));
    ranked.truncate(top_k);
    Ok(ranked)
}

/// Directed ROI pairs `(i → j)`, `i ≠ j`, ranked by their mean attention
/// weight over the positive class; ties keep lexicographic order.
pub fn discriminative_connections_attention(
    attention: &[Matrix],
    labels: &[u8],
    top_k: usize,
) -> Result<Vec<RankedConnection>> {
    check_labelled(attention, labels)?;
    let n = common_size(attention, true)?;
    let positives: Vec<&Matrix> = attention
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(a, _)| a)
        .collect();
    if positives.is_empty() {
        return Err(Error::SingleClass("attention ranking needs positive subjects"));
    }
    let mut ranked = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let score = positives.iter().map(|a| a[(i, j)]).sum::<f64>() / positives.len() as f64;
            ranked.push(RankedConnection { roi_a: i, roi_b: j, score });
        }
    }
    ranked.sort_by(|x, y| y.score.total_cmp(&x.score));
    ranked.truncate(top_k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngExt;

    /// Trapezoidal area under the ROC curve traced by descending thresholds.
    fn roc_auc(labels: &[u8], scores: &[f64]) -> f64 {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let p = labels.iter().filter(|&&l| l == 1).count() as f64;
        let n = labels.len() as f64 - p;
        let (mut tp, mut fp) = (0.0, 0.0);
        let (mut prev_tpr, mut prev_fpr) = (0.0, 0.0);
        let mut area = 0.0;
        let mut k = 0;
        while k < idx.len() {
            let s = scores[idx[k]];
            while k < idx.len() && scores[idx[k]] == s {
                if labels[idx[k]] == 1 { tp += 1.0 } else { fp += 1.0 }
                k += 1;
            }
            let (tpr, fpr) = (tp / p, fp / n);
            area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
            prev_tpr = tpr;
            prev_fpr = fpr;
        }
        area
    }

    #[test]
    fn hand_examples() {
        let m = compute_metrics(&[1, 1, 0, 0], &[0.9, 0.4, 0.6, 0.2], 0.5).unwrap();
        assert_eq!(m.auc, 75.0);
        let m = compute_metrics(&[1, 0, 1, 0], &[0.9, 0.1, 0.8, 0.3], 0.5).unwrap();
        assert_eq!((m.auc, m.acc, m.f1), (100.0, 100.0, 100.0));
        let m = compute_metrics(&[1, 0, 1, 0, 0], &[0.5; 5], 0.5).unwrap();
        assert_eq!(m.auc, 50.0);
    }

    #[test]
    fn confusion_matrix_metrics() {
        // tp=2 fn=1 fp=1 tn=2
        let m = compute_metrics(&[1, 1, 1, 0, 0, 0], &[0.9, 0.8, 0.1, 0.7, 0.2, 0.3], 0.5).unwrap();
        let third = 100.0 * 2.0 / 3.0;
        assert!((m.sen - third).abs() < 1e-12);
        assert!((m.spe - third).abs() < 1e-12);
        assert!((m.pre - third).abs() < 1e-12);
        assert!((m.f1 - third).abs() < 1e-12);
        assert!((m.acc - third).abs() < 1e-12);
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn degenerate_denominators_warn() {
        // nothing predicted positive: precision undefined
        let m = compute_metrics(&[1, 0, 0], &[0.1, 0.2, 0.3], 0.5).unwrap();
        assert_eq!(m.pre, 0.0);
        assert_eq!(m.warnings.len(), 1);
        assert!(m.warnings[0].starts_with("pre"));
    }

    #[test]
    fn single_class_is_an_error() {
        assert_eq!(compute_metrics(&[1, 1], &[0.2, 0.3], 0.5), Err(Error::SingleClass("AUC is undefined")));
        assert!(compute_metrics(&[1, 2], &[0.2, 0.3], 0.5).is_err());
        assert!(compute_metrics(&[1, 0], &[0.2], 0.5).is_err());
    }

    fn labelled_scores() -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
        (2usize..200).prop_flat_map(|n| {
            (
                proptest::collection::vec(0u8..2, n),
                // coarse grid so ties actually occur
                proptest::collection::vec((0u32..20).prop_map(|v| v as f64 / 19.0), n),
            )
        })
        .prop_filter("both classes", |(l, _)| l.contains(&0) && l.contains(&1))
    }

    proptest! {
        #[test]
        fn auc_matches_roc_integration((labels, scores) in labelled_scores()) {
            let a = auc(&labels, &scores).unwrap();
            prop_assert!((a - roc_auc(&labels, &scores)).abs() < 1e-10);
        }

        #[test]
        fn metric_identities((labels, scores) in labelled_scores()) {
            let m = compute_metrics(&labels, &scores, 0.5).unwrap();
            prop_assert_eq!(m.bac, (m.sen + m.spe) / 2.0);
            for v in m.values() {
                prop_assert!((0.0..=100.0).contains(&v));
            }
            if m.pre + m.sen > 0.0 {
                prop_assert!((m.f1 - 2.0 * m.pre * m.sen / (m.pre + m.sen)).abs() < 1e-9);
            }
        }

        #[test]
        fn auc_invariant_under_monotone_maps((labels, scores) in labelled_scores()) {
            let mapped: Vec<f64> = scores.iter().map(|s| libm::exp(3.0 * s) - 7.0).collect();
            prop_assert_eq!(auc(&labels, &scores).unwrap(), auc(&labels, &mapped).unwrap());
        }

        #[test]
        fn metrics_invariant_under_permutation((labels, scores) in labelled_scores(), seed in any::<u64>()) {
            let mut idx: Vec<usize> = (0..labels.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let l2: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let s2: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            prop_assert_eq!(
                compute_metrics(&labels, &scores, 0.5).unwrap(),
                compute_metrics(&l2, &s2, 0.5).unwrap()
            );
        }

        #[test]
        fn stratified_folds_are_balanced(labels in proptest::collection::vec(0u8..2, 10..80), seed in any::<u64>()) {
            let folds = 5;
            let a = fold_assignment(&labels, folds, true, seed);
            for c in 0..=1u8 {
                let counts: Vec<usize> = (0..folds)
                    .map(|f| (0..labels.len()).filter(|&i| labels[i] == c && a[i] == f).count())
                    .collect();
                let lo = *counts.iter().min().unwrap();
                let hi = *counts.iter().max().unwrap();
                prop_assert!(hi - lo <= 1);
            }
        }
    }

    #[test]
    fn welch_p_values_uniform_under_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = rand_distr::StandardNormal;
        let mut ps: Vec<f64> = (0..10_000)
            .map(|_| {
                let a: Vec<f64> = (0..8).map(|_| rng.sample::<f64, _>(normal)).collect();
                let b: Vec<f64> = (0..12).map(|_| 2.0 * rng.sample::<f64, _>(normal) + 0.0).collect();
                welch_t_test(&a, &b).unwrap().p
            })
            .collect();
        ps.sort_by(f64::total_cmp);
        let n = ps.len() as f64;
        let ks = ps
            .iter()
            .enumerate()
            .map(|(i, &p)| (p - i as f64 / n).abs().max(((i + 1) as f64 / n - p).abs()))
            .fold(0.0, f64::max);
        assert!(ks <= 0.05, "KS distance {ks}");
    }

    fn noise_embeddings(n_subjects: usize, n: usize, m: usize, seed: u64) -> Vec<Matrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_subjects)
            .map(|_| {
                let d = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
                Matrix::from_vec(n, m, d).unwrap()
            })
            .collect()
    }

    #[test]
    fn correlation_route_null_false_positive_rate() {
        let (n, subjects) = (8, 30);
        let labels: Vec<u8> = (0..subjects).map(|i| (i % 2) as u8).collect();
        let pairs = (n * (n - 1) / 2) as f64;
        let mut total = 0;
        let seeds = 20;
        for seed in 0..seeds {
            let emb = noise_embeddings(subjects, n, 10, seed);
            total += discriminative_connections_correlation(&emb, &labels, usize::MAX).unwrap().len();
        }
        let expected = 0.05 * pairs * seeds as f64;
        assert!((total as f64) <= 2.0 * expected, "{total} vs expected {expected}");
    }

    #[test]
    fn correlation_route_finds_planted_pair() {
        let (n, m, subjects) = (8, 10, 30);
        let labels: Vec<u8> = (0..subjects).map(|i| (i % 2) as u8).collect();
        let mut emb = noise_embeddings(subjects, n, m, 5);
        for (e, &l) in emb.iter_mut().zip(&labels) {
            if l == 1 {
                // ROI 5 copies ROI 2 plus a little noise in patients
                for k in 0..m {
                    e[(5, k)] = e[(2, k)] + 0.1 * e[(5, k)];
                }
            }
        }
        let ranked = discriminative_connections_correlation(&emb, &labels, 15).unwrap();
        assert_eq!((ranked[0].roi_a, ranked[0].roi_b), (2, 5));
        assert!(ranked[0].score < 0.05);
        assert!(ranked.len() <= 15);
        let one = discriminative_connections_correlation(&emb, &labels, 1).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn attention_route_ranking() {
        let labels = [1u8, 1, 0];
        let uniform = Matrix::filled(4, 4, 0.25);
        let ranked = discriminative_connections_attention(&[uniform.clone(), uniform.clone(), uniform.clone()], &labels, 3).unwrap();
        let pairs: Vec<(usize, usize)> = ranked.iter().map(|r| (r.roi_a, r.roi_b)).collect();
        assert_eq!(pairs, [(0, 1), (0, 2), (0, 3)]);
        let mut dominant = uniform.clone();
        dominant[(2, 1)] = 0.9;
        let ranked = discriminative_connections_attention(&[uniform.clone(), dominant, uniform.clone()], &labels, 2).unwrap();
        assert_eq!((ranked[0].roi_a, ranked[0].roi_b), (2, 1));
        assert!(discriminative_connections_attention(&[uniform], &[0], 2).is_err());
    }

    #[test]
    fn aggregate_uses_sample_std_and_sorts() {
        let mk = |repeat, auc| RepeatResult {
            repeat,
            seed: 0,
            metrics: MetricsReport { auc, ..MetricsReport::default() },
            scores: vec![],
        };
        let r = aggregate(vec![mk(1, 80.0), mk(0, 90.0), mk(2, 70.0)]).unwrap();
        let auc = r.get("auc").unwrap();
        assert_eq!(auc.per_repeat, [90.0, 80.0, 70.0]);
        assert_eq!(auc.mean, 80.0);
        assert!((auc.std - 10.0).abs() < 1e-12);
    }

    #[test]
    fn plan_validation() {
        assert!(CvPlan::standard(0).validate().is_ok());
        let mut p = CvPlan::standard(0);
        p.seeds.pop();
        assert!(p.validate().is_err());
        assert!(CvPlan::with_repeats(1, 1, 0).validate().is_err());
    }
}
