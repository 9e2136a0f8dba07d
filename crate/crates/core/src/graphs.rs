//! Functional (FC) and structural (SC) connectivity graphs, adjacency
//! normalisation, and a seeded synthetic cohort generator.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Fc,
    Sc,
    Asl,
    Coupling,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Fc => "fc",
            Modality::Sc => "sc",
            Modality::Asl => "asl",
            Modality::Coupling => "coupling",
        })
    }
}

/// Regional mean time series, one row per ROI.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesMatrix {
    values: Matrix,
    pub roi_labels: Option<Vec<String>>,
}

impl TimeSeriesMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if values.rows() < 2 {
            return Err(Error::InvalidConfig(format!(
                "time series need at least 2 ROIs, got {}",
                values.rows()
            )));
        }
        if values.cols() < 3 {
            return Err(Error::InvalidConfig(format!(
                "time series need at least 3 timepoints, got {}",
                values.cols()
            )));
        }
        if !values.all_finite() {
            return Err(Error::NonFinite("time series"));
        }
        Ok(Self {
            values,
            roi_labels: None,
        })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n_rois(&self) -> usize {
        self.values.rows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivityGraph {
    pub adjacency: Matrix,
    pub features: Matrix,
    pub modality: Modality,
}

impl ConnectivityGraph {
    pub fn new(adjacency: Matrix, features: Matrix, modality: Modality) -> Result<Self> {
        if !adjacency.is_square() {
            return Err(Error::DimensionMismatch {
                context: "adjacency columns",
                expected: adjacency.rows(),
                found: adjacency.cols(),
            });
        }
        if features.rows() != adjacency.rows() {
            return Err(Error::DimensionMismatch {
                context: "feature rows",
                expected: adjacency.rows(),
                found: features.rows(),
            });
        }
        if !adjacency.all_finite() || !features.all_finite() {
            return Err(Error::NonFinite("graph"));
        }
        if matches!(modality, Modality::Fc | Modality::Sc) && !adjacency.is_symmetric(1e-9) {
            return Err(Error::InvalidConfig(format!("{modality} adjacency must be symmetric")));
        }
        if modality == Modality::Fc && (0..adjacency.rows()).any(|i| adjacency[(i, i)] != 0.0) {
            return Err(Error::InvalidConfig("fc adjacency must have a zero diagonal".into()));
        }
        Ok(Self {
            adjacency,
            features,
            modality,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub id: String,
    pub graphs: BTreeMap<Modality, ConnectivityGraph>,
    /// 1 = patient group (positive class), 0 = control.
    pub label: u8,
}

impl Subject {
    pub fn new(id: impl Into<String>, label: u8, graphs: Vec<ConnectivityGraph>) -> Result<Self> {
        if label > 1 {
            return Err(Error::InvalidConfig(format!("label must be 0 or 1, got {label}")));
        }
        let mut map = BTreeMap::new();
        let mut n = None;
        for g in graphs {
            if let Some(n) = n {
                if g.n_nodes() != n {
                    return Err(Error::DimensionMismatch {
                        context: "subject node count",
                        expected: n,
                        found: g.n_nodes(),
                    });
                }
            }
            n = Some(g.n_nodes());
            map.insert(g.modality, g);
        }
        Ok(Self {
            id: id.into(),
            graphs: map,
            label,
        })
    }

    pub fn graph(&self, modality: Modality) -> Result<&ConnectivityGraph> {
        self.graphs.get(&modality).ok_or_else(|| Error::MissingModality {
            subject: self.id.clone(),
            modality,
        })
    }

    pub fn n_rois(&self) -> usize {
        self.graphs.values().next().map_or(0, |g| g.n_nodes())
    }
}

/// Pearson correlation; 0 when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "pearson",
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::InvalidConfig("pearson needs at least 3 samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Full `N × N` correlation matrix of the rows of `values`, unit diagonal.
pub fn correlation_matrix(values: &Matrix) -> Result<Matrix> {
    let n = values.rows();
    let mut c = Matrix::identity(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let r = pearson(values.row(i), values.row(j))?;
            c[(i, j)] = r;
            c[(j, i)] = r;
        }
    }
    Ok(c)
}

/// Keeps the strongest `ceil(keep_fraction · N(N−1)/2)` off-diagonal pairs by
/// absolute weight; ties go to the lexicographically smaller `(i, j)`.
pub fn sparsify_top_fraction(weights: &Matrix, keep_fraction: f64, binary: bool) -> Result<Matrix> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "keep_fraction must lie in (0, 1], got {keep_fraction}"
        )));
    }
    let n = weights.rows();
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j));
        }
    }
    let keep = kept_pair_count(n, keep_fraction);
    // stable sort keeps lexicographic order among equal strengths
    pairs.sort_by(|a, b| weights[*b].abs().total_cmp(&weights[*a].abs()));
    let mut adj = Matrix::zeros(n, n);
    for &(i, j) in pairs.iter().take(keep) {
        let w = if binary { 1.0 } else { weights[(i, j)] };
        adj[(i, j)] = w;
        adj[(j, i)] = w;
    }
    Ok(adj)
}

/// Number of symmetric pairs retained by [`sparsify_top_fraction`].
pub fn kept_pair_count(n: usize, keep_fraction: f64) -> usize {
    let pairs = n * n.saturating_sub(1) / 2;
    let raw = keep_fraction * pairs as f64;
    (libm::ceil(raw - 1e-9) as usize).min(pairs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FcOptions {
    pub keep_fraction: f64,
    /// Retained edges become 1 instead of keeping their correlation.
    pub binary: bool,
}

impl Default for FcOptions {
    fn default() -> Self {
        Self {
            keep_fraction: 0.5,
            binary: false,
        }
    }
}

pub fn build_fc_graph(ts: &TimeSeriesMatrix, keep_fraction: f64) -> Result<ConnectivityGraph> {
    build_fc_graph_with(
        ts,
        &FcOptions {
            keep_fraction,
            binary: false,
        },
    )
}

pub fn build_fc_graph_with(ts: &TimeSeriesMatrix, opts: &FcOptions) -> Result<ConnectivityGraph> {
    let corr = correlation_matrix(ts.values())?;
    fc_graph_from_correlation(corr, opts)
}

/// FC graph from a precomputed correlation matrix.
pub fn fc_graph_from_correlation(corr: Matrix, opts: &FcOptions) -> Result<ConnectivityGraph> {
    if !corr.is_square() {
        return Err(Error::DimensionMismatch {
            context: "correlation matrix",
            expected: corr.rows(),
            found: corr.cols(),
        });
    }
    let adjacency = sparsify_top_fraction(&corr, opts.keep_fraction, opts.binary)?;
    ConnectivityGraph::new(adjacency, corr, Modality::Fc)
}

/// SC graph: features `[FN | FA | FL]` (`N × 3N`), adjacency `FN + FA + FL`.
pub fn build_sc_graph(
    fiber_number: &Matrix,
    fractional_anisotropy: &Matrix,
    fiber_length: &Matrix,
) -> Result<ConnectivityGraph> {
    let n = fiber_number.rows();
    for (name, m) in [
        ("fiber number", fiber_number),
        ("fractional anisotropy", fractional_anisotropy),
        ("fiber length", fiber_length),
    ] {
        if m.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context: "sc metric shape",
                expected: n,
                found: if m.rows() != n { m.rows() } else { m.cols() },
            });
        }
        if !m.all_finite() {
            return Err(Error::NonFinite("sc metric"));
        }
        for i in 0..n {
            for j in 0..n {
                if m[(i, j)] < 0.0 {
                    return Err(Error::NegativeEntry {
                        context: name,
                        row: i,
                        col: j,
                    });
                }
            }
        }
    }
    let mut adjacency = fiber_number.clone();
    adjacency.add_scaled(fractional_anisotropy, 1.0);
    adjacency.add_scaled(fiber_length, 1.0);
    let features = fiber_number
        .hconcat(fractional_anisotropy)?
        .hconcat(fiber_length)?;
    ConnectivityGraph::new(adjacency, features, Modality::Sc)
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn normalize_adjacency(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "adjacency columns",
            expected: a.rows(),
            found: a.cols(),
        });
    }
    let n = a.rows();
    for i in 0..n {
        for j in 0..n {
            if a[(i, j)] < 0.0 {
                return Err(Error::NegativeEntry {
                    context: "adjacency",
                    row: i,
                    col: j,
                });
            }
        }
    }
    Ok(normalize_unchecked(a).0)
}

/// Returns `(Â, d^{-1/2})`.
pub(crate) fn normalize_unchecked(a: &Matrix) -> (Matrix, Vec<f64>) {
    let n = a.rows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / libm::sqrt(a.row(i).iter().sum::<f64>() + 1.0))
        .collect();
    let mut out = a.clone();
    for i in 0..n {
        out[(i, i)] += 1.0;
        let si = inv_sqrt[i];
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v *= si * inv_sqrt[j];
        }
    }
    (out, inv_sqrt)
}

/// Adjoint of [`normalize_unchecked`] with respect to `A`.
pub(crate) fn normalize_backward(a: &Matrix, inv_sqrt: &[f64], grad_out: &Matrix) -> Matrix {
    let n = a.rows();
    // ∂L/∂s_i = Σ_j G_ij Ã_ij s_j + Σ_j G_ji Ã_ji s_j
    let tilde = |i: usize, j: usize| a[(i, j)] + if i == j { 1.0 } else { 0.0 };
    let mut grad_s = alloc::vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let t = grad_out[(i, j)] * tilde(i, j);
            grad_s[i] += t * inv_sqrt[j];
            grad_s[j] += t * inv_sqrt[i];
        }
    }
    // s = d^{-1/2} → ∂s/∂d = −s³/2
    let grad_d: Vec<f64> = (0..n)
        .map(|i| -0.5 * inv_sqrt[i] * inv_sqrt[i] * inv_sqrt[i] * grad_s[i])
        .collect();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = grad_out[(i, j)] * inv_sqrt[i] * inv_sqrt[j] + grad_d[i];
        }
    }
    g
}

/// Raw per-subject data of the synthetic cohort, before graph construction.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSubject {
    pub id: String,
    pub label: u8,
    pub timeseries: TimeSeriesMatrix,
    pub fiber_number: Matrix,
    pub fractional_anisotropy: Matrix,
    pub fiber_length: Matrix,
}

impl RawSubject {
    pub fn build(&self, fc: &FcOptions) -> Result<Subject> {
        let fcg = build_fc_graph_with(&self.timeseries, fc)?;
        let scg = build_sc_graph(
            &self.fiber_number,
            &self.fractional_anisotropy,
            &self.fiber_length,
        )?;
        Subject::new(self.id.clone(), self.label, alloc::vec![fcg, scg])
    }
}

const SYNTH_TIMEPOINTS: usize = 120;
const SYNTH_MODULES: usize = 4;

/// Two-level block layout: four modules nested in two super-modules.
#[derive(Clone, Copy, Debug)]
pub struct BlockLayout {
    n_rois: usize,
}

impl BlockLayout {
    pub fn new(n_rois: usize) -> Self {
        Self { n_rois }
    }

    pub fn module(&self, roi: usize) -> usize {
        roi * SYNTH_MODULES / self.n_rois
    }

    pub fn super_module(&self, roi: usize) -> usize {
        self.module(roi) / 2
    }

    /// Pairs whose connectivity differs between classes: first module ↔ last module.
    pub fn is_signal_pair(&self, i: usize, j: usize) -> bool {
        let (a, b) = (self.module(i), self.module(j));
        (a == 0 && b == SYNTH_MODULES - 1) || (b == 0 && a == SYNTH_MODULES - 1)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Balanced two-class cohort with paired FC time series and SC metrics.
///
/// Class 1 couples the last module's time series to the first module's
/// latent signal and strengthens the fibre metrics between those modules, so
/// only the first↔last inter-module block carries class information. Every
/// subject consumes the same random stream regardless of its label, so
/// `effect = 0` gives identical class-conditional distributions.
pub fn generate_synthetic_raw(
    n_subjects: usize,
    n_rois: usize,
    effect: f64,
    seed: u64,
) -> Result<Vec<RawSubject>> {
    if n_subjects == 0 || n_subjects % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "n_subjects must be even and positive, got {n_subjects}"
        )));
    }
    if n_rois < 8 {
        return Err(Error::InvalidConfig(format!("n_rois must be ≥ 8, got {n_rois}")));
    }
    if !(effect >= 0.0 && effect.is_finite()) {
        return Err(Error::InvalidConfig(format!("effect must be ≥ 0, got {effect}")));
    }
    let layout = BlockLayout::new(n_rois);
    let width = digits(n_subjects);
    (0..n_subjects)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let label = (s % 2) as u8;
            let gain = if label == 1 { effect } else { 0.0 };
            let ts = synth_timeseries(&mut rng, &layout, gain)?;
            let (fnum, fa, fl) = synth_structure(&mut rng, &layout, gain);
            Ok(RawSubject {
                id: format!("sub-{s:0width$}"),
                label,
                timeseries: ts,
                fiber_number: fnum,
                fractional_anisotropy: fa,
                fiber_length: fl,
            })
        })
        .collect()
}

fn digits(n: usize) -> usize {
    let mut d = 1;
    let mut v = n.saturating_sub(1);
    while v >= 10 {
        v /= 10;
        d += 1;
    }
    d.max(3)
}

fn synth_timeseries(rng: &mut ChaCha8Rng, layout: &BlockLayout, gain: f64) -> Result<TimeSeriesMatrix> {
    let n = layout.n_rois;
    let t = SYNTH_TIMEPOINTS;
    let mut supers = Matrix::zeros(2, t);
    let mut modules = Matrix::zeros(SYNTH_MODULES, t);
    for v in supers.data_mut().iter_mut().chain(modules.data_mut().iter_mut()) {
        *v = normal(rng);
    }
    let mut values = Matrix::zeros(n, t);
    for i in 0..n {
        let (m, s) = (layout.module(i), layout.super_module(i));
        let coupled = m == SYNTH_MODULES - 1;
        for k in 0..t {
            let noise = normal(rng);
            let mut v = 0.5 * supers[(s, k)] + 0.7 * modules[(m, k)] + noise;
            if coupled {
                v += gain * 0.8 * modules[(0, k)];
            }
            values[(i, k)] = v;
        }
    }
    TimeSeriesMatrix::new(values)
}

fn synth_structure(rng: &mut ChaCha8Rng, layout: &BlockLayout, gain: f64) -> (Matrix, Matrix, Matrix) {
    let n = layout.n_rois;
    let mut fnum = Matrix::zeros(n, n);
    let mut fa = Matrix::zeros(n, n);
    let mut fl = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let level = if layout.module(i) == layout.module(j) {
                0
            } else if layout.super_module(i) == layout.super_module(j) {
                1
            } else {
                2
            };
            let signal = if layout.is_signal_pair(i, j) { gain } else { 0.0 };
            let (z1, z2, z3) = (normal(rng), normal(rng), normal(rng));
            let base_n = [1.0, 0.4, 0.15][level];
            let base_a = [0.5, 0.4, 0.3][level];
            let base_l = [0.3, 0.6, 0.9][level];
            let vn = (base_n * libm::exp(0.25 * z1) + 0.3 * signal).max(0.0);
            let va = (base_a + 0.03 * z2 + 0.05 * signal).clamp(0.0, 1.0);
            let vl = (base_l + 0.05 * z3 - 0.1 * signal).max(0.0);
            for (m, v) in [(&mut fnum, vn), (&mut fa, va), (&mut fl, vl)] {
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    (fnum, fa, fl)
}

/// [`generate_synthetic_raw`] followed by FC (top 50 %) and SC graph construction.
pub fn generate_synthetic_cohort(
    n_subjects: usize,
    n_rois: usize,
    effect: f64,
    seed: u64,
) -> Result<Vec<Subject>> {
    generate_synthetic_raw(n_subjects, n_rois, effect, seed)?
        .iter()
        .map(|r| r.build(&FcOptions::default()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        // cov 3.5, variances 5 and 4.75 (unnormalised)
        assert!((pearson(&x, &[2.0, 4.0, 5.0, 4.0]).unwrap() - 3.5 / 23.75f64.sqrt()).abs() < 1e-14);
        assert_eq!(pearson(&x, &[3.0; 4]).unwrap(), 0.0);
        assert!(pearson(&x, &[1.0, 2.0]).is_err());
    }

    fn ts(rows: &[&[f64]]) -> TimeSeriesMatrix {
        TimeSeriesMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn fc_identical_series_keeps_two_of_three() {
        let s = [1.0, 3.0, 2.0, 5.0];
        let g = build_fc_graph(&ts(&[&s, &s, &s]), 0.5).unwrap();
        assert_eq!(g.features, Matrix::filled(3, 3, 1.0));
        let a = &g.adjacency;
        assert_eq!((a[(0, 1)], a[(0, 2)], a[(1, 2)]), (1.0, 1.0, 0.0));
        assert!(a.is_symmetric(0.0));
    }

    #[test]
    fn fc_keep_all_is_offdiagonal_correlation() {
        let t = ts(&[
            &[1.0, 2.0, 0.0, 4.0, 1.0],
            &[0.5, 1.0, 3.0, 2.0, 0.0],
            &[2.0, 0.0, 1.0, 1.0, 3.0],
        ]);
        let g = build_fc_graph(&t, 1.0).unwrap();
        let mut expect = g.features.clone();
        for i in 0..3 {
            assert_eq!(expect[(i, i)], 1.0);
            expect[(i, i)] = 0.0;
        }
        assert_eq!(g.adjacency, expect);
        assert!(build_fc_graph(&t, 0.0).is_err());
        assert!(build_fc_graph(&t, 1.5).is_err());
    }

    #[test]
    fn fc_binary_flag() {
        let corr = Matrix::from_rows(&[[1.0, -0.9, 0.2], [-0.9, 1.0, 0.5], [0.2, 0.5, 1.0]]).unwrap();
        let g = fc_graph_from_correlation(
            corr,
            &FcOptions {
                keep_fraction: 0.5,
                binary: true,
            },
        )
        .unwrap();
        assert_eq!(g.adjacency[(0, 1)], 1.0);
        assert_eq!(g.adjacency[(1, 2)], 1.0);
        assert_eq!(g.adjacency[(0, 2)], 0.0);
    }

    #[test]
    fn sc_examples() {
        let z = Matrix::zeros(3, 3);
        let g = build_sc_graph(&z, &z, &z).unwrap();
        assert_eq!(g.adjacency, z);
        assert_eq!(g.features, Matrix::zeros(3, 9));

        let mut toy = Matrix::filled(3, 3, 1.0);
        (0..3).for_each(|i| toy[(i, i)] = 0.0);
        let g = build_sc_graph(&toy, &toy, &toy).unwrap();
        let mut three = toy.clone();
        three.scale(3.0);
        assert_eq!(g.adjacency, three);

        let fnum = Matrix::from_rows(&[[0.0, 2.0], [2.0, 0.0]]).unwrap();
        let fa = Matrix::from_rows(&[[0.0, 0.5], [0.5, 0.0]]).unwrap();
        let fl = Matrix::from_rows(&[[0.0, 10.0], [10.0, 0.0]]).unwrap();
        let g = build_sc_graph(&fnum, &fa, &fl).unwrap();
        assert_eq!(g.adjacency[(0, 1)], 12.5);
        assert_eq!(g.features.row(0), &[0.0, 2.0, 0.0, 0.5, 0.0, 10.0]);

        let mut bad = fa.clone();
        bad[(0, 1)] = -0.1;
        assert!(matches!(
            build_sc_graph(&fnum, &bad, &fl),
            Err(Error::NegativeEntry { row: 0, col: 1, .. })
        ));
        assert!(build_sc_graph(&fnum, &Matrix::zeros(3, 3), &fl).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_adjacency(&Matrix::zeros(4, 4)).unwrap(), Matrix::identity(4));
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let n = normalize_adjacency(&a).unwrap();
        for v in n.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        // complete graph K4: all-ones off diagonal → uniform weights 1/4
        let mut k4 = Matrix::filled(4, 4, 1.0);
        (0..4).for_each(|i| k4[(i, i)] = 0.0);
        let n = normalize_adjacency(&k4).unwrap();
        for i in 0..4 {
            assert!((n.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert!(normalize_adjacency(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn normalize_backward_matches_finite_differences() {
        let a = Matrix::from_rows(&[[0.2, 0.7, 0.1], [0.4, 0.0, 0.9], [0.3, 0.5, 0.6]]).unwrap();
        let g = Matrix::from_rows(&[[0.5, -1.0, 0.3], [0.2, 0.8, -0.4], [1.1, -0.2, 0.7]]).unwrap();
        let f = |m: &Matrix| -> f64 {
            let (n, _) = normalize_unchecked(m);
            n.data().iter().zip(g.data()).map(|(x, y)| x * y).sum()
        };
        let (_, s) = normalize_unchecked(&a);
        let an = normalize_backward(&a, &s, &g);
        for i in 0..3 {
            for j in 0..3 {
                let h = 1e-6;
                let mut p = a.clone();
                p[(i, j)] += h;
                let mut m = a.clone();
                m[(i, j)] -= h;
                let num = (f(&p) - f(&m)) / (2.0 * h);
                assert!((num - an[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn synthetic_cohort_is_deterministic_and_balanced() {
        let a = generate_synthetic_cohort(6, 8, 1.0, 42).unwrap();
        let b = generate_synthetic_cohort(6, 8, 1.0, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|s| s.label == 1).count(), 3);
        let c = generate_synthetic_cohort(6, 8, 1.0, 43).unwrap();
        assert_ne!(a, c);
        for s in &a {
            assert_eq!(s.graph(Modality::Fc).unwrap().feature_dim(), 8);
            assert_eq!(s.graph(Modality::Sc).unwrap().feature_dim(), 24);
            assert!(s.graph(Modality::Asl).is_err());
        }
        assert!(generate_synthetic_cohort(5, 8, 1.0, 1).is_err());
        assert!(generate_synthetic_cohort(4, 7, 1.0, 1).is_err());
        assert!(generate_synthetic_cohort(4, 8, -1.0, 1).is_err());
    }

    #[test]
    fn layout_signal_block() {
        let l = BlockLayout::new(32);
        assert_eq!(l.module(0), 0);
        assert_eq!(l.module(31), 3);
        assert_eq!(l.super_module(15), 0);
        assert_eq!(l.super_module(16), 1);
        assert!(l.is_signal_pair(0, 31));
        assert!(l.is_signal_pair(31, 2));
        assert!(!l.is_signal_pair(0, 16));
        let sig = (0..32)
            .flat_map(|i| ((i + 1)..32).map(move |j| (i, j)))
            .filter(|&(i, j)| l.is_signal_pair(i, j))
            .count();
        assert_eq!(sig, 64);
    }
}
