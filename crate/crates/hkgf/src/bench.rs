//! Random-feature kernel convergence sweep.

use hkgf_core::kernels::{
    hrbf_closed_form, kernel_estimate, mc_kernel_oracle, sample_feature_map, KernelActivation,
    KernelConfig,
};
use hkgf_core::manifold::BallPoint;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub mean_abs_err: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub activation: KernelActivation,
    pub feature_counts: Vec<usize>,
    pub pairs: usize,
    pub dim: usize,
    /// Largest Euclidean norm of the sampled points.
    pub max_norm: f64,
    pub oracle_samples: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            activation: KernelActivation::Cosine,
            feature_counts: vec![64, 256, 1024, 4096],
            pairs: 50,
            dim: 16,
            max_norm: 1.5,
            oracle_samples: 1_000_000,
            seed: 0,
        }
    }
}

/// Error bound the sweep is judged against: `3/√M` for HRBF and
/// `5/√M + 0.005` for HAC, whose reference is itself a Monte-Carlo estimate.
pub fn error_bound(activation: KernelActivation, m: usize) -> f64 {
    let s = 1.0 / (m as f64).sqrt();
    match activation {
        KernelActivation::Cosine => 3.0 * s,
        KernelActivation::Relu => 5.0 * s + 0.005,
    }
}

/// Points with uniformly random direction and norm in `[0, max_norm)`.
pub fn random_points(n: usize, dim: usize, max_norm: f64, kcfg: &KernelConfig, rng: &mut ChaCha8Rng) -> Result<Vec<BallPoint>> {
    (0..n)
        .map(|_| {
            let g: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let len = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let r = max_norm * rng.random::<f64>();
            Ok(BallPoint::new(g.iter().map(|v| v * r / len).collect(), &kcfg.curvature)?)
        })
        .collect()
}

pub fn kernel_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    let base = KernelConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let a = random_points(cfg.pairs, cfg.dim, cfg.max_norm, &base, &mut rng)?;
    let b = random_points(cfg.pairs, cfg.dim, cfg.max_norm, &base, &mut rng)?;
    let reference: Vec<f64> = a
        .iter()
        .zip(&b)
        .enumerate()
        .map(|(k, (x, y))| match cfg.activation {
            KernelActivation::Cosine => hrbf_closed_form(x, y, &base),
            KernelActivation::Relu => mc_kernel_oracle(
                x,
                y,
                &base,
                KernelActivation::Relu,
                cfg.oracle_samples,
                cfg.seed ^ (0x5eed_0000 + k as u64),
            ),
        })
        .collect::<hkgf_core::Result<_>>()?;
    cfg.feature_counts
        .iter()
        .map(|&m| {
            let kcfg = KernelConfig { feature_count: m, ..base };
            let map = sample_feature_map(cfg.dim, &kcfg, cfg.activation, cfg.seed.wrapping_add(m as u64))?;
            let mut total = 0.0;
            for ((x, y), r) in a.iter().zip(&b).zip(&reference) {
                total += (kernel_estimate(x, y, &map, &kcfg)? - r).abs();
            }
            Ok(SweepRow {
                m,
                mean_abs_err: total / cfg.pairs as f64,
                bound: error_bound(cfg.activation, m),
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("m,mean_abs_err,bound\n");
    for r in rows {
        out.push_str(&format!("{},{:?},{:?}\n", r.m, r.mean_abs_err, r.bound));
    }
    out
}
