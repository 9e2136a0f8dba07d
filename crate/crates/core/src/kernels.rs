//! Hyperbolic arc-cos (HAC) and hyperbolic RBF (HRBF) kernels.
//!
//! Both kernels act on tangent-space images `u = log₀ᶜ(z)`:
//!
//! ```text
//! k_HAC(a, b)  = 2 E_w[ ReLU(wᵀu_a + b) ReLU(wᵀu_b + b) ]
//! k_HRBF(a, b) =   E_w[ cos(wᵀ(u_a − u_b)) ]          w ~ N(0, σ²I)
//! ```
//!
//! A [`RandomFeatureMap`] gives the finite-dimensional approximation
//! `Φ(z) = √(2/M) δ(Wᵀu + b)` whose inner products estimate the kernel.
//! [`mc_kernel_oracle`] draws its own fresh samples and never touches a
//! feature map, and [`hrbf_closed_form`] is the Gaussian characteristic
//! function, so each estimate has an independent check.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{log_map_origin, BallPoint, CurvatureConfig};
use crate::matrix::{dot, norm, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelActivation {
    /// HAC features.
    Relu,
    /// HRBF features.
    Cosine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub curvature: CurvatureConfig,
    /// Standard deviation of the isotropic Gaussian `p(w)`.
    pub sigma: f64,
    pub feature_count: usize,
    /// Constant offset `b` shared by every HAC feature (0 recovers arc-cos).
    pub hac_offset: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            curvature: CurvatureConfig::default(),
            sigma: 1.0,
            feature_count: 1024,
            hac_offset: 0.0,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.feature_count == 0 {
            return Err(Error::InvalidConfig("feature_count must be ≥ 1".into()));
        }
        if !self.hac_offset.is_finite() {
            return Err(Error::NonFinite("hac_offset"));
        }
        Ok(())
    }
}

/// Frozen random projection `(W, b, δ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomFeatureMap {
    /// `D × M`; column `m` is the `m`-th random direction.
    pub weights: Matrix,
    pub offsets: Vec<f64>,
    pub activation: KernelActivation,
    pub seed: u64,
}

impl RandomFeatureMap {
    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn feature_count(&self) -> usize {
        self.weights.cols()
    }
}

/// Draws `W ~ N(0, σ²)` entrywise; offsets are `hac_offset` for ReLU
/// features and `U[0, 2π)` for cosine features.
pub fn sample_feature_map(
    dim: usize,
    cfg: &KernelConfig,
    activation: KernelActivation,
    seed: u64,
) -> Result<RandomFeatureMap> {
    cfg.validate()?;
    if dim == 0 {
        return Err(Error::InvalidConfig("feature map input dim must be ≥ 1".into()));
    }
    let m = cfg.feature_count;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Matrix::zeros(dim, m);
    for v in weights.data_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = cfg.sigma * z;
    }
    let offsets = match activation {
        KernelActivation::Relu => vec![cfg.hac_offset; m],
        KernelActivation::Cosine => (0..m).map(|_| rng.random::<f64>() * 2.0 * PI).collect(),
    };
    Ok(RandomFeatureMap {
        weights,
        offsets,
        activation,
        seed,
    })
}

/// `Φ(z) = √(2/M) δ(Wᵀ log₀ᶜ(z) + b)`.
pub fn kernel_features(z: &BallPoint, map: &RandomFeatureMap, cfg: &KernelConfig) -> Result<Vec<f64>> {
    if z.dim() != map.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "kernel features",
            expected: map.input_dim(),
            found: z.dim(),
        });
    }
    let u = log_map_origin(z, &cfg.curvature);
    let m = map.feature_count();
    let scale = libm::sqrt(2.0 / m as f64);
    let mut proj = map.offsets.clone();
    for (d, ud) in u.coords().iter().enumerate() {
        for (p, w) in proj.iter_mut().zip(map.weights.row(d)) {
            *p += ud * w;
        }
    }
    let act = map.activation;
    Ok(proj
        .into_iter()
        .map(|p| {
            scale
                * match act {
                    KernelActivation::Relu => p.max(0.0),
                    KernelActivation::Cosine => libm::cos(p),
                }
        })
        .collect())
}

/// `⟨Φ(a), Φ(b)⟩` under a shared map.
pub fn kernel_estimate(
    a: &BallPoint,
    b: &BallPoint,
    map: &RandomFeatureMap,
    cfg: &KernelConfig,
) -> Result<f64> {
    let fa = kernel_features(a, map, cfg)?;
    let fb = kernel_features(b, map, cfg)?;
    Ok(dot(&fa, &fb))
}

/// Monte-Carlo estimate of the defining integral with fresh draws of `w`.
pub fn mc_kernel_oracle(
    a: &BallPoint,
    b: &BallPoint,
    cfg: &KernelConfig,
    activation: KernelActivation,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    cfg.validate()?;
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "kernel oracle",
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if samples == 0 {
        return Err(Error::InvalidConfig("samples must be ≥ 1".into()));
    }
    let ua = log_map_origin(a, &cfg.curvature);
    let ub = log_map_origin(b, &cfg.curvature);
    let delta: Vec<f64> = ua.coords().iter().zip(ub.coords()).map(|(x, y)| x - y).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = vec![0.0; a.dim()];
    let mut acc = 0.0;
    for _ in 0..samples {
        for v in w.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = cfg.sigma * z;
        }
        acc += match activation {
            KernelActivation::Relu => {
                let pa = (dot(&w, ua.coords()) + cfg.hac_offset).max(0.0);
                let pb = (dot(&w, ub.coords()) + cfg.hac_offset).max(0.0);
                2.0 * pa * pb
            }
            KernelActivation::Cosine => libm::cos(dot(&w, &delta)),
        };
    }
    Ok(acc / samples as f64)
}

/// `exp(−σ² ‖log₀ᶜ(a) − log₀ᶜ(b)‖² / 2)`.
pub fn hrbf_closed_form(a: &BallPoint, b: &BallPoint, cfg: &KernelConfig) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "hrbf closed form",
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let ua = log_map_origin(a, &cfg.curvature);
    let ub = log_map_origin(b, &cfg.curvature);
    let delta: Vec<f64> = ua.coords().iter().zip(ub.coords()).map(|(x, y)| x - y).collect();
    let d = norm(&delta);
    Ok(libm::exp(-cfg.sigma * cfg.sigma * d * d / 2.0))
}

/// First-order arc-cos kernel in closed form, `2E[ReLU(wᵀu)ReLU(wᵀv)]` for
/// `w ~ N(0, σ²I)`: `σ²‖u‖‖v‖ (sin θ + (π − θ) cos θ) / π`.
pub fn arccos_closed_form(u: &[f64], v: &[f64], sigma: f64) -> f64 {
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    let cos = (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0);
    let theta = libm::acos(cos);
    sigma * sigma * nu * nv * (libm::sin(theta) + (PI - theta) * cos) / PI
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(m: usize) -> KernelConfig {
        KernelConfig {
            curvature: CurvatureConfig::new(1.0, 1e-5).unwrap(),
            feature_count: m,
            ..KernelConfig::default()
        }
    }

    fn pt(v: &[f64], c: &KernelConfig) -> BallPoint {
        BallPoint::new(v.to_vec(), &c.curvature).unwrap()
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let c = cfg(64);
        let a = sample_feature_map(3, &c, KernelActivation::Cosine, 7).unwrap();
        let b = sample_feature_map(3, &c, KernelActivation::Cosine, 7).unwrap();
        let d = sample_feature_map(3, &c, KernelActivation::Cosine, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.weights, d.weights);
        assert!(sample_feature_map(0, &c, KernelActivation::Relu, 1).is_err());
        assert!(sample_feature_map(3, &cfg(0), KernelActivation::Relu, 1).is_err());
    }

    #[test]
    fn column_norms_follow_chi_mean() {
        // E‖w‖ for w ~ N(0, σ²I_d) is σ√2 Γ((d+1)/2)/Γ(d/2); ≈ σ√d within 3%
        let d = 16;
        let c = KernelConfig {
            sigma: 1.5,
            ..cfg(10_000)
        };
        let map = sample_feature_map(d, &c, KernelActivation::Relu, 3).unwrap();
        let wt = map.weights.transpose();
        let mean: f64 = wt.row_iter().map(norm).sum::<f64>() / 10_000.0;
        let target = 1.5 * (d as f64).sqrt();
        assert!((mean - target).abs() / target < 0.03, "{mean} vs {target}");
        let exact = 1.5 * 2f64.sqrt() * libm::exp(libm::lgamma(8.5) - libm::lgamma(8.0));
        assert!((mean - exact).abs() / exact < 0.01);
    }

    #[test]
    fn origin_features() {
        let c = KernelConfig {
            feature_count: 50,
            ..cfg(50)
        };
        let z = BallPoint::origin(4);
        let relu = sample_feature_map(4, &c, KernelActivation::Relu, 1).unwrap();
        assert!(kernel_features(&z, &relu, &c).unwrap().iter().all(|&v| v == 0.0));
        let mut cos = sample_feature_map(4, &c, KernelActivation::Cosine, 1).unwrap();
        cos.offsets.iter_mut().for_each(|b| *b = 0.0);
        let f = kernel_features(&z, &cos, &c).unwrap();
        let expect = (2.0f64 / 50.0).sqrt();
        assert!(f.iter().all(|&v| (v - expect).abs() < 1e-15));
    }

    #[test]
    fn cosine_features_are_bounded() {
        let c = cfg(200);
        let map = sample_feature_map(3, &c, KernelActivation::Cosine, 11).unwrap();
        let f = kernel_features(&pt(&[0.3, -0.6, 0.1], &c), &map, &c).unwrap();
        assert!(dot(&f, &f) <= 2.0 + 1e-12);
        assert!(kernel_features(&pt(&[0.3, 0.1], &c), &map, &c).is_err());
    }

    #[test]
    fn hrbf_estimate_at_unit_gap() {
        // tangent gap ‖Δ‖ = 1 with σ = 1 → exp(−1/2)
        let c = cfg(20_000);
        let t = (0.5f64).tanh(); // log₀(z) = atanh(‖z‖) ẑ at c = 1
        let a = pt(&[t, 0.0], &c);
        let b = pt(&[-t, 0.0], &c);
        let map = sample_feature_map(2, &c, KernelActivation::Cosine, 5).unwrap();
        let est = kernel_estimate(&a, &b, &map, &c).unwrap();
        let closed = hrbf_closed_form(&a, &b, &c).unwrap();
        assert!((closed - (-0.5f64).exp()).abs() < 1e-12);
        assert!((est - closed).abs() <= 3.0 / (20_000f64).sqrt());
        let self_est = kernel_estimate(&a, &a, &map, &c).unwrap();
        assert!((self_est - 1.0).abs() <= 3.0 / (20_000f64).sqrt());
    }

    #[test]
    fn hrbf_closed_form_values() {
        let c = cfg(1);
        let a = pt(&[0.2, 0.1], &c);
        assert_eq!(hrbf_closed_form(&a, &a, &c).unwrap(), 1.0);
        let t = (1.0f64).tanh();
        let v = hrbf_closed_form(&pt(&[t, 0.0], &c), &pt(&[-t, 0.0], &c), &c).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-12);
        let far = hrbf_closed_form(&pt(&[0.999_999, 0.0], &c), &pt(&[-0.999_999, 0.0], &c), &c)
            .unwrap();
        assert!(far < 1e-10);
    }

    #[test]
    fn oracle_trivial_cases() {
        let c = cfg(1);
        let z = BallPoint::origin(3);
        assert_eq!(mc_kernel_oracle(&z, &z, &c, KernelActivation::Relu, 100, 1).unwrap(), 0.0);
        let a = pt(&[0.4, -0.2, 0.3], &c);
        let s = mc_kernel_oracle(&a, &a, &c, KernelActivation::Cosine, 1000, 1).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(mc_kernel_oracle(&a, &a, &c, KernelActivation::Cosine, 0, 1).is_err());
    }

    #[test]
    fn hac_orthogonal_tangents() {
        let c = cfg(1);
        let (ta, tb) = ((0.6f64).tanh(), (0.9f64).tanh());
        let a = pt(&[ta, 0.0], &c);
        let b = pt(&[0.0, tb], &c);
        let mc = mc_kernel_oracle(&a, &b, &c, KernelActivation::Relu, 1_000_000, 9).unwrap();
        let expect = 0.6 * 0.9 / PI;
        assert!((mc - expect).abs() < 5e-3, "{mc} vs {expect}");
        assert!((arccos_closed_form(&[0.6, 0.0], &[0.0, 0.9], 1.0) - expect).abs() < 1e-15);
    }

    #[test]
    fn hac_with_offset_tracks_oracle() {
        let c = KernelConfig {
            hac_offset: 0.3,
            ..cfg(40_000)
        };
        let a = pt(&[0.3, 0.2, -0.1], &c);
        let b = pt(&[-0.1, 0.4, 0.2], &c);
        let map = sample_feature_map(3, &c, KernelActivation::Relu, 21).unwrap();
        let est = kernel_estimate(&a, &b, &map, &c).unwrap();
        let mc = mc_kernel_oracle(&a, &b, &c, KernelActivation::Relu, 400_000, 22).unwrap();
        assert!((est - mc).abs() <= 5.0 / (40_000f64).sqrt() + 5.0 / (400_000f64).sqrt());
    }
}
