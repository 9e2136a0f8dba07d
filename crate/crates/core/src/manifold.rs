//! Poincaré-ball primitives: Möbius addition, geodesic distance, the
//! logarithmic map at the origin and the radial projection into the ball.
//!
//! The row kernels at the bottom (`project_log_row` and its adjoint) are what
//! the graph layers and the predictor actually run on every forward pass.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};

/// Curvature magnitude `c` of the ball `{z : c‖z‖² < 1}` and the boundary
/// margin used when projecting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurvature")]
pub struct CurvatureConfig {
    c: f64,
    epsilon: f64,
}

#[derive(Deserialize)]
struct RawCurvature {
    c: f64,
    epsilon: f64,
}

impl TryFrom<RawCurvature> for CurvatureConfig {
    type Error = Error;
    fn try_from(raw: RawCurvature) -> Result<Self> {
        Self::new(raw.c, raw.epsilon)
    }
}

impl Default for CurvatureConfig {
    fn default() -> Self {
        Self {
            c: 1e-3,
            epsilon: 1e-5,
        }
    }
}

impl CurvatureConfig {
    pub fn new(c: f64, epsilon: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "curvature must be positive and finite, got {c}"
            )));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        Ok(Self { c, epsilon })
    }

    pub fn with_curvature(c: f64) -> Result<Self> {
        Self::new(c, Self::default().epsilon)
    }

    #[inline]
    pub fn c(&self) -> f64 {
        self.c
    }

    #[inline]
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    #[inline]
    pub fn sqrt_c(&self) -> f64 {
        libm::sqrt(self.c)
    }

    /// Euclidean radius `1/√c` of the ball.
    pub fn radius(&self) -> f64 {
        1.0 / self.sqrt_c()
    }

    fn scaled_norm_sq(&self, coords: &[f64]) -> f64 {
        let n = norm(coords);
        self.c * n * n
    }
}

/// A point strictly inside the ball.
#[derive(Clone, Debug, PartialEq)]
pub struct BallPoint(Vec<f64>);

impl BallPoint {
    pub fn new(coords: Vec<f64>, cfg: &CurvatureConfig) -> Result<Self> {
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ball point"));
        }
        let s = cfg.scaled_norm_sq(&coords);
        if s >= 1.0 {
            return Err(Error::OutsideBall { scaled_norm_sq: s });
        }
        Ok(Self(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Self(alloc::vec![0.0; dim])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A vector in the tangent space at the origin (all of ℝⁿ).
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector(pub Vec<f64>);

impl TangentVector {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

/// Inverse hyperbolic tangent through `log1p`, accurate close to ±1.
#[inline]
pub fn atanh(x: f64) -> f64 {
    0.5 * libm::log1p(2.0 * x / (1.0 - x))
}

fn check_pair(a: &BallPoint, b: &BallPoint) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "ball point pair",
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

fn check_inside(p: &BallPoint, cfg: &CurvatureConfig) -> Result<()> {
    let s = cfg.scaled_norm_sq(p.coords());
    if s >= 1.0 {
        return Err(Error::OutsideBall { scaled_norm_sq: s });
    }
    Ok(())
}

/// Möbius addition `a ⊕_c b`.
pub fn mobius_add(a: &BallPoint, b: &BallPoint, cfg: &CurvatureConfig) -> Result<BallPoint> {
    check_pair(a, b)?;
    check_inside(a, cfg)?;
    check_inside(b, cfg)?;
    let coords = mobius_add_raw(a.coords(), b.coords(), cfg.c());
    if cfg.scaled_norm_sq(&coords) >= 1.0 {
        // only reachable through rounding right at the boundary
        return project_to_ball(&coords, cfg);
    }
    Ok(BallPoint(coords))
}

fn mobius_add_raw(a: &[f64], b: &[f64], c: f64) -> Vec<f64> {
    let ab = dot(a, b);
    let a2 = dot(a, a);
    let b2 = dot(b, b);
    let ca = 1.0 + 2.0 * c * ab + c * b2;
    let cb = 1.0 - c * a2;
    let den = 1.0 + 2.0 * c * ab + c * c * a2 * b2;
    a.iter()
        .zip(b)
        .map(|(x, y)| (ca * x + cb * y) / den)
        .collect()
}

/// Geodesic distance `2/√c · atanh(√c ‖a ⊕_c (−b)‖)`.
pub fn hyperbolic_distance(a: &BallPoint, b: &BallPoint, cfg: &CurvatureConfig) -> Result<f64> {
    check_pair(a, b)?;
    check_inside(a, cfg)?;
    check_inside(b, cfg)?;
    if a == b {
        return Ok(0.0);
    }
    let neg_b: Vec<f64> = b.coords().iter().map(|v| -v).collect();
    let diff = mobius_add_raw(a.coords(), &neg_b, cfg.c());
    let sc = cfg.sqrt_c();
    let arg = (sc * norm(&diff)).min(1.0 - f64::EPSILON);
    Ok(2.0 / sc * atanh(arg))
}

/// `log₀ᶜ(z) = atanh(√c‖z‖) · z / (√c‖z‖)`, with `log₀ᶜ(0) = 0`.
pub fn log_map_origin(z: &BallPoint, cfg: &CurvatureConfig) -> TangentVector {
    let mut out = alloc::vec![0.0; z.dim()];
    log_row(z.coords(), &mut out, cfg.sqrt_c());
    TangentVector(out)
}

/// Maps `x` into the ball: unchanged when `√c‖x‖ < 1`, otherwise shrunk
/// radially to radius `(1 − ε)/√c`.
pub fn project_to_ball(x: &[f64], cfg: &CurvatureConfig) -> Result<BallPoint> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("projection input"));
    }
    let n = norm(x);
    let sc = cfg.sqrt_c();
    if sc * n < 1.0 && cfg.c() * n * n < 1.0 {
        return Ok(BallPoint(x.to_vec()));
    }
    let k = (1.0 - cfg.epsilon()) / (sc * n);
    Ok(BallPoint(x.iter().map(|v| v * k).collect()))
}

/// `g(ρ) = atanh(√c ρ)/(√c ρ)`, the radial scale of the log map.
#[inline]
fn log_scale(u: f64) -> f64 {
    if u < 1e-4 {
        1.0 + u * u / 3.0
    } else {
        atanh(u) / u
    }
}

/// `(dg/du)/u` for `g(u) = atanh(u)/u`.
#[inline]
fn log_scale_slope_over_u(u: f64) -> f64 {
    if u < 1e-2 {
        let u2 = u * u;
        2.0 / 3.0 + u2 * (4.0 / 5.0 + u2 * (6.0 / 7.0 + u2 * 8.0 / 9.0))
    } else {
        (u / (1.0 - u * u) - atanh(u)) / (u * u * u)
    }
}

fn log_row(z: &[f64], out: &mut [f64], sqrt_c: f64) {
    let n = norm(z);
    let g = log_scale(sqrt_c * n);
    for (o, v) in out.iter_mut().zip(z) {
        *o = g * v;
    }
}

/// Whether a row is shrunk by the projection.
#[inline]
fn outside(n: f64, cfg: &CurvatureConfig) -> bool {
    let sc = cfg.sqrt_c();
    !(sc * n < 1.0 && cfg.c() * n * n < 1.0)
}

/// Row kernel for `log₀ᶜ(P(x))`.
pub fn project_log_row(x: &[f64], out: &mut [f64], cfg: &CurvatureConfig) {
    let n = norm(x);
    let sc = cfg.sqrt_c();
    let scale = if n == 0.0 {
        1.0
    } else if outside(n, cfg) {
        let kappa = (1.0 - cfg.epsilon()) / sc;
        log_scale(sc * kappa) * kappa / n
    } else {
        log_scale(sc * n)
    };
    for (o, v) in out.iter_mut().zip(x) {
        *o = scale * v;
    }
}

/// Adjoint of [`project_log_row`]: adds `Jᵀ grad_out` to `grad_in`.
///
/// Inside the ball the Jacobian is `g I + (g'/ρ) x xᵀ`. Outside, the output
/// depends only on the direction of `x`, giving `(g(κ)κ/‖x‖)(I − x̂x̂ᵀ)`.
pub fn project_log_row_backward(
    x: &[f64],
    grad_out: &[f64],
    grad_in: &mut [f64],
    cfg: &CurvatureConfig,
) {
    let n = norm(x);
    let sc = cfg.sqrt_c();
    if n == 0.0 {
        for (gi, go) in grad_in.iter_mut().zip(grad_out) {
            *gi += go;
        }
        return;
    }
    if outside(n, cfg) {
        let kappa = (1.0 - cfg.epsilon()) / sc;
        let a = log_scale(sc * kappa) * kappa / n;
        let radial = dot(x, grad_out) / (n * n);
        for ((gi, go), v) in grad_in.iter_mut().zip(grad_out).zip(x) {
            *gi += a * (go - radial * v);
        }
    } else {
        let u = sc * n;
        let g = log_scale(u);
        let h = sc * sc * log_scale_slope_over_u(u) * dot(x, grad_out);
        for ((gi, go), v) in grad_in.iter_mut().zip(grad_out).zip(x) {
            *gi += g * go + h * v;
        }
    }
}

/// Row-wise `log₀ᶜ(P(·))` over a matrix.
pub fn project_log_rows(x: &Matrix, cfg: &CurvatureConfig) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        project_log_row(x.row(i), out.row_mut(i), cfg);
    }
    out
}

/// Adjoint of [`project_log_rows`].
pub fn project_log_rows_backward(x: &Matrix, grad_out: &Matrix, cfg: &CurvatureConfig) -> Matrix {
    let mut g = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        project_log_row_backward(x.row(i), grad_out.row(i), g.row_mut(i), cfg);
    }
    g
}
