//! Target densities.
//!
//! A target is any deterministic map from a point in `R^d` to a natural-log
//! density, known up to an additive constant. Points of zero density return
//! `f64::NEG_INFINITY`. Targets may be evaluated from several workers at once,
//! so implementations must not hold mutable shared state.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::linalg::{Cholesky, Matrix};
use crate::{Error, Result};

pub trait TargetDensity {
    fn dimension(&self) -> usize;

    /// Natural-log density at `point`. `point.len()` equals `dimension()`.
    fn log_density(&self, point: &[f64]) -> f64;

    fn name(&self) -> &str {
        "target"
    }
}

impl<T: TargetDensity + ?Sized> TargetDensity for &T {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn log_density(&self, point: &[f64]) -> f64 {
        (**self).log_density(point)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Dimension-checked evaluation.
pub fn log_density<T: TargetDensity + ?Sized>(target: &T, point: &[f64]) -> Result<f64> {
    if point.len() != target.dimension() {
        return Err(Error::DimensionMismatch { expected: target.dimension(), found: point.len() });
    }
    let v = target.log_density(point);
    if v.is_nan() {
        return Err(Error::NanDensity);
    }
    Ok(v)
}

/// A target backed by a closure.
pub struct FnTarget<F> {
    dimension: usize,
    name: String,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnTarget<F> {
    pub fn new(dimension: usize, name: impl Into<String>, f: F) -> Self {
        Self { dimension, name: name.into(), f }
    }
}

impl<F: Fn(&[f64]) -> f64> TargetDensity for FnTarget<F> {
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn log_density(&self, point: &[f64]) -> f64 {
        (self.f)(point)
    }
    fn name(&self) -> &str {
        &self.name
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    MultivariateNormal,
    HimmelblauDensity,
    Banana,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::MultivariateNormal => "mvn",
            TargetKind::HimmelblauDensity => "himmelblau",
            TargetKind::Banana => "banana",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mvn" | "multivariate-normal" | "MultivariateNormal" => Some(Self::MultivariateNormal),
            "himmelblau" | "HimmelblauDensity" => Some(Self::HimmelblauDensity),
            "banana" | "Banana" => Some(Self::Banana),
            _ => None,
        }
    }
}

pub const DEFAULT_HIMMELBLAU_SCALE: f64 = 10.0;
pub const DEFAULT_BANANA_CURVATURE: f64 = 0.1;

/// Declarative description of a built-in target.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinTargetSpec {
    pub kind: TargetKind,
    pub dimension: usize,
    /// MVN mean; empty means the origin.
    pub mean: Vec<f64>,
    /// MVN covariance, row-major; empty means the identity.
    pub covariance: Vec<f64>,
    /// Himmelblau temperature `s` in `log p = -H(x, y) / s`.
    pub scale: f64,
    /// Banana twist parameter.
    pub curvature: f64,
}

impl BuiltinTargetSpec {
    pub fn mvn(mean: Vec<f64>, covariance: Vec<f64>) -> Self {
        Self { dimension: mean.len(), mean, covariance, ..Self::standard_normal(0) }
    }

    pub fn standard_normal(dimension: usize) -> Self {
        Self {
            kind: TargetKind::MultivariateNormal,
            dimension,
            mean: Vec::new(),
            covariance: Vec::new(),
            scale: DEFAULT_HIMMELBLAU_SCALE,
            curvature: DEFAULT_BANANA_CURVATURE,
        }
    }

    pub fn himmelblau(scale: f64) -> Self {
        Self { kind: TargetKind::HimmelblauDensity, dimension: 2, scale, ..Self::standard_normal(2) }
    }

    pub fn banana(dimension: usize, curvature: f64) -> Self {
        Self { kind: TargetKind::Banana, dimension, curvature, ..Self::standard_normal(dimension) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MvnTarget {
    mean: Vec<f64>,
    chol: Cholesky,
    log_norm: f64,
}

impl MvnTarget {
    pub fn new(mean: Vec<f64>, covariance: &Matrix) -> Result<Self> {
        if covariance.dim() != mean.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), found: covariance.dim() });
        }
        if !covariance.is_symmetric(1e-12) {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = Cholesky::factor(covariance)?;
        let d = mean.len() as f64;
        let log_norm = -0.5 * chol.log_det() - 0.5 * d * libm::log(2.0 * PI);
        Ok(Self { mean, chol, log_norm })
    }
}

/// Himmelblau's function `(x^2 + y - 11)^2 + (x + y^2 - 7)^2`.
pub fn himmelblau(x: f64, y: f64) -> f64 {
    let a = x * x + y - 11.0;
    let b = x + y * y - 7.0;
    a * a + b * b
}

#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinTarget {
    Mvn(MvnTarget),
    Himmelblau { scale: f64 },
    /// Haario's twisted Gaussian: `x1 ~ N(0, 100)`, `x2 + b (x1^2 - 100) ~ N(0, 1)`,
    /// remaining coordinates standard normal.
    Banana { dimension: usize, curvature: f64 },
}

pub fn make_builtin_target(spec: &BuiltinTargetSpec) -> Result<BuiltinTarget> {
    let d = spec.dimension;
    match spec.kind {
        TargetKind::MultivariateNormal => {
            if d == 0 {
                return Err(Error::BadDimension { what: "multivariate normal", found: d });
            }
            let mean = if spec.mean.is_empty() { vec![0.0; d] } else { spec.mean.clone() };
            if mean.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: mean.len() });
            }
            let cov = if spec.covariance.is_empty() {
                Matrix::identity(d)
            } else {
                Matrix::from_row_major(d, spec.covariance.clone())?
            };
            Ok(BuiltinTarget::Mvn(MvnTarget::new(mean, &cov)?))
        }
        TargetKind::HimmelblauDensity => {
            if d != 2 {
                return Err(Error::BadDimension { what: "Himmelblau density", found: d });
            }
            if !(spec.scale > 0.0 && spec.scale.is_finite()) {
                return Err(Error::InvalidConfig("target.scale must be a positive real".into()));
            }
            Ok(BuiltinTarget::Himmelblau { scale: spec.scale })
        }
        TargetKind::Banana => {
            if d < 2 {
                return Err(Error::BadDimension { what: "banana density", found: d });
            }
            if !spec.curvature.is_finite() {
                return Err(Error::InvalidConfig("target.curvature must be finite".into()));
            }
            Ok(BuiltinTarget::Banana { dimension: d, curvature: spec.curvature })
        }
    }
}

impl TargetDensity for BuiltinTarget {
    fn dimension(&self) -> usize {
        match self {
            BuiltinTarget::Mvn(m) => m.mean.len(),
            BuiltinTarget::Himmelblau { .. } => 2,
            BuiltinTarget::Banana { dimension, .. } => *dimension,
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            BuiltinTarget::Mvn(m) => {
                let mut diff = [0.0f64; 16];
                let d = m.mean.len();
                let q = if d <= diff.len() {
                    for i in 0..d {
                        diff[i] = x[i] - m.mean[i];
                    }
                    m.chol.mahalanobis_sq(&diff[..d])
                } else {
                    let diff: Vec<f64> = x.iter().zip(&m.mean).map(|(a, b)| a - b).collect();
                    m.chol.mahalanobis_sq(&diff)
                };
                m.log_norm - 0.5 * q
            }
            BuiltinTarget::Himmelblau { scale } => -himmelblau(x[0], x[1]) / scale,
            BuiltinTarget::Banana { dimension, curvature } => {
                let x1 = x[0];
                let y2 = x[1] + curvature * (x1 * x1 - 100.0);
                let rest: f64 = x[2..].iter().map(|v| v * v).sum();
                let d = *dimension as f64;
                -0.5 * (x1 * x1 / 100.0 + y2 * y2 + rest) - 0.5 * d * libm::log(2.0 * PI) - libm::log(10.0)
            }
        }
    }

    fn name(&self) -> &str {
        match self {
            BuiltinTarget::Mvn(_) => "mvn",
            BuiltinTarget::Himmelblau { .. } => "himmelblau",
            BuiltinTarget::Banana { .. } => "banana",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn standard_normal_values() {
        let t = make_builtin_target(&BuiltinTargetSpec::standard_normal(1)).unwrap();
        assert!(close(log_density(&t, &[0.0]).unwrap(), -0.918_938_53, 1e-8));
        assert!(close(log_density(&t, &[1.0]).unwrap(), -1.418_938_53, 1e-8));
    }

    #[test]
    fn mvn_peak_values() {
        let t = make_builtin_target(&BuiltinTargetSpec::standard_normal(4)).unwrap();
        assert!(close(t.log_density(&[0.0; 4]), -3.675_754_13, 1e-8));
        let spec = BuiltinTargetSpec::mvn(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 4.0]);
        let t = make_builtin_target(&spec).unwrap();
        assert!(close(t.log_density(&[0.0, 0.0]), -2.531_024_24, 1e-8));
    }

    #[test]
    fn himmelblau_values() {
        let t = make_builtin_target(&BuiltinTargetSpec::himmelblau(1.0)).unwrap();
        assert_eq!(t.log_density(&[3.0, 2.0]), 0.0);
        let t = make_builtin_target(&BuiltinTargetSpec::himmelblau(10.0)).unwrap();
        assert_eq!(t.log_density(&[0.0, 0.0]), -17.0);
    }

    #[test]
    fn invalid_specs() {
        let spec = BuiltinTargetSpec { dimension: 3, ..BuiltinTargetSpec::himmelblau(10.0) };
        assert!(matches!(make_builtin_target(&spec), Err(Error::BadDimension { .. })));
        let spec = BuiltinTargetSpec::mvn(vec![0.0, 0.0], vec![1.0, 2.0, 2.0, 1.0]);
        assert_eq!(make_builtin_target(&spec), Err(Error::NotPositiveDefinite));
        let spec = BuiltinTargetSpec::banana(1, 0.1);
        assert!(make_builtin_target(&spec).is_err());
        let t = make_builtin_target(&BuiltinTargetSpec::standard_normal(2)).unwrap();
        assert_eq!(log_density(&t, &[0.0]), Err(Error::DimensionMismatch { expected: 2, found: 1 }));
    }

    #[test]
    fn banana_is_normalized_at_ridge() {
        let t = make_builtin_target(&BuiltinTargetSpec::banana(2, 0.1)).unwrap();
        // ridge point x2 = -b (x1^2 - 100) has y2 = 0
        let lp = t.log_density(&[0.0, 10.0]);
        assert!(close(lp, -libm::log(2.0 * PI) - libm::log(10.0), 1e-12));
    }
}
