//! The adaptive multivariate Gaussian proposal.
//!
//! Candidates are drawn as `center + s_k L z`, where `L` is the Cholesky
//! factor of the proposal covariance, `z` is a vector of standard normals,
//! `s_0` is the scale factor and `s_k = s_0 * dr_scales[k - 1]` for the
//! delayed-rejection stages. The stored covariance is the shape only; the
//! effective proposal covariance at stage `k` is `s_k^2 * covariance`.
//!
//! After each adaptation the distance between the old and new proposal is
//! summarized by [`adaptation_measure`], an upper bound on their total
//! variation distance obtained from the Bhattacharyya coefficient:
//! `TV <= sqrt(1 - BC^2)`. Both proposals are centered at the current state,
//! so the bound compares equal-mean Gaussians and depends on the covariances
//! only.

use alloc::vec::Vec;

use crate::codec::{ByteReader, ByteWriter};
use crate::linalg::{Cholesky, Matrix};
use crate::rng::Variates;
use crate::{Error, Result};

/// Relative ridge added to the running covariance at every adaptation.
pub const REGULARIZATION: f64 = 1e-10;

pub fn default_scale_factor(dimension: usize) -> f64 {
    2.38 / libm::sqrt(dimension as f64)
}

/// Stage `k` shrinks the proposal by `0.5^k`.
pub fn default_dr_scales(stages: usize) -> Vec<f64> {
    (1..=stages).map(|k| libm::pow(0.5, k as f64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalState {
    covariance: Matrix,
    chol: Cholesky,
    scale_factor: f64,
    dr_scales: Vec<f64>,
    adaptation_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationRecord {
    /// Upper bound on the total variation distance, in `[0, 1]`.
    pub measure: f64,
    pub at_chain_length: u64,
}

impl ProposalState {
    pub fn new(covariance: Matrix, scale_factor: f64, dr_scales: Vec<f64>) -> Result<Self> {
        if !(scale_factor > 0.0 && scale_factor.is_finite()) {
            return Err(Error::InvalidConfig("proposal scale factor must be a positive real".into()));
        }
        if dr_scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidConfig("delayed-rejection scales must be positive".into()));
        }
        if dr_scales.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidConfig("delayed-rejection scales must be strictly decreasing".into()));
        }
        if !covariance.is_symmetric(1e-12) {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = Cholesky::factor(&covariance)?;
        Ok(Self { covariance, chol, scale_factor, dr_scales, adaptation_count: 0 })
    }

    /// Isotropic start: covariance `std^2 I`, default scale factor and
    /// `dr_stages` geometric delayed-rejection scales.
    pub fn isotropic(dimension: usize, std: f64, dr_stages: usize) -> Result<Self> {
        Self::new(
            Matrix::identity(dimension).scaled(std * std),
            default_scale_factor(dimension),
            default_dr_scales(dr_stages),
        )
    }

    pub fn dimension(&self) -> usize {
        self.covariance.dim()
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }

    pub fn dr_scales(&self) -> &[f64] {
        &self.dr_scales
    }

    pub fn adaptation_count(&self) -> u64 {
        self.adaptation_count
    }

    /// Covariance the proposal actually draws from at stage 0.
    pub fn effective_covariance(&self) -> Matrix {
        self.covariance.scaled(self.scale_factor * self.scale_factor)
    }

    pub fn effective_scale(&self, stage: usize) -> Result<f64> {
        match stage {
            0 => Ok(self.scale_factor),
            k if k <= self.dr_scales.len() => Ok(self.scale_factor * self.dr_scales[k - 1]),
            k => Err(Error::StageOutOfRange { stage: k, max: self.dr_scales.len() }),
        }
    }

    /// `center + s_stage L z` for a caller-supplied normal vector `z`.
    pub fn candidate_from_normals(&self, center: &[f64], stage: usize, z: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dimension();
        if center.len() != d || z.len() != d || out.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: center.len() });
        }
        let s = self.effective_scale(stage)?;
        self.chol.mul_vec(z, out);
        for (o, c) in out.iter_mut().zip(center) {
            *o = c + s * *o;
        }
        Ok(())
    }

    /// Draws a candidate, consuming exactly `d` standard normals from `rng`.
    pub fn sample_candidate<R: Variates + ?Sized>(
        &self,
        center: &[f64],
        stage: usize,
        rng: &mut R,
        out: &mut [f64],
    ) -> Result<()> {
        self.effective_scale(stage)?;
        let d = self.dimension();
        let mut zbuf = [0.0f64; 16];
        if d <= zbuf.len() {
            for z in zbuf[..d].iter_mut() {
                *z = rng.standard_normal();
            }
            self.candidate_from_normals(center, stage, &zbuf[..d], out)
        } else {
            let z: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
            self.candidate_from_normals(center, stage, &z, out)
        }
    }

    /// Log density of moving `from -> to` under the stage proposal, up to the
    /// stage's normalizing constant.
    pub fn log_kernel(&self, stage: usize, from: &[f64], to: &[f64]) -> Result<f64> {
        let s = self.effective_scale(stage)?;
        let d = self.dimension();
        let mut buf = [0.0f64; 16];
        let q = if d <= buf.len() {
            for i in 0..d {
                buf[i] = to[i] - from[i];
            }
            self.chol.mahalanobis_sq(&buf[..d])
        } else {
            let diff: Vec<f64> = to.iter().zip(from).map(|(a, b)| a - b).collect();
            self.chol.mahalanobis_sq(&diff)
        };
        Ok(-0.5 * q / (s * s))
    }

    /// Re-shapes the proposal from the running chain covariance.
    ///
    /// With fewer than `d + 1` states the call is a no-op that reports a zero
    /// measure.
    pub fn adapt(&self, running_cov: &Matrix, chain_length: u64) -> Result<(ProposalState, AdaptationRecord)> {
        let d = self.dimension();
        if running_cov.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: running_cov.dim() });
        }
        if chain_length < d as u64 + 1 {
            return Ok((self.clone(), AdaptationRecord { measure: 0.0, at_chain_length: chain_length }));
        }
        let eps = REGULARIZATION * running_cov.trace() / d as f64;
        let mut covariance = running_cov.clone();
        for i in 0..d {
            covariance[(i, i)] += eps;
        }
        // exact symmetry
        for i in 0..d {
            for j in 0..i {
                covariance[(j, i)] = covariance[(i, j)];
            }
        }
        let chol = Cholesky::factor(&covariance)?;
        let next = ProposalState {
            covariance,
            chol,
            scale_factor: self.scale_factor,
            dr_scales: self.dr_scales.clone(),
            adaptation_count: self.adaptation_count + 1,
        };
        let measure = adaptation_measure(self, &next)?;
        Ok((next, AdaptationRecord { measure, at_chain_length: chain_length }))
    }

    pub fn encode(&self, w: &mut ByteWriter) {
        w.u64(self.dimension() as u64);
        w.f64s(self.covariance.as_slice());
        w.f64(self.scale_factor);
        w.f64s(&self.dr_scales);
        w.u64(self.adaptation_count);
    }

    pub fn decode(r: &mut ByteReader<'_>) -> Result<Self> {
        let d = r.u64()? as usize;
        let covariance = Matrix::from_row_major(d, r.f64s()?).map_err(|_| Error::Decode("proposal covariance"))?;
        let scale_factor = r.f64()?;
        let dr_scales = r.f64s()?;
        let adaptation_count = r.u64()?;
        let mut p = Self::new(covariance, scale_factor, dr_scales)?;
        p.adaptation_count = adaptation_count;
        Ok(p)
    }
}

/// `sqrt(1 - BC^2)` for the equal-mean Gaussians `N(0, a)` and `N(0, b)`.
pub fn bhattacharyya_tv_bound(a: &Matrix, b: &Matrix) -> Result<f64> {
    let ca = Cholesky::factor(a)?;
    let cb = Cholesky::factor(b)?;
    bound_from_factors(a, ca.log_det(), b, cb.log_det())
}

fn bound_from_factors(a: &Matrix, log_det_a: f64, b: &Matrix, log_det_b: f64) -> Result<f64> {
    let mean = a.add(b).scaled(0.5);
    let log_det_mean = Cholesky::factor(&mean)?.log_det();
    // Bhattacharyya distance; negative only through rounding
    let distance = (0.5 * (log_det_mean - 0.5 * (log_det_a + log_det_b))).max(0.0);
    // 1 - BC^2 = 1 - exp(-2 D_B), without cancellation for small D_B
    let gap = -libm::expm1(-2.0 * distance);
    Ok(libm::sqrt(gap.clamp(0.0, 1.0)))
}

/// Upper bound on the total variation distance between two proposals,
/// compared through their effective stage-0 covariances.
pub fn adaptation_measure(old: &ProposalState, new: &ProposalState) -> Result<f64> {
    let d = old.dimension();
    if new.dimension() != d {
        return Err(Error::DimensionMismatch { expected: d, found: new.dimension() });
    }
    if old.covariance == new.covariance && old.scale_factor == new.scale_factor {
        return Ok(0.0);
    }
    let a = old.effective_covariance();
    let b = new.effective_covariance();
    let log_s = |s: f64| 2.0 * d as f64 * libm::log(s);
    bound_from_factors(
        &a,
        old.chol.log_det() + log_s(old.scale_factor),
        &b,
        new.chol.log_det() + log_s(new.scale_factor),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn candidate_examples() {
        let p = ProposalState::new(Matrix::identity(2), 1.0, vec![]).unwrap();
        let mut out = [0.0; 2];
        p.candidate_from_normals(&[0.0, 0.0], 0, &[1.0, -1.0], &mut out).unwrap();
        assert_eq!(out, [1.0, -1.0]);

        let p = ProposalState::new(Matrix::diagonal(&[4.0]), 1.0, vec![]).unwrap();
        let mut out = [0.0];
        p.candidate_from_normals(&[5.0], 0, &[0.5], &mut out).unwrap();
        assert_eq!(out, [6.0]);

        let p = ProposalState::new(Matrix::identity(1), 2.38, vec![0.5]).unwrap();
        p.candidate_from_normals(&[0.0], 1, &[1.0], &mut out).unwrap();
        assert!((out[0] - 1.19).abs() < 1e-15);
        assert_eq!(
            p.candidate_from_normals(&[0.0], 2, &[1.0], &mut out),
            Err(Error::StageOutOfRange { stage: 2, max: 1 })
        );
    }

    #[test]
    fn dr_scales_must_decrease() {
        assert!(ProposalState::new(Matrix::identity(1), 1.0, vec![0.5, 0.5]).is_err());
        assert!(ProposalState::new(Matrix::identity(1), 1.0, vec![0.5, 0.25]).is_ok());
        assert_eq!(default_dr_scales(3), [0.5, 0.25, 0.125]);
    }

    #[test]
    fn identical_proposals_measure_zero() {
        let p = ProposalState::new(Matrix::diagonal(&[2.0, 3.0]), 1.3, vec![]).unwrap();
        assert_eq!(adaptation_measure(&p, &p).unwrap(), 0.0);
        // re-adapting to the covariance it already has leaves the measure at 0
        let cov = p.covariance().clone();
        let (q, rec) = p.adapt(&cov, 100).unwrap();
        let (_, rec2) = q.adapt(&cov, 200).unwrap();
        assert!(rec.measure < 1e-9);
        assert_eq!(rec2.measure, 0.0);
    }

    #[test]
    fn closed_form_examples() {
        let b = bhattacharyya_tv_bound(&Matrix::identity(1), &Matrix::diagonal(&[4.0])).unwrap();
        assert!((b - 0.447_214).abs() < 1e-6);
        let b = bhattacharyya_tv_bound(&Matrix::identity(2), &Matrix::diagonal(&[4.0, 4.0])).unwrap();
        assert!((b - 0.6).abs() < 1e-12);
    }

    #[test]
    fn adapt_from_variance_one_to_four() {
        let p = ProposalState::new(Matrix::identity(1), 1.0, vec![]).unwrap();
        let (q, rec) = p.adapt(&Matrix::diagonal(&[4.0]), 10).unwrap();
        assert!((rec.measure - 0.447_214).abs() < 1e-6);
        assert_eq!(q.adaptation_count(), 1);
        assert_eq!(rec.at_chain_length, 10);
    }

    #[test]
    fn short_chain_adapt_is_noop() {
        let p = ProposalState::isotropic(3, 1.0, 1).unwrap();
        let (q, rec) = p.adapt(&Matrix::diagonal(&[9.0, 9.0, 9.0]), 3).unwrap();
        assert_eq!(q, p);
        assert_eq!(rec.measure, 0.0);
    }

    #[test]
    fn huge_scale_ratio_tends_to_one() {
        let b = bhattacharyya_tv_bound(&Matrix::identity(2), &Matrix::identity(2).scaled(1e12)).unwrap();
        assert!(b > 0.999_999);
        assert!(b <= 1.0);
    }

    #[test]
    fn degenerate_running_cov_fails() {
        let p = ProposalState::isotropic(2, 1.0, 0).unwrap();
        assert_eq!(p.adapt(&Matrix::zeros(2), 10).map(|_| ()), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn encode_round_trip() {
        let p = ProposalState::new(Matrix::diagonal(&[2.0, 3.0]), 1.3, vec![0.5, 0.1]).unwrap();
        let (p, _) = p.adapt(&Matrix::from_row_major(2, vec![1.0, 0.3, 0.3, 2.0]).unwrap(), 50).unwrap();
        let mut w = ByteWriter::new();
        p.encode(&mut w);
        let bytes = w.into_inner();
        assert_eq!(ProposalState::decode(&mut ByteReader::new(&bytes)).unwrap(), p);
    }
}
