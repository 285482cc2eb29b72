//! Finite-blocklength rate model (normal approximation) and its concave
//! first-order surrogate around an expansion SINR.

use std::f64::consts::{LOG2_E, SQRT_2};

use thiserror::Error;

use crate::model::Blocklength;

/// Expansion points are floored here; the surrogate slope diverges at zero SINR.
pub const TAYLOR_POINT_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FblError {
    #[error("probability {0} outside the open interval (0, 1)")]
    Probability(f64),
    #[error("bandwidth must be positive, got {0}")]
    Bandwidth(f64),
    #[error("blocklength must be positive")]
    Blocklength,
    #[error("expansion point must be positive, got {0}")]
    ExpansionPoint(f64),
}

/// Gaussian tail probability `Q(x) = P[N(0,1) > x]`.
#[inline]
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Inverse of [`q_function`] on (0, 1).
///
/// A rational approximation of the normal quantile seeds Halley iterations on
/// `Q(x) - p`, which converge to full double precision in two or three steps.
pub fn q_inverse(p: f64) -> Result<f64, FblError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(FblError::Probability(p));
    }
    if p > 0.5 {
        return Ok(-q_inverse_upper(1.0 - p));
    }
    Ok(q_inverse_upper(p))
}

/// `p` in (0, 0.5]; result is non-negative.
fn q_inverse_upper(p: f64) -> f64 {
    let mut x = -normal_quantile_guess(p);
    // sqrt(2 pi)
    const SQRT_2PI: f64 = 2.506_628_274_631_000_5;
    for _ in 0..8 {
        let err = q_function(x) - p;
        let u = err * SQRT_2PI * (0.5 * x * x).exp();
        let step = u / (1.0 - 0.5 * x * u);
        x += step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Lower-tail normal quantile approximation (relative error ~1e-9).
fn normal_quantile_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_690e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Channel dispersion `1 - (1 + gamma)^-2`.
#[inline]
pub fn dispersion(gamma: f64) -> f64 {
    let u = 1.0 + gamma;
    1.0 - 1.0 / (u * u)
}

/// Block error rate, blocklength and bandwidth of one coded link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FblParams {
    epsilon: f64,
    blocklength: Blocklength,
    bandwidth_hz: f64,
    penalty: f64,
}

impl FblParams {
    pub fn new(epsilon: f64, blocklength: Blocklength, bandwidth_hz: f64) -> Result<Self, FblError> {
        let qinv = q_inverse(epsilon)?;
        if !(bandwidth_hz.is_finite() && bandwidth_hz > 0.0) {
            return Err(FblError::Bandwidth(bandwidth_hz));
        }
        let penalty = match blocklength {
            Blocklength::Finite(0) => return Err(FblError::Blocklength),
            Blocklength::Finite(l) => LOG2_E * qinv / f64::from(l).sqrt(),
            Blocklength::Infinite => 0.0,
        };
        Ok(Self {
            epsilon,
            blocklength,
            bandwidth_hz,
            penalty,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn blocklength(&self) -> Blocklength {
        self.blocklength
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.bandwidth_hz
    }

    /// `D(eps) = log2(e) Q^-1(eps) / sqrt(l)`; zero for infinite blocklength.
    pub fn penalty(&self) -> f64 {
        self.penalty
    }
}

/// Normal-approximation rate in bits per channel use, without clamping.
#[inline]
pub fn spectral_efficiency_raw(gamma: f64, params: &FblParams) -> f64 {
    (1.0 + gamma).log2() - params.penalty * dispersion(gamma).sqrt()
}

/// Achievable rate in bits/s, clamped at zero.
pub fn fbl_rate(gamma: f64, params: &FblParams) -> f64 {
    params.bandwidth_hz * spectral_efficiency_raw(gamma, params).max(0.0)
}

/// Tangent-line surrogate of the dispersion penalty around `point`.
///
/// In spectral-efficiency units the surrogate is
/// `log2(1 + g) - slope * g + intercept`, which is concave in `g` and touches
/// the unclamped rate at `g = point`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorSurrogate {
    pub point: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl TaylorSurrogate {
    pub fn at(point: f64, params: &FblParams) -> Result<Self, FblError> {
        if !(point.is_finite() && point > 0.0) {
            return Err(FblError::ExpansionPoint(point));
        }
        let root_v = dispersion(point).sqrt();
        let d_root_v = (1.0 + point).powi(-3) / root_v;
        let d = params.penalty;
        Ok(Self {
            point,
            slope: d * d_root_v,
            intercept: d * (d_root_v * point - root_v),
        })
    }

    /// Surrogate rate in bits per channel use.
    #[inline]
    pub fn spectral_efficiency(&self, gamma: f64) -> f64 {
        (1.0 + gamma).log2() - self.slope * gamma + self.intercept
    }
}

/// Surrogate rate in bits/s at `gamma` for the expansion point `point`.
pub fn taylor_rate(gamma: f64, point: f64, params: &FblParams) -> Result<f64, FblError> {
    let s = TaylorSurrogate::at(point, params)?;
    Ok(params.bandwidth_hz * s.spectral_efficiency(gamma))
}
