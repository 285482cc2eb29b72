//! Effective error rates under multi-connectivity with successive decoding,
//! and the per-link BLER budget that meets given QoS targets.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReliabilityError {
    #[error("QoS targets leave no private budget: q_lc - sqrt(2 q_hc) = {0}")]
    InfeasibleQos(f64),
    #[error("invalid QoS target {0}")]
    InvalidTarget(f64),
}

/// Per-link block error rates for common and private streams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlerBudget {
    pub eps_c: f64,
    pub eps_p: f64,
}

/// Loss probability of UE `i`'s common message: AP `i` fails on it, and AP
/// `j` fails either on `s^c_j` (blocking the cross decode) or on `s^c_i`.
#[inline]
pub fn effective_common_error(eps_ci: f64, eps_cj: f64) -> f64 {
    eps_ci * (1.0 - (1.0 - eps_ci) * (1.0 - eps_cj))
}

/// Loss probability of UE `i`'s private message, which needs both commons
/// decoded first.
#[inline]
pub fn effective_private_error(eps_ci: f64, eps_cj: f64, eps_pi: f64) -> f64 {
    1.0 - (1.0 - eps_ci) * (1.0 - eps_cj) * (1.0 - eps_pi)
}

/// BLERs for rate-splitting: `eps_c = sqrt(q_hc / 2)` and
/// `eps_p = q_lc - sqrt(2 q_hc)`.
pub fn bler_budget_from_qos(q_hc: f64, q_lc: f64) -> Result<BlerBudget, ReliabilityError> {
    for q in [q_hc, q_lc] {
        if !(q > 0.0 && q < 1.0) {
            return Err(ReliabilityError::InvalidTarget(q));
        }
    }
    let eps_p = q_lc - (2.0 * q_hc).sqrt();
    if eps_p <= 0.0 {
        return Err(ReliabilityError::InfeasibleQos(eps_p));
    }
    Ok(BlerBudget {
        eps_c: (q_hc / 2.0).sqrt(),
        eps_p,
    })
}

/// Single-connectivity TDM: the targets are used directly as link BLERs.
pub fn sc_bler_budget(q_hc: f64, q_lc: f64) -> BlerBudget {
    BlerBudget {
        eps_c: q_hc,
        eps_p: q_lc,
    }
}

/// Common-stream BLER of the multi-connectivity TDM HC phase.
pub fn mc_tdm_common_bler(q_hc: f64) -> f64 {
    (q_hc / 2.0).sqrt()
}
