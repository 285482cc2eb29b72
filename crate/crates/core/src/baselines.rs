//! Time-division reference schemes.
//!
//! A fraction `alpha` of every slot carries HC traffic and the rest LC
//! traffic. In the single-connectivity variant each AP decodes only its own
//! UE with the other UE as noise; in the multi-connectivity variant the HC
//! phase decodes both UEs' messages at both APs.
//!
//! For two users treating interference as noise, every Pareto-optimal power
//! pair has at least one UE at full power. Each phase is therefore searched
//! along that one-dimensional boundary, on which UE 1's rate is
//! non-increasing and UE 2's is non-decreasing.

use thiserror::Error;

use crate::fblrate::{fbl_rate, FblError, FblParams};
use crate::model::{
    packets_per_slot_to_rate, rate_to_packets_per_slot, ArrivalRates, PowerAllocation, RateAllocation,
    ServiceRates, SystemConfig, NUM_UES,
};
use crate::reliability::mc_tdm_common_bler;
use crate::scasolver::Objective;
use crate::sinr::{tdm_mc_sinrs, tdm_sc_sinrs};

const BISECTION_STEPS: usize = 100;
const PHASE_GRID: usize = 100;
const ALPHA_GRID: usize = 40;
const ALPHA_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TdmError {
    #[error("no time split stabilises the requested arrivals")]
    Infeasible,
    #[error("weights must be finite and non-negative")]
    InvalidWeights,
    #[error(transparent)]
    Fbl(#[from] FblError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TdmScheme {
    SingleConnectivity,
    MultiConnectivity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdmSolution {
    /// Share of each slot given to HC traffic.
    pub alpha: f64,
    /// HC-phase powers, carried in `pc`.
    pub hc_powers: PowerAllocation,
    /// LC-phase powers, carried in `pp`.
    pub lc_powers: PowerAllocation,
    /// Per-phase link rates before time sharing, bits/s.
    pub rates: RateAllocation,
    pub effective_service: ServiceRates,
    /// Objective of the time-shared rates, bits/s.
    pub objective: f64,
}

impl TdmSolution {
    /// Minimum LC service across UEs, packets/slot.
    pub fn lc_packets_per_slot(&self) -> f64 {
        self.effective_service.lc[0].min(self.effective_service.lc[1])
    }
}

/// Powers at position `s` in `[-1, 1]` along the Pareto boundary: UE 1 at
/// full power for `s <= 0`, UE 2 at full power for `s >= 0`.
fn boundary_powers(s: f64, cfg: &SystemConfig) -> [f64; 2] {
    let (p1, p2) = (cfg.p_max(0), cfg.p_max(1));
    if s <= 0.0 {
        [p1, (1.0 + s) * p2]
    } else {
        [(1.0 - s) * p1, p2]
    }
}

/// Link rates of one phase as a function of the phase powers.
struct Phase<'a> {
    cfg: &'a SystemConfig,
    params: FblParams,
    cross_decode: bool,
}

impl<'a> Phase<'a> {
    fn hc(scheme: TdmScheme, cfg: &'a SystemConfig) -> Result<Self, FblError> {
        let (eps, cross_decode) = match scheme {
            TdmScheme::SingleConnectivity => (cfg.q_hc(), false),
            TdmScheme::MultiConnectivity => (mc_tdm_common_bler(cfg.q_hc()), true),
        };
        Ok(Self {
            cfg,
            params: FblParams::new(eps, cfg.blocklength(), cfg.bandwidth_hz())?,
            cross_decode,
        })
    }

    fn lc(cfg: &'a SystemConfig) -> Result<Self, FblError> {
        Ok(Self {
            cfg,
            params: FblParams::new(cfg.q_lc(), cfg.blocklength(), cfg.bandwidth_hz())?,
            cross_decode: false,
        })
    }

    fn rates(&self, powers: [f64; 2]) -> [f64; 2] {
        let g = if self.cross_decode {
            tdm_mc_sinrs(powers, self.cfg)
        } else {
            tdm_sc_sinrs(powers, self.cfg)
        };
        g.map(|g| fbl_rate(g, &self.params))
    }

    fn at(&self, s: f64) -> [f64; 2] {
        self.rates(boundary_powers(s, self.cfg))
    }

    /// `r_decode[i][j]`: AP `i` decoding UE `j` in this phase; zero off the
    /// diagonal without cross decoding.
    fn decode_rates(&self, powers: [f64; 2]) -> [[f64; 2]; 2] {
        let own = tdm_sc_sinrs(powers, self.cfg).map(|g| fbl_rate(g, &self.params));
        let mut out = [[0.0; 2]; 2];
        for i in 0..NUM_UES {
            let j = 1 - i;
            out[i][i] = own[i];
            if self.cross_decode {
                let g = self.cfg.gain_sq(j, i) * powers[i] / self.cfg.noise(j);
                out[j][i] = fbl_rate(g, &self.params);
            }
        }
        out
    }

    /// Range of `s` on which `rate_i >= demand_i` for both UEs.
    fn feasible_interval(&self, demand: [f64; 2]) -> Option<(f64, f64)> {
        let lo = if self.at(-1.0)[1] >= demand[1] {
            -1.0
        } else if self.at(1.0)[1] < demand[1] {
            return None;
        } else {
            bisect(-1.0, 1.0, |s| self.at(s)[1] < demand[1]).1
        };
        let hi = if self.at(1.0)[0] >= demand[0] {
            1.0
        } else if self.at(-1.0)[0] < demand[0] {
            return None;
        } else {
            bisect(-1.0, 1.0, |s| self.at(s)[0] >= demand[0]).0
        };
        (lo <= hi).then_some((lo, hi))
    }

    /// Maximise `min_i rate_i / weight_i` over UEs with positive weight,
    /// subject to `rate_i >= demand_i`.
    fn weighted_max_min(&self, weight: [f64; 2], demand: [f64; 2]) -> Option<f64> {
        let (lo, hi) = self.feasible_interval(demand)?;
        let s = match (weight[0] > 0.0, weight[1] > 0.0) {
            (true, true) => {
                let gap = |s: f64| {
                    let r = self.at(s);
                    r[0] / weight[0] - r[1] / weight[1]
                };
                if gap(lo) <= 0.0 {
                    lo
                } else if gap(hi) >= 0.0 {
                    hi
                } else {
                    let (a, b) = bisect(lo, hi, |s| gap(s) > 0.0);
                    0.5 * (a + b)
                }
            }
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => 0.0,
        };
        Some(s)
    }

    /// Maximise `weight . rate` subject to `rate_i >= demand_i`.
    fn weighted_sum(&self, weight: [f64; 2], demand: [f64; 2]) -> Option<(f64, f64)> {
        let (lo, hi) = self.feasible_interval(demand)?;
        let value = |s: f64| {
            let r = self.at(s);
            weight[0] * r[0] + weight[1] * r[1]
        };
        Some(grid_then_golden(lo, hi, PHASE_GRID, 1e-9, value))
    }
}

/// Bisection for a predicate that is true on `[lo, x*)` and false after;
/// returns the final bracket `(last true, first false)`.
fn bisect(mut lo: f64, mut hi: f64, pred: impl Fn(f64) -> bool) -> (f64, f64) {
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// Grid search followed by golden-section refinement around the best cell.
/// Returns `(argmax, max)`.
fn grid_then_golden(lo: f64, hi: f64, cells: usize, tol: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    if hi <= lo {
        return (lo, f(lo));
    }
    let step = (hi - lo) / cells as f64;
    let (mut best_k, mut best) = (0, f64::NEG_INFINITY);
    for k in 0..=cells {
        let v = f(lo + step * k as f64);
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let mut a = (lo + step * (best_k as f64 - 1.0)).max(lo);
    let mut b = (lo + step * (best_k as f64 + 1.0)).min(hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol * (hi - lo).max(1.0) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    // the grid point can beat the refined one on a non-unimodal cell
    if fx >= best {
        (x, fx)
    } else {
        (lo + step * best_k as f64, best)
    }
}

fn validate_objective(obj: &Objective) -> Result<(), TdmError> {
    match obj {
        Objective::WeightedSum(w) if w.iter().any(|v| !v.is_finite() || *v < 0.0) => Err(TdmError::InvalidWeights),
        _ => Ok(()),
    }
}

struct Demands {
    hc: [f64; 2],
    lc: [f64; 2],
}

impl Demands {
    fn new(arrivals: &ArrivalRates, cfg: &SystemConfig) -> Self {
        Self {
            hc: arrivals.a_hc.map(|a| packets_per_slot_to_rate(a, cfg)),
            lc: arrivals.a_lc.map(|a| packets_per_slot_to_rate(a, cfg)),
        }
    }

    /// Link rates phase-by-phase for a given time share.
    fn per_phase(need: [f64; 2], share: f64) -> Option<[f64; 2]> {
        if need.iter().all(|&n| n == 0.0) {
            return Some([0.0; 2]);
        }
        (share > 0.0).then(|| need.map(|n| n / share))
    }
}

/// Smallest HC share that supports the HC demands, with its powers.
fn min_alpha(hc: &Phase, need: [f64; 2]) -> Result<(f64, [f64; 2]), TdmError> {
    if need.iter().all(|&n| n == 0.0) {
        return Ok((0.0, [0.0; 2]));
    }
    let s = hc.weighted_max_min(need, [0.0; 2]).ok_or(TdmError::Infeasible)?;
    let rates = hc.at(s);
    let mut alpha = 0.0f64;
    for i in 0..NUM_UES {
        if need[i] > 0.0 {
            if rates[i] <= 0.0 {
                return Err(TdmError::Infeasible);
            }
            alpha = alpha.max(need[i] / rates[i]);
        }
    }
    if alpha > 1.0 {
        return Err(TdmError::Infeasible);
    }
    Ok((alpha, boundary_powers(s, hc.cfg)))
}

fn assemble(
    alpha: f64,
    hc: &Phase,
    hc_powers: [f64; 2],
    lc: &Phase,
    lc_powers: [f64; 2],
    obj: &Objective,
    cfg: &SystemConfig,
) -> TdmSolution {
    let rc = hc.rates(hc_powers);
    let rp = lc.rates(lc_powers);
    let rates = RateAllocation { rc, rp, r_decode: hc.decode_rates(hc_powers) };
    let eff_c = rc.map(|r| alpha * r);
    let eff_p = rp.map(|r| (1.0 - alpha) * r);
    TdmSolution {
        alpha,
        hc_powers: PowerAllocation::new(hc_powers, [0.0; 2]),
        lc_powers: PowerAllocation::new([0.0; 2], lc_powers),
        rates,
        effective_service: ServiceRates {
            hc: eff_c.map(|r| rate_to_packets_per_slot(r, cfg)),
            lc: eff_p.map(|r| rate_to_packets_per_slot(r, cfg)),
        },
        objective: obj.evaluate(&eff_c, &eff_p),
    }
}

fn solve_tdm(
    scheme: TdmScheme,
    arrivals: &ArrivalRates,
    obj: Objective,
    cfg: &SystemConfig,
) -> Result<TdmSolution, TdmError> {
    validate_objective(&obj)?;
    let hc = Phase::hc(scheme, cfg)?;
    let lc = Phase::lc(cfg)?;
    let need = Demands::new(arrivals, cfg);
    let (alpha_min, hc_min_powers) = min_alpha(&hc, need.hc)?;

    match obj {
        Objective::MaxMinPrivate => {
            // the LC objective only grows with 1 - alpha, so the smallest HC share is optimal
            let demand = Demands::per_phase(need.lc, 1.0 - alpha_min).ok_or(TdmError::Infeasible)?;
            let s = lc.weighted_max_min([1.0, 1.0], demand).ok_or(TdmError::Infeasible)?;
            Ok(assemble(alpha_min, &hc, hc_min_powers, &lc, boundary_powers(s, cfg), &obj, cfg))
        }
        Objective::WeightedSum(w) => {
            let alpha_max = if need.lc.iter().all(|&n| n == 0.0) {
                1.0
            } else {
                1.0 - min_alpha(&lc, need.lc)?.0
            };
            if alpha_max < alpha_min {
                return Err(TdmError::Infeasible);
            }
            // inner optimum at a fixed split: (value, hc position, lc position)
            let inner = |alpha: f64| -> Option<(f64, f64, f64)> {
                let (sc, vc) = match Demands::per_phase(need.hc, alpha) {
                    Some(d) if alpha > 0.0 => hc.weighted_sum([w[0], w[1]], d)?,
                    Some(_) => (0.0, 0.0),
                    None => return None,
                };
                let (sp, vp) = match Demands::per_phase(need.lc, 1.0 - alpha) {
                    Some(d) if alpha < 1.0 => lc.weighted_sum([w[2], w[3]], d)?,
                    Some(_) => (0.0, 0.0),
                    None => return None,
                };
                Some((alpha * vc + (1.0 - alpha) * vp, sc, sp))
            };
            let score = |alpha: f64| inner(alpha).map_or(f64::NEG_INFINITY, |v| v.0);
            let (alpha, _) = grid_then_golden(alpha_min, alpha_max, ALPHA_GRID, ALPHA_TOL, score);
            let (_, sc, sp) = inner(alpha).ok_or(TdmError::Infeasible)?;
            let hc_powers = if alpha > 0.0 { boundary_powers(sc, cfg) } else { [0.0; 2] };
            let lc_powers = if alpha < 1.0 { boundary_powers(sp, cfg) } else { [0.0; 2] };
            Ok(assemble(alpha, &hc, hc_powers, &lc, lc_powers, &obj, cfg))
        }
    }
}

/// Single-connectivity TDM; interference is treated as noise and the QoS
/// targets are used directly as link BLERs.
pub fn solve_sc_tdm(arrivals: &ArrivalRates, obj: Objective, cfg: &SystemConfig) -> Result<TdmSolution, TdmError> {
    solve_tdm(TdmScheme::SingleConnectivity, arrivals, obj, cfg)
}

/// Multi-connectivity TDM; the HC phase decodes both UEs at both APs.
pub fn solve_mc_tdm(arrivals: &ArrivalRates, obj: Objective, cfg: &SystemConfig) -> Result<TdmSolution, TdmError> {
    solve_tdm(TdmScheme::MultiConnectivity, arrivals, obj, cfg)
}

pub fn solve(
    scheme: TdmScheme,
    arrivals: &ArrivalRates,
    obj: Objective,
    cfg: &SystemConfig,
) -> Result<TdmSolution, TdmError> {
    solve_tdm(scheme, arrivals, obj, cfg)
}
