//! Successive convex approximation for the rate-splitting stabilisation
//! problem.
//!
//! Every outer iteration linearises the dispersion penalty of each rate
//! around the current SINRs, bounds each SINR from below with a quadratic
//! transform at its optimal auxiliary value, and solves the resulting convex
//! program with the barrier method in [`crate::barrier`]. The inner program is
//! posed in amplitudes `a = sqrt(p)`, where the quadratic-transform rows are
//! separable convex quadratics.

use std::io::Write;

use thiserror::Error;

use crate::barrier::{self, BarrierError, BarrierOptions, Constraint, ConvexProgram};
use crate::fblrate::{fbl_rate, FblError, FblParams, TaylorSurrogate, TAYLOR_POINT_FLOOR};
use crate::model::{
    packets_per_slot_to_rate, rate_to_packets_per_slot, ArrivalRates, PowerAllocation, RateAllocation,
    SystemConfig, FEASIBILITY_TOL, NUM_UES,
};
use crate::reliability::{bler_budget_from_qos, BlerBudget, ReliabilityError};
use crate::sinr::{rsma_sinrs, SinrSet};

/// Variable offsets in the inner program.
const AMP: usize = 0;
const GAM: usize = 4;
const RATE: usize = 10;
const AUX: usize = 14;

/// Common/private splits tried, in order, when the first linearisation admits no feasible point.
const RESTORATION_SPLITS: [f64; 3] = [0.9, 0.5, 0.99];
const DEFAULT_COMMON_SHARE: f64 = 0.7;
const MAX_BISECTIONS: u32 = 20;
/// Pulls the warm start off the constraint boundaries.
const START_MARGIN: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScaError {
    #[error("no power allocation stabilises the requested arrivals")]
    Infeasible,
    #[error(transparent)]
    Reliability(#[from] ReliabilityError),
    #[error(transparent)]
    Fbl(#[from] FblError),
    #[error("inner solver failed: {0}")]
    Inner(BarrierError),
}

/// Index of UE `ue`'s common stream at AP `ap` in the SINR layout
/// `[g11, g12, g21, g22, gp1, gp2]`.
#[inline]
pub const fn common_slot(ap: usize, ue: usize) -> usize {
    2 * ap + ue
}

#[inline]
pub const fn private_slot(ue: usize) -> usize {
    4 + ue
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// `min(R^p_1, R^p_2)`
    MaxMinPrivate,
    /// Weights over `[R^c_1, R^c_2, R^p_1, R^p_2]`.
    WeightedSum([f64; 4]),
}

impl Objective {
    pub fn evaluate(&self, rc: &[f64; 2], rp: &[f64; 2]) -> f64 {
        match self {
            Objective::MaxMinPrivate => rp[0].min(rp[1]),
            Objective::WeightedSum(w) => w[0] * rc[0] + w[1] * rc[1] + w[2] * rp[0] + w[3] * rp[1],
        }
    }

    fn swapped(&self) -> Self {
        match *self {
            Objective::MaxMinPrivate => Objective::MaxMinPrivate,
            Objective::WeightedSum(w) => Objective::WeightedSum([w[1], w[0], w[3], w[2]]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Relative objective change that ends the outer loop.
    pub tolerance: f64,
    pub barrier: BarrierOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-6,
            barrier: BarrierOptions::default(),
        }
    }
}

/// One SCA iterate: the power allocation and the surrogate data derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub p: PowerAllocation,
    pub gamma: [f64; 6],
    pub mu: [f64; 6],
    pub taylor_points: [f64; 6],
    pub iteration: usize,
}

impl SolverState {
    /// Linearise at `p`: SINRs, floored expansion points and optimal auxiliaries.
    pub fn at(p: PowerAllocation, cfg: &SystemConfig) -> Self {
        let gamma = rsma_sinrs(&p, cfg).to_layout();
        Self {
            p,
            gamma,
            mu: update_mu(&p, cfg),
            taylor_points: gamma.map(|g| g.max(TAYLOR_POINT_FLOOR)),
            iteration: 0,
        }
    }
}

/// Quadratic-transform bound for UE `i`'s common stream at AP `i`; the SINR
/// constraint holds iff the value is `<= 0`.
pub fn quad_transform_own_common(p: &PowerAllocation, i: usize, gamma: f64, mu: f64, cfg: &SystemConfig) -> f64 {
    let j = 1 - i;
    let den = cfg.gain_sq(i, i) * p.pp[i] + cfg.gain_sq(i, j) * (p.pc[j] + p.pp[j]) + cfg.noise(i);
    gamma - 2.0 * mu * cfg.gain(i, i) * p.pc[i].sqrt() + mu * mu * den
}

/// Bound for UE `j`'s common stream decoded at AP `i` after `s^c_i` is removed.
pub fn quad_transform_cross_common(p: &PowerAllocation, i: usize, gamma: f64, mu: f64, cfg: &SystemConfig) -> f64 {
    let j = 1 - i;
    let den = cfg.gain_sq(i, i) * p.pp[i] + cfg.gain_sq(i, j) * p.pp[j] + cfg.noise(i);
    gamma - 2.0 * mu * cfg.gain(i, j) * p.pc[j].sqrt() + mu * mu * den
}

/// Bound for UE `i`'s private stream at AP `i`.
pub fn quad_transform_private(p: &PowerAllocation, i: usize, gamma: f64, mu: f64, cfg: &SystemConfig) -> f64 {
    let j = 1 - i;
    let den = cfg.gain_sq(i, j) * p.pp[j] + cfg.noise(i);
    gamma - 2.0 * mu * cfg.gain(i, i) * p.pp[i].sqrt() + mu * mu * den
}

/// Auxiliaries that make every quadratic-transform bound tight at `p`, in
/// the SINR layout order.
pub fn update_mu(p: &PowerAllocation, cfg: &SystemConfig) -> [f64; 6] {
    let mut mu = [0.0; 6];
    for i in 0..NUM_UES {
        let j = 1 - i;
        let (hii, hij) = (cfg.gain_sq(i, i), cfg.gain_sq(i, j));
        let n = cfg.noise(i);
        mu[common_slot(i, i)] = cfg.gain(i, i) * p.pc[i].sqrt() / (hii * p.pp[i] + hij * (p.pc[j] + p.pp[j]) + n);
        mu[common_slot(i, j)] = cfg.gain(i, j) * p.pc[j].sqrt() / (hii * p.pp[i] + hij * p.pp[j] + n);
        mu[private_slot(i)] = cfg.gain(i, i) * p.pp[i].sqrt() / (hij * p.pp[j] + n);
    }
    mu
}

/// Evaluate all six quadratic-transform bounds in layout order.
pub fn quad_transform_all(p: &PowerAllocation, gamma: &[f64; 6], mu: &[f64; 6], cfg: &SystemConfig) -> [f64; 6] {
    let mut g = [0.0; 6];
    for i in 0..NUM_UES {
        let j = 1 - i;
        let ii = common_slot(i, i);
        let ij = common_slot(i, j);
        g[ii] = quad_transform_own_common(p, i, gamma[ii], mu[ii], cfg);
        g[ij] = quad_transform_cross_common(p, i, gamma[ij], mu[ij], cfg);
        g[private_slot(i)] = quad_transform_private(p, i, gamma[private_slot(i)], mu[private_slot(i)], cfg);
    }
    g
}

/// Link parameters for the common (`eps_c`) and private (`eps_p`) streams.
#[derive(Debug, Clone, Copy)]
struct LinkModels {
    common: FblParams,
    private: FblParams,
}

impl LinkModels {
    fn new(bler: &BlerBudget, cfg: &SystemConfig) -> Result<Self, FblError> {
        Ok(Self {
            common: FblParams::new(bler.eps_c, cfg.blocklength(), cfg.bandwidth_hz())?,
            private: FblParams::new(bler.eps_p, cfg.blocklength(), cfg.bandwidth_hz())?,
        })
    }

    fn for_slot(&self, slot: usize) -> &FblParams {
        if slot < 4 {
            &self.common
        } else {
            &self.private
        }
    }

    /// Lower bound on rate variables, in bits per channel use. Every surrogate
    /// stays above `-penalty` on `[0, expansion point]`.
    fn rate_floor(&self) -> f64 {
        -(2.0 + 2.0 * self.common.penalty().abs().max(self.private.penalty().abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Goal {
    Maximize(Objective),
    /// Minimise the largest stability shortfall.
    MinDeficit,
    /// Constraints only.
    Check,
}

struct Subproblem {
    program: ConvexProgram,
    surrogates: [TaylorSurrogate; 6],
    x0: Vec<f64>,
}

fn stream_rate_var(slot: usize) -> usize {
    // commons bound the *transmitting* UE's rate
    match slot {
        0 | 2 => RATE,
        1 | 3 => RATE + 1,
        4 => RATE + 2,
        _ => RATE + 3,
    }
}

fn build_subproblem(
    state: &SolverState,
    arrivals: &ArrivalRates,
    goal: Goal,
    links: &LinkModels,
    cfg: &SystemConfig,
) -> Result<Subproblem, ScaError> {
    let bw = cfg.bandwidth_hz();
    let floor = links.rate_floor();
    let mut surrogates = [TaylorSurrogate { point: 1.0, slope: 0.0, intercept: 0.0 }; 6];
    for (slot, s) in surrogates.iter_mut().enumerate() {
        *s = TaylorSurrogate::at(state.taylor_points[slot], links.for_slot(slot))?;
    }

    let has_aux = !matches!(goal, Goal::Maximize(Objective::WeightedSum(_)) | Goal::Check);
    let n = if has_aux { AUX + 1 } else { AUX };
    let mut rows = Vec::with_capacity(48);

    for k in 0..4 {
        rows.push(Constraint::lower_bound(AMP + k, 0.0));
    }
    let (ac, ap) = (|i: usize| AMP + i, |i: usize| AMP + 2 + i);
    for i in 0..NUM_UES {
        rows.push(Constraint::Quadratic {
            linear: vec![],
            quadratic: vec![(ac(i), 1.0), (ap(i), 1.0)],
            constant: -cfg.p_max(i),
        });
    }
    for k in 0..6 {
        rows.push(Constraint::lower_bound(GAM + k, 0.0));
    }

    // quadratic-transform rows: gamma - 2 mu h a + mu^2 (sum h^2 a^2 + sigma^2) <= 0
    for i in 0..NUM_UES {
        let j = 1 - i;
        let qt = |slot: usize, h: f64, amp: usize, interferers: Vec<(usize, f64)>| {
            let mu = state.mu[slot];
            if mu * h <= 1e-150 {
                // dead link or silent stream; the surrogate is decreasing below the floor point
                return Constraint::upper_bound(GAM + slot, TAYLOR_POINT_FLOOR);
            }
            Constraint::Quadratic {
                linear: vec![(GAM + slot, 1.0), (amp, -2.0 * mu * h)],
                quadratic: interferers.into_iter().map(|(v, g2)| (v, mu * mu * g2)).collect(),
                constant: mu * mu * cfg.noise(i),
            }
        };
        let (hii, hij) = (cfg.gain_sq(i, i), cfg.gain_sq(i, j));
        rows.push(qt(
            common_slot(i, i),
            cfg.gain(i, i),
            ac(i),
            vec![(ap(i), hii), (ac(j), hij), (ap(j), hij)],
        ));
        rows.push(qt(common_slot(i, j), cfg.gain(i, j), ac(j), vec![(ap(i), hii), (ap(j), hij)]));
        rows.push(qt(private_slot(i), cfg.gain(i, i), ap(i), vec![(ap(j), hij)]));
    }

    for (slot, s) in surrogates.iter().enumerate() {
        rows.push(Constraint::LogRate {
            rate: stream_rate_var(slot),
            sinr: GAM + slot,
            slope: s.slope,
            intercept: s.intercept,
        });
    }
    for k in 0..4 {
        rows.push(Constraint::lower_bound(RATE + k, floor));
    }

    // stability: arrivals * M / (T B) <= R
    let need = |a: f64| packets_per_slot_to_rate(a, cfg) / bw;
    let demands: Vec<(usize, f64)> = (0..NUM_UES)
        .flat_map(|i| [(RATE + i, arrivals.a_hc[i]), (RATE + 2 + i, arrivals.a_lc[i])])
        .filter(|&(_, a)| a > 0.0)
        .map(|(v, a)| (v, need(a)))
        .collect();
    for &(v, d) in &demands {
        let mut terms = vec![(v, -1.0)];
        if goal == Goal::MinDeficit {
            terms.push((AUX, -1.0));
        }
        rows.push(Constraint::Linear { terms, rhs: -d });
    }

    let mut cost = vec![0.0; n];
    match goal {
        Goal::Maximize(Objective::MaxMinPrivate) => {
            for i in 0..NUM_UES {
                rows.push(Constraint::Linear { terms: vec![(AUX, 1.0), (RATE + 2 + i, -1.0)], rhs: 0.0 });
            }
            rows.push(Constraint::lower_bound(AUX, floor));
            cost[AUX] = -1.0;
        }
        Goal::Maximize(Objective::WeightedSum(w)) => {
            for k in 0..4 {
                cost[RATE + k] = -w[k];
            }
        }
        Goal::MinDeficit => {
            rows.push(Constraint::lower_bound(AUX, -1.0));
            cost[AUX] = 1.0;
        }
        Goal::Check => {}
    }

    // starting guess at the linearisation point, repaired by the feasibility phase
    let mut x0 = vec![0.0; n];
    let amps = [state.p.pc[0], state.p.pc[1], state.p.pp[0], state.p.pp[1]];
    for k in 0..4 {
        x0[AMP + k] = amps[k].max(0.0).sqrt();
    }
    let sinr = rsma_sinrs(&state.p, cfg).to_layout();
    for k in 0..6 {
        x0[GAM + k] = sinr[k].max(0.0) * (1.0 - START_MARGIN);
    }
    let mut rate0 = [f64::INFINITY; 4];
    for (slot, s) in surrogates.iter().enumerate() {
        let v = stream_rate_var(slot) - RATE;
        rate0[v] = rate0[v].min(s.spectral_efficiency(x0[GAM + slot]));
    }
    for k in 0..4 {
        x0[RATE + k] = (rate0[k] - START_MARGIN).max(floor * 0.5);
    }
    if has_aux {
        x0[AUX] = match goal {
            Goal::MinDeficit => demands.iter().map(|&(v, d)| d - x0[v]).fold(-0.5, f64::max) + START_MARGIN,
            _ => x0[RATE + 2].min(x0[RATE + 3]) - START_MARGIN,
        };
    }

    Ok(Subproblem {
        program: ConvexProgram { num_vars: n, cost, constraints: rows },
        surrogates,
        x0,
    })
}

/// Result of one convex subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub power: PowerAllocation,
    /// Surrogate rates, clamped at zero.
    pub rates: RateAllocation,
    /// Unclamped surrogate `[R^c_1, R^c_2, R^p_1, R^p_2]` in bits/s.
    pub raw_rates: [f64; 4],
    pub gamma: [f64; 6],
    /// Objective value in bits/s.
    pub objective: f64,
    pub kkt_residual: f64,
}

fn extract(
    sub: &Subproblem,
    sol: &barrier::BarrierSolution,
    goal: Goal,
    cfg: &SystemConfig,
) -> SubproblemSolution {
    let bw = cfg.bandwidth_hz();
    let x = &sol.x;
    let a = |k: usize| x[AMP + k].max(0.0);
    let power = PowerAllocation::new([a(0) * a(0), a(1) * a(1)], [a(2) * a(2), a(3) * a(3)]);
    let mut gamma = [0.0; 6];
    for k in 0..6 {
        gamma[k] = x[GAM + k].max(0.0);
    }
    let raw_rates = [x[RATE] * bw, x[RATE + 1] * bw, x[RATE + 2] * bw, x[RATE + 3] * bw];
    let mut r_decode = [[0.0; 2]; 2];
    for ap in 0..NUM_UES {
        for ue in 0..NUM_UES {
            let slot = common_slot(ap, ue);
            r_decode[ap][ue] = (bw * sub.surrogates[slot].spectral_efficiency(gamma[slot])).max(0.0);
        }
    }
    let rates = RateAllocation {
        rc: [raw_rates[0].max(0.0), raw_rates[1].max(0.0)],
        rp: [raw_rates[2].max(0.0), raw_rates[3].max(0.0)],
        r_decode,
    };
    let objective = match goal {
        Goal::Maximize(obj) => obj.evaluate(&[raw_rates[0], raw_rates[1]], &[raw_rates[2], raw_rates[3]]),
        // bits/s of the worst shortfall
        Goal::MinDeficit => x[AUX] * bw,
        Goal::Check => 0.0,
    };
    SubproblemSolution {
        power,
        rates,
        raw_rates,
        gamma,
        objective,
        kkt_residual: sol.kkt_residual(),
    }
}

fn run_subproblem(
    state: &SolverState,
    arrivals: &ArrivalRates,
    goal: Goal,
    links: &LinkModels,
    cfg: &SystemConfig,
    opts: &BarrierOptions,
) -> Result<SubproblemSolution, ScaError> {
    let sub = build_subproblem(state, arrivals, goal, links, cfg)?;
    match barrier::solve(&sub.program, &sub.x0, opts) {
        Ok(sol) => Ok(extract(&sub, &sol, goal, cfg)),
        Err(BarrierError::Infeasible { .. }) => Err(ScaError::Infeasible),
        Err(e) => Err(ScaError::Inner(e)),
    }
}

fn subproblem_feasible(
    state: &SolverState,
    arrivals: &ArrivalRates,
    links: &LinkModels,
    cfg: &SystemConfig,
    opts: &BarrierOptions,
) -> Result<bool, ScaError> {
    let sub = build_subproblem(state, arrivals, Goal::Check, links, cfg)?;
    match barrier::find_strictly_feasible(&sub.program, &sub.x0, opts) {
        Ok(_) => Ok(true),
        Err(BarrierError::Infeasible { .. }) => Ok(false),
        Err(e) => Err(ScaError::Inner(e)),
    }
}

/// Solve the convex subproblem at the linearisation held in `state`.
pub fn solve_subproblem(
    state: &SolverState,
    arrivals: &ArrivalRates,
    obj: Objective,
    bler: &BlerBudget,
    cfg: &SystemConfig,
) -> Result<SubproblemSolution, ScaError> {
    let links = LinkModels::new(bler, cfg)?;
    run_subproblem(state, arrivals, Goal::Maximize(obj), &links, cfg, &BarrierOptions::default())
}

/// Deterministic starting point whose first subproblem is feasible.
///
/// Tries the 0.7/0.3 common/private split at full power and halved powers,
/// then the alternative splits, and finally runs an SCA on the largest
/// stability shortfall to locate a feasible linearisation.
pub fn initialize(cfg: &SystemConfig, arrivals: &ArrivalRates) -> Result<SolverState, ScaError> {
    let bler = bler_budget_from_qos(cfg.q_hc(), cfg.q_lc())?;
    let links = LinkModels::new(&bler, cfg)?;
    initialize_with(cfg, arrivals, &links, &SolveOptions::default())
}

fn initialize_with(
    cfg: &SystemConfig,
    arrivals: &ArrivalRates,
    links: &LinkModels,
    opts: &SolveOptions,
) -> Result<SolverState, ScaError> {
    let base = PowerAllocation::split(cfg, DEFAULT_COMMON_SHARE);
    for k in 0..=MAX_BISECTIONS {
        let state = SolverState::at(base.scaled(0.5f64.powi(k as i32)), cfg);
        if subproblem_feasible(&state, arrivals, links, cfg, &opts.barrier)? {
            return Ok(state);
        }
    }
    for share in RESTORATION_SPLITS {
        let state = SolverState::at(PowerAllocation::split(cfg, share), cfg);
        if subproblem_feasible(&state, arrivals, links, cfg, &opts.barrier)? {
            return Ok(state);
        }
    }
    restore_feasibility(SolverState::at(base, cfg), cfg, arrivals, links, opts)
}

/// SCA on `min max(demand - rate)`; returns the first iterate at which every
/// stability constraint holds strictly.
fn restore_feasibility(
    mut state: SolverState,
    cfg: &SystemConfig,
    arrivals: &ArrivalRates,
    links: &LinkModels,
    opts: &SolveOptions,
) -> Result<SolverState, ScaError> {
    let margin = 1e-9 * cfg.bandwidth_hz();
    let mut prev = f64::INFINITY;
    for _ in 0..opts.max_iterations {
        let sol = match run_subproblem(&state, arrivals, Goal::MinDeficit, links, cfg, &opts.barrier) {
            Ok(sol) => sol,
            Err(ScaError::Infeasible) => return Err(ScaError::Infeasible),
            Err(e) => return Err(e),
        };
        state = SolverState::at(sol.power, cfg);
        if sol.objective < -margin {
            return Ok(state);
        }
        if (prev - sol.objective).abs() <= opts.tolerance * sol.objective.abs().max(margin) {
            break;
        }
        prev = sol.objective;
    }
    Err(ScaError::Infeasible)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

/// Rates recomputed from the exact finite-blocklength model at the returned powers.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactRateCheck {
    pub sinrs: SinrSet,
    /// `decode[i][j]`: exact rate of UE `j`'s common at AP `i`, bits/s.
    pub decode: [[f64; 2]; 2],
    pub private: [f64; 2],
    /// Largest relative violation of the original problem's constraints.
    pub max_violation: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub power: PowerAllocation,
    pub gamma: [f64; 6],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub power: PowerAllocation,
    pub rates: RateAllocation,
    /// Objective of the reported rates, bits/s.
    pub objective: f64,
    pub objective_trace: Vec<f64>,
    pub iterations: Vec<IterationRecord>,
    pub status: SolveStatus,
    pub exact_rate_check: ExactRateCheck,
    /// Largest inner-solver KKT residual across iterations.
    pub max_kkt_residual: f64,
}

impl SolveReport {
    /// Per-iteration diagnostics as CSV.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "iter,objective_bits_per_s,pc1,pc2,pp1,pp2,gamma_c11,gamma_c12,gamma_c21,gamma_c22,gamma_p1,gamma_p2"
        )?;
        for r in &self.iterations {
            write!(out, "{},{},{},{},{},{}", r.iter, r.objective, r.power.pc[0], r.power.pc[1], r.power.pp[0], r.power.pp[1])?;
            for g in r.gamma {
                write!(out, ",{g}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Minimum LC service across UEs, packets/slot.
    pub fn lc_packets_per_slot(&self, cfg: &SystemConfig) -> f64 {
        rate_to_packets_per_slot(self.rates.rp[0].min(self.rates.rp[1]), cfg)
    }
}

/// Power allocation for rate-splitting multi-connectivity.
pub fn solve_mc_rsma(
    arrivals: &ArrivalRates,
    obj: Objective,
    cfg: &SystemConfig,
    opts: &SolveOptions,
) -> Result<SolveReport, ScaError> {
    let bler = bler_budget_from_qos(cfg.q_hc(), cfg.q_lc())?;
    let links = LinkModels::new(&bler, cfg)?;
    let mut state = initialize_with(cfg, arrivals, &links, opts)?;
    let goal = Goal::Maximize(obj);
    let floor_bw = 1e-9 * cfg.bandwidth_hz();

    let mut trace = Vec::new();
    let mut iterations = Vec::new();
    let mut last: Option<SubproblemSolution> = None;
    let mut status = SolveStatus::MaxIterations;
    let mut max_kkt = 0.0f64;
    for iter in 0..opts.max_iterations {
        let sol = match run_subproblem(&state, arrivals, goal, &links, cfg, &opts.barrier) {
            Ok(sol) => sol,
            Err(e) if last.is_some() => {
                // the previous iterate stays feasible; no further progress is available
                log::warn!("subproblem {iter} failed ({e}); keeping previous iterate");
                status = SolveStatus::Converged;
                break;
            }
            Err(e) => return Err(e),
        };
        max_kkt = max_kkt.max(sol.kkt_residual);
        log::debug!("sca iter {iter}: objective {:.6e} bits/s, power {:?}", sol.objective, sol.power);
        trace.push(sol.objective);
        iterations.push(IterationRecord {
            iter,
            objective: sol.objective,
            power: sol.power,
            gamma: sol.gamma,
        });
        let converged = last.as_ref().is_some_and(|prev| {
            (sol.objective - prev.objective).abs() <= opts.tolerance * sol.objective.abs().max(floor_bw)
        });
        state = SolverState { iteration: iter + 1, ..SolverState::at(sol.power, cfg) };
        last = Some(sol);
        if converged {
            status = SolveStatus::Converged;
            break;
        }
    }
    let sol = last.ok_or(ScaError::Infeasible)?;
    let (rates, exact_rate_check) = validate(&sol, arrivals, &links, cfg);
    Ok(SolveReport {
        power: sol.power,
        objective: obj.evaluate(&rates.rc, &rates.rp),
        rates,
        objective_trace: trace,
        iterations,
        status,
        exact_rate_check,
        max_kkt_residual: max_kkt,
    })
}

/// Final rates are the smaller of the surrogate and the exact model, so the
/// reported point satisfies the original problem.
fn validate(
    sol: &SubproblemSolution,
    arrivals: &ArrivalRates,
    links: &LinkModels,
    cfg: &SystemConfig,
) -> (RateAllocation, ExactRateCheck) {
    let sinrs = rsma_sinrs(&sol.power, cfg);
    let mut decode = [[0.0; 2]; 2];
    let mut r_decode = [[0.0; 2]; 2];
    for ap in 0..NUM_UES {
        for ue in 0..NUM_UES {
            decode[ap][ue] = fbl_rate(sinrs.common(ap, ue), &links.common);
            r_decode[ap][ue] = sol.rates.r_decode[ap][ue].min(decode[ap][ue]).max(0.0);
        }
    }
    let private = [fbl_rate(sinrs.gp[0], &links.private), fbl_rate(sinrs.gp[1], &links.private)];
    let mut rates = RateAllocation { r_decode, ..Default::default() };
    for i in 0..NUM_UES {
        let j = 1 - i;
        rates.rc[i] = sol.raw_rates[i].min(r_decode[i][i]).min(r_decode[j][i]).max(0.0);
        rates.rp[i] = sol.raw_rates[2 + i].min(private[i]).max(0.0);
    }

    let mut worst = 0.0f64;
    let rel = |excess: f64, scale: f64| excess / scale.abs().max(1e-12);
    for i in 0..NUM_UES {
        let j = 1 - i;
        let hc = packets_per_slot_to_rate(arrivals.a_hc[i], cfg);
        let lc = packets_per_slot_to_rate(arrivals.a_lc[i], cfg);
        if hc > 0.0 {
            worst = worst.max(rel(hc - rates.rc[i], hc));
        }
        if lc > 0.0 {
            worst = worst.max(rel(lc - rates.rp[i], lc));
        }
        let bound = decode[i][i].min(decode[j][i]);
        worst = worst.max(rel(rates.rc[i] - bound, bound.max(1.0)));
        worst = worst.max(rel(rates.rp[i] - private[i], private[i].max(1.0)));
        worst = worst.max(rel(sol.power.total(i) - cfg.p_max(i), cfg.p_max(i)));
    }
    let check = ExactRateCheck {
        sinrs,
        decode,
        private,
        max_violation: worst,
        feasible: worst <= FEASIBILITY_TOL,
    };
    (rates, check)
}

/// Solve with UE labels swapped. The report stays in the swapped labelling;
/// used to check relabelling symmetry.
pub fn solve_relabeled(
    arrivals: &ArrivalRates,
    obj: Objective,
    cfg: &SystemConfig,
    opts: &SolveOptions,
) -> Result<SolveReport, ScaError> {
    solve_mc_rsma(&arrivals.swapped(), obj.swapped(), &cfg.relabeled(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConfigParams;

    const P15: f64 = 31.622_776_601_683_793;

    fn symmetric_15db() -> SystemConfig {
        SystemConfig::symmetric(15.0, 0.6).unwrap()
    }

    #[test]
    fn quad_transform_examples() {
        let cfg = symmetric_15db();
        let p = PowerAllocation::new([3.0, 4.0], [1.0, 2.0]);
        assert_eq!(quad_transform_own_common(&p, 0, 0.0, 0.0, &cfg), 0.0);
        assert_eq!(quad_transform_cross_common(&p, 1, 0.0, 0.0, &cfg), 0.0);
        assert_eq!(quad_transform_private(&p, 0, 0.0, 0.0, &cfg), 0.0);
        assert_eq!(quad_transform_own_common(&p, 0, 5.0, 0.0, &cfg), 5.0);
        assert_eq!(quad_transform_private(&p, 1, 5.0, 0.0, &cfg), 5.0);

        let mu = update_mu(&p, &cfg);
        let gamma = rsma_sinrs(&p, &cfg).to_layout();
        for g in quad_transform_all(&p, &gamma, &mu, &cfg) {
            assert!(g.abs() < 1e-12, "{g}");
        }
    }

    #[test]
    fn mu_examples() {
        let cfg = symmetric_15db();
        assert_eq!(update_mu(&PowerAllocation::default(), &cfg), [0.0; 6]);

        let free = SystemConfig::symmetric(15.0, 0.0).unwrap();
        let mu = update_mu(&PowerAllocation::new([0.0, 0.0], [1.0, 0.0]), &free);
        assert!((mu[private_slot(0)] - 1.0).abs() < 1e-15);

        let mu = update_mu(&PowerAllocation::new([P15, P15], [0.0, 0.0]), &cfg);
        let expect = P15.sqrt() / (0.36 * P15 + 1.0);
        assert!((mu[common_slot(0, 0)] - expect).abs() < 1e-12);
        assert!((mu[common_slot(0, 0)] - 0.4541).abs() < 1e-4);
    }

    #[test]
    fn initial_split() {
        let cfg = symmetric_15db();
        let st = initialize(&cfg, &ArrivalRates::default()).unwrap();
        assert!((st.p.pc[0] - 22.1359).abs() < 1e-3);
        assert!((st.p.pp[1] - 9.4868).abs() < 1e-3);
        assert!(st.taylor_points.iter().all(|&g| g >= TAYLOR_POINT_FLOOR));
    }

    #[test]
    fn zero_arrivals_put_power_on_private_streams() {
        let cfg = SystemConfig::symmetric(15.0, 0.0).unwrap();
        let arrivals = ArrivalRates::default();
        let bler = bler_budget_from_qos(cfg.q_hc(), cfg.q_lc()).unwrap();
        let st = initialize(&cfg, &arrivals).unwrap();
        let sol = solve_subproblem(&st, &arrivals, Objective::MaxMinPrivate, &bler, &cfg).unwrap();
        // a single subproblem shifts power toward the private streams
        assert!(sol.power.pp[0] > st.p.pp[0] && sol.power.pp[1] > st.p.pp[1]);
        let report = solve_mc_rsma(&arrivals, Objective::MaxMinPrivate, &cfg, &SolveOptions::default()).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        for i in 0..2 {
            assert!(report.power.pp[i] > 0.99 * P15, "{:?}", report.power);
        }
    }

    #[test]
    fn excessive_hc_demand_is_infeasible() {
        let cfg = symmetric_15db();
        let arrivals = ArrivalRates::symmetric(200.0, 0.0).unwrap();
        assert_eq!(initialize(&cfg, &arrivals), Err(ScaError::Infeasible));
        assert!(matches!(
            solve_mc_rsma(&arrivals, Objective::MaxMinPrivate, &cfg, &SolveOptions::default()),
            Err(ScaError::Infeasible)
        ));
    }

    #[test]
    fn first_iteration_meets_hc_demand() {
        let cfg = symmetric_15db();
        let arrivals = ArrivalRates::symmetric(10.0, 0.0).unwrap();
        let bler = bler_budget_from_qos(cfg.q_hc(), cfg.q_lc()).unwrap();
        let st = initialize(&cfg, &arrivals).unwrap();
        let sol = solve_subproblem(&st, &arrivals, Objective::MaxMinPrivate, &bler, &cfg).unwrap();
        let need = packets_per_slot_to_rate(10.0, &cfg);
        assert!(sol.rates.rc.iter().all(|&r| r >= need * (1.0 - 1e-9)));
        // surrogate decode rates never exceed the exact model
        let links = LinkModels::new(&bler, &cfg).unwrap();
        let s = rsma_sinrs(&sol.power, &cfg);
        for ap in 0..2 {
            for ue in 0..2 {
                assert!(sol.rates.r_decode[ap][ue] <= fbl_rate(s.common(ap, ue), &links.common) + 1e-6);
            }
        }
        assert!(sol.kkt_residual < 1e-8, "kkt {}", sol.kkt_residual);
    }

    #[test]
    fn report_is_feasible_and_monotone() {
        let cfg = symmetric_15db();
        let arrivals = ArrivalRates::symmetric(10.0, 2.0).unwrap();
        let r = solve_mc_rsma(&arrivals, Objective::MaxMinPrivate, &cfg, &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!(r.exact_rate_check.feasible, "{:?}", r.exact_rate_check);
        assert!(r.power.is_valid(&cfg));
        assert!(r.rates.common_rates_decodable());
        for w in r.objective_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-7 * w[0].abs());
        }
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,objective_bits_per_s,pc1,pc2,pp1,pp2,"));
        assert_eq!(text.lines().count(), r.iterations.len() + 1);
    }

    #[test]
    fn weighted_sum_objective() {
        let cfg = symmetric_15db();
        let arrivals = ArrivalRates::symmetric(5.0, 0.0).unwrap();
        let r = solve_mc_rsma(
            &arrivals,
            Objective::WeightedSum([0.0, 0.0, 1.0, 1.0]),
            &cfg,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(r.exact_rate_check.feasible);
        assert!(r.objective > 0.0);
    }

    #[test]
    fn deterministic() {
        let cfg = SystemConfig::new(ConfigParams {
            h: [[1.0, 0.5], [0.4, 0.9]],
            ..ConfigParams::default()
        })
        .unwrap();
        let arrivals = ArrivalRates::new([8.0, 6.0], [1.0, 0.5]).unwrap();
        let a = solve_mc_rsma(&arrivals, Objective::MaxMinPrivate, &cfg, &SolveOptions::default()).unwrap();
        let b = solve_mc_rsma(&arrivals, Objective::MaxMinPrivate, &cfg, &SolveOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
