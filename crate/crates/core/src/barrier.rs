//! Dense log-barrier interior-point method for small smooth convex programs
//!
//! ```text
//! minimize  c'x   subject to  f_k(x) <= 0
//! ```
//!
//! where every `f_k` has a diagonal Hessian (linear rows, separable convex
//! quadratics and concave log-rate bounds). A feasibility phase locates a
//! strictly feasible start or certifies that none exists.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `sum a_k x_k <= rhs`
    Linear { terms: Vec<(usize, f64)>, rhs: f64 },
    /// `sum a_k x_k + sum q_k x_k^2 + constant <= 0` with every `q_k >= 0`.
    Quadratic {
        linear: Vec<(usize, f64)>,
        quadratic: Vec<(usize, f64)>,
        constant: f64,
    },
    /// `x_rate <= log2(1 + x_sinr) - slope * x_sinr + intercept`.
    LogRate {
        rate: usize,
        sinr: usize,
        slope: f64,
        intercept: f64,
    },
}

impl Constraint {
    pub fn upper_bound(var: usize, bound: f64) -> Self {
        Constraint::Linear { terms: vec![(var, 1.0)], rhs: bound }
    }

    pub fn lower_bound(var: usize, bound: f64) -> Self {
        Constraint::Linear { terms: vec![(var, -1.0)], rhs: -bound }
    }

    /// `f_k(x)`; `+inf` outside the function's domain.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::Linear { terms, rhs } => terms.iter().map(|&(k, a)| a * x[k]).sum::<f64>() - rhs,
            Constraint::Quadratic { linear, quadratic, constant } => {
                linear.iter().map(|&(k, a)| a * x[k]).sum::<f64>()
                    + quadratic.iter().map(|&(k, q)| q * x[k] * x[k]).sum::<f64>()
                    + constant
            }
            Constraint::LogRate { rate, sinr, slope, intercept } => {
                let g = x[*sinr];
                if g <= -1.0 {
                    return f64::INFINITY;
                }
                x[*rate] - (1.0 + g).log2() + slope * g - intercept
            }
        }
    }

    fn gradient(&self, x: &[f64], out: &mut Vec<(usize, f64)>) {
        out.clear();
        match self {
            Constraint::Linear { terms, .. } => out.extend_from_slice(terms),
            Constraint::Quadratic { linear, quadratic, .. } => {
                out.extend_from_slice(linear);
                out.extend(quadratic.iter().map(|&(k, q)| (k, 2.0 * q * x[k])));
            }
            Constraint::LogRate { rate, sinr, slope, .. } => {
                let g = x[*sinr];
                out.push((*rate, 1.0));
                out.push((*sinr, slope - 1.0 / ((1.0 + g) * std::f64::consts::LN_2)));
            }
        }
    }

    fn hessian_diag(&self, x: &[f64], out: &mut Vec<(usize, f64)>) {
        out.clear();
        match self {
            Constraint::Linear { .. } => {}
            Constraint::Quadratic { quadratic, .. } => {
                out.extend(quadratic.iter().map(|&(k, q)| (k, 2.0 * q)));
            }
            Constraint::LogRate { sinr, .. } => {
                let u = 1.0 + x[*sinr];
                out.push((*sinr, 1.0 / (u * u * std::f64::consts::LN_2)));
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProgram {
    pub num_vars: usize,
    /// Linear cost to minimise.
    pub cost: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    pub t0: f64,
    pub growth: f64,
    /// Stop once `m / t` falls below this.
    pub gap_tol: f64,
    /// Newton decrement threshold `lambda^2 / 2`.
    pub newton_tol: f64,
    pub max_newton_per_center: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            t0: 1.0,
            growth: 10.0,
            gap_tol: 1e-9,
            newton_tol: 1e-24,
            max_newton_per_center: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Duality gap bound `m / t` at the last centering.
    pub gap: f64,
    /// Lagrange multiplier estimates `1 / (t * -f_k)`.
    pub duals: Vec<f64>,
    /// `|| c + sum lambda_k grad f_k ||_inf`, relative to `|| c ||_inf`.
    pub stationarity: f64,
    /// Largest `lambda_k |f_k|` or negative multiplier, same scaling.
    pub complementarity: f64,
    pub newton_steps: usize,
}

impl BarrierSolution {
    /// Largest of the stationarity, complementarity and duality-gap residuals.
    pub fn kkt_residual(&self) -> f64 {
        self.stationarity.max(self.complementarity).max(self.gap)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    /// No strictly feasible point; `bound` lower-bounds the best achievable
    /// worst-case constraint value.
    #[error("no strictly feasible point (min max-violation >= {bound:.3e})")]
    Infeasible { bound: f64 },
    #[error("starting point is outside the constraint functions' domain")]
    Domain,
    #[error("numerical failure: {0}")]
    Numerical(&'static str),
}

/// Half-width of the feasibility-phase box, relative to `1 + |x0_k|`.
const PHASE_ONE_BOX: f64 = 1e3;

/// Uniform shift `f_k(x) - x[s]` applied to every row during the feasibility phase.
#[derive(Clone, Copy)]
struct Shift(Option<usize>);

struct Barrier<'a> {
    rows: &'a [Constraint],
    extra: &'a [Constraint],
    shift: Shift,
    cost: &'a [f64],
    n: usize,
}

impl Barrier<'_> {
    fn m(&self) -> usize {
        self.rows.len() + self.extra.len()
    }

    fn row_value(&self, c: &Constraint, x: &[f64], shifted: bool) -> f64 {
        let v = c.value(x);
        match (shifted, self.shift.0) {
            (true, Some(s)) => v - x[s],
            _ => v,
        }
    }

    fn each_value(&self, x: &[f64], mut visit: impl FnMut(f64)) {
        for c in self.rows {
            visit(self.row_value(c, x, true));
        }
        for c in self.extra {
            visit(self.row_value(c, x, false));
        }
    }

    fn strictly_feasible(&self, x: &[f64]) -> bool {
        let mut ok = true;
        self.each_value(x, |v| ok &= v < 0.0);
        ok
    }

    /// Barrier objective `t c'x - sum log(-f_k)`; `+inf` if infeasible.
    fn merit(&self, x: &[f64], t: f64) -> f64 {
        let mut phi = 0.0;
        let mut ok = true;
        self.each_value(x, |v| {
            if v < 0.0 {
                phi -= (-v).ln();
            } else {
                ok = false;
            }
        });
        if !ok {
            return f64::INFINITY;
        }
        t * dot(self.cost, x) + phi
    }

    fn newton_system(&self, x: &[f64], t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut grad = DVector::from_iterator(n, self.cost.iter().map(|c| t * c));
        let mut hess = DMatrix::<f64>::zeros(n, n);
        let mut g = Vec::with_capacity(8);
        let mut hd = Vec::with_capacity(8);
        let rows = self.rows.iter().map(|c| (c, true)).chain(self.extra.iter().map(|c| (c, false)));
        for (c, shifted) in rows {
            let v = self.row_value(c, x, shifted);
            c.gradient(x, &mut g);
            if let (true, Some(s)) = (shifted, self.shift.0) {
                g.push((s, -1.0));
            }
            c.hessian_diag(x, &mut hd);
            let inv = 1.0 / (-v);
            for &(k, a) in &g {
                grad[k] += a * inv;
            }
            let inv2 = inv * inv;
            for &(k, a) in &g {
                for &(l, b) in &g {
                    hess[(k, l)] += a * b * inv2;
                }
            }
            for &(k, q) in &hd {
                hess[(k, k)] += q * inv;
            }
        }
        (grad, hess)
    }

    /// KKT residuals `(stationarity, complementarity)` at a centred point.
    ///
    /// Central-path multipliers lose precision once constraint values are
    /// near roundoff, so the multipliers of the active rows are re-fitted by
    /// a lightly regularised least-squares stationarity solve.
    fn kkt(&self, x: &[f64], t: f64) -> (f64, f64) {
        let scale = self.cost.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        let mut active = Vec::new();
        let mut g = Vec::with_capacity(8);
        for c in self.rows {
            let v = c.value(x);
            let lambda = 1.0 / (t * -v);
            if lambda >= 1e-8 * scale {
                c.gradient(x, &mut g);
                let mut col = DVector::zeros(self.n);
                for &(k, a) in &g {
                    col[k] += a;
                }
                active.push((col, lambda, v));
            }
        }
        let c = DVector::from_column_slice(self.cost);
        if active.is_empty() {
            return (c.amax() / scale, 0.0);
        }
        let na = active.len();
        let jac = DMatrix::from_fn(self.n, na, |r, k| active[k].0[r]);
        let prior = DVector::from_iterator(na, active.iter().map(|a| a.1));
        let kappa = 1e-12 * scale * scale;
        let mut normal = jac.transpose() * &jac;
        for k in 0..na {
            normal[(k, k)] += kappa;
        }
        let rhs = prior * kappa - jac.transpose() * &c;
        let lambda = match normal.cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => DVector::from_iterator(na, active.iter().map(|a| a.1)),
        };
        let stationarity = (&c + &jac * &lambda).amax() / scale;
        let mut comp = 0.0f64;
        for (k, a) in active.iter().enumerate() {
            comp = comp.max((-lambda[k]).max(0.0) / scale).max(lambda[k].abs() * a.2.abs() / scale);
        }
        (stationarity, comp)
    }

    /// Damped Newton centering; returns the number of steps taken.
    ///
    /// Inside the quadratic region (`lambda^2 < 1/16`) full steps are taken
    /// without a line search, since the merit function can no longer resolve
    /// the decrease.
    fn center(&self, x: &mut [f64], t: f64, opts: &BarrierOptions) -> Result<usize, BarrierError> {
        let mut steps = 0;
        let mut trial = vec![0.0; self.n];
        let mut prev = f64::INFINITY;
        for _ in 0..opts.max_newton_per_center {
            let (grad, hess) = self.newton_system(x, t);
            let delta = solve_spd(hess, &grad).ok_or(BarrierError::Numerical("singular Newton system"))?;
            let decrement = -grad.dot(&delta);
            if !decrement.is_finite() {
                return Err(BarrierError::Numerical("non-finite Newton decrement"));
            }
            if decrement * 0.5 <= opts.newton_tol {
                break;
            }
            let pure = decrement < 0.0625;
            if pure && decrement > 0.5 * prev {
                // stalled at roundoff
                break;
            }
            prev = decrement;
            let f0 = self.merit(x, t);
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-20 {
                for k in 0..self.n {
                    trial[k] = x[k] + step * delta[k];
                }
                if self.strictly_feasible(&trial) {
                    let f1 = self.merit(&trial, t);
                    let slack = if pure { 64.0 * f64::EPSILON * f0.abs().max(1.0) } else { 0.0 };
                    if f1 <= f0 - 0.25 * step * decrement + slack {
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                // no representable descent left at this t
                break;
            }
            x.copy_from_slice(&trial);
            steps += 1;
        }
        Ok(steps)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn solve_spd(hess: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = hess.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut h = hess.clone();
        if reg > 0.0 {
            for k in 0..h.nrows() {
                h[(k, k)] += reg;
            }
        }
        if let Some(ch) = h.cholesky() {
            let d = ch.solve(&(-grad));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    None
}

/// Minimise `program` starting from `x0`, which must lie in every row's
/// domain but need not be feasible.
pub fn solve(program: &ConvexProgram, x0: &[f64], opts: &BarrierOptions) -> Result<BarrierSolution, BarrierError> {
    let start = find_strictly_feasible(program, x0, opts)?;
    minimize_from(program, start, opts)
}

/// Barrier iterations from a strictly feasible point.
pub fn minimize_from(
    program: &ConvexProgram,
    mut x: Vec<f64>,
    opts: &BarrierOptions,
) -> Result<BarrierSolution, BarrierError> {
    let b = Barrier {
        rows: &program.constraints,
        extra: &[],
        shift: Shift(None),
        cost: &program.cost,
        n: program.num_vars,
    };
    if !b.strictly_feasible(&x) {
        return Err(BarrierError::Domain);
    }
    let m = b.m() as f64;
    let mut t = opts.t0;
    let mut newton_steps = 0;
    loop {
        newton_steps += b.center(&mut x, t, opts)?;
        if m / t < opts.gap_tol {
            break;
        }
        t *= opts.growth;
    }
    let mut duals = Vec::with_capacity(program.constraints.len());
    b.each_value(&x, |v| duals.push(1.0 / (t * -v)));
    let (stationarity, complementarity) = b.kkt(&x, t);
    Ok(BarrierSolution {
        objective: dot(&program.cost, &x),
        gap: m / t,
        stationarity,
        complementarity,
        duals,
        x,
        newton_steps,
    })
}

/// Feasibility phase: minimise a uniform slack `s` over `f_k(x) <= s`,
/// stopping as soon as `s < 0`.
pub fn find_strictly_feasible(
    program: &ConvexProgram,
    x0: &[f64],
    opts: &BarrierOptions,
) -> Result<Vec<f64>, BarrierError> {
    let n = program.num_vars;
    let worst = program
        .constraints
        .iter()
        .map(|c| c.value(x0))
        .fold(f64::NEG_INFINITY, f64::max);
    if !worst.is_finite() {
        return Err(BarrierError::Domain);
    }
    if worst < 0.0 {
        return Ok(x0.to_vec());
    }
    let s = n;
    let mut cost = vec![0.0; n + 1];
    cost[s] = 1.0;
    // the slack is bounded below and x stays in a wide box around x0, so
    // the phase is bounded even when the feasible set is not
    let mut bounds = vec![Constraint::lower_bound(s, -1.0)];
    for (k, &v) in x0.iter().enumerate() {
        let r = PHASE_ONE_BOX * (1.0 + v.abs());
        bounds.push(Constraint::upper_bound(k, v + r));
        bounds.push(Constraint::lower_bound(k, v - r));
    }
    let b = Barrier {
        rows: &program.constraints,
        extra: &bounds,
        shift: Shift(Some(s)),
        cost: &cost,
        n: n + 1,
    };
    let mut x: Vec<f64> = x0.iter().copied().chain(std::iter::once(worst + 1.0)).collect();
    let m = b.m() as f64;
    let mut t = opts.t0;
    loop {
        b.center(&mut x, t, opts)?;
        if x[s] < 0.0 {
            x.truncate(n);
            return Ok(x);
        }
        let bound = x[s] - m / t;
        if bound > 0.0 || m / t < opts.gap_tol {
            return Err(BarrierError::Infeasible { bound: bound.max(0.0) });
        }
        t *= opts.growth;
    }
}
