//! Sweep drivers behind the CLI: stability regions, blocklength losses and
//! SNR sweeps for the rate-splitting scheme and the two TDM baselines.
//!
//! Grid points are solved in parallel; output order always follows the grid.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{self, TdmError, TdmScheme};
use crate::model::{ArrivalRates, Blocklength, ConfigError, SystemConfig};
use crate::scasolver::{solve_mc_rsma, Objective, ScaError, SolveOptions};

/// Bisection tolerance for intercepts and feasibility edges, packets/slot or dB.
pub const EDGE_TOL: f64 = 0.05;

pub const DEFAULT_A_HC: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    McRsma,
    McTdm,
    ScTdm,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::McRsma, Scheme::McTdm, Scheme::ScTdm];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::McRsma => "mc-rsma",
            Scheme::McTdm => "mc-tdm",
            Scheme::ScTdm => "sc-tdm",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown scheme `{0}` (expected mc-rsma, mc-tdm or sc-tdm)")]
pub struct UnknownScheme(pub String);

impl FromStr for Scheme {
    type Err = UnknownScheme;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| UnknownScheme(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    StabilityRegion,
    RateLossVsBlocklength,
    RateVsSnr,
}

impl Experiment {
    pub fn csv_header(self) -> &'static str {
        match self {
            Experiment::StabilityRegion => "scheme,a_hc_pkts,a_lc_pkts",
            Experiment::RateLossVsBlocklength => "scheme,blocklength,rel_loss",
            Experiment::RateVsSnr => "scheme,snr_db,lc_rate_pkts",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Experiment::StabilityRegion => (0..=20).map(f64::from).collect(),
            Experiment::RateLossVsBlocklength => vec![100.0, 200.0, 500.0, 1000.0, 2000.0, 5000.0, 10000.0],
            Experiment::RateVsSnr => (0..=40).map(|k| 0.5 * f64::from(k)).collect(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("grid must be non-empty and strictly increasing")]
    Grid,
    #[error("no schemes selected")]
    NoSchemes,
    #[error("blocklength grid values must be positive integers")]
    Blocklength,
    #[error("SNR grid must lie within [0, 40] dB")]
    SnrRange,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub experiment: Experiment,
    pub grid: Vec<f64>,
    pub schemes: Vec<Scheme>,
    /// HC arrivals held fixed in the blocklength and SNR sweeps.
    pub a_hc: f64,
}

impl SweepSpec {
    pub fn new(experiment: Experiment, schemes: Vec<Scheme>) -> Self {
        Self {
            experiment,
            grid: experiment.default_grid(),
            schemes,
            a_hc: DEFAULT_A_HC,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.grid.is_empty() || self.grid.windows(2).any(|w| !(w[0] < w[1])) || self.grid.iter().any(|v| !v.is_finite()) {
            return Err(SweepError::Grid);
        }
        if self.schemes.is_empty() {
            return Err(SweepError::NoSchemes);
        }
        match self.experiment {
            Experiment::RateLossVsBlocklength if self.grid.iter().any(|&l| l < 1.0 || l.fract() != 0.0 || l > f64::from(u32::MAX)) => {
                Err(SweepError::Blocklength)
            }
            Experiment::RateVsSnr if self.grid.iter().any(|&s| !(0.0..=40.0).contains(&s)) => Err(SweepError::SnrRange),
            _ => Ok(()),
        }
    }
}

/// One CSV row: scheme, grid coordinate, value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub scheme: Scheme,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub experiment: Experiment,
    pub rows: Vec<Row>,
    /// Grid points attempted, including infeasible ones.
    pub attempted: usize,
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.experiment.csv_header())?;
        for r in &self.rows {
            match self.experiment {
                Experiment::RateLossVsBlocklength => writeln!(out, "{},{},{}", r.scheme, r.x as u64, r.y)?,
                _ => writeln!(out, "{},{},{}", r.scheme, r.x, r.y)?,
            }
        }
        Ok(())
    }

    pub fn curve(&self, scheme: Scheme) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.scheme == scheme).map(|r| (r.x, r.y)).collect()
    }
}

/// Max-min LC service (packets/slot) with symmetric HC arrivals `a_hc`;
/// `None` when the HC load cannot be stabilised.
pub fn max_min_lc(scheme: Scheme, a_hc: f64, cfg: &SystemConfig) -> Option<f64> {
    let arrivals = ArrivalRates::symmetric(a_hc, 0.0).ok()?;
    let obj = Objective::MaxMinPrivate;
    match scheme {
        Scheme::McRsma => match solve_mc_rsma(&arrivals, obj, cfg, &SolveOptions::default()) {
            Ok(r) => Some(r.lc_packets_per_slot(cfg)),
            Err(ScaError::Infeasible) => None,
            Err(e) => {
                log::warn!("{scheme} at a_hc={a_hc}: {e}");
                None
            }
        },
        Scheme::McTdm | Scheme::ScTdm => {
            let kind = if scheme == Scheme::McTdm {
                TdmScheme::MultiConnectivity
            } else {
                TdmScheme::SingleConnectivity
            };
            match baselines::solve(kind, &arrivals, obj, cfg) {
                Ok(s) => Some(s.lc_packets_per_slot()),
                Err(TdmError::Infeasible) => None,
                Err(e) => {
                    log::warn!("{scheme} at a_hc={a_hc}: {e}");
                    None
                }
            }
        }
    }
}

/// Largest symmetric HC load (packets/slot) that `scheme` stabilises,
/// located by bisection to `tol`.
pub fn hc_intercept(scheme: Scheme, cfg: &SystemConfig, tol: f64) -> Option<f64> {
    max_min_lc(scheme, 0.0, cfg)?;
    let (mut lo, mut hi) = (0.0, 1.0);
    while max_min_lc(scheme, hi, cfg).is_some() {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Some(lo);
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if max_min_lc(scheme, mid, cfg).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Smallest SNR in `[lo, hi]` dB at which `scheme` stabilises `a_hc`, to `tol`.
pub fn snr_feasibility_edge(scheme: Scheme, cfg: &SystemConfig, a_hc: f64, lo: f64, hi: f64, tol: f64) -> Option<f64> {
    let ok = |snr: f64| cfg.with_snr_db(snr).ok().and_then(|c| max_min_lc(scheme, a_hc, &c)).is_some();
    if !ok(hi) {
        return None;
    }
    if ok(lo) {
        return Some(lo);
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Boundary of the symmetric stability region: for each HC load, the
/// largest max-min LC load. Loads beyond the intercept are absent; the
/// bisected intercept is appended as the last point.
pub fn stability_region(cfg: &SystemConfig, scheme: Scheme, hc_grid: &[f64]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = hc_grid
        .par_iter()
        .map(|&a| max_min_lc(scheme, a, cfg).map(|lc| (a, lc)))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    if let Some(edge) = hc_intercept(scheme, cfg, EDGE_TOL) {
        let last = pts.last().map_or(f64::NEG_INFINITY, |p| p.0);
        let beyond = hc_grid.iter().any(|&a| a > edge);
        if edge > last && beyond {
            if let Some(lc) = max_min_lc(scheme, edge, cfg) {
                pts.push((edge, lc));
            }
        }
    }
    pts
}

/// `1 - R(l) / R(inf)` for each blocklength, where `R` is the max-min LC
/// service at HC load `a_hc` and `R(inf)` uses Shannon rates. Infeasible
/// points are absent.
pub fn rate_loss_vs_blocklength(cfg: &SystemConfig, scheme: Scheme, l_grid: &[u32], a_hc: f64) -> Vec<(u32, f64)> {
    let reference = cfg
        .with_blocklength(Blocklength::Infinite)
        .ok()
        .and_then(|c| max_min_lc(scheme, a_hc, &c));
    let Some(reference) = reference.filter(|r| *r > 0.0) else {
        return Vec::new();
    };
    l_grid
        .par_iter()
        .map(|&l| {
            let c = cfg.with_blocklength(Blocklength::Finite(l)).ok()?;
            let r = max_min_lc(scheme, a_hc, &c)?;
            Some((l, (1.0 - r / reference).clamp(0.0, 1.0)))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Max-min LC service versus SNR at HC load `a_hc`; infeasible points absent.
pub fn rate_vs_snr(cfg: &SystemConfig, scheme: Scheme, snr_grid_db: &[f64], a_hc: f64) -> Vec<(f64, f64)> {
    snr_grid_db
        .par_iter()
        .map(|&snr| {
            let c = cfg.with_snr_db(snr).ok()?;
            max_min_lc(scheme, a_hc, &c).map(|lc| (snr, lc))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

pub fn run(spec: &SweepSpec, cfg: &SystemConfig) -> Result<SweepResult, SweepError> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut attempted = 0;
    for &scheme in &spec.schemes {
        let pts: Vec<(f64, f64)> = match spec.experiment {
            Experiment::StabilityRegion => stability_region(cfg, scheme, &spec.grid),
            Experiment::RateLossVsBlocklength => {
                let ls: Vec<u32> = spec.grid.iter().map(|&l| l as u32).collect();
                rate_loss_vs_blocklength(cfg, scheme, &ls, spec.a_hc)
                    .into_iter()
                    .map(|(l, v)| (f64::from(l), v))
                    .collect()
            }
            Experiment::RateVsSnr => rate_vs_snr(cfg, scheme, &spec.grid, spec.a_hc),
        };
        attempted += spec.grid.len();
        rows.extend(pts.into_iter().map(|(x, y)| Row { scheme, x, y }));
    }
    Ok(SweepResult {
        experiment: spec.experiment,
        rows,
        attempted,
    })
}
