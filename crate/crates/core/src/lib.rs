//! Uplink power allocation for two-UE, two-AP multi-connectivity with
//! rate-splitting under finite-blocklength coding.
//!
//! Each UE splits its traffic into a high-criticality common stream, decoded
//! at both APs, and a low-criticality private stream decoded at its own AP.
//! [`scasolver`] allocates powers that keep every queue stable while
//! maximising an objective of the rates; [`baselines`] provides the
//! time-division references and [`queuesim`] checks allocations against the
//! slot-level queue dynamics.

pub mod barrier;
pub mod baselines;
pub mod config;
pub mod experiments;
pub mod fblrate;
pub mod model;
pub mod queuesim;
pub mod reliability;
pub mod scasolver;
pub mod sinr;

pub use baselines::{solve_mc_tdm, solve_sc_tdm, TdmError, TdmSolution};
pub use model::{ArrivalRates, Blocklength, ConfigError, ConfigParams, PowerAllocation, RateAllocation, ServiceRates, SystemConfig};
pub use scasolver::{solve_mc_rsma, Objective, ScaError, SolveOptions, SolveReport, SolveStatus};
