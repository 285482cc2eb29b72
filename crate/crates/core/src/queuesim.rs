//! Slot-level queue recursion and an empirical stability check.
//!
//! Backlogs are fluid (fractional packets). Service is the per-slot amount
//! `(T/M) R` in packets.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::model::{rate_to_packets_per_slot, ArrivalRates, ServiceRates, SystemConfig};

/// Queue order used by traces and verdicts.
pub const QUEUE_NAMES: [&str; 4] = ["q_hc_1", "q_hc_2", "q_lc_1", "q_lc_2"];

/// Minimum horizon accepted by [`stability_verdict`].
pub const MIN_VERDICT_HORIZON: usize = 1000;

/// `Q(t+1) = [Q(t) - (T/M) R]^+ + A(t)` with `service_rate` in bits/s.
pub fn step(backlog: f64, service_rate: f64, arrivals: f64, cfg: &SystemConfig) -> f64 {
    step_packets(backlog, rate_to_packets_per_slot(service_rate, cfg), arrivals)
}

/// Same recursion with the service already in packets per slot.
#[inline]
pub fn step_packets(backlog: f64, service: f64, arrivals: f64) -> f64 {
    (backlog - service).max(0.0) + arrivals
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalProcess {
    /// Exactly the mean every slot.
    Deterministic,
    Poisson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueTrace {
    /// Backlog after each slot, per UE.
    pub backlog_hc: [Vec<f64>; 2],
    pub backlog_lc: [Vec<f64>; 2],
    /// Time-averaged backlog over the horizon, in [`QUEUE_NAMES`] order.
    pub time_avg: [f64; 4],
    pub horizon: usize,
}

impl QueueTrace {
    pub fn queue(&self, k: usize) -> &[f64] {
        match k {
            0 | 1 => &self.backlog_hc[k],
            _ => &self.backlog_lc[k - 2],
        }
    }

    pub fn verdicts(&self) -> [Verdict; 4] {
        [0, 1, 2, 3].map(|k| stability_verdict(self.queue(k)))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "slot,{}", QUEUE_NAMES.join(","))?;
        for t in 0..self.horizon {
            writeln!(
                out,
                "{},{},{},{},{}",
                t + 1,
                self.backlog_hc[0][t],
                self.backlog_hc[1][t],
                self.backlog_lc[0][t],
                self.backlog_lc[1][t]
            )?;
        }
        Ok(())
    }
}

/// Per-queue arrival sampler; every queue draws from its own ChaCha stream.
enum Source {
    Fixed(f64),
    Poisson(ChaCha8Rng, Poisson<f64>),
}

impl Source {
    fn new(mean: f64, process: ArrivalProcess, seed: u64, stream: u64) -> Self {
        match process {
            ArrivalProcess::Poisson if mean > 0.0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                Source::Poisson(rng, Poisson::new(mean).expect("positive finite mean"))
            }
            ArrivalProcess::Poisson => Source::Fixed(0.0),
            ArrivalProcess::Deterministic => Source::Fixed(mean),
        }
    }

    fn draw(&mut self) -> f64 {
        match self {
            Source::Fixed(a) => *a,
            Source::Poisson(rng, d) => d.sample(rng),
        }
    }
}

/// Run all four queues from empty for `horizon` slots.
pub fn simulate(
    service: &ServiceRates,
    arrivals: &ArrivalRates,
    process: ArrivalProcess,
    horizon: usize,
    seed: u64,
) -> QueueTrace {
    let means = [arrivals.a_hc[0], arrivals.a_hc[1], arrivals.a_lc[0], arrivals.a_lc[1]];
    let serve = [service.hc[0], service.hc[1], service.lc[0], service.lc[1]];
    let mut sources: Vec<Source> = (0..4).map(|k| Source::new(means[k], process, seed, k as u64)).collect();
    let mut series: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(horizon));
    let mut q = [0.0f64; 4];
    let mut sum = [0.0f64; 4];
    for _ in 0..horizon {
        for k in 0..4 {
            q[k] = step_packets(q[k], serve[k], sources[k].draw());
            sum[k] += q[k];
            series[k].push(q[k]);
        }
    }
    let n = horizon.max(1) as f64;
    let [hc1, hc2, lc1, lc2] = series;
    QueueTrace {
        backlog_hc: [hc1, hc2],
        backlog_lc: [lc1, lc2],
        time_avg: sum.map(|s| s / n),
        horizon,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Least-squares slope of `x` against its index.
fn slope(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let xm = x.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, v) in x.iter().enumerate() {
        let dt = t as f64 - tm;
        num += dt * (v - xm);
        den += dt * dt;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Compare the mean backlog of the last quarter with the second quarter.
///
/// Stable when the last-quarter mean is within 10% of the second-quarter
/// mean, or within three second-quarter standard deviations of it (random
/// arrivals near capacity fluctuate far more than 10% over a quarter).
/// Unstable when it at least doubles, clears that noise band and the second
/// half drifts upward.
pub fn stability_verdict(backlog: &[f64]) -> Verdict {
    let n = backlog.len();
    if n < MIN_VERDICT_HORIZON {
        return Verdict::Inconclusive;
    }
    let q = n / 4;
    let (m2, sd2) = mean_sd(&backlog[q..2 * q]);
    let (m4, _) = mean_sd(&backlog[n - q..]);
    let band = m2 + 3.0 * sd2;
    if m4 <= 1.1 * m2 || m4 <= band {
        return Verdict::Stable;
    }
    if m4 >= 2.0 * m2 && m4 > band && slope(&backlog[n / 2..]) > 0.0 {
        return Verdict::Unstable;
    }
    Verdict::Inconclusive
}
