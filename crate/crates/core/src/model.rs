//! System parameters and decision vectors for the two-UE, two-AP uplink.
//!
//! Indexing follows the receiver-first convention throughout the crate:
//! `h[i][j]` is the amplitude gain from UE `j` to AP `i`, and UE `i` is
//! associated with AP `i`.

use thiserror::Error;

/// Number of UEs (and APs). The topology is fixed.
pub const NUM_UES: usize = 2;

/// Smallest blocklength accepted without the explicit override flag.
pub const MIN_BLOCKLENGTH: u32 = 100;

/// Slack used when checking power budgets and rate bounds of returned solutions.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("channel gain h{0}{1} must be finite and non-negative, got {2}")]
    ChannelGain(usize, usize, f64),
    #[error("{name} must be finite and positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("packet size must be at least one bit")]
    PacketBits,
    #[error("blocklength {0} is below {MIN_BLOCKLENGTH}; set allow_short_blocklength to override")]
    ShortBlocklength(u32),
    #[error("blocklength must be positive")]
    ZeroBlocklength,
    #[error("QoS targets must satisfy 0 < q_hc < q_lc < 1, got q_hc={q_hc}, q_lc={q_lc}")]
    QosOrdering { q_hc: f64, q_lc: f64 },
    #[error("q_lc - sqrt(2 q_hc) = {0} leaves no private-stream error budget")]
    QosBudget(f64),
    #[error("arrival rates must be finite and non-negative")]
    Arrivals,
    #[error("cross gain must be finite and non-negative, got {0}")]
    CrossGain(f64),
}

/// Blocklength of every coded transmission, in channel uses.
///
/// `Infinite` switches the rate model to Shannon capacity and is used as the
/// reference when measuring finite-blocklength losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Blocklength {
    Finite(u32),
    Infinite,
}

impl Blocklength {
    pub fn channel_uses(self) -> Option<u32> {
        match self {
            Blocklength::Finite(l) => Some(l),
            Blocklength::Infinite => None,
        }
    }
}

/// Plain parameter set used to build a [`SystemConfig`].
///
/// The defaults are the symmetric evaluation setup: unit direct gains, 0.6
/// cross gains, unit noise, 15 dB SNR, 300 kHz, 5 ms slots, 128-bit packets,
/// blocklength 1000, `q_hc = 1e-7` and `q_lc = 1e-3`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigParams {
    pub h: [[f64; 2]; 2],
    pub sigma2: [f64; 2],
    pub p_max: [f64; 2],
    pub bandwidth_hz: f64,
    pub slot_s: f64,
    pub packet_bits: u32,
    pub blocklength: Blocklength,
    pub q_hc: f64,
    pub q_lc: f64,
    pub allow_short_blocklength: bool,
}

impl Default for ConfigParams {
    fn default() -> Self {
        let p = db_to_linear(15.0);
        Self {
            h: [[1.0, 0.6], [0.6, 1.0]],
            sigma2: [1.0, 1.0],
            p_max: [p, p],
            bandwidth_hz: 300e3,
            slot_s: 5e-3,
            packet_bits: 128,
            blocklength: Blocklength::Finite(1000),
            q_hc: 1e-7,
            q_lc: 1e-3,
            allow_short_blocklength: false,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Validated, immutable system description.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    params: ConfigParams,
}

impl SystemConfig {
    pub fn new(params: ConfigParams) -> Result<Self, ConfigError> {
        for i in 0..NUM_UES {
            for j in 0..NUM_UES {
                let g = params.h[i][j];
                if !g.is_finite() || g < 0.0 {
                    return Err(ConfigError::ChannelGain(i + 1, j + 1, g));
                }
            }
        }
        positive("sigma2", params.sigma2[0])?;
        positive("sigma2", params.sigma2[1])?;
        positive("p_max", params.p_max[0])?;
        positive("p_max", params.p_max[1])?;
        positive("bandwidth_hz", params.bandwidth_hz)?;
        positive("slot_s", params.slot_s)?;
        if params.packet_bits == 0 {
            return Err(ConfigError::PacketBits);
        }
        if let Blocklength::Finite(l) = params.blocklength {
            if l == 0 {
                return Err(ConfigError::ZeroBlocklength);
            }
            if l < MIN_BLOCKLENGTH && !params.allow_short_blocklength {
                return Err(ConfigError::ShortBlocklength(l));
            }
        }
        let (q_hc, q_lc) = (params.q_hc, params.q_lc);
        if !(q_hc > 0.0 && q_hc < q_lc && q_lc < 1.0) {
            return Err(ConfigError::QosOrdering { q_hc, q_lc });
        }
        let budget = q_lc - (2.0 * q_hc).sqrt();
        if budget <= 0.0 {
            return Err(ConfigError::QosBudget(budget));
        }
        let cfg = Self { params };
        if !cfg.direct_links_dominate() {
            log::warn!(
                "direct gains do not dominate cross gains (|h_ii| > |h_ji|): h = {:?}",
                cfg.params.h
            );
        }
        Ok(cfg)
    }

    /// Symmetric setup with unit direct gains and unit noise, so `p_max`
    /// equals the linear SNR.
    pub fn symmetric(snr_db: f64, cross_gain: f64) -> Result<Self, ConfigError> {
        if !cross_gain.is_finite() || cross_gain < 0.0 {
            return Err(ConfigError::CrossGain(cross_gain));
        }
        let p = db_to_linear(snr_db);
        Self::new(ConfigParams {
            h: [[1.0, cross_gain], [cross_gain, 1.0]],
            p_max: [p, p],
            ..ConfigParams::default()
        })
    }

    pub fn params(&self) -> &ConfigParams {
        &self.params
    }

    /// Amplitude gain from UE `ue` to AP `ap`.
    #[inline]
    pub fn gain(&self, ap: usize, ue: usize) -> f64 {
        self.params.h[ap][ue]
    }

    #[inline]
    pub fn gain_sq(&self, ap: usize, ue: usize) -> f64 {
        let g = self.params.h[ap][ue];
        g * g
    }

    #[inline]
    pub fn noise(&self, ap: usize) -> f64 {
        self.params.sigma2[ap]
    }

    #[inline]
    pub fn p_max(&self, ue: usize) -> f64 {
        self.params.p_max[ue]
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.params.bandwidth_hz
    }

    pub fn slot_s(&self) -> f64 {
        self.params.slot_s
    }

    pub fn packet_bits(&self) -> u32 {
        self.params.packet_bits
    }

    pub fn blocklength(&self) -> Blocklength {
        self.params.blocklength
    }

    pub fn q_hc(&self) -> f64 {
        self.params.q_hc
    }

    pub fn q_lc(&self) -> f64 {
        self.params.q_lc
    }

    /// Whether `|h_ii| > |h_ji|` holds for both UEs.
    pub fn direct_links_dominate(&self) -> bool {
        let h = &self.params.h;
        h[0][0] > h[1][0] && h[1][1] > h[0][1]
    }

    pub fn with_blocklength(&self, blocklength: Blocklength) -> Result<Self, ConfigError> {
        Self::new(ConfigParams {
            blocklength,
            ..self.params.clone()
        })
    }

    /// Same system with both power budgets set to `snr_db` above each UE's
    /// associated AP noise floor.
    pub fn with_snr_db(&self, snr_db: f64) -> Result<Self, ConfigError> {
        let s = db_to_linear(snr_db);
        Self::new(ConfigParams {
            p_max: [s * self.params.sigma2[0], s * self.params.sigma2[1]],
            ..self.params.clone()
        })
    }

    /// The same physical system with UE and AP labels swapped.
    pub fn relabeled(&self) -> Self {
        let p = &self.params;
        let params = ConfigParams {
            h: [[p.h[1][1], p.h[1][0]], [p.h[0][1], p.h[0][0]]],
            sigma2: [p.sigma2[1], p.sigma2[0]],
            p_max: [p.p_max[1], p.p_max[0]],
            ..p.clone()
        };
        Self { params }
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::NotPositive { name, value })
    }
}

/// Convert a service rate in bits/s to packets per slot.
#[inline]
pub fn rate_to_packets_per_slot(rate: f64, cfg: &SystemConfig) -> f64 {
    rate * cfg.slot_s() / f64::from(cfg.packet_bits())
}

/// Inverse of [`rate_to_packets_per_slot`].
#[inline]
pub fn packets_per_slot_to_rate(packets: f64, cfg: &SystemConfig) -> f64 {
    packets * f64::from(cfg.packet_bits()) / cfg.slot_s()
}

/// Transmit powers of the common (`pc`) and private (`pp`) streams, in W.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PowerAllocation {
    pub pc: [f64; 2],
    pub pp: [f64; 2],
}

impl PowerAllocation {
    pub fn new(pc: [f64; 2], pp: [f64; 2]) -> Self {
        Self { pc, pp }
    }

    /// `common_share` of each budget on the common stream, the rest private.
    pub fn split(cfg: &SystemConfig, common_share: f64) -> Self {
        let p = [cfg.p_max(0), cfg.p_max(1)];
        Self {
            pc: [common_share * p[0], common_share * p[1]],
            pp: [(1.0 - common_share) * p[0], (1.0 - common_share) * p[1]],
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            pc: self.pc.map(|p| p * factor),
            pp: self.pp.map(|p| p * factor),
        }
    }

    pub fn total(&self, ue: usize) -> f64 {
        self.pc[ue] + self.pp[ue]
    }

    /// Non-negativity and per-UE budgets, with [`FEASIBILITY_TOL`] relative slack.
    pub fn is_valid(&self, cfg: &SystemConfig) -> bool {
        (0..NUM_UES).all(|i| {
            self.pc[i] >= 0.0
                && self.pp[i] >= 0.0
                && self.total(i) <= cfg.p_max(i) * (1.0 + FEASIBILITY_TOL)
        })
    }

    pub fn swapped(&self) -> Self {
        Self {
            pc: [self.pc[1], self.pc[0]],
            pp: [self.pp[1], self.pp[0]],
        }
    }
}

/// Coding rates in bits/s.
///
/// `r_decode[i][j]` is the rate at which AP `i` can decode UE `j`'s common
/// stream; UE `i`'s common rate is bounded by both `r_decode[i][i]` and
/// `r_decode[j][i]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateAllocation {
    pub rc: [f64; 2],
    pub rp: [f64; 2],
    pub r_decode: [[f64; 2]; 2],
}

impl RateAllocation {
    /// Checks the multi-connectivity bound on the common rates.
    pub fn common_rates_decodable(&self) -> bool {
        (0..NUM_UES).all(|i| {
            let j = 1 - i;
            let bound = self.r_decode[i][i].min(self.r_decode[j][i]);
            self.rc[i] <= bound + FEASIBILITY_TOL * bound.abs().max(1.0)
        })
    }

    pub fn is_nonnegative(&self) -> bool {
        self.rc
            .iter()
            .chain(self.rp.iter())
            .chain(self.r_decode.iter().flatten())
            .all(|&r| r >= 0.0)
    }
}

/// Mean packet arrivals per slot for the HC and LC queues of each UE.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArrivalRates {
    pub a_hc: [f64; 2],
    pub a_lc: [f64; 2],
}

impl ArrivalRates {
    pub fn new(a_hc: [f64; 2], a_lc: [f64; 2]) -> Result<Self, ConfigError> {
        if a_hc.iter().chain(a_lc.iter()).all(|a| a.is_finite() && *a >= 0.0) {
            Ok(Self { a_hc, a_lc })
        } else {
            Err(ConfigError::Arrivals)
        }
    }

    /// Same rates for both UEs.
    pub fn symmetric(a_hc: f64, a_lc: f64) -> Result<Self, ConfigError> {
        Self::new([a_hc, a_hc], [a_lc, a_lc])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            a_hc: self.a_hc.map(|a| a * factor),
            a_lc: self.a_lc.map(|a| a * factor),
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            a_hc: [self.a_hc[1], self.a_hc[0]],
            a_lc: [self.a_lc[1], self.a_lc[0]],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a_hc.iter().chain(self.a_lc.iter()).all(|&a| a == 0.0)
    }
}

/// Per-queue service in packets per slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ServiceRates {
    pub hc: [f64; 2],
    pub lc: [f64; 2],
}

impl ServiceRates {
    /// Common rates serve the HC queues, private rates the LC queues.
    pub fn from_rates(rates: &RateAllocation, cfg: &SystemConfig) -> Self {
        Self {
            hc: rates.rc.map(|r| rate_to_packets_per_slot(r, cfg)),
            lc: rates.rp.map(|r| rate_to_packets_per_slot(r, cfg)),
        }
    }

    /// Every queue's service covers its mean arrivals.
    pub fn supports(&self, arrivals: &ArrivalRates) -> bool {
        let tol = |a: f64| a * (1.0 - FEASIBILITY_TOL);
        (0..NUM_UES).all(|i| self.hc[i] >= tol(arrivals.a_hc[i]) && self.lc[i] >= tol(arrivals.a_lc[i]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packets_per_slot_conversion() {
        let cfg = SystemConfig::new(ConfigParams::default()).unwrap();
        assert_eq!(rate_to_packets_per_slot(0.0, &cfg), 0.0);
        assert!((rate_to_packets_per_slot(480_480.0, &cfg) - 18.76875).abs() < 1e-9);
        assert!((rate_to_packets_per_slot(502_600.0, &cfg) - 19.6328125).abs() < 1e-9);
        let r = packets_per_slot_to_rate(19.6, &cfg);
        assert!((rate_to_packets_per_slot(r, &cfg) - 19.6).abs() < 1e-12);
    }

    #[test]
    fn symmetric_constructor() {
        let cfg = SystemConfig::symmetric(15.0, 0.6).unwrap();
        assert!((cfg.p_max(0) - 31.622_776_601_683_793).abs() < 1e-9);
        assert_eq!(cfg.gain(0, 1), 0.6);
        assert_eq!(cfg.gain(1, 1), 1.0);
        assert_eq!(cfg.noise(1), 1.0);
        assert_eq!(cfg.blocklength(), Blocklength::Finite(1000));
        assert_eq!(cfg.packet_bits(), 128);
        assert_eq!(cfg.bandwidth_hz(), 300e3);

        let zero = SystemConfig::symmetric(0.0, 0.6).unwrap();
        assert!((zero.p_max(1) - 1.0).abs() < 1e-15);

        let free = SystemConfig::symmetric(20.0, 0.0).unwrap();
        assert_eq!(free.gain(1, 0), 0.0);
        assert!((free.p_max(0) - 100.0).abs() < 1e-12);

        assert!(SystemConfig::symmetric(15.0, -0.1).is_err());
    }

    #[test]
    fn rejects_invalid_parameters() {
        let base = ConfigParams::default();
        let cases: Vec<ConfigParams> = vec![
            ConfigParams { h: [[1.0, -0.1], [0.6, 1.0]], ..base.clone() },
            ConfigParams { sigma2: [0.0, 1.0], ..base.clone() },
            ConfigParams { p_max: [0.0, 1.0], ..base.clone() },
            ConfigParams { bandwidth_hz: 0.0, ..base.clone() },
            ConfigParams { slot_s: -1.0, ..base.clone() },
            ConfigParams { packet_bits: 0, ..base.clone() },
            ConfigParams { blocklength: Blocklength::Finite(50), ..base.clone() },
            ConfigParams { blocklength: Blocklength::Finite(0), allow_short_blocklength: true, ..base.clone() },
            ConfigParams { q_hc: 1e-3, q_lc: 1e-4, ..base.clone() },
            ConfigParams { q_lc: 1.0, ..base.clone() },
            // sqrt(2 * 1e-4) = 0.01414 > q_lc
            ConfigParams { q_hc: 1e-4, q_lc: 1e-2, ..base.clone() },
        ];
        for p in cases {
            assert!(SystemConfig::new(p.clone()).is_err(), "accepted {p:?}");
        }
        let short = ConfigParams {
            blocklength: Blocklength::Finite(50),
            allow_short_blocklength: true,
            ..base.clone()
        };
        assert!(SystemConfig::new(short).is_ok());
        // weak direct links only warn
        let weak = ConfigParams { h: [[0.5, 0.6], [0.6, 0.5]], ..base };
        let cfg = SystemConfig::new(weak).unwrap();
        assert!(!cfg.direct_links_dominate());
    }

    #[test]
    fn relabel_is_an_involution() {
        let cfg = SystemConfig::new(ConfigParams {
            h: [[1.1, 0.3], [0.5, 0.9]],
            sigma2: [1.0, 2.0],
            p_max: [10.0, 20.0],
            ..ConfigParams::default()
        })
        .unwrap();
        let swapped = cfg.relabeled();
        assert_eq!(swapped.gain(0, 0), 0.9);
        assert_eq!(swapped.gain(0, 1), 0.5);
        assert_eq!(swapped.noise(0), 2.0);
        assert_eq!(swapped.relabeled(), cfg);
    }

    #[test]
    fn arrivals_must_be_nonnegative() {
        assert!(ArrivalRates::new([1.0, -1.0], [0.0, 0.0]).is_err());
        assert!(ArrivalRates::symmetric(f64::NAN, 0.0).is_err());
        assert!(ArrivalRates::symmetric(0.0, 0.0).unwrap().is_zero());
    }

    proptest::proptest! {
        #[test]
        fn conversion_is_additive(a in 0.0f64..1e7, b in 0.0f64..1e7) {
            let cfg = SystemConfig::new(ConfigParams::default()).unwrap();
            let lhs = rate_to_packets_per_slot(a + b, &cfg);
            let rhs = rate_to_packets_per_slot(a, &cfg) + rate_to_packets_per_slot(b, &cfg);
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }
}
