//! SINR expressions for successive decoding (order `s^c_i -> s^c_j -> s^p_i`
//! at AP `i`) and for the two time-division baselines.

use crate::model::{PowerAllocation, SystemConfig, NUM_UES};

/// Linear SINRs seen under rate-splitting with successive decoding.
///
/// `gc_own[i]` is UE `i`'s common stream at AP `i`, `gc_cross[i]` is UE `j`'s
/// common stream at AP `i` (`j != i`) and `gp[i]` is UE `i`'s private stream at
/// AP `i` after both commons are removed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SinrSet {
    pub gc_own: [f64; 2],
    pub gc_cross: [f64; 2],
    pub gp: [f64; 2],
}

impl SinrSet {
    /// SINR of UE `ue`'s common stream at AP `ap`.
    pub fn common(&self, ap: usize, ue: usize) -> f64 {
        if ap == ue {
            self.gc_own[ap]
        } else {
            self.gc_cross[ap]
        }
    }

    /// Flattened as `[g11, g12, g21, g22, gp1, gp2]` where `gij` is UE `j`'s
    /// common at AP `i`.
    pub fn to_layout(&self) -> [f64; 6] {
        [
            self.gc_own[0],
            self.gc_cross[0],
            self.gc_cross[1],
            self.gc_own[1],
            self.gp[0],
            self.gp[1],
        ]
    }

    pub fn from_layout(v: &[f64; 6]) -> Self {
        Self {
            gc_own: [v[0], v[3]],
            gc_cross: [v[1], v[2]],
            gp: [v[4], v[5]],
        }
    }
}

pub fn rsma_sinrs(p: &PowerAllocation, cfg: &SystemConfig) -> SinrSet {
    let mut out = SinrSet::default();
    for i in 0..NUM_UES {
        let j = 1 - i;
        let (hii, hij) = (cfg.gain_sq(i, i), cfg.gain_sq(i, j));
        let n = cfg.noise(i);
        out.gc_own[i] = hii * p.pc[i] / (hii * p.pp[i] + hij * (p.pc[j] + p.pp[j]) + n);
        out.gc_cross[i] = hij * p.pc[j] / (hii * p.pp[i] + hij * p.pp[j] + n);
        out.gp[i] = hii * p.pp[i] / (hij * p.pp[j] + n);
    }
    out
}

/// Single-connectivity SINRs of one TDM phase; the other UE is noise.
pub fn tdm_sc_sinrs(powers: [f64; 2], cfg: &SystemConfig) -> [f64; 2] {
    let mut out = [0.0; 2];
    for i in 0..NUM_UES {
        let j = 1 - i;
        out[i] = cfg.gain_sq(i, i) * powers[i] / (cfg.gain_sq(i, j) * powers[j] + cfg.noise(i));
    }
    out
}

/// Effective SINR of each UE's HC message in the multi-connectivity TDM
/// phase: the worse of its own AP (other common as interference) and the
/// other AP after that AP removed its own UE's message.
///
/// The cross term is normalised by the receiving AP's noise.
pub fn tdm_mc_sinrs(powers: [f64; 2], cfg: &SystemConfig) -> [f64; 2] {
    let own = tdm_sc_sinrs(powers, cfg);
    let mut out = [0.0; 2];
    for i in 0..NUM_UES {
        let j = 1 - i;
        let cross = cfg.gain_sq(j, i) * powers[i] / cfg.noise(j);
        out[i] = own[i].min(cross);
    }
    out
}
