//! Piezoresistive pad forward model and centroid estimator.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::TactileError;

pub const PAD_SIZE: usize = 8;

/// Flat rigid pad: taxel `(i, j)` sits at
/// `center + (i - 3.5)·pitch·u + (j - 3.5)·pitch·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct PadGeometry {
    pub pad_id: usize,
    pub center: Vector3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    /// Outward pad normal, `u × v` up to sign.
    pub normal: Vector3<f64>,
    pub pitch: f64,
}

impl PadGeometry {
    /// In-plane coordinates of `p` relative to the pad center, meters.
    pub fn local(&self, p: &Vector3<f64>) -> (f64, f64) {
        let d = p - self.center;
        (d.dot(&self.u), d.dot(&self.v))
    }

    pub fn half_extent(&self) -> f64 {
        0.5 * PAD_SIZE as f64 * self.pitch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PzrConfig {
    /// Blob standard deviation in taxels.
    pub sigma_taxels: f64,
    /// Total pressure per newton of normal force.
    pub gain_per_n: f64,
    pub noise_std: f64,
    /// Per-taxel level subtracted before the centroid.
    pub floor: f64,
    /// Minimum floor-subtracted total pressure for a contact to be reported.
    pub min_total: f64,
}

impl Default for PzrConfig {
    fn default() -> Self {
        Self { sigma_taxels: 1.0, gain_per_n: 1.0, noise_std: 0.01, floor: 0.03, min_total: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PzRFrame {
    pub pressures: [[f64; PAD_SIZE]; PAD_SIZE],
    pub pad_id: usize,
    pub timestamp: f64,
    pub pitch: f64,
}

impl PzRFrame {
    pub fn total(&self) -> f64 {
        self.pressures.iter().flatten().sum()
    }
}

/// Renders the pressure image of a contact at `position` carrying
/// `normal_force`. Noise is added only when `rng` is given.
pub fn render_pzr<R: Rng + ?Sized>(
    position: &Vector3<f64>,
    normal_force: f64,
    pad: &PadGeometry,
    cfg: &PzrConfig,
    timestamp: f64,
    rng: Option<&mut R>,
) -> Result<PzRFrame, TactileError> {
    if normal_force < 0.0 {
        return Err(TactileError::NegativeNormal(normal_force));
    }
    let (cu, cv) = pad.local(position);
    let h = pad.half_extent();
    if cu.abs() > h || cv.abs() > h {
        return Err(TactileError::ContactOffPad);
    }
    let (cu, cv) = (cu / pad.pitch + 3.5, cv / pad.pitch + 3.5);
    let s2 = cfg.sigma_taxels * cfg.sigma_taxels;
    let scale = cfg.gain_per_n * normal_force / (2.0 * std::f64::consts::PI * s2);
    let mut pressures = [[0.0; PAD_SIZE]; PAD_SIZE];
    for (i, row) in pressures.iter_mut().enumerate() {
        for (j, p) in row.iter_mut().enumerate() {
            let d2 = (i as f64 - cu).powi(2) + (j as f64 - cv).powi(2);
            *p = scale * (-d2 / (2.0 * s2)).exp();
        }
    }
    if let Some(rng) = rng {
        if cfg.noise_std > 0.0 {
            let noise = Normal::new(0.0, cfg.noise_std).expect("finite std");
            for p in pressures.iter_mut().flatten() {
                *p = (*p + noise.sample(rng)).max(0.0);
            }
        }
    }
    Ok(PzRFrame { pressures, pad_id: pad.pad_id, timestamp, pitch: pad.pitch })
}

/// Floor-subtracted pressure centroid on the pad surface, with the pad
/// normal. `None` when the floor-subtracted total is below `min_total`;
/// the raw total is not used because clipped noise alone adds up to a few
/// tenths over the whole pad.
pub fn estimate_contact(frame: &PzRFrame, pad: &PadGeometry, cfg: &PzrConfig) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let (mut w, mut su, mut sv) = (0.0, 0.0, 0.0);
    for (i, row) in frame.pressures.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            let q = (p - cfg.floor).max(0.0);
            w += q;
            su += q * (i as f64 - 3.5);
            sv += q * (j as f64 - 3.5);
        }
    }
    if !(w >= cfg.min_total) {
        return None;
    }
    let pos = pad.center + pad.u * (su / w * pad.pitch) + pad.v * (sv / w * pad.pitch);
    Some((pos, pad.normal))
}
