//! Piezoelectric vibration channel.
//!
//! The signal is the sum of
//! * arm vibration: white noise through a resonance near `arm_freq_hz`,
//!   plus a broadband floor;
//! * slip texture: white noise through a band around `texture_freq_hz`,
//!   scaled by `v / (v + v_ref) * sqrt(F / F_ref)`;
//! * a response proportional to the grip-force rate `dF/dt`, low-passed at
//!   `transient_corner_hz` so force steps show up as low-frequency bumps.
//!
//! Everything passes through the 30 Hz – 2.5 kHz sensor band.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{sub_rng, TactileError};

pub const PZE_SAMPLE_RATE_HZ: f64 = 10_000.0;
pub const PZE_SAMPLE_PERIOD_S: f64 = 1.0 / PZE_SAMPLE_RATE_HZ;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PzESample {
    pub value: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PzeConfig {
    pub arm_freq_hz: f64,
    pub arm_q: f64,
    pub arm_amplitude: f64,
    pub floor_amplitude: f64,
    pub texture_freq_hz: f64,
    pub texture_q: f64,
    pub texture_amplitude: f64,
    pub v_ref_mps: f64,
    pub force_ref_n: f64,
    /// Output per N/s of grip-force rate.
    pub transient_gain: f64,
    pub transient_corner_hz: f64,
    pub sensor_low_hz: f64,
    pub sensor_high_hz: f64,
}

impl Default for PzeConfig {
    fn default() -> Self {
        Self {
            arm_freq_hz: 120.0,
            arm_q: 2.0,
            arm_amplitude: 1.0,
            floor_amplitude: 0.05,
            texture_freq_hz: 1200.0,
            texture_q: 1.0,
            texture_amplitude: 0.5,
            v_ref_mps: 0.01,
            force_ref_n: 8.0,
            transient_gain: 0.02,
            transient_corner_hz: 50.0,
            sensor_low_hz: 30.0,
            sensor_high_hz: 2500.0,
        }
    }
}

/// Direct-form-II-transposed biquad with RBJ cookbook coefficients.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    z: [f64; 2],
}

impl Biquad {
    fn from_raw(b: [f64; 3], a0: f64, a1: f64, a2: f64) -> Self {
        Self { b: [b[0] / a0, b[1] / a0, b[2] / a0], a: [a1 / a0, a2 / a0], z: [0.0; 2] }
    }

    fn params(f0: f64, q: f64, fs: f64) -> (f64, f64) {
        let w0 = 2.0 * std::f64::consts::PI * f0 / fs;
        (w0.cos(), w0.sin() / (2.0 * q))
    }

    /// Unity peak-gain bandpass.
    pub(crate) fn bandpass(f0: f64, q: f64, fs: f64) -> Self {
        let (c, al) = Self::params(f0, q, fs);
        Self::from_raw([al, 0.0, -al], 1.0 + al, -2.0 * c, 1.0 - al)
    }

    pub(crate) fn lowpass(f0: f64, q: f64, fs: f64) -> Self {
        let (c, al) = Self::params(f0, q, fs);
        Self::from_raw([(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0], 1.0 + al, -2.0 * c, 1.0 - al)
    }

    pub(crate) fn highpass(f0: f64, q: f64, fs: f64) -> Self {
        let (c, al) = Self::params(f0, q, fs);
        Self::from_raw([(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0], 1.0 + al, -2.0 * c, 1.0 - al)
    }

    pub(crate) fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.z[0];
        self.z[0] = self.b[1] * x - self.a[0] * y + self.z[1];
        self.z[1] = self.b[2] * x - self.a[1] * y;
        y
    }
}

/// Sample-by-sample PzE synthesizer. Consumes a fixed number of random
/// draws per sample so streams with the same seed stay aligned whatever
/// the slip input.
#[derive(Debug, Clone)]
pub struct PzeGenerator {
    cfg: PzeConfig,
    rng: ChaCha8Rng,
    arm: Biquad,
    texture: Biquad,
    transient: Biquad,
    sensor_hp: Biquad,
    sensor_lp: Biquad,
    index: u64,
}

impl PzeGenerator {
    pub fn new(cfg: PzeConfig, seed: u64, channel: u64) -> Self {
        let fs = PZE_SAMPLE_RATE_HZ;
        let q = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            cfg,
            rng: sub_rng(seed, 0x5A1F_0000_u64.wrapping_add(channel)),
            arm: Biquad::bandpass(cfg.arm_freq_hz, cfg.arm_q, fs),
            texture: Biquad::bandpass(cfg.texture_freq_hz, cfg.texture_q, fs),
            transient: Biquad::lowpass(cfg.transient_corner_hz, q, fs),
            sensor_hp: Biquad::highpass(cfg.sensor_low_hz, q, fs),
            sensor_lp: Biquad::lowpass(cfg.sensor_high_hz, q, fs),
            index: 0,
        }
    }

    /// Texture gain for a given slip speed and normal force.
    pub fn texture_gain(&self, slip_speed: f64, grasp_force: f64) -> f64 {
        let c = &self.cfg;
        let speed = slip_speed / (slip_speed + c.v_ref_mps);
        let force = (grasp_force.max(0.0) / c.force_ref_n).sqrt();
        c.texture_amplitude * speed * force
    }

    /// Next sample given the current slip speed, normal force and force rate.
    pub fn next_sample(&mut self, slip_speed: f64, grasp_force: f64, force_rate: f64) -> PzESample {
        let n_arm: f64 = StandardNormal.sample(&mut self.rng);
        let n_floor: f64 = StandardNormal.sample(&mut self.rng);
        let n_tex: f64 = StandardNormal.sample(&mut self.rng);
        let gain = self.texture_gain(slip_speed.abs(), grasp_force);
        let raw = self.cfg.arm_amplitude * self.arm.process(n_arm)
            + self.cfg.floor_amplitude * n_floor
            + gain * self.texture.process(n_tex)
            + self.transient.process(self.cfg.transient_gain * force_rate);
        let value = self.sensor_lp.process(self.sensor_hp.process(raw));
        let timestamp = self.index as f64 * PZE_SAMPLE_PERIOD_S;
        self.index += 1;
        PzESample { value, timestamp }
    }
}

/// Renders `duration` seconds at constant slip speed and grip force.
pub fn render_pze(
    slip_speed: f64,
    grasp_force: f64,
    duration: f64,
    seed: u64,
    cfg: &PzeConfig,
) -> Result<Vec<PzESample>, TactileError> {
    if slip_speed < 0.0 {
        return Err(TactileError::NegativeSpeed(slip_speed));
    }
    let n = (duration * PZE_SAMPLE_RATE_HZ).round() as usize;
    let mut g = PzeGenerator::new(*cfg, seed, 0);
    Ok((0..n).map(|_| g.next_sample(slip_speed, grasp_force, 0.0)).collect())
}
