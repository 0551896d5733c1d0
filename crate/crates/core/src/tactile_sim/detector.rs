//! Streaming band-energy slip detector.
//!
//! Every `hop_samples` the last `window_samples` are Hann-windowed and
//! transformed; the mean in-band power is compared against an onset and a
//! lower offset threshold. Cues are emitted on state changes only, so
//! onset and offset cues alternate.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::pze::{PzeGenerator, PzeConfig, PzESample, PZE_SAMPLE_PERIOD_S, PZE_SAMPLE_RATE_HZ};
use super::TactileError;
use crate::controller::SlipCue;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub window_samples: usize,
    pub hop_samples: usize,
    pub band_hz: (f64, f64),
    pub onset_threshold: f64,
    pub offset_threshold: f64,
    /// Recording and transmission delay added to every cue, seconds.
    pub extra_latency: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            window_samples: 256,
            hop_samples: 64,
            band_hz: (400.0, 2500.0),
            onset_threshold: 1.0,
            offset_threshold: 0.6,
            extra_latency: 0.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), TactileError> {
        let bad = |m: &str| Err(TactileError::InvalidConfig(m.to_string()));
        if self.window_samples == 0 || self.hop_samples == 0 {
            return bad("window and hop must be positive");
        }
        if !(self.onset_threshold > self.offset_threshold && self.offset_threshold >= 0.0) {
            return bad("need onset_threshold > offset_threshold >= 0");
        }
        if !(self.band_hz.0 < self.band_hz.1) {
            return bad("empty energy band");
        }
        if !(self.extra_latency >= 0.0) {
            return bad("extra_latency must be non-negative");
        }
        Ok(())
    }

    pub fn window_duration(&self) -> f64 {
        self.window_samples as f64 * PZE_SAMPLE_PERIOD_S
    }
}

/// Band energy of one analysis window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowReport {
    pub window_end: f64,
    pub energy: f64,
    pub active: bool,
    pub cue: Option<SlipCue>,
}

pub struct SlipDetector {
    cfg: DetectorConfig,
    fft: Arc<dyn Fft<f64>>,
    hann: Vec<f64>,
    hann_power: f64,
    bins: (usize, usize),
    ring: Vec<f64>,
    head: usize,
    seen: usize,
    active: bool,
    channel: usize,
    scratch: Vec<Complex<f64>>,
}

impl SlipDetector {
    pub fn new(cfg: DetectorConfig, channel: usize) -> Result<Self, TactileError> {
        cfg.validate()?;
        let n = cfg.window_samples;
        let fft = FftPlanner::new().plan_fft_forward(n);
        let hann: Vec<f64> = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        let hann_power = hann.iter().map(|w| w * w).sum();
        let df = PZE_SAMPLE_RATE_HZ / n as f64;
        let lo = (cfg.band_hz.0 / df).ceil() as usize;
        let hi = ((cfg.band_hz.1 / df).floor() as usize).min(n / 2);
        Ok(Self {
            fft,
            hann,
            hann_power,
            bins: (lo, hi),
            ring: vec![0.0; n],
            head: 0,
            seen: 0,
            active: false,
            channel,
            scratch: vec![Complex::default(); n],
            cfg,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    fn energy(&mut self) -> f64 {
        let n = self.cfg.window_samples;
        for i in 0..n {
            let x = self.ring[(self.head + i) % n];
            self.scratch[i] = Complex::new(x * self.hann[i], 0.0);
        }
        self.fft.process(&mut self.scratch);
        let sum: f64 = self.scratch[self.bins.0..=self.bins.1].iter().map(|c| c.norm_sqr()).sum();
        2.0 * sum / (n as f64 * self.hann_power)
    }

    /// Feeds one sample; returns a report when a window completes.
    pub fn push(&mut self, sample: PzESample) -> Option<WindowReport> {
        let n = self.cfg.window_samples;
        self.ring[self.head] = sample.value;
        self.head = (self.head + 1) % n;
        self.seen += 1;
        if self.seen < n || !(self.seen - n).is_multiple_of(self.cfg.hop_samples) {
            return None;
        }
        let energy = self.energy();
        let window_end = sample.timestamp + PZE_SAMPLE_PERIOD_S;
        let timestamp = window_end + self.cfg.extra_latency;
        let cue = if !self.active && energy > self.cfg.onset_threshold {
            self.active = true;
            let confidence = ((energy - self.cfg.onset_threshold) / self.cfg.onset_threshold).clamp(0.0, 1.0);
            Some(SlipCue { detected: true, confidence, timestamp, finger_ids: vec![self.channel] })
        } else if self.active && energy < self.cfg.offset_threshold {
            self.active = false;
            let confidence = ((self.cfg.offset_threshold - energy) / self.cfg.offset_threshold).clamp(0.0, 1.0);
            Some(SlipCue { detected: false, confidence, timestamp, finger_ids: vec![self.channel] })
        } else {
            None
        };
        Some(WindowReport { window_end, energy, active: self.active, cue })
    }
}

/// Runs the detector over a complete stream.
pub fn detect_slip(stream: &[PzESample], cfg: &DetectorConfig) -> Result<Vec<SlipCue>, TactileError> {
    if stream.len() < cfg.window_samples {
        return Err(TactileError::WindowUnderflow);
    }
    let mut det = SlipDetector::new(cfg.clone(), 0)?;
    Ok(stream.iter().filter_map(|s| det.push(*s).and_then(|r| r.cue)).collect())
}

/// Onset and offset thresholds from a slip-free calibration run:
/// `onset_factor` and `offset_factor` times the 99.9th percentile of the
/// baseline window energy.
pub fn calibrate_thresholds(
    pze: &PzeConfig,
    cfg: &DetectorConfig,
    seed: u64,
    duration: f64,
    grasp_force: f64,
    onset_factor: f64,
    offset_factor: f64,
) -> Result<(f64, f64), TactileError> {
    let mut probe = cfg.clone();
    probe.onset_threshold = f64::INFINITY;
    probe.offset_threshold = 0.0;
    let mut det = SlipDetector::new(probe, 0)?;
    let mut gen = PzeGenerator::new(*pze, seed, u64::MAX);
    let n = (duration * PZE_SAMPLE_RATE_HZ).round() as usize;
    let mut energies: Vec<f64> = (0..n)
        .filter_map(|_| det.push(gen.next_sample(0.0, grasp_force, 0.0)).map(|r| r.energy))
        .collect();
    if energies.is_empty() {
        return Err(TactileError::WindowUnderflow);
    }
    energies.sort_by(f64::total_cmp);
    let idx = ((0.999 * energies.len() as f64).ceil() as usize).clamp(1, energies.len()) - 1;
    let p = energies[idx];
    Ok((onset_factor * p, offset_factor * p))
}
