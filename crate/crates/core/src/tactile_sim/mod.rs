//! Simulated hybrid tactile stack.
//!
//! * [`pzr`]: 8×8 pressure pads used to localize contacts.
//! * [`pze`]: 10 kHz vibration channel synthesized from slip speed and grip force.
//! * [`detector`]: short-window band-energy slip detector with hysteresis.

pub mod detector;
pub mod pze;
pub mod pzr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use detector::{calibrate_thresholds, detect_slip, DetectorConfig, SlipDetector, WindowReport};
pub use pze::{render_pze, PzeConfig, PzeGenerator, PzESample, PZE_SAMPLE_PERIOD_S, PZE_SAMPLE_RATE_HZ};
pub use pzr::{estimate_contact, render_pzr, PadGeometry, PzRFrame, PzrConfig, PAD_SIZE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TactileError {
    #[error("contact projects outside the pad")]
    ContactOffPad,
    #[error("normal force must be non-negative, got {0}")]
    NegativeNormal(f64),
    #[error("slip speed must be non-negative, got {0}")]
    NegativeSpeed(f64),
    #[error("stream shorter than one detector window")]
    WindowUnderflow,
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
}

/// Independent RNG stream `stream` derived from a trial seed.
pub fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
