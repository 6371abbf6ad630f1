//! Joint Doppler shift and oscillator frequency offset estimation for OFDM
//! downlinks in satellite channels.
//!
//! A receiver that only looks at one reference signal sees a single composite
//! frequency error: the oscillator offset plus the Doppler shift at that
//! signal's frequency. Oscillator offsets are the same at every frequency,
//! while Doppler scales with absolute frequency, so measuring the composite at
//! two or more frequency positions in the carrier and solving a small
//! least-squares system separates them.
//!
//! The crate is organized bottom-up:
//!
//! - [`ofdm`]: grid geometry, IDFT/DFT modulation and the inter-carrier
//!   leakage matrix of a frequency-shifted symbol.
//! - [`channel`]: tapped-delay-line channel with a shared Doppler ramp,
//!   oscillator offset, AWGN and receiver sampling drift.
//! - [`refsig`]: seeded QPSK reference signals and per-position extraction.
//! - [`estimator`]: differential phase measurements, the linear system, the
//!   least-squares solve and first-order IIR tracking.
//! - [`harness`]: seeded Monte Carlo campaigns, statistics and CSV output.

pub mod channel;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod ofdm;
pub mod refsig;

pub use error::{Error, Result};

/// Complex baseband sample type used throughout the crate.
pub type Cf64 = num_complex::Complex<f64>;

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// SplitMix64 finalizer; derives well-spread child seeds from a parent seed
/// and an index.
pub(crate) fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
