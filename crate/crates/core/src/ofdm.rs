//! OFDM grid geometry, modulation and demodulation.
//!
//! Scaling follows the textbook convention used throughout the crate: the
//! IDFT carries the `1/N` factor and the DFT is unscaled, so an ideal channel
//! gives `demodulate(modulate(X)) == X`.
//!
//! Subcarriers are indexed `0..N`. Mapping bins above `N/2` onto negative
//! frequencies is a placement convention of [`crate::refsig`], not of this
//! module.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{Cf64, Error, Result};

/// Grid geometry of one OFDM carrier (or one narrowband slice of it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfdmConfig {
    pub subcarrier_spacing_hz: f64,
    /// DFT size `N`, a power of two.
    pub dft_size: usize,
    /// Cyclic prefix length in samples.
    pub cp_len: usize,
    /// Center frequency of the grid in Hz.
    pub carrier_freq_hz: f64,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            subcarrier_spacing_hz: 30e3,
            dft_size: 256,
            // 144 samples at N = 2048, scaled to N = 256.
            cp_len: 18,
            carrier_freq_hz: 2e9,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.subcarrier_spacing_hz.is_finite() && self.subcarrier_spacing_hz > 0.0) {
            return Err(Error::config("subcarrier spacing must be positive"));
        }
        if !self.dft_size.is_power_of_two() || self.dft_size < 2 {
            return Err(Error::config(format!(
                "DFT size {} is not a power of two",
                self.dft_size
            )));
        }
        if self.cp_len >= self.dft_size {
            return Err(Error::config(format!(
                "cyclic prefix {} must be shorter than the DFT size {}",
                self.cp_len, self.dft_size
            )));
        }
        if !(self.carrier_freq_hz.is_finite() && self.carrier_freq_hz > 0.0) {
            return Err(Error::config("carrier frequency must be positive"));
        }
        Ok(())
    }

    /// Sample interval `T_s = 1/(N·B)`.
    pub fn sample_interval(&self) -> f64 {
        1.0 / self.sample_rate()
    }

    pub fn sample_rate(&self) -> f64 {
        self.dft_size as f64 * self.subcarrier_spacing_hz
    }

    /// Samples per OFDM symbol including the cyclic prefix.
    pub fn symbol_len(&self) -> usize {
        self.dft_size + self.cp_len
    }

    /// The same grid centered on a different RF frequency.
    pub fn retuned(&self, carrier_freq_hz: f64) -> Self {
        Self {
            carrier_freq_hz,
            ..*self
        }
    }

    /// Carrier wavelength `c / f_c`.
    pub fn wavelength(&self) -> f64 {
        crate::SPEED_OF_LIGHT / self.carrier_freq_hz
    }
}

/// One OFDM symbol in the frequency domain, `X[k]` for `k = 0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyDomainSymbols {
    values: Vec<Cf64>,
}

impl FrequencyDomainSymbols {
    pub fn new(values: Vec<Cf64>, cfg: &OfdmConfig) -> Result<Self> {
        if values.len() != cfg.dft_size {
            return Err(Error::config(format!(
                "expected {} subcarriers, got {}",
                cfg.dft_size,
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(cfg: &OfdmConfig) -> Self {
        Self {
            values: vec![Cf64::new(0.0, 0.0); cfg.dft_size],
        }
    }

    pub fn values(&self) -> &[Cf64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Cf64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Cf64> {
        self.values
    }

    /// Number of subcarriers carrying a nonzero symbol.
    pub fn occupied(&self) -> usize {
        self.values.iter().filter(|v| v.norm_sqr() > 0.0).count()
    }

    /// `Σ_k |X[k]|²`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// A run of complex baseband samples at a known sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDomainSignal {
    pub samples: Vec<Cf64>,
    pub sample_rate_hz: f64,
}

impl TimeDomainSignal {
    pub fn new(samples: Vec<Cf64>, sample_rate_hz: f64) -> Self {
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn zeros(len: usize, sample_rate_hz: f64) -> Self {
        Self::new(vec![Cf64::new(0.0, 0.0); len], sample_rate_hz)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean of `|x[n]|²`; zero for an empty signal.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

/// Planned forward and inverse DFTs of one size.
///
/// Plans are shared behind `Arc`, so a `Dft` is cheap to clone and can be
/// used from several threads.
#[derive(Clone)]
pub struct Dft {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Dft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dft").field("size", &self.size).finish()
    }
}

impl Dft {
    pub fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Unscaled forward transform, `Y[k] = Σ_n y[n]·e^{-j2πkn/N}`.
    pub fn forward(&self, buf: &mut [Cf64]) {
        debug_assert_eq!(buf.len(), self.size);
        self.forward.process(buf);
    }

    /// Inverse transform with the `1/N` factor, `x[n] = (1/N)·Σ_k X[k]·e^{j2πkn/N}`.
    pub fn inverse(&self, buf: &mut [Cf64]) {
        debug_assert_eq!(buf.len(), self.size);
        self.inverse.process(buf);
        let scale = 1.0 / self.size as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

/// OFDM modulator/demodulator bound to one grid, with planned transforms.
#[derive(Debug, Clone)]
pub struct Modem {
    cfg: OfdmConfig,
    dft: Dft,
}

impl Modem {
    pub fn new(cfg: OfdmConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            dft: Dft::new(cfg.dft_size),
            cfg,
        })
    }

    pub fn config(&self) -> &OfdmConfig {
        &self.cfg
    }

    pub fn dft(&self) -> &Dft {
        &self.dft
    }

    /// IDFT plus cyclic prefix; returns `N_cp + N` samples for `n = -N_cp..N`.
    pub fn modulate(&self, symbols: &FrequencyDomainSymbols) -> Result<TimeDomainSignal> {
        let n = self.cfg.dft_size;
        if symbols.values.len() != n {
            return Err(Error::config(format!(
                "expected {} subcarriers, got {}",
                n,
                symbols.values.len()
            )));
        }
        let mut body = symbols.values.clone();
        self.dft.inverse(&mut body);
        let mut samples = Vec::with_capacity(self.cfg.symbol_len());
        samples.extend_from_slice(&body[n - self.cfg.cp_len..]);
        samples.extend_from_slice(&body);
        Ok(TimeDomainSignal::new(samples, self.cfg.sample_rate()))
    }

    /// Drops the cyclic prefix and takes the unscaled DFT of the next `N` samples.
    pub fn demodulate(&self, signal: &TimeDomainSignal) -> Result<FrequencyDomainSymbols> {
        let need = self.cfg.symbol_len();
        if signal.samples.len() < need {
            return Err(Error::input(format!(
                "need at least {} samples to demodulate, got {}",
                need,
                signal.samples.len()
            )));
        }
        let mut body = signal.samples[self.cfg.cp_len..need].to_vec();
        self.dft.forward(&mut body);
        Ok(FrequencyDomainSymbols { values: body })
    }
}

/// See [`Modem::modulate`].
pub fn modulate(symbols: &FrequencyDomainSymbols, cfg: &OfdmConfig) -> Result<TimeDomainSignal> {
    Modem::new(*cfg)?.modulate(symbols)
}

/// See [`Modem::demodulate`].
pub fn demodulate(signal: &TimeDomainSignal, cfg: &OfdmConfig) -> Result<FrequencyDomainSymbols> {
    Modem::new(*cfg)?.demodulate(signal)
}

/// Dense `N × N` leakage matrix: entry `(k, l)` multiplies `X[l]` in `Y[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IciMatrix {
    size: usize,
    entries: Vec<Cf64>,
}

impl IciMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, k: usize, l: usize) -> Cf64 {
        self.entries[k * self.size + l]
    }

    /// `Y = M·X`.
    pub fn apply(&self, x: &[Cf64]) -> Vec<Cf64> {
        assert_eq!(x.len(), self.size, "vector length must match the matrix");
        self.entries
            .chunks_exact(self.size)
            .map(|row| row.iter().zip(x).map(|(m, v)| m * v).sum())
            .collect()
    }
}

/// Inter-carrier interference caused by a composite frequency shift of
/// `composite_offset_hz` (oscillator offset plus Doppler).
///
/// With `ε = offset / B` and `u = l - k + ε`, entry `(k, l)` is the
/// Dirichlet-kernel coefficient
/// `(1/N)·e^{jπu(1-1/N)}·sin(πu)/sin(πu/N)`, and exactly `1` where `u` is a
/// multiple of `N`.
pub fn ici_profile(cfg: &OfdmConfig, composite_offset_hz: f64) -> Result<IciMatrix> {
    cfg.validate()?;
    let nyquist = cfg.sample_rate() / 2.0;
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
    if !(composite_offset_hz.abs() < nyquist) {
        return Err(Error::input(format!(
            "composite offset {composite_offset_hz} Hz is outside ±{nyquist} Hz"
        )));
    }
    let n = cfg.dft_size;
    let nf = n as f64;
    let eps = composite_offset_hz / cfg.subcarrier_spacing_hz;
    let mut entries = Vec::with_capacity(n * n);
    for k in 0..n {
        for l in 0..n {
            let u = l as f64 - k as f64 + eps;
            let den = (PI * u / nf).sin();
            let coeff = if den.abs() < 1e-12 {
                // Every term of the geometric sum is 1.
                Cf64::new(1.0, 0.0)
            } else {
                let mag = (PI * u).sin() / den / nf;
                Cf64::from_polar(mag, PI * u * (1.0 - 1.0 / nf))
            };
            entries.push(coeff);
        }
    }
    Ok(IciMatrix { size: n, entries })
}
