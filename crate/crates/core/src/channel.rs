//! Satellite downlink channel: tapped delay line, Doppler, oscillator offset,
//! AWGN and receiver sampling drift.
//!
//! All taps share one Doppler ramp. The composite frequency error seen on a
//! grid centered at `f_c` is `Δf + v·f_c/c`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ofdm::{OfdmConfig, TimeDomainSignal};
use crate::{Cf64, Error, Result, SPEED_OF_LIGHT};

/// One entry of a tap table as it appears in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapSpec {
    pub delay_samples: usize,
    /// Average power before normalization.
    pub power_db: f64,
    /// A line-of-sight tap has fixed magnitude and a uniformly random phase;
    /// other taps are Rayleigh.
    #[serde(default)]
    pub los: bool,
}

/// Default tap table.
///
/// Shaped after a LOS-dominated NTN TDL profile (strong specular tap plus
/// weak Rayleigh taps, K-factor around 11.7 dB) with delays rounded to
/// integer samples at 7.68 MHz. These are implementation defaults, not
/// published channel data.
pub fn default_taps() -> Vec<TapSpec> {
    vec![
        TapSpec {
            delay_samples: 0,
            power_db: -0.284,
            los: true,
        },
        TapSpec {
            delay_samples: 0,
            power_db: -11.991,
            los: false,
        },
        TapSpec {
            delay_samples: 1,
            power_db: -9.887,
            los: false,
        },
        TapSpec {
            delay_samples: 6,
            power_db: -16.771,
            los: false,
        },
    ]
}

/// A single unit-gain tap with no delay.
pub fn single_tap() -> Vec<TapSpec> {
    vec![TapSpec {
        delay_samples: 0,
        power_db: 0.0,
        los: true,
    }]
}

/// Tap powers scaled to unit total, in linear units.
pub fn normalized_powers(taps: &[TapSpec]) -> Result<Vec<f64>> {
    if taps.is_empty() {
        return Err(Error::config("tap table is empty"));
    }
    let lin: Vec<f64> = taps.iter().map(|t| 10f64.powf(t.power_db / 10.0)).collect();
    let total: f64 = lin.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::config(
            "tap powers must sum to a positive finite value",
        ));
    }
    Ok(lin.into_iter().map(|p| p / total).collect())
}

/// Parameters of one trial's channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    /// Relative speed `v` in m/s; positive closes the range and raises the
    /// received frequency.
    pub relative_speed_mps: f64,
    /// Oscillator offset `Δf` in Hz.
    pub freq_offset_hz: f64,
    pub taps: Vec<TapSpec>,
    /// Per-antenna SNR in dB; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub num_rx: usize,
    /// `α = f_s / f_c`.
    pub sampling_ratio: f64,
    pub model_drift: bool,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        normalized_powers(&self.taps)?;
        if self.num_rx == 0 {
            return Err(Error::config("need at least one receive antenna"));
        }
        if !(self.sampling_ratio.is_finite() && self.sampling_ratio > 0.0) {
            return Err(Error::config("sampling ratio must be positive"));
        }
        if !self.relative_speed_mps.is_finite() || !self.freq_offset_hz.is_finite() {
            return Err(Error::config("speed and frequency offset must be finite"));
        }
        if self.snr_db.is_nan() {
            return Err(Error::config("SNR is NaN"));
        }
        Ok(())
    }
}

/// A delayed complex gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub delay_samples: usize,
    pub gain: Cf64,
}

/// Frozen per-antenna tap gains plus the trial's motion and offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `antennas[r]` is the tap list seen by receive antenna `r`.
    pub antennas: Vec<Vec<Tap>>,
    pub relative_speed_mps: f64,
    pub freq_offset_hz: f64,
    pub sampling_ratio: f64,
}

impl ChannelRealization {
    /// Draws independent gains for every antenna.
    pub fn draw<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let powers = normalized_powers(&cfg.taps)?;
        let antennas = (0..cfg.num_rx)
            .map(|_| {
                cfg.taps
                    .iter()
                    .zip(&powers)
                    .map(|(spec, &p)| {
                        let gain = if spec.los {
                            Cf64::from_polar(p.sqrt(), rng.random_range(-PI..PI))
                        } else {
                            let s = (p / 2.0).sqrt();
                            let re: f64 = StandardNormal.sample(rng);
                            let im: f64 = StandardNormal.sample(rng);
                            Cf64::new(re * s, im * s)
                        };
                        Tap {
                            delay_samples: spec.delay_samples,
                            gain,
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            antennas,
            relative_speed_mps: cfg.relative_speed_mps,
            freq_offset_hz: cfg.freq_offset_hz,
            sampling_ratio: cfg.sampling_ratio,
        })
    }

    /// One tap of the given gain on every antenna.
    pub fn single_tap(
        gain: Cf64,
        relative_speed_mps: f64,
        freq_offset_hz: f64,
        num_rx: usize,
    ) -> Self {
        Self {
            antennas: vec![
                vec![Tap {
                    delay_samples: 0,
                    gain
                }];
                num_rx
            ],
            relative_speed_mps,
            freq_offset_hz,
            sampling_ratio: 1.0,
        }
    }

    /// `Δf + v·f/c`.
    pub fn composite_offset_hz(&self, freq_hz: f64) -> f64 {
        self.freq_offset_hz + self.relative_speed_mps * freq_hz / SPEED_OF_LIGHT
    }
}

fn apply_taps(x: &[Cf64], taps: &[Tap]) -> Vec<Cf64> {
    let mut y = vec![Cf64::new(0.0, 0.0); x.len()];
    for tap in taps {
        if tap.delay_samples >= x.len() {
            continue;
        }
        for (out, v) in y[tap.delay_samples..].iter_mut().zip(x) {
            *out += tap.gain * v;
        }
    }
    y
}

fn apply_ramp(y: &mut [Cf64], freq_hz: f64, sample_interval: f64) {
    let w = 2.0 * PI * freq_hz * sample_interval;
    for (n, v) in y.iter_mut().enumerate() {
        *v *= Cf64::from_polar(1.0, w * n as f64);
    }
}

/// Narrowband channel on the grid `cfg`: each antenna gets
/// `Σ_taps g·x[n-d]` multiplied by `e^{j2π(Δf + v/λ)·n·T_s}` with
/// `λ = c / cfg.carrier_freq_hz`.
///
/// Samples before the start of `x` are taken as zero.
pub fn apply_channel(
    x: &TimeDomainSignal,
    real: &ChannelRealization,
    cfg: &OfdmConfig,
) -> Vec<TimeDomainSignal> {
    let composite = real.composite_offset_hz(cfg.carrier_freq_hz);
    let ts = cfg.sample_interval();
    real.antennas
        .iter()
        .map(|taps| {
            let mut y = apply_taps(&x.samples, taps);
            apply_ramp(&mut y, composite, ts);
            TimeDomainSignal::new(y, x.sample_rate_hz)
        })
        .collect()
}

/// Wideband channel: every frequency component `f_c + f` is shifted by
/// `Δf + v·(f_c + f)/c`.
///
/// The per-frequency Doppler is a time compression by `1 + v/c` followed by
/// the common ramp at `Δf + v·f_c/c`. Used to cross-check the narrowband
/// simulation where several positions share one grid.
pub fn apply_wideband_channel(
    x: &TimeDomainSignal,
    real: &ChannelRealization,
    cfg: &OfdmConfig,
) -> Vec<TimeDomainSignal> {
    let composite = real.composite_offset_hz(cfg.carrier_freq_hz);
    let scale = 1.0 + real.relative_speed_mps / SPEED_OF_LIGHT;
    let ts = cfg.sample_interval();
    let interp = shared_interpolator();
    real.antennas
        .iter()
        .map(|taps| {
            let y = apply_taps(&x.samples, taps);
            let mut y = interp.resample(&y, scale, y.len());
            apply_ramp(&mut y, composite, ts);
            TimeDomainSignal::new(y, x.sample_rate_hz)
        })
        .collect()
}

/// Adds circularly-symmetric complex Gaussian noise of variance
/// `mean_power(y) / 10^(snr_db/10)`. An infinite SNR returns `y` unchanged.
pub fn add_noise<R: Rng + ?Sized>(
    y: &TimeDomainSignal,
    snr_db: f64,
    rng: &mut R,
) -> TimeDomainSignal {
    if snr_db == f64::INFINITY || y.is_empty() {
        return y.clone();
    }
    let variance = y.mean_power() / 10f64.powf(snr_db / 10.0);
    add_noise_with_variance(y, variance, rng)
}

/// Adds complex Gaussian noise with total variance `variance` per sample.
pub fn add_noise_with_variance<R: Rng + ?Sized>(
    y: &TimeDomainSignal,
    variance: f64,
    rng: &mut R,
) -> TimeDomainSignal {
    let sigma = (variance / 2.0).sqrt();
    let samples = y
        .samples
        .iter()
        .map(|s| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            s + Cf64::new(re * sigma, im * sigma)
        })
        .collect();
    TimeDomainSignal::new(samples, y.sample_rate_hz)
}

/// Ratio `T_s'/T_s` of the drifted to the nominal sample interval.
///
/// The receiver derives its clock from a local oscillator that is off by
/// `Δf`, so it actually samples at `α·(f_c - Δf)` with `f_c = f_s/α`.
pub fn drift_ratio(sample_rate_hz: f64, alpha: f64, freq_offset_hz: f64) -> f64 {
    let carrier = sample_rate_hz / alpha;
    carrier / (carrier - freq_offset_hz)
}

/// Resamples `y` at the instants `n·T_s'` produced by a drifting receiver
/// clock, using band-limited interpolation of the nominal samples.
pub fn apply_sampling_drift(
    y: &TimeDomainSignal,
    alpha: f64,
    freq_offset_hz: f64,
) -> Result<TimeDomainSignal> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::config("sampling ratio must be positive"));
    }
    let ratio = drift_ratio(y.sample_rate_hz, alpha, freq_offset_hz);
    if !(ratio > 0.99 && ratio < 1.01) {
        return Err(Error::config(format!(
            "sampling drift ratio {ratio} is outside (0.99, 1.01)"
        )));
    }
    let samples = shared_interpolator().resample(&y.samples, ratio, y.len());
    Ok(TimeDomainSignal::new(samples, y.sample_rate_hz))
}

/// Kaiser-windowed sinc interpolator.
///
/// The window is tabulated once at construction and linearly interpolated,
/// which keeps resampling cost at a few multiplies per tap.
#[derive(Debug, Clone)]
pub struct SincInterpolator {
    half_width: usize,
    /// Window samples at `|d| = i / WINDOW_OVERSAMPLING`.
    window: Vec<f64>,
}

const WINDOW_OVERSAMPLING: usize = 1024;

impl Default for SincInterpolator {
    fn default() -> Self {
        Self::new(48, 9.0)
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn shared_interpolator() -> &'static SincInterpolator {
    static SHARED: OnceLock<SincInterpolator> = OnceLock::new();
    SHARED.get_or_init(SincInterpolator::default)
}

impl SincInterpolator {
    pub fn new(half_width: usize, beta: f64) -> Self {
        assert!(
            half_width > 0,
            "interpolator needs at least one tap per side"
        );
        let norm = bessel_i0(beta);
        let len = half_width * WINDOW_OVERSAMPLING + 2;
        let window = (0..len)
            .map(|i| {
                let r = i as f64 / (half_width * WINDOW_OVERSAMPLING) as f64;
                if r >= 1.0 {
                    0.0
                } else {
                    bessel_i0(beta * (1.0 - r * r).sqrt()) / norm
                }
            })
            .collect();
        Self { half_width, window }
    }

    fn window_at(&self, d: f64) -> f64 {
        let pos = d.abs() * WINDOW_OVERSAMPLING as f64;
        let i = pos as usize;
        if i + 1 >= self.window.len() {
            return 0.0;
        }
        let f = pos - i as f64;
        self.window[i] * (1.0 - f) + self.window[i + 1] * f
    }

    /// Value of the band-limited signal at fractional index `t`.
    /// Samples outside `0..x.len()` are zero.
    pub fn at(&self, x: &[Cf64], t: f64) -> Cf64 {
        let base = t.floor();
        let frac = t - base;
        let base = base as i64;
        if frac == 0.0 {
            return usize::try_from(base)
                .ok()
                .and_then(|i| x.get(i).copied())
                .unwrap_or_default();
        }
        let hw = self.half_width as i64;
        // sin(π(t - m)) = ±sin(π·frac), alternating with m.
        let s = (PI * frac).sin() / PI;
        let lo = (base - hw + 1).max(0);
        let hi = (base + hw).min(x.len() as i64 - 1);
        let mut acc = Cf64::new(0.0, 0.0);
        for m in lo..=hi {
            let d = t - m as f64;
            let sign = if (base - m) % 2 == 0 { 1.0 } else { -1.0 };
            acc += x[m as usize] * (sign * s / d * self.window_at(d));
        }
        acc
    }

    /// Evaluates the signal at `n·step` for `n = 0..len`.
    pub fn resample(&self, x: &[Cf64], step: f64, len: usize) -> Vec<Cf64> {
        (0..len).map(|n| self.at(x, n as f64 * step)).collect()
    }
}
