//! Joint estimation of oscillator offset and relative speed.
//!
//! Each reference position yields one composite measurement
//! `Δf + v·(f_c + f_p)/c` from the phase of a lag-`D` differential
//! correlation between the received and the known signal. Stacking two or
//! more positions gives an overdetermined linear system in `(Δf, v)` that is
//! solved by least squares.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ofdm::{OfdmConfig, TimeDomainSignal};
use crate::refsig::{Burst, Extractor, ReferenceSignalSpec};
use crate::{Cf64, Error, Result, SPEED_OF_LIGHT};

/// Metrics weaker than this fraction of the correlated energy are treated as
/// "signal absent".
const MIN_METRIC_FRACTION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Differential lag `D` in samples.
    pub lag: usize,
    /// IIR coefficient `γ ∈ [0, 1]`; 1 keeps only the newest estimate.
    pub iir_gamma: f64,
    /// Use the sampling-drift-corrected system matrix.
    pub drift_aware: bool,
    /// `α = f_s / f_c`, only read when `drift_aware` is set.
    pub alpha: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            lag: 32,
            iir_gamma: 0.5,
            drift_aware: false,
            alpha: 7.68e6 / 2e9,
        }
    }
}

impl EstimatorConfig {
    /// Checks the configuration against the number of contiguous samples the
    /// differential metric will run over.
    pub fn validate(&self, samples_per_segment: usize) -> Result<()> {
        if self.lag == 0 || self.lag >= samples_per_segment {
            return Err(Error::config(format!(
                "lag {} must be in 1..{samples_per_segment}",
                self.lag
            )));
        }
        if !(0.0..=1.0).contains(&self.iir_gamma) {
            return Err(Error::config(format!(
                "IIR coefficient {} is outside [0, 1]",
                self.iir_gamma
            )));
        }
        if self.drift_aware && !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::config(
                "drift-aware estimation needs a positive alpha",
            ));
        }
        Ok(())
    }
}

/// `z[n] = x*[n]·y[n]`.
pub fn correlate(y: &[Cf64], x: &[Cf64]) -> Result<Vec<Cf64>> {
    if y.len() != x.len() {
        return Err(Error::input(format!(
            "received ({}) and reference ({}) lengths differ",
            y.len(),
            x.len()
        )));
    }
    Ok(y.iter().zip(x).map(|(y, x)| x.conj() * y).collect())
}

/// `Σ_n z*[n-D]·z[n]` over every `n` with both samples present.
pub fn differential_metric(z: &[Cf64], lag: usize) -> Result<Cf64> {
    if lag == 0 || z.len() <= lag {
        return Err(Error::input(format!(
            "sequence of {} samples is too short for lag {lag}",
            z.len()
        )));
    }
    Ok(z.iter()
        .zip(&z[lag..])
        .map(|(early, late)| early.conj() * late)
        .sum())
}

/// Largest composite offset the lag can resolve without phase wrap,
/// `1/(2·D·T_s)`.
pub fn ambiguity_limit(lag: usize, sample_interval: f64) -> f64 {
    1.0 / (2.0 * lag as f64 * sample_interval)
}

/// Principal phase in `(-π, π]`.
fn principal_phase(v: Cf64) -> f64 {
    let p = v.arg();
    if p <= -PI {
        PI
    } else {
        p
    }
}

/// One position's composite frequency measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionMeasurement {
    /// `f_p`, relative to the carrier.
    pub position_offset_hz: f64,
    /// `Phase(metric) / (2π·D·T_s)`.
    pub composite_estimate_hz: f64,
    /// `Phase(metric)` in `(-π, π]`.
    pub phase_rad: f64,
    pub metric_magnitude: f64,
}

impl PositionMeasurement {
    /// Converts a combined differential metric into a measurement.
    ///
    /// `energy` is the correlated energy `Σ|z|²` the metric was built from;
    /// metrics below `1e-12·energy` are reported as failures.
    pub fn from_metric(
        position_offset_hz: f64,
        metric: Cf64,
        energy: f64,
        lag: usize,
        sample_interval: f64,
    ) -> Result<Self> {
        let magnitude = metric.norm();
        if !(magnitude > 0.0 && magnitude >= MIN_METRIC_FRACTION * energy) || !magnitude.is_finite()
        {
            return Err(Error::estimation(format!(
                "no usable signal at position {position_offset_hz} Hz (metric {magnitude:e}, energy {energy:e})"
            )));
        }
        let phase = principal_phase(metric);
        Ok(Self {
            position_offset_hz,
            composite_estimate_hz: phase / (2.0 * PI * lag as f64 * sample_interval),
            phase_rad: phase,
            metric_magnitude: magnitude,
        })
    }
}

/// Running sum of differential metrics over symbols, antennas and bursts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricAccumulator {
    pub metric: Cf64,
    pub energy: f64,
    pub segments: usize,
}

impl MetricAccumulator {
    /// Adds one contiguous correlation segment.
    pub fn add_segment(&mut self, z: &[Cf64], lag: usize) -> Result<()> {
        self.metric += differential_metric(z, lag)?;
        self.energy += z.iter().map(|v| v.norm_sqr()).sum::<f64>();
        self.segments += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &MetricAccumulator) {
        self.metric += other.metric;
        self.energy += other.energy;
        self.segments += other.segments;
    }

    pub fn measurement(
        &self,
        position_offset_hz: f64,
        lag: usize,
        sample_interval: f64,
    ) -> Result<PositionMeasurement> {
        PositionMeasurement::from_metric(
            position_offset_hz,
            self.metric,
            self.energy,
            lag,
            sample_interval,
        )
    }
}

/// Composite estimate from one or more correlation segments whose metrics
/// are summed before the phase is taken.
pub fn per_position_estimate(
    segments: &[&[Cf64]],
    position_offset_hz: f64,
    cfg: &EstimatorConfig,
    sample_interval: f64,
) -> Result<PositionMeasurement> {
    let mut acc = MetricAccumulator::default();
    for z in segments {
        acc.add_segment(z, cfg.lag)?;
    }
    acc.measurement(position_offset_hz, cfg.lag, sample_interval)
}

/// Solved `(Δf, v)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointEstimate {
    pub freq_offset_hz: f64,
    pub speed_mps: f64,
    pub carrier_freq_hz: f64,
}

impl JointEstimate {
    pub fn new(freq_offset_hz: f64, speed_mps: f64, carrier_freq_hz: f64) -> Self {
        Self {
            freq_offset_hz,
            speed_mps,
            carrier_freq_hz,
        }
    }

    /// Doppler shift at the carrier, `v·f_c/c`.
    pub fn doppler_at_carrier_hz(&self) -> f64 {
        self.speed_mps * self.carrier_freq_hz / SPEED_OF_LIGHT
    }
}

/// `A·e = b` with one row per position.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub rows: Vec<[f64; 2]>,
    pub rhs: Vec<f64>,
}

/// Stacks the measurements into `A·[Δf, v]ᵀ = b`.
///
/// Row `p` is `[1, (f_c + f_p)/c]`. With drift awareness the first column
/// becomes `1 + α·Phase_p/(2πD)`, which accounts for the receiver sampling
/// at `α·(f_c - Δf)` instead of `α·f_c`.
pub fn build_system(
    measurements: &[PositionMeasurement],
    carrier_freq_hz: f64,
    cfg: &EstimatorConfig,
) -> Result<LinearSystem> {
    if measurements.len() < 2 {
        return Err(Error::estimation(format!(
            "two unknowns need at least two positions, got {}",
            measurements.len()
        )));
    }
    for (i, a) in measurements.iter().enumerate() {
        if measurements[i + 1..]
            .iter()
            .any(|b| b.position_offset_hz == a.position_offset_hz)
        {
            return Err(Error::estimation(format!(
                "position {} Hz appears twice; the system is rank deficient",
                a.position_offset_hz
            )));
        }
    }
    let rows = measurements
        .iter()
        .map(|m| {
            let first = if cfg.drift_aware {
                1.0 + cfg.alpha * m.phase_rad / (2.0 * PI * cfg.lag as f64)
            } else {
                1.0
            };
            [
                first,
                (carrier_freq_hz + m.position_offset_hz) / SPEED_OF_LIGHT,
            ]
        })
        .collect();
    let rhs = measurements
        .iter()
        .map(|m| m.composite_estimate_hz)
        .collect();
    Ok(LinearSystem { rows, rhs })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsSolution {
    pub estimate: JointEstimate,
    /// 2-norm condition number of `A`.
    pub condition_number: f64,
}

/// Least squares via the 2×2 normal equations, `e = (AᵀA)⁻¹Aᵀb`.
pub fn solve_ls(system: &LinearSystem, carrier_freq_hz: f64) -> Result<LsSolution> {
    if system.rows.len() != system.rhs.len() || system.rows.len() < 2 {
        return Err(Error::estimation(
            "system needs at least two consistent rows",
        ));
    }
    let (mut g00, mut g01, mut g11, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (row, &b) in system.rows.iter().zip(&system.rhs) {
        g00 += row[0] * row[0];
        g01 += row[0] * row[1];
        g11 += row[1] * row[1];
        r0 += row[0] * b;
        r1 += row[1] * b;
    }
    let det = g00 * g11 - g01 * g01;
    let trace = g00 + g11;
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
    if !(det > 1e-16 * trace * trace) {
        return Err(Error::estimation("system matrix is rank deficient"));
    }
    let freq_offset_hz = (g11 * r0 - g01 * r1) / det;
    let speed_mps = (g00 * r1 - g01 * r0) / det;

    // Eigenvalues of the symmetric Gram matrix.
    let disc = ((g00 - g11).powi(2) + 4.0 * g01 * g01).sqrt();
    let lambda_max = (trace + disc) / 2.0;
    let lambda_min = det / lambda_max;
    Ok(LsSolution {
        estimate: JointEstimate::new(freq_offset_hz, speed_mps, carrier_freq_hz),
        condition_number: (lambda_max / lambda_min).sqrt(),
    })
}

/// First-order IIR smoothing, `(1-γ)·prev + γ·new` per component.
pub fn iir_update(prev: &JointEstimate, new: &JointEstimate, gamma: f64) -> Result<JointEstimate> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::config(format!(
            "IIR coefficient {gamma} is outside [0, 1]"
        )));
    }
    if gamma == 1.0 {
        return Ok(*new);
    }
    if gamma == 0.0 {
        return Ok(*prev);
    }
    Ok(JointEstimate {
        freq_offset_hz: (1.0 - gamma) * prev.freq_offset_hz + gamma * new.freq_offset_hz,
        speed_mps: (1.0 - gamma) * prev.speed_mps + gamma * new.speed_mps,
        carrier_freq_hz: new.carrier_freq_hz,
    })
}

/// What the receiver has for one reference position during one burst.
#[derive(Debug, Clone, Copy)]
pub struct PositionObservation<'a> {
    /// Physical offset `f_p` of the position from the carrier.
    pub position_offset_hz: f64,
    /// Where the signal sits on the grid it was received on.
    pub grid_spec: &'a ReferenceSignalSpec,
    /// The transmitted burst, known to the receiver.
    pub reference: &'a Burst,
    /// One received signal per antenna, aligned with `reference`.
    pub received: &'a [TimeDomainSignal],
}

/// Extracts, correlates and accumulates one burst of one position across
/// all antennas. Pairs that straddle a symbol boundary are not used.
pub fn accumulate_burst(
    acc: &mut MetricAccumulator,
    obs: &PositionObservation<'_>,
    extractor: &Extractor,
    ofdm: &OfdmConfig,
    lag: usize,
) -> Result<()> {
    let n = ofdm.dft_size;
    let symbols = obs.reference.symbols.len();
    let mut body = vec![Cf64::new(0.0, 0.0); n];
    let mut z = vec![Cf64::new(0.0, 0.0); n];
    for y in obs.received {
        if y.len() < symbols * ofdm.symbol_len() {
            return Err(Error::input(format!(
                "received burst has {} samples, expected {}",
                y.len(),
                symbols * ofdm.symbol_len()
            )));
        }
        for s in 0..symbols {
            let start = s * ofdm.symbol_len() + ofdm.cp_len;
            body.copy_from_slice(&y.samples[start..start + n]);
            extractor.filter_body(&mut body);
            let x = obs.reference.symbol_body(s, ofdm);
            for ((zv, yv), xv) in z.iter_mut().zip(&body).zip(x) {
                *zv = xv.conj() * yv;
            }
            acc.add_segment(&z, lag)?;
        }
    }
    Ok(())
}

/// Single-burst end-to-end estimate: per position extract, correlate, sum the
/// differential metrics over antennas and symbols, take one phase, then
/// solve the stacked system.
pub fn estimate(
    observations: &[PositionObservation<'_>],
    ofdm: &OfdmConfig,
    carrier_freq_hz: f64,
    cfg: &EstimatorConfig,
) -> Result<LsSolution> {
    cfg.validate(ofdm.dft_size)?;
    let measurements = observations
        .iter()
        .map(|obs| {
            let extractor = Extractor::new(obs.grid_spec, ofdm)?;
            let mut acc = MetricAccumulator::default();
            accumulate_burst(&mut acc, obs, &extractor, ofdm, cfg.lag)?;
            acc.measurement(obs.position_offset_hz, cfg.lag, ofdm.sample_interval())
        })
        .collect::<Result<Vec<_>>>()?;
    solve_ls(
        &build_system(&measurements, carrier_freq_hz, cfg)?,
        carrier_freq_hz,
    )
}
