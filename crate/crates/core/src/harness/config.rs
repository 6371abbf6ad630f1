use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{default_taps, normalized_powers, TapSpec};
use crate::estimator::{ambiguity_limit, EstimatorConfig};
use crate::ofdm::OfdmConfig;
use crate::refsig::ReferenceSignalSpec;
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Per-trial draws of motion and oscillator error, plus the fixed channel shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelRanges {
    /// Doppler at the carrier, in ppm of `f_c`; `v` is drawn uniformly so
    /// that `v/c` lies in this range.
    pub doppler_ppm: [f64; 2],
    /// Oscillator offset in ppm of `f_c`, drawn uniformly.
    pub offset_ppm: [f64; 2],
    pub taps: Vec<TapSpec>,
    pub num_rx: usize,
    /// Resample the received signal at the drifted clock `α·(f_c - Δf)`.
    pub model_drift: bool,
    /// Skip noise entirely, regardless of the SNR axis.
    pub noiseless: bool,
}

impl Default for ChannelRanges {
    fn default() -> Self {
        Self {
            doppler_ppm: [-24.5, 24.5],
            offset_ppm: [-10.5, 10.5],
            taps: default_taps(),
            num_rx: 2,
            model_drift: false,
            noiseless: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SimulationMode {
    /// Each position on its own narrowband grid retuned to `f_c + f_p`.
    #[default]
    Narrowband,
    /// All positions on one wide grid centered at `f_c`.
    Wideband,
}

/// Everything a Monte Carlo campaign needs. Every field has a default, so
/// `{}` is a complete configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub ofdm: OfdmConfig,
    pub channel: ChannelRanges,
    /// Template for every position; `position_offset_hz` is ignored and
    /// per-position seeds are derived from `sequence_seed`.
    pub reference: ReferenceSignalSpec,
    /// Bursts whose differential metrics are summed into one estimate.
    pub bursts_per_estimate: usize,
    /// Estimates per trial, smoothed with the estimator's IIR coefficient.
    pub estimates_per_trial: usize,
    pub separations_hz: Vec<f64>,
    pub snr_sweep_db: Vec<f64>,
    /// SNR used when sweeping separation.
    pub fixed_snr_db: f64,
    /// Separation used when sweeping SNR.
    pub fixed_separation_hz: f64,
    pub trials: usize,
    pub seed: u64,
    /// `alpha` is overridden with `f_s / f_c` of the configured grid.
    pub estimator: EstimatorConfig,
    pub mode: SimulationMode,
    /// Grid size used in wideband mode; cyclic prefix and lag scale with it.
    pub wideband_dft_size: usize,
    /// Pre-compensation passes when the Doppler error is within this
    /// fraction of the subcarrier spacing.
    pub threshold_fraction: f64,
    /// Levels of the empirical |error| quantiles written to CSV.
    pub quantiles: Vec<f64>,
    pub output_path: Option<PathBuf>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            ofdm: OfdmConfig::default(),
            channel: ChannelRanges::default(),
            reference: ReferenceSignalSpec::default(),
            bursts_per_estimate: 128,
            estimates_per_trial: 1,
            separations_hz: vec![288e6, 576e6, 864e6, 1152e6, 1440e6, 1728e6, 2016e6],
            snr_sweep_db: vec![-3.0, 1.0, 5.0, 9.0, 13.0],
            fixed_snr_db: -3.0,
            fixed_separation_hz: 288e6,
            trials: 2000,
            seed: 0x4e54_4e5f_4450_4c52,
            estimator: EstimatorConfig::default(),
            mode: SimulationMode::Narrowband,
            wideband_dft_size: 4096,
            threshold_fraction: 0.05,
            quantiles: (1..=20).map(|i| i as f64 * 0.05).collect(),
            output_path: None,
        }
    }
}

/// One point of the (SNR, separation) grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub snr_db: f64,
    pub separation_hz: f64,
}

/// Which axis `sweep` walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Snr,
    Separation,
}

impl CampaignConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// `α = f_s / f_c`.
    pub fn sampling_ratio(&self) -> f64 {
        self.ofdm.sample_rate() / self.ofdm.carrier_freq_hz
    }

    /// Estimator settings with `alpha` tied to the grid.
    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            alpha: self.sampling_ratio(),
            lag: self.lag(),
            ..self.estimator
        }
    }

    /// Grid the receiver runs on, depending on the mode.
    pub fn grid(&self) -> OfdmConfig {
        match self.mode {
            SimulationMode::Narrowband => self.ofdm,
            SimulationMode::Wideband => OfdmConfig {
                dft_size: self.wideband_dft_size,
                cp_len: self.ofdm.cp_len * self.wideband_factor(),
                ..self.ofdm
            },
        }
    }

    fn wideband_factor(&self) -> usize {
        (self.wideband_dft_size / self.ofdm.dft_size).max(1)
    }

    /// Lag in samples of the active grid; the wideband lag keeps `D·T_s` fixed.
    pub fn lag(&self) -> usize {
        match self.mode {
            SimulationMode::Narrowband => self.estimator.lag,
            SimulationMode::Wideband => self.estimator.lag * self.wideband_factor(),
        }
    }

    /// Cells for the full `snr × separation` grid, SNR-major.
    pub fn grid_cells(&self) -> Vec<Cell> {
        self.snr_sweep_db
            .iter()
            .flat_map(|&snr_db| {
                self.separations_hz.iter().map(move |&separation_hz| Cell {
                    snr_db,
                    separation_hz,
                })
            })
            .collect()
    }

    pub fn sweep_cells(&self, axis: SweepAxis) -> Vec<Cell> {
        match axis {
            SweepAxis::Snr => self
                .snr_sweep_db
                .iter()
                .map(|&snr_db| Cell {
                    snr_db,
                    separation_hz: self.fixed_separation_hz,
                })
                .collect(),
            SweepAxis::Separation => self
                .separations_hz
                .iter()
                .map(|&separation_hz| Cell {
                    snr_db: self.fixed_snr_db,
                    separation_hz,
                })
                .collect(),
        }
    }

    /// Largest `|Δf + v·(f_c + f_p)/c|` the configured ranges can produce.
    pub fn worst_case_composite_hz(&self) -> f64 {
        let fc = self.ofdm.carrier_freq_hz;
        let max_abs = |r: [f64; 2]| r[0].abs().max(r[1].abs()) * 1e-6;
        let widest = self
            .separations_hz
            .iter()
            .chain(std::iter::once(&self.fixed_separation_hz))
            .fold(0.0f64, |m, s| m.max(*s));
        max_abs(self.channel.offset_ppm) * fc
            + max_abs(self.channel.doppler_ppm) * (fc + widest / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.ofdm.validate()?;
        let grid = self.grid();
        grid.validate()?;
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.separations_hz.is_empty() || self.snr_sweep_db.is_empty() {
            return Err(Error::config("sweep lists must not be empty"));
        }
        if self.bursts_per_estimate == 0 || self.estimates_per_trial == 0 {
            return Err(Error::config(
                "need at least one burst and one estimate per trial",
            ));
        }
        for (name, r) in [
            ("doppler_ppm", self.channel.doppler_ppm),
            ("offset_ppm", self.channel.offset_ppm),
        ] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(Error::config(format!("{name} range {r:?} is not ordered")));
            }
        }
        normalized_powers(&self.channel.taps)?;
        if self.channel.num_rx == 0 {
            return Err(Error::config("need at least one receive antenna"));
        }
        let max_delay = self
            .channel
            .taps
            .iter()
            .map(|t| t.delay_samples)
            .max()
            .unwrap_or(0);
        if max_delay > self.ofdm.cp_len {
            return Err(Error::config(format!(
                "tap delay {max_delay} exceeds the cyclic prefix {}",
                self.ofdm.cp_len
            )));
        }
        if self.snr_sweep_db.iter().any(|s| s.is_nan()) || self.fixed_snr_db.is_nan() {
            return Err(Error::config("SNR values must be numbers"));
        }
        if self
            .separations_hz
            .iter()
            .chain(std::iter::once(&self.fixed_separation_hz))
            .any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(Error::config("separations must be positive"));
        }
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction.is_finite()) {
            return Err(Error::config("threshold fraction must be positive"));
        }
        if self.quantiles.iter().any(|q| !(*q > 0.0 && *q <= 1.0)) {
            return Err(Error::config("quantile levels must lie in (0, 1]"));
        }
        if self.mode == SimulationMode::Wideband
            && (!self.wideband_dft_size.is_power_of_two()
                || self.wideband_dft_size < self.ofdm.dft_size)
        {
            return Err(Error::config(
                "wideband DFT size must be a power of two no smaller than the narrowband one",
            ));
        }
        if self.mode == SimulationMode::Wideband {
            for &sep in self
                .separations_hz
                .iter()
                .chain(std::iter::once(&self.fixed_separation_hz))
            {
                let set = crate::refsig::PositionSet::symmetric(
                    self.ofdm.carrier_freq_hz,
                    sep,
                    self.ofdm.subcarrier_spacing_hz,
                    &self.reference,
                )?;
                for spec in &set.positions {
                    spec.validate(&grid)?;
                }
            }
        }
        let est = self.estimator_config();
        est.validate(grid.dft_size)?;
        let centered = self.reference.at_baseband_center();
        centered.validate(&self.ofdm)?;
        let limit = ambiguity_limit(est.lag, grid.sample_interval());
        let worst = self.worst_case_composite_hz();
        if worst >= limit {
            return Err(Error::config(format!(
                "worst-case composite offset {worst:.0} Hz exceeds the lag-{} ambiguity limit {limit:.0} Hz",
                est.lag
            )));
        }
        Ok(())
    }

    /// True relative speed for a Doppler of `ppm` at the carrier.
    pub(crate) fn speed_from_ppm(ppm: f64) -> f64 {
        ppm * 1e-6 * SPEED_OF_LIGHT
    }
}
