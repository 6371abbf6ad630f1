use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{CampaignConfig, Cell, SimulationMode};
use crate::channel::{
    add_noise, add_noise_with_variance, apply_channel, apply_sampling_drift,
    apply_wideband_channel, ChannelConfig, ChannelRealization,
};
use crate::estimator::{
    accumulate_burst, build_system, iir_update, solve_ls, JointEstimate, MetricAccumulator,
    PositionObservation,
};
use crate::ofdm::{Modem, OfdmConfig, TimeDomainSignal};
use crate::refsig::{generate_with, Extractor, PositionSet, ReferenceSignalSpec};
use crate::{mix_seed, Cf64, Result, SPEED_OF_LIGHT};

/// Outcome of one Monte Carlo trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub snr_db: f64,
    pub separation_hz: f64,
    pub true_freq_offset_hz: f64,
    pub true_speed_mps: f64,
    /// `None` when estimation failed.
    pub estimate: Option<JointEstimate>,
    /// `(v̂ - v)·f_c/c`; `None` on failure.
    pub doppler_error_hz: Option<f64>,
    pub failure: Option<String>,
}

impl TrialRecord {
    pub fn is_failure(&self) -> bool {
        self.estimate.is_none()
    }
}

/// Pass/fail of frequency pre-compensation with the estimated Doppler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecompensationCheck {
    pub pass: bool,
    pub residual_hz: f64,
}

/// The uplink pre-compensated with the estimated Doppler is off by the
/// Doppler error; it passes when that residual is at most
/// `threshold_fraction` of the subcarrier spacing. Failed trials never pass.
pub fn check_precompensation(record: &TrialRecord, cfg: &CampaignConfig) -> PrecompensationCheck {
    match record.doppler_error_hz {
        Some(err) => {
            let residual = err.abs();
            PrecompensationCheck {
                pass: residual <= cfg.threshold_fraction * cfg.ofdm.subcarrier_spacing_hz,
                residual_hz: residual,
            }
        }
        None => PrecompensationCheck {
            pass: false,
            residual_hz: f64::INFINITY,
        },
    }
}

/// Generator for trial `trial_index`; independent of the cell so every cell
/// sees the same draws (common random numbers across the sweep).
pub fn trial_rng(seed: u64, trial_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, trial_index))
}

fn draw_uniform<R: Rng>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        // Still consume a draw so degenerate ranges keep later draws aligned.
        let _: f64 = rng.random();
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

/// Runs one trial of `cell`. Deterministic in `(cfg.seed, trial_index)`.
pub fn run_trial(cfg: &CampaignConfig, cell: Cell, trial_index: u64) -> Result<TrialRecord> {
    let mut rng = trial_rng(cfg.seed, trial_index);
    let fc = cfg.ofdm.carrier_freq_hz;
    let freq_offset_hz = draw_uniform(&mut rng, cfg.channel.offset_ppm) * 1e-6 * fc;
    let speed_mps = CampaignConfig::speed_from_ppm(draw_uniform(&mut rng, cfg.channel.doppler_ppm));

    let positions = PositionSet::symmetric(
        fc,
        cell.separation_hz,
        cfg.ofdm.subcarrier_spacing_hz,
        &cfg.reference,
    )?;
    let snr_db = if cfg.channel.noiseless {
        f64::INFINITY
    } else {
        cell.snr_db
    };
    let channel = ChannelConfig {
        relative_speed_mps: speed_mps,
        freq_offset_hz,
        taps: cfg.channel.taps.clone(),
        snr_db,
        num_rx: cfg.channel.num_rx,
        sampling_ratio: cfg.sampling_ratio(),
        model_drift: cfg.channel.model_drift,
    };

    let outcome = match cfg.mode {
        SimulationMode::Narrowband => estimate_narrowband(cfg, &positions, &channel, &mut rng),
        SimulationMode::Wideband => estimate_wideband(cfg, &positions, &channel, &mut rng),
    };
    let mut record = TrialRecord {
        trial_index,
        snr_db: cell.snr_db,
        separation_hz: cell.separation_hz,
        true_freq_offset_hz: freq_offset_hz,
        true_speed_mps: speed_mps,
        estimate: None,
        doppler_error_hz: None,
        failure: None,
    };
    match outcome {
        Ok(est) => {
            record.doppler_error_hz = Some((est.speed_mps - speed_mps) * fc / SPEED_OF_LIGHT);
            record.estimate = Some(est);
        }
        Err(e) if e.is_config() => return Err(e),
        Err(e) => record.failure = Some(e.to_string()),
    }
    Ok(record)
}

/// Channel impairments after the multipath/Doppler stage: optional clock
/// drift, then noise.
fn impair<R: Rng>(
    received: Vec<TimeDomainSignal>,
    channel: &ChannelConfig,
    noise_variance: impl Fn(&TimeDomainSignal) -> Option<f64>,
    rng: &mut R,
) -> Result<Vec<TimeDomainSignal>> {
    received
        .into_iter()
        .map(|y| {
            let y = if channel.model_drift {
                apply_sampling_drift(&y, channel.sampling_ratio, channel.freq_offset_hz)?
            } else {
                y
            };
            Ok(match noise_variance(&y) {
                Some(var) => add_noise_with_variance(&y, var, rng),
                None => add_noise(&y, channel.snr_db, rng),
            })
        })
        .collect()
}

/// Smooths successive estimates; the first estimate initializes the filter.
struct Tracker {
    gamma: f64,
    state: Option<JointEstimate>,
}

impl Tracker {
    fn push(&mut self, est: JointEstimate) -> Result<()> {
        self.state = Some(match self.state {
            Some(prev) => iir_update(&prev, &est, self.gamma)?,
            None => est,
        });
        Ok(())
    }
}

fn solve(
    accs: &[MetricAccumulator],
    positions: &PositionSet,
    cfg: &CampaignConfig,
    grid: &OfdmConfig,
) -> Result<JointEstimate> {
    let est_cfg = cfg.estimator_config();
    let measurements = accs
        .iter()
        .zip(&positions.positions)
        .map(|(acc, spec)| {
            acc.measurement(spec.position_offset_hz, est_cfg.lag, grid.sample_interval())
        })
        .collect::<Result<Vec<_>>>()?;
    let system = build_system(&measurements, positions.carrier_freq_hz, &est_cfg)?;
    Ok(solve_ls(&system, positions.carrier_freq_hz)?.estimate)
}

/// Each position on its own grid retuned to `f_c + f_p`, so the channel
/// applies that position's Doppler `v·(f_c + f_p)/c`.
fn estimate_narrowband(
    cfg: &CampaignConfig,
    positions: &PositionSet,
    channel: &ChannelConfig,
    rng: &mut ChaCha8Rng,
) -> Result<JointEstimate> {
    let grid = cfg.ofdm;
    let modem = Modem::new(grid)?;
    let lag = cfg.estimator_config().lag;
    // Widely separated positions fade independently.
    let realizations = positions
        .positions
        .iter()
        .map(|_| ChannelRealization::draw(channel, rng))
        .collect::<Result<Vec<_>>>()?;
    let local: Vec<(ReferenceSignalSpec, OfdmConfig, Extractor)> = positions
        .positions
        .iter()
        .map(|spec| {
            let centered = spec.at_baseband_center();
            let extractor = Extractor::new(&centered, &grid)?;
            Ok((
                centered,
                grid.retuned(positions.carrier_freq_hz + spec.position_offset_hz),
                extractor,
            ))
        })
        .collect::<Result<_>>()?;

    let mut tracker = Tracker {
        gamma: cfg.estimator.iir_gamma,
        state: None,
    };
    for e in 0..cfg.estimates_per_trial {
        let mut accs = vec![MetricAccumulator::default(); positions.len()];
        for b in 0..cfg.bursts_per_estimate {
            let burst_index = (e * cfg.bursts_per_estimate + b) as u64;
            for (p, (centered, tuned, extractor)) in local.iter().enumerate() {
                let spec = centered.for_burst(burst_index);
                let burst = generate_with(&spec, &modem)?;
                let rx = apply_channel(&burst.signal, &realizations[p], tuned);
                let rx = impair(rx, channel, |_| None, rng)?;
                let obs = PositionObservation {
                    position_offset_hz: positions.positions[p].position_offset_hz,
                    grid_spec: &spec,
                    reference: &burst,
                    received: &rx,
                };
                accumulate_burst(&mut accs[p], &obs, extractor, &grid, lag)?;
            }
        }
        tracker.push(solve(&accs, positions, cfg, &grid)?)?;
    }
    Ok(tracker.state.expect("at least one estimate per trial"))
}

/// All positions share one wide grid centered at `f_c`; the channel applies
/// frequency-proportional Doppler by time compression.
fn estimate_wideband(
    cfg: &CampaignConfig,
    positions: &PositionSet,
    channel: &ChannelConfig,
    rng: &mut ChaCha8Rng,
) -> Result<JointEstimate> {
    let grid = cfg.grid();
    let modem = Modem::new(grid)?;
    let lag = cfg.estimator_config().lag;
    let realization = ChannelRealization::draw(channel, rng)?;
    let extractors = positions
        .positions
        .iter()
        .map(|spec| Extractor::new(spec, &grid))
        .collect::<Result<Vec<_>>>()?;
    let occupied: usize = positions
        .positions
        .iter()
        .map(|s| s.bandwidth_subcarriers)
        .sum();
    // Noise density chosen so the SNR inside the occupied subcarriers matches
    // the narrowband definition.
    let in_band = grid.dft_size as f64 / occupied as f64;
    let snr_db = channel.snr_db;

    let mut tracker = Tracker {
        gamma: cfg.estimator.iir_gamma,
        state: None,
    };
    for e in 0..cfg.estimates_per_trial {
        let mut accs = vec![MetricAccumulator::default(); positions.len()];
        for b in 0..cfg.bursts_per_estimate {
            let burst_index = (e * cfg.bursts_per_estimate + b) as u64;
            let specs: Vec<ReferenceSignalSpec> = positions
                .positions
                .iter()
                .map(|s| s.for_burst(burst_index))
                .collect();
            let bursts = specs
                .iter()
                .map(|s| generate_with(s, &modem))
                .collect::<Result<Vec<_>>>()?;
            let mut tx = vec![Cf64::new(0.0, 0.0); bursts[0].signal.len()];
            for burst in &bursts {
                for (t, v) in tx.iter_mut().zip(&burst.signal.samples) {
                    *t += v;
                }
            }
            let tx = TimeDomainSignal::new(tx, grid.sample_rate());
            let rx = apply_wideband_channel(&tx, &realization, &grid);
            let rx = impair(
                rx,
                channel,
                |y| {
                    (snr_db != f64::INFINITY)
                        .then(|| y.mean_power() * in_band / 10f64.powf(snr_db / 10.0))
                },
                rng,
            )?;
            for (p, (spec, burst)) in specs.iter().zip(&bursts).enumerate() {
                let obs = PositionObservation {
                    position_offset_hz: spec.position_offset_hz,
                    grid_spec: spec,
                    reference: burst,
                    received: &rx,
                };
                accumulate_burst(&mut accs[p], &obs, &extractors[p], &grid, lag)?;
            }
        }
        tracker.push(solve(&accs, positions, cfg, &grid)?)?;
    }
    Ok(tracker.state.expect("at least one estimate per trial"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::single_tap;

    fn quick() -> CampaignConfig {
        CampaignConfig {
            bursts_per_estimate: 2,
            trials: 4,
            ..CampaignConfig::default()
        }
    }

    const CELL: Cell = Cell {
        snr_db: -3.0,
        separation_hz: 864e6,
    };

    #[test]
    fn same_index_same_record() {
        let cfg = quick();
        assert_eq!(
            run_trial(&cfg, CELL, 3).unwrap(),
            run_trial(&cfg, CELL, 3).unwrap()
        );
        assert_ne!(
            run_trial(&cfg, CELL, 3).unwrap(),
            run_trial(&cfg, CELL, 4).unwrap()
        );
    }

    #[test]
    fn noiseless_trial_is_nearly_exact() {
        let mut cfg = quick();
        cfg.channel.noiseless = true;
        cfg.channel.taps = single_tap();
        for i in 0..5 {
            let r = run_trial(&cfg, CELL, i).unwrap();
            assert!(r.doppler_error_hz.unwrap().abs() < 0.1, "{r:?}");
        }
    }

    #[test]
    fn degenerate_doppler_range_fixes_speed() {
        let mut cfg = quick();
        cfg.channel.doppler_ppm = [24.5, 24.5];
        for i in 0..3 {
            let r = run_trial(&cfg, CELL, i).unwrap();
            assert_eq!(r.true_speed_mps, 24.5e-6 * SPEED_OF_LIGHT);
        }
    }

    #[test]
    fn precompensation_threshold() {
        let cfg = CampaignConfig::default();
        let mut r = TrialRecord {
            trial_index: 0,
            snr_db: 0.0,
            separation_hz: 1.0,
            true_freq_offset_hz: 0.0,
            true_speed_mps: 0.0,
            estimate: Some(JointEstimate::new(0.0, 0.0, 2e9)),
            doppler_error_hz: Some(1400.0),
            failure: None,
        };
        assert!(check_precompensation(&r, &cfg).pass);
        r.doppler_error_hz = Some(0.0);
        assert!(check_precompensation(&r, &cfg).pass);
        r.doppler_error_hz = Some(-1600.0);
        let c = check_precompensation(&r, &cfg);
        assert!(!c.pass);
        assert_eq!(c.residual_hz, 1600.0);
        r.doppler_error_hz = Some(1500.0);
        assert!(check_precompensation(&r, &cfg).pass);
        r.doppler_error_hz = None;
        r.estimate = None;
        assert!(!check_precompensation(&r, &cfg).pass);
    }
}
