//! Seeded Monte Carlo campaigns over the (SNR, separation) grid.
//!
//! Every trial draws its own generator from `(seed, trial_index)`, so trials
//! can run in any order or in parallel and the campaign output is still
//! byte-for-byte reproducible.

mod config;
mod stats;
mod trial;

use rayon::prelude::*;

pub use config::{CampaignConfig, Cell, ChannelRanges, SimulationMode, SweepAxis};
pub use stats::{emit_csv, render_csv, render_summary, CampaignStats, CellStats};
pub use trial::{check_precompensation, run_trial, trial_rng, PrecompensationCheck, TrialRecord};

use crate::Result;

/// Runs `cfg.trials` trials of one cell, in trial order.
pub fn run_cell_records(cfg: &CampaignConfig, cell: Cell) -> Result<Vec<TrialRecord>> {
    (0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| run_trial(cfg, cell, i))
        .collect()
}

pub fn run_cell(cfg: &CampaignConfig, cell: Cell) -> Result<CellStats> {
    let records = run_cell_records(cfg, cell)?;
    Ok(CellStats::from_records(
        cell.snr_db,
        cell.separation_hz,
        &records,
        cfg.threshold_fraction * cfg.ofdm.subcarrier_spacing_hz,
    ))
}

/// Runs every cell in order; `on_cell` sees each cell as it completes.
pub fn run_cells(
    cfg: &CampaignConfig,
    cells: &[Cell],
    mut on_cell: impl FnMut(&CellStats),
) -> Result<CampaignStats> {
    cfg.validate()?;
    let mut stats = CampaignStats::default();
    for &cell in cells {
        let s = run_cell(cfg, cell)?;
        on_cell(&s);
        stats.cells.push(s);
    }
    Ok(stats)
}

/// Full `snr_sweep_db × separations_hz` grid.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignStats> {
    run_cells(cfg, &cfg.grid_cells(), |_| {})
}
