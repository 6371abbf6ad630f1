use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use super::trial::TrialRecord;
use crate::{Error, Result};

/// Aggregated Doppler-error statistics of one (SNR, separation) cell.
///
/// Failed trials count as infinite error: they sit at the top of the
/// empirical CDF and never fall within the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub snr_db: f64,
    pub separation_hz: f64,
    pub trials: usize,
    pub failures: usize,
    /// Signed Doppler errors of successful trials, in trial order.
    pub signed_errors_hz: Vec<f64>,
    /// `|error|` of successful trials, ascending.
    sorted_abs_hz: Vec<f64>,
    pub max_abs_error_hz: f64,
    pub mean_abs_error_hz: f64,
    pub threshold_hz: f64,
    pub within_threshold_fraction: f64,
}

impl CellStats {
    pub fn from_records(
        snr_db: f64,
        separation_hz: f64,
        records: &[TrialRecord],
        threshold_hz: f64,
    ) -> Self {
        let signed: Vec<f64> = records.iter().filter_map(|r| r.doppler_error_hz).collect();
        let mut sorted: Vec<f64> = signed.iter().map(|e| e.abs()).collect();
        sorted.sort_by(f64::total_cmp);
        let trials = records.len();
        let failures = trials - signed.len();
        let max = sorted.last().copied().unwrap_or(0.0);
        let mean = if sorted.is_empty() {
            0.0
        } else {
            sorted.iter().sum::<f64>() / sorted.len() as f64
        };
        let mut stats = Self {
            snr_db,
            separation_hz,
            trials,
            failures,
            signed_errors_hz: signed,
            sorted_abs_hz: sorted,
            max_abs_error_hz: max,
            mean_abs_error_hz: mean,
            threshold_hz,
            within_threshold_fraction: 0.0,
        };
        stats.within_threshold_fraction = stats.cdf(threshold_hz);
        stats
    }

    /// Fraction of all trials with `|error| ≤ x`.
    pub fn cdf(&self, x: f64) -> f64 {
        if self.trials == 0 {
            return 0.0;
        }
        let count = self.sorted_abs_hz.partition_point(|&e| e <= x);
        count as f64 / self.trials as f64
    }

    /// Smallest `|error|` whose CDF reaches `q`; infinite when that level is
    /// only reached by failed trials.
    pub fn quantile(&self, q: f64) -> f64 {
        if self.trials == 0 {
            return f64::NAN;
        }
        let rank = ((q * self.trials as f64).ceil() as usize).clamp(1, self.trials);
        self.sorted_abs_hz
            .get(rank - 1)
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    pub fn sorted_abs_errors_hz(&self) -> &[f64] {
        &self.sorted_abs_hz
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CampaignStats {
    pub cells: Vec<CellStats>,
}

impl CampaignStats {
    pub fn cell(&self, snr_db: f64, separation_hz: f64) -> Option<&CellStats> {
        self.cells
            .iter()
            .find(|c| c.snr_db == snr_db && c.separation_hz == separation_hz)
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.6}")
    }
}

/// Renders the CSV document: quantile rows, a blank line, then one summary
/// row per cell. Row order follows the cell order.
pub fn render_csv(stats: &CampaignStats, quantiles: &[f64]) -> String {
    let mut out = String::from("snr_db,separation_hz,quantile,abs_error_hz\n");
    for cell in &stats.cells {
        for &q in quantiles {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                cell.snr_db,
                cell.separation_hz,
                q,
                fmt_num(cell.quantile(q))
            );
        }
    }
    out.push('\n');
    out.push_str(
        "snr_db,separation_hz,trials,failures,max_abs_error_hz,mean_abs_error_hz,threshold_hz,within_threshold_fraction\n",
    );
    for cell in &stats.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            cell.snr_db,
            cell.separation_hz,
            cell.trials,
            cell.failures,
            fmt_num(cell.max_abs_error_hz),
            fmt_num(cell.mean_abs_error_hz),
            fmt_num(cell.threshold_hz),
            fmt_num(cell.within_threshold_fraction)
        );
    }
    out
}

pub fn emit_csv(stats: &CampaignStats, quantiles: &[f64], path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(render_csv(stats, quantiles).as_bytes())
        .map_err(io_err)?;
    file.flush().map_err(io_err)
}

/// Plain-text table for the terminal.
pub fn render_summary(stats: &CampaignStats) -> String {
    let mut out = format!(
        "{:>8} {:>14} {:>7} {:>6} {:>12} {:>12} {:>8}\n",
        "snr_db", "separation_mhz", "trials", "fail", "max_err_hz", "mean_err_hz", "within"
    );
    for c in &stats.cells {
        let _ = writeln!(
            out,
            "{:>8.1} {:>14.1} {:>7} {:>6} {:>12.1} {:>12.1} {:>7.2}%",
            c.snr_db,
            c.separation_hz / 1e6,
            c.trials,
            c.failures,
            c.max_abs_error_hz,
            c.mean_abs_error_hz,
            100.0 * c.within_threshold_fraction
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::JointEstimate;

    fn record(err: Option<f64>) -> TrialRecord {
        TrialRecord {
            trial_index: 0,
            snr_db: 0.0,
            separation_hz: 1.0,
            true_freq_offset_hz: 0.0,
            true_speed_mps: 0.0,
            estimate: err.map(|_| JointEstimate::new(0.0, 0.0, 2e9)),
            doppler_error_hz: err,
            failure: err.is_none().then(|| "x".to_string()),
        }
    }

    #[test]
    fn cdf_and_fraction_agree() {
        let recs: Vec<_> = [Some(-100.0), Some(2000.0), None, Some(1500.0), Some(10.0)]
            .into_iter()
            .map(record)
            .collect();
        let s = CellStats::from_records(-3.0, 864e6, &recs, 1500.0);
        assert_eq!(s.trials, 5);
        assert_eq!(s.failures, 1);
        assert_eq!(s.within_threshold_fraction, 0.6);
        assert_eq!(s.cdf(1500.0), s.within_threshold_fraction);
        assert_eq!(s.max_abs_error_hz, 2000.0);
        assert!((s.mean_abs_error_hz - 902.5).abs() < 1e-12);
        assert!(s.max_abs_error_hz >= s.mean_abs_error_hz);
        assert_eq!(s.quantile(0.2), 10.0);
        assert_eq!(s.quantile(0.8), 2000.0);
        assert_eq!(s.quantile(1.0), f64::INFINITY);
        assert_eq!(s.cdf(f64::MAX), 0.8);
    }

    #[test]
    fn empty_stats_are_header_only() {
        let csv = render_csv(&CampaignStats::default(), &[0.5]);
        let lines: Vec<_> = csv.lines().filter(|l| !l.is_empty()).collect();
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|l| l.starts_with("snr_db,separation_hz,")));
    }

    #[test]
    fn one_cell_three_quantiles() {
        let recs: Vec<_> = [1.0, 2.0, 3.0]
            .into_iter()
            .map(|e| record(Some(e)))
            .collect();
        let stats = CampaignStats {
            cells: vec![CellStats::from_records(5.0, 288e6, &recs, 1500.0)],
        };
        let csv = render_csv(&stats, &[0.25, 0.5, 1.0]);
        let (data, summary) = csv.split_once("\n\n").unwrap();
        let data: Vec<_> = data.lines().collect();
        assert_eq!(data.len(), 4);
        assert_eq!(data[1], "5,288000000,0.25,1.000000");
        assert_eq!(data[3], "5,288000000,1,3.000000");
        let summary: Vec<_> = summary.lines().collect();
        assert_eq!(summary.len(), 2);
        assert_eq!(
            summary[1],
            "5,288000000,3,0,3.000000,2.000000,1500.000000,1.000000"
        );
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = emit_csv(
            &CampaignStats::default(),
            &[0.5],
            Path::new("/nonexistent-dir/out.csv"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
