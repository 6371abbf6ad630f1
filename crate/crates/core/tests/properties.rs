use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use ntn_doppler::estimator::{
    ambiguity_limit, build_system, differential_metric, iir_update, solve_ls, EstimatorConfig,
    JointEstimate, LinearSystem, PositionMeasurement,
};
use ntn_doppler::ofdm::{ici_profile, FrequencyDomainSymbols, Modem, OfdmConfig, TimeDomainSignal};
use ntn_doppler::refsig::{generate, Extractor, ReferenceSignalSpec};
use ntn_doppler::{Cf64, SPEED_OF_LIGHT};
use proptest::prelude::*;

fn grid(n: usize) -> OfdmConfig {
    OfdmConfig {
        dft_size: n,
        cp_len: n / 8,
        ..OfdmConfig::default()
    }
}

fn complex() -> impl Strategy<Value = Cf64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| Cf64::new(re, im))
}

fn symbols(n: usize) -> impl Strategy<Value = Vec<Cf64>> {
    prop::collection::vec(complex(), n)
}

fn sized_symbols() -> impl Strategy<Value = (usize, Vec<Cf64>)> {
    prop::sample::select(vec![8usize, 16, 64, 128, 512]).prop_flat_map(|n| (Just(n), symbols(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn demodulate_inverts_modulate((n, values) in sized_symbols()) {
        let cfg = grid(n);
        let modem = Modem::new(cfg).unwrap();
        let x = FrequencyDomainSymbols::new(values, &cfg).unwrap();
        let back = modem.demodulate(&modem.modulate(&x).unwrap()).unwrap();
        for (a, b) in x.values().iter().zip(back.values()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn modulation_preserves_energy_up_to_n((n, values) in sized_symbols()) {
        let cfg = grid(n);
        let x = FrequencyDomainSymbols::new(values, &cfg).unwrap();
        let tx = Modem::new(cfg).unwrap().modulate(&x).unwrap();
        let body: f64 = tx.samples[cfg.cp_len..].iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((body * n as f64 - x.energy()).abs() <= 1e-9 * x.energy().max(1.0));
        // The prefix is the tail of the body.
        prop_assert_eq!(&tx.samples[..cfg.cp_len], &tx.samples[n..]);
    }

    #[test]
    fn ici_entries_match_direct_sum(eps in -6.0..6.0f64, k in 0usize..16, l in 0usize..16) {
        let cfg = grid(16);
        let m = ici_profile(&cfg, eps * cfg.subcarrier_spacing_hz).unwrap();
        let direct: Cf64 = (0..16)
            .map(|n| Cf64::from_polar(1.0, 2.0 * PI * (l as f64 - k as f64 + eps) * n as f64 / 16.0))
            .sum::<Cf64>()
            / 16.0;
        prop_assert!((m.get(k, l) - direct).norm() < 1e-10);
    }

    #[test]
    fn extraction_is_linear(
        a in complex(),
        b in complex(),
        y1 in symbols(2 * 288),
        y2 in symbols(2 * 288),
        center in -4i64..=4,
    ) {
        let cfg = OfdmConfig::default();
        let spec = ReferenceSignalSpec {
            bandwidth_subcarriers: 96,
            position_offset_hz: center as f64 * 10.0 * cfg.subcarrier_spacing_hz,
            ..ReferenceSignalSpec::default()
        };
        let ex = Extractor::new(&spec, &cfg).unwrap();
        let sig = |v: Vec<Cf64>| TimeDomainSignal::new(v, cfg.sample_rate());
        let mixed: Vec<Cf64> = y1.iter().zip(&y2).map(|(p, q)| a * p + b * q).collect();
        let lhs = ex.extract(&sig(mixed));
        let (e1, e2) = (ex.extract(&sig(y1)), ex.extract(&sig(y2)));
        for ((l, p), q) in lhs.samples.iter().zip(&e1.samples).zip(&e2.samples) {
            prop_assert!((l - (a * p + b * q)).norm() < 1e-12);
        }
    }

    #[test]
    fn extraction_keeps_its_own_reference(seed in any::<u64>(), center in -4i64..=4) {
        let cfg = OfdmConfig::default();
        let spec = ReferenceSignalSpec {
            bandwidth_subcarriers: 96,
            position_offset_hz: center as f64 * 10.0 * cfg.subcarrier_spacing_hz,
            sequence_seed: seed,
            ..ReferenceSignalSpec::default()
        };
        let burst = generate(&spec, &cfg).unwrap();
        let out = Extractor::new(&spec, &cfg).unwrap().extract(&burst.signal);
        for (a, b) in out.samples.iter().zip(&burst.signal.samples) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn pure_ramp_recovers_its_frequency(frac in -0.99..0.99f64, lag in 1usize..64) {
        let ts = 1.0 / 7.68e6;
        let f = frac * ambiguity_limit(lag, ts);
        let z: Vec<Cf64> = (0..256)
            .map(|n| Cf64::from_polar(1.0, 2.0 * PI * f * n as f64 * ts))
            .collect();
        let metric = differential_metric(&z, lag).unwrap();
        let m = PositionMeasurement::from_metric(0.0, metric, 256.0, lag, ts).unwrap();
        prop_assert!((m.composite_estimate_hz - f).abs() < 1e-6 * ambiguity_limit(lag, ts));
    }

    #[test]
    fn composite_stays_inside_the_ambiguity_limit(
        re in -1e3..1e3f64,
        im in -1e3..1e3f64,
        lag in 1usize..128,
    ) {
        prop_assume!(re != 0.0 || im != 0.0);
        let ts = 1.0 / 7.68e6;
        let energy = Cf64::new(re, im).norm();
        let m = PositionMeasurement::from_metric(0.0, Cf64::new(re, im), energy, lag, ts).unwrap();
        prop_assert!(m.phase_rad > -PI && m.phase_rad <= PI);
        prop_assert!(m.composite_estimate_hz.abs() <= ambiguity_limit(lag, ts) * (1.0 + 1e-12));
    }

    #[test]
    fn iir_output_lies_between_inputs(
        p in (-1e5..1e5f64, -1e4..1e4f64),
        q in (-1e5..1e5f64, -1e4..1e4f64),
        gamma in 0.0..=1.0f64,
    ) {
        let prev = JointEstimate::new(p.0, p.1, 2e9);
        let new = JointEstimate::new(q.0, q.1, 2e9);
        let out = iir_update(&prev, &new, gamma).unwrap();
        let between = |x: f64, a: f64, b: f64| x >= a.min(b) - 1e-9 && x <= a.max(b) + 1e-9;
        prop_assert!(between(out.freq_offset_hz, p.0, q.0));
        prop_assert!(between(out.speed_mps, p.1, q.1));
    }

    #[test]
    fn least_squares_matches_svd_oracle(
        offsets in prop::collection::vec(-1e9..1e9f64, 2..7),
        rhs_seed in prop::collection::vec(-8e4..8e4f64, 7),
    ) {
        let fc = 2e9;
        let mut offsets = offsets;
        offsets.sort_by(f64::total_cmp);
        offsets.dedup();
        prop_assume!(offsets.len() >= 2 && offsets.windows(2).all(|w| w[1] - w[0] > 1e6));
        let rows: Vec<[f64; 2]> = offsets.iter().map(|f| [1.0, (fc + f) / SPEED_OF_LIGHT]).collect();
        let rhs: Vec<f64> = rhs_seed[..rows.len()].to_vec();
        let sol = solve_ls(&LinearSystem { rows: rows.clone(), rhs: rhs.clone() }, fc).unwrap();

        let a = DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]);
        let b = DVector::from_vec(rhs);
        let svd = a.clone().svd(true, true);
        let x = svd.solve(&b, 1e-300).unwrap();
        let sv = &svd.singular_values;
        let cond = sv.max() / sv.min();

        // Normal equations lose accuracy with the square of the condition number.
        let tol = 1e-13 * cond * cond;
        let scale = x[0].abs() + x[1].abs() * a[(0, 1)];
        prop_assert!((sol.estimate.freq_offset_hz - x[0]).abs() <= tol * scale);
        prop_assert!((sol.estimate.speed_mps - x[1]).abs() <= tol * scale / a[(0, 1)]);
        prop_assert!((sol.condition_number - cond).abs() < 1e-6 * cond);
    }

    #[test]
    fn consistent_measurements_are_solved_exactly(
        df in -21e3..21e3f64,
        v in -7400.0..7400.0f64,
        half_sep in 50e6..1.1e9f64,
    ) {
        let fc = 2e9;
        let cfg = EstimatorConfig::default();
        let ts = 1.0 / 7.68e6;
        let measurements: Vec<_> = [-half_sep, half_sep]
            .iter()
            .map(|&fp| {
                let composite = df + v * (fc + fp) / SPEED_OF_LIGHT;
                PositionMeasurement {
                    position_offset_hz: fp,
                    composite_estimate_hz: composite,
                    phase_rad: 2.0 * PI * composite * cfg.lag as f64 * ts,
                    metric_magnitude: 1.0,
                }
            })
            .collect();
        let sol = solve_ls(&build_system(&measurements, fc, &cfg).unwrap(), fc).unwrap();
        prop_assert!((sol.estimate.freq_offset_hz - df).abs() < 1e-6);
        prop_assert!((sol.estimate.speed_mps - v).abs() < 1e-5);
    }
}
