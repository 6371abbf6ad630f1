//! Known reference signals at several frequency positions of the carrier.
//!
//! A reference signal is a seeded QPSK sequence on a contiguous block of
//! subcarriers centered `f_p` Hz away from the grid center. Bins above `N/2`
//! stand for negative frequencies. Extraction masks everything outside the
//! block (plus a configurable guard on either side) per OFDM symbol and
//! transforms back, keeping the samples index-aligned with the transmitted
//! reference.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ofdm::{Dft, FrequencyDomainSymbols, Modem, OfdmConfig, TimeDomainSignal};
use crate::{mix_seed, Cf64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSignalSpec {
    /// Center of the signal relative to the grid center, in Hz.
    pub position_offset_hz: f64,
    /// Occupied subcarriers `|S_p|`; 240 is 20 resource blocks.
    pub bandwidth_subcarriers: usize,
    pub sequence_seed: u64,
    /// OFDM symbols per burst.
    pub num_symbols: usize,
    /// Bins kept on each side of the block during extraction.
    pub guard_subcarriers: usize,
}

impl Default for ReferenceSignalSpec {
    fn default() -> Self {
        Self {
            position_offset_hz: 0.0,
            bandwidth_subcarriers: 240,
            sequence_seed: 0x5353_4230,
            num_symbols: 4,
            guard_subcarriers: 8,
        }
    }
}

impl ReferenceSignalSpec {
    /// Signed subcarrier index of the block center.
    pub fn center_subcarrier(&self, cfg: &OfdmConfig) -> i64 {
        (self.position_offset_hz / cfg.subcarrier_spacing_hz).round() as i64
    }

    /// Signed index of the first occupied subcarrier.
    fn first_subcarrier(&self, cfg: &OfdmConfig) -> i64 {
        self.center_subcarrier(cfg) - (self.bandwidth_subcarriers / 2) as i64
    }

    pub fn validate(&self, cfg: &OfdmConfig) -> Result<()> {
        if self.bandwidth_subcarriers == 0 || !self.bandwidth_subcarriers.is_multiple_of(2) {
            return Err(Error::config(format!(
                "reference bandwidth {} must be positive and even",
                self.bandwidth_subcarriers
            )));
        }
        if self.num_symbols == 0 {
            return Err(Error::config("a burst needs at least one OFDM symbol"));
        }
        if self.bandwidth_subcarriers > cfg.dft_size {
            return Err(Error::config(format!(
                "{} subcarriers do not fit a {}-point grid",
                self.bandwidth_subcarriers, cfg.dft_size
            )));
        }
        let half = (cfg.dft_size / 2) as i64;
        let lo = self.first_subcarrier(cfg);
        let hi = lo + self.bandwidth_subcarriers as i64 - 1;
        if lo < -half || hi >= half {
            return Err(Error::config(format!(
                "reference at {} Hz spans subcarriers {lo}..={hi}, outside the grid ±{half}",
                self.position_offset_hz
            )));
        }
        Ok(())
    }

    /// Grid bins (`0..N`) carrying the sequence, lowest frequency first.
    pub fn occupied_bins(&self, cfg: &OfdmConfig) -> Vec<usize> {
        let n = cfg.dft_size as i64;
        let lo = self.first_subcarrier(cfg);
        (lo..lo + self.bandwidth_subcarriers as i64)
            .map(|k| k.rem_euclid(n) as usize)
            .collect()
    }

    /// Extraction passband: occupied bins widened by the guard, clipped to the grid.
    pub fn passband_mask(&self, cfg: &OfdmConfig) -> Vec<bool> {
        let n = cfg.dft_size as i64;
        let half = n / 2;
        let lo = (self.first_subcarrier(cfg) - self.guard_subcarriers as i64).max(-half);
        let hi = (self.first_subcarrier(cfg)
            + (self.bandwidth_subcarriers + self.guard_subcarriers) as i64)
            .min(half);
        let mut mask = vec![false; cfg.dft_size];
        for k in lo..hi {
            mask[k.rem_euclid(n) as usize] = true;
        }
        mask
    }

    /// The same signal placed at the center of its own narrowband grid.
    pub fn at_baseband_center(&self) -> Self {
        Self {
            position_offset_hz: 0.0,
            ..*self
        }
    }

    /// The sequence sent in burst `burst`; each burst carries fresh content.
    pub fn for_burst(&self, burst: u64) -> Self {
        Self {
            sequence_seed: mix_seed(self.sequence_seed, burst),
            ..*self
        }
    }
}

/// Reference signals at `P ≥ 2` distinct, non-overlapping positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionSet {
    pub carrier_freq_hz: f64,
    /// Occupied carrier bandwidth `W`.
    pub carrier_bandwidth_hz: f64,
    pub positions: Vec<ReferenceSignalSpec>,
}

impl PositionSet {
    /// Two positions at `f_c ± separation/2` in a carrier just wide enough to
    /// hold them.
    pub fn symmetric(
        carrier_freq_hz: f64,
        separation_hz: f64,
        subcarrier_spacing_hz: f64,
        template: &ReferenceSignalSpec,
    ) -> Result<Self> {
        let positions = [-0.5, 0.5]
            .iter()
            .enumerate()
            .map(|(p, side)| ReferenceSignalSpec {
                position_offset_hz: side * separation_hz,
                sequence_seed: mix_seed(template.sequence_seed, p as u64),
                ..*template
            })
            .collect();
        let set = Self {
            carrier_freq_hz,
            carrier_bandwidth_hz: separation_hz
                + template.bandwidth_subcarriers as f64 * subcarrier_spacing_hz,
            positions,
        };
        set.validate(subcarrier_spacing_hz)?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self, subcarrier_spacing_hz: f64) -> Result<()> {
        if self.positions.len() < 2 {
            return Err(Error::config(format!(
                "need at least two reference positions, got {}",
                self.positions.len()
            )));
        }
        let tol = 1e-6 * subcarrier_spacing_hz;
        for spec in &self.positions {
            let half_width = spec.bandwidth_subcarriers as f64 * subcarrier_spacing_hz / 2.0;
            if spec.position_offset_hz.abs() + half_width > self.carrier_bandwidth_hz / 2.0 + tol {
                return Err(Error::config(format!(
                    "reference at {} Hz does not fit in a {} Hz carrier",
                    spec.position_offset_hz, self.carrier_bandwidth_hz
                )));
            }
        }
        for (i, a) in self.positions.iter().enumerate() {
            for b in &self.positions[i + 1..] {
                let gap = (a.position_offset_hz - b.position_offset_hz).abs();
                let needed = (a.bandwidth_subcarriers + b.bandwidth_subcarriers) as f64
                    * subcarrier_spacing_hz
                    / 2.0;
                if gap + tol < needed {
                    return Err(Error::config(format!(
                        "references at {} Hz and {} Hz overlap",
                        a.position_offset_hz, b.position_offset_hz
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One transmitted burst: the frequency-domain symbols and the CP-prefixed
/// time signal they modulate to.
#[derive(Debug, Clone, PartialEq)]
pub struct Burst {
    pub symbols: Vec<FrequencyDomainSymbols>,
    pub signal: TimeDomainSignal,
}

impl Burst {
    /// Samples `0..N` of symbol `s`, i.e. with its cyclic prefix dropped.
    pub fn symbol_body<'a>(&'a self, s: usize, cfg: &OfdmConfig) -> &'a [Cf64] {
        let start = s * cfg.symbol_len() + cfg.cp_len;
        &self.signal.samples[start..start + cfg.dft_size]
    }
}

fn qpsk(rng: &mut ChaCha8Rng) -> Cf64 {
    let bits: u8 = rng.random_range(0..4);
    let re = if bits & 1 == 0 {
        FRAC_1_SQRT_2
    } else {
        -FRAC_1_SQRT_2
    };
    let im = if bits & 2 == 0 {
        FRAC_1_SQRT_2
    } else {
        -FRAC_1_SQRT_2
    };
    Cf64::new(re, im)
}

/// Generates a burst of `spec.num_symbols` OFDM symbols on `modem`'s grid.
pub fn generate_with(spec: &ReferenceSignalSpec, modem: &Modem) -> Result<Burst> {
    let cfg = modem.config();
    spec.validate(cfg)?;
    let bins = spec.occupied_bins(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.sequence_seed);
    let mut symbols = Vec::with_capacity(spec.num_symbols);
    let mut samples = Vec::with_capacity(spec.num_symbols * cfg.symbol_len());
    for _ in 0..spec.num_symbols {
        let mut x = FrequencyDomainSymbols::zeros(cfg);
        for &k in &bins {
            x.values_mut()[k] = qpsk(&mut rng);
        }
        samples.extend(modem.modulate(&x)?.samples);
        symbols.push(x);
    }
    Ok(Burst {
        symbols,
        signal: TimeDomainSignal::new(samples, cfg.sample_rate()),
    })
}

/// See [`generate_with`].
pub fn generate(spec: &ReferenceSignalSpec, cfg: &OfdmConfig) -> Result<Burst> {
    generate_with(spec, &Modem::new(*cfg)?)
}

/// Per-symbol frequency-domain band-pass for one reference position.
#[derive(Debug, Clone)]
pub struct Extractor {
    cfg: OfdmConfig,
    dft: Dft,
    mask: Vec<bool>,
}

impl Extractor {
    pub fn new(spec: &ReferenceSignalSpec, cfg: &OfdmConfig) -> Result<Self> {
        cfg.validate()?;
        spec.validate(cfg)?;
        Ok(Self {
            cfg: *cfg,
            dft: Dft::new(cfg.dft_size),
            mask: spec.passband_mask(cfg),
        })
    }

    /// Filters one `N`-sample symbol body in place.
    pub fn filter_body(&self, body: &mut [Cf64]) {
        if self.mask.iter().all(|&m| m) {
            return;
        }
        self.dft.forward(body);
        for (v, &keep) in body.iter_mut().zip(&self.mask) {
            if !keep {
                *v = Cf64::new(0.0, 0.0);
            }
        }
        self.dft.inverse(body);
    }

    /// Filters every complete symbol of `y`. The cyclic prefix of each output
    /// symbol is rebuilt from its filtered body; trailing samples that do not
    /// form a complete symbol are zeroed.
    pub fn extract(&self, y: &TimeDomainSignal) -> TimeDomainSignal {
        let n = self.cfg.dft_size;
        let cp = self.cfg.cp_len;
        let sym = self.cfg.symbol_len();
        let mut out = vec![Cf64::new(0.0, 0.0); y.len()];
        for (src, dst) in y.samples.chunks_exact(sym).zip(out.chunks_exact_mut(sym)) {
            let mut body = src[cp..].to_vec();
            self.filter_body(&mut body);
            dst[..cp].copy_from_slice(&body[n - cp..]);
            dst[cp..].copy_from_slice(&body);
        }
        TimeDomainSignal::new(out, y.sample_rate_hz)
    }
}

/// Band-pass `y` to `spec`'s subcarrier block, keeping sample positions.
pub fn extract_position(
    y: &TimeDomainSignal,
    spec: &ReferenceSignalSpec,
    cfg: &OfdmConfig,
) -> Result<TimeDomainSignal> {
    if y.len() < cfg.symbol_len() {
        return Err(Error::input(format!(
            "need at least one full OFDM symbol ({} samples), got {}",
            cfg.symbol_len(),
            y.len()
        )));
    }
    Ok(Extractor::new(spec, cfg)?.extract(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wide() -> OfdmConfig {
        OfdmConfig {
            dft_size: 1024,
            cp_len: 72,
            ..OfdmConfig::default()
        }
    }

    fn spec_at(offset_hz: f64, seed: u64) -> ReferenceSignalSpec {
        ReferenceSignalSpec {
            position_offset_hz: offset_hz,
            sequence_seed: seed,
            guard_subcarriers: 0,
            ..ReferenceSignalSpec::default()
        }
    }

    fn energy(x: &[Cf64]) -> f64 {
        x.iter().map(|v| v.norm_sqr()).sum()
    }

    #[test]
    fn same_seed_same_sequence() {
        let cfg = OfdmConfig::default();
        let a = generate(&spec_at(0.0, 7), &cfg).unwrap();
        let b = generate(&spec_at(0.0, 7), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn occupies_exactly_240_unit_symbols() {
        let cfg = OfdmConfig::default();
        let burst = generate(&spec_at(0.0, 1), &cfg).unwrap();
        assert_eq!(burst.symbols.len(), 4);
        assert_eq!(burst.signal.len(), 4 * cfg.symbol_len());
        for x in &burst.symbols {
            assert_eq!(x.occupied(), 240);
            assert!((x.energy() - 240.0).abs() < 1e-12);
            for v in x.values().iter().filter(|v| v.norm() > 0.0) {
                assert!((v.norm() - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_out_of_grid_and_odd_width() {
        let cfg = OfdmConfig::default();
        assert!(generate(&spec_at(300e3, 1), &cfg).unwrap_err().is_config());
        let odd = ReferenceSignalSpec {
            bandwidth_subcarriers: 239,
            ..spec_at(0.0, 1)
        };
        assert!(odd.validate(&cfg).is_err());
        assert!(spec_at(-200.0 * 30e3, 1).validate(&wide()).is_ok());
        assert!(spec_at(-400.0 * 30e3, 1).validate(&wide()).is_err());
    }

    #[test]
    fn distinct_seeds_are_nearly_orthogonal() {
        let cfg = OfdmConfig::default();
        for seed in 0..20u64 {
            let a = generate(&spec_at(0.0, seed), &cfg).unwrap();
            let b = generate(&spec_at(0.0, seed + 1000), &cfg).unwrap();
            let xa = a.symbols[0].values();
            let xb = b.symbols[0].values();
            let corr: Cf64 = xa.iter().zip(xb).map(|(p, q)| p.conj() * q).sum();
            assert!(
                corr.norm() / 240.0 < 0.2,
                "seed {seed}: {}",
                corr.norm() / 240.0
            );
        }
    }

    #[test]
    fn burst_reseeding_changes_content() {
        let s = spec_at(0.0, 3);
        assert_ne!(s.for_burst(0).sequence_seed, s.for_burst(1).sequence_seed);
        assert_eq!(s.for_burst(5), s.for_burst(5));
    }

    #[test]
    fn extraction_passes_own_band() {
        let cfg = wide();
        let spec = spec_at(-200.0 * 30e3, 2);
        let x = generate(&spec, &cfg).unwrap();
        let y = extract_position(&x.signal, &spec, &cfg).unwrap();
        for s in 0..spec.num_symbols {
            let a = x.symbol_body(s, &cfg);
            let b = &y.samples[s * cfg.symbol_len() + cfg.cp_len..][..cfg.dft_size];
            let err = energy(&a.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>());
            assert!(err / energy(a) < 1e-20);
        }
        // Whole-burst energy survives, CP included.
        assert!(energy(&y.samples) / energy(&x.signal.samples) > 0.99);
    }

    #[test]
    fn extraction_rejects_other_band() {
        let cfg = wide();
        let p = spec_at(-200.0 * 30e3, 2);
        let q = spec_at(200.0 * 30e3, 3);
        let xq = generate(&q, &cfg).unwrap();
        let y = extract_position(&xq.signal, &p, &cfg).unwrap();
        let ratio = energy(&y.samples) / energy(&xq.signal.samples);
        assert!(10.0 * ratio.log10() < -40.0, "{ratio}");
    }

    #[test]
    fn extraction_of_zero_is_zero() {
        let cfg = OfdmConfig::default();
        let y = TimeDomainSignal::zeros(3 * cfg.symbol_len(), cfg.sample_rate());
        let out = extract_position(&y, &spec_at(0.0, 1), &cfg).unwrap();
        assert!(out.samples.iter().all(|v| v.norm() == 0.0));
        let short = TimeDomainSignal::zeros(10, cfg.sample_rate());
        assert!(extract_position(&short, &spec_at(0.0, 1), &cfg).is_err());
    }

    #[test]
    fn guard_covering_the_grid_is_pass_through() {
        let cfg = OfdmConfig::default();
        let spec = ReferenceSignalSpec::default();
        assert!(spec.passband_mask(&cfg).iter().all(|&m| m));
        let tight = spec_at(0.0, 1);
        assert_eq!(
            tight.passband_mask(&cfg).iter().filter(|&&m| m).count(),
            240
        );
    }

    #[test]
    fn position_set_invariants() {
        let t = ReferenceSignalSpec::default();
        let set = PositionSet::symmetric(2e9, 864e6, 30e3, &t).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.positions[0].position_offset_hz, -432e6);
        assert_eq!(set.positions[1].position_offset_hz, 432e6);
        assert_ne!(
            set.positions[0].sequence_seed,
            set.positions[1].sequence_seed
        );
        // Narrower than one reference: the two blocks would overlap.
        assert!(PositionSet::symmetric(2e9, 3e6, 30e3, &t).is_err());
        let mut single = set.clone();
        single.positions.truncate(1);
        assert!(single.validate(30e3).is_err());
        let mut tight = set;
        tight.carrier_bandwidth_hz = 800e6;
        assert!(tight.validate(30e3).is_err());
    }
}
