//! Photon-counting Monte Carlo: finite-statistics Bell estimates with
//! bootstrap error bars, two-qubit tomography and state reconstruction.
//!
//! Every stochastic routine is a pure function of its inputs and a `u64`
//! seed. Sub-streams (per setting pair, per bootstrap replicate, per
//! tomography setting) are derived with [`derive_seed`] so results do not
//! depend on evaluation order or thread count.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix4, SMatrix, SVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bell::{
    bell_from_profiles, joint_table_with_bases, scan_dimensions, BellReport, FactorBases, PairKernel,
    ProbabilityTable, ShiftProfile, SETTING_PAIRS,
};
use crate::error::{Error, Result};
use crate::measurements::{analyzer_phase, hwp_angle, Party, SettingSpec};
use crate::qstate::{qubit_count, NoiseModel, PairState};

pub const DEFAULT_RESAMPLES: usize = 200;
pub const DEFAULT_SEED: u64 = 0x00C6_1A3F;

/// Largest pair count for the per-pair schedule, `(4^N - 1)/3` settings per table.
pub const PER_PAIR_MAX_QUBITS: usize = 8;

/// SplitMix64 finalizer over `(seed, tags…)`.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    tags.iter().fold(mix(seed), |acc, &t| mix(acc ^ mix(t)))
}

fn rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

/// Multinomial draw by sequential conditional binomials.
fn multinomial(rng: &mut ChaCha8Rng, total: u64, probs: &[f64]) -> Vec<u64> {
    let mut counts = vec![0u64; probs.len()];
    let mut left = total;
    let mut mass: f64 = probs.iter().sum();
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = left;
            break;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let c = if q >= 1.0 {
            left
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(left, q).expect("q in (0,1)").sample(rng)
        };
        counts[i] = c;
        left -= c;
        mass -= p;
    }
    counts
}

fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some(var.sqrt())
}

/// Outcome counts for one setting pair, fixed total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountRecord {
    pub d: usize,
    pub a: u8,
    pub b: u8,
    /// Row-major in Alice's outcome.
    pub counts: Vec<u64>,
    pub total: u64,
}

impl CountRecord {
    pub fn frequencies(&self) -> Result<ProbabilityTable> {
        if self.total == 0 {
            return Err(Error::ZeroTotal);
        }
        let sum: u64 = self.counts.iter().sum();
        if sum != self.total {
            return Err(Error::DimMismatch {
                expected: self.total as usize,
                got: sum as usize,
            });
        }
        let n = self.total as f64;
        ProbabilityTable::new(self.d, self.a, self.b, self.counts.iter().map(|&c| c as f64 / n).collect())
    }
}

/// Multinomial draw of `total` events over the `d²` cells of `table`.
pub fn sample_counts(table: &ProbabilityTable, total: u64, seed: u64) -> Result<CountRecord> {
    if total == 0 {
        return Err(Error::ZeroTotal);
    }
    let (a, b) = table.settings();
    let mut r = rng(seed, &[]);
    Ok(CountRecord {
        d: table.d(),
        a,
        b,
        counts: multinomial(&mut r, total, table.entries()),
        total,
    })
}

fn profiles_by_slot(items: Vec<((u8, u8), ShiftProfile)>) -> Result<[ShiftProfile; 4]> {
    let mut slots: [Option<ShiftProfile>; 4] = Default::default();
    for ((a, b), p) in items {
        let i = SETTING_PAIRS
            .iter()
            .position(|&s| s == (a, b))
            .ok_or(Error::IndexOutOfRange {
                name: "setting",
                value: a.max(b) as usize,
                limit: 2,
            })?;
        if slots[i].replace(p).is_some() {
            return Err(Error::IndexOutOfRange {
                name: "duplicate setting pair",
                value: i,
                limit: 4,
            });
        }
    }
    if slots.iter().any(Option::is_none) {
        return Err(Error::DimMismatch {
            expected: 4,
            got: slots.iter().flatten().count(),
        });
    }
    Ok(slots.map(|s| s.expect("checked")))
}

/// Bell value from empirical frequencies with a bootstrap standard error.
/// Each replicate redraws every record's multinomial at its empirical
/// frequencies. `resamples < 2` leaves `stderr` unset.
pub fn estimate_bell_from_counts(records: &[CountRecord], resamples: usize, seed: u64) -> Result<BellReport> {
    let tables = records
        .iter()
        .map(CountRecord::frequencies)
        .collect::<Result<Vec<_>>>()?;
    let point = bell_from_profiles(&profiles_by_slot(
        tables.iter().map(|t| (t.settings(), t.shift_profile())).collect(),
    )?)?;
    let replicates = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let items = tables
                .iter()
                .zip(records)
                .enumerate()
                .map(|(i, (t, rec))| {
                    let mut g = rng(seed, &[r as u64, i as u64]);
                    let counts = multinomial(&mut g, rec.total, t.entries());
                    let n = rec.total as f64;
                    let f = ProbabilityTable::new(rec.d, rec.a, rec.b, counts.iter().map(|&c| c as f64 / n).collect())?;
                    Ok((t.settings(), f.shift_profile()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(bell_from_profiles(&profiles_by_slot(items)?)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(match sample_std(&replicates) {
        Some(s) => point.with_stderr(s),
        None => point,
    })
}

/// Coincidence counts for one wave-plate setting on pair level `m`.
/// The four ports `HH, HV, VH, VV` are outcomes
/// `(k, l), (k, l+h), (k+h, l), (k+h, l+h)` modulo `2^m`, with `h = 2^(m-1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSettingCounts {
    pub level: usize,
    pub k_low: usize,
    pub l_low: usize,
    pub counts: [u64; 4],
}

impl PairSettingCounts {
    fn events(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// All wave-plate settings of one setting pair `(a, b)` measured pair by pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCountRecord {
    pub n_pairs: usize,
    pub a: u8,
    pub b: u8,
    /// Ordered by level, then `k_low`, then `l_low`.
    pub settings: Vec<PairSettingCounts>,
}

impl PairCountRecord {
    pub fn total(&self) -> u64 {
        self.settings.iter().map(PairSettingCounts::events).sum()
    }

    /// Table `P(k, l) = Π_m p̂_m(k mod 2^m, l mod 2^m)` from the port frequencies.
    pub fn frequency_table(&self) -> Result<ProbabilityTable> {
        let levels = self.level_frequencies(|s| {
            let n = s.events();
            if n == 0 {
                return Err(Error::ZeroTotal);
            }
            Ok(s.counts.map(|c| c as f64 / n as f64))
        })?;
        table_from_levels(&levels, self.a, self.b)
    }

    fn level_frequencies(&self, mut freq: impl FnMut(&PairSettingCounts) -> Result<[f64; 4]>) -> Result<Vec<Vec<f64>>> {
        let n = self.n_pairs;
        let expected = (4usize.pow(n as u32) - 1) / 3;
        if n == 0 || self.settings.len() != expected {
            return Err(Error::DimMismatch {
                expected,
                got: self.settings.len(),
            });
        }
        let mut levels: Vec<Vec<f64>> = (1..=n).map(|m| vec![f64::NAN; 1 << (2 * m)]).collect();
        for s in &self.settings {
            if s.level == 0 || s.level > n {
                return Err(Error::IndexOutOfRange {
                    name: "level",
                    value: s.level,
                    limit: n,
                });
            }
            let side = 1usize << s.level;
            let h = side >> 1;
            if s.k_low >= h || s.l_low >= h {
                return Err(Error::IndexOutOfRange {
                    name: "setting index",
                    value: s.k_low.max(s.l_low),
                    limit: h,
                });
            }
            let f = freq(s)?;
            let lv = &mut levels[s.level - 1];
            for (port, (dk, dl)) in [(0, 0), (0, h), (h, 0), (h, h)].into_iter().enumerate() {
                lv[(s.k_low + dk) * side + s.l_low + dl] = f[port];
            }
        }
        if levels.iter().flatten().any(|x| x.is_nan()) {
            return Err(Error::DimMismatch {
                expected,
                got: self.settings.len(),
            });
        }
        Ok(levels)
    }
}

fn table_from_levels(levels: &[Vec<f64>], a: u8, b: u8) -> Result<ProbabilityTable> {
    let mut table = vec![1.0f64];
    for (i, lv) in levels.iter().enumerate() {
        let side = 1usize << (i + 1);
        let half = side >> 1;
        let mut next = vec![0.0; side * side];
        for k in 0..side {
            for l in 0..side {
                next[k * side + l] = table[(k % half) * half + l % half] * lv[k * side + l];
            }
        }
        table = next;
    }
    ProbabilityTable::new(1 << levels.len(), a, b, table)
}

/// Per-pair schedule: the budget `total` for setting pair `(a, b)` is split
/// evenly over its `(4^N - 1)/3` wave-plate settings (remainder to the first
/// ones); each setting is a four-port multinomial.
pub fn sample_pair_counts(pair: &PairState, bases: &FactorBases, a: u8, b: u8, total: u64, seed: u64) -> Result<PairCountRecord> {
    let n = bases.n_levels();
    if n == 0 || n > PER_PAIR_MAX_QUBITS {
        return Err(Error::OverCap {
            d: 1 << n.min(63),
            cap: 1 << PER_PAIR_MAX_QUBITS,
            what: "per-pair schedule",
        });
    }
    let n_settings = ((4u64.pow(n as u32)) - 1) / 3;
    if total < n_settings {
        return Err(Error::OutOfRange {
            name: "events per setting pair",
            value: total as f64,
            lo: n_settings as f64,
            hi: f64::INFINITY,
        });
    }
    let kernel = PairKernel::new(pair);
    let (per, extra) = (total / n_settings, total % n_settings);
    let mut settings = Vec::with_capacity(n_settings as usize);
    let mut idx = 0u64;
    for m in 1..=n {
        let h = 1usize << (m - 1);
        for k_low in 0..h {
            for l_low in 0..h {
                let probs = [(0, 0), (0, h), (h, 0), (h, h)].map(|(dk, dl)| {
                    kernel
                        .prob(bases.alice[m - 1][k_low + dk], bases.bob[m - 1][l_low + dl])
                        .max(0.0)
                });
                let events = per + u64::from(idx < extra);
                let mut g = rng(seed, &[m as u64, k_low as u64, l_low as u64]);
                let c = multinomial(&mut g, events, &probs);
                settings.push(PairSettingCounts {
                    level: m,
                    k_low,
                    l_low,
                    counts: [c[0], c[1], c[2], c[3]],
                });
                idx += 1;
            }
        }
    }
    Ok(PairCountRecord { n_pairs: n, a, b, settings })
}

/// Bell value from per-pair records with a bootstrap standard error; each
/// replicate redraws every wave-plate setting's four-port multinomial.
pub fn estimate_bell_from_pair_counts(records: &[PairCountRecord], resamples: usize, seed: u64) -> Result<BellReport> {
    let tables = records
        .iter()
        .map(PairCountRecord::frequency_table)
        .collect::<Result<Vec<_>>>()?;
    let point = bell_from_profiles(&profiles_by_slot(
        tables.iter().map(|t| (t.settings(), t.shift_profile())).collect(),
    )?)?;
    let replicates = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let items = records
                .iter()
                .enumerate()
                .map(|(i, rec)| {
                    let mut j = 0u64;
                    let levels = rec.level_frequencies(|s| {
                        let n = s.events();
                        let p = s.counts.map(|c| c as f64 / n as f64);
                        let mut g = rng(seed, &[r as u64, i as u64, j]);
                        j += 1;
                        let c = multinomial(&mut g, n, &p);
                        Ok([0, 1, 2, 3].map(|q| c[q] as f64 / n as f64))
                    })?;
                    let t = table_from_levels(&levels, rec.a, rec.b)?;
                    Ok((t.settings(), t.shift_profile()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(bell_from_profiles(&profiles_by_slot(items)?)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(match sample_std(&replicates) {
        Some(s) => point.with_stderr(s),
        None => point,
    })
}

/// Measurement phases realized by wave plates with Gaussian HWP errors of
/// width `sigma`: one offset per (party, level, setting); both ports of a
/// setting share it.
pub fn jittered_bases(a: u8, b: u8, n: usize, sigma: f64, seed: u64) -> Result<FactorBases> {
    if sigma == 0.0 {
        return FactorBases::ideal(a, b, n);
    }
    let normal = Normal::new(0.0, sigma).map_err(|_| Error::OutOfRange {
        name: "angle jitter",
        value: sigma,
        lo: 0.0,
        hi: f64::INFINITY,
    })?;
    let side = |party: Party, setting: u8, tag: u64| -> Result<Vec<Vec<Complex64>>> {
        let spec = SettingSpec::new(party, setting)?;
        let mut g = rng(seed, &[tag]);
        Ok((1..=n)
            .map(|m| {
                let h = 1usize << (m - 1);
                let mut level = vec![Complex64::new(0.0, 0.0); 2 * h];
                for low in 0..h {
                    let theta = hwp_angle(spec, low, m) + normal.sample(&mut g);
                    let phi = analyzer_phase(theta);
                    level[low] = Complex64::from_polar(1.0, phi);
                    level[low + h] = -level[low];
                }
                level
            })
            .collect())
    };
    Ok(FactorBases {
        alice: side(Party::A, a, 1)?,
        bob: side(Party::B, b, 2)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountModel {
    /// Budget split over the wave-plate settings of each pair level.
    PerPair,
    /// One multinomial over the `d²` joint outcomes.
    Joint,
}

impl FromStr for CountModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-pair" => Ok(CountModel::PerPair),
            "joint" => Ok(CountModel::Joint),
            other => Err(Error::Parse(format!("unknown count model {other:?}"))),
        }
    }
}

impl fmt::Display for CountModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountModel::PerPair => "per-pair",
            CountModel::Joint => "joint",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub noise: NoiseModel,
    /// Events per setting pair `(a, b)` (Bell runs) or per projector (tomography).
    pub events: u64,
    pub seed: u64,
    /// HWP angle jitter in radians.
    pub angle_jitter: f64,
    pub resamples: usize,
    pub count_model: CountModel,
}

impl ExperimentConfig {
    pub fn new(noise: NoiseModel, events: u64) -> Self {
        Self {
            noise,
            events,
            seed: DEFAULT_SEED,
            angle_jitter: 0.0,
            resamples: DEFAULT_RESAMPLES,
            count_model: CountModel::PerPair,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_resamples(mut self, resamples: usize) -> Self {
        self.resamples = resamples;
        self
    }

    pub fn with_count_model(mut self, model: CountModel) -> Self {
        self.count_model = model;
        self
    }

    pub fn with_jitter(mut self, sigma: f64) -> Self {
        self.angle_jitter = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.events == 0 {
            return Err(Error::ZeroTotal);
        }
        if !(self.angle_jitter >= 0.0 && self.angle_jitter.is_finite()) {
            return Err(Error::OutOfRange {
                name: "angle jitter",
                value: self.angle_jitter,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        self.noise.pair_state().map(|_| ())
    }
}

/// One simulated Bell test at `d = 2^n_pairs`: four setting pairs, each
/// sampled under `config.count_model`, estimated with bootstrap stderr.
pub fn simulate_bell_test(config: &ExperimentConfig, n_pairs: usize) -> Result<BellReport> {
    config.validate()?;
    qubit_count(1usize << n_pairs.min(63))?;
    let pair = config.noise.pair_state()?;
    let n = n_pairs as u64;
    let boot_seed = derive_seed(config.seed, &[n, 99]);
    match config.count_model {
        CountModel::Joint => {
            let records = SETTING_PAIRS
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| {
                    let bases = jittered_bases(a, b, n_pairs, config.angle_jitter, derive_seed(config.seed, &[n, i as u64, 1]))?;
                    let table = joint_table_with_bases(&pair, &bases, a, b)?;
                    sample_counts(&table, config.events, derive_seed(config.seed, &[n, i as u64, 2]))
                })
                .collect::<Result<Vec<_>>>()?;
            estimate_bell_from_counts(&records, config.resamples, boot_seed)
        }
        CountModel::PerPair => {
            let records = SETTING_PAIRS
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| {
                    let bases = jittered_bases(a, b, n_pairs, config.angle_jitter, derive_seed(config.seed, &[n, i as u64, 1]))?;
                    sample_pair_counts(&pair, &bases, a, b, config.events, derive_seed(config.seed, &[n, i as u64, 2]))
                })
                .collect::<Result<Vec<_>>>()?;
            estimate_bell_from_pair_counts(&records, config.resamples, boot_seed)
        }
    }
}

/// Simulated Bell tests for `d = 2, 4, …, 2^n_max`.
pub fn figure4_sweep(config: &ExperimentConfig, n_max: usize) -> Result<Vec<BellReport>> {
    (1..=n_max).map(|n| simulate_bell_test(config, n)).collect()
}

/// Single-photon polarization analyzer states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    H,
    V,
    /// `(H + V)/√2`
    D,
    /// `(H - iV)/√2`
    R,
    /// `(H + iV)/√2`
    L,
}

impl Polarization {
    pub fn ket(self) -> [Complex64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let c = Complex64::new;
        match self {
            Polarization::H => [c(1.0, 0.0), c(0.0, 0.0)],
            Polarization::V => [c(0.0, 0.0), c(1.0, 0.0)],
            Polarization::D => [c(h, 0.0), c(h, 0.0)],
            Polarization::R => [c(h, 0.0), c(0.0, -h)],
            Polarization::L => [c(h, 0.0), c(0.0, h)],
        }
    }

    fn symbol(self) -> char {
        match self {
            Polarization::H => 'H',
            Polarization::V => 'V',
            Polarization::D => 'D',
            Polarization::R => 'R',
            Polarization::L => 'L',
        }
    }

    fn from_symbol(c: char) -> Option<Self> {
        Some(match c {
            'H' => Polarization::H,
            'V' => Polarization::V,
            'D' => Polarization::D,
            'R' => Polarization::R,
            'L' => Polarization::L,
            _ => return None,
        })
    }
}

/// Two-photon projector `|a⟩⟨a| ⊗ |b⟩⟨b|` (A photon first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TomoSetting(pub Polarization, pub Polarization);

impl TomoSetting {
    pub fn label(&self) -> String {
        [self.0.symbol(), self.1.symbol()].iter().collect()
    }

    pub fn ket(&self) -> [Complex64; 4] {
        let (a, b) = (self.0.ket(), self.1.ket());
        [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
    }
}

impl FromStr for TomoSetting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut it = s.trim().chars();
        match (it.next().and_then(Polarization::from_symbol), it.next().and_then(Polarization::from_symbol), it.next()) {
            (Some(a), Some(b), None) => Ok(TomoSetting(a, b)),
            _ => Err(Error::Parse(format!("bad tomography setting label {s:?}"))),
        }
    }
}

/// The 16 two-qubit projectors of the standard polarization tomography
/// scheme, in measurement order.
pub const TOMOGRAPHY_SETTINGS: [TomoSetting; 16] = {
    use Polarization::*;
    [
        TomoSetting(H, H),
        TomoSetting(H, V),
        TomoSetting(V, V),
        TomoSetting(V, H),
        TomoSetting(R, H),
        TomoSetting(R, V),
        TomoSetting(D, V),
        TomoSetting(D, H),
        TomoSetting(D, R),
        TomoSetting(D, D),
        TomoSetting(R, D),
        TomoSetting(H, D),
        TomoSetting(V, D),
        TomoSetting(V, L),
        TomoSetting(H, L),
        TomoSetting(R, L),
    ]
};

fn projector_prob(rho: &Matrix4<Complex64>, setting: TomoSetting) -> f64 {
    let v = SVector::<Complex64, 4>::from(setting.ket());
    v.dotc(&(rho * v)).re
}

/// Coincidence counts per projector setting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TomographyRecord {
    #[serde(serialize_with = "serialize_entries")]
    pub entries: Vec<(TomoSetting, f64)>,
}

fn serialize_entries<S: serde::Serializer>(e: &[(TomoSetting, f64)], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(e.len()))?;
    for (t, c) in e {
        seq.serialize_element(&(t.label(), c))?;
    }
    seq.end()
}

impl TomographyRecord {
    /// Expected (noise-free) counts for `events` trials per setting.
    pub fn expected(pair: &PairState, events: f64) -> Self {
        let rho = pair.to_matrix4();
        Self {
            entries: TOMOGRAPHY_SETTINGS
                .iter()
                .map(|&s| (s, events * projector_prob(&rho, s).max(0.0)))
                .collect(),
        }
    }

    pub fn count(&self, setting: TomoSetting) -> Option<f64> {
        self.entries.iter().find(|(s, _)| *s == setting).map(|(_, c)| *c)
    }

    pub fn validate(&self) -> Result<()> {
        for s in TOMOGRAPHY_SETTINGS {
            match self.entries.iter().filter(|(t, _)| *t == s).count() {
                1 => {}
                0 => return Err(Error::Tomography(format!("missing setting {}", s.label()))),
                _ => return Err(Error::Tomography(format!("duplicate setting {}", s.label()))),
            }
        }
        if self.entries.len() != 16 {
            return Err(Error::Tomography(format!("expected 16 settings, got {}", self.entries.len())));
        }
        if let Some((s, c)) = self.entries.iter().find(|(_, c)| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::Tomography(format!("invalid count {c} for {}", s.label())));
        }
        Ok(())
    }

    /// `setting_label,count` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("setting_label,count\n");
        for (s, c) in &self.entries {
            out.push_str(&format!("{},{}\n", s.label(), c));
        }
        out
    }

    /// Parses the CSV written by [`to_csv`](Self::to_csv); `#` lines are comments.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut header_seen = false;
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true;
                if line.replace(' ', "") == "setting_label,count" {
                    continue;
                }
            }
            let (label, count) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected two columns", no + 1)))?;
            let count: f64 = count
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad count {count:?}", no + 1)))?;
            entries.push((label.parse()?, count));
        }
        let rec = Self { entries };
        rec.validate()?;
        Ok(rec)
    }
}

/// Binomial counts for each of the 16 projectors at `events` trials per setting.
pub fn simulate_tomography(pair: &PairState, events: u64, seed: u64) -> Result<TomographyRecord> {
    if events == 0 {
        return Err(Error::ZeroTotal);
    }
    let rho = pair.to_matrix4();
    let entries = TOMOGRAPHY_SETTINGS
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let p = projector_prob(&rho, s).clamp(0.0, 1.0);
            let mut g = rng(seed, &[i as u64]);
            let c = Binomial::new(events, p).expect("p in [0,1]").sample(&mut g);
            (s, c as f64)
        })
        .collect();
    Ok(TomographyRecord { entries })
}

fn pauli(i: usize) -> [[Complex64; 2]; 2] {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    let j = Complex64::new(0.0, 1.0);
    match i {
        0 => [[o, z], [z, o]],
        1 => [[z, o], [o, z]],
        2 => [[z, -j], [j, z]],
        _ => [[o, z], [z, -o]],
    }
}

fn pauli_pair(mu: usize) -> Matrix4<Complex64> {
    let (p, q) = (pauli(mu / 4), pauli(mu % 4));
    Matrix4::from_fn(|r, c| p[r / 2][c / 2] * q[r % 2][c % 2])
}

/// Linear inversion onto the two-qubit Pauli basis, followed by projection
/// onto the nearest unit-trace PSD matrix: eigenvalues are shifted by a
/// common offset and clipped at zero until they sum to one.
pub fn reconstruct_state(record: &TomographyRecord) -> Result<PairState> {
    record.validate()?;
    let norm: f64 = TOMOGRAPHY_SETTINGS[..4]
        .iter()
        .map(|&s| record.count(s).expect("validated"))
        .sum();
    if norm <= 0.0 {
        return Err(Error::Tomography("HH+HV+VV+VH counts are zero".into()));
    }
    let paulis: Vec<Matrix4<Complex64>> = (0..16).map(pauli_pair).collect();
    // p_ν = Σ_μ r_μ Tr(P_ν σ_μ)/4
    let design = SMatrix::<f64, 16, 16>::from_fn(|nu, mu| {
        let v = SVector::<Complex64, 4>::from(TOMOGRAPHY_SETTINGS[nu].ket());
        v.dotc(&(paulis[mu] * v)).re / 4.0
    });
    let freqs = SVector::<f64, 16>::from_fn(|nu, _| record.count(TOMOGRAPHY_SETTINGS[nu]).expect("validated") / norm);
    let r = design
        .lu()
        .solve(&freqs)
        .ok_or_else(|| Error::Tomography("singular design matrix".into()))?;
    let mut rho = Matrix4::<Complex64>::zeros();
    for (mu, p) in paulis.iter().enumerate() {
        rho += p.scale(r[mu] / 4.0);
    }
    let rho = (rho + rho.adjoint()).scale(0.5);
    let tr = rho.trace().re;
    if tr <= 0.0 {
        return Err(Error::Tomography("reconstructed trace is not positive".into()));
    }
    let rho = rho.unscale(tr);
    let eig = SymmetricEigen::new(DMatrix::from_fn(4, 4, |i, j| rho[(i, j)]));
    let lambda = project_to_simplex(eig.eigenvalues.as_slice());
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&DVector::from_iterator(4, lambda.iter().map(|&x| Complex64::new(x, 0.0))));
    let out = v * d * v.adjoint();
    let out = (&out + out.adjoint()).scale(0.5);
    let tr: f64 = (0..4).map(|i| out[(i, i)].re).sum();
    PairState::from_matrix4(&Matrix4::from_fn(|i, j| out[(i, j)] / tr))
}

/// Euclidean projection of `x` onto `{λ ≥ 0, Σλ = 1}`.
fn project_to_simplex(x: &[f64]) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (i + 1) as f64;
        if v - t > 0.0 {
            tau = t;
        }
    }
    x.iter().map(|&v| (v - tau).max(0.0)).collect()
}

/// Output of the tomography route: the record, the reconstructed pair and
/// one report per dimension.
#[derive(Debug, Clone)]
pub struct TomographyScan {
    pub record: TomographyRecord,
    pub state: PairState,
    pub reports: Vec<BellReport>,
}

/// Tomography of one pair, reconstruction, then `I_d` for
/// `d = 2 … 2^n_max` on `ρ̂^{⊗N}`.
pub fn figure5_pipeline(config: &ExperimentConfig, n_max: usize) -> Result<TomographyScan> {
    config.validate()?;
    let truth = config.noise.pair_state()?;
    let record = simulate_tomography(&truth, config.events, derive_seed(config.seed, &[0]))?;
    scan_from_record(record, n_max, config.resamples, config.seed)
}

/// Reconstruction and scan from an existing record. Error bars come from
/// repeating tomography `resamples` times on the reconstructed state
/// (parametric bootstrap), with `HH+HV+VV+VH` taken as the trials per setting.
pub fn scan_from_record(record: TomographyRecord, n_max: usize, resamples: usize, seed: u64) -> Result<TomographyScan> {
    let state = reconstruct_state(&record)?;
    let reports = scan_dimensions(&state, n_max)?;
    let trials = TOMOGRAPHY_SETTINGS[..4]
        .iter()
        .map(|&s| record.count(s).expect("validated"))
        .sum::<f64>()
        .round()
        .max(1.0) as u64;
    let replicates = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let rec_b = simulate_tomography(&state, trials, derive_seed(seed, &[1, b as u64]))?;
            let pair_b = reconstruct_state(&rec_b)?;
            Ok(scan_dimensions(&pair_b, n_max)?.into_iter().map(|r| r.value).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let reports = reports
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let vals: Vec<f64> = replicates.iter().map(|v| v[i]).collect();
            match sample_std(&vals) {
                Some(s) => r.with_stderr(s),
                None => r,
            }
        })
        .collect();
    Ok(TomographyScan { record, state, reports })
}
