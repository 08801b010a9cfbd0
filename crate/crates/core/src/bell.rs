//! Joint outcome tables, the CGLMP expression `I_d`, and the local bound.
//!
//! Two routes produce the same quantum prediction: a dense route that
//! projects a full `d² × d²` state onto product eigenvectors, and a
//! factorized route that multiplies one two-qubit projection probability
//! per pair level. The factorized route scales to `d = 2^12` and beyond by
//! streaming only the `d` shift sums `P(A - B ≡ s mod d)` that the Bell
//! expression actually needs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurements::{eigenvector_full, qubit_phase, SettingSpec};
use crate::qstate::{check_dense, qubit_count, DensityOperator, PairState, StateVector};

/// Tolerance on `Σ P = 1` and on no-signaling marginals.
pub const TABLE_TOL: f64 = 1e-9;
/// Negative entries down to this value are rounding noise and clipped to 0.
pub const CLIP_TOL: f64 = 1e-12;
/// Largest qubit count for which a full `d × d` table is materialized.
pub const FULL_TABLE_MAX_QUBITS: usize = 12;
/// Levels materialized before depth-first streaming takes over.
pub const STREAM_LEVEL: usize = 10;
/// Hard stop for the streaming route (`4^N` leaf cells per table).
pub const MAX_STREAM_QUBITS: usize = 16;
/// Upper limit for exhaustive local-strategy enumeration (`d^4` strategies).
pub const LRT_MAX_D: usize = 16;
pub const CLASSICAL_BOUND: f64 = 2.0;

/// The four setting pairs in canonical order `(1,1), (1,2), (2,1), (2,2)`.
pub const SETTING_PAIRS: [(u8, u8); 4] = [(1, 1), (1, 2), (2, 1), (2, 2)];

fn pair_slot(a: u8, b: u8) -> usize {
    ((a - 1) * 2 + (b - 1)) as usize
}

fn clip(p: f64) -> Result<f64> {
    if p < -CLIP_TOL || p.is_nan() {
        Err(Error::NegativeProbability(p))
    } else {
        Ok(p.max(0.0))
    }
}

/// `P(A_a = k, B_b = l)` stored row-major in `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTable {
    d: usize,
    a: u8,
    b: u8,
    entries: Vec<f64>,
}

impl ProbabilityTable {
    pub fn new(d: usize, a: u8, b: u8, mut entries: Vec<f64>) -> Result<Self> {
        if !(1..=2).contains(&a) || !(1..=2).contains(&b) {
            return Err(Error::IndexOutOfRange {
                name: "setting",
                value: a.max(b) as usize,
                limit: 2,
            });
        }
        if d < 2 || entries.len() != d * d {
            return Err(Error::DimMismatch {
                expected: d * d,
                got: entries.len(),
            });
        }
        for e in entries.iter_mut() {
            *e = clip(*e)?;
        }
        let total: f64 = entries.iter().sum();
        if (total - 1.0).abs() > TABLE_TOL {
            return Err(Error::TableNotNormalized(total));
        }
        Ok(Self { d, a, b, entries })
    }

    pub fn uniform(d: usize, a: u8, b: u8) -> Result<Self> {
        Self::new(d, a, b, vec![1.0 / (d * d) as f64; d * d])
    }

    /// Deterministic outcome pair `(k, l)`.
    pub fn point_mass(d: usize, a: u8, b: u8, k: usize, l: usize) -> Result<Self> {
        if k >= d || l >= d {
            return Err(Error::IndexOutOfRange {
                name: "outcome",
                value: k.max(l),
                limit: d,
            });
        }
        let mut entries = vec![0.0; d * d];
        entries[k * d + l] = 1.0;
        Self::new(d, a, b, entries)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn settings(&self) -> (u8, u8) {
        (self.a, self.b)
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.entries[k * self.d + l]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `P(A_a = k)`.
    pub fn marginal_a(&self) -> Vec<f64> {
        self.entries.chunks(self.d).map(|row| row.iter().sum()).collect()
    }

    /// `P(B_b = l)`.
    pub fn marginal_b(&self) -> Vec<f64> {
        (0..self.d)
            .map(|l| (0..self.d).map(|k| self.get(k, l)).sum())
            .collect()
    }

    pub fn shift_profile(&self) -> ShiftProfile {
        let d = self.d;
        let probs = (0..d)
            .map(|s| (0..d).map(|l| self.get((l + s) % d, l)).sum())
            .collect();
        ShiftProfile { d, probs }
    }
}

/// `Σ_l P(A_a = (l+k) mod d, B_b = l)`, with `k` reduced modulo `d`.
pub fn aligned_prob(table: &ProbabilityTable, k: i64) -> f64 {
    let d = table.d;
    let s = k.rem_euclid(d as i64) as usize;
    (0..d).map(|l| table.get((l + s) % d, l)).sum()
}

/// Largest difference between marginals that should not depend on the
/// remote setting.
pub fn no_signaling_violation(tables: &[ProbabilityTable]) -> f64 {
    let mut worst = 0.0f64;
    for (i, t) in tables.iter().enumerate() {
        for u in &tables[i + 1..] {
            if t.d != u.d {
                return f64::INFINITY;
            }
            if t.a == u.a {
                for (x, y) in t.marginal_a().iter().zip(u.marginal_a()) {
                    worst = worst.max((x - y).abs());
                }
            }
            if t.b == u.b {
                for (x, y) in t.marginal_b().iter().zip(u.marginal_b()) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    worst
}

/// Distribution of `(A_a - B_b) mod d`; `probs[s] = aligned_prob(table, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftProfile {
    d: usize,
    probs: Vec<f64>,
}

impl ShiftProfile {
    pub fn new(probs: Vec<f64>) -> Self {
        Self {
            d: probs.len(),
            probs,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `P(A = B + k)`.
    pub fn a_minus_b(&self, k: i64) -> f64 {
        self.probs[k.rem_euclid(self.d as i64) as usize]
    }

    /// `P(B = A + k) = Σ_j P(A = j, B = j + k)`.
    pub fn b_minus_a(&self, k: i64) -> f64 {
        self.a_minus_b(-k)
    }
}

/// Eight aggregated probabilities for one `k` of the Bell sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellTerm {
    pub k: usize,
    pub weight: f64,
    /// `P(A1=B1+k), P(B1=A2+k+1), P(A2=B2+k), P(B2=A1+k)`
    pub positive: [f64; 4],
    /// `P(A1=B1-k-1), P(B1=A2-k), P(A2=B2-k-1), P(B2=A1-k-1)`
    pub negative: [f64; 4],
}

impl BellTerm {
    pub fn contribution(&self) -> f64 {
        self.weight * (self.positive.iter().sum::<f64>() - self.negative.iter().sum::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellReport {
    pub d: usize,
    pub value: f64,
    pub terms: Vec<BellTerm>,
    pub classical_bound: f64,
    pub violation: bool,
    pub stderr: Option<f64>,
}

impl BellReport {
    pub fn recompute(&self) -> f64 {
        self.terms.iter().map(BellTerm::contribution).sum()
    }

    pub fn with_stderr(mut self, stderr: f64) -> Self {
        self.stderr = Some(stderr);
        self
    }

    /// `value - stderr`, the one-sigma margin over the classical bound.
    pub fn margin(&self) -> f64 {
        self.value - self.stderr.unwrap_or(0.0) - self.classical_bound
    }
}

/// `w_k = 1 - 2k/(d-1)` for `k = 0 … floor(d/2) - 1`.
pub fn bell_weights(d: usize) -> Vec<f64> {
    (0..d / 2)
        .map(|k| 1.0 - 2.0 * k as f64 / (d as f64 - 1.0))
        .collect()
}

/// Bell expression from the shift profiles of the four setting pairs,
/// indexed `(1,1), (1,2), (2,1), (2,2)`.
pub fn bell_from_profiles(profiles: &[ShiftProfile; 4]) -> Result<BellReport> {
    let d = profiles[0].d;
    if d < 2 {
        return Err(Error::NotPowerOfTwo(d));
    }
    if let Some(p) = profiles.iter().find(|p| p.d != d) {
        return Err(Error::DimMismatch { expected: d, got: p.d });
    }
    let [p11, p12, p21, p22] = profiles;
    let terms: Vec<BellTerm> = bell_weights(d)
        .into_iter()
        .enumerate()
        .map(|(k, weight)| {
            let ki = k as i64;
            BellTerm {
                k,
                weight,
                positive: [
                    p11.a_minus_b(ki),
                    p21.b_minus_a(ki + 1),
                    p22.a_minus_b(ki),
                    p12.b_minus_a(ki),
                ],
                negative: [
                    p11.a_minus_b(-ki - 1),
                    p21.b_minus_a(-ki),
                    p22.a_minus_b(-ki - 1),
                    p12.b_minus_a(-ki - 1),
                ],
            }
        })
        .collect();
    let value = terms.iter().map(BellTerm::contribution).sum();
    Ok(BellReport {
        d,
        value,
        terms,
        classical_bound: CLASSICAL_BOUND,
        violation: value > CLASSICAL_BOUND,
        stderr: None,
    })
}

/// Bell expression over the four tables; order of the slice is free but
/// every setting pair must appear exactly once.
pub fn bell_expression(tables: &[ProbabilityTable]) -> Result<BellReport> {
    if tables.len() != 4 {
        return Err(Error::DimMismatch {
            expected: 4,
            got: tables.len(),
        });
    }
    let d = tables[0].d;
    let mut slots: [Option<ShiftProfile>; 4] = Default::default();
    for t in tables {
        if t.d != d {
            return Err(Error::DimMismatch { expected: d, got: t.d });
        }
        let slot = &mut slots[pair_slot(t.a, t.b)];
        if slot.is_some() {
            return Err(Error::IndexOutOfRange {
                name: "duplicate setting pair",
                value: pair_slot(t.a, t.b),
                limit: 4,
            });
        }
        *slot = Some(t.shift_profile());
    }
    let profiles = slots.map(|s| s.expect("four distinct pairs fill every slot"));
    bell_from_profiles(&profiles)
}

/// Coefficient `c_ab[s]` of `P(A_a - B_b ≡ s)` in `I_d`, scaled by `d - 1`
/// so that every entry is an integer.
pub fn scaled_shift_coefficients(d: usize) -> [Vec<i64>; 4] {
    let mut c: [Vec<i64>; 4] = std::array::from_fn(|_| vec![0i64; d]);
    let m = |x: i64| x.rem_euclid(d as i64) as usize;
    for k in 0..(d / 2) as i64 {
        let w = d as i64 - 1 - 2 * k;
        // (1,1): +P(A1-B1=k) -P(A1-B1=-k-1)
        c[0][m(k)] += w;
        c[0][m(-k - 1)] -= w;
        // (1,2): +P(B2-A1=k) -P(B2-A1=-k-1), i.e. A1-B2 = -k and k+1
        c[1][m(-k)] += w;
        c[1][m(k + 1)] -= w;
        // (2,1): +P(B1-A2=k+1) -P(B1-A2=-k)
        c[2][m(-k - 1)] += w;
        c[2][m(k)] -= w;
        // (2,2): +P(A2-B2=k) -P(A2-B2=-k-1)
        c[3][m(k)] += w;
        c[3][m(-k - 1)] -= w;
    }
    c
}

/// `(A_1, A_2, B_1, B_2)` fixed outputs of a local deterministic model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    pub a1: usize,
    pub a2: usize,
    pub b1: usize,
    pub b2: usize,
}

impl DeterministicStrategy {
    pub fn outputs(&self, party_a_setting: u8, party_b_setting: u8) -> (usize, usize) {
        let a = if party_a_setting == 1 { self.a1 } else { self.a2 };
        let b = if party_b_setting == 1 { self.b1 } else { self.b2 };
        (a, b)
    }

    /// Point-mass tables induced by the strategy.
    pub fn tables(&self, d: usize) -> Result<Vec<ProbabilityTable>> {
        SETTING_PAIRS
            .iter()
            .map(|&(a, b)| {
                let (k, l) = self.outputs(a, b);
                ProbabilityTable::point_mass(d, a, b, k, l)
            })
            .collect()
    }
}

/// Exhaustive maximum of `I_d` over all `d^4` deterministic local strategies.
/// Scores are exact integers over `d - 1`; ties resolve to the first strategy
/// in lexicographic `(a1, a2, b1, b2)` order.
pub fn lrt_max(d: usize) -> Result<(f64, DeterministicStrategy)> {
    if d < 2 {
        return Err(Error::OutOfRange {
            name: "d",
            value: d as f64,
            lo: 2.0,
            hi: LRT_MAX_D as f64,
        });
    }
    if d > LRT_MAX_D {
        return Err(Error::OverCap {
            d,
            cap: LRT_MAX_D,
            what: "local strategy enumeration",
        });
    }
    let c = scaled_shift_coefficients(d);
    let sh = |x: usize, y: usize| (x + d - y) % d;
    let mut best = i64::MIN;
    let mut arg = DeterministicStrategy {
        a1: 0,
        a2: 0,
        b1: 0,
        b2: 0,
    };
    for a1 in 0..d {
        for a2 in 0..d {
            for b1 in 0..d {
                for b2 in 0..d {
                    let score = c[0][sh(a1, b1)] + c[1][sh(a1, b2)] + c[2][sh(a2, b1)] + c[3][sh(a2, b2)];
                    if score > best {
                        best = score;
                        arg = DeterministicStrategy { a1, a2, b1, b2 };
                    }
                }
            }
        }
    }
    Ok((best as f64 / (d as f64 - 1.0), arg))
}

/// Dense route: `P(k, l) = ⟨k,l|ρ|k,l⟩` on a party-blocked `d² × d²` state.
pub fn joint_table_dense(state: &DensityOperator, d: usize, a: u8, b: u8) -> Result<ProbabilityTable> {
    check_dense(d)?;
    if state.dim() != d * d {
        return Err(Error::DimMismatch {
            expected: d * d,
            got: state.dim(),
        });
    }
    let (ea, eb) = dense_bases(d, a, b)?;
    let rho = state.matrix();
    let n = d * d;
    let mut entries = Vec::with_capacity(n);
    for va in &ea {
        for vb in &eb {
            let v: Vec<Complex64> = va
                .amplitudes()
                .iter()
                .flat_map(|x| vb.amplitudes().iter().map(move |y| x * y))
                .collect();
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..n {
                let mut row = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    row += rho[(i, j)] * v[j];
                }
                acc += v[i].conj() * row;
            }
            entries.push(acc.re);
        }
    }
    ProbabilityTable::new(d, a, b, entries)
}

/// Dense route for a pure state: `P(k, l) = |⟨k,l|ψ⟩|²`.
pub fn joint_table_pure(state: &StateVector, d: usize, a: u8, b: u8) -> Result<ProbabilityTable> {
    check_dense(d)?;
    if state.dim() != d * d {
        return Err(Error::DimMismatch {
            expected: d * d,
            got: state.dim(),
        });
    }
    let (ea, eb) = dense_bases(d, a, b)?;
    let psi = state.amplitudes();
    let mut entries = Vec::with_capacity(d * d);
    for va in &ea {
        for vb in &eb {
            let mut amp = Complex64::new(0.0, 0.0);
            for (i, x) in va.amplitudes().iter().enumerate() {
                for (j, y) in vb.amplitudes().iter().enumerate() {
                    amp += (x * y).conj() * psi[i * d + j];
                }
            }
            entries.push(amp.norm_sqr());
        }
    }
    ProbabilityTable::new(d, a, b, entries)
}

fn dense_bases(d: usize, a: u8, b: u8) -> Result<(Vec<StateVector>, Vec<StateVector>)> {
    let sa = SettingSpec::new(crate::measurements::Party::A, a)?;
    let sb = SettingSpec::new(crate::measurements::Party::B, b)?;
    let ea = (0..d).map(|k| eigenvector_full(sa, k, d)).collect::<Result<_>>()?;
    let eb = (0..d).map(|l| eigenvector_full(sb, l, d)).collect::<Result<_>>()?;
    Ok((ea, eb))
}

/// Per-level measurement phases: the qubit-m analyzer state for outcome `k`
/// is `(|0⟩ + alice[m-1][k mod 2^m] |1⟩)/√2`, each entry a unit complex
/// number; likewise for Bob.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorBases {
    pub alice: Vec<Vec<Complex64>>,
    pub bob: Vec<Vec<Complex64>>,
}

impl FactorBases {
    /// The ideal product eigenbases for setting pair `(a, b)` with `n` pairs.
    pub fn ideal(a: u8, b: u8, n: usize) -> Result<Self> {
        let sa = SettingSpec::new(crate::measurements::Party::A, a)?;
        let sb = SettingSpec::new(crate::measurements::Party::B, b)?;
        let level = |spec: SettingSpec, m: usize| -> Vec<Complex64> {
            (0..1usize << m)
                .map(|o| Complex64::from_polar(1.0, qubit_phase(spec, o, m)))
                .collect()
        };
        Ok(Self {
            alice: (1..=n).map(|m| level(sa, m)).collect(),
            bob: (1..=n).map(|m| level(sb, m)).collect(),
        })
    }

    pub fn n_levels(&self) -> usize {
        self.alice.len()
    }
}

/// Two-qubit projection onto `(1, e_a)/√2 ⊗ (1, e_b)/√2` for a fixed pair
/// state, expanded in the phases:
/// `p = ¼[Tr ρ + 2 Re((ρ01+ρ23) e_b + (ρ02+ρ13) e_a + ρ03 e_a e_b + ρ12 e_a ē_b)]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairKernel {
    diag: f64,
    cb: Complex64,
    ca: Complex64,
    cab: Complex64,
    cab_conj: Complex64,
}

impl PairKernel {
    pub(crate) fn new(pair: &PairState) -> Self {
        let r = pair.to_matrix4();
        Self {
            diag: (0..4).map(|i| r[(i, i)].re).sum(),
            cb: r[(0, 1)] + r[(2, 3)],
            ca: r[(0, 2)] + r[(1, 3)],
            cab: r[(0, 3)],
            cab_conj: r[(1, 2)],
        }
    }

    #[inline]
    pub(crate) fn prob(&self, ea: Complex64, eb: Complex64) -> f64 {
        let re = |c: Complex64, z: Complex64| c.re * z.re - c.im * z.im;
        let off = re(self.cb, eb) + re(self.ca, ea) + re(self.cab, ea * eb) + re(self.cab_conj, ea * eb.conj());
        0.25 * (self.diag + 2.0 * off)
    }

    /// Per-level probability for outcomes `(k, l)` reduced modulo `2^m`.
    #[inline]
    fn level_prob(&self, bases: &FactorBases, m: usize, k: usize, l: usize) -> f64 {
        let mask = (1usize << m) - 1;
        self.prob(bases.alice[m - 1][k & mask], bases.bob[m - 1][l & mask])
    }
}

fn check_levels(bases: &FactorBases, cap: usize, what: &'static str) -> Result<usize> {
    let n = bases.n_levels();
    if n == 0 || bases.bob.len() != n {
        return Err(Error::DimMismatch {
            expected: n.max(1),
            got: bases.bob.len(),
        });
    }
    for (i, (la, lb)) in bases.alice.iter().zip(&bases.bob).enumerate() {
        let want = 1usize << (i + 1);
        if la.len() != want || lb.len() != want {
            return Err(Error::DimMismatch {
                expected: want,
                got: la.len().min(lb.len()),
            });
        }
    }
    if n > cap {
        return Err(Error::OverCap {
            d: 1 << n.min(63),
            cap: 1 << cap,
            what,
        });
    }
    Ok(n)
}

/// Level recursion: the table at modulus `2^m` extends the table at
/// `2^(m-1)` by one per-pair factor. Entries are clipped per factor.
fn factorized_entries(kernel: &PairKernel, bases: &FactorBases, levels: usize) -> Result<Vec<f64>> {
    let mut table = vec![1.0f64];
    for m in 1..=levels {
        let side = 1usize << m;
        let half = side >> 1;
        let prev = &table;
        let mut next = vec![0.0f64; side * side];
        next.par_chunks_mut(side)
            .enumerate()
            .try_for_each(|(k, row)| -> Result<()> {
                let prev_row = &prev[(k & (half - 1)) * half..][..half];
                for (l, slot) in row.iter_mut().enumerate() {
                    let p = clip(kernel.level_prob(bases, m, k, l))?;
                    *slot = prev_row[l & (half - 1)] * p;
                }
                Ok(())
            })?;
        table = next;
    }
    Ok(table)
}

/// Factorized route over `N` identical pairs: `P(k, l) = Π_m p_m(k mod 2^m, l mod 2^m)`.
pub fn joint_table_factorized(pair: &PairState, n_pairs: usize, a: u8, b: u8) -> Result<ProbabilityTable> {
    let bases = FactorBases::ideal(a, b, n_pairs.max(1))?;
    if n_pairs == 0 {
        return Err(Error::IndexOutOfRange {
            name: "pair count",
            value: 0,
            limit: 1,
        });
    }
    joint_table_with_bases(pair, &bases, a, b)
}

/// Factorized table for arbitrary per-level measurement states.
pub fn joint_table_with_bases(pair: &PairState, bases: &FactorBases, a: u8, b: u8) -> Result<ProbabilityTable> {
    let n = check_levels(bases, FULL_TABLE_MAX_QUBITS, "full table materialization")?;
    let kernel = PairKernel::new(pair);
    let entries = factorized_entries(&kernel, bases, n)?;
    ProbabilityTable::new(1 << n, a, b, entries)
}

/// Shift profile of the factorized table without materializing it beyond
/// `2^STREAM_LEVEL` per side. Summation order is fixed by row chunks, so
/// results do not depend on the thread count.
pub fn shift_profile_factorized(pair: &PairState, bases: &FactorBases) -> Result<ShiftProfile> {
    let n = check_levels(bases, MAX_STREAM_QUBITS, "streaming profile")?;
    let kernel = PairKernel::new(pair);
    let base_levels = n.min(STREAM_LEVEL);
    let base = factorized_entries(&kernel, bases, base_levels)?;
    let base_side = 1usize << base_levels;
    let d = 1usize << n;
    if base_levels == n {
        let profile = (0..d)
            .map(|s| (0..d).map(|l| base[((l + s) % d) * d + l]).sum())
            .collect();
        return Ok(ShiftProfile { d, probs: profile });
    }

    const ROWS_PER_CHUNK: usize = 8;
    const CHUNKS_PER_BATCH: usize = 16;
    let chunk_starts: Vec<usize> = (0..base_side).step_by(ROWS_PER_CHUNK).collect();
    let mut total = vec![0.0f64; d];
    for batch in chunk_starts.chunks(CHUNKS_PER_BATCH) {
        let partials: Vec<Result<Vec<f64>>> = batch
            .par_iter()
            .map(|&k0| {
                let mut acc = vec![0.0f64; d];
                for k in k0..(k0 + ROWS_PER_CHUNK).min(base_side) {
                    for l in 0..base_side {
                        let w = base[k * base_side + l];
                        if w != 0.0 {
                            expand(&kernel, bases, base_levels + 1, n, k, l, w, &mut acc)?;
                        }
                    }
                }
                Ok(acc)
            })
            .collect();
        for part in partials {
            for (t, p) in total.iter_mut().zip(part?) {
                *t += p;
            }
        }
    }
    Ok(ShiftProfile { d, probs: total })
}

#[allow(clippy::too_many_arguments)]
fn expand(
    kernel: &PairKernel,
    bases: &FactorBases,
    m: usize,
    n: usize,
    k: usize,
    l: usize,
    weight: f64,
    acc: &mut [f64],
) -> Result<()> {
    let half = 1usize << (m - 1);
    for (dk, dl) in [(0, 0), (0, half), (half, 0), (half, half)] {
        let (kk, ll) = (k + dk, l + dl);
        let w = weight * clip(kernel.level_prob(bases, m, kk, ll))?;
        if m == n {
            let d = acc.len();
            acc[(kk + d - ll) % d] += w;
        } else if w != 0.0 {
            expand(kernel, bases, m + 1, n, kk, ll, w, acc)?;
        }
    }
    Ok(())
}

/// `I_d = Tr[Î_d ρ^{⊗N}]` evaluated through the per-pair factorization.
pub fn bell_operator_trace(pair: &PairState, n_pairs: usize) -> Result<BellReport> {
    if n_pairs == 0 {
        return Err(Error::IndexOutOfRange {
            name: "pair count",
            value: 0,
            limit: 1,
        });
    }
    let profiles = SETTING_PAIRS
        .iter()
        .map(|&(a, b)| shift_profile_factorized(pair, &FactorBases::ideal(a, b, n_pairs)?))
        .collect::<Result<Vec<_>>>()?;
    let profiles: [ShiftProfile; 4] = profiles.try_into().expect("four setting pairs");
    bell_from_profiles(&profiles)
}

/// One report per `d = 2, 4, …, 2^n_max`.
pub fn scan_dimensions(pair: &PairState, n_max: usize) -> Result<Vec<BellReport>> {
    if n_max > FULL_TABLE_MAX_QUBITS {
        return Err(Error::OverCap {
            d: 1 << n_max.min(63),
            cap: 1 << FULL_TABLE_MAX_QUBITS,
            what: "dimension scan",
        });
    }
    (1..=n_max).map(|n| bell_operator_trace(pair, n)).collect()
}

/// Explicit Bell operator `Î_d = Σ_ab Σ_kl c_ab[(k-l) mod d] |k⟩⟨k| ⊗ |l⟩⟨l|`
/// in party-blocked order.
pub fn bell_operator(d: usize) -> Result<DMatrix<Complex64>> {
    check_dense(d)?;
    qubit_count(d)?;
    let coeffs = scaled_shift_coefficients(d);
    let scale = 1.0 / (d as f64 - 1.0);
    let n = d * d;
    let mut op = DMatrix::<Complex64>::zeros(n, n);
    for (slot, &(a, b)) in SETTING_PAIRS.iter().enumerate() {
        let (ea, eb) = dense_bases(d, a, b)?;
        for (k, va) in ea.iter().enumerate() {
            for (l, vb) in eb.iter().enumerate() {
                let c = coeffs[slot][(k + d - l) % d];
                if c == 0 {
                    continue;
                }
                let v: Vec<Complex64> = va
                    .amplitudes()
                    .iter()
                    .flat_map(|x| vb.amplitudes().iter().map(move |y| x * y))
                    .collect();
                let w = c as f64 * scale;
                for i in 0..n {
                    for j in 0..n {
                        op[(i, j)] += v[i] * v[j].conj() * w;
                    }
                }
            }
        }
    }
    Ok(op)
}

/// `Tr[op ρ]`.
pub fn operator_expectation(op: &DMatrix<Complex64>, rho: &DensityOperator) -> Result<f64> {
    if op.nrows() != rho.dim() {
        return Err(Error::DimMismatch {
            expected: op.nrows(),
            got: rho.dim(),
        });
    }
    Ok((op * rho.matrix()).trace().re)
}
