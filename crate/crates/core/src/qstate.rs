//! State representations for bipartite qudits built from qubit pairs.
//!
//! Index convention: a party-local index `j` of an N-qubit register is
//! `j = Σ_m j_m 2^(N-m)`, so qubit 1 is the most significant bit. A
//! bipartite state over `d × d` is stored party-blocked, `|j⟩_A ⊗ |j'⟩_B`
//! at position `j·d + j'`. [`interleaved_to_blocked`] maps from the
//! pair-by-pair ordering `(A1, B1, A2, B2, …)` used when tensoring pairs.

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Equality tolerance for normalization, Hermiticity and trace.
pub const TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted as numerically positive semidefinite.
pub const PSD_TOL: f64 = -1e-10;
/// Largest per-party dimension for which dense bipartite objects are built.
pub const DENSE_CAP: usize = 64;

/// Number of qubits `N` such that `d = 2^N`, rejecting anything else.
pub fn qubit_count(d: usize) -> Result<usize> {
    if d < 2 || !d.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(d));
    }
    Ok(d.trailing_zeros() as usize)
}

pub(crate) fn check_dense(d: usize) -> Result<usize> {
    let n = qubit_count(d)?;
    if d > DENSE_CAP {
        return Err(Error::OverCap {
            d,
            cap: DENSE_CAP,
            what: "dense states",
        });
    }
    Ok(n)
}

/// Normalized ket.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm2: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if amplitudes.is_empty() || (norm2 - 1.0).abs() > TOL {
            return Err(Error::NotNormalized(norm2));
        }
        Ok(Self { amplitudes })
    }

    /// Builds a state from arbitrary nonzero amplitudes, rescaling to unit norm.
    pub fn normalized(mut amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm2: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if norm2 == 0.0 || !norm2.is_finite() {
            return Err(Error::NotNormalized(norm2));
        }
        let s = norm2.sqrt().recip();
        amplitudes.iter_mut().for_each(|a| *a *= s);
        Ok(Self { amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Phase-insensitive overlap `|⟨self|other⟩|²`.
    pub fn overlap(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    pub fn tensor(&self, other: &StateVector) -> StateVector {
        let amplitudes = self
            .amplitudes
            .iter()
            .flat_map(|a| other.amplitudes.iter().map(move |b| a * b))
            .collect();
        StateVector { amplitudes }
    }

    /// Reorders amplitudes with `new[perm(i)] = old[i]`.
    pub fn permuted(&self, perm: impl Fn(usize) -> usize) -> StateVector {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); self.dim()];
        for (i, a) in self.amplitudes.iter().enumerate() {
            amplitudes[perm(i)] = *a;
        }
        StateVector { amplitudes }
    }

    pub fn projector(&self) -> DensityOperator {
        let n = self.dim();
        let matrix = DMatrix::from_fn(n, n, |i, j| self.amplitudes[i] * self.amplitudes[j].conj());
        DensityOperator { matrix }
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: DMatrix<Complex64>,
}

impl DensityOperator {
    /// Validates Hermiticity, trace and positivity.
    pub fn new(matrix: DMatrix<Complex64>) -> Result<Self> {
        let rho = Self { matrix };
        rho.validate()?;
        Ok(rho)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let matrix = DMatrix::from_diagonal_element(dim, dim, Complex64::new(1.0 / dim as f64, 0.0));
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.matrix.nrows();
        if n == 0 || self.matrix.ncols() != n {
            return Err(Error::DimMismatch {
                expected: n,
                got: self.matrix.ncols(),
            });
        }
        let mut herm = 0.0f64;
        for i in 0..n {
            for j in i..n {
                herm = herm.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        if herm > TOL {
            return Err(Error::NotHermitian(herm));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > TOL {
            return Err(Error::BadTrace(tr));
        }
        let min = self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min < PSD_TOL {
            return Err(Error::NotPsd(min));
        }
        Ok(())
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `p·self + (1-p)·other`.
    pub fn mix(&self, p: f64, other: &DensityOperator) -> Result<DensityOperator> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRange {
                name: "mixing weight",
                value: p,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let matrix = self.matrix.scale(p) + other.matrix.scale(1.0 - p);
        Ok(DensityOperator { matrix })
    }

    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        DensityOperator {
            matrix: self.matrix.kronecker(&other.matrix),
        }
    }

    /// Reorders basis states with `new[perm(i)][perm(j)] = old[i][j]`.
    pub fn permuted(&self, perm: impl Fn(usize) -> usize) -> DensityOperator {
        let n = self.dim();
        let idx: Vec<usize> = (0..n).map(&perm).collect();
        let mut matrix = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                matrix[(idx[i], idx[j])] = self.matrix[(i, j)];
            }
        }
        DensityOperator { matrix }
    }

    /// Traces out the second factor of a `dim_a × dim_b` bipartition.
    pub fn partial_trace_second(&self, dim_a: usize, dim_b: usize) -> Result<DensityOperator> {
        self.check_split(dim_a, dim_b)?;
        let matrix = DMatrix::from_fn(dim_a, dim_a, |i, j| {
            (0..dim_b)
                .map(|k| self.matrix[(i * dim_b + k, j * dim_b + k)])
                .sum()
        });
        Ok(DensityOperator { matrix })
    }

    /// Traces out the first factor of a `dim_a × dim_b` bipartition.
    pub fn partial_trace_first(&self, dim_a: usize, dim_b: usize) -> Result<DensityOperator> {
        self.check_split(dim_a, dim_b)?;
        let matrix = DMatrix::from_fn(dim_b, dim_b, |i, j| {
            (0..dim_a)
                .map(|k| self.matrix[(k * dim_b + i, k * dim_b + j)])
                .sum()
        });
        Ok(DensityOperator { matrix })
    }

    fn check_split(&self, dim_a: usize, dim_b: usize) -> Result<()> {
        if dim_a * dim_b != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: dim_a * dim_b,
            });
        }
        Ok(())
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn expectation(&self, psi: &StateVector) -> Result<Complex64> {
        if psi.dim() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: psi.dim(),
            });
        }
        let a = psi.amplitudes();
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, ai) in a.iter().enumerate() {
            let row: Complex64 = (0..a.len()).map(|j| self.matrix[(i, j)] * a[j]).sum();
            acc += ai.conj() * row;
        }
        Ok(acc)
    }
}

/// Two-qubit state of one A-qubit and one B-qubit, basis `|00⟩,|01⟩,|10⟩,|11⟩`
/// with `0 ≡ H` and `1 ≡ V`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairState(DensityOperator);

impl PairState {
    pub fn new(rho: DensityOperator) -> Result<Self> {
        if rho.dim() != 4 {
            return Err(Error::DimMismatch {
                expected: 4,
                got: rho.dim(),
            });
        }
        rho.validate()?;
        Ok(Self(rho))
    }

    pub fn from_matrix4(m: &Matrix4<Complex64>) -> Result<Self> {
        Self::new(DensityOperator::new(DMatrix::from_fn(4, 4, |i, j| m[(i, j)]))?)
    }

    pub fn ideal() -> Self {
        Self(bell_pair().projector())
    }

    pub fn maximally_mixed() -> Self {
        Self(DensityOperator::maximally_mixed(4))
    }

    pub fn density(&self) -> &DensityOperator {
        &self.0
    }

    pub fn to_matrix4(&self) -> Matrix4<Complex64> {
        Matrix4::from_fn(|i, j| self.0.matrix()[(i, j)])
    }

    /// Convex mixture `p·self + (1-p)·other`.
    pub fn mix(&self, p: f64, other: &PairState) -> Result<PairState> {
        Ok(PairState(self.0.mix(p, &other.0)?))
    }

    /// `ρ^{⊗N}` in party-blocked order over `d = 2^N` per side.
    pub fn ensemble(&self, n_pairs: usize) -> Result<DensityOperator> {
        check_dense(1 << n_pairs)?;
        let mut rho = self.0.clone();
        for _ in 1..n_pairs {
            rho = rho.tensor(&self.0);
        }
        Ok(rho.permuted(|i| interleaved_to_blocked(i, n_pairs)))
    }
}

/// Per-pair noise applied identically to every pair.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Ideal,
    Werner { visibility: f64 },
    Custom(PairState),
}

impl NoiseModel {
    pub fn werner(visibility: f64) -> Result<Self> {
        check_unit("visibility", visibility)?;
        Ok(NoiseModel::Werner { visibility })
    }

    /// Werner model reaching pair fidelity `f` with `|φ⟩`.
    pub fn from_fidelity(f: f64) -> Result<Self> {
        check_fidelity_range(f)?;
        Ok(NoiseModel::Werner {
            visibility: visibility_from_fidelity(f),
        })
    }

    pub fn pair_state(&self) -> Result<PairState> {
        match self {
            NoiseModel::Ideal => Ok(PairState::ideal()),
            NoiseModel::Werner { visibility } => werner(*visibility),
            NoiseModel::Custom(p) => Ok(p.clone()),
        }
    }
}

impl Serialize for NoiseModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        #[serde(tag = "kind", rename_all = "snake_case")]
        enum Repr {
            Ideal,
            Werner { visibility: f64 },
            Custom { matrix: Vec<[f64; 2]> },
        }
        let repr = match self {
            NoiseModel::Ideal => Repr::Ideal,
            NoiseModel::Werner { visibility } => Repr::Werner {
                visibility: *visibility,
            },
            NoiseModel::Custom(p) => Repr::Custom {
                matrix: p
                    .density()
                    .matrix()
                    .transpose()
                    .iter()
                    .map(|z| [z.re, z.im])
                    .collect(),
            },
        };
        repr.serialize(s)
    }
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::OutOfRange {
            name,
            value: v,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(())
}

fn check_fidelity_range(f: f64) -> Result<()> {
    if !(0.25..=1.0).contains(&f) {
        return Err(Error::OutOfRange {
            name: "pair fidelity",
            value: f,
            lo: 0.25,
            hi: 1.0,
        });
    }
    Ok(())
}

/// `V = (4F - 1) / 3`.
pub fn visibility_from_fidelity(f: f64) -> f64 {
    (4.0 * f - 1.0) / 3.0
}

/// `|φ⟩ = (|00⟩ + |11⟩)/√2`.
pub fn bell_pair() -> StateVector {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    StateVector {
        amplitudes: vec![
            Complex64::new(h, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(h, 0.0),
        ],
    }
}

/// `(1/√d) Σ_j |j⟩_A|j⟩_B` in party-blocked order.
pub fn max_entangled(d: usize) -> Result<StateVector> {
    check_dense(d)?;
    let a = Complex64::new((d as f64).sqrt().recip(), 0.0);
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); d * d];
    for j in 0..d {
        amplitudes[j * d + j] = a;
    }
    Ok(StateVector { amplitudes })
}

/// Maps an index in pair order `(A1, B1, …, AN, BN)` to party-blocked order
/// `(A1, …, AN, B1, …, BN)`; the leftmost qubit is the most significant bit.
pub fn interleaved_to_blocked(index: usize, n_pairs: usize) -> usize {
    let (mut a, mut b) = (0usize, 0usize);
    for m in 0..n_pairs {
        let shift = 2 * (n_pairs - 1 - m);
        a = (a << 1) | ((index >> (shift + 1)) & 1);
        b = (b << 1) | ((index >> shift) & 1);
    }
    (a << n_pairs) | b
}

/// Isotropic pair state `V|φ⟩⟨φ| + (1-V) I/4`.
pub fn werner(visibility: f64) -> Result<PairState> {
    check_unit("visibility", visibility)?;
    let pure = bell_pair().projector();
    let mixed = DensityOperator::maximally_mixed(4);
    Ok(PairState(pure.mix(visibility, &mixed)?))
}

pub fn werner_from_fidelity(f: f64) -> Result<PairState> {
    check_fidelity_range(f)?;
    // Clamp guards V slightly outside [0,1] from rounding at the endpoints.
    werner(visibility_from_fidelity(f).clamp(0.0, 1.0))
}

/// `⟨ψ|ρ|ψ⟩`.
pub fn fidelity(rho: &DensityOperator, psi: &StateVector) -> Result<f64> {
    Ok(rho.expectation(psi)?.re)
}

/// `F_pair^N`: fidelity of `ρ^{⊗N}` with the N-pair maximally entangled
/// state under the homogeneous-pair approximation.
pub fn ensemble_fidelity(f_pair: f64, n_pairs: u32) -> Result<f64> {
    check_unit("pair fidelity", f_pair)?;
    if n_pairs == 0 {
        return Err(Error::IndexOutOfRange {
            name: "pair count",
            value: 0,
            limit: 1,
        });
    }
    Ok(f_pair.powi(n_pairs as i32))
}

fn hermitian_sqrt(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = SymmetricEigen::new(m.clone());
    let v = &eig.eigenvectors;
    let s = DMatrix::from_diagonal(
        &eig.eigenvalues
            .map(|x| Complex64::new(x.max(0.0).sqrt(), 0.0)),
    );
    v * s * v.adjoint()
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²` between two mixed states.
pub fn state_fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimMismatch {
            expected: rho.dim(),
            got: sigma.dim(),
        });
    }
    let sr = hermitian_sqrt(rho.matrix());
    let inner = &sr * sigma.matrix() * &sr;
    let inner = (&inner + inner.adjoint()).scale(0.5);
    let tr: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|x| x.max(0.0).sqrt())
        .sum();
    Ok(tr * tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn bell_pair_amplitudes() {
        let phi = bell_pair();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let want = [h, 0.0, 0.0, h];
        for (a, w) in phi.amplitudes().iter().zip(want) {
            assert!(close(a.re, w, 1e-15) && a.im == 0.0);
        }
        assert!(close(phi.norm_sqr(), 1.0, 1e-15));
    }

    #[test]
    fn bell_pair_reduced_state_is_maximally_mixed() {
        let rho = bell_pair().projector();
        for red in [
            rho.partial_trace_first(2, 2).unwrap(),
            rho.partial_trace_second(2, 2).unwrap(),
        ] {
            let ev = red.eigenvalues();
            assert!(close(ev[0], 0.5, 1e-12) && close(ev[1], 0.5, 1e-12));
        }
    }

    #[test]
    fn max_entangled_small_cases() {
        let ov = max_entangled(2).unwrap().overlap(&bell_pair()).unwrap();
        assert!(close(ov, 1.0, 1e-15));
        let s = max_entangled(4).unwrap();
        for (i, a) in s.amplitudes().iter().enumerate() {
            let want = if i % 5 == 0 { 0.5 } else { 0.0 };
            assert!(close(a.re, want, 1e-15) && a.im == 0.0);
        }
    }

    #[test]
    fn max_entangled_rejects_bad_dimensions() {
        assert_eq!(max_entangled(6), Err(Error::NotPowerOfTwo(6)));
        assert_eq!(max_entangled(1), Err(Error::NotPowerOfTwo(1)));
        assert!(matches!(max_entangled(128), Err(Error::OverCap { .. })));
    }

    #[test]
    fn interleave_permutation_two_pairs() {
        // (A1,B1,A2,B2) -> (A1,A2,B1,B2): bit pattern 0b1000 (A1) stays A1 = 0b1000,
        // 0b0100 (B1) becomes 0b0010, 0b0010 (A2) becomes 0b0100.
        assert_eq!(interleaved_to_blocked(0b1000, 2), 0b1000);
        assert_eq!(interleaved_to_blocked(0b0100, 2), 0b0010);
        assert_eq!(interleaved_to_blocked(0b0010, 2), 0b0100);
        assert_eq!(interleaved_to_blocked(0b0001, 2), 0b0001);
    }

    #[test]
    fn max_entangled_matches_permuted_pair_power() {
        for n in 1..=5usize {
            let mut prod = bell_pair();
            for _ in 1..n {
                prod = prod.tensor(&bell_pair());
            }
            let reordered = prod.permuted(|i| interleaved_to_blocked(i, n));
            let ov = reordered.overlap(&max_entangled(1 << n).unwrap()).unwrap();
            assert!(close(ov, 1.0, 1e-12), "n={n} overlap={ov}");
        }
    }

    #[test]
    fn max_entangled_marginals_are_flat() {
        for d in [2usize, 4, 8, 16, 32] {
            let rho = max_entangled(d).unwrap().projector();
            for red in [
                rho.partial_trace_first(d, d).unwrap(),
                rho.partial_trace_second(d, d).unwrap(),
            ] {
                let dev = (red.matrix() - DMatrix::from_diagonal_element(d, d, Complex64::new(1.0 / d as f64, 0.0)))
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max);
                assert!(dev <= 1e-12, "d={d} dev={dev}");
            }
        }
    }

    #[test]
    fn werner_limits() {
        let pure = werner_from_fidelity(1.0).unwrap();
        assert_eq!(pure.density(), &bell_pair().projector());
        let mixed = werner_from_fidelity(0.25).unwrap();
        let dev = (mixed.density().matrix() - DensityOperator::maximally_mixed(4).matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-15);
        assert!(close(visibility_from_fidelity(0.982), 0.976, 1e-12));
    }

    #[test]
    fn werner_rejects_out_of_range() {
        assert!(werner_from_fidelity(0.2).is_err());
        assert!(werner_from_fidelity(1.01).is_err());
        assert!(werner(-0.1).is_err());
    }

    #[test]
    fn fidelity_examples() {
        let phi = bell_pair();
        assert!(close(fidelity(&phi.projector(), &phi).unwrap(), 1.0, 1e-12));
        assert!(close(
            fidelity(&DensityOperator::maximally_mixed(4), &phi).unwrap(),
            0.25,
            1e-12
        ));
        let w = werner_from_fidelity(0.982).unwrap();
        assert!(close(fidelity(w.density(), &phi).unwrap(), 0.982, 1e-12));
        assert!(matches!(
            fidelity(&DensityOperator::maximally_mixed(2), &phi),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn ensemble_fidelity_examples() {
        assert_eq!(ensemble_fidelity(1.0, 12).unwrap(), 1.0);
        assert!(close(ensemble_fidelity(0.982, 2).unwrap(), 0.964324, 1e-12));
        assert!(close(ensemble_fidelity(0.982, 12).unwrap(), 0.804, 5e-4));
        assert!(ensemble_fidelity(0.5, 0).is_err());
    }

    #[test]
    fn validation_catches_bad_matrices() {
        let mut m = DMatrix::from_diagonal_element(2, 2, Complex64::new(0.5, 0.0));
        m[(0, 1)] = Complex64::new(0.1, 0.0);
        assert!(matches!(DensityOperator::new(m.clone()), Err(Error::NotHermitian(_))));
        m[(1, 0)] = Complex64::new(0.1, 0.0);
        assert!(DensityOperator::new(m.clone()).is_ok());
        m[(0, 0)] = Complex64::new(0.6, 0.0);
        assert!(matches!(DensityOperator::new(m.clone()), Err(Error::BadTrace(_))));
        let neg = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(1.2, 0.0),
            Complex64::new(-0.2, 0.0),
        ]));
        assert!(matches!(DensityOperator::new(neg), Err(Error::NotPsd(_))));
    }

    #[test]
    fn ensemble_is_valid_and_has_power_fidelity() {
        let w = werner_from_fidelity(0.9).unwrap();
        let rho = w.ensemble(2).unwrap();
        rho.validate().unwrap();
        let f = fidelity(&rho, &max_entangled(4).unwrap()).unwrap();
        assert!(close(f, 0.81, 1e-12));
    }

    #[test]
    fn uhlmann_fidelity_reduces_to_overlap_for_pure() {
        let w = werner_from_fidelity(0.9).unwrap();
        let f = state_fidelity(w.density(), &bell_pair().projector()).unwrap();
        // square roots of zero eigenvalues cost ~1e-8 of precision
        assert!(close(f, 0.9, 1e-7), "{f}");
        let g = state_fidelity(w.density(), w.density()).unwrap();
        assert!(close(g, 1.0, 1e-7));
    }
}
