//! Measurement eigenbases for the two CGLMP settings per party, in full
//! dimension and as per-qubit products, plus their compilation to
//! half-wave-plate angles.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::fmt;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{check_dense, qubit_count, StateVector};

/// Fixed QWP angle used for every qubit.
pub const QWP_ANGLE: f64 = -PI / 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Party {
    A,
    B,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::A => f.write_str("A"),
            Party::B => f.write_str("B"),
        }
    }
}

/// One of the four local measurements `A_1, A_2, B_1, B_2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SettingSpec {
    party: Party,
    setting: u8,
}

impl SettingSpec {
    pub fn new(party: Party, setting: u8) -> Result<Self> {
        if !(1..=2).contains(&setting) {
            return Err(Error::IndexOutOfRange {
                name: "setting",
                value: setting as usize,
                limit: 2,
            });
        }
        Ok(Self { party, setting })
    }

    pub const fn alice(setting: u8) -> Self {
        assert!(setting == 1 || setting == 2);
        Self {
            party: Party::A,
            setting,
        }
    }

    pub const fn bob(setting: u8) -> Self {
        assert!(setting == 1 || setting == 2);
        Self {
            party: Party::B,
            setting,
        }
    }

    pub fn all() -> [SettingSpec; 4] {
        [Self::alice(1), Self::alice(2), Self::bob(1), Self::bob(2)]
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn setting(&self) -> u8 {
        self.setting
    }

    /// Phase offset in quarters: α = (0, 2)/4 for A, β = (1, -1)/4 for B.
    pub fn phase_quarters(&self) -> i32 {
        match (self.party, self.setting) {
            (Party::A, 1) => 0,
            (Party::A, _) => 2,
            (Party::B, 1) => 1,
            (Party::B, _) => -1,
        }
    }

    pub fn phase(&self) -> f64 {
        self.phase_quarters() as f64 / 4.0
    }

    /// Signed outcome-plus-offset `k + α` (A) or `-l + β` (B) with the
    /// outcome reduced modulo `modulus`.
    fn shifted(&self, outcome: usize, modulus: usize) -> f64 {
        let o = (outcome % modulus) as f64;
        match self.party {
            Party::A => o + self.phase(),
            Party::B => -o + self.phase(),
        }
    }
}

fn check_outcome(outcome: usize, d: usize) -> Result<()> {
    if outcome >= d {
        return Err(Error::IndexOutOfRange {
            name: "outcome",
            value: outcome,
            limit: d,
        });
    }
    Ok(())
}

/// Relative phase of `|1⟩` in the qubit-`m` factor (m is 1-based).
pub fn qubit_phase(spec: SettingSpec, outcome: usize, m: usize) -> f64 {
    let modulus = 1usize << m;
    TAU / modulus as f64 * spec.shifted(outcome, modulus)
}

/// `(|0⟩ + e^{iφ}|1⟩)/√2`.
pub fn phase_qubit(phase: f64) -> [Complex64; 2] {
    [
        Complex64::new(FRAC_1_SQRT_2, 0.0),
        Complex64::from_polar(FRAC_1_SQRT_2, phase),
    ]
}

/// Full d-dimensional eigenvector `(1/√d) Σ_j e^{i 2π j (k+α)/d} |j⟩`
/// (argument `-l+β` for B).
pub fn eigenvector_full(spec: SettingSpec, outcome: usize, d: usize) -> Result<StateVector> {
    check_dense(d)?;
    check_outcome(outcome, d)?;
    let norm = (d as f64).sqrt().recip();
    let o = outcome as i64;
    let amplitudes = (0..d as i64)
        .map(|j| {
            let whole = match spec.party {
                Party::A => (j * o).rem_euclid(d as i64),
                Party::B => (-j * o).rem_euclid(d as i64),
            } as f64;
            let arg = TAU / d as f64 * (whole + j as f64 * spec.phase());
            Complex64::from_polar(norm, arg)
        })
        .collect();
    StateVector::new(amplitudes)
}

/// Eigenvector as a tensor product of one qubit state per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductBasisVector {
    pub spec: SettingSpec,
    pub outcome: usize,
    pub d: usize,
    /// `factors[m-1]` is the qubit-m state; qubit 1 is most significant.
    pub factors: Vec<[Complex64; 2]>,
}

impl ProductBasisVector {
    pub fn n_qubits(&self) -> usize {
        self.factors.len()
    }

    /// Dense tensor product of the factors.
    pub fn to_dense(&self) -> Result<StateVector> {
        check_dense(self.d)?;
        let mut amps = vec![Complex64::new(1.0, 0.0)];
        for f in &self.factors {
            amps = amps
                .iter()
                .flat_map(|a| f.iter().map(move |b| a * b))
                .collect();
        }
        StateVector::new(amps)
    }
}

pub fn eigenvector_product(spec: SettingSpec, outcome: usize, d: usize) -> Result<ProductBasisVector> {
    let n = qubit_count(d)?;
    check_outcome(outcome, d)?;
    Ok(product_factors(spec, outcome, n, d))
}

fn product_factors(spec: SettingSpec, outcome: usize, n: usize, d: usize) -> ProductBasisVector {
    let factors = (1..=n)
        .map(|m| phase_qubit(qubit_phase(spec, outcome, m)))
        .collect();
    ProductBasisVector {
        spec,
        outcome,
        d,
        factors,
    }
}

/// Unchecked variant used for phase-periodicity checks with outcomes `≥ d`.
pub fn eigenvector_product_wrapping(spec: SettingSpec, outcome: usize, d: usize) -> Result<ProductBasisVector> {
    let n = qubit_count(d)?;
    Ok(product_factors(spec, outcome, n, d))
}

/// Half-wave plate `cos2θ (|H⟩⟨H| - |V⟩⟨V|) - sin2θ (|H⟩⟨V| + |V⟩⟨H|)`.
pub fn hwp_matrix(theta: f64) -> Matrix2<Complex64> {
    let (s, c) = (2.0 * theta).sin_cos();
    Matrix2::new(
        Complex64::new(c, 0.0),
        Complex64::new(-s, 0.0),
        Complex64::new(-s, 0.0),
        Complex64::new(-c, 0.0),
    )
}

/// Quarter-wave plate as printed: `[i - cos2γ, sin2γ; sin2γ, i + cos2γ]`.
/// Unitary only after scaling by `1/√2`.
pub fn qwp_matrix(gamma: f64) -> Matrix2<Complex64> {
    let (s, c) = (2.0 * gamma).sin_cos();
    Matrix2::new(
        Complex64::new(-c, 1.0),
        Complex64::new(s, 0.0),
        Complex64::new(s, 0.0),
        Complex64::new(c, 1.0),
    )
}

/// `U(θ) = H(θ) Q(-π/4) / √2`.
pub fn waveplate_unitary(theta: f64) -> Matrix2<Complex64> {
    (hwp_matrix(theta) * qwp_matrix(QWP_ANGLE)).scale(FRAC_1_SQRT_2)
}

/// Qubit state that `U(θ)` sends to `|H⟩`, i.e. `U(θ)†|H⟩`.
pub fn analyzer_state(theta: f64) -> [Complex64; 2] {
    let u = waveplate_unitary(theta);
    [u[(0, 0)].conj(), u[(0, 1)].conj()]
}

/// Relative phase `φ` of the state `(|0⟩ + e^{iφ}|1⟩)/√2` sent to `|H⟩` by
/// `U(θ)`; the V port of the same setting measures `φ + π`.
pub fn analyzer_phase(theta: f64) -> f64 {
    -(4.0 * theta + PI / 2.0)
}

/// `|⟨H|U(θ)|ψ⟩|²`.
pub fn horizontal_projection(theta: f64, psi: &[Complex64; 2]) -> f64 {
    let u = waveplate_unitary(theta);
    (u[(0, 0)] * psi[0] + u[(0, 1)] * psi[1]).norm_sqr()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveplateSetting {
    pub qubit: usize,
    pub theta_hwp: f64,
    pub gamma_qwp: f64,
}

/// HWP angle `-π/8 - 2π(k+α)/(4·2^m)` (A) or `-π/8 - 2π(-l+β)/(4·2^m)` (B)
/// that rotates the qubit-`m` factor onto `|H⟩`.
pub fn compile_angles(spec: SettingSpec, outcome: usize, qubit: usize, d: usize) -> Result<WaveplateSetting> {
    let n = qubit_count(d)?;
    check_outcome(outcome, d)?;
    if qubit == 0 || qubit > n {
        return Err(Error::IndexOutOfRange {
            name: "qubit",
            value: qubit,
            limit: n,
        });
    }
    Ok(WaveplateSetting {
        qubit,
        theta_hwp: hwp_angle(spec, outcome, qubit),
        gamma_qwp: QWP_ANGLE,
    })
}

pub(crate) fn hwp_angle(spec: SettingSpec, outcome: usize, qubit: usize) -> f64 {
    let modulus = 1usize << qubit;
    -PI / 8.0 - TAU * spec.shifted(outcome, modulus) / (4.0 * modulus as f64)
}

/// Distinct HWP settings one party needs per measurement: outcomes `k` and
/// `k + 2^(m-1)` share the qubit-m setting (H vs V port), so `Σ 2^(m-1) = d-1`.
pub fn hwp_setting_count(d: usize) -> Result<usize> {
    qubit_count(d)?;
    Ok(d - 1)
}

/// One row of the full wave-plate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleRow {
    pub party: Party,
    pub setting: u8,
    pub outcome: usize,
    pub qubit_m: usize,
    pub theta_hwp_rad: f64,
    pub gamma_qwp_rad: f64,
}

/// Every (party, setting, outcome, qubit) HWP/QWP pair for dimension `d`.
pub fn waveplate_schedule(d: usize) -> Result<Vec<ScheduleRow>> {
    let n = qubit_count(d)?;
    let mut rows = Vec::with_capacity(4 * d * n);
    for spec in SettingSpec::all() {
        for outcome in 0..d {
            for m in 1..=n {
                let w = compile_angles(spec, outcome, m, d)?;
                rows.push(ScheduleRow {
                    party: spec.party,
                    setting: spec.setting,
                    outcome,
                    qubit_m: m,
                    theta_hwp_rad: w.theta_hwp,
                    gamma_qwp_rad: w.gamma_qwp,
                });
            }
        }
    }
    Ok(rows)
}
