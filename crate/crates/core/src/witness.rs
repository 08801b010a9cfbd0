//! Schmidt-number witness from the fidelity with the maximally entangled
//! state: `F > (γ - 1)/d` certifies Schmidt number at least `γ`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::qstate::ensemble_fidelity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitnessResult {
    pub d: usize,
    pub fidelity: f64,
    /// Largest certified lower bound `S_L(d)`, `1` when nothing is certified.
    pub bound: usize,
    pub certified: bool,
}

/// The witness condition for a single `γ`, with the strict inequality.
pub fn witness_holds(fidelity: f64, gamma: usize, d: usize) -> bool {
    fidelity > (gamma as f64 - 1.0) / d as f64
}

/// `max{γ ∈ [1, d] : F > (γ-1)/d}`, or `1` if no `γ` qualifies.
pub fn schmidt_lower_bound(fidelity: f64, d: usize) -> Result<WitnessResult> {
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(Error::OutOfRange {
            name: "fidelity",
            value: fidelity,
            lo: 0.0,
            hi: 1.0,
        });
    }
    if d < 2 {
        return Err(Error::OutOfRange {
            name: "d",
            value: d as f64,
            lo: 2.0,
            hi: f64::INFINITY,
        });
    }
    // floor(F·d) + 1, then settle on the exact predicate so rounding in F·d
    // cannot disagree with the comparison itself.
    let mut gamma = ((fidelity * d as f64).floor() as usize + 1).clamp(1, d);
    while gamma > 1 && !witness_holds(fidelity, gamma, d) {
        gamma -= 1;
    }
    while gamma < d && witness_holds(fidelity, gamma + 1, d) {
        gamma += 1;
    }
    Ok(WitnessResult {
        d,
        fidelity,
        bound: gamma,
        certified: gamma >= 2,
    })
}

/// Witness for `d = 2, 4, …, 2^n_max` with `F_Φ(d) = F_pair^N`.
pub fn witness_sweep(f_pair: f64, n_max: u32) -> Result<Vec<WitnessResult>> {
    (1..=n_max)
        .map(|n| schmidt_lower_bound(ensemble_fidelity(f_pair, n)?, 1usize << n))
        .collect()
}
