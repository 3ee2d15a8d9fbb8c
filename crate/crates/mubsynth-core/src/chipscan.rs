//! FBG chip-truncation analysis.
//!
//! The spectral-phase parameterization keeps every grating exactly unitary
//! but says nothing about how many impulse-response chips actually matter. To
//! find out, all but a centered subset of chips are forced to zero — chip 0
//! plus `(K-1)/2` predecessors and successors, with negative delays read at
//! the top of the circular index range — and the MUB error is recomputed.
//! Dropped chips are genuine loss: nothing is renormalized, so infeasible
//! truncations show up as degraded detection rather than being masked.

use alloc::format;
use alloc::vec::Vec;

use crate::cascade::{self};
use crate::matrix::C64;
use crate::mub::{self, TransferSet};
use crate::optimize::SolutionSet;
use crate::{Error, Result};

/// MUB error as a function of retained chip count.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipSweepResult {
    /// Retained chip counts: 1, 3, 5, ... capped by `S` (the final entry
    /// always retains every chip).
    pub chip_counts: Vec<usize>,
    /// MUB error at each count.
    pub mse: Vec<f64>,
    /// Error of the untruncated solution.
    pub full_mse: f64,
}

/// Rebuild the device with only `k` chips per FBG: indices
/// `{0, ±1, ..., ±(k-1)/2}` modulo `S` survive, the rest are zeroed.
///
/// `k` must be odd (symmetric growth around chip 0); `k = S` is accepted for
/// any parity and retains everything.
pub fn truncate_chips(solution: &SolutionSet, k: usize) -> Result<TransferSet> {
    let spec = *solution.spec();
    let s = spec.modes();
    if k < 1 || k > s {
        return Err(Error::invalid(format!("chip count {k} outside 1..={s}")));
    }
    if k % 2 == 0 && k != s {
        return Err(Error::invalid(format!(
            "chip count {k} must be odd (chips grow symmetrically around index 0)"
        )));
    }
    let chips: Vec<Vec<C64>> = solution
        .fbg()
        .iter()
        .map(|phases| {
            let full = cascade::fbg_impulse_response(phases);
            if k == s {
                return full;
            }
            let half = (k - 1) / 2;
            full.into_iter()
                .enumerate()
                .map(|(l, chip)| {
                    // distance from index 0 on the circle
                    let dist = l.min(s - l);
                    if dist <= half {
                        chip
                    } else {
                        C64::ZERO
                    }
                })
                .collect()
        })
        .collect();
    let w = (0..spec.num_bases())
        .map(|basis| {
            let eoms: Vec<&[f64]> = (0..spec.cells())
                .map(|cell| solution.eom(cell, basis).values())
                .collect();
            cascade::cascade_from_parts(&chips, &eoms)
        })
        .collect::<Result<Vec<_>>>()?;
    TransferSet::from_transfer_matrices(spec, w)
}

/// Sweep the retained chip count over 1, 3, 5, ... up to `S` and record the
/// MUB error at each point. The final point keeps all chips, so it equals
/// `full_mse` exactly.
pub fn chip_sweep(solution: &SolutionSet) -> Result<ChipSweepResult> {
    let s = solution.spec().modes();
    let mut chip_counts: Vec<usize> = (1..=s).step_by(2).collect();
    if *chip_counts.last().expect("S >= 1") != s {
        chip_counts.push(s);
    }
    let mut mse = Vec::with_capacity(chip_counts.len());
    for &k in &chip_counts {
        let transfer = truncate_chips(solution, k)?;
        mse.push(mub::epsilon_mse(transfer.windows())?);
    }
    let full_mse = *mse.last().expect("sweep is never empty");
    Ok(ChipSweepResult {
        chip_counts,
        mse,
        full_mse,
    })
}

/// Total retained chip power per cell at truncation `k`. Never exceeds 1:
/// truncation only removes power.
pub fn retained_power(solution: &SolutionSet, k: usize) -> Result<Vec<f64>> {
    let s = solution.spec().modes();
    if k < 1 || k > s || (k % 2 == 0 && k != s) {
        return Err(Error::invalid(format!("invalid chip count {k}")));
    }
    let half = (k - 1) / 2;
    Ok(solution
        .fbg()
        .iter()
        .map(|phases| {
            cascade::fbg_impulse_response(phases)
                .iter()
                .enumerate()
                .filter(|(l, _)| k == s || l.min(&(s - l)) <= &half)
                .map(|(_, chip)| chip.norm_sqr())
                .sum()
        })
        .collect())
}
