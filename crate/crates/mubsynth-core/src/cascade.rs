//! Truncated time-bin transfer matrices of an EOM/FBG cascade.
//!
//! The infinite ladder of time bins is clipped to `S` modes treated as
//! circular: a coded FBG becomes a circulant unitary `C = F† D̃ F` built from
//! `S` spectral phases, an EOM a diagonal unitary of `S` temporal phases, and
//! one device configuration the product
//!
//! ```text
//! W = C_N D_N · C_{N-1} D_{N-1} · ... · C_1 D_1
//! ```
//!
//! applied right-to-left (the first EOM acts first). Every factor is unitary
//! by construction, so `W` is as well; truncation artifacts show up only as
//! weight near the wrap-around seam, which [`crate::optimize::leakage`]
//! monitors. The computational transformation is the `d x d` window
//! `V[l][k] = W[offset + l][k]`.

use alloc::format;
use alloc::vec::Vec;

// f64 math through libm when built without std; in graphs where std is
// present the inherent methods shadow the trait and this import goes unused.
#[allow(unused_imports)]
use num_traits::Float;

use crate::matrix::{CMatrix, C64};
use crate::optimize::SolutionSet;
use crate::{Error, Result};

const TAU: f64 = core::f64::consts::TAU;

/// Reduce a phase into `[0, 2π)`.
pub fn canonical_phase(phase: f64) -> f64 {
    let r = phase - TAU * (phase / TAU).floor();
    // floor rounding can land exactly on 2π for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid(format!("{what}: empty phase vector")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what}: non-finite phase entry")));
    }
    Ok(())
}

/// Static geometry of the cascade: truncation size `S`, unit-cell count `N`,
/// qudit dimension `d`, and the offset of the `d`-bin output window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceSpec {
    modes: usize,
    cells: usize,
    dim: usize,
    output_offset: usize,
}

impl DeviceSpec {
    /// Guard ratio enforced by [`DeviceSpec::new`]: `S >= 4 d` keeps the
    /// computational window well clear of the wrap-around seam.
    pub const MIN_TRUNCATION_RATIO: usize = 4;

    pub fn new(modes: usize, cells: usize, dim: usize, output_offset: usize) -> Result<Self> {
        if modes < Self::MIN_TRUNCATION_RATIO * dim {
            return Err(Error::invalid(format!(
                "truncation size {modes} below {} * d = {} (use new_relaxed to override)",
                Self::MIN_TRUNCATION_RATIO,
                Self::MIN_TRUNCATION_RATIO * dim,
            )));
        }
        Self::new_relaxed(modes, cells, dim, output_offset)
    }

    /// Same as [`DeviceSpec::new`] but without the `S >= 4 d` truncation
    /// guard. Small-`S` constructions are useful for exercising the algebra;
    /// their windows sit next to the seam, so treat quality metrics with care.
    pub fn new_relaxed(
        modes: usize,
        cells: usize,
        dim: usize,
        output_offset: usize,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid(format!(
                "qudit dimension {dim} must be >= 2"
            )));
        }
        if cells == 0 {
            return Err(Error::invalid("unit-cell count must be >= 1"));
        }
        if modes < dim {
            return Err(Error::invalid(format!(
                "truncation size {modes} cannot hold a {dim}-bin window"
            )));
        }
        if output_offset > modes - dim {
            return Err(Error::invalid(format!(
                "output offset {output_offset} exceeds S - d = {}",
                modes - dim
            )));
        }
        Ok(DeviceSpec {
            modes,
            cells,
            dim,
            output_offset,
        })
    }

    /// Number of retained time-bin modes (`S`).
    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Number of EOM/FBG unit cells (`N`).
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Qudit dimension (`d`).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Index of the first output bin of the computational window.
    pub fn output_offset(&self) -> usize {
        self.output_offset
    }

    /// A full MUB family always has `d + 1` bases.
    pub fn num_bases(&self) -> usize {
        self.dim + 1
    }

    /// Total free phases: `N` spectral patterns plus `N (d+1)` temporal ones,
    /// `S` values each.
    pub fn param_count(&self) -> usize {
        self.modes * self.cells * (self.dim + 2)
    }
}

/// Temporal phases of one EOM, one instance per (cell, basis).
#[derive(Debug, Clone, PartialEq)]
pub struct EomPhases {
    values: Vec<f64>,
}

impl EomPhases {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, "EOM phases")?;
        Ok(EomPhases { values })
    }

    pub fn zeros(len: usize) -> Self {
        EomPhases {
            values: alloc::vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry-wise reduction into `[0, 2π)`; applied before serialization.
    pub fn canonicalized(&self) -> Self {
        EomPhases {
            values: self.values.iter().map(|&v| canonical_phase(v)).collect(),
        }
    }
}

/// Spectral phases of one coded FBG. A single instance is shared by every
/// basis: the grating response is fixed hardware, only EOM patterns switch.
#[derive(Debug, Clone, PartialEq)]
pub struct FbgPhases {
    values: Vec<f64>,
}

impl FbgPhases {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, "FBG spectral phases")?;
        Ok(FbgPhases { values })
    }

    pub fn zeros(len: usize) -> Self {
        FbgPhases {
            values: alloc::vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn canonicalized(&self) -> Self {
        FbgPhases {
            values: self.values.iter().map(|&v| canonical_phase(v)).collect(),
        }
    }
}

/// `e^{2πi j / s}` for `j = 0..s`. Index products are reduced mod `s` before
/// lookup, so kernel entries are exact for exact index arithmetic.
pub(crate) fn twiddles(s: usize) -> Vec<C64> {
    (0..s)
        .map(|j| C64::from_polar(1.0, TAU * j as f64 / s as f64))
        .collect()
}

/// Unitary `S`-point DFT matrix, `F[l][s] = exp(-2πi l s / S) / sqrt(S)`.
///
/// The unitary normalization keeps `C = F† D̃ F` manifestly unitary; the
/// impulse response of [`fbg_impulse_response`] is the same map written with
/// unnormalized transforms.
pub fn dft_matrix(s: usize) -> Result<CMatrix> {
    if s == 0 {
        return Err(Error::invalid("DFT size must be >= 1"));
    }
    let tw = twiddles(s);
    let norm = 1.0 / (s as f64).sqrt();
    Ok(CMatrix::from_fn(s, s, |l, k| {
        // exp(-2πi l k / S) = tw[(-l k) mod S]
        tw[(s - (l * k) % s) % s] * norm
    }))
}

/// Chip sequence (discrete impulse response) of a coded FBG:
/// `c[l] = (1/S) Σ_s exp(i φ[s]) exp(2πi s l / S)`.
///
/// Index `l` is read modulo `S`, so negative delays occupy bins
/// `S-1, S-2, ...`. Total chip power `Σ |c[l]|²` is 1 for any phases.
pub fn fbg_impulse_response(phases: &FbgPhases) -> Vec<C64> {
    let s = phases.len();
    let tw = twiddles(s);
    let spectral: Vec<C64> = phases
        .values()
        .iter()
        .map(|&p| C64::from_polar(1.0, p))
        .collect();
    let norm = 1.0 / s as f64;
    (0..s)
        .map(|l| {
            let mut acc = C64::ZERO;
            for (j, amp) in spectral.iter().enumerate() {
                acc += amp * tw[(j * l) % s];
            }
            acc * norm
        })
        .collect()
}

/// Circulant matrix with first column `chips`: `C[l][k] = chips[(l-k) mod S]`.
///
/// For unit-power chip sequences obtained from [`fbg_impulse_response`] the
/// result is unitary; for externally modified chips (perturbation, chip
/// truncation) it is the physical, generally sub-unitary filter.
pub fn fbg_matrix_from_chips(chips: &[C64]) -> Result<CMatrix> {
    let s = chips.len();
    if s == 0 {
        return Err(Error::invalid("chip sequence must be non-empty"));
    }
    if chips.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid("non-finite chip amplitude"));
    }
    Ok(CMatrix::from_fn(s, s, |l, k| chips[(l + s - k) % s]))
}

/// Transfer matrix of one coded FBG, `C = F† diag(e^{iφ}) F`.
pub fn fbg_matrix(phases: &FbgPhases) -> CMatrix {
    let chips = fbg_impulse_response(phases);
    fbg_matrix_from_chips(&chips).expect("validated phases produce valid chips")
}

/// Transfer matrix of one EOM: `diag(e^{iφ[l]})`, exactly unitary.
pub fn eom_matrix(phases: &EomPhases) -> CMatrix {
    let s = phases.len();
    let mut m = CMatrix::zeros(s, s);
    for (l, &p) in phases.values().iter().enumerate() {
        m[(l, l)] = C64::from_polar(1.0, p);
    }
    m
}

/// Left-multiply by a diagonal of phase factors: rows of `m` are scaled.
pub(crate) fn scale_rows_by_phases(m: &mut CMatrix, phases: &[f64]) {
    debug_assert_eq!(m.rows(), phases.len());
    for (l, &p) in phases.iter().enumerate() {
        let factor = C64::from_polar(1.0, p);
        for entry in m.row_mut(l) {
            *entry *= factor;
        }
    }
}

/// Left-multiply by the circulant with first column `chips`:
/// `out[l][j] = Σ_k chips[(l-k) mod S] m[k][j]`.
pub(crate) fn circulant_apply(chips: &[C64], m: &CMatrix) -> CMatrix {
    let s = chips.len();
    debug_assert_eq!(m.rows(), s);
    let mut out = CMatrix::zeros(s, m.cols());
    for l in 0..s {
        for k in 0..s {
            let coeff = chips[(l + s - k) % s];
            let src = m.row(k);
            let dst = out.row_mut(l);
            for (d, x) in dst.iter_mut().zip(src) {
                *d += coeff * x;
            }
        }
    }
    out
}

/// Cascade transfer matrix built from explicit per-cell chip sequences and
/// temporal phases, `W = C_N D_N ... C_1 D_1`.
///
/// This is the shared kernel behind [`cascade_matrix`], phase-error
/// perturbation, and chip truncation, which all feed it different chips.
pub fn cascade_from_parts(chips_per_cell: &[Vec<C64>], eom_per_cell: &[&[f64]]) -> Result<CMatrix> {
    if chips_per_cell.is_empty() || chips_per_cell.len() != eom_per_cell.len() {
        return Err(Error::invalid("cascade needs matching chip/EOM cell lists"));
    }
    let s = chips_per_cell[0].len();
    for (chips, eom) in chips_per_cell.iter().zip(eom_per_cell) {
        if chips.len() != s || eom.len() != s {
            return Err(Error::invalid("cell length mismatch in cascade"));
        }
    }
    let mut w = CMatrix::identity(s);
    for (chips, eom) in chips_per_cell.iter().zip(eom_per_cell) {
        scale_rows_by_phases(&mut w, eom);
        w = circulant_apply(chips, &w);
    }
    Ok(w)
}

/// Full `S x S` transfer matrix `W` of the cascade for basis `basis`.
pub fn cascade_matrix(solution: &SolutionSet, basis: usize) -> Result<CMatrix> {
    let spec = solution.spec();
    if basis >= spec.num_bases() {
        return Err(Error::invalid(format!(
            "basis index {basis} out of range (expected 0..={})",
            spec.dim()
        )));
    }
    let chips: Vec<Vec<C64>> = solution.fbg().iter().map(fbg_impulse_response).collect();
    let eoms: Vec<&[f64]> = (0..spec.cells())
        .map(|cell| solution.eom(cell, basis).values())
        .collect();
    cascade_from_parts(&chips, &eoms)
}

/// Computational-window projection `V[l][k] = W[offset + l][k]`,
/// `l, k = 0..d-1`. The input window is fixed at bins `0..d-1`; the output
/// window may carry an overall device delay.
pub fn project_subspace(w: &CMatrix, spec: &DeviceSpec) -> Result<CMatrix> {
    if w.rows() != spec.modes() || w.cols() != spec.modes() {
        return Err(Error::invalid(format!(
            "expected a {0} x {0} transfer matrix, got {1} x {2}",
            spec.modes(),
            w.rows(),
            w.cols()
        )));
    }
    Ok(w.block(spec.output_offset(), 0, spec.dim(), spec.dim()))
}
