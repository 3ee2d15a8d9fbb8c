//! MUB quality metrics, basis-state extraction, and probability tables.
//!
//! A family of `d+1` window transformations `V^(m)` is mutually unbiased when
//! `|V^(m)† V^(p)|²` (modulus squared element by element) equals the identity
//! for `m = p` and the uniform matrix `1/d` otherwise. [`epsilon_mse`]
//! measures the mean-squared deviation from the unbiased value over all basis
//! pairs; [`probability_tables`] simulates the prepare-and-measure experiment
//! bin by bin.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// f64 math through libm when built without std; in graphs where std is
// present the inherent methods shadow the trait and this import goes unused.
#[allow(unused_imports)]
use num_traits::Float;

use crate::cascade::{self, DeviceSpec};
use crate::matrix::{CMatrix, RMatrix, C64};
use crate::optimize::SolutionSet;
use crate::{Error, Result};

/// Detection probabilities below this leave the conditional distribution
/// undefined; such entries are flagged rather than reported as zeros.
pub const DETECTION_FLOOR: f64 = 1e-12;

/// The `d+1` full transfer matrices of a device together with their
/// computational-window projections.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSet {
    spec: DeviceSpec,
    w: Vec<CMatrix>,
    v: Vec<CMatrix>,
}

impl TransferSet {
    /// Wrap explicit transfer matrices; the window projections are derived,
    /// so the two lists can never disagree.
    pub fn from_transfer_matrices(spec: DeviceSpec, w: Vec<CMatrix>) -> Result<Self> {
        if w.len() != spec.num_bases() {
            return Err(Error::invalid(format!(
                "expected {} transfer matrices, got {}",
                spec.num_bases(),
                w.len()
            )));
        }
        let v = w
            .iter()
            .map(|m| cascade::project_subspace(m, &spec))
            .collect::<Result<Vec<_>>>()?;
        Ok(TransferSet { spec, w, v })
    }

    /// Build every basis's cascade from a solution's phases.
    pub fn from_solution(solution: &SolutionSet) -> Result<Self> {
        let spec = *solution.spec();
        let w = (0..spec.num_bases())
            .map(|m| cascade::cascade_matrix(solution, m))
            .collect::<Result<Vec<_>>>()?;
        TransferSet::from_transfer_matrices(spec, w)
    }

    pub fn spec(&self) -> &DeviceSpec {
        &self.spec
    }

    /// Full `S x S` transfer matrix of basis `m`.
    pub fn transfer(&self, m: usize) -> &CMatrix {
        &self.w[m]
    }

    /// `d x d` window transformation of basis `m`.
    pub fn window(&self, m: usize) -> &CMatrix {
        &self.v[m]
    }

    pub fn windows(&self) -> &[CMatrix] {
        &self.v
    }
}

/// Element-wise `|Va† Vb|²`.
pub fn mub_overlap(va: &CMatrix, vb: &CMatrix) -> Result<RMatrix> {
    if va.rows() != vb.rows() || va.cols() != vb.cols() {
        return Err(Error::invalid("overlap requires matching dimensions"));
    }
    let product = va.dagger().mul(vb);
    let mut out = RMatrix::zeros(product.rows(), product.cols());
    for l in 0..product.rows() {
        for k in 0..product.cols() {
            out[(l, k)] = product[(l, k)].norm_sqr();
        }
    }
    Ok(out)
}

/// Mean-squared deviation of all pairwise overlaps from the unbiased value:
///
/// ```text
/// ε = 2/(d(d+1)) Σ_{m<p} (1/d²) Σ_{l,k} ( |V^(m)† V^(p)|²_{lk} − 1/d )²
/// ```
///
/// Zero exactly when every pair of transformations is mutually unbiased. The
/// sum runs over distinct pairs only; unitarity of the individual windows is
/// deliberately not part of the metric (detection probabilities track it).
pub fn epsilon_mse(windows: &[CMatrix]) -> Result<f64> {
    let first = windows
        .first()
        .ok_or_else(|| Error::invalid("empty transformation list"))?;
    let d = first.rows();
    if d < 2 {
        return Err(Error::invalid("window dimension must be >= 2"));
    }
    if windows.len() != d + 1 {
        return Err(Error::invalid(format!(
            "a full MUB family in dimension {d} has {} members, got {}",
            d + 1,
            windows.len()
        )));
    }
    if windows.iter().any(|v| v.rows() != d || v.cols() != d) {
        return Err(Error::invalid("all transformations must be d x d"));
    }
    let inv_d = 1.0 / d as f64;
    let mut acc = 0.0;
    for m in 0..windows.len() {
        for p in (m + 1)..windows.len() {
            let overlap = windows[m].dagger().mul(&windows[p]);
            let mut pair_sum = 0.0;
            for entry in overlap.entries() {
                let dev = entry.norm_sqr() - inv_d;
                pair_sum += dev * dev;
            }
            acc += pair_sum / (d * d) as f64;
        }
    }
    Ok(2.0 * acc / (d * (d + 1)) as f64)
}

/// One of the `d(d+1)` input states of the prepare-and-measure protocol:
/// the state that basis `m`'s device maps onto output bin `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisState {
    basis: usize,
    index: usize,
    amplitudes: Vec<C64>,
    norm_factor: f64,
}

impl BasisState {
    pub fn basis(&self) -> usize {
        self.basis
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Unit-norm amplitudes over input bins `0..d-1`.
    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// The pre-normalization row norm. Unity for exactly unitary windows;
    /// retained because projected windows are only approximately unitary.
    pub fn norm_factor(&self) -> f64 {
        self.norm_factor
    }
}

/// Extract all `d(d+1)` basis states: state `n` of basis `m` has amplitudes
/// `conj(V^(m)[n][k]) / normFactor`, ordered basis-major.
pub fn basis_states(transfer: &TransferSet) -> Result<Vec<BasisState>> {
    let spec = transfer.spec();
    let d = spec.dim();
    let mut states = Vec::with_capacity(d * spec.num_bases());
    for m in 0..spec.num_bases() {
        let v = transfer.window(m);
        for n in 0..d {
            let row = v.row(n);
            let norm_sq: f64 = row.iter().map(|z| z.norm_sqr()).sum();
            let norm = norm_sq.sqrt();
            if norm < 1e-12 {
                return Err(Error::DegenerateState { basis: m, state: n });
            }
            let amplitudes = row.iter().map(|z| z.conj() / norm).collect();
            states.push(BasisState {
                basis: m,
                index: n,
                amplitudes,
                norm_factor: norm,
            });
        }
    }
    Ok(states)
}

/// Detection probabilities `D[p][m][n]` and post-selected conditional
/// distributions `P[p][m][q|n]` for every prepare/measure combination.
///
/// Conditional distributions with detection below [`DETECTION_FLOOR`] are
/// flagged undefined (their entries read as zero) instead of failing the
/// whole table, so sweeps over poor solutions run to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTables {
    dim: usize,
    bases: usize,
    detection: Vec<f64>,
    postselected: Vec<f64>,
    undefined: Vec<bool>,
}

impl ProbabilityTables {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bases(&self) -> usize {
        self.bases
    }

    fn dn_index(&self, p: usize, m: usize, n: usize) -> usize {
        debug_assert!(p < self.bases && m < self.bases && n < self.dim);
        (p * self.bases + m) * self.dim + n
    }

    /// Probability that a photon prepared in state `n` of basis `m` and
    /// measured in basis `p` lands inside the `d`-bin output window.
    pub fn detection(&self, p: usize, m: usize, n: usize) -> f64 {
        self.detection[self.dn_index(p, m, n)]
    }

    /// Probability of output bin `q` conditioned on detection, for state `n`
    /// of basis `m` measured in basis `p`.
    pub fn postselected(&self, p: usize, m: usize, q: usize, n: usize) -> f64 {
        debug_assert!(q < self.dim);
        self.postselected[(self.dn_index(p, m, n)) * self.dim + q]
    }

    /// False when the conditional distribution for `(p, m, n)` is undefined.
    pub fn is_defined(&self, p: usize, m: usize, n: usize) -> bool {
        !self.undefined[self.dn_index(p, m, n)]
    }

    pub fn undefined_count(&self) -> usize {
        self.undefined.iter().filter(|&&u| u).count()
    }
}

/// Simulate the prepare-and-measure experiment: embed each state at input
/// bins `0..d-1`, apply the full transfer matrix of the measurement basis,
/// and read probabilities off the output window.
pub fn probability_tables(
    transfer: &TransferSet,
    states: &[BasisState],
) -> Result<ProbabilityTables> {
    let spec = transfer.spec();
    let d = spec.dim();
    let bases = spec.num_bases();
    if states.len() != d * bases {
        return Err(Error::invalid(format!(
            "expected {} basis states, got {}",
            d * bases,
            states.len()
        )));
    }
    for (i, state) in states.iter().enumerate() {
        if state.basis != i / d || state.index != i % d || state.amplitudes.len() != d {
            return Err(Error::invalid(
                "basis states must be the basis-major output of basis_states",
            ));
        }
    }
    let offset = spec.output_offset();
    let mut tables = ProbabilityTables {
        dim: d,
        bases,
        detection: vec![0.0; bases * bases * d],
        postselected: vec![0.0; bases * bases * d * d],
        undefined: vec![false; bases * bases * d],
    };
    let mut input = vec![C64::ZERO; spec.modes()];
    for p in 0..bases {
        let w = transfer.transfer(p);
        for state in states {
            input.fill(C64::ZERO);
            input[..d].copy_from_slice(&state.amplitudes);
            let output = w.apply(&input);
            let weights: Vec<f64> = (0..d).map(|q| output[offset + q].norm_sqr()).collect();
            let detection: f64 = weights.iter().sum();
            let idx = tables.dn_index(p, state.basis, state.index);
            tables.detection[idx] = detection;
            if detection < DETECTION_FLOOR {
                tables.undefined[idx] = true;
                continue;
            }
            for (q, weight) in weights.iter().enumerate() {
                tables.postselected[idx * d + q] = weight / detection;
            }
        }
    }
    Ok(tables)
}

/// Aggregate table quality figures, the ones a solution lives or dies by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableQuality {
    /// Smallest matched-basis correct-bin conditional probability.
    pub min_matched: f64,
    /// Largest deviation of a mismatched-basis conditional from `1/d`.
    pub max_mismatch_deviation: f64,
    pub min_detection: f64,
    pub max_detection: f64,
    pub undefined: usize,
}

pub fn table_quality(tables: &ProbabilityTables) -> TableQuality {
    let d = tables.dim();
    let inv_d = 1.0 / d as f64;
    let mut quality = TableQuality {
        min_matched: 1.0,
        max_mismatch_deviation: 0.0,
        min_detection: f64::INFINITY,
        max_detection: f64::NEG_INFINITY,
        undefined: tables.undefined_count(),
    };
    for p in 0..tables.bases() {
        for m in 0..tables.bases() {
            for n in 0..d {
                let det = tables.detection(p, m, n);
                quality.min_detection = quality.min_detection.min(det);
                quality.max_detection = quality.max_detection.max(det);
                if !tables.is_defined(p, m, n) {
                    continue;
                }
                if p == m {
                    quality.min_matched = quality.min_matched.min(tables.postselected(p, m, n, n));
                } else {
                    for q in 0..d {
                        let dev = (tables.postselected(p, m, q, n) - inv_d).abs();
                        quality.max_mismatch_deviation = quality.max_mismatch_deviation.max(dev);
                    }
                }
            }
        }
    }
    quality
}
