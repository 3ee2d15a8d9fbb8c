//! Multi-start quasi-Newton search over all free cascade phases.
//!
//! A candidate configuration is a flat parameter vector holding every free
//! phase of the device in a fixed layout:
//!
//! ```text
//! [ fbg cell 0 | fbg cell 1 | ... | eom cell 0, basis 0..d | eom cell 1, basis 0..d | ... ]
//! ```
//!
//! (`S` values per segment, `S N (d+2)` parameters total). The figure of
//! merit is the MUB mean-squared error of the projected transformations; see
//! [`crate::mub::epsilon_mse`]. Each restart draws an independent uniform
//! phase pattern from its own RNG stream and refines it with L-BFGS; the best
//! restart wins, ties broken by restart index.
//!
//! Gradients are available analytically (adjoint pass through the cascade,
//! at roughly twice the cost of one objective evaluation) or by central
//! finite differences; [`gradient_check`] compares the two.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

// f64 math through libm when built without std; in graphs where std is
// present the inherent methods shadow the trait and this import goes unused.
#[allow(unused_imports)]
use num_traits::Float;

use crate::cascade::{self, DeviceSpec, EomPhases, FbgPhases};
use crate::lbfgs::{self, Eval, MinimizeOptions, SearchProblem};
use crate::matrix::{CMatrix, C64};
use crate::mub::TransferSet;
use crate::stream;
use crate::{Error, Result};

const TAU: f64 = core::f64::consts::TAU;

/// Gradient flattens out near machine precision well before this; treat such
/// points as converged.
const GRAD_TOLERANCE: f64 = 1e-12;

/// Weight of the row-overlap term in the search objective (see
/// [`SearchMode`]); the reported metric stays the pure column form.
const ROW_WEIGHT: f64 = 0.3;

/// Weight of the chip-localization term when a chip budget is requested.
const LOC_WEIGHT: f64 = 0.3;

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

/// Byte offsets of the flat phase layout. See the module docs for the order.
#[derive(Debug, Clone, Copy)]
pub struct ParamLayout {
    modes: usize,
    cells: usize,
    bases: usize,
}

impl ParamLayout {
    pub fn of(spec: &DeviceSpec) -> Self {
        ParamLayout {
            modes: spec.modes(),
            cells: spec.cells(),
            bases: spec.num_bases(),
        }
    }

    pub fn len(&self) -> usize {
        self.modes * self.cells * (1 + self.bases)
    }

    pub fn fbg_range(&self, cell: usize) -> core::ops::Range<usize> {
        debug_assert!(cell < self.cells);
        let start = cell * self.modes;
        start..start + self.modes
    }

    pub fn eom_range(&self, cell: usize, basis: usize) -> core::ops::Range<usize> {
        debug_assert!(cell < self.cells && basis < self.bases);
        let start = self.modes * (self.cells + cell * self.bases + basis);
        start..start + self.modes
    }
}

// ---------------------------------------------------------------------------
// Solution sets
// ---------------------------------------------------------------------------

/// Bookkeeping attached to an optimized solution.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolutionMetadata {
    /// RNG seed the restarts were derived from.
    pub seed: u64,
    /// Total quasi-Newton iterations across the executed restarts.
    pub iterations: u64,
    /// Number of restarts actually executed (early stop may cut the budget).
    pub restarts: u32,
    /// Index of the winning restart.
    pub best_restart: u32,
    /// False when the winner exhausted its iteration budget without meeting
    /// any stopping criterion; the solution is still the best found.
    pub converged: bool,
    /// Wall-clock seconds, stamped by the caller; this crate has no clock.
    pub wall_time_s: f64,
}

/// A full set of free phases for one device: `N` shared spectral patterns
/// plus `N (d+1)` per-basis temporal patterns, with the achieved MUB error.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet {
    spec: DeviceSpec,
    fbg: Vec<FbgPhases>,
    eom: Vec<Vec<EomPhases>>,
    achieved_mse: f64,
    metadata: SolutionMetadata,
}

impl SolutionSet {
    /// Build a solution from explicit phase vectors. Phases are canonicalized
    /// into `[0, 2π)` and the achieved error is recomputed, so the stored
    /// value always matches the stored phases.
    pub fn new(
        spec: DeviceSpec,
        fbg: Vec<FbgPhases>,
        eom: Vec<Vec<EomPhases>>,
        metadata: SolutionMetadata,
    ) -> Result<Self> {
        if fbg.len() != spec.cells() {
            return Err(Error::invalid(format!(
                "expected {} FBG phase vectors, got {}",
                spec.cells(),
                fbg.len()
            )));
        }
        if eom.len() != spec.cells() || eom.iter().any(|b| b.len() != spec.num_bases()) {
            return Err(Error::invalid(format!(
                "expected {} x {} EOM phase vectors",
                spec.cells(),
                spec.num_bases()
            )));
        }
        if fbg.iter().any(|p| p.len() != spec.modes())
            || eom.iter().flatten().any(|p| p.len() != spec.modes())
        {
            return Err(Error::invalid(format!(
                "every phase vector must have length S = {}",
                spec.modes()
            )));
        }
        let fbg: Vec<FbgPhases> = fbg.iter().map(FbgPhases::canonicalized).collect();
        let eom: Vec<Vec<EomPhases>> = eom
            .iter()
            .map(|b| b.iter().map(EomPhases::canonicalized).collect())
            .collect();
        let mut solution = SolutionSet {
            spec,
            fbg,
            eom,
            achieved_mse: 0.0,
            metadata,
        };
        solution.achieved_mse = objective(&spec, &solution.to_params())?;
        Ok(solution)
    }

    /// Unpack a flat parameter vector (see [`ParamLayout`]).
    pub fn from_params(
        spec: DeviceSpec,
        params: &[f64],
        metadata: SolutionMetadata,
    ) -> Result<Self> {
        let layout = ParamLayout::of(&spec);
        if params.len() != layout.len() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                layout.len(),
                params.len()
            )));
        }
        let fbg = (0..spec.cells())
            .map(|c| FbgPhases::new(params[layout.fbg_range(c)].to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let eom = (0..spec.cells())
            .map(|c| {
                (0..spec.num_bases())
                    .map(|m| EomPhases::new(params[layout.eom_range(c, m)].to_vec()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        SolutionSet::new(spec, fbg, eom, metadata)
    }

    /// The all-zero configuration: every cascade is the identity.
    pub fn zeroed(spec: DeviceSpec) -> Self {
        let fbg = vec![FbgPhases::zeros(spec.modes()); spec.cells()];
        let eom = vec![vec![EomPhases::zeros(spec.modes()); spec.num_bases()]; spec.cells()];
        SolutionSet::new(spec, fbg, eom, SolutionMetadata::default())
            .expect("zero phases are always valid")
    }

    pub fn spec(&self) -> &DeviceSpec {
        &self.spec
    }

    pub fn fbg(&self) -> &[FbgPhases] {
        &self.fbg
    }

    pub fn eom(&self, cell: usize, basis: usize) -> &EomPhases {
        &self.eom[cell][basis]
    }

    pub fn eom_patterns(&self, cell: usize) -> &[EomPhases] {
        &self.eom[cell]
    }

    /// MUB mean-squared error of the stored phases.
    pub fn achieved_mse(&self) -> f64 {
        self.achieved_mse
    }

    pub fn metadata(&self) -> &SolutionMetadata {
        &self.metadata
    }

    pub fn set_wall_time(&mut self, seconds: f64) {
        self.metadata.wall_time_s = seconds;
    }

    /// Flatten back into the canonical parameter layout.
    pub fn to_params(&self) -> Vec<f64> {
        let layout = ParamLayout::of(&self.spec);
        let mut params = vec![0.0; layout.len()];
        for (c, phases) in self.fbg.iter().enumerate() {
            params[layout.fbg_range(c)].copy_from_slice(phases.values());
        }
        for (c, per_basis) in self.eom.iter().enumerate() {
            for (m, phases) in per_basis.iter().enumerate() {
                params[layout.eom_range(c, m)].copy_from_slice(phases.values());
            }
        }
        params
    }
}

// ---------------------------------------------------------------------------
// Objective evaluation
// ---------------------------------------------------------------------------

/// How the local refinement computes the gradient of its objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Central finite differences of the objective (the correctness oracle;
    /// two evaluations per coordinate, so only practical at small scale).
    FiniteDifference,
    /// Adjoint pass through the cascade. Default.
    Analytic,
}

/// Multi-start search configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub restarts: u32,
    pub max_iterations: u64,
    pub gradient_mode: GradientMode,
    /// Finite-difference step in radians; must lie in `(0, 1e-2]`.
    pub fd_step: f64,
    /// Stop the whole search once a restart reaches this error.
    pub tolerance: f64,
    pub rng_seed: u64,
    /// Fabrication chip budget: when set, chip power outside `±halfwidth`
    /// bins of index 0 is penalized during the search, keeping impulse
    /// responses centered and short enough to cut into a physical grating.
    /// Costs some achievable error; leave unset for pure-quality searches.
    pub chip_halfwidth: Option<usize>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            restarts: 20,
            max_iterations: 2000,
            gradient_mode: GradientMode::Analytic,
            fd_step: 1e-5,
            tolerance: 0.0,
            rng_seed: 0,
            chip_halfwidth: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::invalid("restarts must be >= 1"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be >= 1"));
        }
        if !(self.fd_step > 0.0 && self.fd_step <= 1e-2) {
            return Err(Error::invalid("fd_step must lie in (0, 1e-2]"));
        }
        if !(self.tolerance >= 0.0) || !self.tolerance.is_finite() {
            return Err(Error::invalid("tolerance must be finite and >= 0"));
        }
        if self.chip_halfwidth == Some(0) {
            return Err(Error::invalid("chip_halfwidth must be >= 1 when set"));
        }
        Ok(())
    }
}

/// Which pair-overlap orientations the local search descends on.
///
/// The reported error always measures the window transformations' *column*
/// overlaps, `|V^(m)† V^(p)|²`. That metric is blind to a common left-unitary
/// rotation of all windows, while the prepare-and-measure probabilities are
/// exactly the *row* overlaps `|V^(m) V^(p)†|²` and do depend on it. Left to
/// the column metric alone, the flat directions leave the measurement tables
/// unconstrained, so the search also drives the row overlaps to the unbiased
/// value; both vanish together at a true MUB family.
#[derive(Debug, Clone, Copy, PartialEq)]
enum SearchMode {
    /// Descend on the column metric only.
    ColumnMetric,
    /// Descend on `eps_col + row * eps_row + loc * P_far`, where `P_far` is
    /// the total chip power outside `±halfwidth` bins around chip 0.
    Weighted {
        row: f64,
        loc: f64,
        halfwidth: usize,
    },
}

impl SearchMode {
    fn row_weight(&self) -> f64 {
        match self {
            SearchMode::ColumnMetric => 0.0,
            SearchMode::Weighted { row, .. } => *row,
        }
    }

    fn loc_weight(&self) -> f64 {
        match self {
            SearchMode::ColumnMetric => 0.0,
            SearchMode::Weighted { loc, .. } => *loc,
        }
    }

    fn loc_halfwidth(&self) -> usize {
        match self {
            SearchMode::ColumnMetric => 0,
            SearchMode::Weighted { halfwidth, .. } => *halfwidth,
        }
    }
}

fn scale_rows(m: &mut CMatrix, phases: &[f64], sign: f64) {
    for (l, &p) in phases.iter().enumerate() {
        let factor = C64::from_polar(1.0, sign * p);
        for entry in m.row_mut(l) {
            *entry *= factor;
        }
    }
}

fn add_assign(dst: &mut CMatrix, src: &CMatrix) {
    debug_assert_eq!((dst.rows(), dst.cols()), (src.rows(), src.cols()));
    for r in 0..dst.rows() {
        let s = src.row(r);
        for (d, x) in dst.row_mut(r).iter_mut().zip(s) {
            *d += x;
        }
    }
}

/// First `d` canonical basis vectors embedded in `S` modes, as columns.
fn embedding(modes: usize, dim: usize) -> CMatrix {
    CMatrix::from_fn(modes, dim, |r, c| if r == c { C64::ONE } else { C64::ZERO })
}

struct Forward {
    /// Window transformations, one per basis.
    v: Vec<CMatrix>,
    /// Post-EOM states per [basis][cell] (`S x d`), kept for the adjoint pass.
    z: Vec<Vec<CMatrix>>,
    /// Post-spectral-phase states per [basis][cell] (`S x d`).
    q: Vec<Vec<CMatrix>>,
}

struct PairTerms {
    eps_col: f64,
    eps_row: f64,
    /// Per unordered pair (m < p), the overlap-weighted residual matrices
    /// used by the adjoint pass; empty when no gradient is requested.
    t_col: Vec<CMatrix>,
    t_row: Vec<CMatrix>,
}

struct Evaluator {
    spec: DeviceSpec,
    dft: CMatrix,
    dft_dag: CMatrix,
    mode: SearchMode,
}

impl Evaluator {
    fn new(spec: DeviceSpec, mode: SearchMode) -> Self {
        let dft = cascade::dft_matrix(spec.modes()).expect("spec has S >= 1");
        let dft_dag = dft.dagger();
        Evaluator {
            spec,
            dft,
            dft_dag,
            mode,
        }
    }

    fn forward(&self, params: &[f64], store: bool) -> Forward {
        let spec = &self.spec;
        let layout = ParamLayout::of(spec);
        let bases = spec.num_bases();
        let mut v = Vec::with_capacity(bases);
        let mut z_all = Vec::with_capacity(bases);
        let mut q_all = Vec::with_capacity(bases);
        for basis in 0..bases {
            let mut y = embedding(spec.modes(), spec.dim());
            let mut z_cells = Vec::new();
            let mut q_cells = Vec::new();
            for cell in 0..spec.cells() {
                scale_rows(&mut y, &params[layout.eom_range(cell, basis)], 1.0);
                if store {
                    z_cells.push(y.clone());
                }
                let mut p = self.dft.mul(&y);
                scale_rows(&mut p, &params[layout.fbg_range(cell)], 1.0);
                if store {
                    q_cells.push(p.clone());
                }
                y = self.dft_dag.mul(&p);
            }
            v.push(y.block(spec.output_offset(), 0, spec.dim(), spec.dim()));
            z_all.push(z_cells);
            q_all.push(q_cells);
        }
        Forward {
            v,
            z: z_all,
            q: q_all,
        }
    }

    /// Pair overlaps, the two error metrics, and (optionally) the residual
    /// matrices feeding the adjoint pass.
    fn pair_terms(&self, v: &[CMatrix], with_grad: bool) -> PairTerms {
        let d = self.spec.dim();
        let bases = self.spec.num_bases();
        let inv_d = 1.0 / d as f64;
        // epsilon = 2/(d(d+1)) * sum_pairs [ (1/d^2) * sum_lk (G_lk - 1/d)^2 ],
        // and T = 2 c0 (G - 1/d) .* M with c0 = 2/(d(d+1) d^2) drives the
        // adjoint: d(eps) = 2 Re sum conj(T_lk) dM_lk.
        let t_coeff = 4.0 / ((d * (d + 1)) as f64 * (d * d) as f64);
        let mut col_acc = 0.0;
        let mut row_acc = 0.0;
        let mut t_col = Vec::new();
        let mut t_row = Vec::new();
        for m in 0..bases {
            for p in (m + 1)..bases {
                let overlap_col = v[m].dagger().mul(&v[p]);
                let mut pair_sum = 0.0;
                let mut t = CMatrix::zeros(d, d);
                for l in 0..d {
                    for k in 0..d {
                        let entry = overlap_col[(l, k)];
                        let dev = entry.norm_sqr() - inv_d;
                        pair_sum += dev * dev;
                        if with_grad {
                            t[(l, k)] = entry * (t_coeff * dev);
                        }
                    }
                }
                col_acc += pair_sum / (d * d) as f64;
                if with_grad {
                    t_col.push(t);
                }

                let row_weight = self.mode.row_weight();
                if row_weight > 0.0 {
                    let overlap_row = v[m].mul(&v[p].dagger());
                    let mut pair_sum = 0.0;
                    let mut t = CMatrix::zeros(d, d);
                    for l in 0..d {
                        for k in 0..d {
                            let entry = overlap_row[(l, k)];
                            let dev = entry.norm_sqr() - inv_d;
                            pair_sum += dev * dev;
                            if with_grad {
                                t[(l, k)] = entry * (row_weight * t_coeff * dev);
                            }
                        }
                    }
                    row_acc += row_weight * pair_sum / (d * d) as f64;
                    if with_grad {
                        t_row.push(t);
                    }
                }
            }
        }
        let norm = 2.0 / (d * (d + 1)) as f64;
        PairTerms {
            eps_col: norm * col_acc,
            eps_row: norm * row_acc,
            t_col,
            t_row,
        }
    }

    /// Chip power outside `±LOC_HALFWIDTH` of index 0, summed over cells.
    /// When `grad` is given, `scale` times its gradient w.r.t. the spectral
    /// phases is accumulated there.
    fn far_chip_power(&self, params: &[f64], mut grad: Option<&mut [f64]>, scale: f64) -> f64 {
        let spec = &self.spec;
        let layout = ParamLayout::of(spec);
        let s = spec.modes();
        let halfwidth = self.mode.loc_halfwidth();
        if halfwidth * 2 + 1 >= s {
            return 0.0;
        }
        let tw = cascade::twiddles(s);
        let norm = 1.0 / s as f64;
        let mut total = 0.0;
        for cell in 0..spec.cells() {
            let phases = &params[layout.fbg_range(cell)];
            let spectral: Vec<C64> = phases.iter().map(|&p| C64::from_polar(1.0, p)).collect();
            for l in 0..s {
                if l.min(s - l) <= halfwidth {
                    continue;
                }
                let mut chip = C64::ZERO;
                for (j, amp) in spectral.iter().enumerate() {
                    chip += amp * tw[(j * l) % s];
                }
                chip *= norm;
                total += chip.norm_sqr();
                if let Some(g) = grad.as_deref_mut() {
                    // d|c|^2/d phi_j = 2 Re(i conj(c) e^{i phi_j} w^{jl}/S) = -2 Im(...)
                    let dst = &mut g[layout.fbg_range(cell)];
                    for (j, amp) in spectral.iter().enumerate() {
                        let v = chip.conj() * amp * tw[(j * l) % s] * norm;
                        dst[j] -= 2.0 * scale * v.im;
                    }
                }
            }
        }
        total
    }

    /// Search and report values without gradient.
    fn values(&self, params: &[f64]) -> Eval {
        let forward = self.forward(params, false);
        let terms = self.pair_terms(&forward.v, false);
        let loc = self.mode.loc_weight();
        let far = if loc > 0.0 {
            self.far_chip_power(params, None, 0.0)
        } else {
            0.0
        };
        Eval {
            search: terms.eps_col + terms.eps_row + loc * far,
            report: terms.eps_col,
        }
    }

    /// Search value, report value, and the gradient of the search value.
    fn values_grad(&self, params: &[f64], grad: &mut [f64]) -> Eval {
        let spec = &self.spec;
        let layout = ParamLayout::of(spec);
        let d = spec.dim();
        let bases = spec.num_bases();
        let forward = self.forward(params, true);
        let terms = self.pair_terms(&forward.v, true);

        // Adjoints of the window transformations.
        let mut gamma = vec![CMatrix::zeros(d, d); bases];
        let mut pair = 0;
        for m in 0..bases {
            for p in (m + 1)..bases {
                let t = &terms.t_col[pair];
                add_assign(&mut gamma[m], &forward.v[p].mul(&t.dagger()));
                add_assign(&mut gamma[p], &forward.v[m].mul(t));
                if self.mode.row_weight() > 0.0 {
                    let t = &terms.t_row[pair];
                    add_assign(&mut gamma[m], &t.mul(&forward.v[p]));
                    add_assign(&mut gamma[p], &t.dagger().mul(&forward.v[m]));
                }
                pair += 1;
            }
        }

        for g in grad.iter_mut() {
            *g = 0.0;
        }
        for basis in 0..bases {
            // Seed the adjoint with dJ/dV placed in the output window.
            let mut ybar = CMatrix::zeros(spec.modes(), d);
            for l in 0..d {
                for k in 0..d {
                    ybar[(spec.output_offset() + l, k)] = gamma[basis][(l, k)];
                }
            }
            for cell in (0..spec.cells()).rev() {
                let mut qbar = self.dft.mul(&ybar);
                {
                    let q = &forward.q[basis][cell];
                    let dst = &mut grad[layout.fbg_range(cell)];
                    for s in 0..spec.modes() {
                        let mut acc = C64::ZERO;
                        for (qb, qf) in qbar.row(s).iter().zip(q.row(s)) {
                            acc += qb.conj() * qf;
                        }
                        dst[s] += -2.0 * acc.im;
                    }
                }
                scale_rows(&mut qbar, &params[layout.fbg_range(cell)], -1.0);
                let mut zbar = self.dft_dag.mul(&qbar);
                {
                    let z = &forward.z[basis][cell];
                    let dst = &mut grad[layout.eom_range(cell, basis)];
                    for l in 0..spec.modes() {
                        let mut acc = C64::ZERO;
                        for (zb, zf) in zbar.row(l).iter().zip(z.row(l)) {
                            acc += zb.conj() * zf;
                        }
                        dst[l] = -2.0 * acc.im;
                    }
                }
                scale_rows(&mut zbar, &params[layout.eom_range(cell, basis)], -1.0);
                ybar = zbar;
            }
        }

        let loc = self.mode.loc_weight();
        let far = if loc > 0.0 {
            self.far_chip_power(params, Some(grad), loc)
        } else {
            0.0
        };

        Eval {
            search: terms.eps_col + terms.eps_row + loc * far,
            report: terms.eps_col,
        }
    }
}

fn check_params(spec: &DeviceSpec, params: &[f64]) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::invalid(format!(
            "expected {} parameters for this device, got {}",
            spec.param_count(),
            params.len()
        )));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("non-finite parameter"));
    }
    Ok(())
}

/// MUB mean-squared error of the device described by `params`.
///
/// Builds all `d+1` cascades, projects onto the computational window, and
/// evaluates [`crate::mub::epsilon_mse`] over the resulting set. Pure and
/// deterministic.
pub fn objective(spec: &DeviceSpec, params: &[f64]) -> Result<f64> {
    check_params(spec, params)?;
    let evaluator = Evaluator::new(*spec, SearchMode::ColumnMetric);
    Ok(evaluator.values(params).report)
}

/// [`objective`] together with its analytic gradient.
pub fn objective_gradient(spec: &DeviceSpec, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_params(spec, params)?;
    let evaluator = Evaluator::new(*spec, SearchMode::ColumnMetric);
    let mut grad = vec![0.0; params.len()];
    let eval = evaluator.values_grad(params, &mut grad);
    Ok((eval.report, grad))
}

/// Max absolute deviation between the analytic gradient of [`objective`] and
/// central finite differences with step `fd_step`.
pub fn gradient_check(spec: &DeviceSpec, params: &[f64], fd_step: f64) -> Result<f64> {
    check_params(spec, params)?;
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::invalid("fd_step must be positive and finite"));
    }
    let (_, analytic) = objective_gradient(spec, params)?;
    let evaluator = Evaluator::new(*spec, SearchMode::ColumnMetric);
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        probe[i] = params[i] + fd_step;
        let above = evaluator.values(&probe).report;
        probe[i] = params[i] - fd_step;
        let below = evaluator.values(&probe).report;
        probe[i] = params[i];
        let fd = (above - below) / (2.0 * fd_step);
        worst = worst.max((analytic[i] - fd).abs());
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Multi-start driver
// ---------------------------------------------------------------------------

struct AnalyticProblem {
    evaluator: Evaluator,
}

impl SearchProblem for AnalyticProblem {
    fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> Eval {
        self.evaluator.values_grad(x, grad)
    }
}

struct FdProblem {
    evaluator: Evaluator,
    step: f64,
}

impl SearchProblem for FdProblem {
    fn value_grad(&mut self, x: &[f64], grad: &mut [f64]) -> Eval {
        let mut probe = x.to_vec();
        for i in 0..x.len() {
            probe[i] = x[i] + self.step;
            let above = self.evaluator.values(&probe).search;
            probe[i] = x[i] - self.step;
            let below = self.evaluator.values(&probe).search;
            probe[i] = x[i];
            grad[i] = (above - below) / (2.0 * self.step);
        }
        self.evaluator.values(x)
    }
}

/// Result of one restart, canonicalized and re-scored.
#[derive(Debug, Clone)]
pub struct RestartOutcome {
    pub restart: u32,
    pub params: Vec<f64>,
    /// MUB error of `params` (the report metric, not the search value).
    pub mse: f64,
    pub iterations: u64,
    pub converged: bool,
}

/// Run a single restart: draw uniform initial phases from the stream
/// `(rng_seed, restart)` and refine with L-BFGS.
///
/// Restarts are independent, so callers may fan them out across workers and
/// combine with [`finalize_restarts`]; the result is bit-identical to the
/// sequential [`optimize`].
pub fn optimize_restart(
    spec: &DeviceSpec,
    config: &OptimizerConfig,
    restart: u32,
) -> Result<RestartOutcome> {
    config.validate()?;
    let mut rng = stream::substream(config.rng_seed, restart as u64);
    let init: Vec<f64> = (0..spec.param_count())
        .map(|_| rng.random::<f64>() * TAU)
        .collect();
    let options = MinimizeOptions {
        max_iterations: config.max_iterations,
        report_tolerance: config.tolerance,
        grad_tolerance: GRAD_TOLERANCE,
    };
    let mode = match config.chip_halfwidth {
        Some(halfwidth) => SearchMode::Weighted {
            row: ROW_WEIGHT,
            loc: LOC_WEIGHT,
            halfwidth,
        },
        None => SearchMode::Weighted {
            row: ROW_WEIGHT,
            loc: 0.0,
            halfwidth: 0,
        },
    };
    let result = match config.gradient_mode {
        GradientMode::Analytic => lbfgs::minimize(
            &mut AnalyticProblem {
                evaluator: Evaluator::new(*spec, mode),
            },
            init,
            &options,
        ),
        GradientMode::FiniteDifference => lbfgs::minimize(
            &mut FdProblem {
                evaluator: Evaluator::new(*spec, mode),
                step: config.fd_step,
            },
            init,
            &options,
        ),
    };
    // Canonicalize before scoring so the reported error matches the phases a
    // SolutionSet will actually store.
    let params: Vec<f64> = result
        .x
        .iter()
        .map(|&p| cascade::canonical_phase(p))
        .collect();
    let mse = objective(spec, &params)?;
    Ok(RestartOutcome {
        restart,
        params,
        mse,
        iterations: result.iterations,
        converged: result.converged,
    })
}

/// Combine restart outcomes exactly as the sequential driver would have:
/// the first restart meeting the tolerance ends the search, otherwise the
/// lowest error wins with ties broken by restart index.
pub fn finalize_restarts(
    spec: &DeviceSpec,
    config: &OptimizerConfig,
    outcomes: &[RestartOutcome],
) -> Result<SolutionSet> {
    if outcomes.is_empty() {
        return Err(Error::invalid("no restart outcomes to combine"));
    }
    for (i, o) in outcomes.iter().enumerate() {
        if o.restart as usize != i {
            return Err(Error::invalid("restart outcomes must be in index order"));
        }
    }
    let cut = outcomes
        .iter()
        .position(|o| o.mse <= config.tolerance)
        .map(|i| i + 1)
        .unwrap_or(outcomes.len());
    let considered = &outcomes[..cut];
    let mut best = &considered[0];
    for o in &considered[1..] {
        if o.mse < best.mse {
            best = o;
        }
    }
    let metadata = SolutionMetadata {
        seed: config.rng_seed,
        iterations: considered.iter().map(|o| o.iterations).sum(),
        restarts: considered.len() as u32,
        best_restart: best.restart,
        converged: best.converged,
        wall_time_s: 0.0,
    };
    SolutionSet::from_params(*spec, &best.params, metadata)
}

/// Multi-start search for a MUB family. Reproducible: the same seed and
/// config give bit-identical phases and metadata.
pub fn optimize(spec: &DeviceSpec, config: &OptimizerConfig) -> Result<SolutionSet> {
    config.validate()?;
    let mut outcomes = Vec::new();
    for restart in 0..config.restarts {
        let outcome = optimize_restart(spec, config, restart)?;
        let stop = outcome.mse <= config.tolerance;
        outcomes.push(outcome);
        if stop {
            break;
        }
    }
    finalize_restarts(spec, config, &outcomes)
}

// ---------------------------------------------------------------------------
// Validity checks
// ---------------------------------------------------------------------------

/// Probability weight that the computational inputs deposit into a guard band
/// of width `S/8` around the wrap-around seam (the bins diametrically
/// opposite the output window). The truncated space is circular, so genuine
/// solutions must keep this small; values near 1 mean the "solution" relies
/// on wrap-around and will not survive on physical hardware.
pub fn leakage(transfer: &TransferSet) -> f64 {
    let spec = transfer.spec();
    let s = spec.modes();
    let band = s / 8;
    if band == 0 {
        return 0.0;
    }
    let start = (spec.output_offset() + s / 2 + s - band / 2) % s;
    let mut worst = 0.0f64;
    for basis in 0..spec.num_bases() {
        let w = transfer.transfer(basis);
        for k in 0..spec.dim() {
            let mut weight = 0.0;
            for t in 0..band {
                weight += w[((start + t) % s, k)].norm_sqr();
            }
            worst = worst.max(weight);
        }
    }
    worst
}

/// Gauge-aware distance between each cell's EOM patterns across bases:
/// the maximum over basis pairs of the largest per-bin phase difference,
/// after removing a common offset (a global phase has no physical effect).
///
/// Solvers sometimes converge to configurations where a later EOM carries the
/// same pattern for every basis; this report makes such accidental sharing
/// visible without ever enforcing it.
pub fn eom_sharing_report(solution: &SolutionSet) -> Vec<f64> {
    let spec = solution.spec();
    let mut report = Vec::with_capacity(spec.cells());
    for cell in 0..spec.cells() {
        let mut worst = 0.0f64;
        for m in 0..spec.num_bases() {
            for p in (m + 1)..spec.num_bases() {
                worst = worst.max(pattern_distance(
                    solution.eom(cell, m).values(),
                    solution.eom(cell, p).values(),
                ));
            }
        }
        report.push(worst);
    }
    report
}

fn pattern_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Circular mean of the differences estimates the common offset.
    let mut mean = C64::ZERO;
    for (&x, &y) in a.iter().zip(b) {
        mean += C64::from_polar(1.0, x - y);
    }
    let offset = mean.arg();
    a.iter()
        .zip(b)
        .map(|(&x, &y)| wrap_to_pi(x - y - offset).abs())
        .fold(0.0, f64::max)
}

fn wrap_to_pi(x: f64) -> f64 {
    let w = x - TAU * (x / TAU).round();
    if w > core::f64::consts::PI {
        w - TAU
    } else if w < -core::f64::consts::PI {
        w + TAU
    } else {
        w
    }
}
