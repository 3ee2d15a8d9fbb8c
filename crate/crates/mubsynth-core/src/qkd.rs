//! Monte-Carlo phase-error robustness study for `(d+1)`-basis QKD.
//!
//! Bob's measurement device is rebuilt with Gaussian phase errors on every
//! EOM modulation value and every FBG chip (amplitudes untouched), while
//! Alice keeps sending the ideal states. Each perturbed device yields full
//! probability tables, from which the quantum bit error rate and the secret
//! key fraction follow.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;

// f64 math through libm when built without std; in graphs where std is
// present the inherent methods shadow the trait and this import goes unused.
#[allow(unused_imports)]
use num_traits::Float;

use crate::cascade;
use crate::matrix::C64;
use crate::mub::{self, ProbabilityTables, TransferSet};
use crate::optimize::SolutionSet;
use crate::stream;
use crate::{Error, Result};

/// How matched-basis statistics combine into one QBER figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QberWeighting {
    /// Unweighted average over all `d(d+1)` state/basis pairs (default).
    #[default]
    Unweighted,
    /// Weight each pair by its detection probability, i.e. average over
    /// *detected* events rather than prepared ones.
    DetectionWeighted,
}

/// Monte-Carlo run parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationConfig {
    pub trials: u32,
    pub rng_seed: u64,
    pub weighting: QberWeighting,
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        Ok(())
    }
}

/// Per-noise-level statistics over the successful trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaStats {
    pub sigma: f64,
    pub qber_mean: f64,
    pub qber_std: f64,
    pub skf_mean: f64,
    pub skf_std: f64,
    pub trials: u32,
    /// Trials whose matched-basis conditionals were undefined; excluded from
    /// the statistics but counted here.
    pub failed_trials: u32,
}

/// Outcome of a full σ sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct QkdReport {
    pub dim: usize,
    pub source_solution: String,
    pub per_sigma: Vec<SigmaStats>,
}

impl QkdReport {
    /// A solution is unusable when more than 1% of trials failed at any
    /// noise level.
    pub fn usable(&self) -> bool {
        self.per_sigma
            .iter()
            .all(|s| 100 * s.failed_trials <= s.trials)
    }
}

/// Per-trial values retained behind the verbose reporting path.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaTrials {
    pub sigma: f64,
    /// `(qber, skf)` per successful trial, `None` for failed ones.
    pub outcomes: Vec<Option<(f64, f64)>>,
}

/// Draw a perturbed Bob-side device: every EOM phase gains `N(0, σ²)` noise
/// and every FBG chip is rotated by an independent `N(0, σ²)` phase. Chip
/// amplitudes are untouched, so the total chip power stays exactly 1, but the
/// rebuilt circulant is only approximately unitary.
///
/// Draw order is fixed (FBG chips cell by cell, then EOM patterns cell-major,
/// basis-minor) so a given RNG stream always produces the same device.
pub fn perturb(solution: &SolutionSet, sigma: f64, rng: &mut impl Rng) -> Result<TransferSet> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("sigma must be finite and >= 0"));
    }
    let spec = *solution.spec();
    let chips: Vec<Vec<C64>> = solution
        .fbg()
        .iter()
        .map(|phases| {
            cascade::fbg_impulse_response(phases)
                .into_iter()
                .map(|chip| {
                    let delta: f64 = sigma * rng.sample::<f64, _>(StandardNormal);
                    chip * C64::from_polar(1.0, delta)
                })
                .collect()
        })
        .collect();
    let eoms: Vec<Vec<Vec<f64>>> = (0..spec.cells())
        .map(|cell| {
            (0..spec.num_bases())
                .map(|basis| {
                    solution
                        .eom(cell, basis)
                        .values()
                        .iter()
                        .map(|&phase| phase + sigma * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect()
        })
        .collect();
    let w = (0..spec.num_bases())
        .map(|basis| {
            let eom_refs: Vec<&[f64]> = (0..spec.cells())
                .map(|cell| eoms[cell][basis].as_slice())
                .collect();
            cascade::cascade_from_parts(&chips, &eom_refs)
        })
        .collect::<Result<Vec<_>>>()?;
    TransferSet::from_transfer_matrices(spec, w)
}

fn matched_conditionals(tables: &ProbabilityTables) -> Result<Vec<(f64, f64)>> {
    let d = tables.dim();
    let mut pairs = Vec::with_capacity(d * tables.bases());
    for m in 0..tables.bases() {
        for n in 0..d {
            if !tables.is_defined(m, m, n) {
                return Err(Error::UndefinedConditional { basis: m, state: n });
            }
            pairs.push((tables.postselected(m, m, n, n), tables.detection(m, m, n)));
        }
    }
    Ok(pairs)
}

/// Quantum bit (symbol) error rate: one minus the average matched-basis
/// correct-bin conditional probability over all `d(d+1)` state/basis pairs.
///
/// Fails if any matched-basis conditional is undefined; such a solution
/// cannot key at all.
pub fn qber_from_tables(tables: &ProbabilityTables) -> Result<f64> {
    qber_with_weighting(tables, QberWeighting::Unweighted)
}

/// [`qber_from_tables`] with an explicit weighting choice.
pub fn qber_with_weighting(tables: &ProbabilityTables, weighting: QberWeighting) -> Result<f64> {
    let pairs = matched_conditionals(tables)?;
    let qber = match weighting {
        QberWeighting::Unweighted => {
            let total: f64 = pairs.iter().map(|(correct, _)| correct).sum();
            1.0 - total / pairs.len() as f64
        }
        QberWeighting::DetectionWeighted => {
            let weighted: f64 = pairs.iter().map(|(correct, det)| correct * det).sum();
            let weight: f64 = pairs.iter().map(|(_, det)| det).sum();
            1.0 - weighted / weight
        }
    };
    // Conditionals can fractionally exceed 1 for approximately unitary
    // devices; the rate is still a probability.
    Ok(qber.clamp(0.0, 1.0))
}

/// Asymptotic secret-key fraction (bits per sifted symbol) of the asymmetric
/// `(d+1)`-basis qudit protocol under collective attacks, following
/// L. Sheridan and V. Scarani, Phys. Rev. A 82, 030301(R) (2010):
///
/// ```text
/// r(Q) = log2 d − H2(x) − x log2(d² − 1),   x = Q (d+1)/d,
/// ```
///
/// clamped to zero where negative (`H2` is the binary entropy). Measuring a
/// disturbance `Q` in every one of the `d+1` bases pins the effective channel
/// to the isotropic one, whose Devetak-Winter rate this is. At `Q = 0` the
/// rate is exactly `log2 d`, and the positive-rate threshold grows with `d`
/// (11.0% → 12.6% already from BB84 to six-state at `d = 2`).
pub fn skf(qber: f64, dim: usize) -> Result<f64> {
    if dim < 2 {
        return Err(Error::invalid("protocol dimension must be >= 2"));
    }
    if !(0.0..=1.0).contains(&qber) || !qber.is_finite() {
        return Err(Error::invalid(format!("QBER {qber} outside [0, 1]")));
    }
    let d = dim as f64;
    let key_bits = d.log2();
    if qber == 0.0 {
        return Ok(key_bits);
    }
    let x = qber * (d + 1.0) / d;
    if x >= 1.0 {
        return Ok(0.0);
    }
    let h2 = -x * x.log2() - (1.0 - x) * (1.0 - x).log2();
    let rate = key_bits - h2 - x * (d * d - 1.0).log2();
    Ok(rate.max(0.0))
}

/// Monte-Carlo σ sweep. For each noise level, `trials` independent perturbed
/// devices are generated (stream `(rng_seed, sigma index, trial)` each),
/// Alice's ideal states are pushed through them, and QBER/SKF statistics are
/// accumulated in fixed trial order. Deterministic for a given seed.
pub fn monte_carlo(
    solution: &SolutionSet,
    sigmas: &[f64],
    config: &PerturbationConfig,
    source: impl Into<String>,
) -> Result<QkdReport> {
    monte_carlo_with_trials(solution, sigmas, config, source).map(|(report, _)| report)
}

/// [`monte_carlo`] keeping every per-trial outcome for verbose reporting.
pub fn monte_carlo_with_trials(
    solution: &SolutionSet,
    sigmas: &[f64],
    config: &PerturbationConfig,
    source: impl Into<String>,
) -> Result<(QkdReport, Vec<SigmaTrials>)> {
    config.validate()?;
    if sigmas.is_empty() {
        return Err(Error::invalid("at least one sigma value required"));
    }
    let spec = solution.spec();
    let ideal = TransferSet::from_solution(solution)?;
    let states = mub::basis_states(&ideal)?;
    let mut per_sigma = Vec::with_capacity(sigmas.len());
    let mut all_trials = Vec::with_capacity(sigmas.len());
    for (sigma_index, &sigma) in sigmas.iter().enumerate() {
        let mut outcomes: Vec<Option<(f64, f64)>> = Vec::with_capacity(config.trials as usize);
        for trial in 0..config.trials {
            let mut rng = stream::trial_stream(config.rng_seed, sigma_index, trial);
            let perturbed = perturb(solution, sigma, &mut rng)?;
            let tables = mub::probability_tables(&perturbed, &states)?;
            match qber_with_weighting(&tables, config.weighting) {
                Ok(qber) => {
                    let rate = skf(qber, spec.dim())?;
                    outcomes.push(Some((qber, rate)));
                }
                Err(Error::UndefinedConditional { .. }) => outcomes.push(None),
                Err(other) => return Err(other),
            }
        }
        let qbers: Vec<f64> = outcomes.iter().flatten().map(|(q, _)| *q).collect();
        let rates: Vec<f64> = outcomes.iter().flatten().map(|(_, r)| *r).collect();
        let failed = (outcomes.len() - qbers.len()) as u32;
        let (qber_mean, qber_std) = mean_and_std(&qbers);
        let (skf_mean, skf_std) = mean_and_std(&rates);
        per_sigma.push(SigmaStats {
            sigma,
            qber_mean,
            qber_std,
            skf_mean,
            skf_std,
            trials: config.trials,
            failed_trials: failed,
        });
        all_trials.push(SigmaTrials { sigma, outcomes });
    }
    let report = QkdReport {
        dim: spec.dim(),
        source_solution: source.into(),
        per_sigma,
    };
    Ok((report, all_trials))
}

/// Mean and sample standard deviation, summed in slice order.
fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}
