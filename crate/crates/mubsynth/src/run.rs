//! Parallel multi-start execution.
//!
//! Restarts are independent, so they fan out across a rayon pool; the
//! combination rule in [`mubsynth_core::optimize::finalize_restarts`] then
//! reproduces the sequential driver's choice exactly, making the result
//! bit-identical for any worker count.

use rayon::prelude::*;

use crate::Result;
use mubsynth_core::cascade::DeviceSpec;
use mubsynth_core::optimize::{
    finalize_restarts, optimize_restart, OptimizerConfig, RestartOutcome, SolutionSet,
};

/// Run all restarts on `workers` threads (0 = machine parallelism) and
/// combine them. Per-restart progress lines go to stderr when `verbose`.
pub fn optimize_parallel(
    spec: &DeviceSpec,
    config: &OptimizerConfig,
    workers: usize,
    verbose: bool,
) -> Result<SolutionSet> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool construction cannot fail for sane worker counts");
    let outcomes: Vec<RestartOutcome> = pool.install(|| {
        (0..config.restarts)
            .into_par_iter()
            .map(|restart| {
                let outcome = optimize_restart(spec, config, restart)?;
                if verbose {
                    eprintln!(
                        "restart {restart}: mse {:.6e} after {} iterations{}",
                        outcome.mse,
                        outcome.iterations,
                        if outcome.converged {
                            ""
                        } else {
                            " (not converged)"
                        }
                    );
                }
                Ok(outcome)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(finalize_restarts(spec, config, &outcomes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mubsynth_core::optimize::{optimize, GradientMode};

    #[test]
    fn parallel_matches_sequential_for_any_worker_count() {
        let spec = DeviceSpec::new(8, 2, 2, 0).unwrap();
        let config = OptimizerConfig {
            restarts: 4,
            max_iterations: 150,
            gradient_mode: GradientMode::Analytic,
            fd_step: 1e-5,
            tolerance: 0.0,
            rng_seed: 11,
            chip_halfwidth: None,
        };
        let sequential = optimize(&spec, &config).unwrap();
        for workers in [1, 2] {
            let parallel = optimize_parallel(&spec, &config, workers, false).unwrap();
            assert_eq!(parallel.to_params(), sequential.to_params());
            assert_eq!(parallel.metadata(), sequential.metadata());
        }
    }
}
