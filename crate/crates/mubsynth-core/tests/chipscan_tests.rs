//! Chip-truncation sweeps.

use mubsynth_core::cascade::DeviceSpec;
use mubsynth_core::chipscan::{chip_sweep, retained_power, truncate_chips};
use mubsynth_core::mub::{epsilon_mse, TransferSet};
use mubsynth_core::optimize::{SolutionMetadata, SolutionSet};
use rand::Rng;
use std::f64::consts::TAU;

fn random_solution(spec: DeviceSpec, seed: u64) -> SolutionSet {
    let mut rng = mubsynth_core::stream::substream(seed, 5);
    let params: Vec<f64> = (0..spec.param_count())
        .map(|_| rng.random::<f64>() * TAU)
        .collect();
    SolutionSet::from_params(spec, &params, SolutionMetadata::default()).unwrap()
}

#[test]
fn full_retention_is_exact_for_odd_s() {
    let spec = DeviceSpec::new_relaxed(15, 2, 2, 0).unwrap();
    let solution = random_solution(spec, 1);
    let truncated = truncate_chips(&solution, 15).unwrap();
    let reference = TransferSet::from_solution(&solution).unwrap();
    for m in 0..spec.num_bases() {
        assert!(truncated.transfer(m).max_abs_diff(reference.transfer(m)) < 1e-14);
    }
}

#[test]
fn full_retention_even_s_is_accepted_and_exact() {
    let spec = DeviceSpec::new(16, 2, 2, 0).unwrap();
    let solution = random_solution(spec, 2);
    let truncated = truncate_chips(&solution, 16).unwrap();
    let reference = TransferSet::from_solution(&solution).unwrap();
    for m in 0..spec.num_bases() {
        assert!(truncated.transfer(m).max_abs_diff(reference.transfer(m)) < 1e-14);
    }
}

#[test]
fn identity_fbg_is_untouched_by_single_chip_truncation() {
    let spec = DeviceSpec::new(16, 2, 2, 0).unwrap();
    let solution = SolutionSet::zeroed(spec);
    let truncated = truncate_chips(&solution, 1).unwrap();
    let reference = TransferSet::from_solution(&solution).unwrap();
    for m in 0..spec.num_bases() {
        assert!(truncated.transfer(m).max_abs_diff(reference.transfer(m)) < 1e-14);
    }
}

#[test]
fn single_chip_truncation_scales_the_cascade() {
    // with K = 1 each FBG collapses to c[0] times the identity, so the
    // cascade is diagonal: epsilon equals the identity-set value scaled by
    // the surviving amplitudes' interference pattern. Verify against a
    // direct reconstruction.
    let spec = DeviceSpec::new(8, 1, 2, 0).unwrap();
    let solution = random_solution(spec, 3);
    let truncated = truncate_chips(&solution, 1).unwrap();
    let chips = mubsynth_core::cascade::fbg_impulse_response(&solution.fbg()[0]);
    for m in 0..spec.num_bases() {
        let eom = mubsynth_core::cascade::eom_matrix(solution.eom(0, m));
        // expected: c[0] * D
        let mut expected = eom.clone();
        for r in 0..8 {
            for c in 0..8 {
                expected[(r, c)] *= chips[0];
            }
        }
        assert!(
            truncated.transfer(m).max_abs_diff(&expected) < 1e-13,
            "basis {m}"
        );
    }
}

#[test]
fn truncation_rejects_even_and_out_of_range_counts() {
    let spec = DeviceSpec::new(16, 1, 2, 0).unwrap();
    let solution = SolutionSet::zeroed(spec);
    assert!(truncate_chips(&solution, 0).is_err());
    assert!(truncate_chips(&solution, 2).is_err());
    assert!(truncate_chips(&solution, 17).is_err());
    assert!(truncate_chips(&solution, 4).is_err());
    assert!(truncate_chips(&solution, 3).is_ok());
}

#[test]
fn sweep_ends_at_full_mse_exactly() {
    let spec = DeviceSpec::new(16, 2, 2, 0).unwrap();
    let solution = random_solution(spec, 4);
    let sweep = chip_sweep(&solution).unwrap();
    assert_eq!(sweep.chip_counts.first(), Some(&1));
    assert_eq!(sweep.chip_counts.last(), Some(&16));
    assert!(sweep.chip_counts.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(*sweep.mse.last().unwrap(), sweep.full_mse);
    let reference = epsilon_mse(TransferSet::from_solution(&solution).unwrap().windows()).unwrap();
    assert!((sweep.full_mse - reference).abs() < 1e-14);
}

#[test]
fn identity_solution_sweep_is_flat_at_the_identity_value() {
    let spec = DeviceSpec::new(16, 2, 2, 0).unwrap();
    let solution = SolutionSet::zeroed(spec);
    let sweep = chip_sweep(&solution).unwrap();
    for (&k, &mse) in sweep.chip_counts.iter().zip(&sweep.mse) {
        assert!((mse - 0.25).abs() < 1e-14, "K = {k}: {mse}");
    }
}

#[test]
fn retained_power_never_exceeds_one_and_reaches_one() {
    let spec = DeviceSpec::new(16, 2, 2, 0).unwrap();
    let solution = random_solution(spec, 5);
    let mut previous = vec![0.0; 2];
    for k in (1..=15).step_by(2).chain([16]) {
        let powers = retained_power(&solution, k).unwrap();
        for (cell, &p) in powers.iter().enumerate() {
            assert!(p <= 1.0 + 1e-12, "K = {k}: power {p}");
            assert!(p + 1e-12 >= previous[cell], "power must grow with K");
        }
        previous = powers;
    }
    let full = retained_power(&solution, 16).unwrap();
    for p in full {
        assert!((p - 1.0).abs() < 1e-12);
    }
}
