//! MUB metrics against analytic constructions and brute-force index loops.

use mubsynth_core::cascade::DeviceSpec;
use mubsynth_core::matrix::{CMatrix, C64};
use mubsynth_core::mub::{
    basis_states, epsilon_mse, mub_overlap, probability_tables, table_quality, TransferSet,
};
use mubsynth_core::optimize::SolutionSet;
use mubsynth_core::Error;
use proptest::prelude::*;
use rand::Rng;
use std::f64::consts::TAU;

fn unitary_dft(d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |l, k| {
        C64::from_polar(1.0 / (d as f64).sqrt(), -TAU * (l * k) as f64 / d as f64)
    })
}

/// Quadratic-phase MUB family for prime dimension: the computational basis
/// plus `V_a = D_a F D_a` with `D_a = diag(ω^{a j²})` (ω a d-th root for odd
/// d, 4th root for d = 2). Unbiased in both row and column orientations, so
/// it doubles as an oracle for the measurement tables.
fn weyl_heisenberg_family(d: usize) -> Vec<CMatrix> {
    assert!(
        d == 2 || d == 3,
        "oracle implemented for prime d in {{2, 3}}"
    );
    let f = unitary_dft(d);
    let omega_order = if d == 2 { 4.0 } else { d as f64 };
    let mut family = vec![CMatrix::identity(d)];
    for a in 0..d {
        let quad = |j: usize| C64::from_polar(1.0, TAU * (a * j * j) as f64 / omega_order);
        let v = CMatrix::from_fn(d, d, |j, t| quad(j) * f[(j, t)] * quad(t));
        family.push(v);
    }
    family
}

/// Independent element-wise overlap: plain index loops, no matrix products.
fn oracle_overlap(va: &CMatrix, vb: &CMatrix) -> Vec<Vec<f64>> {
    let d = va.rows();
    (0..d)
        .map(|l| {
            (0..d)
                .map(|k| {
                    let mut acc = C64::ZERO;
                    for j in 0..d {
                        acc += va[(j, l)].conj() * vb[(j, k)];
                    }
                    acc.norm_sqr()
                })
                .collect()
        })
        .collect()
}

fn oracle_epsilon(vs: &[CMatrix]) -> f64 {
    let d = vs[0].rows();
    let inv_d = 1.0 / d as f64;
    let mut acc = 0.0;
    for m in 0..vs.len() {
        for p in (m + 1)..vs.len() {
            let overlap = oracle_overlap(&vs[m], &vs[p]);
            let mut pair = 0.0;
            for row in &overlap {
                for &g in row {
                    pair += (g - inv_d) * (g - inv_d);
                }
            }
            acc += pair / (d * d) as f64;
        }
    }
    2.0 * acc / (d * (d + 1)) as f64
}

fn random_matrix(rng: &mut impl Rng, d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| {
        C64::new(
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
        )
    })
}

#[test]
fn overlap_of_identity_with_itself() {
    let i = CMatrix::identity(2);
    let overlap = mub_overlap(&i, &i).unwrap();
    assert_eq!(overlap[(0, 0)], 1.0);
    assert_eq!(overlap[(1, 1)], 1.0);
    assert_eq!(overlap[(0, 1)], 0.0);
    assert_eq!(overlap[(1, 0)], 0.0);
}

#[test]
fn overlap_of_identity_with_dft_is_uniform() {
    let overlap = mub_overlap(&CMatrix::identity(2), &unitary_dft(2)).unwrap();
    for l in 0..2 {
        for k in 0..2 {
            assert!((overlap[(l, k)] - 0.5).abs() < 1e-15);
        }
    }
}

#[test]
fn overlap_matches_index_loop_oracle() {
    let mut rng = mubsynth_core::stream::substream(31, 0);
    for _ in 0..5 {
        let va = random_matrix(&mut rng, 3);
        let vb = random_matrix(&mut rng, 3);
        let overlap = mub_overlap(&va, &vb).unwrap();
        let oracle = oracle_overlap(&va, &vb);
        for l in 0..3 {
            for k in 0..3 {
                assert!((overlap[(l, k)] - oracle[l][k]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn overlap_rejects_shape_mismatch() {
    assert!(mub_overlap(&CMatrix::identity(2), &CMatrix::identity(3)).is_err());
}

#[test]
fn epsilon_of_spec_example_triple_is_zero() {
    // {I, F2, (1/sqrt(2)) [[1, 1], [i, -i]]} is pairwise unbiased.
    let third = CMatrix::from_fn(2, 2, |r, c| match (r, c) {
        (0, _) => C64::new(1.0 / 2.0_f64.sqrt(), 0.0),
        (1, 0) => C64::new(0.0, 1.0 / 2.0_f64.sqrt()),
        _ => C64::new(0.0, -(1.0 / 2.0_f64.sqrt())),
    });
    let eps = epsilon_mse(&[CMatrix::identity(2), unitary_dft(2), third]).unwrap();
    assert!(eps < 1e-15, "eps = {eps}");
}

#[test]
fn epsilon_of_identity_triple_is_exactly_one_quarter() {
    let set = vec![
        CMatrix::identity(2),
        CMatrix::identity(2),
        CMatrix::identity(2),
    ];
    assert_eq!(epsilon_mse(&set).unwrap(), 0.25);
}

#[test]
fn epsilon_of_weyl_heisenberg_families_vanishes() {
    for d in [2, 3] {
        let family = weyl_heisenberg_family(d);
        let eps = epsilon_mse(&family).unwrap();
        assert!(eps < 1e-14, "d = {d}: eps = {eps}");
        // every off-diagonal pair overlap is uniform 1/d
        for m in 0..family.len() {
            for p in 0..family.len() {
                if m == p {
                    continue;
                }
                let overlap = mub_overlap(&family[m], &family[p]).unwrap();
                for &g in overlap.entries() {
                    assert!((g - 1.0 / d as f64).abs() < 1e-12, "d = {d}");
                }
            }
        }
    }
}

#[test]
fn epsilon_matches_index_loop_oracle_on_random_sets() {
    let mut rng = mubsynth_core::stream::substream(32, 0);
    for d in [2usize, 3, 4] {
        for _ in 0..20 {
            let set: Vec<CMatrix> = (0..=d).map(|_| random_matrix(&mut rng, d)).collect();
            let eps = epsilon_mse(&set).unwrap();
            let oracle = oracle_epsilon(&set);
            assert!((eps - oracle).abs() < 1e-12, "d = {d}: {eps} vs {oracle}");
        }
    }
}

#[test]
fn epsilon_rejects_wrong_family_size() {
    assert!(epsilon_mse(&[CMatrix::identity(2), CMatrix::identity(2)]).is_err());
    assert!(epsilon_mse(&[]).is_err());
}

#[test]
fn epsilon_is_invariant_under_global_phases() {
    let mut rng = mubsynth_core::stream::substream(33, 0);
    let family = weyl_heisenberg_family(3);
    let eps = epsilon_mse(&family).unwrap();
    let rephased: Vec<CMatrix> = family
        .iter()
        .map(|v| {
            let phase = C64::from_polar(1.0, rng.random::<f64>() * TAU);
            CMatrix::from_fn(v.rows(), v.cols(), |r, c| v[(r, c)] * phase)
        })
        .collect();
    let eps2 = epsilon_mse(&rephased).unwrap();
    assert!((eps - eps2).abs() < 1e-12);

    // also on a non-trivial set
    let set: Vec<CMatrix> = (0..=2).map(|_| random_matrix(&mut rng, 2)).collect();
    let base = epsilon_mse(&set).unwrap();
    let rephased: Vec<CMatrix> = set
        .iter()
        .map(|v| {
            let phase = C64::from_polar(1.0, rng.random::<f64>() * TAU);
            CMatrix::from_fn(v.rows(), v.cols(), |r, c| v[(r, c)] * phase)
        })
        .collect();
    assert!((epsilon_mse(&rephased).unwrap() - base).abs() < 1e-12);
}

/// Embed a `d x d` window into an `S x S` transfer matrix as the top-left
/// block of a block-diagonal unitary (identity elsewhere).
fn embed_window(spec: &DeviceSpec, v: &CMatrix) -> CMatrix {
    let d = spec.dim();
    CMatrix::from_fn(spec.modes(), spec.modes(), |l, k| {
        if l < d && k < d {
            v[(l, k)]
        } else if l == k {
            C64::ONE
        } else {
            C64::ZERO
        }
    })
}

fn embedded_transfer_set(d: usize) -> TransferSet {
    let spec = DeviceSpec::new(8 * d, 1, d, 0).unwrap();
    let w = weyl_heisenberg_family(d)
        .iter()
        .map(|v| embed_window(&spec, v))
        .collect();
    TransferSet::from_transfer_matrices(spec, w).unwrap()
}

#[test]
fn basis_states_from_identity_and_dft_windows() {
    let transfer = embedded_transfer_set(3);
    let states = basis_states(&transfer).unwrap();
    assert_eq!(states.len(), 12);
    // basis 0 is the identity: state n = time-bin n
    let state = &states[1];
    assert_eq!((state.basis(), state.index()), (0, 1));
    assert!((state.amplitudes()[1] - C64::ONE).norm() < 1e-14);
    assert!((state.norm_factor() - 1.0).abs() < 1e-14);

    let spec = DeviceSpec::new(16, 1, 2, 0).unwrap();
    let w = vec![
        embed_window(&spec, &CMatrix::identity(2)),
        embed_window(&spec, &unitary_dft(2)),
        embed_window(&spec, &CMatrix::identity(2)),
    ];
    let transfer = TransferSet::from_transfer_matrices(spec, w).unwrap();
    let states = basis_states(&transfer).unwrap();
    let dft_state = &states[2]; // basis 1, n = 0
    assert_eq!((dft_state.basis(), dft_state.index()), (1, 0));
    let r = 1.0 / 2.0_f64.sqrt();
    assert!((dft_state.amplitudes()[0] - C64::new(r, 0.0)).norm() < 1e-14);
    assert!((dft_state.amplitudes()[1] - C64::new(r, 0.0)).norm() < 1e-14);
}

#[test]
fn basis_state_norm_factor_matches_row_norm_oracle() {
    let mut rng = mubsynth_core::stream::substream(34, 0);
    let spec = DeviceSpec::new(8, 1, 2, 0).unwrap();
    let v0 = random_matrix(&mut rng, 2);
    let v1 = random_matrix(&mut rng, 2);
    let v2 = random_matrix(&mut rng, 2);
    let w = vec![
        embed_window(&spec, &v0),
        embed_window(&spec, &v1),
        embed_window(&spec, &v2),
    ];
    let transfer = TransferSet::from_transfer_matrices(spec, w).unwrap();
    let states = basis_states(&transfer).unwrap();
    for state in &states {
        let v = [&v0, &v1, &v2][state.basis()];
        let mut norm_sq = 0.0;
        for k in 0..2 {
            norm_sq += v[(state.index(), k)].norm_sqr();
        }
        assert!((state.norm_factor() - norm_sq.sqrt()).abs() < 1e-12);
        let total: f64 = state.amplitudes().iter().map(|a| a.norm_sqr()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn degenerate_window_row_is_an_error() {
    let spec = DeviceSpec::new(8, 1, 2, 0).unwrap();
    let mut degenerate = CMatrix::identity(2);
    degenerate[(1, 1)] = C64::ZERO;
    let w = vec![
        embed_window(&spec, &CMatrix::identity(2)),
        embed_window(&spec, &degenerate),
        embed_window(&spec, &CMatrix::identity(2)),
    ];
    let transfer = TransferSet::from_transfer_matrices(spec, w).unwrap();
    assert_eq!(
        basis_states(&transfer),
        Err(Error::DegenerateState { basis: 1, state: 1 })
    );
}

#[test]
fn identity_cascade_reproduces_the_time_bin_basis() {
    let spec = DeviceSpec::new(16, 1, 2, 0).unwrap();
    let solution = SolutionSet::zeroed(spec);
    let transfer = TransferSet::from_solution(&solution).unwrap();
    let states = basis_states(&transfer).unwrap();
    let tables = probability_tables(&transfer, &states).unwrap();
    for p in 0..3 {
        for m in 0..3 {
            for n in 0..2 {
                assert!((tables.detection(p, m, n) - 1.0).abs() < 1e-12);
                for q in 0..2 {
                    let expected = if q == n { 1.0 } else { 0.0 };
                    assert!((tables.postselected(p, m, q, n) - expected).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn ideal_families_give_deterministic_matched_and_uniform_mismatched_tables() {
    for d in [2usize, 3] {
        let transfer = embedded_transfer_set(d);
        let states = basis_states(&transfer).unwrap();
        let tables = probability_tables(&transfer, &states).unwrap();
        for p in 0..=d {
            for m in 0..=d {
                for n in 0..d {
                    assert!((tables.detection(p, m, n) - 1.0).abs() < 1e-10);
                    for q in 0..d {
                        let expected = if p == m {
                            if q == n {
                                1.0
                            } else {
                                0.0
                            }
                        } else {
                            1.0 / d as f64
                        };
                        let got = tables.postselected(p, m, q, n);
                        assert!(
                            (got - expected).abs() < 1e-12,
                            "d={d} p={p} m={m} q={q} n={n}: {got} vs {expected}"
                        );
                    }
                }
            }
        }
        let quality = table_quality(&tables);
        assert!(quality.min_matched > 1.0 - 1e-12);
        assert!(quality.max_mismatch_deviation < 1e-12);
    }
}

#[test]
fn vanishing_detection_is_flagged_not_thrown() {
    let spec = DeviceSpec::new(16, 1, 2, 0).unwrap();
    let hadamard = unitary_dft(2);
    let r = 1.0 / 2.0_f64.sqrt();
    // rank-one "device": rows are fine, but it annihilates (1, -1)/sqrt(2)
    let rank_one = CMatrix::from_fn(2, 2, |_, _| C64::new(r, 0.0));
    let w = vec![
        embed_window(&spec, &hadamard),
        embed_window(&spec, &rank_one),
        embed_window(&spec, &CMatrix::identity(2)),
    ];
    let transfer = TransferSet::from_transfer_matrices(spec, w).unwrap();
    let states = basis_states(&transfer).unwrap();
    let tables = probability_tables(&transfer, &states).unwrap();
    // state 1 of basis 0 is (1, -1)/sqrt(2); measured by the rank-one basis
    assert!(!tables.is_defined(1, 0, 1));
    assert_eq!(tables.postselected(1, 0, 0, 1), 0.0);
    assert_eq!(tables.undefined_count(), 1);
    // everything else is defined and normalized
    for p in 0..3 {
        for m in 0..3 {
            for n in 0..2 {
                if tables.is_defined(p, m, n) {
                    let sum: f64 = (0..2).map(|q| tables.postselected(p, m, q, n)).sum();
                    assert!((sum - 1.0).abs() < 1e-10);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Conditional rows are normalized whenever they are defined.
    #[test]
    fn conditionals_are_normalized(seed in 0u64..500) {
        let mut rng = mubsynth_core::stream::substream(seed, 44);
        let spec = DeviceSpec::new(8, 1, 2, 0).unwrap();
        let w: Vec<CMatrix> = (0..3).map(|_| embed_window(&spec, &random_matrix(&mut rng, 2))).collect();
        let transfer = TransferSet::from_transfer_matrices(spec, w).unwrap();
        if let Ok(states) = basis_states(&transfer) {
            let tables = probability_tables(&transfer, &states).unwrap();
            for p in 0..3 {
                for m in 0..3 {
                    for n in 0..2 {
                        prop_assert!(tables.detection(p, m, n) >= 0.0);
                        if tables.is_defined(p, m, n) {
                            let sum: f64 = (0..2).map(|q| tables.postselected(p, m, q, n)).sum();
                            prop_assert!((sum - 1.0).abs() < 1e-10);
                        }
                    }
                }
            }
        }
    }
}
