use chs_core::qla::blocks::{ensemble_rank, gram_trace_distance};
use chs_core::qla::linalg::{hermitian_eigenvalues, trace};
use chs_core::qla::metrics::{fidelity, trace_distance, trace_distance_matrices};
use chs_core::qla::{DenseOperator, DensityOperator, Ensemble, PureState, RegisterShape, C64};
use chs_core::rng::substream;
use chs_core::Budget;
use proptest::prelude::*;
use rand::Rng;

const LIMIT: usize = 4096;

fn random_state<R: Rng>(shape: &RegisterShape, rng: &mut R, density: f64) -> PureState {
    let dim = shape.dim().unwrap() as u64;
    let mut amps: Vec<(u64, C64)> = Vec::new();
    for l in 0..dim {
        let (keep, re, im) = (
            rng.random::<f64>(),
            rng.random::<f64>(),
            rng.random::<f64>(),
        );
        if keep < density {
            amps.push((l, C64::new(re - 0.5, im - 0.5)));
        }
    }
    if amps.is_empty() {
        amps.push((rng.random_range(0..dim), C64::new(1.0, 0.0)));
    }
    PureState::normalized(shape.clone(), amps).unwrap()
}

fn random_ensemble(shape: &RegisterShape, seed: u64, members: usize, density: f64) -> Ensemble {
    let mut rng = substream(seed, 0);
    let ms = (0..members)
        .map(|_| {
            (
                rng.random::<f64>() + 0.05,
                random_state(shape, &mut rng, density),
            )
        })
        .collect::<Vec<_>>();
    let total: f64 = ms.iter().map(|m| m.0).sum();
    Ensemble::new(
        shape.clone(),
        ms.into_iter().map(|(w, s)| (w / total, s)).collect(),
    )
    .unwrap()
}

fn shape(widths: &[u32]) -> RegisterShape {
    RegisterShape::new(widths.to_vec()).unwrap()
}

fn dense(e: &Ensemble) -> DensityOperator {
    DensityOperator::Dense(e.to_dense(LIMIT).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trace_distance_is_a_metric(seed in any::<u64>(), k in 1usize..4, density in 0.2f64..1.0) {
        let s = shape(&[1, 2]);
        let a = random_ensemble(&s, seed, k, density);
        let b = random_ensemble(&s, seed ^ 1, k, density);
        let c = random_ensemble(&s, seed ^ 2, k + 1, density);
        let (a, b, c) = (a.into(), b.into(), c.into());
        let ab = trace_distance(&a, &b).unwrap();
        let ba = trace_distance(&b, &a).unwrap();
        let ac = trace_distance(&a, &c).unwrap();
        let cb = trace_distance(&c, &b).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab <= ac + cb + 1e-9);
        prop_assert!(trace_distance(&a, &a).unwrap() < 1e-9);
        prop_assert!((0.0..=1.0 + 1e-9).contains(&ab));
    }

    #[test]
    fn partial_trace_contracts(seed in any::<u64>(), k in 1usize..4, keep in prop::sample::subsequence(vec![0usize, 1, 2], 1..3)) {
        let s = shape(&[1, 1, 2]);
        let a = random_ensemble(&s, seed, k, 0.6);
        let b = random_ensemble(&s, seed.wrapping_add(7), k, 0.6);
        let full = gram_trace_distance(&a, &b).unwrap();
        let ra = a.partial_trace(&keep).unwrap();
        let rb = b.partial_trace(&keep).unwrap();
        let reduced = gram_trace_distance(&ra, &rb).unwrap();
        prop_assert!(reduced <= full + 1e-8, "{reduced} > {full}");
    }

    #[test]
    fn gram_path_matches_dense(seed in any::<u64>(), k in 1usize..5, density in 0.05f64..0.7) {
        let s = shape(&[2, 2]);
        let a = random_ensemble(&s, seed, k, density);
        let b = random_ensemble(&s, seed ^ 0xabc, k, density);
        let g = gram_trace_distance(&a, &b).unwrap();
        let d = trace_distance(&dense(&a), &dense(&b)).unwrap();
        prop_assert!((g - d).abs() < 1e-8, "gram {g} vs dense {d}");
    }

    #[test]
    fn fidelity_is_multiplicative(seed in any::<u64>(), k in 1usize..3) {
        let s = shape(&[1]);
        let r1 = random_ensemble(&s, seed, k, 1.0);
        let s1 = random_ensemble(&s, seed ^ 3, k + 1, 1.0);
        let r2 = random_ensemble(&s, seed ^ 5, k + 1, 1.0);
        let s2 = random_ensemble(&s, seed ^ 9, k, 1.0);
        let f1 = fidelity(&dense(&r1), &dense(&s1)).unwrap();
        let f2 = fidelity(&dense(&r2), &dense(&s2)).unwrap();
        let joint = fidelity(&dense(&r1.tensor(&r2).unwrap()), &dense(&s1.tensor(&s2).unwrap())).unwrap();
        prop_assert!((joint - f1 * f2).abs() < 1e-8, "{joint} vs {}", f1 * f2);
    }

    #[test]
    fn trace_squared_below_rank_times_purity(seed in any::<u64>(), k in 1usize..6, scale in 0.1f64..3.0) {
        let s = shape(&[1, 2]);
        let e = random_ensemble(&s, seed, k, 0.5);
        let m = e.to_dense(LIMIT).unwrap().into_matrix() * C64::new(scale, 0.0);
        let rank = ensemble_rank(&e, 1e-10, &Budget::default()).unwrap() as f64;
        let tr = trace(&m).re;
        let purity = trace(&(&m * &m)).re;
        prop_assert!(tr * tr <= rank * purity * (1.0 + 1e-9) + 1e-12);
    }
}

#[test]
fn equal_operators_have_zero_distance_and_unequal_do_not() {
    let s = shape(&[2]);
    let a = random_ensemble(&s, 11, 3, 1.0);
    let d = dense(&a);
    assert!(trace_distance(&a.clone().into(), &d).unwrap() < 1e-12);
    let b = random_ensemble(&s, 12, 3, 1.0);
    assert!(trace_distance(&a.into(), &b.into()).unwrap() > 1e-3);
}

#[test]
fn dense_partial_trace_matches_ensemble_path() {
    let s = shape(&[1, 2, 1]);
    let e = random_ensemble(&s, 5, 4, 0.7);
    let via_ensemble = e.partial_trace(&[2, 0]).unwrap().to_dense(LIMIT).unwrap();
    let via_dense = e.to_dense(LIMIT).unwrap().partial_trace(&[2, 0]).unwrap();
    let gap = trace_distance_matrices(via_ensemble.matrix(), via_dense.matrix()).unwrap();
    assert!(gap < 1e-12);
    let vals = hermitian_eigenvalues(via_dense.matrix()).unwrap();
    assert!(vals.iter().all(|&v| v > -1e-12));
    assert!((vals.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn maximally_mixed_is_far_from_pure() {
    let s = shape(&[2]);
    let mixed = DensityOperator::Dense(DenseOperator::maximally_mixed(s.clone(), LIMIT).unwrap());
    let pure = DensityOperator::pure(PureState::basis(s, 1).unwrap());
    assert!((trace_distance(&mixed, &pure).unwrap() - 0.75).abs() < 1e-12);
    assert!((fidelity(&mixed, &pure).unwrap() - 0.25).abs() < 1e-12);
}
