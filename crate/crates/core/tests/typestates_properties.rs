use std::collections::BTreeMap;

use chs_core::qla::{Ensemble, PureState, SparseOperator, C64};
use chs_core::rng::substream;
use chs_core::typestates::{
    binomial, enumerate_types, estimate_cf_probability, exact_cf_probability, is_l_fold_prefix_cf,
    sample_collision_free, sample_type, sample_type_conditioned, type_state, Alphabet,
    OrderedTuple, Permutation, TypeVector,
};
use proptest::prelude::*;

const PAIRS: u64 = 1_000_000;

fn cf(t: &TypeVector, ell: usize) -> bool {
    is_l_fold_prefix_cf(t, ell, PAIRS).unwrap()
}

fn any_type() -> impl Strategy<Value = TypeVector> {
    (2u32..=4, 0u32..=1, 2usize..=6, any::<u64>()).prop_map(|(lam, m, t, seed)| {
        let a = Alphabet::qubits(lam, m).unwrap();
        sample_type(a, t, &mut substream(seed, 0)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn prefix_cf_downward_closed_when_room(ty in any_type(), ell in 2usize..=5) {
        let t = ty.total();
        prop_assume!(ell < t);
        for lower in 1..ell {
            if ell + lower <= t && cf(&ty, ell) {
                prop_assert!(cf(&ty, lower), "{:?}: {ell}-fold cf but not {lower}-fold", ty.elements());
            }
        }
    }

    #[test]
    fn prefix_cf_complement_symmetric(ty in any_type(), ell in 1usize..=5) {
        let t = ty.total();
        prop_assume!(ell < t);
        prop_assert_eq!(cf(&ty, ell), cf(&ty, t - ell));
    }

    #[test]
    fn one_fold_cf_is_distinct_prefixes(ty in any_type()) {
        let a = ty.alphabet();
        let mut prefixes: Vec<u64> = ty.elements().iter().map(|&x| a.prefix(x)).collect();
        prefixes.sort_unstable();
        prefixes.dedup();
        prop_assert_eq!(cf(&ty, 1), prefixes.len() == ty.total());
    }
}

#[test]
fn downward_closure_fails_without_room() {
    // distinct prefixes 000..100, but 000^001 = 010^011
    let a = Alphabet::qubits(3, 0).unwrap();
    let ty = TypeVector::new(a, vec![0, 1, 2, 3, 4]).unwrap();
    assert!(cf(&ty, 1));
    assert!(cf(&ty, 4));
    assert!(!cf(&ty, 2));
    // and the vacuous case t = ℓ
    let collide = TypeVector::new(a, vec![0, 0, 5]).unwrap();
    assert!(cf(&collide, 3));
    assert!(!cf(&collide, 1));
}

fn outer(v: &PureState, u: &PureState, w: f64) -> Vec<((u64, u64), C64)> {
    let mut out = Vec::new();
    for &(i, a) in v.amplitudes() {
        for &(j, b) in u.amplitudes() {
            out.push(((i, j), a * b.conj() * w));
        }
    }
    out
}

#[test]
fn collision_free_type_projector_expands_over_permutations() {
    let a = Alphabet::qubits(2, 1).unwrap();
    let mut rng = substream(4, 0);
    for t in 1..=4usize {
        for _ in 0..5 {
            let ty = sample_collision_free(a, t, &mut rng).unwrap();
            let lhs: SparseOperator = Ensemble::pure(type_state(&ty).unwrap()).to_sparse();
            let orderings = ty.orderings();
            let w = 1.0 / orderings.len() as f64;
            let mut rhs: BTreeMap<(u64, u64), C64> = BTreeMap::new();
            for v in &orderings {
                let tuple = OrderedTuple::new(a, v.clone()).unwrap();
                let ket = tuple.to_state().unwrap();
                for sigma in Permutation::all(t) {
                    let bra = tuple.permuted(&sigma).unwrap().to_state().unwrap();
                    for (k, x) in outer(&ket, &bra, w) {
                        *rhs.entry(k).or_default() += x;
                    }
                }
            }
            let keys: std::collections::BTreeSet<_> =
                lhs.entries().keys().chain(rhs.keys()).copied().collect();
            for k in keys {
                let d = lhs.get(k.0, k.1) - rhs.get(&k).copied().unwrap_or_default();
                assert!(d.norm() < 1e-12, "t={t} {:?} at {k:?}", ty.elements());
            }
            // |T⟩ = (1/√t!) Σ over all t! orderings
            let s = type_state(&ty).unwrap();
            let amp = 1.0 / (orderings.len() as f64).sqrt();
            assert_eq!(s.support_len(), orderings.len());
            assert!(s
                .amplitudes()
                .iter()
                .all(|&(_, x)| (x.re - amp).abs() < 1e-12 && x.im == 0.0));
        }
    }
}

fn chi_square(counts: &[u64], expected: f64) -> f64 {
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

#[test]
fn sample_type_is_uniform_over_multisets() {
    let a = Alphabet::of_size(4).unwrap();
    let all = enumerate_types(a, 2, 100).unwrap();
    assert_eq!(all.len(), 10);
    let index: BTreeMap<Vec<u64>, usize> = all
        .iter()
        .enumerate()
        .map(|(i, t)| (t.elements().to_vec(), i))
        .collect();
    let draws = 100_000u64;
    let mut counts = vec![0u64; 10];
    let mut rng = substream(99, 0);
    for _ in 0..draws {
        counts[index[sample_type(a, 2, &mut rng).unwrap().elements()]] += 1;
    }
    let expected = draws as f64 / 10.0;
    let sd = (expected * 0.9).sqrt();
    assert!(
        counts
            .iter()
            .all(|&c| (c as f64 - expected).abs() < 3.0 * sd),
        "{counts:?}"
    );
    // 9 degrees of freedom, p = 0.001
    assert!(chi_square(&counts, expected) < 27.88);

    let two = Alphabet::of_size(2).unwrap();
    let mut singles = [0u64; 2];
    for seed in 0..2000 {
        singles[sample_type(two, 1, &mut substream(seed, 0))
            .unwrap()
            .elements()[0] as usize] += 1;
    }
    // 1 degree of freedom, p = 0.001
    assert!(chi_square(&singles, 1000.0) < 10.83, "{singles:?}");
}

#[test]
fn always_true_conditioning_matches_plain_sampling() {
    let a = Alphabet::qubits(2, 1).unwrap();
    for seed in 0..50 {
        let x = sample_type(a, 3, &mut substream(seed, 1)).unwrap();
        let y = sample_type_conditioned(a, 3, |_| Ok(true), &mut substream(seed, 1), 1).unwrap();
        assert_eq!(x, y);
    }
}

#[test]
fn collision_free_acceptance_rate() {
    // N = 2^12 ≫ t² = 16
    let a = Alphabet::qubits(12, 0).unwrap();
    let mut rng = substream(5, 0);
    let trials = 20_000;
    let hits = (0..trials)
        .filter(|_| sample_type(a, 4, &mut rng).unwrap().collision_free())
        .count();
    let rate = hits as f64 / trials as f64;
    assert!(
        rate >= 1.0 - 16.0 / 4096.0 - 3.0 * (16.0f64 / 4096.0 / trials as f64).sqrt(),
        "{rate}"
    );
}

/// `Pr[three uniform-type elements have distinct values] = (N−1)(N−2)/((N+1)(N+2))`.
fn three_distinct(n: f64) -> f64 {
    (n - 1.0) * (n - 2.0) / ((n + 1.0) * (n + 2.0))
}

#[test]
fn two_fold_constant_calibration() {
    let (ell, t) = (2usize, 3usize);
    let rate = |lam: u32| (t as f64).powi(2 * ell as i32) / 2f64.powi(lam as i32);
    // with no suffix and t = 3, 2-fold cf is 1-fold cf is "all distinct"
    let mut fitted = Vec::new();
    for lam in 2..=6u32 {
        let p = exact_cf_probability(lam, 0, ell, t, 100_000).unwrap();
        assert!(
            (p - three_distinct(2f64.powi(lam as i32))).abs() < 1e-12,
            "lam {lam}"
        );
        fitted.push((1.0 - p) / rate(lam));
    }
    let c6 = *fitted.last().unwrap();
    assert!(c6 <= 4.0, "fitted constant {c6}");
    let p10 = three_distinct(1024.0);
    assert!(p10 >= 1.0 - 4.0 * rate(10));
    // the constant creeps up to 6/t⁴ from below as λ grows
    let c10 = (1.0 - p10) / rate(10);
    assert!(fitted.windows(2).all(|w| w[0] < w[1]) && c6 < c10 && c10 < 6.0 / 81.0);

    let mut rng = substream(8, 0);
    let est = estimate_cf_probability(10, 0, ell, t, 200_000, &mut rng).unwrap();
    assert!((est.probability - p10).abs() < 4.0 * est.stderr + 1e-4);
    assert!(est.probability >= 1.0 - 4.0 * est.rate);
}

#[test]
fn two_fold_rate_scales_with_prefix_bits() {
    let (ell, t, m) = (2usize, 4usize, 2u32);
    let rate = |lam: u32| (t as f64).powi(2 * ell as i32) / 2f64.powi(lam as i32);
    // C(64 + 3, 4) multisets
    let types = binomial((1 << (4 + m)) + t as u64 - 1, t as u64) as u64;
    let p4 = exact_cf_probability(4, m, ell, t, types).unwrap();
    let c4 = (1.0 - p4) / rate(4);
    let mut rng = substream(12, 0);
    let a = Alphabet::qubits(8, m).unwrap();
    let trials = 100_000;
    let accepted = (0..trials)
        .filter(|_| cf(&sample_type(a, t, &mut rng).unwrap(), ell))
        .count();
    let p8 = accepted as f64 / trials as f64;
    let c8 = (1.0 - p8) / rate(8);
    assert!((0.5..=2.0).contains(&(c8 / c4)), "c4 {c4}, c8 {c8}");
    // conditioned sampling accepts at the same rate
    let mut rng = substream(13, 0);
    for _ in 0..200 {
        let ty = sample_type_conditioned(a, t, |x| Ok(cf(x, ell)), &mut rng, 1000).unwrap();
        assert!(cf(&ty, ell));
    }
}
