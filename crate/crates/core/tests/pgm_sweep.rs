use chs_core::pgm::{pgm_bound_check, pgm_guess_prob, PgmParams};
use chs_core::Budget;

fn params(n: u32, m: usize) -> PgmParams {
    PgmParams::new(n, m, &Budget::default()).unwrap()
}

#[test]
fn one_copy_is_uninformative() {
    for n in 1..=3 {
        let r = pgm_guess_prob(&params(n, 0), &Budget::default()).unwrap();
        assert!(r.all_passed());
        let d = f64::from(1u32 << n);
        assert!(
            (r.quantities["guess_prob"] - 1.0 / d).abs() < 1e-10,
            "n {n}"
        );
    }
}

#[test]
fn one_qubit_two_copies_by_hand() {
    // ρ_0 = Π_sym/3 and ρ_1 swaps ψ+ for ψ−, so σ^{-1/2} is √3 on |00⟩,|11⟩
    // and √6 on the odd-parity span; the guess probability is 2/3.
    let r = pgm_guess_prob(&params(1, 1), &Budget::default()).unwrap();
    assert!(r.all_passed());
    assert!((r.quantities["guess_prob"] - 2.0 / 3.0).abs() < 1e-10);
    let b = pgm_bound_check(&params(1, 1), &Budget::default()).unwrap();
    assert!((b.quantities["q"] - 2.0 / 3.0).abs() < 1e-10);
}

#[test]
fn guess_and_bound_agree_across_sweep() {
    for (n, m) in [(1u32, 1usize), (2, 1), (2, 2), (3, 1), (1, 3)] {
        let p = params(n, m);
        let g = pgm_guess_prob(&p, &Budget::default()).unwrap();
        let b = pgm_bound_check(&p, &Budget::default()).unwrap();
        assert!(
            g.all_passed(),
            "n {n} m {m}: {:?}",
            g.failed_checks().collect::<Vec<_>>()
        );
        assert!(
            b.all_passed(),
            "n {n} m {m}: {:?}",
            b.failed_checks().collect::<Vec<_>>()
        );
        assert!((g.quantities["q"] - b.quantities["q"]).abs() < 1e-10);
        let d = f64::from(1u32 << n);
        assert!(g.quantities["guess_prob"] <= (m as f64 + 1.0) / d + 1e-9);
    }
}

#[test]
fn guess_falls_with_dimension() {
    let qs: Vec<f64> = (1..=3)
        .map(|n| {
            pgm_guess_prob(&params(n, 1), &Budget::default())
                .unwrap()
                .quantities["guess_prob"]
        })
        .collect();
    assert!(qs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{qs:?}");
}

#[test]
fn guess_rises_with_copies() {
    let qs: Vec<f64> = (0..=3)
        .map(|m| {
            pgm_guess_prob(&params(1, m), &Budget::default())
                .unwrap()
                .quantities["guess_prob"]
        })
        .collect();
    assert!(qs.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{qs:?}");
}

#[test]
fn oversized_instances_are_rejected() {
    assert!(PgmParams::new(17, 1, &Budget::default()).is_err());
    let tight = Budget {
        max_types: 2,
        ..Budget::default()
    };
    assert!(PgmParams::new(2, 2, &tight).is_err());
}
