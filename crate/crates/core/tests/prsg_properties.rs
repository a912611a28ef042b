use chs_core::prsg::{impossibility_attack, multikey_td, prsg_td, Mode, PrsParams};
use chs_core::typestates::binomial;
use chs_core::{Budget, ExperimentReport};

fn exact(lam: u32, n: u32, ell: usize, t: usize) -> ExperimentReport {
    prsg_td(
        &PrsParams::single(lam, n, ell, t).unwrap(),
        Mode::Exact,
        &Budget::default(),
    )
    .unwrap()
}

fn q(r: &ExperimentReport, k: &str) -> f64 {
    r.quantities.get(k).copied().unwrap_or(0.0)
}

#[test]
fn one_copy_no_common_state_is_perfect() {
    for (lam, n) in [(1, 1), (2, 3), (3, 3)] {
        let r = exact(lam, n, 1, 0);
        assert!(q(&r, "td_rho_sigma") < 1e-12, "lam {lam} n {n}");
        assert!(r.all_passed());
    }
}

#[test]
fn small_instance_against_dense_oracle() {
    let r = exact(2, 3, 1, 1);
    assert!(
        r.all_passed(),
        "{:?}",
        r.failed_checks().collect::<Vec<_>>()
    );
    let td = q(&r, "td_rho_sigma");
    assert!(td > 0.0 && td <= q(&r, "td_step_sum") + 1e-9);
    assert!((td - q(&r, "td_rho_sigma_dense")).abs() < 1e-8);
    for c in [
        "h1_matches_dense_real_state",
        "h2_equals_h3",
        "h5_equals_h6",
        "triangle",
    ] {
        assert!(r.checks.iter().any(|x| x.name == c && x.passed), "{c}");
    }
}

#[test]
fn single_key_chain_matches_generator_distance() {
    for (lam, n, ell, t) in [(2, 3, 1, 1), (2, 3, 1, 2), (1, 2, 2, 1)] {
        let single = exact(lam, n, ell, t);
        let multi = multikey_td(
            &PrsParams::new(lam, n, ell, t, 1).unwrap(),
            &Budget::default(),
        )
        .unwrap();
        assert!((q(&single, "td_rho_sigma") - q(&multi, "td_rho_sigma")).abs() < 1e-9);
    }
}

#[test]
fn multikey_chain_without_common_copies() {
    let r = multikey_td(&PrsParams::new(2, 3, 1, 0, 2).unwrap(), &Budget::default()).unwrap();
    assert!(
        r.all_passed(),
        "{:?}",
        r.failed_checks().collect::<Vec<_>>()
    );
    assert!(q(&r, "td_rho_sigma") <= q(&r, "td_chain_sum") + 1e-9);
}

/// `c·(ℓ+t)^{2ℓ}/2^λ + c′·((t+ℓ)² + tℓ)/2^n` with `c` fitted on the key-dependent
/// steps and `c′` on the size-dependent steps of the smallest instance.
#[test]
fn two_constant_rate_fit_holds_across_sweep() {
    let rate_key = |lam: u32, ell: usize, t: usize| {
        ((ell + t) as f64).powi(2 * ell as i32) / 2f64.powi(lam as i32)
    };
    let rate_size = |n: u32, ell: usize, t: usize| {
        (((t + ell) * (t + ell)) as f64 + (t * ell) as f64) / 2f64.powi(n as i32)
    };
    let base = exact(2, 3, 1, 1);
    let c = (q(&base, "td_h1_h2") + q(&base, "td_h3_h4")) / rate_key(2, 1, 1);
    let c2 =
        (q(&base, "td_h4_h5") + q(&base, "td_h6_h7") + q(&base, "td_h7_h8")) / rate_size(3, 1, 1);
    assert!(q(&base, "td_rho_sigma") <= c * rate_key(2, 1, 1) + c2 * rate_size(3, 1, 1) + 1e-12);
    for (lam, n, ell, t) in [
        (3, 3, 1, 1),
        (2, 4, 1, 1),
        (3, 4, 1, 1),
        (4, 4, 1, 1),
        (2, 3, 1, 2),
        (3, 3, 1, 2),
        (3, 4, 1, 2),
        (4, 6, 1, 2),
    ] {
        let r = exact(lam, n, ell, t);
        let td = q(&r, "td_rho_sigma");
        let bound = c * rate_key(lam, ell, t) + c2 * rate_size(n, ell, t);
        assert!(td <= bound, "lam {lam} n {n} l {ell} t {t}: {td} > {bound}");
    }
}

#[test]
fn sampled_mode_is_labelled_and_reproducible() {
    let params = PrsParams::single(2, 3, 1, 1).unwrap();
    let mode = Mode::Sampled {
        trials: 400,
        batches: 4,
        seed: 3,
    };
    let a = prsg_td(&params, mode, &Budget::default()).unwrap();
    let b = prsg_td(&params, mode, &Budget::default()).unwrap();
    assert!(a.estimate);
    assert_eq!(a.to_json(), b.to_json());
    assert!(q(&a, "td_rho_sigma_stderr") > 0.0);
    let exact_td = q(&exact(2, 3, 1, 1), "td_rho_sigma");
    // empirical mixtures only overestimate distinguishability
    assert!(q(&a, "td_rho_sigma") >= exact_td - 4.0 * q(&a, "td_rho_sigma_stderr"));
}

#[test]
fn ideal_rank_formula_at_every_feasible_instance() {
    for (lam, n, ell, t) in [
        (1, 2, 1, 1),
        (2, 2, 1, 1),
        (1, 2, 1, 2),
        (1, 3, 1, 1),
        (1, 2, 2, 1),
        (1, 2, 1, 3),
        (2, 3, 1, 2),
    ] {
        let r = impossibility_attack(
            &PrsParams::single(lam, n, ell, t).unwrap(),
            &Budget::default(),
        )
        .unwrap();
        assert!(
            r.all_passed(),
            "{lam} {n} {ell} {t}: {:?}",
            r.failed_checks().collect::<Vec<_>>()
        );
        let nd = 1u64 << n;
        let expect =
            binomial(nd + ell as u64 - 1, ell as u64) * binomial(nd + t as u64 - 1, t as u64);
        assert_eq!(r.quantities["rank_rho1"], expect as f64);
        assert!((r.quantities["tr_pi_rho0"] - 1.0).abs() < 1e-9);
        assert!(r.quantities["advantage"] >= -1e-9);
    }
    let r =
        impossibility_attack(&PrsParams::single(1, 2, 1, 1).unwrap(), &Budget::default()).unwrap();
    assert_eq!(r.quantities["rank_rho1"], 16.0);
    assert!((r.bounds["rank_ratio_formula"] - 1.25).abs() < 1e-12);
}

#[test]
fn dense_budget_is_enforced() {
    let tight = Budget {
        max_dense_dim: 64,
        ..Budget::default()
    };
    assert!(impossibility_attack(&PrsParams::single(1, 3, 1, 2).unwrap(), &tight).is_err());
}
