//! End-to-end acceptance suite: eleven pass/fail criteria.
//!
//! Every criterion also returns a fingerprint, the full-precision text of all
//! numbers it computed, so the last criterion can check that a rerun with the
//! same seed is byte-identical.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;

use crate::commitments::{self, CommitmentParams, BUILTIN_ADVERSARIES};
use crate::error::{LabError, Result};
use crate::haar::{haar_moment_exact, monte_carlo_moment, symmetric_projector_dense};
use crate::pgm::{pgm_bound_check, PgmParams};
use crate::prsg::{self, Mode, PrsParams};
use crate::qla::blocks::gram_trace_distance_with_budget;
use crate::qla::linalg::max_abs_diff;
use crate::qla::metrics::trace_distance_matrices;
use crate::qla::DensityOperator;
use crate::report::{fmt_f64, ExperimentReport};
use crate::rng::{child_seed, substream};
use crate::tol::{self, Budget};
use crate::typestates::{
    is_l_fold_prefix_cf, nice_t_lhs, nice_t_lhs_unchecked, nice_t_rhs, nice_t_rhs_unchecked,
    perm_split_check, sample_type_conditioned, Alphabet, OrderedTuple, Permutation, TypeVector,
};

pub const DEFAULT_SEED: u64 = 20_240_601;

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "haar moment oracle"),
    (2, "key-averaged type identity"),
    (3, "permutation split"),
    (4, "hybrid equivalences"),
    (5, "generator security trend"),
    (6, "multi-key chain"),
    (7, "rank-projector attack"),
    (8, "commitment correctness and binding"),
    (9, "hiding vs multi-key"),
    (10, "pretty good measurement bound"),
    (11, "determinism"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    /// One-line human summary.
    pub summary: String,
    /// Every computed number, for the determinism comparison.
    pub fingerprint: String,
    pub elapsed: Duration,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2} {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.summary,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Accumulates sub-results of one criterion.
#[derive(Default)]
struct Tally {
    passed: bool,
    failures: Vec<String>,
    fp: String,
}

impl Tally {
    fn new() -> Self {
        Tally {
            passed: true,
            ..Default::default()
        }
    }

    fn record(&mut self, label: &str, value: f64) {
        let _ = writeln!(self.fp, "{label}={}", fmt_f64(value));
    }

    fn require(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.passed = false;
            if self.failures.len() < 5 {
                self.failures.push(what());
            }
        }
    }

    fn report(&mut self, label: &str, r: &ExperimentReport) {
        let _ = writeln!(self.fp, "{label}:{}", r.to_json());
        for c in r.failed_checks() {
            let (lhs, rhs) = (c.lhs, c.rhs);
            let name = c.name.clone();
            self.require(false, || {
                format!("{label}: {name} ({lhs:.3e} vs {rhs:.3e})")
            });
        }
    }

    fn finish(self, summary: String) -> (bool, String, String) {
        let summary = if self.failures.is_empty() {
            summary
        } else {
            format!("{summary}; failures: {}", self.failures.join("; "))
        };
        (self.passed, summary, self.fp)
    }
}

type Body = fn(u64) -> Result<(bool, String, String)>;

fn body(id: u8) -> Body {
    match id {
        1 => c1_haar_moment,
        2 => c2_nice_types,
        3 => c3_perm_split,
        4 => c4_hybrid_equivalences,
        5 => c5_security_trend,
        6 => c6_multikey,
        7 => c7_impossibility,
        8 => c8_commitments,
        9 => c9_hiding,
        10 => c10_pgm,
        _ => unreachable!("criterion {id}"),
    }
}

/// Run one of criteria 1 to 10.
pub fn run_criterion(id: u8, seed: u64) -> CriterionOutcome {
    assert!((1..=10).contains(&id), "criterion {id} is not a single run");
    let start = Instant::now();
    let (passed, summary, fingerprint) = match body(id)(child_seed(seed, id as u64)) {
        Ok(x) => x,
        Err(e) => (false, format!("error: {e}"), format!("error: {e}")),
    };
    CriterionOutcome {
        id,
        name: CRITERIA[id as usize - 1].1,
        passed,
        summary,
        fingerprint,
        elapsed: start.elapsed(),
    }
}

/// Criterion 11: rerun `first` and compare fingerprints byte for byte.
pub fn determinism(first: &[CriterionOutcome], seed: u64) -> CriterionOutcome {
    let start = Instant::now();
    let mut differing = Vec::new();
    for o in first {
        let again = run_criterion(o.id, seed);
        if again.fingerprint.as_bytes() != o.fingerprint.as_bytes() {
            differing.push(o.id.to_string());
        }
    }
    let bytes: usize = first.iter().map(|o| o.fingerprint.len()).sum();
    CriterionOutcome {
        id: 11,
        name: CRITERIA[10].1,
        passed: differing.is_empty() && !first.is_empty(),
        summary: if differing.is_empty() {
            format!(
                "{} criteria rerun, {bytes} fingerprint bytes identical",
                first.len()
            )
        } else {
            format!("criteria {} differ on rerun", differing.join(", "))
        },
        fingerprint: String::new(),
        elapsed: start.elapsed(),
    }
}

/// All eleven criteria, in order.
pub fn run_all(seed: u64) -> Vec<CriterionOutcome> {
    let mut out: Vec<CriterionOutcome> = (1..=10).map(|id| run_criterion(id, seed)).collect();
    let det = determinism(&out, seed);
    out.push(det);
    out
}

fn c1_haar_moment(seed: u64) -> Result<(bool, String, String)> {
    let mut t = Tally::new();
    let limit = Budget::default().max_dense_dim;
    let mut worst: f64 = 0.0;
    for (i, &(n, copies)) in [(1u32, 2usize), (2, 2), (2, 3)].iter().enumerate() {
        let d = 1u64 << n;
        let exact = haar_moment_exact(d, copies, 100_000)?.to_dense(limit)?;
        let mc = monte_carlo_moment(n, copies, 100_000, child_seed(seed, i as u64), limit)?;
        let td = trace_distance_matrices(&mc, exact.matrix())?;
        let proj = symmetric_projector_dense(d, copies, limit)?;
        let gap = max_abs_diff(&proj, exact.matrix());
        t.record(&format!("N{d}_t{copies}_td"), td);
        t.record(&format!("N{d}_t{copies}_proj_gap"), gap);
        t.require(td <= 0.02, || {
            format!("N={d}, t={copies}: TD {td:.4} > 0.02")
        });
        t.require(gap <= tol::CROSS_PATH, || {
            format!("N={d}, t={copies}: projector gap {gap:.2e}")
        });
        worst = worst.max(td);
    }
    Ok(t.finish(format!(
        "max Monte-Carlo TD {worst:.4} (limit 0.02); exact moment matches symmetric projector"
    )))
}

fn c2_nice_types(seed: u64) -> Result<(bool, String, String)> {
    let mut t = Tally::new();
    let budget = Budget::default();
    let draws = (0..50u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let lam = rng.random_range(2..=3u32);
            let m = rng.random_range(0..=1u32);
            let size = rng.random_range(2..=3usize);
            let ell = rng.random_range(1..=2usize);
            let a = Alphabet::qubits(lam, m)?;
            let ty = sample_type_conditioned(
                a,
                size,
                |x| is_l_fold_prefix_cf(x, ell, budget.max_subset_pairs),
                &mut rng,
                100_000,
            )?;
            let diff = gram_trace_distance_with_budget(
                &nice_t_lhs(&ty, ell)?,
                &nice_t_rhs(&ty, ell)?,
                &budget,
            )?;
            Ok((lam, m, size, ell, diff))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for (i, (lam, m, size, ell, diff)) in draws.into_iter().enumerate() {
        t.record(&format!("draw{i}_lam{lam}_m{m}_t{size}_l{ell}"), diff);
        t.require(diff <= tol::IDENTITY, || {
            format!("draw {i}: TD(lhs,rhs) = {diff:.2e}")
        });
        worst = worst.max(diff);
    }
    // two strings sharing the prefix 00: not 1-fold prefix collision-free
    let a = Alphabet::qubits(2, 1)?;
    let bad = TypeVector::new(a, vec![0b000, 0b001])?;
    let control = gram_trace_distance_with_budget(
        &nice_t_lhs_unchecked(&bad, 1)?,
        &nice_t_rhs_unchecked(&bad, 1)?,
        &budget,
    )?;
    t.record("negative_control", control);
    t.require(control > 1e-3, || {
        format!("negative control TD {control:.2e} <= 1e-3")
    });
    Ok(t.finish(format!(
        "50 cf types, max TD(lhs,rhs) {worst:.1e}; non-cf control TD {control:.3}"
    )))
}

fn c3_perm_split(seed: u64) -> Result<(bool, String, String)> {
    let mut t = Tally::new();
    let budget = Budget::default();
    let results = (0..20u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let size = 2 + (i % 3) as usize;
            let ell = 1 + (i as usize / 3) % size.min(3);
            let lam = 4;
            let a = Alphabet::qubits(lam, 1)?;
            let ty = sample_type_conditioned(
                a,
                size,
                |x| is_l_fold_prefix_cf(x, ell, budget.max_subset_pairs),
                &mut rng,
                100_000,
            )?;
            let v = OrderedTuple::random_ordering(&ty, &mut rng);
            let mut agree = 0usize;
            let mut total = 0usize;
            let mut coeffs = String::new();
            for sigma in Permutation::all(size) {
                let o = perm_split_check(&v, &sigma, ell, lam)?;
                total += 1;
                agree += o.agrees() as usize;
                coeffs += &fmt_f64(o.coefficient);
                coeffs.push(',');
            }
            Ok((size, ell, agree, total, coeffs))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut agree_all, mut total_all) = (0, 0);
    for (i, (size, ell, agree, total, coeffs)) in results.into_iter().enumerate() {
        let _ = writeln!(t.fp, "tuple{i}_t{size}_l{ell}:{coeffs}");
        t.require(agree == total, || {
            format!("tuple {i}: {agree}/{total} permutations agree")
        });
        agree_all += agree;
        total_all += total;
    }
    Ok(t.finish(format!(
        "{agree_all}/{total_all} permutations agree with the set criterion"
    )))
}

const HYBRID_SETS: [(u32, u32, usize, usize); 6] = [
    (1, 2, 1, 1),
    (2, 3, 1, 1),
    (2, 3, 1, 2),
    (3, 3, 1, 2),
    (2, 3, 2, 1),
    (3, 4, 2, 2),
];

fn c4_hybrid_equivalences(_seed: u64) -> Result<(bool, String, String)> {
    let mut t = Tally::new();
    let budget = Budget::default();
    let per_set = HYBRID_SETS
        .par_iter()
        .map(|&(lam, n, ell, copies)| {
            let hs = prsg::exact_hybrids(&PrsParams::single(lam, n, ell, copies)?, &budget)?;
            let pair = |a: usize, b: usize| -> Result<Option<f64>> {
                match (&hs[a - 1], &hs[b - 1]) {
                    (Some(x), Some(y)) => gram_trace_distance_with_budget(x, y, &budget).map(Some),
                    _ => Ok(None),
                }
            };
            Ok((pair(2, 3)?, pair(5, 6)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut n23, mut n56, mut worst) = (0, 0, 0f64);
    for (&(lam, n, ell, copies), (d23, d56)) in HYBRID_SETS.iter().zip(per_set) {
        let tag = format!("lam{lam}_n{n}_l{ell}_t{copies}");
        for (name, d, count) in [("h2_h3", d23, &mut n23), ("h5_h6", d56, &mut n56)] {
            match d {
                Some(v) => {
                    *count += 1;
                    worst = worst.max(v);
                    t.record(&format!("{tag}_{name}"), v);
                    t.require(v < tol::IDENTITY, || format!("{tag}: TD({name}) = {v:.2e}"));
                }
                None => {
                    let _ = writeln!(t.fp, "{tag}_{name}=empty");
                }
            }
        }
    }
    t.require(n23 > 0 && n56 > 0, || {
        "an equivalence was never exercised".into()
    });
    Ok(t.finish(format!(
        "{n23} sets for H2~H3, {n56} for H5~H6, max TD {worst:.1e}"
    )))
}

fn c5_security_trend(_seed: u64) -> Result<(bool, String, String)> {
    let mut t = Tally::new();
    let budget = Budget::default();
    let reports = (1..=4u32)
        .into_par_iter()
        .map(|lam| prsg::prsg_td(&PrsParams::single(lam, 6, 1, 2)?, Mode::Exact, &budget))
        .collect::<Result<Vec<_>>>()?;
    let tds: Vec<f64> = reports
        .iter()
        .map(|r| r.quantities["td_rho_sigma"])
        .collect();
    for (lam, r) in (1..).zip(&reports) {
        t.report(&format!("lam{lam}"), r);
        let (td, sum) = (r.quantities["td_rho_sigma"], r.quantities["td_step_sum"]);
        t.require(td <= sum + tol::INEQUALITY_SLACK, || {
            format!("lam {lam}: TD {td} > step sum {sum}")
        });
    }
    for w in tds.windows(2) {
        t.require(w[1] <= w[0], || {
            format!("TD increases: {:.4} -> {:.4}", w[0], w[1])
        });
    }
    t.require(tds[3] <= 0.1, || {
        format!("TD at lam 4 is {:.4} > 0.1", tds[3])
    });
    let shown: Vec<String> = tds.iter().map(|x| format!("{x:.4}")).collect();
    Ok(t.finish(format!("TD over lam 1..4 = [{}]", shown.join(", "))))
}

fn c6_multikey(_seed: u64) -> Result<(bool, String, String)> {
    let mut t = Tally::new();
    let r = prsg::multikey_td(&PrsParams::new(2, 3, 1, 1, 2)?, &Budget::default())?;
    t.report("p2", &r);
    let steps: Vec<String> = (0..2)
        .map(|j| format!("{:.4}", r.quantities[&format!("td_xi{j}_xi{}", j + 1)]))
        .collect();
    Ok(t.finish(format!(
        "steps [{}] within single-key bounds [{:.4}, {:.4}]",
        steps.join(", "),
        r.quantities["single_key_td_t2"],
        r.quantities["single_key_td_t1"]
    )))
}

fn c7_impossibility(_seed: u64) -> Result<(bool, String, String)> {
    let mut t = Tally::new();
    let mut parts = Vec::new();
    for (lam, n, ell, copies) in [(1, 2, 1, 1), (2, 2, 1, 1)] {
        let r = prsg::impossibility_attack(
            &PrsParams::single(lam, n, ell, copies)?,
            &Budget::default(),
        )?;
        t.report(&format!("lam{lam}_n{n}"), &r);
        parts.push(format!(
            "lam={lam}: rank rho1 {} advantage {:.4}",
            r.quantities["rank_rho1"], r.quantities["advantage"]
        ));
    }
    Ok(t.finish(parts.join("; ")))
}

const FULL_STATE_LIMIT: f64 = 1e5;

fn c8_commitments(seed: u64) -> Result<(bool, String, String)> {
    const THETAS: u64 = 100;
    let mut t = Tally::new();
    let sets = [(1u32, 2u32), (2, 4)];
    let jobs: Vec<(usize, u64)> = (0..sets.len())
        .flat_map(|s| (0..THETAS).map(move |i| (s, i)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(s, i)| {
            let (lam, n) = sets[s];
            let mut rng = substream(child_seed(seed, s as u64), i);
            let base = CommitmentParams::sampled(lam, n, 1, &mut rng)?;
            let fid = commitments::per_copy_fidelity(&base)?;
            let mut honest_gap: f64 = 0.0;
            let mut worst_slack = f64::INFINITY;
            let mut fp = String::new();
            for p in [1usize, 2, 4] {
                let params = CommitmentParams::new(lam, n, p, base.theta.clone())?;
                for b in [false, true] {
                    // the full commitment has nnz^p amplitudes; larger ones go
                    // through the per-copy product form of the honest committer
                    let nnz = commitments::copy_state(b, &params)?.amplitudes().len() as f64;
                    if nnz.powi(p as i32) > FULL_STATE_LIMIT {
                        continue;
                    }
                    let c = DensityOperator::pure(commitments::honest_commit(b, &params)?);
                    let acc = commitments::verify_accept_prob(b, &c, &params)?;
                    honest_gap = honest_gap.max((acc - 1.0).abs());
                    fp += &format!("{},", fmt_f64(acc));
                }
                let bound = commitments::binding_bound(lam, n, p);
                for (k, name) in BUILTIN_ADVERSARIES.iter().enumerate() {
                    let adv = commitments::builtin_adversary(
                        name,
                        &params,
                        &mut substream(child_seed(seed, 100 + k as u64), i * 8 + p as u64),
                    )?;
                    let r = commitments::binding_experiment(&adv, &params)?;
                    let sum = r.quantities["p0_plus_p1"];
                    if *name == "honest-0" || *name == "honest-1" {
                        let honest = r.quantities[if *name == "honest-0" { "p0" } else { "p1" }];
                        honest_gap = honest_gap.max((honest - 1.0).abs());
                    }
                    worst_slack = worst_slack.min(bound - sum);
                    fp += &format!("{name}:{},", fmt_f64(sum));
                }
            }
            Ok((s, i, fid, honest_gap, worst_slack, fp))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut max_fid_ratio, mut max_gap, mut min_slack) = (0f64, 0f64, f64::INFINITY);
    for (s, i, fid, gap, slack, fp) in rows {
        let (lam, n) = sets[s];
        let fb = 2f64.powi(-((n - lam) as i32));
        let _ = writeln!(
            t.fp,
            "lam{lam}_n{n}_theta{i}: fid={} gap={} slack={} {fp}",
            fmt_f64(fid),
            fmt_f64(gap),
            fmt_f64(slack)
        );
        t.require(fid <= fb + tol::INEQUALITY_SLACK, || {
            format!("lam {lam} n {n} theta {i}: fidelity {fid} > {fb}")
        });
        t.require(gap <= tol::IDENTITY, || {
            format!("lam {lam} n {n} theta {i}: honest acceptance off by {gap:.2e}")
        });
        t.require(slack >= -tol::INEQUALITY_SLACK, || {
            format!(
                "lam {lam} n {n} theta {i}: binding violated by {:.2e}",
                -slack
            )
        });
        max_fid_ratio = max_fid_ratio.max(fid / fb);
        max_gap = max_gap.max(gap);
        min_slack = min_slack.min(slack);
    }
    Ok(t.finish(format!(
        "200 thetas: honest gap {max_gap:.1e}, max fidelity/bound {max_fid_ratio:.3}, min binding slack {min_slack:.3}"
    )))
}

fn c9_hiding(_seed: u64) -> Result<(bool, String, String)> {
    let mut t = Tally::new();
    let r = commitments::hiding_distance(2, 3, 1, 1, &Budget::default())?;
    t.report("hiding", &r);
    Ok(t.finish(format!(
        "hiding TD {:.6}, multi-key TD {:.6}",
        r.quantities["td_hiding"], r.quantities["td_multikey_l1"]
    )))
}

fn c10_pgm(_seed: u64) -> Result<(bool, String, String)> {
    let mut t = Tally::new();
    let budget = Budget::default();
    let mut parts = Vec::new();
    for (n, m) in [(1u32, 1usize), (2, 1), (2, 2), (3, 1)] {
        let r = pgm_bound_check(&PgmParams::new(n, m, &budget)?, &budget)?;
        t.report(&format!("n{n}_m{m}"), &r);
        parts.push(format!(
            "Q({n},{m})={:.4}<={:.4}",
            r.quantities["q"], r.bounds["q_bound"]
        ));
    }
    Ok(t.finish(parts.join(", ")))
}

/// `Err` naming the failed criteria, if any.
pub fn failures(outcomes: &[CriterionOutcome]) -> Result<()> {
    let bad: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.id.to_string())
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(LabError::Precondition(format!(
            "acceptance criteria failed: {}",
            bad.join(", ")
        )))
    }
}
