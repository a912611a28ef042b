//! The phase-key generator `G_k(|ϑ⟩) = (Z^k ⊗ I)|ϑ⟩`, its hybrid chain,
//! the multi-key chain and the rank-projector distinguisher.
//!
//! Register conventions: in the hybrid and multi-key experiments the
//! generated copies come first and the common-state copies last; the
//! distinguisher uses the opposite order.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::haar::{haar_moment_over, symmetric_projector_dense};
use crate::qla::blocks::{accumulate_block, gram_trace_distance_with_budget, joint_components};
use crate::qla::linalg::{self, kron};
use crate::qla::metrics::trace_distance_matrices;
use crate::qla::{BasisString, Ensemble, PureState, C64};
use crate::report::{Check, ExperimentReport};
use crate::rng::substream;
use crate::tol::{self, Budget};
use crate::typestates::{
    apply_phase, binomial, binomial_f64, enumerate_sets, enumerate_types, is_l_fold_prefix_cf,
    key_average, nice_t_rhs_unchecked, sample_collision_free, sample_type, sample_type_conditioned,
    split_state, type_state_or_scalar, Alphabet, PhasePlan, TypeVector,
};

/// Key length, state size and copy counts of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrsParams {
    pub lam: u32,
    pub n: u32,
    pub ell: usize,
    pub t: usize,
    pub p: usize,
}

impl PrsParams {
    pub fn new(lam: u32, n: u32, ell: usize, t: usize, p: usize) -> Result<Self> {
        if lam == 0 {
            return Err(LabError::InvalidArgument("need λ ≥ 1".into()));
        }
        if n < lam {
            return Err(LabError::InvalidArgument(format!(
                "need n ≥ λ, got n = {n}, λ = {lam}"
            )));
        }
        if ell == 0 || p == 0 {
            return Err(LabError::InvalidArgument("need ℓ ≥ 1 and p ≥ 1".into()));
        }
        let regs = p * ell + t;
        if (n as usize) * regs > 64 {
            return Err(LabError::budget(
                "total label bits",
                (n as usize * regs) as u128,
                64,
            ));
        }
        Ok(PrsParams { lam, n, ell, t, p })
    }

    /// Single-key parameters (`p = 1`).
    pub fn single(lam: u32, n: u32, ell: usize, t: usize) -> Result<Self> {
        PrsParams::new(lam, n, ell, t, 1)
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet::qubits(self.lam, self.n - self.lam).expect("validated widths")
    }

    fn with_t(&self, t: usize) -> Result<Self> {
        PrsParams::new(self.lam, self.n, self.ell, t, 1)
    }

    fn echo(&self, r: &mut ExperimentReport) {
        r.param("lam", self.lam)
            .param("n", self.n)
            .param("ell", self.ell)
            .param("t", self.t)
            .param("p", self.p);
    }
}

/// One of the eight hybrids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HybridSpec {
    pub index: u8,
    pub params: PrsParams,
}

impl HybridSpec {
    pub fn new(index: u8, params: PrsParams) -> Result<Self> {
        if !(1..=8).contains(&index) {
            return Err(LabError::InvalidArgument(format!(
                "hybrid index {index} not in 1..=8"
            )));
        }
        Ok(HybridSpec { index, params })
    }
}

/// How hybrid states are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Enumerate every choice with its exact probability.
    Exact,
    /// Draw `trials` choices per batch from the seed.
    Sampled {
        trials: u64,
        batches: u64,
        seed: u64,
    },
}

/// `(Z^k ⊗ I_{n−λ})|ϑ⟩` for a single `n`-qubit register.
pub fn apply_g(k: BasisString, theta: &PureState) -> Result<PureState> {
    if theta.shape().num_registers() != 1 {
        return Err(LabError::DimensionMismatch(format!(
            "expected one register, got {:?}",
            theta.shape()
        )));
    }
    if k.is_empty() {
        return Err(LabError::InvalidArgument("empty key".into()));
    }
    apply_phase(k, theta, &[0])
}

fn uniform_over(
    shape_regs: usize,
    alphabet: Alphabet,
    parts: Vec<Vec<(f64, PureState)>>,
) -> Result<Ensemble> {
    if parts.is_empty() {
        return Err(LabError::EmptySet("hybrid has no admissible choice".into()));
    }
    let w = 1.0 / parts.len() as f64;
    let members = parts
        .into_iter()
        .flat_map(|v| v.into_iter().map(move |(p, s)| (w * p, s)))
        .collect();
    Ensemble::new(alphabet.register_shape(shape_regs)?, members)
}

fn check_members(count: u128, budget: &Budget) -> Result<()> {
    if count > budget.max_members as u128 {
        return Err(LabError::budget(
            "ensemble members",
            count,
            budget.max_members as u128,
        ));
    }
    Ok(())
}

fn cf_filter(types: Vec<TypeVector>, ell: usize, budget: &Budget) -> Result<Vec<TypeVector>> {
    let keep = types
        .par_iter()
        .map(|t| is_l_fold_prefix_cf(t, ell, budget.max_subset_pairs))
        .collect::<Result<Vec<bool>>>()?;
    Ok(types
        .into_iter()
        .zip(keep)
        .filter_map(|(t, k)| k.then_some(t))
        .collect())
}

/// Key-averaged type states on the first `ℓ` registers.
fn keyed(types: &[TypeVector], lam: u32, ell: usize) -> Result<Vec<Vec<(f64, PureState)>>> {
    let targets: Vec<usize> = (0..ell).collect();
    types
        .par_iter()
        .map(|t| key_average(&type_state_or_scalar(t)?, lam, &targets))
        .collect()
}

/// `E_{T₁ ⊂ T} |T₁⟩⟨T₁| ⊗ |T∖T₁⟩⟨T∖T₁|` per type.
fn split(types: &[TypeVector], ell: usize) -> Result<Vec<Vec<(f64, PureState)>>> {
    types
        .par_iter()
        .map(|t| nice_t_rhs_unchecked(t, ell).map(|e| e.members().to_vec()))
        .collect()
}

/// `E |T₁⟩⟨T₁| ⊗ |T₂⟩⟨T₂|` over independent families.
fn pair_product(
    a: &[TypeVector],
    b: &[TypeVector],
    regs: usize,
    alphabet: Alphabet,
) -> Result<Ensemble> {
    let sa = a
        .iter()
        .map(type_state_or_scalar)
        .collect::<Result<Vec<_>>>()?;
    let sb = b
        .iter()
        .map(type_state_or_scalar)
        .collect::<Result<Vec<_>>>()?;
    let w = 1.0 / (sa.len() * sb.len()) as f64;
    let members = sa
        .par_iter()
        .map(|x| {
            sb.iter()
                .map(|y| x.tensor(y).map(|s| (w, s)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ensemble::new(alphabet.register_shape(regs)?, members)
}

fn hybrid_exact(spec: &HybridSpec, budget: &Budget) -> Result<Ensemble> {
    let PrsParams { lam, ell, t, .. } = spec.params;
    let a = spec.params.alphabet();
    let s = ell + t;
    let per_split = binomial(s as u64, ell as u64);
    match spec.index {
        1 | 2 => {
            let mut types = enumerate_types(a, s, budget.max_types)?;
            if spec.index == 2 {
                types = cf_filter(types, ell, budget)?;
            }
            check_members(types.len() as u128 * (1u128 << lam), budget)?;
            uniform_over(s, a, keyed(&types, lam, ell)?)
        }
        3..=5 => {
            let types = match spec.index {
                3 => cf_filter(enumerate_types(a, s, budget.max_types)?, ell, budget)?,
                4 => enumerate_types(a, s, budget.max_types)?,
                _ => enumerate_sets(a, s, budget.max_types)?,
            };
            check_members(types.len() as u128 * per_split, budget)?;
            uniform_over(s, a, split(&types, ell)?)
        }
        6 => {
            let firsts = enumerate_sets(a, ell, budget.max_types)?;
            let seconds = enumerate_sets(a, t, budget.max_types)?;
            check_members(firsts.len() as u128 * seconds.len() as u128, budget)?;
            let parts: Vec<Vec<(f64, PureState)>> = firsts
                .par_iter()
                .map(|x| {
                    let sx = type_state_or_scalar(x)?;
                    let ok: Vec<&TypeVector> =
                        seconds.iter().filter(|y| x.is_disjoint(y)).collect();
                    let w = 1.0 / ok.len() as f64;
                    ok.into_iter()
                        .map(|y| sx.tensor(&type_state_or_scalar(y)?).map(|st| (w, st)))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            if parts.iter().any(Vec::is_empty) {
                return Err(LabError::EmptySet("no disjoint pair of sets".into()));
            }
            uniform_over(s, a, parts)
        }
        7 | 8 => {
            let (firsts, seconds) = if spec.index == 7 {
                (
                    enumerate_sets(a, ell, budget.max_types)?,
                    enumerate_sets(a, t, budget.max_types)?,
                )
            } else {
                (
                    enumerate_types(a, ell, budget.max_types)?,
                    enumerate_types(a, t, budget.max_types)?,
                )
            };
            if firsts.is_empty() || seconds.is_empty() {
                return Err(LabError::EmptySet(
                    "no collision-free set of that size".into(),
                ));
            }
            check_members(firsts.len() as u128 * seconds.len() as u128, budget)?;
            pair_product(&firsts, &seconds, s, a)
        }
        _ => unreachable!("index validated"),
    }
}

fn random_positions<R: Rng + ?Sized>(s: usize, ell: usize, rng: &mut R) -> Vec<usize> {
    index::sample(rng, s, ell).into_vec()
}

fn hybrid_draw<R: Rng + ?Sized>(
    spec: &HybridSpec,
    rng: &mut R,
    budget: &Budget,
) -> Result<PureState> {
    const MAX_REJECTS: u64 = 1_000_000;
    let PrsParams { lam, ell, t, .. } = spec.params;
    let a = spec.params.alphabet();
    let s = ell + t;
    let cf = |ty: &TypeVector| is_l_fold_prefix_cf(ty, ell, budget.max_subset_pairs);
    let keyed_draw = |ty: TypeVector, rng: &mut R| -> Result<PureState> {
        let key: u64 = rng.random_range(0..1u64 << lam);
        let st = type_state_or_scalar(&ty)?;
        let targets: Vec<usize> = (0..ell).collect();
        Ok(PhasePlan::new(st.shape(), lam, &targets)?.apply(key, &st))
    };
    match spec.index {
        1 => {
            let ty = sample_type(a, s, rng)?;
            keyed_draw(ty, rng)
        }
        2 => {
            let ty = sample_type_conditioned(a, s, cf, rng, MAX_REJECTS)?;
            keyed_draw(ty, rng)
        }
        3..=5 => {
            let ty = match spec.index {
                3 => sample_type_conditioned(a, s, cf, rng, MAX_REJECTS)?,
                4 => sample_type(a, s, rng)?,
                _ => sample_collision_free(a, s, rng)?,
            };
            split_state(&ty, &random_positions(s, ell, rng))
        }
        6 | 7 => {
            let x = sample_collision_free(a, ell, rng)?;
            let mut rejects = 0;
            let y = loop {
                let y = sample_collision_free(a, t, rng)?;
                if spec.index == 7 || x.is_disjoint(&y) {
                    break y;
                }
                rejects += 1;
                if rejects >= MAX_REJECTS {
                    return Err(LabError::RejectBudget(rejects));
                }
            };
            type_state_or_scalar(&x)?.tensor(&type_state_or_scalar(&y)?)
        }
        _ => {
            let x = sample_type(a, ell, rng)?;
            let y = if t == 0 {
                TypeVector::new(a, vec![])?
            } else {
                sample_type(a, t, rng)?
            };
            type_state_or_scalar(&x)?.tensor(&type_state_or_scalar(&y)?)
        }
    }
}

/// Empirical mixture of `trials` independent draws of a hybrid.
pub fn hybrid_sampled<R: Rng + ?Sized>(
    spec: &HybridSpec,
    trials: u64,
    rng: &mut R,
    budget: &Budget,
) -> Result<Ensemble> {
    if trials == 0 {
        return Err(LabError::InvalidArgument("need at least one trial".into()));
    }
    check_members(trials as u128, budget)?;
    let w = 1.0 / trials as f64;
    let members = (0..trials)
        .map(|_| hybrid_draw(spec, rng, budget).map(|s| (w, s)))
        .collect::<Result<Vec<_>>>()?;
    let regs = spec.params.ell + spec.params.t;
    Ok(Ensemble::new(spec.params.alphabet().register_shape(regs)?, members)?.merge_duplicates())
}

/// The hybrid's state as an ensemble. Exact mode enumerates all choices.
pub fn hybrid_state<R: Rng + ?Sized>(
    spec: &HybridSpec,
    exact: bool,
    trials: u64,
    rng: &mut R,
    budget: &Budget,
) -> Result<Ensemble> {
    if exact {
        hybrid_exact(spec, budget)
    } else {
        hybrid_sampled(spec, trials, rng, budget)
    }
}

/// All eight exact hybrids, in order. A hybrid whose sampling set is empty
/// (e.g. no prefix-collision-free type exists) is `None`.
pub fn exact_hybrids(params: &PrsParams, budget: &Budget) -> Result<Vec<Option<Ensemble>>> {
    (1..=8u8)
        .map(
            |i| match hybrid_exact(&HybridSpec::new(i, *params)?, budget) {
                Ok(e) => Ok(Some(e)),
                Err(LabError::EmptySet(_)) if i != 1 && i != 8 => Ok(None),
                Err(e) => Err(e),
            },
        )
        .collect()
}

/// `E_{k,ϑ}[G_k(ϑ)^{⊗ℓ} ⊗ ϑ^{⊗t}]` built densely from permutation operators
/// and explicit phase matrices.
pub fn real_state_dense(params: &PrsParams, limit: usize) -> Result<DMatrix<C64>> {
    let PrsParams { lam, n, ell, t, .. } = *params;
    let nd = 1u64 << n;
    let moment = symmetric_projector_dense(nd, ell + t, limit)?;
    let d = moment.nrows();
    let tail = nd.pow(t as u32) as usize;
    let mut acc = DMatrix::<C64>::zeros(d, d);
    for k in 0..1u64 << lam {
        // Z_k^{⊗ℓ} ⊗ I is diagonal with entries ±1, so conjugation flips signs
        let sign: Vec<f64> = (0..d)
            .map(|idx| {
                let mut head = idx / tail;
                let mut parity = 0;
                for _ in 0..ell {
                    let x = head as u64 % nd;
                    head /= nd as usize;
                    parity ^= ((x >> (n - lam)) & k).count_ones() & 1;
                }
                if parity == 1 {
                    -1.0
                } else {
                    1.0
                }
            })
            .collect();
        for j in 0..d {
            for i in 0..d {
                acc[(i, j)] += moment[(i, j)] * (sign[i] * sign[j]);
            }
        }
    }
    Ok(acc / C64::new((1u64 << lam) as f64, 0.0))
}

/// `E_{φ}[φ^{⊗ℓ}] ⊗ E_{ϑ}[ϑ^{⊗t}]` built densely.
pub fn ideal_state_dense(params: &PrsParams, limit: usize) -> Result<DMatrix<C64>> {
    let nd = 1u64 << params.n;
    let a = symmetric_projector_dense(nd, params.ell, limit)?;
    if params.t == 0 {
        return Ok(a);
    }
    let b = symmetric_projector_dense(nd, params.t, limit)?;
    let full = a.nrows() * b.nrows();
    if full > limit {
        return Err(LabError::budget(
            "dense dimension",
            full as u128,
            limit as u128,
        ));
    }
    Ok(kron(&a, &b))
}

/// Per-batch endpoint distance and `(i, j, TD(Hi, Hj))` steps.
type BatchDistances = (f64, Vec<(usize, usize, f64)>);

/// `TD(ρ, σ)` for one key, exactly.
pub fn single_key_td(params: &PrsParams, budget: &Budget) -> Result<f64> {
    let rho = hybrid_exact(&HybridSpec::new(1, *params)?, budget)?;
    let sigma = hybrid_exact(&HybridSpec::new(8, *params)?, budget)?;
    gram_trace_distance_with_budget(&rho, &sigma, budget)
}

/// Rates attached to each consecutive hybrid step (no constants).
pub fn step_rates(params: &PrsParams) -> [(&'static str, f64); 7] {
    let (l, t) = (params.ell as f64, params.t as f64);
    let two_lam = 2f64.powi(params.lam as i32);
    let two_n = 2f64.powi(params.n as i32);
    let prefix = (l + t).powi(2 * params.ell as i32) / two_lam;
    [
        ("rate_h1_h2", prefix),
        ("rate_h2_h3", 0.0),
        ("rate_h3_h4", prefix),
        ("rate_h4_h5", (l + t).powi(2) / two_n),
        ("rate_h5_h6", 0.0),
        ("rate_h6_h7", t * l / two_n),
        ("rate_h7_h8", (t * t + l * l) / two_n),
    ]
}

/// Distances between consecutive available hybrids, as `(from, to, TD)`
/// with 1-based indices.
fn consecutive(hs: &[Option<Ensemble>], budget: &Budget) -> Result<Vec<(usize, usize, f64)>> {
    let present: Vec<(usize, &Ensemble)> = hs
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.as_ref().map(|e| (i + 1, e)))
        .collect();
    present
        .windows(2)
        .map(|w| {
            gram_trace_distance_with_budget(w[0].1, w[1].1, budget).map(|d| (w[0].0, w[1].0, d))
        })
        .collect()
}

fn step(steps: &[(usize, usize, f64)], from: usize, to: usize) -> Option<f64> {
    steps.iter().find(|s| s.0 == from && s.1 == to).map(|s| s.2)
}

/// `TD(ρ, σ)` with every consecutive hybrid distance and the step rates.
pub fn prsg_td(params: &PrsParams, mode: Mode, budget: &Budget) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("prsg-td");
    params.echo(&mut r);
    r.param(
        "register_order",
        "generated copies first, then common copies",
    );
    let total_rate = (params.ell + params.t) as f64;
    let total_rate = total_rate.powi(2 * params.ell as i32) / 2f64.powi(params.lam as i32);
    r.bound("rate_total", total_rate);
    for (k, v) in step_rates(params) {
        r.bound(k, v);
    }
    match mode {
        Mode::Exact => {
            r.param("mode", "exact");
            let hs = exact_hybrids(params, budget)?;
            let (h1, h8) = (
                hs[0].as_ref().expect("H1 exists"),
                hs[7].as_ref().expect("H8 exists"),
            );
            let td = gram_trace_distance_with_budget(h1, h8, budget)?;
            let steps = consecutive(&hs, budget)?;
            record_steps(&mut r, td, &steps);
            for (i, h) in hs.iter().enumerate() {
                if h.is_none() {
                    r.note(format!(
                        "hybrid {} has an empty sampling set and is skipped in the chain",
                        i + 1
                    ));
                }
            }
            for (a, b) in [(2, 3), (5, 6)] {
                if let Some(d) = step(&steps, a, b) {
                    r.check(Check::le(
                        format!("h{a}_equals_h{b}"),
                        format!("TD(H{a},H{b}) <= 1e-10"),
                        d,
                        0.0,
                        tol::IDENTITY,
                    ));
                }
            }
            let full = (params.n as usize) * (params.ell + params.t);
            if full <= 62
                && (1usize << full) <= budget.max_dense_dim.min(tol::DENSE_CROSS_CHECK_DIM)
            {
                let rho_d = real_state_dense(params, budget.max_dense_dim)?;
                let h1_d = h1.to_dense(budget.max_dense_dim)?;
                r.check(Check::le(
                    "h1_matches_dense_real_state",
                    "max|H1 - E_{k,theta}[G_k(theta)^l (x) theta^t]| <= 1e-9",
                    linalg::max_abs_diff(h1_d.matrix(), &rho_d),
                    0.0,
                    tol::STRUCTURAL,
                ));
                let sigma_d = ideal_state_dense(params, budget.max_dense_dim)?;
                let td_dense = trace_distance_matrices(&rho_d, &sigma_d)?;
                r.quantity("td_rho_sigma_dense", td_dense);
                r.check(Check::eq(
                    "block_td_matches_dense",
                    "|TD_blocks(rho,sigma) - TD_dense(rho,sigma)| <= 1e-8",
                    td,
                    td_dense,
                    tol::CROSS_PATH,
                ));
            } else {
                r.note("dense cross-check skipped: dimension exceeds the cross-check limit");
            }
        }
        Mode::Sampled {
            trials,
            batches,
            seed,
        } => {
            if batches < 2 {
                return Err(LabError::InvalidArgument(
                    "sampled mode needs at least 2 batches".into(),
                ));
            }
            r.param("mode", "sampled")
                .param("trials", trials)
                .param("batches", batches);
            r.seed = Some(seed);
            r.estimate = true;
            let runs: Vec<BatchDistances> = (0..batches)
                .into_par_iter()
                .map(|b| {
                    let hs = (1..=8u8)
                        .map(|i| {
                            let mut rng = substream(seed, b * 8 + i as u64);
                            match hybrid_sampled(
                                &HybridSpec::new(i, *params)?,
                                trials,
                                &mut rng,
                                budget,
                            ) {
                                Ok(e) => Ok(Some(e)),
                                Err(LabError::EmptySet(_) | LabError::RejectBudget(_))
                                    if i != 1 && i != 8 =>
                                {
                                    Ok(None)
                                }
                                Err(e) => Err(e),
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let (h1, h8) = (
                        hs[0].as_ref().expect("H1 exists"),
                        hs[7].as_ref().expect("H8 exists"),
                    );
                    let td = gram_trace_distance_with_budget(h1, h8, budget)?;
                    Ok((td, consecutive(&hs, budget)?))
                })
                .collect::<Result<_>>()?;
            let mean = |xs: Vec<f64>| -> (f64, f64) {
                let m = xs.iter().sum::<f64>() / xs.len() as f64;
                let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
                (m, (var / xs.len() as f64).sqrt())
            };
            let (td, td_se) = mean(runs.iter().map(|x| x.0).collect());
            // every batch sees the same set of available hybrids
            let steps: Vec<(usize, usize, f64)> = runs[0]
                .1
                .iter()
                .enumerate()
                .map(|(i, &(a, b, _))| (a, b, mean(runs.iter().map(|x| x.1[i].2).collect()).0))
                .collect();
            record_steps(&mut r, td, &steps);
            r.quantity("td_rho_sigma_stderr", td_se);
            r.note("sampled mixtures: distances between empirical mixtures are biased upward by finite-sample noise");
        }
    }
    Ok(r)
}

fn record_steps(r: &mut ExperimentReport, td: f64, steps: &[(usize, usize, f64)]) {
    r.quantity("td_rho_sigma", td);
    for &(a, b, v) in steps {
        r.quantity(&format!("td_h{a}_h{b}"), v);
    }
    let sum: f64 = steps.iter().map(|s| s.2).sum();
    r.quantity("td_step_sum", sum);
    r.check(Check::bound(
        "triangle",
        "TD(rho,sigma) <= sum of consecutive hybrid distances",
        td,
        sum,
    ));
}

/// `ρ_q = E_{ϑ, k₁..k_q}[G_{k₁}(ϑ)^{⊗ℓ} ⊗ … ⊗ G_{k_q}(ϑ)^{⊗ℓ} ⊗ ϑ^{⊗t}]`.
pub fn multikey_real(
    params: &PrsParams,
    blocks: usize,
    t: usize,
    budget: &Budget,
) -> Result<Ensemble> {
    let a = params.alphabet();
    let s = blocks * params.ell + t;
    let types = enumerate_types(a, s, budget.max_types)?;
    check_members(
        types.len() as u128 * (1u128 << (params.lam as usize * blocks).min(100)),
        budget,
    )?;
    let parts = types
        .par_iter()
        .map(|ty| {
            let st = type_state_or_scalar(ty)?;
            let mut cur = vec![(1.0, st)];
            for b in 0..blocks {
                let targets: Vec<usize> = (b * params.ell..(b + 1) * params.ell).collect();
                let mut next = Vec::new();
                for (p, s) in &cur {
                    for (q, u) in key_average(s, params.lam, &targets)? {
                        next.push((p * q, u));
                    }
                }
                cur = Ensemble::new(a.register_shape(s)?, next)?
                    .merge_duplicates()
                    .members()
                    .to_vec();
            }
            Ok(cur)
        })
        .collect::<Result<Vec<_>>>()?;
    uniform_over(s, a, parts)
}

/// `ξ_j`: `j` independent Haar blocks of `ℓ` copies followed by the real
/// state with `p − j` keys and `t` common copies.
pub fn xi(params: &PrsParams, j: usize, budget: &Budget) -> Result<Ensemble> {
    if j > params.p {
        return Err(LabError::InvalidArgument(format!(
            "ξ index {j} exceeds p = {}",
            params.p
        )));
    }
    let a = params.alphabet();
    let tail = if j == params.p {
        haar_moment_over(a, params.t, budget.max_types)?
    } else {
        multikey_real(params, params.p - j, params.t, budget)?
    };
    if j == 0 {
        return Ok(tail);
    }
    let block = haar_moment_over(a, params.ell, budget.max_types)?;
    let mut head = block.clone();
    for _ in 1..j {
        check_members(head.len() as u128 * block.len() as u128, budget)?;
        head = head.tensor(&block)?;
    }
    check_members(head.len() as u128 * tail.len() as u128, budget)?;
    if params.t == 0 && j == params.p {
        return Ok(head);
    }
    head.tensor(&tail)
}

/// The multi-key chain `ξ₀ (real) → … → ξ_p (ideal)` with the per-step
/// monotonicity checks.
pub fn multikey_td(params: &PrsParams, budget: &Budget) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("multikey-td");
    params.echo(&mut r);
    r.param(
        "register_order",
        "p blocks of generated copies first, then common copies",
    );
    r.param(
        "convention",
        "rho = real (shared state, independent keys), sigma = ideal (independent Haar states)",
    );
    let xis = (0..=params.p)
        .map(|j| xi(params, j, budget))
        .collect::<Result<Vec<_>>>()?;
    let td = gram_trace_distance_with_budget(&xis[0], &xis[params.p], budget)?;
    r.quantity("td_rho_sigma", td);
    let mut sum = 0.0;
    for j in 0..params.p {
        let step = gram_trace_distance_with_budget(&xis[j], &xis[j + 1], budget)?;
        let t_inflated = (params.p - j - 1) * params.ell + params.t;
        let single = single_key_td(&params.with_t(t_inflated)?, budget)?;
        r.quantity(&format!("td_xi{}_xi{}", j, j + 1), step);
        r.quantity(&format!("single_key_td_t{t_inflated}"), single);
        r.check(Check::bound(
            format!("step_{j}_monotone"),
            format!(
                "TD(xi_{j},xi_{}) <= single-key TD at t = {t_inflated}",
                j + 1
            ),
            step,
            single,
        ));
        sum += step;
    }
    r.quantity("td_chain_sum", sum);
    r.check(Check::bound(
        "triangle",
        "TD(xi_0,xi_p) <= sum_j TD(xi_j,xi_j+1)",
        td,
        sum,
    ));
    let (p, l, t) = (params.p as f64, params.ell as f64, params.t as f64);
    r.bound(
        "rate_total",
        p * (p * l + t).powi(2 * params.ell as i32) / 2f64.powi(params.lam as i32),
    );
    Ok(r)
}

/// Eigen-decomposition of every joint block of two ensembles.
struct BlockSpectra {
    /// Per block: eigenpairs of the first ensemble and the second ensemble's
    /// block matrix.
    blocks: Vec<(Vec<f64>, DMatrix<C64>, DMatrix<C64>)>,
}

fn block_spectra(e0: &Ensemble, e1: &Ensemble, budget: &Budget) -> Result<BlockSpectra> {
    let comps = joint_components(&[e0, e1])?;
    let blocks = comps
        .par_iter()
        .map(|c| {
            let nl = c.labels.len();
            if nl > budget.max_dense_dim {
                return Err(LabError::budget(
                    "support block side",
                    nl as u128,
                    budget.max_dense_dim as u128,
                ));
            }
            let mut m0 = DMatrix::<C64>::zeros(nl, nl);
            let mut m1 = DMatrix::<C64>::zeros(nl, nl);
            accumulate_block(&mut m0, &c.labels, e0, &c.members[0], 1.0);
            accumulate_block(&mut m1, &c.labels, e1, &c.members[1], 1.0);
            let (vals, vecs) = linalg::hermitian_eigen(&m0)?;
            Ok((vals, vecs, m1))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockSpectra { blocks })
}

/// The rank-projector distinguisher: measure `{Π, I − Π}` with `Π` the
/// support projector of `ρ₀`.
pub fn impossibility_attack(params: &PrsParams, budget: &Budget) -> Result<ExperimentReport> {
    let PrsParams { lam, n, ell, t, .. } = *params;
    let total_bits = n as usize * (ell + t);
    if total_bits > 62 || (1usize << total_bits) > budget.max_dense_dim {
        return Err(LabError::budget(
            "dense dimension 2^(n(l+t))",
            1u128 << total_bits.min(127),
            budget.max_dense_dim as u128,
        ));
    }
    let mut r = ExperimentReport::new("impossibility");
    params.echo(&mut r);
    r.param(
        "register_order",
        "common copies first, then generated copies",
    );
    let a = params.alphabet();
    let types = enumerate_types(a, ell + t, budget.max_types)?;
    let targets: Vec<usize> = (t..t + ell).collect();
    let parts = types
        .par_iter()
        .map(|ty| key_average(&type_state_or_scalar(ty)?, lam, &targets))
        .collect::<Result<Vec<_>>>()?;
    let rho0 = uniform_over(ell + t, a, parts)?;
    let common = haar_moment_over(a, t, budget.max_types)?;
    let fresh = haar_moment_over(a, ell, budget.max_types)?;
    let rho1 = if t == 0 {
        fresh
    } else {
        common.tensor(&fresh)?
    };

    let spectra = block_spectra(&rho0, &rho1, budget)?;
    let max0 = spectra
        .blocks
        .iter()
        .flat_map(|b| b.0.iter().cloned())
        .fold(0.0f64, f64::max);
    let cut0 = tol::PSEUDO_RANK * max0;
    let mut rank0 = 0usize;
    let mut tr_pi_rho0 = 0.0;
    let mut tr_pi_rho1 = 0.0;
    let mut spec1: Vec<f64> = Vec::new();
    for (vals, vecs, m1) in &spectra.blocks {
        for (i, &v) in vals.iter().enumerate() {
            if v > cut0 {
                rank0 += 1;
                tr_pi_rho0 += v;
                let u = vecs.column(i);
                tr_pi_rho1 += (u.adjoint() * m1 * u)[(0, 0)].re;
            }
        }
        spec1.extend(linalg::hermitian_eigenvalues(m1)?);
    }
    let max1 = spec1.iter().cloned().fold(0.0f64, f64::max);
    let rank1 = spec1
        .iter()
        .filter(|&&v| v > tol::PSEUDO_RANK * max1)
        .count();

    let nd = 1u64 << n;
    let rank0_formula =
        (1u128 << lam) as f64 * binomial(nd + (ell + t) as u64 - 1, (ell + t) as u64) as f64;
    let rank1_formula =
        binomial(nd + ell as u64 - 1, ell as u64) * binomial(nd + t as u64 - 1, t as u64);
    let product_form = 2f64.powi(lam as i32) / binomial_f64((ell + t) as f64, ell as u64)
        * (0..ell)
            .map(|i| 1.0 + t as f64 / (nd as f64 + i as f64))
            .product::<f64>();

    r.quantity("tr_pi_rho0", tr_pi_rho0)
        .quantity("tr_pi_rho1", tr_pi_rho1)
        .quantity("advantage", 1.0 - tr_pi_rho1)
        .quantity("rank_rho0", rank0 as f64)
        .quantity("rank_rho1", rank1 as f64)
        .quantity("rank_ratio_measured", rank0 as f64 / rank1 as f64);
    r.bound("rank_rho0_upper", rank0_formula)
        .bound("rank_rho1_formula", rank1_formula as f64)
        .bound("rank_ratio_formula", rank0_formula / rank1_formula as f64)
        .bound("rank_ratio_product_form", product_form)
        .bound("advantage_target", 1.0 - 2f64.powi(-(lam as i32)));
    r.check(Check::eq(
        "pi_accepts_rho0",
        "Tr(Pi rho0) = 1",
        tr_pi_rho0,
        1.0,
        tol::STRUCTURAL,
    ));
    r.check(Check::bound(
        "pi_rho1_rank_ratio",
        "Tr(Pi rho1) <= rank(rho0)/rank(rho1)",
        tr_pi_rho1,
        rank0 as f64 / rank1 as f64,
    ));
    r.check(Check::eq(
        "rank_rho1_exact",
        "rank(rho1) = C(2^n+l-1,l) C(2^n+t-1,t)",
        rank1 as f64,
        rank1_formula as f64,
        0.0,
    ));
    r.check(Check::le(
        "rank_rho0_upper",
        "rank(rho0) <= 2^lam C(2^n+l+t-1,l+t)",
        rank0 as f64,
        rank0_formula,
        0.0,
    ));
    r.check(Check::eq(
        "rank_ratio_product_identity",
        "rank ratio formula = 2^lam / C(l+t,l) prod_i (1 + t/(2^n+i))",
        rank0_formula / rank1_formula as f64,
        product_form,
        1e-12 * product_form.max(1.0),
    ));
    r.note(
        "target advantage is 1 - 2^-lam; the form 1 - 2^lam is negative and cannot be an advantage",
    );
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b() -> Budget {
        Budget::default()
    }

    #[test]
    fn apply_g_examples() {
        let plus = PureState::new(
            crate::qla::RegisterShape::new(vec![1]).unwrap(),
            vec![
                (0, C64::new(0.5f64.sqrt(), 0.0)),
                (1, C64::new(0.5f64.sqrt(), 0.0)),
            ],
        )
        .unwrap();
        let minus = apply_g(BasisString::parse("1").unwrap(), &plus).unwrap();
        assert_eq!(minus.amplitudes()[1].1.re, -(0.5f64.sqrt()));
        assert_eq!(
            apply_g(BasisString::parse("0").unwrap(), &plus).unwrap(),
            plus
        );
        assert!(apply_g(BasisString::parse("11").unwrap(), &plus).is_err());
    }

    #[test]
    fn params_validate() {
        assert!(PrsParams::single(3, 2, 1, 1).is_err());
        assert!(PrsParams::single(2, 3, 0, 1).is_err());
        assert!(HybridSpec::new(9, PrsParams::single(2, 3, 1, 1).unwrap()).is_err());
        assert!(PrsParams::single(2, 30, 1, 2).is_err());
    }

    #[test]
    fn no_common_copies_gives_zero() {
        let p = PrsParams::single(2, 3, 1, 0).unwrap();
        let r = prsg_td(&p, Mode::Exact, &b()).unwrap();
        assert!(r.get("td_rho_sigma").unwrap() < 1e-12);
        assert!(
            r.all_passed(),
            "{:?}",
            r.failed_checks().collect::<Vec<_>>()
        );
    }

    #[test]
    fn small_instance_positive_and_cross_checked() {
        let p = PrsParams::single(2, 3, 1, 1).unwrap();
        let r = prsg_td(&p, Mode::Exact, &b()).unwrap();
        assert!(r.get("td_rho_sigma").unwrap() > 0.0);
        assert!(r.checks.iter().any(|c| c.name == "block_td_matches_dense"));
        assert!(
            r.all_passed(),
            "{:?}",
            r.failed_checks().collect::<Vec<_>>()
        );
    }

    #[test]
    fn sampled_mode_is_labeled_estimate() {
        let p = PrsParams::single(1, 2, 1, 1).unwrap();
        let r = prsg_td(
            &p,
            Mode::Sampled {
                trials: 200,
                batches: 3,
                seed: 4,
            },
            &b(),
        )
        .unwrap();
        assert!(r.estimate);
        assert!(r.get("td_rho_sigma_stderr").is_some());
        let again = prsg_td(
            &p,
            Mode::Sampled {
                trials: 200,
                batches: 3,
                seed: 4,
            },
            &b(),
        )
        .unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn single_key_multikey_reduces() {
        let p = PrsParams::new(2, 3, 1, 1, 1).unwrap();
        let r = multikey_td(&p, &b()).unwrap();
        let s = single_key_td(&p, &b()).unwrap();
        assert!((r.get("td_rho_sigma").unwrap() - s).abs() < 1e-12);
    }

    #[test]
    fn two_key_chain() {
        let p = PrsParams::new(2, 3, 1, 0, 2).unwrap();
        let r = multikey_td(&p, &b()).unwrap();
        assert!(
            r.all_passed(),
            "{:?}",
            r.failed_checks().collect::<Vec<_>>()
        );
    }

    #[test]
    fn impossibility_small() {
        let p = PrsParams::single(1, 2, 1, 1).unwrap();
        let r = impossibility_attack(&p, &b()).unwrap();
        assert_eq!(r.get("rank_rho1").unwrap(), 16.0);
        assert!((r.get("rank_ratio_formula").unwrap() - 1.25).abs() < 1e-12);
        assert!(
            r.all_passed(),
            "{:?}",
            r.failed_checks().collect::<Vec<_>>()
        );
    }

    #[test]
    fn impossibility_budget() {
        let p = PrsParams::single(2, 4, 2, 2).unwrap();
        assert!(matches!(
            impossibility_attack(&p, &b()),
            Err(LabError::BudgetExceeded { .. })
        ));
    }
}
