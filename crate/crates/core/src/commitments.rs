//! The SWAP-test commitment scheme: honest commit and reveal, hiding, and
//! the sum-binding experiment against pluggable adversaries.
//!
//! Per copy the committer holds a pair of `n`-qubit registers `(C_i, R_i)`:
//!
//! * `|ψ₀⟩ = 2^{-λ/2} Σ_k (Z^k ⊗ I)|ϑ⟩ ⊗ |k‖0^{n−λ}⟩`
//! * `|ψ₁⟩ = 2^{-n/2} Σ_x |x⟩ ⊗ |x⟩`
//!
//! and `p` copies are laid out `C₁ R₁ C₂ R₂ …`. Acceptance of `p` SWAP
//! tests against `|ψ_b⟩` is `Tr(M^{(b)} ρ)` with
//! `M^{(b)} = ⊗_i (I + |ψ_b⟩⟨ψ_b|)/2`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{LabError, Result};
use crate::haar::{haar_moment_over, random_unitary, sample_haar};
use crate::prsg::{multikey_td, PrsParams};
use crate::qla::basis::low_mask;
use crate::qla::blocks::gram_trace_distance_with_budget;
use crate::qla::metrics::fidelity_matrices;
use crate::qla::{DensityOperator, Ensemble, PureState, RegisterShape, C64};
use crate::report::{Check, ExperimentReport};
use crate::tol::{self, Budget};
use crate::typestates::{enumerate_types, type_state, Alphabet, PhasePlan};

/// Key length, state size, copy count and the common state instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CommitmentParams {
    pub lam: u32,
    pub n: u32,
    pub p: usize,
    pub theta: PureState,
}

impl CommitmentParams {
    pub fn new(lam: u32, n: u32, p: usize, theta: PureState) -> Result<Self> {
        validate(lam, n, p)?;
        if theta.shape().widths() != [n] {
            return Err(LabError::DimensionMismatch(format!(
                "common state on {:?}, expected one {n}-qubit register",
                theta.shape()
            )));
        }
        Ok(CommitmentParams { lam, n, p, theta })
    }

    /// Parameters with a Haar-random common state.
    pub fn sampled<R: Rng + ?Sized>(lam: u32, n: u32, p: usize, rng: &mut R) -> Result<Self> {
        validate(lam, n, p)?;
        let theta = sample_haar(n, rng, 1 << 20)?;
        CommitmentParams::new(lam, n, p, theta)
    }

    fn pair_shape(&self) -> RegisterShape {
        RegisterShape::new(vec![self.n, self.n]).expect("validated width")
    }

    fn echo(&self, r: &mut ExperimentReport) {
        r.param("lam", self.lam)
            .param("n", self.n)
            .param("p", self.p);
    }
}

fn validate(lam: u32, n: u32, p: usize) -> Result<()> {
    if lam == 0 || n < lam + 1 {
        return Err(LabError::InvalidArgument(format!(
            "need λ ≥ 1 and n ≥ λ + 1, got λ = {lam}, n = {n}"
        )));
    }
    if n > 16 {
        return Err(LabError::budget("qubits per register", n as u128, 16));
    }
    if p == 0 {
        return Err(LabError::InvalidArgument("need p ≥ 1".into()));
    }
    Ok(())
}

/// `|ψ_b⟩` for one copy on `(C, R)`.
pub fn copy_state(b: bool, params: &CommitmentParams) -> Result<PureState> {
    let shape = params.pair_shape();
    let n = params.n;
    if b {
        let d = 1u64 << n;
        let a = C64::new(1.0 / (d as f64).sqrt(), 0.0);
        let amps = (0..d).map(|x| ((x << n) | x, a)).collect();
        return PureState::new(shape, amps);
    }
    let lam = params.lam;
    let plan = PhasePlan::new(params.theta.shape(), lam, &[0])?;
    let w = 1.0 / ((1u64 << lam) as f64).sqrt();
    let mut amps = Vec::with_capacity(params.theta.support_len() << lam);
    for &(x, a) in params.theta.amplitudes() {
        for k in 0..1u64 << lam {
            let s = if plan.sign(k, x) { -w } else { w };
            amps.push(((x << n) | (k << (n - lam)), a * s));
        }
    }
    PureState::normalized(shape, amps)
}

/// `|ψ_b⟩^{⊗p}` on `C₁ R₁ … C_p R_p`.
pub fn honest_commit(b: bool, params: &CommitmentParams) -> Result<PureState> {
    if 2 * params.n as usize * params.p > 64 {
        return Err(LabError::budget(
            "commitment label bits",
            (2 * params.n as usize * params.p) as u128,
            64,
        ));
    }
    let one = copy_state(b, params)?;
    let mut s = one.clone();
    for _ in 1..params.p {
        s = s.tensor(&one)?;
    }
    Ok(s)
}

/// Where copy `i`'s `(C_i, R_i)` pair sits inside a packed label.
#[derive(Debug, Clone, Copy)]
struct PairSlot {
    shift: u32,
    mask: u64,
}

fn pair_slots(shape: &RegisterShape, p: usize, n: u32) -> Result<Vec<PairSlot>> {
    if shape.num_registers() < 2 * p || shape.widths()[..2 * p].iter().any(|&w| w != n) {
        return Err(LabError::DimensionMismatch(format!(
            "expected {p} pairs of {n}-qubit registers first, got {shape:?}"
        )));
    }
    Ok((0..p)
        .map(|i| PairSlot {
            shift: shape.shift_of(2 * i + 1),
            mask: low_mask(2 * n),
        })
        .collect())
}

/// `(|ψ⟩⟨ψ| ⊗ I)|w⟩` where the projector acts on one pair slot.
fn project_slot(w: &[(u64, C64)], slot: PairSlot, psi: &PureState) -> Vec<(u64, C64)> {
    let mut overlap: BTreeMap<u64, C64> = BTreeMap::new();
    for &(l, a) in w {
        let pair = (l >> slot.shift) & slot.mask;
        let rest = l & !(slot.mask << slot.shift);
        let c = psi.amplitude(pair).conj() * a;
        if c != C64::new(0.0, 0.0) {
            *overlap.entry(rest).or_insert(C64::new(0.0, 0.0)) += c;
        }
    }
    let mut out: Vec<(u64, C64)> = Vec::with_capacity(overlap.len() * psi.support_len());
    for (rest, c) in overlap {
        for &(pair, a) in psi.amplitudes() {
            out.push((rest | (pair << slot.shift), a * c));
        }
    }
    out.sort_unstable_by_key(|e| e.0);
    out
}

fn add_scaled(a: &[(u64, C64)], b: &[(u64, C64)], sa: f64, sb: f64) -> Vec<(u64, C64)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
            out.push((a[i].0, a[i].1 * sa));
            i += 1;
        } else if i == a.len() || b[j].0 < a[i].0 {
            out.push((b[j].0, b[j].1 * sb));
            j += 1;
        } else {
            out.push((a[i].0, a[i].1 * sa + b[j].1 * sb));
            i += 1;
            j += 1;
        }
    }
    out
}

fn sparse_dot(a: &[(u64, C64)], b: &[(u64, C64)]) -> C64 {
    let (mut i, mut j) = (0, 0);
    let mut acc = C64::new(0.0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1.conj() * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// `⟨φ| M^{(b)} |φ⟩` by applying each `(I + P_i)/2` in turn.
fn accept_pure(phi: &PureState, slots: &[PairSlot], psi: &PureState) -> f64 {
    let mut w: Vec<(u64, C64)> = phi.amplitudes().to_vec();
    for &slot in slots {
        let pw = project_slot(&w, slot, psi);
        w = add_scaled(&w, &pw, 0.5, 0.5);
    }
    sparse_dot(phi.amplitudes(), &w).re
}

/// `Tr(M^{(b)} ρ)`: the probability that all `p` SWAP tests against
/// `|ψ_b⟩` accept. Registers beyond the `2p` pair registers (an adversary's
/// workspace) are left untouched.
pub fn verify_accept_prob(
    b: bool,
    committed: &DensityOperator,
    params: &CommitmentParams,
) -> Result<f64> {
    let psi = copy_state(b, params)?;
    let slots = pair_slots(committed.shape(), params.p, params.n)?;
    match committed {
        DensityOperator::Ensemble(e) => Ok(e
            .members()
            .iter()
            .map(|(p, s)| p * accept_pure(s, &slots, &psi))
            .sum()),
        DensityOperator::Dense(d) => {
            let dim = d.dim();
            let mut acc = 0.0;
            for j in 0..dim {
                let mut w = vec![(j as u64, C64::new(1.0, 0.0))];
                for &slot in &slots {
                    let pw = project_slot(&w, slot, &psi);
                    w = add_scaled(&w, &pw, 0.5, 0.5);
                }
                // (ρ M)_{jj} summed gives Tr(ρ M)
                for &(l, a) in &w {
                    acc += (d.matrix()[(j, l as usize)] * a).re;
                }
            }
            Ok(acc)
        }
    }
}

/// `E_S ⟨φ| (⊗_{i∈S} P_i ⊗ I) |φ⟩` over uniform subsets `S` of the copies,
/// evaluated subset by subset.
pub fn accept_prob_subset_form(
    b: bool,
    committed: &PureState,
    params: &CommitmentParams,
) -> Result<f64> {
    let psi = copy_state(b, params)?;
    let slots = pair_slots(committed.shape(), params.p, params.n)?;
    let p = params.p;
    let mut acc = 0.0;
    for mask in 0u64..1 << p {
        let mut w = committed.amplitudes().to_vec();
        for (i, &slot) in slots.iter().enumerate() {
            if mask >> i & 1 == 1 {
                w = project_slot(&w, slot, &psi);
            }
        }
        acc += sparse_dot(committed.amplitudes(), &w).re;
    }
    Ok(acc / (1u64 << p) as f64)
}

/// A malicious committer: a commit-phase state on `C R E` and one opening
/// unitary per bit acting on `R E`. Both openings share the commit state.
pub trait MaliciousCommitter: Sync {
    fn name(&self) -> &str;
    /// `Tr(M^{(b)} Tr_E(U^{(b)} Φ U^{(b)†}))`.
    fn accept_prob(&self, b: bool, params: &CommitmentParams) -> Result<f64>;
}

/// Committer whose state is `Σ_j c_j ⊗_i |φ_{j,i}⟩` over the copy pairs, with
/// no workspace, opening with `⊗_i W^{(b)}_i` on the `R_i`.
#[derive(Debug, Clone)]
pub struct ProductSumCommitter {
    pub name: String,
    /// Normalised coefficients and per-copy pair states.
    pub terms: Vec<(C64, Vec<PureState>)>,
    /// Per bit, one unitary per copy on `R_i`, or `None` for the identity.
    pub open: [Option<Vec<DMatrix<C64>>>; 2],
}

impl ProductSumCommitter {
    pub fn new(
        name: impl Into<String>,
        terms: Vec<(C64, Vec<PureState>)>,
        open: [Option<Vec<DMatrix<C64>>>; 2],
    ) -> Result<Self> {
        let p = terms
            .first()
            .map(|t| t.1.len())
            .ok_or_else(|| LabError::InvalidState("committer needs at least one term".into()))?;
        if terms.iter().any(|t| t.1.len() != p) {
            return Err(LabError::InvalidState(
                "terms have different copy counts".into(),
            ));
        }
        let mut norm = 0.0;
        for (a, sa) in &terms {
            for (b, sb) in &terms {
                norm +=
                    (a.conj() * b * sa.iter().zip(sb).map(|(x, y)| x.inner(y)).product::<C64>()).re;
            }
        }
        if (norm - 1.0).abs() > tol::STRUCTURAL {
            return Err(LabError::InvalidState(format!(
                "commit state has norm² {norm}"
            )));
        }
        for us in open.iter().flatten() {
            if us.len() != p {
                return Err(LabError::InvalidState(
                    "one opening unitary per copy required".into(),
                ));
            }
            for u in us {
                let id = DMatrix::<C64>::identity(u.nrows(), u.ncols());
                if !u.is_square()
                    || crate::qla::linalg::max_abs_diff(&(u * u.adjoint()), &id) > tol::STRUCTURAL
                {
                    return Err(LabError::InvalidState("opening map is not unitary".into()));
                }
            }
        }
        Ok(ProductSumCommitter {
            name: name.into(),
            terms,
            open,
        })
    }

    fn copies(&self) -> usize {
        self.terms[0].1.len()
    }

    /// `(I_C ⊗ W)|φ⟩` for a pair state.
    fn open_pair(state: &PureState, w: &DMatrix<C64>, n: u32) -> Result<PureState> {
        let d = 1usize << n;
        if w.nrows() != d {
            return Err(LabError::DimensionMismatch(format!(
                "opening unitary of size {} on a {n}-qubit register",
                w.nrows()
            )));
        }
        let mut out: BTreeMap<u64, C64> = BTreeMap::new();
        let mask = low_mask(n);
        for &(l, a) in state.amplitudes() {
            let (c, r) = (l >> n, (l & mask) as usize);
            for r2 in 0..d {
                let v = w[(r2, r)];
                if v != C64::new(0.0, 0.0) {
                    *out.entry((c << n) | r2 as u64)
                        .or_insert(C64::new(0.0, 0.0)) += v * a;
                }
            }
        }
        PureState::from_parts_unnormalized(state.shape().clone(), out.into_iter().collect())
    }

    /// Dense form of the same committer with an `e_bits` workspace in
    /// `|0⟩`, for cross-checking.
    pub fn to_dense(&self, params: &CommitmentParams, e_bits: u32) -> Result<DenseCommitter> {
        let p = self.copies();
        let n = params.n;
        let mut widths = vec![n; 2 * p];
        if e_bits > 0 {
            widths.push(e_bits);
        }
        let shape = RegisterShape::new(widths)?;
        let mut amps: BTreeMap<u64, C64> = BTreeMap::new();
        for (c, states) in &self.terms {
            let mut s = PureState::scalar_one();
            for st in states {
                s = s.tensor(st)?;
            }
            for &(l, a) in s.amplitudes() {
                *amps.entry(l << e_bits).or_insert(C64::new(0.0, 0.0)) += a * c;
            }
        }
        let state = PureState::new(shape.clone(), amps.into_iter().collect())?;
        let r_dim = 1usize << (n as usize * p + e_bits as usize);
        let open = [0, 1].map(|b| match &self.open[b] {
            None => DMatrix::<C64>::identity(r_dim, r_dim),
            Some(us) => {
                let mut m = DMatrix::<C64>::identity(1, 1);
                for u in us {
                    m = crate::qla::linalg::kron(&m, u);
                }
                crate::qla::linalg::kron(&m, &DMatrix::identity(1 << e_bits, 1 << e_bits))
            }
        });
        DenseCommitter::new(self.name.clone(), state, p, n, e_bits, open)
    }
}

impl MaliciousCommitter for ProductSumCommitter {
    fn name(&self) -> &str {
        &self.name
    }

    fn accept_prob(&self, b: bool, params: &CommitmentParams) -> Result<f64> {
        if self.copies() != params.p {
            return Err(LabError::DimensionMismatch(format!(
                "committer has {} copies, parameters ask for {}",
                self.copies(),
                params.p
            )));
        }
        let psi = copy_state(b, params)?;
        let opened: Vec<(C64, Vec<PureState>)> = self
            .terms
            .iter()
            .map(|(c, states)| {
                let s = match &self.open[b as usize] {
                    None => states.clone(),
                    Some(us) => states
                        .iter()
                        .zip(us)
                        .map(|(s, u)| ProductSumCommitter::open_pair(s, u, params.n))
                        .collect::<Result<Vec<_>>>()?,
                };
                Ok((*c, s))
            })
            .collect::<Result<_>>()?;
        // ⟨a|M|b⟩ = (⟨a|b⟩ + ⟨a|ψ⟩⟨ψ|b⟩)/2 per copy
        let mut total = C64::new(0.0, 0.0);
        for (ca, sa) in &opened {
            for (cb, sb) in &opened {
                let mut prod = ca.conj() * cb;
                for (x, y) in sa.iter().zip(sb) {
                    prod *= (x.inner(y) + x.inner(&psi) * psi.inner(y)) * 0.5;
                }
                total += prod;
            }
        }
        Ok(total.re)
    }
}

/// Committer given as an explicit state on `C₁ R₁ … C_p R_p E` and dense
/// opening unitaries on `R₁ … R_p E`.
#[derive(Debug, Clone)]
pub struct DenseCommitter {
    pub name: String,
    pub state: PureState,
    pub p: usize,
    pub n: u32,
    pub e_bits: u32,
    pub open: [DMatrix<C64>; 2],
}

impl DenseCommitter {
    pub fn new(
        name: impl Into<String>,
        state: PureState,
        p: usize,
        n: u32,
        e_bits: u32,
        open: [DMatrix<C64>; 2],
    ) -> Result<Self> {
        let mut widths = vec![n; 2 * p];
        if e_bits > 0 {
            widths.push(e_bits);
        }
        if state.shape().widths() != widths.as_slice() {
            return Err(LabError::DimensionMismatch(format!(
                "committer state on {:?}, expected widths {widths:?}",
                state.shape()
            )));
        }
        let r_dim = 1usize << (n as usize * p + e_bits as usize);
        for u in &open {
            if u.nrows() != r_dim || u.ncols() != r_dim {
                return Err(LabError::DimensionMismatch(format!(
                    "opening unitary must be {r_dim}×{r_dim}"
                )));
            }
        }
        Ok(DenseCommitter {
            name: name.into(),
            state,
            p,
            n,
            e_bits,
            open,
        })
    }

    /// `(I_C ⊗ U^{(b)})|Φ⟩` on the committer's own register layout.
    pub fn opened(&self, b: bool) -> Result<PureState> {
        let p = self.p;
        let mut order: Vec<usize> = (0..p).map(|i| 2 * i).collect();
        order.extend((0..p).map(|i| 2 * i + 1));
        if self.e_bits > 0 {
            order.push(2 * p);
        }
        let grouped = self.state.reorder_registers(&order)?;
        let r_bits = self.n * p as u32 + self.e_bits;
        let r_mask = low_mask(r_bits);
        let u = &self.open[b as usize];
        let mut out: BTreeMap<u64, C64> = BTreeMap::new();
        for &(l, a) in grouped.amplitudes() {
            let (c, r) = (l >> r_bits, (l & r_mask) as usize);
            for r2 in 0..u.nrows() {
                let v = u[(r2, r)];
                if v != C64::new(0.0, 0.0) {
                    *out.entry((c << r_bits) | r2 as u64)
                        .or_insert(C64::new(0.0, 0.0)) += v * a;
                }
            }
        }
        let opened =
            PureState::from_parts_unnormalized(grouped.shape().clone(), out.into_iter().collect())?;
        let mut inverse = vec![0usize; order.len()];
        for (pos, &reg) in order.iter().enumerate() {
            inverse[reg] = pos;
        }
        opened.reorder_registers(&inverse)
    }
}

impl MaliciousCommitter for DenseCommitter {
    fn name(&self) -> &str {
        &self.name
    }

    fn accept_prob(&self, b: bool, params: &CommitmentParams) -> Result<f64> {
        if self.p != params.p || self.n != params.n {
            return Err(LabError::DimensionMismatch(
                "committer does not match parameters".into(),
            ));
        }
        let opened = self.opened(b)?;
        verify_accept_prob(b, &DensityOperator::pure(opened), params)
    }
}

/// Names of the built-in adversaries.
pub const BUILTIN_ADVERSARIES: [&str; 4] = ["honest-0", "honest-1", "half-angle", "random-unitary"];

/// One of the built-in adversaries. `rng` is only consumed by
/// `random-unitary`.
pub fn builtin_adversary<R: Rng + ?Sized>(
    name: &str,
    params: &CommitmentParams,
    rng: &mut R,
) -> Result<ProductSumCommitter> {
    let p = params.p;
    let psi0 = copy_state(false, params)?;
    let psi1 = copy_state(true, params)?;
    let one = C64::new(1.0, 0.0);
    match name {
        "honest-0" => ProductSumCommitter::new(name, vec![(one, vec![psi0; p])], [None, None]),
        "honest-1" => ProductSumCommitter::new(name, vec![(one, vec![psi1; p])], [None, None]),
        "half-angle" => {
            let overlap = psi0.inner(&psi1).powi(p as i32);
            let norm = (2.0 + 2.0 * overlap.re).sqrt();
            let c = C64::new(1.0 / norm, 0.0);
            ProductSumCommitter::new(
                name,
                vec![(c, vec![psi0; p]), (c, vec![psi1; p])],
                [None, None],
            )
        }
        "random-unitary" => {
            let d = 1usize << params.n;
            let us = (0..p).map(|_| random_unitary(d, rng)).collect();
            ProductSumCommitter::new(name, vec![(one, vec![psi0; p])], [None, Some(us)])
        }
        other => Err(LabError::InvalidArgument(format!(
            "unknown adversary {other:?}; expected one of {BUILTIN_ADVERSARIES:?}"
        ))),
    }
}

/// `F(Tr_R |ψ₀⟩⟨ψ₀|, Tr_R |ψ₁⟩⟨ψ₁|)` for one copy.
pub fn per_copy_fidelity(params: &CommitmentParams) -> Result<f64> {
    let limit = 1usize << params.n;
    let rho0 = Ensemble::pure(copy_state(false, params)?)
        .partial_trace(&[0])?
        .to_dense(limit)?;
    let rho1 = Ensemble::pure(copy_state(true, params)?)
        .partial_trace(&[0])?
        .to_dense(limit)?;
    fidelity_matrices(rho0.matrix(), rho1.matrix())
}

/// `1 + ((1 + 2^{−(n−λ)/2})/2)^p`.
pub fn binding_bound(lam: u32, n: u32, p: usize) -> f64 {
    1.0 + ((1.0 + 2f64.powf(-((n - lam) as f64) / 2.0)) / 2.0).powi(p as i32)
}

/// `p₀`, `p₁` and the sum-binding bound for one adversary.
pub fn binding_experiment(
    adv: &dyn MaliciousCommitter,
    params: &CommitmentParams,
) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("commit-binding");
    params.echo(&mut r);
    r.param("adversary", adv.name());
    let p0 = adv.accept_prob(false, params)?;
    let p1 = adv.accept_prob(true, params)?;
    let f = per_copy_fidelity(params)?;
    let bound = binding_bound(params.lam, params.n, params.p);
    let (lam, n, p) = (params.lam, params.n, params.p);
    r.quantity("p0", p0)
        .quantity("p1", p1)
        .quantity("p0_plus_p1", p0 + p1)
        .quantity("per_copy_fidelity", f);
    r.bound("sum_binding_bound", bound)
        .bound("fidelity_bound", 2f64.powi(-((n - lam) as i32)))
        .bound(
            "sum_binding_bound_instance",
            1.0 + ((1.0 + f.sqrt()) / 2.0).powi(p as i32),
        );
    r.check(Check::bound(
        "sum_binding",
        "p0 + p1 <= 1 + ((1 + 2^(-(n-lam)/2))/2)^p",
        p0 + p1,
        bound,
    ));
    r.check(Check::bound(
        "per_copy_fidelity",
        "F(Tr_R psi0, Tr_R psi1) <= 2^-(n-lam)",
        f,
        2f64.powi(-((n - lam) as i32)),
    ));
    r.note("the product in the bound runs over the p commitment copies");
    Ok(r)
}

/// `V|x⟩ = 2^{-λ/2} Σ_k (Z^k ⊗ I)|x⟩ ⊗ |k‖0^{n−λ}⟩` on the listed registers,
/// each register `j` followed by its new `R` register in the output.
fn commit_isometry(state: &PureState, regs: &[usize], lam: u32, n: u32) -> Result<PureState> {
    let shape = state.shape();
    let mut widths = Vec::new();
    for (j, &w) in shape.widths().iter().enumerate() {
        widths.push(w);
        if regs.contains(&j) {
            widths.push(n);
        }
    }
    let out_shape = RegisterShape::new(widths)?;
    let plans: Vec<PhasePlan> = regs
        .iter()
        .map(|&j| PhasePlan::new(shape, lam, &[j]))
        .collect::<Result<_>>()?;
    let keys = 1u64 << lam;
    let w = 1.0 / ((keys as f64).sqrt());
    let mut cur: Vec<(u64, C64, Vec<u64>)> = state
        .amplitudes()
        .iter()
        .map(|&(l, a)| (l, a, vec![]))
        .collect();
    for plan in &plans {
        let mut next = Vec::with_capacity(cur.len() * keys as usize);
        for (l, a, ks) in &cur {
            for k in 0..keys {
                let s = if plan.sign(k, *l) { -w } else { w };
                let mut ks2 = ks.clone();
                ks2.push(k);
                next.push((*l, *a * s, ks2));
            }
        }
        cur = next;
    }
    let amps = cur
        .into_iter()
        .map(|(l, a, ks)| {
            let mut out = 0u64;
            let mut ki = 0;
            for j in 0..shape.num_registers() {
                out = (out << shape.widths()[j]) | shape.extract(l, j);
                if regs.contains(&j) {
                    out = (out << n) | (ks[ki] << (n - lam));
                    ki += 1;
                }
            }
            (out, a)
        })
        .collect();
    PureState::normalized(out_shape, amps)
}

/// Hiding: `TD(E_ϑ[ϑ^{⊗t} ⊗ Tr_R commit(0)], E_ϑ[ϑ^{⊗t} ⊗ Tr_R commit(1)])`
/// through the exact moment oracle, cross-checked against the multi-key
/// chain with one generated copy per key.
pub fn hiding_distance(
    lam: u32,
    n: u32,
    p: usize,
    t: usize,
    budget: &Budget,
) -> Result<ExperimentReport> {
    validate(lam, n, p)?;
    if n as usize * (t + 2 * p) > 64 {
        return Err(LabError::budget(
            "hiding label bits",
            (n as usize * (t + 2 * p)) as u128,
            64,
        ));
    }
    let mut r = ExperimentReport::new("commit-hiding");
    r.param("lam", lam)
        .param("n", n)
        .param("p", p)
        .param("t", t);
    r.param("register_order", "common copies first, then C_1..C_p");
    let a = Alphabet::qubits(lam, n - lam)?;
    let types = enumerate_types(a, t + p, budget.max_types)?;
    let regs: Vec<usize> = (t..t + p).collect();
    // after the isometry register t+i becomes C_i at index t+2i, R_i at t+2i+1
    let keep: Vec<usize> = (0..t).chain((0..p).map(|i| t + 2 * i)).collect();
    let w = 1.0 / types.len() as f64;
    let mut members = Vec::new();
    for ty in &types {
        let full = commit_isometry(&type_state(ty)?, &regs, lam, n)?;
        let reduced = Ensemble::pure(full)
            .partial_trace(&keep)?
            .merge_duplicates();
        members.extend(reduced.members().iter().map(|(q, s)| (w * q, s.clone())));
    }
    let real = Ensemble::new(a.register_shape(t + p)?, members)?;

    let dummy = CommitmentParams::new(
        lam,
        n,
        1,
        PureState::basis(RegisterShape::new(vec![n])?, 0)?,
    )?;
    let marginal1 = Ensemble::pure(copy_state(true, &dummy)?).partial_trace(&[0])?;
    let mixed = marginal1.to_dense(1 << n)?;
    let id = DMatrix::<C64>::identity(1 << n, 1 << n) / C64::new((1u64 << n) as f64, 0.0);
    r.check(Check::le(
        "commit1_marginal_maximally_mixed",
        "max|Tr_R psi1 - I/2^n| <= 1e-9",
        crate::qla::linalg::max_abs_diff(mixed.matrix(), &id),
        0.0,
        tol::STRUCTURAL,
    ));
    let mut ideal = haar_moment_over(a, t, budget.max_types)?;
    for i in 0..p {
        ideal = if t == 0 && i == 0 {
            marginal1.clone()
        } else {
            ideal.tensor(&marginal1)?
        };
    }
    let td = gram_trace_distance_with_budget(&real, &ideal, budget)?;
    let mk = multikey_td(&PrsParams::new(lam, n, 1, t, p)?, budget)?;
    let td_mk = mk
        .get("td_rho_sigma")
        .expect("multikey report has td_rho_sigma");
    r.quantity("td_hiding", td)
        .quantity("td_multikey_l1", td_mk);
    r.check(Check::eq(
        "hiding_matches_multikey",
        "|TD_hiding - TD_multikey(l=1)| <= 1e-9",
        td,
        td_mk,
        tol::STRUCTURAL,
    ));
    Ok(r)
}

/// Dense matrix of `M^{(b)}` for `p` copies, for cross-checks at tiny size.
pub fn swap_povm_dense(b: bool, params: &CommitmentParams) -> Result<DMatrix<C64>> {
    let psi = copy_state(b, params)?;
    let d = 1usize << (2 * params.n);
    let v: DVector<C64> = psi.to_dense(d)?;
    let m1 = (DMatrix::<C64>::identity(d, d) + &v * v.adjoint()) * C64::new(0.5, 0.0);
    let mut m = DMatrix::<C64>::identity(1, 1);
    for _ in 0..params.p {
        if m.nrows() * d > 4096 {
            return Err(LabError::budget(
                "dense POVM side",
                (m.nrows() * d) as u128,
                4096,
            ));
        }
        m = crate::qla::linalg::kron(&m, &m1);
    }
    Ok(m)
}
