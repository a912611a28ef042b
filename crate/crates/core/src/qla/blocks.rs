//! Support-block decomposition of ensembles.
//!
//! Two members whose supports share no basis label are orthogonal, so a set
//! of ensembles is jointly block diagonal over the connected components of
//! the "shares a label" relation. Each block is small for type-state
//! mixtures (at most `t!` orderings of one multiset), which is what makes
//! exact trace distances at `2^{n(ℓ+t)}` total dimension cheap.
//!
//! Inside a block the operator is materialised either in the label basis
//! (side = number of labels) or through the Gram matrix of the members
//! (side = number of members), whichever is smaller.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::linalg;
use super::operator::Ensemble;
use super::state::PureState;
use super::C64;
use crate::error::{LabError, Result};
use crate::tol::{self, Budget};

/// One connected component of the joint support.
#[derive(Debug, Clone)]
pub struct Component {
    /// Sorted basis labels spanning the block.
    pub labels: Vec<u64>,
    /// For each input ensemble, the indices of its members in this block.
    pub members: Vec<Vec<usize>>,
}

impl Component {
    pub fn member_count(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }
}

struct Dsu {
    parent: Vec<u32>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index wins, keeps roots deterministic
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Connected components of the union of all member supports, ordered by
/// smallest label.
pub fn joint_components(ensembles: &[&Ensemble]) -> Result<Vec<Component>> {
    if let Some(first) = ensembles.first() {
        if let Some(e) = ensembles.iter().find(|e| e.shape() != first.shape()) {
            return Err(LabError::DimensionMismatch(format!(
                "ensembles on {:?} and {:?}",
                first.shape(),
                e.shape()
            )));
        }
    }
    let mut labels: Vec<u64> = ensembles
        .iter()
        .flat_map(|e| e.members().iter().flat_map(|(_, s)| s.labels()))
        .collect();
    labels.sort_unstable();
    labels.dedup();
    let idx = |l: u64| labels.binary_search(&l).expect("label collected above") as u32;

    let mut dsu = Dsu::new(labels.len());
    for e in ensembles {
        for (_, s) in e.members() {
            let mut it = s.labels();
            if let Some(first) = it.next() {
                let a = idx(first);
                for l in it {
                    dsu.union(a, idx(l));
                }
            }
        }
    }

    let mut comp_of = vec![u32::MAX; labels.len()];
    let mut comps: Vec<Component> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        let r = dsu.find(i as u32) as usize;
        if comp_of[r] == u32::MAX {
            comp_of[r] = comps.len() as u32;
            comps.push(Component {
                labels: Vec::new(),
                members: vec![Vec::new(); ensembles.len()],
            });
        }
        let c = comp_of[r];
        comp_of[i] = c;
        comps[c as usize].labels.push(l);
    }
    for (k, e) in ensembles.iter().enumerate() {
        for (m, (_, s)) in e.members().iter().enumerate() {
            let first = s.labels().next().expect("states have non-empty support");
            comps[comp_of[idx(first) as usize] as usize].members[k].push(m);
        }
    }
    Ok(comps)
}

/// Block of `Σ_{m ∈ ids} w·p_m |ψ_m⟩⟨ψ_m|` in the component's label basis,
/// accumulated into `out`.
pub fn accumulate_block(
    out: &mut DMatrix<C64>,
    labels: &[u64],
    ensemble: &Ensemble,
    ids: &[usize],
    weight: f64,
) {
    let members = ensemble.members();
    let mut local: Vec<(usize, C64)> = Vec::new();
    for &m in ids {
        let (p, s) = &members[m];
        local.clear();
        local.extend(
            s.amplitudes()
                .iter()
                .map(|&(l, a)| (labels.binary_search(&l).expect("label in component"), a)),
        );
        let w = p * weight;
        for &(j, aj) in &local {
            let cj = aj.conj() * w;
            for &(i, ai) in &local {
                out[(i, j)] += ai * cj;
            }
        }
    }
}

/// Nonzero spectrum of `Σ_a w_a |u_a⟩⟨u_a|` from the Gram matrix of the
/// vectors: writing `U = Q G^{1/2}` (polar form), the operator has the same
/// nonzero eigenvalues as `G^{1/2} W G^{1/2}`. Gram eigenvalues below
/// `PSEUDO_RANK · max` are dropped before taking the square root.
pub fn gram_spectrum(vectors: &[(f64, &PureState)]) -> Result<Vec<f64>> {
    let m = vectors.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut g = DMatrix::<C64>::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let v = vectors[a].1.inner(vectors[b].1);
            g[(a, b)] = v;
            g[(b, a)] = v.conj();
        }
    }
    let (vals, vecs) = linalg::hermitian_eigen(&g)?;
    let max = vals.iter().cloned().fold(0.0f64, f64::max);
    let cut = tol::PSEUDO_RANK * max;
    let root = linalg::reassemble(&vals, &vecs, |v| if v > cut { v.sqrt() } else { 0.0 });
    let mut core = root.clone();
    for (j, (w, _)) in vectors.iter().enumerate() {
        for i in 0..m {
            core[(i, j)] *= *w;
        }
    }
    let core = &core * &root;
    linalg::hermitian_eigenvalues(&core)
}

fn block_difference_spectrum(
    comp: &Component,
    e1: &Ensemble,
    e2: &Ensemble,
    budget: &Budget,
) -> Result<Vec<f64>> {
    let n_labels = comp.labels.len();
    let n_members = comp.member_count();
    if n_labels <= n_members && n_labels <= budget.max_dense_dim {
        let mut d = DMatrix::<C64>::zeros(n_labels, n_labels);
        accumulate_block(&mut d, &comp.labels, e1, &comp.members[0], 1.0);
        accumulate_block(&mut d, &comp.labels, e2, &comp.members[1], -1.0);
        return linalg::hermitian_eigenvalues(&d);
    }
    if n_members > budget.max_dense_dim {
        return Err(LabError::budget(
            "support block side",
            n_labels.min(n_members) as u128,
            budget.max_dense_dim as u128,
        ));
    }
    let mut vecs: Vec<(f64, &PureState)> = Vec::with_capacity(n_members);
    vecs.extend(comp.members[0].iter().map(|&m| {
        let (p, s) = &e1.members()[m];
        (*p, s)
    }));
    vecs.extend(comp.members[1].iter().map(|&m| {
        let (p, s) = &e2.members()[m];
        (-*p, s)
    }));
    gram_spectrum(&vecs)
}

/// Trace distance between two ensembles computed block by block.
pub fn gram_trace_distance(e1: &Ensemble, e2: &Ensemble) -> Result<f64> {
    gram_trace_distance_with_budget(e1, e2, &Budget::default())
}

pub fn gram_trace_distance_with_budget(
    e1: &Ensemble,
    e2: &Ensemble,
    budget: &Budget,
) -> Result<f64> {
    let comps = joint_components(&[e1, e2])?;
    let parts = comps
        .par_iter()
        .map(|c| {
            block_difference_spectrum(c, e1, e2, budget)
                .map(|s| s.iter().map(|v| v.abs()).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(0.5 * parts.iter().sum::<f64>())
}

/// Full spectrum (nonzero part) of an ensemble's density operator.
pub fn ensemble_spectrum(e: &Ensemble, budget: &Budget) -> Result<Vec<f64>> {
    let comps = joint_components(&[e])?;
    let parts = comps
        .par_iter()
        .map(|c| {
            let nl = c.labels.len();
            if nl <= c.member_count() && nl <= budget.max_dense_dim {
                let mut d = DMatrix::<C64>::zeros(nl, nl);
                accumulate_block(&mut d, &c.labels, e, &c.members[0], 1.0);
                linalg::hermitian_eigenvalues(&d)
            } else if c.member_count() <= budget.max_dense_dim {
                let vecs: Vec<(f64, &PureState)> = c.members[0]
                    .iter()
                    .map(|&m| (e.members()[m].0, &e.members()[m].1))
                    .collect();
                gram_spectrum(&vecs)
            } else {
                Err(LabError::budget(
                    "support block side",
                    nl.min(c.member_count()) as u128,
                    budget.max_dense_dim as u128,
                ))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Numerical rank with cutoff `rel_tol · λ_max` over the whole spectrum.
pub fn ensemble_rank(e: &Ensemble, rel_tol: f64, budget: &Budget) -> Result<usize> {
    let spec = ensemble_spectrum(e, budget)?;
    let max = spec.iter().cloned().fold(0.0f64, f64::max);
    Ok(spec.iter().filter(|&&v| v > rel_tol * max).count())
}
