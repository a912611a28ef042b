use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;

use super::basis::{shl, RegisterShape};
use super::linalg;
use super::state::PureState;
use super::C64;
use crate::error::{LabError, Result};
use crate::tol;

/// A density matrix held as a dense column-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    shape: RegisterShape,
    matrix: DMatrix<C64>,
}

impl DenseOperator {
    /// Validates Hermiticity, trace one and eigenvalues `≥ −1e-9`.
    pub fn new(shape: RegisterShape, matrix: DMatrix<C64>) -> Result<Self> {
        let op = Self::new_unchecked(shape, matrix)?;
        let dev = linalg::hermitian_deviation(&op.matrix);
        if dev > tol::STRUCTURAL {
            return Err(LabError::NotHermitian(dev));
        }
        let tr = linalg::trace(&op.matrix);
        if (tr.re - 1.0).abs() > tol::STRUCTURAL || tr.im.abs() > tol::STRUCTURAL {
            return Err(LabError::InvalidState(format!("trace {tr} differs from 1")));
        }
        let vals = linalg::hermitian_eigenvalues(&op.matrix)?;
        if let Some(v) = vals.iter().find(|&&v| v < -tol::STRUCTURAL) {
            return Err(LabError::InvalidState(format!(
                "negative eigenvalue {v:.3e}"
            )));
        }
        Ok(op)
    }

    /// Only checks that the matrix matches the shape.
    pub fn new_unchecked(shape: RegisterShape, matrix: DMatrix<C64>) -> Result<Self> {
        let dim = shape
            .dim()
            .ok_or_else(|| LabError::DimensionMismatch("shape too large".into()))?;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(LabError::DimensionMismatch(format!(
                "{}x{} matrix for dimension {dim}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(DenseOperator { shape, matrix })
    }

    pub fn from_pure(state: &PureState, limit: usize) -> Result<Self> {
        let v = state.to_dense(limit)?;
        DenseOperator::new_unchecked(state.shape().clone(), &v * v.adjoint())
    }

    /// `I/d` on the given shape.
    pub fn maximally_mixed(shape: RegisterShape, limit: usize) -> Result<Self> {
        let d = shape.dim_checked(limit)?;
        let m = DMatrix::identity(d, d) * C64::new(1.0 / d as f64, 0.0);
        DenseOperator::new_unchecked(shape, m)
    }

    pub fn shape(&self) -> &RegisterShape {
        &self.shape
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.matrix)
    }

    pub fn tensor(&self, other: &DenseOperator) -> Result<DenseOperator> {
        DenseOperator::new_unchecked(
            self.shape.concat(&other.shape)?,
            linalg::kron(&self.matrix, &other.matrix),
        )
    }

    /// Reduced operator on the registers in `keep` (result keeps their
    /// original relative order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DenseOperator> {
        let (keep, traced) = split_registers(&self.shape, keep)?;
        let kept_shape = self.shape.select(&keep)?;
        let traced_shape = self.shape.select(&traced)?;
        let dk = kept_shape.dim().expect("sub-shape of a dense shape");
        let dt = traced_shape.dim().expect("sub-shape of a dense shape");
        let compose = ComposePlan::new(&self.shape, &keep, &traced);
        let mut out = DMatrix::<C64>::zeros(dk, dk);
        for tv in 0..dt as u64 {
            for b in 0..dk as u64 {
                let col = compose.apply(b, tv) as usize;
                for a in 0..dk as u64 {
                    let row = compose.apply(a, tv) as usize;
                    out[(a as usize, b as usize)] += self.matrix[(row, col)];
                }
            }
        }
        DenseOperator::new_unchecked(kept_shape, out)
    }
}

/// Sorted kept registers and their complement; errors on empty or invalid keep.
pub(crate) fn split_registers(
    shape: &RegisterShape,
    keep: &[usize],
) -> Result<(Vec<usize>, Vec<usize>)> {
    if keep.is_empty() {
        return Err(LabError::InvalidArgument(
            "partial trace needs a non-empty keep set".into(),
        ));
    }
    let n = shape.num_registers();
    let mut k: Vec<usize> = keep.to_vec();
    k.sort_unstable();
    k.dedup();
    if let Some(&bad) = k.iter().find(|&&r| r >= n) {
        return Err(LabError::InvalidArgument(format!(
            "register {bad} out of range for {n} registers"
        )));
    }
    let traced = (0..n).filter(|r| !k.contains(r)).collect();
    Ok((k, traced))
}

/// Re-assembles a full label from kept and traced register values.
struct ComposePlan {
    // (source shift in packed value, mask, destination shift in full label)
    kept: Vec<(u32, u64, u32)>,
    traced: Vec<(u32, u64, u32)>,
}

impl ComposePlan {
    fn new(shape: &RegisterShape, keep: &[usize], traced: &[usize]) -> Self {
        let plan = |regs: &[usize]| {
            let mut out = Vec::new();
            let mut shift: u32 = regs.iter().map(|&r| shape.widths()[r]).sum();
            for &r in regs {
                let w = shape.widths()[r];
                shift -= w;
                out.push((shift, super::basis::low_mask(w), shape.shift_of(r)));
            }
            out
        };
        ComposePlan {
            kept: plan(keep),
            traced: plan(traced),
        }
    }

    fn apply(&self, kept: u64, traced: u64) -> u64 {
        let mut label = 0u64;
        for &(src, mask, dst) in &self.kept {
            label |= ((kept >> src) & mask) << dst;
        }
        for &(src, mask, dst) in &self.traced {
            label |= ((traced >> src) & mask) << dst;
        }
        label
    }
}

/// A finite mixture `Σ p_i |ψ_i⟩⟨ψ_i|` of sparse pure states.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    shape: RegisterShape,
    members: Vec<(f64, PureState)>,
}

impl Ensemble {
    pub fn new(shape: RegisterShape, members: Vec<(f64, PureState)>) -> Result<Self> {
        if members.is_empty() {
            return Err(LabError::InvalidState("empty ensemble".into()));
        }
        let mut total = 0.0;
        for (p, s) in &members {
            if !(-tol::STRUCTURAL..=1.0 + tol::STRUCTURAL).contains(p) {
                return Err(LabError::InvalidState(format!(
                    "probability {p} outside [0,1]"
                )));
            }
            if s.shape() != &shape {
                return Err(LabError::DimensionMismatch(format!(
                    "member shape {:?} differs from ensemble shape {:?}",
                    s.shape(),
                    shape
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > tol::STRUCTURAL {
            return Err(LabError::InvalidState(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Ensemble { shape, members })
    }

    pub fn pure(state: PureState) -> Self {
        Ensemble {
            shape: state.shape().clone(),
            members: vec![(1.0, state)],
        }
    }

    /// Uniform mixture of the given states.
    pub fn uniform(shape: RegisterShape, states: Vec<PureState>) -> Result<Self> {
        let w = 1.0 / states.len() as f64;
        Ensemble::new(shape, states.into_iter().map(|s| (w, s)).collect())
    }

    /// `I/d` as a mixture of basis states.
    pub fn maximally_mixed(shape: RegisterShape, limit: usize) -> Result<Self> {
        let d = shape.dim_checked(limit)?;
        let states = (0..d as u64)
            .map(|l| PureState::basis(shape.clone(), l))
            .collect::<Result<Vec<_>>>()?;
        Ensemble::uniform(shape, states)
    }

    /// Convex combination of ensembles over the same shape.
    pub fn mix(parts: Vec<(f64, Ensemble)>) -> Result<Self> {
        let shape = parts
            .first()
            .map(|(_, e)| e.shape.clone())
            .ok_or_else(|| LabError::InvalidState("empty mixture".into()))?;
        let mut members = Vec::new();
        for (w, e) in parts {
            members.extend(e.members.into_iter().map(|(p, s)| (w * p, s)));
        }
        Ensemble::new(shape, members)
    }

    pub fn shape(&self) -> &RegisterShape {
        &self.shape
    }

    pub fn members(&self) -> &[(f64, PureState)] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn tensor(&self, other: &Ensemble) -> Result<Ensemble> {
        let shape = self.shape.concat(&other.shape)?;
        let mut members = Vec::with_capacity(self.members.len() * other.members.len());
        for (p, a) in &self.members {
            for (q, b) in &other.members {
                members.push((p * q, a.tensor(b)?));
            }
        }
        Ok(Ensemble { shape, members })
    }

    /// Applies a map to every member state (the map must preserve norm and
    /// produce states of `shape`).
    pub fn map_states(
        &self,
        shape: RegisterShape,
        f: impl Fn(&PureState) -> Result<PureState>,
    ) -> Result<Ensemble> {
        let members = self
            .members
            .iter()
            .map(|(p, s)| f(s).map(|t| (*p, t)))
            .collect::<Result<Vec<_>>>()?;
        Ensemble::new(shape, members)
    }

    /// Replaces each member by a sub-ensemble; used for mixing channels such
    /// as a key average.
    pub fn flat_map_states(
        &self,
        shape: RegisterShape,
        f: impl Fn(&PureState) -> Result<Vec<(f64, PureState)>>,
    ) -> Result<Ensemble> {
        let mut members = Vec::new();
        for (p, s) in &self.members {
            for (q, t) in f(s)? {
                members.push((p * q, t));
            }
        }
        Ensemble::new(shape, members)
    }

    /// Merges members that are bitwise equal up to a ±1 global phase. Exact
    /// states built by the same arithmetic collapse; nothing else changes.
    pub fn merge_duplicates(self) -> Ensemble {
        let mut index: HashMap<Vec<(u64, u64, u64)>, usize> = HashMap::new();
        let mut out: Vec<(f64, PureState)> = Vec::new();
        for (p, s) in self.members {
            let c = s.canonical_phase();
            match index.entry(c.bit_key()) {
                std::collections::hash_map::Entry::Occupied(e) => out[*e.get()].0 += p,
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(out.len());
                    out.push((p, c));
                }
            }
        }
        Ensemble {
            shape: self.shape,
            members: out,
        }
    }

    pub fn reorder_registers(&self, order: &[usize]) -> Result<Ensemble> {
        let shape = self.shape.select(order)?;
        self.map_states(shape, |s| s.reorder_registers(order))
    }

    /// Partial trace that stays in ensemble form: each member splits into
    /// its conditional states on the kept registers.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Ensemble> {
        let (keep, traced) = split_registers(&self.shape, keep)?;
        let kept_shape = self.shape.select(&keep)?;
        let kplan = self.shape.gather_plan(&keep);
        let tplan = self.shape.gather_plan(&traced);
        let mut members = Vec::new();
        for (p, s) in &self.members {
            let mut groups: BTreeMap<u64, Vec<(u64, C64)>> = BTreeMap::new();
            for &(l, a) in s.amplitudes() {
                groups
                    .entry(tplan.apply(l))
                    .or_default()
                    .push((kplan.apply(l), a));
            }
            for (_, amps) in groups {
                let w: f64 = amps.iter().map(|(_, a)| a.norm_sqr()).sum();
                if w == 0.0 {
                    continue;
                }
                members.push((p * w, PureState::normalized(kept_shape.clone(), amps)?));
            }
        }
        Ensemble::new(kept_shape, members)
    }

    pub fn to_dense(&self, limit: usize) -> Result<DenseOperator> {
        let d = self.shape.dim_checked(limit)?;
        let mut m = DMatrix::<C64>::zeros(d, d);
        for (p, s) in &self.members {
            let amps = s.amplitudes();
            for &(lj, aj) in amps {
                let cj = aj.conj() * *p;
                for &(li, ai) in amps {
                    m[(li as usize, lj as usize)] += ai * cj;
                }
            }
        }
        DenseOperator::new_unchecked(self.shape.clone(), m)
    }

    pub fn to_sparse(&self) -> SparseOperator {
        let mut entries: BTreeMap<(u64, u64), C64> = BTreeMap::new();
        for (p, s) in &self.members {
            for &(li, ai) in s.amplitudes() {
                for &(lj, aj) in s.amplitudes() {
                    *entries.entry((li, lj)).or_insert(C64::new(0.0, 0.0)) += ai * aj.conj() * *p;
                }
            }
        }
        SparseOperator {
            shape: self.shape.clone(),
            entries,
        }
    }

    /// `Σ p_i ⟨φ|ψ_i⟩⟨ψ_i|φ⟩`.
    pub fn expectation_pure(&self, phi: &PureState) -> f64 {
        self.members
            .iter()
            .map(|(p, s)| p * phi.inner(s).norm_sqr())
            .sum()
    }
}

/// Entry map of an operator, for exact comparisons on small supports.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    shape: RegisterShape,
    entries: BTreeMap<(u64, u64), C64>,
}

impl SparseOperator {
    pub fn shape(&self) -> &RegisterShape {
        &self.shape
    }

    pub fn entries(&self) -> &BTreeMap<(u64, u64), C64> {
        &self.entries
    }

    pub fn get(&self, row: u64, col: u64) -> C64 {
        self.entries
            .get(&(row, col))
            .copied()
            .unwrap_or(C64::new(0.0, 0.0))
    }

    /// Largest entry-wise difference, over the union of both supports.
    pub fn max_abs_diff(&self, other: &SparseOperator) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, v) in &self.entries {
            worst = worst.max((v - other.entries.get(k).copied().unwrap_or_default()).norm());
        }
        for (k, v) in &other.entries {
            if !self.entries.contains_key(k) {
                worst = worst.max(v.norm());
            }
        }
        worst
    }
}

/// A density operator in one of the two storage forms.
#[derive(Clone, Debug, PartialEq)]
pub enum DensityOperator {
    Dense(DenseOperator),
    Ensemble(Ensemble),
}

impl DensityOperator {
    pub fn shape(&self) -> &RegisterShape {
        match self {
            DensityOperator::Dense(d) => d.shape(),
            DensityOperator::Ensemble(e) => e.shape(),
        }
    }

    pub fn pure(state: PureState) -> Self {
        DensityOperator::Ensemble(Ensemble::pure(state))
    }

    pub fn to_dense(&self, limit: usize) -> Result<DenseOperator> {
        match self {
            DensityOperator::Dense(d) => {
                if d.dim() > limit {
                    return Err(LabError::budget(
                        "dense dimension",
                        d.dim() as u128,
                        limit as u128,
                    ));
                }
                Ok(d.clone())
            }
            DensityOperator::Ensemble(e) => e.to_dense(limit),
        }
    }

    /// The state vector when this is a one-member ensemble.
    pub fn as_pure(&self) -> Option<&PureState> {
        match self {
            DensityOperator::Ensemble(e) if e.len() == 1 => Some(&e.members()[0].1),
            _ => None,
        }
    }

    /// Tensor product; both operands must use the same storage form.
    pub fn tensor(&self, other: &DensityOperator) -> Result<DensityOperator> {
        match (self, other) {
            (DensityOperator::Dense(a), DensityOperator::Dense(b)) => {
                Ok(DensityOperator::Dense(a.tensor(b)?))
            }
            (DensityOperator::Ensemble(a), DensityOperator::Ensemble(b)) => {
                Ok(DensityOperator::Ensemble(a.tensor(b)?))
            }
            _ => Err(LabError::Representation(
                "tensor of dense and ensemble operators; convert one first".into(),
            )),
        }
    }

    pub fn partial_trace(&self, keep: &[usize], limit: usize) -> Result<DenseOperator> {
        match self {
            DensityOperator::Dense(d) => d.partial_trace(keep),
            DensityOperator::Ensemble(e) => e.partial_trace(keep)?.to_dense(limit),
        }
    }
}

impl From<DenseOperator> for DensityOperator {
    fn from(d: DenseOperator) -> Self {
        DensityOperator::Dense(d)
    }
}

impl From<Ensemble> for DensityOperator {
    fn from(e: Ensemble) -> Self {
        DensityOperator::Ensemble(e)
    }
}

/// `|a⟩⊗|b⟩` label packing shared by callers that build product labels by hand.
#[inline]
pub fn pack(a: u64, b: u64, b_bits: u32) -> u64 {
    shl(a, b_bits) | b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qubit() -> RegisterShape {
        RegisterShape::new(vec![1]).unwrap()
    }

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn mixed_tensor_is_quarter_identity() {
        let half = DenseOperator::maximally_mixed(qubit(), 16).unwrap();
        let q = half.tensor(&half).unwrap();
        let expect = DMatrix::<C64>::identity(4, 4) * c(0.25);
        assert!(linalg::max_abs_diff(q.matrix(), &expect) < 1e-15);
    }

    #[test]
    fn partial_trace_of_product() {
        let two = RegisterShape::new(vec![1, 1]).unwrap();
        let s = PureState::basis(two, 0b01).unwrap();
        let rho = DenseOperator::from_pure(&s, 16).unwrap();
        let a = rho.partial_trace(&[0]).unwrap();
        assert!((a.matrix()[(0, 0)] - c(1.0)).norm() < 1e-15);
        assert!(a.matrix()[(1, 1)].norm() < 1e-15);
        let b = rho.partial_trace(&[1]).unwrap();
        assert!((b.matrix()[(1, 1)] - c(1.0)).norm() < 1e-15);
    }

    #[test]
    fn partial_trace_of_bell_is_half_identity() {
        let two = RegisterShape::new(vec![1, 1]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = PureState::new(two, vec![(0b00, c(h)), (0b11, c(h))]).unwrap();
        let rho = DensityOperator::pure(bell);
        let red = rho.partial_trace(&[0], 16).unwrap();
        let expect = DMatrix::<C64>::identity(2, 2) * c(0.5);
        assert!(linalg::max_abs_diff(red.matrix(), &expect) < 1e-15);
        let dense_red = rho.to_dense(16).unwrap().partial_trace(&[0]).unwrap();
        assert!(linalg::max_abs_diff(dense_red.matrix(), &expect) < 1e-15);
    }

    #[test]
    fn empty_keep_rejected() {
        let rho = DenseOperator::maximally_mixed(qubit(), 4).unwrap();
        assert!(rho.partial_trace(&[]).is_err());
    }

    #[test]
    fn mixed_forms_rejected() {
        let d = DensityOperator::Dense(DenseOperator::maximally_mixed(qubit(), 4).unwrap());
        let e = DensityOperator::pure(PureState::basis(qubit(), 0).unwrap());
        assert!(matches!(d.tensor(&e), Err(LabError::Representation(_))));
    }

    #[test]
    fn ensemble_probabilities_validated() {
        let s = PureState::basis(qubit(), 0).unwrap();
        assert!(Ensemble::new(qubit(), vec![(0.5, s.clone())]).is_err());
        assert!(Ensemble::new(qubit(), vec![(0.5, s.clone()), (0.5, s)]).is_ok());
    }

    #[test]
    fn dense_validation() {
        let mut m = DMatrix::<C64>::identity(2, 2) * c(0.5);
        assert!(DenseOperator::new(qubit(), m.clone()).is_ok());
        m[(0, 0)] = c(1.5);
        m[(1, 1)] = c(-0.5);
        assert!(DenseOperator::new(qubit(), m).is_err());
    }
}
