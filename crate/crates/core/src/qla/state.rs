use nalgebra::DVector;

use super::basis::{shl, BasisString, RegisterShape};
use super::C64;
use crate::error::{LabError, Result};
use crate::tol;

/// A unit vector stored as a sorted sparse amplitude list.
///
/// Labels are packed register contents (register 0 in the top bits). Entries
/// are strictly increasing in label and never exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    shape: RegisterShape,
    amps: Vec<(u64, C64)>,
}

impl PureState {
    /// Builds a state, merging repeated labels, and checks unit norm.
    pub fn new(shape: RegisterShape, amps: Vec<(u64, C64)>) -> Result<Self> {
        let st = Self::from_parts_unnormalized(shape, amps)?;
        let norm = st.norm_sqr();
        if (norm - 1.0).abs() > tol::STRUCTURAL {
            return Err(LabError::InvalidState(format!(
                "squared norm {norm} differs from 1"
            )));
        }
        Ok(st)
    }

    /// Builds a state and rescales it to unit norm.
    pub fn normalized(shape: RegisterShape, amps: Vec<(u64, C64)>) -> Result<Self> {
        let mut st = Self::from_parts_unnormalized(shape, amps)?;
        let norm = st.norm_sqr().sqrt();
        if norm == 0.0 {
            return Err(LabError::InvalidState("zero vector".into()));
        }
        for (_, a) in &mut st.amps {
            *a /= norm;
        }
        Ok(st)
    }

    pub(crate) fn from_parts_unnormalized(
        shape: RegisterShape,
        mut amps: Vec<(u64, C64)>,
    ) -> Result<Self> {
        let total = shape.total_bits();
        if total < 64 {
            if let Some((l, _)) = amps.iter().find(|(l, _)| l >> total != 0) {
                return Err(LabError::InvalidState(format!(
                    "label {l} exceeds {total} register bits"
                )));
            }
        }
        amps.sort_by_key(|&(l, _)| l);
        let mut merged: Vec<(u64, C64)> = Vec::with_capacity(amps.len());
        for (l, a) in amps {
            match merged.last_mut() {
                Some((pl, pa)) if *pl == l => *pa += a,
                _ => merged.push((l, a)),
            }
        }
        merged.retain(|(_, a)| *a != C64::new(0.0, 0.0));
        Ok(PureState {
            shape,
            amps: merged,
        })
    }

    /// Sorted, merged amplitudes that are already known to be valid.
    pub(crate) fn from_sorted_unchecked(shape: RegisterShape, amps: Vec<(u64, C64)>) -> Self {
        debug_assert!(amps.windows(2).all(|w| w[0].0 < w[1].0));
        PureState { shape, amps }
    }

    /// Computational basis state `|label⟩`.
    pub fn basis(shape: RegisterShape, label: u64) -> Result<Self> {
        PureState::new(shape, vec![(label, C64::new(1.0, 0.0))])
    }

    /// Single-register basis state from a bit string.
    pub fn from_basis_string(s: BasisString) -> Result<Self> {
        PureState::basis(RegisterShape::new(vec![s.len()])?, s.bits())
    }

    /// The unique state on zero registers.
    pub fn scalar_one() -> Self {
        PureState {
            shape: RegisterShape::scalar(),
            amps: vec![(0, C64::new(1.0, 0.0))],
        }
    }

    pub fn from_dense(shape: RegisterShape, v: &[C64]) -> Result<Self> {
        let dim = shape
            .dim()
            .ok_or_else(|| LabError::DimensionMismatch("shape too large for dense input".into()))?;
        if dim != v.len() {
            return Err(LabError::DimensionMismatch(format!(
                "vector of length {} for dimension {dim}",
                v.len()
            )));
        }
        let amps = v.iter().enumerate().map(|(i, &a)| (i as u64, a)).collect();
        PureState::new(shape, amps)
    }

    pub fn shape(&self) -> &RegisterShape {
        &self.shape
    }

    pub fn amplitudes(&self) -> &[(u64, C64)] {
        &self.amps
    }

    pub fn support_len(&self) -> usize {
        self.amps.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = u64> + '_ {
        self.amps.iter().map(|(l, _)| *l)
    }

    pub fn amplitude(&self, label: u64) -> C64 {
        match self.amps.binary_search_by_key(&label, |&(l, _)| l) {
            Ok(i) => self.amps[i].1,
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// Iterate `(basis string, amplitude)` with full-width strings.
    pub fn iter(&self) -> impl Iterator<Item = (BasisString, C64)> + '_ {
        let len = self.shape.total_bits();
        self.amps
            .iter()
            .map(move |&(l, a)| (BasisString::new(l, len).expect("label fits shape"), a))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|(_, a)| a.norm_sqr()).sum()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> C64 {
        sparse_inner(&self.amps, &other.amps)
    }

    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let shape = self.shape.concat(&other.shape)?;
        let shift = other.shape.total_bits();
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for &(la, a) in &self.amps {
            for &(lb, b) in &other.amps {
                amps.push((shl(la, shift) | lb, a * b));
            }
        }
        Ok(PureState::from_sorted_unchecked(shape, amps))
    }

    /// Multiplies every amplitude by `f(label)`; used for diagonal unitaries.
    pub fn map_diagonal(&self, f: impl Fn(u64) -> C64) -> PureState {
        let amps = self
            .amps
            .iter()
            .map(|&(l, a)| (l, a * f(l)))
            .filter(|(_, a)| *a != C64::new(0.0, 0.0))
            .collect();
        PureState::from_sorted_unchecked(self.shape.clone(), amps)
    }

    /// Relabels basis vectors through an injective map.
    pub fn permute_labels(
        &self,
        shape: RegisterShape,
        f: impl Fn(u64) -> u64,
    ) -> Result<PureState> {
        let amps = self.amps.iter().map(|&(l, a)| (f(l), a)).collect();
        let st = PureState::from_parts_unnormalized(shape, amps)?;
        if st.amps.len() != self.amps.len() {
            return Err(LabError::InvalidArgument(
                "relabeling is not injective".into(),
            ));
        }
        Ok(st)
    }

    /// Reorders registers: register `i` of the result is register `order[i]`
    /// of `self`.
    pub fn reorder_registers(&self, order: &[usize]) -> Result<PureState> {
        if order.len() != self.shape.num_registers() {
            return Err(LabError::InvalidArgument(
                "register order must list every register once".into(),
            ));
        }
        let mut seen = vec![false; order.len()];
        for &r in order {
            if r >= seen.len() || std::mem::replace(&mut seen[r], true) {
                return Err(LabError::InvalidArgument(
                    "register order must list every register once".into(),
                ));
            }
        }
        let shape = self.shape.select(order)?;
        let plan = self.shape.gather_plan(order);
        self.permute_labels(shape, |l| plan.apply(l))
    }

    pub fn to_dense(&self, limit: usize) -> Result<DVector<C64>> {
        let dim = self.shape.dim_checked(limit)?;
        let mut v = DVector::zeros(dim);
        for &(l, a) in &self.amps {
            v[l as usize] = a;
        }
        Ok(v)
    }

    /// Multiplies by a global phase so that the first amplitude is real
    /// positive. Two states equal up to phase map to bitwise-comparable
    /// vectors when their amplitudes are exact.
    pub fn canonical_phase(&self) -> PureState {
        let Some(&(_, a0)) = self.amps.first() else {
            return self.clone();
        };
        let ph = a0.conj() / a0.norm();
        if ph == C64::new(1.0, 0.0) {
            return self.clone();
        }
        // Exact for ±1 phases, which is the case that matters for dedup.
        if ph == C64::new(-1.0, 0.0) {
            let amps = self.amps.iter().map(|&(l, a)| (l, -a)).collect();
            return PureState::from_sorted_unchecked(self.shape.clone(), amps);
        }
        self.map_diagonal(|_| ph)
    }

    pub(crate) fn bit_key(&self) -> Vec<(u64, u64, u64)> {
        self.amps
            .iter()
            .map(|&(l, a)| (l, (a.re + 0.0).to_bits(), (a.im + 0.0).to_bits()))
            .collect()
    }
}

pub(crate) fn sparse_inner(a: &[(u64, C64)], b: &[(u64, C64)]) -> C64 {
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
