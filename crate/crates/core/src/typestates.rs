//! Type vectors, type states and the key-averaged phase identities.
//!
//! A type is stored as the sorted list of its elements (an explicit
//! multiset), never as a length-`N` count vector: every regime of interest has
//! `t ≪ N`.

use rand::seq::index;
use rand::Rng;

use crate::error::{LabError, Result};
use crate::qla::basis::low_mask;
use crate::qla::{BasisString, Ensemble, PureState, RegisterShape, C64};
use crate::tol;

/// The set of basis strings types are drawn from: the integers `0..size`,
/// written on `width` bits, the top `prefix_bits` of which form the prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Alphabet {
    size: u64,
    width: u32,
    prefix_bits: u32,
}

impl Alphabet {
    /// `{0,1}^{λ+m′}` with a `λ`-bit prefix.
    pub fn qubits(prefix_bits: u32, suffix_bits: u32) -> Result<Self> {
        let width = prefix_bits + suffix_bits;
        if width == 0 || width > 63 {
            return Err(LabError::InvalidArgument(format!(
                "alphabet width {width} must be in 1..=63"
            )));
        }
        Ok(Alphabet {
            size: 1u64 << width,
            width,
            prefix_bits,
        })
    }

    /// `{0, …, size−1}` on the smallest sufficient width, no prefix.
    pub fn of_size(size: u64) -> Result<Self> {
        if size == 0 {
            return Err(LabError::InvalidArgument(
                "alphabet must be non-empty".into(),
            ));
        }
        let width = (64 - (size - 1).leading_zeros()).max(1);
        Ok(Alphabet {
            size,
            width,
            prefix_bits: 0,
        })
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn prefix_bits(&self) -> u32 {
        self.prefix_bits
    }

    #[inline]
    pub fn prefix(&self, x: u64) -> u64 {
        if self.prefix_bits == 0 {
            0
        } else {
            x >> (self.width - self.prefix_bits)
        }
    }

    pub fn register_shape(&self, copies: usize) -> Result<RegisterShape> {
        RegisterShape::uniform(copies, self.width)
    }
}

/// A multiset of alphabet elements (a type `T` with `Σ T_i = t`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeVector {
    alphabet: Alphabet,
    elements: Vec<u64>,
}

impl TypeVector {
    pub fn new(alphabet: Alphabet, mut elements: Vec<u64>) -> Result<Self> {
        if let Some(&x) = elements.iter().find(|&&x| x >= alphabet.size) {
            return Err(LabError::InvalidArgument(format!(
                "element {x} outside alphabet of size {}",
                alphabet.size
            )));
        }
        elements.sort_unstable();
        Ok(TypeVector { alphabet, elements })
    }

    /// Type of a list of equal-width strings with a `prefix_bits` prefix.
    pub fn from_strings(strings: &[BasisString], prefix_bits: u32) -> Result<Self> {
        let width = strings
            .first()
            .map(|s| s.len())
            .ok_or_else(|| LabError::InvalidArgument("empty string list".into()))?;
        if strings.iter().any(|s| s.len() != width) || prefix_bits > width {
            return Err(LabError::InvalidArgument(
                "strings must share a width at least the prefix length".into(),
            ));
        }
        let alphabet = Alphabet::qubits(prefix_bits, width - prefix_bits)?;
        TypeVector::new(alphabet, strings.iter().map(|s| s.bits()).collect())
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    /// Sorted elements of `mset(T)`.
    pub fn elements(&self) -> &[u64] {
        &self.elements
    }

    pub fn strings(&self) -> Vec<BasisString> {
        self.elements
            .iter()
            .map(|&x| BasisString::new(x, self.alphabet.width).expect("element fits width"))
            .collect()
    }

    pub fn total(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// `(element, multiplicity)` pairs in increasing element order.
    pub fn multiplicities(&self) -> Vec<(u64, usize)> {
        let mut out: Vec<(u64, usize)> = Vec::new();
        for &x in &self.elements {
            match out.last_mut() {
                Some((y, c)) if *y == x => *c += 1,
                _ => out.push((x, 1)),
            }
        }
        out
    }

    pub fn collision_free(&self) -> bool {
        self.elements.windows(2).all(|w| w[0] != w[1])
    }

    /// Splits the multiset by positions of the sorted element list: the
    /// chosen positions form the first part.
    pub fn split(&self, positions: &[usize]) -> Result<(TypeVector, TypeVector)> {
        let mut chosen = vec![false; self.elements.len()];
        for &p in positions {
            if p >= chosen.len() || std::mem::replace(&mut chosen[p], true) {
                return Err(LabError::InvalidArgument(format!("bad split position {p}")));
            }
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, &x) in self.elements.iter().enumerate() {
            if chosen[i] {
                a.push(x);
            } else {
                b.push(x);
            }
        }
        Ok((
            TypeVector {
                alphabet: self.alphabet,
                elements: a,
            },
            TypeVector {
                alphabet: self.alphabet,
                elements: b,
            },
        ))
    }

    /// Union of two multisets.
    pub fn union(&self, other: &TypeVector) -> Result<TypeVector> {
        if self.alphabet != other.alphabet {
            return Err(LabError::InvalidArgument(
                "types over different alphabets".into(),
            ));
        }
        let mut e = self.elements.clone();
        e.extend_from_slice(&other.elements);
        TypeVector::new(self.alphabet, e)
    }

    pub fn is_disjoint(&self, other: &TypeVector) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.elements.len() && j < other.elements.len() {
            match self.elements[i].cmp(&other.elements[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }

    /// All distinct orderings `v ∈ T`, lexicographically.
    pub fn orderings(&self) -> Vec<Vec<u64>> {
        let mut cur = self.elements.clone();
        let mut out = vec![cur.clone()];
        while next_permutation(&mut cur) {
            out.push(cur.clone());
        }
        out
    }
}

fn next_permutation(v: &mut [u64]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// An ordered tuple `v = (v₁, …, v_t)` of alphabet elements.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OrderedTuple {
    alphabet: Alphabet,
    entries: Vec<u64>,
}

impl OrderedTuple {
    pub fn new(alphabet: Alphabet, entries: Vec<u64>) -> Result<Self> {
        if let Some(&x) = entries.iter().find(|&&x| x >= alphabet.size) {
            return Err(LabError::InvalidArgument(format!(
                "element {x} outside alphabet"
            )));
        }
        Ok(OrderedTuple { alphabet, entries })
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn type_of(&self) -> TypeVector {
        TypeVector::new(self.alphabet, self.entries.clone()).expect("entries already validated")
    }

    /// `σ(v) = (v_{σ(1)}, …, v_{σ(t)})`.
    pub fn permuted(&self, sigma: &Permutation) -> Result<OrderedTuple> {
        if sigma.len() != self.entries.len() {
            return Err(LabError::DimensionMismatch(format!(
                "permutation of {} applied to a {}-tuple",
                sigma.len(),
                self.entries.len()
            )));
        }
        Ok(OrderedTuple {
            alphabet: self.alphabet,
            entries: sigma.0.iter().map(|&i| self.entries[i]).collect(),
        })
    }

    /// `|v⟩` on `t` registers.
    pub fn to_state(&self) -> Result<PureState> {
        let shape = self.alphabet.register_shape(self.entries.len())?;
        PureState::basis(shape, pack_tuple(&self.entries, self.alphabet.width))
    }

    /// Uniformly random ordering of a type.
    pub fn random_ordering<R: Rng + ?Sized>(t: &TypeVector, rng: &mut R) -> OrderedTuple {
        let mut e = t.elements.clone();
        use rand::seq::SliceRandom;
        e.shuffle(rng);
        OrderedTuple {
            alphabet: t.alphabet,
            entries: e,
        }
    }
}

/// A permutation of `{0, …, t−1}` stored as an index array.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &i in &map {
            if i >= map.len() || std::mem::replace(&mut seen[i], true) {
                return Err(LabError::InvalidArgument(format!(
                    "{map:?} is not a permutation"
                )));
            }
        }
        Ok(Permutation(map))
    }

    pub fn identity(t: usize) -> Self {
        Permutation((0..t).collect())
    }

    /// Every element of `S_t` in lexicographic order.
    pub fn all(t: usize) -> Vec<Permutation> {
        let mut cur: Vec<u64> = (0..t as u64).collect();
        let mut out = vec![Permutation((0..t).collect())];
        while next_permutation(&mut cur) {
            out.push(Permutation(cur.iter().map(|&x| x as usize).collect()));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// `(self ∘ other)(i) = self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Result<Permutation> {
        if self.len() != other.len() {
            return Err(LabError::DimensionMismatch(
                "composing permutations of different degree".into(),
            ));
        }
        Ok(Permutation(other.0.iter().map(|&i| self.0[i]).collect()))
    }

    /// Whether `{σ(1), …, σ(ℓ)} = {1, …, ℓ}`.
    pub fn preserves_prefix_block(&self, ell: usize) -> bool {
        self.0[..ell].iter().all(|&i| i < ell)
    }
}

pub(crate) fn pack_tuple(entries: &[u64], width: u32) -> u64 {
    entries.iter().fold(0u64, |acc, &x| (acc << width) | x)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `C(n, k)` in `u128`, saturating.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// `C(n, k)` as a float, for bound formulas.
pub fn binomial_f64(n: f64, k: u64) -> f64 {
    (0..k).map(|i| (n - i as f64) / (i as f64 + 1.0)).product()
}

/// `|T⟩ = √(∏ T_i! / t!) Σ_{v ∈ T} |v⟩`.
pub fn type_state(t: &TypeVector) -> Result<PureState> {
    if t.is_empty() {
        return Err(LabError::InvalidArgument(
            "type state of an empty type".into(),
        ));
    }
    type_state_or_scalar(t)
}

/// Like [`type_state`] but maps the empty type to the zero-register scalar.
pub(crate) fn type_state_or_scalar(t: &TypeVector) -> Result<PureState> {
    if t.is_empty() {
        return Ok(PureState::scalar_one());
    }
    let num: f64 = t
        .multiplicities()
        .iter()
        .map(|&(_, c)| factorial(c))
        .product();
    let coef = C64::new((num / factorial(t.total())).sqrt(), 0.0);
    let width = t.alphabet.width;
    let amps: Vec<(u64, C64)> = t
        .orderings()
        .into_iter()
        .map(|v| (pack_tuple(&v, width), coef))
        .collect();
    // orderings are lexicographic, so packed labels are increasing
    Ok(PureState::from_sorted_unchecked(
        t.alphabet.register_shape(t.total())?,
        amps,
    ))
}

/// `|T₁⟩ ⊗ |T∖T₁⟩` for the chosen positions of `T`.
pub fn split_state(t: &TypeVector, positions: &[usize]) -> Result<PureState> {
    let (a, b) = t.split(positions)?;
    type_state_or_scalar(&a)?.tensor(&type_state_or_scalar(&b)?)
}

/// Whether `T` is `ℓ`-fold prefix collision-free: distinct `ℓ`-subsets of
/// `mset(T)` (as position sets) never share the XOR of their prefixes.
pub fn is_l_fold_prefix_cf(t: &TypeVector, ell: usize, max_pairs: u64) -> Result<bool> {
    if ell == 0 || ell > t.total() {
        return Err(LabError::InvalidArgument(format!(
            "ℓ = {ell} must be in 1..={}",
            t.total()
        )));
    }
    if ell == t.total() {
        return Ok(true);
    }
    let subsets = binomial(t.total() as u64, ell as u64);
    let pairs = subsets.saturating_mul(subsets);
    if pairs > max_pairs as u128 {
        return Err(LabError::budget("subset pairs", pairs, max_pairs as u128));
    }
    let prefixes: Vec<u64> = t.elements.iter().map(|&x| t.alphabet.prefix(x)).collect();
    let mut xors: Vec<u64> = Vec::with_capacity(subsets as usize);
    for_each_subset(t.total(), ell, |s| {
        xors.push(s.iter().fold(0, |acc, &i| acc ^ prefixes[i]));
    });
    xors.sort_unstable();
    Ok(xors.windows(2).all(|w| w[0] != w[1]))
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order.
pub fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        if idx[i] == i + n - k {
            return;
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for_each_subset(n, k, |s| out.push(s.to_vec()));
    out
}

/// Uniform type of size `t`: a uniform size-`t` multiset, via the
/// stars-and-bars bijection with `t`-subsets of `N + t − 1` slots.
pub fn sample_type<R: Rng + ?Sized>(
    alphabet: Alphabet,
    t: usize,
    rng: &mut R,
) -> Result<TypeVector> {
    if t == 0 {
        return Err(LabError::InvalidArgument("types must have t ≥ 1".into()));
    }
    let slots = alphabet
        .size
        .checked_add(t as u64 - 1)
        .ok_or_else(|| LabError::InvalidArgument("alphabet too large".into()))?;
    let mut pos: Vec<u64> = index::sample(rng, slots as usize, t)
        .into_iter()
        .map(|x| x as u64)
        .collect();
    pos.sort_unstable();
    let elements = pos.iter().enumerate().map(|(i, &c)| c - i as u64).collect();
    TypeVector::new(alphabet, elements)
}

/// Uniform collision-free type (a uniform `t`-subset of the alphabet).
pub fn sample_collision_free<R: Rng + ?Sized>(
    alphabet: Alphabet,
    t: usize,
    rng: &mut R,
) -> Result<TypeVector> {
    if (t as u64) > alphabet.size {
        return Err(LabError::EmptySet(format!(
            "no collision-free type of size {t} over {} strings",
            alphabet.size
        )));
    }
    let e = index::sample(rng, alphabet.size as usize, t)
        .into_iter()
        .map(|x| x as u64)
        .collect();
    TypeVector::new(alphabet, e)
}

/// Rejection sampling of [`sample_type`] conditioned on `predicate`.
pub fn sample_type_conditioned<R: Rng + ?Sized>(
    alphabet: Alphabet,
    t: usize,
    predicate: impl Fn(&TypeVector) -> Result<bool>,
    rng: &mut R,
    max_rejects: u64,
) -> Result<TypeVector> {
    let mut rejects = 0;
    loop {
        let ty = sample_type(alphabet, t, rng)?;
        if predicate(&ty)? {
            return Ok(ty);
        }
        rejects += 1;
        if rejects >= max_rejects {
            return Err(LabError::RejectBudget(rejects));
        }
    }
}

/// Every type of size `t`, in lexicographic order.
pub fn enumerate_types(alphabet: Alphabet, t: usize, max_types: u64) -> Result<Vec<TypeVector>> {
    let count = binomial(alphabet.size + t as u64 - 1, t as u64);
    if t == 0 {
        return Ok(vec![TypeVector {
            alphabet,
            elements: Vec::new(),
        }]);
    }
    if count > max_types as u128 {
        return Err(LabError::budget(
            format!("types of size {t}"),
            count,
            max_types as u128,
        ));
    }
    let n = alphabet.size;
    let mut out = Vec::with_capacity(count as usize);
    let mut cur = vec![0u64; t];
    loop {
        out.push(TypeVector {
            alphabet,
            elements: cur.clone(),
        });
        let mut i = t;
        while i > 0 && cur[i - 1] == n - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        let v = cur[i - 1] + 1;
        for c in &mut cur[i - 1..] {
            *c = v;
        }
    }
    Ok(out)
}

/// Every collision-free type (set) of size `t`.
pub fn enumerate_sets(alphabet: Alphabet, t: usize, max_types: u64) -> Result<Vec<TypeVector>> {
    let count = binomial(alphabet.size, t as u64);
    if count > max_types as u128 {
        return Err(LabError::budget(
            format!("sets of size {t}"),
            count,
            max_types as u128,
        ));
    }
    let mut out = Vec::with_capacity(count as usize);
    for_each_subset(alphabet.size as usize, t, |s| {
        out.push(TypeVector {
            alphabet,
            elements: s.iter().map(|&x| x as u64).collect(),
        })
    });
    Ok(out)
}

/// Sign `(−1)^{Σ_r ⟨k, prefix(register r)⟩}` applied to every basis
/// amplitude: the diagonal operator `Z^k ⊗ I` on each target register.
pub fn apply_phase(k: BasisString, state: &PureState, targets: &[usize]) -> Result<PureState> {
    let plan = PhasePlan::new(state.shape(), k.len(), targets)?;
    Ok(plan.apply(k.bits(), state))
}

/// Precomputed shifts for applying `Z^k` to the prefixes of target registers.
#[derive(Debug, Clone)]
pub struct PhasePlan {
    shifts: Vec<u32>,
    mask: u64,
}

impl PhasePlan {
    pub fn new(shape: &RegisterShape, lam: u32, targets: &[usize]) -> Result<Self> {
        let mut shifts = Vec::with_capacity(targets.len());
        for &r in targets {
            if r >= shape.num_registers() {
                return Err(LabError::InvalidArgument(format!(
                    "target register {r} out of range"
                )));
            }
            let w = shape.widths()[r];
            if w < lam {
                return Err(LabError::InvalidArgument(format!(
                    "register {r} has {w} bits, fewer than the {lam}-bit key"
                )));
            }
            shifts.push(shape.shift_of(r) + w - lam);
        }
        Ok(PhasePlan {
            shifts,
            mask: low_mask(lam),
        })
    }

    #[inline]
    pub fn sign(&self, key: u64, label: u64) -> bool {
        let mut acc = 0u64;
        for &s in &self.shifts {
            acc ^= (label >> s) & self.mask;
        }
        (acc & key).count_ones() & 1 == 1
    }

    pub fn apply(&self, key: u64, state: &PureState) -> PureState {
        let amps = state
            .amplitudes()
            .iter()
            .map(|&(l, a)| (l, if self.sign(key, l) { -a } else { a }))
            .collect();
        PureState::from_sorted_unchecked(state.shape().clone(), amps)
    }
}

/// `E_k (Z^k ⊗ I)|ψ⟩⟨ψ|(Z^k ⊗ I)` on the target registers as an exact
/// mixture; key values producing the same state (up to sign) are merged.
pub fn key_average(
    state: &PureState,
    lam: u32,
    targets: &[usize],
) -> Result<Vec<(f64, PureState)>> {
    if lam > 24 {
        return Err(LabError::budget("key bits", lam as u128, 24));
    }
    let plan = PhasePlan::new(state.shape(), lam, targets)?;
    let w = 1.0 / (1u64 << lam) as f64;
    let members: Vec<(f64, PureState)> = (0..1u64 << lam)
        .map(|k| (w, plan.apply(k, state)))
        .collect();
    Ok(Ensemble::new(state.shape().clone(), members)?
        .merge_duplicates()
        .members()
        .to_vec())
}

/// Outcome of comparing the key-averaged matrix unit with the set criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermSplitVerdict {
    /// `A_{v,σ} = |v⟩⟨σ(v)|`.
    IdentityKept,
    /// `A_{v,σ} = 0`.
    Zeroed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermSplitOutcome {
    /// Verdict read off the averaged coefficient.
    pub verdict: PermSplitVerdict,
    /// The averaged coefficient `E_k (−1)^{…}`.
    pub coefficient: f64,
    /// Whether `σ` maps `{1..ℓ}` onto itself.
    pub set_criterion_kept: bool,
}

impl PermSplitOutcome {
    pub fn agrees(&self) -> bool {
        (self.verdict == PermSplitVerdict::IdentityKept) == self.set_criterion_kept
    }
}

/// Averages `(Z^k⊗I)^{⊗ℓ} |v⟩⟨σ(v)| (Z^k⊗I)^{⊗ℓ}` over all `2^λ` keys and
/// classifies the result.
pub fn perm_split_check(
    v: &OrderedTuple,
    sigma: &Permutation,
    ell: usize,
    lam: u32,
) -> Result<PermSplitOutcome> {
    if v.alphabet.prefix_bits != lam {
        return Err(LabError::InvalidArgument(format!(
            "tuple alphabet has a {}-bit prefix, expected {lam}",
            v.alphabet.prefix_bits
        )));
    }
    if !is_l_fold_prefix_cf(&v.type_of(), ell, tol_pairs())? {
        return Err(LabError::Precondition(format!(
            "type of {:?} is not {ell}-fold prefix collision-free",
            v.entries
        )));
    }
    let sv = v.permuted(sigma)?;
    let ket = v.to_state()?;
    let bra = sv.to_state()?;
    let targets: Vec<usize> = (0..ell).collect();
    let plan = PhasePlan::new(ket.shape(), lam, &targets)?;
    let keys = 1u64 << lam;
    let mut acc = 0.0;
    for k in 0..keys {
        let a = plan.apply(k, &ket).amplitudes()[0].1;
        let b = plan.apply(k, &bra).amplitudes()[0].1;
        acc += (a * b.conj()).re;
    }
    let coefficient = acc / keys as f64;
    let verdict = if (coefficient - 1.0).abs() < tol::IDENTITY {
        PermSplitVerdict::IdentityKept
    } else if coefficient.abs() < tol::IDENTITY {
        PermSplitVerdict::Zeroed
    } else {
        return Err(LabError::Precondition(format!(
            "averaged coefficient {coefficient} is neither 0 nor 1"
        )));
    };
    Ok(PermSplitOutcome {
        verdict,
        coefficient,
        set_criterion_kept: sigma.preserves_prefix_block(ell),
    })
}

fn tol_pairs() -> u64 {
    crate::tol::Budget::default().max_subset_pairs
}

fn check_nice(t: &TypeVector, ell: usize) -> Result<()> {
    if !is_l_fold_prefix_cf(t, ell, tol_pairs())? {
        return Err(LabError::Precondition(format!(
            "type is not {ell}-fold prefix collision-free"
        )));
    }
    Ok(())
}

/// Key average of `|T⟩⟨T|` with `Z^k ⊗ I` on the first `ℓ` registers.
pub fn nice_t_lhs(t: &TypeVector, ell: usize) -> Result<Ensemble> {
    check_nice(t, ell)?;
    nice_t_lhs_unchecked(t, ell)
}

/// Uniform mixture of `|X⟩⟨X| ⊗ |T∖X⟩⟨T∖X|` over `ℓ`-subsets `X` of `T`.
pub fn nice_t_rhs(t: &TypeVector, ell: usize) -> Result<Ensemble> {
    check_nice(t, ell)?;
    nice_t_rhs_unchecked(t, ell)
}

/// [`nice_t_lhs`] without the collision-freeness precondition (for
/// negative controls).
pub fn nice_t_lhs_unchecked(t: &TypeVector, ell: usize) -> Result<Ensemble> {
    let state = type_state(t)?;
    let targets: Vec<usize> = (0..ell).collect();
    let members = key_average(&state, t.alphabet.prefix_bits, &targets)?;
    Ensemble::new(state.shape().clone(), members)
}

pub fn nice_t_rhs_unchecked(t: &TypeVector, ell: usize) -> Result<Ensemble> {
    if ell == 0 || ell > t.total() {
        return Err(LabError::InvalidArgument(format!("ℓ = {ell} out of range")));
    }
    let shape = t.alphabet.register_shape(t.total())?;
    let subs = subsets(t.total(), ell);
    let w = 1.0 / subs.len() as f64;
    let members = subs
        .iter()
        .map(|s| split_state(t, s).map(|st| (w, st)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble::new(shape, members)?.merge_duplicates())
}

/// Monte-Carlo estimate of `Pr_T[T is ℓ-fold λ-prefix cf]` with the
/// comparison rates attached.
#[derive(Debug, Clone, PartialEq)]
pub struct CfEstimate {
    pub probability: f64,
    pub stderr: f64,
    pub trials: u64,
    /// `t^{2ℓ} / 2^λ`.
    pub rate: f64,
    /// `t²/2^{λ+m′} + C(t,ℓ)²/(2^λ − 2ℓ)`: the union bound read with
    /// parentheses around the denominator.
    pub union_bound: f64,
    /// Same bound read literally as `C(t,ℓ)²·(1/2^λ − 2ℓ)`.
    pub union_bound_literal: f64,
}

fn cf_rates(lam: u32, m_suffix: u32, ell: usize, t: usize) -> (f64, f64, f64) {
    let two_lam = 2f64.powi(lam as i32);
    let rate = (t as f64).powi(2 * ell as i32) / two_lam;
    let coll = (t as f64).powi(2) / 2f64.powi((lam + m_suffix) as i32);
    let pairs = binomial_f64(t as f64, ell as u64).powi(2);
    (
        rate,
        coll + pairs / (two_lam - 2.0 * ell as f64),
        coll + pairs * (1.0 / two_lam - 2.0 * ell as f64),
    )
}

pub fn estimate_cf_probability<R: Rng + ?Sized>(
    lam: u32,
    m_suffix: u32,
    ell: usize,
    t: usize,
    trials: u64,
    rng: &mut R,
) -> Result<CfEstimate> {
    if trials == 0 {
        return Err(LabError::InvalidArgument("need at least one trial".into()));
    }
    let alphabet = Alphabet::qubits(lam, m_suffix)?;
    let mut hits = 0u64;
    for _ in 0..trials {
        let ty = sample_type(alphabet, t, rng)?;
        if is_l_fold_prefix_cf(&ty, ell, tol_pairs())? {
            hits += 1;
        }
    }
    let p = hits as f64 / trials as f64;
    let (rate, union_bound, union_bound_literal) = cf_rates(lam, m_suffix, ell, t);
    Ok(CfEstimate {
        probability: p,
        stderr: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
        rate,
        union_bound,
        union_bound_literal,
    })
}

/// Exact `Pr_T[T is ℓ-fold λ-prefix cf]` by enumerating every type.
pub fn exact_cf_probability(
    lam: u32,
    m_suffix: u32,
    ell: usize,
    t: usize,
    max_types: u64,
) -> Result<f64> {
    let alphabet = Alphabet::qubits(lam, m_suffix)?;
    let types = enumerate_types(alphabet, t, max_types)?;
    let mut good = 0u64;
    for ty in &types {
        if is_l_fold_prefix_cf(ty, ell, tol_pairs())? {
            good += 1;
        }
    }
    Ok(good as f64 / types.len() as f64)
}

/// The comparison rates of [`CfEstimate`] without sampling.
pub fn cf_bounds(lam: u32, m_suffix: u32, ell: usize, t: usize) -> (f64, f64, f64) {
    cf_rates(lam, m_suffix, ell, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn bs(s: &str) -> BasisString {
        BasisString::parse(s).unwrap()
    }

    fn ty(strings: &[&str], lam: u32) -> TypeVector {
        let v: Vec<BasisString> = strings.iter().map(|s| bs(s)).collect();
        TypeVector::from_strings(&v, lam).unwrap()
    }

    #[test]
    fn singleton_type_state_is_basis_state() {
        let s = type_state(&ty(&["101"], 1)).unwrap();
        assert_eq!(s.amplitudes(), &[(0b101, C64::new(1.0, 0.0))]);
    }

    #[test]
    fn two_element_type_state() {
        let s = type_state(&ty(&["00", "01"], 2)).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(s.support_len(), 2);
        assert_eq!(s.amplitudes()[0].0, 0b0001);
        assert_eq!(s.amplitudes()[1].0, 0b0100);
        for (_, a) in s.amplitudes() {
            assert!((a.re - h).abs() < 1e-15);
        }
    }

    #[test]
    fn repeated_element_type_state() {
        let s = type_state(&ty(&["00", "00"], 2)).unwrap();
        assert_eq!(s.amplitudes(), &[(0, C64::new(1.0, 0.0))]);
    }

    #[test]
    fn empty_type_rejected() {
        let a = Alphabet::qubits(1, 1).unwrap();
        assert!(type_state(&TypeVector::new(a, vec![]).unwrap()).is_err());
    }

    #[test]
    fn prefix_cf_examples() {
        // λ=2 prefixes 00 and 01 with one suffix bit
        assert!(is_l_fold_prefix_cf(&ty(&["000", "011"], 2), 1, 1_000_000).unwrap());
        let four = ty(&["000", "011", "100", "111"], 2);
        assert!(!is_l_fold_prefix_cf(&four, 2, 1_000_000).unwrap());
        assert!(is_l_fold_prefix_cf(&four, 4, 1_000_000).unwrap());
        assert!(is_l_fold_prefix_cf(&four, 5, 1_000_000).is_err());
    }

    #[test]
    fn prefix_cf_brute_force_agrees() {
        // independent oracle: explicit pair loop
        let mut rng = substream(11, 0);
        let alphabet = Alphabet::qubits(3, 1).unwrap();
        for _ in 0..200 {
            let t = sample_type(alphabet, 4, &mut rng).unwrap();
            for ell in 1..=4 {
                let subs = subsets(4, ell);
                let px = |s: &Vec<usize>| {
                    s.iter()
                        .fold(0, |a, &i| a ^ alphabet.prefix(t.elements()[i]))
                };
                let mut ok = true;
                for a in &subs {
                    for b in &subs {
                        if a != b && px(a) == px(b) {
                            ok = false;
                        }
                    }
                }
                assert_eq!(is_l_fold_prefix_cf(&t, ell, 1_000_000).unwrap(), ok);
            }
        }
    }

    #[test]
    fn subset_pair_cap_enforced() {
        let a = Alphabet::qubits(8, 0).unwrap();
        let t = TypeVector::new(a, (0..40).collect()).unwrap();
        assert!(matches!(
            is_l_fold_prefix_cf(&t, 4, 1_000_000),
            Err(LabError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn phase_examples() {
        let plus = PureState::new(
            RegisterShape::new(vec![1]).unwrap(),
            vec![
                (0, C64::new(0.5f64.sqrt(), 0.0)),
                (1, C64::new(0.5f64.sqrt(), 0.0)),
            ],
        )
        .unwrap();
        let minus = apply_phase(bs("1"), &plus, &[0]).unwrap();
        assert!(minus.amplitudes()[1].1.re < 0.0);
        assert_eq!(apply_phase(bs("0"), &plus, &[0]).unwrap(), plus);
        let ten = PureState::basis(RegisterShape::new(vec![2]).unwrap(), 0b10).unwrap();
        let out = apply_phase(bs("1"), &ten, &[0]).unwrap();
        assert_eq!(out.amplitudes()[0].1, C64::new(-1.0, 0.0));
        let narrow = PureState::basis(RegisterShape::new(vec![1]).unwrap(), 0).unwrap();
        assert!(apply_phase(bs("11"), &narrow, &[0]).is_err());
    }

    #[test]
    fn perm_split_swap_is_zeroed() {
        let alphabet = Alphabet::qubits(2, 1).unwrap();
        let v = OrderedTuple::new(alphabet, vec![0b000, 0b011]).unwrap();
        let swap = Permutation::new(vec![1, 0]).unwrap();
        let out = perm_split_check(&v, &swap, 1, 2).unwrap();
        assert_eq!(out.verdict, PermSplitVerdict::Zeroed);
        assert!(out.agrees());
        let id = perm_split_check(&v, &Permutation::identity(2), 1, 2).unwrap();
        assert_eq!(id.verdict, PermSplitVerdict::IdentityKept);
    }

    #[test]
    fn perm_split_within_block_kept() {
        let alphabet = Alphabet::qubits(2, 0).unwrap();
        let v = OrderedTuple::new(alphabet, vec![0b00, 0b01, 0b10]).unwrap();
        let sigma = Permutation::new(vec![1, 0, 2]).unwrap();
        let out = perm_split_check(&v, &sigma, 2, 2).unwrap();
        assert_eq!(out.verdict, PermSplitVerdict::IdentityKept);
        assert!(out.set_criterion_kept);
    }

    #[test]
    fn perm_split_precondition() {
        let alphabet = Alphabet::qubits(1, 1).unwrap();
        // both strings share prefix 0
        let v = OrderedTuple::new(alphabet, vec![0b00, 0b01]).unwrap();
        assert!(matches!(
            perm_split_check(&v, &Permutation::identity(2), 1, 1),
            Err(LabError::Precondition(_))
        ));
    }

    #[test]
    fn nice_t_two_element_example() {
        let t = ty(&["000", "011"], 2);
        let lhs = nice_t_lhs(&t, 1).unwrap().to_sparse();
        let rhs = nice_t_rhs(&t, 1).unwrap().to_sparse();
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        // hand expansion: ½(|v1 v2⟩⟨v1 v2| + |v2 v1⟩⟨v2 v1|)
        assert!((lhs.get(0b000011, 0b000011).re - 0.5).abs() < 1e-12);
        assert!((lhs.get(0b011000, 0b011000).re - 0.5).abs() < 1e-12);
        assert!(lhs.get(0b000011, 0b011000).norm() < 1e-12);
    }

    #[test]
    fn nice_t_forced_split() {
        let t = ty(&["00", "01"], 1);
        let lhs = nice_t_lhs(&t, 2).unwrap().to_sparse();
        let full = Ensemble::pure(type_state(&t).unwrap()).to_sparse();
        assert!(lhs.max_abs_diff(&full) < 1e-12);
        assert!(nice_t_rhs(&t, 2).unwrap().to_sparse().max_abs_diff(&full) < 1e-12);
    }

    #[test]
    fn enumeration_counts() {
        let a = Alphabet::of_size(4).unwrap();
        assert_eq!(enumerate_types(a, 2, 100).unwrap().len(), 10);
        assert_eq!(enumerate_sets(a, 2, 100).unwrap().len(), 6);
        assert!(enumerate_types(a, 2, 5).is_err());
        let one = Alphabet::of_size(1).unwrap();
        assert_eq!(
            enumerate_types(one, 3, 10).unwrap(),
            vec![TypeVector::new(one, vec![0, 0, 0]).unwrap()]
        );
    }

    #[test]
    fn single_string_alphabet_sampling() {
        let one = Alphabet::of_size(1).unwrap();
        let mut rng = substream(1, 0);
        for t in 1..5 {
            assert_eq!(
                sample_type(one, t, &mut rng).unwrap().elements(),
                vec![0; t].as_slice()
            );
        }
    }

    #[test]
    fn conditioned_sampling_gives_up() {
        let a = Alphabet::qubits(1, 0).unwrap();
        let mut rng = substream(3, 0);
        // three elements from two strings can never be collision-free
        let r = sample_type_conditioned(a, 3, |t| Ok(t.collision_free()), &mut rng, 50);
        assert!(matches!(r, Err(LabError::RejectBudget(50))));
    }

    #[test]
    fn permutation_compose_and_all() {
        assert_eq!(Permutation::all(3).len(), 6);
        let a = Permutation::new(vec![1, 2, 0]).unwrap();
        let b = Permutation::new(vec![0, 2, 1]).unwrap();
        assert_eq!(a.compose(&b).unwrap().as_slice(), &[1, 0, 2]);
        // (a∘b)(v) = a applied after b on indices: σ(v)_i = v_{σ(i)}
        let alphabet = Alphabet::of_size(8).unwrap();
        let v = OrderedTuple::new(alphabet, vec![5, 6, 7]).unwrap();
        let ab = v.permuted(&a.compose(&b).unwrap()).unwrap();
        assert_eq!(ab.entries(), &[6, 5, 7]);
        assert!(Permutation::new(vec![0, 0]).is_err());
    }

    #[test]
    fn cf_probability_singleton_and_crowded() {
        let mut rng = substream(5, 0);
        let e = estimate_cf_probability(4, 1, 1, 1, 100, &mut rng).unwrap();
        assert_eq!(e.probability, 1.0);
        // 4 strings of 2 bits, t = 4: only the full set is cf, 1 of C(7,4) = 35
        let exact = exact_cf_probability(2, 0, 1, 4, 1000).unwrap();
        assert!((exact - 1.0 / 35.0).abs() < 1e-15);
        let est = estimate_cf_probability(2, 0, 1, 4, 20_000, &mut rng).unwrap();
        assert!((est.probability - exact).abs() < 4.0 * est.stderr.max(1e-3));
    }
}
