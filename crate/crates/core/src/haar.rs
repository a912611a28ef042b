//! Haar-random states and the exact type-state moment oracle.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::qla::linalg::kron;
use crate::qla::{Ensemble, PureState, RegisterShape, C64};
use crate::rng::{substream, LabRng};
use crate::typestates::{enumerate_types, pack_tuple, type_state, Alphabet, Permutation};

/// Reproducible source of Haar-random `n`-qubit states: trial `i` draws from
/// stream `i` of the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaarSampler {
    pub n_qubits: u32,
    pub seed: u64,
}

impl HaarSampler {
    pub fn new(n_qubits: u32, seed: u64) -> Self {
        HaarSampler { n_qubits, seed }
    }

    pub fn rng(&self, trial: u64) -> LabRng {
        substream(self.seed, trial)
    }

    pub fn sample(&self, trial: u64, max_state_dim: usize) -> Result<PureState> {
        sample_haar(self.n_qubits, &mut self.rng(trial), max_state_dim)
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Normalised vector of `2^n` i.i.d. standard complex Gaussians.
pub fn sample_haar<R: Rng + ?Sized>(
    n: u32,
    rng: &mut R,
    max_state_dim: usize,
) -> Result<PureState> {
    if n == 0 {
        return Err(LabError::InvalidArgument("need n ≥ 1 qubits".into()));
    }
    let shape = RegisterShape::new(vec![n])?;
    let d = shape.dim_checked(max_state_dim)?;
    let v: Vec<C64> = (0..d).map(|_| gaussian(rng)).collect();
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let amps = v
        .into_iter()
        .enumerate()
        .map(|(i, a)| (i as u64, a / norm))
        .collect();
    PureState::normalized(shape, amps)
}

/// Haar-random `d×d` unitary: QR of a complex Ginibre matrix with the
/// phases of `R`'s diagonal moved into `Q`.
pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<C64> {
    let g = DMatrix::from_fn(d, d, |_, _| gaussian(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let ph = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..d {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// `E_ϑ |ϑ⟩⟨ϑ|^{⊗t}` over an `N`-dimensional space as the uniform mixture of
/// all `C(N+t−1, t)` type states.
pub fn haar_moment_exact(n_dim: u64, t: usize, max_types: u64) -> Result<Ensemble> {
    haar_moment_over(Alphabet::of_size(n_dim)?, t, max_types)
}

/// [`haar_moment_exact`] over an explicit alphabet (so register widths match
/// prefix-carrying states).
pub fn haar_moment_over(alphabet: Alphabet, t: usize, max_types: u64) -> Result<Ensemble> {
    if t == 0 {
        return Ok(Ensemble::pure(PureState::scalar_one()));
    }
    let types = enumerate_types(alphabet, t, max_types)?;
    let states = types.iter().map(type_state).collect::<Result<Vec<_>>>()?;
    Ensemble::uniform(alphabet.register_shape(t)?, states)
}

/// `Π_sym / C(N+t−1, t)` built from permutation operators,
/// `Π_sym = (1/t!) Σ_σ P_σ`.
pub fn symmetric_projector_dense(n_dim: u64, t: usize, limit: usize) -> Result<DMatrix<C64>> {
    let alphabet = Alphabet::of_size(n_dim)?;
    let width = alphabet.width();
    let shape = alphabet.register_shape(t)?;
    let full = shape.dim_checked(limit)?;
    let perms = Permutation::all(t);
    let mut m = DMatrix::<C64>::zeros(full, full);
    let w = C64::new(1.0 / perms.len() as f64, 0.0);
    let mut digits = vec![0u64; t];
    let total = (n_dim as u128).pow(t as u32);
    for idx in 0..total {
        let mut rem = idx;
        for d in digits.iter_mut().rev() {
            *d = (rem % n_dim as u128) as u64;
            rem /= n_dim as u128;
        }
        let col = pack_tuple(&digits, width) as usize;
        for p in &perms {
            let permuted: Vec<u64> = p.as_slice().iter().map(|&i| digits[i]).collect();
            m[(pack_tuple(&permuted, width) as usize, col)] += w;
        }
    }
    let rank = crate::typestates::binomial(n_dim + t as u64 - 1, t as u64) as f64;
    Ok(m / C64::new(rank, 0.0))
}

/// Monte-Carlo estimate of `E |ϑ⟩⟨ϑ|^{⊗t}` for `n`-qubit Haar states as a
/// dense matrix. Trials run in fixed chunks on their own substreams, so the
/// result does not depend on the thread count.
pub fn monte_carlo_moment(
    n: u32,
    t: usize,
    samples: u64,
    seed: u64,
    limit: usize,
) -> Result<DMatrix<C64>> {
    if samples == 0 {
        return Err(LabError::InvalidArgument("need at least one sample".into()));
    }
    let d = 1usize << n;
    let full = RegisterShape::uniform(t, n)?.dim_checked(limit)?;
    const CHUNK: u64 = 1024;
    let chunks = samples.div_ceil(CHUNK);
    let sampler = HaarSampler::new(n, seed);
    let partial: Vec<Result<DMatrix<C64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = DMatrix::<C64>::zeros(full, full);
            for trial in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let s = sampler.sample(trial, d)?;
                let v = s.to_dense(d)?;
                let mut tv = DMatrix::from_column_slice(1, 1, &[C64::new(1.0, 0.0)]);
                let col = DMatrix::from_column_slice(d, 1, v.as_slice());
                for _ in 0..t {
                    tv = kron(&tv, &col);
                }
                acc += &tv * tv.adjoint();
            }
            Ok(acc)
        })
        .collect();
    let mut total = DMatrix::<C64>::zeros(full, full);
    for p in partial {
        total += p?;
    }
    Ok(total / C64::new(samples as f64, 0.0))
}

/// Conjugates a dense operator on `t` copies by `U^{⊗t}`.
pub fn conjugate_by_power(m: &DMatrix<C64>, u: &DMatrix<C64>, t: usize) -> DMatrix<C64> {
    let mut ut = DMatrix::from_column_slice(1, 1, &[C64::new(1.0, 0.0)]);
    for _ in 0..t {
        ut = kron(&ut, u);
    }
    &ut * m * ut.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qla::linalg::{max_abs_diff, trace};
    use crate::qla::metrics::trace_distance_matrices;

    const LIMIT: usize = 4096;

    #[test]
    fn moment_n2_t1_is_maximally_mixed() {
        let m = haar_moment_exact(2, 1, 100)
            .unwrap()
            .to_dense(LIMIT)
            .unwrap();
        let id = DMatrix::<C64>::identity(2, 2) / C64::new(2.0, 0.0);
        assert!(max_abs_diff(m.matrix(), &id) < 1e-15);
    }

    #[test]
    fn moment_n2_t2_hand_expansion() {
        let m = haar_moment_exact(2, 2, 100).unwrap();
        assert_eq!(m.len(), 3);
        let dense = m.to_dense(LIMIT).unwrap();
        // Π_sym on two qubits: |00⟩⟨00| + |11⟩⟨11| + |Ψ+⟩⟨Ψ+|
        let mut expect = DMatrix::<C64>::zeros(4, 4);
        expect[(0, 0)] = C64::new(1.0, 0.0);
        expect[(3, 3)] = C64::new(1.0, 0.0);
        for (i, j) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            expect[(i, j)] = C64::new(0.5, 0.0);
        }
        expect /= C64::new(3.0, 0.0);
        assert!(max_abs_diff(dense.matrix(), &expect) < 1e-15);
    }

    #[test]
    fn moment_n4_t2_rank_and_trace() {
        let m = haar_moment_exact(4, 2, 100).unwrap();
        assert_eq!(m.len(), 10);
        let dense = m.to_dense(LIMIT).unwrap();
        assert!((trace(dense.matrix()).re - 1.0).abs() < 1e-12);
        let rank = crate::qla::linalg::numerical_rank(dense.matrix(), 1e-10).unwrap();
        assert_eq!(rank, 10);
    }

    #[test]
    fn moment_matches_symmetric_projector() {
        for (n, t) in [(2, 2), (2, 3), (3, 2), (4, 2), (4, 3)] {
            let m = haar_moment_exact(n, t, 1000)
                .unwrap()
                .to_dense(LIMIT)
                .unwrap();
            let p = symmetric_projector_dense(n, t, LIMIT).unwrap();
            assert!(max_abs_diff(m.matrix(), &p) < 1e-12, "N={n} t={t}");
        }
    }

    #[test]
    fn moment_unitary_invariance() {
        let mut rng = substream(17, 0);
        for (n, t) in [(2u64, 2usize), (3, 2), (4, 3)] {
            let m = haar_moment_exact(n, t, 1000)
                .unwrap()
                .to_dense(LIMIT)
                .unwrap();
            let u = random_unitary(n as usize, &mut rng);
            // non-power-of-two alphabets sit inside a padded register
            let width = Alphabet::of_size(n).unwrap().width();
            let pad = 1usize << width;
            let mut up = DMatrix::<C64>::identity(pad, pad);
            up.view_mut((0, 0), (n as usize, n as usize)).copy_from(&u);
            let c = conjugate_by_power(m.matrix(), &up, t);
            assert!(max_abs_diff(&c, m.matrix()) < 1e-8, "N={n} t={t}");
        }
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = substream(2, 0);
        let u = random_unitary(5, &mut rng);
        let id = DMatrix::<C64>::identity(5, 5);
        assert!(max_abs_diff(&(&u * u.adjoint()), &id) < 1e-12);
    }

    #[test]
    fn sampler_reproducible_and_normalized() {
        let s = HaarSampler::new(3, 99);
        let a = s.sample(4, 1 << 10).unwrap();
        let b = s.sample(4, 1 << 10).unwrap();
        assert_eq!(a, b);
        assert!((a.norm_sqr() - 1.0).abs() < 1e-12);
        assert_ne!(a, s.sample(5, 1 << 10).unwrap());
        assert!(matches!(
            sample_haar(12, &mut s.rng(0), 1024),
            Err(LabError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn first_amplitude_mean_one_qubit() {
        let s = HaarSampler::new(1, 5);
        let trials = 100_000u64;
        let vals: Vec<f64> = (0..trials)
            .map(|i| s.sample(i, 2).unwrap().amplitude(0).norm_sqr())
            .collect();
        let mean = vals.iter().sum::<f64>() / trials as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / trials as f64;
        assert!((mean - 0.5).abs() < 3.0 * (var / trials as f64).sqrt());
    }

    #[test]
    fn monte_carlo_one_design() {
        let m = monte_carlo_moment(2, 1, 20_000, 3, LIMIT).unwrap();
        let id = DMatrix::<C64>::identity(4, 4) / C64::new(4.0, 0.0);
        assert!(trace_distance_matrices(&m, &id).unwrap() < 0.03);
    }

    #[test]
    fn monte_carlo_error_halves_with_four_times_samples() {
        let exact = haar_moment_exact(4, 2, 1000)
            .unwrap()
            .to_dense(LIMIT)
            .unwrap();
        // average over several seeds to tame fluctuation of a single run
        let err = |samples: u64| -> f64 {
            (0..8)
                .map(|s| {
                    let m = monte_carlo_moment(2, 2, samples, 1000 + s, LIMIT).unwrap();
                    trace_distance_matrices(&m, exact.matrix()).unwrap()
                })
                .sum::<f64>()
                / 8.0
        };
        let e1 = err(2_000);
        let e4 = err(8_000);
        let ratio = e4 / e1;
        assert!((0.35..0.7).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn monte_carlo_deterministic() {
        let a = monte_carlo_moment(1, 2, 3000, 8, LIMIT).unwrap();
        let b = monte_carlo_moment(1, 2, 3000, 8, LIMIT).unwrap();
        assert_eq!(a, b);
    }
}
