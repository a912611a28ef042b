//! Discriminating the phase ensemble `ρ_x = E_ψ (Z^x ⊗ I)|ψ⟩⟨ψ|^{⊗m+1}(Z^x ⊗ I)`
//! with the pretty good measurement.
//!
//! Here the phase acts on the whole first register (`λ = n`), and
//! `σ = Σ_x ρ_x` is diagonal in the basis `|j⟩ ⊗ |T′⟩` (first-register value
//! times a type state of the remaining `m` copies):
//! `σ = d/C(d+m, m+1) · Σ_{j,T′} (T′_j + 1)/(m+1) |j, T′⟩⟨j, T′|`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::haar::haar_moment_over;
use crate::qla::linalg::{self, inv_sqrt_on_support, max_abs_diff, support_projector, trace};
use crate::qla::{Ensemble, PureState, C64};
use crate::report::{Check, ExperimentReport};
use crate::tol::{self, Budget};
use crate::typestates::{binomial, enumerate_types, type_state_or_scalar, Alphabet, PhasePlan};

/// `d = 2^n` and `m + 1` total copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PgmParams {
    pub n: u32,
    pub m: usize,
}

impl PgmParams {
    pub fn new(n: u32, m: usize, budget: &Budget) -> Result<Self> {
        if n == 0 || n > 16 {
            return Err(LabError::InvalidArgument(format!(
                "n = {n} must be in 1..=16"
            )));
        }
        let types = binomial((1u64 << n) + m as u64, m as u64 + 1);
        if types > budget.max_types as u128 {
            return Err(LabError::budget(
                "types C(d+m, m+1)",
                types,
                budget.max_types as u128,
            ));
        }
        if n as usize * (m + 1) > 64 {
            return Err(LabError::budget(
                "label bits",
                (n as usize * (m + 1)) as u128,
                64,
            ));
        }
        Ok(PgmParams { n, m })
    }

    pub fn d(&self) -> u64 {
        1u64 << self.n
    }

    fn alphabet(&self) -> Alphabet {
        Alphabet::qubits(self.n, 0).expect("validated width")
    }

    fn dense_dim(&self, budget: &Budget) -> Result<usize> {
        self.alphabet()
            .register_shape(self.m + 1)?
            .dim_checked(budget.max_dense_dim)
    }
}

/// `ρ_x` as an ensemble of phased type states.
pub fn build_rho_x(x: u64, params: &PgmParams, budget: &Budget) -> Result<Ensemble> {
    if x >= params.d() {
        return Err(LabError::InvalidArgument(format!(
            "x = {x} is not an {}-bit string",
            params.n
        )));
    }
    let moment = haar_moment_over(params.alphabet(), params.m + 1, budget.max_types)?;
    let plan = PhasePlan::new(moment.shape(), params.n, &[0])?;
    moment.map_states(moment.shape().clone(), |s| Ok(plan.apply(x, s)))
}

/// `σ` from its diagonal form, as `(weight, |j⟩ ⊗ |T′⟩)` pairs.
pub fn sigma_diagonal(params: &PgmParams, budget: &Budget) -> Result<Vec<(f64, PureState)>> {
    let a = params.alphabet();
    let d = params.d();
    let m = params.m;
    let scale = d as f64 / binomial(d + m as u64, m as u64 + 1) as f64;
    let rests = enumerate_types(a, m, budget.max_types)?;
    let mut out = Vec::with_capacity(rests.len() * d as usize);
    for j in 0..d {
        let head = PureState::basis(a.register_shape(1)?, j)?;
        for rest in &rests {
            let r = rest.elements().iter().filter(|&&e| e == j).count();
            let w = scale * (r + 1) as f64 / (m + 1) as f64;
            out.push((w, head.tensor(&type_state_or_scalar(rest)?)?));
        }
    }
    Ok(out)
}

fn dense_from_diagonal(
    diag: &[(f64, PureState)],
    dim: usize,
    f: impl Fn(f64) -> f64,
) -> Result<DMatrix<C64>> {
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for (w, s) in diag {
        let v = s.to_dense(dim)?;
        m += (&v * v.adjoint()) * C64::new(f(*w), 0.0);
    }
    Ok(m)
}

/// The pieces shared by the bound check and the guessing experiment.
struct Prepared {
    rhos: Vec<DMatrix<C64>>,
    sigma: DMatrix<C64>,
    inv_sqrt: DMatrix<C64>,
    /// `‖σ^{-1/2}‖` read off the diagonal form.
    inv_sqrt_norm: f64,
    /// `max|σ_blocks − Σ_x ρ_x|` and `max|σ^{-1/2}_blocks − σ^{-1/2}_eig|`.
    sigma_route_gap: f64,
    inv_sqrt_route_gap: f64,
}

fn prepare(params: &PgmParams, budget: &Budget) -> Result<Prepared> {
    let dim = params.dense_dim(budget)?;
    let rhos = (0..params.d())
        .into_par_iter()
        .map(|x| Ok(build_rho_x(x, params, budget)?.to_dense(dim)?.into_matrix()))
        .collect::<Result<Vec<_>>>()?;
    let mut direct = DMatrix::<C64>::zeros(dim, dim);
    for r in &rhos {
        direct += r;
    }
    let diag = sigma_diagonal(params, budget)?;
    let sigma = dense_from_diagonal(&diag, dim, |w| w)?;
    let inv_sqrt = dense_from_diagonal(&diag, dim, |w| 1.0 / w.sqrt())?;
    let inv_sqrt_norm = diag.iter().map(|(w, _)| 1.0 / w.sqrt()).fold(0.0, f64::max);
    let inv_eig = inv_sqrt_on_support(&direct, tol::PSEUDO_RANK)?;
    Ok(Prepared {
        sigma_route_gap: max_abs_diff(&sigma, &direct),
        inv_sqrt_route_gap: max_abs_diff(&inv_sqrt, &inv_eig),
        rhos,
        sigma,
        inv_sqrt,
        inv_sqrt_norm,
    })
}

fn echo(r: &mut ExperimentReport, params: &PgmParams) {
    r.param("n", params.n)
        .param("m", params.m)
        .param("d", params.d());
}

/// `‖σ^{-1/2}‖` closed form `√(C(d+m, m+1)(m+1)/d)`.
pub fn inv_sqrt_norm_closed_form(params: &PgmParams) -> f64 {
    let d = params.d();
    let m = params.m as u64;
    (binomial(d + m, m + 1) as f64 * (m + 1) as f64 / d as f64).sqrt()
}

fn q_value(p: &Prepared) -> f64 {
    let terms: Vec<f64> = p
        .rhos
        .par_iter()
        .map(|r| {
            let a = r * &p.inv_sqrt;
            trace(&(&a * &a)).re
        })
        .collect();
    terms.iter().sum::<f64>() / p.rhos.len() as f64
}

fn sigma_checks(r: &mut ExperimentReport, params: &PgmParams, p: &Prepared) -> Result<()> {
    r.check(Check::le(
        "sigma_routes_agree",
        "max|sigma_blocks - sum_x rho_x| <= 1e-8",
        p.sigma_route_gap,
        0.0,
        tol::CROSS_PATH,
    ));
    r.check(Check::le(
        "inv_sqrt_routes_agree",
        "max|sigma^-1/2 (blocks) - sigma^-1/2 (eigen)| <= 1e-8",
        p.inv_sqrt_route_gap,
        0.0,
        tol::CROSS_PATH,
    ));
    let dim = p.sigma.nrows();
    let mut worst: f64 = 0.0;
    for x in 0..params.d() {
        let z = DMatrix::<C64>::from_fn(dim, dim, |i, j| {
            if i != j {
                return C64::new(0.0, 0.0);
            }
            let first = (i as u64) >> (params.n as usize * params.m);
            if (first & x).count_ones() % 2 == 1 {
                C64::new(-1.0, 0.0)
            } else {
                C64::new(1.0, 0.0)
            }
        });
        let comm = &p.sigma * &z - &z * &p.sigma;
        worst = worst.max(linalg::hermitian_norm(&(comm * C64::new(0.0, 1.0)))?);
    }
    r.quantity("max_commutator_norm", worst);
    r.check(Check::le(
        "sigma_phase_invariant",
        "max_x ||[sigma, Z^x (x) I]|| <= 1e-9",
        worst,
        0.0,
        tol::STRUCTURAL,
    ));
    Ok(())
}

/// `Q = E_x Tr(ρ_x σ^{-1/2} ρ_x σ^{-1/2})` against `(m+1)/d`, and
/// `‖σ^{-1/2}‖` against its closed form.
pub fn pgm_bound_check(params: &PgmParams, budget: &Budget) -> Result<ExperimentReport> {
    let p = prepare(params, budget)?;
    let mut r = ExperimentReport::new("pgm");
    echo(&mut r, params);
    let q = q_value(&p);
    let d = params.d() as f64;
    let closed = inv_sqrt_norm_closed_form(params);
    let eig_norm = linalg::hermitian_norm(&p.inv_sqrt)?;
    r.quantity("q", q)
        .quantity("inv_sqrt_norm", eig_norm)
        .quantity("inv_sqrt_norm_blocks", p.inv_sqrt_norm);
    r.bound("q_bound", (params.m + 1) as f64 / d)
        .bound("inv_sqrt_norm_closed_form", closed);
    r.check(Check::bound(
        "q_bound",
        "Q <= (m+1)/d",
        q,
        (params.m + 1) as f64 / d,
    ));
    r.check(Check::eq(
        "inv_sqrt_norm_closed_form",
        "||sigma^-1/2|| = sqrt(C(d+m,m+1)(m+1)/d)",
        eig_norm,
        closed,
        tol::CROSS_PATH,
    ));
    sigma_checks(&mut r, params, &p)?;
    Ok(r)
}

/// Success probability of the pretty good measurement
/// `M_x = σ^{-1/2} ρ_x σ^{-1/2} + (I − Π_σ)/d`.
pub fn pgm_guess_prob(params: &PgmParams, budget: &Budget) -> Result<ExperimentReport> {
    let p = prepare(params, budget)?;
    let dim = p.sigma.nrows();
    let d = params.d() as f64;
    let (proj, rank) = support_projector(&p.sigma, tol::PSEUDO_RANK)?;
    let null = (DMatrix::<C64>::identity(dim, dim) - &proj) / C64::new(d, 0.0);
    let povm: Vec<DMatrix<C64>> = p
        .rhos
        .iter()
        .map(|rho| &p.inv_sqrt * rho * &p.inv_sqrt + &null)
        .collect();
    let mut total = DMatrix::<C64>::zeros(dim, dim);
    for m in &povm {
        total += m;
    }
    let completeness = max_abs_diff(&total, &DMatrix::identity(dim, dim));
    if completeness > tol::CROSS_PATH {
        return Err(LabError::InvalidState(format!(
            "PGM elements sum to the identity only within {completeness}"
        )));
    }
    let guess = povm
        .iter()
        .zip(&p.rhos)
        .map(|(m, rho)| trace(&(m * rho)).re)
        .sum::<f64>()
        / d;
    let q = q_value(&p);
    let mf = params.m as f64;
    let rate = (mf / d + mf.powi(7) / d.powi(3)).sqrt();

    let mut r = ExperimentReport::new("pgm-guess");
    echo(&mut r, params);
    r.quantity("guess_prob", guess)
        .quantity("q", q)
        .quantity("povm_completeness_gap", completeness)
        .quantity("sigma_rank", rank as f64);
    if params.m > 0 {
        r.quantity("fitted_constant", guess / rate);
    }
    r.bound("rate", rate)
        .bound("q_bound", (params.m + 1) as f64 / d)
        .bound("uniform_guess", 1.0 / d);
    r.check(Check::le(
        "povm_complete",
        "max|sum_x M_x - I| <= 1e-9",
        completeness,
        0.0,
        tol::STRUCTURAL,
    ));
    r.check(Check::eq(
        "guess_equals_q",
        "guess = Q",
        guess,
        q,
        tol::CROSS_PATH,
    ));
    r.check(Check::bound(
        "guess_at_least_uniform",
        "1/d <= guess",
        1.0 / d,
        guess,
    ));
    r.check(Check::bound(
        "guess_below_sqrt_q",
        "guess <= sqrt(Q)",
        guess,
        q.sqrt(),
    ));
    r.check(Check::bound(
        "guess_below_q_bound",
        "guess <= (m+1)/d",
        guess,
        (params.m + 1) as f64 / d,
    ));
    r.note(
        "the rate is an upper bound up to an unspecified constant; fitted_constant = guess / rate",
    );
    r.note("the null space of sigma is completed with (I - Pi_sigma)/d; it carries no weight of any rho_x");
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b() -> Budget {
        Budget::default()
    }

    #[test]
    fn rho_zero_is_the_moment() {
        let params = PgmParams::new(2, 1, &b()).unwrap();
        let rho = build_rho_x(0, &params, &b()).unwrap().to_dense(16).unwrap();
        let m = haar_moment_over(params.alphabet(), 2, 1000)
            .unwrap()
            .to_dense(16)
            .unwrap();
        assert!(max_abs_diff(rho.matrix(), m.matrix()) < 1e-15);
        assert!((trace(rho.matrix()).re - 1.0).abs() < 1e-12);
        let vals = linalg::hermitian_eigenvalues(rho.matrix()).unwrap();
        assert!(vals.iter().all(|&v| v > -1e-12));
    }

    #[test]
    fn no_extra_copies_means_identical_states() {
        let params = PgmParams::new(2, 0, &b()).unwrap();
        let id = DMatrix::<C64>::identity(4, 4) / C64::new(4.0, 0.0);
        for x in 0..4 {
            let rho = build_rho_x(x, &params, &b()).unwrap().to_dense(4).unwrap();
            assert!(max_abs_diff(rho.matrix(), &id) < 1e-15);
        }
        let r = pgm_bound_check(&params, &b()).unwrap();
        assert!((r.get("q").unwrap() - 0.25).abs() < 1e-12);
        let g = pgm_guess_prob(&params, &b()).unwrap();
        assert!((g.get("guess_prob").unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn closed_form_norm_n2_m1() {
        let params = PgmParams::new(2, 1, &b()).unwrap();
        assert!((inv_sqrt_norm_closed_form(&params) - 5f64.sqrt()).abs() < 1e-15);
        let r = pgm_bound_check(&params, &b()).unwrap();
        assert!(
            r.all_passed(),
            "{:?}",
            r.failed_checks().collect::<Vec<_>>()
        );
    }

    #[test]
    fn single_qubit_guess() {
        let params = PgmParams::new(1, 1, &b()).unwrap();
        let g = pgm_guess_prob(&params, &b()).unwrap();
        assert!(
            g.all_passed(),
            "{:?}",
            g.failed_checks().collect::<Vec<_>>()
        );
    }

    #[test]
    fn budget_enforced() {
        assert!(PgmParams::new(10, 3, &b()).is_err());
    }
}
