use nalgebra::DMatrix;

use super::blocks;
use super::linalg;
use super::operator::DensityOperator;
use super::C64;
use crate::error::{LabError, Result};
use crate::tol::Budget;

fn same_shape(a: &DensityOperator, b: &DensityOperator) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(LabError::DimensionMismatch(format!(
            "operators on {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `½‖ρ − σ‖₁`. Two ensembles go through the support-block path; anything
/// else is compared densely.
pub fn trace_distance(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    trace_distance_with_budget(rho, sigma, &Budget::default())
}

pub fn trace_distance_with_budget(
    rho: &DensityOperator,
    sigma: &DensityOperator,
    budget: &Budget,
) -> Result<f64> {
    same_shape(rho, sigma)?;
    match (rho, sigma) {
        (DensityOperator::Ensemble(a), DensityOperator::Ensemble(b)) => {
            blocks::gram_trace_distance_with_budget(a, b, budget)
        }
        _ => {
            let a = rho.to_dense(budget.max_dense_dim)?;
            let b = sigma.to_dense(budget.max_dense_dim)?;
            trace_distance_matrices(a.matrix(), b.matrix())
        }
    }
}

/// Trace distance of two Hermitian matrices of equal size.
pub fn trace_distance_matrices(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(LabError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    for m in [a, b] {
        let dev = linalg::hermitian_deviation(m);
        if dev > crate::tol::STRUCTURAL {
            return Err(LabError::NotHermitian(dev));
        }
    }
    let vals = linalg::hermitian_eigenvalues(&(a - b))?;
    Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`; reduces to `⟨ψ|σ|ψ⟩` when either
/// side is a pure state.
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    fidelity_with_budget(rho, sigma, &Budget::default())
}

pub fn fidelity_with_budget(
    rho: &DensityOperator,
    sigma: &DensityOperator,
    budget: &Budget,
) -> Result<f64> {
    same_shape(rho, sigma)?;
    let (pure, other) = match (rho.as_pure(), sigma.as_pure()) {
        (Some(p), _) => (Some(p), sigma),
        (None, Some(p)) => (Some(p), rho),
        _ => (None, rho),
    };
    if let Some(psi) = pure {
        return match other {
            DensityOperator::Ensemble(e) => Ok(e.expectation_pure(psi)),
            DensityOperator::Dense(d) => {
                let v = psi.to_dense(budget.max_dense_dim)?;
                Ok((v.adjoint() * d.matrix() * &v)[(0, 0)].re)
            }
        };
    }
    let a = rho.to_dense(budget.max_dense_dim)?;
    let b = sigma.to_dense(budget.max_dense_dim)?;
    fidelity_matrices(a.matrix(), b.matrix())
}

pub fn fidelity_matrices(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(LabError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let ra = linalg::psd_sqrt(a)?;
    let inner = linalg::hermitian_part(&(&ra * b * &ra));
    let vals = linalg::hermitian_eigenvalues(&inner)?;
    let cut = crate::tol::PSEUDO_RANK * vals.iter().cloned().fold(0.0f64, f64::max);
    let s: f64 = vals.iter().filter(|&&v| v > cut).map(|v| v.sqrt()).sum();
    Ok(s * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qla::{DenseOperator, PureState, RegisterShape};

    fn qubit() -> RegisterShape {
        RegisterShape::new(vec![1]).unwrap()
    }

    fn ket(label: u64) -> DensityOperator {
        DensityOperator::pure(PureState::basis(qubit(), label).unwrap())
    }

    fn plus() -> DensityOperator {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        DensityOperator::pure(
            PureState::new(qubit(), vec![(0, C64::new(h, 0.0)), (1, C64::new(h, 0.0))]).unwrap(),
        )
    }

    fn dense(op: &DensityOperator) -> DensityOperator {
        DensityOperator::Dense(op.to_dense(16).unwrap())
    }

    #[test]
    fn trace_distance_examples() {
        assert!(trace_distance(&ket(0), &ket(0)).unwrap().abs() < 1e-15);
        assert!((trace_distance(&ket(0), &ket(1)).unwrap() - 1.0).abs() < 1e-15);
        // 2x2 oracle: eigenvalues of |0><0| - |+><+| are ±1/√2
        let expect = std::f64::consts::FRAC_1_SQRT_2;
        assert!((trace_distance(&ket(0), &plus()).unwrap() - expect).abs() < 1e-12);
        assert!((trace_distance(&dense(&ket(0)), &dense(&plus())).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn fidelity_examples() {
        assert!((fidelity(&plus(), &plus()).unwrap() - 1.0).abs() < 1e-12);
        assert!((fidelity(&ket(0), &plus()).unwrap() - 0.5).abs() < 1e-12);
        let half = DensityOperator::Dense(DenseOperator::maximally_mixed(qubit(), 4).unwrap());
        assert!((fidelity(&half, &ket(0)).unwrap() - 0.5).abs() < 1e-12);
        // dense-only route
        assert!((fidelity(&half, &dense(&ket(0))).unwrap() - 0.5).abs() < 1e-9);
        assert!((fidelity(&half, &half).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let two = DensityOperator::pure(
            PureState::basis(RegisterShape::new(vec![2]).unwrap(), 0).unwrap(),
        );
        assert!(matches!(
            fidelity(&ket(0), &two),
            Err(LabError::DimensionMismatch(_))
        ));
        assert!(trace_distance(&ket(0), &two).is_err());
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut m = DMatrix::<C64>::identity(2, 2) * C64::new(0.5, 0.0);
        m[(0, 1)] = C64::new(0.3, 0.0);
        let bad = DensityOperator::Dense(DenseOperator::new_unchecked(qubit(), m).unwrap());
        assert!(matches!(
            trace_distance(&bad, &dense(&ket(0))),
            Err(LabError::NotHermitian(_))
        ));
    }
}
