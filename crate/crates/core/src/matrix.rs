//! Matrix predicates: symmetry, positive semidefiniteness and the Loewner order.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::types::FisherMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdVerdict {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoewnerVerdict {
    pub holds: bool,
    pub min_eigenvalue_of_gap: f64,
}

/// Largest `|m_ij - m_ji|`, measured relative to `max(1, max |m_ij|)`.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

pub(crate) fn ensure_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("expected square matrix, got {}x{}", m.nrows(), m.ncols())));
    }
    let asymmetry = relative_asymmetry(m);
    if asymmetry > tol {
        return Err(Error::NotSymmetric { asymmetry, tolerance: tol });
    }
    Ok(())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    // symmetrize first so round-off asymmetry cannot leak into the spectrum
    let sym = (m + m.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}

pub fn psd_check(m: &FisherMatrix, tol: f64) -> Result<PsdVerdict> {
    psd_check_raw(m.entries(), tol)
}

pub fn psd_check_raw(m: &DMatrix<f64>, tol: f64) -> Result<PsdVerdict> {
    ensure_symmetric(m, crate::types::SYMMETRY_TOL)?;
    let min_eigenvalue = symmetric_eigenvalues(m)[0];
    Ok(PsdVerdict { is_psd: min_eigenvalue >= -tol, min_eigenvalue })
}

/// `lo <= hi` in the Loewner order: `hi - lo` is PSD up to `tol`.
pub fn loewner_leq(lo: &FisherMatrix, hi: &FisherMatrix, tol: f64) -> Result<LoewnerVerdict> {
    if lo.dim() != hi.dim() || lo.tag() != hi.tag() {
        return Err(Error::Dimension(format!(
            "cannot compare {}x{} ({}) with {}x{} ({})",
            lo.dim(),
            lo.dim(),
            lo.tag().as_str(),
            hi.dim(),
            hi.dim(),
            hi.tag().as_str()
        )));
    }
    loewner_leq_raw(lo.entries(), hi.entries(), tol)
}

pub fn loewner_leq_raw(lo: &DMatrix<f64>, hi: &DMatrix<f64>, tol: f64) -> Result<LoewnerVerdict> {
    if lo.shape() != hi.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", lo.shape(), hi.shape())));
    }
    let v = psd_check_raw(&(hi - lo), tol)?;
    Ok(LoewnerVerdict { holds: v.is_psd, min_eigenvalue_of_gap: v.min_eigenvalue })
}

/// Inverse of a symmetric positive definite matrix, refusing condition
/// numbers at or above `max_condition`.
pub fn spd_inverse(m: &DMatrix<f64>, max_condition: f64) -> Result<DMatrix<f64>> {
    let eig = symmetric_eigenvalues(m);
    let lo = eig[0];
    let hi = eig[eig.len() - 1].abs().max(lo.abs());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition.is_nan() || condition >= max_condition {
        return Err(Error::SingularFim { condition });
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.cholesky().map(|c| c.inverse()).ok_or(Error::SingularFim { condition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::BlockTag;
    use proptest::prelude::*;

    fn fm(rows: usize, data: &[f64]) -> FisherMatrix {
        FisherMatrix::new(DMatrix::from_row_slice(rows, rows, data), BlockTag::Theta).unwrap()
    }

    #[test]
    fn identity_is_psd() {
        let v = psd_check(&FisherMatrix::identity(2, BlockTag::Theta), 1e-8).unwrap();
        assert!(v.is_psd);
        assert!((v.min_eigenvalue - 1.0).abs() < 1e-14);
    }

    #[test]
    fn negative_diagonal_is_not_psd() {
        let v = psd_check(&fm(2, &[1.0, 0.0, 0.0, -0.5]), 1e-8).unwrap();
        assert!(!v.is_psd);
        assert!((v.min_eigenvalue + 0.5).abs() < 1e-14);
    }

    #[test]
    fn two_one_one_two_has_min_eigenvalue_one() {
        // characteristic polynomial (2-x)^2 - 1 has roots 1 and 3
        let v = psd_check(&fm(2, &[2.0, 1.0, 1.0, 2.0]), 1e-8).unwrap();
        assert!(v.is_psd);
        assert!((v.min_eigenvalue - 1.0).abs() < 1e-13);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]);
        assert!(matches!(psd_check_raw(&m, 1e-8), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn loewner_examples() {
        let z = FisherMatrix::zeros(2, BlockTag::Theta);
        let i = FisherMatrix::identity(2, BlockTag::Theta);
        let v = loewner_leq(&z, &i, 1e-8).unwrap();
        assert!(v.holds);
        assert!((v.min_eigenvalue_of_gap - 1.0).abs() < 1e-14);

        let v = loewner_leq(&i, &i, 1e-8).unwrap();
        assert!(v.holds);
        assert_eq!(v.min_eigenvalue_of_gap, 0.0);

        let v = loewner_leq(&fm(1, &[0.5]), &fm(1, &[1.0]), 1e-8).unwrap();
        assert!(v.holds);
        assert!((v.min_eigenvalue_of_gap - 0.5).abs() < 1e-15);
    }

    #[test]
    fn loewner_rejects_mismatched_blocks() {
        let a = FisherMatrix::identity(2, BlockTag::Theta);
        let b = FisherMatrix::identity(3, BlockTag::Theta);
        assert!(loewner_leq(&a, &b, 0.0).is_err());
        let c = FisherMatrix::identity(2, BlockTag::Phi);
        assert!(loewner_leq(&a, &c, 0.0).is_err());
    }

    #[test]
    fn spd_inverse_refuses_singular() {
        let inv = spd_inverse(&DMatrix::from_row_slice(1, 1, &[2.0]), 1e12).unwrap();
        assert!((inv[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(matches!(spd_inverse(&DMatrix::zeros(2, 2), 1e12), Err(Error::SingularFim { .. })));
    }

    fn psd_matrix(dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-2.0f64..2.0, dim * dim).prop_map(move |v| {
            let b = DMatrix::from_vec(dim, dim, v);
            &b * b.transpose()
        })
    }

    proptest! {
        #[test]
        fn loewner_is_reflexive(m in psd_matrix(3)) {
            let f = FisherMatrix::new(m, BlockTag::Theta).unwrap();
            prop_assert!(loewner_leq(&f, &f, 1e-12).unwrap().holds);
        }

        #[test]
        fn loewner_is_transitive(a in psd_matrix(3), d1 in psd_matrix(3), d2 in psd_matrix(3)) {
            let b = &a + &d1;
            let c = &b + &d2;
            let tol = 1e-9 * (1.0 + c.trace());
            let fa = FisherMatrix::new(a, BlockTag::Theta).unwrap();
            let fb = FisherMatrix::new(b, BlockTag::Theta).unwrap();
            let fc = FisherMatrix::new(c, BlockTag::Theta).unwrap();
            prop_assert!(loewner_leq(&fa, &fb, tol).unwrap().holds);
            prop_assert!(loewner_leq(&fb, &fc, tol).unwrap().holds);
            prop_assert!(loewner_leq(&fa, &fc, tol).unwrap().holds);
        }
    }
}
