//! Sample means and standard errors of vectors and matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::types::{BlockEstimate, BlockTag, FisherMatrix, MatrixEstimate};

/// Entrywise mean and standard error of the mean, two-pass.
pub fn mean_and_stderr(samples: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    assert!(!samples.is_empty(), "no samples");
    let (r, c) = samples[0].shape();
    let n = samples.len() as f64;
    let mut mean = DMatrix::zeros(r, c);
    for s in samples {
        mean += s;
    }
    mean /= n;
    if samples.len() < 2 {
        return (mean, DMatrix::zeros(r, c));
    }
    let mut ss = DMatrix::zeros(r, c);
    for s in samples {
        ss += (s - &mean).map(|v| v * v);
    }
    let stderr = ss.map(|v| (v / (n - 1.0) / n).sqrt());
    (mean, stderr)
}

pub fn vector_mean_and_stderr(samples: &[DVector<f64>]) -> (DVector<f64>, DVector<f64>) {
    let as_cols: Vec<DMatrix<f64>> =
        samples.iter().map(|v| DMatrix::from_column_slice(v.len(), 1, v.as_slice())).collect();
    let (m, s) = mean_and_stderr(&as_cols);
    (m.column(0).into_owned(), s.column(0).into_owned())
}

/// Symmetric estimate from per-sample symmetric matrices and the scores they
/// were built from.
pub fn matrix_estimate(samples: &[DMatrix<f64>], scores: &[DVector<f64>], tag: BlockTag) -> Result<MatrixEstimate> {
    let (mean, stderr) = mean_and_stderr(samples);
    let (score_mean, score_se) = vector_mean_and_stderr(scores);
    Ok(MatrixEstimate {
        mean: FisherMatrix::new(mean, tag)?,
        stderr,
        n_samples: samples.len(),
        score_mean_diagnostic: score_mean,
        score_mean_stderr: score_se,
    })
}

pub fn block_estimate(samples: &[DMatrix<f64>]) -> BlockEstimate {
    let (mean, stderr) = mean_and_stderr(samples);
    BlockEstimate { mean, stderr, n_samples: samples.len() }
}

pub fn outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stderr_matches_hand_computation() {
        let xs: Vec<DMatrix<f64>> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        let (m, s) = mean_and_stderr(&xs);
        assert_eq!(m[(0, 0)], 2.5);
        // sample variance 5/3, stderr sqrt(5/12)
        assert!((s[(0, 0)] - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}
