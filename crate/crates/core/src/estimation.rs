//! Least squares and the correlation summaries the variance bounds need.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::OlsFit;
use crate::error::{Error, Result};

/// Reciprocal condition estimates below this are treated as singular.
pub const SINGULARITY_RCOND: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;

/// Sample correlation structure of subdata covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSummary {
    pub correlation: DMatrix<f64>,
    pub lambda_min: f64,
    /// Sample variances with the `n - 1` denominator.
    pub variances: Vec<f64>,
    pub means: Vec<f64>,
}

/// Fits `y ~ X` by Householder QR. `x` must already carry its intercept column.
///
/// When `sigma2` is `None` the residual variance `RSS / (n - p - 1)` scales the
/// covariance; otherwise the supplied value does. The residual estimate is
/// reported either way when it is defined.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>, sigma2: Option<f64>) -> Result<OlsFit> {
    let (n, cols) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if cols == 0 {
        return Err(Error::InvalidParameter("design matrix has no columns".into()));
    }
    if n < cols || (sigma2.is_none() && n == cols) {
        return Err(Error::InsufficientRows { rows: n, needed: cols });
    }
    if let Some(s) = sigma2 {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::InvalidParameter(format!("sigma2 must be finite and nonnegative, got {s}")));
        }
    }

    let qr = x.clone().qr();
    let r = qr.r();
    let r_inv = upper_triangular_inverse(&r)?;
    let rcond = 1.0 / (norm1(&r) * norm1(&r_inv));
    if !rcond.is_finite() || rcond < SINGULARITY_RCOND {
        return Err(Error::SingularDesign { rcond: if rcond.is_finite() { rcond } else { 0.0 } });
    }

    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let beta = &r_inv * qty.rows(0, cols);

    let residuals = y - x * &beta;
    let rss = residuals.norm_squared();
    let sigma2_hat = if n > cols { rss / (n - cols) as f64 } else { 0.0 };
    let scale = sigma2.unwrap_or(sigma2_hat);

    let mut cov = &r_inv * r_inv.transpose() * scale;
    symmetrize(&mut cov);

    Ok(OlsFit { beta, cov, sigma2_hat, n_used: n })
}

/// `log |X^T X|` through the triangular factor of `X`, avoiding the overflow
/// of forming the determinant directly.
pub fn log_det_gram(x: &DMatrix<f64>) -> Result<f64> {
    let (n, cols) = x.shape();
    if n < cols {
        return Err(Error::InsufficientRows { rows: n, needed: cols });
    }
    let r = x.clone().qr().r();
    let mut acc = 0.0;
    for i in 0..cols {
        let d = r[(i, i)].abs();
        if d == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        acc += 2.0 * d.ln();
    }
    Ok(acc)
}

/// Pearson correlation matrix of the columns of `z`, its smallest eigenvalue,
/// and the per-column sample variances.
pub fn correlation_summary(z: &DMatrix<f64>) -> Result<CorrelationSummary> {
    let (n, p) = z.shape();
    if n < 2 {
        return Err(Error::InsufficientRows { rows: n, needed: 2 });
    }
    let means: Vec<f64> = (0..p).map(|j| z.column(j).sum() / n as f64).collect();
    let mut centered = z.clone();
    for (j, m) in means.iter().enumerate() {
        centered.column_mut(j).add_scalar_mut(-m);
    }
    let mut scatter = centered.tr_mul(&centered);
    symmetrize(&mut scatter);
    let variances: Vec<f64> = (0..p).map(|j| scatter[(j, j)] / (n - 1) as f64).collect();
    if let Some(j) = variances.iter().position(|&v| v <= 0.0) {
        return Err(Error::ConstantColumn(j));
    }
    let sd: Vec<f64> = (0..p).map(|j| scatter[(j, j)].sqrt()).collect();
    let correlation = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { scatter[(i, j)] / (sd[i] * sd[j]) });
    let lambda_min = min_eigenvalue(&correlation)?;
    Ok(CorrelationSummary { correlation, lambda_min, variances, means })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(s: &DMatrix<f64>) -> Result<f64> {
    let (rows, cols) = s.shape();
    if rows != cols {
        return Err(Error::DimensionMismatch { expected: rows, found: cols });
    }
    if rows == 0 {
        return Err(Error::EmptyInput);
    }
    let scale = s.amax().max(1.0);
    let asymmetry = (s - s.transpose()).amax();
    if asymmetry > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let eig = SymmetricEigen::new(s.clone());
    Ok(eig.eigenvalues.min())
}

fn upper_triangular_inverse(r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = r.ncols();
    let r = r.rows(0, m).into_owned();
    r.solve_upper_triangular(&DMatrix::identity(m, m))
        .ok_or(Error::SingularDesign { rcond: 0.0 })
}

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub(crate) fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}
