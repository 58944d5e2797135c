use super::design::DesignMatrix;
use super::linalg::Qr;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ordinary least-squares fit with an implicit intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct OlsFit<T> {
    pub intercept: T,
    pub coefficients: Vec<T>,
    /// The design (with intercept) was rank deficient; the minimum-norm
    /// solution is returned.
    pub rank_deficient: bool,
}

impl<T: Scalar> OlsFit<T> {
    pub fn predict(&self, row: &[T]) -> T {
        row.iter()
            .zip(&self.coefficients)
            .fold(self.intercept, |acc, (&x, &b)| acc + x * b)
    }
}

/// Least squares of `y` on `[1, x]` via Householder QR.
pub fn fit_ols<T: Scalar>(x: &DesignMatrix<T>, y: &[T]) -> Result<OlsFit<T>> {
    let n = x.n_rows();
    let p = x.n_cols() + 1;
    if y.len() != n {
        return Err(Error::Dimension(format!("{n} design rows but {} responses", y.len())));
    }
    if n == 0 {
        return Err(Error::InvalidDesign("no observations".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidResponse("non-finite response".into()));
    }
    let mut a = Vec::with_capacity(n * p);
    for i in 0..n {
        a.push(T::one());
        a.extend_from_slice(x.row(i));
    }
    // fewer rows than columns: pad with zero rows, which leaves the
    // least-squares problem unchanged and keeps the factorisation tall
    let m = n.max(p);
    a.resize(m * p, T::zero());
    let mut b = y.to_vec();
    b.resize(m, T::zero());
    let qr = Qr::new(&a, m, p, true);
    let beta = qr.solve(&b);
    Ok(OlsFit {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        rank_deficient: qr.rank < p,
    })
}
