use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major matrix of finite regressors with named columns. The intercept is
/// implicit and never stored as a column.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix<T> {
    names: Vec<String>,
    data: Vec<T>,
    n_rows: usize,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn new(names: Vec<String>, data: Vec<T>) -> Result<Self> {
        let n_cols = names.len();
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidDesign(format!("duplicate column {name:?}")));
            }
        }
        if n_cols == 0 && !data.is_empty() {
            return Err(Error::InvalidDesign("data without columns".into()));
        }
        if n_cols > 0 && data.len() % n_cols != 0 {
            return Err(Error::InvalidDesign(format!(
                "{} values do not fill rows of {n_cols} columns",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDesign(format!(
                "non-finite value in row {} column {:?}",
                pos / n_cols,
                names[pos % n_cols]
            )));
        }
        let n_rows = if n_cols == 0 { 0 } else { data.len() / n_cols };
        Ok(DesignMatrix {
            names,
            data,
            n_rows,
        })
    }

    /// A design with no regressors and `n_rows` observations (intercept-only fits).
    pub fn intercept_only(n_rows: usize) -> Self {
        DesignMatrix {
            names: Vec::new(),
            data: Vec::new(),
            n_rows,
        }
    }

    pub fn from_rows<R: AsRef<[T]>>(names: &[&str], rows: &[R]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * names.len());
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != names.len() {
                return Err(Error::InvalidDesign(format!(
                    "row {i} has {} values, expected {}",
                    r.len(),
                    names.len()
                )));
            }
            data.extend_from_slice(r);
        }
        let mut m = DesignMatrix::new(names.iter().map(|s| s.to_string()).collect(), data)?;
        if names.is_empty() {
            m.n_rows = rows.len();
        }
        Ok(m)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[T] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.n_rows).map(move |i| self.get(i, j))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Appends columns given as one row slice per existing row.
    pub fn append_columns<R: AsRef<[T]>>(&self, names: &[&str], rows: &[R]) -> Result<Self> {
        if rows.len() != self.n_rows {
            return Err(Error::Dimension(format!(
                "{} extra rows for a design of {} rows",
                rows.len(),
                self.n_rows
            )));
        }
        let p = self.n_cols();
        let mut data = Vec::with_capacity(self.n_rows * (p + names.len()));
        for (i, extra) in rows.iter().enumerate() {
            let extra = extra.as_ref();
            if extra.len() != names.len() {
                return Err(Error::Dimension("extra row width mismatch".into()));
            }
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(extra);
        }
        let mut all = self.names.clone();
        all.extend(names.iter().map(|s| s.to_string()));
        let mut m = DesignMatrix::new(all, data)?;
        m.n_rows = self.n_rows;
        Ok(m)
    }
}

/// How one column is transformed by a [`Standardization`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnScaling {
    /// `(x − mean) / sd`.
    Standardized,
    /// Zero variance in the fitted data; mapped to 0.
    Constant,
    /// Left untouched (0/1 indicator columns).
    Passthrough,
}

/// Per-column centring and scaling fitted on a design, re-applicable to new rows.
/// Standard deviations use the `n − 1` denominator.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardization<T> {
    pub means: Vec<T>,
    pub sds: Vec<T>,
    pub scaling: Vec<ColumnScaling>,
}

impl<T: Scalar> Standardization<T> {
    /// Fits the transform; `passthrough[j] == true` leaves column `j` unscaled.
    pub fn fit(x: &DesignMatrix<T>, passthrough: &[bool]) -> Self {
        let n = x.n_rows();
        let p = x.n_cols();
        let mut means = vec![T::zero(); p];
        let mut sds = vec![T::one(); p];
        let mut scaling = vec![ColumnScaling::Standardized; p];
        for j in 0..p {
            if passthrough.get(j).copied().unwrap_or(false) {
                means[j] = T::zero();
                scaling[j] = ColumnScaling::Passthrough;
                continue;
            }
            let mean = if n == 0 {
                T::zero()
            } else {
                x.column(j).sum::<T>() / T::from_len(n)
            };
            let ss: T = x.column(j).map(|v| (v - mean) * (v - mean)).sum();
            let sd = if n > 1 {
                (ss / T::from_len(n - 1)).sqrt()
            } else {
                T::zero()
            };
            means[j] = mean;
            // relative threshold so columns like [5, 5, 5] with rounding noise count as constant
            let scale = mean.abs().max(T::one());
            if !(sd > T::epsilon() * T::lit(16.0) * scale) {
                scaling[j] = ColumnScaling::Constant;
            } else {
                sds[j] = sd;
            }
        }
        Standardization {
            means,
            sds,
            scaling,
        }
    }

    pub fn n_cols(&self) -> usize {
        self.means.len()
    }

    /// Transforms a single value of column `j`.
    #[inline]
    pub fn apply_value(&self, j: usize, v: T) -> T {
        match self.scaling[j] {
            ColumnScaling::Standardized => (v - self.means[j]) / self.sds[j],
            ColumnScaling::Constant => T::zero(),
            ColumnScaling::Passthrough => v,
        }
    }

    pub fn apply_row(&self, row: &[T]) -> Vec<T> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| self.apply_value(j, v))
            .collect()
    }

    pub fn apply(&self, x: &DesignMatrix<T>) -> Result<DesignMatrix<T>> {
        if x.n_cols() != self.n_cols() {
            return Err(Error::Dimension(format!(
                "design has {} columns, transform has {}",
                x.n_cols(),
                self.n_cols()
            )));
        }
        let mut data = Vec::with_capacity(x.as_slice().len());
        for i in 0..x.n_rows() {
            data.extend(self.apply_row(x.row(i)));
        }
        let mut m = DesignMatrix::new(x.names().to_vec(), data)?;
        m.n_rows = x.n_rows();
        Ok(m)
    }

    /// Columns flagged constant.
    pub fn constant_columns(&self) -> Vec<usize> {
        (0..self.n_cols())
            .filter(|&j| self.scaling[j] == ColumnScaling::Constant)
            .collect()
    }

    /// Maps coefficients fitted on the transformed design back to the raw
    /// feature scale.
    pub fn unstandardize_coefficients(&self, intercept: T, coefficients: &[T]) -> (T, Vec<T>) {
        let mut b0 = intercept;
        let mut raw = Vec::with_capacity(coefficients.len());
        for (j, &b) in coefficients.iter().enumerate() {
            match self.scaling[j] {
                ColumnScaling::Standardized => {
                    let r = b / self.sds[j];
                    b0 = b0 - r * self.means[j];
                    raw.push(r);
                }
                ColumnScaling::Constant => raw.push(T::zero()),
                ColumnScaling::Passthrough => raw.push(b),
            }
        }
        (b0, raw)
    }
}

/// Standardizes every column: each non-constant column gets mean 0 and sample
/// sd 1; constant columns become zero and are flagged.
pub fn standardize<T: Scalar>(x: &DesignMatrix<T>) -> (DesignMatrix<T>, Standardization<T>) {
    standardize_with_passthrough(x, &[])
}

/// As [`standardize`], leaving the columns marked in `passthrough` unscaled.
pub fn standardize_with_passthrough<T: Scalar>(
    x: &DesignMatrix<T>,
    passthrough: &[bool],
) -> (DesignMatrix<T>, Standardization<T>) {
    let s = Standardization::fit(x, passthrough);
    let z = s.apply(x).expect("transform fitted on this design");
    (z, s)
}
