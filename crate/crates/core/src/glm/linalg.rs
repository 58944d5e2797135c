//! Small dense solvers for the least-squares and Newton systems.
//!
//! Matrices are row-major slices. Problem sizes here are a handful of
//! columns, so everything is written for clarity over blocking.

use crate::scalar::Scalar;

/// Householder QR factorisation of an `m × n` matrix (`m ≥ n`), optionally
/// with column pivoting.
#[derive(Clone, Debug)]
pub(crate) struct Qr<T> {
    /// Row-major `m × n`; `R` on and above the diagonal, Householder vectors below.
    qr: Vec<T>,
    tau: Vec<T>,
    /// `perm[k]` is the original column stored at position `k`.
    pub perm: Vec<usize>,
    pub rank: usize,
    m: usize,
    n: usize,
}

impl<T: Scalar> Qr<T> {
    pub fn new(a: &[T], m: usize, n: usize, pivot: bool) -> Self {
        assert_eq!(a.len(), m * n);
        let mut qr = a.to_vec();
        let mut tau = vec![T::zero(); n.min(m)];
        let mut perm: Vec<usize> = (0..n).collect();
        let mut norms: Vec<T> = (0..n)
            .map(|j| (0..m).map(|i| qr[i * n + j] * qr[i * n + j]).sum::<T>())
            .collect();
        let max_norm = norms.iter().fold(T::zero(), |a, &b| a.max(b)).sqrt();
        let tol = T::from_len(m.max(n)) * T::epsilon() * T::lit(10.0) * max_norm;
        let steps = n.min(m);
        let mut rank = steps;

        for k in 0..steps {
            if pivot {
                // exact remaining norms, cheap at these sizes
                for j in k..n {
                    norms[j] = (k..m).map(|i| qr[i * n + j] * qr[i * n + j]).sum();
                }
                let (best, _) = (k..n).fold((k, -T::one()), |(bi, bv), j| {
                    if norms[j] > bv {
                        (j, norms[j])
                    } else {
                        (bi, bv)
                    }
                });
                if best != k {
                    for i in 0..m {
                        qr.swap(i * n + k, i * n + best);
                    }
                    perm.swap(k, best);
                    norms.swap(k, best);
                }
            }
            let alpha_norm = (k..m).map(|i| qr[i * n + k] * qr[i * n + k]).sum::<T>().sqrt();
            if alpha_norm <= tol {
                if pivot {
                    rank = k;
                    // remaining columns are numerically zero
                    for t in &mut tau[k..] {
                        *t = T::zero();
                    }
                    break;
                }
                tau[k] = T::zero();
                rank = rank.min(k);
                continue;
            }
            let x0 = qr[k * n + k];
            let alpha = if x0 >= T::zero() { -alpha_norm } else { alpha_norm };
            // v = x - alpha e1, normalised so v[0] = 1
            let v0 = x0 - alpha;
            for i in (k + 1)..m {
                qr[i * n + k] = qr[i * n + k] / v0;
            }
            tau[k] = (alpha - x0) / alpha;
            qr[k * n + k] = alpha;
            for j in (k + 1)..n {
                let mut s = qr[k * n + j];
                for i in (k + 1)..m {
                    s = s + qr[i * n + k] * qr[i * n + j];
                }
                s = s * tau[k];
                qr[k * n + j] = qr[k * n + j] - s;
                for i in (k + 1)..m {
                    qr[i * n + j] = qr[i * n + j] - s * qr[i * n + k];
                }
            }
        }
        Qr {
            qr,
            tau,
            perm,
            rank,
            m,
            n,
        }
    }

    /// Computes `Qᵀ b` in place.
    pub fn apply_qt(&self, b: &mut [T]) {
        let (m, n) = (self.m, self.n);
        for k in 0..self.tau.len() {
            if self.tau[k] == T::zero() {
                continue;
            }
            let mut s = b[k];
            for i in (k + 1)..m {
                s = s + self.qr[i * n + k] * b[i];
            }
            s = s * self.tau[k];
            b[k] = b[k] - s;
            for i in (k + 1)..m {
                b[i] = b[i] - s * self.qr[i * n + k];
            }
        }
    }

    /// Computes `Q c` where `c` has length `m` (entries past the rank are used as given).
    pub fn apply_q(&self, c: &mut [T]) {
        let (m, n) = (self.m, self.n);
        for k in (0..self.tau.len()).rev() {
            if self.tau[k] == T::zero() {
                continue;
            }
            let mut s = c[k];
            for i in (k + 1)..m {
                s = s + self.qr[i * n + k] * c[i];
            }
            s = s * self.tau[k];
            c[k] = c[k] - s;
            for i in (k + 1)..m {
                c[i] = c[i] - s * self.qr[i * n + k];
            }
        }
    }

    pub fn r(&self, i: usize, j: usize) -> T {
        self.qr[i * self.n + j]
    }

    /// Least-squares solution. Full rank: the unique minimiser. Rank
    /// deficient: the minimum-norm minimiser (complete orthogonal decomposition).
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let (m, n, r) = (self.m, self.n, self.rank);
        assert_eq!(b.len(), m);
        let mut qtb = b.to_vec();
        self.apply_qt(&mut qtb);
        let mut z = vec![T::zero(); n];
        if r == n {
            back_substitute_upper(|i, j| self.r(i, j), &qtb[..n], &mut z);
        } else if r > 0 {
            // [R11 R12] z = c; minimum-norm z via QR of the r × n block's transpose.
            let mut mt = vec![T::zero(); n * r];
            for i in 0..r {
                for j in i..n {
                    mt[j * r + i] = self.r(i, j);
                }
            }
            let lq = Qr::new(&mt, n, r, false);
            // Rᵀ₂ w = c (forward substitution), z = Q₂ w
            let mut w = vec![T::zero(); n];
            for i in 0..r {
                let mut s = qtb[i];
                for k in 0..i {
                    s = s - lq.r(k, i) * w[k];
                }
                w[i] = s / lq.r(i, i);
            }
            lq.apply_q(&mut w);
            z = w;
        }
        let mut x = vec![T::zero(); n];
        for (k, &col) in self.perm.iter().enumerate() {
            x[col] = z[k];
        }
        x
    }
}

fn back_substitute_upper<T: Scalar>(r: impl Fn(usize, usize) -> T, c: &[T], out: &mut [T]) {
    let n = c.len();
    for i in (0..n).rev() {
        let mut s = c[i];
        for j in (i + 1)..n {
            s = s - r(i, j) * out[j];
        }
        out[i] = s / r(i, i);
    }
}

/// Solves the symmetric positive definite system `a x = b` by Cholesky.
/// Returns `None` when `a` is not numerically positive definite.
pub(crate) fn cholesky_solve<T: Scalar>(a: &[T], n: usize, b: &[T]) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matvec(a: &[f64], m: usize, n: usize, x: &[f64]) -> Vec<f64> {
        (0..m).map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum()).collect()
    }

    #[test]
    fn qr_solves_overdetermined_full_rank() {
        // y = 1 + 2a - b exactly
        let a = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 2.0, 3.0, 1.0, -1.0, 0.5];
        let x_true = [1.0, 2.0, -1.0];
        let b = matvec(&a, 5, 3, &x_true);
        for pivot in [false, true] {
            let qr = Qr::<f64>::new(&a, 5, 3, pivot);
            assert_eq!(qr.rank, 3);
            let x: Vec<f64> = qr.solve(&b);
            for (u, v) in x.iter().zip(x_true) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_deficient_gives_minimum_norm() {
        // two identical columns: any split of the coefficient fits; min-norm splits evenly
        let a = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        let b = [2.0, 4.0, 6.0];
        let qr = Qr::<f64>::new(&a, 3, 2, true);
        assert_eq!(qr.rank, 1);
        let x: Vec<f64> = qr.solve(&b);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12, "{x:?}");
    }

    #[test]
    fn cholesky_matches_direct() {
        let a = [4.0f64, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&a, 2, &[2.0, 1.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-14 && x[1].abs() < 1e-14);
        assert!(cholesky_solve(&[1.0, 2.0, 2.0, 1.0], 2, &[1.0, 1.0]).is_none());
    }
}
