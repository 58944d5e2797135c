//! Poisson regression with log link, fitted by Newton / iteratively
//! reweighted least squares with step halving.

use super::design::DesignMatrix;
use super::linalg::{cholesky_solve, Qr};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solver settings for [`fit_poisson_glm`].
#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig<T> {
    pub max_iter: usize,
    /// Stop once the ∞-norm of the score (gradient of the penalised
    /// log-likelihood) falls below this.
    pub grad_tol: T,
    /// Any coefficient exceeding this magnitude marks the fit as divergent.
    pub coef_cap: T,
    pub step_halving: bool,
    pub max_halvings: usize,
    /// Ridge penalty `n · l2/2 · Σβⱼ²` (intercept unpenalised).
    pub l2_penalty: T,
    /// Lasso penalty `n · l1 · Σ|βⱼ|` (intercept unpenalised).
    pub l1_penalty: T,
}

impl<T: Scalar> Default for FitConfig<T> {
    fn default() -> Self {
        FitConfig {
            max_iter: 100,
            grad_tol: T::lit(1e-8),
            coef_cap: T::lit(30.0),
            step_halving: true,
            max_halvings: 40,
            l2_penalty: T::zero(),
            l1_penalty: T::zero(),
        }
    }
}

impl<T: Scalar> FitConfig<T> {
    /// Elastic-net penalised variant with equal L1 and L2 weights.
    pub fn with_elastic_net(mut self, weight: T) -> Self {
        self.l1_penalty = weight;
        self.l2_penalty = weight;
        self
    }
}

/// Result of a Poisson GLM fit.
#[derive(Clone, Debug, PartialEq)]
pub struct GlmFit<T> {
    pub intercept: T,
    /// One coefficient per design column; dropped columns hold 0.
    pub coefficients: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: T,
    /// The coefficient cap was hit; coefficients are clamped.
    pub capped: bool,
    /// Columns dropped as linearly dependent on the intercept and earlier columns.
    pub dropped_columns: Vec<usize>,
    /// Deviance before the first and after every iteration.
    pub deviance_trace: Vec<T>,
}

impl<T: Scalar> GlmFit<T> {
    /// Builds a fit from known coefficients (frozen models, tests).
    pub fn from_coefficients(intercept: T, coefficients: Vec<T>) -> Self {
        GlmFit {
            intercept,
            coefficients,
            converged: true,
            iterations: 0,
            deviance: T::zero(),
            capped: false,
            dropped_columns: Vec::new(),
            deviance_trace: Vec::new(),
        }
    }

    pub fn linear_predictor(&self, row: &[T]) -> T {
        debug_assert_eq!(row.len(), self.coefficients.len());
        row.iter()
            .zip(&self.coefficients)
            .fold(self.intercept, |acc, (&x, &b)| acc + x * b)
    }

    pub fn predict_mean(&self, row: &[T]) -> T {
        self.linear_predictor(row).exp()
    }

    /// Whether downstream code should distrust the fit.
    pub fn is_divergent(&self) -> bool {
        self.capped || !self.converged
    }

    pub fn rank_deficient(&self) -> bool {
        !self.dropped_columns.is_empty()
    }
}

/// `Σᵢ [yᵢηᵢ − exp(ηᵢ) − ln(yᵢ!)]`, with `ln(y!)` evaluated as `lnΓ(y + 1)`.
pub fn poisson_loglik_eta<T: Scalar>(y: &[T], eta: &[T]) -> T {
    y.iter()
        .zip(eta)
        .map(|(&yi, &e)| {
            let ln_fact = if yi <= T::one() {
                T::zero()
            } else {
                T::lit(statrs::function::gamma::ln_gamma(yi.as_f64() + 1.0))
            };
            let term = if yi == T::zero() { T::zero() } else { yi * e };
            term - e.exp() - ln_fact
        })
        .sum()
}

/// Poisson log-likelihood of coefficients `(intercept, coefficients)` on `(x, y)`.
pub fn poisson_loglik<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[T],
    intercept: T,
    coefficients: &[T],
) -> Result<T> {
    check_shapes(x, y)?;
    if coefficients.len() != x.n_cols() {
        return Err(Error::Dimension(format!(
            "{} coefficients for {} columns",
            coefficients.len(),
            x.n_cols()
        )));
    }
    let eta = linear_predictors(x, intercept, coefficients, None);
    Ok(poisson_loglik_eta(y, &eta))
}

/// Analytic score `(∂ℓ/∂β₀, ∂ℓ/∂β₁, …)` of the unpenalised log-likelihood.
pub fn poisson_score<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[T],
    intercept: T,
    coefficients: &[T],
) -> Result<Vec<T>> {
    check_shapes(x, y)?;
    let eta = linear_predictors(x, intercept, coefficients, None);
    let mut g = vec![T::zero(); x.n_cols() + 1];
    for i in 0..x.n_rows() {
        let r = y[i] - eta[i].exp();
        g[0] = g[0] + r;
        for (j, &v) in x.row(i).iter().enumerate() {
            g[j + 1] = g[j + 1] + v * r;
        }
    }
    Ok(g)
}

/// Poisson deviance `2 Σ [y ln(y/μ) − (y − μ)]`.
pub fn poisson_deviance<T: Scalar>(y: &[T], mu: &[T]) -> T {
    let two = T::lit(2.0);
    y.iter()
        .zip(mu)
        .map(|(&yi, &m)| {
            let a = if yi > T::zero() { yi * (yi / m).ln() } else { T::zero() };
            two * (a - (yi - m))
        })
        .sum()
}

fn check_shapes<T: Scalar>(x: &DesignMatrix<T>, y: &[T]) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::Dimension(format!(
            "{} design rows but {} responses",
            x.n_rows(),
            y.len()
        )));
    }
    Ok(())
}

fn linear_predictors<T: Scalar>(
    x: &DesignMatrix<T>,
    intercept: T,
    coefficients: &[T],
    active: Option<&[usize]>,
) -> Vec<T> {
    (0..x.n_rows())
        .map(|i| {
            let row = x.row(i);
            match active {
                None => row
                    .iter()
                    .zip(coefficients)
                    .fold(intercept, |a, (&v, &b)| a + v * b),
                Some(cols) => cols
                    .iter()
                    .zip(coefficients)
                    .fold(intercept, |a, (&j, &b)| a + row[j] * b),
            }
        })
        .collect()
}

/// Columns of `x` that are linearly independent of the intercept and of each
/// other, found by pivoted QR of the centred design.
fn independent_columns<T: Scalar>(x: &DesignMatrix<T>) -> Vec<usize> {
    let (n, p) = (x.n_rows(), x.n_cols());
    if p == 0 {
        return Vec::new();
    }
    let means: Vec<T> = (0..p)
        .map(|j| x.column(j).sum::<T>() / T::from_len(n))
        .collect();
    let mut centred = Vec::with_capacity(n * p);
    for i in 0..n {
        centred.extend(x.row(i).iter().zip(&means).map(|(&v, &m)| v - m));
    }
    // an all-zero centred design has no usable columns
    if centred.iter().all(|v| *v == T::zero()) {
        return Vec::new();
    }
    let qr = Qr::new(&centred, n, p, true);
    let mut keep: Vec<usize> = qr.perm[..qr.rank].to_vec();
    keep.sort_unstable();
    keep
}

struct Problem<'a, T> {
    x: &'a DesignMatrix<T>,
    y: &'a [T],
    active: Vec<usize>,
    n: T,
    l1: T,
    l2: T,
}

impl<T: Scalar> Problem<'_, T> {
    fn dim(&self) -> usize {
        self.active.len() + 1
    }

    fn eta(&self, beta: &[T]) -> Vec<T> {
        linear_predictors(self.x, beta[0], &beta[1..], Some(&self.active))
    }

    /// Penalised objective without the `ln y!` constant; `-∞` on overflow.
    fn objective(&self, beta: &[T]) -> T {
        let eta = self.eta(beta);
        let mut ll = T::zero();
        for (&yi, &e) in self.y.iter().zip(&eta) {
            let mu = e.exp();
            if !mu.is_finite() {
                return T::neg_infinity();
            }
            ll = ll + if yi == T::zero() { -mu } else { yi * e - mu };
        }
        ll - self.penalty(beta)
    }

    fn penalty(&self, beta: &[T]) -> T {
        let half = T::lit(0.5);
        beta[1..].iter().fold(T::zero(), |acc, &b| {
            acc + self.n * (half * self.l2 * b * b + self.l1 * b.abs())
        })
    }

    /// Smooth-part gradient and Hessian (negated, i.e. positive definite).
    fn gradient_hessian(&self, beta: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let q = self.dim();
        let eta = self.eta(beta);
        let mut g = vec![T::zero(); q];
        let mut h = vec![T::zero(); q * q];
        let mut xr = vec![T::zero(); q];
        let mut mu_all = Vec::with_capacity(eta.len());
        for (i, &e) in eta.iter().enumerate() {
            let mu = e.exp();
            mu_all.push(mu);
            let row = self.x.row(i);
            xr[0] = T::one();
            for (k, &j) in self.active.iter().enumerate() {
                xr[k + 1] = row[j];
            }
            let r = self.y[i] - mu;
            for a in 0..q {
                g[a] = g[a] + xr[a] * r;
                let wa = mu * xr[a];
                for b in 0..=a {
                    h[a * q + b] = h[a * q + b] + wa * xr[b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                h[b * q + a] = h[a * q + b];
            }
        }
        for a in 1..q {
            g[a] = g[a] - self.n * self.l2 * beta[a];
            h[a * q + a] = h[a * q + a] + self.n * self.l2;
        }
        (g, h, mu_all)
    }

    /// ∞-norm of the (sub)gradient optimality residual.
    fn kkt_residual(&self, beta: &[T], g: &[T]) -> T {
        let lam = self.n * self.l1;
        let mut worst = g[0].abs();
        for a in 1..g.len() {
            let r = if lam == T::zero() {
                g[a].abs()
            } else if beta[a] != T::zero() {
                (g[a] - lam * beta[a].signum()).abs()
            } else {
                (g[a].abs() - lam).max(T::zero())
            };
            worst = worst.max(r);
        }
        worst
    }

    /// Newton direction; with an L1 penalty, the proximal Newton direction
    /// found by coordinate descent on the local quadratic model.
    fn direction(&self, beta: &[T], g: &[T], h: &[T]) -> Option<Vec<T>> {
        let q = self.dim();
        if self.l1 == T::zero() {
            return cholesky_solve(h, q, g).or_else(|| {
                // tiny ridge for numerically singular curvature (e.g. μ underflow)
                let mut hj = h.to_vec();
                let jitter = (0..q).fold(T::zero(), |m, a| m.max(h[a * q + a])) * T::lit(1e-10)
                    + T::epsilon();
                for a in 0..q {
                    hj[a * q + a] = hj[a * q + a] + jitter;
                }
                cholesky_solve(&hj, q, g)
            });
        }
        let lam = self.n * self.l1;
        let mut z = beta.to_vec();
        for _ in 0..500 {
            let mut max_change = T::zero();
            for j in 0..q {
                let hjj = h[j * q + j];
                if !(hjj > T::zero()) {
                    continue;
                }
                // ∂/∂z_j of −gᵀ(z−β) + ½(z−β)ᵀH(z−β)
                let mut d = -g[j];
                for k in 0..q {
                    d = d + h[j * q + k] * (z[k] - beta[k]);
                }
                let u = hjj * z[j] - d;
                let new = if j == 0 {
                    u / hjj
                } else {
                    soft_threshold(u, lam) / hjj
                };
                max_change = max_change.max((new - z[j]).abs());
                z[j] = new;
            }
            if max_change <= T::lit(1e-13) * (T::one() + z.iter().fold(T::zero(), |m, v| m.max(v.abs()))) {
                break;
            }
        }
        Some(z.iter().zip(beta).map(|(&a, &b)| a - b).collect())
    }
}

fn soft_threshold<T: Scalar>(u: T, lam: T) -> T {
    if u > lam {
        u - lam
    } else if u < -lam {
        u + lam
    } else {
        T::zero()
    }
}

/// Fits `E[y | x] = exp(β₀ + xβ)` by maximum likelihood.
///
/// Columns that are constant or linearly dependent are dropped (coefficient
/// 0, listed in `dropped_columns`). Runaway fits whose coefficients exceed
/// `config.coef_cap` are clamped and returned with `capped = true,
/// converged = false` instead of failing.
pub fn fit_poisson_glm<T: Scalar>(
    x: &DesignMatrix<T>,
    y: &[T],
    config: &FitConfig<T>,
) -> Result<GlmFit<T>> {
    check_shapes(x, y)?;
    let n = y.len();
    let p = x.n_cols();
    if n < p + 1 || n == 0 {
        return Err(Error::InvalidDesign(format!(
            "{n} observations for {p} regressors plus intercept"
        )));
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite() || **v < T::zero()) {
        return Err(Error::InvalidResponse(format!(
            "responses must be finite and non-negative, found {bad}"
        )));
    }

    let active = independent_columns(x);
    let dropped_columns: Vec<usize> = (0..p).filter(|j| !active.contains(j)).collect();
    if !dropped_columns.is_empty() {
        log::debug!("poisson fit: dropping dependent columns {dropped_columns:?}");
    }
    let problem = Problem {
        x,
        y,
        active,
        n: T::from_len(n),
        l1: config.l1_penalty,
        l2: config.l2_penalty,
    };
    let q = problem.dim();

    let expand = |beta: &[T]| -> Vec<T> {
        let mut coefs = vec![T::zero(); p];
        for (k, &j) in problem.active.iter().enumerate() {
            coefs[j] = beta[k + 1];
        }
        coefs
    };
    let deviance_of = |beta: &[T]| -> T {
        let mu: Vec<T> = problem.eta(beta).into_iter().map(T::exp).collect();
        poisson_deviance(y, &mu)
    };

    let mean_y = y.iter().copied().sum::<T>() / T::from_len(n);
    if mean_y <= T::zero() {
        // all-zero responses: the MLE intercept is −∞
        let mut beta = vec![T::zero(); q];
        beta[0] = -config.coef_cap;
        let dev = deviance_of(&beta);
        return Ok(GlmFit {
            intercept: beta[0],
            coefficients: expand(&beta),
            converged: false,
            iterations: 0,
            deviance: dev,
            capped: true,
            dropped_columns,
            deviance_trace: vec![dev],
        });
    }

    let mut beta = vec![T::zero(); q];
    beta[0] = mean_y.ln();
    let mut obj = problem.objective(&beta);
    let mut trace = vec![deviance_of(&beta)];
    let mut converged = false;
    let mut capped = false;
    let mut iterations = 0;
    let precision = T::epsilon() * T::lit(8.0);

    while iterations < config.max_iter {
        let (g, h, _) = problem.gradient_hessian(&beta);
        let residual = problem.kkt_residual(&beta, &g);
        if residual < config.grad_tol {
            converged = true;
            break;
        }
        let Some(delta) = problem.direction(&beta, &g, &h) else {
            log::debug!("poisson fit: singular curvature at iteration {iterations}");
            break;
        };
        // predicted improvement of the local model
        let mut quad = T::zero();
        for a in 0..q {
            for b in 0..q {
                quad = quad + delta[a] * h[a * q + b] * delta[b];
            }
        }
        let lin: T = g.iter().zip(&delta).map(|(&a, &b)| a * b).sum();
        let l1_change = problem.n
            * problem.l1
            * beta[1..]
                .iter()
                .zip(&delta[1..])
                .map(|(&b, &d)| (b + d).abs() - b.abs())
                .sum::<T>();
        let predicted = lin - T::lit(0.5) * quad - l1_change;
        if predicted.abs() <= precision * (obj.abs() + T::one()) {
            // objective is flat to working precision: keep full steps only
            // while they still shrink the gradient
            let cand: Vec<T> = beta.iter().zip(&delta).map(|(&b, &d)| b + d).collect();
            let (gc, _, _) = problem.gradient_hessian(&cand);
            let cand_residual = problem.kkt_residual(&cand, &gc);
            if cand_residual.is_finite() && cand_residual < residual * T::lit(0.5) {
                iterations += 1;
                obj = problem.objective(&cand);
                beta = cand;
                trace.push(deviance_of(&beta));
                continue;
            }
            converged = true;
            break;
        }

        iterations += 1;
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let cand: Vec<T> = beta.iter().zip(&delta).map(|(&b, &d)| b + step * d).collect();
            let cand_obj = problem.objective(&cand);
            if !config.step_halving || cand_obj >= obj {
                accepted = Some((cand, cand_obj));
                break;
            }
            step = step * T::lit(0.5);
        }
        let Some((cand, cand_obj)) = accepted else {
            log::debug!("poisson fit: step halving exhausted at iteration {iterations}");
            break;
        };
        beta = cand;
        obj = cand_obj;

        if beta.iter().any(|b| !b.is_finite() || b.abs() > config.coef_cap) {
            for b in &mut beta {
                *b = if b.is_nan() {
                    T::zero()
                } else {
                    b.max(-config.coef_cap).min(config.coef_cap)
                };
            }
            capped = true;
            trace.push(deviance_of(&beta));
            break;
        }
        trace.push(deviance_of(&beta));
    }

    let deviance = *trace.last().expect("trace starts non-empty");
    Ok(GlmFit {
        intercept: beta[0],
        coefficients: expand(&beta),
        converged: converged && !capped,
        iterations,
        deviance,
        capped,
        dropped_columns,
        deviance_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn time_design(n: usize) -> DesignMatrix<f64> {
        DesignMatrix::new(vec!["t".into()], (0..n).map(|t| t as f64).collect()).unwrap()
    }

    #[test]
    fn noiseless_exponential_recovered() {
        let x = time_design(5);
        let y: Vec<f64> = (0..5).map(|t| (0.3 * t as f64).exp()).collect();
        let fit = fit_poisson_glm(&x, &y, &FitConfig::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.coefficients[0] - 0.3).abs() < 1e-6, "{fit:?}");
        assert!(fit.intercept.abs() < 1e-6);
    }

    #[test]
    fn constant_counts_give_log_mean() {
        let x = DesignMatrix::<f64>::intercept_only(5);
        let fit = fit_poisson_glm(&x, &[5.0; 5], &FitConfig::default()).unwrap();
        assert!((fit.intercept - 5f64.ln()).abs() < 1e-12);
        assert!(fit.converged);
    }

    #[test]
    fn loglik_plug_in_values() {
        assert_eq!(poisson_loglik_eta(&[0.0], &[0.0]), -1.0);
        let v = poisson_loglik_eta(&[2.0], &[2f64.ln()]);
        let expected = 2.0 * 2f64.ln() - 2.0 - 2f64.ln();
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn all_zero_counts_are_capped() {
        let fit = fit_poisson_glm(&time_design(4), &[0.0; 4], &FitConfig::default()).unwrap();
        assert!(fit.capped && !fit.converged);
        assert_eq!(fit.intercept, -30.0);
    }

    #[test]
    fn separation_is_capped_not_infinite() {
        // all mass on the last day: the slope runs off to +∞, the intercept to −∞
        let x = time_design(4);
        let fit = fit_poisson_glm(&x, &[0.0, 0.0, 0.0, 5.0], &FitConfig::default()).unwrap();
        assert!(fit.is_divergent());
        assert!(fit.capped);
        assert!(fit.coefficients.iter().all(|b| b.is_finite() && b.abs() <= 30.0));
        assert!(fit.intercept.is_finite() && fit.intercept.abs() <= 30.0);
    }

    #[test]
    fn duplicate_column_dropped() {
        let rows: Vec<[f64; 2]> = (0..6).map(|t| [t as f64, t as f64]).collect();
        let x = DesignMatrix::from_rows(&["a", "b"], &rows).unwrap();
        let y: Vec<f64> = (0..6).map(|t| (0.2 * t as f64).exp() * 3.0).collect();
        let fit = fit_poisson_glm(&x, &y, &FitConfig::default()).unwrap();
        assert!(fit.rank_deficient());
        assert_eq!(fit.dropped_columns, vec![1]);
        assert_eq!(fit.coefficients[1], 0.0);
        assert!((fit.coefficients[0] - 0.2).abs() < 1e-6);
    }

    #[test]
    fn constant_column_dropped() {
        let x = DesignMatrix::new(vec!["c".into()], vec![0.0; 5]).unwrap();
        let fit = fit_poisson_glm(&x, &[5.0; 5], &FitConfig::default()).unwrap();
        assert_eq!(fit.dropped_columns, vec![0]);
        assert!((fit.intercept - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_inputs() {
        let x = time_design(3);
        assert!(fit_poisson_glm(&x, &[1.0, 2.0], &FitConfig::default()).is_err());
        assert!(fit_poisson_glm(&x, &[1.0, -2.0, 1.0], &FitConfig::default()).is_err());
        assert!(fit_poisson_glm(&time_design(1), &[1.0], &FitConfig::default()).is_err());
    }

    #[test]
    fn score_vanishes_at_optimum() {
        let x = time_design(8);
        let y = [1.0, 2.0, 2.0, 4.0, 7.0, 8.0, 13.0, 20.0];
        let fit = fit_poisson_glm(&x, &y, &FitConfig::default()).unwrap();
        let g = poisson_score(&x, &y, fit.intercept, &fit.coefficients).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-8), "{g:?}");
    }

    #[test]
    fn elastic_net_shrinks_towards_zero() {
        let x = time_design(8);
        let y = [1.0, 2.0, 2.0, 4.0, 7.0, 8.0, 13.0, 20.0];
        let plain = fit_poisson_glm(&x, &y, &FitConfig::default()).unwrap();
        let pen = fit_poisson_glm(&x, &y, &FitConfig::default().with_elastic_net(0.5)).unwrap();
        assert!(pen.converged, "{pen:?}");
        assert!(pen.coefficients[0].abs() < plain.coefficients[0].abs());
        // a huge L1 weight zeroes the slope exactly
        let zeroed =
            fit_poisson_glm(&x, &y, &FitConfig::default().with_elastic_net(1e3)).unwrap();
        assert_eq!(zeroed.coefficients[0], 0.0);
        let mean: f64 = y.iter().sum::<f64>() / 8.0;
        assert!((zeroed.intercept - mean.ln()).abs() < 1e-8);
    }

    #[test]
    fn single_precision_fit() {
        let x = DesignMatrix::<f32>::new(vec!["t".into()], (0..5).map(|t| t as f32).collect())
            .unwrap();
        let y: Vec<f32> = (0..5).map(|t| (0.3 * t as f32).exp()).collect();
        let cfg = FitConfig::<f32> {
            grad_tol: 1e-4,
            ..FitConfig::default()
        };
        let fit = fit_poisson_glm(&x, &y, &cfg).unwrap();
        assert!((fit.coefficients[0] - 0.3).abs() < 1e-4);
    }
}
