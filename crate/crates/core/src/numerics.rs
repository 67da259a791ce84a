//! Dense numerical kernels: Cholesky with jitter, multivariate normal
//! draws, ridge-stabilised logistic regression by Newton's method, and
//! least squares through the normal equations.
//!
//! Storage is `nalgebra`'s `DMatrix`/`DVector`; the fitting loops and
//! their stopping rules live here.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::rng::Rng;

/// Lower bound of the clipping interval applied to every predicted probability.
pub const PROB_FLOOR: f64 = 1e-12;

const MAX_JITTER: f64 = 1e-4;

/// Coefficients of a fitted regression, intercept first by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
}

impl FitResult {
    /// Linear predictor `x · coefficients` for one row.
    pub fn linear(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }
}

/// A lower-triangular factor together with the diagonal jitter that was
/// needed to obtain it.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub lower: DMatrix<f64>,
    pub jitter: f64,
}

/// Factors `matrix + jitter·I`. If that fails the jitter is raised (from
/// `1e-12` when zero) by factors of ten up to `1e-4`.
pub fn cholesky(matrix: &DMatrix<f64>, jitter: f64) -> Result<CholeskyFactor> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(invalid("cholesky requires a square matrix"));
    }
    if !(jitter >= 0.0) {
        return Err(invalid("jitter must be nonnegative"));
    }
    let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                return Err(invalid("cholesky requires a symmetric matrix"));
            }
        }
    }
    let mut current = jitter;
    loop {
        let mut shifted = matrix.clone();
        for i in 0..n {
            shifted[(i, i)] += current;
        }
        if let Some(c) = shifted.cholesky() {
            return Ok(CholeskyFactor { lower: c.unpack(), jitter: current });
        }
        if current >= MAX_JITTER {
            return Err(Error::Numerical(format!(
                "matrix is not positive definite even with jitter {current:e}"
            )));
        }
        current = if current == 0.0 { 1e-12 } else { (current * 10.0).min(MAX_JITTER) };
    }
}

/// Square root `R` of the nearest positive semi-definite matrix, built by
/// clipping negative eigenvalues at zero, so that `R·Rᵀ = V·max(Λ, 0)·Vᵀ`.
/// Also returns the smallest eigenvalue before clipping.
pub fn psd_root(matrix: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if matrix.nrows() != matrix.ncols() {
        return Err(invalid("psd_root requires a square matrix"));
    }
    let eig = matrix.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let mut root = eig.eigenvectors;
    for (c, &lambda) in eig.eigenvalues.iter().enumerate() {
        let scale = lambda.max(0.0).sqrt();
        root.column_mut(c).scale_mut(scale);
    }
    Ok((root, min))
}

/// One draw of `lower · ε` with `ε` standard normal. Any square root of the
/// covariance works, triangular or not.
pub fn sample_mvn(lower: &DMatrix<f64>, rng: &mut Rng) -> DVector<f64> {
    let eps = DVector::from_iterator(lower.ncols(), (0..lower.ncols()).map(|_| StandardNormal.sample(rng)));
    lower * eps
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
#[inline]
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    pub ridge: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self { ridge: 1e-6, tol: 1e-8, max_iter: 100 }
    }
}

/// Ridge-penalised log-likelihood `Σ [y η − log(1+e^η)] − (ridge/2)‖β‖²`.
pub fn logistic_objective(x: &DMatrix<f64>, y: &[f64], beta: &[f64], ridge: f64) -> f64 {
    let b = DVector::from_column_slice(beta);
    let eta = x * &b;
    let ll: f64 = eta.iter().zip(y).map(|(&e, &t)| t * e - softplus(e)).sum();
    ll - 0.5 * ridge * b.norm_squared()
}

/// Gradient of [`logistic_objective`].
pub fn logistic_gradient(x: &DMatrix<f64>, y: &[f64], beta: &[f64], ridge: f64) -> DVector<f64> {
    let b = DVector::from_column_slice(beta);
    let eta = x * &b;
    let resid = DVector::from_iterator(y.len(), eta.iter().zip(y).map(|(&e, &t)| t - sigmoid(e)));
    x.transpose() * resid - b * ridge
}

/// Maximises the ridge-penalised logistic log-likelihood by Newton steps
/// with backtracking. Every coefficient, the intercept included, is
/// penalised, so the optimum stays finite under separation.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[f64], opts: LogisticOptions) -> Result<FitResult> {
    let (n, p) = x.shape();
    if n != y.len() {
        return Err(invalid(format!("design has {n} rows but response has {}", y.len())));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(invalid("logistic response must be binary"));
    }
    if !(opts.ridge >= 0.0) {
        return Err(invalid("ridge must be nonnegative"));
    }
    let mut beta = vec![0.0; p];
    let mut objective = logistic_objective(x, y, &beta, opts.ridge);
    let mut grad = logistic_gradient(x, y, &beta, opts.ridge);
    let mut iterations = 0;
    // Newton steps past the tolerance cost little and pin the optimum to
    // round-off, which keeps fits stable under row permutations.
    let mut polish = 2;
    while iterations < opts.max_iter {
        let polishing = grad.norm() <= opts.tol;
        if polishing {
            if polish == 0 {
                break;
            }
            polish -= 1;
        }
        iterations += 1;
        let b = DVector::from_column_slice(&beta);
        let eta = x * &b;
        let mut weighted = x.clone();
        for (r, &e) in eta.iter().enumerate() {
            let pr = sigmoid(e);
            let w = pr * (1.0 - pr);
            weighted.row_mut(r).scale_mut(w);
        }
        let mut info = x.transpose() * weighted;
        for k in 0..p {
            info[(k, k)] += opts.ridge;
        }
        let step = solve_spd_damped(&info, &grad)
            .ok_or_else(|| Error::Numerical("logistic information matrix is singular".into()))?;
        let slope = grad.dot(&step);
        let previous = beta.clone();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let obj = logistic_objective(x, y, &trial, opts.ridge);
            if obj >= objective + 1e-4 * t * slope || (obj - objective).abs() <= 1e-15 * objective.abs() {
                beta = trial;
                objective = obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        let next = logistic_gradient(x, y, &beta, opts.ridge);
        if polishing && next.norm() > grad.norm() {
            beta = previous;
            break;
        }
        grad = next;
    }
    let norm = grad.norm();
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numerical("logistic coefficients diverged".into()));
    }
    Ok(FitResult { coefficients: beta, converged: norm <= opts.tol, iterations, final_gradient_norm: norm })
}

/// Solves `a · s = g` for symmetric positive (semi)definite `a`, adding
/// diagonal damping when the plain factorisation fails.
fn solve_spd_damped(a: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = (0..a.nrows()).map(|k| a[(k, k)].abs()).fold(0.0f64, f64::max).max(1e-300);
    let mut damping = 0.0;
    loop {
        let mut m = a.clone();
        for k in 0..m.nrows() {
            m[(k, k)] += damping;
        }
        if let Some(c) = m.cholesky() {
            let s = c.solve(g);
            if s.iter().all(|v| v.is_finite()) {
                return Some(s);
            }
        }
        damping = if damping == 0.0 { 1e-12 * scale } else { damping * 10.0 };
        if damping > 1e2 * scale {
            return None;
        }
    }
}

/// Elementwise `sigmoid(X · β)` clipped to `[1e-12, 1 − 1e-12]`.
pub fn predict_proba(fit: &FitResult, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != fit.coefficients.len() {
        return Err(invalid(format!(
            "design has {} columns but the fit has {} coefficients",
            x.ncols(),
            fit.coefficients.len()
        )));
    }
    let b = DVector::from_column_slice(&fit.coefficients);
    Ok((x * b).iter().map(|&e| sigmoid(e).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)).collect())
}

/// Least squares through the normal equations; a `1e-10` ridge (relative
/// to the largest diagonal of `XᵀX`, raised tenfold as needed) handles rank
/// deficiency.
pub fn fit_ols(x: &DMatrix<f64>, y: &[f64]) -> Result<FitResult> {
    let (n, _) = x.shape();
    if n != y.len() {
        return Err(invalid(format!("design has {n} rows but response has {}", y.len())));
    }
    let yv = DVector::from_column_slice(y);
    let gram = x.transpose() * x;
    let rhs = x.transpose() * &yv;
    let p = gram.nrows();
    let scale = (0..p).map(|k| gram[(k, k)]).fold(0.0f64, f64::max).max(1.0);
    let mut ridge = 0.0;
    let beta = loop {
        let mut m = gram.clone();
        for k in 0..p {
            m[(k, k)] += ridge;
        }
        if let Some(c) = m.cholesky() {
            let b = c.solve(&rhs);
            if b.iter().all(|v| v.is_finite()) && (ridge > 0.0 || well_conditioned(&c)) {
                break b;
            }
        }
        ridge = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
    };
    let resid = &yv - x * &beta;
    let norm = (x.transpose() * resid).norm();
    Ok(FitResult { coefficients: beta.iter().copied().collect(), converged: true, iterations: 1, final_gradient_norm: norm })
}

/// Rejects factorisations whose pivots span more than ~13 orders of magnitude
/// (exact collinearity that survived the factorisation through rounding).
fn well_conditioned(c: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> bool {
    let l = c.l_dirty();
    let diag: Vec<f64> = (0..l.nrows()).map(|k| l[(k, k)]).collect();
    let hi = diag.iter().cloned().fold(0.0f64, f64::max);
    let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    diag.is_empty() || lo > hi * 1e-7
}

/// Builds a row-major design matrix from rows of equal length.
pub fn design(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let p = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), p, |r, c| rows[r][c])
}
