//! Damped Gauss–Newton (Levenberg–Marquardt) least squares.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop once a step changes the parameters by less than this, relative.
    pub xtol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            xtol: 1e-10,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Sum of squared residuals.
    pub ssr: f64,
    pub iterations: usize,
    /// SSR after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
    pub jacobian: DMatrix<f64>,
}

impl LmReport {
    /// `σ²·diag((JᵀJ)⁻¹)` with `σ² = SSR/(m − n)`; NaN where undefined.
    pub fn covariance_diag(&self) -> Vec<f64> {
        let (m, n) = self.jacobian.shape();
        let nan = vec![f64::NAN; n];
        if m <= n {
            return nan;
        }
        let jtj = self.jacobian.transpose() * &self.jacobian;
        match jtj.try_inverse() {
            Some(inv) => {
                let s2 = self.ssr / (m - n) as f64;
                (0..n).map(|i| s2 * inv[(i, i)]).collect()
            }
            None => nan,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("no convergence after {iterations} iterations (best SSR {ssr:.6e})")]
    NotConverged {
        best: Vec<f64>,
        ssr: f64,
        iterations: usize,
    },
    #[error("residuals are not finite at the initial point")]
    NonFinite,
}

/// A least-squares problem: residual vector and its Jacobian.
pub trait Problem {
    fn residuals(&self, x: &[f64]) -> Vec<f64>;
    /// Row `i`, column `j` holds `∂r_i/∂x_j`.
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;
}

fn ssr(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimises `Σ r_i(x)²` from `x0`. Only steps that strictly lower the
/// objective are accepted; λ is divided by 10 on acceptance and multiplied
/// by 10 on rejection.
pub fn minimize(problem: &impl Problem, x0: &[f64], options: LmOptions) -> Result<LmReport, LmError> {
    let mut x = DVector::from_column_slice(x0);
    let mut r = problem.residuals(x.as_slice());
    let mut f = ssr(&r);
    if !f.is_finite() {
        return Err(LmError::NonFinite);
    }
    let mut history = vec![f];
    let mut lambda = options.initial_lambda;
    let mut jac = problem.jacobian(x.as_slice());
    let n = x.len();
    for iteration in 1..=options.max_iterations {
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let g = &jt * DVector::from_column_slice(&r);
        let max_diag = (0..n).map(|i| jtj[(i, i)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut a = jtj.clone();
        for i in 0..n {
            a[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * max_diag);
        }
        let step = match a.cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => {
                lambda *= 10.0;
                continue;
            }
        };
        let small = step.norm() <= options.xtol * (x.norm() + options.xtol);
        let candidate = &x + &step;
        let rc = problem.residuals(candidate.as_slice());
        let fc = ssr(&rc);
        if fc.is_finite() && fc < f {
            x = candidate;
            r = rc;
            f = fc;
            history.push(f);
            jac = problem.jacobian(x.as_slice());
            lambda = (lambda / 10.0).max(1e-15);
        } else {
            lambda *= 10.0;
        }
        if small || f == 0.0 || lambda > 1e20 {
            return Ok(LmReport {
                params: x.as_slice().to_vec(),
                residuals: r,
                ssr: f,
                iterations: iteration,
                history,
                jacobian: jac,
            });
        }
    }
    Err(LmError::NotConverged {
        best: x.as_slice().to_vec(),
        ssr: f,
        iterations: options.max_iterations,
    })
}

/// Central finite-difference Jacobian with per-parameter steps.
pub fn numeric_jacobian(problem: &impl Problem, x: &[f64], steps: &[f64]) -> DMatrix<f64> {
    let m = problem.residuals(x).len();
    let mut jac = DMatrix::zeros(m, x.len());
    for j in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += steps[j];
        xm[j] -= steps[j];
        let rp = problem.residuals(&xp);
        let rm = problem.residuals(&xm);
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * steps[j]);
        }
    }
    jac
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn relative_difference(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
