//! Damped Gauss-Newton (Levenberg-Marquardt) least squares with analytic
//! Jacobians. Shared by the spectral peak fitter and the ROI locator.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative step size below which the fit is considered converged.
    pub step_tolerance: f64,
    /// Relative cost decrease below which an accepted step ends the fit.
    pub cost_tolerance: f64,
    pub gradient_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 500,
            step_tolerance: 1e-13,
            cost_tolerance: 1e-16,
            gradient_tolerance: 1e-20,
            initial_damping: 1e-3,
        }
    }
}

/// Least-squares problem: residual vector and its Jacobian (rows =
/// residuals, columns = parameters).
pub trait Problem {
    fn residuals(&self, params: &[f64]) -> DVector<f64>;
    fn jacobian(&self, params: &[f64]) -> DMatrix<f64>;
}

#[derive(Clone, Debug)]
pub struct LmFit {
    pub params: Vec<f64>,
    /// Euclidean norm of the final residual vector.
    pub residual_norm: f64,
    pub iterations: usize,
    /// Asymptotic covariance `s² (JᵀJ)⁻¹` with `s² = SSR/(n − p)`.
    pub covariance: Option<DMatrix<f64>>,
    /// Residual norm after the initial guess and each accepted step.
    pub history: Vec<f64>,
}

impl LmFit {
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| (0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt()).collect())
    }
}

pub fn minimize<P: Problem>(problem: &P, initial: &[f64], opts: &LmOptions) -> Result<LmFit> {
    let n_params = initial.len();
    let mut params = DVector::from_column_slice(initial);
    let mut r = problem.residuals(params.as_slice());
    let n_res = r.len();
    if n_res < n_params {
        return Err(Error::domain(format!(
            "{n_res} residuals cannot determine {n_params} parameters"
        )));
    }
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(Error::FitFailure {
            iterations: 0,
            residual: cost.sqrt(),
            reason: "non-finite residuals at the initial guess".into(),
        });
    }
    let mut history = vec![cost.sqrt()];
    let mut lambda = opts.initial_damping;
    let mut jac = problem.jacobian(params.as_slice());
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if cost == 0.0 || grad.amax() <= opts.gradient_tolerance * (1.0 + cost) {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e20 {
            let mut damped = jtj.clone();
            for i in 0..n_params {
                let d = jtj[(i, i)];
                damped[(i, i)] += lambda * if d > 0.0 { d } else { 1.0 };
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &params + &step;
            let r_trial = problem.residuals(trial.as_slice());
            let cost_trial = r_trial.norm_squared();
            if cost_trial.is_finite() && cost_trial <= cost {
                let rel_step = step.norm() / (params.norm() + opts.step_tolerance);
                let rel_drop = (cost - cost_trial) / cost.max(f64::MIN_POSITIVE);
                params = trial;
                r = r_trial;
                cost = cost_trial;
                history.push(cost.sqrt());
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if rel_step < opts.step_tolerance || rel_drop < opts.cost_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No descent direction left at any damping: a stationary point.
            converged = true;
            break;
        }
        if converged {
            break;
        }
        jac = problem.jacobian(params.as_slice());
    }

    if !converged {
        return Err(Error::FitFailure {
            iterations,
            residual: cost.sqrt(),
            reason: "maximum iterations reached".into(),
        });
    }
    let jac = problem.jacobian(params.as_slice());
    let dof = (n_res - n_params).max(1) as f64;
    let covariance = (jac.transpose() * &jac)
        .try_inverse()
        .map(|inv| inv * (cost / dof));
    Ok(LmFit {
        params: params.iter().copied().collect(),
        residual_norm: cost.sqrt(),
        iterations,
        covariance,
        history,
    })
}
