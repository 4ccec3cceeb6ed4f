//! Damped least squares (Levenberg–Marquardt) with caller-supplied Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub trait LeastSquares {
    /// r(p) = model(p) − data, optionally divided by per-point uncertainties.
    fn residuals(&self, params: &DVector<f64>) -> DVector<f64>;
    /// ∂r/∂p, one row per residual.
    fn jacobian(&self, params: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone)]
pub struct LmSolution {
    pub params: DVector<f64>,
    /// (JᵀJ)⁻¹ scaled by the reduced χ² when `scale_by_chi2` is set.
    pub covariance: DMatrix<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative reduction in cost below which the fit is converged.
    pub cost_tolerance: f64,
    pub step_tolerance: f64,
    /// Scale the covariance by χ²/(n − p) (unknown measurement noise).
    pub scale_by_chi2: bool,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            cost_tolerance: 1e-14,
            step_tolerance: 1e-12,
            scale_by_chi2: true,
        }
    }
}

pub fn levenberg_marquardt<M: LeastSquares>(model: &M, init: DVector<f64>, options: LmOptions) -> Result<LmSolution> {
    let mut p = init;
    let mut r = model.residuals(&p);
    let n = r.len();
    let k = p.len();
    if n < k {
        return Err(Error::TooFewPoints { need: k, got: n });
    }
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(Error::FitFailure("non-finite residuals at the starting point".into()));
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..options.max_iterations {
        iterations = it + 1;
        let j = model.jacobian(&p);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for d in 0..k {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &p + &step;
            let r_trial = model.residuals(&trial);
            let c_trial = r_trial.norm_squared();
            if c_trial.is_finite() && c_trial <= cost {
                let small_step = step.norm() <= options.step_tolerance * (p.norm() + options.step_tolerance);
                let small_gain = cost - c_trial <= options.cost_tolerance * cost;
                p = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no downhill step at any damping: a stationary point
            converged = g.norm() <= 1e-8 * (1.0 + cost) || cost == 0.0 || lambda > 1e20;
            break;
        }
        if converged || cost == 0.0 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence(iterations));
    }
    let j = model.jacobian(&p);
    let jtj = j.transpose() * &j;
    let mut covariance = jtj
        .clone()
        .pseudo_inverse(1e-300)
        .map_err(|e| Error::FitFailure(e.to_string()))?;
    if options.scale_by_chi2 && n > k {
        covariance *= cost / (n - k) as f64;
    }
    Ok(LmSolution {
        params: p,
        covariance,
        residual_norm: cost.sqrt(),
        iterations,
    })
}
