//! Logistic regression via damped Newton, plus the general influence-function
//! machinery and actual effects via re-optimization.
//!
//! The fitted objective is (1/n) sum_i w_i L_i(theta) + (lambda / 2n) |theta|^2
//! with per-sample weights w_i (1 by default; 0 drops a row). Scores follow the
//! first-order group approximation: score_i = (1/n) grad(phi)^T H^-1 grad L_i,
//! where H is the Hessian of the mean objective at the optimum.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::dataset::Dataset;
use crate::effects::TargetFunction;
use crate::error::{MissError, Result};
use crate::ols::{relative_pivot, PIVOT_TOL};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;

/// A converged logistic fit with the pieces needed for influence estimates.
#[derive(Debug, Clone)]
pub struct GlmFit {
    pub params: DVector<f64>,
    /// Hessian of the mean objective at the optimum (symmetric PD).
    pub hessian: DMatrix<f64>,
    /// n x d matrix of per-sample loss gradients at the optimum.
    pub per_sample_grads: DMatrix<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub dataset: Arc<Dataset>,
    pub ridge: f64,
    hessian_chol: Cholesky<f64, nalgebra::Dyn>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(z: f64) -> f64 {
    // log(1 + e^z), overflow-safe
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Weighted mean logistic objective and its gradient/Hessian at theta.
struct Objective<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    weights: &'a [f64],
    ridge: f64,
}

impl Objective<'_> {
    fn n(&self) -> f64 {
        self.x.nrows() as f64
    }

    fn loss(&self, theta: &DVector<f64>) -> f64 {
        let z = self.x * theta;
        let mut total = 0.0;
        for i in 0..self.x.nrows() {
            // -[y log sigma + (1-y) log(1-sigma)] = log(1+e^z) - y z
            total += self.weights[i] * (log1p_exp(z[i]) - self.y[i] * z[i]);
        }
        (total + 0.5 * self.ridge * theta.norm_squared()) / self.n()
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let z = self.x * theta;
        let mut g = theta * self.ridge;
        for i in 0..self.x.nrows() {
            let coeff = self.weights[i] * (sigmoid(z[i]) - self.y[i]);
            g += self.x.row(i).transpose() * coeff;
        }
        g / self.n()
    }

    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let z = self.x * theta;
        let d = self.x.ncols();
        let mut h = DMatrix::identity(d, d) * self.ridge;
        for i in 0..self.x.nrows() {
            let p = sigmoid(z[i]);
            let coeff = self.weights[i] * p * (1.0 - p);
            if coeff == 0.0 {
                continue;
            }
            let xi = self.x.row(i).transpose();
            h.syger(coeff, &xi, &xi, 1.0);
        }
        // syger fills the lower triangle; mirror it
        for r in 0..d {
            for c in r + 1..d {
                h[(r, c)] = h[(c, r)];
            }
        }
        h / self.n()
    }
}

fn newton(obj: &Objective<'_>, start: &DVector<f64>, tol: f64, max_iter: usize) -> Result<(DVector<f64>, f64, usize)> {
    let mut theta = start.clone();
    let mut grad = obj.gradient(&theta);
    for iter in 0..max_iter {
        if grad.norm() < tol {
            return Ok((theta, grad.norm(), iter));
        }
        if obj.ridge == 0.0 && theta.norm() > 1e8 {
            return Err(MissError::Separation);
        }
        let hess = obj.hessian(&theta);
        let step = Cholesky::new(hess)
            .map(|c| c.solve(&grad))
            .ok_or(MissError::SingularHessian)?;
        // damped Newton: halve on loss increase
        let loss0 = obj.loss(&theta);
        let mut alpha = 1.0;
        let mut candidate = &theta - &step;
        for _ in 0..40 {
            if obj.loss(&candidate) <= loss0 + 1e-15 {
                break;
            }
            alpha *= 0.5;
            candidate = &theta - &step * alpha;
        }
        theta = candidate;
        grad = obj.gradient(&theta);
    }
    if grad.norm() < tol {
        Ok((theta, grad.norm(), max_iter))
    } else {
        Err(MissError::NonConvergence {
            max_iter,
            grad_norm: grad.norm(),
        })
    }
}

fn check_binary(y: &DVector<f64>) -> Result<()> {
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(MissError::NonBinaryTargets);
    }
    Ok(())
}

/// Fit a logistic model by damped Newton iterations from the origin.
pub fn fit_logistic(ds: &Dataset, ridge: f64, tol: f64, max_iter: usize) -> Result<GlmFit> {
    let weights = vec![1.0; ds.n()];
    fit_logistic_weighted(ds, &weights, ridge, tol, max_iter, None)
}

/// Weighted variant; `warm_start` skips the cold start from the origin.
/// Weight 0 drops a row, which is how subset-removal refits are expressed.
pub fn fit_logistic_weighted(
    ds: &Dataset,
    weights: &[f64],
    ridge: f64,
    tol: f64,
    max_iter: usize,
    warm_start: Option<&DVector<f64>>,
) -> Result<GlmFit> {
    check_binary(&ds.y)?;
    if weights.len() != ds.n() {
        return Err(MissError::InvalidConfig(
            "weights length must equal n".into(),
        ));
    }
    if ridge < 0.0 {
        return Err(MissError::InvalidConfig("ridge must be >= 0".into()));
    }
    let obj = Objective {
        x: &ds.x,
        y: &ds.y,
        weights,
        ridge,
    };
    let start = warm_start
        .cloned()
        .unwrap_or_else(|| DVector::zeros(ds.dim()));
    let (params, grad_norm, iterations) = newton(&obj, &start, tol, max_iter)?;

    let hessian = obj.hessian(&params);
    let pivot = relative_pivot(&hessian);
    if pivot < PIVOT_TOL {
        return Err(MissError::SingularHessian);
    }
    let hessian_chol = Cholesky::new(hessian.clone()).ok_or(MissError::SingularHessian)?;

    let z = &ds.x * &params;
    let d = ds.dim();
    let per_sample_grads = DMatrix::from_fn(ds.n(), d, |i, j| {
        (sigmoid(z[i]) - ds.y[i]) * ds.x[(i, j)]
    });

    Ok(GlmFit {
        params,
        hessian,
        per_sample_grads,
        grad_norm,
        iterations,
        dataset: Arc::new(ds.clone()),
        ridge,
        hessian_chol,
    })
}

impl GlmFit {
    pub fn n(&self) -> usize {
        self.dataset.n()
    }

    /// H^-1 v through the cached factorization.
    pub fn hessian_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.hessian_chol.solve(v)
    }
}

/// First-order scores score_i = (1/n) grad(phi)^T H^-1 grad L_i. The group
/// estimate for a set is the sum of its members' scores.
pub fn influence_estimates_general(fit: &GlmFit, target: &TargetFunction) -> Vec<f64> {
    let w = fit.hessian_solve(&target.gradient());
    let n = fit.n() as f64;
    (0..fit.n())
        .map(|i| fit.per_sample_grads.row(i).transpose().dot(&w) / n)
        .collect()
}

/// Actual effect of removing S from a logistic fit: re-optimizes on the
/// remaining rows from a warm start at the full-data optimum and returns the
/// phi difference.
pub fn actual_effect_refit(
    fit: &GlmFit,
    s: &[usize],
    target: &TargetFunction,
) -> Result<f64> {
    if s.is_empty() {
        return Ok(0.0);
    }
    let mut weights = vec![1.0; fit.n()];
    for &i in s {
        if i >= fit.n() {
            return Err(MissError::InvalidIndex(i));
        }
        weights[i] = 0.0;
    }
    let refit = fit_logistic_weighted(
        &fit.dataset,
        &weights,
        fit.ridge,
        DEFAULT_TOL,
        DEFAULT_MAX_ITER,
        Some(&fit.params),
    )?;
    Ok(target.eval(&refit.params)? - target.eval(&fit.params)?)
}
