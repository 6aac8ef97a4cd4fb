//! Exact and approximate group effects for least squares: influence
//! estimates, leverage-adjusted individual effects, the closed-form exact
//! effect, Neumann-order approximations, the second-order effect, pairwise
//! effects, adjusted scores after a removal, and the amplification ratio.
//!
//! Positive effects mean removal increases the target function.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use std::collections::BTreeMap;

use crate::error::{MissError, Result};
use crate::ols::OlsFit;

/// A differentiable scalar of the model parameters. All supported kinds are
/// affine in theta, so the gradient does not depend on the fit.
#[derive(Debug, Clone)]
pub enum TargetFunction {
    /// phi(theta) = x_test^T theta.
    LinearTestPoint { x_test: DVector<f64> },
    /// Binary log-odds of the labelled class at a test point:
    /// phi(theta) = +/- x_test^T theta depending on the class.
    LogisticLogit {
        x_test: DVector<f64>,
        positive_class: bool,
    },
    /// Gradient-only target; cannot be evaluated, only linearized.
    CustomGradient { gradient: DVector<f64> },
}

impl TargetFunction {
    pub fn linear(x_test: DVector<f64>) -> Self {
        TargetFunction::LinearTestPoint { x_test }
    }

    /// Gradient of phi at the fit.
    pub fn gradient(&self) -> DVector<f64> {
        match self {
            TargetFunction::LinearTestPoint { x_test } => x_test.clone(),
            TargetFunction::LogisticLogit {
                x_test,
                positive_class,
            } => {
                if *positive_class {
                    x_test.clone()
                } else {
                    -x_test.clone()
                }
            }
            TargetFunction::CustomGradient { gradient } => gradient.clone(),
        }
    }

    /// phi(theta). Errors for gradient-only targets.
    pub fn eval(&self, theta: &DVector<f64>) -> Result<f64> {
        match self {
            TargetFunction::LinearTestPoint { x_test } => Ok(x_test.dot(theta)),
            TargetFunction::LogisticLogit {
                x_test,
                positive_class,
            } => {
                let logit = x_test.dot(theta);
                Ok(if *positive_class { logit } else { -logit })
            }
            TargetFunction::CustomGradient { .. } => Err(MissError::TargetNotEvaluable),
        }
    }
}

/// Effect of a subset under several approximation orders, for reporting.
#[derive(Debug, Clone, Serialize)]
pub struct EffectReport {
    pub subset: Vec<usize>,
    pub exact: f64,
    pub first_order: f64,
    pub second_order: f64,
    pub neumann_orders: BTreeMap<usize, f64>,
}

fn grad_gram(fit: &OlsFit, target: &TargetFunction) -> DVector<f64> {
    // N^-1 grad(phi); reused across all per-sample formulas
    &fit.gram_inverse * target.gradient()
}

/// Influence estimates v_i = grad(phi)^T N^-1 x_i r_i.
pub fn influence_estimates(fit: &OlsFit, target: &TargetFunction) -> Vec<f64> {
    let w = grad_gram(fit, target);
    (0..fit.n())
        .map(|i| fit.dataset.x.row(i).transpose().dot(&w) * fit.residuals[i])
        .collect()
}

/// Individual effects A_-{i} = v_i / (1 - h_ii); the LAGS scores.
pub fn individual_effects(fit: &OlsFit, target: &TargetFunction) -> Result<Vec<f64>> {
    let v = influence_estimates(fit, target);
    let mut out = Vec::with_capacity(v.len());
    for (i, vi) in v.into_iter().enumerate() {
        let h = fit.leverage(i)?;
        if h >= 1.0 - 1e-12 {
            return Err(MissError::PerfectLeverage(i));
        }
        out.push(vi / (1.0 - h));
    }
    Ok(out)
}

/// Exact group effect of removing S:
/// grad(phi)^T N^-1 X_S^T (I_k - M_S)^-1 (X_S thetahat - y_S).
pub fn actual_effect_exact(fit: &OlsFit, s: &[usize], target: &TargetFunction) -> Result<f64> {
    if s.is_empty() {
        return Ok(0.0);
    }
    let delta = fit.removal_delta(s)?;
    Ok(target.gradient().dot(&delta))
}

/// Two-sample closed form for A_-{i,j}. Equals [`actual_effect_exact`] on
/// {i, j}; the explicit form exposes the amplification and cancellation
/// terms.
pub fn pair_effect(fit: &OlsFit, i: usize, j: usize, target: &TargetFunction) -> Result<f64> {
    if i >= fit.n() {
        return Err(MissError::InvalidIndex(i));
    }
    if j >= fit.n() {
        return Err(MissError::InvalidIndex(j));
    }
    let hii = fit.leverage(i)?;
    let hjj = fit.leverage(j)?;
    let hij = fit.cross_leverage(i, j)?;
    let denom = (1.0 - hii) * (1.0 - hjj) - hij * hij;
    if denom <= 1e-12 {
        return Err(MissError::SingularCapacitance { pivot: denom });
    }
    let w = grad_gram(fit, target);
    let xi = fit.dataset.row(i);
    let xj = fit.dataset.row(j);
    let (ri, rj) = (fit.residuals[i], fit.residuals[j]);
    let ai = w.dot(&xi) * ri / (1.0 - hii);
    let aj = w.dot(&xj) * rj / (1.0 - hjj);
    let cross = w.dot(&xi) * rj + w.dot(&xj) * ri;
    Ok(((1.0 - hii) * (1.0 - hjj) * (ai + aj) + hij * cross) / denom)
}

/// Neumann-series approximation of order m >= 1:
/// grad(phi)^T N^-1 X_S^T (sum_{t=0}^{m-1} M_S^t) (X_S thetahat - y_S).
/// Order 1 is the first-order (influence) approximation; as m grows it
/// converges to the exact effect whenever rho(M_S) < 1.
pub fn neumann_effect(
    fit: &OlsFit,
    s: &[usize],
    target: &TargetFunction,
    order: usize,
) -> Result<f64> {
    if order == 0 {
        return Err(MissError::InvalidConfig("order must be >= 1".into()));
    }
    if s.is_empty() {
        return Ok(0.0);
    }
    let m = fit.m_s(s)?;
    if spectral_radius(&m) >= 1.0 {
        return Err(MissError::SingularCapacitance {
            pivot: 1.0 - spectral_radius(&m),
        });
    }
    let rs = fit.subset_residuals(s);
    // accumulate (sum_t M^t) r by repeated multiplication
    let mut term = rs.clone();
    let mut acc = rs;
    for _ in 1..order {
        term = &m * term;
        acc += &term;
    }
    let xs = fit.subset_design(s)?;
    let w = grad_gram(fit, target);
    Ok((xs.transpose() * acc).dot(&w))
}

/// Spectral radius of a symmetric PSD matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Second-order effect Q_-S = grad^T N^-1 X_S^T (I + M_S)(X_S thetahat - y_S);
/// identical to the order-2 Neumann approximation.
pub fn second_order_effect(fit: &OlsFit, s: &[usize], target: &TargetFunction) -> Result<f64> {
    if s.is_empty() {
        return Ok(0.0);
    }
    let m = fit.m_s(s)?;
    let rs = fit.subset_residuals(s);
    let acc = &rs + m * &rs;
    let xs = fit.subset_design(s)?;
    let w = grad_gram(fit, target);
    Ok((xs.transpose() * acc).dot(&w))
}

/// Full approximation report for a subset.
pub fn effect_report(
    fit: &OlsFit,
    s: &[usize],
    target: &TargetFunction,
    max_order: usize,
) -> Result<EffectReport> {
    let exact = actual_effect_exact(fit, s, target)?;
    let mut neumann_orders = BTreeMap::new();
    for m in 1..=max_order.max(2) {
        neumann_orders.insert(m, neumann_effect(fit, s, target, m)?);
    }
    Ok(EffectReport {
        subset: s.to_vec(),
        exact,
        first_order: neumann_orders[&1],
        second_order: neumann_orders[&2],
        neumann_orders,
    })
}

/// Individual effects recomputed on the fit with `removed` taken out.
/// Returns the refit together with per-row scores aligned with the refit
/// dataset's row order (row identity is carried by the refit dataset).
pub fn adjusted_scores(
    fit: &OlsFit,
    removed: &[usize],
    target: &TargetFunction,
) -> Result<(OlsFit, Vec<f64>)> {
    let refit = fit.refit_without(removed)?;
    let scores = individual_effects(&refit, target)?;
    Ok((refit, scores))
}

/// Prop-3.4 ratio A_-{i}^c / A_-{i} = c (1 - h) / (1 - c h) for c identical
/// copies of a row with per-copy leverage h in (0, 1/c). Strictly exceeds c.
pub fn amplification_ratio(h: f64, c: usize) -> Result<f64> {
    if c < 2 {
        return Err(MissError::InvalidConfig("copies must be >= 2".into()));
    }
    if h <= 0.0 || h >= 1.0 / c as f64 {
        return Err(MissError::InvalidConfig(format!(
            "leverage {h} outside (0, 1/{c})"
        )));
    }
    Ok(c as f64 * (1.0 - h) / (1.0 - c as f64 * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{duplicate_rows, random_design, Dataset};
    use crate::ols::fit_ols;
    use approx::assert_abs_diff_eq;
    use itertools::Itertools;

    fn seeded_instance(n: usize, d: usize, seed: u64) -> (OlsFit, TargetFunction) {
        let x = random_design(n, d, seed, true);
        let theta = DVector::from_fn(d, |i, _| 1.0 - 0.3 * i as f64);
        let mut y = &x * &theta;
        for i in 0..n {
            y[i] += (((i as u64 + 1) * (seed * 2 + 1)) % 23) as f64 / 23.0 - 0.5;
        }
        let fit = fit_ols(&Dataset::new(x, y, true).unwrap(), 0.0).unwrap();
        let x_test = DVector::from_fn(d, |i, _| if i == 0 { 1.0 } else { 0.4 * i as f64 });
        (fit, TargetFunction::linear(x_test))
    }

    #[test]
    fn zero_residuals_zero_scores() {
        let x = random_design(7, 3, 2, true);
        let theta = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let y = &x * &theta;
        let fit = fit_ols(&Dataset::new(x, y, true).unwrap(), 0.0).unwrap();
        let target = TargetFunction::linear(DVector::from_vec(vec![1.0, 0.5, -0.5]));
        assert!(influence_estimates(&fit, &target).iter().all(|v| v.abs() < 1e-10));
        assert!(individual_effects(&fit, &target).unwrap().iter().all(|a| a.abs() < 1e-10));
    }

    #[test]
    fn individual_effect_is_leverage_adjusted() {
        let (fit, target) = seeded_instance(9, 3, 4);
        let v = influence_estimates(&fit, &target);
        let a = individual_effects(&fit, &target).unwrap();
        for i in 0..fit.n() {
            let h = fit.leverage(i).unwrap();
            assert_abs_diff_eq!(a[i], v[i] / (1.0 - h), epsilon = 1e-12);
        }
    }

    #[test]
    fn individual_effect_matches_refit() {
        let (fit, target) = seeded_instance(10, 3, 6);
        let a = individual_effects(&fit, &target).unwrap();
        let phi0 = target.eval(&fit.params).unwrap();
        for i in 0..fit.n() {
            let refit = fit.refit_without(&[i]).unwrap();
            let actual = target.eval(&refit.params).unwrap() - phi0;
            assert_abs_diff_eq!(a[i], actual, epsilon = 1e-10);
        }
    }

    #[test]
    fn exact_effect_against_brute_refits() {
        let (fit, target) = seeded_instance(12, 3, 8);
        let phi0 = target.eval(&fit.params).unwrap();
        for s in (0..12usize).combinations(3) {
            let exact = actual_effect_exact(&fit, &s, &target).unwrap();
            let refit = fit.refit_without(&s).unwrap();
            let brute = target.eval(&refit.params).unwrap() - phi0;
            assert!((exact - brute).abs() < 1e-9, "S = {s:?}");
        }
        assert_eq!(actual_effect_exact(&fit, &[], &target).unwrap(), 0.0);
    }

    #[test]
    fn singleton_exact_equals_individual() {
        let (fit, target) = seeded_instance(8, 3, 10);
        let a = individual_effects(&fit, &target).unwrap();
        for i in 0..8 {
            let exact = actual_effect_exact(&fit, &[i], &target).unwrap();
            assert_abs_diff_eq!(exact, a[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn pair_effect_matches_exact() {
        let (fit, target) = seeded_instance(11, 3, 12);
        for pair in (0..11usize).combinations(2) {
            let two = pair_effect(&fit, pair[0], pair[1], &target).unwrap();
            let exact = actual_effect_exact(&fit, &pair, &target).unwrap();
            assert!((two - exact).abs() < 1e-10, "pair {pair:?}");
        }
    }

    #[test]
    fn pair_effect_additive_when_orthogonal() {
        // block design: rows in disjoint coordinate blocks have h_ij = 0
        let mut x = DMatrix::zeros(6, 2);
        for i in 0..3 {
            x[(i, 0)] = 1.0 + i as f64;
            x[(3 + i, 1)] = 2.0 - i as f64;
        }
        let y = DVector::from_fn(6, |i, _| (i * i) as f64 / 3.0);
        let fit = fit_ols(&Dataset::new(x, y, false).unwrap(), 0.0).unwrap();
        assert!(fit.cross_leverage(0, 4).unwrap().abs() < 1e-14);
        let target = TargetFunction::linear(DVector::from_vec(vec![1.0, 1.0]));
        let a = individual_effects(&fit, &target).unwrap();
        let pe = pair_effect(&fit, 0, 4, &target).unwrap();
        assert_abs_diff_eq!(pe, a[0] + a[4], epsilon = 1e-12);
    }

    #[test]
    fn neumann_first_order_and_convergence() {
        let (fit, target) = seeded_instance(14, 3, 14);
        let s = vec![0usize, 3, 7];
        let v = influence_estimates(&fit, &target);
        let first: f64 = s.iter().map(|&i| v[i]).sum();
        assert_abs_diff_eq!(
            neumann_effect(&fit, &s, &target, 1).unwrap(),
            first,
            epsilon = 1e-12
        );
        let exact = actual_effect_exact(&fit, &s, &target).unwrap();
        let rho = spectral_radius(&fit.m_s(&s).unwrap());
        assert!(rho < 1.0);
        let m50 = neumann_effect(&fit, &s, &target, 50).unwrap();
        assert!((m50 - exact).abs() < 1e-8);
        // geometric envelope: |err_m| <= |X_S N^-1 grad| rho^m |(I-M)^-1 r_S|
        let w = &fit.gram_inverse * target.gradient();
        let xs = fit.subset_design(&s).unwrap();
        let imm = DMatrix::identity(s.len(), s.len()) - fit.m_s(&s).unwrap();
        let z = imm.lu().solve(&fit.subset_residuals(&s)).unwrap();
        let coef = (&xs * w).norm() * z.norm();
        for order in 1..12 {
            let err = (neumann_effect(&fit, &s, &target, order).unwrap() - exact).abs();
            assert!(err <= coef * rho.powi(order as i32) + 1e-13, "order {order}");
        }
    }

    #[test]
    fn second_order_is_neumann_two() {
        let (fit, target) = seeded_instance(10, 3, 16);
        for s in [vec![1usize], vec![0, 5], vec![2, 4, 8]] {
            assert_abs_diff_eq!(
                second_order_effect(&fit, &s, &target).unwrap(),
                neumann_effect(&fit, &s, &target, 2).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn second_order_duplication_closed_form() {
        // Q for c copies of one row: c^2 v h + c v, with h the whitened
        // norm x^T N^-1 x in the duplicated fit
        let (fit, target) = seeded_instance(9, 3, 18);
        let c = 3usize;
        let dup = duplicate_rows(&fit.dataset, 0, c).unwrap();
        let dup_fit = fit_ols(&dup, 0.0).unwrap();
        let v = influence_estimates(&dup_fit, &target);
        let h = dup_fit.leverage(0).unwrap();
        let q = second_order_effect(&dup_fit, &[0, 1, 2], &target).unwrap();
        let closed = (c * c) as f64 * v[0] * h + c as f64 * v[0];
        assert_abs_diff_eq!(q, closed, epsilon = 1e-10);
    }

    #[test]
    fn effect_report_consistency() {
        let (fit, target) = seeded_instance(10, 3, 20);
        let rep = effect_report(&fit, &[1, 4], &target, 4).unwrap();
        assert_abs_diff_eq!(rep.neumann_orders[&1], rep.first_order, epsilon = 1e-10);
        assert_abs_diff_eq!(rep.neumann_orders[&2], rep.second_order, epsilon = 1e-10);
    }

    #[test]
    fn adjusted_scores_empty_removal() {
        let (fit, target) = seeded_instance(8, 3, 22);
        let (_, scores) = adjusted_scores(&fit, &[], &target).unwrap();
        let direct = individual_effects(&fit, &target).unwrap();
        for (s, d) in scores.iter().zip(direct.iter()) {
            assert_abs_diff_eq!(s, d, epsilon = 1e-12);
        }
    }

    #[test]
    fn amplification_ratio_values() {
        assert_abs_diff_eq!(amplification_ratio(0.4, 2).unwrap(), 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(amplification_ratio(1e-9, 3).unwrap(), 3.0, epsilon = 1e-6);
        assert!(amplification_ratio(0.5, 2).is_err());
        for c in [2usize, 3, 4] {
            for t in 1..20 {
                let h = t as f64 / 20.0 / c as f64;
                assert!(amplification_ratio(h, c).unwrap() > c as f64);
            }
        }
    }

    #[test]
    fn amplification_ratio_matches_refits() {
        let (fit, target) = seeded_instance(8, 3, 24);
        for c in [2usize, 3] {
            let dup = duplicate_rows(&fit.dataset, 1, c).unwrap();
            let dup_fit = fit_ols(&dup, 0.0).unwrap();
            let h = dup_fit.leverage(1).unwrap();
            let copies: Vec<usize> = (1..1 + c).collect();
            let group = actual_effect_exact(&dup_fit, &copies, &target).unwrap();
            let single = actual_effect_exact(&dup_fit, &[1], &target).unwrap();
            assert_abs_diff_eq!(
                group / single,
                amplification_ratio(h, c).unwrap(),
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn scale_equivariance() {
        // scaling y by s scales every effect linearly (linear target)
        let (fit, target) = seeded_instance(10, 3, 26);
        let scaled = Dataset::new(fit.dataset.x.clone(), &fit.dataset.y * 3.5, true).unwrap();
        let fit2 = fit_ols(&scaled, 0.0).unwrap();
        let s = vec![0usize, 4];
        let e1 = actual_effect_exact(&fit, &s, &target).unwrap();
        let e2 = actual_effect_exact(&fit2, &s, &target).unwrap();
        assert_abs_diff_eq!(e2, 3.5 * e1, epsilon = 1e-9);
        let v1 = influence_estimates(&fit, &target);
        let v2 = influence_estimates(&fit2, &target);
        for i in 0..fit.n() {
            assert_abs_diff_eq!(v2[i], 3.5 * v1[i], epsilon = 1e-9);
        }
    }
}
