//! Ordinary least squares (with optional ridge), leverage algebra, and exact
//! refits after subset removal.
//!
//! Conventions follow the rest of the crate: N = X^T X + lambda I, the hat
//! matrix is H = X N^-1 X^T, and residuals are "negative residuals"
//! r_i = yhat_i - y_i. Subset removal is done with a Woodbury downdate of
//! N^-1 whose capacitance matrix I_k - X_S N^-1 X_S^T has size |S|.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{MissError, Result};

/// Relative pivot threshold below which symmetric systems are treated as
/// singular rather than silently regularized.
pub const PIVOT_TOL: f64 = 1e-10;

/// Ratio of smallest to largest squared Cholesky pivot of a symmetric
/// positive semi-definite matrix; 0.0 when the factorization fails outright.
pub fn relative_pivot(m: &DMatrix<f64>) -> f64 {
    match Cholesky::new(m.clone()) {
        Some(chol) => {
            let l = chol.l();
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for i in 0..l.nrows() {
                let p = l[(i, i)] * l[(i, i)];
                lo = lo.min(p);
                hi = hi.max(p);
            }
            if hi == 0.0 {
                0.0
            } else {
                lo / hi
            }
        }
        None => 0.0,
    }
}

fn checked_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let pivot = relative_pivot(m);
    if pivot < PIVOT_TOL {
        return None;
    }
    Cholesky::new(m.clone()).map(|c| c.inverse())
}

/// A fitted least-squares model together with the gram inverse needed for
/// leverage and exact-effect queries. Immutable after construction.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub params: DVector<f64>,
    /// N^-1 with N = X^T X + ridge * I.
    pub gram_inverse: DMatrix<f64>,
    /// r_i = yhat_i - y_i.
    pub residuals: DVector<f64>,
    pub dataset: Arc<Dataset>,
    pub ridge: f64,
}

/// Fit ordinary least squares, or ridge regression when `ridge > 0`.
pub fn fit_ols(ds: &Dataset, ridge: f64) -> Result<OlsFit> {
    fit_ols_arc(Arc::new(ds.clone()), ridge)
}

pub fn fit_ols_arc(ds: Arc<Dataset>, ridge: f64) -> Result<OlsFit> {
    if ridge < 0.0 {
        return Err(MissError::InvalidConfig("ridge must be >= 0".into()));
    }
    let x = &ds.x;
    let mut gram = x.transpose() * x;
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let pivot = relative_pivot(&gram);
    let gram_inverse = checked_inverse(&gram).ok_or(MissError::SingularGram { pivot })?;
    let params = &gram_inverse * (x.transpose() * &ds.y);
    let residuals = x * &params - &ds.y;
    Ok(OlsFit {
        params,
        gram_inverse,
        residuals,
        dataset: ds,
        ridge,
    })
}

impl OlsFit {
    pub fn n(&self) -> usize {
        self.dataset.n()
    }

    pub fn dim(&self) -> usize {
        self.dataset.dim()
    }

    /// Leverage score h_ii = x_i^T N^-1 x_i.
    pub fn leverage(&self, i: usize) -> Result<f64> {
        self.cross_leverage(i, i)
    }

    /// Cross-leverage h_ij = x_i^T N^-1 x_j; symmetric in (i, j).
    pub fn cross_leverage(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.n();
        if i >= n {
            return Err(MissError::InvalidIndex(i));
        }
        if j >= n {
            return Err(MissError::InvalidIndex(j));
        }
        let xi = self.dataset.x.row(i);
        let xj = self.dataset.x.row(j).transpose();
        Ok((xi * &self.gram_inverse * xj)[(0, 0)])
    }

    /// All leverage scores.
    pub fn leverages(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.cross_leverage(i, i).unwrap()).collect()
    }

    /// Design rows of the subset S, stacked as an |S| x d matrix.
    pub fn subset_design(&self, s: &[usize]) -> Result<DMatrix<f64>> {
        for &i in s {
            if i >= self.n() {
                return Err(MissError::InvalidIndex(i));
            }
        }
        let d = self.dim();
        Ok(DMatrix::from_fn(s.len(), d, |r, c| self.dataset.x[(s[r], c)]))
    }

    /// M_S = X_S N^-1 X_S^T.
    pub fn m_s(&self, s: &[usize]) -> Result<DMatrix<f64>> {
        let xs = self.subset_design(s)?;
        Ok(&xs * &self.gram_inverse * xs.transpose())
    }

    /// Capacitance matrix I_k - M_S.
    pub fn capacitance(&self, s: &[usize]) -> Result<DMatrix<f64>> {
        let mut cap = -self.m_s(s)?;
        for i in 0..cap.nrows() {
            cap[(i, i)] += 1.0;
        }
        Ok(cap)
    }

    /// Inverse of the capacitance matrix, with the singularity guard.
    pub(crate) fn capacitance_inverse(&self, s: &[usize]) -> Result<DMatrix<f64>> {
        let cap = self.capacitance(s)?;
        let pivot = relative_pivot(&cap);
        checked_inverse(&cap).ok_or(MissError::SingularCapacitance { pivot })
    }

    /// Negative residuals of the subset, X_S thetahat - y_S.
    pub fn subset_residuals(&self, s: &[usize]) -> DVector<f64> {
        DVector::from_fn(s.len(), |r, _| self.residuals[s[r]])
    }

    /// Parameter change from removing the subset S:
    /// N^-1 X_S^T (I_k - M_S)^-1 (X_S thetahat - y_S).
    pub fn removal_delta(&self, s: &[usize]) -> Result<DVector<f64>> {
        if s.is_empty() {
            return Ok(DVector::zeros(self.dim()));
        }
        let xs = self.subset_design(s)?;
        let cap_inv = self.capacitance_inverse(s)?;
        let rs = self.subset_residuals(s);
        Ok(&self.gram_inverse * (xs.transpose() * (cap_inv * rs)))
    }

    /// Exact fit on the rows outside `s`, obtained by a Woodbury downdate of
    /// the gram inverse rather than a from-scratch solve.
    pub fn refit_without(&self, s: &[usize]) -> Result<OlsFit> {
        if s.is_empty() {
            return Ok(self.clone());
        }
        let mut sorted = s.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != s.len() {
            return Err(MissError::InvalidConfig("duplicate index in subset".into()));
        }
        if sorted.len() >= self.n() {
            return Err(MissError::InvalidConfig(
                "cannot remove every row".into(),
            ));
        }

        let xs = self.subset_design(&sorted)?;
        let cap_inv = self.capacitance_inverse(&sorted)?;
        let params = &self.params + self.removal_delta(&sorted)?;
        // (N - X_S^T X_S)^-1 = N^-1 + N^-1 X_S^T (I - M_S)^-1 X_S N^-1
        let ninv_xst = &self.gram_inverse * xs.transpose();
        let gram_inverse = &self.gram_inverse + &ninv_xst * cap_inv * ninv_xst.transpose();

        let remaining = Arc::new(self.dataset.remove_positions(&sorted)?);
        let residuals = &remaining.x * &params - &remaining.y;
        let fit = OlsFit {
            params,
            gram_inverse,
            residuals,
            dataset: remaining,
            ridge: self.ridge,
        };

        #[cfg(debug_assertions)]
        if sorted.len() <= 3 {
            if let Ok(fresh) = fit_ols(&fit.dataset, self.ridge) {
                let diff = (&fresh.params - &fit.params).amax();
                debug_assert!(diff < 1e-7, "woodbury downdate drifted: {diff:e}");
            }
        }

        Ok(fit)
    }

    /// Closed-form leave-one-out parameter delta
    /// thetahat_-i - thetahat = N^-1 x_i r_i / (1 - h_ii).
    pub fn loo_delta(&self, i: usize) -> Result<DVector<f64>> {
        let h = self.leverage(i)?;
        if h >= 1.0 - 1e-12 {
            return Err(MissError::PerfectLeverage(i));
        }
        let xi = self.dataset.row(i);
        Ok(&self.gram_inverse * xi * (self.residuals[i] / (1.0 - h)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{duplicate_rows, random_design};
    use approx::assert_abs_diff_eq;

    fn seeded_fit(n: usize, d: usize, seed: u64) -> OlsFit {
        let x = random_design(n, d, seed, true);
        let mut y = DVector::zeros(n);
        let theta = DVector::from_fn(d, |i, _| 0.5 + i as f64);
        y += &x * &theta;
        for i in 0..n {
            y[i] += ((i * 2654435761 + seed as usize) % 17) as f64 / 17.0 - 0.5;
        }
        let ds = Dataset::new(x, y, true).unwrap();
        fit_ols(&ds, 0.0).unwrap()
    }

    #[test]
    fn exact_recovery_and_mean_fit() {
        // exact labels recover theta*
        let x = random_design(8, 3, 1, true);
        let theta = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let y = &x * &theta;
        let fit = fit_ols(&Dataset::new(x, y, true).unwrap(), 0.0).unwrap();
        assert_abs_diff_eq!(fit.params, theta, epsilon = 1e-9);
        assert!(fit.residuals.amax() < 1e-9);

        // intercept-only design: the fit is the mean
        let x = DMatrix::from_element(2, 1, 1.0);
        let y = DVector::from_vec(vec![0.0, 2.0]);
        let fit = fit_ols(&Dataset::new(x, y, true).unwrap(), 0.0).unwrap();
        assert_abs_diff_eq!(fit.params[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.residuals[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.residuals[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_independent_normal_equation_solve() {
        let fit = seeded_fit(8, 3, 3);
        // independent route: LU with full pivoting on the normal equations
        let x = &fit.dataset.x;
        let gram = x.transpose() * x;
        let rhs = x.transpose() * &fit.dataset.y;
        let theta = nalgebra::linalg::FullPivLU::new(gram).solve(&rhs).unwrap();
        assert_abs_diff_eq!(fit.params, theta, epsilon = 1e-9);
    }

    #[test]
    fn normal_equations_and_hat_trace() {
        let fit = seeded_fit(12, 4, 5);
        let grad = fit.dataset.x.transpose() * &fit.residuals;
        assert!(grad.amax() / fit.dataset.y.norm() < 1e-8);
        let trace: f64 = fit.leverages().iter().sum();
        assert_abs_diff_eq!(trace, 4.0, epsilon = 1e-8);
        for h in fit.leverages() {
            assert!(h > 0.0 && h < 1.0);
        }
    }

    #[test]
    fn intercept_only_leverage_is_one_over_n() {
        let x = DMatrix::from_element(7, 1, 1.0);
        let y = DVector::from_fn(7, |i, _| i as f64);
        let fit = fit_ols(&Dataset::new(x, y, true).unwrap(), 0.0).unwrap();
        for i in 0..7 {
            assert_abs_diff_eq!(fit.leverage(i).unwrap(), 1.0 / 7.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cross_leverage_symmetry_and_idempotence() {
        let fit = seeded_fit(6, 2, 9);
        for i in 0..6 {
            for j in 0..6 {
                assert_abs_diff_eq!(
                    fit.cross_leverage(i, j).unwrap(),
                    fit.cross_leverage(j, i).unwrap(),
                    epsilon = 1e-12
                );
            }
        }
        // H^2 = H on the first row: h_11 = sum_j h_1j^2
        let lhs = fit.leverage(0).unwrap();
        let rhs: f64 = (0..6)
            .map(|j| fit.cross_leverage(0, j).unwrap().powi(2))
            .sum();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn refit_without_matches_scratch() {
        let fit = seeded_fit(10, 3, 11);
        let sub = fit.refit_without(&[2, 7]).unwrap();
        let scratch = fit_ols(&fit.dataset.remove_positions(&[2, 7]).unwrap(), 0.0).unwrap();
        assert!((&sub.params - &scratch.params).amax() < 1e-9);
        assert!((&sub.gram_inverse - &scratch.gram_inverse).amax() < 1e-9);
        assert_eq!(sub.n(), 8);

        let same = fit.refit_without(&[]).unwrap();
        assert_eq!(same.params, fit.params);
    }

    #[test]
    fn loo_delta_matches_refit() {
        let fit = seeded_fit(9, 3, 13);
        for i in 0..9 {
            let delta = fit.loo_delta(i).unwrap();
            let refit = fit.refit_without(&[i]).unwrap();
            assert!((&refit.params - &fit.params - &delta).amax() < 1e-10);
        }
    }

    #[test]
    fn loo_delta_zero_residual() {
        let x = random_design(8, 3, 1, true);
        let theta = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let y = &x * &theta;
        let fit = fit_ols(&Dataset::new(x, y, true).unwrap(), 0.0).unwrap();
        assert!(fit.loo_delta(3).unwrap().amax() < 1e-9);
    }

    #[test]
    fn duplicated_leverage_identity() {
        // duplicated row's per-copy leverage is h / (1 + (c-1) h)
        let fit = seeded_fit(8, 3, 17);
        let h = fit.leverage(2).unwrap();
        for c in [2usize, 3, 4] {
            let dup = duplicate_rows(&fit.dataset, 2, c).unwrap();
            let dup_fit = fit_ols(&dup, 0.0).unwrap();
            let h_dup = dup_fit.leverage(2).unwrap();
            assert_abs_diff_eq!(h_dup, h / (1.0 + (c as f64 - 1.0) * h), epsilon = 1e-10);
        }
    }

    #[test]
    fn duplicate_then_remove_copies_restores_fit() {
        let fit = seeded_fit(8, 3, 19);
        let dup = duplicate_rows(&fit.dataset, 1, 3).unwrap();
        let dup_fit = fit_ols(&dup, 0.0).unwrap();
        // drop the two extra copies (positions 2, 3); the original stays
        let restored = dup_fit.refit_without(&[2, 3]).unwrap();
        assert!((&restored.params - &fit.params).amax() < 1e-9);
        assert_eq!(restored.dataset.n(), fit.dataset.n());
    }

    #[test]
    fn multi_copy_loo_identity() {
        // removing all c copies: delta = c N^-1 x r / (1 - c h), h per-copy
        let fit = seeded_fit(8, 3, 23);
        let c = 3usize;
        let dup = duplicate_rows(&fit.dataset, 0, c).unwrap();
        let dup_fit = fit_ols(&dup, 0.0).unwrap();
        let h = dup_fit.leverage(0).unwrap();
        let xi = dup_fit.dataset.row(0);
        let closed =
            &dup_fit.gram_inverse * xi * (c as f64 * dup_fit.residuals[0] / (1.0 - c as f64 * h));
        let refit = dup_fit.refit_without(&[0, 1, 2]).unwrap();
        assert!((&refit.params - &dup_fit.params - &closed).amax() < 1e-9);
    }

    #[test]
    fn singular_gram_reports_ridge() {
        let mut x = random_design(6, 3, 29, true);
        for i in 0..6 {
            x[(i, 2)] = 2.0 * x[(i, 1)];
        }
        let ds = Dataset::new(x, DVector::zeros(6), true).unwrap();
        let err = fit_ols(&ds, 0.0).unwrap_err();
        assert!(err.to_string().contains("ridge"));
        assert!(fit_ols(&ds, 1e-3).is_ok());
    }
}
