//! Subset-selection algorithms: one-shot greedy selection on influence
//! estimates (ZAMinfluence) or exact individual effects (LAGS), the adaptive
//! greedy loop, brute-force enumeration, the quadratic relaxation solved by
//! projected gradient ascent, and the submodularity check.
//!
//! Every selector is a pure function of its inputs; tie-breaks go to the
//! lowest row id so traces reproduce across runs and languages.

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::effects::{
    actual_effect_exact, individual_effects, influence_estimates, second_order_effect,
    TargetFunction,
};
use crate::error::{MissError, Result};
use crate::glm::{
    actual_effect_refit, fit_logistic, influence_estimates_general, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::ols::{fit_ols, OlsFit};

/// Which model family a selector fits and refits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ols,
    Logistic,
}

/// Score used inside the adaptive greedy loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scoring {
    /// Exact individual effects (closed form for OLS, refit per candidate
    /// for logistic).
    ExactIndividual,
    /// First-order influence estimates.
    InfluenceEstimate,
}

/// Record of one selection run.
#[derive(Debug, Clone, Serialize)]
pub struct SubsetTrace {
    pub algorithm: String,
    pub k: usize,
    /// Row ids in selection order.
    pub selected: Vec<u64>,
    /// Score snapshot at each selection step (aligned with the remaining
    /// rows at that step for adaptive selection).
    pub step_scores: Vec<Vec<f64>>,
    pub value_exact: Option<f64>,
    pub value_first_order: Option<f64>,
    pub value_second_order: Option<f64>,
    pub stopped_early: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<String>,
}

impl SubsetTrace {
    fn new(algorithm: &str, k: usize) -> Self {
        SubsetTrace {
            algorithm: algorithm.to_string(),
            k,
            selected: Vec::new(),
            step_scores: Vec::new(),
            value_exact: None,
            value_first_order: None,
            value_second_order: None,
            stopped_early: false,
            stop_reason: None,
        }
    }

    fn stop(&mut self, reason: &str) {
        self.stopped_early = true;
        self.stop_reason = Some(reason.to_string());
    }
}

/// Indices of up to `k` rows with strictly positive scores, in descending
/// score order, ties broken by lowest row id.
pub fn top_k_positive(scores: &[f64], row_ids: &[u64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(row_ids[a].cmp(&row_ids[b]))
    });
    order.truncate(k);
    order
}

/// ZAMinfluence selection: top-k positive influence estimates.
pub fn select_zam(scores: &[f64], row_ids: &[u64], k: usize) -> SubsetTrace {
    let mut trace = SubsetTrace::new("zam", k);
    let picked = top_k_positive(scores, row_ids, k);
    trace.step_scores.push(scores.to_vec());
    trace.selected = picked.iter().map(|&i| row_ids[i]).collect();
    trace.value_first_order = Some(picked.iter().map(|&i| scores[i]).sum());
    if trace.selected.len() < k {
        trace.stop("fewer than k positive scores");
    }
    trace
}

/// Leverage-adjusted greedy selection: top-k positive individual effects.
pub fn select_lags(fit: &OlsFit, target: &TargetFunction, k: usize) -> Result<SubsetTrace> {
    let scores = individual_effects(fit, target)?;
    let mut trace = SubsetTrace::new("lags", k);
    let picked = top_k_positive(&scores, &fit.dataset.row_ids, k);
    trace.step_scores.push(scores.clone());
    trace.selected = picked.iter().map(|&i| fit.dataset.row_ids[i]).collect();
    if trace.selected.len() < k {
        trace.stop("fewer than k positive scores");
    }
    annotate_ols(&mut trace, fit, target)?;
    Ok(trace)
}

/// Adaptive greedy selection: refit on the remaining rows, rescore, and move
/// the top `step` positive-scored rows into the selection until the budget is
/// met or no positive scores remain.
pub fn select_adaptive(
    ds: &Dataset,
    target: &TargetFunction,
    k: usize,
    step: usize,
    scoring: Scoring,
    model: ModelKind,
    ridge: f64,
) -> Result<SubsetTrace> {
    if step == 0 {
        return Err(MissError::InvalidConfig("step size must be >= 1".into()));
    }
    if k >= ds.n() {
        return Err(MissError::InvalidConfig(format!(
            "budget k = {k} must be < n = {}",
            ds.n()
        )));
    }
    let mut trace = SubsetTrace::new("adaptive", k);
    let mut current = ds.clone();

    while trace.selected.len() < k {
        let scores = match score_current(&current, target, scoring, model, ridge) {
            Ok(s) => s,
            Err(e) => {
                if trace.selected.is_empty() {
                    return Err(e);
                }
                return Err(MissError::PartialTrace {
                    selected: trace.selected.len(),
                    source: Box::new(e),
                });
            }
        };
        let budget = k - trace.selected.len();
        let picked = top_k_positive(&scores, &current.row_ids, budget.min(step));
        trace.step_scores.push(scores);
        if picked.is_empty() {
            trace.stop("no positive scores remain");
            break;
        }
        for &i in &picked {
            trace.selected.push(current.row_ids[i]);
        }
        current = current.remove_positions(&picked)?;
    }
    Ok(trace)
}

fn score_current(
    ds: &Dataset,
    target: &TargetFunction,
    scoring: Scoring,
    model: ModelKind,
    ridge: f64,
) -> Result<Vec<f64>> {
    match model {
        ModelKind::Ols => {
            let fit = fit_ols(ds, ridge)?;
            match scoring {
                Scoring::ExactIndividual => individual_effects(&fit, target),
                Scoring::InfluenceEstimate => Ok(influence_estimates(&fit, target)),
            }
        }
        ModelKind::Logistic => {
            let fit = fit_logistic(ds, ridge, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
            match scoring {
                Scoring::InfluenceEstimate => Ok(influence_estimates_general(&fit, target)),
                Scoring::ExactIndividual => (0..ds.n())
                    .map(|i| actual_effect_refit(&fit, &[i], target))
                    .collect(),
            }
        }
    }
}

/// Brute-force optimum over all subsets of size <= k, evaluated exactly.
/// Enumeration is by ascending size, then lexicographic, and only strict
/// improvements replace the incumbent, so ties resolve to the
/// lexicographically-first subset.
pub fn select_brute(
    ds: &Dataset,
    target: &TargetFunction,
    k: usize,
    n_cap: usize,
    model: ModelKind,
    ridge: f64,
) -> Result<SubsetTrace> {
    if ds.n() > n_cap {
        return Err(MissError::BruteCapExceeded {
            n: ds.n(),
            cap: n_cap,
        });
    }
    if k >= ds.n() {
        return Err(MissError::InvalidConfig(format!(
            "budget k = {k} must be < n = {}",
            ds.n()
        )));
    }
    let mut best: (f64, Vec<usize>) = (0.0, Vec::new());
    match model {
        ModelKind::Ols => {
            let fit = fit_ols(ds, ridge)?;
            for size in 1..=k {
                for s in (0..ds.n()).combinations(size) {
                    // removals that make the refit rank-deficient are not
                    // candidate subsets
                    if let Ok(value) = actual_effect_exact(&fit, &s, target) {
                        if value > best.0 {
                            best = (value, s);
                        }
                    }
                }
            }
        }
        ModelKind::Logistic => {
            let fit = fit_logistic(ds, ridge, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
            for size in 1..=k {
                for s in (0..ds.n()).combinations(size) {
                    if let Ok(value) = actual_effect_refit(&fit, &s, target) {
                        if value > best.0 {
                            best = (value, s);
                        }
                    }
                }
            }
        }
    }
    let mut trace = SubsetTrace::new("brute", k);
    trace.selected = best.1.iter().map(|&i| ds.row_ids[i]).collect();
    trace.value_exact = Some(best.0);
    Ok(trace)
}

/// The second-order objective as an explicit quadratic: value of the
/// indicator of S is sum_{i in S} v_i + sum_{i,j in S} b_ij = Q_-S.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    /// Influence estimates v.
    pub linear: Vec<f64>,
    /// b_ij = (grad^T N^-1 x_i)(x_i^T N^-1 x_j) r_j.
    pub quadratic: DMatrix<f64>,
    pub row_ids: Vec<u64>,
}

impl QuadraticForm {
    pub fn n(&self) -> usize {
        self.linear.len()
    }

    /// Exact objective value of the indicator of `positions`.
    pub fn indicator_objective(&self, positions: &[usize]) -> f64 {
        let linear: f64 = positions.iter().map(|&i| self.linear[i]).sum();
        let mut quad = 0.0;
        for &i in positions {
            for &j in positions {
                quad += self.quadratic[(i, j)];
            }
        }
        linear + quad
    }

    /// Relaxed objective w^T v + w^T B w.
    pub fn relaxed_objective(&self, w: &[f64]) -> f64 {
        let mut value = 0.0;
        for i in 0..self.n() {
            value += w[i] * self.linear[i];
            for j in 0..self.n() {
                value += w[i] * self.quadratic[(i, j)] * w[j];
            }
        }
        value
    }
}

/// Build the quadratic form of the second-order objective.
pub fn build_quadratic(fit: &OlsFit, target: &TargetFunction) -> QuadraticForm {
    let v = influence_estimates(fit, target);
    let w = &fit.gram_inverse * target.gradient();
    let n = fit.n();
    // a_i = grad^T N^-1 x_i and b_ij = a_i h_ij r_j with the cross-leverage
    // h_ij = x_i^T N^-1 x_j; anything weaker breaks the identity with Q_-S
    let a: Vec<f64> = (0..n)
        .map(|i| fit.dataset.x.row(i).transpose().dot(&w))
        .collect();
    let whitened = &fit.dataset.x * &fit.gram_inverse;
    let quadratic = DMatrix::from_fn(n, n, |i, j| {
        a[i] * whitened.row(i).dot(&fit.dataset.x.row(j)) * fit.residuals[j]
    });
    QuadraticForm {
        linear: v,
        quadratic,
        row_ids: fit.dataset.row_ids.clone(),
    }
}

/// Projected-gradient-ascent settings. `step = None` uses
/// 1 / (2 |B|_F + |v|_inf + 1e-12).
#[derive(Debug, Clone, Serialize)]
pub struct PgdConfig {
    pub iters: usize,
    pub step: Option<f64>,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for PgdConfig {
    fn default() -> Self {
        PgdConfig {
            iters: 500,
            step: None,
            restarts: 8,
            seed: 0,
        }
    }
}

/// Euclidean projection onto {w in [0,1]^n : sum w <= k} by sort-based
/// water-filling over the clip breakpoints.
pub fn project_capped_simplex(w: &mut [f64], k: usize) {
    let clipped_sum: f64 = w.iter().map(|v| v.clamp(0.0, 1.0)).sum();
    if clipped_sum <= k as f64 {
        for v in w.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        return;
    }
    let f = |tau: f64, w: &[f64]| -> f64 { w.iter().map(|v| (v - tau).clamp(0.0, 1.0)).sum() };
    let mut bps: Vec<f64> = w
        .iter()
        .flat_map(|&v| [v - 1.0, v])
        .filter(|&b| b > 0.0)
        .collect();
    bps.push(0.0);
    bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bps.dedup();
    let target = k as f64;
    // first breakpoint where the budget is met; f is piecewise linear and
    // nonincreasing in tau
    let hi_idx = bps
        .iter()
        .position(|&b| f(b, w) <= target)
        .unwrap_or(bps.len() - 1);
    let (lo, hi) = if hi_idx == 0 {
        (0.0, bps[0])
    } else {
        (bps[hi_idx - 1], bps[hi_idx])
    };
    let (flo, fhi) = (f(lo, w), f(hi, w));
    let tau = if (flo - fhi).abs() < 1e-15 {
        hi
    } else {
        lo + (flo - target) * (hi - lo) / (flo - fhi)
    };
    for v in w.iter_mut() {
        *v = (*v - tau).clamp(0.0, 1.0);
    }
}

/// Solve the relaxed quadratic objective by projected gradient ascent with
/// random restarts, round the best iterate of each restart to its top-k
/// support, and keep the rounding with the best exact indicator objective.
/// `warm_start` adds one deterministic start at the given indicator.
pub fn select_quadratic_pgd(
    q: &QuadraticForm,
    k: usize,
    cfg: &PgdConfig,
    warm_start: Option<&[usize]>,
) -> Result<SubsetTrace> {
    if k == 0 {
        return Err(MissError::InvalidConfig("k must be >= 1".into()));
    }
    if cfg.iters == 0 {
        return Err(MissError::InvalidConfig("iters must be >= 1".into()));
    }
    let n = q.n();
    let frob = q.quadratic.iter().map(|b| b * b).sum::<f64>().sqrt();
    let vinf = q.linear.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let step = cfg.step.unwrap_or(1.0 / (2.0 * frob + vinf + 1e-12));
    let sym = &q.quadratic + q.quadratic.transpose();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    {
        let mut w = vec![0.0; n];
        for &i in warm_start.unwrap_or(&top_k_positive(
            &q.linear,
            &q.row_ids,
            k,
        )) {
            w[i] = 1.0;
        }
        starts.push(w);
    }
    for _ in 0..cfg.restarts {
        let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        project_capped_simplex(&mut w, k);
        starts.push(w);
    }

    let mut best: Option<(f64, Vec<usize>)> = None;
    for start in starts {
        let mut w = start;
        let mut best_relaxed = (q.relaxed_objective(&w), w.clone());
        for _ in 0..cfg.iters {
            let grad: Vec<f64> = (0..n)
                .map(|i| {
                    q.linear[i] + (0..n).map(|j| sym[(i, j)] * w[j]).sum::<f64>()
                })
                .collect();
            for i in 0..n {
                w[i] += step * grad[i];
            }
            project_capped_simplex(&mut w, k);
            let value = q.relaxed_objective(&w);
            if value > best_relaxed.0 {
                best_relaxed = (value, w.clone());
            }
        }
        // round: top-k coordinates of the best relaxed iterate
        let iterate = best_relaxed.1;
        let mut order: Vec<usize> = (0..n).filter(|&i| iterate[i] > 1e-12).collect();
        order.sort_by(|&a, &b| {
            iterate[b]
                .partial_cmp(&iterate[a])
                .unwrap()
                .then(q.row_ids[a].cmp(&q.row_ids[b]))
        });
        order.truncate(k);
        order.sort_unstable();
        let value = q.indicator_objective(&order);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, order));
        }
    }

    let (value, positions) = best.unwrap();
    let mut trace = SubsetTrace::new("pgd", k);
    trace.selected = positions.iter().map(|&i| q.row_ids[i]).collect();
    trace.value_second_order = Some(value);
    trace.value_first_order = Some(positions.iter().map(|&i| q.linear[i]).sum());
    if trace.selected.len() < k {
        trace.stop("relaxation support smaller than k");
    }
    Ok(trace)
}

/// Scan pairs for a submodularity violation b_ij + b_ji > 0. All pairs are
/// checked when their count fits in `trials`; otherwise `trials` random
/// pairs are sampled. Returns the first witness found.
pub fn check_submodular(
    q: &QuadraticForm,
    trials: usize,
    seed: u64,
) -> Result<Option<(usize, usize, f64)>> {
    if trials == 0 {
        return Err(MissError::InvalidConfig("trials must be >= 1".into()));
    }
    let n = q.n();
    let total_pairs = n * n.saturating_sub(1) / 2;
    let witness = |i: usize, j: usize| -> Option<(usize, usize, f64)> {
        let s = q.quadratic[(i, j)] + q.quadratic[(j, i)];
        (s > 0.0).then_some((i, j, s))
    };
    if total_pairs <= trials {
        for i in 0..n {
            for j in i + 1..n {
                if let Some(w) = witness(i, j) {
                    return Ok(Some(w));
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..trials {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i == j {
                continue;
            }
            if let Some(w) = witness(i.min(j), i.max(j)) {
                return Ok(Some(w));
            }
        }
    }
    Ok(None)
}

/// Fill the exact/first-order/second-order values of a trace from an OLS fit
/// over the trace's dataset.
pub fn annotate_ols(trace: &mut SubsetTrace, fit: &OlsFit, target: &TargetFunction) -> Result<()> {
    let positions: Vec<usize> = trace
        .selected
        .iter()
        .map(|&id| {
            fit.dataset
                .position_of(id)
                .ok_or(MissError::InvalidIndex(id as usize))
        })
        .collect::<Result<_>>()?;
    trace.value_exact = Some(actual_effect_exact(fit, &positions, target)?);
    let v = influence_estimates(fit, target);
    trace.value_first_order = Some(positions.iter().map(|&i| v[i]).sum());
    trace.value_second_order = Some(second_order_effect(fit, &positions, target)?);
    Ok(())
}

/// Logistic counterpart of [`annotate_ols`]; the exact value comes from a
/// warm-started refit.
pub fn annotate_logistic(
    trace: &mut SubsetTrace,
    fit: &crate::glm::GlmFit,
    target: &TargetFunction,
) -> Result<()> {
    let positions: Vec<usize> = trace
        .selected
        .iter()
        .map(|&id| {
            fit.dataset
                .position_of(id)
                .ok_or(MissError::InvalidIndex(id as usize))
        })
        .collect::<Result<_>>()?;
    trace.value_exact = Some(actual_effect_refit(fit, &positions, target)?);
    let scores = influence_estimates_general(fit, target);
    trace.value_first_order = Some(positions.iter().map(|&i| scores[i]).sum());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::random_design;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

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
    fn zam_top_k_and_empty() {
        let ids = [0u64, 1, 2];
        let trace = select_zam(&[3.0, 1.0, 2.0], &ids, 2);
        assert_eq!(trace.selected, vec![0, 2]);
        assert!(!trace.stopped_early);
        assert_abs_diff_eq!(trace.value_first_order.unwrap(), 5.0);

        let trace = select_zam(&[-1.0, 0.0, -2.0], &ids, 2);
        assert!(trace.selected.is_empty());
        assert!(trace.stopped_early);
    }

    #[test]
    fn zam_tie_break_lowest_row_id() {
        let trace = select_zam(&[1.0, 2.0, 2.0, 1.0], &[7, 5, 3, 1], 1);
        assert_eq!(trace.selected, vec![3]);
    }

    #[test]
    fn lags_sorts_by_individual_effect() {
        let (fit, target) = seeded_instance(10, 3, 31);
        let a = individual_effects(&fit, &target).unwrap();
        let trace = select_lags(&fit, &target, 3).unwrap();
        let expected = top_k_positive(&a, &fit.dataset.row_ids, 3);
        assert_eq!(
            trace.selected,
            expected
                .iter()
                .map(|&i| fit.dataset.row_ids[i])
                .collect::<Vec<_>>()
        );
        // positive-only rule
        for &id in &trace.selected {
            let pos = fit.dataset.position_of(id).unwrap();
            assert!(a[pos] > 0.0);
        }
    }

    #[test]
    fn lags_single_positive_score() {
        // one dominant positive residual row; others fit a line exactly
        let x = random_design(8, 2, 33, true);
        let theta = DVector::from_vec(vec![1.0, 2.0]);
        let mut y = &x * &theta;
        // deflating y[4] gives row 4 a large positive residual (residuals
        // are fitted minus observed), so removing it raises the prediction
        // at its own location
        y[4] -= 5.0;
        let fit = fit_ols(&Dataset::new(x, y, true).unwrap(), 0.0).unwrap();
        let target = TargetFunction::linear(fit.dataset.row(4));
        let trace = select_lags(&fit, &target, 3).unwrap();
        assert_eq!(trace.selected.first(), Some(&4));
    }

    #[test]
    fn adaptive_one_shot_equals_lags() {
        let (fit, target) = seeded_instance(12, 3, 35);
        let k = 3;
        let lags = select_lags(&fit, &target, k).unwrap();
        let adaptive = select_adaptive(
            &fit.dataset,
            &target,
            k,
            k,
            Scoring::ExactIndividual,
            ModelKind::Ols,
            0.0,
        )
        .unwrap();
        assert_eq!(
            lags.selected.iter().copied().sorted().collect::<Vec<_>>(),
            adaptive.selected.iter().copied().sorted().collect::<Vec<_>>()
        );
    }

    #[test]
    fn adaptive_step_one_maximizes_each_round() {
        let (fit, target) = seeded_instance(14, 3, 37);
        let trace = select_adaptive(
            &fit.dataset,
            &target,
            4,
            1,
            Scoring::ExactIndividual,
            ModelKind::Ols,
            0.0,
        )
        .unwrap();
        for (step, scores) in trace.step_scores.iter().enumerate() {
            if step >= trace.selected.len() {
                break;
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            // the chosen row had the maximal positive score in its round
            assert!(max > 0.0);
            let chosen_score = scores
                .iter()
                .cloned()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .1;
            assert_abs_diff_eq!(chosen_score, max);
        }
    }

    #[test]
    fn brute_k0_and_k1() {
        let (fit, target) = seeded_instance(10, 3, 39);
        let trace = select_brute(&fit.dataset, &target, 0, 25, ModelKind::Ols, 0.0).unwrap();
        assert!(trace.selected.is_empty());
        assert_eq!(trace.value_exact, Some(0.0));

        let trace = select_brute(&fit.dataset, &target, 1, 25, ModelKind::Ols, 0.0).unwrap();
        let a = individual_effects(&fit, &target).unwrap();
        let best = (0..10).max_by(|&i, &j| a[i].total_cmp(&a[j])).unwrap();
        if a[best] > 0.0 {
            assert_eq!(trace.selected, vec![fit.dataset.row_ids[best]]);
            assert_abs_diff_eq!(trace.value_exact.unwrap(), a[best], epsilon = 1e-12);
        } else {
            assert!(trace.selected.is_empty());
        }
    }

    #[test]
    fn brute_agrees_with_refit_enumeration() {
        let (fit, target) = seeded_instance(12, 2, 41);
        let trace = select_brute(&fit.dataset, &target, 3, 25, ModelKind::Ols, 0.0).unwrap();
        // oracle: enumerate with from-scratch refits
        let phi0 = target.eval(&fit.params).unwrap();
        let mut best = (0.0f64, Vec::<usize>::new());
        for size in 1..=3usize {
            for s in (0..12).combinations(size) {
                let sub = fit.dataset.remove_positions(&s).unwrap();
                let refit = fit_ols(&sub, 0.0).unwrap();
                let value = target.eval(&refit.params).unwrap() - phi0;
                if value > best.0 {
                    best = (value, s);
                }
            }
        }
        assert!((trace.value_exact.unwrap() - best.0).abs() < 1e-9);
        assert_eq!(
            trace.selected,
            best.1
                .iter()
                .map(|&i| fit.dataset.row_ids[i])
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn brute_cap_enforced() {
        let (fit, target) = seeded_instance(10, 2, 43);
        assert!(matches!(
            select_brute(&fit.dataset, &target, 2, 5, ModelKind::Ols, 0.0),
            Err(MissError::BruteCapExceeded { .. })
        ));
    }

    #[test]
    fn quadratic_indicator_matches_second_order() {
        let (fit, target) = seeded_instance(11, 3, 45);
        let q = build_quadratic(&fit, &target);
        for s in [vec![2usize], vec![0, 6], vec![1, 4, 9]] {
            let q_val = q.indicator_objective(&s);
            let direct = second_order_effect(&fit, &s, &target).unwrap();
            assert!((q_val - direct).abs() < 1e-10, "S = {s:?}");
        }
        // singleton: v_i + b_ii
        let i = 3usize;
        assert_abs_diff_eq!(
            q.indicator_objective(&[i]),
            q.linear[i] + q.quadratic[(i, i)],
            epsilon = 1e-12
        );
    }

    #[test]
    fn quadratic_zero_residuals() {
        let x = random_design(8, 3, 47, true);
        let theta = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let y = &x * &theta;
        let fit = fit_ols(&Dataset::new(x, y, true).unwrap(), 0.0).unwrap();
        let target = TargetFunction::linear(DVector::from_vec(vec![1.0, 0.0, 1.0]));
        let q = build_quadratic(&fit, &target);
        assert!(q.linear.iter().all(|v| v.abs() < 1e-10));
        assert!(q.quadratic.amax() < 1e-10);
    }

    #[test]
    fn projection_properties() {
        let mut w = vec![0.5, 0.2, 0.1];
        project_capped_simplex(&mut w, 2);
        assert_eq!(w, vec![0.5, 0.2, 0.1]); // already feasible

        let mut w = vec![2.0, 1.5, -0.5, 0.7];
        project_capped_simplex(&mut w, 2);
        let sum: f64 = w.iter().sum();
        assert!(sum <= 2.0 + 1e-9);
        assert!(w.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
        // order preserved
        assert!(w[0] >= w[1] && w[1] >= w[3] && w[3] >= w[2]);
    }

    #[test]
    fn pgd_linear_objective_recovers_top_k() {
        // B = 0: the relaxation is linear, so PGD must recover top-k of v
        let n = 8;
        let v = vec![0.9, -0.2, 3.0, 1.1, 0.5, 2.2, -1.0, 0.4];
        let q = QuadraticForm {
            linear: v.clone(),
            quadratic: DMatrix::zeros(n, n),
            row_ids: (0..n as u64).collect(),
        };
        let trace = select_quadratic_pgd(&q, 3, &PgdConfig::default(), None).unwrap();
        let mut selected = trace.selected.clone();
        selected.sort_unstable();
        assert_eq!(selected, vec![2, 3, 5]);
    }

    #[test]
    fn pgd_beats_or_matches_greedy_indicator() {
        let (fit, target) = seeded_instance(16, 3, 49);
        let q = build_quadratic(&fit, &target);
        let lags = select_lags(&fit, &target, 4).unwrap();
        let lags_positions: Vec<usize> = lags
            .selected
            .iter()
            .map(|&id| fit.dataset.position_of(id).unwrap())
            .collect();
        let cfg = PgdConfig {
            restarts: 4,
            ..PgdConfig::default()
        };
        let trace = select_quadratic_pgd(&q, 4, &cfg, Some(&lags_positions)).unwrap();
        assert!(
            trace.value_second_order.unwrap() >= q.indicator_objective(&lags_positions) - 1e-12
        );
    }

    #[test]
    fn submodular_trivial_cases() {
        let n = 5;
        let q = QuadraticForm {
            linear: vec![0.0; n],
            quadratic: DMatrix::zeros(n, n),
            row_ids: (0..n as u64).collect(),
        };
        assert!(check_submodular(&q, 100, 0).unwrap().is_none());

        let mut b = DMatrix::zeros(n, n);
        b[(1, 2)] = 1.0;
        b[(2, 1)] = 1.0;
        let q = QuadraticForm {
            linear: vec![0.0; n],
            quadratic: b,
            row_ids: (0..n as u64).collect(),
        };
        let (i, j, s) = check_submodular(&q, 100, 0).unwrap().unwrap();
        assert_eq!((i, j), (1, 2));
        assert_abs_diff_eq!(s, 2.0);
    }
}
