//! Experiment driver: runs selector families over grids of test points and
//! budgets, scores every selection by its exact actual effect, and emits
//! machine-readable reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::effects::{influence_estimates, TargetFunction};
use crate::error::{MissError, Result};
use crate::glm::{actual_effect_refit, fit_logistic, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::ols::fit_ols;
use crate::selectors::{
    build_quadratic, select_adaptive, select_brute, select_lags, select_quadratic_pgd, select_zam,
    ModelKind, PgdConfig, Scoring, SubsetTrace,
};

/// Selector family plus its per-run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Zam,
    Lags,
    Adaptive { step: usize },
    Pgd,
    Brute,
}

impl Algorithm {
    /// Stable name used as a report key and in CLI output.
    pub fn name(&self) -> String {
        match self {
            Algorithm::Zam => "zam".into(),
            Algorithm::Lags => "lags".into(),
            Algorithm::Adaptive { step } => {
                if *step == 1 {
                    "adaptive".into()
                } else {
                    format!("adaptive-{step}")
                }
            }
            Algorithm::Pgd => "pgd".into(),
            Algorithm::Brute => "brute".into(),
        }
    }

    pub fn parse(s: &str, step: usize) -> Option<Algorithm> {
        match s {
            "zam" => Some(Algorithm::Zam),
            "lags" => Some(Algorithm::Lags),
            "adaptive" => Some(Algorithm::Adaptive { step }),
            "pgd" => Some(Algorithm::Pgd),
            "brute" => Some(Algorithm::Brute),
            _ => None,
        }
    }
}

/// Everything the evaluation ran with, echoed into the report.
#[derive(Debug, Clone, Serialize)]
pub struct EvalConfig {
    pub model: ModelKind,
    pub algorithms: Vec<String>,
    pub ks: Vec<usize>,
    pub n_train: usize,
    pub dim: usize,
    pub n_test_points: usize,
    pub ridge: f64,
    pub seed: u64,
    pub brute_cap: usize,
}

/// One (test point, algorithm, k) evaluation: the selection and its exact
/// actual effect, or the error that prevented it.
#[derive(Debug, Clone, Serialize)]
pub struct EvalCell {
    pub test_point: usize,
    pub algorithm: String,
    pub k: usize,
    pub selected: Vec<u64>,
    pub effect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Aggregated evaluation results. `per_k` holds mean actual effects,
/// `winning_rate` the pairwise fraction of test points where one algorithm's
/// effect beat the other's (ties split evenly).
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub generated_at: u64,
    pub config_echo: EvalConfig,
    pub per_k: BTreeMap<usize, BTreeMap<String, f64>>,
    pub winning_rate: BTreeMap<usize, BTreeMap<String, f64>>,
    pub per_test_point: Vec<EvalCell>,
    pub exclusions: usize,
}

/// Effects equal after rounding to this grain count as ties.
const TIE_GRAIN: f64 = 1e-12;

fn round_for_tie(v: f64) -> f64 {
    (v / TIE_GRAIN).round() * TIE_GRAIN
}

fn run_algorithm(
    train: &Dataset,
    target: &TargetFunction,
    algorithm: Algorithm,
    k: usize,
    model: ModelKind,
    ridge: f64,
    seed: u64,
    brute_cap: usize,
) -> Result<SubsetTrace> {
    match algorithm {
        Algorithm::Zam => {
            let scores = match model {
                ModelKind::Ols => influence_estimates(&fit_ols(train, ridge)?, target),
                ModelKind::Logistic => crate::glm::influence_estimates_general(
                    &fit_logistic(train, ridge, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
                    target,
                ),
            };
            Ok(select_zam(&scores, &train.row_ids, k))
        }
        Algorithm::Lags => match model {
            ModelKind::Ols => select_lags(&fit_ols(train, ridge)?, target, k),
            // per-candidate refits are the logistic analogue of exact
            // individual effects
            ModelKind::Logistic => {
                select_adaptive(train, target, k, k, Scoring::ExactIndividual, model, ridge)
            }
        },
        Algorithm::Adaptive { step } => {
            select_adaptive(train, target, k, step, Scoring::ExactIndividual, model, ridge)
        }
        Algorithm::Pgd => match model {
            ModelKind::Ols => {
                let fit = fit_ols(train, ridge)?;
                let q = build_quadratic(&fit, target);
                let cfg = PgdConfig {
                    seed,
                    ..PgdConfig::default()
                };
                select_quadratic_pgd(&q, k, &cfg, None)
            }
            ModelKind::Logistic => Err(MissError::InvalidConfig(
                "the quadratic relaxation is only defined for least squares".into(),
            )),
        },
        Algorithm::Brute => select_brute(train, target, k, brute_cap, model, ridge),
    }
}

fn exact_effect(
    train: &Dataset,
    target: &TargetFunction,
    selected: &[u64],
    model: ModelKind,
    ridge: f64,
) -> Result<f64> {
    let positions: Vec<usize> = selected
        .iter()
        .map(|&id| {
            train
                .position_of(id)
                .ok_or(MissError::InvalidIndex(id as usize))
        })
        .collect::<Result<_>>()?;
    match model {
        ModelKind::Ols => {
            crate::effects::actual_effect_exact(&fit_ols(train, ridge)?, &positions, target)
        }
        ModelKind::Logistic => actual_effect_refit(
            &fit_logistic(train, ridge, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
            &positions,
            target,
        ),
    }
}

/// Run every (test point, algorithm, k) cell, compute exact actual effects
/// of each selection, and aggregate means and pairwise winning rates.
/// Cells whose selector or refit fails are recorded with their error and
/// excluded from the aggregates.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    train: &Dataset,
    test_points: &DMatrix<f64>,
    algorithms: &[Algorithm],
    ks: &[usize],
    model: ModelKind,
    ridge: f64,
    seed: u64,
    brute_cap: usize,
) -> Result<EvalReport> {
    if algorithms.is_empty() {
        return Err(MissError::InvalidConfig(
            "at least one algorithm is required".into(),
        ));
    }
    if test_points.ncols() != train.dim() {
        return Err(MissError::InvalidConfig(format!(
            "test points have {} columns, expected {}",
            test_points.ncols(),
            train.dim()
        )));
    }
    for &k in ks {
        if k >= train.n() {
            return Err(MissError::InvalidConfig(format!(
                "budget k = {k} must be < n = {}",
                train.n()
            )));
        }
    }

    let names: Vec<String> = algorithms.iter().map(|a| a.name()).collect();
    let mut tasks: Vec<(usize, usize, usize)> = Vec::new();
    for t in 0..test_points.nrows() {
        for (ai, _) in algorithms.iter().enumerate() {
            for (ki, _) in ks.iter().enumerate() {
                tasks.push((t, ai, ki));
            }
        }
    }
    // cells are independent; indexed collect keeps the output order fixed
    let per_test_point: Vec<EvalCell> = tasks
        .par_iter()
        .map(|&(t, ai, ki)| {
            let x_test: DVector<f64> = test_points.row(t).transpose();
            let target = match model {
                ModelKind::Ols => TargetFunction::linear(x_test),
                ModelKind::Logistic => TargetFunction::LogisticLogit {
                    x_test,
                    positive_class: true,
                },
            };
            let k = ks[ki];
            let outcome = run_algorithm(
                train,
                &target,
                algorithms[ai],
                k,
                model,
                ridge,
                seed,
                brute_cap,
            )
            .and_then(|trace| {
                let effect = exact_effect(train, &target, &trace.selected, model, ridge)?;
                Ok((trace.selected, effect))
            });
            match outcome {
                Ok((selected, effect)) => EvalCell {
                    test_point: t,
                    algorithm: names[ai].clone(),
                    k,
                    selected,
                    effect: Some(effect),
                    error: None,
                },
                Err(e) => EvalCell {
                    test_point: t,
                    algorithm: names[ai].clone(),
                    k,
                    selected: Vec::new(),
                    effect: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let exclusions = per_test_point.iter().filter(|c| c.effect.is_none()).count();

    let mut per_k: BTreeMap<usize, BTreeMap<String, f64>> = BTreeMap::new();
    for &k in ks {
        let mut by_alg = BTreeMap::new();
        for name in &names {
            let vals: Vec<f64> = per_test_point
                .iter()
                .filter(|c| c.k == k && &c.algorithm == name)
                .filter_map(|c| c.effect)
                .collect();
            if !vals.is_empty() {
                by_alg.insert(name.clone(), vals.iter().sum::<f64>() / vals.len() as f64);
            }
        }
        per_k.insert(k, by_alg);
    }

    let mut winning_rate: BTreeMap<usize, BTreeMap<String, f64>> = BTreeMap::new();
    for &k in ks {
        let mut table = BTreeMap::new();
        for a in 0..names.len() {
            for b in 0..names.len() {
                if a == b {
                    continue;
                }
                let mut wins = 0.0;
                let mut total = 0.0;
                for t in 0..test_points.nrows() {
                    let get = |name: &str| {
                        per_test_point
                            .iter()
                            .find(|c| c.test_point == t && c.k == k && c.algorithm == name)
                            .and_then(|c| c.effect)
                    };
                    let (Some(ea), Some(eb)) = (get(&names[a]), get(&names[b])) else {
                        continue;
                    };
                    total += 1.0;
                    let (ra, rb) = (round_for_tie(ea), round_for_tie(eb));
                    if ra > rb {
                        wins += 1.0;
                    } else if ra == rb {
                        wins += 0.5;
                    }
                }
                if total > 0.0 {
                    table.insert(format!("{}_vs_{}", names[a], names[b]), wins / total);
                }
            }
        }
        winning_rate.insert(k, table);
    }

    Ok(EvalReport {
        generated_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config_echo: EvalConfig {
            model,
            algorithms: names,
            ks: ks.to_vec(),
            n_train: train.n(),
            dim: train.dim(),
            n_test_points: test_points.nrows(),
            ridge,
            seed,
            brute_cap,
        },
        per_k,
        winning_rate,
        per_test_point,
        exclusions,
    })
}

/// Report output formats. JSON is canonical; CSV flattens the per-cell
/// effects for plotting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub fn report_to_json(report: &EvalReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

pub fn report_to_csv(report: &EvalReport) -> String {
    let mut out = String::from("test_point,algorithm,k,effect\n");
    for cell in &report.per_test_point {
        if let Some(effect) = cell.effect {
            out.push_str(&format!(
                "{},{},{},{:?}\n",
                cell.test_point, cell.algorithm, cell.k, effect
            ));
        }
    }
    out
}

pub fn emit_report(report: &EvalReport, format: ReportFormat, path: &Path) -> Result<()> {
    let body = match format {
        ReportFormat::Json => report_to_json(report),
        ReportFormat::Csv => report_to_csv(report),
    };
    let mut f = std::fs::File::create(path)?;
    f.write_all(body.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::random_design;
    use approx::assert_abs_diff_eq;

    fn small_instance(seed: u64) -> (Dataset, DMatrix<f64>) {
        let n = 14;
        let x = random_design(n, 3, seed, true);
        let theta = DVector::from_vec(vec![0.5, 1.0, -0.7]);
        let mut y = &x * &theta;
        for i in 0..n {
            y[i] += ((i * 7 + 3) % 11) as f64 / 11.0 - 0.5;
        }
        let ds = Dataset::new(x, y, true).unwrap();
        let tests = random_design(3, 3, seed + 1, true);
        (ds, tests)
    }

    #[test]
    fn single_algorithm_empty_winning_rate() {
        let (ds, tests) = small_instance(3);
        let report = evaluate(
            &ds,
            &tests,
            &[Algorithm::Lags],
            &[1, 2],
            ModelKind::Ols,
            0.0,
            0,
            25,
        )
        .unwrap();
        for table in report.winning_rate.values() {
            assert!(table.is_empty());
        }
        assert_eq!(report.exclusions, 0);
    }

    #[test]
    fn identical_algorithms_tie_at_half() {
        let (ds, tests) = small_instance(5);
        let report = evaluate(
            &ds,
            &tests,
            &[Algorithm::Lags, Algorithm::Lags],
            &[2],
            ModelKind::Ols,
            0.0,
            0,
            25,
        )
        .unwrap();
        for table in report.winning_rate.values() {
            for rate in table.values() {
                assert_abs_diff_eq!(*rate, 0.5);
            }
        }
    }

    #[test]
    fn winning_rates_sum_to_one() {
        let (ds, tests) = small_instance(7);
        let report = evaluate(
            &ds,
            &tests,
            &[Algorithm::Zam, Algorithm::Lags, Algorithm::Brute],
            &[1, 2],
            ModelKind::Ols,
            0.0,
            0,
            25,
        )
        .unwrap();
        for table in report.winning_rate.values() {
            for (key, rate) in table {
                let (a, b) = key.split_once("_vs_").unwrap();
                let mirrored = table[&format!("{b}_vs_{a}")];
                assert_abs_diff_eq!(rate + mirrored, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn per_k_mean_matches_cells() {
        let (ds, tests) = small_instance(9);
        let report = evaluate(
            &ds,
            &tests,
            &[Algorithm::Lags],
            &[2],
            ModelKind::Ols,
            0.0,
            0,
            25,
        )
        .unwrap();
        let cells: Vec<f64> = report
            .per_test_point
            .iter()
            .filter(|c| c.k == 2)
            .filter_map(|c| c.effect)
            .collect();
        let mean = cells.iter().sum::<f64>() / cells.len() as f64;
        assert_abs_diff_eq!(report.per_k[&2]["lags"], mean, epsilon = 1e-12);
    }

    #[test]
    fn brute_mean_monotone_in_k() {
        let (ds, tests) = small_instance(11);
        let report = evaluate(
            &ds,
            &tests,
            &[Algorithm::Brute],
            &[1, 2, 3],
            ModelKind::Ols,
            0.0,
            0,
            25,
        )
        .unwrap();
        // supersets can only help the maximum
        assert!(report.per_k[&1]["brute"] <= report.per_k[&2]["brute"] + 1e-12);
        assert!(report.per_k[&2]["brute"] <= report.per_k[&3]["brute"] + 1e-12);
    }

    #[test]
    fn brute_dominates_heuristics_per_cell() {
        let (ds, tests) = small_instance(13);
        let report = evaluate(
            &ds,
            &tests,
            &[Algorithm::Zam, Algorithm::Lags, Algorithm::Pgd, Algorithm::Brute],
            &[2],
            ModelKind::Ols,
            0.0,
            0,
            25,
        )
        .unwrap();
        for t in 0..tests.nrows() {
            let get = |name: &str| {
                report
                    .per_test_point
                    .iter()
                    .find(|c| c.test_point == t && c.algorithm == name)
                    .unwrap()
                    .effect
                    .unwrap()
            };
            let brute = get("brute");
            for name in ["zam", "lags", "pgd"] {
                assert!(get(name) <= brute + 1e-9, "{name} beat brute at {t}");
            }
        }
    }

    #[test]
    fn csv_row_count_and_json_round_trip() {
        let (ds, tests) = small_instance(15);
        let report = evaluate(
            &ds,
            &tests,
            &[Algorithm::Zam, Algorithm::Lags],
            &[1, 2],
            ModelKind::Ols,
            0.0,
            0,
            25,
        )
        .unwrap();
        let csv = report_to_csv(&report);
        let rows = csv.lines().count() - 1;
        assert_eq!(rows, 3 * 2 * 2 - report.exclusions);

        let json = report_to_json(&report);
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_abs_diff_eq!(
            parsed["per_k"]["1"]["lags"].as_f64().unwrap(),
            report.per_k[&1]["lags"],
            epsilon = 1e-12
        );
        assert_eq!(parsed["exclusions"].as_u64().unwrap(), 0);
    }

    #[test]
    fn empty_ks_valid() {
        let (ds, tests) = small_instance(17);
        let report = evaluate(
            &ds,
            &tests,
            &[Algorithm::Lags],
            &[],
            ModelKind::Ols,
            0.0,
            0,
            25,
        )
        .unwrap();
        assert!(report.per_k.is_empty());
        assert!(report.per_test_point.is_empty());
    }

    #[test]
    fn parallel_matches_serial_order() {
        let (ds, tests) = small_instance(19);
        let run = || {
            let mut r = evaluate(
                &ds,
                &tests,
                &[Algorithm::Zam, Algorithm::Adaptive { step: 1 }],
                &[1, 2],
                ModelKind::Ols,
                0.0,
                0,
                25,
            )
            .unwrap();
            r.generated_at = 0;
            report_to_json(&r)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn logistic_evaluation_runs() {
        let n = 20;
        let x = random_design(n, 2, 21, true);
        let y = DVector::from_fn(n, |i, _| if x[(i, 1)] + ((i % 3) as f64 - 1.0) * 0.4 > 0.0 {
            1.0
        } else {
            0.0
        });
        let ds = Dataset::new(x, y, true).unwrap();
        let tests = random_design(2, 2, 22, true);
        let report = evaluate(
            &ds,
            &tests,
            &[Algorithm::Zam, Algorithm::Adaptive { step: 1 }],
            &[1, 2],
            ModelKind::Logistic,
            0.5,
            0,
            25,
        )
        .unwrap();
        assert_eq!(report.exclusions, 0);
        for cell in &report.per_test_point {
            assert!(cell.effect.unwrap().is_finite());
        }
    }
}
