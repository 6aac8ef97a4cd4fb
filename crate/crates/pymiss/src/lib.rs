//! Python bindings for the subset-removal toolkit: datasets, model fits,
//! effect computations, selectors, certificate search, and the evaluation
//! harness. Matrices cross the boundary as nested lists of floats; traces
//! and reports also serialize to JSON for downstream tooling.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use miss_core::counterexamples::{
    find_p_theorem31, find_p_theorem35, find_p_theorem36, reverify as reverify_instance,
    sample_base_design, verify_theorem42, CertifiedInstance, CrossSign, TheoremId,
};
use miss_core::dataset::{
    generate_cancellation_cluster, generate_label_process, load_csv, write_csv, ClusterConfig,
    SyntheticConfig,
};
use miss_core::effects::{
    actual_effect_exact, amplification_ratio, individual_effects, influence_estimates,
    neumann_effect, TargetFunction,
};
use miss_core::glm::{fit_logistic, influence_estimates_general, DEFAULT_MAX_ITER, DEFAULT_TOL};
use miss_core::harness::{evaluate, report_to_csv, report_to_json, Algorithm};
use miss_core::ols::fit_ols;
use miss_core::selectors::{
    annotate_logistic, annotate_ols, build_quadratic, check_submodular, select_adaptive,
    select_brute, select_lags, select_quadratic_pgd, select_zam, ModelKind, PgdConfig, Scoring,
};
use miss_core::{MissError, SubsetTrace};

fn py_err(e: MissError) -> PyErr {
    match e {
        MissError::InvalidConfig(_) | MissError::MissingTargetColumn(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn parse_model(model: &str) -> PyResult<ModelKind> {
    match model {
        "ols" => Ok(ModelKind::Ols),
        "logistic" => Ok(ModelKind::Logistic),
        other => Err(PyValueError::new_err(format!("unknown model {other:?}"))),
    }
}

fn target_for(kind: ModelKind, x_test: Vec<f64>) -> TargetFunction {
    let x_test = DVector::from_vec(x_test);
    match kind {
        ModelKind::Ols => TargetFunction::linear(x_test),
        ModelKind::Logistic => TargetFunction::LogisticLogit {
            x_test,
            positive_class: true,
        },
    }
}

/// A design matrix with targets and stable row ids.
#[pyclass(name = "Dataset", from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: miss_core::Dataset,
}

#[pymethods]
impl PyDataset {
    /// Build from a dense design and target vector. When `intercept` is
    /// true the first column of `x` is expected to be the intercept column.
    #[new]
    #[pyo3(signature = (x, y, intercept=true))]
    fn new(x: Vec<Vec<f64>>, y: Vec<f64>, intercept: bool) -> PyResult<Self> {
        let x = to_matrix(x)?;
        let y = DVector::from_vec(y);
        Ok(PyDataset {
            inner: miss_core::Dataset::new(x, y, intercept).map_err(py_err)?,
        })
    }

    /// Load a CSV with a header row; every non-target column becomes a
    /// covariate and an intercept column is prepended when requested.
    #[staticmethod]
    #[pyo3(signature = (path, target_col="y", intercept=true))]
    fn from_csv(path: &str, target_col: &str, intercept: bool) -> PyResult<Self> {
        Ok(PyDataset {
            inner: load_csv(path.as_ref(), target_col, intercept).map_err(py_err)?,
        })
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        write_csv(&self.inner, path.as_ref()).map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        from_matrix(&self.inner.x)
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y.iter().copied().collect()
    }

    #[getter]
    fn row_ids(&self) -> Vec<u64> {
        self.inner.row_ids.clone()
    }

    #[getter]
    fn intercept(&self) -> bool {
        self.inner.intercept
    }

    /// A copy with the given row positions removed; row ids are preserved.
    fn without(&self, positions: Vec<usize>) -> PyResult<Self> {
        Ok(PyDataset {
            inner: self.inner.remove_positions(&positions).map_err(py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, dim={}, intercept={})",
            self.inner.n(),
            self.inner.dim(),
            self.inner.intercept
        )
    }
}

/// A fitted least-squares model exposing leverage and residual queries.
#[pyclass(name = "OlsFit")]
struct PyOlsFit {
    inner: miss_core::OlsFit,
}

#[pymethods]
impl PyOlsFit {
    #[getter]
    fn params(&self) -> Vec<f64> {
        self.inner.params.iter().copied().collect()
    }

    /// Residuals in the yhat - y convention.
    #[getter]
    fn residuals(&self) -> Vec<f64> {
        self.inner.residuals.iter().copied().collect()
    }

    fn leverage(&self, i: usize) -> PyResult<f64> {
        self.inner.leverage(i).map_err(py_err)
    }

    fn leverages(&self) -> Vec<f64> {
        self.inner.leverages()
    }

    /// Parameters after exactly removing the rows at `positions`.
    fn params_without(&self, positions: Vec<usize>) -> PyResult<Vec<f64>> {
        let refit = self.inner.refit_without(&positions).map_err(py_err)?;
        Ok(refit.params.iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!("OlsFit(n={}, dim={})", self.inner.n(), self.inner.dim())
    }
}

/// A fitted logistic model.
#[pyclass(name = "LogisticFit")]
struct PyLogisticFit {
    inner: miss_core::GlmFit,
}

#[pymethods]
impl PyLogisticFit {
    #[getter]
    fn params(&self) -> Vec<f64> {
        self.inner.params.iter().copied().collect()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn grad_norm(&self) -> f64 {
        self.inner.grad_norm
    }

    fn __repr__(&self) -> String {
        format!(
            "LogisticFit(iterations={}, grad_norm={:e})",
            self.inner.iterations, self.inner.grad_norm
        )
    }
}

/// Record of one selection run.
#[pyclass(name = "Trace")]
struct PyTrace {
    inner: SubsetTrace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn algorithm(&self) -> String {
        self.inner.algorithm.clone()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    /// Selected row ids in selection order.
    #[getter]
    fn selected(&self) -> Vec<u64> {
        self.inner.selected.clone()
    }

    #[getter]
    fn step_scores(&self) -> Vec<Vec<f64>> {
        self.inner.step_scores.clone()
    }

    #[getter]
    fn value_exact(&self) -> Option<f64> {
        self.inner.value_exact
    }

    #[getter]
    fn value_first_order(&self) -> Option<f64> {
        self.inner.value_first_order
    }

    #[getter]
    fn value_second_order(&self) -> Option<f64> {
        self.inner.value_second_order
    }

    #[getter]
    fn stopped_early(&self) -> bool {
        self.inner.stopped_early
    }

    #[getter]
    fn stop_reason(&self) -> Option<String> {
        self.inner.stop_reason.clone()
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.inner).expect("trace serializes")
    }

    fn __repr__(&self) -> String {
        format!(
            "Trace(algorithm={:?}, k={}, selected={:?})",
            self.inner.algorithm, self.inner.k, self.inner.selected
        )
    }
}

/// A dataset that witnesses a failure mode, plus its re-runnable checks.
#[pyclass(name = "Certificate")]
struct PyCertificate {
    inner: CertifiedInstance,
}

#[pymethods]
impl PyCertificate {
    #[getter]
    fn theorem(&self) -> String {
        format!("{:?}", self.inner.certificate.theorem_id)
    }

    #[getter]
    fn p(&self) -> f64 {
        self.inner.p
    }

    #[getter]
    fn x_test(&self) -> Vec<f64> {
        self.inner.x_test.iter().copied().collect()
    }

    #[getter]
    fn dataset(&self) -> PyDataset {
        PyDataset {
            inner: self.inner.dataset.clone(),
        }
    }

    #[getter]
    fn digest(&self) -> String {
        format!("{:016x}", self.inner.certificate.dataset_digest)
    }

    /// (name, value, pass) for each certifying predicate.
    #[getter]
    fn checks(&self) -> Vec<(String, f64, bool)> {
        self.inner
            .certificate
            .checks
            .iter()
            .map(|c| (c.name.clone(), c.value, c.pass))
            .collect()
    }

    fn all_pass(&self) -> bool {
        self.inner.certificate.all_pass()
    }

    /// Recompute every check from the stored dataset and ratio; the digest
    /// must match for the result to be comparable.
    fn reverify(&self) -> PyResult<Vec<(String, f64, bool)>> {
        let cert = reverify_instance(&self.inner).map_err(py_err)?;
        Ok(cert
            .checks
            .iter()
            .map(|c| (c.name.clone(), c.value, c.pass))
            .collect())
    }

    fn to_json(&self) -> String {
        self.inner.certificate.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "Certificate(theorem={:?}, p={}, all_pass={})",
            self.inner.certificate.theorem_id,
            self.inner.p,
            self.inner.certificate.all_pass()
        )
    }
}

/// Fit least squares, or ridge regression when `ridge > 0`.
#[pyfunction(name = "fit_ols")]
#[pyo3(signature = (dataset, ridge=0.0))]
fn py_fit_ols(dataset: &PyDataset, ridge: f64) -> PyResult<PyOlsFit> {
    Ok(PyOlsFit {
        inner: fit_ols(&dataset.inner, ridge).map_err(py_err)?,
    })
}

/// Fit a logistic model by damped Newton iterations.
#[pyfunction(name = "fit_logistic")]
#[pyo3(signature = (dataset, ridge=0.0, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER))]
fn py_fit_logistic(
    dataset: &PyDataset,
    ridge: f64,
    tol: f64,
    max_iter: usize,
) -> PyResult<PyLogisticFit> {
    Ok(PyLogisticFit {
        inner: fit_logistic(&dataset.inner, ridge, tol, max_iter).map_err(py_err)?,
    })
}

/// First-order per-row influence estimates on the linear prediction at
/// `x_test` (full coordinates, intercept included when the model has one).
#[pyfunction(name = "influence")]
fn py_influence(fit: &PyOlsFit, x_test: Vec<f64>) -> Vec<f64> {
    let target = TargetFunction::linear(DVector::from_vec(x_test));
    influence_estimates(&fit.inner, &target)
}

/// First-order influence estimates on the logit at `x_test` for a logistic
/// fit.
#[pyfunction(name = "influence_logistic")]
fn py_influence_logistic(fit: &PyLogisticFit, x_test: Vec<f64>) -> Vec<f64> {
    let target = TargetFunction::LogisticLogit {
        x_test: DVector::from_vec(x_test),
        positive_class: true,
    };
    influence_estimates_general(&fit.inner, &target)
}

/// Exact single-row removal effects, one per row.
#[pyfunction(name = "individual_effects")]
fn py_individual_effects(fit: &PyOlsFit, x_test: Vec<f64>) -> PyResult<Vec<f64>> {
    let target = TargetFunction::linear(DVector::from_vec(x_test));
    individual_effects(&fit.inner, &target).map_err(py_err)
}

/// Exact change in the prediction at `x_test` after removing the rows at
/// `positions`, without refitting.
#[pyfunction(name = "actual_effect")]
fn py_actual_effect(fit: &PyOlsFit, positions: Vec<usize>, x_test: Vec<f64>) -> PyResult<f64> {
    let target = TargetFunction::linear(DVector::from_vec(x_test));
    actual_effect_exact(&fit.inner, &positions, &target).map_err(py_err)
}

/// Truncated-series approximation of the removal effect; order 1 is the sum
/// of influences, higher orders add powers of the subset hat matrix.
#[pyfunction(name = "series_effect")]
fn py_series_effect(
    fit: &PyOlsFit,
    positions: Vec<usize>,
    x_test: Vec<f64>,
    order: usize,
) -> PyResult<f64> {
    let target = TargetFunction::linear(DVector::from_vec(x_test));
    neumann_effect(&fit.inner, &positions, &target, order).map_err(py_err)
}

/// Group-over-single effect ratio for removing all `c` copies of a
/// duplicated row with per-copy leverage `h`.
#[pyfunction(name = "amplification_ratio")]
fn py_amplification_ratio(h: f64, c: usize) -> PyResult<f64> {
    amplification_ratio(h, c).map_err(py_err)
}

/// Run one selector and return its trace. `algo` is one of "zam", "lags",
/// "adaptive", "pgd", or "brute"; `x_test` uses full coordinates.
#[pyfunction(name = "select")]
#[pyo3(signature = (dataset, x_test, algo, k, model="ols", ridge=0.0, step=1, seed=0, brute_cap=25))]
#[allow(clippy::too_many_arguments)]
fn py_select(
    dataset: &PyDataset,
    x_test: Vec<f64>,
    algo: &str,
    k: usize,
    model: &str,
    ridge: f64,
    step: usize,
    seed: u64,
    brute_cap: usize,
) -> PyResult<PyTrace> {
    let ds = &dataset.inner;
    let kind = parse_model(model)?;
    let target = target_for(kind, x_test);
    let trace = match (algo, kind) {
        ("zam", ModelKind::Ols) => {
            let fit = fit_ols(ds, ridge).map_err(py_err)?;
            let scores = influence_estimates(&fit, &target);
            let mut t = select_zam(&scores, &ds.row_ids, k);
            annotate_ols(&mut t, &fit, &target).map_err(py_err)?;
            t
        }
        ("zam", ModelKind::Logistic) => {
            let fit = fit_logistic(ds, ridge, DEFAULT_TOL, DEFAULT_MAX_ITER).map_err(py_err)?;
            let scores = influence_estimates_general(&fit, &target);
            let mut t = select_zam(&scores, &ds.row_ids, k);
            annotate_logistic(&mut t, &fit, &target).map_err(py_err)?;
            t
        }
        ("lags", ModelKind::Ols) => {
            let fit = fit_ols(ds, ridge).map_err(py_err)?;
            select_lags(&fit, &target, k).map_err(py_err)?
        }
        ("lags", ModelKind::Logistic) => {
            let mut t = select_adaptive(ds, &target, k, k, Scoring::ExactIndividual, kind, ridge)
                .map_err(py_err)?;
            let fit = fit_logistic(ds, ridge, DEFAULT_TOL, DEFAULT_MAX_ITER).map_err(py_err)?;
            annotate_logistic(&mut t, &fit, &target).map_err(py_err)?;
            t
        }
        ("adaptive", _) => {
            let mut t =
                select_adaptive(ds, &target, k, step, Scoring::ExactIndividual, kind, ridge)
                    .map_err(py_err)?;
            match kind {
                ModelKind::Ols => {
                    annotate_ols(&mut t, &fit_ols(ds, ridge).map_err(py_err)?, &target)
                        .map_err(py_err)?;
                }
                ModelKind::Logistic => {
                    let fit =
                        fit_logistic(ds, ridge, DEFAULT_TOL, DEFAULT_MAX_ITER).map_err(py_err)?;
                    annotate_logistic(&mut t, &fit, &target).map_err(py_err)?;
                }
            }
            t
        }
        ("pgd", ModelKind::Ols) => {
            let fit = fit_ols(ds, ridge).map_err(py_err)?;
            let q = build_quadratic(&fit, &target);
            let cfg = PgdConfig {
                seed,
                ..PgdConfig::default()
            };
            let mut t = select_quadratic_pgd(&q, k, &cfg, None).map_err(py_err)?;
            annotate_ols(&mut t, &fit, &target).map_err(py_err)?;
            t
        }
        ("pgd", ModelKind::Logistic) => {
            return Err(PyValueError::new_err(
                "the quadratic relaxation is only defined for least squares",
            ))
        }
        ("brute", _) => {
            let mut t = select_brute(ds, &target, k, brute_cap, kind, ridge).map_err(py_err)?;
            match kind {
                ModelKind::Ols => {
                    annotate_ols(&mut t, &fit_ols(ds, ridge).map_err(py_err)?, &target)
                        .map_err(py_err)?;
                }
                ModelKind::Logistic => {
                    let fit =
                        fit_logistic(ds, ridge, DEFAULT_TOL, DEFAULT_MAX_ITER).map_err(py_err)?;
                    annotate_logistic(&mut t, &fit, &target).map_err(py_err)?;
                }
            }
            t
        }
        (other, _) => {
            return Err(PyValueError::new_err(format!(
                "unknown algorithm {other:?}"
            )))
        }
    };
    Ok(PyTrace { inner: trace })
}

/// Search for a pair (i, j) whose joint removal beats the sum of their
/// individual effects; returns (i, j, excess) or None.
#[pyfunction(name = "submodularity_witness")]
#[pyo3(signature = (dataset, x_test, ridge=0.0, trials=1000, seed=0))]
fn py_submodularity_witness(
    dataset: &PyDataset,
    x_test: Vec<f64>,
    ridge: f64,
    trials: usize,
    seed: u64,
) -> PyResult<Option<(usize, usize, f64)>> {
    let fit = fit_ols(&dataset.inner, ridge).map_err(py_err)?;
    let target = TargetFunction::linear(DVector::from_vec(x_test));
    let q = build_quadratic(&fit, &target);
    check_submodular(&q, trials, seed).map_err(py_err)
}

/// Search for a dataset certifying one of the known failure regimes:
/// "T31" (influence picks the wrong row), "T35" (duplicated-row
/// amplification), "T36" (pairwise cancellation), "T42" (adaptive greedy
/// recovers the optimum on the cancellation family).
#[pyfunction(name = "certify")]
#[pyo3(signature = (theorem, n=8, dim=3, eps=0.5, copies=3, seed=0))]
fn py_certify(
    theorem: &str,
    n: usize,
    dim: usize,
    eps: f64,
    copies: usize,
    seed: u64,
) -> PyResult<PyCertificate> {
    let id = TheoremId::parse(theorem)
        .ok_or_else(|| PyValueError::new_err(format!("unknown regime {theorem:?}")))?;
    let inst = match id {
        TheoremId::T31 => {
            let x = sample_base_design(n, dim, seed, CrossSign::Any).map_err(py_err)?;
            find_p_theorem31(&x, eps, seed).map_err(py_err)?
        }
        TheoremId::T35 => {
            let x = sample_base_design(n, dim, seed, CrossSign::Any).map_err(py_err)?;
            find_p_theorem35(&x, eps, copies, seed).map_err(py_err)?
        }
        TheoremId::T36 => {
            let x = sample_base_design(n, dim, seed, CrossSign::Negative).map_err(py_err)?;
            find_p_theorem36(&x, eps, seed).map_err(py_err)?
        }
        TheoremId::T42 => {
            let x = sample_base_design(n, dim, seed, CrossSign::Negative).map_err(py_err)?;
            let mut inst = find_p_theorem36(&x, eps, seed).map_err(py_err)?;
            inst.certificate = verify_theorem42(&inst).map_err(py_err)?;
            inst
        }
    };
    Ok(PyCertificate { inner: inst })
}

/// Generate the clustered cancellation benchmark; returns the training
/// dataset and the test points (full coordinates, no intercept column).
#[pyfunction(name = "synth_cluster")]
#[pyo3(signature = (n, dim, cluster_size, noise_var=0.2, n_test=10, seed=0))]
fn py_synth_cluster(
    n: usize,
    dim: usize,
    cluster_size: usize,
    noise_var: f64,
    n_test: usize,
    seed: u64,
) -> PyResult<(PyDataset, Vec<Vec<f64>>)> {
    let cfg = ClusterConfig {
        n,
        d: dim,
        cluster_size,
        noise_var,
        n_test,
        seed,
    };
    let (train, tests) = generate_cancellation_cluster(&cfg).map_err(py_err)?;
    Ok((PyDataset { inner: train }, from_matrix(&tests)))
}

/// Generate the two-endpoint label process on a sampled base design;
/// returns the training dataset and the intended test point.
#[pyfunction(name = "synth_endpoints")]
#[pyo3(signature = (n, dim, eps=0.5, ratio=2.0, copies=1, seed=0))]
fn py_synth_endpoints(
    n: usize,
    dim: usize,
    eps: f64,
    ratio: f64,
    copies: usize,
    seed: u64,
) -> PyResult<(PyDataset, Vec<f64>)> {
    let x_base = sample_base_design(n, dim, seed, CrossSign::Any).map_err(py_err)?;
    let cfg = SyntheticConfig {
        true_params: vec![1.0; dim],
        noise: eps,
        ratio,
        copies,
        seed,
    };
    let train = generate_label_process(&x_base, &cfg).map_err(py_err)?;
    let x1 = x_base.row(0).transpose();
    let xn = x_base.row(n - 1).transpose();
    let x_test = (x1 + ratio * xn) / (ratio + 1.0);
    Ok((
        PyDataset { inner: train },
        x_test.iter().copied().collect(),
    ))
}

/// Run every (algorithm, budget, test point) combination and return the
/// aggregate report as a JSON or CSV string.
#[pyfunction(name = "evaluate")]
#[pyo3(signature = (dataset, test_points, algos, ks, model="ols", ridge=0.0, step=1, seed=0, brute_cap=25, format="json"))]
#[allow(clippy::too_many_arguments)]
fn py_evaluate(
    dataset: &PyDataset,
    test_points: Vec<Vec<f64>>,
    algos: Vec<String>,
    ks: Vec<usize>,
    model: &str,
    ridge: f64,
    step: usize,
    seed: u64,
    brute_cap: usize,
    format: &str,
) -> PyResult<String> {
    let kind = parse_model(model)?;
    let algorithms: Vec<Algorithm> = algos
        .iter()
        .map(|a| {
            Algorithm::parse(a, step)
                .ok_or_else(|| PyValueError::new_err(format!("unknown algorithm {a:?}")))
        })
        .collect::<PyResult<_>>()?;
    let tests = to_matrix(test_points)?;
    let report = evaluate(
        &dataset.inner,
        &tests,
        &algorithms,
        &ks,
        kind,
        ridge,
        seed,
        brute_cap,
    )
    .map_err(py_err)?;
    match format {
        "json" => Ok(report_to_json(&report)),
        "csv" => Ok(report_to_csv(&report)),
        other => Err(PyValueError::new_err(format!("unknown format {other:?}"))),
    }
}

#[pymodule]
fn miss_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyOlsFit>()?;
    m.add_class::<PyLogisticFit>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyCertificate>()?;
    m.add_function(wrap_pyfunction!(py_fit_ols, m)?)?;
    m.add_function(wrap_pyfunction!(py_fit_logistic, m)?)?;
    m.add_function(wrap_pyfunction!(py_influence, m)?)?;
    m.add_function(wrap_pyfunction!(py_influence_logistic, m)?)?;
    m.add_function(wrap_pyfunction!(py_individual_effects, m)?)?;
    m.add_function(wrap_pyfunction!(py_actual_effect, m)?)?;
    m.add_function(wrap_pyfunction!(py_series_effect, m)?)?;
    m.add_function(wrap_pyfunction!(py_amplification_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(py_select, m)?)?;
    m.add_function(wrap_pyfunction!(py_submodularity_witness, m)?)?;
    m.add_function(wrap_pyfunction!(py_certify, m)?)?;
    m.add_function(wrap_pyfunction!(py_synth_cluster, m)?)?;
    m.add_function(wrap_pyfunction!(py_synth_endpoints, m)?)?;
    m.add_function(wrap_pyfunction!(py_evaluate, m)?)?;
    Ok(())
}
