//! Command line front end: fit models, run subset selection, evaluate
//! selector families, generate synthetic instances, and emit failure-mode
//! certificates.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on numerical failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use miss_core::counterexamples::{
    find_p_theorem31, find_p_theorem35, find_p_theorem36, reverify, sample_base_design,
    verify_theorem42, CrossSign, TheoremId,
};
use miss_core::dataset::{
    generate_cancellation_cluster, load_csv, load_points_csv, write_csv, ClusterConfig, Dataset,
};
use miss_core::effects::{influence_estimates, TargetFunction};
use miss_core::glm::{fit_logistic, DEFAULT_MAX_ITER, DEFAULT_TOL};
use miss_core::harness::{emit_report, evaluate, Algorithm, ReportFormat};
use miss_core::ols::fit_ols;
use miss_core::selectors::{
    annotate_logistic, annotate_ols, build_quadratic, select_adaptive, select_brute, select_lags,
    select_quadratic_pgd, select_zam, ModelKind, PgdConfig, Scoring,
};
use miss_core::MissError;

#[derive(Parser)]
#[command(
    name = "miss",
    about = "Most-influential-subset selection for linear and logistic models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Training data CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Target column name or zero-based index.
    #[arg(long, default_value = "y")]
    target_col: String,
    /// Skip the implicit all-ones intercept column.
    #[arg(long)]
    no_intercept: bool,
}

#[derive(Args)]
struct ModelArgs {
    /// Model family.
    #[arg(long, default_value = "ols", value_parser = ["ols", "logistic"])]
    model: String,
    /// Ridge penalty strength.
    #[arg(long, default_value_t = 0.0)]
    ridge: f64,
}

impl ModelArgs {
    fn kind(&self) -> ModelKind {
        if self.model == "logistic" {
            ModelKind::Logistic
        } else {
            ModelKind::Ols
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and print its summary.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Run one subset selection and print its trace as JSON.
    Miss {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Selection algorithm.
        #[arg(long, value_parser = ["zam", "lags", "adaptive", "pgd", "brute"])]
        algo: String,
        /// Removal budget.
        #[arg(long)]
        k: usize,
        /// Samples removed per adaptive round.
        #[arg(long, default_value_t = 1)]
        step: usize,
        /// Seed for randomized algorithms.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated test point features (without the intercept);
        /// defaults to the feature means of the training data.
        #[arg(long)]
        x_test: Option<String>,
        /// Largest n brute enumeration accepts.
        #[arg(long, default_value_t = 25)]
        brute_cap: usize,
        /// Write the trace here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate several algorithms over test points and budgets.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Test point CSV, same schema as the training data (targets are
        /// ignored).
        #[arg(long)]
        test_data: PathBuf,
        /// Algorithm to include; repeatable.
        #[arg(long, required = true)]
        algo: Vec<String>,
        /// Comma-separated removal budgets.
        #[arg(long)]
        ks: String,
        /// Samples removed per adaptive round.
        #[arg(long, default_value_t = 1)]
        step: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "json", value_parser = ["json", "csv"])]
        format: String,
        #[arg(long, default_value_t = 25)]
        brute_cap: usize,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic instance and write it to CSV files.
    Synth {
        /// Instance family: "cluster" (two cancelling duplicate clusters)
        /// or "endpoints" (two-sample label perturbation).
        #[arg(long, value_parser = ["cluster", "endpoints"])]
        kind: String,
        /// Training rows.
        #[arg(long, default_value_t = 200)]
        n: usize,
        /// Feature dimension (including the intercept).
        #[arg(long, default_value_t = 5)]
        dim: usize,
        /// Rows per duplicate cluster (cluster kind).
        #[arg(long, default_value_t = 10)]
        cluster_size: usize,
        /// Label noise variance (cluster kind).
        #[arg(long, default_value_t = 0.2)]
        noise_var: f64,
        /// Perturbation magnitude (endpoints kind).
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        /// Perturbation ratio between the two endpoints (endpoints kind).
        #[arg(long, default_value_t = 2.0)]
        ratio: f64,
        /// Copies of each endpoint (endpoints kind).
        #[arg(long, default_value_t = 1)]
        copies: usize,
        /// Test points to generate.
        #[arg(long, default_value_t = 20)]
        n_test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Test point CSV path.
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Search for a certified failure (or recovery) instance and print the
    /// certificate as JSON.
    Certify {
        /// Instance regime: T31, T35, T36 or T42.
        #[arg(long)]
        theorem: String,
        /// Base design rows.
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Feature dimension (including the intercept).
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// Perturbation magnitude.
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        /// Endpoint copies (T35 only).
        #[arg(long, default_value_t = 2)]
        copies: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the certified dataset here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>, MissError> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| MissError::InvalidConfig(format!("bad budget list entry {t:?}")))
        })
        .collect()
}

fn parse_x_test(ds: &Dataset, spec: Option<&str>) -> Result<DVector<f64>, MissError> {
    let d = ds.dim();
    match spec {
        None => {
            // feature means of the training data
            let mut m = DVector::zeros(d);
            for i in 0..ds.n() {
                m += ds.row(i);
            }
            Ok(m / ds.n() as f64)
        }
        Some(s) => {
            let vals: Vec<f64> = s
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| MissError::InvalidConfig(format!("bad test point entry {t:?}")))
                })
                .collect::<Result<_, _>>()?;
            let expected = if ds.intercept { d - 1 } else { d };
            if vals.len() != expected {
                return Err(MissError::InvalidConfig(format!(
                    "test point has {} features, expected {expected}",
                    vals.len()
                )));
            }
            let mut v = DVector::zeros(d);
            let offset = if ds.intercept {
                v[0] = 1.0;
                1
            } else {
                0
            };
            for (i, &x) in vals.iter().enumerate() {
                v[offset + i] = x;
            }
            Ok(v)
        }
    }
}

fn emit(body: &str, out: Option<&PathBuf>) -> Result<(), MissError> {
    match out {
        Some(path) => std::fs::write(path, body).map_err(MissError::from),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), MissError> {
    match cli.command {
        Command::Fit { data, model } => {
            let ds = load_csv(&data.data, &data.target_col, !data.no_intercept)?;
            let summary = match model.kind() {
                ModelKind::Ols => {
                    let fit = fit_ols(&ds, model.ridge)?;
                    serde_json::json!({
                        "model": "ols",
                        "n": ds.n(),
                        "dim": ds.dim(),
                        "ridge": model.ridge,
                        "params": fit.params.iter().copied().collect::<Vec<f64>>(),
                        "residual_norm": fit.residuals.norm(),
                    })
                }
                ModelKind::Logistic => {
                    let fit = fit_logistic(&ds, model.ridge, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
                    serde_json::json!({
                        "model": "logistic",
                        "n": ds.n(),
                        "dim": ds.dim(),
                        "ridge": model.ridge,
                        "params": fit.params.iter().copied().collect::<Vec<f64>>(),
                        "iterations": fit.iterations,
                        "grad_norm": fit.grad_norm,
                    })
                }
            };
            println!("{}", serde_json::to_string_pretty(&summary).unwrap());
            Ok(())
        }
        Command::Miss {
            data,
            model,
            algo,
            k,
            step,
            seed,
            x_test,
            brute_cap,
            out,
        } => {
            let ds = load_csv(&data.data, &data.target_col, !data.no_intercept)?;
            let x_test = parse_x_test(&ds, x_test.as_deref())?;
            let kind = model.kind();
            let target = match kind {
                ModelKind::Ols => TargetFunction::linear(x_test),
                ModelKind::Logistic => TargetFunction::LogisticLogit {
                    x_test,
                    positive_class: true,
                },
            };
            let trace = match (algo.as_str(), kind) {
                ("zam", ModelKind::Ols) => {
                    let fit = fit_ols(&ds, model.ridge)?;
                    let scores = influence_estimates(&fit, &target);
                    let mut t = select_zam(&scores, &ds.row_ids, k);
                    annotate_ols(&mut t, &fit, &target)?;
                    t
                }
                ("zam", ModelKind::Logistic) => {
                    let fit = fit_logistic(&ds, model.ridge, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
                    let scores = miss_core::glm::influence_estimates_general(&fit, &target);
                    let mut t = select_zam(&scores, &ds.row_ids, k);
                    annotate_logistic(&mut t, &fit, &target)?;
                    t
                }
                ("lags", ModelKind::Ols) => {
                    let fit = fit_ols(&ds, model.ridge)?;
                    select_lags(&fit, &target, k)?
                }
                ("lags", ModelKind::Logistic) => {
                    let mut t = select_adaptive(
                        &ds,
                        &target,
                        k,
                        k,
                        Scoring::ExactIndividual,
                        kind,
                        model.ridge,
                    )?;
                    let fit = fit_logistic(&ds, model.ridge, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
                    annotate_logistic(&mut t, &fit, &target)?;
                    t
                }
                ("adaptive", _) => {
                    let mut t = select_adaptive(
                        &ds,
                        &target,
                        k,
                        step,
                        Scoring::ExactIndividual,
                        kind,
                        model.ridge,
                    )?;
                    match kind {
                        ModelKind::Ols => {
                            annotate_ols(&mut t, &fit_ols(&ds, model.ridge)?, &target)?
                        }
                        ModelKind::Logistic => annotate_logistic(
                            &mut t,
                            &fit_logistic(&ds, model.ridge, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
                            &target,
                        )?,
                    }
                    t
                }
                ("pgd", ModelKind::Ols) => {
                    let fit = fit_ols(&ds, model.ridge)?;
                    let q = build_quadratic(&fit, &target);
                    let cfg = PgdConfig {
                        seed,
                        ..PgdConfig::default()
                    };
                    let mut t = select_quadratic_pgd(&q, k, &cfg, None)?;
                    annotate_ols(&mut t, &fit, &target)?;
                    t
                }
                ("pgd", ModelKind::Logistic) => {
                    return Err(MissError::InvalidConfig(
                        "the quadratic relaxation is only defined for least squares".into(),
                    ))
                }
                ("brute", _) => {
                    let mut t = select_brute(&ds, &target, k, brute_cap, kind, model.ridge)?;
                    match kind {
                        ModelKind::Ols => {
                            annotate_ols(&mut t, &fit_ols(&ds, model.ridge)?, &target)?
                        }
                        ModelKind::Logistic => annotate_logistic(
                            &mut t,
                            &fit_logistic(&ds, model.ridge, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
                            &target,
                        )?,
                    }
                    t
                }
                _ => unreachable!("clap restricts the algorithm values"),
            };
            emit(&serde_json::to_string_pretty(&trace).unwrap(), out.as_ref())
        }
        Command::Eval {
            data,
            model,
            test_data,
            algo,
            ks,
            step,
            seed,
            format,
            brute_cap,
            out,
        } => {
            let ds = load_csv(&data.data, &data.target_col, !data.no_intercept)?;
            let test = load_points_csv(&test_data, &data.target_col, !data.no_intercept)?;
            let algorithms: Vec<Algorithm> = algo
                .iter()
                .map(|a| {
                    Algorithm::parse(a, step)
                        .ok_or_else(|| MissError::InvalidConfig(format!("unknown algorithm {a:?}")))
                })
                .collect::<Result<_, _>>()?;
            let ks = parse_usize_list(&ks)?;
            let report = evaluate(
                &ds,
                &test,
                &algorithms,
                &ks,
                model.kind(),
                model.ridge,
                seed,
                brute_cap,
            )?;
            let fmt = if format == "csv" {
                ReportFormat::Csv
            } else {
                ReportFormat::Json
            };
            match out {
                Some(path) => emit_report(&report, fmt, &path),
                None => {
                    let body = match fmt {
                        ReportFormat::Json => miss_core::harness::report_to_json(&report),
                        ReportFormat::Csv => miss_core::harness::report_to_csv(&report),
                    };
                    println!("{body}");
                    Ok(())
                }
            }
        }
        Command::Synth {
            kind,
            n,
            dim,
            cluster_size,
            noise_var,
            eps,
            ratio,
            copies,
            n_test,
            seed,
            out,
            test_out,
        } => {
            match kind.as_str() {
                "cluster" => {
                    let cfg = ClusterConfig {
                        n,
                        d: dim,
                        cluster_size,
                        noise_var,
                        n_test,
                        seed,
                    };
                    let (train, tests) = generate_cancellation_cluster(&cfg)?;
                    write_csv(&train, &out)?;
                    let test_ds = Dataset::new(
                        tests.clone(),
                        DVector::zeros(tests.nrows()),
                        false,
                    )?;
                    write_csv(&test_ds, &test_out)?;
                }
                "endpoints" => {
                    let x_base = sample_base_design(n, dim, seed, CrossSign::Any)?;
                    let cfg = miss_core::SyntheticConfig {
                        true_params: vec![1.0; dim],
                        noise: eps,
                        ratio,
                        copies,
                        seed,
                    };
                    let train = miss_core::dataset::generate_label_process(&x_base, &cfg)?;
                    write_csv(&train, &out)?;
                    // the intended test point for this construction
                    let x1 = x_base.row(0).transpose();
                    let xn = x_base.row(n - 1).transpose();
                    let x_test = (x1 + ratio * xn) / (ratio + 1.0);
                    // skip the intercept coordinate: readers re-add it
                    let test_x = DMatrix::from_fn(1, dim - 1, |_, j| x_test[j + 1]);
                    let test_ds = Dataset::new(test_x, DVector::zeros(1), false)?;
                    write_csv(&test_ds, &test_out)?;
                }
                _ => unreachable!("clap restricts the kind values"),
            }
            Ok(())
        }
        Command::Certify {
            theorem,
            n,
            dim,
            eps,
            copies,
            seed,
            out,
        } => {
            let id = TheoremId::parse(&theorem)
                .ok_or_else(|| MissError::InvalidConfig(format!("unknown regime {theorem:?}")))?;
            let (inst, cert) = match id {
                TheoremId::T31 => {
                    let x = sample_base_design(n, dim, seed, CrossSign::Any)?;
                    let inst = find_p_theorem31(&x, eps, seed)?;
                    let cert = inst.certificate.clone();
                    (inst, cert)
                }
                TheoremId::T35 => {
                    let x = sample_base_design(n, dim, seed, CrossSign::Any)?;
                    let inst = find_p_theorem35(&x, eps, copies, seed)?;
                    let cert = inst.certificate.clone();
                    (inst, cert)
                }
                TheoremId::T36 => {
                    let x = sample_base_design(n, dim, seed, CrossSign::Negative)?;
                    let inst = find_p_theorem36(&x, eps, seed)?;
                    let cert = inst.certificate.clone();
                    (inst, cert)
                }
                TheoremId::T42 => {
                    let x = sample_base_design(n, dim, seed, CrossSign::Negative)?;
                    let inst = find_p_theorem36(&x, eps, seed)?;
                    let cert = verify_theorem42(&inst)?;
                    (inst, cert)
                }
            };
            // paranoia: certificates must survive re-running their checks
            debug_assert!(reverify(&inst).map(|c| c.all_pass()).unwrap_or(true) || !cert.all_pass());
            if let Some(path) = out {
                write_csv(&inst.dataset, &path)?;
            }
            println!("{}", cert.to_json());
            if !cert.all_pass() {
                eprintln!("certificate checks did not all pass (hypothesis violated)");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("MISS_THREADS") {
        if let Ok(t) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ MissError::InvalidConfig(_)) | Err(e @ MissError::MissingTargetColumn(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
