//! Constructs concrete instances of the documented failure and success
//! regimes of the greedy selectors and certifies them against brute-force
//! ground truth.
//!
//! Each `find_p_*` search scans the perturbation ratio p over the interval
//! where both endpoint influence estimates stay positive, picks the point
//! with the largest slack in the regime's defining inequalities, and then
//! re-derives every claimed property from the constructed dataset itself.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::dataset::{generate_label_process, Dataset, SyntheticConfig};
use crate::effects::{actual_effect_exact, individual_effects, influence_estimates, TargetFunction};
use crate::error::{MissError, Result};
use crate::ols::{fit_ols, relative_pivot, OlsFit};
use crate::selectors::{
    annotate_ols, select_adaptive, select_brute, select_lags, ModelKind, Scoring, SubsetTrace,
};

/// Minimum slack required of every strict inequality in a certificate.
pub const STRICTNESS: f64 = 1e-8;
const GRID_POINTS: usize = 256;
const MAX_RESAMPLES: usize = 100;
const BRUTE_CAP: usize = 25;

/// Identifier of a certified regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TheoremId {
    /// One-shot influence selection misses the 1-subset optimum.
    T31,
    /// Individual-effect selection misses the c-subset optimum under
    /// duplication.
    T35,
    /// Individual-effect selection misses the 2-subset optimum under
    /// cancellation.
    T36,
    /// Adaptive greedy recovers the 2-subset optimum on a cancellation
    /// instance.
    T42,
}

impl TheoremId {
    pub fn parse(s: &str) -> Option<TheoremId> {
        match s.to_ascii_uppercase().as_str() {
            "T31" => Some(TheoremId::T31),
            "T35" => Some(TheoremId::T35),
            "T36" => Some(TheoremId::T36),
            "T42" => Some(TheoremId::T42),
            _ => None,
        }
    }
}

/// One named predicate evaluated on the instance. `value` is the signed
/// margin (or indicator) that backed the decision.
#[derive(Debug, Clone, Serialize)]
pub struct CertCheck {
    pub name: String,
    pub value: f64,
    pub pass: bool,
}

fn margin_check(name: &str, margin: f64) -> CertCheck {
    CertCheck {
        name: name.to_string(),
        value: margin,
        pass: margin > 0.0,
    }
}

fn bool_check(name: &str, pass: bool) -> CertCheck {
    CertCheck {
        name: name.to_string(),
        value: if pass { 1.0 } else { 0.0 },
        pass,
    }
}

fn hex_digest<S: Serializer>(digest: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{digest:016x}"))
}

/// Outcome of a ratio search plus the predicate evaluations that certify it.
#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleCertificate {
    pub theorem_id: TheoremId,
    pub p: f64,
    #[serde(serialize_with = "hex_digest")]
    pub dataset_digest: u64,
    pub checks: Vec<CertCheck>,
}

impl CounterexampleCertificate {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }
}

/// A certified dataset together with everything needed to re-run its checks.
#[derive(Debug, Clone)]
pub struct CertifiedInstance {
    pub x_base: DMatrix<f64>,
    pub eps: f64,
    pub copies: usize,
    pub p: f64,
    pub dataset: Dataset,
    pub x_test: DVector<f64>,
    pub certificate: CounterexampleCertificate,
}

impl CertifiedInstance {
    pub fn target(&self) -> TargetFunction {
        TargetFunction::linear(self.x_test.clone())
    }
}

/// FNV-1a over the instance contents with values rounded to 1e-12, so the
/// digest is stable across formatting and platform differences.
pub fn instance_digest(ds: &Dataset, x_test: &DVector<f64>) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    let mut eat_f = |v: f64| {
        let q = (v * 1e12).round() as i64;
        for b in q.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat_f(ds.n() as f64);
    eat_f(ds.dim() as f64);
    for i in 0..ds.n() {
        for j in 0..ds.dim() {
            eat_f(ds.x[(i, j)]);
        }
        eat_f(ds.y[i]);
    }
    for v in x_test.iter() {
        eat_f(*v);
    }
    h
}

/// Required sign of the endpoint cross-leverage when sampling a base design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossSign {
    Any,
    Positive,
    Negative,
}

/// Leverages of the first and last rows of a design, and their
/// cross-leverage. None when the gram matrix is not safely invertible.
fn design_leverages(x: &DMatrix<f64>) -> Option<(f64, f64, f64)> {
    let gram = x.transpose() * x;
    if relative_pivot(&gram) < 1e-10 {
        return None;
    }
    let chol = Cholesky::new(gram)?;
    let n = x.nrows();
    let x1 = x.row(0).transpose();
    let xn = x.row(n - 1).transpose();
    let w1 = chol.solve(&x1);
    Some((x1.dot(&w1), xn.dot(&chol.solve(&xn)), xn.dot(&w1)))
}

/// Draw base designs (entries uniform in [-1, 1], intercept column forced)
/// until the leverage preconditions hold: invertible gram, invertible
/// interior gram, h_11 > h_nn, and the requested cross-leverage sign.
pub fn sample_base_design(n: usize, d: usize, seed: u64, sign: CrossSign) -> Result<DMatrix<f64>> {
    if n < 4 || d < 2 {
        return Err(MissError::InvalidConfig(
            "base design needs n >= 4 and d >= 2".into(),
        ));
    }
    for attempt in 0..MAX_RESAMPLES as u64 {
        let x = crate::dataset::random_design(n, d, seed.wrapping_mul(131).wrapping_add(attempt), true);
        let Some((h11, hnn, h1n)) = design_leverages(&x) else {
            continue;
        };
        let interior = x.rows(1, n - 2).into_owned();
        if relative_pivot(&(interior.transpose() * &interior)) < 1e-10 {
            continue;
        }
        if h11 <= hnn + STRICTNESS {
            continue;
        }
        let sign_ok = match sign {
            CrossSign::Any => true,
            CrossSign::Positive => h1n > STRICTNESS,
            CrossSign::Negative => h1n < -STRICTNESS,
        };
        if sign_ok {
            return Ok(x);
        }
    }
    Err(MissError::PreconditionViolated(format!(
        "no base design with the required leverage structure after {MAX_RESAMPLES} resamples"
    )))
}

fn draw_theta(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Build the two-endpoint perturbation instance for ratio `p` and its
/// intended test point (x_1 + p x_n) / (p + 1).
fn label_instance(
    x_base: &DMatrix<f64>,
    eps: f64,
    p: f64,
    copies: usize,
    theta: &[f64],
) -> Result<(Dataset, TargetFunction)> {
    let cfg = SyntheticConfig {
        true_params: theta.to_vec(),
        noise: eps,
        ratio: p,
        copies,
        seed: 0,
    };
    let ds = generate_label_process(x_base, &cfg)?;
    let n = x_base.nrows();
    let x1 = x_base.row(0).transpose();
    let xn = x_base.row(n - 1).transpose();
    let x_test = (x1 + p * xn) / (p + 1.0);
    Ok((ds, TargetFunction::linear(x_test)))
}

/// Log-spaced grid over (lo, hi) after shrinking both endpoints inward by a
/// 1e-3 relative margin. Falls back to linear spacing when the interval
/// crosses zero.
fn grid(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let (a, b) = (lo + 1e-3 * span, hi - 1e-3 * span);
    let m = GRID_POINTS;
    if a > 0.0 {
        let (la, lb) = (a.ln(), b.ln());
        (0..m)
            .map(|i| (la + (lb - la) * i as f64 / (m - 1) as f64).exp())
            .collect()
    } else if b < 0.0 {
        let (la, lb) = ((-b).ln(), (-a).ln());
        (0..m)
            .map(|i| -(la + (lb - la) * i as f64 / (m - 1) as f64).exp())
            .rev()
            .collect()
    } else {
        (0..m)
            .map(|i| a + (b - a) * i as f64 / (m - 1) as f64)
            .collect()
    }
}

/// Pick a ratio in (lo, hi) whose margin exceeds the strictness threshold:
/// grid scan for the maximal margin, then bisection on the first sign change
/// when the grid alone is not strict enough.
fn search_ratio(lo: f64, hi: f64, margin: impl Fn(f64) -> f64) -> Result<f64> {
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(MissError::SearchExhausted { lo, hi });
    }
    let pts = grid(lo, hi);
    let margins: Vec<f64> = pts.iter().map(|&p| margin(p)).collect();
    let best = (0..pts.len())
        .max_by(|&a, &b| margins[a].total_cmp(&margins[b]))
        .unwrap();
    if margins[best] > STRICTNESS {
        return Ok(pts[best]);
    }
    for w in 0..pts.len() - 1 {
        if margins[w] <= 0.0 && margins[w + 1] > 0.0 || margins[w] > 0.0 && margins[w + 1] <= 0.0 {
            let (mut a, mut b) = (pts[w], pts[w + 1]);
            let mut fa = margins[w];
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                let fm = margin(mid);
                if fm > STRICTNESS {
                    return Ok(mid);
                }
                if (fm > 0.0) == (fa > 0.0) {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
        }
    }
    Err(MissError::SearchExhausted { lo, hi })
}

/// Ratio interval on which both endpoint influence estimates are positive,
/// from the sign of the cross-leverage. `c` is the duplication count (1 for
/// the undduplicated regimes).
fn positivity_interval(h11: f64, hnn: f64, h1n: f64, c: f64) -> Result<(f64, f64)> {
    let (lo, hi) = if h1n.abs() < 1e-9 {
        (1e-3, 1e3)
    } else if h1n < 0.0 {
        (-h1n / hnn, -h11 / h1n)
    } else {
        (c * h1n / (1.0 - c * hnn), (1.0 - c * h11) / (c * h1n))
    };
    if lo >= hi {
        return Err(MissError::SearchExhausted { lo, hi });
    }
    Ok((lo, hi))
}

fn fit_and_effects(
    ds: &Dataset,
    target: &TargetFunction,
) -> Result<(OlsFit, Vec<f64>, Vec<f64>)> {
    let fit = fit_ols(ds, 0.0)?;
    let v = influence_estimates(&fit, target);
    let a = individual_effects(&fit, target)?;
    Ok((fit, v, a))
}

fn sorted_ids(trace: &SubsetTrace) -> Vec<u64> {
    let mut ids = trace.selected.clone();
    ids.sort_unstable();
    ids
}

fn certify_t31(ds: &Dataset, target: &TargetFunction) -> Result<Vec<CertCheck>> {
    let n = ds.n();
    let (_, v, a) = fit_and_effects(ds, target)?;
    let runner_up_v = (0..n - 1).map(|i| v[i]).fold(f64::MIN, f64::max);
    let runner_up_a = (1..n).map(|i| a[i]).fold(f64::MIN, f64::max);
    let brute = select_brute(ds, target, 1, BRUTE_CAP, ModelKind::Ols, 0.0)?;
    Ok(vec![
        margin_check("influence_first_positive", v[0]),
        margin_check("influence_last_positive", v[n - 1]),
        margin_check("influence_argmax_is_last", v[n - 1] - runner_up_v),
        margin_check("exact_argmax_is_first", a[0] - runner_up_a),
        bool_check("brute_selects_first", brute.selected == vec![ds.row_ids[0]]),
        margin_check(
            "influence_pick_below_optimum",
            brute.value_exact.unwrap_or(f64::NEG_INFINITY) - a[n - 1],
        ),
    ])
}

fn certify_t35(ds: &Dataset, target: &TargetFunction, c: usize) -> Result<Vec<CertCheck>> {
    let total = ds.n();
    let (fit, _, a) = fit_and_effects(ds, target)?;
    let first_cluster: Vec<usize> = (0..c).collect();
    let last_cluster: Vec<usize> = (total - c..total).collect();
    let a_first_cluster = actual_effect_exact(&fit, &first_cluster, target)?;
    let a_last_cluster = actual_effect_exact(&fit, &last_cluster, target)?;
    let brute = select_brute(ds, target, c, BRUTE_CAP, ModelKind::Ols, 0.0)?;
    let brute_value = brute.value_exact.unwrap_or(f64::NEG_INFINITY);
    let mut lags = select_lags(&fit, target, c)?;
    annotate_ols(&mut lags, &fit, target)?;
    let mut adaptive = select_adaptive(
        ds,
        target,
        c,
        1,
        Scoring::ExactIndividual,
        ModelKind::Ols,
        0.0,
    )?;
    annotate_ols(&mut adaptive, &fit, target)?;
    let first_ids: Vec<u64> = first_cluster.iter().map(|&i| ds.row_ids[i]).collect();
    Ok(vec![
        margin_check("single_effect_prefers_last", a[total - 1] - a[0]),
        margin_check(
            "cluster_effect_prefers_first",
            a_first_cluster - a_last_cluster,
        ),
        bool_check("brute_selects_first_cluster", sorted_ids(&brute) == first_ids),
        margin_check(
            "lags_below_optimum",
            brute_value - lags.value_exact.unwrap_or(f64::NEG_INFINITY),
        ),
        margin_check(
            "adaptive_below_optimum",
            brute_value - adaptive.value_exact.unwrap_or(f64::NEG_INFINITY),
        ),
    ])
}

fn certify_t36(
    ds: &Dataset,
    target: &TargetFunction,
    x_base: &DMatrix<f64>,
    p: f64,
) -> Result<Vec<CertCheck>> {
    let n = ds.n();
    let (h11, hnn, h1n) =
        design_leverages(x_base).ok_or(MissError::PreconditionViolated("singular gram".into()))?;
    let canc = h1n * p + h11 * (1.0 - hnn) + h1n * h1n;
    let (fit, _, a) = fit_and_effects(ds, target)?;
    let a_pair = actual_effect_exact(&fit, &[0, n - 1], target)?;
    let mut lags = select_lags(&fit, target, 2)?;
    annotate_ols(&mut lags, &fit, target)?;
    let brute = select_brute(ds, target, 2, BRUTE_CAP, ModelKind::Ols, 0.0)?;
    let endpoint_ids = vec![ds.row_ids[0], ds.row_ids[n - 1]];
    Ok(vec![
        margin_check("effect_first_positive", a[0]),
        margin_check("effect_last_positive", a[n - 1]),
        margin_check("cancellation_condition", -canc),
        margin_check("pair_below_single_last", a[n - 1] - a_pair),
        bool_check("lags_selects_endpoints", sorted_ids(&lags) == endpoint_ids),
        margin_check(
            "lags_below_optimum",
            brute.value_exact.unwrap_or(f64::NEG_INFINITY)
                - lags.value_exact.unwrap_or(f64::NEG_INFINITY),
        ),
    ])
}

/// Search for a ratio on which the top influence estimate and the top exact
/// individual effect sit on different samples, so one-shot influence
/// selection misses the 1-subset optimum.
pub fn find_p_theorem31(x_base: &DMatrix<f64>, eps: f64, seed: u64) -> Result<CertifiedInstance> {
    if eps <= 0.0 {
        return Err(MissError::InvalidConfig("eps must be > 0".into()));
    }
    let n = x_base.nrows();
    let (h11, hnn, h1n) =
        design_leverages(x_base).ok_or(MissError::PreconditionViolated("singular gram".into()))?;
    if h11 <= hnn {
        return Err(MissError::PreconditionViolated(
            "needs h_11 > h_nn on the base design".into(),
        ));
    }
    let interior = x_base.rows(1, n - 2).into_owned();
    if relative_pivot(&(interior.transpose() * &interior)) < 1e-10 {
        return Err(MissError::PreconditionViolated(
            "interior gram matrix is singular".into(),
        ));
    }
    let theta = draw_theta(x_base.ncols(), seed);
    let ratio_cap = (1.0 - hnn) / (1.0 - h11);
    let margin = |p: f64| -> f64 {
        if (p + 1.0).abs() < 1e-9 {
            return f64::NEG_INFINITY;
        }
        let Ok((ds, target)) = label_instance(x_base, eps, p, 1, &theta) else {
            return f64::NEG_INFINITY;
        };
        let Ok((_, v, _)) = fit_and_effects(&ds, &target) else {
            return f64::NEG_INFINITY;
        };
        let (v1, vn) = (v[0], v[n - 1]);
        if v1 <= 0.0 {
            return v1;
        }
        let r = vn / v1;
        // scale-free slack of v1 > 0, vn > 0, 1 < r < ratio_cap
        (v1 / eps).min(vn / eps).min(r - 1.0).min(ratio_cap - r)
    };
    let (lo, hi) = positivity_interval(h11, hnn, h1n, 1.0)?;
    let p = search_ratio(lo, hi, margin)?;

    let (ds, target) = label_instance(x_base, eps, p, 1, &theta)?;
    let checks = certify_t31(&ds, &target)?;
    let x_test = target.gradient();
    let certificate = CounterexampleCertificate {
        theorem_id: TheoremId::T31,
        p,
        dataset_digest: instance_digest(&ds, &x_test),
        checks,
    };
    Ok(CertifiedInstance {
        x_base: x_base.clone(),
        eps,
        copies: 1,
        p,
        dataset: ds,
        x_test,
        certificate,
    })
}

/// Search for a ratio on which duplication flips the individual-effect
/// ranking of the two endpoints, so top-c individual-effect selection picks
/// the c copies of the wrong endpoint.
pub fn find_p_theorem35(
    x_base: &DMatrix<f64>,
    eps: f64,
    c: usize,
    seed: u64,
) -> Result<CertifiedInstance> {
    if eps <= 0.0 {
        return Err(MissError::InvalidConfig("eps must be > 0".into()));
    }
    if c < 2 {
        return Err(MissError::InvalidConfig(
            "duplication count c must be >= 2".into(),
        ));
    }
    let n = x_base.nrows();
    let (h11, hnn, _) =
        design_leverages(x_base).ok_or(MissError::PreconditionViolated("singular gram".into()))?;
    if h11 <= hnn {
        return Err(MissError::PreconditionViolated(
            "needs h_11 > h_nn on the base design".into(),
        ));
    }
    // leverages of the duplicated design; the gram does not depend on p
    let total = n + 2 * (c - 1);
    let src = |i: usize| -> usize {
        if i < c {
            0
        } else if i < c + n - 2 {
            i - c + 1
        } else {
            n - 1
        }
    };
    let xd = DMatrix::from_fn(total, x_base.ncols(), |i, j| x_base[(src(i), j)]);
    let (h11d, hnnd, h1nd) = design_leverages(&xd).ok_or(MissError::PreconditionViolated(
        "duplicated design has a singular gram".into(),
    ))?;
    let cf = c as f64;
    if cf * h11d >= 1.0 || cf * hnnd >= 1.0 {
        return Err(MissError::PreconditionViolated(
            "per-copy leverage must stay below 1/c after duplication".into(),
        ));
    }
    let window_lo = (1.0 - hnnd) / (1.0 - h11d);
    let window_hi = (1.0 - cf * hnnd) / (1.0 - cf * h11d);
    if window_lo >= window_hi {
        return Err(MissError::PreconditionViolated(
            "amplification window is empty for this design".into(),
        ));
    }
    let theta = draw_theta(x_base.ncols(), seed);
    let margin = |p: f64| -> f64 {
        if (p + 1.0).abs() < 1e-9 {
            return f64::NEG_INFINITY;
        }
        let Ok((ds, target)) = label_instance(x_base, eps, p, c, &theta) else {
            return f64::NEG_INFINITY;
        };
        let Ok((_, v, _)) = fit_and_effects(&ds, &target) else {
            return f64::NEG_INFINITY;
        };
        let (v1, vn) = (v[0], v[total - 1]);
        if v1 <= 0.0 {
            return v1;
        }
        let r = vn / v1;
        (v1 / eps)
            .min(vn / eps)
            .min(r - window_lo)
            .min(window_hi - r)
    };
    let (lo, hi) = positivity_interval(h11d, hnnd, h1nd, cf)?;
    let p = search_ratio(lo, hi, margin)?;

    let (ds, target) = label_instance(x_base, eps, p, c, &theta)?;
    let checks = certify_t35(&ds, &target, c)?;
    let x_test = target.gradient();
    let certificate = CounterexampleCertificate {
        theorem_id: TheoremId::T35,
        p,
        dataset_digest: instance_digest(&ds, &x_test),
        checks,
    };
    Ok(CertifiedInstance {
        x_base: x_base.clone(),
        eps,
        copies: c,
        p,
        dataset: ds,
        x_test,
        certificate,
    })
}

/// Search for a cancellation ratio: both endpoints have positive individual
/// effects but removing them together hurts, so top-2 individual-effect
/// selection is suboptimal.
pub fn find_p_theorem36(x_base: &DMatrix<f64>, eps: f64, seed: u64) -> Result<CertifiedInstance> {
    if eps <= 0.0 {
        return Err(MissError::InvalidConfig("eps must be > 0".into()));
    }
    let n = x_base.nrows();
    let (h11, hnn, h1n) =
        design_leverages(x_base).ok_or(MissError::PreconditionViolated("singular gram".into()))?;
    if h1n.abs() < STRICTNESS {
        return Err(MissError::PreconditionViolated(
            "needs a nonzero endpoint cross-leverage".into(),
        ));
    }
    let theta = draw_theta(x_base.ncols(), seed);
    let canc = |p: f64| h1n * p + h11 * (1.0 - hnn) + h1n * h1n;
    let margin = |p: f64| -> f64 {
        if (p + 1.0).abs() < 1e-9 {
            return f64::NEG_INFINITY;
        }
        let Ok((ds, target)) = label_instance(x_base, eps, p, 1, &theta) else {
            return f64::NEG_INFINITY;
        };
        let Ok((fit, _, a)) = fit_and_effects(&ds, &target) else {
            return f64::NEG_INFINITY;
        };
        let Ok(a_pair) = actual_effect_exact(&fit, &[0, n - 1], &target) else {
            return f64::NEG_INFINITY;
        };
        (a[0] / eps)
            .min(a[n - 1] / eps)
            .min(-canc(p))
            .min((a[n - 1] - a_pair) / eps)
    };
    // cancellation lives between -h_1n/h_nn and -h_11/h_1n; their order
    // depends on the sign of h_1n
    let (q1, q2) = (-h11 / h1n, -h1n / hnn);
    let (lo, hi) = (q1.min(q2), q1.max(q2));
    let p = search_ratio(lo, hi, margin)?;

    let (ds, target) = label_instance(x_base, eps, p, 1, &theta)?;
    let checks = certify_t36(&ds, &target, x_base, p)?;
    let x_test = target.gradient();
    let certificate = CounterexampleCertificate {
        theorem_id: TheoremId::T36,
        p,
        dataset_digest: instance_digest(&ds, &x_test),
        checks,
    };
    Ok(CertifiedInstance {
        x_base: x_base.clone(),
        eps,
        copies: 1,
        p,
        dataset: ds,
        x_test,
        certificate,
    })
}

/// On a certified cancellation instance, check that adaptive greedy solves
/// 2-MISS: its first pick is the last sample (which carries the maximal
/// individual effect), and its output matches the brute 2-subset optimum.
/// When the last sample is not in the brute optimum the guarantee's
/// hypothesis fails, which is reported as a single failing check rather
/// than an implementation error.
pub fn verify_theorem42(inst: &CertifiedInstance) -> Result<CounterexampleCertificate> {
    let ds = &inst.dataset;
    let target = inst.target();
    let n = ds.n();
    let last_id = ds.row_ids[n - 1];
    let fit = fit_ols(ds, 0.0)?;
    let a = individual_effects(&fit, &target)?;
    let brute = select_brute(ds, &target, 2, BRUTE_CAP, ModelKind::Ols, 0.0)?;
    let digest = instance_digest(ds, &inst.x_test);

    if !brute.selected.contains(&last_id) {
        return Ok(CounterexampleCertificate {
            theorem_id: TheoremId::T42,
            p: inst.p,
            dataset_digest: digest,
            checks: vec![bool_check(
                "hypothesis_last_sample_in_brute_optimum",
                false,
            )],
        });
    }

    let runner_up = (0..n - 1).map(|i| a[i]).fold(f64::MIN, f64::max);
    let mut adaptive = select_adaptive(
        ds,
        &target,
        2,
        1,
        Scoring::ExactIndividual,
        ModelKind::Ols,
        0.0,
    )?;
    annotate_ols(&mut adaptive, &fit, &target)?;
    let first_pick_last = adaptive.selected.first() == Some(&last_id);
    let matches_brute = sorted_ids(&adaptive) == sorted_ids(&brute);
    let value_gap = (adaptive.value_exact.unwrap_or(f64::NAN)
        - brute.value_exact.unwrap_or(f64::NAN))
    .abs();

    let mut checks = vec![
        bool_check("hypothesis_last_sample_in_brute_optimum", true),
        margin_check("last_sample_has_max_individual_effect", a[n - 1] - runner_up),
        bool_check("adaptive_first_pick_is_last_sample", first_pick_last),
        bool_check("adaptive_matches_brute_optimum", matches_brute),
        CertCheck {
            name: "adaptive_value_equals_optimum".into(),
            value: value_gap,
            pass: value_gap < 1e-9,
        },
    ];
    if adaptive.selected.len() == 1 {
        // second round found no positive marginal, so the run must have
        // flagged the early stop
        checks.push(bool_check("single_pick_flagged_early_stop", adaptive.stopped_early));
        checks.push(bool_check(
            "brute_optimum_is_singleton",
            brute.selected.len() == 1,
        ));
    }
    Ok(CounterexampleCertificate {
        theorem_id: TheoremId::T42,
        p: inst.p,
        dataset_digest: digest,
        checks,
    })
}

/// Re-run the checks of a certificate on its stored (dataset, p), without
/// repeating the ratio search.
pub fn reverify(inst: &CertifiedInstance) -> Result<CounterexampleCertificate> {
    let target = inst.target();
    let checks = match inst.certificate.theorem_id {
        TheoremId::T31 => certify_t31(&inst.dataset, &target)?,
        TheoremId::T35 => certify_t35(&inst.dataset, &target, inst.copies)?,
        TheoremId::T36 => certify_t36(&inst.dataset, &target, &inst.x_base, inst.p)?,
        TheoremId::T42 => return verify_theorem42(inst),
    };
    Ok(CounterexampleCertificate {
        theorem_id: inst.certificate.theorem_id,
        p: inst.p,
        dataset_digest: instance_digest(&inst.dataset, &inst.x_test),
        checks,
    })
}

/// Per-index comparison of an adjusted score against the marginal effect it
/// approximates.
#[derive(Debug, Clone, Serialize)]
pub struct SignCheck {
    pub index: usize,
    pub adjusted: f64,
    pub marginal: f64,
    pub pass: bool,
}

/// Outcome of checking the adjusted scores against marginal effects after
/// removing the last sample: per-index sign agreement and whether the two
/// rankings over interior indices coincide.
#[derive(Debug, Clone, Serialize)]
pub struct Prop41Report {
    pub sign_checks: Vec<SignCheck>,
    pub order_preserved: bool,
}

impl Prop41Report {
    pub fn all_pass(&self) -> bool {
        self.order_preserved && self.sign_checks.iter().all(|c| c.pass)
    }
}

fn rank_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// Check that each adjusted score (individual effect after refitting with
/// the last sample removed) carries the same sign as the marginal effect of
/// additionally removing that sample, and that both rank the interior
/// samples identically.
pub fn verify_prop41(ds: &Dataset, x_test: &DVector<f64>) -> Result<Prop41Report> {
    let n = ds.n();
    if n < 3 {
        return Err(MissError::InvalidConfig("needs at least 3 samples".into()));
    }
    let target = TargetFunction::linear(x_test.clone());
    let fit = fit_ols(ds, 0.0)?;
    let a_last = actual_effect_exact(&fit, &[n - 1], &target)?;
    let (_, adjusted) = crate::effects::adjusted_scores(&fit, &[n - 1], &target)?;

    let mut sign_checks = Vec::with_capacity(n - 1);
    let mut interior_adjusted = Vec::new();
    let mut interior_marginal = Vec::new();
    for i in 0..n - 1 {
        let a_pair = actual_effect_exact(&fit, &[i, n - 1], &target)?;
        let marginal = a_pair - a_last;
        let adj = adjusted[i];
        let tol = 1e-12;
        let pass = (adj.abs() < tol && marginal.abs() < tol) || adj.signum() == marginal.signum();
        sign_checks.push(SignCheck {
            index: i,
            adjusted: adj,
            marginal,
            pass,
        });
        if i > 0 {
            interior_adjusted.push(adj);
            interior_marginal.push(marginal);
        }
    }
    let order_preserved = rank_order(&interior_adjusted) == rank_order(&interior_marginal);
    Ok(Prop41Report {
        sign_checks,
        order_preserved,
    })
}
