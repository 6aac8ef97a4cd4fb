//! Tabular data ingestion, synthetic generators, and split/duplication helpers.
//!
//! Rows carry stable integer `row_ids` so that a sample keeps its identity as
//! datasets shrink under subset removal. All construction is pure: the same
//! inputs (including seeds) give byte-identical outputs.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MissError, Result};

/// A fixed design matrix with targets and stable row identities.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// n x d design matrix. First column is all-ones when `intercept` is set.
    pub x: DMatrix<f64>,
    /// Length-n target vector.
    pub y: DVector<f64>,
    /// Whether the first column is an intercept column.
    pub intercept: bool,
    /// Stable per-row identifiers, unique within a dataset.
    pub row_ids: Vec<u64>,
}

/// Label-generation parameters for the two-endpoint perturbation process
/// y = X theta* - e with e = (eps, 0, ..., 0, p*eps).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub true_params: Vec<f64>,
    pub noise: f64,
    pub ratio: f64,
    pub copies: usize,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.noise <= 0.0 {
            return Err(MissError::InvalidConfig("noise must be > 0".into()));
        }
        if self.copies < 1 {
            return Err(MissError::InvalidConfig("copies must be >= 1".into()));
        }
        if (self.ratio + 1.0).abs() < 1e-12 {
            return Err(MissError::InvalidConfig(
                "ratio must differ from -1 (test point divides by p + 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Parameters for the synthetic cancellation-cluster construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub n: usize,
    pub d: usize,
    pub cluster_size: usize,
    pub noise_var: f64,
    pub n_test: usize,
    pub seed: u64,
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if 2 * self.cluster_size >= self.n {
            return Err(MissError::InvalidConfig(
                "need 2 * cluster_size < n".into(),
            ));
        }
        if self.noise_var <= 0.0 {
            return Err(MissError::InvalidConfig("noise_var must be > 0".into()));
        }
        if self.d == 0 || self.n_test == 0 {
            return Err(MissError::InvalidConfig("d and n_test must be >= 1".into()));
        }
        Ok(())
    }
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, intercept: bool) -> Result<Self> {
        let row_ids = (0..x.nrows() as u64).collect();
        Self::with_row_ids(x, y, intercept, row_ids)
    }

    pub fn with_row_ids(
        x: DMatrix<f64>,
        y: DVector<f64>,
        intercept: bool,
        row_ids: Vec<u64>,
    ) -> Result<Self> {
        if x.nrows() != y.len() || x.nrows() != row_ids.len() {
            return Err(MissError::InvalidConfig(
                "design, targets, and row_ids must have matching lengths".into(),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(MissError::InvalidConfig("all entries must be finite".into()));
        }
        let mut sorted = row_ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != row_ids.len() {
            return Err(MissError::InvalidConfig("row_ids must be unique".into()));
        }
        Ok(Dataset {
            x,
            y,
            intercept,
            row_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Row vector by position in the current matrix.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.x.row(i).transpose()
    }

    /// Position of a row id in the current matrix, if present.
    pub fn position_of(&self, row_id: u64) -> Option<usize> {
        self.row_ids.iter().position(|&id| id == row_id)
    }

    fn next_row_id(&self) -> u64 {
        self.row_ids.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// New dataset with the rows at `positions` removed. Ordering of the
    /// remaining rows is preserved, as are their row ids.
    pub fn remove_positions(&self, positions: &[usize]) -> Result<Dataset> {
        for &p in positions {
            if p >= self.n() {
                return Err(MissError::InvalidIndex(p));
            }
        }
        let keep: Vec<usize> = (0..self.n()).filter(|i| !positions.contains(i)).collect();
        let d = self.dim();
        let x = DMatrix::from_fn(keep.len(), d, |i, j| self.x[(keep[i], j)]);
        let y = DVector::from_fn(keep.len(), |i, _| self.y[keep[i]]);
        let row_ids = keep.iter().map(|&i| self.row_ids[i]).collect();
        Ok(Dataset {
            x,
            y,
            intercept: self.intercept,
            row_ids,
        })
    }

    /// Subset of rows at `positions`, in the given order.
    pub fn select_positions(&self, positions: &[usize]) -> Result<Dataset> {
        for &p in positions {
            if p >= self.n() {
                return Err(MissError::InvalidIndex(p));
            }
        }
        let d = self.dim();
        let x = DMatrix::from_fn(positions.len(), d, |i, j| self.x[(positions[i], j)]);
        let y = DVector::from_fn(positions.len(), |i, _| self.y[positions[i]]);
        let row_ids = positions.iter().map(|&i| self.row_ids[i]).collect();
        Ok(Dataset {
            x,
            y,
            intercept: self.intercept,
            row_ids,
        })
    }
}

/// Load a CSV file with a mandatory header row. `target_column` selects the
/// target by name or, failing that, by zero-based index. All other columns
/// become covariates in file order, with an intercept column prepended when
/// requested.
pub fn load_csv(path: &Path, target_column: &str, intercept: bool) -> Result<Dataset> {
    let (x, y) = parse_csv(path, target_column, intercept)?;
    let (n, d) = (x.nrows(), x.ncols());
    if intercept && n <= d {
        return Err(MissError::TooFewRows { n, d });
    }
    Dataset::new(x, y, intercept)
}

/// Load a CSV of evaluation points with the same schema as [`load_csv`] but
/// without the row-count requirement; the target column is parsed and
/// discarded. Returns one point per row.
pub fn load_points_csv(path: &Path, target_column: &str, intercept: bool) -> Result<DMatrix<f64>> {
    let (x, _) = parse_csv(path, target_column, intercept)?;
    Ok(x)
}

fn parse_csv(
    path: &Path,
    target_column: &str,
    intercept: bool,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    for (i, h) in headers.iter().enumerate() {
        if headers[..i].contains(h) {
            return Err(MissError::DuplicateHeader(h.clone()));
        }
    }
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .or_else(|| {
            target_column
                .parse::<usize>()
                .ok()
                .filter(|&i| i < headers.len())
        })
        .ok_or_else(|| MissError::MissingTargetColumn(target_column.to_string()))?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(headers.len() - 1);
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or(
                MissError::NonNumericCell {
                    row: row_no,
                    column: headers[col].clone(),
                    value: cell.to_string(),
                },
            )?;
            if col == target_idx {
                targets.push(value);
            } else {
                row.push(value);
            }
        }
        rows.push(row);
    }

    let n = rows.len();
    let d_features = headers.len() - 1;
    let d = d_features + usize::from(intercept);
    let x = DMatrix::from_fn(n, d, |i, j| {
        if intercept {
            if j == 0 {
                1.0
            } else {
                rows[i][j - 1]
            }
        } else {
            rows[i][j]
        }
    });
    Ok((x, DVector::from_vec(targets)))
}

/// Write a dataset back out as CSV. The intercept column, if present, is
/// dropped; feature columns are named x1..xd and the target column y, so the
/// file round-trips through [`load_csv`] with `intercept` re-enabled.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let skip = usize::from(ds.intercept);
    let mut header: Vec<String> = (1..=ds.dim() - skip).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    writer.write_record(&header)?;
    for i in 0..ds.n() {
        let mut record: Vec<String> = (skip..ds.dim())
            .map(|j| format!("{:?}", ds.x[(i, j)]))
            .collect();
        record.push(format!("{:?}", ds.y[i]));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Uniform [-1, 1] design with the first coordinate forced to 1 when
/// `intercept` is set. Deterministic given the seed.
pub fn random_design(n: usize, d: usize, seed: u64, intercept: bool) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, d, |_, j| {
        if intercept && j == 0 {
            1.0
        } else {
            rng.random_range(-1.0..=1.0)
        }
    })
}

/// Labels from the two-endpoint perturbation process: y = X theta* - e with
/// e = (eps, 0, ..., 0, p*eps). With `copies = c > 1` the first and last rows
/// are replicated c times each (copies of the first row stay at the front,
/// copies of the last row at the back), with identical labels.
pub fn generate_label_process(x_base: &DMatrix<f64>, cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let (n, d) = (x_base.nrows(), x_base.ncols());
    if cfg.true_params.len() != d {
        return Err(MissError::InvalidConfig(format!(
            "true_params has length {}, expected d = {d}",
            cfg.true_params.len()
        )));
    }
    if n < 3 {
        return Err(MissError::InvalidConfig("need at least 3 base rows".into()));
    }
    if (0..n).any(|i| (x_base[(i, 0)] - 1.0).abs() > 1e-12) {
        return Err(MissError::InvalidConfig(
            "first column of the base design must be all-ones".into(),
        ));
    }

    let theta = DVector::from_vec(cfg.true_params.clone());
    let mut y = x_base * &theta;
    y[0] -= cfg.noise;
    y[n - 1] -= cfg.ratio * cfg.noise;

    let c = cfg.copies;
    let total = n + 2 * (c - 1);
    // source base-row position for each output row
    let src: Vec<usize> = std::iter::repeat_n(0, c)
        .chain(1..n - 1)
        .chain(std::iter::repeat_n(n - 1, c))
        .collect();
    debug_assert_eq!(src.len(), total);
    let x = DMatrix::from_fn(total, d, |i, j| x_base[(src[i], j)]);
    let yy = DVector::from_fn(total, |i, _| y[src[i]]);

    // the duplicated design must still have an invertible gram matrix
    let gram = x.transpose() * &x;
    if crate::ols::relative_pivot(&gram) < 1e-10 {
        return Err(MissError::SingularGram {
            pivot: crate::ols::relative_pivot(&gram),
        });
    }
    Dataset::new(x, yy, true)
}

/// Synthetic cancellation instance: `n - 2c` rows uniform in [-1, 1]^d
/// followed by two size-c all-ones clusters. Labels start from y* = X theta*
/// with theta* uniform in [-1, 1]^d; the first cluster gets +eps_i and the
/// second gets -eps_i, where eps_i = y*_i * Z_i and Z_i ~ Normal(1, sigma^2).
/// Non-cluster rows are left unperturbed. Test points are uniform in [-1, 1]^d.
pub fn generate_cancellation_cluster(cfg: &ClusterConfig) -> Result<(Dataset, DMatrix<f64>)> {
    cfg.validate()?;
    let (n, d, c) = (cfg.n, cfg.d, cfg.cluster_size);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let theta = DVector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0));
    let x = DMatrix::from_fn(n, d, |i, _j| {
        if i >= n - 2 * c {
            1.0
        } else {
            rng.random_range(-1.0..=1.0)
        }
    });
    let y_star = &x * &theta;

    let sigma = cfg.noise_var.sqrt();
    let normal = move |rng: &mut ChaCha8Rng| {
        // Box-Muller; one draw per call keeps the stream simple to reproduce
        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        1.0 + sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let mut y = y_star.clone();
    for i in n - 2 * c..n - c {
        y[i] += y_star[i] * normal(&mut rng);
    }
    for i in n - c..n {
        y[i] -= y_star[i] * normal(&mut rng);
    }

    let test_points = DMatrix::from_fn(cfg.n_test, d, |_, _| rng.random_range(-1.0..=1.0));
    Ok((Dataset::new(x, y, false)?, test_points))
}

/// Replace the row at position `index` by `count` identical copies. Copies
/// are inserted adjacent to the original, which keeps its row id; the fresh
/// copies get new unique ids.
pub fn duplicate_rows(ds: &Dataset, index: usize, count: usize) -> Result<Dataset> {
    if index >= ds.n() {
        return Err(MissError::InvalidIndex(index));
    }
    if count < 2 {
        return Err(MissError::InvalidConfig("count must be >= 2".into()));
    }
    let extra = count - 1;
    let n = ds.n() + extra;
    let d = ds.dim();
    let src = |i: usize| -> usize {
        if i <= index {
            i
        } else if i <= index + extra {
            index
        } else {
            i - extra
        }
    };
    let x = DMatrix::from_fn(n, d, |i, j| ds.x[(src(i), j)]);
    let y = DVector::from_fn(n, |i, _| ds.y[src(i)]);
    let mut next = ds.next_row_id();
    let mut row_ids = Vec::with_capacity(n);
    for i in 0..n {
        if i > index && i <= index + extra {
            row_ids.push(next);
            next += 1;
        } else {
            row_ids.push(ds.row_ids[src(i)]);
        }
    }
    Dataset::with_row_ids(x, y, ds.intercept, row_ids)
}

/// Disjoint (train, test) partition with `n_test` test rows, deterministic
/// given the seed.
pub fn train_test_split(ds: &Dataset, n_test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = ds.n();
    if n_test == 0 || n_test >= n {
        return Err(MissError::InvalidConfig(format!(
            "n_test = {n_test} must satisfy 0 < n_test < {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    let mut test_pos: Vec<usize> = perm[..n_test].to_vec();
    test_pos.sort_unstable();
    let train = ds.remove_positions(&test_pos)?;
    let test = ds.select_positions(&test_pos)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn base_design(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        random_design(n, d, seed, true)
    }

    #[test]
    fn load_csv_intercept_convention() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a,b,y\n1,2,3\n4,5,6\n7,8,9\n2,1,0").unwrap();
        let ds = load_csv(f.path(), "y", true).unwrap();
        assert_eq!((ds.n(), ds.dim()), (4, 3));
        assert!((0..4).all(|i| ds.x[(i, 0)] == 1.0));
        assert_eq!(ds.y.as_slice(), &[3.0, 6.0, 9.0, 0.0]);

        let ds = load_csv(f.path(), "y", false).unwrap();
        assert_eq!((ds.n(), ds.dim()), (4, 2));
        assert_eq!(ds.x[(1, 0)], 4.0);
    }

    #[test]
    fn load_csv_rejects_nan_cell() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a,y\n1,2\nNaN,4\n5,6\n7,8").unwrap();
        let err = load_csv(f.path(), "y", true).unwrap_err();
        match err {
            MissError::NonNumericCell { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn load_csv_rejects_duplicate_header() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a,a,y\n1,2,3\n1,2,3\n1,2,3\n1,2,3").unwrap();
        assert!(matches!(
            load_csv(f.path(), "y", true),
            Err(MissError::DuplicateHeader(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let x = base_design(6, 3, 9);
        let ds = Dataset::new(x, DVector::from_fn(6, |i, _| i as f64), true).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, f.path()).unwrap();
        let back = load_csv(f.path(), "y", true).unwrap();
        assert_eq!(ds.x, back.x);
        assert_eq!(ds.y, back.y);
    }

    #[test]
    fn label_process_noiseless_and_p_zero() {
        let x = base_design(5, 2, 3);
        let theta = vec![1.0, 2.0];
        // eps -> 0 limit checked via a tiny eps: residual of the exact fit is tiny
        let cfg = SyntheticConfig {
            true_params: theta.clone(),
            noise: 1e-14,
            ratio: 0.0,
            copies: 1,
            seed: 0,
        };
        let ds = generate_label_process(&x, &cfg).unwrap();
        let ideal = &ds.x * DVector::from_vec(theta.clone());
        assert!((&ds.y - &ideal).norm() < 1e-12);

        // p = 0 perturbs only the first row
        let cfg = SyntheticConfig {
            true_params: theta.clone(),
            noise: 0.5,
            ratio: 0.0,
            copies: 1,
            seed: 0,
        };
        let ds = generate_label_process(&x, &cfg).unwrap();
        let ideal = &ds.x * DVector::from_vec(theta);
        assert!((ds.y[0] - (ideal[0] - 0.5)).abs() < 1e-12);
        for i in 1..5 {
            assert!((ds.y[i] - ideal[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn label_process_matches_per_row_dot_products() {
        let x = base_design(5, 2, 42);
        let cfg = SyntheticConfig {
            true_params: vec![1.0, 2.0],
            noise: 0.5,
            ratio: 2.0,
            copies: 1,
            seed: 0,
        };
        let ds = generate_label_process(&x, &cfg).unwrap();
        for i in 0..5 {
            let mut expect = x[(i, 0)] * 1.0 + x[(i, 1)] * 2.0;
            if i == 0 {
                expect -= 0.5;
            }
            if i == 4 {
                expect -= 2.0 * 0.5;
            }
            assert!((ds.y[i] - expect).abs() < 1e-12, "row {i}");
        }
    }

    #[test]
    fn label_process_duplication_layout() {
        let x = base_design(5, 2, 7);
        let cfg = SyntheticConfig {
            true_params: vec![0.5, -1.0],
            noise: 0.3,
            ratio: 1.5,
            copies: 3,
            seed: 0,
        };
        let ds = generate_label_process(&x, &cfg).unwrap();
        assert_eq!(ds.n(), 5 + 2 * 2);
        for i in 0..3 {
            assert_eq!(ds.x.row(i), ds.x.row(0));
            assert_eq!(ds.y[i], ds.y[0]);
            assert_eq!(ds.x.row(ds.n() - 1 - i), ds.x.row(ds.n() - 1));
        }
    }

    #[test]
    fn cluster_structure() {
        let cfg = ClusterConfig {
            n: 200,
            d: 5,
            cluster_size: 10,
            noise_var: 0.2,
            n_test: 4,
            seed: 7,
        };
        let (ds, test) = generate_cancellation_cluster(&cfg).unwrap();
        assert_eq!(ds.n(), 200);
        assert_eq!(test.nrows(), 4);
        let mut ones = 0;
        for i in 0..ds.n() {
            if (0..5).all(|j| ds.x[(i, j)] == 1.0) {
                ones += 1;
            } else {
                assert!((0..5).all(|j| ds.x[(i, j)].abs() <= 1.0));
            }
        }
        assert_eq!(ones, 20);
        // bottom 20 rows are the all-ones clusters
        for i in 180..200 {
            assert!((0..5).all(|j| ds.x[(i, j)] == 1.0));
        }
    }

    #[test]
    fn cluster_deterministic() {
        let cfg = ClusterConfig {
            n: 60,
            d: 3,
            cluster_size: 5,
            noise_var: 0.2,
            n_test: 3,
            seed: 11,
        };
        let (a, ta) = generate_cancellation_cluster(&cfg).unwrap();
        let (b, tb) = generate_cancellation_cluster(&cfg).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(ta, tb);
    }

    #[test]
    fn duplicate_rows_counts_and_ids() {
        let x = base_design(3, 2, 1);
        let ds = Dataset::new(x, DVector::from_element(3, 1.0), true).unwrap();
        let dup = duplicate_rows(&ds, 1, 2).unwrap();
        assert_eq!(dup.n(), 4);
        assert_eq!(dup.x.row(1), dup.x.row(2));
        let mut ids = dup.row_ids.clone();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn split_is_deterministic_partition() {
        let x = base_design(10, 3, 5);
        let ds = Dataset::new(x, DVector::from_fn(10, |i, _| i as f64), true).unwrap();
        assert!(train_test_split(&ds, 0, 1).is_err());
        let (tr1, te1) = train_test_split(&ds, 3, 1).unwrap();
        let (tr2, te2) = train_test_split(&ds, 3, 1).unwrap();
        assert_eq!(tr1.row_ids, tr2.row_ids);
        assert_eq!(te1.row_ids, te2.row_ids);
        let mut all: Vec<u64> = tr1.row_ids.iter().chain(te1.row_ids.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<u64>>());
    }
}
