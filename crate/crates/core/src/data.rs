//! Dataset representation, CSV ingestion, y-grids and fold assignment.

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::Scalar;

/// Observations of `(Y, W, Z, X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    y: Vec<T>,
    w: Vec<u8>,
    z: Vec<u8>,
    x: Array2<T>,
    covariate_names: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset with covariates named `x1..xd`.
    pub fn new(y: Vec<T>, w: Vec<u8>, z: Vec<u8>, x: Array2<T>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(y, w, z, x, names)
    }

    pub fn with_names(
        y: Vec<T>,
        w: Vec<u8>,
        z: Vec<u8>,
        x: Array2<T>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::Input("dataset must contain at least one row".into()));
        }
        if w.len() != n || z.len() != n || x.nrows() != n {
            return Err(Error::Shape(format!(
                "column lengths differ: y={}, w={}, z={}, x rows={}",
                n,
                w.len(),
                z.len(),
                x.nrows()
            )));
        }
        if covariate_names.len() != x.ncols() {
            return Err(Error::Shape(format!(
                "{} covariate names for {} columns",
                covariate_names.len(),
                x.ncols()
            )));
        }
        if let Some(i) = w.iter().position(|&v| v > 1) {
            return Err(Error::Validation(format!("treatment at row {i} is {}, expected 0 or 1", w[i])));
        }
        if let Some(i) = z.iter().position(|&v| v > 1) {
            return Err(Error::Validation(format!("instrument at row {i} is {}, expected 0 or 1", z[i])));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("outcome at row {i} is not finite")));
        }
        if let Some(((i, j), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!("covariate ({i}, {j}) is not finite")));
        }
        Ok(Self { y, w, z, x, covariate_names })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Covariate count `d`.
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn w(&self) -> &[u8] {
        &self.w
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    pub fn x(&self) -> &Array2<T> {
        &self.x
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            y: indices.iter().map(|&i| self.y[i]).collect(),
            w: indices.iter().map(|&i| self.w[i]).collect(),
            z: indices.iter().map(|&i| self.z[i]).collect(),
            x: self.x.select(Axis(0), indices),
            covariate_names: self.covariate_names.clone(),
        }
    }
}

/// Strictly increasing evaluation levels for the distributional curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YGrid<T> {
    levels: Vec<T>,
}

impl<T: Scalar> YGrid<T> {
    pub fn new(levels: Vec<T>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Input("y-grid needs at least one level".into()));
        }
        if levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("y-grid levels must be finite".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input("y-grid levels must be strictly increasing".into()));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[T] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Empirical percentile (0..=100) of an already sorted slice, interpolating
/// linearly between order statistics.
pub fn percentile_sorted<T: Scalar>(sorted: &[T], pct: f64) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = pct / 100.0 * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = T::lit(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// `size` equally spaced levels between the `lo_pct` and `hi_pct` empirical
/// percentiles of `y`. Coincident levels (a degenerate range) collapse.
pub fn build_ygrid<T: Scalar>(y: &[T], size: usize, lo_pct: f64, hi_pct: f64) -> Result<YGrid<T>> {
    if y.is_empty() {
        return Err(Error::Input("cannot build a y-grid from an empty outcome vector".into()));
    }
    if size == 0 {
        return Err(Error::Config("y-grid size must be at least 1".into()));
    }
    if !(0.0..=100.0).contains(&lo_pct) || !(0.0..=100.0).contains(&hi_pct) || lo_pct >= hi_pct {
        return Err(Error::Config(format!(
            "percentile range must satisfy 0 <= lo < hi <= 100, got ({lo_pct}, {hi_pct})"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("outcome vector contains non-finite values".into()));
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let lo = percentile_sorted(&sorted, lo_pct);
    let hi = percentile_sorted(&sorted, hi_pct);
    let mut levels: Vec<T> = if size == 1 {
        vec![(lo + hi) / T::lit(2.0)]
    } else {
        let step = (hi - lo) / T::from_count(size - 1);
        (0..size)
            .map(|i| if i == size - 1 { hi } else { lo + step * T::from_count(i) })
            .collect()
    };
    levels.dedup_by(|b, a| *b <= *a);
    YGrid::new(levels)
}

/// Random partition of `0..n` into `K` balanced folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    pub fn fold_of(&self) -> &[usize] {
        &self.fold_of
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Estimation-set indices `I_k`, ascending.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    /// Training-set indices (all folds but `fold`), ascending.
    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 || k > n {
        return Err(Error::Config(format!("fold count must satisfy 2 <= K <= n, got K={k}, n={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "kfold", &[n as u64, k as u64]));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(FoldAssignment { fold_of, k })
}

/// Maps CSV columns onto the dataset roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub outcome: String,
    pub treatment: String,
    pub instrument: String,
    pub covariates: Vec<String>,
}

impl ColumnSchema {
    /// Schema used for simulated data: `y,w,z,x1..xd`.
    pub fn simulated(d: usize) -> Self {
        Self {
            outcome: "y".into(),
            treatment: "w".into(),
            instrument: "z".into(),
            covariates: (1..=d).map(|j| format!("x{j}")).collect(),
        }
    }
}

fn parse_cell<T: Scalar>(raw: &str, row: usize, column: &str) -> Result<T> {
    raw.trim().parse::<T>().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("cannot parse '{raw}' as a number"),
    })
}

fn parse_binary<T: Scalar>(raw: &str, row: usize, column: &str) -> Result<u8> {
    let v: T = parse_cell(raw, row, column)?;
    if v == T::zero() {
        Ok(0)
    } else if v == T::one() {
        Ok(1)
    } else {
        Err(Error::Validation(format!(
            "column '{column}' row {row} has value {raw}, expected 0 or 1"
        )))
    }
}

/// Reads a comma-separated file with a header row. Row numbers in errors
/// are 1-based data rows (the header is not counted).
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<Dataset<T>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };
    let iy = find(&schema.outcome)?;
    let iw = find(&schema.treatment)?;
    let iz = find(&schema.instrument)?;
    let ix = schema.covariates.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let (mut y, mut w, mut z, mut xs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |i: usize| record.get(i).unwrap_or("");
        y.push(parse_cell::<T>(cell(iy), row, &schema.outcome)?);
        w.push(parse_binary::<T>(cell(iw), row, &schema.treatment)?);
        z.push(parse_binary::<T>(cell(iz), row, &schema.instrument)?);
        for (&i, name) in ix.iter().zip(&schema.covariates) {
            xs.push(parse_cell::<T>(cell(i), row, name)?);
        }
    }
    let n = y.len();
    let x = Array2::from_shape_vec((n, ix.len()), xs).map_err(|e| Error::Shape(e.to_string()))?;
    Dataset::with_names(y, w, z, x, schema.covariates.clone())
}

/// Writes `dataset` with the given column names; the inverse of [`load_csv`].
pub fn write_csv<T: Scalar>(dataset: &Dataset<T>, path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<()> {
    if schema.covariates.len() != dataset.dim() {
        return Err(Error::Schema(format!(
            "schema names {} covariates, dataset has {}",
            schema.covariates.len(),
            dataset.dim()
        )));
    }
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec![schema.outcome.clone(), schema.treatment.clone(), schema.instrument.clone()];
    header.extend(schema.covariates.iter().cloned());
    writer.write_record(&header)?;
    for i in 0..dataset.len() {
        let mut rec = vec![dataset.y[i].to_string(), dataset.w[i].to_string(), dataset.z[i].to_string()];
        rec.extend(dataset.x.row(i).iter().map(|v| v.to_string()));
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}
