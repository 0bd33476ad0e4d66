//! Dense numeric datasets and CSV input/output.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariates `x` (row-major, `n × p`) and response `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n: usize,
    p: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    feature_names: Vec<String>,
}

/// How the response column is identified in a CSV header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Name(String),
    Index(usize),
}

impl From<&str> for Target {
    /// A bare non-negative integer is a column index, anything else a name.
    fn from(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => Target::Index(i),
            Err(_) => Target::Name(s.to_string()),
        }
    }
}

impl Dataset {
    /// Builds a dataset from row-major covariates. Feature names default to
    /// `x1..xp`.
    pub fn new(x: Vec<f64>, y: Vec<f64>, p: usize) -> Result<Self> {
        let names = (1..=p).map(|j| format!("x{j}")).collect();
        Self::with_names(x, y, names)
    }

    pub fn with_names(x: Vec<f64>, y: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        let p = feature_names.len();
        let n = y.len();
        if p == 0 {
            return Err(Error::InvalidData("at least one covariate is required".into()));
        }
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 rows, got {n}")));
        }
        if x.len() != n * p {
            return Err(Error::InvalidData(format!(
                "covariate matrix has {} entries, expected {n} x {p}",
                x.len()
            )));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite covariate at row {}, column {}",
                k / p,
                k % p
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite response at row {i}")));
        }
        Ok(Dataset {
            n,
            p,
            x,
            y,
            feature_names,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.p + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn check_feature(&self, j: usize) -> Result<()> {
        if j < self.p {
            Ok(())
        } else {
            Err(Error::FeatureOutOfRange { index: j, p: self.p })
        }
    }

    /// Sample variance of the response with the `n - 1` denominator.
    pub fn response_variance(&self) -> f64 {
        variance(&self.y)
    }

    /// Rows `rows` in the given order.
    pub fn subset_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut x = Vec::with_capacity(rows.len() * self.p);
        let mut y = Vec::with_capacity(rows.len());
        for &i in rows {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Self::with_names(x, y, self.feature_names.clone())
    }

    /// Keeps only the covariates in `columns`, in that order.
    pub fn select_columns(&self, columns: &[usize]) -> Result<Self> {
        for &j in columns {
            self.check_feature(j)?;
        }
        let mut x = Vec::with_capacity(self.n * columns.len());
        for i in 0..self.n {
            let row = self.row(i);
            x.extend(columns.iter().map(|&j| row[j]));
        }
        let names = columns.iter().map(|&j| self.feature_names[j].clone()).collect();
        Self::with_names(x, self.y.clone(), names)
    }

    pub fn drop_column(&self, j: usize) -> Result<Self> {
        self.check_feature(j)?;
        if self.p == 1 {
            return Err(Error::InvalidData("cannot drop the only covariate".into()));
        }
        let keep: Vec<usize> = (0..self.p).filter(|&k| k != j).collect();
        self.select_columns(&keep)
    }

    /// Appends `other`'s rows. Both must have the same width.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if other.p != self.p {
            return Err(Error::InvalidData("column counts differ".into()));
        }
        let mut x = self.x.clone();
        x.extend_from_slice(&other.x);
        let mut y = self.y.clone();
        y.extend_from_slice(&other.y);
        Self::with_names(x, y, self.feature_names.clone())
    }

    /// Reads a CSV with a header row. The target column becomes `y`; the
    /// remaining columns keep their order.
    pub fn load_csv(path: impl AsRef<Path>, target: impl Into<Target>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, target.into())
    }

    pub fn read_csv<R: std::io::Read>(reader: R, target: Target) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let t = match &target {
            Target::Name(name) => header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::TargetNotFound(name.clone()))?,
            Target::Index(i) if *i < header.len() => *i,
            Target::Index(i) => return Err(Error::TargetNotFound(i.to_string())),
        };
        if header.len() < 2 {
            return Err(Error::InvalidData("need a target and at least one covariate".into()));
        }
        let names: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != t)
            .map(|(_, h)| h.clone())
            .collect();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != header.len() {
                return Err(Error::InvalidData(format!(
                    "row {} has {} fields, header has {}",
                    r + 1,
                    record.len(),
                    header.len()
                )));
            }
            for (k, cell) in record.iter().enumerate() {
                let v = cell
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::BadCell {
                        row: r + 1,
                        column: header[k].clone(),
                        value: cell.to_string(),
                    })?;
                if k == t {
                    y.push(v);
                } else {
                    x.push(v);
                }
            }
        }
        Self::with_names(x, y, names)
    }

    /// Writes covariates followed by the response column `target_name`.
    pub fn write_csv<W: Write>(&self, writer: W, target_name: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(target_name);
        w.write_record(&header)?;
        let mut fields = Vec::with_capacity(self.p + 1);
        for i in 0..self.n {
            fields.clear();
            fields.extend(self.row(i).iter().map(|v| v.to_string()));
            fields.push(self.y[i].to_string());
            w.write_record(&fields)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, target_name: &str) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file), target_name)
    }
}

/// Sample variance, `n - 1` denominator. Zero for fewer than two values.
pub fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}
