use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::{HouseholdRecord, Intervention, Value};
use super::schema::{FeatureKind, Schema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Binary,
    OneHot,
    Continuous,
}

/// Where an encoded column came from; used to render rules with the
/// original feature names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnInfo {
    /// `<feature>` or `<feature>=<level>` for one-hot columns.
    pub name: String,
    pub feature: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    /// For binary columns with named values: (false label, true label).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<[String; 2]>,
    pub units: String,
}

/// Numeric design matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub columns: Vec<ColumnInfo>,
    matrix: Vec<f64>,
    pub labels: Vec<Intervention>,
    pub row_ids: Vec<String>,
}

impl EncodedDataset {
    pub fn from_rows(
        columns: Vec<ColumnInfo>,
        rows: Vec<Vec<f64>>,
        labels: Vec<Intervention>,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        let width = columns.len();
        if labels.len() != rows.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: labels.len(),
            });
        }
        if row_ids.len() != rows.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: row_ids.len(),
            });
        }
        let mut matrix = Vec::with_capacity(rows.len() * width);
        for r in rows {
            if r.len() != width {
                return Err(Error::WidthMismatch {
                    expected: width,
                    got: r.len(),
                });
            }
            matrix.extend(r);
        }
        Ok(EncodedDataset {
            columns,
            matrix,
            labels,
            row_ids,
        })
    }

    /// Plain numeric columns named `x0..`, labels all `ES`, ids `0..`.
    /// Convenient for tests and for the C interface.
    pub fn from_matrix(n_cols: usize, matrix: Vec<f64>) -> Result<Self> {
        if n_cols == 0 || matrix.len() % n_cols != 0 {
            return Err(Error::WidthMismatch {
                expected: n_cols,
                got: matrix.len(),
            });
        }
        let n = matrix.len() / n_cols;
        let columns = (0..n_cols)
            .map(|j| ColumnInfo {
                name: format!("x{j}"),
                feature: format!("x{j}"),
                kind: ColumnKind::Continuous,
                level: None,
                labels: None,
                units: "none".into(),
            })
            .collect();
        Ok(EncodedDataset {
            columns,
            matrix,
            labels: vec![Intervention::Es; n],
            row_ids: (0..n).map(|i| i.to_string()).collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_cols();
        &self.matrix[i * w..(i + 1) * w]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.n_cols() + col]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.matrix.chunks_exact(self.n_cols().max(1)).take(self.n_rows())
    }

    /// Column-major copy, one `Vec` per column.
    pub fn columns_major(&self) -> Vec<Vec<f64>> {
        let (n, w) = (self.n_rows(), self.n_cols());
        let mut cols = vec![Vec::with_capacity(n); w];
        for row in self.rows() {
            for (c, &x) in cols.iter_mut().zip(row) {
                c.push(x);
            }
        }
        cols
    }

    pub fn subset(&self, indices: &[usize]) -> EncodedDataset {
        let w = self.n_cols();
        let mut matrix = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            matrix.extend_from_slice(self.row(i));
        }
        EncodedDataset {
            columns: self.columns.clone(),
            matrix,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// CSV export: id, encoded columns, label.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["HouseholdID".to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        header.push("Intervention".into());
        w.write_record(&header)?;
        for (i, row) in self.rows().enumerate() {
            let mut fields = Vec::with_capacity(header.len());
            fields.push(self.row_ids[i].clone());
            fields.extend(row.iter().map(|x| x.to_string()));
            fields.push(self.labels[i].code().to_string());
            w.write_record(&fields)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// One-hot encodes records in schema order. Missing categoricals become an
/// all-zero group; missing binaries and continuous values take the column
/// mean over `records` (0 if the whole column is missing).
pub fn one_hot_encode(records: &[HouseholdRecord], schema: &Schema) -> Result<EncodedDataset> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    for r in records {
        r.check(schema)?;
    }

    let mut columns = Vec::with_capacity(schema.encoded_width());
    for f in &schema.features {
        match &f.kind {
            FeatureKind::Binary { labels } => columns.push(ColumnInfo {
                name: f.name.clone(),
                feature: f.name.clone(),
                kind: ColumnKind::Binary,
                level: None,
                labels: labels.clone(),
                units: f.units.clone(),
            }),
            FeatureKind::Categorical { levels, .. } => {
                columns.extend(levels.iter().map(|l| ColumnInfo {
                    name: format!("{}={}", f.name, l),
                    feature: f.name.clone(),
                    kind: ColumnKind::OneHot,
                    level: Some(l.clone()),
                    labels: None,
                    units: f.units.clone(),
                }))
            }
            FeatureKind::Continuous => columns.push(ColumnInfo {
                name: f.name.clone(),
                feature: f.name.clone(),
                kind: ColumnKind::Continuous,
                level: None,
                labels: None,
                units: f.units.clone(),
            }),
        }
    }

    // Imputation means for scalar features.
    let means: Vec<f64> = (0..schema.len())
        .map(|j| {
            let (sum, n) = records
                .iter()
                .filter_map(|r| match r.values[j] {
                    Value::Number(x) => Some(x),
                    Value::Flag(b) => Some(f64::from(u8::from(b))),
                    _ => None,
                })
                .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        })
        .collect();

    let width = columns.len();
    let mut matrix = Vec::with_capacity(records.len() * width);
    for r in records {
        for (j, f) in schema.features.iter().enumerate() {
            match (&f.kind, r.values[j]) {
                (FeatureKind::Categorical { levels, .. }, v) => {
                    let hot = v.as_level();
                    matrix.extend((0..levels.len()).map(|l| if hot == Some(l) { 1.0 } else { 0.0 }));
                }
                (_, Value::Number(x)) => matrix.push(x),
                (_, Value::Flag(b)) => matrix.push(f64::from(u8::from(b))),
                (_, _) => matrix.push(means[j]),
            }
        }
    }

    Ok(EncodedDataset {
        columns,
        matrix,
        labels: records.iter().map(|r| r.actual).collect(),
        row_ids: records.iter().map(|r| r.id.clone()).collect(),
    })
}

/// Seeded train/test partition.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: EncodedDataset,
    pub test: EncodedDataset,
    /// Row positions in the input for train and test, in split order.
    pub train_index: Vec<usize>,
    pub test_index: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
}

/// Train row count for `n` rows at `ratio`: `floor(ratio * n)`.
pub fn train_size(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).floor() as usize).min(n)
}

/// Seeded shuffle then prefix cut.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio {ratio} not in (0, 1]")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = perm.split_off(train_size(n, ratio));
    Ok((perm, test))
}

pub fn split(data: &EncodedDataset, ratio: f64, seed: u64) -> Result<SplitPair> {
    let (train_index, test_index) = split_indices(data.n_rows(), ratio, seed)?;
    Ok(SplitPair {
        train: data.subset(&train_index),
        test: data.subset(&test_index),
        train_index,
        test_index,
        seed,
        ratio,
    })
}
