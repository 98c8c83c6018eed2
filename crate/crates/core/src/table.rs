//! Row-oriented training tables shared by the forest, diagnostics and
//! conformal modules, plus the design CSV format.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid_data::CellId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Classification,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::Classification => "classification",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Regression(Vec<f64>),
    /// Binary labels, 1 = event.
    Classification(Vec<u8>),
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Regression(y) => y.len(),
            Target::Classification(y) => y.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Target::Regression(_) => Task::Regression,
            Target::Classification(_) => Task::Classification,
        }
    }

    /// Response of row `i` as a float (labels map to 0.0 / 1.0).
    pub fn value(&self, i: usize) -> f64 {
        match self {
            Target::Regression(y) => y[i],
            Target::Classification(y) => y[i] as f64,
        }
    }
}

/// Audit tag of a design row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowId {
    pub cell: CellId,
    pub scenario: String,
}

/// Predictor matrix (row-major) with a response and per-row audit ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTable {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    target: Target,
    row_ids: Vec<RowId>,
}

impl TrainingTable {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>, target: Target, row_ids: Vec<RowId>) -> Result<Self> {
        if rows.len() != target.len() {
            return Err(Error::LengthMismatch { left: rows.len(), right: target.len() });
        }
        if rows.len() != row_ids.len() {
            return Err(Error::LengthMismatch { left: rows.len(), right: row_ids.len() });
        }
        for r in &rows {
            if r.len() != names.len() {
                return Err(Error::LengthMismatch { left: r.len(), right: names.len() });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Range("training rows must be finite".into()));
            }
        }
        match &target {
            Target::Regression(y) if y.iter().any(|v| !v.is_finite()) => {
                return Err(Error::Range("regression responses must be finite".into()))
            }
            Target::Classification(y) if y.iter().any(|v| *v > 1) => {
                return Err(Error::Range("labels must be 0 or 1".into()))
            }
            _ => {}
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Schema(format!("duplicate predictor name `{dup}`")));
        }
        Ok(Self { names, rows, target, row_ids })
    }

    /// Table without audit ids (rows tagged with a placeholder cell).
    pub fn from_rows(names: Vec<String>, rows: Vec<Vec<f64>>, target: Target) -> Result<Self> {
        let ids = (0..rows.len()).map(|_| RowId { cell: CellId { lat_index: 0, lon_index: 0 }, scenario: String::new() }).collect();
        Self::new(names, rows, target, ids)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn task(&self) -> Task {
        self.target.task()
    }

    pub fn row_ids(&self) -> &[RowId] {
        &self.row_ids
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn labels(&self) -> Option<&[u8]> {
        match &self.target {
            Target::Classification(y) => Some(y),
            Target::Regression(_) => None,
        }
    }

    pub fn subset(&self, indices: &[usize]) -> TrainingTable {
        let target = match &self.target {
            Target::Regression(y) => Target::Regression(indices.iter().map(|&i| y[i]).collect()),
            Target::Classification(y) => Target::Classification(indices.iter().map(|&i| y[i]).collect()),
        };
        TrainingTable {
            names: self.names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            target,
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    /// Appends a predictor column.
    pub fn with_column(mut self, name: &str, values: &[f64]) -> Result<Self> {
        if values.len() != self.rows.len() {
            return Err(Error::LengthMismatch { left: values.len(), right: self.rows.len() });
        }
        if self.index_of(name).is_some() {
            return Err(Error::Schema(format!("duplicate predictor name `{name}`")));
        }
        self.names.push(name.to_string());
        for (r, v) in self.rows.iter_mut().zip(values) {
            r.push(*v);
        }
        Ok(self)
    }

    /// SHA-256 over predictor names, values and responses.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.task().as_str().as_bytes());
        for n in &self.names {
            h.update((n.len() as u64).to_le_bytes());
            h.update(n.as_bytes());
        }
        h.update((self.rows.len() as u64).to_le_bytes());
        for (i, r) in self.rows.iter().enumerate() {
            for v in r {
                h.update(v.to_bits().to_le_bytes());
            }
            h.update(self.target.value(i).to_bits().to_le_bytes());
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes a design as `cell_lat,cell_lon,scenario,label_or_gain,<predictors...>`.
pub fn write_design_csv<W: Write>(table: &TrainingTable, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["cell_lat".to_string(), "cell_lon".into(), "scenario".into(), "label_or_gain".into()];
    header.extend(table.names.iter().cloned());
    wtr.write_record(&header)?;
    for (i, (row, id)) in table.rows.iter().zip(&table.row_ids).enumerate() {
        let response = match &table.target {
            Target::Regression(y) => y[i].to_string(),
            Target::Classification(y) => y[i].to_string(),
        };
        let mut rec = vec![id.cell.lat_index.to_string(), id.cell.lon_index.to_string(), id.scenario.clone(), response];
        rec.extend(row.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a design CSV, interpreting `label_or_gain` according to `task`.
pub fn read_design_csv<R: Read>(reader: R, task: Task) -> Result<TrainingTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.len() < 4 || header[..4] != ["cell_lat", "cell_lon", "scenario", "label_or_gain"] {
        return Err(Error::Schema("design header must start with cell_lat,cell_lon,scenario,label_or_gain".into()));
    }
    let names = header[4..].to_vec();
    let (mut rows, mut ids, mut gains, mut labels) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for record in rdr.records() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Schema(format!("row has {} fields, expected {}", record.len(), header.len())));
        }
        let int = |s: &str, col: &str| -> Result<i32> {
            s.trim().parse().map_err(|_| Error::Schema(format!("column `{col}`: bad integer `{s}`")))
        };
        let num = |s: &str, col: &str| -> Result<f64> {
            let v: f64 = s.trim().parse().map_err(|_| Error::Schema(format!("column `{col}`: bad number `{s}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Range(format!("column `{col}`: non-finite value")))
            }
        };
        ids.push(RowId {
            cell: CellId::new(int(&record[0], "cell_lat")?, int(&record[1], "cell_lon")?)?,
            scenario: record[2].to_string(),
        });
        match task {
            Task::Regression => gains.push(num(&record[3], "label_or_gain")?),
            Task::Classification => match record[3].trim() {
                "0" => labels.push(0u8),
                "1" => labels.push(1u8),
                other => return Err(Error::Range(format!("label `{other}` is not 0 or 1"))),
            },
        }
        rows.push(names.iter().enumerate().map(|(j, n)| num(&record[4 + j], n)).collect::<Result<Vec<_>>>()?);
    }
    let target = match task {
        Task::Regression => Target::Regression(gains),
        Task::Classification => Target::Classification(labels),
    };
    TrainingTable::new(names, rows, target, ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> TrainingTable {
        TrainingTable::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 0.1], vec![2.5, -3.0]],
            Target::Classification(vec![0, 1]),
            vec![
                RowId { cell: CellId::new(45, -120).unwrap(), scenario: "july".into() },
                RowId { cell: CellId::new(46, -121).unwrap(), scenario: "june".into() },
            ],
        )
        .unwrap()
    }

    #[test]
    fn design_csv_round_trip() {
        let t = table();
        let mut buf = Vec::new();
        write_design_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("cell_lat,cell_lon,scenario,label_or_gain,a,b\n45,-120,july,0,1,0.1\n"));
        assert_eq!(read_design_csv(buf.as_slice(), Task::Classification).unwrap(), t);
        assert!(read_design_csv(buf.as_slice(), Task::Regression).is_ok());
    }

    #[test]
    fn validation() {
        assert!(TrainingTable::from_rows(vec!["a".into()], vec![vec![1.0, 2.0]], Target::Regression(vec![1.0])).is_err());
        assert!(TrainingTable::from_rows(vec!["a".into()], vec![vec![f64::NAN]], Target::Regression(vec![1.0])).is_err());
        assert!(TrainingTable::from_rows(vec!["a".into()], vec![vec![1.0]], Target::Classification(vec![2])).is_err());
        assert!(TrainingTable::from_rows(vec!["a".into(), "a".into()], vec![vec![1.0, 1.0]], Target::Regression(vec![1.0])).is_err());
    }

    #[test]
    fn digest_tracks_values() {
        let t = table();
        assert_eq!(t.digest(), table().digest());
        let other = t.subset(&[1, 0]);
        assert_ne!(t.digest(), other.digest());
    }
}
