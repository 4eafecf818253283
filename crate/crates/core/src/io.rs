//! File formats: JSON Lines datasets, JSON model files, prediction records
//! and heatmap CSVs.
//!
//! Floats are written by `serde_json`, which emits the shortest decimal that
//! round-trips, so write → read → write reproduces files byte for byte.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{adjacency_from_laplacian, matrix_from_rows, GraphLaplacian};
use crate::metric::MetricSpec;
use crate::regression::{fit, BandwidthSelection, Dataset, FittedModel, KernelSpec, Mode, RegressionError, ResponseSpace};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

fn at_line(line: usize, message: impl ToString) -> IoError {
    IoError::Line { line, message: message.to_string() }
}

/// Optional first line of a dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub m: usize,
    pub p: usize,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "is_laplacian_space")]
    pub space: ResponseSpace,
}

fn is_laplacian_space(s: &ResponseSpace) -> bool {
    *s == ResponseSpace::Laplacian
}

/// One observation `(x, L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub x: Vec<f64>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
}

/// A dataset as it appears on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub header: DatasetHeader,
    pub records: Vec<DatasetRecord>,
}

fn rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

impl DatasetFile {
    pub fn from_dataset(data: &Dataset) -> Self {
        let header = DatasetHeader { m: data.size(), p: data.dim(), bound: Some(data.bound()), space: data.space() };
        let records = (0..data.len())
            .map(|k| DatasetRecord { x: data.predictor(k).to_vec(), l: rows(data.response(k)) })
            .collect();
        Self { header, records }
    }

    /// Validates every record. Errors name the record's line, counting the
    /// header as line 1.
    pub fn to_dataset(&self) -> Result<Dataset, IoError> {
        self.build(&|k| k + 2)
    }

    fn build(&self, line_of: &dyn Fn(usize) -> usize) -> Result<Dataset, IoError> {
        let DatasetHeader { m, p, bound, space } = self.header;
        if self.records.len() < 2 {
            return Err(IoError::Format(format!("need at least 2 observations, got {}", self.records.len())));
        }
        let mut xs = Vec::with_capacity(self.records.len());
        let mut mats = Vec::with_capacity(self.records.len());
        for (k, rec) in self.records.iter().enumerate() {
            let line = line_of(k);
            if rec.x.len() != p {
                return Err(at_line(line, format!("\"x\" has {} entries, expected p = {p}", rec.x.len())));
            }
            if rec.x.iter().any(|v| !v.is_finite()) {
                return Err(at_line(line, "\"x\" has a non-finite entry"));
            }
            if rec.l.len() != m || rec.l.iter().any(|r| r.len() != m) {
                return Err(at_line(line, format!("\"L\" is not {m} x {m}")));
            }
            xs.push(rec.x.clone());
            mats.push(matrix_from_rows(&rec.l).map_err(|e| at_line(line, e))?);
        }
        Dataset::from_matrices(xs, mats, bound, space).map_err(|e| match e {
            RegressionError::InvalidResponse { index, source } => at_line(line_of(index), source),
            other => IoError::Regression(other),
        })
    }
}

/// Reads a JSON Lines dataset. Blank lines are skipped. Without a header,
/// `m` and `p` come from the first record and `W` from the data.
pub fn read_dataset(reader: impl BufRead) -> Result<Dataset, IoError> {
    let mut header: Option<DatasetHeader> = None;
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| at_line(line_no, e))?;
        let is_record = value.get("x").is_some() || value.get("L").is_some();
        if !is_record {
            if header.is_some() || !lines.is_empty() {
                return Err(at_line(line_no, "header must be the first line"));
            }
            header = Some(serde_json::from_value(value).map_err(|e| at_line(line_no, format!("bad header: {e}")))?);
            continue;
        }
        let rec: DatasetRecord = serde_json::from_value(value).map_err(|e| at_line(line_no, e))?;
        lines.push(line_no);
        records.push(rec);
    }
    if records.is_empty() {
        return Err(IoError::Format("dataset has no records".into()));
    }
    let header = header.unwrap_or_else(|| DatasetHeader {
        m: records[0].l.len(),
        p: records[0].x.len(),
        bound: None,
        space: ResponseSpace::Laplacian,
    });
    DatasetFile { header, records }.build(&|k| lines[k])
}

pub fn write_dataset(mut writer: impl Write, data: &Dataset) -> Result<(), IoError> {
    let file = DatasetFile::from_dataset(data);
    serde_json::to_writer(&mut writer, &file.header).map_err(std::io::Error::from)?;
    writer.write_all(b"\n")?;
    for rec in &file.records {
        serde_json::to_writer(&mut writer, rec).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// A fitted model on disk. The training data is stored inline because both
/// estimators need it at prediction time; loading refits from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub mode: Mode,
    pub metric: MetricSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_selection: Option<BandwidthSelection>,
    pub data: DatasetFile,
}

impl ModelFile {
    pub fn new(model: &FittedModel, selection: Option<BandwidthSelection>) -> Self {
        Self {
            mode: model.mode(),
            metric: model.metric(),
            kernel: model.kernel(),
            embedding_cap: model.embedding_cap(),
            bandwidth_selection: selection,
            data: DatasetFile::from_dataset(model.data()),
        }
    }

    pub fn to_model(&self) -> Result<FittedModel, IoError> {
        let data = self.data.to_dataset()?;
        let model = fit(data, self.mode, self.metric, self.kernel)?;
        if model.embedding_cap() != self.embedding_cap {
            return Err(IoError::Format(format!(
                "stored embedding cap {:?} does not match the data ({:?})",
                self.embedding_cap,
                model.embedding_cap()
            )));
        }
        Ok(model)
    }
}

pub fn write_model(mut writer: impl Write, file: &ModelFile) -> Result<(), IoError> {
    serde_json::to_writer(&mut writer, file).map_err(std::io::Error::from)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn read_model(reader: impl std::io::Read) -> Result<ModelFile, IoError> {
    serde_json::from_reader(reader).map_err(|e| IoError::Format(format!("bad model file: {e}")))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum QueryValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRecord {
    x: QueryValue,
}

/// Reads prediction points, one `{"x": [..]}` (or `{"x": number}`) per line.
pub fn read_queries(reader: impl BufRead, p: usize) -> Result<Vec<Vec<f64>>, IoError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let q: QueryRecord = serde_json::from_str(&text).map_err(|e| at_line(line_no, e))?;
        let x = match q.x {
            QueryValue::Scalar(v) => vec![v],
            QueryValue::Vector(v) => v,
        };
        if x.len() != p {
            return Err(at_line(line_no, format!("\"x\" has {} entries, expected p = {p}", x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(at_line(line_no, "\"x\" has a non-finite entry"));
        }
        out.push(x);
    }
    if out.is_empty() {
        return Err(IoError::Format("query file has no points".into()));
    }
    Ok(out)
}

/// One predicted network with its adjacency (edge-weight) matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub x: Vec<f64>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    pub adjacency: Vec<Vec<f64>>,
}

impl PredictionRecord {
    pub fn new(x: &[f64], lap: &GraphLaplacian) -> Self {
        let adj = adjacency_from_laplacian(lap);
        Self { x: x.to_vec(), l: lap.to_rows(), adjacency: rows(adj.matrix()) }
    }
}

pub fn write_predictions(mut writer: impl Write, records: &[PredictionRecord]) -> Result<(), IoError> {
    for rec in records {
        serde_json::to_writer(&mut writer, rec).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Formats a float exactly as it appears in the JSON outputs.
pub fn format_float(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}

/// An `m x m` matrix as comma-separated rows.
pub fn write_heatmap_csv(mut writer: impl Write, rows: &[Vec<f64>]) -> Result<(), IoError> {
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        writeln!(writer, "{}", line.join(","))?;
    }
    Ok(())
}
