//! Long-format CSV ingestion: one row per (individual, period).

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{IndividualBlock, PanelDataset};
use crate::error::{QbldError, Result};

/// Which CSV columns feed the outcome and the two design matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    #[serde(default = "default_id")]
    pub id_column: String,
    #[serde(default = "default_time")]
    pub time_column: String,
    #[serde(default = "default_y")]
    pub y_column: String,
    pub x_columns: Vec<String>,
    pub s_columns: Vec<String>,
    #[serde(default)]
    pub x_intercept: bool,
    #[serde(default)]
    pub s_intercept: bool,
}

fn default_id() -> String {
    "id".into()
}
fn default_time() -> String {
    "time".into()
}
fn default_y() -> String {
    "y".into()
}

impl ColumnSpec {
    pub fn new(x_columns: &[&str], s_columns: &[&str], x_intercept: bool, s_intercept: bool) -> Self {
        Self {
            id_column: default_id(),
            time_column: default_time(),
            y_column: default_y(),
            x_columns: x_columns.iter().map(|c| c.to_string()).collect(),
            s_columns: s_columns.iter().map(|c| c.to_string()).collect(),
            x_intercept,
            s_intercept,
        }
    }
}

struct Row {
    time: f64,
    y: bool,
    x: Vec<f64>,
    s: Vec<f64>,
    line: usize,
}

fn parse_number(raw: &str, column: &str, line: usize) -> Result<f64> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
        return Err(QbldError::Parse {
            row: line,
            message: format!("missing value in column `{column}`"),
        });
    }
    let v: f64 = raw.parse().map_err(|_| QbldError::Parse {
        row: line,
        message: format!("column `{column}`: cannot parse `{raw}` as a number"),
    })?;
    if !v.is_finite() {
        return Err(QbldError::Parse {
            row: line,
            message: format!("column `{column}`: non-finite value `{raw}`"),
        });
    }
    Ok(v)
}

pub fn load_panel_csv(path: impl AsRef<Path>, schema: &ColumnSpec) -> Result<PanelDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let index_of = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| QbldError::Schema(format!("missing column `{name}`")))
    };
    let id_idx = index_of(&schema.id_column)?;
    let time_idx = index_of(&schema.time_column)?;
    let y_idx = index_of(&schema.y_column)?;
    let x_idx = schema
        .x_columns
        .iter()
        .map(|c| index_of(c))
        .collect::<Result<Vec<_>>>()?;
    let s_idx = schema
        .s_columns
        .iter()
        .map(|c| index_of(c))
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Row>> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |idx: usize| {
            record.get(idx).ok_or_else(|| QbldError::Parse {
                row: line,
                message: format!("row has {} fields, expected {}", record.len(), headers.len()),
            })
        };
        let id = field(id_idx)?.to_string();
        if id.is_empty() {
            return Err(QbldError::Parse {
                row: line,
                message: "empty id".into(),
            });
        }
        let time = parse_number(field(time_idx)?, &schema.time_column, line)?;
        let yv = parse_number(field(y_idx)?, &schema.y_column, line)?;
        let y = if yv == 1.0 {
            true
        } else if yv == 0.0 {
            false
        } else {
            return Err(QbldError::Parse {
                row: line,
                message: format!("outcome `{}` = {yv} is not binary", schema.y_column),
            });
        };
        let x = x_idx
            .iter()
            .zip(&schema.x_columns)
            .map(|(&j, name)| parse_number(field(j)?, name, line))
            .collect::<Result<Vec<_>>>()?;
        let s = s_idx
            .iter()
            .zip(&schema.s_columns)
            .map(|(&j, name)| parse_number(field(j)?, name, line))
            .collect::<Result<Vec<_>>>()?;
        let entry = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        entry.push(Row { time, y, x, s, line });
    }
    if order.is_empty() {
        return Err(QbldError::Schema("CSV has no data rows".into()));
    }

    let k = schema.x_columns.len() + schema.x_intercept as usize;
    let l = schema.s_columns.len() + schema.s_intercept as usize;
    let mut individuals = Vec::with_capacity(order.len());
    for id in order {
        let mut rows = groups.remove(&id).unwrap_or_default();
        if rows.is_empty() {
            return Err(QbldError::EmptyIndividual(id));
        }
        rows.sort_by(|a, b| a.time.total_cmp(&b.time));
        for pair in rows.windows(2) {
            if pair[0].time == pair[1].time {
                return Err(QbldError::Parse {
                    row: pair[1].line,
                    message: format!("duplicate time {} for id `{id}`", pair[1].time),
                });
            }
        }
        let t = rows.len();
        let x = DMatrix::from_fn(t, k, |r, c| {
            if schema.x_intercept {
                if c == 0 {
                    1.0
                } else {
                    rows[r].x[c - 1]
                }
            } else {
                rows[r].x[c]
            }
        });
        let s = DMatrix::from_fn(t, l, |r, c| {
            if schema.s_intercept {
                if c == 0 {
                    1.0
                } else {
                    rows[r].s[c - 1]
                }
            } else {
                rows[r].s[c]
            }
        });
        individuals.push(IndividualBlock {
            id,
            time: rows.iter().map(|r| r.time).collect(),
            y: rows.iter().map(|r| r.y).collect(),
            x,
            s,
        });
    }
    PanelDataset::new(
        individuals,
        schema.x_columns.clone(),
        schema.s_columns.clone(),
        schema.x_intercept,
        schema.s_intercept,
    )
}

/// Writes the dataset in the long format read by [`load_panel_csv`].
/// Columns shared between `X` and `S` are written once; injected intercepts
/// are not written.
pub fn write_panel_csv(data: &PanelDataset, path: impl AsRef<Path>) -> Result<()> {
    write_panel_to(data, std::fs::File::create(path.as_ref())?)
}

/// [`write_panel_csv`] into any writer.
pub fn write_panel_to<W: std::io::Write>(data: &PanelDataset, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    write_panel(data, &mut writer)?;
    writer.flush()?;
    Ok(())
}

fn write_panel<W: std::io::Write>(
    data: &PanelDataset,
    writer: &mut csv::Writer<W>,
) -> Result<()> {
    let x_off = data.x_intercept() as usize;
    let s_off = data.s_intercept() as usize;
    // (name, source matrix, column index)
    let mut columns: Vec<(&str, bool, usize)> = Vec::new();
    for (j, name) in data.x_columns().iter().enumerate() {
        columns.push((name, true, j + x_off));
    }
    for (j, name) in data.s_columns().iter().enumerate() {
        if !data.x_columns().contains(name) {
            columns.push((name, false, j + s_off));
        }
    }
    let mut header = vec!["id".to_string(), "time".to_string(), "y".to_string()];
    header.extend(columns.iter().map(|c| c.0.to_string()));
    writer.write_record(&header)?;
    for block in data.individuals() {
        for t in 0..block.periods() {
            let mut record = Vec::with_capacity(header.len());
            record.push(block.id.clone());
            record.push(block.time[t].to_string());
            record.push(if block.y[t] { "1" } else { "0" }.to_string());
            for &(_, from_x, j) in &columns {
                let v = if from_x { block.x[(t, j)] } else { block.s[(t, j)] };
                record.push(v.to_string());
            }
            writer.write_record(&record)?;
        }
    }
    Ok(())
}
