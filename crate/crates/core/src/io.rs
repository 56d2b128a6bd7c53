//! CSV dataset ingestion and plot-ready CSV reports.
//!
//! Reports start with `# key=value` metadata lines, followed by a header row
//! and data rows. Floats are written with 17 significant digits so that
//! parsing a report back yields bit-identical values.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bounds::BoundReport;
use crate::error::{Error, Result};
use crate::experiments::{ClassificationRecord, TradeoffRecord};
use crate::model::Dataset;

/// A single report cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<usize>> for Cell {
    fn from(v: Option<usize>) -> Self {
        v.map_or(Cell::Empty, Cell::from)
    }
}

/// Shortest-safe rendering: 17 significant digits, `inf`/`-inf`/`NaN` spelled
/// the way `f64::from_str` accepts them.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// A report: ordered metadata, a header, and rows of the header's arity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportTable {
    pub metadata: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ReportTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            metadata: Vec::new(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.header.len() {
            return Err(Error::ShapeError(format!(
                "row has {} cells, header has {}",
                row.len(),
                self.header.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn from_tradeoff(records: &[TradeoffRecord]) -> Self {
        let mut table = Self::new(&[
            "scheme",
            "schedule",
            "epsilon",
            "n",
            "d",
            "n_prime",
            "eta_mean",
            "eta_std",
            "trials",
            "base_seed",
        ]);
        for r in records {
            table.rows.push(vec![
                r.scheme().as_str().into(),
                r.arm.label().into(),
                r.epsilon.into(),
                r.n.into(),
                r.d.into(),
                r.n_prime.into(),
                r.eta_mean.into(),
                r.eta_std.into(),
                r.trials.into(),
                r.base_seed.into(),
            ]);
        }
        table
    }

    pub fn from_classification(records: &[ClassificationRecord]) -> Self {
        let mut table = Self::new(&[
            "scheme",
            "schedule",
            "epsilon",
            "n",
            "n_train",
            "n_prime",
            "test_error",
            "test_error_std",
            "split_fraction",
            "trials",
            "base_seed",
        ]);
        for r in records {
            table.rows.push(vec![
                r.arm.scheme().as_str().into(),
                r.arm.label().into(),
                r.epsilon.into(),
                r.n.into(),
                r.n_train.into(),
                r.n_prime.into(),
                r.test_error.into(),
                r.test_error_std.into(),
                r.split_fraction.into(),
                r.trials.into(),
                r.base_seed.into(),
            ]);
        }
        table
    }
}

/// Column layout used for bound reports.
pub const BOUND_COLUMNS: [&str; 15] = [
    "bound",
    "epsilon",
    "n_prime",
    "status",
    "delta_free",
    "eta_bound",
    "probability_lower_bound",
    "probability_raw",
    "kappa",
    "r",
    "sigma_sq",
    "Delta",
    "l1",
    "l2",
    "unresolved",
];

/// One bound-report row; a vacuous bound is written with `eta_bound = inf`.
pub fn bound_row(
    name: &str,
    epsilon: f64,
    n_prime: Option<usize>,
    report: &Result<BoundReport>,
) -> Vec<Cell> {
    let get = |r: &BoundReport, k: &str| r.get(k).map_or(Cell::Empty, Cell::Float);
    match report {
        Ok(r) => vec![
            name.into(),
            epsilon.into(),
            n_prime.into(),
            "ok".into(),
            r.delta_free.into(),
            r.eta_bound.into(),
            r.probability_lower_bound.into(),
            get(r, "probability_raw"),
            get(r, "kappa"),
            get(r, "r"),
            get(r, "sigma_sq"),
            get(r, "Delta"),
            get(r, "l1"),
            get(r, "l2"),
            Cell::Text(r.unresolved.join(";")),
        ],
        Err(e) => {
            let mut row = vec![
                name.into(),
                epsilon.into(),
                n_prime.into(),
                Cell::Text(match e {
                    Error::ConditionViolated(_) => "vacuous".into(),
                    other => format!("error: {other}"),
                }),
                Cell::Empty,
                f64::INFINITY.into(),
                0.0.into(),
            ];
            row.resize(BOUND_COLUMNS.len(), Cell::Empty);
            row
        }
    }
}

/// Output formats of [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
}

/// Writes a report to `out`.
pub fn write_report<W: Write>(t: &ReportTable, out: W, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Csv => write_csv(t, out),
    }
}

fn write_csv<W: Write>(t: &ReportTable, mut out: W) -> Result<()> {
    for (k, v) in &t.metadata {
        writeln!(out, "# {k}={v}")?;
    }
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(&t.header).map_err(csv_io)?;
    for (i, row) in t.rows.iter().enumerate() {
        if row.len() != t.header.len() {
            return Err(Error::ShapeError(format!(
                "row {i} does not match the header"
            )));
        }
        writer
            .write_record(row.iter().map(Cell::render))
            .map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes a report file.
pub fn emit_report(t: &ReportTable, path: &Path, format: ReportFormat) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    write_report(t, &mut out, format)?;
    out.flush()?;
    Ok(())
}

/// Reads a report written by [`emit_report`]; every cell comes back as text.
pub fn parse_report(path: &Path) -> Result<ReportTable> {
    let text = std::fs::read_to_string(path)?;
    let mut metadata = Vec::new();
    let mut body_start = 0;
    for line in text.lines() {
        let Some(rest) = line.strip_prefix("# ") else {
            break;
        };
        let (k, v) = rest.split_once('=').unwrap_or((rest, ""));
        metadata.push((k.to_string(), v.to_string()));
        body_start += line.len() + 1;
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(&text.as_bytes()[body_start.min(text.len())..]);
    let header = reader
        .headers()
        .map_err(|e| csv_parse(e, 0))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_parse(e, i + 1))?;
        rows.push(
            record
                .iter()
                .map(|s| {
                    if s.is_empty() {
                        Cell::Empty
                    } else {
                        Cell::Text(s.to_string())
                    }
                })
                .collect(),
        );
    }
    Ok(ReportTable {
        metadata,
        header,
        rows,
    })
}

fn csv_io(e: csv::Error) -> Error {
    Error::IoError(e.to_string())
}

fn csv_parse(e: csv::Error, row: usize) -> Error {
    Error::ParseError {
        row,
        col: 0,
        msg: e.to_string(),
    }
}

/// Where the response lives in an input CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(s.parse::<usize>()
            .map(LabelColumn::Index)
            .unwrap_or_else(|_| LabelColumn::Name(s.to_string())))
    }
}

/// Options for [`load_csv_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub label_column: LabelColumn,
    /// Raw label text to response value, e.g. `4 -> +1`, `9 -> -1`.
    pub label_map: Option<HashMap<String, f64>>,
    /// Keep at most this many rows, sampled without replacement.
    pub max_rows: Option<usize>,
    /// Keep only this many feature columns, those with the largest energy.
    pub top_energy_columns: Option<usize>,
    /// Remove feature columns that are zero in every kept row.
    pub drop_zero_columns: bool,
    pub has_header: bool,
    /// Skip rows whose label has no mapping instead of failing.
    pub drop_unmapped: bool,
    /// Divide columns with entries outside `[-1, 1]` by their max magnitude.
    pub scale: bool,
    pub seed: u64,
}

impl CsvOptions {
    pub fn new(label_column: LabelColumn) -> Self {
        Self {
            label_column,
            label_map: None,
            max_rows: None,
            top_energy_columns: None,
            drop_zero_columns: true,
            has_header: false,
            drop_unmapped: false,
            scale: true,
            seed: 0,
        }
    }
}

/// A dataset loaded from CSV with the preprocessing that was applied.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    /// File column behind each feature.
    pub columns: Vec<usize>,
    /// `(file column, divisor)` for every rescaled column.
    pub scaled_columns: Vec<(usize, f64)>,
    /// Labelled rows available before `max_rows` sampling.
    pub rows_read: usize,
}

/// Parses a label map like `4:1,9:-1`.
pub fn parse_label_map(s: &str) -> Result<HashMap<String, f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|pair| {
            let (k, v) = pair.split_once(':').ok_or_else(|| {
                Error::InvalidParameter(format!("label map entry '{pair}' lacks ':'"))
            })?;
            let value: f64 = v.trim().parse().map_err(|_| {
                Error::InvalidParameter(format!("label map value '{v}' is not a number"))
            })?;
            Ok((k.trim().to_string(), value))
        })
        .collect()
}

fn lookup_label(map: &HashMap<String, f64>, raw: &str) -> Option<f64> {
    if let Some(v) = map.get(raw) {
        return Some(*v);
    }
    let numeric: f64 = raw.parse().ok()?;
    map.iter()
        .find(|(k, _)| k.parse::<f64>().ok() == Some(numeric))
        .map(|(_, v)| *v)
}

/// Loads a numeric CSV into a [`Dataset`].
///
/// Rows and columns in error messages are 1-based data rows and 0-based
/// fields of the file.
pub fn load_csv_dataset(path: &Path, opts: &CsvOptions) -> Result<LoadedDataset> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(file);

    let label_idx = match &opts.label_column {
        LabelColumn::Index(i) => *i,
        LabelColumn::Name(name) => {
            if !opts.has_header {
                return Err(Error::InvalidParameter(format!(
                    "label column '{name}' given by name but the file has no header"
                )));
            }
            reader
                .headers()
                .map_err(|e| csv_parse(e, 0))?
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::InvalidParameter(format!("no column named '{name}'")))?
        }
    };

    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_parse(e, row))?;
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(Error::ParseError {
                row,
                col: record.len(),
                msg: format!("expected {} fields, found {}", width.unwrap(), record.len()),
            });
        }
        if label_idx >= record.len() {
            return Err(Error::ParseError {
                row,
                col: label_idx,
                msg: "label column out of range".into(),
            });
        }
        let raw_label = &record[label_idx];
        let label = match &opts.label_map {
            Some(map) => match lookup_label(map, raw_label) {
                Some(v) => v,
                None if opts.drop_unmapped => continue,
                None => {
                    return Err(Error::LabelError {
                        row,
                        msg: format!("label '{raw_label}' has no mapping"),
                    })
                }
            },
            None => raw_label.parse().map_err(|_| Error::LabelError {
                row,
                msg: format!("label '{raw_label}' is not numeric"),
            })?,
        };
        labels.push(label);
        let mut values = Vec::with_capacity(record.len() - 1);
        for (col, field) in record.iter().enumerate() {
            if col != label_idx {
                let v: f64 = field.parse().map_err(|_| Error::ParseError {
                    row,
                    col,
                    msg: format!("'{field}' is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::ParseError {
                        row,
                        col,
                        msg: format!("'{field}' is not finite"),
                    });
                }
                values.push(v);
            }
        }
        features.push(values);
    }
    let rows_read = features.len();
    if rows_read == 0 {
        return Err(Error::ShapeError("CSV file has no data rows".into()));
    }

    let mut keep: Vec<usize> = (0..rows_read).collect();
    if let Some(max) = opts.max_rows.filter(|&m| m < rows_read) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        keep = sample(&mut rng, rows_read, max).into_vec();
        keep.sort_unstable();
    }

    let d = features[0].len();
    let mut x = DMatrix::from_fn(keep.len(), d, |i, j| features[keep[i]][j]);
    let y = DVector::from_fn(keep.len(), |i, _| labels[keep[i]]);

    // file column of every feature
    let mut columns: Vec<usize> = (0..=d).filter(|&c| c != label_idx).take(d).collect();
    if opts.drop_zero_columns {
        let live: Vec<usize> = (0..d)
            .filter(|&j| x.column(j).iter().any(|&v| v != 0.0))
            .collect();
        if live.len() < d {
            x = x.select_columns(&live);
            columns = live.iter().map(|&j| columns[j]).collect();
        }
    }
    let d = x.ncols();
    if let Some(top) = opts.top_energy_columns.filter(|&t| t < d) {
        if top == 0 {
            return Err(Error::InvalidParameter(
                "top_energy_columns must be >= 1".into(),
            ));
        }
        let energy: Vec<f64> = x.column_iter().map(|c| c.norm_squared()).collect();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
        let mut chosen = order[..top].to_vec();
        chosen.sort_unstable();
        x = x.select_columns(&chosen);
        columns = chosen.iter().map(|&j| columns[j]).collect();
    }

    let mut scaled_columns = Vec::new();
    if opts.scale {
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let max = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if max > 1.0 {
                col /= max;
                scaled_columns.push((columns[j], max));
            }
        }
    }
    Ok(LoadedDataset {
        dataset: Dataset::new(x, y)?,
        columns,
        scaled_columns,
        rows_read,
    })
}
