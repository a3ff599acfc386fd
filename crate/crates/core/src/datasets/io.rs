use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelColumn {
    Name(String),
    Index(usize),
    Last,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub label_column: LabelColumn,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            delimiter: b',',
            label_column: LabelColumn::Last,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSource {
    /// Index files with one row index per line.
    Files {
        train: PathBuf,
        valid: PathBuf,
        test: PathBuf,
    },
    /// Per-class shuffled split; the test set takes the remainder.
    Stratified { train: f64, valid: f64, seed: u64 },
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Reads one non-negative integer per non-blank line.
pub fn read_index_file(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|e| parse_error(path, i + 1, format!("bad index {:?}: {e}", l.trim())))
        })
        .collect()
}

/// Per-class shuffle, then the first `train` and next `valid` fractions of each
/// class; the test set takes the remainder. Indices come back sorted.
pub fn stratified_split(labels: &[usize], class_count: usize, train: f64, valid: f64, seed: u64) -> Result<SplitSpec> {
    if !(0.0..=1.0).contains(&train) || !(0.0..=1.0).contains(&valid) || train + valid > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be in [0,1] with train + valid ≤ 1, got {train} and {valid}"
        )));
    }
    let mut split = SplitSpec::new(Vec::new(), Vec::new(), Vec::new());
    for class in 0..class_count {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut stream(seed, Stream::Split, class as u64));
        let nc = members.len();
        let n_train = ((train * nc as f64).round() as usize).min(nc);
        let n_valid = ((valid * nc as f64).round() as usize).min(nc - n_train);
        split.train.extend_from_slice(&members[..n_train]);
        split.valid.extend_from_slice(&members[n_train..n_train + n_valid]);
        split.test.extend_from_slice(&members[n_train + n_valid..]);
    }
    split.train.sort_unstable();
    split.valid.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Loads a headered CSV. Labels are encoded in order of first appearance.
pub fn load_csv(path: &Path, opts: &CsvOptions, split: &SplitSource) -> Result<(Dataset, SplitSpec)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| parse_error(path, 1, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    let width = headers.len();
    let label_idx = match &opts.label_column {
        LabelColumn::Last => width
            .checked_sub(1)
            .ok_or_else(|| parse_error(path, 1, "empty header"))?,
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(i) => return Err(parse_error(path, 1, format!("label column {i} ≥ width {width}"))),
        LabelColumn::Name(name) => headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_error(path, 1, format!("no column named {name:?}")))?,
    };

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut class_of: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        for (j, field) in record.iter().enumerate() {
            let field = field.trim();
            if j == label_idx {
                if field.is_empty() {
                    return Err(parse_error(path, line, "missing label"));
                }
                let next = class_of.len();
                let c = *class_of.entry(field.to_string()).or_insert_with(|| {
                    class_names.push(field.to_string());
                    next
                });
                labels.push(c);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_error(path, line, format!("column {j}: non-numeric value {field:?}")))?;
                if !v.is_finite() {
                    return Err(parse_error(path, line, format!("column {j}: non-finite value {field:?}")));
                }
                values.push(v);
            }
        }
    }
    let n = labels.len();
    if n == 0 {
        return Err(parse_error(path, 1, "no data rows"));
    }
    let features = Array2::from_shape_vec((n, width - 1), values).map_err(|e| Error::Shape(e.to_string()))?;
    let mut ds = Dataset::new(features, labels, class_names.len(), path.display().to_string())?;
    ds.class_names = class_names;

    let spec = match split {
        SplitSource::Files { train, valid, test } => SplitSpec::new(
            read_index_file(train)?,
            read_index_file(valid)?,
            read_index_file(test)?,
        ),
        SplitSource::Stratified { train, valid, seed } => {
            stratified_split(&ds.labels, ds.class_count, *train, *valid, *seed)?
        }
    };
    spec.validate(n)?;
    Ok((ds, spec))
}
