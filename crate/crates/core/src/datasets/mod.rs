//! Datasets: synthetic generators, CSV ingestion, preprocessing and splits.

mod io;
mod preprocess;
mod synthetic;

use std::collections::BTreeSet;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

pub use io::{load_csv, read_index_file, stratified_split, CsvOptions, LabelColumn, SplitSource};
pub use preprocess::{pca_gate, pca_reduce, standard_scale, Pca, Scaler, PCA_TARGET};
pub use synthetic::{make_lipschitz, make_moons, LipschitzPosterior, LIPSCHITZ_AMPLITUDE};

use crate::error::{Error, Result};
use crate::hac::LabeledSample;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n × d`, one row per example.
    pub features: Array2<f64>,
    /// Class indices in `0..class_count`.
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub eta: Option<LipschitzPosterior>,
    pub source: String,
    pub preprocessing: Vec<String>,
    /// Original label strings in class-index order, when known.
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub n: usize,
    pub d: usize,
    pub class_count: usize,
    pub source: String,
    pub preprocessing: Vec<String>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_count: usize, source: impl Into<String>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: class_count,
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        Ok(Dataset {
            features,
            labels,
            class_count,
            eta: None,
            source: source.into(),
            preprocessing: Vec::new(),
            class_names: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn metadata(&self) -> Metadata {
        Metadata {
            n: self.n(),
            d: self.d(),
            class_count: self.class_count,
            source: self.source.clone(),
            preprocessing: self.preprocessing.clone(),
        }
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n()) {
            return Err(Error::InvalidArgument(format!("row {bad} out of range for n={}", self.n())));
        }
        Ok(Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
            eta: self.eta.clone(),
            source: self.source.clone(),
            preprocessing: self.preprocessing.clone(),
            class_names: self.class_names.clone(),
        })
    }

    /// Binary datasets only: class 1 becomes `+1`, class 0 becomes `-1`.
    pub fn to_labeled_samples(&self) -> Result<Vec<LabeledSample>> {
        if self.class_count != 2 {
            return Err(Error::InvalidArgument(format!(
                "±1 labels need a binary dataset, got {} classes",
                self.class_count
            )));
        }
        Ok(self
            .features
            .rows()
            .into_iter()
            .zip(&self.labels)
            .map(|(row, &l)| LabeledSample::new(row.to_vec(), if l == 1 { 1 } else { -1 }))
            .collect())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    pub fn new(train: Vec<usize>, valid: Vec<usize>, test: Vec<usize>) -> Self {
        SplitSpec { train, valid, test }
    }

    pub fn is_disjoint(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .all(|&i| seen.insert(i))
    }

    /// Disjoint and every index below `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if let Some(&bad) = self.train.iter().chain(&self.valid).chain(&self.test).find(|&&i| i >= n) {
            return Err(Error::InvalidArgument(format!("split index {bad} out of range for n={n}")));
        }
        if !self.is_disjoint() {
            return Err(Error::InvalidArgument("split index lists overlap".into()));
        }
        Ok(())
    }

    /// Train and validation indices, in that order.
    pub fn pooled(&self) -> Vec<usize> {
        self.train.iter().chain(&self.valid).copied().collect()
    }
}
