use std::collections::BTreeMap;
use std::path::PathBuf;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{load_csv, pca_gate, pca_reduce, standard_scale, CsvOptions, Dataset, SplitSource, SplitSpec, PCA_TARGET};
use crate::error::{Error, Result};
use crate::qnet::{
    accuracy, build_hann, recompute_selection, train, Head, HannSpec, History, LossKind, QuantizerKind, TrainConfig,
};
use crate::rng::mix;

/// Per-dataset test accuracies (percent) of the reference models.
const REFERENCE_TABLE: &str = include_str!("../../data/accuracy_table.csv");

/// Directory holding the bundled iris and wine CSV files.
pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub dataset: String,
    pub hann15: Option<f64>,
    pub hann100: Option<f64>,
    pub snn: Option<f64>,
    pub denn: Option<f64>,
}

pub fn reference_table() -> Result<BTreeMap<String, ReferenceRow>> {
    let mut reader = csv::Reader::from_reader(REFERENCE_TABLE.as_bytes());
    let mut out = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| rec.get(i).and_then(|v| v.trim().parse::<f64>().ok());
        let name = rec.get(0).unwrap_or_default().to_string();
        out.insert(
            name.clone(),
            ReferenceRow {
                dataset: name,
                hann15: num(1),
                hann100: num(2),
                snn: num(3),
                denn: num(4),
            },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BenchDataset {
    pub name: String,
    pub data: Dataset,
    pub split: SplitSpec,
}

/// Loads a bundled dataset with a stratified 50/25/25 split. A quarter of
/// the rows is held out, matching the test-set sizes implied by the
/// reference accuracies (36/37 on iris, 43/44 on wine).
pub fn bundled_dataset(name: &str, seed: u64) -> Result<BenchDataset> {
    let path = data_dir().join(format!("{name}.csv"));
    let split = SplitSource::Stratified { train: 0.5, valid: 0.25, seed };
    let (data, split) = load_csv(&path, &CsvOptions::default(), &split)?;
    Ok(BenchDataset { name: name.to_string(), data, split })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub k: usize,
    pub head: Head,
    pub quantizer: QuantizerKind,
    pub dropout_grid: Vec<f64>,
    /// `dropout_rate` and `seed` are overridden per grid point.
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for BenchConfig {
    /// The 15-hyperplane model with its three-point dropout grid.
    fn default() -> Self {
        BenchConfig {
            k: 15,
            head: Head::Resnet1000,
            quantizer: QuantizerKind::swish(),
            dropout_grid: vec![0.1, 0.25, 0.5],
            train: TrainConfig {
                learning_rate: 0.01,
                batch_size: 128,
                epochs: 5000,
                dropout_rate: 0.0,
                loss: LossKind::CrossEntropy,
                seed: 0,
                sm_param: 0.1,
                eval_every: 10,
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub dropout: f64,
    /// Highest smoothed validation accuracy reached, if any window completed.
    pub best_smoothed: Option<f64>,
    pub best_window: Option<usize>,
    pub test_acc: f64,
    pub history: History,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub dataset: String,
    pub n: usize,
    pub d: usize,
    /// Input width after preprocessing.
    pub d_model: usize,
    pub classes: usize,
    pub pca: bool,
    pub selected: Option<usize>,
    pub selected_dropout: Option<f64>,
    pub smoothed_val: Option<f64>,
    /// Test accuracy of the selected snapshot, in percent.
    pub test_acc: Option<f64>,
    pub reference_hann15: Option<f64>,
    pub diff: Option<f64>,
    /// The stored selection agrees with a replay of the smoothing recursion.
    pub selection_verified: bool,
    pub grid: Vec<GridResult>,
    pub error: Option<String>,
}

/// Model-ready train, validation and test partitions.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub xv: Array2<f64>,
    pub yv: Vec<usize>,
    pub xt: Array2<f64>,
    pub yt: Vec<usize>,
    /// Whether the PCA gate fired.
    pub pca: bool,
}

/// Scaling and the PCA gate are fitted on the pooled train and validation
/// rows and applied unchanged to the test rows.
pub fn prepare_split(ds: &BenchDataset) -> Result<PreparedSplit> {
    ds.split.validate(ds.data.n())?;
    if ds.split.train.is_empty() || ds.split.valid.is_empty() || ds.split.test.is_empty() {
        return Err(Error::InvalidArgument(format!("{}: every split must be nonempty", ds.name)));
    }
    let pooled = ds.data.select(&ds.split.pooled())?;
    let scaler = standard_scale(&pooled.features)?;
    let gate = pca_gate(pooled.n(), pooled.d());
    let pca = if gate {
        Some(pca_reduce(&scaler.transform(&pooled.features)?, PCA_TARGET)?)
    } else {
        None
    };
    let part = |idx: &[usize]| -> Result<(Array2<f64>, Vec<usize>)> {
        let sub = ds.data.select(idx)?;
        let mut x = scaler.transform(&sub.features)?;
        if let Some(p) = &pca {
            x = p.transform(&x)?;
        }
        Ok((x, sub.labels))
    };
    let (x, y) = part(&ds.split.train)?;
    let (xv, yv) = part(&ds.split.valid)?;
    let (xt, yt) = part(&ds.split.test)?;
    Ok(PreparedSplit { x, y, xv, yv, xt, yt, pca: gate })
}

/// Index of the grid point with the highest smoothed validation accuracy;
/// ties go to the earlier point.
pub fn select_grid_point(best: &[Option<f64>]) -> Option<usize> {
    let mut out: Option<usize> = None;
    for (i, v) in best.iter().enumerate() {
        if let Some(v) = v {
            if out.is_none_or(|o| best[o].is_none_or(|b| *v > b)) {
                out = Some(i);
            }
        }
    }
    out
}

fn run_grid_point(prep: &PreparedSplit, classes: usize, cfg: &BenchConfig, seed: u64, dropout: f64) -> Result<GridResult> {
    let d = prep.x.ncols();
    let k = cfg.k;
    let binary_hinge = cfg.train.loss == LossKind::Hinge;
    if binary_hinge && classes != 2 {
        return Err(Error::InvalidArgument(format!("binary hinge loss on {classes} classes")));
    }
    let spec = HannSpec {
        d,
        r: d.min(k),
        k,
        head: cfg.head,
        output_dim: if binary_hinge { 1 } else { classes },
        quantizer: cfg.quantizer,
        dropout,
    };
    let net = build_hann(&spec, mix(seed, 0))?;
    let tc = TrainConfig { dropout_rate: dropout, seed: mix(seed, 1), ..cfg.train };
    let out = train(&net, (&prep.x, &prep.y), (&prep.xv, &prep.yv), &tc)?;
    let best_smoothed = out.history.best_window.map(|w| out.history.windows[w].val_acc_sm);
    Ok(GridResult {
        dropout,
        best_smoothed,
        best_window: out.history.best_window,
        test_acc: 100.0 * accuracy(&out.best, &prep.xt, &prep.yt)?,
        history: out.history,
    })
}

fn verify_selection(grid: &[GridResult], selected: Option<usize>, sm_param: f64) -> bool {
    let mut replayed = Vec::with_capacity(grid.len());
    for g in grid {
        let (sm, best) = recompute_selection(&g.history, sm_param);
        let stored: Vec<f64> = g.history.windows.iter().map(|w| w.val_acc_sm).collect();
        if sm != stored || best != g.best_window {
            return false;
        }
        replayed.push(best.map(|b| sm[b]));
    }
    select_grid_point(&replayed) == selected
}

fn bench_one(ds: &BenchDataset, cfg: &BenchConfig, index: usize, refs: &BTreeMap<String, ReferenceRow>) -> BenchRow {
    let mut row = BenchRow {
        dataset: ds.name.clone(),
        n: ds.data.n(),
        d: ds.data.d(),
        d_model: ds.data.d(),
        classes: ds.data.class_count,
        pca: false,
        selected: None,
        selected_dropout: None,
        smoothed_val: None,
        test_acc: None,
        reference_hann15: refs.get(&ds.name).and_then(|r| r.hann15),
        diff: None,
        selection_verified: false,
        grid: Vec::new(),
        error: None,
    };
    let result = (|| -> Result<()> {
        let prep = prepare_split(ds)?;
        row.pca = prep.pca;
        row.d_model = prep.x.ncols();
        let seed = mix(cfg.seed, index as u64);
        let grid: Vec<Result<GridResult>> = cfg
            .dropout_grid
            .par_iter()
            .enumerate()
            .map(|(g, &rate)| run_grid_point(&prep, ds.data.class_count, cfg, mix(seed, g as u64), rate))
            .collect();
        row.grid = grid.into_iter().collect::<Result<_>>()?;
        let best: Vec<Option<f64>> = row.grid.iter().map(|g| g.best_smoothed).collect();
        row.selected = select_grid_point(&best);
        row.selection_verified = verify_selection(&row.grid, row.selected, cfg.train.sm_param);
        if let Some(s) = row.selected {
            row.selected_dropout = Some(row.grid[s].dropout);
            row.smoothed_val = row.grid[s].best_smoothed;
            row.test_acc = Some(row.grid[s].test_acc);
            row.diff = row.reference_hann15.map(|r| row.grid[s].test_acc - r);
        }
        Ok(())
    })();
    if let Err(e) = result {
        log::warn!("benchmark on {} failed: {e}", ds.name);
        row.error = Some(e.to_string());
    }
    row
}

/// Runs the dropout grid on every dataset and selects by smoothed
/// validation accuracy. Failures are recorded per dataset.
pub fn benchmark_run(datasets: &[BenchDataset], cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    cfg.train.validate()?;
    cfg.quantizer.validate()?;
    if cfg.dropout_grid.is_empty() {
        return Err(Error::InvalidArgument("dropout grid is empty".into()));
    }
    let refs = reference_table()?;
    Ok(datasets
        .par_iter()
        .enumerate()
        .map(|(i, ds)| bench_one(ds, cfg, i, &refs))
        .collect())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.2}"))
}

pub fn rows_to_csv(rows: &[BenchRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "dataset",
        "n",
        "d",
        "d_model",
        "classes",
        "pca",
        "selected_dropout",
        "smoothed_val",
        "test_acc",
        "reference_hann15",
        "diff",
        "selection_verified",
        "error",
    ])?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.n.to_string(),
            r.d.to_string(),
            r.d_model.to_string(),
            r.classes.to_string(),
            r.pca.to_string(),
            r.selected_dropout.map_or_else(String::new, |v| v.to_string()),
            r.smoothed_val.map_or_else(String::new, |v| format!("{v:.4}")),
            opt(r.test_acc),
            opt(r.reference_hann15),
            opt(r.diff),
            r.selection_verified.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}
