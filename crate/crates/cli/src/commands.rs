use std::fs;
use std::path::{Path, PathBuf};

use hann_core::compression::{self, codec, CompressedSample, RoundTripReport};
use hann_core::datasets::{load_csv, make_moons, stratified_split, CsvOptions, LabelColumn, SplitSource};
use hann_core::experiments::{
    analysed_network, audit_cell_report, benchmark_run, bundled_dataset, decision_grid_svg, minimax_rate_experiment,
    moons_experiment, pattern_string, prepare_split, rate_curve_svg, rows_to_csv, BenchConfig, BenchDataset, MoonsConfig, RateConfig,
};
use hann_core::geometry::{enumerate_cells, max_cells, Arrangement};
use hann_core::qnet::{
    accuracy, build_hann, checkpoint, hann_parameter_count, train as train_net, Head, HannSpec, LossKind,
    QuantizerKind, TrainConfig,
};
use hann_core::rng::mix;
use hann_core::{HacClassifier, LabeledSample};
use serde::{Deserialize, Serialize};

use crate::config::resolve;
use crate::output::{core, read_json, to_json, Failure, RunDir};
use crate::{Format, GlobalOpts};

type CmdResult = Result<(), Failure>;

/// Fraction of each class used for training and validation; the rest is test.
const SPLIT: (f64, f64) = (0.5, 0.25);

#[derive(Debug, Serialize)]
struct HeadCounts {
    mlp2k: Option<u128>,
    resnet1000: Option<u128>,
}

#[derive(Debug, Serialize)]
struct Ratios {
    mlp2k: Option<f64>,
    resnet1000: Option<f64>,
}

#[derive(Debug, Serialize)]
struct VcBoundReport {
    d: u64,
    r: u64,
    k: u64,
    scheme_size: compression::SchemeSize,
    vc_upper_bound: u128,
    /// Parameters of a binary-output HANN with each head.
    parameters: HeadCounts,
    /// Parameters divided by the VC upper bound.
    overparametrization: Ratios,
}

pub fn vc_bound(g: &GlobalOpts, d: u64, r: u64, k: u64) -> CmdResult {
    let scheme_size = core("scheme size", compression::scheme_size(d, r, k))?;
    let vc = core("VC bound", compression::vc_upper_bound(d, r, k))?;
    let count = |head| {
        let (d, r, k) = (usize::try_from(d).ok()?, usize::try_from(r).ok()?, usize::try_from(k).ok()?);
        hann_parameter_count(d, r, k, head, 1).ok()
    };
    let parameters = HeadCounts { mlp2k: count(Head::Mlp2k), resnet1000: count(Head::Resnet1000) };
    let ratio = |p: Option<u128>| p.map(|p| p as f64 / vc as f64);
    let report = VcBoundReport {
        d,
        r,
        k,
        scheme_size,
        vc_upper_bound: vc,
        overparametrization: Ratios { mlp2k: ratio(parameters.mlp2k), resnet1000: ratio(parameters.resnet1000) },
        parameters,
    };
    let text = to_json(&report)?;
    print!("{text}");
    if g.out.is_some() {
        let run = RunDir::create(g, "vc-bound")?;
        run.echo_config(&serde_json::json!({ "d": d, "r": r, "k": k }), "vc-bound")?;
        run.write(Format::Json, "vc_bound.json", text)?;
    }
    Ok(())
}

fn read_samples(path: &Path) -> Result<Vec<LabeledSample>, Failure> {
    let samples: Vec<LabeledSample> = read_json(path, "data file")?;
    if let Some(i) = samples.iter().position(|s| s.y != 1 && s.y != -1) {
        return Err(Failure::usage(format!("data file {}: sample {i} has a label other than ±1", path.display())));
    }
    Ok(samples)
}

/// Binary by default; `.json` files use the JSON encoding.
fn read_compressed(path: &Path) -> Result<CompressedSample, Failure> {
    let is_json = path.extension().is_some_and(|e| e == "json");
    let context = format!("compressed sample {}", path.display());
    if is_json {
        let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {context}: {e}")))?;
        core(&context, codec::from_json(&text))
    } else {
        let bytes = fs::read(path).map_err(|e| Failure::usage(format!("cannot read {context}: {e}")))?;
        core(&context, codec::from_bytes(&bytes))
    }
}

fn summarize(report: &RoundTripReport) -> String {
    match (&report.error, report.violations.len()) {
        (Some(e), _) => format!("inconsistent: {e}"),
        (None, 0) if report.consistent => "consistent".into(),
        (None, 0) => "inconsistent: size budget exceeded".into(),
        (None, v) => format!("inconsistent: {v} samples mislabelled"),
    }
}

pub fn compress(g: &GlobalOpts, data: &Path, classifier: &Path) -> CmdResult {
    let samples = read_samples(data)?;
    let clf: HacClassifier = read_json(classifier, "classifier")?;
    let canonical = core("canonicalization", compression::canonicalize(&clf, &samples))?;
    let comp = core("compression", compression::compress(&samples, &canonical))?;
    let mut report = compression::check_reconstruction(&comp, &samples);
    if let Some(m) = report.margins.as_mut() {
        let arr = canonical.arrangement();
        m.canonical_min = (0..arr.k())
            .flat_map(|j| samples.iter().map(move |s| arr.margin(j, &s.x).abs()))
            .fold(f64::INFINITY, f64::min);
    }
    let run = RunDir::create(g, "compress")?;
    run.echo_config(&serde_json::json!({ "data": data, "classifier": classifier }), "compress")?;
    run.write_always("compressed.bin", core("encoding", codec::to_bytes(&comp))?)?;
    if run.wants(Format::Json) {
        run.write_always("compressed.json", core("encoding", codec::to_json(&comp))?)?;
    }
    run.json("report.json", &report)?;
    println!(
        "{}: {} margin samples, {} side bits, {} table samples -> {}",
        summarize(&report),
        comp.qp_samples.len(),
        comp.side_info.bit_cost(),
        comp.table_samples.len(),
        run.path().display()
    );
    if report.consistent {
        Ok(())
    } else {
        Err(Failure::check(summarize(&report)))
    }
}

pub fn reconstruct(g: &GlobalOpts, compressed: &Path) -> CmdResult {
    let comp = read_compressed(compressed)?;
    let clf = compression::reconstruct(&comp).map_err(|e| Failure::check(format!("reconstruction failed: {e}")))?;
    let run = RunDir::create(g, "reconstruct")?;
    run.echo_config(&serde_json::json!({ "compressed": compressed }), "reconstruct")?;
    run.write_always("classifier.json", to_json(&clf)?)?;
    println!("reconstructed d={}, k={} -> {}", clf.d(), clf.k(), run.path().display());
    Ok(())
}

pub fn verify(g: &GlobalOpts, compressed: &Path, data: &Path) -> CmdResult {
    let comp = read_compressed(compressed)?;
    let samples = read_samples(data)?;
    let report = compression::check_reconstruction(&comp, &samples);
    let text = to_json(&report)?;
    print!("{text}");
    if g.out.is_some() {
        let run = RunDir::create(g, "verify")?;
        run.echo_config(&serde_json::json!({ "compressed": compressed, "data": data }), "verify")?;
        run.write(Format::Json, "report.json", text)?;
    }
    if report.consistent {
        Ok(())
    } else {
        Err(Failure::check(summarize(&report)))
    }
}

#[derive(Debug, Serialize)]
struct CellsReport {
    d: usize,
    k: usize,
    cells: usize,
    /// `C(k, ≤d)`.
    max_cells: u128,
    patterns: Vec<String>,
}

pub fn cells(g: &GlobalOpts, arrangement: Option<&Path>, classifier: Option<&Path>) -> CmdResult {
    let arr: Arrangement = match (arrangement, classifier) {
        (Some(p), _) => read_json(p, "arrangement")?,
        (None, Some(p)) => read_json::<HacClassifier>(p, "classifier")?.arrangement().clone(),
        (None, None) => return Err(Failure::usage("pass --arrangement or --classifier")),
    };
    let found = core("cell enumeration", enumerate_cells(&arr))?;
    let report = CellsReport {
        d: arr.d(),
        k: arr.k(),
        cells: found.len(),
        max_cells: core("cell bound", max_cells(arr.k() as i64, arr.d() as i64))?,
        patterns: found.iter().map(pattern_string).collect(),
    };
    let text = to_json(&report)?;
    print!("{text}");
    if g.out.is_some() {
        let run = RunDir::create(g, "cells")?;
        run.echo_config(&serde_json::json!({ "arrangement": arrangement, "classifier": classifier }), "cells")?;
        run.write(Format::Json, "cells.json", text)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Two interleaved half circles, split per class.
    Moons { n: usize, noise: f64 },
    /// A CSV shipped with the library (`iris`, `wine`).
    Bundled { name: String },
    /// Headered CSV; labels are any strings.
    Csv { name: String, path: PathBuf, label_column: LabelColumn },
}

fn load_dataset(spec: &DatasetSpec, seed: u64) -> Result<BenchDataset, Failure> {
    match spec {
        DatasetSpec::Moons { n, noise } => {
            let data = core("moons", make_moons(*n, *noise, mix(seed, 0)))?;
            let split = core("split", stratified_split(&data.labels, data.class_count, SPLIT.0, SPLIT.1, mix(seed, 1)))?;
            Ok(BenchDataset { name: "moons".into(), data, split })
        }
        DatasetSpec::Bundled { name } => core(&format!("dataset {name}"), bundled_dataset(name, seed)),
        DatasetSpec::Csv { name, path, label_column } => {
            let opts = CsvOptions { label_column: label_column.clone(), ..CsvOptions::default() };
            let split = SplitSource::Stratified { train: SPLIT.0, valid: SPLIT.1, seed };
            let (data, split) = core(&format!("dataset {}", path.display()), load_csv(path, &opts, &split))?;
            Ok(BenchDataset { name: name.clone(), data, split })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainCmd {
    pub dataset: DatasetSpec,
    pub k: usize,
    /// Latent rank; `null` means `min(d, k)`.
    pub r: Option<usize>,
    pub head: Head,
    pub quantizer: QuantizerKind,
    /// `dropout_rate` also sets the network's dropout layer.
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for TrainCmd {
    fn default() -> Self {
        TrainCmd {
            dataset: DatasetSpec::Moons { n: 400, noise: 0.1 },
            k: 10,
            r: None,
            head: Head::Mlp2k,
            quantizer: QuantizerKind::swish(),
            train: TrainConfig { epochs: 300, ..TrainConfig::default() },
            seed: 0,
        }
    }
}

#[derive(Debug, Serialize)]
struct TrainMetrics {
    dataset: String,
    d_model: usize,
    classes: usize,
    pca: bool,
    parameters: usize,
    best_window: Option<usize>,
    train_acc: f64,
    val_acc: f64,
    test_acc: f64,
}

pub fn train(g: &GlobalOpts) -> CmdResult {
    let cfg = resolve(&TrainCmd::default(), g.config.as_deref(), g.seed, "train")?;
    let run = RunDir::create(g, "train")?;
    run.echo_config(&cfg, "train")?;
    let ds = load_dataset(&cfg.dataset, mix(cfg.seed, 0))?;
    let prep = core("preprocessing", prepare_split(&ds))?;
    let d = prep.x.ncols();
    let classes = ds.data.class_count;
    let hinge = cfg.train.loss == LossKind::Hinge;
    if hinge && classes != 2 {
        return Err(Failure::usage(format!("hinge loss needs 2 classes, dataset has {classes}")));
    }
    let spec = HannSpec {
        d,
        r: cfg.r.unwrap_or(d.min(cfg.k)),
        k: cfg.k,
        head: cfg.head,
        output_dim: if hinge { 1 } else { classes },
        quantizer: cfg.quantizer,
        dropout: cfg.train.dropout_rate,
    };
    let net = core("network", build_hann(&spec, mix(cfg.seed, 1)))?;
    let tc = TrainConfig { seed: mix(cfg.seed, 2), ..cfg.train };
    let out = core("training", train_net(&net, (&prep.x, &prep.y), (&prep.xv, &prep.yv), &tc))?;
    let metrics = TrainMetrics {
        dataset: ds.name.clone(),
        d_model: d,
        classes,
        pca: prep.pca,
        parameters: out.best.parameter_count(),
        best_window: out.history.best_window,
        train_acc: core("evaluation", accuracy(&out.best, &prep.x, &prep.y))?,
        val_acc: core("evaluation", accuracy(&out.best, &prep.xv, &prep.yv))?,
        test_acc: core("evaluation", accuracy(&out.best, &prep.xt, &prep.yt))?,
    };
    run.json("metrics.json", &metrics)?;
    run.json("history.json", &out.history)?;
    run.csv("epochs.csv", &out.history.epochs)?;
    run.csv("windows.csv", &out.history.windows)?;
    if run.wants(Format::Json) {
        core("checkpoint", checkpoint::save(&out.best, &run.path().join("model.json")))?;
    }
    println!(
        "{}: train {:.4}, valid {:.4}, test {:.4} -> {}",
        metrics.dataset,
        metrics.train_acc,
        metrics.val_acc,
        metrics.test_acc,
        run.path().display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct AuditResult {
    analysed_run: Option<(String, usize)>,
    highlighted: usize,
    violations: Vec<String>,
}

pub fn moons(g: &GlobalOpts) -> CmdResult {
    let cfg = resolve(&MoonsConfig::default(), g.config.as_deref(), g.seed, "moons")?;
    let run = RunDir::create(g, "moons")?;
    run.echo_config(&cfg, "moons")?;
    let report = core("moons study", moons_experiment(&cfg))?;
    run.json("report.json", &report)?;
    run.csv("runs.csv", &report.runs)?;
    run.csv("summary.csv", &report.summaries)?;
    if let Some(cells) = &report.cells {
        run.csv("cells.csv", &cells.cells)?;
        if let Some(svg) = decision_grid_svg(&report, run.timestamp()) {
            run.write(Format::Svg, "decision_grid.svg", svg)?;
        }
    }
    let mut audit = AuditResult { analysed_run: report.analysed_run.clone(), highlighted: 0, violations: Vec::new() };
    if let (Some(cells), Some((net, x))) = (&report.cells, core("retraining", analysed_network(&report))?) {
        audit.highlighted = cells.highlighted;
        audit.violations = core("audit", audit_cell_report(cells, &net, &x))?;
    }
    run.json("audit.json", &audit)?;
    for s in &report.summaries {
        let median = s.median_val_acc.map_or_else(|| "n/a".to_string(), |m| format!("{m:.4}"));
        println!("{}: {} runs completed, median validation accuracy {median}", s.quantizer, s.completed);
    }
    println!("{} highlighted cells, {} audit violations -> {}", audit.highlighted, audit.violations.len(), run.path().display());
    if report.runs.iter().all(|r| r.error.is_some()) {
        return Err(Failure::runtime("every training run failed"));
    }
    if !audit.violations.is_empty() {
        return Err(Failure::check(format!("cell audit found violations: {}", audit.violations.join("; "))));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct RateRow {
    n: usize,
    k_tilde: usize,
    hyperplanes: usize,
    mean_excess: f64,
    se_excess: f64,
    max_mc_se: f64,
}

pub fn rate(g: &GlobalOpts) -> CmdResult {
    let cfg = resolve(&RateConfig::default(), g.config.as_deref(), g.seed, "rate")?;
    let run = RunDir::create(g, "rate")?;
    run.echo_config(&cfg, "rate")?;
    let report = core("rate experiment", minimax_rate_experiment(&cfg))?;
    run.json("report.json", &report)?;
    let rows: Vec<RateRow> = report
        .points
        .iter()
        .map(|p| RateRow {
            n: p.n,
            k_tilde: p.k_tilde,
            hyperplanes: p.hyperplanes,
            mean_excess: p.mean_excess,
            se_excess: p.se_excess,
            max_mc_se: p.max_mc_se,
        })
        .collect();
    run.csv("rate.csv", &rows)?;
    run.write(Format::Svg, "rate.svg", rate_curve_svg(&report, run.timestamp()))?;
    println!(
        "slope {:.4} (target {:.4}), monotone within 2 SE: {} -> {}",
        report.slope,
        report.target_slope,
        report.monotone,
        run.path().display()
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCmd {
    pub datasets: Vec<DatasetSpec>,
    pub k: usize,
    pub head: Head,
    pub quantizer: QuantizerKind,
    pub dropout_grid: Vec<f64>,
    pub train: TrainConfig,
    /// Seeds both the splits and the training runs.
    pub seed: u64,
}

impl Default for BenchCmd {
    fn default() -> Self {
        let b = BenchConfig::default();
        BenchCmd {
            datasets: ["iris", "wine"].map(|name| DatasetSpec::Bundled { name: name.into() }).to_vec(),
            k: b.k,
            head: b.head,
            quantizer: b.quantizer,
            dropout_grid: b.dropout_grid,
            train: b.train,
            seed: b.seed,
        }
    }
}

pub fn bench(g: &GlobalOpts) -> CmdResult {
    let cfg = resolve(&BenchCmd::default(), g.config.as_deref(), g.seed, "bench")?;
    let run = RunDir::create(g, "bench")?;
    run.echo_config(&cfg, "bench")?;
    let datasets = cfg
        .datasets
        .iter()
        .map(|spec| load_dataset(spec, cfg.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let bc = BenchConfig {
        k: cfg.k,
        head: cfg.head,
        quantizer: cfg.quantizer,
        dropout_grid: cfg.dropout_grid.clone(),
        train: cfg.train,
        seed: cfg.seed,
    };
    let rows = core("benchmark", benchmark_run(&datasets, &bc))?;
    run.json("rows.json", &rows)?;
    if run.wants(Format::Csv) {
        run.write_always("bench.csv", core("benchmark table", rows_to_csv(&rows))?)?;
    }
    for r in &rows {
        match (&r.error, r.test_acc) {
            (Some(e), _) => println!("{}: failed: {e}", r.dataset),
            (None, Some(acc)) => println!(
                "{}: test {acc:.2}% (reference {}), dropout {}, selection verified: {}",
                r.dataset,
                r.reference_hann15.map_or_else(|| "n/a".into(), |v| format!("{v:.2}%")),
                r.selected_dropout.map_or_else(|| "n/a".into(), |v| v.to_string()),
                r.selection_verified
            ),
            (None, None) => println!("{}: no grid point completed a window", r.dataset),
        }
    }
    println!("-> {}", run.path().display());
    if !rows.is_empty() && rows.iter().all(|r| r.error.is_some()) {
        return Err(Failure::runtime("every dataset failed"));
    }
    if let Some(r) = rows.iter().find(|r| r.error.is_none() && !r.selection_verified) {
        return Err(Failure::check(format!("{}: selection does not match the replayed recursion", r.dataset)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_defaults_survive_their_own_echo() {
        let echo = crate::config::echo(&TrainCmd::default(), "train").unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, echo.to_string().as_bytes()).unwrap();
        assert_eq!(resolve(&TrainCmd::default(), Some(f.path()), None, "train").unwrap(), TrainCmd::default());
        let echo = crate::config::echo(&BenchCmd::default(), "bench").unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, echo.to_string().as_bytes()).unwrap();
        assert_eq!(resolve(&BenchCmd::default(), Some(f.path()), None, "bench").unwrap(), BenchCmd::default());
    }

    #[test]
    fn moons_dataset_is_split_per_class() {
        let ds = load_dataset(&DatasetSpec::Moons { n: 200, noise: 0.1 }, 3).unwrap();
        assert_eq!(ds.data.n(), 200);
        assert_eq!((ds.split.train.len(), ds.split.valid.len(), ds.split.test.len()), (100, 50, 50));
        assert!(ds.split.is_disjoint());
    }
}
