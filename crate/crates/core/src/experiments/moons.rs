use std::collections::BTreeMap;

use ndarray::{s, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{make_moons, standard_scale, Dataset};
use crate::error::{Error, Result};
use crate::geometry::SignVector;
use crate::qnet::{accuracy, build_hann, train, Head, HannSpec, LossKind, QNetwork, QuantizerKind, TrainConfig};
use crate::rng::mix;

/// Rows per forward pass when sweeping the evaluation grid.
const GRID_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoonsConfig {
    pub n_train: usize,
    pub n_valid: usize,
    pub noise: f64,
    pub k: usize,
    pub runs: usize,
    pub quantizers: Vec<QuantizerKind>,
    pub train: TrainConfig,
    pub grid_resolution: usize,
    pub seed: u64,
}

impl Default for MoonsConfig {
    fn default() -> Self {
        MoonsConfig {
            n_train: 200,
            n_valid: 200,
            noise: 0.1,
            k: 10,
            runs: 10,
            quantizers: vec![QuantizerKind::ste(), QuantizerKind::swish()],
            train: TrainConfig {
                learning_rate: 0.01,
                batch_size: 128,
                epochs: 300,
                dropout_rate: 0.0,
                loss: LossKind::Hinge,
                seed: 0,
                sm_param: 0.1,
                eval_every: 10,
            },
            grid_resolution: 400,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoonsRun {
    pub quantizer: String,
    pub run: usize,
    /// Validation accuracy of the selected snapshot.
    pub val_acc: Option<f64>,
    pub train_acc: Option<f64>,
    pub best_window: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSummary {
    pub quantizer: String,
    pub completed: usize,
    pub median_val_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub resolution: usize,
}

impl GridBounds {
    /// Bounding box of `x` widened by 10% of its extent on every side.
    pub fn around(x: &Array2<f64>, resolution: usize) -> Result<Self> {
        if x.ncols() != 2 || x.nrows() == 0 {
            return Err(Error::InvalidArgument(format!("grid bounds need 2-D points, got {:?}", x.dim())));
        }
        let range = |c: usize| {
            let col = x.column(c);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let pad = 0.1 * (hi - lo).max(1e-9);
            (lo - pad, hi + pad)
        };
        let (x_min, x_max) = range(0);
        let (y_min, y_max) = range(1);
        Ok(GridBounds { x_min, x_max, y_min, y_max, resolution })
    }

    /// Point `(ix, iy)`; grid index is `iy·resolution + ix`.
    pub fn point(&self, ix: usize, iy: usize) -> [f64; 2] {
        let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (self.resolution - 1) as f64;
        [step(self.x_min, self.x_max, ix), step(self.y_min, self.y_max, iy)]
    }

    pub fn points(&self) -> Array2<f64> {
        let r = self.resolution;
        Array2::from_shape_fn((r * r, 2), |(i, c)| self.point(i % r, i / r)[c])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    /// `+`/`-` per hyperplane.
    pub pattern: String,
    pub grid_points: usize,
    pub train_count: usize,
    pub label: usize,
    pub boundary_adjacent: bool,
    /// No training points and not boundary-adjacent.
    pub highlighted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellComplexityReport {
    pub bounds: GridBounds,
    pub cells: Vec<CellRecord>,
    /// Index into `cells` for every grid point.
    pub grid_cells: Vec<u32>,
    pub highlighted: usize,
}

impl CellComplexityReport {
    /// Predicted class of every grid point.
    pub fn decision_grid(&self) -> Vec<u8> {
        self.grid_cells.iter().map(|&c| self.cells[c as usize].label as u8).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoonsReport {
    pub config: MoonsConfig,
    pub runs: Vec<MoonsRun>,
    pub summaries: Vec<QuantizerSummary>,
    /// Cell analysis of the first completed run of the last quantizer.
    pub analysed_run: Option<(String, usize)>,
    pub cells: Option<CellComplexityReport>,
    /// Standardized training data of the analysed run.
    pub train_points: Vec<[f64; 2]>,
    pub train_labels: Vec<usize>,
    /// Hyperplanes `(w, b)` of the analysed run in the standardized space.
    pub hyperplanes: Vec<([f64; 2], f64)>,
}

pub fn pattern_string(p: &SignVector) -> String {
    p.bits().iter().map(|&b| if b > 0 { '+' } else { '-' }).collect()
}

/// Realized cells of a trained 2-D HANN on a regular grid, with training
/// counts, labels and the highlight rule: no training data and no grid edge
/// into a differently labelled cell.
pub fn cell_complexity(net: &QNetwork, train_x: &Array2<f64>, resolution: usize) -> Result<CellComplexityReport> {
    if resolution < 2 {
        return Err(Error::InvalidArgument(format!("grid resolution must be ≥ 2, got {resolution}")));
    }
    if net.input_dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: net.input_dim() });
    }
    let arr = net.extract_arrangement()?;
    let bounds = GridBounds::around(train_x, resolution)?;
    let grid = bounds.points();
    let mut index: BTreeMap<SignVector, u32> = BTreeMap::new();
    let mut patterns: Vec<SignVector> = Vec::new();
    let mut intern = |p: SignVector, patterns: &mut Vec<SignVector>| {
        *index.entry(p.clone()).or_insert_with(|| {
            patterns.push(p);
            (patterns.len() - 1) as u32
        })
    };
    let mut grid_cells = Vec::with_capacity(grid.nrows());
    for row in grid.rows() {
        let p = arr.sign_vector(row.as_slice().expect("contiguous"))?;
        grid_cells.push(intern(p, &mut patterns));
    }
    let mut train_cells = Vec::with_capacity(train_x.nrows());
    for row in train_x.rows() {
        let p = arr.sign_vector(&row.to_vec())?;
        train_cells.push(intern(p, &mut patterns));
    }
    let labels = net.head_classes(&patterns)?;
    let mut cells: Vec<CellRecord> = patterns
        .iter()
        .zip(&labels)
        .map(|(p, &label)| CellRecord {
            pattern: pattern_string(p),
            grid_points: 0,
            train_count: 0,
            label,
            boundary_adjacent: false,
            highlighted: false,
        })
        .collect();
    for &c in &grid_cells {
        cells[c as usize].grid_points += 1;
    }
    for &c in &train_cells {
        cells[c as usize].train_count += 1;
    }
    let r = resolution;
    for iy in 0..r {
        for ix in 0..r {
            let a = grid_cells[iy * r + ix] as usize;
            for (jx, jy) in [(ix + 1, iy), (ix, iy + 1)] {
                if jx < r && jy < r {
                    let b = grid_cells[jy * r + jx] as usize;
                    if labels[a] != labels[b] {
                        cells[a].boundary_adjacent = true;
                        cells[b].boundary_adjacent = true;
                    }
                }
            }
        }
    }
    let mut highlighted = 0;
    for c in &mut cells {
        c.highlighted = c.train_count == 0 && !c.boundary_adjacent;
        highlighted += usize::from(c.highlighted);
    }
    Ok(CellComplexityReport { bounds, cells, grid_cells, highlighted })
}

/// Re-derives the highlight predicate from the network itself: sign
/// patterns recomputed per point and labels from full forward passes.
/// Returns one message per violation.
pub fn audit_cell_report(report: &CellComplexityReport, net: &QNetwork, train_x: &Array2<f64>) -> Result<Vec<String>> {
    let arr = net.extract_arrangement()?;
    let grid = report.bounds.points();
    let r = report.bounds.resolution;
    if report.grid_cells.len() != grid.nrows() {
        return Ok(vec![format!("grid has {} cells for {} points", report.grid_cells.len(), grid.nrows())]);
    }
    let mut preds = Vec::with_capacity(grid.nrows());
    for start in (0..grid.nrows()).step_by(GRID_CHUNK) {
        let end = (start + GRID_CHUNK).min(grid.nrows());
        preds.extend(net.predict(&grid.slice(s![start..end, ..]).to_owned())?);
    }
    let mut violations = Vec::new();
    let highlighted: BTreeMap<&str, usize> = report
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.highlighted)
        .map(|(i, c)| (c.pattern.as_str(), i))
        .collect();
    for row in train_x.rows() {
        let p = pattern_string(&arr.sign_vector(&row.to_vec())?);
        if let Some(&i) = highlighted.get(p.as_str()) {
            violations.push(format!("highlighted cell {i} ({p}) contains a training point"));
        }
    }
    for (g, row) in grid.rows().into_iter().enumerate() {
        let p = pattern_string(&arr.sign_vector(row.as_slice().expect("contiguous"))?);
        let reported = &report.cells[report.grid_cells[g] as usize];
        if reported.pattern != p || reported.label != preds[g] {
            violations.push(format!("grid point {g}: report says {} / {}, network gives {p} / {}", reported.pattern, reported.label, preds[g]));
            continue;
        }
        if !reported.highlighted {
            continue;
        }
        let (ix, iy) = (g % r, g / r);
        let neighbours = [
            (ix.wrapping_sub(1), iy),
            (ix + 1, iy),
            (ix, iy.wrapping_sub(1)),
            (ix, iy + 1),
        ];
        for (jx, jy) in neighbours {
            if jx < r && jy < r && preds[jy * r + jx] != preds[g] {
                violations.push(format!("highlighted cell {p} has a label change at grid point {g}"));
            }
        }
    }
    Ok(violations)
}

struct Standardized {
    x: Array2<f64>,
    y: Vec<usize>,
    xv: Array2<f64>,
    yv: Vec<usize>,
}

fn run_data(cfg: &MoonsConfig, run: usize) -> Result<Standardized> {
    let run_seed = mix(cfg.seed, run as u64);
    let tr: Dataset = make_moons(cfg.n_train, cfg.noise, mix(run_seed, 1))?;
    let va: Dataset = make_moons(cfg.n_valid, cfg.noise, mix(run_seed, 2))?;
    let pooled = ndarray::concatenate(Axis(0), &[tr.features.view(), va.features.view()])
        .map_err(|e| Error::Shape(e.to_string()))?;
    let scaler = standard_scale(&pooled)?;
    Ok(Standardized {
        x: scaler.transform(&tr.features)?,
        y: tr.labels,
        xv: scaler.transform(&va.features)?,
        yv: va.labels,
    })
}

fn run_one(cfg: &MoonsConfig, q: QuantizerKind, run: usize) -> Result<(QNetwork, f64, f64, Option<usize>)> {
    let data = run_data(cfg, run)?;
    let run_seed = mix(cfg.seed, run as u64);
    // Both heuristics start from the same initialization and see the same
    // data in the same order.
    let spec = HannSpec {
        d: 2,
        r: 2,
        k: cfg.k,
        head: Head::Mlp2k,
        output_dim: 1,
        quantizer: q,
        dropout: cfg.train.dropout_rate,
    };
    let net = build_hann(&spec, mix(run_seed, 3))?;
    let tc = TrainConfig { seed: mix(run_seed, 4), ..cfg.train };
    let out = train(&net, (&data.x, &data.y), (&data.xv, &data.yv), &tc)?;
    let val = accuracy(&out.best, &data.xv, &data.yv)?;
    let tr = accuracy(&out.best, &data.x, &data.y)?;
    Ok((out.best, val, tr, out.history.best_window))
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// `runs` seeded runs per quantizer on fresh moons data, then the cell
/// analysis of one trained model.
pub fn moons_experiment(cfg: &MoonsConfig) -> Result<MoonsReport> {
    if cfg.quantizers.is_empty() || cfg.runs == 0 {
        return Err(Error::InvalidArgument("moons experiment needs ≥ 1 quantizer and ≥ 1 run".into()));
    }
    cfg.train.validate()?;
    for q in &cfg.quantizers {
        q.validate()?;
    }
    let items: Vec<(usize, usize)> = (0..cfg.quantizers.len())
        .flat_map(|qi| (0..cfg.runs).map(move |r| (qi, r)))
        .collect();
    let results: Vec<Result<(QNetwork, f64, f64, Option<usize>)>> = items
        .par_iter()
        .map(|&(qi, r)| run_one(cfg, cfg.quantizers[qi], r))
        .collect();

    let mut runs = Vec::with_capacity(items.len());
    let mut analysed: Option<(usize, usize, QNetwork)> = None;
    for (&(qi, r), res) in items.iter().zip(results) {
        let name = cfg.quantizers[qi].name().to_string();
        match res {
            Ok((net, val, tr, best_window)) => {
                runs.push(MoonsRun {
                    quantizer: name,
                    run: r,
                    val_acc: Some(val),
                    train_acc: Some(tr),
                    best_window,
                    error: None,
                });
                let last_q = qi + 1 == cfg.quantizers.len();
                if last_q && analysed.is_none() {
                    analysed = Some((qi, r, net));
                }
            }
            Err(e) => {
                log::warn!("moons run {r} with {name} failed: {e}");
                runs.push(MoonsRun {
                    quantizer: name,
                    run: r,
                    val_acc: None,
                    train_acc: None,
                    best_window: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let summaries = cfg
        .quantizers
        .iter()
        .map(|q| {
            let mut accs: Vec<f64> = runs
                .iter()
                .filter(|r| r.quantizer == q.name())
                .filter_map(|r| r.val_acc)
                .collect();
            QuantizerSummary {
                quantizer: q.name().to_string(),
                completed: accs.len(),
                median_val_acc: median(&mut accs),
            }
        })
        .collect();

    let mut report = MoonsReport {
        config: cfg.clone(),
        runs,
        summaries,
        analysed_run: None,
        cells: None,
        train_points: Vec::new(),
        train_labels: Vec::new(),
        hyperplanes: Vec::new(),
    };
    if let Some((qi, r, net)) = analysed {
        let data = run_data(cfg, r)?;
        let arr = net.extract_arrangement()?;
        report.cells = Some(cell_complexity(&net, &data.x, cfg.grid_resolution)?);
        report.analysed_run = Some((cfg.quantizers[qi].name().to_string(), r));
        report.train_points = data.x.rows().into_iter().map(|row| [row[0], row[1]]).collect();
        report.train_labels = data.y;
        report.hyperplanes = (0..arr.k())
            .map(|j| ([arr.normal(j)[0], arr.normal(j)[1]], arr.offset(j)))
            .collect();
    }
    Ok(report)
}

/// Retrains the analysed run of `report`; the network is not stored in
/// the report itself.
pub fn analysed_network(report: &MoonsReport) -> Result<Option<(QNetwork, Array2<f64>)>> {
    let Some((name, run)) = &report.analysed_run else { return Ok(None) };
    let cfg = &report.config;
    let q = *cfg
        .quantizers
        .iter()
        .find(|q| q.name() == name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown quantizer {name}")))?;
    let (net, ..) = run_one(cfg, q, *run)?;
    Ok(Some((net, run_data(cfg, *run)?.x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnet::{Layer, Mode};
    use ndarray::{array, Array1};

    /// Input → Dense(2→k) → threshold → Dense(k→1) with the given weights.
    fn fixed_net(w: Array2<f64>, b: Array1<f64>, head: Array2<f64>, head_b: f64) -> QNetwork {
        let mut net = QNetwork::new(2).unwrap();
        let h = net.push(Layer::Dense { weights: w, bias: b }, vec![0]).unwrap();
        net.roles.hyperplane = Some(h - 1);
        let t = net.push(Layer::Threshold(QuantizerKind::ste()), vec![h]).unwrap();
        net.roles.threshold = Some(t - 1);
        net.push(Layer::Dense { weights: head, bias: array![head_b] }, vec![t]).unwrap();
        net
    }

    #[test]
    fn single_cell_is_never_highlighted_with_data() {
        // A hyperplane far outside the grid leaves one realized cell.
        let net = fixed_net(array![[1.0], [0.0]], array![100.0], array![[1.0]], 0.0);
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let rep = cell_complexity(&net, &x, 20).unwrap();
        assert_eq!(rep.cells.len(), 1);
        assert_eq!(rep.highlighted, 0);
        assert!(!rep.cells[0].boundary_adjacent);
        assert_eq!(rep.cells[0].train_count, 2);
    }

    #[test]
    fn opposite_halfspaces_are_both_adjacent() {
        let net = fixed_net(array![[1.0], [0.0]], array![-0.5], array![[1.0]], 0.0);
        let x = array![[0.0, 0.0], [1.0, 1.0]];
        let rep = cell_complexity(&net, &x, 30).unwrap();
        assert_eq!(rep.cells.len(), 2);
        assert!(rep.cells.iter().all(|c| c.boundary_adjacent && !c.highlighted));
        assert!(audit_cell_report(&rep, &net, &x).unwrap().is_empty());
        assert!(cell_complexity(&net, &x, 1).is_err());
    }

    #[test]
    fn empty_interior_cell_is_highlighted() {
        // Three vertical cuts give four strips. The second strip is empty
        // and labelled like both of its neighbours.
        let w = array![[1.0, 1.0, 1.0], [0.0, 0.0, 0.0]];
        let b = array![-0.3, -0.5, -0.7];
        let head = array![[0.0], [0.0], [1.0]];
        let net = fixed_net(w, b, head, 0.0);
        let x = array![[0.0, 0.0], [0.1, 1.0], [0.6, 0.5], [1.0, 0.0], [0.9, 1.0]];
        let rep = cell_complexity(&net, &x, 50).unwrap();
        let middle = rep.cells.iter().find(|c| c.pattern == "+--").unwrap();
        assert_eq!(middle.train_count, 0);
        assert!(middle.highlighted);
        assert_eq!(rep.highlighted, 1);
        assert!(audit_cell_report(&rep, &net, &x).unwrap().is_empty());
        // The audit catches a doctored flag.
        let mut bad = rep.clone();
        for c in &mut bad.cells {
            c.highlighted = true;
        }
        assert!(!audit_cell_report(&bad, &net, &x).unwrap().is_empty());
        // Decision grid agrees with full forward passes.
        let grid = rep.bounds.points();
        let preds = net.predict(&grid).unwrap();
        let dg = rep.decision_grid();
        assert!(preds.iter().zip(&dg).all(|(&p, &l)| p == l as usize));
        let _ = net.forward(&grid, Mode::Eval).unwrap();
    }

    #[test]
    fn small_moons_run() {
        let mut cfg = MoonsConfig {
            n_train: 60,
            n_valid: 60,
            k: 4,
            runs: 2,
            grid_resolution: 40,
            seed: 9,
            ..MoonsConfig::default()
        };
        cfg.train.epochs = 20;
        let a = moons_experiment(&cfg).unwrap();
        let b = moons_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.runs.len(), 4);
        assert_eq!(a.summaries[1].quantizer, "SwishSign");
        let cells = a.cells.as_ref().unwrap();
        assert_eq!(cells.grid_cells.len(), 1600);
        let (net, x) = analysed_network(&a).unwrap().unwrap();
        assert!(audit_cell_report(cells, &net, &x).unwrap().is_empty());
    }
}
