//! A small reverse-mode engine for networks with threshold layers.
//!
//! Networks are DAGs of [`Node`]s. Value id 0 is the network input and node
//! `i` produces value id `i + 1`; a node may only read ids it precedes, so
//! the node list is already in topological order. The last node is the
//! output.

pub mod checkpoint;
mod loss;
mod quantizer;
mod train;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

pub use loss::{loss_and_grad, LossKind};
pub use quantizer::{QuantizerKind, DEFAULT_STE_CLIP, DEFAULT_SWISH_BETA};
pub use train::{accuracy, recompute_selection, train, EpochRecord, History, TrainConfig, TrainOutcome, WindowRecord};

use crate::error::{Error, Result};
use crate::geometry::{Arrangement, SignVector};
use crate::hac::{HacClassifier, LookupTable, DEFAULT_LABEL};
use crate::rng::{stream, Stream};

/// Hidden width of the residual Boolean head.
pub const RESNET_HIDDEN: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// `y = x·W + b` with `W` stored `in × out`.
    Dense { weights: Array2<f64>, bias: Array1<f64> },
    Threshold(QuantizerKind),
    Relu,
    /// Inverted dropout: kept entries are scaled by `1/(1 - rate)`.
    Dropout { rate: f64 },
    /// Sum of all inputs.
    Add,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Threshold(_) => "threshold",
            Layer::Relu => "relu",
            Layer::Dropout { .. } => "dropout",
            Layer::Add => "add",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub layer: Layer,
    pub inputs: Vec<usize>,
}

/// Positions of the structural parts of a HANN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Roles {
    pub latent: Option<usize>,
    pub hyperplane: Option<usize>,
    pub threshold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    input_dim: usize,
    nodes: Vec<Node>,
    widths: Vec<usize>,
    pub roles: Roles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout masks for node `i` come from `stream(seed, Dropout, i)`.
    Train { seed: u64 },
}

/// Every value computed by a forward pass, indexed by value id.
#[derive(Debug, Clone)]
pub struct Activations {
    pub values: Vec<Array2<f64>>,
    masks: Vec<Option<Array2<f64>>>,
}

impl Activations {
    pub fn output(&self) -> &Array2<f64> {
        self.values.last().expect("at least the input")
    }

    /// Output of node `i`.
    pub fn node(&self, i: usize) -> &Array2<f64> {
        &self.values[i + 1]
    }
}

/// Gradients of the dense nodes, indexed by node; `None` elsewhere.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub dense: Vec<Option<(Array2<f64>, Array1<f64>)>>,
}

impl QNetwork {
    pub fn new(input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input dimension must be ≥ 1".into()));
        }
        Ok(QNetwork {
            input_dim,
            nodes: Vec::new(),
            widths: vec![input_dim],
            roles: Roles::default(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("input width")
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_mut(&mut self, i: usize) -> &mut Node {
        &mut self.nodes[i]
    }

    /// Width of value id `v`.
    pub fn width(&self, v: usize) -> usize {
        self.widths[v]
    }

    /// Appends a node and returns its value id.
    pub fn push(&mut self, layer: Layer, inputs: Vec<usize>) -> Result<usize> {
        let next = self.widths.len();
        if inputs.is_empty() || inputs.iter().any(|&v| v >= next) {
            return Err(Error::Shape(format!("node {} reads undefined values {inputs:?}", next - 1)));
        }
        let in_w = self.widths[inputs[0]];
        let out_w = match &layer {
            Layer::Dense { weights, bias } => {
                if inputs.len() != 1 || weights.nrows() != in_w || bias.len() != weights.ncols() {
                    return Err(Error::Shape(format!(
                        "dense {}×{} with bias {} on input width {in_w}",
                        weights.nrows(),
                        weights.ncols(),
                        bias.len()
                    )));
                }
                weights.ncols()
            }
            Layer::Add => {
                if inputs.iter().any(|&v| self.widths[v] != in_w) {
                    return Err(Error::Shape("add inputs differ in width".into()));
                }
                in_w
            }
            Layer::Threshold(q) => {
                q.validate()?;
                single(&inputs)?;
                in_w
            }
            Layer::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(Error::InvalidArgument(format!("dropout rate must be in [0,1), got {rate}")));
                }
                single(&inputs)?;
                in_w
            }
            Layer::Relu => {
                single(&inputs)?;
                in_w
            }
        };
        self.nodes.push(Node { layer, inputs });
        self.widths.push(out_w);
        Ok(next)
    }

    pub fn parameter_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match &n.layer {
                Layer::Dense { weights, bias } => weights.len() + bias.len(),
                _ => 0,
            })
            .sum()
    }

    /// Sets every dropout node's rate.
    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate must be in [0,1), got {rate}")));
        }
        for n in &mut self.nodes {
            if let Layer::Dropout { rate: r } = &mut n.layer {
                *r = rate;
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &Array2<f64>, mode: Mode) -> Result<Activations> {
        self.forward_with(x, mode, None)
    }

    /// Forward pass with the output of node `replace.0` forced to
    /// `replace.1`; nodes that only feed it are still evaluated.
    fn forward_with(&self, x: &Array2<f64>, mode: Mode, replace: Option<(usize, &Array2<f64>)>) -> Result<Activations> {
        if x.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.ncols(),
            });
        }
        if self.nodes.is_empty() {
            return Err(Error::Shape("network has no nodes".into()));
        }
        let rows = x.nrows();
        let mut values: Vec<Array2<f64>> = Vec::with_capacity(self.nodes.len() + 1);
        let mut masks = vec![None; self.nodes.len()];
        values.push(x.clone());
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some((r, v)) = replace {
                if r == i {
                    if v.dim() != (rows, self.widths[i + 1]) {
                        return Err(Error::Shape(format!("replacement for node {i} has shape {:?}", v.dim())));
                    }
                    values.push(v.clone());
                    continue;
                }
            }
            let input = &values[node.inputs[0]];
            let out = match &node.layer {
                Layer::Dense { weights, bias } => input.dot(weights) + bias,
                Layer::Threshold(q) => input.mapv(|t| q.forward(t)),
                Layer::Relu => input.mapv(|t| t.max(0.0)),
                Layer::Dropout { rate } => match mode {
                    Mode::Train { seed } if *rate > 0.0 => {
                        let mut rng = stream(seed, Stream::Dropout, i as u64);
                        let keep = 1.0 / (1.0 - rate);
                        let mask = Array2::from_shape_fn(input.dim(), |_| {
                            if rng.random::<f64>() < *rate {
                                0.0
                            } else {
                                keep
                            }
                        });
                        let out = input * &mask;
                        masks[i] = Some(mask);
                        out
                    }
                    _ => input.clone(),
                },
                Layer::Add => {
                    let mut acc = input.clone();
                    for &v in &node.inputs[1..] {
                        acc += &values[v];
                    }
                    acc
                }
            };
            values.push(out);
        }
        Ok(Activations { values, masks })
    }

    /// Reverse pass from `grad_out = ∂loss/∂output`.
    pub fn backward(&self, acts: &Activations, grad_out: &Array2<f64>) -> Result<Gradients> {
        if acts.values.len() != self.nodes.len() + 1 {
            return Err(Error::Shape("activations do not belong to this network".into()));
        }
        if grad_out.dim() != acts.output().dim() {
            return Err(Error::Shape(format!(
                "output gradient {:?} vs output {:?}",
                grad_out.dim(),
                acts.output().dim()
            )));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len() + 1];
        grads[self.nodes.len()] = Some(grad_out.clone());
        let mut dense = vec![None; self.nodes.len()];
        fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
            match slot {
                Some(acc) => *acc += &g,
                None => *slot = Some(g),
            }
        }
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i + 1].take() else { continue };
            let node = &self.nodes[i];
            let src = node.inputs[0];
            let input = &acts.values[src];
            match &node.layer {
                Layer::Dense { weights, .. } => {
                    let dw = input.t().dot(&g);
                    let db = g.sum_axis(Axis(0));
                    if src > 0 {
                        accumulate(&mut grads[src], g.dot(&weights.t()));
                    }
                    dense[i] = Some((dw, db));
                }
                Layer::Threshold(q) => {
                    if src > 0 {
                        let mut gi = g;
                        gi.zip_mut_with(input, |gv, &t| *gv *= q.surrogate_grad(t));
                        accumulate(&mut grads[src], gi);
                    }
                }
                Layer::Relu => {
                    if src > 0 {
                        let mut gi = g;
                        gi.zip_mut_with(input, |gv, &t| {
                            if t <= 0.0 {
                                *gv = 0.0
                            }
                        });
                        accumulate(&mut grads[src], gi);
                    }
                }
                Layer::Dropout { .. } => {
                    if src > 0 {
                        let gi = match &acts.masks[i] {
                            Some(mask) => g * mask,
                            None => g,
                        };
                        accumulate(&mut grads[src], gi);
                    }
                }
                Layer::Add => {
                    for &v in &node.inputs {
                        if v > 0 {
                            accumulate(&mut grads[v], g.clone());
                        }
                    }
                }
            }
        }
        Ok(Gradients { dense })
    }

    /// `θ ← θ - lr·∇θ`.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        for (node, g) in self.nodes.iter_mut().zip(&grads.dense) {
            if let (Layer::Dense { weights, bias }, Some((dw, db))) = (&mut node.layer, g) {
                weights.scaled_add(-lr, dw);
                bias.scaled_add(-lr, db);
            }
        }
    }

    /// All dense parameters, node by node, weights (row-major) then bias.
    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for n in &self.nodes {
            if let Layer::Dense { weights, bias } = &n.layer {
                out.extend(weights.iter());
                out.extend(bias.iter());
            }
        }
        out
    }

    pub fn set_flat_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: self.parameter_count(),
                got: params.len(),
            });
        }
        let mut pos = 0;
        for n in &mut self.nodes {
            if let Layer::Dense { weights, bias } = &mut n.layer {
                for w in weights.iter_mut() {
                    *w = params[pos];
                    pos += 1;
                }
                for b in bias.iter_mut() {
                    *b = params[pos];
                    pos += 1;
                }
            }
        }
        Ok(())
    }

    /// Flattened gradient in the order of [`QNetwork::flat_parameters`].
    pub fn flatten_gradients(&self, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (n, g) in self.nodes.iter().zip(&grads.dense) {
            if let Layer::Dense { weights, bias } = &n.layer {
                match g {
                    Some((dw, db)) => {
                        out.extend(dw.iter());
                        out.extend(db.iter());
                    }
                    None => out.extend(std::iter::repeat_n(0.0, weights.len() + bias.len())),
                }
            }
        }
        out
    }

    /// Class scores in eval mode.
    pub fn scores(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x, Mode::Eval)?.values.pop().expect("output"))
    }

    /// Eval-mode class predictions; a single output is read as a sign
    /// (`≥ 0` → class 1).
    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        Ok(classes_from_scores(&self.scores(x)?))
    }

    fn dense(&self, i: usize) -> Result<(&Array2<f64>, &Array1<f64>)> {
        match &self.nodes[i].layer {
            Layer::Dense { weights, bias } => Ok((weights, bias)),
            other => Err(Error::Shape(format!("node {i} is {}, not dense", other.kind()))),
        }
    }

    /// Composes the latent and hyperplane layers into `(W, b)` acting on the
    /// input space.
    pub fn extract_arrangement(&self) -> Result<Arrangement> {
        if self.roles.threshold.is_none() {
            return Err(Error::Shape("network has no threshold layer".into()));
        }
        let h = self
            .roles
            .hyperplane
            .ok_or_else(|| Error::Shape("network has no hyperplane layer".into()))?;
        let (hw, hb) = self.dense(h)?;
        let (w, b) = match self.roles.latent {
            Some(l) => {
                let (lw, lb) = self.dense(l)?;
                (lw.dot(hw), lb.dot(hw) + hb)
            }
            None => (hw.clone(), hb.clone()),
        };
        let normals = nalgebra::DMatrix::from_fn(w.nrows(), w.ncols(), |r, c| w[(r, c)]);
        let offsets = nalgebra::DVector::from_fn(b.len(), |r, _| b[r]);
        Arrangement::new(normals, offsets)
    }

    /// Eval-mode class the Boolean head assigns to each sign pattern.
    pub fn head_classes(&self, patterns: &[SignVector]) -> Result<Vec<usize>> {
        let t = self
            .roles
            .threshold
            .ok_or_else(|| Error::Shape("network has no threshold layer".into()))?;
        let k = self.widths[t + 1];
        if patterns.is_empty() {
            return Ok(Vec::new());
        }
        let mut codes = Array2::zeros((patterns.len(), k));
        for (i, p) in patterns.iter().enumerate() {
            if p.len() != k {
                return Err(Error::DimensionMismatch { expected: k, got: p.len() });
            }
            for j in 0..k {
                codes[(i, j)] = f64::from(p.get(j));
            }
        }
        let dummy = Array2::zeros((patterns.len(), self.input_dim));
        let acts = self.forward_with(&dummy, Mode::Eval, Some((t, &codes)))?;
        Ok(classes_from_scores(acts.output()))
    }

    /// Binary networks only: the HAC given by the extracted arrangement and
    /// the head evaluated on `patterns` (class 1 ↦ `+1`).
    pub fn to_hac(&self, patterns: &[SignVector], rank_budget: usize) -> Result<HacClassifier> {
        let arr = self.extract_arrangement()?;
        let classes = self.head_classes(patterns)?;
        let mut table = LookupTable::new(DEFAULT_LABEL)?;
        for (p, c) in patterns.iter().zip(classes) {
            table.insert(p.clone(), if c == 1 { 1 } else { -1 })?;
        }
        HacClassifier::new(arr, table, rank_budget)
    }
}

fn single(inputs: &[usize]) -> Result<()> {
    if inputs.len() == 1 {
        Ok(())
    } else {
        Err(Error::Shape(format!("layer takes one input, got {}", inputs.len())))
    }
}

pub fn classes_from_scores(scores: &Array2<f64>) -> Vec<usize> {
    if scores.ncols() == 1 {
        scores.column(0).iter().map(|&s| usize::from(s >= 0.0)).collect()
    } else {
        scores
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// One hidden ReLU layer of width `2^k`.
    Mlp2k,
    /// One hidden ReLU layer of width [`RESNET_HIDDEN`] plus a linear skip
    /// from the Boolean code to the output.
    Resnet1000,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HannSpec {
    pub d: usize,
    pub r: usize,
    pub k: usize,
    pub head: Head,
    /// 1 for a binary score read as a sign, else the number of classes.
    pub output_dim: usize,
    pub quantizer: QuantizerKind,
    pub dropout: f64,
}

fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(rng))
}

fn dense_init(seed: u64, index: u64, fan_in: usize, fan_out: usize) -> Layer {
    let mut rng = stream(seed, Stream::Init, index);
    Layer::Dense {
        weights: glorot(&mut rng, fan_in, fan_out),
        bias: Array1::zeros(fan_out),
    }
}

/// Input → latent `Dense(d→r)` when `r < min(d, k)` → `Dense(→k)` + threshold →
/// dropout → Boolean head.
pub fn build_hann(spec: &HannSpec, seed: u64) -> Result<QNetwork> {
    let HannSpec { d, r, k, head, output_dim, quantizer, dropout } = *spec;
    if d == 0 || k == 0 || r == 0 || r > d.min(k) {
        return Err(Error::InvalidArgument(format!("need 1 ≤ r ≤ min(d, k); got d={d}, r={r}, k={k}")));
    }
    if output_dim == 0 {
        return Err(Error::InvalidArgument("output dimension must be ≥ 1".into()));
    }
    let mut net = QNetwork::new(d)?;
    let mut x = 0;
    // At r = min(d, k) the rank constraint is vacuous.
    if r < d.min(k) {
        x = net.push(dense_init(seed, 0, d, r), vec![x])?;
        net.roles.latent = Some(x - 1);
    }
    let mut rng = stream(seed, Stream::Init, 1);
    let hyper_w = glorot(&mut rng, net.width(x), k);
    let offsets = Uniform::new_inclusive(-0.5, 0.5).expect("finite");
    let hyper_b = Array1::from_shape_fn(k, |_| offsets.sample(&mut rng));
    let h = net.push(Layer::Dense { weights: hyper_w, bias: hyper_b }, vec![x])?;
    net.roles.hyperplane = Some(h - 1);
    let t = net.push(Layer::Threshold(quantizer), vec![h])?;
    net.roles.threshold = Some(t - 1);
    let code = net.push(Layer::Dropout { rate: dropout }, vec![t])?;
    match head {
        Head::Mlp2k => {
            let width = 1usize
                .checked_shl(k as u32)
                .filter(|_| k < 24)
                .ok_or_else(|| Error::BudgetExceeded(format!("2^{k} hidden units")))?;
            let hid = net.push(dense_init(seed, 2, k, width), vec![code])?;
            let act = net.push(Layer::Relu, vec![hid])?;
            net.push(dense_init(seed, 3, width, output_dim), vec![act])?;
        }
        Head::Resnet1000 => {
            let hid = net.push(dense_init(seed, 2, k, RESNET_HIDDEN), vec![code])?;
            let act = net.push(Layer::Relu, vec![hid])?;
            let out_hidden = net.push(dense_init(seed, 3, RESNET_HIDDEN, output_dim), vec![act])?;
            let out_skip = net.push(dense_init(seed, 4, k, output_dim), vec![code])?;
            net.push(Layer::Add, vec![out_skip, out_hidden])?;
        }
    }
    Ok(net)
}

/// Trainable parameters of the network [`build_hann`] would produce, computed
/// without allocating it. Valid for any `k`, including heads too wide to build.
pub fn hann_parameter_count(d: usize, r: usize, k: usize, head: Head, output_dim: usize) -> Result<u128> {
    if d == 0 || k == 0 || r == 0 || r > d.min(k) || output_dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 1 ≤ r ≤ min(d, k) and output_dim ≥ 1; got d={d}, r={r}, k={k}, output_dim={output_dim}"
        )));
    }
    let overflow = || Error::Overflow(format!("parameter count for d={d}, r={r}, k={k}"));
    let dense = |i: u128, o: u128| i.checked_mul(o).and_then(|w| w.checked_add(o)).ok_or_else(overflow);
    let (d, r, k, out) = (d as u128, r as u128, k as u128, output_dim as u128);
    let mut total = 0u128;
    let mut width = d;
    if r < d.min(k) {
        total += dense(d, r)?;
        width = r;
    }
    total += dense(width, k)?;
    let head_params = match head {
        Head::Mlp2k => {
            let hidden = 1u128.checked_shl(k as u32).filter(|_| k < 128).ok_or_else(overflow)?;
            dense(k, hidden)?.checked_add(dense(hidden, out)?).ok_or_else(overflow)?
        }
        Head::Resnet1000 => {
            let hidden = RESNET_HIDDEN as u128;
            dense(k, hidden)? + dense(hidden, out)? + dense(k, out)?
        }
    };
    total.checked_add(head_params).ok_or_else(overflow)
}
