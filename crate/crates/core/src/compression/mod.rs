//! Sample compression for hyperplane arrangement classifiers.
//!
//! The compression map keeps, for every hyperplane, the few samples whose
//! margin constraints pin down the min-norm separating hyperplane, plus one
//! representative per occupied cell. Reconstruction re-solves the stored
//! margin programs and refills the lookup table from the representatives.

pub mod bounds;
pub mod codec;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use bounds::{ceil_log2, scheme_size, uniform_deviation_bound, vc_upper_bound, SchemeSize};

use crate::error::{Error, Result};
use crate::geometry::{numeric_rank, sgn, Arrangement, SignVector, DEFAULT_RANK_TOL};
use crate::hac::{HacClassifier, LabeledSample, LookupTable, DEFAULT_LABEL};
use crate::minnorm::{caratheodory_support, margin_qp, SolverOptions};

/// Halvings of the offset perturbation tried before giving up.
pub const MAX_PERTURBATION_HALVINGS: usize = 40;

/// Tolerance of the margin programs solved by both maps.
pub const COMPRESSION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideEntry {
    /// `s_{ij}`: the side of hyperplane `j` the stored sample lies on.
    pub sign: i8,
    pub hyperplane: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideInfo {
    pub k: usize,
    pub entries: Vec<SideEntry>,
}

impl SideInfo {
    pub fn bits_per_entry(&self) -> usize {
        1 + ceil_log2(self.k as u64) as usize
    }

    pub fn bit_cost(&self) -> usize {
        self.entries.len() * self.bits_per_entry()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d: usize,
    pub r: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedSample {
    pub dims: Dims,
    pub qp_samples: Vec<LabeledSample>,
    /// Aligned index-by-index with `qp_samples`.
    pub side_info: SideInfo,
    pub table_samples: Vec<LabeledSample>,
}

impl CompressedSample {
    /// Structural checks only; says nothing about whether the stored
    /// programs are feasible.
    pub fn validate(&self) -> Result<()> {
        let Dims { d, r, k } = self.dims;
        if d == 0 || k == 0 || r == 0 || r > d {
            return Err(Error::Corrupt(format!("bad dims d={d}, r={r}, k={k}")));
        }
        if self.side_info.k != k {
            return Err(Error::Corrupt(format!(
                "side info built for k={} but dims say k={k}",
                self.side_info.k
            )));
        }
        if self.side_info.entries.len() != self.qp_samples.len() {
            return Err(Error::Corrupt(format!(
                "{} side entries for {} stored samples",
                self.side_info.entries.len(),
                self.qp_samples.len()
            )));
        }
        for e in &self.side_info.entries {
            if e.hyperplane >= k || (e.sign != 1 && e.sign != -1) {
                return Err(Error::Corrupt(format!("bad side entry {e:?}")));
            }
        }
        for s in self.qp_samples.iter().chain(&self.table_samples) {
            if s.x.len() != d {
                return Err(Error::Corrupt(format!("stored point of dimension {} ≠ {d}", s.x.len())));
            }
            if s.y != 1 && s.y != -1 {
                return Err(Error::Corrupt(format!("stored label {}", s.y)));
            }
            if s.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Corrupt("non-finite stored coordinate".into()));
            }
        }
        Ok(())
    }
}

fn check_consistent(clf: &HacClassifier, samples: &[LabeledSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("compression needs a nonempty sample".into()));
    }
    let mut count = 0;
    let mut first = usize::MAX;
    for (i, s) in samples.iter().enumerate() {
        if clf.predict(&s.x)? != s.y {
            count += 1;
            first = first.min(i);
        }
    }
    if count > 0 {
        return Err(Error::NotRealizable { count, first });
    }
    Ok(())
}

fn min_abs_margin(arr: &Arrangement, j: usize, samples: &[LabeledSample]) -> f64 {
    samples
        .iter()
        .map(|s| arr.margin(j, &s.x).abs())
        .fold(f64::INFINITY, f64::min)
}

/// Returns a classifier with the same sign vectors on every sample and
/// `|w_jᵀx_i + b_j| ≥ 1` for all `i, j`.
pub fn canonicalize(clf: &HacClassifier, samples: &[LabeledSample]) -> Result<HacClassifier> {
    check_consistent(clf, samples)?;
    let mut arr = clf.arrangement().clone();
    for j in 0..arr.k() {
        let w = arr.normal(j).to_vec();
        let b = arr.offset(j);
        let signs: Vec<i8> = samples.iter().map(|s| sgn(arr.margin(j, &s.x))).collect();

        let mut b_tilde = b;
        if samples.iter().any(|s| arr.margin(j, &s.x) == 0.0) {
            let smallest = samples
                .iter()
                .map(|s| arr.margin(j, &s.x).abs())
                .filter(|m| *m > 0.0)
                .fold(f64::INFINITY, f64::min);
            let mut delta = if smallest.is_finite() { 0.5 * smallest } else { 1.0 };
            let mut accepted = false;
            for _ in 0..=MAX_PERTURBATION_HALVINGS {
                arr.set_hyperplane(j, &w, b + delta);
                let kept = samples
                    .iter()
                    .zip(&signs)
                    .all(|(s, &sg)| {
                        let m = arr.margin(j, &s.x);
                        m != 0.0 && sgn(m) == sg
                    });
                if kept {
                    accepted = true;
                    break;
                }
                delta *= 0.5;
            }
            if !accepted {
                return Err(Error::Perturbation { hyperplane: j });
            }
            b_tilde = b + delta;
        }

        let lambda = min_abs_margin(&arr, j, samples);
        let mut factor = 1.0 / lambda;
        // Rounding can leave the smallest margin a few ulps under one.
        loop {
            let wf: Vec<f64> = w.iter().map(|v| v * factor).collect();
            arr.set_hyperplane(j, &wf, b_tilde * factor);
            if min_abs_margin(&arr, j, samples) >= 1.0 {
                break;
            }
            factor *= 1.0 + 4.0 * f64::EPSILON;
        }
        if !arr.normals().iter().chain(arr.offsets().iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("canonical arrangement"));
        }
        let preserved = samples
            .iter()
            .zip(&signs)
            .all(|(s, &sg)| sgn(arr.margin(j, &s.x)) == sg);
        if !preserved {
            return Err(Error::Perturbation { hyperplane: j });
        }
    }
    HacClassifier::new(arr, clf.table().clone(), clf.rank_budget())
}

fn solver_options() -> SolverOptions {
    SolverOptions::with_tol(COMPRESSION_TOL)
}

/// The compression map. `clf` must label every sample correctly.
pub fn compress(samples: &[LabeledSample], clf: &HacClassifier) -> Result<CompressedSample> {
    check_consistent(clf, samples)?;
    let arr = clf.arrangement();
    let (d, k, r) = (arr.d(), arr.k(), clf.rank_budget());
    if k == 0 {
        return Err(Error::InvalidArgument("compression needs at least one hyperplane".into()));
    }
    let opts = solver_options();
    let mut qp_samples = Vec::new();
    let mut entries = Vec::new();
    for j in 0..k {
        let signs: Vec<i8> = samples.iter().map(|s| sgn(arr.margin(j, &s.x))).collect();
        let points: Vec<(&[f64], i8)> = samples.iter().zip(&signs).map(|(s, &sg)| (s.x.as_slice(), sg)).collect();
        let sol = margin_qp(&points, &opts)?;
        let support = caratheodory_support(&sol.solution, &sol.polyhedron, opts.tol)?;
        if support.indices.len() > d + 1 {
            return Err(Error::BudgetExceeded(format!(
                "hyperplane {j} keeps {} samples > d+1 = {}",
                support.indices.len(),
                d + 1
            )));
        }
        for &i in &support.indices {
            qp_samples.push(samples[i].clone());
            entries.push(SideEntry {
                sign: signs[i],
                hyperplane: j,
            });
        }
    }

    let mut seen: BTreeSet<SignVector> = BTreeSet::new();
    let mut table_samples = Vec::new();
    for s in samples {
        if seen.insert(arr.sign_vector(&s.x)?) {
            table_samples.push(s.clone());
        }
    }

    Ok(CompressedSample {
        dims: Dims { d, r, k },
        qp_samples,
        side_info: SideInfo { k, entries },
        table_samples,
    })
}

/// The arrangement `(W̄, b̄)` solved from the stored constraints alone.
pub fn reconstruct_arrangement(comp: &CompressedSample) -> Result<Arrangement> {
    comp.validate()?;
    let Dims { d, k, .. } = comp.dims;
    let opts = solver_options();
    let mut hyperplanes = Vec::with_capacity(k);
    for j in 0..k {
        let points: Vec<(&[f64], i8)> = comp
            .qp_samples
            .iter()
            .zip(&comp.side_info.entries)
            .filter(|(_, e)| e.hyperplane == j)
            .map(|(s, e)| (s.x.as_slice(), e.sign))
            .collect();
        if points.is_empty() {
            return Err(Error::Corrupt(format!("no stored constraint for hyperplane {j}")));
        }
        let sol = margin_qp(&points, &opts).map_err(|e| match e {
            Error::Infeasible { .. } => Error::Corrupt(format!("stored constraints of hyperplane {j} are infeasible")),
            other => other,
        })?;
        hyperplanes.push((sol.w, sol.b));
    }
    Arrangement::from_hyperplanes(d, &hyperplanes)
}

/// The reconstruction map. Patterns without a stored representative fall
/// back to `+1`.
pub fn reconstruct(comp: &CompressedSample) -> Result<HacClassifier> {
    let arr = reconstruct_arrangement(comp)?;
    let mut table = LookupTable::new(DEFAULT_LABEL)?;
    for s in &comp.table_samples {
        table.insert(arr.sign_vector(&s.x)?, s.y)?;
    }
    // The reconstructed normals need not keep rank ≤ r.
    let rank = numeric_rank(arr.normals(), DEFAULT_RANK_TOL)?.max(comp.dims.r).max(1);
    HacClassifier::new(arr, table, rank)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub qp_samples: usize,
    pub side_bits: usize,
    pub table_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    /// `(d+1)k`.
    pub qp_samples: u128,
    /// `d(k+1)`, reported alongside for comparison only.
    pub qp_samples_alt: u128,
    pub side_bits: u128,
    pub table_samples: u128,
    pub qp_within: bool,
    pub side_within: bool,
    pub table_within: bool,
}

impl Budgets {
    pub fn all_within(&self) -> bool {
        self.qp_within && self.side_within && self.table_within
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    /// Smallest `|w_jᵀx_i + b_j|` of the canonical classifier.
    pub canonical_min: f64,
    /// Smallest `|w̄_jᵀx_i + b̄_j|` of the reconstruction.
    pub reconstructed_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripReport {
    pub consistent: bool,
    /// Indices of samples the reconstruction labels wrongly.
    pub violations: Vec<usize>,
    /// First failure of any stage, if one occurred.
    pub error: Option<String>,
    pub sizes: Option<Sizes>,
    pub budgets: Option<Budgets>,
    pub margins: Option<Margins>,
}

impl RoundTripReport {
    fn failed(error: Error) -> Self {
        RoundTripReport {
            consistent: false,
            violations: Vec::new(),
            error: Some(error.to_string()),
            sizes: None,
            budgets: None,
            margins: None,
        }
    }
}

fn budgets_for(comp: &CompressedSample) -> Result<Budgets> {
    let Dims { d, r, k } = comp.dims;
    let (d, k) = (d as u128, k as u128);
    let qp = (d + 1) * k;
    let side = qp * (1 + u128::from(ceil_log2(k as u64)));
    let table = crate::geometry::max_cells(k as i64, r as i64)?;
    Ok(Budgets {
        qp_samples: qp,
        qp_samples_alt: d * (k + 1),
        side_bits: side,
        table_samples: table,
        qp_within: comp.qp_samples.len() as u128 <= qp,
        side_within: comp.side_info.bit_cost() as u128 <= side,
        table_within: comp.table_samples.len() as u128 <= table,
    })
}

fn all_min_margin(arr: &Arrangement, samples: &[LabeledSample]) -> f64 {
    (0..arr.k())
        .map(|j| min_abs_margin(arr, j, samples))
        .fold(f64::INFINITY, f64::min)
}

/// Reconstructs `comp` and checks it against `samples`.
pub fn check_reconstruction(comp: &CompressedSample, samples: &[LabeledSample]) -> RoundTripReport {
    let sizes = Sizes {
        qp_samples: comp.qp_samples.len(),
        side_bits: comp.side_info.bit_cost(),
        table_samples: comp.table_samples.len(),
    };
    let budgets = budgets_for(comp).ok();
    let rec = match reconstruct(comp) {
        Ok(rec) => rec,
        Err(e) => {
            let mut report = RoundTripReport::failed(e);
            report.sizes = Some(sizes);
            report.budgets = budgets;
            return report;
        }
    };
    let mut violations = Vec::new();
    let mut error = None;
    for (i, s) in samples.iter().enumerate() {
        match rec.predict(&s.x) {
            Ok(y) if y == s.y => {}
            Ok(_) => violations.push(i),
            Err(e) => {
                error.get_or_insert_with(|| e.to_string());
                violations.push(i);
            }
        }
    }
    let within = budgets.is_some_and(|b| b.all_within());
    RoundTripReport {
        consistent: violations.is_empty() && error.is_none() && within,
        violations,
        error,
        sizes: Some(sizes),
        budgets,
        margins: Some(Margins {
            canonical_min: f64::NAN,
            reconstructed_min: all_min_margin(rec.arrangement(), samples),
        }),
    }
}

/// Canonicalize, compress, reconstruct and check. Never fails; every failure
/// is recorded in the report.
pub fn verify_round_trip(samples: &[LabeledSample], clf: &HacClassifier) -> RoundTripReport {
    let canonical = match canonicalize(clf, samples) {
        Ok(c) => c,
        Err(e) => return RoundTripReport::failed(e),
    };
    let comp = match compress(samples, &canonical) {
        Ok(c) => c,
        Err(e) => return RoundTripReport::failed(e),
    };
    let mut report = check_reconstruction(&comp, samples);
    if let Some(m) = report.margins.as_mut() {
        m.canonical_min = all_min_margin(canonical.arrangement(), samples);
    }
    report
}
