//! Hyperplane arrangement classifiers: an arrangement followed by a lookup
//! table over its sign vectors.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{numeric_rank, sgn, Arrangement, SignVector, DEFAULT_RANK_TOL};

/// Label assigned to sign vectors the table has never seen.
pub const DEFAULT_LABEL: i8 = 1;

/// Largest instance [`brute_force_erm`] accepts.
pub const BRUTE_FORCE_MAX_N: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: i8,
}

impl LabeledSample {
    pub fn new(x: Vec<f64>, y: i8) -> Self {
        LabeledSample { x, y }
    }
}

fn check_label(y: i8) -> Result<()> {
    if y == 1 || y == -1 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("binary label must be ±1, got {y}")))
    }
}

/// A partially defined Boolean function on sign vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableJson", into = "TableJson")]
pub struct LookupTable {
    entries: BTreeMap<SignVector, i8>,
    default_label: i8,
}

#[derive(Serialize, Deserialize)]
struct TableEntry {
    pattern: SignVector,
    label: i8,
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    table: Vec<TableEntry>,
    default_label: i8,
}

impl From<LookupTable> for TableJson {
    fn from(t: LookupTable) -> Self {
        TableJson {
            table: t
                .entries
                .into_iter()
                .map(|(pattern, label)| TableEntry { pattern, label })
                .collect(),
            default_label: t.default_label,
        }
    }
}

impl TryFrom<TableJson> for LookupTable {
    type Error = Error;
    fn try_from(j: TableJson) -> Result<Self> {
        let mut t = LookupTable::new(j.default_label)?;
        for e in j.table {
            t.insert(e.pattern, e.label)?;
        }
        Ok(t)
    }
}

impl LookupTable {
    pub fn new(default_label: i8) -> Result<Self> {
        check_label(default_label)?;
        Ok(LookupTable {
            entries: BTreeMap::new(),
            default_label,
        })
    }

    pub fn insert(&mut self, pattern: SignVector, label: i8) -> Result<Option<i8>> {
        check_label(label)?;
        if let Some(existing) = self.entries.keys().next() {
            if existing.len() != pattern.len() {
                return Err(Error::DimensionMismatch {
                    expected: existing.len(),
                    got: pattern.len(),
                });
            }
        }
        Ok(self.entries.insert(pattern, label))
    }

    pub fn lookup(&self, pattern: &SignVector) -> i8 {
        self.entries.get(pattern).copied().unwrap_or(self.default_label)
    }

    pub fn default_label(&self) -> i8 {
        self.default_label
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&SignVector, i8)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    /// Pattern length shared by all keys, if any.
    pub fn key_len(&self) -> Option<usize> {
        self.entries.keys().next().map(SignVector::len)
    }
}

/// `h ∘ q_{W,b}` with `rank(W) ≤ r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassifierJson", into = "ClassifierJson")]
pub struct HacClassifier {
    arrangement: Arrangement,
    table: LookupTable,
    rank_budget: usize,
}

#[derive(Serialize, Deserialize)]
struct ClassifierJson {
    arrangement: Arrangement,
    table: Vec<TableEntry>,
    default_label: i8,
    rank_budget: usize,
}

impl From<HacClassifier> for ClassifierJson {
    fn from(c: HacClassifier) -> Self {
        let t: TableJson = c.table.into();
        ClassifierJson {
            arrangement: c.arrangement,
            table: t.table,
            default_label: t.default_label,
            rank_budget: c.rank_budget,
        }
    }
}

impl TryFrom<ClassifierJson> for HacClassifier {
    type Error = Error;
    fn try_from(j: ClassifierJson) -> Result<Self> {
        let table = LookupTable::try_from(TableJson {
            table: j.table,
            default_label: j.default_label,
        })?;
        HacClassifier::new(j.arrangement, table, j.rank_budget)
    }
}

impl HacClassifier {
    /// Checks `rank(W) ≤ rank_budget ≤ d` and that table keys have length `k`.
    pub fn new(arrangement: Arrangement, table: LookupTable, rank_budget: usize) -> Result<Self> {
        let d = arrangement.d();
        if rank_budget < 1 || rank_budget > d {
            return Err(Error::InvalidArgument(format!(
                "rank budget must lie in [1, d={d}], got {rank_budget}"
            )));
        }
        if let Some(len) = table.key_len() {
            if len != arrangement.k() {
                return Err(Error::DimensionMismatch {
                    expected: arrangement.k(),
                    got: len,
                });
            }
        }
        let rank = numeric_rank(arrangement.normals(), DEFAULT_RANK_TOL)?;
        if rank > rank_budget {
            return Err(Error::InvalidArgument(format!(
                "normal matrix has rank {rank} > budget {rank_budget}"
            )));
        }
        Ok(HacClassifier {
            arrangement,
            table,
            rank_budget,
        })
    }

    pub fn arrangement(&self) -> &Arrangement {
        &self.arrangement
    }

    pub fn table(&self) -> &LookupTable {
        &self.table
    }

    pub fn rank_budget(&self) -> usize {
        self.rank_budget
    }

    pub fn d(&self) -> usize {
        self.arrangement.d()
    }

    pub fn k(&self) -> usize {
        self.arrangement.k()
    }

    pub fn predict(&self, x: &[f64]) -> Result<i8> {
        Ok(self.table.lookup(&self.arrangement.sign_vector(x)?))
    }

    pub fn into_parts(self) -> (Arrangement, LookupTable, usize) {
        (self.arrangement, self.table, self.rank_budget)
    }
}

/// Per-cell majority labels (ties to `+1`); the exact empirical risk
/// minimizer over tables for a fixed arrangement.
pub fn fit_table_erm(arr: &Arrangement, samples: &[LabeledSample]) -> Result<LookupTable> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("fit_table_erm needs samples".into()));
    }
    let mut votes: BTreeMap<SignVector, i64> = BTreeMap::new();
    for s in samples {
        check_label(s.y)?;
        *votes.entry(arr.sign_vector(&s.x)?).or_default() += i64::from(s.y);
    }
    let mut table = LookupTable::new(DEFAULT_LABEL)?;
    for (pattern, v) in votes {
        table.insert(pattern, if v >= 0 { 1 } else { -1 })?;
    }
    Ok(table)
}

/// Axis-aligned grid hyperplanes `x_j = l / k_tilde`, `l = 1..k_tilde-1`,
/// ordered coordinate-major.
pub fn grid_arrangement(d: usize, k_tilde: usize) -> Result<Arrangement> {
    if d == 0 || k_tilde == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid needs d ≥ 1 and k_tilde ≥ 1, got d={d}, k_tilde={k_tilde}"
        )));
    }
    let k = d * (k_tilde - 1);
    let mut normals = DMatrix::zeros(d, k);
    let mut offsets = DVector::zeros(k);
    for j in 0..d {
        for l in 1..k_tilde {
            let col = j * (k_tilde - 1) + (l - 1);
            normals[(j, col)] = 1.0;
            offsets[col] = -(l as f64) / k_tilde as f64;
        }
    }
    Arrangement::new(normals, offsets)
}

/// Empirical histogram classifier on the `1/k_tilde` grid of `[0,1]^d`,
/// expressed as a HAC with `d(k_tilde - 1)` hyperplanes and rank budget `d`.
pub fn histogram_hac(d: usize, k_tilde: usize, samples: &[LabeledSample]) -> Result<HacClassifier> {
    for (i, s) in samples.iter().enumerate() {
        if s.x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.x.len(),
            });
        }
        if s.x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!("sample {i} lies outside [0,1]^{d}")));
        }
    }
    let arr = grid_arrangement(d, k_tilde)?;
    let table = if samples.is_empty() {
        LookupTable::new(DEFAULT_LABEL)?
    } else {
        fit_table_erm(&arr, samples)?
    };
    HacClassifier::new(arr, table, d)
}

pub fn empirical_risk(clf: &HacClassifier, samples: &[LabeledSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empirical risk of an empty sample".into()));
    }
    let mut wrong = 0usize;
    for s in samples {
        if clf.predict(&s.x)? != s.y {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / samples.len() as f64)
}

/// Candidate hyperplanes for the brute-force ERM search.
///
/// For `d = 1`: thresholds at midpoints of consecutive distinct values and
/// beyond both ends. For `d = 2`: for every pair of distinct points, the line
/// through them shifted by `±ε` (both points on one side) and rotated by a
/// small angle about their midpoint in both directions (points on opposite
/// sides), plus axis-aligned separators between sorted coordinates. Every
/// dichotomy a line can induce on the sample is realized by some candidate.
fn erm_candidates(samples: &[LabeledSample], d: usize) -> Vec<(Vec<f64>, f64)> {
    let pts: Vec<&[f64]> = samples.iter().map(|s| s.x.as_slice()).collect();
    let diameter = pts
        .iter()
        .flat_map(|p| pts.iter().map(move |q| dist(p, q)))
        .fold(0.0, f64::max)
        .max(1.0);
    let eps = 1e-6 * diameter;
    let mut out = Vec::new();
    let axis_separators = |axis: usize, out: &mut Vec<(Vec<f64>, f64)>| {
        let mut v: Vec<f64> = pts.iter().map(|p| p[axis]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        let mut normal = vec![0.0; d];
        normal[axis] = 1.0;
        out.push((normal.clone(), -(v[0] - 1.0)));
        for w in v.windows(2) {
            out.push((normal.clone(), -0.5 * (w[0] + w[1])));
        }
        out.push((normal, -(v[v.len() - 1] + 1.0)));
    };
    if d == 1 {
        axis_separators(0, &mut out);
        return out;
    }
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let (p, q) = (pts[i], pts[j]);
            let dir = [q[0] - p[0], q[1] - p[1]];
            let len = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
            if len == 0.0 {
                continue;
            }
            let normal = [-dir[1] / len, dir[0] / len];
            let b = -(normal[0] * p[0] + normal[1] * p[1]);
            out.push((normal.to_vec(), b + eps));
            out.push((normal.to_vec(), b - eps));
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            let angle = eps / len;
            for a in [angle, -angle] {
                let (c, s) = (a.cos(), a.sin());
                let rn = [c * normal[0] - s * normal[1], s * normal[0] + c * normal[1]];
                out.push((rn.to_vec(), -(rn[0] * mid[0] + rn[1] * mid[1])));
            }
        }
    }
    axis_separators(0, &mut out);
    axis_separators(1, &mut out);
    out
}

fn dist(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Exhaustive ERM over `HAC(d, d, k)` for tiny instances (`n ≤ 30`, `k ≤ 2`,
/// `d ≤ 2`). Returns the first minimizer in candidate order.
pub fn brute_force_erm(samples: &[LabeledSample], k: usize) -> Result<HacClassifier> {
    let d = samples
        .first()
        .map(|s| s.x.len())
        .ok_or_else(|| Error::InvalidArgument("brute_force_erm needs samples".into()))?;
    if samples.len() > BRUTE_FORCE_MAX_N || k == 0 || k > 2 || d == 0 || d > 2 {
        return Err(Error::BudgetExceeded(format!(
            "brute_force_erm accepts n ≤ {BRUTE_FORCE_MAX_N}, 1 ≤ k ≤ 2, d ≤ 2; got n={}, k={k}, d={d}",
            samples.len()
        )));
    }
    let candidates = erm_candidates(samples, d);
    // Side of every sample for every candidate, computed once.
    let sides: Vec<Vec<i8>> = candidates
        .iter()
        .map(|(w, b)| {
            samples
                .iter()
                .map(|s| sgn(crate::geometry::dot(w, &s.x) + b))
                .collect()
        })
        .collect();
    let n = samples.len();
    let m = candidates.len();
    let tuples: Box<dyn Iterator<Item = Vec<usize>>> = if k == 1 {
        Box::new((0..m).map(|a| vec![a]))
    } else {
        Box::new((0..m).flat_map(move |a| (a..m).map(move |b| vec![a, b])))
    };
    let mut best: Option<(usize, Vec<usize>)> = None;
    for choice in tuples {
        let errors = table_errors(&choice, &sides, samples, n);
        if best.as_ref().is_none_or(|(e, _)| errors < *e) {
            best = Some((errors, choice));
            if errors == 0 {
                break;
            }
        }
    }
    let (_, choice) = best.expect("at least one candidate");
    let planes: Vec<(Vec<f64>, f64)> = choice.iter().map(|&c| candidates[c].clone()).collect();
    let arr = Arrangement::from_hyperplanes(d, &planes)?;
    let table = fit_table_erm(&arr, samples)?;
    HacClassifier::new(arr, table, d)
}

fn table_errors(choice: &[usize], sides: &[Vec<i8>], samples: &[LabeledSample], n: usize) -> usize {
    // Pattern as a bitmask (k ≤ 2) → (positive votes, negative votes).
    let mut votes = [(0usize, 0usize); 4];
    for i in 0..n {
        let mut key = 0usize;
        for (bit, &c) in choice.iter().enumerate() {
            if sides[c][i] > 0 {
                key |= 1 << bit;
            }
        }
        if samples[i].y > 0 {
            votes[key].0 += 1;
        } else {
            votes[key].1 += 1;
        }
    }
    votes.iter().map(|&(p, m)| p.min(m)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(x: &[f64], y: i8) -> LabeledSample {
        LabeledSample::new(x.to_vec(), y)
    }

    #[test]
    fn figure_one_lookup() {
        // Three lines; the point (1.3, 0.5)-ish region "++-" maps to +1.
        let arr = Arrangement::from_hyperplanes(
            2,
            &[(vec![0.5, 1.0], 0.0), (vec![1.0, -1.0], 1.0), (vec![-2.0, -0.5], 1.0)],
        )
        .unwrap();
        let x = [1.3, 0.5];
        assert_eq!(arr.sign_vector(&x).unwrap().to_string(), "++-");
        let mut table = LookupTable::new(-1).unwrap();
        for (p, y) in [("+++", 1), ("++-", 1), ("+-+", -1), ("+--", 1), ("-++", -1), ("-+-", 1), ("--+", -1)] {
            table.insert(p.parse().unwrap(), y).unwrap();
        }
        let clf = HacClassifier::new(arr, table, 2).unwrap();
        assert_eq!(clf.predict(&x).unwrap(), 1);
    }

    #[test]
    fn empty_table_uses_default() {
        let arr = Arrangement::from_hyperplanes(1, &[(vec![1.0], 0.0)]).unwrap();
        let clf = HacClassifier::new(arr, LookupTable::new(-1).unwrap(), 1).unwrap();
        assert_eq!(clf.predict(&[3.0]).unwrap(), -1);
        assert_eq!(clf.predict(&[-3.0]).unwrap(), -1);
        assert!(clf.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn majority_and_ties() {
        let arr = Arrangement::from_hyperplanes(1, &[(vec![1.0], 0.0)]).unwrap();
        let t = fit_table_erm(&arr, &[s(&[1.0], 1), s(&[2.0], 1), s(&[3.0], -1)]).unwrap();
        assert_eq!(t.lookup(&"+".parse().unwrap()), 1);
        let t = fit_table_erm(&arr, &[s(&[1.0], 1), s(&[2.0], -1)]).unwrap();
        assert_eq!(t.lookup(&"+".parse().unwrap()), 1);
        assert!(fit_table_erm(&arr, &[]).is_err());
    }

    #[test]
    fn table_erm_beats_every_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let k = rng.random_range(1..=3);
            let planes: Vec<(Vec<f64>, f64)> = (0..k)
                .map(|_| (vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)], rng.random_range(-0.5..0.5)))
                .collect();
            let arr = Arrangement::from_hyperplanes(2, &planes).unwrap();
            let samples: Vec<LabeledSample> = (0..25)
                .map(|_| s(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)], if rng.random_bool(0.5) { 1 } else { -1 }))
                .collect();
            let fitted = fit_table_erm(&arr, &samples).unwrap();
            let risk_of = |table: &LookupTable| {
                samples
                    .iter()
                    .filter(|x| table.lookup(&arr.sign_vector(&x.x).unwrap()) != x.y)
                    .count()
            };
            let best = risk_of(&fitted);
            // All 2^(2^k) tables over the full pattern space.
            let patterns: Vec<SignVector> = (0..1usize << k)
                .map(|m| SignVector::new((0..k).map(|b| if m >> b & 1 == 1 { 1 } else { -1 }).collect()).unwrap())
                .collect();
            for assignment in 0..1usize << patterns.len() {
                let mut t = LookupTable::new(1).unwrap();
                for (i, p) in patterns.iter().enumerate() {
                    t.insert(p.clone(), if assignment >> i & 1 == 1 { 1 } else { -1 }).unwrap();
                }
                assert!(best <= risk_of(&t));
            }
        }
    }

    #[test]
    fn histogram_grid() {
        let clf = histogram_hac(2, 3, &[s(&[0.1, 0.1], 1)]).unwrap();
        assert_eq!(clf.k(), 4);
        let cells = crate::geometry::enumerate_cells(clf.arrangement()).unwrap();
        assert_eq!(cells.len(), 9);

        let flat = histogram_hac(2, 1, &[s(&[0.1, 0.1], -1), s(&[0.5, 0.9], -1), s(&[0.3, 0.2], 1)]).unwrap();
        assert_eq!(flat.k(), 0);
        assert_eq!(flat.predict(&[0.9, 0.9]).unwrap(), -1);

        assert!(histogram_hac(1, 3, &[s(&[1.5], 1)]).is_err());
    }

    #[test]
    fn histogram_threshold_posterior() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples: Vec<LabeledSample> = (0..10_000)
            .map(|_| {
                let x = [rng.random::<f64>(), rng.random::<f64>()];
                s(&x, if x[0] > 0.5 { 1 } else { -1 })
            })
            .collect();
        let clf = histogram_hac(2, 4, &samples).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let centre = [(i as f64 + 0.5) / 4.0, (j as f64 + 0.5) / 4.0];
                let expect = if i as f64 / 4.0 >= 0.5 { 1 } else { -1 };
                assert_eq!(clf.predict(&centre).unwrap(), expect);
            }
        }
    }

    #[test]
    fn brute_force_examples() {
        let sep: Vec<LabeledSample> = (0..10)
            .map(|i| {
                let x = [i as f64 * 0.1, (i * 7 % 10) as f64 * 0.1];
                s(&x, if x[0] + 0.2 * x[1] > 0.5 { 1 } else { -1 })
            })
            .collect();
        let clf = brute_force_erm(&sep, 1).unwrap();
        assert_eq!(empirical_risk(&clf, &sep).unwrap(), 0.0);

        let xor = vec![s(&[0.0, 0.0], 1), s(&[1.0, 1.0], 1), s(&[0.0, 1.0], -1), s(&[1.0, 0.0], -1)];
        assert_eq!(empirical_risk(&brute_force_erm(&xor, 1).unwrap(), &xor).unwrap(), 0.25);
        assert_eq!(empirical_risk(&brute_force_erm(&xor, 2).unwrap(), &xor).unwrap(), 0.0);

        let same = vec![s(&[0.2], -1), s(&[0.5], -1), s(&[0.9], -1)];
        assert_eq!(empirical_risk(&brute_force_erm(&same, 1).unwrap(), &same).unwrap(), 0.0);
        assert!(brute_force_erm(&same, 3).is_err());
    }

    #[test]
    fn brute_force_monotone_in_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let pts: Vec<LabeledSample> = (0..12)
                .map(|_| s(&[rng.random::<f64>(), rng.random::<f64>()], if rng.random_bool(0.5) { 1 } else { -1 }))
                .collect();
            let r1 = empirical_risk(&brute_force_erm(&pts, 1).unwrap(), &pts).unwrap();
            let r2 = empirical_risk(&brute_force_erm(&pts, 2).unwrap(), &pts).unwrap();
            assert!(r2 <= r1);
        }
    }

    #[test]
    fn risk_counts() {
        let arr = Arrangement::from_hyperplanes(1, &[(vec![1.0], 0.0)]).unwrap();
        let mut t = LookupTable::new(1).unwrap();
        t.insert("-".parse().unwrap(), -1).unwrap();
        let clf = HacClassifier::new(arr.clone(), t, 1).unwrap();
        let data = [s(&[-1.0], -1), s(&[1.0], 1)];
        assert_eq!(empirical_risk(&clf, &data).unwrap(), 0.0);
        let constant = HacClassifier::new(arr, LookupTable::new(1).unwrap(), 1).unwrap();
        assert_eq!(empirical_risk(&constant, &data).unwrap(), 0.5);
    }

    #[test]
    fn classifier_json() {
        let arr = Arrangement::from_hyperplanes(1, &[(vec![1.0], 0.0)]).unwrap();
        let mut t = LookupTable::new(1).unwrap();
        t.insert("-".parse().unwrap(), -1).unwrap();
        let clf = HacClassifier::new(arr, t, 1).unwrap();
        let v = serde_json::to_value(&clf).unwrap();
        assert_eq!(v["table"][0]["pattern"], "-");
        assert_eq!(v["default_label"], 1);
        let back: HacClassifier = serde_json::from_value(v).unwrap();
        assert_eq!(back, clf);
    }

    #[test]
    fn rank_budget_enforced() {
        let arr = Arrangement::from_hyperplanes(2, &[(vec![1.0, 0.0], 0.0), (vec![0.0, 1.0], 0.0)]).unwrap();
        assert!(HacClassifier::new(arr.clone(), LookupTable::new(1).unwrap(), 1).is_err());
        assert!(HacClassifier::new(arr, LookupTable::new(1).unwrap(), 2).is_ok());
    }
}
