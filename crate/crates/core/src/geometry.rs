//! Hyperplane arrangements, sign vectors and cells.
//!
//! An arrangement of `k` hyperplanes in `R^d` is stored as a `d × k` normal
//! matrix (column `j` is `w_j`) and an offset vector `b`. The sign vector of a
//! point is `sgn(Wᵀx + b)` with the convention `sgn(0) = +1`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::minnorm::lp;

/// Largest `k` accepted by [`enumerate_cells`].
pub const ENUMERATION_BUDGET: usize = 25;
/// A pattern is a cell iff its best achievable minimum slack exceeds this.
pub const FEASIBILITY_EPS: f64 = 1e-9;
/// Half-width of the box that bounds unbounded cells during enumeration.
pub const BOX_RADIUS: f64 = 1e6;
/// Default relative cutoff for [`numeric_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// `sgn(t)`, mapping zero to `+1`.
#[inline]
pub fn sgn(t: f64) -> i8 {
    if t >= 0.0 {
        1
    } else {
        -1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArrangementJson", into = "ArrangementJson")]
pub struct Arrangement {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct ArrangementJson {
    d: usize,
    k: usize,
    /// Column-major `d × k`.
    normals: Vec<f64>,
    offsets: Vec<f64>,
}

impl From<Arrangement> for ArrangementJson {
    fn from(a: Arrangement) -> Self {
        ArrangementJson {
            d: a.d(),
            k: a.k(),
            normals: a.normals.as_slice().to_vec(),
            offsets: a.offsets.as_slice().to_vec(),
        }
    }
}

impl TryFrom<ArrangementJson> for Arrangement {
    type Error = Error;

    fn try_from(j: ArrangementJson) -> Result<Self> {
        if j.normals.len() != j.d * j.k {
            return Err(Error::DimensionMismatch {
                expected: j.d * j.k,
                got: j.normals.len(),
            });
        }
        Arrangement::new(
            DMatrix::from_column_slice(j.d, j.k, &j.normals),
            DVector::from_vec(j.offsets),
        )
    }
}

impl Arrangement {
    /// Builds an arrangement from a `d × k` normal matrix and `k` offsets.
    ///
    /// `k = 0` is accepted: the empty arrangement has a single cell, which the
    /// grid histogram classifier needs when the grid has one cube per axis.
    pub fn new(normals: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self> {
        if normals.nrows() == 0 {
            return Err(Error::InvalidArgument("ambient dimension must be ≥ 1".into()));
        }
        if normals.ncols() != offsets.len() {
            return Err(Error::DimensionMismatch {
                expected: normals.ncols(),
                got: offsets.len(),
            });
        }
        ensure_finite(normals.as_slice(), "arrangement normals")?;
        ensure_finite(offsets.as_slice(), "arrangement offsets")?;
        Ok(Arrangement { normals, offsets })
    }

    /// Builds an arrangement from `(w_j, b_j)` pairs in `R^d`.
    pub fn from_hyperplanes(d: usize, hyperplanes: &[(Vec<f64>, f64)]) -> Result<Self> {
        let mut normals = DMatrix::zeros(d, hyperplanes.len());
        let mut offsets = DVector::zeros(hyperplanes.len());
        for (j, (w, b)) in hyperplanes.iter().enumerate() {
            if w.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: w.len(),
                });
            }
            normals.column_mut(j).copy_from_slice(w);
            offsets[j] = *b;
        }
        Arrangement::new(normals, offsets)
    }

    pub fn d(&self) -> usize {
        self.normals.nrows()
    }

    pub fn k(&self) -> usize {
        self.normals.ncols()
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    pub fn normal(&self, j: usize) -> &[f64] {
        let d = self.d();
        &self.normals.as_slice()[j * d..(j + 1) * d]
    }

    pub fn offset(&self, j: usize) -> f64 {
        self.offsets[j]
    }

    /// `w_j·x + b_j`, without dimension checks.
    #[inline]
    pub fn margin(&self, j: usize, x: &[f64]) -> f64 {
        dot(self.normal(j), x) + self.offsets[j]
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// All `k` margins `Wᵀx + b`.
    pub fn margins(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        Ok((0..self.k()).map(|j| self.margin(j, x)).collect())
    }

    pub fn sign_vector(&self, x: &[f64]) -> Result<SignVector> {
        self.check_point(x)?;
        Ok(SignVector((0..self.k()).map(|j| sgn(self.margin(j, x))).collect()))
    }

    /// Multiplies every normal and offset by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Arrangement::new(&self.normals * factor, &self.offsets * factor)
    }

    /// Replaces hyperplane `j`.
    pub fn set_hyperplane(&mut self, j: usize, w: &[f64], b: f64) {
        self.normals.column_mut(j).copy_from_slice(w);
        self.offsets[j] = b;
    }

    /// Best minimum slack `max_x min_j s_j(w_j·x + b_j)` over the enumeration
    /// box, with every hyperplane normalized to a unit normal first.
    pub fn cell_slack(&self, pattern: &SignVector) -> Result<f64> {
        if pattern.len() != self.k() {
            return Err(Error::DimensionMismatch {
                expected: self.k(),
                got: pattern.len(),
            });
        }
        let rows = (0..self.k())
            .map(|j| self.oriented_row(j, pattern.get(j)))
            .collect::<Vec<_>>();
        Ok(lp::max_min_slack(&rows, self.d(), BOX_RADIUS)?.slack)
    }

    fn oriented_row(&self, j: usize, sign: i8) -> (Vec<f64>, f64) {
        let w = self.normal(j);
        let norm = dot(w, w).sqrt();
        let scale = if norm > 0.0 { f64::from(sign) / norm } else { f64::from(sign) };
        (w.iter().map(|v| v * scale).collect(), self.offsets[j] * scale)
    }
}

/// Free-function form of [`Arrangement::sign_vector`].
pub fn sign_vector(arr: &Arrangement, x: &[f64]) -> Result<SignVector> {
    arr.sign_vector(x)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A sign pattern over `{+1, -1}`; displayed as a string over `+`/`-`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(bits: Vec<i8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|b| **b != 1 && **b != -1) {
            return Err(Error::InvalidArgument(format!("sign entry {b} is not ±1")));
        }
        Ok(SignVector(bits))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> i8 {
        self.0[j]
    }

    pub fn bits(&self) -> &[i8] {
        &self.0
    }

    /// Appends one more sign.
    pub fn extended(&self, s: i8) -> SignVector {
        let mut bits = self.0.clone();
        bits.push(s);
        SignVector(bits)
    }

    /// The code as `±1.0` values, the form the network head consumes.
    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(b)).collect()
    }
}

impl fmt::Display for SignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

impl FromStr for SignVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(Error::InvalidArgument(format!("bad sign character {other:?}"))),
            })
            .collect::<Result<Vec<i8>>>()
            .map(SignVector)
    }
}

impl TryFrom<String> for SignVector {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SignVector> for String {
    fn from(s: SignVector) -> String {
        s.to_string()
    }
}

/// `C(k, i)` as an exact integer.
pub fn binomial(k: u64, i: u64) -> Result<u128> {
    if i > k {
        return Ok(0);
    }
    let i = i.min(k - i);
    let mut c: u128 = 1;
    for t in 0..i {
        // c * (k - t) is divisible by (t + 1) because c = C(k, t).
        c = c
            .checked_mul(u128::from(k - t))
            .ok_or_else(|| Error::Overflow(format!("C({k}, {i})")))?
            / u128::from(t + 1);
    }
    Ok(c)
}

/// Maximum number of cells of `k` hyperplanes in `R^d`: `2^k` when `k < d`,
/// else `Σ_{i≤d} C(k, i)`.
pub fn max_cells(k: i64, d: i64) -> Result<u128> {
    if k < 1 || d < 1 {
        return Err(Error::InvalidArgument(format!(
            "max_cells needs k ≥ 1 and d ≥ 1, got k={k}, d={d}"
        )));
    }
    let (k, d) = (k as u64, d as u64);
    if k < d {
        return 1u128
            .checked_shl(k as u32)
            .filter(|_| k < 128)
            .ok_or_else(|| Error::Overflow(format!("2^{k}")));
    }
    (0..=d).try_fold(0u128, |acc, i| {
        acc.checked_add(binomial(k, i)?)
            .ok_or_else(|| Error::Overflow(format!("Σ C({k}, ≤{d})")))
    })
}

/// Sign vectors of all full-dimensional cells.
///
/// Hyperplanes are inserted one at a time; every surviving pattern spawns two
/// children which are kept iff a linear program finds a point in the box of
/// half-width [`BOX_RADIUS`] whose minimum oriented (unit-normal) slack
/// exceeds [`FEASIBILITY_EPS`].
pub fn enumerate_cells(arr: &Arrangement) -> Result<BTreeSet<SignVector>> {
    let k = arr.k();
    if k > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "enumerate_cells accepts k ≤ {ENUMERATION_BUDGET}, got {k}"
        )));
    }
    let d = arr.d();
    let mut patterns: Vec<SignVector> = vec![SignVector(Vec::new())];
    for j in 0..k {
        let mut next = Vec::with_capacity(patterns.len() * 2);
        for p in &patterns {
            for s in [1i8, -1] {
                let child = p.extended(s);
                let rows: Vec<(Vec<f64>, f64)> =
                    (0..=j).map(|i| arr.oriented_row(i, child.get(i))).collect();
                if lp::max_min_slack(&rows, d, BOX_RADIUS)?.slack > FEASIBILITY_EPS {
                    next.push(child);
                }
            }
        }
        patterns = next;
    }
    Ok(patterns.into_iter().collect())
}

/// Number of singular values above `tol × σ_max`.
pub fn numeric_rank(m: &DMatrix<f64>, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("rank tolerance must be > 0, got {tol}")));
    }
    ensure_finite(m.as_slice(), "matrix")?;
    if m.is_empty() {
        return Ok(0);
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > tol * smax).count())
}
