//! Dense tableau simplex for the small linear programs used by cell
//! enumeration and feasibility checks.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-10;
const COST_EPS: f64 = 1e-12;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { z: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// `m` rows of `ncols + 1` entries, the last one being the right-hand side.
    rows: Vec<Vec<f64>>,
    /// Reduced costs; the last entry holds `-objective`.
    obj: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
    banned: Option<usize>,
}

impl Tableau {
    fn pivot(&mut self, p: usize, q: usize) {
        let a = self.rows[p][q];
        for v in self.rows[p].iter_mut() {
            *v /= a;
        }
        let prow = self.rows[p].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != p {
                let f = row[q];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&prow) {
                        *v -= f * pv;
                    }
                }
            }
        }
        let f = self.obj[q];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
        }
        self.basis[p] = q;
    }

    /// Bland's rule iterations. `Ok(false)` means unbounded.
    fn optimize(&mut self) -> Result<bool> {
        for _ in 0..MAX_PIVOTS {
            let entering = (0..self.ncols)
                .find(|&j| Some(j) != self.banned && self.obj[j] > COST_EPS);
            let Some(q) = entering else {
                return Ok(true);
            };
            let rhs = self.ncols;
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[q] > PIVOT_EPS {
                    let ratio = row[rhs] / row[q];
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-14 * br.abs().max(1.0)
                                || (ratio <= br + 1e-14 * br.abs().max(1.0)
                                    && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                None => return Ok(false),
                Some((p, _)) => self.pivot(p, q),
            }
        }
        Err(Error::Lp(format!("pivot limit {MAX_PIVOTS} reached")))
    }

    fn solution(&self, n: usize) -> Vec<f64> {
        let mut z = vec![0.0; n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < n {
                z[b] = self.rows[i][self.ncols];
            }
        }
        z
    }
}

/// Maximizes `c·z` subject to `A z ≤ b`, `z ≥ 0`.
pub fn simplex(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpOutcome> {
    let n = c.len();
    let m = a.len();
    if b.len() != m || a.iter().any(|r| r.len() != n) {
        return Err(Error::Lp("inconsistent LP dimensions".into()));
    }
    // Columns: n structural, m slack, one auxiliary.
    let aux = n + m;
    let ncols = n + m + 1;
    let rows = a
        .iter()
        .zip(b)
        .enumerate()
        .map(|(i, (r, &bi))| {
            let mut row = vec![0.0; ncols + 1];
            row[..n].copy_from_slice(r);
            row[n + i] = 1.0;
            row[aux] = -1.0;
            row[ncols] = bi;
            row
        })
        .collect();
    let mut t = Tableau {
        rows,
        obj: vec![0.0; ncols + 1],
        basis: (n..n + m).collect(),
        ncols,
        banned: None,
    };

    let most_negative = (0..m).min_by(|&i, &j| b[i].total_cmp(&b[j]));
    if let Some(l) = most_negative.filter(|&l| b[l] < 0.0) {
        // Phase one: maximize -aux starting from the pivot that makes every
        // right-hand side non-negative.
        t.obj[aux] = -1.0;
        t.pivot(l, aux);
        if !t.optimize()? {
            return Err(Error::Lp("auxiliary problem unbounded".into()));
        }
        let aux_value = -t.obj[ncols];
        let scale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        if aux_value < -1e-9 * scale {
            return Ok(LpOutcome::Infeasible);
        }
        if let Some(p) = t.basis.iter().position(|&j| j == aux) {
            if let Some(q) = (0..aux).find(|&q| t.rows[p][q].abs() > PIVOT_EPS) {
                t.pivot(p, q);
            }
        }
        for row in t.rows.iter_mut() {
            row[aux] = 0.0;
        }
    }
    t.banned = Some(aux);
    t.obj = vec![0.0; ncols + 1];
    t.obj[..n].copy_from_slice(c);
    for i in 0..m {
        let bj = t.basis[i];
        let f = t.obj[bj];
        if f != 0.0 {
            let row = t.rows[i].clone();
            for (v, rv) in t.obj.iter_mut().zip(&row) {
                *v -= f * rv;
            }
        }
    }
    if !t.optimize()? {
        return Ok(LpOutcome::Unbounded);
    }
    let z = t.solution(n);
    let value = c.iter().zip(&z).map(|(ci, zi)| ci * zi).sum();
    Ok(LpOutcome::Optimal { z, value })
}

#[derive(Debug, Clone)]
pub struct SlackPoint {
    /// `max_x min_i (a_i·x + c_i)` over the box; `+∞` when there are no rows.
    pub slack: f64,
    pub point: Vec<f64>,
}

/// Maximizes the smallest of the affine functions `a_i·x + c_i` over the box
/// `‖x‖_∞ ≤ radius`.
pub fn max_min_slack(rows: &[(Vec<f64>, f64)], dim: usize, radius: f64) -> Result<SlackPoint> {
    if rows.is_empty() {
        return Ok(SlackPoint {
            slack: f64::INFINITY,
            point: vec![0.0; dim],
        });
    }
    // Variables: x⁺ (dim), x⁻ (dim), t⁺, t⁻.
    let nv = 2 * dim + 2;
    let mut a = Vec::with_capacity(rows.len() + 2 * dim);
    let mut b = Vec::with_capacity(rows.len() + 2 * dim);
    for (coef, c) in rows {
        if coef.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: coef.len(),
            });
        }
        // t - a·x ≤ c
        let mut r = vec![0.0; nv];
        for l in 0..dim {
            r[l] = -coef[l];
            r[dim + l] = coef[l];
        }
        r[2 * dim] = 1.0;
        r[2 * dim + 1] = -1.0;
        a.push(r);
        b.push(*c);
    }
    for l in 0..2 * dim {
        let mut r = vec![0.0; nv];
        r[l] = 1.0;
        a.push(r);
        b.push(radius);
    }
    let mut c = vec![0.0; nv];
    c[2 * dim] = 1.0;
    c[2 * dim + 1] = -1.0;
    match simplex(&c, &a, &b)? {
        LpOutcome::Optimal { z, value } => Ok(SlackPoint {
            slack: value,
            point: (0..dim).map(|l| z[l] - z[dim + l]).collect(),
        }),
        other => Err(Error::Lp(format!("max-min-slack program ended as {other:?}"))),
    }
}
