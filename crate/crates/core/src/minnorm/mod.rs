//! Min-norm points of polyhedra.
//!
//! For `P = {x : a_iᵀx ≤ b_i}` the problem `min ½‖x‖²` over `P` has a unique
//! solution `x*`, characterized by `x* ∈ P` and `-x* = Σ λ_i a_i` with
//! `λ ≥ 0` supported on active constraints.
//!
//! Two solvers are provided. The default is a dual active-set method that
//! starts from the unconstrained minimizer `x = 0` and adds one violated
//! constraint at a time while keeping the dual weights non-negative; it
//! terminates finitely and is exact up to rounding. The second runs exact
//! coordinate ascent on the dual `max_{λ≥0} -½‖Aᵀλ‖² - bᵀλ` with a shuffled
//! sweep order; it is simple and dependency-free but can stall on
//! ill-conditioned margin programs, so it serves as a cross-check.

pub mod lp;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::geometry::dot;
use crate::rng::{self, Stream};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_EPOCHS: usize = 100_000;
/// Epoch at which a still-unconverged run asks the LP whether `P` is empty.
const FEASIBILITY_PROBE_EPOCH: usize = 64;
const POLISH_EVERY: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub a: Vec<f64>,
    pub b: f64,
}

/// `{x ∈ R^n : a_iᵀx ≤ b_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron {
    n: usize,
    constraints: Vec<Halfspace>,
}

impl Polyhedron {
    pub fn new(n: usize, constraints: Vec<Halfspace>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("polyhedron dimension must be ≥ 1".into()));
        }
        for c in &constraints {
            if c.a.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: c.a.len(),
                });
            }
            ensure_finite(&c.a, "constraint normal")?;
            ensure_finite(&[c.b], "constraint offset")?;
        }
        Ok(Polyhedron { n, constraints })
    }

    pub fn from_rows(n: usize, rows: impl IntoIterator<Item = (Vec<f64>, f64)>) -> Result<Self> {
        Polyhedron::new(n, rows.into_iter().map(|(a, b)| Halfspace { a, b }).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn constraints(&self) -> &[Halfspace] {
        &self.constraints
    }

    /// The polyhedron defined by the constraints at `indices` only.
    pub fn restrict(&self, indices: &[usize]) -> Polyhedron {
        Polyhedron {
            n: self.n,
            constraints: indices.iter().map(|&i| self.constraints[i].clone()).collect(),
        }
    }

    /// `max_i (a_iᵀx - b_i)`, or `-∞` without constraints.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| dot(&c.a, x) - c.b)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverMethod {
    ActiveSet,
    CoordinateAscent,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub method: SolverMethod,
    /// Epoch cap for coordinate ascent; step cap for the active-set method.
    pub max_epochs: usize,
    /// Seeds the per-epoch permutation of coordinate ascent.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOL,
            method: SolverMethod::ActiveSet,
            max_epochs: DEFAULT_MAX_EPOCHS,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ..Default::default()
        }
    }

    pub fn coordinate_ascent(tol: f64, seed: u64) -> Self {
        SolverOptions {
            tol,
            method: SolverMethod::CoordinateAscent,
            seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinNormSolution {
    pub point: Vec<f64>,
    pub duals: Vec<f64>,
    pub active_set: Vec<usize>,
    pub kkt_residual: f64,
    pub epochs: usize,
}

/// Largest of the stationarity norm `‖x + Σλ_i a_i‖`, the primal violation
/// and the complementary-slackness products `|λ_i (a_iᵀx - b_i)|`.
pub fn kkt_residual(poly: &Polyhedron, x: &[f64], duals: &[f64]) -> f64 {
    let mut stationarity = x.to_vec();
    let mut worst: f64 = 0.0;
    for (c, &l) in poly.constraints.iter().zip(duals) {
        if l < 0.0 {
            worst = worst.max(-l);
        }
        for (s, a) in stationarity.iter_mut().zip(&c.a) {
            *s += l * a;
        }
        let g = dot(&c.a, x) - c.b;
        worst = worst.max(g).max((l * g).abs());
    }
    worst.max(dot(&stationarity, &stationarity).sqrt())
}

fn solution(poly: &Polyhedron, x: Vec<f64>, lambda: Vec<f64>, epochs: usize) -> MinNormSolution {
    let kkt = kkt_residual(poly, &x, &lambda);
    let active_set = (0..lambda.len()).filter(|&i| lambda[i] > 0.0).collect();
    MinNormSolution {
        point: x,
        duals: lambda,
        active_set,
        kkt_residual: kkt,
        epochs,
    }
}

/// Bound a KKT residual must meet for a solution of norm `xnorm` to count as
/// certified at tolerance `tol`. Dual weights grow like `‖x‖²`, so
/// complementary-slackness products carry rounding of that order.
pub fn certification_limit(tol: f64, xnorm: f64) -> f64 {
    tol * (1.0 + xnorm).powi(2)
}

/// Unique minimizer of `½‖x‖²` over `poly`, certified to
/// [`certification_limit`].
pub fn min_norm_point(poly: &Polyhedron, opts: &SolverOptions) -> Result<MinNormSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be > 0, got {}", opts.tol)));
    }
    match opts.method {
        SolverMethod::ActiveSet => active_set_solve(poly, opts),
        SolverMethod::CoordinateAscent => coordinate_ascent(poly, opts),
    }
}

/// Dual active-set iterations for the identity Hessian. The active normals
/// stay linearly independent, so at most `n` are active at any time.
fn active_set_solve(poly: &Polyhedron, opts: &SolverOptions) -> Result<MinNormSolution> {
    let n = poly.n;
    let m = poly.len();
    let norms: Vec<f64> = poly.constraints.iter().map(|c| dot(&c.a, &c.a).sqrt()).collect();
    let mut x = vec![0.0; n];
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut steps = 0usize;
    let infeasible = || -> Result<MinNormSolution> {
        Err(Error::Infeasible {
            max_slack: feasibility_slack(poly)?,
        })
    };

    loop {
        // Most violated constraint, measured in normalized distance.
        let xnorm = dot(&x, &x).sqrt();
        let mut pick: Option<(usize, f64)> = None;
        for (i, c) in poly.constraints.iter().enumerate() {
            if active.contains(&i) {
                continue;
            }
            let g = dot(&c.a, &x) - c.b;
            let guard = 1e-13 * (1.0 + c.b.abs() + norms[i] * xnorm);
            if g > guard {
                let score = if norms[i] > 0.0 { g / norms[i] } else { f64::INFINITY };
                if pick.is_none_or(|(_, s)| score > s) {
                    pick = Some((i, score));
                }
            }
        }
        let Some((p, _)) = pick else {
            let mut lambda = vec![0.0; m];
            for (&i, &w) in active.iter().zip(&u) {
                lambda[i] = w;
            }
            let limit = certification_limit(opts.tol, dot(&x, &x).sqrt());
            let mut sol = solution(poly, x, lambda, steps);
            // Incremental updates drift; one exact solve on the final active
            // rows removes the drift.
            if let Some((px, pl)) = polish(poly, &sol.duals, limit) {
                let refined = solution(poly, px, pl, steps);
                if refined.kkt_residual <= sol.kkt_residual {
                    sol = refined;
                }
            }
            if sol.kkt_residual > limit {
                return Err(Error::NotConverged {
                    iterations: steps,
                    residual: sol.kkt_residual,
                });
            }
            return Ok(sol);
        };
        // Constraint p written as n_pᵀx ≥ c_p with n_p = -a_p.
        let np: Vec<f64> = poly.constraints[p].a.iter().map(|v| -v).collect();
        let cp = -poly.constraints[p].b;
        let mut up = 0.0;

        loop {
            steps += 1;
            if steps > opts.max_epochs {
                let mut lambda = vec![0.0; m];
                for (&i, &w) in active.iter().zip(&u) {
                    lambda[i] = w;
                }
                return Err(Error::NotConverged {
                    iterations: steps - 1,
                    residual: kkt_residual(poly, &x, &lambda),
                });
            }
            // r = (NᵀN)⁻¹Nᵀn_p, z = n_p - N r with N holding the active -a_i.
            let q = active.len();
            let nmat = DMatrix::from_fn(n, q, |row, col| -poly.constraints[active[col]].a[row]);
            let npv = DVector::from_column_slice(&np);
            let r = if q == 0 {
                DVector::zeros(0)
            } else {
                let gram = nmat.transpose() * &nmat;
                let rhs = nmat.transpose() * &npv;
                match gram.clone().cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None => gram
                        .lu()
                        .solve(&rhs)
                        .ok_or_else(|| Error::NotConverged {
                            iterations: steps,
                            residual: f64::NAN,
                        })?,
                }
            };
            let z = &npv - &nmat * &r;
            let znorm2 = z.dot(&z);

            let mut partial: Option<(usize, f64)> = None;
            for l in 0..q {
                if r[l] > 1e-14 {
                    let t = u[l] / r[l];
                    if partial.is_none_or(|(_, best)| t < best) {
                        partial = Some((l, t));
                    }
                }
            }
            let full = if znorm2 > 1e-20 * dot(&np, &np).max(f64::MIN_POSITIVE) {
                let s = dot(&np, &x) - cp;
                Some((-s / znorm2).max(0.0))
            } else {
                None
            };

            match (partial, full) {
                (None, None) => return infeasible(),
                (Some((l, t1)), None) => {
                    for (w, rv) in u.iter_mut().zip(r.iter()) {
                        *w -= t1 * rv;
                    }
                    up += t1;
                    active.remove(l);
                    u.remove(l);
                }
                (partial, Some(t2)) => {
                    let (t, drop) = match partial {
                        Some((l, t1)) if t1 < t2 => (t1, Some(l)),
                        _ => (t2, None),
                    };
                    for (xv, zv) in x.iter_mut().zip(z.iter()) {
                        *xv += t * zv;
                    }
                    for (w, rv) in u.iter_mut().zip(r.iter()) {
                        *w -= t * rv;
                    }
                    up += t;
                    match drop {
                        Some(l) => {
                            active.remove(l);
                            u.remove(l);
                        }
                        None => {
                            active.push(p);
                            u.push(up);
                            break;
                        }
                    }
                }
            }
            // Rounding can leave tiny negative weights behind.
            for w in u.iter_mut() {
                if *w < 0.0 {
                    *w = 0.0;
                }
            }
        }
    }
}

fn coordinate_ascent(poly: &Polyhedron, opts: &SolverOptions) -> Result<MinNormSolution> {
    let n = poly.n;
    let m = poly.len();
    let sq_norms: Vec<f64> = poly.constraints.iter().map(|c| dot(&c.a, &c.a)).collect();
    for (c, &s) in poly.constraints.iter().zip(&sq_norms) {
        if s == 0.0 && c.b < 0.0 {
            return Err(Error::Infeasible { max_slack: c.b });
        }
    }

    let mut lambda = vec![0.0; m];
    let mut x = vec![0.0; n];
    let finish = |x: Vec<f64>, lambda: Vec<f64>, epochs: usize| solution(poly, x, lambda, epochs);
    if poly.max_violation(&x) <= 0.0 {
        return Ok(finish(x, lambda, 0));
    }

    let mut order: Vec<usize> = (0..m).filter(|&i| sq_norms[i] > 0.0).collect();
    let mut rng = rng::stream(opts.seed, Stream::Solver, 0);
    let mut residual = f64::INFINITY;
    for epoch in 1..=opts.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let c = &poly.constraints[i];
            let g = dot(&c.a, &x) - c.b;
            let delta = (g / sq_norms[i]).max(-lambda[i]);
            if delta != 0.0 {
                lambda[i] += delta;
                for (xv, a) in x.iter_mut().zip(&c.a) {
                    *xv -= delta * a;
                }
            }
        }

        residual = kkt_residual(poly, &x, &lambda);
        let limit = certification_limit(opts.tol, dot(&x, &x).sqrt());
        if residual <= limit {
            if let Some((px, pl)) = polish(poly, &lambda, limit) {
                let r = kkt_residual(poly, &px, &pl);
                if r <= residual {
                    return Ok(finish(px, pl, epoch));
                }
            }
            return Ok(finish(x, lambda, epoch));
        }
        if epoch % POLISH_EVERY == 0 {
            if let Some((px, pl)) = polish(poly, &lambda, limit) {
                if kkt_residual(poly, &px, &pl) <= limit {
                    return Ok(finish(px, pl, epoch));
                }
            }
        }

        let dual_objective = -0.5 * dot(&x, &x)
            - poly.constraints.iter().zip(&lambda).map(|(c, l)| c.b * l).sum::<f64>();
        if dual_objective > 1.0 / opts.tol {
            return Err(Error::Infeasible {
                max_slack: feasibility_slack(poly)?,
            });
        }
        if epoch == FEASIBILITY_PROBE_EPOCH {
            let slack = feasibility_slack(poly)?;
            if slack < -opts.tol {
                return Err(Error::Infeasible { max_slack: slack });
            }
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_epochs,
        residual,
    })
}

/// Largest achievable minimum of the normalized slacks `(b_i - a_iᵀx)/‖a_i‖`;
/// negative iff the polyhedron is empty (within the LP box).
pub fn feasibility_slack(poly: &Polyhedron) -> Result<f64> {
    let rows: Vec<(Vec<f64>, f64)> = poly
        .constraints
        .iter()
        .map(|c| {
            let norm = dot(&c.a, &c.a).sqrt();
            let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
            (c.a.iter().map(|v| -v * s).collect(), c.b * s)
        })
        .collect();
    Ok(lp::max_min_slack(&rows, poly.n, crate::geometry::BOX_RADIUS)?.slack)
}

/// Exact solve on the current positive-weight rows when they are linearly
/// independent: `λ_S = -(A_S A_Sᵀ)⁻¹ b_S`, `x = -A_Sᵀ λ_S`.
fn polish(poly: &Polyhedron, lambda: &[f64], tol: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let support: Vec<usize> = (0..lambda.len()).filter(|&i| lambda[i] > 0.0).collect();
    let n = poly.n;
    if support.len() > n {
        return None;
    }
    let s = support.len();
    let a_s = DMatrix::from_fn(s, n, |r, c| poly.constraints[support[r]].a[c]);
    let b_s = DVector::from_fn(s, |r, _| poly.constraints[support[r]].b);
    let gram = &a_s * a_s.transpose();
    let chol = gram.cholesky()?;
    let lam_s = -chol.solve(&b_s);
    if lam_s.iter().any(|&l| l < 0.0) {
        return None;
    }
    let x = -(a_s.transpose() * &lam_s);
    let x: Vec<f64> = x.iter().copied().collect();
    if poly.max_violation(&x) > tol {
        return None;
    }
    let mut full = vec![0.0; lambda.len()];
    for (r, &i) in support.iter().enumerate() {
        full[i] = lam_s[r];
    }
    Some((x, full))
}

/// A conic Carathéodory support of a certified min-norm solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Support {
    /// Constraint indices, ascending, with linearly independent normals.
    pub indices: Vec<usize>,
    /// Non-negative weights with `-x* ≈ Σ weights[l]·a_{indices[l]}`.
    pub weights: Vec<f64>,
    /// `‖x* + Σ weights[l]·a_{indices[l]}‖`.
    pub residual: f64,
}

/// Reduces the dual support of `sol` to at most `n` constraints whose conic
/// hull still contains `-x*`, so that `x*` is also the min-norm point of the
/// polyhedron they define alone.
pub fn caratheodory_support(sol: &MinNormSolution, poly: &Polyhedron, tol: f64) -> Result<Support> {
    let n = poly.n;
    let xnorm = dot(&sol.point, &sol.point).sqrt();
    let certified = certification_limit(tol, xnorm);
    if sol.kkt_residual > certified {
        return Err(Error::Reduction(format!(
            "solution not certified: KKT residual {:.3e} > {certified:.3e}",
            sol.kkt_residual
        )));
    }
    if xnorm <= tol {
        return Ok(Support {
            indices: Vec::new(),
            weights: Vec::new(),
            residual: xnorm,
        });
    }
    let mut idx: Vec<usize> = (0..poly.len()).filter(|&i| sol.duals[i] > tol).collect();
    let mut w: Vec<f64> = idx.iter().map(|&i| sol.duals[i]).collect();

    loop {
        let s = idx.len();
        if s == 0 {
            break;
        }
        let cols = DMatrix::from_fn(n, s, |r, c| poly.constraints[idx[c]].a[r]);
        let gram = cols.transpose() * &cols;
        let eig = gram.symmetric_eigen();
        let (min_pos, &min_val) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty support");
        let max_val = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let dependent = s > n || min_val <= 1e-12 * max_val.max(f64::MIN_POSITIVE);
        if !dependent {
            break;
        }
        let mut mu: Vec<f64> = eig.eigenvectors.column(min_pos).iter().copied().collect();
        let peak = mu.iter().cloned().fold(0.0, |m: f64, v| if v.abs() > m.abs() { v } else { m });
        if peak < 0.0 {
            mu.iter_mut().for_each(|v| *v = -*v);
        }
        let mut step: Option<(usize, f64)> = None;
        for l in 0..s {
            if mu[l] > 1e-12 {
                let t = w[l] / mu[l];
                if step.is_none_or(|(_, best)| t < best) {
                    step = Some((l, t));
                }
            }
        }
        let (drop, theta) =
            step.ok_or_else(|| Error::Reduction("null-space direction has no positive entry".into()))?;
        for l in 0..s {
            w[l] -= theta * mu[l];
        }
        w[drop] = 0.0;
        let keep: Vec<usize> = (0..s).filter(|&l| w[l] > 0.0).collect();
        idx = keep.iter().map(|&l| idx[l]).collect();
        w = keep.iter().map(|&l| w[l]).collect();
    }

    let mut comb = sol.point.clone();
    for (&i, &l) in idx.iter().zip(&w) {
        for (c, a) in comb.iter_mut().zip(&poly.constraints[i].a) {
            *c += l * a;
        }
    }
    let residual = dot(&comb, &comb).sqrt();
    let limit = 10.0 * certified;
    if residual > limit {
        return Err(Error::Reduction(format!(
            "conic combination residual {residual:.3e} exceeds {limit:.3e} (support size {})",
            idx.len()
        )));
    }
    let mut pairs: Vec<(usize, f64)> = idx.into_iter().zip(w).collect();
    pairs.sort_by_key(|p| p.0);
    Ok(Support {
        indices: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
        residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginSolution {
    pub w: Vec<f64>,
    pub b: f64,
    pub solution: MinNormSolution,
    pub polyhedron: Polyhedron,
}

/// The constraints `s_i(wᵀx_i + b) ≥ 1` written as `-s_i(x_i, 1)ᵀ(w, b) ≤ -1`.
pub fn margin_polyhedron(points: &[(&[f64], i8)]) -> Result<Polyhedron> {
    let d = points
        .first()
        .map(|p| p.0.len())
        .ok_or_else(|| Error::InvalidArgument("margin_qp needs at least one point".into()))?;
    Polyhedron::from_rows(
        d + 1,
        points.iter().map(|(x, s)| {
            let s = f64::from(*s);
            let mut a: Vec<f64> = x.iter().map(|v| -s * v).collect();
            a.push(-s);
            (a, -1.0)
        }),
    )
}

/// `min ½(‖w‖² + b²)` subject to `s_i(wᵀx_i + b) ≥ 1`.
pub fn margin_qp(points: &[(&[f64], i8)], opts: &SolverOptions) -> Result<MarginSolution> {
    let poly = margin_polyhedron(points)?;
    let solution = min_norm_point(&poly, opts)?;
    let d = poly.n() - 1;
    Ok(MarginSolution {
        w: solution.point[..d].to_vec(),
        b: solution.point[d],
        solution,
        polyhedron: poly,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn nearest_point_on_halfspace() {
        let poly = Polyhedron::from_rows(2, [(vec![-1.0, 0.0], -1.0)]).unwrap();
        let sol = min_norm_point(&poly, &SolverOptions::default()).unwrap();
        assert!(close(&sol.point, &[1.0, 0.0], 1e-12));
        assert_eq!(sol.active_set, vec![0]);
        assert!(sol.kkt_residual <= 1e-8);
    }

    #[test]
    fn symmetric_halfspace() {
        let poly = Polyhedron::from_rows(2, [(vec![-1.0, -1.0], -2.0)]).unwrap();
        let sol = min_norm_point(&poly, &SolverOptions::default()).unwrap();
        assert!(close(&sol.point, &[1.0, 1.0], 1e-12));
    }

    #[test]
    fn infeasible_interval() {
        let poly = Polyhedron::from_rows(1, [(vec![1.0], -1.0), (vec![-1.0], -1.0)]).unwrap();
        assert!(matches!(
            min_norm_point(&poly, &SolverOptions::default()),
            Err(Error::Infeasible { .. })
        ));
        let zero_row = Polyhedron::from_rows(1, [(vec![0.0], -1.0)]).unwrap();
        assert!(matches!(
            min_norm_point(&zero_row, &SolverOptions::default()),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn origin_feasible_gives_empty_support() {
        let poly = Polyhedron::from_rows(2, [(vec![1.0, 0.0], 1.0), (vec![0.0, 1.0], 3.0)]).unwrap();
        let sol = min_norm_point(&poly, &SolverOptions::default()).unwrap();
        assert_eq!(sol.point, vec![0.0, 0.0]);
        let sup = caratheodory_support(&sol, &poly, 1e-8).unwrap();
        assert!(sup.indices.is_empty());
    }

    #[test]
    fn vertex_with_three_active_constraints() {
        // x ≥ 1, y ≥ 1, x + y ≥ 2 all active at (1, 1).
        let poly = Polyhedron::from_rows(
            2,
            [(vec![-1.0, 0.0], -1.0), (vec![0.0, -1.0], -1.0), (vec![-1.0, -1.0], -2.0)],
        )
        .unwrap();
        let sol = min_norm_point(&poly, &SolverOptions::default()).unwrap();
        assert!(close(&sol.point, &[1.0, 1.0], 1e-7));
        let sup = caratheodory_support(&sol, &poly, 1e-8).unwrap();
        assert!(sup.indices.len() <= 2);
        let again = min_norm_point(&poly.restrict(&sup.indices), &SolverOptions::default()).unwrap();
        assert!(close(&again.point, &sol.point, 1e-6));
    }

    #[test]
    fn single_active_constraint_support() {
        let poly = Polyhedron::from_rows(2, [(vec![-1.0, 0.0], -1.0), (vec![0.0, 1.0], 5.0)]).unwrap();
        let sol = min_norm_point(&poly, &SolverOptions::default()).unwrap();
        let sup = caratheodory_support(&sol, &poly, 1e-8).unwrap();
        assert_eq!(sup.indices, vec![0]);
    }

    #[test]
    fn duplicated_constraints() {
        let row = (vec![-1.0, -2.0], -3.0);
        let poly = Polyhedron::from_rows(2, vec![row.clone(), row.clone(), row]).unwrap();
        let sol = min_norm_point(&poly, &SolverOptions::default()).unwrap();
        assert!(close(&sol.point, &[0.6, 1.2], 1e-8));
        let sup = caratheodory_support(&sol, &poly, 1e-8).unwrap();
        assert_eq!(sup.indices.len(), 1);
    }

    #[test]
    fn margin_qp_examples() {
        let opts = SolverOptions::default();
        let sol = margin_qp(&[(&[-1.0][..], -1), (&[1.0][..], 1)], &opts).unwrap();
        assert!((sol.w[0] - 1.0).abs() < 1e-9 && sol.b.abs() < 1e-9);
        let sol = margin_qp(&[(&[0.0][..], 1)], &opts).unwrap();
        assert!(sol.w[0].abs() < 1e-12 && (sol.b - 1.0).abs() < 1e-12);
        let sol = margin_qp(&[(&[-2.0][..], 1), (&[2.0][..], 1), (&[0.5][..], 1)], &opts).unwrap();
        assert!(sol.w[0].abs() < 1e-9 && (sol.b - 1.0).abs() < 1e-9);
        assert!(margin_qp(&[(&[1.0][..], 1), (&[1.0][..], -1)], &opts).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Polyhedron::from_rows(2, [(vec![1.0], 0.0)]).is_err());
        assert!(Polyhedron::from_rows(1, [(vec![f64::NAN], 0.0)]).is_err());
        let poly = Polyhedron::from_rows(1, [(vec![1.0], 0.0)]).unwrap();
        assert!(min_norm_point(&poly, &SolverOptions::with_tol(0.0)).is_err());
    }

    /// Accelerated projected gradient on the dual, independent of both
    /// solvers: `λ ← max(0, μ - η(AAᵀμ + b))` with momentum and restarts.
    fn projected_gradient_oracle(poly: &Polyhedron) -> Vec<f64> {
        let m = poly.len();
        let n = poly.n();
        let a = DMatrix::from_fn(m, n, |r, c| poly.constraints()[r].a[c]);
        let b = DVector::from_fn(m, |r, _| poly.constraints()[r].b);
        let gram = &a * a.transpose();
        let lmax = gram.clone().symmetric_eigen().eigenvalues.max();
        let eta = 1.0 / lmax;
        let mut lam = DVector::zeros(m);
        let mut mom = lam.clone();
        let mut t: f64 = 1.0;
        for _ in 0..1_000_000 {
            let grad = &gram * &mom + &b;
            let next = (&mom - grad * eta).map(|v| v.max(0.0));
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let step = &next - &lam;
            // Restart when the momentum points uphill.
            if (&mom - &next).dot(&step) > 0.0 {
                t = 1.0;
                mom = next.clone();
            } else {
                mom = &next + step * ((t - 1.0) / t_next);
                t = t_next;
            }
            let done = (&next - &lam).norm() < 1e-15 * (1.0 + next.norm());
            lam = next;
            if done {
                break;
            }
        }
        (-(a.transpose() * lam)).iter().copied().collect()
    }

    fn random_feasible(n: usize, m: usize, seed: u64) -> Polyhedron {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, Stream::Data, 0);
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        Polyhedron::from_rows(
            n,
            (0..m).map(|_| {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let b = dot(&a, &x0) + rng.random_range(0.0..1.0);
                (a, b)
            }),
        )
        .unwrap()
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn matches_projected_gradient_oracle() {
        for seed in 0..50u64 {
            let n = 1 + (seed as usize % 10);
            let m = 1 + (seed as usize * 7 % 25);
            let poly = random_feasible(n, m, seed);
            let sol = min_norm_point(&poly, &SolverOptions::default()).unwrap();
            let oracle = projected_gradient_oracle(&poly);
            assert!(dist(&sol.point, &oracle) < 1e-6, "seed {seed}: {:?} vs {oracle:?}", sol.point);
            assert!(sol.duals.iter().all(|&l| l >= 0.0));
            assert!(sol.active_set.len() <= n);
        }
    }

    #[test]
    fn coordinate_ascent_agrees_on_well_conditioned_instances() {
        for seed in 0..20u64 {
            let poly = random_feasible(4, 12, 1000 + seed);
            let exact = min_norm_point(&poly, &SolverOptions::default()).unwrap();
            let ca = min_norm_point(&poly, &SolverOptions::coordinate_ascent(1e-10, seed)).unwrap();
            assert!(dist(&exact.point, &ca.point) < 1e-7, "seed {seed}");
        }
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kkt_certificate_and_uniqueness(n in 1usize..=6, m in 1usize..=30, seed in 0u64..100_000, shift in 0usize..30) {
            let poly = random_feasible(n, m, seed);
            let opts = SolverOptions::default();
            let sol = min_norm_point(&poly, &opts).unwrap();
            let xnorm = dot(&sol.point, &sol.point).sqrt();
            let limit = certification_limit(opts.tol, xnorm);
            prop_assert!(sol.kkt_residual <= limit);
            prop_assert!(poly.max_violation(&sol.point) <= limit);
            // A rotated constraint order gives the same point.
            let mut order: Vec<usize> = (0..m).collect();
            order.rotate_left(shift % m);
            let other = min_norm_point(&poly.restrict(&order), &opts).unwrap();
            prop_assert!(dist(&other.point, &sol.point) <= 10.0 * limit);
        }

        #[test]
        fn adding_constraints_never_shrinks_the_norm(n in 1usize..=5, m in 2usize..=20, seed in 0u64..100_000, keep in 1usize..20) {
            let poly = random_feasible(n, m, seed);
            let sub: Vec<usize> = (0..keep.min(m)).collect();
            let opts = SolverOptions::default();
            let small = min_norm_point(&poly.restrict(&sub), &opts).unwrap();
            let full = min_norm_point(&poly, &opts).unwrap();
            let ns = dot(&small.point, &small.point).sqrt();
            let nf = dot(&full.point, &full.point).sqrt();
            prop_assert!(nf >= ns - 1e-9 * (1.0 + nf));
        }

        #[test]
        fn support_resolve_reproduces_the_point(n in 1usize..=6, m in 1usize..=30, seed in 0u64..100_000) {
            let poly = random_feasible(n, m, seed);
            let opts = SolverOptions::default();
            let sol = min_norm_point(&poly, &opts).unwrap();
            let sup = caratheodory_support(&sol, &poly, opts.tol).unwrap();
            prop_assert!(sup.indices.len() <= n);
            prop_assert!(sup.weights.iter().all(|&w| w > 0.0));
            let xnorm = dot(&sol.point, &sol.point).sqrt();
            if sup.indices.is_empty() {
                prop_assert!(xnorm <= opts.tol);
            } else {
                let again = min_norm_point(&poly.restrict(&sup.indices), &opts).unwrap();
                prop_assert!(dist(&again.point, &sol.point) <= 10.0 * certification_limit(opts.tol, xnorm));
            }
        }

        #[test]
        fn margin_programs_separate_exactly(d in 1usize..=4, n in 1usize..=40, seed in 0u64..100_000) {
            use rand::Rng;
            let mut rng = crate::rng::stream(seed, Stream::Data, 1);
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let signs: Vec<i8> = pts.iter().map(|x| if dot(&w, x) + 0.1 >= 0.0 { 1 } else { -1 }).collect();
            let input: Vec<(&[f64], i8)> = pts.iter().zip(&signs).map(|(x, &s)| (x.as_slice(), s)).collect();
            let sol = margin_qp(&input, &SolverOptions::default()).unwrap();
            for (x, &s) in pts.iter().zip(&signs) {
                let margin = dot(&sol.w, x) + sol.b;
                prop_assert_eq!(crate::geometry::sgn(margin), s);
                prop_assert!(f64::from(s) * margin >= 1.0 - 1e-6);
            }
        }
    }
}
