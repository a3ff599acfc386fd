use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of principal components kept by the benchmark pipeline.
pub const PCA_TARGET: usize = 50;

/// Per-column centering and scaling fitted on one matrix and applied
/// unchanged to others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// Population standard deviation, or 1 for constant columns.
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn transform(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: x.ncols(),
            });
        }
        let mean = Array1::from(self.mean.clone());
        let scale = Array1::from(self.scale.clone());
        Ok((x - &mean) / &scale)
    }
}

/// Fits a [`Scaler`] with divisor `√(Σ(x - x̄)²/n)`.
pub fn standard_scale(fit_on: &Array2<f64>) -> Result<Scaler> {
    let n = fit_on.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("standard_scale needs at least one row".into()));
    }
    let mean = fit_on.mean_axis(Axis(0)).expect("nonempty");
    let var = fit_on.var_axis(Axis(0), 0.0);
    let scale = var
        .iter()
        .zip(mean.iter())
        .map(|(&v, &m)| {
            let sd = v.sqrt();
            // Rounding noise on a constant column is not variance.
            if sd <= 1e-12 * (1.0 + m.abs()) {
                1.0
            } else {
                sd
            }
        })
        .collect();
    Ok(Scaler {
        mean: mean.to_vec(),
        scale,
    })
}

/// Projection onto the leading eigenvectors of the sample covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `d × target`, columns ordered by descending eigenvalue.
    pub components: Vec<Vec<f64>>,
    /// All `d` eigenvalues of the covariance, descending.
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    pub fn target(&self) -> usize {
        self.components.len()
    }

    pub fn transform(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let d = self.mean.len();
        if x.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.ncols(),
            });
        }
        let mut out = Array2::zeros((x.nrows(), self.target()));
        for (i, row) in x.rows().into_iter().enumerate() {
            for (c, comp) in self.components.iter().enumerate() {
                out[(i, c)] = row
                    .iter()
                    .zip(&self.mean)
                    .zip(comp)
                    .map(|((v, m), w)| (v - m) * w)
                    .sum();
            }
        }
        Ok(out)
    }

    /// Maps projected rows back to the original space.
    pub fn inverse_transform(&self, z: &Array2<f64>) -> Array2<f64> {
        let d = self.mean.len();
        let mut out = Array2::zeros((z.nrows(), d));
        for i in 0..z.nrows() {
            for j in 0..d {
                out[(i, j)] = self.mean[j]
                    + self
                        .components
                        .iter()
                        .enumerate()
                        .map(|(c, comp)| z[(i, c)] * comp[j])
                        .sum::<f64>();
            }
        }
        out
    }
}

/// The reduction applies only when both the dimension and the number of
/// fitting rows exceed [`PCA_TARGET`].
pub fn pca_gate(n_fit: usize, d: usize) -> bool {
    n_fit > PCA_TARGET && d > PCA_TARGET
}

/// Covariance with divisor `n - 1`, eigenvectors sign-normalized so their
/// largest-magnitude entry is positive.
pub fn pca_reduce(fit_on: &Array2<f64>, target: usize) -> Result<Pca> {
    let (n, d) = fit_on.dim();
    if target == 0 || target > d || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "PCA to {target} components needs 1 ≤ target ≤ d={d} and n={n} ≥ 2"
        )));
    }
    let mean = fit_on.mean_axis(Axis(0)).expect("nonempty");
    let centered = fit_on - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let cov = DMatrix::from_fn(d, d, |r, c| cov[(r, c)]);
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    // Descending eigenvalue, index order on ties for determinism.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let components = order[..target]
        .iter()
        .map(|&c| {
            let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let peak = v.iter().copied().fold(0.0f64, |p, x| if x.abs() > p.abs() { x } else { p });
            if peak < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    Ok(Pca {
        mean: mean.to_vec(),
        components,
        eigenvalues: order.iter().map(|&c| eig.eigenvalues[c]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use ndarray::array;
    use rand::Rng;

    fn random_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = stream(seed, Stream::Data, 0);
        // Correlated columns so the spectrum is not flat.
        let base = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let mix = Array2::from_shape_fn((d, d), |(i, j)| if i <= j { 1.0 / (1.0 + j as f64) } else { 0.0 });
        base.dot(&mix)
    }

    #[test]
    fn two_point_column() {
        let s = standard_scale(&array![[0.0], [2.0]]).unwrap();
        assert_eq!(s.transform(&array![[0.0], [2.0]]).unwrap(), array![[-1.0], [1.0]]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = array![[3.0, 1.0], [3.0, 2.0], [3.0, 6.0]];
        let s = standard_scale(&x).unwrap();
        let t = s.transform(&x).unwrap();
        assert!(t.column(0).iter().all(|&v| v == 0.0));
        assert_eq!(s.scale[0], 1.0);
        assert!(standard_scale(&Array2::zeros((0, 2))).is_err());
    }

    #[test]
    fn scaled_fit_set_is_standardized() {
        let x = random_matrix(200, 7, 1) * 13.0 + 4.0;
        let s = standard_scale(&x).unwrap();
        let t = s.transform(&x).unwrap();
        for c in t.columns() {
            assert!(c.mean().unwrap().abs() <= 1e-12);
            assert!((c.var(0.0) - 1.0).abs() <= 1e-12);
        }
        assert!(s.transform(&Array2::zeros((1, 3))).is_err());
    }

    #[test]
    fn pca_gate_rule() {
        assert!(!pca_gate(100, 50));
        assert!(!pca_gate(50, 100));
        assert!(pca_gate(51, 51));
    }

    #[test]
    fn pca_eigen_identities() {
        let (n, d, t) = (120, 12, 5);
        let x = random_matrix(n, d, 2);
        let p = pca_reduce(&x, t).unwrap();
        assert!(p.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        let mean = x.mean_axis(Axis(0)).unwrap();
        let centered = &x - &mean;
        let trace = centered.iter().map(|v| v * v).sum::<f64>() / (n as f64 - 1.0);
        let retained: f64 = p.eigenvalues[..t].iter().sum();
        assert!(retained <= trace + 1e-12);
        let discarded: f64 = p.eigenvalues[t..].iter().sum();
        let z = p.transform(&x).unwrap();
        let back = p.inverse_transform(&z);
        let err: f64 = (&x - &back).iter().map(|v| v * v).sum();
        assert!((err - discarded * (n as f64 - 1.0)).abs() < 1e-8, "{err} vs {}", discarded * (n as f64 - 1.0));
        for comp in &p.components {
            let peak = comp.iter().copied().fold(0.0f64, |p, v| if v.abs() > p.abs() { v } else { p });
            assert!(peak > 0.0);
            assert!((comp.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // Projected coordinates are uncorrelated with variances equal to the
        // retained eigenvalues.
        for c in 0..t {
            let v = z.column(c).var(1.0);
            assert!((v - p.eigenvalues[c]).abs() < 1e-9 * (1.0 + v));
        }
    }

    #[test]
    fn rank_deficient_fit_is_deterministic() {
        let mut x = random_matrix(30, 4, 3);
        let c0 = x.column(0).to_owned();
        x.column_mut(3).assign(&c0);
        let a = pca_reduce(&x, 4).unwrap();
        let b = pca_reduce(&x, 4).unwrap();
        assert_eq!(a, b);
        assert!(a.eigenvalues[3].abs() < 1e-12);
        assert!(pca_reduce(&x, 5).is_err());
    }
}
