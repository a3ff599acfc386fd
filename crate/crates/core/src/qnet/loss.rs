use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Binary hinge on a single score; class 1 is `y = +1`, class 0 is `-1`.
    Hinge,
    /// Weston–Watkins multiclass hinge.
    WWHinge,
    /// Mean negative log-softmax.
    CrossEntropy,
}

/// Mean loss over the batch and its gradient with respect to `scores`.
/// Hinge kinks take the zero branch.
pub fn loss_and_grad(kind: LossKind, scores: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (n, c) = scores.dim();
    if labels.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let classes = if kind == LossKind::Hinge { 2 } else { c };
    if kind == LossKind::Hinge && c != 1 {
        return Err(Error::Shape(format!("binary hinge needs one score column, got {c}")));
    }
    if kind != LossKind::Hinge && c < 2 {
        return Err(Error::Shape(format!("{kind:?} needs at least two score columns, got {c}")));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = Array2::zeros((n, c));
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = scores.row(i);
        match kind {
            LossKind::Hinge => {
                let sign = if y == 1 { 1.0 } else { -1.0 };
                let slack = 1.0 - sign * row[0];
                if slack > 0.0 {
                    total += slack;
                    grad[(i, 0)] = -sign * inv_n;
                }
            }
            LossKind::WWHinge => {
                for k in 0..c {
                    if k == y {
                        continue;
                    }
                    let slack = 1.0 - (row[y] - row[k]);
                    if slack > 0.0 {
                        total += slack;
                        grad[(i, k)] += inv_n;
                        grad[(i, y)] -= inv_n;
                    }
                }
            }
            LossKind::CrossEntropy => {
                let peak = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|&s| (s - peak).exp()).sum();
                let log_z = peak + z.ln();
                total += log_z - row[y];
                for k in 0..c {
                    let p = (row[k] - log_z).exp();
                    grad[(i, k)] = (p - f64::from(u8::from(k == y))) * inv_n;
                }
            }
        }
    }
    Ok((total * inv_n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn hinge_values() {
        let (l, g) = loss_and_grad(LossKind::Hinge, &array![[0.2]], &[1]).unwrap();
        assert!((l - 0.8).abs() < 1e-15);
        assert_eq!(g[(0, 0)], -1.0);
        let (l, g) = loss_and_grad(LossKind::Hinge, &array![[1.5]], &[1]).unwrap();
        assert_eq!((l, g[(0, 0)]), (0.0, 0.0));
        // Kink takes the zero branch.
        let (l, g) = loss_and_grad(LossKind::Hinge, &array![[-1.0]], &[0]).unwrap();
        assert_eq!((l, g[(0, 0)]), (0.0, 0.0));
    }

    #[test]
    fn ww_hinge_matches_scalar_loop() {
        let scores = array![[0.3, -0.3], [-0.7, 0.7], [0.2, 1.0], [1.1, 0.4]];
        let labels = [0, 0, 1, 0];
        let mut oracle = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let other = 1 - y;
            let margin = scores[(i, y)] - scores[(i, other)];
            oracle += if margin < 1.0 { 1.0 - margin } else { 0.0 };
        }
        oracle /= 4.0;
        let (l, g) = loss_and_grad(LossKind::WWHinge, &scores, &labels).unwrap();
        assert!((l - oracle).abs() < 1e-15);
        // Row 3 has margin 0.7 < 1, row 0 has 0.6.
        assert_eq!(g.row(3).to_vec(), vec![-0.25, 0.25]);
        // Symmetric scores (s, -s) reduce to a hinge on 2s.
        let (l, _) = loss_and_grad(LossKind::WWHinge, &array![[0.25, -0.25]], &[0]).unwrap();
        assert!((l - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_is_stable() {
        let (l, g) = loss_and_grad(LossKind::CrossEntropy, &array![[1000.0, 0.0, -1000.0]], &[0]).unwrap();
        assert!(l.abs() < 1e-300 && g.iter().all(|v| v.is_finite()));
        let (l, _) = loss_and_grad(LossKind::CrossEntropy, &array![[0.0, 0.0]], &[1]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            loss_and_grad(LossKind::CrossEntropy, &array![[0.0, 0.0]], &[2]),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
        assert!(loss_and_grad(LossKind::Hinge, &array![[0.0, 1.0]], &[0]).is_err());
        assert!(loss_and_grad(LossKind::Hinge, &array![[0.0]], &[0, 1]).is_err());
    }
}
