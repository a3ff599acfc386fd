use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Two interleaved half circles. Class 0 (first `⌈n/2⌉` rows) lies on
/// `(cos t, sin t)`, class 1 on `(1 - cos t, ½ - sin t)`, `t ~ U[0, π]`,
/// plus isotropic Gaussian noise of standard deviation `noise`.
pub fn make_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("make_moons needs n ≥ 2, got {n}")));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::InvalidArgument(format!("noise must be ≥ 0, got {noise}")));
    }
    let mut rng = stream(seed, Stream::Data, 0);
    let jitter = Normal::new(0.0, noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let n0 = n.div_ceil(2);
    let mut features = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let t: f64 = rng.random_range(0.0..=PI);
        let (x, y, class) = if i < n0 {
            (t.cos(), t.sin(), 0)
        } else {
            (1.0 - t.cos(), 0.5 - t.sin(), 1)
        };
        let (ex, ey) = if noise > 0.0 {
            (jitter.sample(&mut rng), jitter.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        features[(i, 0)] = x + ex;
        features[(i, 1)] = y + ey;
        labels.push(class);
    }
    let mut ds = Dataset::new(features, labels, 2, format!("moons(n={n}, noise={noise}, seed={seed})"))?;
    ds.class_names = vec!["0".into(), "1".into()];
    Ok(ds)
}

/// Amplitude `A` of the Lipschitz posterior family.
pub const LIPSCHITZ_AMPLITUDE: f64 = 0.4;

/// Terms of the cosine series used for the Bayes risk.
const BAYES_SERIES_TERMS: usize = 400_000;

/// `η(x) = ½ + A·sin(ω·(x₁+⋯+x_d))` on `[0,1]^d` with `ω = L/(A√d)`, so
/// `‖∇η‖ = Aω√d = L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzPosterior {
    pub d: usize,
    pub lipschitz: f64,
    pub amplitude: f64,
    pub omega: f64,
}

impl LipschitzPosterior {
    pub fn new(d: usize, lipschitz: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be ≥ 1".into()));
        }
        if !(lipschitz > 0.0) || !lipschitz.is_finite() {
            return Err(Error::InvalidArgument(format!("Lipschitz constant must be > 0, got {lipschitz}")));
        }
        let amplitude = LIPSCHITZ_AMPLITUDE;
        Ok(LipschitzPosterior {
            d,
            lipschitz,
            amplitude,
            omega: lipschitz / (amplitude * (d as f64).sqrt()),
        })
    }

    pub fn eta(&self, x: &[f64]) -> f64 {
        0.5 + self.amplitude * (self.omega * x.iter().sum::<f64>()).sin()
    }

    /// Bayes label: `+1` when `η(x) ≥ ½`.
    pub fn bayes_label(&self, x: &[f64]) -> i8 {
        if self.eta(x) >= 0.5 {
            1
        } else {
            -1
        }
    }

    /// `E[min(η, 1-η)] = ½ - A·E|sin(ωS)|` with `S` the sum of `d` uniforms.
    ///
    /// Uses `|sin θ| = 2/π - (4/π)Σ_m cos(2mθ)/(4m²-1)` and
    /// `E cos(tS) = cos(td/2)·(sin(t/2)/(t/2))^d`.
    pub fn bayes_risk(&self) -> f64 {
        0.5 - self.amplitude * expected_abs_sin(self.omega, self.d)
    }
}

pub(crate) fn expected_abs_sin(omega: f64, d: usize) -> f64 {
    let dd = d as f64;
    let mut sum = 0.0;
    // Summed from the tail up so small terms are not lost.
    for m in (1..=BAYES_SERIES_TERMS).rev() {
        let mf = m as f64;
        let t = 2.0 * mf * omega;
        let half = 0.5 * t;
        let sinc = if half.abs() < 1e-300 { 1.0 } else { half.sin() / half };
        sum += (t * dd / 2.0).cos() * sinc.powi(d as i32) / (4.0 * mf * mf - 1.0);
    }
    // Σ_{m>M} 1/(4m²-1) = 1/(2(2M+1)); the truncated terms are still ≈ 1
    // times that only when ω·M·d is tiny.
    let tail = if omega * BAYES_SERIES_TERMS as f64 * dd < 1e-3 {
        1.0 / (2.0 * (2.0 * BAYES_SERIES_TERMS as f64 + 1.0))
    } else {
        0.0
    };
    (2.0 / PI - 4.0 / PI * (sum + tail)).max(0.0)
}

/// `X ~ U([0,1]^d)`, `Y = +1` (class 1) with probability `η(X)`.
pub fn make_lipschitz(n: usize, d: usize, lipschitz: f64, seed: u64) -> Result<Dataset> {
    let eta = LipschitzPosterior::new(d, lipschitz)?;
    let mut rng = stream(seed, Stream::Data, 0);
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..d {
            features[(i, j)] = rng.random_range(0.0..1.0);
        }
        let p = eta.eta(features.row(i).as_slice().expect("row-major"));
        labels.push(usize::from(rng.random_bool(p.clamp(0.0, 1.0))));
    }
    let mut ds = Dataset::new(
        features,
        labels,
        2,
        format!("lipschitz(n={n}, d={d}, L={lipschitz}, seed={seed})"),
    )?;
    ds.eta = Some(eta);
    ds.class_names = vec!["-1".into(), "+1".into()];
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hac::{brute_force_erm, empirical_risk};

    #[test]
    fn noiseless_moons_lie_on_the_arcs() {
        let ds = make_moons(4, 0.0, 3).unwrap();
        assert_eq!(ds.labels, vec![0, 0, 1, 1]);
        for (row, &l) in ds.features.rows().into_iter().zip(&ds.labels) {
            let (x, y) = (row[0], row[1]);
            // Each point sits on its unit circle, on the correct half.
            if l == 0 {
                assert!((x * x + y * y - 1.0).abs() < 1e-12 && y >= 0.0);
            } else {
                let (cx, cy) = (1.0 - x, 0.5 - y);
                assert!((cx * cx + cy * cy - 1.0).abs() < 1e-12 && cy >= 0.0);
            }
        }
    }

    #[test]
    fn moons_class_balance_and_determinism() {
        for n in [2, 3, 7, 100, 101] {
            let ds = make_moons(n, 0.2, 1).unwrap();
            let c = ds.class_counts();
            assert_eq!(c[0], n.div_ceil(2));
            assert!(c[0] - c[1] <= 1);
        }
        assert_eq!(make_moons(50, 0.1, 9).unwrap(), make_moons(50, 0.1, 9).unwrap());
        assert_ne!(make_moons(50, 0.1, 9).unwrap().features, make_moons(50, 0.1, 10).unwrap().features);
        assert!(make_moons(1, 0.1, 0).is_err());
        assert!(make_moons(10, -0.1, 0).is_err());
    }

    #[test]
    fn noiseless_moons_separable_with_two_hyperplanes() {
        let ds = make_moons(12, 0.0, 5).unwrap();
        let samples = ds.to_labeled_samples().unwrap();
        let clf = brute_force_erm(&samples, 2).unwrap();
        assert_eq!(empirical_risk(&clf, &samples).unwrap(), 0.0);
    }

    #[test]
    fn flat_posterior_limit() {
        let eta = LipschitzPosterior::new(2, 1e-9).unwrap();
        assert!((eta.bayes_risk() - 0.5).abs() < 1e-6);
        assert!(LipschitzPosterior::new(2, 0.0).is_err());
        assert!(LipschitzPosterior::new(0, 1.0).is_err());
    }

    #[test]
    fn lipschitz_audit() {
        use rand::Rng;
        for (d, l) in [(1, 2.0), (2, 5.0), (3, 1.0)] {
            let eta = LipschitzPosterior::new(d, l).unwrap();
            let mut rng = stream(77, Stream::MonteCarlo, d as u64);
            let mut worst: f64 = 0.0;
            for _ in 0..100_000 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
                let y: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
                let dist = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                if dist > 0.0 {
                    worst = worst.max((eta.eta(&x) - eta.eta(&y)).abs() / dist);
                }
            }
            assert!(worst <= l * (1.0 + 1e-12), "d={d} L={l}: {worst}");
            assert!(worst > 0.5 * l);
        }
    }

    /// Composite Simpson over the Irwin–Hall density, split at the integer
    /// knots and at the zeros of `sin(ωs)`.
    fn quadrature_abs_sin(omega: f64, d: usize) -> f64 {
        fn irwin_hall(s: f64, d: usize) -> f64 {
            let mut acc = 0.0;
            let mut binom = 1.0;
            let mut fact = 1.0;
            for i in 1..d {
                fact *= i as f64;
            }
            for k in 0..=d {
                if (k as f64) >= s {
                    break;
                }
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * binom * (s - k as f64).powi(d as i32 - 1);
                binom = binom * (d - k) as f64 / (k + 1) as f64;
            }
            acc / fact
        }
        let dd = d as f64;
        let mut knots: Vec<f64> = (0..=d).map(|k| k as f64).collect();
        let mut m = 1.0;
        while m * PI / omega < dd {
            knots.push(m * PI / omega);
            m += 1.0;
        }
        knots.sort_by(f64::total_cmp);
        let f = |s: f64| (omega * s).sin().abs() * irwin_hall(s, d);
        let mut total = 0.0;
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let steps = 2000;
            let h = (b - a) / steps as f64;
            let mut acc = f(a) + f(b);
            for i in 1..steps {
                let x = a + i as f64 * h;
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
            }
            total += acc * h / 3.0;
        }
        total
    }

    #[test]
    fn bayes_risk_series_matches_quadrature() {
        for (d, l) in [(1, 4.0 * PI * 0.4), (1, 3.0), (2, 5.0), (3, 2.5)] {
            let eta = LipschitzPosterior::new(d, l).unwrap();
            let q = 0.5 - eta.amplitude * quadrature_abs_sin(eta.omega, d);
            assert!((eta.bayes_risk() - q).abs() < 1e-6, "d={d} L={l}: {} vs {q}", eta.bayes_risk());
        }
        // η = ½ + 0.4 sin(4πx): E|sin| = 2/π.
        let eta = LipschitzPosterior::new(1, 4.0 * PI * 0.4).unwrap();
        assert!((eta.omega - 4.0 * PI).abs() < 1e-12);
        assert!((eta.bayes_risk() - (0.5 - 0.8 / PI)).abs() < 1e-6);
    }

    #[test]
    fn bayes_risk_matches_monte_carlo() {
        let eta = LipschitzPosterior::new(1, 4.0 * PI * 0.4).unwrap();
        let mut rng = stream(3, Stream::MonteCarlo, 0);
        let n = 1_000_000;
        let mc: f64 = (0..n)
            .map(|_| {
                let p = eta.eta(&[rng.random_range(0.0..1.0)]);
                p.min(1.0 - p)
            })
            .sum::<f64>()
            / n as f64;
        assert!((mc - eta.bayes_risk()).abs() < 1e-3);
    }

    #[test]
    fn lipschitz_labels_follow_eta() {
        let ds = make_lipschitz(20_000, 1, 2.0, 4).unwrap();
        let eta = ds.eta.clone().unwrap();
        // Mean label should track the mean posterior.
        let mean_label = ds.labels.iter().sum::<usize>() as f64 / ds.n() as f64;
        let mean_eta = ds.features.rows().into_iter().map(|r| eta.eta(&[r[0]])).sum::<f64>() / ds.n() as f64;
        assert!((mean_label - mean_eta).abs() < 0.02);
        assert!(ds.features.iter().all(|v| (0.0..1.0).contains(v)));
        assert_eq!(make_lipschitz(10, 2, 1.0, 1).unwrap(), make_lipschitz(10, 2, 1.0, 1).unwrap());
    }
}
