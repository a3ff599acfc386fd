use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Default Monte Carlo sample size for risk estimates.
pub const DEFAULT_MC_N: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    /// `R(f) = E[η·𝟙{f=-1} + (1-η)·𝟙{f=+1}]`.
    pub risk: f64,
    pub risk_se: f64,
    /// Paired estimate of `R(f) - R*`: the mean of `|2η-1|·𝟙{f ≠ f*}`.
    pub excess: f64,
    pub excess_se: f64,
    pub mc_n: usize,
}

/// Uniform sampler on `[0,1]^d`.
pub fn unit_cube(rng: &mut ChaCha8Rng, x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = rng.random_range(0.0..1.0);
    }
}

/// Monte Carlo risk and excess risk of `predict` under posterior `eta`.
/// The excess is estimated on the same draws as the risk, which removes
/// the variance that the Bayes term would otherwise add.
pub fn excess_risk(
    predict: impl Fn(&[f64]) -> Result<i8>,
    eta: impl Fn(&[f64]) -> f64,
    d: usize,
    mut sampler: impl FnMut(&mut ChaCha8Rng, &mut [f64]),
    mc_n: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    if mc_n < 2 || d == 0 {
        return Err(Error::InvalidArgument(format!("need mc_n ≥ 2 and d ≥ 1, got {mc_n}, {d}")));
    }
    let mut rng = stream(seed, Stream::MonteCarlo, 0);
    let mut x = vec![0.0; d];
    let (mut r1, mut r2, mut e1, mut e2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..mc_n {
        sampler(&mut rng, &mut x);
        let p = eta(&x);
        let f = predict(&x)?;
        let loss = if f == 1 { 1.0 - p } else { p };
        let bayes = p.min(1.0 - p);
        let ex = loss - bayes;
        r1 += loss;
        r2 += loss * loss;
        e1 += ex;
        e2 += ex * ex;
    }
    let n = mc_n as f64;
    let se = |s1: f64, s2: f64| ((s2 / n - (s1 / n).powi(2)).max(0.0) / (n - 1.0)).sqrt();
    Ok(RiskEstimate {
        risk: r1 / n,
        risk_se: se(r1, r2),
        excess: e1 / n,
        excess_se: se(e1, e2),
        mc_n,
    })
}

/// Ordinary least squares of `ln y` on `ln x`; returns `(slope, intercept)`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("a log-log fit needs at least two points".into()));
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("log-log fit needs positive finite values, got {v}")));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("log-log fit needs at least two distinct x values".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{make_lipschitz, LipschitzPosterior};
    use crate::hac::{empirical_risk, histogram_hac};

    #[test]
    fn slope_identities() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        let (s, c) = loglog_slope(&xs, &xs.map(|x| x * x)).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && c.abs() < 1e-12);
        let (s, _) = loglog_slope(&xs, &[3.0; 5]).unwrap();
        assert!(s.abs() < 1e-12);
        let ns: Vec<f64> = (8..=14).map(|e| 2f64.powi(e)).collect();
        let ys: Vec<f64> = ns.iter().map(|n| 0.7 * n.powf(-1.0 / 3.0)).collect();
        let (s, _) = loglog_slope(&ns, &ys).unwrap();
        assert!((s + 1.0 / 3.0).abs() < 1e-12);
        assert!(loglog_slope(&[1.0, 2.0], &[1.0, 0.0]).is_err());
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(loglog_slope(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    }

    #[test]
    fn random_monomials_are_recovered() {
        let mut rng = stream(5, Stream::Trial, 0);
        for _ in 0..20 {
            let a: f64 = rng.random_range(-3.0..3.0);
            let c: f64 = rng.random_range(0.1..10.0);
            let xs: Vec<f64> = (0..6).map(|_| rng.random_range(0.01..100.0)).collect();
            let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(a)).collect();
            let (s, i) = loglog_slope(&xs, &ys).unwrap();
            assert!((s - a).abs() < 1e-10 && (i - c.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_posterior() {
        let est = excess_risk(|_| Ok(1), |_| 0.3, 2, unit_cube, 100_000, 1).unwrap();
        assert!((est.risk - 0.7).abs() < 1e-9);
        assert!((est.excess - 0.4).abs() < 1e-9);
        assert!(est.risk_se <= 1.0 / (2.0 * (100_000f64).sqrt()));
    }

    #[test]
    fn bayes_classifier_has_no_excess() {
        let eta = LipschitzPosterior::new(1, 5.0).unwrap();
        let est = excess_risk(|x| Ok(eta.bayes_label(x)), |x| eta.eta(x), 1, unit_cube, 200_000, 2).unwrap();
        assert_eq!(est.excess, 0.0);
        assert!((est.risk - eta.bayes_risk()).abs() <= 3.0 * est.risk_se);
    }

    #[test]
    fn agrees_with_labeled_test_set() {
        let eta = LipschitzPosterior::new(1, 5.0).unwrap();
        let train = make_lipschitz(500, 1, 5.0, 3).unwrap().to_labeled_samples().unwrap();
        let clf = histogram_hac(1, 8, &train).unwrap();
        let n = 200_000;
        let est = excess_risk(|x| clf.predict(x), |x| eta.eta(x), 1, unit_cube, n, 4).unwrap();
        let test = make_lipschitz(n, 1, 5.0, 5).unwrap().to_labeled_samples().unwrap();
        let emp = empirical_risk(&clf, &test).unwrap();
        // Binomial standard error of the empirical risk plus the MC error.
        let se = ((emp * (1.0 - emp) / n as f64) + est.risk_se.powi(2)).sqrt();
        assert!((emp - est.risk).abs() <= 3.0 * se, "{emp} vs {} ± {se}", est.risk);
        assert!((est.risk - eta.bayes_risk() - est.excess).abs() <= 3.0 * est.risk_se);
    }
}
