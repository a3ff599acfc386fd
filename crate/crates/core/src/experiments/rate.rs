use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::risk::{excess_risk, loglog_slope, unit_cube, DEFAULT_MC_N};
use crate::datasets::{make_lipschitz, LipschitzPosterior};
use crate::error::{Error, Result};
use crate::geometry::{numeric_rank, DEFAULT_RANK_TOL};
use crate::hac::{histogram_hac, HacClassifier};
use crate::rng::mix;

/// Recorded in every rate report.
pub const RATE_NOTE: &str = "The minimax theorem statement sizes the arrangement as k ~ n^(1/(d+1)), while its proof \
and the surrounding discussion use k ~ n^(1/(d+2)). This run follows the proof: k_tilde = ceil(n^(1/(d+2))) grid \
bins per axis, i.e. k = d(k_tilde - 1) hyperplanes.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub d: usize,
    pub lipschitz: f64,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub mc_n: usize,
    pub seed: u64,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig {
            d: 1,
            lipschitz: 5.0,
            n_grid: (8..=14).map(|e| 1usize << e).collect(),
            trials: 20,
            mc_n: DEFAULT_MC_N,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub k_tilde: usize,
    /// Hyperplanes in the certified classifier, `d(k_tilde - 1)`.
    pub hyperplanes: usize,
    pub mean_excess: f64,
    /// Between-trial standard error of `mean_excess`.
    pub se_excess: f64,
    /// Largest Monte Carlo standard error over the trials.
    pub max_mc_se: f64,
    pub excess: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub note: String,
    pub config: RateConfig,
    pub bayes_risk: f64,
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub intercept: f64,
    pub target_slope: f64,
    /// Each mean is at most the previous one plus two standard errors of
    /// their difference.
    pub monotone: bool,
    /// Indices `i` where point `i + 1` breaks monotonicity.
    pub monotone_violations: Vec<usize>,
}

/// Smallest integer `t ≥ 1` with `t^(d+2) ≥ n`, i.e. `⌈n^(1/(d+2))⌉`
/// without floating point.
pub fn k_tilde_for(n: usize, d: usize) -> usize {
    let e = (d + 2) as u32;
    let mut t = (n as f64).powf(1.0 / f64::from(e)).floor().max(1.0) as usize;
    let reaches = |t: usize| (t as u128).checked_pow(e).is_none_or(|p| p >= n as u128);
    while t > 1 && reaches(t - 1) {
        t -= 1;
    }
    while !reaches(t) {
        t += 1;
    }
    t
}

/// Checks membership in HAC(d, d, k): at most `k` hyperplanes and normal
/// matrix rank at most `d`.
pub fn certify_membership(clf: &HacClassifier, d: usize, k: usize) -> Result<()> {
    if clf.d() != d || clf.k() > k || clf.rank_budget() > d {
        return Err(Error::InvalidArgument(format!(
            "classifier with d={}, k={}, rank budget {} is outside HAC({d}, {d}, {k})",
            clf.d(),
            clf.k(),
            clf.rank_budget()
        )));
    }
    let rank = numeric_rank(clf.arrangement().normals(), DEFAULT_RANK_TOL)?;
    if rank > d {
        return Err(Error::InvalidArgument(format!("normal matrix rank {rank} exceeds {d}")));
    }
    Ok(())
}

fn validate(cfg: &RateConfig) -> Result<()> {
    if cfg.n_grid.len() < 2 || cfg.n_grid.windows(2).any(|w| w[0] >= w[1]) || cfg.n_grid[0] == 0 {
        return Err(Error::InvalidArgument(format!(
            "n grid must be strictly increasing, positive, with ≥ 2 points; got {:?}",
            cfg.n_grid
        )));
    }
    if cfg.trials < 2 {
        return Err(Error::InvalidArgument(format!("need ≥ 2 trials, got {}", cfg.trials)));
    }
    Ok(())
}

/// One trial: draw `n` samples, fit the grid histogram, certify it and
/// estimate its excess risk.
fn run_trial(cfg: &RateConfig, eta: &LipschitzPosterior, n_index: usize, trial: usize) -> Result<(f64, f64)> {
    let n = cfg.n_grid[n_index];
    let data_seed = mix(mix(cfg.seed, n_index as u64), trial as u64);
    let samples = make_lipschitz(n, cfg.d, cfg.lipschitz, data_seed)?.to_labeled_samples()?;
    let kt = k_tilde_for(n, cfg.d);
    let clf = histogram_hac(cfg.d, kt, &samples)?;
    certify_membership(&clf, cfg.d, cfg.d * (kt - 1))?;
    // Shared across n so that differences between grid points are paired.
    let mc_seed = mix(cfg.seed ^ 0x5eed, trial as u64);
    let est = excess_risk(|x| clf.predict(x), |x| eta.eta(x), cfg.d, unit_cube, cfg.mc_n, mc_seed)?;
    Ok((est.excess, est.excess_se))
}

/// Excess risk of the certified grid histogram classifier across `n_grid`,
/// with a log-log fit against the `-1/(d+2)` target.
pub fn minimax_rate_experiment(cfg: &RateConfig) -> Result<RateReport> {
    validate(cfg)?;
    let eta = LipschitzPosterior::new(cfg.d, cfg.lipschitz)?;
    let items: Vec<(usize, usize)> = (0..cfg.n_grid.len())
        .flat_map(|i| (0..cfg.trials).map(move |t| (i, t)))
        .collect();
    let results: Vec<Result<(f64, f64)>> = items
        .par_iter()
        .map(|&(i, t)| run_trial(cfg, &eta, i, t))
        .collect();
    let results: Vec<(f64, f64)> = results.into_iter().collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(cfg.n_grid.len());
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let chunk = &results[i * cfg.trials..(i + 1) * cfg.trials];
        let excess: Vec<f64> = chunk.iter().map(|r| r.0).collect();
        let m = excess.len() as f64;
        let mean = excess.iter().sum::<f64>() / m;
        let var = excess.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let kt = k_tilde_for(n, cfg.d);
        points.push(RatePoint {
            n,
            k_tilde: kt,
            hyperplanes: cfg.d * (kt - 1),
            mean_excess: mean,
            se_excess: (var / m).sqrt(),
            max_mc_se: chunk.iter().map(|r| r.1).fold(0.0, f64::max),
            excess,
        });
    }
    if let Some(p) = points.iter().find(|p| !(p.mean_excess > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "degenerate fit: mean excess risk at n={} is {}",
            p.n, p.mean_excess
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_excess).collect();
    let (slope, intercept) = loglog_slope(&xs, &ys)?;
    let monotone_violations: Vec<usize> = points
        .windows(2)
        .enumerate()
        .filter(|(_, w)| {
            let tol = 2.0 * (w[0].se_excess.powi(2) + w[1].se_excess.powi(2)).sqrt();
            w[1].mean_excess > w[0].mean_excess + tol
        })
        .map(|(i, _)| i)
        .collect();
    Ok(RateReport {
        note: RATE_NOTE.to_string(),
        config: cfg.clone(),
        bayes_risk: eta.bayes_risk(),
        points,
        slope,
        intercept,
        target_slope: -1.0 / (cfg.d as f64 + 2.0),
        monotone: monotone_violations.is_empty(),
        monotone_violations,
    })
}
