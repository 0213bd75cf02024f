//! Split R-hat and rank-normalized bulk ESS.

use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::draws::{ComponentDiagnostics, DrawDiagnostics, PosteriorDraws};
use crate::error::{Error, Result};

pub const RHAT_LIMIT: f64 = 1.05;
/// Minimum bulk ESS per chain before a run is flagged.
pub const ESS_PER_CHAIN: f64 = 100.0;
pub const MIN_ITERATIONS: usize = 100;

fn split_halves(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    chains
        .iter()
        .flat_map(|c| {
            let half = c.len() / 2;
            // An odd draw in the middle is dropped so both halves have equal length.
            [&c[..half], &c[c.len() - half..]]
        })
        .collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64], m: f64) -> f64 {
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Within-chain and marginal variance estimates over split chains.
fn variance_terms(halves: &[&[f64]]) -> (f64, f64, Vec<f64>) {
    let m = halves.len() as f64;
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(c, mu)| sample_var(c, *mu))
        .sum::<f64>()
        / m;
    let var_plus = (n - 1.0) / n * w + b / n;
    (w, var_plus, means)
}

/// Split R-hat: every chain is halved and the between/within variance ratio is
/// computed over the halves. Returns NaN for constant input.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves = split_halves(chains);
    if halves.len() < 2 || halves[0].len() < 2 {
        return f64::NAN;
    }
    let (w, var_plus, _) = variance_terms(&halves);
    if !(w > 0.0) {
        return f64::NAN;
    }
    (var_plus / w).sqrt()
}

fn autocov(x: &[f64], mu: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag)
        .map(|t| (x[t] - mu) * (x[t + lag] - mu))
        .sum::<f64>()
        / n as f64
}

/// Multi-chain ESS of the given series with Geyer's initial positive sequence.
fn ess_raw(chains: &[Vec<f64>]) -> f64 {
    let halves = split_halves(chains);
    if halves.len() < 2 || halves[0].len() < 4 {
        return f64::NAN;
    }
    let m = halves.len();
    let n = halves[0].len();
    let (w, var_plus, means) = variance_terms(&halves);
    if !(w > 0.0) {
        return f64::NAN;
    }
    let rho = |lag: usize| -> f64 {
        let mean_acov = halves
            .iter()
            .zip(&means)
            .map(|(c, mu)| autocov(c, *mu, lag))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };
    // rho_0 = 1 by construction; pairs (rho_{2k}, rho_{2k+1}) are summed until one
    // pair turns negative, with the pair sums forced to be non-increasing.
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let r0 = if lag == 0 { 1.0 } else { rho(lag) };
        let r1 = rho(lag + 1);
        let mut pair = r0 + r1;
        if pair < 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        prev_pair = pair;
        tau += 2.0 * pair;
        lag += 2;
    }
    let total = (m * n) as f64;
    let tau = tau.max(1.0 / total.log10());
    total / tau
}

/// Rank-normalized (bulk) effective sample size.
pub fn bulk_ess(chains: &[Vec<f64>]) -> f64 {
    let mut indexed: Vec<(f64, usize, usize)> = Vec::new();
    for (c, chain) in chains.iter().enumerate() {
        for (i, v) in chain.iter().enumerate() {
            indexed.push((*v, c, i));
        }
    }
    let s = indexed.len();
    if s == 0 {
        return f64::NAN;
    }
    indexed.sort_by(|a, b| a.0.total_cmp(&b.0));
    let normal = Normal::standard();
    let mut z: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut start = 0;
    while start < s {
        let mut end = start + 1;
        while end < s && indexed[end].0 == indexed[start].0 {
            end += 1;
        }
        // Average rank (1-based) for ties.
        let rank = (start + end + 1) as f64 / 2.0;
        let u = (rank - 0.375) / (s as f64 + 0.25);
        let zval = normal.inverse_cdf(u);
        for &(_, c, i) in &indexed[start..end] {
            z[c][i] = zval;
        }
        start = end;
    }
    ess_raw(&z)
}

/// Split R-hat and bulk ESS for every scalar component of every parameter.
/// Constant components are reported as R-hat 1 and ESS equal to the draw count.
pub fn diagnostics(draws: &PosteriorDraws) -> Result<DrawDiagnostics> {
    if draws.n_chains < 2 {
        return Err(Error::input(format!(
            "diagnostics need at least 2 chains, found {}",
            draws.n_chains
        )));
    }
    if draws.iterations < MIN_ITERATIONS {
        return Err(Error::input(format!(
            "diagnostics need at least {MIN_ITERATIONS} retained iterations per chain, found {}",
            draws.iterations
        )));
    }
    let total = draws.total_draws() as f64;
    let mut params = BTreeMap::new();
    let mut max_rhat: f64 = 1.0;
    let mut min_ess = total;
    for (name, p) in &draws.params {
        let mut comps = Vec::with_capacity(p.size());
        for k in 0..p.size() {
            let series = p.component(k);
            let constant = {
                let first = series[0].first().copied();
                series.iter().flatten().all(|v| Some(*v) == first)
            };
            let d = if constant {
                ComponentDiagnostics {
                    split_rhat: 1.0,
                    bulk_ess: total,
                }
            } else {
                let r = split_rhat(&series);
                let e = bulk_ess(&series);
                ComponentDiagnostics {
                    split_rhat: if r.is_finite() { r } else { 1.0 },
                    bulk_ess: if e.is_finite() { e } else { total },
                }
            };
            max_rhat = max_rhat.max(d.split_rhat);
            min_ess = min_ess.min(d.bulk_ess);
            comps.push(d);
        }
        params.insert(name.clone(), comps);
    }
    let converged = max_rhat <= RHAT_LIMIT && min_ess >= ESS_PER_CHAIN * draws.n_chains as f64;
    Ok(DrawDiagnostics {
        params,
        max_rhat,
        min_ess,
        converged,
    })
}
