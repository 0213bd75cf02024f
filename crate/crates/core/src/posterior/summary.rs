use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::draws::PosteriorDraws;
use crate::error::{Error, Result};

/// 2.5%, 50% and 97.5%.
pub const DEFAULT_PROBS: [f64; 3] = [0.025, 0.5, 0.975];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSummary {
    pub mean: f64,
    pub sd: f64,
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub shape: Vec<usize>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// `quantiles[k]` holds every component at probability `probs[k]`.
    pub quantiles: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub probs: Vec<f64>,
    pub params: BTreeMap<String, ParamSummary>,
}

/// Linear interpolation between order statistics (`h = (n - 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn summarize_values(values: &[f64], probs: &[f64]) -> Result<ScalarSummary> {
    if values.len() < 2 {
        return Err(Error::input("summaries need at least two draws"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // Keep the mean of constant draws exactly equal to the constant.
    let (mean, var) = if sorted[0] == sorted[sorted.len() - 1] {
        (sorted[0], 0.0)
    } else {
        (mean, var)
    };
    Ok(ScalarSummary {
        mean,
        sd: var.sqrt(),
        quantiles: probs.iter().map(|p| quantile_sorted(&sorted, *p)).collect(),
    })
}

pub fn summarize(draws: &PosteriorDraws, probs: &[f64]) -> Result<PosteriorSummary> {
    if draws.params.is_empty() {
        return Err(Error::input("empty draw archive"));
    }
    let mut params = BTreeMap::new();
    for (name, p) in &draws.params {
        let k = p.size();
        let mut mean = Vec::with_capacity(k);
        let mut sd = Vec::with_capacity(k);
        let mut quantiles = vec![Vec::with_capacity(k); probs.len()];
        for c in 0..k {
            let s = summarize_values(&p.pooled_component(c), probs)?;
            mean.push(s.mean);
            sd.push(s.sd);
            for (q, v) in quantiles.iter_mut().zip(s.quantiles) {
                q.push(v);
            }
        }
        params.insert(
            name.clone(),
            ParamSummary {
                shape: p.shape.clone(),
                mean,
                sd,
                quantiles,
            },
        );
    }
    Ok(PosteriorSummary {
        probs: probs.to_vec(),
        params,
    })
}
