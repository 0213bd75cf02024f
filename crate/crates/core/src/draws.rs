//! Seeded, chain-indexed archives of posterior draws.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{CauseSet, SIMPLEX_TOL};
use crate::error::{Error, Result};

/// Draws of one (possibly array-valued) parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDraws {
    /// Shape of a single draw, e.g. `[C, C]` for a matrix.
    pub shape: Vec<usize>,
    /// Whether each slice along the last axis lies on the simplex.
    #[serde(default)]
    pub simplex_rows: bool,
    /// One vector per chain, iteration-major.
    pub chains: Vec<Vec<f64>>,
}

impl ParamDraws {
    pub fn new(shape: Vec<usize>, n_chains: usize, simplex_rows: bool) -> Self {
        ParamDraws {
            shape,
            simplex_rows,
            chains: vec![Vec::new(); n_chains],
        }
    }

    /// Number of scalar components per draw.
    pub fn size(&self) -> usize {
        self.shape.iter().product::<usize>().max(1)
    }

    pub fn iterations(&self) -> usize {
        self.chains.first().map_or(0, |c| c.len() / self.size())
    }

    pub fn draw(&self, chain: usize, iter: usize) -> &[f64] {
        let k = self.size();
        &self.chains[chain][iter * k..(iter + 1) * k]
    }

    /// Every draw, chain by chain.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let k = self.size();
        self.chains.iter().flat_map(move |c| c.chunks_exact(k))
    }

    /// Series of scalar component `k`, one vector per chain.
    pub fn component(&self, k: usize) -> Vec<Vec<f64>> {
        let size = self.size();
        self.chains
            .iter()
            .map(|c| c.iter().skip(k).step_by(size).copied().collect())
            .collect()
    }

    /// Pooled values of scalar component `k` over all chains.
    pub fn pooled_component(&self, k: usize) -> Vec<f64> {
        self.component(k).into_iter().flatten().collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let k = self.size();
        let mut m = vec![0.0; k];
        let mut n = 0usize;
        for d in self.iter_draws() {
            for (a, b) in m.iter_mut().zip(d) {
                *a += b;
            }
            n += 1;
        }
        m.iter_mut().for_each(|v| *v /= n.max(1) as f64);
        m
    }
}

/// Per-component convergence diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDiagnostics {
    pub split_rhat: f64,
    pub bulk_ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawDiagnostics {
    pub params: BTreeMap<String, Vec<ComponentDiagnostics>>,
    pub max_rhat: f64,
    pub min_ess: f64,
    /// False when any R-hat exceeds 1.05 or any ESS falls below 100 per chain.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub seed: u64,
    pub warmup: usize,
    pub n_chains: usize,
    /// Retained iterations per chain.
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub causes: Option<CauseSet>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub params: BTreeMap<String, ParamDraws>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DrawDiagnostics>,
}

impl PosteriorDraws {
    pub fn new(seed: u64, warmup: usize, n_chains: usize, iterations: usize) -> Self {
        PosteriorDraws {
            seed,
            warmup,
            n_chains,
            iterations,
            causes: None,
            metadata: BTreeMap::new(),
            params: BTreeMap::new(),
            diagnostics: None,
        }
    }

    pub fn get(&self, name: &str) -> Result<&ParamDraws> {
        self.params
            .get(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains * self.iterations
    }

    pub fn is_flagged(&self) -> bool {
        self.diagnostics.as_ref().is_some_and(|d| !d.converged)
    }

    /// Checks chain counts, per-chain lengths, and simplex rows.
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::input("posterior draws need at least one chain"));
        }
        for (name, p) in &self.params {
            if p.chains.len() != self.n_chains {
                return Err(Error::input(format!(
                    "parameter `{name}` has {} chains, expected {}",
                    p.chains.len(),
                    self.n_chains
                )));
            }
            let expected = self.iterations * p.size();
            if let Some(c) = p.chains.iter().position(|c| c.len() != expected) {
                return Err(Error::input(format!(
                    "parameter `{name}` chain {c} has the wrong number of values"
                )));
            }
            if p.simplex_rows {
                let width = *p.shape.last().unwrap_or(&1);
                for d in p.iter_draws() {
                    for row in d.chunks_exact(width) {
                        let s: f64 = row.iter().sum();
                        if (s - 1.0).abs() > SIMPLEX_TOL || row.iter().any(|v| *v < 0.0) {
                            return Err(Error::NotSimplex {
                                context: format!("draw of `{name}`"),
                                reason: format!("row sums to {s}"),
                            });
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
