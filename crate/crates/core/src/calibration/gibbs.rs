//! Data-augmented Gibbs sampler for the calibrated CSMF on the active causes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dist::{sample_dirichlet, sample_multinomial};
use crate::domain::MissmatSpec;

/// Misclassification model of one algorithm on the active causes, row-major.
#[derive(Debug, Clone)]
pub(crate) enum PhiModel {
    Fixed(Vec<f64>),
    Prior(Vec<f64>),
    Samples(Vec<Vec<f64>>),
}

impl PhiModel {
    pub(crate) fn from_spec(spec: &MissmatSpec) -> Self {
        let flat = |m: &crate::domain::MissMat| m.matrix().as_slice().to_vec();
        match spec {
            MissmatSpec::Fixed { matrix } => PhiModel::Fixed(flat(matrix)),
            MissmatSpec::Prior { rows } => PhiModel::Prior(rows.scale().as_slice().to_vec()),
            MissmatSpec::Samples { draws } => PhiModel::Samples(draws.iter().map(flat).collect()),
        }
    }

    fn initial(&self, dim: usize) -> Vec<f64> {
        match self {
            PhiModel::Fixed(m) => m.clone(),
            PhiModel::Samples(d) => d[0].clone(),
            PhiModel::Prior(s) => {
                let mut m = s.clone();
                for row in m.chunks_exact_mut(dim) {
                    let t: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= t);
                }
                m
            }
        }
    }
}

/// Deaths sharing the same observed causes: `obs` lists `(algorithm, cause)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Pattern {
    pub obs: Vec<(usize, usize)>,
    pub count: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub dim: usize,
    /// Dirichlet parameters of the prior on p.
    pub prior: Vec<f64>,
    pub phis: Vec<PhiModel>,
    pub patterns: Vec<Pattern>,
}

impl Problem {
    fn run_chain(&self, rng: &mut ChaCha8Rng, warmup: usize, iterations: usize) -> Vec<f64> {
        let c = self.dim;
        let total: f64 = self.prior.iter().sum();
        let mut p: Vec<f64> = self.prior.iter().map(|a| a / total).collect();
        let mut phis: Vec<Vec<f64>> = self.phis.iter().map(|m| m.initial(c)).collect();
        let mut out = Vec::with_capacity((iterations - warmup) * c);
        let mut latent = vec![0u64; c];
        let mut cross: Vec<Vec<u64>> = vec![vec![0; c * c]; self.phis.len()];
        let mut w = vec![0.0; c];
        for it in 0..iterations {
            for (k, model) in self.phis.iter().enumerate() {
                if let PhiModel::Samples(d) = model {
                    phis[k].clone_from(&d[rng.random_range(0..d.len())]);
                }
            }
            latent.iter_mut().for_each(|v| *v = 0);
            cross.iter_mut().for_each(|x| x.iter_mut().for_each(|v| *v = 0));
            for pat in &self.patterns {
                for (i, wi) in w.iter_mut().enumerate() {
                    *wi = pat.obs.iter().fold(p[i], |acc, &(k, j)| acc * phis[k][i * c + j]);
                }
                if w.iter().all(|v| *v <= 0.0) {
                    // Underflow of the product; fall back to the prior weights.
                    w.copy_from_slice(&p);
                }
                let alloc = sample_multinomial(rng, pat.count, &w);
                for (i, n) in alloc.iter().enumerate() {
                    if *n == 0 {
                        continue;
                    }
                    latent[i] += n;
                    for &(k, j) in &pat.obs {
                        cross[k][i * c + j] += n;
                    }
                }
            }
            let alpha: Vec<f64> = self.prior.iter().zip(&latent).map(|(a, n)| a + *n as f64).collect();
            p = sample_dirichlet(rng, &alpha);
            for (k, model) in self.phis.iter().enumerate() {
                if let PhiModel::Prior(scale) = model {
                    for i in 0..c {
                        let alpha: Vec<f64> = (0..c)
                            .map(|j| scale[i * c + j] + cross[k][i * c + j] as f64)
                            .collect();
                        let row = sample_dirichlet(rng, &alpha);
                        phis[k][i * c..(i + 1) * c].copy_from_slice(&row);
                    }
                }
            }
            if it >= warmup {
                out.extend_from_slice(&p);
            }
        }
        out
    }

    /// Retained draws of p per chain, iteration-major.
    pub(crate) fn sample(&self, seed: u64, chains: usize, warmup: usize, iterations: usize) -> Vec<Vec<f64>> {
        (0..chains)
            .into_par_iter()
            .map(|chain| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(chain as u64);
                self.run_chain(&mut rng, warmup, iterations)
            })
            .collect()
    }
}
