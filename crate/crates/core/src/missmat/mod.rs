//! Base, pooled and country-hierarchical models for misclassification matrices.

mod predict;
mod sampler;

use serde::{Deserialize, Serialize};

use crate::dist::{beta_ln_pdf, dirichlet_ln_pdf, half_cauchy_ln_pdf};
use crate::domain::{BaseModelParams, CauseSet, CountMatrix, MissMat};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use predict::predict_new_country;
pub use sampler::sample_missmat_posterior;

/// Shrinkage prior on a concentration parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OmegaPrior {
    /// Half-Cauchy with the given scale; sampled on the log scale.
    HalfCauchy { scale: f64 },
    /// Held at the given value.
    Fixed { value: f64 },
}

impl Default for OmegaPrior {
    fn default() -> Self {
        OmegaPrior::HalfCauchy { scale: 1.0 }
    }
}

impl OmegaPrior {
    pub fn ln_pdf(&self, omega: f64) -> f64 {
        match self {
            OmegaPrior::HalfCauchy { scale } => half_cauchy_ln_pdf(omega, *scale),
            OmegaPrior::Fixed { .. } => 0.0,
        }
    }

    pub fn fixed_value(&self) -> Option<f64> {
        match self {
            OmegaPrior::Fixed { value } => Some(*value),
            OmegaPrior::HalfCauchy { .. } => None,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            OmegaPrior::HalfCauchy { scale } => *scale > 0.0 && scale.is_finite(),
            OmegaPrior::Fixed { value } => *value >= 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid prior for {name}: {self:?}")))
        }
    }
}

/// Hyperpriors of the misclassification models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    /// `a_i ~ Beta(b, d)`.
    pub accuracy: (f64, f64),
    /// `rho ~ Dirichlet(e)`; `None` means all ones.
    pub pull: Option<Vec<f64>>,
    pub omega_p: OmegaPrior,
    pub omega_s: OmegaPrior,
    pub omega_r: OmegaPrior,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            accuracy: (1.0, 1.0),
            pull: None,
            omega_p: OmegaPrior::default(),
            omega_s: OmegaPrior::default(),
            omega_r: OmegaPrior::default(),
        }
    }
}

impl Priors {
    pub fn pull_scale(&self, c: usize) -> Vec<f64> {
        self.pull.clone().unwrap_or_else(|| vec![1.0; c])
    }

    pub fn validate(&self, c: usize) -> Result<()> {
        let (b, d) = self.accuracy;
        if !(b > 0.0 && d > 0.0) {
            return Err(Error::config(format!("accuracy prior Beta({b}, {d}) is invalid")));
        }
        if let Some(e) = &self.pull {
            if e.len() != c {
                return Err(Error::DimensionMismatch {
                    context: "pull prior".into(),
                    expected: c,
                    found: e.len(),
                });
            }
            if e.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::config("pull prior scales must be positive"));
            }
        }
        self.omega_p.validate("omega_p")?;
        self.omega_s.validate("omega_s")?;
        self.omega_r.validate("omega_r")
    }

    fn hyper_ln_pdf(&self, base: &BaseModelParams, omega_p: f64) -> f64 {
        let (b, d) = self.accuracy;
        let c = base.dim();
        base.accuracy.iter().map(|a| beta_ln_pdf(*a, b, d)).sum::<f64>()
            + dirichlet_ln_pdf(base.pull.values(), &self.pull_scale(c))
            + self.omega_p.ln_pdf(omega_p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Pooled,
    Hierarchical,
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pooled" => Ok(Model::Pooled),
            "hierarchical" => Ok(Model::Hierarchical),
            other => Err(Error::input(format!(
                "unknown model `{other}` (expected pooled or hierarchical)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub chains: usize,
    /// Iterations per chain, warmup included.
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub priors: Priors,
    /// Keep per-country matrix draws of the hierarchical model.
    pub keep_country_draws: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            chains: 4,
            iterations: 3000,
            warmup: 1500,
            seed: 1,
            target_accept: 0.35,
            priors: Priors::default(),
            keep_country_draws: true,
        }
    }
}

impl FitConfig {
    pub fn validate(&self, c: usize) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::config("at least one chain is required"));
        }
        if self.iterations <= self.warmup {
            return Err(Error::config(format!(
                "iterations ({}) must exceed warmup ({})",
                self.iterations, self.warmup
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::config("target acceptance must lie in (0, 1)"));
        }
        self.priors.validate(c)
    }
}

/// Sensitivities and relative false negatives of one matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowParams {
    pub phi_diag: Vec<f64>,
    /// `q_rel[i]` lists `q_ij` for `j != i` in column order.
    pub q_rel: Vec<Vec<f64>>,
}

impl RowParams {
    pub fn from_missmat(m: &MissMat) -> Self {
        let c = m.dim();
        let phi_diag: Vec<f64> = (0..c).map(|i| m.get(i, i)).collect();
        let q_rel = (0..c)
            .map(|i| {
                let off: f64 = 1.0 - phi_diag[i];
                (0..c)
                    .filter(|&j| j != i)
                    .map(|j| if off > 0.0 { m.get(i, j) / off } else { 1.0 / (c - 1) as f64 })
                    .collect()
            })
            .collect();
        RowParams { phi_diag, q_rel }
    }

    /// `phi_ij = (1 - phi_ii) q_ij` off the diagonal.
    pub fn to_matrix(&self) -> Matrix {
        let c = self.phi_diag.len();
        let mut m = Matrix::zeros(c);
        for i in 0..c {
            fill_row(m.row_mut(i), i, self.phi_diag[i], &self.q_rel[i]);
        }
        m
    }

    pub fn to_missmat(&self, causes: &CauseSet) -> Result<MissMat> {
        MissMat::new(causes.clone(), self.to_matrix())
    }

    fn validate(&self, c: usize) -> Result<()> {
        if self.phi_diag.len() != c || self.q_rel.len() != c {
            return Err(Error::DimensionMismatch {
                context: "misclassification parameters".into(),
                expected: c,
                found: self.phi_diag.len(),
            });
        }
        if let Some(q) = self.q_rel.iter().find(|q| q.len() + 1 != c) {
            return Err(Error::DimensionMismatch {
                context: "relative false negatives".into(),
                expected: c - 1,
                found: q.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn fill_row(row: &mut [f64], i: usize, diag: f64, q: &[f64]) {
    let mut k = 0;
    for (j, v) in row.iter_mut().enumerate() {
        if j == i {
            *v = diag;
        } else {
            *v = (1.0 - diag) * q[k];
            k += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledParams {
    pub rows: RowParams,
    pub base: BaseModelParams,
    pub omega_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierParams {
    pub pooled: PooledParams,
    /// One entry per labeled country, in data order.
    pub countries: Vec<RowParams>,
    pub omega_s: f64,
    pub omega_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Pooled(PooledParams),
    Hierarchical(HierParams),
}

/// `phi_ii = a_i + (1 - a_i) rho_i`, `phi_ij = (1 - a_i) rho_j`.
pub fn base_model_matrix(params: &BaseModelParams, causes: &CauseSet) -> Result<MissMat> {
    let c = params.dim();
    if causes.len() != c {
        return Err(Error::DimensionMismatch {
            context: "base model parameters".into(),
            expected: causes.len(),
            found: c,
        });
    }
    let rho = params.pull.values();
    let mut m = Matrix::zeros(c);
    for i in 0..c {
        let a = params.accuracy[i];
        for j in 0..c {
            let v = (1.0 - a) * rho[j] + if i == j { a } else { 0.0 };
            m.set(i, j, v);
        }
    }
    MissMat::new(causes.clone(), m)
}

/// Base-model sensitivities `a_i + (1 - a_i) rho_i`.
pub(crate) fn base_diag(a: &[f64], rho: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(rho)
        .map(|(a, r)| a + (1.0 - a) * r)
        .collect()
}

/// Base-model relative false negatives of row `i`: `rho_j / (1 - rho_i)`.
pub(crate) fn base_q(rho: &[f64], i: usize) -> Vec<f64> {
    let rest: f64 = rho.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, r)| r).sum();
    rho.iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, r)| r / rest)
        .collect()
}

pub(crate) fn diag_prior(omega: f64, centre: f64) -> (f64, f64) {
    (0.5 + 2.0 * omega * centre, 0.5 + 2.0 * omega * (1.0 - centre))
}

pub(crate) fn q_prior(omega: f64, centre: &[f64]) -> Vec<f64> {
    let k = centre.len() as f64;
    centre.iter().map(|v| 0.5 + k * omega * v).collect()
}

/// Log prior of one matrix centred on (`centre_diag`, `centre_q`).
fn rows_ln_prior(rows: &RowParams, centre_diag: &[f64], centre_q: &[Vec<f64>], w_diag: f64, w_q: f64) -> f64 {
    let mut lp = 0.0;
    for i in 0..rows.phi_diag.len() {
        let (a, b) = diag_prior(w_diag, centre_diag[i]);
        lp += beta_ln_pdf(rows.phi_diag[i], a, b);
        lp += dirichlet_ln_pdf(&rows.q_rel[i], &q_prior(w_q, &centre_q[i]));
    }
    lp
}

fn multinomial_kernel(rows: &RowParams, data: &CountMatrix) -> f64 {
    let m = rows.to_matrix();
    let c = m.dim();
    let mut ll = 0.0;
    for i in 0..c {
        for j in 0..c {
            let t = data.get(i, j);
            if t > 0 {
                ll += t as f64 * m.get(i, j).ln();
            }
        }
    }
    ll
}

fn check_data(data: &[CountMatrix], c: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::input("no labeled data"));
    }
    for d in data {
        if d.dim() != c {
            return Err(Error::DimensionMismatch {
                context: format!("counts of `{}`", d.country),
                expected: c,
                found: d.dim(),
            });
        }
        if d.causes != data[0].causes {
            return Err(Error::input(format!(
                "country `{}` uses a different cause set",
                d.country
            )));
        }
    }
    Ok(())
}

/// Unnormalized joint log density of parameters and data (multinomial
/// coefficients omitted). Returns negative infinity on the boundary.
pub fn log_posterior(params: &ModelParams, data: &[CountMatrix], priors: &Priors) -> Result<f64> {
    let pooled = match params {
        ModelParams::Pooled(p) => p,
        ModelParams::Hierarchical(h) => &h.pooled,
    };
    let c = pooled.base.dim();
    pooled.rows.validate(c)?;
    priors.validate(c)?;
    check_data(data, c)?;
    let boundary = |r: &RowParams| {
        r.phi_diag.iter().any(|v| !(*v > 0.0 && *v < 1.0))
            || r.q_rel.iter().flatten().any(|v| !(*v > 0.0))
    };
    if boundary(&pooled.rows) {
        return Ok(f64::NEG_INFINITY);
    }
    let rho = pooled.base.pull.values();
    let centre_diag = base_diag(&pooled.base.accuracy, rho);
    let centre_q: Vec<Vec<f64>> = (0..c).map(|i| base_q(rho, i)).collect();
    let mut lp = priors.hyper_ln_pdf(&pooled.base, pooled.omega_p)
        + rows_ln_prior(&pooled.rows, &centre_diag, &centre_q, pooled.omega_p, pooled.omega_p);
    match params {
        ModelParams::Pooled(p) => {
            lp += multinomial_kernel(&p.rows, &CountMatrix::pooled(data)?);
        }
        ModelParams::Hierarchical(h) => {
            if h.countries.len() != data.len() {
                return Err(Error::DimensionMismatch {
                    context: "country parameters".into(),
                    expected: data.len(),
                    found: h.countries.len(),
                });
            }
            lp += priors.omega_s.ln_pdf(h.omega_s) + priors.omega_r.ln_pdf(h.omega_r);
            for (rows, d) in h.countries.iter().zip(data) {
                rows.validate(c)?;
                if boundary(rows) {
                    return Ok(f64::NEG_INFINITY);
                }
                lp += rows_ln_prior(rows, &pooled.rows.phi_diag, &pooled.rows.q_rel, h.omega_s, h.omega_r);
                lp += multinomial_kernel(rows, d);
            }
        }
    }
    Ok(lp)
}
