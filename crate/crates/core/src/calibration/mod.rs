//! Bayesian calibration of population cause fractions for misclassification.

mod gibbs;
mod run;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cause_map::{binary_to_counts, BinaryAssignment};
use crate::domain::{
    normalize_label, CauseSet, DirichletRows, MissMat, MissmatSpec, SimplexVec,
};
use crate::draws::{DrawDiagnostics, ParamDraws};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::posterior::summary::ScalarSummary;

pub use run::{calibrate, PASSTHROUGH};

/// Name of the ensemble block in results.
pub const ENSEMBLE: &str = "ensemble";
/// Cause that is never calibrated when exclusions are learned.
pub const OTHER: &str = "other";
/// Entries of an inverse-mapped CSMF must exceed this to count as interior.
pub const INTERIOR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AlgorithmData {
    Individual(BinaryAssignment),
    Counts { counts: Vec<u64> },
}

/// Classifier output for one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmInput {
    pub algorithm: String,
    pub causes: CauseSet,
    pub data: AlgorithmData,
}

impl AlgorithmInput {
    pub fn from_counts(algorithm: &str, causes: CauseSet, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != causes.len() {
            return Err(Error::DimensionMismatch {
                context: format!("counts of `{algorithm}`"),
                expected: causes.len(),
                found: counts.len(),
            });
        }
        let input = AlgorithmInput {
            algorithm: algorithm.to_string(),
            causes,
            data: AlgorithmData::Counts { counts },
        };
        input.check_total()?;
        Ok(input)
    }

    pub fn from_assignment(algorithm: &str, b: BinaryAssignment) -> Result<Self> {
        let input = AlgorithmInput {
            algorithm: algorithm.to_string(),
            causes: b.causes().clone(),
            data: AlgorithmData::Individual(b),
        };
        input.check_total()?;
        Ok(input)
    }

    fn check_total(&self) -> Result<()> {
        if self.total() == 0 {
            return Err(Error::input(format!(
                "algorithm `{}` has no deaths",
                self.algorithm
            )));
        }
        Ok(())
    }

    pub fn counts(&self) -> Vec<u64> {
        match &self.data {
            AlgorithmData::Individual(b) => binary_to_counts(b),
            AlgorithmData::Counts { counts } => counts.clone(),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts().iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DonotcalibType {
    #[default]
    Learn,
    Fixed,
}

/// Which feasible point of the shrinkage path is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LambdaRule {
    /// Least shrinkage towards the identity.
    #[default]
    Smallest,
    /// Most shrinkage; always returns 1 when the identity is feasible.
    Largest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibConfig {
    /// Strength of the shrinkage of p towards the uncalibrated CSMF.
    pub eta: f64,
    /// Causes never calibrated, for every algorithm.
    pub donotcalib: Vec<String>,
    /// Additional per-algorithm exclusions.
    pub donotcalib_by_algorithm: BTreeMap<String, Vec<String>>,
    pub donotcalib_type: DonotcalibType,
    pub nocalib_threshold: f64,
    pub path_correction: bool,
    pub lambda_grid: f64,
    pub lambda_rule: LambdaRule,
    pub ensemble: bool,
    /// Algorithms reported without calibration, in addition to `none`.
    pub passthrough: Vec<String>,
    pub chains: usize,
    /// Iterations per chain, warmup included.
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Keep the raw p draws in the result.
    pub keep_draws: bool,
}

impl Default for CalibConfig {
    fn default() -> Self {
        CalibConfig {
            eta: 4.0,
            donotcalib: vec!["other".into()],
            donotcalib_by_algorithm: BTreeMap::new(),
            donotcalib_type: DonotcalibType::Learn,
            nocalib_threshold: 0.1,
            path_correction: false,
            lambda_grid: 0.01,
            lambda_rule: LambdaRule::Smallest,
            ensemble: true,
            passthrough: Vec::new(),
            chains: 4,
            iterations: 3000,
            warmup: 1500,
            seed: 1,
            keep_draws: false,
        }
    }
}

impl CalibConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::config(format!("eta must be nonnegative, got {}", self.eta)));
        }
        if !(self.nocalib_threshold > 0.0 && self.nocalib_threshold < 1.0) {
            return Err(Error::config(format!(
                "nocalib threshold must lie in (0, 1), got {}",
                self.nocalib_threshold
            )));
        }
        if !(self.lambda_grid > 0.0 && self.lambda_grid <= 1.0) {
            return Err(Error::config(format!(
                "lambda grid step must lie in (0, 1], got {}",
                self.lambda_grid
            )));
        }
        if self.chains == 0 {
            return Err(Error::config("at least one chain is required"));
        }
        if self.iterations <= self.warmup {
            return Err(Error::config(format!(
                "iterations ({}) must exceed warmup ({})",
                self.iterations, self.warmup
            )));
        }
        Ok(())
    }

    pub fn is_passthrough(&self, algorithm: &str) -> bool {
        let key = normalize_label(algorithm);
        key == run::PASSTHROUGH || self.passthrough.iter().any(|p| normalize_label(p) == key)
    }

    fn user_list(&self, algorithm: &str) -> Vec<String> {
        let mut list = self.donotcalib.clone();
        if let Some(extra) = self.donotcalib_by_algorithm.get(algorithm) {
            list.extend(extra.iter().cloned());
        }
        list
    }
}

/// Per-cause posterior summary of a CSMF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsmfSummary {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub lower: Vec<f64>,
    pub median: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CsmfSummary {
    pub(crate) fn from_scalars(s: &[ScalarSummary]) -> Self {
        CsmfSummary {
            mean: s.iter().map(|x| x.mean).collect(),
            sd: s.iter().map(|x| x.sd).collect(),
            lower: s.iter().map(|x| x.quantiles[0]).collect(),
            median: s.iter().map(|x| x.quantiles[1]).collect(),
            upper: s.iter().map(|x| x.quantiles[2]).collect(),
        }
    }
}

/// Calibration output of one algorithm or of the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibBlock {
    pub name: String,
    /// Algorithms contributing to this block.
    pub algorithms: Vec<String>,
    pub n_deaths: u64,
    pub p_uncalib: Vec<f64>,
    pub p_calib: CsmfSummary,
    pub deaths_uncalib: Vec<u64>,
    pub deaths_calib: Vec<u64>,
    /// Ensemble only: each algorithm's total spread over the ensemble CSMF.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub deaths_calib_by_algorithm: BTreeMap<String, Vec<u64>>,
    /// True for causes carried through uncalibrated.
    pub donotcalib: Vec<bool>,
    /// Matrices (or Dirichlet scales) on the calibrated causes, per algorithm.
    pub missmat_used: BTreeMap<String, MissmatSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub lambda: BTreeMap<String, f64>,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_draws: Option<ParamDraws>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DrawDiagnostics>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibResult {
    pub causes: CauseSet,
    pub config: CalibConfig,
    pub algorithms: Vec<CalibBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<CalibBlock>,
}

impl CalibResult {
    pub fn block(&self, name: &str) -> Option<&CalibBlock> {
        if name == ENSEMBLE {
            return self.ensemble.as_ref();
        }
        self.algorithms.iter().find(|b| b.name == name)
    }

    pub fn blocks(&self) -> impl Iterator<Item = &CalibBlock> {
        self.algorithms.iter().chain(self.ensemble.iter())
    }

    pub fn is_flagged(&self) -> bool {
        self.blocks().any(|b| b.flagged)
    }
}

/// `q_j = n_j / N`.
pub fn uncalibrated_csmf(input: &AlgorithmInput) -> Result<SimplexVec> {
    SimplexVec::from_counts(&input.counts())
}

/// Zero components raised to `1 / (2N)`, then renormalized.
pub fn floor_csmf(q: &[f64], n: u64) -> Vec<f64> {
    let eps = 1.0 / (2.0 * n.max(1) as f64);
    let mut v: Vec<f64> = q.iter().map(|x| if *x > 0.0 { *x } else { eps }).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn resolve_user_list(causes: &CauseSet, user_list: &[String]) -> Vec<usize> {
    let mut out = Vec::new();
    for l in user_list {
        match causes.index_of(l) {
            Some(j) => out.push(j),
            None => log::debug!("donotcalib cause `{l}` is not among the causes; ignored"),
        }
    }
    out
}

/// Marks cause `j` uncalibrated when it is user-listed, is `other`, or its
/// column varies by less than `threshold` across true causes.
pub fn learn_donotcalib(phi_hat: &MissMat, user_list: &[String], threshold: f64) -> Result<Vec<bool>> {
    let c = phi_hat.dim();
    let mut mask = vec![false; c];
    for j in resolve_user_list(phi_hat.causes(), user_list) {
        mask[j] = true;
    }
    if let Some(j) = phi_hat.causes().index_of(OTHER) {
        mask[j] = true;
    }
    for (j, m) in mask.iter_mut().enumerate() {
        let col = (0..c).map(|i| phi_hat.get(i, j));
        let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi - lo < threshold {
            *m = true;
        }
    }
    if mask.iter().all(|m| *m) {
        return Err(Error::AllCausesExcluded);
    }
    Ok(mask)
}

/// Mask from the user list only.
pub fn fixed_donotcalib(causes: &CauseSet, user_list: &[String]) -> Result<Vec<bool>> {
    let mut mask = vec![false; causes.len()];
    for j in resolve_user_list(causes, user_list) {
        mask[j] = true;
    }
    if mask.iter().all(|m| *m) {
        return Err(Error::AllCausesExcluded);
    }
    Ok(mask)
}

fn active_indices(mask: &[bool]) -> Vec<usize> {
    (0..mask.len()).filter(|&j| !mask[j]).collect()
}

fn restrict_fixed(m: &MissMat, active: &[usize], causes: &CauseSet) -> Result<MissMat> {
    let k = active.len();
    let mut out = Matrix::zeros(k);
    for (r, &i) in active.iter().enumerate() {
        let mass: f64 = active.iter().map(|&j| m.get(i, j)).sum();
        if !(mass > 0.0) {
            return Err(Error::RowDegenerate { row: i });
        }
        for (c, &j) in active.iter().enumerate() {
            out.set(r, c, m.get(i, j) / mass);
        }
    }
    MissMat::new(causes.clone(), out)
}

/// Restricts a misclassification input to the calibrated causes, renormalizing
/// rows; Dirichlet scales of dropped columns are removed.
pub fn prepare_missmat(spec: &MissmatSpec, mask: &[bool]) -> Result<MissmatSpec> {
    spec.validate()?;
    let c = spec.dim();
    if mask.len() != c {
        return Err(Error::DimensionMismatch {
            context: "donotcalib mask".into(),
            expected: c,
            found: mask.len(),
        });
    }
    let active = active_indices(mask);
    if active.len() < 2 {
        return Err(Error::TooFewActiveCauses {
            active: active.len(),
        });
    }
    if active.len() == c {
        return Ok(spec.clone());
    }
    let causes = spec.causes().subset(&active)?;
    Ok(match spec {
        MissmatSpec::Fixed { matrix } => MissmatSpec::Fixed {
            matrix: restrict_fixed(matrix, &active, &causes)?,
        },
        MissmatSpec::Samples { draws } => MissmatSpec::Samples {
            draws: draws
                .iter()
                .map(|d| restrict_fixed(d, &active, &causes))
                .collect::<Result<_>>()?,
        },
        MissmatSpec::Prior { rows } => {
            let k = active.len();
            let mut scale = Matrix::zeros(k);
            for (r, &i) in active.iter().enumerate() {
                for (cc, &j) in active.iter().enumerate() {
                    scale.set(r, cc, rows.scale().get(i, j));
                }
            }
            MissmatSpec::Prior {
                rows: DirichletRows::new(causes, scale)?,
            }
        }
    })
}

fn is_interior(phi: &MissMat, q: &[f64]) -> bool {
    match crate::domain::solve_inverse_with_cap(phi, q, crate::domain::DEFAULT_MAX_CONDITION) {
        Ok(x) => x.iter().all(|v| *v > INTERIOR_TOL),
        Err(_) => false,
    }
}

/// Shrinks `phi_hat` towards the identity along `lambda I + (1 - lambda) phi_hat`
/// on a grid and returns the smallest grid point at which the inverse-mapped
/// CSMF lies strictly inside the simplex.
pub fn path_correct(phi_hat: &MissMat, q_hat: &SimplexVec, grid_step: f64) -> Result<(f64, MissMat)> {
    path_correct_with(phi_hat, q_hat, grid_step, LambdaRule::Smallest)
}

pub fn path_correct_with(
    phi_hat: &MissMat,
    q_hat: &SimplexVec,
    grid_step: f64,
    rule: LambdaRule,
) -> Result<(f64, MissMat)> {
    if q_hat.len() != phi_hat.dim() {
        return Err(Error::DimensionMismatch {
            context: "path correction".into(),
            expected: phi_hat.dim(),
            found: q_hat.len(),
        });
    }
    if q_hat.values().iter().any(|v| !(*v > 0.0)) {
        return Err(Error::NotSimplex {
            context: "path correction".into(),
            reason: "the uncalibrated CSMF must be strictly positive".into(),
        });
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::config(format!("invalid lambda grid step {grid_step}")));
    }
    let steps = (1.0 / grid_step).ceil() as usize;
    let grid = |k: usize| if k >= steps { 1.0 } else { k as f64 * grid_step };
    let order: Vec<usize> = match rule {
        LambdaRule::Smallest => (0..=steps).collect(),
        LambdaRule::Largest => (0..=steps).rev().collect(),
    };
    for k in order {
        let lambda = grid(k);
        let m = phi_hat.shrink_to_identity(lambda);
        if is_interior(&m, q_hat.values()) {
            return Ok((lambda, m));
        }
    }
    // The identity reproduces a strictly positive CSMF, so the scan cannot end here.
    Ok((1.0, MissMat::identity(phi_hat.causes().clone())))
}

/// `N * p` rounded by largest remainder so the total is exactly `N`; ties go
/// to the lower index.
pub fn calibrated_counts(p_mean: &[f64], n: u64) -> Vec<u64> {
    let total: f64 = p_mean.iter().sum();
    let scaled: Vec<f64> = p_mean.iter().map(|p| n as f64 * p / total).collect();
    let mut counts: Vec<u64> = scaled.iter().map(|v| v.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..p_mean.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (scaled[a] - scaled[a].floor(), scaled[b] - scaled[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &j in order.iter().take(n.saturating_sub(assigned) as usize) {
        counts[j] += 1;
    }
    counts
}

/// `1 - sum |p_hat - p| / (2 (1 - min p))`.
pub fn csmf_accuracy(estimate: &[f64], truth: &[f64]) -> f64 {
    let err: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum();
    let min = truth.iter().cloned().fold(f64::INFINITY, f64::min);
    1.0 - err / (2.0 * (1.0 - min))
}

/// Looks up the misclassification input of an algorithm by normalized name.
pub(crate) fn find_spec<'a>(specs: &'a BTreeMap<String, MissmatSpec>, algorithm: &str) -> Option<&'a MissmatSpec> {
    let key = normalize_label(algorithm);
    specs
        .iter()
        .find(|(k, _)| normalize_label(k) == key)
        .map(|(_, v)| v)
}
