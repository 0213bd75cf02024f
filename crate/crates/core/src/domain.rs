//! Domain types and the exact simplex/matrix algebra shared by every module.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Broad causes for neonates (0-27 days), in canonical order.
pub const NEONATE_CAUSES: [&str; 6] = [
    "congenital_malformation",
    "pneumonia",
    "sepsis_meningitis_inf",
    "ipre",
    "other",
    "prematurity",
];

/// Broad causes for children (1-59 months), in canonical order.
pub const CHILD_CAUSES: [&str; 9] = [
    "malaria",
    "pneumonia",
    "diarrhea",
    "severe_malnutrition",
    "hiv",
    "injury",
    "other",
    "other_infections",
    "neonatal_causes",
];

/// Largest supported number of causes.
pub const MAX_CAUSES: usize = 64;

/// Sums within this distance of one are accepted as-is.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Sums within this distance of one are renormalized with a warning.
pub const SIMPLEX_RENORM_TOL: f64 = 1e-6;
/// Default cap on the 1-norm condition number accepted by [`solve_inverse`].
pub const DEFAULT_MAX_CONDITION: f64 = 1e12;

/// Canonical form used for label comparison: trimmed, lower-case, with runs of
/// whitespace, `_` and `-` collapsed into a single `_`.
pub fn normalize_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    let mut pending_sep = false;
    for ch in label.trim().chars() {
        if ch.is_whitespace() || ch == '_' || ch == '-' {
            pending_sep = true;
        } else {
            if pending_sep && !out.is_empty() {
                out.push('_');
            }
            pending_sep = false;
            out.extend(ch.to_lowercase());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeGroup {
    Neonate,
    Child,
    Custom,
}

impl AgeGroup {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgeGroup::Neonate => "neonate",
            AgeGroup::Child => "child",
            AgeGroup::Custom => "custom",
        }
    }

    pub fn canonical_causes(&self) -> Option<&'static [&'static str]> {
        match self {
            AgeGroup::Neonate => Some(&NEONATE_CAUSES),
            AgeGroup::Child => Some(&CHILD_CAUSES),
            AgeGroup::Custom => None,
        }
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AgeGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match normalize_label(s).as_str() {
            "neonate" | "neonates" => Ok(AgeGroup::Neonate),
            "child" | "children" => Ok(AgeGroup::Child),
            "custom" => Ok(AgeGroup::Custom),
            other => Err(Error::input(format!(
                "unknown age group `{other}` (expected neonate, child or custom)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CauseSetRepr", into = "CauseSetRepr")]
pub struct CauseSet {
    labels: Vec<String>,
    age_group: AgeGroup,
}

#[derive(Serialize, Deserialize)]
struct CauseSetRepr {
    age_group: AgeGroup,
    labels: Vec<String>,
}

impl TryFrom<CauseSetRepr> for CauseSet {
    type Error = Error;

    fn try_from(r: CauseSetRepr) -> Result<Self> {
        CauseSet::new(r.labels, r.age_group)
    }
}

impl From<CauseSet> for CauseSetRepr {
    fn from(c: CauseSet) -> Self {
        CauseSetRepr {
            age_group: c.age_group,
            labels: c.labels,
        }
    }
}

impl CauseSet {
    pub fn new(labels: Vec<String>, age_group: AgeGroup) -> Result<Self> {
        if let Some(canon) = age_group.canonical_causes() {
            if labels.len() != canon.len() || labels.iter().zip(canon.iter()).any(|(a, b)| a != b) {
                return Err(Error::InvalidCauseSet(format!(
                    "{age_group} causes must be [{}] in that order",
                    canon.join(", ")
                )));
            }
        }
        if labels.len() < 2 {
            return Err(Error::InvalidCauseSet(format!(
                "need at least two causes, found {}",
                labels.len()
            )));
        }
        if labels.len() > MAX_CAUSES {
            return Err(Error::InvalidCauseSet(format!(
                "at most {MAX_CAUSES} causes are supported, found {}",
                labels.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if l.trim().is_empty() {
                return Err(Error::InvalidCauseSet("empty cause label".into()));
            }
            if !seen.insert(normalize_label(l)) {
                return Err(Error::InvalidCauseSet(format!("duplicate cause label `{l}`")));
            }
        }
        Ok(CauseSet { labels, age_group })
    }

    pub fn neonate() -> Self {
        Self::canonical(AgeGroup::Neonate)
    }

    pub fn child() -> Self {
        Self::canonical(AgeGroup::Child)
    }

    /// Canonical set for neonate/child. Panics for [`AgeGroup::Custom`].
    pub fn canonical(age_group: AgeGroup) -> Self {
        let canon = age_group
            .canonical_causes()
            .expect("custom age group has no canonical cause list");
        CauseSet {
            labels: canon.iter().map(|s| s.to_string()).collect(),
            age_group,
        }
    }

    pub fn custom<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        Self::new(
            labels.iter().map(|s| s.as_ref().to_string()).collect(),
            AgeGroup::Custom,
        )
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn age_group(&self) -> AgeGroup {
        self.age_group
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    /// Position of `label`, compared after [`normalize_label`].
    pub fn index_of(&self, label: &str) -> Option<usize> {
        let key = normalize_label(label);
        self.labels.iter().position(|l| normalize_label(l) == key)
    }

    /// Causes at `indices` (in the given order) as a custom set.
    pub fn subset(&self, indices: &[usize]) -> Result<CauseSet> {
        let labels: Vec<String> = indices.iter().map(|&i| self.labels[i].clone()).collect();
        if labels == self.labels {
            return Ok(self.clone());
        }
        CauseSet::new(labels, AgeGroup::Custom)
    }
}

/// Nonnegative vector summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexVec(Vec<f64>);

impl TryFrom<Vec<f64>> for SimplexVec {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        SimplexVec::new(v)
    }
}

impl From<SimplexVec> for Vec<f64> {
    fn from(s: SimplexVec) -> Self {
        s.0
    }
}

impl SimplexVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_simplex(values, "probability vector").map(SimplexVec)
    }

    pub fn uniform(n: usize) -> Self {
        SimplexVec(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        SimplexVec(v)
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::input("counts have zero total"));
        }
        Ok(SimplexVec(
            counts.iter().map(|&c| c as f64 / total as f64).collect(),
        ))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for SimplexVec {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_simplex(mut values: Vec<f64>, context: &str) -> Result<Vec<f64>> {
    let err = |reason: String| Error::NotSimplex {
        context: context.to_string(),
        reason,
    };
    if values.is_empty() {
        return Err(err("empty".into()));
    }
    for (j, v) in values.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(err(format!("entry {j} is not finite")));
        }
        if *v < 0.0 {
            if *v > -1e-12 {
                *v = 0.0;
            } else {
                return Err(err(format!("entry {j} is negative ({v})")));
            }
        }
    }
    let sum: f64 = values.iter().sum();
    let dev = (sum - 1.0).abs();
    if dev <= SIMPLEX_TOL {
        Ok(values)
    } else if dev <= SIMPLEX_RENORM_TOL {
        log::warn!("{context}: entries sum to {sum}; renormalizing");
        values.iter_mut().for_each(|v| *v /= sum);
        Ok(values)
    } else {
        Err(err(format!("entries sum to {sum}")))
    }
}

/// Row-stochastic misclassification matrix: entry (i, j) is P(assigned j | true i).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MissMatRepr", into = "MissMatRepr")]
pub struct MissMat {
    causes: CauseSet,
    matrix: Matrix,
}

#[derive(Serialize, Deserialize)]
struct MissMatRepr {
    causes: CauseSet,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<MissMatRepr> for MissMat {
    type Error = Error;

    fn try_from(r: MissMatRepr) -> Result<Self> {
        MissMat::new(r.causes, Matrix::from_rows(&r.rows)?)
    }
}

impl From<MissMat> for MissMatRepr {
    fn from(m: MissMat) -> Self {
        MissMatRepr {
            rows: m.matrix.to_rows(),
            causes: m.causes,
        }
    }
}

impl MissMat {
    pub fn new(causes: CauseSet, matrix: Matrix) -> Result<Self> {
        if matrix.dim() != causes.len() {
            return Err(Error::DimensionMismatch {
                context: "misclassification matrix".into(),
                expected: causes.len(),
                found: matrix.dim(),
            });
        }
        let mut matrix = matrix;
        for i in 0..matrix.dim() {
            let row = check_simplex(matrix.row(i).to_vec(), &format!("matrix row {i}"))?;
            matrix.row_mut(i).copy_from_slice(&row);
        }
        Ok(MissMat { causes, matrix })
    }

    pub fn from_rows(causes: CauseSet, rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(causes, Matrix::from_rows(rows)?)
    }

    pub fn identity(causes: CauseSet) -> Self {
        let n = causes.len();
        MissMat {
            causes,
            matrix: Matrix::identity(n),
        }
    }

    pub fn causes(&self) -> &CauseSet {
        &self.causes
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.matrix.to_rows()
    }

    /// `lambda I + (1 - lambda) self`.
    pub fn shrink_to_identity(&self, lambda: f64) -> MissMat {
        let n = self.dim();
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                m.set(i, j, lambda * id + (1.0 - lambda) * self.get(i, j));
            }
        }
        MissMat {
            causes: self.causes.clone(),
            matrix: m,
        }
    }
}

/// Intrinsic accuracy per cause and the pull simplex of the base model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseModelParams {
    pub accuracy: Vec<f64>,
    pub pull: SimplexVec,
}

impl BaseModelParams {
    pub fn new(accuracy: Vec<f64>, pull: SimplexVec) -> Result<Self> {
        if accuracy.len() != pull.len() {
            return Err(Error::DimensionMismatch {
                context: "base model accuracy".into(),
                expected: pull.len(),
                found: accuracy.len(),
            });
        }
        if let Some((i, a)) = accuracy
            .iter()
            .enumerate()
            .find(|(_, a)| !(0.0..=1.0).contains(*a))
        {
            return Err(Error::input(format!("accuracy[{i}] = {a} is outside [0, 1]")));
        }
        Ok(BaseModelParams { accuracy, pull })
    }

    pub fn dim(&self) -> usize {
        self.accuracy.len()
    }
}

/// Labeled misclassification counts for one country: rows are true causes,
/// columns assigned causes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountMatrix {
    pub country: String,
    pub causes: CauseSet,
    counts: Vec<u64>,
}

impl CountMatrix {
    pub fn new(country: impl Into<String>, causes: CauseSet, rows: &[Vec<u64>]) -> Result<Self> {
        let n = causes.len();
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                context: "count matrix rows".into(),
                expected: n,
                found: rows.len(),
            });
        }
        let mut counts = Vec::with_capacity(n * n);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    context: format!("count matrix row {i}"),
                    expected: n,
                    found: r.len(),
                });
            }
            counts.extend_from_slice(r);
        }
        Ok(CountMatrix {
            country: country.into(),
            causes,
            counts,
        })
    }

    pub fn zeros(country: impl Into<String>, causes: CauseSet) -> Self {
        let n = causes.len();
        CountMatrix {
            country: country.into(),
            causes,
            counts: vec![0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.causes.len()
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.dim() + j]
    }

    pub fn add(&mut self, i: usize, j: usize, by: u64) {
        let n = self.dim();
        self.counts[i * n + j] += by;
    }

    pub fn row(&self, i: usize) -> &[u64] {
        let n = self.dim();
        &self.counts[i * n..(i + 1) * n]
    }

    /// Number of cases with true cause `i`.
    pub fn row_total(&self, i: usize) -> u64 {
        self.row(i).iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        (0..self.dim()).map(|i| self.row(i).to_vec()).collect()
    }

    /// Elementwise sum over countries (the pooled count matrix).
    pub fn pooled(data: &[CountMatrix]) -> Result<CountMatrix> {
        let first = data
            .first()
            .ok_or_else(|| Error::input("no count matrices supplied"))?;
        let mut out = CountMatrix::zeros("pooled", first.causes.clone());
        for m in data {
            if m.causes != first.causes {
                return Err(Error::input(format!(
                    "country `{}` uses a different cause set",
                    m.country
                )));
            }
            for (o, c) in out.counts.iter_mut().zip(&m.counts) {
                *o += c;
            }
        }
        Ok(out)
    }
}

/// Row-wise Dirichlet concentration parameters encoding an uncertain matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DirichletRowsRepr", into = "DirichletRowsRepr")]
pub struct DirichletRows {
    causes: CauseSet,
    scale: Matrix,
}

#[derive(Serialize, Deserialize)]
struct DirichletRowsRepr {
    causes: CauseSet,
    scale: Vec<Vec<f64>>,
}

impl TryFrom<DirichletRowsRepr> for DirichletRows {
    type Error = Error;

    fn try_from(r: DirichletRowsRepr) -> Result<Self> {
        DirichletRows::new(r.causes, Matrix::from_rows(&r.scale)?)
    }
}

impl From<DirichletRows> for DirichletRowsRepr {
    fn from(d: DirichletRows) -> Self {
        DirichletRowsRepr {
            scale: d.scale.to_rows(),
            causes: d.causes,
        }
    }
}

impl DirichletRows {
    pub fn new(causes: CauseSet, scale: Matrix) -> Result<Self> {
        if scale.dim() != causes.len() {
            return Err(Error::DimensionMismatch {
                context: "Dirichlet scale matrix".into(),
                expected: causes.len(),
                found: scale.dim(),
            });
        }
        if let Some(pos) = scale.as_slice().iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            let n = scale.dim();
            return Err(Error::input(format!(
                "Dirichlet scale ({}, {}) must be positive and finite",
                pos / n,
                pos % n
            )));
        }
        Ok(DirichletRows { causes, scale })
    }

    pub fn causes(&self) -> &CauseSet {
        &self.causes
    }

    pub fn scale(&self) -> &Matrix {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.scale.dim()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.scale.row(i)
    }

    /// Analytic mean matrix (each row `alpha / sum(alpha)`).
    pub fn mean(&self) -> MissMat {
        let n = self.dim();
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            let row = self.scale.row(i);
            let s: f64 = row.iter().sum();
            for j in 0..n {
                m.set(i, j, row[j] / s);
            }
        }
        MissMat {
            causes: self.causes.clone(),
            matrix: m,
        }
    }
}

/// A misclassification matrix as supplied to calibration: a point estimate,
/// row-wise Dirichlet priors, or a set of sampled matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MissmatSpec {
    Fixed { matrix: MissMat },
    Prior { rows: DirichletRows },
    Samples { draws: Vec<MissMat> },
}

impl MissmatSpec {
    pub fn causes(&self) -> &CauseSet {
        match self {
            MissmatSpec::Fixed { matrix } => matrix.causes(),
            MissmatSpec::Prior { rows } => rows.causes(),
            MissmatSpec::Samples { draws } => draws[0].causes(),
        }
    }

    pub fn dim(&self) -> usize {
        self.causes().len()
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MissmatSpec::Fixed { .. } => "fixed",
            MissmatSpec::Prior { .. } => "prior",
            MissmatSpec::Samples { .. } => "samples",
        }
    }

    /// Point estimate: the matrix itself, the Dirichlet mean, or the average draw.
    pub fn mean_matrix(&self) -> MissMat {
        match self {
            MissmatSpec::Fixed { matrix } => matrix.clone(),
            MissmatSpec::Prior { rows } => rows.mean(),
            MissmatSpec::Samples { draws } => {
                let n = draws[0].dim();
                let mut m = Matrix::zeros(n);
                for d in draws {
                    for i in 0..n {
                        for j in 0..n {
                            m.set(i, j, m.get(i, j) + d.get(i, j));
                        }
                    }
                }
                let k = draws.len() as f64;
                for i in 0..n {
                    let row = m.row_mut(i);
                    row.iter_mut().for_each(|v| *v /= k);
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= s);
                }
                MissMat {
                    causes: draws[0].causes.clone(),
                    matrix: m,
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let MissmatSpec::Samples { draws } = self {
            let first = draws
                .first()
                .ok_or_else(|| Error::input("empty set of sampled matrices"))?;
            if draws.iter().any(|d| d.causes != first.causes) {
                return Err(Error::input("sampled matrices use different cause sets"));
            }
        }
        Ok(())
    }
}

/// Zeroes inactive columns and rescales every row to sum to one over the active ones.
pub fn normalize_rows(m: &Matrix, active: &[bool], causes: &CauseSet) -> Result<MissMat> {
    let n = m.dim();
    if active.len() != n {
        return Err(Error::DimensionMismatch {
            context: "active-column mask".into(),
            expected: n,
            found: active.len(),
        });
    }
    let mut out = Matrix::zeros(n);
    for i in 0..n {
        let row = m.row(i);
        if let Some(j) = row.iter().position(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::input(format!("entry ({i}, {j}) is negative or not finite")));
        }
        let mass: f64 = row.iter().zip(active).filter(|(_, a)| **a).map(|(v, _)| v).sum();
        if !(mass > 0.0) {
            return Err(Error::RowDegenerate { row: i });
        }
        for j in 0..n {
            if active[j] {
                out.set(i, j, row[j] / mass);
            }
        }
    }
    MissMat::new(causes.clone(), out)
}

/// `q = Phi^T p`: the distribution of assigned causes implied by true fractions `p`.
pub fn apply_calibration(phi: &MissMat, p: &SimplexVec) -> Result<SimplexVec> {
    let n = phi.dim();
    if p.len() != n {
        return Err(Error::DimensionMismatch {
            context: "apply_calibration".into(),
            expected: n,
            found: p.len(),
        });
    }
    let mut q = vec![0.0; n];
    for i in 0..n {
        let pi = p[i];
        for (qj, phi_ij) in q.iter_mut().zip(phi.row(i)) {
            *qj += phi_ij * pi;
        }
    }
    SimplexVec::new(q)
}

/// Solves `Phi^T x = q`. The solution is not required to lie in the simplex.
pub fn solve_inverse(phi: &MissMat, q: &SimplexVec) -> Result<Vec<f64>> {
    solve_inverse_with_cap(phi, q.values(), DEFAULT_MAX_CONDITION)
}

pub fn solve_inverse_with_cap(phi: &MissMat, q: &[f64], max_condition: f64) -> Result<Vec<f64>> {
    if q.len() != phi.dim() {
        return Err(Error::DimensionMismatch {
            context: "solve_inverse".into(),
            expected: phi.dim(),
            found: q.len(),
        });
    }
    linalg::solve_checked(&phi.matrix().transpose(), q, max_condition)
}
