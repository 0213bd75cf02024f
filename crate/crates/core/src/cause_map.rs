//! Mapping classifier labels to broad causes, and CHAMPS matrices to study causes.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::domain::{
    normalize_label, AgeGroup, CauseSet, DirichletRows, MissMat, MissmatSpec, SimplexVec,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// One top cause per individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopCauseRecords {
    records: Vec<(String, String)>,
}

impl TopCauseRecords {
    pub fn new(records: Vec<(String, String)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (id, label) in &records {
            if !seen.insert(id.as_str()) {
                return Err(Error::input(format!("duplicate id `{id}`")));
            }
            if label.trim().is_empty() {
                return Err(Error::input(format!("record `{id}` has an empty cause label")));
            }
        }
        Ok(TopCauseRecords { records })
    }

    pub fn from_pairs<I, S, T>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        Self::new(pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect())
    }

    pub fn records(&self) -> &[(String, String)] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// N x C indicator matrix with exactly one 1 per row, stored as column indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryAssignment {
    causes: CauseSet,
    assigned: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ids: Option<Vec<String>>,
}

impl BinaryAssignment {
    pub fn from_indices(causes: CauseSet, assigned: Vec<usize>, ids: Option<Vec<String>>) -> Result<Self> {
        if let Some(bad) = assigned.iter().find(|&&j| j >= causes.len()) {
            return Err(Error::input(format!(
                "cause index {bad} out of range for {} causes",
                causes.len()
            )));
        }
        if let Some(ids) = &ids {
            if ids.len() != assigned.len() {
                return Err(Error::DimensionMismatch {
                    context: "ids of binary assignment".into(),
                    expected: assigned.len(),
                    found: ids.len(),
                });
            }
        }
        Ok(BinaryAssignment { causes, assigned, ids })
    }

    /// Builds from explicit 0/1 rows; every row must contain exactly one 1.
    pub fn from_rows(causes: CauseSet, rows: &[Vec<u8>], ids: Option<Vec<String>>) -> Result<Self> {
        let c = causes.len();
        let mut assigned = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    context: format!("row {r} of binary assignment"),
                    expected: c,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| *v > 1) {
                return Err(Error::input(format!("row {r} has entries other than 0 and 1")));
            }
            let ones: Vec<usize> = (0..c).filter(|&j| row[j] == 1).collect();
            if ones.len() != 1 {
                return Err(Error::input(format!(
                    "row {r} must contain exactly one 1, found {}",
                    ones.len()
                )));
            }
            assigned.push(ones[0]);
        }
        Self::from_indices(causes, assigned, ids)
    }

    pub fn causes(&self) -> &CauseSet {
        &self.causes
    }

    pub fn assigned(&self) -> &[usize] {
        &self.assigned
    }

    pub fn ids(&self) -> Option<&[String]> {
        self.ids.as_deref()
    }

    pub fn len(&self) -> usize {
        self.assigned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assigned.is_empty()
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.assigned
            .iter()
            .map(|&j| {
                let mut row = vec![0u8; self.causes.len()];
                row[j] = 1;
                row
            })
            .collect()
    }
}

/// Specific classifier label to broad cause, for one algorithm and age group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseDictionary {
    pub algorithm: String,
    pub age_group: AgeGroup,
    causes: CauseSet,
    /// Normalized specific label to broad cause index.
    map: BTreeMap<String, usize>,
}

const BUILTIN_DICTIONARIES: [(&str, AgeGroup, &str); 6] = [
    ("eava", AgeGroup::Neonate, include_str!("../data/dictionaries/eava_neonate.txt")),
    ("eava", AgeGroup::Child, include_str!("../data/dictionaries/eava_child.txt")),
    ("insilicova", AgeGroup::Neonate, include_str!("../data/dictionaries/insilicova_neonate.txt")),
    ("insilicova", AgeGroup::Child, include_str!("../data/dictionaries/insilicova_child.txt")),
    ("interva", AgeGroup::Neonate, include_str!("../data/dictionaries/interva_neonate.txt")),
    ("interva", AgeGroup::Child, include_str!("../data/dictionaries/interva_child.txt")),
];

impl CauseDictionary {
    pub fn from_pairs<S: AsRef<str>, T: AsRef<str>>(
        algorithm: &str,
        causes: CauseSet,
        pairs: &[(S, T)],
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (specific, broad) in pairs {
            let (specific, broad) = (specific.as_ref(), broad.as_ref());
            let target = causes.index_of(broad).ok_or_else(|| {
                Error::input(format!(
                    "dictionary target `{broad}` (for `{specific}`) is not a {} cause",
                    causes.age_group()
                ))
            })?;
            let key = normalize_label(specific);
            if key.is_empty() {
                return Err(Error::input("dictionary contains an empty label"));
            }
            if let Some(prev) = map.insert(key, target) {
                if prev != target {
                    return Err(Error::input(format!(
                        "label `{specific}` is mapped to two different broad causes"
                    )));
                }
            }
        }
        Ok(CauseDictionary {
            algorithm: algorithm.to_string(),
            age_group: causes.age_group(),
            causes,
            map,
        })
    }

    /// Parses `specific = broad` lines; `#` starts a comment.
    pub fn parse(text: &str, algorithm: &str, causes: CauseSet) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (a, b) = line.split_once('=').ok_or_else(|| {
                Error::input(format!("dictionary line {}: expected `specific = broad`", n + 1))
            })?;
            pairs.push((a.trim().to_string(), b.trim().to_string()));
        }
        Self::from_pairs(algorithm, causes, &pairs)
    }

    /// Dictionary shipped with the library for a known algorithm.
    pub fn builtin(algorithm: &str, age_group: AgeGroup) -> Result<Self> {
        let key = normalize_label(algorithm);
        BUILTIN_DICTIONARIES
            .iter()
            .find(|(a, g, _)| *a == key && *g == age_group)
            .map(|(a, g, text)| Self::parse(text, a, CauseSet::canonical(*g)))
            .unwrap_or_else(|| {
                Err(Error::input(format!(
                    "no built-in dictionary for algorithm `{algorithm}` and age group {age_group}"
                )))
            })
    }

    /// Broad causes mapped to themselves.
    pub fn identity(algorithm: &str, causes: CauseSet) -> Self {
        let pairs: Vec<(String, String)> =
            causes.labels().iter().map(|l| (l.clone(), l.clone())).collect();
        Self::from_pairs(algorithm, causes, &pairs).expect("identity dictionary is valid")
    }

    pub fn causes(&self) -> &CauseSet {
        &self.causes
    }

    pub fn lookup(&self, label: &str) -> Option<usize> {
        self.map.get(&normalize_label(label)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Study cause label to one or more CHAMPS broad causes. Several CHAMPS causes
/// under one study cause are merged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCauseMap {
    champs: CauseSet,
    entries: Vec<(String, Vec<usize>)>,
}

impl StudyCauseMap {
    pub fn new<S: AsRef<str>, T: AsRef<str>>(champs: CauseSet, entries: &[(S, Vec<T>)]) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(entries.len());
        for (study, targets) in entries {
            let study = study.as_ref().trim().to_string();
            if !seen.insert(normalize_label(&study)) {
                return Err(Error::input(format!("study cause `{study}` is mapped twice")));
            }
            if targets.is_empty() {
                return Err(Error::input(format!("study cause `{study}` has no CHAMPS cause")));
            }
            let mut idx = Vec::with_capacity(targets.len());
            for t in targets {
                let i = champs.index_of(t.as_ref()).ok_or_else(|| {
                    Error::input(format!(
                        "`{}` (for study cause `{study}`) is not a CHAMPS {} cause",
                        t.as_ref(),
                        champs.age_group()
                    ))
                })?;
                if !idx.contains(&i) {
                    idx.push(i);
                }
            }
            out.push((study, idx));
        }
        Ok(StudyCauseMap { champs, entries: out })
    }

    /// One-to-one form: each study cause maps to a single CHAMPS cause.
    pub fn from_pairs<S: AsRef<str>, T: AsRef<str>>(champs: CauseSet, pairs: &[(S, T)]) -> Result<Self> {
        let entries: Vec<(&str, Vec<&str>)> =
            pairs.iter().map(|(s, t)| (s.as_ref(), vec![t.as_ref()])).collect();
        Self::new(champs, &entries)
    }

    /// Identity map of the CHAMPS causes onto themselves.
    pub fn identity(champs: CauseSet) -> Self {
        let entries = champs
            .labels()
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), vec![i]))
            .collect();
        StudyCauseMap { champs, entries }
    }

    pub fn champs(&self) -> &CauseSet {
        &self.champs
    }

    pub fn study_causes(&self) -> Vec<&str> {
        self.entries.iter().map(|(s, _)| s.as_str()).collect()
    }

    /// CHAMPS cause indices for a study cause.
    pub fn targets(&self, study: &str) -> Option<&[usize]> {
        let key = normalize_label(study);
        self.entries
            .iter()
            .find(|(s, _)| normalize_label(s) == key)
            .map(|(_, t)| t.as_slice())
    }
}

/// Maps every record to its broad cause, keeping input order.
pub fn map_cause_labels(records: &TopCauseRecords, dict: &CauseDictionary) -> Result<BinaryAssignment> {
    if records.is_empty() {
        return Err(Error::input("no records to map"));
    }
    let mut assigned = Vec::with_capacity(records.len());
    let mut unmapped: Vec<String> = Vec::new();
    for (_, label) in records.records() {
        match dict.lookup(label) {
            Some(j) => assigned.push(j),
            None => {
                if !unmapped.contains(label) {
                    unmapped.push(label.clone());
                }
            }
        }
    }
    if !unmapped.is_empty() {
        return Err(Error::UnmappedCause { labels: unmapped });
    }
    let ids = records.records().iter().map(|(id, _)| id.clone()).collect();
    BinaryAssignment::from_indices(dict.causes().clone(), assigned, Some(ids))
}

/// Column sums of the indicator matrix.
pub fn binary_to_counts(b: &BinaryAssignment) -> Vec<u64> {
    let mut counts = vec![0u64; b.causes().len()];
    for &j in b.assigned() {
        counts[j] += 1;
    }
    counts
}

/// Study-level misclassification input built from a CHAMPS estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMissmat {
    pub spec: MissmatSpec,
    /// Set when a Dirichlet input was aggregated, which is not exact.
    pub approximate: bool,
}

struct Aggregation {
    /// CHAMPS causes behind each observed study cause.
    groups: Vec<Vec<usize>>,
    weights: Vec<f64>,
}

impl Aggregation {
    /// Column sum over G(t), then weighted row average over G(s).
    fn apply(&self, m: &Matrix) -> Result<Matrix> {
        let k = self.groups.len();
        let mut out = Matrix::zeros(k);
        for (s, rows) in self.groups.iter().enumerate() {
            let total: f64 = rows.iter().map(|&c| self.weights[c]).sum();
            if !(total > 0.0) {
                return Err(Error::RowDegenerate { row: s });
            }
            for (t, cols) in self.groups.iter().enumerate() {
                let v: f64 = rows
                    .iter()
                    .map(|&r| self.weights[r] / total * cols.iter().map(|&c| m.get(r, c)).sum::<f64>())
                    .sum();
                out.set(s, t, v);
            }
        }
        Ok(out)
    }

    fn apply_stochastic(&self, m: &MissMat, causes: &CauseSet) -> Result<MissMat> {
        let mut out = self.apply(m.matrix())?;
        for s in 0..out.dim() {
            let row = out.row_mut(s);
            let total: f64 = row.iter().sum();
            if !(total > 0.0) {
                return Err(Error::RowDegenerate { row: s });
            }
            row.iter_mut().for_each(|v| *v /= total);
        }
        MissMat::new(causes.clone(), out)
    }
}

/// Converts a CHAMPS-cause matrix to the observed study causes: mapped columns
/// are summed, merged rows are averaged with `row_weights` (uniform by default),
/// and rows are renormalized over the observed columns.
pub fn build_study_missmat<S: AsRef<str>>(
    champs: &MissmatSpec,
    map: &StudyCauseMap,
    observed: &[S],
    row_weights: Option<&SimplexVec>,
) -> Result<StudyMissmat> {
    champs.validate()?;
    if champs.causes() != map.champs() {
        return Err(Error::input(format!(
            "misclassification matrix causes [{}] differ from the study map's CHAMPS causes [{}]",
            champs.causes().labels().join(", "),
            map.champs().labels().join(", ")
        )));
    }
    let c = map.champs().len();
    let mut missing = Vec::new();
    let mut groups = Vec::with_capacity(observed.len());
    for s in observed {
        match map.targets(s.as_ref()) {
            Some(t) => groups.push(t.to_vec()),
            None => missing.push(s.as_ref().to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::UnmappedCause { labels: missing });
    }
    let labels: Vec<String> = observed.iter().map(|s| s.as_ref().trim().to_string()).collect();
    let causes = CauseSet::new(labels, AgeGroup::Custom)?;
    let weights = match row_weights {
        Some(w) if w.len() != c => {
            return Err(Error::DimensionMismatch {
                context: "row weights".into(),
                expected: c,
                found: w.len(),
            })
        }
        Some(w) => w.values().to_vec(),
        None => vec![1.0; c],
    };
    let agg = Aggregation { groups, weights };
    Ok(match champs {
        MissmatSpec::Fixed { matrix } => StudyMissmat {
            spec: MissmatSpec::Fixed {
                matrix: agg.apply_stochastic(matrix, &causes)?,
            },
            approximate: false,
        },
        MissmatSpec::Samples { draws } => StudyMissmat {
            spec: MissmatSpec::Samples {
                draws: draws
                    .iter()
                    .map(|d| agg.apply_stochastic(d, &causes))
                    .collect::<Result<_>>()?,
            },
            approximate: false,
        },
        MissmatSpec::Prior { rows } => StudyMissmat {
            spec: MissmatSpec::Prior {
                rows: DirichletRows::new(causes, agg.apply(rows.scale())?)?,
            },
            approximate: true,
        },
    })
}
