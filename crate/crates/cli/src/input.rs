//! Readers for classifier output, labeled counts and cause maps.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::de::{Deserializer, MapAccess, Visitor};
use vacalib_core::calibration::AlgorithmInput;
use vacalib_core::cause_map::{map_cause_labels, BinaryAssignment, CauseDictionary, StudyCauseMap, TopCauseRecords};
use vacalib_core::{normalize_label, CauseSet, CountMatrix};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// Two columns: death id and assigned cause label.
    IdCause,
    /// Optional id column, then one 0/1 column per cause.
    Binary,
    /// `cause,count` rows, a one-row wide table, or a JSON object.
    Counts,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match normalize_label(s).as_str() {
            "id_cause" | "tibble" | "records" => Ok(InputFormat::IdCause),
            "binary" | "binary_matrix" => Ok(InputFormat::Binary),
            "counts" => Ok(InputFormat::Counts),
            other => Err(format!("unknown input format `{other}` (expected id-cause, binary or counts)")),
        }
    }
}

/// A count entry with the line it came from; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountEntry {
    pub line: u64,
    pub label: String,
    pub count: Option<u64>,
}

/// File contents before cause labels are resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum RawInput {
    Records {
        records: TopCauseRecords,
        /// Source line of each record.
        lines: Vec<u64>,
    },
    Binary {
        labels: Vec<String>,
        rows: Vec<(u64, Vec<u8>)>,
        ids: Option<Vec<String>>,
    },
    Counts(Vec<CountEntry>),
}

const COUNT_HEADERS: [&str; 5] = ["count", "counts", "n", "deaths", "value"];
const MISSING: [&str; 4] = ["", "na", "nan", "null"];

fn parse_count(path: &Path, line: u64, field: &str, raw: &str) -> Result<Option<u64>> {
    let t = raw.trim();
    if MISSING.contains(&t.to_ascii_lowercase().as_str()) {
        return Ok(None);
    }
    let v: f64 = t
        .parse()
        .map_err(|_| CliError::parse(path, line, format!("`{field}`: `{t}` is not a count")))?;
    if v < 0.0 {
        return Err(CliError::parse(path, line, format!("`{field}`: negative count {t}")));
    }
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(CliError::parse(path, line, format!("`{field}`: `{t}` is not a whole number")));
    }
    Ok(Some(v as u64))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::parse(path, line, format!("{other:?}")),
    }
}

fn records(path: &Path) -> Result<(Vec<String>, Vec<(u64, Vec<String>)>)> {
    let mut rdr = csv_reader(path)?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok((headers, rows))
}

fn is_id_header(h: &str) -> bool {
    matches!(normalize_label(h).as_str(), "id" | "ids" | "death_id")
}

/// Reads a classifier output file; the format is inferred when not given.
pub fn read_va_file(path: &Path, format: Option<InputFormat>) -> Result<RawInput> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        if matches!(format, Some(f) if f != InputFormat::Counts) {
            return Err(CliError::usage(format!("{}: JSON input must hold counts", path.display())));
        }
        return read_json_counts(path);
    }
    let (headers, rows) = records(path)?;
    if rows.is_empty() {
        return Err(CliError::parse(path, 1, "no data rows"));
    }
    let long_counts = headers.len() == 2 && COUNT_HEADERS.contains(&normalize_label(&headers[1]).as_str());
    let format = format.unwrap_or(if long_counts {
        InputFormat::Counts
    } else if headers.len() == 2 {
        InputFormat::IdCause
    } else {
        InputFormat::Binary
    });
    match format {
        InputFormat::Counts if long_counts => rows
            .iter()
            .map(|(line, r)| {
                Ok(CountEntry {
                    line: *line,
                    label: r[0].clone(),
                    count: parse_count(path, *line, &r[0], &r[1])?,
                })
            })
            .collect::<Result<_>>()
            .map(RawInput::Counts),
        InputFormat::Counts => {
            if rows.len() != 1 {
                return Err(CliError::parse(
                    path,
                    rows[1].0,
                    "wide count tables must have exactly one data row",
                ));
            }
            let (line, r) = &rows[0];
            headers
                .iter()
                .zip(r)
                .map(|(h, v)| {
                    Ok(CountEntry {
                        line: *line,
                        label: h.clone(),
                        count: parse_count(path, *line, h, v)?,
                    })
                })
                .collect::<Result<_>>()
                .map(RawInput::Counts)
        }
        InputFormat::IdCause => {
            if headers.len() != 2 {
                return Err(CliError::parse(path, 1, "id-cause input needs exactly two columns (id, cause)"));
            }
            let mut seen = std::collections::HashMap::new();
            for (line, r) in &rows {
                if r[1].trim().is_empty() {
                    return Err(CliError::parse(path, *line, format!("record `{}` has an empty cause", r[0])));
                }
                if let Some(first) = seen.insert(r[0].as_str(), *line) {
                    return Err(CliError::parse(path, *line, format!("id `{}` already used on line {first}", r[0])));
                }
            }
            let lines = rows.iter().map(|(l, _)| *l).collect();
            let pairs: Vec<(String, String)> = rows.into_iter().map(|(_, r)| (r[0].clone(), r[1].clone())).collect();
            Ok(RawInput::Records {
                records: TopCauseRecords::new(pairs).map_err(|e| CliError::from(e).in_file(path))?,
                lines,
            })
        }
        InputFormat::Binary => {
            let with_id = is_id_header(&headers[0]);
            let labels: Vec<String> = headers.iter().skip(usize::from(with_id)).cloned().collect();
            let mut ids = Vec::new();
            let mut out = Vec::with_capacity(rows.len());
            for (line, r) in rows {
                let mut vals = r.into_iter();
                if with_id {
                    ids.push(vals.next().unwrap_or_default());
                }
                let row = vals
                    .zip(&labels)
                    .map(|(v, h)| match v.as_str() {
                        "0" => Ok(0u8),
                        "1" => Ok(1u8),
                        other => Err(CliError::parse(path, line, format!("`{h}`: expected 0 or 1, found `{other}`"))),
                    })
                    .collect::<Result<Vec<u8>>>()?;
                out.push((line, row));
            }
            Ok(RawInput::Binary {
                labels,
                rows: out,
                ids: with_id.then_some(ids),
            })
        }
    }
}

/// Keeps key order, unlike a map.
struct OrderedCounts(Vec<(String, Option<f64>)>);

impl<'de> serde::Deserialize<'de> for OrderedCounts {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = OrderedCounts;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object of cause counts")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<OrderedCounts, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Option<f64>>()? {
                    out.push((k, v));
                }
                Ok(OrderedCounts(out))
            }
        }
        d.deserialize_map(V)
    }
}

fn read_json_counts(path: &Path) -> Result<RawInput> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let parsed: OrderedCounts = serde_json::from_str(&text).map_err(|e| CliError::json(path, e))?;
    parsed
        .0
        .into_iter()
        .map(|(label, v)| {
            let count = match v {
                None => None,
                Some(x) => parse_count(path, 1, &label, &x.to_string())?,
            };
            Ok(CountEntry { line: 1, label, count })
        })
        .collect::<Result<_>>()
        .map(RawInput::Counts)
}

impl RawInput {
    /// Labels with data, in file order; missing counts are left out.
    pub fn observed_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |l: &str| {
            if !out.iter().any(|o| normalize_label(o) == normalize_label(l)) {
                out.push(l.trim().to_string());
            }
        };
        match self {
            RawInput::Records { records, .. } => records.records().iter().for_each(|(_, l)| push(l)),
            RawInput::Binary { labels, .. } => labels.iter().for_each(|l| push(l)),
            RawInput::Counts(entries) => entries.iter().filter(|e| e.count.is_some()).for_each(|e| push(&e.label)),
        }
        out
    }

    /// Resolves labels through `dict` onto its cause set.
    pub fn to_input(&self, path: &Path, algorithm: &str, dict: &CauseDictionary) -> Result<AlgorithmInput> {
        self.resolve(path, algorithm, dict).map_err(|e| e.in_file(path))
    }

    fn resolve(&self, path: &Path, algorithm: &str, dict: &CauseDictionary) -> Result<AlgorithmInput> {
        let causes = dict.causes().clone();
        match self {
            RawInput::Records { records, lines } => {
                for ((_, label), line) in records.records().iter().zip(lines) {
                    if dict.lookup(label).is_none() {
                        return Err(CliError::parse(path, *line, format!("unknown cause `{label}`")));
                    }
                }
                Ok(AlgorithmInput::from_assignment(algorithm, map_cause_labels(records, dict)?)?)
            }
            RawInput::Binary { labels, rows, ids } => {
                let index = labels
                    .iter()
                    .map(|l| {
                        dict.lookup(l)
                            .ok_or_else(|| CliError::parse(path, 1, format!("unknown cause column `{l}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mut assigned = Vec::with_capacity(rows.len());
                for (line, row) in rows {
                    let ones: Vec<usize> = (0..row.len()).filter(|&k| row[k] == 1).collect();
                    if ones.len() != 1 {
                        return Err(CliError::parse(
                            path,
                            *line,
                            format!("expected exactly one 1 per row, found {}", ones.len()),
                        ));
                    }
                    assigned.push(index[ones[0]]);
                }
                let b = BinaryAssignment::from_indices(causes, assigned, ids.clone())?;
                Ok(AlgorithmInput::from_assignment(algorithm, b)?)
            }
            RawInput::Counts(entries) => {
                let mut counts = vec![0u64; causes.len()];
                let mut seen: Vec<String> = Vec::new();
                for e in entries {
                    let key = normalize_label(&e.label);
                    if seen.contains(&key) {
                        return Err(CliError::parse(path, e.line, format!("cause `{}` given twice", e.label)));
                    }
                    seen.push(key);
                    // Unreported causes need not exist in the dictionary.
                    if e.count.is_none() && dict.lookup(&e.label).is_none() {
                        continue;
                    }
                    let j = dict
                        .lookup(&e.label)
                        .ok_or_else(|| CliError::parse(path, e.line, format!("unknown cause `{}`", e.label)))?;
                    counts[j] += e.count.unwrap_or(0);
                }
                Ok(AlgorithmInput::from_counts(algorithm, causes, counts)?)
            }
        }
    }
}

/// Reads a file and maps it onto `dict`'s causes.
pub fn parse_va_input(
    path: &Path,
    algorithm: &str,
    format: Option<InputFormat>,
    dict: &CauseDictionary,
) -> Result<AlgorithmInput> {
    read_va_file(path, format)?.to_input(path, algorithm, dict)
}

/// `study = champs[, champs...]` lines; `#` starts a comment.
pub fn parse_studycause_map(path: &Path, champs: &CauseSet) -> Result<StudyCauseMap> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut entries: Vec<(String, Vec<String>)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (study, targets) = line
            .split_once('=')
            .ok_or_else(|| CliError::parse(path, k as u64 + 1, "expected `study cause = CHAMPS cause`"))?;
        let targets: Vec<String> = targets
            .split(',')
            .map(|t| t.trim().trim_matches('"').to_string())
            .filter(|t| !t.is_empty())
            .collect();
        entries.push((study.trim().trim_matches('"').to_string(), targets));
    }
    StudyCauseMap::new(champs.clone(), &entries).map_err(|e| CliError::from(e).in_file(path))
}

/// `country,true_cause,assigned_cause,count` rows, grouped by country in
/// order of first appearance.
pub fn read_labeled_counts(path: &Path, dict: &CauseDictionary) -> Result<Vec<CountMatrix>> {
    let (headers, rows) = records(path)?;
    let norm: Vec<String> = headers.iter().map(|h| normalize_label(h)).collect();
    if norm != ["country", "true_cause", "assigned_cause", "count"] {
        return Err(CliError::parse(
            path,
            1,
            "expected columns country,true_cause,assigned_cause,count",
        ));
    }
    let causes = dict.causes().clone();
    let mut out: Vec<CountMatrix> = Vec::new();
    for (line, r) in rows {
        let cause = |field: &str, label: &str| {
            dict.lookup(label)
                .ok_or_else(|| CliError::parse(path, line, format!("`{field}`: unknown cause `{label}`")))
        };
        let i = cause("true_cause", &r[1])?;
        let j = cause("assigned_cause", &r[2])?;
        let n = parse_count(path, line, "count", &r[3])?
            .ok_or_else(|| CliError::parse(path, line, "`count` is missing"))?;
        let pos = match out.iter().position(|m| normalize_label(&m.country) == normalize_label(&r[0])) {
            Some(p) => p,
            None => {
                out.push(CountMatrix::zeros(r[0].clone(), causes.clone()));
                out.len() - 1
            }
        };
        out[pos].add(i, j, n);
    }
    if out.is_empty() {
        return Err(CliError::parse(path, 1, "no data rows"));
    }
    Ok(out)
}

pub fn write_labeled_counts(path: &Path, data: &[CountMatrix]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| csv_error(path, e);
    w.write_record(["country", "true_cause", "assigned_cause", "count"]).map_err(io)?;
    for m in data {
        for i in 0..m.dim() {
            for j in 0..m.dim() {
                w.write_record([
                    m.country.as_str(),
                    m.causes.label(i),
                    m.causes.label(j),
                    &m.get(i, j).to_string(),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_counts(path: &Path, causes: &CauseSet, counts: &[u64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| csv_error(path, e);
    w.write_record(["cause", "count"]).map_err(io)?;
    for (j, n) in counts.iter().enumerate() {
        w.write_record([causes.label(j), &n.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `id,true_cause,assigned_cause` per simulated death.
pub fn write_deaths(path: &Path, causes: &CauseSet, truth: &[usize], assigned: &[usize]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| csv_error(path, e);
    w.write_record(["id", "true_cause", "assigned_cause"]).map_err(io)?;
    for (r, (t, a)) in truth.iter().zip(assigned).enumerate() {
        w.write_record([&format!("d{}", r + 1), causes.label(*t), causes.label(*a)])
            .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

/// Writes `text` to `path`, creating parent directories.
pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}
