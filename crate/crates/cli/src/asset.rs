//! Versioned on-disk store of misclassification estimates, one JSON document
//! per (algorithm, age group, country).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use vacalib_core::dist::sample_dirichlet;
use vacalib_core::linalg::Matrix;
use vacalib_core::posterior::dirichlet::approximate_rows;
use vacalib_core::posterior::summary::{summarize, PosteriorSummary, DEFAULT_PROBS};
use vacalib_core::{normalize_label, AgeGroup, CauseSet, DirichletRows, MissMat, MissmatSpec, ParamDraws, PosteriorDraws};

use crate::error::{CliError, Result};
use crate::{read_json, write_json};

pub const ASSET_FORMAT: &str = "vacalib-asset/1";
/// Country key of the combined estimate used when a country has no asset.
pub const FALLBACK_COUNTRY: &str = "other";
/// Environment variable naming the default asset directory.
pub const ASSET_DIR_ENV: &str = "VACALIB_ASSET_DIR";

const SAMPLES_SUFFIX: &str = ".samples.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetMetadata {
    pub format_version: String,
    pub fit_id: String,
    /// Dirichlet approximation quality notes.
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissmatAsset {
    pub algorithm: String,
    pub age_group: AgeGroup,
    pub country: String,
    pub causes: CauseSet,
    pub postmean: MissMat,
    #[serde(rename = "asDirich")]
    pub as_dirich: DirichletRows,
    pub postsumm: PosteriorSummary,
    /// File name of the raw posterior draws, next to the asset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub postsamples: Option<String>,
    pub metadata: AssetMetadata,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AssetKey {
    pub algorithm: String,
    pub age_group: AgeGroup,
    pub country: String,
}

impl AssetKey {
    pub fn new(algorithm: &str, age_group: AgeGroup, country: &str) -> Self {
        AssetKey {
            algorithm: algorithm.to_string(),
            age_group,
            country: country.to_string(),
        }
    }

    fn matches(&self, other: &AssetKey) -> bool {
        self.age_group == other.age_group
            && normalize_label(&self.algorithm) == normalize_label(&other.algorithm)
            && normalize_label(&self.country) == normalize_label(&other.country)
    }

    /// File stem: normalized components joined by `__`.
    pub fn file_stem(&self) -> String {
        format!(
            "{}__{}__{}",
            normalize_label(&self.algorithm),
            self.age_group,
            normalize_label(&self.country)
        )
    }
}

impl fmt::Display for AssetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.algorithm, self.age_group, self.country)
    }
}

/// How a stored estimate enters calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MissmatType {
    Fixed,
    #[default]
    Prior,
    Samples,
}

impl FromStr for MissmatType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixed" | "postmean" => Ok(MissmatType::Fixed),
            "prior" | "dirichlet" => Ok(MissmatType::Prior),
            "samples" => Ok(MissmatType::Samples),
            other => Err(format!("unknown missmat type `{other}` (expected fixed, prior or samples)")),
        }
    }
}

impl MissmatAsset {
    /// Summarizes the matrix parameter `param` of a posterior archive.
    /// Parameters named `phi_country:*` other than `param` are left out.
    pub fn from_draws(
        draws: &PosteriorDraws,
        param: &str,
        key: &AssetKey,
        fit_id: &str,
    ) -> Result<Self> {
        let causes = draws
            .causes
            .clone()
            .ok_or_else(|| CliError::usage("posterior draws carry no cause set"))?;
        let view = matrix_view(draws, param)?;
        let phi = view.get("phi")?;
        let c = causes.len();
        let mut mean = Matrix::from_flat(c, phi.mean())?;
        for i in 0..c {
            let row = mean.row_mut(i);
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        let postmean = MissMat::new(causes.clone(), mean)?;
        let (as_dirich, quality) = approximate_rows(phi, &causes)?;
        let warnings = quality.into_iter().flat_map(|r| r.warnings).collect();
        let postsumm = summarize(&view, &DEFAULT_PROBS)?;
        let mut extra = BTreeMap::new();
        for (k, v) in &draws.metadata {
            if k == "model" || k == "countries" {
                extra.insert(k.clone(), v.clone());
            }
        }
        extra.insert("seed".into(), draws.seed.to_string());
        Ok(MissmatAsset {
            algorithm: key.algorithm.clone(),
            age_group: key.age_group,
            country: key.country.clone(),
            causes,
            postmean,
            as_dirich,
            postsumm,
            postsamples: None,
            metadata: AssetMetadata {
                format_version: ASSET_FORMAT.into(),
                fit_id: fit_id.to_string(),
                warnings,
                extra,
            },
        })
    }

    pub fn key(&self) -> AssetKey {
        AssetKey::new(&self.algorithm, self.age_group, &self.country)
    }

    pub fn validate(&self) -> Result<()> {
        if self.metadata.format_version != ASSET_FORMAT {
            return Err(CliError::usage(format!(
                "asset {} has format `{}`, expected `{ASSET_FORMAT}`",
                self.key(),
                self.metadata.format_version
            )));
        }
        if self.postmean.causes() != &self.causes || self.as_dirich.causes() != &self.causes {
            return Err(CliError::usage(format!(
                "asset {}: components use different cause sets",
                self.key()
            )));
        }
        Ok(())
    }
}

/// Asset whose posterior draws are rows `Dirichlet(concentration * phi_i)`.
/// Used for demos and tests in place of estimates fitted from labeled data.
pub fn synthetic_asset(key: &AssetKey, phi: &MissMat, concentration: f64, draws: usize, seed: u64) -> Result<(MissmatAsset, PosteriorDraws)> {
    if !(concentration > 0.0) || draws < 2 {
        return Err(CliError::usage("synthetic assets need a positive concentration and at least 2 draws"));
    }
    let c = phi.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamDraws::new(vec![c, c], 1, true);
    for _ in 0..draws {
        for i in 0..c {
            let alpha: Vec<f64> = phi.row(i).iter().map(|v| (concentration * v).max(1e-3)).collect();
            p.chains[0].extend(sample_dirichlet(&mut rng, &alpha));
        }
    }
    let mut archive = PosteriorDraws::new(seed, 0, 1, draws);
    archive.causes = Some(phi.causes().clone());
    archive.metadata.insert("model".into(), "synthetic".into());
    archive.params.insert("phi".into(), p);
    let asset = MissmatAsset::from_draws(&archive, "phi", key, &format!("synthetic-{seed}"))?;
    Ok((asset, archive))
}

/// Archive restricted to non-country parameters, with `param` renamed to `phi`.
fn matrix_view(draws: &PosteriorDraws, param: &str) -> Result<PosteriorDraws> {
    let phi = draws.get(param)?.clone();
    let mut view = PosteriorDraws::new(draws.seed, draws.warmup, draws.n_chains, draws.iterations);
    view.causes = draws.causes.clone();
    for (name, p) in &draws.params {
        if name != "phi" && !name.starts_with("phi_country:") {
            view.params.insert(name.clone(), p.clone());
        }
    }
    view.params.insert("phi".into(), phi);
    Ok(view)
}

/// Asset together with how it was found.
#[derive(Debug, Clone)]
pub struct LoadedAsset {
    pub asset: MissmatAsset,
    pub path: PathBuf,
    /// Set when the requested country was missing and the combined entry was used.
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct AssetStore {
    dir: PathBuf,
}

impl AssetStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        AssetStore { dir: dir.into() }
    }

    /// `explicit`, else the directory named by `VACALIB_ASSET_DIR`.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        match explicit {
            Some(p) => Ok(Self::new(p)),
            None => std::env::var_os(ASSET_DIR_ENV)
                .map(Self::new)
                .ok_or_else(|| CliError::usage(format!("--asset-dir not given and {ASSET_DIR_ENV} is not set"))),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes the asset and, if given, its posterior draws as a separate file.
    pub fn write(&self, asset: &MissmatAsset, samples: Option<&PosteriorDraws>) -> Result<PathBuf> {
        asset.validate()?;
        std::fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let stem = asset.key().file_stem();
        let mut asset = asset.clone();
        if let Some(d) = samples {
            let name = format!("{stem}{SAMPLES_SUFFIX}");
            write_json(&self.dir.join(&name), d)?;
            asset.postsamples = Some(name);
        }
        let path = self.dir.join(format!("{stem}.json"));
        write_json(&path, &asset)?;
        Ok(path)
    }

    pub fn read_file(path: &Path) -> Result<MissmatAsset> {
        let asset: MissmatAsset = read_json(path)?;
        asset.validate()?;
        Ok(asset)
    }

    /// Every asset in the store, sorted by key.
    pub fn entries(&self) -> Result<Vec<(AssetKey, PathBuf)>> {
        let rd = std::fs::read_dir(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let mut out = Vec::new();
        for entry in rd {
            let path = entry.map_err(|e| CliError::io(&self.dir, e))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if !name.ends_with(".json") || name.ends_with(SAMPLES_SUFFIX) {
                continue;
            }
            #[derive(Deserialize)]
            struct Header {
                algorithm: String,
                age_group: AgeGroup,
                country: String,
            }
            match read_json::<Header>(&path) {
                Ok(h) => out.push((AssetKey::new(&h.algorithm, h.age_group, &h.country), path)),
                Err(e) => log::debug!("skipping {}: {e}", path.display()),
            }
        }
        out.sort();
        Ok(out)
    }

    /// Exact match on (algorithm, age group, country), else the `other` entry
    /// for the same algorithm and age group.
    pub fn load(&self, algorithm: &str, age_group: AgeGroup, country: &str) -> Result<LoadedAsset> {
        let wanted = AssetKey::new(algorithm, age_group, country);
        let entries = self.entries()?;
        let find = |k: &AssetKey| entries.iter().find(|(e, _)| e.matches(k)).map(|(_, p)| p.clone());
        if let Some(path) = find(&wanted) {
            return Ok(LoadedAsset {
                asset: Self::read_file(&path)?,
                path,
                fallback: false,
            });
        }
        let other = AssetKey::new(algorithm, age_group, FALLBACK_COUNTRY);
        if let Some(path) = find(&other) {
            log::warn!("no asset for {wanted}; using the combined estimate {other}");
            return Ok(LoadedAsset {
                asset: Self::read_file(&path)?,
                path,
                fallback: true,
            });
        }
        Err(CliError::AssetNotFound {
            key: wanted.to_string(),
            available: entries.iter().map(|(k, _)| k.to_string()).collect(),
        })
    }

    pub fn samples_path(&self, asset: &MissmatAsset) -> Option<PathBuf> {
        asset.postsamples.as_ref().map(|n| self.dir.join(n))
    }

    pub fn load_samples(&self, asset: &MissmatAsset) -> Result<PosteriorDraws> {
        let path = self.samples_path(asset).ok_or_else(|| {
            CliError::usage(format!("asset {} has no posterior samples", asset.key()))
        })?;
        let draws: PosteriorDraws = read_json(&path)?;
        draws.validate()?;
        Ok(draws)
    }

    /// The asset in the form requested for calibration.
    pub fn missmat_spec(&self, asset: &MissmatAsset, kind: MissmatType) -> Result<MissmatSpec> {
        Ok(match kind {
            MissmatType::Fixed => MissmatSpec::Fixed {
                matrix: asset.postmean.clone(),
            },
            MissmatType::Prior => MissmatSpec::Prior {
                rows: asset.as_dirich.clone(),
            },
            MissmatType::Samples => {
                let draws = self.load_samples(asset)?;
                let phi = draws.get("phi")?;
                let c = asset.causes.len();
                let mats = phi
                    .iter_draws()
                    .map(|d| {
                        let mut m = Matrix::from_flat(c, d.to_vec())?;
                        for i in 0..c {
                            let row = m.row_mut(i);
                            let s: f64 = row.iter().sum();
                            row.iter_mut().for_each(|v| *v /= s);
                        }
                        MissMat::new(asset.causes.clone(), m)
                    })
                    .collect::<vacalib_core::Result<Vec<_>>>()?;
                MissmatSpec::Samples { draws: mats }
            }
        })
    }
}
