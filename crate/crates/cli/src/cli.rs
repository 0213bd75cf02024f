//! Subcommands and exit-code handling.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use vacalib_core::calibration::{calibrate, CalibConfig, DonotcalibType, LambdaRule};
use vacalib_core::cause_map::{build_study_missmat, CauseDictionary};
use vacalib_core::missmat::{predict_new_country, sample_missmat_posterior, FitConfig, Model};
use vacalib_core::simulate::{simulate_labeled_counts, simulate_va};
use vacalib_core::{normalize_label, AgeGroup, CauseSet, MissMat, MissmatSpec, PosteriorDraws, SimplexVec};

use crate::asset::{synthetic_asset, AssetKey, AssetStore, MissmatAsset, MissmatType};
use crate::error::CliError;
use crate::input::{read_labeled_counts, read_va_file, write_counts, write_deaths, write_labeled_counts, parse_studycause_map, InputFormat};
use crate::manifest::{digest_inputs, timestamp, RunManifest, MANIFEST_FILE, MANIFEST_FORMAT};
use crate::plot::{emit_plot, PlotMode};
use crate::{read_json, write_json};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;

/// Algorithm names routed to no misclassification matrix.
const NO_CALIBRATION: [&str; 3] = ["none", "na", "null"];

#[derive(Debug, Parser)]
#[command(name = "vacalib", version, about = "Calibrate cause-of-death fractions for classifier misclassification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Calibrate classifier output against stored misclassification estimates.
    Calibrate(CalibrateArgs),
    /// Estimate misclassification matrices from labeled counts and store them as assets.
    FitMissmat(FitArgs),
    /// Predict the matrix of an unlabeled country from a hierarchical fit.
    PredictCountry(PredictArgs),
    /// Simulate classifier output or labeled counts.
    Simulate(SimulateArgs),
    /// Draw the matrices and CSMFs of a calibration result.
    Plot(PlotArgs),
    /// Show the contents of a stored asset.
    InspectAsset(InspectArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
    /// Write a synthetic asset from a known matrix.
    SyntheticAsset(SyntheticArgs),
}

/// `NAME=VALUE` pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Named {
    pub name: String,
    pub value: String,
}

impl FromStr for Named {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (n, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, found `{s}`"))?;
        let (n, v) = (n.trim(), v.trim());
        if n.is_empty() || v.is_empty() {
            return Err(format!("expected NAME=VALUE, found `{s}`"));
        }
        Ok(Named {
            name: n.to_string(),
            value: v.to_string(),
        })
    }
}

/// Trimmed, non-empty entries of a comma-separated flag.
fn entries(values: &[String]) -> Vec<String> {
    values.iter().map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect()
}

fn abs(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CalibrateArgs {
    /// Classifier output per algorithm, as ALGORITHM=FILE (repeatable).
    #[arg(long = "va-data", required = true)]
    pub va_data: Vec<Named>,
    /// Input format for every file; inferred when omitted.
    #[arg(long)]
    pub format: Option<InputFormat>,
    #[arg(long = "age-group")]
    pub age_group: AgeGroup,
    #[arg(long)]
    pub country: String,
    /// Asset store; defaults to $VACALIB_ASSET_DIR.
    #[arg(long = "asset-dir")]
    pub asset_dir: Option<PathBuf>,
    #[arg(long = "missmat-type", default_value = "prior")]
    pub missmat_type: MissmatType,
    /// Routes an input name to a stored algorithm, as NAME=ALGORITHM; `none` skips calibration.
    #[arg(long = "algo-map")]
    pub algo_map: Vec<Named>,
    /// Study cause to CHAMPS cause map, one `study = champs` per line.
    #[arg(long = "studycause-map")]
    pub studycause_map: Option<PathBuf>,
    #[arg(long, default_value_t = 4.0)]
    pub eta: f64,
    /// Causes never calibrated (comma separated).
    #[arg(long, default_value = "other", value_delimiter = ',')]
    pub donotcalib: Vec<String>,
    #[arg(long = "donotcalib-type", default_value = "learn", value_parser = parse_donotcalib_type)]
    pub donotcalib_type: DonotcalibType,
    #[arg(long = "nocalib-threshold", default_value_t = 0.1)]
    pub nocalib_threshold: f64,
    #[arg(long = "path-correction")]
    pub path_correction: bool,
    #[arg(long = "lambda-grid", default_value_t = 0.01)]
    pub lambda_grid: f64,
    #[arg(long = "lambda-rule", default_value = "smallest", value_parser = parse_lambda_rule)]
    pub lambda_rule: LambdaRule,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub ensemble: bool,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 3000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1500)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Store the raw p draws in result.json.
    #[arg(long = "keep-draws")]
    pub keep_draws: bool,
    /// Also write plots in this mode.
    #[arg(long)]
    pub plot: Option<PlotMode>,
    /// Exit with code 4 when a chain fails the convergence checks.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_donotcalib_type(s: &str) -> Result<DonotcalibType, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "learn" => Ok(DonotcalibType::Learn),
        "fixed" => Ok(DonotcalibType::Fixed),
        other => Err(format!("unknown donotcalib type `{other}` (expected learn or fixed)")),
    }
}

fn parse_lambda_rule(s: &str) -> Result<LambdaRule, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "smallest" => Ok(LambdaRule::Smallest),
        "largest" => Ok(LambdaRule::Largest),
        other => Err(format!("unknown lambda rule `{other}` (expected smallest or largest)")),
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// CSV with columns country,true_cause,assigned_cause,count.
    #[arg(long)]
    pub labeled: PathBuf,
    #[arg(long)]
    pub algorithm: String,
    #[arg(long = "age-group")]
    pub age_group: AgeGroup,
    #[arg(long, default_value = "pooled")]
    pub model: Model,
    /// Country key of a pooled fit; defaults to the only country or `other`.
    #[arg(long)]
    pub country: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 3000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1500)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Do not store raw posterior draws next to the assets.
    #[arg(long = "no-samples")]
    pub no_samples: bool,
    #[arg(long)]
    pub strict: bool,
    /// Asset store to write to.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    /// Draws file written by a hierarchical `fit-missmat`.
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub algorithm: String,
    #[arg(long = "age-group")]
    pub age_group: AgeGroup,
    #[arg(long, default_value = crate::asset::FALLBACK_COUNTRY)]
    pub country: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long = "no-samples")]
    pub no_samples: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// True cause fractions (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub csmf: Vec<String>,
    /// Cause labels; defaults to the canonical causes of --age-group.
    #[arg(long, value_delimiter = ',')]
    pub causes: Option<Vec<String>>,
    #[arg(long = "age-group")]
    pub age_group: Option<AgeGroup>,
    /// Asset file or JSON rows of the misclassification matrix; identity when omitted.
    #[arg(long)]
    pub missmat: Option<PathBuf>,
    /// Number of deaths.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Write labeled counts with this many deaths per true cause instead.
    #[arg(long = "labeled-per-cause")]
    pub labeled_per_cause: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub countries: Option<Vec<String>>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PlotArgs {
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long, default_value = "both")]
    pub mode: PlotMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InspectArgs {
    /// Asset file; alternatively look it up by key.
    #[arg(long)]
    pub asset: Option<PathBuf>,
    #[arg(long = "asset-dir")]
    pub asset_dir: Option<PathBuf>,
    #[arg(long)]
    pub algorithm: Option<String>,
    #[arg(long = "age-group")]
    pub age_group: Option<AgeGroup>,
    #[arg(long)]
    pub country: Option<String>,
    /// Print the asset as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip the input digest check.
    #[arg(long = "no-verify")]
    pub no_verify: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SyntheticArgs {
    /// JSON rows of the matrix.
    #[arg(long)]
    pub missmat: PathBuf,
    #[arg(long)]
    pub algorithm: String,
    #[arg(long = "age-group")]
    pub age_group: AgeGroup,
    #[arg(long)]
    pub country: String,
    /// Dirichlet concentration of the sampled rows.
    #[arg(long, default_value_t = 200.0)]
    pub concentration: f64,
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Calibrate(_) => "calibrate",
            Command::FitMissmat(_) => "fit-missmat",
            Command::PredictCountry(_) => "predict-country",
            Command::Simulate(_) => "simulate",
            Command::Plot(_) => "plot",
            Command::InspectAsset(_) => "inspect-asset",
            Command::Replay(_) => "replay",
            Command::SyntheticAsset(_) => "synthetic-asset",
        }
    }

    fn set_out(&mut self, out: PathBuf) {
        match self {
            Command::Calibrate(a) => a.out = out,
            Command::FitMissmat(a) => a.out = out,
            Command::PredictCountry(a) => a.out = out,
            Command::Simulate(a) => a.out = out,
            Command::Plot(a) => a.out = out,
            Command::SyntheticAsset(a) => a.out = out,
            Command::InspectAsset(_) | Command::Replay(_) => {}
        }
    }

    /// Makes every path absolute so a manifest can be replayed from anywhere.
    fn absolutize(&mut self) {
        match self {
            Command::Calibrate(a) => {
                for v in &mut a.va_data {
                    v.value = abs(Path::new(&v.value)).to_string_lossy().into_owned();
                }
                a.asset_dir = a.asset_dir.as_deref().map(abs);
                a.studycause_map = a.studycause_map.as_deref().map(abs);
                a.out = abs(&a.out);
            }
            Command::FitMissmat(a) => {
                a.labeled = abs(&a.labeled);
                a.out = abs(&a.out);
            }
            Command::PredictCountry(a) => {
                a.draws = abs(&a.draws);
                a.out = abs(&a.out);
            }
            Command::Simulate(a) => {
                a.missmat = a.missmat.as_deref().map(abs);
                a.out = abs(&a.out);
            }
            Command::Plot(a) => {
                a.result = abs(&a.result);
                a.out = abs(&a.out);
            }
            Command::SyntheticAsset(a) => {
                a.missmat = abs(&a.missmat);
                a.out = abs(&a.out);
            }
            Command::InspectAsset(_) | Command::Replay(_) => {}
        }
    }
}

/// What a finished command reports back.
#[derive(Debug, Default)]
struct Outcome {
    flagged: bool,
    strict: bool,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    notes: Vec<String>,
    seed: Option<u64>,
    /// Where to write the manifest; `None` for read-only commands.
    manifest: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<CliError>() {
        Some(CliError::Usage(_)) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Runs a parsed command, writing its manifest; returns the exit code.
pub fn execute(mut command: Command) -> anyhow::Result<i32> {
    if let Command::Replay(args) = &command {
        return replay(args);
    }
    command.absolutize();
    let started = timestamp();
    let outcome = match &command {
        Command::Calibrate(a) => run_calibrate(a)?,
        Command::FitMissmat(a) => run_fit(a)?,
        Command::PredictCountry(a) => run_predict(a)?,
        Command::Simulate(a) => run_simulate(a)?,
        Command::Plot(a) => run_plot(a)?,
        Command::InspectAsset(a) => run_inspect(a)?,
        Command::SyntheticAsset(a) => run_synthetic(a)?,
        Command::Replay(_) => unreachable!("handled above"),
    };
    if let Some(path) = &outcome.manifest {
        let manifest = RunManifest {
            format_version: MANIFEST_FORMAT.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.name().into(),
            invocation: serde_json::to_value(&command)?,
            seed: outcome.seed,
            inputs: digest_inputs(&outcome.inputs)?,
            outputs: outcome.outputs.clone(),
            notes: outcome.notes.clone(),
            started,
            finished: timestamp(),
        };
        write_json(path, &manifest)?;
    }
    if outcome.flagged {
        eprintln!("warning: convergence checks failed (R-hat above 1.05 or effective sample size below 100 per chain)");
        if outcome.strict {
            return Ok(EXIT_CONVERGENCE);
        }
    }
    Ok(EXIT_OK)
}

fn replay(args: &ReplayArgs) -> anyhow::Result<i32> {
    let manifest = RunManifest::read(&args.manifest)?;
    if !args.no_verify {
        manifest.verify_inputs()?;
    }
    let mut command: Command = serde_json::from_value(manifest.invocation.clone())
        .with_context(|| format!("{}: unreadable invocation", args.manifest.display()))?;
    if let Some(out) = &args.out {
        command.set_out(abs(out));
    }
    execute(command)
}

fn lookup<'a>(map: &'a [Named], name: &str) -> Option<&'a str> {
    let key = normalize_label(name);
    map.iter().find(|n| normalize_label(&n.name) == key).map(|n| n.value.as_str())
}

fn canonical(age_group: AgeGroup) -> Result<CauseSet, CliError> {
    if age_group == AgeGroup::Custom {
        return Err(CliError::usage("--age-group must be neonate or child"));
    }
    Ok(CauseSet::canonical(age_group))
}

fn dictionary(algorithm: &str, age_group: AgeGroup) -> Result<CauseDictionary, CliError> {
    Ok(CauseDictionary::builtin(algorithm, age_group).unwrap_or_else(|_| CauseDictionary::identity(algorithm, canonical(age_group).expect("checked by caller"))))
}

fn run_calibrate(a: &CalibrateArgs) -> anyhow::Result<Outcome> {
    let champs = canonical(a.age_group)?;
    let store = AssetStore::resolve(a.asset_dir.as_deref())?;
    let study_map = a
        .studycause_map
        .as_deref()
        .map(|p| parse_studycause_map(p, &champs))
        .transpose()?;
    let mut outcome = Outcome {
        strict: a.strict,
        seed: Some(a.seed),
        manifest: Some(a.out.join(MANIFEST_FILE)),
        ..Outcome::default()
    };
    if let Some(p) = &a.studycause_map {
        outcome.inputs.push(p.clone());
    }

    let mut raws = Vec::new();
    for v in &a.va_data {
        let path = PathBuf::from(&v.value);
        raws.push((v.name.clone(), read_va_file(&path, a.format)?, path.clone()));
        outcome.inputs.push(path);
    }
    let observed = match &study_map {
        Some(_) => {
            let first = raws[0].1.observed_labels();
            for (name, raw, _) in &raws[1..] {
                let labels = raw.observed_labels();
                let same = labels.len() == first.len()
                    && labels.iter().zip(&first).all(|(x, y)| normalize_label(x) == normalize_label(y));
                if !same {
                    return Err(CliError::usage(format!(
                        "`{name}` observes different study causes than `{}`",
                        raws[0].0
                    ))
                    .into());
                }
            }
            Some(first)
        }
        None => None,
    };

    let mut cfg = CalibConfig {
        eta: a.eta,
        donotcalib: entries(&a.donotcalib),
        donotcalib_type: a.donotcalib_type,
        nocalib_threshold: a.nocalib_threshold,
        path_correction: a.path_correction,
        lambda_grid: a.lambda_grid,
        lambda_rule: a.lambda_rule,
        ensemble: a.ensemble,
        chains: a.chains,
        iterations: a.iterations,
        warmup: a.warmup,
        seed: a.seed,
        keep_draws: a.keep_draws,
        ..CalibConfig::default()
    };
    let mut inputs = Vec::new();
    let mut specs: BTreeMap<String, MissmatSpec> = BTreeMap::new();
    for (name, raw, path) in &raws {
        let algorithm = lookup(&a.algo_map, name).unwrap_or(name).to_string();
        let dict = match &observed {
            Some(labels) => CauseDictionary::identity(name, CauseSet::new(labels.clone(), AgeGroup::Custom)?),
            None => dictionary(&algorithm, a.age_group)?,
        };
        inputs.push(raw.to_input(path, name, &dict)?);
        if NO_CALIBRATION.contains(&normalize_label(&algorithm).as_str()) {
            cfg.passthrough.push(name.clone());
            outcome.notes.push(format!("`{name}` is reported uncalibrated"));
            continue;
        }
        let loaded = store.load(&algorithm, a.age_group, &a.country)?;
        if loaded.fallback {
            outcome.notes.push(format!(
                "no {algorithm}/{}/{} asset; used {}",
                a.age_group,
                a.country,
                loaded.asset.key()
            ));
        }
        outcome.inputs.push(loaded.path.clone());
        if a.missmat_type == MissmatType::Samples {
            outcome.inputs.extend(store.samples_path(&loaded.asset));
        }
        let mut spec = store.missmat_spec(&loaded.asset, a.missmat_type)?;
        if let (Some(map), Some(labels)) = (&study_map, &observed) {
            let study = build_study_missmat(&spec, map, labels, None)?;
            if study.approximate {
                outcome.notes.push(format!(
                    "Dirichlet scales for `{name}` were aggregated to study causes; this is an approximation"
                ));
            }
            spec = study.spec;
        }
        specs.insert(name.clone(), spec);
    }

    let result = calibrate(&inputs, &specs, &cfg)?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let result_path = a.out.join("result.json");
    write_json(&result_path, &result)?;
    outcome.outputs.push(result_path);
    if let Some(mode) = a.plot {
        outcome.outputs.extend(emit_plot(&result, mode, &a.out.join("plots"))?);
    }
    for b in result.blocks() {
        println!(
            "{}: calibrated deaths {:?} (uncalibrated {:?})",
            b.name, b.deaths_calib, b.deaths_uncalib
        );
    }
    outcome.flagged = result.is_flagged();
    Ok(outcome)
}

fn run_fit(a: &FitArgs) -> anyhow::Result<Outcome> {
    let dict = {
        canonical(a.age_group)?;
        dictionary(&a.algorithm, a.age_group)?
    };
    let data = read_labeled_counts(&a.labeled, &dict)?;
    let cfg = FitConfig {
        chains: a.chains,
        iterations: a.iterations,
        warmup: a.warmup,
        seed: a.seed,
        ..FitConfig::default()
    };
    let draws = sample_missmat_posterior(&data, a.model, &cfg)?;
    let store = AssetStore::new(&a.out);
    let model = match a.model {
        Model::Pooled => "pooled",
        Model::Hierarchical => "hierarchical",
    };
    let stem = format!("{}__{}__{model}", normalize_label(&a.algorithm), a.age_group);
    let fit_id = format!("{stem}__seed{}", a.seed);
    let mut outcome = Outcome {
        strict: a.strict,
        seed: Some(a.seed),
        inputs: vec![a.labeled.clone()],
        manifest: Some(a.out.join(format!("{stem}.manifest.json"))),
        flagged: draws.is_flagged(),
        ..Outcome::default()
    };
    match a.model {
        Model::Pooled => {
            let country = a.country.clone().unwrap_or_else(|| {
                if data.len() == 1 {
                    data[0].country.clone()
                } else {
                    crate::asset::FALLBACK_COUNTRY.to_string()
                }
            });
            let key = AssetKey::new(&a.algorithm, a.age_group, &country);
            let asset = MissmatAsset::from_draws(&draws, "phi", &key, &fit_id)?;
            let path = store.write(&asset, (!a.no_samples).then_some(&draws))?;
            println!("wrote {}", path.display());
            outcome.outputs.push(path);
        }
        Model::Hierarchical => {
            for m in &data {
                let param = format!("phi_country:{}", m.country);
                let key = AssetKey::new(&a.algorithm, a.age_group, &m.country);
                let asset = MissmatAsset::from_draws(&draws, &param, &key, &fit_id)?;
                let samples = country_samples(&draws, &param)?;
                let path = store.write(&asset, (!a.no_samples).then_some(&samples))?;
                println!("wrote {}", path.display());
                outcome.outputs.push(path);
            }
            let path = a.out.join(format!("{stem}.draws.json"));
            write_json(&path, &draws)?;
            println!("wrote {}", path.display());
            outcome.outputs.push(path);
        }
    }
    Ok(outcome)
}

/// Archive holding only one country's matrix draws, named `phi`.
fn country_samples(draws: &PosteriorDraws, param: &str) -> anyhow::Result<PosteriorDraws> {
    let mut out = PosteriorDraws::new(draws.seed, draws.warmup, draws.n_chains, draws.iterations);
    out.causes = draws.causes.clone();
    out.metadata = draws.metadata.clone();
    out.params.insert("phi".into(), draws.get(param)?.clone());
    Ok(out)
}

fn run_predict(a: &PredictArgs) -> anyhow::Result<Outcome> {
    let draws: PosteriorDraws = read_json(&a.draws)?;
    draws.validate()?;
    let pred = predict_new_country(&draws, a.seed)?;
    let key = AssetKey::new(&a.algorithm, a.age_group, &a.country);
    let fit_id = format!("{}__predicted__seed{}", key.file_stem(), a.seed);
    let asset = MissmatAsset::from_draws(&pred, "phi", &key, &fit_id)?;
    let path = AssetStore::new(&a.out).write(&asset, (!a.no_samples).then_some(&pred))?;
    println!("wrote {}", path.display());
    Ok(Outcome {
        seed: Some(a.seed),
        inputs: vec![a.draws.clone()],
        manifest: Some(a.out.join(format!("{}.manifest.json", key.file_stem()))),
        outputs: vec![path],
        ..Outcome::default()
    })
}

/// A matrix file: an asset (its posterior mean) or JSON rows.
fn read_matrix(path: &Path, causes: &CauseSet) -> anyhow::Result<MissMat> {
    let value: serde_json::Value = read_json(path)?;
    if value.get("postmean").is_some() {
        let asset: MissmatAsset = serde_json::from_value(value).map_err(|e| CliError::json(path, e))?;
        if asset.causes.labels() != causes.labels() {
            return Err(CliError::usage(format!("{}: asset causes differ from the simulated causes", path.display())).into());
        }
        return Ok(asset.postmean);
    }
    let rows: Vec<Vec<f64>> = serde_json::from_value(value).map_err(|e| CliError::json(path, e))?;
    Ok(MissMat::from_rows(causes.clone(), &rows)?)
}

fn run_simulate(a: &SimulateArgs) -> anyhow::Result<Outcome> {
    let causes = match (&a.causes, a.age_group) {
        (Some(labels), _) => CauseSet::custom(&entries(labels))?,
        (None, Some(g)) => canonical(g)?,
        (None, None) => return Err(CliError::usage("give --causes or --age-group").into()),
    };
    let phi = match &a.missmat {
        Some(p) => read_matrix(p, &causes)?,
        None => MissMat::identity(causes.clone()),
    };
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let mut outcome = Outcome {
        seed: Some(a.seed),
        inputs: a.missmat.iter().cloned().collect(),
        manifest: Some(a.out.join(MANIFEST_FILE)),
        ..Outcome::default()
    };
    if let Some(per) = a.labeled_per_cause {
        let countries = a.countries.as_deref().map(entries).unwrap_or_else(|| vec!["country".into()]);
        let data = countries
            .iter()
            .enumerate()
            .map(|(k, c)| simulate_labeled_counts(c, &phi, &vec![per; causes.len()], a.seed.wrapping_add(k as u64)))
            .collect::<vacalib_core::Result<Vec<_>>>()?;
        let path = a.out.join("labeled.csv");
        write_labeled_counts(&path, &data)?;
        outcome.outputs.push(path);
        return Ok(outcome);
    }
    let values = entries(&a.csmf)
        .iter()
        .map(|s| s.parse::<f64>().map_err(|_| CliError::usage(format!("--csmf: `{s}` is not a number"))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != causes.len() {
        return Err(CliError::usage(format!("--csmf has {} values for {} causes", values.len(), causes.len())).into());
    }
    let p = SimplexVec::new(values)?;
    let sim = simulate_va(&p, &phi, a.n, a.seed)?;
    let counts = a.out.join("counts.csv");
    write_counts(&counts, &causes, &sim.counts)?;
    let deaths = a.out.join("deaths.csv");
    write_deaths(&deaths, &causes, &sim.true_causes, &sim.assigned_causes)?;
    outcome.outputs.extend([counts, deaths]);
    Ok(outcome)
}

fn run_plot(a: &PlotArgs) -> anyhow::Result<Outcome> {
    let result: vacalib_core::CalibResult = read_json(&a.result)?;
    let files = emit_plot(&result, a.mode, &a.out)?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(Outcome {
        inputs: vec![a.result.clone()],
        outputs: files,
        manifest: Some(a.out.join(MANIFEST_FILE)),
        ..Outcome::default()
    })
}

fn run_inspect(a: &InspectArgs) -> anyhow::Result<Outcome> {
    let (asset, fallback) = match (&a.asset, &a.algorithm, a.age_group, &a.country) {
        (Some(p), _, _, _) => (AssetStore::read_file(p)?, false),
        (None, Some(alg), Some(g), Some(c)) => {
            let loaded = AssetStore::resolve(a.asset_dir.as_deref())?.load(alg, g, c)?;
            (loaded.asset, loaded.fallback)
        }
        _ => {
            return Err(CliError::usage("give --asset FILE or --algorithm, --age-group and --country").into())
        }
    };
    if a.json {
        println!("{}", serde_json::to_string_pretty(&asset)?);
        return Ok(Outcome::default());
    }
    println!("asset     {}", asset.key());
    if fallback {
        println!("note      requested country not found; this is the combined estimate");
    }
    println!("format    {}", asset.metadata.format_version);
    println!("fit       {}", asset.metadata.fit_id);
    println!("samples   {}", asset.postsamples.as_deref().unwrap_or("none"));
    println!("causes    {}", asset.causes.labels().join(", "));
    println!("posterior mean (rows: true cause)");
    for i in 0..asset.causes.len() {
        let row: Vec<String> = asset.postmean.row(i).iter().map(|v| format!("{v:.3}")).collect();
        println!("  {:<28} {}", asset.causes.label(i), row.join(" "));
    }
    for w in &asset.metadata.warnings {
        println!("warning   {w}");
    }
    Ok(Outcome::default())
}

fn run_synthetic(a: &SyntheticArgs) -> anyhow::Result<Outcome> {
    let causes = canonical(a.age_group)?;
    let phi = read_matrix(&a.missmat, &causes)?;
    let key = AssetKey::new(&a.algorithm, a.age_group, &a.country);
    let (asset, draws) = synthetic_asset(&key, &phi, a.concentration, a.draws, a.seed)?;
    let path = AssetStore::new(&a.out).write(&asset, Some(&draws))?;
    println!("wrote {}", path.display());
    Ok(Outcome {
        seed: Some(a.seed),
        inputs: vec![a.missmat.clone()],
        outputs: vec![path],
        manifest: Some(a.out.join(format!("{}.manifest.json", key.file_stem()))),
        ..Outcome::default()
    })
}
