use std::path::{Path, PathBuf};

use proptest::prelude::*;
use vacalib_cli::asset::{synthetic_asset, AssetKey, AssetStore, MissmatType};
use vacalib_cli::input::{parse_va_input, read_va_file, InputFormat};
use vacalib_cli::plot::{emit_plot, PlotMode};
use vacalib_cli::{run_cli, CliError};
use vacalib_core::calibration::{CalibResult, DonotcalibType, ENSEMBLE};
use vacalib_core::cause_map::CauseDictionary;
use vacalib_core::missmat::base_model_matrix;
use vacalib_core::{
    calibrate, AgeGroup, AlgorithmInput, BaseModelParams, CalibConfig, CauseSet, MissMat, MissmatSpec,
    SimplexVec,
};

const COMSA: [u64; 6] = [44, 168, 267, 268, 29, 164];

fn cli(args: &[&str]) -> i32 {
    run_cli(std::iter::once("vacalib").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn neonate_phi() -> MissMat {
    let params = BaseModelParams::new(
        vec![0.7, 0.6, 0.65, 0.75, 0.55, 0.6],
        SimplexVec::new(vec![0.1, 0.25, 0.2, 0.15, 0.1, 0.2]).unwrap(),
    )
    .unwrap();
    base_model_matrix(&params, &CauseSet::neonate()).unwrap()
}

fn store_with(dir: &Path, entries: &[(&str, &str)]) -> PathBuf {
    let store = dir.join("assets");
    for (k, (alg, country)) in entries.iter().enumerate() {
        let key = AssetKey::new(alg, AgeGroup::Neonate, country);
        let (asset, draws) = synthetic_asset(&key, &neonate_phi(), 200.0, 300, k as u64).unwrap();
        AssetStore::new(&store).write(&asset, Some(&draws)).unwrap();
    }
    store
}

fn counts_file(dir: &Path, name: &str, counts: &[u64]) -> PathBuf {
    let p = dir.join(name);
    let body: String = CauseSet::neonate()
        .labels()
        .iter()
        .zip(counts)
        .map(|(l, n)| format!("{l},{n}\n"))
        .collect();
    std::fs::write(&p, format!("cause,count\n{body}")).unwrap();
    p
}

fn read_result(dir: &Path) -> (CalibResult, serde_json::Value) {
    let text = std::fs::read_to_string(dir.join("result.json")).unwrap();
    (serde_json::from_str(&text).unwrap(), serde_json::from_str(&text).unwrap())
}

#[test]
fn calibrate_writes_result_and_manifest() {
    let t = tempfile::tempdir().unwrap();
    let store = store_with(t.path(), &[("eava", "Mozambique")]);
    let counts = counts_file(t.path(), "counts.csv", &COMSA);
    let out = t.path().join("run1");
    let va = format!("eava={}", s(&counts));
    let code = cli(&[
        "calibrate", "--va-data", &va, "--age-group", "neonate", "--country", "Mozambique",
        "--asset-dir", s(&store), "--missmat-type", "prior", "--seed", "7", "--out", s(&out),
    ]);
    assert_eq!(code, 0);
    let (res, json) = read_result(&out);
    let block = &json["algorithms"][0];
    assert!(block.get("p_uncalib").is_some());
    assert!(block["p_calib"].get("mean").is_some());
    assert!(block.get("lambda").is_none());
    assert_eq!(res.algorithms[0].deaths_calib.iter().sum::<u64>(), COMSA.iter().sum::<u64>());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "calibrate");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn three_algorithms_give_an_ensemble_block() {
    let t = tempfile::tempdir().unwrap();
    let store = store_with(t.path(), &[("eava", "other"), ("insilicova", "other"), ("interva", "other")]);
    let mut args: Vec<String> = ["calibrate", "--age-group", "neonate", "--country", "Peru", "--iterations", "1000", "--warmup", "500"]
        .iter()
        .map(|a| a.to_string())
        .collect();
    for (k, alg) in ["eava", "insilicova", "interva"].iter().enumerate() {
        let mut c = COMSA;
        c[k] += 20;
        let f = counts_file(t.path(), &format!("{alg}.csv"), &c);
        args.extend(["--va-data".to_string(), format!("{alg}={}", s(&f))]);
    }
    let out = t.path().join("out");
    args.extend(["--asset-dir".into(), s(&store).into(), "--out".into(), s(&out).into()]);
    assert_eq!(run_cli(std::iter::once("vacalib".to_string()).chain(args)), 0);
    let (res, _) = read_result(&out);
    assert_eq!(res.algorithms.len(), 3);
    let ens = res.ensemble.as_ref().expect("ensemble block");
    assert_eq!(ens.name, ENSEMBLE);
    assert_eq!(ens.missmat_used.len(), 3);
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("used eava/neonate/other"));
}

#[test]
fn study_map_routes_pcva_through_eava() {
    let t = tempfile::tempdir().unwrap();
    let store = store_with(t.path(), &[("eava", "other")]);
    let map = t.path().join("map.txt");
    std::fs::write(
        &map,
        "congenital = congenital_malformation\ndiarrhoea = sepsis_meningitis_inf\nintrapartum = ipre\nother = other\n\
         pneumonia = pneumonia\npreterm = prematurity\nsepsis = sepsis_meningitis_inf\ntetanus = sepsis_meningitis_inf\n",
    )
    .unwrap();
    let data = t.path().join("india.json");
    std::fs::write(
        &data,
        r#"{"intrapartum": 48, "preterm": 139, "congenital": 29, "sepsis": 9, "pneumonia": 38, "diarrhoea": 10, "tetanus": 17, "other": 9}"#,
    )
    .unwrap();
    let out = t.path().join("out");
    let va = format!("PCVA={}", s(&data));
    let code = cli(&[
        "calibrate", "--va-data", &va, "--age-group", "neonate", "--country", "India", "--asset-dir", s(&store),
        "--studycause-map", s(&map), "--algo-map", "PCVA=eava", "--iterations", "1000", "--warmup", "500",
        "--out", s(&out),
    ]);
    assert_eq!(code, 0);
    let (res, _) = read_result(&out);
    let b = res.block("PCVA").unwrap();
    assert_eq!(res.causes.len(), 8);
    assert_eq!(b.deaths_calib.iter().sum::<u64>(), 299);
    assert_eq!(b.missmat_used.len(), 1);
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let store = store_with(t.path(), &[("eava", "Mozambique")]);
    let out = t.path().join("out");
    // Usage errors.
    assert_eq!(cli(&["calibrate", "--age-group", "neonate"]), 2);
    assert_eq!(cli(&["no-such-command"]), 2);
    assert_eq!(cli(&["simulate", "--out", s(&out), "--csmf", "0.5,0.5"]), 2);
    // Data errors.
    let bad = t.path().join("bad.csv");
    std::fs::write(&bad, "cause,count\nipre,-3\n").unwrap();
    let va = format!("eava={}", s(&bad));
    let base = ["--age-group", "neonate", "--country", "Mozambique", "--asset-dir", s(&store), "--out", s(&out)];
    let mut args = vec!["calibrate", "--va-data", &va];
    args.extend(base);
    assert_eq!(cli(&args), 3);
    let counts = counts_file(t.path(), "counts.csv", &COMSA);
    let tariff = format!("tariff={}", s(&counts));
    let mut args = vec!["calibrate", "--va-data", &tariff];
    args.extend(base);
    assert_eq!(cli(&args), 3);
    // A chain this short fails the convergence checks; --strict turns that into exit code 4.
    let va = format!("eava={}", s(&counts));
    let mut args = vec![
        "calibrate", "--va-data", &va, "--missmat-type", "samples", "--iterations", "150", "--warmup", "50",
        "--chains", "2",
    ];
    args.extend(base);
    assert_eq!(cli(&args), 0);
    let (res, _) = read_result(&out);
    assert!(res.is_flagged());
    args.push("--strict");
    assert_eq!(cli(&args), 4);
}

#[test]
fn asset_round_trip_is_bit_equal() {
    let t = tempfile::tempdir().unwrap();
    let key = AssetKey::new("eava", AgeGroup::Neonate, "Mozambique");
    let (asset, draws) = synthetic_asset(&key, &neonate_phi(), 150.0, 250, 3).unwrap();
    let store = AssetStore::new(t.path());
    let path = store.write(&asset, Some(&draws)).unwrap();
    let back = AssetStore::read_file(&path).unwrap();
    assert_eq!(back.postmean, asset.postmean);
    assert_eq!(back.as_dirich, asset.as_dirich);
    assert_eq!(back.postsumm, asset.postsumm);
    assert_eq!(back.causes, asset.causes);
    assert_eq!(store.load_samples(&back).unwrap(), draws);
    for kind in [MissmatType::Fixed, MissmatType::Prior, MissmatType::Samples] {
        let spec = store.missmat_spec(&back, kind).unwrap();
        assert_eq!(spec.dim(), 6);
    }
}

#[test]
fn lookup_falls_back_to_other() {
    let t = tempfile::tempdir().unwrap();
    let store = AssetStore::new(store_with(t.path(), &[("eava", "Mozambique"), ("eava", "other")]));
    let direct = store.load("EAVA", AgeGroup::Neonate, "mozambique").unwrap();
    assert!(!direct.fallback);
    assert_eq!(direct.asset.country, "Mozambique");
    let fallback = store.load("eava", AgeGroup::Neonate, "Peru").unwrap();
    assert!(fallback.fallback);
    assert_eq!(fallback.asset.country, "other");
    match store.load("tariff", AgeGroup::Neonate, "Mozambique") {
        Err(CliError::AssetNotFound { available, .. }) => assert_eq!(available.len(), 2),
        other => panic!("expected AssetNotFound, got {other:?}"),
    }
}

fn identity_result() -> CalibResult {
    let c = CauseSet::neonate();
    let input = AlgorithmInput::from_counts("eava", c.clone(), COMSA.to_vec()).unwrap();
    let specs = [("eava".to_string(), MissmatSpec::Fixed { matrix: MissMat::identity(c) })].into();
    let cfg = CalibConfig {
        donotcalib: vec![],
        donotcalib_type: DonotcalibType::Fixed,
        iterations: 600,
        warmup: 300,
        ..CalibConfig::default()
    };
    calibrate(&[input], &specs, &cfg).unwrap()
}

#[test]
fn plots_cover_every_block() {
    let t = tempfile::tempdir().unwrap();
    let res = identity_result();
    let files = emit_plot(&res, PlotMode::Both, t.path()).unwrap();
    assert_eq!(files.len(), 3);
    let svg = std::fs::read_to_string(t.path().join("eava_missmat.svg")).unwrap();
    assert_eq!(svg.matches(">1.00</text>").count(), 6);
    assert!(!svg.contains("class=\"uncalibrated\""));
    let csmf = std::fs::read_to_string(t.path().join("eava_csmf.svg")).unwrap();
    assert!(csmf.contains("class=\"calibrated\""));
    assert_eq!(emit_plot(&res, PlotMode::Csmf, &t.path().join("c")).unwrap().len(), 2);
}

#[test]
fn plot_data_reloads_to_result_values() {
    let t = tempfile::tempdir().unwrap();
    let res = identity_result();
    let text = serde_json::to_string(&res).unwrap();
    let res: CalibResult = serde_json::from_str(&text).unwrap();
    emit_plot(&res, PlotMode::Both, t.path()).unwrap();
    let b = res.block("eava").unwrap();
    let mut rdr = csv::Reader::from_path(t.path().join("eava_plot_data.csv")).unwrap();
    let mut seen = 0;
    for row in rdr.records() {
        let row = row.unwrap();
        let num = |k: usize| row[k].parse::<f64>().unwrap();
        let j = res.causes.index_of(&row[1]).unwrap();
        match &row[0] {
            "csmf_uncalib" => assert_eq!(num(3), b.p_uncalib[j]),
            "csmf_calib" => {
                assert_eq!(num(3), b.p_calib.mean[j]);
                assert_eq!(num(4), b.p_calib.lower[j]);
                assert_eq!(num(5), b.p_calib.upper[j]);
            }
            "missmat" => {
                let k = res.causes.index_of(&row[2]).unwrap();
                assert_eq!(num(3), if j == k { 1.0 } else { 0.0 });
            }
            other => panic!("unexpected panel {other}"),
        }
        seen += 1;
    }
    assert_eq!(seen, 36 + 12);
}

#[test]
fn plot_command_reads_result_json() {
    let t = tempfile::tempdir().unwrap();
    let res = identity_result();
    let path = t.path().join("result.json");
    std::fs::write(&path, serde_json::to_string(&res).unwrap()).unwrap();
    let out = t.path().join("plots");
    assert_eq!(cli(&["plot", "--result", s(&path), "--mode", "missmat", "--out", s(&out)]), 0);
    assert!(out.join("eava_missmat.svg").exists());
    assert!(!out.join("eava_csmf.svg").exists());
}

#[test]
fn replay_reproduces_and_checks_digests() {
    let t = tempfile::tempdir().unwrap();
    let store = store_with(t.path(), &[("eava", "other")]);
    let counts = counts_file(t.path(), "counts.csv", &COMSA);
    let out = t.path().join("a");
    let va = format!("eava={}", s(&counts));
    let code = cli(&[
        "calibrate", "--va-data", &va, "--age-group", "neonate", "--country", "Kenya", "--asset-dir", s(&store),
        "--iterations", "800", "--warmup", "400", "--plot", "both", "--out", s(&out),
    ]);
    assert_eq!(code, 0);
    let manifest = out.join("manifest.json");
    let again = t.path().join("b");
    assert_eq!(cli(&["replay", "--manifest", s(&manifest), "--out", s(&again)]), 0);
    for f in ["result.json", "plots/eava_missmat.svg", "plots/eava_plot_data.csv"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
    std::fs::write(&counts, "cause,count\nipre,1\n").unwrap();
    assert_eq!(cli(&["replay", "--manifest", s(&manifest), "--out", s(&again)]), 3);
}

#[test]
fn simulate_fit_predict_and_inspect() {
    let t = tempfile::tempdir().unwrap();
    let dir = t.path();
    let sim = dir.join("sim");
    assert_eq!(cli(&["simulate", "--csmf", "0.3,0.7", "--causes", "a,b", "--n", "500", "--seed", "3", "--out", s(&sim)]), 0);
    let deaths = std::fs::read_to_string(sim.join("deaths.csv")).unwrap();
    assert_eq!(deaths.lines().count(), 501);
    for line in deaths.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1], f[2], "identity matrix must reproduce true causes");
    }
    let phi = dir.join("phi.json");
    std::fs::write(&phi, serde_json::to_string(&neonate_phi().to_rows()).unwrap()).unwrap();
    let lab = dir.join("lab");
    assert_eq!(
        cli(&[
            "simulate", "--age-group", "neonate", "--missmat", s(&phi), "--labeled-per-cause", "60",
            "--countries", "Kenya,Mali,Peru", "--seed", "5", "--out", s(&lab),
        ]),
        0
    );
    let labeled = lab.join("labeled.csv");
    let store = dir.join("store");
    let fit = |model: &str| {
        cli(&[
            "fit-missmat", "--labeled", s(&labeled), "--algorithm", "eava", "--age-group", "neonate", "--model", model,
            "--chains", "2", "--iterations", "600", "--warmup", "300", "--out", s(&store),
        ])
    };
    assert_eq!(fit("pooled"), 0);
    assert_eq!(fit("hierarchical"), 0);
    let st = AssetStore::new(&store);
    assert!(!st.load("eava", AgeGroup::Neonate, "Kenya").unwrap().fallback);
    let draws = store.join("eava__neonate__hierarchical.draws.json");
    assert_eq!(
        cli(&["predict-country", "--draws", s(&draws), "--algorithm", "eava", "--age-group", "neonate", "--out", s(&store)]),
        0
    );
    let other = st.load("eava", AgeGroup::Neonate, "Chad").unwrap();
    assert!(other.fallback);
    assert_eq!(other.asset.causes, CauseSet::neonate());
    assert_eq!(cli(&["inspect-asset", "--asset", s(&other.path)]), 0);
    assert_eq!(
        cli(&["inspect-asset", "--asset-dir", s(&store), "--algorithm", "eava", "--age-group", "neonate", "--country", "Mali", "--json"]),
        0
    );
    assert_eq!(cli(&["inspect-asset", "--asset-dir", s(&store), "--algorithm", "eava"]), 2);
}

#[test]
fn synthetic_asset_command() {
    let t = tempfile::tempdir().unwrap();
    let phi = t.path().join("phi.json");
    std::fs::write(&phi, serde_json::to_string(&neonate_phi().to_rows()).unwrap()).unwrap();
    let store = t.path().join("store");
    let code = cli(&[
        "synthetic-asset", "--missmat", s(&phi), "--algorithm", "eava", "--age-group", "neonate", "--country",
        "other", "--draws", "200", "--out", s(&store),
    ]);
    assert_eq!(code, 0);
    let a = AssetStore::new(&store).load("eava", AgeGroup::Neonate, "other").unwrap().asset;
    for (x, y) in a.postmean.to_rows().concat().iter().zip(neonate_phi().to_rows().concat()) {
        assert!((x - y).abs() < 0.03);
    }
}

#[test]
fn tibble_and_binary_inputs_agree() {
    let t = tempfile::tempdir().unwrap();
    let dict = CauseDictionary::identity("eava", CauseSet::neonate());
    let ids = t.path().join("ids.csv");
    std::fs::write(&ids, "ID,cause\n11224,sepsis_meningitis_inf\n13674,ipre\n3868,pneumonia\n").unwrap();
    let bin = t.path().join("bin.csv");
    let header = CauseSet::neonate().labels().join(",");
    std::fs::write(&bin, format!("id,{header}\n11224,0,0,1,0,0,0\n13674,0,0,0,1,0,0\n3868,0,1,0,0,0,0\n")).unwrap();
    let a = parse_va_input(&ids, "eava", None, &dict).unwrap();
    let b = parse_va_input(&bin, "eava", Some(InputFormat::Binary), &dict).unwrap();
    assert_eq!(a.counts(), b.counts());
    assert_eq!(a.total(), 3);
    std::fs::write(&ids, "ID,cause\n1,ipre\n2,malaria\n").unwrap();
    let err = parse_va_input(&ids, "eava", None, &dict).unwrap_err().to_string();
    assert!(err.contains("line 3") && err.contains("malaria"), "{err}");
}

fn fragment() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("cause".to_string()),
        Just("count".to_string()),
        Just("id".to_string()),
        Just("ipre".to_string()),
        Just("other".to_string()),
        Just("NA".to_string()),
        Just("-1".to_string()),
        Just("1.5".to_string()),
        Just("\"".to_string()),
        "[0-9]{1,3}",
        "[a-z_]{0,8}",
        "[ -~]{0,6}",
    ]
}

fn malformed_csv() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::collection::vec(fragment(), 0..5), 0..6)
        .prop_map(|rows| rows.iter().map(|r| r.join(",")).collect::<Vec<_>>().join("\n"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn parsers_never_panic_and_name_a_location(text in malformed_csv(), fmt in 0usize..4) {
        let t = tempfile::tempdir().unwrap();
        let path = t.path().join("in.csv");
        std::fs::write(&path, &text).unwrap();
        let format = [None, Some(InputFormat::IdCause), Some(InputFormat::Binary), Some(InputFormat::Counts)][fmt];
        let dict = CauseDictionary::identity("eava", CauseSet::neonate());
        let outcome = read_va_file(&path, format).and_then(|raw| raw.to_input(&path, "eava", &dict));
        if let Err(e) = outcome {
            let msg = e.to_string();
            prop_assert!(msg.contains("in.csv"), "{msg}");
        }
    }

    #[test]
    fn json_counts_never_panic(text in "[{}\\[\\]\":,a-z0-9 .-]{0,40}") {
        let t = tempfile::tempdir().unwrap();
        let path = t.path().join("in.json");
        std::fs::write(&path, &text).unwrap();
        let dict = CauseDictionary::identity("eava", CauseSet::neonate());
        if let Err(e) = read_va_file(&path, None).and_then(|raw| raw.to_input(&path, "eava", &dict)) {
            prop_assert!(e.to_string().contains("in.json"), "{e}");
        }
    }
}

/// Compares against the files in `tests/golden`; `VACALIB_BLESS=1` rewrites them.
fn check_golden(name: &str, found: &[u8]) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("VACALIB_BLESS").is_some() {
        std::fs::write(&path, found).unwrap();
    }
    let expected = std::fs::read(&path).unwrap();
    assert!(expected == found, "{name} differs from the golden file");
}

#[test]
fn golden_calibration_outputs() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let t = tempfile::tempdir().unwrap();
    let store = t.path().join("assets");
    std::fs::create_dir_all(&store).unwrap();
    std::fs::copy(golden.join("eava__neonate__other.json"), store.join("eava__neonate__other.json")).unwrap();
    let out = t.path().join("out");
    let va = format!("eava={}", s(&golden.join("counts.csv")));
    let code = cli(&[
        "calibrate", "--va-data", &va, "--age-group", "neonate", "--country", "other", "--asset-dir", s(&store),
        "--chains", "2", "--iterations", "600", "--warmup", "300", "--seed", "11", "--plot", "both", "--out", s(&out),
    ]);
    assert_eq!(code, 0);
    check_golden("result.json", &std::fs::read(out.join("result.json")).unwrap());
    check_golden("eava_plot_data.csv", &std::fs::read(out.join("plots/eava_plot_data.csv")).unwrap());
}
