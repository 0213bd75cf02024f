use std::collections::BTreeMap;

use super::gibbs::{Pattern, PhiModel, Problem};
use super::{
    calibrated_counts, find_spec, fixed_donotcalib, floor_csmf, learn_donotcalib, path_correct_with,
    prepare_missmat, uncalibrated_csmf, AlgorithmData, AlgorithmInput, CalibBlock, CalibConfig,
    CalibResult, CsmfSummary, DonotcalibType, ENSEMBLE,
};
use crate::domain::{normalize_label, CauseSet, MissmatSpec, SimplexVec};
use crate::draws::{ParamDraws, PosteriorDraws};
use crate::error::{Error, Result};
use crate::posterior::diagnostics::{diagnostics, MIN_ITERATIONS};
use crate::posterior::summary::{summarize_values, DEFAULT_PROBS};

/// Algorithm name whose input is reported without calibration.
pub const PASSTHROUGH: &str = "none";

struct Member<'a> {
    input: &'a AlgorithmInput,
    spec: &'a MissmatSpec,
    counts: Vec<u64>,
    q: Vec<f64>,
}

impl Member<'_> {
    fn n(&self) -> u64 {
        self.counts.iter().sum()
    }
}

fn same_labels(a: &CauseSet, b: &CauseSet) -> bool {
    a.len() == b.len()
        && a.labels()
            .iter()
            .zip(b.labels())
            .all(|(x, y)| normalize_label(x) == normalize_label(y))
}

/// Calibrates every algorithm separately and, with two or more calibrated
/// algorithms and `cfg.ensemble`, jointly. `specs` maps algorithm names to
/// misclassification inputs on the full cause set; the algorithm
/// `none` and those listed in `cfg.passthrough` are reported uncalibrated.
pub fn calibrate(
    inputs: &[AlgorithmInput],
    specs: &BTreeMap<String, MissmatSpec>,
    cfg: &CalibConfig,
) -> Result<CalibResult> {
    cfg.validate()?;
    let first = inputs.first().ok_or_else(|| Error::input("no algorithm inputs"))?;
    let causes = first.causes.clone();
    let mut seen = Vec::new();
    for input in inputs {
        let key = normalize_label(&input.algorithm);
        if seen.contains(&key) {
            return Err(Error::input(format!("algorithm `{}` given twice", input.algorithm)));
        }
        seen.push(key);
        if !same_labels(&input.causes, &causes) {
            return Err(Error::input(format!(
                "algorithm `{}` uses a different cause set",
                input.algorithm
            )));
        }
        if input.counts().len() != causes.len() {
            return Err(Error::DimensionMismatch {
                context: format!("counts of `{}`", input.algorithm),
                expected: causes.len(),
                found: input.counts().len(),
            });
        }
    }

    let mut blocks = Vec::new();
    let mut members = Vec::new();
    let mut masks = Vec::new();
    for input in inputs {
        let counts = input.counts();
        let q = uncalibrated_csmf(input)?.into_vec();
        if cfg.is_passthrough(&input.algorithm) {
            blocks.push(passthrough_block(input, counts, q));
            continue;
        }
        let spec = find_spec(specs, &input.algorithm).ok_or_else(|| {
            Error::input(format!(
                "no misclassification matrix for algorithm `{}`",
                input.algorithm
            ))
        })?;
        spec.validate()?;
        if !same_labels(spec.causes(), &causes) {
            return Err(Error::input(format!(
                "misclassification matrix for `{}` does not match the cause set",
                input.algorithm
            )));
        }
        let user = cfg.user_list(&input.algorithm);
        let mask = match cfg.donotcalib_type {
            DonotcalibType::Learn => learn_donotcalib(&spec.mean_matrix(), &user, cfg.nocalib_threshold)?,
            DonotcalibType::Fixed => fixed_donotcalib(&causes, &user)?,
        };
        let member = Member { input, spec, counts, q };
        blocks.push(run_block(&input.algorithm, std::slice::from_ref(&member), &mask, cfg)?);
        members.push(member);
        masks.push(mask);
    }

    let ensemble = if cfg.ensemble && members.len() >= 2 {
        let union: Vec<bool> = (0..causes.len()).map(|j| masks.iter().any(|m| m[j])).collect();
        if union.iter().all(|m| *m) {
            return Err(Error::AllCausesExcluded);
        }
        Some(run_block(ENSEMBLE, &members, &union, cfg)?)
    } else {
        None
    };

    Ok(CalibResult {
        causes,
        config: cfg.clone(),
        algorithms: blocks,
        ensemble,
    })
}

fn passthrough_block(input: &AlgorithmInput, counts: Vec<u64>, q: Vec<f64>) -> CalibBlock {
    let c = q.len();
    CalibBlock {
        name: input.algorithm.clone(),
        algorithms: vec![input.algorithm.clone()],
        n_deaths: counts.iter().sum(),
        p_calib: CsmfSummary {
            mean: q.clone(),
            sd: vec![0.0; c],
            lower: q.clone(),
            median: q.clone(),
            upper: q.clone(),
        },
        p_uncalib: q,
        deaths_calib: counts.clone(),
        deaths_uncalib: counts,
        deaths_calib_by_algorithm: BTreeMap::new(),
        donotcalib: vec![true; c],
        missmat_used: BTreeMap::new(),
        lambda: BTreeMap::new(),
        eta: 0.0,
        p_draws: None,
        diagnostics: None,
        flagged: false,
    }
}

fn restrict(v: &[f64], active: &[usize]) -> Vec<f64> {
    let sub: Vec<f64> = active.iter().map(|&j| v[j]).collect();
    let s: f64 = sub.iter().sum();
    sub.into_iter().map(|x| x / s).collect()
}

fn build_patterns(members: &[Member], position: &[Option<usize>]) -> Vec<Pattern> {
    let id_matched = members.len() > 1
        && members
            .iter()
            .all(|m| matches!(&m.input.data, AlgorithmData::Individual(b) if b.ids().is_some()));
    if id_matched {
        let mut by_id: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
        for (k, m) in members.iter().enumerate() {
            let AlgorithmData::Individual(b) = &m.input.data else { unreachable!() };
            let ids = b.ids().expect("checked above");
            for (id, &cause) in ids.iter().zip(b.assigned()) {
                let entry = by_id.entry(id.as_str()).or_default();
                if let Some(pos) = position[cause] {
                    entry.push((k, pos));
                }
            }
        }
        let mut grouped: BTreeMap<Vec<(usize, usize)>, u64> = BTreeMap::new();
        for obs in by_id.into_values().filter(|o| !o.is_empty()) {
            *grouped.entry(obs).or_default() += 1;
        }
        return grouped
            .into_iter()
            .map(|(obs, count)| Pattern { obs, count })
            .collect();
    }
    let mut out = Vec::new();
    for (k, m) in members.iter().enumerate() {
        for (j, &n) in m.counts.iter().enumerate() {
            if let (Some(pos), true) = (position[j], n > 0) {
                out.push(Pattern {
                    obs: vec![(k, pos)],
                    count: n,
                });
            }
        }
    }
    out
}

fn run_block(name: &str, members: &[Member], mask: &[bool], cfg: &CalibConfig) -> Result<CalibBlock> {
    let c = mask.len();
    let k = members.len() as f64;
    let active: Vec<usize> = (0..c).filter(|&j| !mask[j]).collect();
    let mut position = vec![None; c];
    for (a, &j) in active.iter().enumerate() {
        position[j] = Some(a);
    }

    let q_bar: Vec<f64> = (0..c).map(|j| members.iter().map(|m| m.q[j]).sum::<f64>() / k).collect();
    let q_floor: Vec<f64> = {
        let floored: Vec<Vec<f64>> = members.iter().map(|m| floor_csmf(&m.q, m.n())).collect();
        (0..c).map(|j| floored.iter().map(|f| f[j]).sum::<f64>() / k).collect()
    };

    let mut eta = cfg.eta;
    let mut lambda = BTreeMap::new();
    let mut used = BTreeMap::new();
    let mut phis = Vec::with_capacity(members.len());
    for m in members {
        let mut spec = prepare_missmat(m.spec, mask)?;
        if cfg.path_correction {
            let q_active = SimplexVec::new(restrict(&floor_csmf(&m.q, m.n()), &active))?;
            let (l, corrected) = path_correct_with(&spec.mean_matrix(), &q_active, cfg.lambda_grid, cfg.lambda_rule)?;
            lambda.insert(m.input.algorithm.clone(), l);
            spec = MissmatSpec::Fixed { matrix: corrected };
            eta = 0.0;
        }
        phis.push(PhiModel::from_spec(&spec));
        used.insert(m.input.algorithm.clone(), spec);
    }

    let dim = active.len();
    let target = restrict(&q_floor, &active);
    let prior: Vec<f64> = target.iter().map(|t| 1.0 + dim as f64 * eta * t).collect();
    let problem = Problem {
        dim,
        prior,
        phis,
        patterns: build_patterns(members, &position),
    };
    let chains = problem.sample(cfg.seed, cfg.chains, cfg.warmup, cfg.iterations);

    let masked_mass: f64 = (0..c).filter(|&j| mask[j]).map(|j| q_bar[j]).sum();
    let scale = (1.0 - masked_mass).max(0.0);
    let mut p = ParamDraws::new(vec![c], cfg.chains, true);
    for (chain, draws) in chains.iter().enumerate() {
        let out = &mut p.chains[chain];
        out.reserve(draws.len() / dim * c);
        for d in draws.chunks_exact(dim) {
            for j in 0..c {
                out.push(match position[j] {
                    Some(a) => scale * d[a],
                    None => q_bar[j],
                });
            }
        }
    }

    let summaries = (0..c)
        .map(|j| summarize_values(&p.pooled_component(j), &DEFAULT_PROBS))
        .collect::<Result<Vec<_>>>()?;
    let p_calib = CsmfSummary::from_scalars(&summaries);

    let retained = cfg.iterations - cfg.warmup;
    let mut archive = PosteriorDraws::new(cfg.seed, cfg.warmup, cfg.chains, retained);
    archive.params.insert("p".into(), p.clone());
    let diag = if cfg.chains >= 2 && retained >= MIN_ITERATIONS {
        Some(diagnostics(&archive)?)
    } else {
        None
    };
    let flagged = diag.as_ref().is_some_and(|d| !d.converged);
    if flagged {
        let d = diag.as_ref().expect("flagged implies diagnostics");
        log::warn!(
            "calibration of `{name}` may not have converged (max R-hat {:.3}, min ESS {:.0})",
            d.max_rhat,
            d.min_ess
        );
    }

    let n_total: u64 = members.iter().map(|m| m.n()).sum();
    let deaths_uncalib: Vec<u64> = (0..c).map(|j| members.iter().map(|m| m.counts[j]).sum()).collect();
    let deaths_calib = calibrated_counts(&p_calib.mean, n_total);
    let deaths_calib_by_algorithm = if members.len() > 1 {
        members
            .iter()
            .map(|m| (m.input.algorithm.clone(), calibrated_counts(&p_calib.mean, m.n())))
            .collect()
    } else {
        BTreeMap::new()
    };

    Ok(CalibBlock {
        name: name.to_string(),
        algorithms: members.iter().map(|m| m.input.algorithm.clone()).collect(),
        n_deaths: n_total,
        p_uncalib: q_bar,
        p_calib,
        deaths_uncalib,
        deaths_calib,
        deaths_calib_by_algorithm,
        donotcalib: mask.to_vec(),
        missmat_used: used,
        lambda,
        eta,
        p_draws: cfg.keep_draws.then_some(p),
        diagnostics: diag,
        flagged,
    })
}
