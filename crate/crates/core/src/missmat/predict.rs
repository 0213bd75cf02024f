use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{diag_prior, fill_row, q_prior};
use crate::dist::{sample_beta, sample_dirichlet};
use crate::draws::{ParamDraws, PosteriorDraws};
use crate::error::{Error, Result};

/// Misclassification matrix of an unlabeled country: for every retained draw
/// of a hierarchical fit, sensitivities and relative false negatives are drawn
/// around the homogeneous matrix with concentrations omega_S and omega_R.
pub fn predict_new_country(draws: &PosteriorDraws, seed: u64) -> Result<PosteriorDraws> {
    let phi = draws.get("phi")?;
    let omega_s = draws.get("omega_s")?;
    let omega_r = draws.get("omega_r")?;
    let c = match phi.shape.as_slice() {
        [a, b] if a == b => *a,
        other => {
            return Err(Error::input(format!(
                "expected a square `phi` parameter, found shape {other:?}"
            )))
        }
    };
    let mut out = ParamDraws::new(vec![c, c], draws.n_chains, true);
    for chain in 0..draws.n_chains {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chain as u64);
        let values = &mut out.chains[chain];
        values.reserve(draws.iterations * c * c);
        for it in 0..draws.iterations {
            let m = phi.draw(chain, it);
            let ws = omega_s.draw(chain, it)[0];
            let wr = omega_r.draw(chain, it)[0];
            let mut row = vec![0.0; c];
            for i in 0..c {
                let diag = m[i * c + i];
                let off: Vec<f64> = (0..c).filter(|&j| j != i).map(|j| m[i * c + j]).collect();
                let rest: f64 = off.iter().sum();
                let q: Vec<f64> = if rest > 0.0 {
                    off.iter().map(|v| v / rest).collect()
                } else {
                    vec![1.0 / (c - 1) as f64; c - 1]
                };
                let (a, b) = diag_prior(ws, diag);
                let d = sample_beta(&mut rng, a, b);
                let qn = sample_dirichlet(&mut rng, &q_prior(wr, &q));
                fill_row(&mut row, i, d, &qn);
                values.extend_from_slice(&row);
            }
        }
    }
    let mut pred = PosteriorDraws::new(seed, draws.warmup, draws.n_chains, draws.iterations);
    pred.causes = draws.causes.clone();
    pred.metadata = draws.metadata.clone();
    pred.metadata.insert("prediction".into(), "new_country".into());
    pred.params.insert("phi".into(), out);
    Ok(pred)
}
