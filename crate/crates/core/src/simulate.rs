//! Synthetic verbal-autopsy data: true causes drawn from a CSMF and assigned
//! causes drawn from the rows of a misclassification matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{sample_categorical, sample_multinomial};
use crate::domain::{CountMatrix, MissMat, SimplexVec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulatedVa {
    pub true_causes: Vec<usize>,
    pub assigned_causes: Vec<usize>,
    /// Assigned-cause counts.
    pub counts: Vec<u64>,
}

/// `M_r ~ Categorical(p)`, `V_r | M_r = i ~ Categorical(phi_i)`.
pub fn simulate_va(p: &SimplexVec, phi: &MissMat, n: usize, seed: u64) -> Result<SimulatedVa> {
    if n == 0 {
        return Err(Error::input("number of deaths must be at least 1"));
    }
    if p.len() != phi.dim() {
        return Err(Error::DimensionMismatch {
            context: "simulation CSMF".into(),
            expected: phi.dim(),
            found: p.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut true_causes = Vec::with_capacity(n);
    let mut assigned_causes = Vec::with_capacity(n);
    let mut counts = vec![0u64; p.len()];
    for _ in 0..n {
        let m = sample_categorical(&mut rng, p.values());
        let v = sample_categorical(&mut rng, phi.row(m));
        true_causes.push(m);
        assigned_causes.push(v);
        counts[v] += 1;
    }
    Ok(SimulatedVa {
        true_causes,
        assigned_causes,
        counts,
    })
}

/// Labeled counts with `per_cause[i]` deaths of true cause `i`, assigned by
/// the rows of `phi`.
pub fn simulate_labeled_counts(
    country: &str,
    phi: &MissMat,
    per_cause: &[u64],
    seed: u64,
) -> Result<CountMatrix> {
    if per_cause.len() != phi.dim() {
        return Err(Error::DimensionMismatch {
            context: "deaths per cause".into(),
            expected: phi.dim(),
            found: per_cause.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<u64>> = per_cause
        .iter()
        .enumerate()
        .map(|(i, n)| sample_multinomial(&mut rng, *n, phi.row(i)))
        .collect();
    CountMatrix::new(country, phi.causes().clone(), &rows)
}
