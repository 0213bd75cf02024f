//! Row-wise Dirichlet approximations fitted by moment matching.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::domain::{CauseSet, DirichletRows};
use crate::draws::ParamDraws;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::posterior::summary::quantile_sorted;

/// Scale assigned to components whose sample mean sits on the boundary.
pub const SCALE_FLOOR: f64 = 1e-3;
const MIN_DRAWS: usize = 100;
/// CDF deviation at the 2.5%/97.5% points above which a warning is raised.
const QUALITY_LIMIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletFit {
    pub alpha: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Matches the sample mean exactly and the average marginal variance:
/// `alpha_j = m_j * alpha_0`, `alpha_0 = mean_j[m_j (1 - m_j) / v_j] - 1`.
pub fn moment_match_dirichlet(draws: &[Vec<f64>]) -> Result<DirichletFit> {
    if draws.len() < MIN_DRAWS {
        return Err(Error::input(format!(
            "moment matching needs at least {MIN_DRAWS} draws, found {}",
            draws.len()
        )));
    }
    let k = draws[0].len();
    for (s, d) in draws.iter().enumerate() {
        if d.len() != k {
            return Err(Error::DimensionMismatch {
                context: format!("draw {s}"),
                expected: k,
                found: d.len(),
            });
        }
        let sum: f64 = d.iter().sum();
        if (sum - 1.0).abs() > 1e-8 || d.iter().any(|v| *v < 0.0) {
            return Err(Error::NotSimplex {
                context: format!("draw {s}"),
                reason: format!("entries sum to {sum}"),
            });
        }
    }
    let n = draws.len() as f64;
    let mut mean = vec![0.0; k];
    for d in draws {
        for (m, v) in mean.iter_mut().zip(d) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; k];
    for d in draws {
        for j in 0..k {
            var[j] += (d[j] - mean[j]).powi(2);
        }
    }
    var.iter_mut().for_each(|v| *v /= n - 1.0);
    for j in 0..k {
        if draws.iter().all(|d| d[j] == draws[0][j]) {
            mean[j] = draws[0][j];
            var[j] = 0.0;
        }
    }

    let mut warnings = Vec::new();
    let mut implied = Vec::new();
    for j in 0..k {
        if var[j] > 0.0 {
            implied.push(mean[j] * (1.0 - mean[j]) / var[j]);
        } else if mean[j] > 0.0 && mean[j] < 1.0 {
            return Err(Error::DegenerateRow { component: j });
        } else {
            warnings.push(format!(
                "component {j} has constant value {}; scale floored at {SCALE_FLOOR}",
                mean[j]
            ));
        }
    }
    let alpha = if implied.is_empty() {
        // Point mass on a single component: express it as a strongly peaked Dirichlet.
        mean.iter()
            .map(|m| if *m >= 1.0 { 1.0 / SCALE_FLOOR } else { SCALE_FLOOR })
            .collect()
    } else {
        let alpha0 = implied.iter().sum::<f64>() / implied.len() as f64 - 1.0;
        if !(alpha0 > 0.0) {
            warnings.push(format!(
                "implied concentration {alpha0} is not positive; scales floored"
            ));
        }
        mean.iter()
            .map(|m| (m * alpha0).max(SCALE_FLOOR))
            .collect()
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(DirichletFit { alpha, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowApproximation {
    pub alpha: Vec<f64>,
    /// Per component: max of |F(q_2.5%) - 0.025| and |F(q_97.5%) - 0.975| under
    /// the fitted Beta marginal.
    pub cdf_deviation: Vec<f64>,
    pub warnings: Vec<String>,
}

fn cdf_deviation(values: &mut [f64], a: f64, b: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    if values[0] == values[values.len() - 1] {
        return 0.0;
    }
    let Ok(beta) = Beta::new(a, b) else {
        return f64::NAN;
    };
    let lo = quantile_sorted(values, 0.025);
    let hi = quantile_sorted(values, 0.975);
    (beta.cdf(lo) - 0.025)
        .abs()
        .max((beta.cdf(hi) - 0.975).abs())
}

/// Fits one Dirichlet per row of a matrix-valued parameter and reports the
/// approximation quality of every row.
pub fn approximate_rows(
    param: &ParamDraws,
    causes: &CauseSet,
) -> Result<(DirichletRows, Vec<RowApproximation>)> {
    let c = causes.len();
    if param.shape != [c, c] {
        return Err(Error::input(format!(
            "expected a {c}x{c} matrix parameter, found shape {:?}",
            param.shape
        )));
    }
    let mut scale = Matrix::zeros(c);
    let mut rows = Vec::with_capacity(c);
    for i in 0..c {
        let row_draws: Vec<Vec<f64>> = param
            .iter_draws()
            .map(|d| d[i * c..(i + 1) * c].to_vec())
            .collect();
        let fit = moment_match_dirichlet(&row_draws)?;
        let alpha0: f64 = fit.alpha.iter().sum();
        let mut warnings = fit.warnings;
        let mut dev = Vec::with_capacity(c);
        for j in 0..c {
            let mut vals: Vec<f64> = row_draws.iter().map(|d| d[j]).collect();
            let d = cdf_deviation(&mut vals, fit.alpha[j], alpha0 - fit.alpha[j]);
            if d > QUALITY_LIMIT {
                warnings.push(format!(
                    "row {} ({}), column {}: Dirichlet marginal CDF deviates by {d:.3} at the 95% interval endpoints",
                    i,
                    causes.label(i),
                    causes.label(j)
                ));
            }
            dev.push(d);
        }
        scale.row_mut(i).copy_from_slice(&fit.alpha);
        rows.push(RowApproximation {
            alpha: fit.alpha,
            cdf_deviation: dev,
            warnings,
        });
    }
    Ok((DirichletRows::new(causes.clone(), scale)?, rows))
}
