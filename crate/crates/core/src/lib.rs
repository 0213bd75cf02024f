//! Estimation of classifier misclassification matrices from labeled data and
//! Bayesian calibration of population-level cause fractions.

pub mod calibration;
pub mod cause_map;
pub mod dist;
pub mod domain;
pub mod draws;
pub mod error;
pub mod linalg;
pub mod missmat;
pub mod posterior;
pub mod simulate;

pub use domain::{
    apply_calibration, normalize_label, normalize_rows, solve_inverse, AgeGroup,
    BaseModelParams, CauseSet, CountMatrix, DirichletRows, MissMat, MissmatSpec, SimplexVec,
};
pub use calibration::{calibrate, AlgorithmInput, CalibConfig, CalibResult};
pub use draws::{ParamDraws, PosteriorDraws};
pub use error::{Error, Result};
