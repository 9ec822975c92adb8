//! Employer choice: logit over the consideration set and an outside option,
//! mixed with exogenous abandonment.
//!
//! Estimation writes the index as `delta = h + alpha_signed * bid`, so the
//! price coefficient is expected to come out negative. `ModelParams::alpha`
//! is its absolute value.

mod index_logit;
mod reduced;
mod structural;

pub use index_logit::{FitOptions, FitReport};
pub use reduced::{fit_reduced_form, reduced_form_loglik, reduced_form_loglik_grad, ReducedFormParams};
pub use structural::{
    attach_beliefs, fit_structural, structural_loglik, structural_loglik_grad, StructuralParams,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ObservableGroup;

/// One considered application as seen by the employer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceOption {
    pub group: ObservableGroup,
    pub bid: f64,
    pub signal: f64,
    /// Expected ability given the signal, filled in for the structural stage.
    pub belief: Option<f64>,
}

/// A job's considered applications and the realized choice (`None` for the
/// outside option, which also covers abandonment).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceJob {
    pub options: Vec<ChoiceOption>,
    pub chosen: Option<usize>,
}

impl ChoiceJob {
    pub fn new(options: Vec<ChoiceOption>, chosen: Option<usize>) -> Result<Self> {
        if let Some(j) = chosen {
            if j >= options.len() {
                return Err(Error::input(format!(
                    "chosen option {j} is outside a consideration set of {}",
                    options.len()
                )));
            }
        }
        Ok(Self { options, chosen })
    }
}

/// Inside probabilities and the outside probability for utility indices
/// `deltas` when the employer stays with probability `pi`.
pub fn choice_probabilities(deltas: &[f64], pi: f64) -> (Vec<f64>, f64) {
    let m = deltas.iter().copied().fold(0.0f64, f64::max);
    let base = (-m).exp();
    let w: Vec<f64> = deltas.iter().map(|d| (d - m).exp()).collect();
    let denom = base + w.iter().sum::<f64>();
    let inside: Vec<f64> = w.iter().map(|v| pi * v / denom).collect();
    let outside = pi * base / denom + (1.0 - pi);
    (inside, outside)
}

/// Dollar value of a one-standard-deviation change in a variable with
/// utility coefficient `coef`.
pub fn wtp_per_sd(coef: f64, alpha_signed: f64, sd: f64) -> Result<f64> {
    if alpha_signed == 0.0 || !alpha_signed.is_finite() {
        return Err(Error::domain("price coefficient must be nonzero"));
    }
    Ok(sd * coef / alpha_signed.abs())
}
