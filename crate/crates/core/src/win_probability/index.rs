use serde::{Deserialize, Serialize};

use crate::beliefs::BeliefFunction;
use crate::demand::{ReducedFormParams, StructuralParams};
use crate::error::Result;
use crate::model::ObservableGroup;

/// Employer mean utility split into a signal part and a price part.
pub trait EmployerIndex {
    fn pi(&self) -> f64;
    /// Signed bid coefficient (negative).
    fn price_coef(&self) -> f64;
    /// Everything in the index except the bid term.
    fn signal_index(&self, group: ObservableGroup, signal: f64) -> Result<f64>;
    /// Derivative of `signal_index` in the signal.
    fn signal_index_slope(&self, group: ObservableGroup, signal: f64) -> Result<f64>;

    fn delta(&self, group: ObservableGroup, bid: f64, signal: f64) -> Result<f64> {
        Ok(self.signal_index(group, signal)? + self.price_coef() * bid)
    }
}

impl EmployerIndex for ReducedFormParams {
    fn pi(&self) -> f64 {
        self.pi
    }

    fn price_coef(&self) -> f64 {
        self.alpha_signed
    }

    fn signal_index(&self, group: ObservableGroup, signal: f64) -> Result<f64> {
        self.lambda(group, signal)
    }

    fn signal_index_slope(&self, group: ObservableGroup, _signal: f64) -> Result<f64> {
        self.gamma(group)
    }
}

/// Structural index with employers reading signals through their beliefs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralIndex {
    pub params: StructuralParams,
    pub beliefs: BeliefFunction,
}

impl EmployerIndex for StructuralIndex {
    fn pi(&self) -> f64 {
        self.params.pi
    }

    fn price_coef(&self) -> f64 {
        self.params.alpha_signed
    }

    fn signal_index(&self, group: ObservableGroup, signal: f64) -> Result<f64> {
        Ok(self.params.t(group)? + self.params.beta * self.beliefs.evaluate(signal, group)?)
    }

    fn signal_index_slope(&self, group: ObservableGroup, signal: f64) -> Result<f64> {
        Ok(self.params.beta * self.beliefs.derivative(signal, group)?)
    }
}
