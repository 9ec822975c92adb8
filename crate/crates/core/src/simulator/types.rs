use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupMap, ObservableGroup, WorkerType};
use crate::stats::{quantile_sorted, std_normal_cdf, std_normal_quantile};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Marginal {
    Normal { mean: f64, sd: f64 },
    /// Sorted sample; quantiles interpolate linearly.
    Empirical { sorted: Vec<f64> },
}

impl Marginal {
    pub fn empirical(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("empirical marginal needs finite values"));
        }
        values.sort_by(|a, b| a.total_cmp(b));
        Ok(Marginal::Empirical { sorted: values })
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Marginal::Normal { mean, sd } => mean + sd * std_normal_quantile(u),
            Marginal::Empirical { sorted } => quantile_sorted(sorted, u),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Marginal::Normal { mean, sd } if mean.is_finite() && *sd > 0.0 => Ok(()),
            Marginal::Normal { .. } => Err(Error::param("normal marginal needs a positive sd")),
            Marginal::Empirical { sorted } if !sorted.is_empty() => Ok(()),
            Marginal::Empirical { .. } => Err(Error::param("empty empirical marginal")),
        }
    }
}

/// Joint (cost, ability) law of one group: a Gaussian copula with
/// correlation `rho`, truncated to the quantile band `[q_lo, q_hi]` of each
/// marginal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupTypes {
    pub cost: Marginal,
    pub ability: Marginal,
    pub rho: f64,
    pub q_lo: f64,
    pub q_hi: f64,
}

impl GroupTypes {
    pub fn new(cost: Marginal, ability: Marginal, rho: f64, q_lo: f64, q_hi: f64) -> Result<Self> {
        cost.validate()?;
        ability.validate()?;
        if !(rho > -1.0 && rho < 1.0) {
            return Err(Error::param(format!("copula correlation {rho} outside (-1, 1)")));
        }
        if !(q_lo > 0.0 && q_lo < q_hi && q_hi < 1.0) {
            return Err(Error::param("truncation quantiles need 0 < q_lo < q_hi < 1"));
        }
        Ok(Self { cost, ability, rho, q_lo, q_hi })
    }

    fn squeeze(&self, u: f64) -> f64 {
        self.q_lo + (self.q_hi - self.q_lo) * u
    }

    /// Type at copula uniforms `(u_c, u_a)` in `[0, 1]`.
    pub fn at(&self, u_c: f64, u_a: f64) -> (f64, f64) {
        (self.cost.quantile(self.squeeze(u_c)), self.ability.quantile(self.squeeze(u_a)))
    }

    pub fn cost_support(&self) -> (f64, f64) {
        (self.cost.quantile(self.q_lo), self.cost.quantile(self.q_hi))
    }

    pub fn ability_support(&self) -> (f64, f64) {
        (self.ability.quantile(self.q_lo), self.ability.quantile(self.q_hi))
    }

    /// Mean ability under the truncated marginal, by midpoint quadrature.
    pub fn ability_mean(&self) -> f64 {
        const N: usize = 2000;
        (0..N).map(|i| self.at(0.5, (i as f64 + 0.5) / N as f64).1).sum::<f64>() / N as f64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let z2 = self.rho * z1 + (1.0 - self.rho * self.rho).sqrt() * z2;
        self.at(std_normal_cdf(z1), std_normal_cdf(z2))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TypeDistribution {
    pub groups: GroupMap<GroupTypes>,
}

impl TypeDistribution {
    pub fn group(&self, group: ObservableGroup) -> Result<&GroupTypes> {
        self.groups.get(&group).ok_or(Error::UnknownGroup(group))
    }

    pub fn sample<R: Rng + ?Sized>(&self, group: ObservableGroup, rng: &mut R) -> Result<WorkerType> {
        let (cost, ability) = self.group(group)?.sample(rng);
        Ok(WorkerType { cost, ability, group })
    }
}
