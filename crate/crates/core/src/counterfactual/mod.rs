//! Counterfactual equilibria and their hiring and welfare outcomes.

mod equilibrium;
mod sq;
mod welfare;

pub use equilibrium::*;
pub use sq::*;
pub use welfare::*;

use serde::{Deserialize, Serialize};

use crate::beliefs::BeliefFunction;
use crate::demand::StructuralParams;
use crate::error::Result;
use crate::model::{GroupMap, SignalProduction};
use crate::rng::derive_seed;
use crate::simulator::{simulate_market, ArrivalDistribution, Consideration, MarketSpec, SimulatedMarket, TypeDistribution};
use crate::supply::TypePseudoData;
use crate::win_probability::StructuralIndex;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CounterfactualConfig {
    pub n_jobs: usize,
    pub solver: SolverConfig,
    pub seed: u64,
}

impl Default for CounterfactualConfig {
    fn default() -> Self {
        Self { n_jobs: 2000, solver: SolverConfig::default(), seed: 0 }
    }
}

/// Estimated primitives the scenarios are built from.
#[derive(Clone, Copy, Debug)]
pub struct CounterfactualInputs<'a> {
    pub types: &'a TypeDistribution,
    pub pseudo: &'a [TypePseudoData],
    pub params: &'a StructuralParams,
    pub beliefs: &'a BeliefFunction,
    pub production: &'a GroupMap<SignalProduction>,
    pub arrival: &'a ArrivalDistribution,
    pub consideration: &'a Consideration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResults {
    pub quintiles: Quintiles,
    pub group_means: GroupMap<f64>,
    pub ns: Equilibria,
    pub fi: Equilibria,
    pub sq_report: WelfareReport,
    pub ns_report: WelfareReport,
    pub fi_report: WelfareReport,
    /// Percent change of P(hired | cell), NS against SQ.
    #[serde(with = "welfare::nan_null::matrix")]
    pub ns_vs_sq: Matrix5,
    #[serde(with = "welfare::nan_null::matrix")]
    pub fi_vs_sq: Matrix5,
    pub directionality: Directionality,
    pub max_probability_error: f64,
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMarkets {
    pub sq: SimulatedMarket,
    pub ns: SimulatedMarket,
    pub fi: SimulatedMarket,
    /// Competitor pools the NS and FI equilibria were solved on.
    pub ns_pool: BidPool,
    pub fi_pool: BidPool,
}

/// Solves NS and FI, simulates all three scenarios on common draws, and
/// reports them against fixed SQ quintiles.
pub fn run_counterfactuals(
    inputs: CounterfactualInputs<'_>,
    cfg: &CounterfactualConfig,
) -> Result<(CounterfactualResults, ScenarioMarkets)> {
    let mut diagnostics = Vec::new();
    let donors = DonorPool::from_pseudo(inputs.pseudo)?;
    for g in donors.missing_groups(inputs.types.groups.keys().copied()) {
        diagnostics.push(format!("no donors in {g}; using the pooled nearest neighbour"));
    }
    let means = group_means(inputs.types);
    let solver = SolverConfig { seed: derive_seed(cfg.seed, "counterfactual/pool"), ..cfg.solver.clone() };
    let (ns, ns_pool) = solve_ns_equilibrium(inputs.types, inputs.arrival, inputs.consideration, inputs.params, means.clone(), &solver)?;
    let (fi, fi_pool) = solve_fi_equilibrium(inputs.types, inputs.arrival, inputs.consideration, inputs.params, &solver)?;
    for eq in [&ns, &fi] {
        if eq.distinct {
            diagnostics.push(format!(
                "{:?}: starting points reach fixed points {:.3} apart",
                eq.primary().report.regime,
                eq.start_gap
            ));
        }
    }
    let ns_strategy = ns.require_converged()?;
    let fi_strategy = fi.require_converged()?;

    let spec = MarketSpec { n_jobs: cfg.n_jobs, seed: derive_seed(cfg.seed, "counterfactual/market"), first_job_id: 1 };
    let model = inputs.params.to_model(inputs.production.clone());
    let index = StructuralIndex { params: inputs.params.clone(), beliefs: inputs.beliefs.clone() };
    let sq = simulate_market(spec, inputs.arrival, inputs.types, &donors, &model, &index, inputs.consideration)?;
    let ns_rule = BidOnlyRule { params: inputs.params.clone(), regime: Regime::NoSignaling, group_means: means.clone() };
    let ns_market = simulate_market(spec, inputs.arrival, inputs.types, ns_strategy, &model, &ns_rule, inputs.consideration)?;
    let fi_rule = BidOnlyRule { params: inputs.params.clone(), regime: Regime::FullInformation, group_means: GroupMap::new() };
    let fi_market = simulate_market(spec, inputs.arrival, inputs.types, fi_strategy, &model, &fi_rule, inputs.consideration)?;

    let quintiles = Quintiles::from_market(&sq)?;
    let sq_report = welfare_report(&sq, inputs.params, Scenario::StatusQuo, &quintiles)?;
    let ns_report = welfare_report(&ns_market, inputs.params, Scenario::NoSignaling, &quintiles)?;
    let fi_report = welfare_report(&fi_market, inputs.params, Scenario::FullInformation, &quintiles)?;
    if fi_report.total_surplus < ns_report.total_surplus {
        diagnostics.push(format!(
            "FI total surplus {:.3} below NS {:.3} on common draws",
            fi_report.total_surplus, ns_report.total_surplus
        ));
    }
    let results = CounterfactualResults {
        quintiles,
        group_means: means,
        ns_vs_sq: percent_change(&sq_report.hire_rate_by_cell, &ns_report.hire_rate_by_cell),
        fi_vs_sq: percent_change(&sq_report.hire_rate_by_cell, &fi_report.hire_rate_by_cell),
        directionality: Directionality::new(&sq_report, &ns_report),
        max_probability_error: [&sq, &ns_market, &fi_market].iter().map(|m| m.max_probability_error).fold(0.0, f64::max),
        ns,
        fi,
        sq_report,
        ns_report,
        fi_report,
        diagnostics,
    };
    Ok((results, ScenarioMarkets { sq, ns: ns_market, fi: fi_market, ns_pool, fi_pool }))
}
