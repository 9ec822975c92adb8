//! Synthetic data generator. Strategies and employer beliefs are iterated to
//! an approximate fixed point: competitors drawn under the current strategy
//! give beliefs and a win-probability surface, and each type best-responds
//! to that surface.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    calibrate_strategy_from_focs, simulate_market, synthetic_compositions, ArrivalDistribution, Consideration,
    GroupTypes, Marginal, MarketSpec, RoundedBids, SimulatedMarket, StrategyGrid, StrategyProfile, TypeDistribution,
    STRATEGY_GRID,
};
use crate::beliefs::{fit_beliefs, BeliefFunction, DEFAULT_BINS};
use crate::demand::StructuralParams;
use crate::error::{Error, Result};
use crate::model::{GroupMap, ModelParams, ObservableGroup, SignalProduction, BID_MAX, BID_MIN, EFFORT_MAX, EFFORT_MIN};
use crate::rng::derive_seed;
use crate::win_probability::{CachedSurface, RawSlot, SimulationPool, StructuralIndex};

/// One synthetic group: share of applicants, employer taste shifter (in
/// dollars), and signal technology.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub group: ObservableGroup,
    pub share: f64,
    pub t_dollars: f64,
    pub k: f64,
    pub gamma: f64,
    pub noise_var: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_jobs: usize,
    pub min_apps: usize,
    pub max_apps: usize,
    pub consideration_rate: f64,
    pub alpha: f64,
    pub beta: f64,
    pub pi: f64,
    pub groups: Vec<GroupSpec>,
    pub cost_mean: f64,
    pub cost_sd: f64,
    pub ability_mean: f64,
    pub ability_sd: f64,
    pub type_corr: f64,
    pub truncation: f64,
    /// Jobs in the internal pool each iteration.
    pub pool_jobs: usize,
    pub iterations: usize,
    pub bid_step: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let spec = |s: &str, t, k, gamma, v| GroupSpec {
            group: s.parse().expect("valid group"),
            share: 0.25,
            t_dollars: t,
            k,
            gamma,
            noise_var: v,
        };
        Self {
            n_jobs: 2000,
            min_apps: 10,
            max_apps: 50,
            consideration_rate: 0.3,
            alpha: 0.0110,
            beta: 0.1644,
            pi: 1.0 - 0.4251,
            groups: vec![
                spec("SouthAsia/ArrOver45/High", 47.60, 6.3032, 1.0000, 7.1680),
                spec("SouthAsia/Arr0to5/Middle", -104.72, 5.7227, 0.9227, 5.3834),
                spec("EnglishSpeaking/Arr5to45/Middle", 2.82, 5.7269, 1.0186, 6.2796),
                spec("Europe/ArrOver45/High", 143.48, 6.6537, 1.1701, 6.9725),
            ],
            cost_mean: 30.0,
            cost_sd: 60.0,
            ability_mean: 0.0,
            ability_sd: 3.0,
            type_corr: 0.193,
            truncation: 0.005,
            pool_jobs: 2000,
            iterations: 4,
            bid_step: 5.0,
            seed: 20240601,
        }
    }
}

impl GeneratorConfig {
    pub fn model_params(&self) -> Result<ModelParams> {
        let mut t_by_group = GroupMap::new();
        let mut signal = GroupMap::new();
        for g in &self.groups {
            t_by_group.insert(g.group, g.t_dollars * self.alpha);
            signal.insert(g.group, SignalProduction::new(g.k, g.gamma, g.noise_var)?);
        }
        let p = ModelParams { alpha: self.alpha, beta: self.beta, t_by_group, pi: self.pi, signal };
        p.validate()?;
        Ok(p)
    }

    pub fn type_distribution(&self) -> Result<TypeDistribution> {
        let mut types = TypeDistribution::default();
        for g in &self.groups {
            types.groups.insert(
                g.group,
                GroupTypes::new(
                    Marginal::Normal { mean: self.cost_mean, sd: self.cost_sd },
                    Marginal::Normal { mean: self.ability_mean, sd: self.ability_sd },
                    self.type_corr,
                    self.truncation,
                    1.0 - self.truncation,
                )?,
            );
        }
        Ok(types)
    }

    pub fn shares(&self) -> Vec<(ObservableGroup, f64)> {
        self.groups.iter().map(|g| (g.group, g.share)).collect()
    }

    pub fn consideration(&self) -> Consideration {
        Consideration::uniform(self.consideration_rate)
    }
}

/// Everything the generator settled on, plus the simulated market.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub params: ModelParams,
    pub types: TypeDistribution,
    pub arrival: ArrivalDistribution,
    pub strategy: StrategyProfile,
    pub beliefs: BeliefFunction,
    pub market: SimulatedMarket,
    /// Largest node bid change per fixed-point iteration.
    pub bid_changes: Vec<f64>,
}

fn initial_strategy(types: &TypeDistribution, alpha: f64) -> StrategyProfile {
    let mut profile = StrategyProfile::default();
    let n = STRATEGY_GRID;
    for (&g, t) in &types.groups {
        let levels: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let cost_nodes: Vec<f64> = levels.iter().map(|&u| t.at(u, 0.5).0).collect();
        let ability_nodes: Vec<f64> = levels.iter().map(|&u| t.at(0.5, u).1).collect();
        let mut bids = Vec::new();
        let mut efforts = Vec::new();
        for &c in &cost_nodes {
            for &a in &ability_nodes {
                bids.push((c + 1.0 / alpha).clamp(BID_MIN, BID_MAX));
                efforts.push((0.5 * a - 0.5).exp().clamp(EFFORT_MIN, EFFORT_MAX));
            }
        }
        profile.groups.insert(g, StrategyGrid { cost_nodes, ability_nodes, bids, efforts });
    }
    profile
}

/// Pool of competitors whose deviator noise is drawn fresh per slot.
pub fn pool_from_market<R: Rng + ?Sized>(
    market: &SimulatedMarket,
    index: StructuralIndex,
    production: GroupMap<SignalProduction>,
    rng: &mut R,
) -> Result<SimulationPool<StructuralIndex>> {
    let mut raw = Vec::with_capacity(market.jobs.len());
    for job in &market.jobs {
        let mut slots = Vec::with_capacity(job.post.applications.len());
        for a in &job.post.applications {
            let sd = production.get(&a.group).ok_or(Error::UnknownGroup(a.group))?.noise_var.sqrt();
            let z: f64 = StandardNormal.sample(rng);
            slots.push(RawSlot { group: a.group, considered: a.considered, bid: a.bid, signal: a.signal, noise: sd * z });
        }
        raw.push(slots);
    }
    SimulationPool::from_raw(raw, index, production)
}

fn belief_data(market: &SimulatedMarket) -> Vec<(ObservableGroup, f64, f64)> {
    market
        .jobs
        .iter()
        .flat_map(|j| j.post.applications.iter().zip(&j.hidden).map(|(a, h)| (a.group, a.signal, h.ability)))
        .collect()
}

fn max_bid_change(a: &StrategyProfile, b: &StrategyProfile) -> f64 {
    a.groups
        .iter()
        .filter_map(|(g, x)| b.groups.get(g).map(|y| (x, y)))
        .flat_map(|(x, y)| x.bids.iter().zip(&y.bids).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// Runs the fixed-point iterations and simulates the final market.
pub fn generate(config: &GeneratorConfig) -> Result<SyntheticWorld> {
    let params = config.model_params()?;
    let types = config.type_distribution()?;
    let consideration = config.consideration();
    let mut comp_rng = crate::rng::substream(config.seed, "generator/compositions");
    let templates =
        synthetic_compositions(config.n_jobs.max(config.pool_jobs), &config.shares(), config.min_apps, config.max_apps, &mut comp_rng)?;
    let arrival = ArrivalDistribution::uniform(templates)?;
    let sparams = StructuralParams::from_model(&params);

    let mut strategy = initial_strategy(&types, config.alpha);
    // Beliefs under the initial strategy; hiring outcomes do not matter here.
    let mut beliefs = {
        let pool_market = population(config, &arrival, &types, &strategy, &params, &consideration, None, 0)?;
        fit_beliefs(&belief_data(&pool_market), DEFAULT_BINS)?
    };
    let mut bid_changes = Vec::new();
    for it in 0..config.iterations {
        let index = StructuralIndex { params: sparams.clone(), beliefs: beliefs.clone() };
        let pool_market =
            population(config, &arrival, &types, &strategy, &params, &consideration, Some(&index), it as u64 + 1)?;
        let mut noise_rng = crate::rng::substream(derive_seed(config.seed, "generator/noise"), &it.to_string());
        let pool = pool_from_market(&pool_market, index, params.signal.clone(), &mut noise_rng)?;
        let surfaces = CachedSurface::build_all(&pool)?;
        let next = calibrate_strategy_from_focs(&types, &surfaces, STRATEGY_GRID)?;
        bid_changes.push(max_bid_change(&strategy, &next));
        strategy = next;
        let refreshed = population(config, &arrival, &types, &strategy, &params, &consideration, None, 1000 + it as u64)?;
        beliefs = fit_beliefs(&belief_data(&refreshed), DEFAULT_BINS)?;
    }
    let index = StructuralIndex { params: sparams, beliefs: beliefs.clone() };
    let market = simulate_market(
        MarketSpec { n_jobs: config.n_jobs, seed: derive_seed(config.seed, "generator/market"), first_job_id: 1 },
        &arrival,
        &types,
        &RoundedBids { strategy: &strategy, step: config.bid_step },
        &params,
        &index,
        &consideration,
    )?;
    Ok(SyntheticWorld { params, types, arrival, strategy, beliefs, market, bid_changes })
}

/// A market of `pool_jobs` used for beliefs or competitors. Without an index
/// the employer side is a constant placeholder.
#[allow(clippy::too_many_arguments)]
fn population(
    config: &GeneratorConfig,
    arrival: &ArrivalDistribution,
    types: &TypeDistribution,
    strategy: &StrategyProfile,
    params: &ModelParams,
    consideration: &Consideration,
    index: Option<&StructuralIndex>,
    round: u64,
) -> Result<SimulatedMarket> {
    let spec = MarketSpec {
        n_jobs: config.pool_jobs,
        seed: derive_seed(derive_seed(config.seed, "generator/population"), &round.to_string()),
        first_job_id: 1 << 40,
    };
    let actions = RoundedBids { strategy, step: config.bid_step };
    match index {
        Some(ix) => simulate_market(spec, arrival, types, &actions, params, ix, consideration),
        None => {
            let flat = crate::demand::ReducedFormParams {
                alpha_signed: 0.0,
                k_lambda: params.t_by_group.keys().map(|g| (*g, 0.0)).collect(),
                gamma_lambda: params.t_by_group.keys().map(|g| (*g, 0.0)).collect(),
                pi: params.pi,
            };
            simulate_market(spec, arrival, types, &actions, params, &flat, consideration)
        }
    }
}
