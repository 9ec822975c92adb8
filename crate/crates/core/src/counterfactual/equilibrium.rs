//! Bid-only equilibria: no signaling (employers use group means of
//! ability) and full information (employers see ability).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::StructuralParams;
use crate::error::{Error, Result};
use crate::model::{GroupMap, ObservableGroup, WorkerType, BID_MAX, BID_MIN};
use crate::rng::indexed_stream;
use crate::simulator::{ActionRule, ArrivalDistribution, Consideration, HiringRule, TypeDistribution, STRATEGY_GRID};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    NoSignaling,
    FullInformation,
}

/// Bid as a function of cost (NS) or of cost and ability (FI) on a grid.
/// `bids` is row-major over cost nodes, then ability nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidGrid {
    pub cost_nodes: Vec<f64>,
    /// Empty for NS.
    pub ability_nodes: Vec<f64>,
    pub bids: Vec<f64>,
}

fn bracket(nodes: &[f64], x: f64) -> (usize, f64) {
    if nodes.len() < 2 {
        return (0, 0.0);
    }
    let i = nodes.partition_point(|&n| n <= x).clamp(1, nodes.len() - 1) - 1;
    let w = nodes[i + 1] - nodes[i];
    let t = if w > 0.0 { ((x - nodes[i]) / w).clamp(0.0, 1.0) } else { 0.0 };
    (i, t)
}

impl BidGrid {
    fn width(&self) -> usize {
        self.ability_nodes.len().max(1)
    }

    pub fn bid(&self, cost: f64, ability: f64) -> f64 {
        let (i, tc) = bracket(&self.cost_nodes, cost);
        let i1 = (i + 1).min(self.cost_nodes.len() - 1);
        let w = self.width();
        if self.ability_nodes.is_empty() {
            return self.bids[i] * (1.0 - tc) + self.bids[i1] * tc;
        }
        let (j, ta) = bracket(&self.ability_nodes, ability);
        let j1 = (j + 1).min(self.ability_nodes.len() - 1);
        let v = |r: usize, c: usize| self.bids[r * w + c];
        (1.0 - tc) * ((1.0 - ta) * v(i, j) + ta * v(i, j1)) + tc * ((1.0 - ta) * v(i1, j) + ta * v(i1, j1))
    }

    /// (cost, ability) of every node in storage order; NS nodes carry NaN ability.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.bids.len());
        for &c in &self.cost_nodes {
            if self.ability_nodes.is_empty() {
                out.push((c, f64::NAN));
            } else {
                out.extend(self.ability_nodes.iter().map(|&a| (c, a)));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidStrategy {
    pub regime: Regime,
    pub groups: GroupMap<BidGrid>,
}

impl BidStrategy {
    pub fn grid(&self, group: ObservableGroup) -> Result<&BidGrid> {
        self.groups.get(&group).ok_or(Error::UnknownGroup(group))
    }

    pub fn bid(&self, t: &WorkerType) -> Result<f64> {
        Ok(self.grid(t.group)?.bid(t.cost, t.ability))
    }

    /// Largest node-wise bid difference.
    pub fn sup_distance(&self, other: &BidStrategy) -> f64 {
        self.groups
            .iter()
            .filter_map(|(g, x)| other.groups.get(g).map(|y| (x, y)))
            .flat_map(|(x, y)| x.bids.iter().zip(&y.bids).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max)
    }
}

impl ActionRule for BidStrategy {
    fn act<R: Rng + ?Sized>(&self, t: &WorkerType, _rng: &mut R) -> Result<(f64, Option<f64>)> {
        Ok((self.bid(t)?, None))
    }
}

/// Employer index without signals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidOnlyRule {
    pub params: StructuralParams,
    pub regime: Regime,
    /// E[a | x], used under NS.
    pub group_means: GroupMap<f64>,
}

impl BidOnlyRule {
    /// The part of the index that does not depend on the bid.
    pub fn base(&self, group: ObservableGroup, ability: f64) -> Result<f64> {
        let a = match self.regime {
            Regime::FullInformation => ability,
            Regime::NoSignaling => *self.group_means.get(&group).ok_or(Error::UnknownGroup(group))?,
        };
        Ok(self.params.t(group)? + self.params.beta * a)
    }
}

impl HiringRule for BidOnlyRule {
    fn pi(&self) -> f64 {
        self.params.pi
    }

    fn delta(&self, group: ObservableGroup, bid: f64, _signal: f64, ability: f64) -> Result<f64> {
        Ok(self.base(group, ability)? + self.params.alpha_signed * bid)
    }
}

pub fn group_means(types: &TypeDistribution) -> GroupMap<f64> {
    types.groups.iter().map(|(g, t)| (*g, t.ability_mean())).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetitorSlot {
    pub group: ObservableGroup,
    pub considered: bool,
    pub cost: f64,
    pub ability: f64,
}

/// Competitor types held fixed while strategies iterate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BidPool {
    pub jobs: Vec<Vec<CompetitorSlot>>,
}

impl BidPool {
    pub fn draw(
        arrival: &ArrivalDistribution,
        types: &TypeDistribution,
        consideration: &Consideration,
        n_jobs: usize,
        seed: u64,
    ) -> Result<Self> {
        consideration.validate()?;
        let jobs = (0..n_jobs)
            .map(|m| {
                let mut rng = indexed_stream(seed, m as u64);
                let template = arrival.sample(&mut rng).clone();
                template
                    .slots
                    .iter()
                    .map(|slot| {
                        let t = types.sample(slot.group, &mut rng)?;
                        let considered = consideration.draw(slot, &mut rng);
                        Ok(CompetitorSlot { group: slot.group, considered, cost: t.cost, ability: t.ability })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { jobs })
    }
}

/// What a deviator of one group faces: for each considered slot of the
/// group, the summed exp-index of the other considered applicants.
#[derive(Clone, Debug, PartialEq)]
struct GroupLoad {
    scale: f64,
    alpha: f64,
    others: Vec<f64>,
}

impl GroupLoad {
    /// (P, dP/db) at index `z` for the deviator.
    fn eval(&self, z: f64) -> (f64, f64) {
        let (mut s, mut d) = (0.0, 0.0);
        let ez = (-z).exp();
        for &o in &self.others {
            let sig = 1.0 / (1.0 + (1.0 + o) * ez);
            s += sig;
            d += sig * (1.0 - sig);
        }
        (self.scale * s, self.scale * self.alpha * d)
    }

    /// Root of `P + P_b (b - c)` on the bid range, corners allowed.
    fn best_bid(&self, base: f64, cost: f64) -> f64 {
        if cost >= BID_MAX || self.scale == 0.0 || self.others.is_empty() || self.alpha >= 0.0 {
            return BID_MAX;
        }
        let foc = |b: f64| {
            let (p, pb) = self.eval(base + self.alpha * b);
            p + pb * (b - cost)
        };
        let mut lo = cost.max(BID_MIN);
        if foc(lo) <= 0.0 {
            return lo;
        }
        let mut hi = BID_MAX;
        if foc(hi) >= 0.0 {
            return hi;
        }
        while hi - lo > 1e-7 {
            let mid = 0.5 * (lo + hi);
            if foc(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn loads(pool: &BidPool, strategy: &BidStrategy, rule: &BidOnlyRule) -> Result<GroupMap<GroupLoad>> {
    let alpha = rule.params.alpha_signed;
    let mut counts: GroupMap<usize> = GroupMap::new();
    let mut others: GroupMap<Vec<f64>> = strategy.groups.keys().map(|g| (*g, Vec::new())).collect();
    for job in &pool.jobs {
        let mut exps = Vec::with_capacity(job.len());
        for s in job {
            *counts.entry(s.group).or_default() += 1;
            if s.considered {
                let t = WorkerType { cost: s.cost, ability: s.ability, group: s.group };
                let b = strategy.bid(&t)?;
                exps.push((s.group, (rule.base(s.group, s.ability)? + alpha * b).exp()));
            }
        }
        let total: f64 = exps.iter().map(|e| e.1).sum();
        for (g, e) in &exps {
            others.entry(*g).or_default().push(total - e);
        }
    }
    Ok(others
        .into_iter()
        .map(|(g, o)| {
            let n = counts.get(&g).copied().unwrap_or(0);
            let scale = if n > 0 { rule.params.pi / n as f64 } else { 0.0 };
            (g, GroupLoad { scale, alpha, others: o })
        })
        .collect())
}

/// One exact best-response pass: every node's optimal bid when all
/// competitors play `strategy`.
pub fn best_response_pass(pool: &BidPool, strategy: &BidStrategy, rule: &BidOnlyRule) -> Result<BidStrategy> {
    let loads = loads(pool, strategy, rule)?;
    let mut out = strategy.clone();
    for (g, grid) in out.groups.iter_mut() {
        let load = loads.get(g).ok_or(Error::UnknownGroup(*g))?;
        let nodes = grid.nodes();
        let bases = nodes.iter().map(|&(_, a)| rule.base(*g, a)).collect::<Result<Vec<_>>>()?;
        grid.bids = nodes.par_iter().zip(&bases).map(|(&(c, _), &base)| load.best_bid(base, c)).collect();
    }
    Ok(out)
}

/// Sup-norm move of one best-response pass.
pub fn equilibrium_residual(pool: &BidPool, strategy: &BidStrategy, rule: &BidOnlyRule) -> Result<f64> {
    Ok(best_response_pass(pool, strategy, rule)?.sup_distance(strategy))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub pool_jobs: usize,
    pub grid: usize,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Markups of the two starting strategies.
    pub start_markups: [f64; 2],
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            pool_jobs: 2000,
            grid: STRATEGY_GRID,
            damping: 0.5,
            tol: 0.05,
            max_iter: 200,
            start_markups: [0.0, 50.0],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub regime: Regime,
    pub start_markup: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm best-response move at each iteration.
    pub residuals: Vec<f64>,
    pub oscillation: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSolution {
    pub strategy: BidStrategy,
    pub report: EquilibriumReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equilibria {
    pub solutions: Vec<EquilibriumSolution>,
    /// Sup-norm distance between the fixed points from the two starts.
    pub start_gap: f64,
    pub distinct: bool,
}

impl Equilibria {
    pub fn primary(&self) -> &EquilibriumSolution {
        &self.solutions[0]
    }

    /// Errors unless every start converged.
    pub fn require_converged(&self) -> Result<&BidStrategy> {
        for s in &self.solutions {
            if !s.report.converged {
                let tail: Vec<String> = s.report.residuals.iter().rev().take(6).map(|r| format!("{r:.4}")).collect();
                return Err(Error::NotConverged(format!(
                    "{:?} equilibrium from markup {} after {} iterations; last residuals {}; {}",
                    s.report.regime,
                    s.report.start_markup,
                    s.report.iterations,
                    tail.join(", "),
                    s.report.oscillation.as_deref().unwrap_or("no oscillation detected"),
                )));
            }
        }
        Ok(&self.primary().strategy)
    }
}

fn starting_strategy(types: &TypeDistribution, regime: Regime, n: usize, markup: f64) -> BidStrategy {
    let levels: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1).max(1) as f64).collect();
    let groups = types
        .groups
        .iter()
        .map(|(g, t)| {
            let cost_nodes: Vec<f64> = levels.iter().map(|&u| t.at(u, 0.5).0).collect();
            let ability_nodes: Vec<f64> = match regime {
                Regime::NoSignaling => Vec::new(),
                Regime::FullInformation => levels.iter().map(|&u| t.at(0.5, u).1).collect(),
            };
            let w = ability_nodes.len().max(1);
            let bids =
                cost_nodes.iter().flat_map(|&c| std::iter::repeat_n((c + markup).clamp(BID_MIN, BID_MAX), w)).collect();
            (*g, BidGrid { cost_nodes, ability_nodes, bids })
        })
        .collect();
    BidStrategy { regime, groups }
}

fn oscillation(residuals: &[f64]) -> Option<String> {
    let tail = &residuals[residuals.len().saturating_sub(20)..];
    let rises = tail.windows(2).filter(|w| w[1] > w[0]).count();
    (tail.len() >= 10 && rises * 3 >= tail.len()).then(|| format!("residual rose in {rises} of the last {} steps", tail.len() - 1))
}

/// Damped best-response iteration from one start. Stops when one exact pass
/// moves no node by more than `tol` and returns the strategy that passed.
pub fn iterate_best_responses(
    pool: &BidPool,
    rule: &BidOnlyRule,
    start: BidStrategy,
    cfg: &SolverConfig,
    start_markup: f64,
) -> Result<EquilibriumSolution> {
    let mut s = start;
    let mut residuals = Vec::new();
    for it in 1..=cfg.max_iter {
        let br = best_response_pass(pool, &s, rule)?;
        let r = br.sup_distance(&s);
        residuals.push(r);
        if r < cfg.tol {
            let report =
                EquilibriumReport { regime: rule.regime, start_markup, converged: true, iterations: it, residuals, oscillation: None };
            return Ok(EquilibriumSolution { strategy: s, report });
        }
        for (g, grid) in s.groups.iter_mut() {
            let target = &br.groups[g].bids;
            for (b, t) in grid.bids.iter_mut().zip(target) {
                *b += cfg.damping * (t - *b);
            }
        }
    }
    let osc = oscillation(&residuals);
    let report = EquilibriumReport {
        regime: rule.regime,
        start_markup,
        converged: false,
        iterations: cfg.max_iter,
        residuals,
        oscillation: osc,
    };
    Ok(EquilibriumSolution { strategy: s, report })
}

pub fn solve_equilibrium(
    types: &TypeDistribution,
    arrival: &ArrivalDistribution,
    consideration: &Consideration,
    rule: &BidOnlyRule,
    cfg: &SolverConfig,
) -> Result<(Equilibria, BidPool)> {
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) || !(cfg.tol > 0.0) || cfg.grid < 2 {
        return Err(Error::param("solver needs damping in (0, 1], tol > 0 and at least two grid nodes"));
    }
    if !(rule.params.alpha_signed < 0.0) {
        return Err(Error::param("bid-only equilibria need a negative price coefficient"));
    }
    let pool = BidPool::draw(arrival, types, consideration, cfg.pool_jobs, cfg.seed)?;
    let solutions = cfg
        .start_markups
        .iter()
        .map(|&m| iterate_best_responses(&pool, rule, starting_strategy(types, rule.regime, cfg.grid, m), cfg, m))
        .collect::<Result<Vec<_>>>()?;
    let start_gap = solutions[0].strategy.sup_distance(&solutions[1].strategy);
    Ok((Equilibria { solutions, start_gap, distinct: start_gap > 2.0 * cfg.tol }, pool))
}

pub fn solve_ns_equilibrium(
    types: &TypeDistribution,
    arrival: &ArrivalDistribution,
    consideration: &Consideration,
    params: &StructuralParams,
    group_means: GroupMap<f64>,
    cfg: &SolverConfig,
) -> Result<(Equilibria, BidPool)> {
    let rule = BidOnlyRule { params: params.clone(), regime: Regime::NoSignaling, group_means };
    solve_equilibrium(types, arrival, consideration, &rule, cfg)
}

pub fn solve_fi_equilibrium(
    types: &TypeDistribution,
    arrival: &ArrivalDistribution,
    consideration: &Consideration,
    params: &StructuralParams,
    cfg: &SolverConfig,
) -> Result<(Equilibria, BidPool)> {
    let rule = BidOnlyRule { params: params.clone(), regime: Regime::FullInformation, group_means: GroupMap::new() };
    solve_equilibrium(types, arrival, consideration, &rule, cfg)
}
