//! Synthetic markets: applicant types, actions, signals, consideration and
//! employer choices.

mod arrival;
pub mod generator;
mod strategy;
mod types;

pub use arrival::{synthetic_compositions, ArrivalDistribution, Consideration};
pub use strategy::{
    best_response, calibrate_group, calibrate_strategy_from_focs, StrategyGrid, StrategyProfile, STRATEGY_GRID,
};
pub use types::{GroupTypes, Marginal, TypeDistribution};

use rand::Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::demand::choice_probabilities;
use crate::error::{Error, Result};
use crate::model::{Application, JobPost, ModelParams, ObservableGroup, Winner, WorkerType};
use crate::rng::indexed_stream;
use crate::win_probability::EmployerIndex;

/// Employer's mean utility for an application. Rules may look at the signal,
/// the true ability, or neither.
pub trait HiringRule {
    fn pi(&self) -> f64;
    fn delta(&self, group: ObservableGroup, bid: f64, signal: f64, ability: f64) -> Result<f64>;
}

impl<I: EmployerIndex> HiringRule for I {
    fn pi(&self) -> f64 {
        EmployerIndex::pi(self)
    }

    fn delta(&self, group: ObservableGroup, bid: f64, signal: f64, _ability: f64) -> Result<f64> {
        EmployerIndex::delta(self, group, bid, signal)
    }
}

/// Maps a drawn type to (bid, effort). `None` effort means no signal is sent.
pub trait ActionRule {
    fn act<R: Rng + ?Sized>(&self, t: &WorkerType, rng: &mut R) -> Result<(f64, Option<f64>)>;
}

impl ActionRule for StrategyProfile {
    fn act<R: Rng + ?Sized>(&self, t: &WorkerType, _rng: &mut R) -> Result<(f64, Option<f64>)> {
        let (b, e) = self.action(t)?;
        Ok((b, Some(e)))
    }
}

/// Strategy with bids rounded to a multiple of `step` (kept inside the bid range).
#[derive(Clone, Debug)]
pub struct RoundedBids<'a> {
    pub strategy: &'a StrategyProfile,
    pub step: f64,
}

impl ActionRule for RoundedBids<'_> {
    fn act<R: Rng + ?Sized>(&self, t: &WorkerType, _rng: &mut R) -> Result<(f64, Option<f64>)> {
        let (b, e) = self.strategy.action(t)?;
        let r = ((b / self.step).round() * self.step).clamp(crate::model::BID_MIN, crate::model::BID_MAX);
        Ok((r, Some(e)))
    }
}

/// Categorical draw of the employer's choice: inside option `k` with
/// probability `pi exp(d_k) / (1 + sum exp(d))`, else the outside option.
pub fn choose_winner<R: Rng + ?Sized>(deltas: &[f64], pi: f64, rng: &mut R) -> Option<usize> {
    let (inside, _) = choice_probabilities(deltas, pi);
    let mut u = rng.random::<f64>();
    for (k, p) in inside.iter().enumerate() {
        if u < *p {
            return Some(k);
        }
        u -= p;
    }
    None
}

/// Latent values behind one simulated application.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenSlot {
    pub worker_id: u64,
    pub cost: f64,
    pub ability: f64,
    pub noise: f64,
    /// Employer's index, for considered applications.
    pub delta: Option<f64>,
    /// Choice probability given the consideration set and pi.
    pub choice_prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatedJob {
    pub post: JobPost,
    pub hidden: Vec<HiddenSlot>,
    pub outside_prob: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulatedMarket {
    pub jobs: Vec<SimulatedJob>,
    /// Largest `|sum of choice probabilities - 1|` over jobs.
    pub max_probability_error: f64,
}

impl SimulatedMarket {
    pub fn posts(&self) -> Vec<JobPost> {
        self.jobs.iter().map(|j| j.post.clone()).collect()
    }

    pub fn hire_rate(&self) -> f64 {
        let n = self.jobs.len().max(1) as f64;
        self.jobs.iter().filter(|j| j.post.applications.iter().any(|a| a.won)).count() as f64 / n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub n_jobs: usize,
    pub seed: u64,
    pub first_job_id: u64,
}

/// Simulates `n_jobs` posts. Each job draws from its own counter-based
/// stream, so results do not depend on evaluation order.
#[allow(clippy::too_many_arguments)]
pub fn simulate_market<A: ActionRule, H: HiringRule>(
    spec: MarketSpec,
    arrival: &ArrivalDistribution,
    types: &TypeDistribution,
    actions: &A,
    params: &ModelParams,
    hiring: &H,
    consideration: &Consideration,
) -> Result<SimulatedMarket> {
    consideration.validate()?;
    let pi = hiring.pi();
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::param(format!("pi {pi} outside [0, 1]")));
    }
    let gumbel = Gumbel::new(0.0, 1.0).expect("unit scale");
    let mut market = SimulatedMarket::default();
    for m in 0..spec.n_jobs {
        let job_id = spec.first_job_id + m as u64;
        let mut rng = indexed_stream(spec.seed, m as u64);
        let template = arrival.sample(&mut rng).clone();
        let mut apps = Vec::with_capacity(template.slots.len());
        let mut hidden = Vec::with_capacity(template.slots.len());
        for (k, slot) in template.slots.iter().enumerate() {
            let t = types.sample(slot.group, &mut rng)?;
            let (bid, effort) = actions.act(&t, &mut rng)?;
            // Drawn even without a signal so scenarios share the same draws.
            let z: f64 = StandardNormal.sample(&mut rng);
            let (signal, noise) = match effort {
                Some(e) => {
                    let prod = params.production(slot.group)?;
                    let noise = prod.noise_var.sqrt() * z;
                    (prod.mean(e)? + noise, noise)
                }
                None => (0.0, 0.0),
            };
            let considered = consideration.draw(slot, &mut rng);
            let worker_id = (job_id << 16) | k as u64;
            let delta = if considered { Some(hiring.delta(slot.group, bid, signal, t.ability)?) } else { None };
            apps.push(Application {
                job_id,
                worker_id,
                group: slot.group,
                bid,
                effort,
                signal,
                considered,
                won: false,
                completed_5star: None,
                signal_noise: effort.map(|_| noise),
            });
            hidden.push(HiddenSlot { worker_id, cost: t.cost, ability: t.ability, noise, delta, choice_prob: 0.0 });
        }
        let idx: Vec<usize> = (0..hidden.len()).filter(|&k| hidden[k].delta.is_some()).collect();
        let deltas: Vec<f64> = idx.iter().map(|&k| hidden[k].delta.unwrap()).collect();
        let (inside, outside) = choice_probabilities(&deltas, pi);
        let err = (inside.iter().sum::<f64>() + outside - 1.0).abs();
        market.max_probability_error = market.max_probability_error.max(err);
        for (&k, p) in idx.iter().zip(&inside) {
            hidden[k].choice_prob = *p;
        }
        let abandoned = rng.random::<f64>() >= pi;
        let mut winner = Winner::OutsideOption;
        if !abandoned {
            let mut best = gumbel.sample(&mut rng);
            for (&k, d) in idx.iter().zip(&deltas) {
                let u = d + gumbel.sample(&mut rng);
                if u > best {
                    best = u;
                    winner = Winner::Worker(apps[k].worker_id);
                }
            }
        }
        if let Winner::Worker(w) = winner {
            apps.iter_mut().find(|a| a.worker_id == w).expect("winner present").won = true;
        }
        let post = JobPost { job_id, applications: apps, abandoned: Some(abandoned), winner: Some(winner) };
        market.jobs.push(SimulatedJob { post, hidden, outside_prob: outside });
    }
    Ok(market)
}
