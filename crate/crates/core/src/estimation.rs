//! The estimation chain on in-memory job posts: signal production and effort
//! correction, reduced-form demand, the bid-signal model and simulation
//! pool, type inversion, beliefs, and structural demand.

use serde::{Deserialize, Serialize};

use crate::beliefs::{fit_beliefs, BeliefFunction};
use crate::bid_signal::{fit_bid_signal_model, BidSignalModel};
use crate::demand::{
    fit_reduced_form, fit_structural, ChoiceJob, ChoiceOption, FitOptions, FitReport, ReducedFormParams,
    StructuralParams,
};
use crate::error::{Error, Result};
use crate::model::{GroupMap, JobPost, ObservableGroup, SignalProduction, Winner};
use crate::supply::{
    correct_effort, estimate_signal_production, invert_focs, ActionPoint, EffortCorrectionModel, InversionResult,
    SignalProductionFit, TimedSignal,
};
use crate::win_probability::{build_pool, EmployerIndex, GroupSurface, JobTemplate, SimulationPool, SlotTemplate};

/// Considered applications of each job with the observed choice.
pub fn choice_jobs(posts: &[JobPost]) -> Result<Vec<ChoiceJob>> {
    posts
        .iter()
        .map(|p| {
            let considered: Vec<_> = p.applications.iter().filter(|a| a.considered).collect();
            let chosen = match p.winner {
                Some(Winner::Worker(w)) => Some(
                    considered
                        .iter()
                        .position(|a| a.worker_id == w)
                        .ok_or_else(|| Error::input(format!("job {}: winner not in consideration set", p.job_id)))?,
                ),
                _ => None,
            };
            let options = considered
                .iter()
                .map(|a| ChoiceOption { group: a.group, bid: a.bid, signal: a.signal, belief: None })
                .collect();
            ChoiceJob::new(options, chosen)
        })
        .collect()
}

/// Applications with a measured effort, in post order, and their
/// flattened application index.
pub fn timed_signals(posts: &[JobPost]) -> (Vec<TimedSignal>, Vec<u64>) {
    let mut out = Vec::new();
    let mut ids = Vec::new();
    let mut idx = 0u64;
    for p in posts {
        for a in &p.applications {
            if let Some(e) = a.effort {
                out.push(TimedSignal { worker_id: a.worker_id, group: a.group, signal: a.signal, time: e });
                ids.push(idx);
            }
            idx += 1;
        }
    }
    (out, ids)
}

pub fn job_templates(posts: &[JobPost]) -> Vec<JobTemplate> {
    posts
        .iter()
        .map(|p| JobTemplate {
            slots: p.applications.iter().map(|a| SlotTemplate { group: a.group, considered: a.considered }).collect(),
        })
        .collect()
}

pub fn bid_signal_data(posts: &[JobPost]) -> Vec<(ObservableGroup, f64, f64)> {
    posts.iter().flat_map(|p| p.applications.iter().map(|a| (a.group, a.bid, a.signal))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalSide {
    pub production: SignalProductionFit,
    pub correction: EffortCorrectionModel,
}

impl SignalSide {
    pub fn productions(&self) -> GroupMap<SignalProduction> {
        self.production.productions()
    }
}

pub fn fit_signal_side(posts: &[JobPost]) -> Result<SignalSide> {
    let (timed, _) = timed_signals(posts);
    let production = estimate_signal_production(&timed)?;
    let correction = correct_effort(&timed, &production)?;
    Ok(SignalSide { production, correction })
}

/// Points to invert: applications with a corrected effort.
pub fn action_points(posts: &[JobPost], side: &SignalSide) -> Vec<ActionPoint> {
    let (timed, ids) = timed_signals(posts);
    let flat: Vec<_> = posts.iter().flat_map(|p| p.applications.iter()).collect();
    timed
        .iter()
        .zip(&ids)
        .zip(&side.correction.corrected)
        .filter(|(_, e)| e.is_finite())
        .map(|((_, &id), &e)| {
            let a = flat[id as usize];
            ActionPoint { id, group: a.group, bid: a.bid, effort: e, signal: a.signal }
        })
        .collect()
}

pub fn exact_surfaces<I: EmployerIndex>(pool: &SimulationPool<I>) -> Result<GroupMap<GroupSurface<'_, I>>> {
    pool.groups().into_iter().map(|g| Ok((g, pool.surface(g)?))).collect()
}

/// Data passed to the type-belief fit: (group, signal, a_hat).
pub fn belief_data(inversion: &InversionResult) -> Vec<(ObservableGroup, f64, f64)> {
    inversion.accepted.iter().map(|d| (d.group, d.signal, d.a_hat)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationOptions {
    pub pool_jobs: usize,
    pub n_bins: usize,
    pub fit: FitOptions,
    pub seed: u64,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        Self { pool_jobs: 2000, n_bins: crate::beliefs::DEFAULT_BINS, fit: FitOptions::default(), seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub signal: SignalSide,
    pub reduced: FitReport<ReducedFormParams>,
    pub bid_signal: BidSignalModel,
    pub pool: SimulationPool<ReducedFormParams>,
    pub inversion: InversionResult,
    pub beliefs: BeliefFunction,
    pub structural: FitReport<StructuralParams>,
}

/// Runs the whole chain.
pub fn run_estimation(posts: &[JobPost], opts: &EstimationOptions) -> Result<EstimationResult> {
    let signal = fit_signal_side(posts)?;
    let productions = signal.productions();
    let jobs = choice_jobs(posts)?;
    let reduced = fit_reduced_form(&jobs, None, &opts.fit)?;
    let bid_signal = fit_bid_signal_model(&bid_signal_data(posts))?;
    let mut rng = crate::rng::substream(opts.seed, "build-pool");
    let pool = build_pool(&job_templates(posts), &bid_signal, reduced.params.clone(), productions, opts.pool_jobs, &mut rng)?;
    let inversion = {
        let surfaces = exact_surfaces(&pool)?;
        invert_focs(&surfaces, &action_points(posts, &signal))
    };
    let beliefs = fit_beliefs(&belief_data(&inversion), opts.n_bins)?;
    let structural = fit_structural(&jobs, &beliefs, None, &opts.fit)?;
    Ok(EstimationResult { signal, reduced, bid_signal, pool, inversion, beliefs, structural })
}
