use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use jobsignal_core::beliefs::{fit_beliefs, BeliefFunction};
use jobsignal_core::bid_signal::{fit_bid_signal_model, BidSignalModel};
use jobsignal_core::counterfactual::{
    fit_type_distribution, run_counterfactuals, CounterfactualConfig, CounterfactualInputs, CounterfactualResults,
};
use jobsignal_core::demand::{fit_reduced_form, fit_structural, FitOptions, ReducedFormParams, StructuralParams};
use jobsignal_core::estimation::{
    action_points, bid_signal_data, choice_jobs, exact_surfaces, fit_signal_side, job_templates, SignalSide,
};
use jobsignal_core::measurement::{
    aggregate_signal, build_consideration_sets, validate_effort, ClickRecord, ConsiderationOptions, CriteriaVector,
    JobClicks,
};
use jobsignal_core::model::JobPost;
use jobsignal_core::records::{posts_from_records, records_from_market, ApplicationRecord, FlatParams};
use jobsignal_core::rng::{derive_seed, substream};
use jobsignal_core::simulator::generator::{generate, GeneratorConfig};
use jobsignal_core::simulator::{ArrivalDistribution, Consideration, SimulatedMarket};
use jobsignal_core::supply::{invert_focs, TypePseudoData};
use jobsignal_core::win_probability::{build_pool, SimulationPool};
use serde::{Deserialize, Serialize};

use crate::artifacts::*;
use crate::config::{PipelineConfig, Stage};
use crate::PipelineError;

pub const WORLD: &str = "world.json";
pub const MEASURE_SUMMARY: &str = "measure_summary.json";

/// Seed of one stage, derived from the master seed.
pub fn stage_seed(master: u64, stage: Stage) -> u64 {
    derive_seed(master, stage.name())
}

pub fn run_pipeline(cfg: &PipelineConfig, stages: &[Stage]) -> Result<Vec<ManifestEntry>, PipelineError> {
    stages.iter().map(|&s| run_stage(s, cfg)).collect()
}

pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<ManifestEntry, PipelineError> {
    let start = Instant::now();
    let mut ws = Workspace::new(&cfg.out)?;
    let seed = stage_seed(cfg.seed, stage);
    match stage {
        Stage::Simulate => simulate(cfg, &mut ws, seed)?,
        Stage::Measure => measure(cfg, &mut ws, seed)?,
        Stage::Consider => consider(cfg, &mut ws, seed)?,
        Stage::FitReduced => fit_reduced(cfg, &mut ws, seed)?,
        Stage::FitCopula => fit_copula(&mut ws, seed)?,
        Stage::BuildPool => build_pool_stage(cfg, &mut ws, seed)?,
        Stage::InvertSupply => invert_supply(&mut ws, seed)?,
        Stage::FitBeliefs => fit_beliefs_stage(cfg, &mut ws, seed)?,
        Stage::FitDemand => fit_demand(cfg, &mut ws, seed)?,
        Stage::Counterfactual => counterfactual(cfg, &mut ws, seed)?,
        Stage::Report => crate::report::report(&mut ws)?,
    }
    let entry = ws.manifest_entry(stage, seed, start.elapsed().as_millis())?;
    ws.append_manifest(&entry)?;
    Ok(entry)
}

fn fit_options(cfg: &PipelineConfig) -> FitOptions {
    FitOptions::with_tol(cfg.estimation.grad_tol)
}

fn considered_posts(ws: &mut Workspace) -> Result<(Vec<ApplicationRecord>, Vec<JobPost>), PipelineError> {
    let recs: Vec<ApplicationRecord> = ws.read_records(CONSIDERED)?;
    let posts = posts_from_records(&recs).map_err(|e| PipelineError::at(&ws.path(CONSIDERED), e))?;
    Ok((recs, posts))
}

#[derive(Serialize, Deserialize)]
struct WorldSummary {
    config: GeneratorConfig,
    bid_changes: Vec<f64>,
    hire_rate: f64,
    max_probability_error: f64,
    strategy: jobsignal_core::simulator::StrategyProfile,
    beliefs: BeliefFunction,
}

fn simulate(cfg: &PipelineConfig, ws: &mut Workspace, seed: u64) -> Result<(), PipelineError> {
    let config = GeneratorConfig { seed: cfg.seed, ..cfg.simulate.clone() };
    let world = generate(&config)?;
    let (recs, hidden) = records_from_market(&world.market);
    ws.write_records(APPLICATIONS, &recs)?;
    ws.write_records(HIDDEN, &hidden)?;
    ws.write_params(TRUTH, "generator parameters", &FlatParams::from(&world.params))?;
    let summary = WorldSummary {
        hire_rate: world.market.hire_rate(),
        max_probability_error: world.market.max_probability_error,
        config,
        bid_changes: world.bid_changes,
        strategy: world.strategy,
        beliefs: world.beliefs,
    };
    ws.write_json(WORLD, "synthetic-world", seed, &summary)
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub n_records: usize,
    pub signals_from_criteria: usize,
    pub signals_carried: usize,
    pub effort_rejections: BTreeMap<String, usize>,
}

fn measure(cfg: &PipelineConfig, ws: &mut Workspace, seed: u64) -> Result<(), PipelineError> {
    let input = match &cfg.input {
        Some(p) => ws.require(p.clone())?,
        None => ws.input(APPLICATIONS)?,
    };
    let mut recs: Vec<ApplicationRecord> = read_records(&input)?;
    let mut summary = MeasureSummary { n_records: recs.len(), ..Default::default() };
    for (i, r) in recs.iter_mut().enumerate() {
        let schema = |m: String| PipelineError::Schema { path: input.clone(), message: format!("line {}: {m}", i + 1) };
        match (r.criteria_custom, r.criteria_generic, r.d_edit) {
            (Some(c), Some(g), Some(d)) => {
                let cv = CriteriaVector::new(c, g).map_err(|e| schema(e.to_string()))?;
                if !(0.0..=1.0).contains(&d) {
                    return Err(schema(format!("field `d_edit` = {d} outside [0, 1]")));
                }
                r.signal = Some(aggregate_signal(&cv, d));
                summary.signals_from_criteria += 1;
            }
            (None, None, None) if r.signal.is_some() => summary.signals_carried += 1,
            (None, _, _) => return Err(schema("missing field `criteria_custom`".into())),
            (_, None, _) => return Err(schema("missing field `criteria_generic`".into())),
            (_, _, None) => return Err(schema("missing field `d_edit`".into())),
        }
        match validate_effort(r.first_view_ms, r.submitted_ms) {
            Ok(m) => {
                r.effort_minutes = Some(m);
                r.effort_rejection = None;
            }
            Err(why) => {
                r.effort_minutes = None;
                r.effort_rejection = Some(why);
                *summary.effort_rejections.entry(format!("{why:?}")).or_default() += 1;
            }
        }
    }
    ws.write_records(MEASURED, &recs)?;
    ws.write_json(MEASURE_SUMMARY, "measure-summary", seed, &summary)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConsiderationSummary {
    /// True when the input already carried consideration flags.
    pub passed_through: bool,
    pub outcome: Option<jobsignal_core::measurement::ConsiderationOutcome>,
}

fn consider(cfg: &PipelineConfig, ws: &mut Workspace, seed: u64) -> Result<(), PipelineError> {
    let recs: Vec<ApplicationRecord> = ws.read_records(MEASURED)?;
    let flagged = recs.iter().filter(|r| r.considered.is_some()).count();
    if flagged == recs.len() {
        ws.write_records(CONSIDERED, &recs)?;
        return ws.write_json(CONSIDERATION, "consideration", seed, &ConsiderationSummary { passed_through: true, outcome: None });
    }
    if flagged > 0 {
        return Err(PipelineError::Schema {
            path: ws.path(MEASURED),
            message: format!("field `considered` set on {flagged} of {} records; expected all or none", recs.len()),
        });
    }
    let mut order = Vec::new();
    let mut jobs: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, r) in recs.iter().enumerate() {
        jobs.entry(r.job_id)
            .or_insert_with(|| {
                order.push(r.job_id);
                Vec::new()
            })
            .push(i);
    }
    let clicks: Vec<JobClicks> = order
        .iter()
        .map(|id| JobClicks {
            job_id: *id,
            posted_ms: None,
            applications: jobs[id]
                .iter()
                .map(|&i| {
                    let r = &recs[i];
                    ClickRecord {
                        worker_id: r.worker_id,
                        submitted_ms: r.submitted_ms,
                        first_view_ms: r.first_view_ms,
                        employer_engaged: r.engaged,
                        messages_count: r.messages,
                        rank_at_close: r.rank_at_close,
                        engaged_rank_reference: None,
                        hired: r.is_hired(),
                    }
                })
                .collect(),
        })
        .collect();
    let mut options = ConsiderationOptions { era: cfg.era, ..Default::default() };
    if let Some(t) = cfg.size_threshold {
        options.size_threshold.insert(cfg.era, t);
    }
    let outcome = build_consideration_sets(&clicks, &options);
    let mut out = Vec::new();
    for id in &order {
        if let Some(flags) = outcome.considered.get(id) {
            for (&i, &f) in jobs[id].iter().zip(flags) {
                let mut r = recs[i].clone();
                r.considered = Some(f);
                out.push(r);
            }
        }
    }
    ws.write_records(CONSIDERED, &out)?;
    ws.write_json(CONSIDERATION, "consideration", seed, &ConsiderationSummary { passed_through: false, outcome: Some(outcome) })
}

fn fit_reduced(cfg: &PipelineConfig, ws: &mut Workspace, seed: u64) -> Result<(), PipelineError> {
    let (_, posts) = considered_posts(ws)?;
    let side = fit_signal_side(&posts)?;
    ws.write_json(SIGNAL_SIDE, "signal-side", seed, &side)?;
    let fit = fit_reduced_form(&choice_jobs(&posts)?, None, &fit_options(cfg))?;
    ws.write_params(REDUCED, "reduced-form demand", &FlatParams::from(&fit.params))?;
    ws.write_json(REDUCED_FIT, "reduced-fit", seed, &fit)
}

fn fit_copula(ws: &mut Workspace, seed: u64) -> Result<(), PipelineError> {
    let (_, posts) = considered_posts(ws)?;
    let model = fit_bid_signal_model(&bid_signal_data(&posts))?;
    ws.write_json(BID_SIGNAL, "bid-signal-model", seed, &model)
}

fn build_pool_stage(cfg: &PipelineConfig, ws: &mut Workspace, seed: u64) -> Result<(), PipelineError> {
    let (_, posts) = considered_posts(ws)?;
    let reduced = ReducedFormParams::try_from(&ws.read_params(REDUCED)?)?;
    let model: BidSignalModel = ws.read_json(BID_SIGNAL, "bid-signal-model")?;
    let side: SignalSide = ws.read_json(SIGNAL_SIDE, "signal-side")?;
    // Same substream as the in-memory chain, so both give the same pool.
    let mut rng = substream(cfg.seed, "build-pool");
    let pool =
        build_pool(&job_templates(&posts), &model, reduced, side.productions(), cfg.estimation.pool_jobs, &mut rng)?;
    ws.write_json(POOL, "simulation-pool", seed, &pool)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InversionSummary {
    pub n_points: usize,
    pub accepted: usize,
    pub reject_rate: f64,
    pub rejects_by_reason: BTreeMap<String, usize>,
    pub rejects: Vec<jobsignal_core::supply::InversionReject>,
}

fn invert_supply(ws: &mut Workspace, seed: u64) -> Result<(), PipelineError> {
    let (mut recs, posts) = considered_posts(ws)?;
    let side: SignalSide = ws.read_json(SIGNAL_SIDE, "signal-side")?;
    let mut pool: SimulationPool<ReducedFormParams> = ws.read_json(POOL, "simulation-pool")?;
    pool.reindex();
    let inv = {
        let surfaces = exact_surfaces(&pool)?;
        invert_focs(&surfaces, &action_points(&posts, &side))
    };
    let keys: Vec<(u64, u64)> = posts.iter().flat_map(|p| p.applications.iter().map(|a| (a.job_id, a.worker_id))).collect();
    let mut by_key: HashMap<(u64, u64), &TypePseudoData> = HashMap::new();
    for d in &inv.accepted {
        by_key.insert(keys[d.id as usize], d);
    }
    if by_key.len() != inv.accepted.len() {
        return Err(PipelineError::Schema {
            path: ws.path(CONSIDERED),
            message: "duplicate (job_id, worker_id) pairs".into(),
        });
    }
    for r in recs.iter_mut() {
        if let Some(d) = by_key.get(&(r.job_id, r.worker_id)) {
            r.effort_corrected = Some(d.effort);
            r.c_hat = Some(d.c_hat);
            r.a_hat = Some(d.a_hat);
        }
    }
    ws.write_records(TYPES, &recs)?;
    let mut rejects_by_reason = BTreeMap::new();
    for r in &inv.rejects {
        *rejects_by_reason.entry(format!("{:?}", r.reason)).or_default() += 1;
    }
    let summary = InversionSummary {
        n_points: inv.accepted.len() + inv.rejects.len(),
        accepted: inv.accepted.len(),
        reject_rate: inv.reject_rate(),
        rejects_by_reason,
        rejects: inv.rejects,
    };
    ws.write_json(INVERSION, "inversion", seed, &summary)
}

/// Recovered types from records carrying `c_hat` and `a_hat`.
pub fn pseudo_from_records(recs: &[ApplicationRecord]) -> Result<Vec<TypePseudoData>, jobsignal_core::Error> {
    recs.iter()
        .enumerate()
        .filter_map(|(i, r)| match (r.c_hat, r.a_hat) {
            (Some(c), Some(a)) => Some((i, r, c, a)),
            _ => None,
        })
        .map(|(i, r, c_hat, a_hat)| {
            let missing = |f: &str| jobsignal_core::Error::Schema { line: i + 1, message: format!("missing field `{f}`") };
            Ok(TypePseudoData {
                id: i as u64,
                group: r.group()?,
                bid: r.bid,
                effort: r.effort_corrected.ok_or_else(|| missing("effort_corrected"))?,
                signal: r.signal.ok_or_else(|| missing("signal"))?,
                c_hat,
                a_hat,
            })
        })
        .collect()
}

fn read_pseudo(ws: &mut Workspace) -> Result<Vec<TypePseudoData>, PipelineError> {
    let recs: Vec<ApplicationRecord> = ws.read_records(TYPES)?;
    pseudo_from_records(&recs).map_err(|e| PipelineError::at(&ws.path(TYPES), e))
}

fn fit_beliefs_stage(cfg: &PipelineConfig, ws: &mut Workspace, seed: u64) -> Result<(), PipelineError> {
    let recs: Vec<ApplicationRecord> = ws.read_records(TYPES)?;
    let pseudo = pseudo_from_records(&recs).map_err(|e| PipelineError::at(&ws.path(TYPES), e))?;
    for r in &recs {
        let g = r.group()?;
        if !pseudo.iter().any(|d| d.group == g) {
            return Err(PipelineError::Failed {
                context: ws.path(TYPES).display().to_string(),
                message: format!("no recovered types in group {g}; see {INVERSION} for reject reasons"),
            });
        }
    }
    let data: Vec<_> = pseudo.iter().map(|d| (d.group, d.signal, d.a_hat)).collect();
    let beliefs = fit_beliefs(&data, cfg.estimation.n_bins)?;
    ws.write_json(BELIEFS, "beliefs", seed, &beliefs)
}

fn fit_demand(cfg: &PipelineConfig, ws: &mut Workspace, seed: u64) -> Result<(), PipelineError> {
    let (_, posts) = considered_posts(ws)?;
    let beliefs: BeliefFunction = ws.read_json(BELIEFS, "beliefs")?;
    let fit = fit_structural(&choice_jobs(&posts)?, &beliefs, None, &fit_options(cfg))?;
    ws.write_params(STRUCTURAL, "structural demand", &FlatParams::from(&fit.params))?;
    ws.write_json(STRUCTURAL_FIT, "structural-fit", seed, &fit)
}

pub fn apply_overrides(
    params: &FlatParams,
    overrides: &BTreeMap<String, f64>,
) -> Result<StructuralParams, PipelineError> {
    let mut p = params.clone();
    for (k, v) in overrides {
        match p.0.get_mut(k) {
            Some(slot) => *slot = *v,
            None => return Err(PipelineError::Config(format!("override `{k}` names no structural parameter"))),
        }
    }
    Ok(StructuralParams::try_from(&p)?)
}

fn counterfactual(cfg: &PipelineConfig, ws: &mut Workspace, seed: u64) -> Result<(), PipelineError> {
    let (_, posts) = considered_posts(ws)?;
    let pseudo = read_pseudo(ws)?;
    let params = apply_overrides(&ws.read_params(STRUCTURAL)?, &cfg.overrides)?;
    let beliefs: BeliefFunction = ws.read_json(BELIEFS, "beliefs")?;
    let side: SignalSide = ws.read_json(SIGNAL_SIDE, "signal-side")?;
    let t = cfg.counterfactual.truncation;
    let types = fit_type_distribution(&pseudo, t, 1.0 - t)?;
    let arrival = ArrivalDistribution::uniform(job_templates(&posts))?;
    let production = side.productions();
    let inputs = CounterfactualInputs {
        types: &types,
        pseudo: &pseudo,
        params: &params,
        beliefs: &beliefs,
        production: &production,
        arrival: &arrival,
        consideration: &Consideration::FromTemplates,
    };
    let cc = CounterfactualConfig { n_jobs: cfg.counterfactual.n_jobs, solver: cfg.solver.clone(), seed };
    let (results, markets): (CounterfactualResults, _) = run_counterfactuals(inputs, &cc)?;
    ws.write_json(COUNTERFACTUAL, "counterfactual", seed, &results)?;
    let mut w = ws.csv(OUTCOMES)?;
    let path = ws.path(OUTCOMES);
    let err = |e: csv::Error| PipelineError::at(&path, e);
    w.write_record(["scenario", "job_id", "worker_id", "group", "cost", "ability", "bid", "effort", "considered", "choice_prob"])
        .map_err(err)?;
    for (label, m) in [("SQ", &markets.sq), ("NS", &markets.ns), ("FI", &markets.fi)] {
        write_outcomes(&mut w, label, m).map_err(err)?;
    }
    w.flush().map_err(|e| PipelineError::io(&path, e))
}

fn write_outcomes(w: &mut csv::Writer<std::fs::File>, label: &str, m: &SimulatedMarket) -> Result<(), csv::Error> {
    for j in &m.jobs {
        for (a, h) in j.post.applications.iter().zip(&j.hidden) {
            w.write_record([
                label.to_string(),
                a.job_id.to_string(),
                a.worker_id.to_string(),
                a.group.to_string(),
                format!("{:?}", h.cost),
                format!("{:?}", h.ability),
                format!("{:?}", a.bid),
                a.effort.map(|e| format!("{e:?}")).unwrap_or_default(),
                a.considered.to_string(),
                format!("{:?}", h.choice_prob),
            ])?;
        }
    }
    Ok(())
}
