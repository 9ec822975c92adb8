use serde::{Deserialize, Serialize};

use super::index_logit::{FitOptions, FitReport, IndexJob, IndexLogit, Row};
use super::reduced::BID_SCALE;
use super::ChoiceJob;
use crate::beliefs::BeliefFunction;
use crate::error::{Error, Result};
use crate::model::{GroupMap, ModelParams, ObservableGroup, SignalProduction};

/// Structural index `T(x) + beta * abar + alpha_signed * b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralParams {
    pub alpha_signed: f64,
    pub beta: f64,
    pub t_by_group: GroupMap<f64>,
    pub pi: f64,
}

impl StructuralParams {
    pub fn from_model(p: &ModelParams) -> Self {
        Self { alpha_signed: -p.alpha, beta: p.beta, t_by_group: p.t_by_group.clone(), pi: p.pi }
    }

    pub fn to_model(&self, signal: GroupMap<SignalProduction>) -> ModelParams {
        ModelParams {
            alpha: -self.alpha_signed,
            beta: self.beta,
            t_by_group: self.t_by_group.clone(),
            pi: self.pi,
            signal,
        }
    }

    pub fn t(&self, group: ObservableGroup) -> Result<f64> {
        self.t_by_group.get(&group).copied().ok_or(Error::UnknownGroup(group))
    }

    pub fn index(&self, group: ObservableGroup, bid: f64, ability: f64) -> Result<f64> {
        Ok(self.t(group)? + self.beta * ability + self.alpha_signed * bid)
    }
}

/// Fills each considered option's belief value from its signal.
pub fn attach_beliefs(jobs: &mut [ChoiceJob], beliefs: &BeliefFunction) -> Result<()> {
    for job in jobs {
        for o in &mut job.options {
            o.belief = Some(beliefs.evaluate(o.signal, o.group)?);
        }
    }
    Ok(())
}

fn design(jobs: &[ChoiceJob], groups: &[ObservableGroup]) -> Result<IndexLogit> {
    let pos: GroupMap<usize> = groups.iter().enumerate().map(|(i, g)| (*g, i)).collect();
    let mut out = Vec::with_capacity(jobs.len());
    for job in jobs {
        let mut rows = Vec::with_capacity(job.options.len());
        for o in &job.options {
            let i = *pos.get(&o.group).ok_or(Error::UnknownGroup(o.group))?;
            let a = o
                .belief
                .ok_or_else(|| Error::input(format!("missing belief for a {} application", o.group)))?;
            let row: Row = vec![(0, o.bid / BID_SCALE), (1, a), (2 + i, 1.0)];
            rows.push(row);
        }
        out.push(IndexJob { rows, chosen: job.chosen });
    }
    Ok(IndexLogit { n_params: 2 + groups.len(), jobs: out })
}

fn theta(p: &StructuralParams, groups: &[ObservableGroup]) -> Vec<f64> {
    let mut t = vec![p.alpha_signed * BID_SCALE, p.beta];
    t.extend(groups.iter().map(|g| p.t_by_group[g]));
    t
}

fn check_pi(pi: f64) -> Result<()> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::param(format!("pi must lie in (0,1), got {pi}")));
    }
    Ok(())
}

pub fn structural_loglik(params: &StructuralParams, jobs: &[ChoiceJob]) -> Result<f64> {
    check_pi(params.pi)?;
    let groups: Vec<ObservableGroup> = params.t_by_group.keys().copied().collect();
    let model = design(jobs, &groups)?;
    Ok(model.loglik_grad(&theta(params, &groups), params.pi, false).0)
}

/// Log-likelihood and gradient; the returned struct holds partial
/// derivatives in the corresponding fields.
pub fn structural_loglik_grad(
    params: &StructuralParams,
    jobs: &[ChoiceJob],
) -> Result<(f64, StructuralParams)> {
    check_pi(params.pi)?;
    let groups: Vec<ObservableGroup> = params.t_by_group.keys().copied().collect();
    let model = design(jobs, &groups)?;
    let (ll, g, g_pi) = model.loglik_grad(&theta(params, &groups), params.pi, true);
    let grad = StructuralParams {
        alpha_signed: g[0] * BID_SCALE,
        beta: g[1],
        t_by_group: groups.iter().enumerate().map(|(i, gr)| (*gr, g[2 + i])).collect(),
        pi: g_pi,
    };
    Ok((ll, grad))
}

/// Fits the structural index after plugging beliefs into every considered
/// option.
pub fn fit_structural(
    jobs: &[ChoiceJob],
    beliefs: &BeliefFunction,
    init: Option<&StructuralParams>,
    opts: &FitOptions,
) -> Result<FitReport<StructuralParams>> {
    let mut jobs = jobs.to_vec();
    attach_beliefs(&mut jobs, beliefs)?;
    let mut groups: Vec<ObservableGroup> =
        jobs.iter().flat_map(|j| j.options.iter().map(|o| o.group)).collect();
    groups.sort();
    groups.dedup();
    let model = design(&jobs, &groups)?;
    let theta0 = match init {
        Some(p) => {
            let mut t = vec![p.alpha_signed * BID_SCALE, p.beta];
            t.extend(groups.iter().map(|g| p.t_by_group.get(g).copied().unwrap_or(0.0)));
            t
        }
        None => vec![0.0; model.n_params],
    };
    let raw = model.fit(&theta0, init.map(|p| p.pi), opts)?;
    let params = StructuralParams {
        alpha_signed: raw.theta[0] / BID_SCALE,
        beta: raw.theta[1],
        t_by_group: groups.iter().enumerate().map(|(i, g)| (*g, raw.theta[2 + i])).collect(),
        pi: raw.pi,
    };
    let mut std_errors = std::collections::BTreeMap::new();
    if let Some(se) = &raw.std_errors {
        std_errors.insert("alpha_signed".to_string(), se[0] / BID_SCALE);
        std_errors.insert("beta".to_string(), se[1]);
        for (i, g) in groups.iter().enumerate() {
            std_errors.insert(format!("t.{g}"), se[2 + i]);
        }
        std_errors.insert("pi".to_string(), se[model.n_params]);
    }
    Ok(FitReport {
        params,
        loglik: raw.loglik,
        n_jobs: jobs.len(),
        iterations: raw.iterations,
        converged: raw.converged,
        grad_sup_norm: raw.grad_sup_norm,
        message: raw.message,
        std_errors,
    })
}
