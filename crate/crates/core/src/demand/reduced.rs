use serde::{Deserialize, Serialize};

use super::index_logit::{FitOptions, FitReport, IndexJob, IndexLogit, Row};
use super::ChoiceJob;
use crate::error::{Error, Result};
use crate::model::{GroupMap, ObservableGroup};

/// Bids enter the optimizer divided by this, keeping coefficients O(1).
pub(crate) const BID_SCALE: f64 = 100.0;

/// Reduced-form index `K(x) + gamma(x) * s + alpha_signed * b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedFormParams {
    pub alpha_signed: f64,
    pub k_lambda: GroupMap<f64>,
    pub gamma_lambda: GroupMap<f64>,
    pub pi: f64,
}

impl ReducedFormParams {
    pub fn index(&self, group: ObservableGroup, bid: f64, signal: f64) -> Result<f64> {
        Ok(self.lambda(group, signal)? + self.alpha_signed * bid)
    }

    /// Signal part of the index.
    pub fn lambda(&self, group: ObservableGroup, signal: f64) -> Result<f64> {
        let k = self.k_lambda.get(&group).ok_or(Error::UnknownGroup(group))?;
        let g = self.gamma_lambda.get(&group).ok_or(Error::UnknownGroup(group))?;
        Ok(k + g * signal)
    }

    pub fn gamma(&self, group: ObservableGroup) -> Result<f64> {
        self.gamma_lambda.get(&group).copied().ok_or(Error::UnknownGroup(group))
    }

    fn groups(&self) -> Vec<ObservableGroup> {
        self.k_lambda.keys().copied().collect()
    }

    fn theta(&self, groups: &[ObservableGroup]) -> Vec<f64> {
        let mut t = vec![self.alpha_signed * BID_SCALE];
        for g in groups {
            t.push(self.k_lambda[g]);
            t.push(self.gamma_lambda[g]);
        }
        t
    }
}

fn design(jobs: &[ChoiceJob], groups: &[ObservableGroup]) -> Result<IndexLogit> {
    let pos: GroupMap<usize> = groups.iter().enumerate().map(|(i, g)| (*g, i)).collect();
    let mut out = Vec::with_capacity(jobs.len());
    for job in jobs {
        let mut rows = Vec::with_capacity(job.options.len());
        for o in &job.options {
            let i = *pos.get(&o.group).ok_or(Error::UnknownGroup(o.group))?;
            let row: Row = vec![(0, o.bid / BID_SCALE), (1 + 2 * i, 1.0), (2 + 2 * i, o.signal)];
            rows.push(row);
        }
        out.push(IndexJob { rows, chosen: job.chosen });
    }
    Ok(IndexLogit { n_params: 1 + 2 * groups.len(), jobs: out })
}

fn check_pi(pi: f64) -> Result<()> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::param(format!("pi must lie in (0,1), got {pi}")));
    }
    Ok(())
}

pub fn reduced_form_loglik(params: &ReducedFormParams, jobs: &[ChoiceJob]) -> Result<f64> {
    check_pi(params.pi)?;
    let groups = params.groups();
    let model = design(jobs, &groups)?;
    Ok(model.loglik_grad(&params.theta(&groups), params.pi, false).0)
}

/// Log-likelihood and its gradient, laid out in a parameter struct whose
/// fields hold the partial derivatives with respect to the same fields.
pub fn reduced_form_loglik_grad(
    params: &ReducedFormParams,
    jobs: &[ChoiceJob],
) -> Result<(f64, ReducedFormParams)> {
    check_pi(params.pi)?;
    let groups = params.groups();
    let model = design(jobs, &groups)?;
    let (ll, g, g_pi) = model.loglik_grad(&params.theta(&groups), params.pi, true);
    let mut grad = ReducedFormParams {
        alpha_signed: g[0] * BID_SCALE,
        k_lambda: GroupMap::new(),
        gamma_lambda: GroupMap::new(),
        pi: g_pi,
    };
    for (i, gr) in groups.iter().enumerate() {
        grad.k_lambda.insert(*gr, g[1 + 2 * i]);
        grad.gamma_lambda.insert(*gr, g[2 + 2 * i]);
    }
    Ok((ll, grad))
}

pub fn fit_reduced_form(
    jobs: &[ChoiceJob],
    init: Option<&ReducedFormParams>,
    opts: &FitOptions,
) -> Result<FitReport<ReducedFormParams>> {
    let mut groups: Vec<ObservableGroup> =
        jobs.iter().flat_map(|j| j.options.iter().map(|o| o.group)).collect();
    groups.sort();
    groups.dedup();
    let model = design(jobs, &groups)?;
    let theta0 = match init {
        Some(p) => {
            let mut t = vec![p.alpha_signed * BID_SCALE];
            for g in &groups {
                t.push(p.k_lambda.get(g).copied().unwrap_or(0.0));
                t.push(p.gamma_lambda.get(g).copied().unwrap_or(0.0));
            }
            t
        }
        None => vec![0.0; model.n_params],
    };
    let raw = model.fit(&theta0, init.map(|p| p.pi), opts)?;
    let mut params = ReducedFormParams {
        alpha_signed: raw.theta[0] / BID_SCALE,
        k_lambda: GroupMap::new(),
        gamma_lambda: GroupMap::new(),
        pi: raw.pi,
    };
    let mut std_errors = std::collections::BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        params.k_lambda.insert(*g, raw.theta[1 + 2 * i]);
        params.gamma_lambda.insert(*g, raw.theta[2 + 2 * i]);
    }
    if let Some(se) = &raw.std_errors {
        std_errors.insert("alpha_signed".to_string(), se[0] / BID_SCALE);
        for (i, g) in groups.iter().enumerate() {
            std_errors.insert(format!("k_lambda.{g}"), se[1 + 2 * i]);
            std_errors.insert(format!("gamma_lambda.{g}"), se[2 + 2 * i]);
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
