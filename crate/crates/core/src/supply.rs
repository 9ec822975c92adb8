//! Recovering applicant types: signal production by group, the
//! empirical-Bayes effort correction, and inversion of the bid and effort
//! first-order conditions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupMap, ObservableGroup, SignalProduction, EFFORT_MAX, EFFORT_MIN};
use crate::win_probability::{SurfacePoint, WinSurface};

/// Largest allowed shift in log effort.
pub const EFFORT_SHIFT_CAP: f64 = 1.25;

/// One application with a measured time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedSignal {
    pub worker_id: u64,
    pub group: ObservableGroup,
    pub signal: f64,
    /// Measured time in minutes.
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalEstimate {
    pub k: f64,
    pub gamma: f64,
    pub noise_var: f64,
    pub se_gamma: f64,
    pub n_obs: usize,
    pub n_workers: usize,
    /// False when the group fell back to pooled OLS.
    pub fixed_effects: bool,
    pub diagnostics: Vec<String>,
}

impl SignalEstimate {
    pub fn production(&self) -> Result<SignalProduction> {
        SignalProduction::new(self.k, self.gamma, self.noise_var)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalProductionFit {
    pub groups: GroupMap<SignalEstimate>,
    /// `s - K - gamma * ln t`, aligned with the input.
    pub residuals: Vec<f64>,
    /// Groups that could not be estimated, with the reason.
    pub skipped: GroupMap<String>,
}

impl SignalProductionFit {
    /// Production functions for groups with a positive slope.
    pub fn productions(&self) -> GroupMap<SignalProduction> {
        self.groups.iter().filter_map(|(g, e)| e.production().ok().map(|p| (*g, p))).collect()
    }
}

fn estimate_group(rows: &[(u64, f64, f64)]) -> std::result::Result<SignalEstimate, String> {
    // rows: (worker, ln t, s)
    let n = rows.len();
    if n < 3 {
        return Err(format!("only {n} observations"));
    }
    let mut by_worker: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for &(w, x, y) in rows {
        let e = by_worker.entry(w).or_insert((0.0, 0.0, 0));
        e.0 += x;
        e.1 += y;
        e.2 += 1;
    }
    let n_workers = by_worker.len();
    let repeat_workers = by_worker.values().filter(|v| v.2 >= 2).count();
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(w, x, y) in rows {
        let (sx, sy, c) = by_worker[&w];
        let (dx, dy) = (x - sx / c as f64, y - sy / c as f64);
        sxx += dx * dx;
        sxy += dx * dy;
    }
    let mx = rows.iter().map(|r| r.1).sum::<f64>() / n as f64;
    let my = rows.iter().map(|r| r.2).sum::<f64>() / n as f64;
    let mut diagnostics = Vec::new();
    let fe_ok = repeat_workers >= 2 && sxx > 1e-12 && n > n_workers + 1;
    if fe_ok {
        let gamma = sxy / sxx;
        let mut rss = 0.0;
        for &(w, x, y) in rows {
            let (sx, sy, c) = by_worker[&w];
            let u = (y - sy / c as f64) - gamma * (x - sx / c as f64);
            rss += u * u;
        }
        let noise_var = rss / (n - n_workers - 1) as f64;
        return Ok(SignalEstimate {
            k: my - gamma * mx,
            gamma,
            noise_var,
            se_gamma: (noise_var / sxx).sqrt(),
            n_obs: n,
            n_workers,
            fixed_effects: true,
            diagnostics,
        });
    }
    diagnostics.push("no usable within-worker variation; pooled OLS".to_string());
    let sxx: f64 = rows.iter().map(|r| (r.1 - mx).powi(2)).sum();
    if sxx <= 1e-12 {
        return Err("no variation in log time".to_string());
    }
    let gamma = rows.iter().map(|r| (r.1 - mx) * (r.2 - my)).sum::<f64>() / sxx;
    let k = my - gamma * mx;
    let rss: f64 = rows.iter().map(|r| (r.2 - k - gamma * r.1).powi(2)).sum();
    let noise_var = rss / (n - 2) as f64;
    Ok(SignalEstimate {
        k,
        gamma,
        noise_var,
        se_gamma: (noise_var / sxx).sqrt(),
        n_obs: n,
        n_workers,
        fixed_effects: false,
        diagnostics,
    })
}

/// Regresses signals on log time by group with worker fixed effects. The
/// intercept is the grand-mean one, so worker effects average to zero over
/// observations and stay in the residuals.
pub fn estimate_signal_production(data: &[TimedSignal]) -> Result<SignalProductionFit> {
    if data.is_empty() {
        return Err(Error::data("no timed signals"));
    }
    let mut rows: GroupMap<Vec<(u64, f64, f64)>> = GroupMap::new();
    for d in data {
        if !(d.time > 0.0) || !d.time.is_finite() || !d.signal.is_finite() {
            return Err(Error::input(format!("invalid time {} or signal {}", d.time, d.signal)));
        }
        rows.entry(d.group).or_default().push((d.worker_id, d.time.ln(), d.signal));
    }
    let mut groups = GroupMap::new();
    let mut skipped = GroupMap::new();
    for (g, r) in &rows {
        match estimate_group(r) {
            Ok(mut est) => {
                if !(est.gamma > 0.0) || !(est.noise_var > 0.0) {
                    est.diagnostics.push("nonpositive slope or variance".to_string());
                    skipped.insert(*g, format!("slope {} variance {}", est.gamma, est.noise_var));
                }
                groups.insert(*g, est);
            }
            Err(why) => {
                skipped.insert(*g, why);
            }
        }
    }
    let residuals = data
        .iter()
        .map(|d| groups.get(&d.group).map_or(f64::NAN, |e: &SignalEstimate| d.signal - e.k - e.gamma * d.time.ln()))
        .collect();
    Ok(SignalProductionFit { groups, residuals, skipped })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerCorrection {
    /// Total precision `S_j`.
    pub precision: f64,
    pub phi_tilde: f64,
    pub phi_eb: f64,
    /// Capped shift in log effort.
    pub shift: f64,
    pub n_obs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffortCorrectionModel {
    pub v_eta: f64,
    pub cap: f64,
    pub workers: BTreeMap<u64, WorkerCorrection>,
    /// Corrected effort per input row (NaN where the group has no estimate).
    pub corrected: Vec<f64>,
    pub diagnostics: Vec<String>,
}

/// Shrinks each worker's mean normalized residual toward zero and rescales
/// measured times by the capped posterior mean.
pub fn correct_effort(data: &[TimedSignal], fit: &SignalProductionFit) -> Result<EffortCorrectionModel> {
    if data.len() != fit.residuals.len() {
        return Err(Error::input("residuals do not match the timed signals"));
    }
    let mut acc: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for (d, &r) in data.iter().zip(&fit.residuals) {
        let Some(est) = fit.groups.get(&d.group).filter(|_| !fit.skipped.contains_key(&d.group)) else {
            continue;
        };
        let y = r / est.gamma;
        let w = est.gamma * est.gamma / est.noise_var;
        let e = acc.entry(d.worker_id).or_insert((0.0, 0.0, 0));
        e.0 += w;
        e.1 += w * y;
        e.2 += 1;
    }
    let mut diagnostics = Vec::new();
    let repeat: Vec<(f64, f64)> =
        acc.values().filter(|v| v.2 >= 2).map(|&(s, sy, _)| (s, sy / s)).collect();
    let v_eta = if repeat.len() >= 2 {
        let total: f64 = repeat.iter().map(|r| r.0).sum();
        let mean = repeat.iter().map(|r| r.0 * r.1).sum::<f64>() / total;
        let var_w = repeat.iter().map(|r| r.0 * (r.1 - mean).powi(2)).sum::<f64>() / total;
        (var_w - repeat.len() as f64 / total).max(0.0)
    } else {
        diagnostics.push("fewer than two repeat workers; no correction".to_string());
        0.0
    };
    let workers: BTreeMap<u64, WorkerCorrection> = acc
        .into_iter()
        .map(|(id, (s, sy, n))| {
            let phi_tilde = sy / s;
            let phi_eb = v_eta * s / (1.0 + v_eta * s) * phi_tilde;
            let shift = phi_eb.clamp(-EFFORT_SHIFT_CAP, EFFORT_SHIFT_CAP);
            (id, WorkerCorrection { precision: s, phi_tilde, phi_eb, shift, n_obs: n })
        })
        .collect();
    let corrected = data
        .iter()
        .map(|d| workers.get(&d.worker_id).map_or(f64::NAN, |w| d.time * w.shift.exp()))
        .collect();
    Ok(EffortCorrectionModel { v_eta, cap: EFFORT_SHIFT_CAP, workers, corrected, diagnostics })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    NonPositiveWinProbability,
    NonNegativeBidSlope,
    NonPositiveEffortSlope,
    EffortOutOfDomain,
    NonFinite,
    NoSurface,
}

/// Inverts both first-order conditions at one observation: returns `(c, a)`.
pub fn invert_point(bid: f64, effort: f64, sp: SurfacePoint) -> std::result::Result<(f64, f64), RejectReason> {
    if !(sp.p.is_finite() && sp.dp_db.is_finite() && sp.dp_de.is_finite()) {
        return Err(RejectReason::NonFinite);
    }
    if sp.p <= 0.0 {
        return Err(RejectReason::NonPositiveWinProbability);
    }
    if sp.dp_db >= 0.0 {
        return Err(RejectReason::NonNegativeBidSlope);
    }
    if sp.dp_de <= 0.0 {
        return Err(RejectReason::NonPositiveEffortSlope);
    }
    let markup = -sp.p / sp.dp_db;
    let c = bid - markup;
    let a = effort.ln() - (sp.dp_de * markup).ln();
    if c.is_finite() && a.is_finite() {
        Ok((c, a))
    } else {
        Err(RejectReason::NonFinite)
    }
}

/// An observation to invert.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionPoint {
    pub id: u64,
    pub group: ObservableGroup,
    pub bid: f64,
    pub effort: f64,
    pub signal: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypePseudoData {
    pub id: u64,
    pub group: ObservableGroup,
    pub bid: f64,
    pub effort: f64,
    pub signal: f64,
    pub c_hat: f64,
    pub a_hat: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InversionReject {
    pub id: u64,
    pub group: ObservableGroup,
    pub reason: RejectReason,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub accepted: Vec<TypePseudoData>,
    pub rejects: Vec<InversionReject>,
}

impl InversionResult {
    pub fn reject_rate(&self) -> f64 {
        let n = self.accepted.len() + self.rejects.len();
        if n == 0 {
            0.0
        } else {
            self.rejects.len() as f64 / n as f64
        }
    }
}

/// Inverts every point against its group's surface; failures become rejects.
pub fn invert_focs<S: WinSurface>(surfaces: &GroupMap<S>, points: &[ActionPoint]) -> InversionResult {
    let mut out = InversionResult::default();
    for pt in points {
        let reject = |reason| InversionReject { id: pt.id, group: pt.group, reason };
        let Some(surface) = surfaces.get(&pt.group) else {
            out.rejects.push(reject(RejectReason::NoSurface));
            continue;
        };
        if !(pt.effort >= EFFORT_MIN * (1.0 - 1e-9) && pt.effort <= EFFORT_MAX * (1.0 + 1e-9)) {
            out.rejects.push(reject(RejectReason::EffortOutOfDomain));
            continue;
        }
        let sp = match surface.eval(pt.bid, pt.effort) {
            Ok(sp) => sp,
            Err(_) => {
                out.rejects.push(reject(RejectReason::NonFinite));
                continue;
            }
        };
        match invert_point(pt.bid, pt.effort, sp) {
            Ok((c_hat, a_hat)) => out.accepted.push(TypePseudoData {
                id: pt.id,
                group: pt.group,
                bid: pt.bid,
                effort: pt.effort,
                signal: pt.signal,
                c_hat,
                a_hat,
            }),
            Err(reason) => out.rejects.push(reject(reason)),
        }
    }
    out
}
