//! Employer beliefs `E[a | s, x]`: equal-mass signal bins, isotonic fit of
//! bin means, then a monotone cubic through the fitted knots.

mod pava;
mod pchip;

pub use pava::pava;
pub use pchip::Pchip;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupMap, ObservableGroup};

pub const DEFAULT_BINS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupBelief {
    pub curve: Pchip,
    /// Weight (observation count) behind each knot.
    pub knot_weights: Vec<f64>,
    pub n_obs: usize,
    pub n_bins: usize,
    pub diagnostics: Vec<String>,
}

impl GroupBelief {
    pub fn eval(&self, s: f64) -> f64 {
        self.curve.eval(s)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        self.curve.derivative(s)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BeliefFunction {
    pub groups: GroupMap<GroupBelief>,
}

impl BeliefFunction {
    pub fn group(&self, group: ObservableGroup) -> Result<&GroupBelief> {
        self.groups.get(&group).ok_or(Error::UnknownGroup(group))
    }

    pub fn evaluate(&self, s: f64, group: ObservableGroup) -> Result<f64> {
        Ok(self.group(group)?.eval(s))
    }

    pub fn derivative(&self, s: f64, group: ObservableGroup) -> Result<f64> {
        Ok(self.group(group)?.derivative(s))
    }
}

pub fn evaluate_belief(f: &BeliefFunction, s: f64, group: ObservableGroup) -> Result<f64> {
    f.evaluate(s, group)
}

/// Fits one group's belief from (signal, ability) pairs.
pub fn fit_group_belief(signals: &[f64], abilities: &[f64], n_bins: usize) -> Result<GroupBelief> {
    let n = signals.len();
    if n == 0 || n != abilities.len() {
        return Err(Error::data("belief fit needs matching, nonempty signal and ability data"));
    }
    let mut diagnostics = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| signals[i].total_cmp(&signals[j]));

    let distinct = order.windows(2).any(|w| signals[w[0]] != signals[w[1]]);
    if !distinct {
        let m = abilities.iter().sum::<f64>() / n as f64;
        diagnostics.push("fewer than two distinct signals; constant belief".to_string());
        return Ok(GroupBelief {
            curve: Pchip::new(vec![signals[0]], vec![m])?,
            knot_weights: vec![n as f64],
            n_obs: n,
            n_bins: 1,
            diagnostics,
        });
    }

    let mut bins = n_bins.max(1);
    if n < bins {
        bins = (n / 10).max(5).min(n);
        diagnostics.push(format!("{n} observations; bins reduced to {bins}"));
    }

    // Equal-mass contiguous chunks of the sorted data.
    let mut knots: Vec<(f64, f64, f64)> = Vec::with_capacity(bins);
    for b in 0..bins {
        let lo = b * n / bins;
        let hi = (b + 1) * n / bins;
        if hi == lo {
            continue;
        }
        let (mut ss, mut sa) = (0.0, 0.0);
        for &i in &order[lo..hi] {
            ss += signals[i];
            sa += abilities[i];
        }
        let w = (hi - lo) as f64;
        let s_mean = ss / w;
        match knots.last_mut() {
            // Discrete signals can give adjacent bins the same mean signal.
            Some(last) if last.0 == s_mean => {
                last.1 += sa;
                last.2 += w;
            }
            _ => knots.push((s_mean, sa, w)),
        }
    }
    if knots.len() < bins {
        diagnostics.push(format!("{} bins share a mean signal and were merged", bins - knots.len()));
    }
    let xs: Vec<f64> = knots.iter().map(|k| k.0).collect();
    let means: Vec<f64> = knots.iter().map(|k| k.1 / k.2).collect();
    let weights: Vec<f64> = knots.iter().map(|k| k.2).collect();
    let fitted = pava(&means, &weights);
    Ok(GroupBelief {
        curve: Pchip::new(xs, fitted)?,
        knot_weights: weights,
        n_obs: n,
        n_bins: bins,
        diagnostics,
    })
}

/// Fits beliefs for every group present in `data` (group, signal, ability).
pub fn fit_beliefs(data: &[(ObservableGroup, f64, f64)], n_bins: usize) -> Result<BeliefFunction> {
    let mut by_group: GroupMap<(Vec<f64>, Vec<f64>)> = GroupMap::new();
    for &(g, s, a) in data {
        if !s.is_finite() || !a.is_finite() {
            return Err(Error::input(format!("non-finite belief data in {g}")));
        }
        let e = by_group.entry(g).or_default();
        e.0.push(s);
        e.1.push(a);
    }
    let mut groups = GroupMap::new();
    for (g, (s, a)) in by_group {
        groups.insert(g, fit_group_belief(&s, &a, n_bins)?);
    }
    Ok(BeliefFunction { groups })
}
