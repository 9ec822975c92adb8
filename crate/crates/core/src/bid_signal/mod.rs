//! Joint distribution of (bid, signal) within a group: discrete bid bins with
//! a uniform deviation layer, tied to the signal through a Student-t copula.

mod bins;
mod copula;

pub use bins::{fit_bid_bins, BidBins, MIN_GROUP_OBS};
pub use copula::{
    fit_t_copula, kendall_tau, pseudo_observations, sample_t_copula, t_copula_loglik, TCopula,
    DOF_MAX, DOF_MIN,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupMap, ObservableGroup};

/// Copula plus the two marginals it couples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopulaModel {
    pub copula: TCopula,
    /// CDF of the bid-bin index.
    pub bin_cdf: Vec<f64>,
    /// Sorted signals; their step ECDF is the signal marginal.
    pub signal_sorted: Vec<f64>,
    pub diagnostics: Vec<String>,
}

impl CopulaModel {
    pub fn bin_quantile(&self, u: f64) -> usize {
        self.bin_cdf.partition_point(|&c| c < u).min(self.bin_cdf.len() - 1)
    }

    pub fn signal_quantile(&self, u: f64) -> f64 {
        let n = self.signal_sorted.len();
        let k = (u * n as f64).ceil() as usize;
        self.signal_sorted[k.clamp(1, n) - 1]
    }
}

/// Fits the copula between bin indices and signals for one group.
pub fn fit_copula(bin_indices: &[usize], signals: &[f64], bins: &BidBins) -> Result<CopulaModel> {
    if bin_indices.len() != signals.len() || signals.is_empty() {
        return Err(Error::data("copula fit needs matching, nonempty bins and signals"));
    }
    let mut diagnostics = Vec::new();
    if signals.len() < MIN_GROUP_OBS {
        diagnostics.push(format!("only {} observations", signals.len()));
    }
    let mut signal_sorted = signals.to_vec();
    signal_sorted.sort_by(|a, b| a.total_cmp(b));
    let x: Vec<f64> = bin_indices.iter().map(|&k| k as f64).collect();
    let degenerate = x.iter().all(|&v| v == x[0]) || signals.iter().all(|&v| v == signals[0]);
    let copula = if degenerate || signals.len() < 3 {
        diagnostics.push("degenerate marginal; independence copula".to_string());
        TCopula { rho: 0.0, dof: DOF_MAX, independent: true, loglik: 0.0 }
    } else {
        fit_t_copula(&pseudo_observations(&x), &pseudo_observations(signals))?
    };
    Ok(CopulaModel { copula, bin_cdf: bins.cdf(), signal_sorted, diagnostics })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupBidSignal {
    pub bins: BidBins,
    pub copula: CopulaModel,
}

impl GroupBidSignal {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let (u1, u2) = if self.copula.copula.independent {
            (rng.random::<f64>(), rng.random::<f64>())
        } else {
            sample_t_copula(self.copula.copula.rho, self.copula.copula.dof, rng)
        };
        let k = self.copula.bin_quantile(u1);
        let s = self.copula.signal_quantile(u2);
        (self.bins.realize(k, rng), s)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BidSignalModel {
    pub groups: GroupMap<GroupBidSignal>,
    /// Sparse groups and the groups whose data were pooled into their fit.
    pub pooling: GroupMap<Vec<ObservableGroup>>,
}

impl BidSignalModel {
    pub fn sample<R: Rng + ?Sized>(&self, group: ObservableGroup, rng: &mut R) -> Result<(f64, f64)> {
        Ok(self.groups.get(&group).ok_or(Error::UnknownGroup(group))?.sample(rng))
    }
}

pub fn sample_bid_signal<R: Rng + ?Sized>(
    model: &BidSignalModel,
    group: ObservableGroup,
    rng: &mut R,
) -> Result<(f64, f64)> {
    model.sample(group, rng)
}

/// Donor order for a sparse group: same country and arrival cell by
/// increasing reputation distance (lower tier first on ties), then every
/// other group.
fn donor_order(g: ObservableGroup, present: &[ObservableGroup]) -> Vec<ObservableGroup> {
    let mut same: Vec<ObservableGroup> = present
        .iter()
        .copied()
        .filter(|h| *h != g && h.country() == g.country() && h.arrival() == g.arrival())
        .collect();
    let r = g.reputation().rank() as i64;
    same.sort_by_key(|h| {
        let d = h.reputation().rank() as i64 - r;
        (d.abs(), d)
    });
    let rest: Vec<ObservableGroup> =
        present.iter().copied().filter(|h| *h != g && !same.contains(h)).collect();
    same.extend(rest);
    same
}

/// Fits bins and copula for every group in `data` (group, bid, signal).
/// Groups below the minimum size borrow data from neighbors.
pub fn fit_bid_signal_model(data: &[(ObservableGroup, f64, f64)]) -> Result<BidSignalModel> {
    let mut by_group: GroupMap<Vec<(f64, f64)>> = GroupMap::new();
    for &(g, b, s) in data {
        by_group.entry(g).or_default().push((b, s));
    }
    if by_group.is_empty() {
        return Err(Error::data("no bid and signal data"));
    }
    let present: Vec<ObservableGroup> = by_group.keys().copied().collect();
    let mut model = BidSignalModel::default();
    for (&g, own) in &by_group {
        let mut pooled = own.clone();
        if own.len() < MIN_GROUP_OBS {
            let mut donors = Vec::new();
            for h in donor_order(g, &present) {
                if pooled.len() >= MIN_GROUP_OBS {
                    break;
                }
                pooled.extend(by_group[&h].iter().copied());
                donors.push(h);
            }
            model.pooling.insert(g, donors);
        }
        let bids: Vec<f64> = pooled.iter().map(|p| p.0).collect();
        let signals: Vec<f64> = pooled.iter().map(|p| p.1).collect();
        let mut bins = fit_bid_bins(&bids).map_err(|e| Error::data(format!("{g}: {e}")))?;
        bins.sparse = own.len() < MIN_GROUP_OBS;
        let idx: Vec<usize> = bids.iter().map(|&b| bins.assign(b)).collect();
        let copula = fit_copula(&idx, &signals, &bins)?;
        model.groups.insert(g, GroupBidSignal { bins, copula });
    }
    Ok(model)
}
