use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BID_MAX, BID_MIN};

/// Groups with fewer observations than this are flagged sparse.
pub const MIN_GROUP_OBS: usize = 40;

/// Discrete bid bins with a uniform deviation layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidBins {
    pub centers: Vec<f64>,
    pub masses: Vec<f64>,
    /// Share of a bin's bids that are not exactly at its center.
    pub deviation_freq: Vec<f64>,
    pub intervals: Vec<(f64, f64)>,
    pub n_obs: usize,
    pub sparse: bool,
}

impl BidBins {
    /// Nearest center; exact midpoints go to the lower center.
    pub fn assign(&self, bid: f64) -> usize {
        let k = self.centers.partition_point(|&c| c < bid);
        if k == 0 {
            return 0;
        }
        if k == self.centers.len() {
            return k - 1;
        }
        if bid - self.centers[k - 1] <= self.centers[k] - bid {
            k - 1
        } else {
            k
        }
    }

    /// Bid for bin `k`: the center, or a uniform draw over the bin's
    /// interval with the bin's deviation probability.
    pub fn realize<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64 {
        let dev = self.deviation_freq[k];
        if dev > 0.0 && rng.random::<f64>() < dev {
            let (lo, hi) = self.intervals[k];
            lo + (hi - lo) * rng.random::<f64>()
        } else {
            self.centers[k]
        }
    }

    /// Cumulative bin masses, the marginal CDF of the bin index.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out: Vec<f64> = self
            .masses
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        if let Some(last) = out.last_mut() {
            *last = 1.0;
        }
        out
    }
}

pub fn fit_bid_bins(bids: &[f64]) -> Result<BidBins> {
    if bids.is_empty() {
        return Err(Error::data("no bids to bin"));
    }
    if let Some(b) = bids.iter().find(|b| !(BID_MIN..=BID_MAX).contains(*b)) {
        return Err(Error::input(format!("bid {b} outside [{BID_MIN}, {BID_MAX}]")));
    }
    let n = bids.len();
    let mut sorted = bids.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let min_mass = (0.005 * n as f64).max(20.0);

    let mut centers = vec![BID_MIN];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && sorted[j] == sorted[i] {
            j += 1;
        }
        let v = sorted[i];
        if (j - i) as f64 >= min_mass && v > BID_MIN && v < BID_MAX {
            centers.push(v);
        }
        i = j;
    }
    centers.push(BID_MAX);

    let k = centers.len();
    let mut bins = BidBins {
        centers,
        masses: vec![0.0; k],
        deviation_freq: vec![0.0; k],
        intervals: Vec::with_capacity(k),
        n_obs: n,
        sparse: n < MIN_GROUP_OBS,
    };
    let mut counts = vec![0usize; k];
    let mut off = vec![0usize; k];
    for &b in bids {
        let c = bins.assign(b);
        counts[c] += 1;
        if b != bins.centers[c] {
            off[c] += 1;
        }
    }
    for c in 0..k {
        bins.masses[c] = counts[c] as f64 / n as f64;
        if counts[c] > 0 {
            bins.deviation_freq[c] = off[c] as f64 / counts[c] as f64;
        }
        let lo = if c == 0 { BID_MIN } else { 0.5 * (bins.centers[c - 1] + bins.centers[c]) };
        let hi = if c + 1 == k { BID_MAX } else { 0.5 * (bins.centers[c] + bins.centers[c + 1]) };
        bins.intervals.push((lo, hi));
    }
    Ok(bins)
}
