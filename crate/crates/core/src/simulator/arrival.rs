use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupMap, ObservableGroup};
use crate::win_probability::{JobTemplate, SlotTemplate};

/// Empirical distribution of job compositions. Each entry is one job's
/// applicants in arrival order, with the consideration flags observed in
/// the source when available.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrivalDistribution {
    pub jobs: Vec<JobTemplate>,
    pub weights: Vec<f64>,
}

impl ArrivalDistribution {
    pub fn new(jobs: Vec<JobTemplate>, weights: Vec<f64>) -> Result<Self> {
        if jobs.is_empty() || jobs.len() != weights.len() {
            return Err(Error::param("arrival distribution needs one weight per composition"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::param("arrival weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::param("arrival weights sum to zero"));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self { jobs, weights })
    }

    pub fn uniform(jobs: Vec<JobTemplate>) -> Result<Self> {
        let n = jobs.len();
        Self::new(jobs, vec![1.0; n])
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &JobTemplate {
        let idx = WeightedIndex::new(&self.weights).expect("validated weights");
        &self.jobs[idx.sample(rng)]
    }

    pub fn mean_size(&self) -> f64 {
        self.jobs.iter().zip(&self.weights).map(|(j, w)| j.slots.len() as f64 * w).sum()
    }

    pub fn groups(&self) -> Vec<ObservableGroup> {
        let mut g: Vec<ObservableGroup> = self.jobs.iter().flat_map(|j| j.slots.iter().map(|s| s.group)).collect();
        g.sort();
        g.dedup();
        g
    }
}

/// How considered applications are chosen in simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Consideration {
    /// Independent draws with a per-group rate (falling back to `default`).
    Bernoulli { rates: GroupMap<f64>, default: f64 },
    /// Keep the flags carried by the sampled composition.
    FromTemplates,
}

impl Consideration {
    pub fn uniform(rate: f64) -> Self {
        Consideration::Bernoulli { rates: GroupMap::new(), default: rate }
    }

    pub fn validate(&self) -> Result<()> {
        if let Consideration::Bernoulli { rates, default } = self {
            if rates.values().chain(std::iter::once(default)).any(|r| !(0.0..=1.0).contains(r)) {
                return Err(Error::param("consideration rates must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, slot: &SlotTemplate, rng: &mut R) -> bool {
        match self {
            Consideration::Bernoulli { rates, default } => {
                let p = rates.get(&slot.group).copied().unwrap_or(*default);
                rng.random::<f64>() < p
            }
            Consideration::FromTemplates => slot.considered,
        }
    }
}

/// Synthetic compositions: sizes uniform on `[min_size, max_size]`, groups
/// drawn with the given shares, all flags false.
pub fn synthetic_compositions<R: Rng + ?Sized>(
    n: usize,
    shares: &[(ObservableGroup, f64)],
    min_size: usize,
    max_size: usize,
    rng: &mut R,
) -> Result<Vec<JobTemplate>> {
    if shares.is_empty() || min_size > max_size {
        return Err(Error::param("need group shares and min_size <= max_size"));
    }
    let idx = WeightedIndex::new(shares.iter().map(|s| s.1)).map_err(|e| Error::param(e.to_string()))?;
    Ok((0..n)
        .map(|_| {
            let size = rng.random_range(min_size..=max_size);
            JobTemplate {
                slots: (0..size)
                    .map(|_| SlotTemplate { group: shares[idx.sample(rng)].0, considered: false })
                    .collect(),
            }
        })
        .collect())
}
