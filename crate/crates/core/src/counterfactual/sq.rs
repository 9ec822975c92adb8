//! Status-quo simulation by nearest-type bootstrap of recovered actions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupMap, ObservableGroup, WorkerType};
use crate::simulator::{ActionRule, GroupTypes, Marginal, TypeDistribution};
use crate::stats::{correlation, std_dev, std_normal_quantile};
use crate::supply::TypePseudoData;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Donor {
    pub cost: f64,
    pub ability: f64,
    pub bid: f64,
    pub effort: f64,
}

/// Donors of one group (or the pooled set), sorted by standardized cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DonorSet {
    pub donors: Vec<Donor>,
    pub cost_scale: f64,
    pub ability_scale: f64,
    keys: Vec<(f64, f64)>,
}

fn scale(v: &[f64]) -> f64 {
    let s = if v.len() > 1 { std_dev(v) } else { 0.0 };
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

impl DonorSet {
    pub fn new(mut donors: Vec<Donor>) -> Result<Self> {
        if donors.is_empty() {
            return Err(Error::data("donor set is empty"));
        }
        let cs = scale(&donors.iter().map(|d| d.cost).collect::<Vec<_>>());
        let as_ = scale(&donors.iter().map(|d| d.ability).collect::<Vec<_>>());
        donors.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.ability.total_cmp(&b.ability)));
        let keys = donors.iter().map(|d| (d.cost / cs, d.ability / as_)).collect();
        Ok(Self { donors, cost_scale: cs, ability_scale: as_, keys })
    }

    /// Nearest donor in standardized (cost, ability); ties go to the lower index.
    pub fn nearest(&self, cost: f64, ability: f64) -> &Donor {
        let (x, y) = (cost / self.cost_scale, ability / self.ability_scale);
        let start = self.keys.partition_point(|k| k.0 < x);
        let mut best = (f64::INFINITY, usize::MAX);
        let dist = |i: usize| {
            let (dx, dy) = (self.keys[i].0 - x, self.keys[i].1 - y);
            dx * dx + dy * dy
        };
        let consider = |i: usize, best: &mut (f64, usize)| {
            let d = dist(i);
            if d < best.0 || (d == best.0 && i < best.1) {
                *best = (d, i);
            }
        };
        for i in start..self.keys.len() {
            let dx = self.keys[i].0 - x;
            if dx * dx > best.0 {
                break;
            }
            consider(i, &mut best);
        }
        for i in (0..start).rev() {
            let dx = self.keys[i].0 - x;
            if dx * dx > best.0 {
                break;
            }
            consider(i, &mut best);
        }
        &self.donors[best.1]
    }
}

/// Recovered actions indexed by type, per group, with a pooled fallback.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DonorPool {
    pub groups: GroupMap<DonorSet>,
    pub pooled: DonorSet,
}

impl DonorPool {
    pub fn from_pseudo(data: &[TypePseudoData]) -> Result<Self> {
        let mut by_group: GroupMap<Vec<Donor>> = GroupMap::new();
        for d in data {
            by_group.entry(d.group).or_default().push(Donor {
                cost: d.c_hat,
                ability: d.a_hat,
                bid: d.bid,
                effort: d.effort,
            });
        }
        let pooled = DonorSet::new(by_group.values().flatten().copied().collect())?;
        let groups = by_group.into_iter().map(|(g, v)| Ok((g, DonorSet::new(v)?))).collect::<Result<_>>()?;
        Ok(Self { groups, pooled })
    }

    pub fn nearest(&self, t: &WorkerType) -> &Donor {
        self.groups.get(&t.group).unwrap_or(&self.pooled).nearest(t.cost, t.ability)
    }

    /// Groups that will fall back to the pooled donors.
    pub fn missing_groups(&self, groups: impl IntoIterator<Item = ObservableGroup>) -> Vec<ObservableGroup> {
        groups.into_iter().filter(|g| !self.groups.contains_key(g)).collect()
    }
}

impl ActionRule for DonorPool {
    fn act<R: Rng + ?Sized>(&self, t: &WorkerType, _rng: &mut R) -> Result<(f64, Option<f64>)> {
        let d = self.nearest(t);
        Ok((d.bid, Some(d.effort)))
    }
}

/// Empirical type distribution from recovered types: empirical marginals
/// per group joined by a Gaussian copula fitted on normal scores.
pub fn fit_type_distribution(data: &[TypePseudoData], q_lo: f64, q_hi: f64) -> Result<TypeDistribution> {
    let mut by_group: GroupMap<(Vec<f64>, Vec<f64>)> = GroupMap::new();
    for d in data {
        let e = by_group.entry(d.group).or_default();
        e.0.push(d.c_hat);
        e.1.push(d.a_hat);
    }
    let mut types = TypeDistribution::default();
    for (g, (c, a)) in by_group {
        let rho = if c.len() > 2 { normal_score_correlation(&c, &a).clamp(-0.99, 0.99) } else { 0.0 };
        let rho = if rho.is_finite() { rho } else { 0.0 };
        types.groups.insert(g, GroupTypes::new(Marginal::empirical(c)?, Marginal::empirical(a)?, rho, q_lo, q_hi)?);
    }
    if types.groups.is_empty() {
        return Err(Error::data("no recovered types"));
    }
    Ok(types)
}

fn normal_scores(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; n];
    let mut k = 0;
    while k < n {
        // Average ranks over ties.
        let mut m = k;
        while m + 1 < n && v[idx[m + 1]] == v[idx[k]] {
            m += 1;
        }
        let rank = 0.5 * (k + m) as f64 + 1.0;
        for &i in &idx[k..=m] {
            out[i] = std_normal_quantile(rank / (n as f64 + 1.0));
        }
        k = m + 1;
    }
    out
}

pub fn normal_score_correlation(x: &[f64], y: &[f64]) -> f64 {
    correlation(&normal_scores(x), &normal_scores(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g() -> ObservableGroup {
        "Europe/ArrOver45/High".parse().unwrap()
    }

    fn pseudo(c: f64, a: f64, bid: f64) -> TypePseudoData {
        TypePseudoData { id: 0, group: g(), bid, effort: 1.0, signal: 0.0, c_hat: c, a_hat: a }
    }

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let donors: Vec<Donor> = (0..500)
            .map(|_| Donor { cost: rng.random_range(0.0..200.0), ability: rng.random_range(-5.0..5.0), bid: 0.0, effort: 1.0 })
            .collect();
        let set = DonorSet::new(donors).unwrap();
        for _ in 0..500 {
            let (c, a) = (rng.random_range(-20.0..220.0), rng.random_range(-6.0..6.0));
            let brute = set
                .donors
                .iter()
                .min_by(|p, q| {
                    let d = |x: &Donor| {
                        ((x.cost - c) / set.cost_scale).powi(2) + ((x.ability - a) / set.ability_scale).powi(2)
                    };
                    d(p).total_cmp(&d(q))
                })
                .unwrap();
            let fast = set.nearest(c, a);
            assert_eq!((fast.cost, fast.ability), (brute.cost, brute.ability));
        }
    }

    #[test]
    fn one_donor_per_cell_is_deterministic() {
        let data = vec![pseudo(10.0, -1.0, 40.0), pseudo(100.0, 1.0, 150.0)];
        let pool = DonorPool::from_pseudo(&data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..3 {
            let t = WorkerType { cost: 20.0, ability: -0.5, group: g() };
            assert_eq!(pool.act(&t, &mut rng).unwrap(), (40.0, Some(1.0)));
            let t = WorkerType { cost: 90.0, ability: 2.0, group: g() };
            assert_eq!(pool.act(&t, &mut rng).unwrap(), (150.0, Some(1.0)));
        }
    }

    #[test]
    fn unknown_group_uses_pooled_donors() {
        let pool = DonorPool::from_pseudo(&[pseudo(10.0, 0.0, 40.0)]).unwrap();
        let other: ObservableGroup = "SouthAsia/Arr0to5/Middle".parse().unwrap();
        assert_eq!(pool.missing_groups([g(), other]), vec![other]);
        let t = WorkerType { cost: 0.0, ability: 0.0, group: other };
        assert_eq!(pool.nearest(&t).bid, 40.0);
    }

    #[test]
    fn normal_score_correlation_recovers_copula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gt = GroupTypes::new(
            Marginal::Normal { mean: 30.0, sd: 60.0 },
            Marginal::Normal { mean: 0.0, sd: 3.0 },
            0.4,
            0.005,
            0.995,
        )
        .unwrap();
        let draws: Vec<(f64, f64)> = (0..20_000).map(|_| gt.sample(&mut rng)).collect();
        let data: Vec<_> = draws.iter().map(|&(c, a)| pseudo(c, a, 50.0)).collect();
        let types = fit_type_distribution(&data, 0.005, 0.995).unwrap();
        assert!((types.groups[&g()].rho - 0.4).abs() < 0.03);
    }
}
