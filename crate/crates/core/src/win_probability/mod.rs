//! Ex-ante win probability `P*(b, e; x)` simulated over a pool of job posts.
//!
//! A hypothetical applicant of group `x` takes the place of each simulated
//! same-group applicant in turn, inheriting that slot's consideration flag
//! and signal-noise draw. Competitors enter only through the leave-one-out
//! sum of their exponentiated utilities.

mod cache;
mod index;

pub use cache::{CachedSurface, GRID_BIDS, GRID_EFFORTS};
pub use index::{EmployerIndex, StructuralIndex};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bid_signal::BidSignalModel;
use crate::error::{Error, Result};
use crate::model::{GroupMap, ObservableGroup, SignalProduction, BID_MAX, BID_MIN, EFFORT_MAX, EFFORT_MIN};

/// Pools smaller than this give noisy integrals.
pub const MIN_POOL_JOBS: usize = 1000;

/// Value and first derivatives of a win-probability surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub p: f64,
    pub dp_db: f64,
    pub dp_de: f64,
}

/// A per-group win-probability function of bid and effort.
pub trait WinSurface {
    fn eval(&self, bid: f64, effort: f64) -> Result<SurfacePoint>;
}

/// Group and consideration flag of one application slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotTemplate {
    pub group: ObservableGroup,
    pub considered: bool,
}

/// Composition and consideration set of one observed job post.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobTemplate {
    pub slots: Vec<SlotTemplate>,
}

/// A simulated application in the pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolSlot {
    pub group: ObservableGroup,
    pub considered: bool,
    pub bid: f64,
    pub signal: f64,
    /// `exp(delta)` of the simulated application (0 when not considered).
    pub omega: f64,
    /// Sum of the other considered applications' weights in the job.
    pub delta_minus: f64,
    /// Noise the deviator inherits in this slot.
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolJob {
    pub slots: Vec<PoolSlot>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct GroupSlots {
    /// All slots of the group, considered or not.
    n_slots: usize,
    /// (leave-one-out sum, noise) of considered slots.
    considered: Vec<(f64, f64)>,
}

/// Immutable pool of simulated job posts plus the index and signal
/// technology used to evaluate deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationPool<I> {
    pub jobs: Vec<PoolJob>,
    pub index: I,
    pub production: GroupMap<SignalProduction>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    groups: GroupMap<GroupSlots>,
}

/// Competitor draw before utilities are attached.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawSlot {
    pub group: ObservableGroup,
    pub considered: bool,
    pub bid: f64,
    pub signal: f64,
    pub noise: f64,
}

impl<I: EmployerIndex> SimulationPool<I> {
    /// Builds a pool from already drawn competitors.
    pub fn from_raw(
        raw_jobs: Vec<Vec<RawSlot>>,
        index: I,
        production: GroupMap<SignalProduction>,
    ) -> Result<Self> {
        let mut jobs = Vec::with_capacity(raw_jobs.len());
        for raw in raw_jobs {
            let mut slots: Vec<PoolSlot> = Vec::with_capacity(raw.len());
            for r in raw {
                let omega = if r.considered {
                    (index.signal_index(r.group, r.signal)? + index.price_coef() * r.bid).exp()
                } else {
                    0.0
                };
                slots.push(PoolSlot {
                    group: r.group,
                    considered: r.considered,
                    bid: r.bid,
                    signal: r.signal,
                    omega,
                    delta_minus: 0.0,
                    noise: r.noise,
                });
            }
            let total: f64 = slots.iter().map(|s| s.omega).sum();
            for s in &mut slots {
                s.delta_minus = (total - s.omega).max(0.0);
            }
            jobs.push(PoolJob { slots });
        }
        let mut pool = Self { jobs, index, production, warnings: Vec::new(), groups: GroupMap::new() };
        if pool.jobs.len() < MIN_POOL_JOBS {
            pool.warnings.push(format!(
                "pool has {} jobs; integration error may be large below {MIN_POOL_JOBS}",
                pool.jobs.len()
            ));
        }
        pool.reindex();
        Ok(pool)
    }

    /// Rebuilds the per-group lookup, e.g. after deserialization.
    pub fn reindex(&mut self) {
        let mut groups: GroupMap<GroupSlots> = GroupMap::new();
        for job in &self.jobs {
            for s in &job.slots {
                let e = groups.entry(s.group).or_default();
                e.n_slots += 1;
                if s.considered {
                    e.considered.push((s.delta_minus, s.noise));
                }
            }
        }
        self.groups = groups;
    }

    pub fn pi(&self) -> f64 {
        self.index.pi()
    }

    pub fn has_group(&self, group: ObservableGroup) -> bool {
        self.groups.contains_key(&group)
    }

    pub fn groups(&self) -> Vec<ObservableGroup> {
        self.groups.keys().copied().collect()
    }

    /// Number of slots of `group` and how many of them are considered.
    pub fn slot_counts(&self, group: ObservableGroup) -> (usize, usize) {
        self.groups.get(&group).map_or((0, 0), |g| (g.n_slots, g.considered.len()))
    }

    fn check_domain(bid: f64, effort: f64) -> Result<()> {
        let tol = 1e-9;
        if !(bid >= BID_MIN - tol && bid <= BID_MAX + tol) {
            return Err(Error::domain(format!("bid {bid} outside [{BID_MIN}, {BID_MAX}]")));
        }
        if !(effort >= EFFORT_MIN * (1.0 - tol) && effort <= EFFORT_MAX * (1.0 + tol)) {
            return Err(Error::domain(format!("effort {effort} outside [{EFFORT_MIN}, {EFFORT_MAX}]")));
        }
        Ok(())
    }

    /// Value and derivatives in (b, u = ln e), including the cross term.
    pub(crate) fn eval_log_effort(&self, group: ObservableGroup, bid: f64, u: f64) -> Result<[f64; 4]> {
        let slots = self.groups.get(&group).ok_or(Error::UnknownGroup(group))?;
        let prod = self.production.get(&group).ok_or(Error::UnknownGroup(group))?;
        let alpha = self.index.price_coef();
        let base = prod.k + prod.gamma * u;
        let (mut p, mut pb, mut pu, mut pbu) = (0.0, 0.0, 0.0, 0.0);
        for &(dm, noise) in &slots.considered {
            let s = base + noise;
            let delta = self.index.signal_index(group, s)? + alpha * bid;
            let w = delta.exp();
            let sigma = w / (1.0 + w + dm);
            let v = sigma * (1.0 - sigma);
            let du = self.index.signal_index_slope(group, s)? * prod.gamma;
            p += sigma;
            pb += v * alpha;
            pu += v * du;
            pbu += alpha * (1.0 - 2.0 * sigma) * v * du;
        }
        let scale = self.pi() / slots.n_slots as f64;
        Ok([p * scale, pb * scale, pu * scale, pbu * scale])
    }

    pub fn win_probability(&self, bid: f64, effort: f64, group: ObservableGroup) -> Result<f64> {
        Self::check_domain(bid, effort)?;
        Ok(self.eval_log_effort(group, bid, effort.ln())?[0])
    }

    /// (dP/db, dP/de).
    pub fn win_probability_gradient(
        &self,
        bid: f64,
        effort: f64,
        group: ObservableGroup,
    ) -> Result<(f64, f64)> {
        Self::check_domain(bid, effort)?;
        let v = self.eval_log_effort(group, bid, effort.ln())?;
        Ok((v[1], v[2] / effort))
    }

    pub fn evaluate(&self, bid: f64, effort: f64, group: ObservableGroup) -> Result<SurfacePoint> {
        Self::check_domain(bid, effort)?;
        let v = self.eval_log_effort(group, bid, effort.ln())?;
        Ok(SurfacePoint { p: v[0], dp_db: v[1], dp_de: v[2] / effort })
    }

    /// Exact per-group surface view.
    pub fn surface(&self, group: ObservableGroup) -> Result<GroupSurface<'_, I>> {
        if !self.has_group(group) {
            return Err(Error::UnknownGroup(group));
        }
        Ok(GroupSurface { pool: self, group })
    }

    /// Mean number of considered applications per job.
    pub fn mean_considered(&self) -> f64 {
        let n: usize = self.jobs.iter().map(|j| j.slots.iter().filter(|s| s.considered).count()).sum();
        n as f64 / self.jobs.len().max(1) as f64
    }

    /// Monte Carlo standard errors of (P, dP/db, dP/de) at a point, treating
    /// simulated jobs as independent draws.
    pub fn monte_carlo_se(&self, bid: f64, effort: f64, group: ObservableGroup) -> Result<[f64; 3]> {
        Self::check_domain(bid, effort)?;
        let prod = self.production.get(&group).ok_or(Error::UnknownGroup(group))?;
        let alpha = self.index.price_coef();
        let (n_slots, _) = self.slot_counts(group);
        if n_slots == 0 {
            return Err(Error::UnknownGroup(group));
        }
        let m = self.jobs.len() as f64;
        let scale = self.pi() * m / n_slots as f64;
        let mut per_job: Vec<[f64; 3]> = Vec::with_capacity(self.jobs.len());
        for job in &self.jobs {
            let mut acc = [0.0; 3];
            for s in job.slots.iter().filter(|s| s.group == group && s.considered) {
                let sig = prod.k + prod.gamma * effort.ln() + s.noise;
                let w = (self.index.signal_index(group, sig)? + alpha * bid).exp();
                let sigma = w / (1.0 + w + s.delta_minus);
                let v = sigma * (1.0 - sigma);
                acc[0] += sigma * scale;
                acc[1] += v * alpha * scale;
                acc[2] += v * self.index.signal_index_slope(group, sig)? * prod.gamma / effort * scale;
            }
            per_job.push(acc);
        }
        let mut out = [0.0; 3];
        for k in 0..3 {
            let col: Vec<f64> = per_job.iter().map(|r| r[k]).collect();
            out[k] = crate::stats::std_dev(&col) / m.sqrt();
        }
        Ok(out)
    }
}

/// Exact evaluation restricted to one group.
pub struct GroupSurface<'a, I> {
    pool: &'a SimulationPool<I>,
    group: ObservableGroup,
}

impl<I: EmployerIndex> WinSurface for GroupSurface<'_, I> {
    fn eval(&self, bid: f64, effort: f64) -> Result<SurfacePoint> {
        self.pool.evaluate(bid, effort, self.group)
    }
}

/// Resamples `m` job templates and fills competitors from the bid-signal
/// model; deviator noise is drawn from the fitted signal noise.
pub fn build_pool<I: EmployerIndex, R: Rng + ?Sized>(
    templates: &[JobTemplate],
    bid_signal: &BidSignalModel,
    index: I,
    production: GroupMap<SignalProduction>,
    m: usize,
    rng: &mut R,
) -> Result<SimulationPool<I>> {
    if templates.is_empty() {
        return Err(Error::data("no job templates to bootstrap"));
    }
    let mut raw_jobs = Vec::with_capacity(m);
    for _ in 0..m {
        let t = &templates[rng.random_range(0..templates.len())];
        let mut raw = Vec::with_capacity(t.slots.len());
        for slot in &t.slots {
            let (bid, signal) = bid_signal.sample(slot.group, rng)?;
            let sd = production.get(&slot.group).ok_or(Error::UnknownGroup(slot.group))?.noise_var.sqrt();
            let z: f64 = StandardNormal.sample(rng);
            raw.push(RawSlot { group: slot.group, considered: slot.considered, bid, signal, noise: sd * z });
        }
        raw_jobs.push(raw);
    }
    SimulationPool::from_raw(raw_jobs, index, production)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::ReducedFormParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g() -> ObservableGroup {
        "SouthAsia/Arr0to5/Middle".parse().unwrap()
    }

    fn reduced(pi: f64) -> ReducedFormParams {
        ReducedFormParams {
            alpha_signed: -0.011,
            k_lambda: [(g(), 0.3)].into_iter().collect(),
            gamma_lambda: [(g(), 0.12)].into_iter().collect(),
            pi,
        }
    }

    fn production() -> GroupMap<SignalProduction> {
        [(g(), SignalProduction::new(5.7227, 0.9227, 5.3834).unwrap())].into_iter().collect()
    }

    fn pool(seed: u64, jobs: usize) -> SimulationPool<ReducedFormParams> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<Vec<RawSlot>> = (0..jobs)
            .map(|_| {
                (0..rng.random_range(1..8))
                    .map(|_| RawSlot {
                        group: g(),
                        considered: rng.random::<f64>() < 0.5,
                        bid: 30.0 + 220.0 * rng.random::<f64>(),
                        signal: 18.0 * rng.random::<f64>(),
                        noise: 2.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng),
                    })
                    .collect()
            })
            .collect();
        SimulationPool::from_raw(raw, reduced(0.6), production()).unwrap()
    }

    #[test]
    fn lone_considered_applicant_at_zero_index() {
        // A zero index against no competitors: share 1/2, scaled by pi.
        let mut p = reduced(0.8);
        p.k_lambda.insert(g(), 0.0);
        p.gamma_lambda.insert(g(), 0.0);
        p.alpha_signed = 0.0;
        let raw = vec![vec![RawSlot { group: g(), considered: true, bid: 50.0, signal: 3.0, noise: 0.1 }]; 5];
        let pool = SimulationPool::from_raw(raw, p, production()).unwrap();
        assert!((pool.win_probability(100.0, 1.0, g()).unwrap() - 0.4).abs() < 1e-15);
        assert!(!pool.warnings.is_empty());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let pool = pool(1, 300);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let b = 31.0 + 218.0 * rng.random::<f64>();
            let e = (EFFORT_MIN.ln() + 0.01 + (EFFORT_MAX / EFFORT_MIN).ln() * 0.99 * rng.random::<f64>()).exp();
            let (db, de) = pool.win_probability_gradient(b, e, g()).unwrap();
            let hb = 1e-4;
            let he = 1e-6 * e;
            let fb = (pool.win_probability(b + hb, e, g()).unwrap() - pool.win_probability(b - hb, e, g()).unwrap())
                / (2.0 * hb);
            let fe = (pool.win_probability(b, e + he, g()).unwrap() - pool.win_probability(b, e - he, g()).unwrap())
                / (2.0 * he);
            assert!((db - fb).abs() <= 1e-6 * db.abs(), "{db} {fb}");
            assert!((de - fe).abs() <= 1e-6 * de.abs(), "{de} {fe}");
        }
    }

    #[test]
    fn bounded_and_monotone() {
        let pool = pool(2, 200);
        assert!(pool.win_probability(30.0, 12.0, g()).unwrap() <= pool.pi());
        for i in 0..45 {
            let b = 30.0 + 5.0 * i as f64;
            for e in [EFFORT_MIN, 0.5, 2.0, 12.0] {
                let p1 = pool.win_probability(b, e, g()).unwrap();
                let p2 = pool.win_probability((b + 5.0).min(250.0), e, g()).unwrap();
                assert!(p1 >= p2);
                let (db, de) = pool.win_probability_gradient(b, e, g()).unwrap();
                assert!(db < 0.0 && de > 0.0 && p1 > 0.0);
            }
        }
        assert!(pool.win_probability(29.0, 1.0, g()).is_err());
        assert!(pool.win_probability(100.0, 0.01, g()).is_err());
        assert!(pool.win_probability(100.0, 1.0, "Other/Arr0to5/Low".parse().unwrap()).is_err());
    }

    #[test]
    fn deterministic_for_a_seed() {
        assert_eq!(pool(3, 50), pool(3, 50));
    }

    #[test]
    fn brute_force_choice_simulation_agrees() {
        // Re-simulate employer choices with the deviator in each slot.
        let pool = pool(4, 400);
        let (b, e) = (90.0, 1.5);
        let p_hat = pool.win_probability(b, e, g()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let prod = production()[&g()];
        let (mut wins, mut trials) = (0.0f64, 0.0f64);
        for _ in 0..40 {
            for job in &pool.jobs {
                for (j, slot) in job.slots.iter().enumerate() {
                    trials += 1.0;
                    if !slot.considered || rng.random::<f64>() > pool.pi() {
                        continue;
                    }
                    let s = prod.k + prod.gamma * e.ln() + slot.noise;
                    let mut utils = vec![-(-(rng.random::<f64>()).ln()).ln()];
                    for (k, other) in job.slots.iter().enumerate() {
                        if !other.considered {
                            continue;
                        }
                        let delta = if k == j {
                            pool.index.index(g(), b, s).unwrap()
                        } else {
                            other.omega.ln()
                        };
                        utils.push(delta - (-(rng.random::<f64>()).ln()).ln());
                    }
                    let own = 1 + job.slots[..j].iter().filter(|o| o.considered).count();
                    let best = (0..utils.len()).max_by(|&x, &y| utils[x].total_cmp(&utils[y])).unwrap();
                    if best == own {
                        wins += 1.0;
                    }
                }
            }
        }
        let rate = wins / trials;
        let se = (rate * (1.0 - rate) / trials).sqrt();
        assert!((rate - p_hat).abs() < 3.0 * se + 1e-3, "{rate} vs {p_hat}");
    }
}
