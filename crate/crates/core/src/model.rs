//! Model primitives shared by simulation, estimation and counterfactuals.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest admissible bid in dollars.
pub const BID_MIN: f64 = 30.0;
/// Highest admissible bid in dollars.
pub const BID_MAX: f64 = 250.0;
/// Shortest valid effort, four seconds, in minutes.
pub const EFFORT_MIN: f64 = 4.0 / 60.0;
/// Longest valid effort in minutes.
pub const EFFORT_MAX: f64 = 12.0;
/// Upper end of the aggregated signal scale.
pub const SIGNAL_MAX: f64 = 18.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CountryGroup {
    EnglishSpeaking,
    SouthAsia,
    Europe,
    Other,
    NotSouthAsiaSpike,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArrivalGroup {
    Arr0to5,
    Arr5to45,
    SpikeArrival,
    ArrOver45,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReputationGroup {
    Rookie,
    Low,
    Middle,
    High,
}

impl CountryGroup {
    pub const ALL: [CountryGroup; 5] = [
        CountryGroup::EnglishSpeaking,
        CountryGroup::SouthAsia,
        CountryGroup::Europe,
        CountryGroup::Other,
        CountryGroup::NotSouthAsiaSpike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CountryGroup::EnglishSpeaking => "EnglishSpeaking",
            CountryGroup::SouthAsia => "SouthAsia",
            CountryGroup::Europe => "Europe",
            CountryGroup::Other => "Other",
            CountryGroup::NotSouthAsiaSpike => "NotSouthAsiaSpike",
        }
    }
}

impl ArrivalGroup {
    pub const ALL: [ArrivalGroup; 4] = [
        ArrivalGroup::Arr0to5,
        ArrivalGroup::Arr5to45,
        ArrivalGroup::SpikeArrival,
        ArrivalGroup::ArrOver45,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArrivalGroup::Arr0to5 => "Arr0to5",
            ArrivalGroup::Arr5to45 => "Arr5to45",
            ArrivalGroup::SpikeArrival => "SpikeArrival",
            ArrivalGroup::ArrOver45 => "ArrOver45",
        }
    }
}

impl ReputationGroup {
    pub const ALL: [ReputationGroup; 4] = [
        ReputationGroup::Rookie,
        ReputationGroup::Low,
        ReputationGroup::Middle,
        ReputationGroup::High,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReputationGroup::Rookie => "Rookie",
            ReputationGroup::Low => "Low",
            ReputationGroup::Middle => "Middle",
            ReputationGroup::High => "High",
        }
    }

    pub fn rank(self) -> usize {
        self as usize
    }
}

/// Discrete observable cell `x` of an application.
///
/// Spike arrivals from outside South Asia share a single country cell, so
/// `NotSouthAsiaSpike` pairs only with `SpikeArrival` and vice versa for the
/// four regular countries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ObservableGroup {
    country: CountryGroup,
    arrival: ArrivalGroup,
    reputation: ReputationGroup,
}

impl ObservableGroup {
    pub fn new(
        country: CountryGroup,
        arrival: ArrivalGroup,
        reputation: ReputationGroup,
    ) -> Result<Self> {
        let spike = arrival == ArrivalGroup::SpikeArrival;
        let valid = match country {
            CountryGroup::NotSouthAsiaSpike => spike,
            CountryGroup::SouthAsia => true,
            _ => !spike,
        };
        if !valid {
            return Err(Error::InvalidGroup(format!(
                "{}/{}/{}",
                country.name(),
                arrival.name(),
                reputation.name()
            )));
        }
        Ok(Self { country, arrival, reputation })
    }

    /// Maps a raw (country, arrival, reputation) triple to its cell, folding
    /// non-South-Asian spike arrivals into the pooled country.
    pub fn from_raw(
        country: CountryGroup,
        arrival: ArrivalGroup,
        reputation: ReputationGroup,
    ) -> Result<Self> {
        let country = if arrival == ArrivalGroup::SpikeArrival && country != CountryGroup::SouthAsia {
            CountryGroup::NotSouthAsiaSpike
        } else {
            country
        };
        Self::new(country, arrival, reputation)
    }

    pub fn country(&self) -> CountryGroup {
        self.country
    }

    pub fn arrival(&self) -> ArrivalGroup {
        self.arrival
    }

    pub fn reputation(&self) -> ReputationGroup {
        self.reputation
    }

    /// All 56 valid cells in a fixed order.
    pub fn all() -> Vec<ObservableGroup> {
        let mut out = Vec::with_capacity(56);
        for c in CountryGroup::ALL {
            for a in ArrivalGroup::ALL {
                for r in ReputationGroup::ALL {
                    if let Ok(g) = ObservableGroup::new(c, a, r) {
                        out.push(g);
                    }
                }
            }
        }
        out
    }

    /// Same cell with a different reputation tier.
    pub fn with_reputation(&self, reputation: ReputationGroup) -> Self {
        Self { reputation, ..*self }
    }
}

impl fmt::Display for ObservableGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}",
            self.country.name(),
            self.arrival.name(),
            self.reputation.name()
        )
    }
}

impl FromStr for ObservableGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('/').collect();
        if parts.len() != 3 {
            return Err(Error::InvalidGroup(s.to_string()));
        }
        let country = CountryGroup::ALL
            .into_iter()
            .find(|c| c.name() == parts[0])
            .ok_or_else(|| Error::InvalidGroup(s.to_string()))?;
        let arrival = ArrivalGroup::ALL
            .into_iter()
            .find(|a| a.name() == parts[1])
            .ok_or_else(|| Error::InvalidGroup(s.to_string()))?;
        let reputation = ReputationGroup::ALL
            .into_iter()
            .find(|r| r.name() == parts[2])
            .ok_or_else(|| Error::InvalidGroup(s.to_string()))?;
        ObservableGroup::new(country, arrival, reputation)
    }
}

impl TryFrom<String> for ObservableGroup {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ObservableGroup> for String {
    fn from(g: ObservableGroup) -> String {
        g.to_string()
    }
}

pub type GroupMap<T> = BTreeMap<ObservableGroup, T>;

/// Private type of one applicant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerType {
    pub cost: f64,
    pub ability: f64,
    pub group: ObservableGroup,
}

/// One applicant's action at one job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Application {
    pub job_id: u64,
    pub worker_id: u64,
    pub group: ObservableGroup,
    pub bid: f64,
    pub effort: Option<f64>,
    pub signal: f64,
    pub considered: bool,
    pub won: bool,
    pub completed_5star: Option<bool>,
    pub signal_noise: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Winner {
    Worker(u64),
    OutsideOption,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobPost {
    pub job_id: u64,
    pub applications: Vec<Application>,
    pub abandoned: Option<bool>,
    pub winner: Option<Winner>,
}

impl JobPost {
    /// Checks the winner and consideration invariants.
    pub fn validate(&self) -> Result<()> {
        let winners: Vec<&Application> = self.applications.iter().filter(|a| a.won).collect();
        if winners.len() > 1 {
            return Err(Error::input(format!("job {} has {} winners", self.job_id, winners.len())));
        }
        if let Some(w) = winners.first() {
            if !w.considered {
                return Err(Error::input(format!(
                    "job {}: winner {} was not considered",
                    self.job_id, w.worker_id
                )));
            }
            if self.winner != Some(Winner::Worker(w.worker_id)) {
                return Err(Error::input(format!("job {}: winner field disagrees", self.job_id)));
            }
        }
        if self.abandoned == Some(true) && self.winner != Some(Winner::OutsideOption) {
            return Err(Error::input(format!("job {}: abandoned job has a hire", self.job_id)));
        }
        Ok(())
    }
}

/// Signal production for one cell: `s = k + gamma * ln e + eps`, `eps ~ N(0, noise_var)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalProduction {
    pub k: f64,
    pub gamma: f64,
    pub noise_var: f64,
}

impl SignalProduction {
    pub fn new(k: f64, gamma: f64, noise_var: f64) -> Result<Self> {
        if !(gamma > 0.0) || !(noise_var >= 0.0) || !k.is_finite() {
            return Err(Error::param(format!(
                "signal production needs gamma > 0 and noise_var >= 0 (got k={k}, gamma={gamma}, var={noise_var})"
            )));
        }
        Ok(Self { k, gamma, noise_var })
    }

    pub fn mean(&self, effort: f64) -> Result<f64> {
        if !(effort > 0.0) {
            return Err(Error::domain(format!("signal mean needs effort > 0, got {effort}")));
        }
        Ok(self.k + self.gamma * effort.ln())
    }

    pub fn draw<R: Rng + ?Sized>(&self, effort: f64, rng: &mut R) -> Result<f64> {
        let m = self.mean(effort)?;
        if self.noise_var == 0.0 {
            return Ok(m);
        }
        let z: f64 = StandardNormal.sample(rng);
        Ok(m + self.noise_var.sqrt() * z)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Disutility per dollar of bid, positive.
    pub alpha: f64,
    pub beta: f64,
    pub t_by_group: GroupMap<f64>,
    /// Probability the employer does not abandon the post.
    pub pi: f64,
    pub signal: GroupMap<SignalProduction>,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::param(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(Error::param(format!("pi must lie in (0,1), got {}", self.pi)));
        }
        for (g, sp) in &self.signal {
            SignalProduction::new(sp.k, sp.gamma, sp.noise_var)
                .map_err(|e| Error::param(format!("{g}: {e}")))?;
        }
        Ok(())
    }

    pub fn t(&self, group: ObservableGroup) -> Result<f64> {
        self.t_by_group.get(&group).copied().ok_or(Error::UnknownGroup(group))
    }

    pub fn production(&self, group: ObservableGroup) -> Result<&SignalProduction> {
        self.signal.get(&group).ok_or(Error::UnknownGroup(group))
    }

    pub fn signal_mean(&self, effort: f64, group: ObservableGroup) -> Result<f64> {
        self.production(group)?.mean(effort)
    }

    pub fn draw_signal<R: Rng + ?Sized>(
        &self,
        effort: f64,
        group: ObservableGroup,
        rng: &mut R,
    ) -> Result<f64> {
        self.production(group)?.draw(effort, rng)
    }

    pub fn employer_utility(
        &self,
        bid: f64,
        ability: f64,
        group: ObservableGroup,
        taste_shock: f64,
    ) -> Result<f64> {
        Ok(employer_utility(bid, ability, self.t(group)?, taste_shock, self.alpha, self.beta))
    }

    /// Dollar value of one unit of ability.
    pub fn ability_dollars(&self) -> f64 {
        self.beta / self.alpha
    }
}

pub fn effort_cost(effort: f64, ability: f64) -> Result<f64> {
    if !(effort >= 0.0) {
        return Err(Error::domain(format!("effort must be non-negative, got {effort}")));
    }
    Ok(effort * effort / (2.0 * ability.exp()))
}

pub fn marginal_effort_cost(effort: f64, ability: f64) -> Result<f64> {
    if !(effort >= 0.0) {
        return Err(Error::domain(format!("effort must be non-negative, got {effort}")));
    }
    Ok(effort * (-ability).exp())
}

/// `T + beta*a - alpha*b + nu`; the outside option is worth its own shock alone.
pub fn employer_utility(bid: f64, ability: f64, t: f64, taste_shock: f64, alpha: f64, beta: f64) -> f64 {
    t + beta * ability - alpha * bid + taste_shock
}

/// Realized payoff: the bid margin if hired, minus effort cost either way.
pub fn worker_expost_utility(bid: f64, effort: f64, cost: f64, ability: f64, won: bool) -> f64 {
    let margin = if won { bid - cost } else { 0.0 };
    margin - effort * effort / (2.0 * ability.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::close;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    mod approx_eq {
        pub fn close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol
        }
    }

    fn sa_high() -> ObservableGroup {
        "SouthAsia/ArrOver45/High".parse().unwrap()
    }

    fn params() -> ModelParams {
        let g = sa_high();
        ModelParams {
            alpha: 0.0110,
            beta: 0.1644,
            t_by_group: [(g, 0.0)].into_iter().collect(),
            pi: 1.0 - 0.4251,
            signal: [(g, SignalProduction::new(6.3032, 1.0000, 7.1680).unwrap())]
                .into_iter()
                .collect(),
        }
    }

    #[test]
    fn fifty_six_groups() {
        let all = ObservableGroup::all();
        assert_eq!(all.len(), 56);
        let spikes = all.iter().filter(|g| g.arrival() == ArrivalGroup::SpikeArrival).count();
        assert_eq!(spikes, 8);
    }

    #[test]
    fn raw_spike_collapses() {
        let g = ObservableGroup::from_raw(
            CountryGroup::Europe,
            ArrivalGroup::SpikeArrival,
            ReputationGroup::Low,
        )
        .unwrap();
        assert_eq!(g.country(), CountryGroup::NotSouthAsiaSpike);
        let g = ObservableGroup::from_raw(
            CountryGroup::SouthAsia,
            ArrivalGroup::SpikeArrival,
            ReputationGroup::Low,
        )
        .unwrap();
        assert_eq!(g.country(), CountryGroup::SouthAsia);
        assert!(ObservableGroup::new(
            CountryGroup::Europe,
            ArrivalGroup::SpikeArrival,
            ReputationGroup::Low
        )
        .is_err());
    }

    #[test]
    fn group_string_round_trip() {
        for g in ObservableGroup::all() {
            let s = g.to_string();
            assert_eq!(s.parse::<ObservableGroup>().unwrap(), g);
            let js = serde_json::to_string(&g).unwrap();
            assert_eq!(serde_json::from_str::<ObservableGroup>(&js).unwrap(), g);
        }
    }

    #[test]
    fn effort_cost_examples() {
        assert_eq!(effort_cost(0.0, 1.3).unwrap(), 0.0);
        assert_eq!(effort_cost(1.0, 0.0).unwrap(), 0.5);
        assert!(close(effort_cost(2.0, 2f64.ln()).unwrap(), 1.0, 1e-15));
        assert!(effort_cost(-0.1, 0.0).is_err());
    }

    #[test]
    fn marginal_cost_examples() {
        assert_eq!(marginal_effort_cost(0.0, 0.7).unwrap(), 0.0);
        assert_eq!(marginal_effort_cost(3.0, 0.0).unwrap(), 3.0);
        assert!(close(marginal_effort_cost(1.0, 5f64.ln()).unwrap(), 0.2, 1e-15));
        assert!(marginal_effort_cost(-1.0, 0.0).is_err());
    }

    #[test]
    fn signal_mean_examples() {
        let p = params();
        let g = sa_high();
        assert_eq!(p.signal_mean(1.0, g).unwrap(), 6.3032);
        assert!(close(p.signal_mean(std::f64::consts::E, g).unwrap(), 7.3032, 1e-12));
        assert!(p.signal_mean(0.0, g).is_err());
    }

    #[test]
    fn zero_variance_draw_is_mean() {
        let sp = SignalProduction::new(2.0, 0.5, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sp.draw(3.0, &mut rng).unwrap(), sp.mean(3.0).unwrap());
    }

    #[test]
    fn draw_moments() {
        let p = params();
        let g = sa_high();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| p.draw_signal(2.0, g, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let m = p.signal_mean(2.0, g).unwrap();
        let se = (7.1680f64 / n as f64).sqrt();
        assert!((mean - m).abs() < 3.0 * se, "mean {mean} vs {m}");
        assert!((var / 7.1680 - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn employer_utility_examples() {
        let g = sa_high();
        let mut p = params();
        assert_eq!(employer_utility(80.0, 2.0, 0.0, 0.0, 0.0, 0.0), 0.0);
        let u = p.employer_utility(100.0, 1.0, g, 0.0).unwrap();
        assert!(close(u, -0.9356, 1e-12));
        let u2 = p.employer_utility(100.0, 1.0, g, 2.0).unwrap();
        assert!(close(u2, 1.0644, 1e-12));
        p.t_by_group.clear();
        assert!(matches!(p.employer_utility(100.0, 1.0, g, 0.0), Err(Error::UnknownGroup(_))));
    }

    #[test]
    fn worker_utility_examples() {
        assert_eq!(worker_expost_utility(90.0, 0.0, 40.0, 1.0, false), 0.0);
        assert_eq!(worker_expost_utility(100.0, 0.0, 40.0, 1.0, true), 60.0);
        assert_eq!(worker_expost_utility(100.0, 1.0, 40.0, 0.0, true), 59.5);
    }

    #[test]
    fn effort_cost_shape_by_finite_differences() {
        let h = 1e-4;
        let mut e = 0.05;
        while e <= 12.0 {
            let mut a = -3.0;
            while a <= 3.0 {
                let c = |e: f64, a: f64| effort_cost(e, a).unwrap();
                let de = (c(e + h, a) - c(e - h, a)) / (2.0 * h);
                let dee = (c(e + h, a) - 2.0 * c(e, a) + c(e - h, a)) / (h * h);
                let da = (c(e, a + h) - c(e, a - h)) / (2.0 * h);
                let dea = (c(e + h, a + h) - c(e + h, a - h) - c(e - h, a + h) + c(e - h, a - h))
                    / (4.0 * h * h);
                assert!(de > 0.0 && dee > 0.0 && da < 0.0 && dea < 0.0, "e={e} a={a}");
                a += 0.5;
            }
            e += 0.35;
        }
        assert!(effort_cost(1e-9, 0.0).unwrap() < 1e-17);
    }

    #[test]
    fn common_shift_in_t_leaves_choices_unchanged() {
        // Shifting every inside T and the outside option by the same constant
        // preserves the argmax for every shock draw.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let shift = 4.2;
        for _ in 0..1000 {
            let nu: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect();
            let bids = [60.0, 90.0, 120.0];
            let ts = [0.3, -0.2, 0.1];
            let pick = |s: f64| {
                let mut best = (0usize, s + nu[0]);
                for j in 0..3 {
                    let u = employer_utility(bids[j], 1.0, ts[j] + s, nu[j + 1], 0.011, 0.16);
                    if u > best.1 {
                        best = (j + 1, u);
                    }
                }
                best.0
            };
            assert_eq!(pick(0.0), pick(shift));
        }
    }

    proptest! {
        #[test]
        fn signal_mean_increasing(k in -5.0f64..10.0, gamma in 0.01f64..3.0, e1 in 0.01f64..12.0, d in 0.001f64..5.0) {
            let sp = SignalProduction::new(k, gamma, 1.0).unwrap();
            prop_assert!(sp.mean(e1 + d).unwrap() > sp.mean(e1).unwrap());
        }
    }
}
