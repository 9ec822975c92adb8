//! Hiring and welfare summaries. Expectations use each job's choice
//! probabilities rather than the single realized draw.

use serde::{Deserialize, Serialize};

use crate::demand::StructuralParams;
use crate::error::{Error, Result};
use crate::model::effort_cost;
use crate::simulator::SimulatedMarket;
use crate::stats::{log_sum_exp, quantile_sorted};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    StatusQuo,
    NoSignaling,
    FullInformation,
}

impl Scenario {
    pub fn label(self) -> &'static str {
        match self {
            Scenario::StatusQuo => "SQ",
            Scenario::NoSignaling => "NS",
            Scenario::FullInformation => "FI",
        }
    }
}

pub type Matrix5 = [[f64; 5]; 5];

/// Quintile cut points of cost and ability, fixed across scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quintiles {
    pub cost: [f64; 4],
    pub ability: [f64; 4],
}

fn cuts(mut v: Vec<f64>) -> [f64; 4] {
    v.sort_by(|a, b| a.total_cmp(b));
    [0.2, 0.4, 0.6, 0.8].map(|p| quantile_sorted(&v, p))
}

fn cell(cuts: &[f64; 4], x: f64) -> usize {
    cuts.iter().filter(|&&q| x > q).count()
}

impl Quintiles {
    /// Cut points over every applicant in the market.
    pub fn from_market(market: &SimulatedMarket) -> Result<Self> {
        let hidden: Vec<_> = market.jobs.iter().flat_map(|j| &j.hidden).collect();
        if hidden.is_empty() {
            return Err(Error::data("no applicants to form quintiles"));
        }
        Ok(Self {
            cost: cuts(hidden.iter().map(|h| h.cost).collect()),
            ability: cuts(hidden.iter().map(|h| h.ability).collect()),
        })
    }

    /// (ability quintile, cost quintile), each in 0..5.
    pub fn cell(&self, cost: f64, ability: f64) -> (usize, usize) {
        (cell(&self.ability, ability), cell(&self.cost, cost))
    }
}

/// Per-job averages in dollars. Matrices are indexed
/// `[ability quintile][cost quintile]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub scenario: Scenario,
    pub n_jobs: usize,
    pub n_applicants: usize,
    pub hiring_rate: f64,
    pub conditional_hiring_rate: f64,
    #[serde(with = "nan_null")]
    pub mean_winning_bid: f64,
    pub worker_surplus: f64,
    pub employer_surplus: f64,
    pub total_surplus: f64,
    pub writing_costs: f64,
    /// P(hired | cell).
    pub hire_rate_by_cell: Matrix5,
    /// P(cell | hired).
    pub hired_share_by_cell: Matrix5,
    pub applicants_by_cell: [[usize; 5]; 5],
    pub hire_rate_by_ability: [f64; 5],
    pub hire_rate_by_cost: [f64; 5],
}

pub fn welfare_report(
    market: &SimulatedMarket,
    params: &StructuralParams,
    scenario: Scenario,
    quintiles: &Quintiles,
) -> Result<WelfareReport> {
    if market.jobs.is_empty() {
        return Err(Error::data("no simulated jobs"));
    }
    let alpha = params.alpha_signed;
    if !(alpha < 0.0) {
        return Err(Error::param("welfare needs a negative price coefficient"));
    }
    let pi = params.pi;
    let (mut hires, mut bid_mass, mut worker, mut employer, mut writing) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut n_apps = 0;
    let mut mass = [[0.0; 5]; 5];
    let mut count = [[0usize; 5]; 5];
    for job in &market.jobs {
        let mut deltas = vec![0.0];
        let mut correction = 0.0;
        for (a, h) in job.post.applications.iter().zip(&job.hidden) {
            n_apps += 1;
            let p = h.choice_prob;
            hires += p;
            bid_mass += p * a.bid;
            worker += p * (a.bid - h.cost);
            if let Some(e) = a.effort {
                writing += effort_cost(e, h.ability)?;
            }
            if let Some(d) = h.delta {
                deltas.push(d);
                let truth = params.index(a.group, a.bid, h.ability)?;
                correction += p * (truth - d);
            }
            let (r, c) = quintiles.cell(h.cost, h.ability);
            mass[r][c] += p;
            count[r][c] += 1;
        }
        employer += (pi * log_sum_exp(&deltas) + correction) / -alpha;
    }
    let n = market.jobs.len() as f64;
    let worker = (worker - writing) / n;
    let employer = employer / n;
    let mut rate = [[0.0; 5]; 5];
    let mut share = [[0.0; 5]; 5];
    for r in 0..5 {
        for c in 0..5 {
            rate[r][c] = if count[r][c] > 0 { mass[r][c] / count[r][c] as f64 } else { 0.0 };
            share[r][c] = if hires > 0.0 { mass[r][c] / hires } else { 0.0 };
        }
    }
    let margin = |by_row: bool| {
        let mut out = [0.0; 5];
        for (k, o) in out.iter_mut().enumerate() {
            let (m, c): (f64, usize) = (0..5)
                .map(|j| if by_row { (mass[k][j], count[k][j]) } else { (mass[j][k], count[j][k]) })
                .fold((0.0, 0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
            *o = if c > 0 { m / c as f64 } else { 0.0 };
        }
        out
    };
    Ok(WelfareReport {
        scenario,
        n_jobs: market.jobs.len(),
        n_applicants: n_apps,
        hiring_rate: hires / n,
        conditional_hiring_rate: if pi > 0.0 { hires / (n * pi) } else { 0.0 },
        mean_winning_bid: if hires > 0.0 { bid_mass / hires } else { f64::NAN },
        worker_surplus: worker,
        employer_surplus: employer,
        total_surplus: worker + employer,
        writing_costs: writing / n,
        hire_rate_by_cell: rate,
        hired_share_by_cell: share,
        applicants_by_cell: count,
        hire_rate_by_ability: margin(true),
        hire_rate_by_cost: margin(false),
    })
}

/// `100 (new / base - 1)` per cell; NaN where the base is zero.
pub fn percent_change(base: &Matrix5, new: &Matrix5) -> Matrix5 {
    let mut out = [[0.0; 5]; 5];
    for r in 0..5 {
        for c in 0..5 {
            out[r][c] = if base[r][c] != 0.0 { 100.0 * (new[r][c] / base[r][c] - 1.0) } else { f64::NAN };
        }
    }
    out
}

pub fn relative_change(base: f64, new: f64) -> f64 {
    100.0 * (new / base - 1.0)
}

/// Signs of the NS-vs-SQ comparison: the top ability quintile is hired
/// less, the bottom more, and winning bids fall.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Directionality {
    #[serde(with = "nan_null")]
    pub top_ability_change_pct: f64,
    #[serde(with = "nan_null")]
    pub bottom_ability_change_pct: f64,
    #[serde(with = "nan_null")]
    pub winning_bid_change_pct: f64,
}

impl Directionality {
    pub fn new(sq: &WelfareReport, ns: &WelfareReport) -> Self {
        Self {
            top_ability_change_pct: relative_change(sq.hire_rate_by_ability[4], ns.hire_rate_by_ability[4]),
            bottom_ability_change_pct: relative_change(sq.hire_rate_by_ability[0], ns.hire_rate_by_ability[0]),
            winning_bid_change_pct: relative_change(sq.mean_winning_bid, ns.mean_winning_bid),
        }
    }

    /// Holds when both hiring changes exceed `min_pct` in the expected direction.
    pub fn holds(&self, min_pct: f64) -> bool {
        self.top_ability_change_pct < -min_pct && self.bottom_ability_change_pct > min_pct && self.winning_bid_change_pct < 0.0
    }
}


/// Writes NaN as JSON `null` and reads it back, since JSON has no NaN.
pub mod nan_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Matrix5;

    fn wrap(v: f64) -> Option<f64> {
        (!v.is_nan()).then_some(v)
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        wrap(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    pub mod matrix {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Matrix5, s: S) -> Result<S::Ok, S::Error> {
            m.map(|row| row.map(wrap)).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix5, D::Error> {
            let m = <[[Option<f64>; 5]; 5]>::deserialize(d)?;
            Ok(m.map(|row| row.map(|v| v.unwrap_or(f64::NAN))))
        }
    }
}
