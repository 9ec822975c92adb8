//! Consideration-set proxy built from clicks, messages, ranks and timestamps.
//!
//! Each application earns one point per satisfied condition:
//!
//! 1. hired, at least two messages, or clicked by the employer;
//! 2. among the first eight submitted and within two hours of posting;
//! 3. on the first page (rank 1 to 8) at close and within two hours;
//! 4. within five minutes of posting, when fewer than 30 applications arrived
//!    in that window;
//! 5. ranked above the latest-submitted application the employer interacted
//!    with, using that application's rank at the time of the interaction.
//!
//! Sets are then trimmed against the era's 75th percentile of set sizes,
//! expanded when very small, trimmed again above 32, and jobs without a hire
//! that still exceed 32 are dropped. Hired applications are never trimmed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::stats::nearest_rank_percentile;

const PAGE: u32 = 8;
const TWO_HOURS: i64 = 2 * 3_600_000;
const TWELVE_HOURS: i64 = 12 * 3_600_000;
const FIVE_MIN: i64 = 5 * 60_000;
const MAX_SET: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Era {
    #[default]
    PreLLM,
    PostLLM,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClickRecord {
    pub worker_id: u64,
    pub submitted_ms: i64,
    pub first_view_ms: Option<i64>,
    pub employer_engaged: bool,
    pub messages_count: u32,
    pub rank_at_close: Option<u32>,
    pub engaged_rank_reference: Option<u32>,
    pub hired: bool,
}

impl ClickRecord {
    /// Page of the bid list at close, eight applications per page.
    pub fn page_at_close(&self) -> Option<u32> {
        self.rank_at_close.map(|r| r.div_ceil(PAGE))
    }

    fn interacted(&self) -> bool {
        self.hired || self.messages_count >= 2 || self.employer_engaged
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobClicks {
    pub job_id: u64,
    /// Posting time; the earliest submission stands in when absent.
    pub posted_ms: Option<i64>,
    pub applications: Vec<ClickRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsiderationOptions {
    pub era: Era,
    /// Step-2 size threshold per era; computed from the batch when absent.
    pub size_threshold: BTreeMap<Era, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedJob {
    pub job_id: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsiderationOutcome {
    /// Flags per retained job, aligned with the input application order.
    pub considered: BTreeMap<u64, Vec<bool>>,
    pub scores: BTreeMap<u64, Vec<u8>>,
    /// Jobs removed because the set stayed above 32 without a hire.
    pub dropped: Vec<u64>,
    pub excluded: Vec<ExcludedJob>,
    pub size_threshold: f64,
}

struct Scored {
    score: Vec<u8>,
    cond1: Vec<bool>,
    flags: Vec<bool>,
}

fn score_job(job: &JobClicks, ranks: &[u32]) -> Scored {
    let apps = &job.applications;
    let n = apps.len();
    let posted = job
        .posted_ms
        .unwrap_or_else(|| apps.iter().map(|a| a.submitted_ms).min().unwrap_or(0));
    let elapsed: Vec<i64> = apps.iter().map(|a| a.submitted_ms - posted).collect();

    // Submission order, ties by rank at close.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (apps[i].submitted_ms, ranks[i], i));
    let mut position = vec![0usize; n];
    for (p, &i) in order.iter().enumerate() {
        position[i] = p;
    }

    let early_count = elapsed.iter().filter(|&&t| t <= FIVE_MIN).count();

    // Reference rank from the latest-submitted application with an interaction.
    let reference = order
        .iter()
        .rev()
        .find(|&&i| apps[i].interacted())
        .map(|&i| apps[i].engaged_rank_reference.unwrap_or(ranks[i]));

    let mut score = vec![0u8; n];
    let mut cond1 = vec![false; n];
    for i in 0..n {
        let a = &apps[i];
        let within2h = elapsed[i] <= TWO_HOURS;
        cond1[i] = a.interacted();
        let conds = [
            cond1[i],
            position[i] < PAGE as usize && within2h,
            ranks[i] <= PAGE && within2h,
            elapsed[i] <= FIVE_MIN && early_count < 30,
            reference.is_some_and(|r| ranks[i] < r),
        ];
        score[i] = conds.iter().filter(|&&c| c).count() as u8;
    }
    let flags = score.iter().map(|&s| s > 0).collect();
    Scored { score, cond1, flags }
}

fn count(flags: &[bool]) -> usize {
    flags.iter().filter(|&&f| f).count()
}

fn expand_and_trim(job: &JobClicks, ranks: &[u32], s: &mut Scored, threshold: f64) {
    let apps = &job.applications;
    let n = apps.len();
    let posted = job
        .posted_ms
        .unwrap_or_else(|| apps.iter().map(|a| a.submitted_ms).min().unwrap_or(0));
    let within12h: Vec<bool> = apps.iter().map(|a| a.submitted_ms - posted <= TWELVE_HOURS).collect();
    let protected: Vec<bool> = apps.iter().map(|a| a.hired).collect();

    let unconsider = |s: &mut Scored, pred: &dyn Fn(usize) -> bool| {
        for i in 0..n {
            if s.flags[i] && !protected[i] && pred(i) {
                s.flags[i] = false;
            }
        }
    };

    if count(&s.flags) as f64 > threshold {
        let (score, cond1) = (s.score.clone(), s.cond1.clone());
        unconsider(s, &|i| score[i] == 1 && !cond1[i]);
    }

    if count(&s.flags) < 5 && n > 15 {
        for i in 0..n {
            if ranks[i] <= 2 * PAGE {
                s.flags[i] = true;
            }
        }
    }
    if count(&s.flags) < 5 && n < 9 {
        for i in 0..n {
            if within12h[i] {
                s.flags[i] = true;
            }
        }
    }
    if count(&s.flags) < 3 {
        for i in 0..n {
            if ranks[i] <= PAGE && within12h[i] {
                s.flags[i] = true;
            }
        }
    }
    if count(&s.flags) < 3 && n < 8 {
        s.flags.iter_mut().for_each(|f| *f = true);
    }
    if count(&s.flags) < 3 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (apps[i].submitted_ms, ranks[i], i));
        for &i in order.iter().take(5) {
            s.flags[i] = true;
        }
    }

    for level in 1..=4u8 {
        if count(&s.flags) > MAX_SET {
            let (score, cond1) = (s.score.clone(), s.cond1.clone());
            unconsider(s, &|i| score[i] == level && !cond1[i]);
        }
    }
    if count(&s.flags) > MAX_SET {
        let score = s.score.clone();
        unconsider(s, &|i| score[i] == 4 && apps[i].messages_count < 5);
    }
}

/// Runs the full scoring, trimming and expansion procedure over a batch of
/// jobs from one era.
pub fn build_consideration_sets(
    jobs: &[JobClicks],
    options: &ConsiderationOptions,
) -> ConsiderationOutcome {
    let mut out = ConsiderationOutcome::default();
    let mut scored = Vec::with_capacity(jobs.len());
    for job in jobs {
        let ranks: Option<Vec<u32>> = job.applications.iter().map(|a| a.rank_at_close).collect();
        match ranks {
            Some(r) if !job.applications.is_empty() => {
                let s = score_job(job, &r);
                scored.push((job, r, s));
            }
            Some(_) => out.excluded.push(ExcludedJob {
                job_id: job.job_id,
                reason: "no applications".into(),
            }),
            None => out.excluded.push(ExcludedJob {
                job_id: job.job_id,
                reason: "missing rank at close".into(),
            }),
        }
    }

    let threshold = options.size_threshold.get(&options.era).copied().unwrap_or_else(|| {
        let sizes: Vec<f64> = scored.iter().map(|(_, _, s)| count(&s.flags) as f64).collect();
        nearest_rank_percentile(&sizes, 75.0)
    });
    out.size_threshold = threshold;

    for (job, ranks, mut s) in scored {
        expand_and_trim(job, &ranks, &mut s, threshold);
        let hired = job.applications.iter().any(|a| a.hired);
        if count(&s.flags) > MAX_SET && !hired {
            out.dropped.push(job.job_id);
            continue;
        }
        out.considered.insert(job.job_id, s.flags);
        out.scores.insert(job.job_id, s.score);
    }
    out
}
