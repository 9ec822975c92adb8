//! Acceptance suite. Prints PASS or FAIL for each numbered criterion and
//! exits nonzero if any fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use jobsignal_core::beliefs::pava;
use jobsignal_core::bid_signal::{fit_t_copula, kendall_tau, pseudo_observations, sample_t_copula};
use jobsignal_core::counterfactual::{
    equilibrium_residual, fit_type_distribution, run_counterfactuals, BidOnlyRule, CounterfactualConfig,
    CounterfactualInputs, CounterfactualResults, Regime, ScenarioMarkets,
};
use jobsignal_core::demand::{
    attach_beliefs, choice_probabilities, reduced_form_loglik, reduced_form_loglik_grad, structural_loglik,
    structural_loglik_grad, ChoiceJob, ReducedFormParams, StructuralParams,
};
use jobsignal_core::estimation::{choice_jobs, job_templates, run_estimation, EstimationOptions, EstimationResult};
use jobsignal_core::measurement::{
    build_consideration_sets, levenshtein, normalized_edit_distance, ClickRecord, ConsiderationOptions, Era, JobClicks,
};
use jobsignal_core::model::{effort_cost, GroupMap, ObservableGroup, BID_MAX, BID_MIN, EFFORT_MAX, EFFORT_MIN};
use jobsignal_core::simulator::generator::{generate, GeneratorConfig, SyntheticWorld};
use jobsignal_core::simulator::{ArrivalDistribution, Consideration, SimulatedMarket};
use jobsignal_core::supply::{correct_effort, estimate_signal_production, invert_point, TimedSignal};
use jobsignal_core::win_probability::{build_pool, WinSurface};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, StudentsT};

const SEED: u64 = 20240601;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// The shared synthetic world, its estimates, and the counterfactuals.
struct Shared {
    world: SyntheticWorld,
    est: EstimationResult,
    elapsed: Duration,
    cf: CounterfactualResults,
    markets: ScenarioMarkets,
}

fn shared() -> Shared {
    let t0 = Instant::now();
    let world = generate(&GeneratorConfig { seed: SEED, ..GeneratorConfig::default() }).expect("generate");
    let posts = world.market.posts();
    let est = run_estimation(&posts, &EstimationOptions { seed: SEED, ..Default::default() }).expect("estimate");
    let elapsed = t0.elapsed();

    let types = fit_type_distribution(&est.inversion.accepted, 0.005, 0.995).expect("types");
    let arrival = ArrivalDistribution::uniform(job_templates(&posts)).expect("arrival");
    let production = est.signal.productions();
    let inputs = CounterfactualInputs {
        types: &types,
        pseudo: &est.inversion.accepted,
        params: &est.structural.params,
        beliefs: &est.beliefs,
        production: &production,
        arrival: &arrival,
        consideration: &Consideration::FromTemplates,
    };
    let (cf, markets) =
        run_counterfactuals(inputs, &CounterfactualConfig { seed: SEED, ..Default::default() }).expect("counterfactuals");
    Shared { world, est, elapsed, cf, markets }
}

fn recovery(s: &Shared) -> Verdict {
    let truth = &s.world.params;
    let p = &s.est.structural.params;
    let da = (-p.alpha_signed - truth.alpha).abs() / truth.alpha;
    let db = (p.beta - truth.beta).abs() / truth.beta;
    let dp = (p.pi - truth.pi).abs();
    verdict(
        da <= 0.15 && db <= 0.20 && dp <= 0.03 && s.elapsed <= Duration::from_secs(600),
        format!(
            "alpha {:.5} vs {:.5} ({:.1}%), beta {:.4} vs {:.4} ({:.1}%), pi {:.4} vs {:.4} ({:.2} pp), {:.0} s",
            -p.alpha_signed,
            truth.alpha,
            100.0 * da,
            p.beta,
            truth.beta,
            100.0 * db,
            p.pi,
            truth.pi,
            100.0 * dp,
            s.elapsed.as_secs_f64()
        ),
    )
}

/// Best action on a 201 x 201 grid (bids linear, efforts log-spaced), then a
/// second 201 x 201 grid over the neighbouring cells of the winner.
fn grid_optimum<S: WinSurface>(surface: &S, c: f64, a: f64) -> (f64, f64, bool) {
    let value = |b: f64, u: f64| {
        let e = u.exp();
        surface.eval(b, e).expect("in domain").p * (b - c) - effort_cost(e, a).expect("effort")
    };
    let n = 201;
    let search = |b0: f64, b1: f64, u0: f64, u1: f64| {
        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        for i in 0..n {
            let b = b0 + (b1 - b0) * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let u = u0 + (u1 - u0) * j as f64 / (n - 1) as f64;
                let v = value(b, u);
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        best
    };
    let (lu, hu) = (EFFORT_MIN.ln(), EFFORT_MAX.ln());
    let (hb, hu_step) = ((BID_MAX - BID_MIN) / 200.0, (hu - lu) / 200.0);
    let (i, j, _) = search(BID_MIN, BID_MAX, lu, hu);
    let corner = i == 0 || i == n - 1 || j == 0 || j == n - 1;
    let bc = BID_MIN + hb * i as f64;
    let uc = lu + hu_step * j as f64;
    let (b0, b1) = ((bc - hb).max(BID_MIN), (bc + hb).min(BID_MAX));
    let (u0, u1) = ((uc - hu_step).max(lu), (uc + hu_step).min(hu));
    let (i2, j2, _) = search(b0, b1, u0, u1);
    let b = b0 + (b1 - b0) * i2 as f64 / (n - 1) as f64;
    let u = u0 + (u1 - u0) * j2 as f64 / (n - 1) as f64;
    (b, u.exp(), corner)
}

fn foc_oracle(s: &Shared) -> Verdict {
    // A small frozen pool keeps the 80k evaluations per type affordable.
    let posts = s.world.market.posts();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pool = build_pool(
        &job_templates(&posts),
        &s.est.bid_signal,
        s.est.reduced.params.clone(),
        s.est.signal.productions(),
        200,
        &mut rng,
    )
    .expect("pool");
    let groups = pool.groups();
    let mut ok = 0;
    let mut redrawn = 0;
    let mut worst = (0.0f64, 0.0f64);
    let mut n = 0;
    while n < 100 {
        let g = groups[rng.random_range(0..groups.len())];
        let t = s.world.types.group(g).expect("group");
        let (c, a) = t.at(rng.random(), rng.random());
        let surface = pool.surface(g).expect("surface");
        let (b, e, corner) = grid_optimum(&surface, c, a);
        // The conditions only hold at interior optima.
        if corner {
            redrawn += 1;
            continue;
        }
        n += 1;
        let Ok((c_hat, a_hat)) = invert_point(b, e, surface.eval(b, e).expect("eval")) else {
            continue;
        };
        let (dc, da) = ((c_hat - c).abs(), (a_hat - a).abs());
        worst = (worst.0.max(dc), worst.1.max(da));
        if dc <= 0.50 && da <= 0.05 {
            ok += 1;
        }
    }
    verdict(
        ok >= 95,
        format!("{ok}/100 within $0.50 and 0.05 ({redrawn} boundary optima redrawn); worst |dc| {:.3}, |da| {:.4}", worst.0, worst.1),
    )
}

/// Worst relative gap between an analytic gradient and central differences
/// over named coordinates.
fn gradient_gap(
    x: &BTreeMap<String, f64>,
    analytic: &BTreeMap<String, f64>,
    f: &dyn Fn(&BTreeMap<String, f64>) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for (k, &v) in x {
        let h = 1e-5 * v.abs().max(if k == "alpha_signed" { 0.01 } else { 1.0 });
        let mut up = x.clone();
        let mut dn = x.clone();
        up.insert(k.clone(), v + h);
        dn.insert(k.clone(), v - h);
        let fd = (f(&up) - f(&dn)) / (2.0 * h);
        let g = analytic[k];
        worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(1.0));
    }
    worst
}

fn reduced_flat(p: &ReducedFormParams) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::from([("alpha_signed".to_string(), p.alpha_signed), ("pi".to_string(), p.pi)]);
    for (g, v) in &p.k_lambda {
        m.insert(format!("k.{g}"), *v);
    }
    for (g, v) in &p.gamma_lambda {
        m.insert(format!("g.{g}"), *v);
    }
    m
}

fn reduced_from(m: &BTreeMap<String, f64>, groups: &[ObservableGroup]) -> ReducedFormParams {
    ReducedFormParams {
        alpha_signed: m["alpha_signed"],
        pi: m["pi"],
        k_lambda: groups.iter().map(|g| (*g, m[&format!("k.{g}")])).collect(),
        gamma_lambda: groups.iter().map(|g| (*g, m[&format!("g.{g}")])).collect(),
    }
}

fn structural_flat(p: &StructuralParams) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::from([
        ("alpha_signed".to_string(), p.alpha_signed),
        ("beta".to_string(), p.beta),
        ("pi".to_string(), p.pi),
    ]);
    for (g, v) in &p.t_by_group {
        m.insert(format!("t.{g}"), *v);
    }
    m
}

fn structural_from(m: &BTreeMap<String, f64>, groups: &[ObservableGroup]) -> StructuralParams {
    StructuralParams {
        alpha_signed: m["alpha_signed"],
        beta: m["beta"],
        pi: m["pi"],
        t_by_group: groups.iter().map(|g| (*g, m[&format!("t.{g}")])).collect(),
    }
}

fn gradients(s: &Shared) -> Verdict {
    let posts = s.world.market.posts();
    let jobs: Vec<ChoiceJob> = choice_jobs(&posts[..300]).expect("jobs");
    let mut sjobs = jobs.clone();
    attach_beliefs(&mut sjobs, &s.est.beliefs).expect("beliefs");
    let groups: Vec<ObservableGroup> = s.est.reduced.params.k_lambda.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst_r, mut worst_s) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let r = ReducedFormParams {
            alpha_signed: rng.random_range(-0.03..-0.002),
            pi: rng.random_range(0.2..0.9),
            k_lambda: groups.iter().map(|g| (*g, rng.random_range(-3.0..3.0))).collect(),
            gamma_lambda: groups.iter().map(|g| (*g, rng.random_range(-0.2..0.5))).collect(),
        };
        let (_, grad) = reduced_form_loglik_grad(&r, &jobs).expect("grad");
        let f = |m: &BTreeMap<String, f64>| reduced_form_loglik(&reduced_from(m, &groups), &jobs).expect("ll");
        worst_r = worst_r.max(gradient_gap(&reduced_flat(&r), &reduced_flat(&grad), &f));

        let st = StructuralParams {
            alpha_signed: rng.random_range(-0.03..-0.002),
            beta: rng.random_range(-0.2..0.5),
            pi: rng.random_range(0.2..0.9),
            t_by_group: groups.iter().map(|g| (*g, rng.random_range(-3.0..3.0))).collect(),
        };
        let (_, grad) = structural_loglik_grad(&st, &sjobs).expect("grad");
        let f = |m: &BTreeMap<String, f64>| structural_loglik(&structural_from(m, &groups), &sjobs).expect("ll");
        worst_s = worst_s.max(gradient_gap(&structural_flat(&st), &structural_flat(&grad), &f));
    }
    verdict(
        worst_r <= 1e-6 && worst_s <= 1e-6,
        format!("worst relative gap: reduced {worst_r:.2e}, structural {worst_s:.2e}"),
    )
}

/// Full-matrix Levenshtein.
fn edit_reference(a: &[u8], b: &[u8]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn edit_distance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let words = ["the", "job", "post", "i", "can", "do", "this", "work", "fast", "python"];
    let mut mismatches = 0;
    for _ in 0..1000 {
        let mut draw = || -> Vec<u8> { (0..rng.random_range(0..25)).map(|_| rng.random_range(0..10u8)).collect() };
        let (a, b) = (draw(), draw());
        let r = edit_reference(&a, &b);
        let text = |v: &[u8]| v.iter().map(|&i| words[i as usize]).collect::<Vec<_>>().join(" ");
        let n = a.len().max(b.len());
        let norm = if n == 0 { 0.0 } else { r as f64 / n as f64 };
        if levenshtein(&a, &b) != r || normalized_edit_distance(&text(&a), &text(&b)) != norm {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{mismatches} of 1000 pairs differ"))
}

/// Isotonic least squares by trying every split into contiguous blocks.
fn isotonic_reference(y: &[i64]) -> Vec<f64> {
    let n = y.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut fit = Vec::with_capacity(n);
        let mut start = 0;
        for i in 0..n {
            if i == n - 1 || mask & (1 << i) != 0 {
                let block = &y[start..=i];
                let mean = block.iter().sum::<i64>() as f64 / block.len() as f64;
                fit.extend(std::iter::repeat_n(mean, block.len()));
                start = i + 1;
            }
        }
        if fit.windows(2).any(|w| w[0] > w[1]) {
            continue;
        }
        let sse: f64 = fit.iter().zip(y).map(|(f, &v)| (f - v as f64).powi(2)).sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b) {
            best = Some((sse, fit));
        }
    }
    best.expect("a constant fit is always monotone").1
}

fn pava_and_cubic(s: &Shared) -> Verdict {
    let mut checked = 0;
    let mut mismatches = 0;
    for n in 1..=8u32 {
        for code in 0..4u32.pow(n) {
            let y: Vec<i64> = (0..n).map(|k| ((code / 4u32.pow(k)) % 4) as i64).collect();
            let values: Vec<f64> = y.iter().map(|&v| v as f64).collect();
            if pava(&values, &vec![1.0; y.len()]) != isotonic_reference(&y) {
                mismatches += 1;
            }
            checked += 1;
        }
    }
    let mut decreases = 0;
    let mut knot_err = 0.0f64;
    for belief in s.est.beliefs.groups.values() {
        let (x, y) = belief.curve.knots();
        for (xi, yi) in x.iter().zip(y) {
            knot_err = knot_err.max((belief.eval(*xi) - yi).abs());
        }
        let (lo, hi) = (x[0] - 1.0, x[x.len() - 1] + 1.0);
        let mut last = f64::NEG_INFINITY;
        for i in 0..10_000 {
            let v = belief.eval(lo + (hi - lo) * i as f64 / 9_999.0);
            if v < last {
                decreases += 1;
            }
            last = v;
        }
    }
    verdict(
        mismatches == 0 && decreases == 0 && knot_err <= 1e-12,
        format!(
            "PAVA {mismatches} of {checked} sequences differ; cubic {decreases} decreases over {} groups, knot error {knot_err:.1e}",
            s.est.beliefs.groups.len()
        ),
    )
}

fn copula() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let draws: Vec<(f64, f64)> = (0..10_000).map(|_| sample_t_copula(0.5, 5.0, &mut rng)).collect();
    let (x, y): (Vec<f64>, Vec<f64>) = draws.into_iter().unzip();
    let fit = fit_t_copula(&pseudo_observations(&x), &pseudo_observations(&y)).expect("fit");
    let big: Vec<(f64, f64)> = (0..100_000).map(|_| sample_t_copula(0.5, 5.0, &mut rng)).collect();
    let (bx, by): (Vec<f64>, Vec<f64>) = big.into_iter().unzip();
    let tau = kendall_tau(&bx, &by);
    let target = 2.0 / std::f64::consts::PI * 0.5f64.asin();
    verdict(
        (fit.rho - 0.5).abs() <= 0.05 && (fit.dof - 5.0).abs() <= 2.0 && (tau - target).abs() <= 0.02,
        format!("rho {:.4}, dof {:.3}, tau {:.4} vs {:.4}", fit.rho, fit.dof, tau, target),
    )
}

fn effort_correction() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g: ObservableGroup = "SouthAsia/ArrOver45/High".parse().unwrap();
    let (k, gamma, noise_var, v_eta) = (6.3032, 1.0, 7.168, 0.25);
    let eta = Normal::new(0.0, f64::sqrt(v_eta)).unwrap();
    let noise = Normal::new(0.0, f64::sqrt(noise_var)).unwrap();
    let mut data = Vec::new();
    let mut true_log = Vec::new();
    for w in 0..400u64 {
        let shift = eta.sample(&mut rng);
        for _ in 0..10 {
            let log_e: f64 = rng.random_range(EFFORT_MIN.ln()..EFFORT_MAX.ln());
            let signal = k + gamma * log_e + noise.sample(&mut rng);
            // Measured time is true effort scaled by the worker's speed.
            data.push(TimedSignal { worker_id: w, group: g, signal, time: (log_e - shift).exp() });
            true_log.push(log_e);
        }
    }
    let fit = estimate_signal_production(&data).expect("production");
    let model = correct_effort(&data, &fit).expect("correction");
    // Per-worker mean squared error, raw minus corrected.
    let diffs: Vec<f64> = (0..400)
        .map(|w| {
            let rows = w * 10..(w + 1) * 10;
            rows.map(|i| {
                let raw = (data[i].time.ln() - true_log[i]).powi(2);
                let cor = (model.corrected[i].ln() - true_log[i]).powi(2);
                raw - cor
            })
            .sum::<f64>()
                / 10.0
        })
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = mean / (sd / n.sqrt());
    let p = 1.0 - StudentsT::new(0.0, 1.0, n - 1.0).unwrap().cdf(t);
    let raw: f64 = data.iter().zip(&true_log).map(|(d, l)| (d.time.ln() - l).powi(2)).sum::<f64>() / data.len() as f64;
    let cor: f64 =
        model.corrected.iter().zip(&true_log).map(|(c, l)| (c.ln() - l).powi(2)).sum::<f64>() / data.len() as f64;
    verdict(
        cor < raw && p < 0.01,
        format!("MSE log effort raw {raw:.4}, corrected {cor:.4}; v_eta {:.3}; paired t {t:.2}, p {p:.1e}", model.v_eta),
    )
}

fn probability_normalization(s: &Shared) -> Verdict {
    let markets: [(&str, &SimulatedMarket, f64); 4] = [
        ("generated", &s.world.market, s.world.params.pi),
        ("SQ", &s.markets.sq, s.est.structural.params.pi),
        ("NS", &s.markets.ns, s.est.structural.params.pi),
        ("FI", &s.markets.fi, s.est.structural.params.pi),
    ];
    let mut worst = 0.0f64;
    let mut jobs = 0;
    for (_, m, pi) in markets {
        worst = worst.max(m.max_probability_error);
        for j in &m.jobs {
            let stored: f64 = j.hidden.iter().map(|h| h.choice_prob).sum::<f64>() + j.outside_prob;
            let deltas: Vec<f64> = j.hidden.iter().filter_map(|h| h.delta).collect();
            let (inside, outside) = choice_probabilities(&deltas, pi);
            let fresh = inside.iter().sum::<f64>() + outside;
            worst = worst.max((stored - 1.0).abs()).max((fresh - 1.0).abs());
            jobs += 1;
        }
    }
    verdict(worst <= 1e-12, format!("worst |sum - 1| {worst:.1e} over {jobs} jobs"))
}

fn directionality(s: &Shared) -> Verdict {
    let d = &s.cf.directionality;
    verdict(
        d.holds(2.0),
        format!(
            "type corr {:.3}; top quintile {:+.2}%, bottom quintile {:+.2}%, winning bid {:+.3}%",
            s.world.types.groups.values().next().map_or(f64::NAN, |t| t.rho),
            d.top_ability_change_pct,
            d.bottom_ability_change_pct,
            d.winning_bid_change_pct
        ),
    )
}

fn equilibrium_residuals(s: &Shared) -> Verdict {
    let params = &s.est.structural.params;
    let ns_rule = BidOnlyRule { params: params.clone(), regime: Regime::NoSignaling, group_means: s.cf.group_means.clone() };
    let fi_rule = BidOnlyRule { params: params.clone(), regime: Regime::FullInformation, group_means: GroupMap::new() };
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (label, eq, pool, rule) in [("NS", &s.cf.ns, &s.markets.ns_pool, &ns_rule), ("FI", &s.cf.fi, &s.markets.fi_pool, &fi_rule)] {
        for sol in &eq.solutions {
            let r = equilibrium_residual(pool, &sol.strategy, rule).expect("residual");
            worst = worst.max(r);
            parts.push(format!("{label} from {}: {r:.4}", sol.report.start_markup));
        }
    }
    verdict(worst <= 0.05, format!("max bid move {worst:.4} ({})", parts.join(", ")))
}

/// Straight-line consideration sets, one job at a time, following the steps
/// in order. Returns flags per kept job and the dropped job ids.
fn consideration_reference(jobs: &[JobClicks]) -> (BTreeMap<u64, Vec<bool>>, Vec<u64>) {
    const HOUR: i64 = 3_600_000;
    let mut step1: Vec<(u64, &JobClicks, Vec<u32>, Vec<bool>, Vec<u32>)> = Vec::new();
    for job in jobs {
        let n = job.applications.len();
        if n == 0 || job.applications.iter().any(|a| a.rank_at_close.is_none()) {
            continue;
        }
        let posted = job.posted_ms.unwrap_or_else(|| job.applications.iter().map(|a| a.submitted_ms).min().unwrap());
        let rank: Vec<u32> = job.applications.iter().map(|a| a.rank_at_close.unwrap()).collect();
        let t: Vec<i64> = job.applications.iter().map(|a| a.submitted_ms - posted).collect();
        let mut by_time: Vec<usize> = (0..n).collect();
        by_time.sort_by(|&i, &j| (job.applications[i].submitted_ms, rank[i]).cmp(&(job.applications[j].submitted_ms, rank[j])).then(i.cmp(&j)));
        let interacted =
            |i: usize| job.applications[i].hired || job.applications[i].messages_count >= 2 || job.applications[i].employer_engaged;
        let in_five = t.iter().filter(|&&x| x <= 5 * 60_000).count();
        let mut latest: Option<usize> = None;
        for &i in &by_time {
            if interacted(i) {
                latest = Some(i);
            }
        }
        let ref_rank = latest.map(|i| job.applications[i].engaged_rank_reference.unwrap_or(rank[i]));
        let mut points = vec![0u32; n];
        let mut first = vec![false; n];
        for i in 0..n {
            let pos = by_time.iter().position(|&j| j == i).unwrap();
            if interacted(i) {
                points[i] += 1;
                first[i] = true;
            }
            if pos < 8 && t[i] <= 2 * HOUR {
                points[i] += 1;
            }
            if (rank[i] + 7) / 8 == 1 && t[i] <= 2 * HOUR {
                points[i] += 1;
            }
            if t[i] <= 5 * 60_000 && in_five < 30 {
                points[i] += 1;
            }
            if let Some(r) = ref_rank {
                if rank[i] < r {
                    points[i] += 1;
                }
            }
        }
        step1.push((job.job_id, job, points, first, rank));
    }
    // Nearest-rank 75th percentile of the step-1 set sizes.
    let mut sizes: Vec<usize> = step1.iter().map(|(_, _, p, _, _)| p.iter().filter(|&&x| x > 0).count()).collect();
    sizes.sort();
    let threshold = sizes[((0.75 * sizes.len() as f64).ceil() as usize).max(1) - 1] as f64;

    let mut kept = BTreeMap::new();
    let mut dropped = Vec::new();
    for (id, job, points, first, rank) in step1 {
        let apps = &job.applications;
        let n = apps.len();
        let posted = job.posted_ms.unwrap_or_else(|| apps.iter().map(|a| a.submitted_ms).min().unwrap());
        let mut on: Vec<bool> = points.iter().map(|&p| p > 0).collect();
        let size = |on: &Vec<bool>| on.iter().filter(|&&x| x).count();
        // Step 2
        if size(&on) as f64 > threshold {
            for i in 0..n {
                if points[i] == 1 && !first[i] && !apps[i].hired {
                    on[i] = false;
                }
            }
        }
        // Step 3a
        if size(&on) < 5 && n > 15 {
            for i in 0..n {
                if rank[i] <= 16 {
                    on[i] = true;
                }
            }
        }
        // Step 3b
        if size(&on) < 5 && n < 9 {
            for i in 0..n {
                if apps[i].submitted_ms - posted <= 12 * HOUR {
                    on[i] = true;
                }
            }
        }
        // Step 3c
        if size(&on) < 3 {
            for i in 0..n {
                if rank[i] <= 8 && apps[i].submitted_ms - posted <= 12 * HOUR {
                    on[i] = true;
                }
            }
        }
        // Step 3d
        if size(&on) < 3 && n < 8 {
            for x in on.iter_mut() {
                *x = true;
            }
        }
        // Step 3e
        if size(&on) < 3 {
            let mut by_time: Vec<usize> = (0..n).collect();
            by_time.sort_by(|&i, &j| (apps[i].submitted_ms, rank[i]).cmp(&(apps[j].submitted_ms, rank[j])).then(i.cmp(&j)));
            for &i in by_time.iter().take(5) {
                on[i] = true;
            }
        }
        // Steps 4a to 4d
        for score in 1..=4 {
            if size(&on) > 32 {
                for i in 0..n {
                    if points[i] == score && !first[i] && !apps[i].hired {
                        on[i] = false;
                    }
                }
            }
        }
        // Step 4e
        if size(&on) > 32 {
            for i in 0..n {
                if points[i] == 4 && apps[i].messages_count < 5 && !apps[i].hired {
                    on[i] = false;
                }
            }
        }
        // Step 5
        if size(&on) > 32 && !apps.iter().any(|a| a.hired) {
            dropped.push(id);
        } else {
            kept.insert(id, on);
        }
    }
    (kept, dropped)
}

fn click_corpus(n_jobs: u64, rng: &mut ChaCha8Rng) -> Vec<JobClicks> {
    (0..n_jobs)
        .map(|job_id| {
            let n = match rng.random_range(0..4) {
                0 => rng.random_range(1..9),
                1 => rng.random_range(9..16),
                2 => rng.random_range(16..40),
                _ => rng.random_range(40..90),
            };
            let click_rate = [0.0, 0.05, 0.3, 0.9][rng.random_range(0..4)];
            let burst = rng.random_bool(0.2);
            let mut ranks: Vec<u32> = (1..=n as u32).collect();
            for i in (1..ranks.len()).rev() {
                ranks.swap(i, rng.random_range(0..=i));
            }
            let hired = rng.random_bool(0.6).then(|| rng.random_range(0..n));
            let applications = (0..n)
                .map(|i| {
                    let submitted_ms = if burst && i < 40 {
                        rng.random_range(0..300_000)
                    } else {
                        match rng.random_range(0..4) {
                            0 => rng.random_range(0..300_000),
                            1 => rng.random_range(0..7_200_000),
                            2 => rng.random_range(0..43_200_000),
                            _ => rng.random_range(0..200_000_000),
                        }
                    };
                    let engaged = rng.random_bool(click_rate);
                    ClickRecord {
                        worker_id: i as u64,
                        submitted_ms,
                        first_view_ms: None,
                        employer_engaged: engaged,
                        messages_count: if engaged { rng.random_range(0..8) } else { 0 },
                        rank_at_close: if job_id % 67 == 5 && i == 0 { None } else { Some(ranks[i]) },
                        engaged_rank_reference: rng.random_bool(0.3).then(|| rng.random_range(1..=n as u32)),
                        hired: hired == Some(i),
                    }
                })
                .collect();
            JobClicks { job_id, posted_ms: rng.random_bool(0.8).then_some(0), applications }
        })
        .collect()
}

fn consideration_sets() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let jobs = click_corpus(200, &mut rng);
    let out = build_consideration_sets(&jobs, &ConsiderationOptions { era: Era::PreLLM, ..Default::default() });
    let (kept, dropped) = consideration_reference(&jobs);
    let mut flag_mismatch = 0;
    let mut flags = 0;
    for (id, reference) in &kept {
        match out.considered.get(id) {
            Some(f) => {
                flags += f.len();
                flag_mismatch += f.iter().zip(reference).filter(|(a, b)| a != b).count();
            }
            None => flag_mismatch += reference.len(),
        }
    }
    let same_jobs = out.considered.keys().eq(kept.keys()) && out.dropped == dropped;
    let trimmed = kept.values().filter(|f| f.iter().filter(|&&x| x).count() > 32).count();
    verdict(
        same_jobs && flag_mismatch == 0,
        format!(
            "{flag_mismatch} of {flags} flags differ; {} kept, {} dropped, {} excluded, {} kept above 32",
            kept.len(),
            dropped.len(),
            out.excluded.len(),
            trimmed
        ),
    )
}

fn main() {
    let t0 = Instant::now();
    let s = shared();
    let checks: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("Monte Carlo recovery", Box::new(|| recovery(&s))),
        ("FOC inversion oracle", Box::new(|| foc_oracle(&s))),
        ("likelihood gradients", Box::new(|| gradients(&s))),
        ("edit distance", Box::new(edit_distance)),
        ("PAVA and monotone cubic", Box::new(|| pava_and_cubic(&s))),
        ("t copula", Box::new(copula)),
        ("empirical-Bayes effort correction", Box::new(effort_correction)),
        ("choice-probability normalization", Box::new(|| probability_normalization(&s))),
        ("NS vs SQ directionality", Box::new(|| directionality(&s))),
        ("NS/FI equilibrium residual", Box::new(|| equilibrium_residuals(&s))),
        ("consideration sets", Box::new(consideration_sets)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let v = check();
        failed += usize::from(!v.pass);
        println!("criterion {:>2} {}: {name}: {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("{} of {} criteria pass ({:.0} s)", checks.len() - failed, checks.len(), t0.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
