//! Bivariate Student-t copula: pseudo-observations, maximum likelihood and
//! sampling, plus an O(n log n) Kendall's tau.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub const DOF_MIN: f64 = 2.1;
pub const DOF_MAX: f64 = 50.0;
const RHO_BOUND: f64 = 0.995;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TCopula {
    pub rho: f64,
    pub dof: f64,
    /// True when marginals were degenerate and independence was used.
    pub independent: bool,
    pub loglik: f64,
}

fn t_dist(dof: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom")
}

/// Mid-rank pseudo-observations `(rank - 0.5) / n`; tied values share their
/// average rank.
pub fn pseudo_observations(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut u = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        // ranks i+1..=j averaged
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            u[k] = (avg - 0.5) / n as f64;
        }
        i = j;
    }
    u
}

/// Log density of the t copula at t-quantile pairs.
fn copula_loglik(x1: &[f64], x2: &[f64], rho: f64, dof: f64) -> f64 {
    let r2 = 1.0 - rho * rho;
    let c2 = ln_gamma((dof + 2.0) / 2.0) - ln_gamma(dof / 2.0)
        - (dof * std::f64::consts::PI).ln()
        - 0.5 * r2.ln();
    let c1 = ln_gamma((dof + 1.0) / 2.0) - ln_gamma(dof / 2.0) - 0.5 * (dof * std::f64::consts::PI).ln();
    let mut ll = 0.0;
    for (&a, &b) in x1.iter().zip(x2) {
        let q = (a * a - 2.0 * rho * a * b + b * b) / (dof * r2);
        let joint = c2 - 0.5 * (dof + 2.0) * q.ln_1p();
        let m1 = c1 - 0.5 * (dof + 1.0) * (a * a / dof).ln_1p();
        let m2 = c1 - 0.5 * (dof + 1.0) * (b * b / dof).ln_1p();
        ll += joint - m1 - m2;
    }
    ll
}

pub fn t_copula_loglik(u1: &[f64], u2: &[f64], rho: f64, dof: f64) -> f64 {
    let t = t_dist(dof);
    let x1: Vec<f64> = u1.iter().map(|&u| t.inverse_cdf(u)).collect();
    let x2: Vec<f64> = u2.iter().map(|&u| t.inverse_cdf(u)).collect();
    copula_loglik(&x1, &x2, rho, dof)
}

/// Golden-section maximization of `f` on `[a, b]`.
fn golden_max(mut a: f64, mut b: f64, tol: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

fn profile(u1: &[f64], u2: &[f64], dof: f64) -> (f64, f64) {
    let t = t_dist(dof);
    let x1: Vec<f64> = u1.iter().map(|&u| t.inverse_cdf(u)).collect();
    let x2: Vec<f64> = u2.iter().map(|&u| t.inverse_cdf(u)).collect();
    golden_max(-RHO_BOUND, RHO_BOUND, 1e-6, |r| copula_loglik(&x1, &x2, r, dof))
}

/// Maximum-likelihood t copula for paired pseudo-observations. The degrees
/// of freedom are profiled over a log grid on [2.1, 50] and then refined.
pub fn fit_t_copula(u1: &[f64], u2: &[f64]) -> Result<TCopula> {
    if u1.len() != u2.len() || u1.len() < 3 {
        return Err(Error::data("copula fit needs at least three paired observations"));
    }
    if u1.iter().chain(u2).any(|u| !(*u > 0.0 && *u < 1.0)) {
        return Err(Error::input("pseudo-observations must lie strictly inside (0,1)"));
    }
    let grid_n = 16;
    let (lmin, lmax) = (DOF_MIN.ln(), DOF_MAX.ln());
    let grid: Vec<f64> = (0..grid_n)
        .map(|i| (lmin + (lmax - lmin) * i as f64 / (grid_n - 1) as f64).exp())
        .collect();
    let prof: Vec<(f64, f64)> = grid.iter().map(|&v| profile(u1, u2, v)).collect();
    let best = (0..grid_n).max_by(|&a, &b| prof[a].1.total_cmp(&prof[b].1)).unwrap();
    let lo = grid[best.saturating_sub(1)].ln();
    let hi = grid[(best + 1).min(grid_n - 1)].ln();
    let (ldof, ll) = golden_max(lo, hi, 1e-3, |l| profile(u1, u2, l.exp()).1);
    let (dof, rho, ll) = if ll >= prof[best].1 {
        let dof = ldof.exp();
        (dof, profile(u1, u2, dof).0, ll)
    } else {
        (grid[best], prof[best].0, prof[best].1)
    };
    Ok(TCopula { rho, dof, independent: false, loglik: ll })
}

/// Draws one pair of uniforms from the t copula.
pub fn sample_t_copula<R: Rng + ?Sized>(rho: f64, dof: f64, rng: &mut R) -> (f64, f64) {
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    let y = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
    let w: f64 = ChiSquared::new(dof).expect("dof > 0").sample(rng);
    let s = (dof / w).sqrt();
    let t = t_dist(dof);
    (t.cdf(z1 * s), t.cdf(y * s))
}

/// Kendall's tau-b by Knight's merge-sort algorithm.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    assert_eq!(n, y.len());
    if n < 2 {
        return f64::NAN;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let pairs = |v: u64| v * (v.saturating_sub(1)) / 2;

    // Ties in x, and joint ties in (x, y).
    let (mut tx, mut txy) = (0u64, 0u64);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        tx += pairs((j - i) as u64);
        let mut k = i;
        while k < j {
            let mut l = k;
            while l < j && y[idx[l]] == y[idx[k]] {
                l += 1;
            }
            txy += pairs((l - k) as u64);
            k = l;
        }
        i = j;
    }

    // Sort y by merge sort counting exchanges.
    let mut ys: Vec<f64> = idx.iter().map(|&k| y[k]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);

    let mut ty = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && ys[j] == ys[i] {
            j += 1;
        }
        ty += pairs((j - i) as u64);
        i = j;
    }
    let n0 = pairs(n as u64);
    let concordant_minus_discordant =
        n0 as f64 - tx as f64 - ty as f64 + txy as f64 - 2.0 * swaps as f64;
    concordant_minus_discordant / (((n0 - tx) as f64) * ((n0 - ty) as f64)).sqrt()
}

fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (a, b) = v.split_at_mut(mid);
        let (ba, bb) = buf.split_at_mut(mid);
        merge_count(a, ba) + merge_count(b, bb)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    while i < mid {
        buf[k] = v[i];
        i += 1;
        k += 1;
    }
    while j < n {
        buf[k] = v[j];
        j += 1;
        k += 1;
    }
    v.copy_from_slice(&buf[..n]);
    swaps
}
