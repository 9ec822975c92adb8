//! Strategies on a grid of type quantiles, and best responses to a
//! win-probability surface.

use serde::{Deserialize, Serialize};

use super::types::TypeDistribution;
use crate::error::{Error, Result};
use crate::model::{GroupMap, ObservableGroup, WorkerType, BID_MAX, BID_MIN, EFFORT_MAX, EFFORT_MIN};
use crate::win_probability::{SurfacePoint, WinSurface};

pub const STRATEGY_GRID: usize = 25;

/// Bid and effort on a (cost, ability) node grid, cost-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyGrid {
    pub cost_nodes: Vec<f64>,
    pub ability_nodes: Vec<f64>,
    pub bids: Vec<f64>,
    pub efforts: Vec<f64>,
}

fn bracket(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    if n == 1 {
        return (0, 0.0);
    }
    let i = nodes.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
    let h = nodes[i + 1] - nodes[i];
    let t = if h > 0.0 { ((x - nodes[i]) / h).clamp(0.0, 1.0) } else { 0.0 };
    (i, t)
}

impl StrategyGrid {
    fn bilinear(&self, values: &[f64], cost: f64, ability: f64) -> f64 {
        let na = self.ability_nodes.len();
        let (i, t) = bracket(&self.cost_nodes, cost);
        let (j, s) = bracket(&self.ability_nodes, ability);
        let i1 = (i + 1).min(self.cost_nodes.len() - 1);
        let j1 = (j + 1).min(na - 1);
        let v = |a: usize, b: usize| values[a * na + b];
        (1.0 - t) * ((1.0 - s) * v(i, j) + s * v(i, j1)) + t * ((1.0 - s) * v(i1, j) + s * v(i1, j1))
    }

    /// (bid, effort) at a type; outside the grid the nearest edge is used.
    pub fn action(&self, cost: f64, ability: f64) -> (f64, f64) {
        let b = self.bilinear(&self.bids, cost, ability).clamp(BID_MIN, BID_MAX);
        let e = self.bilinear(&self.efforts, cost, ability).clamp(EFFORT_MIN, EFFORT_MAX);
        (b, e)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub groups: GroupMap<StrategyGrid>,
}

impl StrategyProfile {
    pub fn action(&self, t: &WorkerType) -> Result<(f64, f64)> {
        let g = self.groups.get(&t.group).ok_or(Error::UnknownGroup(t.group))?;
        Ok(g.action(t.cost, t.ability))
    }
}

fn golden_max(mut lo: f64, mut hi: f64, tol: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

/// Expected payoff `P (b - c) - e^2 / (2 exp(a))` and the surface there.
fn payoff<S: WinSurface + ?Sized>(s: &S, b: f64, u: f64, c: f64, a: f64) -> Result<(f64, SurfacePoint)> {
    let e = u.exp().clamp(EFFORT_MIN, EFFORT_MAX);
    let sp = s.eval(b, e)?;
    if !(sp.p.is_finite() && sp.dp_db.is_finite() && sp.dp_de.is_finite()) {
        return Err(Error::Numerical(format!("non-finite surface at ({b}, {e})")));
    }
    Ok((sp.p * (b - c) - e * e / (2.0 * a.exp()), sp))
}

#[derive(Clone, Copy, Debug)]
struct Inner {
    u: f64,
    value: f64,
    sp: SurfacePoint,
}

fn best_effort<S: WinSurface + ?Sized>(s: &S, b: f64, c: f64, a: f64) -> Result<Inner> {
    let (u_lo, u_hi) = (EFFORT_MIN.ln(), EFFORT_MAX.ln());
    let n = 13;
    let step = (u_hi - u_lo) / (n - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..n {
        let v = payoff(s, b, u_lo + step * k as f64, c, a)?.0;
        if v > best.1 {
            best = (k, v);
        }
    }
    let lo = u_lo + step * best.0.saturating_sub(1) as f64;
    let hi = (u_lo + step * (best.0 + 1) as f64).min(u_hi);
    let (u, _) = golden_max(lo, hi, 1e-9, |u| Ok(payoff(s, b, u, c, a)?.0))?;
    let grid_u = u_lo + step * best.0 as f64;
    let (u, (value, sp)) = {
        let at_u = payoff(s, b, u, c, a)?;
        let at_grid = payoff(s, b, grid_u, c, a)?;
        if at_grid.0 > at_u.0 {
            (grid_u, at_grid)
        } else {
            (u, at_u)
        }
    };
    Ok(Inner { u, value, sp })
}

/// Best (bid, effort) against a surface for type (c, a). Bids come from
/// bisection on the bid first-order condition with the effort re-optimized
/// at each bid; a dense scan replaces bisection when the condition has no
/// sign change around the best coarse bid. Corners are allowed.
pub fn best_response<S: WinSurface + ?Sized>(s: &S, c: f64, a: f64) -> Result<(f64, f64)> {
    if c >= BID_MAX || s.eval(BID_MIN, EFFORT_MAX)?.p <= 0.0 {
        return Ok((BID_MAX, EFFORT_MIN));
    }
    let foc = |b: f64| -> Result<(f64, Inner)> {
        let inner = best_effort(s, b, c, a)?;
        Ok((inner.sp.p + inner.sp.dp_db * (b - c), inner))
    };
    let n = 45;
    let step = (BID_MAX - BID_MIN) / (n - 1) as f64;
    let coarse: Vec<(f64, Inner)> = (0..n)
        .map(|k| {
            let b = BID_MIN + step * k as f64;
            best_effort(s, b, c, a).map(|i| (b, i))
        })
        .collect::<Result<_>>()?;
    let k = (0..n).max_by(|&x, &y| coarse[x].1.value.total_cmp(&coarse[y].1.value)).unwrap();
    let mut candidates = vec![coarse[k]];
    let lo = BID_MIN + step * k.saturating_sub(1) as f64;
    let hi = (BID_MIN + step * (k + 1) as f64).min(BID_MAX);
    let (g_lo, _) = foc(lo)?;
    let (g_hi, _) = foc(hi)?;
    if g_lo > 0.0 && g_hi < 0.0 {
        let (mut l, mut h) = (lo, hi);
        while h - l > 1e-7 {
            let m = 0.5 * (l + h);
            if foc(m)?.0 > 0.0 {
                l = m;
            } else {
                h = m;
            }
        }
        let b = 0.5 * (l + h);
        candidates.push((b, best_effort(s, b, c, a)?));
    } else {
        let m = 200;
        for i in 0..=m {
            let b = lo + (hi - lo) * i as f64 / m as f64;
            candidates.push((b, best_effort(s, b, c, a)?));
        }
    }
    let best = candidates.iter().max_by(|x, y| x.1.value.total_cmp(&y.1.value)).unwrap();
    Ok((best.0, best.1.u.exp().clamp(EFFORT_MIN, EFFORT_MAX)))
}

/// Best responses at every node of a `n x n` type-quantile grid per group.
pub fn calibrate_strategy_from_focs<S: WinSurface>(
    types: &TypeDistribution,
    surfaces: &GroupMap<S>,
    n: usize,
) -> Result<StrategyProfile> {
    if n < 2 {
        return Err(Error::param("strategy grid needs at least two nodes per axis"));
    }
    let mut profile = StrategyProfile::default();
    for (&g, surface) in surfaces {
        profile.groups.insert(g, calibrate_group(types, g, surface, n)?);
    }
    Ok(profile)
}

pub fn calibrate_group<S: WinSurface + ?Sized>(
    types: &TypeDistribution,
    group: ObservableGroup,
    surface: &S,
    n: usize,
) -> Result<StrategyGrid> {
    let t = types.group(group)?;
    let levels: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let cost_nodes: Vec<f64> = levels.iter().map(|&u| t.at(u, 0.5).0).collect();
    let ability_nodes: Vec<f64> = levels.iter().map(|&u| t.at(0.5, u).1).collect();
    let mut bids = Vec::with_capacity(n * n);
    let mut efforts = Vec::with_capacity(n * n);
    for &c in &cost_nodes {
        for &a in &ability_nodes {
            let (b, e) = best_response(surface, c, a)
                .map_err(|e| Error::Numerical(format!("calibration failed for {group}: {e}")))?;
            bids.push(b);
            efforts.push(e);
        }
    }
    Ok(StrategyGrid { cost_nodes, ability_nodes, bids, efforts })
}
