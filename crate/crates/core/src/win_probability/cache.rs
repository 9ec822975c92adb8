//! Tabulated surface on a (bid, log effort) grid with bicubic Hermite
//! patches built from exact values and derivatives at the nodes.

use serde::{Deserialize, Serialize};

use super::{EmployerIndex, SimulationPool, SurfacePoint, WinSurface};
use crate::error::{Error, Result};
use crate::model::{GroupMap, ObservableGroup, BID_MAX, BID_MIN, EFFORT_MAX, EFFORT_MIN};

pub const GRID_BIDS: usize = 45;
pub const GRID_EFFORTS: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CachedSurface {
    pub group: ObservableGroup,
    pub bids: Vec<f64>,
    /// Grid in `u = ln e`.
    pub log_efforts: Vec<f64>,
    /// Node values `[P, dP/db, dP/du, d2P/db du]`, bid-major.
    pub nodes: Vec<[f64; 4]>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

// Hermite basis and derivatives at t in [0, 1].
fn basis(t: f64) -> ([f64; 4], [f64; 4]) {
    let (t2, t3) = (t * t, t * t * t);
    (
        [2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2],
        [6.0 * t2 - 6.0 * t, 3.0 * t2 - 4.0 * t + 1.0, -6.0 * t2 + 6.0 * t, 3.0 * t2 - 2.0 * t],
    )
}

fn locate(grid: &[f64], x: f64) -> (usize, f64, f64) {
    let n = grid.len();
    let i = grid.partition_point(|&g| g <= x).clamp(1, n - 1) - 1;
    let h = grid[i + 1] - grid[i];
    (i, ((x - grid[i]) / h).clamp(0.0, 1.0), h)
}

impl CachedSurface {
    pub fn build<I: EmployerIndex>(pool: &SimulationPool<I>, group: ObservableGroup) -> Result<Self> {
        Self::with_grid(pool, group, GRID_BIDS, GRID_EFFORTS)
    }

    pub fn with_grid<I: EmployerIndex>(
        pool: &SimulationPool<I>,
        group: ObservableGroup,
        n_bids: usize,
        n_efforts: usize,
    ) -> Result<Self> {
        if n_bids < 2 || n_efforts < 2 {
            return Err(Error::param("surface grid needs at least two nodes per axis"));
        }
        let bids = linspace(BID_MIN, BID_MAX, n_bids);
        let log_efforts = linspace(EFFORT_MIN.ln(), EFFORT_MAX.ln(), n_efforts);
        let mut nodes = Vec::with_capacity(n_bids * n_efforts);
        for &b in &bids {
            for &u in &log_efforts {
                let v = pool.eval_log_effort(group, b, u)?;
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Numerical(format!("non-finite surface value for {group}")));
                }
                nodes.push(v);
            }
        }
        Ok(Self { group, bids, log_efforts, nodes })
    }

    /// Builds a cache for every group in the pool.
    pub fn build_all<I: EmployerIndex>(pool: &SimulationPool<I>) -> Result<GroupMap<CachedSurface>> {
        pool.groups().into_iter().map(|g| Ok((g, Self::build(pool, g)?))).collect()
    }

    /// (P, dP/db, dP/du) at `(bid, u)`.
    pub fn eval_log(&self, bid: f64, u: f64) -> [f64; 3] {
        let (i, t, hb) = locate(&self.bids, bid);
        let (j, s, hu) = locate(&self.log_efforts, u);
        let (bt, dbt) = basis(t);
        let (bs, dbs) = basis(s);
        let ne = self.log_efforts.len();
        let mut out = [0.0; 3];
        for (di, corner_b) in [(0usize, 0usize), (1, 2)] {
            for (dj, corner_u) in [(0usize, 0usize), (1, 2)] {
                let n = self.nodes[(i + di) * ne + j + dj];
                // coefficients on (value, b-slope, u-slope, cross) basis pairs
                let terms = [
                    (n[0], corner_b, corner_u),
                    (n[1] * hb, corner_b + 1, corner_u),
                    (n[2] * hu, corner_b, corner_u + 1),
                    (n[3] * hb * hu, corner_b + 1, corner_u + 1),
                ];
                for (c, kb, ku) in terms {
                    out[0] += c * bt[kb] * bs[ku];
                    out[1] += c * dbt[kb] * bs[ku] / hb;
                    out[2] += c * bt[kb] * dbs[ku] / hu;
                }
            }
        }
        out
    }
}

impl WinSurface for CachedSurface {
    fn eval(&self, bid: f64, effort: f64) -> Result<SurfacePoint> {
        let tol = 1e-9;
        if !(bid >= BID_MIN - tol && bid <= BID_MAX + tol) || !(effort >= EFFORT_MIN * (1.0 - tol) && effort <= EFFORT_MAX * (1.0 + tol)) {
            return Err(Error::domain(format!("({bid}, {effort}) outside the surface domain")));
        }
        let v = self.eval_log(bid, effort.ln());
        Ok(SurfacePoint { p: v[0], dp_db: v[1], dp_de: v[2] / effort })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::ReducedFormParams;
    use crate::model::SignalProduction;
    use crate::win_probability::RawSlot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reproduces_nodes_and_tracks_exact_surface() {
        let g: ObservableGroup = "Europe/Arr5to45/High".parse().unwrap();
        let idx = ReducedFormParams {
            alpha_signed: -0.012,
            k_lambda: [(g, 0.1)].into_iter().collect(),
            gamma_lambda: [(g, 0.15)].into_iter().collect(),
            pi: 0.57,
        };
        let prod = [(g, SignalProduction::new(5.5, 0.9, 5.0).unwrap())].into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let raw = (0..300)
            .map(|_| {
                (0..6)
                    .map(|_| RawSlot {
                        group: g,
                        considered: rng.random::<f64>() < 0.4,
                        bid: 40.0 + 150.0 * rng.random::<f64>(),
                        signal: 12.0 * rng.random::<f64>(),
                        noise: 4.0 * (rng.random::<f64>() - 0.5),
                    })
                    .collect()
            })
            .collect();
        let pool = SimulationPool::from_raw(raw, idx, prod).unwrap();
        let cache = CachedSurface::build(&pool, g).unwrap();
        let exact = pool.surface(g).unwrap();
        let node = cache.eval(cache.bids[7], cache.log_efforts[11].exp()).unwrap();
        let truth = exact.eval(cache.bids[7], cache.log_efforts[11].exp()).unwrap();
        assert!((node.p - truth.p).abs() < 1e-13);
        for _ in 0..200 {
            let b = 30.0 + 220.0 * rng.random::<f64>();
            let e = (EFFORT_MIN.ln() + (EFFORT_MAX / EFFORT_MIN).ln() * rng.random::<f64>()).exp();
            let c = cache.eval(b, e).unwrap();
            let x = exact.eval(b, e).unwrap();
            assert!((c.p - x.p).abs() < 1e-4 * x.p.max(1e-3), "{} {}", c.p, x.p);
            assert!((c.dp_db - x.dp_db).abs() < 1e-2 * x.dp_db.abs());
            assert!((c.dp_de - x.dp_de).abs() < 1e-2 * x.dp_de.abs());
        }
    }
}
