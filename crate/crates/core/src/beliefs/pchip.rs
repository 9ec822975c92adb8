use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape-preserving piecewise cubic Hermite interpolant (Fritsch-Carlson
/// slopes with the weighted harmonic mean). Constant outside the knot range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::input("pchip needs equal, nonzero numbers of knots"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input("pchip knots must be strictly increasing"));
        }
        let n = x.len();
        let mut d = vec![0.0; n];
        if n == 2 {
            let m = (y[1] - y[0]) / (x[1] - x[0]);
            d = vec![m, m];
        } else if n > 2 {
            let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
            let m: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
            for k in 1..n - 1 {
                if m[k - 1] * m[k] <= 0.0 {
                    d[k] = 0.0;
                } else {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
                }
            }
            d[0] = edge_slope(h[0], h[1], m[0], m[1]);
            d[n - 1] = edge_slope(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
        }
        Ok(Self { x, y, d })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    pub fn slopes(&self) -> &[f64] {
        &self.d
    }

    fn locate(&self, s: f64) -> usize {
        // Index k with x[k] <= s < x[k+1], capped to the last interval.
        let k = self.x.partition_point(|&v| v <= s);
        k.saturating_sub(1).min(self.x.len() - 2)
    }

    pub fn eval(&self, s: f64) -> f64 {
        let n = self.x.len();
        if n == 1 || s <= self.x[0] {
            return self.y[0];
        }
        if s >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let k = self.locate(s);
        let (x0, x1, y0, y1) = (self.x[k], self.x[k + 1], self.y[k], self.y[k + 1]);
        let h = x1 - x0;
        let t = (s - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h01 = 3.0 * t2 - 2.0 * t3;
        let h10 = t3 - 2.0 * t2 + t;
        let h11 = t3 - t2;
        let v = y0 + (y1 - y0) * h01 + h * (self.d[k] * h10 + self.d[k + 1] * h11);
        v.clamp(y0.min(y1), y0.max(y1))
    }

    /// First derivative; zero on the flat tails.
    pub fn derivative(&self, s: f64) -> f64 {
        let n = self.x.len();
        if n == 1 || s <= self.x[0] || s >= self.x[n - 1] {
            return 0.0;
        }
        let k = self.locate(s);
        let (x0, x1, y0, y1) = (self.x[k], self.x[k + 1], self.y[k], self.y[k + 1]);
        let h = x1 - x0;
        let t = (s - x0) / h;
        let t2 = t * t;
        let dh01 = 6.0 * t - 6.0 * t2;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh11 = 3.0 * t2 - 2.0 * t;
        (y1 - y0) * dh01 / h + self.d[k] * dh10 + self.d[k + 1] * dh11
    }
}
