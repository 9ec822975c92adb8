//! Likelihood and fitting for logit indices linear in parameters, shared by
//! the reduced-form and structural stages.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{minimize, BfgsOptions};

/// Sparse design row: (parameter index, regressor value).
pub(crate) type Row = Vec<(usize, f64)>;

pub(crate) struct IndexJob {
    pub rows: Vec<Row>,
    pub chosen: Option<usize>,
}

pub(crate) struct IndexLogit {
    pub n_params: usize,
    pub jobs: Vec<IndexJob>,
}

impl IndexLogit {
    /// Log-likelihood with gradients in `theta` and in `pi`.
    pub fn loglik_grad(&self, theta: &[f64], pi: f64, want_grad: bool) -> (f64, Vec<f64>, f64) {
        let mut ll = 0.0;
        let mut g = vec![0.0; if want_grad { self.n_params } else { 0 }];
        let mut g_pi = 0.0;
        let mut deltas = Vec::new();
        for job in &self.jobs {
            deltas.clear();
            deltas.extend(job.rows.iter().map(|r| r.iter().map(|&(k, x)| theta[k] * x).sum::<f64>()));
            let m = deltas.iter().copied().fold(0.0f64, f64::max);
            let sum_scaled = (-m).exp() + deltas.iter().map(|d| (d - m).exp()).sum::<f64>();
            let log_d = m + sum_scaled.ln();
            let inv_d = (-log_d).exp();
            let share_inside = 1.0 - inv_d;
            match job.chosen {
                Some(j) => {
                    ll += deltas[j] - log_d + pi.ln();
                    g_pi += 1.0 / pi;
                    if want_grad {
                        for (k, row) in job.rows.iter().enumerate() {
                            let w = f64::from(u8::from(k == j)) - (deltas[k] - log_d).exp();
                            for &(p, x) in row {
                                g[p] += w * x;
                            }
                        }
                    }
                }
                None => {
                    let p0 = 1.0 - pi * share_inside;
                    ll += p0.ln();
                    g_pi -= share_inside / p0;
                    if want_grad {
                        for (k, row) in job.rows.iter().enumerate() {
                            // d p0 / d delta_k = -pi e^delta_k / D^2
                            let w = -pi * (deltas[k] - 2.0 * log_d).exp() / p0;
                            for &(p, x) in row {
                                g[p] += w * x;
                            }
                        }
                    }
                }
            }
        }
        (ll, g, g_pi)
    }

    fn outside_share(&self) -> f64 {
        self.jobs.iter().filter(|j| j.chosen.is_none()).count() as f64 / self.jobs.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub bfgs: BfgsOptions,
    pub standard_errors: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        // The objective is the mean log-likelihood per job, so the gradient
        // tolerance does not depend on sample size.
        Self {
            bfgs: BfgsOptions { grad_tol: 1e-7, max_iter: 2000, ..BfgsOptions::default() },
            standard_errors: true,
        }
    }
}

impl FitOptions {
    pub fn with_tol(tol: f64) -> Self {
        let mut o = Self::default();
        o.bfgs.grad_tol = tol;
        o
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport<P> {
    pub params: P,
    pub loglik: f64,
    pub n_jobs: usize,
    pub iterations: usize,
    pub converged: bool,
    pub grad_sup_norm: f64,
    pub message: String,
    /// Inverse-Hessian standard errors keyed by parameter name.
    pub std_errors: BTreeMap<String, f64>,
}

pub(crate) struct RawFit {
    pub theta: Vec<f64>,
    pub pi: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_sup_norm: f64,
    pub message: String,
    /// Standard errors of (theta..., pi) in natural units.
    pub std_errors: Option<Vec<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl IndexLogit {
    pub fn check_identified(&self) -> Result<()> {
        if self.jobs.is_empty() {
            return Err(Error::data("no jobs to fit"));
        }
        let inside = self.jobs.iter().any(|j| j.chosen.is_some());
        let outside = self.jobs.iter().any(|j| j.chosen.is_none());
        if !(inside && outside) {
            return Err(Error::data(
                "need at least one hire and one outside outcome to identify pi",
            ));
        }
        Ok(())
    }

    /// Objective in optimizer coordinates `(theta, logit pi)`: minus the
    /// mean log-likelihood per job.
    fn objective(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let n = self.n_params;
        let pi = sigmoid(z[n]);
        let scale = 1.0 / self.jobs.len() as f64;
        let (ll, g, g_pi) = self.loglik_grad(&z[..n], pi, true);
        let mut out: Vec<f64> = g.iter().map(|v| -v * scale).collect();
        out.push(-g_pi * pi * (1.0 - pi) * scale);
        (-ll * scale, out)
    }

    pub fn fit(&self, theta0: &[f64], pi0: Option<f64>, opts: &FitOptions) -> Result<RawFit> {
        self.check_identified()?;
        let pi0 = pi0.unwrap_or_else(|| (1.0 - 0.5 * self.outside_share()).clamp(0.05, 0.95));
        let mut z0 = theta0.to_vec();
        z0.push((pi0 / (1.0 - pi0)).ln());
        let res = minimize(|z| self.objective(z), &z0, &opts.bfgs);
        let n = self.n_params;
        let pi = sigmoid(res.x[n]);
        let std_errors = if opts.standard_errors { self.standard_errors(&res.x) } else { None };
        Ok(RawFit {
            theta: res.x[..n].to_vec(),
            pi,
            loglik: -res.f * self.jobs.len() as f64,
            iterations: res.iterations,
            converged: res.converged,
            grad_sup_norm: res.grad.iter().fold(0.0, |m, v| m.max(v.abs())),
            message: res.message,
            std_errors,
        })
    }

    /// Inverse of the numerical Hessian of the total negative log-likelihood,
    /// built from central differences of the analytic gradient.
    fn standard_errors(&self, z: &[f64]) -> Option<Vec<f64>> {
        let dim = z.len();
        let total = self.jobs.len() as f64;
        let mut hess = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..dim {
            let h = 1e-5 * z[i].abs().max(1.0);
            let mut zp = z.to_vec();
            zp[i] += h;
            let mut zm = z.to_vec();
            zm[i] -= h;
            let (_, gp) = self.objective(&zp);
            let (_, gm) = self.objective(&zm);
            for j in 0..dim {
                hess[(i, j)] = (gp[j] - gm[j]) / (2.0 * h) * total;
            }
        }
        let sym = (&hess + hess.transpose()) * 0.5;
        let inv = sym.clone().cholesky().map(|c| c.inverse()).or_else(|| sym.try_inverse())?;
        let n = self.n_params;
        let pi = sigmoid(z[n]);
        let mut se: Vec<f64> = (0..dim).map(|i| inv[(i, i)].max(0.0).sqrt()).collect();
        se[n] *= pi * (1.0 - pi);
        Some(se)
    }
}
