//! Coordinate descent for `‖y − Xβ‖² + λ‖β‖₁`.
//!
//! The solver works on the covariance form (`XᵀX`, `Xᵀy`), so a Gram matrix
//! shared by several targets is computed only once. Coordinates are visited
//! in column order every sweep.
//!
//! Optimality conditions for this scaling of the objective, with
//! `g = Xᵀ(y − Xβ)`:
//!
//! ```text
//!   β_j = 0  ⇒  |g_j| ≤ λ/2
//!   β_j ≠ 0  ⇒  g_j = (λ/2)·sign(β_j)
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct CdOptions {
    /// Bound on the largest optimality-condition violation at exit.
    pub tol: f64,
    pub max_iter: usize,
    /// Record the objective after every sweep.
    pub trace: bool,
}

impl Default for CdOptions {
    fn default() -> Self {
        CdOptions {
            tol: 1e-8,
            max_iter: 10_000,
            trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CdSolution {
    pub beta: Vec<f64>,
    pub sweeps: usize,
    /// Largest optimality-condition violation of `beta`.
    pub kkt: f64,
    /// Duality gap in the units of the objective.
    pub gap: f64,
    pub objective_trace: Vec<f64>,
}

#[inline]
pub fn soft_threshold(z: f64, threshold: f64) -> f64 {
    if z > threshold {
        z - threshold
    } else if z < -threshold {
        z + threshold
    } else {
        0.0
    }
}

/// Largest violation of the optimality conditions given `g = Xᵀr`.
pub fn kkt_violation(gradient: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let half = lambda / 2.0;
    gradient
        .iter()
        .zip(beta)
        .map(|(&g, &b)| {
            if b == 0.0 {
                (g.abs() - half).max(0.0)
            } else {
                (g - half * b.signum()).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// `‖y − Xβ‖² + λ‖β‖₁` evaluated directly.
pub fn objective(x: &DMatrix<f64>, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let r = DVector::from_column_slice(y) - x * DVector::from_column_slice(beta);
    r.norm_squared() + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

struct GramProblem<'a> {
    gram: &'a DMatrix<f64>,
    xty: &'a [f64],
    yty: f64,
    lambda: f64,
}

impl GramProblem<'_> {
    fn gradient(&self, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let b = DVector::from_column_slice(beta);
        let q = self.gram * &b;
        let g = self.xty.iter().zip(q.iter()).map(|(c, q)| c - q).collect();
        (g, q.as_slice().to_vec())
    }

    /// ‖r‖² from the covariance form.
    fn rss(&self, beta: &[f64], q: &[f64]) -> f64 {
        let btq: f64 = beta.iter().zip(q).map(|(b, q)| b * q).sum();
        let btc: f64 = beta.iter().zip(self.xty).map(|(b, c)| b * c).sum();
        (self.yty - 2.0 * btc + btq).max(0.0)
    }

    fn objective(&self, beta: &[f64], q: &[f64]) -> f64 {
        self.rss(beta, q) + self.lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    fn duality_gap(&self, beta: &[f64], q: &[f64], g: &[f64]) -> f64 {
        // Halved problem ½‖r‖² + (λ/2)‖β‖₁ with dual point θ = s·r.
        let half = self.lambda / 2.0;
        let rss = self.rss(beta, q);
        let l1: f64 = beta.iter().map(|b| b.abs()).sum();
        let primal = 0.5 * rss + half * l1;
        let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let s = if gmax > half { half / gmax } else { 1.0 };
        let btc: f64 = beta.iter().zip(self.xty).map(|(b, c)| b * c).sum();
        let ytr = self.yty - btc;
        let dual = s * ytr - 0.5 * s * s * rss;
        (2.0 * (primal - dual)).max(0.0)
    }
}

/// Coordinate descent on the covariance form `XᵀX`, `Xᵀy`, `yᵀy`.
pub fn solve_gram(
    gram: &DMatrix<f64>,
    xty: &[f64],
    yty: f64,
    lambda: f64,
    opts: &CdOptions,
    warm_start: Option<&[f64]>,
) -> Result<CdSolution> {
    let p = xty.len();
    if gram.nrows() != p || gram.ncols() != p {
        return Err(Error::Shape {
            expected: p,
            found: gram.nrows(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    let problem = GramProblem {
        gram,
        xty,
        yty,
        lambda,
    };
    let half = lambda / 2.0;
    let mut beta = match warm_start {
        Some(b) if b.len() == p => b.to_vec(),
        Some(b) => {
            return Err(Error::Shape {
                expected: p,
                found: b.len(),
            })
        }
        None => vec![0.0; p],
    };
    let (_, mut q) = problem.gradient(&beta);
    let mut trace = Vec::new();
    if opts.trace {
        trace.push(problem.objective(&beta, &q));
    }

    let mut sweeps = 0;
    loop {
        // Exact gradient for the stopping test; q is refreshed to shed drift.
        let (g, q_exact) = problem.gradient(&beta);
        q = q_exact;
        let kkt = kkt_violation(&g, &beta, lambda);
        if kkt <= opts.tol {
            let gap = problem.duality_gap(&beta, &q, &g);
            return Ok(CdSolution {
                beta,
                sweeps,
                kkt,
                gap,
                objective_trace: trace,
            });
        }
        if sweeps >= opts.max_iter {
            let gap = problem.duality_gap(&beta, &q, &g);
            return Err(Error::NoConvergence {
                iterations: sweeps,
                gap,
            });
        }
        for j in 0..p {
            let gjj = gram[(j, j)];
            if gjj <= 0.0 {
                continue;
            }
            let old = beta[j];
            let rho = xty[j] - q[j] + gjj * old;
            let new = soft_threshold(rho, half) / gjj;
            if new != old {
                let delta = new - old;
                for (qk, gk) in q.iter_mut().zip(gram.column(j).iter()) {
                    *qk += delta * gk;
                }
                beta[j] = new;
            }
        }
        sweeps += 1;
        if opts.trace {
            trace.push(problem.objective(&beta, &q));
        }
    }
}

/// Plain lasso on a dense design, no intercept and no standardization.
pub fn lasso_cd(x: &DMatrix<f64>, y: &[f64], lambda: f64, opts: &CdOptions) -> Result<CdSolution> {
    if x.nrows() != y.len() {
        return Err(Error::Shape {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    let yv = DVector::from_column_slice(y);
    let gram = x.tr_mul(x);
    let xty = x.tr_mul(&yv);
    solve_gram(&gram, xty.as_slice(), yv.norm_squared(), lambda, opts, None)
}

/// `Xᵀ(y − Xβ)` for a dense design.
pub fn correlation_with_residual(x: &DMatrix<f64>, y: &[f64], beta: &[f64]) -> Vec<f64> {
    let r = DVector::from_column_slice(y) - x * DVector::from_column_slice(beta);
    x.tr_mul(&r).as_slice().to_vec()
}
