//! Entropy-regularized optimal transport between two uniform empirical
//! measures, solved with log-domain Sinkhorn iterations.
//!
//! With reference measure `mu (x) nu` the plan is parameterised by dual
//! potentials `f`, `g`:
//!
//! ```text
//! plan[i][j] = mu[i] * nu[j] * exp((f[i] + g[j] - cost[i][j]) / alpha)
//! ```
//!
//! and the regularized objective `sum(plan * cost) + alpha * KL(plan | mu (x) nu)`
//! reduces to `sum(plan[i][j] * (f[i] + g[j]))`.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    /// Entropic regularization strength, > 0.
    pub alpha: f64,
    pub max_iter: usize,
    /// Target for the largest absolute marginal violation.
    pub tol: f64,
    /// Geometric continuation of the regularization: start at the largest
    /// cost and shrink by `eps_decay` per stage until `alpha` is reached,
    /// warm-starting each stage. Disabled when `eps_decay` is not in (0, 1).
    ///
    /// `max_iter` bounds the total over all stages. Intermediate stages stop
    /// at marginal error `sqrt(tol)` or after `max_iter / (2 * stages)`
    /// iterations; the final stage gets the rest of the budget.
    pub eps_decay: f64,
    /// Record `primal_trace` / `dual_trace` (costs a plan evaluation per
    /// iteration).
    pub trace: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            max_iter: 200,
            tol: 1e-6,
            eps_decay: 0.5,
            trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornState {
    pub cost: Array2<f64>,
    pub plan: Array2<f64>,
    pub f: Array1<f64>,
    pub g: Array1<f64>,
    pub alpha: f64,
    /// `sum(plan * cost)`.
    pub transport: f64,
    /// `KL(plan | mu (x) nu)`.
    pub entropy: f64,
    /// `transport + alpha * entropy`.
    pub objective: f64,
    /// Largest absolute row or column marginal violation of `plan`.
    pub marginal_error: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Best objective over exactly feasible (rounded) plans seen so far,
    /// one entry per iteration at the final regularization level. An upper
    /// bound on the optimum; nonincreasing by construction.
    pub primal_trace: Vec<f64>,
    /// Dual objective after every iteration at the final level. A lower
    /// bound on the optimum; nondecreasing since each half-step is an exact
    /// block maximization.
    pub dual_trace: Vec<f64>,
}

/// Squared Euclidean cost between rows of `x` and rows of `y`.
pub fn sq_euclidean_cost(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Array2<f64> {
    let (n, m) = (x.nrows(), y.nrows());
    Array2::from_shape_fn((n, m), |(i, j)| {
        x.row(i)
            .iter()
            .zip(y.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    })
}

pub fn sinkhorn(x: ArrayView2<f64>, y: ArrayView2<f64>, cfg: &SinkhornConfig) -> SinkhornState {
    assert_eq!(x.ncols(), y.ncols(), "point dimensions differ");
    sinkhorn_cost(sq_euclidean_cost(x, y), cfg)
}

fn logsumexp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Sinkhorn on a precomputed cost matrix with uniform marginals.
pub fn sinkhorn_cost(cost: Array2<f64>, cfg: &SinkhornConfig) -> SinkhornState {
    let (n, m) = cost.dim();
    assert!(n >= 1 && m >= 1, "empty measure");
    assert!(cfg.alpha > 0.0, "alpha must be positive");
    let log_mu = -(n as f64).ln();
    let log_nu = -(m as f64).ln();
    let mu = 1.0 / n as f64;
    let nu = 1.0 / m as f64;
    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(m);

    let mut levels = Vec::new();
    if cfg.eps_decay > 0.0 && cfg.eps_decay < 1.0 {
        let mut eps = cost.iter().copied().fold(0.0, f64::max);
        while eps > cfg.alpha {
            levels.push(eps);
            eps *= cfg.eps_decay;
        }
    }
    levels.push(cfg.alpha);

    let mut iterations = 0;
    let mut converged = false;
    let mut primal_trace: Vec<f64> = Vec::new();
    let mut dual_trace = Vec::new();
    let last = levels.len() - 1;
    let budget = cfg.max_iter.max(1);
    let stage_cap = (budget / (2 * levels.len())).max(1);
    let mut a = vec![1.0; n];
    let mut b = vec![1.0; m];
    let mut next_a = vec![0.0; n];
    for (stage, &eps) in levels.iter().enumerate() {
        converged = false;
        let mut stage_iters = 0;
        let (stage_tol, cap) = if stage == last {
            (cfg.tol, budget.saturating_sub(iterations).max(1))
        } else {
            (cfg.tol.sqrt(), stage_cap)
        };
        // Scaling form: potentials f + eps ln a, g + eps ln b over the
        // kernel exp((f + g - cost) / eps), which is rebuilt whenever the
        // scalings drift far from 1.
        let mut kernel = build_kernel(&cost, &f, &g, eps);
        loop {
            let mut healthy = true;
            for i in 0..n {
                let s: f64 = kernel.row(i).iter().zip(&b).map(|(k, bj)| k * bj).sum();
                next_a[i] = 1.0 / (nu * s);
                healthy &= next_a[i].is_finite() && next_a[i] > 0.0;
            }
            if !healthy {
                absorb(&mut f, &mut a, eps);
                absorb(&mut g, &mut b, eps);
                log_f_step(&cost, &g, eps, log_nu, &mut f);
                log_g_step(&cost, &f, eps, log_mu, &mut g);
                kernel = build_kernel(&cost, &f, &g, eps);
                iterations += 1;
                stage_iters += 1;
                if stage_iters >= cap {
                    break;
                }
                continue;
            }
            if stage_iters > 0 {
                // columns are exact after a g half-step; row i carries
                // mu * a_i / next_a_i
                let row_err = (0..n)
                    .map(|i| (mu * a[i] / next_a[i] - mu).abs())
                    .fold(0.0, f64::max);
                if stage == last && cfg.trace {
                    let (fe, ge) = (effective(&f, &a, eps), effective(&g, &b, eps));
                    let plan = plan_from(&cost, &fe, &ge, eps, log_mu, log_nu);
                    let rounded = objective_of(&round_to_feasible(&plan), &cost, eps);
                    let best = primal_trace.last().map_or(rounded, |&p: &f64| p.min(rounded));
                    primal_trace.push(best);
                    dual_trace.push(fe.sum() / n as f64 + ge.sum() / m as f64);
                }
                if row_err < stage_tol {
                    converged = true;
                    break;
                }
                if stage_iters >= cap {
                    break;
                }
            }
            std::mem::swap(&mut a, &mut next_a);
            let mut healthy = true;
            for j in 0..m {
                let s: f64 = kernel.column(j).iter().zip(&a).map(|(k, ai)| k * ai).sum();
                b[j] = 1.0 / (mu * s);
                healthy &= b[j].is_finite() && b[j] > 0.0;
            }
            if !healthy {
                // undo the bad column step in log space
                absorb(&mut f, &mut a, eps);
                b.iter_mut().for_each(|v| *v = 1.0);
                log_g_step(&cost, &f, eps, log_mu, &mut g);
                kernel = build_kernel(&cost, &f, &g, eps);
            } else if a.iter().chain(&b).any(|&v| !(STABLE_LO..=STABLE_HI).contains(&v)) {
                absorb(&mut f, &mut a, eps);
                absorb(&mut g, &mut b, eps);
                kernel = build_kernel(&cost, &f, &g, eps);
            }
            iterations += 1;
            stage_iters += 1;
        }
        absorb(&mut f, &mut a, eps);
        absorb(&mut g, &mut b, eps);
    }

    let plan = plan_from(&cost, &f, &g, cfg.alpha, log_mu, log_nu);
    let transport = (&plan * &cost).sum();
    let entropy = kl_to_product(&plan);
    SinkhornState {
        marginal_error: marginal_error(&plan),
        objective: transport + cfg.alpha * entropy,
        transport,
        entropy,
        cost,
        plan,
        f,
        g,
        alpha: cfg.alpha,
        converged,
        iterations,
        primal_trace,
        dual_trace,
    }
}

/// Scalings outside this range are folded back into the log potentials.
const STABLE_LO: f64 = 1e-100;
const STABLE_HI: f64 = 1e100;

fn build_kernel(cost: &Array2<f64>, f: &Array1<f64>, g: &Array1<f64>, eps: f64) -> Array2<f64> {
    Array2::from_shape_fn(cost.dim(), |(i, j)| ((f[i] + g[j] - cost[[i, j]]) / eps).exp())
}

fn absorb(pot: &mut Array1<f64>, scale: &mut [f64], eps: f64) {
    for (p, s) in pot.iter_mut().zip(scale.iter_mut()) {
        *p += eps * s.ln();
        *s = 1.0;
    }
}

fn effective(pot: &Array1<f64>, scale: &[f64], eps: f64) -> Array1<f64> {
    pot.iter().zip(scale).map(|(p, s)| p + eps * s.ln()).collect()
}

fn log_f_step(cost: &Array2<f64>, g: &Array1<f64>, eps: f64, log_nu: f64, f: &mut Array1<f64>) {
    for (i, fi) in f.iter_mut().enumerate() {
        let row = cost.row(i);
        *fi = -eps * logsumexp((0..g.len()).map(|j| log_nu + (g[j] - row[j]) / eps));
    }
}

fn log_g_step(cost: &Array2<f64>, f: &Array1<f64>, eps: f64, log_mu: f64, g: &mut Array1<f64>) {
    for (j, gj) in g.iter_mut().enumerate() {
        let col = cost.column(j);
        *gj = -eps * logsumexp((0..f.len()).map(|i| log_mu + (f[i] - col[i]) / eps));
    }
}

fn plan_from(
    cost: &Array2<f64>,
    f: &Array1<f64>,
    g: &Array1<f64>,
    eps: f64,
    log_mu: f64,
    log_nu: f64,
) -> Array2<f64> {
    Array2::from_shape_fn(cost.dim(), |(i, j)| {
        (log_mu + log_nu + (f[i] + g[j] - cost[[i, j]]) / eps).exp()
    })
}

pub fn marginal_error(plan: &Array2<f64>) -> f64 {
    let (n, m) = plan.dim();
    let (mu, nu) = (1.0 / n as f64, 1.0 / m as f64);
    let rows = plan.rows().into_iter().map(|r| (r.sum() - mu).abs());
    let cols = plan.columns().into_iter().map(|c| (c.sum() - nu).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

/// `KL(plan | mu (x) nu)` with uniform `mu`, `nu`; `0 log 0 = 0`.
pub fn kl_to_product(plan: &Array2<f64>) -> f64 {
    let (n, m) = plan.dim();
    let log_ref = -((n * m) as f64).ln();
    plan.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * (p.ln() - log_ref))
        .sum()
}

fn objective_of(plan: &Array2<f64>, cost: &Array2<f64>, alpha: f64) -> f64 {
    (plan * cost).sum() + alpha * kl_to_product(plan)
}

/// Projects a nonnegative matrix onto the uniform transport polytope:
/// scale down overfull rows, then overfull columns, then spread the
/// remaining deficit as a rank-one correction.
pub fn round_to_feasible(plan: &Array2<f64>) -> Array2<f64> {
    let (n, m) = plan.dim();
    let (mu, nu) = (1.0 / n as f64, 1.0 / m as f64);
    let mut p = plan.clone();
    for mut row in p.rows_mut() {
        let s = row.sum();
        if s > mu {
            row.mapv_inplace(|v| v * mu / s);
        }
    }
    for mut col in p.columns_mut() {
        let s = col.sum();
        if s > nu {
            col.mapv_inplace(|v| v * nu / s);
        }
    }
    let dr: Vec<f64> = p.rows().into_iter().map(|r| mu - r.sum()).collect();
    let dc: Vec<f64> = p.columns().into_iter().map(|c| nu - c.sum()).collect();
    let total: f64 = dr.iter().sum();
    if total > 0.0 {
        for i in 0..n {
            for j in 0..m {
                p[[i, j]] += dr[i] * dc[j] / total;
            }
        }
    }
    p
}
