//! Socially optimal flows: minimize total delay over feasible path flows.
//!
//! Social delay is not convex in the two class flows once `m < M`, so the
//! solver runs projected gradient descent with Armijo backtracking from
//! several starting splits and keeps the best stationary point.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::delay::{evaluate_unchecked, grad_raw, link_delays, PriceVector};
use crate::error::Result;
use crate::flow::{aggregate_unchecked, require_feasible, Class, PathFlow, PathSet};
use crate::network::Network;
use crate::simplex::project_onto_simplex;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoOptions {
    /// Stationarity tolerance on the scaled projected-gradient step.
    pub tol: f64,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SoOptions {
    fn default() -> Self {
        SoOptions {
            tol: 1e-7,
            max_iters: 50_000,
            restarts: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoSolution {
    #[serde(skip)]
    pub flow: PathFlow,
    pub objective: f64,
    pub kkt_residual: f64,
    pub restarts_used: usize,
    /// Index of the restart that produced `flow`.
    pub best_restart: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// One restart's outcome.
#[derive(Debug, Clone)]
pub struct Descent {
    pub flow: PathFlow,
    pub initial_objective: f64,
    pub objective: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Starting split for restart `k`: uniform for `k = 0`, otherwise a
/// Dirichlet(1, ..., 1) split per O/D pair and class drawn from a generator
/// seeded by `(seed, k)`.
pub fn initial_split(net: &Network, paths: &PathSet, seed: u64, k: usize) -> PathFlow {
    if k == 0 {
        return PathFlow::uniform(net, paths);
    }
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    let mut f = PathFlow::zeros(paths.len());
    for (w, od) in net.od_pairs().iter().enumerate() {
        for (class, demand) in [(Class::Human, od.demand_h), (Class::Autonomous, od.demand_a)] {
            let r = paths.od_range(w);
            // normalized unit exponentials are Dirichlet(1)
            let draws: Vec<f64> = r.clone().map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let sum: f64 = draws.iter().sum();
            let x = f.class_mut(class);
            for (p, d) in r.zip(draws) {
                x[p] = demand * d / sum;
            }
        }
    }
    f
}

/// Gradient of social delay with respect to each path flow, per class.
pub(crate) fn social_gradient(net: &Network, paths: &PathSet, f: &PathFlow) -> (f64, PathFlow) {
    let lf = aggregate_unchecked(paths, f);
    let e = link_delays(net, &lf);
    let j = lf.total.iter().zip(&e).map(|(x, e)| x * e).sum();
    let mut mh = vec![0.0; net.num_links()];
    let mut ma = vec![0.0; net.num_links()];
    for (l, link) in net.links().iter().enumerate() {
        let (gh, ga) = grad_raw(link, lf.human[l], lf.autonomous[l]);
        mh[l] = e[l] + lf.total[l] * gh;
        ma[l] = e[l] + lf.total[l] * ga;
    }
    let g = PathFlow {
        human: (0..paths.len()).map(|p| paths.path_sum(p, &mh)).collect(),
        autonomous: (0..paths.len()).map(|p| paths.path_sum(p, &ma)).collect(),
    };
    (j, g)
}

fn objective(net: &Network, paths: &PathSet, f: &PathFlow) -> f64 {
    let lf = aggregate_unchecked(paths, f);
    link_delays(net, &lf).iter().zip(&lf.total).map(|(e, x)| e * x).sum()
}

/// `P(f - step * g)`, projecting each O/D pair and class block.
pub(crate) fn projected_step(net: &Network, paths: &PathSet, f: &PathFlow, g: &PathFlow, step: f64) -> PathFlow {
    let mut out = PathFlow::zeros(paths.len());
    for (w, od) in net.od_pairs().iter().enumerate() {
        for (class, demand) in [(Class::Human, od.demand_h), (Class::Autonomous, od.demand_a)] {
            let r = paths.od_range(w);
            let (x, d) = (f.class(class), g.class(class));
            let block = &mut out.class_mut(class)[r.clone()];
            for (o, p) in block.iter_mut().zip(r) {
                *o = x[p] - step * d[p];
            }
            project_onto_simplex(block, demand);
        }
    }
    out
}

fn max_abs_diff(a: &PathFlow, b: &PathFlow) -> f64 {
    a.human
        .iter()
        .zip(&b.human)
        .chain(a.autonomous.iter().zip(&b.autonomous))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn dot_diff(g: &PathFlow, to: &PathFlow, from: &PathFlow) -> f64 {
    let h: f64 = (0..g.len()).map(|p| g.human[p] * (to.human[p] - from.human[p])).sum();
    let a: f64 = (0..g.len())
        .map(|p| g.autonomous[p] * (to.autonomous[p] - from.autonomous[p]))
        .sum();
    h + a
}

/// Stationarity measure: `|P(f - g / |g|_inf) - f|_inf`.
fn stationarity(net: &Network, paths: &PathSet, f: &PathFlow, g: &PathFlow) -> f64 {
    let scale = g.human.iter().chain(&g.autonomous).fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    max_abs_diff(&projected_step(net, paths, f, g, 1.0 / scale), f)
}

/// Projected gradient descent with Armijo backtracking from `start`.
pub fn descend(net: &Network, paths: &PathSet, start: PathFlow, tol: f64, max_iters: usize) -> Descent {
    const ARMIJO: f64 = 1e-4;
    let mut f = start;
    let (mut j, mut g) = social_gradient(net, paths, &f);
    let initial_objective = j;
    let gscale = g.human.iter().chain(&g.autonomous).fold(1.0f64, |m, x| m.max(x.abs()));
    let mut step = 1.0 / gscale;
    let mut residual = stationarity(net, paths, &f, &g);
    let mut iterations = 0;
    while residual > tol && iterations < max_iters {
        iterations += 1;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = projected_step(net, paths, &f, &g, step);
            let jc = objective(net, paths, &cand);
            if jc <= j + ARMIJO * dot_diff(&g, &cand, &f) {
                accepted = Some((cand, jc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, jc)) = accepted else { break };
        let moved = max_abs_diff(&cand, &f);
        f = cand;
        j = jc;
        (_, g) = social_gradient(net, paths, &f);
        residual = stationarity(net, paths, &f, &g);
        if moved == 0.0 {
            break;
        }
        step *= 2.0;
    }
    Descent {
        flow: f,
        initial_objective,
        objective: j,
        residual,
        iterations,
        converged: residual <= tol,
    }
}

/// Runs every restart (in parallel) and keeps the lowest objective, ties
/// going to the lowest restart index.
pub fn solve_social_optimum(net: &Network, paths: &PathSet, opts: &SoOptions) -> Result<SoSolution> {
    let restarts = opts.restarts.max(1);
    let runs: Vec<Descent> = (0..restarts)
        .into_par_iter()
        .map(|k| {
            descend(
                net,
                paths,
                initial_split(net, paths, opts.seed, k),
                opts.tol,
                opts.max_iters,
            )
        })
        .collect();
    let (best_restart, best) = runs
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.objective.total_cmp(&b.objective).then(i.cmp(j)))
        .expect("at least one restart");
    require_feasible(net, paths, &best.flow)?;
    Ok(SoSolution {
        flow: best.flow.clone(),
        objective: best.objective,
        kkt_residual: best.residual,
        restarts_used: restarts,
        best_restart,
        iterations: best.iterations,
        converged: best.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    /// Largest excess of a used path's cost over the cheapest path of its
    /// O/D pair and class.
    pub max_violation: f64,
    /// `(od, class)` where the largest violation occurs.
    pub worst: Option<(usize, Class)>,
    pub passed: bool,
}

/// Checks the optimality conditions of a social optimum under `tau`: within
/// each O/D pair and class, every used path costs the same and no path is
/// cheaper. With marginal prices these are exactly the KKT conditions of the
/// social-delay problem.
pub fn verify_so_kkt(
    net: &Network,
    paths: &PathSet,
    flow: &PathFlow,
    tau: &PriceVector,
    tol: f64,
) -> Result<KktReport> {
    require_feasible(net, paths, flow)?;
    tau.validate(net.num_links())?;
    let cb = evaluate_unchecked(net, paths, flow, tau);
    let mut max_violation: f64 = 0.0;
    let mut worst = None;
    for w in 0..net.num_od_pairs() {
        for class in Class::BOTH {
            let costs = cb.path_cost(class);
            let x = flow.class(class);
            let r = paths.od_range(w);
            let cheapest = r.clone().map(|p| costs[p]).fold(f64::INFINITY, f64::min);
            for p in r {
                if x[p] > tol && costs[p] - cheapest > max_violation {
                    max_violation = costs[p] - cheapest;
                    worst = Some((w, class));
                }
            }
        }
    }
    Ok(KktReport {
        max_violation,
        worst,
        passed: max_violation <= tol,
    })
}
