//! Extremes of social delay over a face of the equilibrium set.
//!
//! Fix the link loads `f_l^h / m_l + f_l^a / M_l` of a computed equilibrium.
//! Every feasible flow with the same loads sees the same link delays, so it
//! is again an equilibrium as long as each class only uses paths that were
//! cheapest for it. On that polytope social delay is linear,
//! `sum_p (f_p^h + f_p^a) e_p`, and its extremes are two linear programs.
//! When all links share one asymmetry degree the loads are the same at every
//! equilibrium, so the face is the whole equilibrium set.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::delay::PriceVector;
use crate::equilibrium::{equilibrate, EqOptions, EquilibriumResult};
use crate::error::{Error, Result};
use crate::flow::{Class, PathFlow, PathSet};
use crate::network::Network;

#[derive(Debug, Clone)]
pub struct FaceExtremes {
    pub low: EquilibriumResult,
    pub high: EquilibriumResult,
}

/// Minimizes and maximizes social delay over the face through `eq`. Both
/// ends are re-polished with the equilibrium solver; an end that fails to
/// re-converge is replaced by `eq` itself.
pub fn social_delay_extremes(
    net: &Network,
    paths: &PathSet,
    tau: &PriceVector,
    eq: &EquilibriumResult,
    opts: &EqOptions,
) -> Result<FaceExtremes> {
    let lp = FaceLp::build(net, paths, tau, eq, opts.tol);
    let mut ends = Vec::with_capacity(2);
    for dir in [OptimizationDirection::Minimize, OptimizationDirection::Maximize] {
        let end = lp
            .solve(net, paths, dir)
            .ok()
            .map(|start| equilibrate(net, paths, tau, start, opts, eq.restart))
            .filter(|r| r.converged)
            .unwrap_or_else(|| eq.clone());
        ends.push(end);
    }
    let high = ends.pop().expect("two ends");
    let low = ends.pop().expect("two ends");
    Ok(FaceExtremes { low, high })
}

struct FaceLp {
    /// (path, class) per LP column.
    columns: Vec<(usize, Class)>,
    path_delay: Vec<f64>,
    loads: Vec<f64>,
    load_slack: f64,
}

impl FaceLp {
    fn build(net: &Network, paths: &PathSet, tau: &PriceVector, eq: &EquilibriumResult, tol: f64) -> Self {
        let lf = &eq.link_flow;
        let loads: Vec<f64> = net
            .links()
            .iter()
            .enumerate()
            .map(|(l, link)| lf.human[l] / link.m + lf.autonomous[l] / link.big_m)
            .collect();
        let link_delay: Vec<f64> = net
            .links()
            .iter()
            .zip(&loads)
            .map(|(link, &x)| link.a + link.gamma * crate::delay::powi(x, link.beta))
            .collect();
        let path_delay: Vec<f64> = (0..paths.len()).map(|p| paths.path_sum(p, &link_delay)).collect();

        let mut columns = Vec::new();
        let mut dropped = 0.0;
        let m_min = net.links().iter().fold(f64::INFINITY, |m, l| m.min(l.m));
        for (w, cost) in eq.od_costs.iter().enumerate() {
            for (class, cheapest) in [(Class::Human, cost.human), (Class::Autonomous, cost.autonomous)] {
                for p in paths.od_range(w) {
                    let cost = path_delay[p] + paths.path_sum(p, tau.class(class));
                    if cost <= cheapest * (1.0 + 10.0 * tol) + 1e-12 {
                        columns.push((p, class));
                    } else {
                        dropped += eq.flow.class(class)[p];
                    }
                }
            }
        }
        let max_load = loads.iter().fold(0.0f64, |m, &x| m.max(x));
        FaceLp {
            columns,
            path_delay,
            loads,
            load_slack: dropped / m_min + 1e-9 * (1.0 + max_load),
        }
    }

    fn solve(&self, net: &Network, paths: &PathSet, dir: OptimizationDirection) -> Result<PathFlow> {
        let mut lp = Problem::new(dir);
        let vars: Vec<_> = self
            .columns
            .iter()
            .map(|&(p, _)| lp.add_var(self.path_delay[p], (0.0, f64::INFINITY)))
            .collect();
        for (w, od) in net.od_pairs().iter().enumerate() {
            for (class, demand) in [(Class::Human, od.demand_h), (Class::Autonomous, od.demand_a)] {
                let terms: Vec<_> = self
                    .columns
                    .iter()
                    .zip(&vars)
                    .filter(|((p, c), _)| *c == class && paths.paths()[*p].od == w)
                    .map(|(_, &v)| (v, 1.0))
                    .collect();
                if terms.is_empty() {
                    return Err(Error::Lp(format!("no admissible path for O/D {w}")));
                }
                lp.add_constraint(terms.as_slice(), ComparisonOp::Eq, demand);
            }
        }
        for (l, link) in net.links().iter().enumerate() {
            let terms: Vec<_> = self
                .columns
                .iter()
                .zip(&vars)
                .filter(|((p, _), _)| paths.paths()[*p].links.contains(&l))
                .map(|(&(_, c), &v)| {
                    let cap = match c {
                        Class::Human => link.m,
                        Class::Autonomous => link.big_m,
                    };
                    (v, 1.0 / cap)
                })
                .collect();
            if terms.is_empty() {
                continue;
            }
            lp.add_constraint(terms.as_slice(), ComparisonOp::Le, self.loads[l] + self.load_slack);
            lp.add_constraint(terms.as_slice(), ComparisonOp::Ge, self.loads[l] - self.load_slack);
        }
        let solution = lp
            .solve()
            .map_err(|e| Error::Lp(e.to_string()))?
            .into_solution()
            .map_err(|_| Error::Lp("interrupted".into()))?;

        let mut f = PathFlow::zeros(paths.len());
        for (&(p, c), &v) in self.columns.iter().zip(&vars) {
            f.class_mut(c)[p] = solution.var_value(v).max(0.0);
        }
        // restore exact demand totals lost to solver round-off
        for (w, od) in net.od_pairs().iter().enumerate() {
            for (class, demand) in [(Class::Human, od.demand_h), (Class::Autonomous, od.demand_a)] {
                let r = paths.od_range(w);
                let x = f.class_mut(class);
                let sum: f64 = x[r.clone()].iter().sum();
                if sum > 0.0 {
                    r.for_each(|p| x[p] *= demand / sum);
                }
            }
        }
        Ok(f)
    }
}
