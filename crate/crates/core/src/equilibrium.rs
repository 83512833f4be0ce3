//! Wardrop equilibria of the priced two-class routing game.
//!
//! On networks where every link has the same capacity asymmetry `mu`, the
//! equilibria are exactly the minimizers of the convex potential
//!
//! ```text
//! Phi(f) = sum_l Psi_l(f_l^h + mu f_l^a) + sum_l (tau_l^h f_l^h + mu tau_l^a f_l^a)
//! ```
//!
//! with `Psi_l` the antiderivative of the single-capacity delay
//! `a + gamma (x / m)^beta`. The solver takes projected steps
//! `f^h <- P(f^h - s c^h)`, `f^a <- P(f^a - (s / mu) c^a)` (a projected
//! gradient step on `Phi` in the rescaled autonomous coordinates) with
//! Armijo backtracking on `Phi`. Without a common `mu` there is no potential;
//! steps are then accepted when they lower the Wardrop gap, and a successive
//! averages step towards the cheapest paths is taken when none does.

use rayon::prelude::*;
use serde::Serialize;

use crate::delay::{evaluate_unchecked, od_costs_from, powi, CostBreakdown, OdCost, PriceVector};
use crate::error::{Error, Result};
use crate::flow::{aggregate_unchecked, require_feasible, Class, LinkFlow, PathFlow, PathSet};
use crate::network::Network;
use crate::optimum::initial_split;
use crate::simplex::project_onto_simplex;

/// Link-flow distance below which two equilibria are reported as one.
pub const DEDUP_DISTANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EqOptions {
    /// Bound on the normalized Wardrop gap.
    pub tol: f64,
    pub max_iters: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for EqOptions {
    fn default() -> Self {
        EqOptions {
            tol: 1e-6,
            max_iters: 20_000,
            restarts: 16,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    #[serde(skip)]
    pub flow: PathFlow,
    pub link_flow: LinkFlow,
    pub gap: f64,
    pub normalized_gap: f64,
    pub od_costs: Vec<OdCost>,
    pub social_delay: f64,
    pub total_cost: f64,
    /// Largest relative excess of a used path's cost over its O/D pair's
    /// cheapest cost, per class; paths with flow at most `10 tol` are ignored.
    pub used_path_spread: f64,
    pub converged: bool,
    /// Restart index this result came from.
    pub restart: usize,
    pub iterations: usize,
    /// Earlier restart whose link flows are within [`DEDUP_DISTANCE`].
    pub duplicate_of: Option<usize>,
    /// [`PriceVector::fingerprint`] of the tolls this was solved under.
    pub prices: String,
}

impl EquilibriumResult {
    /// Evaluates `flow` under `tau` and packages it.
    pub fn from_flow(
        net: &Network,
        paths: &PathSet,
        tau: &PriceVector,
        flow: PathFlow,
        tol: f64,
        restart: usize,
        iterations: usize,
    ) -> Self {
        let cb = evaluate_unchecked(net, paths, &flow, tau);
        let od_costs = od_costs_from(paths, &cb);
        let gap = gap_from(paths, &flow, &cb, &od_costs);
        let normalized_gap = normalize(net, gap, &od_costs);
        let used_path_spread = used_spread(paths, &flow, &cb, &od_costs, 10.0 * tol);
        EquilibriumResult {
            link_flow: cb.link_flow,
            gap,
            normalized_gap,
            od_costs,
            social_delay: cb.social_delay,
            total_cost: cb.total_cost,
            used_path_spread,
            converged: is_converged(normalized_gap, used_path_spread, tol),
            restart,
            iterations,
            duplicate_of: None,
            prices: tau.fingerprint(),
            flow,
        }
    }
}

fn gap_from(paths: &PathSet, f: &PathFlow, cb: &CostBreakdown, od: &[OdCost]) -> f64 {
    let mut gap = 0.0;
    for (w, c) in od.iter().enumerate() {
        for p in paths.od_range(w) {
            gap += f.human[p] * (cb.path_cost_h[p] - c.human);
            gap += f.autonomous[p] * (cb.path_cost_a[p] - c.autonomous);
        }
    }
    gap
}

fn used_spread(paths: &PathSet, f: &PathFlow, cb: &CostBreakdown, od: &[OdCost], used: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (w, c) in od.iter().enumerate() {
        for p in paths.od_range(w) {
            if f.human[p] > used {
                worst = worst.max((cb.path_cost_h[p] - c.human) / c.human.abs().max(1e-12));
            }
            if f.autonomous[p] > used {
                worst = worst.max((cb.path_cost_a[p] - c.autonomous) / c.autonomous.abs().max(1e-12));
            }
        }
    }
    worst
}

fn is_converged(normalized_gap: f64, used_path_spread: f64, tol: f64) -> bool {
    normalized_gap <= tol && used_path_spread <= 10.0 * tol
}

/// `sum_w (r_w^h c_w^h + r_w^a c_w^a)`, the total cost an equilibrium would have.
fn cost_scale(net: &Network, od: &[OdCost]) -> f64 {
    net.od_pairs()
        .iter()
        .zip(od)
        .map(|(w, c)| w.demand_h * c.human + w.demand_a * c.autonomous)
        .sum()
}

fn normalize(net: &Network, gap: f64, od: &[OdCost]) -> f64 {
    let scale = cost_scale(net, od);
    if scale > 0.0 {
        gap / scale
    } else {
        0.0
    }
}

/// Total excess cost over each O/D pair's cheapest path, summed over both
/// classes. Zero exactly at a Wardrop equilibrium.
pub fn wardrop_gap(net: &Network, paths: &PathSet, f: &PathFlow, tau: &PriceVector) -> Result<f64> {
    require_feasible(net, paths, f)?;
    tau.validate(net.num_links())?;
    let cb = evaluate_unchecked(net, paths, f, tau);
    let od = od_costs_from(paths, &cb);
    Ok(gap_from(paths, f, &cb, &od))
}

/// [`wardrop_gap`] divided by `sum_w (r_w^h c_w^h + r_w^a c_w^a)`.
pub fn normalized_gap(net: &Network, paths: &PathSet, f: &PathFlow, tau: &PriceVector) -> Result<f64> {
    require_feasible(net, paths, f)?;
    tau.validate(net.num_links())?;
    let cb = evaluate_unchecked(net, paths, f, tau);
    let od = od_costs_from(paths, &cb);
    Ok(normalize(net, gap_from(paths, f, &cb, &od), &od))
}

/// Potential of the homogeneous game (see module docs).
struct Potential {
    mu: f64,
}

impl Potential {
    fn value(&self, net: &Network, lf: &LinkFlow, tau: &PriceVector) -> f64 {
        net.links()
            .iter()
            .enumerate()
            .map(|(l, link)| {
                let x = lf.human[l] + self.mu * lf.autonomous[l];
                let b = link.beta;
                let integral = link.a * x + link.gamma * link.m * powi(x / link.m, b + 1) / (b + 1) as f64;
                integral + tau.human[l] * lf.human[l] + self.mu * tau.autonomous[l] * lf.autonomous[l]
            })
            .sum()
    }
}

struct Solver<'a> {
    net: &'a Network,
    paths: &'a PathSet,
    tau: &'a PriceVector,
    /// Step multiplier applied to autonomous costs.
    auto_scale: f64,
    potential: Option<Potential>,
}

struct State {
    f: PathFlow,
    cb: CostBreakdown,
    od: Vec<OdCost>,
    gap: f64,
}

impl<'a> Solver<'a> {
    fn new(net: &'a Network, paths: &'a PathSet, tau: &'a PriceVector) -> Self {
        let (potential, mu) = match net.homogeneous_asymmetry() {
            Some(mu) => (Some(Potential { mu }), mu),
            None => {
                let n = net.num_links().max(1) as f64;
                (None, net.links().iter().map(|l| l.asymmetry()).sum::<f64>() / n)
            }
        };
        Solver {
            net,
            paths,
            tau,
            auto_scale: 1.0 / mu,
            potential,
        }
    }

    fn state(&self, f: PathFlow) -> State {
        let cb = evaluate_unchecked(self.net, self.paths, &f, self.tau);
        let od = od_costs_from(self.paths, &cb);
        let gap = gap_from(self.paths, &f, &cb, &od);
        State { f, cb, od, gap }
    }

    fn step(&self, s: &State, step: f64) -> PathFlow {
        let mut out = PathFlow::zeros(self.paths.len());
        for (w, od) in self.net.od_pairs().iter().enumerate() {
            for (class, demand, scale) in [
                (Class::Human, od.demand_h, 1.0),
                (Class::Autonomous, od.demand_a, self.auto_scale),
            ] {
                let r = self.paths.od_range(w);
                let (x, c) = (s.f.class(class), s.cb.path_cost(class));
                let block = &mut out.class_mut(class)[r.clone()];
                for (o, p) in block.iter_mut().zip(r) {
                    *o = x[p] - step * scale * c[p];
                }
                project_onto_simplex(block, demand);
            }
        }
        out
    }

    fn converged(&self, s: &State, tol: f64) -> bool {
        is_converged(
            normalize(self.net, s.gap, &s.od),
            used_spread(self.paths, &s.f, &s.cb, &s.od, 10.0 * tol),
            tol,
        )
    }

    /// Successive-averages move towards all-or-nothing on the cheapest paths.
    fn averaging_step(&self, s: &State, k: usize) -> PathFlow {
        let alpha = 1.0 / (k + 2) as f64;
        let mut out = s.f.clone();
        for (w, od) in self.net.od_pairs().iter().enumerate() {
            for (class, demand) in [(Class::Human, od.demand_h), (Class::Autonomous, od.demand_a)] {
                let costs = s.cb.path_cost(class);
                let r = self.paths.od_range(w);
                let best = r
                    .clone()
                    .min_by(|&p, &q| costs[p].total_cmp(&costs[q]))
                    .expect("every O/D pair has a path");
                let x = out.class_mut(class);
                for p in r {
                    let target = if p == best { demand } else { 0.0 };
                    x[p] += alpha * (target - x[p]);
                }
            }
        }
        out
    }

    /// Directional derivative of the potential from `s.f` towards `to`.
    fn potential_slope(&self, s: &State, to: &PathFlow, mu: f64) -> f64 {
        (0..self.paths.len())
            .map(|p| {
                s.cb.path_cost_h[p] * (to.human[p] - s.f.human[p])
                    + mu * s.cb.path_cost_a[p] * (to.autonomous[p] - s.f.autonomous[p])
            })
            .sum()
    }

    fn run(&self, start: PathFlow, tol: f64, max_iters: usize) -> (PathFlow, usize) {
        const ARMIJO: f64 = 1e-4;
        let mut s = self.state(start);
        let max_cost =
            s.cb.path_cost_h
                .iter()
                .chain(&s.cb.path_cost_a)
                .fold(1e-12, |m: f64, &c| m.max(c));
        let max_demand = self
            .net
            .od_pairs()
            .iter()
            .fold(1e-12, |m: f64, w| m.max(w.demand_h).max(w.demand_a));
        let mut step = max_demand / max_cost;
        let mut k = 0;
        while k < max_iters && !self.converged(&s, tol) {
            k += 1;
            let mut next = None;
            for _ in 0..50 {
                let cand = self.step(&s, step);
                let ok = match &self.potential {
                    Some(pot) => {
                        let phi = pot.value(self.net, &s.cb.link_flow, self.tau);
                        let lf = aggregate_unchecked(self.paths, &cand);
                        pot.value(self.net, &lf, self.tau) <= phi + ARMIJO * self.potential_slope(&s, &cand, pot.mu)
                    }
                    None => {
                        let cs = self.state(cand.clone());
                        cs.gap < s.gap
                    }
                };
                if ok {
                    next = Some(cand);
                    break;
                }
                step *= 0.5;
            }
            let f = match next {
                Some(f) => {
                    step *= 2.0;
                    f
                }
                None => {
                    step = max_demand / max_cost;
                    self.averaging_step(&s, k)
                }
            };
            if f == s.f {
                break;
            }
            s = self.state(f);
        }
        (s.f, k)
    }
}

/// Runs one restart from `start` and returns its evaluated outcome.
pub fn equilibrate(
    net: &Network,
    paths: &PathSet,
    tau: &PriceVector,
    start: PathFlow,
    opts: &EqOptions,
    restart: usize,
) -> EquilibriumResult {
    let (flow, iterations) = Solver::new(net, paths, tau).run(start, opts.tol, opts.max_iters);
    EquilibriumResult::from_flow(net, paths, tau, flow, opts.tol, restart, iterations)
}

/// Runs `opts.restarts` independent restarts (uniform split first, then
/// seeded random splits) and returns one result per restart in restart
/// order. Converged results that repeat an earlier restart's link flows are
/// marked via `duplicate_of`; non-converged restarts are kept and flagged.
pub fn solve_equilibrium(
    net: &Network,
    paths: &PathSet,
    tau: &PriceVector,
    opts: &EqOptions,
) -> Result<Vec<EquilibriumResult>> {
    tau.validate(net.num_links())?;
    if paths.num_links() != net.num_links() {
        return Err(Error::Dimension {
            expected: net.num_links(),
            got: paths.num_links(),
        });
    }
    let mut results: Vec<EquilibriumResult> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|k| equilibrate(net, paths, tau, initial_split(net, paths, opts.seed, k), opts, k))
        .collect();
    mark_duplicates(&mut results);
    Ok(results)
}

pub(crate) fn mark_duplicates(results: &mut [EquilibriumResult]) {
    for i in 0..results.len() {
        if !results[i].converged {
            continue;
        }
        results[i].duplicate_of = (0..i).find(|&j| {
            results[j].converged
                && results[j].duplicate_of.is_none()
                && results[j].link_flow.distance(&results[i].link_flow) < DEDUP_DISTANCE
        });
    }
}

/// Spread (max - min) of social delay across converged results.
pub fn social_delay_spread(results: &[EquilibriumResult]) -> Option<(f64, f64)> {
    let mut it = results.iter().filter(|r| r.converged).map(|r| r.social_delay);
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), j| (lo.min(j), hi.max(j))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::flow::enumerate_paths;
    use crate::testutil::{example1, parallel2, random_feasible, random_prices, single_link};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_path_gap_is_zero() {
        let net = single_link();
        let ps = enumerate_paths(&net, 10).unwrap();
        let f = PathFlow::uniform(&net, &ps);
        let tau = PriceVector::new(vec![3.0], vec![0.5]).unwrap();
        assert_eq!(wardrop_gap(&net, &ps, &f, &tau).unwrap(), 0.0);
    }

    #[test]
    fn costlier_path_gap_equals_demand_times_difference() {
        let net = Network::from_document(fixtures::PIGOU2).unwrap();
        let ps = enumerate_paths(&net, 10).unwrap();
        let mut f = PathFlow::zeros(2);
        f.human[0] = 1.0; // constant link, delay ~2, versus ~0 on the empty link
        let tau = PriceVector::zeros(2);
        let cb = crate::delay::evaluate(&net, &ps, &f, &tau).unwrap();
        let gap = wardrop_gap(&net, &ps, &f, &tau).unwrap();
        assert!(gap > 0.0);
        assert!((gap - 1.0 * (cb.path_cost_h[0] - cb.path_cost_h[1])).abs() < 1e-12);
    }

    #[test]
    fn gap_rejects_infeasible() {
        let net = example1();
        let ps = enumerate_paths(&net, 10).unwrap();
        let f = PathFlow::zeros(ps.len());
        assert!(wardrop_gap(&net, &ps, &f, &PriceVector::zeros(4)).is_err());
    }

    #[test]
    fn gap_is_nonnegative() {
        let net = example1();
        let ps = enumerate_paths(&net, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let f = random_feasible(&net, &ps, &mut rng);
            let tau = random_prices(4, &mut rng);
            assert!(wardrop_gap(&net, &ps, &f, &tau).unwrap() >= 0.0);
        }
    }

    #[test]
    fn pigou_dominance() {
        let net = Network::from_document(fixtures::PIGOU2).unwrap();
        let ps = enumerate_paths(&net, 10).unwrap();
        let res = solve_equilibrium(&net, &ps, &PriceVector::zeros(2), &EqOptions::default()).unwrap();
        for r in &res {
            assert!(r.converged);
            assert!((r.flow.human[1] - 1.0).abs() < 1e-6, "{:?}", r.flow);
            assert!((r.social_delay - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn identical_links_split_total_evenly() {
        let net = parallel2();
        let ps = enumerate_paths(&net, 10).unwrap();
        let res = solve_equilibrium(&net, &ps, &PriceVector::zeros(2), &EqOptions::default()).unwrap();
        for r in &res {
            assert!(r.converged);
            let lf = &r.link_flow;
            // equal delay means equal load h/m + a/M on both links
            let load = |l: usize| lf.human[l] + 0.5 * lf.autonomous[l];
            assert!((load(0) - load(1)).abs() < 1e-5, "{lf:?}");
        }
    }

    #[test]
    fn results_certify_themselves() {
        let net = example1();
        let ps = enumerate_paths(&net, 10).unwrap();
        let tau = PriceVector::undifferentiated(&[0.0, 6.0, 0.0, 0.0]).unwrap();
        let opts = EqOptions {
            restarts: 6,
            ..Default::default()
        };
        let res = solve_equilibrium(&net, &ps, &tau, &opts).unwrap();
        for r in &res {
            assert!(r.converged, "{r:?}");
            let again = wardrop_gap(&net, &ps, &r.flow, &tau).unwrap();
            assert!((again - r.gap).abs() <= 1e-9 * r.gap.max(1e-300));
            // used paths of each class share the O/D's cheapest cost
            let cb = crate::delay::evaluate(&net, &ps, &r.flow, &tau).unwrap();
            for (w, c) in r.od_costs.iter().enumerate() {
                for p in ps.od_range(w) {
                    if r.flow.human[p] > 1e-5 {
                        assert!(cb.path_cost_h[p] - c.human <= 1e-5 * c.human);
                    }
                    if r.flow.autonomous[p] > 1e-5 {
                        assert!(cb.path_cost_a[p] - c.autonomous <= 1e-5 * c.autonomous);
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let net = example1();
        let ps = enumerate_paths(&net, 10).unwrap();
        let opts = EqOptions {
            restarts: 4,
            seed: 17,
            ..Default::default()
        };
        let a = solve_equilibrium(&net, &ps, &PriceVector::zeros(4), &opts).unwrap();
        let b = solve_equilibrium(&net, &ps, &PriceVector::zeros(4), &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn heterogeneous_network_converges() {
        let net = example1()
            .map_links(|l| {
                if l.id == "1" {
                    l.big_m *= 1.5;
                }
            })
            .unwrap();
        let ps = enumerate_paths(&net, 10).unwrap();
        let opts = EqOptions {
            restarts: 6,
            ..Default::default()
        };
        let res = solve_equilibrium(&net, &ps, &PriceVector::zeros(4), &opts).unwrap();
        assert!(res.iter().all(|r| r.converged), "{res:?}");
    }

    #[test]
    fn duplicates_are_marked_not_dropped() {
        let net = Network::from_document(fixtures::PIGOU2).unwrap();
        let ps = enumerate_paths(&net, 10).unwrap();
        let opts = EqOptions {
            restarts: 3,
            ..Default::default()
        };
        let res = solve_equilibrium(&net, &ps, &PriceVector::zeros(2), &opts).unwrap();
        assert_eq!(res.len(), 3);
        assert_eq!(res[0].duplicate_of, None);
        assert_eq!(res[1].duplicate_of, Some(0));
        assert_eq!(res[2].duplicate_of, Some(0));
    }
}
