//! Path sets, path flows, link flows, and demand feasibility.

use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::Network;

pub const DEFAULT_MAX_PATHS_PER_OD: usize = 10_000;

/// Absolute tolerance for the demand constraints.
pub const EPS_FEAS: f64 = 1e-8;

/// Vehicle class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Class {
    Human,
    Autonomous,
}

impl Class {
    pub const BOTH: [Class; 2] = [Class::Human, Class::Autonomous];
}

/// A simple path, as link indices, tagged with the O/D pair it serves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub od: usize,
    pub links: Vec<usize>,
}

/// All enumerated paths, grouped contiguously by O/D pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSet {
    paths: Vec<Path>,
    by_od: Vec<Range<usize>>,
    num_links: usize,
}

impl PathSet {
    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Index range of the paths serving O/D pair `w`.
    pub fn od_range(&self, w: usize) -> Range<usize> {
        self.by_od[w].clone()
    }

    pub fn num_od_pairs(&self) -> usize {
        self.by_od.len()
    }

    pub fn num_links(&self) -> usize {
        self.num_links
    }

    /// Sum of a per-link quantity along path `p`.
    pub fn path_sum(&self, p: usize, per_link: &[f64]) -> f64 {
        self.paths[p].links.iter().map(|&l| per_link[l]).sum()
    }

    /// Renders path `p` as its link ids joined by `-`.
    pub fn describe(&self, net: &Network, p: usize) -> String {
        self.paths[p]
            .links
            .iter()
            .map(|&l| net.links()[l].id.as_str())
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Enumerates every simple path of every O/D pair by depth-first search,
/// following out-links in declaration order. The resulting order is
/// lexicographic in the link-index sequence.
pub fn enumerate_paths(net: &Network, max_paths_per_od: usize) -> Result<PathSet> {
    let n_nodes = net.nodes().len();
    let mut out_links = vec![Vec::new(); n_nodes];
    for l in 0..net.num_links() {
        out_links[net.link_ends(l).0].push(l);
    }

    let mut paths = Vec::new();
    let mut by_od = Vec::with_capacity(net.num_od_pairs());
    for w in 0..net.num_od_pairs() {
        let (origin, dest) = net.od_ends(w);
        let start = paths.len();
        let mut on_path = vec![false; n_nodes];
        let mut links = Vec::new();
        // explicit DFS stack of (node, next out-link cursor)
        let mut stack = vec![(origin, 0usize)];
        on_path[origin] = true;
        while let Some(&mut (node, ref mut cursor)) = stack.last_mut() {
            if node == dest || *cursor == out_links[node].len() {
                if node == dest {
                    if paths.len() - start == max_paths_per_od {
                        return Err(Error::PathOverflow {
                            od: net.od_pairs()[w].id.clone(),
                            cap: max_paths_per_od,
                        });
                    }
                    paths.push(Path {
                        od: w,
                        links: links.clone(),
                    });
                }
                on_path[node] = false;
                stack.pop();
                links.pop();
                continue;
            }
            let l = out_links[node][*cursor];
            *cursor += 1;
            let next = net.link_ends(l).1;
            if !on_path[next] {
                on_path[next] = true;
                links.push(l);
                stack.push((next, 0));
            }
        }
        by_od.push(start..paths.len());
    }
    Ok(PathSet {
        paths,
        by_od,
        num_links: net.num_links(),
    })
}

/// Per-path flows of both classes.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFlow {
    pub human: Vec<f64>,
    pub autonomous: Vec<f64>,
}

impl PathFlow {
    pub fn zeros(num_paths: usize) -> Self {
        PathFlow {
            human: vec![0.0; num_paths],
            autonomous: vec![0.0; num_paths],
        }
    }

    /// Each O/D pair's demand split evenly over its paths.
    pub fn uniform(net: &Network, paths: &PathSet) -> Self {
        let mut f = Self::zeros(paths.len());
        for (w, od) in net.od_pairs().iter().enumerate() {
            let r = paths.od_range(w);
            let n = r.len() as f64;
            for p in r {
                f.human[p] = od.demand_h / n;
                f.autonomous[p] = od.demand_a / n;
            }
        }
        f
    }

    pub fn len(&self) -> usize {
        self.human.len()
    }

    pub fn is_empty(&self) -> bool {
        self.human.is_empty()
    }

    pub fn class(&self, c: Class) -> &[f64] {
        match c {
            Class::Human => &self.human,
            Class::Autonomous => &self.autonomous,
        }
    }

    pub fn class_mut(&mut self, c: Class) -> &mut [f64] {
        match c {
            Class::Human => &mut self.human,
            Class::Autonomous => &mut self.autonomous,
        }
    }

    pub(crate) fn check_len(&self, paths: &PathSet) -> Result<()> {
        for got in [self.human.len(), self.autonomous.len()] {
            if got != paths.len() {
                return Err(Error::Dimension {
                    expected: paths.len(),
                    got,
                });
            }
        }
        Ok(())
    }
}

/// Per-link flows of both classes and their total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkFlow {
    pub human: Vec<f64>,
    pub autonomous: Vec<f64>,
    pub total: Vec<f64>,
}

impl LinkFlow {
    /// Euclidean distance over the stacked (human, autonomous) vectors.
    pub fn distance(&self, other: &LinkFlow) -> f64 {
        let d2: f64 = self
            .human
            .iter()
            .zip(&other.human)
            .chain(self.autonomous.iter().zip(&other.autonomous))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        d2.sqrt()
    }
}

/// Link flows induced by a path flow.
pub fn aggregate(paths: &PathSet, f: &PathFlow) -> Result<LinkFlow> {
    f.check_len(paths)?;
    Ok(aggregate_unchecked(paths, f))
}

pub(crate) fn aggregate_unchecked(paths: &PathSet, f: &PathFlow) -> LinkFlow {
    let n = paths.num_links();
    let mut human = vec![0.0; n];
    let mut autonomous = vec![0.0; n];
    for (p, path) in paths.paths().iter().enumerate() {
        for &l in &path.links {
            human[l] += f.human[p];
            autonomous[l] += f.autonomous[p];
        }
    }
    let total = human.iter().zip(&autonomous).map(|(h, a)| h + a).collect();
    LinkFlow {
        human,
        autonomous,
        total,
    }
}

/// Demand residuals of one O/D pair (path-flow sum minus demand).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdResidual {
    pub od: usize,
    pub human: f64,
    pub autonomous: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub residuals: Vec<OdResidual>,
    /// Smallest path flow of either class.
    pub min_flow: f64,
    pub max_residual: f64,
}

pub fn is_feasible(net: &Network, paths: &PathSet, f: &PathFlow, eps: f64) -> Result<FeasibilityReport> {
    f.check_len(paths)?;
    let residuals: Vec<OdResidual> = net
        .od_pairs()
        .iter()
        .enumerate()
        .map(|(w, od)| {
            let r = paths.od_range(w);
            OdResidual {
                od: w,
                human: f.human[r.clone()].iter().sum::<f64>() - od.demand_h,
                autonomous: f.autonomous[r].iter().sum::<f64>() - od.demand_a,
            }
        })
        .collect();
    let max_residual = residuals
        .iter()
        .map(|r| r.human.abs().max(r.autonomous.abs()))
        .fold(0.0, f64::max);
    let min_flow = f
        .human
        .iter()
        .chain(&f.autonomous)
        .copied()
        .fold(f64::INFINITY, f64::min);
    let feasible = max_residual <= eps && (f.is_empty() || min_flow >= -eps) && !max_residual.is_nan();
    Ok(FeasibilityReport {
        feasible,
        residuals,
        min_flow,
        max_residual,
    })
}

/// Errors unless `f` is feasible at [`EPS_FEAS`].
pub fn require_feasible(net: &Network, paths: &PathSet, f: &PathFlow) -> Result<()> {
    let rep = is_feasible(net, paths, f, EPS_FEAS)?;
    if rep.feasible {
        Ok(())
    } else {
        Err(Error::Infeasible(rep.max_residual.max(-rep.min_flow)))
    }
}
