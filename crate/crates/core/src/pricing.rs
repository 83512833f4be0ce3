//! Marginal-cost tolls and the optimum -> tolls -> equilibria pipeline.

use serde::Serialize;

use crate::delay::{grad_raw, PriceVector};
use crate::equilibrium::{social_delay_spread, solve_equilibrium, EqOptions, EquilibriumResult};
use crate::error::Result;
use crate::flow::{aggregate_unchecked, enumerate_paths, require_feasible, PathFlow, PathSet};
use crate::network::Network;
use crate::optimum::{solve_social_optimum, SoOptions, SoSolution};

/// Relative-deviation floor in [`check_price_structure`].
pub const STRUCTURE_FLOOR: f64 = 1e-12;

/// Per-class marginal-cost tolls at `fstar`:
/// `tau_l^h = f_l * de_l/df_l^h`, `tau_l^a = f_l * de_l/df_l^a`.
pub fn marginal_prices(net: &Network, paths: &PathSet, fstar: &PathFlow) -> Result<PriceVector> {
    require_feasible(net, paths, fstar)?;
    let lf = aggregate_unchecked(paths, fstar);
    let (human, autonomous) = net
        .links()
        .iter()
        .enumerate()
        .map(|(l, link)| {
            // clamp tiny negative link flows left by the feasibility tolerance
            let (fh, fa) = (lf.human[l].max(0.0), lf.autonomous[l].max(0.0));
            let (gh, ga) = grad_raw(link, fh, fa);
            ((fh + fa) * gh, (fh + fa) * ga)
        })
        .unzip();
    PriceVector::new(human, autonomous)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum StructureReport {
    /// Link asymmetries differ, so no single `mu` relates the classes.
    Inapplicable { mu_min: f64, mu_max: f64 },
    Checked {
        mu: f64,
        /// `max_l |tau_l^a - mu tau_l^h| / max(tau_l^h, floor)`.
        max_deviation: f64,
        worst_link: Option<usize>,
        passed: bool,
    },
}

impl StructureReport {
    pub fn passed(&self) -> Option<bool> {
        match self {
            StructureReport::Inapplicable { .. } => None,
            StructureReport::Checked { passed, .. } => Some(*passed),
        }
    }
}

/// Checks `tau^a = mu tau^h` link by link on a homogeneous network.
pub fn check_price_structure(net: &Network, tau: &PriceVector, tol: f64) -> Result<StructureReport> {
    tau.validate(net.num_links())?;
    let Some(mu) = net.homogeneous_asymmetry() else {
        let (mu_min, mu_max) = net.asymmetry_range();
        return Ok(StructureReport::Inapplicable { mu_min, mu_max });
    };
    let mut max_deviation: f64 = 0.0;
    let mut worst_link = None;
    for l in 0..net.num_links() {
        let dev = (tau.autonomous[l] - mu * tau.human[l]).abs() / tau.human[l].max(STRUCTURE_FLOOR);
        if dev > max_deviation {
            max_deviation = dev;
            worst_link = Some(l);
        }
    }
    Ok(StructureReport::Checked {
        mu,
        max_deviation,
        worst_link,
        passed: max_deviation <= tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineOptions {
    pub so: SoOptions,
    pub eq: EqOptions,
    pub max_paths_per_od: usize,
    /// Relative band around `J(f*)` within which an equilibrium counts as optimal.
    pub optimal_band: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            so: SoOptions::default(),
            eq: EqOptions::default(),
            max_paths_per_od: crate::flow::DEFAULT_MAX_PATHS_PER_OD,
            optimal_band: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub optimal_social_delay: f64,
    pub converged: usize,
    pub restarts: usize,
    pub distinct: usize,
    pub min_social_delay: Option<f64>,
    pub max_social_delay: Option<f64>,
    /// `(max - min) / J(f*)` over converged equilibria.
    pub relative_spread: Option<f64>,
    /// Converged equilibria within the band of `J(f*)`.
    pub optimal_count: usize,
    pub all_optimal: bool,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub paths: PathSet,
    pub optimum: SoSolution,
    pub tau: PriceVector,
    pub equilibria: Vec<EquilibriumResult>,
    pub summary: PipelineSummary,
}

/// Social optimum, then its marginal tolls, then the equilibria they induce.
pub fn price_pipeline(net: &Network, opts: &PipelineOptions) -> Result<Pipeline> {
    let paths = enumerate_paths(net, opts.max_paths_per_od)?;
    let optimum = solve_social_optimum(net, &paths, &opts.so)?;
    let tau = marginal_prices(net, &paths, &optimum.flow)?;
    let equilibria = solve_equilibrium(net, &paths, &tau, &opts.eq)?;
    let summary = summarize(optimum.objective, &equilibria, opts.optimal_band);
    Ok(Pipeline {
        paths,
        optimum,
        tau,
        equilibria,
        summary,
    })
}

pub(crate) fn summarize(jstar: f64, eqs: &[EquilibriumResult], band: f64) -> PipelineSummary {
    let spread = social_delay_spread(eqs);
    let converged: Vec<&EquilibriumResult> = eqs.iter().filter(|r| r.converged).collect();
    let within = |j: f64| (j - jstar).abs() <= band * jstar.abs().max(1e-12);
    let optimal_count = converged.iter().filter(|r| within(r.social_delay)).count();
    PipelineSummary {
        optimal_social_delay: jstar,
        converged: converged.len(),
        restarts: eqs.len(),
        distinct: converged.iter().filter(|r| r.duplicate_of.is_none()).count(),
        min_social_delay: spread.map(|s| s.0),
        max_social_delay: spread.map(|s| s.1),
        relative_spread: spread.map(|(lo, hi)| (hi - lo) / jstar.abs().max(1e-12)),
        optimal_count,
        all_optimal: !converged.is_empty() && optimal_count == converged.len(),
    }
}
