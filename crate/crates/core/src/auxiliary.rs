//! The single-capacity auxiliary game of a homogeneous network.
//!
//! Scaling autonomous flow by `mu` turns every link delay into
//! `a + gamma ((f^h + f^a) / m)^beta`, a function of total flow alone, while
//! leaving each class's link costs unchanged. The auxiliary game is therefore
//! itself a network with `M = m` and autonomous demand `mu r^a`, and its
//! equilibria have unique link flows. Mapped back, that makes `f^h + mu f^a`
//! unique across equilibria of the original game, and under tolls with
//! `tau^a = mu tau^h` the social delay
//! `J = C - sum_l tau_l^h (f_l^h + mu f_l^a)` is unique as well.

use serde::Serialize;

use crate::delay::{evaluate, PriceVector};
use crate::equilibrium::{normalized_gap, EquilibriumResult};
use crate::error::{Error, Result};
use crate::flow::{PathFlow, PathSet};
use crate::network::{Network, OdPair};

#[derive(Debug, Clone)]
pub struct AuxiliaryGame {
    pub mu: f64,
    /// Same topology and tolls; `M = m` on every link and autonomous demand
    /// scaled by `mu`.
    pub network: Network,
    pub tau: PriceVector,
}

/// Builds the auxiliary game. Fails unless every link has the same asymmetry.
pub fn build_auxiliary(net: &Network, tau: &PriceVector) -> Result<AuxiliaryGame> {
    tau.validate(net.num_links())?;
    let Some(mu) = net.homogeneous_asymmetry() else {
        let (min, max) = net.asymmetry_range();
        return Err(Error::Heterogeneous { min, max });
    };
    let links = net
        .links()
        .iter()
        .cloned()
        .map(|mut l| {
            l.big_m = l.m;
            l
        })
        .collect();
    let od_pairs = net
        .od_pairs()
        .iter()
        .map(|w| OdPair {
            demand_a: mu * w.demand_a,
            ..w.clone()
        })
        .collect();
    Ok(AuxiliaryGame {
        mu,
        network: Network::new(net.nodes().to_vec(), links, od_pairs)?,
        tau: tau.clone(),
    })
}

/// `f~^h = f^h`, `f~^a = mu f^a`.
pub fn map_to_auxiliary(f: &PathFlow, mu: f64) -> PathFlow {
    PathFlow {
        human: f.human.clone(),
        autonomous: f.autonomous.iter().map(|x| mu * x).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub residual: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub passed: bool,
    pub mu: f64,
    /// Converged equilibria the checks ran on.
    pub equilibria: usize,
    pub checks: Vec<Check>,
}

impl Certificate {
    pub fn verdict(&self) -> &'static str {
        if self.passed {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

/// Checks, on computed equilibria, the identities behind social-delay
/// uniqueness:
///
/// - `prices`: every equilibrium was solved under `tau` (by fingerprint);
/// - `auxiliary_gap`: each mapped flow is an auxiliary equilibrium, largest
///   normalized gap;
/// - `load_agreement`: largest spread of `f_l^h + mu f_l^a` across
///   equilibria, relative to `1 + load`;
/// - `delay_decomposition`: largest relative difference between `J` and
///   `C - sum_l tau_l^h (f_l^h + mu f_l^a)`;
/// - `delay_agreement`: spread of `J` across equilibria relative to its
///   smallest value.
///
/// Only converged results are used; an empty list fails.
pub fn certify_social_delay_uniqueness(
    net: &Network,
    paths: &PathSet,
    tau: &PriceVector,
    equilibria: &[EquilibriumResult],
    tol: f64,
) -> Result<Certificate> {
    let aux = build_auxiliary(net, tau)?;
    let mu = aux.mu;
    let fingerprint = tau.fingerprint();
    let eqs: Vec<&EquilibriumResult> = equilibria.iter().filter(|r| r.converged).collect();
    let mut checks = Vec::new();
    let mut check = |name, residual: f64| {
        checks.push(Check {
            name,
            residual,
            passed: residual <= tol,
        })
    };

    let foreign = eqs.iter().filter(|r| r.prices != fingerprint).count();
    check("prices", foreign as f64);

    let mut aux_gap: f64 = 0.0;
    let mut decomposition: f64 = 0.0;
    let mut loads: Vec<Vec<f64>> = Vec::with_capacity(eqs.len());
    for r in &eqs {
        aux_gap = aux_gap.max(normalized_gap(
            &aux.network,
            paths,
            &map_to_auxiliary(&r.flow, mu),
            tau,
        )?);
        let cb = evaluate(net, paths, &r.flow, tau)?;
        let load: Vec<f64> = (0..net.num_links())
            .map(|l| cb.link_flow.human[l] + mu * cb.link_flow.autonomous[l])
            .collect();
        let collected: f64 = load.iter().zip(&tau.human).map(|(x, t)| x * t).sum();
        let j = cb.total_cost - collected;
        decomposition = decomposition.max((j - cb.social_delay).abs() / cb.social_delay.abs().max(1e-12));
        loads.push(load);
    }
    check("auxiliary_gap", aux_gap);

    let mut load_spread: f64 = 0.0;
    for l in 0..net.num_links() {
        let (lo, hi) = loads
            .iter()
            .map(|x| x[l])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if lo <= hi {
            load_spread = load_spread.max((hi - lo) / (1.0 + hi.abs()));
        }
    }
    check("load_agreement", load_spread);
    check("delay_decomposition", decomposition);

    let delay_spread = match crate::equilibrium::social_delay_spread(equilibria) {
        Some((lo, hi)) => (hi - lo) / lo.abs().max(1e-12),
        None => f64::INFINITY,
    };
    check("delay_agreement", delay_spread);

    Ok(Certificate {
        passed: checks.iter().all(|c| c.passed),
        mu,
        equilibria: eqs.len(),
        checks,
    })
}
