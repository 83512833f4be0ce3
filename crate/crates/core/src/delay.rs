//! Link and path delays, class costs under a price vector, social delay and
//! total cost.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{aggregate, aggregate_unchecked, require_feasible, Class, LinkFlow, PathFlow, PathSet};
use crate::network::{Link, Network};

/// Per-link, per-class tolls.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceVector {
    pub human: Vec<f64>,
    pub autonomous: Vec<f64>,
}

impl PriceVector {
    pub fn zeros(num_links: usize) -> Self {
        PriceVector {
            human: vec![0.0; num_links],
            autonomous: vec![0.0; num_links],
        }
    }

    /// Same toll for both classes on every link.
    pub fn undifferentiated(tolls: &[f64]) -> Result<Self> {
        let tau = PriceVector {
            human: tolls.to_vec(),
            autonomous: tolls.to_vec(),
        };
        tau.validate(tolls.len())?;
        Ok(tau)
    }

    pub fn new(human: Vec<f64>, autonomous: Vec<f64>) -> Result<Self> {
        let tau = PriceVector { human, autonomous };
        tau.validate(tau.human.len())?;
        Ok(tau)
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

    /// Short hex digest of the exact bit patterns, for telling price vectors apart.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for t in self.human.iter().chain(&self.autonomous) {
            h.update(t.to_bits().to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn is_undifferentiated(&self) -> bool {
        self.human == self.autonomous
    }

    pub fn validate(&self, num_links: usize) -> Result<()> {
        for got in [self.human.len(), self.autonomous.len()] {
            if got != num_links {
                return Err(Error::Dimension {
                    expected: num_links,
                    got,
                });
            }
        }
        for (i, &t) in self.human.iter().chain(&self.autonomous).enumerate() {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::invalid(
                    format!("price[{}]", i % num_links.max(1)),
                    format!("must be finite and >= 0, got {t}"),
                ));
            }
        }
        Ok(())
    }
}

/// `x^n` by repeated squaring; exact for small integer exponents.
pub(crate) fn powi(x: f64, mut n: u32) -> f64 {
    let mut base = x;
    let mut acc = 1.0;
    while n > 0 {
        if n & 1 == 1 {
            acc *= base;
        }
        base *= base;
        n >>= 1;
    }
    acc
}

/// Capacity-weighted load `f_h / m + f_a / M`.
#[inline]
fn load(link: &Link, fh: f64, fa: f64) -> f64 {
    fh / link.m + fa / link.big_m
}

#[inline]
pub(crate) fn delay_raw(link: &Link, fh: f64, fa: f64) -> f64 {
    link.a + link.gamma * powi(load(link, fh, fa), link.beta)
}

#[inline]
pub(crate) fn grad_raw(link: &Link, fh: f64, fa: f64) -> (f64, f64) {
    let slope = link.gamma * link.beta as f64 * powi(load(link, fh, fa), link.beta - 1);
    (slope / link.m, slope / link.big_m)
}

fn check_flows(fh: f64, fa: f64) -> Result<()> {
    for f in [fh, fa] {
        if f.is_nan() || f < 0.0 {
            return Err(Error::NegativeFlow(f));
        }
    }
    Ok(())
}

/// Delay per unit of flow on a link carrying `fh` human and `fa` autonomous flow.
pub fn link_delay(link: &Link, fh: f64, fa: f64) -> Result<f64> {
    check_flows(fh, fa)?;
    Ok(delay_raw(link, fh, fa))
}

/// Partial derivatives of [`link_delay`] with respect to the human and
/// autonomous flow. Their ratio is always `m / M`.
pub fn link_delay_grad(link: &Link, fh: f64, fa: f64) -> Result<(f64, f64)> {
    check_flows(fh, fa)?;
    Ok(grad_raw(link, fh, fa))
}

/// `e_l` at the given link flows.
pub fn link_delays(net: &Network, lf: &LinkFlow) -> Vec<f64> {
    net.links()
        .iter()
        .enumerate()
        .map(|(l, link)| delay_raw(link, lf.human[l], lf.autonomous[l]))
        .collect()
}

/// Everything the solvers need to know about a flow under a price vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub link_flow: LinkFlow,
    pub link_delay: Vec<f64>,
    pub path_delay: Vec<f64>,
    pub path_cost_h: Vec<f64>,
    pub path_cost_a: Vec<f64>,
    pub social_delay: f64,
    pub total_cost: f64,
}

impl CostBreakdown {
    pub fn path_cost(&self, c: Class) -> &[f64] {
        match c {
            Class::Human => &self.path_cost_h,
            Class::Autonomous => &self.path_cost_a,
        }
    }
}

/// Evaluates delays and costs without checking feasibility.
pub fn evaluate(net: &Network, paths: &PathSet, f: &PathFlow, tau: &PriceVector) -> Result<CostBreakdown> {
    f.check_len(paths)?;
    tau.validate(net.num_links())?;
    Ok(evaluate_unchecked(net, paths, f, tau))
}

pub(crate) fn evaluate_unchecked(net: &Network, paths: &PathSet, f: &PathFlow, tau: &PriceVector) -> CostBreakdown {
    let link_flow = aggregate_unchecked(paths, f);
    let link_delay = link_delays(net, &link_flow);
    let n = paths.len();
    let mut path_delay = Vec::with_capacity(n);
    let mut path_cost_h = Vec::with_capacity(n);
    let mut path_cost_a = Vec::with_capacity(n);
    for p in 0..n {
        let e = paths.path_sum(p, &link_delay);
        path_delay.push(e);
        path_cost_h.push(e + paths.path_sum(p, &tau.human));
        path_cost_a.push(e + paths.path_sum(p, &tau.autonomous));
    }
    let social_delay = link_flow.total.iter().zip(&link_delay).map(|(x, e)| x * e).sum();
    let total_cost = (0..n)
        .map(|p| f.human[p] * path_cost_h[p] + f.autonomous[p] * path_cost_a[p])
        .sum();
    CostBreakdown {
        link_flow,
        link_delay,
        path_delay,
        path_cost_h,
        path_cost_a,
        social_delay,
        total_cost,
    }
}

/// Social delay `sum_l f_l e_l`.
pub fn social_delay(net: &Network, paths: &PathSet, f: &PathFlow) -> Result<f64> {
    let lf = aggregate(paths, f)?;
    Ok(link_delays(net, &lf).iter().zip(&lf.total).map(|(e, x)| e * x).sum())
}

/// Social delay in path form, `sum_p f_p e_p`.
pub fn social_delay_by_paths(net: &Network, paths: &PathSet, f: &PathFlow) -> Result<f64> {
    let lf = aggregate(paths, f)?;
    let e = link_delays(net, &lf);
    Ok((0..paths.len())
        .map(|p| (f.human[p] + f.autonomous[p]) * paths.path_sum(p, &e))
        .sum())
}

/// [`social_delay`] that first rejects infeasible flows.
pub fn social_delay_strict(net: &Network, paths: &PathSet, f: &PathFlow) -> Result<f64> {
    require_feasible(net, paths, f)?;
    social_delay(net, paths, f)
}

/// Total cost `sum_p (f_p^h c_p^h + f_p^a c_p^a)`.
pub fn total_cost(net: &Network, paths: &PathSet, f: &PathFlow, tau: &PriceVector) -> Result<f64> {
    Ok(evaluate(net, paths, f, tau)?.total_cost)
}

/// Per-O/D minimum path cost for each class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdCost {
    pub human: f64,
    pub autonomous: f64,
}

pub fn od_travel_costs(net: &Network, paths: &PathSet, f: &PathFlow, tau: &PriceVector) -> Result<Vec<OdCost>> {
    let cb = evaluate(net, paths, f, tau)?;
    Ok(od_costs_from(paths, &cb))
}

pub(crate) fn od_costs_from(paths: &PathSet, cb: &CostBreakdown) -> Vec<OdCost> {
    let min_over = |costs: &[f64], w: usize| paths.od_range(w).map(|p| costs[p]).fold(f64::INFINITY, f64::min);
    (0..paths.num_od_pairs())
        .map(|w| OdCost {
            human: min_over(&cb.path_cost_h, w),
            autonomous: min_over(&cb.path_cost_a, w),
        })
        .collect()
}
