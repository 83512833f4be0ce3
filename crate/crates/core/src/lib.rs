//! Congestion pricing for mixed-autonomy traffic networks.
//!
//! Two vehicle classes, human-driven and autonomous, share links whose delay
//! is `a + gamma * (f_h / m + f_a / M)^beta`. The crate computes socially
//! optimal flows, marginal-cost tolls (per class or shared), the Wardrop
//! equilibria those tolls induce, and the best undifferentiated tolls by a
//! nested derivative-free search.

pub mod auxiliary;
pub mod cli;
pub mod delay;
pub mod equilibrium;
pub mod error;
pub mod face;
pub mod fixtures;
pub mod flow;
pub mod network;
pub mod optimum;
pub mod pricing;
pub mod report;
pub mod search;
pub mod simplex;
pub mod undiff;

#[cfg(test)]
pub(crate) mod testutil;

pub use delay::{link_delay, link_delay_grad, od_travel_costs, social_delay, total_cost, CostBreakdown, PriceVector};
pub use equilibrium::{solve_equilibrium, wardrop_gap, EqOptions, EquilibriumResult};
pub use error::{Error, Result};
pub use flow::{aggregate, enumerate_paths, is_feasible, Class, LinkFlow, PathFlow, PathSet};
pub use network::{Link, Network, OdPair};
pub use optimum::{solve_social_optimum, verify_so_kkt, SoOptions, SoSolution};
pub use pricing::{check_price_structure, marginal_prices, price_pipeline};
