//! Best undifferentiated tolls (`tau^h = tau^a`) by nested search.
//!
//! The outer loop is a multi-start compass search over the toll box
//! `[0, tau_max]^L`. Each evaluated toll vector is scored by solving for
//! equilibria and then taking the extremes of social delay over the
//! equilibrium face through each distinct one (see [`crate::face`]). Under
//! [`Selection::Optimistic`] the score is the smallest social delay any
//! equilibrium attains, which is the joint minimization over tolls and
//! flows. [`Selection::Pessimistic`] scores by the largest one instead, the
//! value a planner can guarantee when it cannot choose among equilibria.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::delay::PriceVector;
use crate::equilibrium::{solve_equilibrium, EqOptions, EquilibriumResult};
use crate::error::Result;
use crate::face::social_delay_extremes;
use crate::flow::{enumerate_paths, PathFlow, PathSet};
use crate::network::Network;
use crate::optimum::{solve_social_optimum, SoOptions, SoSolution};
use crate::pricing::marginal_prices;
use crate::search::{compass_search, CompassOptions, Evaluator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    #[default]
    Optimistic,
    Pessimistic,
}

impl std::str::FromStr for Selection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "optimistic" => Ok(Selection::Optimistic),
            "pessimistic" => Ok(Selection::Pessimistic),
            _ => Err(format!("unknown selection '{s}' (optimistic|pessimistic)")),
        }
    }
}

impl std::fmt::Display for Selection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Selection::Optimistic => "optimistic",
            Selection::Pessimistic => "pessimistic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UndiffOptions {
    pub selection: Selection,
    /// Toll vectors evaluated, each one a full multi-start equilibrium solve.
    pub budget: usize,
    /// Compass-search starts: zero tolls, the two per-class marginal tolls,
    /// then seeded random points in the box.
    pub starts: usize,
    pub seed: u64,
    /// Inner equilibrium solves.
    pub eq: EqOptions,
    /// Social optimum used to size the box.
    pub so: SoOptions,
    /// Upper end of the toll box. `None` means ten times the largest
    /// marginal toll.
    pub tau_max: Option<f64>,
    /// Times the box is doubled when the best point sits on its upper face.
    pub max_widenings: usize,
    pub compass: CompassOptions,
}

impl Default for UndiffOptions {
    fn default() -> Self {
        UndiffOptions {
            selection: Selection::Optimistic,
            budget: 2000,
            starts: 6,
            seed: 0,
            eq: EqOptions {
                restarts: 4,
                ..EqOptions::default()
            },
            so: SoOptions::default(),
            tau_max: None,
            max_widenings: 3,
            compass: CompassOptions::default(),
        }
    }
}

/// One evaluated toll vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// Shared per-link toll.
    pub tau: Vec<f64>,
    /// Social delay of each converged restart.
    pub social_delays: Vec<f64>,
    /// Extremes over the equilibrium faces; `None` if nothing converged.
    pub low: Option<Extreme>,
    pub high: Option<Extreme>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extreme {
    pub social_delay: f64,
    pub normalized_gap: f64,
    pub flow: PathFlow,
}

impl Extreme {
    fn of(r: &EquilibriumResult) -> Self {
        Extreme {
            social_delay: r.social_delay,
            normalized_gap: r.normalized_gap,
            flow: r.flow.clone(),
        }
    }
}

impl TraceEntry {
    pub fn score(&self, sel: Selection) -> f64 {
        let pick = match sel {
            Selection::Optimistic => &self.low,
            Selection::Pessimistic => &self.high,
        };
        pick.as_ref().map_or(f64::INFINITY, |e| e.social_delay)
    }
}

#[derive(Debug, Clone)]
pub struct UndiffSearchResult {
    pub selection: Selection,
    pub best_tau: PriceVector,
    pub best_social_delay: f64,
    /// Trace entry of the best toll vector.
    pub best: TraceEntry,
    pub optimum: SoSolution,
    pub evaluations: usize,
    /// Budget ran out before the final compass search stabilized.
    pub budget_exhausted: bool,
    pub tau_max: f64,
    pub widenings: usize,
    pub trace: Vec<TraceEntry>,
}

/// Scores one shared toll vector.
pub fn evaluate_tolls(net: &Network, paths: &PathSet, tolls: &[f64], eq: &EqOptions) -> Result<TraceEntry> {
    let tau = PriceVector::undifferentiated(tolls)?;
    let eqs = solve_equilibrium(net, paths, &tau, eq)?;
    let mut low: Option<EquilibriumResult> = None;
    let mut high: Option<EquilibriumResult> = None;
    for r in eqs.iter().filter(|r| r.converged && r.duplicate_of.is_none()) {
        let ends = social_delay_extremes(net, paths, &tau, r, eq)?;
        for cand in [ends.low, r.clone()] {
            if low.as_ref().is_none_or(|l| cand.social_delay < l.social_delay) {
                low = Some(cand);
            }
        }
        for cand in [ends.high, r.clone()] {
            if high.as_ref().is_none_or(|h| cand.social_delay > h.social_delay) {
                high = Some(cand);
            }
        }
    }
    Ok(TraceEntry {
        tau: tolls.to_vec(),
        social_delays: eqs.iter().filter(|r| r.converged).map(|r| r.social_delay).collect(),
        low: low.as_ref().map(Extreme::of),
        high: high.as_ref().map(Extreme::of),
    })
}

/// Searches the undifferentiated toll box for the lowest score.
pub fn solve_undiff_mpec(net: &Network, paths: &PathSet, opts: &UndiffOptions) -> Result<UndiffSearchResult> {
    let optimum = solve_social_optimum(net, paths, &opts.so)?;
    let marginal = marginal_prices(net, paths, &optimum.flow)?;
    let n = net.num_links();
    let largest = marginal
        .human
        .iter()
        .chain(&marginal.autonomous)
        .fold(0.0f64, |m, &t| m.max(t));
    let mut tau_max = opts.tau_max.unwrap_or(10.0 * largest);
    if tau_max <= 0.0 {
        tau_max = 1.0;
    }

    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut failure = None;
    let sel = opts.selection;
    let objective = |x: &[f64]| match evaluate_tolls(net, paths, x, &opts.eq) {
        Ok(entry) => {
            let v = entry.score(sel);
            trace.push(entry);
            v
        }
        Err(e) => {
            failure.get_or_insert(e);
            f64::INFINITY
        }
    };
    let mut eval = Evaluator::new(objective, opts.budget);
    let lo = vec![0.0; n];
    let mut hi = vec![tau_max; n];

    let mut starts: Vec<Vec<f64>> = vec![vec![0.0; n], marginal.human.clone(), marginal.autonomous.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.starts {
        starts.push((0..n).map(|_| rng.gen::<f64>() * tau_max).collect());
    }
    starts.truncate(opts.starts.max(1));

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut stabilized = true;
    for x0 in &starts {
        let Some(r) = compass_search(&mut eval, x0, &lo, &hi, &opts.compass) else {
            break;
        };
        stabilized = r.stabilized;
        if best.as_ref().is_none_or(|b| r.value < b.1) {
            best = Some((r.x, r.value));
        }
        if eval.exhausted() {
            break;
        }
    }

    let mut widenings = 0;
    while widenings < opts.max_widenings && !eval.exhausted() {
        let Some((x, _)) = &best else { break };
        if !x.iter().zip(&hi).any(|(v, h)| *v >= *h) {
            break;
        }
        widenings += 1;
        tau_max *= 2.0;
        hi = vec![tau_max; n];
        let x0 = x.clone();
        let Some(r) = compass_search(&mut eval, &x0, &lo, &hi, &opts.compass) else {
            break;
        };
        stabilized = r.stabilized;
        if best.as_ref().is_none_or(|b| r.value < b.1) {
            best = Some((r.x, r.value));
        }
    }

    let evaluations = eval.used();
    let budget_exhausted = !stabilized;
    drop(eval);
    if let Some(e) = failure {
        return Err(e);
    }

    // the compass search keeps the first point reaching a value, so does this
    let best_entry = trace
        .iter()
        .fold(None::<&TraceEntry>, |b, e| match b {
            Some(b) if b.score(sel) <= e.score(sel) => Some(b),
            _ => Some(e),
        })
        .cloned()
        .expect("at least one evaluation");
    Ok(UndiffSearchResult {
        selection: sel,
        best_tau: PriceVector::undifferentiated(&best_entry.tau)?,
        best_social_delay: best_entry.score(sel),
        best: best_entry,
        optimum,
        evaluations,
        budget_exhausted,
        tau_max,
        widenings,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NoPricing,
    BestUndifferentiated,
    DifferentiatedMarginal,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::NoPricing => "no_pricing",
            Regime::BestUndifferentiated => "best_undifferentiated",
            Regime::DifferentiatedMarginal => "differentiated_marginal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeRow {
    pub regime: Regime,
    /// Smallest and largest social delay over the equilibria these tolls induce.
    pub min_social_delay: f64,
    pub max_social_delay: f64,
    /// `min_social_delay - J*` and `max_social_delay - J*`.
    pub min_gap: f64,
    pub max_gap: f64,
}

#[derive(Debug, Clone)]
pub struct RegimeComparison {
    pub optimal_social_delay: f64,
    pub rows: Vec<RegimeRow>,
    pub undiff: UndiffSearchResult,
}

fn row(regime: Regime, jstar: f64, low: f64, high: f64) -> RegimeRow {
    RegimeRow {
        regime,
        min_social_delay: low,
        max_social_delay: high,
        min_gap: low - jstar,
        max_gap: high - jstar,
    }
}

fn extremes(net: &Network, paths: &PathSet, tau: &PriceVector, eq: &EqOptions) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in solve_equilibrium(net, paths, tau, eq)?
        .iter()
        .filter(|r| r.converged && r.duplicate_of.is_none())
    {
        let ends = social_delay_extremes(net, paths, tau, r, eq)?;
        lo = lo.min(ends.low.social_delay).min(r.social_delay);
        hi = hi.max(ends.high.social_delay).max(r.social_delay);
    }
    Ok((lo, hi))
}

/// Social delay under no tolls, the best undifferentiated tolls, and the
/// differentiated marginal tolls, against the optimum `J*`.
pub fn compare_pricing_regimes(
    net: &Network,
    max_paths_per_od: usize,
    eq: &EqOptions,
    opts: &UndiffOptions,
) -> Result<RegimeComparison> {
    let paths = enumerate_paths(net, max_paths_per_od)?;
    let undiff = solve_undiff_mpec(net, &paths, opts)?;
    let jstar = undiff.optimum.objective;
    let marginal = marginal_prices(net, &paths, &undiff.optimum.flow)?;

    let (lo, hi) = extremes(net, &paths, &PriceVector::zeros(net.num_links()), eq)?;
    let mut rows = vec![row(Regime::NoPricing, jstar, lo, hi)];
    let (ul, uh) = match (&undiff.best.low, &undiff.best.high) {
        (Some(l), Some(h)) => (l.social_delay, h.social_delay),
        _ => (f64::INFINITY, f64::INFINITY),
    };
    rows.push(row(Regime::BestUndifferentiated, jstar, ul, uh));
    let (lo, hi) = extremes(net, &paths, &marginal, eq)?;
    rows.push(row(Regime::DifferentiatedMarginal, jstar, lo, hi));
    Ok(RegimeComparison {
        optimal_social_delay: jstar,
        rows,
        undiff,
    })
}
