//! Network description: nodes, links with two-class BPR parameters, and O/D
//! demands. Networks are validated once at construction and immutable after.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether every link shares one capacity
/// asymmetry degree.
pub const HOMOGENEITY_TOL: f64 = 1e-12;

/// A directed link with delay `a + gamma * (f_h / m + f_a / M)^beta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Link {
    pub id: String,
    pub tail: String,
    pub head: String,
    /// Free-flow delay.
    pub a: f64,
    pub gamma: f64,
    pub beta: u32,
    /// Capacity when every vehicle is human-driven.
    pub m: f64,
    /// Capacity when every vehicle is autonomous.
    #[serde(rename = "M")]
    pub big_m: f64,
}

impl Link {
    /// Degree of capacity asymmetry `m / M`, in `(0, 1]`.
    pub fn asymmetry(&self) -> f64 {
        self.m / self.big_m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdPair {
    pub id: String,
    pub origin: String,
    pub destination: String,
    pub demand_h: f64,
    pub demand_a: f64,
}

#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<String>,
    links: Vec<Link>,
    od_pairs: Vec<OdPair>,
    /// (tail, head) node indices per link.
    ends: Vec<(usize, usize)>,
    /// (origin, destination) node indices per O/D pair.
    od_ends: Vec<(usize, usize)>,
}

impl Network {
    /// Validates and assembles a network.
    pub fn new(nodes: Vec<String>, links: Vec<Link>, od_pairs: Vec<OdPair>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.as_str(), i).is_some() {
                return Err(Error::invalid("nodes", format!("duplicate node `{n}`")));
            }
        }
        let lookup = |field: String, name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::invalid(field, format!("undeclared node `{name}`")))
        };

        let mut seen = HashSet::new();
        let mut ends = Vec::with_capacity(links.len());
        for l in &links {
            if !seen.insert(l.id.as_str()) {
                return Err(Error::invalid("links.id", format!("duplicate link id `{}`", l.id)));
            }
            let field = |f: &str| format!("links[{}].{f}", l.id);
            check_positive(&field("a"), l.a)?;
            check_positive(&field("gamma"), l.gamma)?;
            check_positive(&field("m"), l.m)?;
            check_positive(&field("M"), l.big_m)?;
            if l.beta == 0 {
                return Err(Error::invalid(field("beta"), "must be a positive integer"));
            }
            if l.m > l.big_m {
                return Err(Error::invalid(
                    field("M"),
                    format!("autonomous capacity {} is below human capacity {}", l.big_m, l.m),
                ));
            }
            ends.push((lookup(field("tail"), &l.tail)?, lookup(field("head"), &l.head)?));
        }

        let mut seen = HashSet::new();
        let mut od_ends = Vec::with_capacity(od_pairs.len());
        for w in &od_pairs {
            if !seen.insert(w.id.as_str()) {
                return Err(Error::invalid("od_pairs.id", format!("duplicate O/D id `{}`", w.id)));
            }
            let field = |f: &str| format!("od_pairs[{}].{f}", w.id);
            check_demand(&field("demand_h"), w.demand_h)?;
            check_demand(&field("demand_a"), w.demand_a)?;
            let o = lookup(field("origin"), &w.origin)?;
            let d = lookup(field("destination"), &w.destination)?;
            if o == d {
                return Err(Error::invalid(field("destination"), "equals origin"));
            }
            od_ends.push((o, d));
        }

        let net = Network {
            nodes,
            links,
            od_pairs,
            ends,
            od_ends,
        };
        for (w, &(o, d)) in net.od_ends.iter().enumerate() {
            if !net.reachable(o, d) {
                let od = &net.od_pairs[w];
                return Err(Error::Unreachable {
                    od: od.id.clone(),
                    origin: od.origin.clone(),
                    destination: od.destination.clone(),
                });
            }
        }
        Ok(net)
    }

    /// Parses and validates a network document (TOML).
    pub fn from_document(text: &str) -> Result<Self> {
        let raw: RawNetwork = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        raw.into_network()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_document(&text)
    }

    /// Renders the network back to the document format, with `M` explicit.
    pub fn to_document(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            nodes: &'a [String],
            links: &'a [Link],
            od_pairs: &'a [OdPair],
        }
        toml::to_string(&Doc {
            nodes: &self.nodes,
            links: &self.links,
            od_pairs: &self.od_pairs,
        })
        .expect("network fields are always representable")
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn od_pairs(&self) -> &[OdPair] {
        &self.od_pairs
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn num_od_pairs(&self) -> usize {
        self.od_pairs.len()
    }

    /// (tail, head) node indices of link `l`.
    pub fn link_ends(&self, l: usize) -> (usize, usize) {
        self.ends[l]
    }

    /// (origin, destination) node indices of O/D pair `w`.
    pub fn od_ends(&self, w: usize) -> (usize, usize) {
        self.od_ends[w]
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.links.iter().position(|l| l.id == id)
    }

    /// Sum of both classes' demands over all O/D pairs.
    pub fn total_demand(&self) -> f64 {
        self.od_pairs.iter().map(|w| w.demand_h + w.demand_a).sum()
    }

    /// The common asymmetry degree when all links share it (within
    /// [`HOMOGENEITY_TOL`] relative to the mean), `None` otherwise.
    pub fn homogeneous_asymmetry(&self) -> Option<f64> {
        if self.links.is_empty() {
            return None;
        }
        let mean = self.links.iter().map(Link::asymmetry).sum::<f64>() / self.links.len() as f64;
        let homogeneous = self
            .links
            .iter()
            .all(|l| (l.asymmetry() - mean).abs() <= HOMOGENEITY_TOL * mean);
        homogeneous.then_some(mean)
    }

    /// Smallest and largest link asymmetry degree.
    pub fn asymmetry_range(&self) -> (f64, f64) {
        self.links
            .iter()
            .map(Link::asymmetry)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), mu| {
                (lo.min(mu), hi.max(mu))
            })
    }

    /// Returns a copy with link parameters rewritten by `edit`, revalidated.
    pub fn map_links(&self, mut edit: impl FnMut(&mut Link)) -> Result<Network> {
        let mut links = self.links.clone();
        links.iter_mut().for_each(&mut edit);
        Network::new(self.nodes.clone(), links, self.od_pairs.clone())
    }

    fn reachable(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(n) = queue.pop_front() {
            if n == to {
                return true;
            }
            for &(t, h) in &self.ends {
                if t == n && !seen[h] {
                    seen[h] = true;
                    queue.push_back(h);
                }
            }
        }
        false
    }
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

fn check_demand(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and >= 0, got {v}")))
    }
}

/// Ids may be written as strings or integers.
#[derive(Deserialize)]
#[serde(untagged)]
enum RawId {
    Int(i64),
    Str(String),
}

impl From<RawId> for String {
    fn from(id: RawId) -> String {
        match id {
            RawId::Int(i) => i.to_string(),
            RawId::Str(s) => s,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    nodes: Vec<RawId>,
    links: Vec<RawLink>,
    od_pairs: Vec<RawOd>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    id: RawId,
    tail: RawId,
    head: RawId,
    a: f64,
    gamma: f64,
    beta: i64,
    m: f64,
    #[serde(rename = "M")]
    big_m: Option<f64>,
    mu: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOd {
    id: RawId,
    origin: RawId,
    destination: RawId,
    demand_h: f64,
    demand_a: f64,
}

impl RawNetwork {
    fn into_network(self) -> Result<Network> {
        let nodes = self.nodes.into_iter().map(String::from).collect();
        let links = self
            .links
            .into_iter()
            .map(|l| {
                let id = String::from(l.id);
                let field = |f: &str| format!("links[{id}].{f}");
                let big_m = match (l.big_m, l.mu) {
                    (Some(big_m), None) => big_m,
                    (None, Some(mu)) => {
                        if !(mu.is_finite() && mu > 0.0 && mu <= 1.0) {
                            return Err(Error::invalid(field("mu"), format!("must lie in (0, 1], got {mu}")));
                        }
                        l.m / mu
                    }
                    _ => return Err(Error::invalid(field("M"), "exactly one of `M` and `mu` is required")),
                };
                let beta = u32::try_from(l.beta).ok().filter(|&b| b > 0).ok_or_else(|| {
                    Error::invalid(field("beta"), format!("must be a positive integer, got {}", l.beta))
                })?;
                Ok(Link {
                    tail: l.tail.into(),
                    head: l.head.into(),
                    a: l.a,
                    gamma: l.gamma,
                    beta,
                    m: l.m,
                    big_m,
                    id,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let od_pairs = self
            .od_pairs
            .into_iter()
            .map(|w| OdPair {
                id: w.id.into(),
                origin: w.origin.into(),
                destination: w.destination.into(),
                demand_h: w.demand_h,
                demand_a: w.demand_a,
            })
            .collect();
        Network::new(nodes, links, od_pairs)
    }
}
