//! Brute-force oracles written against the delay formula directly, without
//! going through the library's evaluation code.

#![allow(dead_code)]

use std::path::PathBuf;
use std::process::Command;

use rand::Rng;
use tollgrid::{Network, PathFlow, PathSet};

pub fn fixture(name: &str) -> Network {
    Network::from_document(tollgrid::fixtures::by_name(name).unwrap()).unwrap()
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Runs the CLI binary and returns (status, stdout).
pub fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tollgrid"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap() + &String::from_utf8(out.stderr).unwrap(),
    )
}

/// First number after `key` on a summary line starting with `key`.
pub fn summary_value(summary: &str, key: &str) -> f64 {
    summary
        .lines()
        .find_map(|l| l.strip_prefix(key))
        .and_then(|rest| rest.split_whitespace().next())
        .unwrap_or_else(|| panic!("no '{key}' in summary:\n{summary}"))
        .parse()
        .unwrap()
}

/// Data rows of a CSV artifact as string fields, skipping the hash line and header.
pub fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// `a + gamma (fh / m + fa / M)^beta`.
pub fn delay(net: &Network, l: usize, fh: f64, fa: f64) -> f64 {
    let k = &net.links()[l];
    k.a + k.gamma * (fh / k.m + fa / k.big_m).powi(k.beta as i32)
}

/// Link flows as a dense path-link incidence product.
pub fn incidence_aggregate(net: &Network, paths: &PathSet, f: &PathFlow) -> (Vec<f64>, Vec<f64>) {
    let n = net.num_links();
    let mut a = vec![vec![0.0; paths.len()]; n];
    for (p, path) in paths.paths().iter().enumerate() {
        for &l in &path.links {
            a[l][p] = 1.0;
        }
    }
    let mul = |x: &[f64]| -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
            .collect()
    };
    (mul(&f.human), mul(&f.autonomous))
}

/// Social delay and per-class path costs from scratch.
pub fn social_delay(net: &Network, paths: &PathSet, f: &PathFlow) -> f64 {
    let (h, a) = incidence_aggregate(net, paths, f);
    (0..net.num_links())
        .map(|l| (h[l] + a[l]) * delay(net, l, h[l], a[l]))
        .sum()
}

/// Normalized Wardrop gap from scratch.
pub fn normalized_gap(net: &Network, paths: &PathSet, f: &PathFlow, tau: &tollgrid::PriceVector) -> f64 {
    let (h, a) = incidence_aggregate(net, paths, f);
    let e: Vec<f64> = (0..net.num_links()).map(|l| delay(net, l, h[l], a[l])).collect();
    let cost = |p: usize, t: &[f64]| paths.paths()[p].links.iter().map(|&l| e[l] + t[l]).sum::<f64>();
    let (mut gap, mut scale) = (0.0, 0.0);
    for (w, od) in net.od_pairs().iter().enumerate() {
        for (flows, t, r) in [
            (&f.human, &tau.human, od.demand_h),
            (&f.autonomous, &tau.autonomous, od.demand_a),
        ] {
            let range = paths.od_range(w);
            let cmin = range.clone().map(|p| cost(p, t)).fold(f64::INFINITY, f64::min);
            gap += range.map(|p| flows[p] * (cost(p, t) - cmin)).sum::<f64>();
            scale += r * cmin;
        }
    }
    gap / scale
}

pub fn random_feasible(net: &Network, paths: &PathSet, rng: &mut impl Rng) -> PathFlow {
    let mut f = PathFlow::zeros(paths.len());
    for (w, od) in net.od_pairs().iter().enumerate() {
        for (x, r) in [(&mut f.human, od.demand_h), (&mut f.autonomous, od.demand_a)] {
            let range = paths.od_range(w);
            let draws: Vec<f64> = range.clone().map(|_| -rng.gen::<f64>().ln()).collect();
            let sum: f64 = draws.iter().sum();
            for (p, d) in range.zip(draws) {
                x[p] = r * d / sum;
            }
        }
    }
    f
}

/// Two parallel links from S to T with one O/D pair: path 0 is link 0.
pub struct TwoLinks<'a> {
    pub net: &'a Network,
    pub rh: f64,
    pub ra: f64,
}

impl<'a> TwoLinks<'a> {
    pub fn new(net: &'a Network) -> Self {
        assert_eq!((net.num_links(), net.num_od_pairs()), (2, 1));
        let od = &net.od_pairs()[0];
        TwoLinks {
            net,
            rh: od.demand_h,
            ra: od.demand_a,
        }
    }

    pub fn delays(&self, h1: f64, a1: f64) -> (f64, f64) {
        (
            delay(self.net, 0, h1, a1),
            delay(self.net, 1, self.rh - h1, self.ra - a1),
        )
    }

    pub fn social_delay(&self, h1: f64, a1: f64) -> f64 {
        let (e1, e2) = self.delays(h1, a1);
        (h1 + a1) * e1 + (self.rh - h1 + self.ra - a1) * e2
    }

    /// Minimum social delay over the grid `h1 = i rh / n`, `a1 = j ra / n`.
    pub fn so_grid(&self, n: usize) -> (f64, f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=n {
            for j in 0..=n {
                let (h1, a1) = (self.rh * i as f64 / n as f64, self.ra * j as f64 / n as f64);
                let v = self.social_delay(h1, a1);
                if v < best.0 {
                    best = (v, h1, a1);
                }
            }
        }
        best
    }

    /// Equilibria under a toll `s` on link 0 relative to link 1, shared by
    /// both classes (so both classes see the same link costs). For each
    /// grid value of `a1` the human split solving `e1 + s = e2` is found by
    /// bisection, then kept only if the classes' choices are consistent.
    /// Returns the social delay of every equilibrium found.
    pub fn equilibria(&self, s: f64, n: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let cdiff = |h1: f64, a1: f64| {
            let (e1, e2) = self.delays(h1, a1);
            e1 + s - e2
        };
        let tol = 1e-12;
        let steps = if self.ra > 0.0 { n } else { 0 };
        for j in 0..=steps {
            let a1 = if steps == 0 { 0.0 } else { self.ra * j as f64 / n as f64 };
            // cdiff increases in h1
            let (lo, hi) = (cdiff(0.0, a1), cdiff(self.rh, a1));
            let h1 = if lo >= 0.0 {
                0.0
            } else if hi <= 0.0 {
                self.rh
            } else {
                let (mut x0, mut x1) = (0.0, self.rh);
                for _ in 0..100 {
                    let mid = 0.5 * (x0 + x1);
                    if cdiff(mid, a1) < 0.0 {
                        x0 = mid;
                    } else {
                        x1 = mid;
                    }
                }
                0.5 * (x0 + x1)
            };
            let d = cdiff(h1, a1);
            // a class may use link 0 only if it is no dearer, and link 1 only if it is no dearer
            let ok = |on0: f64, on1: f64| (on0 <= 0.0 || d <= tol) && (on1 <= 0.0 || d >= -tol);
            if ok(h1, self.rh - h1) && ok(a1, self.ra - a1) {
                out.push(self.social_delay(h1, a1));
            }
        }
        out
    }

    /// (optimistic, pessimistic) best undifferentiated social delay over the
    /// toll grid `s = k smax / n_s`, `|k| <= n_s`.
    pub fn undiff_grid(&self, smax: f64, n_s: usize, n: usize) -> (f64, f64) {
        let mut opt = f64::INFINITY;
        let mut pes = f64::INFINITY;
        for k in -(n_s as i64)..=(n_s as i64) {
            let eqs = self.equilibria(smax * k as f64 / n_s as f64, n);
            if eqs.is_empty() {
                continue;
            }
            opt = opt.min(eqs.iter().cloned().fold(f64::INFINITY, f64::min));
            pes = pes.min(eqs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
        (opt, pes)
    }
}
