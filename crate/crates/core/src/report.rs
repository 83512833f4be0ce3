//! Run configuration snapshots, CSV artifacts, and the price file format.
//!
//! Every CSV artifact starts with a `# config_hash=<hex>` line, then a header
//! row. Floats are written in Rust's shortest round-trip form, so equal runs
//! give byte-identical files.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::delay::PriceVector;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::undiff::Selection;

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: String,
    /// Network file; empty for the built-in Example 1 network.
    #[serde(default)]
    pub network: String,
    /// SHA-256 of the network document the run read.
    #[serde(default)]
    pub network_sha256: String,
    #[serde(default)]
    pub seed: u64,
    pub so_tol: f64,
    pub eq_tol: f64,
    pub so_restarts: usize,
    pub eq_restarts: usize,
    pub max_paths_per_od: usize,
    /// Price file for `solve-ue`; empty means no tolls.
    #[serde(default)]
    pub prices: String,
    pub selection: Selection,
    pub budget: usize,
    pub starts: usize,
    pub inner_restarts: usize,
    pub certify_tol: f64,
    #[serde(default)]
    pub out: String,
    #[serde(default)]
    pub strict: bool,
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields are always representable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("so_tol", self.so_tol),
            ("eq_tol", self.eq_tol),
            ("certify_tol", self.certify_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, format!("must be finite and > 0, got {v}")));
            }
        }
        for (field, v) in [
            ("so_restarts", self.so_restarts),
            ("eq_restarts", self.eq_restarts),
            ("max_paths_per_od", self.max_paths_per_od),
            ("budget", self.budget),
            ("starts", self.starts),
            ("inner_restarts", self.inner_restarts),
        ] {
            if v == 0 {
                return Err(Error::invalid(field, "must be >= 1"));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the snapshot with the output directory and the network
    /// path blanked, so the hash names inputs rather than locations.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out.clear();
        c.network.clear();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// In-memory CSV table with the config-hash preamble.
pub struct Table {
    hash: String,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(hash: &str, header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("writing to memory");
        Table {
            hash: hash.to_string(),
            writer,
        }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("writing to memory");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        let body = self.writer.into_inner().expect("writing to memory");
        let mut out = format!("# config_hash={}\n", self.hash).into_bytes();
        out.extend(body);
        out
    }
}

/// Formats a float for CSV output.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Writes `bytes` to `dir/name`, creating `dir` if needed.
pub fn write_artifact(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(io(&path))?;
    Ok(path)
}

/// Writes tolls in the price file format.
pub fn prices_csv(net: &Network, tau: &PriceVector, hash: &str) -> Vec<u8> {
    let mut t = Table::new(hash, &["link_id", "tau_h", "tau_a"]);
    for (l, link) in net.links().iter().enumerate() {
        t.row([link.id.clone(), num(tau.human[l]), num(tau.autonomous[l])]);
    }
    t.into_bytes()
}

/// Parses a price file: `#` comment lines, a `link_id,tau_h,tau_a` header,
/// then one row per link of `net` in any order.
pub fn parse_prices(text: &str, net: &Network) -> Result<PriceVector> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Row {
        link_id: String,
        tau_h: f64,
        tau_a: f64,
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let n = net.num_links();
    let mut human = vec![f64::NAN; n];
    let mut autonomous = vec![f64::NAN; n];
    let mut seen: HashMap<usize, usize> = HashMap::new();
    for (i, rec) in rdr.deserialize::<Row>().enumerate() {
        let row = rec.map_err(|e| Error::Parse(format!("price row {}: {e}", i + 1)))?;
        let l = net
            .link_index(&row.link_id)
            .ok_or_else(|| Error::invalid("link_id", format!("unknown link '{}'", row.link_id)))?;
        if seen.insert(l, i).is_some() {
            return Err(Error::invalid(
                "link_id",
                format!("link '{}' listed twice", row.link_id),
            ));
        }
        human[l] = row.tau_h;
        autonomous[l] = row.tau_a;
    }
    if let Some(l) = (0..n).find(|l| !seen.contains_key(l)) {
        return Err(Error::invalid(
            "link_id",
            format!("no price for link '{}'", net.links()[l].id),
        ));
    }
    PriceVector::new(human, autonomous)
}
