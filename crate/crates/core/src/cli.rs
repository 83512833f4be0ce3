//! The `tollgrid` command line.
//!
//! Each run writes `config.toml` (a replayable snapshot), its CSV artifacts
//! and `summary.txt` into `--out`, and prints the summary. Exit status is 0 on
//! success, 1 when `--strict` is set and a solver reported a failure flag,
//! and 2 on usage, input or I/O errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::auxiliary::certify_social_delay_uniqueness;
use crate::delay::{link_delays, PriceVector};
use crate::equilibrium::{solve_equilibrium, EqOptions, EquilibriumResult};
use crate::error::{Error, Result};
use crate::flow::{aggregate, enumerate_paths, PathFlow, PathSet, DEFAULT_MAX_PATHS_PER_OD};
use crate::network::Network;
use crate::optimum::{solve_social_optimum, SoOptions, SoSolution};
use crate::pricing::{check_price_structure, marginal_prices, price_pipeline, PipelineOptions, StructureReport};
use crate::report::{num, parse_prices, prices_csv, sha256_hex, write_artifact, RunConfig, Table};
use crate::undiff::{
    compare_pricing_regimes, solve_undiff_mpec, RegimeComparison, Selection, UndiffOptions, UndiffSearchResult,
};

/// Environment variable capping solver threads; 0 or unset means automatic.
pub const THREADS_ENV: &str = "TOLLGRID_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "tollgrid",
    version,
    about = "Congestion pricing for mixed-autonomy traffic networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Network description file.
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tolerance for both the optimum and the equilibrium solver.
    #[arg(long)]
    tol: Option<f64>,
    /// Restarts for both the optimum and the equilibrium solver.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, default_value = "tollgrid-out")]
    out: PathBuf,
    /// Exit with status 1 if any solver reports a failure flag.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_PATHS_PER_OD)]
    max_paths_per_od: usize,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long, default_value = "optimistic")]
    selection: Selection,
    /// Toll vectors to evaluate.
    #[arg(long, default_value_t = 2000)]
    budget: usize,
    #[arg(long, default_value_t = 6)]
    starts: usize,
    /// Equilibrium restarts per evaluated toll vector.
    #[arg(long, default_value_t = 4)]
    inner_restarts: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Socially optimal flow.
    SolveSo(Common),
    /// Equilibria under given tolls.
    SolveUe {
        /// Price file (link_id,tau_h,tau_a) or `none`.
        #[arg(long)]
        prices: String,
        #[command(flatten)]
        flags: Common,
    },
    /// Marginal-cost tolls at the social optimum.
    Price(Common),
    /// Optimum, marginal tolls, and the equilibria they induce.
    Pipeline(Common),
    /// Pipeline plus the social-delay uniqueness certificate.
    Certify {
        #[arg(long, default_value_t = 1e-4)]
        certify_tol: f64,
        #[command(flatten)]
        flags: Common,
    },
    /// Best undifferentiated tolls.
    UndiffMpec {
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        flags: Common,
    },
    /// No tolls vs best undifferentiated vs differentiated marginal tolls.
    Compare {
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        flags: Common,
    },
    /// Everything above on the built-in Example 1 network (or `--network`).
    ReproduceExample1 {
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        flags: Common,
    },
    /// Re-runs a `config.toml` snapshot.
    Replay {
        config: PathBuf,
        /// Output directory; defaults to the snapshot's.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn base_config(subcommand: &str, c: &Common) -> RunConfig {
    let so = SoOptions::default();
    let eq = EqOptions::default();
    let search = UndiffOptions::default();
    RunConfig {
        subcommand: subcommand.to_string(),
        network: c.network.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        network_sha256: String::new(),
        seed: c.seed,
        so_tol: c.tol.unwrap_or(so.tol),
        eq_tol: c.tol.unwrap_or(eq.tol),
        so_restarts: c.restarts.unwrap_or(so.restarts),
        eq_restarts: c.restarts.unwrap_or(eq.restarts),
        max_paths_per_od: c.max_paths_per_od,
        prices: String::new(),
        selection: search.selection,
        budget: search.budget,
        starts: search.starts,
        inner_restarts: search.eq.restarts,
        certify_tol: 1e-4,
        out: c.out.display().to_string(),
        strict: c.strict,
    }
}

fn with_search(mut cfg: RunConfig, s: &SearchArgs) -> RunConfig {
    cfg.selection = s.selection;
    cfg.budget = s.budget;
    cfg.starts = s.starts;
    cfg.inner_restarts = s.inner_restarts;
    cfg
}

fn config_from(cmd: Command) -> Result<RunConfig> {
    let cfg = match cmd {
        Command::SolveSo(f) => base_config("solve-so", &f),
        Command::SolveUe { prices, flags } => RunConfig {
            prices: if prices == "none" { String::new() } else { prices },
            ..base_config("solve-ue", &flags)
        },
        Command::Price(f) => base_config("price", &f),
        Command::Pipeline(f) => base_config("pipeline", &f),
        Command::Certify { certify_tol, flags } => RunConfig {
            certify_tol,
            ..base_config("certify", &flags)
        },
        Command::UndiffMpec { search, flags } => with_search(base_config("undiff-mpec", &flags), &search),
        Command::Compare { search, flags } => with_search(base_config("compare", &flags), &search),
        Command::ReproduceExample1 { search, flags } => with_search(base_config("reproduce-example1", &flags), &search),
        Command::Replay { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(|source| Error::Io { path: config, source })?;
            let mut cfg = RunConfig::from_toml(&text)?;
            if let Some(out) = out {
                cfg.out = out.display().to_string();
            }
            cfg
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `argv` (including the program name), runs, and returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 2;
    }
    let result = config_from(cli.command).and_then(|cfg| {
        let outcome = execute(&cfg)?;
        outcome.write()?;
        Ok((cfg, outcome))
    });
    match result {
        Ok((cfg, outcome)) => {
            print!("{}", outcome.summary);
            for f in &outcome.failures {
                eprintln!("warning: {f}");
            }
            if cfg.strict && !outcome.failures.is_empty() {
                1
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::invalid(THREADS_ENV, format!("expected a thread count, got '{raw}'")))?;
    if n > 0 {
        // a second call in the same process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Results of one run, before they are written out.
#[derive(Debug)]
pub struct Outcome {
    /// The run's config with the network digest filled in.
    pub config: RunConfig,
    pub summary: String,
    pub artifacts: Vec<(String, Vec<u8>)>,
    /// Solver failure flags; these make `--strict` runs exit with 1.
    pub failures: Vec<String>,
}

impl Outcome {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.artifacts.push((name.to_string(), bytes));
    }

    fn line(&mut self, text: impl AsRef<str>) {
        self.summary.push_str(text.as_ref());
        self.summary.push('\n');
    }

    fn fail(&mut self, flag: impl Into<String>) {
        self.failures.push(flag.into());
    }

    /// Writes the snapshot, artifacts and summary into the config's `out`.
    pub fn write(&self) -> Result<()> {
        let dir = Path::new(&self.config.out);
        write_artifact(dir, "config.toml", self.config.to_toml().as_bytes())?;
        for (name, bytes) in &self.artifacts {
            write_artifact(dir, name, bytes)?;
        }
        write_artifact(dir, "summary.txt", self.summary.as_bytes())?;
        Ok(())
    }
}

fn load_network(cfg: &mut RunConfig) -> Result<Network> {
    let text = if cfg.network.is_empty() {
        if cfg.subcommand != "reproduce-example1" {
            return Err(Error::invalid("--network", "required for this subcommand"));
        }
        crate::fixtures::EXAMPLE1.to_string()
    } else {
        let path = PathBuf::from(&cfg.network);
        std::fs::read_to_string(&path).map_err(|source| Error::Io { path, source })?
    };
    cfg.network_sha256 = sha256_hex(text.as_bytes());
    Network::from_document(&text)
}

fn so_options(cfg: &RunConfig) -> SoOptions {
    SoOptions {
        tol: cfg.so_tol,
        restarts: cfg.so_restarts,
        seed: cfg.seed,
        ..SoOptions::default()
    }
}

fn eq_options(cfg: &RunConfig) -> EqOptions {
    EqOptions {
        tol: cfg.eq_tol,
        restarts: cfg.eq_restarts,
        seed: cfg.seed,
        ..EqOptions::default()
    }
}

fn undiff_options(cfg: &RunConfig, selection: Selection) -> UndiffOptions {
    UndiffOptions {
        selection,
        budget: cfg.budget,
        starts: cfg.starts,
        seed: cfg.seed,
        eq: EqOptions {
            restarts: cfg.inner_restarts,
            ..eq_options(cfg)
        },
        so: so_options(cfg),
        ..UndiffOptions::default()
    }
}

/// Runs the configured subcommand without touching the file system beyond
/// reading inputs. The network digest is filled in before hashing, so the
/// hash in every artifact covers the network contents.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    let net = load_network(&mut cfg)?;
    let hash = cfg.hash();
    let mut out = Outcome {
        config: cfg.clone(),
        summary: String::new(),
        artifacts: Vec::new(),
        failures: Vec::new(),
    };
    out.line(format!("tollgrid {}", cfg.subcommand));
    out.line(format!("config_hash {hash}"));
    let paths = enumerate_paths(&net, cfg.max_paths_per_od)?;
    match cfg.subcommand.as_str() {
        "solve-so" => {
            let sol = solve_social_optimum(&net, &paths, &so_options(&cfg))?;
            so_artifacts(&mut out, &net, &paths, &sol, &hash)?;
        }
        "solve-ue" => {
            let tau = if cfg.prices.is_empty() {
                PriceVector::zeros(net.num_links())
            } else {
                let path = PathBuf::from(&cfg.prices);
                let text = std::fs::read_to_string(&path).map_err(|source| Error::Io { path, source })?;
                parse_prices(&text, &net)?
            };
            let eqs = solve_equilibrium(&net, &paths, &tau, &eq_options(&cfg))?;
            ue_artifacts(&mut out, &net, &paths, &eqs, &hash)?;
        }
        "price" => {
            let sol = solve_social_optimum(&net, &paths, &so_options(&cfg))?;
            so_artifacts(&mut out, &net, &paths, &sol, &hash)?;
            let tau = marginal_prices(&net, &paths, &sol.flow)?;
            price_artifacts(&mut out, &net, &tau, &hash)?;
        }
        "pipeline" | "certify" => {
            pipeline(&mut out, &net, &cfg, &hash, cfg.subcommand == "certify")?;
        }
        "undiff-mpec" => {
            let r = solve_undiff_mpec(&net, &paths, &undiff_options(&cfg, cfg.selection))?;
            undiff_artifacts(&mut out, &net, &r, &hash, "");
        }
        "compare" => {
            let c = compare_pricing_regimes(
                &net,
                cfg.max_paths_per_od,
                &eq_options(&cfg),
                &undiff_options(&cfg, cfg.selection),
            )?;
            compare_artifacts(&mut out, &c, &hash);
        }
        "reproduce-example1" => {
            pipeline(&mut out, &net, &cfg, &hash, true)?;
            let other = match cfg.selection {
                Selection::Optimistic => Selection::Pessimistic,
                Selection::Pessimistic => Selection::Optimistic,
            };
            let c = compare_pricing_regimes(
                &net,
                cfg.max_paths_per_od,
                &eq_options(&cfg),
                &undiff_options(&cfg, cfg.selection),
            )?;
            undiff_artifacts(&mut out, &net, &c.undiff, &hash, &format!("{}_", cfg.selection));
            let r = solve_undiff_mpec(&net, &paths, &undiff_options(&cfg, other))?;
            undiff_artifacts(&mut out, &net, &r, &hash, &format!("{other}_"));
            compare_artifacts(&mut out, &c, &hash);
        }
        other => return Err(Error::invalid("subcommand", format!("unknown subcommand '{other}'"))),
    }
    Ok(out)
}

fn path_flow_table(net: &Network, paths: &PathSet, hash: &str, flows: &[(usize, &PathFlow)]) -> Vec<u8> {
    let mut t = Table::new(hash, &["restart", "od_id", "path", "flow_h", "flow_a"]);
    for &(k, f) in flows {
        for p in 0..paths.len() {
            let od = &net.od_pairs()[paths.paths()[p].od];
            t.row([
                k.to_string(),
                od.id.clone(),
                paths.describe(net, p),
                num(f.human[p]),
                num(f.autonomous[p]),
            ]);
        }
    }
    t.into_bytes()
}

fn link_flow_table(net: &Network, paths: &PathSet, hash: &str, flows: &[(usize, &PathFlow)]) -> Result<Vec<u8>> {
    let mut t = Table::new(hash, &["restart", "link_id", "flow_h", "flow_a", "flow", "delay"]);
    for &(k, f) in flows {
        let lf = aggregate(paths, f)?;
        let delay = link_delays(net, &lf);
        for (l, link) in net.links().iter().enumerate() {
            t.row([
                k.to_string(),
                link.id.clone(),
                num(lf.human[l]),
                num(lf.autonomous[l]),
                num(lf.total[l]),
                num(delay[l]),
            ]);
        }
    }
    Ok(t.into_bytes())
}

fn so_artifacts(out: &mut Outcome, net: &Network, paths: &PathSet, sol: &SoSolution, hash: &str) -> Result<()> {
    out.line(format!("social_optimum {}", sol.objective));
    out.line(format!(
        "so_converged {} kkt_residual {:e} best_restart {} of {}",
        sol.converged, sol.kkt_residual, sol.best_restart, sol.restarts_used
    ));
    if !sol.converged {
        out.fail("social optimum did not converge");
    }
    let flows = [(sol.best_restart, &sol.flow)];
    out.add("so_paths.csv", path_flow_table(net, paths, hash, &flows));
    out.add("so_links.csv", link_flow_table(net, paths, hash, &flows)?);
    Ok(())
}

fn ue_artifacts(
    out: &mut Outcome,
    net: &Network,
    paths: &PathSet,
    eqs: &[EquilibriumResult],
    hash: &str,
) -> Result<()> {
    let mut t = Table::new(
        hash,
        &[
            "restart",
            "converged",
            "duplicate_of",
            "iterations",
            "gap",
            "normalized_gap",
            "social_delay",
            "total_cost",
        ],
    );
    for r in eqs {
        t.row([
            r.restart.to_string(),
            r.converged.to_string(),
            r.duplicate_of.map(|d| d.to_string()).unwrap_or_default(),
            r.iterations.to_string(),
            num(r.gap),
            num(r.normalized_gap),
            num(r.social_delay),
            num(r.total_cost),
        ]);
    }
    out.add("ue_equilibria.csv", t.into_bytes());
    let flows: Vec<(usize, &PathFlow)> = eqs.iter().map(|r| (r.restart, &r.flow)).collect();
    out.add("ue_paths.csv", path_flow_table(net, paths, hash, &flows));
    out.add("ue_links.csv", link_flow_table(net, paths, hash, &flows)?);

    let converged = eqs.iter().filter(|r| r.converged).count();
    let distinct = eqs.iter().filter(|r| r.converged && r.duplicate_of.is_none()).count();
    out.line(format!(
        "equilibria converged {converged} of {} distinct {distinct}",
        eqs.len()
    ));
    if let Some((lo, hi)) = crate::equilibrium::social_delay_spread(eqs) {
        out.line(format!("equilibrium_social_delay min {lo} max {hi}"));
    }
    if converged < eqs.len() {
        out.fail(format!(
            "{} equilibrium restarts did not converge",
            eqs.len() - converged
        ));
    }
    Ok(())
}

fn price_artifacts(out: &mut Outcome, net: &Network, tau: &PriceVector, hash: &str) -> Result<()> {
    out.add("prices.csv", prices_csv(net, tau, hash));
    match check_price_structure(net, tau, 1e-10)? {
        StructureReport::Inapplicable { mu_min, mu_max } => {
            out.line(format!("price_structure inapplicable mu in [{mu_min}, {mu_max}]"));
        }
        StructureReport::Checked {
            mu,
            max_deviation,
            passed,
            ..
        } => {
            out.line(format!(
                "price_structure {} mu {mu} max_deviation {max_deviation:e}",
                if passed { "PASS" } else { "FAIL" }
            ));
            if !passed {
                out.fail("marginal tolls violate tau_a = mu tau_h");
            }
        }
    }
    Ok(())
}

fn pipeline(out: &mut Outcome, net: &Network, cfg: &RunConfig, hash: &str, certify: bool) -> Result<()> {
    let opts = PipelineOptions {
        so: so_options(cfg),
        eq: eq_options(cfg),
        max_paths_per_od: cfg.max_paths_per_od,
        ..PipelineOptions::default()
    };
    let run = price_pipeline(net, &opts)?;
    so_artifacts(out, net, &run.paths, &run.optimum, hash)?;
    price_artifacts(out, net, &run.tau, hash)?;
    ue_artifacts(out, net, &run.paths, &run.equilibria, hash)?;
    let s = &run.summary;
    out.line(format!(
        "optimal_equilibria {} of {} relative_spread {}",
        s.optimal_count,
        s.converged,
        s.relative_spread.map_or("n/a".to_string(), |x| format!("{x:e}"))
    ));
    if !s.all_optimal {
        out.fail("some equilibria under marginal tolls are not optimal");
    }
    if certify {
        let cert = certify_social_delay_uniqueness(net, &run.paths, &run.tau, &run.equilibria, cfg.certify_tol)?;
        let mut t = Table::new(hash, &["check", "residual", "passed"]);
        for c in &cert.checks {
            t.row([c.name.to_string(), num(c.residual), c.passed.to_string()]);
        }
        out.add("certificate.csv", t.into_bytes());
        out.line(format!(
            "certificate {} over {} equilibria",
            cert.verdict(),
            cert.equilibria
        ));
        for c in &cert.checks {
            out.line(format!(
                "  {:<20} {:e} {}",
                c.name,
                c.residual,
                if c.passed { "ok" } else { "FAIL" }
            ));
        }
        if !cert.passed {
            out.fail("uniqueness certificate failed");
        }
    }
    Ok(())
}

fn undiff_artifacts(out: &mut Outcome, net: &Network, r: &UndiffSearchResult, hash: &str, prefix: &str) {
    let mut header = vec!["evaluation".to_string()];
    header.extend(net.links().iter().map(|l| format!("tau_{}", l.id)));
    header.extend(["converged_equilibria", "min_social_delay", "max_social_delay"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(hash, &header);
    let opt = |e: &Option<crate::undiff::Extreme>| e.as_ref().map(|x| num(x.social_delay)).unwrap_or_default();
    for (i, e) in r.trace.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(e.tau.iter().map(|&x| num(x)));
        row.push(e.social_delays.len().to_string());
        row.push(opt(&e.low));
        row.push(opt(&e.high));
        t.row(row);
    }
    out.add(&format!("undiff_{prefix}trace.csv"), t.into_bytes());
    out.add(
        &format!("undiff_{prefix}prices.csv"),
        prices_csv(net, &r.best_tau, hash),
    );

    out.line(format!(
        "undiff[{}] best_social_delay {}",
        r.selection, r.best_social_delay
    ));
    let tolls: Vec<String> = r.best_tau.human.iter().map(|&x| num(x)).collect();
    out.line(format!("undiff[{}] best_tolls [{}]", r.selection, tolls.join(", ")));
    out.line(format!(
        "undiff[{}] equilibrium_social_delay min {} max {}",
        r.selection,
        opt(&r.best.low),
        opt(&r.best.high)
    ));
    out.line(format!(
        "undiff[{}] excess_over_optimum {} evaluations {} tau_max {} widenings {}",
        r.selection,
        r.best_social_delay - r.optimum.objective,
        r.evaluations,
        r.tau_max,
        r.widenings
    ));
    if r.budget_exhausted {
        out.fail(format!("undifferentiated search ({}) ran out of budget", r.selection));
    }
}

/// The regime table as aligned text.
pub fn compare_text(c: &RegimeComparison) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "optimal social delay {}", c.optimal_social_delay);
    let _ = writeln!(
        s,
        "{:<24} {:>14} {:>14} {:>12} {:>12}",
        "regime", "min_delay", "max_delay", "min_excess", "max_excess"
    );
    for r in &c.rows {
        let _ = writeln!(
            s,
            "{:<24} {:>14.6} {:>14.6} {:>12.6} {:>12.6}",
            r.regime.label(),
            r.min_social_delay,
            r.max_social_delay,
            r.min_gap,
            r.max_gap
        );
    }
    s
}

fn compare_artifacts(out: &mut Outcome, c: &RegimeComparison, hash: &str) {
    let mut t = Table::new(
        hash,
        &[
            "regime",
            "min_social_delay",
            "max_social_delay",
            "min_excess",
            "max_excess",
            "optimal_social_delay",
        ],
    );
    for r in &c.rows {
        t.row([
            r.regime.label().to_string(),
            num(r.min_social_delay),
            num(r.max_social_delay),
            num(r.min_gap),
            num(r.max_gap),
            num(c.optimal_social_delay),
        ]);
    }
    out.add("compare.csv", t.into_bytes());
    let text = compare_text(c);
    out.add("compare.txt", text.clone().into_bytes());
    out.summary.push_str(&text);
}
