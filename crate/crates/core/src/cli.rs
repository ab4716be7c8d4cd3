//! Batch experiment runner behind the `tugwar` binary.
//!
//! Each subcommand reads an optional JSON config, lets flags override it,
//! and writes CSV/JSON files into `--out`. Every file starts with (CSV) or
//! carries (JSON) the tool version and a SHA-256 of the resolved config.
//! Worker count and output path are not part of the config, so outputs are
//! byte-identical for any `--workers`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::constants::{compare_methods, constant_row};
use crate::coupling::{
    adversary_battery, decrement_experiment, escape_bound, random_aligned_config, run_coupled,
    verify_alignment_inequality, write_coupled_csv, CouplingParams, ExperimentPlan, PullOut,
};
use crate::dpp::{solve_with, SolveOptions};
use crate::error::Error;
use crate::fd::{cross_validate, solve_plaplace, FdProblem};
use crate::field::GridField;
use crate::game::{BoundaryData, GameConfig};
use crate::geometry::Vector;
use crate::planar::{
    default_rect_chain, estimate_against, estimate_loop_probability, fit_planar_constant,
    verify_chain, write_chain_json, write_experiments_csv, PlanarAdversary, PlanarPlan,
};
use crate::rng::RngStream;
use crate::stats::Verdict;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "tugwar", version, about = "Tug-of-war with noise: experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Seed of all random streams
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; outputs do not depend on it
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Game value by dynamic programming and/or the finite-difference solver
    Solve(SolveArgs),
    /// Coupled-process decrement and alignment checks
    Couple(CoupleArgs),
    /// Harnack constant table
    Constants(ConstantsArgs),
    /// Loop-probability experiment for the planar argument
    Planar(PlanarArgs),
    /// Compare constant shapes of the three routes
    Compare(CompareArgs),
    /// Verify the rectangle chain
    Chain(ChainArgs),
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::UnsupportedDimension(..)
            | Error::Format(_)
            | Error::EmptyExperiment => CliError::Usage(e.to_string()),
            e => CliError::Run(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

macro_rules! apply {
    ($cfg:expr, $args:expr; $($f:ident),* $(,)?) => {
        $(if let Some(v) = $args.$f.clone() {
            $cfg.$f = v.into();
        })*
    };
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let common = match &cli.command {
        Command::Solve(a) => &a.common,
        Command::Couple(a) => &a.common,
        Command::Constants(a) => &a.common,
        Command::Planar(a) => &a.common,
        Command::Compare(a) => &a.common,
        Command::Chain(a) => &a.common,
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start workers: {e}");
            return EXIT_FAIL;
        }
    };
    let res = pool.install(|| match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Couple(a) => cmd_couple(a),
        Command::Constants(a) => cmd_constants(a),
        Command::Planar(a) => cmd_planar(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Chain(a) => cmd_chain(a),
    });
    match res {
        Ok(v) => {
            println!("verdict: {v}");
            match v {
                Verdict::Pass => EXIT_OK,
                Verdict::Indeterminate => {
                    eprintln!("warning: inconclusive at this sample size");
                    EXIT_OK
                }
                Verdict::Fail => EXIT_FAIL,
            }
        }
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            EXIT_FAIL
        }
    }
}

fn load<C: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<C> {
    match path {
        None => Ok(C::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("bad config {}: {e}", p.display())))
        }
    }
}

/// Hex SHA-256 of the canonical JSON form of a resolved config.
pub fn config_hash(cfg: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

struct Output {
    dir: PathBuf,
    hash: String,
    config: Value,
}

impl Output {
    fn new(common: &Common, cfg: &impl Serialize) -> CliResult<Self> {
        let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            hash: config_hash(cfg),
            config: serde_json::to_value(cfg).expect("config serializes"),
        })
    }

    fn header(&self) -> String {
        format!("# tugwar {VERSION} config={}\n", self.hash)
    }

    fn csv(
        &self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> crate::Result<()>,
    ) -> CliResult<PathBuf> {
        let mut buf = self.header().into_bytes();
        body(&mut buf)?;
        let path = self.dir.join(name);
        fs::write(&path, buf)?;
        println!("wrote {}", path.display());
        Ok(path)
    }

    fn json(&self, name: &str, result: Value) -> CliResult<PathBuf> {
        let doc = json!({
            "tool": format!("tugwar {VERSION}"),
            "config_hash": self.hash,
            "config": self.config,
            "result": result,
        });
        let mut buf = serde_json::to_vec_pretty(&doc).expect("json serializes");
        buf.push(b'\n');
        let path = self.dir.join(name);
        fs::write(&path, buf)?;
        println!("wrote {}", path.display());
        Ok(path)
    }
}

fn worst(vs: impl IntoIterator<Item = Verdict>) -> Verdict {
    let mut out = Verdict::Pass;
    for v in vs {
        match v {
            Verdict::Fail => return Verdict::Fail,
            Verdict::Indeterminate => out = Verdict::Indeterminate,
            Verdict::Pass => {}
        }
    }
    out
}

/// `cos`, `const:c`, `affine:a1,a2[,..]:b` or `mode:k[:phase]`.
pub fn parse_boundary(spec: &str, d: usize) -> crate::Result<BoundaryData> {
    let bad = || Error::InvalidConfig(format!("unknown boundary data '{spec}'"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["cos"] => Ok(BoundaryData::cosine()),
        ["const", c] => Ok(BoundaryData::constant(num(c)?)),
        ["affine", a, b] => {
            let a = a.split(',').map(num).collect::<crate::Result<Vec<f64>>>()?;
            if a.len() != d {
                return Err(Error::InvalidConfig(format!(
                    "affine slope has {} entries for d = {d}",
                    a.len()
                )));
            }
            Ok(BoundaryData::affine(a, num(b)?))
        }
        ["mode", k] | ["mode", k, _] if d == 2 => {
            let k = k.trim().parse::<u32>().map_err(|_| bad())?;
            let phase = match parts.get(2) {
                Some(ph) => num(ph)?,
                None => 0.0,
            };
            Ok(BoundaryData::planar_mode(k, phase))
        }
        _ => Err(bad()),
    }
}

// ---------------------------------------------------------------- solve

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// cos | const:c | affine:a1,a2:b | mode:k[:phase]
    #[arg(long)]
    pub boundary: Option<String>,
    /// Lattice spacing of the dynamic programming solver (default eps/4)
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<u64>,
    /// dpp | fd | both
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub fd_h: Option<f64>,
    #[arg(long)]
    pub fd_tol: Option<f64>,
    /// Comparison excludes |x| > 1 - margin
    #[arg(long)]
    pub margin: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub p: Option<f64>,
    pub d: usize,
    pub eps: f64,
    pub boundary: String,
    pub h: Option<f64>,
    pub tol: f64,
    pub max_iter: u64,
    pub method: String,
    pub fd_h: f64,
    pub fd_tol: f64,
    pub margin: f64,
    pub seed: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            p: None,
            d: 2,
            eps: 0.02,
            boundary: "cos".into(),
            h: None,
            tol: 1e-6,
            max_iter: 1_000_000,
            method: "dpp".into(),
            fd_h: 0.005,
            fd_tol: 1e-8,
            margin: 0.3,
            seed: 0,
        }
    }
}

fn field_summary(f: &GridField) -> Value {
    json!({
        "u0": f.evaluate(&vec![0.0; f.dim]).ok(),
        "iterations": f.meta.iterations,
        "residual": f.meta.residual,
        "converged": f.meta.converged,
        "spacing": f.spacing,
        "regularization": f.meta.regularization,
    })
}

fn cmd_solve(a: &SolveArgs) -> CliResult<Verdict> {
    let mut cfg: SolveConfig = load(a.common.config.as_deref())?;
    apply!(cfg, a; p, d, eps, boundary, h, tol, max_iter, method, fd_h, fd_tol, margin);
    apply!(cfg, a.common; seed);
    let p = cfg
        .p
        .ok_or_else(|| CliError::Usage("missing --p (or \"p\" in the config)".into()))?;
    let (dpp, fd) = match cfg.method.as_str() {
        "dpp" => (true, false),
        "fd" => (false, true),
        "both" => (true, true),
        m => return Err(CliError::Usage(format!("unknown method '{m}'"))),
    };
    if fd && cfg.d != 2 {
        return Err(CliError::Usage(
            "the finite-difference solver is planar only".into(),
        ));
    }
    let boundary = parse_boundary(&cfg.boundary, cfg.d)?;
    let game = GameConfig::new(p, cfg.d, cfg.eps, boundary.clone(), cfg.seed)?;
    let out = Output::new(&a.common, &cfg)?;
    let mut result = serde_json::Map::new();
    let mut history: Vec<(&str, Vec<f64>)> = Vec::new();
    let mut fields = (None, None);
    if dpp {
        let h = cfg.h.unwrap_or(cfg.eps / 4.0);
        let opts = SolveOptions::new(h).tol(cfg.tol).max_iter(cfg.max_iter);
        let f = solve_with(&game, &opts)?;
        out.csv("dpp_field.csv", |w| f.write_csv(w))?;
        result.insert("dpp".into(), field_summary(&f));
        history.push(("dpp", f.meta.residual_history.clone()));
        if !f.meta.converged {
            eprintln!("warning: dynamic programming stopped before the tolerance");
        }
        fields.0 = Some(f);
    }
    if fd {
        let prob = FdProblem::new(p, cfg.fd_h, 1.0, boundary)?;
        let f = solve_plaplace(&prob, cfg.fd_tol, cfg.max_iter)?;
        out.csv("fd_field.csv", |w| f.write_csv(w))?;
        result.insert("fd".into(), field_summary(&f));
        history.push(("fd", f.meta.residual_history.clone()));
        if !f.meta.converged {
            eprintln!("warning: relaxation stopped before the tolerance");
        }
        fields.1 = Some(f);
    }
    if let (Some(f1), Some(f2)) = &fields {
        let rep = cross_validate(f1, f2, cfg.margin)?;
        println!(
            "sup |u_dpp - u_fd| on |x| <= {} : {:.3e}",
            1.0 - cfg.margin,
            rep.sup_diff
        );
        result.insert("cross".into(), json!(rep));
    }
    out.csv("convergence.csv", |w| {
        writeln!(w, "solver,iteration,residual")?;
        for (name, h) in &history {
            for (k, r) in h.iter().enumerate() {
                writeln!(w, "{name},{},{r:e}", k + 1)?;
            }
        }
        Ok(())
    })?;
    out.json("solve.json", Value::Object(result))?;
    Ok(Verdict::Pass)
}

// ---------------------------------------------------------------- couple

#[derive(Args, Debug, Clone)]
pub struct CoupleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub theta0: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub c_lyap: Option<f64>,
    /// Steps wanted in each stratum
    #[arg(long)]
    pub steps: Option<usize>,
    /// Cap on coupled runs per adversary
    #[arg(long)]
    pub trials: Option<usize>,
    /// An adversary whose strata all hold fewer steps is inconclusive
    #[arg(long)]
    pub min_stratum: Option<usize>,
    #[arg(long)]
    pub alignment_configs: Option<usize>,
    #[arg(long)]
    pub alignment_samples: Option<usize>,
    #[arg(long)]
    pub trace_steps: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoupleConfig {
    pub p: f64,
    pub d: usize,
    pub eps: f64,
    pub theta0: f64,
    pub beta: f64,
    pub eta: Option<f64>,
    pub c_lyap: Option<f64>,
    pub steps: usize,
    pub trials: Option<usize>,
    pub min_stratum: usize,
    pub alignment_configs: usize,
    pub alignment_samples: usize,
    pub trace_steps: u64,
    pub seed: u64,
}

impl Default for CoupleConfig {
    fn default() -> Self {
        Self {
            p: 3.0,
            d: 3,
            eps: 0.01,
            theta0: 0.05,
            beta: 0.1,
            eta: None,
            c_lyap: None,
            steps: 20_000,
            trials: None,
            min_stratum: 1000,
            alignment_configs: 20,
            alignment_samples: 20_000,
            trace_steps: 5000,
            seed: 0,
        }
    }
}

fn cmd_couple(a: &CoupleArgs) -> CliResult<Verdict> {
    let mut cfg: CoupleConfig = load(a.common.config.as_deref())?;
    apply!(cfg, a; p, d, eps, theta0, beta, eta, c_lyap, steps, trials, min_stratum,
        alignment_configs, alignment_samples, trace_steps);
    apply!(cfg, a.common; seed);
    let game = GameConfig::new(cfg.p, cfg.d, cfg.eps, BoundaryData::constant(0.0), cfg.seed)?;
    let mut params = CouplingParams::for_game(&game);
    params.theta0 = cfg.theta0;
    params.beta = cfg.beta;
    if let Some(e) = cfg.eta {
        params.eta = e;
    }
    if let Some(c) = cfg.c_lyap {
        params.c_lyap = c;
    }
    params.validate()?;
    if cfg.d < 3 {
        return Err(CliError::Usage(
            "coupling needs d >= 3 (the noise rotation is trivial in the plane)".into(),
        ));
    }
    let out = Output::new(&a.common, &cfg)?;
    let mut plan = ExperimentPlan::new(cfg.steps);
    if let Some(t) = cfg.trials {
        plan.max_runs = t;
        plan.batch = plan.batch.min(t.max(1));
    }
    let mut verdicts = Vec::new();
    let mut advs = Vec::new();
    for adv in adversary_battery(params.theta0) {
        let (stats, runs) = decrement_experiment(&game, &params, adv.as_ref(), &plan, cfg.seed)?;
        let rep = stats.report(cfg.eps);
        // rare strata are reported but only decide the verdict by failing
        let thin = rep.tests.iter().all(|t| t.n < cfg.min_stratum);
        let v = match rep.verdict {
            Verdict::Pass if thin => Verdict::Indeterminate,
            v => v,
        };
        for t in &rep.tests {
            println!(
                "{:<18} {:>7}/{:<9} n={:<8} mean={:+.3e} thr={:+.3e} ci={:.1e} {}",
                adv.name(),
                t.quantity,
                t.stratum,
                t.n,
                t.mean,
                t.threshold,
                t.ci,
                t.verdict
            );
        }
        verdicts.push(v);
        advs.push(json!({
            "adversary": adv.name(),
            "runs": runs,
            "verdict": v,
            "report": rep,
        }));
    }
    let mut rng = RngStream::derive(cfg.seed, 11, 0);
    let mut align = Vec::new();
    for _ in 0..cfg.alignment_configs {
        let (u, v, z) = random_aligned_config(cfg.d, cfg.eps, params.theta0, &mut rng);
        let rep = verify_alignment_inequality(
            &u,
            &v,
            &z,
            &game,
            &params,
            cfg.alignment_samples,
            &mut rng,
        )?;
        verdicts.push(rep.verdict);
        align.push(rep);
    }
    let min_ratio = align.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    if !align.is_empty() {
        println!(
            "alignment: {} configurations, min ratio {min_ratio:.4} (threshold 0.75)",
            align.len()
        );
    }
    let x0 = Vector::basis(cfg.d, 0).scale(0.25);
    let y0 = -&x0;
    let mut trng = RngStream::derive(cfg.seed, 12, 0);
    let trace = run_coupled(x0, y0, &game, &params, &PullOut, cfg.trace_steps, &mut trng)?;
    out.csv("coupled_trace.csv", |w| write_coupled_csv(&trace, w))?;
    let verdict = worst(verdicts);
    out.json(
        "couple.json",
        json!({
            "params": params,
            "decrements": advs,
            "alignment": align,
            "escape_bound_at_2eta": escape_bound(&params, 2.0 * params.eta),
            "verdict": verdict,
        }),
    )?;
    Ok(verdict)
}

// ------------------------------------------------------------- constants

#[derive(Args, Debug, Clone)]
pub struct ConstantsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',')]
    pub ps: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub ds: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub rs: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsConfig {
    pub ps: Vec<f64>,
    pub ds: Vec<usize>,
    pub rs: Vec<f64>,
    pub seed: u64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            ps: vec![1.5, 2.0, 3.0],
            ds: (2..=10).collect(),
            rs: vec![1.5, 5.0, 50.0],
            seed: 0,
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn cmd_constants(a: &ConstantsArgs) -> CliResult<Verdict> {
    let mut cfg: ConstantsConfig = load(a.common.config.as_deref())?;
    apply!(cfg, a; ps, ds, rs);
    apply!(cfg, a.common; seed);
    let mut rows = Vec::new();
    for &p in &cfg.ps {
        for &d in &cfg.ds {
            for &r in &cfg.rs {
                rows.push(constant_row(p, d, r)?);
            }
        }
    }
    let out = Output::new(&a.common, &cfg)?;
    out.csv("constants.csv", |w| {
        writeln!(
            w,
            "p,d,R,log_bound_paper,log_bound_lps,log_log_bound_moser,chain_length,ordering,note"
        )?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.p,
                r.d,
                r.r,
                opt(r.log_bound_paper),
                r.log_bound_lps,
                r.log_log_bound_moser,
                r.chain_length,
                r.ordering,
                r.note.replace(',', ";")
            )?;
        }
        Ok(())
    })?;
    println!("{} rows", rows.len());
    Ok(Verdict::Pass)
}

// --------------------------------------------------------------- compare

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub d_min: Option<usize>,
    #[arg(long)]
    pub d_max: Option<usize>,
    /// Ordering is required from this dimension on
    #[arg(long)]
    pub check_from: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub p: f64,
    pub d_min: usize,
    pub d_max: usize,
    pub check_from: usize,
    pub seed: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            d_min: 2,
            d_max: 200,
            check_from: 8,
            seed: 0,
        }
    }
}

fn cmd_compare(a: &CompareArgs) -> CliResult<Verdict> {
    let mut cfg: CompareConfig = load(a.common.config.as_deref())?;
    apply!(cfg, a; p, d_min, d_max, check_from);
    apply!(cfg, a.common; seed);
    if cfg.d_min < 2 || cfg.d_min > cfg.d_max {
        return Err(CliError::Usage("need 2 <= d_min <= d_max".into()));
    }
    let rows = (cfg.d_min..=cfg.d_max)
        .map(|d| compare_methods(cfg.p, d))
        .collect::<crate::Result<Vec<_>>>()?;
    let bad: Vec<usize> = rows
        .iter()
        .filter(|r| r.d >= cfg.check_from && !r.ordered)
        .map(|r| r.d)
        .collect();
    let verdict = if bad.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let out = Output::new(&a.common, &cfg)?;
    out.csv("compare.csv", |w| {
        writeln!(w, "p,d,x,s1,s2,s3,meaningful,ordered")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.p, r.d, r.x, r.s1, r.s2, r.s3, r.meaningful, r.ordered
            )?;
        }
        Ok(())
    })?;
    let crossover = rows.first().and_then(|r| r.crossover_d);
    println!(
        "p = {}: s1 < s2 < s3 from d = {:?}; unordered in checked range: {bad:?}",
        cfg.p, crossover
    );
    out.json(
        "compare.json",
        json!({ "crossover_d": crossover, "unordered": bad, "verdict": verdict }),
    )?;
    Ok(verdict)
}

// ----------------------------------------------------------------- chain

#[derive(Args, Debug, Clone)]
pub struct ChainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Random admissible curves to test
    #[arg(long)]
    pub fuzz: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub fuzz: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            fuzz: 10_000,
            seed: 0,
        }
    }
}

fn chain_value() -> CliResult<Value> {
    let mut buf = Vec::new();
    write_chain_json(&default_rect_chain(), &mut buf)?;
    serde_json::from_slice(&buf).map_err(|e| CliError::Run(Error::Format(e.to_string())))
}

fn cmd_chain(a: &ChainArgs) -> CliResult<Verdict> {
    let mut cfg: ChainConfig = load(a.common.config.as_deref())?;
    apply!(cfg, a; fuzz);
    apply!(cfg, a.common; seed);
    let rep = verify_chain(&default_rect_chain(), cfg.fuzz, cfg.seed);
    println!(
        "chain: advance {:.4} rad, {} fuzz curves, {} failures: {}",
        rep.advance, rep.fuzz_curves, rep.fuzz_failures, rep.verdict
    );
    for n in &rep.notes {
        println!("  {n}");
    }
    let out = Output::new(&a.common, &cfg)?;
    out.json(
        "chain.json",
        json!({ "chain": chain_value()?, "report": rep }),
    )?;
    Ok(rep.verdict)
}

// ---------------------------------------------------------------- planar

#[derive(Args, Debug, Clone)]
pub struct PlanarArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',')]
    pub ps: Option<Vec<f64>>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub pilot_trials: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// worst | pull-away | pull-random | pull-out
    #[arg(long)]
    pub adversary: Option<String>,
    #[arg(long)]
    pub fuzz: Option<usize>,
    #[arg(long)]
    pub r2_min: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanarConfig {
    pub ps: Vec<f64>,
    pub eps: f64,
    pub trials: usize,
    pub pilot_trials: Option<usize>,
    pub max_steps: u64,
    pub adversary: String,
    pub fuzz: usize,
    pub r2_min: f64,
    pub seed: u64,
}

impl Default for PlanarConfig {
    fn default() -> Self {
        Self {
            ps: vec![6.0, 3.0, 2.0, 1.5],
            eps: 0.05,
            trials: 10_000,
            pilot_trials: None,
            max_steps: 1_000_000,
            adversary: "worst".into(),
            fuzz: 10_000,
            r2_min: 0.9,
            seed: 0,
        }
    }
}

/// Monotone in `1/(p-1)`: sorting by decreasing `p`, `p̂` never increases.
pub fn decreasing_in_inverse(points: &[(f64, f64)]) -> bool {
    let mut v = points.to_vec();
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    v.windows(2).all(|w| w[1].1 <= w[0].1)
}

fn cmd_planar(a: &PlanarArgs) -> CliResult<Verdict> {
    let mut cfg: PlanarConfig = load(a.common.config.as_deref())?;
    apply!(cfg, a; ps, eps, trials, pilot_trials, max_steps, adversary, fuzz, r2_min);
    apply!(cfg, a.common; seed);
    let fixed = match cfg.adversary.as_str() {
        "worst" => None,
        name => Some(
            PlanarAdversary::ALL
                .into_iter()
                .find(|x| x.name() == name)
                .ok_or_else(|| CliError::Usage(format!("unknown adversary '{name}'")))?,
        ),
    };
    let chain = default_rect_chain();
    let chain_rep = verify_chain(&chain, cfg.fuzz, cfg.seed);
    println!(
        "chain: {} ({} fuzz curves, {} failures)",
        chain_rep.verdict, chain_rep.fuzz_curves, chain_rep.fuzz_failures
    );
    let mut plan = PlanarPlan::new(cfg.trials);
    plan.max_steps = cfg.max_steps;
    if let Some(t) = cfg.pilot_trials {
        plan.pilot_trials = t;
    }
    let mut exps = Vec::new();
    for &p in &cfg.ps {
        let e = match fixed {
            None => estimate_loop_probability(p, cfg.eps, &chain, &plan, cfg.seed)?,
            Some(adv) => estimate_against(p, cfg.eps, &chain, adv, &plan, cfg.seed)?,
        };
        println!(
            "p = {:<4} {:<12} p_hat = {:.4} [{:.4}, {:.4}] capped {:.3}{}",
            p,
            e.adversary,
            e.p_hat,
            e.ci_lo,
            e.ci_hi,
            e.capped_fraction,
            if e.reliable { "" } else { "  UNRELIABLE" }
        );
        exps.push(e);
    }
    let monotone = decreasing_in_inverse(&exps.iter().map(|e| (e.p, e.p_hat)).collect::<Vec<_>>());
    let reliable = exps.iter().all(|e| e.reliable);
    let fit = fit_planar_constant(&exps);
    let fit_verdict = match (&fit, reliable) {
        (_, false) => Verdict::Indeterminate,
        (Ok(f), true) if monotone && f.r2 >= cfg.r2_min => Verdict::Pass,
        _ => Verdict::Fail,
    };
    match &fit {
        Ok(f) => println!(
            "fit ln p_hat = a - C/(p-1): C = {:.4}, R^2 = {:.4}, monotone {monotone}",
            f.c_hat, f.r2
        ),
        Err(e) => println!("fit unavailable: {e}; monotone {monotone}"),
    }
    let out = Output::new(&a.common, &cfg)?;
    out.csv("planar_experiments.csv", |w| {
        write_experiments_csv(&exps, w)
    })?;
    let verdict = worst([chain_rep.verdict, fit_verdict]);
    out.json(
        "planar_fit.json",
        json!({
            "chain": chain_rep,
            "experiments": exps,
            "fit": fit.as_ref().ok(),
            "fit_error": fit.as_ref().err().map(|e| e.to_string()),
            "monotone": monotone,
            "r2_min": cfg.r2_min,
            "verdict": verdict,
        }),
    )?;
    Ok(verdict)
}
