//! Command-line front end.
//!
//! Settings resolve as flags, then `TCGRID_SEED` / `TCGRID_WORKERS`, then a
//! `key = value` config file, then defaults. Every file written is paired
//! with `<file>.manifest.json`.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embed::{audit_distortion, build_probes, certificate_probes, certify, CertifyConfig, FeatureMap, ProbeSpec};
use crate::experiments::{
    csv_row, default_workers, exp_cardinality, exp_sobolev, exp_tc_lower, exp_total_mass, exp_witness_lb,
    standard_sets, Estimator, ExperimentConfig, ExperimentReport, CSV_HEADER,
};
use crate::grid::GridShape;
use crate::measure::{build_mu_k, sample_signs_with, DyadicMeasure, RandomStream, SignLaw};
use crate::sobolev::{all_subsets, check_iso, coarea_layers, coarea_sum, w11_norm, GridFunction, IsoReport, SubsetFamily};
use crate::transport::{tc_norm, TransportProblem};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const ENV_SEED: &str = "TCGRID_SEED";
pub const ENV_WORKERS: &str = "TCGRID_WORKERS";

const TAG_ISO: u64 = 32;
const TAG_SOBOLEV: u64 = 33;
const TAG_GEN: u64 = 34;

pub const ISO_CSV_HEADER: &str =
    "set_id,size,boundary,m,small_applies,small_lhs,small_rhs,medium_applies,medium_lhs,medium_rhs,pass";
pub const SOBOLEV_CSV_HEADER: &str = "function_id,layers,w11,coarea_sum,pass";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

fn usage<E: Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "tcgrid", version, about = "Exact transportation-cost norms and lower-bound checks on [2^n]^d")]
struct Cli {
    /// `key = value` defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact TC norm of a measure file, printed as `num/2^e`.
    TcNorm(TcNormArgs),
    /// Writes a measure file.
    GenMeasure(GenMeasureArgs),
    /// Checks the isoperimetric inequalities on subsets.
    VerifyIso(VerifyIsoArgs),
    /// Checks the coarea identity on random grid functions.
    VerifySobolev(VerifySobolevArgs),
    /// Runs a Monte Carlo or exact experiment.
    Exp(ExpArgs),
    /// Measures the distortion of a shifted-hierarchy embedding.
    EmbedAudit(EmbedAuditArgs),
    /// Averaged distortion lower bound for a linear map.
    Certify(CertifyArgs),
}

#[derive(Args, Debug, Default)]
struct RunFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct TcNormArgs {
    #[arg(long)]
    measure: PathBuf,
    /// Writes the optimal potential in the measure format.
    #[arg(long)]
    witness: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MeasureKind {
    Nu,
    Mu,
    Random,
}

#[derive(Args, Debug)]
struct GenMeasureArgs {
    #[arg(long, value_parser = parse_shape)]
    shape: Option<(u32, u32)>,
    #[arg(long, value_enum)]
    kind: Option<MeasureKind>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    trial: Option<u64>,
    /// Weight bound for `random`.
    #[arg(long)]
    range: Option<i64>,
    #[command(flatten)]
    run: RunFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum IsoMode {
    Exhaustive,
    Sample,
}

#[derive(Args, Debug)]
struct VerifyIsoArgs {
    #[arg(long, value_parser = parse_shape)]
    shape: Option<(u32, u32)>,
    #[arg(long, value_enum)]
    mode: Option<IsoMode>,
    /// Sets drawn in `sample` mode.
    #[arg(long)]
    samples: Option<u64>,
    #[command(flatten)]
    run: RunFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifySobolevArgs {
    #[arg(long, value_parser = parse_shape)]
    shape: Option<(u32, u32)>,
    #[arg(long)]
    functions: Option<u64>,
    /// Values are integers in `[-range, range]`.
    #[arg(long)]
    range: Option<i64>,
    #[command(flatten)]
    run: RunFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum ExpName {
    TotalMass,
    WitnessLb,
    TcLower,
    Sobolev,
    Cardinality,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum EstimatorArg {
    Mc,
    ExactEnum,
}

#[derive(Args, Debug)]
struct ExpArgs {
    #[arg(value_enum)]
    experiment: ExpName,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    k_min: Option<u32>,
    #[arg(long)]
    k_max: Option<u32>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// Samples per subset family (`sobolev`).
    #[arg(long)]
    sets_per_kind: Option<usize>,
    /// Comma-separated distance factors (`cardinality`).
    #[arg(long)]
    c: Option<String>,
    #[command(flatten)]
    run: RunFlags,
    /// `csv` or `json` for stdout, or a file path (`.json` selects JSON).
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct EmbedAuditArgs {
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    hierarchies: Option<usize>,
    /// e.g. `edges,pairs=200,nu=32,k=1..4`.
    #[arg(long)]
    probes: Option<String>,
    #[command(flatten)]
    run: RunFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum MapKind {
    Shifted,
    Prefix1d,
    File,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[arg(long, value_enum)]
    map: MapKind,
    /// Coordinate function files for `--map file`.
    coords: Vec<PathBuf>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    hierarchies: Option<usize>,
    #[arg(long)]
    k_min: Option<u32>,
    #[arg(long)]
    k_max: Option<u32>,
    #[arg(long)]
    trials: Option<u64>,
    #[command(flatten)]
    run: RunFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_shape(s: &str) -> std::result::Result<(u32, u32), String> {
    let (n, d) = s.split_once(',').ok_or("expected n,d")?;
    let n = n.trim().parse().map_err(|_| format!("bad n `{n}`"))?;
    let d = d.trim().parse().map_err(|_| format!("bad d `{d}`"))?;
    Ok((n, d))
}

/// Flag, environment and config-file resolution.
struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            for (no, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| usage(format!("{}:{}: expected key = value", path.display(), no + 1)))?;
                file.insert(k.trim().replace('_', "-"), v.trim().to_string());
            }
        }
        Ok(Settings { file })
    }

    fn file_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.file
            .get(key)
            .map(|v| v.parse().map_err(|_| usage(format!("config: bad value `{v}` for {key}"))))
            .transpose()
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        Ok(match flag {
            Some(v) => v,
            None => self.file_value(key)?.unwrap_or(default),
        })
    }

    fn required<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T> {
        match flag {
            Some(v) => Ok(v),
            None => self.file_value(key)?.ok_or_else(|| usage(format!("missing --{key}"))),
        }
    }

    fn with_env<T: FromStr>(&self, flag: Option<T>, key: &str, env: &str, default: T) -> Result<T> {
        if flag.is_some() {
            return self.get(flag, key, default);
        }
        if let Ok(v) = std::env::var(env) {
            return v.parse().map_err(|_| usage(format!("{env}: bad value `{v}`")));
        }
        self.get(None, key, default)
    }

    fn seed(&self, run: &RunFlags) -> Result<u64> {
        self.with_env(run.seed, "seed", ENV_SEED, 0)
    }

    fn workers(&self, run: &RunFlags) -> Result<usize> {
        Ok(self.with_env(run.workers, "workers", ENV_WORKERS, default_workers())?.max(1))
    }

    fn shape(&self, flag: Option<(u32, u32)>) -> Result<GridShape> {
        let (n, d) = match flag {
            Some(s) => s,
            None => {
                let raw: String = self.required(None, "shape")?;
                parse_shape(&raw).map_err(usage)?
            }
        };
        GridShape::new(n, d).map_err(usage)
    }

    fn shape_nd(&self, n: Option<u32>, d: Option<u32>) -> Result<GridShape> {
        GridShape::new(self.required(n, "n")?, self.required(d, "d")?).map_err(usage)
    }
}

#[derive(Serialize)]
struct OutputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    schema_version: u32,
    command: &'a str,
    args: &'a [String],
    seed: Option<u64>,
    workers: Option<usize>,
    version: &'static str,
    started: String,
    finished: String,
    outputs: Vec<OutputDigest>,
}

/// State shared by one invocation.
struct Session<'a> {
    argv: &'a [String],
    command: String,
    seed: Option<u64>,
    workers: Option<usize>,
    started: String,
    out: &'a mut dyn Write,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl Session<'_> {
    fn say(&mut self, line: impl Display) -> Result<()> {
        writeln!(self.out, "{line}").map_err(usage)
    }

    /// Writes `content` to `path` plus its manifest.
    fn write_file(&mut self, path: &Path, content: &str) -> Result<()> {
        fs::write(path, content).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: &self.command,
            args: self.argv,
            seed: self.seed,
            workers: self.workers,
            version: env!("CARGO_PKG_VERSION"),
            started: self.started.clone(),
            finished: now(),
            outputs: vec![OutputDigest {
                path: path.display().to_string(),
                sha256: hex::encode(Sha256::digest(content.as_bytes())),
            }],
        };
        let mpath = manifest_path(path);
        let text = serde_json::to_string_pretty(&manifest).map_err(usage)? + "\n";
        fs::write(&mpath, text).map_err(|e| usage(format!("{}: {e}", mpath.display())))
    }
}

/// `<path>.manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Parses `argv` (program name first) and runs it, writing results to
/// `out` and diagnostics to `err`. Returns the process exit code.
pub fn run_with(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli, argv, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Runs with the process's stdout and stderr.
pub fn run(argv: &[String]) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

fn dispatch(cli: Cli, argv: &[String], out: &mut dyn Write) -> Result<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    let command = argv.get(1).cloned().unwrap_or_default();
    let mut session = Session {
        argv,
        command,
        seed: None,
        workers: None,
        started: now(),
        out,
    };
    match cli.command {
        Command::TcNorm(a) => cmd_tc_norm(&mut session, a),
        Command::GenMeasure(a) => cmd_gen_measure(&mut session, &settings, a),
        Command::VerifyIso(a) => cmd_verify_iso(&mut session, &settings, a),
        Command::VerifySobolev(a) => cmd_verify_sobolev(&mut session, &settings, a),
        Command::Exp(a) => cmd_exp(&mut session, &settings, a),
        Command::EmbedAudit(a) => cmd_embed_audit(&mut session, &settings, a),
        Command::Certify(a) => cmd_certify(&mut session, &settings, a),
    }
}

fn read_measure(path: &Path) -> Result<DyadicMeasure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    DyadicMeasure::from_text(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_tc_norm(s: &mut Session, a: TcNormArgs) -> Result<()> {
    let m = read_measure(&a.measure)?;
    let problem = TransportProblem::new(m.clone()).map_err(usage)?;
    let (norm, solution) = tc_norm(&problem);
    solution
        .verify(&m)
        .map_err(|e| CliError::Failed(format!("certificate check failed: {e}")))?;
    s.say(norm)?;
    if let Some(path) = a.witness {
        let potential = DyadicMeasure::new(m.shape(), solution.potentials().to_vec(), 0).map_err(usage)?;
        s.write_file(&path, &potential.to_text())?;
    }
    Ok(())
}

fn cmd_gen_measure(s: &mut Session, st: &Settings, a: GenMeasureArgs) -> Result<()> {
    let shape = st.shape(a.shape)?;
    let seed = st.seed(&a.run)?;
    s.seed = Some(seed);
    let kind = st.get(a.kind, "kind", MeasureKind::Nu)?;
    let trial = st.get(a.trial, "trial", 0)?;
    let m = match kind {
        MeasureKind::Nu | MeasureKind::Mu => {
            let k = st.get(a.k, "k", shape.n())?;
            if k > shape.n() {
                return Err(usage(format!("k={k} exceeds n={}", shape.n())));
            }
            let signs = sample_signs_with(k, shape, SignLaw::standard(shape.d()), RandomStream::for_trial(seed, trial, k))
                .map_err(usage)?;
            let mu = build_mu_k(&signs);
            if matches!(kind, MeasureKind::Nu) {
                crate::measure::build_nu_k(&mu)
            } else {
                mu
            }
        }
        MeasureKind::Random => {
            let range = st.get(a.range, "range", 5)?.abs();
            let mut rng = RandomStream::auxiliary(seed, TAG_GEN, trial).rng();
            let mut w: Vec<i64> = (0..shape.len()).map(|_| rng.random_range(-range..=range)).collect();
            let total: i64 = w.iter().sum();
            w[0] -= total;
            DyadicMeasure::new(shape, w, 0).map_err(usage)?
        }
    };
    let text = m.to_text();
    match a.out {
        Some(path) => s.write_file(&path, &text),
        None => write!(s.out, "{text}").map_err(usage),
    }
}

impl FromStr for MeasureKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ValueEnum::from_str(s, true)
    }
}

impl FromStr for IsoMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ValueEnum::from_str(s, true)
    }
}

impl FromStr for EstimatorArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ValueEnum::from_str(s, true)
    }
}

fn iso_row(id: &str, r: &IsoReport) -> String {
    format!(
        "{id},{},{},{},{},{},{},{},{},{},{}",
        r.size,
        r.boundary,
        r.m.map_or(String::new(), |m| m.to_string()),
        r.small.applies,
        r.small.lhs,
        r.small.rhs,
        r.medium.applies,
        r.medium.lhs,
        r.medium.rhs,
        r.pass()
    )
}

/// Finishes a CSV report: writes or prints it, then fails on the first
/// failing row.
fn emit_csv(s: &mut Session, out: Option<&Path>, header: &str, rows: &[String], failing: Option<&String>) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 48);
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    match out {
        Some(path) => {
            s.write_file(path, &text)?;
            s.say(format!("{} rows written to {}", rows.len(), path.display()))?;
        }
        None => write!(s.out, "{text}").map_err(usage)?,
    }
    match failing {
        Some(row) => Err(CliError::Failed(format!("failing row:\n{header}\n{row}"))),
        None => Ok(()),
    }
}

fn cmd_verify_iso(s: &mut Session, st: &Settings, a: VerifyIsoArgs) -> Result<()> {
    let shape = st.shape(a.shape)?;
    let mode = st.get(a.mode, "mode", IsoMode::Exhaustive)?;
    let mut rows = Vec::new();
    let mut failing = None;
    let mut push = |id: String, r: IsoReport, rows: &mut Vec<String>| {
        let row = iso_row(&id, &r);
        if !r.pass() && failing.is_none() {
            failing = Some(rows.len());
        }
        rows.push(row);
    };
    match mode {
        IsoMode::Exhaustive => {
            let width = shape.len().div_ceil(4).max(1);
            for (mask, set) in all_subsets(shape).map_err(usage)?.enumerate() {
                push(format!("mask-{mask:0width$x}"), check_iso(&set), &mut rows);
            }
        }
        IsoMode::Sample => {
            let seed = st.seed(&a.run)?;
            s.seed = Some(seed);
            let samples = st.get(a.samples, "samples", 1000)?;
            let families = SubsetFamily::standard(shape.d());
            for i in 0..samples {
                let family = families[(i % families.len() as u64) as usize];
                let mut rng = RandomStream::auxiliary(seed, TAG_ISO, i).rng();
                let set = family.sample(shape, &mut rng);
                push(format!("{}-{i}", family.name()), check_iso(&set), &mut rows);
            }
        }
    }
    let failing = failing.map(|i| &rows[i]);
    emit_csv(s, a.out.as_deref(), ISO_CSV_HEADER, &rows, failing)
}

fn cmd_verify_sobolev(s: &mut Session, st: &Settings, a: VerifySobolevArgs) -> Result<()> {
    let shape = st.shape(a.shape)?;
    let seed = st.seed(&a.run)?;
    s.seed = Some(seed);
    let count = st.get(a.functions, "functions", 100)?;
    let range = st.get(a.range, "range", 8)?.abs();
    let mut rows = Vec::new();
    let mut failing = None;
    let mut check = |id: String, f: GridFunction<BigRational>, expect_zero: bool, rows: &mut Vec<String>| {
        let norm = w11_norm(&f);
        let layers = coarea_layers(&f);
        let sum = coarea_sum(&layers);
        let pass = norm == sum && (!expect_zero || num_traits::Zero::is_zero(&norm));
        if !pass && failing.is_none() {
            failing = Some(rows.len());
        }
        rows.push(format!("{id},{},{norm},{sum},{pass}", layers.len()));
    };
    let constant = GridFunction::constant(shape, BigRational::from_integer(7.into()));
    check("constant".into(), constant, true, &mut rows);
    for i in 0..count {
        let mut rng = RandomStream::auxiliary(seed, TAG_SOBOLEV, i).rng();
        let f = GridFunction::from_fn(shape, |_| BigRational::from_integer(rng.random_range(-range..=range).into()))
            .map_err(usage)?;
        check(format!("f-{i}"), f, false, &mut rows);
    }
    let failing = failing.map(|i| &rows[i]);
    emit_csv(s, a.out.as_deref(), SOBOLEV_CSV_HEADER, &rows, failing)
}

fn parse_cs(raw: &str) -> Result<Vec<BigRational>> {
    raw.split(',')
        .map(|c| {
            let c = c.trim();
            match c.split_once('/') {
                Some((a, b)) => {
                    let a: i64 = a.trim().parse().map_err(|_| usage(format!("bad c `{c}`")))?;
                    let b: i64 = b.trim().parse().map_err(|_| usage(format!("bad c `{c}`")))?;
                    if b == 0 {
                        return Err(usage(format!("bad c `{c}`")));
                    }
                    Ok(BigRational::new(a.into(), b.into()))
                }
                None => Ok(BigRational::from_integer(
                    c.parse::<i64>().map_err(|_| usage(format!("bad c `{c}`")))?.into(),
                )),
            }
        })
        .collect()
}

enum Sink {
    Stdout { json: bool },
    File { path: PathBuf, json: bool },
}

fn sink(out: Option<String>) -> Sink {
    match out.as_deref() {
        None | Some("csv") => Sink::Stdout { json: false },
        Some("json") => Sink::Stdout { json: true },
        Some(p) => Sink::File {
            path: PathBuf::from(p),
            json: p.ends_with(".json"),
        },
    }
}

fn emit_report(s: &mut Session, report: &ExperimentReport, out: Option<String>) -> Result<()> {
    match sink(out) {
        Sink::Stdout { json } => {
            let text = if json { report.to_json() } else { report.to_csv() };
            write!(s.out, "{text}").map_err(usage)?;
        }
        Sink::File { path, json } => {
            let text = if json { report.to_json() } else { report.to_csv() };
            s.write_file(&path, &text)?;
            s.say(format!(
                "{}: {} rows, {} failing, written to {}",
                report.experiment,
                report.rows.len(),
                report.failures().count(),
                path.display()
            ))?;
        }
    }
    match report.failures().next() {
        Some(row) => Err(CliError::Failed(format!("failing row:\n{CSV_HEADER}\n{}", csv_row(row)))),
        None => Ok(()),
    }
}

fn cmd_exp(s: &mut Session, st: &Settings, a: ExpArgs) -> Result<()> {
    let shape = st.shape_nd(a.n, a.d)?;
    let seed = st.seed(&a.run)?;
    let workers = st.workers(&a.run)?;
    s.seed = Some(seed);
    s.workers = Some(workers);
    s.command = format!("exp {}", a.experiment.to_possible_value().expect("named").get_name());
    let trials = st.get(a.trials, "trials", 1000)?;
    let k_min = st.get(a.k_min, "k-min", 1)?;
    let k_max = st.get(a.k_max, "k-max", shape.n())?;
    let mut cfg = ExperimentConfig::new(shape, trials, seed).with_k(k_min, k_max).with_workers(workers);
    cfg.estimator = match st.get(a.estimator, "estimator", EstimatorArg::Mc)? {
        EstimatorArg::Mc => Estimator::Mc,
        EstimatorArg::ExactEnum => Estimator::ExactEnum,
    };
    let report = match a.experiment {
        ExpName::TotalMass => exp_total_mass(&cfg),
        ExpName::WitnessLb => exp_witness_lb(&cfg),
        ExpName::TcLower => exp_tc_lower(&cfg),
        ExpName::Sobolev => {
            let per_kind = st.get(a.sets_per_kind, "sets-per-kind", 2)?;
            exp_sobolev(&cfg, &standard_sets(shape, per_kind, seed))
        }
        ExpName::Cardinality => {
            let raw = st.get(a.c, "c", "1/2,1,2".to_string())?;
            exp_cardinality(&cfg, &parse_cs(&raw)?)
        }
    }
    .map_err(usage)?;
    emit_report(s, &report, a.out)
}

#[derive(Serialize)]
struct AuditDocument<'a> {
    schema_version: u32,
    n: u32,
    d: u32,
    hierarchies: usize,
    seed: u64,
    probes: &'a str,
    audit: &'a crate::embed::DistortionAudit,
}

fn cmd_embed_audit(s: &mut Session, st: &Settings, a: EmbedAuditArgs) -> Result<()> {
    let shape = st.shape_nd(a.n, a.d)?;
    let seed = st.seed(&a.run)?;
    let workers = st.workers(&a.run)?;
    s.seed = Some(seed);
    s.workers = Some(workers);
    let h = st.get(a.hierarchies, "hierarchies", 8)?;
    if h == 0 {
        return Err(usage("--hierarchies must be positive"));
    }
    let probe_text = st.get(a.probes, "probes", "default".to_string())?;
    let spec: ProbeSpec = probe_text.parse().map_err(usage)?;
    let map = FeatureMap::shifted(shape, h, seed);
    let probes = build_probes(shape, &spec, seed).map_err(usage)?;
    let audit = audit_distortion(&map, &probes, workers).map_err(|e| CliError::Failed(e.to_string()))?;
    s.say(format!(
        "probes={} edges={} expansion={} contraction={} distortion={} kappa={}",
        audit.probes,
        audit.edge_probes,
        crate::experiments::fmt_decimal(audit.expansion),
        crate::experiments::fmt_decimal(audit.contraction),
        crate::experiments::fmt_decimal(audit.distortion),
        crate::experiments::fmt_decimal(audit.kappa)
    ))?;
    if let Some(path) = a.out {
        let doc = AuditDocument {
            schema_version: MANIFEST_SCHEMA_VERSION,
            n: shape.n(),
            d: shape.d(),
            hierarchies: h,
            seed,
            probes: &probe_text,
            audit: &audit,
        };
        let text = serde_json::to_string_pretty(&doc).map_err(usage)? + "\n";
        s.write_file(&path, &text)?;
    }
    if !(audit.distortion.is_finite() && audit.distortion >= 1.0) {
        return Err(CliError::Failed(format!("distortion {} is not finite and ≥ 1", audit.distortion)));
    }
    Ok(())
}

#[derive(Serialize)]
struct CertifyDocument<'a> {
    schema_version: u32,
    seed: u64,
    certificate: &'a crate::embed::CertificateReport,
    audited_distortion: f64,
    audited_probes: usize,
    pass: bool,
}

fn cmd_certify(s: &mut Session, st: &Settings, a: CertifyArgs) -> Result<()> {
    let seed = st.seed(&a.run)?;
    let workers = st.workers(&a.run)?;
    s.seed = Some(seed);
    s.workers = Some(workers);
    let map = match a.map {
        MapKind::Shifted => {
            let shape = st.shape_nd(a.n, a.d)?;
            FeatureMap::shifted(shape, st.get(a.hierarchies, "hierarchies", 8)?, seed)
        }
        MapKind::Prefix1d => {
            let shape = GridShape::new(st.required(a.n, "n")?, st.get(a.d, "d", 1)?).map_err(usage)?;
            FeatureMap::prefix1d(shape).map_err(usage)?
        }
        MapKind::File => {
            if a.coords.is_empty() {
                return Err(usage("--map file needs at least one coordinate file"));
            }
            let functions = a.coords.iter().map(|p| read_measure(p)).collect::<Result<Vec<_>>>()?;
            FeatureMap::coordinates(functions[0].shape(), functions).map_err(usage)?
        }
    };
    let shape = map.shape();
    let cfg = CertifyConfig {
        k_min: st.get(a.k_min, "k-min", 1)?,
        k_max: st.get(a.k_max, "k-max", shape.n())?,
        trials: st.get(a.trials, "trials", 64)?,
        seed,
        workers,
    };
    let cert = certify(&map, &cfg).map_err(|e| CliError::Failed(e.to_string()))?;
    let probes = certificate_probes(shape, &cfg).map_err(usage)?;
    let audit = audit_distortion(&map, &probes, workers).map_err(|e| CliError::Failed(e.to_string()))?;
    let pass = cert.lower_bound <= audit.distortion + 3.0 * cert.se;
    s.say(format!(
        "map={} op_edge={} lower_bound={} se={} audited_distortion={} pass={pass}",
        cert.map,
        crate::experiments::fmt_decimal(cert.op_edge),
        crate::experiments::fmt_decimal(cert.lower_bound),
        crate::experiments::fmt_decimal(cert.se),
        crate::experiments::fmt_decimal(audit.distortion)
    ))?;
    if let Some(path) = a.out {
        let doc = CertifyDocument {
            schema_version: MANIFEST_SCHEMA_VERSION,
            seed,
            certificate: &cert,
            audited_distortion: audit.distortion,
            audited_probes: audit.probes,
            pass,
        };
        let text = serde_json::to_string_pretty(&doc).map_err(usage)? + "\n";
        s.write_file(&path, &text)?;
    }
    if pass {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "certified lower bound {} exceeds audited distortion {} + 3 SE",
            cert.lower_bound, audit.distortion
        )))
    }
}
