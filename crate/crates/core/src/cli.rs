//! Command-line front end.
//!
//! Subcommands: `simulate`, `noise`, `resources`, `compare`, `verify`.
//! Every report is a table with a fixed column order, written as CSV or as a
//! JSON array of objects. Floats are rendered with 12 significant digits.
//!
//! Query spec grammar: comma-separated `BITS:RE[:IM]` terms, for example
//! `010:0.7071,101:0.7071` or `00:0.5:0.5,11:0.5:-0.5`. A missing `IM` is 0.
//! Queries are renormalized unless `--strict-norm` is given.
//!
//! Memory sources: an inline bit string (`00100000`, cell 0 first), an inline
//! JSON list (`[0,0,1,0]`), the word `random` (drawn from the seed), or a path
//! to a file holding either form.
//!
//! Exit codes: 0 on success, 1 on runtime failure (I/O, failed verification),
//! 2 on usage errors (bad flags, malformed query or memory).

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::bucket_brigade::{BucketBrigade, Fault, InteractionCounting};
use crate::error::{QramError, Result};
use crate::fanout::fanout_run;
use crate::model::{Address, MemoryArray, NodeId, QuerySuperposition, TreeGeometry};
use crate::noise::{
    dephasing_fidelity, expected_fidelity, monte_carlo_fidelity, single_element_mean_fidelity,
    Architecture, DephasedSet, Estimate, NoiseSpec, SamplingMode,
};
use crate::oracle::{
    oracle_compare, oracle_dephasing_fidelity, oracle_full_query, MAX_FANOUT_ORACLE_BITS,
    MAX_ORACLE_BITS,
};
use crate::resources::{bb_interaction_count_with, resource_report};
use crate::rng::{substream, StreamTag, RNG_ALGORITHM};

/// Directory used for reports when `--output` is not given.
pub const OUTPUT_DIR_ENV: &str = "BBQRAM_OUTPUT_DIR";

const SIGNIFICANT_DIGITS: usize = 12;
const QUERY_TOLERANCE: f64 = 1e-12;
const RESET_TOLERANCE: f64 = 1e-10;
const DEPHASING_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(
    name = "bbqram",
    version,
    about = "Bucket-brigade and fanout qRAM simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one query and list the (amplitude, address, data bit) triples.
    Simulate(SimulateArgs),
    /// Fidelity under dephasing: exact expectation plus Monte Carlo.
    Noise(NoiseArgs),
    /// Per-call resource counters.
    Resources(ResourcesArgs),
    /// Side-by-side scan of both architectures.
    Compare(CompareArgs),
    /// Check the sparse simulators against the dense oracle.
    Verify(VerifyArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Noise(_) => "noise",
            Command::Resources(_) => "resources",
            Command::Compare(_) => "compare",
            Command::Verify(_) => "verify",
        }
    }

    fn output(&self) -> &OutputArgs {
        match self {
            Command::Simulate(a) => &a.output,
            Command::Noise(a) => &a.output,
            Command::Resources(a) => &a.output,
            Command::Compare(a) => &a.output,
            Command::Verify(a) => &a.output,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output file; defaults to $BBQRAM_OUTPUT_DIR/<command>.<ext>, else stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(multiple = false)]
struct QueryArgs {
    /// Explicit superposition, `BITS:RE[:IM],...`.
    #[arg(long)]
    query: Option<String>,
    /// Equal superposition over all cells (the default).
    #[arg(long)]
    uniform: bool,
    /// R distinct random addresses with random complex amplitudes.
    #[arg(long, value_name = "R")]
    random_query: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SamplingArg {
    Independent,
    FixedFraction,
}

impl From<SamplingArg> for SamplingMode {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::Independent => SamplingMode::Independent,
            SamplingArg::FixedFraction => SamplingMode::FixedFraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CountingArg {
    All,
    EncodeOnly,
}

impl From<CountingArg> for InteractionCounting {
    fn from(c: CountingArg) -> Self {
        match c {
            CountingArg::All => InteractionCounting::AllEncounters,
            CountingArg::EncodeOnly => InteractionCounting::EncodeOnly,
        }
    }
}

fn address_bits(s: &str) -> std::result::Result<u32, String> {
    let n: u32 = s.parse().map_err(|e| format!("{e}"))?;
    TreeGeometry::new(n)
        .map(|g| g.n())
        .map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_parser = address_bits)]
    n: u32,
    #[arg(long, default_value = "bucket-brigade")]
    arch: Architecture,
    #[arg(long)]
    memory: String,
    #[command(flatten)]
    query: QueryArgs,
    /// Reject queries whose norm is not 1 instead of rescaling them.
    #[arg(long)]
    strict_norm: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct NoiseArgs {
    #[arg(long, value_parser = address_bits)]
    n: u32,
    #[arg(long, default_value = "bucket-brigade")]
    arch: Architecture,
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long)]
    strict_norm: bool,
    /// Dephasing rates, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01])]
    epsilon: Vec<f64>,
    /// Monte Carlo trials; 0 reports the exact value only.
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, value_enum, default_value_t = SamplingArg::Independent)]
    sampling: SamplingArg,
    /// Exactly one element, chosen uniformly, is dephased.
    #[arg(long, conflicts_with_all = ["levels", "epsilon", "sampling"])]
    single_switch: bool,
    /// Dephase the first element of each of the top K levels.
    #[arg(long, value_name = "K", conflicts_with_all = ["epsilon", "sampling", "trials"])]
    levels: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct ResourcesArgs {
    #[arg(long, value_parser = address_bits)]
    n: u32,
    /// Scan n..=N_MAX instead of a single size.
    #[arg(long, value_parser = address_bits)]
    n_max: Option<u32>,
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long)]
    strict_norm: bool,
    #[arg(long, value_enum, default_value_t = CountingArg::All)]
    counting: CountingArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long, value_parser = address_bits, default_value_t = 2)]
    n_min: u32,
    #[arg(long, value_parser = address_bits, default_value_t = 10)]
    n_max: u32,
    /// Uniform queries unless --random-query is given.
    #[arg(long, value_name = "R")]
    random_query: Option<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.01])]
    epsilon: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Random (query, memory) cases per address width.
    #[arg(long, default_value_t = 200)]
    cases: u64,
    /// Break one gate of the sparse simulator: `cnot:CELL` or `encode:LEVEL,INDEX`.
    #[arg(long, value_parser = parse_fault)]
    inject_fault: Option<Fault>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: OutputArgs,
}

pub fn parse_fault(text: &str) -> std::result::Result<Fault, String> {
    let bad = || format!("expected cnot:CELL or encode:LEVEL,INDEX, got {text:?}");
    let (kind, rest) = text.split_once(':').ok_or_else(bad)?;
    match kind {
        "cnot" => rest.parse().map(Fault::DropMemoryCnot).map_err(|_| bad()),
        "encode" => {
            let (level, index) = rest.split_once(',').ok_or_else(bad)?;
            let level = level.parse().map_err(|_| bad())?;
            let index = index.parse().map_err(|_| bad())?;
            Ok(Fault::FlipEncoding(NodeId::new(level, index)))
        }
        _ => Err(bad()),
    }
}

fn fault_label(f: Option<Fault>) -> String {
    match f {
        None => "none".into(),
        Some(Fault::DropMemoryCnot(c)) => format!("cnot:{c}"),
        Some(Fault::FlipEncoding(node)) => format!("encode:{},{}", node.level, node.index),
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Parses `argv` (program name first) and runs the command. Returns the exit code.
pub fn parse_and_run<I: IntoIterator<Item = String>>(argv: I) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("bbqram: {e}");
            e.code()
        }
    }
}

fn run(cli: Cli) -> std::result::Result<(), CliError> {
    let (report, failed) = match &cli.command {
        Command::Simulate(a) => (simulate(a)?, false),
        Command::Noise(a) => (noise(a)?, false),
        Command::Resources(a) => (resources(a)?, false),
        Command::Compare(a) => (compare(a)?, false),
        Command::Verify(a) => {
            let report = verify(a)?;
            let failed = report
                .rows
                .iter()
                .any(|r| r.last() == Some(&Cell::Bool(false)));
            (report, failed)
        }
    };
    let out = cli.command.output();
    let path = out.output.clone().or_else(|| {
        std::env::var_os(OUTPUT_DIR_ENV).map(|dir| {
            PathBuf::from(dir).join(format!("{}.{}", cli.command.name(), out.format.extension()))
        })
    });
    emit_report(&report, out.format, path.as_deref()).map_err(runtime)?;
    if failed {
        return Err(CliError::Runtime("verification failed".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_decimal(*v),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Cell::Int(v) => (*v).into(),
            Cell::Float(v) => format_decimal(*v)
                .parse::<f64>()
                .ok()
                .and_then(serde_json::Number::from_f64)
                .map_or(serde_json::Value::Null, serde_json::Value::Number),
            Cell::Text(s) => s.clone().into(),
            Cell::Bool(b) => (*b).into(),
        }
    }
}

/// A table with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Report {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }
}

/// Renders `x` with 12 significant digits, trailing zeros removed.
pub fn format_decimal(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-6..16).contains(&exp) {
        let rounded: f64 = sci.parse().expect("round trip");
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{rounded:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(mut s: String) -> String {
    if s.contains('.') {
        let keep = s.trim_end_matches('0').trim_end_matches('.').len();
        s.truncate(keep);
    }
    s
}

pub fn render_report(report: &Report, format: Format) -> Result<String> {
    let width = report.columns.len();
    if let Some(row) = report.rows.iter().find(|r| r.len() != width) {
        return Err(QramError::Dimension {
            what: "report row",
            expected: width as u64,
            found: row.len() as u64,
        });
    }
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| QramError::Validation(e.to_string());
            w.write_record(&report.columns).map_err(io)?;
            for row in &report.rows {
                w.write_record(row.iter().map(Cell::render)).map_err(io)?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| QramError::Validation(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| QramError::Validation(e.to_string()))
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = report
                .rows
                .iter()
                .map(|row| {
                    let obj: serde_json::Map<String, serde_json::Value> = report
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(k, v)| (k.to_string(), v.to_json()))
                        .collect();
                    serde_json::Value::Object(obj)
                })
                .collect();
            let mut text = serde_json::to_string_pretty(&rows)
                .map_err(|e| QramError::Validation(e.to_string()))?;
            text.push('\n');
            Ok(text)
        }
    }
}

/// Writes the report to `path`, or to stdout when `path` is `None`.
pub fn emit_report(report: &Report, format: Format, path: Option<&Path>) -> Result<()> {
    let text = render_report(report, format)?;
    let io = |p: &Path, e: std::io::Error| QramError::Validation(format!("{}: {e}", p.display()));
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
            }
            std::fs::write(p, text).map_err(|e| io(p, e))
        }
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| QramError::Validation(format!("stdout: {e}"))),
    }
}

// ---------------------------------------------------------------------------
// Inputs

pub fn parse_query_spec(
    text: &str,
    g: TreeGeometry,
    renormalize: bool,
) -> Result<QuerySuperposition> {
    let bad = |term: &str| QramError::Parse(format!("query term {term:?}: expected BITS:RE[:IM]"));
    let number = |s: &str, term: &str| -> Result<f64> {
        let v: f64 = s.trim().parse().map_err(|_| bad(term))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad(term))
        }
    };
    let mut branches = Vec::new();
    for term in text.split(',') {
        let parts: Vec<&str> = term.trim().split(':').collect();
        let (bits, re, im) = match parts.as_slice() {
            [b, re] => (*b, number(re, term)?, 0.0),
            [b, re, im] => (*b, number(re, term)?, number(im, term)?),
            _ => return Err(bad(term)),
        };
        let address: Address = bits.parse()?;
        branches.push((Complex64::new(re, im), address));
    }
    QuerySuperposition::new(branches, g, renormalize)
}

/// Inverse of [`parse_query_spec`]; values are printed in shortest round-trip form.
pub fn render_query_spec(q: &QuerySuperposition) -> String {
    q.branches()
        .iter()
        .map(|(a, addr)| {
            if a.im == 0.0 {
                format!("{addr}:{}", a.re)
            } else {
                format!("{addr}:{}:{}", a.re, a.im)
            }
        })
        .collect::<Vec<_>>()
        .join(",")
}

/// Resolves `--memory`: inline bits, inline JSON list, `random`, or a file path.
pub fn load_memory(source: &str, g: TreeGeometry, seed: u64) -> Result<MemoryArray> {
    let s = source.trim();
    if s == "random" {
        return Ok(MemoryArray::random(
            g,
            &mut substream(seed, StreamTag::Memory, 0),
        ));
    }
    let inline = s.starts_with('[') || (!s.is_empty() && s.chars().all(|c| c == '0' || c == '1'));
    if inline {
        return MemoryArray::parse(s, g);
    }
    let text = std::fs::read_to_string(s)
        .map_err(|e| QramError::Parse(format!("memory file {s}: {e}")))?;
    MemoryArray::parse(text.trim(), g)
}

fn build_query(
    args: &QueryArgs,
    g: TreeGeometry,
    strict: bool,
    seed: u64,
) -> std::result::Result<QuerySuperposition, CliError> {
    if let Some(spec) = &args.query {
        return parse_query_spec(spec, g, !strict).map_err(usage);
    }
    if let Some(r) = args.random_query {
        return random_query(g, r, seed);
    }
    QuerySuperposition::uniform(g).map_err(usage)
}

/// `r` is clamped to the number of cells.
fn random_query(
    g: TreeGeometry,
    r: usize,
    seed: u64,
) -> std::result::Result<QuerySuperposition, CliError> {
    if r == 0 {
        return Err(usage("--random-query needs at least one branch"));
    }
    let r = (r as u64).min(g.cells()) as usize;
    let mut rng = substream(seed, StreamTag::Query, g.n() as u64);
    QuerySuperposition::random(g, r, &mut rng).map_err(usage)
}

fn geometry(n: u32) -> std::result::Result<TreeGeometry, CliError> {
    TreeGeometry::new(n).map_err(usage)
}

fn check_rates(eps: &[f64]) -> std::result::Result<(), CliError> {
    match eps.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        Some(e) => Err(usage(QramError::InvalidRate(*e))),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Commands

fn simulate(a: &SimulateArgs) -> std::result::Result<Report, CliError> {
    let g = geometry(a.n)?;
    let m = load_memory(&a.memory, g, a.seed).map_err(usage)?;
    let q = build_query(&a.query, g, a.strict_norm, a.seed)?;
    let (outcome, events) = match a.arch {
        Architecture::BucketBrigade => {
            let run = BucketBrigade::default().run(&q, &m).map_err(runtime)?;
            (run.outcome, run.interactions)
        }
        Architecture::Fanout => {
            let run = fanout_run(&q, &m).map_err(runtime)?;
            (run.outcome, run.activations)
        }
    };
    let mut report = Report::new(&[
        "arch",
        "n",
        "seed",
        "address",
        "cell",
        "re",
        "im",
        "dataBit",
        "gateEvents",
    ]);
    for p in outcome.pairs {
        report.push(vec![
            a.arch.to_string().into(),
            a.n.into(),
            a.seed.into(),
            p.address.to_string().into(),
            p.address.value().into(),
            p.amplitude.re.into(),
            p.amplitude.im.into(),
            (p.data_bit as u64).into(),
            events.into(),
        ]);
    }
    Ok(report)
}

const NOISE_COLUMNS: [&str; 11] = [
    "arch", "n", "r", "epsilon", "trials", "seed", "mean", "stderr", "exact", "sampling", "rng",
];

fn noise(a: &NoiseArgs) -> std::result::Result<Report, CliError> {
    let g = geometry(a.n)?;
    let q = build_query(&a.query, g, a.strict_norm, a.seed)?;
    let m = g.nodes();
    let mut report = Report::new(&NOISE_COLUMNS);
    let row = |eps: f64, trials: u64, est: Estimate, exact: f64, sampling: &str| -> Vec<Cell> {
        vec![
            a.arch.to_string().into(),
            a.n.into(),
            q.len().into(),
            eps.into(),
            trials.into(),
            a.seed.into(),
            est.mean.into(),
            est.stderr.into(),
            exact.into(),
            sampling.into(),
            RNG_ALGORITHM.into(),
        ]
    };
    let estimate = |eps: f64, mode: SamplingMode, exact: f64| {
        if a.trials == 0 {
            return Ok(Estimate {
                mean: exact,
                stderr: 0.0,
            });
        }
        let spec = NoiseSpec::new(eps, a.seed, a.trials)
            .map_err(usage)?
            .with_mode(mode);
        monte_carlo_fidelity(a.arch, &q, &spec).map_err(runtime)
    };

    if let Some(k) = a.levels {
        if k > a.n {
            return Err(usage(format!("--levels {k} exceeds n = {}", a.n)));
        }
        let d = DephasedSet::new(a.arch, (0..k).map(|level| NodeId::new(level, 0)));
        let exact = dephasing_fidelity(&q, &d).map_err(runtime)?;
        let est = Estimate {
            mean: exact,
            stderr: 0.0,
        };
        report.push(row(k as f64 / m as f64, 0, est, exact, "fixed-set"));
    } else if a.single_switch {
        let eps = 1.0 / m as f64;
        let exact = single_element_mean_fidelity(a.arch, &q).map_err(runtime)?;
        let est = estimate(eps, SamplingMode::FixedFraction, exact)?;
        report.push(row(eps, a.trials, est, exact, "single-element"));
    } else {
        check_rates(&a.epsilon)?;
        let mode = SamplingMode::from(a.sampling);
        let label = match a.sampling {
            SamplingArg::Independent => "independent",
            SamplingArg::FixedFraction => "fixed-fraction",
        };
        for &eps in &a.epsilon {
            let exact = expected_fidelity(a.arch, &q, eps).map_err(runtime)?;
            let est = estimate(eps, mode, exact)?;
            report.push(row(eps, a.trials, est, exact, label));
        }
    }
    Ok(report)
}

fn resources(a: &ResourcesArgs) -> std::result::Result<Report, CliError> {
    let n_max = a.n_max.unwrap_or(a.n);
    if n_max < a.n {
        return Err(usage(format!("--n-max {n_max} is below --n {}", a.n)));
    }
    if a.query.query.is_some() && n_max != a.n {
        return Err(usage(
            "--query fixes the width; it cannot be combined with a scan",
        ));
    }
    let counting = InteractionCounting::from(a.counting);
    let label = match a.counting {
        CountingArg::All => "all",
        CountingArg::EncodeOnly => "encode-only",
    };
    let mut report = Report::new(&[
        "n",
        "N",
        "r",
        "seed",
        "bbInteractions",
        "bbActiveNodes",
        "bbEntangledNodes",
        "fanoutActivations",
        "fanoutEntangledSwitches",
        "counting",
    ]);
    let rows = (a.n..=n_max)
        .into_par_iter()
        .map(|n| {
            let g = geometry(n)?;
            let q = build_query(&a.query, g, a.strict_norm, a.seed)?;
            let rep = resource_report(&q).map_err(runtime)?;
            let interactions = bb_interaction_count_with(g, counting).map_err(runtime)?;
            Ok(vec![
                rep.n.into(),
                rep.cells.into(),
                rep.r.into(),
                a.seed.into(),
                interactions.into(),
                rep.bb_active_nodes.into(),
                rep.bb_entangled_nodes.into(),
                rep.fanout_activations.into(),
                rep.fanout_entangled_switches.into(),
                label.into(),
            ])
        })
        .collect::<std::result::Result<Vec<_>, CliError>>()?;
    report.rows = rows;
    Ok(report)
}

fn compare(a: &CompareArgs) -> std::result::Result<Report, CliError> {
    if a.n_max < a.n_min {
        return Err(usage(format!(
            "--n-max {} is below --n-min {}",
            a.n_max, a.n_min
        )));
    }
    check_rates(&a.epsilon)?;
    let mut report = Report::new(&[
        "n",
        "N",
        "r",
        "epsilon",
        "seed",
        "bbExpectedFidelity",
        "fanoutExpectedFidelity",
        "bbInteractions",
        "fanoutActivations",
        "bbEntangledNodes",
        "fanoutEntangledSwitches",
    ]);
    let points: Vec<(u32, f64)> = (a.n_min..=a.n_max)
        .flat_map(|n| a.epsilon.iter().map(move |&e| (n, e)))
        .collect();
    let rows = points
        .into_par_iter()
        .map(|(n, eps)| {
            let g = geometry(n)?;
            let q = match a.random_query {
                Some(r) => random_query(g, r, a.seed)?,
                None => QuerySuperposition::uniform(g).map_err(usage)?,
            };
            let rep = resource_report(&q).map_err(runtime)?;
            let bb = expected_fidelity(Architecture::BucketBrigade, &q, eps).map_err(runtime)?;
            let fo = expected_fidelity(Architecture::Fanout, &q, eps).map_err(runtime)?;
            Ok(vec![
                n.into(),
                g.cells().into(),
                q.len().into(),
                eps.into(),
                a.seed.into(),
                bb.into(),
                fo.into(),
                rep.bb_interactions.into(),
                rep.fanout_activations.into(),
                rep.bb_entangled_nodes.into(),
                rep.fanout_entangled_switches.into(),
            ])
        })
        .collect::<std::result::Result<Vec<_>, CliError>>()?;
    report.rows = rows;
    Ok(report)
}

fn random_case(g: TreeGeometry, seed: u64, case: u64) -> Result<QuerySuperposition> {
    let mut rng = substream(seed, StreamTag::Query, (g.n() as u64) << 32 | case);
    let r = rng.random_range(1..=g.cells()) as usize;
    QuerySuperposition::random(g, r, &mut rng)
}

struct Check {
    name: &'static str,
    n: u32,
    cases: u64,
    deviation: f64,
    tolerance: f64,
}

/// Runs the oracle equivalence suite. Each case uses its own substreams.
fn verify_checks(cases: u64, seed: u64, fault: Option<Fault>) -> Result<Vec<Check>> {
    let mut sim = BucketBrigade::default();
    if let Some(f) = fault {
        sim = sim.with_fault(f);
    }
    let mut checks = Vec::new();
    for n in 1..=MAX_ORACLE_BITS {
        let g = TreeGeometry::new(n)?;
        let patterns = 1u64 << g.cells();
        let results = (0..cases)
            .into_par_iter()
            .map(|c| {
                let q = random_case(g, seed, c)?;
                // Small trees cycle through every memory; larger ones draw at random.
                let m = if n <= 2 {
                    MemoryArray::from_pattern(c % patterns, g)
                } else {
                    MemoryArray::random(g, &mut substream(seed, StreamTag::Memory, c))
                };
                let outcome = sim.run(&q, &m)?.outcome;
                let sv = oracle_full_query(&q, &m)?;
                Ok((
                    oracle_compare(&outcome, &sv)?,
                    1.0 - sv.tree_wait_fidelity(),
                ))
            })
            .collect::<Result<Vec<(f64, f64)>>>()?;
        let max = |f: fn(&(f64, f64)) -> f64| results.iter().map(f).fold(0.0, f64::max);
        checks.push(Check {
            name: "query-equivalence",
            n,
            cases,
            deviation: max(|r| r.0),
            tolerance: QUERY_TOLERANCE,
        });
        checks.push(Check {
            name: "tree-reset",
            n,
            cases,
            deviation: max(|r| r.1),
            tolerance: RESET_TOLERANCE,
        });
    }
    for (arch, name, max_n) in [
        (Architecture::BucketBrigade, "bb-dephasing", MAX_ORACLE_BITS),
        (
            Architecture::Fanout,
            "fanout-dephasing",
            MAX_FANOUT_ORACLE_BITS,
        ),
    ] {
        for n in 1..=max_n {
            let g = TreeGeometry::new(n)?;
            let deviation = (0..cases)
                .into_par_iter()
                .map(|c| {
                    let q = random_case(g, seed, c)?;
                    let mut rng = substream(seed, StreamTag::Noise, (n as u64) << 32 | c);
                    let d = DephasedSet::new(arch, g.all_nodes().filter(|_| rng.random_bool(0.5)));
                    Ok((dephasing_fidelity(&q, &d)? - oracle_dephasing_fidelity(&q, &d)?).abs())
                })
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            checks.push(Check {
                name,
                n,
                cases,
                deviation,
                tolerance: DEPHASING_TOLERANCE,
            });
        }
    }
    Ok(checks)
}

fn verify(a: &VerifyArgs) -> std::result::Result<Report, CliError> {
    if a.cases == 0 {
        return Err(usage("--cases must be positive"));
    }
    let checks = verify_checks(a.cases, a.seed, a.inject_fault).map_err(runtime)?;
    let mut report = Report::new(&[
        "check",
        "n",
        "cases",
        "seed",
        "fault",
        "maxDeviation",
        "tolerance",
        "passed",
    ]);
    for c in checks {
        report.push(vec![
            c.name.into(),
            c.n.into(),
            c.cases.into(),
            a.seed.into(),
            fault_label(a.inject_fault).into(),
            c.deviation.into(),
            c.tolerance.into(),
            (c.deviation <= c.tolerance).into(),
        ]);
    }
    Ok(report)
}
