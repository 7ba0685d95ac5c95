//! Command-line front end and the file formats it reads and writes.
//!
//! * Channel files: a small labelled text format, see [`parse_channel`].
//! * Experiment configs and run manifests: flat `key = value` lines with
//!   dotted keys (valid TOML), see [`parse_config`].
//! * Results: one CSV row per `(K, budget, protocol)`, see [`CSV_HEADER`].

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};

use crate::dualsolve::{solve_detailed, SolverSettings, Solution, Termination};
use crate::error::{Error, Result};
use crate::model::{Allocation, ChannelRealization, PairMode, Protocol};
use crate::simkit::{
    self, CellReport, ExperimentConfig, ExperimentReport, GeometryConfig, ProtocolStats, RatioStats,
    RealizationKey,
};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NONCONVERGED: i32 = 2;

pub const CSV_HEADER: [&str; 9] = [
    "K",
    "snr_db",
    "protocol",
    "mean_rate_bpos",
    "stderr",
    "mean_ratio",
    "stderr_ratio",
    "realizations",
    "nonconverged",
];

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Parser)]
#[command(name = "relay-ra", version, about = "Resource allocation for DF-relay-aided downlink OFDMA")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Novel,
    Benchmark,
    Both,
}

impl ProtocolArg {
    fn protocols(self) -> Vec<Protocol> {
        match self {
            ProtocolArg::Novel => vec![Protocol::Novel],
            ProtocolArg::Benchmark => vec![Protocol::Benchmark],
            ProtocolArg::Both => Protocol::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one channel file and print the allocation.
    Solve {
        channel: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        protocol: ProtocolArg,
        /// Power budget Ptot/σ² (linear).
        #[arg(long, conflicts_with = "snr_db", required_unless_present = "snr_db")]
        p_tot: Option<f64>,
        /// Power budget Ptot/σ² in dB.
        #[arg(long)]
        snr_db: Option<f64>,
        /// Power tolerance as a fraction of the budget.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Run a Monte Carlo experiment and write results.csv plus a manifest.
    Experiment {
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
        /// Power tolerance as a fraction of the budget.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
    /// Draw one channel realization from the experiment geometry and write it as a channel file.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, short = 'k', default_value_t = 8)]
        subcarriers: usize,
        #[arg(long, short = 'u', default_value_t = 5)]
        users: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Full decimal precision for round-tripping through text.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// Channel files
// ---------------------------------------------------------------------------

/// Parses a channel file:
///
/// ```text
/// # comments and blank lines are ignored
/// K 2
/// U 1
/// g_sr
/// 4.0 0.5
/// g_su
/// 1.0 0.2      # one row per user
/// g_ru
/// 3.0 0.7      # one row per user
/// ```
pub fn parse_channel(text: &str) -> Result<ChannelRealization> {
    let mut k: Option<usize> = None;
    let mut u: Option<usize> = None;
    let mut g_sr: Option<Vec<f64>> = None;
    let mut g_su: Vec<Vec<f64>> = Vec::new();
    let mut g_ru: Vec<Vec<f64>> = Vec::new();
    #[derive(PartialEq)]
    enum Block {
        None,
        Sr,
        Su,
        Ru,
    }
    let mut block = Block::None;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line, msg };
        let mut words = content.split_whitespace();
        let head = words.next().unwrap_or_default();
        match head {
            "K" | "U" => {
                let value: usize = words
                    .next()
                    .ok_or_else(|| err(format!("missing value after {head}")))?
                    .parse()
                    .map_err(|e| err(format!("bad {head} value: {e}")))?;
                if words.next().is_some() {
                    return Err(err(format!("trailing text after {head}")));
                }
                if value == 0 {
                    return Err(err(format!("{head} must be positive")));
                }
                let slot = if head == "K" { &mut k } else { &mut u };
                if slot.replace(value).is_some() {
                    return Err(err(format!("{head} given twice")));
                }
            }
            "g_sr" | "g_su" | "g_ru" => {
                if words.next().is_some() {
                    return Err(err(format!("block label {head} must be alone on its line")));
                }
                if k.is_none() || u.is_none() {
                    return Err(err("K and U must precede the gain blocks".into()));
                }
                block = match head {
                    "g_sr" if g_sr.is_none() => Block::Sr,
                    "g_su" if g_su.is_empty() => Block::Su,
                    "g_ru" if g_ru.is_empty() => Block::Ru,
                    _ => return Err(err(format!("block {head} given twice"))),
                };
            }
            _ => {
                let kk = k.ok_or_else(|| err("K must be given first".into()))?;
                let uu = u.ok_or_else(|| err("U must be given first".into()))?;
                let row: Vec<f64> = content
                    .split_whitespace()
                    .map(|w| w.parse::<f64>().map_err(|e| err(format!("bad number '{w}': {e}"))))
                    .collect::<Result<_>>()?;
                if row.len() != kk {
                    return Err(err(format!("expected {kk} values, found {}", row.len())));
                }
                if let Some(bad) = row.iter().find(|g| !g.is_finite() || **g < 0.0) {
                    return Err(err(format!("gain {bad} is negative or not finite")));
                }
                match block {
                    Block::None => return Err(err("values outside of a gain block".into())),
                    Block::Sr => {
                        if g_sr.replace(row).is_some() {
                            return Err(err("g_sr takes exactly one row".into()));
                        }
                    }
                    Block::Su | Block::Ru => {
                        let rows = if block == Block::Su { &mut g_su } else { &mut g_ru };
                        if rows.len() == uu {
                            return Err(err(format!("block has more than U = {uu} rows")));
                        }
                        rows.push(row);
                    }
                }
            }
        }
    }
    let end = |msg: &str| Error::Parse { line: last_line, msg: msg.to_string() };
    let uu = u.ok_or_else(|| end("missing U"))?;
    k.ok_or_else(|| end("missing K"))?;
    let g_sr = g_sr.ok_or_else(|| end("missing g_sr block"))?;
    if g_su.len() != uu || g_ru.len() != uu {
        return Err(end(&format!("g_su and g_ru need {uu} rows each, found {} and {}", g_su.len(), g_ru.len())));
    }
    ChannelRealization::new(g_sr, g_su, g_ru)
}

pub fn format_channel(channel: &ChannelRealization) -> String {
    let row = |r: &[f64]| r.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" ");
    let mut s = String::new();
    let _ = writeln!(s, "K {}", channel.num_subcarriers());
    let _ = writeln!(s, "U {}", channel.num_users());
    let _ = writeln!(s, "g_sr\n{}", row(channel.g_sr_row()));
    s.push_str("g_su\n");
    for r in channel.g_su_rows() {
        let _ = writeln!(s, "{}", row(r));
    }
    s.push_str("g_ru\n");
    for r in channel.g_ru_rows() {
        let _ = writeln!(s, "{}", row(r));
    }
    s
}

// ---------------------------------------------------------------------------
// Experiment configs
// ---------------------------------------------------------------------------

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn as_f64(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::invalid(format!("{key}: expected a number"))),
    }
}

fn as_usize(key: &str, v: &toml::Value) -> Result<usize> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(Error::invalid(format!("{key}: expected a non-negative integer"))),
    }
}

/// Arrays as-is; a bare scalar counts as a one-element list.
fn as_list(v: &toml::Value) -> Vec<&toml::Value> {
    match v {
        toml::Value::Array(a) => a.iter().collect(),
        single => vec![single],
    }
}

/// Parses an experiment config (or a run manifest). Keys not given keep
/// their defaults; unknown keys are rejected.
///
/// ```text
/// experiment.subcarriers = [4, 16, 64]
/// experiment.snr_db = [20]
/// experiment.protocols = ["novel", "benchmark"]
/// geometry.relay_x = 50.0
/// ```
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0);
        Error::Parse { line, msg: e.message().to_string() }
    })?;
    let mut entries = Vec::new();
    flatten("", &table, &mut entries);

    let mut cfg = ExperimentConfig::default();
    for (key, v) in &entries {
        let key = key.as_str();
        let g = &mut cfg.geometry;
        match key {
            "geometry.source_x" => g.source_position.x = as_f64(key, v)?,
            "geometry.source_y" => g.source_position.y = as_f64(key, v)?,
            "geometry.relay_x" => g.relay_position.x = as_f64(key, v)?,
            "geometry.relay_y" => g.relay_position.y = as_f64(key, v)?,
            "geometry.center_x" => g.user_region_center.x = as_f64(key, v)?,
            "geometry.center_y" => g.user_region_center.y = as_f64(key, v)?,
            "geometry.radius" => g.user_region_radius = as_f64(key, v)?,
            "geometry.path_loss_exponent" => g.path_loss_exponent = as_f64(key, v)?,
            "geometry.num_taps" => g.num_taps = as_usize(key, v)?,
            "geometry.reference_gain" => g.reference_gain = as_f64(key, v)?,
            "experiment.subcarriers" => {
                cfg.num_subcarriers = as_list(v).into_iter().map(|x| as_usize(key, x)).collect::<Result<_>>()?
            }
            "experiment.users" => cfg.num_users = as_usize(key, v)?,
            "experiment.snr_db" => {
                cfg.snr_budget_db = as_list(v).into_iter().map(|x| as_f64(key, x)).collect::<Result<_>>()?
            }
            "experiment.realizations" => cfg.num_realizations = as_usize(key, v)?,
            "experiment.protocols" => {
                cfg.protocols = as_list(v)
                    .into_iter()
                    .map(|x| match x {
                        toml::Value::String(s) => s.parse::<Protocol>(),
                        _ => Err(Error::invalid(format!("{key}: expected protocol names"))),
                    })
                    .collect::<Result<_>>()?
            }
            "experiment.seed" => match v {
                toml::Value::Integer(i) => cfg.seed = *i as u64,
                toml::Value::String(s) => {
                    cfg.seed = s.parse().map_err(|_| Error::invalid(format!("{key}: bad seed '{s}'")))?
                }
                _ => return Err(Error::invalid(format!("{key}: expected an integer"))),
            },
            "experiment.workers" => cfg.workers = Some(as_usize(key, v)?),
            "solver.relative_epsilon" => cfg.solver.relative_epsilon = as_f64(key, v)?,
            "solver.max_bisection_iters" => cfg.solver.max_bisection_iters = as_usize(key, v)?,
            "solver.bracket_growth" => cfg.solver.bracket_growth = as_f64(key, v)?,
            k if k.starts_with("manifest.") => {}
            other => return Err(Error::invalid(format!("unknown config key '{other}'"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Every setting of `cfg`, one dotted key per line, readable by [`parse_config`].
pub fn format_config(cfg: &ExperimentConfig) -> String {
    let list = |v: Vec<String>| format!("[{}]", v.join(", "));
    let g = &cfg.geometry;
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    put("geometry.source_x", fmt_f64(g.source_position.x));
    put("geometry.source_y", fmt_f64(g.source_position.y));
    put("geometry.relay_x", fmt_f64(g.relay_position.x));
    put("geometry.relay_y", fmt_f64(g.relay_position.y));
    put("geometry.center_x", fmt_f64(g.user_region_center.x));
    put("geometry.center_y", fmt_f64(g.user_region_center.y));
    put("geometry.radius", fmt_f64(g.user_region_radius));
    put("geometry.path_loss_exponent", fmt_f64(g.path_loss_exponent));
    put("geometry.num_taps", g.num_taps.to_string());
    put("geometry.reference_gain", fmt_f64(g.reference_gain));
    put("experiment.subcarriers", list(cfg.num_subcarriers.iter().map(|k| k.to_string()).collect()));
    put("experiment.users", cfg.num_users.to_string());
    put("experiment.snr_db", list(cfg.snr_budget_db.iter().map(|d| fmt_f64(*d)).collect()));
    put("experiment.realizations", cfg.num_realizations.to_string());
    put("experiment.protocols", list(cfg.protocols.iter().map(|p| format!("\"{p}\"")).collect()));
    // Seeds are u64; quoted so values above i64::MAX survive.
    put("experiment.seed", format!("\"{}\"", cfg.seed));
    if let Some(w) = cfg.workers {
        put("experiment.workers", w.to_string());
    }
    put("solver.relative_epsilon", fmt_f64(cfg.solver.relative_epsilon));
    put("solver.max_bisection_iters", cfg.solver.max_bisection_iters.to_string());
    put("solver.bracket_growth", fmt_f64(cfg.solver.bracket_growth));
    s
}

/// Resolved config plus provenance of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = format_config(&self.config);
        let _ = writeln!(s, "manifest.tool_version = \"{}\"", self.tool_version);
        let _ = writeln!(s, "manifest.timestamp = {}", self.timestamp);
        let outputs: Vec<String> =
            self.outputs.iter().map(|p| format!("\"{}\"", p.display().to_string().replace('\\', "/"))).collect();
        let _ = writeln!(s, "manifest.outputs = [{}]", outputs.join(", "));
        s
    }
}

// ---------------------------------------------------------------------------
// Results CSV
// ---------------------------------------------------------------------------

fn cell_records(cell: &CellReport) -> Vec<Vec<String>> {
    let (ratio, ratio_se) = match &cell.ratio {
        Some(r) => (fmt_f64(r.mean), fmt_f64(r.stderr)),
        None => (String::new(), String::new()),
    };
    cell.protocols
        .iter()
        .map(|s| {
            vec![
                cell.num_subcarriers.to_string(),
                fmt_f64(cell.snr_db),
                s.protocol.to_string(),
                fmt_f64(s.mean_rate),
                fmt_f64(s.stderr),
                ratio.clone(),
                ratio_se.clone(),
                s.realizations.to_string(),
                s.nonconverged.to_string(),
            ]
        })
        .collect()
}

/// Streams CSV rows, flushing after every cell.
pub struct ResultsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ResultsWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        inner.write_record(CSV_HEADER).map_err(csv_err)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write_cell(&mut self, cell: &CellReport) -> Result<()> {
        for rec in cell_records(cell) {
            self.inner.write_record(&rec).map_err(csv_err)?;
        }
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}

pub fn report_to_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = ResultsWriter::new(Vec::new())?;
    for cell in &report.cells {
        w.write_cell(cell)?;
    }
    String::from_utf8(w.into_inner()?).map_err(|e| Error::invalid(e.to_string()))
}

/// Inverse of [`report_to_csv`].
pub fn report_from_csv(text: &str) -> Result<ExperimentReport> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse { line: 1, msg: "unexpected CSV header".into() });
    }
    let mut cells: Vec<CellReport> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(csv_err)?;
        let err = |msg: String| Error::Parse { line, msg };
        let f = |j: usize| -> Result<f64> { rec[j].parse().map_err(|e| err(format!("column {}: {e}", CSV_HEADER[j]))) };
        let n = |j: usize| -> Result<usize> { rec[j].parse().map_err(|e| err(format!("column {}: {e}", CSV_HEADER[j]))) };
        let k = n(0)?;
        let snr_db = f(1)?;
        let protocol: Protocol = rec[2].parse()?;
        let stats = ProtocolStats { protocol, mean_rate: f(3)?, stderr: f(4)?, realizations: n(7)?, nonconverged: n(8)? };
        let ratio = if rec[5].is_empty() { None } else { Some(RatioStats { mean: f(5)?, stderr: f(6)? }) };
        match cells.last_mut() {
            Some(c) if c.num_subcarriers == k && c.snr_db.to_bits() == snr_db.to_bits() => c.protocols.push(stats),
            _ => cells.push(CellReport { num_subcarriers: k, snr_db, protocols: vec![stats], ratio }),
        }
    }
    Ok(ExperimentReport { cells })
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn format_solution(protocol: Protocol, p_tot: f64, alloc: &Allocation, extra: Option<&Solution>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "protocol: {protocol}");
    let _ = writeln!(s, "p_tot: {p_tot}");
    let _ = writeln!(s, "sum_rate_bpos: {:.12}", alloc.sum_rate());
    let _ = writeln!(s, "total_power: {:.12}", alloc.total_power());
    if let Some(sol) = extra {
        let term = match sol.termination {
            Termination::PowerBand => "power-band",
            Termination::Plateau => "plateau",
        };
        let _ = writeln!(s, "mu: {:.12e}", sol.mu);
        let _ = writeln!(s, "dual_value: {:.12}", sol.dual_value);
        let _ = writeln!(s, "termination: {term} after {} iterations", sol.iterations);
    }
    let _ = writeln!(s, "{:>4} {:>4} {:>6} {:>5} {:>5} {:>14} {:>14} {:>14}", "k", "l", "mode", "user1", "user2", "p_first", "p_second", "p_relay");
    let mut decisions = alloc.decisions().to_vec();
    decisions.sort_by_key(|d| d.first_slot_subcarrier);
    for d in decisions {
        let (k, l) = (d.first_slot_subcarrier + 1, d.second_slot_subcarrier + 1);
        let _ = match d.mode {
            PairMode::RelayAided { user, split } => writeln!(
                s,
                "{k:>4} {l:>4} {:>6} {:>5} {:>5} {:>14.9} {:>14.9} {:>14.9}",
                "relay",
                user + 1,
                user + 1,
                split.p_s1,
                split.p_s2,
                split.p_r
            ),
            PairMode::Direct { first_user, first_power, second_user, second_power } => writeln!(
                s,
                "{k:>4} {l:>4} {:>6} {:>5} {:>5} {:>14.9} {:>14.9} {:>14.9}",
                "direct",
                first_user + 1,
                second_user + 1,
                first_power,
                second_power,
                0.0
            ),
        };
    }
    s
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

/// Executes a parsed command; returns the process exit code.
pub fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match cli.command {
        Command::Solve { channel, protocol, p_tot, snr_db, epsilon, max_iters, out: out_file, quiet } => {
            let run = || -> Result<(String, Vec<String>)> {
                let ch = parse_channel(&read(&channel)?).map_err(|e| match e {
                    Error::Parse { line, msg } => Error::invalid(format!("{}:{line}: {msg}", channel.display())),
                    other => other,
                })?;
                let p_tot = match (p_tot, snr_db) {
                    (Some(p), _) => p,
                    (None, Some(db)) => simkit::db_to_linear(db),
                    (None, None) => return Err(Error::invalid("one of --p-tot or --snr-db is required")),
                };
                let mut settings = SolverSettings::new(p_tot);
                if let Some(e) = epsilon {
                    settings.epsilon = e * p_tot;
                }
                if let Some(m) = max_iters {
                    settings.max_bisection_iters = m;
                }
                settings.validate()?;
                let mut report = String::new();
                let mut warnings = Vec::new();
                for p in protocol.protocols() {
                    match solve_detailed(&ch, p, &settings) {
                        Ok(sol) => report.push_str(&format_solution(p, p_tot, &sol.allocation, Some(&sol))),
                        Err(Error::NonConvergence { iterations, best, .. }) => {
                            let warning = format!(
                                "warning: {p}: multiplier search did not converge after {iterations} iterations; \
                                 showing the best feasible point"
                            );
                            let _ = writeln!(report, "{warning}");
                            warnings.push(warning);
                            report.push_str(&format_solution(p, p_tot, &best.allocation, None));
                        }
                        Err(e) => return Err(e),
                    }
                    report.push('\n');
                }
                if let Some(path) = &out_file {
                    fs::write(path, &report)?;
                }
                Ok((report, warnings))
            };
            match run() {
                Ok((report, warnings)) => {
                    if !quiet || !warnings.is_empty() {
                        let _ = out.write_all(report.as_bytes());
                    }
                    for w in &warnings {
                        let _ = writeln!(err, "{w}");
                    }
                    if !warnings.is_empty() {
                        EXIT_NONCONVERGED
                    } else {
                        EXIT_OK
                    }
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_INPUT
                }
            }
        }
        Command::Experiment { config, out: dir, seed, protocol, epsilon, workers, quiet } => {
            let run = |out: &mut dyn Write| -> Result<()> {
                let mut cfg = parse_config(&read(&config)?).map_err(|e| match e {
                    Error::Parse { line, msg } => Error::invalid(format!("{}:{line}: {msg}", config.display())),
                    other => other,
                })?;
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                if let Some(p) = protocol {
                    cfg.protocols = p.protocols();
                }
                if let Some(e) = epsilon {
                    cfg.solver.relative_epsilon = e;
                }
                if workers.is_some() {
                    cfg.workers = workers;
                }
                cfg.validate()?;
                run_experiment_to_dir(&cfg, &dir, |cell| {
                    if !quiet {
                        let _ = writeln!(out, "{}", describe_cell(cell));
                    }
                })?;
                Ok(())
            };
            match run(out) {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_INPUT
                }
            }
        }
        Command::Generate { config, subcarriers, users, seed, index, out: out_file } => {
            let run = || -> Result<String> {
                let geometry = match &config {
                    Some(p) => parse_config(&read(p)?)?.geometry,
                    None => GeometryConfig::default(),
                };
                let ch = simkit::generate_realization(&geometry, subcarriers, users, RealizationKey { seed, index })?;
                Ok(format_channel(&ch))
            };
            match run() {
                Ok(text) => {
                    let written = match &out_file {
                        Some(p) => fs::write(p, &text),
                        None => out.write_all(text.as_bytes()),
                    };
                    if let Err(e) = written {
                        let _ = writeln!(err, "error: {e}");
                        return EXIT_INPUT;
                    }
                    EXIT_OK
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    EXIT_INPUT
                }
            }
        }
    }
}

fn describe_cell(cell: &CellReport) -> String {
    let mut s = format!("K={:<4} {:>6.2} dB", cell.num_subcarriers, cell.snr_db);
    for p in &cell.protocols {
        let _ = write!(s, "  {}={:.4}±{:.4}", p.protocol, p.mean_rate, p.stderr);
        if p.nonconverged > 0 {
            let _ = write!(s, " ({} nonconverged)", p.nonconverged);
        }
    }
    if let Some(r) = &cell.ratio {
        let _ = write!(s, "  ratio={:.6}±{:.6}", r.mean, r.stderr);
    }
    s
}

/// Runs the experiment, streaming `results.csv` into `dir` and writing
/// `manifest.toml` at the end.
pub fn run_experiment_to_dir(
    cfg: &ExperimentConfig,
    dir: &Path,
    mut progress: impl FnMut(&CellReport),
) -> Result<ExperimentReport> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(RESULTS_FILE);
    let mut writer = ResultsWriter::new(fs::File::create(&csv_path)?)?;
    let report = simkit::run_experiment_with(cfg, |cell| {
        writer.write_cell(cell)?;
        progress(cell);
        Ok(())
    })?;
    writer.into_inner()?.sync_all()?;
    let manifest = RunManifest {
        config: cfg.clone(),
        tool_version: TOOL_VERSION.to_string(),
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        outputs: vec![PathBuf::from(RESULTS_FILE)],
    };
    fs::write(dir.join(MANIFEST_FILE), manifest.render())?;
    Ok(report)
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    execute(cli, &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simkit::Point;

    const SAMPLE: &str = "# two subcarriers, one user\nK 2\nU 1\ng_sr\n4 0.5\ng_su\n1 0.2\ng_ru\n3 0.7\n";

    #[test]
    fn parses_sample_channel() {
        let ch = parse_channel(SAMPLE).unwrap();
        assert_eq!(ch.num_subcarriers(), 2);
        assert_eq!(ch.g_sr(1), 0.5);
        assert_eq!(ch.g_ru(0, 0), 3.0);
        assert_eq!(parse_channel(&format_channel(&ch)).unwrap(), ch);
    }

    #[test]
    fn channel_errors_name_the_line() {
        let cases = [
            ("K 2\nU 1\ng_sr\n4 0.5\ng_su\n1 x\ng_ru\n3 0.7\n", 6),
            ("K 2\nU 1\ng_sr\n4 0.5 1\n", 4),
            ("K 2\nU 1\ng_sr\n4 -0.5\n", 4),
            ("K 2\n1 2\n", 2),
            ("K 2\nU 1\ng_sr\n4 0.5\ng_su\n1 1\n1 1\n", 7),
            ("K 0\n", 1),
        ];
        for (text, line) in cases {
            match parse_channel(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert!(matches!(parse_channel("K 2\nU 1\ng_sr\n1 1\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = parse_config("experiment.subcarriers = [4, 16]\nexperiment.snr_db = 20\ngeometry.relay_x = 40\n").unwrap();
        assert_eq!(cfg.num_subcarriers, vec![4, 16]);
        assert_eq!(cfg.snr_budget_db, vec![20.0]);
        assert_eq!(cfg.geometry.relay_position, Point::new(40.0, 0.0));
        assert_eq!(cfg.num_users, 5);
        assert_eq!(cfg.num_realizations, 500);
        assert_eq!(parse_config(&format_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn config_rejects_unknown_keys_and_empty_protocols() {
        assert!(parse_config("geometry.relay_z = 1\n").is_err());
        assert!(parse_config("experiment.protocols = []\n").is_err());
        assert!(matches!(parse_config("experiment.users = \n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn manifest_is_a_loadable_config() {
        let cfg = ExperimentConfig { seed: u64::MAX, workers: Some(3), ..ExperimentConfig::default() };
        let m = RunManifest { config: cfg.clone(), tool_version: TOOL_VERSION.into(), timestamp: 5, outputs: vec![] };
        assert_eq!(parse_config(&m.render()).unwrap(), cfg);
    }

    #[test]
    fn solution_listing_is_one_based() {
        let ch = parse_channel(SAMPLE).unwrap();
        let sol = solve_detailed(&ch, Protocol::Novel, &SolverSettings::new(10.0)).unwrap();
        let text = format_solution(Protocol::Novel, 10.0, &sol.allocation, Some(&sol));
        let rows: Vec<&str> = text.lines().skip_while(|l| !l.trim_start().starts_with('k')).skip(1).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].trim_start().starts_with("1 "));
        assert!(rows[1].trim_start().starts_with("2 "));
    }
}
