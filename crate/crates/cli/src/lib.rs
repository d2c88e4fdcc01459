//! Command-line front end: flag and config-file handling, and the
//! subcommands that turn a configuration into output files.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use dyadsim::report::{
    analyze, default_panel_contexts, figure_data, CsvPayload, FigureConfig, Panel,
};
use dyadsim::sweep::run_sweep_with_workers;
use dyadsim::{
    metrics::LagSpec, simulate, ContextMatrix, Error as CoreError, ModelParams, NoiseSource,
    SweepConfig, SweepTable,
};
use serde::Serialize;

pub const OUT_DIR_ENV: &str = "DYADSIM_OUT_DIR";

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag, missing subcommand, malformed value)
  3  invalid configuration or input file
  4  I/O failure
  5  analysis failure (undefined statistic, singular fit)
  6  non-finite simulation state

Errors are printed to stderr as one line:
  error kind=<kind> exit=<code>: <message>

Settings are resolved as flag > config file > built-in default.
The output directory falls back to $DYADSIM_OUT_DIR, then '.'.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Config,
    Io,
    Analysis,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 2,
            ErrorKind::Config => 3,
            ErrorKind::Io => 4,
            ErrorKind::Analysis => 5,
            ErrorKind::Numeric => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Config => "config",
            ErrorKind::Io => "io",
            ErrorKind::Analysis => "analysis",
            ErrorKind::Numeric => "numeric",
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Config, message)
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(ErrorKind::Io, format!("{}: {e}", path.display()))
    }

    /// `error kind=<kind> exit=<code>: <message>` with newlines flattened.
    pub fn line(&self) -> String {
        let msg = self
            .message
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        format!(
            "error kind={} exit={}: {msg}",
            self.kind.as_str(),
            self.kind.exit_code()
        )
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::InvalidParameter(_)
            | CoreError::Validation(_)
            | CoreError::UnknownPanel(_) => ErrorKind::Config,
            CoreError::Csv(c) if c.is_io_error() => ErrorKind::Io,
            CoreError::Csv(_) => ErrorKind::Config,
            CoreError::Io(_) | CoreError::Json(_) => ErrorKind::Io,
            CoreError::NonFiniteState { .. } => ErrorKind::Numeric,
            _ => ErrorKind::Analysis,
        };
        Self::new(kind, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

const CONTEXT_SLOTS: [&str; 4] = ["s1", "o1", "o2", "s2"];

/// Parse `s1,o1;o2,s2` with entries in {-1, 0, 1}. Whitespace around tokens
/// is ignored. Row 1 holds the influences on person 1.
pub fn parse_context(text: &str) -> CliResult<ContextMatrix> {
    let rows: Vec<(usize, &str)> = split_with_offsets(text, 0, ';');
    if rows.len() != 2 {
        return Err(CliError::config(format!(
            "context {text:?}: expected two rows separated by ';', found {}",
            rows.len()
        )));
    }
    let mut entries = [0i8; 4];
    let mut slot = 0;
    for (row_no, (row_off, row)) in rows.into_iter().enumerate() {
        let tokens = split_with_offsets(row, row_off, ',');
        if tokens.len() != 2 {
            return Err(CliError::config(format!(
                "context {text:?}: row {} has {} entries, expected 2",
                row_no + 1,
                tokens.len()
            )));
        }
        for (off, raw) in tokens {
            let tok = raw.trim();
            let pos = off + (raw.len() - raw.trim_start().len());
            let value = match tok {
                "-1" => -1,
                "0" | "+0" | "-0" => 0,
                "1" | "+1" => 1,
                _ => {
                    let why = match tok.parse::<i64>() {
                        Ok(_) => "value outside {-1, 0, 1}",
                        Err(_) if tok.is_empty() => "empty entry",
                        Err(_) => "not an integer",
                    };
                    return Err(CliError::config(format!(
                        "context {text:?}: entry {} ({}) {tok:?} at column {}: {why}",
                        slot + 1,
                        CONTEXT_SLOTS[slot],
                        pos + 1
                    )));
                }
            };
            entries[slot] = value;
            slot += 1;
        }
    }
    Ok(ContextMatrix::try_from(entries)?)
}

fn split_with_offsets(s: &str, base: usize, sep: char) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in s.char_indices() {
        if c == sep {
            out.push((base + start, &s[start..i]));
            start = i + c.len_utf8();
        }
    }
    out.push((base + start, &s[start..]));
    out
}

#[derive(Debug, Parser)]
#[command(
    name = "dyadsim",
    version,
    about = "Simulate coupled two-person behaviour dynamics over all 81 ternary contexts",
    after_help = EXIT_CODES
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// key = value settings file; flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Master seed (run seed for `simulate`) [default: 42]
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Runs per context [default: 100]
    #[arg(long, global = true)]
    pub runs: Option<usize>,

    /// Turns per run [default: 500]
    #[arg(long, global = true)]
    pub turns: Option<usize>,

    /// Decay fraction alpha [default: 0.1]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub alpha: Option<f64>,

    /// Influence multiplier I [default: 1]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub influence: Option<f64>,

    /// Noise half-width h, noise ~ U(-h, h) [default: 0.5]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub noise: Option<f64>,

    /// Tail threshold on |r| [default: 0.25]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub threshold: Option<f64>,

    /// Largest lag for cross-correlation and turn lags [default: 20]
    #[arg(long, global = true)]
    pub max_lag: Option<usize>,

    /// Histogram bins over [-1, 1] [default: 40]
    #[arg(long, global = true)]
    pub bins: Option<usize>,

    /// Context "s1,o1;o2,s2"; repeat for several
    #[arg(long = "context", global = true, allow_hyphen_values = true)]
    pub contexts: Vec<String>,

    /// Input sweep CSV [default: <out-dir>/sweep.csv]
    #[arg(long, global = true, value_name = "FILE")]
    pub input: Option<PathBuf>,

    /// Output file for single-file subcommands
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Output directory [default: $DYADSIM_OUT_DIR or .]
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Worker threads; output does not depend on it [default: all cores]
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Run every context and write sweep.csv
    Sweep,
    /// Read a sweep CSV, write report.json, table1.csv and coefficients.csv
    Analyze,
    /// Write one trajectory for a single --context, seeded by --seed
    Simulate,
    /// Write the mean cross-correlation over a batch for each --context
    Xcorr,
    /// Write the turn-lag distribution over a batch for each --context
    Lags,
    /// Write every figure payload and figures.json
    Figures,
}

/// Settings that may come from a flag or the config file.
#[derive(Debug, Clone, Default, PartialEq)]
struct Settings {
    seed: Option<u64>,
    runs: Option<usize>,
    turns: Option<usize>,
    alpha: Option<f64>,
    influence: Option<f64>,
    noise: Option<f64>,
    threshold: Option<f64>,
    max_lag: Option<usize>,
    bins: Option<usize>,
    contexts: Vec<String>,
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    workers: Option<usize>,
}

impl Settings {
    fn from_cli(cli: &Cli) -> Self {
        Self {
            seed: cli.seed,
            runs: cli.runs,
            turns: cli.turns,
            alpha: cli.alpha,
            influence: cli.influence,
            noise: cli.noise,
            threshold: cli.threshold,
            max_lag: cli.max_lag,
            bins: cli.bins,
            contexts: cli.contexts.clone(),
            input: cli.input.clone(),
            out: cli.out.clone(),
            out_dir: cli.out_dir.clone(),
            workers: cli.workers,
        }
    }

    fn or(self, file: Settings) -> Self {
        Self {
            seed: self.seed.or(file.seed),
            runs: self.runs.or(file.runs),
            turns: self.turns.or(file.turns),
            alpha: self.alpha.or(file.alpha),
            influence: self.influence.or(file.influence),
            noise: self.noise.or(file.noise),
            threshold: self.threshold.or(file.threshold),
            max_lag: self.max_lag.or(file.max_lag),
            bins: self.bins.or(file.bins),
            contexts: if self.contexts.is_empty() {
                file.contexts
            } else {
                self.contexts
            },
            input: self.input.or(file.input),
            out: self.out.or(file.out),
            out_dir: self.out_dir.or(file.out_dir),
            workers: self.workers.or(file.workers),
        }
    }
}

/// Parse a config file: one `key = value` per line, `#` comments, keys named
/// like the long flags (`max-lag` or `max_lag`). `context` may repeat.
fn parse_config_text(text: &str, origin: &Path) -> CliResult<Settings> {
    fn val<T: std::str::FromStr>(v: &str, key: &str, at: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        v.parse()
            .map_err(|e| CliError::config(format!("{at}: bad value {v:?} for {key}: {e}")))
    }

    let mut s = Settings::default();
    for (i, line) in text.lines().enumerate() {
        let at = format!("{}:{}", origin.display(), i + 1);
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("{at}: expected key = value")))?;
        let key = key.trim().replace('-', "_");
        let v = value.trim();
        match key.as_str() {
            "seed" => s.seed = Some(val(v, &key, &at)?),
            "runs" => s.runs = Some(val(v, &key, &at)?),
            "turns" => s.turns = Some(val(v, &key, &at)?),
            "alpha" => s.alpha = Some(val(v, &key, &at)?),
            "influence" => s.influence = Some(val(v, &key, &at)?),
            "noise" => s.noise = Some(val(v, &key, &at)?),
            "threshold" => s.threshold = Some(val(v, &key, &at)?),
            "max_lag" => s.max_lag = Some(val(v, &key, &at)?),
            "bins" => s.bins = Some(val(v, &key, &at)?),
            "workers" => s.workers = Some(val(v, &key, &at)?),
            "context" => s.contexts.push(v.to_string()),
            "input" => s.input = Some(PathBuf::from(v)),
            "out" => s.out = Some(PathBuf::from(v)),
            "out_dir" => s.out_dir = Some(PathBuf::from(v)),
            _ => return Err(CliError::config(format!("{at}: unknown key {key:?}"))),
        }
    }
    Ok(s)
}

/// Fully resolved and validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub command: Command,
    pub master_seed: u64,
    pub runs: usize,
    pub params: ModelParams,
    pub threshold: f64,
    pub max_lag: usize,
    pub bins: usize,
    pub contexts: Vec<ContextMatrix>,
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
}

impl CliConfig {
    /// Merge flags, config file, environment and defaults, then validate.
    pub fn resolve(cli: &Cli, env_out_dir: Option<PathBuf>) -> CliResult<Self> {
        let file = match &cli.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                parse_config_text(&text, p)?
            }
            None => Settings::default(),
        };
        let s = Settings::from_cli(cli).or(file);
        let defaults = SweepConfig::default();
        let params = ModelParams {
            alpha: s.alpha.unwrap_or(defaults.params.alpha),
            influence: s.influence.unwrap_or(defaults.params.influence),
            noise_half_width: s.noise.unwrap_or(defaults.params.noise_half_width),
            turns: s.turns.unwrap_or(defaults.params.turns),
        };
        let contexts = s
            .contexts
            .iter()
            .map(|c| parse_context(c))
            .collect::<CliResult<Vec<_>>>()?;
        let cfg = Self {
            command: cli.command,
            master_seed: s.seed.unwrap_or(defaults.master_seed),
            runs: s.runs.unwrap_or(defaults.runs_per_context),
            params,
            threshold: s.threshold.unwrap_or(defaults.tail_threshold),
            max_lag: s.max_lag.unwrap_or(LagSpec::default().max_lag),
            bins: s.bins.unwrap_or(FigureConfig::default().bins),
            contexts,
            input: s.input,
            out: s.out,
            out_dir: s
                .out_dir
                .or(env_out_dir)
                .unwrap_or_else(|| PathBuf::from(".")),
            workers: s.workers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            master_seed: self.master_seed,
            runs_per_context: self.runs,
            params: self.params,
            tail_threshold: self.threshold,
        }
    }

    pub fn figure_config(&self) -> FigureConfig {
        FigureConfig {
            master_seed: self.master_seed,
            runs: self.runs,
            params: self.params,
            max_lag: self.max_lag,
            bins: self.bins,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.sweep_config().validate()?;
        self.figure_config().validate()?;
        if self.workers == Some(0) {
            return Err(CliError::config("workers must be at least 1"));
        }
        if self.command == Command::Simulate && self.contexts.len() != 1 {
            return Err(CliError::config(format!(
                "simulate needs exactly one --context, got {}",
                self.contexts.len()
            )));
        }
        if self.out.is_some() && !matches!(self.command, Command::Sweep | Command::Simulate) {
            return Err(CliError::config(
                "--out applies to sweep and simulate only; use --out-dir",
            ));
        }
        Ok(())
    }

    fn out_path(&self, default_name: &str) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| self.out_dir.join(default_name))
    }

    fn batch_contexts(&self) -> Vec<ContextMatrix> {
        if self.contexts.is_empty() {
            default_panel_contexts().iter().map(|p| p.context).collect()
        } else {
            self.contexts.clone()
        }
    }

    fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> CliResult<T> {
        match self.workers {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| CliError::config(format!("cannot build worker pool: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<PathBuf> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
    Ok(path.to_path_buf())
}

fn write_payloads(dir: &Path, payloads: &[CsvPayload]) -> CliResult<Vec<PathBuf>> {
    payloads
        .iter()
        .map(|p| write_file(&dir.join(&p.file_name), p.contents.as_bytes()))
        .collect()
}

fn load_sweep(cfg: &CliConfig) -> CliResult<SweepTable> {
    let path = cfg
        .input
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("sweep.csv"));
    let f = fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
    SweepTable::read_csv(std::io::BufReader::new(f), &cfg.sweep_config()).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

#[derive(Serialize)]
struct ManifestEntry {
    name: String,
    label: String,
    context: ContextMatrix,
    completed: bool,
}

#[derive(Serialize)]
struct FiguresManifest {
    master_seed: u64,
    runs: usize,
    params: ModelParams,
    max_lag: usize,
    bins: usize,
    generator: &'static str,
    histogram_source: String,
    contexts: Vec<ManifestEntry>,
    files: Vec<String>,
}

/// Execute the configured subcommand; returns the files written.
pub fn run(cfg: &CliConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate()?;
    match cfg.command {
        Command::Sweep => {
            let table = run_sweep_with_workers(&cfg.sweep_config(), cfg.workers_or_all())?;
            Ok(vec![write_file(
                &cfg.out_path("sweep.csv"),
                table.to_csv_string()?.as_bytes(),
            )?])
        }
        Command::Analyze => {
            let table = load_sweep(cfg)?;
            let report = analyze(&table)?;
            let mut table1 = Vec::new();
            report.write_table1_csv(&mut table1)?;
            let mut coefs = Vec::new();
            report.write_coefficients_csv(&mut coefs)?;
            Ok(vec![
                write_file(
                    &cfg.out_dir.join("report.json"),
                    report.to_json()?.as_bytes(),
                )?,
                write_file(&cfg.out_dir.join("table1.csv"), &table1)?,
                write_file(&cfg.out_dir.join("coefficients.csv"), &coefs)?,
            ])
        }
        Command::Simulate => {
            let c = cfg.contexts[0];
            let traj = simulate(&c, &cfg.params, cfg.master_seed)?;
            let name = format!("traj_{}_seed{}.csv", c.label(), cfg.master_seed);
            Ok(vec![write_file(
                &cfg.out_path(&name),
                traj.to_csv_string()?.as_bytes(),
            )?])
        }
        Command::Xcorr | Command::Lags => {
            let panel = if cfg.command == Command::Xcorr {
                Panel::CcfPanel
            } else {
                Panel::LagPanel
            };
            let ctxs = cfg.batch_contexts();
            let payloads =
                cfg.install(|| figure_data(panel, None, &ctxs, &cfg.figure_config()))??;
            write_payloads(&cfg.out_dir, &payloads)
        }
        Command::Figures => run_figures(cfg),
    }
}

fn run_figures(cfg: &CliConfig) -> CliResult<Vec<PathBuf>> {
    let (table, source) = match &cfg.input {
        Some(p) => (load_sweep(cfg)?, p.display().to_string()),
        None => (
            run_sweep_with_workers(&cfg.sweep_config(), cfg.workers_or_all())?,
            "generated".to_string(),
        ),
    };
    let entries: Vec<ManifestEntry> = if cfg.contexts.is_empty() {
        default_panel_contexts()
            .into_iter()
            .map(|p| ManifestEntry {
                name: p.name,
                label: p.label,
                context: p.context,
                completed: p.completed,
            })
            .collect()
    } else {
        cfg.contexts
            .iter()
            .map(|c| ManifestEntry {
                name: "user".into(),
                label: c.label(),
                context: *c,
                completed: false,
            })
            .collect()
    };
    let ctxs: Vec<ContextMatrix> = entries.iter().map(|e| e.context).collect();
    let fig = cfg.figure_config();
    let mut payloads = Vec::new();
    for panel in Panel::ALL {
        payloads.extend(cfg.install(|| figure_data(panel, Some(&table), &ctxs, &fig))??);
    }
    let mut written = write_payloads(&cfg.out_dir, &payloads)?;
    let manifest = FiguresManifest {
        master_seed: cfg.master_seed,
        runs: cfg.runs,
        params: cfg.params,
        max_lag: cfg.max_lag,
        bins: cfg.bins,
        generator: NoiseSource::ALGORITHM_ID,
        histogram_source: source,
        contexts: entries,
        files: payloads.iter().map(|p| p.file_name.clone()).collect(),
    };
    let mut json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::new(ErrorKind::Io, e.to_string()))?;
    json.push('\n');
    written.push(write_file(
        &cfg.out_dir.join("figures.json"),
        json.as_bytes(),
    )?);
    Ok(written)
}

impl CliConfig {
    fn workers_or_all(&self) -> usize {
        self.workers.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
    }
}

/// Parse arguments, run, print written paths to stdout and errors to stderr.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e
                .to_string()
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ")
                .to_string();
            let err = CliError::new(ErrorKind::Usage, first);
            eprintln!("{}", err.line());
            return err.kind.exit_code();
        }
    };
    let env_dir = std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from);
    match CliConfig::resolve(&cli, env_dir).and_then(|cfg| run(&cfg)) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.line());
            e.kind.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_examples() {
        let c = parse_context("1,0;1,-1").unwrap();
        assert_eq!(c.entries(), [1, 0, 1, -1]);
        assert_eq!(parse_context("0,0;0,0").unwrap(), ContextMatrix::ZERO);
        assert_eq!(
            parse_context(" -1 , 1 ; 0 , +1 ").unwrap().entries(),
            [-1, 1, 0, 1]
        );
    }

    #[test]
    fn context_errors_name_token_and_position() {
        let e = parse_context("2,0;0,0").unwrap_err();
        assert_eq!(e.kind, ErrorKind::Config);
        assert!(
            e.message.contains("entry 1 (s1) \"2\" at column 1"),
            "{}",
            e.message
        );
        let e = parse_context("1,0;1,x").unwrap_err();
        assert!(
            e.message.contains("entry 4 (s2) \"x\" at column 7"),
            "{}",
            e.message
        );
        let e = parse_context("1, 0;  1.5,0").unwrap_err();
        assert!(
            e.message.contains("(o2) \"1.5\" at column 8"),
            "{}",
            e.message
        );
        assert!(parse_context("1,0,1;0").is_err());
        assert!(parse_context("1,0;1").is_err());
        assert!(parse_context("1,0;1,0;0,0").is_err());
        assert!(parse_context("1,;1,0")
            .unwrap_err()
            .message
            .contains("empty entry"));
    }

    #[test]
    fn config_file_and_precedence() {
        let text = "# experiment\nseed = 9\nmax-lag=12\ncontext = 1,1;1,1\nalpha=0.2 # trailing\n";
        let file = parse_config_text(text, Path::new("x.cfg")).unwrap();
        assert_eq!(file.seed, Some(9));
        assert_eq!(file.max_lag, Some(12));
        assert_eq!(file.contexts, vec!["1,1;1,1"]);
        let flags = Settings {
            seed: Some(1),
            ..Default::default()
        };
        let merged = flags.or(file);
        assert_eq!(merged.seed, Some(1));
        assert_eq!(merged.alpha, Some(0.2));
        assert!(parse_config_text("speed = 3", Path::new("x")).is_err());
        assert!(parse_config_text("seed 3", Path::new("x")).is_err());
        assert!(parse_config_text("runs = -1", Path::new("x")).is_err());
    }

    #[test]
    fn defaults_match_model_settings() {
        let cli = Cli::try_parse_from(["dyadsim", "sweep"]).unwrap();
        let cfg = CliConfig::resolve(&cli, None).unwrap();
        assert_eq!(cfg.master_seed, 42);
        assert_eq!(cfg.runs, 100);
        assert_eq!(cfg.params, ModelParams::default());
        assert_eq!(cfg.threshold, 0.25);
        assert_eq!(cfg.max_lag, 20);
        assert_eq!(cfg.out_dir, PathBuf::from("."));
        let cfg = CliConfig::resolve(&cli, Some("/tmp/x".into())).unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn validation_happens_before_work() {
        for args in [
            vec!["dyadsim", "sweep", "--alpha", "1.5"],
            vec!["dyadsim", "sweep", "--runs", "0"],
            vec!["dyadsim", "sweep", "--threshold", "-0.1"],
            vec!["dyadsim", "lags", "--max-lag", "0"],
            vec!["dyadsim", "sweep", "--workers", "0"],
            vec!["dyadsim", "simulate"],
            vec!["dyadsim", "analyze", "--out", "x.csv"],
        ] {
            let cli = Cli::try_parse_from(&args).unwrap();
            let e = CliConfig::resolve(&cli, None).unwrap_err();
            assert_eq!(e.kind, ErrorKind::Config, "{args:?}");
        }
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(Cli::try_parse_from(["dyadsim", "sweep", "--sed", "1"]).is_err());
        assert!(Cli::try_parse_from(["dyadsim", "bogus"]).is_err());
        assert_eq!(main_with_args(["dyadsim", "sweep", "--nope"]), 2);
    }

    #[test]
    fn error_line_is_single_line() {
        let e = CliError::new(ErrorKind::Io, "a\nb\n  c");
        assert_eq!(e.line(), "error kind=io exit=4: a b c");
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes: std::collections::BTreeSet<_> = [
            ErrorKind::Usage,
            ErrorKind::Config,
            ErrorKind::Io,
            ErrorKind::Analysis,
            ErrorKind::Numeric,
        ]
        .iter()
        .map(|k| k.exit_code())
        .collect();
        assert_eq!(codes.len(), 5);
        assert!(!codes.contains(&0));
    }
}
