//! Argument parsing and execution for the `rsma` binary.
//!
//! [`parse_args`] validates everything up front and performs no computation;
//! [`run`] executes a validated [`CliConfig`] and writes the result CSV
//! next to a JSON manifest that replays it.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rsma_core::channels::{write_channel_csv, Topology};
use rsma_core::experiments::{
    single_solve, write_solve_csv, write_trace_csv, ExperimentConfig, ExperimentKind, Manifest, SolveTarget,
};
use rsma_core::schemes::SchemeFamily;
use rsma_core::Error;

/// Manifests larger than this are rejected unread.
pub const MAX_MANIFEST_BYTES: u64 = 1 << 20;

#[derive(Parser, Debug)]
#[command(name = "rsma", version, about = "RSMA precoder optimization for cooperative multi-cell downlinks")]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// Result file; `-` writes the CSV to stdout and skips the manifest.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "RSMA_COMP_THREADS")]
    threads: Option<usize>,

    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Solve one channel draw for every variant of the selected schemes.
    Solve {
        #[command(flatten)]
        common: ExperimentArgs,
        /// User weights, comma separated (default all ones).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        weights: Option<Vec<f64>>,
        /// Channel draw index.
        #[arg(long)]
        realization: Option<usize>,
        /// Also write the AO iteration trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Two-user rate region over a weight sweep.
    Region {
        #[command(flatten)]
        common: ExperimentArgs,
    },
    /// Average sum rate against SNR.
    Sumrate {
        #[command(flatten)]
        common: ExperimentArgs,
    },
    /// Write channel draws in the channel CSV format.
    DumpChannels {
        #[arg(long)]
        topology: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        alpha: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        beta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        realizations: Option<usize>,
    },
}

#[derive(Args, Debug, Default)]
struct ExperimentArgs {
    /// `two-cell` or `three-cell`.
    #[arg(long)]
    topology: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long = "snr-db", value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    /// Comma separated: rs, 1-layer-rs, mulp, scsic, scsic-group.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    /// Exponents x of u_2 = 10^x.
    #[arg(long = "weights-grid", value_delimiter = ',', allow_hyphen_values = true)]
    weights_grid: Option<Vec<f64>>,
    /// QoS thresholds, one per SNR point.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    qos: Option<Vec<f64>>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    tolerance: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Replay a manifest instead of building a configuration from flags.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

impl ExperimentArgs {
    fn has_config_flags(&self) -> bool {
        self.topology.is_some()
            || self.alpha.is_some()
            || self.beta.is_some()
            || self.snr_db.is_some()
            || self.schemes.is_some()
            || self.weights_grid.is_some()
            || self.qos.is_some()
            || self.realizations.is_some()
            || self.seed.is_some()
            || self.tolerance.is_some()
            || self.max_iters.is_some()
    }
}

/// What to run.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    /// Solve, region or sum-rate run described by a manifest.
    Experiment {
        manifest: Manifest,
        trace: Option<PathBuf>,
    },
    DumpChannels {
        topology: Topology,
        alpha: f64,
        beta: f64,
        seed: u64,
        realizations: usize,
    },
}

/// Validated command line.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub command: Command,
    /// `None` means stdout.
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    pub verbosity: u8,
}

/// Failure of parsing or running; rendered as a JSON record on stderr.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// `--help` or `--version` text; not a failure.
    Info(String),
    Usage {
        flag: Option<String>,
        message: String,
    },
    Run {
        kind: &'static str,
        message: String,
    },
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    flag: Option<&'a str>,
    message: &'a str,
}

impl CliError {
    fn usage(flag: &str, message: impl Into<String>) -> Self {
        CliError::Usage {
            flag: Some(flag.to_string()),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Info(_) => 0,
            CliError::Usage { .. } => 2,
            CliError::Run { .. } => 1,
        }
    }

    /// Single-line JSON error record.
    pub fn record(&self) -> String {
        let body = match self {
            CliError::Info(m) => ErrorBody {
                kind: "info",
                flag: None,
                message: m,
            },
            CliError::Usage { flag, message } => ErrorBody {
                kind: "usage",
                flag: flag.as_deref(),
                message,
            },
            CliError::Run { kind, message } => ErrorBody {
                kind,
                flag: None,
                message,
            },
        };
        serde_json::to_string(&ErrorRecord { error: body }).expect("error record serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Info(m) => f.write_str(m),
            CliError::Usage {
                flag: Some(flag),
                message,
            } => write!(f, "{flag}: {message}"),
            CliError::Usage { flag: None, message } | CliError::Run { message, .. } => {
                f.write_str(message)
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Parse { .. } => "parse",
            Error::InvalidInstance(_) | Error::InvalidScheme(_) | Error::TooLarge(_) => "input",
            _ => "solver",
        };
        CliError::Run {
            kind,
            message: e.to_string(),
        }
    }
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Run {
        kind: "io",
        message: format!("{}: {e}", path.display()),
    }
}

fn from_clap(e: clap::Error) -> CliError {
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CliError::Info(e.render().to_string()),
        _ => {
            let flag = match e.get(ContextKind::InvalidArg) {
                Some(ContextValue::String(s)) => Some(s.split_whitespace().next().unwrap_or(s).to_string()),
                _ => None,
            };
            let message = e
                .render()
                .to_string()
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ")
                .to_string();
            CliError::Usage { flag, message }
        }
    }
}

fn topology(value: Option<&str>, default: Topology) -> Result<Topology, CliError> {
    value.map_or(Ok(default), |t| {
        t.parse()
            .map_err(|e: Error| CliError::usage("--topology", e.to_string()))
    })
}

fn unit_interval(flag: &str, value: f64) -> Result<f64, CliError> {
    if value > 0.0 && value <= 1.0 {
        Ok(value)
    } else {
        Err(CliError::usage(flag, format!("{value} is outside (0, 1]")))
    }
}

fn build_config(
    args: &ExperimentArgs,
    kind: ExperimentKind,
) -> Result<ExperimentConfig, CliError> {
    let default_topology = match kind {
        ExperimentKind::Sumrate => Topology::ThreeCell,
        _ => Topology::TwoCell,
    };
    let topology = topology(args.topology.as_deref(), default_topology)?;
    let alpha = unit_interval("--alpha", args.alpha.unwrap_or(1.0))?;
    let beta = unit_interval("--beta", args.beta.unwrap_or(1.0))?;
    let mut c = match kind {
        ExperimentKind::Sumrate => ExperimentConfig::sum_rate(topology, alpha, beta),
        ExperimentKind::Region => ExperimentConfig::region(topology, alpha, beta),
        ExperimentKind::Solve => {
            let mut c = ExperimentConfig::region(topology, alpha, beta);
            c.schemes = vec![SchemeFamily::Rs];
            c.weight_exponents.clear();
            c.realizations = 1;
            c
        }
    };
    if let Some(snr) = &args.snr_db {
        if let Some(s) = snr.iter().find(|s| !s.is_finite() || s.abs() > 100.0) {
            return Err(CliError::usage("--snr-db", format!("{s} dB is outside [-100, 100]")));
        }
        if snr.is_empty() {
            return Err(CliError::usage("--snr-db", "empty SNR list"));
        }
        if args.qos.is_none() && snr.len() != c.qos.len() {
            if kind == ExperimentKind::Sumrate {
                return Err(CliError::usage(
                    "--qos",
                    format!("{} SNR points need a QoS schedule of the same length", snr.len()),
                ));
            }
            c.qos = vec![0.0; snr.len()];
        }
        c.snr_db = snr.clone();
    }
    if let Some(q) = &args.qos {
        if let Some(v) = q.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(CliError::usage("--qos", format!("threshold {v} must be nonnegative")));
        }
        if q.len() != c.snr_db.len() {
            return Err(CliError::usage(
                "--qos",
                format!("{} thresholds for {} SNR points", q.len(), c.snr_db.len()),
            ));
        }
        c.qos = q.clone();
    }
    if kind != ExperimentKind::Sumrate && c.snr_db.len() != 1 {
        return Err(CliError::usage("--snr-db", "expected a single SNR value"));
    }
    if let Some(names) = &args.schemes {
        let mut schemes = Vec::new();
        for name in names {
            let s: SchemeFamily = name
                .parse()
                .map_err(|e: Error| CliError::usage("--schemes", e.to_string()))?;
            if schemes.contains(&s) {
                return Err(CliError::usage("--schemes", format!("{s} listed twice")));
            }
            schemes.push(s);
        }
        if schemes.is_empty() {
            return Err(CliError::usage("--schemes", "no schemes selected"));
        }
        c.schemes = schemes;
    }
    if c.schemes.contains(&SchemeFamily::ScsicGroup) && topology.num_users() < 3 {
        return Err(CliError::usage(
            "--schemes",
            "scsic-group needs at least three users",
        ));
    }
    if let Some(w) = &args.weights_grid {
        if kind != ExperimentKind::Region {
            return Err(CliError::usage("--weights-grid", "only used by `region`"));
        }
        if let Some(x) = w.iter().find(|x| !x.is_finite() || x.abs() > 12.0) {
            return Err(CliError::usage("--weights-grid", format!("exponent {x} outside [-12, 12]")));
        }
        if w.is_empty() {
            return Err(CliError::usage("--weights-grid", "empty weight grid"));
        }
        c.weight_exponents = w.clone();
    }
    if kind == ExperimentKind::Region && topology.num_users() != 2 {
        return Err(CliError::usage("--topology", "rate regions need the two-cell topology"));
    }
    if let Some(n) = args.realizations {
        if n == 0 {
            return Err(CliError::usage("--realizations", "must be at least 1"));
        }
        if kind == ExperimentKind::Solve {
            return Err(CliError::usage("--realizations", "use --realization to pick a draw"));
        }
        c.realizations = n;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(t) = args.tolerance {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::usage("--tolerance", format!("{t} must be positive")));
        }
        c.tolerance = t;
    }
    if let Some(m) = args.max_iters {
        if m == 0 {
            return Err(CliError::usage("--max-iters", "must be at least 1"));
        }
        c.max_iterations = m;
    }
    c.validate().map_err(|e| CliError::Usage {
        flag: None,
        message: e.to_string(),
    })?;
    Ok(c)
}

fn read_manifest(path: &Path, kind: ExperimentKind) -> Result<Manifest, CliError> {
    let mut text = String::new();
    fs::File::open(path)
        .and_then(|f| f.take(MAX_MANIFEST_BYTES + 1).read_to_string(&mut text))
        .map_err(|e| CliError::usage("--manifest", format!("{}: {e}", path.display())))?;
    if text.len() as u64 > MAX_MANIFEST_BYTES {
        return Err(CliError::usage("--manifest", "manifest too large"));
    }
    let m = Manifest::from_json(&text).map_err(|e| CliError::usage("--manifest", e.to_string()))?;
    if m.experiment != kind {
        return Err(CliError::usage(
            "--manifest",
            format!("manifest describes a {:?} run", m.experiment).to_lowercase(),
        ));
    }
    if kind == ExperimentKind::Solve {
        check_solve_target(&m.config, m.solve.as_ref(), "--manifest")?;
    }
    Ok(m)
}

fn check_solve_target(
    config: &ExperimentConfig,
    target: Option<&SolveTarget>,
    flag: &str,
) -> Result<(), CliError> {
    let target = target.ok_or_else(|| CliError::usage(flag, "missing solve target"))?;
    let k = config.topology.num_users();
    if target.weights.len() != k {
        return Err(CliError::usage(flag, format!("{} weights for {k} users", target.weights.len())));
    }
    if let Some(w) = target.weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(CliError::usage(flag, format!("weight {w} must be positive")));
    }
    Ok(())
}

fn experiment(
    common: &ExperimentArgs,
    kind: ExperimentKind,
    solve: Option<(&Option<Vec<f64>>, Option<usize>)>,
) -> Result<Manifest, CliError> {
    if let Some(path) = &common.manifest {
        if common.has_config_flags() || solve.is_some_and(|(w, r)| w.is_some() || r.is_some()) {
            return Err(CliError::usage("--manifest", "cannot be combined with configuration flags"));
        }
        return read_manifest(path, kind);
    }
    let config = build_config(common, kind)?;
    let mut manifest = Manifest::new(kind, config);
    if let Some((weights, realization)) = solve {
        let k = manifest.config.topology.num_users();
        let target = SolveTarget {
            weights: weights.clone().unwrap_or_else(|| vec![1.0; k]),
            realization: realization.unwrap_or(0),
        };
        check_solve_target(&manifest.config, Some(&target), "--weights")?;
        manifest.solve = Some(target);
    }
    Ok(manifest)
}

/// Parses `argv` (program name first) into a validated configuration.
pub fn parse_args<I, T>(argv: I) -> Result<CliConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(from_clap)?;
    if cli.threads == Some(0) {
        return Err(CliError::usage("--threads", "must be at least 1"));
    }
    let command = match &cli.command {
        Sub::Solve {
            common,
            weights,
            realization,
            trace,
        } => Command::Experiment {
            manifest: experiment(common, ExperimentKind::Solve, Some((weights, *realization)))?,
            trace: trace.clone(),
        },
        Sub::Region { common } => Command::Experiment {
            manifest: experiment(common, ExperimentKind::Region, None)?,
            trace: None,
        },
        Sub::Sumrate { common } => Command::Experiment {
            manifest: experiment(common, ExperimentKind::Sumrate, None)?,
            trace: None,
        },
        Sub::DumpChannels {
            topology: t,
            alpha,
            beta,
            seed,
            realizations,
        } => {
            let realizations = realizations.unwrap_or(1);
            if realizations == 0 {
                return Err(CliError::usage("--realizations", "must be at least 1"));
            }
            Command::DumpChannels {
                topology: topology(t.as_deref(), Topology::TwoCell)?,
                alpha: unit_interval("--alpha", alpha.unwrap_or(1.0))?,
                beta: unit_interval("--beta", beta.unwrap_or(1.0))?,
                seed: seed.unwrap_or(1),
                realizations,
            }
        }
    };
    let default_name = match &cli.command {
        Sub::Solve { .. } => "solve.csv",
        Sub::Region { .. } => "region.csv",
        Sub::Sumrate { .. } => "sumrate.csv",
        Sub::DumpChannels { .. } => "channels.csv",
    };
    let output = match cli.output {
        Some(p) if p.as_os_str() == "-" => None,
        Some(p) => Some(p),
        None => Some(PathBuf::from(default_name)),
    };
    Ok(CliConfig {
        command,
        output,
        threads: cli.threads,
        verbosity: cli.verbose,
    })
}

/// Files written by [`run`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub output: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    /// Data rows in the result CSV.
    pub rows: usize,
}

/// `results.csv` → `results.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    output.with_extension("manifest.json")
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| io_error(p, e)),
        None => io::stdout()
            .lock()
            .write_all(bytes)
            .map_err(|e| io_error(Path::new("<stdout>"), e)),
    }
}

fn execute(config: &CliConfig) -> Result<RunReport, CliError> {
    let mut report = RunReport {
        output: config.output.clone(),
        ..RunReport::default()
    };
    let bytes = match &config.command {
        Command::DumpChannels {
            topology,
            alpha,
            beta,
            seed,
            realizations,
        } => {
            let draws = (0..*realizations as u64)
                .map(|d| topology.realization(*alpha, *beta, *seed, d))
                .collect::<rsma_core::Result<Vec<_>>>()?;
            let mut out = Vec::new();
            write_channel_csv(&mut out, &draws)?;
            out
        }
        Command::Experiment { manifest, trace } => {
            let bytes = match (trace, &manifest.solve) {
                (Some(path), Some(target)) => {
                    let result = single_solve(&manifest.config, target)?;
                    let mut out = Vec::new();
                    write_trace_csv(&mut out, &result)?;
                    fs::write(path, out).map_err(|e| io_error(path, e))?;
                    report.trace = Some(path.clone());
                    let mut out = Vec::new();
                    write_solve_csv(&mut out, &manifest.config, &result)?;
                    out
                }
                _ => manifest.run()?,
            };
            if let Some(out) = &config.output {
                let path = manifest_path(out);
                let json = manifest.to_json()?;
                fs::write(&path, json + "\n").map_err(|e| io_error(&path, e))?;
                report.manifest = Some(path);
            }
            bytes
        }
    };
    report.rows = bytes.iter().filter(|b| **b == b'\n').count().saturating_sub(1);
    write_output(config.output.as_deref(), &bytes)?;
    Ok(report)
}

/// Runs a validated configuration on a dedicated thread pool.
pub fn run(config: &CliConfig) -> Result<RunReport, CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Run {
        kind: "internal",
        message: e.to_string(),
    })?;
    let report = pool.install(|| execute(config))?;
    if config.verbosity > 0 {
        if let Some(p) = &report.output {
            eprintln!("wrote {} rows to {}", report.rows, p.display());
        }
        if let Some(p) = &report.manifest {
            eprintln!("manifest {}", p.display());
        }
    }
    Ok(report)
}
