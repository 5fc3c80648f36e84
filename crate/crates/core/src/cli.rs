//! `shotnoise` command line: `simulate`, `analyze`, `keyrate`,
//! `attack-sweep`.
//!
//! Exit status: 0 success, 2 usage, 3 validation, 4 I/O, 5 parse,
//! 6 gate rejection.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::attack::AttackConfig;
use crate::config::{ConfigError, RunConfig};
use crate::estimator::{analyze_block, analyze_moments, group_stats, BlockAnalysis, Thresholds};
use crate::keyrate::{self, LinkParams};
use crate::sim::{simulate_block_moments, BlockPulses, RecordAccumulator};
use crate::trace::{
    read_group_summary, read_json, write_group_summary, write_json, write_noise_vs_signal,
    write_signal_vs_attenuation, Manifest, Report, TraceError, TraceReader, TraceWriter, SUMMARY_HEADER,
    TRACE_HEADER,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_PARSE: i32 = 5;
pub const EXIT_GATE_REJECTED: i32 = 6;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error("GATE_REJECTED: {0}")]
    GateRejected(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::GateRejected(_) => EXIT_GATE_REJECTED,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            ConfigError::Parse(m) => CliError::Parse(m),
            ConfigError::Invalid(e) => e.into(),
        }
    }
}

fn trace_err(path: &Path, e: TraceError) -> CliError {
    match e {
        TraceError::Io(e) => CliError::Io(format!("{}: {e}", path.display())),
        other => CliError::Parse(format!("{}: {other}", path.display())),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "shotnoise", version, about = "CVQKD shot-noise measurement simulator and gate")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one block; writes trace.csv, groups.csv and manifest.json.
    Simulate(SimulateArgs),
    /// Gate a trace or group summary; writes report.json and curve tables.
    Analyze(AnalyzeArgs),
    /// Conservative key rate from a report or explicit parameters.
    Keyrate(KeyrateArgs),
    /// R² versus saturation offset or received signal variance.
    AttackSweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Skip the pulse trace and write only per-group statistics.
    #[arg(long)]
    pub summary_only: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// trace.csv or groups.csv.
    pub input: PathBuf,
    /// Manifest giving ratios and thresholds for a trace; defaults to
    /// manifest.json beside the input.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Print only the verdict line.
    #[arg(long)]
    pub summary_only: bool,
}

#[derive(Debug, Args)]
pub struct KeyrateArgs {
    /// Report whose measured slope feeds the estimate; refused if rejected.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 80.5)]
    pub length_km: f64,
    #[arg(long, default_value_t = 0.322)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.01)]
    pub v_el_snu: f64,
    #[arg(long, default_value_t = 0.948)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.075)]
    pub snr: f64,
    #[arg(long, default_value_t = keyrate::DEFAULT_SLOPE_MARGIN)]
    pub slope_margin: f64,
    /// Noise slope when no report is given.
    #[arg(long, default_value_t = 2e-3)]
    pub slope: f64,
    #[arg(long, default_value_t = 0.08)]
    pub signal_var_bob_snu: f64,
    /// Use this excess noise at Alice instead of the referred estimate.
    #[arg(long)]
    pub xi_alice_snu: Option<f64>,
    #[arg(long)]
    pub summary_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    /// Saturation offset, shot-noise std.
    Delta,
    /// Signal variance at Bob for r = 1, SNU.
    Vb,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Seeds per value, counted up from the base seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Pulses per group when no config is given.
    #[arg(long, default_value_t = 1_000_000)]
    pub n_per_group: usize,
    #[arg(long)]
    pub summary_only: bool,
}

/// Parses `args` (including the program name) and runs the command,
/// printing to `stdout`. Returns the exit status.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(stdout, "{text}")
            } else {
                write!(stderr, "{text}")
            };
            return code;
        }
    };
    match run(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a, stdout),
        Command::Analyze(a) => analyze(cli, a, stdout),
        Command::Keyrate(a) => keyrate_cmd(cli, a, stdout),
        Command::AttackSweep(a) => sweep(cli, a, stdout),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::honest_default(),
    };
    if let Some(s) = cli.seed {
        cfg.system.seed = s;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn simulate(cli: &Cli, args: &SimulateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let run = cfg.resolve()?;
    let dir = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    out_dir(&dir)?;
    let mut manifest = Manifest::new(&cfg)?;

    let block = if args.summary_only {
        simulate_block_moments(&run.params, &run.schedule, cfg.attack.as_ref())?
    } else {
        let path = dir.join("trace.csv");
        let mut w = TraceWriter::new(create(&path)?).map_err(|e| trace_err(&path, e))?;
        let mut acc = RecordAccumulator::new(run.schedule.ratios().to_vec());
        for rec in BlockPulses::new(&run.params, &run.schedule, &run.attack)? {
            w.write(&rec).map_err(|e| trace_err(&path, e))?;
            acc.push(&rec)?;
        }
        w.finish().map_err(|e| trace_err(&path, e))?;
        manifest.files.push("trace.csv".into());
        acc.finish()
    };
    manifest.pulses = block.groups.iter().map(|g| g.moments.count()).sum();

    let stats = group_stats(&block)?;
    let path = dir.join("groups.csv");
    write_group_summary(&stats, &block.ratios, create(&path)?).map_err(|e| trace_err(&path, e))?;
    manifest.files.push("groups.csv".into());
    let path = dir.join("manifest.json");
    write_json(&path, &manifest).map_err(|e| trace_err(&path, e))?;

    writeln!(
        stdout,
        "simulated {} pulses in {} groups x 2 quadratures (seed {}, config {}) -> {}",
        manifest.pulses,
        block.ratios.len(),
        manifest.seed,
        &manifest.config_sha256[..12],
        dir.display()
    )
    .map_err(|e| CliError::Io(e.to_string()))
}

fn first_line(path: &Path) -> Result<String, CliError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut line = String::new();
    BufReader::new(f).read_line(&mut line).map_err(|e| io_err(path, e))?;
    Ok(line.trim_end().to_string())
}

fn analyze(cli: &Cli, args: &AnalyzeArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let header = first_line(&args.input)?;
    let manifest_path = args
        .manifest
        .clone()
        .or_else(|| args.input.parent().map(|p| p.join("manifest.json")));
    let manifest: Option<Manifest> = match &manifest_path {
        Some(p) if p.exists() => Some(read_json(p).map_err(|e| trace_err(p, e))?),
        Some(p) if args.manifest.is_some() => return Err(CliError::Io(format!("{}: not found", p.display()))),
        _ => None,
    };
    let config = match (&cli.config, &manifest) {
        (Some(p), _) => Some(RunConfig::load(p)?),
        (None, Some(m)) => Some(m.config.clone()),
        (None, None) => None,
    };

    let (ratios, stats) = if header == TRACE_HEADER {
        let ratios = match (&config, &manifest) {
            (Some(c), _) => c.schedule.build()?.ratios().to_vec(),
            (None, Some(m)) => m.ratios.clone(),
            (None, None) => {
                return Err(CliError::Usage(
                    "a trace needs its manifest.json or --config for the attenuation ratios".into(),
                ))
            }
        };
        let f = File::open(&args.input).map_err(|e| io_err(&args.input, e))?;
        let reader = TraceReader::new(BufReader::new(f)).map_err(|e| trace_err(&args.input, e))?;
        let mut acc = RecordAccumulator::new(ratios.clone());
        for rec in reader {
            let rec = rec.map_err(|e| trace_err(&args.input, e))?;
            acc.push(&rec)
                .map_err(|e| CliError::Parse(format!("{}: pulse {}: {e}", args.input.display(), rec.index)))?;
        }
        (ratios, group_stats(&acc.finish())?)
    } else if header == SUMMARY_HEADER {
        let f = File::open(&args.input).map_err(|e| io_err(&args.input, e))?;
        let (stats, ratios) = read_group_summary(BufReader::new(f)).map_err(|e| trace_err(&args.input, e))?;
        (ratios, stats)
    } else {
        return Err(CliError::Parse(format!(
            "{}: line 1: not a trace or group summary header: `{header}`",
            args.input.display()
        )));
    };

    let n_min = stats.iter().map(|g| g.n).min().unwrap_or(0);
    let thresholds = match &config {
        Some(c) => c.thresholds.effective(n_min)?,
        None => Thresholds::default().scaled_for_group_size(n_min),
    };
    let analysis = analyze_block(&ratios, &stats, &thresholds)?;

    let dir = cli
        .out
        .clone()
        .or_else(|| args.input.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    out_dir(&dir)?;
    let report = Report::from_analysis(&analysis, thresholds, config.as_ref().map(|c| c.hash_hex()));
    write_analysis_files(&dir, &analysis, &report)?;

    writeln!(stdout, "{}", verdict_line(&analysis)).map_err(|e| CliError::Io(e.to_string()))?;
    if !args.summary_only {
        for q in [&analysis.verdict.x, &analysis.verdict.p] {
            writeln!(
                stdout,
                "  {}: R2_noise={:.6} R2_atten={:.6} max_residual_snu={:.3e} shot_v2={:.6e} slope={:.4e}",
                q.quadrature,
                q.r2_noise_signal,
                q.r2_signal_atten,
                q.max_residual_snu,
                q.shot_noise_estimate_v2,
                q.excess_noise_slope
            )
            .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    if analysis.verdict.accepted {
        Ok(())
    } else {
        Err(CliError::GateRejected(reasons(&analysis)))
    }
}

fn reasons(a: &BlockAnalysis) -> String {
    let mut r: Vec<String> = Vec::new();
    for q in [&a.verdict.x, &a.verdict.p] {
        for reason in &q.reject_reasons {
            r.push(format!("{}:{reason}", q.quadrature));
        }
    }
    r.join(",")
}

fn verdict_line(a: &BlockAnalysis) -> String {
    if a.verdict.accepted {
        format!(
            "ACCEPTED shot-noise X/P relative discrepancy {:.3e}",
            a.verdict.shot_noise_relative_discrepancy
        )
    } else {
        format!("REJECTED {}", reasons(a))
    }
}

fn write_analysis_files(dir: &Path, analysis: &BlockAnalysis, report: &Report) -> Result<(), CliError> {
    let path = dir.join("report.json");
    write_json(&path, report).map_err(|e| trace_err(&path, e))?;
    let path = dir.join("noise_vs_signal.csv");
    write_noise_vs_signal(analysis, create(&path)?).map_err(|e| trace_err(&path, e))?;
    let path = dir.join("signal_vs_attenuation.csv");
    write_signal_vs_attenuation(analysis, create(&path)?).map_err(|e| trace_err(&path, e))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct KeyrateOutput {
    source: String,
    #[serde(flatten)]
    summary: keyrate::KeyRateSummary,
}

fn keyrate_cmd(cli: &Cli, args: &KeyrateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let link = LinkParams {
        length_km: args.length_km,
        loss_db_per_km: keyrate::DEFAULT_LOSS_DB_PER_KM,
        eta: args.eta,
        v_el: args.v_el_snu,
        beta: args.beta,
        snr_target: args.snr,
        slope_margin: args.slope_margin,
    };
    let (slope, source) = match &args.report {
        Some(p) => {
            let rep: Report = read_json(p).map_err(|e| trace_err(p, e))?;
            if !rep.accepted || !rep.verdict.accepted {
                return Err(CliError::GateRejected(format!(
                    "{} was rejected by the gate; no key rate from rejected data",
                    p.display()
                )));
            }
            (rep.verdict.excess_noise_slope().max(0.0), p.display().to_string())
        }
        None => (args.slope, "parameters".to_string()),
    };
    let mut summary = keyrate::evaluate(&link, slope, args.signal_var_bob_snu)?;
    if let Some(xi) = args.xi_alice_snu {
        let k = keyrate::key_rate_terms(summary.v_a_snu, summary.t_channel, link.eta, link.v_el, xi, link.beta)?;
        summary.xi_alice_snu = xi;
        summary.xi_bob_snu = xi * summary.t_channel * link.eta;
        summary.i_ab = k.i_ab;
        summary.chi_be = k.chi_be;
        summary.rate_bits_per_symbol = k.rate;
    }
    let out = KeyrateOutput { source, summary };
    if let Some(dir) = &cli.out {
        out_dir(dir)?;
        let path = dir.join("keyrate.json");
        write_json(&path, &out).map_err(|e| trace_err(&path, e))?;
    }
    let text = if args.summary_only {
        format!("{:.6e}", summary.rate_bits_per_symbol)
    } else {
        serde_json::to_string_pretty(&out).map_err(|e| CliError::Io(e.to_string()))?
    };
    writeln!(stdout, "{text}").map_err(|e| CliError::Io(e.to_string()))
}

pub const SWEEP_HEADER: &str = "param,value,seed,r2_noise_signal_x,r2_noise_signal_p,r2_signal_atten_x,r2_signal_atten_p,max_residual_snu_x,max_residual_snu_p,excess_noise_slope_x,excess_noise_slope_p,accepted,reject_reasons";

fn sweep_config(base: &RunConfig, param: SweepParam, value: f64) -> Result<RunConfig, CliError> {
    let mut cfg = base.clone();
    match param {
        SweepParam::Vb => {
            let te = cfg.system.t_channel * cfg.system.eta;
            cfg.system.v_a_snu = value / te;
        }
        SweepParam::Delta => {
            fn set(a: &mut AttackConfig, value: f64) -> bool {
                match a {
                    AttackConfig::Saturation { delta, .. } => {
                        *delta = value;
                        true
                    }
                    AttackConfig::Composite { attacks } => attacks.iter_mut().any(|a| set(a, value)),
                    _ => false,
                }
            }
            let found = cfg.attack.as_mut().is_some_and(|a| set(a, value));
            if !found {
                return Err(CliError::Validation(
                    "attack-sweep --param delta needs a saturation attack in the config".into(),
                ));
            }
        }
    }
    Ok(cfg)
}

fn sweep(cli: &Cli, args: &SweepArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let mut base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::saturation_scenario(5.0, args.n_per_group, 1),
    };
    if let Some(s) = cli.seed {
        base.system.seed = s;
    }
    let name = match args.param {
        SweepParam::Delta => "delta",
        SweepParam::Vb => "vb",
    };
    let mut rows = vec![SWEEP_HEADER.to_string()];
    for &value in &args.values {
        let cfg = sweep_config(&base, args.param, value)?;
        for s in 0..args.seeds {
            let mut c = cfg.clone();
            c.system.seed = base.system.seed.wrapping_add(s);
            let run = c.resolve()?;
            let block = simulate_block_moments(&run.params, &run.schedule, c.attack.as_ref())?;
            let a = analyze_moments(&block, &run.thresholds)?;
            let (x, p) = (&a.verdict.x, &a.verdict.p);
            rows.push(format!(
                "{name},{value},{},{},{},{},{},{},{},{},{},{},{}",
                c.system.seed,
                x.r2_noise_signal,
                p.r2_noise_signal,
                x.r2_signal_atten,
                p.r2_signal_atten,
                x.max_residual_snu,
                p.max_residual_snu,
                x.excess_noise_slope,
                p.excess_noise_slope,
                a.verdict.accepted,
                a.verdict
                    .reject_reasons()
                    .map(|r| r.to_string())
                    .collect::<Vec<_>>()
                    .join("|")
            ));
        }
    }
    let table = rows.join("\n") + "\n";
    if let Some(dir) = &cli.out {
        out_dir(dir)?;
        let path = dir.join(format!("sweep_{name}.csv"));
        std::fs::write(&path, &table).map_err(|e| io_err(&path, e))?;
    }
    if args.summary_only {
        writeln!(stdout, "{} rows", rows.len() - 1)
    } else {
        write!(stdout, "{table}")
    }
    .map_err(|e| CliError::Io(e.to_string()))
}
