//! `stripeloc` command-line front end.
//!
//! Exit codes: 0 on success, 1 on configuration or usage errors, 2 on
//! numerical failures.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use stripeloc::fim::peb_heatmap;
use stripeloc::harness::montecarlo::{run_monte_carlo, MonteCarloConfig};
use stripeloc::harness::selftest::run_selftest;
use stripeloc::harness::sweep::{parse_values, run_bounds_sweep, write_csv, CaseSpec, SweepVar};
use stripeloc::signal::{dump_observation_csv, synthesize_trial};
use stripeloc::{load_scenario, Error, FimOptions, Scenario, SyncMode, Vec3};

#[derive(Parser)]
#[command(name = "stripeloc", version, about = "Bounds and estimators for localization with distributed antenna stripes")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file, or `canonical` / `estimation` for the bundled ones.
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads (all cores when absent).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the synchronization mode.
    #[arg(long, global = true, value_enum)]
    sync: Option<Sync>,
    /// Override the position dimension (2 means known UE height).
    #[arg(long, global = true)]
    dim: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sync {
    Cp,
    Ncp,
}

impl From<Sync> for SyncMode {
    fn from(s: Sync) -> Self {
        match s {
            Sync::Cp => SyncMode::Cp,
            Sync::Ncp => SyncMode::Ncp,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Error bounds for all multipath cases, optionally over a bandwidth list.
    Bounds {
        /// Bandwidths in Hz: `a,b,c`, `lo:hi:linN` or `lo:hi:logN`.
        #[arg(long)]
        bandwidth: Option<String>,
        /// SDNR in dB (single value).
        #[arg(long)]
        sdnr: Option<String>,
    },
    /// Synthesizes observations.
    Simulate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        trials: u64,
        /// SDNR in dB (single value).
        #[arg(long)]
        sdnr: Option<String>,
    },
    /// Monte Carlo run of the estimation pipeline.
    Estimate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// SDNR list in dB.
        #[arg(long)]
        sdnr: Option<String>,
    },
    /// Bound sweep over one variable, every case and both sync modes.
    Sweep {
        /// `bandwidth`, `aperture` or `sdnr`.
        #[arg(long, default_value = "bandwidth")]
        var: String,
        /// Sweep values: `a,b,c`, `lo:hi:linN` or `lo:hi:logN`.
        #[arg(long)]
        values: Option<String>,
        /// Shorthand for `--var bandwidth --values <list>`.
        #[arg(long)]
        bandwidth: Option<String>,
        /// Shorthand for `--var sdnr --values <list>`.
        #[arg(long)]
        sdnr: Option<String>,
    },
    /// PEB over a horizontal grid of UE positions.
    Heatmap {
        /// Bandwidth in Hz (single value).
        #[arg(long)]
        bandwidth: Option<String>,
        /// Grid step (m).
        #[arg(long, default_value_t = 0.25)]
        step: f64,
        /// UE height of the grid (m); the scenario UE height when absent.
        #[arg(long)]
        height: Option<f64>,
    },
    /// Runs the invariant checks.
    Selftest,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Numerical(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn scenario(common: &Common, default: &str) -> CliResult<Scenario> {
    let mut s = load_scenario(common.scenario.as_deref().unwrap_or(default))?;
    if let Some(sync) = common.sync {
        s.sync_mode = sync.into();
    }
    if let Some(dim) = common.dim {
        s.dim = dim;
    }
    s.validate()?;
    Ok(s)
}

fn values(spec: &str) -> CliResult<Vec<f64>> {
    Ok(parse_values(spec)?)
}

fn single(spec: &Option<String>, what: &str) -> CliResult<Option<f64>> {
    let Some(spec) = spec else { return Ok(None) };
    match values(spec)?.as_slice() {
        [v] => Ok(Some(*v)),
        _ => Err(CliError::Config(format!("--{what} takes a single value here"))),
    }
}

fn output(common: &Common) -> CliResult<Box<dyn Write>> {
    Ok(match &common.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(value: &T, mut out: impl Write) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn syncs(common: &Common, s: &Scenario) -> Vec<SyncMode> {
    match common.sync {
        Some(m) => vec![m.into()],
        None => vec![s.sync_mode],
    }
}

fn bounds(common: &Common, bandwidth: &Option<String>, sdnr: &Option<String>) -> CliResult<()> {
    let mut s = scenario(common, "canonical")?;
    if let Some(v) = single(sdnr, "sdnr")? {
        s.sdnr_db = v;
    }
    let bws = match bandwidth {
        Some(spec) => values(spec)?,
        None => vec![s.waveform.bandwidth()],
    };
    let rows = run_bounds_sweep(&s, SweepVar::Bandwidth, &bws, &CaseSpec::ALL, &syncs(common, &s));
    let out = output(common)?;
    match common.format {
        Format::Csv => write_csv(&rows, out)?,
        Format::Json => write_json(&rows, out)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct Snapshot {
    trial: u64,
    pt_w: f64,
    /// Per stripe, `M × K` entries as `[re, im]`, row-major.
    y: Vec<Vec<Vec<[f64; 2]>>>,
}

fn simulate(common: &Common, seed: u64, trials: u64, sdnr: &Option<String>) -> CliResult<()> {
    let mut s = scenario(common, "canonical")?;
    if let Some(v) = single(sdnr, "sdnr")? {
        s.sdnr_db = v;
    }
    let mut out = output(common)?;
    let mut snaps = Vec::new();
    for t in 0..trials {
        let obs = synthesize_trial(&s, seed, t, 1.0)?;
        match common.format {
            Format::Csv => {
                writeln!(out, "# trial {t}")?;
                dump_observation_csv(&obs, &mut out)?;
            }
            Format::Json => snaps.push(Snapshot {
                trial: t,
                pt_w: obs.pt,
                y: obs
                    .y
                    .iter()
                    .map(|y| {
                        (0..y.nrows())
                            .map(|r| y.row(r).iter().map(|v| [v.re, v.im]).collect())
                            .collect()
                    })
                    .collect(),
            }),
        }
    }
    if let Format::Json = common.format {
        write_json(&snaps, &mut out)?;
    }
    out.flush()?;
    Ok(())
}

fn estimate(common: &Common, seed: u64, trials: usize, sdnr: &Option<String>) -> CliResult<()> {
    let s = scenario(common, "estimation")?;
    if trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let sdnr = match sdnr {
        Some(spec) => values(spec)?,
        None => vec![s.sdnr_db],
    };
    let table = run_monte_carlo(&s, &MonteCarloConfig::new(sdnr, trials, seed))?;
    let mut out = output(common)?;
    match common.format {
        Format::Csv => table.write_csv(&mut out)?,
        Format::Json => write_json(&table, &mut out)?,
    }
    out.flush()?;
    let failed = table.trials.iter().filter(|t| t.failure.is_some()).count();
    if failed == table.trials.len() {
        return Err(CliError::Numerical("every trial failed".into()));
    }
    Ok(())
}

fn sweep(
    common: &Common,
    var: &str,
    vals: &Option<String>,
    bandwidth: &Option<String>,
    sdnr: &Option<String>,
) -> CliResult<()> {
    let s = scenario(common, "canonical")?;
    let (var, spec) = match (vals, bandwidth, sdnr) {
        (Some(v), None, None) => (SweepVar::parse(var)?, v.clone()),
        (None, Some(b), None) => (SweepVar::Bandwidth, b.clone()),
        (None, None, Some(d)) => (SweepVar::Sdnr, d.clone()),
        _ => {
            return Err(CliError::Config(
                "give exactly one of --values, --bandwidth or --sdnr".into(),
            ))
        }
    };
    let syncs = match common.sync {
        Some(m) => vec![m.into()],
        None => vec![SyncMode::Cp, SyncMode::Ncp],
    };
    let rows = run_bounds_sweep(&s, var, &values(&spec)?, &CaseSpec::ALL, &syncs);
    let out = output(common)?;
    match common.format {
        Format::Csv => write_csv(&rows, out)?,
        Format::Json => write_json(&rows, out)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct HeatCell {
    x: f64,
    y: f64,
    z: f64,
    peb_m: f64,
}

fn heatmap(common: &Common, bandwidth: &Option<String>, step: f64, height: Option<f64>) -> CliResult<()> {
    let mut s = scenario(common, "canonical")?;
    if let Some(b) = single(bandwidth, "bandwidth")? {
        s = s.with_bandwidth(b);
    }
    if !(step > 0.0) {
        return Err(CliError::Config("--step must be positive".into()));
    }
    let z = height.unwrap_or(s.ue_position.z);
    let (lo, hi) = (s.search.room_min, s.search.room_max);
    let margin = step / 2.0;
    let axis = |a: f64, b: f64| {
        let n = ((b - a - 2.0 * margin) / step).floor().max(0.0) as usize + 1;
        (0..n).map(move |i| a + margin + i as f64 * step)
    };
    let grid: Vec<Vec3> = axis(lo.y, hi.y)
        .flat_map(|y| axis(lo.x, hi.x).map(move |x| Vec3::new(x, y, z)))
        .collect();
    let peb = peb_heatmap(&s, &grid, &FimOptions::from_scenario(&s))?;
    let cells: Vec<HeatCell> = grid
        .iter()
        .zip(&peb)
        .map(|(p, v)| HeatCell {
            x: p.x,
            y: p.y,
            z: p.z,
            peb_m: *v,
        })
        .collect();
    let mut out = output(common)?;
    match common.format {
        Format::Csv => {
            writeln!(out, "x_m,y_m,z_m,peb_m")?;
            for c in &cells {
                writeln!(out, "{},{},{},{:e}", c.x, c.y, c.z, c.peb_m)?;
            }
        }
        Format::Json => write_json(&cells, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn selftest(common: &Common) -> CliResult<()> {
    let checks = run_selftest();
    let mut out = output(common)?;
    match common.format {
        Format::Csv => {
            writeln!(out, "check,passed,detail")?;
            for c in &checks {
                writeln!(out, "{},{},{}", c.name, c.passed, c.detail)?;
            }
        }
        Format::Json => write_json(&checks, &mut out)?,
    }
    out.flush()?;
    match checks.iter().find(|c| !c.passed) {
        Some(c) => Err(CliError::Numerical(format!("self-test `{}` failed", c.name))),
        None => Ok(()),
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let c = &cli.common;
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match &cli.command {
        Command::Bounds { bandwidth, sdnr } => bounds(c, bandwidth, sdnr),
        Command::Simulate { seed, trials, sdnr } => simulate(c, *seed, *trials, sdnr),
        Command::Estimate { seed, trials, sdnr } => estimate(c, *seed, *trials, sdnr),
        Command::Sweep {
            var,
            values,
            bandwidth,
            sdnr,
        } => sweep(c, var, values, bandwidth, sdnr),
        Command::Heatmap { bandwidth, step, height } => heatmap(c, bandwidth, *step, *height),
        Command::Selftest => selftest(c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}
