use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use marswpt::harvester::{self, fit_model};
use marswpt::link::{budget_breakdown, ShadowingMode, SmallScaleFading};
use marswpt::quantities::{dbm_to_mw, PowerDbm};
use marswpt::sweep::{self, AxisPoints, SweepAxis};
use marswpt::{Error, HarvesterModel, LinkScenario, MonteCarloSettings, SweepSpec};

mod config;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "marswpt", version, about = "RF wireless power transfer on the Martian surface")]
struct Cli {
    /// Worker threads for the Monte Carlo engine (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a single link and its harvested power.
    #[command(allow_negative_numbers = true)]
    Link(LinkArgs),
    /// Run a preset or configured sweep and write CSV.
    Sweep(SweepArgs),
    /// Fit a rational efficiency model to measured samples.
    Fit(FitArgs),
    /// List the built-in sweep presets.
    Presets,
}

#[derive(Args, Debug)]
struct LinkArgs {
    /// Flat key-value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Terrain profile: area1 or area2.
    #[arg(long)]
    area: Option<String>,
    /// Built-in harvester (A, B or C). Repeatable.
    #[arg(long = "harvester")]
    harvesters: Vec<String>,
    /// Harvester model file written by `fit`. Repeatable.
    #[arg(long = "harvester-file")]
    harvester_files: Vec<PathBuf>,
    #[arg(long)]
    p_tx_w: Option<f64>,
    #[arg(long)]
    distance_m: Option<f64>,
    #[arg(long)]
    g_t_db: Option<f64>,
    #[arg(long)]
    g_r_db: Option<f64>,
    #[arg(long)]
    frequency_hz: Option<f64>,
    /// Dust particle density.
    #[arg(long = "n-t-per-m3")]
    n_t_per_m3: Option<f64>,
    /// Dust particle radius.
    #[arg(long)]
    rho_p_m: Option<f64>,
    /// Receiver aperture half-width.
    #[arg(long)]
    beta_m: Option<f64>,
    /// Beam waist (default 7 wavelengths).
    #[arg(long)]
    r_d_m: Option<f64>,
    /// Pointing jitter standard deviation per axis.
    #[arg(long)]
    sigma_s_m: Option<f64>,
    #[arg(long, value_enum)]
    small_scale: Option<SmallScaleArg>,
    #[arg(long, value_enum)]
    shadowing: Option<ShadowingArg>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Print CSV rows instead of the text report.
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Built-in preset name (see `presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Flat key-value config file describing the sweep.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path (default: stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long, value_enum)]
    shadowing: Option<ShadowingArg>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// CSV with header `input_power_mw,efficiency_percent`.
    input: PathBuf,
    /// Refine the linear fit by nonlinear least squares.
    #[arg(long)]
    refine: bool,
    /// Name stored in the model file.
    #[arg(long, default_value = "fitted")]
    name: String,
    /// Write the fitted model to this file.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum ShadowingArg {
    Sampled,
    Median,
}

impl From<ShadowingArg> for ShadowingMode {
    fn from(a: ShadowingArg) -> Self {
        match a {
            ShadowingArg::Sampled => ShadowingMode::Sampled,
            ShadowingArg::Median => ShadowingMode::Median,
        }
    }
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum SmallScaleArg {
    Off,
    Rayleigh,
}

impl From<SmallScaleArg> for SmallScaleFading {
    fn from(a: SmallScaleArg) -> Self {
        match a {
            SmallScaleArg::Off => SmallScaleFading::Off,
            SmallScaleArg::Rayleigh => SmallScaleFading::Rayleigh,
        }
    }
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn usage_list(errs: Vec<String>) -> Self {
        CliError::Usage(errs.join("\n"))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(v) => CliError::usage_list(v),
            e @ (Error::Parse { .. } | Error::Domain(_) | Error::Underdetermined { .. }) => {
                CliError::Usage(e.to_string())
            }
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_workers(cli.workers).and_then(|()| match cli.command {
        Command::Link(a) => cmd_link(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Presets => cmd_presets(),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn configure_workers(workers: Option<usize>) -> CliResult {
    match workers {
        None => Ok(()),
        Some(0) => Err(CliError::Usage("--workers must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string())),
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p).map_err(CliError::Usage),
        None => Ok(RunConfig::default()),
    }
}

fn non_empty<T: Clone>(v: &[T]) -> Option<Vec<T>> {
    (!v.is_empty()).then(|| v.to_vec())
}

fn cmd_link(a: LinkArgs) -> CliResult {
    let mut cfg = load_config(a.config.as_ref())?;
    cfg.overlay(&RunConfig {
        area: a.area.clone(),
        p_tx_w: a.p_tx_w,
        distance_m: a.distance_m,
        g_t_db: a.g_t_db,
        g_r_db: a.g_r_db,
        frequency_hz: a.frequency_hz,
        n_t_per_m3: a.n_t_per_m3,
        rho_p_m: a.rho_p_m,
        beta_m: a.beta_m,
        r_d_m: a.r_d_m,
        sigma_s_m: a.sigma_s_m,
        small_scale: a.small_scale.map(Into::into),
        shadowing: a.shadowing.map(Into::into),
        n_samples: a.n_samples,
        seed: a.seed,
        harvesters: non_empty(&a.harvesters),
        harvester_files: non_empty(&a.harvester_files),
        ..Default::default()
    });

    let scenario = cfg
        .scenario_from(&LinkScenario::default())
        .map_err(CliError::usage_list)?;
    let mc = cfg
        .monte_carlo_from(&MonteCarloSettings::default())
        .map_err(CliError::usage_list)?;
    let harvesters = cfg
        .harvester_models(&HarvesterModel::builtins())
        .map_err(CliError::usage_list)?;

    // A one-point sweep shares the CSV schema and the seeding of full sweeps.
    let spec = SweepSpec {
        name: "link".into(),
        axis: SweepAxis::Distance,
        points: AxisPoints::Explicit(vec![scenario.distance_m]),
        secondary: None,
        base: scenario.clone(),
        harvesters: harvesters.clone(),
        mc,
    };
    let rows = sweep::run_sweep(&spec)?;

    let stdout = io::stdout();
    if a.csv {
        sweep::write_csv(&rows, stdout.lock())?;
        return Ok(());
    }

    let b = budget_breakdown(&scenario)?;
    let mut out = stdout.lock();
    writeln!(out, "median P_RX: {:.2} dBm ({:.6} mW)", b.p_rx_dbm, dbm_to_mw(PowerDbm(b.p_rx_dbm)).value())?;
    writeln!(out, "budget:")?;
    writeln!(out, "  P_TX            {:>9.2} dBm ({} W)", b.p_tx_dbm, scenario.p_tx_w)?;
    writeln!(out, "  G_T             {:>9.2} dB", b.g_t_db)?;
    writeln!(out, "  G_R             {:>9.2} dB", b.g_r_db)?;
    writeln!(
        out,
        "  path loss       {:>9.2} dB  ({}, alpha {}, sigma {} dB, d {} m)",
        b.path_loss_db, scenario.terrain.name, scenario.terrain.alpha, scenario.terrain.sigma_db, scenario.distance_m
    )?;
    writeln!(out, "  dust            {:>9.2} dB", b.dust_loss_db)?;
    writeln!(out, "  pointing        {:>9.2} dB", b.pointing_loss_db)?;
    writeln!(
        out,
        "monte carlo: {} samples, seed {}, shadowing {}, small-scale {}",
        spec.mc.n_samples,
        spec.mc.seed,
        format!("{:?}", scenario.shadowing).to_lowercase(),
        format!("{:?}", scenario.small_scale).to_lowercase()
    )?;
    for (model, row) in harvesters.iter().zip(&rows) {
        let p_mw = dbm_to_mw(PowerDbm(b.p_rx_dbm)).value();
        let eff = model.efficiency(p_mw)?;
        let s = &row.stats;
        writeln!(out, "harvester {}:", model.name)?;
        writeln!(
            out,
            "  deterministic   {:.4} uW (efficiency {:.2} %{})",
            p_mw * eff.percent * 10.0,
            eff.percent,
            if model.is_extrapolated(p_mw) { ", extrapolated" } else { "" }
        )?;
        writeln!(out, "  mean            {:.4} uW", s.mean_uw)?;
        writeln!(out, "  median          {:.4} uW", s.median_uw)?;
        for &(q, v) in &s.quantiles {
            writeln!(out, "  p{:<14} {:.4} uW", format!("{:02}", (q * 100.0).round()), v)?;
        }
        writeln!(out, "  clamped         {} / {}", s.clamp_count, s.n_samples)?;
        writeln!(out, "  extrapolated    {} / {}", s.extrapolated_count, s.n_samples)?;
    }
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult {
    let mut cfg = load_config(a.config.as_ref())?;
    if a.preset.is_none() && a.config.is_none() {
        return Err(CliError::Usage(format!(
            "give --preset or --config; valid presets: {}",
            sweep::PRESET_NAMES.join(", ")
        )));
    }
    cfg.overlay(&RunConfig {
        preset: a.preset.clone(),
        seed: a.seed,
        n_samples: a.n_samples,
        shadowing: a.shadowing.map(Into::into),
        ..Default::default()
    });
    let spec = cfg.sweep_spec().map_err(CliError::usage_list)?;

    // Open the output before the run so a bad path fails fast.
    let sink: Box<dyn Write> = match &a.output {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            CliError::Runtime(format!("cannot write {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout())),
    };
    let rows = sweep::run_sweep(&spec)?;
    sweep::write_csv(&rows, sink)?;
    if let Some(p) = &a.output {
        eprintln!("{}: {} rows written to {}", spec.name, rows.len(), p.display());
    }
    Ok(())
}

fn cmd_fit(a: FitArgs) -> CliResult {
    let samples = harvester::read_samples_file(&a.input).map_err(|e| match e {
        Error::Io(io) => CliError::Runtime(format!("cannot read {}: {io}", a.input.display())),
        e => e.into(),
    })?;
    let report = fit_model(&a.name, &samples, a.refine)?;
    let m = &report.model;
    let mut out = io::stdout().lock();
    writeln!(out, "model {} from {} samples", m.name, samples.len())?;
    writeln!(out, "  a2 = {:.10e}", m.a2)?;
    writeln!(out, "  a1 = {:.10e}", m.a1)?;
    writeln!(out, "  a0 = {:.10e}", m.a0)?;
    writeln!(out, "  b2 = {:.10e}", m.b2)?;
    writeln!(out, "  b1 = {:.10e}", m.b1)?;
    writeln!(out, "  b0 = {:.10e}", m.b0)?;
    writeln!(out, "residual rms: {:.6} %", report.rms_residual)?;
    writeln!(out, "valid range: [{}, {}] mW", m.valid_min_mw, m.valid_max_mw)?;
    if a.refine {
        writeln!(out, "refine iterations: {}", report.refine_iterations)?;
    }
    if let Some(p) = &a.output {
        m.save(p)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", p.display())))?;
        writeln!(out, "model written to {}", p.display())?;
    }
    Ok(())
}

fn cmd_presets() -> CliResult {
    let mut out = io::stdout().lock();
    for spec in sweep::builtin_presets() {
        let pts = spec.points.values();
        let secondary = match &spec.secondary {
            Some(s) => format!(", {} in {:?}", s.name(), s.values()),
            None => String::new(),
        };
        writeln!(
            out,
            "{:<6} {} over [{}, {}] ({} points){}, {}, {} rows",
            spec.name,
            spec.axis,
            pts[0],
            pts[pts.len() - 1],
            pts.len(),
            secondary,
            spec.base.terrain.name,
            spec.row_count()
        )?;
    }
    Ok(())
}
