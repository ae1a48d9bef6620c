//! `parity-bell` command-line front end.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use parity_bell::bell::{
    optimal_settings, predicted_correlation, AnalyzerModel, BellEngine, ThetaAxis,
};
use parity_bell::biphoton::{build_biphoton, BiphotonAmplitude};
use parity_bell::config::{parse_config, Config, KernelConfig};
use parity_bell::counting::{fit_sinusoid, run_experiment_with, slice_scan_with, ChshEstimate};
use parity_bell::field::Side;
use parity_bell::output;
use parity_bell::pump::{prepare_pump, PumpMode, PumpSpec};
use parity_bell::schmidt::{
    schmidt_decompose_with, schmidt_number_1d, SchmidtOptions, ThresholdRule,
};
use parity_bell::tomography::{concurrence, project_parity_tomography, Pauli};
use parity_bell::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "parity-bell",
    version,
    about = "Spatial-parity Bell test simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Prepare the pump and biphoton; print a summary, optionally write the pump field.
    Prepare(Common),
    /// Schmidt spectrum of the biphoton (dense SVD).
    Schmidt {
        #[command(flatten)]
        common: Common,
        /// Threshold rule for the mode count: `eta` (lambda^2) or `singular` (lambda).
        #[arg(long, default_value = "eta")]
        rule: String,
    },
    /// Outcome probabilities and correlation at one setting pair.
    Correlation {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        theta1: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        theta2: f64,
    },
    /// Correlation landscape over a square settings grid.
    Landscape {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 32)]
        points: usize,
        /// Angle range `start,end` (end excluded); defaults to one full turn.
        #[arg(long, allow_negative_numbers = true)]
        range: Option<String>,
    },
    /// CHSH value at the optimal settings.
    Chsh {
        #[command(flatten)]
        common: Common,
        /// Exact probabilities instead of simulated counts.
        #[arg(long)]
        exact: bool,
    },
    /// Simulated (+,+) coincidences versus theta1 at fixed theta2.
    Slice {
        #[command(flatten)]
        common: Common,
        /// Fixed analyzer angle of photon 2 (default pi/8).
        #[arg(long, allow_negative_numbers = true)]
        theta2: Option<f64>,
        #[arg(long, default_value_t = 64)]
        points: usize,
    },
    /// Full counting experiment at the optimal settings; JSON report.
    Experiment(Common),
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pump parity-rotation angle.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "blocked")]
    phi: Option<f64>,
    /// Block one half plane of the pump: positive or negative.
    #[arg(long)]
    blocked: Option<String>,
    /// Interpret all angles on the command line in degrees.
    #[arg(long)]
    degrees: bool,
    /// Grid samples per coordinate (even).
    #[arg(long = "m")]
    m: Option<usize>,
    /// Half-width of the grid window.
    #[arg(long = "x-max")]
    x_max: Option<f64>,
    /// Pump width.
    #[arg(long)]
    w: Option<f64>,
    /// Kernel width b.
    #[arg(long)]
    b: Option<f64>,
    /// Biphoton representation: lazy or dense.
    #[arg(long)]
    representation: Option<String>,
    /// Analyzer fringe visibility.
    #[arg(long, conflicts_with = "misaligned")]
    visibility: Option<f64>,
    /// Misaligned analyzers `a1,d1,a2,d2`.
    #[arg(long, allow_negative_numbers = true)]
    misaligned: Option<String>,
    /// Mean pairs per setting (e.g. 1e4).
    #[arg(long)]
    pairs: Option<f64>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Double the slice counts of a blocked pump.
    #[arg(long)]
    double_blocked: bool,
    /// Write to this file instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

impl Common {
    fn angle(&self, x: f64) -> f64 {
        if self.degrees {
            x.to_radians()
        } else {
            x
        }
    }

    fn config(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
                parse_config(&text)?
            }
            None => Config::default(),
        };
        if let Some(m) = self.m {
            cfg.grid.m = m;
        }
        if let Some(x) = self.x_max {
            cfg.grid.x_max = x;
        }
        if let Some(r) = &self.representation {
            cfg.grid.representation = r.parse().map_err(|e: String| Error::Config {
                key: "--representation".into(),
                message: e,
            })?;
        }
        if let Some(w) = self.w {
            cfg.pump.width = w;
        }
        if let Some(phi) = self.phi {
            cfg.pump.mode = PumpMode::Rotated {
                phi: self.angle(phi),
            };
        }
        if let Some(side) = &self.blocked {
            let side: Side = side.parse().map_err(|e: String| Error::Config {
                key: "--blocked".into(),
                message: e,
            })?;
            cfg.pump.mode = PumpMode::Blocked(side);
        }
        if let Some(b) = self.b {
            cfg.kernel = KernelConfig::Ratio { b };
        }
        if let Some(v) = self.visibility {
            cfg.analyzer = AnalyzerModel::Visibility { v };
        }
        if let Some(spec) = &self.misaligned {
            let parts: Vec<f64> = spec
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config {
                    key: "--misaligned".into(),
                    message: format!("expected `a1,d1,a2,d2`, got `{spec}`"),
                })?;
            if parts.len() != 4 {
                return Err(Error::Config {
                    key: "--misaligned".into(),
                    message: "expected four values".into(),
                });
            }
            cfg.analyzer = AnalyzerModel::misaligned(
                parts[0],
                self.angle(parts[1]),
                parts[2],
                self.angle(parts[3]),
            );
        }
        if let Some(p) = self.pairs {
            cfg.run.pairs_per_setting = p;
        }
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if self.double_blocked {
            cfg.run.double_blocked_counts = true;
        }
        if let Some(path) = &self.output {
            cfg.output.path = Some(path.clone());
        }
        if let Some(f) = &self.format {
            cfg.output.format = f.parse()?;
        }
        cfg.run.model = cfg.analyzer;
        cfg.validate()?;
        Ok(cfg)
    }
}

struct Prepared {
    cfg: Config,
    spec: PumpSpec,
    bp: BiphotonAmplitude,
}

fn prepare(common: &Common) -> Result<Prepared> {
    let cfg = common.config()?;
    let grid = cfg.grid()?;
    let spec = cfg.pump_spec();
    let pump = prepare_pump(&grid, &spec)?;
    let bp = build_biphoton(&pump, cfg.kernel_width(), cfg.grid.representation)?;
    log::info!(
        "biphoton ready: M = {}, b = {}, {:?}",
        grid.len(),
        cfg.kernel_width(),
        cfg.grid.representation
    );
    Ok(Prepared { cfg, spec, bp })
}

/// Write to the configured path, or to stdout when none is set.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            output::write_text(p, text)?;
            eprintln!("wrote {}", p.display());
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_prepare(common: &Common) -> Result<()> {
    let Prepared { cfg, spec, bp } = prepare(common)?;
    let grid = *bp.grid();
    let (w, b) = cfg.dimensionless_widths();
    println!("state      {}", spec.label());
    println!(
        "grid       M = {}, x_max = {}, dx = {:.6e}",
        grid.len(),
        grid.x_max(),
        grid.dx()
    );
    println!("widths     w = {w}, b = {b:.6e} (b/w = {:.6e})", b / w);
    println!("flux       {:.6}", bp.flux_factor());
    println!("norm       {:.12}", bp.norm_sqr());
    println!("K (1D)     {:.6}", schmidt_number_1d(w, b));
    let rho = project_parity_tomography(&bp);
    println!("<Z (x) Z>  {:.9}", rho.expectation(Pauli::Z, Pauli::Z));
    println!("concurrence {:.6}", concurrence(&rho)?);
    if let Some(path) = cfg.output.path.as_deref() {
        let pump = prepare_pump(&grid, &spec)?;
        let rows = (0..grid.len()).map(|k| {
            let z = pump.field.amplitudes()[k];
            format!(
                "{},{},{}",
                output::fmt_float(grid.x(k)),
                output::fmt_float(z.re),
                output::fmt_float(z.im)
            )
        });
        let mut text = String::from("x,re,im\n");
        for r in rows {
            text.push_str(&r);
            text.push('\n');
        }
        emit(Some(path), &text)?;
    }
    Ok(())
}

fn cmd_schmidt(common: &Common, rule: &str) -> Result<()> {
    let rule = match rule {
        "eta" => ThresholdRule::EtaEigenvalue,
        "singular" => ThresholdRule::SingularValue,
        other => {
            return Err(Error::Config {
                key: "--rule".into(),
                message: format!("expected eta or singular, got `{other}`"),
            })
        }
    };
    let Prepared { cfg, bp, .. } = prepare(common)?;
    let spec = schmidt_decompose_with(
        &bp,
        SchmidtOptions {
            rule,
            fraction: 0.01,
        },
    )?;
    let (w, b) = cfg.dimensionless_widths();
    eprintln!("participation K = {:.6}", spec.participation);
    eprintln!("threshold count = {}", spec.threshold_count);
    eprintln!(
        "analytic 1D K   = {:.6} (squared {:.6})",
        schmidt_number_1d(w, b),
        schmidt_number_1d(w, b).powi(2)
    );
    emit(cfg.output.path.as_deref(), &output::schmidt_csv(&spec))
}

fn cmd_correlation(common: &Common, theta1: f64, theta2: f64) -> Result<()> {
    let Prepared { cfg, spec, bp } = prepare(common)?;
    let (t1, t2) = (common.angle(theta1), common.angle(theta2));
    let engine = BellEngine::new(&bp, cfg.analyzer)?;
    let p = engine.probabilities(t1, t2);
    println!("p_pp {:.9}", p.pp);
    println!("p_pm {:.9}", p.pm);
    println!("p_mp {:.9}", p.mp);
    println!("p_mm {:.9}", p.mm);
    println!("lost {:.3e}", p.lost_fraction);
    println!("E    {:.9}", p.correlation());
    if let PumpMode::Rotated { phi } = spec.mode {
        println!(
            "cos(theta1+theta2+phi) {:.9}",
            predicted_correlation(t1, t2, phi)
        );
    }
    Ok(())
}

fn parse_range(common: &Common, range: Option<&str>) -> Result<(f64, f64)> {
    let Some(r) = range else {
        return Ok((0.0, 2.0 * PI));
    };
    let bad = || Error::Config {
        key: "--range".into(),
        message: format!("expected `start,end`, got `{r}`"),
    };
    let (a, b) = r.split_once(',').ok_or_else(bad)?;
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    Ok((common.angle(a), common.angle(b)))
}

fn cmd_landscape(common: &Common, points: usize, range: Option<&str>) -> Result<()> {
    let (start, end) = parse_range(common, range)?;
    let Prepared { cfg, bp, .. } = prepare(common)?;
    let axis = ThetaAxis {
        count: points,
        start,
        end,
    };
    let land = BellEngine::new(&bp, cfg.analyzer)?.landscape(&axis, &axis)?;
    emit(cfg.output.path.as_deref(), &output::landscape_csv(&land))
}

fn print_chsh(est: &ChshEstimate, settings: &parity_bell::MeasurementSettings) {
    for ((t1, t2), c) in settings.pairs().iter().zip(est.correlations.iter()) {
        if est.exact {
            println!("E({t1:.6}, {t2:.6}) = {:.9}", c.e);
        } else {
            println!("E({t1:.6}, {t2:.6}) = {:.6} +- {:.6}", c.e, c.sigma);
        }
    }
    println!("B = {:.9}", est.b);
    if !est.exact {
        println!("sigma_B = {:.6}", est.sigma_b);
        match est.n_sigma {
            Some(n) => println!("n_sigma = {n:.3}"),
            None => println!("n_sigma = undefined"),
        }
    }
}

fn optimal_for(spec: &PumpSpec) -> parity_bell::MeasurementSettings {
    match spec.mode {
        PumpMode::Rotated { phi } => optimal_settings(phi),
        PumpMode::Blocked(_) => optimal_settings(0.0),
    }
}

fn cmd_chsh(common: &Common, exact: bool) -> Result<()> {
    let Prepared { cfg, spec, bp } = prepare(common)?;
    let settings = optimal_for(&spec);
    let engine = BellEngine::new(&bp, cfg.analyzer)?;
    let est = if exact {
        ChshEstimate::exact(engine.correlations(&settings))
    } else {
        run_experiment_with(&engine, bp.flux_factor(), &settings, &cfg.run_config())?.estimate()?
    };
    print_chsh(&est, &settings);
    Ok(())
}

fn cmd_slice(common: &Common, theta2: Option<f64>, points: usize) -> Result<()> {
    let Prepared { cfg, bp, .. } = prepare(common)?;
    let theta2 = theta2.map(|t| common.angle(t)).unwrap_or(PI / 8.0);
    let axis = ThetaAxis::full_turn(points).values()?;
    let engine = BellEngine::new(&bp, cfg.analyzer)?;
    let pts = slice_scan_with(&engine, bp.flux_factor(), theta2, &axis, &cfg.run_config())?;
    if let Ok(fit) = fit_sinusoid(&pts) {
        eprintln!(
            "fit: offset {:.3}, visibility {:.4} +- {:.4}, phase {:.4} +- {:.4}",
            fit.offset, fit.visibility, fit.sigma_visibility, fit.phase, fit.sigma_phase
        );
    }
    emit(cfg.output.path.as_deref(), &output::slice_csv(&pts))
}

fn cmd_experiment(common: &Common) -> Result<()> {
    let Prepared { cfg, spec, bp } = prepare(common)?;
    let settings = optimal_for(&spec);
    let engine = BellEngine::new(&bp, cfg.analyzer)?;
    let report = run_experiment_with(&engine, bp.flux_factor(), &settings, &cfg.run_config())?
        .with_label(spec.label());
    // JSON unless csv was asked for explicitly
    let csv = common
        .format
        .as_deref()
        .map(|f| f.eq_ignore_ascii_case("csv"))
        .unwrap_or(false);
    let text = if csv {
        output::counts_csv(&report.per_setting_counts)
    } else {
        output::report_json(&report)?
    };
    emit(cfg.output.path.as_deref(), &text)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(c) => cmd_prepare(&c),
        Command::Schmidt { common, rule } => cmd_schmidt(&common, &rule),
        Command::Correlation {
            common,
            theta1,
            theta2,
        } => cmd_correlation(&common, theta1, theta2),
        Command::Landscape {
            common,
            points,
            range,
        } => cmd_landscape(&common, points, range.as_deref()),
        Command::Chsh { common, exact } => cmd_chsh(&common, exact),
        Command::Slice {
            common,
            theta2,
            points,
        } => cmd_slice(&common, theta2, points),
        Command::Experiment(c) => cmd_experiment(&c),
    }
}

fn init_threads() -> std::result::Result<(), String> {
    let Ok(value) = std::env::var("PARITY_BELL_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("PARITY_BELL_THREADS must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn degrees_convert_angles() {
        let c = Common {
            degrees: true,
            phi: Some(180.0),
            ..Common::default()
        };
        let cfg = c.config().unwrap();
        assert_eq!(cfg.pump.mode, PumpMode::Rotated { phi: PI });
    }
}
