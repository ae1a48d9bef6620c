//! Run configuration.
//!
//! Plain text, one `key = value` per line. `[section]` headers prefix the
//! keys that follow, so `[pump]` then `phi = 0` is the same as
//! `pump.phi = 0`. `#` starts a comment. Unknown keys are rejected.
//!
//! ```text
//! [grid]
//! M = 8192
//! x_max = 4
//! [pump]
//! phi = 1.5708
//! [analyzer]
//! visibility = 0.845
//! ```

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bell::AnalyzerModel;
use crate::biphoton::Representation;
use crate::counting::RunConfig;
use crate::error::{Error, Result};
use crate::field::{Grid, Side};
use crate::pump::{PumpMode, PumpSpec};
use crate::schmidt::effective_kernel_width;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub m: usize,
    pub x_max: f64,
    pub representation: Representation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelConfig {
    /// Kernel width in units of the pump width.
    Ratio { b: f64 },
    /// Pump wavelength and crystal thickness in meters; `pump.w` is then in
    /// meters too.
    Physical { lambda_p: f64, ell: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::config(
                "output.format",
                format!("expected csv or json, got `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub grid: GridConfig,
    pub pump: PumpSpec,
    pub kernel: KernelConfig,
    pub analyzer: AnalyzerModel,
    pub run: RunConfig,
    pub output: OutputConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            grid: GridConfig {
                m: 2048,
                x_max: 4.0,
                representation: Representation::Lazy,
            },
            pump: PumpSpec::rotated(1.0, 0.0),
            kernel: KernelConfig::Ratio { b: 0.005 },
            analyzer: AnalyzerModel::Ideal,
            run: RunConfig::default(),
            output: OutputConfig {
                path: None,
                format: OutputFormat::Csv,
            },
        }
    }
}

/// Raw values gathered before cross-key validation.
#[derive(Default)]
struct Raw {
    phi: Option<f64>,
    blocked: Option<Side>,
    b: Option<f64>,
    lambda_p: Option<f64>,
    ell: Option<f64>,
    visibility: Option<f64>,
    misaligned: Option<[f64; 4]>,
    ideal: bool,
}

fn number(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("expected a number, got `{value}`")))?;
    if !v.is_finite() {
        return Err(Error::config(key, "must be finite"));
    }
    Ok(v)
}

fn positive(key: &str, value: &str) -> Result<f64> {
    let v = number(key, value)?;
    if v <= 0.0 {
        return Err(Error::config(key, format!("must be positive, got {v}")));
    }
    Ok(v)
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::config(
            key,
            format!("expected true or false, got `{value}`"),
        )),
    }
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2
        && ((v.starts_with('"') && v.ends_with('"')) || (v.starts_with('\'') && v.ends_with('\'')))
    {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

fn strip_comment(line: &str) -> &str {
    let mut quote = None;
    for (i, ch) in line.char_indices() {
        match (ch, quote) {
            ('"' | '\'', None) => quote = Some(ch),
            (c, Some(q)) if c == q => quote = None,
            ('#', None) => return &line[..i],
            _ => {}
        }
    }
    line
}

pub fn parse_config(text: &str) -> Result<Config> {
    let mut cfg = Config::default();
    let mut raw = Raw::default();
    let mut section = String::new();

    for (lineno, line) in text.lines().enumerate() {
        let line = strip_comment(line).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| {
                Error::config(
                    format!("line {}", lineno + 1),
                    "unterminated section header",
                )
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(
                format!("line {}", lineno + 1),
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        let key = key.trim();
        let full = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        let value = unquote(value);
        apply(&mut cfg, &mut raw, &full, value)?;
    }
    finish(cfg, raw)
}

fn apply(cfg: &mut Config, raw: &mut Raw, key: &str, value: &str) -> Result<()> {
    match key {
        "grid.M" | "grid.m" => {
            let m: usize = value.trim().parse().map_err(|_| {
                Error::config(key, format!("expected a positive integer, got `{value}`"))
            })?;
            cfg.grid.m = m;
        }
        "grid.x_max" => cfg.grid.x_max = positive(key, value)?,
        "grid.representation" => {
            cfg.grid.representation = value
                .trim()
                .parse()
                .map_err(|e: String| Error::config(key, e))?
        }
        "pump.w" => cfg.pump.width = positive(key, value)?,
        "pump.phi" => raw.phi = Some(number(key, value)?),
        "pump.blocked" => {
            raw.blocked = Some(
                value
                    .trim()
                    .parse()
                    .map_err(|e: String| Error::config(key, e))?,
            )
        }
        "kernel.b" => raw.b = Some(positive(key, value)?),
        "kernel.lambda_p" => raw.lambda_p = Some(positive(key, value)?),
        "kernel.ell" => raw.ell = Some(positive(key, value)?),
        "analyzer.ideal" => raw.ideal = boolean(key, value)?,
        "analyzer.visibility" => raw.visibility = Some(number(key, value)?),
        "analyzer.misaligned" => {
            let parts: Vec<&str> = value.split(',').collect();
            if parts.len() != 4 {
                return Err(Error::config(
                    key,
                    format!("expected `a1, d1, a2, d2`, got `{value}`"),
                ));
            }
            let mut v = [0.0; 4];
            for (slot, p) in v.iter_mut().zip(parts) {
                *slot = number(key, p)?;
            }
            raw.misaligned = Some(v);
        }
        "run.seed" => {
            cfg.run.seed = value.trim().parse().map_err(|_| {
                Error::config(key, format!("expected an unsigned integer, got `{value}`"))
            })?
        }
        "run.pairs_per_setting" | "run.pairs" => cfg.run.pairs_per_setting = positive(key, value)?,
        "run.double_blocked_counts" => cfg.run.double_blocked_counts = boolean(key, value)?,
        "output.path" => cfg.output.path = Some(PathBuf::from(value)),
        "output.format" => cfg.output.format = value.parse()?,
        other => return Err(Error::config(other, "unknown key")),
    }
    Ok(())
}

fn finish(mut cfg: Config, raw: Raw) -> Result<Config> {
    cfg.pump.mode = match (raw.phi, raw.blocked) {
        (Some(_), Some(_)) => {
            return Err(Error::config(
                "pump",
                "pump.phi and pump.blocked are mutually exclusive",
            ))
        }
        (Some(phi), None) => PumpMode::Rotated { phi },
        (None, Some(side)) => PumpMode::Blocked(side),
        (None, None) => PumpMode::Rotated { phi: 0.0 },
    };
    cfg.kernel = match (raw.b, raw.lambda_p, raw.ell) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(Error::config(
                "kernel",
                "kernel.b and the physical kernel are mutually exclusive",
            ))
        }
        (Some(b), None, None) => KernelConfig::Ratio { b },
        (None, Some(lambda_p), Some(ell)) => KernelConfig::Physical { lambda_p, ell },
        (None, Some(_), None) => {
            return Err(Error::config("kernel.ell", "required with kernel.lambda_p"))
        }
        (None, None, Some(_)) => {
            return Err(Error::config("kernel.lambda_p", "required with kernel.ell"))
        }
        (None, None, None) => cfg.kernel,
    };
    let chosen = usize::from(raw.ideal)
        + usize::from(raw.visibility.is_some())
        + usize::from(raw.misaligned.is_some());
    if chosen > 1 {
        return Err(Error::config(
            "analyzer",
            "ideal, visibility and misaligned are mutually exclusive",
        ));
    }
    cfg.analyzer = match (raw.visibility, raw.misaligned) {
        (Some(v), _) => AnalyzerModel::Visibility { v },
        (_, Some([a1, d1, a2, d2])) => AnalyzerModel::misaligned(a1, d1, a2, d2),
        _ => AnalyzerModel::Ideal,
    };
    cfg.run.model = cfg.analyzer;
    cfg.validate()?;
    Ok(cfg)
}

impl Config {
    /// Range checks shared by file and command-line input.
    pub fn validate(&self) -> Result<()> {
        let grid = Grid::new(self.grid.m, self.grid.x_max)
            .map_err(|e| Error::config("grid", e.to_string()))?;
        if !(self.pump.width.is_finite() && self.pump.width > 0.0) {
            return Err(Error::config(
                "pump.w",
                format!("must be positive, got {}", self.pump.width),
            ));
        }
        if let PumpMode::Rotated { phi } = self.pump.mode {
            if !phi.is_finite() {
                return Err(Error::config("pump.phi", "must be finite"));
            }
        }
        match self.kernel {
            KernelConfig::Ratio { b } if !(b.is_finite() && b > 0.0) => {
                return Err(Error::config(
                    "kernel.b",
                    format!("must be positive, got {b}"),
                ))
            }
            KernelConfig::Physical { lambda_p, ell } if !(lambda_p > 0.0 && ell > 0.0) => {
                return Err(Error::config("kernel", "lambda_p and ell must be positive"))
            }
            _ => {}
        }
        match self.analyzer {
            AnalyzerModel::Visibility { v } if !(0.0..=1.0).contains(&v) => {
                return Err(Error::config(
                    "analyzer.visibility",
                    format!("must lie in [0, 1], got {v}"),
                ))
            }
            AnalyzerModel::Misaligned { .. } => self
                .analyzer
                .validate(&grid)
                .map_err(|e| Error::config("analyzer.misaligned", e.to_string()))?,
            _ => {}
        }
        self.run
            .validate()
            .map_err(|e| Error::config("run.pairs_per_setting", e.to_string()))?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.m, self.grid.x_max)
    }

    /// Dimensionless `(w, b)` used by the core: physical input is converted
    /// to pump-width units here, once.
    pub fn dimensionless_widths(&self) -> (f64, f64) {
        match self.kernel {
            KernelConfig::Ratio { b } => (self.pump.width, b),
            KernelConfig::Physical { lambda_p, ell } => {
                (1.0, effective_kernel_width(lambda_p, ell) / self.pump.width)
            }
        }
    }

    /// Pump spec in the core's dimensionless units.
    pub fn pump_spec(&self) -> PumpSpec {
        PumpSpec {
            width: self.dimensionless_widths().0,
            mode: self.pump.mode,
        }
    }

    pub fn kernel_width(&self) -> f64 {
        self.dimensionless_widths().1
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            model: self.analyzer,
            ..self.run
        }
    }
}
