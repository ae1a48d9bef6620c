//! Classical pump preparation: a parity-rotated or half-blocked Gaussian.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{self, Grid, SampledField, Side};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpMode {
    /// Parity rotator at angle `phi` in front of the even mode.
    Rotated { phi: f64 },
    /// Opaque screen over one half plane.
    Blocked(Side),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    pub width: f64,
    pub mode: PumpMode,
}

impl PumpSpec {
    pub fn rotated(width: f64, phi: f64) -> Self {
        PumpSpec {
            width,
            mode: PumpMode::Rotated { phi },
        }
    }

    pub fn blocked(width: f64, side: Side) -> Self {
        PumpSpec {
            width,
            mode: PumpMode::Blocked(side),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::param(
                "w",
                format!("must be positive, got {}", self.width),
            ));
        }
        if let PumpMode::Rotated { phi } = self.mode {
            if !phi.is_finite() {
                return Err(Error::param("phi", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.mode {
            PumpMode::Rotated { phi } => format!("phi={phi:.6}"),
            PumpMode::Blocked(Side::Positive) => "blocked=positive".into(),
            PumpMode::Blocked(Side::Negative) => "blocked=negative".into(),
        }
    }
}

/// Analytic pump profile `g(x) (even + odd sgn x)` with `g` the Gaussian of
/// width `w`. Every pump element has its edge at `x = 0`; the profile is
/// defined to vanish exactly there, so joint-parity sums over the biphoton
/// stay exact on the discrete lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpProfile {
    width: f64,
    even: C64,
    odd: C64,
}

impl PumpProfile {
    pub fn new(width: f64, even: C64, odd: C64) -> Self {
        PumpProfile { width, even, odd }
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Coefficients of the even and the `sgn(x)`-odd component.
    pub fn coefficients(&self) -> (C64, C64) {
        (self.even, self.odd)
    }

    #[inline]
    pub fn value(&self, x: f64) -> C64 {
        if x == 0.0 {
            return C64::new(0.0, 0.0);
        }
        let g = (-x * x / (2.0 * self.width * self.width)).exp();
        let s = if x > 0.0 { self.odd } else { -self.odd };
        (self.even + s) * g
    }
}

#[derive(Debug, Clone)]
pub struct Pump {
    pub spec: PumpSpec,
    pub profile: PumpProfile,
    /// The prepared pump sampled on the photon grid, unit norm.
    pub field: SampledField,
    /// Transmitted power fraction (relative pair-generation rate).
    pub flux_factor: f64,
}

pub fn prepare_pump(grid: &Grid, spec: &PumpSpec) -> Result<Pump> {
    spec.validate()?;
    let even_mode = field::gaussian_even_mode(grid, spec.width)?;
    // normalization constant of the sampled Gaussian
    let n0 = even_mode.amplitudes()[grid.len() / 2].re
        / (-grid.x(grid.len() / 2).powi(2) / (2.0 * spec.width * spec.width)).exp();
    match spec.mode {
        PumpMode::Rotated { phi } => {
            let field = field::apply_phase_plate(&even_mode, phi);
            let (s, c) = (phi / 2.0).sin_cos();
            let profile =
                PumpProfile::new(spec.width, C64::new(c * n0, 0.0), C64::new(0.0, s * n0));
            Ok(Pump {
                spec: *spec,
                profile,
                field,
                flux_factor: 1.0,
            })
        }
        PumpMode::Blocked(side) => {
            let (blocked, fraction) = field::block_half(&even_mode, side);
            let field = blocked.normalized();
            let half = n0 / fraction.sqrt() / 2.0;
            let odd = match side {
                Side::Positive => -half,
                Side::Negative => half,
            };
            let profile = PumpProfile::new(spec.width, C64::new(half, 0.0), C64::new(odd, 0.0));
            Ok(Pump {
                spec: *spec,
                profile,
                field,
                flux_factor: fraction,
            })
        }
    }
}
