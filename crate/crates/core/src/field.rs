//! Sampled one-dimensional transverse fields and the elementary optical
//! operations acting on them.
//!
//! Fields live on a half-offset, mirror-symmetric grid: sample `k` sits at
//! `x_k = (k + 1/2 - M/2) dx` with `dx = 2 x_max / M`. There is never a
//! sample at `x = 0`, so `sgn(x_k)` is always `±1` and the mirror image
//! `x -> -x` maps sample `k` onto sample `M - 1 - k` exactly.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which half of the transverse plane an element acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Positive,
    Negative,
}

impl Side {
    pub fn contains(self, x: f64) -> bool {
        match self {
            Side::Positive => x > 0.0,
            Side::Negative => x < 0.0,
        }
    }
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" | "+" => Ok(Side::Positive),
            "negative" | "neg" | "-" => Ok(Side::Negative),
            other => Err(format!("expected `positive` or `negative`, got `{other}`")),
        }
    }
}

/// Sign of a transverse coordinate with the half-plane convention of the
/// phase plates: `x >= 0` belongs to the positive half.
#[inline]
pub fn half_plane_sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    m: usize,
    x_max: f64,
}

impl Grid {
    pub fn new(m: usize, x_max: f64) -> Result<Self> {
        if !m.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("M must be even, got {m}")));
        }
        if m < 4 {
            return Err(Error::InvalidGrid(format!("M must be at least 4, got {m}")));
        }
        if !(x_max.is_finite() && x_max > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "x_max must be positive, got {x_max}"
            )));
        }
        Ok(Grid { m, x_max })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.m
    }

    /// Always false; grids hold at least four samples.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * self.x_max / self.m as f64
    }

    #[inline]
    pub fn x(&self, k: usize) -> f64 {
        (k as f64 + 0.5 - (self.m / 2) as f64) * self.dx()
    }

    /// Index of the mirror-image sample `-x_k`.
    #[inline]
    pub fn mirror(&self, k: usize) -> usize {
        self.m - 1 - k
    }

    #[inline]
    pub fn sign(&self, k: usize) -> f64 {
        if k >= self.m / 2 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn samples(&self) -> Vec<f64> {
        (0..self.m).map(|k| self.x(k)).collect()
    }

    /// Fractional sample index of an arbitrary coordinate.
    #[inline]
    pub fn position(&self, x: f64) -> f64 {
        x / self.dx() + (self.m / 2) as f64 - 0.5
    }
}

/// Convenience wrapper matching the operation name used throughout the docs.
pub fn make_grid(m: usize, x_max: f64) -> Result<Grid> {
    Grid::new(m, x_max)
}

/// A complex amplitude per grid sample; `sum |psi_k|^2 dx` is the squared norm.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    grid: Grid,
    amp: Vec<C64>,
}

impl SampledField {
    pub fn from_vec(grid: Grid, amp: Vec<C64>) -> Result<Self> {
        if amp.len() != grid.len() {
            return Err(Error::param(
                "amplitude",
                format!("expected {} samples, got {}", grid.len(), amp.len()),
            ));
        }
        if amp.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::param("amplitude", "non-finite sample"));
        }
        Ok(SampledField { grid, amp })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> C64) -> Self {
        let amp = (0..grid.len()).map(|k| f(grid.x(k))).collect();
        SampledField { grid, amp }
    }

    pub fn zeros(grid: Grid) -> Self {
        SampledField {
            grid,
            amp: vec![C64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amp
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amp
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= 1e-12
    }

    pub fn scaled(&self, c: C64) -> Self {
        SampledField {
            grid: self.grid,
            amp: self.amp.iter().map(|z| z * c).collect(),
        }
    }

    /// Rescaled to unit norm; a zero field is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr();
        if n == 0.0 {
            return self.clone();
        }
        self.scaled(C64::new(1.0 / n.sqrt(), 0.0))
    }

    fn zip_with(&self, other: &SampledField, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let amp = self
            .amp
            .iter()
            .zip(&other.amp)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(SampledField {
            grid: self.grid,
            amp,
        })
    }

    pub fn add(&self, other: &SampledField) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SampledField) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn max_abs_diff(&self, other: &SampledField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .amp
            .iter()
            .zip(&other.amp)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// Even Gaussian mode `exp(-x^2 / (2 w^2))`, normalized on the grid.
pub fn gaussian_even_mode(grid: &Grid, w: f64) -> Result<SampledField> {
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::param("w", format!("must be positive, got {w}")));
    }
    let inside = (0..grid.len()).filter(|&k| grid.x(k).abs() <= w).count();
    if inside < 8 {
        return Err(Error::UnderResolved(format!(
            "only {inside} samples within ±w = ±{w} (dx = {:.3e}); need at least 8",
            grid.dx()
        )));
    }
    let f = SampledField::from_fn(*grid, |x| C64::new((-x * x / (2.0 * w * w)).exp(), 0.0));
    Ok(f.normalized())
}

/// Even and odd parts, `(f(x) ± f(-x)) / 2`.
pub fn parity_split(f: &SampledField) -> (SampledField, SampledField) {
    let g = f.grid;
    let mut even = Vec::with_capacity(g.len());
    let mut odd = Vec::with_capacity(g.len());
    for k in 0..g.len() {
        let a = f.amp[k];
        let b = f.amp[g.mirror(k)];
        even.push((a + b) * 0.5);
        odd.push((a - b) * 0.5);
    }
    (
        SampledField { grid: g, amp: even },
        SampledField { grid: g, amp: odd },
    )
}

/// Quadrature of `∫ a*(x) b(x) dx`.
pub fn inner_product(a: &SampledField, b: &SampledField) -> Result<C64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let s: C64 = a.amp.iter().zip(&b.amp).map(|(x, y)| x.conj() * y).sum();
    Ok(s * a.grid.dx())
}

/// Parity rotator: transmissivity `exp(i (theta/2) sgn x)`.
pub fn apply_phase_plate(f: &SampledField, theta: f64) -> SampledField {
    let g = f.grid;
    let plus = C64::from_polar(1.0, theta / 2.0);
    let minus = plus.conj();
    let amp = (0..g.len())
        .map(|k| f.amp[k] * if g.sign(k) > 0.0 { plus } else { minus })
        .collect();
    SampledField { grid: g, amp }
}

/// Resampling stencil for the mirror image about `x = a`.
///
/// For `a = 0` it is the exact permutation `k -> M-1-k`; otherwise each
/// output sample linearly interpolates the input at `2a - x_k`, with zero
/// fill beyond the outermost samples.
#[derive(Debug, Clone)]
pub struct FlipMap {
    axis: f64,
    stencil: Vec<Option<(usize, f64)>>,
}

impl FlipMap {
    pub fn new(grid: &Grid, axis: f64) -> Result<Self> {
        let limit = grid.x_max() / 2.0;
        if !axis.is_finite() || axis.abs() > limit {
            return Err(Error::FlipAxisOutOfRange { axis, limit });
        }
        let m = grid.len();
        let stencil = if axis == 0.0 {
            (0..m).map(|k| Some((grid.mirror(k), 0.0))).collect()
        } else {
            (0..m)
                .map(|k| {
                    let u = grid.position(2.0 * axis - grid.x(k));
                    if u < 0.0 || u > (m - 1) as f64 {
                        return None;
                    }
                    let i = (u.floor() as usize).min(m - 2);
                    Some((i, u - i as f64))
                })
                .collect()
        };
        Ok(FlipMap { axis, stencil })
    }

    pub fn axis(&self) -> f64 {
        self.axis
    }

    /// Value of the flipped sequence at output sample `k`, reading `src(i)`.
    #[inline]
    pub fn sample(&self, k: usize, src: impl Fn(usize) -> C64) -> C64 {
        match self.stencil[k] {
            None => C64::new(0.0, 0.0),
            Some((i, 0.0)) => src(i),
            Some((i, t)) => src(i) * (1.0 - t) + src(i + 1) * t,
        }
    }

    pub fn apply(&self, values: &[C64]) -> Vec<C64> {
        (0..values.len())
            .map(|k| self.sample(k, |i| values[i]))
            .collect()
    }
}

/// Spatial flipper: mirror image about the axis `x = a`.
pub fn spatial_flip(f: &SampledField, axis: f64) -> Result<SampledField> {
    let map = FlipMap::new(&f.grid, axis)?;
    Ok(SampledField {
        grid: f.grid,
        amp: map.apply(&f.amp),
    })
}

/// Opaque screen over one half plane. Returns the transmitted field and
/// the fraction of power that got through (0 for a zero input).
pub fn block_half(f: &SampledField, side: Side) -> (SampledField, f64) {
    let g = f.grid;
    let amp: Vec<C64> = (0..g.len())
        .map(|k| {
            if side.contains(g.x(k)) {
                C64::new(0.0, 0.0)
            } else {
                f.amp[k]
            }
        })
        .collect();
    let out = SampledField { grid: g, amp };
    let before = f.norm_sqr();
    let fraction = if before > 0.0 {
        out.norm_sqr() / before
    } else {
        0.0
    };
    (out, fraction)
}
