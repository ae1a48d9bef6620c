//! Two-photon amplitude `psi(x, x') = E_p((x + x')/2) xi((x - x')/2)` on a
//! shared grid, stored either as a dense weighted matrix or as a lazily
//! evaluated product of two one-dimensional tables.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Grid;
use crate::pump::{Pump, PumpProfile};

/// Largest grid accepted for the dense `M x M` representation.
pub const DENSE_LIMIT: usize = 4096;

/// Kernel samples with `(x - x')^2 / (8 b^2)` beyond this are dropped from
/// the lazy band (relative amplitude below `e^-40`).
const BAND_EXPONENT: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Dense,
    Lazy,
}

impl std::str::FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "dense" => Ok(Representation::Dense),
            "lazy" => Ok(Representation::Lazy),
            other => Err(format!("unknown representation `{other}`")),
        }
    }
}

/// Gaussian correlation kernel `exp(-u^2 / (2 b^2))` evaluated at `u = (x - x')/2`.
#[inline]
fn kernel(b: f64, diff: f64) -> f64 {
    let u = diff / 2.0;
    (-u * u / (2.0 * b * b)).exp()
}

#[derive(Debug, Clone)]
struct ProductForm {
    profile: PumpProfile,
    b: f64,
    scale: f64,
    /// Pump at `x+ = (n + 1 - M) dx / 2`, i.e. at `(x_j + x_k)/2` with `n = j + k`.
    pump: Vec<C64>,
    /// Kernel at `x_j - x_k = d dx` for `|d| <= band`, index `d + band`.
    kernel: Vec<f64>,
    band: usize,
}

impl ProductForm {
    fn new(grid: &Grid, profile: PumpProfile, b: f64) -> Self {
        let m = grid.len();
        let dx = grid.dx();
        let band = (((8.0 * BAND_EXPONENT).sqrt() * b / dx).ceil() as usize).min(m - 1);
        let pump = (0..2 * m - 1)
            .map(|n| profile.value((n as f64 + 1.0 - m as f64) * dx / 2.0))
            .collect();
        let kernel = (0..=2 * band)
            .map(|i| kernel(b, (i as f64 - band as f64) * dx))
            .collect();
        ProductForm {
            profile,
            b,
            scale: 1.0,
            pump,
            kernel,
            band,
        }
    }

    #[inline]
    fn value(&self, j: usize, k: usize) -> C64 {
        let d = j as isize - k as isize;
        if d.unsigned_abs() > self.band {
            return C64::new(0.0, 0.0);
        }
        self.pump[j + k] * (self.scale * self.kernel[(d + self.band as isize) as usize])
    }

    #[inline]
    fn eval(&self, y: f64, y2: f64) -> C64 {
        self.profile.value((y + y2) / 2.0) * (self.scale * kernel(self.b, y - y2))
    }
}

#[derive(Debug, Clone)]
pub struct BiphotonAmplitude {
    grid: Grid,
    flux_factor: f64,
    product: Option<ProductForm>,
    /// Weighted samples `psi(x_j, x_k) dx`.
    dense: Option<DMatrix<C64>>,
}

fn check_kernel(grid: &Grid, b: f64, repr: Representation) -> Result<()> {
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::param("b", format!("must be positive, got {b}")));
    }
    // 2b is the 1/e half-width of the kernel along x - x'
    let samples = 2.0 * b / grid.dx();
    let needed = match repr {
        Representation::Dense => 4.0,
        Representation::Lazy => 2.0,
    };
    if samples < needed {
        return Err(Error::UnderResolved(format!(
            "kernel half-width 2b = {:.3e} spans {samples:.2} samples (dx = {:.3e}); need {needed}",
            2.0 * b,
            grid.dx()
        )));
    }
    Ok(())
}

pub fn build_biphoton(pump: &Pump, b: f64, repr: Representation) -> Result<BiphotonAmplitude> {
    let grid = *pump.field.grid();
    check_kernel(&grid, b, repr)?;
    if b >= pump.profile.width() {
        log::warn!(
            "Schmidt structure degenerate: kernel width b = {b} is not below the pump width w = {}",
            pump.profile.width()
        );
    }
    let mut product = ProductForm::new(&grid, pump.profile, b);
    let m = grid.len();
    let dx = grid.dx();
    match repr {
        Representation::Lazy => {
            let rows: Vec<f64> = (0..m)
                .into_par_iter()
                .map(|j| {
                    let lo = j.saturating_sub(product.band);
                    let hi = (j + product.band + 1).min(m);
                    (lo..hi)
                        .map(|k| product.value(j, k).norm_sqr())
                        .sum::<f64>()
                })
                .collect();
            let norm = rows.iter().sum::<f64>() * dx * dx;
            product.scale = 1.0 / norm.sqrt();
            Ok(BiphotonAmplitude {
                grid,
                flux_factor: pump.flux_factor,
                product: Some(product),
                dense: None,
            })
        }
        Representation::Dense => {
            if m > DENSE_LIMIT {
                return Err(Error::DenseTooLarge {
                    m,
                    limit: DENSE_LIMIT,
                });
            }
            let full_kernel: Vec<f64> = (0..2 * m - 1)
                .map(|i| kernel(b, (i as f64 - (m - 1) as f64) * dx))
                .collect();
            let mut mat = DMatrix::from_fn(m, m, |j, k| {
                product.pump[j + k] * full_kernel[j + m - 1 - k]
            });
            let norm = mat.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx * dx;
            let scale = 1.0 / norm.sqrt();
            mat *= C64::new(scale * dx, 0.0);
            product.scale = scale;
            Ok(BiphotonAmplitude {
                grid,
                flux_factor: pump.flux_factor,
                product: Some(product),
                dense: Some(mat),
            })
        }
    }
}

impl BiphotonAmplitude {
    /// Wrap an explicit weighted matrix (`psi(x_j, x_k) dx`). The matrix is
    /// normalized on the way in.
    pub fn from_weighted_matrix(
        grid: Grid,
        mut matrix: DMatrix<C64>,
        flux_factor: f64,
    ) -> Result<Self> {
        let m = grid.len();
        if matrix.nrows() != m || matrix.ncols() != m {
            return Err(Error::param(
                "matrix",
                format!(
                    "expected {m}x{m}, got {}x{}",
                    matrix.nrows(),
                    matrix.ncols()
                ),
            ));
        }
        if matrix
            .iter()
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::param("matrix", "non-finite entry"));
        }
        if !(flux_factor > 0.0 && flux_factor <= 1.0) {
            return Err(Error::param(
                "flux_factor",
                format!("must lie in (0, 1], got {flux_factor}"),
            ));
        }
        let norm: f64 = matrix.iter().map(|z| z.norm_sqr()).sum();
        if norm == 0.0 {
            return Err(Error::param("matrix", "zero amplitude"));
        }
        matrix /= C64::new(norm.sqrt(), 0.0);
        Ok(BiphotonAmplitude {
            grid,
            flux_factor,
            product: None,
            dense: Some(matrix),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn flux_factor(&self) -> f64 {
        self.flux_factor
    }

    pub fn kernel_width(&self) -> Option<f64> {
        self.product.as_ref().map(|p| p.b)
    }

    pub fn pump_profile(&self) -> Option<&PumpProfile> {
        self.product.as_ref().map(|p| &p.profile)
    }

    pub fn representation(&self) -> Representation {
        if self.dense.is_some() {
            Representation::Dense
        } else {
            Representation::Lazy
        }
    }

    pub fn weighted_matrix(&self) -> Option<&DMatrix<C64>> {
        self.dense.as_ref()
    }

    /// Half-width (in samples) of the diagonal band outside which the
    /// amplitude is treated as zero. Dense amplitudes report the full width.
    pub fn band(&self) -> usize {
        match (&self.dense, &self.product) {
            (None, Some(p)) => p.band,
            _ => self.grid.len() - 1,
        }
    }

    /// Columns `k` of row `j` that can hold a non-negligible amplitude.
    pub fn row_support(&self, j: usize) -> std::ops::Range<usize> {
        let w = self.band();
        j.saturating_sub(w)..(j + w + 1).min(self.grid.len())
    }

    /// Unweighted amplitude `psi(x_j, x_k)`.
    #[inline]
    pub fn value(&self, j: usize, k: usize) -> C64 {
        match (&self.dense, &self.product) {
            (Some(mat), _) => mat[(j, k)] / self.grid.dx(),
            (None, Some(p)) => p.value(j, k),
            (None, None) => unreachable!("amplitude without storage"),
        }
    }

    /// Amplitude at arbitrary coordinates from the analytic product form.
    /// `None` for amplitudes wrapped from an explicit matrix.
    pub fn eval(&self, y: f64, y2: f64) -> Option<C64> {
        self.product.as_ref().map(|p| p.eval(y, y2))
    }

    /// `sum |psi|^2 dx^2` over the stored support.
    pub fn norm_sqr(&self) -> f64 {
        let dx = self.grid.dx();
        let rows: Vec<f64> = (0..self.grid.len())
            .into_par_iter()
            .map(|j| {
                self.row_support(j)
                    .map(|k| self.value(j, k).norm_sqr())
                    .sum::<f64>()
            })
            .collect();
        rows.iter().sum::<f64>() * dx * dx
    }

    /// Dense copy of a lazy amplitude (renormalized over the full grid).
    pub fn densify(&self) -> Result<BiphotonAmplitude> {
        if self.dense.is_some() {
            return Ok(self.clone());
        }
        let m = self.grid.len();
        if m > DENSE_LIMIT {
            return Err(Error::DenseTooLarge {
                m,
                limit: DENSE_LIMIT,
            });
        }
        let dx = self.grid.dx();
        let mat = DMatrix::from_fn(m, m, |j, k| self.value(j, k) * dx);
        let mut out = BiphotonAmplitude::from_weighted_matrix(self.grid, mat, self.flux_factor)?;
        out.product = self.product.clone();
        Ok(out)
    }
}

/// Quadrant-resolved overlaps `sum_p conj(psi(p)) psi(T p) dx^2` for the
/// four joint mirror maps `T` (bit 0 flips photon 1, bit 1 flips photon 2),
/// indexed `[T][q1][q2]` with `q = 0` for `x < 0` and `q = 1` for `x > 0`
/// at the point `p` itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParityOverlaps {
    pub o: [[[C64; 2]; 2]; 4],
}

impl ParityOverlaps {
    pub fn compute(bp: &BiphotonAmplitude) -> Self {
        let g = bp.grid;
        let m = g.len();
        let half = m / 2;
        let rows: Vec<[[[C64; 2]; 2]; 4]> = (0..m)
            .into_par_iter()
            .map(|j| {
                let mut acc = [[[C64::new(0.0, 0.0); 2]; 2]; 4];
                let q1 = usize::from(j >= half);
                let jf = g.mirror(j);
                for k in bp.row_support(j) {
                    let here = bp.value(j, k).conj();
                    if here.re == 0.0 && here.im == 0.0 {
                        continue;
                    }
                    let q2 = usize::from(k >= half);
                    let kf = g.mirror(k);
                    acc[0][q1][q2] += here * bp.value(j, k);
                    acc[1][q1][q2] += here * bp.value(jf, k);
                    acc[2][q1][q2] += here * bp.value(j, kf);
                    acc[3][q1][q2] += here * bp.value(jf, kf);
                }
                acc
            })
            .collect();
        let dx2 = g.dx() * g.dx();
        let mut o = [[[C64::new(0.0, 0.0); 2]; 2]; 4];
        for r in &rows {
            for t in 0..4 {
                for a in 0..2 {
                    for b in 0..2 {
                        o[t][a][b] += r[t][a][b];
                    }
                }
            }
        }
        for t in o.iter_mut() {
            for row in t.iter_mut() {
                for z in row.iter_mut() {
                    *z *= dx2;
                }
            }
        }
        ParityOverlaps { o }
    }

    pub fn total(&self, t: usize) -> C64 {
        self.o[t].iter().flatten().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Side;
    use crate::pump::{prepare_pump, PumpSpec};
    use std::f64::consts::PI;

    fn pump(m: usize, spec: PumpSpec) -> Pump {
        prepare_pump(&Grid::new(m, 4.0).unwrap(), &spec).unwrap()
    }

    #[test]
    fn lazy_and_dense_agree_pointwise() {
        for spec in [
            PumpSpec::rotated(1.0, 0.0),
            PumpSpec::rotated(1.0, 1.1),
            PumpSpec::blocked(1.0, Side::Positive),
        ] {
            let p = pump(256, spec);
            let lazy = build_biphoton(&p, 0.1, Representation::Lazy).unwrap();
            let dense = build_biphoton(&p, 0.1, Representation::Dense).unwrap();
            assert!((lazy.norm_sqr() - 1.0).abs() < 1e-10);
            assert!((dense.norm_sqr() - 1.0).abs() < 1e-10);
            for j in (0..256).step_by(7) {
                for k in (0..256).step_by(3) {
                    assert!((lazy.value(j, k) - dense.value(j, k)).norm() < 1e-12);
                }
            }
            let g = *p.field.grid();
            let (j, k) = (120, 131);
            let analytic = lazy.eval(g.x(j), g.x(k)).unwrap();
            assert!((analytic - lazy.value(j, k)).norm() < 1e-12);
        }
    }

    #[test]
    fn joint_inversion_symmetry() {
        let g = Grid::new(256, 4.0).unwrap();
        let even = build_biphoton(
            &pump(256, PumpSpec::rotated(1.0, 0.0)),
            0.1,
            Representation::Dense,
        )
        .unwrap();
        let odd = build_biphoton(
            &pump(256, PumpSpec::rotated(1.0, PI)),
            0.1,
            Representation::Dense,
        )
        .unwrap();
        for j in 0..256 {
            for k in 0..256 {
                let (jf, kf) = (g.mirror(j), g.mirror(k));
                assert_eq!(even.value(jf, kf), even.value(j, k));
                assert!((odd.value(jf, kf) + odd.value(j, k)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn flux_factor_follows_pump() {
        let b = build_biphoton(
            &pump(256, PumpSpec::blocked(1.0, Side::Negative)),
            0.1,
            Representation::Lazy,
        )
        .unwrap();
        assert!((b.flux_factor() - 0.5).abs() < 1e-12);
        let b = build_biphoton(
            &pump(256, PumpSpec::rotated(1.0, 0.4)),
            0.1,
            Representation::Lazy,
        )
        .unwrap();
        assert_eq!(b.flux_factor(), 1.0);
    }

    #[test]
    fn under_resolved_kernel_is_rejected() {
        let p = pump(256, PumpSpec::rotated(1.0, 0.0));
        // dx = 1/32; dense needs 2b >= 4 dx
        assert!(matches!(
            build_biphoton(&p, 0.05, Representation::Dense),
            Err(Error::UnderResolved(_))
        ));
        assert!(build_biphoton(&p, 0.05, Representation::Lazy).is_ok());
        assert!(matches!(
            build_biphoton(&p, 0.02, Representation::Lazy),
            Err(Error::UnderResolved(_))
        ));
        assert!(build_biphoton(&p, -1.0, Representation::Lazy).is_err());
    }

    #[test]
    fn dense_size_limit() {
        let p = pump(8192, PumpSpec::rotated(1.0, 0.0));
        assert!(matches!(
            build_biphoton(&p, 0.01, Representation::Dense),
            Err(Error::DenseTooLarge { .. })
        ));
        let lazy = build_biphoton(&p, 0.01, Representation::Lazy).unwrap();
        assert!(matches!(lazy.densify(), Err(Error::DenseTooLarge { .. })));
    }

    #[test]
    fn overlaps_identity_map_is_the_norm() {
        let p = pump(512, PumpSpec::rotated(1.0, 0.9));
        let bp = build_biphoton(&p, 0.05, Representation::Lazy).unwrap();
        let ov = ParityOverlaps::compute(&bp);
        assert!((ov.total(0) - C64::new(1.0, 0.0)).norm() < 1e-12);
        // joint inversion of the phi-family: <Z x Z> = cos(phi)
        assert!((ov.total(3).re - 0.9f64.cos()).abs() < 1e-12);
    }
}
