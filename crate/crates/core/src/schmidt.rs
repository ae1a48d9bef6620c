//! Schmidt spectrum of the biphoton and the derived mode counts.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::biphoton::BiphotonAmplitude;
use crate::error::{Error, Result};
use crate::field::SampledField;

/// How the thresholded mode count compares a mode to the leading one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `lambda_n^2 > f * lambda_max^2` (eigenvalues of the reduced kernel).
    EtaEigenvalue,
    /// `lambda_n > f * lambda_max`.
    SingularValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchmidtOptions {
    pub rule: ThresholdRule,
    pub fraction: f64,
}

impl Default for SchmidtOptions {
    fn default() -> Self {
        SchmidtOptions {
            rule: ThresholdRule::EtaEigenvalue,
            fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchmidtSpectrum {
    /// Descending Schmidt coefficients with `sum lambda_n^2 = 1`.
    pub lambdas: Vec<f64>,
    /// `1 / sum lambda_n^4`.
    pub participation: f64,
    pub threshold_count: usize,
    pub options: SchmidtOptions,
}

impl SchmidtSpectrum {
    pub fn from_singular_values(mut sv: Vec<f64>, options: SchmidtOptions) -> Result<Self> {
        sv.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = sv.iter().map(|s| s * s).sum();
        if !(total > 0.0) {
            return Err(Error::param("singular values", "all zero"));
        }
        let norm = total.sqrt();
        let lambdas: Vec<f64> = sv.into_iter().map(|s| (s / norm).max(0.0)).collect();
        let participation = 1.0 / lambdas.iter().map(|l| l.powi(4)).sum::<f64>();
        let mut spec = SchmidtSpectrum {
            lambdas,
            participation,
            threshold_count: 0,
            options,
        };
        spec.threshold_count = spec.count_above(options.rule, options.fraction);
        Ok(spec)
    }

    pub fn count_above(&self, rule: ThresholdRule, fraction: f64) -> usize {
        let lmax = self.lambdas[0];
        match rule {
            ThresholdRule::EtaEigenvalue => self
                .lambdas
                .iter()
                .filter(|&&l| l * l > fraction * lmax * lmax)
                .count(),
            ThresholdRule::SingularValue => self
                .lambdas
                .iter()
                .filter(|&&l| l > fraction * lmax)
                .count(),
        }
    }

    /// Rows `(n, lambda_n, lambda_n^2, cumulative lambda^2)`.
    pub fn rows(&self) -> Vec<(usize, f64, f64, f64)> {
        let mut cum = 0.0;
        self.lambdas
            .iter()
            .enumerate()
            .map(|(n, &l)| {
                cum += l * l;
                (n, l, l * l, cum)
            })
            .collect()
    }
}

fn weighted_matrix(bp: &BiphotonAmplitude) -> Result<std::borrow::Cow<'_, DMatrix<C64>>> {
    match bp.weighted_matrix() {
        Some(m) => Ok(std::borrow::Cow::Borrowed(m)),
        None => Ok(std::borrow::Cow::Owned(
            bp.densify()?.weighted_matrix().unwrap().clone(),
        )),
    }
}

fn max_iterations(m: usize) -> usize {
    200 * m.max(10)
}

pub fn schmidt_decompose(bp: &BiphotonAmplitude) -> Result<SchmidtSpectrum> {
    schmidt_decompose_with(bp, SchmidtOptions::default())
}

pub fn schmidt_decompose_with(
    bp: &BiphotonAmplitude,
    options: SchmidtOptions,
) -> Result<SchmidtSpectrum> {
    let mat = weighted_matrix(bp)?;
    let g = bp.grid();
    let svd = mat
        .as_ref()
        .clone()
        .try_svd(false, false, f64::EPSILON, max_iterations(g.len()))
        .ok_or(Error::SvdNoConvergence {
            m: g.len(),
            dx: g.dx(),
            x_max: g.x_max(),
        })?;
    SchmidtSpectrum::from_singular_values(svd.singular_values.iter().copied().collect(), options)
}

/// One Schmidt term: coefficient and the photon-1 / photon-2 mode functions.
#[derive(Debug, Clone)]
pub struct SchmidtMode {
    pub lambda: f64,
    pub signal: SampledField,
    pub idler: SampledField,
}

/// Spectrum plus the leading `count` mode pairs, each mode unit-normalized
/// on the grid.
pub fn schmidt_modes(
    bp: &BiphotonAmplitude,
    count: usize,
) -> Result<(SchmidtSpectrum, Vec<SchmidtMode>)> {
    let mat = weighted_matrix(bp)?;
    let g = *bp.grid();
    let svd = mat
        .as_ref()
        .clone()
        .try_svd(true, true, f64::EPSILON, max_iterations(g.len()))
        .ok_or(Error::SvdNoConvergence {
            m: g.len(),
            dx: g.dx(),
            x_max: g.x_max(),
        })?;
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let spectrum = SchmidtSpectrum::from_singular_values(sv.clone(), SchmidtOptions::default())?;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let norm: f64 = sv.iter().map(|s| s * s).sum::<f64>().sqrt();
    let inv_sqrt_dx = C64::new(1.0 / g.dx().sqrt(), 0.0);
    let modes = order
        .into_iter()
        .take(count)
        .map(|n| {
            let signal: Vec<C64> = u.column(n).iter().map(|z| z * inv_sqrt_dx).collect();
            // psi = U S V^T with V^T rows as photon-2 functions (no conjugation)
            let idler: Vec<C64> = v_t.row(n).iter().map(|z| z * inv_sqrt_dx).collect();
            Ok(SchmidtMode {
                lambda: sv[n] / norm,
                signal: SampledField::from_vec(g, signal)?,
                idler: SampledField::from_vec(g, idler)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((spectrum, modes))
}

/// Effective Gaussian kernel width `sqrt(lambda_p ell / 8)` of a crystal of
/// thickness `ell` pumped at wavelength `lambda_p`.
pub fn effective_kernel_width(lambda_p: f64, ell: f64) -> f64 {
    (lambda_p * ell / 8.0).sqrt()
}

/// Transverse-plane mode count `(w/b + b/w)^2 / 4` for a Gaussian pump of
/// width `w` and the effective kernel width `b` of the crystal.
pub fn schmidt_number_analytic(w: f64, lambda_p: f64, ell: f64) -> f64 {
    let b = effective_kernel_width(lambda_p, ell);
    let r = w / b;
    0.25 * (r + 1.0 / r).powi(2)
}

/// Participation number of the one-dimensional Gaussian biphoton used here,
/// `(w/b + b/w) / 2`. Its square is the transverse-plane count above.
pub fn schmidt_number_1d(w: f64, b: f64) -> f64 {
    0.5 * (w / b + b / w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biphoton::{build_biphoton, Representation};
    use crate::field::{inner_product, Grid};
    use crate::pump::{prepare_pump, PumpSpec};

    fn biphoton(m: usize, b: f64, phi: f64) -> BiphotonAmplitude {
        let g = Grid::new(m, 4.0).unwrap();
        let p = prepare_pump(&g, &PumpSpec::rotated(1.0, phi)).unwrap();
        build_biphoton(&p, b, Representation::Dense).unwrap()
    }

    #[test]
    fn analytic_counts() {
        let n = schmidt_number_analytic(1.1e-3, 405e-9, 1.5e-3);
        assert!((n - 3.99e3).abs() < 10.0, "{n}");
        let b = effective_kernel_width(405e-9, 1.5e-3);
        assert!((schmidt_number_analytic(b, 405e-9, 1.5e-3) - 1.0).abs() < 1e-12);
        assert!((schmidt_number_analytic(10.0 * b, 405e-9, 1.5e-3) - 25.5025).abs() < 1e-9);
        assert!((schmidt_number_1d(10.0, 1.0).powi(2) - 25.5025).abs() < 1e-9);
    }

    #[test]
    fn separable_product_has_one_mode() {
        let g = Grid::new(64, 4.0).unwrap();
        let f: Vec<C64> = g
            .samples()
            .iter()
            .map(|x| C64::new((-x * x).exp(), 0.0))
            .collect();
        let h: Vec<C64> = g
            .samples()
            .iter()
            .map(|x| C64::new(x * (-x * x / 3.0).exp(), 0.2))
            .collect();
        let mat = DMatrix::from_fn(64, 64, |j, k| f[j] * h[k]);
        let bp = BiphotonAmplitude::from_weighted_matrix(g, mat, 1.0).unwrap();
        let s = schmidt_decompose(&bp).unwrap();
        assert!((s.lambdas[0] - 1.0).abs() < 1e-12);
        assert!((s.participation - 1.0).abs() < 1e-12);
        assert_eq!(s.threshold_count, 1);
    }

    #[test]
    fn spectrum_invariants() {
        let s = schmidt_decompose(&biphoton(256, 0.2, 0.7)).unwrap();
        let total: f64 = s.lambdas.iter().map(|l| l * l).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(s.lambdas.windows(2).all(|w| w[0] >= w[1]));
        assert!(s.participation >= 1.0);
        assert!(s.threshold_count >= 1);
        let rows = s.rows();
        assert!((rows.last().unwrap().3 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn threshold_rules_differ() {
        let s = schmidt_decompose(&biphoton(256, 0.1, 0.0)).unwrap();
        let eta = s.count_above(ThresholdRule::EtaEigenvalue, 0.01);
        let sv = s.count_above(ThresholdRule::SingularValue, 0.01);
        assert_eq!(eta, s.threshold_count);
        assert!(sv > eta);
    }

    #[test]
    fn equal_widths_are_separable() {
        let s = schmidt_decompose(&biphoton(1024, 1.0, 0.0)).unwrap();
        assert!((s.participation - 1.0).abs() < 0.01, "{}", s.participation);
    }

    #[test]
    fn modes_reconstruct_the_leading_term() {
        let bp = biphoton(128, 0.3, 0.0);
        let (spec, modes) = schmidt_modes(&bp, 3).unwrap();
        assert_eq!(modes.len(), 3);
        assert!((modes[0].lambda - spec.lambdas[0]).abs() < 1e-12);
        for m in &modes {
            assert!((m.signal.norm_sqr() - 1.0).abs() < 1e-10);
            assert!((m.idler.norm_sqr() - 1.0).abs() < 1e-10);
        }
        assert!(
            inner_product(&modes[0].signal, &modes[1].signal)
                .unwrap()
                .norm()
                < 1e-10
        );
        // psi(x_j, x_k) ~ sum lambda_n u_n(x_j) v_n(x_k) (three leading terms)
        let g = *bp.grid();
        let (j, k) = (64, 64);
        let approx: C64 = modes
            .iter()
            .map(|m| m.signal.amplitudes()[j] * m.idler.amplitudes()[k] * m.lambda)
            .sum();
        let exact = bp.value(j, k) * (1.0 / bp.norm_sqr().sqrt());
        assert!(
            (approx - exact).norm() / exact.norm() < 0.2,
            "{approx} vs {exact} ({})",
            g.dx()
        );
    }
}
