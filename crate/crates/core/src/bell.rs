//! Parity rotators, PS-MZI parity analyzers and the CHSH operator.
//!
//! Photon `i` sees `U_theta = exp(i theta/2 sgn x)` followed by an analyzer
//! with ports `P_s = (I + s e^{i delta} Pi_a) / 2`, `s = +1` on the even
//! port. Expanding `P_s1 (x) P_s2` into the four flip maps `T_t` turns every
//! probability into a sum of 16 overlaps `<T_t phi, T_u phi>`. Each overlap
//! only picks up phases `exp(i theta_i d_i)` with `d_i` in `{-1, 0, 1}`, so
//! the overlaps are binned by `d` once and any setting is then evaluated in
//! constant time.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biphoton::{BiphotonAmplitude, ParityOverlaps, Representation};
use crate::error::{Error, Result};
use crate::field::{half_plane_sign, FlipMap, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyzerModel {
    Ideal,
    /// Flip axis offsets `a_i` and residual interferometer phases `delta_i`.
    Misaligned {
        a1: f64,
        delta1: f64,
        a2: f64,
        delta2: f64,
    },
    /// Fringe contrast `V`: correlations scaled, singles untouched.
    Visibility {
        v: f64,
    },
}

impl AnalyzerModel {
    pub fn visibility(v: f64) -> Self {
        AnalyzerModel::Visibility { v }
    }

    pub fn misaligned(a1: f64, delta1: f64, a2: f64, delta2: f64) -> Self {
        AnalyzerModel::Misaligned {
            a1,
            delta1,
            a2,
            delta2,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        match *self {
            AnalyzerModel::Ideal => Ok(()),
            AnalyzerModel::Visibility { v } => {
                if (0.0..=1.0).contains(&v) {
                    Ok(())
                } else {
                    Err(Error::param(
                        "visibility",
                        format!("must lie in [0, 1], got {v}"),
                    ))
                }
            }
            AnalyzerModel::Misaligned {
                a1,
                delta1,
                a2,
                delta2,
            } => {
                if !(delta1.is_finite() && delta2.is_finite()) {
                    return Err(Error::param("delta", "must be finite"));
                }
                let limit = grid.x_max() / 2.0;
                for axis in [a1, a2] {
                    if !axis.is_finite() || axis.abs() > limit {
                        return Err(Error::FlipAxisOutOfRange { axis, limit });
                    }
                }
                Ok(())
            }
        }
    }

    pub fn label(&self) -> String {
        match *self {
            AnalyzerModel::Ideal => "ideal".into(),
            AnalyzerModel::Visibility { v } => format!("visibility={v}"),
            AnalyzerModel::Misaligned {
                a1,
                delta1,
                a2,
                delta2,
            } => {
                format!("misaligned={a1},{delta1},{a2},{delta2}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeProbabilities {
    pub pp: f64,
    pub pm: f64,
    pub mp: f64,
    pub mm: f64,
    /// Probability that fell outside the four ports before renormalization.
    pub lost_fraction: f64,
}

impl OutcomeProbabilities {
    pub fn uniform() -> Self {
        OutcomeProbabilities {
            pp: 0.25,
            pm: 0.25,
            mp: 0.25,
            mm: 0.25,
            lost_fraction: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.pp, self.pm, self.mp, self.mm]
    }

    pub fn sum(&self) -> f64 {
        self.pp + self.pm + self.mp + self.mm
    }

    pub fn correlation(&self) -> f64 {
        self.pp - self.pm - self.mp + self.mm
    }

    /// Single-photon parity contrasts `(<A>, <B>)`.
    pub fn marginals(&self) -> (f64, f64) {
        (
            self.pp + self.pm - self.mp - self.mm,
            self.pp - self.pm + self.mp - self.mm,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSettings {
    pub theta1: f64,
    pub theta1p: f64,
    pub theta2: f64,
    pub theta2p: f64,
}

pub fn reduce_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl MeasurementSettings {
    pub fn new(theta1: f64, theta1p: f64, theta2: f64, theta2p: f64) -> Result<Self> {
        if ![theta1, theta1p, theta2, theta2p]
            .iter()
            .all(|t| t.is_finite())
        {
            return Err(Error::param("theta", "settings must be finite"));
        }
        Ok(MeasurementSettings {
            theta1: reduce_angle(theta1),
            theta1p: reduce_angle(theta1p),
            theta2: reduce_angle(theta2),
            theta2p: reduce_angle(theta2p),
        })
    }

    /// The four `(theta1, theta2)` pairs in CHSH order; the last enters with
    /// a minus sign.
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [
            (self.theta1, self.theta2),
            (self.theta1, self.theta2p),
            (self.theta1p, self.theta2),
            (self.theta1p, self.theta2p),
        ]
    }
}

/// CHSH combination of four correlations given in `pairs()` order.
pub fn chsh_combination(e: [f64; 4]) -> f64 {
    (e[0] + e[1] + e[2] - e[3]).abs()
}

pub fn predicted_correlation(theta1: f64, theta2: f64, phi: f64) -> f64 {
    (theta1 + theta2 + phi).cos()
}

pub fn optimal_settings(phi: f64) -> MeasurementSettings {
    let t = PI / 8.0 - phi / 2.0;
    let tp = 13.0 * PI / 8.0 - phi / 2.0;
    MeasurementSettings {
        theta1: reduce_angle(t),
        theta1p: reduce_angle(tp),
        theta2: reduce_angle(t),
        theta2p: reduce_angle(tp),
    }
}

/// `R[t][u][d1+1][d2+1]`: overlaps binned by the setting phase.
type PhaseTable = [[[[C64; 3]; 3]; 4]; 4];

fn zero_table() -> PhaseTable {
    [[[[C64::new(0.0, 0.0); 3]; 3]; 4]; 4]
}

#[derive(Debug, Clone)]
enum Route {
    Table(Box<PhaseTable>),
    Dense {
        matrix: DMatrix<C64>,
        flips: [FlipMap; 2],
    },
}

/// Precomputed analyzer response of one biphoton.
#[derive(Debug, Clone)]
pub struct BellEngine {
    grid: Grid,
    model: AnalyzerModel,
    deltas: [f64; 2],
    route: Route,
}

fn bit(t: usize, i: usize) -> bool {
    (t >> i) & 1 == 1
}

/// Table for flip axes at the origin, from the quadrant overlaps.
fn table_from_overlaps(ov: &ParityOverlaps) -> PhaseTable {
    let mut table = zero_table();
    for t in 0..4 {
        for u in 0..4 {
            let v = t ^ u;
            for q1 in 0..2 {
                for q2 in 0..2 {
                    let s = [if q1 == 1 { 1 } else { -1 }, if q2 == 1 { 1 } else { -1 }];
                    let d1 = if bit(v, 0) { -s[0] } else { 0 };
                    let d2 = if bit(v, 1) { -s[1] } else { 0 };
                    table[t][u][(d1 + 1) as usize][(d2 + 1) as usize] += ov.o[v][q1][q2];
                }
            }
        }
    }
    table
}

/// Table for general axes by direct quadrature of the mapped amplitude.
fn table_from_product(bp: &BiphotonAmplitude, axes: [f64; 2]) -> PhaseTable {
    let g = *bp.grid();
    let m = g.len();
    let dx = g.dx();
    let (lo, hi) = (g.x(0), g.x(m - 1));
    let reach = (bp.band() + 2) as f64 * dx;
    let map = |x: f64, axis: f64, flip: bool| if flip { 2.0 * axis - x } else { x };
    let psi = |y1: f64, y2: f64| -> C64 {
        if y1 < lo || y1 > hi || y2 < lo || y2 > hi {
            return C64::new(0.0, 0.0);
        }
        bp.eval(y1, y2).unwrap_or_default()
    };

    let mut table = zero_table();
    for t in 0..4 {
        let rows: Vec<PhaseTable> = (0..m)
            .into_par_iter()
            .map(|j| {
                let mut acc = zero_table();
                let x1 = g.x(j);
                let y1 = map(x1, axes[0], bit(t, 0));
                // photon-2 samples whose image under T_t lies within reach of y1
                let (c_lo, c_hi) = if bit(t, 1) {
                    (2.0 * axes[1] - y1 - reach, 2.0 * axes[1] - y1 + reach)
                } else {
                    (y1 - reach, y1 + reach)
                };
                let k_lo = g.position(c_lo).ceil().max(0.0) as usize;
                let k_hi = (g.position(c_hi).floor() + 1.0).clamp(0.0, m as f64) as usize;
                for k in k_lo..k_hi {
                    let x2 = g.x(k);
                    let mut vals = [C64::new(0.0, 0.0); 4];
                    let mut signs = [[0i32; 2]; 4];
                    for (w, (val, sg)) in vals.iter_mut().zip(signs.iter_mut()).enumerate() {
                        let z1 = map(x1, axes[0], bit(w, 0));
                        let z2 = map(x2, axes[1], bit(w, 1));
                        *val = psi(z1, z2);
                        *sg = [half_plane_sign(z1) as i32, half_plane_sign(z2) as i32];
                    }
                    let here = vals[t].conj();
                    if here == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for u in t..4 {
                        let d1 = (signs[u][0] - signs[t][0]) / 2;
                        let d2 = (signs[u][1] - signs[t][1]) / 2;
                        acc[t][u][(d1 + 1) as usize][(d2 + 1) as usize] += here * vals[u];
                    }
                }
                acc
            })
            .collect();
        for r in &rows {
            for u in t..4 {
                for a in 0..3 {
                    for b in 0..3 {
                        table[t][u][a][b] += r[t][u][a][b];
                    }
                }
            }
        }
    }
    let dx2 = dx * dx;
    for t in 0..4 {
        for u in t..4 {
            for a in 0..3 {
                for b in 0..3 {
                    table[t][u][a][b] *= dx2;
                }
            }
        }
        for u in 0..t {
            for a in 0..3 {
                for b in 0..3 {
                    table[t][u][a][b] = table[u][t][2 - a][2 - b].conj();
                }
            }
        }
    }
    table
}

impl BellEngine {
    pub fn new(bp: &BiphotonAmplitude, model: AnalyzerModel) -> Result<Self> {
        let grid = *bp.grid();
        model.validate(&grid)?;
        let (axes, deltas) = match model {
            AnalyzerModel::Misaligned {
                a1,
                delta1,
                a2,
                delta2,
            } => ([a1, a2], [delta1, delta2]),
            _ => ([0.0, 0.0], [0.0, 0.0]),
        };
        let route = match bp.representation() {
            Representation::Dense => Route::Dense {
                matrix: bp.weighted_matrix().expect("dense amplitude").clone(),
                flips: [FlipMap::new(&grid, axes[0])?, FlipMap::new(&grid, axes[1])?],
            },
            Representation::Lazy if axes == [0.0, 0.0] => {
                Route::Table(Box::new(table_from_overlaps(&ParityOverlaps::compute(bp))))
            }
            Representation::Lazy => Route::Table(Box::new(table_from_product(bp, axes))),
        };
        Ok(BellEngine {
            grid,
            model,
            deltas,
            route,
        })
    }

    pub fn model(&self) -> AnalyzerModel {
        self.model
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Port amplitudes `c_t` of `P_s1 (x) P_s2` for flip pattern `t`.
    fn coefficients(&self, s1: f64, s2: f64) -> [C64; 4] {
        let one = C64::new(1.0, 0.0);
        let f1 = C64::from_polar(s1, self.deltas[0]);
        let f2 = C64::from_polar(s2, self.deltas[1]);
        [one * 0.25, f1 * 0.25, f2 * 0.25, f1 * f2 * 0.25]
    }

    fn raw_table(&self, table: &PhaseTable, theta1: f64, theta2: f64) -> [f64; 4] {
        let ph1 = [
            C64::from_polar(1.0, -theta1),
            C64::new(1.0, 0.0),
            C64::from_polar(1.0, theta1),
        ];
        let ph2 = [
            C64::from_polar(1.0, -theta2),
            C64::new(1.0, 0.0),
            C64::from_polar(1.0, theta2),
        ];
        let mut q = [[C64::new(0.0, 0.0); 4]; 4];
        for t in 0..4 {
            for u in 0..4 {
                let mut s = C64::new(0.0, 0.0);
                for a in 0..3 {
                    for b in 0..3 {
                        s += table[t][u][a][b] * ph1[a] * ph2[b];
                    }
                }
                q[t][u] = s;
            }
        }
        let mut out = [0.0; 4];
        for (i, (s1, s2)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
            .into_iter()
            .enumerate()
        {
            let c = self.coefficients(s1, s2);
            let mut p = C64::new(0.0, 0.0);
            for t in 0..4 {
                for u in 0..4 {
                    p += c[t].conj() * c[u] * q[t][u];
                }
            }
            out[i] = p.re;
        }
        out
    }

    fn raw_dense(
        &self,
        matrix: &DMatrix<C64>,
        flips: &[FlipMap; 2],
        theta1: f64,
        theta2: f64,
    ) -> [f64; 4] {
        let g = &self.grid;
        let m = g.len();
        let phase = |theta: f64| -> Vec<C64> {
            (0..m)
                .map(|k| C64::from_polar(1.0, theta / 2.0 * g.sign(k)))
                .collect()
        };
        let (u1, u2) = (phase(theta1), phase(theta2));
        let phi = DMatrix::from_fn(m, m, |j, k| matrix[(j, k)] * u1[j] * u2[k]);
        let f1 = DMatrix::from_fn(m, m, |j, k| flips[0].sample(j, |i| phi[(i, k)]));
        let f2 = DMatrix::from_fn(m, m, |j, k| flips[1].sample(k, |i| phi[(j, i)]));
        let f12 = DMatrix::from_fn(m, m, |j, k| flips[1].sample(k, |i| f1[(j, i)]));
        let mut out = [0.0; 4];
        for (i, (s1, s2)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
            .into_iter()
            .enumerate()
        {
            let c = self.coefficients(s1, s2);
            // amplitudes are sums of the four mapped copies, probability is its norm
            let mut acc = 0.0;
            for idx in 0..m * m {
                let z = c[0] * phi[idx] + c[1] * f1[idx] + c[2] * f2[idx] + c[3] * f12[idx];
                acc += z.norm_sqr();
            }
            out[i] = acc;
        }
        out
    }

    fn raw(&self, theta1: f64, theta2: f64) -> [f64; 4] {
        match &self.route {
            Route::Table(table) => self.raw_table(table, theta1, theta2),
            Route::Dense { matrix, flips } => self.raw_dense(matrix, flips, theta1, theta2),
        }
    }

    pub fn probabilities(&self, theta1: f64, theta2: f64) -> OutcomeProbabilities {
        let raw = self
            .raw(theta1, theta2)
            .map(|p| if p < 0.0 { 0.0 } else { p });
        let total: f64 = raw.iter().sum();
        let lost_fraction = (1.0 - total).max(0.0);
        match self.model {
            AnalyzerModel::Ideal => OutcomeProbabilities {
                pp: raw[0],
                pm: raw[1],
                mp: raw[2],
                mm: raw[3],
                lost_fraction,
            },
            AnalyzerModel::Misaligned { .. } => {
                let n = if total > 0.0 { total } else { 1.0 };
                OutcomeProbabilities {
                    pp: raw[0] / n,
                    pm: raw[1] / n,
                    mp: raw[2] / n,
                    mm: raw[3] / n,
                    lost_fraction,
                }
            }
            AnalyzerModel::Visibility { v } => {
                let ideal = OutcomeProbabilities {
                    pp: raw[0],
                    pm: raw[1],
                    mp: raw[2],
                    mm: raw[3],
                    lost_fraction,
                };
                let (a, b) = ideal.marginals();
                let e = v * ideal.correlation();
                let s = ideal.sum();
                let p = |s1: f64, s2: f64| (0.25 * (s + s1 * a + s2 * b + s1 * s2 * e)).max(0.0);
                OutcomeProbabilities {
                    pp: p(1.0, 1.0),
                    pm: p(1.0, -1.0),
                    mp: p(-1.0, 1.0),
                    mm: p(-1.0, -1.0),
                    lost_fraction,
                }
            }
        }
    }

    pub fn correlation(&self, theta1: f64, theta2: f64) -> f64 {
        self.probabilities(theta1, theta2).correlation()
    }

    pub fn correlations(&self, settings: &MeasurementSettings) -> [f64; 4] {
        settings.pairs().map(|(t1, t2)| self.correlation(t1, t2))
    }

    pub fn chsh(&self, settings: &MeasurementSettings) -> f64 {
        chsh_combination(self.correlations(settings))
    }

    pub fn landscape(&self, axis1: &ThetaAxis, axis2: &ThetaAxis) -> Result<Landscape> {
        let theta1 = axis1.values()?;
        let theta2 = axis2.values()?;
        let rows: Vec<Vec<f64>> = theta1
            .par_iter()
            .map(|&t1| theta2.iter().map(|&t2| self.correlation(t1, t2)).collect())
            .collect();
        Ok(Landscape {
            theta1,
            theta2,
            values: rows.concat(),
        })
    }
}

pub fn outcome_probabilities(
    bp: &BiphotonAmplitude,
    theta1: f64,
    theta2: f64,
    model: AnalyzerModel,
) -> Result<OutcomeProbabilities> {
    Ok(BellEngine::new(bp, model)?.probabilities(theta1, theta2))
}

pub fn correlation(
    bp: &BiphotonAmplitude,
    theta1: f64,
    theta2: f64,
    model: AnalyzerModel,
) -> Result<f64> {
    Ok(BellEngine::new(bp, model)?.correlation(theta1, theta2))
}

pub fn chsh(
    bp: &BiphotonAmplitude,
    settings: &MeasurementSettings,
    model: AnalyzerModel,
) -> Result<f64> {
    Ok(BellEngine::new(bp, model)?.chsh(settings))
}

/// Evenly spaced angles `start + i (end - start) / count`, end excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaAxis {
    pub count: usize,
    pub start: f64,
    pub end: f64,
}

impl ThetaAxis {
    pub fn full_turn(count: usize) -> Self {
        ThetaAxis {
            count,
            start: 0.0,
            end: TAU,
        }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if self.count < 2 {
            return Err(Error::param(
                "points",
                format!("need at least 2 per axis, got {}", self.count),
            ));
        }
        if !(self.start.is_finite() && self.end.is_finite()) || self.end <= self.start {
            return Err(Error::param(
                "range",
                format!("empty range [{}, {})", self.start, self.end),
            ));
        }
        let step = (self.end - self.start) / self.count as f64;
        Ok((0..self.count)
            .map(|i| self.start + i as f64 * step)
            .collect())
    }
}

/// Row-major `E(theta1_i, theta2_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
    pub values: Vec<f64>,
}

impl Landscape {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.theta2.len() + j]
    }
}

pub fn landscape(
    bp: &BiphotonAmplitude,
    axis1: &ThetaAxis,
    axis2: &ThetaAxis,
    model: AnalyzerModel,
) -> Result<Landscape> {
    BellEngine::new(bp, model)?.landscape(axis1, axis2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biphoton::build_biphoton;
    use crate::field::Side;
    use crate::pump::{prepare_pump, PumpSpec};
    use crate::tomography::{pauli_expectations, PauliTable};
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    fn bp(m: usize, b: f64, spec: PumpSpec, repr: Representation) -> BiphotonAmplitude {
        let g = Grid::new(m, 4.0).unwrap();
        build_biphoton(&prepare_pump(&g, &spec).unwrap(), b, repr).unwrap()
    }

    /// Probabilities from the two-qubit reduction: `U^dag Z U = cos t Z - sin t Y`.
    fn qubit_oracle(e: &PauliTable, t1: f64, t2: f64) -> [f64; 4] {
        // Pauli order I, X, Y, Z
        let n = |t: f64| [0.0, 0.0, -t.sin(), t.cos()];
        let (n1, n2) = (n(t1), n(t2));
        let mut a = 0.0;
        let mut b = 0.0;
        let mut c = 0.0;
        for i in 0..4 {
            a += n1[i] * e[i][0];
            b += n2[i] * e[0][i];
            for j in 0..4 {
                c += n1[i] * n2[j] * e[i][j];
            }
        }
        let p = |s1: f64, s2: f64| 0.25 * (1.0 + s1 * a + s2 * b + s1 * s2 * c);
        [p(1.0, 1.0), p(1.0, -1.0), p(-1.0, 1.0), p(-1.0, -1.0)]
    }

    fn epsilon(w: f64, b: f64) -> f64 {
        1.0 - 2.0 / PI * ((w * w - b * b) / (w * w + b * b)).asin()
    }

    #[test]
    fn settings_reduction() {
        let s = optimal_settings(0.0);
        assert!((s.theta1 - PI / 8.0).abs() < 1e-15 && (s.theta2p - 13.0 * PI / 8.0).abs() < 1e-15);
        let s = optimal_settings(PI);
        assert!((s.theta1 - (2.0 * PI - 3.0 * PI / 8.0)).abs() < 1e-12);
        assert!((s.theta1p - 9.0 * PI / 8.0).abs() < 1e-12);
        assert!(s
            .pairs()
            .iter()
            .all(|(a, b)| (0.0..TAU).contains(a) && (0.0..TAU).contains(b)));
        assert!(MeasurementSettings::new(f64::NAN, 0.0, 0.0, 0.0).is_err());
        assert!((reduce_angle(-1e-20) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_correlation() {
        assert!((predicted_correlation(PI / 8.0, PI / 8.0, 0.0) - SQRT_2 / 2.0).abs() < 1e-15);
        assert!((predicted_correlation(0.0, 0.0, PI) + 1.0).abs() < 1e-15);
        let e = predicted_correlation(0.3 + TAU, 1.1, 0.4);
        assert!((e - predicted_correlation(0.3, 1.1, 0.4)).abs() < 1e-12);
        let s = optimal_settings(0.7);
        let pred = s.pairs().map(|(a, b)| predicted_correlation(a, b, 0.7));
        assert!((chsh_combination(pred) - 2.0 * SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn matches_two_qubit_oracle() {
        for repr in [Representation::Lazy, Representation::Dense] {
            for spec in [
                PumpSpec::rotated(1.0, 0.9),
                PumpSpec::blocked(1.0, Side::Negative),
            ] {
                let amp = bp(128, 0.15, spec, repr);
                let e = pauli_expectations(&amp);
                let engine = BellEngine::new(&amp, AnalyzerModel::Ideal).unwrap();
                for (t1, t2) in [(0.0, 0.0), (0.4, 2.2), (PI, 5.0), (3.3, 0.1)] {
                    let got = engine.probabilities(t1, t2).as_array();
                    let want = qubit_oracle(&e, t1, t2);
                    for i in 0..4 {
                        assert!(
                            (got[i] - want[i]).abs() < 1e-12,
                            "{repr:?} {spec:?} {t1} {t2}: {got:?} {want:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn dense_and_lazy_agree() {
        for model in [AnalyzerModel::Ideal, AnalyzerModel::visibility(0.7)] {
            let lazy = BellEngine::new(
                &bp(256, 0.1, PumpSpec::rotated(1.0, 2.0), Representation::Lazy),
                model,
            )
            .unwrap();
            let dense = BellEngine::new(
                &bp(256, 0.1, PumpSpec::rotated(1.0, 2.0), Representation::Dense),
                model,
            )
            .unwrap();
            for (t1, t2) in [(0.1, 0.2), (1.5, 4.0), (6.0, 3.0)] {
                let (a, b) = (lazy.probabilities(t1, t2), dense.probabilities(t1, t2));
                for (x, y) in a.as_array().iter().zip(b.as_array()) {
                    assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn misaligned_routes_converge() {
        // offset axis: analytic lazy quadrature vs interpolated dense maps.
        // Interpolating across the sgn edge costs O(dx) in the dense route.
        let model = AnalyzerModel::misaligned(0.05, 0.2, -0.03, -0.1);
        let gap = |m: usize| {
            let lazy = BellEngine::new(
                &bp(m, 0.1, PumpSpec::rotated(1.0, 0.5), Representation::Lazy),
                model,
            )
            .unwrap();
            let dense = BellEngine::new(
                &bp(m, 0.1, PumpSpec::rotated(1.0, 0.5), Representation::Dense),
                model,
            )
            .unwrap();
            let (a, b) = (lazy.probabilities(0.3, 0.3), dense.probabilities(0.3, 0.3));
            assert!((a.sum() - 1.0).abs() < 1e-12 && (b.sum() - 1.0).abs() < 1e-12);
            a.as_array()
                .iter()
                .zip(b.as_array())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (gap(256), gap(512));
        assert!(coarse < 1e-2, "{coarse}");
        assert!(fine < 0.6 * coarse, "{coarse} -> {fine}");
    }

    #[test]
    fn misalignment_lowers_the_correlation() {
        let amp = bp(
            1024,
            0.05,
            PumpSpec::rotated(1.0, 0.0),
            Representation::Lazy,
        );
        let ideal = correlation(&amp, 0.0, 0.0, AnalyzerModel::Ideal).unwrap();
        let off = correlation(
            &amp,
            0.0,
            0.0,
            AnalyzerModel::misaligned(0.1, 0.0, 0.1, 0.0),
        )
        .unwrap();
        let phase = correlation(
            &amp,
            0.0,
            0.0,
            AnalyzerModel::misaligned(0.0, 0.5, 0.0, 0.5),
        )
        .unwrap();
        assert!(off < ideal - 1e-3, "{off} {ideal}");
        assert!(phase < ideal - 1e-3);
        let probs = outcome_probabilities(
            &amp,
            0.3,
            0.2,
            AnalyzerModel::misaligned(0.1, 0.0, 0.1, 0.0),
        )
        .unwrap();
        assert!(probs.lost_fraction >= 0.0 && probs.lost_fraction < 1e-3);
    }

    #[test]
    fn model_reductions() {
        let amp = bp(512, 0.1, PumpSpec::rotated(1.0, 1.3), Representation::Lazy);
        let ideal = BellEngine::new(&amp, AnalyzerModel::Ideal).unwrap();
        let zero = BellEngine::new(&amp, AnalyzerModel::misaligned(0.0, 0.0, 0.0, 0.0)).unwrap();
        let full = BellEngine::new(&amp, AnalyzerModel::visibility(1.0)).unwrap();
        for (t1, t2) in [(0.0, 0.0), (0.7, 2.9), (4.0, 1.0)] {
            let p = ideal.probabilities(t1, t2).as_array();
            for q in [
                zero.probabilities(t1, t2).as_array(),
                full.probabilities(t1, t2).as_array(),
            ] {
                for i in 0..4 {
                    assert!((p[i] - q[i]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn visibility_scales_correlation_only() {
        let amp = bp(512, 0.1, PumpSpec::rotated(1.0, 0.4), Representation::Lazy);
        let ideal = BellEngine::new(&amp, AnalyzerModel::Ideal).unwrap();
        let vis = BellEngine::new(&amp, AnalyzerModel::visibility(0.6)).unwrap();
        let (p, q) = (ideal.probabilities(0.5, 1.0), vis.probabilities(0.5, 1.0));
        assert!((q.correlation() - 0.6 * p.correlation()).abs() < 1e-14);
        let (a, b) = (p.marginals(), q.marginals());
        assert!((a.0 - b.0).abs() < 1e-14 && (a.1 - b.1).abs() < 1e-14);
        let flat = BellEngine::new(&amp, AnalyzerModel::visibility(0.0)).unwrap();
        assert!(flat.correlation(0.2, 0.2).abs() < 1e-15);
    }

    #[test]
    fn invalid_models() {
        let amp = bp(128, 0.15, PumpSpec::rotated(1.0, 0.0), Representation::Lazy);
        assert!(BellEngine::new(&amp, AnalyzerModel::visibility(1.2)).is_err());
        let err = BellEngine::new(&amp, AnalyzerModel::misaligned(2.5, 0.0, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::FlipAxisOutOfRange { .. }));
    }

    #[test]
    fn finite_kernel_residual_at_quarter_turn() {
        // U^dag Z U -> -Y at theta = pi/2, so E(pi/2, pi/2) = <Y (x) Y> = -(1 - eps)
        let (w, b) = (1.0, 0.05);
        let amp = bp(8192, b, PumpSpec::rotated(w, 0.0), Representation::Lazy);
        let engine = BellEngine::new(&amp, AnalyzerModel::Ideal).unwrap();
        assert!((engine.correlation(0.0, 0.0) - 1.0).abs() < 1e-10);
        let resid =
            engine.correlation(PI / 2.0, PI / 2.0) - predicted_correlation(PI / 2.0, PI / 2.0, 0.0);
        assert!(
            (resid - epsilon(w, b)).abs() < 0.05 * epsilon(w, b),
            "{resid} vs {}",
            epsilon(w, b)
        );
    }

    #[test]
    fn blocked_pump_is_flat() {
        let amp = bp(
            1024,
            0.05,
            PumpSpec::blocked(1.0, Side::Positive),
            Representation::Lazy,
        );
        let engine = BellEngine::new(&amp, AnalyzerModel::Ideal).unwrap();
        let land = engine
            .landscape(&ThetaAxis::full_turn(8), &ThetaAxis::full_turn(8))
            .unwrap();
        assert!(land.values.iter().all(|e| e.abs() < 1e-12));
        assert!(engine.chsh(&optimal_settings(0.0)) < 1e-12);
    }

    #[test]
    fn landscape_shape_and_determinism() {
        let amp = bp(512, 0.05, PumpSpec::rotated(1.0, 0.0), Representation::Lazy);
        let ax = ThetaAxis {
            count: 5,
            start: 0.0,
            end: PI,
        };
        let l1 = landscape(&amp, &ax, &ThetaAxis::full_turn(3), AnalyzerModel::Ideal).unwrap();
        assert_eq!(l1.values.len(), 15);
        assert_eq!(l1.theta1[1], PI / 5.0);
        let engine = BellEngine::new(&amp, AnalyzerModel::Ideal).unwrap();
        assert_eq!(l1.get(2, 1), engine.correlation(l1.theta1[2], l1.theta2[1]));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let l2 = pool.install(|| {
            landscape(&amp, &ax, &ThetaAxis::full_turn(3), AnalyzerModel::Ideal).unwrap()
        });
        assert_eq!(l1, l2);
        assert!(ThetaAxis {
            count: 1,
            start: 0.0,
            end: 1.0
        }
        .values()
        .is_err());
    }

    #[test]
    fn exchange_symmetry() {
        let amp = bp(512, 0.05, PumpSpec::rotated(1.0, 0.8), Representation::Lazy);
        let engine = BellEngine::new(&amp, AnalyzerModel::Ideal).unwrap();
        for (t1, t2) in [(0.2, 1.7), (3.0, 5.5), (0.0, 2.0)] {
            assert!((engine.correlation(t1, t2) - engine.correlation(t2, t1)).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn correlation_is_bounded(t1 in 0.0..TAU, t2 in 0.0..TAU, phi in 0.0..TAU, v in 0.0f64..=1.0) {
            let amp = bp(128, 0.15, PumpSpec::rotated(1.0, phi), Representation::Lazy);
            for model in [AnalyzerModel::Ideal, AnalyzerModel::visibility(v), AnalyzerModel::misaligned(0.1, v, -0.2, 0.0)] {
                let p = BellEngine::new(&amp, model).unwrap().probabilities(t1, t2);
                prop_assert!(p.correlation().abs() <= 1.0 + 1e-9);
                prop_assert!(p.as_array().iter().all(|&x| x >= 0.0));
            }
        }
    }
}
