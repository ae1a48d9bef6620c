//! Coincidence counting: Poisson pair numbers, multinomial port splits,
//! correlation and CHSH estimators, and the fixed-`theta2` slice.
//!
//! Every draw comes from a ChaCha20 stream selected by `(seed, index)`, so a
//! run is reproducible no matter how the settings are scheduled.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{
    chsh_combination, AnalyzerModel, BellEngine, MeasurementSettings, OutcomeProbabilities,
};
use crate::biphoton::BiphotonAmplitude;
use crate::error::{Error, Result};

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub stream: u64,
}

impl StreamKey {
    pub fn new(seed: u64, stream: u64) -> Self {
        StreamKey { seed, stream }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub theta1: f64,
    pub theta2: f64,
    pub n_pp: u64,
    pub n_pm: u64,
    pub n_mp: u64,
    pub n_mm: u64,
    /// Mean number of detected pairs for this setting.
    pub flux: f64,
}

impl CountRecord {
    pub fn total(&self) -> u64 {
        self.n_pp + self.n_pm + self.n_mp + self.n_mm
    }

    pub fn counts(&self) -> [u64; 4] {
        [self.n_pp, self.n_pm, self.n_mp, self.n_mm]
    }
}

fn binomial(rng: &mut ChaCha20Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p)
        .expect("probability in (0, 1)")
        .sample(rng)
}

/// Poisson total with mean `flux * flux_factor`, split over the four ports.
pub fn simulate_counts(
    p: &OutcomeProbabilities,
    setting: (f64, f64),
    flux: f64,
    flux_factor: f64,
    key: StreamKey,
) -> Result<CountRecord> {
    if !(flux.is_finite() && flux > 0.0) {
        return Err(Error::param(
            "flux",
            format!("must be positive, got {flux}"),
        ));
    }
    if !(flux_factor > 0.0 && flux_factor <= 1.0) {
        return Err(Error::param(
            "flux_factor",
            format!("must lie in (0, 1], got {flux_factor}"),
        ));
    }
    let probs = p.as_array();
    let total: f64 = probs.iter().sum();
    if probs.iter().any(|q| !q.is_finite() || *q < 0.0) || total > 1.0 + 1e-9 || total <= 0.0 {
        return Err(Error::param(
            "probabilities",
            format!("invalid outcome distribution {probs:?}"),
        ));
    }
    let mean = flux * flux_factor;
    let mut rng = key.rng();
    let n_tot = Poisson::new(mean)
        .map_err(|e| Error::param("flux", e.to_string()))?
        .sample(&mut rng) as u64;

    let mut left = n_tot;
    let mut mass = 1.0;
    let mut n = [0u64; 4];
    for i in 0..3 {
        let q = probs[i] / total;
        n[i] = binomial(
            &mut rng,
            left,
            if mass > 0.0 { (q / mass).min(1.0) } else { 0.0 },
        );
        left -= n[i];
        mass -= q;
    }
    n[3] = left;
    Ok(CountRecord {
        theta1: setting.0,
        theta2: setting.1,
        n_pp: n[0],
        n_pm: n[1],
        n_mp: n[2],
        n_mm: n[3],
        flux: mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub e: f64,
    /// `sqrt(4 S D / (S + D)^3)`.
    pub sigma: f64,
    /// `sqrt((1 - E^2) / N)`, for comparison.
    pub sigma_crude: f64,
}

pub fn estimate_correlation(rec: &CountRecord) -> Result<CorrelationEstimate> {
    let s = (rec.n_pp + rec.n_mm) as f64;
    let d = (rec.n_pm + rec.n_mp) as f64;
    let n = s + d;
    if n == 0.0 {
        return Err(Error::NoCoincidences);
    }
    let e = (s - d) / n;
    Ok(CorrelationEstimate {
        e,
        sigma: (4.0 * s * d / (n * n * n)).sqrt(),
        sigma_crude: ((1.0 - e * e).max(0.0) / n).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshEstimate {
    pub b: f64,
    pub sigma_b: f64,
    /// `(B - 2) / sigma_B`; `None` when `sigma_B = 0`.
    pub n_sigma: Option<f64>,
    pub correlations: [CorrelationEstimate; 4],
    /// Built from exact probabilities rather than counts.
    pub exact: bool,
}

impl ChshEstimate {
    pub fn from_correlations(correlations: [CorrelationEstimate; 4], exact: bool) -> Self {
        let b = chsh_combination(correlations.map(|c| c.e));
        let sigma_b = correlations
            .iter()
            .map(|c| c.sigma * c.sigma)
            .sum::<f64>()
            .sqrt();
        let n_sigma = if sigma_b > 0.0 {
            Some((b - 2.0) / sigma_b)
        } else {
            None
        };
        ChshEstimate {
            b,
            sigma_b,
            n_sigma,
            correlations,
            exact,
        }
    }

    /// Infinite-count limit: the exact correlations with zero spread.
    pub fn exact(e: [f64; 4]) -> Self {
        Self::from_correlations(
            e.map(|e| CorrelationEstimate {
                e,
                sigma: 0.0,
                sigma_crude: 0.0,
            }),
            true,
        )
    }
}

pub fn estimate_chsh(recs: &[CountRecord; 4]) -> Result<ChshEstimate> {
    let mut c = [CorrelationEstimate {
        e: 0.0,
        sigma: 0.0,
        sigma_crude: 0.0,
    }; 4];
    for (slot, rec) in c.iter_mut().zip(recs) {
        *slot = estimate_correlation(rec)?;
    }
    Ok(ChshEstimate::from_correlations(c, false))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub pairs_per_setting: f64,
    /// Double the reported slice counts of a blocked pump.
    pub double_blocked_counts: bool,
    pub model: AnalyzerModel,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            pairs_per_setting: 1.0e4,
            double_blocked_counts: false,
            model: AnalyzerModel::Ideal,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pairs_per_setting.is_finite() && self.pairs_per_setting > 0.0) {
            return Err(Error::param(
                "pairs_per_setting",
                format!("must be positive, got {}", self.pairs_per_setting),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub state_label: String,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "sigma_B")]
    pub sigma_b: f64,
    pub n_sigma: Option<f64>,
    pub settings: MeasurementSettings,
    pub per_setting_counts: Vec<CountRecord>,
}

impl ExperimentReport {
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.state_label = label.into();
        self
    }

    pub fn records(&self) -> Result<[CountRecord; 4]> {
        self.per_setting_counts
            .clone()
            .try_into()
            .map_err(|_| Error::param("per_setting_counts", "expected four records"))
    }

    pub fn estimate(&self) -> Result<ChshEstimate> {
        estimate_chsh(&self.records()?)
    }
}

/// Counts at the four CHSH settings from a prepared engine. Setting `i`
/// draws from stream `i` of `cfg.seed`.
pub fn run_experiment_with(
    engine: &BellEngine,
    flux_factor: f64,
    settings: &MeasurementSettings,
    cfg: &RunConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let records: Vec<CountRecord> = settings
        .pairs()
        .par_iter()
        .enumerate()
        .map(|(i, &(t1, t2))| {
            let p = engine.probabilities(t1, t2);
            simulate_counts(
                &p,
                (t1, t2),
                cfg.pairs_per_setting,
                flux_factor,
                StreamKey::new(cfg.seed, i as u64),
            )
        })
        .collect::<Result<_>>()?;
    let recs: [CountRecord; 4] = records.clone().try_into().expect("four settings");
    let est = estimate_chsh(&recs)?;
    Ok(ExperimentReport {
        state_label: String::new(),
        b: est.b,
        sigma_b: est.sigma_b,
        n_sigma: est.n_sigma,
        settings: *settings,
        per_setting_counts: records,
    })
}

pub fn run_experiment(
    bp: &BiphotonAmplitude,
    settings: &MeasurementSettings,
    cfg: &RunConfig,
) -> Result<ExperimentReport> {
    let engine = BellEngine::new(bp, cfg.model)?;
    run_experiment_with(&engine, bp.flux_factor(), settings, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicePoint {
    pub theta1: f64,
    pub n_pp: u64,
    pub sigma: f64,
}

/// `(+,+)` coincidences versus `theta1` at fixed `theta2`; point `i` draws
/// from stream `i`.
pub fn slice_scan_with(
    engine: &BellEngine,
    flux_factor: f64,
    theta2: f64,
    theta1: &[f64],
    cfg: &RunConfig,
) -> Result<Vec<SlicePoint>> {
    cfg.validate()?;
    let scale = if cfg.double_blocked_counts && flux_factor < 1.0 {
        2
    } else {
        1
    };
    theta1
        .par_iter()
        .enumerate()
        .map(|(i, &t1)| {
            let p = engine.probabilities(t1, theta2);
            let rec = simulate_counts(
                &p,
                (t1, theta2),
                cfg.pairs_per_setting,
                flux_factor,
                StreamKey::new(cfg.seed, i as u64),
            )?;
            Ok(SlicePoint {
                theta1: t1,
                n_pp: rec.n_pp * scale,
                sigma: (rec.n_pp as f64).sqrt() * scale as f64,
            })
        })
        .collect()
}

pub fn slice_scan(
    bp: &BiphotonAmplitude,
    theta2: f64,
    theta1: &[f64],
    cfg: &RunConfig,
) -> Result<Vec<SlicePoint>> {
    let engine = BellEngine::new(bp, cfg.model)?;
    slice_scan_with(&engine, bp.flux_factor(), theta2, theta1, cfg)
}

/// Weighted least-squares fit of `c0 + c1 cos t + c2 sin t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFit {
    pub offset: f64,
    pub amplitude: f64,
    /// Position of the maximum, in `(-pi, pi]`.
    pub phase: f64,
    /// `amplitude / offset`, i.e. `(max - min) / (max + min)`.
    pub visibility: f64,
    pub sigma_visibility: f64,
    pub sigma_phase: f64,
}

pub fn fit_sinusoid(points: &[SlicePoint]) -> Result<SinusoidFit> {
    if points.len() < 4 {
        return Err(Error::param(
            "points",
            format!("need at least 4 points, got {}", points.len()),
        ));
    }
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for p in points {
        let row = Vector3::new(1.0, p.theta1.cos(), p.theta1.sin());
        let var = (p.sigma * p.sigma).max(1.0);
        normal += row * row.transpose() / var;
        rhs += row * (p.n_pp as f64 / var);
    }
    let cov = normal
        .try_inverse()
        .ok_or_else(|| Error::param("points", "degenerate angle sampling"))?;
    let c = cov * rhs;
    let (c0, c1, c2) = (c[0], c[1], c[2]);
    let amplitude = (c1 * c1 + c2 * c2).sqrt();
    if !(c0 > 0.0) || amplitude == 0.0 {
        return Ok(SinusoidFit {
            offset: c0,
            amplitude,
            phase: 0.0,
            visibility: if c0 > 0.0 { 0.0 } else { f64::NAN },
            sigma_visibility: f64::NAN,
            sigma_phase: f64::NAN,
        });
    }
    let visibility = amplitude / c0;
    // gradients with respect to (c0, c1, c2)
    let gv = Vector3::new(
        -visibility / c0,
        c1 / (amplitude * c0),
        c2 / (amplitude * c0),
    );
    let a2 = amplitude * amplitude;
    let gp = Vector3::new(0.0, -c2 / a2, c1 / a2);
    Ok(SinusoidFit {
        offset: c0,
        amplitude,
        phase: c2.atan2(c1),
        visibility,
        sigma_visibility: (gv.transpose() * cov * gv)[0].sqrt(),
        sigma_phase: (gp.transpose() * cov * gp)[0].sqrt(),
    })
}

/// Phase difference wrapped into `(-pi, pi]`.
pub fn wrap_phase(d: f64) -> f64 {
    let r = (d + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if r <= -std::f64::consts::PI {
        r + std::f64::consts::TAU
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn probs(p: [f64; 4]) -> OutcomeProbabilities {
        OutcomeProbabilities {
            pp: p[0],
            pm: p[1],
            mp: p[2],
            mm: p[3],
            lost_fraction: 0.0,
        }
    }

    fn rec(n: [u64; 4]) -> CountRecord {
        CountRecord {
            theta1: 0.0,
            theta2: 0.0,
            n_pp: n[0],
            n_pm: n[1],
            n_mp: n[2],
            n_mm: n[3],
            flux: 1.0,
        }
    }

    #[test]
    fn uniform_counts_within_five_sigma() {
        let r = simulate_counts(
            &OutcomeProbabilities::uniform(),
            (0.0, 0.0),
            1e4,
            1.0,
            StreamKey::new(3, 0),
        )
        .unwrap();
        // the Poisson total widens the multinomial sqrt(N p (1-p)) = 43 to sqrt(N p) = 50
        let sigma = (1e4f64 * 0.25).sqrt();
        for n in r.counts() {
            assert!((n as f64 - 2500.0).abs() < 5.0 * sigma, "{n}");
        }
    }

    #[test]
    fn flux_factor_halves_the_mean() {
        let n = 400;
        let mean: f64 = (0..n)
            .map(|s| {
                simulate_counts(
                    &OutcomeProbabilities::uniform(),
                    (0.0, 0.0),
                    1e3,
                    0.5,
                    StreamKey::new(s, 0),
                )
                .unwrap()
                .total() as f64
            })
            .sum::<f64>()
            / n as f64;
        // standard error sqrt(500 / 400) ~ 1.1
        assert!((mean - 500.0).abs() < 5.0, "{mean}");
    }

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let p = probs([0.4, 0.1, 0.1, 0.4]);
        let a = simulate_counts(&p, (0.1, 0.2), 1e4, 1.0, StreamKey::new(9, 2)).unwrap();
        let b = simulate_counts(&p, (0.1, 0.2), 1e4, 1.0, StreamKey::new(9, 2)).unwrap();
        let c = simulate_counts(&p, (0.1, 0.2), 1e4, 1.0, StreamKey::new(9, 3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.counts(), c.counts());
        assert_eq!((a.theta1, a.theta2), (0.1, 0.2));
    }

    #[test]
    fn degenerate_distributions() {
        let r = simulate_counts(
            &probs([1.0, 0.0, 0.0, 0.0]),
            (0.0, 0.0),
            100.0,
            1.0,
            StreamKey::new(0, 0),
        )
        .unwrap();
        assert_eq!(r.total(), r.n_pp);
        let r = simulate_counts(
            &probs([0.0, 0.0, 0.0, 1.0]),
            (0.0, 0.0),
            100.0,
            1.0,
            StreamKey::new(0, 0),
        )
        .unwrap();
        assert_eq!(r.total(), r.n_mm);
        assert!(simulate_counts(
            &probs([0.6, 0.6, 0.0, 0.0]),
            (0.0, 0.0),
            1.0,
            1.0,
            StreamKey::new(0, 0)
        )
        .is_err());
        assert!(simulate_counts(
            &OutcomeProbabilities::uniform(),
            (0.0, 0.0),
            0.0,
            1.0,
            StreamKey::new(0, 0)
        )
        .is_err());
    }

    #[test]
    fn correlation_estimator_examples() {
        let e = estimate_correlation(&rec([500, 0, 0, 500])).unwrap();
        assert_eq!((e.e, e.sigma), (1.0, 0.0));
        let e = estimate_correlation(&rec([250; 4])).unwrap();
        assert_eq!(e.e, 0.0);
        assert!((e.sigma - (4.0f64 * 500.0 * 500.0 / 1e9).sqrt()).abs() < 1e-15);
        assert!((e.sigma - 0.0316).abs() < 1e-4);
        assert!((e.sigma_crude - e.sigma).abs() < 1e-15);
        let err = estimate_correlation(&rec([0; 4])).unwrap_err();
        assert_eq!(err.to_string(), "no coincidences");
    }

    #[test]
    fn chsh_estimate_fields_are_consistent() {
        let recs = [
            rec([400, 100, 100, 400]),
            rec([420, 80, 90, 410]),
            rec([380, 120, 110, 390]),
            rec([100, 400, 420, 80]),
        ];
        let est = estimate_chsh(&recs).unwrap();
        let var: f64 = est.correlations.iter().map(|c| c.sigma * c.sigma).sum();
        assert!((est.sigma_b * est.sigma_b - var).abs() < 1e-15);
        assert!((est.n_sigma.unwrap() - (est.b - 2.0) / est.sigma_b).abs() < 1e-12);
        let exact = ChshEstimate::exact([0.7, 0.7, 0.7, -0.7]);
        assert!((exact.b - 2.8).abs() < 1e-12);
        assert_eq!(exact.n_sigma, None);
        assert!(exact.exact);
    }

    #[test]
    fn quoted_significance() {
        // B = 2.389 with sigma_B = 0.016
        let n: f64 = (2.389 - 2.0) / 0.016;
        assert!((n - 24.3).abs() < 0.05);
    }

    #[test]
    fn sinusoid_fit_recovers_parameters() {
        let pts: Vec<SlicePoint> = (0..24)
            .map(|i| {
                let t = i as f64 * PI / 12.0;
                let n = 1000.0 * (1.0 + 0.8 * (t - 0.6).cos());
                SlicePoint {
                    theta1: t,
                    n_pp: n.round() as u64,
                    sigma: n.sqrt(),
                }
            })
            .collect();
        let fit = fit_sinusoid(&pts).unwrap();
        assert!((fit.visibility - 0.8).abs() < 1e-3);
        assert!((fit.phase - 0.6).abs() < 1e-3);
        assert!((fit.offset - 1000.0).abs() < 1.0);
        assert!(fit.sigma_phase > 0.0 && fit.sigma_visibility > 0.0);
        assert!(fit_sinusoid(&pts[..3]).is_err());
    }

    #[test]
    fn phase_wrapping() {
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn invalid_run_config() {
        let cfg = RunConfig {
            pairs_per_setting: 0.0,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
