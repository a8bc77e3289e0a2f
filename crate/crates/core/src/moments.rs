//! Moments of moments: short-window moments of |ζ| on the critical line, their
//! second moment over t, shifted pair moments and the exponent predictions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, integrate_adaptive, simpson, CompensatedSum};
use crate::primes::BlockSchedule;
use crate::zeta::ZetaEvaluator;
use crate::Complex64;

/// Near/far threshold for shift separation, in units of 1/log T.
pub const SEPARATION_CONSTANT: f64 = 1.0;

pub const DEFAULT_GROUPS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Plain,
    MedianOfMeans { groups: usize },
}

impl Default for Estimator {
    fn default() -> Self {
        Estimator::MedianOfMeans { groups: DEFAULT_GROUPS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomConfig {
    #[serde(rename = "T")]
    pub t_height: f64,
    pub beta: f64,
    pub theta: f64,
    pub n_t: usize,
    pub n_h: usize,
    pub seed: u64,
    pub estimator: Estimator,
}

impl MomConfig {
    pub fn new(t_height: f64, beta: f64, theta: f64) -> Self {
        Self {
            t_height,
            beta,
            theta,
            n_t: 4096,
            n_h: 257,
            seed: 0,
            estimator: Estimator::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_height >= 100.0 && self.t_height <= 1e8) {
            return Err(Error::InvalidParameter(format!("T = {} outside [100, 1e8]", self.t_height)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta = {} must be non-negative", self.beta)));
        }
        if !(self.theta > -1.0) {
            return Err(Error::InvalidParameter(format!("theta = {} must exceed -1", self.theta)));
        }
        if self.n_t < 16 {
            return Err(Error::InvalidParameter(format!("n_t = {} below 16", self.n_t)));
        }
        if self.n_h < 5 || self.n_h % 4 != 1 {
            return Err(Error::InvalidParameter(format!("n_h = {} must be 1 mod 4 and at least 5", self.n_h)));
        }
        if let Estimator::MedianOfMeans { groups } = self.estimator {
            if groups == 0 || groups > self.n_t {
                return Err(Error::InvalidParameter(format!("{groups} groups for {} samples", self.n_t)));
            }
        }
        Ok(())
    }

    /// Half-width (log T)^θ of the short window.
    pub fn half_window(&self) -> f64 {
        self.t_height.ln().powf(self.theta)
    }

    fn h_grid(&self) -> (Vec<f64>, f64) {
        let half = self.half_window();
        let step = 2.0 * half / (self.n_h - 1) as f64;
        ((0..self.n_h).map(|k| -half + step * k as f64).collect(), step)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Largest single-sample share of the sum of squared short moments.
    pub dominance: f64,
    pub config: MomConfig,
}

impl MomEstimate {
    pub const CSV_HEADER: &'static str = "T,beta,theta,value,stderr,dominance,n_t,n_h,seed";

    pub fn csv_row(&self) -> String {
        let c = &self.config;
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
            c.t_height, c.beta, c.theta, self.value, self.stderr, self.dominance, c.n_t, c.n_h, c.seed
        )
    }
}

/// Uniform draw from stratum `index` of [T, 2T] split into `strata` pieces.
pub fn stratified_sample(t_height: f64, strata: usize, index: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let u: f64 = rng.gen();
    t_height + t_height * (index as f64 + u) / strata as f64
}

fn simpson_checked(values: &[f64], step: f64) -> Result<f64> {
    let fine = simpson(values, step);
    let coarse: Vec<f64> = values.iter().step_by(2).copied().collect();
    let rough = simpson(&coarse, 2.0 * step);
    if (fine - rough).abs() > 0.01 * fine.abs() {
        return Err(Error::QuadratureUnstable(format!("step halving moved the short moment from {rough:.6e} to {fine:.6e}")));
    }
    Ok(fine)
}

/// ∫_{|h| ≤ (log T)^θ} |ζ(1/2 + it + ih)|^{2β} dh by composite Simpson.
pub fn inner_short_moment(t: f64, cfg: &MomConfig, zeta: &ZetaEvaluator) -> Result<f64> {
    cfg.validate()?;
    if !(t >= cfg.t_height && t <= 2.0 * cfg.t_height) {
        return Err(Error::InvalidParameter(format!("t = {t} outside [T, 2T]")));
    }
    let (grid, step) = cfg.h_grid();
    if cfg.beta == 0.0 {
        return Ok(step * (cfg.n_h - 1) as f64);
    }
    let values = grid
        .iter()
        .map(|h| Ok(zeta.critical_abs(t + h)?.powf(2.0 * cfg.beta)))
        .collect::<Result<Vec<_>>>()?;
    simpson_checked(&values, step)
}

/// |ζ(1/2 + it + ih)| on the h-grid for each stratified t, shared across β.
#[derive(Clone, Debug)]
pub struct WindowSamples {
    pub t: Vec<f64>,
    pub abs_zeta: Vec<Vec<f64>>,
    pub step: f64,
}

impl WindowSamples {
    pub fn draw(cfg: &MomConfig, zeta: &ZetaEvaluator) -> Result<Self> {
        cfg.validate()?;
        let (grid, step) = cfg.h_grid();
        let rows: Vec<Result<(f64, Vec<f64>)>> = (0..cfg.n_t)
            .into_par_iter()
            .map(|i| {
                let t = stratified_sample(cfg.t_height, cfg.n_t, i, cfg.seed);
                let row = grid.iter().map(|h| zeta.critical_abs(t + h)).collect::<Result<Vec<_>>>()?;
                Ok((t, row))
            })
            .collect();
        let mut t = Vec::with_capacity(cfg.n_t);
        let mut abs_zeta = Vec::with_capacity(cfg.n_t);
        for r in rows {
            let (ti, row) = r?;
            t.push(ti);
            abs_zeta.push(row);
        }
        Ok(Self { t, abs_zeta, step })
    }

    /// Short moments for one β.
    pub fn inner(&self, beta: f64) -> Result<Vec<f64>> {
        self.abs_zeta
            .par_iter()
            .map(|row| {
                let vals: Vec<f64> = row.iter().map(|a| a.powf(2.0 * beta)).collect();
                simpson_checked(&vals, self.step)
            })
            .collect()
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = compensated_sum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Combine per-sample values by the configured estimator.
pub fn estimate(samples: &[f64], estimator: Estimator) -> (f64, f64) {
    match estimator {
        Estimator::Plain => mean_and_stderr(samples),
        Estimator::MedianOfMeans { groups } => {
            let means: Vec<f64> = (0..groups)
                .map(|g| {
                    let members: Vec<f64> = samples.iter().skip(g).step_by(groups).copied().collect();
                    compensated_sum(members.iter().copied()) / members.len() as f64
                })
                .collect();
            let (_, spread) = mean_and_stderr(&means);
            (median(means), spread)
        }
    }
}

/// MoM from precomputed window samples at one β.
pub fn mom2_from_samples(samples: &WindowSamples, cfg: &MomConfig) -> Result<MomEstimate> {
    let squares: Vec<f64> = if cfg.beta == 0.0 {
        let width = samples.step * (cfg.n_h - 1) as f64;
        vec![width * width; samples.t.len()]
    } else {
        samples.inner(cfg.beta)?.into_iter().map(|v| v * v).collect()
    };
    let (value, stderr) = estimate(&squares, cfg.estimator);
    let total: CompensatedSum = squares.iter().copied().collect();
    let largest = squares.iter().copied().fold(0.0, f64::max);
    let dominance = if total.value() > 0.0 { largest / total.value() } else { 0.0 };
    Ok(MomEstimate {
        value,
        stderr,
        dominance,
        config: cfg.clone(),
    })
}

/// Second moment over t ∈ [T, 2T] of the short-window 2β-moment.
pub fn mom2_estimate(cfg: &MomConfig, zeta: &ZetaEvaluator) -> Result<MomEstimate> {
    cfg.validate()?;
    if cfg.beta == 0.0 {
        let (_, step) = cfg.h_grid();
        let samples = WindowSamples {
            t: (0..cfg.n_t).map(|i| stratified_sample(cfg.t_height, cfg.n_t, i, cfg.seed)).collect(),
            abs_zeta: Vec::new(),
            step,
        };
        return mom2_from_samples(&samples, cfg);
    }
    let samples = WindowSamples::draw(cfg, zeta)?;
    mom2_from_samples(&samples, cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairMoment {
    pub value: f64,
    pub stderr: f64,
}

/// Mean of |ζ(1/2+it+ih1) ζ(1/2+it+ih2)|^{2β} over stratified t in [T, 2T].
pub fn shifted_pair_moment(t_height: f64, beta: f64, h1: f64, h2: f64, n_t: usize, seed: u64, zeta: &ZetaEvaluator) -> Result<PairMoment> {
    if n_t < 2 {
        return Err(Error::InvalidParameter("pair moment needs at least two samples".into()));
    }
    if beta == 0.0 {
        return Ok(PairMoment { value: 1.0, stderr: 0.0 });
    }
    let values: Vec<Result<f64>> = (0..n_t)
        .into_par_iter()
        .map(|i| {
            let t = stratified_sample(t_height, n_t, i, seed);
            let a = zeta.critical_abs(t + h1)?;
            let b = zeta.critical_abs(t + h2)?;
            Ok((a * b).powf(2.0 * beta))
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    let (value, stderr) = mean_and_stderr(&values);
    Ok(PairMoment { value, stderr })
}

/// (log T)^{4β²} for near shifts, (log T)^{2β²}|ζ(1 + i dh)|^{2β²} for far ones.
pub fn correlation_prediction(t_height: f64, beta: f64, dh: f64, zeta: &ZetaEvaluator) -> Result<f64> {
    if !(dh >= 0.0) {
        return Err(Error::InvalidParameter(format!("dh = {dh} must be non-negative")));
    }
    let log_t = t_height.ln();
    let b2 = beta * beta;
    if dh <= SEPARATION_CONSTANT / log_t {
        return Ok(log_t.powf(4.0 * b2));
    }
    let z = zeta.zeta(Complex64::new(1.0, dh))?.norm();
    Ok(log_t.powf(2.0 * b2) * z.powf(2.0 * b2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomExponent {
    pub exponent: f64,
    pub loglog_factor: bool,
    pub regime: Regime,
    pub critical_beta: f64,
    /// Lower-order exponent for θ > 0 below the crossover.
    pub subleading: Option<f64>,
    pub subleading_loglog: bool,
}

const CRITICAL_TOL: f64 = 1e-12;

/// Predicted growth exponent of MoM_T(2, β) in log T.
pub fn predicted_mom_exponent(beta: f64, theta: f64) -> Result<MomExponent> {
    if !(theta > -1.0) || !(beta >= 0.0) {
        return Err(Error::InvalidParameter(format!("need theta > -1 and beta >= 0 (got {theta}, {beta})")));
    }
    let b2 = beta * beta;
    let half_root = std::f64::consts::FRAC_1_SQRT_2;
    if theta <= 0.0 {
        let (exponent, regime) = if (beta - half_root).abs() < CRITICAL_TOL {
            (1.0 + theta, Regime::Critical)
        } else if beta < half_root {
            (2.0 * b2 * (1.0 + theta), Regime::Subcritical)
        } else {
            (4.0 * b2 + theta - 1.0, Regime::Supercritical)
        };
        return Ok(MomExponent {
            exponent,
            loglog_factor: regime == Regime::Critical,
            regime,
            critical_beta: half_root,
            subleading: None,
            subleading_loglog: false,
        });
    }
    let crossover = ((1.0 + theta) / 2.0).sqrt();
    let at_half_root = (beta - half_root).abs() < CRITICAL_TOL;
    let (exponent, regime, subleading) = if (beta - crossover).abs() < CRITICAL_TOL {
        (1.0 + 3.0 * theta, Regime::Critical, None)
    } else if beta < crossover {
        let sub = if at_half_root { 1.0 + theta } else { 2.0 * b2 + theta };
        (2.0 * b2 + 2.0 * theta, Regime::Subcritical, Some(sub))
    } else {
        (4.0 * b2 + theta - 1.0, Regime::Supercritical, None)
    };
    Ok(MomExponent {
        exponent,
        loglog_factor: false,
        regime,
        critical_beta: crossover,
        subleading,
        subleading_loglog: at_half_root && subleading.is_some(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnvelopeIntegrals {
    pub i1: f64,
    pub i2: f64,
}

/// Envelope integrals over SEPARATION_CONSTANT/log T ≤ h ≤ 2(log T)^θ at block boundary T_v.
pub fn envelope_integrals(v: usize, beta: f64, theta: f64, t_height: f64, schedule: &BlockSchedule, zeta: &ZetaEvaluator) -> Result<EnvelopeIntegrals> {
    if v >= schedule.boundaries.len() {
        return Err(Error::BlockOutOfRange {
            index: v,
            ell: schedule.boundaries.len() - 1,
        });
    }
    let log_t = t_height.ln();
    let sigma = 1.0 + 1.0 / schedule.boundaries[v].ln();
    let lo = SEPARATION_CONSTANT / log_t;
    let hi = 2.0 * log_t.powf(theta);
    if hi <= lo {
        return Ok(EnvelopeIntegrals { i1: 0.0, i2: 0.0 });
    }
    let b2 = beta * beta;
    let shifted = |h: f64| zeta.zeta(Complex64::new(sigma, h)).map(|z| z.norm()).unwrap_or(f64::NAN);
    let edge = |h: f64| zeta.zeta(Complex64::new(1.0, h)).map(|z| z.norm()).unwrap_or(f64::NAN);
    let unstable = |e: Error| Error::QuadratureUnstable(e.to_string());
    let i2 = integrate_adaptive(|h| shifted(h).powf(2.0 * b2), lo, hi, 1e-3).map_err(unstable)?;
    let i1 = integrate_adaptive(|h| shifted(h).powf(2.0 * b2 - 2.0) * edge(h).powi(2), lo, hi, 1e-3).map_err(unstable)?;
    if !i1.is_finite() || !i2.is_finite() {
        return Err(Error::QuadratureUnstable("non-finite envelope integrand".into()));
    }
    Ok(EnvelopeIntegrals { i1, i2 })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LadderFit {
    pub ladder: Vec<f64>,
    pub log_values: Vec<f64>,
    pub loglog: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub residual_norm: f64,
    /// Second divided differences share one sign: the data bend away from a power law.
    pub curved: bool,
}

/// Least-squares slope of log value against log log T.
pub fn ladder_fit(points: &[(f64, f64)]) -> Result<LadderFit> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter(format!("ladder of length {} below 3", points.len())));
    }
    if points.windows(2).any(|w| w[0].0 >= w[1].0) || points.iter().any(|p| !(p.0 > std::f64::consts::E && p.1 > 0.0)) {
        return Err(Error::InvalidParameter("ladder must increase with T > e and positive values".into()));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln().ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = x.len() as f64;
    let mx = compensated_sum(x.iter().copied()) / n;
    let my = compensated_sum(y.iter().copied()) / n;
    let sxx = compensated_sum(x.iter().map(|v| (v - mx) * (v - mx)));
    if sxx < 1e-12 {
        return Err(Error::DegenerateFit);
    }
    let sxy = compensated_sum(x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - intercept - slope * a).collect();
    let residual_norm = compensated_sum(residuals.iter().map(|r| r * r)).sqrt();
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let second: Vec<f64> = (1..x.len() - 1)
        .map(|k| {
            let left = (y[k] - y[k - 1]) / (x[k] - x[k - 1]);
            let right = (y[k + 1] - y[k]) / (x[k + 1] - x[k]);
            (right - left) / (x[k + 1] - x[k - 1])
        })
        .collect();
    let threshold = 1e-9 * scale;
    let curved = second.iter().all(|d| *d > threshold) || second.iter().all(|d| *d < -threshold);
    Ok(LadderFit {
        ladder: points.iter().map(|p| p.0).collect(),
        log_values: y,
        loglog: x,
        slope,
        intercept,
        residual_norm,
        curved,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub beta: f64,
    pub theta: f64,
    pub fitted: f64,
    pub predicted: MomExponent,
    pub fit: LadderFit,
    pub estimates: Vec<MomEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanTable {
    pub rows: Vec<ScanRow>,
    /// β at the largest second difference of fitted exponents (None below three β values).
    pub kink_beta: Option<f64>,
}

impl ScanTable {
    pub const CSV_HEADER: &'static str = "beta,theta,fitted,predicted,loglog_factor,regime,residual_norm,curved,max_dominance";

    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                let dom = r.estimates.iter().map(|e| e.dominance).fold(0.0, f64::max);
                format!(
                    "{:.16e},{:.16e},{:.16e},{:.16e},{},{:?},{:.16e},{},{:.16e}",
                    r.beta, r.theta, r.fitted, r.predicted.exponent, r.predicted.loglog_factor, r.predicted.regime, r.fit.residual_norm, r.curved(), dom
                )
            })
            .collect()
    }
}

impl ScanRow {
    fn curved(&self) -> bool {
        self.fit.curved
    }
}

/// Fitted versus predicted MoM exponents over a β grid and a T ladder.
pub fn transition_scan(betas: &[f64], theta: f64, ladder: &[f64], template: &MomConfig, zeta: &ZetaEvaluator) -> Result<ScanTable> {
    if ladder.len() < 3 {
        return Err(Error::InvalidParameter(format!("ladder of length {} below 3", ladder.len())));
    }
    let mut per_height = Vec::with_capacity(ladder.len());
    for &t in ladder {
        let cfg = MomConfig {
            t_height: t,
            theta,
            beta: 1.0,
            ..template.clone()
        };
        per_height.push((cfg.clone(), WindowSamples::draw(&cfg, zeta)?));
    }
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let mut estimates = Vec::with_capacity(ladder.len());
        for (cfg, samples) in &per_height {
            let cfg = MomConfig { beta, ..cfg.clone() };
            estimates.push(mom2_from_samples(samples, &cfg)?);
        }
        let points: Vec<(f64, f64)> = estimates.iter().map(|e| (e.config.t_height, e.value)).collect();
        let fit = ladder_fit(&points)?;
        rows.push(ScanRow {
            beta,
            theta,
            fitted: fit.slope,
            predicted: predicted_mom_exponent(beta, theta)?,
            fit,
            estimates,
        });
    }
    let kink_beta = kink(&rows);
    Ok(ScanTable { rows, kink_beta })
}

fn kink(rows: &[ScanRow]) -> Option<f64> {
    if rows.len() < 3 {
        return None;
    }
    (1..rows.len() - 1)
        .map(|k| {
            let (a, b, c) = (&rows[k - 1], &rows[k], &rows[k + 1]);
            let left = (b.fitted - a.fitted) / (b.beta - a.beta);
            let right = (c.fitted - b.fitted) / (c.beta - b.beta);
            (k, (right - left) / (c.beta - a.beta))
        })
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(k, _)| rows[k].beta)
}
