//! Shewhart S-chart with estimated parameters.
//!
//! Phase I: every subgroup gets a (corrected) scale estimate, and a location
//! estimator combines the `k` values into `sigma_hat`. Limits are
//! `L_n * sigma_hat` and `U_n * sigma_hat`, where `L_n`, `U_n` are
//! chi-square probability limits for the Phase II sample standard deviation
//! with total false-alarm probability `alpha`.
//!
//! Because the Phase II statistic is the plain sample SD of `n` normal
//! observations, `(n-1) S^2 / (phi sigma)^2 ~ chi2_{n-1}` and the per-subgroup
//! signal probability `p` is exact. The unconditional ARL is the Monte Carlo
//! average of `1/p` over Phase I replicates, and `alpha` is calibrated (with
//! common random numbers) so that this average hits the target ARL0 on
//! clean Phase I data.

use std::fmt;
use std::str::FromStr;

use crate::contamination::{sample_phase1, OutlierModel, Phase1Data};
use crate::error::{Error, Result};
use crate::estimators::{locate, scale_estimate, LocationEstimatorSpec, ScaleEstimatorSpec};
use crate::par::map_ordered;
use crate::rng::{derive_seed, label_hash, substream, Role, RngStream};
use crate::special::{chi2_isf, chi2_outside, chi2_quantile, Probability};

pub const DEFAULT_TARGET_ARL0: f64 = 370.4;
/// Search interval for the calibrated false-alarm probability.
pub const ALPHA_BRACKET: (f64, f64) = (1e-6, 0.2);
/// Replicate exclusions above this fraction mark an ARL estimate invalid.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.01;

/// How the total false-alarm probability is split between the two limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LimitScheme {
    /// Tails chosen so the known-sigma ARL curve peaks at `phi = 1`:
    /// `d p / d phi = 0` there, i.e. `c_l f(c_l) = c_u f(c_u)` for the
    /// chi-square density `f`.
    #[default]
    ArlUnbiased,
    /// `alpha / 2` in each tail.
    EqualTailed,
}

impl LimitScheme {
    pub fn name(self) -> &'static str {
        match self {
            LimitScheme::ArlUnbiased => "arl-unbiased",
            LimitScheme::EqualTailed => "equal-tailed",
        }
    }
}

impl FromStr for LimitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "arl-unbiased" | "unbiased" => Ok(LimitScheme::ArlUnbiased),
            "equal-tailed" | "equal" => Ok(LimitScheme::EqualTailed),
            other => Err(Error::invalid(format!(
                "unknown limit scheme '{other}' (expected arl-unbiased, equal-tailed)"
            ))),
        }
    }
}

impl fmt::Display for LimitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartConfig {
    pub n: usize,
    pub k: usize,
    pub scale_spec: ScaleEstimatorSpec,
    pub location_spec: LocationEstimatorSpec,
    pub target_arl0: f64,
    pub limit_scheme: LimitScheme,
}

impl ChartConfig {
    pub fn new(n: usize, k: usize, scale_spec: ScaleEstimatorSpec, location_spec: LocationEstimatorSpec) -> Self {
        ChartConfig {
            n,
            k,
            scale_spec,
            location_spec,
            target_arl0: DEFAULT_TARGET_ARL0,
            limit_scheme: LimitScheme::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = vec![];
        if self.n < 2 {
            problems.push(format!("subgroup size n = {} must be >= 2", self.n));
        }
        if self.k < 2 {
            problems.push(format!("subgroup count k = {} must be >= 2", self.k));
        }
        if !(self.target_arl0 > 1.0) {
            problems.push(format!("target ARL0 {} must exceed 1", self.target_arl0));
        }
        if !(self.scale_spec.correction > 0.0) {
            problems.push("scale correction factor must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Usage(problems))
        }
    }
}

/// Chi-square cut points for the Phase II statistic `(n-1) S^2 / sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitFactors {
    pub df: u32,
    pub alpha: f64,
    pub lower_tail: f64,
    pub lower_chi2: f64,
    pub upper_chi2: f64,
}

impl LimitFactors {
    pub fn new(n: usize, alpha: f64, scheme: LimitScheme) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("subgroup size n = {n} must be >= 2")));
        }
        Probability::open(alpha)?;
        let df = (n - 1) as u32;
        let lower_tail = match scheme {
            LimitScheme::EqualTailed => 0.5 * alpha,
            LimitScheme::ArlUnbiased => alpha * unbiased_lower_share(alpha, df)?,
        };
        Ok(LimitFactors {
            df,
            alpha,
            lower_tail,
            lower_chi2: chi2_quantile(lower_tail, df)?,
            upper_chi2: chi2_isf(alpha - lower_tail, df)?,
        })
    }

    /// `L_n`
    pub fn l_factor(&self) -> f64 {
        (self.lower_chi2 / self.df as f64).sqrt()
    }

    /// `U_n`
    pub fn u_factor(&self) -> f64 {
        (self.upper_chi2 / self.df as f64).sqrt()
    }

    /// Signal probability when `sigma_hat / sigma_true = ratio` and the
    /// Phase II process standard deviation is `phi * sigma_true`.
    #[inline]
    pub fn signal_probability(&self, ratio: f64, phi: f64) -> f64 {
        let s = (ratio / phi) * (ratio / phi);
        chi2_outside(self.lower_chi2 * s, self.upper_chi2 * s, self.df)
    }
}

/// Fraction of `alpha` placed in the lower tail by the ARL-unbiased design.
fn unbiased_lower_share(alpha: f64, df: u32) -> Result<f64> {
    // x f(x) ∝ x^{df/2} e^{-x/2}; compare logs.
    let h = |x: f64| 0.5 * df as f64 * x.ln() - 0.5 * x;
    let g = |t: f64| -> Result<f64> {
        let lo = chi2_quantile(t * alpha, df)?;
        let hi = chi2_isf((1.0 - t) * alpha, df)?;
        Ok(h(lo) - h(hi))
    };
    let (mut lo, mut hi) = (1e-12, 1.0 - 1e-12);
    if g(lo)? > 0.0 || g(hi)? < 0.0 {
        return Err(Error::Calibration(format!("cannot split alpha = {alpha} into unbiased tails")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlLimits {
    pub lcl: f64,
    pub ucl: f64,
    /// The Phase I estimate `sigma_hat`.
    pub center: f64,
    pub alpha_star: Probability,
    pub l_factor: f64,
    pub u_factor: f64,
    pub n: usize,
    pub factors: LimitFactors,
}

impl ControlLimits {
    pub fn from_factors(sigma_hat: f64, n: usize, factors: LimitFactors) -> Result<Self> {
        if !(sigma_hat > 0.0) || !sigma_hat.is_finite() {
            return Err(Error::Degenerate(format!("sigma_hat = {sigma_hat} must be positive and finite")));
        }
        let (l, u) = (factors.l_factor(), factors.u_factor());
        Ok(ControlLimits {
            lcl: l * sigma_hat,
            ucl: u * sigma_hat,
            center: sigma_hat,
            alpha_star: Probability::new(factors.alpha)?,
            l_factor: l,
            u_factor: u,
            n,
            factors,
        })
    }

    /// Whether a Phase II sample standard deviation falls outside the limits.
    pub fn signals(&self, phase2_sd: f64) -> bool {
        phase2_sd < self.lcl || phase2_sd > self.ucl
    }
}

pub fn limits_for_alpha(sigma_hat: f64, n: usize, alpha: f64, scheme: LimitScheme) -> Result<ControlLimits> {
    ControlLimits::from_factors(sigma_hat, n, LimitFactors::new(n, alpha, scheme)?)
}

/// Exact probability that one Phase II subgroup signals.
pub fn signal_probability(limits: &ControlLimits, sigma_true: f64, phi: f64) -> Result<Probability> {
    if !(sigma_true > 0.0) || !(phi > 0.0) {
        return Err(Error::domain(format!("sigma_true = {sigma_true} and phi = {phi} must be positive")));
    }
    Probability::new(limits.factors.signal_probability(limits.center / sigma_true, phi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunLengthModel {
    pub p: Probability,
    pub conditional_arl: f64,
    pub phi: f64,
}

impl RunLengthModel {
    pub fn new(limits: &ControlLimits, sigma_true: f64, phi: f64) -> Result<Self> {
        let p = signal_probability(limits, sigma_true, phi)?;
        if p.get() == 0.0 {
            return Err(Error::Degenerate("signal probability underflows to 0".into()));
        }
        Ok(RunLengthModel { p, conditional_arl: 1.0 / p.get(), phi })
    }
}

/// Draw Phase II subgroups from `N(0, (phi sigma)^2)` until one signals.
/// Returns `None` if `max_len` subgroups pass without a signal.
pub fn simulate_run_length(
    limits: &ControlLimits,
    sigma_true: f64,
    phi: f64,
    stream: &mut RngStream,
    max_len: u64,
) -> Option<u64> {
    let n = limits.n;
    let sd = phi * sigma_true;
    let mut buf = vec![0.0; n];
    for t in 1..=max_len {
        for x in buf.iter_mut() {
            *x = sd * stream.standard_normal();
        }
        if limits.signals(crate::estimators::sample_sd(&buf).expect("n >= 2")) {
            return Some(t);
        }
    }
    None
}

/// Phase I estimate of sigma: scale per subgroup, then location across subgroups.
pub fn phase1_sigma_hat(
    data: &Phase1Data,
    scale_spec: &ScaleEstimatorSpec,
    location_spec: &LocationEstimatorSpec,
) -> Result<f64> {
    let scales = data
        .subgroups()
        .map(|g| scale_estimate(g, scale_spec))
        .collect::<Result<Vec<f64>>>()?;
    if scales.iter().all(|&s| s == 0.0) {
        return Err(Error::Degenerate("every subgroup has zero estimated scale".into()));
    }
    locate(&scales, location_spec)
}

/// `sigma_hat` for every (scale, location) combination on one dataset,
/// scale-major. Degenerate combinations yield 0.
pub fn phase1_sigma_hats(
    data: &Phase1Data,
    scales: &[ScaleEstimatorSpec],
    locations: &[LocationEstimatorSpec],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(scales.len() * locations.len());
    let mut per_group = Vec::with_capacity(data.k());
    for spec in scales {
        per_group.clear();
        per_group.extend(data.subgroups().map(|g| scale_estimate(g, spec).unwrap_or(f64::NAN)));
        let degenerate = per_group.iter().all(|&s| s == 0.0) || per_group.iter().any(|s| !s.is_finite());
        for loc in locations {
            let v = if degenerate { 0.0 } else { locate(&per_group, loc).unwrap_or(0.0) };
            out.push(v);
        }
    }
    out
}

/// Seed for the Phase I replicates of one (model, n, k) study cell.
pub fn phase1_cell_seed(seed: u64, model: &OutlierModel, n: usize, k: usize) -> u64 {
    let a_bits = match model.kind {
        crate::contamination::ModelKind::Clean => 0,
        _ => model.a.to_bits(),
    };
    derive_seed(seed, label_hash(&format!("phase1/{}/{a_bits:x}/{n}/{k}", model.kind.name())))
}

/// Seed for the clean Phase I replicates used to calibrate alpha.
pub fn calibration_seed(seed: u64, n: usize, k: usize) -> u64 {
    derive_seed(seed, label_hash(&format!("calibration/{n}/{k}")))
}

/// Result of calibrating alpha on a fixed set of Phase I replicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaCalibration {
    pub alpha_star: Probability,
    /// Average of `1/p` at `alpha_star` over the calibration replicates.
    pub achieved_arl0: f64,
    pub used: usize,
    pub excluded: usize,
}

fn mean_inverse_p(ratios: &[f64], factors: &LimitFactors) -> f64 {
    let inv: Vec<f64> = map_ordered(ratios.len(), |i| 1.0 / factors.signal_probability(ratios[i], 1.0));
    inv.iter().sum::<f64>() / inv.len() as f64
}

/// Calibrate alpha so that the mean of `1/p` over the given clean-data
/// ratios `sigma_hat / sigma` equals `target_arl0`. Bisection on `ln alpha`;
/// the same ratios are reused at every trial, so the objective is a
/// deterministic decreasing function of alpha.
pub fn calibrate_alpha_from_ratios(
    ratios: &[f64],
    n: usize,
    target_arl0: f64,
    scheme: LimitScheme,
) -> Result<AlphaCalibration> {
    let usable: Vec<f64> = ratios.iter().copied().filter(|r| *r > 0.0 && r.is_finite()).collect();
    let excluded = ratios.len() - usable.len();
    if usable.is_empty() {
        return Err(Error::Calibration("no usable Phase I replicates".into()));
    }
    let objective = |ln_alpha: f64| -> Result<f64> {
        Ok(mean_inverse_p(&usable, &LimitFactors::new(n, ln_alpha.exp(), scheme)?))
    };
    let (mut lo, mut hi) = (ALPHA_BRACKET.0.ln(), ALPHA_BRACKET.1.ln());
    let (arl_lo, arl_hi) = (objective(lo)?, objective(hi)?);
    if !(arl_lo >= target_arl0 && arl_hi <= target_arl0) {
        return Err(Error::Calibration(format!(
            "target ARL0 {target_arl0} outside achievable range [{arl_hi:.4}, {arl_lo:.4}] for alpha in {ALPHA_BRACKET:?}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let arl = objective(mid)?;
        if arl > target_arl0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (arl / target_arl0 - 1.0).abs() < 1e-9 || hi - lo < 1e-14 {
            break;
        }
    }
    let alpha = (0.5 * (lo + hi)).exp();
    let achieved = objective(alpha.ln())?;
    Ok(AlphaCalibration { alpha_star: Probability::open(alpha)?, achieved_arl0: achieved, used: usable.len(), excluded })
}

/// Clean-data `sigma_hat` values for calibration (sigma = 1).
pub fn calibration_ratios(config: &ChartConfig, replicates: usize, seed: u64) -> Result<Vec<f64>> {
    config.validate()?;
    let cal_seed = calibration_seed(seed, config.n, config.k);
    let draws: Vec<Result<f64>> = map_ordered(replicates, |r| {
        let mut stream = substream(cal_seed, r as u64, Role::Calibration);
        let data = sample_phase1(&OutlierModel::CLEAN, config.k, config.n, &mut stream)?;
        Ok(phase1_sigma_hat(&data, &config.scale_spec, &config.location_spec).unwrap_or(0.0))
    });
    draws.into_iter().collect()
}

/// Calibrate alpha for one estimator combination under clean Phase I data.
pub fn calibrate_alpha(config: &ChartConfig, replicates: usize, seed: u64) -> Result<AlphaCalibration> {
    if replicates < 100 {
        return Err(Error::invalid(format!("calibration needs at least 100 replicates, got {replicates}")));
    }
    let ratios = calibration_ratios(config, replicates, seed)?;
    calibrate_alpha_from_ratios(&ratios, config.n, config.target_arl0, config.limit_scheme)
}

/// Monte Carlo unconditional ARL with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArlEstimate {
    pub arl: f64,
    pub std_error: f64,
    pub used: usize,
    pub excluded: usize,
    /// More than 1% of replicates were excluded.
    pub invalid: bool,
}

impl ArlEstimate {
    /// Average `1/p` over `ratios` (`sigma_hat / sigma`), excluding
    /// degenerate replicates (`sigma_hat <= 0` or `p == 0`).
    pub fn from_ratios(ratios: &[f64], factors: &LimitFactors, phi: f64) -> ArlEstimate {
        let inv: Vec<f64> = map_ordered(ratios.len(), |i| {
            let r = ratios[i];
            if !(r > 0.0) || !r.is_finite() {
                return f64::NAN;
            }
            let p = factors.signal_probability(r, phi);
            if p > 0.0 {
                1.0 / p
            } else {
                f64::NAN
            }
        });
        let kept: Vec<f64> = inv.into_iter().filter(|v| v.is_finite()).collect();
        let excluded = ratios.len() - kept.len();
        let (mean, se) = mean_and_se(&kept);
        ArlEstimate {
            arl: mean,
            std_error: se,
            used: kept.len(),
            excluded,
            invalid: excluded as f64 > MAX_EXCLUDED_FRACTION * ratios.len() as f64,
        }
    }
}

/// Sample mean and its standard error, summed in slice order.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

/// Phase I `sigma_hat` replicates for one (model, combination).
pub fn phase1_ratios(config: &ChartConfig, model: &OutlierModel, replicates: usize, seed: u64) -> Result<Vec<f64>> {
    config.validate()?;
    model.validate()?;
    let cell = phase1_cell_seed(seed, model, config.n, config.k);
    map_ordered(replicates, |r| {
        let mut stream = substream(cell, r as u64, Role::Phase1Data);
        let data = sample_phase1(model, config.k, config.n, &mut stream)?;
        Ok(phase1_sigma_hat(&data, &config.scale_spec, &config.location_spec).unwrap_or(0.0))
    })
    .into_iter()
    .collect()
}

/// Unconditional ARL of a chart whose alpha was calibrated under clean data,
/// with Phase I drawn from `model` and Phase II disturbed by `phi`.
pub fn unconditional_arl(
    config: &ChartConfig,
    alpha_star: Probability,
    model: &OutlierModel,
    phi: f64,
    replicates: usize,
    seed: u64,
) -> Result<ArlEstimate> {
    if !(phi > 0.0) {
        return Err(Error::domain(format!("phi = {phi} must be positive")));
    }
    let factors = LimitFactors::new(config.n, alpha_star.get(), config.limit_scheme)?;
    let ratios = phase1_ratios(config, model, replicates, seed)?;
    Ok(ArlEstimate::from_ratios(&ratios, &factors, phi))
}
