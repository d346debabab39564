//! Scale and location estimators, their tuning constants, and Monte Carlo
//! unbiasing factors.
//!
//! Scale estimators (`sd`, `mad`, `qn`, `qn-rc`, `mslog`) act on one rational
//! subgroup. Location estimators (`mean`, `huber`, `hd`, `hl`) combine the `k`
//! subgroup scale estimates into the Phase I estimate of sigma.

mod location;
mod scale;

use std::fmt;
use std::str::FromStr;

pub use location::{
    harrell_davis_median, harrell_davis_weights, hodges_lehmann, huber_m, mean, median, HuberFit,
};
pub use scale::{logistic_rho, mad_raw, mslog_raw, qn_raw, sample_sd, QnVariant};

use crate::error::{Error, Result};
use crate::par::sum_ordered;
use crate::rng::{derive_seed, label_hash, substream, Role};

/// `1 / Phi^{-1}(3/4)`: makes the MAD consistent for sigma at the normal.
pub const MAD_CONSISTENCY: f64 = 1.482_602_218_505_602;

pub const DEFAULT_HUBER_C: f64 = 1.5;
/// `rho(inf) / 2`: 50% breakdown for the logistic M-scale.
pub const DEFAULT_MSLOG_KAPPA: f64 = 0.5;
pub const MIN_CORRECTION_REPLICATES: usize = 100;

pub(crate) fn check_sample(values: &[f64], min_len: usize) -> Result<()> {
    if values.len() < min_len {
        return Err(Error::invalid(format!(
            "sample of size {} is too small (need at least {min_len})",
            values.len()
        )));
    }
    if let Some(bad) = values.iter().find(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("sample contains non-finite value {bad}")));
    }
    Ok(())
}

/// Median by selection; reorders `buf`. Even lengths average the two
/// central order statistics.
pub(crate) fn median_in_place(buf: &mut [f64]) -> f64 {
    let n = buf.len();
    let mid = n / 2;
    let (lower, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if n % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScaleKind {
    Sd,
    Mad,
    Qn,
    Mslog,
}

impl ScaleKind {
    pub const ALL: [ScaleKind; 4] = [ScaleKind::Sd, ScaleKind::Mad, ScaleKind::Qn, ScaleKind::Mslog];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleEstimatorSpec {
    pub kind: ScaleKind,
    pub qn_variant: QnVariant,
    pub kappa: f64,
    /// Multiplicative unbiasing factor for the configured subgroup size.
    pub correction: f64,
}

impl ScaleEstimatorSpec {
    /// An uncorrected (`correction = 1`) estimator with default tuning.
    pub fn new(kind: ScaleKind) -> Self {
        ScaleEstimatorSpec {
            kind,
            qn_variant: QnVariant::default(),
            kappa: DEFAULT_MSLOG_KAPPA,
            correction: 1.0,
        }
    }

    pub fn with_qn_variant(mut self, variant: QnVariant) -> Self {
        self.qn_variant = variant;
        self
    }

    pub fn with_correction(mut self, correction: f64) -> Self {
        self.correction = correction;
        self
    }

    /// Short name used on the command line and in output files.
    pub fn name(&self) -> &'static str {
        match (self.kind, self.qn_variant) {
            (ScaleKind::Sd, _) => "sd",
            (ScaleKind::Mad, _) => "mad",
            (ScaleKind::Qn, QnVariant::MedianOfPairs) => "qn",
            (ScaleKind::Qn, QnVariant::OrderStatistic) => "qn-rc",
            (ScaleKind::Mslog, _) => "mslog",
        }
    }

    /// Identifier including tuning constants; distinguishes calibration targets.
    pub fn tuning_id(&self) -> String {
        match self.kind {
            ScaleKind::Mslog => format!("mslog(kappa={})", self.kappa),
            _ => self.name().to_string(),
        }
    }

    pub fn raw(&self, values: &[f64]) -> Result<f64> {
        match self.kind {
            ScaleKind::Sd => sample_sd(values),
            ScaleKind::Mad => mad_raw(values),
            ScaleKind::Qn => qn_raw(values, self.qn_variant),
            ScaleKind::Mslog => mslog_raw(values, self.kappa),
        }
    }
}

impl FromStr for ScaleEstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec = match s.trim().to_ascii_lowercase().as_str() {
            "sd" => ScaleEstimatorSpec::new(ScaleKind::Sd),
            "mad" => ScaleEstimatorSpec::new(ScaleKind::Mad),
            "qn" => ScaleEstimatorSpec::new(ScaleKind::Qn),
            "qn-rc" => ScaleEstimatorSpec::new(ScaleKind::Qn).with_qn_variant(QnVariant::OrderStatistic),
            "mslog" => ScaleEstimatorSpec::new(ScaleKind::Mslog),
            other => {
                return Err(Error::invalid(format!(
                    "unknown scale estimator '{other}' (expected sd, mad, qn, qn-rc, mslog)"
                )))
            }
        };
        Ok(spec)
    }
}

impl fmt::Display for ScaleEstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocationKind {
    Mean,
    Huber,
    Hd,
    Hl,
}

impl LocationKind {
    pub const ALL: [LocationKind; 4] =
        [LocationKind::Mean, LocationKind::Huber, LocationKind::Hd, LocationKind::Hl];

    pub fn name(self) -> &'static str {
        match self {
            LocationKind::Mean => "mean",
            LocationKind::Huber => "huber",
            LocationKind::Hd => "hd",
            LocationKind::Hl => "hl",
        }
    }
}

impl FromStr for LocationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(LocationKind::Mean),
            "huber" => Ok(LocationKind::Huber),
            "hd" => Ok(LocationKind::Hd),
            "hl" => Ok(LocationKind::Hl),
            other => Err(Error::invalid(format!(
                "unknown location estimator '{other}' (expected mean, huber, hd, hl)"
            ))),
        }
    }
}

impl fmt::Display for LocationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationEstimatorSpec {
    pub kind: LocationKind,
    pub huber_c: f64,
    pub huber_tol: f64,
    pub huber_max_iter: usize,
}

impl LocationEstimatorSpec {
    pub fn new(kind: LocationKind) -> Self {
        LocationEstimatorSpec { kind, huber_c: DEFAULT_HUBER_C, huber_tol: 1e-10, huber_max_iter: 500 }
    }

    pub fn huber() -> Self {
        Self::new(LocationKind::Huber)
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn tuning_id(&self) -> String {
        match self.kind {
            LocationKind::Huber => format!("huber(c={})", self.huber_c),
            k => k.name().to_string(),
        }
    }
}

/// Corrected scale estimate: `spec.correction * raw`.
pub fn scale_estimate(values: &[f64], spec: &ScaleEstimatorSpec) -> Result<f64> {
    Ok(spec.correction * spec.raw(values)?)
}

/// Location of a list of values (usually the `k` subgroup scale estimates).
pub fn locate(values: &[f64], spec: &LocationEstimatorSpec) -> Result<f64> {
    match spec.kind {
        LocationKind::Mean => mean(values),
        LocationKind::Huber => {
            if !(spec.huber_c > 0.0) {
                return Err(Error::invalid("huber_c must be positive"));
            }
            huber_m(values, spec).map(|fit| fit.value)
        }
        LocationKind::Hd => harrell_davis_median(values),
        LocationKind::Hl => hodges_lehmann(values),
    }
}

/// Monte Carlo unbiasing factor `1 / E[raw]` for subgroups of size `n` drawn
/// from `N(0, 1)`. The `correction` field of `spec` is ignored.
pub fn correction_factor(spec: &ScaleEstimatorSpec, n: usize, replicates: usize, seed: u64) -> Result<f64> {
    if replicates < MIN_CORRECTION_REPLICATES {
        return Err(Error::invalid(format!(
            "correction calibration needs at least {MIN_CORRECTION_REPLICATES} replicates, got {replicates}"
        )));
    }
    if n < 2 {
        return Err(Error::invalid("scale estimators need subgroups of size n >= 2"));
    }
    let stream_seed = derive_seed(seed, label_hash(&format!("correction/{}/{n}", spec.tuning_id())));
    let total = sum_ordered(replicates, |r| {
        let mut stream = substream(stream_seed, r as u64, Role::Correction);
        let sample: Vec<f64> = (0..n).map(|_| stream.standard_normal()).collect();
        spec.raw(&sample).expect("finite normal sample of size >= 2")
    });
    let mean_raw = total / replicates as f64;
    if !(mean_raw > 0.0) {
        return Err(Error::Calibration(format!(
            "{} at n = {n}: mean raw estimate {mean_raw} is not positive",
            spec.name()
        )));
    }
    Ok(1.0 / mean_raw)
}
