//! Raw (uncorrected) scale estimators for one subgroup.

use super::{check_sample, median_in_place};
use crate::error::Result;

/// Which order statistic of the pairwise distances `Qn` reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum QnVariant {
    /// Median of all `n(n-1)/2` pairwise absolute differences.
    #[default]
    MedianOfPairs,
    /// The `C(h, 2)`-th smallest pairwise difference, `h = n/2 + 1`
    /// (Rousseeuw & Croux, 1993).
    OrderStatistic,
}

/// Sample standard deviation with divisor `n - 1` (two-pass).
pub fn sample_sd(values: &[f64]) -> Result<f64> {
    check_sample(values, 2)?;
    Ok(sd_unchecked(values))
}

pub(crate) fn sd_unchecked(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Median absolute deviation from the median, without consistency factor.
pub fn mad_raw(values: &[f64]) -> Result<f64> {
    check_sample(values, 2)?;
    let mut buf = values.to_vec();
    Ok(mad_in_place(&mut buf))
}

pub(crate) fn mad_in_place(buf: &mut [f64]) -> f64 {
    let med = median_in_place(buf);
    for x in buf.iter_mut() {
        *x = (*x - med).abs();
    }
    median_in_place(buf)
}

/// `Qn` without its correction factor.
pub fn qn_raw(values: &[f64], variant: QnVariant) -> Result<f64> {
    check_sample(values, 2)?;
    let n = values.len();
    let mut diffs = Vec::with_capacity(n * (n - 1) / 2);
    for (i, &xi) in values.iter().enumerate() {
        for &xj in &values[i + 1..] {
            diffs.push((xi - xj).abs());
        }
    }
    Ok(match variant {
        QnVariant::MedianOfPairs => median_in_place(&mut diffs),
        QnVariant::OrderStatistic => {
            let h = n / 2 + 1;
            let k = h * (h - 1) / 2;
            let (_, kth, _) = diffs.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        }
    })
}

/// Bounded loss `rho(u) = psi(u^2)` with `psi(x) = (e^x - 1)/(e^x + 1) = tanh(x/2)`.
/// Even, increasing in `|u|`, `rho(0) = 0`, `rho(inf) = 1`.
#[inline]
pub fn logistic_rho(u: f64) -> f64 {
    (0.5 * u * u).tanh()
}

const MSLOG_REL_TOL: f64 = 1e-10;
const MSLOG_MAX_ITER: usize = 200;

/// Logistic M-scale around the sample median: the `sigma > 0` solving
/// `mean(rho((x_i - med) / sigma)) = kappa`.
///
/// Returns 0 when no positive root exists, i.e. when at most a `kappa`
/// fraction of the observations differ from the median (this includes
/// constant samples).
pub fn mslog_raw(values: &[f64], kappa: f64) -> Result<f64> {
    check_sample(values, 2)?;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(crate::Error::invalid(format!("MSLOG kappa {kappa} must lie in (0, 1)")));
    }
    let mut buf = values.to_vec();
    let med = median_in_place(&mut buf);
    for (r, x) in buf.iter_mut().zip(values) {
        *r = (x - med) * (x - med);
    }
    Ok(mslog_from_squared_residuals(&buf, kappa))
}

pub(crate) fn mslog_from_squared_residuals(r2: &[f64], kappa: f64) -> f64 {
    let n = r2.len() as f64;
    let nonzero = r2.iter().filter(|&&r| r > 0.0).count() as f64;
    if nonzero / n <= kappa {
        return 0.0;
    }
    // Work in s = sigma^2. With y_i = r_i^2 / (2 s):
    //   F(s)       = mean(tanh(y_i)) - kappa      (strictly decreasing)
    //   s F'(s)    = -mean(y_i sech^2(y_i))
    let objective = |s: f64| -> (f64, f64) {
        let mut f = 0.0;
        let mut d = 0.0;
        for &r in r2 {
            let y = r / (2.0 * s);
            let t = y.tanh();
            f += t;
            d -= y * (1.0 - t * t);
        }
        (f / n - kappa, d / n)
    };

    // tanh(y) <= y bounds the root from above.
    let mut hi = r2.iter().sum::<f64>() / (2.0 * n * kappa);
    let mut lo = 0.5 * hi;
    while objective(lo).0 <= 0.0 {
        hi = lo;
        lo *= 0.25;
    }

    // Newton in ln s, safeguarded by the bracket [lo, hi].
    let mut s = (lo * hi).sqrt();
    for _ in 0..MSLOG_MAX_ITER {
        let (f, d) = objective(s);
        if f == 0.0 {
            break;
        }
        if f > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let step = if d < 0.0 { -f / d } else { f64::NAN };
        let cand = s * step.exp();
        let next = if cand.is_finite() && cand > lo && cand < hi {
            cand
        } else {
            (lo * hi).sqrt()
        };
        let done = (next / s - 1.0).abs() < 0.5 * MSLOG_REL_TOL || hi / lo - 1.0 < MSLOG_REL_TOL;
        s = next;
        if done {
            break;
        }
    }
    s.sqrt()
}
