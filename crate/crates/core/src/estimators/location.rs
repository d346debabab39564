//! Location estimators. In the chart they act on the list of `k` subgroup
//! scale estimates, but they are ordinary location estimators on any list.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use super::scale::mad_in_place;
use super::{check_sample, median_in_place, LocationEstimatorSpec, MAD_CONSISTENCY};
use crate::error::Result;
use crate::special::reg_inc_beta;

pub fn mean(values: &[f64]) -> Result<f64> {
    check_sample(values, 1)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample median; even `n` averages the two central order statistics.
pub fn median(values: &[f64]) -> Result<f64> {
    check_sample(values, 1)?;
    let mut buf = values.to_vec();
    Ok(median_in_place(&mut buf))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberFit {
    pub value: f64,
    pub iterations: usize,
    /// False when `huber_max_iter` was reached; `value` is then the last iterate.
    pub converged: bool,
}

/// Huber M-estimator of location with MAD auxiliary scale, solved by
/// iteratively reweighted means starting from the median.
pub fn huber_m(values: &[f64], spec: &LocationEstimatorSpec) -> Result<HuberFit> {
    check_sample(values, 1)?;
    let mut buf = values.to_vec();
    let med = median_in_place(&mut buf);
    let sigma = MAD_CONSISTENCY * mad_in_place(&mut buf);
    if sigma == 0.0 || values.len() < 2 {
        return Ok(HuberFit { value: med, iterations: 0, converged: true });
    }
    let c = spec.huber_c;
    let mut t = med;
    for it in 1..=spec.huber_max_iter {
        let (mut num, mut den) = (0.0, 0.0);
        for &x in values {
            let r = ((x - t) / sigma).abs();
            let w = if r <= c { 1.0 } else { c / r };
            num += w * x;
            den += w;
        }
        let next = num / den;
        let delta = (next - t).abs();
        t = next;
        if delta <= spec.huber_tol * sigma {
            return Ok(HuberFit { value: t, iterations: it, converged: true });
        }
    }
    Ok(HuberFit { value: t, iterations: spec.huber_max_iter, converged: false })
}

thread_local! {
    static HD_WEIGHTS: RefCell<HashMap<usize, Rc<[f64]>>> = RefCell::new(HashMap::new());
}

/// Harrell-Davis weights for the median of `n` order statistics:
/// `W_i = I_{i/n}(a, a) - I_{(i-1)/n}(a, a)`, `a = (n + 1) / 2`.
pub fn harrell_davis_weights(n: usize) -> Rc<[f64]> {
    HD_WEIGHTS.with(|cache| {
        cache
            .borrow_mut()
            .entry(n)
            .or_insert_with(|| compute_hd_weights(n).into())
            .clone()
    })
}

fn compute_hd_weights(n: usize) -> Vec<f64> {
    let a = (n as f64 + 1.0) / 2.0;
    let cdf: Vec<f64> = (0..=n)
        .map(|i| reg_inc_beta(i as f64 / n as f64, a, a).expect("a > 0 and x in [0, 1]"))
        .collect();
    cdf.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Harrell-Davis estimate of the median.
pub fn harrell_davis_median(values: &[f64]) -> Result<f64> {
    check_sample(values, 1)?;
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let weights = harrell_davis_weights(sorted.len());
    Ok(sorted.iter().zip(weights.iter()).map(|(x, w)| x * w).sum())
}

/// Hodges-Lehmann estimator: median of the Walsh averages
/// `(x_i + x_j) / 2` over `i < j`.
pub fn hodges_lehmann(values: &[f64]) -> Result<f64> {
    check_sample(values, 1)?;
    let n = values.len();
    if n == 1 {
        return Ok(values[0]);
    }
    let mut walsh = Vec::with_capacity(n * (n - 1) / 2);
    for (i, &xi) in values.iter().enumerate() {
        for &xj in &values[i + 1..] {
            walsh.push(0.5 * (xi + xj));
        }
    }
    Ok(median_in_place(&mut walsh))
}
