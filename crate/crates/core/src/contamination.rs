//! Phase I data generators: the clean baseline and three outlier models.
//!
//! The in-control process is `N(0, 1)` in every model. Contamination is
//! transient, so the target of Phase I estimation is always sigma = 1.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::{Role, RngStream};

/// Fraction of observations (Models 1-2) or subgroups (Model 3) contaminated.
pub const CONTAMINATION_FRACTION: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Clean,
    /// Model 1: each observation from `N(0, a^2)` with probability 0.2.
    DiffuseSymmetric,
    /// Model 2: each observation from an uncentered `chi2_a` with probability 0.2.
    DiffuseAsymmetric,
    /// Model 3: `round(0.2 k)` whole subgroups from `N(0, a^2)`.
    Localized,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Clean => "clean",
            ModelKind::DiffuseSymmetric => "m1",
            ModelKind::DiffuseAsymmetric => "m2",
            ModelKind::Localized => "m3",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clean" => Ok(ModelKind::Clean),
            "m1" => Ok(ModelKind::DiffuseSymmetric),
            "m2" => Ok(ModelKind::DiffuseAsymmetric),
            "m3" => Ok(ModelKind::Localized),
            other => Err(Error::invalid(format!("unknown outlier model '{other}' (expected clean, m1, m2, m3)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutlierModel {
    pub kind: ModelKind,
    /// Standard-deviation multiplier (Models 1 and 3) or chi-square degrees
    /// of freedom (Model 2). Ignored for the clean model.
    pub a: f64,
}

impl OutlierModel {
    pub const CLEAN: OutlierModel = OutlierModel { kind: ModelKind::Clean, a: 1.0 };

    pub fn new(kind: ModelKind, a: f64) -> Result<Self> {
        let model = OutlierModel { kind, a };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ModelKind::Clean => Ok(()),
            ModelKind::DiffuseSymmetric | ModelKind::Localized => {
                if self.a.is_finite() && self.a >= 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("{}: severity a = {} must be >= 1", self.kind.name(), self.a)))
                }
            }
            ModelKind::DiffuseAsymmetric => {
                if self.a.is_finite() && self.a >= 1.0 && self.a.fract() == 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "m2: severity a = {} must be a positive integer (chi-square degrees of freedom)",
                        self.a
                    )))
                }
            }
        }
    }

    pub fn epsilon(&self) -> f64 {
        CONTAMINATION_FRACTION
    }

    /// Number of contaminated subgroups under Model 3.
    pub fn localized_count(k: usize) -> usize {
        (CONTAMINATION_FRACTION * k as f64).round() as usize
    }
}

impl fmt::Display for OutlierModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ModelKind::Clean => f.write_str("clean"),
            k => write!(f, "{}(a={})", k.name(), self.a),
        }
    }
}

/// `k` subgroups of `n` observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Data {
    k: usize,
    n: usize,
    values: Vec<f64>,
    contaminated: Vec<bool>,
}

impl Phase1Data {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if k < 2 || n < 2 {
            return Err(Error::invalid(format!("need k >= 2 subgroups of n >= 2, got k = {k}, n = {n}")));
        }
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Data(format!("subgroup {} has {} values, expected {n}", i + 1, row.len())));
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        let contaminated = vec![false; values.len()];
        Ok(Phase1Data { k, n, values, contaminated })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn subgroup(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn subgroups(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Per-observation contamination indicator (diagnostics only).
    pub fn contaminated_mask(&self) -> &[bool] {
        &self.contaminated
    }

    pub fn contaminated_subgroups(&self) -> usize {
        self.contaminated.chunks_exact(self.n).filter(|row| row.iter().any(|&c| c)).count()
    }

    /// Multiply every observation by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Phase1Data {
        Phase1Data { values: self.values.iter().map(|x| x * lambda).collect(), ..self.clone() }
    }
}

/// Draw one Phase I dataset. Model 3 picks its contaminated subgroups from
/// the `SubgroupSelection` sibling of `stream`.
pub fn sample_phase1(model: &OutlierModel, k: usize, n: usize, stream: &mut RngStream) -> Result<Phase1Data> {
    if k < 2 || n < 2 {
        return Err(Error::invalid(format!("Phase I needs k >= 2 and n >= 2, got k = {k}, n = {n}")));
    }
    model.validate()?;
    let total = k * n;
    let mut values = Vec::with_capacity(total);
    let mut contaminated = vec![false; total];
    match model.kind {
        ModelKind::Clean => values.extend((0..total).map(|_| stream.standard_normal())),
        ModelKind::DiffuseSymmetric => {
            for flag in contaminated.iter_mut() {
                let hit = stream.uniform() < CONTAMINATION_FRACTION;
                let z = stream.standard_normal();
                *flag = hit;
                values.push(if hit { model.a * z } else { z });
            }
        }
        ModelKind::DiffuseAsymmetric => {
            let df = model.a as u32;
            for flag in contaminated.iter_mut() {
                let hit = stream.uniform() < CONTAMINATION_FRACTION;
                *flag = hit;
                let x = if hit {
                    (0..df).map(|_| stream.standard_normal().powi(2)).sum()
                } else {
                    stream.standard_normal()
                };
                values.push(x);
            }
        }
        ModelKind::Localized => {
            let mut selector = stream.sibling(Role::SubgroupSelection);
            let chosen = rand::seq::index::sample(&mut selector, k, OutlierModel::localized_count(k));
            for i in chosen.iter() {
                contaminated[i * n..(i + 1) * n].fill(true);
            }
            for flag in &contaminated {
                let z = stream.standard_normal();
                values.push(if *flag { model.a * z } else { z });
            }
        }
    }
    Ok(Phase1Data { k, n, values, contaminated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn model_validation() {
        assert!(OutlierModel::new(ModelKind::DiffuseAsymmetric, 2.5).is_err());
        assert!(OutlierModel::new(ModelKind::DiffuseAsymmetric, 3.0).is_ok());
        assert!(OutlierModel::new(ModelKind::DiffuseSymmetric, 0.5).is_err());
        assert!(OutlierModel::new(ModelKind::Localized, 2.5).is_ok());
        let mut s = substream(1, 0, Role::Phase1Data);
        assert!(sample_phase1(&OutlierModel::CLEAN, 1, 5, &mut s).is_err());
        assert!(sample_phase1(&OutlierModel::CLEAN, 5, 1, &mut s).is_err());
    }

    #[test]
    fn dimensions_and_determinism() {
        let m = OutlierModel::new(ModelKind::Localized, 3.0).unwrap();
        let a = sample_phase1(&m, 50, 5, &mut substream(4, 9, Role::Phase1Data)).unwrap();
        let b = sample_phase1(&m, 50, 5, &mut substream(4, 9, Role::Phase1Data)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values().len(), 250);
        assert_eq!(a.subgroups().count(), 50);
    }

    #[test]
    fn localized_count_is_exact() {
        let m = OutlierModel::new(ModelKind::Localized, 2.0).unwrap();
        for r in 0..200 {
            let d = sample_phase1(&m, 10, 4, &mut substream(8, r, Role::Phase1Data)).unwrap();
            assert_eq!(d.contaminated_subgroups(), 2);
        }
        for (k, expect) in [(50, 10), (7, 1), (13, 3)] {
            let d = sample_phase1(&m, k, 3, &mut substream(8, 0, Role::Phase1Data)).unwrap();
            assert_eq!(d.contaminated_subgroups(), expect);
        }
    }

    #[test]
    fn severity_one_matches_clean_moments() {
        for kind in [ModelKind::DiffuseSymmetric, ModelKind::Localized] {
            let m = OutlierModel::new(kind, 1.0).unwrap();
            let mut sum2 = 0.0;
            let mut count = 0usize;
            for r in 0..2000 {
                let d = sample_phase1(&m, 10, 10, &mut substream(3, r, Role::Phase1Data)).unwrap();
                sum2 += d.values().iter().map(|x| x * x).sum::<f64>();
                count += d.values().len();
            }
            assert!((sum2 / count as f64 - 1.0).abs() < 0.015);
        }
    }

    #[test]
    fn diffuse_symmetric_mixture_variance() {
        let m = OutlierModel::new(ModelKind::DiffuseSymmetric, 4.0).unwrap();
        let (mut s1, mut s2, mut hits, mut count) = (0.0, 0.0, 0usize, 0usize);
        for r in 0..4000 {
            let d = sample_phase1(&m, 50, 5, &mut substream(21, r, Role::Phase1Data)).unwrap();
            s1 += d.values().iter().sum::<f64>();
            s2 += d.values().iter().map(|x| x * x).sum::<f64>();
            hits += d.contaminated_mask().iter().filter(|&&c| c).count();
            count += d.values().len();
        }
        let n = count as f64;
        let var = (s2 - s1 * s1 / n) / (n - 1.0);
        assert!((var - 4.0).abs() < 0.02, "variance {var}");
        let freq = hits as f64 / n;
        let bound = 3.0 * (0.2 * 0.8 / n).sqrt();
        assert!((freq - 0.2).abs() < bound, "frequency {freq}");
    }

    #[test]
    fn diffuse_asymmetric_contamination_frequency() {
        let m = OutlierModel::new(ModelKind::DiffuseAsymmetric, 3.0).unwrap();
        let (mut hits, mut count, mut out_sum) = (0usize, 0usize, 0.0);
        for r in 0..2000 {
            let d = sample_phase1(&m, 50, 5, &mut substream(22, r, Role::Phase1Data)).unwrap();
            for (x, &c) in d.values().iter().zip(d.contaminated_mask()) {
                if c {
                    hits += 1;
                    out_sum += x;
                    assert!(*x >= 0.0);
                }
            }
            count += d.values().len();
        }
        let freq = hits as f64 / count as f64;
        assert!((freq - 0.2).abs() < 3.0 * (0.16 / count as f64).sqrt());
        // uncentered chi2_3 has mean 3
        assert!((out_sum / hits as f64 - 3.0).abs() < 0.05);
    }

    #[test]
    fn from_rows_rejects_ragged() {
        assert!(Phase1Data::from_rows(vec![vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(Phase1Data::from_rows(vec![vec![1.0, 2.0]]).is_err());
        let d = Phase1Data::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(d.subgroup(1), &[3.0, 4.0]);
    }
}
