//! Ordering checks reported by `spc reproduce`.

use std::fmt::Write as _;

use crate::contamination::ModelKind;
use crate::simulation::StudyResult;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// `None` when the study grid lacks the cells the check needs.
    pub pass: Option<bool>,
    pub detail: String,
}

impl Check {
    fn new(name: &str, outcome: Option<(bool, String)>) -> Check {
        match outcome {
            Some((pass, detail)) => Check { name: name.into(), pass: Some(pass), detail },
            None => Check { name: name.into(), pass: None, detail: "cells not in grid".into() },
        }
    }

    pub fn status(&self) -> &'static str {
        match self.pass {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        }
    }
}

const SCALES: [&str; 4] = ["sd", "mad", "qn", "mslog"];
const ROBUST_LOCATIONS: [&str; 3] = ["huber", "hd", "hl"];

fn a_grid(result: &StudyResult, model: ModelKind) -> Vec<f64> {
    let mut a: Vec<f64> = vec![];
    for r in result.rows.iter().filter(|r| r.model == model) {
        if !a.contains(&r.a) {
            a.push(r.a);
        }
    }
    a.sort_by(f64::total_cmp);
    a
}

fn max_a(result: &StudyResult, model: ModelKind) -> Option<f64> {
    a_grid(result, model).last().copied()
}

fn arl(r: &StudyResult, model: ModelKind, a: f64, scale: &str, loc: &str, phi: f64) -> Option<f64> {
    r.value(model, a, scale, loc, Some(phi))
}

fn decreasing_conventional(r: &StudyResult, model: ModelKind, drop: Option<f64>) -> Option<(bool, String)> {
    let grid = a_grid(r, model);
    if grid.len() < 2 {
        return None;
    }
    let v: Vec<f64> = grid.iter().map(|&a| arl(r, model, a, "sd", "mean", 1.0)).collect::<Option<_>>()?;
    let mut pass = v.windows(2).all(|w| w[1] < w[0]);
    if let Some(frac) = drop {
        pass &= *v.last()? <= (1.0 - frac) * v[0];
    }
    let shown: Vec<String> = v.iter().map(|x| format!("{x:.1}")).collect();
    Some((pass, format!("(sd, mean) ARL0 over a: {}", shown.join(" > "))))
}

fn smallest_scale(r: &StudyResult, model: ModelKind, a: f64, loc: &str, phi: f64, want: &str) -> Option<(bool, f64)> {
    let vals: Vec<(&str, f64)> =
        SCALES.iter().map(|s| arl(r, model, a, s, loc, phi).map(|v| (*s, v))).collect::<Option<_>>()?;
    let best = vals.iter().copied().min_by(|x, y| x.1.total_cmp(&y.1))?;
    Some((best.0 == want, best.1))
}

fn largest_scale(r: &StudyResult, model: ModelKind, a: f64, loc: &str, phi: f64, want: &str) -> Option<bool> {
    let vals: Vec<(&str, f64)> =
        SCALES.iter().map(|s| arl(r, model, a, s, loc, phi).map(|v| (*s, v))).collect::<Option<_>>()?;
    Some(vals.iter().copied().max_by(|x, y| x.1.total_cmp(&y.1))?.0 == want)
}

/// Ordering checks on whatever studies were run.
pub fn ordering_checks(mse: Option<&StudyResult>, arl_result: Option<&StudyResult>, target: f64) -> Vec<Check> {
    use ModelKind::*;
    let mut checks = vec![];
    if let Some(r) = mse {
        checks.push(Check::new(
            "mse m1: sd > qn > mad at largest a (mean location), sd/mad >= 2",
            max_a(r, DiffuseSymmetric).and_then(|a| {
                let g = |s| r.value(DiffuseSymmetric, a, s, "mean", None);
                let (sd, qn, mad) = (g("sd")?, g("qn")?, g("mad")?);
                Some((sd > qn && qn > mad && sd >= 2.0 * mad, format!("a={a}: sd {sd:.4}, qn {qn:.4}, mad {mad:.4}")))
            }),
        ));
        checks.push(Check::new(
            "mse clean: sd has the smallest mse (mean location)",
            (|| {
                let v: Vec<f64> =
                    SCALES.iter().map(|s| r.value(DiffuseSymmetric, 1.0, s, "mean", None)).collect::<Option<_>>()?;
                Some((v.iter().skip(1).all(|x| *x > v[0]), format!("sd {:.5}", v[0])))
            })(),
        ));
    }
    if let Some(r) = arl_result {
        checks.push(Check::new(
            "arl clean: every pair within 2% of target",
            (|| {
                let rows: Vec<_> = r.rows.iter().filter(|x| x.a == 1.0 && x.phi == Some(1.0)).collect();
                if rows.is_empty() {
                    return None;
                }
                let worst = rows.iter().map(|x| (x.value / target - 1.0).abs()).fold(0.0, f64::max);
                Some((worst <= 0.02, format!("largest relative deviation {:.2}%", 100.0 * worst)))
            })(),
        ));
        checks.push(Check::new("arl m1: conventional ARL0 decreasing in a", decreasing_conventional(r, DiffuseSymmetric, None)));
        checks.push(Check::new(
            "arl m1: conventional ARL0 below 40% of target at largest a",
            max_a(r, DiffuseSymmetric).and_then(|a| {
                let v = arl(r, DiffuseSymmetric, a, "sd", "mean", 1.0)?;
                Some((v < 0.4 * target, format!("a={a}: {v:.1}")))
            }),
        ));
        checks.push(Check::new(
            "arl m1: (mslog, hd) beats (sd, mean) at phi = 1.4, largest a",
            max_a(r, DiffuseSymmetric).and_then(|a| {
                let robust = arl(r, DiffuseSymmetric, a, "mslog", "hd", 1.4)?;
                let conv = arl(r, DiffuseSymmetric, a, "sd", "mean", 1.4)?;
                Some((robust < conv, format!("a={a}: {robust:.1} vs {conv:.1}")))
            }),
        ));
        checks.push(Check::new(
            "arl m2: qn keeps ARL0 >= 90% of target, (sd, mean) <= 20% at a = 4",
            (|| {
                let conv = arl(r, DiffuseAsymmetric, 4.0, "sd", "mean", 1.0)?;
                let qn: Vec<f64> = ROBUST_LOCATIONS
                    .iter()
                    .map(|l| arl(r, DiffuseAsymmetric, 4.0, "qn", l, 1.0))
                    .collect::<Option<_>>()?;
                let low = qn.iter().copied().fold(f64::INFINITY, f64::min);
                Some((low >= 0.9 * target && conv <= 0.2 * target, format!("qn min {low:.1}, (sd, mean) {conv:.1}")))
            })(),
        ));
        checks.push(Check::new(
            "arl m2: qn has the smallest phi = 1.4 ARL for robust locations, a = 4",
            (|| {
                let mut all = true;
                for l in ROBUST_LOCATIONS {
                    all &= smallest_scale(r, DiffuseAsymmetric, 4.0, l, 1.4, "qn")?.0;
                }
                Some((all, String::new()))
            })(),
        ));
        checks.push(Check::new(
            "arl m3: with hd, sd has the highest ARL0 and smallest phi = 1.4 ARL at largest a",
            max_a(r, Localized).and_then(|a| {
                let hi = largest_scale(r, Localized, a, "hd", 1.0, "sd")?;
                let (lo, v) = smallest_scale(r, Localized, a, "hd", 1.4, "sd")?;
                Some((hi && lo, format!("a={a}: (sd, hd) phi = 1.4 ARL {v:.1}")))
            }),
        ));
        checks.push(Check::new(
            "arl m3: conventional ARL0 decreasing in a by at least 60%",
            decreasing_conventional(r, Localized, Some(0.6)),
        ));
    }
    checks
}

pub fn render(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        let _ = write!(s, "{}  {}", c.status(), c.name);
        if !c.detail.is_empty() {
            let _ = write!(s, "  [{}]", c.detail);
        }
        s.push('\n');
    }
    s
}
