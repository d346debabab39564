//! Monte Carlo studies over (outlier model, severity, estimator pair).
//!
//! Each distinct Phase I cell is simulated once: every replicate draws one
//! contaminated dataset and evaluates `sigma_hat` for all estimator pairs.
//! The MSE study uses the first `mse_replicates` of those, the ARL study the
//! first `arl_replicates`. Any severity `a = 1` maps to the clean cell.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::calibration_store::{CalibrationKey, CalibrationStore};
use crate::chart::{
    calibrate_alpha_from_ratios, calibration_seed, mean_and_se, phase1_cell_seed, phase1_sigma_hats, ArlEstimate,
    LimitFactors, LimitScheme, DEFAULT_TARGET_ARL0, MAX_EXCLUDED_FRACTION,
};
use crate::contamination::{sample_phase1, ModelKind, OutlierModel};
use crate::error::{Error, Result};
use crate::estimators::{correction_factor, LocationEstimatorSpec, LocationKind, ScaleEstimatorSpec, ScaleKind};
use crate::par::map_ordered;
use crate::rng::{substream, Role};

pub const DEFAULT_MSE_REPLICATES: usize = 50_000;
pub const DEFAULT_ARL_REPLICATES: usize = 10_000;
pub const DEFAULT_CALIBRATION_REPLICATES: usize = 20_000;
pub const DEFAULT_CORRECTION_REPLICATES: usize = 1_000_000;
pub const DEFAULT_N: usize = 5;
pub const DEFAULT_K: usize = 50;
pub const DEFAULT_PHI: [f64; 2] = [1.0, 1.4];
pub const MIN_REPLICATES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StudyKind {
    Mse,
    Arl,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Mse => "mse",
            StudyKind::Arl => "arl",
        }
    }
}

/// One outlier model with its severity grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrid {
    pub kind: ModelKind,
    pub a_values: Vec<f64>,
}

impl ModelGrid {
    /// `1:0.5:4` for Models 1 and 3; `1,2,3,4` for Model 2 (`a = 1` is the
    /// clean baseline).
    pub fn default_for(kind: ModelKind) -> Self {
        let a_values = match kind {
            ModelKind::Clean => vec![1.0],
            ModelKind::DiffuseAsymmetric => vec![1.0, 2.0, 3.0, 4.0],
            _ => (0..7).map(|i| 1.0 + 0.5 * i as f64).collect(),
        };
        ModelGrid { kind, a_values }
    }

    pub fn models(&self) -> Vec<OutlierModel> {
        self.a_values.iter().map(|&a| cell_model(self.kind, a)).collect()
    }
}

/// The data-generating model behind a grid point; `a = 1` is clean.
pub fn cell_model(kind: ModelKind, a: f64) -> OutlierModel {
    if a == 1.0 || kind == ModelKind::Clean {
        OutlierModel::CLEAN
    } else {
        OutlierModel { kind, a }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub models: Vec<ModelGrid>,
    /// Uncorrected scale estimators; corrections are calibrated for `n`.
    pub scales: Vec<ScaleEstimatorSpec>,
    pub locations: Vec<LocationEstimatorSpec>,
    pub phi_values: Vec<f64>,
    pub n: usize,
    pub k: usize,
    pub mse_replicates: usize,
    pub arl_replicates: usize,
    pub calibration_replicates: usize,
    pub correction_replicates: usize,
    pub target_arl0: f64,
    pub limit_scheme: LimitScheme,
    pub seed: u64,
}

impl Default for StudySpec {
    fn default() -> Self {
        StudySpec {
            models: [ModelKind::DiffuseSymmetric, ModelKind::DiffuseAsymmetric, ModelKind::Localized]
                .into_iter()
                .map(ModelGrid::default_for)
                .collect(),
            scales: ScaleKind::ALL.into_iter().map(ScaleEstimatorSpec::new).collect(),
            locations: LocationKind::ALL.into_iter().map(LocationEstimatorSpec::new).collect(),
            phi_values: DEFAULT_PHI.to_vec(),
            n: DEFAULT_N,
            k: DEFAULT_K,
            mse_replicates: DEFAULT_MSE_REPLICATES,
            arl_replicates: DEFAULT_ARL_REPLICATES,
            calibration_replicates: DEFAULT_CALIBRATION_REPLICATES,
            correction_replicates: DEFAULT_CORRECTION_REPLICATES,
            target_arl0: DEFAULT_TARGET_ARL0,
            limit_scheme: LimitScheme::default(),
            seed: 42,
        }
    }
}

impl StudySpec {
    /// Every violated constraint, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut p = vec![];
        if self.n < 2 {
            p.push(format!("n = {} must be >= 2", self.n));
        }
        if self.k < 2 {
            p.push(format!("k = {} must be >= 2", self.k));
        }
        if self.models.is_empty() || self.models.iter().any(|m| m.a_values.is_empty()) {
            p.push("model grid is empty".into());
        }
        for grid in &self.models {
            for &a in &grid.a_values {
                if let Err(e) = cell_model(grid.kind, a).validate() {
                    p.push(e.to_string());
                }
                if grid.kind == ModelKind::DiffuseAsymmetric && a.fract() != 0.0 {
                    p.push(format!("m2: severity a = {a} must be an integer"));
                }
            }
        }
        if self.scales.is_empty() {
            p.push("no scale estimators selected".into());
        }
        if self.locations.is_empty() {
            p.push("no location estimators selected".into());
        }
        if self.phi_values.is_empty() {
            p.push("no phi values selected".into());
        }
        for &phi in &self.phi_values {
            if !(phi > 0.0) || !phi.is_finite() {
                p.push(format!("phi = {phi} must be positive"));
            }
        }
        for (name, v) in [
            ("mse replicates", self.mse_replicates),
            ("arl replicates", self.arl_replicates),
            ("calibration replicates", self.calibration_replicates),
            ("correction replicates", self.correction_replicates),
        ] {
            if v < MIN_REPLICATES {
                p.push(format!("{name} = {v} must be >= {MIN_REPLICATES}"));
            }
        }
        if !(self.target_arl0 > 1.0) {
            p.push(format!("target ARL0 {} must exceed 1", self.target_arl0));
        }
        p.dedup();
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Usage(p))
        }
    }

    pub fn combos(&self) -> usize {
        self.scales.len() * self.locations.len()
    }

    /// Distinct data-generating cells, in first-appearance order.
    fn cells(&self) -> Vec<OutlierModel> {
        let mut cells: Vec<OutlierModel> = vec![];
        for grid in &self.models {
            for m in grid.models() {
                if !cells.contains(&m) {
                    cells.push(m);
                }
            }
        }
        cells
    }
}

/// Corrections and calibrated alphas for every estimator pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedGrid {
    /// `spec.scales` with calibrated corrections.
    pub scales: Vec<ScaleEstimatorSpec>,
    /// Scale-major, one per (scale, location).
    pub alpha_star: Vec<f64>,
    pub record_keys: Vec<String>,
}

impl CalibratedGrid {
    pub fn alpha(&self, spec: &StudySpec, scale: usize, location: usize) -> f64 {
        self.alpha_star[scale * spec.locations.len() + location]
    }
}

/// Calibrate correction factors (always) and alphas (if `with_alpha`),
/// reusing anything already in `store`.
pub fn calibrate_grid(spec: &StudySpec, store: &CalibrationStore, with_alpha: bool) -> Result<CalibratedGrid> {
    spec.validate()?;
    let mut record_keys = vec![];
    let mut scales = Vec::with_capacity(spec.scales.len());
    for s in &spec.scales {
        let key = CalibrationKey::correction(s, spec.n, spec.correction_replicates, spec.seed);
        let rec = store.get_or_calibrate(&key, || correction_factor(s, spec.n, spec.correction_replicates, spec.seed))?;
        record_keys.push(key.id());
        scales.push(s.with_correction(rec.value));
    }
    if !with_alpha {
        return Ok(CalibratedGrid { scales, alpha_star: vec![], record_keys });
    }
    let keys: Vec<CalibrationKey> = scales
        .iter()
        .flat_map(|s| {
            spec.locations.iter().map(move |l| {
                CalibrationKey::alpha_star(
                    s,
                    l,
                    spec.n,
                    spec.k,
                    spec.target_arl0,
                    spec.limit_scheme,
                    spec.calibration_replicates,
                    spec.seed,
                )
            })
        })
        .collect();
    let ratios = if keys.iter().all(|k| store.get(k).is_some()) {
        None
    } else {
        let cal_seed = calibration_seed(spec.seed, spec.n, spec.k);
        Some(sigma_hat_grid(spec, &scales, &OutlierModel::CLEAN, cal_seed, Role::Calibration, spec.calibration_replicates)?)
    };
    let mut alpha_star = Vec::with_capacity(keys.len());
    for (c, key) in keys.iter().enumerate() {
        let rec = store.get_or_calibrate(key, || {
            let grid = ratios.as_ref().expect("computed when any key is missing");
            let column = grid.column(c);
            Ok(calibrate_alpha_from_ratios(&column, spec.n, spec.target_arl0, spec.limit_scheme)?
                .alpha_star
                .get())
        })?;
        record_keys.push(key.id());
        alpha_star.push(rec.value);
    }
    Ok(CalibratedGrid { scales, alpha_star, record_keys })
}

/// `sigma_hat` for every replicate (rows) and estimator pair (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaHatGrid {
    pub replicates: usize,
    pub combos: usize,
    values: Vec<f64>,
}

impl SigmaHatGrid {
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.values.chunks_exact(self.combos).map(|row| row[c]).collect()
    }

    pub fn column_prefix(&self, c: usize, len: usize) -> Vec<f64> {
        self.values.chunks_exact(self.combos).take(len).map(|row| row[c]).collect()
    }
}

fn sigma_hat_grid(
    spec: &StudySpec,
    scales: &[ScaleEstimatorSpec],
    model: &OutlierModel,
    stream_seed: u64,
    role: Role,
    replicates: usize,
) -> Result<SigmaHatGrid> {
    let rows: Vec<Result<Vec<f64>>> = map_ordered(replicates, |r| {
        let mut stream = substream(stream_seed, r as u64, role);
        let data = sample_phase1(model, spec.k, spec.n, &mut stream)?;
        Ok(phase1_sigma_hats(&data, scales, &spec.locations))
    });
    let combos = scales.len() * spec.locations.len();
    let mut values = Vec::with_capacity(replicates * combos);
    for row in rows {
        values.extend(row?);
    }
    Ok(SigmaHatGrid { replicates, combos, values })
}

/// Phase I `sigma_hat` grid for one study cell.
pub fn cell_sigma_hats(
    spec: &StudySpec,
    scales: &[ScaleEstimatorSpec],
    model: &OutlierModel,
    replicates: usize,
) -> Result<SigmaHatGrid> {
    let seed = phase1_cell_seed(spec.seed, model, spec.n, spec.k);
    sigma_hat_grid(spec, scales, model, seed, Role::Phase1Data, replicates)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub model: ModelKind,
    pub a: f64,
    pub scale: String,
    pub location: String,
    pub phi: Option<f64>,
    pub value: f64,
    pub std_error: f64,
    pub excluded: usize,
    pub replicates: usize,
    pub invalid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub kind: StudyKind,
    /// Resolved configuration and calibration constants, in output order.
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<StudyRow>,
}

impl StudyResult {
    pub fn find(&self, model: ModelKind, a: f64, scale: &str, location: &str, phi: Option<f64>) -> Option<&StudyRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.a == a && r.scale == scale && r.location == location && r.phi == phi)
    }

    pub fn value(&self, model: ModelKind, a: f64, scale: &str, location: &str, phi: Option<f64>) -> Option<f64> {
        self.find(model, a, scale, location, phi).map(|r| r.value)
    }

    pub fn header(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "# {k} = {v}");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header();
        s.push_str("model,a,scale,location,phi,metric,value,std_error,excluded,replicates,invalid\n");
        for r in &self.rows {
            let phi = r.phi.map(|p| p.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.model.name(),
                r.a,
                r.scale,
                r.location,
                phi,
                self.kind.name(),
                r.value,
                r.std_error,
                r.excluded,
                r.replicates,
                r.invalid
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    }
}

fn metadata(spec: &StudySpec, kind: StudyKind, cal: &CalibratedGrid) -> Vec<(String, String)> {
    let mut m = vec![
        ("tool".to_string(), format!("robust-spc {}", crate::calibration_store::SOFTWARE_VERSION)),
        ("study".into(), kind.name().into()),
        ("n".into(), spec.n.to_string()),
        ("k".into(), spec.k.to_string()),
        ("seed".into(), spec.seed.to_string()),
    ];
    match kind {
        StudyKind::Mse => m.push(("replicates".into(), spec.mse_replicates.to_string())),
        StudyKind::Arl => {
            m.push(("replicates".into(), spec.arl_replicates.to_string()));
            m.push(("calibration_replicates".into(), spec.calibration_replicates.to_string()));
            m.push(("target_arl0".into(), spec.target_arl0.to_string()));
            m.push(("limits".into(), spec.limit_scheme.name().into()));
            let phis: Vec<String> = spec.phi_values.iter().map(f64::to_string).collect();
            m.push(("phi".into(), phis.join(" ")));
        }
    }
    m.push(("correction_replicates".into(), spec.correction_replicates.to_string()));
    for grid in &spec.models {
        let a: Vec<String> = grid.a_values.iter().map(f64::to_string).collect();
        m.push((format!("grid.{}", grid.kind.name()), a.join(" ")));
    }
    for s in &cal.scales {
        m.push((format!("correction.{}", s.name()), s.correction.to_string()));
    }
    if kind == StudyKind::Arl {
        for (i, s) in cal.scales.iter().enumerate() {
            for (j, l) in spec.locations.iter().enumerate() {
                m.push((format!("alpha_star.{}.{}", s.name(), l.name()), cal.alpha(spec, i, j).to_string()));
            }
        }
    }
    for (i, key) in cal.record_keys.iter().enumerate() {
        m.push((format!("calibration_key.{i}"), key.clone()));
    }
    m
}

fn mse_row(sigmas: &[f64]) -> (f64, f64, usize) {
    let sq: Vec<f64> = sigmas
        .iter()
        .filter(|s| **s > 0.0 && s.is_finite())
        .map(|s| (s - 1.0) * (s - 1.0))
        .collect();
    let (mse, se) = mean_and_se(&sq);
    (mse, se, sigmas.len() - sq.len())
}

/// Run the requested studies, sharing Phase I replicates between them.
pub fn run_studies(spec: &StudySpec, store: &CalibrationStore, kinds: &[StudyKind]) -> Result<Vec<StudyResult>> {
    spec.validate()?;
    if kinds.is_empty() {
        return Err(Error::Usage(vec!["no study selected".into()]));
    }
    let want_mse = kinds.contains(&StudyKind::Mse);
    let want_arl = kinds.contains(&StudyKind::Arl);
    let cal = calibrate_grid(spec, store, want_arl)?;
    let replicates = match (want_mse, want_arl) {
        (true, true) => spec.mse_replicates.max(spec.arl_replicates),
        (true, false) => spec.mse_replicates,
        _ => spec.arl_replicates,
    };
    let factors: Vec<LimitFactors> = if want_arl {
        cal.alpha_star
            .iter()
            .map(|&a| LimitFactors::new(spec.n, a, spec.limit_scheme))
            .collect::<Result<_>>()?
    } else {
        vec![]
    };

    let cells = spec.cells();
    let mut grids = Vec::with_capacity(cells.len());
    for cell in &cells {
        grids.push(cell_sigma_hats(spec, &cal.scales, cell, replicates)?);
    }
    let grid_of = |kind: ModelKind, a: f64| -> &SigmaHatGrid {
        let m = cell_model(kind, a);
        &grids[cells.iter().position(|c| *c == m).expect("cell listed")]
    };

    let mut mse_rows = vec![];
    let mut arl_rows = vec![];
    for grid in &spec.models {
        for &a in &grid.a_values {
            let g = grid_of(grid.kind, a);
            for (i, s) in cal.scales.iter().enumerate() {
                for (j, l) in spec.locations.iter().enumerate() {
                    let c = i * spec.locations.len() + j;
                    let row = |phi, value, std_error, excluded, replicates: usize| StudyRow {
                        model: grid.kind,
                        a,
                        scale: s.name().to_string(),
                        location: l.name().to_string(),
                        phi,
                        value,
                        std_error,
                        excluded,
                        replicates,
                        invalid: excluded as f64 > MAX_EXCLUDED_FRACTION * replicates as f64,
                    };
                    if want_mse {
                        let (mse, se, excluded) = mse_row(&g.column_prefix(c, spec.mse_replicates));
                        mse_rows.push(row(None, mse, se, excluded, spec.mse_replicates));
                    }
                    if want_arl {
                        let ratios = g.column_prefix(c, spec.arl_replicates);
                        for &phi in &spec.phi_values {
                            let est = ArlEstimate::from_ratios(&ratios, &factors[c], phi);
                            arl_rows.push(row(Some(phi), est.arl, est.std_error, est.excluded, spec.arl_replicates));
                        }
                    }
                }
            }
        }
    }
    let mut out = vec![];
    for &kind in kinds {
        let rows = match kind {
            StudyKind::Mse => mse_rows.clone(),
            StudyKind::Arl => arl_rows.clone(),
        };
        out.push(StudyResult { kind, metadata: metadata(spec, kind, &cal), rows });
    }
    Ok(out)
}

pub fn run_mse_study(spec: &StudySpec, store: &CalibrationStore) -> Result<StudyResult> {
    Ok(run_studies(spec, store, &[StudyKind::Mse])?.remove(0))
}

pub fn run_arl_study(spec: &StudySpec, store: &CalibrationStore) -> Result<StudyResult> {
    Ok(run_studies(spec, store, &[StudyKind::Arl])?.remove(0))
}

/// A plot-ready dataset: one model, one metric, and for ARL one phi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotDataset {
    pub study: StudyKind,
    pub model: ModelKind,
    pub phi: Option<f64>,
}

impl PlotDataset {
    /// MSE for Models 1-3, then ARL at phi = 1 and 1.4 for each model.
    pub fn standard() -> Vec<PlotDataset> {
        let models = [ModelKind::DiffuseSymmetric, ModelKind::DiffuseAsymmetric, ModelKind::Localized];
        let mut v: Vec<PlotDataset> =
            models.iter().map(|&model| PlotDataset { study: StudyKind::Mse, model, phi: None }).collect();
        for &model in &models {
            for phi in DEFAULT_PHI {
                v.push(PlotDataset { study: StudyKind::Arl, model, phi: Some(phi) });
            }
        }
        v
    }

    pub fn stem(&self) -> String {
        match self.phi {
            Some(phi) => format!("{}_{}_phi{phi:.1}", self.study.name(), self.model.name()),
            None => format!("{}_{}", self.study.name(), self.model.name()),
        }
    }
}

/// Write one file per location estimator: an `a` column followed by a value
/// and standard-error column per scale estimator.
pub fn emit_figure_data(result: &StudyResult, dataset: &PlotDataset, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if result.kind != dataset.study {
        return Err(Error::invalid(format!("{} result cannot produce {} plot data", result.kind.name(), dataset.stem())));
    }
    let rows: Vec<&StudyRow> =
        result.rows.iter().filter(|r| r.model == dataset.model && r.phi == dataset.phi).collect();
    if rows.is_empty() {
        return Err(Error::invalid(format!("no study cells for plot dataset {}", dataset.stem())));
    }
    let mut a_values: Vec<f64> = vec![];
    let mut scales: Vec<&str> = vec![];
    let mut locations: Vec<&str> = vec![];
    for r in &rows {
        if !a_values.contains(&r.a) {
            a_values.push(r.a);
        }
        if !scales.contains(&r.scale.as_str()) {
            scales.push(&r.scale);
        }
        if !locations.contains(&r.location.as_str()) {
            locations.push(&r.location);
        }
    }
    a_values.sort_by(f64::total_cmp);
    fs::create_dir_all(out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    let metric = match dataset.study {
        StudyKind::Mse => "mse of sigma_hat (true sigma = 1)",
        StudyKind::Arl => "unconditional arl (subgroups)",
    };
    let mut paths = vec![];
    for loc in locations {
        let mut s = String::new();
        let _ = writeln!(s, "# dataset = {}", dataset.stem());
        let _ = writeln!(s, "# metric = {metric}");
        let _ = writeln!(s, "# location = {loc}");
        let _ = writeln!(s, "# x = severity a");
        for (k, v) in &result.metadata {
            if !k.starts_with("calibration_key") && !k.starts_with("alpha_star") {
                let _ = writeln!(s, "# {k} = {v}");
            }
        }
        s.push('a');
        for sc in &scales {
            let _ = write!(s, ",{sc},{sc}_se");
        }
        s.push('\n');
        for &a in &a_values {
            let _ = write!(s, "{a}");
            for sc in &scales {
                let r = rows.iter().find(|r| r.a == a && r.scale == *sc && r.location == loc).ok_or_else(|| {
                    Error::invalid(format!("missing cell {} a={a} {sc}/{loc}", dataset.stem()))
                })?;
                let _ = write!(s, ",{},{}", r.value, r.std_error);
            }
            s.push('\n');
        }
        let path = out_dir.join(format!("{}_loc-{loc}.csv", dataset.stem()));
        fs::write(&path, s).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        paths.push(path);
    }
    Ok(paths)
}
