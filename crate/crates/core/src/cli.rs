//! `spc` command line: argument and config-file resolution plus the five
//! subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::calibration_store::{resolve_cache_dir, CalibrationStore};
use crate::chart::{limits_for_alpha, ControlLimits, LimitScheme};
use crate::contamination::{ModelKind, Phase1Data};
use crate::error::{Error, Result};
use crate::estimators::{sample_sd, LocationEstimatorSpec, LocationKind, QnVariant, ScaleEstimatorSpec, ScaleKind};
use crate::simulation::{
    calibrate_grid, emit_figure_data, run_studies, ModelGrid, PlotDataset, StudyKind, StudyResult, StudySpec,
};
use crate::summary::{ordering_checks, render};

pub const DEFAULT_OUT_DIR: &str = "spc-out";

#[derive(Debug, Parser)]
#[command(name = "spc", version, about = "S-charts with robust Phase I scale estimates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate correction factors and false-alarm probabilities into the cache.
    Calibrate(Options),
    /// Phase I MSE study.
    Mse(Options),
    /// Phase II ARL study.
    Arl(Options),
    /// Build a chart from a Phase I CSV and optionally monitor a Phase II CSV.
    Chart(Options),
    /// Full default MSE and ARL grids, plot data, and the ordering summary.
    Reproduce(Options),
}

impl Command {
    fn options(&self) -> &Options {
        match self {
            Command::Calibrate(o) | Command::Mse(o) | Command::Arl(o) | Command::Chart(o) | Command::Reproduce(o) => o,
        }
    }

    fn kind(&self) -> CommandKind {
        match self {
            Command::Calibrate(_) => CommandKind::Calibrate,
            Command::Mse(_) => CommandKind::Mse,
            Command::Arl(_) => CommandKind::Arl,
            Command::Chart(_) => CommandKind::Chart,
            Command::Reproduce(_) => CommandKind::Reproduce,
        }
    }
}

/// Every option is kept as raw text so that config-file values and flags go
/// through the same parser and all problems are reported together.
#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Subgroup size.
    #[arg(long)]
    pub n: Option<String>,
    /// Number of Phase I subgroups.
    #[arg(long)]
    pub k: Option<String>,
    /// Scale estimators: comma list of sd, mad, qn, qn-rc, mslog, or `all`.
    #[arg(long)]
    pub scale: Option<String>,
    /// Location estimators: comma list of mean, huber, hd, hl, or `all`.
    #[arg(long)]
    pub loc: Option<String>,
    /// Qn variant: `mp` (median of pairwise distances) or `rc` (order statistic).
    #[arg(long = "qn-variant")]
    pub qn_variant: Option<String>,
    /// Outlier models: comma list of m1, m2, m3.
    #[arg(long)]
    pub model: Option<String>,
    /// Severity grid: `start:step:end` or a comma list.
    #[arg(long)]
    pub a: Option<String>,
    /// Phase II disturbance multipliers, comma list.
    #[arg(long)]
    pub phi: Option<String>,
    /// Monte Carlo replicates for the MSE and ARL studies.
    #[arg(long)]
    pub replicates: Option<String>,
    /// MSE study replicates (default 50000)
    #[arg(long = "mse-replicates")]
    pub mse_replicates: Option<String>,
    /// ARL study replicates (default 10000)
    #[arg(long = "arl-replicates")]
    pub arl_replicates: Option<String>,
    /// Clean Phase I replicates for alpha calibration (default 20000)
    #[arg(long = "calibration-replicates")]
    pub calibration_replicates: Option<String>,
    /// Replicates for scale correction factors (default 1000000)
    #[arg(long = "correction-replicates")]
    pub correction_replicates: Option<String>,
    /// In-control ARL target.
    #[arg(long = "target-arl0")]
    pub target_arl0: Option<String>,
    /// Limit scheme: arl-unbiased (default) or equal-tailed.
    #[arg(long)]
    pub limits: Option<String>,
    /// Root random seed (default 42)
    #[arg(long)]
    pub seed: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    /// Calibration cache directory (default: $SPC_CACHE_DIR or ./.spc-cache).
    #[arg(long = "cache-dir")]
    pub cache_dir: Option<String>,
    /// Phase I subgroups, one row per subgroup (chart only).
    #[arg(long)]
    pub phase1: Option<String>,
    /// Phase II subgroups to monitor (chart only).
    #[arg(long)]
    pub phase2: Option<String>,
    /// Flat `key = value` file using the long flag names; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

const KEYS: [&str; 21] = [
    "n",
    "k",
    "scale",
    "loc",
    "qn-variant",
    "model",
    "a",
    "phi",
    "replicates",
    "mse-replicates",
    "arl-replicates",
    "calibration-replicates",
    "correction-replicates",
    "target-arl0",
    "limits",
    "seed",
    "threads",
    "out",
    "cache-dir",
    "phase1",
    "phase2",
];

impl Options {
    fn flag_values(&self) -> Vec<(&'static str, Option<&String>)> {
        vec![
            ("n", self.n.as_ref()),
            ("k", self.k.as_ref()),
            ("scale", self.scale.as_ref()),
            ("loc", self.loc.as_ref()),
            ("qn-variant", self.qn_variant.as_ref()),
            ("model", self.model.as_ref()),
            ("a", self.a.as_ref()),
            ("phi", self.phi.as_ref()),
            ("replicates", self.replicates.as_ref()),
            ("mse-replicates", self.mse_replicates.as_ref()),
            ("arl-replicates", self.arl_replicates.as_ref()),
            ("calibration-replicates", self.calibration_replicates.as_ref()),
            ("correction-replicates", self.correction_replicates.as_ref()),
            ("target-arl0", self.target_arl0.as_ref()),
            ("limits", self.limits.as_ref()),
            ("seed", self.seed.as_ref()),
            ("threads", self.threads.as_ref()),
            ("out", self.out.as_ref()),
            ("cache-dir", self.cache_dir.as_ref()),
            ("phase1", self.phase1.as_ref()),
            ("phase2", self.phase2.as_ref()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Calibrate,
    Mse,
    Arl,
    Chart,
    Reproduce,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Calibrate => "calibrate",
            CommandKind::Mse => "mse",
            CommandKind::Arl => "arl",
            CommandKind::Chart => "chart",
            CommandKind::Reproduce => "reproduce",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: CommandKind,
    pub spec: StudySpec,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub cache_dir: PathBuf,
    pub phase1: Option<PathBuf>,
    pub phase2: Option<PathBuf>,
    /// `n` was set explicitly (chart checks it against the file).
    pub n_explicit: bool,
    /// Resolved settings as given (config file overlaid by flags).
    pub resolved: BTreeMap<String, String>,
}

/// Parse a flat `key = value` config file. `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut problems = vec![];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => {
                let key = k.trim().replace('_', "-");
                if KEYS.contains(&key.as_str()) {
                    map.insert(key, v.trim().to_string());
                } else {
                    problems.push(format!("config line {}: unknown key '{}'", i + 1, k.trim()));
                }
            }
            None => problems.push(format!("config line {}: expected key = value", i + 1)),
        }
    }
    if problems.is_empty() {
        Ok(map)
    } else {
        Err(Error::Usage(problems))
    }
}

/// `start:step:end` (inclusive) or a comma list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::invalid(format!("malformed grid '{text}' (expected start:step:end or a comma list)"));
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let values = match parts.len() {
        1 => parse_list::<f64>(text).map_err(|_| bad())?,
        3 => {
            let nums: Vec<f64> = parts.iter().map(|p| p.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
            let (start, step, end) = (nums[0], nums[1], nums[2]);
            if !(step > 0.0) || !(end >= start) || !start.is_finite() || !end.is_finite() {
                return Err(bad());
            }
            let steps = (end - start) / step;
            let count = steps.round();
            if (steps - count).abs() > 1e-9 * steps.max(1.0) || count > 1e6 {
                return Err(Error::invalid(format!("grid '{text}': step does not divide the range")));
            }
            (0..=count as usize).map(|i| start + i as f64 * step).collect()
        }
        _ => return Err(bad()),
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(values)
}

fn parse_list<T: std::str::FromStr>(text: &str) -> std::result::Result<Vec<T>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| format!("cannot parse '{s}'")))
        .collect()
}

fn parse_qn_variant(s: &str) -> Result<QnVariant> {
    match s.trim().to_ascii_lowercase().as_str() {
        "mp" | "median-of-pairs" | "default" => Ok(QnVariant::MedianOfPairs),
        "rc" | "order-statistic" => Ok(QnVariant::OrderStatistic),
        other => Err(Error::invalid(format!("unknown qn variant '{other}' (expected mp, rc)"))),
    }
}

fn parse_scales(s: &str, variant: Option<QnVariant>) -> Result<Vec<ScaleEstimatorSpec>> {
    let names: Vec<&str> = s.split(',').map(str::trim).filter(|x| !x.is_empty()).collect();
    let mut out = vec![];
    for name in names {
        if name.eq_ignore_ascii_case("all") {
            out.extend(ScaleKind::ALL.into_iter().map(ScaleEstimatorSpec::new));
        } else {
            out.push(name.parse::<ScaleEstimatorSpec>()?);
        }
    }
    if let Some(v) = variant {
        for spec in out.iter_mut().filter(|s| s.kind == ScaleKind::Qn) {
            *spec = spec.with_qn_variant(v);
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("empty scale estimator list"));
    }
    Ok(out)
}

fn parse_locations(s: &str) -> Result<Vec<LocationEstimatorSpec>> {
    let mut out = vec![];
    for name in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        if name.eq_ignore_ascii_case("all") {
            out.extend(LocationKind::ALL.into_iter().map(LocationEstimatorSpec::new));
        } else {
            out.push(LocationEstimatorSpec::new(name.parse::<LocationKind>()?));
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("empty location estimator list"));
    }
    Ok(out)
}

/// Parse argv (including the program name) into a validated configuration.
pub fn parse_and_validate<I, T>(argv: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::Usage(vec![e.to_string().trim().to_string()]))?;
    resolve(&cli.command)
}

fn resolve(command: &Command) -> Result<RunConfig> {
    let opts = command.options();
    let kind = command.kind();
    let mut settings = match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Usage(vec![format!("cannot read config {}: {e}", path.display())]))?;
            parse_config_file(&text)?
        }
        None => BTreeMap::new(),
    };
    for (key, value) in opts.flag_values() {
        if let Some(v) = value {
            settings.insert(key.to_string(), v.clone());
        }
    }

    let mut problems: Vec<String> = vec![];
    let mut spec = StudySpec::default();
    macro_rules! take {
        ($key:expr, $ty:ty) => {
            settings.get($key).and_then(|v| match v.trim().parse::<$ty>() {
                Ok(x) => Some(x),
                Err(_) => {
                    problems.push(format!("--{}: cannot parse '{}'", $key, v));
                    None
                }
            })
        };
    }

    if let Some(n) = take!("n", usize) {
        spec.n = n;
    }
    if let Some(k) = take!("k", usize) {
        spec.k = k;
    }
    if let Some(seed) = take!("seed", u64) {
        spec.seed = seed;
    }
    if let Some(t) = take!("target-arl0", f64) {
        spec.target_arl0 = t;
    }
    if let Some(r) = take!("replicates", usize) {
        spec.mse_replicates = r;
        spec.arl_replicates = r;
    }
    if let Some(r) = take!("mse-replicates", usize) {
        spec.mse_replicates = r;
    }
    if let Some(r) = take!("arl-replicates", usize) {
        spec.arl_replicates = r;
    }
    if let Some(r) = take!("calibration-replicates", usize) {
        spec.calibration_replicates = r;
    }
    if let Some(r) = take!("correction-replicates", usize) {
        spec.correction_replicates = r;
    }
    let threads = take!("threads", usize);
    if threads == Some(0) {
        problems.push("--threads must be >= 1".into());
    }
    if let Some(s) = settings.get("limits") {
        match s.parse::<LimitScheme>() {
            Ok(l) => spec.limit_scheme = l,
            Err(e) => problems.push(e.to_string()),
        }
    }
    let variant = match settings.get("qn-variant").map(|s| parse_qn_variant(s)) {
        Some(Ok(v)) => Some(v),
        Some(Err(e)) => {
            problems.push(e.to_string());
            None
        }
        None => None,
    };
    let chart = kind == CommandKind::Chart;
    let default_scale = if chart { "qn" } else { "all" };
    let default_loc = if chart { "hd" } else { "all" };
    match parse_scales(settings.get("scale").map(String::as_str).unwrap_or(default_scale), variant) {
        Ok(s) => spec.scales = s,
        Err(e) => problems.push(e.to_string()),
    }
    match parse_locations(settings.get("loc").map(String::as_str).unwrap_or(default_loc)) {
        Ok(l) => spec.locations = l,
        Err(e) => problems.push(e.to_string()),
    }
    if chart && (spec.scales.len() != 1 || spec.locations.len() != 1) {
        problems.push("chart needs exactly one --scale and one --loc".into());
    }
    if let Some(p) = settings.get("phi") {
        match parse_list::<f64>(p) {
            Ok(v) => spec.phi_values = v,
            Err(e) => problems.push(format!("--phi: {e}")),
        }
    }
    let a_grid = match settings.get("a").map(|s| parse_grid(s)) {
        Some(Ok(g)) => Some(g),
        Some(Err(e)) => {
            problems.push(format!("--a: {e}"));
            None
        }
        None => None,
    };
    if let Some(m) = settings.get("model") {
        match parse_list::<ModelKind>(m) {
            Ok(kinds) if !kinds.is_empty() => {
                spec.models = kinds
                    .into_iter()
                    .map(|kind| match &a_grid {
                        Some(a) => ModelGrid { kind, a_values: a.clone() },
                        None => ModelGrid::default_for(kind),
                    })
                    .collect();
            }
            Ok(_) => problems.push("--model: empty list".into()),
            Err(_) => problems.push(format!("--model: unknown model in '{m}' (expected m1, m2, m3)")),
        }
    } else if let Some(a) = &a_grid {
        for grid in spec.models.iter_mut() {
            grid.a_values = a.clone();
        }
    }
    let phase1 = settings.get("phase1").map(PathBuf::from);
    let phase2 = settings.get("phase2").map(PathBuf::from);
    if chart {
        if phase1.is_none() {
            problems.push("chart needs --phase1 <csv>".into());
        }
    } else if phase1.is_some() || phase2.is_some() {
        problems.push(format!("--phase1/--phase2 only apply to the chart command, not {}", kind.name()));
    }
    problems.extend(spec.problems());
    if !problems.is_empty() {
        problems.dedup();
        return Err(Error::Usage(problems));
    }
    let cache_flag = settings.get("cache-dir").map(PathBuf::from);
    Ok(RunConfig {
        command: kind,
        spec,
        threads,
        out: PathBuf::from(settings.get("out").map(String::as_str).unwrap_or(DEFAULT_OUT_DIR)),
        cache_dir: resolve_cache_dir(cache_flag.as_deref()),
        phase1,
        phase2,
        n_explicit: settings.contains_key("n"),
        resolved: settings,
    })
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = resolve(&cli.command).and_then(|config| execute(&config));
    match result {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Run a resolved configuration; returns progress lines for stdout.
pub fn execute(config: &RunConfig) -> Result<Vec<String>> {
    let work = || -> Result<Vec<String>> {
        let store = CalibrationStore::open(&config.cache_dir)?;
        fs::create_dir_all(&config.out).map_err(|e| Error::Io(format!("{}: {e}", config.out.display())))?;
        match config.command {
            CommandKind::Calibrate => run_calibrate(config, &store),
            CommandKind::Mse => run_study_command(config, &store, &[StudyKind::Mse]),
            CommandKind::Arl => run_study_command(config, &store, &[StudyKind::Arl]),
            CommandKind::Reproduce => run_reproduce(config, &store),
            CommandKind::Chart => run_chart_command(config, &store),
        }
    };
    match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {t} threads: {e}")))?
            .install(work),
        None => work(),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// `# key = value` lines echoing the resolved settings.
fn settings_header(config: &RunConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# command = {}", config.command.name());
    for (k, v) in &config.resolved {
        if !matches!(k.as_str(), "threads" | "out" | "cache-dir") {
            let _ = writeln!(s, "# setting.{k} = {v}");
        }
    }
    s
}

fn with_settings(config: &RunConfig, result: &StudyResult) -> String {
    let mut s = settings_header(config);
    s.push_str(&result.to_csv());
    s
}

fn run_calibrate(config: &RunConfig, store: &CalibrationStore) -> Result<Vec<String>> {
    let spec = &config.spec;
    let cal = calibrate_grid(spec, store, true)?;
    let mut s = settings_header(config);
    let _ = writeln!(s, "# n = {}", spec.n);
    let _ = writeln!(s, "# k = {}", spec.k);
    let _ = writeln!(s, "# seed = {}", spec.seed);
    let _ = writeln!(s, "# limits = {}", spec.limit_scheme);
    for (i, key) in cal.record_keys.iter().enumerate() {
        let _ = writeln!(s, "# calibration_key.{i} = {key}");
    }
    s.push_str("scale,location,correction,alpha_star,l_factor,u_factor\n");
    for (i, sc) in cal.scales.iter().enumerate() {
        for (j, loc) in spec.locations.iter().enumerate() {
            let alpha = cal.alpha(spec, i, j);
            let lim = limits_for_alpha(1.0, spec.n, alpha, spec.limit_scheme)?;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                sc.name(),
                loc.name(),
                sc.correction,
                alpha,
                lim.l_factor,
                lim.u_factor
            );
        }
    }
    let path = config.out.join("calibration.csv");
    write_file(&path, &s)?;
    Ok(vec![format!("wrote {}", path.display())])
}

fn write_study(config: &RunConfig, result: &StudyResult, lines: &mut Vec<String>) -> Result<()> {
    let path = config.out.join(format!("{}.csv", result.kind.name()));
    write_file(&path, &with_settings(config, result))?;
    lines.push(format!("wrote {}", path.display()));
    let plots = config.out.join("plots");
    for ds in PlotDataset::standard().into_iter().filter(|d| d.study == result.kind) {
        let has_cells = result.rows.iter().any(|r| r.model == ds.model && r.phi == ds.phi);
        if has_cells {
            let files = emit_figure_data(result, &ds, &plots)?;
            lines.push(format!("wrote {} plot files for {}", files.len(), ds.stem()));
        }
    }
    Ok(())
}

fn run_study_command(config: &RunConfig, store: &CalibrationStore, kinds: &[StudyKind]) -> Result<Vec<String>> {
    let results = run_studies(&config.spec, store, kinds)?;
    let mut lines = vec![];
    for r in &results {
        write_study(config, r, &mut lines)?;
        let invalid = r.rows.iter().filter(|row| row.invalid).count();
        if invalid > 0 {
            lines.push(format!("warning: {invalid} {} cells flagged invalid (>1% degenerate replicates)", r.kind.name()));
        }
    }
    Ok(lines)
}

fn run_reproduce(config: &RunConfig, store: &CalibrationStore) -> Result<Vec<String>> {
    let results = run_studies(&config.spec, store, &[StudyKind::Mse, StudyKind::Arl])?;
    let mut lines = vec![];
    for r in &results {
        write_study(config, r, &mut lines)?;
    }
    let checks = ordering_checks(Some(&results[0]), Some(&results[1]), config.spec.target_arl0);
    let mut summary = settings_header(config);
    summary.push_str(&render(&checks));
    let path = config.out.join("summary.txt");
    write_file(&path, &summary)?;
    lines.push(format!("wrote {}", path.display()));
    lines.push(render(&checks).trim_end().to_string());
    Ok(lines)
}

/// Read subgroups (one per row, header row required).
pub fn read_subgroups(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut rows = vec![];
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::Data(format!("{}: row {}, column {}: not a number: '{cell}'", path.display(), i + 1, j + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no subgroups", path.display())));
    }
    Ok(rows)
}

fn limits_header(config: &RunConfig, limits: &ControlLimits, k: usize, keys: &[String]) -> String {
    let spec = &config.spec;
    let mut s = settings_header(config);
    let _ = writeln!(s, "# n = {}", limits.n);
    let _ = writeln!(s, "# k = {k}");
    let _ = writeln!(s, "# scale = {}", spec.scales[0].name());
    let _ = writeln!(s, "# location = {}", spec.locations[0].name());
    let _ = writeln!(s, "# correction = {}", spec.scales[0].correction);
    let _ = writeln!(s, "# alpha_star = {}", limits.alpha_star.get());
    let _ = writeln!(s, "# l_factor = {}", limits.l_factor);
    let _ = writeln!(s, "# u_factor = {}", limits.u_factor);
    let _ = writeln!(s, "# limits = {}", spec.limit_scheme);
    let _ = writeln!(s, "# target_arl0 = {}", spec.target_arl0);
    let _ = writeln!(s, "# seed = {}", spec.seed);
    for (i, key) in keys.iter().enumerate() {
        let _ = writeln!(s, "# calibration_key.{i} = {key}");
    }
    s
}

/// Phase I limits and, if given, Phase II monitoring.
pub fn run_chart_command(config: &RunConfig, store: &CalibrationStore) -> Result<Vec<String>> {
    let phase1_path = config.phase1.as_ref().ok_or_else(|| Error::Usage(vec!["chart needs --phase1".into()]))?;
    let rows = read_subgroups(phase1_path)?;
    let data = Phase1Data::from_rows(rows)?;
    if config.n_explicit && data.n() != config.spec.n {
        return Err(Error::Data(format!(
            "{}: subgroups have {} observations but --n is {}",
            phase1_path.display(),
            data.n(),
            config.spec.n
        )));
    }
    let mut spec = config.spec.clone();
    spec.n = data.n();
    spec.k = data.k();
    let cal = calibrate_grid(&spec, store, true)?;
    let sigma_hat = crate::chart::phase1_sigma_hat(&data, &cal.scales[0], &spec.locations[0])?;
    let limits = limits_for_alpha(sigma_hat, spec.n, cal.alpha_star[0], spec.limit_scheme)?;
    let mut resolved = config.clone();
    resolved.spec = spec.clone();
    resolved.spec.scales = cal.scales.clone();
    let header = limits_header(&resolved, &limits, data.k(), &cal.record_keys);

    let mut text = header.clone();
    text.push_str("center,lcl,ucl\n");
    let _ = writeln!(text, "{},{},{}", limits.center, limits.lcl, limits.ucl);
    let limits_path = config.out.join("limits.csv");
    write_file(&limits_path, &text)?;
    let mut lines = vec![
        format!("center = {}  lcl = {}  ucl = {}", limits.center, limits.lcl, limits.ucl),
        format!("wrote {}", limits_path.display()),
    ];

    if let Some(p2) = &config.phase2 {
        let rows = read_subgroups(p2)?;
        let mut text = header;
        text.push_str("subgroup,sd,signal\n");
        let mut signals = 0;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != spec.n {
                return Err(Error::Data(format!(
                    "{}: row {} has {} values, expected {}",
                    p2.display(),
                    i + 1,
                    row.len(),
                    spec.n
                )));
            }
            let sd = sample_sd(row)?;
            let signal = limits.signals(sd);
            signals += signal as usize;
            let _ = writeln!(text, "{},{},{}", i + 1, sd, if signal { "out" } else { "in" });
        }
        let path = config.out.join("phase2.csv");
        write_file(&path, &text)?;
        lines.push(format!("{signals} of {} Phase II subgroups signal", rows.len()));
        lines.push(format!("wrote {}", path.display()));
    }
    Ok(lines)
}
