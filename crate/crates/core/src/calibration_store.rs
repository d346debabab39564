//! On-disk cache of calibration artifacts (correction factors and calibrated
//! false-alarm probabilities).
//!
//! Records live in `calibrations.jsonl` inside the cache directory, one JSON
//! object per line. Records are immutable: writing a different value under an
//! existing key is an error.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::chart::LimitScheme;
use crate::error::{Error, Result};
use crate::estimators::{LocationEstimatorSpec, ScaleEstimatorSpec};

pub const STORE_FILE: &str = "calibrations.jsonl";
pub const DEFAULT_CACHE_DIR: &str = ".spc-cache";
pub const CACHE_DIR_ENV: &str = "SPC_CACHE_DIR";
/// Bumped whenever seed derivation changes, invalidating old records.
pub const SEED_POLICY_VERSION: u32 = 1;
pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Flag value, then `SPC_CACHE_DIR`, then `./.spc-cache`.
pub fn resolve_cache_dir(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(CACHE_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from(DEFAULT_CACHE_DIR),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Correction,
    AlphaStar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationKey {
    pub kind: ArtifactKind,
    /// Scale estimator tuning id; for alpha records this includes the
    /// correction factor in use.
    pub scale: String,
    pub location: Option<String>,
    pub n: usize,
    pub k: Option<usize>,
    pub target_arl0: Option<f64>,
    pub limit_scheme: Option<String>,
    pub replicates: usize,
    pub seed: u64,
    pub seed_policy: u32,
}

impl CalibrationKey {
    pub fn correction(spec: &ScaleEstimatorSpec, n: usize, replicates: usize, seed: u64) -> Self {
        CalibrationKey {
            kind: ArtifactKind::Correction,
            scale: spec.tuning_id(),
            location: None,
            n,
            k: None,
            target_arl0: None,
            limit_scheme: None,
            replicates,
            seed,
            seed_policy: SEED_POLICY_VERSION,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn alpha_star(
        scale: &ScaleEstimatorSpec,
        location: &LocationEstimatorSpec,
        n: usize,
        k: usize,
        target_arl0: f64,
        scheme: LimitScheme,
        replicates: usize,
        seed: u64,
    ) -> Self {
        CalibrationKey {
            kind: ArtifactKind::AlphaStar,
            scale: format!("{}*{}", scale.tuning_id(), scale.correction),
            location: Some(location.tuning_id()),
            n,
            k: Some(k),
            target_arl0: Some(target_arl0),
            limit_scheme: Some(scheme.name().to_string()),
            replicates,
            seed,
            seed_policy: SEED_POLICY_VERSION,
        }
    }

    /// Canonical identity string; equal iff every field is equal.
    pub fn id(&self) -> String {
        let kind = match self.kind {
            ArtifactKind::Correction => "correction",
            ArtifactKind::AlphaStar => "alpha_star",
        };
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        format!(
            "{kind}|scale={}|loc={}|n={}|k={}|target={}|limits={}|reps={}|seed={}|policy={}",
            self.scale,
            opt(self.location.clone()),
            self.n,
            opt(self.k.map(|k| k.to_string())),
            opt(self.target_arl0.map(|t| t.to_string())),
            opt(self.limit_scheme.clone()),
            self.replicates,
            self.seed,
            self.seed_policy
        )
    }
}

impl fmt::Display for CalibrationKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub key: CalibrationKey,
    pub value: f64,
    /// Seconds since the Unix epoch.
    pub created: u64,
    pub version: String,
}

type Slot = Arc<OnceLock<std::result::Result<CalibrationRecord, Error>>>;

/// Thread-safe calibration cache, optionally backed by a file.
pub struct CalibrationStore {
    path: Option<PathBuf>,
    records: RwLock<HashMap<String, CalibrationRecord>>,
    pending: Mutex<HashMap<String, Slot>>,
    writer: Mutex<()>,
}

impl fmt::Debug for CalibrationStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CalibrationStore").field("path", &self.path).field("records", &self.len()).finish()
    }
}

impl CalibrationStore {
    /// A store that never touches the filesystem.
    pub fn in_memory() -> Self {
        CalibrationStore {
            path: None,
            records: RwLock::new(HashMap::new()),
            pending: Mutex::new(HashMap::new()),
            writer: Mutex::new(()),
        }
    }

    /// Open (creating if needed) the store in `dir`.
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| Error::Store(format!("cannot create cache directory {}: {e}", dir.display())))?;
        let path = dir.join(STORE_FILE);
        let mut records = HashMap::new();
        if path.exists() {
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::Store(format!("cannot read {}: {e}", path.display())))?;
            for (lineno, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CalibrationRecord = serde_json::from_str(line).map_err(|e| {
                    Error::Store(format!("{}:{}: malformed record: {e}", path.display(), lineno + 1))
                })?;
                let id = rec.key.id();
                if let Some(prev) = records.get(&id) {
                    let prev: &CalibrationRecord = prev;
                    if prev.value.to_bits() != rec.value.to_bits() {
                        return Err(Error::Store(format!(
                            "{}: conflicting values {} and {} for {id}",
                            path.display(),
                            prev.value,
                            rec.value
                        )));
                    }
                    continue;
                }
                records.insert(id, rec);
            }
        }
        Ok(CalibrationStore {
            path: Some(path),
            records: RwLock::new(records),
            pending: Mutex::new(HashMap::new()),
            writer: Mutex::new(()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &CalibrationKey) -> Option<CalibrationRecord> {
        self.records.read().expect("store lock").get(&key.id()).cloned()
    }

    /// Persist a new record. Re-inserting an identical value is a no-op;
    /// a different value under an existing key is an error.
    pub fn insert(&self, key: CalibrationKey, value: f64) -> Result<CalibrationRecord> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::Store(format!("refusing to store non-positive value {value} for {key}")));
        }
        let _guard = self.writer.lock().expect("store writer");
        let id = key.id();
        if let Some(prev) = self.get(&key) {
            if prev.value.to_bits() == value.to_bits() {
                return Ok(prev);
            }
            return Err(Error::Store(format!(
                "record for {id} already holds {}, refusing to overwrite with {value}",
                prev.value
            )));
        }
        let rec = CalibrationRecord {
            key,
            value,
            created: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            version: SOFTWARE_VERSION.to_string(),
        };
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&rec).map_err(|e| Error::Store(e.to_string()))?;
            let mut file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::Store(format!("cannot open {}: {e}", path.display())))?;
            writeln!(file, "{line}").map_err(|e| Error::Store(format!("cannot write {}: {e}", path.display())))?;
        }
        self.records.write().expect("store lock").insert(id, rec.clone());
        Ok(rec)
    }

    /// Return the cached record, or run `calibrate` once (even under
    /// concurrent callers for the same key) and persist the result.
    pub fn get_or_calibrate<F>(&self, key: &CalibrationKey, calibrate: F) -> Result<CalibrationRecord>
    where
        F: FnOnce() -> Result<f64>,
    {
        if let Some(rec) = self.get(key) {
            return Ok(rec);
        }
        let id = key.id();
        let slot: Slot = self.pending.lock().expect("store pending").entry(id.clone()).or_default().clone();
        let out = slot
            .get_or_init(|| {
                if let Some(rec) = self.get(key) {
                    return Ok(rec);
                }
                let value = calibrate().map_err(|e| attach_key(e, key))?;
                self.insert(key.clone(), value)
            })
            .clone();
        self.pending.lock().expect("store pending").remove(&id);
        out
    }
}

fn attach_key(err: Error, key: &CalibrationKey) -> Error {
    match err {
        Error::Calibration(m) => Error::Calibration(format!("{key}: {m}")),
        Error::Store(m) => Error::Store(format!("{key}: {m}")),
        other => other,
    }
}
