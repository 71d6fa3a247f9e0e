use crate::error::ApiError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use thiserror::Error;
use watson_core::knn::{Cohort, Direction, FeatureSchema, PatientRecord};
use watson_core::{replay, FreqTable, TableError, TableOp};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub name: String,
    pub base: FreqTable,
    pub history: Vec<TableOp>,
    pub current: Arc<FreqTable>,
}

impl DatasetEntry {
    pub fn new(name: String, base: FreqTable) -> Self {
        DatasetEntry {
            name,
            current: Arc::new(base.clone()),
            base,
            history: Vec::new(),
        }
    }

    /// Apply `op` to the current table; history is untouched on error.
    pub fn apply(&mut self, op: TableOp) -> Result<(), TableError> {
        let next = op.apply(&self.current)?;
        self.history.push(op);
        self.current = Arc::new(next);
        Ok(())
    }

    /// Drop the last operation. Returns `false` when there is nothing to undo.
    pub fn undo(&mut self) -> Result<bool, TableError> {
        if self.history.pop().is_none() {
            return Ok(false);
        }
        self.current = Arc::new(replay(&self.base, &self.history)?);
        Ok(true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortEntry {
    pub cohort: Cohort<f64>,
    pub direction: Direction,
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot i/o at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("snapshot {path} is invalid: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

#[derive(Serialize, Deserialize)]
struct DatasetSnapshot {
    id: String,
    name: String,
    base: FreqTable,
    history: Vec<TableOp>,
}

#[derive(Serialize, Deserialize)]
struct CohortSnapshot {
    id: String,
    schema: FeatureSchema<f64>,
    direction: Direction,
    patients: Vec<PatientRecord<f64>>,
}

/// Registry of datasets and cohorts. Each dataset has its own lock, so
/// operations on one dataset are serialized while others proceed.
#[derive(Debug, Default)]
pub struct AppState {
    datasets: RwLock<BTreeMap<String, Arc<Mutex<DatasetEntry>>>>,
    cohorts: RwLock<BTreeMap<String, Arc<CohortEntry>>>,
    next_id: AtomicU64,
    data_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(data_dir: Option<PathBuf>) -> Self {
        AppState {
            data_dir,
            ..Default::default()
        }
    }

    /// A state seeded from the snapshot in `data_dir`, if one exists.
    pub fn load(data_dir: Option<PathBuf>) -> Result<Self, SnapshotError> {
        let state = AppState::new(data_dir);
        if let Some(dir) = state.data_dir.clone() {
            state.read_snapshot(&dir)?;
        }
        Ok(state)
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    fn fresh_id(&self, prefix: &str) -> String {
        format!("{prefix}{}", self.next_id.fetch_add(1, Ordering::SeqCst) + 1)
    }

    pub fn insert_dataset(&self, name: String, base: FreqTable) -> (String, Arc<Mutex<DatasetEntry>>) {
        let id = self.fresh_id("ds");
        let entry = Arc::new(Mutex::new(DatasetEntry::new(name, base)));
        self.datasets
            .write()
            .expect("registry lock")
            .insert(id.clone(), entry.clone());
        (id, entry)
    }

    pub fn insert_cohort(&self, cohort: Cohort<f64>, direction: Direction) -> (String, Arc<CohortEntry>) {
        let id = self.fresh_id("co");
        let entry = Arc::new(CohortEntry { cohort, direction });
        self.cohorts
            .write()
            .expect("registry lock")
            .insert(id.clone(), entry.clone());
        (id, entry)
    }

    pub fn dataset_ids(&self) -> Vec<String> {
        self.datasets.read().expect("registry lock").keys().cloned().collect()
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<Mutex<DatasetEntry>>, ApiError> {
        self.datasets
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("dataset", id))
    }

    /// The current table and dataset name, without holding the lock.
    pub fn current_table(&self, id: &str) -> Result<(Arc<FreqTable>, String), ApiError> {
        let entry = self.dataset(id)?;
        let guard = entry.lock().expect("dataset lock");
        Ok((guard.current.clone(), guard.name.clone()))
    }

    pub fn cohort(&self, id: &str) -> Result<Arc<CohortEntry>, ApiError> {
        self.cohorts
            .read()
            .expect("registry lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("cohort", id))
    }

    /// Write every dataset and cohort under the data directory. A no-op
    /// without one.
    pub fn save_snapshot(&self) -> Result<(), SnapshotError> {
        let Some(dir) = &self.data_dir else {
            return Ok(());
        };
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| SnapshotError::Io { path, source }
        };
        let ds_dir = dir.join("datasets");
        let co_dir = dir.join("cohorts");
        std::fs::create_dir_all(&ds_dir).map_err(io(&ds_dir))?;
        std::fs::create_dir_all(&co_dir).map_err(io(&co_dir))?;
        for (id, entry) in self.datasets.read().expect("registry lock").iter() {
            let e = entry.lock().expect("dataset lock");
            let snap = DatasetSnapshot {
                id: id.clone(),
                name: e.name.clone(),
                base: e.base.clone(),
                history: e.history.clone(),
            };
            write_json(&ds_dir.join(format!("{id}.json")), &snap)?;
        }
        for (id, entry) in self.cohorts.read().expect("registry lock").iter() {
            let snap = CohortSnapshot {
                id: id.clone(),
                schema: entry.cohort.schema.clone(),
                direction: entry.direction,
                patients: entry.cohort.patients.clone(),
            };
            write_json(&co_dir.join(format!("{id}.json")), &snap)?;
        }
        Ok(())
    }

    fn read_snapshot(&self, dir: &Path) -> Result<(), SnapshotError> {
        let mut max_id = 0u64;
        let mut note_id = |id: &str| {
            let n: u64 = id.trim_start_matches(|c: char| c.is_ascii_alphabetic()).parse().unwrap_or(0);
            max_id = max_id.max(n);
        };
        for path in json_files(&dir.join("datasets"))? {
            let snap: DatasetSnapshot = read_json(&path)?;
            let invalid = |e: TableError| SnapshotError::Invalid {
                path: path.clone(),
                reason: e.to_string(),
            };
            let current = replay(&snap.base, &snap.history).map_err(invalid)?;
            note_id(&snap.id);
            let entry = DatasetEntry {
                name: snap.name,
                base: snap.base,
                history: snap.history,
                current: Arc::new(current),
            };
            self.datasets
                .write()
                .expect("registry lock")
                .insert(snap.id, Arc::new(Mutex::new(entry)));
        }
        for path in json_files(&dir.join("cohorts"))? {
            let snap: CohortSnapshot = read_json(&path)?;
            let cohort = Cohort::new(snap.schema, snap.patients).map_err(|e| SnapshotError::Invalid {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            note_id(&snap.id);
            self.cohorts.write().expect("registry lock").insert(
                snap.id,
                Arc::new(CohortEntry {
                    cohort,
                    direction: snap.direction,
                }),
            );
        }
        self.next_id.store(max_id, Ordering::SeqCst);
        Ok(())
    }
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>, SnapshotError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let read = std::fs::read_dir(dir).map_err(|source| SnapshotError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out: Vec<PathBuf> = read
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    out.sort();
    Ok(out)
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), SnapshotError> {
    let tmp = path.with_extension("json.tmp");
    let text = serde_json::to_string(value).expect("serializable");
    std::fs::write(&tmp, text).map_err(|source| SnapshotError::Io {
        path: tmp.clone(),
        source,
    })?;
    std::fs::rename(&tmp, path).map_err(|source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<D, SnapshotError> {
    let text = std::fs::read_to_string(path).map_err(|source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| SnapshotError::Invalid {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
