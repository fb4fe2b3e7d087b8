//! In-process registry of benchmark runs.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rulemap_core::bench::{run_from_config, BenchConfig, Summary};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl RunStatus {
    /// Only forward moves are allowed; the two terminal states do not move.
    pub fn can_become(self, next: RunStatus) -> bool {
        matches!(
            (self, next),
            (RunStatus::Pending, RunStatus::Running)
                | (RunStatus::Pending, RunStatus::Failed)
                | (RunStatus::Running, RunStatus::Done)
                | (RunStatus::Running, RunStatus::Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub config_path: String,
    pub config: BenchConfig,
    pub status: RunStatus,
    pub created_at: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Default)]
pub struct Runs {
    inner: Mutex<BTreeMap<String, RunRecord>>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl Runs {
    pub fn list(&self) -> Vec<RunRecord> {
        self.inner
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .cloned()
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<RunRecord> {
        self.inner
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
    }

    fn update(&self, id: &str, next: RunStatus, f: impl FnOnce(&mut RunRecord)) {
        let mut runs = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(r) = runs.get_mut(id) {
            if r.status.can_become(next) {
                r.status = next;
                f(r);
            }
        }
    }

    /// Validates the config, registers a pending run and starts it on a
    /// background thread.
    pub fn submit(
        self: &Arc<Self>,
        config_path: PathBuf,
        output_dir: Option<PathBuf>,
    ) -> Result<RunRecord, String> {
        let loaded = BenchConfig::load(&config_path).map_err(|e| e.to_string())?;
        let record = {
            let mut runs = self.inner.lock().unwrap_or_else(|e| e.into_inner());
            let id = format!("run-{:04}", runs.len() + 1);
            let r = RunRecord {
                id: id.clone(),
                config_path: config_path.display().to_string(),
                config: loaded.config,
                status: RunStatus::Pending,
                created_at: now(),
                finished_at: None,
                output_dir: None,
                summary: None,
                error: None,
            };
            runs.insert(id, r.clone());
            r
        };
        let me = Arc::clone(self);
        let id = record.id.clone();
        std::thread::spawn(move || {
            me.update(&id, RunStatus::Running, |_| {});
            match run_from_config(&config_path, output_dir.as_deref()) {
                Ok((out, dir)) => me.update(&id, RunStatus::Done, |r| {
                    r.finished_at = Some(now());
                    r.output_dir = Some(dir.display().to_string());
                    r.summary = Some(out.summary);
                }),
                Err(e) => me.update(&id, RunStatus::Failed, |r| {
                    r.finished_at = Some(now());
                    r.error = Some(e.to_string());
                }),
            }
        });
        Ok(record)
    }
}
