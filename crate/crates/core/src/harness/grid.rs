use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use super::config::parse_config;
use super::run::{run_experiment, summary_path, RunStatus};
use crate::error::{Error, Result};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridEntry {
    pub config: PathBuf,
    pub status: RunStatus,
    pub csv: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridIndex {
    pub runs: Vec<GridEntry>,
    pub failed: usize,
}

impl GridIndex {
    pub fn success(&self) -> bool {
        self.failed == 0
    }
}

/// `*.toml` files directly inside `dir`, sorted by name.
pub fn grid_configs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "toml") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn failed(config: &Path, err: impl ToString) -> GridEntry {
    GridEntry {
        config: config.to_path_buf(),
        status: RunStatus::Failed,
        csv: None,
        summary: None,
        error: Some(err.to_string()),
    }
}

/// Runs every config in `dir` on up to `jobs` threads and writes
/// `dir/index.json`. Runs are independent, so traces do not depend on
/// `jobs`; a failing run is recorded and the others continue.
pub fn run_grid(dir: &Path, jobs: usize) -> Result<GridIndex> {
    if jobs == 0 {
        return Err(Error::config("jobs", "must be at least 1"));
    }
    let paths = grid_configs(dir)?;
    let mut slots: Vec<Option<GridEntry>> = vec![None; paths.len()];
    let mut work = Vec::new();
    let mut owners: HashMap<PathBuf, usize> = HashMap::new();
    for (i, path) in paths.iter().enumerate() {
        match parse_config(path) {
            Ok(cfg) => {
                let out = cfg.output_path.clone().expect("parse_config fills the output path");
                if let Some(&j) = owners.get(&out) {
                    let msg = format!("output path {} is shared with {}", out.display(), paths[j].display());
                    slots[i] = Some(failed(path, msg));
                } else {
                    owners.insert(out, i);
                    work.push((i, cfg));
                }
            }
            Err(e) => slots[i] = Some(failed(path, e)),
        }
    }

    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(work.len()));
    std::thread::scope(|s| {
        for _ in 0..jobs.min(work.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some((i, cfg)) = work.get(k) else { break };
                let path = &paths[*i];
                log::info!("grid: starting {}", path.display());
                let entry = match run_experiment(cfg) {
                    Ok(summary) => GridEntry {
                        config: path.clone(),
                        status: RunStatus::Ok,
                        summary: summary.csv_path.as_deref().map(summary_path),
                        csv: summary.csv_path,
                        error: None,
                    },
                    Err(e) => {
                        let out = cfg.output_path.as_deref().expect("filled");
                        GridEntry {
                            summary: Some(summary_path(out)),
                            ..failed(path, e)
                        }
                    }
                };
                results.lock().expect("no panics while holding the lock").push((*i, entry));
            });
        }
    });
    for (i, entry) in results.into_inner().expect("threads joined") {
        slots[i] = Some(entry);
    }

    let runs: Vec<GridEntry> = slots.into_iter().map(|e| e.expect("every slot filled")).collect();
    let failed = runs.iter().filter(|r| r.status == RunStatus::Failed).count();
    let index = GridIndex { runs, failed };
    let text = serde_json::to_string_pretty(&index)?;
    std::fs::write(dir.join(INDEX_FILE), text + "\n")?;
    Ok(index)
}
