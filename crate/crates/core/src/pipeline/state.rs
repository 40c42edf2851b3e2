use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{BenchReport, EntityMetrics};
use crate::fsutil;

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Outline,
    Selecting,
    Correcting,
    Detail,
    Distilling,
    Done,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Outline,
        Stage::Selecting,
        Stage::Correcting,
        Stage::Detail,
        Stage::Distilling,
        Stage::Done,
    ];

    pub fn next(self) -> Option<Stage> {
        let i = Self::ALL.iter().position(|&s| s == self)?;
        Self::ALL.get(i + 1).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Outline => "outline",
            Stage::Selecting => "selecting",
            Stage::Correcting => "correcting",
            Stage::Detail => "detail",
            Stage::Distilling => "distilling",
            Stage::Done => "done",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Progress of a run. `stage` is the next stage to execute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub stage: Stage,
    /// Artifact name to path, relative to the work directory.
    pub artifacts: BTreeMap<String, PathBuf>,
    /// Test-set metrics per system.
    pub metrics: BTreeMap<String, EntityMetrics>,
    /// Dev-F1 per epoch for each training stage.
    pub dev_history: BTreeMap<String, Vec<f64>>,
    pub counts: BTreeMap<String, usize>,
    pub benches: BTreeMap<String, BenchReport>,
}

impl Default for PipelineState {
    fn default() -> Self {
        PipelineState {
            stage: Stage::Outline,
            artifacts: BTreeMap::new(),
            metrics: BTreeMap::new(),
            dev_history: BTreeMap::new(),
            counts: BTreeMap::new(),
            benches: BTreeMap::new(),
        }
    }
}

impl PipelineState {
    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&fsutil::read_to_string(path)?).map_err(Error::from)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fsutil::atomic_write(path, text.as_bytes())
    }

    /// Moves to the stage after `completed`; stages cannot be skipped.
    pub fn advance(&mut self, completed: Stage) -> Result<()> {
        if completed != self.stage {
            return Err(Error::Invariant(format!(
                "cannot complete {completed} while at {}",
                self.stage
            )));
        }
        self.stage = completed
            .next()
            .ok_or_else(|| Error::Invariant("pipeline is already done".into()))?;
        Ok(())
    }

    pub fn artifact(&self, root: &Path, name: &str) -> Result<PathBuf> {
        self.artifacts
            .get(name)
            .map(|p| root.join(p))
            .ok_or_else(|| Error::Invariant(format!("artifact `{name}` not recorded")))
    }

    /// Fails if any recorded artifact is missing on disk.
    pub fn verify_artifacts(&self, root: &Path) -> Result<()> {
        for (name, p) in &self.artifacts {
            if !root.join(p).exists() {
                return Err(Error::Invariant(format!(
                    "artifact `{name}` missing at {}",
                    root.join(p).display()
                )));
            }
        }
        Ok(())
    }
}
