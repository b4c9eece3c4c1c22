use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ewcl_core::model::CausalLM;
use ewcl_core::trainer::{StepRecord, TrainHooks, TrainState};
use serde_json::{Map, Value};

use super::checkpoint::Checkpoint;
use crate::error::{IoContext, Result};

/// Appends one JSON line per step and writes resumable checkpoints.
pub struct TrainLogger {
    log_path: PathBuf,
    log: BufWriter<File>,
    checkpoint: Option<PathBuf>,
    start: Instant,
}

impl TrainLogger {
    /// Opens `log_path` for appending, first dropping lines past `resume_step`.
    pub fn open(log_path: &Path, checkpoint: Option<&Path>, resume_step: u64) -> Result<Self> {
        if let Some(dir) = log_path.parent() {
            fs::create_dir_all(dir).at(dir)?;
        }
        if log_path.exists() {
            let text = fs::read_to_string(log_path).at(log_path)?;
            let kept: String = text
                .lines()
                .filter(|l| {
                    serde_json::from_str::<Value>(l)
                        .ok()
                        .and_then(|v| v.get("step").and_then(Value::as_u64))
                        .is_some_and(|s| s <= resume_step)
                })
                .flat_map(|l| [l, "\n"])
                .collect();
            fs::write(log_path, kept).at(log_path)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(log_path).at(log_path)?;
        Ok(Self {
            log_path: log_path.to_path_buf(),
            log: BufWriter::new(file),
            checkpoint: checkpoint.map(Path::to_path_buf),
            start: Instant::now(),
        })
    }

    fn io(&self, e: std::io::Error) -> ewcl_core::Error {
        ewcl_core::Error::Hook(format!("{}: {e}", self.log_path.display()))
    }
}

pub fn step_line(record: &StepRecord, wall_ms: u128) -> Value {
    let mut m = Map::new();
    m.insert("step".into(), record.step.into());
    m.insert("lr".into(), record.lr.into());
    m.insert("task_loss".into(), record.task_loss.into());
    for (name, v) in &record.penalties {
        m.insert(format!("penalty.{name}"), (*v).into());
    }
    m.insert("wall_ms".into(), (wall_ms as u64).into());
    Value::Object(m)
}

impl TrainHooks for TrainLogger {
    fn on_step(&mut self, record: &StepRecord) -> ewcl_core::Result<()> {
        let line = step_line(record, self.start.elapsed().as_millis());
        writeln!(self.log, "{line}").map_err(|e| self.io(e))
    }

    fn on_checkpoint(&mut self, model: &CausalLM, state: &TrainState, data_position: u64) -> ewcl_core::Result<()> {
        self.log.flush().map_err(|e| self.io(e))?;
        if let Some(path) = &self.checkpoint {
            let ck = Checkpoint { model: model.clone(), train: Some(state.clone()), data_position };
            ck.save(path).map_err(|e| ewcl_core::Error::Hook(e.to_string()))?;
        }
        Ok(())
    }
}
