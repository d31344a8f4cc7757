//! Append-only training log: line-delimited JSON records with monotone
//! step counters.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    /// Optimizer hyperparameters echoed at stage start.
    Hyper {
        stage: String,
        lr: f64,
        weight_decay: f64,
        beta1: f64,
        beta2: f64,
    },
    Step {
        epoch: u64,
        step: u64,
        lr: f64,
        loss_total: f64,
        loss_det: f64,
        loss_gen: f64,
        gen_skipped: bool,
        ms: f64,
    },
    Epoch {
        epoch: u64,
        steps: u64,
        mean_loss: f64,
        ms: f64,
    },
}

/// Timing-free view of a step record, for resume-equivalence checks.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEssentials {
    pub epoch: u64,
    pub step: u64,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_det: f64,
    pub loss_gen: f64,
}

#[derive(Debug, Default)]
pub struct TrainLog {
    records: Vec<LogRecord>,
    writer: Option<BufWriter<File>>,
    last_step: Option<u64>,
}

impl TrainLog {
    pub fn in_memory() -> Self {
        TrainLog::default()
    }

    pub fn to_file(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        Ok(TrainLog {
            records: Vec::new(),
            writer: Some(BufWriter::new(File::create(path)?)),
            last_step: None,
        })
    }

    pub fn append(&mut self, record: LogRecord) -> Result<(), TrainError> {
        if let LogRecord::Step { step, .. } = &record {
            if let Some(last) = self.last_step {
                if *step <= last {
                    return Err(TrainError::LogOrder(format!(
                        "step {step} after step {last}"
                    )));
                }
            }
            self.last_step = Some(*step);
        }
        if let Some(w) = &mut self.writer {
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(w, "{line}")?;
            w.flush()?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn step_essentials(&self) -> Vec<StepEssentials> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Step { epoch, step, lr, loss_total, loss_det, loss_gen, .. } => {
                    Some(StepEssentials {
                        epoch: *epoch,
                        step: *step,
                        lr: *lr,
                        loss_total: *loss_total,
                        loss_det: *loss_det,
                        loss_gen: *loss_gen,
                    })
                }
                _ => None,
            })
            .collect()
    }

    pub fn epoch_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r, LogRecord::Epoch { .. }))
            .count()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)?;
        let mut log = TrainLog::in_memory();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: LogRecord = serde_json::from_str(line)
                .map_err(|e| TrainError::LogOrder(format!("line {}: {e}", i + 1)))?;
            log.append(record)?;
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(step: u64) -> LogRecord {
        LogRecord::Step {
            epoch: step / 10,
            step,
            lr: 0.01,
            loss_total: 1.0,
            loss_det: 0.6,
            loss_gen: 0.4,
            gen_skipped: false,
            ms: 12.0,
        }
    }

    #[test]
    fn appends_and_round_trips_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        let mut log = TrainLog::to_file(&path).unwrap();
        log.append(LogRecord::Hyper {
            stage: "calibrate".into(),
            lr: 1e-4,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
        })
        .unwrap();
        log.append(step(1)).unwrap();
        log.append(step(2)).unwrap();
        log.append(LogRecord::Epoch { epoch: 0, steps: 2, mean_loss: 1.0, ms: 30.0 }).unwrap();
        drop(log);

        let loaded = TrainLog::load(&path).unwrap();
        assert_eq!(loaded.records().len(), 4);
        assert_eq!(loaded.step_essentials().len(), 2);
        assert_eq!(loaded.epoch_count(), 1);
    }

    #[test]
    fn rejects_non_monotone_steps() {
        let mut log = TrainLog::in_memory();
        log.append(step(5)).unwrap();
        assert!(matches!(log.append(step(5)), Err(TrainError::LogOrder(_))));
        assert!(matches!(log.append(step(3)), Err(TrainError::LogOrder(_))));
    }
}
