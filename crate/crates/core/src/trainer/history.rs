use std::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean summed loss per training item.
    pub train_loss: f64,
    /// Exact-success rate on the stopping items, when evaluated.
    pub validation_metric: Option<f64>,
    pub clamped_logs: usize,
    pub wall_seconds: f64,
}

/// Per-epoch record of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub stopping_epoch: usize,
    /// Training items left out because their gold path is blocked.
    pub skipped_items: usize,
}

impl TrainHistory {
    pub fn new(skipped_items: usize) -> Self {
        Self {
            epochs: Vec::new(),
            stopping_epoch: 0,
            skipped_items,
        }
    }

    pub fn push(&mut self, record: EpochRecord) {
        self.epochs.push(record);
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    /// Best recorded validation metric.
    pub fn best_metric(&self) -> Option<f64> {
        self.epochs
            .iter()
            .filter_map(|e| e.validation_metric)
            .fold(None, |b, m| Some(b.map_or(m, |b: f64| b.max(m))))
    }

    /// Copy with wall times zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut h = self.clone();
        h.epochs.iter_mut().for_each(|e| e.wall_seconds = 0.0);
        h
    }

    /// One row per epoch; an empty metric cell means not evaluated.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut out = String::from("epoch,train_loss,validation_metric,clamped_logs,stopping");
        if with_timing {
            out.push_str(",wall_seconds");
        }
        out.push('\n');
        for e in &self.epochs {
            let metric = e.validation_metric.map_or(String::new(), |m| format!("{m}"));
            let stop = u8::from(e.epoch == self.stopping_epoch);
            write!(
                out,
                "{},{},{},{},{}",
                e.epoch, e.train_loss, metric, e.clamped_logs, stop
            )
            .unwrap();
            if with_timing {
                write!(out, ",{:.3}", e.wall_seconds).unwrap();
            }
            out.push('\n');
        }
        out
    }
}
