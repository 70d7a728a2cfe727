use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    /// Total coupling cost after this step's update (LOOM only).
    pub coupling_cost: Option<f64>,
}

/// Per-step training record.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub rows: Vec<TraceRow>,
}

impl LossTrace {
    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.loss)
    }

    /// Mean loss over the last `k` recorded steps.
    pub fn tail_mean(&self, k: usize) -> f64 {
        let k = k.min(self.rows.len()).max(1);
        self.rows[self.rows.len().saturating_sub(k)..]
            .iter()
            .map(|r| r.loss)
            .sum::<f64>()
            / k as f64
    }
}
