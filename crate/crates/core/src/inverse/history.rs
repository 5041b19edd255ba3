use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

/// The four loss components tracked during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    MseFields,
    MseCoords,
    Force,
    Sparse,
}

impl LossName {
    pub const ALL: [LossName; 4] = [
        LossName::MseFields,
        LossName::MseCoords,
        LossName::Force,
        LossName::Sparse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LossName::MseFields => "mse_fields",
            LossName::MseCoords => "mse_coords",
            LossName::Force => "force",
            LossName::Sparse => "sparse",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub split: Split,
    pub loss: LossName,
    pub value: f64,
}

/// Per-epoch loss record. Epochs count from 1 across all stages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub rows: Vec<HistoryRow>,
    /// Last epoch of stage I, once stage II has started.
    pub stage_boundary: Option<usize>,
}

impl LossHistory {
    pub fn push(&mut self, epoch: usize, split: Split, loss: LossName, value: f64) {
        self.rows.push(HistoryRow {
            epoch,
            split,
            loss,
            value,
        });
    }

    pub fn value(&self, epoch: usize, split: Split, loss: LossName) -> Option<f64> {
        self.rows
            .iter()
            .rev()
            .find(|r| r.epoch == epoch && r.split == split && r.loss == loss)
            .map(|r| r.value)
    }

    /// Values of one series in epoch order.
    pub fn series(&self, split: Split, loss: LossName) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.split == split && r.loss == loss)
            .map(|r| (r.epoch, r.value))
            .collect()
    }

    pub fn last_epoch(&self) -> usize {
        self.rows.iter().map(|r| r.epoch).max().unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,split,loss_name,value\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{:e}",
                r.epoch,
                r.split.as_str(),
                r.loss.as_str(),
                r.value
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut h = LossHistory::default();
        h.push(1, Split::Train, LossName::Force, 0.5);
        h.push(1, Split::Validation, LossName::Sparse, 2.0);
        let csv = h.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,split,loss_name,value");
        assert_eq!(lines[1], "1,train,force,5e-1");
        assert_eq!(lines[2], "1,validation,sparse,2e0");
        assert_eq!(h.value(1, Split::Validation, LossName::Sparse), Some(2.0));
        assert_eq!(h.value(2, Split::Train, LossName::Force), None);
    }
}
