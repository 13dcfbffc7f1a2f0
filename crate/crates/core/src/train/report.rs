use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ClassLabel;
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, read_records_csv, write_records_csv, Aggregate, Grouping, MetricRecord,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    CrossValidation {
        k: usize,
        seed: u64,
        class_filter: Option<ClassLabel>,
        plan_fingerprint: String,
    },
    /// `fold` in each record is the checkpoint index.
    External {
        checkpoints: usize,
        trained_on: Vec<String>,
    },
}

/// Per-image records of one method under one protocol, with both aggregations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub arch_fingerprint: String,
    pub dataset: String,
    pub include_normal: bool,
    pub protocol: Protocol,
    /// Which weights are evaluated; always the final epoch.
    pub model_selection: String,
    pub threshold: f32,
    pub per_fold: Aggregate,
    pub per_image: Aggregate,
    pub loss_traces: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub records: Vec<MetricRecord>,
}

pub const REPORT_JSON: &str = "report.json";
pub const RECORDS_CSV: &str = "records.csv";

impl EvalReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        label: &str,
        arch_fingerprint: &str,
        dataset: &str,
        include_normal: bool,
        protocol: Protocol,
        threshold: f32,
        jaccard_floor: f64,
        records: Vec<MetricRecord>,
        loss_traces: Vec<Vec<f64>>,
        warnings: Vec<String>,
    ) -> Result<Self> {
        Ok(Self {
            label: label.to_string(),
            arch_fingerprint: arch_fingerprint.to_string(),
            dataset: dataset.to_string(),
            include_normal,
            protocol,
            model_selection: "last_epoch".into(),
            threshold,
            per_fold: aggregate(&records, Grouping::PerFold, jaccard_floor)?,
            per_image: aggregate(&records, Grouping::PerImage, jaccard_floor)?,
            loss_traces,
            warnings,
            records,
        })
    }

    pub fn aggregate(&self, grouping: Grouping) -> &Aggregate {
        match grouping {
            Grouping::PerFold => &self.per_fold,
            Grouping::PerImage => &self.per_image,
        }
    }

    pub fn jaccard_floor(&self) -> f64 {
        self.per_fold.jaccard_floor
    }

    /// Writes `report.json` and `records.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_string_pretty(self)?;
        let path = dir.join(REPORT_JSON);
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        let path = dir.join(RECORDS_CSV);
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_records_csv(&self.records, self.jaccard_floor(), f)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(REPORT_JSON);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut report: EvalReport = serde_json::from_str(&text)?;
        let path = dir.join(RECORDS_CSV);
        let f = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        report.records = read_records_csv(f)?;
        Ok(report)
    }
}
