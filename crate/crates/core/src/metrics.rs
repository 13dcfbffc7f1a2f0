//! Confusion counts, the five overlap metrics, failure flags and aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::statistics::Statistics;

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::tensor::Tensor;

pub const DEFAULT_THRESHOLD: f32 = 0.5;
pub const DEFAULT_JACCARD_FLOOR: f64 = 0.05;

/// Value of a metric whose denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroDivision {
    /// 1 when prediction and ground truth agree everywhere, else 0.
    #[default]
    OneIfMatch,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Jaccard,
    Precision,
    Recall,
    Specificity,
    Dice,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Jaccard,
        Metric::Precision,
        Metric::Recall,
        Metric::Specificity,
        Metric::Dice,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Jaccard => "jaccard",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::Specificity => "specificity",
            Metric::Dice => "dice",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            Metric::Jaccard => "Jaccard",
            Metric::Precision => "Precision",
            Metric::Recall => "Recall",
            Metric::Specificity => "Specificity",
            Metric::Dice => "Dice",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::config(format!("unknown metric '{s}'")))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

/// Per-image evaluation result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub id: String,
    pub fold: usize,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub jaccard: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub dice: f64,
}

impl MetricRecord {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Jaccard => self.jaccard,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::Specificity => self.specificity,
            Metric::Dice => self.dice,
        }
    }

    pub fn pixels(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn with_id(mut self, id: impl Into<String>, fold: usize) -> Self {
        self.id = id.into();
        self.fold = fold;
        self
    }
}

/// Foreground where the probability strictly exceeds `threshold`. Expects a single-item, single-channel map.
pub fn binarize(prob: &Tensor, threshold: f32) -> Result<BinaryMask> {
    let s = prob.shape();
    if s.n != 1 || s.c != 1 {
        return Err(Error::shape(format!(
            "binarize expects a (1, 1, H, W) map, got {s:?}"
        )));
    }
    BinaryMask::from_vec(
        s.w,
        s.h,
        prob.data()
            .iter()
            .map(|&p| u8::from(p > threshold))
            .collect(),
    )
}

fn ratio(num: u64, den: u64, exact_match: bool, zero: ZeroDivision) -> f64 {
    if den == 0 {
        match zero {
            ZeroDivision::OneIfMatch if exact_match => 1.0,
            _ => 0.0,
        }
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate(pred: &BinaryMask, gt: &BinaryMask) -> Result<MetricRecord> {
    evaluate_with(pred, gt, ZeroDivision::default())
}

pub fn evaluate_with(
    pred: &BinaryMask,
    gt: &BinaryMask,
    zero: ZeroDivision,
) -> Result<MetricRecord> {
    if !pred.same_size(gt) {
        return Err(Error::shape(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut c = [0u64; 4];
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        c[(usize::from(p) << 1) | usize::from(g)] += 1;
    }
    let [tn, fn_, fp, tp] = c;
    let exact = fp + fn_ == 0;
    Ok(MetricRecord {
        id: String::new(),
        fold: 0,
        tp,
        fp,
        fn_,
        tn,
        jaccard: ratio(tp, tp + fp + fn_, exact, zero),
        precision: ratio(tp, tp + fp, exact, zero),
        recall: ratio(tp, tp + fn_, exact, zero),
        specificity: ratio(tn, tn + fp, exact, zero),
        dice: ratio(2 * tp, 2 * tp + fp + fn_, exact, zero),
    })
}

pub fn is_failure(record: &MetricRecord, jaccard_floor: f64) -> bool {
    record.jaccard < jaccard_floor
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Mean and population std over per-fold means.
    #[default]
    PerFold,
    /// Mean and population std over individual images.
    PerImage,
}

impl Grouping {
    pub fn name(&self) -> &'static str {
        match self {
            Grouping::PerFold => "per_fold",
            Grouping::PerImage => "per_image",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "per_fold" | "fold" => Ok(Grouping::PerFold),
            "per_image" | "image" => Ok(Grouping::PerImage),
            other => Err(Error::config(format!(
                "unknown grouping '{other}' (per_fold | per_image)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub grouping: Grouping,
    pub images: usize,
    pub folds: usize,
    pub metrics: BTreeMap<Metric, MeanStd>,
    /// Per-fold means, keyed by fold index.
    pub fold_means: BTreeMap<usize, BTreeMap<Metric, f64>>,
    pub failures: usize,
    pub failure_rate: f64,
    pub jaccard_floor: f64,
}

impl Aggregate {
    pub fn get(&self, m: Metric) -> MeanStd {
        self.metrics[&m]
    }
}

fn mean_std(values: &[f64]) -> MeanStd {
    if values.len() == 1 {
        return MeanStd {
            mean: values[0],
            std: 0.0,
        };
    }
    MeanStd {
        mean: values.mean(),
        std: values.population_std_dev(),
    }
}

pub fn aggregate(
    records: &[MetricRecord],
    grouping: Grouping,
    jaccard_floor: f64,
) -> Result<Aggregate> {
    if records.is_empty() {
        return Err(Error::Data("cannot aggregate zero records".into()));
    }
    let mut by_fold: BTreeMap<usize, Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        by_fold.entry(r.fold).or_default().push(r);
    }
    let fold_means: BTreeMap<usize, BTreeMap<Metric, f64>> = by_fold
        .iter()
        .map(|(&f, rs)| {
            let means = Metric::ALL
                .into_iter()
                .map(|m| {
                    (
                        m,
                        rs.iter().map(|r| r.get(m)).sum::<f64>() / rs.len() as f64,
                    )
                })
                .collect();
            (f, means)
        })
        .collect();
    let metrics = Metric::ALL
        .into_iter()
        .map(|m| {
            let values: Vec<f64> = match grouping {
                Grouping::PerFold => fold_means.values().map(|fm| fm[&m]).collect(),
                Grouping::PerImage => records.iter().map(|r| r.get(m)).collect(),
            };
            (m, mean_std(&values))
        })
        .collect();
    let failures = records
        .iter()
        .filter(|r| is_failure(r, jaccard_floor))
        .count();
    Ok(Aggregate {
        grouping,
        images: records.len(),
        folds: by_fold.len(),
        metrics,
        fold_means,
        failures,
        failure_rate: failures as f64 / records.len() as f64,
        jaccard_floor,
    })
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    id: String,
    fold: usize,
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    tn: u64,
    jaccard: String,
    precision: String,
    recall: String,
    specificity: String,
    dice: String,
    failure: u8,
}

/// Metric values are written with 8 decimals so reruns produce identical bytes.
pub fn write_records_csv(
    records: &[MetricRecord],
    jaccard_floor: f64,
    out: impl Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let f = |v: f64| format!("{v:.8}");
    for r in records {
        w.serialize(CsvRow {
            id: r.id.clone(),
            fold: r.fold,
            tp: r.tp,
            fp: r.fp,
            fn_: r.fn_,
            tn: r.tn,
            jaccard: f(r.jaccard),
            precision: f(r.precision),
            recall: f(r.recall),
            specificity: f(r.specificity),
            dice: f(r.dice),
            failure: u8::from(is_failure(r, jaccard_floor)),
        })?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn read_records_csv(input: impl Read) -> Result<Vec<MetricRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let parse = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::Data(format!("bad metric value '{s}'")))
    };
    r.deserialize::<CsvRow>()
        .map(|row| {
            let row = row?;
            Ok(MetricRecord {
                jaccard: parse(&row.jaccard)?,
                precision: parse(&row.precision)?,
                recall: parse(&row.recall)?,
                specificity: parse(&row.specificity)?,
                dice: parse(&row.dice)?,
                id: row.id,
                fold: row.fold,
                tp: row.tp,
                fp: row.fp,
                fn_: row.fn_,
                tn: row.tn,
            })
        })
        .collect()
}
