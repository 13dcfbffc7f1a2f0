//! Paired significance tests and method comparison tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::metrics::{Grouping, Metric, MetricRecord};
use crate::train::{EvalReport, Protocol};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// What one pair of observations is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingUnit {
    #[default]
    Image,
    Fold,
}

impl PairingUnit {
    pub fn name(&self) -> &'static str {
        match self {
            PairingUnit::Image => "image",
            PairingUnit::Fold => "fold",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "image" | "per_image" => Ok(PairingUnit::Image),
            "fold" | "per_fold" => Ok(PairingUnit::Fold),
            other => Err(Error::config(format!(
                "unknown pairing unit '{other}' (image | fold)"
            ))),
        }
    }
}

/// Values of one metric for two methods on the same keys.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSeries {
    pub method_a: String,
    pub method_b: String,
    pub keys: Vec<String>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

fn record_key(r: &MetricRecord) -> String {
    format!("{}#{}", r.fold, r.id)
}

impl PairedSeries {
    pub fn new(method_a: &str, method_b: &str, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Stats(format!(
                "series lengths differ: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let keys = (0..a.len()).map(|i| i.to_string()).collect();
        Ok(Self {
            method_a: method_a.into(),
            method_b: method_b.into(),
            keys,
            a,
            b,
        })
    }

    /// Pairs per-image records by `(fold, id)`; any unmatched key is an error.
    pub fn from_records(
        method_a: &str,
        a: &[MetricRecord],
        method_b: &str,
        b: &[MetricRecord],
        metric: Metric,
    ) -> Result<Self> {
        let index: HashMap<String, &MetricRecord> = b.iter().map(|r| (record_key(r), r)).collect();
        if index.len() != b.len() {
            return Err(Error::Stats(format!(
                "{method_b} has duplicate (fold, id) records"
            )));
        }
        let mut unmatched: Vec<String> = Vec::new();
        let mut keys = Vec::with_capacity(a.len());
        let (mut va, mut vb) = (Vec::with_capacity(a.len()), Vec::with_capacity(a.len()));
        let mut used = 0;
        for r in a {
            let key = record_key(r);
            match index.get(&key) {
                Some(o) => {
                    va.push(r.get(metric));
                    vb.push(o.get(metric));
                    keys.push(key);
                    used += 1;
                }
                None => unmatched.push(format!("{key} (only in {method_a})")),
            }
        }
        if used != b.len() {
            let seen: std::collections::HashSet<&str> = keys.iter().map(String::as_str).collect();
            unmatched.extend(
                b.iter()
                    .map(record_key)
                    .filter(|k| !seen.contains(k.as_str()))
                    .map(|k| format!("{k} (only in {method_b})")),
            );
        }
        if !unmatched.is_empty() {
            unmatched.truncate(10);
            return Err(Error::Stats(format!(
                "unmatched ids between {method_a} and {method_b}: {}",
                unmatched.join(", ")
            )));
        }
        Ok(Self {
            method_a: method_a.into(),
            method_b: method_b.into(),
            keys,
            a: va,
            b: vb,
        })
    }

    /// One pair per fold: the fold means.
    pub fn from_fold_means(ra: &EvalReport, rb: &EvalReport, metric: Metric) -> Result<Self> {
        let fa = &ra.per_fold.fold_means;
        let fb = &rb.per_fold.fold_means;
        if fa.keys().ne(fb.keys()) {
            return Err(Error::Stats(format!(
                "{} and {} cover different folds",
                ra.label, rb.label
            )));
        }
        Ok(Self {
            method_a: ra.label.clone(),
            method_b: rb.label.clone(),
            keys: fa.keys().map(|f| format!("fold {f}")).collect(),
            a: fa.values().map(|m| m[&metric]).collect(),
            b: fb.values().map(|m| m[&metric]).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Two-tailed.
    pub p: f64,
    pub dof: usize,
    pub mean_diff: f64,
    pub sd_diff: f64,
    /// Set when every difference is the same nonzero value (zero spread); then `p = 0`.
    pub degenerate: bool,
}

/// Two-tailed Student t probability `P(|T| ≥ |t|)` with `dof` degrees of freedom.
pub fn t_two_tailed(t: f64, dof: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
    (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0)
}

pub fn t_cdf(t: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof)
        .expect("positive degrees of freedom")
        .cdf(t)
}

pub fn paired_t_test(series: &PairedSeries) -> Result<TTest> {
    let n = series.len();
    if n < 2 {
        return Err(Error::Stats(format!(
            "paired t-test needs at least 2 pairs, got {n}"
        )));
    }
    let d: Vec<f64> = series.a.iter().zip(&series.b).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let dof = n - 1;
    let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if d.iter().all(|&x| x == 0.0) {
        return Ok(TTest {
            t: 0.0,
            p: 1.0,
            dof,
            mean_diff: 0.0,
            sd_diff: 0.0,
            degenerate: false,
        });
    }
    if sd <= scale * f64::EPSILON * n as f64 {
        let t = if mean > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        return Ok(TTest {
            t,
            p: 0.0,
            dof,
            mean_diff: mean,
            sd_diff: sd,
            degenerate: true,
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    Ok(TTest {
        t,
        p: t_two_tailed(t, dof as f64),
        dof,
        mean_diff: mean,
        sd_diff: sd,
        degenerate: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub mean: f64,
    pub std: f64,
    /// Test against the reference method; `None` on the reference row.
    pub test: Option<TTest>,
    pub significant: bool,
    pub best: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub cells: BTreeMap<Metric, TableCell>,
    pub failure_rate: f64,
    pub images: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableOptions {
    pub alpha: f64,
    /// Aggregation behind "mean ± std".
    pub grouping: Grouping,
    pub pairing: PairingUnit,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            grouping: Grouping::PerFold,
            pairing: PairingUnit::Image,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub reference: String,
    pub options: TableOptions,
    pub rows: Vec<TableRow>,
}

fn protocol_key(r: &EvalReport) -> String {
    match &r.protocol {
        Protocol::CrossValidation {
            plan_fingerprint, ..
        } => format!("cv:{plan_fingerprint}"),
        Protocol::External { checkpoints, .. } => format!("external:{}:{checkpoints}", r.dataset),
    }
}

/// Rows in report order; cells of non-reference rows carry the paired test against `reference`.
pub fn build_comparison_table(
    reports: &[EvalReport],
    reference: &str,
    opts: &TableOptions,
) -> Result<ComparisonTable> {
    let reference_report = reports
        .iter()
        .find(|r| r.label == reference)
        .ok_or_else(|| {
            Error::Stats(format!(
                "reference method '{reference}' is not among the reports"
            ))
        })?;
    let key = protocol_key(reference_report);
    for r in reports {
        if protocol_key(r) != key {
            return Err(Error::Stats(format!(
                "{} was evaluated on a different fold plan from {reference} ({} vs {key}); pairing is impossible",
                r.label,
                protocol_key(r)
            )));
        }
    }
    let mut rows = Vec::with_capacity(reports.len());
    for r in reports {
        let agg = r.aggregate(opts.grouping);
        let mut cells = BTreeMap::new();
        for m in Metric::ALL {
            let test = if r.label == reference {
                None
            } else {
                let series = match opts.pairing {
                    PairingUnit::Image => PairedSeries::from_records(
                        &r.label,
                        &r.records,
                        reference,
                        &reference_report.records,
                        m,
                    )?,
                    PairingUnit::Fold => PairedSeries::from_fold_means(r, reference_report, m)?,
                };
                Some(paired_t_test(&series)?)
            };
            let ms = agg.get(m);
            let significant = test.is_some_and(|t| t.p < opts.alpha);
            cells.insert(
                m,
                TableCell {
                    mean: ms.mean,
                    std: ms.std,
                    test,
                    significant,
                    best: false,
                },
            );
        }
        rows.push(TableRow {
            method: r.label.clone(),
            cells,
            failure_rate: agg.failure_rate,
            images: agg.images,
        });
    }
    for m in Metric::ALL {
        let best = rows
            .iter()
            .map(|r| r.cells[&m].mean)
            .fold(f64::NEG_INFINITY, f64::max);
        for row in &mut rows {
            let c = row.cells.get_mut(&m).expect("every metric filled");
            c.best = (c.mean - best).abs() <= 1e-12;
        }
    }
    Ok(ComparisonTable {
        reference: reference.into(),
        options: opts.clone(),
        rows,
    })
}

/// Percentages with two decimals, e.g. `57.32 ± 3.40`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{:.2} ± {:.2}", 100.0 * mean, 100.0 * std)
}

impl ComparisonTable {
    fn cell_text(&self, c: &TableCell) -> String {
        let mut s = format_mean_std(c.mean, c.std);
        if c.significant {
            s.push('*');
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let titles: Vec<&str> = Metric::ALL.iter().map(|m| m.title()).collect();
        let _ = writeln!(out, "| Method | {} | Failure rate |", titles.join(" | "));
        let _ = writeln!(out, "|---|{}---:|", "---:|".repeat(titles.len()));
        for row in &self.rows {
            let cells: Vec<String> = Metric::ALL
                .iter()
                .map(|m| {
                    let c = &row.cells[m];
                    let text = self.cell_text(c);
                    if c.best {
                        format!("**{text}**")
                    } else {
                        text
                    }
                })
                .collect();
            let _ = writeln!(
                out,
                "| {} | {} | {:.2}% |",
                row.method,
                cells.join(" | "),
                100.0 * row.failure_rate
            );
        }
        let _ = writeln!(
            out,
            "\nmean ± std in %, std over {}; * p < {} (paired t-test per {} vs {}); best in bold.",
            match self.options.grouping {
                Grouping::PerFold => "fold means",
                Grouping::PerImage => "images",
            },
            self.options.alpha,
            self.options.pairing.name(),
            self.reference
        );
        out
    }

    /// Formatted cells first (`Method,Jaccard,...,Dice`), then raw numbers for each metric.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["Method".to_string()];
        header.extend(Metric::ALL.iter().map(|m| m.title().to_string()));
        for m in Metric::ALL {
            header.extend(
                ["mean", "std", "t", "p"]
                    .iter()
                    .map(|s| format!("{}_{s}", m.name())),
            );
        }
        header.push("failure_rate".into());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.method.clone()];
            rec.extend(Metric::ALL.iter().map(|m| self.cell_text(&row.cells[m])));
            for m in Metric::ALL {
                let c = &row.cells[&m];
                rec.push(format!("{:.8}", c.mean));
                rec.push(format!("{:.8}", c.std));
                rec.push(c.test.map_or(String::new(), |t| format!("{:.6}", t.t)));
                rec.push(c.test.map_or(String::new(), |t| format!("{:.6e}", t.p)));
            }
            rec.push(format!("{:.8}", row.failure_rate));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Stats(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv text is utf-8"))
    }
}
