//! Parameter and FLOP tables for the ablation ladder, with deltas against the published
//! reference figures.

use std::fmt::Write as _;

use super::graph::{count_flops, count_params};
use super::variants::{VariantRegistry, VariantSettings};
use crate::error::Result;
use crate::tensor::Shape4;

/// Published complexity figures for one ablation row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceRow {
    pub variant: &'static str,
    pub params_m: f64,
    pub param_multiple: Option<f64>,
    pub gflops: f64,
    pub flop_multiple: Option<f64>,
}

pub const REFERENCE: [ReferenceRow; 4] = [
    ReferenceRow {
        variant: "unet",
        params_m: 7.85,
        param_multiple: None,
        gflops: 62.82,
        flop_multiple: None,
    },
    ReferenceRow {
        variant: "deeper",
        params_m: 46.88,
        param_multiple: Some(5.97),
        gflops: 140.83,
        flop_multiple: Some(2.24),
    },
    ReferenceRow {
        variant: "deeper_mou",
        params_m: 76.67,
        param_multiple: Some(9.77),
        gflops: 179.12,
        flop_multiple: Some(2.85),
    },
    ReferenceRow {
        variant: "deeper_mou_mdsc",
        params_m: 77.05,
        param_multiple: Some(9.82),
        gflops: 180.29,
        flop_multiple: Some(2.87),
    },
];

pub fn reference(variant: &str) -> Option<&'static ReferenceRow> {
    REFERENCE.iter().find(|r| r.variant == variant)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityRow {
    pub variant: String,
    pub params: usize,
    /// Relative to the `unet` row.
    pub param_multiple: Option<f64>,
    /// Multiply-accumulates for one image at the report's input size.
    pub macs: u64,
    pub flop_multiple: Option<f64>,
}

impl ComplexityRow {
    pub fn params_m(&self) -> f64 {
        self.params as f64 / 1e6
    }

    pub fn gmacs(&self) -> f64 {
        self.macs as f64 / 1e9
    }
}

/// Builds each variant and measures it at `input_size`². Multiples are relative to `unet`
/// (built on the side when not requested).
pub fn complexity_table(
    registry: &VariantRegistry,
    variants: &[&str],
    settings: &VariantSettings,
    input_size: usize,
) -> Result<Vec<ComplexityRow>> {
    let measure = |name: &str| -> Result<(usize, u64)> {
        let model = registry.build(name, settings)?;
        let in_ch = model.config().backbone.in_channels;
        let macs = count_flops(&model, Shape4::new(1, in_ch, input_size, input_size))?;
        Ok((count_params(&model), macs))
    };
    let mut measured = Vec::with_capacity(variants.len());
    for name in variants {
        measured.push((name.to_string(), measure(name)?));
    }
    let baseline = match measured.iter().find(|(n, _)| n == "unet") {
        Some((_, m)) => Some(*m),
        None if registry.names().contains(&"unet") => Some(measure("unet")?),
        None => None,
    };
    Ok(measured
        .into_iter()
        .map(|(variant, (params, macs))| {
            let is_base = variant == "unet";
            let (param_multiple, flop_multiple) = match baseline {
                Some((bp, bm)) if !is_base => (
                    Some(params as f64 / bp as f64),
                    Some(macs as f64 / bm as f64),
                ),
                _ => (None, None),
            };
            ComplexityRow {
                variant,
                params,
                param_multiple,
                macs,
                flop_multiple,
            }
        })
        .collect())
}

fn fmt_multiple(m: Option<f64>) -> String {
    m.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

/// Plain-text calibration report: measured table plus deltas against the reference.
pub fn calibration_report(rows: &[ComplexityRow], input_size: usize, header: &str) -> String {
    let mut out = String::new();
    for line in header.lines() {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(
        out,
        "# input {input_size}x{input_size}, FLOPs counted as multiply-accumulates of conv layers"
    );
    let _ = writeln!(
        out,
        "{:<18} {:>10} {:>8} {:>10} {:>8} | {:>10} {:>9} {:>9} {:>10}",
        "variant",
        "params(M)",
        "mult",
        "GMACs",
        "mult",
        "ref(M)",
        "dParams",
        "refMult",
        "dFlopMult"
    );
    for r in rows {
        let reference = reference(&r.variant);
        let (ref_p, d_p, ref_fm, d_fm) = match reference {
            Some(refr) => (
                format!("{:.2}", refr.params_m),
                format!("{:+.2}%", (r.params_m() / refr.params_m - 1.0) * 100.0),
                fmt_multiple(refr.flop_multiple),
                match (r.flop_multiple, refr.flop_multiple) {
                    (Some(a), Some(b)) => format!("{:+.1}%", (a / b - 1.0) * 100.0),
                    _ => "-".to_string(),
                },
            ),
            None => ("-".into(), "-".into(), "-".into(), "-".into()),
        };
        let _ = writeln!(
            out,
            "{:<18} {:>10.3} {:>8} {:>10.3} {:>8} | {:>10} {:>9} {:>9} {:>10}",
            r.variant,
            r.params_m(),
            fmt_multiple(r.param_multiple),
            r.gmacs(),
            fmt_multiple(r.flop_multiple),
            ref_p,
            d_p,
            ref_fm,
            d_fm
        );
    }
    out
}

/// CSV form of the table (`variant,params,param_multiple,macs,flop_multiple`).
pub fn complexity_csv(rows: &[ComplexityRow], header: &str) -> String {
    let mut out = String::new();
    for line in header.lines() {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("variant,params,params_m,param_multiple,macs,gmacs,flop_multiple\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.4},{},{},{:.4},{}",
            r.variant,
            r.params,
            r.params_m(),
            fmt_multiple(r.param_multiple),
            r.macs,
            r.gmacs(),
            fmt_multiple(r.flop_multiple)
        );
    }
    out
}
