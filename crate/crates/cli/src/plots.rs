use std::path::Path;
use std::sync::OnceLock;

use anyhow::{anyhow, Result};
use image::{GrayImage, Rgb, RgbImage};
use plotters::prelude::*;
use plotters::style::text_anchor::{HPos, Pos, VPos};
use plotters::style::{register_font, FontStyle};

use nunet_core::mask::BinaryMask;

const FONT_CANDIDATES: [&str; 4] = [
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/TTF/DejaVuSans.ttf",
    "/Library/Fonts/Arial.ttf",
];

/// Registers a system font once; charts are drawn without text when none is found.
fn have_font() -> bool {
    static FOUND: OnceLock<bool> = OnceLock::new();
    *FOUND.get_or_init(|| {
        for p in FONT_CANDIDATES {
            if let Ok(bytes) = std::fs::read(p) {
                let bytes: &'static [u8] = Box::leak(bytes.into_boxed_slice());
                if register_font("sans-serif", FontStyle::Normal, bytes).is_ok() {
                    return true;
                }
            }
        }
        log::warn!("no usable font found; charts will have no text");
        false
    })
}

fn plot_err(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow!("plotting failed: {e}")
}

/// Bar chart of failure rates in percent.
pub fn failure_rate_chart(path: &Path, bars: &[(String, f64)], floor: f64) -> Result<()> {
    let text = have_font();
    let root =
        BitMapBackend::new(path, (210 * bars.len().max(2) as u32 + 120, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let top = bars.iter().map(|b| b.1).fold(0.0f64, f64::max).max(1.0) * 1.2;
    // integer ranges are inclusive here
    let last = bars.len().saturating_sub(1) as u32;
    let mut builder = ChartBuilder::on(&root);
    builder.margin(20);
    if text {
        builder
            .caption(
                format!("Failure rate (Jaccard < {floor})"),
                ("sans-serif", 22),
            )
            .x_label_area_size(50)
            .y_label_area_size(60);
    }
    let mut chart = builder
        .build_cartesian_2d((0u32..last).into_segmented(), 0f64..top)
        .map_err(plot_err)?;
    if text {
        chart
            .configure_mesh()
            .disable_x_mesh()
            .x_labels(bars.len())
            .x_label_formatter(&|v| match v {
                SegmentValue::CenterOf(i) => bars
                    .get(*i as usize)
                    .map(|b| b.0.clone())
                    .unwrap_or_default(),
                _ => String::new(),
            })
            .y_desc("failure rate (%)")
            .draw()
            .map_err(plot_err)?;
    }
    chart
        .draw_series(
            Histogram::vertical(&chart)
                .style(RGBColor(70, 110, 170).filled())
                .margin(12)
                .data(bars.iter().enumerate().map(|(i, b)| (i as u32, b.1))),
        )
        .map_err(plot_err)?;
    if text {
        chart
            .draw_series(bars.iter().enumerate().map(|(i, b)| {
                let style = TextStyle::from(("sans-serif", 16).into_font())
                    .pos(Pos::new(HPos::Center, VPos::Bottom));
                Text::new(
                    format!("{:.1}%", b.1),
                    (SegmentValue::CenterOf(i as u32), b.1 + top * 0.01),
                    style,
                )
            }))
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}

/// One line per named series over the depth axis; values in percent.
pub fn depth_sweep_chart(path: &Path, depths: &[usize], series: &[(&str, Vec<f64>)]) -> Result<()> {
    let text = have_font();
    let root = BitMapBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let lo = *depths.iter().min().unwrap_or(&0) as f64 - 1.0;
    let hi = *depths.iter().max().unwrap_or(&0) as f64 + 1.0;
    let vals = series.iter().flat_map(|s| s.1.iter().copied());
    let (ymin, ymax) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let pad = ((ymax - ymin) * 0.15).max(1.0);
    let mut builder = ChartBuilder::on(&root);
    builder.margin(20);
    if text {
        builder
            .caption("Effect of backbone depth", ("sans-serif", 22))
            .x_label_area_size(45)
            .y_label_area_size(55);
    }
    let mut chart = builder
        .build_cartesian_2d(lo..hi, (ymin - pad).max(0.0)..(ymax + pad).min(100.0))
        .map_err(plot_err)?;
    if text {
        chart
            .configure_mesh()
            .x_desc("depth")
            .y_desc("%")
            .x_labels(depths.len() + 2)
            .x_label_formatter(&|v| format!("{v:.0}"))
            .draw()
            .map_err(plot_err)?;
    }
    let palette = [
        RGBColor(200, 60, 50),
        RGBColor(50, 110, 190),
        RGBColor(60, 150, 80),
        RGBColor(150, 90, 170),
    ];
    for (k, (name, values)) in series.iter().enumerate() {
        let color = palette[k % palette.len()];
        let points: Vec<(f64, f64)> = depths
            .iter()
            .map(|&d| d as f64)
            .zip(values.iter().copied())
            .collect();
        let drawn = chart
            .draw_series(LineSeries::new(points.clone(), color.stroke_width(2)))
            .map_err(plot_err)?;
        if text {
            drawn.label(*name).legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2))
            });
        }
        chart
            .draw_series(
                points
                    .into_iter()
                    .map(|p| Circle::new(p, 4, color.filled())),
            )
            .map_err(plot_err)?;
    }
    if text {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .label_font(("sans-serif", 16))
            .draw()
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}

pub const GT_ONLY: Rgb<u8> = Rgb([0, 220, 0]);
pub const PRED_ONLY: Rgb<u8> = Rgb([230, 30, 30]);
pub const BOTH: Rgb<u8> = Rgb([255, 230, 0]);

/// Grayscale input with the ground-truth contour in green, the predicted contour in red and
/// shared contour pixels in yellow.
pub fn overlay(image: &GrayImage, gt: &BinaryMask, pred: &BinaryMask) -> Result<RgbImage> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if (gt.width(), gt.height()) != (w, h) || !gt.same_size(pred) {
        return Err(anyhow!(
            "overlay sizes differ: image {w}x{h}, ground truth {}x{}, prediction {}x{}",
            gt.width(),
            gt.height(),
            pred.width(),
            pred.height()
        ));
    }
    let gc = gt.contour();
    let pc = pred.contour();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (xu, yu) = (x as usize, y as usize);
        match (gc.get(xu, yu), pc.get(xu, yu)) {
            (true, true) => BOTH,
            (true, false) => GT_ONLY,
            (false, true) => PRED_ONLY,
            _ => {
                let v = image.get_pixel(x, y).0[0];
                Rgb([v, v, v])
            }
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_masks_give_coincident_contours() {
        let img = GrayImage::from_pixel(12, 12, image::Luma([90]));
        let m = BinaryMask::from_fn(12, 12, |x, y| (3..9).contains(&x) && (2..8).contains(&y));
        let o = overlay(&img, &m, &m).unwrap();
        let count = |c: Rgb<u8>| o.pixels().filter(|p| **p == c).count();
        assert_eq!(count(GT_ONLY), 0);
        assert_eq!(count(PRED_ONLY), 0);
        assert_eq!(count(BOTH), m.contour().area());
    }

    #[test]
    fn disjoint_masks_give_separate_contours() {
        let img = GrayImage::from_pixel(12, 12, image::Luma([90]));
        let a = BinaryMask::from_fn(12, 12, |x, y| x < 4 && y < 4);
        let b = BinaryMask::from_fn(12, 12, |x, y| x > 7 && y > 7);
        let o = overlay(&img, &a, &b).unwrap();
        assert!(o.pixels().any(|p| *p == GT_ONLY));
        assert!(o.pixels().any(|p| *p == PRED_ONLY));
        assert!(!o.pixels().any(|p| *p == BOTH));
    }

    #[test]
    fn charts_render() {
        let dir = tempfile::TempDir::new().unwrap();
        let bars = dir.path().join("bars.png");
        failure_rate_chart(
            &bars,
            &[("U-net".into(), 2.0), ("NU-net".into(), 0.5)],
            0.05,
        )
        .unwrap();
        assert!(image::open(&bars).is_ok());
        let lines = dir.path().join("lines.png");
        depth_sweep_chart(
            &lines,
            &[9, 11, 13],
            &[
                ("Dice", vec![70.0, 74.0, 76.5]),
                ("Jaccard", vec![58.0, 62.0, 65.0]),
            ],
        )
        .unwrap();
        assert!(image::open(&lines).is_ok());
    }
}
