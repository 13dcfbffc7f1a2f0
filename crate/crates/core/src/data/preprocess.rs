use std::path::Path;

use image::imageops::FilterType;
use image::GrayImage;

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::tensor::{Shape4, Tensor};

use super::manifest::Sample;

pub const DEFAULT_INPUT_SIZE: usize = 256;

/// Decodes any supported format and converts to 8-bit luminance.
pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.into_luma8())
}

/// Foreground is any pixel with luminance ≥ 128.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let g = load_gray(path)?;
    let (w, h) = g.dimensions();
    BinaryMask::from_vec(
        w as usize,
        h as usize,
        g.into_raw()
            .into_iter()
            .map(|v| u8::from(v >= 128))
            .collect(),
    )
}

/// Pixelwise union of every mask file.
pub fn merge_masks(paths: &[impl AsRef<Path>]) -> Result<BinaryMask> {
    if paths.is_empty() {
        return Err(Error::Data("cannot merge an empty list of masks".into()));
    }
    let masks = paths
        .iter()
        .map(|p| load_mask(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    BinaryMask::union(&masks).map_err(|e| {
        Error::shape(format!(
            "{e} (masks: {})",
            paths
                .iter()
                .map(|p| p.as_ref().display().to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ))
    })
}

/// Bilinear resize to `size`×`size`, scaled into [0, 1].
pub fn resize_image(img: &GrayImage, size: usize) -> Vec<f32> {
    let resized = if img.dimensions() == (size as u32, size as u32) {
        img.clone()
    } else {
        image::imageops::resize(img, size as u32, size as u32, FilterType::Triangle)
    };
    resized
        .into_raw()
        .into_iter()
        .map(|v| v as f32 / 255.0)
        .collect()
}

pub fn check_input_size(size: usize, divisor: usize) -> Result<()> {
    if size == 0 || !size.is_multiple_of(divisor) {
        return Err(Error::config(format!(
            "input size {size} is not divisible by {divisor}; the model needs inputs divisible by {divisor}"
        )));
    }
    Ok(())
}

/// Model-ready pair: `(1, 1, S, S)` intensities and an `S`×`S` binary target.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub id: String,
    pub input: Tensor,
    pub target: BinaryMask,
}

pub fn preprocess(sample: &Sample, target_size: usize, divisor: usize) -> Result<Prepared> {
    check_input_size(target_size, divisor)?;
    let img = load_gray(&sample.image_path)?;
    let mask = merge_masks(&sample.mask_paths)?;
    if (mask.width(), mask.height()) != (img.width() as usize, img.height() as usize) {
        return Err(Error::shape(format!(
            "sample '{}': mask is {}x{} but image is {}x{}",
            sample.id,
            mask.width(),
            mask.height(),
            img.width(),
            img.height()
        )));
    }
    let input = Tensor::from_vec(
        Shape4::new(1, 1, target_size, target_size),
        resize_image(&img, target_size),
    )?;
    let target = mask.resize_nearest(target_size, target_size);
    Ok(Prepared {
        id: sample.id.clone(),
        input,
        target,
    })
}

/// Preprocesses every sample, keeping manifest order.
pub fn preprocess_all<'a>(
    samples: impl IntoIterator<Item = &'a Sample>,
    target_size: usize,
    divisor: usize,
) -> Result<Vec<Prepared>> {
    samples
        .into_iter()
        .map(|s| preprocess(s, target_size, divisor))
        .collect()
}

impl Prepared {
    /// Mirror image and target left to right.
    pub fn flipped(&self) -> Prepared {
        let s = self.input.shape();
        let src = self.input.data();
        let mut data = vec![0.0; src.len()];
        for y in 0..s.h {
            for x in 0..s.w {
                data[y * s.w + x] = src[y * s.w + (s.w - 1 - x)];
            }
        }
        Prepared {
            id: self.id.clone(),
            input: Tensor::from_vec(s, data).expect("same shape"),
            target: self.target.flip_horizontal(),
        }
    }
}
