//! Synthetic ultrasound-like corpora for smoke tests and toy protocol runs.

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

use super::manifest::ClassLabel;

/// Speckled background with one dark elliptical lesion; malignant lesions get a ragged border.
pub fn lesion_pair(size: usize, class: ClassLabel, rng: &mut impl Rng) -> (GrayImage, BinaryMask) {
    let s = size as f32;
    let cx = rng.gen_range(0.35..0.65) * s;
    let cy = rng.gen_range(0.35..0.65) * s;
    let rx = rng.gen_range(0.12..0.25) * s;
    let ry = rng.gen_range(0.10..0.22) * s;
    let ragged = if class == ClassLabel::Malignant {
        0.25
    } else {
        0.0
    };
    let phase: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
    let has_lesion = class != ClassLabel::Normal;
    let mask = BinaryMask::from_fn(size, size, |x, y| {
        if !has_lesion {
            return false;
        }
        let dx = (x as f32 + 0.5 - cx) / rx;
        let dy = (y as f32 + 0.5 - cy) / ry;
        let angle = dy.atan2(dx);
        let radius = 1.0 + ragged * (5.0 * angle + phase).sin();
        dx * dx + dy * dy <= radius * radius
    });
    let noise = Normal::new(0.0f32, 18.0).expect("valid std");
    let mut img = GrayImage::new(size as u32, size as u32);
    for y in 0..size {
        for x in 0..size {
            let base = if mask.get(x, y) {
                55.0
            } else {
                150.0 + 30.0 * (y as f32 / s)
            };
            let v = (base + noise.sample(rng)).clamp(0.0, 255.0);
            img.put_pixel(x as u32, y as u32, Luma([v as u8]));
        }
    }
    (img, mask)
}

fn mask_image(mask: &BinaryMask) -> GrayImage {
    GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if mask.get(x as usize, y as usize) {
            255
        } else {
            0
        }])
    })
}

fn save(img: &GrayImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn split_in_two(mask: &BinaryMask) -> (BinaryMask, BinaryMask) {
    let mid = mask.width() / 2;
    let left = BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        x < mid && mask.get(x, y)
    });
    let right = BinaryMask::from_fn(mask.width(), mask.height(), |x, y| {
        x >= mid && mask.get(x, y)
    });
    (left, right)
}

/// Writes a class-subdirectory corpus: `<root>/<class>/<class> (i).png` with `_mask` companions.
/// Every third lesion is split across two mask files.
pub fn write_busi_like(
    root: &Path,
    counts: &[(ClassLabel, usize)],
    size: usize,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut written = Vec::new();
    for &(class, n) in counts {
        let dir = root.join(class.as_str());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for i in 1..=n {
            let (img, mask) = lesion_pair(size, class, &mut rng);
            let stem = format!("{class} ({i})");
            let path = dir.join(format!("{stem}.png"));
            save(&img, &path)?;
            if i % 3 == 0 && class != ClassLabel::Normal {
                let (a, b) = split_in_two(&mask);
                save(&mask_image(&a), &dir.join(format!("{stem}_mask.png")))?;
                save(&mask_image(&b), &dir.join(format!("{stem}_mask_1.png")))?;
            } else {
                save(&mask_image(&mask), &dir.join(format!("{stem}_mask.png")))?;
            }
            written.push(path);
        }
    }
    Ok(written)
}

/// Writes `<root>/images/case_i.png` and `<root>/masks/case_i.png`.
pub fn write_flat(root: &Path, n: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = root.join("images");
    let masks = root.join("masks");
    for d in [&images, &masks] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut written = Vec::new();
    for i in 0..n {
        let class = if i % 3 == 2 {
            ClassLabel::Malignant
        } else {
            ClassLabel::Benign
        };
        let (img, mask) = lesion_pair(size, class, &mut rng);
        let name = format!("case_{i:03}.png");
        save(&img, &images.join(&name))?;
        save(&mask_image(&mask), &masks.join(&name))?;
        written.push(images.join(name));
    }
    Ok(written)
}
