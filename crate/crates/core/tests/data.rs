use std::collections::HashSet;
use std::path::Path;

use image::{GrayImage, Luma};
use nunet_core::data::{
    ingest_busi, ingest_flat, make_folds, merge_masks, preprocess, synth, ClassLabel,
    DatasetManifest, FoldPlan, IngestOptions, IngesterRegistry, Sample,
};
use nunet_core::mask::BinaryMask;
use proptest::prelude::*;
use tempfile::TempDir;

fn write_mask(path: &Path, mask: &BinaryMask) {
    GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        Luma([if mask.get(x as usize, y as usize) {
            255
        } else {
            0
        }])
    })
    .save(path)
    .unwrap();
}

fn write_gray(path: &Path, w: u32, h: u32) {
    GrayImage::from_fn(w, h, |x, y| Luma([((x * 7 + y * 13) % 256) as u8]))
        .save(path)
        .unwrap();
}

fn busi_corpus(benign: usize, malignant: usize, normal: usize) -> TempDir {
    let dir = TempDir::new().unwrap();
    synth::write_busi_like(
        dir.path(),
        &[
            (ClassLabel::Benign, benign),
            (ClassLabel::Malignant, malignant),
            (ClassLabel::Normal, normal),
        ],
        4,
        1,
    )
    .unwrap();
    dir
}

#[test]
fn busi_class_counts_with_and_without_normals() {
    let dir = busi_corpus(437, 210, 133);
    let m = ingest_busi(dir.path(), false).unwrap();
    assert_eq!(m.len(), 647);
    let counts = m.class_counts();
    assert_eq!(counts[&ClassLabel::Benign], 437);
    assert_eq!(counts[&ClassLabel::Malignant], 210);
    assert!(!counts.contains_key(&ClassLabel::Normal));

    let all = ingest_busi(dir.path(), true).unwrap();
    assert_eq!(all.len(), 780);
    assert!(all.include_normal);
}

#[test]
fn busi_pairs_every_mask_file() {
    let dir = busi_corpus(6, 3, 0);
    let m = ingest_busi(dir.path(), false).unwrap();
    let s = m.get("benign/benign (3)").unwrap();
    assert_eq!(s.mask_paths.len(), 2);
    assert!(m.get("benign/benign (1)").unwrap().mask_paths.len() == 1);
}

#[test]
fn busi_image_without_mask_names_file() {
    let dir = TempDir::new().unwrap();
    let benign = dir.path().join("benign");
    std::fs::create_dir(&benign).unwrap();
    write_gray(&benign.join("lonely.png"), 4, 4);
    let err = ingest_busi(dir.path(), false).unwrap_err().to_string();
    assert!(err.contains("lonely.png"), "{err}");
}

#[test]
fn busi_unreadable_file_errors() {
    let dir = TempDir::new().unwrap();
    let benign = dir.path().join("benign");
    std::fs::create_dir(&benign).unwrap();
    std::fs::write(benign.join("broken.png"), b"not a png").unwrap();
    std::fs::write(benign.join("broken_mask.png"), b"not a png").unwrap();
    assert!(ingest_busi(dir.path(), false).is_err());
}

#[test]
fn empty_directory_gives_empty_manifest_and_warning() {
    let dir = TempDir::new().unwrap();
    let m = ingest_busi(dir.path(), false).unwrap();
    assert!(m.is_empty());
    assert_eq!(m.warnings.len(), 1);
    let f = ingest_flat(dir.path(), &IngestOptions::default()).unwrap();
    assert!(f.is_empty() && !f.warnings.is_empty());
}

#[test]
fn flat_layout_counts() {
    for n in [163, 42] {
        let dir = TempDir::new().unwrap();
        synth::write_flat(dir.path(), n, 4, 2).unwrap();
        let m = ingest_flat(dir.path(), &IngestOptions::default()).unwrap();
        assert_eq!(m.len(), n);
        assert!(m.samples.iter().all(|s| s.class == ClassLabel::Unlabeled));
    }
}

#[test]
fn flat_custom_directories_and_class_file() {
    let dir = TempDir::new().unwrap();
    for d in ["original", "GT"] {
        std::fs::create_dir(dir.path().join(d)).unwrap();
    }
    for name in ["000001", "000002"] {
        write_gray(
            &dir.path().join("original").join(format!("{name}.png")),
            4,
            4,
        );
        write_mask(
            &dir.path().join("GT").join(format!("{name}.png")),
            &BinaryMask::zeros(4, 4),
        );
    }
    std::fs::write(
        dir.path().join("classes.csv"),
        "id,class\n000001,benign\n000002,malignant\n",
    )
    .unwrap();
    let opts = IngestOptions {
        image_dir: "original".into(),
        mask_dir: "GT".into(),
        class_file: Some(dir.path().join("classes.csv")),
        source: Some("datasetb".into()),
        ..IngestOptions::default()
    };
    let m = ingest_flat(dir.path(), &opts).unwrap();
    assert_eq!(m.get("000002").unwrap().class, ClassLabel::Malignant);
    assert_eq!(m.samples[0].source, "datasetb");
}

#[test]
fn flat_suffix_convention_and_orphans() {
    let dir = TempDir::new().unwrap();
    write_gray(&dir.path().join("a.png"), 4, 4);
    write_mask(&dir.path().join("a_mask.png"), &BinaryMask::zeros(4, 4));
    assert_eq!(
        ingest_flat(dir.path(), &IngestOptions::default())
            .unwrap()
            .len(),
        1
    );

    write_gray(&dir.path().join("orphan.png"), 4, 4);
    let err = ingest_flat(dir.path(), &IngestOptions::default())
        .unwrap_err()
        .to_string();
    assert!(err.contains("orphan.png"), "{err}");
}

#[test]
fn registry_selects_by_name() {
    let reg = IngesterRegistry::with_defaults();
    assert_eq!(reg.names(), vec!["busi", "flat"]);
    let dir = busi_corpus(2, 2, 1);
    let m = reg
        .get("busi")
        .unwrap()
        .ingest(dir.path(), &IngestOptions::default())
        .unwrap();
    assert_eq!(m.len(), 4);
    assert!(reg.get("dicom").err().unwrap().to_string().contains("busi"));
}

#[test]
fn merge_single_disjoint_and_nested() {
    let dir = TempDir::new().unwrap();
    let p = |n: &str| dir.path().join(n);
    let a = BinaryMask::from_fn(8, 8, |x, _| x < 2);
    let b = BinaryMask::from_fn(8, 8, |x, _| x >= 6);
    let inner = BinaryMask::from_fn(8, 8, |x, y| (2..4).contains(&x) && (2..4).contains(&y));
    let outer = BinaryMask::from_fn(8, 8, |x, y| (1..6).contains(&x) && (1..6).contains(&y));
    for (n, m) in [
        ("a.png", &a),
        ("b.png", &b),
        ("in.png", &inner),
        ("out.png", &outer),
    ] {
        write_mask(&p(n), m);
    }
    assert_eq!(merge_masks(&[p("a.png")]).unwrap(), a);
    let u = merge_masks(&[p("a.png"), p("b.png")]).unwrap();
    assert_eq!(u.area(), a.area() + b.area());
    assert_eq!(merge_masks(&[p("in.png"), p("out.png")]).unwrap(), outer);

    write_mask(&p("small.png"), &BinaryMask::zeros(4, 4));
    assert!(merge_masks(&[p("a.png"), p("small.png")]).is_err());
}

#[test]
fn preprocess_shapes_and_ranges() {
    let dir = TempDir::new().unwrap();
    let img = dir.path().join("img.png");
    image::RgbImage::from_fn(500, 500, |x, y| {
        image::Rgb([(x % 256) as u8, (y % 256) as u8, 200])
    })
    .save(&img)
    .unwrap();
    let mask = dir.path().join("img_mask.png");
    write_mask(&mask, &BinaryMask::zeros(500, 500));
    let sample = Sample {
        id: "img".into(),
        image_path: img,
        mask_paths: vec![mask],
        class: ClassLabel::Benign,
        source: "t".into(),
    };
    let p = preprocess(&sample, 256, 128).unwrap();
    let s = p.input.shape();
    assert_eq!((s.n, s.c, s.h, s.w), (1, 1, 256, 256));
    let (lo, hi) = p.input.min_max();
    assert!(lo >= 0.0 && hi <= 1.0);
    assert_eq!(p.target.area(), 0);
    let err = preprocess(&sample, 200, 128).unwrap_err().to_string();
    assert!(err.contains("128"), "{err}");
}

#[test]
fn preprocessed_targets_are_binary_for_corpus() {
    let dir = busi_corpus(4, 4, 2);
    let m = ingest_busi(dir.path(), true).unwrap();
    for s in &m.samples {
        let p = preprocess(s, 32, 8).unwrap();
        assert!(p.target.data().iter().all(|&v| v <= 1));
        let t = p.target.to_tensor();
        assert!(t.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }
}

fn synthetic_manifest(benign: usize, malignant: usize) -> DatasetManifest {
    let mk = |i: usize, class: ClassLabel| Sample {
        id: format!("{class}/{i}"),
        image_path: format!("{i}.png").into(),
        mask_paths: vec![format!("{i}_mask.png").into()],
        class,
        source: "busi".into(),
    };
    let samples = (0..benign)
        .map(|i| mk(i, ClassLabel::Benign))
        .chain((0..malignant).map(|i| mk(i, ClassLabel::Malignant)))
        .collect();
    DatasetManifest::new(samples, false).unwrap()
}

#[test]
fn fold_sizes_match_class_splits() {
    let m = synthetic_manifest(437, 210);
    let mut benign = make_folds(&m, 4, 0, Some(ClassLabel::Benign))
        .unwrap()
        .sizes();
    benign.sort_unstable_by(|a, b| b.cmp(a));
    assert_eq!(benign, vec![110, 109, 109, 109]);
    assert_eq!(
        make_folds(&m, 3, 0, Some(ClassLabel::Malignant))
            .unwrap()
            .sizes(),
        vec![70, 70, 70]
    );
    assert_eq!(make_folds(&m, 4, 0, None).unwrap().len(), 647);
}

#[test]
fn fold_plans_are_byte_identical_and_roundtrip() {
    let m = synthetic_manifest(50, 20);
    let a = make_folds(&m, 4, 7, None).unwrap();
    let b = make_folds(&m, 4, 7, None).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    assert_ne!(a.to_text(), make_folds(&m, 4, 8, None).unwrap().to_text());
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("folds.tsv");
    a.save(&path).unwrap();
    assert_eq!(FoldPlan::load(&path).unwrap(), a);
    a.check_leakage().unwrap();
}

#[test]
fn too_few_samples_for_folds() {
    let m = synthetic_manifest(3, 0);
    assert!(make_folds(&m, 4, 0, None).is_err());
    assert!(make_folds(&m, 1, 0, None).is_err());
}

#[test]
fn manifest_file_roundtrip() {
    let dir = busi_corpus(3, 2, 1);
    let m = ingest_busi(dir.path(), true).unwrap();
    let path = dir.path().join("manifest.tsv");
    m.save(&path).unwrap();
    assert_eq!(DatasetManifest::load(&path).unwrap(), m);
}

proptest! {
    #[test]
    fn folds_partition_exactly(n in 2usize..120, k in 2usize..9, seed: u64) {
        prop_assume!(n >= k);
        let m = synthetic_manifest(n, 0);
        let plan = make_folds(&m, k, seed, None).unwrap();
        let ids: HashSet<&str> = plan.assignment.iter().map(|(i, _)| i.as_str()).collect();
        prop_assert_eq!(ids.len(), n);
        let sizes = plan.sizes();
        prop_assert!(sizes.iter().all(|&s| s > 0));
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in 0..k {
            let test: HashSet<&str> = plan.test_ids(f).into_iter().collect();
            prop_assert!(plan.train_ids(f).iter().all(|i| !test.contains(i)));
            prop_assert_eq!(test.len() + plan.train_ids(f).len(), n);
        }
    }

    #[test]
    fn union_area_dominates_each_mask(
        a in prop::collection::vec(0u8..2, 36),
        b in prop::collection::vec(0u8..2, 36),
    ) {
        let ma = BinaryMask::from_vec(6, 6, a).unwrap();
        let mb = BinaryMask::from_vec(6, 6, b).unwrap();
        let u = BinaryMask::union(&[ma.clone(), mb.clone()]).unwrap();
        prop_assert!(u.area() >= ma.area().max(mb.area()));
        prop_assert!(u.area() <= ma.area() + mb.area());
    }
}
