use nunet_core::mask::BinaryMask;
use nunet_core::metrics::{
    aggregate, binarize, evaluate, evaluate_with, is_failure, read_records_csv, write_records_csv,
    Grouping, Metric, MetricRecord, ZeroDivision,
};
use nunet_core::{Shape4, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent restatement: count by set membership, then apply each metric's empty-set rule.
fn oracle(pred: &[Vec<bool>], gt: &[Vec<bool>]) -> [f64; 5] {
    let cells = || pred.iter().flatten().zip(gt.iter().flatten());
    let count =
        |f: &dyn Fn(bool, bool) -> bool| cells().filter(|(p, g)| f(**p, **g)).count() as f64;
    let tp = count(&|p, g| p && g);
    let fp = count(&|p, g| p && !g);
    let fneg = count(&|p, g| !p && g);
    let tn = count(&|p, g| !p && !g);
    let pred_empty = cells().all(|(p, _)| !p);
    let gt_empty = cells().all(|(_, g)| !g);
    let pred_full = cells().all(|(p, _)| *p);
    let gt_full = cells().all(|(_, g)| *g);
    let both = |a: bool, b: bool| if a && b { 1.0 } else { 0.0 };
    let jaccard = if tp + fp + fneg == 0.0 {
        both(pred_empty, gt_empty)
    } else {
        tp / (tp + fp + fneg)
    };
    let precision = if tp + fp == 0.0 {
        both(pred_empty, gt_empty)
    } else {
        tp / (tp + fp)
    };
    let recall = if tp + fneg == 0.0 {
        both(pred_empty, gt_empty)
    } else {
        tp / (tp + fneg)
    };
    let specificity = if tn + fp == 0.0 {
        both(pred_full, gt_full)
    } else {
        tn / (tn + fp)
    };
    let dice = if 2.0 * tp + fp + fneg == 0.0 {
        both(pred_empty, gt_empty)
    } else {
        2.0 * tp / (2.0 * tp + fp + fneg)
    };
    [jaccard, precision, recall, specificity, dice]
}

fn to_mask(g: &[Vec<bool>]) -> BinaryMask {
    BinaryMask::from_fn(g[0].len(), g.len(), |x, y| g[y][x])
}

fn values(r: &MetricRecord) -> [f64; 5] {
    Metric::ALL.map(|m| r.get(m))
}

#[test]
fn two_by_two_example() {
    // foreground coordinates are (row, col)
    let pred = BinaryMask::from_vec(2, 2, vec![1, 1, 0, 0]).unwrap();
    let gt = BinaryMask::from_vec(2, 2, vec![0, 1, 0, 1]).unwrap();
    let r = evaluate(&pred, &gt).unwrap();
    assert_eq!((r.tp, r.fp, r.fn_, r.tn), (1, 1, 1, 1));
    assert_eq!(r.jaccard, 1.0 / 3.0);
    assert_eq!([r.dice, r.precision, r.recall, r.specificity], [0.5; 4]);
}

#[test]
fn identity_and_empty_conventions() {
    let m = BinaryMask::from_fn(5, 5, |x, y| x + y < 4);
    assert_eq!(values(&evaluate(&m, &m).unwrap()), [1.0; 5]);
    let empty = BinaryMask::zeros(5, 5);
    assert_eq!(values(&evaluate(&empty, &empty).unwrap()), [1.0; 5]);
    let full = BinaryMask::from_fn(5, 5, |_, _| true);
    let r = evaluate(&full, &empty).unwrap();
    assert_eq!(values(&r), [0.0; 5]);
    let r = evaluate_with(&empty, &empty, ZeroDivision::Zero).unwrap();
    assert_eq!(r.jaccard, 0.0);
    assert_eq!(r.specificity, 1.0);
    assert!(evaluate(&empty, &BinaryMask::zeros(4, 5)).is_err());
}

#[test]
fn oracle_agrees_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let grid = |rng: &mut ChaCha8Rng, density: f64| -> Vec<Vec<bool>> {
        (0..16)
            .map(|_| (0..16).map(|_| rng.gen_bool(density)).collect())
            .collect()
    };
    let mut pairs = vec![
        (vec![vec![false; 16]; 16], vec![vec![false; 16]; 16]),
        (vec![vec![true; 16]; 16], vec![vec![false; 16]; 16]),
        (vec![vec![false; 16]; 16], vec![vec![true; 16]; 16]),
        (vec![vec![true; 16]; 16], vec![vec![true; 16]; 16]),
    ];
    while pairs.len() < 200 {
        let dp = [0.0, 0.02, 0.3, 0.5, 0.9, 1.0][rng.gen_range(0..6)];
        let dg = [0.0, 0.02, 0.3, 0.5, 0.9, 1.0][rng.gen_range(0..6)];
        pairs.push((grid(&mut rng, dp), grid(&mut rng, dg)));
    }
    for (p, g) in &pairs {
        let r = evaluate(&to_mask(p), &to_mask(g)).unwrap();
        assert_eq!(values(&r), oracle(p, g));
        assert_eq!(r.pixels(), 256);
    }
}

#[test]
fn binarize_is_strict() {
    let t = |v: Vec<f32>| Tensor::from_vec(Shape4::new(1, 1, 1, v.len()), v).unwrap();
    assert_eq!(binarize(&t(vec![0.5; 4]), 0.5).unwrap().area(), 0);
    assert_eq!(binarize(&t(vec![1.0; 4]), 0.5).unwrap().area(), 4);
    assert_eq!(binarize(&t(vec![0.4, 0.6]), 0.5).unwrap().data(), &[0, 1]);
}

fn record(fold: usize, dice: f64, jaccard: f64) -> MetricRecord {
    MetricRecord {
        id: String::new(),
        fold,
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
        jaccard,
        precision: 0.0,
        recall: 0.0,
        specificity: 0.0,
        dice,
    }
}

#[test]
fn failure_floor() {
    assert!(is_failure(&record(0, 0.0, 0.0), 0.05));
    assert!(!is_failure(&record(0, 0.0, 0.5), 0.05));
    assert!(is_failure(&record(0, 0.0, 0.049), 0.05));
}

#[test]
fn aggregation_examples() {
    let a = aggregate(
        &[record(0, 0.4, 0.3), record(0, 0.6, 0.3)],
        Grouping::PerFold,
        0.05,
    )
    .unwrap();
    assert!((a.get(Metric::Dice).mean - 0.5).abs() < 1e-12);
    assert_eq!(a.get(Metric::Dice).std, 0.0);

    let four: Vec<_> = (0..4).map(|f| record(f, 0.7, 0.5)).collect();
    let a = aggregate(&four, Grouping::PerFold, 0.05).unwrap();
    assert!((a.get(Metric::Dice).mean - 0.7).abs() < 1e-12 && a.get(Metric::Dice).std < 1e-12);

    let hundred: Vec<_> = (0..100)
        .map(|i| record(i % 4, 0.5, if i < 2 { 0.01 } else { 0.6 }))
        .collect();
    let a = aggregate(&hundred, Grouping::PerFold, 0.05).unwrap();
    assert_eq!(a.failures, 2);
    assert!((a.failure_rate - 0.02).abs() < 1e-12);

    assert!(aggregate(&[], Grouping::PerFold, 0.05).is_err());
}

#[test]
fn fold_and_image_grouping_differ() {
    // fold 0: {0.2, 0.4} -> 0.3, fold 1: {0.9} -> 0.9
    let rs = [
        record(0, 0.2, 0.1),
        record(0, 0.4, 0.1),
        record(1, 0.9, 0.1),
    ];
    let f = aggregate(&rs, Grouping::PerFold, 0.05)
        .unwrap()
        .get(Metric::Dice);
    assert!((f.mean - 0.6).abs() < 1e-12 && (f.std - 0.3).abs() < 1e-12);
    let i = aggregate(&rs, Grouping::PerImage, 0.05)
        .unwrap()
        .get(Metric::Dice);
    let mean = 1.5 / 3.0;
    let var = ((0.2f64 - mean).powi(2) + (0.4f64 - mean).powi(2) + (0.9f64 - mean).powi(2)) / 3.0;
    assert!((i.mean - mean).abs() < 1e-12 && (i.std - var.sqrt()).abs() < 1e-12);
}

#[test]
fn csv_roundtrip_and_columns() {
    let pred = BinaryMask::from_vec(2, 2, vec![1, 1, 0, 0]).unwrap();
    let gt = BinaryMask::from_vec(2, 2, vec![0, 1, 0, 1]).unwrap();
    let rs = vec![
        evaluate(&pred, &gt).unwrap().with_id("a", 0),
        evaluate(&pred, &BinaryMask::zeros(2, 2))
            .unwrap()
            .with_id("b", 1),
    ];
    let mut buf = Vec::new();
    write_records_csv(&rs, 0.05, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "id,fold,tp,fp,fn,tn,jaccard,precision,recall,specificity,dice,failure"
    );
    assert!(text.lines().nth(2).unwrap().ends_with(",1"));
    let back = read_records_csv(buf.as_slice()).unwrap();
    assert_eq!(back[0].id, "a");
    assert!((back[0].jaccard - 1.0 / 3.0).abs() < 1e-8);
    assert_eq!(back[1].fold, 1);
}

fn arb_pair() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (1usize..80).prop_flat_map(|n| {
        (
            prop::collection::vec(0u8..2, n),
            prop::collection::vec(0u8..2, n),
        )
    })
}

proptest! {
    #[test]
    fn metric_properties((p, g) in arb_pair()) {
        let n = p.len();
        let pm = BinaryMask::from_vec(n, 1, p).unwrap();
        let gm = BinaryMask::from_vec(n, 1, g).unwrap();
        let a = evaluate(&pm, &gm).unwrap();
        let b = evaluate(&gm, &pm).unwrap();
        prop_assert_eq!(a.dice, b.dice);
        prop_assert_eq!(a.jaccard, b.jaccard);
        prop_assert_eq!(a.precision, b.recall);
        prop_assert!((a.dice - 2.0 * a.jaccard / (1.0 + a.jaccard)).abs() < 1e-12);
        for v in values(&a) {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(a.pixels(), n as u64);
    }
}
