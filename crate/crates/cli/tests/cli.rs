use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nunet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nunet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = nunet(args);
    assert!(
        out.status.success(),
        "nunet {} failed:\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

/// 16-image two-class corpus.
fn toy(dir: &Path) -> PathBuf {
    let root = dir.join("toy");
    ok(&[
        "make-toy",
        "--out",
        s(&root),
        "--count",
        "16",
        "--size",
        "32",
    ]);
    root
}

const SMALL: [&str; 8] = [
    "--base-width",
    "4",
    "--cap",
    "16",
    "--epochs",
    "1",
    "--batch-size",
    "4",
];

#[test]
fn prepare_is_deterministic_and_prints_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let root = toy(tmp.path());
    let runs = tmp.path().join("runs");
    let out = ok(&[
        "prepare",
        "--data-root",
        s(&root),
        "--out",
        s(&runs),
        "--name",
        "a",
    ]);
    assert!(out.contains("16 samples (8 benign, 8 malignant)"), "{out}");
    ok(&[
        "prepare",
        "--data-root",
        s(&root),
        "--out",
        s(&runs),
        "--name",
        "b",
    ]);
    for f in ["manifest.tsv", "folds.tsv", "summary.txt"] {
        assert_eq!(
            read(runs.join("a").join(f)),
            read(runs.join("b").join(f)),
            "{f}"
        );
    }
    ok(&[
        "prepare",
        "--data-root",
        s(&root),
        "--out",
        s(&runs),
        "--name",
        "c",
        "--seed",
        "1",
    ]);
    assert_ne!(
        read(runs.join("a/folds.tsv")),
        read(runs.join("c/folds.tsv"))
    );
    let config = read(runs.join("a/run_config.json"));
    assert!(
        config.contains("\"fingerprint\"") && config.contains("\"data_root\""),
        "{config}"
    );
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let root = toy(tmp.path());
    let runs = tmp.path().join("runs");
    let out = nunet(&[
        "ablate",
        "--variants",
        "unet,resnet",
        "--data-root",
        s(&root),
        "--out",
        s(&runs),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("unknown variant 'resnet'") && err.contains("deeper_mou_mdsc"),
        "{err}"
    );

    let out = nunet(&[
        "depth-sweep",
        "--depths",
        "9,10",
        "--data-root",
        s(&root),
        "--out",
        s(&runs),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("depth 10"));

    let out = nunet(&[
        "protocol",
        "busi-5fold",
        "--data-root",
        s(&root),
        "--out",
        s(&runs),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = nunet(&["cv", "--out", s(&runs)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_corpus_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = nunet(&[
        "prepare",
        "--data-root",
        s(&tmp.path().join("nowhere")),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn depth_sweep_single_and_multiple_depths() {
    let tmp = tempfile::tempdir().unwrap();
    let root = toy(tmp.path());
    let runs = tmp.path().join("runs");
    let mut args = vec![
        "depth-sweep",
        "--depths",
        "3",
        "--data-root",
        s(&root),
        "--out",
        s(&runs),
        "--name",
        "one",
    ];
    args.extend(SMALL);
    let out = ok(&args);
    assert!(out.contains("plot skipped"), "{out}");
    let csv = read(runs.join("one/depth_sweep.csv"));
    assert!(
        csv.starts_with("# nunet depth-sweep\n# config fingerprint: "),
        "{csv}"
    );
    assert_eq!(
        csv.lines().filter(|l| !l.starts_with('#')).count(),
        2,
        "{csv}"
    );
    assert!(!runs.join("one/depth_sweep.png").exists());

    let mut args = vec![
        "depth-sweep",
        "--depths",
        "3,5",
        "--data-root",
        s(&root),
        "--out",
        s(&runs),
        "--name",
        "two",
    ];
    args.extend(SMALL);
    ok(&args);
    let csv = read(runs.join("two/depth_sweep.csv"));
    let depths: Vec<&str> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(depths, ["3", "5"]);
    assert!(image::open(runs.join("two/depth_sweep.png")).is_ok());
}

fn cv(root: &Path, runs: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec![
        "cv",
        "--variant",
        "unet",
        "--data-root",
        s(root),
        "--out",
        s(runs),
        "--name",
        name,
        "--input-size",
        "32",
    ];
    args.extend(SMALL);
    args.extend(extra);
    ok(&args);
    runs.join(name)
}

#[test]
fn cross_validation_is_reproducible_across_job_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let root = toy(tmp.path());
    let runs = tmp.path().join("runs");
    let a = cv(&root, &runs, "a", &[]);
    let b = cv(&root, &runs, "b", &["--jobs", "2"]);
    for f in ["table.csv", "unet/records.csv", "folds.tsv", "manifest.tsv"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f}");
    }
    for fold in 0..4 {
        let ids = read(a.join(format!("unet/fold_{fold}/test_ids.txt")));
        assert_eq!(ids.lines().count(), 4);
        assert!(a.join(format!("unet/fold_{fold}/checkpoint.ckpt")).exists());
        assert!(read(a.join(format!("unet/fold_{fold}/train.log"))).contains("epoch=1"));
    }
    let md = read(a.join("table.md"));
    assert!(
        md.starts_with("<!-- nunet cv; config fingerprint: "),
        "{md}"
    );
    assert!(md.contains("| U-net |"), "{md}");
    assert!(image::open(a.join("failure_rates.png")).is_ok());
    assert!(std::fs::read_dir(a.join("overlays/unet")).unwrap().count() > 0);
}

#[test]
fn compare_rejects_different_fold_plans() {
    let tmp = tempfile::tempdir().unwrap();
    let root = toy(tmp.path());
    let runs = tmp.path().join("runs");
    let a = cv(&root, &runs, "a", &[]);
    let b = cv(&root, &runs, "b", &["--seed", "5"]);
    let out = nunet(&["compare", "--run", s(&a), s(&b), "--out", s(&runs)]);
    assert!(!out.status.success());

    let out = nunet(&[
        "cv",
        "--variant",
        "deeper_mou_mdsc",
        "--data-root",
        s(&root),
        "--out",
        s(&runs),
        "--name",
        "full",
        "--input-size",
        "32",
        "--base-width",
        "2",
        "--cap",
        "4",
        "--epochs",
        "1",
    ]);
    // 32 is not a multiple of the depth-15 divisor
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("128"));

    let out = ok(&[
        "compare",
        "--run",
        s(&a),
        "--out",
        s(&runs),
        "--name",
        "single",
    ]);
    assert!(out.contains("U-net"));
}

#[test]
fn compare_and_eval_render_paired_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let root = toy(tmp.path());
    let runs = tmp.path().join("runs");
    let mut args = vec![
        "ablate",
        "--variants",
        "unet,deeper",
        "--data-root",
        s(&root),
        "--out",
        s(&runs),
        "--name",
        "abl",
        "--input-size",
        "128",
    ];
    args.extend(SMALL);
    ok(&args);
    let abl = runs.join("abl");
    assert_eq!(read(abl.join("methods.txt")), "unet\ndeeper\n");
    ok(&[
        "compare",
        "--run",
        s(&abl.join("unet")),
        s(&abl.join("deeper")),
        "--out",
        s(&runs),
        "--name",
        "cmp",
        "--reference",
        "deeper",
    ]);
    let md = read(runs.join("cmp/comparison.md"));
    assert!(md.contains("vs Deeper U-net"), "{md}");
    let csv = read(runs.join("cmp/comparison.csv"));
    let unet_row = csv.lines().find(|l| l.starts_with("U-net,")).unwrap();
    assert!(
        unet_row
            .split(',')
            .any(|c| c.contains('e') || c.parse::<f64>().is_ok()),
        "{unet_row}"
    );

    ok(&[
        "eval",
        "--run",
        s(&abl),
        "--out",
        s(&runs),
        "--name",
        "ev",
        "--grouping",
        "per_image",
    ]);
    assert!(read(runs.join("ev/table.md")).contains("std over images"));
    let out = nunet(&[
        "compare",
        "--run",
        s(&abl),
        "--out",
        s(&runs),
        "--reference",
        "resnet",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn external_applies_every_fold_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let root = toy(tmp.path());
    let runs = tmp.path().join("runs");
    let a = cv(&root, &runs, "a", &[]);
    let flat = tmp.path().join("flat");
    ok(&[
        "make-toy",
        "--out",
        s(&flat),
        "--layout",
        "flat",
        "--count",
        "5",
        "--size",
        "32",
        "--seed",
        "9",
    ]);
    ok(&[
        "external",
        "--checkpoints",
        s(&a),
        "--data-root",
        s(&flat),
        "--dataset",
        "flat",
        "--out",
        s(&runs),
        "--name",
        "ext",
    ]);
    let records = read(runs.join("ext/unet/records.csv"));
    assert_eq!(
        records.lines().filter(|l| !l.starts_with('#')).count(),
        1 + 4 * 5
    );
    for i in 0..4 {
        assert_eq!(
            std::fs::read_dir(runs.join(format!("ext/unet/checkpoint_{i}/predictions")))
                .unwrap()
                .count(),
            5
        );
    }
    let report = read(runs.join("ext/unet/report.json"));
    assert!(report.contains("\"kind\": \"external\""), "{report}");

    ok(&[
        "external",
        "--checkpoints",
        s(&a.join("unet/fold_2/checkpoint.ckpt")),
        "--data-root",
        s(&flat),
        "--dataset",
        "flat",
        "--out",
        s(&runs),
        "--name",
        "one",
    ]);
    assert_eq!(
        read(runs.join("one/checkpoints/records.csv"))
            .lines()
            .filter(|l| !l.starts_with('#'))
            .count(),
        6
    );
}

#[test]
fn complexity_reports_calibration() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&[
        "complexity",
        "--out",
        s(tmp.path()),
        "--name",
        "cx",
        "--base-width",
        "8",
    ]);
    assert!(
        out.contains("deeper_mou_mdsc") && out.contains("dFlopMult"),
        "{out}"
    );
    let csv = read(tmp.path().join("cx/complexity.csv"));
    assert!(csv.starts_with("# nunet complexity\n# config fingerprint: "));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 5);
}

#[test]
fn protocol_list_names_every_experiment() {
    let out = ok(&["protocol", "--list"]);
    for name in [
        "busi-4fold",
        "datasetb-4fold",
        "busi-benign-4fold",
        "busi-malignant-3fold",
        "external-b-on-busi",
        "external-stu-on-b",
    ] {
        assert!(
            out.contains(&format!("nunet protocol {name} --data-root")),
            "{name}\n{out}"
        );
    }
}

#[test]
fn flat_corpus_with_class_file() {
    let tmp = tempfile::tempdir().unwrap();
    let flat = tmp.path().join("flat");
    ok(&[
        "make-toy",
        "--out",
        s(&flat),
        "--layout",
        "flat",
        "--count",
        "6",
        "--size",
        "32",
    ]);
    let classes = tmp.path().join("classes.csv");
    std::fs::write(&classes, "id,class\ncase_000,benign\ncase_001,malignant\n").unwrap();
    let out = ok(&[
        "prepare",
        "--data-root",
        s(&flat),
        "--dataset",
        "flat",
        "--class-file",
        s(&classes),
        "--folds",
        "2",
        "--out",
        s(tmp.path()),
        "--name",
        "p",
    ]);
    assert!(out.contains("6 samples"), "{out}");
    let manifest = read(tmp.path().join("p/manifest.tsv"));
    assert!(manifest.contains("case_001\tmalignant"), "{manifest}");
}

#[test]
fn quiet_suppresses_summaries() {
    let tmp = tempfile::tempdir().unwrap();
    let root = toy(tmp.path());
    let out = ok(&[
        "prepare",
        "--quiet",
        "--data-root",
        s(&root),
        "--out",
        s(tmp.path()),
        "--name",
        "p",
    ]);
    assert!(out.is_empty(), "{out}");
    assert!(read(tmp.path().join("p/summary.txt")).starts_with("16 samples"));
}

#[test]
fn in_process_runs_map_errors_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = s(tmp.path());
    let err = nunet_cli::run(["complexity", "--variants", "resnet", "--out", out]).unwrap_err();
    assert_eq!(nunet_cli::exit_code(&err), 2);
    let err = nunet_cli::run(["complexity", "--no-such-flag"]).unwrap_err();
    assert_eq!(nunet_cli::exit_code(&err), 2);
    let err = nunet_cli::run([
        "prepare",
        "--data-root",
        "/nonexistent/corpus",
        "--out",
        out,
        "--quiet",
    ])
    .unwrap_err();
    assert_eq!(nunet_cli::exit_code(&err), 1);
    nunet_cli::run([
        "complexity",
        "--variants",
        "unet",
        "--base-width",
        "4",
        "--out",
        out,
        "--name",
        "cx",
        "--quiet",
    ])
    .unwrap();
    assert!(tmp.path().join("cx/complexity.csv").exists());
}
