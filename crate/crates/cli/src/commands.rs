use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use anyhow::{bail, Context, Result};
use serde_json::json;

use nunet_core::arch::complexity::{calibration_report, complexity_csv, complexity_table};
use nunet_core::arch::{build_nunet, count_params, NuNetConfig, VariantRegistry, VariantSettings};
use nunet_core::data::synth;
use nunet_core::data::{
    load_gray, make_folds, resize_image, ClassLabel, DatasetManifest, FoldPlan, IngestOptions,
    IngesterRegistry,
};
use nunet_core::metrics::{Grouping, Metric};
use nunet_core::stats::{build_comparison_table, ComparisonTable, PairingUnit, TableOptions};
use nunet_core::train::{
    cross_validate, external_validate, id_file_stem, Checkpoint, EvalReport, Protocol, RunOptions,
    TrainConfig, RECORDS_CSV, REPORT_JSON,
};

use crate::args::{ArchArgs, DataArgs, LayoutArgs, OutArgs, TableArgs, TrainArgs, WidthArgs};
use crate::plots;
use crate::run::{to_value, RunDir};

/// Bad flags or names; reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

static QUIET: AtomicBool = AtomicBool::new(false);

/// Suppresses the summaries commands print to stdout.
pub fn set_quiet(quiet: bool) {
    QUIET.store(quiet, Ordering::Relaxed);
}

/// Prints a command summary unless `--quiet` was given.
pub fn say(text: &str) {
    if !QUIET.load(Ordering::Relaxed) {
        print!("{text}");
    }
}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

const MANIFEST_FILE: &str = "manifest.tsv";
const FOLDS_FILE: &str = "folds.tsv";
const METHODS_FILE: &str = "methods.txt";

pub fn class_filter(s: &str) -> Result<Option<ClassLabel>> {
    match s.trim() {
        "all" | "" => Ok(None),
        other => Ok(Some(
            ClassLabel::parse(other).map_err(|e| usage(e.to_string()))?,
        )),
    }
}

pub fn ingest(
    root: &Path,
    dataset: &str,
    include_normal: bool,
    layout: &LayoutArgs,
) -> Result<DatasetManifest> {
    let registry = IngesterRegistry::with_defaults();
    let ingester = registry.get(dataset).map_err(|e| usage(e.to_string()))?;
    let opts = IngestOptions {
        include_normal,
        mask_suffix: layout.mask_suffix.clone(),
        image_dir: layout.image_dir.clone(),
        mask_dir: layout.mask_dir.clone(),
        class_file: layout.class_file.clone(),
        source: None,
    };
    let manifest = ingester
        .ingest(root, &opts)
        .with_context(|| format!("ingesting {}", root.display()))?;
    Ok(manifest)
}

/// Manifest and fold plan from `--prepared` or by ingesting `--data-root`.
pub fn load_data(args: &DataArgs) -> Result<(DatasetManifest, FoldPlan)> {
    if let Some(dir) = &args.prepared {
        let manifest = DatasetManifest::load(&dir.join(MANIFEST_FILE))?;
        let plan = FoldPlan::load(&dir.join(FOLDS_FILE))?;
        return Ok((manifest, plan));
    }
    let root = args
        .data_root
        .as_ref()
        .ok_or_else(|| usage("either --data-root or --prepared is required"))?;
    let manifest = ingest(root, &args.dataset, args.include_normal, &args.layout)?;
    let plan = make_folds(&manifest, args.folds, args.seed, class_filter(&args.class)?)?;
    Ok((manifest, plan))
}

fn settings(w: &WidthArgs, seed: u64) -> VariantSettings {
    VariantSettings {
        base_width: w.base_width,
        cap: w.cap,
        in_channels: 1,
        input_size: None,
        seed,
    }
}

fn variant_config(
    registry: &VariantRegistry,
    name: &str,
    w: &WidthArgs,
    seed: u64,
) -> Result<NuNetConfig> {
    registry.get(name).map_err(|e| usage(e.to_string()))?;
    Ok(registry.config(name, &settings(w, seed))?)
}

pub fn arch_config(a: &ArchArgs, seed: u64) -> Result<(String, NuNetConfig)> {
    match &a.arch {
        Some(path) => {
            let cfg = NuNetConfig::load(path)?;
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "custom".into());
            Ok((label, cfg))
        }
        None => Ok((
            a.variant.clone(),
            variant_config(
                &VariantRegistry::with_defaults(),
                &a.variant,
                &a.widths,
                seed,
            )?,
        )),
    }
}

pub fn train_config(t: &TrainArgs, seed: u64, divisor: usize) -> TrainConfig {
    TrainConfig {
        epochs: t.epochs,
        batch_size: t.batch_size,
        learning_rate: t.lr,
        seed,
        input_size: t
            .input_size
            .unwrap_or_else(|| 256usize.next_multiple_of(divisor)),
        hflip: t.hflip,
        threshold: t.threshold,
        jaccard_floor: t.jaccard_floor,
        jobs: t.jobs,
        ..TrainConfig::default()
    }
}

fn save_data(run: &RunDir, manifest: &DatasetManifest, plan: Option<&FoldPlan>) -> Result<()> {
    manifest.save(&run.join(MANIFEST_FILE))?;
    if let Some(p) = plan {
        p.save(&run.join(FOLDS_FILE))?;
    }
    Ok(())
}

/// Puts the run header above a CSV written by the library.
fn add_header(run: &RunDir, path: &Path) -> Result<()> {
    let body = std::fs::read_to_string(path)?;
    if body.starts_with('#') {
        return Ok(());
    }
    let name = path
        .strip_prefix(&run.path)
        .unwrap_or(path)
        .to_string_lossy()
        .into_owned();
    run.write_table(&name, &body)?;
    Ok(())
}

/// A report together with the directory it was loaded from.
pub struct MethodRun {
    pub dir: PathBuf,
    pub report: EvalReport,
}

pub fn display_name(label: &str) -> String {
    VariantRegistry::with_defaults()
        .get(label)
        .map(|v| v.summary().to_string())
        .unwrap_or_else(|_| label.to_string())
}

fn fold_summary(plan: &FoldPlan) -> String {
    format!(
        "k={} seed={} filter={} sizes={:?}",
        plan.k,
        plan.seed,
        plan.class_filter.map_or("all", |c| c.as_str()),
        plan.sizes()
    )
}

pub fn cmd_prepare(data: &DataArgs, out: &OutArgs) -> Result<PathBuf> {
    let (manifest, plan) = load_data(data)?;
    let run = RunDir::create(
        &out.out,
        out.name.as_deref(),
        "prepare",
        json!({ "data": to_value(data) }),
    )?;
    save_data(&run, &manifest, Some(&plan))?;
    let mut summary = format!("{}\nfolds: {}\n", manifest.summary(), fold_summary(&plan));
    for w in &manifest.warnings {
        summary.push_str(&format!("warning: {w}\n"));
    }
    std::fs::write(run.join("summary.txt"), &summary)?;
    say(&summary);
    Ok(run.path)
}

/// Cross-validates each `(label, config)` on one fold plan, then renders the table and figures.
pub fn run_methods(
    run: &RunDir,
    methods: &[(String, NuNetConfig)],
    manifest: &DatasetManifest,
    plan: &FoldPlan,
    cfg: &TrainConfig,
) -> Result<Vec<MethodRun>> {
    save_data(run, manifest, Some(plan))?;
    std::fs::write(
        run.join(METHODS_FILE),
        methods
            .iter()
            .map(|m| format!("{}\n", m.0))
            .collect::<String>(),
    )?;
    let mut runs = Vec::new();
    for (label, arch) in methods {
        let dir = run.join(label);
        let opts = RunOptions {
            label: label.clone(),
            out_dir: Some(dir.clone()),
            save_predictions: true,
        };
        log::info!("cross-validating {label} ({} folds)", plan.k);
        let report = cross_validate(arch, manifest, plan, cfg, &opts)?;
        add_header(run, &dir.join(RECORDS_CSV))?;
        runs.push(MethodRun { dir, report });
    }
    Ok(runs)
}

pub fn table_options(t: &TableArgs) -> Result<TableOptions> {
    Ok(TableOptions {
        alpha: t.alpha,
        grouping: Grouping::parse(&t.grouping).map_err(|e| usage(e.to_string()))?,
        pairing: PairingUnit::parse(&t.pairing).map_err(|e| usage(e.to_string()))?,
    })
}

fn default_table_args() -> TableArgs {
    TableArgs {
        reference: None,
        alpha: 0.05,
        pairing: "image".into(),
        grouping: "per_fold".into(),
    }
}

/// Writes `<stem>.csv`, `<stem>.md`, `failure_rates.png` and overlays; returns the table.
pub fn render(
    run: &RunDir,
    runs: &[MethodRun],
    t: &TableArgs,
    stem: &str,
    title: &str,
    overlays: usize,
) -> Result<ComparisonTable> {
    if runs.is_empty() {
        bail!("no evaluation reports to render");
    }
    let opts = table_options(t)?;
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    let reference = match &t.reference {
        Some(r) => {
            if !reports.iter().any(|x| &x.label == r) {
                let labels: Vec<&str> = reports.iter().map(|x| x.label.as_str()).collect();
                return Err(usage(format!(
                    "reference '{r}' is not among the methods ({})",
                    labels.join(", ")
                )));
            }
            r.clone()
        }
        None => reports
            .iter()
            .find(|r| r.label == "unet")
            .unwrap_or(&reports[0])
            .label
            .clone(),
    };
    let mut table = build_comparison_table(&reports, &reference, &opts)?;
    for row in &mut table.rows {
        row.method = display_name(&row.method);
    }
    table.reference = display_name(&table.reference);
    run.write_table(&format!("{stem}.csv"), &table.to_csv()?)?;
    let mut md = table.to_markdown();
    md.push_str(&protocol_note(&reports[0]));
    run.write_markdown(&format!("{stem}.md"), title, &md)?;
    say(&format!("{}\n", table.to_markdown()));

    let floor = reports[0].jaccard_floor();
    let bars: Vec<(String, f64)> = table
        .rows
        .iter()
        .map(|r| (r.method.clone(), 100.0 * r.failure_rate))
        .collect();
    plots::failure_rate_chart(&run.join("failure_rates.png"), &bars, floor)?;
    for r in runs {
        write_overlays(run, r, overlays)?;
    }
    Ok(table)
}

fn protocol_note(r: &EvalReport) -> String {
    let what = match &r.protocol {
        Protocol::CrossValidation {
            k, class_filter, ..
        } => format!(
            "{k}-fold cross-validation on {} ({})",
            r.dataset,
            class_filter.map_or("all classes".to_string(), |c| format!("{c} only"))
        ),
        Protocol::External { checkpoints, .. } => {
            format!("{checkpoints} checkpoints applied to {}", r.dataset)
        }
    };
    format!(
        "\n{what}; normals {}; threshold {}; failure = Jaccard < {}; {} model evaluated.\n",
        if r.include_normal {
            "included"
        } else {
            "excluded"
        },
        r.threshold,
        r.jaccard_floor(),
        r.model_selection.replace('_', "-")
    )
}

fn find_manifest(dir: &Path) -> Option<PathBuf> {
    dir.ancestors()
        .take(3)
        .map(|d| d.join(MANIFEST_FILE))
        .find(|p| p.exists())
}

fn prediction_path(r: &MethodRun, fold: usize, id: &str) -> PathBuf {
    let sub = match r.report.protocol {
        Protocol::CrossValidation { .. } => format!("fold_{fold}"),
        Protocol::External { .. } => format!("checkpoint_{fold}"),
    };
    r.dir
        .join(sub)
        .join("predictions")
        .join(format!("{}.png", id_file_stem(id)))
}

fn write_overlays(run: &RunDir, r: &MethodRun, n: usize) -> Result<()> {
    if n == 0 {
        return Ok(());
    }
    let Some(manifest_path) = find_manifest(&r.dir) else {
        log::warn!("no manifest near {}; skipping overlays", r.dir.display());
        return Ok(());
    };
    let manifest = DatasetManifest::load(&manifest_path)?;
    let dir = run.join("overlays").join(&r.report.label);
    std::fs::create_dir_all(&dir)?;
    for rec in r.report.records.iter().take(n) {
        let pred_path = prediction_path(r, rec.fold, &rec.id);
        let Some(sample) = manifest.get(&rec.id) else {
            continue;
        };
        if !pred_path.exists() {
            continue;
        }
        let pred = nunet_core::data::load_mask(&pred_path)?;
        let size = pred.width();
        let gray = load_gray(&sample.image_path)?;
        let pixels: Vec<u8> = resize_image(&gray, size)
            .into_iter()
            .map(|v| (v * 255.0).round() as u8)
            .collect();
        let img =
            image::GrayImage::from_raw(size as u32, size as u32, pixels).expect("square image");
        let gt = nunet_core::data::merge_masks(&sample.mask_paths)?.resize_nearest(size, size);
        let suffix = if r.report.per_fold.folds > 1
            && matches!(r.report.protocol, Protocol::External { .. })
        {
            format!("_ckpt{}", rec.fold)
        } else {
            String::new()
        };
        plots::overlay(&img, &gt, &pred)?
            .save(dir.join(format!("{}{suffix}.png", id_file_stem(&rec.id))))?;
    }
    Ok(())
}

pub fn cmd_cv(
    data: &DataArgs,
    arch: &ArchArgs,
    train: &TrainArgs,
    out: &OutArgs,
) -> Result<PathBuf> {
    let (label, cfg) = arch_config(arch, data.seed)?;
    let tc = train_config(train, data.seed, cfg.divisor());
    let (manifest, plan) = load_data(data)?;
    let run = RunDir::create(
        &out.out,
        out.name.as_deref(),
        "cv",
        json!({ "data": to_value(data), "arch": { label.clone(): cfg.to_kv() }, "train": to_value(&tc) }),
    )?;
    let runs = run_methods(&run, &[(label, cfg)], &manifest, &plan, &tc)?;
    render(
        &run,
        &runs,
        &default_table_args(),
        "table",
        "Cross-validation",
        train.overlays,
    )?;
    Ok(run.path)
}

pub fn ablation_methods(
    variants: &[String],
    widths: &WidthArgs,
    seed: u64,
) -> Result<Vec<(String, NuNetConfig)>> {
    let registry = VariantRegistry::with_defaults();
    if variants.is_empty() {
        return Err(usage("no variants given"));
    }
    variants
        .iter()
        .map(|v| Ok((v.clone(), variant_config(&registry, v, widths, seed)?)))
        .collect()
}

fn common_input_size(methods: &[(String, NuNetConfig)], train: &TrainArgs) -> usize {
    let divisor = methods.iter().map(|m| m.1.divisor()).max().unwrap_or(1);
    train
        .input_size
        .unwrap_or_else(|| 256usize.next_multiple_of(divisor))
}

pub fn cmd_ablate(
    variants: &[String],
    data: &DataArgs,
    widths: &WidthArgs,
    train: &TrainArgs,
    out: &OutArgs,
) -> Result<PathBuf> {
    let methods = ablation_methods(variants, widths, data.seed)?;
    let mut tc = train_config(train, data.seed, 1);
    tc.input_size = common_input_size(&methods, train);
    let (manifest, plan) = load_data(data)?;
    let arch: serde_json::Map<String, serde_json::Value> = methods
        .iter()
        .map(|(l, c)| (l.clone(), json!(c.to_kv())))
        .collect();
    let run = RunDir::create(
        &out.out,
        out.name.as_deref(),
        "ablate",
        json!({ "data": to_value(data), "arch": arch, "train": to_value(&tc) }),
    )?;
    let runs = run_methods(&run, &methods, &manifest, &plan, &tc)?;
    render(
        &run,
        &runs,
        &default_table_args(),
        "ablation",
        "Ablation of network components",
        train.overlays,
    )?;
    Ok(run.path)
}

pub fn cmd_depth_sweep(
    depths: &[usize],
    data: &DataArgs,
    widths: &WidthArgs,
    train: &TrainArgs,
    out: &OutArgs,
) -> Result<PathBuf> {
    if depths.is_empty() {
        return Err(usage("no depths given"));
    }
    if let Some(d) = depths.iter().find(|d| **d < 3 || **d % 2 == 0) {
        return Err(usage(format!(
            "depth {d} is invalid: depths must be odd and at least 3"
        )));
    }
    let mut methods = Vec::new();
    for &d in depths {
        let mut cfg = NuNetConfig::backbone(d);
        cfg.backbone.channels =
            nunet_core::arch::ChannelSchedule::new(widths.base_width, widths.cap)?;
        cfg.seed = data.seed;
        methods.push((format!("depth_{d}"), cfg));
    }
    let mut tc = train_config(train, data.seed, 1);
    tc.input_size = common_input_size(&methods, train);
    for (_, c) in &mut methods {
        c.input_size = tc.input_size;
        c.validate()?;
    }
    let (manifest, plan) = load_data(data)?;
    let run = RunDir::create(
        &out.out,
        out.name.as_deref(),
        "depth-sweep",
        json!({ "data": to_value(data), "depths": depths, "widths": to_value(widths), "train": to_value(&tc) }),
    )?;
    let runs = run_methods(&run, &methods, &manifest, &plan, &tc)?;

    let mut csv = String::from("depth,params");
    for m in Metric::ALL {
        csv.push_str(&format!(",{0}_mean,{0}_std", m.name()));
    }
    csv.push_str(",failure_rate\n");
    for ((_, cfg), r) in methods.iter().zip(&runs) {
        let agg = &r.report.per_fold;
        csv.push_str(&format!(
            "{},{}",
            cfg.backbone.depth,
            count_params(&build_nunet(cfg)?)
        ));
        for m in Metric::ALL {
            csv.push_str(&format!(",{:.8},{:.8}", agg.get(m).mean, agg.get(m).std));
        }
        csv.push_str(&format!(",{:.8}\n", agg.failure_rate));
    }
    run.write_table("depth_sweep.csv", &csv)?;
    if depths.len() > 1 {
        let series: Vec<(&str, Vec<f64>)> = [Metric::Dice, Metric::Jaccard]
            .iter()
            .map(|m| {
                (
                    m.title(),
                    runs.iter()
                        .map(|r| 100.0 * r.report.per_fold.get(*m).mean)
                        .collect(),
                )
            })
            .collect();
        plots::depth_sweep_chart(&run.join("depth_sweep.png"), depths, &series)?;
    } else {
        say("single depth: plot skipped\n");
        log::info!("single depth: plot skipped");
    }
    say(&csv);
    Ok(run.path)
}

pub fn cmd_complexity(
    variants: &[String],
    input_size: usize,
    widths: &WidthArgs,
    out: &OutArgs,
) -> Result<PathBuf> {
    let registry = VariantRegistry::with_defaults();
    for v in variants {
        registry.get(v).map_err(|e| usage(e.to_string()))?;
    }
    let run = RunDir::create(
        &out.out,
        out.name.as_deref(),
        "complexity",
        json!({ "variants": variants, "input_size": input_size, "widths": to_value(widths) }),
    )?;
    let names: Vec<&str> = variants.iter().map(String::as_str).collect();
    let rows = complexity_table(&registry, &names, &settings(widths, 0), input_size)?;
    let header = run.header();
    std::fs::write(run.join("complexity.csv"), complexity_csv(&rows, &header))?;
    let report = calibration_report(&rows, input_size, &header);
    std::fs::write(run.join("calibration.txt"), &report)?;
    say(&report);
    Ok(run.path)
}

/// Reports under `path`: the directory itself, or its method subdirectories in recorded order.
pub fn load_runs(path: &Path) -> Result<Vec<MethodRun>> {
    if path.join(REPORT_JSON).exists() {
        return Ok(vec![MethodRun {
            dir: path.to_path_buf(),
            report: EvalReport::load(path)?,
        }]);
    }
    let labels: Vec<String> = match std::fs::read_to_string(path.join(METHODS_FILE)) {
        Ok(text) => text
            .lines()
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
        Err(_) => {
            let mut names: Vec<String> = std::fs::read_dir(path)
                .with_context(|| format!("reading {}", path.display()))?
                .filter_map(|e| e.ok())
                .filter(|e| e.path().join(REPORT_JSON).exists())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect();
            names.sort();
            names
        }
    };
    if labels.is_empty() {
        bail!("no evaluation reports found in {}", path.display());
    }
    labels
        .into_iter()
        .map(|l| {
            let dir = path.join(&l);
            Ok(MethodRun {
                report: EvalReport::load(&dir)?,
                dir,
            })
        })
        .collect()
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<MethodRun>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(load_runs(p)?);
    }
    let mut seen = HashMap::new();
    for r in &all {
        if let Some(prev) = seen.insert(r.report.label.clone(), r.dir.clone()) {
            bail!(
                "method '{}' appears twice ({} and {})",
                r.report.label,
                prev.display(),
                r.dir.display()
            );
        }
    }
    Ok(all)
}

pub fn cmd_eval(runs: &[PathBuf], table: &TableArgs, out: &OutArgs) -> Result<PathBuf> {
    let all = load_all(runs)?;
    let run = RunDir::create(
        &out.out,
        out.name.as_deref(),
        "eval",
        json!({ "runs": runs, "table": to_value(table) }),
    )?;
    render(&run, &all, table, "table", "Evaluation", 8)?;
    Ok(run.path)
}

pub fn cmd_compare(runs: &[PathBuf], table: &TableArgs, out: &OutArgs) -> Result<PathBuf> {
    let all = load_all(runs)?;
    let run = RunDir::create(
        &out.out,
        out.name.as_deref(),
        "compare",
        json!({ "runs": runs, "table": to_value(table) }),
    )?;
    render(&run, &all, table, "comparison", "Comparison", 8)?;
    Ok(run.path)
}

/// Checkpoint groups: each method directory with `fold_*/checkpoint.ckpt`, or single files.
pub fn collect_checkpoints(paths: &[PathBuf]) -> Result<Vec<(String, Vec<Checkpoint>)>> {
    fn fold_checkpoints(dir: &Path) -> Result<Vec<PathBuf>> {
        let mut found: Vec<(usize, PathBuf)> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                let f = name.strip_prefix("fold_")?.parse::<usize>().ok()?;
                let p = e.path().join("checkpoint.ckpt");
                p.exists().then_some((f, p))
            })
            .collect();
        found.sort();
        Ok(found.into_iter().map(|(_, p)| p).collect())
    }
    let mut groups: Vec<(String, Vec<Checkpoint>)> = Vec::new();
    let mut loose = Vec::new();
    for p in paths {
        if p.is_file() {
            loose.push(Checkpoint::load(p)?);
            continue;
        }
        let direct = fold_checkpoints(p)?;
        if !direct.is_empty() {
            let label = p
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into());
            groups.push((
                label,
                direct
                    .iter()
                    .map(|c| Checkpoint::load(c))
                    .collect::<Result<_, _>>()?,
            ));
            continue;
        }
        let labels: Vec<String> = match std::fs::read_to_string(p.join(METHODS_FILE)) {
            Ok(t) => t
                .lines()
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
            Err(_) => bail!("no checkpoints found in {}", p.display()),
        };
        for l in labels {
            let files = fold_checkpoints(&p.join(&l))?;
            groups.push((
                l,
                files
                    .iter()
                    .map(|c| Checkpoint::load(c))
                    .collect::<Result<_, _>>()?,
            ));
        }
    }
    if !loose.is_empty() {
        groups.push(("checkpoints".into(), loose));
    }
    if groups.iter().all(|g| g.1.is_empty()) {
        return Err(usage("no checkpoints found"));
    }
    Ok(groups)
}

pub fn run_external(
    run: &RunDir,
    groups: &[(String, Vec<Checkpoint>)],
    manifest: &DatasetManifest,
    tc: &TrainConfig,
) -> Result<Vec<MethodRun>> {
    save_data(run, manifest, None)?;
    std::fs::write(
        run.join(METHODS_FILE),
        groups
            .iter()
            .map(|g| format!("{}\n", g.0))
            .collect::<String>(),
    )?;
    let mut runs = Vec::new();
    for (label, cks) in groups {
        let dir = run.join(label);
        let opts = RunOptions {
            label: label.clone(),
            out_dir: Some(dir.clone()),
            save_predictions: true,
        };
        let report = external_validate(cks, manifest, tc, &opts)?;
        for w in &report.warnings {
            eprintln!("warning: {label}: {w}");
        }
        add_header(run, &dir.join(RECORDS_CSV))?;
        runs.push(MethodRun { dir, report });
    }
    Ok(runs)
}

pub fn cmd_external(
    checkpoints: &[PathBuf],
    data: &DataArgs,
    train: &TrainArgs,
    table: &TableArgs,
    out: &OutArgs,
) -> Result<PathBuf> {
    let groups = collect_checkpoints(checkpoints)?;
    let first = groups
        .iter()
        .find_map(|g| g.1.first())
        .expect("non-empty group");
    let mut tc = train_config(train, data.seed, first.arch.divisor());
    if train.input_size.is_none() {
        tc.input_size = first.input_size();
    }
    let root = data
        .data_root
        .as_ref()
        .ok_or_else(|| usage("--data-root is required for external validation"))?;
    let manifest = ingest(root, &data.dataset, data.include_normal, &data.layout)?;
    let run = RunDir::create(
        &out.out,
        out.name.as_deref(),
        "external",
        json!({
            "checkpoints": checkpoints,
            "fingerprints": groups.iter().map(|g| (g.0.clone(), g.1.iter().map(|c| c.fingerprint.clone()).collect::<Vec<_>>())).collect::<Vec<_>>(),
            "data": to_value(data),
            "train": to_value(&tc),
        }),
    )?;
    let runs = run_external(&run, &groups, &manifest, &tc)?;
    render(
        &run,
        &runs,
        table,
        "external",
        "External validation",
        train.overlays,
    )?;
    Ok(run.path)
}

pub fn cmd_make_toy(out: &Path, layout: &str, count: usize, size: usize, seed: u64) -> Result<()> {
    match layout {
        "busi" => {
            let benign = count.div_ceil(2);
            synth::write_busi_like(
                out,
                &[
                    (ClassLabel::Benign, benign),
                    (ClassLabel::Malignant, count - benign),
                ],
                size,
                seed,
            )?;
        }
        "flat" => {
            synth::write_flat(out, count, size, seed)?;
        }
        other => return Err(usage(format!("unknown layout '{other}' (busi | flat)"))),
    }
    say(&format!(
        "wrote {count} synthetic images to {}\n",
        out.display()
    ));
    Ok(())
}
