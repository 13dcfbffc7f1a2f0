use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::{build_nunet, fingerprint, ModelGraph, NuNet, NuNetConfig};
use crate::data::{check_input_size, preprocess_all, DatasetManifest, FoldPlan, Prepared};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::metrics::{binarize, evaluate_with, MetricRecord};
use crate::nn::{sigmoid, Tape};
use crate::tensor::Tensor;

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::loss::{bce_logit_grad, bce_loss};
use super::optim::Adam;
use super::report::{EvalReport, Protocol};

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Mean loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub step_losses: Vec<f64>,
}

fn stack_batch(items: &[Prepared], flip: &[bool]) -> Result<(Tensor, Tensor)> {
    let mut inputs = Vec::with_capacity(items.len());
    let mut targets = Vec::with_capacity(items.len());
    for (p, &f) in items.iter().zip(flip) {
        let p = if f { p.flipped() } else { p.clone() };
        inputs.push(p.input);
        targets.push(p.target.to_tensor());
    }
    Ok((Tensor::stack(&inputs)?, Tensor::stack(&targets)?))
}

fn fold_rng(seed: u64, fold: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ ((fold as u64 + 1) << 32))
}

/// Fixed-length Adam training on `data`; the returned checkpoint holds the final-epoch weights.
/// Each optimizer step writes an `epoch=<e> step=<s> loss=<l>` line to `log`.
pub fn train_fold(
    model: &mut ModelGraph<NuNet>,
    data: &[Prepared],
    cfg: &TrainConfig,
    fold: Option<usize>,
    log: &mut dyn Write,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let mut rng = fold_rng(cfg.seed, fold.unwrap_or(0));
    let mut adam = Adam::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::new();
    let mut step_losses = Vec::new();
    let mut epochs_run = 0;
    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<Prepared> = chunk.iter().map(|&i| data[i].clone()).collect();
            let flips: Vec<bool> = items
                .iter()
                .map(|_| cfg.hflip && rng.gen_bool(0.5))
                .collect();
            let (x, t) = stack_batch(&items, &flips)?;

            let mut tape = Tape::new(true);
            let input = tape.input(x);
            let logits = model.net.forward_logits(&model.params, &mut tape, input)?;
            let z = tape.value(logits);
            let prob = Tensor::from_vec(z.shape(), z.data().iter().map(|&v| sigmoid(v)).collect())?;
            let loss = bce_loss(&prob, &t)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b + 1,
                    loss,
                });
            }
            let grad = bce_logit_grad(&prob, &t)?;
            model.params.zero_grad();
            tape.backward(logits, grad, &mut model.params)?;
            tape.commit_running_stats(&mut model.params);
            adam.step(&mut model.params);

            step_losses.push(loss);
            sum += loss;
            batches += 1;
            writeln!(
                log,
                "epoch={epoch} step={} loss={loss:.6}",
                step_losses.len()
            )
            .map_err(|e| Error::io("<train log>", e))?;
            if cfg.max_steps.is_some_and(|m| step_losses.len() >= m) {
                epoch_losses.push(sum / batches as f64);
                epochs_run = epoch;
                break 'epochs;
            }
        }
        epoch_losses.push(sum / batches as f64);
        epochs_run = epoch;
        log::debug!(
            "fold {:?} epoch {epoch}: mean loss {:.6}",
            fold,
            sum / batches as f64
        );
    }
    let checkpoint = Checkpoint::capture(model, fold, epochs_run, epoch_losses.clone());
    Ok(TrainOutcome {
        checkpoint,
        epoch_losses,
        step_losses,
    })
}

/// Inference-mode probability maps, one `(1, 1, S, S)` tensor per item, computed in batches.
pub fn predict(
    model: &ModelGraph<NuNet>,
    data: &[Prepared],
    batch_size: usize,
) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(batch_size.max(1)) {
        let inputs: Vec<Tensor> = chunk.iter().map(|p| p.input.clone()).collect();
        let probs = model.forward(&Tensor::stack(&inputs)?)?;
        out.extend((0..chunk.len()).map(|i| probs.select(i)));
    }
    Ok(out)
}

/// Binarized predictions and their metric records, labelled with `fold`.
pub fn evaluate_split(
    model: &ModelGraph<NuNet>,
    data: &[Prepared],
    cfg: &TrainConfig,
    fold: usize,
) -> Result<(Vec<MetricRecord>, Vec<BinaryMask>)> {
    let probs = predict(model, data, cfg.batch_size)?;
    let mut records = Vec::with_capacity(data.len());
    let mut masks = Vec::with_capacity(data.len());
    for (p, prob) in data.iter().zip(probs) {
        let pred = binarize(&prob, cfg.threshold)?;
        records
            .push(evaluate_with(&pred, &p.target, cfg.zero_division)?.with_id(p.id.clone(), fold));
        masks.push(pred);
    }
    Ok((records, masks))
}

/// Where a run writes its artifacts.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub label: String,
    pub out_dir: Option<PathBuf>,
    /// Also write binarized prediction PNGs under `fold_<f>/predictions/`.
    pub save_predictions: bool,
}

/// File-name-safe form of a sample id.
pub fn id_file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.() ".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_lines(path: &Path, lines: &[&str]) -> Result<()> {
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save_mask_png(mask: &BinaryMask, path: &Path) -> Result<()> {
    let img = image::GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        image::Luma([if mask.get(x as usize, y as usize) {
            255
        } else {
            0
        }])
    });
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

struct FoldResult {
    records: Vec<MetricRecord>,
    loss_trace: Vec<f64>,
}

fn run_fold(
    f: usize,
    arch: &NuNetConfig,
    plan: &FoldPlan,
    prepared: &HashMap<&str, &Prepared>,
    cfg: &TrainConfig,
    opts: &RunOptions,
) -> Result<FoldResult> {
    let train_ids = plan.train_ids(f);
    let test_ids = plan.test_ids(f);
    let take =
        |ids: &[&str]| -> Vec<Prepared> { ids.iter().map(|id| (*prepared[id]).clone()).collect() };
    let train = take(&train_ids);
    let test = take(&test_ids);
    let dir = opts.out_dir.as_ref().map(|d| d.join(format!("fold_{f}")));
    if let Some(d) = &dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        write_lines(&d.join("train_ids.txt"), &train_ids)?;
        write_lines(&d.join("test_ids.txt"), &test_ids)?;
    }
    let mut arch = arch.clone();
    arch.seed = arch.seed.wrapping_add(f as u64);
    let mut model = build_nunet(&arch)?;
    let mut log: Box<dyn Write> = match &dir {
        Some(d) => {
            let p = d.join("train.log");
            Box::new(std::io::BufWriter::new(
                std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?,
            ))
        }
        None => Box::new(std::io::sink()),
    };
    log::info!(
        "{}: fold {f} training on {} images, testing on {}",
        opts.label,
        train.len(),
        test.len()
    );
    let outcome = train_fold(&mut model, &train, cfg, Some(f), log.as_mut())?;
    log.flush().map_err(|e| Error::io("<train log>", e))?;
    let (records, masks) = evaluate_split(&model, &test, cfg, f)?;
    if let Some(d) = &dir {
        outcome.checkpoint.save(&d.join("checkpoint.ckpt"))?;
        if opts.save_predictions {
            let pd = d.join("predictions");
            std::fs::create_dir_all(&pd).map_err(|e| Error::io(&pd, e))?;
            for (r, m) in records.iter().zip(&masks) {
                save_mask_png(m, &pd.join(format!("{}.png", id_file_stem(&r.id))))?;
            }
        }
    }
    Ok(FoldResult {
        records,
        loss_trace: outcome.epoch_losses,
    })
}

fn run_parallel<T: Send>(
    n: usize,
    jobs: usize,
    f: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let r = f(i);
                results.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every index ran"))
        .collect()
}

/// Trains one model per fold on the other folds and evaluates it on the held-out fold.
pub fn cross_validate(
    arch: &NuNetConfig,
    manifest: &DatasetManifest,
    plan: &FoldPlan,
    cfg: &TrainConfig,
    opts: &RunOptions,
) -> Result<EvalReport> {
    cfg.validate()?;
    check_input_size(cfg.input_size, arch.divisor())?;
    plan.check_leakage()?;
    let mut arch = arch.clone();
    arch.input_size = cfg.input_size;
    arch.validate()?;

    let samples = plan
        .assignment
        .iter()
        .map(|(id, _)| {
            manifest
                .get(id)
                .ok_or_else(|| Error::Data(format!("fold plan id '{id}' is not in the manifest")))
        })
        .collect::<Result<Vec<_>>>()?;
    let prepared = preprocess_all(samples, cfg.input_size, arch.divisor())?;
    let by_id: HashMap<&str, &Prepared> = prepared.iter().map(|p| (p.id.as_str(), p)).collect();

    if let Some(d) = &opts.out_dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        plan.save(&d.join("folds.tsv"))?;
        arch.save(&d.join("arch.cfg"))?;
        let p = d.join("train_config.json");
        std::fs::write(&p, serde_json::to_string_pretty(cfg)? + "\n")
            .map_err(|e| Error::io(&p, e))?;
    }
    let folds = run_parallel(plan.k, cfg.jobs, |f| {
        run_fold(f, &arch, plan, &by_id, cfg, opts)
    })?;

    let mut records = Vec::with_capacity(plan.len());
    let mut traces = Vec::with_capacity(plan.k);
    for r in folds {
        records.extend(r.records);
        traces.push(r.loss_trace);
    }
    let report = EvalReport::new(
        &opts.label,
        &arch.fingerprint(),
        &manifest
            .samples
            .first()
            .map(|s| s.source.clone())
            .unwrap_or_default(),
        manifest.include_normal,
        Protocol::CrossValidation {
            k: plan.k,
            seed: plan.seed,
            class_filter: plan.class_filter,
            plan_fingerprint: fingerprint(&plan.to_text()),
        },
        cfg.threshold,
        cfg.jaccard_floor,
        records,
        traces,
        manifest.warnings.clone(),
    )?;
    if let Some(d) = &opts.out_dir {
        report.save(d)?;
    }
    Ok(report)
}

/// Applies every checkpoint to the whole external corpus; `fold` in each record is the checkpoint index.
pub fn external_validate(
    checkpoints: &[Checkpoint],
    manifest: &DatasetManifest,
    cfg: &TrainConfig,
    opts: &RunOptions,
) -> Result<EvalReport> {
    let first = checkpoints
        .first()
        .ok_or_else(|| Error::config("external validation needs at least one checkpoint"))?;
    if manifest.is_empty() {
        return Err(Error::Data("external manifest is empty".into()));
    }
    let mut warnings = manifest.warnings.clone();
    let mut records = Vec::new();
    let mut trained_on = Vec::new();
    let samples: Vec<_> = manifest.samples.iter().collect();
    let mut prepared_cache: Option<Vec<Prepared>> = None;
    for (i, ck) in checkpoints.iter().enumerate() {
        let divisor = ck.arch.divisor();
        check_input_size(cfg.input_size, divisor)?;
        let mut model = ck.restore()?;
        if ck.input_size() != cfg.input_size {
            let mut resized = ck.arch.clone();
            resized.input_size = cfg.input_size;
            let msg = format!(
                "checkpoint {i} was trained at {} but is applied at {} (fingerprint {} vs {})",
                ck.input_size(),
                cfg.input_size,
                ck.fingerprint,
                resized.fingerprint()
            );
            log::warn!("{msg}");
            warnings.push(msg);
            model.net.config.input_size = cfg.input_size;
        }
        if ck.arch.backbone != first.arch.backbone || ck.arch.mous != first.arch.mous {
            warnings.push(format!(
                "checkpoint {i} has a different architecture from checkpoint 0"
            ));
        }
        trained_on.push(format!(
            "{}:fold{}",
            ck.fingerprint,
            ck.fold.map_or("-".into(), |f| f.to_string())
        ));
        if prepared_cache.is_none() {
            prepared_cache = Some(preprocess_all(
                samples.iter().copied(),
                cfg.input_size,
                divisor,
            )?);
        }
        let data = prepared_cache.as_ref().expect("filled above");
        let (recs, masks) = evaluate_split(&model, data, cfg, i)?;
        if let (Some(d), true) = (&opts.out_dir, opts.save_predictions) {
            let pd = d.join(format!("checkpoint_{i}")).join("predictions");
            std::fs::create_dir_all(&pd).map_err(|e| Error::io(&pd, e))?;
            for (r, m) in recs.iter().zip(&masks) {
                save_mask_png(m, &pd.join(format!("{}.png", id_file_stem(&r.id))))?;
            }
        }
        records.extend(recs);
    }
    let report = EvalReport::new(
        &opts.label,
        &first.fingerprint,
        &manifest.samples[0].source,
        manifest.include_normal,
        Protocol::External {
            checkpoints: checkpoints.len(),
            trained_on,
        },
        cfg.threshold,
        cfg.jaccard_floor,
        records,
        checkpoints.iter().map(|c| c.loss_trace.clone()).collect(),
        warnings,
    )?;
    if let Some(d) = &opts.out_dir {
        report.save(d)?;
    }
    Ok(report)
}
