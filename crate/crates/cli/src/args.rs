use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "nunet",
    version,
    about = "NU-net segmentation experiments: data preparation, cross-validation, ablation, complexity and statistics"
)]
pub struct Cli {
    /// Do not print summaries to stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Ingest a corpus and write its manifest and fold plan.
    Prepare {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Cross-validate one architecture.
    #[command(alias = "train")]
    Cv {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        arch: ArchArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Cross-validate the ablation ladder on one fold plan and tabulate it.
    Ablate {
        /// Comma-separated variant names.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "unet,deeper,deeper_mou,deeper_mou_mdsc"
        )]
        variants: Vec<String>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        widths: WidthArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Cross-validate plain backbones of several depths.
    DepthSweep {
        /// Comma-separated odd depths.
        #[arg(long, value_delimiter = ',', default_value = "9,11,13,15,17")]
        depths: Vec<usize>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        widths: WidthArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Parameter and FLOP counts of the variants, with calibration deltas.
    Complexity {
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "unet,deeper,deeper_mou,deeper_mou_mdsc"
        )]
        variants: Vec<String>,
        #[arg(long, default_value_t = 256)]
        input_size: usize,
        #[command(flatten)]
        widths: WidthArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Re-render tables, charts and overlays of finished runs.
    Eval {
        /// Run directories (or method directories inside them).
        #[arg(long = "run", required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Apply trained checkpoints to another corpus.
    External {
        /// Run or method directories whose `fold_*/checkpoint.ckpt` files are applied, or checkpoint files.
        #[arg(long = "checkpoints", required = true, num_args = 1..)]
        checkpoints: Vec<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Paired comparison table over finished runs evaluated on the same folds.
    Compare {
        #[arg(long = "run", required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run a named experiment of the published protocol end to end.
    Protocol {
        /// Experiment name; omit with --list.
        experiment: Option<String>,
        #[arg(long)]
        list: bool,
        /// Corpus the experiment trains on.
        #[arg(long)]
        data_root: Option<PathBuf>,
        /// Corpus used for external validation.
        #[arg(long)]
        external_root: Option<PathBuf>,
        #[arg(long)]
        include_normal: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        layout: LayoutArgs,
        #[command(flatten)]
        widths: WidthArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        table: TableArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Write a synthetic lesion corpus for smoke runs.
    MakeToy {
        #[arg(long)]
        out: PathBuf,
        /// busi (class subdirectories) or flat (images/ + masks/).
        #[arg(long, default_value = "busi")]
        layout: String,
        /// Images in total (busi: split between benign and malignant).
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Flat-layout details.
#[derive(Args, Debug, Clone, Serialize)]
pub struct LayoutArgs {
    #[arg(long, default_value = "images")]
    pub image_dir: String,
    #[arg(long, default_value = "masks")]
    pub mask_dir: String,
    #[arg(long, default_value = "_mask")]
    pub mask_suffix: String,
    /// `id,class` CSV labelling a flat corpus.
    #[arg(long)]
    pub class_file: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DataArgs {
    /// Corpus root.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Output directory of an earlier `prepare` run (manifest.tsv + folds.tsv); replaces --data-root.
    #[arg(long, conflicts_with = "data_root")]
    pub prepared: Option<PathBuf>,
    /// Dataset layout: busi | flat.
    #[arg(long, default_value = "busi")]
    pub dataset: String,
    #[arg(long)]
    pub include_normal: bool,
    #[arg(long, default_value_t = 4)]
    pub folds: usize,
    /// Restrict folds to one class: benign | malignant | normal | all.
    #[arg(long, default_value = "all")]
    pub class: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub layout: LayoutArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct WidthArgs {
    /// Channels at the first level.
    #[arg(long, default_value_t = 32)]
    pub base_width: usize,
    /// Channel cap.
    #[arg(long, default_value_t = 512)]
    pub cap: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ArchArgs {
    /// Registered variant name.
    #[arg(long, default_value = "deeper_mou_mdsc")]
    pub variant: String,
    /// Architecture file (key = value lines); overrides --variant.
    #[arg(long)]
    pub arch: Option<PathBuf>,
    #[command(flatten)]
    pub widths: WidthArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 12)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Defaults to 256 rounded up to the network divisor.
    #[arg(long)]
    pub input_size: Option<usize>,
    /// Folds trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub hflip: bool,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f32,
    #[arg(long, default_value_t = 0.05)]
    pub jaccard_floor: f64,
    /// Overlay images written per method.
    #[arg(long, default_value_t = 8)]
    pub overlays: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TableArgs {
    /// Method the others are tested against; defaults to `unet` when present, else the first method.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// image | fold
    #[arg(long, default_value = "image")]
    pub pairing: String,
    /// Spread shown in tables: per_fold | per_image
    #[arg(long, default_value = "per_fold")]
    pub grouping: String,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OutArgs {
    /// Parent directory of run directories.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Run directory name; defaults to `<command>-<timestamp>`.
    #[arg(long)]
    pub name: Option<String>,
}
