//! Corpus ingestion, preprocessing and fold planning.

mod folds;
mod ingest;
mod manifest;
mod preprocess;
pub mod synth;

pub use folds::{make_folds, FoldPlan};
pub use ingest::{
    ingest_busi, ingest_flat, BusiIngester, FlatIngester, IngestOptions, Ingester, IngesterRegistry,
};
pub use manifest::{ClassLabel, DatasetManifest, Sample};
pub use preprocess::{
    check_input_size, load_gray, load_mask, merge_masks, preprocess, preprocess_all, resize_image,
    Prepared, DEFAULT_INPUT_SIZE,
};
