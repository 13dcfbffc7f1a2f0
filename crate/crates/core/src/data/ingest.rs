use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::manifest::{ClassLabel, DatasetManifest, Sample};

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "bmp", "tif"];

/// Settings shared by all ingesters. Fields an ingester does not use are ignored.
#[derive(Clone, Debug)]
pub struct IngestOptions {
    pub include_normal: bool,
    /// Companion-file marker: `x.png` pairs with `x_mask.png`, `x_mask_1.png`, ...
    pub mask_suffix: String,
    /// Flat layout: image and mask subdirectories. When `image_dir` is absent the
    /// suffix convention is applied to the root itself.
    pub image_dir: String,
    pub mask_dir: String,
    /// Flat layout: optional `id,class` CSV.
    pub class_file: Option<PathBuf>,
    /// Dataset name recorded on every sample; defaults to the root directory name.
    pub source: Option<String>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            include_normal: false,
            mask_suffix: "_mask".into(),
            image_dir: "images".into(),
            mask_dir: "masks".into(),
            class_file: None,
            source: None,
        }
    }
}

pub trait Ingester: Send + Sync {
    fn name(&self) -> &'static str;
    fn ingest(&self, root: &Path, opts: &IngestOptions) -> Result<DatasetManifest>;
}

pub struct BusiIngester;
pub struct FlatIngester;

impl Ingester for BusiIngester {
    fn name(&self) -> &'static str {
        "busi"
    }

    fn ingest(&self, root: &Path, opts: &IngestOptions) -> Result<DatasetManifest> {
        ingest_busi_with(root, opts)
    }
}

impl Ingester for FlatIngester {
    fn name(&self) -> &'static str {
        "flat"
    }

    fn ingest(&self, root: &Path, opts: &IngestOptions) -> Result<DatasetManifest> {
        ingest_flat(root, opts)
    }
}

/// Dataset layouts selectable by name.
pub struct IngesterRegistry {
    entries: Vec<Box<dyn Ingester>>,
}

impl IngesterRegistry {
    pub fn with_defaults() -> Self {
        Self {
            entries: vec![Box::new(BusiIngester), Box::new(FlatIngester)],
        }
    }

    pub fn register(&mut self, ingester: Box<dyn Ingester>) {
        self.entries.retain(|e| e.name() != ingester.name());
        self.entries.push(ingester);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Ingester> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|e| e.as_ref())
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown dataset layout '{name}' (known: {})",
                    self.names().join(", ")
                ))
            })
    }
}

fn is_image(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if is_image(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Image stem a mask belongs to, if `mask_stem` is `<stem><suffix>` or `<stem><suffix>_<n>`.
fn mask_owner<'a>(mask_stem: &'a str, suffix: &str) -> Option<&'a str> {
    let pos = mask_stem.rfind(suffix)?;
    let rest = &mask_stem[pos + suffix.len()..];
    let numbered = rest
        .strip_prefix('_')
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()));
    (rest.is_empty() || numbered).then(|| &mask_stem[..pos])
}

fn check_readable(path: &Path) -> Result<(u32, u32)> {
    image::image_dimensions(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn check_sizes(image: &Path, masks: &[PathBuf]) -> Result<()> {
    let dims = check_readable(image)?;
    for m in masks {
        let md = check_readable(m)?;
        if md != dims {
            return Err(Error::Ingest(format!(
                "mask {} is {}x{} but image {} is {}x{}",
                m.display(),
                md.0,
                md.1,
                image.display(),
                dims.0,
                dims.1
            )));
        }
    }
    Ok(())
}

fn source_name(root: &Path, opts: &IngestOptions, fallback: &str) -> String {
    opts.source
        .clone()
        .or_else(|| root.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| fallback.to_string())
}

fn empty_with_warning(root: &Path, include_normal: bool) -> DatasetManifest {
    let msg = format!("no images found under {}", root.display());
    log::warn!("{msg}");
    DatasetManifest {
        samples: Vec::new(),
        include_normal,
        warnings: vec![msg],
    }
}

/// Class subdirectories (`benign/`, `malignant/`, `normal/`) each holding images and `_mask` companions.
pub fn ingest_busi(root: &Path, include_normal: bool) -> Result<DatasetManifest> {
    ingest_busi_with(
        root,
        &IngestOptions {
            include_normal,
            ..IngestOptions::default()
        },
    )
}

fn ingest_busi_with(root: &Path, opts: &IngestOptions) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::Ingest(format!(
            "{} is not a directory",
            root.display()
        )));
    }
    let source = source_name(root, opts, "busi");
    let mut class_dirs = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if !path.is_dir() {
            continue;
        }
        let name = path
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .to_ascii_lowercase();
        let class = match name.as_str() {
            "benign" => ClassLabel::Benign,
            "malignant" => ClassLabel::Malignant,
            "normal" => ClassLabel::Normal,
            _ => {
                log::debug!("skipping non-class directory {}", path.display());
                continue;
            }
        };
        class_dirs.push((class, path));
    }
    class_dirs.sort();

    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    let mut seen_any = false;
    for (class, dir) in class_dirs {
        let files = image_files(&dir)?;
        seen_any |= !files.is_empty();
        if class == ClassLabel::Normal && !opts.include_normal {
            continue;
        }
        let mut images: BTreeMap<String, PathBuf> = BTreeMap::new();
        let mut masks: Vec<(String, PathBuf)> = Vec::new();
        for f in files {
            let s = stem(&f);
            match mask_owner(&s, &opts.mask_suffix) {
                Some(owner) => masks.push((owner.to_string(), f)),
                None => {
                    images.insert(s, f);
                }
            }
        }
        let mut by_owner: HashMap<String, Vec<PathBuf>> = HashMap::new();
        for (owner, path) in masks {
            if images.contains_key(&owner) {
                by_owner.entry(owner).or_default().push(path);
            } else {
                let msg = format!("mask {} has no matching image", path.display());
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
        for (s, image_path) in images {
            let mut mask_paths = by_owner.remove(&s).unwrap_or_default();
            if mask_paths.is_empty() {
                return Err(Error::Ingest(format!(
                    "image {} has no mask files",
                    image_path.display()
                )));
            }
            mask_paths.sort();
            check_sizes(&image_path, &mask_paths)?;
            samples.push(Sample {
                id: format!("{class}/{s}"),
                image_path,
                mask_paths,
                class,
                source: source.clone(),
            });
        }
    }
    if !seen_any {
        return Ok(empty_with_warning(root, opts.include_normal));
    }
    let mut manifest = DatasetManifest::new(samples, opts.include_normal)?;
    manifest.warnings = warnings;
    log::info!("ingested {}: {}", root.display(), manifest.summary());
    Ok(manifest)
}

fn read_class_file(path: &Path) -> Result<HashMap<String, ClassLabel>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = HashMap::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() < 2 || rec[0].eq_ignore_ascii_case("id") {
            continue;
        }
        out.insert(rec[0].to_string(), ClassLabel::parse(&rec[1])?);
    }
    Ok(out)
}

/// Parallel `images/` and `masks/` directories (mask stems either equal the image stem or add the
/// suffix), or, without an image directory, image and `_mask` files side by side in the root.
pub fn ingest_flat(root: &Path, opts: &IngestOptions) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::Ingest(format!(
            "{} is not a directory",
            root.display()
        )));
    }
    let source = source_name(root, opts, "flat");
    let image_dir = root.join(&opts.image_dir);
    let (images, masks) = if image_dir.is_dir() {
        let mask_dir = root.join(&opts.mask_dir);
        if !mask_dir.is_dir() {
            return Err(Error::Ingest(format!(
                "mask directory {} does not exist",
                mask_dir.display()
            )));
        }
        let images: Vec<(String, PathBuf)> = image_files(&image_dir)?
            .into_iter()
            .map(|p| (stem(&p), p))
            .collect();
        let masks: Vec<(String, PathBuf)> = image_files(&mask_dir)?
            .into_iter()
            .map(|p| {
                let s = stem(&p);
                let owner = mask_owner(&s, &opts.mask_suffix).unwrap_or(&s).to_string();
                (owner, p)
            })
            .collect();
        (images, masks)
    } else {
        let mut images = Vec::new();
        let mut masks = Vec::new();
        for p in image_files(root)? {
            let s = stem(&p);
            match mask_owner(&s, &opts.mask_suffix) {
                Some(owner) => masks.push((owner.to_string(), p)),
                None => images.push((s, p)),
            }
        }
        (images, masks)
    };
    if images.is_empty() && masks.is_empty() {
        return Ok(empty_with_warning(root, opts.include_normal));
    }

    let mut by_owner: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for (owner, p) in masks {
        by_owner.entry(owner).or_default().push(p);
    }
    let image_stems: std::collections::HashSet<&str> =
        images.iter().map(|(s, _)| s.as_str()).collect();
    let mut orphans: Vec<String> = images
        .iter()
        .filter(|(s, _)| !by_owner.contains_key(s))
        .map(|(_, p)| p.display().to_string())
        .collect();
    for (owner, paths) in &by_owner {
        if !image_stems.contains(owner.as_str()) {
            orphans.extend(paths.iter().map(|p| p.display().to_string()));
        }
    }
    if !orphans.is_empty() {
        return Err(Error::Ingest(format!(
            "{} images but masks for {} stems; orphans: {}",
            images.len(),
            by_owner.len(),
            orphans.join(", ")
        )));
    }

    let classes = opts
        .class_file
        .as_deref()
        .map(read_class_file)
        .transpose()?
        .unwrap_or_default();
    let mut samples = Vec::with_capacity(images.len());
    for (s, image_path) in images {
        let mut mask_paths = by_owner.remove(&s).unwrap_or_default();
        mask_paths.sort();
        check_sizes(&image_path, &mask_paths)?;
        let class = classes.get(&s).copied().unwrap_or(ClassLabel::Unlabeled);
        samples.push(Sample {
            id: s,
            image_path,
            mask_paths,
            class,
            source: source.clone(),
        });
    }
    let manifest = DatasetManifest::new(samples, opts.include_normal)?;
    log::info!("ingested {}: {}", root.display(), manifest.summary());
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_owner_variants() {
        assert_eq!(mask_owner("benign (1)_mask", "_mask"), Some("benign (1)"));
        assert_eq!(mask_owner("benign (1)_mask_2", "_mask"), Some("benign (1)"));
        assert_eq!(mask_owner("benign (1)", "_mask"), None);
        assert_eq!(mask_owner("x_mask_b", "_mask"), None);
    }
}
