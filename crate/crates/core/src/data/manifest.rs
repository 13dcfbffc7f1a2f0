use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Benign,
    Malignant,
    Normal,
    Unlabeled,
}

impl ClassLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassLabel::Benign => "benign",
            ClassLabel::Malignant => "malignant",
            ClassLabel::Normal => "normal",
            ClassLabel::Unlabeled => "unlabeled",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "benign" => Ok(ClassLabel::Benign),
            "malignant" => Ok(ClassLabel::Malignant),
            "normal" => Ok(ClassLabel::Normal),
            "unlabeled" | "" => Ok(ClassLabel::Unlabeled),
            other => Err(Error::Data(format!("unknown class label '{other}'"))),
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub image_path: PathBuf,
    pub mask_paths: Vec<PathBuf>,
    pub class: ClassLabel,
    pub source: String,
}

/// Ordered sample list of one corpus.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub samples: Vec<Sample>,
    pub include_normal: bool,
    /// Non-fatal ingestion findings; not persisted.
    pub warnings: Vec<String>,
}

const HEADER: &str = "# nunet manifest v1";
const MASK_SEP: char = ';';

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    id: String,
    class: ClassLabel,
    source: String,
    image: String,
    masks: String,
}

impl DatasetManifest {
    pub fn new(samples: Vec<Sample>, include_normal: bool) -> Result<Self> {
        let m = Self {
            samples,
            include_normal,
            warnings: Vec::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in &self.samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id '{}'", s.id)));
            }
            if s.mask_paths.is_empty() {
                return Err(Error::Data(format!("sample '{}' has no masks", s.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn class_counts(&self) -> BTreeMap<ClassLabel, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.class).or_insert(0) += 1;
        }
        counts
    }

    /// e.g. `647 samples (437 benign, 210 malignant)`.
    pub fn summary(&self) -> String {
        let counts = self.class_counts();
        if counts.keys().all(|c| *c == ClassLabel::Unlabeled) {
            return format!("{} samples", self.len());
        }
        let parts: Vec<String> = counts.iter().map(|(c, n)| format!("{n} {c}")).collect();
        format!("{} samples ({})", self.len(), parts.join(", "))
    }

    /// Samples of one class (all samples when `class` is `None`), in manifest order.
    pub fn filtered(&self, class: Option<ClassLabel>) -> Vec<&Sample> {
        self.samples
            .iter()
            .filter(|s| class.is_none_or(|c| s.class == c))
            .collect()
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = Vec::new();
        writeln!(out, "{HEADER}").ok();
        writeln!(out, "# include_normal={}", self.include_normal).ok();
        {
            let mut w = csv::WriterBuilder::new()
                .delimiter(b'\t')
                .from_writer(&mut out);
            for s in &self.samples {
                let masks = s
                    .mask_paths
                    .iter()
                    .map(|p| {
                        let p = p.to_string_lossy();
                        if p.contains(MASK_SEP) {
                            Err(Error::Data(format!(
                                "mask path '{p}' contains '{MASK_SEP}'"
                            )))
                        } else {
                            Ok(p.into_owned())
                        }
                    })
                    .collect::<Result<Vec<_>>>()?
                    .join(&MASK_SEP.to_string());
                w.serialize(Row {
                    id: s.id.clone(),
                    class: s.class,
                    source: s.source.clone(),
                    image: s.image_path.to_string_lossy().into_owned(),
                    masks,
                })?;
            }
            w.flush().map_err(|e| Error::io("<manifest>", e))?;
        }
        Ok(String::from_utf8(out).expect("manifest text is utf-8"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut include_normal = false;
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            if let Some(v) = line
                .trim_start_matches('#')
                .trim()
                .strip_prefix("include_normal=")
            {
                include_normal = v.trim() == "true";
            }
        }
        let mut r = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut samples = Vec::new();
        for row in r.deserialize::<Row>() {
            let row = row?;
            samples.push(Sample {
                id: row.id,
                image_path: PathBuf::from(row.image),
                mask_paths: row
                    .masks
                    .split(MASK_SEP)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect(),
                class: row.class,
                source: row.source,
            });
        }
        Self::new(samples, include_normal)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
