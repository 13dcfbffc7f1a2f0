use std::collections::{BTreeSet, HashMap};
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::manifest::{ClassLabel, DatasetManifest};

const HEADER: &str = "# nunet fold plan v1";

/// k-fold assignment of manifest ids; `assignment` is in manifest order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub class_filter: Option<ClassLabel>,
    pub assignment: Vec<(String, usize)>,
}

/// Seeded shuffle of the filtered ids, then round-robin over the shuffled order.
pub fn make_folds(
    manifest: &DatasetManifest,
    k: usize,
    seed: u64,
    class_filter: Option<ClassLabel>,
) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::config(format!(
            "fold count must be at least 2, got {k}"
        )));
    }
    let ids: Vec<&str> = manifest
        .filtered(class_filter)
        .into_iter()
        .map(|s| s.id.as_str())
        .collect();
    if ids.len() < k {
        return Err(Error::Data(format!(
            "{} samples{} cannot fill {k} folds",
            ids.len(),
            class_filter
                .map(|c| format!(" of class {c}"))
                .unwrap_or_default()
        )));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; ids.len()];
    for (pos, &idx) in order.iter().enumerate() {
        fold[idx] = pos % k;
    }
    Ok(FoldPlan {
        k,
        seed,
        class_filter,
        assignment: ids
            .iter()
            .zip(fold)
            .map(|(id, f)| (id.to_string(), f))
            .collect(),
    })
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment
            .iter()
            .find(|(i, _)| i == id)
            .map(|(_, f)| *f)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for (_, f) in &self.assignment {
            sizes[*f] += 1;
        }
        sizes
    }

    /// Held-out ids of fold `f`, in manifest order.
    pub fn test_ids(&self, f: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, g)| *g == f)
            .map(|(i, _)| i.as_str())
            .collect()
    }

    /// Training ids of fold `f`: every id outside fold `f`.
    pub fn train_ids(&self, f: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, g)| *g != f)
            .map(|(i, _)| i.as_str())
            .collect()
    }

    /// Errors when any id sits in both splits of a fold or a split is empty.
    pub fn check_leakage(&self) -> Result<()> {
        for f in 0..self.k {
            let test: BTreeSet<&str> = self.test_ids(f).into_iter().collect();
            let train = self.train_ids(f);
            if test.is_empty() || train.is_empty() {
                return Err(Error::Data(format!("fold {f} has an empty split")));
            }
            if let Some(id) = train.iter().find(|i| test.contains(*i)) {
                return Err(Error::Data(format!(
                    "id '{id}' is in both train and test of fold {f}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = Vec::new();
        writeln!(out, "{HEADER}").ok();
        writeln!(
            out,
            "# k={} seed={} filter={}",
            self.k,
            self.seed,
            self.class_filter.map_or("all", |c| c.as_str())
        )
        .ok();
        {
            let mut w = csv::WriterBuilder::new()
                .delimiter(b'\t')
                .from_writer(&mut out);
            w.write_record(["id", "fold"]).expect("in-memory write");
            for (id, f) in &self.assignment {
                w.write_record([id.as_str(), &f.to_string()])
                    .expect("in-memory write");
            }
            w.flush().ok();
        }
        String::from_utf8(out).expect("fold plan text is utf-8")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let meta = text
            .lines()
            .filter_map(|l| l.strip_prefix('#'))
            .find(|l| l.contains("k="))
            .ok_or_else(|| Error::Data("fold plan lacks its k/seed/filter line".into()))?;
        let fields: HashMap<&str, &str> = meta
            .split_whitespace()
            .filter_map(|kv| kv.split_once('='))
            .collect();
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Data(format!("fold plan lacks '{k}'")))
        };
        let k: usize = get("k")?
            .parse()
            .map_err(|_| Error::Data("bad k in fold plan".into()))?;
        let seed: u64 = get("seed")?
            .parse()
            .map_err(|_| Error::Data("bad seed in fold plan".into()))?;
        let class_filter = match get("filter")? {
            "all" => None,
            c => Some(ClassLabel::parse(c)?),
        };
        let mut r = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut assignment = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let f: usize = rec
                .get(1)
                .and_then(|v| v.parse().ok())
                .filter(|f| *f < k)
                .ok_or_else(|| Error::Data(format!("bad fold index in row {:?}", rec)))?;
            assignment.push((rec[0].to_string(), f));
        }
        Ok(Self {
            k,
            seed,
            class_filter,
            assignment,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
