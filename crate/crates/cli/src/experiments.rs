//! Named end-to-end experiments, one per published evaluation setting.

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde_json::json;

use nunet_core::data::{make_folds, ClassLabel};

use crate::args::{LayoutArgs, OutArgs, TableArgs, TrainArgs, WidthArgs};
use crate::commands::{
    ablation_methods, collect_checkpoints, ingest, render, run_external, run_methods, train_config,
    usage,
};
use crate::run::{to_value, RunDir};

/// Inputs shared by every experiment.
pub struct ProtocolInputs<'a> {
    pub data_root: Option<&'a Path>,
    pub external_root: Option<&'a Path>,
    pub include_normal: bool,
    pub seed: u64,
    pub layout: &'a LayoutArgs,
    pub widths: &'a WidthArgs,
    pub train: &'a TrainArgs,
    pub table: &'a TableArgs,
    pub out: &'a OutArgs,
}

impl ProtocolInputs<'_> {
    fn data_root(&self) -> Result<&Path> {
        self.data_root
            .ok_or_else(|| usage("--data-root is required"))
    }

    fn external_root(&self) -> Result<&Path> {
        self.external_root
            .ok_or_else(|| usage("--external-root is required for external validation"))
    }
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;

    fn description(&self) -> String;

    /// The documented invocation.
    fn command_line(&self) -> String;

    fn run(&self, inputs: &ProtocolInputs) -> Result<PathBuf>;
}

/// k-fold cross-validation of several variants on one corpus.
struct CvExperiment {
    name: &'static str,
    corpus: &'static str,
    dataset: &'static str,
    folds: usize,
    class: Option<ClassLabel>,
    variants: &'static [&'static str],
}

/// Train by cross-validation on one corpus, then apply every fold checkpoint to another.
struct ExternalExperiment {
    name: &'static str,
    train_corpus: &'static str,
    train_dataset: &'static str,
    external_corpus: &'static str,
    external_dataset: &'static str,
    variants: &'static [&'static str],
}

const LADDER: &[&str] = &["unet", "deeper", "deeper_mou", "deeper_mou_mdsc"];
const PAIR: &[&str] = &["unet", "deeper_mou_mdsc"];

fn run_dir(inputs: &ProtocolInputs, name: &str, config: serde_json::Value) -> Result<RunDir> {
    RunDir::create(
        &inputs.out.out,
        inputs.out.name.as_deref(),
        &format!("protocol {name}"),
        config,
    )
}

fn base_config(name: &str, inputs: &ProtocolInputs) -> serde_json::Value {
    json!({
        "experiment": name,
        "data_root": inputs.data_root,
        "external_root": inputs.external_root,
        "include_normal": inputs.include_normal,
        "seed": inputs.seed,
        "layout": to_value(inputs.layout),
        "widths": to_value(inputs.widths),
        "train": to_value(inputs.train),
        "table": to_value(inputs.table),
    })
}

impl Experiment for CvExperiment {
    fn name(&self) -> &'static str {
        self.name
    }

    fn description(&self) -> String {
        let class = self
            .class
            .map_or(String::new(), |c| format!(", {c} images only"));
        format!(
            "{}-fold cross-validation on {}{class}; variants {}",
            self.folds,
            self.corpus,
            self.variants.join(", ")
        )
    }

    fn command_line(&self) -> String {
        format!("nunet protocol {} --data-root <{}>", self.name, self.corpus)
    }

    fn run(&self, inputs: &ProtocolInputs) -> Result<PathBuf> {
        let root = inputs.data_root()?;
        let methods = ablation_methods(
            &self
                .variants
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>(),
            inputs.widths,
            inputs.seed,
        )?;
        let mut cfg = train_config(
            inputs.train,
            inputs.seed,
            methods.iter().map(|m| m.1.divisor()).max().unwrap_or(1),
        );
        if let Some(s) = inputs.train.input_size {
            cfg.input_size = s;
        }
        let manifest = ingest(root, self.dataset, inputs.include_normal, inputs.layout)?;
        let plan = make_folds(&manifest, self.folds, inputs.seed, self.class)?;
        let run = run_dir(inputs, self.name, base_config(self.name, inputs))?;
        let runs = run_methods(&run, &methods, &manifest, &plan, &cfg)?;
        render(
            &run,
            &runs,
            inputs.table,
            "table",
            &self.description(),
            inputs.train.overlays,
        )?;
        Ok(run.path)
    }
}

impl Experiment for ExternalExperiment {
    fn name(&self) -> &'static str {
        self.name
    }

    fn description(&self) -> String {
        format!(
            "{} checkpoints from 4-fold cross-validation on {} applied to {}; variants {}",
            self.train_corpus,
            self.train_corpus,
            self.external_corpus,
            self.variants.join(", ")
        )
    }

    fn command_line(&self) -> String {
        format!(
            "nunet protocol {} --data-root <{}> --external-root <{}>",
            self.name, self.train_corpus, self.external_corpus
        )
    }

    fn run(&self, inputs: &ProtocolInputs) -> Result<PathBuf> {
        let root = inputs.data_root()?;
        let ext_root = inputs.external_root()?;
        let methods = ablation_methods(
            &self
                .variants
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>(),
            inputs.widths,
            inputs.seed,
        )?;
        let cfg = train_config(
            inputs.train,
            inputs.seed,
            methods.iter().map(|m| m.1.divisor()).max().unwrap_or(1),
        );
        let manifest = ingest(
            root,
            self.train_dataset,
            inputs.include_normal,
            inputs.layout,
        )?;
        let external = ingest(
            ext_root,
            self.external_dataset,
            inputs.include_normal,
            inputs.layout,
        )?;
        let plan = make_folds(&manifest, 4, inputs.seed, None)?;
        let run = run_dir(inputs, self.name, base_config(self.name, inputs))?;

        let train_run = RunDir::create(
            &run.path,
            Some("train"),
            &format!("protocol {} train", self.name),
            base_config(self.name, inputs),
        )?;
        let trained = run_methods(&train_run, &methods, &manifest, &plan, &cfg)?;
        render(
            &train_run,
            &trained,
            inputs.table,
            "table",
            &format!("Cross-validation on {}", self.train_corpus),
            inputs.train.overlays,
        )?;

        let groups = collect_checkpoints(std::slice::from_ref(&train_run.path))?;
        let ext_run = RunDir::create(
            &run.path,
            Some("external"),
            &format!("protocol {} external", self.name),
            base_config(self.name, inputs),
        )?;
        let applied = run_external(&ext_run, &groups, &external, &cfg)?;
        render(
            &ext_run,
            &applied,
            inputs.table,
            "table",
            &self.description(),
            inputs.train.overlays,
        )?;
        Ok(run.path)
    }
}

pub struct ExperimentRegistry {
    entries: Vec<Box<dyn Experiment>>,
}

impl ExperimentRegistry {
    pub fn with_defaults() -> Self {
        let cv = |name, corpus, dataset, folds, class, variants| -> Box<dyn Experiment> {
            Box::new(CvExperiment {
                name,
                corpus,
                dataset,
                folds,
                class,
                variants,
            })
        };
        let entries: Vec<Box<dyn Experiment>> = vec![
            cv("busi-4fold", "BUSI", "busi", 4, None, LADDER),
            cv("datasetb-4fold", "DatasetB", "flat", 4, None, LADDER),
            cv(
                "busi-benign-4fold",
                "BUSI",
                "busi",
                4,
                Some(ClassLabel::Benign),
                PAIR,
            ),
            cv(
                "busi-malignant-3fold",
                "BUSI",
                "busi",
                3,
                Some(ClassLabel::Malignant),
                PAIR,
            ),
            Box::new(ExternalExperiment {
                name: "external-b-on-busi",
                train_corpus: "BUSI",
                train_dataset: "busi",
                external_corpus: "DatasetB",
                external_dataset: "flat",
                variants: PAIR,
            }),
            Box::new(ExternalExperiment {
                name: "external-stu-on-b",
                train_corpus: "DatasetB",
                train_dataset: "flat",
                external_corpus: "STU",
                external_dataset: "flat",
                variants: PAIR,
            }),
        ];
        Self { entries }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Experiment> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|e| e.as_ref())
            .ok_or_else(|| {
                usage(format!(
                    "unknown experiment '{name}'; known experiments: {}",
                    self.names().join(", ")
                ))
            })
    }

    pub fn listing(&self) -> String {
        self.entries
            .iter()
            .map(|e| {
                format!(
                    "{:<22} {}\n{:<22} {}\n",
                    e.name(),
                    e.description(),
                    "",
                    e.command_line()
                )
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_experiments() {
        let r = ExperimentRegistry::with_defaults();
        assert_eq!(r.names().len(), 6);
        assert!(r
            .get("busi-malignant-3fold")
            .unwrap()
            .description()
            .contains("3-fold"));
        let err = r.get("nope").err().unwrap().to_string();
        assert!(err.contains("external-stu-on-b"), "{err}");
    }
}
