use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use nunet_core::arch::fingerprint;

/// Output directory of one command invocation, holding the resolved configuration.
pub struct RunDir {
    pub path: PathBuf,
    pub command: String,
    pub fingerprint: String,
}

impl RunDir {
    /// `<out>/<name>` or `<out>/<command>-<timestamp>`; `resolved` is written to `run_config.json`.
    pub fn create(out: &Path, name: Option<&str>, command: &str, resolved: Value) -> Result<Self> {
        let path = match name {
            Some(n) => out.join(n),
            None => {
                let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S").to_string();
                let mut p = out.join(format!("{command}-{stamp}"));
                let mut i = 2;
                while p.exists() {
                    p = out.join(format!("{command}-{stamp}-{i}"));
                    i += 1;
                }
                p
            }
        };
        std::fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        let fp = fingerprint(&serde_json::to_string(&without_execution_keys(
            resolved.clone(),
        ))?);
        let doc = json!({
            "command": command,
            "fingerprint": fp,
            "created": chrono::Local::now().to_rfc3339(),
            "version": env!("CARGO_PKG_VERSION"),
            "config": resolved,
        });
        std::fs::write(
            path.join("run_config.json"),
            serde_json::to_string_pretty(&doc)? + "\n",
        )?;
        log::info!("writing to {}", path.display());
        Ok(Self {
            path,
            command: command.into(),
            fingerprint: fp,
        })
    }

    pub fn join(&self, p: impl AsRef<Path>) -> PathBuf {
        self.path.join(p)
    }

    /// Comment lines leading every emitted table.
    pub fn header(&self) -> String {
        format!(
            "nunet {}\nconfig fingerprint: {}",
            self.command, self.fingerprint
        )
    }

    pub fn write_table(&self, file: &str, body: &str) -> Result<PathBuf> {
        let mut text = String::new();
        for line in self.header().lines() {
            let _ = writeln!(text, "# {line}");
        }
        text.push_str(body);
        let path = self.join(file);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn write_markdown(&self, file: &str, title: &str, body: &str) -> Result<PathBuf> {
        let mut text = String::new();
        let _ = writeln!(text, "<!-- {} -->", self.header().replace('\n', "; "));
        let _ = writeln!(text, "# {title}\n");
        text.push_str(body);
        let path = self.join(file);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Settings that change how a run executes but not what it computes.
const EXECUTION_KEYS: [&str; 2] = ["jobs", "overlays"];

fn without_execution_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => Value::Object(
            map.into_iter()
                .filter(|(k, _)| !EXECUTION_KEYS.contains(&k.as_str()))
                .map(|(k, v)| (k, without_execution_keys(v)))
                .collect(),
        ),
        Value::Array(items) => {
            Value::Array(items.into_iter().map(without_execution_keys).collect())
        }
        other => other,
    }
}

pub fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("argument structs serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn execution_keys_do_not_change_the_fingerprint() {
        let tmp = tempfile::tempdir().unwrap();
        let a = RunDir::create(
            tmp.path(),
            Some("a"),
            "cv",
            json!({ "train": { "epochs": 2, "jobs": 1 } }),
        )
        .unwrap();
        let b = RunDir::create(
            tmp.path(),
            Some("b"),
            "cv",
            json!({ "train": { "epochs": 2, "jobs": 4 } }),
        )
        .unwrap();
        let c = RunDir::create(
            tmp.path(),
            Some("c"),
            "cv",
            json!({ "train": { "epochs": 3, "jobs": 1 } }),
        )
        .unwrap();
        assert_eq!(a.fingerprint, b.fingerprint);
        assert_ne!(a.fingerprint, c.fingerprint);
        assert!(std::fs::read_to_string(b.join("run_config.json"))
            .unwrap()
            .contains("\"jobs\": 4"));
    }
}
