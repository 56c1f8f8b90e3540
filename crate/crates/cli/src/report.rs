//! Artifact emission and pass/fail bookkeeping.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    pub fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, pass, detail));
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'a str,
    config: &'a RunConfig,
    result: &'a T,
}

pub struct Writer<'a> {
    cfg: &'a RunConfig,
}

impl<'a> Writer<'a> {
    pub fn new(cfg: &'a RunConfig) -> Result<Self> {
        fs::create_dir_all(&cfg.output_dir)
            .with_context(|| format!("cannot create output directory {}", cfg.output_dir.display()))?;
        Ok(Writer { cfg })
    }

    fn write(&self, name: &str, text: &str, out: &mut Outcome) -> Result<()> {
        let path = self.cfg.output_dir.join(name);
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        out.artifacts.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T, out: &mut Outcome) -> Result<()> {
        let env = Envelope {
            version: nsfem::VERSION,
            config: self.cfg,
            result: value,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        self.write(name, &text, out)
    }

    /// Writes `body` after comment lines carrying the version and config.
    pub fn csv(&self, name: &str, body: &str, out: &mut Outcome) -> Result<()> {
        let text = format!(
            "# nsfem {}\n# config {}\n{body}",
            nsfem::VERSION,
            serde_json::to_string(self.cfg)?
        );
        self.write(name, &text, out)
    }
}
