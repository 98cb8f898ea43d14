use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Provenance record written as `manifest.json` after every other output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub duration_seconds: f64,
}

/// Output directory that records what it writes.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
    inputs: BTreeMap<String, String>,
    started: Instant,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::input(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new(), inputs: BTreeMap::new(), started: Instant::now() })
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        let hash = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let path = self.root.join(name);
        let io_err = |e: std::io::Error| CliError::input(format!("cannot write {}: {e}", path.display()));
        let file = fs::File::create(&path).map_err(io_err)?;
        let mut out = BufWriter::new(file);
        f(&mut out).and_then(|_| out.flush()).map_err(io_err)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("serializable output");
        self.write_with(name, |out| writeln!(out, "{text}"))
    }

    /// Declarative plot description next to its CSV; any renderer can draw
    /// it from the named columns.
    pub fn write_plot(&mut self, name: &str, plot: PlotSpec<'_>) -> Result<(), CliError> {
        let series: Vec<Value> = plot.y.iter().map(|c| json!({ "column": c, "label": c })).collect();
        let spec = json!({
            "data": plot.data,
            "type": "line",
            "title": plot.title,
            "x": { "column": plot.x, "label": plot.xlabel, "scale": plot.xscale },
            "y": { "label": plot.ylabel, "scale": plot.yscale },
            "series": series,
        });
        self.write_json(name, &spec)
    }

    pub fn finish<C: Serialize>(mut self, command: &str, config: &C) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: command.to_string(),
            config: serde_json::to_value(config).expect("serializable config"),
            inputs: std::mem::take(&mut self.inputs),
            outputs: self.written.clone(),
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        self.write_json("manifest.json", &manifest)
    }
}

pub struct PlotSpec<'a> {
    pub data: &'a str,
    pub title: &'a str,
    pub x: &'a str,
    pub xlabel: &'a str,
    pub xscale: &'a str,
    pub y: &'a [&'a str],
    pub ylabel: &'a str,
    pub yscale: &'a str,
}
