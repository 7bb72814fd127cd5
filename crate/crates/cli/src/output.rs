use std::fs;
use std::path::{Path, PathBuf};

use kgscatter_core::fields::write_snapshot;
use kgscatter_core::FullState;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub kind: String,
    pub description: String,
}

/// Earliest time at which outgoing waves can re-enter the region of
/// interest through the periodic boundary, and the last time used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrapInfo {
    pub data_radius: f64,
    pub bound: f64,
    pub horizon: f64,
    pub exceeded: bool,
}

impl WrapInfo {
    pub fn new(data_radius: f64, bound: f64, horizon: f64) -> Self {
        WrapInfo {
            data_radius,
            bound,
            horizon,
            exceeded: horizon > bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_file: String,
    /// The effective configuration, as written to `config_file`.
    pub config: String,
    pub core_version: String,
    pub cli_version: String,
    pub threads: usize,
    pub wall_time_s: f64,
    pub wraparound: Option<WrapInfo>,
    pub files: Vec<OutputFile>,
}

/// Collects the files written into one output directory.
pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<OutputFile>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn record(&mut self, name: &str, kind: &str, description: &str) -> PathBuf {
        self.files.push(OutputFile {
            name: name.into(),
            kind: kind.into(),
            description: description.into(),
        });
        self.dir.join(name)
    }

    pub fn text(&mut self, name: &str, description: &str, body: &str) -> Result<(), CliError> {
        let path = self.record(name, "toml", description);
        fs::write(&path, body).map_err(io_err(&path))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, description: &str, value: &T) -> Result<(), CliError> {
        let path = self.record(name, "json", description);
        let body = serde_json::to_string_pretty(value).expect("serializable output");
        fs::write(&path, body + "\n").map_err(io_err(&path))
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, description: &str, rows: &[T]) -> Result<(), CliError> {
        let path = self.record(name, "csv", description);
        let to_io = |e: csv::Error| CliError::Io {
            path: path.clone(),
            source: e.into(),
        };
        let mut w = csv::Writer::from_path(&path).map_err(to_io)?;
        for r in rows {
            w.serialize(r).map_err(to_io)?;
        }
        w.flush().map_err(io_err(&path))
    }

    /// ψ and π in real space, see `kgscatter_core::fields::write_snapshot`.
    pub fn snapshot(&mut self, name: &str, t: f64, y: &FullState) -> Result<(), CliError> {
        let path = self.record(name, "snapshot", &format!("psi, pi at t = {t}"));
        let psi = y.fields.psi_real();
        let pi = y.fields.pi_real();
        write_snapshot(&path, &y.fields.grid, t, &[&psi.values, &pi.values]).map_err(io_err(&path))
    }

    pub fn finish(mut self, mut manifest: Manifest) -> Result<Manifest, CliError> {
        self.record("manifest.json", "json", "this manifest");
        manifest.files = self.files;
        let path = self.dir.join("manifest.json");
        let body = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
        fs::write(&path, body + "\n").map_err(io_err(&path))?;
        Ok(manifest)
    }
}
