//! Data files with a provenance header: a `header` object in JSON, `#`
//! comment lines in CSV. Nothing time-dependent is written.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::linalg::CMatrix;
use crate::{Error, Result};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Header {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Header {
    pub fn new(command: &str, config_sha256: &str, seed: u64) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            config_sha256: config_sha256.into(),
            seed,
        }
    }

    fn csv_lines(&self) -> String {
        format!(
            "# tool: {}\n# version: {}\n# command: {}\n# config_sha256: {}\n# seed: {}\n",
            self.tool, self.version, self.command, self.config_sha256, self.seed
        )
    }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    header: &'a Header,
    data: &'a T,
}

/// Collects the files a command writes into one directory.
pub struct Writer {
    dir: PathBuf,
    header: Header,
    written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, header: Header) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), header, written: Vec::new() })
    }

    fn put(&mut self, name: &str, body: String) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, data: &T) -> Result<()> {
        let doc = Document { header: &self.header, data };
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        self.put(name, text)
    }

    /// A table with a column header row.
    pub fn csv(&mut self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut text = self.header.csv_lines();
        text.push_str(&columns.join(","));
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.put(name, text)
    }

    /// One component of a labelled matrix, written as a square table.
    pub fn matrix_csv(&mut self, name: &str, labels: &[String], m: &CMatrix, part: Part) -> Result<()> {
        let mut text = self.header.csv_lines();
        let _ = writeln!(text, "# part: {}", part.name());
        let _ = writeln!(text, ",{}", labels.join(","));
        for (i, label) in labels.iter().enumerate() {
            let row: Vec<String> = (0..m.ncols()).map(|j| num(part.of(m[(i, j)]))).collect();
            let _ = writeln!(text, "{label},{}", row.join(","));
        }
        self.put(name, text)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Part {
    Real,
    Imaginary,
}

impl Part {
    fn name(self) -> &'static str {
        match self {
            Part::Real => "real",
            Part::Imaginary => "imaginary",
        }
    }

    fn of(self, z: crate::linalg::C64) -> f64 {
        match self {
            Part::Real => z.re,
            Part::Imaginary => z.im,
        }
    }
}

/// Shortest round-trip formatting; `-0` is written as `0`.
pub fn num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v:e}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
