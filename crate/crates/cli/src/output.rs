//! Output files. Every file starts with the provenance of the run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use qpfk::io::write_dump;
use qpfk::TorusFunction;
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
}

impl Provenance {
    fn lines(&self) -> Vec<String> {
        vec![
            format!("{} {}", self.tool, self.version),
            format!("command {}", self.command),
            format!("config-sha256 {}", self.config_sha256),
            format!("seed {}", self.seed),
            format!("threads {}", self.threads),
        ]
    }
}

/// Doubles with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub struct Output {
    dir: PathBuf,
    prefix: String,
    pub provenance: Provenance,
}

impl Output {
    pub fn new(dir: PathBuf, prefix: String, provenance: Provenance) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self {
            dir,
            prefix,
            provenance,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{}{name}", self.prefix))
    }

    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        Ok((path, BufWriter::new(file)))
    }

    /// Coefficient dump; `extra` lines follow the provenance in the header.
    pub fn dump(
        &self,
        name: &str,
        f: &TorusFunction,
        extra: &[String],
    ) -> Result<PathBuf, CliError> {
        let (path, w) = self.create(name)?;
        let mut header = self.provenance.lines();
        header.extend_from_slice(extra);
        write_dump(f, &header, w).map_err(|e| CliError::io(&path, e))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    /// One JSON object per line; the first line holds the provenance.
    pub fn jsonl<T: Serialize>(&self, name: &str, records: &[T]) -> Result<PathBuf, CliError> {
        let (path, mut w) = self.create(name)?;
        let io = |e: std::io::Error| CliError::io(&path, e);
        let head = serde_json::json!({ "provenance": &self.provenance });
        writeln!(w, "{head}").map_err(io)?;
        for r in records {
            let line = serde_json::to_string(r).expect("records serialize");
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    /// CSV table behind `#` provenance lines.
    pub fn csv(
        &self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<PathBuf, CliError> {
        let (path, mut w) = self.create(name)?;
        let io = |e: std::io::Error| CliError::io(&path, e);
        for line in self.provenance.lines() {
            writeln!(w, "# {line}").map_err(io)?;
        }
        let mut table = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| CliError::io(&path, e.into());
        table.write_record(header).map_err(csv_err)?;
        for row in rows {
            table.write_record(row).map_err(csv_err)?;
        }
        table.flush().map_err(io)?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    /// Pretty JSON document with a `provenance` member.
    pub fn json(&self, name: &str, body: serde_json::Value) -> Result<PathBuf, CliError> {
        let (path, mut w) = self.create(name)?;
        let io = |e: std::io::Error| CliError::io(&path, e);
        let mut doc = serde_json::json!({ "provenance": &self.provenance });
        if let (Some(d), serde_json::Value::Object(b)) = (doc.as_object_mut(), body) {
            d.extend(b);
        }
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| io(e.into()))?;
        writeln!(w).map_err(io)?;
        w.flush().map_err(io)?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }
}

/// Reads `# key value` header lines of a dump.
pub fn header_value(path: &Path, key: &str) -> Result<Option<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| l.trim_start_matches('#').trim().strip_prefix(key))
        .find_map(|rest| rest.strip_prefix(' ').map(|v| v.trim().to_string())))
}
