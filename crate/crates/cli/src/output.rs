//! CSV files with a `#` comment preamble.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub struct CsvOutput {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOutput {
    /// Creates `dir/name`, writes the preamble (tool version, command, the
    /// sorted config echo and any extra notes) and the header row.
    pub fn create(
        dir: &Path,
        name: &str,
        command: &str,
        config: &ExperimentConfig,
        notes: &[String],
        header: &[&str],
    ) -> Result<Self, CliError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut out = BufWriter::new(file);
        let mut preamble = format!("# spi {}\n# command: {command}\n", env!("CARGO_PKG_VERSION"));
        for (key, value) in &config.entries {
            preamble.push_str(&format!("# config: {key} = {value}\n"));
        }
        for note in notes {
            preamble.push_str(&format!("# {note}\n"));
        }
        out.write_all(preamble.as_bytes()).map_err(|e| CliError::io(&path, e))?;
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(header)?;
        Ok(Self { path, writer })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<(), CliError> {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.path)
    }
}

/// Shortest round-trip decimal form; infinities print as `inf`/`-inf`.
pub fn num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

pub fn timing(ms: f64, record: bool) -> String {
    if record { num(ms) } else { "0".into() }
}
