//! Tab-separated table output with a `#`-prefixed metadata header block.
//! Reals print with six decimal places and a stable column order, so table
//! bytes are reproducible across runs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::Context;

pub fn fmt_real(value: f64) -> String {
    if value.is_nan() {
        "NA".to_string()
    } else {
        format!("{value:.6}")
    }
}

/// Shortest representation that parses back to the identical f64. Used for
/// per-user metrics so the stats stage reproduces inline results exactly.
pub fn fmt_exact(value: f64) -> String {
    if value.is_nan() {
        "NA".to_string()
    } else {
        format!("{value}")
    }
}

pub struct TableWriter {
    out: BufWriter<File>,
}

impl TableWriter {
    pub fn create(
        path: &Path,
        metadata: &[(&str, String)],
        columns: &[&str],
    ) -> anyhow::Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file =
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut out = BufWriter::new(file);
        for (key, value) in metadata {
            writeln!(out, "# {key}: {value}")?;
        }
        writeln!(out, "{}", columns.join("\t"))?;
        Ok(Self { out })
    }

    pub fn row(&mut self, fields: &[String]) -> anyhow::Result<()> {
        writeln!(self.out, "{}", fields.join("\t"))?;
        Ok(())
    }

    pub fn finish(mut self) -> anyhow::Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Metadata pairs, column names, and data rows of a parsed table.
pub type ParsedTable = (Vec<(String, String)>, Vec<String>, Vec<Vec<String>>);

/// Reads a table written by [`TableWriter`]: metadata, column names, rows.
pub fn read_table(path: &Path) -> anyhow::Result<ParsedTable> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut metadata = Vec::new();
    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some((key, value)) = rest.split_once(": ") {
                metadata.push((key.to_string(), value.to_string()));
            }
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
        match &columns {
            None => columns = Some(fields),
            Some(cols) => {
                anyhow::ensure!(
                    fields.len() == cols.len(),
                    "row width {} != header width {} in {}",
                    fields.len(),
                    cols.len(),
                    path.display()
                );
                rows.push(fields);
            }
        }
    }
    let columns = columns.with_context(|| format!("{} has no header row", path.display()))?;
    Ok((metadata, columns, rows))
}
