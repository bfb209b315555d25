//! CSV bodies, metadata sidecars and all-or-nothing writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use tempfile::NamedTempFile;

/// Seventeen significant digits: enough to round-trip any double.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Key/value metadata shared by a CSV header and its `.meta` sidecar.
#[derive(Clone, Debug, Default)]
pub struct Meta {
    pub pairs: Vec<(String, String)>,
}

impl Meta {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.pairs.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn lines(&self, prefix: &str) -> String {
        self.pairs
            .iter()
            .map(|(k, v)| format!("{prefix}{k}={}\n", v.replace('\n', " ")))
            .collect()
    }
}

pub fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// `# key=value` header, column names, then rows.
pub fn csv(header: &Meta, columns: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<Vec<u8>> {
    let mut out = header.lines("# ").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(columns)?;
        for row in rows {
            if row.len() != columns.len() {
                bail!("row has {} fields, expected {}", row.len(), columns.len());
            }
            w.write_record(row.iter().map(|&x| num(x)))?;
        }
        w.flush()?;
    }
    Ok(out)
}

pub fn key_values(meta: &Meta) -> Vec<u8> {
    meta.lines("").into_bytes()
}

/// Reads a numeric CSV, skipping `#` lines. Returns the column names and
/// the columns.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut cols = vec![Vec::new(); names.len()];
    for (i, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: record {}", path.display(), i + 1))?;
        for (c, field) in rec.iter().enumerate() {
            let x: f64 = field
                .parse()
                .with_context(|| format!("{}: record {}: `{field}` is not a number", path.display(), i + 1))?;
            cols[c].push(x);
        }
    }
    Ok((names, cols))
}

/// A file to be written into the output directory.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub body: Vec<u8>,
}

/// Writes every artifact via temp file and rename, reads each back, and
/// removes everything written so far if any step fails.
pub fn commit(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let result = (|| -> Result<()> {
        for a in artifacts {
            let path = dir.join(&a.name);
            let mut tmp = NamedTempFile::new_in(dir)?;
            tmp.write_all(&a.body)?;
            tmp.as_file().sync_all()?;
            tmp.persist(&path).with_context(|| format!("writing {}", path.display()))?;
            written.push(path.clone());
            if fs::read(&path)? != a.body {
                bail!("{} did not read back identically", path.display());
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        for p in &written {
            let _ = fs::remove_file(p);
        }
        return Err(e);
    }
    Ok(written)
}
