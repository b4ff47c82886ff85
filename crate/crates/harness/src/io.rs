//! Instance files (a JSON array) and run logs (JSONL, one record per line).

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::warn;

use tracewarden_core::metrics::RunRecord;
use tracewarden_core::taskgen::TaskInstance;

pub fn read_instances(path: &Path) -> Result<Vec<TaskInstance>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Vec<TaskInstance> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut seen = BTreeSet::new();
    for inst in &v {
        if !seen.insert(inst.id.as_str()) {
            bail!("{}: duplicate instance id {:?}", path.display(), inst.id);
        }
    }
    Ok(v)
}

pub fn write_instances(path: &Path, instances: &[TaskInstance]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, instances)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reads a run log. A missing file is an empty log; an unterminated last line
/// (a write cut off by a crash) is dropped.
pub fn read_log(path: &Path) -> Result<Vec<RunRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if complete.len() < text.len() {
        warn!("{}: ignoring an unterminated last line", path.display());
    }
    complete
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}: bad record", path.display(), i + 1)))
        .collect()
}

pub fn read_logs(paths: &[impl AsRef<Path>]) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_log(p.as_ref())?);
    }
    Ok(out)
}

/// Appends records to a log, first cutting any partial last line.
pub struct LogWriter {
    file: File,
}

impl LogWriter {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        if path.exists() {
            let bytes = fs::read(path)?;
            let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            if keep < bytes.len() {
                OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).with_context(|| format!("opening {}", path.display()))?;
        Ok(Self { file })
    }

    pub fn append(&mut self, record: &RunRecord) -> Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}
