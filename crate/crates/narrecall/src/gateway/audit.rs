//! Append-only JSONL record of every chat call.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use narrecall_core::PromptKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub timestamp: String,
    pub kind: PromptKind,
    pub model: String,
    pub prompt: String,
    pub completion: String,
}

/// One line per call, flushed before the call returns. The file is created
/// on the first append, so runs that make no calls leave none behind.
#[derive(Debug)]
pub struct AuditLog {
    path: PathBuf,
    file: Mutex<Option<File>>,
}

impl AuditLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self {
            path: path.to_owned(),
            file: Mutex::new(None),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &AuditRecord) -> std::io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(std::io::Error::other)?;
        line.push('\n');
        let mut slot = self.file.lock().unwrap_or_else(|e| e.into_inner());
        let f = match slot.as_mut() {
            Some(f) => f,
            None => slot.insert(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&self.path)?,
            ),
        };
        f.write_all(line.as_bytes())?;
        f.flush()
    }
}

pub fn read_audit(path: &Path) -> std::io::Result<Vec<AuditRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{} line {}: {e}", path.display(), i + 1),
            )
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_and_read_back_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("audit.jsonl");
        let log = AuditLog::open(&p).unwrap();
        let rec = AuditRecord {
            timestamp: "t".into(),
            kind: PromptKind::RecallScoring,
            model: "m".into(),
            prompt: "line one\n\"quoted\" \u{2013} dash".into(),
            completion: "(1, 2)\n".into(),
        };
        log.append(&rec).unwrap();
        log.append(&rec).unwrap();
        let back = read_audit(&p).unwrap();
        assert_eq!(back, vec![rec.clone(), rec]);
    }
}
