//! File formats: pretty JSON documents, JSONL record streams, CSV tables and
//! the on-disk corpus layout (`narratives/*.json`, `lures/*.json`).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use narrecall_core::corpus::CorpusError;
use narrecall_core::{LurePool, Narrative};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}{}: {source}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Json {
        path: PathBuf,
        line: Option<usize>,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Corpus { path: PathBuf, source: CorpusError },
}

fn fs_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Fs {
        path: path.to_owned(),
        source,
    }
}

pub fn ensure_parent(path: &Path) -> Result<(), IoError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(fs_err(p)),
        _ => Ok(()),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(fs_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_owned(),
        line: None,
        source,
    })
}

/// Pretty-printed with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json {
        path: path.to_owned(),
        line: None,
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(fs_err(path))
}

/// Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(fs_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(fs_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| IoError::Json {
            path: path.to_owned(),
            line: Some(i + 1),
            source,
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<(), IoError> {
    ensure_parent(path)?;
    let mut w = BufWriter::new(File::create(path).map_err(fs_err(path))?);
    for r in records {
        let line = serde_json::to_string(r).map_err(|source| IoError::Json {
            path: path.to_owned(),
            line: None,
            source,
        })?;
        writeln!(w, "{line}").map_err(fs_err(path))?;
    }
    w.flush().map_err(fs_err(path))
}

/// A CSV table held in memory until written.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        ensure_parent(path)?;
        let csv_err = |source| IoError::Csv {
            path: path.to_owned(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush().map_err(fs_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let csv_err = |source| IoError::Csv {
            path: path.to_owned(),
            source,
        };
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let header = r
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(String::from)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(csv_err)?.iter().map(String::from).collect());
        }
        Ok(Self { header, rows })
    }
}

/// Shortest round-trip decimal; empty for NaN so spreadsheets see a gap.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

/// Sorted `*.ext` files directly under `dir`; missing directory gives none.
pub fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, IoError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(fs_err(dir))? {
        let path = entry.map_err(fs_err(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Narratives and lure pools keyed by narrative id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub narratives: BTreeMap<String, Narrative>,
    pub lures: BTreeMap<String, LurePool>,
}

impl Corpus {
    /// Loads `dir/narratives/*.json` and `dir/lures/*.json`, validating each.
    /// Later directories override earlier ones on id collisions.
    pub fn load(dirs: &[&Path]) -> Result<Self, IoError> {
        let mut c = Corpus::default();
        for dir in dirs {
            for path in list_files(&dir.join("narratives"), "json")? {
                let n: Narrative = read_json(&path)?;
                n.validate().map_err(|source| IoError::Corpus {
                    path: path.clone(),
                    source,
                })?;
                c.narratives.insert(n.id.clone(), n);
            }
            for path in list_files(&dir.join("lures"), "json")? {
                let pool: LurePool = read_json(&path)?;
                c.lures.insert(pool.narrative_id.clone(), pool);
            }
        }
        // Pools whose narrative is absent (e.g. lures for a generation template)
        // are dropped with a warning rather than failing the whole load.
        let orphans: Vec<String> = c
            .lures
            .keys()
            .filter(|id| !c.narratives.contains_key(*id))
            .cloned()
            .collect();
        for id in orphans {
            log::info!("ignoring lure pool for unknown narrative `{id}`");
            c.lures.remove(&id);
        }
        for pool in c.lures.values() {
            let path = PathBuf::from(format!("lures/{}.json", pool.narrative_id));
            pool.validate_for(&c.narratives[&pool.narrative_id])
                .map_err(|source| IoError::Corpus { path, source })?;
        }
        Ok(c)
    }
}
