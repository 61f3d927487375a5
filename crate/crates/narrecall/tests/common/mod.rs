//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .unwrap()
}

/// Writes a config pointing the corpus at the bundled fixtures.
pub fn write_config(dir: &Path) -> PathBuf {
    let p = dir.join("narrecall.toml");
    let body = format!(
        "[service]\ncorpus_dir = {:?}\n\n[analysis]\nn_resamples = 200\nhit_rate_resamples = 200\nsimilarity_resamples = 200\n",
        fixtures().display().to_string()
    );
    std::fs::write(&p, body).unwrap();
    p
}

/// Runs the CLI with `--config` and `--data-dir` filled in.
pub fn cli(config: &Path, data: &Path, args: &[&str]) -> i32 {
    let mut argv = vec![
        "narrecall".to_string(),
        "--config".into(),
        config.display().to_string(),
        "--data-dir".into(),
        data.display().to_string(),
    ];
    argv.extend(args.iter().map(|s| s.to_string()));
    narrecall::cli::run(argv)
}

pub fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
