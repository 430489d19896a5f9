//! Training and test manifests: one utterance per line,
//! `<transcript> <wav-path> [<phone>:<start>-<end> ...]`.
//!
//! Multi-word transcripts join the words with `+`. Segment frames are
//! inclusive and counted from the first endpointed frame. Relative paths are
//! resolved against the manifest's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::train::Segment;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub words: Vec<String>,
    pub path: PathBuf,
    pub segments: Vec<Segment>,
}

impl ManifestEntry {
    pub fn transcript(&self) -> String {
        self.words.join("+")
    }
}

fn parse_segment(tok: &str) -> Option<Segment> {
    let (label, span) = tok.rsplit_once(':')?;
    let (a, b) = span.split_once('-')?;
    let (start, end) = (a.parse().ok()?, b.parse().ok()?);
    (!label.is_empty() && end >= start).then(|| Segment::new(label, start, end))
}

pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Vec<ManifestEntry>, ManifestError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| ManifestError::Malformed { line: i + 1, msg };
        let mut toks = line.split_whitespace();
        let transcript = toks.next().unwrap();
        let path = toks.next().ok_or_else(|| bad("missing wav path".into()))?;
        let words: Vec<String> = transcript.split('+').map(str::to_string).collect();
        if words.iter().any(String::is_empty) {
            return Err(bad(format!("bad transcript {transcript}")));
        }
        let segments = toks
            .map(|t| parse_segment(t).ok_or_else(|| bad(format!("bad segment {t}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let path = Path::new(path);
        let path = if path.is_absolute() { path.to_path_buf() } else { base_dir.join(path) };
        out.push(ManifestEntry { words, path, segments });
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new("")))
}

/// Writes entries with paths made relative to `base_dir` where possible.
pub fn format_manifest(entries: &[ManifestEntry], base_dir: &Path) -> String {
    let mut out = String::new();
    for e in entries {
        let path = e.path.strip_prefix(base_dir).unwrap_or(&e.path);
        write!(out, "{} {}", e.transcript(), path.display()).unwrap();
        for s in &e.segments {
            write!(out, " {s}").unwrap();
        }
        out.push('\n');
    }
    out
}
