//! Trace corpora on disk: one `.trace` file per trace plus a
//! `manifest.json` listing them in order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_trace, serialize_trace, Trace};
use crate::error::CorpusError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model: String,
    pub task: String,
    pub seed: u64,
    pub traces: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.display().to_string(), source }
}

/// Writes `traces` as `<name>.trace` files and a manifest into `dir`.
pub fn write_corpus(dir: &Path, traces: &[(String, Trace)], mut manifest: Manifest) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    manifest.traces.clear();
    for (name, tr) in traces {
        let file = format!("{name}.trace");
        let path = dir.join(&file);
        fs::write(&path, serialize_trace(tr)).map_err(io_err(&path))?;
        manifest.traces.push(file);
    }
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

/// Loads the traces listed in `dir/manifest.json`, or every `.trace` file
/// in name order when there is no manifest. A path to a single trace
/// file loads just that file.
pub fn load_corpus(dir: &Path) -> Result<Vec<(String, Trace)>, CorpusError> {
    if dir.is_file() {
        return Ok(vec![load_one(dir)?]);
    }
    let manifest = dir.join(MANIFEST);
    let files: Vec<String> = if manifest.exists() {
        let text = fs::read_to_string(&manifest).map_err(io_err(&manifest))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| CorpusError::Manifest { path: manifest.display().to_string(), msg: e.to_string() })?;
        m.traces
    } else {
        let mut names: Vec<String> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".trace"))
            .collect();
        names.sort();
        names
    };
    files.iter().map(|f| load_one(&dir.join(f))).collect()
}

fn load_one(path: &Path) -> Result<(String, Trace), CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let tr = parse_trace(&text).map_err(|source| CorpusError::Trace { path: path.display().to_string(), source })?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok((name, tr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::InputEvent;

    #[test]
    fn round_trip_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let a = Trace::new(vec![InputEvent::mv(0, 1, 2), InputEvent::down(5), InputEvent::up(9)]);
        let b = Trace::new(vec![InputEvent::mv(3, -1, 0)]);
        let traces = vec![("b".to_string(), b), ("a".to_string(), a)];
        write_corpus(dir.path(), &traces, Manifest::default()).unwrap();
        let back = load_corpus(dir.path()).unwrap();
        assert_eq!(back, traces);
        fs::remove_file(dir.path().join(MANIFEST)).unwrap();
        let sorted = load_corpus(dir.path()).unwrap();
        assert_eq!(sorted[0].0, "a");
    }
}
