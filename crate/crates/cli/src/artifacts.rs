use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Written into every artifact directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub fingerprint: String,
    pub config: serde_json::Value,
    #[serde(default)]
    pub inputs: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    pub outputs: serde_json::Map<String, serde_json::Value>,
}

pub const MANIFEST: &str = "manifest.json";

pub fn stage_dir(out: &Path, command: &str, fingerprint: &str) -> PathBuf {
    out.join(command).join(fingerprint)
}

pub fn require(path: &Path) -> Result<&Path, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Missing(path.to_path_buf()))
    }
}

/// True when `dir` holds a finished artifact for `fingerprint`.
pub fn is_cached(dir: &Path, fingerprint: &str) -> bool {
    let Ok(text) = fs::read_to_string(dir.join(MANIFEST)) else {
        return false;
    };
    serde_json::from_str::<Manifest>(&text).is_ok_and(|m| m.fingerprint == fingerprint)
}

/// Build an artifact in a scratch directory and move it into place, so a
/// directory at `dir` is always complete. `fill` writes everything except
/// the manifest and returns it.
pub fn publish<F>(dir: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&Path) -> Result<Manifest, CliError>,
{
    let parent = dir.parent().expect("stage dir has a parent");
    fs::create_dir_all(parent)?;
    let name = dir.file_name().expect("stage dir has a name").to_string_lossy();
    let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    let result = fill(&tmp).and_then(|manifest| {
        let body = serde_json::to_string_pretty(&manifest)?;
        fs::write(tmp.join(MANIFEST), body)?;
        if dir.exists() {
            fs::remove_dir_all(dir)?;
        }
        fs::rename(&tmp, dir)?;
        Ok(())
    });
    if result.is_err() {
        let _ = fs::remove_dir_all(&tmp);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(fp: &str) -> Manifest {
        Manifest {
            command: "train".into(),
            fingerprint: fp.into(),
            config: serde_json::Value::Null,
            inputs: Default::default(),
            outputs: Default::default(),
        }
    }

    #[test]
    fn publish_is_all_or_nothing() {
        let root = tempfile::tempdir().unwrap();
        let dir = stage_dir(root.path(), "train", "abc");
        let failed = publish(&dir, |tmp| {
            fs::write(tmp.join("partial.txt"), "x")?;
            Err(CliError::Runtime("boom".into()))
        });
        assert!(failed.is_err());
        assert!(!dir.exists());
        assert_eq!(fs::read_dir(dir.parent().unwrap()).unwrap().count(), 0);

        publish(&dir, |tmp| {
            fs::write(tmp.join("a.txt"), "y")?;
            Ok(manifest("abc"))
        })
        .unwrap();
        assert!(is_cached(&dir, "abc"));
        assert!(!is_cached(&dir, "other"));
        assert_eq!(fs::read_to_string(dir.join("a.txt")).unwrap(), "y");
    }

    #[test]
    fn require_reports_the_path() {
        let p = Path::new("/definitely/not/here.json");
        match require(p) {
            Err(CliError::Missing(q)) => assert_eq!(q, p),
            other => panic!("{other:?}"),
        }
    }
}
