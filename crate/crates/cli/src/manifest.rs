//! Run manifests: every successful command writes `manifest.json` into its
//! output directory with the exact configuration, input digests and artifact
//! digests, sufficient to replay the run and verify byte-identical outputs.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileDigest {
    /// Input files keep the path as given on the command line; artifacts are
    /// relative to the run's output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Snapshot of the parsed command arguments.
    pub args: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
    /// Timing metadata; not part of the reproducibility contract (the
    /// artifact digests are).
    pub wall_clock_seconds: f64,
    pub started_at_unix: u64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut file = std::fs::File::open(path).map_err(|e| crate::error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|e| crate::error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        write!(hex, "{byte:02x}").expect("writing to a String cannot fail");
    }
    Ok(hex)
}

impl RunManifest {
    pub fn write_to(&self, path: &Path) -> Result<(), CliError> {
        let mut json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Data(format!("cannot serialize manifest: {e}")))?;
        json.push('\n');
        std::fs::write(path, json).map_err(|e| crate::error::io(path, e))
    }

    pub fn read_from(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::error::io(path, e))?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if manifest.format_version != MANIFEST_FORMAT_VERSION {
            return Err(CliError::Data(format!(
                "{}: unsupported manifest format_version {} (expected {})",
                path.display(),
                manifest.format_version,
                MANIFEST_FORMAT_VERSION
            )));
        }
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_known_vectors() {
        let dir = tempfile::TempDir::new().unwrap();
        let empty = dir.path().join("empty");
        std::fs::write(&empty, b"").unwrap();
        assert_eq!(
            sha256_file(&empty).unwrap(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        let abc = dir.path().join("abc");
        std::fs::write(&abc, b"abc").unwrap();
        assert_eq!(
            sha256_file(&abc).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips_and_rejects_future_versions() {
        let dir = tempfile::TempDir::new().unwrap();
        let path = dir.path().join("manifest.json");
        let m = RunManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            tool_version: "0.1.0".into(),
            command: "simulate".into(),
            args: serde_json::json!({"n": 10}),
            seed: Some(7),
            inputs: vec![],
            artifacts: vec![FileDigest {
                path: "data.csv".into(),
                sha256: "00".into(),
            }],
            wall_clock_seconds: 0.5,
            started_at_unix: 1700000000,
        };
        m.write_to(&path).unwrap();
        let back = RunManifest::read_from(&path).unwrap();
        assert_eq!(back.command, "simulate");
        assert_eq!(back.seed, Some(7));
        assert_eq!(back.artifacts[0].path, "data.csv");

        let mut doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        doc["format_version"] = serde_json::json!(99);
        std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
        let err = RunManifest::read_from(&path).unwrap_err();
        assert!(err.to_string().contains("format_version"), "{err}");
    }
}
