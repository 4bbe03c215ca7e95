//! Run manifests. Every run that writes outputs drops one of these next
//! to them: tool, version, RNG family, seed, the full configuration text
//! plus its digest, and the run's headline results. No timestamps or
//! hostnames — identical runs produce identical manifests, and a
//! manifest alone carries everything needed to reproduce its outputs.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_hex(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Subcommand (or test) that produced the outputs.
    pub tool: String,
    pub version: String,
    /// RNG family; every stream in the crate derives from (seed, stream id).
    pub rng: String,
    pub seed: u64,
    /// SHA-256 of `config`, for quick equality checks between runs.
    pub config_sha256: String,
    /// The full configuration text, embedded so a run can be reproduced
    /// from the manifest alone.
    pub config: String,
    /// Headline results keyed by term, sorted.
    pub results: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(tool: &str, seed: u64) -> Manifest {
        Manifest {
            tool: tool.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            rng: "chacha8".into(),
            seed,
            config_sha256: sha256_hex(""),
            config: String::new(),
            results: BTreeMap::new(),
        }
    }

    pub fn set_config(&mut self, text: &str) {
        self.config = text.into();
        self.config_sha256 = sha256_hex(text);
    }

    pub fn record(&mut self, key: &str, value: impl std::fmt::Display) {
        self.results.insert(key.into(), value.to_string());
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("manifest fields are plain strings and integers")
    }

    /// Write atomically: the full text lands under a temporary name in
    /// the target directory, then one rename publishes it.
    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".part");
        let tmp = std::path::PathBuf::from(tmp);
        std::fs::write(&tmp, self.render())?;
        std::fs::rename(&tmp, path)
    }

    pub fn read(path: &Path) -> io::Result<Manifest> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("manifest parse: {e}"))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_a_known_vector() {
        // SHA-256("abc"), the classic test vector.
        assert_eq!(
            sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn round_trips_through_disk() {
        let mut m = Manifest::new("sweep", 7);
        m.set_config("seed = 7\nrows = 6\n");
        m.record("mse", 0.0123);
        m.record("rows_failed", 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.toml");
        m.write(&path).unwrap();
        let back = Manifest::read(&path).unwrap();
        assert_eq!(back, m);
        // The temporary file is gone after the rename.
        assert!(!path.with_extension("toml.part").exists());
        assert!(std::fs::read_dir(dir.path()).unwrap().count() == 1);
    }

    #[test]
    fn identical_runs_render_identical_bytes() {
        let build = || {
            let mut m = Manifest::new("train", 42);
            m.set_config("epochs = 3\n");
            m.record("val_mse", 1.5e-4);
            m.record("best_epoch", 2);
            m.render()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn results_are_sorted_by_key() {
        let mut m = Manifest::new("evaluate", 1);
        m.record("z_last", 1);
        m.record("a_first", 2);
        let text = m.render();
        let a = text.find("a_first").unwrap();
        let z = text.find("z_last").unwrap();
        assert!(a < z);
    }

    #[test]
    fn config_digest_tracks_the_text() {
        let mut m = Manifest::new("corrupt", 3);
        let empty = m.config_sha256.clone();
        m.set_config("x = 1\n");
        assert_ne!(m.config_sha256, empty);
        assert_eq!(m.config_sha256.len(), 64);
        assert_eq!(m.config_sha256, sha256_hex("x = 1\n"));
    }
}
