//! Known dataset files and checksum verification.
//!
//! Checksums are taken over the decompressed IDX payload, so they hold no
//! matter which mirror or compression produced the local copy.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};

/// One expected dataset file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnownFile {
    /// Path relative to the dataset root, without the optional `.gz`.
    pub rel_path: &'static str,
    pub tag: &'static str,
    /// SHA-256 of the decompressed IDX payload.
    pub sha256: &'static str,
    pub examples: usize,
}

/// The files the streaming benchmarks expect under the dataset root.
pub fn known_dataset_files() -> Vec<KnownFile> {
    vec![
        KnownFile {
            rel_path: "mnist/train-images-idx3-ubyte",
            tag: "mnist-train-images",
            sha256: "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db",
            examples: 60000,
        },
        KnownFile {
            rel_path: "mnist/train-labels-idx1-ubyte",
            tag: "mnist-train-labels",
            sha256: "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5",
            examples: 60000,
        },
        KnownFile {
            rel_path: "mnist/t10k-images-idx3-ubyte",
            tag: "mnist-test-images",
            sha256: "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7",
            examples: 10000,
        },
        KnownFile {
            rel_path: "mnist/t10k-labels-idx1-ubyte",
            tag: "mnist-test-labels",
            sha256: "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2",
            examples: 10000,
        },
        KnownFile {
            rel_path: "fashion-mnist/train-images-idx3-ubyte",
            tag: "fashion-train-images",
            sha256: "c59f468a2f672dc815687fe0f83887768d799fd8a3f3276145d20f83aa44d888",
            examples: 60000,
        },
        KnownFile {
            rel_path: "fashion-mnist/train-labels-idx1-ubyte",
            tag: "fashion-train-labels",
            sha256: "bad3541b69d912435c50bb6ba87bec294ff4f6a2e1246121d8633921760443d9",
            examples: 60000,
        },
        KnownFile {
            rel_path: "fashion-mnist/t10k-images-idx3-ubyte",
            tag: "fashion-test-images",
            sha256: "5b4141f0afbad91edebe8549f8fcffe087ea10ca49f1dbef5c9a5cd8815ce37b",
            examples: 10000,
        },
        KnownFile {
            rel_path: "fashion-mnist/t10k-labels-idx1-ubyte",
            tag: "fashion-test-labels",
            sha256: "0402a96d92fd2663957122ceb108a494c5af83dab82d92729df917d7dec38c34",
            examples: 10000,
        },
    ]
}

/// Resolves a known file under `root`, accepting a `.gz` variant.
pub fn resolve_dataset_file(root: &Path, rel_path: &str) -> Option<PathBuf> {
    let plain = root.join(rel_path);
    if plain.is_file() {
        return Some(plain);
    }
    let gz = root.join(format!("{rel_path}.gz"));
    if gz.is_file() {
        return Some(gz);
    }
    None
}

/// Outcome of verifying one known file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetCheck {
    pub tag: String,
    pub path: Option<PathBuf>,
    pub present: bool,
    pub checksum_ok: Option<bool>,
    pub sha256: Option<String>,
}

fn payload_sha256(path: &Path) -> Result<String> {
    use std::io::Read;
    let raw = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
    let payload = if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| CoreError::io(path, e))?;
        out
    } else {
        raw
    };
    let mut hasher = Sha256::new();
    hasher.update(&payload);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest.as_slice() {
        hex.push_str(&format!("{byte:02x}"));
    }
    Ok(hex)
}

/// Verifies presence and payload checksums of every known file under `root`.
pub fn verify_dataset_root(root: &Path) -> Vec<DatasetCheck> {
    known_dataset_files()
        .into_iter()
        .map(|kf| match resolve_dataset_file(root, kf.rel_path) {
            Some(path) => match payload_sha256(&path) {
                Ok(digest) => DatasetCheck {
                    tag: kf.tag.into(),
                    present: true,
                    checksum_ok: Some(digest == kf.sha256),
                    sha256: Some(digest),
                    path: Some(path),
                },
                Err(_) => DatasetCheck {
                    tag: kf.tag.into(),
                    present: true,
                    checksum_ok: Some(false),
                    sha256: None,
                    path: Some(path),
                },
            },
            None => DatasetCheck {
                tag: kf.tag.into(),
                path: None,
                present: false,
                checksum_ok: None,
                sha256: None,
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_root_reports_all_absent() {
        let dir = tempfile::tempdir().unwrap();
        let checks = verify_dataset_root(dir.path());
        assert_eq!(checks.len(), 8);
        assert!(checks.iter().all(|c| !c.present));
    }
}
