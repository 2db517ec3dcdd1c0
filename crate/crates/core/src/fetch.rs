//! Download manifest for larger benchmark datasets and a local cache.
//!
//! Checksums are left unpinned until a file has been verified once; `fetch`
//! always reports the SHA-256 of what it stored and checks it against a
//! pinned value when one exists.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::{bundled, load_dataset, parse_libsvm, Format};
use crate::error::{invalid, Error, Result};
use crate::LabeledDataset;

pub const CACHE_ENV: &str = "ANML_CACHE_DIR";
const DOWNLOAD_LIMIT: u64 = 256 * 1024 * 1024;
const LIBSVM: &str = "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub name: &'static str,
    pub url_path: &'static str,
    pub sha256: Option<&'static str>,
    pub n_features: usize,
}

impl ManifestEntry {
    pub fn url(&self) -> String {
        format!("{LIBSVM}/{}", self.url_path)
    }
}

pub const MANIFEST: &[ManifestEntry] = &[
    ManifestEntry { name: "australian", url_path: "binary/australian_scale", sha256: None, n_features: 14 },
    ManifestEntry { name: "german", url_path: "binary/german.numer_scale", sha256: None, n_features: 24 },
    ManifestEntry { name: "glass", url_path: "multiclass/glass.scale", sha256: None, n_features: 9 },
    ManifestEntry { name: "iris", url_path: "multiclass/iris.scale", sha256: None, n_features: 4 },
    ManifestEntry { name: "vehicle", url_path: "multiclass/vehicle.scale", sha256: None, n_features: 18 },
    ManifestEntry { name: "wine", url_path: "multiclass/wine.scale", sha256: None, n_features: 13 },
    ManifestEntry { name: "pendigits", url_path: "multiclass/pendigits", sha256: None, n_features: 16 },
    ManifestEntry { name: "letter", url_path: "multiclass/letter.scale", sha256: None, n_features: 16 },
];

pub fn manifest_entry(name: &str) -> Option<&'static ManifestEntry> {
    MANIFEST.iter().find(|e| e.name == name)
}

/// `$ANML_CACHE_DIR`, else `$HOME/.cache/anml`, else `./.anml-cache`.
pub fn cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(CACHE_ENV) {
        return PathBuf::from(dir);
    }
    match std::env::var_os("HOME") {
        Some(home) => Path::new(&home).join(".cache").join("anml"),
        None => PathBuf::from(".anml-cache"),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FetchReport {
    pub name: String,
    pub path: PathBuf,
    pub sha256: String,
    /// `Some(true)` when the digest matched a pinned checksum.
    pub verified: Option<bool>,
    pub downloaded: bool,
}

fn verify(entry: &ManifestEntry, digest: &str) -> Result<Option<bool>> {
    match entry.sha256 {
        Some(pinned) if pinned != digest => Err(Error::InvalidInput(format!(
            "checksum mismatch for {}: expected {pinned}, got {digest}",
            entry.name
        ))),
        Some(_) => Ok(Some(true)),
        None => Ok(None),
    }
}

/// Downloads `name` into `dir` unless a cached copy exists (or `force`).
pub fn fetch(name: &str, dir: &Path, force: bool) -> Result<FetchReport> {
    let Some(entry) = manifest_entry(name) else {
        let known: Vec<&str> = MANIFEST.iter().map(|e| e.name).collect();
        return invalid(format!("no manifest entry '{name}'; known: {}", known.join(", ")));
    };
    let path = dir.join(format!("{name}.libsvm"));
    let downloaded = force || !path.exists();
    if downloaded {
        std::fs::create_dir_all(dir)?;
        let url = entry.url();
        log::info!("downloading {url}");
        let mut resp = ureq::get(&url).call().map_err(|e| Error::Io(std::io::Error::other(format!("{url}: {e}"))))?;
        let bytes = resp
            .body_mut()
            .with_config()
            .limit(DOWNLOAD_LIMIT)
            .read_to_vec()
            .map_err(|e| Error::Io(std::io::Error::other(format!("{url}: {e}"))))?;
        let digest = sha256_hex(&bytes);
        verify(entry, &digest)?;
        let tmp = path.with_extension("part");
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, &path)?;
    }
    let digest = sha256_hex(&std::fs::read(&path)?);
    let verified = verify(entry, &digest)?;
    Ok(FetchReport { name: name.to_string(), path, sha256: digest, verified, downloaded })
}

/// Resolves a dataset argument: an existing file path, a bundled name, or a
/// fetched manifest entry in `cache`.
pub fn resolve_dataset(spec: &str, format: Option<Format>, delimiter: u8, cache: &Path) -> Result<LabeledDataset> {
    let path = Path::new(spec);
    if path.is_file() {
        let format = format.unwrap_or(if spec.ends_with(".csv") { Format::CsvLastLabel } else { Format::Libsvm });
        return load_dataset(path, format, delimiter);
    }
    if let Some(d) = bundled(spec) {
        return Ok(d);
    }
    if let Some(entry) = manifest_entry(spec) {
        let cached = cache.join(format!("{spec}.libsvm"));
        if cached.is_file() {
            let text = std::fs::read_to_string(&cached)?;
            return parse_libsvm(spec, &text, Some(entry.n_features));
        }
        return Err(Error::NotFound(format!("dataset not found: {spec} (run `anml fetch {spec}` first)")));
    }
    Err(Error::NotFound(format!("dataset not found: {spec}")))
}
