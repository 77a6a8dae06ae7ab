//! On-disk cache of encoded latents: `<id>.bin` holds little-endian f32
//! values in row-major order, `<id>.json` the sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::BackendBundle;
use crate::dataset::{DatasetEntry, DatasetManifest};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::latent::{LatentCode, LatentShape};

pub const LAYOUT: &str = "row-major";
pub const DTYPE: &str = "f32-le";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub shape: [usize; 2],
    pub layout: String,
    pub dtype: String,
    pub backend_id: String,
    pub source_image_id: String,
    pub source_hash: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CacheReport {
    pub encoded: Vec<String>,
    pub reused: Vec<String>,
    /// `(id, error message)` for images that failed to load or encode.
    pub failed: Vec<(String, String)>,
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone)]
pub struct LatentCache {
    dir: PathBuf,
}

enum Outcome {
    Encoded,
    Reused,
    Failed(String),
}

impl LatentCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn paths(&self, id: &str) -> (PathBuf, PathBuf) {
        (self.dir.join(format!("{id}.bin")), self.dir.join(format!("{id}.json")))
    }

    fn read_sidecar(&self, id: &str) -> Option<Sidecar> {
        let s = fs::read_to_string(self.paths(id).1).ok()?;
        serde_json::from_str(&s).ok()
    }

    /// Current if the sidecar parses and matches the backend, the source
    /// bytes and the latent file length.
    fn is_current(&self, entry: &DatasetEntry, backend: &BackendBundle, hash: &str) -> bool {
        let shape = backend.latent_shape();
        let Some(sc) = self.read_sidecar(&entry.id) else {
            return false;
        };
        let bin_ok = fs::metadata(self.paths(&entry.id).0)
            .map(|m| m.len() as usize == shape.len() * 4)
            .unwrap_or(false);
        bin_ok
            && sc.shape == [shape.n_layers, shape.n_channels]
            && sc.layout == LAYOUT
            && sc.dtype == DTYPE
            && sc.backend_id == backend.id()
            && sc.source_image_id == entry.id
            && sc.source_hash == hash
    }

    pub fn store(&self, id: &str, latent: &LatentCode, backend_id: &str, source_hash: &str) -> Result<()> {
        let (bin, json) = self.paths(id);
        fs::write(&bin, latent.to_f32_le_bytes()).map_err(|e| Error::io(&bin, e))?;
        let sc = Sidecar {
            shape: [latent.n_layers(), latent.n_channels()],
            layout: LAYOUT.into(),
            dtype: DTYPE.into(),
            backend_id: backend_id.into(),
            source_image_id: id.into(),
            source_hash: source_hash.into(),
        };
        fs::write(&json, serde_json::to_string_pretty(&sc)?).map_err(|e| Error::io(&json, e))
    }

    pub fn load(&self, id: &str, backend: &BackendBundle) -> Result<LatentCode> {
        let (bin, json) = self.paths(id);
        let sc = self
            .read_sidecar(id)
            .ok_or_else(|| Error::format(&json, "missing or unreadable sidecar"))?;
        if sc.backend_id != backend.id() {
            return Err(Error::Inconsistent(format!(
                "cached latent `{id}` was encoded by `{}`, not `{}`",
                sc.backend_id,
                backend.id()
            )));
        }
        let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        LatentCode::from_f32_le_bytes(LatentShape::new(sc.shape[0], sc.shape[1]), &bytes)
    }

    fn ensure(&self, entry: &DatasetEntry, backend: &BackendBundle) -> Outcome {
        let run = || -> Result<bool> {
            let hash = file_hash(&entry.path)?;
            if self.is_current(entry, backend, &hash) {
                return Ok(false);
            }
            let latent = backend.encode(&Image::load(&entry.path)?)?;
            self.store(&entry.id, &latent, backend.id(), &hash)?;
            Ok(true)
        };
        match run() {
            Ok(true) => Outcome::Encoded,
            Ok(false) => Outcome::Reused,
            Err(e) => Outcome::Failed(e.to_string()),
        }
    }
}

/// Encodes every manifest image not already cached for this backend.
/// Per-image failures are recorded and do not stop the run.
pub fn cache_latents(manifest: &DatasetManifest, backend: &BackendBundle, cache: &LatentCache) -> CacheReport {
    let outcomes: Vec<Outcome> = manifest.entries.par_iter().map(|e| cache.ensure(e, backend)).collect();
    let mut report = CacheReport::default();
    for (entry, outcome) in manifest.entries.iter().zip(outcomes) {
        match outcome {
            Outcome::Encoded => report.encoded.push(entry.id.clone()),
            Outcome::Reused => report.reused.push(entry.id.clone()),
            Outcome::Failed(msg) => {
                log::warn!("encoding `{}` failed: {msg}", entry.id);
                report.failed.push((entry.id.clone(), msg));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{SyntheticConfig, SyntheticWorld};
    use crate::dataset::ingest;

    fn setup() -> (tempfile::TempDir, BackendBundle, DatasetManifest) {
        let world = SyntheticWorld::new(SyntheticConfig {
            n_channels: 32,
            n_attributes: 4,
            identity: "5-7:*".into(),
            ..Default::default()
        })
        .unwrap();
        let backend = BackendBundle::synthetic(world);
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("images");
        fs::create_dir(&images).unwrap();
        for i in 0..3u64 {
            let img = backend.generate(&backend.sample_random_latent(i).unwrap()).unwrap();
            img.save(&images.join(format!("f{i}.exr"))).unwrap();
        }
        let manifest = ingest(&images, None).unwrap();
        (dir, backend, manifest)
    }

    #[test]
    fn idempotent_and_repairs_sidecars() {
        let (dir, backend, manifest) = setup();
        let cache = LatentCache::new(dir.path().join("cache")).unwrap();
        let first = cache_latents(&manifest, &backend, &cache);
        assert_eq!(first.encoded.len(), 3);
        let warm = cache_latents(&manifest, &backend, &cache);
        assert!(warm.encoded.is_empty());
        assert_eq!(warm.reused.len(), 3);
        fs::write(cache.dir().join("f1.json"), "{not json").unwrap();
        let repaired = cache_latents(&manifest, &backend, &cache);
        assert_eq!(repaired.encoded, vec!["f1".to_string()]);
        let l = cache.load("f1", &backend).unwrap();
        assert_eq!(l.shape(), backend.latent_shape());
    }

    #[test]
    fn failures_are_recorded() {
        let (dir, backend, manifest) = setup();
        fs::write(&manifest.entries[0].path, b"garbage").unwrap();
        let cache = LatentCache::new(dir.path().join("cache")).unwrap();
        let r = cache_latents(&manifest, &backend, &cache);
        assert_eq!(r.failed.len(), 1);
        assert_eq!(r.encoded.len(), 2);
    }
}
