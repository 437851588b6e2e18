//! Render every signature of the protocol to PNG, skipping files whose
//! inputs have not changed since the last run.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sigverify_core::ingest::Dataset;
use sigverify_core::render::{compose_pair, encode_png, render_pair, render_record, RenderedImage, ScaleMode};

use super::{load_dataset, write_file, IMAGES_DIR, MANIFEST_FILE};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Hash of the render settings and source file contents.
    pub input_digest: String,
    pub png_sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RenderStats {
    pub rendered: usize,
    pub skipped: usize,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Job {
    /// Output path relative to the images directory.
    name: String,
    sources: Vec<String>,
    pair: Option<usize>,
}

fn jobs(ds: &Dataset, shared: bool) -> Vec<Job> {
    if !shared {
        return ds
            .records
            .keys()
            .map(|name| Job {
                name: format!("{name}.png"),
                sources: vec![name.clone()],
                pair: None,
            })
            .collect();
    }
    // Shared-pair scaling makes an image depend on both signatures, so each
    // pair gets one side-by-side image.
    ds.pairs
        .iter()
        .enumerate()
        .map(|(i, p)| Job {
            name: format!("pairs/{}.png", p.pair_id),
            sources: vec![p.reference_path.clone(), p.probe_path.clone()],
            pair: Some(i),
        })
        .collect()
}

fn input_digest(cfg: &RunConfig, job: &Job) -> Result<String, CliError> {
    let mut h = Sha256::new();
    h.update(cfg.render.digest().as_bytes());
    for s in &job.sources {
        let path = cfg.dataset.signatures.join(s);
        let bytes = std::fs::read(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        h.update(s.as_bytes());
        h.update([0]);
        h.update(Sha256::digest(&bytes));
    }
    Ok(hex::encode(h.finalize()))
}

fn side_by_side(ds: &Dataset, cfg: &RunConfig, i: usize) -> Result<RenderedImage, String> {
    let p = &ds.pairs[i];
    let (a, b) = render_pair(&ds.records[&p.reference_path], &ds.records[&p.probe_path], &cfg.render).map_err(|e| e.to_string())?;
    let mut parts = compose_pair(&a, &b, sigverify_core::render::PairMode::SideBySide).map_err(|e| e.to_string())?;
    Ok(parts.remove(0))
}

fn load_manifest(path: &Path) -> BTreeMap<String, ManifestEntry> {
    std::fs::read(path)
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or_default()
}

pub fn render(cfg: &RunConfig) -> Result<RenderStats, CliError> {
    let ds = load_dataset(cfg)?;
    let dir = cfg.output_dir.join(IMAGES_DIR);
    let manifest_path = dir.join(MANIFEST_FILE);
    let old = load_manifest(&manifest_path);
    let jobs = jobs(&ds, cfg.render.scale_mode == ScaleMode::SharedPair);

    let results: Vec<Result<(String, ManifestEntry, bool), CliError>> = jobs
        .par_iter()
        .map(|job| {
            let input = input_digest(cfg, job)?;
            let out = dir.join(&job.name);
            if let Some(prev) = old.get(&job.name) {
                let current = std::fs::read(&out).ok().map(|b| sha256_hex(&b));
                if prev.input_digest == input && current.as_deref() == Some(prev.png_sha256.as_str()) {
                    return Ok((job.name.clone(), prev.clone(), false));
                }
            }
            let image = match job.pair {
                None => render_record(&ds.records[&job.sources[0]], &cfg.render).map_err(|e| e.to_string()),
                Some(i) => side_by_side(&ds, cfg, i),
            }
            .map_err(|e| CliError::data(format!("{}: {e}", job.sources.join(" + "))))?;
            let png = encode_png(&image).map_err(|e| CliError::new(1, e.to_string()))?;
            write_file(&out, &png)?;
            let entry = ManifestEntry {
                input_digest: input,
                png_sha256: sha256_hex(&png),
            };
            Ok((job.name.clone(), entry, true))
        })
        .collect();

    let mut manifest = BTreeMap::new();
    let mut stats = RenderStats { rendered: 0, skipped: 0 };
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok((name, entry, fresh)) => {
                if fresh {
                    stats.rendered += 1;
                } else {
                    stats.skipped += 1;
                }
                manifest.insert(name, entry);
            }
            Err(e) => errors.push(e),
        }
    }
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_file(&manifest_path, &json)?;
    if let Some(first) = errors.first() {
        let listing: Vec<&str> = errors.iter().map(|e| e.message.as_str()).collect();
        return Err(CliError::new(first.code, format!("{} image(s) failed:\n  {}", errors.len(), listing.join("\n  "))));
    }
    Ok(stats)
}
