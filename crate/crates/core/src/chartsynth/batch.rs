use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::quad::{instruction_pairs, quad_id, validate_parts, InstructionPair, Invalid};
use super::render::build_scene;
use super::script::gen_code;
use super::spec::derive_spec;
use super::table::{sample_table, MetaTable};
use crate::error::{Error, Result};

#[derive(Debug, Serialize)]
struct ManifestRecord<'a> {
    id: &'a str,
    seed: u64,
    table: &'a MetaTable,
    spec: serde_json::Value,
    code: &'a str,
    svg_path: String,
    instructions: [InstructionPair; 3],
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthReport {
    pub requested: usize,
    pub retained: usize,
    pub retention: f64,
    pub manifest_path: PathBuf,
    pub manifest_sha256: String,
    /// `(seed, reason code)` for every dropped quadruple.
    pub dropped: Vec<(u64, String)>,
}

enum Outcome {
    Kept {
        line: String,
        id: String,
        svg: String,
    },
    Dropped(u64, Invalid),
}

fn synth_one(seed: u64) -> Result<Outcome> {
    let (table, _) = sample_table(seed);
    let spec = derive_spec(&table, seed);
    let code = gen_code(&spec, &table)?;
    if let Err(why) = validate_parts(&spec, &table, &code) {
        return Ok(Outcome::Dropped(seed, why));
    }
    let svg = build_scene(&spec, &table)?.to_svg();
    let id = quad_id(seed);
    let record = ManifestRecord {
        id: &id,
        seed,
        table: &table,
        spec: serde_json::to_value(&spec)?,
        code: &code,
        svg_path: format!("svg/{id}.svg"),
        instructions: instruction_pairs(seed, &table, &spec, &code),
    };
    Ok(Outcome::Kept {
        line: serde_json::to_string(&record)?,
        id,
        svg,
    })
}

/// Generate seeds `base_seed..base_seed+n`, write `manifest.jsonl` and one SVG
/// per retained quadruple under `out_dir`. Output bytes do not depend on
/// `workers`.
pub fn synth_batch(
    n: usize,
    base_seed: u64,
    out_dir: &Path,
    workers: usize,
) -> Result<SynthReport> {
    if n == 0 {
        return Err(Error::Config("synth needs n >= 1".into()));
    }
    let svg_dir = out_dir.join("svg");
    fs::create_dir_all(&svg_dir).map_err(|e| Error::io(&svg_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        (0..n as u64)
            .into_par_iter()
            .map(|i| synth_one(base_seed + i))
            .collect::<Result<_>>()
    })?;

    let mut manifest = String::new();
    let mut dropped = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Kept { line, id, svg } => {
                let path = svg_dir.join(format!("{id}.svg"));
                fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
                manifest.push_str(&line);
                manifest.push('\n');
            }
            Outcome::Dropped(seed, why) => dropped.push((seed, why.code().to_string())),
        }
    }
    let manifest_path = out_dir.join("manifest.jsonl");
    fs::write(&manifest_path, &manifest).map_err(|e| Error::io(&manifest_path, e))?;
    let retained = n - dropped.len();
    Ok(SynthReport {
        requested: n,
        retained,
        retention: retained as f64 / n as f64,
        manifest_path,
        manifest_sha256: hex::encode(Sha256::digest(manifest.as_bytes())),
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_is_independent_of_worker_count() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ra = synth_batch(40, 5, a.path(), 1).unwrap();
        let rb = synth_batch(40, 5, b.path(), 3).unwrap();
        assert_eq!(ra.manifest_sha256, rb.manifest_sha256);
        assert_eq!(ra.retention, 1.0);
        let text = fs::read_to_string(&ra.manifest_path).unwrap();
        for (k, line) in text.lines().enumerate() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["seed"], 5 + k as u64);
            assert_eq!(v["instructions"].as_array().unwrap().len(), 3);
            let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
            assert_eq!(
                keys,
                [
                    "code",
                    "id",
                    "instructions",
                    "seed",
                    "spec",
                    "svg_path",
                    "table"
                ]
            );
            assert!(a.path().join(v["svg_path"].as_str().unwrap()).exists());
        }
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain-file");
        fs::write(&file, "x").unwrap();
        assert!(matches!(synth_batch(1, 0, &file, 1), Err(Error::Io { .. })));
    }
}
