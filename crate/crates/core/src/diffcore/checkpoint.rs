//! Checkpointing: flat little-endian f64 blob plus a JSON shape manifest.

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// A named collection of parameter sets plus scalar state (e.g. log-alpha).
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub sections: Vec<(String, ParamSet)>,
    pub scalars: Vec<(String, f64)>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    sections: Vec<SectionManifest>,
    scalars: Vec<(String, f64)>,
}

#[derive(Serialize, Deserialize)]
struct SectionManifest {
    name: String,
    entries: Vec<EntryManifest>,
}

#[derive(Serialize, Deserialize)]
struct EntryManifest {
    name: String,
    rows: usize,
    cols: usize,
}

/// Writes `<stem>.json` (manifest) and `<stem>.bin` (little-endian f64 data in
/// manifest order).
pub fn save_checkpoint(stem: &Path, ckpt: &Checkpoint) -> Result<()> {
    let manifest = Manifest {
        sections: ckpt
            .sections
            .iter()
            .map(|(name, ps)| SectionManifest {
                name: name.clone(),
                entries: ps
                    .iter()
                    .map(|(n, t)| EntryManifest { name: n.clone(), rows: t.rows, cols: t.cols })
                    .collect(),
            })
            .collect(),
        scalars: ckpt.scalars.clone(),
    };
    let mut blob: Vec<u8> = Vec::new();
    for (_, ps) in &ckpt.sections {
        for (_, t) in ps.iter() {
            for &x in &t.data {
                blob.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    if let Some(parent) = stem.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(stem.with_extension("json"), serde_json::to_vec_pretty(&manifest)?)?;
    fs::write(stem.with_extension("bin"), blob)?;
    Ok(())
}

pub fn load_checkpoint(stem: &Path) -> Result<Checkpoint> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(stem.with_extension("json"))?)?;
    let blob = fs::read(stem.with_extension("bin"))?;
    let mut off = 0usize;
    let mut take = |n: usize| -> Result<Vec<f64>> {
        let bytes = n * 8;
        if off + bytes > blob.len() {
            return Err(Error::Config("checkpoint blob shorter than manifest".into()));
        }
        let v = blob[off..off + bytes]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off += bytes;
        Ok(v)
    };
    let mut sections = Vec::new();
    for sm in manifest.sections {
        let mut ps = ParamSet::new();
        for em in sm.entries {
            let data = take(em.rows * em.cols)?;
            ps.push(em.name, Tensor::new(em.rows, em.cols, data));
        }
        sections.push((sm.name, ps));
    }
    if off != blob.len() {
        return Err(Error::Config("checkpoint blob longer than manifest".into()));
    }
    Ok(Checkpoint { sections, scalars: manifest.scalars })
}
