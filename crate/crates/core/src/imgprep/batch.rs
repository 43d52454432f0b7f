//! Directory-level batch processing of PGM files.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{equalize, is_negative, invert, mirror_horizontal, read_pgm, write_pgm};
use crate::error::{arg_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "op")]
pub enum PrepOp {
    Equalize,
    Mirror,
    Negatives { margin: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub changed: bool,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchManifest {
    #[serde(flatten)]
    pub op: PrepOp,
    pub files: Vec<ManifestEntry>,
    pub flagged: Vec<String>,
    pub changed: Vec<String>,
}

fn list_pgm(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Applies `op` to every `*.pgm` in `in_dir` (sorted by name), writes the
/// results under the same names to `out_dir`, and writes `manifest.json` there.
pub fn process_dir(op: PrepOp, in_dir: &Path, out_dir: &Path) -> Result<BatchManifest> {
    if let PrepOp::Negatives { margin } = op {
        if !(margin > 0.0) {
            return Err(arg_err!("negative-detection margin must be positive, got {margin}"));
        }
    }
    let files = list_pgm(in_dir)?;
    if files.is_empty() {
        return Err(Error::Data(format!("no .pgm files in {}", in_dir.display())));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let entries: Vec<ManifestEntry> = files
        .par_iter()
        .map(|path| -> Result<ManifestEntry> {
            let img = read_pgm(path)?;
            let (out, flagged) = match op {
                PrepOp::Equalize => (equalize(&img), false),
                PrepOp::Mirror => (mirror_horizontal(&img), false),
                PrepOp::Negatives { margin } => {
                    if is_negative(&img, margin) {
                        (invert(&img), true)
                    } else {
                        (img.clone(), false)
                    }
                }
            };
            let name = path.file_name().expect("listed file has a name");
            write_pgm(out_dir.join(name), &out)?;
            Ok(ManifestEntry {
                file: name.to_string_lossy().into_owned(),
                changed: out != img,
                flagged,
            })
        })
        .collect::<Result<_>>()?;
    let manifest = BatchManifest {
        op,
        flagged: entries.iter().filter(|e| e.flagged).map(|e| e.file.clone()).collect(),
        changed: entries.iter().filter(|e| e.changed).map(|e| e.file.clone()).collect(),
        files: entries,
    };
    crate::io::write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
