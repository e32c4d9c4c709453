//! Cohort directories: one `FVOL1` image and one mask per case plus a
//! `manifest.json` describing groups, files, digests and the generator config.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cohort::{Case, CohortConfig};
use crate::error::{Error, Result};
use crate::metrics::{CaseId, GroupId};
use crate::real::Real;
use crate::volume::fvol;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub case_id: CaseId,
    pub group: GroupId,
    pub image: String,
    pub truth: String,
    pub image_sha256: String,
    pub truth_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub format_version: u32,
    pub generator: CohortConfig,
    pub seed: u64,
    pub cases: Vec<CaseEntry>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Writes every case and the manifest into `dir`, creating it if needed.
/// Output is byte-identical for identical inputs.
pub fn export_cohort<T: Real>(dir: &Path, cfg: &CohortConfig, cases: &[Case<T>]) -> Result<CohortManifest> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(cases.len());
    for case in cases {
        let image = format!("{}_image.fvol", case.case_id);
        let truth = format!("{}_truth.fvol", case.case_id);
        let (ip, tp) = (dir.join(&image), dir.join(&truth));
        fvol::save_scalar(&ip, case.image())?;
        fvol::save_mask(&tp, case.truth())?;
        entries.push(CaseEntry {
            case_id: case.case_id,
            group: case.group,
            image_sha256: sha256_file(&ip)?,
            truth_sha256: sha256_file(&tp)?,
            image,
            truth,
        });
    }
    let manifest = CohortManifest {
        format_version: MANIFEST_VERSION,
        generator: *cfg,
        seed: cfg.seed,
        cases: entries,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CohortManifest> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let m: CohortManifest = serde_json::from_str(&text)?;
    if m.format_version != MANIFEST_VERSION {
        return Err(Error::Format(format!(
            "unsupported manifest version {}",
            m.format_version
        )));
    }
    Ok(m)
}

/// Loads a cohort written by [`export_cohort`], checking every file digest.
pub fn import_cohort<T: Real>(dir: &Path) -> Result<(CohortManifest, Vec<Case<T>>)> {
    let manifest = read_manifest(dir)?;
    let resolve = |name: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        if Path::new(name).components().count() != 1 {
            return Err(Error::Format(format!(
                "manifest path `{name}` escapes the cohort directory"
            )));
        }
        Ok(p)
    };
    let mut cases = Vec::with_capacity(manifest.cases.len());
    for e in &manifest.cases {
        let (ip, tp) = (resolve(&e.image)?, resolve(&e.truth)?);
        for (p, want) in [(&ip, &e.image_sha256), (&tp, &e.truth_sha256)] {
            if &sha256_file(p)? != want {
                return Err(Error::Format(format!("digest mismatch for {}", p.display())));
            }
        }
        let image = fvol::load_scalar(&ip)?;
        let truth = fvol::load_mask(&tp)?;
        cases.push(Case::new(e.case_id, e.group, image, truth)?);
    }
    Ok((manifest, cases))
}
