use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resample::SCALE;
use crate::runner::list_pngs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Validation,
    Test,
}

impl Phase {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "validation" | "val" => Ok(Phase::Validation),
            "test" => Ok(Phase::Test),
            other => Err(Error::InvalidArgument(format!(
                "unknown phase `{other}` (expected validation or test)"
            ))),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Validation => "validation",
            Phase::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub lr_path: PathBuf,
    pub hr_path: Option<PathBuf>,
}

/// Ordered dataset listing; the order fixes report and aggregation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub phase: Phase,
    pub scale: usize,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Manifest("empty dataset".into()));
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.image_id.as_str()) {
                return Err(Error::Manifest(format!(
                    "duplicate image id `{}`",
                    e.image_id
                )));
            }
            if !e.lr_path.is_file() {
                return Err(Error::Manifest(format!(
                    "`{}`: LR file {} does not exist",
                    e.image_id,
                    e.lr_path.display()
                )));
            }
            match &e.hr_path {
                Some(hr) if !hr.is_file() => {
                    return Err(Error::Manifest(format!(
                        "`{}`: HR file {} does not exist",
                        e.image_id,
                        hr.display()
                    )))
                }
                None if self.phase == Phase::Validation => {
                    return Err(Error::Manifest(format!("`{}` has no HR image", e.image_id)))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn stem_map(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for (name, path) in list_pngs(dir)? {
        let stem = Path::new(&name)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(&name)
            .to_string();
        if out.insert(stem.clone(), path).is_some() {
            return Err(Error::Manifest(format!(
                "duplicate image id `{stem}` in {}",
                dir.display()
            )));
        }
    }
    Ok(out)
}

/// Pair `root/LR/*.png` with `root/HR/*.png` by file name, sorted by name.
///
/// The test phase tolerates a missing HR directory or missing HR files.
pub fn build_manifest(root: impl AsRef<Path>, phase: Phase) -> Result<Manifest> {
    let root = root.as_ref();
    let lr_dir = root.join("LR");
    let hr_dir = root.join("HR");
    if !lr_dir.is_dir() {
        return Err(Error::Manifest(format!(
            "{} is not a directory",
            lr_dir.display()
        )));
    }
    let lr = stem_map(&lr_dir)?;
    let hr = if hr_dir.is_dir() {
        stem_map(&hr_dir)?
    } else if phase == Phase::Validation {
        return Err(Error::Manifest(format!(
            "{} is not a directory",
            hr_dir.display()
        )));
    } else {
        BTreeMap::new()
    };
    if phase == Phase::Validation {
        if let Some(id) = lr.keys().find(|k| !hr.contains_key(*k)) {
            return Err(Error::Manifest(format!(
                "`{id}` has an LR image but no HR/{id}.png"
            )));
        }
        if let Some(id) = hr.keys().find(|k| !lr.contains_key(*k)) {
            return Err(Error::Manifest(format!(
                "`{id}` has an HR image but no LR/{id}.png"
            )));
        }
    }
    let entries = lr
        .into_iter()
        .map(|(id, lr_path)| ManifestEntry {
            hr_path: hr.get(&id).cloned(),
            image_id: id,
            lr_path,
        })
        .collect();
    let manifest = Manifest {
        entries,
        phase,
        scale: SCALE,
    };
    manifest.validate()?;
    Ok(manifest)
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    image_id: String,
    lr_path: PathBuf,
    #[serde(default)]
    hr_path: Option<PathBuf>,
}

/// Read an explicit CSV manifest with columns `image_id,lr_path[,hr_path]`.
/// Relative paths resolve against the manifest's directory; row order is kept.
pub fn load_manifest_file(path: impl AsRef<Path>, phase: Phase) -> Result<Manifest> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for row in reader.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let hr_path = row
            .hr_path
            .filter(|p| !p.as_os_str().is_empty())
            .map(|p| base.join(p));
        entries.push(ManifestEntry {
            image_id: row.image_id,
            lr_path: base.join(row.lr_path),
            hr_path,
        });
    }
    let manifest = Manifest {
        entries,
        phase,
        scale: SCALE,
    };
    manifest.validate()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{save_image, BitDepth, Image};
    use std::fs;

    fn touch(dir: &Path, name: &str) {
        fs::create_dir_all(dir).unwrap();
        save_image(
            &Image::filled(4, 4, BitDepth::Eight, 1).unwrap(),
            dir.join(name),
        )
        .unwrap();
    }

    #[test]
    fn pairs_by_name_in_order() {
        let tmp = tempfile::tempdir().unwrap();
        for n in ["b.png", "a.png"] {
            touch(&tmp.path().join("LR"), n);
            touch(&tmp.path().join("HR"), n);
        }
        let m = build_manifest(tmp.path(), Phase::Validation).unwrap();
        let ids: Vec<_> = m.entries.iter().map(|e| e.image_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(m.scale, 4);
        assert!(m.entries.iter().all(|e| e.hr_path.is_some()));
    }

    #[test]
    fn missing_hr_is_named() {
        let tmp = tempfile::tempdir().unwrap();
        touch(&tmp.path().join("LR"), "a.png");
        touch(&tmp.path().join("LR"), "b.png");
        touch(&tmp.path().join("HR"), "a.png");
        let err = build_manifest(tmp.path(), Phase::Validation).unwrap_err();
        assert!(err.to_string().contains("`b`"), "{err}");
        let m = build_manifest(tmp.path(), Phase::Test).unwrap();
        assert_eq!(m.entries[1].hr_path, None);
    }

    #[test]
    fn test_phase_without_hr_dir() {
        let tmp = tempfile::tempdir().unwrap();
        touch(&tmp.path().join("LR"), "x.png");
        let m = build_manifest(tmp.path(), Phase::Test).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.entries[0].hr_path, None);
        assert!(build_manifest(tmp.path(), Phase::Validation).is_err());
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        fs::create_dir_all(tmp.path().join("LR")).unwrap();
        let err = build_manifest(tmp.path(), Phase::Test).unwrap_err();
        assert!(err.to_string().contains("empty"));
    }

    #[test]
    fn explicit_manifest_file() {
        let tmp = tempfile::tempdir().unwrap();
        touch(&tmp.path().join("lo"), "one.png");
        touch(&tmp.path().join("hi"), "one-gt.png");
        touch(&tmp.path().join("lo"), "two.png");
        let file = tmp.path().join("list.csv");
        fs::write(
            &file,
            "image_id,lr_path,hr_path\nz,lo/one.png,hi/one-gt.png\ny,lo/two.png,\n",
        )
        .unwrap();
        let m = load_manifest_file(&file, Phase::Test).unwrap();
        assert_eq!(m.entries[0].image_id, "z");
        assert_eq!(m.entries[1].hr_path, None);
        assert!(load_manifest_file(&file, Phase::Validation).is_err());
        fs::write(
            &file,
            "image_id,lr_path,hr_path\nz,lo/one.png,\nz,lo/two.png,\n",
        )
        .unwrap();
        assert!(load_manifest_file(&file, Phase::Test)
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
    }
}
