//! The per-run frame manifest: which radar frame goes with which
//! ground-truth cloud, and where every derived product lives.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{FormatError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "radelft-manifest";
pub const MANIFEST_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub radar_timestamp: f64,
    #[serde(default)]
    pub gt_timestamp: Option<f64>,
    /// Artifact sidecars, keyed by role (`adc`, `cube`, `gt`, `pred.<name>`, ...).
    /// Paths are relative to the manifest unless absolute.
    pub files: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u16,
    pub seed: u64,
    /// Largest accepted |radar - ground-truth| timestamp difference (s).
    pub max_skew: f64,
    pub frames: Vec<FrameRecord>,
    /// Directory the relative paths are resolved against; not serialized.
    #[serde(skip)]
    pub root: PathBuf,
}

impl Manifest {
    pub fn new(root: &Path, seed: u64, max_skew: f64) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            seed,
            max_skew,
            frames: Vec::new(),
            root: root.to_path_buf(),
        }
    }

    /// Reads `dir/manifest.json`.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| FormatError::io(&path, e))?;
        let mut m: Manifest = serde_json::from_str(&text)?;
        if m.format != MANIFEST_FORMAT {
            return Err(FormatError::Invalid(format!("{}: not a manifest", path.display())));
        }
        if m.version != MANIFEST_VERSION {
            return Err(FormatError::Version { found: m.version, supported: MANIFEST_VERSION });
        }
        m.root = dir.to_path_buf();
        Ok(m)
    }

    /// Writes the manifest into `dir`, rewriting paths that lie inside `dir`
    /// as relative ones.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut out = self.clone();
        let base = fs::canonicalize(dir).map_err(|e| FormatError::io(dir, e))?;
        for f in &mut out.frames {
            for p in f.files.values_mut() {
                let abs = self.resolve(p);
                let canon = fs::canonicalize(&abs).unwrap_or(abs);
                *p = match canon.strip_prefix(&base) {
                    Ok(rel) => rel.to_path_buf(),
                    Err(_) => canon,
                };
            }
        }
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&out)? + "\n";
        fs::write(&path, text).map_err(|e| FormatError::io(&path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Absolute path of `role` for frame `i`, or a pairing error.
    pub fn file(&self, i: usize, role: &str) -> Result<PathBuf> {
        let f = &self.frames[i];
        f.files
            .get(role)
            .map(|p| self.resolve(p))
            .ok_or_else(|| FormatError::Pairing(format!("frame {} has no '{role}' entry", f.index)))
    }

    /// Every frame must carry `role`; frames carrying ground truth must be
    /// within `max_skew` of their radar timestamp.
    pub fn check_pairing(&self, roles: &[&str]) -> Result<()> {
        if self.frames.is_empty() {
            return Err(FormatError::Pairing("manifest lists no frames".into()));
        }
        for (i, f) in self.frames.iter().enumerate() {
            for role in roles {
                self.file(i, role)?;
            }
            if f.files.contains_key("gt") {
                let t = f
                    .gt_timestamp
                    .ok_or_else(|| FormatError::Pairing(format!("frame {} has ground truth without a timestamp", f.index)))?;
                let skew = (t - f.radar_timestamp).abs();
                if !(skew <= self.max_skew) {
                    return Err(FormatError::Pairing(format!(
                        "frame {}: radar/ground-truth skew {skew:.4} s exceeds {:.4} s",
                        f.index, self.max_skew
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(skew: f64) -> Manifest {
        let mut m = Manifest::new(Path::new("/tmp"), 1, 0.05);
        m.frames.push(FrameRecord {
            index: 0,
            radar_timestamp: 0.0,
            gt_timestamp: Some(skew),
            files: [("adc".to_string(), PathBuf::from("a.json")), ("gt".to_string(), PathBuf::from("g.json"))].into(),
        });
        m
    }

    #[test]
    fn skew_limit_is_inclusive() {
        assert!(manifest(0.05).check_pairing(&["adc", "gt"]).is_ok());
        assert!(manifest(-0.05).check_pairing(&["adc"]).is_ok());
        assert!(matches!(manifest(0.0501).check_pairing(&["adc"]), Err(FormatError::Pairing(_))));
    }

    #[test]
    fn missing_role_is_a_pairing_error() {
        assert!(matches!(manifest(0.0).check_pairing(&["cube"]), Err(FormatError::Pairing(_))));
        let mut m = manifest(0.0);
        m.frames[0].gt_timestamp = None;
        assert!(m.check_pairing(&[]).is_err());
    }
}
