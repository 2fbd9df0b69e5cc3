//! TOML configuration file for the command-line tool.
//!
//! Values here sit below flags and environment variables. Relative paths
//! are resolved against the file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub segmentation: SegmentationSection,
    #[serde(default)]
    pub atlas: AtlasSection,
    #[serde(default)]
    pub llm: LlmSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationSection {
    /// `"low:high"`, e.g. `"70:97"`.
    pub alpha_range: Option<String>,
    pub s_min: Option<usize>,
    pub radius: Option<usize>,
    /// `"lowest"` or `"highest"`.
    pub tie_break: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtlasSection {
    pub volume: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub id: Option<String>,
    pub slice: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_retries: Option<u32>,
    pub temperature: Option<f64>,
    pub backoff_ms: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub method: Option<String>,
    pub timestamp: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| format!("{}: {}", path.display(), e.message()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.atlas.volume, &mut cfg.atlas.labels].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nx.toml");
        std::fs::write(
            &p,
            "[segmentation]\nalpha_range = \"80:90\"\n[atlas]\nvolume = \"a.nii.gz\"\nlabels = \"/abs/l.csv\"\n",
        )
        .unwrap();
        let cfg = FileConfig::load(&p).unwrap();
        assert_eq!(cfg.segmentation.alpha_range.as_deref(), Some("80:90"));
        assert_eq!(cfg.atlas.volume.unwrap(), dir.path().join("a.nii.gz"));
        assert_eq!(cfg.atlas.labels.unwrap(), PathBuf::from("/abs/l.csv"));
    }

    #[test]
    fn rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nx.toml");
        std::fs::write(&p, "[segmentation]\nalpha = 3\n").unwrap();
        assert!(FileConfig::load(&p).unwrap_err().contains("alpha"));
    }
}
