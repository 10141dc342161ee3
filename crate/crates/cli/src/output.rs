use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};

use anyhow::{bail, Context, Result};

/// Writes files below one root directory, each atomically through a
/// temporary sibling and a rename.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutputDir { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Rejects absolute paths and any `..` component.
    pub fn path(&self, relative: &str) -> Result<PathBuf> {
        let rel = Path::new(relative);
        if rel.as_os_str().is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
            bail!("refusing to write {relative:?} outside the output directory");
        }
        Ok(self.root.join(rel))
    }

    pub fn write(&self, relative: &str, bytes: &[u8]) -> Result<PathBuf> {
        let target = self.path(relative)?;
        let dir = target.parent().expect("joined path has a parent");
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let name = target.file_name().expect("normal component").to_string_lossy();
        let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
        let result = (|| {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, &target)
        })();
        if let Err(e) = result {
            let _ = fs::remove_file(&tmp);
            return Err(e).with_context(|| format!("writing {}", target.display()));
        }
        Ok(target)
    }
}

/// File-name-safe form of a ticker or detector spec.
pub fn file_stem(s: &str) -> String {
    let stem: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect();
    match stem.trim_start_matches('.') {
        "" => "_".to_string(),
        t => t.to_string(),
    }
}
