use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rl2_core::features::load_features;
use rl2_core::image::load_dir;
use rl2_core::{BuiltinExtractor, Error, FeatureSet};

use crate::CliError;

/// Features plus a display name per row (file name, or `row_NNNNN` for feature files).
pub struct Source {
    pub features: FeatureSet,
    pub names: Vec<String>,
}

/// A directory of images is run through the extractor; a file is read as `RL2F`.
pub fn load_source(path: &Path, extractor: &BuiltinExtractor) -> Result<Source, CliError> {
    if path.is_dir() {
        let images = load_dir(path)?;
        let names = images.iter().map(|(p, _)| file_name(p)).collect();
        let images: Vec<_> = images.into_iter().map(|(_, im)| im).collect();
        let features = extractor.extract_features(&images, &path.display().to_string())?;
        Ok(Source { features, names })
    } else if path.is_file() {
        let features = load_features(path)?;
        let names = (0..features.len()).map(|i| format!("row_{i:05}")).collect();
        Ok(Source { features, names })
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        )
        .into())
    }
}

pub fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e).into())
}

/// `name,label` lines (label 0 or 1). A leading `name,label` header is skipped.
pub fn read_labels(path: &Path) -> Result<HashMap<String, u8>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = HashMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (no == 0 && line == "name,label") {
            continue;
        }
        let parsed = line
            .rsplit_once(',')
            .and_then(|(name, label)| match label.trim() {
                "0" => Some((name.trim().to_string(), 0u8)),
                "1" => Some((name.trim().to_string(), 1u8)),
                _ => None,
            });
        let Some((name, label)) = parsed else {
            return Err(CliError::Usage(format!(
                "{} line {}: expected name,0 or name,1",
                path.display(),
                no + 1
            )));
        };
        if labels.insert(name.clone(), label).is_some() {
            return Err(CliError::Usage(format!(
                "{} line {}: duplicate label for {name}",
                path.display(),
                no + 1
            )));
        }
    }
    Ok(labels)
}
