//! Dataset split discovery for the two supported directory layouts.
//!
//! - SHREC11: `<root>/<class>/<mesh files>`, split 16 train / 4 test per class
//!   with a seeded shuffle.
//! - Manifold40: `<root>/{train,test}/<class>/<mesh files>`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::io::MeshFormat;
use crate::{Error, Result};

pub const SHREC11_TRAIN_PER_CLASS: usize = 16;
pub const SHREC11_TEST_PER_CLASS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitScheme {
    Shrec11,
    Manifold40,
}

impl std::str::FromStr for SplitScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "shrec11" | "shrec11-16split" => Ok(SplitScheme::Shrec11),
            "manifold40" => Ok(SplitScheme::Manifold40),
            other => Err(Error::Config(format!("unknown split scheme '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
    pub train_labels: Vec<usize>,
    pub test_labels: Vec<usize>,
    pub classes: Vec<String>,
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Dataset(format!(
            "missing folder {}",
            dir.display()
        )));
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    Ok(entries)
}

fn class_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(read_dir_sorted(dir)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect())
}

fn mesh_files(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(read_dir_sorted(dir)?
        .into_iter()
        .filter(|p| p.is_file() && MeshFormat::from_path(p).is_some())
        .collect())
}

fn dir_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Discovers a train/test split under `root`. `seed` drives the SHREC11
/// per-class shuffle and is ignored for Manifold40.
pub fn load_split(root: &Path, scheme: SplitScheme, seed: u64) -> Result<DatasetSplit> {
    let mut split = DatasetSplit::default();
    match scheme {
        SplitScheme::Shrec11 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let needed = SHREC11_TRAIN_PER_CLASS + SHREC11_TEST_PER_CLASS;
            for (label, class) in class_dirs(root)?.into_iter().enumerate() {
                let mut files = mesh_files(&class)?;
                if files.len() < needed {
                    return Err(Error::Dataset(format!(
                        "class folder {} has {} meshes, the 16-split scheme needs {needed}",
                        class.display(),
                        files.len()
                    )));
                }
                if files.len() > needed {
                    log::warn!(
                        "class folder {} has {} meshes; only {needed} are used",
                        class.display(),
                        files.len()
                    );
                }
                files.shuffle(&mut rng);
                for (i, f) in files.into_iter().take(needed).enumerate() {
                    if i < SHREC11_TRAIN_PER_CLASS {
                        split.train.push(f);
                        split.train_labels.push(label);
                    } else {
                        split.test.push(f);
                        split.test_labels.push(label);
                    }
                }
                split.classes.push(dir_name(&class));
            }
        }
        SplitScheme::Manifold40 => {
            let train_root = root.join("train");
            let test_root = root.join("test");
            let train_classes = class_dirs(&train_root)?;
            let test_classes = class_dirs(&test_root)?;
            let mut names: Vec<String> = train_classes
                .iter()
                .chain(test_classes.iter())
                .map(|p| dir_name(p))
                .collect();
            names.sort();
            names.dedup();
            let label_of = |p: &Path| names.binary_search(&dir_name(p)).unwrap_or(0);
            for class in &train_classes {
                for f in mesh_files(class)? {
                    split.train.push(f);
                    split.train_labels.push(label_of(class));
                }
            }
            for class in &test_classes {
                for f in mesh_files(class)? {
                    split.test.push(f);
                    split.test_labels.push(label_of(class));
                }
            }
            split.classes = names;
        }
    }
    Ok(split)
}
