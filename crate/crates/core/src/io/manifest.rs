//! Dataset manifests: one `<split> <path>` pair per line.
//!
//! `split` is `train`, `val` or `test`; the path is the rest of the line and
//! may contain spaces. Relative paths resolve against the manifest's
//! directory. Blank lines and lines starting with `#` are ignored. An optional
//! `seed <n>` line records the seed of a generated split.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Manifest(format!("unknown split `{other}`"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub split: Split,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: Option<u64>,
}

impl Manifest {
    /// Parse manifest text. Does not touch the file system.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut m = Manifest::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (head, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            if rest.is_empty() {
                return Err(Error::Manifest(format!("line {}: expected `<split> <path>`", no + 1)));
            }
            if head == "seed" {
                let seed = rest
                    .parse()
                    .map_err(|_| Error::Manifest(format!("line {}: bad seed `{rest}`", no + 1)))?;
                m.seed = Some(seed);
                continue;
            }
            let split = head
                .parse()
                .map_err(|e: Error| Error::Manifest(format!("line {}: {e}", no + 1)))?;
            let p = Path::new(rest);
            let path = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            m.entries.push(ManifestEntry { split, path });
        }
        m.check_duplicates()?;
        Ok(m)
    }

    fn check_duplicates(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(&e.path) {
                return Err(Error::Manifest(format!("duplicate path {}", e.path.display())));
            }
        }
        Ok(())
    }

    /// Every listed file must exist.
    pub fn check_files(&self) -> Result<()> {
        for e in &self.entries {
            if !e.path.is_file() {
                return Err(Error::Manifest(format!("missing file {}", e.path.display())));
            }
        }
        Ok(())
    }

    /// Parse `path` and verify that every listed file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let m = Self::parse(&text, base)?;
        m.check_files()?;
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(seed) = self.seed {
            s.push_str(&format!("seed {seed}\n"));
        }
        for e in &self.entries {
            s.push_str(&format!("{} {}\n", e.split, e.path.display()));
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn paths(&self, split: Split) -> Vec<&Path> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.path.as_path())
            .collect()
    }

    /// Shuffle `paths` with `seed` and assign the first `n_val` to val, the
    /// next `n_test` to test and the rest to train.
    pub fn random_split(paths: Vec<PathBuf>, seed: u64, n_val: usize, n_test: usize) -> Result<Self> {
        if n_val + n_test > paths.len() {
            return Err(Error::Manifest(format!(
                "cannot hold out {} of {} files",
                n_val + n_test,
                paths.len()
            )));
        }
        let mut paths = paths;
        paths.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let entries = paths
            .into_iter()
            .enumerate()
            .map(|(i, path)| {
                let split = if i < n_val {
                    Split::Val
                } else if i < n_val + n_test {
                    Split::Test
                } else {
                    Split::Train
                };
                ManifestEntry { split, path }
            })
            .collect();
        let m = Manifest {
            entries,
            seed: Some(seed),
        };
        m.check_duplicates()?;
        Ok(m)
    }
}
