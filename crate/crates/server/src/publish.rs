//! Append-only expiry publication streams.
//!
//! Layout: `<data_dir>/<domain>/gen-<generation>/<covered>.kfex`, where `covered` is the number of
//! leading leaves the file expires. Each generation's stream only ever grows, and every file covers
//! strictly more leaves than the one before it.

use std::io;
use std::path::{Path, PathBuf};

use keyforge_core::ffs::ExpiryInfo;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Publication {
    pub index: usize,
    pub covered: u64,
    pub path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct PublicationStore {
    root: PathBuf,
}

impl PublicationStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        PublicationStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, domain: &str, generation: u32) -> PathBuf {
        self.root
            .join(domain.to_ascii_lowercase())
            .join(format!("gen-{generation:04}"))
    }

    pub fn list(&self, domain: &str, generation: u32) -> io::Result<Vec<Publication>> {
        let dir = self.dir(domain, generation);
        let mut covered: Vec<(u64, PathBuf)> = match std::fs::read_dir(&dir) {
            Ok(rd) => rd
                .filter_map(|e| e.ok())
                .filter_map(|e| {
                    let path = e.path();
                    let stem = path.file_stem()?.to_str()?.to_owned();
                    (path.extension()? == "kfex").then_some(())?;
                    Some((stem.parse().ok()?, path))
                })
                .collect(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e),
        };
        covered.sort();
        Ok(covered
            .into_iter()
            .enumerate()
            .map(|(index, (covered, path))| Publication { index, covered, path })
            .collect())
    }

    pub fn latest_covered(&self, domain: &str, generation: u32) -> io::Result<u64> {
        Ok(self.list(domain, generation)?.last().map_or(0, |p| p.covered))
    }

    /// Appends a publication. Refuses anything that would not extend the stream.
    pub fn append(&self, domain: &str, generation: u32, covered: u64, eta: &ExpiryInfo) -> io::Result<Publication> {
        let latest = self.latest_covered(domain, generation)?;
        if covered <= latest {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("publication covering {covered} leaves does not extend {latest}"),
            ));
        }
        let dir = self.dir(domain, generation);
        std::fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{covered:010}.kfex"));
        let tmp = dir.join(format!(".{covered:010}.tmp"));
        std::fs::write(&tmp, eta.to_bytes())?;
        std::fs::rename(&tmp, &path)?;
        let index = self.list(domain, generation)?.len() - 1;
        Ok(Publication { index, covered, path })
    }

    pub fn read(&self, domain: &str, generation: u32, index: usize) -> io::Result<Option<Vec<u8>>> {
        match self.list(domain, generation)?.get(index) {
            Some(p) => std::fs::read(&p.path).map(Some),
            None => Ok(None),
        }
    }
}
