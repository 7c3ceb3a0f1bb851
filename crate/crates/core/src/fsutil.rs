use std::fs;
use std::io;
use std::path::Path;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Snapshot of a file's bytes, restorable after a failed transaction.
#[derive(Debug, Clone)]
pub struct FileSnapshot {
    path: std::path::PathBuf,
    contents: Option<Vec<u8>>,
}

impl FileSnapshot {
    pub fn take(path: &Path) -> io::Result<Self> {
        let contents = match fs::read(path) {
            Ok(b) => Some(b),
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            path: path.to_path_buf(),
            contents,
        })
    }

    pub fn restore(&self) -> io::Result<()> {
        match &self.contents {
            Some(bytes) => write_atomic(&self.path, bytes),
            None => match fs::remove_file(&self.path) {
                Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
                _ => Ok(()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_restores_absence_and_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.json");
        let absent = FileSnapshot::take(&p).unwrap();
        write_atomic(&p, b"one").unwrap();
        let one = FileSnapshot::take(&p).unwrap();
        write_atomic(&p, b"two").unwrap();
        one.restore().unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"one");
        absent.restore().unwrap();
        assert!(!p.exists());
    }
}
