//! Output directory bookkeeping so that a failed command leaves nothing new
//! behind.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

pub struct OutputGuard {
    root: PathBuf,
    existed: bool,
    before: HashSet<PathBuf>,
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = fs::read_dir(dir) else {
        return;
    };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.is_dir() {
            walk(&path, out);
        }
        out.push(path);
    }
}

impl OutputGuard {
    /// Records what exists under `root` now.
    pub fn snapshot(root: &Path) -> Self {
        let mut paths = Vec::new();
        walk(root, &mut paths);
        Self {
            root: root.to_path_buf(),
            existed: root.exists(),
            before: paths.into_iter().collect(),
        }
    }

    /// Removes every file and directory created since the snapshot.
    pub fn rollback(&self) {
        if !self.existed {
            let _ = fs::remove_dir_all(&self.root);
            return;
        }
        let mut now = Vec::new();
        walk(&self.root, &mut now);
        // Children precede their parent directory in walk order.
        for path in now.into_iter().filter(|p| !self.before.contains(p)) {
            let _ = if path.is_dir() {
                fs::remove_dir(&path)
            } else {
                fs::remove_file(&path)
            };
        }
    }
}
