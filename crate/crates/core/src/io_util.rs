use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{GiscError, Result};

static TMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| GiscError::io(dir, e))?;
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(
        ".{file_name}.tmp-{}-{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| GiscError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| GiscError::io(&tmp, e))?;
        f.sync_all().map_err(|e| GiscError::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| GiscError::io(path, e))
}
