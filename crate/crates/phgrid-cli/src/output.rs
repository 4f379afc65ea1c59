//! Artifact writing. Every value that may be read back is printed in
//! scientific notation with 17 significant digits, enough for an exact f64
//! round trip, and files land via write-then-rename so a crash never leaves
//! a truncated artifact behind.

use std::io::Write;
use std::path::Path;

/// 17 significant digits, '.' decimal point, no locale surprises.
pub fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `content` to `path` atomically: a sibling temp file is filled,
/// flushed, then renamed over the target.
pub fn write_atomic(path: &Path, content: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp.push(".tmp");
    let tmp_path = dir.join(tmp);
    {
        let mut f = std::fs::File::create(&tmp_path)?;
        f.write_all(content.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp_path, path)
}

/// Left-aligned fixed-width rows: widths grow to the longest cell per column.
pub fn fixed_width(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; cols];
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (k, cell) in row.iter().enumerate() {
            if k > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            if k + 1 < row.len() {
                for _ in cell.len()..widths[k] {
                    line.push(' ');
                }
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
