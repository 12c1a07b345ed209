//! CSV, JSON and snapshot files, written atomically.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use overdamp_core::harness::Record;
use overdamp_core::snapshot::Snapshot;

/// Version of the summary JSON layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Header row plus one row per record.
pub fn csv_text<R: Record>(records: &[R]) -> String {
    let mut s = R::columns().join(",");
    s.push('\n');
    for r in records {
        let row: Vec<String> = r.row().into_iter().map(format_float).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Whitespace-separated table with a `#` header, readable by gnuplot.
pub fn table_text(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = format!("# {}\n", header.join(" "));
    for row in rows {
        let cells: Vec<String> = row.iter().copied().map(format_float).collect();
        let _ = writeln!(s, "{}", cells.join(" "));
    }
    s
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Creates `dir` if needed and proves it is writable.
pub fn check_writable(dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let probe = dir.join(format!(".overdamp-probe{}", std::process::id()));
    fs::write(&probe, b"")?;
    fs::remove_file(&probe)
}

/// Writes each snapshot as `<prefix>snapshot_<k>.txt` and returns the paths.
pub fn write_snapshots(dir: &Path, prefix: &str, snapshots: &[Snapshot]) -> io::Result<Vec<PathBuf>> {
    snapshots
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let path = dir.join(format!("{prefix}snapshot_{k:03}.txt"));
            write_atomic(&path, s.to_text().as_bytes())?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use overdamp_core::harness::FluidRecord;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_float(f64::NAN), "nan");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let recs = [FluidRecord::default(), FluidRecord { t: 0.5, ..Default::default() }];
        let text = csv_text(&recs);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("t,mass,free_energy"));
        assert!(lines[2].starts_with("5.0000000000000000e-1,"));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
