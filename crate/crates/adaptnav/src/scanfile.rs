//! Occupancy scan fixtures.
//!
//! One scan per line: the 360 range readings in bin order, then the maximum
//! range, comma separated (361 fields). Blank lines and lines starting with
//! `#` are skipped. Values are written in shortest round-trip form, so a
//! file reloads bit-identically.

use std::path::Path;

use adaptnav_core::simenv::EnvGraph;
use adaptnav_core::subgoal::{OccupancyScan, SCAN_BINS};

use crate::error::{AppError, Result};

pub fn to_text(scans: &[OccupancyScan]) -> String {
    let mut out = String::new();
    for scan in scans {
        let fields: Vec<String> = scan
            .bins()
            .iter()
            .chain(std::iter::once(&scan.max_range()))
            .map(|v| v.to_string())
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn from_text(text: &str, origin: &Path) -> Result<Vec<OccupancyScan>> {
    let format = |line: usize, message: String| AppError::Format {
        path: origin.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut scans = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| format(i + 1, format!("{f:?} is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != SCAN_BINS + 1 {
            return Err(format(
                i + 1,
                format!("{} fields, expected {}", values.len(), SCAN_BINS + 1),
            ));
        }
        let (bins, max_range) = values.split_at(SCAN_BINS);
        let scan = OccupancyScan::new(bins.to_vec(), max_range[0]).map_err(|e| format(i + 1, e.to_string()))?;
        scans.push(scan);
    }
    Ok(scans)
}

/// The scan of every node, in node order.
pub fn env_scans(env: &EnvGraph) -> Result<Vec<OccupancyScan>> {
    let max_range = env.params().max_range;
    Ok(env
        .nodes()
        .iter()
        .map(|n| n.scan(max_range))
        .collect::<adaptnav_core::Result<_>>()?)
}

pub fn read(path: &Path) -> Result<Vec<OccupancyScan>> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    from_text(&text, path)
}

pub fn write(path: &Path, scans: &[OccupancyScan]) -> Result<()> {
    crate::write_file(path, to_text(scans).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use adaptnav_core::simenv::{generate_env, EnvParams};

    fn scans() -> Vec<OccupancyScan> {
        let env = generate_env(&EnvParams {
            nodes: 6,
            ..EnvParams::default()
        })
        .unwrap();
        env_scans(&env).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let s = scans();
        let text = to_text(&s);
        assert_eq!(text.lines().count(), 6);
        assert_eq!(from_text(&text, Path::new("mem")).unwrap(), s);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let s = scans();
        let text = format!("# fixture\n\n{}", to_text(&s[..1]));
        assert_eq!(from_text(&text, Path::new("mem")).unwrap(), s[..1]);
    }

    #[test]
    fn malformed_records() {
        let origin = Path::new("mem");
        let short = vec!["1.0"; SCAN_BINS].join(",");
        assert!(matches!(from_text(&short, origin), Err(AppError::Format { .. })));
        let out_of_range = format!("{},0.5", vec!["1.0"; SCAN_BINS].join(","));
        assert!(from_text(&out_of_range, origin).is_err());
        let junk = format!("{},x", vec!["1.0"; SCAN_BINS].join(","));
        let err = from_text(&junk, origin).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
