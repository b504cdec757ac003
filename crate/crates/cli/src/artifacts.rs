//! Artifact writing: fixed-format CSV and JSON documents that embed the
//! toolkit version and the effective config hash, so reruns are
//! byte-identical and stale inputs are detectable.

use std::path::Path;

use serde::Serialize;

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Format a float with 9 significant digits in scientific notation —
/// stable across platforms, `.` decimal separator.
pub fn fmt_sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Write a CSV file with the given header and pre-formatted rows.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), CliError> {
    let mut text = String::with_capacity(rows.len() * 40 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Write a pretty-printed JSON artifact.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_is_stable() {
        assert_eq!(fmt_sig9(0.069), "6.90000000e-2");
        assert_eq!(fmt_sig9(0.0), "0.00000000e0");
        assert_eq!(fmt_sig9(-10.0), "-1.00000000e1");
        assert_eq!(fmt_sig9(1.0 / 3.0), "3.33333333e-1");
    }
}
