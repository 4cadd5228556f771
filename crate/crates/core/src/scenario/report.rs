//! CSV output: RFC 4180 (CRLF, minimal quoting), header row, floats at
//! 17 significant digits so re-runs are byte-comparable.

use std::io::Write;
use std::path::Path;

/// 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') || field.contains('\r') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Write one CSV file with a header row.
pub fn write_csv<P: AsRef<Path>>(
    path: P,
    header: &[&str],
    rows: &[Vec<String>],
) -> std::io::Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut buf = Vec::new();
    let header_line: Vec<String> = header.iter().map(|h| escape(h)).collect();
    buf.extend_from_slice(header_line.join(",").as_bytes());
    buf.extend_from_slice(b"\r\n");
    for row in rows {
        let line: Vec<String> = row.iter().map(|f| escape(f)).collect();
        buf.extend_from_slice(line.join(",").as_bytes());
        buf.extend_from_slice(b"\r\n");
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)
}
