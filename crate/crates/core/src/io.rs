//! XYZL text format: one point per line, `x y z [label]`, `#` starts a comment.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::{CoreError, LabeledPointCloud, PartLabel, Result};

pub fn load_cloud(path: impl AsRef<Path>) -> Result<LabeledPointCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_cloud(BufReader::new(file), name)
}

/// Parses XYZL records. Either every data line carries a label or none does.
pub fn read_cloud(reader: impl BufRead, name: impl Into<String>) -> Result<LabeledPointCloud> {
    let mut positions = Vec::new();
    let mut labels = Vec::new();
    let mut labeled: Option<bool> = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| CoreError::Parse { line: lineno, message: e.to_string() })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let has_label = match fields.len() {
            3 => false,
            4 => true,
            n => {
                return Err(CoreError::Parse {
                    line: lineno,
                    message: format!("expected 3 or 4 fields, found {n}"),
                })
            }
        };
        match labeled {
            None => labeled = Some(has_label),
            Some(prev) if prev != has_label => {
                return Err(CoreError::Parse {
                    line: lineno,
                    message: "label column present on some lines only".into(),
                })
            }
            _ => {}
        }
        let mut p = [0.0; 3];
        for (k, field) in fields[..3].iter().enumerate() {
            p[k] = field.parse::<f64>().map_err(|e| CoreError::Parse {
                line: lineno,
                message: format!("bad coordinate {field:?}: {e}"),
            })?;
            if !p[k].is_finite() {
                return Err(CoreError::Parse {
                    line: lineno,
                    message: format!("non-finite coordinate {field:?}"),
                });
            }
        }
        positions.push(p);
        if has_label {
            let code: i64 = fields[3].parse().map_err(|e| CoreError::Parse {
                line: lineno,
                message: format!("bad label {:?}: {e}", fields[3]),
            })?;
            let label = PartLabel::from_code(code).ok_or(CoreError::Label { line: lineno, code })?;
            labels.push(label);
        }
    }
    if positions.is_empty() {
        return Err(CoreError::Parse { line: 0, message: "no points found".into() });
    }
    let labels = if labeled == Some(true) { Some(labels) } else { None };
    LabeledPointCloud::new(name, positions, labels)
}

pub fn save_cloud(cloud: &LabeledPointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write_cloud(cloud, &mut writer).map_err(|e| CoreError::io(path, e))?;
    writer.flush().map_err(|e| CoreError::io(path, e))
}

/// Writes positions with 6 fractional digits; the label column only when labeled.
pub fn write_cloud(cloud: &LabeledPointCloud, mut out: impl Write) -> std::io::Result<()> {
    match cloud.labels() {
        Some(labels) => {
            for (p, l) in cloud.positions().iter().zip(labels) {
                writeln!(out, "{:.6} {:.6} {:.6} {}", p[0], p[1], p[2], l.code())?;
            }
        }
        None => {
            for p in cloud.positions() {
                writeln!(out, "{:.6} {:.6} {:.6}", p[0], p[1], p[2])?;
            }
        }
    }
    Ok(())
}
