use std::fs;
use std::path::Path;

use super::{GridMeta, SpeedField, HEATMAP_MAX_SPEED};
use crate::error::{Error, Result};

/// Reads a rectangular CSV grid (rows = space, columns = time).
pub fn load_csv(path: impl AsRef<Path>, meta: &GridMeta) -> Result<SpeedField> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_csv_str(&text, meta)
}

pub fn load_csv_str(text: &str, meta: &GridMeta) -> Result<SpeedField> {
    meta.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format {
            row: r + 1,
            message: e.to_string(),
        })?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>().map_err(|e| Error::Parse {
                    row: r + 1,
                    col: c + 1,
                    message: format!("`{cell}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Format {
                    row: r + 1,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format {
            row: 1,
            message: "empty grid".into(),
        });
    }
    SpeedField::from_rows(meta.clone(), rows)
}

/// Serializes values with shortest round-trip formatting so that
/// `load_csv_str(to_csv_string(f))` reproduces `f` exactly.
pub fn to_csv_string(field: &SpeedField) -> String {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in field.rows() {
        writer
            .write_record(row.iter().map(|v| v.to_string()))
            .expect("writing to an in-memory buffer");
    }
    String::from_utf8(writer.into_inner().expect("flush in-memory buffer")).expect("csv output is utf-8")
}

pub fn export_csv(field: &SpeedField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(field)).map_err(|e| Error::io(path, e))
}

pub fn load_meta(path: impl AsRef<Path>) -> Result<GridMeta> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta: GridMeta = serde_json::from_str(&text)?;
    meta.validate()?;
    Ok(meta)
}

pub fn write_meta(meta: &GridMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(meta)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Binary P5 graymap: one byte per cell, `clamp(speed / 120 * 255)`.
pub fn pgm_bytes(field: &SpeedField) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", field.n_time(), field.n_space()).into_bytes();
    out.extend(heatmap_pixels(field));
    out
}

/// Grey levels row by row: one image row per road position, one column per
/// time step.
pub fn heatmap_pixels(field: &SpeedField) -> Vec<u8> {
    field.values().iter().map(|&v| gray_level(v)).collect()
}

fn gray_level(speed: f64) -> u8 {
    (speed / HEATMAP_MAX_SPEED * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn export_heatmap(field: &SpeedField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, pgm_bytes(field)).map_err(|e| Error::io(path, e))
}
