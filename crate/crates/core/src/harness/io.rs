//! File formats.
//!
//! - GridField CSV: header `k,i1[,i2[,i3]],value`, one row per interior point
//!   in natural order, `k` 1-based.
//! - GridField JSON: `{"d": .., "n": .., "values": [..]}`.
//! - Noise dump: little-endian `f64` increments in cell order.
//!
//! Every writer goes through [`write_atomic`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{GridField, GridSpec};
use crate::noise::NoiseSample;

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()
    };
    if let Err(e) = write() {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(&tmp, e));
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Shortest round-trip representation.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| Error::Parse(format!("csv buffer: {e}")))
}

pub fn grid_field_csv(field: &GridField) -> Result<Vec<u8>> {
    let spec = *field.spec();
    let d = spec.dim();
    let mut header = vec!["k".to_string()];
    header.extend((1..=d).map(|j| format!("i{j}")));
    header.push("value".into());
    let rows = field.values().iter().enumerate().map(|(k, &v)| {
        let i = spec.multi_index(k);
        let mut row = vec![(k + 1).to_string()];
        row.extend(i.components().iter().map(|c| c.to_string()));
        row.push(format_float(v));
        row
    });
    csv_bytes(&header, rows)
}

pub fn write_grid_csv(path: &Path, field: &GridField) -> Result<()> {
    write_atomic(path, &grid_field_csv(field)?)
}

fn infer_n(d: usize, count: usize) -> Option<usize> {
    let side = (count as f64).powf(1.0 / d as f64).round() as usize;
    (side >= 1 && side.pow(d as u32) == count).then_some(side + 1)
}

pub fn parse_grid_csv(text: &str) -> Result<GridField> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    let d = header.len().saturating_sub(2);
    let expected: Vec<String> = std::iter::once("k".to_string())
        .chain((1..=d).map(|j| format!("i{j}")))
        .chain(std::iter::once("value".to_string()))
        .collect();
    if !(1..=3).contains(&d) || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse(format!(
            "unexpected grid CSV header {:?}",
            header
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let nums = rec
            .iter()
            .take(d + 1)
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("bad index in {:?}: {e}", rec)))?;
        let value: f64 = rec[d + 1]
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad value in {:?}: {e}", rec)))?;
        rows.push((nums, value));
    }
    let n = infer_n(d, rows.len())
        .ok_or_else(|| Error::Parse(format!("{} rows is not (n-1)^{d}", rows.len())))?;
    let spec = GridSpec::new(d, n)?;
    let mut values = Vec::with_capacity(rows.len());
    for (k, (nums, v)) in rows.into_iter().enumerate() {
        let i = spec.multi_index(k);
        if nums[0] != k + 1 || nums[1..] != *i.components() {
            return Err(Error::Parse(format!(
                "row {} is {:?}, expected k={} i={:?} (natural order)",
                k + 1,
                nums,
                k + 1,
                i.components()
            )));
        }
        values.push(v);
    }
    GridField::new(spec, values)
}

#[derive(Serialize, Deserialize)]
struct GridFieldJson {
    d: usize,
    n: usize,
    values: Vec<f64>,
}

pub fn grid_field_json(field: &GridField) -> Result<Vec<u8>> {
    let doc = GridFieldJson {
        d: field.spec().dim(),
        n: field.spec().n(),
        values: field.values().to_vec(),
    };
    Ok(serde_json::to_vec(&doc)?)
}

pub fn parse_grid_json(text: &str) -> Result<GridField> {
    let doc: GridFieldJson = serde_json::from_str(text)?;
    GridField::new(GridSpec::new(doc.d, doc.n)?, doc.values)
}

/// Reads a grid field, choosing the format by extension (`.json` or CSV).
pub fn read_grid_field(path: &Path) -> Result<GridField> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        parse_grid_json(&text)
    } else {
        parse_grid_csv(&text)
    }
}

pub fn write_grid_json(path: &Path, field: &GridField) -> Result<()> {
    write_atomic(path, &grid_field_json(field)?)
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &json_bytes(value)?)
}

/// One `errors.csv` row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub level_n: usize,
    pub replicate: usize,
    pub sup_error: f64,
}

pub fn errors_csv(rows: &[ErrorRow]) -> Result<Vec<u8>> {
    let header = ["level_n", "replicate", "sup_error"].map(String::from);
    csv_bytes(
        &header,
        rows.iter().map(|r| {
            vec![
                r.level_n.to_string(),
                r.replicate.to_string(),
                format_float(r.sup_error),
            ]
        }),
    )
}

pub fn write_noise_dump(path: &Path, sample: &NoiseSample) -> Result<()> {
    write_atomic(path, &sample.to_le_bytes())
}

pub fn read_noise_dump(path: &Path, spec: GridSpec, seed: u64, level: u32) -> Result<NoiseSample> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    NoiseSample::from_le_bytes(spec, &bytes, seed, level)
}

/// `PREFIX_suffix`, keeping the prefix's directory.
pub fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    prefix.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let spec = GridSpec::new(2, 3).unwrap();
        let f = GridField::new(spec, vec![0.1, -2.0, 1e-20, 3.5]).unwrap();
        let bytes = grid_field_csv(&f).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("k,i1,i2,value\n1,1,1,0.1\n2,2,1,-2.0\n3,1,2,1e-20\n"));
        assert_eq!(parse_grid_csv(&text).unwrap(), f);
    }

    #[test]
    fn csv_rejects_wrong_order() {
        let text = "k,i1,value\n1,2,0.0\n2,1,0.0\n3,3,0.0\n";
        assert!(parse_grid_csv(text).is_err());
        assert!(parse_grid_csv("k,j,value\n1,1,0\n").is_err());
        assert!(parse_grid_csv("k,i1,value\n").is_err());
    }

    #[test]
    fn json_round_trip() {
        let spec = GridSpec::new(1, 4).unwrap();
        let f = GridField::new(spec, vec![1.0, 2.0, 3.0]).unwrap();
        let bytes = grid_field_json(&f).unwrap();
        assert_eq!(bytes, br#"{"d":1,"n":4,"values":[1.0,2.0,3.0]}"#);
        assert_eq!(
            parse_grid_json(std::str::from_utf8(&bytes).unwrap()).unwrap(),
            f
        );
    }

    #[test]
    fn atomic_write_and_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let p = prefixed(&dir.path().join("run"), "_z.csv");
        assert_eq!(p.file_name().unwrap(), "run_z.csv");
        write_atomic(&p, b"abc").unwrap();
        write_atomic(&p, b"de").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"de");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn errors_csv_format() {
        let rows = [ErrorRow {
            level_n: 4,
            replicate: 0,
            sup_error: 0.25,
        }];
        assert_eq!(
            errors_csv(&rows).unwrap(),
            b"level_n,replicate,sup_error\n4,0,0.25\n"
        );
    }
}
