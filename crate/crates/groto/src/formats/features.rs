//! `GRFT` feature matrices: magic, `u32` version, `u32` rows, `u32` dim,
//! `u8` label flag, row-major `f32` payload, then one `u32` label per row
//! when the flag is set. A CSV form is accepted for ingestion.

use std::path::Path;

use groto_core::numerics::Tensor;
use groto_core::scenario::FeatureMatrix;

use super::bytes::{Reader, Writer};
use super::{read_bytes, write_bytes};
use crate::error::{Error, FormatError, Result};

const MAGIC: &[u8; 4] = b"GRFT";

pub fn encode_features(m: &FeatureMatrix) -> Vec<u8> {
    let mut w = Writer::default();
    w.magic(MAGIC)
        .len(m.rows())
        .len(m.dim())
        .u8(m.labels().is_some() as u8)
        .f32s(m.values().data());
    if let Some(labels) = m.labels() {
        for &l in labels {
            w.len(l);
        }
    }
    w.finish()
}

pub fn decode_features(bytes: &[u8]) -> std::result::Result<FeatureMatrix, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let rows = r.len("row count")?;
    let dim = r.len("dim")?;
    let labeled = r.flag("label flag")?;
    let n = rows
        .checked_mul(dim)
        .ok_or_else(|| r.err("rows × dim overflows"))?;
    let at = r.offset();
    let data = r.f32s(n, "payload")?;
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(FormatError::new(at + 4 * i, "non-finite value"));
    }
    let labels = if labeled {
        let mut ls = Vec::with_capacity(rows);
        for _ in 0..rows {
            ls.push(r.len("label")?);
        }
        Some(ls)
    } else {
        None
    };
    r.end()?;
    let values = Tensor::new(vec![rows, dim], data).map_err(|e| FormatError::new(at, e.to_string()))?;
    FeatureMatrix::new(values, labels).map_err(|e| FormatError::new(at, e.to_string()))
}

pub fn load_feature_file(path: &Path) -> Result<FeatureMatrix> {
    let bytes = read_bytes(path)?;
    decode_features(&bytes).map_err(|e| Error::format(path, e))
}

pub fn write_feature_file(path: &Path, m: &FeatureMatrix) -> Result<()> {
    write_bytes(path, &encode_features(m))
}

/// CSV ingestion. The header line holds the feature dimension, optionally
/// followed by the word `label` when each row ends with an integer label
/// (`3,label`). Every following non-empty line is one row.
pub fn parse_feature_csv(text: &str) -> std::result::Result<FeatureMatrix, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let offset = |rec: &csv::StringRecord| rec.position().map_or(0, |p| p.byte() as usize);
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(FormatError::new(0, e.to_string())),
        None => return Err(FormatError::new(0, "empty CSV: missing header")),
    };
    let dim: usize = header
        .get(0)
        .and_then(|d| d.parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| FormatError::new(0, "header must start with a positive dimension"))?;
    let labeled = match (header.len(), header.get(1)) {
        (1, _) => false,
        (2, Some("label")) => true,
        _ => return Err(FormatError::new(0, "header must be `dim` or `dim,label`")),
    };
    let width = dim + labeled as usize;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let at = e.position().map_or(0, |p| p.byte() as usize);
            FormatError::new(at, e.to_string())
        })?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        let at = offset(&rec);
        if rec.len() != width {
            return Err(FormatError::new(
                at,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        for field in rec.iter().take(dim) {
            let v: f64 = field
                .parse()
                .map_err(|_| FormatError::new(at, format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(FormatError::new(at, "non-finite value"));
            }
            data.push(v);
        }
        if labeled {
            let field = &rec[dim];
            labels.push(
                field
                    .parse::<usize>()
                    .map_err(|_| FormatError::new(at, format!("bad label: {field:?}")))?,
            );
        }
    }
    let rows = data.len() / dim;
    let values = Tensor::new(vec![rows, dim], data).map_err(|e| FormatError::new(0, e.to_string()))?;
    FeatureMatrix::new(values, labeled.then_some(labels)).map_err(|e| FormatError::new(0, e.to_string()))
}
