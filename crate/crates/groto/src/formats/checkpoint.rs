//! `GRMD` model checkpoints (optionally with source centroids) and `GRMB`
//! memory banks.
//!
//! `GRMD`: magic, version, `u32` layer count, then per layer `u32` in,
//! `u32` out, `u8` relu, `f32` weight (in × out), `f32` bias (out); then
//! `u32` classes, `u32` feature dim, `f32` classifier; then `u8` centroid
//! flag and, if set, `f32` centroids (classes × feature dim).
//!
//! `GRMB`: magic, version, `u32` capacity per class, `u32` classes, `u32`
//! record count, per record `u32` class, `u32` session, `f32` confidence;
//! `u32` entry count, `u32` input dim, per entry `u32` label, `f32`
//! confidence, `f32` input, `f32` soft prediction (classes).

use std::collections::BTreeMap;
use std::path::Path;

use groto_core::model::{Layer, ModelParams, SourceSnapshot};
use groto_core::numerics::Tensor;
use groto_core::replay::{ClassRecord, MemoryBank, MemoryEntry};

use super::bytes::{Reader, Writer};
use super::{read_bytes, write_bytes};
use crate::error::{Error, FormatError, Result};

const MODEL_MAGIC: &[u8; 4] = b"GRMD";
const BANK_MAGIC: &[u8; 4] = b"GRMB";

/// A decoded model checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub params: ModelParams,
    pub centroids: Option<Tensor>,
}

impl ModelFile {
    pub fn into_snapshot(self, path: &Path) -> Result<SourceSnapshot> {
        let centroids = self
            .centroids
            .ok_or_else(|| Error::data(path, "checkpoint has no source centroids"))?;
        Ok(SourceSnapshot::new(self.params, centroids)?)
    }
}

pub fn encode_model(params: &ModelParams, centroids: Option<&Tensor>) -> Vec<u8> {
    let mut w = Writer::default();
    w.magic(MODEL_MAGIC).len(params.layers.len());
    for l in &params.layers {
        w.len(l.weight.rows())
            .len(l.weight.cols())
            .u8(l.relu as u8)
            .f32s(l.weight.data())
            .f32s(l.bias.data());
    }
    w.len(params.classifier.rows())
        .len(params.classifier.cols())
        .f32s(params.classifier.data());
    match centroids {
        Some(c) => w.u8(1).f32s(c.data()),
        None => w.u8(0),
    };
    w.finish()
}

fn matrix(r: &mut Reader, rows: usize, cols: usize, what: &str) -> std::result::Result<Tensor, FormatError> {
    let at = r.offset();
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| r.err(format!("{what} size overflows")))?;
    let data = r.f32s(n, what)?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(FormatError::new(at, format!("non-finite value in {what}")));
    }
    Tensor::matrix(rows, cols, data).map_err(|e| FormatError::new(at, e.to_string()))
}

pub fn decode_model(bytes: &[u8]) -> std::result::Result<ModelFile, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    let n_layers = r.len("layer count")?;
    if n_layers == 0 {
        return Err(r.err("model has no layers"));
    }
    let mut layers = Vec::with_capacity(n_layers.min(16));
    for _ in 0..n_layers {
        let at = r.offset();
        let inp = r.len("layer input dim")?;
        let out = r.len("layer output dim")?;
        let relu = r.flag("relu flag")?;
        let weight = matrix(&mut r, inp, out, "layer weight")?;
        let bias = matrix(&mut r, 1, out, "layer bias")?;
        if let Some(prev) = layers.last().map(|l: &Layer| l.weight.cols()) {
            if prev != inp {
                return Err(FormatError::new(at, format!("layer expects {inp} inputs, previous emits {prev}")));
            }
        }
        layers.push(Layer {
            weight,
            bias: Tensor::vector(bias.into_data()),
            relu,
        });
    }
    let at = r.offset();
    let classes = r.len("class count")?;
    let feat = r.len("feature dim")?;
    let classifier = matrix(&mut r, classes, feat, "classifier")?;
    let params = ModelParams { layers, classifier };
    params
        .check()
        .map_err(|e| FormatError::new(at, e.to_string()))?;
    let centroids = if r.flag("centroid flag")? {
        Some(matrix(&mut r, classes, feat, "centroids")?)
    } else {
        None
    };
    r.end()?;
    Ok(ModelFile { params, centroids })
}

pub fn write_model(path: &Path, params: &ModelParams, centroids: Option<&Tensor>) -> Result<()> {
    write_bytes(path, &encode_model(params, centroids))
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    decode_model(&read_bytes(path)?).map_err(|e| Error::format(path, e))
}

pub fn encode_bank(bank: &MemoryBank) -> Vec<u8> {
    let mut w = Writer::default();
    w.magic(BANK_MAGIC)
        .len(bank.per_class())
        .len(bank.classes())
        .len(bank.records().len());
    for (&class, rec) in bank.records() {
        w.len(class).len(rec.session).f32s(&[rec.confidence]);
    }
    let dim = bank.entries().first().map_or(0, |e| e.input.len());
    w.len(bank.len()).len(dim);
    for e in bank.entries() {
        w.len(e.label)
            .f32s(&[e.confidence])
            .f32s(&e.input)
            .f32s(&e.soft_pred);
    }
    w.finish()
}

pub fn decode_bank(bytes: &[u8]) -> std::result::Result<MemoryBank, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(BANK_MAGIC)?;
    let per_class = r.len("capacity")?;
    let classes = r.len("class count")?;
    let n_records = r.len("record count")?;
    let mut records = BTreeMap::new();
    for _ in 0..n_records {
        let class = r.len("record class")?;
        let session = r.len("record session")?;
        let confidence = r.f32s(1, "record confidence")?[0];
        records.insert(class, ClassRecord { session, confidence });
    }
    let n = r.len("entry count")?;
    let dim = r.len("input dim")?;
    let mut entries = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let label = r.len("entry label")?;
        let confidence = r.f32s(1, "entry confidence")?[0];
        let input = r.f32s(dim, "entry input")?;
        let soft_pred = r.f32s(classes, "entry prediction")?;
        entries.push(MemoryEntry {
            input,
            soft_pred,
            label,
            confidence,
        });
    }
    let at = r.offset();
    r.end()?;
    MemoryBank::from_parts(per_class, classes, entries, records)
        .map_err(|e| FormatError::new(at, e.to_string()))
}

pub fn write_bank(path: &Path, bank: &MemoryBank) -> Result<()> {
    write_bytes(path, &encode_bank(bank))
}

pub fn read_bank(path: &Path) -> Result<MemoryBank> {
    decode_bank(&read_bytes(path)?).map_err(|e| Error::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use groto_core::replay::ClassExemplars;
    use groto_core::rng::Rng;

    fn quantized_model() -> (ModelParams, Tensor) {
        let mut rng = Rng::new(3);
        let m = ModelParams::init(5, 7, 4, 3, &mut rng);
        let c = Tensor::matrix(3, 4, rng.normal_vec(12, 1.0)).unwrap();
        // checkpoints hold f32; quantize by one round trip
        let back = decode_model(&encode_model(&m, Some(&c))).unwrap();
        (back.params, back.centroids.unwrap())
    }

    #[test]
    fn model_round_trip_is_exact_after_quantization() {
        let (m, c) = quantized_model();
        let bytes = encode_model(&m, Some(&c));
        let back = decode_model(&bytes).unwrap();
        assert_eq!(back.params, m);
        assert_eq!(back.centroids.as_ref(), Some(&c));
        assert_eq!(encode_model(&back.params, back.centroids.as_ref()), bytes);
        let plain = decode_model(&encode_model(&m, None)).unwrap();
        assert!(plain.centroids.is_none());
    }

    #[test]
    fn model_corruption_is_located() {
        let (m, c) = quantized_model();
        let bytes = encode_model(&m, Some(&c));
        let err = decode_model(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(err.message.contains("truncated centroids"));
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(decode_model(&extra).unwrap_err().offset, bytes.len());
        assert!(decode_model(b"GRFT\x01\0\0\0").unwrap_err().message.contains("magic"));
    }

    #[test]
    fn bank_round_trip_is_exact() {
        let mut bank = MemoryBank::new(2, 3);
        bank.update(
            &[ClassExemplars {
                class: 1,
                inputs: vec![vec![0.5, -1.0], vec![2.0, 0.25]],
                soft_preds: vec![vec![0.25, 0.5, 0.25], vec![0.0, 1.0, 0.0]],
                confidence: 0.75,
            }],
            2,
        )
        .unwrap();
        let bytes = encode_bank(&bank);
        let back = decode_bank(&bytes).unwrap();
        assert_eq!(back, bank);
        assert_eq!(encode_bank(&back), bytes);
        assert_eq!(decode_bank(&encode_bank(&MemoryBank::new(10, 4))).unwrap(), MemoryBank::new(10, 4));
        assert!(decode_bank(&bytes[..bytes.len() - 2]).is_err());
    }
}
