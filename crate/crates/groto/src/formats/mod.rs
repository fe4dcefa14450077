//! On-disk formats. Every binary format is little-endian with a four-byte
//! magic, a `u32` version and `f32` payloads.

mod bytes;
pub mod checkpoint;
pub mod features;

pub use checkpoint::{
    decode_bank, decode_model, encode_bank, encode_model, read_bank, read_model, write_bank,
    write_model, ModelFile,
};
pub use features::{
    decode_features, encode_features, load_feature_file, parse_feature_csv, write_feature_file,
};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
