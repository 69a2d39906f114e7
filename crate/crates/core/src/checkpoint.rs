//! Checkpoint file format.
//!
//! ```text
//! ARCMATCH-CKPT v1
//! key=value            (model config, keys sorted)
//! ...
//! <blank line>
//! <blob>               per tensor, in parameter order: "<len>\n" then len f32 LE
//! <checksum>           FNV-1a 64 of the blob, u64 LE
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::MatchModel;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::zoo::{AnyModel, ModelSpec};

pub const MAGIC: &str = "ARCMATCH-CKPT";
pub const VERSION: &str = "v1";

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

pub fn save_checkpoint<T: Scalar, W: Write>(model: &AnyModel<T>, mut out: W) -> Result<()> {
    let mut head = format!("{MAGIC} {VERSION}\n");
    for (k, v) in model.spec().to_kv() {
        head.push_str(&format!("{k}={v}\n"));
    }
    head.push('\n');
    let mut blob = Vec::new();
    for t in model.params() {
        blob.extend_from_slice(format!("{}\n", t.len()).as_bytes());
        for v in t.data() {
            blob.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
    }
    out.write_all(head.as_bytes())?;
    out.write_all(&blob)?;
    out.write_all(&fnv1a64(&blob).to_le_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar, R: Read>(mut input: R) -> Result<AnyModel<T>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;

    let first_end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::CheckpointFormat("missing header line".into()))?;
    let first = String::from_utf8_lossy(&bytes[..first_end]);
    match first.split_once(' ') {
        Some((MAGIC, VERSION)) => {}
        Some((MAGIC, other)) => {
            return Err(Error::CheckpointVersion {
                expected: VERSION.into(),
                found: other.into(),
            });
        }
        _ => {
            return Err(Error::CheckpointFormat(format!(
                "not a checkpoint (first line {first:?})"
            )))
        }
    }

    let header_end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::CheckpointFormat("missing blank line after config".into()))?;
    let config = std::str::from_utf8(&bytes[first_end + 1..header_end + 1])
        .map_err(|_| Error::CheckpointFormat("config is not UTF-8".into()))?;
    let mut kv = BTreeMap::new();
    for line in config.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::CheckpointFormat(format!("bad config line {line:?}")))?;
        kv.insert(k.to_string(), v.to_string());
    }

    let rest = &bytes[header_end + 2..];
    let (blob, stored) = if rest.len() >= 8 {
        let (b, s) = rest.split_at(rest.len() - 8);
        (b, u64::from_le_bytes(s.try_into().expect("8 bytes")))
    } else {
        (rest, 0)
    };
    let computed = fnv1a64(blob);
    if rest.len() < 8 || stored != computed {
        return Err(Error::CheckpointChecksum { stored, computed });
    }

    let mut tensors: Vec<Vec<f32>> = Vec::new();
    let mut pos = 0;
    while pos < blob.len() {
        let nl = blob[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::CheckpointFormat("missing tensor length line".into()))?;
        let len: usize = std::str::from_utf8(&blob[pos..pos + nl])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CheckpointFormat("bad tensor length line".into()))?;
        pos += nl + 1;
        let end = pos + 4 * len;
        if end > blob.len() {
            return Err(Error::CheckpointFormat(format!(
                "tensor {} runs past the end of the blob",
                tensors.len()
            )));
        }
        tensors.push(
            blob[pos..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect(),
        );
        pos = end;
    }

    let spec = ModelSpec::from_kv(&kv)?;
    let mut model = AnyModel::<T>::build(&spec, &mut Rng::new(0))
        .map_err(|e| Error::CheckpointShape(format!("config does not build a model: {e}")))?;
    let mut params = model.params_mut();
    if params.len() != tensors.len() {
        return Err(Error::CheckpointShape(format!(
            "config implies {} tensors, blob holds {}",
            params.len(),
            tensors.len()
        )));
    }
    for (i, (p, values)) in params.iter_mut().zip(&tensors).enumerate() {
        if p.len() != values.len() {
            return Err(Error::CheckpointShape(format!(
                "tensor {i}: config implies {} values {:?}, blob holds {}",
                p.len(),
                p.shape(),
                values.len()
            )));
        }
        for (d, &v) in p.data_mut().iter_mut().zip(values) {
            *d = T::from_f64_lossy(f64::from(v));
        }
    }
    Ok(model)
}

pub fn save_checkpoint_file<T: Scalar>(model: &AnyModel<T>, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    save_checkpoint(model, BufWriter::new(f))
}

pub fn load_checkpoint_file<T: Scalar>(path: &Path) -> Result<AnyModel<T>> {
    let f = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    load_checkpoint(BufReader::new(f))
}
