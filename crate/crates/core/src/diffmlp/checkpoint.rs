//! Binary network checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! "SDFFORGE"            8 bytes
//! version               u32 (= 1)
//! kind                  u8  (0 = distance, 1 = light field)
//! activation id         u8  (0 = softplus, 1 = relu)
//! softplus beta         f64 (0 for relu)
//! final activation id   u8  (0 = none, 1 = sigmoid)
//! hidden layer count    u32, then one u32 width per layer
//! skip layer count      u32, then one u32 index per skip
//! octaves               u32
//! output width          u32
//! descriptor width      u32
//! parameter count       u64
//! parameters            f32 x count
//! crc32                 u32 over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::arch::{Activation, FinalActivation, MlpArchitecture, NetKind};
use super::params::ParamStore;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SDFFORGE";
pub const VERSION: u32 = 1;

pub fn encode_checkpoint(arch: &MlpArchitecture, params: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 4 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(arch.kind.id());
    out.push(arch.activation.id());
    let beta = match arch.activation {
        Activation::Softplus { beta } => beta,
        Activation::Relu => 0.0,
    };
    out.extend_from_slice(&beta.to_le_bytes());
    out.push(arch.final_activation.id());
    out.extend_from_slice(&(arch.hidden.len() as u32).to_le_bytes());
    for &w in &arch.hidden {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    out.extend_from_slice(&(arch.skip_layers.len() as u32).to_le_bytes());
    for &s in &arch.skip_layers {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for v in [arch.pe_octaves, arch.output_width, arch.descriptor_width] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for &v in &params.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize_list(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()? as usize;
        if n > 4096 {
            return Err(Error::Format(format!("implausible list length {n}")));
        }
        (0..n).map(|_| self.u32().map(|v| v as usize)).collect()
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(MlpArchitecture, ParamStore)> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..8] != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::Format("checkpoint CRC mismatch".into()));
    }
    let mut c = Cursor { bytes: body, pos: 8 };
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let kind = match c.u8()? {
        0 => NetKind::Sdf,
        1 => NetKind::LightField,
        k => return Err(Error::Format(format!("unknown network kind {k}"))),
    };
    let act_id = c.u8()?;
    let beta = c.f64()?;
    let activation = match act_id {
        0 => Activation::Softplus { beta },
        1 => Activation::Relu,
        a => return Err(Error::Format(format!("unknown activation {a}"))),
    };
    let final_activation = match c.u8()? {
        0 => FinalActivation::None,
        1 => FinalActivation::Sigmoid,
        a => return Err(Error::Format(format!("unknown final activation {a}"))),
    };
    let hidden = c.usize_list()?;
    let skip_layers = c.usize_list()?;
    let pe_octaves = c.u32()? as usize;
    let output_width = c.u32()? as usize;
    let descriptor_width = c.u32()? as usize;
    let arch = MlpArchitecture {
        kind,
        hidden,
        skip_layers,
        activation,
        pe_octaves,
        output_width,
        descriptor_width,
        final_activation,
    };
    arch.validate().map_err(|e| Error::Format(format!("checkpoint architecture: {e}")))?;
    let count = c.u64()? as usize;
    if count != arch.param_count() {
        return Err(Error::Format(format!(
            "checkpoint holds {count} parameters, architecture needs {}",
            arch.param_count()
        )));
    }
    let blob = c.take(4 * count)?;
    let values = blob
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    if c.pos != body.len() {
        return Err(Error::Format("trailing bytes in checkpoint".into()));
    }
    let params = ParamStore::from_values(&arch, values)?;
    Ok((arch, params))
}

pub fn write_checkpoint(path: &Path, arch: &MlpArchitecture, params: &ParamStore) -> Result<()> {
    fs::write(path, encode_checkpoint(arch, params))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(MlpArchitecture, ParamStore)> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmlp::params::init_params;

    #[test]
    fn round_trip_at_single_precision() {
        let arch = MlpArchitecture::sdf(vec![16, 16, 16], vec![1], 2, 5);
        let params = init_params(&arch, 4);
        let bytes = encode_checkpoint(&arch, &params);
        assert_eq!(&bytes[..8], b"SDFFORGE");
        let (arch2, params2) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(arch, arch2);
        for (a, b) in params.values.iter().zip(&params2.values) {
            assert_eq!(*b, *a as f32 as f64);
        }
        let lf = MlpArchitecture::light_field(vec![8, 8], 5, 2);
        let p = init_params(&lf, 1);
        assert_eq!(decode_checkpoint(&encode_checkpoint(&lf, &p)).unwrap().0, lf);
    }

    #[test]
    fn corruption_detected() {
        let arch = MlpArchitecture::sdf(vec![4], vec![], 0, 0);
        let mut bytes = encode_checkpoint(&arch, &init_params(&arch, 0));
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(decode_checkpoint(&bytes), Err(Error::Format(_))));
        assert!(decode_checkpoint(b"NOTACHECKPOINT").is_err());
    }
}
