//! Training checkpoints: the networks in the single-precision network
//! format plus a double-precision state file, so a resumed run continues
//! bit-for-bit.
//!
//! State file layout (little-endian):
//!
//! ```text
//! "SDFSTATE"          8 bytes
//! version             u32 (= 1)
//! next epoch          u64
//! consecutive skips   u64
//! has light field     u8
//! per network: parameter count u64, adam step u64, then
//!                     params, first moments, second moments as f64 x count
//! crc32               u32 over every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::optim::OptimizerState;
use super::scene::Model;
use super::step::TrainState;
use crate::diffmlp::checkpoint::{read_checkpoint, write_checkpoint};
use crate::diffmlp::ParamStore;
use crate::error::{Error, Result};
use crate::losses::LossBreakdown;

pub const STATE_MAGIC: &[u8; 8] = b"SDFSTATE";
const STATE_VERSION: u32 = 1;

pub const SDF_CHECKPOINT: &str = "sdf.ckpt";
pub const LIGHT_CHECKPOINT: &str = "light.ckpt";
pub const STATE_FILE: &str = "state.bin";
pub const LOSS_LOG: &str = "loss.log";

fn put_net(out: &mut Vec<u8>, params: &ParamStore, opt: &OptimizerState) {
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    out.extend_from_slice(&opt.step.to_le_bytes());
    for v in params.values.iter().chain(&opt.m).chain(&opt.v) {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_state(state: &TrainState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(STATE_MAGIC);
    out.extend_from_slice(&STATE_VERSION.to_le_bytes());
    out.extend_from_slice(&(state.epoch as u64).to_le_bytes());
    out.extend_from_slice(&(state.consecutive_skips as u64).to_le_bytes());
    out.push(state.model.light.is_some() as u8);
    put_net(&mut out, &state.model.sdf, &state.opt_sdf);
    if let (Some((_, p)), Some(o)) = (&state.model.light, &state.opt_light) {
        put_net(&mut out, p, o);
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("truncated training state".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self.take(8 * n)?.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
    }

    fn net(&mut self, expect: usize) -> Result<(Vec<f64>, OptimizerState)> {
        let n = self.u64()? as usize;
        if n != expect {
            return Err(Error::Format(format!("training state holds {n} parameters, network has {expect}")));
        }
        let step = self.u64()?;
        let values = self.f64s(n)?;
        let m = self.f64s(n)?;
        let v = self.f64s(n)?;
        Ok((values, OptimizerState { m, v, step }))
    }
}

/// Restore a state onto `model`, whose architectures fix the expected sizes.
pub fn decode_state(bytes: &[u8], mut model: Model) -> Result<TrainState> {
    if bytes.len() < 12 || &bytes[..8] != STATE_MAGIC {
        return Err(Error::Format("not a training state (bad magic)".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(Error::Format("training state CRC mismatch".into()));
    }
    let mut r = Reader { bytes: body, pos: 8 };
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != STATE_VERSION {
        return Err(Error::Format(format!("unsupported training state version {version}")));
    }
    let epoch = r.u64()? as usize;
    let consecutive_skips = r.u64()? as usize;
    let has_light = r.take(1)?[0] == 1;
    if has_light != model.light.is_some() {
        return Err(Error::Format("training state and checkpoint disagree on the light field".into()));
    }
    let (values, opt_sdf) = r.net(model.sdf.len())?;
    model.sdf = ParamStore::from_values(&model.sdf_arch, values)?;
    let mut opt_light = None;
    if let Some((a, p)) = model.light.as_mut() {
        let (values, o) = r.net(p.len())?;
        *p = ParamStore::from_values(a, values)?;
        opt_light = Some(o);
    }
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes in training state".into()));
    }
    let state = TrainState {
        model,
        opt_sdf,
        opt_light,
        epoch,
        consecutive_skips,
    };
    state.opt_sdf.check(state.model.sdf.len())?;
    state.model.sdf.check_finite()?;
    Ok(state)
}

/// Write networks, state and the loss log into `dir`.
pub fn save_training(dir: &Path, state: &TrainState, log: &[String]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_checkpoint(&dir.join(SDF_CHECKPOINT), &state.model.sdf_arch, &state.model.sdf)?;
    if let Some((a, p)) = &state.model.light {
        write_checkpoint(&dir.join(LIGHT_CHECKPOINT), a, p)?;
    }
    fs::write(dir.join(STATE_FILE), encode_state(state))?;
    let mut text = log.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(dir.join(LOSS_LOG), text)?;
    Ok(())
}

/// Read a training directory back. Log lines past the saved state (written
/// by an interrupted run) are dropped.
pub fn load_training(dir: &Path, iterations_per_epoch: usize) -> Result<(TrainState, Vec<String>)> {
    let (sdf_arch, sdf) = read_checkpoint(&dir.join(SDF_CHECKPOINT))?;
    let light_path = dir.join(LIGHT_CHECKPOINT);
    let light = if light_path.exists() { Some(read_checkpoint(&light_path)?) } else { None };
    let model = Model { sdf_arch, sdf, light };
    let state = decode_state(&fs::read(dir.join(STATE_FILE))?, model)?;
    let limit = state.epoch * iterations_per_epoch;
    let mut log = Vec::new();
    let log_path = dir.join(LOSS_LOG);
    if log_path.exists() {
        for line in fs::read_to_string(log_path)?.lines() {
            let (iter, _, _) = LossBreakdown::parse_log_line(line)?;
            if iter < limit {
                log.push(line.to_string());
            }
        }
    }
    Ok((state, log))
}
