//! Binary checkpoint files.
//!
//! Little-endian layout: an 8-byte magic, a version word, the backbone
//! configuration, the optimizer step counter, then every parameter tensor
//! followed by the Adam first and second moments, all as length-prefixed
//! f64 arrays in declaration order. Round-trips are bit-exact.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{AdamState, BackboneConfig, NetworkParams, IN_CHANNELS};

const MAGIC: &[u8; 8] = b"EDGECKPT";
const VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_array(w: &mut impl Write, data: &[f64]) -> Result<()> {
    write_u64(w, data.len() as u64)?;
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint("truncated file".into()))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint("truncated file".into()))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_array(r: &mut impl Read, expected_len: usize) -> Result<Vec<f64>> {
    let len = read_u64(r)? as usize;
    if len != expected_len {
        return Err(Error::Checkpoint(format!(
            "tensor length {len} does not match expected {expected_len}"
        )));
    }
    let mut data = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf)
            .map_err(|_| Error::Checkpoint("truncated tensor data".into()))?;
        data.push(f64::from_le_bytes(buf));
    }
    Ok(data)
}

pub fn save_checkpoint(params: &NetworkParams, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    write_u32(&mut w, params.config.num_blocks as u32)?;
    write_u32(&mut w, params.config.base_channels as u32)?;
    write_u32(&mut w, params.config.input_size.0 as u32)?;
    write_u32(&mut w, params.config.input_size.1 as u32)?;
    write_u32(&mut w, IN_CHANNELS as u32)?;
    write_u64(&mut w, params.opt.step)?;
    write_u32(&mut w, params.tensor_count() as u32)?;
    for i in 0..params.tensor_count() {
        write_array(&mut w, params.tensor(i))?;
    }
    for m in &params.opt.m {
        write_array(&mut w, m)?;
    }
    for v in &params.opt.v {
        write_array(&mut w, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::CheckpointVersion {
            got: version,
            want: VERSION,
        });
    }
    let config = BackboneConfig {
        num_blocks: read_u32(&mut r)? as usize,
        base_channels: read_u32(&mut r)? as usize,
        input_size: (read_u32(&mut r)? as usize, read_u32(&mut r)? as usize),
    };
    let in_channels = read_u32(&mut r)? as usize;
    if in_channels != IN_CHANNELS {
        return Err(Error::Checkpoint(format!(
            "input channel count {in_channels} unsupported"
        )));
    }
    let step = read_u64(&mut r)?;
    // Rebuild the layer scaffolding from the config, then fill data in.
    let mut params = NetworkParams::init(config, 0)?;
    let tensor_count = read_u32(&mut r)? as usize;
    if tensor_count != params.tensor_count() {
        return Err(Error::Checkpoint(format!(
            "tensor count {tensor_count} does not match config"
        )));
    }
    for i in 0..tensor_count {
        let expected = params.tensor(i).len();
        *params.tensor_mut(i) = read_array(&mut r, expected)?;
    }
    let mut opt = AdamState::zeros_like(&params);
    opt.step = step;
    for m in opt.m.iter_mut() {
        *m = read_array(&mut r, m.len())?;
    }
    for v in opt.v.iter_mut() {
        *v = read_array(&mut r, v.len())?;
    }
    params.opt = opt;
    Ok(params)
}
