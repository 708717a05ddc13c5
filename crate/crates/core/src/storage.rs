//! Binary frame store (`frames.bin`) written by `ingest` and read back by
//! the later stages.
//!
//! Layout, all integers little-endian:
//! magic `LKASFRM\0`, u32 schema version, u64 header length, JSON header,
//! frame-validity bitmap, then per channel a presence bitmap followed by
//! `n_frames` f64 values.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::model::{Channel, FrameTable, SettingMeta, SCHEMA_VERSION};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"LKASFRM\0";

#[derive(Serialize, Deserialize)]
struct Header {
    period: f64,
    start_time: f64,
    n_frames: u64,
    meta: SettingMeta,
    channels: Vec<String>,
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

fn unpack_bits(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect()
}

pub fn write_frames<W: Write>(table: &FrameTable, mut out: W) -> Result<()> {
    let n = table.n_frames();
    for ch in &table.channels {
        if ch.values.len() != n || ch.present.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: ch.values.len(),
            });
        }
    }
    let header = serde_json::to_vec(&Header {
        period: table.period,
        start_time: table.start_time,
        n_frames: n as u64,
        meta: table.meta.clone(),
        channels: table.channels.iter().map(|c| c.name.clone()).collect(),
    })?;
    out.write_all(MAGIC)?;
    out.write_all(&SCHEMA_VERSION.to_le_bytes())?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    out.write_all(&pack_bits(&table.frame_valid))?;
    let mut buf = Vec::with_capacity(n * 8);
    for ch in &table.channels {
        out.write_all(&pack_bits(&ch.present))?;
        buf.clear();
        for v in &ch.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

fn read_exact<R: Read>(input: &mut R, n: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    input.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::CorruptStore(format!("truncated {what}")),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

pub fn read_frames<R: Read>(mut input: R) -> Result<FrameTable> {
    let magic = read_exact(&mut input, 8, "magic")?;
    if magic != MAGIC {
        return Err(Error::CorruptStore("not a frame store".into()));
    }
    let version = u32::from_le_bytes(read_exact(&mut input, 4, "version")?.try_into().unwrap());
    if version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: version,
            expected: SCHEMA_VERSION,
        });
    }
    let len = u64::from_le_bytes(read_exact(&mut input, 8, "header length")?.try_into().unwrap());
    if len > 1 << 30 {
        return Err(Error::CorruptStore(format!("header length {len} is implausible")));
    }
    let header: Header = serde_json::from_slice(&read_exact(&mut input, len as usize, "header")?)
        .map_err(|e| Error::CorruptStore(format!("bad header: {e}")))?;
    let n = usize::try_from(header.n_frames)
        .map_err(|_| Error::CorruptStore("frame count overflows".into()))?;
    let nb = n.div_ceil(8);
    let frame_valid = unpack_bits(&read_exact(&mut input, nb, "validity bitmap")?, n);
    let mut channels = Vec::with_capacity(header.channels.len());
    for name in header.channels {
        let present = unpack_bits(&read_exact(&mut input, nb, "presence bitmap")?, n);
        let raw = read_exact(&mut input, n * 8, "channel values")?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        channels.push(Channel::new(name, values, present));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::CorruptStore("trailing bytes".into()));
    }
    Ok(FrameTable {
        period: header.period,
        start_time: header.start_time,
        frame_valid,
        channels,
        meta: header.meta,
    })
}

pub fn save_frames(table: &FrameTable, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_frames(table, std::io::BufWriter::new(file))
}

pub fn load_frames(path: &std::path::Path) -> Result<FrameTable> {
    let file = std::fs::File::open(path)?;
    read_frames(std::io::BufReader::new(file))
}
