//! Trained-model files (`IVMP`) and training-history CSV.
//!
//! `IVMP` layout: magic, version byte 1, kind byte (0 generator,
//! 1 discriminator), u32 LE input/hidden/output sizes, then the flat
//! parameter vector as f64 LE.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dwsl::{DiscriminatorParams, GeneratorParams, HistoryRow, TwoLayer};
use crate::error::{Error, Result};

pub const IVMP_MAGIC: &[u8; 4] = b"IVMP";
pub const IVMP_VERSION: u8 = 1;
const HEADER_LEN: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Generator = 0,
    Discriminator = 1,
}

pub fn encode_params(kind: ModelKind, net: &TwoLayer) -> Vec<u8> {
    let (i, h, o) = net.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * net.len());
    out.extend_from_slice(IVMP_MAGIC);
    out.push(IVMP_VERSION);
    out.push(kind as u8);
    for d in [i, h, o] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_params(data: &[u8]) -> Result<(ModelKind, TwoLayer)> {
    if data.len() < 4 {
        return Err(Error::TruncatedFile);
    }
    if &data[..4] != IVMP_MAGIC {
        return Err(Error::BadMagic);
    }
    if data.len() < HEADER_LEN {
        return Err(Error::TruncatedFile);
    }
    if data[4] != IVMP_VERSION {
        return Err(Error::BadVersion(data[4]));
    }
    let kind = match data[5] {
        0 => ModelKind::Generator,
        1 => ModelKind::Discriminator,
        k => return Err(Error::UnsupportedFormat(format!("model kind {k}"))),
    };
    let u32_at = |i: usize| u32::from_le_bytes(data[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (i, h, o) = (u32_at(6), u32_at(10), u32_at(14));
    let n = TwoLayer::zeros(i, h, o).len();
    let payload = &data[HEADER_LEN..];
    if payload.len() != 8 * n {
        return Err(Error::SizeMismatch {
            declared: 8 * n,
            actual: payload.len(),
        });
    }
    let params = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((kind, TwoLayer::from_params(i, h, o, params)?))
}

pub fn write_generator(path: &Path, gen: &GeneratorParams) -> Result<()> {
    fs::write(path, encode_params(ModelKind::Generator, gen.net()))?;
    Ok(())
}

pub fn write_discriminator(path: &Path, disc: &DiscriminatorParams) -> Result<()> {
    fs::write(path, encode_params(ModelKind::Discriminator, disc.net()))?;
    Ok(())
}

fn read_kind(path: &Path, want: ModelKind) -> Result<TwoLayer> {
    let (kind, net) = decode_params(&fs::read(path)?)?;
    if kind != want {
        return Err(Error::UnsupportedFormat(format!("expected {want:?}, found {kind:?}")));
    }
    Ok(net)
}

pub fn read_generator(path: &Path) -> Result<GeneratorParams> {
    GeneratorParams::from_net(read_kind(path, ModelKind::Generator)?)
}

pub fn read_discriminator(path: &Path) -> Result<DiscriminatorParams> {
    DiscriminatorParams::from_net(read_kind(path, ModelKind::Discriminator)?)
}

pub const HISTORY_HEADER: &str = "step,stage,loss,mean_weight_e,mean_weight_o";

/// Floats use Rust's shortest round-trip formatting; missing means print `nan`.
pub fn render_history(rows: &[HistoryRow]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{:?},{:?},{:?}",
            r.step, r.stage, r.loss, r.mean_weight_e, r.mean_weight_o
        )
        .expect("writing to a String");
    }
    out
}

pub fn parse_history(text: &str) -> Result<Vec<HistoryRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HISTORY_HEADER => {}
        _ => {
            return Err(Error::MalformedLine {
                line: 1,
                message: "missing history header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let bad = |message: String| Error::MalformedLine { line: i + 1, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
        rows.push(HistoryRow {
            step: f[0].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            stage: f[1].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            loss: num(f[2])?,
            mean_weight_e: num(f[3])?,
            mean_weight_o: num(f[4])?,
        });
    }
    Ok(rows)
}

pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    fs::write(path, render_history(rows))?;
    Ok(())
}
