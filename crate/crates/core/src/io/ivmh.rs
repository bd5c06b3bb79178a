//! `IVMH` heatmap files: magic, version byte, u32 LE width and height,
//! then row-major f32 LE values.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::heatmap::Heatmap;

pub const IVMH_MAGIC: &[u8; 4] = b"IVMH";
pub const IVMH_VERSION: u8 = 1;
const HEADER_LEN: usize = 13;

pub fn encode_ivmh(h: &Heatmap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * h.len());
    out.extend_from_slice(IVMH_MAGIC);
    out.push(IVMH_VERSION);
    out.extend_from_slice(&(h.width() as u32).to_le_bytes());
    out.extend_from_slice(&(h.height() as u32).to_le_bytes());
    for &v in h.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_ivmh(data: &[u8]) -> Result<Heatmap> {
    if data.len() < 4 {
        return Err(Error::TruncatedFile);
    }
    if &data[..4] != IVMH_MAGIC {
        return Err(Error::BadMagic);
    }
    if data.len() < HEADER_LEN {
        return Err(Error::TruncatedFile);
    }
    if data[4] != IVMH_VERSION {
        return Err(Error::BadVersion(data[4]));
    }
    let u32_at = |i: usize| u32::from_le_bytes(data[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (w, h) = (u32_at(5), u32_at(9));
    let payload = &data[HEADER_LEN..];
    let declared = w.checked_mul(h).and_then(|n| n.checked_mul(4));
    if declared != Some(payload.len()) {
        return Err(Error::SizeMismatch {
            declared: declared.unwrap_or(usize::MAX),
            actual: payload.len(),
        });
    }
    let mut values = Vec::with_capacity(w * h);
    for (index, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::ValueOutOfRange { index, value: v });
        }
        values.push(v);
    }
    Heatmap::new(w, h, values)
}

pub fn write_ivmh(path: &Path, h: &Heatmap) -> Result<()> {
    fs::write(path, encode_ivmh(h))?;
    Ok(())
}

pub fn read_ivmh(path: &Path) -> Result<Heatmap> {
    decode_ivmh(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_layout() {
        let h = Heatmap::filled(2, 2, 0.5).unwrap();
        let bytes = encode_ivmh(&h);
        assert_eq!(bytes.len(), 29);
        assert_eq!(&bytes[..5], b"IVMH\x01");
        assert_eq!(&bytes[5..13], &[2, 0, 0, 0, 2, 0, 0, 0]);
        for c in bytes[13..].chunks(4) {
            assert_eq!(c, 0.5f32.to_le_bytes());
        }
        assert_eq!(decode_ivmh(&bytes).unwrap(), h);
    }

    #[test]
    fn errors() {
        let good = encode_ivmh(&Heatmap::filled(2, 2, 0.5).unwrap());
        let mut bad = good.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_ivmh(&bad), Err(Error::BadMagic)));
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode_ivmh(&bad), Err(Error::BadVersion(2))));
        assert!(matches!(
            decode_ivmh(&good[..25]),
            Err(Error::SizeMismatch { declared: 16, actual: 12 })
        ));
        let mut bad = good.clone();
        bad[17..21].copy_from_slice(&1.5f32.to_le_bytes());
        assert!(matches!(decode_ivmh(&bad), Err(Error::ValueOutOfRange { index: 1, .. })));
        let mut bad = good;
        bad[13..17].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_ivmh(&bad), Err(Error::ValueOutOfRange { index: 0, .. })));
    }

    proptest! {
        #[test]
        fn roundtrip_within_f32_precision(
            (w, h, vals) in (1usize..20, 1usize..20)
                .prop_flat_map(|(w, h)| (Just(w), Just(h), proptest::collection::vec(0.0f64..=1.0, w * h)))
        ) {
            let src = Heatmap::new(w, h, vals).unwrap();
            let back = decode_ivmh(&encode_ivmh(&src)).unwrap();
            prop_assert_eq!(back.dims(), src.dims());
            for (a, b) in src.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() <= 6e-8);
            }
        }
    }
}
