//! Binary PGM (P5) and PPM (P6) with maxval 255.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::heatmap::ImageBuffer;

pub fn encode_pnm(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.bytes());
    out
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let c = self.data[self.pos];
            if c == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(if self.pos >= self.data.len() {
                Error::TruncatedFile
            } else {
                Error::UnsupportedFormat("malformed header".into())
            });
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::UnsupportedFormat("header value too large".into()))
    }
}

pub fn decode_pnm(data: &[u8]) -> Result<ImageBuffer> {
    if data.len() < 2 {
        return Err(Error::TruncatedFile);
    }
    let channels = match &data[..2] {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "magic `{}`",
                String::from_utf8_lossy(other)
            )))
        }
    };
    let mut c = Cursor { data, pos: 2 };
    let width = c.number()?;
    let height = c.number()?;
    let maxval = c.number()?;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!("maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::UnsupportedFormat("zero dimension".into()));
    }
    // exactly one whitespace byte separates the header from the raster
    if c.pos >= data.len() {
        return Err(Error::TruncatedFile);
    }
    if !data[c.pos].is_ascii_whitespace() {
        return Err(Error::UnsupportedFormat("missing raster separator".into()));
    }
    let start = c.pos + 1;
    let need = width * height * channels;
    if data.len() < start + need {
        return Err(Error::TruncatedFile);
    }
    ImageBuffer::new(width, height, channels, data[start..start + need].to_vec())
}

pub fn write_pnm(path: &Path, img: &ImageBuffer) -> Result<()> {
    fs::write(path, encode_pnm(img))?;
    Ok(())
}

pub fn read_pnm(path: &Path) -> Result<ImageBuffer> {
    decode_pnm(&fs::read(path)?)
}
