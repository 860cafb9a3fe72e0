use std::path::Path;

use super::{quantize_unit, read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImageBuffer};

/// Sample width of a binary PNM payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn maxval(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PnmHeader {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    /// Offset of the first payload byte.
    pub payload: usize,
}

impl PnmHeader {
    pub fn bytes_per_sample(&self) -> usize {
        if self.maxval > 255 {
            2
        } else {
            1
        }
    }

    pub fn payload_len(&self) -> usize {
        self.width * self.height * self.channels * self.bytes_per_sample()
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("malformed PNM header: bad {what}")))
    }
}

pub(crate) fn parse_header(bytes: &[u8]) -> Result<PnmHeader> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(m) => {
            return Err(Error::Format(format!(
                "unsupported magic number {:?}",
                String::from_utf8_lossy(m)
            )))
        }
        None => return Err(Error::Format("file too short for a PNM header".into())),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("empty {width}x{height} PNM")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("maxval {maxval} out of range")));
    }
    // exactly one whitespace byte separates the header from the payload
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(Error::Format("missing whitespace after maxval".into())),
    }
    Ok(PnmHeader {
        channels,
        width,
        height,
        maxval: maxval as u32,
        payload: cur.pos + 1,
    })
}

/// Parses the header and returns the raw integer samples.
pub(crate) fn decode_samples(bytes: &[u8]) -> Result<(PnmHeader, Vec<u32>)> {
    let header = parse_header(bytes)?;
    let expected = header.payload_len();
    let payload = &bytes[header.payload.min(bytes.len())..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let payload = &payload[..expected];
    let samples: Vec<u32> = if header.bytes_per_sample() == 2 {
        payload
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as u32)
            .collect()
    } else {
        payload.iter().map(|&b| b as u32).collect()
    };
    if let Some(s) = samples.iter().find(|&&s| s > header.maxval) {
        return Err(Error::Format(format!(
            "sample {s} exceeds maxval {}",
            header.maxval
        )));
    }
    Ok((header, samples))
}

pub(crate) fn encode_samples(
    channels: usize,
    width: usize,
    height: usize,
    maxval: u32,
    samples: impl Iterator<Item = u32>,
) -> Vec<u8> {
    let magic = if channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval > 255 {
        for s in samples {
            out.extend_from_slice(&(s as u16).to_be_bytes());
        }
    } else {
        out.extend(samples.map(|s| s as u8));
    }
    out
}

/// Reads a binary PGM (P5) or PPM (P6), scaling samples to `[0, 1]`.
///
/// 8-bit files are tagged sRGB; deeper files are tagged linear RGB.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let bytes = read_bytes(path.as_ref())?;
    let (header, samples) = decode_samples(&bytes)?;
    let scale = header.maxval as f32;
    let data = samples.into_iter().map(|s| s as f32 / scale).collect();
    let space = if header.maxval <= 255 {
        ColorSpace::Srgb
    } else {
        ColorSpace::LinearRgb
    };
    ImageBuffer::new(header.height, header.width, header.channels, data, space)
}

/// Writes a one- or three-channel image as PGM/PPM.
pub fn write_image(img: &ImageBuffer, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    if img.channels() != 1 && img.channels() != 3 {
        return Err(Error::shape(format!(
            "PNM holds 1 or 3 channels, image has {}",
            img.channels()
        )));
    }
    let maxval = depth.maxval();
    let bytes = encode_samples(
        img.channels(),
        img.width(),
        img.height(),
        maxval,
        img.data().iter().map(|&v| quantize_unit(v, maxval)),
    );
    write_bytes(path.as_ref(), &bytes)
}
