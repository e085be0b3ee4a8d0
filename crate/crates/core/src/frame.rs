//! Grayscale frames and binary PGM (P5) input/output.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth class of a frame. Anomaly is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Normal,
    Anomaly,
}

impl Label {
    pub fn is_anomaly(self) -> bool {
        self == Label::Anomaly
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::Normal => 0,
            Label::Anomaly => 1,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Label::Normal),
            1 => Ok(Label::Anomaly),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<bool> for Label {
    fn from(anomalous: bool) -> Self {
        if anomalous {
            Label::Anomaly
        } else {
            Label::Normal
        }
    }
}

/// A row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    pub label: Label,
    /// Per-pixel ground-truth anomaly indicator, same dimensions as `pixels`.
    pub mask: Option<Vec<bool>>,
}

impl Frame {
    /// Builds a frame, checking the pixel and mask dimensions. When a mask is
    /// given the label is derived from it.
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<f64>,
        label: Label,
        mask: Option<Vec<bool>>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("empty frame {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        let label = match &mask {
            Some(m) if m.len() != pixels.len() => {
                return Err(Error::Shape(format!(
                    "mask has {} entries, frame has {}",
                    m.len(),
                    pixels.len()
                )))
            }
            Some(m) => Label::from(m.iter().any(|&b| b)),
            None => label,
        };
        Ok(Self {
            width,
            height,
            pixels,
            label,
            mask,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn mask_count(&self) -> usize {
        self.mask
            .as_ref()
            .map_or(0, |m| m.iter().filter(|&&b| b).count())
    }

    /// Mean (x, y) of the set mask pixels, if any.
    pub fn mask_centroid(&self) -> Option<(f64, f64)> {
        let mask = self.mask.as_ref()?;
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for (i, _) in mask.iter().enumerate().filter(|(_, &b)| b) {
            sx += (i % self.width) as f64;
            sy += (i / self.width) as f64;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Encodes the frame as binary PGM with maxval 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm(self.width, self.height, &self.pixels)
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_pgm()).map_err(|e| Error::io(path, e))
    }

    /// Decodes a P5 image. The result is labelled normal and carries no mask.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let (width, height, pixels) = decode_pgm(bytes)?;
        Frame::new(width, height, pixels, Label::Normal, None)
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Self::from_pgm(&buf)
    }
}

/// Quantizes `[0, 1]` intensities (clamped) to an 8-bit P5 image.
pub fn encode_pgm(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        values
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

/// Parses a binary PGM, returning intensities scaled to `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let mut pos = 0usize;
    let mut fields = [0usize; 3];
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::Format("not a binary PGM (missing P5 magic)".into()));
    }
    pos += 2;
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("bad number in PGM header".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("missing whitespace after PGM maxval".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!(
            "unsupported PGM geometry {width}x{height} maxval {maxval}"
        )));
    }
    let n = width * height;
    let data = &bytes[pos..];
    let scale = maxval as f64;
    let pixels: Vec<f64> = if maxval < 256 {
        if data.len() < n {
            return Err(Error::Format("truncated PGM raster".into()));
        }
        data[..n].iter().map(|&b| b as f64 / scale).collect()
    } else {
        if data.len() < 2 * n {
            return Err(Error::Format("truncated PGM raster".into()));
        }
        data[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    };
    Ok((width, height, pixels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_roundtrip_is_exact_on_8bit_levels() {
        let pixels: Vec<f64> = (0..12).map(|i| (i * 20) as f64 / 255.0).collect();
        let f = Frame::new(4, 3, pixels.clone(), Label::Normal, None).unwrap();
        let back = Frame::from_pgm(&f.to_pgm()).unwrap();
        assert_eq!(back.width, 4);
        assert_eq!(back.height, 3);
        assert_eq!(back.pixels, pixels);
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n# max\n255\n".to_vec();
        bytes.extend([0u8, 255]);
        let (w, h, px) = decode_pgm(&bytes).unwrap();
        assert_eq!((w, h), (2, 1));
        assert_eq!(px, vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_ascii_pgm_and_truncation() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00").is_err());
    }

    #[test]
    fn mask_drives_label_and_dimensions_are_checked() {
        let f = Frame::new(2, 1, vec![0.0; 2], Label::Normal, Some(vec![false, true])).unwrap();
        assert_eq!(f.label, Label::Anomaly);
        assert!(Frame::new(2, 1, vec![0.0; 3], Label::Normal, None).is_err());
        assert!(Frame::new(2, 1, vec![0.0; 2], Label::Normal, Some(vec![true])).is_err());
    }
}
