//! 8-bit images and the binary PNM (P5/P6) reader and writer.

use crate::error::{Error, Result};

/// An `H×W×C` image of 8-bit intensities, channels interleaved per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<u8>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!("empty image {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!("{channels} channels; expected 1 or 3")));
        }
        if values.len() != height * width * channels {
            return Err(Error::DimensionMismatch {
                axis: "image values",
                expected: height * width * channels,
                actual: values.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of subpixels, `H·W·C`.
    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn into_values(self) -> Vec<u8> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize) -> u8 {
        self.values[(i * self.width + j) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, v: u8) {
        self.values[(i * self.width + j) * self.channels + c] = v;
    }

    /// Copy of the rectangle `rows × cols`. Both ranges must be non-empty.
    pub fn crop(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Result<Self> {
        if rows.end > self.height || cols.end > self.width {
            return Err(Error::InvalidImage("crop outside image".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * cols.len() * self.channels);
        for i in rows.clone() {
            let start = (i * self.width + cols.start) * self.channels;
            let end = (i * self.width + cols.end) * self.channels;
            values.extend_from_slice(&self.values[start..end]);
        }
        Self::new(rows.len(), cols.len(), self.channels, values)
    }

    /// Writes `patch` with its top-left corner at `(top, left)`.
    pub fn paste(&mut self, patch: &ImageTensor, top: usize, left: usize) -> Result<()> {
        if patch.channels != self.channels
            || top + patch.height > self.height
            || left + patch.width > self.width
        {
            return Err(Error::InvalidImage("patch does not fit".into()));
        }
        for i in 0..patch.height {
            let dst = ((top + i) * self.width + left) * self.channels;
            let src = i * patch.width * patch.channels;
            let n = patch.width * patch.channels;
            self.values[dst..dst + n].copy_from_slice(&patch.values[src..src + n]);
        }
        Ok(())
    }

    pub fn to_pnm(&self) -> Vec<u8> {
        let tag = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{tag}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.values);
        out
    }

    /// Parses a binary PNM with maxval 255. Comments (`#` to end of line)
    /// are accepted anywhere in the header.
    pub fn from_pnm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let magic = next_token(bytes, &mut pos)?;
        let channels = match magic {
            b"P5" => 1,
            b"P6" => 3,
            other => {
                return Err(Error::InvalidImage(format!(
                    "unsupported PNM magic {:?}",
                    String::from_utf8_lossy(other)
                )))
            }
        };
        let width = parse_number(next_token(bytes, &mut pos)?)?;
        let height = parse_number(next_token(bytes, &mut pos)?)?;
        let maxval = parse_number(next_token(bytes, &mut pos)?)?;
        if maxval != 255 {
            return Err(Error::InvalidImage(format!("maxval {maxval}; only 255 is supported")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(Error::InvalidImage("missing raster separator".into()));
        }
        pos += 1;
        let n = height * width * channels;
        if bytes.len() - pos < n {
            return Err(Error::Truncated("PNM raster"));
        }
        Self::new(height, width, channels, bytes[pos..pos + n].to_vec())
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Truncated("PNM header"));
    }
    Ok(&bytes[start..*pos])
}

fn parse_number(token: &[u8]) -> Result<usize> {
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::InvalidImage(format!("bad header number {:?}", String::from_utf8_lossy(token))))
}
