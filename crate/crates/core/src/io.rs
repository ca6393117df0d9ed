//! Binary PGM (P5) and PPM (P6) image files, run-configuration files,
//! and atomic output writes.
//!
//! Images are 8-bit with maxval 255; pixel values map to [0,1] by /255
//! on read and `round(255*v)` (saturating) on write. Decoders report
//! the byte offset of the first malformed element.

use std::fs;
use std::path::Path;

use crate::error::{Error, ImageError, Result};
use crate::network::SSNetConfig;
use crate::tensor::DenseArray;

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    /// Skips whitespace and `#` comments.
    fn skip_separators(&mut self) {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn number(&mut self, what: &'static str) -> std::result::Result<u32, ImageError> {
        self.skip_separators();
        let start = self.pos;
        let mut value: u64 = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_digit() {
                value = value * 10 + (b - b'0') as u64;
                if value > u32::MAX as u64 {
                    return Err(ImageError::Malformed {
                        offset: start,
                        expected: what,
                    });
                }
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            return Err(ImageError::Malformed {
                offset: self.pos,
                expected: what,
            });
        }
        Ok(value as u32)
    }
}

fn decode_pnm(bytes: &[u8], magic: [u8; 2], channels: usize) -> std::result::Result<DenseArray, ImageError> {
    let mut p = HeaderParser::new(bytes);
    if bytes.len() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1] {
        return Err(ImageError::BadMagic { offset: 0 });
    }
    p.pos = 2;
    let width = p.number("width")? as usize;
    let height = p.number("height")? as usize;
    if width == 0 || height == 0 {
        return Err(ImageError::BadDimensions { offset: p.pos });
    }
    let maxval_at = {
        p.skip_separators();
        p.pos
    };
    let maxval = p.number("maxval")?;
    if maxval != 255 {
        return Err(ImageError::BadMaxval {
            offset: maxval_at,
            got: maxval,
        });
    }
    // exactly one whitespace byte separates header and payload
    match bytes.get(p.pos) {
        Some(b) if b.is_ascii_whitespace() => p.pos += 1,
        _ => {
            return Err(ImageError::Malformed {
                offset: p.pos,
                expected: "single whitespace before payload",
            })
        }
    }
    let expected = width * height * channels;
    let payload = &bytes[p.pos.min(bytes.len())..];
    if payload.len() != expected {
        return Err(ImageError::ShortPayload {
            offset: p.pos,
            expected,
            got: payload.len(),
        });
    }

    // interleaved payload to planar [C,H,W]
    let mut data = vec![0.0f32; expected];
    let plane = width * height;
    for (i, &b) in payload.iter().enumerate() {
        let c = i % channels;
        let pix = i / channels;
        data[c * plane + pix] = b as f32 / 255.0;
    }
    Ok(DenseArray::new(vec![channels, height, width], data).expect("payload length checked"))
}

/// Reads an 8-bit binary PGM into a `[1,H,W]` array in [0,1].
pub fn read_pgm(path: &Path) -> Result<DenseArray> {
    let bytes = fs::read(path).map_err(ImageError::Io)?;
    Ok(decode_pnm(&bytes, *b"P5", 1)?)
}

/// Reads an 8-bit binary PPM into a `[3,H,W]` array in [0,1].
pub fn read_ppm(path: &Path) -> Result<DenseArray> {
    let bytes = fs::read(path).map_err(ImageError::Io)?;
    Ok(decode_pnm(&bytes, *b"P6", 3)?)
}

/// `round(255*v)`, saturating to [0,255].
pub fn quantize(v: f32) -> u8 {
    (255.0 * v).round().clamp(0.0, 255.0) as u8
}

fn encode_pnm(img: &DenseArray, magic: &str) -> Vec<u8> {
    let (c, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2]);
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    for pix in 0..plane {
        for ch in 0..c {
            out.push(quantize(img.data()[ch * plane + pix]));
        }
    }
    out
}

/// Writes bytes to `path` atomically: a temp file in the same directory
/// is renamed into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let mut tmp = std::ffi::OsString::from(".");
    tmp.push(file_name);
    tmp.push(format!(".tmp.{}", std::process::id()));
    let tmp_path = match dir {
        Some(d) => d.join(&tmp),
        None => Path::new(&tmp).to_path_buf(),
    };
    fs::write(&tmp_path, bytes)?;
    fs::rename(&tmp_path, path)?;
    Ok(())
}

/// Writes a `[1,H,W]` array as binary PGM (atomic).
pub fn write_pgm(path: &Path, img: &DenseArray) -> Result<()> {
    if img.rank() != 3 || img.shape()[0] != 1 {
        return Err(Error::RankMismatch {
            op: "write_pgm",
            expected: 3,
            got: img.shape().to_vec(),
        });
    }
    write_atomic(path, &encode_pnm(img, "P5"))
}

/// Writes a `[3,H,W]` array as binary PPM (atomic).
pub fn write_ppm(path: &Path, img: &DenseArray) -> Result<()> {
    if img.rank() != 3 || img.shape()[0] != 3 {
        return Err(Error::RankMismatch {
            op: "write_ppm",
            expected: 3,
            got: img.shape().to_vec(),
        });
    }
    write_atomic(path, &encode_pnm(img, "P6"))
}

/// Parses a `key = value` run configuration. Keys: `H`, `W`, `C`, `D`,
/// `N`, `seed` (seed optional, default 0). Blank lines and lines
/// starting with `#` are ignored; unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<SSNetConfig> {
    let mut h = None;
    let mut w = None;
    let mut c = None;
    let mut d = None;
    let mut n = None;
    let mut seed = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", idx + 1)))?;
        let key = key.trim();
        let value = value.trim();
        let parse = |slot: &mut Option<u64>| -> Result<()> {
            if slot.is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", idx + 1)));
            }
            let v = value
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("line {}: bad value {value:?}", idx + 1)))?;
            *slot = Some(v);
            Ok(())
        };
        match key {
            "H" => parse(&mut h)?,
            "W" => parse(&mut w)?,
            "C" => parse(&mut c)?,
            "D" => parse(&mut d)?,
            "N" => parse(&mut n)?,
            "seed" => parse(&mut seed)?,
            other => {
                return Err(Error::Config(format!(
                    "line {}: unknown key {other:?}",
                    idx + 1
                )))
            }
        }
    }
    let require = |slot: Option<u64>, key: &str| -> Result<usize> {
        slot.map(|v| v as usize)
            .ok_or_else(|| Error::Config(format!("missing key {key:?}")))
    };
    let cfg = SSNetConfig {
        height: require(h, "H")?,
        width: require(w, "W")?,
        base_channels: require(c, "C")?,
        decoder_dim: require(d, "D")?,
        state_dim: require(n, "N")?,
        seed: seed.unwrap_or(0),
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a configuration file.
pub fn read_config(path: &Path) -> Result<SSNetConfig> {
    parse_config(&fs::read_to_string(path)?)
}
