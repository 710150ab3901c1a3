//! PGM reading and writing.
//!
//! The writer emits binary PGM (P5): header `P5\n{width} {height}\n
//! {maxval}\n`, then one sample per pixel in row-major order, a single
//! byte when maxval < 256 and two big-endian bytes otherwise.  The
//! reader additionally accepts plain PGM (P2) and `#` comments, and
//! reports malformed input with file and line.

use std::fs;
use std::io::Write;
use std::path::Path;

use celltrack_core::features::{Image, LabelMap};
use celltrack_core::{Error, Result};

/// Byte scanner that tracks line numbers for error reporting.
struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    file: String,
}

impl<'a> Scanner<'a> {
    fn new(bytes: &'a [u8], file: &Path) -> Self {
        Scanner { bytes, pos: 0, line: 1, file: file.display().to_string() }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.file.clone(), self.line, msg)
    }

    fn advance(&mut self) -> Option<u8> {
        let b = *self.bytes.get(self.pos)?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
        }
        Some(b)
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                self.advance();
            } else if b == b'#' {
                while let Some(c) = self.advance() {
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<String> {
        self.skip_separators();
        let start = self.pos;
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                break;
            }
            self.advance();
        }
        if self.pos == start {
            return Err(self.err("unexpected end of file"));
        }
        String::from_utf8(self.bytes[start..self.pos].to_vec())
            .map_err(|_| self.err("non-ASCII bytes in header"))
    }

    fn number(&mut self, what: &str) -> Result<u64> {
        let t = self.token()?;
        t.parse::<u64>()
            .map_err(|_| self.err(format!("{} must be a non-negative integer, got `{}`", what, t)))
    }
}

struct RawPgm {
    width: usize,
    height: usize,
    maxval: u16,
    samples: Vec<u16>,
}

fn read_pgm(path: &Path) -> Result<RawPgm> {
    let bytes = fs::read(path)?;
    let mut s = Scanner::new(&bytes, path);
    let magic = s.token()?;
    let binary = match magic.as_str() {
        "P5" => true,
        "P2" => false,
        other => return Err(s.err(format!("expected magic P2 or P5, got `{}`", other))),
    };
    let width = s.number("width")? as usize;
    let height = s.number("height")? as usize;
    let maxval = s.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(s.err(format!("degenerate image size {}x{}", width, height)));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(s.err(format!("maxval {} outside 1..=65535", maxval)));
    }
    let maxval = maxval as u16;
    let count = width * height;
    let mut samples = Vec::with_capacity(count);
    if binary {
        match s.advance() {
            Some(b) if b.is_ascii_whitespace() => {}
            _ => return Err(s.err("maxval must be followed by one whitespace byte")),
        }
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let have = s.bytes.len() - s.pos;
        if have != need {
            return Err(s.err(format!("expected {} sample bytes, found {}", need, have)));
        }
        let data = &s.bytes[s.pos..];
        if wide {
            for ch in data.chunks_exact(2) {
                samples.push(u16::from_be_bytes([ch[0], ch[1]]));
            }
        } else {
            samples.extend(data.iter().map(|&b| b as u16));
        }
        if let Some((i, &v)) = samples.iter().enumerate().find(|(_, &v)| v > maxval) {
            return Err(s.err(format!(
                "sample {} has value {} above maxval {}",
                i, v, maxval
            )));
        }
    } else {
        for i in 0..count {
            let v = s.number("sample")?;
            if v > maxval as u64 {
                return Err(s.err(format!(
                    "sample {} has value {} above maxval {}",
                    i, v, maxval
                )));
            }
            samples.push(v as u16);
        }
        s.skip_separators();
        if s.pos != s.bytes.len() {
            return Err(s.err("trailing data after the last sample"));
        }
    }
    Ok(RawPgm { width, height, maxval, samples })
}

fn write_pgm(path: &Path, width: usize, height: usize, maxval: u16, samples: &[u16]) -> Result<()> {
    assert_eq!(samples.len(), width * height);
    let mut out = Vec::with_capacity(32 + samples.len() * 2);
    write!(out, "P5\n{} {}\n{}\n", width, height, maxval)?;
    if maxval > 255 {
        for &v in samples {
            out.extend_from_slice(&v.to_be_bytes());
        }
    } else {
        out.extend(samples.iter().map(|&v| v as u8));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_image(path: &Path) -> Result<Image> {
    let raw = read_pgm(path)?;
    Ok(Image {
        height: raw.height,
        width: raw.width,
        maxval: raw.maxval,
        data: raw.samples,
    })
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    for (i, &v) in img.data.iter().enumerate() {
        if v > img.maxval {
            return Err(Error::config(format!(
                "{}: pixel {} has value {} above maxval {}",
                path.display(),
                i,
                v,
                img.maxval
            )));
        }
    }
    write_pgm(path, img.width, img.height, img.maxval, &img.data)
}

/// Label maps are written with maxval 65535 so any label up to 16 bits
/// round-trips; labels beyond that are refused.
pub fn read_labels(path: &Path) -> Result<LabelMap> {
    let raw = read_pgm(path)?;
    Ok(LabelMap {
        height: raw.height,
        width: raw.width,
        data: raw.samples.iter().map(|&v| v as u32).collect(),
    })
}

pub fn write_labels(path: &Path, labels: &LabelMap) -> Result<()> {
    let mut samples = Vec::with_capacity(labels.data.len());
    for &v in &labels.data {
        if v > u16::MAX as u32 {
            return Err(Error::config(format!(
                "{}: label {} does not fit in 16 bits",
                path.display(),
                v
            )));
        }
        samples.push(v as u16);
    }
    write_pgm(path, labels.width, labels.height, u16::MAX, &samples)
}
