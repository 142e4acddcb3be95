//! Portable graymap (P2 ASCII and P5 binary) reader.

use std::path::Path;

use super::Patch;
use crate::error::{Error, Result};

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Patch> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    parse_pgm(&bytes)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Patch> {
    let mut header = Header { bytes, pos: 0 };
    let magic = header.token()?;
    let binary = match magic.as_str() {
        "P2" => false,
        "P5" => true,
        other => return Err(bad(format!("unsupported magic {other:?}"))),
    };
    let width = header.number()?;
    let height = header.number()?;
    let maxval = header.number()?;
    if maxval == 0 || maxval > 65535 {
        return Err(bad(format!("maxval {maxval} out of range")));
    }
    let count = width * height;
    let data = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let start = header.pos + 1;
        let depth = if maxval < 256 { 1 } else { 2 };
        let raster = bytes
            .get(start..start + count * depth)
            .ok_or_else(|| bad("truncated raster".into()))?;
        if depth == 1 {
            raster.iter().map(|&b| b as f64).collect()
        } else {
            raster
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
                .collect()
        }
    } else {
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(header.number()? as f64);
        }
        values
    };
    if data.iter().any(|&v| v > maxval as f64) {
        return Err(bad("sample exceeds maxval".into()));
    }
    Patch::new(width, height, data)
}

fn bad(msg: String) -> Error {
    Error::InvalidArgument(format!("malformed PGM: {msg}"))
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<String> {
        self.skip_space();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(bad("unexpected end of header".into()));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        tok.parse().map_err(|_| bad(format!("expected integer, got {tok:?}")))
    }
}
