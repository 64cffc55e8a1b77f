//! PGM/PPM image IO, ASCII (P2/P3) and binary (P5/P6) variants, 8- or 16-bit.
//! Values are normalized to [0, 1] on read; writes are 8-bit binary PGM.

use std::fs;
use std::path::Path;

use epirefine_core::ImageGrid64;

use crate::error::{CliError, Result};

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Cursor<'a> {
    /// Next header token, skipping whitespace and `#` comments.
    fn token(&mut self, what: &str) -> Result<&'a str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(CliError::parse(&self.path, format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| CliError::parse(&self.path, format!("non-ASCII {what}")))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let t = self.token(what)?;
        t.parse()
            .map_err(|_| CliError::parse(&self.path, format!("{what} `{t}` is not an integer")))
    }
}

pub fn read_image(path: &Path) -> Result<ImageGrid64> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let p = path.display().to_string();
    let mut cur = Cursor { bytes: &bytes, pos: 0, path: p.clone() };

    let magic = cur.token("magic number")?.to_string();
    let (channels, binary) = match magic.as_str() {
        "P2" => (1, false),
        "P3" => (3, false),
        "P5" => (1, true),
        "P6" => (3, true),
        other => {
            return Err(CliError::parse(p, format!("unsupported magic `{other}`")));
        }
    };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(CliError::parse(p, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(CliError::parse(p, format!("maxval {maxval} out of range")));
    }

    let count = width * height * channels;
    let scale = 1.0 / maxval as f64;
    let mut data = Vec::with_capacity(count);
    if binary {
        cur.pos += 1; // single whitespace after maxval
        let raster = &bytes[cur.pos.min(bytes.len())..];
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        if raster.len() < need {
            return Err(CliError::parse(
                p,
                format!("raster has {} bytes, expected {need}", raster.len()),
            ));
        }
        if wide {
            for ch in raster[..need].chunks_exact(2) {
                data.push(u16::from_be_bytes([ch[0], ch[1]]) as f64 * scale);
            }
        } else {
            data.extend(raster[..need].iter().map(|b| *b as f64 * scale));
        }
    } else {
        for i in 0..count {
            let t = cur.token("sample value")?;
            let v: usize = t.parse().map_err(|_| {
                CliError::parse(&p, format!("sample {i}: `{t}` is not an integer"))
            })?;
            if v > maxval {
                return Err(CliError::parse(p, format!("sample {i}: {v} exceeds maxval")));
            }
            data.push(v as f64 * scale);
        }
    }
    ImageGrid64::new(width, height, channels, data)
        .map_err(|e| CliError::parse(p, e.to_string()))
}

/// Write a single-channel grid as binary 8-bit PGM, clamping to [0, 1].
pub fn write_pgm(path: &Path, image: &ImageGrid64) -> Result<()> {
    if image.channels() != 1 {
        return Err(CliError::Data(format!(
            "cannot write {}-channel image as PGM",
            image.channels()
        )));
    }
    let mut bytes = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    bytes.extend(
        image
            .data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn ascii_pgm_parses() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        std::fs::write(&path, "P2\n# comment\n3 2\n255\n0 128 255\n64 32 16\n").unwrap();
        let img = read_image(&path).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (3, 2, 1));
        assert!((img.get(1, 0, 0) - 128.0 / 255.0).abs() < 1e-12);
        assert_eq!(img.get(2, 0, 0), 1.0);
    }

    #[test]
    fn binary_ppm_parses() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 255, 0]);
        std::fs::write(&path, bytes).unwrap();
        let img = read_image(&path).unwrap();
        assert_eq!(img.channels(), 3);
        assert_eq!(img.get(0, 0, 0), 1.0);
        assert_eq!(img.get(1, 0, 1), 1.0);
    }

    #[test]
    fn sixteen_bit_binary_is_big_endian() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("w.pgm");
        let mut bytes = b"P5\n1 1\n65535\n".to_vec();
        bytes.extend_from_slice(&32768u16.to_be_bytes());
        std::fs::write(&path, bytes).unwrap();
        let img = read_image(&path).unwrap();
        assert!((img.get(0, 0, 0) - 32768.0 / 65535.0).abs() < 1e-12);
    }

    #[test]
    fn pgm_roundtrip_preserves_quantized_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("r.pgm");
        let img = ImageGrid64::from_fn(8, 4, |x, y| ((x + 8 * y) as f64 / 31.0).min(1.0));
        write_pgm(&path, &img).unwrap();
        let back = read_image(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        std::fs::write(&path, "P9\n1 1\n255\n0\n").unwrap();
        assert!(read_image(&path).unwrap_err().to_string().contains("magic"));
    }
}
