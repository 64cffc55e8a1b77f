//! Single-channel PFM depth maps. The header is `Pf`, width/height, and a
//! scale whose sign encodes endianness (negative = little-endian, the only
//! byte order we write). Rows are stored bottom-to-top as 32-bit floats.

use std::fs;
use std::path::Path;

use epirefine_core::DepthMap64;

use crate::error::{CliError, Result};

pub fn write_pfm(path: &Path, depth: &DepthMap64) -> Result<()> {
    let (w, h) = (depth.width(), depth.height());
    let mut bytes = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            bytes.extend_from_slice(&(depth.get(x, y) as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_pfm(path: &Path) -> Result<DepthMap64> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let p = path.display().to_string();

    // Header: three whitespace-terminated tokens, then the raster.
    let mut offset = 0usize;
    let mut token = |what: &str| -> Result<String> {
        while offset < bytes.len() && bytes[offset].is_ascii_whitespace() {
            offset += 1;
        }
        let start = offset;
        while offset < bytes.len() && !bytes[offset].is_ascii_whitespace() {
            offset += 1;
        }
        if start == offset {
            return Err(CliError::parse(&p, format!("missing {what} at byte offset {start}")));
        }
        // consume the single terminator so the raster starts cleanly
        if offset < bytes.len() {
            offset += 1;
        }
        String::from_utf8(bytes[start..offset - 1].to_vec())
            .map_err(|_| CliError::parse(&p, format!("non-ASCII {what} at byte offset {start}")))
    };

    let magic = token("magic number")?;
    match magic.as_str() {
        "Pf" => {}
        "PF" => {
            return Err(CliError::parse(p, "3-channel color PFM; expected single-channel `Pf`"))
        }
        other => return Err(CliError::parse(p, format!("bad magic `{other}`, expected `Pf`"))),
    }
    let width: usize = token("width")?
        .parse()
        .map_err(|_| CliError::parse(&p, "width is not a positive integer"))?;
    let height: usize = token("height")?
        .parse()
        .map_err(|_| CliError::parse(&p, "height is not a positive integer"))?;
    let scale: f64 = token("scale")?
        .parse()
        .map_err(|_| CliError::parse(&p, "scale is not a number"))?;
    if scale == 0.0 {
        return Err(CliError::parse(p, "scale must be non-zero"));
    }
    let little_endian = scale < 0.0;

    let raster = &bytes[offset..];
    let need = width * height * 4;
    if raster.len() != need {
        return Err(CliError::parse(
            p,
            format!("raster has {} bytes, expected {need} for {width}x{height}", raster.len()),
        ));
    }
    let mut data = vec![0.0f64; width * height];
    for (i, chunk) in raster.chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().unwrap();
        let v = if little_endian { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        // PFM rows run bottom-to-top
        let y = height - 1 - i / width;
        let x = i % width;
        data[y * width + x] = v as f64;
    }
    DepthMap64::new(width, height, data)
        .map_err(|e| CliError::parse(p, format!("invalid depth values: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn roundtrip_is_lossless() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        let data: Vec<f64> = (0..160 * 48).map(|i| (1.0 + (i % 97) as f32 * 0.37) as f64).collect();
        let depth = DepthMap64::new(160, 48, data).unwrap();
        write_pfm(&path, &depth).unwrap();
        let back = read_pfm(&path).unwrap();
        assert_eq!(back.data(), depth.data());
    }

    #[test]
    fn hand_built_header_parses() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        let mut bytes = b"Pf\n3 2\n-1.0\n".to_vec();
        // bottom row first: 4 5 6, then top row 1 2 3
        for v in [4.0f32, 5.0, 6.0, 1.0, 2.0, 3.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        let d = read_pfm(&path).unwrap();
        assert_eq!(d.width(), 3);
        assert_eq!(d.height(), 2);
        assert_eq!(d.get(0, 0), 1.0);
        assert_eq!(d.get(2, 1), 6.0);
    }

    #[test]
    fn big_endian_scale_is_honored() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        let mut bytes = b"Pf\n1 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&7.5f32.to_be_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert_eq!(read_pfm(&path).unwrap().get(0, 0), 7.5);
    }

    #[test]
    fn color_pfm_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.pfm");
        std::fs::write(&path, b"PF\n1 1\n-1.0\n aaaaaaaaaaaa").unwrap();
        let err = read_pfm(&path).unwrap_err().to_string();
        assert!(err.contains("single-channel"), "{err}");
    }

    #[test]
    fn truncated_raster_is_a_parse_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.pfm");
        std::fs::write(&path, b"Pf\n4 4\n-1.0\n\x00\x00\x80?").unwrap();
        let err = read_pfm(&path).unwrap_err().to_string();
        assert!(err.contains("raster"), "{err}");
    }
}
