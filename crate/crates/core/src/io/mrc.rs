//! Native reader for the MRC2014 subset produced by TEM video exports,
//! plus a mode-2 writer used to build test fixtures.
//!
//! Header words used: nx/ny/nz at bytes 0-11, mode at 12, NSYMBT at 92,
//! cell dimensions at 40-51; everything little-endian. Image data starts at
//! 1024 + NSYMBT. Supported modes: 0 (int8), 1 (int16), 2 (float32),
//! 6 (uint16).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Image2D, ImageStack, DEFAULT_FRAME_PERIOD_S};

pub const HEADER_LEN: usize = 1024;

/// Header fields surfaced for reporting and cross-checks. The cell
/// dimensions are informational only; the pixel size used for analysis is
/// always supplied by the caller.
#[derive(Debug, Clone, Copy)]
pub struct MrcHeader {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub mode: i32,
    pub nsymbt: usize,
    pub cell_angstrom: [f32; 3],
}

fn read_i32(bytes: &[u8], offset: usize) -> i32 {
    i32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn read_f32(bytes: &[u8], offset: usize) -> f32 {
    f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn bytes_per_sample(mode: i32) -> Result<usize> {
    match mode {
        0 => Ok(1),
        1 | 6 => Ok(2),
        2 => Ok(4),
        other => Err(Error::UnsupportedMode(other)),
    }
}

/// Parses the fixed header of an MRC file.
pub fn parse_header(path: &Path, bytes: &[u8]) -> Result<MrcHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            what: format!("header: need {HEADER_LEN} bytes, found {}", bytes.len()),
            offset: bytes.len() as u64,
        });
    }
    let nx = read_i32(bytes, 0);
    let ny = read_i32(bytes, 4);
    let nz = read_i32(bytes, 8);
    let mode = read_i32(bytes, 12);
    let nsymbt = read_i32(bytes, 92);
    if nx < 0 || ny < 0 || nz < 0 || nsymbt < 0 {
        return Err(Error::format(
            path,
            format!("negative header field (nx={nx}, ny={ny}, nz={nz}, nsymbt={nsymbt})"),
        ));
    }
    Ok(MrcHeader {
        nx: nx as usize,
        ny: ny as usize,
        nz: nz as usize,
        mode,
        nsymbt: nsymbt as usize,
        cell_angstrom: [
            read_f32(bytes, 40),
            read_f32(bytes, 44),
            read_f32(bytes, 48),
        ],
    })
}

/// Reads an MRC stack together with its parsed header.
///
/// The pixel size is left unset (the caller supplies it) and the frame
/// period defaults to 2.46 s per slice, both caller-overridable.
pub fn read_mrc_with_header(path: &Path) -> Result<(ImageStack, MrcHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(path, &bytes)?;
    if header.nz == 0 {
        return Err(Error::EmptyStack);
    }
    let sample = bytes_per_sample(header.mode)?;
    let frame_px = header.nx * header.ny;
    let data_start = HEADER_LEN + header.nsymbt;
    let need = data_start + header.nz * frame_px * sample;
    if bytes.len() < need {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            what: format!(
                "image data: need {need} bytes for {} frames of {}x{}, found {}",
                header.nz,
                header.nx,
                header.ny,
                bytes.len()
            ),
            offset: bytes.len() as u64,
        });
    }

    let mut frames = Vec::with_capacity(header.nz);
    for z in 0..header.nz {
        let start = data_start + z * frame_px * sample;
        let raw = &bytes[start..start + frame_px * sample];
        let pixels: Vec<f64> = match header.mode {
            0 => raw.iter().map(|&b| b as i8 as f64).collect(),
            1 => raw
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
                .collect(),
            2 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
            6 => raw
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64)
                .collect(),
            _ => unreachable!("mode validated above"),
        };
        frames.push(Image2D::new(header.nx, header.ny, pixels)?);
    }
    let stack = ImageStack::new(frames, DEFAULT_FRAME_PERIOD_S)?;
    Ok((stack, header))
}

/// Reads an MRC stack; see [`read_mrc_with_header`].
pub fn read_mrc(path: &Path) -> Result<ImageStack> {
    read_mrc_with_header(path).map(|(stack, _)| stack)
}

/// Writes a float32 (mode 2) MRC stack. Test-fixture writer; not intended
/// for producing files for external tools.
pub fn write_mrc_mode2(stack: &ImageStack, path: &Path) -> Result<()> {
    let mut header = vec![0u8; HEADER_LEN];
    let put = |buf: &mut [u8], offset: usize, v: i32| {
        buf[offset..offset + 4].copy_from_slice(&v.to_le_bytes());
    };
    put(&mut header, 0, stack.width() as i32);
    put(&mut header, 4, stack.height() as i32);
    put(&mut header, 8, stack.len() as i32);
    put(&mut header, 12, 2);
    // MAP id + little-endian machine stamp, for the benefit of other readers.
    header[208..212].copy_from_slice(b"MAP ");
    header[212..216].copy_from_slice(&[0x44, 0x44, 0x00, 0x00]);

    let mut out = header;
    for frame in stack.frames() {
        for &v in frame.pixels() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn fixture_header(nx: i32, ny: i32, nz: i32, mode: i32) -> Vec<u8> {
        let mut h = vec![0u8; HEADER_LEN];
        h[0..4].copy_from_slice(&nx.to_le_bytes());
        h[4..8].copy_from_slice(&ny.to_le_bytes());
        h[8..12].copy_from_slice(&nz.to_le_bytes());
        h[12..16].copy_from_slice(&mode.to_le_bytes());
        h
    }

    #[test]
    fn mode0_identity_payload() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("a.mrc");
        let mut bytes = fixture_header(4, 4, 1, 0);
        bytes.extend(0u8..16);
        fs::write(&path, bytes).unwrap();
        let stack = read_mrc(&path).unwrap();
        assert_eq!(stack.len(), 1);
        let f = &stack.frames()[0];
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(f.get(x, y), (y * 4 + x) as f64);
            }
        }
        assert_eq!(stack.frame_period_s, 2.46);
        assert!(stack.pixel_size.is_none());
    }

    #[test]
    fn truncated_header_reports_offset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("short.mrc");
        fs::write(&path, vec![0u8; 100]).unwrap();
        match read_mrc(&path) {
            Err(Error::Truncated { offset, .. }) => assert_eq!(offset, 100),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_data_reports_offset() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("short_data.mrc");
        let mut bytes = fixture_header(8, 8, 2, 2);
        bytes.extend(vec![0u8; 64]); // far less than 2 frames of f32
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_mrc(&path), Err(Error::Truncated { .. })));
    }

    #[test]
    fn unsupported_mode_and_empty_stack() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.mrc");
        fs::write(&path, fixture_header(4, 4, 1, 3)).unwrap();
        assert!(matches!(read_mrc(&path), Err(Error::UnsupportedMode(3))));
        fs::write(&path, fixture_header(4, 4, 0, 2)).unwrap();
        assert!(matches!(read_mrc(&path), Err(Error::EmptyStack)));
    }

    #[test]
    fn mode1_and_mode6_sample_decoding() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.mrc");
        let mut bytes = fixture_header(2, 2, 1, 1);
        for v in [-3i16, 0, 7, 32000] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, &bytes).unwrap();
        let f = read_mrc(&path).unwrap();
        assert_eq!(f.frames()[0].pixels(), &[-3.0, 0.0, 7.0, 32000.0]);

        let mut bytes = fixture_header(2, 2, 1, 6);
        for v in [0u16, 1, 40000, 65535] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, &bytes).unwrap();
        let f = read_mrc(&path).unwrap();
        assert_eq!(f.frames()[0].pixels(), &[0.0, 1.0, 40000.0, 65535.0]);
    }

    #[test]
    fn mode2_roundtrip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("rt.mrc");
        let frames: Vec<Image2D> = (0..3)
            .map(|z| Image2D::from_fn(6, 5, |x, y| (z * 100 + y * 6 + x) as f64 * 0.25))
            .collect();
        let stack = ImageStack::new(frames, 2.46).unwrap();
        write_mrc_mode2(&stack, &path).unwrap();
        let back = read_mrc(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in stack.frames().iter().zip(back.frames()) {
            assert_eq!(a.pixels(), b.pixels());
        }
    }

    #[test]
    fn data_offset_honors_nsymbt() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sym.mrc");
        let mut bytes = fixture_header(2, 2, 1, 0);
        bytes[92..96].copy_from_slice(&8i32.to_le_bytes());
        bytes.extend_from_slice(&[0xAA; 8]); // extended header
        bytes.extend_from_slice(&[1, 2, 3, 4]);
        fs::write(&path, bytes).unwrap();
        let stack = read_mrc(&path).unwrap();
        assert_eq!(stack.frames()[0].pixels(), &[1.0, 2.0, 3.0, 4.0]);
    }
}
