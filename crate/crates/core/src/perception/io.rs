//! Mask (binary PGM) and depth (`DPTH`) file formats.
//!
//! Depth layout, little-endian: `b"DPTH"`, `u32` width, `u32` height,
//! `f32` invalid marker, then `width·height` `f32` depths in meters,
//! row-major.

use std::path::Path;

use super::{DepthMap, Mask, PerceptionError};

pub const DEPTH_MAGIC: &[u8; 4] = b"DPTH";
const DEPTH_HEADER: usize = 16;

fn format_err(kind: &'static str, detail: impl Into<String>) -> PerceptionError {
    PerceptionError::Format {
        kind,
        detail: detail.into(),
    }
}

/// Parses a P5 PGM with maxval 255. Values above 127 are foreground.
pub fn parse_pgm(bytes: &[u8]) -> Result<Mask, PerceptionError> {
    let err = |d: &str| format_err("PGM", d);
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(err("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        // Whitespace and '#' comments may separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|b| *b != b'\n') {
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
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("bad header field"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(err(&format!("maxval {maxval}, expected 255")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(err("missing separator after header"));
    }
    pos += 1;
    let n = width as usize * height as usize;
    let data = bytes
        .get(pos..pos + n)
        .ok_or_else(|| err(&format!("expected {n} pixel bytes, found {}", bytes.len() - pos)))?;
    Ok(Mask {
        width,
        height,
        data: data.iter().map(|b| *b > 127).collect(),
    })
}

pub fn encode_pgm(m: &Mask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", m.width, m.height).into_bytes();
    out.extend(m.data.iter().map(|b| if *b { 255u8 } else { 0 }));
    out
}

/// Samples equal to the header's invalid marker, non-finite or ≤ 0 load as 0.
pub fn parse_depth(bytes: &[u8]) -> Result<DepthMap, PerceptionError> {
    let err = |d: String| format_err("depth", d);
    if bytes.len() < DEPTH_HEADER || &bytes[..4] != DEPTH_MAGIC {
        return Err(err("missing DPTH header".into()));
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let width = u32::from_le_bytes(word(4));
    let height = u32::from_le_bytes(word(8));
    let marker = f32::from_le_bytes(word(12));
    let n = width as usize * height as usize;
    let body = &bytes[DEPTH_HEADER..];
    if body.len() != 4 * n {
        return Err(err(format!("expected {} data bytes, found {}", 4 * n, body.len())));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| {
            let z = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if z == marker || !(z > 0.0) || !z.is_finite() {
                0.0
            } else {
                z
            }
        })
        .collect();
    Ok(DepthMap { width, height, data })
}

pub fn encode_depth(d: &DepthMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(DEPTH_HEADER + 4 * d.data.len());
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&d.width.to_le_bytes());
    out.extend_from_slice(&d.height.to_le_bytes());
    out.extend_from_slice(&0f32.to_le_bytes());
    for z in &d.data {
        out.extend_from_slice(&z.to_le_bytes());
    }
    out
}

pub fn read_mask(path: &Path) -> Result<Mask, PerceptionError> {
    parse_pgm(&std::fs::read(path)?)
}

pub fn write_mask(path: &Path, m: &Mask) -> Result<(), PerceptionError> {
    Ok(std::fs::write(path, encode_pgm(m))?)
}

pub fn read_depth(path: &Path) -> Result<DepthMap, PerceptionError> {
    parse_depth(&std::fs::read(path)?)
}

pub fn write_depth(path: &Path, d: &DepthMap) -> Result<(), PerceptionError> {
    Ok(std::fs::write(path, encode_depth(d))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pgm_with_comment() {
        let mut bytes = b"P5\n# made by hand\n3 2\n255\n".to_vec();
        bytes.extend([0, 255, 0, 255, 255, 0]);
        let m = parse_pgm(&bytes).unwrap();
        assert_eq!((m.width, m.height), (3, 2));
        assert_eq!(m.data, vec![false, true, false, true, true, false]);
    }

    #[test]
    fn pgm_rejects_bad_input() {
        assert!(parse_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(parse_pgm(b"P5\n2 2\n65535\n").is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\x00\x00").is_err());
    }

    #[test]
    fn depth_marker_and_layout() {
        let mut bytes = b"DPTH".to_vec();
        bytes.extend(2u32.to_le_bytes());
        bytes.extend(1u32.to_le_bytes());
        bytes.extend((-1f32).to_le_bytes());
        bytes.extend(1.5f32.to_le_bytes());
        bytes.extend((-1f32).to_le_bytes());
        let d = parse_depth(&bytes).unwrap();
        assert_eq!(d.data, vec![1.5, 0.0]);
        assert_eq!(d.get(1, 0), None);
        assert!(parse_depth(&bytes[..bytes.len() - 1]).is_err());
        assert!(parse_depth(b"DPTX\0\0\0\0\0\0\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Mask::from_fn(4, 3, |u, v| (u + v) % 2 == 0);
        let d = DepthMap::from_fn(4, 3, |u, v| if u == v { 0.0 } else { (u * 10 + v) as f32 * 0.1 });
        write_mask(&dir.path().join("m.pgm"), &m).unwrap();
        write_depth(&dir.path().join("d.dpth"), &d).unwrap();
        assert_eq!(read_mask(&dir.path().join("m.pgm")).unwrap(), m);
        assert_eq!(read_depth(&dir.path().join("d.dpth")).unwrap(), d);
    }

    proptest! {
        #[test]
        fn pgm_round_trip(w in 1u32..20, h in 1u32..20, seed in any::<u64>()) {
            let m = Mask::from_fn(w, h, |u, v| (seed >> ((u * 7 + v * 3) % 64)) & 1 == 1);
            prop_assert_eq!(parse_pgm(&encode_pgm(&m)).unwrap(), m);
        }

        #[test]
        fn depth_round_trip(w in 1u32..12, h in 1u32..12, zs in prop::collection::vec(0.0f32..10.0, 144)) {
            let d = DepthMap::from_fn(w, h, |u, v| zs[(v * w + u) as usize]);
            prop_assert_eq!(parse_depth(&encode_depth(&d)).unwrap(), d);
        }
    }
}
