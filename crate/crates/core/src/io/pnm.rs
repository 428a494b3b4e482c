//! Binary portable graymap (P5) and pixmap (P6), maxval 255.

use std::path::Path;

use super::{read_bytes, write_bytes, IoError};
use crate::image::GrayImage;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    /// Skips whitespace and `#` comments, then reads a decimal field.
    fn field(&mut self, name: &str) -> Result<usize, IoError> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        let digits = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        if digits.is_empty() {
            return Err(IoError::CorruptHeader(format!("missing {name}")));
        }
        digits.parse().map_err(|_| IoError::CorruptHeader(format!("{name} {digits} out of range")))
    }
}

/// Decodes P5 directly and P6 through integer luma `(299r + 587g + 114b + 500) / 1000`.
pub fn decode_pnm(bytes: &[u8]) -> Result<GrayImage, IoError> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        Some(m) if m[0] == b'P' => return Err(IoError::UnsupportedFormat(format!("portable map {}", String::from_utf8_lossy(m)))),
        _ => return Err(IoError::UnsupportedFormat("not a binary portable graymap or pixmap".into())),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.field("width")?;
    let height = cur.field("height")?;
    let maxval = cur.field("maxval")?;
    if width == 0 || height == 0 {
        return Err(IoError::CorruptHeader(format!("empty {width}×{height} image")));
    }
    if maxval != 255 {
        return Err(IoError::UnsupportedFormat(format!("maxval {maxval}, only 255 is supported")));
    }
    if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(IoError::CorruptHeader("no whitespace after maxval".into()));
    }
    let data = &bytes[cur.pos + 1..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| IoError::CorruptHeader(format!("{width}×{height} overflows")))?;
    if data.len() < expected {
        return Err(IoError::TruncatedData { expected, found: data.len() });
    }
    let gray = if channels == 1 {
        data[..expected].to_vec()
    } else {
        data[..expected].chunks_exact(3).map(|p| ((299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32 + 500) / 1000) as u8).collect()
    };
    Ok(GrayImage::new(width, height, gray).expect("length checked"))
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn read_image(path: &Path) -> Result<GrayImage, IoError> {
    decode_pnm(&read_bytes(path)?)
}

/// Always writes P5.
pub fn write_image(img: &GrayImage, path: &Path) -> Result<(), IoError> {
    write_bytes(path, &encode_pgm(img))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_round_trip() {
        let img = GrayImage::new(2, 2, vec![0, 128, 255, 7]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        write_image(&img, &path).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
    }

    #[test]
    fn pixmap_uses_integer_luma() {
        let mut bytes = b"P6\n3 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 255, 0, 255, 255, 255]);
        assert_eq!(decode_pnm(&bytes).unwrap().data(), &[76, 150, 255]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let bytes = b"P5 # made by hand\n# another\n2\t1 255\n\x01\x02";
        assert_eq!(decode_pnm(bytes).unwrap().data(), &[1, 2]);
    }

    #[test]
    fn rejects_other_formats() {
        assert!(matches!(decode_pnm(b"P4\n1 1\n\x00"), Err(IoError::UnsupportedFormat(_))));
        assert!(matches!(decode_pnm(b"\x89PNG"), Err(IoError::UnsupportedFormat(_))));
        assert!(matches!(decode_pnm(b"P5\n1 1\n65535\n\x00\x00"), Err(IoError::UnsupportedFormat(_))));
    }

    #[test]
    fn rejects_broken_headers_and_short_data() {
        assert!(matches!(decode_pnm(b"P5\n2\n"), Err(IoError::CorruptHeader(_))));
        assert!(matches!(decode_pnm(b"P5\n0 4 255\n"), Err(IoError::CorruptHeader(_))));
        assert!(matches!(decode_pnm(b"P5\nx 4 255\n"), Err(IoError::CorruptHeader(_))));
        assert!(matches!(decode_pnm(b"P5\n2 2 255\n\x00\x01\x02"), Err(IoError::TruncatedData { expected: 4, found: 3 })));
        assert!(matches!(decode_pnm(b"P6\n1 1 255\n\x00"), Err(IoError::TruncatedData { expected: 3, found: 1 })));
    }

    proptest! {
        #[test]
        fn graymap_round_trip_is_bit_exact(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
            let data: Vec<u8> = (0..w * h).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 13) as u8).collect();
            let img = GrayImage::new(w, h, data).unwrap();
            prop_assert_eq!(decode_pnm(&encode_pgm(&img)).unwrap(), img);
        }
    }
}
