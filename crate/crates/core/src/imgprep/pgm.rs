//! Binary PGM (P5), 8-bit, maxval 255.

use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let bad = |msg: &str| Error::Data(format!("PGM: {msg}"));
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("only binary P5 images are supported"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("malformed header number"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let n = width * height;
    let raster = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated raster"))?;
    GrayImage::new(width, height, raster.to_vec()).map_err(|e| bad(&e.to_string()))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), &encode_pgm(img))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let img = GrayImage::new(3, 2, vec![0, 1, 2, 253, 254, 255]).unwrap();
        let bytes = encode_pgm(&img);
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(decode_pgm(&bytes).unwrap(), img);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5 # made by hand\n2 1\n# another\n255\n".to_vec();
        bytes.extend([7, 9]);
        assert_eq!(decode_pgm(&bytes).unwrap().pixels(), &[7, 9]);
    }

    #[test]
    fn rejects_unsupported() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n1 1\n65535\n\0\0").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\0").is_err());
        assert!(decode_pgm(b"P5\n2").is_err());
    }
}
