//! Portable pixmap (PPM) reading and writing, binary `P6` and ASCII `P3`,
//! maxval 255 only.

use crate::emr::Raster;
use crate::{Error, Result, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpmFormat {
    /// `P6`: binary samples.
    Binary,
    /// `P3`: whitespace-separated decimal samples.
    Ascii,
}

fn bad(detail: impl Into<String>) -> Error {
    Error::corruption(Stage::Image, detail)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(bad(format!("expected {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| bad(format!("{what} out of range")))
    }
}

/// Parses a `P6` or `P3` pixmap.
pub fn decode(data: &[u8]) -> Result<(Raster, PpmFormat)> {
    let format = match data.get(..2) {
        Some(b"P6") => PpmFormat::Binary,
        Some(b"P3") => PpmFormat::Ascii,
        _ => return Err(bad("missing P6/P3 magic")),
    };
    let mut cur = Cursor { data, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(bad(format!("unsupported maxval {maxval}, only 255 is supported")));
    }
    if width == 0 || height == 0 {
        return Err(bad("image dimensions must be at least 1x1"));
    }
    let len = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| bad("image too large"))?;

    let rgb = match format {
        PpmFormat::Binary => {
            // Exactly one whitespace byte separates the header from the samples.
            if !data.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
                return Err(bad("missing whitespace after maxval"));
            }
            let start = cur.pos + 1;
            if data.len() != start + len {
                return Err(bad(format!("expected {len} sample bytes, found {}", data.len().saturating_sub(start))));
            }
            data[start..].to_vec()
        }
        PpmFormat::Ascii => {
            let mut rgb = Vec::with_capacity(len);
            for _ in 0..len {
                let v = cur.number("sample")?;
                if v > 255 {
                    return Err(bad(format!("sample {v} exceeds maxval")));
                }
                rgb.push(v as u8);
            }
            cur.skip_whitespace_and_comments();
            if cur.pos != data.len() {
                return Err(bad("trailing data after samples"));
            }
            rgb
        }
    };
    Ok((Raster::new(width, height, rgb)?, format))
}

/// Canonical encoding: `P6`/`P3`, then `width height`, then `255`, each on
/// its own line. `P3` puts one pixel per line.
pub fn encode(image: &Raster, format: PpmFormat) -> Vec<u8> {
    let magic = match format {
        PpmFormat::Binary => "P6",
        PpmFormat::Ascii => "P3",
    };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    match format {
        PpmFormat::Binary => out.extend_from_slice(image.rgb()),
        PpmFormat::Ascii => {
            for px in image.rgb().chunks(3) {
                out.extend_from_slice(format!("{} {} {}\n", px[0], px[1], px[2]).as_bytes());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emr::sample_image;

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let img = sample_image();
        let bytes = encode(&img, PpmFormat::Binary);
        assert!(bytes.starts_with(b"P6\n3 3\n255\n"));
        assert_eq!(bytes.len(), 11 + 27);
        let (back, fmt) = decode(&bytes).unwrap();
        assert_eq!(fmt, PpmFormat::Binary);
        assert_eq!(back, img);
        assert_eq!(encode(&back, fmt), bytes);
    }

    #[test]
    fn ascii_round_trip_is_bit_exact() {
        let img = Raster::from_pixels(2, 1, &[[1, 2, 3], [255, 0, 10]]).unwrap();
        let bytes = encode(&img, PpmFormat::Ascii);
        assert_eq!(bytes, b"P3\n2 1\n255\n1 2 3\n255 0 10\n");
        let (back, fmt) = decode(&bytes).unwrap();
        assert_eq!((back, fmt), (img, PpmFormat::Ascii));
    }

    #[test]
    fn comments_and_loose_whitespace() {
        let text = b"P3\n# made by hand\n2   1 # dims\n255\n 1 2 3  4 5 6\n\n";
        let (img, _) = decode(text).unwrap();
        assert_eq!(img.rgb(), &[1, 2, 3, 4, 5, 6]);
        let bin = b"P6 # c\n1 1\n255\n\x01\x02\x03";
        assert_eq!(decode(bin).unwrap().0.rgb(), &[1, 2, 3]);
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            &b"P5\n1 1\n255\n\0"[..],
            b"P6\n1 1\n65535\n\0\0\0\0\0\0",
            b"P6\n1 1\n255\n\x01\x02",
            b"P6\n1 1\n255\n\x01\x02\x03\x04",
            b"P3\n1 1\n255\n1 2 256\n",
            b"P3\n1 1\n255\n1 2\n",
            b"P3\n0 1\n255\n",
            b"P6\n1",
        ] {
            assert!(decode(bad).is_err(), "{:?}", String::from_utf8_lossy(bad));
        }
    }
}
