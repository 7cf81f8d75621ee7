//! File formats: 16-bit PGM images, CSV tables and lossless text encodings
//! of images and sinograms.
//!
//! The text encodings start with a magic line, then `key value` header
//! lines, then whitespace-separated values written with Rust's shortest
//! round-trip float formatting:
//!
//! ```text
//! sparsetomo-image v1
//! width 3
//! height 2
//! 0 0.03 0.75
//! 0 0 0.03
//! ```
//!
//! Sinograms use magic `sparsetomo-sinogram v1` with header keys `n_proj`,
//! `n_det`, `dose` (a number or `none`) and `noisy` (`true`/`false`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::ImageGrid;
use crate::projector::Sinogram;

pub const IMAGE_MAGIC: &str = "sparsetomo-image v1";
pub const SINOGRAM_MAGIC: &str = "sparsetomo-sinogram v1";

/// Default display window for Pt/C-like phantoms.
pub const DEFAULT_WINDOW: (f64, f64) = (0.01, 0.05);

/// Decimal formatting with 9 significant digits.
pub fn fmt_sig(v: f64) -> String {
    format!("{v:.8e}")
}

/// Maps `v` through the window `[lo, hi]` to `0..=65535`, rounding half up.
pub fn window_value(v: f64, lo: f64, hi: f64) -> u16 {
    let t = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    (t * 65535.0 + 0.5).floor() as u16
}

pub fn window_pixels(x: &ImageGrid, lo: f64, hi: f64) -> Result<Vec<u16>> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::param(format!("display window needs lo < hi, got ({lo}, {hi})")));
    }
    Ok(x.values().iter().map(|&v| window_value(v, lo, hi)).collect())
}

/// 16-bit PGM bytes: binary `P5` (big-endian samples) or ASCII `P2`.
pub fn encode_pgm(x: &ImageGrid, window: (f64, f64), ascii: bool) -> Result<Vec<u8>> {
    let pixels = window_pixels(x, window.0, window.1)?;
    let (w, h) = (x.width(), x.height());
    let mut out = Vec::with_capacity(pixels.len() * 2 + 32);
    if ascii {
        let mut s = format!("P2\n{w} {h}\n65535\n");
        for row in pixels.chunks(w) {
            let line: Vec<String> = row.iter().map(u16::to_string).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        out.extend_from_slice(s.as_bytes());
    } else {
        out.extend_from_slice(format!("P5\n{w} {h}\n65535\n").as_bytes());
        for p in pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
    }
    Ok(out)
}

/// A decoded PGM raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

/// Parses `P2`/`P5` graymaps with any maxval up to 65535; `#` comments are
/// allowed in the header.
pub fn decode_pgm(bytes: &[u8]) -> Result<Graymap> {
    let fail = |m: &str| Error::Format {
        kind: "pgm",
        message: m.to_string(),
    };
    let mut pos = 0usize;
    let next_token = |pos: &mut usize| -> Option<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = next_token(&mut pos).ok_or_else(|| fail("empty file"))?;
    let ascii = match magic.as_str() {
        "P2" => true,
        "P5" => false,
        _ => return Err(fail("expected P2 or P5 magic")),
    };
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = next_token(&mut pos).ok_or_else(|| fail(&format!("missing {name}")))?;
        *slot = tok.parse().map_err(|_| fail(&format!("bad {name} `{tok}`")))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(fail("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(fail("maxval must be in 1..=65535"));
    }
    let count = width
        .checked_mul(height)
        .filter(|&c| c <= bytes.len())
        .ok_or_else(|| fail("pixel count exceeds file size"))?;
    let mut pixels = Vec::with_capacity(count);
    if ascii {
        for _ in 0..count {
            let tok = next_token(&mut pos).ok_or_else(|| fail("truncated pixel data"))?;
            let v: usize = tok.parse().map_err(|_| fail(&format!("bad pixel `{tok}`")))?;
            if v > maxval {
                return Err(fail("pixel exceeds maxval"));
            }
            pixels.push(v as u16);
        }
    } else {
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let wide = maxval > 255;
        let need = count * if wide { 2 } else { 1 };
        let data = bytes
            .get(pos..)
            .filter(|d| d.len() >= need)
            .ok_or_else(|| fail("truncated pixel data"))?;
        for i in 0..count {
            let v = if wide {
                u16::from_be_bytes([data[2 * i], data[2 * i + 1]])
            } else {
                u16::from(data[i])
            };
            if usize::from(v) > maxval {
                return Err(fail("pixel exceeds maxval"));
            }
            pixels.push(v);
        }
    }
    Ok(Graymap {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

pub fn write_image(x: &ImageGrid, path: &Path, window: (f64, f64), ascii: bool) -> Result<()> {
    let bytes = encode_pgm(x, window, ascii)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_image_text(x: &ImageGrid) -> String {
    let mut s = format!("{IMAGE_MAGIC}\nwidth {}\nheight {}\n", x.width(), x.height());
    for row in x.values().chunks(x.width()) {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn encode_sinogram_text(b: &Sinogram) -> String {
    let mut s = format!(
        "{SINOGRAM_MAGIC}\nn_proj {}\nn_det {}\n",
        b.n_proj(),
        b.n_det()
    );
    match b.dose() {
        Some(d) => writeln!(s, "dose {d}").unwrap(),
        None => s.push_str("dose none\n"),
    }
    writeln!(s, "noisy {}", b.is_noisy()).unwrap();
    for row in b.values().chunks(b.n_det().max(1)) {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

struct TextReader<'a> {
    kind: &'static str,
    lines: std::str::Lines<'a>,
}

impl<'a> TextReader<'a> {
    fn new(kind: &'static str, text: &'a str, magic: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(l) if l.trim_end() == magic => Ok(Self { kind, lines }),
            _ => Err(Error::Format {
                kind,
                message: format!("missing `{magic}` header"),
            }),
        }
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Format {
            kind: self.kind,
            message: message.into(),
        }
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self
            .lines
            .next()
            .ok_or_else(|| self.fail(format!("missing `{key}` line")))?;
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(v), None) if k == key => Ok(v),
            _ => Err(self.fail(format!("expected `{key} <value>`, found `{line}`"))),
        }
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let v = self.field(key)?;
        v.parse()
            .map_err(|_| self.fail(format!("`{key}` is not a count: `{v}`")))
    }

    fn values(self, expected: usize) -> Result<Vec<f64>> {
        let kind = self.kind;
        let mut out = Vec::with_capacity(expected.min(1 << 20));
        for line in self.lines {
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::Format {
                    kind,
                    message: format!("bad value `{tok}`"),
                })?;
                if out.len() == expected {
                    return Err(Error::Format {
                        kind,
                        message: format!("more than {expected} values"),
                    });
                }
                out.push(v);
            }
        }
        if out.len() != expected {
            return Err(Error::Format {
                kind,
                message: format!("expected {expected} values, found {}", out.len()),
            });
        }
        Ok(out)
    }
}

pub fn decode_image_text(text: &str) -> Result<ImageGrid> {
    let mut r = TextReader::new("image", text, IMAGE_MAGIC)?;
    let width = r.count("width")?;
    let height = r.count("height")?;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| r.fail("image dimensions overflow"))?;
    let values = r.values(n)?;
    ImageGrid::from_values(width, height, values).map_err(|e| Error::Format {
        kind: "image",
        message: e.to_string(),
    })
}

pub fn decode_sinogram_text(text: &str) -> Result<Sinogram> {
    let mut r = TextReader::new("sinogram", text, SINOGRAM_MAGIC)?;
    let n_proj = r.count("n_proj")?;
    let n_det = r.count("n_det")?;
    let dose = match r.field("dose")? {
        "none" => None,
        v => Some(
            v.parse::<f64>()
                .map_err(|_| r.fail(format!("bad dose `{v}`")))?,
        ),
    };
    let noisy = match r.field("noisy")? {
        "true" => true,
        "false" => false,
        v => return Err(r.fail(format!("bad noisy flag `{v}`"))),
    };
    let n = n_proj
        .checked_mul(n_det)
        .ok_or_else(|| r.fail("sinogram dimensions overflow"))?;
    let values = r.values(n)?;
    Sinogram::with_metadata(n_proj, n_det, values, dose, noisy).map_err(|e| Error::Format {
        kind: "sinogram",
        message: e.to_string(),
    })
}

pub fn read_image_text(path: &Path) -> Result<ImageGrid> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_image_text(&text)
}

pub fn write_image_text(x: &ImageGrid, path: &Path) -> Result<()> {
    fs::write(path, encode_image_text(x)).map_err(|e| Error::io(path, e))
}

pub fn read_sinogram_text(path: &Path) -> Result<Sinogram> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_sinogram_text(&text)
}

pub fn write_sinogram_text(b: &Sinogram, path: &Path) -> Result<()> {
    fs::write(path, encode_sinogram_text(b)).map_err(|e| Error::io(path, e))
}

/// A record type with a fixed CSV column layout.
pub trait CsvRecord {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

pub fn encode_csv<T: CsvRecord>(records: &[T]) -> String {
    let mut s = T::header().join(",");
    s.push('\n');
    for r in records {
        s.push_str(&r.fields().join(","));
        s.push('\n');
    }
    s
}

pub fn write_csv<T: CsvRecord>(records: &[T], path: &Path) -> Result<()> {
    fs::write(path, encode_csv(records)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_endpoints_and_midpoint() {
        assert_eq!(window_value(0.0, 0.0, 1.0), 0);
        assert_eq!(window_value(1.0, 0.0, 1.0), 65535);
        assert_eq!(window_value(0.5, 0.0, 1.0), 32768);
        assert_eq!(window_value(-3.0, 0.0, 1.0), 0);
        assert_eq!(window_value(7.0, 0.0, 1.0), 65535);
        let (lo, hi) = DEFAULT_WINDOW;
        assert_eq!(window_value(lo, lo, hi), 0);
        assert_eq!(window_value(hi, lo, hi), 65535);
        let carbon = window_value(0.03, lo, hi);
        assert!(carbon == 32767 || carbon == 32768, "{carbon}");
    }

    #[test]
    fn pgm_binary_layout() {
        let x = ImageGrid::from_values(2, 1, vec![0.0, 1.0]).unwrap();
        let bytes = encode_pgm(&x, (0.0, 1.0), false).unwrap();
        assert_eq!(&bytes[..], b"P5\n2 1\n65535\n\x00\x00\xff\xff");
        let g = decode_pgm(&bytes).unwrap();
        assert_eq!(g.pixels, vec![0, 65535]);
    }

    #[test]
    fn pgm_ascii_round_trip() {
        let x = ImageGrid::from_fn(3, 2, |r, c| (r * 3 + c) as f64 / 5.0).unwrap();
        let bytes = encode_pgm(&x, (0.0, 1.0), true).unwrap();
        let g = decode_pgm(&bytes).unwrap();
        assert_eq!((g.width, g.height, g.maxval), (3, 2, 65535));
        assert_eq!(g.pixels, window_pixels(&x, 0.0, 1.0).unwrap());
        assert!(encode_pgm(&x, (1.0, 1.0), true).is_err());
    }

    #[test]
    fn pgm_rejects_garbage() {
        assert!(decode_pgm(b"").is_err());
        assert!(decode_pgm(b"P6\n1 1\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n4 4\n255\n\x00").is_err());
        assert!(decode_pgm(b"P2\n1 1\n10\n11").is_err());
        assert!(decode_pgm(b"P2 # c\n1 1\n10\n9").is_ok());
    }

    #[test]
    fn text_formats() {
        let x = ImageGrid::from_values(3, 1, vec![0.1, 1e-300, 0.75]).unwrap();
        assert_eq!(decode_image_text(&encode_image_text(&x)).unwrap(), x);
        let b = Sinogram::with_metadata(2, 2, vec![0.0, 1.5, 2.25, 0.0], Some(4e4), true).unwrap();
        assert_eq!(decode_sinogram_text(&encode_sinogram_text(&b)).unwrap(), b);

        assert!(decode_image_text("sparsetomo-image v1\nwidth 2\nheight 1\n1\n").is_err());
        assert!(decode_image_text("sparsetomo-image v1\nwidth 1\nheight 1\n1 2\n").is_err());
        assert!(decode_image_text("sparsetomo-image v1\nheight 1\nwidth 1\n1\n").is_err());
        assert!(decode_sinogram_text("sparsetomo-sinogram v1\nn_proj 1\nn_det 1\ndose -1\nnoisy false\n1\n").is_err());
        assert!(decode_sinogram_text("sparsetomo-sinogram v1\nn_proj 1\nn_det 1\ndose none\nnoisy maybe\n1\n").is_err());
    }

    struct Row(u32, f64);

    impl CsvRecord for Row {
        fn header() -> &'static [&'static str] {
            &["id", "value"]
        }
        fn fields(&self) -> Vec<String> {
            vec![self.0.to_string(), fmt_sig(self.1)]
        }
    }

    #[test]
    fn csv_layout() {
        assert_eq!(encode_csv::<Row>(&[]), "id,value\n");
        let s = encode_csv(&[Row(1, 0.1), Row(2, 123456789.0)]);
        assert_eq!(s, "id,value\n1,1.00000000e-1\n2,1.23456789e8\n");
        assert_eq!(s.lines().count() - 1, 2);
    }
}
