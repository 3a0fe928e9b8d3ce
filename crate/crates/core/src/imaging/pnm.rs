//! PGM (P5 binary, P2 ASCII) codec and read-only grayscale PNG.

use std::io::Cursor;

use super::{quantize, ImageGray};
use crate::error::{Error, Result};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Decodes an in-memory PGM or grayscale PNG.
pub fn decode_image(bytes: &[u8]) -> Result<ImageGray> {
    if bytes.len() < 2 {
        return Err(Error::MalformedHeader(format!(
            "file too short ({} bytes)",
            bytes.len()
        )));
    }
    match &bytes[..2] {
        b"P5" => decode_pgm(bytes, true),
        b"P2" => decode_pgm(bytes, false),
        b"P1" | b"P3" | b"P4" | b"P6" | b"P7" => Err(Error::UnsupportedFormat(format!(
            "PNM variant {} (only grayscale P2/P5)",
            String::from_utf8_lossy(&bytes[..2])
        ))),
        _ if bytes.starts_with(PNG_SIGNATURE) => decode_png(bytes),
        _ => Err(Error::UnsupportedFormat("unrecognized magic bytes".into())),
    }
}

/// Encodes `img` as P5 with maxval 255.
pub fn encode_pgm(img: &ImageGray) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|&p| quantize(p)));
    out
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
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

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader(format!("{what} out of range")))
    }
}

fn decode_pgm(bytes: &[u8], binary: bool) -> Result<ImageGray> {
    let mut hdr = HeaderReader { bytes, pos: 2 };
    let width = hdr.number("width")?;
    let height = hdr.number("height")?;
    let maxval = hdr.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval == 0 {
        return Err(Error::MalformedHeader("maxval must be positive".into()));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedFormat(format!(
            "16-bit PGM (maxval {maxval})"
        )));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
    let scale = maxval as f64;
    let samples: Vec<usize> = if binary {
        // exactly one whitespace byte separates the header from the raster
        if !bytes.get(hdr.pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(Error::MalformedHeader(
                "missing separator after maxval".into(),
            ));
        }
        let raster = &bytes[hdr.pos + 1..];
        if raster.len() < n {
            return Err(Error::MalformedHeader(format!(
                "raster truncated: {} of {n} bytes",
                raster.len()
            )));
        }
        raster[..n].iter().map(|&b| usize::from(b)).collect()
    } else {
        (0..n)
            .map(|_| hdr.number("sample"))
            .collect::<Result<_>>()?
    };
    if samples.iter().any(|&s| s > maxval) {
        return Err(Error::MalformedHeader("sample exceeds maxval".into()));
    }
    ImageGray::new(
        height,
        width,
        samples.into_iter().map(|s| s as f64 / scale).collect(),
    )
}

fn decode_png(bytes: &[u8]) -> Result<ImageGray> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::MalformedHeader(format!("png: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::MalformedHeader("png: image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::MalformedHeader(format!("png: {e}")))?;
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "png color type {other:?}"
            )))
        }
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut pixels = Vec::with_capacity(w * h);
    for row in buf[..info.buffer_size()].chunks_exact(info.line_size) {
        pixels.extend(
            row.chunks_exact(channels)
                .take(w)
                .map(|px| f64::from(px[0]) / 255.0),
        );
    }
    ImageGray::new(h, w, pixels)
}
