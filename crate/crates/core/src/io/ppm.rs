//! Binary PPM (P6) reading and writing.

use crate::error::{Error, Result};
use crate::raster::Image;

/// Encodes `img` as P6 with maxval 255, quantized with round-half-up.
pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_rgb8());
    out
}

/// Decodes a P6 file with maxval up to 65535. Samples are mapped to `[0, 1]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(parse_err("truncated header"));
        }
        fields.push(
            std::str::from_utf8(&bytes[start..pos])
                .map_err(|_| parse_err("header is not ASCII"))?,
        );
    }
    if fields[0] != "P6" {
        return Err(parse_err(&format!(
            "unsupported magic '{}' (expected P6)",
            fields[0]
        )));
    }
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| parse_err(&format!("invalid {what} '{s}'")))
    };
    let width = num(fields[1], "width")?;
    let height = num(fields[2], "height")?;
    let maxval = num(fields[3], "maxval")?;
    if !(1..=65535).contains(&maxval) {
        return Err(parse_err(&format!("maxval {maxval} outside 1..=65535")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let expected = 3 * width * height * bytes_per;
    let data = bytes.get(pos..pos + expected).ok_or_else(|| {
        parse_err(&format!(
            "raster has {} bytes, expected {expected}",
            bytes.len().saturating_sub(pos)
        ))
    })?;
    let scale = maxval as f64;
    let rgb = if bytes_per == 1 {
        data.iter().map(|&b| b as f64 / scale).collect()
    } else {
        data.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    };
    Image::from_rgb(width, height, rgb)
}

fn parse_err(message: &str) -> Error {
    Error::Parse {
        path: "<ppm>".into(),
        message: message.into(),
    }
}
