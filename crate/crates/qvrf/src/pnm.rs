//! Minimal PGM (P5) / PPM (P6) reader and PGM writer.
//!
//! Color inputs are converted to luma with the BT.601 weights; only 8-bit
//! maxval is accepted.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::transform::Image;

fn parse_err(detail: impl Into<String>) -> Error {
    Error::Parse {
        what: "pnm",
        detail: detail.into(),
    }
}

/// Reads the next whitespace-delimited token, skipping `#` comments.
fn next_token<'a>(data: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(parse_err("unexpected end of header"));
    }
    Ok(&data[start..*pos])
}

fn parse_usize(tok: &[u8]) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err("bad numeric field"))
}

/// Decodes a P5/P6 byte buffer into a luma image.
pub fn decode(data: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let magic = next_token(data, &mut pos)?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(parse_err("expected P5 or P6 magic")),
    };
    let width = parse_usize(next_token(data, &mut pos)?)?;
    let height = parse_usize(next_token(data, &mut pos)?)?;
    let maxval = parse_usize(next_token(data, &mut pos)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(parse_err(format!("unsupported maxval {maxval}")));
    }
    pos += 1; // single whitespace byte after maxval
    let need = width * height * channels;
    let raster = data
        .get(pos..pos + need)
        .ok_or_else(|| parse_err("raster shorter than header promises"))?;

    let samples = if channels == 1 {
        raster.to_vec()
    } else {
        raster
            .chunks_exact(3)
            .map(|px| {
                let y = 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64;
                y.round().clamp(0.0, 255.0) as u8
            })
            .collect()
    };
    Image::new(width, height, samples)
}

/// Encodes an image as binary PGM.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.samples());
    out
}

pub fn read(path: impl AsRef<Path>) -> Result<Image> {
    decode(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}
