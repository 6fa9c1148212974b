//! Binary PPM (P6) and PGM (P5) with maxval 255.
//!
//! Headers are `magic`, width, height and maxval separated by whitespace
//! (with `#` comments allowed between tokens), followed by exactly one
//! whitespace byte and the raster.

use std::fs;
use std::path::Path;

use blockres_core::{BlockGrid, DenseTensor, Scalar};

use crate::error::{format_err, io_err, Result};

/// 8-bit single-channel image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Gray {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height, "raster size");
        Gray { width, height, data }
    }
}

struct Header {
    width: usize,
    height: usize,
    offset: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header, String> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(format!("expected magic {}", String::from_utf8_lossy(magic)));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        let mut saw_space = false;
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => {
                    saw_space = true;
                    pos += 1;
                }
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        if !saw_space {
            return Err("missing whitespace between header tokens".into());
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err("expected a decimal number in header".into());
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text.parse().map_err(|_| format!("header value {text} out of range"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format!("maxval {maxval} unsupported (only 255)"));
    }
    if width == 0 || height == 0 {
        return Err(format!("empty image {width}x{height}"));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err("expected a single whitespace byte before the raster".into()),
    }
    Ok(Header {
        width,
        height,
        offset: pos,
    })
}

fn raster<'a>(bytes: &'a [u8], h: &Header, channels: usize) -> Result<&'a [u8], String> {
    let need = h
        .width
        .checked_mul(h.height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or("image size overflows")?;
    let got = bytes.len() - h.offset;
    if got < need {
        return Err(format!("truncated raster: {got} of {need} bytes"));
    }
    if got > need {
        return Err(format!("{} trailing bytes after raster", got - need));
    }
    Ok(&bytes[h.offset..])
}

/// Decodes P6 into a `(1, 3, h, w)` tensor with values `byte / 255`.
pub fn decode_ppm<T: Scalar>(bytes: &[u8]) -> Result<DenseTensor<T>, String> {
    let h = parse_header(bytes, b"P6")?;
    let px = raster(bytes, &h, 3)?;
    let plane = h.width * h.height;
    let mut data = vec![T::zero(); 3 * plane];
    for (i, rgb) in px.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + i] = T::of(rgb[c] as f64 / 255.0);
        }
    }
    DenseTensor::from_vec((1, 3, h.height, h.width), data).map_err(|e| e.to_string())
}

fn to_byte<T: Scalar>(v: T) -> u8 {
    (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes a `(1, 3, h, w)` tensor, rounding to the nearest 1/255 step.
pub fn encode_ppm<T: Scalar>(t: &DenseTensor<T>) -> Result<Vec<u8>, String> {
    let d = t.dims();
    if d.n != 1 || d.c != 3 {
        return Err(format!("PPM needs a (1, 3, h, w) tensor, got {:?}", d.as_array()));
    }
    let plane = d.h * d.w;
    let mut out = format!("P6\n{} {}\n255\n", d.w, d.h).into_bytes();
    out.reserve(3 * plane);
    let x = t.data();
    for i in 0..plane {
        out.extend((0..3).map(|c| to_byte(x[c * plane + i])));
    }
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Gray, String> {
    let h = parse_header(bytes, b"P5")?;
    let px = raster(bytes, &h, 1)?;
    Ok(Gray::new(h.width, h.height, px.to_vec()))
}

pub fn encode_pgm(g: &Gray) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", g.width, g.height).into_bytes();
    out.extend_from_slice(&g.data);
    out
}

pub fn read_ppm<T: Scalar>(path: &Path) -> Result<DenseTensor<T>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_ppm(&bytes).map_err(|m| format_err(path, m))
}

pub fn write_ppm<T: Scalar>(t: &DenseTensor<T>, path: &Path) -> Result<()> {
    let bytes = encode_ppm(t).map_err(|m| format_err(path, m))?;
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_pgm(path: &Path) -> Result<Gray> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_pgm(&bytes).map_err(|m| format_err(path, m))
}

pub fn write_pgm(g: &Gray, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(g)).map_err(io_err(path))
}

/// Image-sized map with high-resolution blocks at 255 and low ones at 0.
pub fn decision_map(grid: &BlockGrid) -> Gray {
    let (h, w) = grid.image_size();
    let s = grid.block_size();
    let mut data = vec![0u8; h * w];
    for y in 0..h {
        for x in 0..w {
            if grid.is_high((y / s) * grid.cols() + x / s) {
                data[y * w + x] = 255;
            }
        }
    }
    Gray::new(w, h, data)
}
