//! Image file decoding and encoding.
//!
//! Inputs: 8-bit binary PGM (P5) and 8-bit grayscale or RGB PNG. RGB inputs
//! collapse to grayscale with the fixed luma weights 0.299/0.587/0.114.
//! Output: PGM P5, quantized round-half-away-from-zero.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{luma, Image};

/// Load a PGM or PNG file, dispatching on magic bytes. When `expected`
/// dimensions are given, a mismatch is an error.
pub fn load_image(path: &Path, expected: Option<(usize, usize)>) -> Result<Image> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = if data.starts_with(b"P5") {
        decode_pgm(path, &data)?
    } else if data.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(path, &data)?
    } else {
        return Err(Error::ImageFormat {
            path: path.to_path_buf(),
            reason: "unsupported format (expected binary PGM or PNG)".into(),
        });
    };
    if let Some((h, w)) = expected {
        img.expect_dims(h, w)?;
    }
    Ok(img)
}

/// Write an image as binary PGM (P5, maxval 255).
pub fn save_pgm(img: &Image, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(32 + img.height() * img.width());
    write!(out, "P5\n{} {}\n255\n", img.width(), img.height())
        .expect("writing to a Vec cannot fail");
    out.extend_from_slice(&img.to_bytes());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::ImageFormat {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Binary PGM header fields are whitespace-separated tokens; `#` starts a
/// comment running to end of line.
fn decode_pgm(path: &Path, data: &[u8]) -> Result<Image> {
    let mut pos = 2; // past "P5"
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            match data.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(format_err(path, "truncated PGM header")),
            }
        }
        let start = pos;
        while pos < data.len() && data[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(format_err(path, "malformed PGM header"));
        }
        let token = std::str::from_utf8(&data[start..pos]).expect("digits are valid UTF-8");
        *field = token
            .parse()
            .map_err(|_| format_err(path, "PGM header value out of range"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(format_err(path, format!("unsupported PGM maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(format_err(path, "zero PGM dimensions"));
    }
    // exactly one whitespace byte separates the header from the raster
    match data.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(format_err(path, "missing raster separator")),
    }
    let raster = data
        .get(pos..pos + width * height)
        .ok_or_else(|| format_err(path, "truncated PGM raster"))?;
    Image::from_bytes(height, width, raster)
}

fn decode_png(path: &Path, data: &[u8]) -> Result<Image> {
    let decoded = image::load_from_memory_with_format(data, image::ImageFormat::Png)
        .map_err(|e| format_err(path, format!("PNG decode failed: {e}")))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if w == 0 || h == 0 {
        return Err(format_err(path, "zero PNG dimensions"));
    }
    let pixels = match decoded {
        image::DynamicImage::ImageLuma8(gray) => ndarray::Array2::from_shape_fn((h, w), |(r, c)| {
            f64::from(gray.get_pixel(c as u32, r as u32).0[0])
        }),
        other => {
            let rgb = other.to_rgb8();
            ndarray::Array2::from_shape_fn((h, w), |(r, c)| {
                let p = rgb.get_pixel(c as u32, r as u32);
                luma(p.0[0], p.0[1], p.0[2])
            })
        }
    };
    Image::new(pixels)
}

/// Paths of every PGM/PNG in a directory, in lexicographic order.
pub fn list_image_paths(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pgm") | Some("png") | Some("PGM") | Some("PNG")
            )
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Load every PGM/PNG in a directory in lexicographic filename order.
pub fn load_dir(dir: &Path, expected: Option<(usize, usize)>) -> Result<Vec<Image>> {
    list_image_paths(dir)?
        .iter()
        .map(|p| load_image(p, expected))
        .collect::<Result<Vec<_>>>()
}
