//! Image file IO: 8-bit RGB PNG and binary PPM (P6), mapped linearly
//! between bytes and [0, 1] floats. Round trips agree within one
//! quantization step (1/255).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn to_bytes(img: &Image) -> Vec<u8> {
    img.data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Image {
    let mut img = Image::new(width, height);
    for (dst, &b) in img.data.iter_mut().zip(bytes) {
        *dst = b as f64 / 255.0;
    }
    img
}

pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    let buf = to_bytes(img);
    image::save_buffer(
        path,
        &buf,
        img.width as u32,
        img.height as u32,
        image::ColorType::Rgb8,
    )
    .map_err(|e| Error::Format(format!("{}: png encode: {e}", path.display())))
}

pub fn load_png(path: &Path) -> Result<Image> {
    let decoded = image::open(path)
        .map_err(|e| Error::Format(format!("{}: png decode: {e}", path.display())))?
        .into_rgb8();
    Ok(from_bytes(
        decoded.width() as usize,
        decoded.height() as usize,
        decoded.as_raw(),
    ))
}

pub fn save_ppm(img: &Image, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    write!(w, "P6\n{} {}\n255\n", img.width, img.height).map_err(io_err(path))?;
    w.write_all(&to_bytes(img)).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn load_ppm(path: &Path) -> Result<Image> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));

    // Header: "P6", width, height, maxval as whitespace-separated
    // tokens (with optional '#' comments), then one whitespace byte.
    let mut at = 0usize;
    let mut next_token = || -> Result<String> {
        loop {
            while at < bytes.len() && bytes[at].is_ascii_whitespace() {
                at += 1;
            }
            if at < bytes.len() && bytes[at] == b'#' {
                while at < bytes.len() && bytes[at] != b'\n' {
                    at += 1;
                }
                continue;
            }
            break;
        }
        let start = at;
        while at < bytes.len() && !bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        if start == at {
            return Err(Error::Format(format!(
                "{}: truncated header",
                Path::new("").display()
            )));
        }
        // Consume the single whitespace byte terminating the token.
        if at < bytes.len() {
            at += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..at - 1]).into_owned())
    };

    if next_token().map_err(|_| bad("truncated header"))? != "P6" {
        return Err(bad("not a binary P6 file"));
    }
    let width: usize = next_token()
        .map_err(|_| bad("truncated header"))?
        .parse()
        .map_err(|_| bad("bad width"))?;
    let height: usize = next_token()
        .map_err(|_| bad("truncated header"))?
        .parse()
        .map_err(|_| bad("bad height"))?;
    let maxval: u32 = next_token()
        .map_err(|_| bad("truncated header"))?
        .parse()
        .map_err(|_| bad("bad maxval"))?;
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    let expected = width * height * 3;
    let data = &bytes[at..];
    if data.len() != expected {
        return Err(bad(&format!(
            "pixel payload is {} bytes, expected {expected}",
            data.len()
        )));
    }
    Ok(from_bytes(width, height, data))
}

/// Load by extension: `.png` or `.ppm`.
pub fn load_image(path: &Path) -> Result<Image> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => load_png(path),
        Some("ppm") => load_ppm(path),
        other => Err(Error::Format(format!(
            "{}: unsupported image extension {:?}",
            path.display(),
            other
        ))),
    }
}

/// Save by extension: `.png` or `.ppm`.
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => save_png(img, path),
        Some("ppm") => save_ppm(img, path),
        other => Err(Error::Format(format!(
            "{}: unsupported image extension {:?}",
            path.display(),
            other
        ))),
    }
}
