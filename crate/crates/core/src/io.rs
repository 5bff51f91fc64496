//! Raster file I/O: 8-bit PNG and binary PPM (P6, maxval 255).

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{ColorImage, Plane};
use crate::scalar::Scalar;

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// On-disk formats understood by [`load_image`] and [`save_image`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RasterFormat {
    Png,
    Ppm,
}

impl RasterFormat {
    /// Picks the output format from the file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("png") => Ok(Self::Png),
            Some("ppm") | Some("pnm") => Ok(Self::Ppm),
            other => Err(Error::UnsupportedFormat(format!(
                "extension {:?} (expected .png or .ppm)",
                other.unwrap_or("")
            ))),
        }
    }
}

/// Loads an 8-bit RGB raster; codes map to intensities by `v / 255`.
///
/// The format is detected from the leading bytes, not the extension.
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<ColorImage<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    decode_image(&bytes, path)
}

pub fn decode_image<T: Scalar>(bytes: &[u8], path: &Path) -> Result<ColorImage<T>> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes, path)
    } else if bytes.starts_with(b"P6") {
        decode_ppm(bytes, path)
    } else if bytes.len() >= 2 && bytes[0] == b'P' && bytes[1].is_ascii_digit() {
        Err(Error::UnsupportedFormat(format!(
            "netpbm variant P{} (only binary P6 is supported)",
            bytes[1] as char
        )))
    } else {
        Err(Error::UnsupportedFormat(format!(
            "{} is neither PNG nor PPM",
            path.display()
        )))
    }
}

fn from_rgb8<T: Scalar>(height: usize, width: usize, rgb: &[u8]) -> Result<ColorImage<T>> {
    let scale = T::one() / T::of(255.0);
    let mut planes = [
        Vec::with_capacity(height * width),
        Vec::with_capacity(height * width),
        Vec::with_capacity(height * width),
    ];
    for px in rgb.chunks_exact(3) {
        for c in 0..3 {
            planes[c].push(T::of(px[c] as f64) * scale);
        }
    }
    let [r, g, b] = planes;
    ColorImage::from_planes([
        Plane::from_vec(height, width, r)?,
        Plane::from_vec(height, width, g)?,
        Plane::from_vec(height, width, b)?,
    ])
}

fn decode_png<T: Scalar>(bytes: &[u8], path: &Path) -> Result<ColorImage<T>> {
    let corrupt = |reason: String| Error::CorruptHeader {
        path: path.to_path_buf(),
        reason,
    };
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| corrupt(e.to_string()))?;
    if decoded.color().bytes_per_pixel() / decoded.color().channel_count() > 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: only 8-bit PNG is supported",
            path.display()
        )));
    }
    // Alpha (if any) is dropped; grayscale is expanded to RGB.
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    from_rgb8(h as usize, w as usize, rgb.as_raw())
}

/// Reads one whitespace-delimited header token, skipping `#` comments.
fn ppm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
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
    (start < *pos).then(|| &bytes[start..*pos])
}

fn decode_ppm<T: Scalar>(bytes: &[u8], path: &Path) -> Result<ColorImage<T>> {
    let corrupt = |reason: &str| Error::CorruptHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut pos = 2;
    let mut field = |name: &str| -> Result<usize> {
        let tok = ppm_token(bytes, &mut pos).ok_or_else(|| corrupt(&format!("missing {name}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| corrupt(&format!("{name} is not an integer")))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if width == 0 || height == 0 {
        return Err(corrupt("zero dimension"));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: PPM maxval {maxval} (only 255 is supported)",
            path.display()
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(corrupt("missing raster separator"));
    }
    pos += 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| corrupt("dimensions overflow"))?;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(corrupt(&format!(
            "raster truncated: {} of {need} bytes",
            raster.len()
        )));
    }
    from_rgb8(height, width, &raster[..need])
}

/// Quantizes to 8-bit codes: clamp to `[0, 1]`, then `round(255 v)`.
pub fn quantize<T: Scalar>(img: &ColorImage<T>) -> Vec<u8> {
    let n = img.pixel_count();
    let mut out = Vec::with_capacity(3 * n);
    let [r, g, b] = img.planes();
    for i in 0..n {
        for plane in [r, g, b] {
            let v = plane.as_slice()[i].to_f64_lossy();
            let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            out.push((255.0 * v).round() as u8);
        }
    }
    out
}

/// Encodes in the requested format.
pub fn encode_image<T: Scalar>(img: &ColorImage<T>, format: RasterFormat) -> Result<Vec<u8>> {
    let rgb = quantize(img);
    let (h, w) = img.dims();
    match format {
        RasterFormat::Ppm => {
            let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
            out.extend_from_slice(&rgb);
            Ok(out)
        }
        RasterFormat::Png => {
            let buf = image::RgbImage::from_raw(w as u32, h as u32, rgb)
                .expect("buffer length matches dimensions");
            let mut out = Cursor::new(Vec::new());
            buf.write_to(&mut out, image::ImageFormat::Png)
                .map_err(|e| Error::UnsupportedFormat(e.to_string()))?;
            Ok(out.into_inner())
        }
    }
}

/// Writes an image, choosing PNG or PPM from the extension.
pub fn save_image<T: Scalar>(img: &ColorImage<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_image(img, RasterFormat::from_path(path)?)?;
    fs::write(path, bytes).map_err(|source| Error::Unwritable {
        path: path.to_path_buf(),
        source,
    })
}
