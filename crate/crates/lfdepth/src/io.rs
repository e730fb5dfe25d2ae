//! Float-image file i/o (PFM), PNG visualization helpers, and the raw
//! cost-volume dump format.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::cost::CostVolume;
use crate::error::{Error, Result};
use crate::field::{Field, Mask};
use crate::lightfield::Image;

/// Reads a grayscale PFM (`Pf`) file. Scanlines are stored bottom-to-top;
/// a negative scale marks little-endian samples.
pub fn read_pfm(path: &Path) -> Result<Field> {
    fn token(bytes: &[u8], pos: &mut usize, path: &Path, what: &str) -> Result<String> {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::Pfm(format!("{}: truncated header ({what})", path.display())));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    }

    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let magic = token(&bytes, &mut pos, path, "magic")?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::Pfm(format!("{}: bad magic {other:?}", path.display()))),
    };
    if channels != 1 {
        return Err(Error::Pfm(format!("{}: expected grayscale Pf, got color PF", path.display())));
    }
    let width: usize = token(&bytes, &mut pos, path, "width")?
        .parse()
        .map_err(|_| Error::Pfm(format!("{}: bad width", path.display())))?;
    let height: usize = token(&bytes, &mut pos, path, "height")?
        .parse()
        .map_err(|_| Error::Pfm(format!("{}: bad height", path.display())))?;
    let scale: f64 = token(&bytes, &mut pos, path, "scale")?
        .parse()
        .map_err(|_| Error::Pfm(format!("{}: bad scale", path.display())))?;
    let little_endian = scale < 0.0;
    // Exactly one whitespace byte separates the header from the samples.
    pos += 1;
    let need = width * height * 4;
    if bytes.len() < pos + need {
        return Err(Error::Pfm(format!(
            "{}: expected {} sample bytes, found {}",
            path.display(),
            need,
            bytes.len().saturating_sub(pos)
        )));
    }
    let mut out = Field::new(height, width, 0.0);
    for row in 0..height {
        let y = height - 1 - row;
        for x in 0..width {
            let off = pos + (row * width + x) * 4;
            let raw: [u8; 4] = bytes[off..off + 4].try_into().unwrap();
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            out.set(y, x, v as f64);
        }
    }
    Ok(out)
}

/// Writes a field as a little-endian grayscale PFM.
pub fn write_pfm(path: &Path, field: &Field) -> Result<()> {
    let mut f = fs::File::create(path)?;
    write!(f, "Pf\n{} {}\n-1.0\n", field.width, field.height)?;
    let mut buf = Vec::with_capacity(field.width * field.height * 4);
    for row in 0..field.height {
        let y = field.height - 1 - row;
        for x in 0..field.width {
            buf.extend_from_slice(&(field.get(y, x) as f32).to_le_bytes());
        }
    }
    f.write_all(&buf)?;
    Ok(())
}

/// Writes a 16-bit grayscale PNG, mapping [lo, hi] onto the full range.
pub fn write_png16(path: &Path, field: &Field, lo: f64, hi: f64) -> Result<()> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(
        field.width as u32,
        field.height as u32,
    );
    for (x, y, px) in img.enumerate_pixels_mut() {
        let v = ((field.get(y as usize, x as usize) - lo) / span).clamp(0.0, 1.0);
        *px = image::Luma([(v * 65535.0).round() as u16]);
    }
    img.save(path).map_err(|e| Error::Image { path: path.to_path_buf(), msg: e.to_string() })
}

/// Writes a radiance image as a 16-bit PNG (grayscale or RGB), mapping the
/// [0, 1] range onto the full sample range.
pub fn write_image_png16(path: &Path, img: &Image) -> Result<()> {
    let quantize = |v: f32| (f64::from(v).clamp(0.0, 1.0) * 65535.0).round() as u16;
    let result = match img.channels {
        1 => {
            let mut out = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(
                img.width as u32,
                img.height as u32,
            );
            for (x, y, px) in out.enumerate_pixels_mut() {
                *px = image::Luma([quantize(img.get(y as usize, x as usize, 0))]);
            }
            out.save(path)
        }
        3 => {
            let mut out = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::new(
                img.width as u32,
                img.height as u32,
            );
            for (x, y, px) in out.enumerate_pixels_mut() {
                let mut rgb = [0u16; 3];
                for (c, slot) in rgb.iter_mut().enumerate() {
                    *slot = quantize(img.get(y as usize, x as usize, c));
                }
                *px = image::Rgb(rgb);
            }
            out.save(path)
        }
        other => {
            return Err(Error::Image {
                path: path.to_path_buf(),
                msg: format!("cannot write {other}-channel image"),
            })
        }
    };
    result.map_err(|e| Error::Image { path: path.to_path_buf(), msg: e.to_string() })
}

/// Writes a boolean mask as an 8-bit black/white PNG.
pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    let mut img = image::GrayImage::new(mask.width as u32, mask.height as u32);
    for (x, y, px) in img.enumerate_pixels_mut() {
        *px = image::Luma([if mask.get(y as usize, x as usize) { 255 } else { 0 }]);
    }
    img.save(path).map_err(|e| Error::Image { path: path.to_path_buf(), msg: e.to_string() })
}

/// Raw cost-volume dump: magic `LFCV`, then height, width, n_labels as
/// little-endian u32, then label-major f32 samples.
pub fn dump_cost_volume(path: &Path, cv: &CostVolume) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(b"LFCV")?;
    for dim in [cv.height as u32, cv.width as u32, cv.n_labels() as u32] {
        f.write_all(&dim.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(cv.height * cv.width * cv.n_labels() * 4);
    for l in 0..cv.n_labels() {
        for y in 0..cv.height {
            for x in 0..cv.width {
                buf.extend_from_slice(&(cv.get(y, x, l) as f32).to_le_bytes());
            }
        }
    }
    f.write_all(&buf)?;
    Ok(())
}
