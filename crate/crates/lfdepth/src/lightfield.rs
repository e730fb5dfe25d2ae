//! Light-field container, disparity label grid, and sub-aperture view loading.
//!
//! A light field is stored as an nv x nu grid of equally sized sub-aperture
//! images with radiance normalized to [0, 1]. Angular offsets are measured
//! from the central view at ((nu-1)/2, (nv-1)/2).

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::Field;

/// One sub-aperture image: row-major, channel-interleaved, values in [0, 1].
#[derive(Debug, Clone)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), height * width * channels, "image data length mismatch");
        Image { height, width, channels, data }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Channel-mean intensity as an f64 field.
    pub fn channel_mean(&self) -> Field {
        let inv = 1.0 / self.channels as f64;
        let mut out = Field::new(self.height, self.width, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut s = 0.0;
                for c in 0..self.channels {
                    s += self.get(y, x, c) as f64;
                }
                out.set(y, x, s * inv);
            }
        }
        out
    }

    /// L1 norm of the forward-difference gradient of the channel-mean
    /// intensity. Differences that would leave the image contribute zero.
    pub fn forward_gradient_l1(&self) -> Field {
        let m = self.channel_mean();
        let mut out = Field::new(self.height, self.width, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = m.get(y, x);
                let mut g = 0.0;
                if x + 1 < self.width {
                    g += (m.get(y, x + 1) - v).abs();
                }
                if y + 1 < self.height {
                    g += (m.get(y + 1, x) - v).abs();
                }
                out.set(y, x, g);
            }
        }
        out
    }

    /// Bilinear sample of every channel at the continuous position (x, y).
    /// Returns false and leaves `out` untouched when the position falls
    /// outside the image; such samples are dropped, never clamped.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) -> bool {
        if !(x >= 0.0 && x <= (self.width - 1) as f64 && y >= 0.0 && y <= (self.height - 1) as f64)
        {
            return false;
        }
        let mut x0 = x.floor() as usize;
        let mut y0 = y.floor() as usize;
        if x0 >= self.width - 1 {
            x0 = self.width.saturating_sub(2).min(x0);
        }
        if y0 >= self.height - 1 {
            y0 = self.height.saturating_sub(2).min(y0);
        }
        // Degenerate 1-wide axes: interpolate within the single cell.
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        for c in 0..self.channels {
            let v00 = self.get(y0, x0, c) as f64;
            let v01 = self.get(y0, x1, c) as f64;
            let v10 = self.get(y1, x0, c) as f64;
            let v11 = self.get(y1, x1, c) as f64;
            out[c] = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01)
                + fy * ((1.0 - fx) * v10 + fx * v11);
        }
        true
    }
}

/// Grid of sub-aperture views, row-major by (v, u), with an odd angular count
/// on both axes so a central view exists.
#[derive(Debug, Clone)]
pub struct LightField {
    pub nu: usize,
    pub nv: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    views: Vec<Image>,
}

impl LightField {
    pub fn new(nv: usize, nu: usize, views: Vec<Image>) -> Result<Self> {
        if nu < 3 || nu % 2 == 0 || nv < 1 || nv % 2 == 0 {
            return Err(Error::Param(format!(
                "angular counts nu={nu}, nv={nv}: need odd nu >= 3 and odd nv >= 1"
            )));
        }
        if views.len() != nu * nv {
            return Err(Error::Param(format!(
                "expected {} views, got {}",
                nu * nv,
                views.len()
            )));
        }
        let (h, w, c) = (views[0].height, views[0].width, views[0].channels);
        if h == 0 || w == 0 || (c != 1 && c != 3) {
            return Err(Error::Param(format!("bad view shape {h}x{w}x{c}")));
        }
        for (i, img) in views.iter().enumerate() {
            if (img.height, img.width, img.channels) != (h, w, c) {
                return Err(Error::View {
                    row: i / nu,
                    col: i % nu,
                    msg: format!(
                        "size {}x{}x{} differs from first view {}x{}x{}",
                        img.height, img.width, img.channels, h, w, c
                    ),
                });
            }
            for &v in &img.data {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::View {
                        row: i / nu,
                        col: i % nu,
                        msg: format!("radiance value {v} outside [0, 1]"),
                    });
                }
            }
        }
        Ok(LightField { nu, nv, height: h, width: w, channels: c, views })
    }

    /// Central view index (u, v) = ((nu-1)/2, (nv-1)/2).
    pub fn center(&self) -> (usize, usize) {
        ((self.nu - 1) / 2, (self.nv - 1) / 2)
    }

    #[inline]
    pub fn view(&self, v: usize, u: usize) -> &Image {
        &self.views[v * self.nu + u]
    }

    pub fn central_view(&self) -> &Image {
        let (cu, cv) = self.center();
        self.view(cv, cu)
    }

    /// Largest angular offset from the center on either axis.
    pub fn max_angular_offset(&self) -> f64 {
        let (cu, cv) = self.center();
        cu.max(cv) as f64
    }
}

/// Uniformly spaced, strictly increasing disparity hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrid {
    labels: Vec<f64>,
    step: f64,
}

impl LabelGrid {
    pub fn uniform(s_min: f64, s_max: f64, n_labels: usize) -> Result<Self> {
        if !s_min.is_finite() || !s_max.is_finite() || s_min >= s_max {
            return Err(Error::Param(format!("label range [{s_min}, {s_max}] is not increasing")));
        }
        if n_labels < 2 {
            return Err(Error::Param(format!("need at least 2 labels, got {n_labels}")));
        }
        let step = (s_max - s_min) / (n_labels - 1) as f64;
        let labels = (0..n_labels).map(|i| s_min + i as f64 * step).collect();
        Ok(LabelGrid { labels, step })
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Continuous label-index coordinate of a disparity value.
    #[inline]
    pub fn index_of(&self, s: f64) -> f64 {
        (s - self.labels[0]) / self.step
    }

    /// Disparity value of a continuous label-index coordinate.
    #[inline]
    pub fn disparity_of(&self, idx: f64) -> f64 {
        self.labels[0] + idx * self.step
    }

    pub fn to_index_field(&self, f: &Field) -> Field {
        f.map(|v| self.index_of(v))
    }

    pub fn to_disparity_field(&self, f: &Field) -> Field {
        f.map(|v| self.disparity_of(v))
    }

    /// Largest absolute disparity spanned by the grid.
    pub fn max_abs_disparity(&self) -> f64 {
        self.labels[0].abs().max(self.labels[self.labels.len() - 1].abs())
    }
}

/// Parsed view manifest: `key = value` lines naming the angular grid layout,
/// a printf-style file pattern, and an optional ground-truth disparity PFM.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub rows: usize,
    pub cols: usize,
    pub pattern: String,
    pub gt_disparity: Option<PathBuf>,
    /// Directory the manifest lives in; relative paths resolve against it.
    pub dir: PathBuf,
}

pub fn parse_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
    let mut rows = None;
    let mut cols = None;
    let mut pattern = None;
    let mut gt = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Manifest(format!("line {}: expected key = value", ln + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "rows" => {
                rows = Some(value.parse::<usize>().map_err(|_| {
                    Error::Manifest(format!("line {}: bad rows value {value:?}", ln + 1))
                })?)
            }
            "cols" => {
                cols = Some(value.parse::<usize>().map_err(|_| {
                    Error::Manifest(format!("line {}: bad cols value {value:?}", ln + 1))
                })?)
            }
            "pattern" => pattern = Some(value.to_string()),
            "gt_disparity" => gt = Some(PathBuf::from(value)),
            other => {
                return Err(Error::Manifest(format!("line {}: unknown key {other:?}", ln + 1)))
            }
        }
    }
    let rows = rows.ok_or_else(|| Error::Manifest("missing key: rows".into()))?;
    let cols = cols.ok_or_else(|| Error::Manifest("missing key: cols".into()))?;
    let pattern = pattern.ok_or_else(|| Error::Manifest("missing key: pattern".into()))?;
    if rows % 2 == 0 || cols % 2 == 0 {
        return Err(Error::Manifest(format!(
            "angular grid {cols}x{rows} must have odd counts on both axes"
        )));
    }
    Ok(Manifest { rows, cols, pattern, gt_disparity: gt, dir })
}

impl Manifest {
    pub fn view_path(&self, row: usize, col: usize) -> Result<PathBuf> {
        let name = format_pattern(&self.pattern, row, col)?;
        Ok(self.dir.join(name))
    }

    pub fn gt_path(&self) -> Option<PathBuf> {
        self.gt_disparity.as_ref().map(|p| self.dir.join(p))
    }

    pub fn load_views(&self) -> Result<LightField> {
        let mut views = Vec::with_capacity(self.rows * self.cols);
        for row in 0..self.rows {
            for col in 0..self.cols {
                let path = self.view_path(row, col)?;
                if !path.exists() {
                    return Err(Error::View {
                        row,
                        col,
                        msg: format!("missing file {}", path.display()),
                    });
                }
                views.push(load_image(&path)?);
            }
        }
        LightField::new(self.rows, self.cols, views)
    }
}

/// Loads a light field from a manifest file.
pub fn load_lightfield(manifest_path: &Path) -> Result<LightField> {
    parse_manifest(manifest_path)?.load_views()
}

/// Expands a printf-style pattern with exactly two integer directives
/// (`%d` or zero-padded `%0Nd`); the first receives the row, the second the
/// column. `%%` escapes a literal percent sign.
pub fn format_pattern(pattern: &str, row: usize, col: usize) -> Result<String> {
    let mut out = String::with_capacity(pattern.len() + 8);
    let mut args = [row, col].into_iter();
    let mut chars = pattern.chars().peekable();
    while let Some(ch) = chars.next() {
        if ch != '%' {
            out.push(ch);
            continue;
        }
        match chars.peek() {
            Some('%') => {
                chars.next();
                out.push('%');
            }
            _ => {
                let mut width = String::new();
                while let Some(c) = chars.peek() {
                    if c.is_ascii_digit() {
                        width.push(*c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                match chars.next() {
                    Some('d') => {
                        let arg = args.next().ok_or_else(|| {
                            Error::Manifest(format!(
                                "pattern {pattern:?} has more than two integer directives"
                            ))
                        })?;
                        let w: usize = if width.is_empty() { 0 } else { width.parse().unwrap() };
                        out.push_str(&format!("{arg:0w$}"));
                    }
                    other => {
                        return Err(Error::Manifest(format!(
                            "pattern {pattern:?}: unsupported directive %{}{}",
                            width,
                            other.map(String::from).unwrap_or_default()
                        )))
                    }
                }
            }
        }
    }
    if args.next().is_some() {
        return Err(Error::Manifest(format!(
            "pattern {pattern:?} must contain two integer directives (row, col)"
        )));
    }
    Ok(out)
}

/// Reads an 8- or 16-bit PNG or PPM/PGM into normalized radiance.
pub fn load_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    use image::DynamicImage::*;
    let (channels, data): (usize, Vec<f32>) = match img {
        ImageLuma8(b) => (1, b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect()),
        ImageLuma16(b) => (1, b.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()),
        ImageRgb8(b) => (3, b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect()),
        ImageRgb16(b) => (3, b.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()),
        other => {
            // Alpha or exotic layouts: flatten to 8-bit RGB and drop alpha.
            let b = other.to_rgb8();
            (3, b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect())
        }
    };
    Ok(Image::new(h, w, channels, data))
}
