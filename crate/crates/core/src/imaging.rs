//! Pixel-level preprocessing: grayscale conversion, box-filter blur,
//! global thresholding and fixed-geometry line normalization.
//!
//! Every function here is pure; distinct images may be processed in
//! parallel.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Raster;

/// Default box-filter size (4×4, weights 1/16).
pub const DEFAULT_BLUR_K: usize = 4;
/// Default global threshold.
pub const DEFAULT_THRESHOLD: u8 = 127;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImagingError {
    #[error("kernel size must be at least 1")]
    BadKernel,
    #[error("expected a single-channel image, got {0} channels")]
    NotGray(usize),
}

/// Uniform k×k averaging kernel; every coefficient is 1/k².
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlurKernel {
    size: usize,
}

impl BlurKernel {
    pub fn new(size: usize) -> Result<Self, ImagingError> {
        if size == 0 {
            return Err(ImagingError::BadKernel);
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Offset of the first window row/column relative to the output pixel.
    /// Odd sizes are centred; even sizes put the extra cell before the pixel,
    /// so k = 4 spans `[x-2, x+1]`.
    pub fn anchor(&self) -> usize {
        self.size / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    #[default]
    Right,
    Left,
    Center,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineGeometry {
    pub target_width: usize,
    pub target_height: usize,
    pub background: u8,
    pub alignment: Alignment,
}

impl Default for LineGeometry {
    fn default() -> Self {
        Self {
            target_width: 1200,
            target_height: 110,
            background: 255,
            alignment: Alignment::Right,
        }
    }
}

/// BT.601 luma. Single-channel input is returned unchanged.
pub fn to_grayscale(img: &Raster) -> Raster {
    if img.is_gray() {
        return img.clone();
    }
    let px: Vec<u8> = img
        .pixels()
        .chunks_exact(3)
        .map(|c| {
            let y = 0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Raster::new(img.width(), img.height(), 1, px).expect("same geometry")
}

/// Normalized box filter with edge replication. Each output pixel is the
/// window mean rounded half-up.
pub fn box_blur(img: &Raster, k: usize) -> Result<Raster, ImagingError> {
    let kernel = BlurKernel::new(k)?;
    if !img.is_gray() {
        return Err(ImagingError::NotGray(img.channels()));
    }
    if k == 1 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let a = kernel.anchor();

    // Integral image over the replicated-border padding.
    let pw = w + k - 1;
    let ph = h + k - 1;
    let mut integral = vec![0u64; (pw + 1) * (ph + 1)];
    for py in 0..ph {
        let sy = (py as isize - a as isize).clamp(0, h as isize - 1) as usize;
        let mut row_sum = 0u64;
        for px in 0..pw {
            let sx = (px as isize - a as isize).clamp(0, w as isize - 1) as usize;
            row_sum += img.get(sx, sy) as u64;
            integral[(py + 1) * (pw + 1) + px + 1] = integral[py * (pw + 1) + px + 1] + row_sum;
        }
    }

    let area = (k * k) as u64;
    let mut out = Raster::filled(w, h, 0);
    for y in 0..h {
        for x in 0..w {
            // Padded coordinates of the window are [x, x+k) × [y, y+k).
            let s = integral[(y + k) * (pw + 1) + x + k] + integral[y * (pw + 1) + x]
                - integral[y * (pw + 1) + x + k]
                - integral[(y + k) * (pw + 1) + x];
            out.set(x, y, ((2 * s + area) / (2 * area)) as u8);
        }
    }
    Ok(out)
}

/// Global threshold: 1 where `f > t`, 0 where `f <= t`. The result holds the
/// logical values {0, 1}; see [`expand_binary`] for the stored form.
pub fn threshold(img: &Raster, t: u8) -> Result<Raster, ImagingError> {
    if !img.is_gray() {
        return Err(ImagingError::NotGray(img.channels()));
    }
    let px = img.pixels().iter().map(|&f| u8::from(f > t)).collect();
    Ok(Raster::new(img.width(), img.height(), 1, px).expect("same geometry"))
}

/// Maps logical {0, 1} to stored {0, 255}.
pub fn expand_binary(img: &Raster) -> Raster {
    let px = img.pixels().iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
    Raster::new(img.width(), img.height(), img.channels(), px).expect("same geometry")
}

/// Swaps foreground and background of a logical {0, 1} image.
pub fn invert_binary(img: &Raster) -> Raster {
    let px = img.pixels().iter().map(|&v| u8::from(v == 0)).collect();
    Raster::new(img.width(), img.height(), img.channels(), px).expect("same geometry")
}

/// Scales content by `min(tw/w, th/h)` with nearest-neighbour sampling and
/// pads with the background value to exactly the target geometry.
pub fn normalize_line(img: &Raster, geom: &LineGeometry) -> Result<Raster, ImagingError> {
    if !img.is_gray() {
        return Err(ImagingError::NotGray(img.channels()));
    }
    let (w, h) = (img.width(), img.height());
    let (tw, th) = (geom.target_width, geom.target_height);
    let s = f64::min(tw as f64 / w as f64, th as f64 / h as f64);
    let sw = ((w as f64 * s).round() as usize).clamp(1, tw);
    let sh = ((h as f64 * s).round() as usize).clamp(1, th);

    let pad_x = tw - sw;
    let left = match geom.alignment {
        Alignment::Right => pad_x,
        Alignment::Left => 0,
        Alignment::Center => pad_x / 2,
    };
    // Extra row goes to the bottom.
    let top = (th - sh) / 2;

    let mut out = Raster::filled(tw, th, geom.background);
    for y in 0..sh {
        let sy = (((y as f64 + 0.5) / s) as usize).min(h - 1);
        for x in 0..sw {
            let sx = (((x as f64 + 0.5) / s) as usize).min(w - 1);
            out.set(left + x, top + y, img.get(sx, sy));
        }
    }
    Ok(out)
}

/// Parameters of the full line preprocessing chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessParams {
    pub blur_k: usize,
    pub threshold: u8,
    pub invert: bool,
    pub normalize: Option<LineGeometry>,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        Self {
            blur_k: DEFAULT_BLUR_K,
            threshold: DEFAULT_THRESHOLD,
            invert: false,
            normalize: None,
        }
    }
}

/// grayscale → blur → threshold → (invert) → (normalize). Output is stored
/// binary {0, 255}. When inverted, normalization pads with 0 so the padding
/// stays background.
pub fn preprocess(img: &Raster, params: &PreprocessParams) -> Result<Raster, ImagingError> {
    let gray = to_grayscale(img);
    let blurred = box_blur(&gray, params.blur_k)?;
    let mut bin = threshold(&blurred, params.threshold)?;
    if params.invert {
        bin = invert_binary(&bin);
    }
    let bin = expand_binary(&bin);
    match params.normalize {
        Some(mut geom) => {
            geom.background = if params.invert { 0 } else { 255 };
            normalize_line(&bin, &geom)
        }
        None => Ok(bin),
    }
}
