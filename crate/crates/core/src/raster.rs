//! 8-bit raster images and PNG I/O.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid raster geometry {width}x{height}x{channels} for buffer of {len} bytes")]
    Geometry {
        width: usize,
        height: usize,
        channels: usize,
        len: usize,
    },
    #[error("unsupported channel count {0}")]
    Channels(usize),
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Row-major 8-bit image with one (gray) or three (RGB) channels.
#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Raster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

/// Integer pixel rectangle, `x`/`y` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl Rect {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> i64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> i64 {
        self.y + self.h
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x < other.right()
            && other.x < self.right()
            && self.y < other.bottom()
            && other.y < self.bottom()
    }
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<u8>,
    ) -> Result<Self, RasterError> {
        if channels != 1 && channels != 3 {
            return Err(RasterError::Channels(channels));
        }
        if width == 0 || height == 0 || pixels.len() != width * height * channels {
            return Err(RasterError::Geometry {
                width,
                height,
                channels,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Single-channel image filled with `value`.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        Self {
            width,
            height,
            channels: 1,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_gray_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut img = Self::filled(width, height, 0);
        for y in 0..height {
            for x in 0..width {
                img.pixels[y * width + x] = f(x, y);
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn is_gray(&self) -> bool {
        self.channels == 1
    }

    /// Sample of a single-channel image. Panics when out of range.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        debug_assert!(self.channels == 1);
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        debug_assert!(self.channels == 1);
        self.pixels[y * self.width + x] = v;
    }

    /// Copy of the sub-rectangle clipped to the image. Returns `None` when
    /// the clipped region is empty.
    pub fn crop(&self, rect: Rect) -> Option<Raster> {
        let x0 = rect.x.max(0) as usize;
        let y0 = rect.y.max(0) as usize;
        let x1 = (rect.right().max(0) as usize).min(self.width);
        let y1 = (rect.bottom().max(0) as usize).min(self.height);
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        let c = self.channels;
        let mut out = Vec::with_capacity((x1 - x0) * (y1 - y0) * c);
        for y in y0..y1 {
            let row = (y * self.width + x0) * c;
            out.extend_from_slice(&self.pixels[row..row + (x1 - x0) * c]);
        }
        Some(Raster {
            width: x1 - x0,
            height: y1 - y0,
            channels: c,
            pixels: out,
        })
    }

    /// Fraction of single-channel pixels that are dark (≤ 127).
    pub fn dark_ratio(&self) -> f64 {
        let dark = self.pixels.iter().filter(|&&v| v <= 127).count();
        dark as f64 / self.pixels.len() as f64
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Raster, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?;
        let r = Self::from_dynamic(img);
        if r.width == 0 || r.height == 0 {
            return Err(RasterError::Geometry {
                width: r.width,
                height: r.height,
                channels: r.channels,
                len: r.pixels.len(),
            });
        }
        Ok(r)
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Raster, RasterError> {
        let bytes = std::fs::read(path)?;
        Self::decode_png(&bytes)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, RasterError> {
        let mut buf = Cursor::new(Vec::new());
        let dynamic = match self.channels {
            1 => DynamicImage::ImageLuma8(
                GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
                    .expect("buffer length checked at construction"),
            ),
            _ => DynamicImage::ImageRgb8(
                RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
                    .expect("buffer length checked at construction"),
            ),
        };
        dynamic.write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    fn from_dynamic(img: DynamicImage) -> Raster {
        // Alpha and 16-bit inputs are flattened; gray stays gray.
        match img {
            DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                Raster {
                    width: w as usize,
                    height: h as usize,
                    channels: 1,
                    pixels: g.into_raw(),
                }
            }
            DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
                let g = img.to_luma8();
                let (w, h) = g.dimensions();
                Raster {
                    width: w as usize,
                    height: h as usize,
                    channels: 1,
                    pixels: g.into_raw(),
                }
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                Raster {
                    width: w as usize,
                    height: h as usize,
                    channels: 3,
                    pixels: rgb.into_raw(),
                }
            }
        }
    }
}
