//! 8-connected component labelling over a foreground mask.

use crate::raster::{Raster, Rect};

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Label value in [`Labels::labels`], starting at 1.
    pub label: u32,
    pub bbox: Rect,
    pub area: usize,
    pub centroid: (f64, f64),
}

impl Component {
    /// Foreground pixels over bounding-box area.
    pub fn fill_ratio(&self) -> f64 {
        self.area as f64 / (self.bbox.w * self.bbox.h) as f64
    }
}

#[derive(Debug, Clone)]
pub struct Labels {
    pub width: usize,
    pub height: usize,
    /// 0 = background.
    pub labels: Vec<u32>,
    pub components: Vec<Component>,
}

impl Labels {
    pub fn label_at(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }
}

/// Foreground where the pixel is dark (≤ 127), or bright when `bright_ink`.
pub fn ink_mask(img: &Raster, bright_ink: bool) -> Vec<bool> {
    img.pixels()
        .iter()
        .map(|&v| if bright_ink { v > 127 } else { v <= 127 })
        .collect()
}

/// Mask with the minority level as ink, so either polarity of a binary
/// image yields the written strokes.
pub fn auto_ink_mask(img: &Raster) -> Vec<bool> {
    ink_mask(img, img.dark_ratio() > 0.5)
}

/// Labels components in scan order (first pixel top-to-bottom,
/// left-to-right).
pub fn label_components(mask: &[bool], width: usize, height: usize) -> Labels {
    assert_eq!(mask.len(), width * height);
    let mut labels = vec![0u32; mask.len()];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        let label = components.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let (mut area, mut sx, mut sy) = (0usize, 0f64, 0f64);
        while let Some(p) = stack.pop() {
            let (x, y) = (p % width, p / width);
            area += 1;
            sx += x as f64;
            sy += y as f64;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let q = ny as usize * width + nx as usize;
                    if mask[q] && labels[q] == 0 {
                        labels[q] = label;
                        stack.push(q);
                    }
                }
            }
        }
        components.push(Component {
            label,
            bbox: Rect::new(x0 as i64, y0 as i64, (x1 - x0 + 1) as i64, (y1 - y0 + 1) as i64),
            area,
            centroid: (sx / area as f64, sy / area as f64),
        });
    }
    Labels {
        width,
        height,
        labels,
        components,
    }
}
