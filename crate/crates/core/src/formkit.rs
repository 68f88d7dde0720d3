//! Collection forms: printable pages with one prompt and one empty box per
//! sentence, four corner fiducials, and the descriptor needed to cut the
//! handwritten lines back out of a scan.
//!
//! Pixel coordinates here are continuous: pixel `(i, j)` covers
//! `[i, i+1) × [j, j+1)`, so a page rendered at `s` px/mm maps millimeters
//! to pixels by a pure scale.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::components::{ink_mask, label_components};
use crate::imaging::to_grayscale;
use crate::raster::{Raster, Rect};
use crate::synth::{render_line, GlyphAtlas, SynthError};
use crate::textnorm::GroundTruth;

pub const MM_PER_INCH: f64 = 25.4;
/// Side of the square fiducial marks.
pub const FIDUCIAL_MM: f64 = 5.0;
/// Fraction of each slot dimension trimmed on every side when cropping.
pub const INSET_FRACTION: f64 = 0.02;
pub const MAX_RESIDUAL_PX: f64 = 5.0;

#[derive(Debug, Error)]
pub enum FormError {
    #[error("no sentences given")]
    NoSentences,
    #[error("{given} sentences exceed the page capacity of {capacity}")]
    CapacityExceeded { given: usize, capacity: usize },
    #[error("invalid template: {0}")]
    BadTemplate(String),
    #[error("found {found} fiducials, need at least 3")]
    FiducialsNotFound { found: usize },
    #[error("fiducial fit residual {residual_px:.2} px exceeds {MAX_RESIDUAL_PX} px")]
    PoorFit { residual_px: f64 },
    #[error("slot {slot_id} maps outside the scan")]
    SlotOutOfBounds { slot_id: u32 },
    #[error("prompt rendering: {0}")]
    Prompt(#[from] SynthError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Center of a fiducial mark, in mm from the top-left page corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fiducial {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotBox {
    pub slot_id: u32,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub prompt: String,
}

impl SlotBox {
    /// Slot interior after trimming [`INSET_FRACTION`] from every side.
    pub fn inset(&self) -> [f64; 4] {
        let (dx, dy) = (self.w * INSET_FRACTION, self.h * INSET_FRACTION);
        [self.x + dx, self.y + dy, self.w - 2.0 * dx, self.h - 2.0 * dy]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateDescriptor {
    pub template_id: String,
    /// Page width and height in mm.
    pub page_mm: [f64; 2],
    pub fiducials: Vec<Fiducial>,
    pub slots: Vec<SlotBox>,
}

/// Corner quadrant index: 0 top-left, 1 top-right, 2 bottom-left,
/// 3 bottom-right.
fn quadrant(x: f64, y: f64, w: f64, h: f64) -> usize {
    (x >= w / 2.0) as usize + 2 * (y >= h / 2.0) as usize
}

impl TemplateDescriptor {
    pub fn validate(&self) -> Result<(), FormError> {
        let bad = |m: String| Err(FormError::BadTemplate(m));
        let [pw, ph] = self.page_mm;
        if !(pw > 0.0 && ph > 0.0 && pw.is_finite() && ph.is_finite()) {
            return bad(format!("page size {pw}x{ph}"));
        }
        if self.fiducials.len() != 4 {
            return bad(format!("{} fiducials, expected 4", self.fiducials.len()));
        }
        let mut seen = [false; 4];
        for f in &self.fiducials {
            if !(f.x > 0.0 && f.x < pw && f.y > 0.0 && f.y < ph) {
                return bad(format!("fiducial ({}, {}) off the page", f.x, f.y));
            }
            let q = quadrant(f.x, f.y, pw, ph);
            if std::mem::replace(&mut seen[q], true) {
                return bad("two fiducials in one corner region".into());
            }
        }
        for (i, s) in self.slots.iter().enumerate() {
            if !(s.w > 0.0 && s.h > 0.0 && s.x.is_finite() && s.y.is_finite()) {
                return bad(format!("slot {} has empty area", s.slot_id));
            }
            if s.x < 0.0 || s.y < 0.0 || s.x + s.w > pw || s.y + s.h > ph {
                return bad(format!("slot {} leaves the page", s.slot_id));
            }
            for t in &self.slots[..i] {
                if t.slot_id == s.slot_id {
                    return bad(format!("duplicate slot id {}", s.slot_id));
                }
                let overlap = s.x < t.x + t.w && t.x < s.x + s.w && s.y < t.y + t.h && t.y < s.y + s.h;
                if overlap {
                    return bad(format!("slots {} and {} overlap", t.slot_id, s.slot_id));
                }
            }
            if i > 0 && s.y < self.slots[i - 1].y {
                return bad(format!("slot {} is out of reading order", s.slot_id));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, FormError> {
        let t: TemplateDescriptor = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }
}

/// Page geometry for [`render_template`]. All lengths in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct FormLayout {
    pub template_id: String,
    pub page_mm: [f64; 2],
    pub dpi: f64,
    pub capacity: usize,
    /// Distance of fiducial centers from the page edges.
    pub fiducial_offset: f64,
    pub slot_x: f64,
    pub slot_w: f64,
    pub slot_h: f64,
    pub prompt_h: f64,
    /// Space between the prompt and its box.
    pub prompt_gap: f64,
    /// Top of the first prompt.
    pub top: f64,
    pub pitch: f64,
    pub border: f64,
}

impl Default for FormLayout {
    fn default() -> Self {
        Self {
            template_id: "form-v1".into(),
            page_mm: [210.0, 297.0],
            dpi: 300.0,
            capacity: 20,
            fiducial_offset: 10.0,
            slot_x: 20.0,
            slot_w: 170.0,
            slot_h: 8.0,
            prompt_h: 3.5,
            prompt_gap: 0.8,
            top: 20.0,
            pitch: 12.8,
            border: 0.3,
        }
    }
}

fn fill_mm(page: &mut Raster, scale: f64, x0: f64, y0: f64, x1: f64, y1: f64, v: u8) {
    let px = |mm: f64, lim: usize| ((mm * scale).round().max(0.0) as usize).min(lim);
    let (w, h) = (page.width(), page.height());
    for y in px(y0, h)..px(y1, h) {
        for x in px(x0, w)..px(x1, w) {
            page.set(x, y, v);
        }
    }
}

/// Renders one page (white paper, black ink) plus its descriptor. Prompts
/// are drawn with `atlas`, right-aligned above each box.
pub fn render_template(
    sentences: &[GroundTruth],
    layout: &FormLayout,
    atlas: &GlyphAtlas,
) -> Result<(Raster, TemplateDescriptor), FormError> {
    if sentences.is_empty() {
        return Err(FormError::NoSentences);
    }
    if sentences.len() > layout.capacity {
        return Err(FormError::CapacityExceeded {
            given: sentences.len(),
            capacity: layout.capacity,
        });
    }
    let [pw, ph] = layout.page_mm;
    let off = layout.fiducial_offset;
    let fiducials = vec![
        Fiducial { x: off, y: off },
        Fiducial { x: pw - off, y: off },
        Fiducial { x: off, y: ph - off },
        Fiducial { x: pw - off, y: ph - off },
    ];
    let slots: Vec<SlotBox> = sentences
        .iter()
        .enumerate()
        .map(|(i, s)| SlotBox {
            slot_id: i as u32 + 1,
            x: layout.slot_x,
            y: layout.top + i as f64 * layout.pitch + layout.prompt_h + layout.prompt_gap,
            w: layout.slot_w,
            h: layout.slot_h,
            prompt: s.as_str().to_string(),
        })
        .collect();
    let tpl = TemplateDescriptor {
        template_id: layout.template_id.clone(),
        page_mm: layout.page_mm,
        fiducials,
        slots,
    };
    tpl.validate()?;

    let s = layout.dpi / MM_PER_INCH;
    let mut page = Raster::filled((pw * s).round() as usize, (ph * s).round() as usize, 255);
    let half = FIDUCIAL_MM / 2.0;
    for f in &tpl.fiducials {
        fill_mm(&mut page, s, f.x - half, f.y - half, f.x + half, f.y + half, 0);
    }
    let b = layout.border;
    for (slot, text) in tpl.slots.iter().zip(sentences) {
        let (x0, y0, x1, y1) = (slot.x, slot.y, slot.x + slot.w, slot.y + slot.h);
        fill_mm(&mut page, s, x0 - b, y0 - b, x1 + b, y0, 0);
        fill_mm(&mut page, s, x0 - b, y1, x1 + b, y1 + b, 0);
        fill_mm(&mut page, s, x0 - b, y0, x0, y1, 0);
        fill_mm(&mut page, s, x1, y0, x1 + b, y1, 0);

        let line = render_line(text, atlas)?.image;
        let target_h = layout.prompt_h * s;
        let k = (target_h / line.height() as f64).min(slot.w * s / line.width() as f64);
        let (lw, lh) = (
            ((line.width() as f64 * k).round() as usize).max(1),
            ((line.height() as f64 * k).round() as usize).max(1),
        );
        let right = (x1 * s).round() as i64;
        let top = ((slot.y - layout.prompt_gap - layout.prompt_h) * s).round() as i64;
        for y in 0..lh {
            for x in 0..lw {
                let sx = ((x as f64 / k) as usize).min(line.width() - 1);
                let sy = ((y as f64 / k) as usize).min(line.height() - 1);
                if line.get(sx, sy) == 0 {
                    let (px, py) = (right - lw as i64 + x as i64, top + y as i64);
                    if px >= 0 && py >= 0 && (px as usize) < page.width() && (py as usize) < page.height() {
                        page.set(px as usize, py as usize, 0);
                    }
                }
            }
        }
    }
    Ok((page, tpl))
}

/// Fitted map from template millimeters to scan pixels:
/// `px = a·x + b·y + c`, `py = d·x + e·y + f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRegistration {
    pub dpi: f64,
    pub affine: [f64; 6],
    pub residual_px: f64,
}

impl ScanRegistration {
    /// Registration of an unshifted scan at a known resolution, for forms
    /// without fiducials.
    pub fn fixed(dpi: f64) -> Self {
        let s = dpi / MM_PER_INCH;
        Self {
            dpi,
            affine: [s, 0.0, 0.0, 0.0, s, 0.0],
            residual_px: 0.0,
        }
    }

    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let [a, b, c, d, e, f] = self.affine;
        (a * x + b * y + c, d * x + e * y + f)
    }
}

/// Solves the 3×3 system `m · v = r` by Cramer's rule.
fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(m);
    if d.abs() < 1e-12 {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut mk = m;
        for i in 0..3 {
            mk[i][k] = r[i];
        }
        *o = det(mk) / d;
    }
    Some(out)
}

/// Least-squares affine map taking `src` points onto `dst`, and the mean
/// Euclidean residual.
pub fn fit_affine(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Option<([f64; 6], f64)> {
    if src.len() < 3 || src.len() != dst.len() {
        return None;
    }
    let mut ata = [[0.0; 3]; 3];
    let (mut bx, mut by) = ([0.0; 3], [0.0; 3]);
    for (&(x, y), &(u, v)) in src.iter().zip(dst) {
        let row = [x, y, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            bx[i] += row[i] * u;
            by[i] += row[i] * v;
        }
    }
    let [a, b, c] = solve3(ata, bx)?;
    let [d, e, f] = solve3(ata, by)?;
    let m = [a, b, c, d, e, f];
    if (a * e - b * d).abs() < 1e-12 {
        return None;
    }
    let residual = src
        .iter()
        .zip(dst)
        .map(|(&(x, y), &(u, v))| (a * x + b * y + c - u).hypot(d * x + e * y + f - v))
        .sum::<f64>()
        / src.len() as f64;
    Some((m, residual))
}

/// Centroids (continuous pixel coordinates) of the detected fiducials,
/// indexed like `tpl.fiducials`; `None` where a corner had no candidate.
pub fn detect_fiducials(scan: &Raster, tpl: &TemplateDescriptor) -> Vec<Option<(f64, f64)>> {
    let gray;
    let scan = if scan.is_gray() {
        scan
    } else {
        gray = to_grayscale(scan);
        &gray
    };
    let (w, h) = (scan.width(), scan.height());
    let labels = label_components(&ink_mask(scan, false), w, h);
    let px_per_mm = w as f64 / tpl.page_mm[0];
    let expected_area = (FIDUCIAL_MM * px_per_mm).powi(2);
    let mut best: [Option<(usize, (f64, f64))>; 4] = [None; 4];
    for c in &labels.components {
        let b = c.bbox;
        let q0 = quadrant(b.x as f64, b.y as f64, w as f64, h as f64);
        let q1 = quadrant((b.right() - 1) as f64, (b.bottom() - 1) as f64, w as f64, h as f64);
        let aspect = b.w as f64 / b.h as f64;
        let area = c.area as f64;
        if q0 != q1
            || c.fill_ratio() < 0.7
            || !(0.5..=2.0).contains(&aspect)
            || !(0.25 * expected_area..=4.0 * expected_area).contains(&area)
        {
            continue;
        }
        if best[q0].map_or(true, |(a, _)| c.area > a) {
            best[q0] = Some((c.area, (c.centroid.0 + 0.5, c.centroid.1 + 0.5)));
        }
    }
    let [pw, ph] = tpl.page_mm;
    tpl.fiducials
        .iter()
        .map(|f| best[quadrant(f.x, f.y, pw, ph)].map(|(_, p)| p))
        .collect()
}

/// Locates the fiducials in `scan` and fits the template-to-scan map.
pub fn register_scan(scan: &Raster, tpl: &TemplateDescriptor) -> Result<ScanRegistration, FormError> {
    tpl.validate()?;
    let found = detect_fiducials(scan, tpl);
    let (src, dst): (Vec<_>, Vec<_>) = tpl
        .fiducials
        .iter()
        .zip(&found)
        .filter_map(|(f, p)| p.map(|p| ((f.x, f.y), p)))
        .unzip();
    if src.len() < 3 {
        return Err(FormError::FiducialsNotFound { found: src.len() });
    }
    let (affine, residual_px) = fit_affine(&src, &dst).ok_or(FormError::FiducialsNotFound { found: src.len() })?;
    if residual_px > MAX_RESIDUAL_PX {
        return Err(FormError::PoorFit { residual_px });
    }
    let [a, b, _, d, e, _] = affine;
    let scale = ((a * e - b * d).abs()).sqrt();
    Ok(ScanRegistration {
        dpi: scale * MM_PER_INCH,
        affine,
        residual_px,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotCrop {
    pub slot_id: u32,
    /// Bounding box of the mapped slot interior in scan pixels.
    pub rect: Rect,
    /// Slot interior resampled into template orientation.
    pub image: Raster,
}

/// Pixel rectangle covering the mapped inset interior of `slot`.
pub fn mapped_rect(slot: &SlotBox, reg: &ScanRegistration) -> Rect {
    let [x, y, w, h] = slot.inset();
    let pts = [reg.map(x, y), reg.map(x + w, y), reg.map(x, y + h), reg.map(x + w, y + h)];
    let min_x = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).round() as i64;
    let max_x = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).round() as i64;
    let min_y = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).round() as i64;
    let max_y = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).round() as i64;
    Rect::new(min_x, min_y, max_x - min_x, max_y - min_y)
}

/// One crop per slot in template order, or an error; never a partial list.
pub fn extract_boxes(
    scan: &Raster,
    tpl: &TemplateDescriptor,
    reg: &ScanRegistration,
) -> Result<Vec<SlotCrop>, FormError> {
    let gray;
    let scan = if scan.is_gray() {
        scan
    } else {
        gray = to_grayscale(scan);
        &gray
    };
    let [a, b, _, d, e, _] = reg.affine;
    let (sx, sy) = (a.hypot(d), b.hypot(e));
    let mut out = Vec::with_capacity(tpl.slots.len());
    for slot in &tpl.slots {
        let rect = mapped_rect(slot, reg);
        if rect.x < 0 || rect.y < 0 || rect.right() > scan.width() as i64 || rect.bottom() > scan.height() as i64 {
            return Err(FormError::SlotOutOfBounds { slot_id: slot.slot_id });
        }
        let [x0, y0, w, h] = slot.inset();
        let (ow, oh) = (((w * sx).round() as usize).max(1), ((h * sy).round() as usize).max(1));
        let image = Raster::from_gray_fn(ow, oh, |u, v| {
            let mx = x0 + (u as f64 + 0.5) * w / ow as f64;
            let my = y0 + (v as f64 + 0.5) * h / oh as f64;
            let (px, py) = reg.map(mx, my);
            let px = (px.floor().max(0.0) as usize).min(scan.width() - 1);
            let py = (py.floor().max(0.0) as usize).min(scan.height() - 1);
            scan.get(px, py)
        });
        out.push(SlotCrop {
            slot_id: slot.slot_id,
            rect,
            image,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{rotation_translation, warp_affine, SYRIAC_LETTERS};
    use crate::textnorm::normalize_text;

    fn sentences(n: usize) -> Vec<GroundTruth> {
        (0..n)
            .map(|i| {
                let a = SYRIAC_LETTERS[i % SYRIAC_LETTERS.len()];
                normalize_text(&format!("{a}\u{0712}\u{0713} \u{0717}{a}")).unwrap()
            })
            .collect()
    }

    fn low_dpi() -> FormLayout {
        FormLayout {
            dpi: 100.0,
            ..FormLayout::default()
        }
    }

    #[test]
    fn capacity_and_empty() {
        let atlas = GlyphAtlas::default_syriac();
        assert!(matches!(
            render_template(&sentences(21), &low_dpi(), &atlas),
            Err(FormError::CapacityExceeded { given: 21, capacity: 20 })
        ));
        assert!(matches!(render_template(&[], &low_dpi(), &atlas), Err(FormError::NoSentences)));
        let (_, one) = render_template(&sentences(1), &low_dpi(), &atlas).unwrap();
        assert_eq!(one.slots.len(), 1);
        assert_eq!(one.slots[0].slot_id, 1);
        let (page, full) = render_template(&sentences(20), &low_dpi(), &atlas).unwrap();
        assert_eq!(full.slots.len(), 20);
        assert_eq!((page.width(), page.height()), (827, 1169));
    }

    #[test]
    fn descriptor_json_round_trip() {
        let (_, tpl) = render_template(&sentences(20), &low_dpi(), &GlyphAtlas::default_syriac()).unwrap();
        let json = tpl.to_json();
        assert!(json.contains("\"page_mm\"") && json.contains("\"prompt\""));
        assert_eq!(TemplateDescriptor::from_json(&json).unwrap(), tpl);
    }

    #[test]
    fn validation_rejects_bad_descriptors() {
        let (_, tpl) = render_template(&sentences(3), &low_dpi(), &GlyphAtlas::default_syriac()).unwrap();
        let mut t = tpl.clone();
        t.fiducials.pop();
        assert!(t.validate().is_err());
        let mut t = tpl.clone();
        t.fiducials[1] = t.fiducials[0];
        assert!(t.validate().is_err());
        let mut t = tpl.clone();
        t.slots[1].y = t.slots[0].y + 1.0;
        assert!(t.validate().is_err());
        let mut t = tpl.clone();
        t.slots[2].slot_id = 1;
        assert!(t.validate().is_err());
        let mut t = tpl.clone();
        t.slots[0].w = 0.0;
        assert!(t.validate().is_err());
        let mut t = tpl;
        t.slots[2].x = 200.0;
        assert!(t.validate().is_err());
    }

    #[test]
    fn fit_affine_is_exact_on_three_points() {
        let m = [2.0, 0.1, 5.0, -0.2, 3.0, 7.0];
        let src = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let dst: Vec<_> = src.iter().map(|&(x, y)| (m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5])).collect();
        let (fit, res) = fit_affine(&src, &dst).unwrap();
        for (a, b) in fit.iter().zip(m) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(res < 1e-9);
        assert!(fit_affine(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)], &dst).is_none());
    }

    #[test]
    fn self_render_registers_as_pure_scale() {
        let (page, tpl) = render_template(&sentences(20), &low_dpi(), &GlyphAtlas::default_syriac()).unwrap();
        let reg = register_scan(&page, &tpl).unwrap();
        let s = 100.0 / MM_PER_INCH;
        assert!(reg.residual_px < 0.5, "{reg:?}");
        assert!((reg.affine[0] - s).abs() < 0.01 && (reg.affine[4] - s).abs() < 0.01);
        assert!(reg.affine[1].abs() < 0.01 && reg.affine[3].abs() < 0.01);
        assert!(reg.affine[2].abs() < 1.0 && reg.affine[5].abs() < 1.0);
        let crops = extract_boxes(&page, &tpl, &reg).unwrap();
        assert_eq!(crops.len(), 20);
        for c in &crops {
            assert!(c.image.dark_ratio() < 0.001, "slot {} not blank", c.slot_id);
        }
    }

    #[test]
    fn translation_is_equivariant() {
        let (page, tpl) = render_template(&sentences(5), &low_dpi(), &GlyphAtlas::default_syriac()).unwrap();
        let base = register_scan(&page, &tpl).unwrap();
        let moved = warp_affine(&page, rotation_translation(0.0, 0.0, 0.0, 13.0, -7.0), page.width(), page.height(), 255);
        let reg = register_scan(&moved, &tpl).unwrap();
        assert!((reg.affine[2] - base.affine[2] - 13.0).abs() <= 1.0);
        assert!((reg.affine[5] - base.affine[5] + 7.0).abs() <= 1.0);
    }

    #[test]
    fn blank_page_has_no_fiducials() {
        let (_, tpl) = render_template(&sentences(2), &low_dpi(), &GlyphAtlas::default_syriac()).unwrap();
        assert!(matches!(
            register_scan(&Raster::filled(827, 1169, 255), &tpl),
            Err(FormError::FiducialsNotFound { found: 0 })
        ));
    }

    #[test]
    fn slot_out_of_bounds() {
        let (page, tpl) = render_template(&sentences(2), &low_dpi(), &GlyphAtlas::default_syriac()).unwrap();
        let mut reg = ScanRegistration::fixed(100.0);
        reg.affine[2] = 500.0;
        assert!(matches!(
            extract_boxes(&page, &tpl, &reg),
            Err(FormError::SlotOutOfBounds { slot_id: 1 })
        ));
    }

    #[test]
    fn fixed_registration_matches_fiducial_fit() {
        let (page, tpl) = render_template(&sentences(4), &low_dpi(), &GlyphAtlas::default_syriac()).unwrap();
        let fixed = extract_boxes(&page, &tpl, &ScanRegistration::fixed(100.0)).unwrap();
        let fitted = extract_boxes(&page, &tpl, &register_scan(&page, &tpl).unwrap()).unwrap();
        for (a, b) in fixed.iter().zip(&fitted) {
            assert!((a.rect.x - b.rect.x).abs() <= 1 && (a.rect.y - b.rect.y).abs() <= 1);
        }
    }

    #[test]
    fn sentence_file_prompt_text_is_kept() {
        let s = sentences(3);
        let (_, tpl) = render_template(&s, &low_dpi(), &GlyphAtlas::default_syriac()).unwrap();
        for (slot, gt) in tpl.slots.iter().zip(&s) {
            assert_eq!(slot.prompt, gt.as_str());
        }
    }
}
