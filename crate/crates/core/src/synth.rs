//! Deterministic synthetic line images with known glyph geometry, and
//! seeded degradations.
//!
//! Glyphs are abstract box-drawn bitmaps mapped onto Syriac letters. Each
//! glyph is a single connected component (a frame with filled cells), so
//! the reference recognizer can segment lines by connected components.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{box_blur, ImagingError};
use crate::raster::{Raster, RasterError, Rect};
use crate::rng::SplitMix64;
use crate::textnorm::{normalize_text, GroundTruth};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("no glyph for U+{:04X}", *.0 as u32)]
    MissingGlyph(char),
    #[error("invalid atlas: {0}")]
    BadAtlas(&'static str),
    #[error("corpus of {0} lines exceeds the id space")]
    TooManyLines(usize),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("ground truth of {0}: {1}")]
    GroundTruth(String, crate::textnorm::TextError),
}

/// The 22 letters of the Syriac alphabet.
pub const SYRIAC_LETTERS: [char; 22] = [
    '\u{0710}', '\u{0712}', '\u{0713}', '\u{0715}', '\u{0717}', '\u{0718}', '\u{0719}', '\u{071A}',
    '\u{071B}', '\u{071D}', '\u{071F}', '\u{0720}', '\u{0721}', '\u{0722}', '\u{0723}', '\u{0725}',
    '\u{0726}', '\u{0728}', '\u{0729}', '\u{072A}', '\u{072B}', '\u{072C}',
];

/// Codepoint → binary bitmap (logical 1 = ink), plus spacing.
#[derive(Debug, Clone)]
pub struct GlyphAtlas {
    glyphs: BTreeMap<char, Raster>,
    pub glyph_gap: usize,
    pub word_gap: usize,
    /// Blank border around the rendered line on every side.
    pub margin: usize,
}

impl GlyphAtlas {
    pub fn new(
        glyphs: BTreeMap<char, Raster>,
        glyph_gap: usize,
        word_gap: usize,
        margin: usize,
    ) -> Result<Self, SynthError> {
        if glyphs.is_empty() {
            return Err(SynthError::BadAtlas("no glyphs"));
        }
        if word_gap <= glyph_gap {
            return Err(SynthError::BadAtlas("word gap must exceed glyph gap"));
        }
        for g in glyphs.values() {
            if !g.is_gray() || !g.pixels().iter().any(|&v| v != 0) {
                return Err(SynthError::BadAtlas("glyph bitmaps must be non-empty single-channel"));
            }
        }
        Ok(Self {
            glyphs,
            glyph_gap,
            word_gap,
            margin,
        })
    }

    /// 24×32 box glyphs for the Syriac letters, gaps 4/16 px.
    pub fn default_syriac() -> Self {
        Self::box_glyphs(&SYRIAC_LETTERS, 24, 32)
    }

    /// Frame-and-cells glyphs: a 3 px frame enclosing a 2×3 grid of cells,
    /// each filled or empty per an even-parity 6-bit code, so any two glyphs
    /// differ in at least two cells.
    pub fn box_glyphs(codepoints: &[char], width: usize, height: usize) -> Self {
        let codes: Vec<u32> = (0u32..64).filter(|c| c.count_ones() % 2 == 0).collect();
        assert!(codepoints.len() <= codes.len(), "at most 32 box glyphs");
        assert!(width >= 10 && height >= 12);
        let t = 3;
        let (iw, ih) = (width - 2 * t, height - 2 * t);
        let col_edges = [t, t + iw / 2, t + iw];
        let row_edges = [t, t + ih / 3, t + 2 * ih / 3 + (ih % 3 == 2) as usize, t + ih];
        let glyphs = codepoints
            .iter()
            .zip(&codes)
            .map(|(&cp, &code)| {
                let bmp = Raster::from_gray_fn(width, height, |x, y| {
                    if x < t || y < t || x >= width - t || y >= height - t {
                        return 1;
                    }
                    let col = usize::from(x >= col_edges[1]);
                    let row = (y >= row_edges[1]) as usize + (y >= row_edges[2]) as usize;
                    ((code >> (row * 2 + col)) & 1) as u8
                });
                (cp, bmp)
            })
            .collect();
        Self::new(glyphs, 4, 16, 8).expect("built-in atlas is valid")
    }

    pub fn glyph(&self, c: char) -> Option<&Raster> {
        self.glyphs.get(&c)
    }

    pub fn codepoints(&self) -> impl Iterator<Item = char> + '_ {
        self.glyphs.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.glyphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glyphs.is_empty()
    }

    pub fn max_glyph_height(&self) -> usize {
        self.glyphs.values().map(|g| g.height()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlyphBox {
    pub codepoint: char,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedLine {
    /// Dark ink (0) on white (255).
    pub image: Raster,
    pub text: GroundTruth,
    /// One box per non-space codepoint, in text order.
    pub glyph_boxes: Vec<GlyphBox>,
}

/// Lays glyphs out right to left from the right margin, bottom-aligned.
pub fn render_line(text: &GroundTruth, atlas: &GlyphAtlas) -> Result<RenderedLine, SynthError> {
    let mut placed: Vec<(char, &Raster, i64)> = Vec::new();
    let mut cursor = 0i64; // distance from the right margin, growing leftwards
    let mut gap = 0usize;
    for c in text.as_str().chars() {
        if c == ' ' {
            gap = atlas.word_gap;
            continue;
        }
        let g = atlas.glyph(c).ok_or(SynthError::MissingGlyph(c))?;
        if !placed.is_empty() {
            cursor += gap.max(atlas.glyph_gap) as i64;
        }
        cursor += g.width() as i64;
        placed.push((c, g, cursor));
        gap = atlas.glyph_gap;
    }
    let m = atlas.margin as i64;
    let line_h = atlas.max_glyph_height() as i64;
    let width = (cursor + 2 * m).max(1) as usize;
    let height = (line_h + 2 * m) as usize;
    let mut image = Raster::filled(width, height, 255);
    let mut glyph_boxes = Vec::with_capacity(placed.len());
    for (c, g, left_offset) in placed {
        let x0 = width as i64 - m - left_offset;
        let y0 = m + line_h - g.height() as i64;
        for y in 0..g.height() {
            for x in 0..g.width() {
                if g.get(x, y) != 0 {
                    image.set((x0 + x as i64) as usize, (y0 + y as i64) as usize, 0);
                }
            }
        }
        glyph_boxes.push(GlyphBox {
            codepoint: c,
            rect: Rect::new(x0, y0, g.width() as i64, g.height() as i64),
        });
    }
    Ok(RenderedLine {
        image,
        text: text.clone(),
        glyph_boxes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegradeParams {
    /// Per-pixel flip probability.
    pub salt_pepper: f64,
    /// Box-blur kernel size; 1 disables blurring.
    pub blur_k: usize,
    /// Per-codepoint substitution probability.
    pub char_corrupt: f64,
    pub seed: u64,
}

impl Default for DegradeParams {
    fn default() -> Self {
        Self {
            salt_pepper: 0.0,
            blur_k: 1,
            char_corrupt: 0.0,
            seed: 0,
        }
    }
}

/// Replaces each codepoint (spaces included) with probability `p` by a
/// different atlas codepoint. Length is preserved.
pub fn corrupt_text(text: &GroundTruth, atlas: &GlyphAtlas, p: f64, rng: &mut SplitMix64) -> GroundTruth {
    let pool: Vec<char> = atlas.codepoints().collect();
    let out: String = text
        .as_str()
        .chars()
        .map(|c| substitute(c, &pool, p, rng))
        .collect();
    normalize_text(&out).expect("substitution never empties text")
}

/// Word-level variant: each word is replaced, with probability `p`, by a
/// same-length word whose every codepoint differs from the original.
pub fn corrupt_words(text: &GroundTruth, atlas: &GlyphAtlas, p: f64, rng: &mut SplitMix64) -> GroundTruth {
    let pool: Vec<char> = atlas.codepoints().collect();
    let words: Vec<String> = text
        .as_str()
        .split(' ')
        .map(|w| {
            if rng.next_f64() < p {
                w.chars().map(|c| substitute(c, &pool, 1.0, rng)).collect()
            } else {
                w.to_string()
            }
        })
        .collect();
    normalize_text(&words.join(" ")).expect("substitution never empties text")
}

fn substitute(c: char, pool: &[char], p: f64, rng: &mut SplitMix64) -> char {
    if rng.next_f64() >= p {
        return c;
    }
    let others: Vec<char> = pool.iter().copied().filter(|&o| o != c).collect();
    if others.is_empty() {
        return c;
    }
    others[rng.below(others.len())]
}

/// Text corruption (re-rendered), then blur, then salt-and-pepper flips.
pub fn degrade(
    line: &RenderedLine,
    atlas: &GlyphAtlas,
    params: &DegradeParams,
) -> Result<RenderedLine, SynthError> {
    let mut rng = SplitMix64::new(params.seed);
    let mut out = if params.char_corrupt > 0.0 {
        let text = corrupt_text(&line.text, atlas, params.char_corrupt, &mut rng);
        render_line(&text, atlas)?
    } else {
        line.clone()
    };
    if params.blur_k > 1 {
        out.image = box_blur(&out.image, params.blur_k)?;
    }
    if params.salt_pepper > 0.0 {
        salt_pepper(&mut out.image, params.salt_pepper, &mut rng);
    }
    Ok(out)
}

pub fn salt_pepper(img: &mut Raster, density: f64, rng: &mut SplitMix64) {
    for v in img.pixels_mut() {
        if rng.next_f64() < density {
            *v = 255 - *v;
        }
    }
}

/// Nearest-neighbour affine resampling of a grayscale image, used to
/// simulate scanner placement. `m = [a, b, c, d, e, f]` maps source to
/// destination: `x' = a·x + b·y + c`, `y' = d·x + e·y + f`.
pub fn warp_affine(img: &Raster, m: [f64; 6], width: usize, height: usize, fill: u8) -> Raster {
    let [a, b, c, d, e, f] = m;
    let det = a * e - b * d;
    assert!(det.abs() > 1e-12, "affine map must be invertible");
    let (ia, ib, id, ie) = (e / det, -b / det, -d / det, a / det);
    Raster::from_gray_fn(width, height, |x, y| {
        let (dx, dy) = (x as f64 + 0.5 - c, y as f64 + 0.5 - f);
        let sx = (ia * dx + ib * dy).floor();
        let sy = (id * dx + ie * dy).floor();
        if sx < 0.0 || sy < 0.0 || sx >= img.width() as f64 || sy >= img.height() as f64 {
            fill
        } else {
            img.get(sx as usize, sy as usize)
        }
    })
}

/// Rotation by `degrees` about `(cx, cy)` followed by a translation.
pub fn rotation_translation(degrees: f64, cx: f64, cy: f64, tx: f64, ty: f64) -> [f64; 6] {
    let (s, c) = degrees.to_radians().sin_cos();
    [c, -s, cx - c * cx + s * cy + tx, s, c, cy - s * cx - c * cy + ty]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusOptions {
    pub min_words: usize,
    pub max_words: usize,
    pub min_word_len: usize,
    pub max_word_len: usize,
    /// Lines per synthetic author before the author number advances.
    pub lines_per_author: usize,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            min_words: 3,
            max_words: 6,
            min_word_len: 2,
            max_word_len: 6,
            lines_per_author: 20,
        }
    }
}

/// Dataset-style id for the `index`-th synthetic line.
pub fn corpus_id(index: usize, lines_per_author: usize) -> Option<String> {
    let per_batch = 99 * lines_per_author;
    let batch = match index / per_batch {
        0 => 'a',
        1 => 'b',
        _ => return None,
    };
    let within = index % per_batch;
    let author = within / lines_per_author + 1;
    let seq = within % lines_per_author + 1;
    Some(format!("{batch}{author:02}_{seq:02}"))
}

/// Random word text for line `index`; line seeds are `seed + index`.
pub fn random_text(atlas: &GlyphAtlas, opts: &CorpusOptions, seed: u64) -> GroundTruth {
    let mut rng = SplitMix64::new(seed);
    let pool: Vec<char> = atlas.codepoints().collect();
    let span = |rng: &mut SplitMix64, lo: usize, hi: usize| lo + rng.below(hi - lo + 1);
    let n_words = span(&mut rng, opts.min_words, opts.max_words);
    let words: Vec<String> = (0..n_words)
        .map(|_| {
            let len = span(&mut rng, opts.min_word_len, opts.max_word_len);
            (0..len).map(|_| pool[rng.below(pool.len())]).collect()
        })
        .collect();
    normalize_text(&words.join(" ")).expect("generated text is non-empty")
}

pub fn generate_corpus(
    count: usize,
    seed: u64,
    atlas: &GlyphAtlas,
    opts: &CorpusOptions,
) -> Result<Vec<(String, RenderedLine)>, SynthError> {
    (0..count)
        .map(|i| {
            let id = corpus_id(i, opts.lines_per_author).ok_or(SynthError::TooManyLines(count))?;
            let text = random_text(atlas, opts, seed.wrapping_add(i as u64));
            Ok((id, render_line(&text, atlas)?))
        })
        .collect()
}

/// One line of `boxes.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxesRecord {
    pub id: String,
    pub glyphs: Vec<GlyphBox>,
}

pub fn parse_boxes_jsonl(text: &str) -> Result<Vec<BoxesRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Writes `<id>.png`, `<id>.gt.txt` and a `boxes.jsonl` into `out`.
pub fn write_corpus(lines: &[(String, RenderedLine)], out: &Path) -> Result<(), SynthError> {
    std::fs::create_dir_all(out)?;
    let mut boxes = String::new();
    for (id, line) in lines {
        line.image.write_png(out.join(format!("{id}.png")))?;
        std::fs::write(out.join(format!("{id}.gt.txt")), line.text.to_file_string())?;
        boxes.push_str(&serde_json::to_string(&BoxesRecord {
            id: id.clone(),
            glyphs: line.glyph_boxes.clone(),
        })?);
        boxes.push('\n');
    }
    std::fs::write(out.join("boxes.jsonl"), boxes)?;
    Ok(())
}

/// Reads back a directory written by [`write_corpus`], in `boxes.jsonl`
/// order.
pub fn load_corpus(dir: &Path) -> Result<Vec<(String, RenderedLine)>, SynthError> {
    let records = parse_boxes_jsonl(&std::fs::read_to_string(dir.join("boxes.jsonl"))?)?;
    records
        .into_iter()
        .map(|r| {
            let image = Raster::read_png(dir.join(format!("{}.png", r.id)))?;
            let bytes = std::fs::read(dir.join(format!("{}.gt.txt", r.id)))?;
            let text = GroundTruth::from_file_bytes(&bytes).map_err(|e| SynthError::GroundTruth(r.id.clone(), e))?;
            Ok((
                r.id,
                RenderedLine {
                    image,
                    text,
                    glyph_boxes: r.glyphs,
                },
            ))
        })
        .collect()
}
