//! Ground-truth text hygiene for Syriac lines: diacritic stripping,
//! whitespace normalization and charset validation.
//!
//! Metrics count Unicode codepoints of normalized text, so every string that
//! reaches an alignment should pass through [`normalize_text`] (or
//! [`normalize_lenient`] for engine output, which may be empty).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextError {
    #[error("text is empty after normalization")]
    EmptyAfterNormalization,
    #[error("ground-truth file must hold exactly one line")]
    MultiLine,
    #[error("ground-truth file is not valid UTF-8")]
    InvalidUtf8,
}

const SYRIAC_BLOCK: std::ops::RangeInclusive<char> = '\u{0700}'..='\u{074F}';

/// Superscript alaph and the Syriac vowel/point marks.
pub fn is_syriac_diacritic(c: char) -> bool {
    c == '\u{0711}' || ('\u{0730}'..='\u{074A}').contains(&c)
}

fn is_nonspacing_mark(c: char) -> bool {
    get_general_category(c) == GeneralCategory::NonspacingMark
}

/// Removes Syriac diacritics, plus any non-spacing mark whose base letter is
/// Syriac. Everything else is kept in order.
pub fn strip_diacritics(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut base_is_syriac = false;
    for c in s.chars() {
        if is_syriac_diacritic(c) {
            continue;
        }
        if is_nonspacing_mark(c) {
            if base_is_syriac {
                continue;
            }
        } else {
            base_is_syriac = SYRIAC_BLOCK.contains(&c);
        }
        out.push(c);
    }
    out
}

/// Normalized single-line ground truth. Construct with [`normalize_text`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct GroundTruth(String);

impl GroundTruth {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    pub fn char_len(&self) -> usize {
        self.0.chars().count()
    }

    /// Parses the contents of a `.gt.txt` file: one line, optionally
    /// terminated by a single LF (a CRLF ending is tolerated).
    pub fn from_file_bytes(bytes: &[u8]) -> Result<GroundTruth, TextError> {
        let s = std::str::from_utf8(bytes).map_err(|_| TextError::InvalidUtf8)?;
        let body = s
            .strip_suffix("\r\n")
            .or_else(|| s.strip_suffix('\n'))
            .unwrap_or(s);
        if body.contains(['\n', '\r']) {
            return Err(TextError::MultiLine);
        }
        normalize_text(body)
    }

    /// Serialized `.gt.txt` form: the text plus one LF.
    pub fn to_file_string(&self) -> String {
        format!("{}\n", self.0)
    }
}

impl<'de> Deserialize<'de> for GroundTruth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        normalize_text(&raw).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for GroundTruth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for GroundTruth {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// NFC, diacritic removal, whitespace unification and trimming, control
/// character removal. May return an empty string.
pub fn normalize_lenient(s: &str) -> String {
    let unified: String = s
        .nfc()
        .filter_map(|c| {
            if c.is_whitespace() {
                Some(' ')
            } else if c.is_control() {
                None
            } else {
                Some(c)
            }
        })
        .collect();
    let stripped = strip_diacritics(&unified);
    let collapsed = stripped.split(' ').filter(|w| !w.is_empty()).collect::<Vec<_>>().join(" ");
    // Dropping controls can bring a base and a mark together.
    collapsed.nfc().collect()
}

pub fn normalize_text(s: &str) -> Result<GroundTruth, TextError> {
    let out = normalize_lenient(s);
    if out.is_empty() {
        return Err(TextError::EmptyAfterNormalization);
    }
    Ok(GroundTruth(out))
}

/// Allowed codepoints: Syriac letters, space, and a punctuation set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Charset {
    allowed: BTreeSet<char>,
}

pub const DEFAULT_PUNCTUATION: [char; 5] = ['.', ':', '\u{0700}', '\u{0701}', '\u{0702}'];

impl Charset {
    /// Syriac letters U+0710–U+072F (minus the superscript alaph), space,
    /// and the given punctuation. Combining marks are never admitted.
    pub fn with_punctuation(punct: impl IntoIterator<Item = char>) -> Self {
        let mut allowed: BTreeSet<char> = ('\u{0710}'..='\u{072F}')
            .filter(|&c| !is_syriac_diacritic(c))
            .collect();
        allowed.insert(' ');
        allowed.extend(
            punct
                .into_iter()
                .filter(|&c| !is_syriac_diacritic(c) && !is_nonspacing_mark(c)),
        );
        Self { allowed }
    }

    pub fn contains(&self, c: char) -> bool {
        self.allowed.contains(&c)
    }

    pub fn iter(&self) -> impl Iterator<Item = char> + '_ {
        self.allowed.iter().copied()
    }
}

impl Default for Charset {
    fn default() -> Self {
        Self::with_punctuation(DEFAULT_PUNCTUATION)
    }
}

/// A codepoint outside the charset, at its codepoint index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub position: usize,
    pub codepoint: char,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "U+{:04X} at {}", self.codepoint as u32, self.position)
    }
}

pub fn validate_charset(g: &GroundTruth, cs: &Charset) -> Vec<Violation> {
    g.as_str()
        .chars()
        .enumerate()
        .filter(|&(_, c)| !cs.contains(c))
        .map(|(position, codepoint)| Violation {
            position,
            codepoint,
        })
        .collect()
}
