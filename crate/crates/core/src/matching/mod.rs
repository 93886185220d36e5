//! Binary template matching.
//!
//! All scores are functions of four counts over the template window: its
//! size, the template's active pixels, the window's active pixels and their
//! intersection. The naive and bit-packed matchers both reduce to those
//! counts and share [`Method::score_counts`], which is what makes their
//! results bit-identical.

mod packed;
mod search;

pub use packed::match_accelerated;
pub use search::{resample, search_transforms, ScalePair, SearchConfig, TransformedMatch};

use crate::error::{Error, Result};
use crate::raster::BinaryImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Method {
    /// Fraction of agreeing pixels.
    #[default]
    Hamming,
    /// Intersection over union of active pixels; 1 when both are empty.
    Jaccard,
    /// Zero-mean normalized cross-correlation mapped to `[0, 1]`; 0.5 when
    /// either window is constant.
    Zncc,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Hamming => "hamming",
            Method::Jaccard => "jaccard",
            Method::Zncc => "zncc",
        }
    }

    pub fn from_name(name: &str) -> Option<Method> {
        [Method::Hamming, Method::Jaccard, Method::Zncc]
            .into_iter()
            .find(|m| m.name() == name)
    }

    pub fn score_counts(self, c: Overlap) -> f64 {
        let n = c.pixels as f64;
        let a = c.template_ones as f64;
        let b = c.window_ones as f64;
        let i = c.both as f64;
        match self {
            Method::Hamming => {
                let agree = c.pixels + 2 * c.both - c.template_ones - c.window_ones;
                agree as f64 / n
            }
            Method::Jaccard => {
                let union = c.template_ones + c.window_ones - c.both;
                if union == 0 {
                    1.0
                } else {
                    i / union as f64
                }
            }
            Method::Zncc => {
                let constant = |k: u64| k == 0 || k == c.pixels;
                if constant(c.template_ones) || constant(c.window_ones) {
                    return 0.5;
                }
                let cov = n * i - a * b;
                let norm = libm::sqrt(a * (n - a)) * libm::sqrt(b * (n - b));
                let r = (cov / norm).clamp(-1.0, 1.0);
                0.5 * (r + 1.0)
            }
        }
    }
}

/// Pixel counts over one template placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Overlap {
    pub pixels: u64,
    pub template_ones: u64,
    pub window_ones: u64,
    pub both: u64,
}

/// Best placement of a template: its top-left corner in the background.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MatchResult {
    pub offset_x: usize,
    pub offset_y: usize,
    pub score: f64,
}

impl MatchResult {
    /// Higher score wins; ties go to the smaller `offset_y`, then `offset_x`.
    pub fn beats(&self, other: &MatchResult) -> bool {
        match self.score.total_cmp(&other.score) {
            core::cmp::Ordering::Greater => true,
            core::cmp::Ordering::Less => false,
            core::cmp::Ordering::Equal => {
                (self.offset_y, self.offset_x) < (other.offset_y, other.offset_x)
            }
        }
    }

    pub(crate) fn best(a: MatchResult, b: MatchResult) -> MatchResult {
        if b.beats(&a) {
            b
        } else {
            a
        }
    }
}

pub(crate) fn check_fits(background: &BinaryImage, template: &BinaryImage) -> Result<()> {
    if template.width() > background.width()
        || template.height() > background.height()
        || template.width() == 0
        || template.height() == 0
    {
        return Err(Error::TemplateTooLarge {
            template_w: template.width(),
            template_h: template.height(),
            background_w: background.width(),
            background_h: background.height(),
        });
    }
    Ok(())
}

fn overlap_at(background: &BinaryImage, template: &BinaryImage, ox: usize, oy: usize) -> Overlap {
    let mut c = Overlap {
        pixels: (template.width() * template.height()) as u64,
        ..Overlap::default()
    };
    for y in 0..template.height() {
        let t_row = template.row(y);
        let b_row = &background.row(oy + y)[ox..ox + template.width()];
        for (&t, &b) in t_row.iter().zip(b_row) {
            c.template_ones += t as u64;
            c.window_ones += b as u64;
            c.both += (t & b) as u64;
        }
    }
    c
}

/// Similarity of `template` to the window of `background` at `offset`.
pub fn score(
    background: &BinaryImage,
    template: &BinaryImage,
    offset: (usize, usize),
    method: Method,
) -> Result<f64> {
    let (ox, oy) = offset;
    if template.width() == 0
        || template.height() == 0
        || ox + template.width() > background.width()
        || oy + template.height() > background.height()
    {
        return Err(Error::WindowOverflow { x: ox, y: oy });
    }
    Ok(method.score_counts(overlap_at(background, template, ox, oy)))
}

/// Exhaustive pixel-by-pixel search over every valid offset.
pub fn match_template(
    background: &BinaryImage,
    template: &BinaryImage,
    method: Method,
) -> Result<MatchResult> {
    check_fits(background, template)?;
    let mut best: Option<MatchResult> = None;
    for oy in 0..=background.height() - template.height() {
        for ox in 0..=background.width() - template.width() {
            let score = method.score_counts(overlap_at(background, template, ox, oy));
            let candidate = MatchResult {
                offset_x: ox,
                offset_y: oy,
                score,
            };
            // Scan order already matches the tie-break, so only a strictly
            // higher score replaces the incumbent.
            if best.is_none_or(|b| score > b.score) {
                best = Some(candidate);
            }
        }
    }
    Ok(best.expect("at least one offset is valid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn asymmetric() -> BinaryImage {
        BinaryImage::from_bits(
            3,
            3,
            vec![true, true, false, true, false, false, true, true, true],
        )
        .unwrap()
    }

    #[test]
    fn identical_window_scores_one() {
        let t = asymmetric();
        for m in [Method::Hamming, Method::Jaccard, Method::Zncc] {
            assert_eq!(score(&t, &t, (0, 0), m).unwrap(), 1.0, "{m:?}");
        }
    }

    #[test]
    fn complement_scores_zero_hamming() {
        let t = asymmetric();
        assert_eq!(score(&t, &t.complement(), (0, 0), Method::Hamming).unwrap(), 0.0);
        assert_eq!(score(&t, &t.complement(), (0, 0), Method::Zncc).unwrap(), 0.0);
    }

    #[test]
    fn empty_sets_and_constant_windows() {
        let blank = BinaryImage::new(2, 2);
        assert_eq!(score(&blank, &blank, (0, 0), Method::Jaccard).unwrap(), 1.0);
        assert_eq!(score(&blank, &asymmetric().crop(0, 0, 2, 2).unwrap(), (0, 0), Method::Zncc).unwrap(), 0.5);
    }

    #[test]
    fn overflowing_window_is_an_error() {
        let t = asymmetric();
        let bg = BinaryImage::new(4, 4);
        assert!(score(&bg, &t, (2, 0), Method::Hamming).is_err());
        assert!(score(&bg, &t, (1, 1), Method::Hamming).is_ok());
    }

    #[test]
    fn finds_pasted_copy() {
        let t = asymmetric();
        let mut bg = BinaryImage::new(12, 12);
        bg.paste(&t, 3, 5);
        let m = match_template(&bg, &t, Method::Hamming).unwrap();
        assert_eq!((m.offset_x, m.offset_y, m.score), (3, 5, 1.0));
    }

    #[test]
    fn same_size_gives_origin() {
        let t = asymmetric();
        let m = match_template(&t, &t, Method::Jaccard).unwrap();
        assert_eq!((m.offset_x, m.offset_y), (0, 0));
    }

    #[test]
    fn oversized_template_is_rejected() {
        let t = asymmetric();
        let bg = BinaryImage::new(2, 5);
        assert!(matches!(
            match_template(&bg, &t, Method::Hamming),
            Err(Error::TemplateTooLarge { .. })
        ));
    }

    #[test]
    fn ties_prefer_top_then_left() {
        let bg = BinaryImage::new(5, 5);
        let t = BinaryImage::new(2, 2);
        let m = match_template(&bg, &t, Method::Hamming).unwrap();
        assert_eq!((m.offset_x, m.offset_y), (0, 0));
        let a = MatchResult { offset_x: 4, offset_y: 0, score: 0.5 };
        let b = MatchResult { offset_x: 0, offset_y: 1, score: 0.5 };
        assert!(a.beats(&b));
        assert!(!b.beats(&a));
    }
}
