//! Word-packed matcher.
//!
//! Template rows are packed 64 pixels per `u64`. For the background, every
//! sub-word shift `s` in use gets its own packed copy in which word `k` holds
//! pixels `64k + s .. 64k + s + 64`, so that the window at `x = 64q + s`
//! lines up with template word `w` at shifted word `q + w`. The intersection
//! count is then one AND plus popcount per word. Window populations come
//! from a summed-area table.

use alloc::vec;
use alloc::vec::Vec;

use super::{check_fits, MatchResult, Method, Overlap};
use crate::error::Result;
use crate::raster::BinaryImage;

const WORD: usize = 64;

struct PackedTemplate {
    words_per_row: usize,
    rows: Vec<u64>,
    ones: u64,
}

impl PackedTemplate {
    fn new(img: &BinaryImage) -> Self {
        let words_per_row = img.width().div_ceil(WORD);
        let mut rows = vec![0u64; words_per_row * img.height()];
        for y in 0..img.height() {
            pack_row(img.row(y), &mut rows[y * words_per_row..(y + 1) * words_per_row]);
        }
        Self {
            words_per_row,
            rows,
            ones: img.count_ones() as u64,
        }
    }
}

fn pack_row(row: &[bool], out: &mut [u64]) {
    for (x, _) in row.iter().enumerate().filter(|(_, &b)| b) {
        out[x / WORD] |= 1u64 << (x % WORD);
    }
}

struct ShiftedBackground {
    words_per_row: usize,
    height: usize,
    // [shift][row][word]
    words: Vec<u64>,
}

impl ShiftedBackground {
    fn new(img: &BinaryImage, shifts: usize) -> Self {
        let words_per_row = img.width().div_ceil(WORD) + 1;
        let height = img.height();
        let mut words = vec![0u64; shifts * height * words_per_row];
        // One extra word so `k + 1` is always addressable.
        let mut packed = vec![0u64; words_per_row + 1];
        for y in 0..height {
            packed.fill(0);
            pack_row(img.row(y), &mut packed);
            for s in 0..shifts {
                let base = (s * height + y) * words_per_row;
                let dst = &mut words[base..base + words_per_row];
                for (k, d) in dst.iter_mut().enumerate() {
                    *d = if s == 0 {
                        packed[k]
                    } else {
                        (packed[k] >> s) | (packed[k + 1] << (WORD - s))
                    };
                }
            }
        }
        Self {
            words_per_row,
            height,
            words,
        }
    }

    #[inline]
    fn row(&self, shift: usize, y: usize) -> &[u64] {
        let base = (shift * self.height + y) * self.words_per_row;
        &self.words[base..base + self.words_per_row]
    }
}

struct SummedArea {
    stride: usize,
    sums: Vec<u64>,
}

impl SummedArea {
    fn new(img: &BinaryImage) -> Self {
        let stride = img.width() + 1;
        let mut sums = vec![0u64; stride * (img.height() + 1)];
        for y in 0..img.height() {
            let mut run = 0u64;
            for (x, &b) in img.row(y).iter().enumerate() {
                run += b as u64;
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + run;
            }
        }
        Self { stride, sums }
    }

    fn window(&self, x: usize, y: usize, w: usize, h: usize) -> u64 {
        let s = |x: usize, y: usize| self.sums[y * self.stride + x];
        s(x + w, y + h) + s(x, y) - s(x + w, y) - s(x, y + h)
    }
}

struct Prepared {
    template: PackedTemplate,
    background: ShiftedBackground,
    area: SummedArea,
    t_width: usize,
    t_height: usize,
    x_offsets: usize,
    method: Method,
}

impl Prepared {
    /// Uses the hardware popcount when the CPU has one; the baseline x86-64
    /// target otherwise falls back to a bit-twiddling sequence.
    fn best_in_row(&self, oy: usize) -> MatchResult {
        #[cfg(all(feature = "std", target_arch = "x86_64"))]
        if std::is_x86_feature_detected!("popcnt") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { self.best_in_row_popcnt(oy) };
        }
        self.scan_row(oy)
    }

    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    #[target_feature(enable = "popcnt")]
    unsafe fn best_in_row_popcnt(&self, oy: usize) -> MatchResult {
        self.scan_row(oy)
    }

    #[inline(always)]
    fn scan_row(&self, oy: usize) -> MatchResult {
        let tw = self.template.words_per_row;
        let pixels = (self.t_width * self.t_height) as u64;
        let mut best: Option<MatchResult> = None;
        for ox in 0..self.x_offsets {
            let (q, s) = (ox / WORD, ox % WORD);
            let mut both = 0u64;
            for r in 0..self.t_height {
                let t_row = &self.template.rows[r * tw..(r + 1) * tw];
                let b_row = &self.background.row(s, oy + r)[q..q + tw];
                both += t_row
                    .iter()
                    .zip(b_row)
                    .map(|(a, b)| (a & b).count_ones() as u64)
                    .sum::<u64>();
            }
            let counts = Overlap {
                pixels,
                template_ones: self.template.ones,
                window_ones: self.area.window(ox, oy, self.t_width, self.t_height),
                both,
            };
            let score = self.method.score_counts(counts);
            if best.is_none_or(|b| score > b.score) {
                best = Some(MatchResult {
                    offset_x: ox,
                    offset_y: oy,
                    score,
                });
            }
        }
        best.expect("row has at least one offset")
    }
}

/// Same contract and bit-identical result as
/// [`match_template`](super::match_template), computed on packed words.
///
/// With the `parallel` feature, rows of offsets are spread over the current
/// rayon pool and reduced under the same total order.
pub fn match_accelerated(
    background: &BinaryImage,
    template: &BinaryImage,
    method: Method,
) -> Result<MatchResult> {
    check_fits(background, template)?;
    let x_offsets = background.width() - template.width() + 1;
    let y_offsets = background.height() - template.height() + 1;
    let prepared = Prepared {
        template: PackedTemplate::new(template),
        background: ShiftedBackground::new(background, x_offsets.min(WORD)),
        area: SummedArea::new(background),
        t_width: template.width(),
        t_height: template.height(),
        x_offsets,
        method,
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let best = (0..y_offsets)
            .into_par_iter()
            .map(|oy| prepared.best_in_row(oy))
            .reduce_with(MatchResult::best);
        Ok(best.expect("at least one offset is valid"))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let best = (0..y_offsets)
            .map(|oy| prepared.best_in_row(oy))
            .reduce(MatchResult::best);
        Ok(best.expect("at least one offset is valid"))
    }
}
