use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{match_accelerated, Method};
use crate::dihedral::Dihedral;
use crate::error::{Error, Result};
use crate::raster::BinaryImage;

/// Horizontal and vertical scale applied to the background.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScalePair {
    pub x: f64,
    pub y: f64,
}

impl ScalePair {
    pub const IDENTITY: ScalePair = ScalePair { x: 1.0, y: 1.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    // L1 distance to (1, 1) in units of 1e-9, so that pairs like (1.05, 1)
    // and (0.95, 1) compare equal despite binary rounding.
    fn distance_key(&self) -> u64 {
        libm::round(((self.x - 1.0).abs() + (self.y - 1.0).abs()) * 1e9) as u64
    }
}

/// Nearest-neighbor rescale; output dims are `round(dim * scale)`.
pub fn resample(image: &BinaryImage, scale_x: f64, scale_y: f64) -> Result<BinaryImage> {
    let degenerate = Error::DegenerateResample {
        width: image.width(),
        height: image.height(),
        scale_x,
        scale_y,
    };
    if !(scale_x > 0.0 && scale_y > 0.0) || !scale_x.is_finite() || !scale_y.is_finite() {
        return Err(degenerate);
    }
    let w = libm::round(image.width() as f64 * scale_x) as usize;
    let h = libm::round(image.height() as f64 * scale_y) as usize;
    if w == 0 || h == 0 || image.width() == 0 || image.height() == 0 {
        return Err(degenerate);
    }
    if scale_x == 1.0 && scale_y == 1.0 {
        return Ok(image.clone());
    }
    let source = |i: usize, scale: f64, len: usize| -> usize {
        (libm::floor((i as f64 + 0.5) / scale) as usize).min(len - 1)
    };
    let columns: Vec<usize> = (0..w).map(|i| source(i, scale_x, image.width())).collect();
    let mut out = BinaryImage::new(w, h);
    for j in 0..h {
        let src = image.row(source(j, scale_y, image.height()));
        for (dst, &c) in out.row_mut(j).iter_mut().zip(&columns) {
            *dst = src[c];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Refinement {
    pub step: f64,
    /// Half-width of the refined window around the coarse optimum, per axis.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SearchConfig {
    pub scales: Vec<ScalePair>,
    pub dihedrals: Vec<Dihedral>,
    pub method: Method,
    pub refine: Option<Refinement>,
}

impl Default for SearchConfig {
    /// Scales 0.85..=1.15 in steps of 0.05 on both axes, all eight dihedral
    /// elements, hamming scoring, no refinement.
    fn default() -> Self {
        Self {
            scales: Self::scale_grid(0.85, 1.15, 0.05),
            dihedrals: Dihedral::ALL.to_vec(),
            method: Method::Hamming,
            refine: None,
        }
    }
}

impl SearchConfig {
    /// Only the identity transform.
    pub fn identity(method: Method) -> Self {
        Self {
            scales: alloc::vec![ScalePair::IDENTITY],
            dihedrals: alloc::vec![Dihedral::Identity],
            method,
            refine: None,
        }
    }

    /// Every pair from `min..=max` by `step` on each axis.
    pub fn scale_grid(min: f64, max: f64, step: f64) -> Vec<ScalePair> {
        let values = axis_values(min, max, step);
        values
            .iter()
            .flat_map(|&x| values.iter().map(move |&y| ScalePair::new(x, y)))
            .collect()
    }

    pub fn with_refinement(mut self, step: f64, radius: f64) -> Self {
        self.refine = Some(Refinement { step, radius });
        self
    }
}

// Values are snapped to 1e-9 so that 0.85 + 5 * 0.05 is exactly 1.1.
fn axis_values(min: f64, max: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || !(max >= min) {
        return Vec::new();
    }
    let n = libm::floor((max - min) / step + 1e-9) as usize;
    (0..=n)
        .map(|i| libm::round((min + i as f64 * step) * 1e9) / 1e9)
        .collect()
}

/// The winning combination: `dihedral` was applied to the template, the
/// scales to the background, and the offset is in the scaled background.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransformedMatch {
    pub offset_x: usize,
    pub offset_y: usize,
    pub score: f64,
    pub dihedral: Dihedral,
    pub scale_x: f64,
    pub scale_y: f64,
}

impl TransformedMatch {
    pub fn scales(&self) -> ScalePair {
        ScalePair::new(self.scale_x, self.scale_y)
    }

    /// Total order used to pick the winner: score, then scale closest to
    /// (1, 1) in L1, then dihedral enumeration order, then smaller offset
    /// (row first), then smaller scales.
    pub fn cmp_preference(&self, other: &TransformedMatch) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.scales().distance_key().cmp(&other.scales().distance_key()))
            .then_with(|| self.dihedral.index().cmp(&other.dihedral.index()))
            .then_with(|| (self.offset_y, self.offset_x).cmp(&(other.offset_y, other.offset_x)))
            .then_with(|| self.scale_x.total_cmp(&other.scale_x))
            .then_with(|| self.scale_y.total_cmp(&other.scale_y))
    }

    fn best(a: TransformedMatch, b: TransformedMatch) -> TransformedMatch {
        if b.cmp_preference(&a) == Ordering::Less {
            b
        } else {
            a
        }
    }
}

fn evaluate(
    background: &BinaryImage,
    template: &BinaryImage,
    dihedral: Dihedral,
    scale: ScalePair,
    method: Method,
) -> Option<TransformedMatch> {
    let scaled = resample(background, scale.x, scale.y).ok()?;
    let oriented = template.transformed(dihedral);
    let m = match_accelerated(&scaled, &oriented, method).ok()?;
    Some(TransformedMatch {
        offset_x: m.offset_x,
        offset_y: m.offset_y,
        score: m.score,
        dihedral,
        scale_x: scale.x,
        scale_y: scale.y,
    })
}

fn best_of(
    background: &BinaryImage,
    template: &BinaryImage,
    items: &[(Dihedral, ScalePair)],
    method: Method,
) -> Option<TransformedMatch> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items
            .par_iter()
            .filter_map(|&(d, s)| evaluate(background, template, d, s, method))
            .reduce_with(TransformedMatch::best)
    }
    #[cfg(not(feature = "parallel"))]
    {
        items
            .iter()
            .filter_map(|&(d, s)| evaluate(background, template, d, s, method))
            .reduce(TransformedMatch::best)
    }
}

/// Searches every (dihedral on template) x (scale on background) x offset
/// combination and returns the best under
/// [`TransformedMatch::cmp_preference`]. Scale pairs whose background no
/// longer fits the template are skipped.
pub fn search_transforms(
    background: &BinaryImage,
    template: &BinaryImage,
    config: &SearchConfig,
) -> Result<TransformedMatch> {
    if config.scales.is_empty() {
        return Err(Error::InvalidParameter("scale set is empty"));
    }
    if config.dihedrals.is_empty() {
        return Err(Error::InvalidParameter("dihedral set is empty"));
    }
    let items: Vec<(Dihedral, ScalePair)> = config
        .dihedrals
        .iter()
        .flat_map(|&d| config.scales.iter().map(move |&s| (d, s)))
        .collect();
    let coarse = best_of(background, template, &items, config.method).ok_or(Error::NeverFits)?;

    let Some(refine) = &config.refine else {
        return Ok(coarse);
    };
    let around = |c: f64| axis_values(c - refine.radius, c + refine.radius, refine.step);
    let fine: Vec<(Dihedral, ScalePair)> = around(coarse.scale_x)
        .into_iter()
        .filter(|&x| x > 0.0)
        .flat_map(|x| {
            around(coarse.scale_y)
                .into_iter()
                .filter(|&y| y > 0.0)
                .map(move |y| (coarse.dihedral, ScalePair::new(x, y)))
        })
        .collect();
    Ok(match best_of(background, template, &fine, config.method) {
        Some(f) => TransformedMatch::best(coarse, f),
        None => coarse,
    })
}
