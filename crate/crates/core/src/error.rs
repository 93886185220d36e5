use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("block size {k} does not divide raster dimensions {width}x{height}")]
    NotDivisible { k: usize, width: usize, height: usize },
    #[error("template {template_w}x{template_h} does not fit in background {background_w}x{background_h}")]
    TemplateTooLarge {
        template_w: usize,
        template_h: usize,
        background_w: usize,
        background_h: usize,
    },
    #[error("window at offset ({x}, {y}) overflows the background")]
    WindowOverflow { x: usize, y: usize },
    #[error("resampling {width}x{height} by ({scale_x}, {scale_y}) gives an empty image")]
    DegenerateResample {
        width: usize,
        height: usize,
        scale_x: f64,
        scale_y: f64,
    },
    #[error("cell ({x}, {y}) is outside the {width}x{height} grid")]
    CellOutOfRange {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("polygon has zero area")]
    ZeroArea,
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("no candidate transform lets the template fit the background")]
    NeverFits,
    #[error("inconsistent provenance: {0}")]
    Provenance(&'static str),
}
