//! Count rasters, real-valued rasters and their binary silhouettes.

use alloc::vec;
use alloc::vec::Vec;

use crate::dihedral::Dihedral;
use crate::error::{Error, Result};

/// What an [`ActivityRaster`] cell counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CountMode {
    /// Number of records falling in the cell.
    Records,
    /// Number of distinct users with at least one record in the cell.
    UniqueUsers,
}

/// Row-major per-cell counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityRaster {
    width: usize,
    height: usize,
    values: Vec<u64>,
    mode: CountMode,
}

impl ActivityRaster {
    pub fn zeros(width: usize, height: usize, mode: CountMode) -> Self {
        Self {
            width,
            height,
            values: vec![0; width * height],
            mode,
        }
    }

    pub fn from_values(
        width: usize,
        height: usize,
        values: Vec<u64>,
        mode: CountMode,
    ) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: width * height,
            });
        }
        Ok(Self {
            width,
            height,
            values,
            mode,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mode(&self) -> CountMode {
        self.mode
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> u64 {
        self.values[y * self.width + x]
    }

    pub(crate) fn values_mut(&mut self) -> &mut [u64] {
        &mut self.values
    }

    pub fn total(&self) -> u64 {
        self.values.iter().sum()
    }

    /// Adds `other` cell by cell. Merging record-mode shards is always exact;
    /// unique-user shards are only additive when they partition users.
    pub fn merge(&mut self, other: &ActivityRaster) -> Result<()> {
        if other.width != self.width || other.height != self.height {
            return Err(Error::LengthMismatch {
                left: self.values.len(),
                right: other.values.len(),
            });
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    /// `count >= t`. `t = 0` marks every cell.
    pub fn threshold(&self, t: u64) -> BinaryImage {
        BinaryImage {
            width: self.width,
            height: self.height,
            bits: self.values.iter().map(|&v| v >= t).collect(),
        }
    }

    /// Any activity at all.
    pub fn threshold_nonzero(&self) -> BinaryImage {
        BinaryImage {
            width: self.width,
            height: self.height,
            bits: self.values.iter().map(|&v| v != 0).collect(),
        }
    }

    /// Sums non-overlapping `k`x`k` blocks, simulating a coarser grid.
    pub fn block_aggregate(&self, k: usize) -> Result<ActivityRaster> {
        if k == 0 {
            return Err(Error::InvalidParameter("block size must be positive"));
        }
        if !self.width.is_multiple_of(k) || !self.height.is_multiple_of(k) {
            return Err(Error::NotDivisible {
                k,
                width: self.width,
                height: self.height,
            });
        }
        let (w, h) = (self.width / k, self.height / k);
        let mut out = vec![0u64; w * h];
        for y in 0..self.height {
            let row = &self.values[y * self.width..(y + 1) * self.width];
            let out_row = &mut out[(y / k) * w..(y / k + 1) * w];
            for (x, &v) in row.iter().enumerate() {
                out_row[x / k] += v;
            }
        }
        Ok(ActivityRaster {
            width: w,
            height: h,
            values: out,
            mode: self.mode,
        })
    }

    /// `log10(1 + count)`, for display only.
    pub fn log_view(&self) -> RealRaster {
        RealRaster {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .map(|&v| libm::log10(1.0 + v as f64))
                .collect(),
        }
    }

    pub fn transformed(&self, element: Dihedral) -> ActivityRaster {
        let (w, h) = element.output_dims(self.width, self.height);
        ActivityRaster {
            width: w,
            height: h,
            values: element.apply_to_slice(&self.values, self.width, self.height),
            mode: self.mode,
        }
    }
}

/// Row-major real values, e.g. population shares per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RealRaster {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl RealRaster {
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: width * height,
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// `value >= t`.
    pub fn threshold(&self, t: f64) -> BinaryImage {
        BinaryImage {
            width: self.width,
            height: self.height,
            bits: self.values.iter().map(|&v| v >= t).collect(),
        }
    }
}

/// Row-major bits; `true` is active (land, black).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl core::fmt::Debug for BinaryImage {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        writeln!(f, "BinaryImage {}x{}", self.width, self.height)?;
        if self.width * self.height <= 4096 {
            for row in self.bits.chunks(self.width.max(1)) {
                for &b in row {
                    f.write_str(if b { "#" } else { "." })?;
                }
                f.write_str("\n")?;
            }
        }
        Ok(())
    }
}

impl BinaryImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::LengthMismatch {
                left: bits.len(),
                right: width * height,
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[bool] {
        &self.bits[y * self.width..(y + 1) * self.width]
    }

    pub(crate) fn row_mut(&mut self, y: usize) -> &mut [bool] {
        &mut self.bits[y * self.width..(y + 1) * self.width]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> BinaryImage {
        BinaryImage {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|&b| !b).collect(),
        }
    }

    /// Copies the `width`x`height` window whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<BinaryImage> {
        if x + width > self.width || y + height > self.height {
            return Err(Error::WindowOverflow { x, y });
        }
        Ok(BinaryImage::from_fn(width, height, |i, j| {
            self.get(x + i, y + j)
        }))
    }

    /// Writes `other` with its top-left corner at `(x, y)`, clipping at the edges.
    pub fn paste(&mut self, other: &BinaryImage, x: usize, y: usize) {
        for j in 0..other.height {
            if y + j >= self.height {
                break;
            }
            for i in 0..other.width {
                if x + i >= self.width {
                    break;
                }
                self.set(x + i, y + j, other.get(i, j));
            }
        }
    }

    pub fn transformed(&self, element: Dihedral) -> BinaryImage {
        let (w, h) = element.output_dims(self.width, self.height);
        BinaryImage {
            width: w,
            height: h,
            bits: element.apply_to_slice(&self.bits, self.width, self.height),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster(w: usize, h: usize, values: &[u64]) -> ActivityRaster {
        ActivityRaster::from_values(w, h, values.to_vec(), CountMode::Records).unwrap()
    }

    #[test]
    fn threshold_is_inclusive() {
        let r = raster(3, 1, &[74, 75, 76]);
        assert_eq!(r.threshold(75).bits(), &[false, true, true]);
    }

    #[test]
    fn threshold_zero_marks_everything() {
        let r = raster(2, 2, &[0, 3, 0, 0]);
        assert!(r.threshold(0).bits().iter().all(|&b| b));
    }

    #[test]
    fn nonzero_threshold() {
        assert_eq!(raster(3, 1, &[0, 1, 9]).threshold_nonzero().bits(), &[false, true, true]);
        assert_eq!(raster(2, 1, &[0, 0]).threshold_nonzero().count_ones(), 0);
    }

    #[test]
    fn real_threshold_boundary() {
        let r = RealRaster::from_values(2, 1, vec![0.0024, 0.0025]).unwrap();
        assert_eq!(r.threshold(0.0025).bits(), &[false, true]);
        assert_eq!(r.threshold(0.0).count_ones(), 2);
    }

    #[test]
    fn block_aggregate_dims_follow_factor() {
        let r = ActivityRaster::zeros(200, 200, CountMode::Records);
        for (k, d) in [(2, 100), (4, 50), (8, 25)] {
            let a = r.block_aggregate(k).unwrap();
            assert_eq!((a.width(), a.height()), (d, d));
        }
    }

    #[test]
    fn block_aggregate_of_ones() {
        let r = raster(4, 4, &[1; 16]);
        let a = r.block_aggregate(2).unwrap();
        assert_eq!(a.values(), &[4, 4, 4, 4]);
    }

    #[test]
    fn block_aggregate_rejects_non_divisible() {
        let r = ActivityRaster::zeros(6, 4, CountMode::Records);
        assert_eq!(
            r.block_aggregate(4),
            Err(Error::NotDivisible {
                k: 4,
                width: 6,
                height: 4
            })
        );
    }

    #[test]
    fn log_view_values() {
        let v = raster(3, 1, &[0, 9, 99]).log_view();
        assert_eq!(v.values()[0], 0.0);
        assert!((v.values()[1] - 1.0).abs() < 1e-15);
        assert!((v.values()[2] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn crop_and_paste_round_trip() {
        let img = BinaryImage::from_fn(5, 4, |x, y| (x * 3 + y) % 4 == 0);
        let c = img.crop(1, 1, 3, 2).unwrap();
        let mut blank = BinaryImage::new(5, 4);
        blank.paste(&c, 1, 1);
        for y in 1..3 {
            for x in 1..4 {
                assert_eq!(blank.get(x, y), img.get(x, y));
            }
        }
        assert!(img.crop(3, 3, 3, 2).is_err());
    }
}
