//! The eight axis-aligned symmetries of a pixel grid.
//!
//! Every element is encoded as an optional transpose followed by optional
//! mirrors of the output axes. That encoding makes composition and inversion
//! a few boolean operations and keeps the coordinate map and the image
//! transform in one place.

use alloc::vec::Vec;

/// One element of the dihedral group of order 8 acting on images.
///
/// Rotations are clockwise as displayed (x right, y down).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Dihedral {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    /// Mirror left-right.
    FlipH,
    /// Mirror top-bottom.
    FlipV,
    /// Swap x and y (main diagonal).
    Transpose,
    /// Reflect across the anti-diagonal.
    AntiTranspose,
}

impl Dihedral {
    /// Fixed enumeration order; also the search tie-break order.
    pub const ALL: [Dihedral; 8] = [
        Dihedral::Identity,
        Dihedral::Rot90,
        Dihedral::Rot180,
        Dihedral::Rot270,
        Dihedral::FlipH,
        Dihedral::FlipV,
        Dihedral::Transpose,
        Dihedral::AntiTranspose,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Dihedral::Identity => "identity",
            Dihedral::Rot90 => "rot90",
            Dihedral::Rot180 => "rot180",
            Dihedral::Rot270 => "rot270",
            Dihedral::FlipH => "flip_h",
            Dihedral::FlipV => "flip_v",
            Dihedral::Transpose => "transpose",
            Dihedral::AntiTranspose => "anti_transpose",
        }
    }

    pub fn from_name(name: &str) -> Option<Dihedral> {
        Dihedral::ALL.into_iter().find(|d| d.name() == name)
    }

    // (transpose, mirror x, mirror y), applied in that order.
    fn parts(self) -> (bool, bool, bool) {
        match self {
            Dihedral::Identity => (false, false, false),
            Dihedral::Rot90 => (true, true, false),
            Dihedral::Rot180 => (false, true, true),
            Dihedral::Rot270 => (true, false, true),
            Dihedral::FlipH => (false, true, false),
            Dihedral::FlipV => (false, false, true),
            Dihedral::Transpose => (true, false, false),
            Dihedral::AntiTranspose => (true, true, true),
        }
    }

    fn from_parts(parts: (bool, bool, bool)) -> Dihedral {
        Dihedral::ALL
            .into_iter()
            .find(|d| d.parts() == parts)
            .expect("all eight encodings are covered")
    }

    pub fn swaps_axes(self) -> bool {
        self.parts().0
    }

    /// The element that first applies `self` and then `next`.
    pub fn then(self, next: Dihedral) -> Dihedral {
        let (sa, xa, ya) = self.parts();
        let (sb, xb, yb) = next.parts();
        // Moving a's mirrors past b's transpose swaps which axis they act on.
        let (xa, ya) = if sb { (ya, xa) } else { (xa, ya) };
        Dihedral::from_parts((sa ^ sb, xa ^ xb, ya ^ yb))
    }

    pub fn inverse(self) -> Dihedral {
        match self {
            Dihedral::Rot90 => Dihedral::Rot270,
            Dihedral::Rot270 => Dihedral::Rot90,
            other => other,
        }
    }

    pub fn output_dims(self, width: usize, height: usize) -> (usize, usize) {
        if self.swaps_axes() {
            (height, width)
        } else {
            (width, height)
        }
    }

    /// Where source pixel `(x, y)` of a `width`x`height` image lands.
    pub fn map_coords(self, x: usize, y: usize, width: usize, height: usize) -> (usize, usize) {
        let (swap, mx, my) = self.parts();
        let (x, y, w, h) = if swap {
            (y, x, height, width)
        } else {
            (x, y, width, height)
        };
        (if mx { w - 1 - x } else { x }, if my { h - 1 - y } else { y })
    }

    /// Applies the element to a row-major buffer.
    pub fn apply_to_slice<T: Copy>(self, values: &[T], width: usize, height: usize) -> Vec<T> {
        debug_assert_eq!(values.len(), width * height);
        if self == Dihedral::Identity {
            return values.to_vec();
        }
        let (out_w, out_h) = self.output_dims(width, height);
        let inverse = self.inverse();
        let mut out = Vec::with_capacity(values.len());
        for y in 0..out_h {
            for x in 0..out_w {
                let (sx, sy) = inverse.map_coords(x, y, out_w, out_h);
                out.push(values[sy * width + sx]);
            }
        }
        out
    }
}

impl core::fmt::Display for Dihedral {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::BinaryImage;
    use alloc::vec;

    fn sample() -> BinaryImage {
        BinaryImage::from_fn(5, 3, |x, y| (x * 7 + y * 3) % 5 < 2 || (x == 0 && y == 0))
    }

    #[test]
    fn flip_h_of_pair() {
        let v = Dihedral::FlipH.apply_to_slice(&['a', 'b'], 2, 1);
        assert_eq!(v, vec!['b', 'a']);
    }

    #[test]
    fn rot90_is_clockwise() {
        // a b      c a
        // c d  ->  d b
        let v = Dihedral::Rot90.apply_to_slice(&['a', 'b', 'c', 'd'], 2, 2);
        assert_eq!(v, vec!['c', 'a', 'd', 'b']);
    }

    #[test]
    fn rot180_is_both_flips() {
        let img = sample();
        assert_eq!(
            img.transformed(Dihedral::Rot180),
            img.transformed(Dihedral::FlipH).transformed(Dihedral::FlipV)
        );
        assert_eq!(
            img.transformed(Dihedral::Rot180).transformed(Dihedral::Rot180),
            img
        );
    }

    #[test]
    fn inverse_undoes_every_element() {
        let img = sample();
        for d in Dihedral::ALL {
            assert_eq!(img.transformed(d).transformed(d.inverse()), img, "{d}");
            assert_eq!(d.then(d.inverse()), Dihedral::Identity);
        }
    }

    #[test]
    fn names_round_trip() {
        for d in Dihedral::ALL {
            assert_eq!(Dihedral::from_name(d.name()), Some(d));
        }
        assert_eq!(Dihedral::from_name("rot45"), None);
    }
}
