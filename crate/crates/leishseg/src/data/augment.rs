//! Dihedral-group augmentation of labeled patches.
//!
//! Rotations, flips and their composites form the 8-element symmetry group
//! of the square; sampling uniformly from it covers every combination the
//! training loop needs. Image and label map are always transformed by the
//! same element.

use super::{LabelMap, LabeledImage};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One element of the dihedral group of the square. Rotations are clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Augment {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    HFlip,
    VFlip,
    Transpose,
    AntiTranspose,
}

pub const ALL_AUGMENTS: [Augment; 8] = [
    Augment::Identity,
    Augment::Rot90,
    Augment::Rot180,
    Augment::Rot270,
    Augment::HFlip,
    Augment::VFlip,
    Augment::Transpose,
    Augment::AntiTranspose,
];

impl Augment {
    /// `(swap, flip_rows, flip_cols)` decomposition: the source pixel for
    /// destination `(r, c)` is found by flipping, then optionally swapping.
    fn triple(self) -> (bool, bool, bool) {
        match self {
            Augment::Identity => (false, false, false),
            Augment::HFlip => (false, false, true),
            Augment::VFlip => (false, true, false),
            Augment::Rot180 => (false, true, true),
            Augment::Transpose => (true, false, false),
            Augment::Rot90 => (true, false, true),
            Augment::Rot270 => (true, true, false),
            Augment::AntiTranspose => (true, true, true),
        }
    }

    #[cfg(test)]
    fn from_triple(t: (bool, bool, bool)) -> Self {
        match t {
            (false, false, false) => Augment::Identity,
            (false, false, true) => Augment::HFlip,
            (false, true, false) => Augment::VFlip,
            (false, true, true) => Augment::Rot180,
            (true, false, false) => Augment::Transpose,
            (true, false, true) => Augment::Rot90,
            (true, true, false) => Augment::Rot270,
            (true, true, true) => Augment::AntiTranspose,
        }
    }

    /// Whether the element needs a square patch (it exchanges the axes).
    pub fn needs_square(self) -> bool {
        matches!(
            self,
            Augment::Rot90
                | Augment::Rot180
                | Augment::Rot270
                | Augment::Transpose
                | Augment::AntiTranspose
        )
    }

    /// Source coordinates on an `n x n` grid for destination `(r, c)`.
    #[inline]
    fn source(self, n: usize, r: usize, c: usize) -> (usize, usize) {
        let (swap, fr, fc) = self.triple();
        let rr = if fr { n - 1 - r } else { r };
        let cc = if fc { n - 1 - c } else { c };
        if swap {
            (cc, rr)
        } else {
            (rr, cc)
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Augment::Identity => "identity",
            Augment::Rot90 => "rot90",
            Augment::Rot180 => "rot180",
            Augment::Rot270 => "rot270",
            Augment::HFlip => "hflip",
            Augment::VFlip => "vflip",
            Augment::Transpose => "transpose",
            Augment::AntiTranspose => "anti-transpose",
        }
    }
}

/// The element equivalent to applying `first`, then `second`.
pub fn compose(first: Augment, second: Augment) -> Augment {
    // act on a 3x3 marker grid and recognize the resulting permutation
    let n = 3;
    for candidate in ALL_AUGMENTS {
        let mut matches = true;
        'grid: for r in 0..n {
            for c in 0..n {
                // dest (r,c) of the composite reads from second's source,
                // which first in turn read from first's source
                let (mr, mc) = second.source(n, r, c);
                let via = first.source(n, mr, mc);
                if candidate.source(n, r, c) != via {
                    matches = false;
                    break 'grid;
                }
            }
        }
        if matches {
            return candidate;
        }
    }
    unreachable!("dihedral group is closed under composition");
}

/// Uniform draw over all 8 group elements.
pub fn random_op(rng: &mut ChaCha8Rng) -> Augment {
    ALL_AUGMENTS[rng.random_range(0..ALL_AUGMENTS.len())]
}

fn check_square(op: Augment, height: usize, width: usize) -> Result<usize> {
    if op.needs_square() && height != width {
        return Err(Error::Shape(format!(
            "{} requires a square patch, got {height}x{width}",
            op.name()
        )));
    }
    Ok(height)
}

/// Applies a group element to a `C x H x W` tensor.
pub fn augment_tensor<T: Scalar>(t: &Tensor<T>, op: Augment) -> Result<Tensor<T>> {
    let (chans, h, w) = t.dims3()?;
    check_square(op, h, w)?;
    if op == Augment::Identity {
        return Ok(t.clone());
    }
    let mut out = Tensor::zeros(t.shape().to_vec());
    for ch in 0..chans {
        let src = t.channel(ch).to_vec();
        let dst = out.channel_mut(ch);
        if op.needs_square() {
            let n = h;
            for r in 0..n {
                for c in 0..n {
                    let (sr, sc) = op.source(n, r, c);
                    dst[r * n + c] = src[sr * n + sc];
                }
            }
        } else {
            let (_, fr, fc) = op.triple();
            for r in 0..h {
                for c in 0..w {
                    let sr = if fr { h - 1 - r } else { r };
                    let sc = if fc { w - 1 - c } else { c };
                    dst[r * w + c] = src[sr * w + sc];
                }
            }
        }
    }
    Ok(out)
}

/// Applies a group element to a label map.
pub fn augment_labels(labels: &LabelMap, op: Augment) -> Result<LabelMap> {
    let (h, w) = (labels.height(), labels.width());
    check_square(op, h, w)?;
    if op == Augment::Identity {
        return Ok(labels.clone());
    }
    let mut data = vec![0u8; h * w];
    if op.needs_square() {
        let n = h;
        for r in 0..n {
            for c in 0..n {
                let (sr, sc) = op.source(n, r, c);
                data[r * n + c] = labels.get(sr, sc);
            }
        }
    } else {
        let (_, fr, fc) = op.triple();
        for r in 0..h {
            for c in 0..w {
                let sr = if fr { h - 1 - r } else { r };
                let sc = if fc { w - 1 - c } else { c };
                data[r * w + c] = labels.get(sr, sc);
            }
        }
    }
    LabelMap::from_vec(h, w, data)
}

/// Applies the same group element to image and labels.
pub fn augment(patch: &LabeledImage, op: Augment) -> Result<LabeledImage> {
    LabeledImage::new(
        augment_tensor(&patch.rgb, op)?,
        augment_labels(&patch.labels, op)?,
        patch.id.clone(),
    )
}
