//! Dataset types, patching, sampling, augmentation, synthesis and I/O.

pub mod augment;
pub mod io;
pub mod patch;
pub mod sampler;
pub mod synth;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Number of label classes, including the unknown class.
pub const NUM_CLASSES: usize = 7;

pub const CLASS_BACKGROUND: u8 = 0;
pub const CLASS_CYTOPLASM: u8 = 1;
pub const CLASS_NUCLEUS: u8 = 2;
pub const CLASS_PROMASTIGOTE: u8 = 3;
pub const CLASS_ADHERED: u8 = 4;
pub const CLASS_AMASTIGOTE: u8 = 5;
pub const CLASS_UNKNOWN: u8 = 6;

/// The three parasite classes the sampler and the region metrics care about.
pub const PARASITE_CLASSES: [u8; 3] = [CLASS_PROMASTIGOTE, CLASS_ADHERED, CLASS_AMASTIGOTE];

pub fn class_name(class: u8) -> &'static str {
    match class {
        CLASS_BACKGROUND => "background",
        CLASS_CYTOPLASM => "cytoplasm",
        CLASS_NUCLEUS => "nucleus",
        CLASS_PROMASTIGOTE => "promastigote",
        CLASS_ADHERED => "adhered",
        CLASS_AMASTIGOTE => "amastigote",
        CLASS_UNKNOWN => "unknown",
        _ => "invalid",
    }
}

/// Dense per-pixel class indices for one image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, fill: u8) -> Result<Self> {
        if fill as usize >= NUM_CLASSES {
            return Err(Error::Data(format!("label value {fill} out of range")));
        }
        Ok(Self {
            height,
            width,
            data: vec![fill; height * width],
        })
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "label buffer has {} values for a {height}x{width} map",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|&v| v as usize >= NUM_CLASSES) {
            return Err(Error::Data(format!(
                "label value {} at pixel ({}, {}) out of range 0..{}",
                data[pos],
                pos / width.max(1),
                pos % width.max(1),
                NUM_CLASSES
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        debug_assert!(row < self.height && col < self.width);
        debug_assert!((value as usize) < NUM_CLASSES);
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Pixel count per class.
    pub fn histogram(&self) -> [u64; NUM_CLASSES] {
        let mut counts = [0u64; NUM_CLASSES];
        for &v in &self.data {
            counts[v as usize] += 1;
        }
        counts
    }

    /// Binary mask selecting the pixels of one class.
    pub fn mask(&self, class: u8) -> Vec<bool> {
        self.data.iter().map(|&v| v == class).collect()
    }
}

/// An RGB micrograph paired with its label map.
#[derive(Debug, Clone)]
pub struct LabeledImage {
    /// `3 x H x W`, values in `[0, 1]`.
    pub rgb: Tensor<f64>,
    pub labels: LabelMap,
    pub id: String,
}

impl LabeledImage {
    pub fn new(rgb: Tensor<f64>, labels: LabelMap, id: impl Into<String>) -> Result<Self> {
        let (c, h, w) = rgb.dims3()?;
        if c != 3 {
            return Err(Error::Shape(format!("expected 3 color channels, got {c}")));
        }
        if (h, w) != (labels.height(), labels.width()) {
            return Err(Error::Shape(format!(
                "rgb is {h}x{w} but labels are {}x{}",
                labels.height(),
                labels.width()
            )));
        }
        Ok(Self {
            rgb,
            labels,
            id: id.into(),
        })
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }
}

/// One-hot encodes a label map into a `num_classes x H x W` tensor.
pub fn one_hot<T: Scalar>(labels: &LabelMap, num_classes: usize) -> Result<Tensor<T>> {
    let (h, w) = (labels.height(), labels.width());
    let mut t = Tensor::zeros(vec![num_classes, h, w]);
    for (i, &v) in labels.data().iter().enumerate() {
        if v as usize >= num_classes {
            return Err(Error::Data(format!(
                "label {v} exceeds one-hot width {num_classes}"
            )));
        }
        t.data_mut()[v as usize * h * w + i] = T::one();
    }
    Ok(t)
}

/// Per-pixel argmax of a `C x H x W` probability tensor; ties break to the
/// lowest class index.
pub fn argmax_labels<T: Scalar>(probs: &Tensor<T>) -> Result<LabelMap> {
    let (c, h, w) = probs.dims3()?;
    if c == 0 || c > NUM_CLASSES {
        return Err(Error::Shape(format!(
            "cannot argmax {c} channels into a label map"
        )));
    }
    let hw = h * w;
    let mut data = vec![0u8; hw];
    for p in 0..hw {
        let mut best_class = 0u8;
        let mut best = probs.data()[p];
        for ch in 1..c {
            let v = probs.data()[ch * hw + p];
            if v > best {
                best = v;
                best_class = ch as u8;
            }
        }
        data[p] = best_class;
    }
    LabelMap::from_vec(h, w, data)
}
