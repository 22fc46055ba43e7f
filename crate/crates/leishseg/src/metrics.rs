//! Pixel-wise evaluation metrics: Dice, Jaccard, precision, recall, F1.
//!
//! Conventions, fixed so every test is unambiguous: Dice and Jaccard of two
//! empty sets are 1 (nothing to segment, nothing segmented); precision,
//! recall and F1 with a zero denominator are 0. F1 is computed in count form
//! `2TP / (2TP + FP + FN)`, which equals `2PR / (P + R)` whenever the latter
//! is defined and makes F1 coincide with Dice computed from the same counts.

use crate::data::{LabelMap, CLASS_UNKNOWN};
use crate::error::{Error, Result};

/// One-vs-rest pixel counts for a single class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

/// `2TP / (2TP + FP + FN)`; defined as 1 when both sets are empty.
pub fn dice_from_counts(true_pos: u64, false_pos: u64, false_neg: u64) -> f64 {
    let den = 2 * true_pos + false_pos + false_neg;
    if den == 0 {
        1.0
    } else {
        2.0 * true_pos as f64 / den as f64
    }
}

/// `TP / (TP + FP + FN)`; defined as 1 when both sets are empty.
pub fn jaccard_from_counts(true_pos: u64, false_pos: u64, false_neg: u64) -> f64 {
    let den = true_pos + false_pos + false_neg;
    if den == 0 {
        1.0
    } else {
        true_pos as f64 / den as f64
    }
}

fn set_counts(x: &[bool], y: &[bool]) -> Result<(u64, u64, u64)> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "mask lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let mut inter = 0u64;
    let mut only_x = 0u64;
    let mut only_y = 0u64;
    for (&a, &b) in x.iter().zip(y) {
        match (a, b) {
            (true, true) => inter += 1,
            (true, false) => only_x += 1,
            (false, true) => only_y += 1,
            (false, false) => {}
        }
    }
    Ok((inter, only_x, only_y))
}

/// Dice score `2|X∩Y| / (|X| + |Y|)` of two same-grid binary masks.
pub fn dice_score(x: &[bool], y: &[bool]) -> Result<f64> {
    let (inter, only_x, only_y) = set_counts(x, y)?;
    Ok(dice_from_counts(inter, only_x, only_y))
}

/// Jaccard index `|X∩Y| / |X∪Y|` of two same-grid binary masks.
pub fn jaccard(x: &[bool], y: &[bool]) -> Result<f64> {
    let (inter, only_x, only_y) = set_counts(x, y)?;
    Ok(jaccard_from_counts(inter, only_x, only_y))
}

/// Precision, recall and F1 with the zero-denominator-yields-zero rule.
pub fn precision_recall_f1(counts: &ConfusionCounts) -> (f64, f64, f64) {
    let tp = counts.true_pos;
    let precision = if tp + counts.false_pos == 0 {
        0.0
    } else {
        tp as f64 / (tp + counts.false_pos) as f64
    };
    let recall = if tp + counts.false_neg == 0 {
        0.0
    } else {
        tp as f64 / (tp + counts.false_neg) as f64
    };
    let f1_den = 2 * tp + counts.false_pos + counts.false_neg;
    let f1 = if f1_den == 0 {
        0.0
    } else {
        2.0 * tp as f64 / f1_den as f64
    };
    (precision, recall, f1)
}

/// One-vs-rest confusion counts per requested class. Pixels whose ground
/// truth is the unknown class are excluded from evaluation entirely.
pub fn confusion_from_maps(
    pred: &LabelMap,
    gt: &LabelMap,
    classes: &[u8],
) -> Result<Vec<ConfusionCounts>> {
    if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
        return Err(Error::Shape(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let mut out = vec![ConfusionCounts::default(); classes.len()];
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        if g == CLASS_UNKNOWN {
            continue;
        }
        for (k, &c) in classes.iter().enumerate() {
            match (p == c, g == c) {
                (true, true) => out[k].true_pos += 1,
                (true, false) => out[k].false_pos += 1,
                (false, true) => out[k].false_neg += 1,
                (false, false) => out[k].true_neg += 1,
            }
        }
    }
    Ok(out)
}
