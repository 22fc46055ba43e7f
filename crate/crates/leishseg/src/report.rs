//! Assembly of the full metrics report: pixel rows per class, the region
//! detection table and parasite counts, with CSV and plain-text rendering.
//!
//! Aggregation over a multi-image evaluation set is deliberately mixed and
//! the report says so in its notes: the dice column is the mean of the
//! per-image dice scores, while precision, recall and F1 come from pixel
//! counts pooled over every image. Pixels whose ground truth is the unknown
//! class are excluded from all pixel metrics. The detection table matches
//! raw predicted components; the size filter only affects the parasite
//! counts.

use crate::data::{class_name, LabelMap, CLASS_UNKNOWN, PARASITE_CLASSES};
use crate::error::{Error, Result};
use crate::metrics::{confusion_from_maps, dice_from_counts, precision_recall_f1, ConfusionCounts};
use crate::postprocess::{
    connected_components, count_parasites, detection_table, match_regions, Connectivity,
    DetectionTable, RegionMatch, SizeFilterParams, DEFAULT_J_THRESHOLDS,
};

/// Classes carried in the pixel section, in row order.
pub const REPORTED_CLASSES: [u8; 6] = [0, 1, 2, 3, 4, 5];

/// One class row of the pixel section.
#[derive(Debug, Clone)]
pub struct PixelRow {
    pub class_id: u8,
    /// Mean of the per-image dice scores.
    pub dice: f64,
    /// From pixel counts pooled over all images.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Ground-truth share of the evaluated pixels, in percent.
    pub pixel_pct: f64,
}

/// Everything the evaluation stage reports.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub image_count: usize,
    pub pixel_rows: Vec<PixelRow>,
    pub detection: DetectionTable,
    /// Size-filtered component counts over the predictions, in
    /// `PARASITE_CLASSES` order.
    pub parasite_counts: [usize; 3],
    pub notes: Vec<String>,
}

/// Knobs of the region-level half of the report.
#[derive(Debug, Clone)]
pub struct ReportParams {
    pub filter: SizeFilterParams,
    pub connectivity: Connectivity,
    pub thresholds: Vec<f64>,
}

impl ReportParams {
    pub fn new(filter: SizeFilterParams) -> Self {
        ReportParams {
            filter,
            connectivity: Connectivity::Eight,
            thresholds: DEFAULT_J_THRESHOLDS.to_vec(),
        }
    }
}

/// Full report over paired prediction and ground-truth maps. The two slices
/// run in the same order; a length mismatch is an error.
pub fn build_report(
    pred: &[LabelMap],
    gt: &[LabelMap],
    params: &ReportParams,
) -> Result<MetricsReport> {
    if pred.len() != gt.len() {
        return Err(Error::Data(format!(
            "{} predictions but {} ground-truth maps",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Data("no image pairs to evaluate".into()));
    }

    let mut pooled = vec![ConfusionCounts::default(); REPORTED_CLASSES.len()];
    let mut dice_sums = vec![0.0f64; REPORTED_CLASSES.len()];
    let mut evaluated_px = 0u64;
    let mut matches: Vec<RegionMatch> = Vec::new();
    let mut parasite_counts = [0usize; 3];

    for (index, (p, g)) in pred.iter().zip(gt).enumerate() {
        let per_image = confusion_from_maps(p, g, &REPORTED_CLASSES).map_err(|e| {
            Error::Data(format!("image pair {index}: {e}"))
        })?;
        evaluated_px += per_image[0].total();
        for (slot, counts) in per_image.iter().enumerate() {
            dice_sums[slot] +=
                dice_from_counts(counts.true_pos, counts.false_pos, counts.false_neg);
            pooled[slot].true_pos += counts.true_pos;
            pooled[slot].false_pos += counts.false_pos;
            pooled[slot].false_neg += counts.false_neg;
            pooled[slot].true_neg += counts.true_neg;
        }
        for &class_id in PARASITE_CLASSES.iter() {
            let gt_regions = connected_components(g, class_id, params.connectivity);
            let pred_regions = connected_components(p, class_id, params.connectivity);
            matches.extend(match_regions(&gt_regions, &pred_regions));
        }
        let counts = count_parasites(p, &params.filter, params.connectivity)?;
        for slot in 0..3 {
            parasite_counts[slot] += counts[slot];
        }
    }

    let pixel_rows = REPORTED_CLASSES
        .iter()
        .enumerate()
        .map(|(slot, &class_id)| {
            let (precision, recall, f1) = precision_recall_f1(&pooled[slot]);
            let gt_px = pooled[slot].true_pos + pooled[slot].false_neg;
            PixelRow {
                class_id,
                dice: dice_sums[slot] / pred.len() as f64,
                precision,
                recall,
                f1,
                pixel_pct: if evaluated_px == 0 {
                    0.0
                } else {
                    100.0 * gt_px as f64 / evaluated_px as f64
                },
            }
        })
        .collect();

    let detection = detection_table(&matches, &params.thresholds);
    let mut notes = vec![
        "dice is the mean of per-image scores; precision/recall/f1 pool pixel counts over all images".to_string(),
        format!(
            "pixels with ground-truth class {} are excluded from pixel metrics",
            class_name(CLASS_UNKNOWN)
        ),
    ];
    notes.extend(detection.notes.iter().cloned());

    Ok(MetricsReport {
        image_count: pred.len(),
        pixel_rows,
        detection,
        parasite_counts,
        notes,
    })
}

fn threshold_label(t: f64) -> String {
    format!("j{}", (t * 100.0).round() as u32)
}

impl MetricsReport {
    /// Pixel section as CSV with a fixed header.
    pub fn pixel_csv(&self) -> String {
        let mut out = String::from("class,dice,precision,recall,f1,pixel_pct\n");
        for row in &self.pixel_rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                class_name(row.class_id),
                row.dice,
                row.precision,
                row.recall,
                row.f1,
                row.pixel_pct
            ));
        }
        out
    }

    /// Detection section as CSV; threshold columns are named after their
    /// percentage, `j25,j50,j75` under the defaults.
    pub fn detection_csv(&self) -> String {
        let labels: Vec<String> = self
            .detection
            .thresholds
            .iter()
            .map(|&t| threshold_label(t))
            .collect();
        let mut out = format!("class,{},mean_j,std_j\n", labels.join(","));
        for row in &self.detection.rows {
            let fracs: Vec<String> = row.fractions.iter().map(|f| format!("{f:.6}")).collect();
            out.push_str(&format!(
                "{},{},{:.6},{:.6}\n",
                class_name(row.class_id),
                fracs.join(","),
                row.mean_j,
                row.std_j
            ));
        }
        out
    }

    /// Human-readable rendering of every section.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("pixel metrics over {} images\n", self.image_count));
        out.push_str(&format!(
            "{:<14}{:>8}{:>11}{:>8}{:>8}{:>11}\n",
            "class", "dice", "precision", "recall", "f1", "pixel_pct"
        ));
        for row in &self.pixel_rows {
            out.push_str(&format!(
                "{:<14}{:>8.4}{:>11.4}{:>8.4}{:>8.4}{:>11.4}\n",
                class_name(row.class_id),
                row.dice,
                row.precision,
                row.recall,
                row.f1,
                row.pixel_pct
            ));
        }
        out.push('\n');
        out.push_str("detection by jaccard threshold\n");
        let mut header = format!("{:<14}{:>6}", "class", "n");
        for &t in &self.detection.thresholds {
            header.push_str(&format!("{:>9}", format!("J>={t}")));
        }
        header.push_str(&format!("{:>8}{:>7}\n", "mean", "std"));
        out.push_str(&header);
        for row in &self.detection.rows {
            let mut line = format!("{:<14}{:>6}", class_name(row.class_id), row.total_gt);
            for f in &row.fractions {
                line.push_str(&format!("{f:>9.2}"));
            }
            line.push_str(&format!("{:>8.2}{:>7.2}\n", row.mean_j, row.std_j));
            out.push_str(&line);
        }
        out.push('\n');
        out.push_str("parasite counts on predictions, size filtered\n");
        for (slot, &class_id) in PARASITE_CLASSES.iter().enumerate() {
            out.push_str(&format!(
                "{:<14}{}\n",
                class_name(class_id),
                self.parasite_counts[slot]
            ));
        }
        if !self.notes.is_empty() {
            out.push('\n');
            out.push_str("notes\n");
            for note in &self.notes {
                out.push_str(&format!("- {note}\n"));
            }
        }
        out
    }
}
