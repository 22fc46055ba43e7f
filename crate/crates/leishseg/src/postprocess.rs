//! Connected components over label maps, and the region-level machinery
//! built on top of them: size filtering, parasite counting, ground-truth
//! matching and the per-class detection table.
//!
//! Components are extracted with a single union-find pass. Each component's
//! pixel list comes out sorted in row-major scan order, and the component
//! list itself is ordered by the bounding-box corner `(min_r, min_c)` with
//! ties broken by the first pixel in scan order, so every downstream
//! consumer sees the same deterministic region numbering.

use crate::data::{class_name, LabelMap, NUM_CLASSES, PARASITE_CLASSES};
use crate::error::{Error, Result};

/// Default Jaccard thresholds of the detection table.
pub const DEFAULT_J_THRESHOLDS: [f64; 3] = [0.25, 0.5, 0.75];

/// Default multiplicative tolerance of the size filter.
pub const DEFAULT_SIZE_TOLERANCE: f64 = 3.0;

/// Pixel adjacency rule for component extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Default for Connectivity {
    fn default() -> Self {
        Connectivity::Eight
    }
}

impl Connectivity {
    /// Neighbor offsets that precede the current pixel in scan order.
    fn backward_offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1)],
            Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1)],
        }
    }

    /// All neighbor offsets.
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Connectivity::Four => "4",
            Connectivity::Eight => "8",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s.trim() {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            other => Err(Error::Config(format!(
                "connectivity must be 4 or 8, got {other:?}"
            ))),
        }
    }
}

/// One connected component of a single class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub class_id: u8,
    /// Pixel coordinates in row-major scan order.
    pub pixels: Vec<(usize, usize)>,
    /// Tight bounding box `(min_r, min_c, max_r, max_c)`.
    pub bbox: (usize, usize, usize, usize),
}

impl Region {
    fn from_pixels(class_id: u8, pixels: Vec<(usize, usize)>) -> Self {
        debug_assert!(!pixels.is_empty());
        let mut bbox = (usize::MAX, usize::MAX, 0, 0);
        for &(r, c) in &pixels {
            bbox.0 = bbox.0.min(r);
            bbox.1 = bbox.1.min(c);
            bbox.2 = bbox.2.max(r);
            bbox.3 = bbox.3.max(c);
        }
        Region {
            class_id,
            pixels,
            bbox,
        }
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the earliest scan index as the root
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Connected components of a binary mask as row-major sorted pixel lists,
/// ordered by `(min_r, min_c)` and then by first pixel in scan order.
pub fn mask_components(
    mask: &[bool],
    height: usize,
    width: usize,
    connectivity: Connectivity,
) -> Result<Vec<Vec<(usize, usize)>>> {
    if mask.len() != height * width {
        return Err(Error::Shape(format!(
            "mask has {} entries but the grid is {height}x{width}",
            mask.len()
        )));
    }
    let mut sets = DisjointSets::new(mask.len());
    for r in 0..height {
        for c in 0..width {
            let idx = r * width + c;
            if !mask[idx] {
                continue;
            }
            for &(dr, dc) in connectivity.backward_offsets() {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nc >= width as isize {
                    continue;
                }
                let nidx = nr as usize * width + nc as usize;
                if mask[nidx] {
                    sets.union(idx, nidx);
                }
            }
        }
    }
    let mut slot_of_root = vec![usize::MAX; mask.len()];
    let mut components: Vec<Vec<(usize, usize)>> = Vec::new();
    for r in 0..height {
        for c in 0..width {
            let idx = r * width + c;
            if !mask[idx] {
                continue;
            }
            let root = sets.find(idx);
            if slot_of_root[root] == usize::MAX {
                slot_of_root[root] = components.len();
                components.push(Vec::new());
            }
            components[slot_of_root[root]].push((r, c));
        }
    }
    components.sort_by_key(component_order_key);
    Ok(components)
}

/// Ordering key: bounding-box corner, then the scan-order first pixel.
fn component_order_key(pixels: &Vec<(usize, usize)>) -> (usize, usize, usize, usize) {
    let min_r = pixels[0].0;
    let min_c = pixels.iter().map(|&(_, c)| c).min().unwrap();
    (min_r, min_c, pixels[0].0, pixels[0].1)
}

/// Connected components of one class of a label map.
pub fn connected_components(
    map: &LabelMap,
    class_id: u8,
    connectivity: Connectivity,
) -> Vec<Region> {
    let mask = map.mask(class_id);
    let components = mask_components(&mask, map.height(), map.width(), connectivity)
        .expect("label map mask always matches its own grid");
    components
        .into_iter()
        .map(|pixels| Region::from_pixels(class_id, pixels))
        .collect()
}

/// Per-class size band for discarding implausible regions.
///
/// A region of class `c` with recorded mean area `μ_c` survives iff its
/// area lies in the closed integer band `[floor(μ_c / k), ceil(μ_c · k)]`.
#[derive(Debug, Clone)]
pub struct SizeFilterParams {
    mean_area: [Option<f64>; NUM_CLASSES],
    k: f64,
}

impl SizeFilterParams {
    pub fn new(k: f64) -> Result<Self> {
        if !(k > 1.0) || !k.is_finite() {
            return Err(Error::Config(format!(
                "size tolerance must be a finite factor > 1, got {k}"
            )));
        }
        Ok(SizeFilterParams {
            mean_area: [None; NUM_CLASSES],
            k,
        })
    }

    pub fn with_mean(mut self, class_id: u8, mean: f64) -> Result<Self> {
        if class_id as usize >= NUM_CLASSES {
            return Err(Error::Config(format!("unknown class {class_id}")));
        }
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::Config(format!(
                "mean area for class {class_id} must be positive, got {mean}"
            )));
        }
        self.mean_area[class_id as usize] = Some(mean);
        Ok(self)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn mean_area(&self, class_id: u8) -> Option<f64> {
        self.mean_area.get(class_id as usize).copied().flatten()
    }

    /// Closed area band for a class, when its mean is recorded.
    pub fn bounds(&self, class_id: u8) -> Option<(usize, usize)> {
        self.mean_area(class_id)
            .map(|mu| ((mu / self.k).floor() as usize, (mu * self.k).ceil() as usize))
    }
}

/// Keep the regions whose area falls inside their class band. A region of a
/// class with no recorded mean is an error.
pub fn size_filter(regions: &[Region], params: &SizeFilterParams) -> Result<Vec<Region>> {
    let mut kept = Vec::new();
    for region in regions {
        let (lo, hi) = params.bounds(region.class_id).ok_or_else(|| {
            Error::Config(format!(
                "no mean area recorded for class {} ({})",
                region.class_id,
                class_name(region.class_id)
            ))
        })?;
        if (lo..=hi).contains(&region.area()) {
            kept.push(region.clone());
        }
    }
    Ok(kept)
}

/// Surviving component counts per parasite class, in `PARASITE_CLASSES`
/// order.
pub fn count_parasites(
    map: &LabelMap,
    params: &SizeFilterParams,
    connectivity: Connectivity,
) -> Result<[usize; 3]> {
    let mut counts = [0usize; 3];
    for (slot, &class_id) in PARASITE_CLASSES.iter().enumerate() {
        let regions = connected_components(map, class_id, connectivity);
        counts[slot] = size_filter(&regions, params)?.len();
    }
    Ok(counts)
}

/// Best-overlap pairing for one ground-truth region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMatch {
    pub class_id: u8,
    /// Index into the ground-truth region list.
    pub gt_index: usize,
    /// Index into the predicted region list, when any overlap exists.
    pub pred_index: Option<usize>,
    pub jaccard: f64,
}

/// Count of shared pixels between two row-major sorted pixel lists.
fn intersection_area(a: &[(usize, usize)], b: &[(usize, usize)]) -> usize {
    let (mut i, mut j, mut shared) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                shared += 1;
                i += 1;
                j += 1;
            }
        }
    }
    shared
}

/// Pair every ground-truth region with the same-class predicted region of
/// maximal intersection; ties go to the larger prediction, then to the one
/// earlier in scan order. A ground-truth region overlapping no prediction
/// gets J = 0 and no partner.
pub fn match_regions(gt: &[Region], pred: &[Region]) -> Vec<RegionMatch> {
    gt.iter()
        .enumerate()
        .map(|(gt_index, g)| {
            let mut best: Option<(usize, usize)> = None;
            for (pred_index, p) in pred.iter().enumerate() {
                if p.class_id != g.class_id {
                    continue;
                }
                let shared = intersection_area(&g.pixels, &p.pixels);
                if shared == 0 {
                    continue;
                }
                let wins = match best {
                    None => true,
                    Some((best_shared, best_index)) => {
                        shared > best_shared
                            || (shared == best_shared && p.area() > pred[best_index].area())
                    }
                };
                if wins {
                    best = Some((shared, pred_index));
                }
            }
            match best {
                Some((shared, pred_index)) => {
                    let union = g.area() + pred[pred_index].area() - shared;
                    RegionMatch {
                        class_id: g.class_id,
                        gt_index,
                        pred_index: Some(pred_index),
                        jaccard: shared as f64 / union as f64,
                    }
                }
                None => RegionMatch {
                    class_id: g.class_id,
                    gt_index,
                    pred_index: None,
                    jaccard: 0.0,
                },
            }
        })
        .collect()
}

/// One class row of the detection table.
#[derive(Debug, Clone)]
pub struct DetectionRow {
    pub class_id: u8,
    /// Number of ground-truth regions behind the row.
    pub total_gt: usize,
    /// Fraction of ground-truth regions with J ≥ the matching threshold.
    pub fractions: Vec<f64>,
    pub mean_j: f64,
    /// Population standard deviation of the J values.
    pub std_j: f64,
}

#[derive(Debug, Clone)]
pub struct DetectionTable {
    pub thresholds: Vec<f64>,
    pub rows: Vec<DetectionRow>,
    /// One entry per parasite class that had no ground-truth regions.
    pub notes: Vec<String>,
}

/// Detection statistics per parasite class. A class without ground-truth
/// regions contributes a note instead of a row.
pub fn detection_table(matches: &[RegionMatch], thresholds: &[f64]) -> DetectionTable {
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for &class_id in PARASITE_CLASSES.iter() {
        let js: Vec<f64> = matches
            .iter()
            .filter(|m| m.class_id == class_id)
            .map(|m| m.jaccard)
            .collect();
        if js.is_empty() {
            notes.push(format!(
                "{}: no ground-truth regions, row omitted",
                class_name(class_id)
            ));
            continue;
        }
        let total = js.len() as f64;
        let fractions = thresholds
            .iter()
            .map(|&t| js.iter().filter(|&&j| j >= t).count() as f64 / total)
            .collect();
        let mean_j = js.iter().sum::<f64>() / total;
        let variance = js.iter().map(|j| (j - mean_j).powi(2)).sum::<f64>() / total;
        rows.push(DetectionRow {
            class_id,
            total_gt: js.len(),
            fractions,
            mean_j,
            std_j: variance.sqrt(),
        });
    }
    DetectionTable {
        thresholds: thresholds.to_vec(),
        rows,
        notes,
    }
}
