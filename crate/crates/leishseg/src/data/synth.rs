//! Synthetic Giemsa-like micrograph generator.
//!
//! Images are built from rasterized ellipses: cells (cytoplasm with a darker
//! nucleus), fusiform promastigotes on the background, adhered parasites
//! biting into a cell boundary, small oval amastigotes inside cytoplasm, and
//! irregular stain blobs labeled unknown. Placement is budget-driven: each
//! class gets a pixel budget from the target frequency profile, split across
//! the drawn instance count, so generated label frequencies land on the
//! profile. The background share is anchored and the foreground shares are
//! rescaled to its complement, which keeps profiles usable even when their
//! nominal percentages do not sum to exactly 100.

use super::{
    LabelMap, LabeledImage, CLASS_ADHERED, CLASS_AMASTIGOTE, CLASS_BACKGROUND, CLASS_CYTOPLASM,
    CLASS_NUCLEUS, CLASS_PROMASTIGOTE, CLASS_UNKNOWN, NUM_CLASSES,
};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

/// Target class-frequency profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Class shares of the real dataset; background dominates at 99.38 %.
    Paper,
    /// Parasite-heavy shares so small patches regularly meet the sampler
    /// threshold and a desk-scale network has enough signal.
    ParasiteDense,
}

impl Profile {
    /// Nominal per-class pixel fractions, indexed by class id.
    pub fn target_fractions(self) -> [f64; NUM_CLASSES] {
        match self {
            Profile::Paper => [0.9938, 0.0041, 0.0016, 0.0002, 0.0001, 0.0002, 0.0059],
            Profile::ParasiteDense => [0.72, 0.15, 0.02, 0.055, 0.03, 0.02, 0.005],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::ParasiteDense => "parasite-dense",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "parasite-dense" => Ok(Profile::ParasiteDense),
            other => Err(Error::Config(format!(
                "unknown profile '{other}', expected 'paper' or 'parasite-dense'"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthParams {
    /// Number of images to generate.
    pub count: usize,
    pub height: usize,
    pub width: usize,
    /// Inclusive instance-count ranges.
    pub cells: (usize, usize),
    pub promastigotes: (usize, usize),
    pub adhered: (usize, usize),
    pub amastigotes: (usize, usize),
    /// Major/minor axis ratio of the fusiform parasite bodies.
    pub promastigote_axis_ratio: f64,
    /// Clamp on the amastigote oval radius, pixels.
    pub amastigote_radius: (f64, f64),
    /// How deep an adhered body sinks into the cell, as a fraction of its
    /// minor semi-axis; 0 grazes the boundary, 1 is fully centered on it.
    pub adhered_overlap: f64,
    /// Expected unknown stain blobs per pixel.
    pub blob_density: f64,
    pub profile: Profile,
    /// Keep same-class parasite instances from touching so connected
    /// components correspond one-to-one with placed instances.
    pub non_touching: bool,
    pub seed: u64,
}

impl SynthParams {
    pub fn paper() -> Self {
        Self {
            count: 45,
            height: 384,
            width: 384,
            cells: (1, 2),
            promastigotes: (2, 4),
            adhered: (1, 2),
            amastigotes: (2, 4),
            promastigote_axis_ratio: 4.0,
            amastigote_radius: (1.0, 6.0),
            adhered_overlap: 0.5,
            blob_density: 2e-5,
            profile: Profile::Paper,
            non_touching: true,
            seed: 0,
        }
    }

    pub fn parasite_dense() -> Self {
        Self {
            count: 45,
            height: 192,
            width: 192,
            cells: (2, 3),
            promastigotes: (3, 5),
            adhered: (2, 3),
            amastigotes: (6, 9),
            promastigote_axis_ratio: 4.0,
            amastigote_radius: (2.0, 6.0),
            adhered_overlap: 0.5,
            blob_density: 1.5e-5,
            profile: Profile::ParasiteDense,
            non_touching: true,
            seed: 0,
        }
    }

    /// Per-class pixel budgets: the background share is kept as configured
    /// and the foreground shares are rescaled onto its complement.
    pub fn effective_budgets(&self) -> [f64; NUM_CLASSES] {
        let target = self.profile.target_fractions();
        let bg = target[CLASS_BACKGROUND as usize];
        let fg_sum: f64 = target
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != CLASS_BACKGROUND as usize)
            .map(|(_, &v)| v)
            .sum();
        let scale = if fg_sum > 0.0 { (1.0 - bg) / fg_sum } else { 0.0 };
        let mut out = [0.0; NUM_CLASSES];
        for (c, &v) in target.iter().enumerate() {
            out[c] = if c == CLASS_BACKGROUND as usize {
                bg
            } else {
                v * scale
            };
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("cells", self.cells),
            ("promastigotes", self.promastigotes),
            ("adhered", self.adhered),
            ("amastigotes", self.amastigotes),
        ] {
            if lo > hi {
                return Err(Error::Config(format!(
                    "synth.{name} range {lo}..={hi} is empty"
                )));
            }
        }
        if self.height < 32 || self.width < 32 {
            return Err(Error::Config(format!(
                "synthetic images must be at least 32x32, got {}x{}",
                self.height, self.width
            )));
        }
        if (self.adhered.1 > 0 || self.amastigotes.1 > 0) && self.cells.0 == 0 {
            return Err(Error::Config(
                "adhered parasites and amastigotes need at least one cell; \
                 raise synth.cells_min"
                    .into(),
            ));
        }
        if self.promastigote_axis_ratio < 1.0 {
            return Err(Error::Config("axis ratio must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.adhered_overlap) {
            return Err(Error::Config("adhered overlap must be in [0, 1]".into()));
        }
        let budgets = self.effective_budgets();
        let fg: f64 = budgets[1..].iter().sum();
        if fg > 0.55 {
            return Err(Error::Data(format!(
                "foreground budget {:.0} % leaves too little background to place \
                 instances without overlap",
                fg * 100.0
            )));
        }
        Ok(())
    }
}

/// One generated image with its placement ground truth.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub image: LabeledImage,
    pub cell_count: usize,
    /// Placed instances of promastigote, adhered, amastigote, in class order.
    pub parasite_counts: [usize; 3],
    pub blob_count: usize,
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cr: f64,
    cc: f64,
    a: f64,
    b: f64,
    cos_t: f64,
    sin_t: f64,
}

impl Ellipse {
    fn from_area(cr: f64, cc: f64, area: f64, ratio: f64, theta: f64) -> Self {
        let b = (area / (PI * ratio)).sqrt();
        Self {
            cr,
            cc,
            a: b * ratio,
            b,
            cos_t: theta.cos(),
            sin_t: theta.sin(),
        }
    }

    fn contains(&self, r: f64, c: f64) -> bool {
        let dr = r - self.cr;
        let dc = c - self.cc;
        let u = (dc * self.cos_t + dr * self.sin_t) / self.a;
        let v = (-dc * self.sin_t + dr * self.cos_t) / self.b;
        u * u + v * v <= 1.0
    }

    fn extent(&self) -> f64 {
        self.a.max(self.b)
    }

    /// Integer pixels inside the ellipse, clipped to the canvas.
    fn pixels(&self, height: usize, width: usize) -> Vec<(usize, usize)> {
        let e = self.extent() + 1.0;
        let r0 = ((self.cr - e).floor().max(0.0)) as usize;
        let r1 = ((self.cr + e).ceil().min(height as f64 - 1.0)) as usize;
        let c0 = ((self.cc - e).floor().max(0.0)) as usize;
        let c1 = ((self.cc + e).ceil().min(width as f64 - 1.0)) as usize;
        let mut out = Vec::new();
        for r in r0..=r1 {
            for c in c0..=c1 {
                if self.contains(r as f64, c as f64) {
                    out.push((r, c));
                }
            }
        }
        out
    }

    fn fits(&self, height: usize, width: usize, margin: f64) -> bool {
        let e = self.extent() + margin;
        self.cr - e >= 0.0
            && self.cc - e >= 0.0
            && self.cr + e < height as f64
            && self.cc + e < width as f64
    }
}

struct Canvas {
    height: usize,
    width: usize,
    labels: Vec<u8>,
    /// Instance id per pixel; 0 is background.
    instance: Vec<u32>,
    /// Brightness factor per instance id.
    brightness: Vec<f64>,
}

impl Canvas {
    fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            labels: vec![CLASS_BACKGROUND; height * width],
            instance: vec![0; height * width],
            brightness: vec![1.0],
        }
    }

    fn label(&self, r: usize, c: usize) -> u8 {
        self.labels[r * self.width + c]
    }

    /// True when any 8-neighbor (or the pixel itself) carries `class`.
    fn near_class(&self, r: usize, c: usize, class: u8) -> bool {
        let r0 = r.saturating_sub(1);
        let c0 = c.saturating_sub(1);
        for rr in r0..=(r + 1).min(self.height - 1) {
            for cc in c0..=(c + 1).min(self.width - 1) {
                if self.label(rr, cc) == class {
                    return true;
                }
            }
        }
        false
    }

    fn stamp(&mut self, pixels: &[(usize, usize)], class: u8, rng: &mut ChaCha8Rng) -> u32 {
        let id = self.brightness.len() as u32;
        self.brightness.push(rng.random_range(0.96..1.04));
        for &(r, c) in pixels {
            self.labels[r * self.width + c] = class;
            self.instance[r * self.width + c] = id;
        }
        id
    }
}

const PLACEMENT_TRIES: usize = 400;
const MIN_INSTANCE_AREA: f64 = 3.0;

fn draw_count(rng: &mut ChaCha8Rng, range: (usize, usize)) -> usize {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..=range.1)
    }
}

fn infeasible(class: &str) -> Error {
    Error::Data(format!(
        "could not place a {class} instance after {PLACEMENT_TRIES} attempts; \
         the image is too small for the requested instance counts"
    ))
}

fn jitter(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.75..1.25)
}

fn generate_one(params: &SynthParams, index: u64) -> Result<SynthOutput> {
    let mut rng = stream(params.seed, "synth-image", index);
    let (h, w) = (params.height, params.width);
    let total_px = (h * w) as f64;
    let budgets = params.effective_budgets();
    let px = |class: u8| budgets[class as usize] * total_px;

    let n_cells = draw_count(&mut rng, params.cells);
    let n_pro = draw_count(&mut rng, params.promastigotes);
    let n_adh = if n_cells == 0 { 0 } else { draw_count(&mut rng, params.adhered) };
    let n_ama = if n_cells == 0 { 0 } else { draw_count(&mut rng, params.amastigotes) };
    let n_blobs = if params.blob_density > 0.0 {
        ((params.blob_density * total_px).round() as usize).max(1)
    } else {
        0
    };

    let mut canvas = Canvas::new(h, w);

    // cells carry their own budget plus everything stamped over them later
    let mut cell_shapes: Vec<Ellipse> = Vec::new();
    if n_cells > 0 {
        let cell_total = px(CLASS_CYTOPLASM)
            + px(CLASS_NUCLEUS)
            + px(CLASS_AMASTIGOTE)
            + 0.5 * px(CLASS_ADHERED);
        let per_cell = (cell_total / n_cells as f64).max(MIN_INSTANCE_AREA * 4.0);
        for _ in 0..n_cells {
            let area = per_cell * jitter(&mut rng);
            let ratio = rng.random_range(1.0..1.15);
            let theta = rng.random_range(0.0..PI);
            let mut placed = false;
            for _ in 0..PLACEMENT_TRIES {
                let cr = rng.random_range(0.0..h as f64);
                let cc = rng.random_range(0.0..w as f64);
                let e = Ellipse::from_area(cr, cc, area, ratio, theta);
                if !e.fits(h, w, 2.0) {
                    continue;
                }
                let clear = cell_shapes.iter().all(|o| {
                    let d = ((o.cr - cr).powi(2) + (o.cc - cc).powi(2)).sqrt();
                    d > (o.extent() + e.extent()) * 1.1 + 2.0
                });
                if !clear {
                    continue;
                }
                let pixels = e.pixels(h, w);
                canvas.stamp(&pixels, CLASS_CYTOPLASM, &mut rng);
                cell_shapes.push(e);
                placed = true;
                break;
            }
            if !placed {
                return Err(infeasible("cell"));
            }
        }
        // one nucleus per cell, offset a little from the center
        let nuc_area = (px(CLASS_NUCLEUS) / n_cells as f64).max(MIN_INSTANCE_AREA);
        for cell in &cell_shapes {
            let area = nuc_area * jitter(&mut rng);
            let ratio = rng.random_range(1.0..1.3);
            let theta = rng.random_range(0.0..PI);
            let dr = rng.random_range(-0.2..0.2) * cell.b;
            let dc = rng.random_range(-0.2..0.2) * cell.b;
            let e = Ellipse::from_area(cell.cr + dr, cell.cc + dc, area, ratio, theta);
            let pixels: Vec<_> = e
                .pixels(h, w)
                .into_iter()
                .filter(|&(r, c)| canvas.label(r, c) == CLASS_CYTOPLASM)
                .collect();
            canvas.stamp(&pixels, CLASS_NUCLEUS, &mut rng);
        }
    }

    // amastigotes: small ovals fully on cytoplasm
    if n_ama > 0 {
        let per = px(CLASS_AMASTIGOTE) / n_ama as f64;
        for _ in 0..n_ama {
            let mut area = per * jitter(&mut rng);
            let (rmin, rmax) = params.amastigote_radius;
            let r_eq = (area / PI).sqrt().clamp(rmin, rmax);
            area = (PI * r_eq * r_eq).max(MIN_INSTANCE_AREA);
            let ratio = rng.random_range(1.0..1.4);
            let theta = rng.random_range(0.0..PI);
            let mut placed = false;
            for _ in 0..PLACEMENT_TRIES {
                let cell = &cell_shapes[rng.random_range(0..cell_shapes.len())];
                // radius-first sampling keeps the acceptance rate usable in
                // the thin cytoplasm ring between nucleus and cell edge
                let phi = rng.random_range(0.0..2.0 * PI);
                let d = rng.random_range(0.0..cell.b);
                let cr = cell.cr + d * phi.sin();
                let cc = cell.cc + d * phi.cos();
                let e = Ellipse::from_area(cr, cc, area, ratio, theta);
                if !e.fits(h, w, 1.0) {
                    continue;
                }
                let pixels = e.pixels(h, w);
                // a one pixel cytoplasm ring keeps the body clear of the
                // cell edge, the nucleus, and other amastigotes
                let guard = Ellipse { a: e.a + 1.5, b: e.b + 1.5, ..e };
                if pixels.is_empty()
                    || !guard
                        .pixels(h, w)
                        .iter()
                        .all(|&(r, c)| canvas.label(r, c) == CLASS_CYTOPLASM)
                {
                    continue;
                }
                canvas.stamp(&pixels, CLASS_AMASTIGOTE, &mut rng);
                placed = true;
                break;
            }
            if !placed {
                return Err(infeasible("amastigote"));
            }
        }
    }

    // adhered parasites: fusiform bodies straddling a cell boundary
    if n_adh > 0 {
        let per = (px(CLASS_ADHERED) / n_adh as f64).max(MIN_INSTANCE_AREA);
        for _ in 0..n_adh {
            let area = per * jitter(&mut rng);
            let mut placed = false;
            for _ in 0..PLACEMENT_TRIES {
                let cell = &cell_shapes[rng.random_range(0..cell_shapes.len())];
                let phi = rng.random_range(0.0..2.0 * PI);
                // point on the (axis-aligned approximation of the) boundary
                let br = cell.cr + cell.b * phi.sin();
                let bc = cell.cc + cell.a * phi.cos();
                let body_theta = phi + PI / 2.0 + rng.random_range(-0.4..0.4);
                let e = Ellipse::from_area(
                    br,
                    bc,
                    area,
                    params.promastigote_axis_ratio,
                    body_theta,
                );
                // shift along the outward normal so only `adhered_overlap`
                // of the minor axis sinks into the cell
                let shift = (1.0 - params.adhered_overlap) * e.b;
                let e = Ellipse {
                    cr: e.cr + shift * phi.sin(),
                    cc: e.cc + shift * phi.cos(),
                    ..e
                };
                if !e.fits(h, w, 1.0) {
                    continue;
                }
                let pixels: Vec<_> = e
                    .pixels(h, w)
                    .into_iter()
                    .filter(|&(r, c)| {
                        matches!(canvas.label(r, c), CLASS_BACKGROUND | CLASS_CYTOPLASM)
                    })
                    .collect();
                let touches_cell = pixels
                    .iter()
                    .any(|&(r, c)| canvas.label(r, c) == CLASS_CYTOPLASM);
                let reaches_out = pixels
                    .iter()
                    .any(|&(r, c)| canvas.label(r, c) == CLASS_BACKGROUND);
                if pixels.len() < MIN_INSTANCE_AREA as usize || !touches_cell || !reaches_out {
                    continue;
                }
                // never claim the cytoplasm ring around an amastigote
                if pixels
                    .iter()
                    .any(|&(r, c)| canvas.near_class(r, c, CLASS_AMASTIGOTE))
                {
                    continue;
                }
                if params.non_touching
                    && pixels
                        .iter()
                        .any(|&(r, c)| canvas.near_class(r, c, CLASS_ADHERED))
                {
                    continue;
                }
                canvas.stamp(&pixels, CLASS_ADHERED, &mut rng);
                placed = true;
                break;
            }
            if !placed {
                return Err(infeasible("adhered parasite"));
            }
        }
    }

    // promastigotes: fusiform bodies on open background
    if n_pro > 0 {
        let per = (px(CLASS_PROMASTIGOTE) / n_pro as f64).max(MIN_INSTANCE_AREA);
        for _ in 0..n_pro {
            let area = per * jitter(&mut rng);
            let theta = rng.random_range(0.0..PI);
            let mut placed = false;
            for _ in 0..PLACEMENT_TRIES {
                let cr = rng.random_range(0.0..h as f64);
                let cc = rng.random_range(0.0..w as f64);
                let e = Ellipse::from_area(cr, cc, area, params.promastigote_axis_ratio, theta);
                if !e.fits(h, w, 1.0) {
                    continue;
                }
                let pixels = e.pixels(h, w);
                if pixels.is_empty()
                    || !pixels
                        .iter()
                        .all(|&(r, c)| canvas.label(r, c) == CLASS_BACKGROUND)
                {
                    continue;
                }
                if params.non_touching
                    && pixels
                        .iter()
                        .any(|&(r, c)| canvas.near_class(r, c, CLASS_PROMASTIGOTE))
                {
                    continue;
                }
                canvas.stamp(&pixels, CLASS_PROMASTIGOTE, &mut rng);
                placed = true;
                break;
            }
            if !placed {
                return Err(infeasible("promastigote"));
            }
        }
    }

    // unknown stain blobs: unions of a few overlapping ellipses on background
    let mut blobs_placed = 0;
    if n_blobs > 0 {
        let per = (px(CLASS_UNKNOWN) / n_blobs as f64).max(MIN_INSTANCE_AREA);
        for _ in 0..n_blobs {
            let mut placed = false;
            for _ in 0..PLACEMENT_TRIES {
                let cr = rng.random_range(0.0..h as f64);
                let cc = rng.random_range(0.0..w as f64);
                let lobes = rng.random_range(2..=3);
                let mut pixels = Vec::new();
                let mut ok = true;
                for _ in 0..lobes {
                    let e = Ellipse::from_area(
                        cr + rng.random_range(-2.0..2.0),
                        cc + rng.random_range(-2.0..2.0),
                        per / lobes as f64 * jitter(&mut rng) * 1.6,
                        rng.random_range(1.0..2.0),
                        rng.random_range(0.0..PI),
                    );
                    if !e.fits(h, w, 1.0) {
                        ok = false;
                        break;
                    }
                    pixels.extend(e.pixels(h, w));
                }
                pixels.sort_unstable();
                pixels.dedup();
                if !ok
                    || pixels.is_empty()
                    || !pixels
                        .iter()
                        .all(|&(r, c)| canvas.label(r, c) == CLASS_BACKGROUND)
                {
                    continue;
                }
                canvas.stamp(&pixels, CLASS_UNKNOWN, &mut rng);
                blobs_placed += 1;
                placed = true;
                break;
            }
            if !placed {
                return Err(infeasible("stain blob"));
            }
        }
    }

    let rgb = render(&canvas, &mut rng);
    let labels = LabelMap::from_vec(h, w, canvas.labels.clone())?;
    let image = LabeledImage::new(rgb, labels, format!("img{index:03}"))?;
    Ok(SynthOutput {
        image,
        cell_count: n_cells,
        parasite_counts: [n_pro, n_adh, n_ama],
        blob_count: blobs_placed,
    })
}

/// Giemsa-like base color per class.
fn class_color(class: u8) -> [f64; 3] {
    match class {
        CLASS_BACKGROUND => [0.93, 0.91, 0.96],
        CLASS_CYTOPLASM => [0.78, 0.72, 0.91],
        // host nucleus blue-purple, amastigote material red-violet: the two
        // must stay separable under the per-instance brightness jitter
        CLASS_NUCLEUS => [0.40, 0.30, 0.72],
        CLASS_PROMASTIGOTE => [0.66, 0.50, 0.80],
        CLASS_ADHERED => [0.45, 0.55, 0.72],
        CLASS_AMASTIGOTE => [0.55, 0.20, 0.42],
        _ => [0.72, 0.63, 0.52],
    }
}

fn render(canvas: &Canvas, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let (h, w) = (canvas.height, canvas.width);
    let noise = Normal::new(0.0, 0.02).expect("valid sigma");
    // gentle illumination gradient, bilinear between four corner factors
    let corners: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.98..1.02));
    let mut rgb = Tensor::zeros(vec![3, h, w]);
    for r in 0..h {
        let fr = r as f64 / (h - 1).max(1) as f64;
        for c in 0..w {
            let fc = c as f64 / (w - 1).max(1) as f64;
            let illum = corners[0] * (1.0 - fr) * (1.0 - fc)
                + corners[1] * (1.0 - fr) * fc
                + corners[2] * fr * (1.0 - fc)
                + corners[3] * fr * fc;
            let i = r * w + c;
            let base = class_color(canvas.labels[i]);
            let gain = canvas.brightness[canvas.instance[i] as usize] * illum;
            for ch in 0..3 {
                let v = base[ch] * gain + noise.sample(rng);
                rgb.channel_mut(ch)[i] = v.clamp(0.0, 1.0);
            }
        }
    }
    rgb
}

/// Generates `params.count` images with their placement ground truth.
pub fn synth_generate_detailed(params: &SynthParams) -> Result<Vec<SynthOutput>> {
    params.validate()?;
    (0..params.count as u64)
        .map(|i| generate_one(params, i))
        .collect()
}

/// Generates `params.count` labeled images.
pub fn synth_generate(params: &SynthParams) -> Result<Vec<LabeledImage>> {
    Ok(synth_generate_detailed(params)?
        .into_iter()
        .map(|o| o.image)
        .collect())
}
