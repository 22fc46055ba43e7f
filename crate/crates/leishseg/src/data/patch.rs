//! Overlapping patch grids, patch extraction and prediction stitching.

use super::{LabelMap, LabeledImage};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// A tiling of one image by fixed-size square patches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub stride: usize,
    /// Top-left corners `(row, col)` in scan order.
    pub origins: Vec<(usize, usize)>,
}

fn axis_origins(dim: usize, patch_size: usize, stride: usize) -> Vec<usize> {
    let mut origins = Vec::new();
    let mut o = 0;
    while o + patch_size <= dim {
        origins.push(o);
        o += stride;
    }
    let flush = dim - patch_size;
    if *origins.last().expect("at least origin 0") != flush {
        origins.push(flush);
    }
    origins
}

/// Plans origins that cover every pixel: regular stride steps plus a flush
/// final origin against each border when the stride does not divide evenly.
pub fn plan_patch_grid(
    height: usize,
    width: usize,
    patch_size: usize,
    stride: usize,
) -> Result<PatchGrid> {
    if patch_size == 0 || stride == 0 {
        return Err(Error::Config(
            "patch size and stride must be positive".into(),
        ));
    }
    if patch_size > height.min(width) {
        return Err(Error::Shape(format!(
            "patch size {patch_size} exceeds image dims {height}x{width}"
        )));
    }
    if stride > patch_size {
        return Err(Error::Config(format!(
            "stride {stride} larger than patch size {patch_size} would leave gaps"
        )));
    }
    let rows = axis_origins(height, patch_size, stride);
    let cols = axis_origins(width, patch_size, stride);
    let mut origins = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            origins.push((r, c));
        }
    }
    Ok(PatchGrid {
        patch_size,
        stride,
        origins,
    })
}

/// Crops a `C x H x W` tensor to a square window.
pub fn extract_window<T: Scalar>(
    t: &Tensor<T>,
    row: usize,
    col: usize,
    size: usize,
) -> Result<Tensor<T>> {
    let (c, h, w) = t.dims3()?;
    if row + size > h || col + size > w {
        return Err(Error::Shape(format!(
            "window {size} at ({row}, {col}) leaves the {h}x{w} image"
        )));
    }
    let mut out = Tensor::zeros(vec![c, size, size]);
    for ch in 0..c {
        let src = t.channel(ch);
        let dst = out.channel_mut(ch);
        for r in 0..size {
            let s = (row + r) * w + col;
            dst[r * size..(r + 1) * size].copy_from_slice(&src[s..s + size]);
        }
    }
    Ok(out)
}

/// Crops a label map to a square window.
pub fn extract_labels(
    labels: &LabelMap,
    row: usize,
    col: usize,
    size: usize,
) -> Result<LabelMap> {
    if row + size > labels.height() || col + size > labels.width() {
        return Err(Error::Shape(format!(
            "window {size} at ({row}, {col}) leaves the {}x{} map",
            labels.height(),
            labels.width()
        )));
    }
    let mut data = Vec::with_capacity(size * size);
    for r in 0..size {
        let s = (row + r) * labels.width() + col;
        data.extend_from_slice(&labels.data()[s..s + size]);
    }
    LabelMap::from_vec(size, size, data)
}

/// Crops both the image and its labels, tagging the patch id with the origin.
pub fn extract_patch(
    image: &LabeledImage,
    row: usize,
    col: usize,
    size: usize,
) -> Result<LabeledImage> {
    LabeledImage::new(
        extract_window(&image.rgb, row, col, size)?,
        extract_labels(&image.labels, row, col, size)?,
        format!("{}+{row}+{col}", image.id),
    )
}

/// Averages per-patch probability tensors (`C x P x P`, one per grid origin,
/// same order) back into a full `C x H x W` probability field.
pub fn stitch_predictions<T: Scalar>(
    patches: &[Tensor<T>],
    grid: &PatchGrid,
    height: usize,
    width: usize,
) -> Result<Tensor<T>> {
    if patches.len() != grid.origins.len() {
        return Err(Error::Data(format!(
            "grid has {} origins but {} patch predictions were supplied",
            grid.origins.len(),
            patches.len()
        )));
    }
    if patches.is_empty() {
        return Err(Error::Data("cannot stitch an empty patch list".into()));
    }
    let (chans, ph, pw) = patches[0].dims3()?;
    if ph != grid.patch_size || pw != grid.patch_size {
        return Err(Error::Shape(format!(
            "patch tensors are {ph}x{pw} but the grid expects {}",
            grid.patch_size
        )));
    }
    let mut sum: Tensor<T> = Tensor::zeros(vec![chans, height, width]);
    let mut coverage = vec![0u32; height * width];
    let size = grid.patch_size;
    for (patch, &(row, col)) in patches.iter().zip(&grid.origins) {
        if patch.shape() != patches[0].shape() {
            return Err(Error::Shape(format!(
                "patch shapes differ: {:?} vs {:?}",
                patch.shape(),
                patches[0].shape()
            )));
        }
        if row + size > height || col + size > width {
            return Err(Error::Shape(format!(
                "origin ({row}, {col}) leaves the {height}x{width} canvas"
            )));
        }
        for ch in 0..chans {
            let src = patch.channel(ch);
            let dst = sum.channel_mut(ch);
            for r in 0..size {
                let d = (row + r) * width + col;
                let s = r * size;
                for i in 0..size {
                    dst[d + i] = dst[d + i] + src[s + i];
                }
            }
        }
        for r in 0..size {
            let d = (row + r) * width + col;
            for v in &mut coverage[d..d + size] {
                *v += 1;
            }
        }
    }
    for (i, &cov) in coverage.iter().enumerate() {
        if cov == 0 {
            return Err(Error::Data(format!(
                "pixel ({}, {}) is not covered by any patch",
                i / width,
                i % width
            )));
        }
        let inv = T::one() / T::from_f64(cov as f64);
        for ch in 0..chans {
            let idx = ch * height * width + i;
            sum.data_mut()[idx] = sum.data()[idx] * inv;
        }
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn grid_448_with_224_over_112_is_nine_patches() {
        let g = plan_patch_grid(448, 448, 224, 112).unwrap();
        assert_eq!(g.origins.len(), 9);
        let expected: Vec<(usize, usize)> = [0, 112, 224]
            .iter()
            .flat_map(|&r| [0, 112, 224].iter().map(move |&c| (r, c)))
            .collect();
        assert_eq!(g.origins, expected);
    }

    #[test]
    fn grid_exact_fit_is_single_patch() {
        let g = plan_patch_grid(224, 224, 224, 112).unwrap();
        assert_eq!(g.origins, vec![(0, 0)]);
    }

    #[test]
    fn grid_appends_flush_origin() {
        let g = plan_patch_grid(500, 224, 224, 112).unwrap();
        let rows: Vec<usize> = {
            let mut r: Vec<usize> = g.origins.iter().map(|o| o.0).collect();
            r.dedup();
            r
        };
        assert_eq!(rows, vec![0, 112, 224, 276]);
        assert_eq!(g.origins.len(), 4);
    }

    #[test]
    fn grid_covers_every_pixel() {
        for (h, w, p, s) in [(100, 70, 32, 24), (65, 65, 64, 64), (300, 500, 224, 112)] {
            let g = plan_patch_grid(h, w, p, s).unwrap();
            let mut covered = vec![false; h * w];
            for &(r, c) in &g.origins {
                for rr in r..r + p {
                    for cc in c..c + p {
                        covered[rr * w + cc] = true;
                    }
                }
            }
            assert!(covered.iter().all(|&v| v), "{h}x{w} p={p} s={s}");
        }
    }

    #[test]
    fn grid_matches_closed_form_when_counting() {
        let (h, p, s) = (1500, 224, 112);
        let g = plan_patch_grid(h, h, p, s).unwrap();
        let regular = (h - p) / s + 1;
        let per_axis = regular + usize::from((h - p) % s != 0);
        assert_eq!(g.origins.len(), per_axis * per_axis);
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(plan_patch_grid(100, 100, 128, 64).is_err());
        assert!(plan_patch_grid(100, 100, 32, 33).is_err());
        assert!(plan_patch_grid(100, 100, 0, 1).is_err());
    }

    #[test]
    fn extraction_reads_the_right_window() {
        let w = 5;
        let rgb = Tensor::from_fn(vec![3, 4, w], |i| i as f64);
        let labels = LabelMap::from_vec(4, w, (0..20).map(|i| (i % 7) as u8).collect()).unwrap();
        let img = LabeledImage::new(rgb, labels, "t").unwrap();
        let p = extract_patch(&img, 1, 2, 2).unwrap();
        assert_eq!(p.id, "t+1+2");
        // channel 0 of the source is 0..20 laid out row-major
        assert_eq!(p.rgb.channel(0), &[7.0, 8.0, 12.0, 13.0]);
        assert_eq!(p.labels.data(), &[(7 % 7) as u8, 1, 5, 6]);
        assert!(extract_patch(&img, 3, 0, 2).is_err());
    }

    #[test]
    fn stitch_single_patch_is_identity() {
        let g = plan_patch_grid(4, 4, 4, 4).unwrap();
        let mut rng = stream(1, "patch-test", 0);
        let p = Tensor::from_fn(vec![7, 4, 4], |_| rng.random_range(0.0..1.0f64));
        let out = stitch_predictions(&[p.clone()], &g, 4, 4).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn stitch_averages_overlaps() {
        // two 4-wide patches over a 4x6 canvas overlap on columns 2..4
        let g = plan_patch_grid(4, 6, 4, 2).unwrap();
        assert_eq!(g.origins, vec![(0, 0), (0, 2)]);
        let a = Tensor::<f64>::filled(vec![2, 4, 4], 0.2);
        let b = Tensor::<f64>::filled(vec![2, 4, 4], 0.6);
        let out = stitch_predictions(&[a, b], &g, 4, 6).unwrap();
        for ch in 0..2 {
            let plane = out.channel(ch);
            for r in 0..4 {
                assert_eq!(plane[r * 6], 0.2);
                assert_eq!(plane[r * 6 + 1], 0.2);
                assert!((plane[r * 6 + 2] - 0.4).abs() < 1e-15);
                assert!((plane[r * 6 + 3] - 0.4).abs() < 1e-15);
                assert_eq!(plane[r * 6 + 4], 0.6);
                assert_eq!(plane[r * 6 + 5], 0.6);
            }
        }
    }

    #[test]
    fn stitch_of_non_overlapping_grid_is_exact_mosaic() {
        let g = plan_patch_grid(4, 8, 4, 4).unwrap();
        let mut rng = stream(2, "patch-test", 1);
        let patches: Vec<Tensor<f64>> = (0..g.origins.len())
            .map(|_| Tensor::from_fn(vec![3, 4, 4], |_| rng.random_range(0.0..1.0)))
            .collect();
        let out = stitch_predictions(&patches, &g, 4, 8).unwrap();
        for (k, &(r0, c0)) in g.origins.iter().enumerate() {
            for ch in 0..3 {
                for r in 0..4 {
                    for c in 0..4 {
                        assert_eq!(
                            out.channel(ch)[(r0 + r) * 8 + c0 + c],
                            patches[k].channel(ch)[r * 4 + c]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn stitch_rejects_missing_patches() {
        let g = plan_patch_grid(4, 6, 4, 2).unwrap();
        let a = Tensor::<f64>::filled(vec![2, 4, 4], 0.2);
        assert!(stitch_predictions(&[a], &g, 4, 6).is_err());
    }
}
