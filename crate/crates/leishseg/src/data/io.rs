//! PNG image and label-map I/O plus the dataset manifest.
//!
//! RGB images are 8-bit-per-channel PNGs mapped linearly to `[0, 1]`; label
//! maps are single-channel 8-bit PNGs whose pixel value is the class index.
//! The manifest is a small CSV (`id,rgb,labels,split`) with paths stored
//! relative to the manifest file so a dataset directory can be moved whole.

use super::{LabelMap, LabeledImage, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::fmt;
use std::path::{Path, PathBuf};

/// Writes a `3 x H x W` tensor of `[0, 1]` values as an 8-bit RGB PNG.
pub fn save_rgb(path: &Path, rgb: &Tensor<f64>) -> Result<()> {
    let (c, h, w) = rgb.dims3()?;
    if c != 3 {
        return Err(Error::Shape(format!("expected 3 channels, got {c}")));
    }
    let mut raw = vec![0u8; h * w * 3];
    for ch in 0..3 {
        let plane = rgb.channel(ch);
        for i in 0..h * w {
            raw[i * 3 + ch] = (plane[i].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    let img = image::RgbImage::from_raw(w as u32, h as u32, raw)
        .expect("buffer length matches dimensions");
    img.save(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Loads an 8-bit RGB PNG into a `3 x H x W` tensor of `[0, 1]` values.
pub fn load_rgb(path: &Path) -> Result<Tensor<f64>> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.into_raw();
    let mut t = Tensor::zeros(vec![3, h, w]);
    for ch in 0..3 {
        let plane = t.channel_mut(ch);
        for i in 0..h * w {
            plane[i] = raw[i * 3 + ch] as f64 / 255.0;
        }
    }
    Ok(t)
}

/// Writes a label map as a single-channel 8-bit PNG.
pub fn save_labelmap(path: &Path, labels: &LabelMap) -> Result<()> {
    let img = image::GrayImage::from_raw(
        labels.width() as u32,
        labels.height() as u32,
        labels.data().to_vec(),
    )
    .expect("buffer length matches dimensions");
    img.save(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Loads a label map, rejecting any pixel value outside the class range
/// with the offending file and position named.
pub fn load_labelmap(path: &Path) -> Result<LabelMap> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw = img.into_raw();
    if let Some(pos) = raw.iter().position(|&v| v as usize >= NUM_CLASSES) {
        return Err(Error::Data(format!(
            "{}: label value {} at pixel ({}, {}) exceeds the maximum class {}",
            path.display(),
            raw[pos],
            pos / w,
            pos % w,
            NUM_CLASSES - 1
        )));
    }
    LabelMap::from_vec(h, w, raw)
}

/// Dataset split tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!(
                "unknown split tag '{other}', expected train, val or test"
            ))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Deterministic split assignment: roughly 1/5 test and 1/10 val, at least
/// one of each once the dataset is large enough, the rest train.
pub fn assign_splits(n: usize) -> Vec<Split> {
    match n {
        0 => Vec::new(),
        1 => vec![Split::Train],
        2 => vec![Split::Train, Split::Val],
        _ => {
            let test = (n / 5).max(1);
            let val = (n / 10).max(1);
            let train = n - val - test;
            let mut out = Vec::with_capacity(n);
            out.extend(std::iter::repeat(Split::Train).take(train));
            out.extend(std::iter::repeat(Split::Val).take(val));
            out.extend(std::iter::repeat(Split::Test).take(test));
            out
        }
    }
}

/// One manifest row. Paths are absolute after reading.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub id: String,
    pub rgb: PathBuf,
    pub labels: PathBuf,
    pub split: Split,
}

const MANIFEST_HEADER: &str = "id,rgb,labels,split";

fn relative_to<'a>(path: &'a Path, base: &Path) -> &'a Path {
    path.strip_prefix(base).unwrap_or(path)
}

/// Writes the manifest CSV; stored paths are made relative to its directory.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut text = String::from(MANIFEST_HEADER);
    text.push('\n');
    for e in entries {
        if e.id.is_empty() || e.id.contains(',') {
            return Err(Error::Data(format!("invalid manifest id '{}'", e.id)));
        }
        let rgb = relative_to(&e.rgb, base);
        let labels = relative_to(&e.labels, base);
        text.push_str(&format!(
            "{},{},{},{}\n",
            e.id,
            rgb.display(),
            labels.display(),
            e.split
        ));
    }
    std::fs::write(path, text).map_err(|source| Error::io(path, source))
}

/// Reads a manifest CSV, resolving relative paths against its directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::io(path, source))?;
    let base = path.parent().unwrap_or_else(|| Path::new("")).to_path_buf();
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == MANIFEST_HEADER => {}
        other => {
            return Err(Error::Data(format!(
                "{}: expected manifest header '{MANIFEST_HEADER}', found {:?}",
                path.display(),
                other.unwrap_or("")
            )))
        }
    }
    let mut entries = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Data(format!(
                "{}:{}: expected 4 comma-separated fields, found {}",
                path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        let resolve = |p: &str| {
            let pb = PathBuf::from(p);
            if pb.is_absolute() {
                pb
            } else {
                base.join(pb)
            }
        };
        entries.push(ManifestEntry {
            id: fields[0].to_string(),
            rgb: resolve(fields[1]),
            labels: resolve(fields[2]),
            split: Split::parse(fields[3].trim())?,
        });
    }
    Ok(entries)
}

/// Loads the image pair behind one manifest entry.
pub fn load_entry(entry: &ManifestEntry) -> Result<LabeledImage> {
    let rgb = load_rgb(&entry.rgb)?;
    let labels = load_labelmap(&entry.labels)?;
    LabeledImage::new(rgb, labels, entry.id.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn rgb_round_trip_is_lossless_after_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let mut rng = stream(1, "io-test", 0);
        // quantize first so the round trip is exact
        let t = Tensor::from_fn(vec![3, 6, 5], |_| {
            (rng.random_range(0.0..1.0f64) * 255.0).round() / 255.0
        });
        save_rgb(&path, &t).unwrap();
        let back = load_rgb(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        for (a, b) in t.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn full_white_loads_as_exactly_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("white.png");
        save_rgb(&path, &Tensor::filled(vec![3, 2, 2], 1.0)).unwrap();
        let back = load_rgb(&path).unwrap();
        assert!(back.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn labelmap_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.png");
        let m = LabelMap::from_vec(3, 4, (0..12).map(|i| (i % 7) as u8).collect()).unwrap();
        save_labelmap(&path, &m).unwrap();
        assert_eq!(load_labelmap(&path).unwrap(), m);
    }

    #[test]
    fn labelmap_with_out_of_range_value_is_rejected_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.png");
        let img = image::GrayImage::from_raw(3, 2, vec![0, 1, 2, 3, 7, 5]).unwrap();
        img.save(&path).unwrap();
        let err = load_labelmap(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(1, 1)") && msg.contains('7'), "{msg}");
        assert!(msg.contains("bad.png"), "{msg}");
    }

    #[test]
    fn manifest_round_trips_and_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("manifest.csv");
        let entries = vec![
            ManifestEntry {
                id: "img000".into(),
                rgb: dir.path().join("img000_rgb.png"),
                labels: dir.path().join("img000_labels.png"),
                split: Split::Train,
            },
            ManifestEntry {
                id: "img001".into(),
                rgb: dir.path().join("img001_rgb.png"),
                labels: dir.path().join("img001_labels.png"),
                split: Split::Test,
            },
        ];
        write_manifest(&manifest, &entries).unwrap();
        let text = std::fs::read_to_string(&manifest).unwrap();
        assert!(text.contains("img000_rgb.png"), "{text}");
        assert!(!text.contains(dir.path().to_str().unwrap()), "paths should be relative");
        let back = read_manifest(&manifest).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in entries.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.rgb, b.rgb);
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.split, b.split);
        }
    }

    #[test]
    fn empty_manifest_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("manifest.csv");
        write_manifest(&manifest, &[]).unwrap();
        assert!(read_manifest(&manifest).unwrap().is_empty());
    }

    #[test]
    fn malformed_manifests_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("manifest.csv");
        std::fs::write(&manifest, "wrong,header\n").unwrap();
        assert!(read_manifest(&manifest).is_err());
        std::fs::write(&manifest, "id,rgb,labels,split\na,b,c\n").unwrap();
        assert!(read_manifest(&manifest).is_err());
        std::fs::write(&manifest, "id,rgb,labels,split\na,b,c,dev\n").unwrap();
        assert!(read_manifest(&manifest).is_err());
    }

    #[test]
    fn split_assignment_covers_paper_corpus_size() {
        let splits = assign_splits(45);
        assert_eq!(splits.len(), 45);
        let count = |s: Split| splits.iter().filter(|&&x| x == s).count();
        assert_eq!(count(Split::Test), 9);
        assert_eq!(count(Split::Val), 4);
        assert_eq!(count(Split::Train), 32);
        assert!(assign_splits(0).is_empty());
        assert_eq!(assign_splits(1), vec![Split::Train]);
        for n in [3usize, 5, 8, 20] {
            let s = assign_splits(n);
            assert!(s.contains(&Split::Train));
            assert!(s.contains(&Split::Test), "n={n}");
        }
    }
}
