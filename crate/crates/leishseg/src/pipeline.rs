//! The four pipeline stages behind the command-line interface: dataset
//! synthesis, training, prediction and evaluation.
//!
//! Directory layout under the `out` root: `dataset/` (images, label maps,
//! manifest), `train/` (checkpoints, `loss.csv`), `predict/` (label maps),
//! `evaluate/` (report files). Every stage drops a `config.resolved`
//! snapshot next to its outputs; rerunning a stage from that snapshot
//! reproduces it bit for bit in double precision.
//!
//! Training draws one RNG stream per epoch, derived from the global seed
//! and the epoch number alone. The stream first shuffles the epoch's patch
//! order, then deals one augmentation op per patch. A resumed run therefore
//! replays exactly the epochs an uninterrupted run would have executed.
//! The epoch loss written to `loss.csv` is the mean of its batch losses.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::config::Config;
use crate::data::augment::{augment, random_op};
use crate::data::io::{
    assign_splits, load_entry, load_labelmap, load_rgb, read_manifest, save_labelmap, save_rgb,
    write_manifest, ManifestEntry, Split,
};
use crate::data::patch::{extract_patch, extract_window, plan_patch_grid, stitch_predictions};
use crate::data::sampler::{patch_fraction, sample_epoch};
use crate::data::synth::synth_generate;
use crate::data::{argmax_labels, LabelMap, LabeledImage, NUM_CLASSES, PARASITE_CLASSES};
use crate::error::{Error, Result};
use crate::loss::generalized_dice_loss;
use crate::postprocess::{connected_components, SizeFilterParams};
use crate::report::{build_report, MetricsReport, ReportParams};
use crate::rng::stream;
use crate::tensor::{AdamHyper, Scalar, Tensor};
use crate::unet::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::unet::{build_unet, UNet, UNetConfig};

pub fn out_root(config: &Config) -> PathBuf {
    PathBuf::from(config.get("out"))
}

pub fn dataset_dir(config: &Config) -> PathBuf {
    match config.get("data.dir") {
        "" => out_root(config).join("dataset"),
        dir => PathBuf::from(dir),
    }
}

pub fn train_dir(config: &Config) -> PathBuf {
    out_root(config).join("train")
}

pub fn predict_dir(config: &Config) -> PathBuf {
    out_root(config).join("predict")
}

pub fn evaluate_dir(config: &Config) -> PathBuf {
    out_root(config).join("evaluate")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.to_path_buf(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.to_path_buf(), e))
}

fn append_text(path: &Path, text: &str) -> Result<()> {
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path.to_path_buf(), e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::io(path.to_path_buf(), e))
}

fn write_snapshot(config: &Config, dir: &Path) -> Result<()> {
    write_text(&dir.join("config.resolved"), &config.resolved()?.render())
}

#[derive(Debug)]
pub struct SynthSummary {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub count: usize,
}

/// Generates the synthetic dataset and writes images, label maps and the
/// split manifest.
pub fn run_synth(config: &Config) -> Result<SynthSummary> {
    let params = config.synth_params()?;
    let dir = dataset_dir(config);
    let images_dir = dir.join("images");
    let labels_dir = dir.join("labels");
    ensure_dir(&images_dir)?;
    ensure_dir(&labels_dir)?;

    let outputs = synth_generate(&params)?;
    let splits = assign_splits(outputs.len());
    let mut entries = Vec::with_capacity(outputs.len());
    for (image, split) in outputs.iter().zip(splits) {
        let rgb_path = images_dir.join(format!("{}.png", image.id));
        let labels_path = labels_dir.join(format!("{}.png", image.id));
        save_rgb(&rgb_path, &image.rgb)?;
        save_labelmap(&labels_path, &image.labels)?;
        entries.push(ManifestEntry {
            id: image.id.clone(),
            rgb: rgb_path,
            labels: labels_path,
            split,
        });
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &entries)?;
    write_snapshot(config, &dir)?;
    Ok(SynthSummary {
        dir,
        manifest,
        count: entries.len(),
    })
}

#[derive(Debug)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub total_epochs: usize,
    pub final_train_loss: Option<f64>,
    pub best_val: Option<f64>,
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
    pub loss_log: PathBuf,
}

pub fn run_train(config: &Config) -> Result<TrainSummary> {
    match config.precision()? {
        "f32" => train_impl::<f32>(config),
        _ => train_impl::<f64>(config),
    }
}

fn load_split(entries: &[ManifestEntry], split: Split) -> Result<Vec<LabeledImage>> {
    entries
        .iter()
        .filter(|e| e.split == split)
        .map(load_entry)
        .collect()
}

fn patch_set(images: &[LabeledImage], size: usize, stride: usize) -> Result<Vec<LabeledImage>> {
    let mut patches = Vec::new();
    for image in images {
        let grid = plan_patch_grid(image.height(), image.width(), size, stride)?;
        for &(row, col) in &grid.origins {
            patches.push(extract_patch(image, row, col, size)?);
        }
    }
    Ok(patches)
}

/// Stacks patches into an input batch and its one-hot reference.
fn batch_inputs<T: Scalar>(patches: &[&LabeledImage]) -> Result<(Tensor<T>, Tensor<T>)> {
    let (c, h, w) = patches[0].rgb.dims3()?;
    let mut input = Vec::with_capacity(patches.len() * c * h * w);
    let mut reference = Vec::with_capacity(patches.len() * NUM_CLASSES * h * w);
    for patch in patches {
        if patch.rgb.shape() != patches[0].rgb.shape() {
            return Err(Error::Shape(format!(
                "patch shapes differ: {:?} vs {:?}",
                patch.rgb.shape(),
                patches[0].rgb.shape()
            )));
        }
        input.extend(patch.rgb.data().iter().map(|&v| T::from_f64(v)));
        let onehot = crate::data::one_hot::<T>(&patch.labels, NUM_CLASSES)?;
        reference.extend_from_slice(onehot.data());
    }
    Ok((
        Tensor::new(vec![patches.len(), c, h, w], input)?,
        Tensor::new(vec![patches.len(), NUM_CLASSES, h, w], reference)?,
    ))
}

/// Mean batch loss over a patch list, without gradient work.
fn evaluate_loss<T: Scalar>(
    model: &UNet<T>,
    patches: &[LabeledImage],
    batch_size: usize,
) -> Result<f64> {
    let mut losses = Vec::new();
    for chunk in patches.chunks(batch_size) {
        let refs: Vec<&LabeledImage> = chunk.iter().collect();
        let (input, reference) = batch_inputs::<T>(&refs)?;
        let (probs, _cache) = model.forward(&input)?;
        let (loss, _grad) = generalized_dice_loss(&probs, &reference)?;
        losses.push(Scalar::to_f64(loss));
    }
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

fn check_architecture(found: &UNetConfig, want: &UNetConfig) -> Result<()> {
    let mut diffs = Vec::new();
    if found.depth != want.depth {
        diffs.push(format!("depth {} vs configured {}", found.depth, want.depth));
    }
    if found.base_filters != want.base_filters {
        diffs.push(format!(
            "base_filters {} vs configured {}",
            found.base_filters, want.base_filters
        ));
    }
    if found.in_channels != want.in_channels {
        diffs.push(format!(
            "in_channels {} vs configured {}",
            found.in_channels, want.in_channels
        ));
    }
    if found.num_classes != want.num_classes {
        diffs.push(format!(
            "num_classes {} vs configured {}",
            found.num_classes, want.num_classes
        ));
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "checkpoint does not match the configured model: {}",
            diffs.join(", ")
        )))
    }
}

fn numeric_context(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}, batch {batch}: {msg}")),
        other => other,
    }
}

fn train_impl<T: Scalar>(config: &Config) -> Result<TrainSummary> {
    let unet_config = config.unet_config()?;
    let sampler = config.sampler_config()?;
    let patch_size = config.get_usize("patch.size")?;
    let stride = config.get_usize("patch.stride")?;
    unet_config.check_spatial(patch_size, patch_size)?;
    let batch_size = config.get_usize("train.batch")?;
    if batch_size == 0 {
        return Err(Error::Config("train.batch must be positive".into()));
    }
    let hyper = AdamHyper {
        lr: config.get_f64("train.lr")?,
        strict: true,
        ..AdamHyper::default()
    };
    let seed = config.seed()?;

    let manifest_path = dataset_dir(config).join("manifest.csv");
    let entries = read_manifest(&manifest_path)?;
    let train_images = load_split(&entries, Split::Train)?;
    if train_images.is_empty() {
        return Err(Error::Data(format!(
            "manifest {} lists no train images",
            manifest_path.display()
        )));
    }
    let val_images = load_split(&entries, Split::Val)?;
    let train_patches = patch_set(&train_images, patch_size, stride)?;
    let val_patches = patch_set(&val_images, patch_size, stride)?;
    let fractions: Vec<f64> = train_patches
        .iter()
        .map(|p| patch_fraction(&p.labels, sampler.mode))
        .collect();

    let dir = train_dir(config);
    ensure_dir(&dir)?;
    let best_checkpoint = dir.join("best.ckpt");
    let last_checkpoint = dir.join("last.ckpt");
    let loss_log = dir.join("loss.csv");

    let resume = config.get("train.resume");
    let (mut model, start_epoch, mut best_val) = if resume.is_empty() {
        (build_unet::<T>(&unet_config)?, 0usize, None)
    } else {
        let ckpt = load_checkpoint::<T>(Path::new(resume))?;
        check_architecture(ckpt.model.config(), &unet_config)?;
        (ckpt.model, ckpt.next_epoch, ckpt.best_val)
    };
    if start_epoch == 0 || !loss_log.exists() {
        write_text(&loss_log, "epoch,train_loss,val_loss\n")?;
    }

    let total_epochs = sampler.total_epochs();
    let mut final_train_loss = None;
    let mut epochs_run = 0usize;

    for epoch in start_epoch..total_epochs {
        let mut rng = stream(seed, "train-epoch", epoch as u64);
        let order = sample_epoch(&fractions, epoch, &sampler, &mut rng)?;
        let mut batch_losses = Vec::new();
        for (batch_index, chunk) in order.chunks(batch_size).enumerate() {
            let mut batch = Vec::with_capacity(chunk.len());
            for &patch_index in chunk {
                let op = random_op(&mut rng);
                batch.push(augment(&train_patches[patch_index], op)?);
            }
            let refs: Vec<&LabeledImage> = batch.iter().collect();
            let (input, reference) = batch_inputs::<T>(&refs)?;
            let (probs, cache) = model.forward(&input)?;
            let (loss, grad) = generalized_dice_loss(&probs, &reference)
                .map_err(|e| numeric_context(e, epoch, batch_index))?;
            let grads = model.backward(&cache, &grad)?;
            model.zero_grads();
            model.accumulate_grads(&grads)?;
            model
                .adam_step(&hyper)
                .map_err(|e| numeric_context(e, epoch, batch_index))?;
            batch_losses.push(Scalar::to_f64(loss));
        }
        let train_loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;
        let val_loss = if val_patches.is_empty() {
            None
        } else {
            Some(evaluate_loss(&model, &val_patches, batch_size)?)
        };
        append_text(
            &loss_log,
            &format!(
                "{epoch},{train_loss},{}\n",
                val_loss.map(|v| v.to_string()).unwrap_or_default()
            ),
        )?;
        let criterion = val_loss.unwrap_or(train_loss);
        let improved = best_val.map_or(true, |b| criterion < b);
        if improved {
            best_val = Some(criterion);
        }
        let ckpt = Checkpoint {
            model: model.clone(),
            next_epoch: epoch + 1,
            best_val,
        };
        save_checkpoint(&last_checkpoint, &ckpt)?;
        if improved {
            save_checkpoint(&best_checkpoint, &ckpt)?;
        }
        final_train_loss = Some(train_loss);
        epochs_run += 1;
    }

    if epochs_run == 0 {
        let ckpt = Checkpoint {
            model: model.clone(),
            next_epoch: start_epoch,
            best_val,
        };
        save_checkpoint(&last_checkpoint, &ckpt)?;
        if !best_checkpoint.exists() {
            save_checkpoint(&best_checkpoint, &ckpt)?;
        }
    }
    write_snapshot(config, &dir)?;
    Ok(TrainSummary {
        epochs_run,
        total_epochs,
        final_train_loss,
        best_val,
        best_checkpoint,
        last_checkpoint,
        loss_log,
    })
}

#[derive(Debug)]
pub struct PredictSummary {
    pub dir: PathBuf,
    pub written: Vec<PathBuf>,
}

pub fn run_predict(config: &Config, images: &[PathBuf]) -> Result<PredictSummary> {
    match config.precision()? {
        "f32" => predict_impl::<f32>(config, images),
        _ => predict_impl::<f64>(config, images),
    }
}

fn checkpoint_path(config: &Config) -> PathBuf {
    match config.get("predict.checkpoint") {
        "" => train_dir(config).join("best.ckpt"),
        path => PathBuf::from(path),
    }
}

/// Tiles an image over the patch grid, averages overlapping probabilities
/// and takes the pixel-wise argmax.
pub fn predict_image<T: Scalar>(
    model: &UNet<T>,
    rgb: &Tensor<f64>,
    patch_size: usize,
    stride: usize,
) -> Result<LabelMap> {
    let (_c, h, w) = rgb.dims3()?;
    let grid = plan_patch_grid(h, w, patch_size, stride)?;
    let mut patch_probs = Vec::with_capacity(grid.origins.len());
    for &(row, col) in &grid.origins {
        let window = extract_window(rgb, row, col, patch_size)?;
        let input = Tensor::new(
            vec![1, 3, patch_size, patch_size],
            window.data().iter().map(|&v| T::from_f64(v)).collect(),
        )?;
        let (probs, _cache) = model.forward(&input)?;
        let (_n, chans, ph, pw) = probs.dims4()?;
        patch_probs.push(Tensor::new(vec![chans, ph, pw], probs.data().to_vec())?);
    }
    let stitched = stitch_predictions(&patch_probs, &grid, h, w)?;
    argmax_labels(&stitched)
}

fn predict_impl<T: Scalar>(config: &Config, images: &[PathBuf]) -> Result<PredictSummary> {
    let unet_config = config.unet_config()?;
    let ckpt = load_checkpoint::<T>(&checkpoint_path(config))?;
    check_architecture(ckpt.model.config(), &unet_config)?;
    let model = ckpt.model;
    let patch_size = config.get_usize("patch.size")?;
    let stride = config.get_usize("patch.stride")?;
    unet_config.check_spatial(patch_size, patch_size)?;

    let inputs: Vec<(String, Tensor<f64>)> = if images.is_empty() {
        let entries = read_manifest(&dataset_dir(config).join("manifest.csv"))?;
        let split = Split::parse(config.get("predict.split"))?;
        entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| Ok((e.id.clone(), load_rgb(&e.rgb)?)))
            .collect::<Result<_>>()?
    } else {
        images
            .iter()
            .map(|path| {
                let id = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or_else(|| {
                        Error::Config(format!("cannot derive an id from {}", path.display()))
                    })?
                    .to_string();
                Ok((id, load_rgb(path)?))
            })
            .collect::<Result<_>>()?
    };

    let dir = predict_dir(config);
    ensure_dir(&dir)?;
    let mut written = Vec::with_capacity(inputs.len());
    for (id, rgb) in &inputs {
        let labels = predict_image(&model, rgb, patch_size, stride)?;
        let path = dir.join(format!("{id}.png"));
        save_labelmap(&path, &labels)?;
        written.push(path);
    }
    write_snapshot(config, &dir)?;
    Ok(PredictSummary { dir, written })
}

#[derive(Debug)]
pub struct EvalSummary {
    pub report: MetricsReport,
    pub dir: PathBuf,
    pub pixel_csv: PathBuf,
    pub detection_csv: PathBuf,
    pub table: PathBuf,
}

/// Per-class mean region areas over ground-truth label maps.
pub fn mean_train_areas(
    labels: &[LabelMap],
    connectivity: crate::postprocess::Connectivity,
    k: f64,
) -> Result<SizeFilterParams> {
    let mut filter = SizeFilterParams::new(k)?;
    for &class_id in PARASITE_CLASSES.iter() {
        let areas: Vec<usize> = labels
            .iter()
            .flat_map(|m| connected_components(m, class_id, connectivity))
            .map(|r| r.area())
            .collect();
        if !areas.is_empty() {
            let mean = areas.iter().sum::<usize>() as f64 / areas.len() as f64;
            filter = filter.with_mean(class_id, mean)?;
        }
    }
    Ok(filter)
}

pub fn run_evaluate(config: &Config) -> Result<EvalSummary> {
    let manifest_path = dataset_dir(config).join("manifest.csv");
    let entries = read_manifest(&manifest_path)?;
    let split = Split::parse(config.get("eval.split"))?;
    let eval_entries: Vec<&ManifestEntry> =
        entries.iter().filter(|e| e.split == split).collect();
    if eval_entries.is_empty() {
        return Err(Error::Data(format!(
            "manifest {} lists no {split} images",
            manifest_path.display()
        )));
    }
    let pred_dir = match config.get("eval.pred_dir") {
        "" => predict_dir(config),
        dir => PathBuf::from(dir),
    };

    let mut missing = Vec::new();
    let mut pred_paths = Vec::new();
    for entry in &eval_entries {
        let path = pred_dir.join(format!("{}.png", entry.id));
        if path.exists() {
            pred_paths.push(path);
        } else {
            missing.push(path.display().to_string());
        }
    }
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "{} of {} predictions missing under {}: {}",
            missing.len(),
            eval_entries.len(),
            pred_dir.display(),
            missing.join(", ")
        )));
    }

    let pred_maps: Vec<LabelMap> = pred_paths.iter().map(|p| load_labelmap(p)).collect::<Result<_>>()?;
    let gt_maps: Vec<LabelMap> = eval_entries
        .iter()
        .map(|e| Ok(load_entry(e)?.labels))
        .collect::<Result<_>>()?;

    let connectivity = config.connectivity()?;
    let train_labels: Vec<LabelMap> = entries
        .iter()
        .filter(|e| e.split == Split::Train)
        .map(|e| Ok(load_entry(e)?.labels))
        .collect::<Result<_>>()?;
    let filter = mean_train_areas(
        &train_labels,
        connectivity,
        config.get_f64("eval.size_tolerance")?,
    )?;
    let params = ReportParams {
        filter,
        connectivity,
        thresholds: config.jaccard_thresholds()?,
    };
    let report = build_report(&pred_maps, &gt_maps, &params)?;

    let dir = evaluate_dir(config);
    ensure_dir(&dir)?;
    let pixel_csv = dir.join("pixel.csv");
    let detection_csv = dir.join("detection.csv");
    let table = dir.join("report.txt");
    write_text(&pixel_csv, &report.pixel_csv())?;
    write_text(&detection_csv, &report.detection_csv())?;
    write_text(&table, &report.render_text())?;
    write_snapshot(config, &dir)?;
    Ok(EvalSummary {
        report,
        dir,
        pixel_csv,
        detection_csv,
        table,
    })
}
