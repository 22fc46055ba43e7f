//! Flat key-value run configuration.
//!
//! Every knob lives in one registry with a default; a config file and then
//! command-line overrides are layered on top, so precedence is flags over
//! file over defaults. Unknown keys are rejected wherever they appear.
//!
//! The `synth.*` registry defaults mirror the `paper` profile for display;
//! at resolution time any key not explicitly set follows `synth.profile`
//! instead. `resolved()` pins every key to its final value, which is what
//! run snapshots are written from: feeding a snapshot back in reproduces
//! the exact same parameter structs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::data::sampler::{FractionMode, SamplerConfig};
use crate::data::synth::{Profile, SynthParams};
use crate::error::{Error, Result};
use crate::postprocess::Connectivity;
use crate::unet::UNetConfig;

/// `(key, default)` for every recognized key.
pub const REGISTRY: &[(&str, &str)] = &[
    ("seed", "0"),
    ("precision", "f64"),
    ("out", "runs"),
    ("data.dir", ""),
    ("synth.profile", "paper"),
    ("synth.count", "45"),
    ("synth.height", "384"),
    ("synth.width", "384"),
    ("synth.cells_min", "1"),
    ("synth.cells_max", "2"),
    ("synth.promastigotes_min", "2"),
    ("synth.promastigotes_max", "4"),
    ("synth.adhered_min", "1"),
    ("synth.adhered_max", "2"),
    ("synth.amastigotes_min", "2"),
    ("synth.amastigotes_max", "4"),
    ("synth.promastigote_axis_ratio", "4"),
    ("synth.amastigote_radius_min", "1"),
    ("synth.amastigote_radius_max", "6"),
    ("synth.adhered_overlap", "0.5"),
    ("synth.blob_density", "2e-5"),
    ("synth.non_touching", "true"),
    ("patch.size", "224"),
    ("patch.stride", "112"),
    ("sampler.stage1_epochs", "40"),
    ("sampler.stage2_epochs", "200"),
    ("sampler.threshold", "0.4"),
    ("sampler.mode", "sum"),
    ("model.depth", "2"),
    ("model.base_filters", "8"),
    ("train.lr", "1e-4"),
    ("train.batch", "5"),
    ("train.resume", ""),
    ("predict.split", "test"),
    ("predict.checkpoint", ""),
    ("eval.split", "test"),
    ("eval.pred_dir", ""),
    ("eval.connectivity", "8"),
    ("eval.size_tolerance", "3"),
    ("eval.thresholds", "0.25,0.5,0.75"),
];

#[derive(Debug, Clone)]
pub struct Config {
    values: BTreeMap<String, String>,
    explicit: BTreeSet<String>,
}

impl Default for Config {
    fn default() -> Self {
        Config::new()
    }
}

impl Config {
    pub fn new() -> Self {
        Config {
            values: REGISTRY
                .iter()
                .map(|&(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            explicit: BTreeSet::new(),
        }
    }

    /// Sets one key, rejecting names outside the registry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        if !self.values.contains_key(key) {
            return Err(Error::Config(format!("unknown config key '{key}'")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{origin}:{}: expected 'key = value', got {line:?}",
                    lineno + 1
                ))
            })?;
            self.set(key, value).map_err(|e| {
                Error::Config(format!("{origin}:{}: {e}", lineno + 1))
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Parses a repeatable `key=value` override flag.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, value) = spec.split_once('=').ok_or_else(|| {
            Error::Config(format!("override must look like key=value, got {spec:?}"))
        })?;
        self.set(key, value)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("key '{key}' missing from registry"))
            .as_str()
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    fn parse_err(key: &str, value: &str, ty: &str) -> Error {
        Error::Config(format!("{key} = {value:?} is not a valid {ty}"))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64> {
        let v = self.get(key);
        v.parse().map_err(|_| Self::parse_err(key, v, "integer"))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        let v = self.get(key);
        v.parse().map_err(|_| Self::parse_err(key, v, "integer"))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let v = self.get(key);
        v.parse().map_err(|_| Self::parse_err(key, v, "number"))
    }

    pub fn get_bool(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            other => Err(Self::parse_err(key, other, "boolean")),
        }
    }

    pub fn get_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.get(key);
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Self::parse_err(key, v, "comma-separated number list"))
            })
            .collect()
    }

    /// Renders every key as `key = value`, sorted.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// A copy with every key pinned explicitly to its resolved value, so a
    /// rerun from the rendered text reproduces this configuration exactly.
    pub fn resolved(&self) -> Result<Config> {
        let mut out = self.clone();
        let synth = self.synth_params()?;
        let pin = |out: &mut Config, key: &str, value: String| {
            out.values.insert(key.to_string(), value);
            out.explicit.insert(key.to_string());
        };
        pin(&mut out, "synth.count", synth.count.to_string());
        pin(&mut out, "synth.height", synth.height.to_string());
        pin(&mut out, "synth.width", synth.width.to_string());
        pin(&mut out, "synth.cells_min", synth.cells.0.to_string());
        pin(&mut out, "synth.cells_max", synth.cells.1.to_string());
        pin(
            &mut out,
            "synth.promastigotes_min",
            synth.promastigotes.0.to_string(),
        );
        pin(
            &mut out,
            "synth.promastigotes_max",
            synth.promastigotes.1.to_string(),
        );
        pin(&mut out, "synth.adhered_min", synth.adhered.0.to_string());
        pin(&mut out, "synth.adhered_max", synth.adhered.1.to_string());
        pin(
            &mut out,
            "synth.amastigotes_min",
            synth.amastigotes.0.to_string(),
        );
        pin(
            &mut out,
            "synth.amastigotes_max",
            synth.amastigotes.1.to_string(),
        );
        pin(
            &mut out,
            "synth.promastigote_axis_ratio",
            synth.promastigote_axis_ratio.to_string(),
        );
        pin(
            &mut out,
            "synth.amastigote_radius_min",
            synth.amastigote_radius.0.to_string(),
        );
        pin(
            &mut out,
            "synth.amastigote_radius_max",
            synth.amastigote_radius.1.to_string(),
        );
        pin(
            &mut out,
            "synth.adhered_overlap",
            synth.adhered_overlap.to_string(),
        );
        pin(
            &mut out,
            "synth.blob_density",
            synth.blob_density.to_string(),
        );
        pin(
            &mut out,
            "synth.non_touching",
            synth.non_touching.to_string(),
        );
        for &(key, _) in REGISTRY {
            if key.starts_with("synth.") && key != "synth.profile" {
                continue;
            }
            let value = out.get(key).to_string();
            pin(&mut out, key, value);
        }
        Ok(out)
    }

    pub fn seed(&self) -> Result<u64> {
        self.get_u64("seed")
    }

    pub fn precision(&self) -> Result<&str> {
        match self.get("precision") {
            p @ ("f32" | "f64") => Ok(p),
            other => Err(Self::parse_err("precision", other, "precision (f32 or f64)")),
        }
    }

    /// Synthesis parameters: the profile preset, overlaid with every
    /// explicitly set `synth.*` key, seeded by the global seed.
    pub fn synth_params(&self) -> Result<SynthParams> {
        let profile = Profile::from_name(self.get("synth.profile"))?;
        let mut p = match profile {
            Profile::Paper => SynthParams::paper(),
            Profile::ParasiteDense => SynthParams::parasite_dense(),
        };
        if self.is_explicit("synth.count") {
            p.count = self.get_usize("synth.count")?;
        }
        if self.is_explicit("synth.height") {
            p.height = self.get_usize("synth.height")?;
        }
        if self.is_explicit("synth.width") {
            p.width = self.get_usize("synth.width")?;
        }
        if self.is_explicit("synth.cells_min") {
            p.cells.0 = self.get_usize("synth.cells_min")?;
        }
        if self.is_explicit("synth.cells_max") {
            p.cells.1 = self.get_usize("synth.cells_max")?;
        }
        if self.is_explicit("synth.promastigotes_min") {
            p.promastigotes.0 = self.get_usize("synth.promastigotes_min")?;
        }
        if self.is_explicit("synth.promastigotes_max") {
            p.promastigotes.1 = self.get_usize("synth.promastigotes_max")?;
        }
        if self.is_explicit("synth.adhered_min") {
            p.adhered.0 = self.get_usize("synth.adhered_min")?;
        }
        if self.is_explicit("synth.adhered_max") {
            p.adhered.1 = self.get_usize("synth.adhered_max")?;
        }
        if self.is_explicit("synth.amastigotes_min") {
            p.amastigotes.0 = self.get_usize("synth.amastigotes_min")?;
        }
        if self.is_explicit("synth.amastigotes_max") {
            p.amastigotes.1 = self.get_usize("synth.amastigotes_max")?;
        }
        if self.is_explicit("synth.promastigote_axis_ratio") {
            p.promastigote_axis_ratio = self.get_f64("synth.promastigote_axis_ratio")?;
        }
        if self.is_explicit("synth.amastigote_radius_min") {
            p.amastigote_radius.0 = self.get_f64("synth.amastigote_radius_min")?;
        }
        if self.is_explicit("synth.amastigote_radius_max") {
            p.amastigote_radius.1 = self.get_f64("synth.amastigote_radius_max")?;
        }
        if self.is_explicit("synth.adhered_overlap") {
            p.adhered_overlap = self.get_f64("synth.adhered_overlap")?;
        }
        if self.is_explicit("synth.blob_density") {
            p.blob_density = self.get_f64("synth.blob_density")?;
        }
        if self.is_explicit("synth.non_touching") {
            p.non_touching = self.get_bool("synth.non_touching")?;
        }
        p.seed = self.seed()?;
        p.validate()?;
        Ok(p)
    }

    pub fn unet_config(&self) -> Result<UNetConfig> {
        let config = UNetConfig {
            depth: self.get_usize("model.depth")?,
            base_filters: self.get_usize("model.base_filters")?,
            seed: self.seed()?,
            ..UNetConfig::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        let mode = match self.get("sampler.mode") {
            "sum" => FractionMode::CombinedSum,
            "any" => FractionMode::AnySingle,
            other => {
                return Err(Self::parse_err(
                    "sampler.mode",
                    other,
                    "fraction mode (sum or any)",
                ))
            }
        };
        let config = SamplerConfig {
            stage1_epochs: self.get_usize("sampler.stage1_epochs")?,
            stage2_epochs: self.get_usize("sampler.stage2_epochs")?,
            threshold: self.get_f64("sampler.threshold")?,
            mode,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn connectivity(&self) -> Result<Connectivity> {
        Connectivity::from_name(self.get("eval.connectivity"))
    }

    pub fn jaccard_thresholds(&self) -> Result<Vec<f64>> {
        let thresholds = self.get_f64_list("eval.thresholds")?;
        if thresholds.is_empty() || thresholds.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(Self::parse_err(
                "eval.thresholds",
                self.get("eval.thresholds"),
                "list of thresholds in [0, 1]",
            ));
        }
        Ok(thresholds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_registry() {
        let config = Config::new();
        assert_eq!(config.get("train.lr"), "1e-4");
        assert_eq!(config.get_usize("train.batch").unwrap(), 5);
        assert_eq!(config.get_usize("patch.size").unwrap(), 224);
        assert_eq!(config.get_usize("patch.stride").unwrap(), 112);
        assert_eq!(config.get_f64("sampler.threshold").unwrap(), 0.4);
        assert_eq!(config.get_usize("sampler.stage1_epochs").unwrap(), 40);
        assert_eq!(config.get_usize("sampler.stage2_epochs").unwrap(), 200);
        assert_eq!(config.precision().unwrap(), "f64");
        assert!(!config.is_explicit("train.lr"));
    }

    #[test]
    fn flags_beat_files_beat_defaults() {
        let mut config = Config::new();
        config
            .apply_text("train.lr = 5e-4\nseed = 9\n", "inline")
            .unwrap();
        config.apply_override("train.lr=1e-3").unwrap();
        assert_eq!(config.get_f64("train.lr").unwrap(), 1e-3);
        assert_eq!(config.seed().unwrap(), 9);
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let mut config = Config::new();
        let err = config
            .apply_text("seed = 1\ntrain.lrr = 2\n", "bad.conf")
            .unwrap_err();
        assert!(err.to_string().contains("bad.conf:2"), "{err}");
        assert!(err.to_string().contains("train.lrr"), "{err}");
        assert!(config.apply_override("bogus=1").is_err());
    }

    #[test]
    fn malformed_lines_are_rejected_with_position() {
        let mut config = Config::new();
        let err = config.apply_text("train.lr 1e-3\n", "bad.conf").unwrap_err();
        assert!(err.to_string().contains("bad.conf:1"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let mut config = Config::new();
        config
            .apply_text("# a comment\n\n  seed = 3  \n", "inline")
            .unwrap();
        assert_eq!(config.seed().unwrap(), 3);
    }

    #[test]
    fn registry_synth_defaults_mirror_the_default_profile() {
        let mut config = Config::new();
        for (key, default) in REGISTRY.iter().filter(|(k, _)| k.starts_with("synth.")) {
            config.set(key, default).unwrap();
        }
        let pinned = config.synth_params().unwrap();
        let profile = SynthParams::paper();
        assert_eq!(pinned.count, profile.count);
        assert_eq!(pinned.height, profile.height);
        assert_eq!(pinned.width, profile.width);
        assert_eq!(pinned.cells, profile.cells);
        assert_eq!(pinned.promastigotes, profile.promastigotes);
        assert_eq!(pinned.adhered, profile.adhered);
        assert_eq!(pinned.amastigotes, profile.amastigotes);
        assert_eq!(pinned.amastigote_radius, profile.amastigote_radius);
        assert_eq!(pinned.blob_density, profile.blob_density);
        assert_eq!(pinned.non_touching, profile.non_touching);
    }

    #[test]
    fn profile_overlay_touches_only_unset_keys() {
        let mut config = Config::new();
        config.set("synth.profile", "parasite-dense").unwrap();
        let params = config.synth_params().unwrap();
        assert_eq!(params.height, SynthParams::parasite_dense().height);
        config.set("synth.height", "256").unwrap();
        config.set("synth.width", "256").unwrap();
        let params = config.synth_params().unwrap();
        assert_eq!(params.height, 256);
        assert_eq!(
            params.amastigotes,
            SynthParams::parasite_dense().amastigotes
        );
    }

    #[test]
    fn snapshot_reruns_resolve_identically() {
        let mut config = Config::new();
        config.set("synth.profile", "parasite-dense").unwrap();
        config.set("seed", "11").unwrap();
        config.set("model.depth", "1").unwrap();
        let snapshot = config.resolved().unwrap().render();

        let mut rerun = Config::new();
        rerun.apply_text(&snapshot, "snapshot").unwrap();
        assert_eq!(rerun.resolved().unwrap().render(), snapshot);

        let a = config.synth_params().unwrap();
        let b = rerun.synth_params().unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(
            config.unet_config().unwrap(),
            rerun.unet_config().unwrap()
        );
    }

    #[test]
    fn typed_resolvers_validate_their_domain() {
        let mut config = Config::new();
        config.set("precision", "f16").unwrap();
        assert!(config.precision().is_err());

        let mut config = Config::new();
        config.set("sampler.threshold", "1.5").unwrap();
        assert!(config.sampler_config().is_err());

        let mut config = Config::new();
        config.set("eval.connectivity", "6").unwrap();
        assert!(config.connectivity().is_err());

        let mut config = Config::new();
        config.set("eval.thresholds", "0.25,oops").unwrap();
        assert!(config.jaccard_thresholds().is_err());
        config.set("eval.thresholds", "0.25,0.5,0.8").unwrap();
        assert_eq!(
            config.jaccard_thresholds().unwrap(),
            vec![0.25, 0.5, 0.8]
        );
    }

    #[test]
    fn structs_pick_up_the_global_seed() {
        let mut config = Config::new();
        config.set("seed", "77").unwrap();
        assert_eq!(config.synth_params().unwrap().seed, 77);
        assert_eq!(config.unet_config().unwrap().seed, 77);
        let unet = config.unet_config().unwrap();
        assert_eq!(unet.depth, 2);
        assert_eq!(unet.base_filters, 8);
    }
}
