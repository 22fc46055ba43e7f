//! Binary model checkpoints.
//!
//! Layout: magic + format version, element type name, the architecture
//! config, training progress (next epoch, best validation loss), then every
//! layer's name, parameter values and Adam moments. All numbers little
//! endian, values stored as f64 bits, so a save/load round trip is bit-exact.

use super::{build_unet, UNet, UNetConfig};
use crate::error::{Error, Result};
use crate::tensor::{ParamTensor, Scalar, Tensor};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"LSEGCKPT";
const FORMAT_VERSION: u32 = 1;

/// A model plus the training progress needed to resume a run.
#[derive(Debug, Clone)]
pub struct Checkpoint<T: Scalar = f64> {
    pub model: UNet<T>,
    /// First epoch the resumed run should execute.
    pub next_epoch: usize,
    /// Best validation loss seen so far, if a validation pass has run.
    pub best_val: Option<f64>,
}

fn corrupt(what: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("malformed checkpoint: {what}"))
}

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.inner.write_all(b)
    }
    fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }
    fn str(&mut self, s: &str) -> std::io::Result<()> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }
    fn tensor_data<T: Scalar>(&mut self, t: &Tensor<T>) -> std::io::Result<()> {
        for &v in t.data() {
            self.f64(Scalar::to_f64(v))?;
        }
        Ok(())
    }
    fn param<T: Scalar>(&mut self, p: &ParamTensor<T>) -> std::io::Result<()> {
        self.u32(p.value.shape().len() as u32)?;
        for &d in p.value.shape() {
            self.u64(d as u64)?;
        }
        self.tensor_data(&p.value)?;
        self.tensor_data(&p.m)?;
        self.tensor_data(&p.v)?;
        self.u64(p.step_count)
    }
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> std::io::Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf)?;
        Ok(buf)
    }
    fn u32(&mut self) -> std::io::Result<u32> {
        let mut b = [0u8; 4];
        self.inner.read_exact(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }
    fn u64(&mut self) -> std::io::Result<u64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }
    fn f64(&mut self) -> std::io::Result<f64> {
        let mut b = [0u8; 8];
        self.inner.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32().map_err(corrupt)? as usize;
        if n > 4096 {
            return Err(corrupt(format!("string length {n} is implausible")));
        }
        let b = self.bytes(n).map_err(corrupt)?;
        String::from_utf8(b).map_err(|e| corrupt(format!("non-utf8 string: {e}")))
    }
    fn tensor_into<T: Scalar>(&mut self, t: &mut Tensor<T>) -> Result<()> {
        for v in t.data_mut() {
            *v = T::from_f64(self.f64().map_err(corrupt)?);
        }
        Ok(())
    }
    fn param_into<T: Scalar>(&mut self, name: &str, p: &mut ParamTensor<T>) -> Result<()> {
        let ndim = self.u32().map_err(corrupt)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u64().map_err(corrupt)? as usize);
        }
        if shape != p.value.shape() {
            return Err(Error::Checkpoint(format!(
                "layer {name} stores shape {:?} but the configured network expects {:?}",
                shape,
                p.value.shape()
            )));
        }
        self.tensor_into(&mut p.value)?;
        self.tensor_into(&mut p.m)?;
        self.tensor_into(&mut p.v)?;
        p.step_count = self.u64().map_err(corrupt)?;
        Ok(())
    }
}

pub fn save_checkpoint<T: Scalar>(path: &Path, ckpt: &Checkpoint<T>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = Writer {
        inner: BufWriter::new(file),
    };
    let config = ckpt.model.config();
    (|| -> std::io::Result<()> {
        w.bytes(MAGIC)?;
        w.u32(FORMAT_VERSION)?;
        w.str(T::NAME)?;
        w.u32(config.depth as u32)?;
        w.u32(config.base_filters as u32)?;
        w.u32(config.in_channels as u32)?;
        w.u32(config.num_classes as u32)?;
        w.u64(config.seed)?;
        w.u64(ckpt.next_epoch as u64)?;
        w.bytes(&[ckpt.best_val.is_some() as u8])?;
        w.f64(ckpt.best_val.unwrap_or(0.0))?;
        w.u32(ckpt.model.layers().len() as u32)?;
        Ok(())
    })()
    .map_err(|e| Error::io(path, e))?;
    for layer in ckpt.model.layers() {
        (|| -> std::io::Result<()> {
            w.str(&layer.name)?;
            w.param(&layer.weight)?;
            w.param(&layer.bias)
        })()
        .map_err(|e| Error::io(path, e))?;
    }
    w.inner.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        inner: BufReader::new(file),
    };
    let magic = r.bytes(8).map_err(corrupt)?;
    if magic != MAGIC {
        return Err(corrupt("wrong magic bytes, not a checkpoint file"));
    }
    let version = r.u32().map_err(corrupt)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} is not supported (this build reads {FORMAT_VERSION})"
        )));
    }
    let precision = r.str()?;
    if precision != T::NAME {
        return Err(Error::Checkpoint(format!(
            "checkpoint stores {precision} parameters but this run uses {}; \
             set precision={precision} to load it",
            T::NAME
        )));
    }
    let config = UNetConfig {
        depth: r.u32().map_err(corrupt)? as usize,
        base_filters: r.u32().map_err(corrupt)? as usize,
        in_channels: r.u32().map_err(corrupt)? as usize,
        num_classes: r.u32().map_err(corrupt)? as usize,
        seed: r.u64().map_err(corrupt)?,
    };
    let next_epoch = r.u64().map_err(corrupt)? as usize;
    let has_best = r.bytes(1).map_err(corrupt)?[0];
    let best_raw = r.f64().map_err(corrupt)?;
    let best_val = match has_best {
        0 => None,
        1 => Some(best_raw),
        other => return Err(corrupt(format!("best_val flag byte {other}"))),
    };

    let mut model = build_unet::<T>(&config)?;
    let n_layers = r.u32().map_err(corrupt)? as usize;
    if n_layers != model.layers.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {n_layers} layers but the config builds {}",
            model.layers.len()
        )));
    }
    for layer in &mut model.layers {
        let name = r.str()?;
        if name != layer.name {
            return Err(Error::Checkpoint(format!(
                "layer order mismatch: found {name}, expected {}",
                layer.name
            )));
        }
        r.param_into(&name, &mut layer.weight)?;
        r.param_into(&name, &mut layer.bias)?;
    }

    Ok(Checkpoint {
        model,
        next_epoch,
        best_val,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::AdamHyper;
    use crate::unet::tests_support::trained_toy_net;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let net = trained_toy_net(3);
        let saved = Checkpoint {
            model: net,
            next_epoch: 7,
            best_val: Some(0.123456789),
        };
        save_checkpoint(&path, &saved).unwrap();
        let loaded = load_checkpoint::<f64>(&path).unwrap();

        assert_eq!(loaded.next_epoch, 7);
        assert_eq!(loaded.best_val, Some(0.123456789));
        assert_eq!(loaded.model.config(), saved.model.config());
        for (a, b) in saved.model.layers().iter().zip(loaded.model.layers()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.weight.value.data(), b.weight.value.data());
            assert_eq!(a.weight.m.data(), b.weight.m.data());
            assert_eq!(a.weight.v.data(), b.weight.v.data());
            assert_eq!(a.weight.step_count, b.weight.step_count);
            assert_eq!(a.bias.value.data(), b.bias.value.data());
        }
    }

    #[test]
    fn forward_after_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let net = trained_toy_net(4);
        let input = crate::tensor::Tensor::from_fn(vec![1, 3, 8, 8], |i| (i as f64).sin());
        let (before, _) = net.forward(&input).unwrap();
        save_checkpoint(
            &path,
            &Checkpoint {
                model: net,
                next_epoch: 0,
                best_val: None,
            },
        )
        .unwrap();
        let loaded = load_checkpoint::<f64>(&path).unwrap();
        let (after, _) = loaded.model.forward(&input).unwrap();
        assert_eq!(before.data(), after.data());
    }

    #[test]
    fn rejects_truncated_and_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let net = trained_toy_net(5);
        save_checkpoint(
            &path,
            &Checkpoint {
                model: net,
                next_epoch: 0,
                best_val: None,
            },
        )
        .unwrap();

        let full = std::fs::read(&path).unwrap();
        let cut = path.with_file_name("cut.ckpt");
        std::fs::write(&cut, &full[..full.len() / 2]).unwrap();
        let err = load_checkpoint::<f64>(&cut).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)), "{err}");

        let foreign = path.with_file_name("foreign.ckpt");
        std::fs::write(&foreign, b"PNG not a checkpoint").unwrap();
        let err = load_checkpoint::<f64>(&foreign).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn rejects_precision_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let net = trained_toy_net(6);
        save_checkpoint(
            &path,
            &Checkpoint {
                model: net,
                next_epoch: 0,
                best_val: None,
            },
        )
        .unwrap();
        let err = load_checkpoint::<f32>(&path).unwrap_err();
        assert!(err.to_string().contains("precision=f64"), "{err}");
    }

    #[test]
    fn adam_state_survives_and_training_continues_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let hyper = AdamHyper::with_lr(1e-3);
        let input = crate::tensor::Tensor::from_fn(vec![1, 3, 8, 8], |i| ((i * 7) % 13) as f64);

        let step = |net: &mut crate::unet::UNet<f64>| {
            let (probs, cache) = net.forward(&input).unwrap();
            let up = crate::tensor::Tensor::from_fn(probs.shape().to_vec(), |i| {
                ((i % 3) as f64 - 1.0) * 1e-3
            });
            let grads = net.backward(&cache, &up).unwrap();
            net.zero_grads();
            net.accumulate_grads(&grads).unwrap();
            net.adam_step(&hyper).unwrap();
        };

        let mut reference = trained_toy_net(7);
        let mut resumed = reference.clone();
        save_checkpoint(
            &path,
            &Checkpoint {
                model: resumed,
                next_epoch: 1,
                best_val: None,
            },
        )
        .unwrap();
        resumed = load_checkpoint::<f64>(&path).unwrap().model;

        step(&mut reference);
        step(&mut resumed);
        for (a, b) in reference.layers().iter().zip(resumed.layers()) {
            assert_eq!(a.weight.value.data(), b.weight.value.data());
        }
    }
}
