//! Model checkpoints.
//!
//! Layout of a checkpoint directory:
//!
//! ```text
//! manifest.json             model config, optimizer config, tensor index, trainer state, checksum
//! tensors/<group>/<name>.f32  one float32 LE blob per tensor
//! ```
//!
//! Groups: `params`, `buffers` (batch-norm running stats), `optimizer`
//! (RMSProp accumulators, in parameter order), `best_params` /
//! `best_buffers` (best model so far), `stats` (feature standardization).
//! Everything is stored in 32 bits, so saving and loading an `f32` model is
//! lossless.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{
    bytes_to_f32, checksum, create_dir, f32_to_bytes, read_file, read_json, write_file, write_json,
    MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::model::{FusionModel, ModelConfig};
use crate::nn::{RmsProp, RmsPropConfig, Tensor};
use crate::standardize::{FeatureStats, Standardizer};

const FORMAT: &str = "exprfuse-checkpoint";
const TENSOR_DIR: &str = "tensors";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: FusionModel<f32>,
    pub optimizer: Option<RmsProp<f32>>,
    pub best: Option<FusionModel<f32>>,
    pub stats: Option<FeatureStats>,
    /// Free-form trainer state (config, history, counters).
    pub state: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    group: String,
    name: String,
    shape: Vec<usize>,
}

impl TensorEntry {
    fn file(&self) -> String {
        format!("{TENSOR_DIR}/{}/{}.f32", self.group, self.name)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    model: ModelConfig,
    param_count: usize,
    optimizer: Option<RmsPropConfig>,
    has_best: bool,
    tensors: Vec<TensorEntry>,
    state: serde_json::Value,
    checksum: String,
}

type Blob = (TensorEntry, Vec<u8>);

fn push_group<'a>(out: &mut Vec<Blob>, group: &str, names: Vec<String>, tensors: impl IntoIterator<Item = &'a Tensor<f32>>) {
    for (name, t) in names.into_iter().zip(tensors) {
        out.push((
            TensorEntry {
                group: group.into(),
                name,
                shape: t.shape().to_vec(),
            },
            f32_to_bytes(t.data()),
        ));
    }
}

fn push_stats(out: &mut Vec<Blob>, stats: &FeatureStats) {
    for (modality, s) in [("audio", &stats.audio), ("video", &stats.video)] {
        for (kind, v) in [("mean", &s.mean), ("std", &s.std)] {
            out.push((
                TensorEntry {
                    group: "stats".into(),
                    name: format!("{modality}.{kind}"),
                    shape: vec![v.len()],
                },
                f32_to_bytes(v),
            ));
        }
    }
}

impl Checkpoint {
    fn blobs(&self) -> Vec<Blob> {
        let mut out = Vec::new();
        let m = &self.model;
        push_group(&mut out, "params", m.param_names(), m.params());
        push_group(&mut out, "buffers", m.buffer_names(), m.buffers());
        if let Some(opt) = &self.optimizer {
            push_group(&mut out, "optimizer", m.param_names(), &opt.accumulators);
        }
        if let Some(best) = &self.best {
            push_group(&mut out, "best_params", best.param_names(), best.params());
            push_group(&mut out, "best_buffers", best.buffer_names(), best.buffers());
        }
        if let Some(stats) = &self.stats {
            push_stats(&mut out, stats);
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        let blobs = self.blobs();
        let mut groups: Vec<&str> = blobs.iter().map(|(e, _)| e.group.as_str()).collect();
        groups.dedup();
        for g in groups {
            create_dir(&dir.join(TENSOR_DIR).join(g))?;
        }
        for (entry, bytes) in &blobs {
            write_file(&dir.join(entry.file()), bytes)?;
        }
        let files: Vec<String> = blobs.iter().map(|(e, _)| e.file()).collect();
        let manifest = Manifest {
            format: FORMAT.into(),
            version: 1,
            model: self.model.config.clone(),
            param_count: self.model.param_count(),
            optimizer: self.optimizer.as_ref().map(|o| o.config),
            has_best: self.best.is_some(),
            checksum: checksum(files.iter().map(String::as_str).zip(blobs.iter().map(|(_, b)| b.as_slice()))),
            tensors: blobs.into_iter().map(|(e, _)| e).collect(),
            state: self.state.clone(),
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let m: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
        if m.format != FORMAT {
            return Err(Error::Format(format!(
                "{}: not a checkpoint (format '{}')",
                dir.display(),
                m.format
            )));
        }
        let files: Vec<String> = m.tensors.iter().map(TensorEntry::file).collect();
        let bytes: Vec<Vec<u8>> = files
            .iter()
            .map(|f| read_file(&dir.join(f)))
            .collect::<Result<_>>()?;
        let sum = checksum(files.iter().map(String::as_str).zip(bytes.iter().map(Vec::as_slice)));
        if sum != m.checksum {
            return Err(Error::Corruption(format!("{}: tensor checksum mismatch", dir.display())));
        }
        let mut tensors = Vec::with_capacity(bytes.len());
        for (entry, b) in m.tensors.iter().zip(&bytes) {
            let data = bytes_to_f32(b, &entry.file())?;
            tensors.push((entry, Tensor::from_vec(&entry.shape, data).map_err(|e| Error::Schema(e.to_string()))?));
        }
        let group = |g: &str| -> Vec<(&TensorEntry, &Tensor<f32>)> {
            tensors.iter().filter(|(e, _)| e.group == g).map(|(e, t)| (*e, t)).collect()
        };

        let model = load_model(&m.model, &group("params"), &group("buffers"))?;
        if model.param_count() != m.param_count {
            return Err(Error::Schema(format!(
                "manifest claims {} parameters, topology has {}",
                m.param_count,
                model.param_count()
            )));
        }
        let optimizer = match m.optimizer {
            Some(cfg) => {
                let acc = group("optimizer");
                let mut opt = RmsProp::new(cfg, &model.param_shapes());
                fill(&model.param_names(), opt.accumulators.iter_mut().collect(), &acc, "optimizer")?;
                Some(opt)
            }
            None => None,
        };
        let best = if m.has_best {
            Some(load_model(&m.model, &group("best_params"), &group("best_buffers"))?)
        } else {
            None
        };
        let stats = group("stats");
        let stats = if stats.is_empty() {
            None
        } else {
            let find = |name: &str| -> Result<Vec<f32>> {
                stats
                    .iter()
                    .find(|(e, _)| e.name == name)
                    .map(|(_, t)| t.data().to_vec())
                    .ok_or_else(|| Error::Schema(format!("checkpoint stats lack '{name}'")))
            };
            Some(FeatureStats {
                audio: Standardizer {
                    mean: find("audio.mean")?,
                    std: find("audio.std")?,
                },
                video: Standardizer {
                    mean: find("video.mean")?,
                    std: find("video.std")?,
                },
            })
        };
        Ok(Self {
            model,
            optimizer,
            best,
            stats,
            state: m.state,
        })
    }
}

fn load_model(
    cfg: &ModelConfig,
    params: &[(&TensorEntry, &Tensor<f32>)],
    buffers: &[(&TensorEntry, &Tensor<f32>)],
) -> Result<FusionModel<f32>> {
    let mut model = FusionModel::<f32>::new(cfg.clone(), 0)?;
    let (pn, bn) = (model.param_names(), model.buffer_names());
    fill(&pn, model.params_mut(), params, "params")?;
    fill(&bn, model.buffers_mut(), buffers, "buffers")?;
    Ok(model)
}

/// Copies stored tensors into `dst` by name, checking names and shapes.
fn fill(names: &[String], dst: Vec<&mut Tensor<f32>>, stored: &[(&TensorEntry, &Tensor<f32>)], group: &str) -> Result<()> {
    if stored.len() != dst.len() {
        return Err(Error::Schema(format!(
            "checkpoint group '{group}' has {} tensors, model expects {}",
            stored.len(),
            dst.len()
        )));
    }
    for ((name, d), (entry, t)) in names.iter().zip(dst).zip(stored) {
        if &entry.name != name || t.shape() != d.shape() {
            return Err(Error::Schema(format!(
                "checkpoint '{group}/{}' {:?} does not match model tensor '{name}' {:?}",
                entry.name,
                t.shape(),
                d.shape()
            )));
        }
        *d = (*t).clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;
    use crate::nn::RecurrentKind;

    fn sample(mode: Mode, kind: RecurrentKind) -> Checkpoint {
        let cfg = ModelConfig {
            audio_units: vec![6, 4],
            video_units: vec![5, 4],
            head_units: 3,
            ..ModelConfig::new(mode, kind, 9)
        };
        let model = FusionModel::<f32>::new(cfg, 3).unwrap();
        let mut opt = RmsProp::new(RmsPropConfig::default(), &model.param_shapes());
        opt.accumulators.iter_mut().enumerate().for_each(|(i, a)| a.fill(i as f32 * 0.5));
        let mut best = model.clone();
        best.params_mut()[0].fill(0.125);
        Checkpoint {
            model,
            optimizer: Some(opt),
            best: Some(best),
            stats: Some(FeatureStats {
                audio: Standardizer {
                    mean: vec![0.5; 168],
                    std: vec![2.0; 168],
                },
                video: Standardizer {
                    mean: vec![-1.0; 9],
                    std: vec![1e-8; 9],
                },
            }),
            state: serde_json::json!({"epoch": 4}),
        }
    }

    fn same(a: &Checkpoint, b: &Checkpoint) {
        assert_eq!(a.model.params(), b.model.params());
        assert_eq!(a.model.buffers(), b.model.buffers());
        assert_eq!(a.model.config, b.model.config);
        assert_eq!(a.optimizer, b.optimizer);
        assert_eq!(a.best.as_ref().map(|m| m.params()), b.best.as_ref().map(|m| m.params()));
        assert_eq!(a.stats, b.stats);
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn round_trip_is_lossless() {
        for (mode, kind) in [(Mode::Fused, RecurrentKind::Gru), (Mode::Audio, RecurrentKind::Lstm), (Mode::Video, RecurrentKind::Gru)] {
            let dir = tempfile::tempdir().unwrap();
            let ck = sample(mode, kind);
            ck.write(dir.path()).unwrap();
            same(&Checkpoint::read(dir.path()).unwrap(), &ck);
        }
    }

    #[test]
    fn writes_are_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        sample(Mode::Fused, RecurrentKind::Gru).write(a.path()).unwrap();
        sample(Mode::Fused, RecurrentKind::Gru).write(b.path()).unwrap();
        let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
        assert_eq!(read(a.path(), MANIFEST_FILE), read(b.path(), MANIFEST_FILE));
        assert_eq!(
            read(a.path(), "tensors/params/audio.0.gru.wz.f32"),
            read(b.path(), "tensors/params/audio.0.gru.wz.f32")
        );
    }

    #[test]
    fn flipped_byte_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        sample(Mode::Fused, RecurrentKind::Gru).write(dir.path()).unwrap();
        let p = dir.path().join("tensors/params/head.output.b.f32");
        let mut b = std::fs::read(&p).unwrap();
        b[0] ^= 1;
        std::fs::write(&p, b).unwrap();
        assert_eq!(Checkpoint::read(dir.path()).unwrap_err().category(), "corruption");
    }
}
