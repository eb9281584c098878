//! Binary checkpoint container for a trained [`Denoiser`].
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "GENIECKP"
//! version    u32       FORMAT_VERSION
//! header_len u64       byte length of the JSON header
//! header     JSON      schedule, dims, activations, tensor manifest (name + shape)
//! payload    f64 LE    every tensor in manifest order, row-major
//! ```
//!
//! A human-readable metadata sidecar (seed, config, loss curve) lives next to the
//! checkpoint at [`metadata_path`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::denoiser::{Denoiser, Superclasses};
use super::schedule::ScheduleConfig;
use crate::error::{Error, Result};
use crate::nn::{Activation, Layer, Net};

pub const MAGIC: &[u8; 8] = b"GENIECKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub schedule: ScheduleConfig,
    pub data_dim: usize,
    pub n_classes: usize,
    pub time_embed_dim: usize,
    pub class_embed_dim: usize,
    pub activations: Vec<Activation>,
    pub superclass_of: Option<Vec<usize>>,
    pub tensors: Vec<TensorEntry>,
}

pub fn metadata_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    checkpoint.with_file_name(name)
}

fn tensors(model: &Denoiser) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let mut out = Vec::new();
    for (i, layer) in model.net.layers().iter().enumerate() {
        out.push((
            format!("net.{i}.weights"),
            layer.weights.shape().to_vec(),
            layer.weights.iter().copied().collect(),
        ));
        out.push((
            format!("net.{i}.bias"),
            layer.bias.shape().to_vec(),
            layer.bias.to_vec(),
        ));
    }
    out.push((
        "class_embedding".into(),
        model.class_embedding.shape().to_vec(),
        model.class_embedding.iter().copied().collect(),
    ));
    if let Some(sup) = &model.superclasses {
        out.push((
            "superclass_embedding".into(),
            sup.embedding.shape().to_vec(),
            sup.embedding.iter().copied().collect(),
        ));
    }
    out.push((
        "data_second_moment".into(),
        vec![model.data_dim],
        model.data_second_moment.clone(),
    ));
    out
}

pub fn to_bytes(model: &Denoiser) -> Result<Vec<u8>> {
    let tensors = tensors(model);
    let header = CheckpointHeader {
        schedule: model.schedule.config(),
        data_dim: model.data_dim,
        n_classes: model.n_classes,
        time_embed_dim: model.time_embed_dim,
        class_embed_dim: model.class_embed_dim,
        activations: model.net.layers().iter().map(|l| l.activation).collect(),
        superclass_of: model.superclasses.as_ref().map(|s| s.assignment.clone()),
        tensors: tensors
            .iter()
            .map(|(name, shape, _)| TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header_json);
    for (_, _, data) in &tensors {
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Denoiser> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}"
        )));
    }
    let header_len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes")) as usize;
    let header: CheckpointHeader = serde_json::from_slice(r.take(header_len)?)?;

    let mut arrays = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let len = entry.shape.iter().product();
        arrays.push((entry, r.floats(len)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    let mut lookup = |name: &str| -> Result<(Vec<usize>, Vec<f64>)> {
        let idx = arrays
            .iter()
            .position(|(e, _)| e.name == name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
        let (entry, data) = arrays.swap_remove(idx);
        Ok((entry.shape.clone(), data))
    };
    let matrix = |(shape, data): (Vec<usize>, Vec<f64>)| -> Result<Array2<f64>> {
        if shape.len() != 2 {
            return Err(Error::Format(format!(
                "expected a matrix, got shape {shape:?}"
            )));
        }
        Array2::from_shape_vec((shape[0], shape[1]), data).map_err(|e| Error::Format(e.to_string()))
    };

    let mut layers = Vec::with_capacity(header.activations.len());
    for (i, &activation) in header.activations.iter().enumerate() {
        let weights = matrix(lookup(&format!("net.{i}.weights"))?)?;
        let (_, bias) = lookup(&format!("net.{i}.bias"))?;
        layers.push(Layer {
            weights,
            bias: Array1::from(bias),
            activation,
        });
    }
    let net = Net::from_layers(layers)?;
    let class_embedding = matrix(lookup("class_embedding")?)?;
    let superclasses = match header.superclass_of {
        Some(assignment) => Some(Superclasses {
            assignment,
            embedding: matrix(lookup("superclass_embedding")?)?,
        }),
        None => None,
    };
    let (_, data_second_moment) = lookup("data_second_moment")?;
    let expected_input = header.data_dim + header.time_embed_dim + header.class_embed_dim;
    if net.input_dim() != expected_input || net.output_dim() != header.data_dim {
        return Err(Error::Format("net dimensions disagree with header".into()));
    }
    if class_embedding.shape() != [header.n_classes + 1, header.class_embed_dim] {
        return Err(Error::Format(
            "class embedding shape disagrees with header".into(),
        ));
    }
    Ok(Denoiser::assemble(
        net,
        header.schedule.build()?,
        header.data_dim,
        header.n_classes,
        header.time_embed_dim,
        header.class_embed_dim,
        class_embedding,
        superclasses,
        data_second_moment,
    ))
}

pub fn save(model: &Denoiser, path: &Path) -> Result<()> {
    let bytes = to_bytes(model)?;
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Denoiser> {
    from_bytes(&fs::read(path)?)
}
