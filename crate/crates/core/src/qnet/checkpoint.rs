//! Checkpoints: a JSON topology with a manifest of parameter offsets, plus a
//! raw little-endian `f64` blob holding every dense layer's weights
//! (row-major, `in × out`) followed by its bias.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Layer, QNetwork, QuantizerKind, Roles};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeSpec {
    Dense { inputs: Vec<usize>, rows: usize, cols: usize },
    Threshold { inputs: Vec<usize>, quantizer: QuantizerKind },
    Relu { inputs: Vec<usize> },
    Dropout { inputs: Vec<usize>, rate: f64 },
    Add { inputs: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub node: usize,
    /// Offsets in `f64` units into the blob.
    pub weights_offset: usize,
    pub bias_offset: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub version: u32,
    pub input_dim: usize,
    pub nodes: Vec<NodeSpec>,
    pub roles: Roles,
    pub manifest: Vec<ManifestEntry>,
    pub blob_len: usize,
}

pub fn to_parts(net: &QNetwork) -> (Topology, Vec<u8>) {
    let mut nodes = Vec::with_capacity(net.nodes().len());
    let mut manifest = Vec::new();
    let mut blob = Vec::with_capacity(net.parameter_count() * 8);
    let mut offset = 0;
    for (i, n) in net.nodes().iter().enumerate() {
        let inputs = n.inputs.clone();
        nodes.push(match &n.layer {
            Layer::Dense { weights, bias } => {
                for v in weights.iter().chain(bias.iter()) {
                    blob.extend_from_slice(&v.to_le_bytes());
                }
                manifest.push(ManifestEntry {
                    node: i,
                    weights_offset: offset,
                    bias_offset: offset + weights.len(),
                    end: offset + weights.len() + bias.len(),
                });
                offset += weights.len() + bias.len();
                NodeSpec::Dense {
                    inputs,
                    rows: weights.nrows(),
                    cols: weights.ncols(),
                }
            }
            Layer::Threshold(q) => NodeSpec::Threshold { inputs, quantizer: *q },
            Layer::Relu => NodeSpec::Relu { inputs },
            Layer::Dropout { rate } => NodeSpec::Dropout { inputs, rate: *rate },
            Layer::Add => NodeSpec::Add { inputs },
        });
    }
    let topo = Topology {
        version: CHECKPOINT_VERSION,
        input_dim: net.input_dim(),
        nodes,
        roles: net.roles,
        manifest,
        blob_len: offset,
    };
    (topo, blob)
}

pub fn from_parts(topo: &Topology, blob: &[u8]) -> Result<QNetwork> {
    if topo.version != CHECKPOINT_VERSION {
        return Err(Error::Corrupt(format!("unsupported checkpoint version {}", topo.version)));
    }
    if blob.len() != topo.blob_len * 8 {
        return Err(Error::Corrupt(format!(
            "parameter blob has {} bytes, manifest expects {}",
            blob.len(),
            topo.blob_len * 8
        )));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut net = QNetwork::new(topo.input_dim)?;
    let mut entries = topo.manifest.iter();
    for (i, spec) in topo.nodes.iter().enumerate() {
        let (layer, inputs) = match spec {
            NodeSpec::Dense { inputs, rows, cols } => {
                let e = entries
                    .next()
                    .filter(|e| e.node == i)
                    .ok_or_else(|| Error::Corrupt(format!("no manifest entry for dense node {i}")))?;
                let ok = e.weights_offset + rows * cols == e.bias_offset && e.bias_offset + cols == e.end && e.end <= values.len();
                if !ok {
                    return Err(Error::Corrupt(format!("manifest entry for node {i} does not match its shape")));
                }
                let weights = Array2::from_shape_vec((*rows, *cols), values[e.weights_offset..e.bias_offset].to_vec())
                    .map_err(|err| Error::Corrupt(err.to_string()))?;
                let bias = Array1::from(values[e.bias_offset..e.end].to_vec());
                (Layer::Dense { weights, bias }, inputs)
            }
            NodeSpec::Threshold { inputs, quantizer } => (Layer::Threshold(*quantizer), inputs),
            NodeSpec::Relu { inputs } => (Layer::Relu, inputs),
            NodeSpec::Dropout { inputs, rate } => (Layer::Dropout { rate: *rate }, inputs),
            NodeSpec::Add { inputs } => (Layer::Add, inputs),
        };
        net.push(layer, inputs.clone())
            .map_err(|e| Error::Corrupt(format!("node {i}: {e}")))?;
    }
    if entries.next().is_some() {
        return Err(Error::Corrupt("manifest lists more dense nodes than the topology".into()));
    }
    let n = net.nodes().len();
    let dense = |slot: Option<usize>| slot.is_none_or(|s| s < n && matches!(net.nodes()[s].layer, Layer::Dense { .. }));
    let threshold_ok = topo.roles.threshold.is_none_or(|s| s < n && matches!(net.nodes()[s].layer, Layer::Threshold(_)));
    if !dense(topo.roles.latent) || !dense(topo.roles.hyperplane) || !threshold_ok {
        return Err(Error::Corrupt("roles point at nodes of the wrong kind".into()));
    }
    net.roles = topo.roles;
    Ok(net)
}

/// The blob sits next to the JSON file with extension `.bin`.
pub fn blob_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("bin")
}

pub fn save(net: &QNetwork, json_path: &Path) -> Result<()> {
    let (topo, blob) = to_parts(net);
    fs::write(json_path, serde_json::to_string_pretty(&topo)?)?;
    fs::write(blob_path(json_path), blob)?;
    Ok(())
}

pub fn load(json_path: &Path) -> Result<QNetwork> {
    let topo: Topology = serde_json::from_str(&fs::read_to_string(json_path)?)?;
    let blob = fs::read(blob_path(json_path))?;
    from_parts(&topo, &blob)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnet::{build_hann, Head, HannSpec};

    fn net() -> QNetwork {
        build_hann(
            &HannSpec {
                d: 4,
                r: 2,
                k: 3,
                head: Head::Resnet1000,
                output_dim: 3,
                quantizer: QuantizerKind::ste(),
                dropout: 0.1,
            },
            2,
        )
        .unwrap()
    }

    #[test]
    fn file_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let original = net();
        save(&original, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back, original);
        let (topo, blob) = to_parts(&original);
        assert_eq!(blob.len(), original.parameter_count() * 8);
        assert_eq!(topo.manifest.len(), 5);
        assert_eq!(topo.manifest[0].weights_offset, 0);
        assert_eq!(topo.manifest[0].bias_offset, 8);
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let (topo, blob) = to_parts(&net());
        assert!(from_parts(&topo, &blob[..blob.len() - 8]).is_err());
        let mut t = topo.clone();
        t.manifest[1].bias_offset += 1;
        assert!(from_parts(&t, &blob).is_err());
        let mut t = topo.clone();
        t.roles.threshold = Some(0);
        assert!(from_parts(&t, &blob).is_err());
        let mut t = topo;
        t.version = 99;
        assert!(from_parts(&t, &blob).is_err());
    }
}
