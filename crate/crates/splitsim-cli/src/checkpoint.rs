//! Checkpoint format: one JSON header line describing the architecture and
//! tensor shapes, followed by a flat blob of little-endian f64 parameter
//! values in graph order.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use splitsim::nn::ModelGraph;
use splitsim::seed::stream_rng;
use splitsim::zoo::{build_lenet5, build_upsampled_client, build_vgg11_lite, LeNetSplit, SplitModelSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub arch: String,
    pub upsampled: bool,
    pub width_scale: f64,
    pub cut_index: usize,
    pub noise_point: String,
    pub sigma: f64,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub sensitivity: Option<f64>,
    pub tensors: Vec<TensorMeta>,
}

impl CheckpointHeader {
    /// The stored privacy budget, when the client trained with one.
    pub fn budget(&self) -> Option<splitsim::dp::PrivacyBudget> {
        match (self.epsilon, self.delta, self.sensitivity) {
            (Some(e), Some(d), Some(s)) => {
                splitsim::dp::PrivacyBudget::new(e, d, s).ok()
            }
            _ => None,
        }
    }
}

fn tensor_names(graph: &ModelGraph) -> Vec<String> {
    let mut names = Vec::new();
    for (layer, lname) in graph.layers().iter().zip(graph.layer_names()) {
        let n = layer.params().len();
        if n >= 1 {
            names.push(format!("{lname}.weight"));
        }
        if n >= 2 {
            names.push(format!("{lname}.bias"));
        }
    }
    names
}

/// Serializes the composed model (client head layers followed by the server
/// tail) with its privacy configuration.
#[allow(clippy::too_many_arguments)]
pub fn save_checkpoint(
    path: &Path,
    header_arch: &str,
    upsampled: bool,
    width_scale: f64,
    spec_cut: usize,
    noise_point: &str,
    sigma: f64,
    budget: Option<&splitsim::dp::PrivacyBudget>,
    graph: &ModelGraph,
) -> Result<()> {
    let names = tensor_names(graph);
    let params = graph.params();
    let tensors: Vec<TensorMeta> = names
        .into_iter()
        .zip(&params)
        .map(|(name, p)| TensorMeta { name, shape: p.shape().to_vec() })
        .collect();
    let header = CheckpointHeader {
        arch: header_arch.to_string(),
        upsampled,
        width_scale,
        cut_index: spec_cut,
        noise_point: noise_point.to_string(),
        sigma,
        epsilon: budget.map(|b| b.epsilon),
        delta: budget.map(|b| b.delta),
        sensitivity: budget.map(|b| b.sensitivity),
        tensors,
    };
    let mut file = std::fs::File::create(path)
        .with_context(|| format!("creating checkpoint {}", path.display()))?;
    serde_json::to_writer(&mut file, &header)?;
    file.write_all(b"\n")?;
    for p in params {
        for v in p.data() {
            file.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Rebuilds the architecture from the header and overwrites its parameters
/// with the stored values.
pub fn load_checkpoint(path: &Path) -> Result<(SplitModelSpec, CheckpointHeader)> {
    let mut file = std::fs::File::open(path)
        .with_context(|| format!("opening checkpoint {}", path.display()))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .context("checkpoint missing header line")?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])?;

    // Parameter values are irrelevant at build time; they are overwritten.
    let mut rng = stream_rng(0, "checkpoint-rebuild");
    let base = match header.arch.as_str() {
        "lenet5-split1" => build_lenet5(LeNetSplit::Split1, &mut rng),
        "lenet5-split2" => build_lenet5(LeNetSplit::Split2, &mut rng),
        "vgg11-lite" => build_vgg11_lite(header.width_scale, &mut rng)?,
        other => bail!("checkpoint names unknown arch {other:?}"),
    };
    let mut spec = if header.upsampled {
        build_upsampled_client(&base, &mut rng)?
    } else {
        base
    };
    if spec.cut_index != header.cut_index {
        bail!(
            "checkpoint cut index {} does not match preset cut {}",
            header.cut_index,
            spec.cut_index
        );
    }

    let blob = &bytes[newline + 1..];
    let expected: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if blob.len() != expected * 8 {
        bail!(
            "checkpoint blob holds {} bytes, header promises {}",
            blob.len(),
            expected * 8
        );
    }
    let mut params = spec.graph.params_mut();
    if params.len() != header.tensors.len() {
        bail!("checkpoint tensor count mismatch");
    }
    let mut cursor = 0;
    for (p, meta) in params.iter_mut().zip(&header.tensors) {
        if p.shape() != meta.shape.as_slice() {
            bail!("checkpoint tensor {} has shape {:?}, expected {:?}", meta.name, meta.shape, p.shape());
        }
        for v in p.data_mut() {
            *v = f64::from_le_bytes(blob[cursor..cursor + 8].try_into().unwrap());
            cursor += 8;
        }
    }
    Ok((spec, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use splitsim::dp::PrivacyBudget;
    use splitsim::zoo::build_lenet5;

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        let mut rng = stream_rng(11, "ckpt-test");
        let spec = build_lenet5(LeNetSplit::Split1, &mut rng);
        let budget = PrivacyBudget::new(2.0, 1e-5, 1.0).unwrap();
        save_checkpoint(
            &path,
            "lenet5-split1",
            false,
            1.0,
            spec.cut_index,
            "MaxP(1)",
            2.422403,
            Some(&budget),
            &spec.graph,
        )
        .unwrap();
        let (loaded, header) = load_checkpoint(&path).unwrap();
        assert_eq!(header.epsilon, Some(2.0));
        assert_eq!(header.budget().unwrap(), budget);
        assert_eq!(header.noise_point, "MaxP(1)");
        let (a, b) = (spec.graph.params(), loaded.graph.params());
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        let mut rng = stream_rng(12, "ckpt-test");
        let spec = build_lenet5(LeNetSplit::Split2, &mut rng);
        save_checkpoint(&path, "lenet5-split2", false, 1.0, spec.cut_index, "MaxP(2)", 0.0, None, &spec.graph)
            .unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
