//! Black-box model-inversion attack: query the victim's client part for
//! (input, smashed) pairs, train a decoder that minimizes reconstruction
//! error, and score held-out reconstructions with the image metrics.
//!
//! The attacker only ever sees oracle outputs — nothing here can touch victim
//! parameters or the victim's raw training shard.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::metrics::{mse, psnr, ssim, SsimParams};
use crate::nn::{mse_loss, AdamState, Conv2D, ConvTranspose2D, Layer, ModelGraph};
use crate::zoo::find_upsample_geometry;
use crate::{dp, Error, Result, Tensor};

/// Aligned (input, smashed) pairs obtained by querying the victim with its
/// live noise configuration.
#[derive(Debug, Clone)]
pub struct QuerySet {
    pub inputs: Tensor,
    pub smashed: Tensor,
}

impl QuerySet {
    pub fn len(&self) -> usize {
        self.inputs.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A decoder mapping smashed shape back to input shape.
#[derive(Debug, Clone)]
pub struct InverseNet {
    pub graph: ModelGraph,
}

/// Attacker hyper-parameters. The defaults are the attack configuration used
/// by the experiment runner, recorded in reports rather than asserted.
#[derive(Debug, Clone, Copy)]
pub struct AttackConfig {
    pub hidden_channels: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { hidden_channels: 16, epochs: 30, lr: 2e-3, batch_size: 32 }
    }
}

/// Queries the oracle in batches to build the training pairs.
pub fn collect_pairs<F>(mut oracle: F, samples: &Tensor, batch_size: usize) -> Result<QuerySet>
where
    F: FnMut(&Tensor) -> Result<Tensor>,
{
    let m = samples.batch();
    if m == 0 {
        return Err(Error::InvalidArg("attack needs at least one query sample".into()));
    }
    let mut smashed: Option<Tensor> = None;
    let mut start = 0;
    while start < m {
        let len = batch_size.min(m - start);
        let z = oracle(&samples.slice_rows(start, len)?)?;
        if z.batch() != len {
            return Err(Error::Shape(format!(
                "oracle returned {} rows for a {len}-row query",
                z.batch()
            )));
        }
        smashed = Some(match smashed {
            Some(acc) => acc.concat_rows(&z)?,
            None => z,
        });
        start += len;
    }
    Ok(QuerySet { inputs: samples.clone(), smashed: smashed.expect("m >= 1") })
}

/// Decoder family: one transposed convolution that lands exactly on the input
/// extent, a ReLU, and a same-padded 3x3 convolution onto the input channels.
fn build_decoder(
    smashed_shape: &[usize],
    input_shape: &[usize],
    hidden: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ModelGraph> {
    let [sc, sh, sw] = smashed_shape else {
        return Err(Error::Shape(format!(
            "decoder needs a spatial smashed shape, got {smashed_shape:?}"
        )));
    };
    let [ic, ih, iw] = input_shape else {
        return Err(Error::Shape(format!(
            "decoder needs a spatial input shape, got {input_shape:?}"
        )));
    };
    let (k, s, p) = find_upsample_geometry((*sh, *sw), (*ih, *iw)).ok_or_else(|| {
        Error::InvalidArg(format!(
            "no transposed-conv geometry maps {sh}x{sw} onto {ih}x{iw}"
        ))
    })?;
    ModelGraph::new(
        smashed_shape.to_vec(),
        vec![
            Layer::ConvTranspose2D(ConvTranspose2D::new(*sc, hidden, k, s, p, rng)),
            Layer::ReLU,
            Layer::Conv2D(Conv2D::new(hidden, *ic, 3, 1, 1, rng)),
        ],
    )
}

/// Trains the decoder by Adam on the mean-squared reconstruction objective.
/// Returns the decoder and the mean loss of each epoch.
pub fn train_inverse(
    pairs: &QuerySet,
    cfg: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(InverseNet, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::InvalidArg("cannot train an inverse on zero pairs".into()));
    }
    let mut graph = build_decoder(
        &pairs.smashed.shape()[1..],
        &pairs.inputs.shape()[1..],
        cfg.hidden_channels,
        rng,
    )?;
    let mut opt = AdamState::new(&graph);
    let m = pairs.len();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut total = 0.0;
        let mut batches = 0;
        let mut start = 0;
        while start < m {
            let len = cfg.batch_size.min(m - start);
            let z = pairs.smashed.slice_rows(start, len)?;
            let x = pairs.inputs.slice_rows(start, len)?;
            let (pred, trace) = graph.forward(&z)?;
            let (loss, dpred) = mse_loss(&pred, &x)?;
            let (_, grads) = graph.backward(&trace, &dpred)?;
            opt.step(&mut graph, &grads, cfg.lr)?;
            total += loss;
            batches += 1;
            start += len;
        }
        epoch_losses.push(total / batches as f64);
    }
    Ok((InverseNet { graph }, epoch_losses))
}

/// Decodes a batch of smashed rows into input-shaped reconstructions, clamped
/// to [0, 1] for metric comparability. Pure and deterministic.
pub fn reconstruct(inv: &InverseNet, z: &Tensor) -> Result<Tensor> {
    let (out, _) = inv.graph.forward(z)?;
    Ok(dp::clamp01(&out))
}

/// Per-image and aggregate leakage scores of one attack evaluation.
#[derive(Debug, Clone)]
pub struct AttackReport {
    pub reconstructions: Tensor,
    pub ssim_per_image: Vec<f64>,
    pub mse_per_image: Vec<f64>,
    pub psnr_per_image: Vec<f64>,
    pub mean_ssim: f64,
    pub mean_mse: f64,
    pub mean_psnr: f64,
    /// 1 − mean SSIM; the dissimilarity leakage-resistance score.
    pub mean_dissimilarity: f64,
}

/// End-to-end attack: collect query pairs, train the decoder, reconstruct the
/// held-out images from their (noisy) smashed data, and score them. The eval
/// set must be disjoint from the query samples.
pub fn run_attack<F>(
    mut oracle: F,
    query_samples: &Tensor,
    eval_inputs: &Tensor,
    cfg: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AttackReport>
where
    F: FnMut(&Tensor) -> Result<Tensor>,
{
    let pairs = collect_pairs(&mut oracle, query_samples, cfg.batch_size)?;
    let (inv, _) = train_inverse(&pairs, cfg, rng)?;
    let eval_smashed = collect_pairs(&mut oracle, eval_inputs, cfg.batch_size)?.smashed;
    let recon = reconstruct(&inv, &eval_smashed)?;

    let n = eval_inputs.batch();
    let params = SsimParams::default();
    let mut ssim_v = Vec::with_capacity(n);
    let mut mse_v = Vec::with_capacity(n);
    let mut psnr_v = Vec::with_capacity(n);
    let sample_shape = eval_inputs.shape()[1..].to_vec();
    for i in 0..n {
        let orig = eval_inputs.slice_rows(i, 1)?.reshape(sample_shape.clone())?;
        let rec = recon.slice_rows(i, 1)?.reshape(sample_shape.clone())?;
        ssim_v.push(ssim(&orig, &rec, &params)?);
        mse_v.push(mse(&orig, &rec)?);
        psnr_v.push(psnr(&orig, &rec, params.dynamic_range)?);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean_ssim = mean(&ssim_v);
    Ok(AttackReport {
        reconstructions: recon,
        mean_ssim,
        mean_mse: mean(&mse_v),
        mean_psnr: mean(&psnr_v),
        mean_dissimilarity: 1.0 - mean_ssim,
        ssim_per_image: ssim_v,
        mse_per_image: mse_v,
        psnr_per_image: psnr_v,
    })
}

/// Writes one `[1|3, H, W]` image in [0,1] as a binary PGM (P5) or PPM (P6).
pub fn write_pnm(image: &Tensor, path: &Path) -> Result<()> {
    let (c, h, w) = match image.shape() {
        [c @ (1 | 3), h, w] => (*c, *h, *w),
        other => {
            return Err(Error::Shape(format!(
                "PNM export needs [1|3, H, W], got {other:?}"
            )))
        }
    };
    let mut file = File::create(path)?;
    let tag = if c == 1 { "P5" } else { "P6" };
    write!(file, "{tag}\n{w} {h}\n255\n")?;
    // PNM stores pixels interleaved; our layout is planar.
    let plane = h * w;
    let mut bytes = Vec::with_capacity(c * plane);
    for i in 0..plane {
        for ch in 0..c {
            let v = image.data()[ch * plane + i].clamp(0.0, 1.0);
            bytes.push((v * 255.0).round() as u8);
        }
    }
    file.write_all(&bytes)?;
    Ok(())
}
