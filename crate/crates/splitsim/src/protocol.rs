//! The multi-client split-learning state machine: round-robin client training
//! with weight hand-off, smashed-data exchange, the server-side noise-review
//! augmentation, gradient slicing, and byte accounting.
//!
//! The server never sees raw inputs: the only client-to-server values are
//! [`SmashedMsg`] fields, and no operation here takes both raw data and a
//! [`ServerState`].

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::dp::{add_gaussian, calibrate_sigma, clamp01, compose_review_sigma};
use crate::dp::{InjectionPoint, NoiseSpec, PrivacyBudget};
use crate::nn::{softmax_cross_entropy, AdamState, ForwardTrace, ModelGraph};
use crate::seed::stream_rng;
use crate::zoo::SplitModelSpec;
use crate::{Error, Result, Tensor};

/// Client -> server payload: split-layer features, labels, and the payload
/// size (8 bytes per feature value and per label).
#[derive(Debug, Clone)]
pub struct SmashedMsg {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub byte_count: u64,
}

/// Server -> client payload: gradients with the shape of the ORIGINAL
/// (unduplicated) smashed batch.
#[derive(Debug, Clone)]
pub struct GradMsg {
    pub grad: Tensor,
    pub byte_count: u64,
}

/// How the review target scale is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReviewTarget {
    /// Review the hardest distribution among all clients.
    MaxOverClients,
    /// Review a fixed scale (must dominate every client's sigma).
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReviewPolicy {
    pub enabled: bool,
    pub target: ReviewTarget,
}

impl ReviewPolicy {
    pub fn disabled() -> Self {
        Self { enabled: false, target: ReviewTarget::MaxOverClients }
    }

    pub fn max_over_clients() -> Self {
        Self { enabled: true, target: ReviewTarget::MaxOverClients }
    }
}

/// Cached activations between a client's forward and the matching backward.
#[derive(Debug)]
struct PendingForward {
    pre: ForwardTrace,
    clamp_mask: Option<Vec<f64>>,
    post: ForwardTrace,
}

/// One client: its model head, privacy configuration, optimizer state, and
/// local data shard.
#[derive(Debug)]
pub struct ClientState {
    pub id: usize,
    pub part: ModelGraph,
    pub budget: Option<PrivacyBudget>,
    pub noise: NoiseSpec,
    pub opt: AdamState,
    pub shard: Dataset,
    /// Index of the first layer run after the perturbation.
    inj: usize,
    pending: Option<PendingForward>,
}

impl ClientState {
    /// Builds a client from a split spec. The noise sigma is calibrated from
    /// the budget (or zero without one), injected at `point`.
    pub fn new(
        id: usize,
        spec: &SplitModelSpec,
        budget: Option<PrivacyBudget>,
        point: InjectionPoint,
        shard: Dataset,
    ) -> Result<Self> {
        let inj = spec.injection_index(&point)?;
        let sigma = match &budget {
            Some(b) => calibrate_sigma(b)?,
            None => 0.0,
        };
        let part = spec.client_part();
        let opt = AdamState::new(&part);
        Ok(Self {
            id,
            part,
            budget,
            noise: NoiseSpec { sigma, point },
            opt,
            shard,
            inj,
            pending: None,
        })
    }

    /// Forward pass with the client's perturbation, without touching training
    /// state. With σ = 0 this is exactly the plain forward.
    pub fn forward_infer(&self, images: &Tensor, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let (mid, _) = self.part.forward_slice(images, 0..self.inj)?;
        let z = if self.noise.sigma > 0.0 {
            add_gaussian(&clamp01(&mid), self.noise.sigma, rng)
        } else {
            mid
        };
        let (out, _) = self.part.forward_slice(&z, self.inj..self.part.len())?;
        Ok(out)
    }
}

/// The server: model tail, optimizer state, the last trained client, and the
/// review policy.
#[derive(Debug)]
pub struct ServerState {
    pub part: ModelGraph,
    pub opt: AdamState,
    pub last_trained: Option<usize>,
    pub review: ReviewPolicy,
}

impl ServerState {
    pub fn new(part: ModelGraph, review: ReviewPolicy) -> Self {
        let opt = AdamState::new(&part);
        Self { part, opt, last_trained: None, review }
    }
}

/// Independent RNG streams for one training run, so configuration changes in
/// one consumer never perturb another (schedules stay comparable across
/// noise configurations under the same master seed).
#[derive(Debug, Clone)]
pub struct ProtocolRng {
    pub schedule: ChaCha8Rng,
    pub client_noise: ChaCha8Rng,
    pub review_noise: ChaCha8Rng,
}

impl ProtocolRng {
    pub fn from_seed(master: u64) -> Self {
        Self {
            schedule: stream_rng(master, "protocol/schedule"),
            client_noise: stream_rng(master, "protocol/client-noise"),
            review_noise: stream_rng(master, "protocol/review-noise"),
        }
    }
}

/// Seeded-deterministic permutation of the client visit order.
pub fn shuffle_schedule(client_ids: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order = client_ids.to_vec();
    order.shuffle(rng);
    order
}

/// Copies `from`'s client-part parameters into `to`. Architectures must match.
pub fn handoff_weights(from: &ClientState, to: &mut ClientState) -> Result<()> {
    to.part.copy_params_from(&from.part)
}

/// Client-side forward of one batch: evaluate up to the injection point,
/// clamp to [0,1], add N(0, σ²), finish the head, and wrap the result as a
/// [`SmashedMsg`]. σ = 0 skips the perturbation entirely.
pub fn client_forward(
    client: &mut ClientState,
    images: &Tensor,
    labels: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<SmashedMsg> {
    let (mid, pre) = client.part.forward_slice(images, 0..client.inj)?;
    let (z, clamp_mask) = if client.noise.sigma > 0.0 {
        let clamped = clamp01(&mid);
        let mask = mid
            .data()
            .iter()
            .map(|&v| if (0.0..=1.0).contains(&v) { 1.0 } else { 0.0 })
            .collect();
        (
            add_gaussian(&clamped, client.noise.sigma, rng),
            Some(mask),
        )
    } else {
        (mid, None)
    };
    let (features, post) = client.part.forward_slice(&z, client.inj..client.part.len())?;
    let byte_count = 8 * (features.numel() + labels.len()) as u64;
    client.pending = Some(PendingForward { pre, clamp_mask, post });
    Ok(SmashedMsg { features, labels: labels.to_vec(), byte_count })
}

/// Alg. "data preparation": the prepared batch is the original features
/// followed by a noisier duplicate, with labels repeated in the same order.
pub fn server_prepare_data(
    msg: &SmashedMsg,
    sigma_hat: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor, Vec<usize>)> {
    if sigma_hat < 0.0 {
        return Err(Error::InvalidArg(format!("negative review sigma {sigma_hat}")));
    }
    let duplicate = add_gaussian(&msg.features, sigma_hat, rng);
    let features = msg.features.concat_rows(&duplicate)?;
    let mut labels = msg.labels.clone();
    labels.extend_from_slice(&msg.labels);
    Ok((features, labels))
}

/// Server-side step: forward the prepared batch, mean cross-entropy, backward
/// to the server's first layer, Adam update. Returns the gradient w.r.t. the
/// prepared features and the loss.
pub fn server_train_step(
    server: &mut ServerState,
    features: &Tensor,
    labels: &[usize],
    lr: f64,
) -> Result<(Tensor, f64)> {
    let (logits, trace) = server.part.forward(features)?;
    let (loss, dlogits) = softmax_cross_entropy(&logits, labels)?;
    let (dinput, grads) = server.part.backward(&trace, &dlogits)?;
    server.opt.step(&mut server.part, &grads, lr)?;
    Ok((dinput, loss))
}

/// Keeps only the rows belonging to the original smashed batch.
pub fn slice_split_gradients(full_grad: &Tensor, original: &SmashedMsg) -> Result<GradMsg> {
    let b = original.features.batch();
    if full_grad.batch() != 2 * b {
        return Err(Error::Shape(format!(
            "expected {} gradient rows (twice the batch), got {}",
            2 * b,
            full_grad.batch()
        )));
    }
    let grad = full_grad.slice_rows(0, b)?;
    let byte_count = 8 * grad.numel() as u64;
    Ok(GradMsg { grad, byte_count })
}

/// Back-propagates received split-layer gradients through the client head
/// (the injected noise is an identity pass-through; the clamp contributes its
/// 0/1 mask) and applies one Adam step.
pub fn client_backward(client: &mut ClientState, grad: &GradMsg, lr: f64) -> Result<()> {
    let pending = client
        .pending
        .take()
        .ok_or_else(|| Error::Protocol(format!("client {} has no pending forward", client.id)))?;
    let part_len = client.part.len();
    let (mid_grad, grads_post) =
        client
            .part
            .backward_slice(&pending.post, &grad.grad, client.inj..part_len)?;
    let mid_grad = match &pending.clamp_mask {
        Some(mask) => {
            let data = mid_grad
                .data()
                .iter()
                .zip(mask)
                .map(|(&g, &m)| g * m)
                .collect();
            Tensor::from_vec(mid_grad.shape().to_vec(), data)?
        }
        None => mid_grad,
    };
    let (_, grads_pre) = client
        .part
        .backward_slice(&pending.pre, &mid_grad, 0..client.inj)?;
    let mut grads = grads_pre;
    grads.extend(grads_post);
    client.opt.step(&mut client.part, &grads, lr)
}

/// Target-then-compose: σ_target is the max client sigma (or the fixed policy
/// value); σ̂ = sqrt(σ_target² − σᵢ²).
pub fn select_review_sigma(
    current_sigma: f64,
    all_sigmas: &[f64],
    policy: &ReviewPolicy,
) -> Result<f64> {
    if !policy.enabled {
        return Err(Error::Protocol("review sigma requested while review is disabled".into()));
    }
    let target = match policy.target {
        ReviewTarget::MaxOverClients => all_sigmas.iter().cloned().fold(0.0, f64::max),
        ReviewTarget::Fixed(v) => v,
    };
    compose_review_sigma(current_sigma, target)
}

/// Per-client accounting for one global epoch.
#[derive(Debug, Clone)]
pub struct ClientEpochStats {
    pub id: usize,
    pub batches: usize,
    pub mean_loss: f64,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

#[derive(Debug, Clone)]
pub struct EpochReport {
    /// Clients in visit order.
    pub order: Vec<usize>,
    /// Stats per client, in visit order.
    pub per_client: Vec<ClientEpochStats>,
}

/// One global epoch: shuffle the visit order, then for each client hand off
/// weights from the last trained client and run every batch of its shard
/// through forward / (optional review) / server step / slice / backward.
pub fn run_global_epoch(
    clients: &mut [ClientState],
    server: &mut ServerState,
    lr: f64,
    batch_size: usize,
    rng: &mut ProtocolRng,
) -> Result<EpochReport> {
    if clients.is_empty() {
        return Err(Error::Protocol("no clients".into()));
    }
    let ids: Vec<usize> = (0..clients.len()).collect();
    let order = shuffle_schedule(&ids, &mut rng.schedule);
    let sigmas: Vec<f64> = clients.iter().map(|c| c.noise.sigma).collect();
    let mut per_client = Vec::with_capacity(order.len());
    for &i in &order {
        if let Some(last) = server.last_trained {
            if last != i {
                let (from, to) = if last < i {
                    let (l, r) = clients.split_at_mut(i);
                    (&l[last], &mut r[0])
                } else {
                    let (l, r) = clients.split_at_mut(last);
                    (&r[0], &mut l[i])
                };
                handoff_weights(from, to)?;
            }
        }
        let mut stats = ClientEpochStats {
            id: clients[i].id,
            batches: 0,
            mean_loss: 0.0,
            bytes_up: 0,
            bytes_down: 0,
        };
        let n_batches = clients[i].shard.num_batches(batch_size);
        for b in 0..n_batches {
            let start = b * batch_size;
            let len = batch_size.min(clients[i].shard.len() - start);
            let (images, labels) = clients[i].shard.batch(start, len)?;
            let msg = client_forward(&mut clients[i], &images, &labels, &mut rng.client_noise)?;
            stats.bytes_up += msg.byte_count;
            let (gmsg, loss) = if server.review.enabled {
                let sigma_hat = select_review_sigma(sigmas[i], &sigmas, &server.review)?;
                let (pf, pl) = server_prepare_data(&msg, sigma_hat, &mut rng.review_noise)?;
                let (full_grad, loss) = server_train_step(server, &pf, &pl, lr)?;
                (slice_split_gradients(&full_grad, &msg)?, loss)
            } else {
                let (grad, loss) = server_train_step(server, &msg.features, &msg.labels, lr)?;
                let byte_count = 8 * grad.numel() as u64;
                (GradMsg { grad, byte_count }, loss)
            };
            stats.bytes_down += gmsg.byte_count;
            client_backward(&mut clients[i], &gmsg, lr)?;
            stats.mean_loss += loss;
            stats.batches += 1;
        }
        if stats.batches > 0 {
            stats.mean_loss /= stats.batches as f64;
        }
        server.last_trained = Some(i);
        per_client.push(stats);
    }
    Ok(EpochReport { order, per_client })
}

/// Test accuracy of the composed model (client head + server tail) under the
/// client's own noise configuration.
pub fn evaluate_client(
    client: &ClientState,
    server: &ServerState,
    test: &Dataset,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut preds = Vec::with_capacity(test.len());
    for (images, _) in test.batches(batch_size) {
        let smashed = client.forward_infer(&images, rng)?;
        let (logits, _) = server.part.forward(&smashed)?;
        preds.extend(crate::metrics::argmax_rows(&logits));
    }
    crate::metrics::accuracy(&preds, &test.labels)
}
