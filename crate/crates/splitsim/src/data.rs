//! Dataset loading (IDX), synthetic data generation, and IID / non-IID
//! partitioning across clients.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result, Tensor};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Test,
}

/// Images in `[N, C, H, W]` layout with values in [0, 1] plus class labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: SplitTag,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Shape of one sample, `[C, H, W]`.
    pub fn sample_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    /// A new dataset holding the given rows, in order.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let rl = self.images.row_len();
        let mut data = Vec::with_capacity(indices.len() * rl);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArg(format!("sample index {i} out of range")));
            }
            data.extend_from_slice(&self.images.data()[i * rl..(i + 1) * rl]);
            labels.push(self.labels[i]);
        }
        let mut shape = self.images.shape().to_vec();
        shape[0] = indices.len();
        Ok(Dataset {
            images: Tensor::from_vec(shape, data)?,
            labels,
            num_classes: self.num_classes,
            split: self.split,
        })
    }

    /// Rows `[start, start+len)` as a batch tensor plus labels.
    pub fn batch(&self, start: usize, len: usize) -> Result<(Tensor, Vec<usize>)> {
        let images = self.images.slice_rows(start, len)?;
        Ok((images, self.labels[start..start + len].to_vec()))
    }

    /// Number of batches of size `batch_size` (last partial batch included).
    pub fn num_batches(&self, batch_size: usize) -> usize {
        self.len().div_ceil(batch_size)
    }

    /// Sequential batches in storage order.
    pub fn batches(&self, batch_size: usize) -> impl Iterator<Item = (Tensor, Vec<usize>)> + '_ {
        (0..self.num_batches(batch_size)).map(move |b| {
            let start = b * batch_size;
            let len = batch_size.min(self.len() - start);
            self.batch(start, len).expect("in-range batch")
        })
    }
}

fn read_u32_be(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Truncated(what.to_string()))?;
    Ok(u32::from_be_bytes(buf))
}

/// Parses the big-endian IDX pair used by MNIST-style datasets and scales
/// pixel bytes by 1/255 into [0, 1].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut imgf = File::open(images_path)?;
    let magic = read_u32_be(&mut imgf, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic { found: magic, expected: IDX_IMAGES_MAGIC });
    }
    let count = read_u32_be(&mut imgf, "image count")? as usize;
    let rows = read_u32_be(&mut imgf, "image rows")? as usize;
    let cols = read_u32_be(&mut imgf, "image cols")? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    imgf.read_exact(&mut pixels)
        .map_err(|_| Error::Truncated(format!("{} pixel bytes", pixels.len())))?;

    let mut lblf = File::open(labels_path)?;
    let magic = read_u32_be(&mut lblf, "label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic { found: magic, expected: IDX_LABELS_MAGIC });
    }
    let label_count = read_u32_be(&mut lblf, "label count")? as usize;
    if label_count != count {
        return Err(Error::CountMismatch { images: count, labels: label_count });
    }
    let mut raw_labels = vec![0u8; label_count];
    lblf.read_exact(&mut raw_labels)
        .map_err(|_| Error::Truncated(format!("{label_count} label bytes")))?;

    let data: Vec<f64> = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    Ok(Dataset {
        images: Tensor::from_vec(vec![count, 1, rows, cols], data)?,
        labels,
        num_classes,
        split: SplitTag::Train,
    })
}

/// Reads CIFAR-10 binary batches (one label byte followed by 3072 planar
/// RGB pixel bytes per record), scaled into [0, 1].
pub fn load_cifar10(batch_paths: &[std::path::PathBuf]) -> Result<Dataset> {
    const RECORD: usize = 1 + 3 * 32 * 32;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for path in batch_paths {
        let bytes = std::fs::read(path)?;
        if bytes.is_empty() || bytes.len() % RECORD != 0 {
            return Err(Error::Truncated(format!(
                "{} is not a whole number of {RECORD}-byte records",
                path.display()
            )));
        }
        for rec in bytes.chunks_exact(RECORD) {
            labels.push(rec[0] as usize);
            data.extend(rec[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    let n = labels.len();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    Ok(Dataset {
        images: Tensor::from_vec(vec![n, 3, 32, 32], data)?,
        labels,
        num_classes,
        split: SplitTag::Train,
    })
}

/// Class-conditional blob images: each class owns a distinct set of anchor
/// positions; every sample jitters the anchors and adds pixel noise, then
/// clamps to [0, 1]. Linearly separable enough for smoke tests while still
/// degrading under heavy feature noise.
pub fn synthesize(
    classes: usize,
    per_class: usize,
    shape: (usize, usize, usize),
    seed: u64,
) -> Result<Dataset> {
    if classes == 0 || per_class == 0 {
        return Err(Error::InvalidArg("classes and per_class must be positive".into()));
    }
    let (c, h, w) = shape;
    if c == 0 || h < 8 || w < 8 {
        return Err(Error::InvalidArg(format!(
            "synthetic images need c >= 1 and at least 8x8 pixels, got {c}x{h}x{w}"
        )));
    }
    let mut rng = crate::seed::stream_rng(seed, "synthesize");
    let n = classes * per_class;
    let mut data = vec![0.0; n * c * h * w];
    let mut labels = Vec::with_capacity(n);

    // Two anchors per class on a ring, at class-specific angles.
    let anchors: Vec<[(f64, f64); 2]> = (0..classes)
        .map(|k| {
            let a0 = 2.0 * std::f64::consts::PI * k as f64 / classes as f64;
            let a1 = a0 + std::f64::consts::PI * (0.5 + 0.13 * k as f64);
            let r = 0.30;
            let to_xy = |a: f64, rr: f64| {
                (
                    (0.5 + rr * a.cos()) * (w - 1) as f64,
                    (0.5 + rr * a.sin()) * (h - 1) as f64,
                )
            };
            [to_xy(a0, r), to_xy(a1, r * 0.6)]
        })
        .collect();

    let radius = (h.min(w) as f64) / 7.0;
    for i in 0..n {
        let class = i / per_class;
        labels.push(class);
        let img = &mut data[i * c * h * w..(i + 1) * c * h * w];
        let jitter = radius * 0.8;
        let centers: Vec<(f64, f64)> = anchors[class]
            .iter()
            .map(|&(x, y)| {
                (
                    x + rng.random_range(-jitter..jitter),
                    y + rng.random_range(-jitter..jitter),
                )
            })
            .collect();
        for ci in 0..c {
            let amp = 0.9 - 0.15 * ci as f64;
            for py in 0..h {
                for px in 0..w {
                    let mut v = 0.0;
                    for &(cx, cy) in &centers {
                        let d2 = (px as f64 - cx).powi(2) + (py as f64 - cy).powi(2);
                        v += amp * (-d2 / (2.0 * radius * radius)).exp();
                    }
                    let z: f64 = rng.sample(StandardNormal);
                    img[ci * h * w + py * w + px] = (v + 0.08 * z).clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(Dataset {
        images: Tensor::from_vec(vec![n, c, h, w], data)?,
        labels,
        num_classes: classes,
        split: SplitTag::Train,
    })
}

/// Seeded random permutation split into `k` near-equal disjoint shards
/// (sizes differ by at most one).
pub fn partition_iid(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<Dataset>> {
    if k == 0 || k > ds.len() {
        return Err(Error::InvalidArg(format!(
            "cannot split {} samples across {k} clients",
            ds.len()
        )));
    }
    let mut rng = crate::seed::stream_rng(seed, "partition-iid");
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng);
    let base = ds.len() / k;
    let extra = ds.len() % k;
    let mut shards = Vec::with_capacity(k);
    let mut cursor = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        shards.push(ds.select(&order[cursor..cursor + size])?);
        cursor += size;
    }
    Ok(shards)
}

/// Class-skewed split: shard `i` receives `major` of class `i`'s samples and
/// an even random share of every other class's remainder. Requires one shard
/// per class.
pub fn partition_noniid(ds: &Dataset, k: usize, major: f64, seed: u64) -> Result<Vec<Dataset>> {
    if k != ds.num_classes {
        return Err(Error::InvalidArg(format!(
            "non-IID partitioning requires k == classes ({} vs {})",
            k, ds.num_classes
        )));
    }
    // The degenerate major = 1/k is allowed: it reduces to an IID-like split.
    if !(major >= 1.0 / k as f64 && major <= 1.0) {
        return Err(Error::InvalidArg(format!(
            "major fraction {major} out of [1/{k}, 1]"
        )));
    }
    let mut rng = crate::seed::stream_rng(seed, "partition-noniid");
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in 0..k {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let major_count = (major * idx.len() as f64).round() as usize;
        let major_count = major_count.min(idx.len());
        assigned[class].extend_from_slice(&idx[..major_count]);
        // Remainder spreads evenly (round-robin from a shuffled start) over
        // the other shards.
        let others: Vec<usize> = (0..k).filter(|&s| s != class).collect();
        let start = rng.random_range(0..others.len());
        for (j, &i) in idx[major_count..].iter().enumerate() {
            assigned[others[(start + j) % others.len()]].push(i);
        }
    }
    assigned
        .iter_mut()
        .map(|idx| {
            idx.shuffle(&mut rng);
            ds.select(idx)
        })
        .collect()
}

/// Class-stratified random subset of `n` samples (proportional per class).
pub fn stratified_subset(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || n > ds.len() {
        return Err(Error::InvalidArg(format!(
            "cannot take {n} of {} samples",
            ds.len()
        )));
    }
    let mut rng = crate::seed::stream_rng(seed, "stratified-subset");
    let mut picked = Vec::with_capacity(n);
    let mut remaining = n;
    let mut left = ds.len();
    for class in 0..ds.num_classes {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        idx.shuffle(&mut rng);
        // Proportional allocation that always sums to n.
        let take = ((remaining as f64) * idx.len() as f64 / left as f64).round() as usize;
        let take = take.min(idx.len()).min(remaining);
        left -= idx.len();
        remaining -= take;
        picked.extend_from_slice(&idx[..take]);
    }
    picked.shuffle(&mut rng);
    ds.select(&picked)
}
