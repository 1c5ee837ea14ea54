//! Data-layer oracles: bit-exact IDX fixtures, synthetic-set separability via
//! an independent least-squares classifier, and partitioning invariants.

use std::io::Write;

use splitsim::data::{
    load_cifar10, load_idx, partition_iid, partition_noniid, stratified_subset, synthesize,
    Dataset,
};
use splitsim::Error;

fn write_idx_pair(
    dir: &std::path::Path,
    img_magic: u32,
    lbl_magic: u32,
    pixels: &[u8],
    dims: (u32, u32, u32),
    labels: &[u8],
) -> (std::path::PathBuf, std::path::PathBuf) {
    let img_path = dir.join("images-idx3-ubyte");
    let lbl_path = dir.join("labels-idx1-ubyte");
    let mut f = std::fs::File::create(&img_path).unwrap();
    f.write_all(&img_magic.to_be_bytes()).unwrap();
    f.write_all(&dims.0.to_be_bytes()).unwrap();
    f.write_all(&dims.1.to_be_bytes()).unwrap();
    f.write_all(&dims.2.to_be_bytes()).unwrap();
    f.write_all(pixels).unwrap();
    let mut f = std::fs::File::create(&lbl_path).unwrap();
    f.write_all(&lbl_magic.to_be_bytes()).unwrap();
    f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
    f.write_all(labels).unwrap();
    (img_path, lbl_path)
}

#[test]
fn idx_roundtrip_scales_pixels_into_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let pixels: Vec<u8> = vec![0, 255, 128, 64, 32, 16, 1, 2, 3, 4, 5, 6];
    let (img, lbl) = write_idx_pair(dir.path(), 0x803, 0x801, &pixels, (2, 2, 3), &[1, 0]);
    let ds = load_idx(&img, &lbl).unwrap();
    assert_eq!(ds.images.shape(), &[2, 1, 2, 3]);
    assert_eq!(ds.labels, vec![1, 0]);
    assert_eq!(ds.images.data()[0], 0.0);
    assert_eq!(ds.images.data()[1], 1.0);
    assert_eq!(ds.images.data()[2], 128.0 / 255.0);
    assert!(ds.images.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    // Re-loading yields bit-identical tensors.
    let again = load_idx(&img, &lbl).unwrap();
    assert_eq!(again.images.data(), ds.images.data());
}

#[test]
fn idx_bad_magic_is_a_distinct_error() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lbl) = write_idx_pair(dir.path(), 0x804, 0x801, &[0; 12], (2, 2, 3), &[1, 0]);
    match load_idx(&img, &lbl) {
        Err(Error::BadMagic { found, expected }) => {
            assert_eq!(found, 0x804);
            assert_eq!(expected, 0x803);
        }
        other => panic!("expected BadMagic, got {other:?}"),
    }
}

#[test]
fn idx_truncation_is_a_distinct_error() {
    let dir = tempfile::tempdir().unwrap();
    // Header promises 12 pixel bytes but only 5 are present.
    let (img, lbl) = write_idx_pair(dir.path(), 0x803, 0x801, &[0; 5], (2, 2, 3), &[1, 0]);
    assert!(matches!(load_idx(&img, &lbl), Err(Error::Truncated(_))));
}

#[test]
fn idx_count_mismatch_is_a_distinct_error() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lbl) = write_idx_pair(dir.path(), 0x803, 0x801, &[0; 12], (2, 2, 3), &[1, 0, 2]);
    match load_idx(&img, &lbl) {
        Err(Error::CountMismatch { images, labels }) => {
            assert_eq!((images, labels), (2, 3));
        }
        other => panic!("expected CountMismatch, got {other:?}"),
    }
}

#[test]
fn cifar_binary_batches_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data_batch_1.bin");
    let mut bytes = Vec::new();
    for (label, fill) in [(3u8, 10u8), (7, 200)] {
        bytes.push(label);
        bytes.extend(std::iter::repeat_n(fill, 3072));
    }
    std::fs::write(&path, &bytes).unwrap();
    let ds = load_cifar10(&[path.clone()]).unwrap();
    assert_eq!(ds.images.shape(), &[2, 3, 32, 32]);
    assert_eq!(ds.labels, vec![3, 7]);
    assert!((ds.images.data()[0] - 10.0 / 255.0).abs() < 1e-12);
    assert!((ds.images.data()[3072] - 200.0 / 255.0).abs() < 1e-12);
    // A trailing partial record is a truncation error.
    std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
    assert!(matches!(load_cifar10(&[path]), Err(Error::Truncated(_))));
}

#[test]
fn synthesize_counts_determinism_and_range() {
    let a = synthesize(3, 40, (1, 10, 10), 9).unwrap();
    assert_eq!(a.len(), 120);
    assert_eq!(a.sample_shape(), &[1, 10, 10]);
    assert!(a.images.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    let b = synthesize(3, 40, (1, 10, 10), 9).unwrap();
    assert_eq!(a.images.data(), b.images.data());
    let c = synthesize(3, 40, (1, 10, 10), 10).unwrap();
    assert_ne!(a.images.data(), c.images.data());
}

/// Independent oracle: ridge-regularized least squares on ±1 targets, solved
/// by Gaussian elimination, scored by sign agreement.
fn least_squares_accuracy(ds: &Dataset) -> f64 {
    let n = ds.len();
    let d = ds.images.row_len() + 1; // + bias column
    let x = |i: usize, j: usize| -> f64 {
        if j == d - 1 {
            1.0
        } else {
            ds.images.data()[i * (d - 1) + j]
        }
    };
    let y = |i: usize| -> f64 { if ds.labels[i] == 0 { -1.0 } else { 1.0 } };
    // Normal equations A = XᵀX + λI, b = Xᵀy
    let mut a = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    for i in 0..n {
        for r in 0..d {
            let xr = x(i, r);
            b[r] += xr * y(i);
            for c in 0..d {
                a[r * d + c] += xr * x(i, c);
            }
        }
    }
    for r in 0..d {
        a[r * d + r] += 1e-3;
    }
    // Gaussian elimination with partial pivoting
    let mut w = b;
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&p, &q| a[p * d + col].abs().total_cmp(&a[q * d + col].abs()))
            .unwrap();
        if pivot != col {
            for j in 0..d {
                a.swap(col * d + j, pivot * d + j);
            }
            w.swap(col, pivot);
        }
        let diag = a[col * d + col];
        for row in (col + 1)..d {
            let f = a[row * d + col] / diag;
            for j in col..d {
                a[row * d + j] -= f * a[col * d + j];
            }
            w[row] -= f * w[col];
        }
    }
    for col in (0..d).rev() {
        for j in (col + 1)..d {
            let wj = w[j];
            w[col] -= a[col * d + j] * wj;
        }
        w[col] /= a[col * d + col];
    }
    let mut hits = 0;
    for i in 0..n {
        let score: f64 = (0..d).map(|j| w[j] * x(i, j)).sum();
        if (score >= 0.0) == (y(i) > 0.0) {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

#[test]
fn two_class_blobs_are_linearly_separable() {
    let ds = synthesize(2, 100, (1, 8, 8), 5).unwrap();
    let acc = least_squares_accuracy(&ds);
    assert!(acc > 0.9, "linear oracle reached only {acc}");
}

#[test]
fn iid_partition_is_a_bijection_with_near_equal_sizes() {
    let ds = synthesize(5, 101, (1, 8, 8), 6).unwrap(); // 505 samples
    let shards = partition_iid(&ds, 4, 3).unwrap();
    let sizes: Vec<usize> = shards.iter().map(Dataset::len).collect();
    assert_eq!(sizes.iter().sum::<usize>(), 505);
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    // Disjoint and covering, tracked through per-sample fingerprints.
    let fp = |d: &Dataset, i: usize| {
        let rl = d.images.row_len();
        d.images.data()[i * rl..(i + 1) * rl]
            .iter()
            .sum::<f64>()
            .to_bits()
    };
    let mut seen: Vec<u64> = shards
        .iter()
        .flat_map(|s| (0..s.len()).map(move |i| fp(s, i)))
        .collect();
    let mut all: Vec<u64> = (0..ds.len()).map(|i| fp(&ds, i)).collect();
    seen.sort_unstable();
    all.sort_unstable();
    assert_eq!(seen, all);
}

#[test]
fn iid_partition_of_one_is_a_permutation() {
    let ds = synthesize(3, 10, (1, 8, 8), 7).unwrap();
    let shards = partition_iid(&ds, 1, 0).unwrap();
    assert_eq!(shards.len(), 1);
    assert_eq!(shards[0].len(), ds.len());
    let mut a = shards[0].labels.clone();
    let mut b = ds.labels.clone();
    a.sort_unstable();
    b.sort_unstable();
    assert_eq!(a, b);
    assert!(partition_iid(&ds, 31, 0).is_err());
}

#[test]
fn iid_shard_histograms_stay_within_multinomial_bounds() {
    let ds = synthesize(5, 200, (1, 8, 8), 8).unwrap(); // 1000 samples, balanced
    let shards = partition_iid(&ds, 5, 4).unwrap();
    for shard in &shards {
        for class in 0..5 {
            let obs = shard.labels.iter().filter(|&&l| l == class).count() as f64;
            let p = 0.2;
            let expect = shard.len() as f64 * p;
            let sd = (shard.len() as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (obs - expect).abs() <= 4.0 * sd,
                "class {class}: {obs} vs {expect} ± {}",
                4.0 * sd
            );
        }
    }
}

#[test]
fn noniid_partition_gives_major_share_and_covers() {
    let ds = synthesize(5, 200, (1, 8, 8), 11).unwrap();
    let shards = partition_noniid(&ds, 5, 0.6, 12).unwrap();
    assert_eq!(shards.iter().map(Dataset::len).sum::<usize>(), ds.len());
    for (i, shard) in shards.iter().enumerate() {
        let own = shard.labels.iter().filter(|&&l| l == i).count();
        assert_eq!(own, 120, "shard {i} should hold 60% of its class");
    }
    // Labels, pooled, must reproduce the full dataset's histogram.
    let mut pooled: Vec<usize> = shards.iter().flat_map(|s| s.labels.clone()).collect();
    let mut all = ds.labels.clone();
    pooled.sort_unstable();
    all.sort_unstable();
    assert_eq!(pooled, all);
}

#[test]
fn noniid_with_degenerate_major_looks_iid() {
    let ds = synthesize(4, 100, (1, 8, 8), 13).unwrap();
    let shards = partition_noniid(&ds, 4, 0.25, 14).unwrap();
    for (i, shard) in shards.iter().enumerate() {
        let own = shard.labels.iter().filter(|&&l| l == i).count();
        assert_eq!(own, 25, "shard {i} holds exactly 1/k of its own class");
    }
}

#[test]
fn noniid_validates_arguments() {
    let ds = synthesize(4, 10, (1, 8, 8), 15).unwrap();
    assert!(partition_noniid(&ds, 3, 0.6, 0).is_err()); // k != classes
    assert!(partition_noniid(&ds, 4, 0.1, 0).is_err()); // major below 1/k
    assert!(partition_noniid(&ds, 4, 1.1, 0).is_err());
}

#[test]
fn stratified_subset_keeps_proportions() {
    let ds = synthesize(5, 100, (1, 8, 8), 16).unwrap();
    let sub = stratified_subset(&ds, 100, 17).unwrap();
    assert_eq!(sub.len(), 100);
    for class in 0..5 {
        let cnt = sub.labels.iter().filter(|&&l| l == class).count();
        assert_eq!(cnt, 20, "class {class} misallocated");
    }
    // All shards and subsets keep labels in range.
    assert!(sub.labels.iter().all(|&l| l < sub.num_classes));
}
