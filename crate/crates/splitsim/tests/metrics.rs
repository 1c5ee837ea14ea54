//! Metric identities and independent-oracle checks for SSIM, MSE, PSNR,
//! distance correlation, and accuracy.

use rand::Rng;
use splitsim::metrics::{accuracy, distance_correlation, mse, psnr, ssim, SsimParams};
use splitsim::seed::stream_rng;
use splitsim::Tensor;

/// Brute-force SSIM oracle: walks every window, computing the statistics in
/// two explicit passes (mean first, then moments), independent of the library
/// implementation's single-pass accumulation.
fn ssim_oracle(a: &Tensor, b: &Tensor, win: usize, k1: f64, k2: f64, l: f64) -> f64 {
    let &[h, w] = a.shape() else { panic!("oracle expects [H, W]") };
    let c1 = (k1 * l) * (k1 * l);
    let c2 = (k2 * l) * (k2 * l);
    let n = (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0;
    for oy in 0..=(h - win) {
        for ox in 0..=(w - win) {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for ky in 0..win {
                for kx in 0..win {
                    xs.push(a.data()[(oy + ky) * w + ox + kx]);
                    ys.push(b.data()[(oy + ky) * w + ox + kx]);
                }
            }
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let vx = xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>() / n;
            let vy = ys.iter().map(|y| (y - my) * (y - my)).sum::<f64>() / n;
            let cov = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (x - mx) * (y - my))
                .sum::<f64>()
                / n;
            total += (2.0 * mx * my + c1) * (2.0 * cov + c2)
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

fn random_image(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = stream_rng(seed, "metrics-image");
    Tensor::from_vec(vec![h, w], (0..h * w).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

#[test]
fn ssim_of_identical_images_is_exactly_one() {
    let x = random_image(12, 12, 1);
    assert_eq!(ssim(&x, &x, &SsimParams::default()).unwrap(), 1.0);
}

#[test]
fn ssim_of_inverted_binary_image_is_negative() {
    // 8x8 checkerboard: every window has positive variance.
    let data: Vec<f64> = (0..64).map(|i| ((i / 8 + i % 8) % 2) as f64).collect();
    let x = Tensor::from_vec(vec![8, 8], data).unwrap();
    let inv = x.map(|v| 1.0 - v);
    assert!(ssim(&x, &inv, &SsimParams::default()).unwrap() < 0.0);
}

#[test]
fn ssim_matches_brute_force_oracle_on_8x8_pair() {
    let a = random_image(8, 8, 2);
    let b = random_image(8, 8, 3);
    let p = SsimParams::default();
    let got = ssim(&a, &b, &p).unwrap();
    let want = ssim_oracle(&a, &b, p.window, p.k1, p.k2, p.dynamic_range);
    assert!((got - want).abs() < 1e-12, "{got} vs oracle {want}");
}

#[test]
fn ssim_is_symmetric() {
    let a = random_image(10, 10, 4);
    let b = random_image(10, 10, 5);
    let p = SsimParams::default();
    let ab = ssim(&a, &b, &p).unwrap();
    let ba = ssim(&b, &a, &p).unwrap();
    assert!((ab - ba).abs() < 1e-12);
}

#[test]
fn ssim_is_continuous_near_identity() {
    let a = random_image(10, 10, 6);
    let mut rng = stream_rng(7, "perturb");
    let b = a.map(|v| v + 1e-6 * rng.random_range(-1.0..1.0));
    assert!(ssim(&a, &b, &SsimParams::default()).unwrap() > 0.9999);
}

#[test]
fn ssim_rejects_mismatched_or_tiny_shapes() {
    let a = random_image(8, 8, 8);
    let b = random_image(9, 9, 9);
    assert!(ssim(&a, &b, &SsimParams::default()).is_err());
    let tiny = random_image(4, 4, 10);
    assert!(ssim(&tiny, &tiny, &SsimParams::default()).is_err());
}

#[test]
fn ssim_averages_over_channels() {
    let a = random_image(8, 8, 11);
    let b = random_image(8, 8, 12);
    let p = SsimParams::default();
    let per_channel = (ssim(&a, &a, &p).unwrap() + ssim(&a, &b, &p).unwrap()) / 2.0;
    let stacked_a = a.concat_rows(&a).unwrap().reshape(vec![2, 8, 8]).unwrap();
    let stacked_b = a.concat_rows(&b).unwrap().reshape(vec![2, 8, 8]).unwrap();
    let got = ssim(&stacked_a, &stacked_b, &p).unwrap();
    assert!((got - per_channel).abs() < 1e-12);
}

#[test]
fn mse_identities() {
    let x = random_image(6, 6, 13);
    assert_eq!(mse(&x, &x).unwrap(), 0.0);
    let a = Tensor::from_vec(vec![2], vec![0.0, 0.0]).unwrap();
    let b = Tensor::from_vec(vec![2], vec![1.0, 1.0]).unwrap();
    assert_eq!(mse(&a, &b).unwrap(), 1.0);
    let c = random_image(6, 6, 14);
    assert_eq!(mse(&x, &c).unwrap(), mse(&c, &x).unwrap());
}

#[test]
fn psnr_identities() {
    let zeros = Tensor::zeros(vec![4, 4]);
    let ones = Tensor::full(vec![4, 4], 1.0);
    assert!((psnr(&zeros, &ones, 1.0).unwrap()).abs() < 1e-12); // mse = L² -> 0 dB
    let tenth = Tensor::full(vec![4, 4], 0.1);
    assert!((psnr(&zeros, &tenth, 1.0).unwrap() - 20.0).abs() < 1e-9); // mse = L²/100 -> 20 dB
    assert_eq!(psnr(&zeros, &zeros, 1.0).unwrap(), f64::INFINITY);
}

#[test]
fn psnr_strictly_decreases_in_mse() {
    let zeros = Tensor::zeros(vec![4, 4]);
    let mut last = f64::INFINITY;
    for level in [0.05, 0.1, 0.2, 0.4, 0.8] {
        let b = Tensor::full(vec![4, 4], level);
        let p = psnr(&zeros, &b, 1.0).unwrap();
        assert!(p < last);
        last = p;
    }
}

fn random_matrix(n: usize, p: usize, seed: u64, label: &str) -> Tensor {
    let mut rng = stream_rng(seed, label);
    Tensor::from_vec(
        vec![n, p],
        (0..n * p)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect(),
    )
    .unwrap()
}

#[test]
fn dcor_of_self_is_one() {
    let a = random_matrix(50, 3, 0, "dcor-self");
    assert!((distance_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn dcor_is_affine_invariant_under_positive_scaling() {
    let a = random_matrix(60, 2, 1, "dcor-affine");
    let scaled = a.map(|v| 2.0 * v);
    assert!((distance_correlation(&a, &scaled).unwrap() - 1.0).abs() < 1e-9);
    let affine = a.map(|v| 0.5 * v + 3.0);
    assert!((distance_correlation(&a, &affine).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn dcor_of_independent_samples_is_small() {
    for seed in [0, 1, 2] {
        let a = random_matrix(2000, 1, seed, "dcor-a");
        let b = random_matrix(2000, 1, seed + 100, "dcor-b");
        let d = distance_correlation(&a, &b).unwrap();
        assert!(d < 0.1, "seed {seed}: dcor {d} >= 0.1");
    }
}

#[test]
fn dcor_conventions_and_errors() {
    let constant = Tensor::full(vec![10, 2], 5.0);
    let a = random_matrix(10, 2, 3, "dcor-const");
    assert_eq!(distance_correlation(&constant, &a).unwrap(), 0.0);
    let single = random_matrix(1, 2, 4, "dcor-single");
    assert!(distance_correlation(&single, &single).is_err());
    let b = random_matrix(9, 2, 5, "dcor-mismatch");
    assert!(distance_correlation(&a, &b).is_err());
}

#[test]
fn accuracy_hand_cases() {
    assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
    assert_eq!(accuracy(&[0, 0, 0], &[1, 2, 3]).unwrap(), 0.0);
    assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
    assert!(accuracy(&[], &[]).is_err());
    assert!(accuracy(&[1], &[1, 2]).is_err());
}
