//! Image-quality and dependence metrics: SSIM, MSE, PSNR, distance
//! correlation, and classification accuracy.

use crate::{Error, Result, Tensor};

/// SSIM parameters. A uniform (unweighted) square window keeps the statistic
/// exactly reproducible by hand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the pixel values (1.0 for [0,1] images).
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { window: 7, k1: 0.01, k2: 0.03, dynamic_range: 1.0 }
    }
}

impl SsimParams {
    fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::InvalidArg(format!(
                "SSIM window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if self.k1 <= 0.0 || self.k2 <= 0.0 || self.dynamic_range <= 0.0 {
            return Err(Error::InvalidArg("SSIM constants must be positive".into()));
        }
        Ok(())
    }
}

fn image_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape {
        [h, w] => Ok((1, *h, *w)),
        [c, h, w] => Ok((*c, *h, *w)),
        other => Err(Error::Shape(format!("expected an image, got shape {other:?}"))),
    }
}

/// Mean SSIM index over all sliding windows, averaged across channels.
pub fn ssim(a: &Tensor, b: &Tensor, p: &SsimParams) -> Result<f64> {
    p.validate()?;
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "ssim over mismatched shapes {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (c, h, w) = image_dims(a.shape())?;
    let win = p.window;
    if h < win || w < win {
        return Err(Error::Shape(format!(
            "image {h}x{w} smaller than SSIM window {win}"
        )));
    }
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let n = (win * win) as f64;
    let mut total = 0.0;
    let mut windows = 0usize;
    for ci in 0..c {
        let xa = &a.data()[ci * h * w..(ci + 1) * h * w];
        let xb = &b.data()[ci * h * w..(ci + 1) * h * w];
        for oy in 0..=(h - win) {
            for ox in 0..=(w - win) {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for ky in 0..win {
                    let row = (oy + ky) * w + ox;
                    for kx in 0..win {
                        let va = xa[row + kx];
                        let vb = xb[row + kx];
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                let mu_a = sa / n;
                let mu_b = sb / n;
                let var_a = saa / n - mu_a * mu_a;
                let var_b = sbb / n - mu_b * mu_b;
                let cov = sab / n - mu_a * mu_b;
                total += (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
                    / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
                windows += 1;
            }
        }
    }
    Ok(total / windows as f64)
}

/// Mean squared elementwise difference.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "mse over mismatched shapes {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.numel() as f64)
}

/// Peak signal-to-noise ratio in dB; identical images yield +infinity.
pub fn psnr(a: &Tensor, b: &Tensor, dynamic_range: f64) -> Result<f64> {
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (dynamic_range * dynamic_range / e).log10())
}

/// Sample distance correlation between two paired sample matrices `[n, p]`
/// and `[n, q]`. Returns a value in [0, 1]; constant (zero distance variance)
/// inputs return 0 by convention.
pub fn distance_correlation(a: &Tensor, b: &Tensor) -> Result<f64> {
    let (na, nb) = (a.batch(), b.batch());
    if na != nb {
        return Err(Error::Shape(format!(
            "paired samples need equal row counts, got {na} vs {nb}"
        )));
    }
    if na < 2 {
        return Err(Error::InvalidArg(format!(
            "distance correlation needs n >= 2 rows, got {na}"
        )));
    }
    let da = centered_distances(a);
    let db = centered_distances(b);
    let n2 = (na * na) as f64;
    let mut dcov2 = 0.0;
    let mut dvar_a = 0.0;
    let mut dvar_b = 0.0;
    for (x, y) in da.iter().zip(&db) {
        dcov2 += x * y;
        dvar_a += x * x;
        dvar_b += y * y;
    }
    dcov2 /= n2;
    dvar_a /= n2;
    dvar_b /= n2;
    let denom = (dvar_a * dvar_b).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dcov2.max(0.0) / denom).sqrt())
}

/// Doubly centered pairwise Euclidean distance matrix, flattened row-major.
fn centered_distances(m: &Tensor) -> Vec<f64> {
    let n = m.batch();
    let p = m.row_len();
    let data = m.data();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (ri, rj) = (&data[i * p..(i + 1) * p], &data[j * p..(j + 1) * p]);
            let dist = ri
                .iter()
                .zip(rj)
                .map(|(&x, &y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            d[i * n + j] = dist;
            d[j * n + i] = dist;
        }
    }
    let mut row_mean = vec![0.0; n];
    for i in 0..n {
        row_mean[i] = d[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64;
    }
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] += grand - row_mean[i] - row_mean[j];
        }
    }
    d
}

/// Fraction of predictions equal to the labels.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidArg("accuracy of an empty batch".into()));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Argmax class index per row of a `[batch, classes]` logit tensor.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let c = logits.row_len();
    logits
        .data()
        .chunks_exact(c)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
