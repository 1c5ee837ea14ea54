use crate::{Error, Result, Tensor};

/// Mean cross-entropy over the batch with a numerically stable log-sum-exp.
/// Returns the loss and `dlogits = (softmax - onehot) / batch`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let [n, c] = *logits.shape() else {
        return Err(Error::Shape(format!(
            "expected [batch, classes] logits, got {:?}",
            logits.shape()
        )));
    };
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {}",
            labels.len(),
            n
        )));
    }
    let mut dlogits = Tensor::zeros(vec![n, c]);
    let mut loss = 0.0;
    for (i, (&label, row)) in labels.iter().zip(logits.data().chunks_exact(c)).enumerate() {
        if label >= c {
            return Err(Error::LabelOutOfRange { label, classes: c });
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        loss += max + sum_exp.ln() - row[label];
        let drow = &mut dlogits.data_mut()[i * c..(i + 1) * c];
        for (d, &v) in drow.iter_mut().zip(row) {
            *d = (v - max).exp() / sum_exp / n as f64;
        }
        drow[label] -= 1.0 / n as f64;
    }
    Ok((loss / n as f64, dlogits))
}

/// Mean squared error over all elements and its gradient w.r.t. `pred`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "mse over mismatched shapes {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.numel() as f64;
    let mut grad = Tensor::zeros(pred.shape().to_vec());
    let mut loss = 0.0;
    for ((g, &p), &t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}
