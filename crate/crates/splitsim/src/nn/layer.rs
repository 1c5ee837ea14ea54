//! The six layer kinds and their forward/backward rules.
//!
//! Convolutions are lowered to GEMM through im2col/col2im; everything runs in
//! double precision so finite-difference checks stay tight.

use rand::Rng;

use crate::{Error, Result, Tensor};

/// Output extent of a convolution / pooling window sweep.
fn window_out(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        return Err(Error::Shape(format!(
            "window {k} larger than padded input {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

/// Output extent of a transposed convolution.
fn transposed_out(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let grown = (input - 1) * stride + k;
    if grown < 2 * pad {
        return Err(Error::Shape(format!(
            "transposed conv padding {pad} eats the whole {grown} output"
        )));
    }
    Ok(grown - 2 * pad)
}

fn dgemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    // Safety: callers size the slices to the m/k/n extents they pass.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Unrolls one `[C, H, W]` image into a `[C*K*K, OH*OW]` patch matrix.
fn im2col(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    col: &mut [f64],
) {
    let plane = oh * ow;
    for ci in 0..c {
        let chan = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * plane;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let dst = row + oy * ow;
                    if iy < 0 || iy >= h as isize {
                        col[dst..dst + ow].fill(0.0);
                        continue;
                    }
                    let src = iy as usize * w;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        col[dst + ox] = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            chan[src + ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-adds a patch matrix back onto a `[C, H, W]` image (inverse of `im2col`).
fn col2im(
    col: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    x: &mut [f64],
) {
    let plane = oh * ow;
    for ci in 0..c {
        let chan = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * plane;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = row + oy * ow;
                    let dst = iy as usize * w;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            chan[dst + ix as usize] += col[src + ox];
                        }
                    }
                }
            }
        }
    }
}

fn glorot_uniform(rng: &mut impl Rng, n: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

/// 2-D convolution, weight layout `[out_c, in_c, k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2D {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv2D {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan = kernel * kernel;
        let n = out_channels * in_channels * fan;
        let weight = Tensor::from_vec(
            vec![out_channels, in_channels, kernel, kernel],
            glorot_uniform(rng, n, in_channels * fan, out_channels * fan),
        )
        .expect("weight shape");
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight,
            bias: Tensor::zeros(vec![out_channels]),
        }
    }

    fn geometry(&self, in_shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
        match in_shape {
            [c, h, w] if *c == self.in_channels => {
                let oh = window_out(*h, self.kernel, self.stride, self.padding)?;
                let ow = window_out(*w, self.kernel, self.stride, self.padding)?;
                Ok((*h, *w, oh, ow))
            }
            other => Err(Error::Shape(format!(
                "Conv2D({}ch) cannot take input {:?}",
                self.in_channels, other
            ))),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (h, w, oh, ow) = self.geometry(&x.shape()[1..])?;
        let (n, ic, oc, k) = (x.batch(), self.in_channels, self.out_channels, self.kernel);
        let ckk = ic * k * k;
        let plane = oh * ow;
        let mut col = vec![0.0; ckk * plane];
        let mut out = Tensor::zeros(vec![n, oc, oh, ow]);
        for i in 0..n {
            im2col(
                &x.data()[i * ic * h * w..(i + 1) * ic * h * w],
                ic,
                h,
                w,
                k,
                self.stride,
                self.padding,
                oh,
                ow,
                &mut col,
            );
            let img = &mut out.data_mut()[i * oc * plane..(i + 1) * oc * plane];
            for c in 0..oc {
                img[c * plane..(c + 1) * plane].fill(self.bias.data()[c]);
            }
            dgemm(
                oc,
                ckk,
                plane,
                1.0,
                self.weight.data(),
                ckk as isize,
                1,
                &col,
                plane as isize,
                1,
                1.0,
                img,
                plane as isize,
                1,
            );
        }
        Ok(out)
    }

    fn backward(&self, x: &Tensor, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (h, w, oh, ow) = self.geometry(&x.shape()[1..])?;
        let (n, ic, oc, k) = (x.batch(), self.in_channels, self.out_channels, self.kernel);
        let ckk = ic * k * k;
        let plane = oh * ow;
        if dy.shape() != [n, oc, oh, ow] {
            return Err(Error::Shape(format!(
                "Conv2D backward expects dy {:?}, got {:?}",
                [n, oc, oh, ow],
                dy.shape()
            )));
        }
        let mut col = vec![0.0; ckk * plane];
        let mut dcol = vec![0.0; ckk * plane];
        let mut dx = Tensor::zeros(x.shape().to_vec());
        let mut dw = Tensor::zeros(self.weight.shape().to_vec());
        let mut db = Tensor::zeros(vec![oc]);
        for i in 0..n {
            let ximg = &x.data()[i * ic * h * w..(i + 1) * ic * h * w];
            let dyimg = &dy.data()[i * oc * plane..(i + 1) * oc * plane];
            im2col(ximg, ic, h, w, k, self.stride, self.padding, oh, ow, &mut col);
            // dW += dY · colᵀ, accumulated in batch order
            dgemm(
                oc,
                plane,
                ckk,
                1.0,
                dyimg,
                plane as isize,
                1,
                &col,
                1,
                plane as isize,
                1.0,
                dw.data_mut(),
                ckk as isize,
                1,
            );
            for c in 0..oc {
                db.data_mut()[c] += dyimg[c * plane..(c + 1) * plane].iter().sum::<f64>();
            }
            // dcol = Wᵀ · dY, then scatter back to image space
            dgemm(
                ckk,
                oc,
                plane,
                1.0,
                self.weight.data(),
                1,
                ckk as isize,
                dyimg,
                plane as isize,
                1,
                0.0,
                &mut dcol,
                plane as isize,
                1,
            );
            col2im(
                &dcol,
                ic,
                h,
                w,
                k,
                self.stride,
                self.padding,
                oh,
                ow,
                &mut dx.data_mut()[i * ic * h * w..(i + 1) * ic * h * w],
            );
        }
        Ok((dx, vec![dw, db]))
    }
}

/// 2-D transposed convolution, weight layout `[in_c, out_c, k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2D {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl ConvTranspose2D {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan = kernel * kernel;
        let n = in_channels * out_channels * fan;
        let weight = Tensor::from_vec(
            vec![in_channels, out_channels, kernel, kernel],
            glorot_uniform(rng, n, in_channels * fan, out_channels * fan),
        )
        .expect("weight shape");
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            weight,
            bias: Tensor::zeros(vec![out_channels]),
        }
    }

    fn geometry(&self, in_shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
        match in_shape {
            [c, h, w] if *c == self.in_channels => {
                let oh = transposed_out(*h, self.kernel, self.stride, self.padding)?;
                let ow = transposed_out(*w, self.kernel, self.stride, self.padding)?;
                Ok((*h, *w, oh, ow))
            }
            other => Err(Error::Shape(format!(
                "ConvTranspose2D({}ch) cannot take input {:?}",
                self.in_channels, other
            ))),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (h, w, oh, ow) = self.geometry(&x.shape()[1..])?;
        let (n, ic, oc, k) = (x.batch(), self.in_channels, self.out_channels, self.kernel);
        let ockk = oc * k * k;
        let in_plane = h * w;
        let out_plane = oh * ow;
        let mut col = vec![0.0; ockk * in_plane];
        let mut out = Tensor::zeros(vec![n, oc, oh, ow]);
        for i in 0..n {
            let ximg = &x.data()[i * ic * in_plane..(i + 1) * ic * in_plane];
            // col = Wᵀ · x over the [in_c, out_c*k*k] view of the weights
            dgemm(
                ockk,
                ic,
                in_plane,
                1.0,
                self.weight.data(),
                1,
                ockk as isize,
                ximg,
                in_plane as isize,
                1,
                0.0,
                &mut col,
                in_plane as isize,
                1,
            );
            let img = &mut out.data_mut()[i * oc * out_plane..(i + 1) * oc * out_plane];
            for c in 0..oc {
                img[c * out_plane..(c + 1) * out_plane].fill(self.bias.data()[c]);
            }
            col2im(&col, oc, oh, ow, k, self.stride, self.padding, h, w, img);
        }
        Ok(out)
    }

    fn backward(&self, x: &Tensor, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (h, w, oh, ow) = self.geometry(&x.shape()[1..])?;
        let (n, ic, oc, k) = (x.batch(), self.in_channels, self.out_channels, self.kernel);
        let ockk = oc * k * k;
        let in_plane = h * w;
        let out_plane = oh * ow;
        if dy.shape() != [n, oc, oh, ow] {
            return Err(Error::Shape(format!(
                "ConvTranspose2D backward expects dy {:?}, got {:?}",
                [n, oc, oh, ow],
                dy.shape()
            )));
        }
        let mut col = vec![0.0; ockk * in_plane];
        let mut dx = Tensor::zeros(x.shape().to_vec());
        let mut dw = Tensor::zeros(self.weight.shape().to_vec());
        let mut db = Tensor::zeros(vec![oc]);
        for i in 0..n {
            let ximg = &x.data()[i * ic * in_plane..(i + 1) * ic * in_plane];
            let dyimg = &dy.data()[i * oc * out_plane..(i + 1) * oc * out_plane];
            im2col(dyimg, oc, oh, ow, k, self.stride, self.padding, h, w, &mut col);
            // dx = W · col(dy)
            dgemm(
                ic,
                ockk,
                in_plane,
                1.0,
                self.weight.data(),
                ockk as isize,
                1,
                &col,
                in_plane as isize,
                1,
                0.0,
                &mut dx.data_mut()[i * ic * in_plane..(i + 1) * ic * in_plane],
                in_plane as isize,
                1,
            );
            // dW += x · col(dy)ᵀ
            dgemm(
                ic,
                in_plane,
                ockk,
                1.0,
                ximg,
                in_plane as isize,
                1,
                &col,
                1,
                in_plane as isize,
                1.0,
                dw.data_mut(),
                ockk as isize,
                1,
            );
            for c in 0..oc {
                db.data_mut()[c] += dyimg[c * out_plane..(c + 1) * out_plane]
                    .iter()
                    .sum::<f64>();
            }
        }
        Ok((dx, vec![dw, db]))
    }
}

/// Fully connected layer, weight layout `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize, rng: &mut impl Rng) -> Self {
        let weight = Tensor::from_vec(
            vec![out_features, in_features],
            glorot_uniform(rng, out_features * in_features, in_features, out_features),
        )
        .expect("weight shape");
        Self {
            in_features,
            out_features,
            weight,
            bias: Tensor::zeros(vec![out_features]),
        }
    }

    fn check_in(&self, in_shape: &[usize]) -> Result<()> {
        if in_shape != [self.in_features] {
            return Err(Error::Shape(format!(
                "Dense({} -> {}) cannot take input {:?}",
                self.in_features, self.out_features, in_shape
            )));
        }
        Ok(())
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_in(&x.shape()[1..])?;
        let (n, fi, fo) = (x.batch(), self.in_features, self.out_features);
        let mut out = Tensor::zeros(vec![n, fo]);
        for i in 0..n {
            out.data_mut()[i * fo..(i + 1) * fo].copy_from_slice(self.bias.data());
        }
        // Y += X · Wᵀ
        dgemm(
            n,
            fi,
            fo,
            1.0,
            x.data(),
            fi as isize,
            1,
            self.weight.data(),
            1,
            fi as isize,
            1.0,
            out.data_mut(),
            fo as isize,
            1,
        );
        Ok(out)
    }

    fn backward(&self, x: &Tensor, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        self.check_in(&x.shape()[1..])?;
        let (n, fi, fo) = (x.batch(), self.in_features, self.out_features);
        if dy.shape() != [n, fo] {
            return Err(Error::Shape(format!(
                "Dense backward expects dy {:?}, got {:?}",
                [n, fo],
                dy.shape()
            )));
        }
        let mut dx = Tensor::zeros(vec![n, fi]);
        let mut dw = Tensor::zeros(vec![fo, fi]);
        let mut db = Tensor::zeros(vec![fo]);
        // dX = dY · W
        dgemm(
            n,
            fo,
            fi,
            1.0,
            dy.data(),
            fo as isize,
            1,
            self.weight.data(),
            fi as isize,
            1,
            0.0,
            dx.data_mut(),
            fi as isize,
            1,
        );
        // dW = dYᵀ · X
        dgemm(
            fo,
            n,
            fi,
            1.0,
            dy.data(),
            1,
            fo as isize,
            x.data(),
            fi as isize,
            1,
            0.0,
            dw.data_mut(),
            fi as isize,
            1,
        );
        for row in dy.data().chunks_exact(fo) {
            for (dbv, &g) in db.data_mut().iter_mut().zip(row) {
                *dbv += g;
            }
        }
        Ok((dx, vec![dw, db]))
    }
}

/// Max pooling over square windows. Ties route to the first maximal index in
/// row-major order, so backward is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPool2D {
    pub size: usize,
    pub stride: usize,
}

impl MaxPool2D {
    fn geometry(&self, in_shape: &[usize]) -> Result<(usize, usize, usize, usize, usize)> {
        match in_shape {
            [c, h, w] => {
                let oh = window_out(*h, self.size, self.stride, 0)?;
                let ow = window_out(*w, self.size, self.stride, 0)?;
                Ok((*c, *h, *w, oh, ow))
            }
            other => Err(Error::Shape(format!("MaxPool2D cannot take input {other:?}"))),
        }
    }

    fn argmax(&self, chan: &[f64], w: usize, oy: usize, ox: usize) -> usize {
        let mut best = oy * self.stride * w + ox * self.stride;
        let mut best_v = chan[best];
        for ky in 0..self.size {
            for kx in 0..self.size {
                let idx = (oy * self.stride + ky) * w + ox * self.stride + kx;
                if chan[idx] > best_v {
                    best_v = chan[idx];
                    best = idx;
                }
            }
        }
        best
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (c, h, w, oh, ow) = self.geometry(&x.shape()[1..])?;
        let n = x.batch();
        let mut out = Tensor::zeros(vec![n, c, oh, ow]);
        for i in 0..n {
            for ci in 0..c {
                let chan = &x.data()[(i * c + ci) * h * w..(i * c + ci + 1) * h * w];
                let dst = &mut out.data_mut()[(i * c + ci) * oh * ow..(i * c + ci + 1) * oh * ow];
                for oy in 0..oh {
                    for ox in 0..ow {
                        dst[oy * ow + ox] = chan[self.argmax(chan, w, oy, ox)];
                    }
                }
            }
        }
        Ok(out)
    }

    fn backward(&self, x: &Tensor, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (c, h, w, oh, ow) = self.geometry(&x.shape()[1..])?;
        let n = x.batch();
        if dy.shape() != [n, c, oh, ow] {
            return Err(Error::Shape(format!(
                "MaxPool2D backward expects dy {:?}, got {:?}",
                [n, c, oh, ow],
                dy.shape()
            )));
        }
        let mut dx = Tensor::zeros(x.shape().to_vec());
        for i in 0..n {
            for ci in 0..c {
                let chan = &x.data()[(i * c + ci) * h * w..(i * c + ci + 1) * h * w];
                let g = &dy.data()[(i * c + ci) * oh * ow..(i * c + ci + 1) * oh * ow];
                let base = (i * c + ci) * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let arg = self.argmax(chan, w, oy, ox);
                        dx.data_mut()[base + arg] += g[oy * ow + ox];
                    }
                }
            }
        }
        Ok((dx, Vec::new()))
    }
}

/// One network layer. `ReLU` and `Flatten` carry no state.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2D(Conv2D),
    ReLU,
    MaxPool2D(MaxPool2D),
    Dense(Dense),
    ConvTranspose2D(ConvTranspose2D),
    Flatten,
}

impl Layer {
    /// Short tag used to derive layer names like `Conv(1)`.
    pub fn kind_tag(&self) -> &'static str {
        match self {
            Layer::Conv2D(_) => "Conv",
            Layer::ReLU => "ReLU",
            Layer::MaxPool2D(_) => "MaxP",
            Layer::Dense(_) => "Dense",
            Layer::ConvTranspose2D(_) => "ConvT",
            Layer::Flatten => "Flatten",
        }
    }

    /// Output shape (without batch dimension) for a given input shape.
    pub fn out_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv2D(l) => {
                let (_, _, oh, ow) = l.geometry(in_shape)?;
                Ok(vec![l.out_channels, oh, ow])
            }
            Layer::ConvTranspose2D(l) => {
                let (_, _, oh, ow) = l.geometry(in_shape)?;
                Ok(vec![l.out_channels, oh, ow])
            }
            Layer::MaxPool2D(l) => {
                let (c, _, _, oh, ow) = l.geometry(in_shape)?;
                Ok(vec![c, oh, ow])
            }
            Layer::Dense(l) => {
                l.check_in(in_shape)?;
                Ok(vec![l.out_features])
            }
            Layer::ReLU => Ok(in_shape.to_vec()),
            Layer::Flatten => Ok(vec![in_shape.iter().product()]),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2D(l) => l.forward(x),
            Layer::ConvTranspose2D(l) => l.forward(x),
            Layer::MaxPool2D(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
            Layer::ReLU => Ok(x.map(|v| if v > 0.0 { v } else { 0.0 })),
            Layer::Flatten => {
                let n = x.batch();
                x.reshape(vec![n, x.row_len()])
            }
        }
    }

    /// Gradients w.r.t. the cached input `x` and this layer's parameters
    /// (in the same order as [`Layer::params`]).
    pub fn backward(&self, x: &Tensor, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        match self {
            Layer::Conv2D(l) => l.backward(x, dy),
            Layer::ConvTranspose2D(l) => l.backward(x, dy),
            Layer::MaxPool2D(l) => l.backward(x, dy),
            Layer::Dense(l) => l.backward(x, dy),
            Layer::ReLU => {
                if x.shape() != dy.shape() {
                    return Err(Error::Shape(format!(
                        "ReLU backward shapes differ: {:?} vs {:?}",
                        x.shape(),
                        dy.shape()
                    )));
                }
                let data = x
                    .data()
                    .iter()
                    .zip(dy.data())
                    .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                    .collect();
                Ok((Tensor::from_vec(x.shape().to_vec(), data)?, Vec::new()))
            }
            Layer::Flatten => Ok((dy.reshape(x.shape().to_vec())?, Vec::new())),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv2D(l) => vec![&l.weight, &l.bias],
            Layer::ConvTranspose2D(l) => vec![&l.weight, &l.bias],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv2D(l) => vec![&mut l.weight, &mut l.bias],
            Layer::ConvTranspose2D(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }
}
