//! The split architectures: LeNet-5 Split-1/Split-2, a width-scaled VGG-11
//! variant, and the upsampled client head whose smashed data matches the
//! input size.

use rand::Rng;

use crate::dp::InjectionPoint;
use crate::nn::{Conv2D, ConvTranspose2D, Dense, Layer, MaxPool2D, ModelGraph};
use crate::{Error, Result};

/// Which pooling layer a LeNet-5 model is cut after.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeNetSplit {
    Split1,
    Split2,
}

/// A full model graph plus the cut separating client part from server part
/// and the default noise-injection point (the split layer).
#[derive(Debug, Clone)]
pub struct SplitModelSpec {
    pub graph: ModelGraph,
    pub cut_index: usize,
    pub noise_point: InjectionPoint,
    pub arch_name: String,
}

impl SplitModelSpec {
    pub fn new(
        graph: ModelGraph,
        cut_index: usize,
        noise_point: InjectionPoint,
        arch_name: impl Into<String>,
    ) -> Result<Self> {
        if cut_index == 0 || cut_index >= graph.len() {
            return Err(Error::InvalidArg(format!(
                "cut index {cut_index} must lie strictly inside the {}-layer graph",
                graph.len()
            )));
        }
        let spec = Self { graph, cut_index, noise_point: noise_point.clone(), arch_name: arch_name.into() };
        spec.injection_index(&noise_point)?;
        Ok(spec)
    }

    /// The client-side head (layers before the cut), cloned with parameters.
    pub fn client_part(&self) -> ModelGraph {
        self.graph.subgraph(0..self.cut_index)
    }

    /// The server-side tail (layers from the cut on), cloned with parameters.
    pub fn server_part(&self) -> ModelGraph {
        self.graph.subgraph(self.cut_index..self.graph.len())
    }

    /// Shape of the smashed data (sans batch).
    pub fn smashed_shape(&self) -> &[usize] {
        self.graph.shape_after(self.cut_index - 1)
    }

    /// How many client layers run before the perturbation at `point`:
    /// 0 for `Input`, layer index + 1 for `AfterLayer`. Errors when the point
    /// is unknown or server-side.
    pub fn injection_index(&self, point: &InjectionPoint) -> Result<usize> {
        match point {
            InjectionPoint::Input => Ok(0),
            InjectionPoint::AfterLayer(name) => {
                let names = self.graph.layer_names();
                let idx = names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::InvalidArg(format!("no layer named {name}")))?;
                if idx >= self.cut_index {
                    return Err(Error::InvalidArg(format!(
                        "layer {name} is server-side (index {idx}, cut {})",
                        self.cut_index
                    )));
                }
                Ok(idx + 1)
            }
        }
    }
}

/// Every place noise can enter: the input first, then each client-side layer
/// in order.
pub fn injection_points(spec: &SplitModelSpec) -> Vec<InjectionPoint> {
    let mut points = vec![InjectionPoint::Input];
    points.extend(
        spec.graph.layer_names()[..spec.cut_index]
            .iter()
            .map(|n| InjectionPoint::AfterLayer(n.clone())),
    );
    points
}

/// Classic LeNet-5 geometry: 5x5 kernels, no padding, stride 1, 2x2 max-pool
/// stride 2, channels 6 then 16, then Dense 120 and the 10-way output.
pub fn build_lenet5(split: LeNetSplit, rng: &mut impl Rng) -> SplitModelSpec {
    let layers = vec![
        Layer::Conv2D(Conv2D::new(1, 6, 5, 1, 0, rng)),
        Layer::ReLU,
        Layer::MaxPool2D(MaxPool2D { size: 2, stride: 2 }),
        Layer::Conv2D(Conv2D::new(6, 16, 5, 1, 0, rng)),
        Layer::ReLU,
        Layer::MaxPool2D(MaxPool2D { size: 2, stride: 2 }),
        Layer::Flatten,
        Layer::Dense(Dense::new(256, 120, rng)),
        Layer::ReLU,
        Layer::Dense(Dense::new(120, 10, rng)),
    ];
    let graph = ModelGraph::new(vec![1, 28, 28], layers).expect("LeNet-5 geometry");
    let (cut, name, point) = match split {
        LeNetSplit::Split1 => (3, "lenet5-split1", "MaxP(1)"),
        LeNetSplit::Split2 => (6, "lenet5-split2", "MaxP(2)"),
    };
    SplitModelSpec::new(graph, cut, InjectionPoint::AfterLayer(point.into()), name)
        .expect("valid LeNet split")
}

/// VGG-11-style model cut after the first pooling layer. Convolutions use
/// same-padding; `width_scale` shrinks every conv channel count (min 1) so
/// desk-scale runs stay fast. Dense widths stay at 128 and 10.
pub fn build_vgg11_lite(width_scale: f64, rng: &mut impl Rng) -> Result<SplitModelSpec> {
    if !(width_scale > 0.0 && width_scale <= 1.0) {
        return Err(Error::InvalidArg(format!(
            "width_scale {width_scale} out of (0, 1]"
        )));
    }
    let ch = |base: usize| ((base as f64 * width_scale).round() as usize).max(1);
    let (c32, c64, c128, c256) = (ch(32), ch(64), ch(128), ch(256));
    let pool = || Layer::MaxPool2D(MaxPool2D { size: 2, stride: 2 });
    let layers = vec![
        Layer::Conv2D(Conv2D::new(3, c32, 3, 1, 1, rng)),
        Layer::ReLU,
        Layer::Conv2D(Conv2D::new(c32, c32, 3, 1, 1, rng)),
        Layer::ReLU,
        pool(),
        Layer::Conv2D(Conv2D::new(c32, c64, 3, 1, 1, rng)),
        Layer::ReLU,
        Layer::Conv2D(Conv2D::new(c64, c64, 3, 1, 1, rng)),
        Layer::ReLU,
        pool(),
        Layer::Conv2D(Conv2D::new(c64, c128, 3, 1, 1, rng)),
        Layer::ReLU,
        Layer::Conv2D(Conv2D::new(c128, c128, 3, 1, 1, rng)),
        Layer::ReLU,
        pool(),
        Layer::Conv2D(Conv2D::new(c128, c256, 3, 1, 1, rng)),
        Layer::ReLU,
        Layer::Conv2D(Conv2D::new(c256, c256, 3, 1, 1, rng)),
        Layer::ReLU,
        pool(),
        Layer::Flatten,
        Layer::Dense(Dense::new(c256 * 2 * 2, 128, rng)),
        Layer::ReLU,
        Layer::Dense(Dense::new(128, 10, rng)),
    ];
    let graph = ModelGraph::new(vec![3, 32, 32], layers)?;
    SplitModelSpec::new(graph, 5, InjectionPoint::AfterLayer("MaxP(1)".into()), "vgg11-lite")
}

/// Searches a square transposed-conv geometry (kernel, stride, padding) that
/// maps `from` spatial extents exactly onto `to`. Prefers the doubling
/// geometry (4, 2, 1), then the smallest stride with full output coverage
/// (kernel >= stride) and kernel <= 16.
pub fn find_upsample_geometry(
    from: (usize, usize),
    to: (usize, usize),
) -> Option<(usize, usize, usize)> {
    let fits = |k: usize, s: usize, p: usize| {
        (from.0 - 1) * s + k == to.0 + 2 * p && (from.1 - 1) * s + k == to.1 + 2 * p
    };
    if from.0 > 1 && fits(4, 2, 1) {
        return Some((4, 2, 1));
    }
    for s in 1..=8 {
        for p in 0..=3 {
            let need = to.0 + 2 * p;
            let grown = (from.0 - 1) * s;
            if need <= grown {
                continue;
            }
            let k = need - grown;
            if k >= s.max(1) && k <= 16 && fits(k, s, p) {
                return Some((k, s, p));
            }
        }
    }
    None
}

/// Appends a transposed convolution after the (noised) split so the client's
/// output matches the dataset input shape; the server side becomes the full
/// base model. Errors when no supported geometry reaches the input shape.
pub fn build_upsampled_client(
    base: &SplitModelSpec,
    rng: &mut impl Rng,
) -> Result<SplitModelSpec> {
    let input = base.graph.input_shape().to_vec();
    let [in_c, in_h, in_w] = input[..] else {
        return Err(Error::Shape(format!(
            "upsampled head needs a [C, H, W] input, got {input:?}"
        )));
    };
    let smashed = base.smashed_shape().to_vec();
    let [sm_c, sm_h, sm_w] = smashed[..] else {
        return Err(Error::Shape(format!(
            "upsampled head needs a spatial smashed shape, got {smashed:?}"
        )));
    };
    let (k, s, p) = find_upsample_geometry((sm_h, sm_w), (in_h, in_w)).ok_or_else(|| {
        Error::InvalidArg(format!(
            "no transposed-conv geometry maps {sm_h}x{sm_w} onto {in_h}x{in_w}"
        ))
    })?;
    let mut layers = base.graph.layers()[..base.cut_index].to_vec();
    layers.push(Layer::ConvTranspose2D(ConvTranspose2D::new(
        sm_c, in_c, k, s, p, rng,
    )));
    layers.extend_from_slice(base.graph.layers());
    let graph = ModelGraph::new(input, layers)?;
    // The noise stays at the base split layer, i.e. before the new ConvT;
    // the layer-name prefix is unchanged so the base name still resolves.
    let noise_point = InjectionPoint::AfterLayer(
        base.graph.layer_names()[base.cut_index - 1].clone(),
    );
    SplitModelSpec::new(
        graph,
        base.cut_index + 1,
        noise_point,
        format!("{}-upsampled", base.arch_name),
    )
}
