use std::ops::Range;

use crate::nn::Layer;
use crate::{Error, Result, Tensor};

/// An ordered layer list with shape compatibility checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    /// `shapes[i]` is the output shape (sans batch) of layer `i`.
    shapes: Vec<Vec<usize>>,
}

/// Per-layer cached inputs from one forward pass, sufficient for an exact
/// backward pass. `inputs.len()` always equals the layer count of the range
/// that produced it.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    inputs: Vec<Tensor>,
    output: Tensor,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn output(&self) -> &Tensor {
        &self.output
    }
}

impl ModelGraph {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        let mut shapes = Vec::with_capacity(layers.len());
        let mut cur = input_shape.clone();
        for layer in &layers {
            cur = layer.out_shape(&cur)?;
            shapes.push(cur.clone());
        }
        Ok(Self { layers, input_shape, shapes })
    }

    /// An empty graph acts as the identity function.
    pub fn identity(input_shape: Vec<usize>) -> Self {
        Self { layers: Vec::new(), input_shape: input_shape.clone(), shapes: vec![] }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map(Vec::as_slice).unwrap_or(&self.input_shape)
    }

    /// Output shape of layer `i` (sans batch).
    pub fn shape_after(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    /// Derived layer names: each kind numbered in order of appearance,
    /// e.g. `Conv(1), ReLU(1), MaxP(1), Conv(2), ...`.
    pub fn layer_names(&self) -> Vec<String> {
        let mut counts: Vec<(&'static str, usize)> = Vec::new();
        self.layers
            .iter()
            .map(|layer| {
                let tag = layer.kind_tag();
                match counts.iter_mut().find(|(t, _)| *t == tag) {
                    Some((_, c)) => {
                        *c += 1;
                        format!("{}({})", tag, c)
                    }
                    None => {
                        counts.push((tag, 1));
                        format!("{}(1)", tag)
                    }
                }
            })
            .collect()
    }

    fn check_batch_input(&self, x: &Tensor, expected: &[usize]) -> Result<()> {
        if x.shape().len() < 2 || &x.shape()[1..] != expected {
            return Err(Error::Shape(format!(
                "expected batched input [N, {:?}], got {:?}",
                expected,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Forward through `layers[range]`, caching per-layer inputs.
    pub fn forward_slice(&self, x: &Tensor, range: Range<usize>) -> Result<(Tensor, ForwardTrace)> {
        let expected = if range.start == 0 {
            self.input_shape.clone()
        } else {
            self.shapes[range.start - 1].clone()
        };
        self.check_batch_input(x, &expected)?;
        let mut inputs = Vec::with_capacity(range.len());
        let mut cur = x.clone();
        for layer in &self.layers[range] {
            let next = layer.forward(&cur)?;
            inputs.push(cur);
            cur = next;
        }
        Ok((cur.clone(), ForwardTrace { inputs, output: cur }))
    }

    /// Full forward pass.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ForwardTrace)> {
        self.forward_slice(x, 0..self.layers.len())
    }

    /// Backward through `layers[range]` using the trace produced by the
    /// matching `forward_slice` call. Returns the gradient w.r.t. the range's
    /// input and the parameter gradients of the range's layers, flattened in
    /// layer order (weight before bias).
    pub fn backward_slice(
        &self,
        trace: &ForwardTrace,
        output_grad: &Tensor,
        range: Range<usize>,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        if trace.inputs.len() != range.len() {
            return Err(Error::Shape(format!(
                "trace of {} layers cannot drive backward over {} layers",
                trace.inputs.len(),
                range.len()
            )));
        }
        if output_grad.shape() != trace.output.shape() {
            return Err(Error::Shape(format!(
                "output_grad {:?} does not match forward output {:?}",
                output_grad.shape(),
                trace.output.shape()
            )));
        }
        let mut dy = output_grad.clone();
        let mut rev_grads: Vec<Vec<Tensor>> = Vec::with_capacity(range.len());
        for (layer, x) in self.layers[range].iter().zip(&trace.inputs).rev() {
            let (dx, grads) = layer.backward(x, &dy)?;
            rev_grads.push(grads);
            dy = dx;
        }
        let mut flat = Vec::new();
        for grads in rev_grads.into_iter().rev() {
            flat.extend(grads);
        }
        Ok((dy, flat))
    }

    /// Full backward pass; see [`ModelGraph::backward_slice`].
    pub fn backward(&self, trace: &ForwardTrace, output_grad: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        self.backward_slice(trace, output_grad, 0..self.layers.len())
    }

    /// All trainable parameters in layer order, weight before bias.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn num_scalar_params(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// Overwrites this graph's parameters with `src`'s; architectures must match.
    pub fn copy_params_from(&mut self, src: &ModelGraph) -> Result<()> {
        let from = src.params();
        let mut to = self.params_mut();
        if from.len() != to.len() {
            return Err(Error::Shape(format!(
                "parameter count mismatch: {} vs {}",
                from.len(),
                to.len()
            )));
        }
        for (dst, s) in to.iter_mut().zip(from) {
            if dst.shape() != s.shape() {
                return Err(Error::Shape(format!(
                    "parameter shape mismatch: {:?} vs {:?}",
                    dst.shape(),
                    s.shape()
                )));
            }
            dst.data_mut().copy_from_slice(s.data());
        }
        Ok(())
    }

    /// A new graph over `layers[range]`, cloning the layers (and parameters).
    pub fn subgraph(&self, range: Range<usize>) -> ModelGraph {
        let input_shape = if range.start == 0 {
            self.input_shape.clone()
        } else {
            self.shapes[range.start - 1].clone()
        };
        let layers = self.layers[range].to_vec();
        ModelGraph::new(input_shape, layers).expect("subgraph of a valid graph is valid")
    }
}
