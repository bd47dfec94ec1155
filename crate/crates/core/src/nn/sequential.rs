use super::layers::LayerSpec;
use super::{Conv2d, Dense, FeatureMap, Layer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor_io::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

/// Activations recorded by [`Sequential::forward_trace`]: `acts[0]` is the
/// input and `acts[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub acts: Vec<FeatureMap<T>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &FeatureMap<T> {
        self.acts.last().expect("trace holds the input at least")
    }
}

/// Parameter gradients, one buffer per parameter tensor (weight, bias, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn zeros_like(shapes: &[usize]) -> Self {
        Self {
            tensors: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = *x + y;
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        for t in &mut self.tensors {
            t.iter_mut().for_each(|x| *x = *x * k);
        }
    }

    pub fn flat(&self) -> impl Iterator<Item = T> + '_ {
        self.tensors.iter().flatten().copied()
    }
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    pub fn forward(&self, x: &FeatureMap<T>) -> FeatureMap<T> {
        let mut cur = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            cur = layer.forward(&cur);
        }
        cur
    }

    pub fn forward_trace(&self, x: &FeatureMap<T>) -> Trace<T> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(acts.last().expect("nonempty"));
            acts.push(next);
        }
        Trace { acts }
    }

    /// Backpropagates `grad_out`. Parameter gradients accumulate into `grads`
    /// when given; the input gradient is returned when `need_input_grad`.
    pub fn backward(
        &self,
        trace: &Trace<T>,
        grad_out: FeatureMap<T>,
        grads: Option<&mut Grads<T>>,
        need_input_grad: bool,
    ) -> Option<FeatureMap<T>> {
        self.backward_prefix(trace, self.layers.len(), grad_out, grads, need_input_grad)
    }

    /// Backpropagates through the first `n` layers only, starting from the
    /// gradient at `trace.acts[n]` (the output of layer `n - 1`).
    pub fn backward_prefix(
        &self,
        trace: &Trace<T>,
        n: usize,
        grad: FeatureMap<T>,
        mut grads: Option<&mut Grads<T>>,
        need_input_grad: bool,
    ) -> Option<FeatureMap<T>> {
        let mut tensor_idx: Vec<usize> = Vec::with_capacity(self.layers.len());
        let mut count = 0;
        for layer in &self.layers {
            tensor_idx.push(count);
            if layer.param_count() > 0 {
                count += 2;
            }
        }
        let mut g = grad;
        for (i, layer) in self.layers[..n].iter().enumerate().rev() {
            let need = i > 0 || need_input_grad;
            let params = match (grads.as_deref_mut(), layer.param_count() > 0) {
                (Some(gr), true) => {
                    let (w, rest) = gr.tensors[tensor_idx[i]..].split_at_mut(1);
                    Some((w[0].as_mut_slice(), rest[0].as_mut_slice()))
                }
                _ => None,
            };
            if !need && params.is_none() {
                return None;
            }
            g = layer.backward(&trace.acts[i], &trace.acts[i + 1], &g, params, need)?;
        }
        need_input_grad.then_some(g)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(c.weight.as_slice());
                    out.push(c.bias.as_slice());
                }
                Layer::Dense(d) => {
                    out.push(d.weight.as_slice());
                    out.push(d.bias.as_slice());
                }
                _ => {}
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(c.weight.as_mut_slice());
                    out.push(c.bias.as_mut_slice());
                }
                Layer::Dense(d) => {
                    out.push(d.weight.as_mut_slice());
                    out.push(d.bias.as_mut_slice());
                }
                _ => {}
            }
        }
        out
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    /// Parameter tensors with their logical shapes, for archiving.
    pub fn export(&self) -> Vec<Tensor<T>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(Tensor {
                        dims: vec![c.out_channels, c.in_channels, c.kernel, c.kernel],
                        data: c.weight.clone(),
                    });
                    out.push(Tensor {
                        dims: vec![c.out_channels],
                        data: c.bias.clone(),
                    });
                }
                Layer::Dense(d) => {
                    out.push(Tensor {
                        dims: vec![d.outputs, d.inputs],
                        data: d.weight.clone(),
                    });
                    out.push(Tensor {
                        dims: vec![d.outputs],
                        data: d.bias.clone(),
                    });
                }
                _ => {}
            }
        }
        out
    }

    /// Rebuilds a network from layer specs and archived tensors, consuming
    /// tensors from the front of `tensors`.
    pub fn import(specs: &[LayerSpec], tensors: &mut std::vec::IntoIter<Tensor<T>>) -> Result<Self> {
        let mut take = |dims: Vec<usize>| -> Result<Vec<T>> {
            let t = tensors
                .next()
                .ok_or_else(|| Error::Checkpoint("missing tensor".into()))?;
            if t.dims != dims {
                return Err(Error::Checkpoint(format!(
                    "tensor shape {:?} does not match architecture {:?}",
                    t.dims, dims
                )));
            }
            Ok(t.data)
        };
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            layers.push(match *spec {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                } => Layer::Conv(Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding: kernel / 2,
                    weight: take(vec![out_channels, in_channels, kernel, kernel])?,
                    bias: take(vec![out_channels])?,
                }),
                LayerSpec::Dense { inputs, outputs } => Layer::Dense(Dense {
                    inputs,
                    outputs,
                    weight: take(vec![outputs, inputs])?,
                    bias: take(vec![outputs])?,
                }),
                LayerSpec::Elu => Layer::Elu,
                LayerSpec::Sigmoid => Layer::Sigmoid,
                LayerSpec::Upsample2 => Layer::Upsample2,
                LayerSpec::L2Normalize => Layer::L2Normalize,
            });
        }
        Ok(Self { layers })
    }

    pub fn check_finite(&self, name: &str) -> Result<()> {
        for (i, t) in self.tensors().iter().enumerate() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteParam {
                    tensor: format!("{name}.tensor{i}"),
                });
            }
        }
        Ok(())
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded_rng;

    fn tiny(seed: u64) -> Sequential<f64> {
        let mut rng = seeded_rng(seed);
        Sequential::new(vec![
            Layer::Conv(Conv2d::new(1, 2, 3, 2, &mut rng, 1.0)),
            Layer::Elu,
            Layer::Upsample2,
            Layer::Conv(Conv2d::new(2, 2, 3, 1, &mut rng, 1.0)),
            Layer::Elu,
            Layer::Dense(Dense::new(2 * 6 * 6, 3, &mut rng, 1.0)),
            Layer::L2Normalize,
        ])
    }

    fn objective(net: &Sequential<f64>, x: &FeatureMap<f64>) -> f64 {
        let y = net.forward(x);
        y.data.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v).sum()
    }

    #[test]
    fn finite_difference_agrees_with_backward() {
        let net = tiny(3);
        let x = FeatureMap::from_vec(1, 6, 6, (0..36).map(|i| ((i * 7 % 11) as f64) / 11.0).collect());
        let trace = net.forward_trace(&x);
        let gout = FeatureMap::vector(vec![1.0, 2.0, 3.0]);
        let mut grads = Grads::zeros_like(&net.tensor_sizes());
        let gx = net.backward(&trace, gout, Some(&mut grads), true).unwrap();

        let h = 1e-6;
        for t in 0..grads.tensors.len() {
            for j in (0..grads.tensors[t].len()).step_by(5) {
                let mut plus = net.clone();
                plus.tensors_mut()[t][j] += h;
                let mut minus = net.clone();
                minus.tensors_mut()[t][j] -= h;
                let fd = (objective(&plus, &x) - objective(&minus, &x)) / (2.0 * h);
                let a = grads.tensors[t][j];
                assert!((a - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "tensor {t}[{j}]: {a} vs {fd}");
            }
        }
        for j in 0..x.data.len() {
            let mut xp = x.clone();
            xp.data[j] += h;
            let mut xm = x.clone();
            xm.data[j] -= h;
            let fd = (objective(&net, &xp) - objective(&net, &xm)) / (2.0 * h);
            assert!((gx.data[j] - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn export_import_round_trip() {
        let net = tiny(5);
        let specs = net.specs();
        let mut it = net.export().into_iter();
        let back = Sequential::import(&specs, &mut it).unwrap();
        assert!(it.next().is_none());
        assert_eq!(back, net);
    }
}
