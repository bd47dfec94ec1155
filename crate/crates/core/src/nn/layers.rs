use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{init_weights, FeatureMap};
use crate::scalar::Scalar;

/// Square-kernel 2-D convolution with zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out][in][ky][kx]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut ChaCha8Rng,
        gain: f64,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: kernel / 2,
            weight: init_weights(rng, out_channels * fan_in, fan_in, gain),
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let out = |n: usize| (n + 2 * self.padding - self.kernel) / self.stride + 1;
        (out(h), out(w))
    }

    /// Output columns `ox` whose input column `ox*stride + k - padding` is in range.
    #[inline]
    fn valid_cols(&self, k: usize, in_w: usize, out_w: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if k >= self.padding { 0 } else { (self.padding - k).div_ceil(s) };
        let hi_num = in_w as isize - 1 + self.padding as isize - k as isize;
        let hi = if hi_num < 0 { 0 } else { (hi_num as usize) / s + 1 };
        (lo, hi.min(out_w))
    }

    pub fn forward(&self, x: &FeatureMap<T>) -> FeatureMap<T> {
        debug_assert_eq!(x.channels, self.in_channels);
        let (oh, ow) = self.output_dims(x.height, x.width);
        let (ih, iw) = (x.height, x.width);
        let k = self.kernel;
        let s = self.stride;
        let p = self.padding;
        let mut out = FeatureMap::zeros(self.out_channels, oh, ow);
        for oc in 0..self.out_channels {
            let plane = &mut out.data[oc * oh * ow..(oc + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = self.bias[oc]);
            for ic in 0..self.in_channels {
                let input = &x.data[ic * ih * iw..(ic + 1) * ih * iw];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = self.weight[((oc * self.in_channels + ic) * k + ky) * k + kx];
                        let (lo, hi) = self.valid_cols(kx, iw, ow);
                        if lo >= hi {
                            continue;
                        }
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy as usize >= ih {
                                continue;
                            }
                            let row_in = &input[iy as usize * iw..(iy as usize + 1) * iw];
                            let row_out = &mut plane[oy * ow..(oy + 1) * ow];
                            if s == 1 {
                                let off = lo + kx - p;
                                let src = &row_in[off..off + (hi - lo)];
                                for (o, &v) in row_out[lo..hi].iter_mut().zip(src) {
                                    *o = *o + wv * v;
                                }
                            } else {
                                for ox in lo..hi {
                                    row_out[ox] = row_out[ox] + wv * row_in[ox * s + kx - p];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Returns the input gradient; accumulates parameter gradients into
    /// `grad_w`/`grad_b` when given.
    pub fn backward(
        &self,
        x: &FeatureMap<T>,
        grad_out: &FeatureMap<T>,
        params: Option<(&mut [T], &mut [T])>,
        need_input_grad: bool,
    ) -> Option<FeatureMap<T>> {
        let (oh, ow) = (grad_out.height, grad_out.width);
        let (ih, iw) = (x.height, x.width);
        let k = self.kernel;
        let s = self.stride;
        let p = self.padding;
        let mut gin = need_input_grad.then(|| FeatureMap::zeros(self.in_channels, ih, iw));
        let (mut gw, mut gb) = match params {
            Some((w, b)) => (Some(w), Some(b)),
            None => (None, None),
        };
        for oc in 0..self.out_channels {
            let go = &grad_out.data[oc * oh * ow..(oc + 1) * oh * ow];
            if let Some(gb) = gb.as_deref_mut() {
                gb[oc] = gb[oc] + go.iter().copied().sum::<T>();
            }
            for ic in 0..self.in_channels {
                let input = &x.data[ic * ih * iw..(ic + 1) * ih * iw];
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((oc * self.in_channels + ic) * k + ky) * k + kx;
                        let wv = self.weight[widx];
                        let (lo, hi) = self.valid_cols(kx, iw, ow);
                        if lo >= hi {
                            continue;
                        }
                        let mut acc = T::zero();
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy as usize >= ih {
                                continue;
                            }
                            let iy = iy as usize;
                            let row_go = &go[oy * ow..(oy + 1) * ow];
                            if s == 1 {
                                let off = lo + kx - p;
                                let n = hi - lo;
                                let row_in = &input[iy * iw + off..iy * iw + off + n];
                                let g = &row_go[lo..hi];
                                if gw.is_some() {
                                    for (&a, &b) in g.iter().zip(row_in) {
                                        acc = acc + a * b;
                                    }
                                }
                                if let Some(gin) = gin.as_mut() {
                                    let dst = &mut gin.data[ic * ih * iw + iy * iw + off
                                        ..ic * ih * iw + iy * iw + off + n];
                                    for (d, &a) in dst.iter_mut().zip(g) {
                                        *d = *d + wv * a;
                                    }
                                }
                            } else {
                                for ox in lo..hi {
                                    let ix = ox * s + kx - p;
                                    let g = row_go[ox];
                                    acc = acc + g * input[iy * iw + ix];
                                    if let Some(gin) = gin.as_mut() {
                                        let d = &mut gin.data[ic * ih * iw + iy * iw + ix];
                                        *d = *d + wv * g;
                                    }
                                }
                            }
                        }
                        if let Some(gw) = gw.as_deref_mut() {
                            gw[widx] = gw[widx] + acc;
                        }
                    }
                }
            }
        }
        gin
    }
}

/// Fully connected layer over the flattened input.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng, gain: f64) -> Self {
        Self {
            inputs,
            outputs,
            weight: init_weights(rng, inputs * outputs, inputs, gain),
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn forward(&self, x: &FeatureMap<T>) -> FeatureMap<T> {
        debug_assert_eq!(x.len(), self.inputs);
        let out = (0..self.outputs)
            .map(|o| {
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + row.iter().zip(&x.data).map(|(&w, &v)| w * v).sum::<T>()
            })
            .collect();
        FeatureMap::vector(out)
    }

    pub fn backward(
        &self,
        x: &FeatureMap<T>,
        grad_out: &FeatureMap<T>,
        params: Option<(&mut [T], &mut [T])>,
        need_input_grad: bool,
    ) -> Option<FeatureMap<T>> {
        if let Some((gw, gb)) = params {
            for o in 0..self.outputs {
                let g = grad_out.data[o];
                gb[o] = gb[o] + g;
                let row = &mut gw[o * self.inputs..(o + 1) * self.inputs];
                for (w, &v) in row.iter_mut().zip(&x.data) {
                    *w = *w + g * v;
                }
            }
        }
        need_input_grad.then(|| {
            let mut gin = vec![T::zero(); self.inputs];
            for o in 0..self.outputs {
                let g = grad_out.data[o];
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                for (d, &w) in gin.iter_mut().zip(row) {
                    *d = *d + g * w;
                }
            }
            FeatureMap::from_vec(x.channels, x.height, x.width, gin)
        })
    }
}

/// Layer kinds, with the architecture tag used in checkpoint metadata.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    Dense(Dense<T>),
    Elu,
    Sigmoid,
    /// Nearest-neighbour 2x upsampling.
    Upsample2,
    /// Projects onto the unit sphere.
    L2Normalize,
}

/// Serializable description of one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Elu,
    Sigmoid,
    Upsample2,
    L2Normalize,
}

const L2_EPS: f64 = 1e-12;

impl<T: Scalar> Layer<T> {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv(c) => LayerSpec::Conv {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: c.kernel,
                stride: c.stride,
            },
            Layer::Dense(d) => LayerSpec::Dense {
                inputs: d.inputs,
                outputs: d.outputs,
            },
            Layer::Elu => LayerSpec::Elu,
            Layer::Sigmoid => LayerSpec::Sigmoid,
            Layer::Upsample2 => LayerSpec::Upsample2,
            Layer::L2Normalize => LayerSpec::L2Normalize,
        }
    }

    pub fn forward(&self, x: &FeatureMap<T>) -> FeatureMap<T> {
        match self {
            Layer::Conv(c) => c.forward(x),
            Layer::Dense(d) => d.forward(x),
            Layer::Elu => map(x, |v| if v > T::zero() { v } else { v.exp() - T::one() }),
            Layer::Sigmoid => map(x, sigmoid),
            Layer::Upsample2 => {
                let (h, w) = (x.height, x.width);
                let mut out = FeatureMap::zeros(x.channels, 2 * h, 2 * w);
                for c in 0..x.channels {
                    for y in 0..2 * h {
                        let src = &x.data[c * h * w + (y / 2) * w..c * h * w + (y / 2 + 1) * w];
                        let dst = &mut out.data[(c * 2 * h + y) * 2 * w..(c * 2 * h + y + 1) * 2 * w];
                        for (xx, d) in dst.iter_mut().enumerate() {
                            *d = src[xx / 2];
                        }
                    }
                }
                out
            }
            Layer::L2Normalize => {
                let norm = (x.data.iter().map(|&v| v * v).sum::<T>() + T::of(L2_EPS)).sqrt();
                map(x, |v| v / norm)
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv(c) => c.weight.len() + c.bias.len(),
            Layer::Dense(d) => d.weight.len() + d.bias.len(),
            _ => 0,
        }
    }

    /// Backward through this layer. `x` is the layer input, `y` its output.
    pub fn backward(
        &self,
        x: &FeatureMap<T>,
        y: &FeatureMap<T>,
        grad_out: &FeatureMap<T>,
        params: Option<(&mut [T], &mut [T])>,
        need_input_grad: bool,
    ) -> Option<FeatureMap<T>> {
        match self {
            Layer::Conv(c) => c.backward(x, grad_out, params, need_input_grad),
            Layer::Dense(d) => d.backward(x, grad_out, params, need_input_grad),
            Layer::Elu => Some(zip_map(y, grad_out, |yv, g| {
                if yv > T::zero() {
                    g
                } else {
                    g * (yv + T::one())
                }
            })),
            Layer::Sigmoid => Some(zip_map(y, grad_out, |yv, g| g * yv * (T::one() - yv))),
            Layer::Upsample2 => {
                let (h, w) = (x.height, x.width);
                let mut gin = FeatureMap::zeros(x.channels, h, w);
                for c in 0..x.channels {
                    for yy in 0..2 * h {
                        let src = &grad_out.data[(c * 2 * h + yy) * 2 * w..(c * 2 * h + yy + 1) * 2 * w];
                        let dst = &mut gin.data[c * h * w + (yy / 2) * w..c * h * w + (yy / 2 + 1) * w];
                        for (xx, &g) in src.iter().enumerate() {
                            dst[xx / 2] = dst[xx / 2] + g;
                        }
                    }
                }
                Some(gin)
            }
            Layer::L2Normalize => {
                let norm = (x.data.iter().map(|&v| v * v).sum::<T>() + T::of(L2_EPS)).sqrt();
                let dot: T = y.data.iter().zip(&grad_out.data).map(|(&a, &b)| a * b).sum();
                Some(zip_map(y, grad_out, |yv, g| (g - yv * dot) / norm))
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn map<T: Scalar>(x: &FeatureMap<T>, f: impl Fn(T) -> T) -> FeatureMap<T> {
    FeatureMap::from_vec(x.channels, x.height, x.width, x.data.iter().map(|&v| f(v)).collect())
}

fn zip_map<T: Scalar>(a: &FeatureMap<T>, b: &FeatureMap<T>, f: impl Fn(T, T) -> T) -> FeatureMap<T> {
    FeatureMap::from_vec(
        a.channels,
        a.height,
        a.width,
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::seeded_rng;

    /// Direct-definition convolution used as an oracle for the row-sliced loops.
    fn conv_naive(c: &Conv2d<f64>, x: &FeatureMap<f64>) -> FeatureMap<f64> {
        let (oh, ow) = c.output_dims(x.height, x.width);
        let mut out = FeatureMap::zeros(c.out_channels, oh, ow);
        for oc in 0..c.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = c.bias[oc];
                    for ic in 0..c.in_channels {
                        for ky in 0..c.kernel {
                            for kx in 0..c.kernel {
                                let iy = (oy * c.stride + ky) as isize - c.padding as isize;
                                let ix = (ox * c.stride + kx) as isize - c.padding as isize;
                                if iy < 0 || ix < 0 || iy >= x.height as isize || ix >= x.width as isize {
                                    continue;
                                }
                                acc += c.weight[((oc * c.in_channels + ic) * c.kernel + ky) * c.kernel + kx]
                                    * x.data[(ic * x.height + iy as usize) * x.width + ix as usize];
                            }
                        }
                    }
                    out.data[(oc * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    fn random_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap<f64> {
        FeatureMap::from_vec(c, h, w, init_weights(rng, c * h * w, 1, 1.0))
    }

    #[test]
    fn conv_matches_naive_definition() {
        let mut rng = seeded_rng(7);
        for &(k, s, h, w) in &[(3, 1, 5, 6), (3, 2, 8, 8), (3, 2, 7, 5), (1, 1, 4, 3), (5, 2, 9, 10)] {
            let mut c = Conv2d::<f64>::new(2, 3, k, s, &mut rng, 1.0);
            c.bias = vec![0.1, -0.2, 0.3];
            let x = random_map(&mut rng, 2, h, w);
            let fast = c.forward(&x);
            let slow = conv_naive(&c, &x);
            assert_eq!((fast.height, fast.width), (slow.height, slow.width));
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-12, "k={k} s={s}");
            }
        }
    }

    /// Backward is the adjoint of forward: <g, J dx> = <J^T g, dx>, checked
    /// via linearity of the bias-free conv.
    #[test]
    fn conv_backward_is_adjoint() {
        let mut rng = seeded_rng(9);
        for &(k, s, h, w) in &[(3, 1, 6, 5), (3, 2, 8, 7)] {
            let c = Conv2d::<f64>::new(3, 2, k, s, &mut rng, 1.0);
            let x = random_map(&mut rng, 3, h, w);
            let y = c.forward(&x);
            let g = random_map(&mut rng, 2, y.height, y.width);
            let mut gw = vec![0.0; c.weight.len()];
            let mut gb = vec![0.0; c.bias.len()];
            let gx = c.backward(&x, &g, Some((&mut gw, &mut gb)), true).unwrap();
            let lhs: f64 = y.data.iter().zip(&g.data).map(|(a, b)| a * b).sum::<f64>()
                - gb.iter().zip(&c.bias).map(|(a, b)| a * b).sum::<f64>();
            let via_x: f64 = gx.data.iter().zip(&x.data).map(|(a, b)| a * b).sum();
            let via_w: f64 = gw.iter().zip(&c.weight).map(|(a, b)| a * b).sum();
            assert!((lhs - via_x).abs() < 1e-10);
            assert!((lhs - via_w).abs() < 1e-10);
        }
    }

    #[test]
    fn upsample_backward_sums_blocks() {
        let x = FeatureMap::from_vec(1, 1, 2, vec![1.0, 2.0]);
        let y = Layer::<f64>::Upsample2.forward(&x);
        assert_eq!(y.data, vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
        let g = FeatureMap::from_vec(1, 2, 4, (0..8).map(f64::from).collect());
        let gx = Layer::<f64>::Upsample2.backward(&x, &y, &g, None, true).unwrap();
        assert_eq!(gx.data, vec![0.0 + 1.0 + 4.0 + 5.0, 2.0 + 3.0 + 6.0 + 7.0]);
    }

    #[test]
    fn l2_normalize_is_unit_norm() {
        let x = FeatureMap::vector(vec![3.0, 4.0]);
        let y = Layer::<f64>::L2Normalize.forward(&x);
        assert!((y.data[0] - 0.6).abs() < 1e-12 && (y.data[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert!((sigmoid(0.0f32) - 0.5).abs() < 1e-7);
    }
}
