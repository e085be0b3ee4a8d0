//! The fully convolutional network φ: strided 2-D convolutions with
//! leaky-ReLU between layers and a single-channel linear output.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, substream};

pub const DEFAULT_NEGATIVE_SLOPE: f64 = 0.01;

/// A `c × h × w` row-major activation volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.h + y) * self.w + x
    }
}

/// Output positions `o` in `0..out_len` whose input index `o·s + k − p`
/// lies in `0..in_len`.
#[inline]
fn valid_range(out_len: usize, in_len: usize, s: usize, k: usize, p: usize) -> std::ops::Range<usize> {
    let lo = p.saturating_sub(k).div_ceil(s);
    let hi = (in_len + p).saturating_sub(k).div_ceil(s).min(out_len);
    lo..hi.max(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl LayerShape {
    pub const fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    /// `(n + 2·padding − kernel) / stride + 1`, floored; `None` when the
    /// kernel does not fit.
    pub fn output_len(&self, n: usize) -> Option<usize> {
        let padded = n + 2 * self.padding;
        (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }
}

/// conv 3×3×8 → conv 3×3×16 stride 2 → conv 1×1×1. Total stride 2.
pub const DEFAULT_ARCHITECTURE: [LayerShape; 3] = [
    LayerShape::new(1, 8, 3, 1, 1),
    LayerShape::new(8, 16, 3, 2, 1),
    LayerShape::new(16, 1, 1, 1, 0),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    #[serde(flatten)]
    pub shape: LayerShape,
    /// `[out][in][ky][kx]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(shape: LayerShape) -> Self {
        Self {
            shape,
            weights: vec![0.0; shape.weight_count()],
            bias: vec![0.0; shape.out_channels],
        }
    }

    #[inline]
    fn w_idx(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        let k = self.shape.kernel;
        ((o * self.shape.in_channels + i) * k + ky) * k + kx
    }

    pub fn forward(&self, input: &Tensor) -> Tensor {
        let LayerShape {
            in_channels: ci,
            out_channels: co,
            kernel: k,
            stride: s,
            padding: p,
        } = self.shape;
        let oh = self.shape.output_len(input.h).expect("checked by caller");
        let ow = self.shape.output_len(input.w).expect("checked by caller");
        let mut out = Tensor::zeros(co, oh, ow);
        for o in 0..co {
            let plane = &mut out.data[o * oh * ow..(o + 1) * oh * ow];
            plane.fill(self.bias[o]);
            for i in 0..ci {
                let src = &input.data[i * input.h * input.w..(i + 1) * input.h * input.w];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = self.weights[self.w_idx(o, i, ky, kx)];
                        let xs = valid_range(ow, input.w, s, kx, p);
                        for oy in valid_range(oh, input.h, s, ky, p) {
                            let iy = oy * s + ky - p;
                            let row = &src[iy * input.w..(iy + 1) * input.w];
                            let dst = &mut plane[oy * ow..(oy + 1) * ow];
                            for ox in xs.clone() {
                                dst[ox] += wv * row[ox * s + kx - p];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to `input`.
    /// Skips the input gradient (returns an empty tensor) when `want_input`
    /// is false.
    pub fn backward(&self, input: &Tensor, grad_out: &Tensor, grad: &mut ConvLayer, want_input: bool) -> Tensor {
        let LayerShape {
            in_channels: ci,
            out_channels: co,
            kernel: k,
            stride: s,
            padding: p,
        } = self.shape;
        let (oh, ow) = (grad_out.h, grad_out.w);
        let mut grad_in = if want_input {
            Tensor::zeros(ci, input.h, input.w)
        } else {
            Tensor::zeros(0, 0, 0)
        };
        for o in 0..co {
            let g = &grad_out.data[o * oh * ow..(o + 1) * oh * ow];
            grad.bias[o] += g.iter().sum::<f64>();
            for i in 0..ci {
                let base = i * input.h * input.w;
                for ky in 0..k {
                    for kx in 0..k {
                        let wi = self.w_idx(o, i, ky, kx);
                        let wv = self.weights[wi];
                        let mut dw = 0.0;
                        let xs = valid_range(ow, input.w, s, kx, p);
                        for oy in valid_range(oh, input.h, s, ky, p) {
                            let row = base + (oy * s + ky - p) * input.w;
                            let grow = &g[oy * ow..(oy + 1) * ow];
                            for ox in xs.clone() {
                                let go = grow[ox];
                                let ix = row + ox * s + kx - p;
                                dw += go * input.data[ix];
                                if want_input {
                                    grad_in.data[ix] += go * wv;
                                }
                            }
                        }
                        grad.weights[wi] += dw;
                    }
                }
            }
        }
        grad_in
    }
}

/// Parameters W of φ. Also used as the container for gradients and Adam
/// moments, which share its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkWeights {
    pub negative_slope: f64,
    pub layers: Vec<ConvLayer>,
}

/// Activations kept for backpropagation.
pub struct ForwardCache {
    /// Input to each layer (the frame, then post-activation outputs).
    pub inputs: Vec<Tensor>,
    /// Pre-activation output of each layer; the last one is φ(X).
    pub outputs: Vec<Tensor>,
}

impl NetworkWeights {
    /// He-uniform initialization (bound √(6 / fan_in)), zero biases.
    pub fn init(shapes: &[LayerShape], seed: u64) -> Result<Self> {
        let mut rng = substream(seed, domain::INIT, 0);
        let layers = shapes
            .iter()
            .map(|&shape| {
                let fan_in = (shape.in_channels * shape.kernel * shape.kernel) as f64;
                let bound = (6.0 / fan_in).sqrt();
                let mut layer = ConvLayer::zeros(shape);
                layer
                    .weights
                    .iter_mut()
                    .for_each(|w| *w = rng.random_range(-bound..bound));
                layer
            })
            .collect();
        let net = Self {
            negative_slope: DEFAULT_NEGATIVE_SLOPE,
            layers,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn default_init(seed: u64) -> Self {
        Self::init(&DEFAULT_ARCHITECTURE, seed).expect("default architecture is valid")
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            negative_slope: self.negative_slope,
            layers: self.layers.iter().map(|l| ConvLayer::zeros(l.shape)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::Shape("network has no layers".into()))?;
        if first.shape.in_channels != 1 {
            return Err(Error::Shape("first layer must take one input channel".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[0].shape.out_channels != pair[1].shape.in_channels {
                return Err(Error::Shape(format!(
                    "layer emits {} channels, next expects {}",
                    pair[0].shape.out_channels, pair[1].shape.in_channels
                )));
            }
        }
        if self.layers.last().map(|l| l.shape.out_channels) != Some(1) {
            return Err(Error::Shape("final layer must emit one channel".into()));
        }
        for l in &self.layers {
            if l.shape.kernel == 0 || l.shape.stride == 0 {
                return Err(Error::Shape("kernel and stride must be positive".into()));
            }
            if l.weights.len() != l.shape.weight_count() || l.bias.len() != l.shape.out_channels {
                return Err(Error::Shape("parameter array sizes disagree with layer shape".into()));
            }
        }
        if !self.negative_slope.is_finite() {
            return Err(Error::Shape("negative slope must be finite".into()));
        }
        Ok(())
    }

    pub fn total_stride(&self) -> usize {
        self.layers.iter().map(|l| l.shape.stride).product()
    }

    /// Feature-map size for an input frame; errors unless both sides are
    /// multiples of the total stride and every layer divides exactly.
    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let stride = self.total_stride();
        if height == 0 || width == 0 || !height.is_multiple_of(stride) || !width.is_multiple_of(stride) {
            return Err(Error::Shape(format!(
                "input {width}x{height} is not a multiple of the network stride {stride}"
            )));
        }
        let (mut h, mut w) = (height, width);
        for l in &self.layers {
            h = l.shape.output_len(h).ok_or_else(|| Error::Shape("kernel larger than input".into()))?;
            w = l.shape.output_len(w).ok_or_else(|| Error::Shape("kernel larger than input".into()))?;
        }
        if (h, w) != (height / stride, width / stride) {
            return Err(Error::Shape(format!(
                "layer geometry maps {width}x{height} to {w}x{h}, expected input/stride"
            )));
        }
        Ok((h, w))
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters in a fixed order: per layer, weights then biases.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn activate(&self, t: &mut Tensor) {
        let a = self.negative_slope;
        t.data.iter_mut().for_each(|v| {
            if *v < 0.0 {
                *v *= a
            }
        });
    }

    pub fn forward_cached(&self, input: Tensor) -> ForwardCache {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut outputs = Vec::with_capacity(n);
        let mut x = input;
        for (li, layer) in self.layers.iter().enumerate() {
            let y = layer.forward(&x);
            inputs.push(x);
            if li + 1 < n {
                let mut act = y.clone();
                self.activate(&mut act);
                outputs.push(y);
                x = act;
            } else {
                outputs.push(y);
                x = Tensor::zeros(0, 0, 0);
            }
        }
        ForwardCache { inputs, outputs }
    }

    /// Backpropagates `grad_phi` (gradient with respect to φ(X)) and adds the
    /// parameter gradients into `grad`.
    pub fn backward(&self, cache: &ForwardCache, grad_phi: Tensor, grad: &mut NetworkWeights) {
        let mut g = grad_phi;
        for li in (0..self.layers.len()).rev() {
            if li + 1 < self.layers.len() {
                let pre = &cache.outputs[li];
                let a = self.negative_slope;
                g.data
                    .iter_mut()
                    .zip(&pre.data)
                    .for_each(|(gv, &p)| {
                        if p < 0.0 {
                            *gv *= a
                        }
                    });
            }
            g = self.layers[li].backward(&cache.inputs[li], &g, &mut grad.layers[li], li > 0);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: Self = serde_json::from_str(text)?;
        w.validate()?;
        Ok(w)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_matches_bounds_check() {
        for (out_len, in_len, st, k, p) in [(8, 8, 1, 0, 1), (8, 8, 1, 2, 1), (4, 8, 2, 0, 1), (4, 8, 2, 2, 1), (5, 5, 1, 1, 0)] {
            let brute: Vec<usize> = (0..out_len)
                .filter(|&o| {
                    let i = (o * st + k) as isize - p as isize;
                    i >= 0 && i < in_len as isize
                })
                .collect();
            assert_eq!(valid_range(out_len, in_len, st, k, p).collect::<Vec<_>>(), brute);
        }
    }

    #[test]
    fn default_shapes_chain() {
        let net = NetworkWeights::default_init(1);
        assert_eq!(net.total_stride(), 2);
        assert_eq!(net.output_dims(64, 64).unwrap(), (32, 32));
        assert!(net.output_dims(63, 64).is_err());
        assert_eq!(net.num_params(), 80 + 1168 + 17);
        assert!(net.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn broken_chains_are_rejected() {
        let mut net = NetworkWeights::default_init(1);
        net.layers.swap(0, 1);
        assert!(net.validate().is_err());
        let shapes = [LayerShape::new(1, 4, 3, 1, 1), LayerShape::new(4, 2, 1, 1, 0)];
        assert!(NetworkWeights::init(&shapes, 0).is_err());
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let net = NetworkWeights::default_init(99);
        let back = NetworkWeights::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
        let v: serde_json::Value = serde_json::from_str(&net.to_json()).unwrap();
        let l0 = &v["layers"][0];
        assert_eq!(l0["kernel"], 3);
        assert_eq!(l0["out_channels"], 8);
        assert_eq!(l0["weights"].as_array().unwrap().len(), 72);
    }
}
