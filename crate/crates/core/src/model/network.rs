use ndarray::{Array3, Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::heatmap::HeatmapStack;
use crate::image::GrayImage;
use crate::model::{RegressorSpec, Variant};
use crate::nn::{cast, flatten_layers, load_layers, Conv2d, Graph, NodeId, Scalar};

/// Layer stack for one [`RegressorSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor<T> {
    pub spec: RegressorSpec,
    pub layers: Vec<Conv2d<T>>,
}

fn stem_depth(spec: &RegressorSpec) -> usize {
    spec.output_stride.trailing_zeros() as usize
}

fn build_layers<T: Scalar>(spec: &RegressorSpec, rng: &mut ChaCha8Rng) -> Vec<Conv2d<T>> {
    let [c0, c1, c2, c3] = spec.channels;
    let mut layers = Vec::new();
    match stem_depth(spec) {
        0 => layers.push(Conv2d::new(1, c0, 3, 1, rng)),
        k => {
            layers.push(Conv2d::new(1, c0, 3, 2, rng));
            for _ in 1..k {
                layers.push(Conv2d::new(c0, c0, 3, 2, rng));
            }
        }
    }
    match spec.variant {
        Variant::TinyEncoderDecoder => {
            layers.push(Conv2d::new(c0, c0, 3, 1, rng));
            layers.push(Conv2d::new(c0, c1, 3, 2, rng));
            layers.push(Conv2d::new(c1, c2, 3, 2, rng));
            layers.push(Conv2d::new(c2, c3, 3, 2, rng));
            layers.push(Conv2d::new(c3, c3, 3, 1, rng));
            layers.push(Conv2d::new(c3 + c2, c2, 3, 1, rng));
            layers.push(Conv2d::new(c2 + c1, c1, 3, 1, rng));
            layers.push(Conv2d::new(c1 + c0, c0, 3, 1, rng));
            layers.push(Conv2d::new(c0, 2, 1, 1, rng));
        }
        Variant::MultiResolutionFull => {
            // one block per stream, then a transition to the next coarser one
            layers.push(Conv2d::new(c0, c0, 3, 1, rng));
            layers.push(Conv2d::new(c0, c1, 3, 2, rng));
            layers.push(Conv2d::new(c1, c1, 3, 1, rng));
            layers.push(Conv2d::new(c1, c2, 3, 2, rng));
            layers.push(Conv2d::new(c2, c2, 3, 1, rng));
            layers.push(Conv2d::new(c2, c3, 3, 2, rng));
            layers.push(Conv2d::new(c3, c3, 3, 1, rng));
            layers.push(Conv2d::new(c0 + c1 + c2 + c3, c0, 1, 1, rng));
            layers.push(Conv2d::new(c0, 2, 1, 1, rng));
        }
    }
    layers
}

impl<T: Scalar> Regressor<T> {
    /// Randomly initialized network, deterministic in `seed`.
    pub fn new(spec: RegressorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = build_layers(&spec, &mut rng);
        Ok(Self { spec, layers })
    }

    /// Network with parameters read from a flat vector.
    pub fn from_flat(spec: RegressorSpec, params: &[f64]) -> Result<Self> {
        let mut net = Self::new(spec, 0)?;
        load_layers(params, &mut net.layers)?;
        Ok(net)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Conv2d::n_params).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    /// Adds the network to `graph`; `input` is `(1, batch, H, W)`.
    pub fn build(&self, graph: &mut Graph<'_, T>, input: Array4<T>) -> Result<NodeId> {
        let (c, _, h, w) = input.dim();
        if c != 1 || h != self.spec.input_height || w != self.spec.input_width {
            return Err(Error::domain(format!(
                "network expects 1x{}x{} input, got {c}x{h}x{w}",
                self.spec.input_height, self.spec.input_width
            )));
        }
        let mut layer = 0;
        let mut conv_relu = |g: &mut Graph<'_, T>, x: NodeId| -> Result<NodeId> {
            let y = g.conv(x, layer)?;
            layer += 1;
            Ok(g.relu(y))
        };
        let mut x = graph.input(input);
        for _ in 0..stem_depth(&self.spec).max(1) {
            x = conv_relu(graph, x)?;
        }
        let fused = match self.spec.variant {
            Variant::TinyEncoderDecoder => {
                let s0 = conv_relu(graph, x)?;
                let s1 = conv_relu(graph, s0)?;
                let s2 = conv_relu(graph, s1)?;
                let s3 = conv_relu(graph, s2)?;
                let b = conv_relu(graph, s3)?;
                let u = graph.upsample(b, 2);
                let u = graph.concat(&[u, s2])?;
                let u = conv_relu(graph, u)?;
                let u = graph.upsample(u, 2);
                let u = graph.concat(&[u, s1])?;
                let u = conv_relu(graph, u)?;
                let u = graph.upsample(u, 2);
                let u = graph.concat(&[u, s0])?;
                conv_relu(graph, u)?
            }
            Variant::MultiResolutionFull => {
                let r0 = conv_relu(graph, x)?;
                let t1 = conv_relu(graph, r0)?;
                let r1 = conv_relu(graph, t1)?;
                let t2 = conv_relu(graph, r1)?;
                let r2 = conv_relu(graph, t2)?;
                let t3 = conv_relu(graph, r2)?;
                let r3 = conv_relu(graph, t3)?;
                let u1 = graph.upsample(r1, 2);
                let u2 = graph.upsample(r2, 4);
                let u3 = graph.upsample(r3, 8);
                let all = graph.concat(&[r0, u1, u2, u3])?;
                conv_relu(graph, all)?
            }
        };
        graph.conv(fused, self.layers.len() - 1)
    }

    /// Raw `(2, batch, rows, cols)` output for preprocessed inputs.
    pub fn forward(&self, inputs: &[&GrayImage]) -> Result<Array4<T>> {
        let (h, w) = (self.spec.input_height, self.spec.input_width);
        let mut batch = Array4::<T>::zeros((1, inputs.len(), h, w));
        for (b, img) in inputs.iter().enumerate() {
            if img.height() != h || img.width() != w {
                return Err(Error::domain(format!(
                    "input image is {}x{}, network expects {w}x{h}",
                    img.width(),
                    img.height()
                )));
            }
            batch
                .index_axis_mut(Axis(1), b)
                .index_axis_mut(Axis(0), 0)
                .zip_mut_with(img.data(), |d, s| *d = cast(*s));
        }
        let mut graph = Graph::inference(&self.layers);
        let out = self.build(&mut graph, batch)?;
        Ok(graph.value(out).clone())
    }

    /// Per-image heatmap stacks at the output stride.
    pub fn heatmaps(&self, inputs: &[&GrayImage]) -> Result<Vec<HeatmapStack>> {
        let out = self.forward(inputs)?;
        (0..inputs.len())
            .map(|b| {
                let maps: Array3<f64> = out
                    .index_axis(Axis(1), b)
                    .mapv(|v| v.to_f64().expect("finite"));
                HeatmapStack::new(maps, self.spec.output_stride)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(variant: Variant, size: usize, stride: usize) -> RegressorSpec {
        RegressorSpec {
            variant,
            input_height: size,
            input_width: size,
            output_stride: stride,
            channels: [4, 6, 8, 10],
        }
    }

    #[test]
    fn output_shape_follows_stride() {
        for variant in [Variant::TinyEncoderDecoder, Variant::MultiResolutionFull] {
            for (size, stride) in [(32, 1), (32, 2), (64, 4), (64, 8)] {
                let net = Regressor::<f32>::new(spec(variant, size, stride), 1).unwrap();
                let img = GrayImage::from_fn(size, size, |x, y| ((x * y) % 7) as f64);
                let maps = net.heatmaps(&[&img, &img]).unwrap();
                assert_eq!(maps.len(), 2);
                assert_eq!(maps[0].maps.dim(), (2, size / stride, size / stride));
            }
        }
    }

    #[test]
    fn forward_is_deterministic_and_input_dependent() {
        let net = Regressor::<f32>::new(spec(Variant::TinyEncoderDecoder, 32, 2), 5).unwrap();
        let zero = GrayImage::zeros(32, 32);
        let ramp = GrayImage::from_fn(32, 32, |x, y| (x + y) as f64 / 10.0);
        let a = net.forward(&[&ramp]).unwrap();
        let b = net.forward(&[&ramp]).unwrap();
        assert_eq!(a, b);
        assert_ne!(net.forward(&[&zero]).unwrap(), a);
    }

    #[test]
    fn wrong_input_size_is_rejected() {
        let net = Regressor::<f32>::new(spec(Variant::TinyEncoderDecoder, 32, 2), 0).unwrap();
        assert!(net.forward(&[&GrayImage::zeros(16, 32)]).is_err());
    }

    #[test]
    fn flat_params_roundtrip() {
        let s = spec(Variant::MultiResolutionFull, 32, 4);
        let net = Regressor::<f32>::new(s.clone(), 9).unwrap();
        let back = Regressor::<f32>::from_flat(s, &net.flat_params()).unwrap();
        assert_eq!(back, net);
        assert_eq!(net.flat_params().len(), net.n_params());
    }
}
