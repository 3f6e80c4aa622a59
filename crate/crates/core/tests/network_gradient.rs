//! Backpropagation through the full regressor checked against central
//! differences in double precision.

use fetal_biometry::model::{Regressor, RegressorSpec, Variant};
use fetal_biometry::nn::{zero_grads, Graph};
use ndarray::Array4;

fn loss_and_grads(net: &Regressor<f64>, input: &Array4<f64>, target: &Array4<f64>) -> (f64, Vec<fetal_biometry::nn::ConvGrad<f64>>) {
    let mut graph = Graph::new(&net.layers);
    let out = net.build(&mut graph, input.clone()).unwrap();
    let pred = graph.value(out).clone();
    let n = pred.len() as f64;
    let diff = &pred - target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let mut grads = zero_grads(&net.layers);
    graph.backward(out, diff.mapv(|d| 2.0 * d / n), &mut grads).unwrap();
    (loss, grads)
}

fn check(variant: Variant) {
    let spec = RegressorSpec {
        variant,
        input_height: 8,
        input_width: 8,
        output_stride: 1,
        channels: [2, 3, 3, 4],
    };
    let mut net = Regressor::<f64>::new(spec, 3).unwrap();
    // nonzero biases keep ReLUs away from their kinks
    for (l, layer) in net.layers.iter_mut().enumerate() {
        layer.bias.mapv_inplace(|_| 0.05 + 0.01 * l as f64);
    }
    let input = Array4::from_shape_fn((1, 2, 8, 8), |(_, b, y, x)| ((x * 3 + y * 5 + b * 7) % 11) as f64 / 11.0 - 0.3);
    let target = Array4::from_shape_fn((2, 2, 8, 8), |(c, b, y, x)| ((x + 2 * y + c + b) % 5) as f64 / 5.0);
    let (_, grads) = loss_and_grads(&net, &input, &target);

    let h = 1e-6;
    let mut checked = 0;
    for l in 0..net.layers.len() {
        let n_w = net.layers[l].weight.len();
        let picks = [0, n_w / 3, n_w - 1];
        for &idx in &picks {
            let cols = net.layers[l].weight.ncols();
            let at = (idx / cols, idx % cols);
            let orig = net.layers[l].weight[at];
            net.layers[l].weight[at] = orig + h;
            let up = loss_and_grads(&net, &input, &target).0;
            net.layers[l].weight[at] = orig - h;
            let down = loss_and_grads(&net, &input, &target).0;
            net.layers[l].weight[at] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads[l].weight[at];
            let scale = fd.abs().max(an.abs());
            if scale > 1e-8 {
                assert!((fd - an).abs() / scale < 1e-3, "{variant:?} layer {l} weight {at:?}: fd {fd} analytic {an}");
                checked += 1;
            }
        }
        let orig = net.layers[l].bias[0];
        net.layers[l].bias[0] = orig + h;
        let up = loss_and_grads(&net, &input, &target).0;
        net.layers[l].bias[0] = orig - h;
        let down = loss_and_grads(&net, &input, &target).0;
        net.layers[l].bias[0] = orig;
        let fd = (up - down) / (2.0 * h);
        let an = grads[l].bias[0];
        let scale = fd.abs().max(an.abs());
        if scale > 1e-8 {
            assert!((fd - an).abs() / scale < 1e-3, "{variant:?} layer {l} bias: fd {fd} analytic {an}");
            checked += 1;
        }
    }
    assert!(checked >= net.layers.len(), "too few informative parameters ({checked})");
}

#[test]
fn tiny_variant_gradients_match_finite_differences() {
    check(Variant::TinyEncoderDecoder);
}

#[test]
fn multi_resolution_gradients_match_finite_differences() {
    check(Variant::MultiResolutionFull);
}
