use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sewerwatch::fcdd::{
    self, explain, forward, gradient, heatmap, loss, score, score_frames, train, upsample, FeatureMap, HeatMap,
    LayerShape, NetworkWeights, TrainConfig,
};
use sewerwatch::synth::{gen_frame, gen_frames, FrameSpec};
use sewerwatch::{Frame, Label};

/// Direct evaluation of φ, one output value at a time.
fn naive_phi(net: &NetworkWeights, frame: &Frame) -> Vec<f64> {
    let mut act: Vec<Vec<Vec<f64>>> = vec![(0..frame.height)
        .map(|y| (0..frame.width).map(|x| frame.at(x, y)).collect())
        .collect()];
    let n = net.layers.len();
    for (li, layer) in net.layers.iter().enumerate() {
        let s = layer.shape;
        let (h, w) = (act[0].len() as isize, act[0][0].len() as isize);
        let oh = ((h + 2 * s.padding as isize - s.kernel as isize) / s.stride as isize + 1) as usize;
        let ow = ((w + 2 * s.padding as isize - s.kernel as isize) / s.stride as isize + 1) as usize;
        let mut next = vec![vec![vec![0.0; ow]; oh]; s.out_channels];
        for o in 0..s.out_channels {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = layer.bias[o];
                    for i in 0..s.in_channels {
                        for ky in 0..s.kernel {
                            for kx in 0..s.kernel {
                                let iy = (y * s.stride + ky) as isize - s.padding as isize;
                                let ix = (x * s.stride + kx) as isize - s.padding as isize;
                                if iy < 0 || ix < 0 || iy >= h || ix >= w {
                                    continue;
                                }
                                let wv = layer.weights[((o * s.in_channels + i) * s.kernel + ky) * s.kernel + kx];
                                acc += wv * act[i][iy as usize][ix as usize];
                            }
                        }
                    }
                    if li + 1 < n && acc < 0.0 {
                        acc *= net.negative_slope;
                    }
                    next[o][y][x] = acc;
                }
            }
        }
        act = next;
    }
    act[0].iter().flatten().copied().collect()
}

fn random_net(rng: &mut ChaCha8Rng) -> NetworkWeights {
    let c1 = rng.random_range(2..=4);
    let c2 = rng.random_range(2..=4);
    let shapes = [
        LayerShape::new(1, c1, 3, 1, 1),
        LayerShape::new(c1, c2, 3, 2, 1),
        LayerShape::new(c2, 1, 1, 1, 0),
    ];
    let mut net = NetworkWeights::init(&shapes, rng.random()).unwrap();
    for l in &mut net.layers {
        l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
    }
    net
}

fn random_frame(rng: &mut ChaCha8Rng, w: usize, h: usize, label: Label) -> Frame {
    let pixels = (0..w * h).map(|_| rng.random::<f64>()).collect();
    Frame::new(w, h, pixels, label, None).unwrap()
}

#[test]
fn forward_matches_naive_convolution() {
    let net = NetworkWeights::default_init(17);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut biased = net.clone();
    for l in &mut biased.layers {
        l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    }
    let frame = gen_frame(&FrameSpec::default(), Label::Anomaly, 3).unwrap();
    for n in [&net, &biased] {
        let fast = forward(n, &frame).unwrap();
        let slow = naive_phi(n, &frame);
        assert_eq!((fast.u, fast.v), (16, 16));
        for (a, b) in fast.values.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn zero_weights_give_zero_map_and_shapes_follow_stride() {
    let mut net = NetworkWeights::default_init(0);
    net.params_mut().for_each(|p| *p = 0.0);
    let frame = Frame::new(64, 64, vec![0.7; 64 * 64], Label::Normal, None).unwrap();
    let feat = forward(&net, &frame).unwrap();
    assert_eq!((feat.u, feat.v), (32, 32));
    assert!(feat.values.iter().all(|&v| v == 0.0));
    let odd = Frame::new(30, 31, vec![0.0; 30 * 31], Label::Normal, None).unwrap();
    assert!(matches!(forward(&net, &odd), Err(sewerwatch::Error::Shape(_))));
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let net = random_net(&mut rng);
        let batch: Vec<Frame> = [Label::Normal, Label::Anomaly, Label::Anomaly]
            .into_iter()
            .map(|l| random_frame(&mut rng, 8, 8, l))
            .collect();
        let (_, grad) = gradient(&batch, &net, 1e-6).unwrap();
        let analytic: Vec<f64> = grad.params().copied().collect();
        for (k, &a) in analytic.iter().enumerate() {
            let mut plus = net.clone();
            *plus.params_mut().nth(k).unwrap() += h;
            let mut minus = net.clone();
            *minus.params_mut().nth(k).unwrap() -= h;
            let fd = (loss(&batch, &plus, 1e-6).unwrap() - loss(&batch, &minus, 1e-6).unwrap()) / (2.0 * h);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn normal_batch_at_zero_weights_has_zero_final_bias_gradient() {
    let mut net = NetworkWeights::default_init(0);
    net.params_mut().for_each(|p| *p = 0.0);
    let spec = FrameSpec::default();
    let batch = gen_frames(&spec, &[Label::Normal; 4], 9).unwrap();
    let (l, g) = gradient(&batch, &net, 1e-6).unwrap();
    assert_eq!(l, 0.0);
    assert_eq!(g.layers.last().unwrap().bias[0], 0.0);
}

#[test]
fn gradient_is_antisymmetric_under_final_kernel_negation() {
    let net = NetworkWeights::default_init(4);
    let spec = FrameSpec::default();
    let batch = gen_frames(&spec, &[Label::Normal, Label::Anomaly, Label::Anomaly], 2).unwrap();
    let mut neg = net.clone();
    neg.layers.last_mut().unwrap().weights.iter_mut().for_each(|w| *w = -*w);
    let (l1, g1) = gradient(&batch, &net, 1e-6).unwrap();
    let (l2, g2) = gradient(&batch, &neg, 1e-6).unwrap();
    assert!((l1 - l2).abs() < 1e-14);
    let last = net.layers.len() - 1;
    for (li, (a, b)) in g1.layers.iter().zip(&g2.layers).enumerate() {
        for (x, y) in a.weights.iter().zip(&b.weights) {
            if li == last {
                assert!((x + y).abs() < 1e-14);
            } else {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn heatmap_and_score_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let vals: Vec<f64> = (0..12).map(|_| rng.random_range(-50.0..50.0)).collect();
        let map = heatmap(&FeatureMap { u: 3, v: 4, values: vals });
        assert!(map.values.iter().all(|&a| a >= 0.0));
        let z = score(&map).unwrap();
        let max = map.values.iter().copied().fold(0.0, f64::max);
        assert!(z >= 0.0 && z <= max);
    }
}

#[test]
fn translation_by_one_stride_unit_shifts_heatmap_by_one_cell() {
    let net = NetworkWeights::default_init(8);
    let (w, h) = (24, 24);
    let mut a = vec![0.0; w * h];
    let mut b = vec![0.0; w * h];
    for (dy, dx, v) in [(0, 0, 1.0), (1, 0, 0.5), (0, 1, 0.25)] {
        a[(10 + dy) * w + 10 + dx] = v;
        b[(10 + dy) * w + 12 + dx] = v;
    }
    let fa = forward(&net, &Frame::new(w, h, a, Label::Normal, None).unwrap()).unwrap();
    let fb = forward(&net, &Frame::new(w, h, b, Label::Normal, None).unwrap()).unwrap();
    let (u, v) = (fa.u, fa.v);
    for i in 1..u - 1 {
        for j in 1..v - 2 {
            assert!((fa.values[i * v + j] - fb.values[i * v + j + 1]).abs() < 1e-14);
        }
    }
}

#[test]
fn upsampling_preserves_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let vals: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
    let map = HeatMap::new(8, 8, vals).unwrap();
    let up = upsample(&map, (16, 16), 2).unwrap();
    let a_sum: f64 = map.values.iter().sum();
    let k_sum: f64 = fcdd::upsample::gaussian_kernel(4, 1.0).iter().sum();
    let up = up.upsampled.unwrap();
    assert_eq!((up.width, up.height), (16, 16));
    assert!(up.values.iter().all(|&v| v >= 0.0));
    assert!((up.values.iter().sum::<f64>() - a_sum * k_sum).abs() < 1e-9);
}

#[test]
fn score_frames_composes_the_single_frame_operations() {
    let net = NetworkWeights::default_init(3);
    let frames = gen_frames(&FrameSpec::default(), &[Label::Normal, Label::Anomaly, Label::Normal], 1).unwrap();
    let stream = score_frames(&net, &frames).unwrap();
    assert_eq!(stream.len(), 3);
    for (r, f) in stream.records.iter().zip(&frames) {
        assert_eq!(r.z, score(&heatmap(&forward(&net, f).unwrap())).unwrap());
        assert_eq!(r.y, f.label);
    }
    assert!(score_frames(&net, &[]).unwrap().is_empty());
    let explained = explain(&net, &frames[1]).unwrap();
    assert_eq!(explained.upsampled.unwrap().values.len(), 32 * 32);
}

fn balanced(n: usize) -> Vec<Label> {
    (0..n).map(|i| Label::from(i % 2 == 1)).collect()
}

#[test]
fn default_training_reduces_loss() {
    let data = gen_frames(&FrameSpec::default(), &balanced(200), 77).unwrap();
    let out = train(&data, &TrainConfig::default()).unwrap();
    assert_eq!(out.loss_trace.len(), TrainConfig::default().epochs);
    assert!(out.loss_trace.last().unwrap() < out.loss_trace.first().unwrap(), "{:?}", out.loss_trace);
}

#[test]
fn zero_learning_rate_leaves_weights_and_training_is_deterministic() {
    let data = gen_frames(&FrameSpec::default(), &balanced(40), 5).unwrap();
    let cfg = TrainConfig { epochs: 2, batch_size: 8, seed: 3, ..Default::default() };
    let frozen = train(&data, &TrainConfig { learning_rate: 0.0, ..cfg.clone() }).unwrap();
    assert_eq!(frozen.weights, NetworkWeights::default_init(3));
    let a = train(&data, &cfg).unwrap();
    let b = train(&data, &cfg).unwrap();
    assert_eq!(a.weights, b.weights);
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_ne!(a.weights, frozen.weights);
}

#[test]
fn single_class_training_set_is_rejected() {
    let data = gen_frames(&FrameSpec::default(), &[Label::Normal; 6], 5).unwrap();
    assert!(matches!(train(&data, &TrainConfig::default()), Err(sewerwatch::Error::Config(_))));
    let bad = TrainConfig { augment_fraction: 1.5, ..Default::default() };
    assert!(bad.validate().is_err());
    let bad = TrainConfig { loss_clamp_epsilon: 0.1, ..Default::default() };
    assert!(bad.validate().is_err());
}

#[test]
fn loss_trace_csv() {
    let data = gen_frames(&FrameSpec::default(), &balanced(10), 5).unwrap();
    let out = train(&data, &TrainConfig { epochs: 3, ..Default::default() }).unwrap();
    let csv = out.loss_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,loss");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("3,"));
}
