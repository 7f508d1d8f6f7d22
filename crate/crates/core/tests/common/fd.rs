//! Central finite differences against backprop.

use rand::Rng as _;
use semcom::datasets_metrics::Targets;
use semcom::semantic_coding::{distortion_components, LossConfig, Pragmatic, TaskKind};
use semcom::seeded_rng;
use semcom::tensor_nn::{LayerKind, Model, ModelBuilder, Tensor};

use super::random_tensor;

pub const H: f64 = 1e-6;
pub const REL: f64 = 1e-3;
pub const ABS: f64 = 1e-6;
pub const PROBES: usize = 100;

pub const ALL_KINDS: [LayerKind; 8] = [
    LayerKind::Dense,
    LayerKind::Conv2d,
    LayerKind::Flatten,
    LayerKind::Reshape,
    LayerKind::Relu,
    LayerKind::Sigmoid,
    LayerKind::Tanh,
    LayerKind::PowerNorm,
];

/// A probe whose analytic and numeric derivatives disagree.
#[derive(Debug)]
pub struct Mismatch {
    pub param: bool,
    pub analytic: f64,
    pub numeric: f64,
}

fn close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= REL * analytic.abs().max(numeric.abs()) + ABS
}

fn set_param(model: &mut Model, flat: usize, value: f64) {
    let mut left = flat;
    for p in model.params_mut() {
        if left < p.len() {
            p.data_mut()[left] = value;
            return;
        }
        left -= p.len();
    }
    panic!("parameter index {flat} out of range");
}

/// Probes `PROBES` random coordinates of params and input of `loss`,
/// comparing with the analytic gradient `(param_grads, input_grad)`.
fn probe<F>(model: &Model, x: &Tensor, analytic: (Vec<f64>, Tensor), loss: F, seed: u64) -> Vec<Mismatch>
where
    F: Fn(&Model, &Tensor) -> f64,
{
    let (g_params, g_input) = analytic;
    let theta = model.param_vector();
    let mut rng = seeded_rng(seed);
    let mut failures = Vec::new();
    for _ in 0..PROBES {
        let param = !theta.is_empty() && rng.random_bool(0.6);
        let (analytic, numeric) = if param {
            let j = rng.random_range(0..theta.len());
            let mut m = model.clone();
            set_param(&mut m, j, theta[j] + H);
            let up = loss(&m, x);
            set_param(&mut m, j, theta[j] - H);
            let down = loss(&m, x);
            (g_params[j], (up - down) / (2.0 * H))
        } else {
            let j = rng.random_range(0..x.len());
            let mut xp = x.clone();
            xp.data_mut()[j] += H;
            let up = loss(model, &xp);
            xp.data_mut()[j] -= 2.0 * H;
            let down = loss(model, &xp);
            (g_input.data()[j], (up - down) / (2.0 * H))
        };
        if !close(analytic, numeric) {
            failures.push(Mismatch { param, analytic, numeric });
        }
    }
    failures
}

/// Checks a random linear functional of the model output, so every output
/// element carries gradient.
pub fn check_model(model: Model, x: Tensor, seed: u64) -> Vec<Mismatch> {
    let mut rng = seeded_rng(seed ^ 0xABCD);
    let mut model = model;
    let out_shape = model.infer(&x).unwrap().shape().to_vec();
    let c = random_tensor(&out_shape, -1.0, 1.0, &mut rng);
    let loss = |m: &Model, x: &Tensor| -> f64 { m.infer(x).unwrap().data().iter().zip(c.data()).map(|(a, b)| a * b).sum() };
    model.zero_grad();
    model.forward(&x).unwrap();
    let gx = model.backward(&c).unwrap();
    let analytic = (model.grad_vector(), gx);
    model.zero_grad();
    model.clear_tape();
    probe(&model, &x, analytic, loss, seed)
}

/// One small model per layer kind, with an input batch shape.
pub fn layer_cases(seed: u64) -> Vec<(&'static str, Model, Tensor)> {
    let mut rng = seeded_rng(seed);
    let cases: Vec<(&str, Model, Vec<usize>)> = vec![
        ("dense", ModelBuilder::new(&[5]).dense(4, &mut rng).build().unwrap(), vec![3, 5]),
        (
            "conv2d",
            ModelBuilder::new(&[2, 5, 5]).conv2d(3, 3, 2, 1, &mut rng).build().unwrap(),
            vec![2, 2, 5, 5],
        ),
        (
            "conv2d_unpadded",
            ModelBuilder::new(&[1, 6, 6]).conv2d(2, 2, 1, 0, &mut rng).build().unwrap(),
            vec![2, 1, 6, 6],
        ),
        (
            "flatten_reshape",
            ModelBuilder::new(&[2, 3])
                .flatten()
                .dense(6, &mut rng)
                .reshape(&[3, 2])
                .build()
                .unwrap(),
            vec![2, 2, 3],
        ),
        ("relu", ModelBuilder::new(&[6]).dense(6, &mut rng).relu().build().unwrap(), vec![4, 6]),
        ("sigmoid", ModelBuilder::new(&[6]).dense(5, &mut rng).sigmoid().build().unwrap(), vec![4, 6]),
        ("tanh", ModelBuilder::new(&[6]).dense(5, &mut rng).tanh().build().unwrap(), vec![4, 6]),
        (
            "power_norm",
            ModelBuilder::new(&[6]).dense(4, &mut rng).power_norm().build().unwrap(),
            vec![3, 6],
        ),
        (
            "deep",
            ModelBuilder::new(&[4, 4, 1])
                .reshape(&[1, 4, 4])
                .conv2d(2, 3, 2, 1, &mut rng)
                .tanh()
                .flatten()
                .dense(5, &mut rng)
                .sigmoid()
                .dense(3, &mut rng)
                .power_norm()
                .build()
                .unwrap(),
            vec![2, 4, 4, 1],
        ),
    ];
    cases
        .into_iter()
        .map(|(name, m, shape)| {
            let x = random_tensor(&shape, -1.0, 1.0, &mut rng);
            (name, m, x)
        })
        .collect()
}

/// Receiver-side loss as a function of the channel output `y`: decoder,
/// pragmatic model and the weighted semantic distortion.
fn semantic_value(decoder: &Model, phi: &Model, y: &Tensor, k: &Tensor, z: &Targets, cfg: &LossConfig) -> f64 {
    let k_hat = decoder.infer(y).unwrap();
    let z_hat = phi.infer(&k_hat).unwrap();
    distortion_components(k, &k_hat, Some(z), Some(&z_hat), cfg.d_pr)
        .unwrap()
        .weighted(cfg)
        .unwrap()
        .value
}

/// Decoder gradients of the full semantic loss for one task family.
pub fn check_semantic(task: TaskKind, seed: u64) -> Vec<Mismatch> {
    let mut rng = seeded_rng(seed);
    let (phi, z) = match task {
        TaskKind::Discrete => (
            ModelBuilder::new(&[4, 4, 1]).flatten().dense(3, &mut rng).build().unwrap(),
            Targets::Classes(vec![0, 2, 1]),
        ),
        TaskKind::Continuous => {
            let phi = ModelBuilder::new(&[4, 4, 1])
                .flatten()
                .dense(16, &mut rng)
                .sigmoid()
                .reshape(&[4, 4, 1])
                .build()
                .unwrap();
            let masks = Tensor::new(
                vec![3, 4, 4, 1],
                (0..48).map(|i| if (i * 7) % 5 < 2 { 1.0 } else { 0.0 }).collect(),
            )
            .unwrap();
            (phi, Targets::Masks(masks))
        }
    };
    let mut decoder = ModelBuilder::new(&[5]).dense(16, &mut rng).reshape(&[4, 4, 1]).build().unwrap();
    let y = random_tensor(&[3, 5], -1.5, 1.5, &mut rng);
    let k = random_tensor(&[3, 4, 4, 1], 0.0, 1.0, &mut rng);
    let cfg = LossConfig::new(0.35, 1.7, task).unwrap();

    let mut phi_live = phi.clone();
    decoder.zero_grad();
    let k_hat = decoder.forward(&y).unwrap();
    let z_hat = phi_live.apply(&k_hat).unwrap();
    let sl = distortion_components(&k, &k_hat, Some(&z), Some(&z_hat), cfg.d_pr)
        .unwrap()
        .weighted(&cfg)
        .unwrap();
    let grad = sl.grad_k_hat.add(&phi_live.pull_back(sl.grad_z_hat.as_ref().unwrap()).unwrap()).unwrap();
    let gy = decoder.backward(&grad).unwrap();
    let analytic = (decoder.grad_vector(), gy);
    decoder.zero_grad();
    decoder.clear_tape();
    probe(&decoder, &y, analytic, |d, y| semantic_value(d, &phi, y, &k, &z, &cfg), seed + 1)
}
