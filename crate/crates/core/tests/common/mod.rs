//! Shared scenario builders for the integration tests and the acceptance
//! report.

#![allow(dead_code)]

pub mod fd;
pub mod privacy;

use rand::Rng as _;
use semcom::channel::{AwgnChannel, ChannelConfig};
use semcom::data_adaptation::{compare_adaptation, DaComparison, DaEvalConfig};
use semcom::datasets_metrics::{synth_dataset, Dataset, Labels, SynthKind, Targets};
use semcom::semantic_coding::{
    distortion_components, train_pragmatic, CoderArch, CoderPair, LossConfig, PragmaticTrainConfig, TaskKind,
};
use semcom::split_protocol::{
    run_training, Control, ControlOp, DataBatch, EpochMetrics, FeedbackMessage, MetricsReport, ProtocolMessage,
    Receiver, SessionConfig, Transmitter, TransportKind, WirePrecision,
};
use semcom::tensor_nn::{AdamConfig, Model, ModelBuilder, Tensor};
use semcom::{seeded_rng, Rng};

pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn wire(msg: ProtocolMessage) -> ProtocolMessage {
    ProtocolMessage::decode(&msg.encode(WirePrecision::F64)).unwrap()
}

/// One random split-learning setup compared against co-located backprop.
#[derive(Debug)]
pub struct SplitCase {
    pub description: String,
    /// Largest absolute difference over all encoder and decoder gradients.
    pub max_diff: f64,
    pub param_count: usize,
    /// Sum of absolute oracle gradients, to rule out a vacuous match.
    pub grad_mass: f64,
}

/// Builds a random coder/task architecture, runs one batch through the
/// real endpoints (messages serialised on the f64 wire) and compares the
/// resulting parameter gradients with a single-process backward pass.
pub fn split_case(seed: u64) -> SplitCase {
    let mut rng = seeded_rng(seed);
    let side = rng.random_range(3..=6usize);
    let shape = [side, side, 1];
    let n_k = side * side;
    let n_x = rng.random_range(1..=n_k / 2);
    let arch = if rng.random_bool(0.5) {
        CoderArch::Dense
    } else {
        CoderArch::Conv {
            channels: rng.random_range(1..=3),
            kernel: rng.random_range(1..=3),
        }
    };
    let task = if rng.random_bool(0.5) { TaskKind::Discrete } else { TaskKind::Continuous };
    let batch = rng.random_range(1..=6usize);
    let snr = [f64::INFINITY, 10.0, 3.0][rng.random_range(0..3)];
    let lambda = rng.random_range(0.05..0.95);
    let alpha = rng.random_range(0.5..3.0);
    let hidden = rng.random_range(0..=4usize);
    let classes = rng.random_range(2..=4usize);

    let pair = CoderPair::init(&shape, n_x, arch, task, &mut rng).unwrap();
    let mut b = ModelBuilder::new(&shape).flatten();
    if hidden > 0 {
        b = b.dense(hidden, &mut rng).tanh();
    }
    let phi = match task {
        TaskKind::Discrete => b.dense(classes, &mut rng).build().unwrap(),
        TaskKind::Continuous => b.dense(n_k, &mut rng).sigmoid().reshape(&shape).build().unwrap(),
    };
    let k = random_tensor(&[batch, side, side, 1], 0.0, 1.0, &mut rng);
    let (labels, targets) = match task {
        TaskKind::Discrete => {
            let c: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
            (Labels::Classes(c.clone()), Targets::Classes(c))
        }
        TaskKind::Continuous => {
            let m = random_tensor(&[batch, side, side, 1], 0.0, 1.0, &mut rng).map(f64::round);
            (Labels::Masks(m.unstack()), Targets::Masks(m))
        }
    };
    let loss = LossConfig::new(lambda, alpha, task).unwrap();
    let channel = ChannelConfig::new(snr, n_x, n_k, seed ^ 0x55).unwrap();

    // Split path through the real endpoints.
    let mut tx = Transmitter::new(
        pair.encoder.clone(),
        channel,
        AdamConfig::default(),
        k.unstack(),
        Vec::new(),
        WirePrecision::F64,
    )
    .unwrap();
    let data = Dataset::new("case", k.unstack(), labels).unwrap();
    let mut rx = Receiver::new(
        pair.decoder.clone(),
        Some(phi.clone()),
        loss,
        false,
        AdamConfig::default(),
        data,
        None,
    )
    .unwrap();
    let ProtocolMessage::DataBatch(msg) = wire(ProtocolMessage::DataBatch(tx.send_batch(0, 0, &k).unwrap())) else {
        unreachable!()
    };
    let (fb, _) = rx.feedback_for(&msg, &k, Some(&targets)).unwrap();
    let ProtocolMessage::Feedback(fb) = wire(ProtocolMessage::Feedback(fb)) else {
        unreachable!()
    };
    tx.apply_feedback(&fb).unwrap();
    let split_enc = tx.encoder().grad_vector();
    let split_dec = rx.decoder().grad_vector();

    // Monolithic oracle.
    let (mono_enc, mono_dec) = if channel.is_noiseless() {
        let mut layers = pair.encoder.layers().to_vec();
        layers.extend(pair.decoder.layers().iter().cloned());
        let mut whole = Model::new(shape.to_vec(), layers).unwrap();
        let mut phi = phi.clone();
        let k_hat = whole.forward(&k).unwrap();
        let z_hat = phi.forward(&k_hat).unwrap();
        let sl = distortion_components(&k, &k_hat, Some(&targets), Some(&z_hat), loss.d_pr)
            .unwrap()
            .weighted(&loss)
            .unwrap();
        let g = sl.grad_k_hat.add(&phi.backward(sl.grad_z_hat.as_ref().unwrap()).unwrap()).unwrap();
        whole.backward(&g).unwrap();
        let all = whole.grad_vector();
        let n_enc = pair.encoder.param_count();
        (all[..n_enc].to_vec(), all[n_enc..].to_vec())
    } else {
        let (mut enc, mut dec, mut phi) = (pair.encoder.clone(), pair.decoder.clone(), phi.clone());
        let mut ch = AwgnChannel::new(channel).unwrap();
        let x = enc.forward(&k).unwrap();
        let y = ch.transmit(&x).unwrap();
        assert_eq!(y, msg.y, "oracle channel draws differ");
        let k_hat = dec.forward(&y).unwrap();
        let z_hat = phi.forward(&k_hat).unwrap();
        let sl = distortion_components(&k, &k_hat, Some(&targets), Some(&z_hat), loss.d_pr)
            .unwrap()
            .weighted(&loss)
            .unwrap();
        let g = sl.grad_k_hat.add(&phi.backward(sl.grad_z_hat.as_ref().unwrap()).unwrap()).unwrap();
        let gy = dec.backward(&g).unwrap();
        enc.backward(&gy).unwrap();
        (enc.grad_vector(), dec.grad_vector())
    };

    let max_diff = split_enc
        .iter()
        .zip(&mono_enc)
        .chain(split_dec.iter().zip(&mono_dec))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert_eq!(split_enc.len(), mono_enc.len());
    assert_eq!(split_dec.len(), mono_dec.len());
    SplitCase {
        description: format!(
            "{side}x{side} n_x={n_x} {arch:?} {task:?} B={batch} snr={snr} hidden={hidden} lambda={lambda:.2}"
        ),
        max_diff,
        param_count: split_enc.len() + split_dec.len(),
        grad_mass: mono_enc.iter().chain(&mono_dec).map(|g| g.abs()).sum(),
    }
}

/// Sample variance of `AWGN(0)` output over `draws` symbols.
pub fn empirical_noise_variance(snr_db: f64, draws: usize, seed: u64) -> f64 {
    let cfg = ChannelConfig::new(snr_db, draws, draws, seed).unwrap();
    let mut ch = AwgnChannel::new(cfg).unwrap();
    let y = ch.transmit(&Tensor::zeros(&[1, draws])).unwrap();
    let mean = y.mean();
    y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64
}

/// Digits task used by the end-to-end checks.
pub struct DigitsTask {
    pub train: Dataset,
    pub test: Dataset,
    pub phi: Model,
    pub phi_test_accuracy: f64,
}

pub fn digits_task(seed: u64) -> DigitsTask {
    let d = synth_dataset(SynthKind::TwoClassDigits8x8, 600, seed).unwrap();
    let (train, test) = d.split(2.0 / 3.0, seed + 1).unwrap();
    let phi = train_pragmatic(&train, Some(&test), &PragmaticTrainConfig::default()).unwrap();
    DigitsTask {
        train,
        test,
        phi: phi.model,
        phi_test_accuracy: phi.test_metric.unwrap(),
    }
}

/// Session on the digits task at CR = 0.25 (16 of 64 symbols).
pub fn digits_session(snr_db: f64, lambda: Option<f64>, max_epochs: usize, seed: u64) -> SessionConfig {
    let mut cfg = SessionConfig::new(ChannelConfig::new(snr_db, 16, 64, seed).unwrap());
    cfg.lambda = lambda;
    cfg.seed = seed;
    cfg.stop.max_epochs = max_epochs;
    cfg
}

pub fn train_digits(task: &DigitsTask, cfg: &SessionConfig, transport: &TransportKind) -> (Vec<EpochMetrics>, Vec<u8>, Vec<u8>) {
    let pair = CoderPair::init(&[8, 8, 1], 16, CoderArch::Dense, TaskKind::Discrete, &mut seeded_rng(cfg.seed)).unwrap();
    let out = run_training(pair, Some(task.phi.clone()), &task.train, Some(&task.test), cfg, transport).unwrap();
    (
        out.metrics,
        semcom::tensor_nn::encode_model(&out.pair.encoder),
        semcom::tensor_nn::encode_model(&out.pair.decoder),
    )
}

/// Shifted-blobs setup used for the adaptation ordering: library at offset
/// 0, observed at offset 0.3.
pub fn da_scenario(seed: u64) -> DaComparison {
    let lib = synth_dataset(SynthKind::ShiftedBlobs { offset: 0.0 }, 400, seed).unwrap();
    let obs = synth_dataset(SynthKind::ShiftedBlobs { offset: 0.3 }, 600, seed + 1).unwrap();
    let (obs_train, obs_test) = obs.split(2.0 / 3.0, seed + 2).unwrap();
    let mut session = SessionConfig::new(ChannelConfig::new(10.0, 16, 64, seed + 3).unwrap());
    session.seed = seed;
    session.stop.max_epochs = 60;
    let mut cfg = DaEvalConfig::new(session);
    cfg.cgan.seed = seed;
    cfg.pragmatic.seed = seed;
    compare_adaptation(&lib, &obs_train, &obs_test, &cfg).unwrap()
}

fn random_shape(rng: &mut Rng) -> Vec<usize> {
    (0..rng.random_range(1..=3)).map(|_| rng.random_range(1..5)).collect()
}

fn random_values(shape: &[usize], rng: &mut Rng) -> Tensor {
    let scale = [1.0, 1e3, 1e-6][rng.random_range(0..3)];
    random_tensor(shape, -scale, scale, rng)
}

/// A random message of any kind with finite contents.
pub fn random_message(rng: &mut Rng) -> ProtocolMessage {
    match rng.random_range(0..5) {
        0 => ProtocolMessage::DataBatch(DataBatch {
            epoch: rng.random(),
            batch_id: rng.random(),
            y: random_values(&random_shape(rng), rng),
            eval: rng.random(),
        }),
        1 => {
            let shape = random_shape(rng);
            ProtocolMessage::Feedback(FeedbackMessage {
                epoch: rng.random(),
                batch_id: rng.random(),
                grad_y: random_values(&shape, rng),
                y: random_values(&shape, rng),
            })
        }
        2 => ProtocolMessage::EncoderParams((0..rng.random_range(0..64)).map(|_| rng.random()).collect()),
        3 => ProtocolMessage::Control(Control {
            op: [ControlOp::Start, ControlOp::StopEpoch, ControlOp::Shutdown][rng.random_range(0..3)],
            epoch: rng.random(),
            shuffle_seed: rng.random(),
            batch_size: rng.random(),
            eval: rng.random(),
        }),
        _ => {
            let metric = |rng: &mut Rng| rng.random_bool(0.5).then(|| rng.random_range(-100.0..100.0));
            ProtocolMessage::MetricsReport(MetricsReport {
                epoch: rng.random(),
                esd: rng.random(),
                accuracy: metric(rng),
                psnr: metric(rng),
                iou: metric(rng),
            })
        }
    }
}
