//! Cycle-GAN adaptation on shifted blobs: objective bookkeeping, step
//! signs, convergence of the learned map and the three-way task ordering.

mod common;

use proptest::prelude::*;
use semcom::data_adaptation::{
    adapt, cgan_objective, cycle_loss, discriminator_accuracy, gan_loss, train_cgan, CganBundle, CganConfig,
    CganTrainer,
};
use semcom::datasets_metrics::{epoch_batches, synth_dataset, Dataset, SynthKind};
use semcom::tensor_nn::Tensor;
use std::time::{Duration, Instant};

const OFFSET: f64 = 0.3;

fn domains(seed: u64) -> (Dataset, Dataset) {
    (
        synth_dataset(SynthKind::ShiftedBlobs { offset: 0.0 }, 300, seed).unwrap(),
        synth_dataset(SynthKind::ShiftedBlobs { offset: OFFSET }, 300, seed + 1).unwrap(),
    )
}

/// Mean absolute distance of `G_K(S)` from the ideal inverse shift.
fn map_error(bundle: &CganBundle, obs: &Dataset) -> f64 {
    let s = obs.all_images().unwrap();
    let target = s.map(|v| v - OFFSET);
    let out = adapt(&bundle.g_k, &s).unwrap();
    out.data().iter().zip(target.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / out.len() as f64
}

#[test]
fn learned_map_approaches_the_inverse_shift() {
    let (lib, obs) = domains(10);
    let cfg = CganConfig::default();
    let bundle = CganBundle::init(&lib.image_shape(), &obs.image_shape(), &cfg).unwrap();
    let before = map_error(&bundle, &obs);
    let out = train_cgan(bundle, &lib.without_labels(), &obs.without_labels(), &cfg).unwrap();
    let after = map_error(&out.bundle, &obs);
    assert!(after < 0.5 * before, "map error {before} -> {after}");

    let fake = adapt(&out.bundle.g_k, &obs.all_images().unwrap()).unwrap();
    let acc = discriminator_accuracy(&out.bundle.d_k, &lib.all_images().unwrap(), &fake).unwrap();
    assert!((acc - 0.5).abs() <= 0.15, "D_K accuracy {acc}");
    assert_eq!(out.history.len(), cfg.epochs);
}

#[test]
fn generator_steps_lower_the_objective() {
    let (lib, obs) = domains(20);
    let cfg = CganConfig::default();
    let bundle = CganBundle::init(&lib.image_shape(), &obs.image_shape(), &cfg).unwrap();
    let mut trainer = CganTrainer::new(bundle, cfg).unwrap();
    let (mut steps, mut failures) = (0usize, 0usize);
    for epoch in 0..30u64 {
        let lb = epoch_batches(lib.len(), cfg.batch_size, 2 * epoch);
        let ob = epoch_batches(obs.len(), cfg.batch_size, 2 * epoch + 1);
        for (li, oi) in lb.iter().zip(&ob) {
            let k = lib.batch(li).unwrap();
            let s = obs.batch(oi).unwrap();
            let step = trainer.generator_step(&k, &s).unwrap();
            let after = cgan_objective(&trainer.bundle, &k, &s, cfg.cycle_weight).unwrap();
            steps += 1;
            if after.total >= step.before.total {
                failures += 1;
            }
            trainer.discriminator_step(&k, &s, &step.fake_k, &step.fake_s).unwrap();
        }
    }
    let rate = failures as f64 / steps as f64;
    assert!(rate < 0.2, "{failures} of {steps} generator steps raised the objective");
}

#[test]
fn discriminator_steps_raise_the_adversarial_terms() {
    let (lib, obs) = domains(30);
    let cfg = CganConfig::default();
    let bundle = CganBundle::init(&lib.image_shape(), &obs.image_shape(), &cfg).unwrap();
    let mut trainer = CganTrainer::new(bundle, cfg).unwrap();
    let idx: Vec<usize> = (0..32).collect();
    let (k, s) = (lib.batch(&idx).unwrap(), obs.batch(&idx).unwrap());
    let step = trainer.generator_step(&k, &s).unwrap();
    let b = &trainer.bundle;
    let before = gan_loss(&b.g_k, &b.d_k, &k, &s).unwrap();
    trainer.discriminator_step(&k, &s, &step.fake_k, &step.fake_s).unwrap();
    let b = &trainer.bundle;
    let after = gan_loss(&b.g_k, &b.d_k, &k, &s).unwrap();
    assert!(after > before, "D_K step moved {before} -> {after}");
}

#[test]
fn training_and_adaptation_are_deterministic() {
    let (lib, obs) = domains(40);
    let cfg = CganConfig {
        epochs: 5,
        ..CganConfig::default()
    };
    let run = || {
        let b = CganBundle::init(&lib.image_shape(), &obs.image_shape(), &cfg).unwrap();
        train_cgan(b, &lib, &obs, &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.bundle, b.bundle);
    assert_eq!(a.history, b.history);
    let s = obs.all_images().unwrap();
    assert_eq!(adapt(&a.bundle.g_k, &s).unwrap(), adapt(&a.bundle.g_k, &s).unwrap());
}

#[test]
fn adaptation_ordering_on_shifted_blobs() {
    let start = Instant::now();
    let r = common::da_scenario(0);
    assert!(r.retrained >= r.da, "retrained {} < DA {}", r.retrained, r.da);
    assert!(r.da >= r.no_da + 0.1, "DA {} vs no DA {}", r.da, r.no_da);
    assert!(r.cgan_history.len() <= 300);
    assert!(start.elapsed() < Duration::from_secs(180));
}

fn blob_batch(seed: u64, offset: f64) -> Tensor {
    let d = synth_dataset(SynthKind::ShiftedBlobs { offset }, 6, seed).unwrap();
    d.all_images().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn objective_is_the_sum_of_its_terms(seed in 0u64..10_000, w in 0.0f64..20.0, init in 0u64..1000) {
        let cfg = CganConfig { seed: init, identity_init: false, ..CganConfig::default() };
        let b = CganBundle::init(&[8, 8, 1], &[8, 8, 1], &cfg).unwrap();
        let k = blob_batch(seed, 0.0);
        let s = blob_batch(seed + 1, 0.4);
        let l = cgan_objective(&b, &k, &s, w).unwrap();
        let direct = gan_loss(&b.g_s, &b.d_s, &s, &k).unwrap()
            + gan_loss(&b.g_k, &b.d_k, &k, &s).unwrap()
            + w * cycle_loss(&b.g_k, &b.g_s, &k, &s).unwrap();
        prop_assert!((l.total - (l.gan_s + l.gan_k + w * l.cycle)).abs() <= 1e-12);
        prop_assert!((l.total - direct).abs() <= 1e-12);
        prop_assert!(l.cycle >= 0.0);
        prop_assert!(l.gan_s <= 0.0 && l.gan_k <= 0.0);
    }
}
