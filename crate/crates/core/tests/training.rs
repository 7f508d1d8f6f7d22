//! End-to-end split training on the digits task.

mod common;

use semcom::split_protocol::{EpochMetrics, TransportKind};
use std::time::{Duration, Instant};

const MIN_ACCURACY: f64 = 0.9;
const MIN_PSNR_DB: f64 = 10.0;
const MAX_EPOCHS: usize = 200;

fn last(m: &[EpochMetrics]) -> (f64, f64) {
    let l = m.last().expect("no epochs ran");
    (l.test_accuracy.unwrap(), l.test_psnr.unwrap())
}

#[test]
fn default_lambda_reaches_targets() {
    let start = Instant::now();
    let task = common::digits_task(1);
    let cfg = common::digits_session(10.0, None, MAX_EPOCHS, 1);
    let (metrics, _, _) = common::train_digits(&task, &cfg, &TransportKind::InProcess);
    let (acc, psnr) = last(&metrics);
    assert!(metrics.len() <= MAX_EPOCHS);
    assert!(acc >= MIN_ACCURACY, "accuracy {acc}");
    assert!(psnr >= MIN_PSNR_DB, "psnr {psnr}");
    assert!(start.elapsed() < Duration::from_secs(120));
}

#[test]
fn lambda_trades_task_for_fidelity() {
    let task = common::digits_task(1);
    let run = |lambda| {
        let cfg = common::digits_session(10.0, Some(lambda), MAX_EPOCHS, 2);
        last(&common::train_digits(&task, &cfg, &TransportKind::InProcess).0)
    };
    let (acc_task, psnr_task) = run(0.05);
    let (acc_fid, psnr_fid) = run(0.95);
    assert!(acc_task >= acc_fid, "accuracy {acc_task} < {acc_fid}");
    assert!(psnr_task <= psnr_fid, "psnr {psnr_task} > {psnr_fid}");
}

#[test]
fn training_is_deterministic() {
    let task = common::digits_task(3);
    let cfg = common::digits_session(3.0, None, 15, 4);
    let a = common::train_digits(&task, &cfg, &TransportKind::InProcess);
    let b = common::train_digits(&task, &cfg, &TransportKind::InProcess);
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
    let bits = |m: &[EpochMetrics]| -> Vec<u64> { m.iter().map(|e| e.train_esd.to_bits()).collect() };
    assert_eq!(bits(&a.0), bits(&b.0));
}

#[test]
fn different_seeds_differ() {
    let task = common::digits_task(3);
    let a = common::train_digits(&task, &common::digits_session(3.0, None, 3, 4), &TransportKind::InProcess);
    let b = common::train_digits(&task, &common::digits_session(3.0, None, 3, 5), &TransportKind::InProcess);
    assert_ne!(a.1, b.1);
}
