//! Central finite differences against backprop for every layer kind and
//! both semantic-loss families.

mod common;

use common::fd::{self, PROBES};
use semcom::semantic_coding::TaskKind;
use semcom::tensor_nn::{Layer, ModelBuilder, Tensor};

#[test]
fn every_layer_kind_matches_finite_differences() {
    let mut seen = std::collections::BTreeSet::new();
    for (i, (name, model, x)) in fd::layer_cases(11).into_iter().enumerate() {
        for l in model.layers() {
            seen.insert(l.kind() as u8);
        }
        let bad = fd::check_model(model, x, 100 + i as u64);
        assert!(bad.is_empty(), "{name}: {} of {PROBES} probes off: {bad:?}", bad.len());
    }
    for kind in fd::ALL_KINDS {
        assert!(seen.contains(&(kind as u8)), "{kind:?} not covered");
    }
}

#[test]
fn cross_entropy_family_matches_finite_differences() {
    let bad = fd::check_semantic(TaskKind::Discrete, 21);
    assert!(bad.is_empty(), "{bad:?}");
}

#[test]
fn mask_mse_family_matches_finite_differences() {
    let bad = fd::check_semantic(TaskKind::Continuous, 31);
    assert!(bad.is_empty(), "{bad:?}");
}

#[test]
fn other_seeds_match_too() {
    for seed in [1, 2, 3] {
        for (name, model, x) in fd::layer_cases(seed) {
            let bad = fd::check_model(model, x, seed * 31);
            assert!(bad.is_empty(), "{name} (seed {seed}): {bad:?}");
        }
    }
}

#[test]
fn identity_dense_is_exact() {
    let m = ModelBuilder::new(&[3]).layer(Layer::dense_identity(3)).build().unwrap();
    let x = Tensor::new(vec![1, 3], vec![0.1, -2.0, 5.0]).unwrap();
    assert_eq!(m.infer(&x).unwrap(), x);
}
