//! The transmitter endpoint must not be able to see the receiver's task:
//! its source may not name the task model, labels or the semantic loss.

mod common;

use common::privacy::{forbidden_in, violations, words, TRANSMITTER_SRC};

#[test]
fn transmitter_source_names_no_task_symbols() {
    let (hits, _) = violations(TRANSMITTER_SRC);
    assert!(hits.is_empty(), "transmitter references task symbols: {hits:?}");
}

#[test]
fn transmitter_imports_no_receiver_modules() {
    let (_, imports) = violations(TRANSMITTER_SRC);
    assert!(imports.is_empty(), "{imports:?}");
}

#[test]
fn checker_catches_a_planted_symbol() {
    let planted = format!("{TRANSMITTER_SRC}\nfn leak(phi: &Model) {{}}");
    assert!(words(&planted).iter().any(|w| forbidden_in(w).is_some()));
    assert_eq!(violations(&planted).0.len(), 1);
    let import = format!("use crate::semantic_coding::LossConfig;\n{TRANSMITTER_SRC}");
    assert_eq!(violations(&import).1.len(), 1);
    assert_eq!(forbidden_in("train_labels"), Some("label"));
    assert_eq!(forbidden_in("previous"), None);
}
