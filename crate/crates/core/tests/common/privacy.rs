//! Source-level check that the transmitter cannot see the receiver's task.

pub const TRANSMITTER_SRC: &str = include_str!("../../src/split_protocol/transmitter.rs");

/// Names that would indicate task knowledge. Entries with an underscore
/// match anywhere in a word; the others must start one of its
/// `_`-separated segments (so `labels` hits but `previous` does not hit
/// `iou`). Matching is case-insensitive and covers comments too.
const FORBIDDEN: &[&str] = &[
    "phi",
    "pragmatic",
    "label",
    "target",
    "semantic",
    "lossconfig",
    "esd",
    "cross_entropy",
    "softmax",
    "z_hat",
    "accuracy",
    "iou",
    "distortion",
];

pub fn forbidden_in(word: &str) -> Option<&'static str> {
    FORBIDDEN.iter().copied().find(|f| {
        if f.contains('_') {
            word.contains(f)
        } else {
            word.split('_').any(|seg| seg.starts_with(f))
        }
    })
}

pub fn words(src: &str) -> Vec<String> {
    src.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Task symbols named by the transmitter source and task-side modules it
/// imports; both empty for a compliant endpoint.
pub fn violations(src: &str) -> (Vec<(String, &'static str)>, Vec<String>) {
    let hits = words(src)
        .into_iter()
        .filter_map(|w| forbidden_in(&w).map(|f| (w, f)))
        .collect();
    let imports = src
        .lines()
        .filter(|l| l.trim_start().starts_with("use "))
        .filter(|l| ["semantic_coding", "receiver", "data_adaptation"].iter().any(|m| l.contains(m)))
        .map(str::to_string)
        .collect();
    (hits, imports)
}
