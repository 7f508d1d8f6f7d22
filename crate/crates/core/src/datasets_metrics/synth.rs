//! Small deterministic stand-ins for digit, domain-shift and segmentation
//! corpora.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Labels};
use crate::tensor_nn::Tensor;
use crate::{seeded_rng, Error, Result};

/// Which synthetic corpus to generate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthKind {
    /// 8x8 noisy "0" (ring) and "1" (bar) glyphs, labels {0, 1}.
    TwoClassDigits8x8,
    /// 8x8 Gaussian bumps whose peak brightness encodes the class
    /// (dim = 0, bright = 1). `offset` is added to every pixel, so
    /// `offset = 0` is the library domain and a positive offset an observed
    /// domain.
    ShiftedBlobs { offset: f64 },
    /// 8x8 bright rectangles on a darker background with their binary masks.
    MaskShapes,
}

pub const SYNTH_SIDE: usize = 8;

const ZERO_GLYPH: [&str; 8] = [
    "..####..",
    ".#....#.",
    ".#....#.",
    ".#....#.",
    ".#....#.",
    ".#....#.",
    "..####..",
    "........",
];

const ONE_GLYPH: [&str; 8] = [
    "...##...",
    "..###...",
    "...##...",
    "...##...",
    "...##...",
    "...##...",
    "..####..",
    "........",
];

/// Generates `n` samples of `kind`; identical seeds give identical datasets.
pub fn synth_dataset(kind: SynthKind, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("synthetic dataset needs n >= 1"));
    }
    let mut rng = seeded_rng(seed);
    match kind {
        SynthKind::TwoClassDigits8x8 => digits(n, &mut rng),
        SynthKind::ShiftedBlobs { offset } => {
            if !(0.0..1.0).contains(&offset) {
                return Err(Error::invalid(format!("blob offset {offset} outside [0,1)")));
            }
            blobs(n, offset, &mut rng)
        }
        SynthKind::MaskShapes => shapes(n, &mut rng),
    }
}

fn noise(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("valid sigma")
}

fn digits(n: usize, rng: &mut impl Rng) -> Result<Dataset> {
    let jitter = noise(0.1);
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.random_range(0..2usize);
        let glyph = if label == 0 { &ZERO_GLYPH } else { &ONE_GLYPH };
        let dy = rng.random_range(-1..=1i64) as isize;
        let dx = rng.random_range(-1..=1i64) as isize;
        let ink = rng.random_range(0.7..1.0);
        let mut img = Tensor::zeros(&[SYNTH_SIDE, SYNTH_SIDE, 1]);
        for y in 0..SYNTH_SIDE {
            for x in 0..SYNTH_SIDE {
                let sy = y as isize - dy;
                let sx = x as isize - dx;
                let on = (0..SYNTH_SIDE as isize).contains(&sy)
                    && (0..SYNTH_SIDE as isize).contains(&sx)
                    && glyph[sy as usize].as_bytes()[sx as usize] == b'#';
                let v = if on { ink } else { 0.0 } + jitter.sample(rng);
                img.data_mut()[y * SYNTH_SIDE + x] = v.clamp(0.0, 1.0);
            }
        }
        images.push(img);
        labels.push(label);
    }
    Dataset::new("two_class_digits_8x8", images, Labels::Classes(labels))
}

fn blobs(n: usize, offset: f64, rng: &mut impl Rng) -> Result<Dataset> {
    let jitter = noise(0.02);
    let sigma = 1.5;
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.random_range(0..2usize);
        let amp = if label == 0 { 0.3 } else { 0.7 } + rng.random_range(-0.05..0.05);
        let cy = rng.random_range(2.5..4.5);
        let cx = rng.random_range(2.5..4.5);
        let mut img = Tensor::zeros(&[SYNTH_SIDE, SYNTH_SIDE, 1]);
        for y in 0..SYNTH_SIDE {
            for x in 0..SYNTH_SIDE {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                let v = 0.05 + amp * (-d2 / (2.0 * sigma * sigma)).exp() + jitter.sample(rng) + offset;
                img.data_mut()[y * SYNTH_SIDE + x] = v.clamp(0.0, 1.0);
            }
        }
        images.push(img);
        labels.push(label);
    }
    let name = if offset == 0.0 {
        "shifted_blobs_library".to_string()
    } else {
        format!("shifted_blobs_offset_{offset}")
    };
    Dataset::new(name, images, Labels::Classes(labels))
}

fn shapes(n: usize, rng: &mut impl Rng) -> Result<Dataset> {
    let jitter = noise(0.05);
    let mut images = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    for _ in 0..n {
        let h = rng.random_range(2..=5usize);
        let w = rng.random_range(2..=5usize);
        let top = rng.random_range(0..=SYNTH_SIDE - h);
        let left = rng.random_range(0..=SYNTH_SIDE - w);
        let mut img = Tensor::zeros(&[SYNTH_SIDE, SYNTH_SIDE, 1]);
        let mut mask = Tensor::zeros(&[SYNTH_SIDE, SYNTH_SIDE, 1]);
        for y in 0..SYNTH_SIDE {
            for x in 0..SYNTH_SIDE {
                let inside = (top..top + h).contains(&y) && (left..left + w).contains(&x);
                let base = if inside { 0.8 } else { 0.2 };
                img.data_mut()[y * SYNTH_SIDE + x] = (base + jitter.sample(rng)).clamp(0.0, 1.0);
                mask.data_mut()[y * SYNTH_SIDE + x] = if inside { 1.0 } else { 0.0 };
            }
        }
        images.push(img);
        masks.push(mask);
    }
    Dataset::new("mask_shapes", images, Labels::Masks(masks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        for kind in [
            SynthKind::TwoClassDigits8x8,
            SynthKind::ShiftedBlobs { offset: 0.2 },
            SynthKind::MaskShapes,
        ] {
            assert_eq!(synth_dataset(kind, 10, 4).unwrap(), synth_dataset(kind, 10, 4).unwrap());
            assert_ne!(synth_dataset(kind, 10, 4).unwrap(), synth_dataset(kind, 10, 5).unwrap());
        }
    }

    #[test]
    fn digit_labels_are_binary() {
        let d = synth_dataset(SynthKind::TwoClassDigits8x8, 200, 1).unwrap();
        let labels = d.class_labels().unwrap();
        assert!(labels.iter().all(|&l| l < 2));
        assert!(labels.contains(&0) && labels.contains(&1));
    }

    #[test]
    fn masks_are_binary_rectangles() {
        let d = synth_dataset(SynthKind::MaskShapes, 20, 2).unwrap();
        let Labels::Masks(masks) = d.labels() else {
            panic!("expected masks")
        };
        for (img, m) in d.images().iter().zip(masks) {
            assert!(m.data().iter().all(|&v| v == 0.0 || v == 1.0));
            let on: Vec<usize> = (0..64).filter(|&i| m.data()[i] == 1.0).collect();
            let rows: Vec<usize> = on.iter().map(|i| i / 8).collect();
            let cols: Vec<usize> = on.iter().map(|i| i % 8).collect();
            let (r0, r1) = (*rows.iter().min().unwrap(), *rows.iter().max().unwrap());
            let (c0, c1) = (*cols.iter().min().unwrap(), *cols.iter().max().unwrap());
            assert_eq!(on.len(), (r1 - r0 + 1) * (c1 - c0 + 1));
            // inside pixels are brighter on average
            let inside: f64 = on.iter().map(|&i| img.data()[i]).sum::<f64>() / on.len() as f64;
            assert!(inside > 0.5);
        }
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(synth_dataset(SynthKind::MaskShapes, 0, 0).is_err());
    }
}
