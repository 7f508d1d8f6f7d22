use std::path::Path;

use semcom::datasets_metrics::{load_idx, synth_dataset, Dataset, SynthKind};

use crate::config::{DataSection, Source, SynthName};
use crate::error::{CliError, CliResult};

/// Train and held-out test split of one configured dataset.
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

fn idx(images: &Path, labels: Option<&Path>) -> CliResult<Dataset> {
    load_idx(images, labels).map_err(|e| CliError::config(format!("{}: {e}", images.display())))
}

pub fn load(d: &DataSection) -> CliResult<Splits> {
    let (all, test) = match d.source {
        Source::Synth => {
            let kind = match d.synth {
                SynthName::TwoClassDigits8x8 => SynthKind::TwoClassDigits8x8,
                SynthName::ShiftedBlobs => SynthKind::ShiftedBlobs { offset: d.offset },
                SynthName::MaskShapes => SynthKind::MaskShapes,
            };
            (synth_dataset(kind, d.n, d.seed).map_err(CliError::config)?, None)
        }
        Source::Idx => {
            let images = d.images.as_deref().ok_or_else(|| CliError::config("IDX dataset needs `images`"))?;
            let all = idx(images, d.labels.as_deref())?;
            let test = match &d.test_images {
                Some(t) => Some(idx(t, d.test_labels.as_deref())?),
                None => None,
            };
            (all, test)
        }
    };
    let splits = match test {
        Some(test) => Splits { train: all, test },
        None => {
            let (train, test) = all.split(d.train_fraction, d.split_seed)?;
            Splits { train, test }
        }
    };
    if splits.train.is_empty() || splits.test.is_empty() {
        return Err(CliError::config(format!(
            "dataset split left {} training and {} test items",
            splits.train.len(),
            splits.test.len()
        )));
    }
    log::info!(
        "{}: {} train / {} test images of shape {:?}",
        splits.train.name,
        splits.train.len(),
        splits.test.len(),
        splits.train.image_shape()
    );
    Ok(splits)
}
