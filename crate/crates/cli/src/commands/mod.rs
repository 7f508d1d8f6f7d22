//! One module per subcommand family, plus the helpers they share.

pub mod adapt;
pub mod eval;
pub mod pad;
pub mod pretrain;
pub mod train;

use std::fs;
use std::path::Path;

use semcom::datasets_metrics::{Dataset, Labels};
use semcom::semantic_coding::{train_pragmatic, CoderPair, TaskKind};
use semcom::seeded_rng;
use semcom::tensor_nn::{decode_model, Model};

use crate::config::RunConfig;
use crate::data::Splits;
use crate::error::{CliError, CliResult};

pub fn read_model(path: &Path) -> CliResult<Model> {
    let bytes = fs::read(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    decode_model(&bytes).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

pub fn task_kind(d: &Dataset) -> CliResult<TaskKind> {
    match d.labels() {
        Labels::Classes(_) => Ok(TaskKind::Discrete),
        Labels::Masks(_) => Ok(TaskKind::Continuous),
        Labels::None => Err(CliError::config(format!("{} has no labels; the receiver needs ground truth", d.name))),
    }
}

/// Coders from `training.init_from`, or freshly initialised from
/// `training.seed`.
pub fn coder_pair(cfg: &RunConfig, source_shape: &[usize], task: TaskKind) -> CliResult<CoderPair> {
    let n_k: usize = source_shape.iter().product();
    let pair = match &cfg.training.init_from {
        Some(dir) => CoderPair::new(read_model(&dir.join("encoder.bin"))?, read_model(&dir.join("decoder.bin"))?, task)?,
        None => CoderPair::init(
            source_shape,
            cfg.channel.n_x(n_k),
            cfg.training.arch,
            task,
            &mut seeded_rng(cfg.training.seed),
        )?,
    };
    if pair.source_shape() != source_shape || pair.n_x() != cfg.channel.n_x(n_k) {
        return Err(CliError::config(format!(
            "coders map {:?} -> {} symbols, config expects {:?} -> {}",
            pair.source_shape(),
            pair.n_x(),
            source_shape,
            cfg.channel.n_x(n_k)
        )));
    }
    Ok(pair)
}

/// The receiver's task model: loaded from `training.phi`, otherwise fitted
/// on the training split. Returns whether it was trained here.
pub fn task_model(cfg: &RunConfig, splits: &Splits) -> CliResult<(Model, bool)> {
    match &cfg.training.phi {
        Some(p) => Ok((read_model(p)?, false)),
        None => {
            let t = train_pragmatic(&splits.train, Some(&splits.test), &cfg.pragmatic)?;
            log::info!("task model fitted: train {:.3}, test {:?}", t.train_metric, t.test_metric);
            Ok((t.model, true))
        }
    }
}

/// Both datasets' images in order, labels kept when both carry the same kind.
pub fn concat(a: &Dataset, b: &Dataset) -> CliResult<Dataset> {
    let images = a.images().iter().chain(b.images()).cloned().collect();
    let labels = match (a.labels(), b.labels()) {
        (Labels::Classes(x), Labels::Classes(y)) => Labels::Classes(x.iter().chain(y).copied().collect()),
        (Labels::Masks(x), Labels::Masks(y)) => Labels::Masks(x.iter().chain(y).cloned().collect()),
        _ => Labels::None,
    };
    Ok(Dataset::new(a.name.clone(), images, labels)?)
}
