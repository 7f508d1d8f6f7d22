use serde_json::json;

use semcom::semantic_coding::{pretrain_reconstruction, train_pragmatic};
use semcom::tensor_nn::encode_model;

use super::{coder_pair, task_kind};
use crate::config::RunConfig;
use crate::data;
use crate::error::CliResult;
use crate::report::{num, opt_num, Report};

/// Fits the receiver's task model on its labelled library data.
pub fn phi(cfg: &RunConfig) -> CliResult<()> {
    let splits = data::load(&cfg.data)?;
    let t = train_pragmatic(&splits.train, Some(&splits.test), &cfg.pragmatic)?;
    let mut report = Report::new("pretrain-phi", cfg);
    let path = report.write_file("phi.bin", &encode_model(&t.model))?;
    report
        .set("task", json!(format!("{:?}", t.task_kind)))
        .set("train_metric", num(t.train_metric))
        .set("test_metric", opt_num(t.test_metric))
        .set("phi", json!(path));
    report.finish()?;
    Ok(())
}

/// Receiver-local reconstruction pretraining of both coders; the encoder
/// blob is what a later `train` with `training.init_from` ships.
pub fn recon(cfg: &RunConfig) -> CliResult<()> {
    let splits = data::load(&cfg.data)?;
    let task = task_kind(&splits.train)?;
    let pair = coder_pair(cfg, &splits.train.image_shape(), task)?;
    let channel = cfg.channel.for_source(splits.train.image_len())?;
    let out = pretrain_reconstruction(pair, &splits.train, &channel, &cfg.pretrain)?;
    let mut report = Report::new("pretrain-recon", cfg);
    report.write_file("encoder.bin", &out.encoder_blob)?;
    report.write_file("decoder.bin", &encode_model(&out.pair.decoder))?;
    report
        .set("initial_loss", num(out.initial_loss))
        .set("final_loss", num(out.final_loss))
        .set("cr", num(out.pair.cr));
    report.finish()?;
    Ok(())
}
