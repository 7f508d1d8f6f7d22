use std::path::Path;

use serde_json::json;

use semcom::data_adaptation::{adapt_dataset, compare_adaptation, train_cgan, CganBundle, DaEvalConfig};
use semcom::datasets_metrics::{write_idx, Labels};

use super::concat;
use crate::config::RunConfig;
use crate::data;
use crate::error::{CliError, CliResult};
use crate::report::{cell, num, Report};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Part {
    Train,
    Test,
    All,
}

/// Trains the adaptation networks on unlabeled library and observed images.
pub fn train(cfg: &RunConfig) -> CliResult<()> {
    let lib = data::load(&cfg.data)?.train.without_labels();
    let obs = data::load(cfg.observed()?)?.train.without_labels();
    let bundle = CganBundle::init(&lib.image_shape(), &obs.image_shape(), &cfg.cgan)?;
    let out = train_cgan(bundle, &lib, &obs, &cfg.cgan)?;

    let mut report = Report::new("da-train", cfg);
    let path = report.write_file("bundle.cgan", &out.bundle.encode())?;
    let mut rows = Vec::new();
    for h in &out.history {
        let l = &h.losses;
        report.push_epoch(json!({
            "epoch": h.epoch,
            "gan_s": num(l.gan_s),
            "gan_k": num(l.gan_k),
            "cycle": num(l.cycle),
            "total": num(l.total),
            "disc_accuracy_k": num(h.disc_accuracy_k),
        }));
        rows.push(
            [h.epoch as f64, l.gan_s, l.gan_k, l.cycle, l.total, h.disc_accuracy_k]
                .map(|v| cell(Some(v)))
                .to_vec(),
        );
    }
    report.write_csv("cgan.csv", &["epoch", "gan_s", "gan_k", "cycle", "total", "disc_accuracy_k"], &rows)?;
    report.set("bundle", json!(path)).set("epochs_run", json!(out.history.len()));
    report.finish()?;
    Ok(())
}

/// Maps observed images into the library domain with a trained `G_K` and
/// writes them as IDX files.
pub fn apply(cfg: &RunConfig, bundle: &Path, part: Part) -> CliResult<()> {
    let bytes = std::fs::read(bundle).map_err(|e| CliError::config(format!("{}: {e}", bundle.display())))?;
    let bundle = CganBundle::decode(&bytes).map_err(|e| CliError::config(format!("bundle: {e}")))?;
    let splits = data::load(cfg.observed()?)?;
    let obs = match part {
        Part::Train => splits.train,
        Part::Test => splits.test,
        Part::All => concat(&splits.train, &splits.test)?,
    };
    if obs.image_shape() != bundle.observed_shape() {
        return Err(CliError::config(format!(
            "bundle expects observed images {:?}, got {:?}",
            bundle.observed_shape(),
            obs.image_shape()
        )));
    }
    let adapted = adapt_dataset(&bundle.g_k, &obs)?;
    let mut report = Report::new("da-apply", cfg);
    let images = report.path("adapted-images.idx");
    let labels = matches!(adapted.labels(), Labels::Classes(_)).then(|| report.path("adapted-labels.idx"));
    std::fs::create_dir_all(report.dir()).map_err(CliError::output)?;
    write_idx(&adapted, &images, labels.as_deref()).map_err(CliError::output)?;
    report
        .set("items", json!(adapted.len()))
        .set("image_shape", json!(adapted.image_shape()))
        .set("images", json!(images))
        .set("labels", json!(labels));
    report.finish()?;
    Ok(())
}

/// No adaptation vs adaptation vs retraining on the observed test split.
pub fn eval(cfg: &RunConfig) -> CliResult<()> {
    let lib = data::load(&cfg.data)?;
    let obs = data::load(cfg.observed()?)?;
    let lib_all = concat(&lib.train, &lib.test)?;
    let mut da = DaEvalConfig::new(cfg.session(lib_all.image_len(), false)?);
    da.coder_arch = cfg.training.arch;
    da.pragmatic = cfg.pragmatic;
    da.cgan = cfg.cgan;
    let r = compare_adaptation(&lib_all, &obs.train, &obs.test, &da)?;

    let name = &obs.test.name;
    let legends = [
        (format!("{name} (No DA)"), r.no_da),
        (format!("{name} (DA)"), r.da),
        (format!("{name} (Retrained)"), r.retrained),
    ];
    let mut report = Report::new("da-eval", cfg);
    for h in &r.cgan_history {
        report.push_epoch(json!({
            "epoch": h.epoch,
            "total": num(h.losses.total),
            "disc_accuracy_k": num(h.disc_accuracy_k),
        }));
    }
    let rows: Vec<Vec<String>> = legends.iter().map(|(l, a)| vec![l.clone(), cell(Some(*a))]).collect();
    report.write_csv("da.csv", &["strategy", "accuracy"], &rows)?;
    report
        .set("no_da", num(r.no_da))
        .set("da", num(r.da))
        .set("retrained", num(r.retrained))
        .set(
            "legends",
            json!(legends.iter().map(|(l, a)| json!({"legend": l, "accuracy": num(*a)})).collect::<Vec<_>>()),
        );
    report.finish()?;
    Ok(())
}
