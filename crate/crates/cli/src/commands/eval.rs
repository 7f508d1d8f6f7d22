use std::path::PathBuf;

use serde_json::json;

use semcom::channel::{AwgnChannel, ChannelConfig};
use semcom::datasets_metrics::{psnr, Dataset, Targets};
use semcom::semantic_coding::{metric_from_output, CoderPair};
use semcom::split_protocol::eval_channel_seed;
use semcom::tensor_nn::{Model, Tensor};

use super::{read_model, task_kind};
use crate::config::RunConfig;
use crate::data;
use crate::error::{CliError, CliResult};
use crate::report::{cell, num, opt_num, Report};

/// What produces reconstructions in one group of table rows.
enum Link {
    /// No coders at all: `K_hat = K + N` at CR = 1.
    Identity,
    Coders(Box<CoderPair>),
}

struct Row {
    run: String,
    cr: f64,
    snr_db: f64,
    accuracy: Option<f64>,
    psnr: f64,
    iou: Option<f64>,
}

fn reconstruct(link: &Link, k: &Tensor, snr_db: f64, seed: u64) -> CliResult<Tensor> {
    let n_k = k.sample_len();
    Ok(match link {
        Link::Identity => {
            let mut ch = AwgnChannel::new(ChannelConfig::new(snr_db, n_k, n_k, seed)?)?;
            let flat = k.clone().reshape(vec![k.batch_size(), n_k])?;
            ch.transmit(&flat)?.reshape(k.shape().to_vec())?
        }
        Link::Coders(pair) => {
            let mut ch = AwgnChannel::new(ChannelConfig::new(snr_db, pair.n_x(), n_k, seed)?)?;
            pair.reconstruct(k, &mut ch)?
        }
    })
}

fn score(phi: Option<&Model>, k_hat: &Tensor, targets: Option<&Targets>) -> CliResult<(Option<f64>, Option<f64>)> {
    let (Some(phi), Some(t)) = (phi, targets) else {
        return Ok((None, None));
    };
    let m = metric_from_output(&phi.infer(k_hat)?, t)?;
    Ok(match t {
        Targets::Classes(_) => (Some(m), None),
        Targets::Masks(_) => (None, Some(m)),
    })
}

fn targets(test: &Dataset) -> Option<Targets> {
    let all: Vec<usize> = (0..test.len()).collect();
    test.targets(&all).ok()
}

pub fn run(cfg: &RunConfig, runs: &[PathBuf], identity: bool) -> CliResult<()> {
    if runs.is_empty() && !identity {
        return Err(CliError::config("eval needs --identity or at least one --run directory"));
    }
    let splits = data::load(&cfg.data)?;
    let test = &splits.test;
    let k = test.all_images()?;
    let z = targets(test);
    let grid = if cfg.eval.snr_db.is_empty() { vec![cfg.channel.snr()] } else { cfg.eval.snr_db.clone() };
    let seed = eval_channel_seed(cfg.channel.seed);

    let shared_phi = cfg.training.phi.as_deref().map(read_model).transpose()?;
    let mut groups: Vec<(String, Link, Option<Model>)> = Vec::new();
    if identity {
        groups.push(("identity".into(), Link::Identity, shared_phi.clone()));
    }
    for dir in runs {
        let task = task_kind(test)?;
        let pair = CoderPair::new(read_model(&dir.join("encoder.bin"))?, read_model(&dir.join("decoder.bin"))?, task)?;
        let phi_path = dir.join("phi.bin");
        let phi = if phi_path.exists() { Some(read_model(&phi_path)?) } else { shared_phi.clone() };
        groups.push((dir.display().to_string(), Link::Coders(Box::new(pair)), phi));
    }

    let mut rows = Vec::new();
    for (name, link, phi) in &groups {
        let cr = match link {
            Link::Identity => 1.0,
            Link::Coders(p) => p.cr,
        };
        for &snr_db in &grid {
            let k_hat = reconstruct(link, &k, snr_db, seed)?;
            let (accuracy, iou) = score(phi.as_ref(), &k_hat, z.as_ref())?;
            rows.push(Row {
                run: name.clone(),
                cr,
                snr_db,
                accuracy,
                psnr: psnr(&k_hat, &k)?,
                iou,
            });
        }
    }

    let mut report = Report::new("eval", cfg);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.run.clone(),
                cell(Some(r.cr)),
                cell(Some(r.snr_db)),
                cell(r.accuracy),
                cell(Some(r.psnr)),
                cell(r.iou),
            ]
        })
        .collect();
    report.write_csv("eval.csv", &["run", "cr", "snr_db", "accuracy", "psnr", "iou"], &table)?;
    let json_rows: Vec<_> = rows
        .iter()
        .map(|r| {
            json!({
                "run": r.run,
                "cr": num(r.cr),
                "snr_db": num(r.snr_db),
                "accuracy": opt_num(r.accuracy),
                "psnr": num(r.psnr),
                "iou": opt_num(r.iou),
            })
        })
        .collect();
    report.set("rows", json!(json_rows)).set("test_items", json!(test.len()));
    report.finish()?;
    Ok(())
}
