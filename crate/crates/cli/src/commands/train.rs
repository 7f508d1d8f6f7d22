use std::net::TcpListener;

use serde_json::json;

use semcom::semantic_coding::{CoderPair, TaskKind};
use semcom::split_protocol::{
    run_training, tcp_accept, tcp_connect, EpochMetrics, FramedLink, Receiver, SessionConfig, Transmitter,
};
use semcom::tensor_nn::encode_model;

use super::{coder_pair, task_kind, task_model};
use crate::config::{RunConfig, TransportMode};
use crate::data::{self, Splits};
use crate::error::{CliError, CliResult};
use crate::report::{epoch_json, epoch_row, num, opt_num, Report, METRICS_HEADER};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Role {
    /// Both endpoints in this process.
    Both,
    Transmitter,
    Receiver,
}

struct Prepared {
    splits: Splits,
    pair: CoderPair,
    session: SessionConfig,
}

fn prepare(cfg: &RunConfig, splits: Splits, task: TaskKind) -> CliResult<Prepared> {
    let shape = splits.train.image_shape();
    let pair = coder_pair(cfg, &shape, task)?;
    let session = cfg.session(splits.train.image_len(), true)?;
    Ok(Prepared { splits, pair, session })
}

fn metrics_out(report: &mut Report, metrics: &[EpochMetrics]) -> CliResult<()> {
    for m in metrics {
        report.push_epoch(epoch_json(m));
    }
    let rows: Vec<_> = metrics.iter().map(epoch_row).collect();
    report.write_csv("metrics.csv", &METRICS_HEADER, &rows)?;
    let last = metrics.last();
    report
        .set("epochs_run", json!(metrics.len()))
        .set("final_accuracy", opt_num(last.and_then(|m| m.test_accuracy)))
        .set("final_psnr", opt_num(last.and_then(|m| m.test_psnr)))
        .set("final_iou", opt_num(last.and_then(|m| m.test_iou)));
    Ok(())
}

fn require_tcp(cfg: &RunConfig, role: Role) -> CliResult<()> {
    if cfg.transport.mode != TransportMode::Tcp {
        return Err(CliError::config(format!("--role {role:?} needs transport.mode = \"tcp\"")));
    }
    Ok(())
}

pub fn run(cfg: &RunConfig, role: Role) -> CliResult<()> {
    match role {
        Role::Both => both(cfg),
        Role::Receiver => {
            require_tcp(cfg, role)?;
            receiver(cfg)
        }
        Role::Transmitter => {
            require_tcp(cfg, role)?;
            transmitter(cfg)
        }
    }
}

fn both(cfg: &RunConfig) -> CliResult<()> {
    let splits = data::load(&cfg.data)?;
    let task = task_kind(&splits.train)?;
    let p = prepare(cfg, splits, task)?;
    let loss = p.session.loss_config(&p.pair)?;
    let phi = if loss.reconstruction_only_weight() { None } else { Some(task_model(cfg, &p.splits)?) };
    let mut report = Report::new("train", cfg);
    let out = run_training(
        p.pair,
        phi.as_ref().map(|(m, _)| m.clone()),
        &p.splits.train,
        Some(&p.splits.test),
        &p.session,
        &cfg.transport.kind(),
    )?;
    report.write_file("encoder.bin", &encode_model(&out.pair.encoder))?;
    report.write_file("decoder.bin", &encode_model(&out.pair.decoder))?;
    if let Some((m, true)) = &phi {
        report.write_file("phi.bin", &encode_model(m))?;
    }
    metrics_out(&mut report, &out.metrics)?;
    report
        .set("role", json!("both"))
        .set("cr", num(out.pair.cr))
        .set("n_x", json!(out.pair.n_x()))
        .set("lambda", num(out.loss.lambda))
        .set("alpha", num(out.loss.alpha))
        .set("stopped_early", json!(out.stopped_early))
        .set("bytes_transmitter_sent", json!(out.transmitter.bytes_sent))
        .set("bytes_transmitter_received", json!(out.transmitter.bytes_received));
    report.finish()?;
    Ok(())
}

fn receiver(cfg: &RunConfig) -> CliResult<()> {
    let splits = data::load(&cfg.data)?;
    let task = task_kind(&splits.train)?;
    let p = prepare(cfg, splits, task)?;
    let loss = p.session.loss_config(&p.pair)?;
    let phi = if loss.reconstruction_only_weight() { None } else { Some(task_model(cfg, &p.splits)?) };
    let initial = p.session.send_encoder_params.then(|| encode_model(&p.pair.encoder));
    let rx = Receiver::new(
        p.pair.decoder,
        phi.as_ref().map(|(m, _)| m.clone()),
        loss,
        p.session.alpha.is_none(),
        p.session.adam,
        p.splits.train,
        Some(p.splits.test),
    )?;
    let listener = TcpListener::bind(&cfg.transport.addr)
        .map_err(|e| CliError::Protocol(format!("bind {}: {e}", cfg.transport.addr)))?;
    log::info!("receiver listening on {}", cfg.transport.addr);
    let stream = tcp_accept(&listener)?;
    let out = rx.lead(FramedLink::new(stream, p.session.precision), &p.session.lead_options(initial))?;

    let mut report = Report::new("train", cfg);
    report.write_file("decoder.bin", &encode_model(&out.decoder))?;
    if let Some((m, true)) = &phi {
        report.write_file("phi.bin", &encode_model(m))?;
    }
    metrics_out(&mut report, &out.metrics)?;
    report
        .set("role", json!("receiver"))
        .set("lambda", num(out.loss.lambda))
        .set("alpha", num(out.loss.alpha))
        .set("stopped_early", json!(out.stopped_early))
        .set("bytes_sent", json!(out.bytes_sent))
        .set("bytes_received", json!(out.bytes_received));
    report.finish()?;
    Ok(())
}

fn transmitter(cfg: &RunConfig) -> CliResult<()> {
    // The transmitter only ever holds images.
    let mut source = cfg.data.clone();
    source.labels = None;
    source.test_labels = None;
    let splits = data::load(&source)?;
    // Encoder initialisation does not depend on the task kind.
    let p = prepare(cfg, splits, TaskKind::Discrete)?;
    let tx = Transmitter::new(
        p.pair.encoder,
        p.session.channel,
        p.session.adam,
        p.splits.train.images().to_vec(),
        p.splits.test.images().to_vec(),
        p.session.precision,
    )?;
    log::info!("transmitter dialing {}", cfg.transport.addr);
    let stream = tcp_connect(cfg.transport.addr.as_str(), cfg.transport.connect_attempts)?;
    let out = tx.serve(FramedLink::new(stream, p.session.precision))?;

    let mut report = Report::new("train", cfg);
    report.write_file("encoder.bin", &encode_model(&out.encoder))?;
    for r in &out.reports {
        report.push_epoch(json!({
            "epoch": r.epoch,
            "loss": num(r.esd),
            "accuracy": opt_num(r.accuracy),
            "psnr": opt_num(r.psnr),
            "iou": opt_num(r.iou),
        }));
    }
    report
        .set("role", json!("transmitter"))
        .set("epochs_run", json!(out.reports.len()))
        .set("bytes_sent", json!(out.bytes_sent))
        .set("bytes_received", json!(out.bytes_received));
    report.finish()?;
    Ok(())
}
