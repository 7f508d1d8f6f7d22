use serde_json::json;

use semcom::similarity::estimate_pad;

use super::concat;
use crate::config::RunConfig;
use crate::data;
use crate::error::CliResult;
use crate::report::{num, Report};

/// Proxy A-distance between the library and observed datasets. Prints
/// `key=value` lines on stdout.
pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let lib = data::load(&cfg.data)?;
    let obs = data::load(cfg.observed()?)?;
    let lib = concat(&lib.train, &lib.test)?;
    let obs = concat(&obs.train, &obs.test)?;
    let n = cfg.pad.n.min(lib.len()).min(obs.len());
    if n < cfg.pad.n {
        log::warn!("pad.n = {} but only {n} samples per domain are available; using {n}", cfg.pad.n);
    }
    let c = estimate_pad(&lib, &obs, n, &cfg.pad.classifier())?;
    let d_a = c.pad();
    println!("library={}", lib.name);
    println!("observed={}", obs.name);
    println!("n={n}");
    println!("train_error={}", c.train_error);
    println!("epsilon={}", c.test_error);
    println!("d_a={d_a}");

    let mut report = Report::new("pad", cfg);
    report
        .set("epsilon", num(c.test_error))
        .set("train_error", num(c.train_error))
        .set("d_a", num(d_a))
        .set("n", json!(n));
    report.finish()?;
    Ok(())
}
