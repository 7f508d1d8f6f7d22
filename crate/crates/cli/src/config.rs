//! Run configuration: a TOML file with sections, `section.key=value`
//! overrides and a few environment variables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use semcom::channel::ChannelConfig;
use semcom::data_adaptation::CganConfig;
use semcom::semantic_coding::{CoderArch, PragmaticTrainConfig, PretrainConfig};
use semcom::similarity::DomainClassifierConfig;
use semcom::split_protocol::{SessionConfig, StopConfig, TransportKind, WirePrecision};
use semcom::tensor_nn::AdamConfig;

use crate::error::{CliError, CliResult};

pub const OUTPUT_DIR_ENV: &str = "SEMCOM_OUTPUT_DIR";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Library dataset: what the coders and task are trained on.
    pub data: DataSection,
    /// Observed dataset for adaptation and similarity runs.
    pub observed: Option<DataSection>,
    pub channel: ChannelSection,
    pub loss: LossSection,
    pub training: TrainingSection,
    pub transport: TransportSection,
    pub output: OutputSection,
    pub pragmatic: PragmaticTrainConfig,
    pub pretrain: PretrainConfig,
    pub cgan: CganConfig,
    pub pad: PadSection,
    pub eval: EvalSection,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Synth,
    Idx,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthName {
    #[default]
    TwoClassDigits8x8,
    ShiftedBlobs,
    MaskShapes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: Source,
    pub synth: SynthName,
    /// Number of synthetic samples.
    pub n: usize,
    /// Pixel offset of `shifted_blobs`.
    pub offset: f64,
    /// Generation seed of synthetic data.
    pub seed: u64,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Separate test files; without them the data is split.
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub train_fraction: f64,
    pub split_seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: Source::Synth,
            synth: SynthName::TwoClassDigits8x8,
            n: 600,
            offset: 0.0,
            seed: 0,
            images: None,
            labels: None,
            test_images: None,
            test_labels: None,
            train_fraction: 2.0 / 3.0,
            split_seed: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub snr_db: f64,
    /// Ignore `snr_db` and transmit without noise.
    pub noiseless: bool,
    /// Compression rate `n_x / n_k` in `(0, 1]`.
    pub cr: f64,
    pub seed: u64,
    pub quantize_8bit: bool,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            snr_db: 10.0,
            noiseless: false,
            cr: 0.25,
            seed: 0,
            quantize_8bit: false,
        }
    }
}

impl ChannelSection {
    pub fn snr(&self) -> f64 {
        if self.noiseless {
            f64::INFINITY
        } else {
            self.snr_db
        }
    }

    /// Channel symbols for `n_k` source values.
    pub fn n_x(&self, n_k: usize) -> usize {
        ((self.cr * n_k as f64).round() as usize).clamp(1, n_k)
    }

    pub fn for_source(&self, n_k: usize) -> CliResult<ChannelConfig> {
        let mut c = ChannelConfig::new(self.snr(), self.n_x(n_k), n_k, self.seed)?;
        c.quantize_8bit = self.quantize_8bit;
        Ok(c)
    }
}

/// `alpha = "auto"` or a positive number.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AlphaRepr", into = "AlphaRepr")]
pub enum Alpha {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AlphaRepr {
    Number(f64),
    Word(String),
}

impl TryFrom<AlphaRepr> for Alpha {
    type Error = String;

    fn try_from(r: AlphaRepr) -> Result<Self, String> {
        match r {
            AlphaRepr::Number(a) => Ok(Alpha::Fixed(a)),
            AlphaRepr::Word(w) if w == "auto" => Ok(Alpha::Auto),
            AlphaRepr::Word(w) => Err(format!("alpha must be \"auto\" or a number, got {w:?}")),
        }
    }
}

impl From<Alpha> for AlphaRepr {
    fn from(a: Alpha) -> Self {
        match a {
            Alpha::Auto => AlphaRepr::Word("auto".into()),
            Alpha::Fixed(v) => AlphaRepr::Number(v),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    /// Defaults to `1 - cr`.
    pub lambda: Option<f64>,
    pub alpha: Alpha,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without improvement before stopping; 0 never stops early.
    pub patience: usize,
    pub min_improvement: f64,
    pub seed: u64,
    pub learning_rate: f64,
    pub precision: WirePrecision,
    pub arch: CoderArch,
    /// Directory holding `encoder.bin`/`decoder.bin` to start from.
    pub init_from: Option<PathBuf>,
    /// Pretrained task model; trained on the fly when absent.
    pub phi: Option<PathBuf>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            patience: 10,
            min_improvement: 1e-5,
            seed: 0,
            learning_rate: AdamConfig::default().eta,
            precision: WirePrecision::F32,
            arch: CoderArch::Dense,
            init_from: None,
            phi: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    #[default]
    Inproc,
    Tcp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSection {
    pub mode: TransportMode,
    /// `host:port`; the receiver listens, the transmitter dials.
    pub addr: String,
    /// Dial attempts, with growing back-off, before the transmitter gives up.
    pub connect_attempts: usize,
}

impl Default for TransportSection {
    fn default() -> Self {
        Self {
            mode: TransportMode::Inproc,
            addr: "127.0.0.1:7878".into(),
            connect_attempts: 50,
        }
    }
}

impl TransportSection {
    pub fn kind(&self) -> TransportKind {
        match self.mode {
            TransportMode::Inproc => TransportKind::InProcess,
            TransportMode::Tcp => TransportKind::Tcp { addr: self.addr.clone() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "runs/latest".into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PadSection {
    /// Samples drawn per domain.
    pub n: usize,
    pub epochs: usize,
    pub eta: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PadSection {
    fn default() -> Self {
        let c = DomainClassifierConfig::default();
        Self {
            n: 1000,
            epochs: c.epochs,
            eta: c.eta,
            batch_size: c.batch_size,
            seed: c.seed,
        }
    }
}

impl PadSection {
    pub fn classifier(&self) -> DomainClassifierConfig {
        DomainClassifierConfig {
            epochs: self.epochs,
            eta: self.eta,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// SNR grid in dB; empty means just `channel.snr_db`.
    pub snr_db: Vec<f64>,
}

impl RunConfig {
    /// Reads `path` (if any), applies `section.key=value` overrides in
    /// order, then the output-directory environment variable.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(e.message().to_string()))?;
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            cfg.output.dir = dir.into();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let c = &self.channel;
        if !(c.cr > 0.0 && c.cr <= 1.0) {
            return Err(CliError::config(format!("channel.cr = {} outside (0, 1]", c.cr)));
        }
        if !c.noiseless && !c.snr_db.is_finite() {
            return Err(CliError::config("channel.snr_db must be finite; set channel.noiseless = true instead"));
        }
        for d in std::iter::once(&self.data).chain(self.observed.as_ref()) {
            d.validate()?;
        }
        if let Some(l) = self.loss.lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(CliError::config(format!("loss.lambda = {l} outside [0, 1]")));
            }
        }
        if let Alpha::Fixed(a) = self.loss.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(CliError::config(format!("loss.alpha = {a} must be positive")));
            }
        }
        if self.training.batch_size == 0 {
            return Err(CliError::config("training.batch_size must be positive"));
        }
        if self.eval.snr_db.iter().any(|s| s.is_nan()) {
            return Err(CliError::config("eval.snr_db contains NaN"));
        }
        Ok(())
    }

    pub fn observed(&self) -> CliResult<&DataSection> {
        self.observed
            .as_ref()
            .ok_or_else(|| CliError::config("this command needs an [observed] dataset section"))
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig::with_eta(self.training.learning_rate)
    }

    /// Session settings for sources of `n_k` values.
    pub fn session(&self, n_k: usize, evaluate: bool) -> CliResult<SessionConfig> {
        let t = &self.training;
        let mut s = SessionConfig::new(self.channel.for_source(n_k)?);
        s.lambda = self.loss.lambda;
        s.alpha = match self.loss.alpha {
            Alpha::Auto => None,
            Alpha::Fixed(a) => Some(a),
        };
        s.adam = self.adam();
        s.batch_size = t.batch_size;
        s.stop = StopConfig {
            max_epochs: t.epochs,
            patience: t.patience,
            min_improvement: t.min_improvement,
        };
        s.seed = t.seed;
        s.precision = t.precision;
        s.evaluate = evaluate;
        s.send_encoder_params = t.init_from.is_some();
        s.validate()?;
        Ok(s)
    }

    /// The resolved configuration as TOML, loadable with `--config`.
    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(CliError::output)
    }
}

impl DataSection {
    fn validate(&self) -> CliResult<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CliError::config(format!("train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        match self.source {
            Source::Synth if self.n == 0 => Err(CliError::config("synthetic dataset needs n >= 1")),
            Source::Idx if self.images.is_none() => Err(CliError::config("IDX dataset needs `images`")),
            _ => Ok(()),
        }
    }
}

/// Sets `a.b.c = value` in `table`, parsing `value` as a TOML value and
/// falling back to a plain string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override {spec:?} is not key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let path: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = path.split_last().expect("split yields at least one item");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("override {key}: {p} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
