//! Experiment configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use byzagg_core::attacks::{AttackKind, AttackSpec};
use byzagg_core::field::PrimeField;
use byzagg_core::protocol::ProtocolConfig;
use byzagg_core::quant::QuantConfig;
use byzagg_core::robust::{RobustRule, Selection};
use byzagg_core::zo::ZoConfig;
use serde::{Deserialize, Serialize};

use crate::data::BlobSpec;
use crate::error::{io_err, HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Zo,
}

/// Where aggregation happens: the full protocol or the plaintext rule on the
/// same quantized gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Protocol,
    Plaintext,
}

/// `KR`, `KR-NNM`, `MKR` or `MKR-NNM`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RuleVariant {
    pub multi: bool,
    pub nnm: bool,
}

impl RuleVariant {
    pub const ALL: [RuleVariant; 4] = [
        RuleVariant { multi: false, nnm: false },
        RuleVariant { multi: false, nnm: true },
        RuleVariant { multi: true, nnm: false },
        RuleVariant { multi: true, nnm: true },
    ];

    pub fn rule(self) -> RobustRule {
        let selection = if self.multi { Selection::MultiKrum } else { Selection::Krum };
        RobustRule::new(selection, self.nnm)
    }
}

impl fmt::Display for RuleVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = if self.multi { "MKR" } else { "KR" };
        if self.nnm {
            write!(f, "{base}-NNM")
        } else {
            f.write_str(base)
        }
    }
}

impl FromStr for RuleVariant {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let (base, nnm) = match upper.strip_suffix("-NNM") {
            Some(b) => (b, true),
            None => (upper.as_str(), false),
        };
        let multi = match base {
            "KR" => false,
            "MKR" => true,
            _ => return Err(HarnessError::Config(format!("unknown rule {s:?}; expected KR, KR-NNM, MKR or MKR-NNM"))),
        };
        Ok(Self { multi, nnm })
    }
}

impl TryFrom<String> for RuleVariant {
    type Error = HarnessError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RuleVariant> for String {
    fn from(r: RuleVariant) -> String {
        r.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSpec {
    Synthetic(BlobSpec),
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default = "ten")]
        classes: usize,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        #[serde(default = "ten")]
        classes: usize,
    },
}

fn ten() -> usize {
    10
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec::Synthetic(BlobSpec::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub n: usize,
    pub b: usize,
    #[serde(default = "one")]
    pub z: usize,
    #[serde(default = "default_levels")]
    pub levels: u32,
    #[serde(default = "default_clip")]
    pub clip: f64,
    /// Prime modulus; the Mersenne prime `2^61 - 1` when absent.
    #[serde(default)]
    pub modulus: Option<u64>,
    #[serde(default)]
    pub restart_on_vss_failure: bool,
    #[serde(default)]
    pub private_final_aggregation: bool,
}

fn one() -> usize {
    1
}
fn default_levels() -> u32 {
    1024
}
fn default_clip() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: Optimizer,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    /// Samples per local gradient; the full local dataset when absent.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default = "default_rules")]
    pub rules: Vec<RuleVariant>,
    #[serde(default = "default_beta")]
    pub dirichlet_beta: f64,
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub zo: ZoConfig,
    #[serde(default = "no_attack")]
    pub attack: AttackSpec,
    #[serde(default)]
    pub data: DataSpec,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_optimizer() -> Optimizer {
    Optimizer::Sgd
}
fn default_backend() -> Backend {
    Backend::Protocol
}
fn default_rules() -> Vec<RuleVariant> {
    RuleVariant::ALL.to_vec()
}
fn default_beta() -> f64 {
    0.1
}
fn no_attack() -> AttackSpec {
    AttackSpec::new(AttackKind::None)
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_toml_value(v: toml::Value) -> Result<Self> {
        v.try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn field(&self) -> Result<PrimeField> {
        Ok(match self.protocol.modulus {
            Some(q) => PrimeField::new(q)?,
            None => PrimeField::mersenne61(),
        })
    }

    /// Protocol parameters for one rule variant and model dimension `d`.
    pub fn protocol_config(&self, rule: RuleVariant, d: usize) -> Result<ProtocolConfig> {
        let p = &self.protocol;
        let quant = QuantConfig::new(p.levels, p.clip, self.field()?)?;
        let mut cfg = ProtocolConfig::new(p.n, p.b, p.z, d, rule.rule(), quant);
        cfg.restart_on_vss_failure = p.restart_on_vss_failure;
        cfg.private_final_aggregation = p.private_final_aggregation;
        Ok(cfg)
    }

    /// Checks everything that does not depend on the dataset.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("no seeds given".into()));
        }
        if self.epochs == 0 {
            return Err(HarnessError::Config("epochs must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(HarnessError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.rules.is_empty() {
            return Err(HarnessError::Config("no aggregation rules given".into()));
        }
        if self.batch_size == Some(0) {
            return Err(HarnessError::Config("batch size must be positive".into()));
        }
        if !(self.dirichlet_beta.is_finite() && self.dirichlet_beta > 0.0) {
            return Err(HarnessError::Config(format!("dirichlet beta must be positive, got {}", self.dirichlet_beta)));
        }
        if self.optimizer == Optimizer::Zo {
            self.zo.validate()?;
        }
        for &rule in &self.rules {
            // Structure and quantizer only; the field bound needs `d`.
            let cfg = self.protocol_config(rule, 1)?;
            cfg.validate_structure()?;
        }
        Ok(())
    }
}

/// Sets a dotted `path` (e.g. `protocol.n`) in a TOML tree, parsing `raw` as
/// an integer, float, boolean, array or, failing those, a string.
pub fn set_path(root: &mut toml::Value, path: &str, raw: &str) -> Result<()> {
    let value = parse_scalar(raw);
    let mut node = root;
    let mut keys = path.split('.').peekable();
    while let Some(key) = keys.next() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("{path}: {key} is not inside a table")))?;
        if keys.peek().is_none() {
            table.insert(key.to_string(), value);
            return Ok(());
        }
        node = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    Err(HarnessError::Config("empty parameter path".into()))
}

fn parse_scalar(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}
