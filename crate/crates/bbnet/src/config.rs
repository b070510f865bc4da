//! Run configuration and electrode group tables.
//!
//! A run is described by a TOML file; unknown keys are rejected. Example:
//!
//! ```toml
//! seed = 7
//! protocol = "cross-session"          # intra | cross-session | cross-task | subset | diverse
//! datasets = ["s1.eegds", "s2.eegds"] # source then target for the cross protocols
//! output = "runs/cross"
//! finetune = [0.0, 0.05, 0.1]         # fractions of each target subject's trials
//!
//! [model]
//! measure = "cor"
//! max_epochs = 500
//!
//! [evaluation]
//! repetitions = 5
//! ```
//!
//! Every omitted key takes the default shown by [`RunConfig::to_toml`] on a
//! fresh config.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use bbnet_core::connectivity::{ConnectivityConfig, Measure, PliConvention};
use bbnet_core::experiment::{ElectrodeGroup, ExperimentConfig, FINETUNE_GRID};
use bbnet_core::graph::DegreeConvention;
use bbnet_core::model::{ModelConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Built-in electrode groups.
pub const DEFAULT_GROUPS: &str = include_str!("../data/electrode_groups.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Stratified k-fold within one session.
    Intra,
    CrossSession,
    CrossTask,
    /// Intra-session on a named electrode group.
    Subset,
    /// Intra-session on several datasets pooled.
    Diverse,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Intra => "intra",
            Protocol::CrossSession => "cross-session",
            Protocol::CrossTask => "cross-task",
            Protocol::Subset => "subset",
            Protocol::Diverse => "diverse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Protocol::Intra,
            Protocol::CrossSession,
            Protocol::CrossTask,
            Protocol::Subset,
            Protocol::Diverse,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed of splits, selections and model initialization.
    pub seed: u64,
    pub protocol: Protocol,
    /// Input containers. One for `intra` and `subset`, source and target
    /// for the cross protocols, two or more for `diverse`.
    pub datasets: Vec<PathBuf>,
    /// Directory receiving reports, histories and the resolved config.
    pub output: PathBuf,
    /// Electrode group name for `subset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<String>,
    /// Group table replacing the built-in one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<PathBuf>,
    /// Fine-tuning fractions for the cross protocols.
    #[serde(default = "default_finetune")]
    pub finetune: Vec<f64>,
    /// Worker threads; results do not depend on it.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Save the restored weights of every fit under `checkpoints/`.
    #[serde(default)]
    pub checkpoints: bool,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub connectivity: ConnectivitySection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

fn default_finetune() -> Vec<f64> {
    FINETUNE_GRID.to_vec()
}

fn default_jobs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// dist | cor | plv | pli | rho | idn | rdm
    pub measure: String,
    /// eeg-bbnet | gcn-only
    pub variant: String,
    /// absolute | signed
    pub degree: String,
    pub conv_kernel: usize,
    pub pool_window: usize,
    pub gconv_dims: [usize; 2],
    pub dense_dims: [usize; 2],
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::new(0, 0, 0, Measure::Cor);
        Self {
            measure: "cor".into(),
            variant: m.variant.name().into(),
            degree: "absolute".into(),
            conv_kernel: m.conv_kernel,
            pool_window: m.pool_window,
            gconv_dims: m.gconv_dims,
            dense_dims: m.dense_dims,
            dropout: m.dropout,
            learning_rate: m.learning_rate,
            batch_size: m.batch_size,
            patience: m.patience,
            max_epochs: m.max_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConnectivitySection {
    /// signed | absolute
    pub pli: String,
    /// RHO histogram bins; one per sample when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_bins: Option<usize>,
}

impl Default for ConnectivitySection {
    fn default() -> Self {
        Self {
            pli: "signed".into(),
            rho_bins: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub folds: usize,
    /// Seeded repetitions per fine-tuning fraction.
    pub repetitions: usize,
    /// Bandpass and decimate trials before use.
    pub preprocess: bool,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        let e = ExperimentConfig::new(Measure::Cor, 0);
        Self {
            folds: e.folds,
            repetitions: e.repetitions,
            preprocess: e.preprocess,
        }
    }
}

pub fn parse_measure(s: &str) -> Result<Measure> {
    Measure::parse(s).ok_or_else(|| {
        Error::Config(format!(
            "unknown measure {s:?}; expected one of dist, cor, plv, pli, rho, idn, rdm"
        ))
    })
}

pub fn parse_pli(s: &str) -> Result<PliConvention> {
    match s {
        "signed" => Ok(PliConvention::Signed),
        "absolute" => Ok(PliConvention::Absolute),
        _ => Err(Error::Config(format!("unknown PLI convention {s:?}; expected signed or absolute"))),
    }
}

impl RunConfig {
    /// Defaults for everything but the required fields.
    pub fn new(seed: u64, protocol: Protocol, datasets: Vec<PathBuf>, output: PathBuf) -> Self {
        Self {
            seed,
            protocol,
            datasets,
            output,
            subset: None,
            groups: None,
            finetune: default_finetune(),
            jobs: default_jobs(),
            checkpoints: false,
            model: ModelSection::default(),
            connectivity: ConnectivitySection::default(),
            evaluation: EvaluationSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// The fully resolved configuration; loading it reproduces the run.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks everything that can be checked without reading the data.
    pub fn validate(&self) -> Result<()> {
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed {} exceeds the TOML integer range", self.seed)));
        }
        let n = self.datasets.len();
        let ok = match self.protocol {
            Protocol::Intra | Protocol::Subset => n == 1,
            Protocol::CrossSession | Protocol::CrossTask => n == 2,
            Protocol::Diverse => n >= 2,
        };
        if !ok {
            return Err(Error::Config(format!(
                "protocol {} takes {} dataset(s), got {n}",
                self.protocol,
                match self.protocol {
                    Protocol::Intra | Protocol::Subset => "1",
                    Protocol::CrossSession | Protocol::CrossTask => "2 (source, target)",
                    Protocol::Diverse => "2 or more",
                }
            )));
        }
        if self.protocol == Protocol::Subset && self.subset.is_none() {
            return Err(Error::Config("protocol subset needs a subset name".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be positive".into()));
        }
        if matches!(self.protocol, Protocol::CrossSession | Protocol::CrossTask)
            && (self.finetune.is_empty() || self.finetune.iter().any(|f| !(0.0..1.0).contains(f)))
        {
            return Err(Error::Config(format!(
                "fine-tuning fractions must lie in [0, 1), got {:?}",
                self.finetune
            )));
        }
        self.experiment_config().map(|_| ())
    }

    /// Core settings; shape fields are filled in from the data later.
    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        let m = &self.model;
        let mut config = ExperimentConfig::new(parse_measure(&m.measure)?, self.seed);
        config.model.variant = Variant::parse(&m.variant).ok_or_else(|| {
            Error::Config(format!("unknown variant {:?}; expected eeg-bbnet or gcn-only", m.variant))
        })?;
        config.model.degree = match m.degree.as_str() {
            "absolute" => DegreeConvention::Absolute,
            "signed" => DegreeConvention::Signed,
            d => {
                return Err(Error::Config(format!(
                    "unknown degree convention {d:?}; expected absolute or signed"
                )))
            }
        };
        config.model.conv_kernel = m.conv_kernel;
        config.model.pool_window = m.pool_window;
        config.model.gconv_dims = m.gconv_dims;
        config.model.dense_dims = m.dense_dims;
        config.model.dropout = m.dropout;
        config.model.learning_rate = m.learning_rate;
        config.model.batch_size = m.batch_size;
        config.model.patience = m.patience;
        config.model.max_epochs = m.max_epochs;
        config.connectivity = ConnectivityConfig {
            pli: parse_pli(&self.connectivity.pli)?,
            rho_bins: self.connectivity.rho_bins,
        };
        if self.connectivity.rho_bins == Some(0) {
            return Err(Error::Config("rho_bins must be positive".into()));
        }
        config.folds = self.evaluation.folds;
        config.repetitions = self.evaluation.repetitions;
        config.preprocess = self.evaluation.preprocess;
        Ok(config)
    }

    /// The group named by `subset`, from `groups` or the built-in table.
    pub fn electrode_group(&self) -> Result<ElectrodeGroup> {
        let name = self
            .subset
            .as_deref()
            .ok_or_else(|| Error::Config("no subset named".into()))?;
        let groups = match &self.groups {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                parse_groups(&text)?
            }
            None => parse_groups(DEFAULT_GROUPS)?,
        };
        find_group(&groups, name)
    }
}

/// Reads a table of `name = ["Ch1", "Ch2", ...]` entries, sorted by name.
pub fn parse_groups(text: &str) -> Result<Vec<ElectrodeGroup>> {
    let table: BTreeMap<String, Vec<String>> =
        toml::from_str(text).map_err(|e| Error::Config(format!("electrode groups: {e}")))?;
    table
        .into_iter()
        .map(|(name, channels)| {
            if channels.is_empty() {
                Err(Error::Config(format!("electrode group {name} is empty")))
            } else {
                Ok(ElectrodeGroup { name, channels })
            }
        })
        .collect()
}

pub fn default_groups() -> Vec<ElectrodeGroup> {
    parse_groups(DEFAULT_GROUPS).expect("built-in group table is valid")
}

pub fn find_group(groups: &[ElectrodeGroup], name: &str) -> Result<ElectrodeGroup> {
    groups.iter().find(|g| g.name == name).cloned().ok_or_else(|| {
        let known: Vec<&str> = groups.iter().map(|g| g.name.as_str()).collect();
        Error::Config(format!("unknown electrode group {name:?}; known: {}", known.join(", ")))
    })
}
