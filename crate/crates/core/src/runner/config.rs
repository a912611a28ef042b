//! Experiment configs and their parameter schemas.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{LabError, Result};
use crate::tol::Budget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    HybridScan,
    PrsgTd,
    MultikeyTd,
    Impossibility,
    CommitBinding,
    CommitHiding,
    Pgm,
    Typestats,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::HybridScan,
        Experiment::PrsgTd,
        Experiment::MultikeyTd,
        Experiment::Impossibility,
        Experiment::CommitBinding,
        Experiment::CommitHiding,
        Experiment::Pgm,
        Experiment::Typestats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::HybridScan => "hybrid-scan",
            Experiment::PrsgTd => "prsg-td",
            Experiment::MultikeyTd => "multikey-td",
            Experiment::Impossibility => "impossibility",
            Experiment::CommitBinding => "commit-binding",
            Experiment::CommitHiding => "commit-hiding",
            Experiment::Pgm => "pgm",
            Experiment::Typestats => "typestats",
        }
    }

    pub fn about(self) -> &'static str {
        match self {
            Experiment::HybridScan => "trace distances between every pair of generator hybrids",
            Experiment::PrsgTd => {
                "real vs ideal distance of the phase-key generator, with the hybrid chain"
            }
            Experiment::MultikeyTd => "multi-key generator distance and its intermediate chain",
            Experiment::Impossibility => "rank-projector distinguisher for many common copies",
            Experiment::CommitBinding => {
                "sum-binding of the SWAP-test commitment against built-in adversaries"
            }
            Experiment::CommitHiding => "hiding distance of the SWAP-test commitment",
            Experiment::Pgm => "phase-ensemble discrimination with the pretty good measurement",
            Experiment::Typestats => "prefix collision-freeness probability of random types",
        }
    }

    pub fn schema(self) -> &'static [ParamSpec] {
        use Kind::*;
        const LAM: ParamSpec = ParamSpec::uint("lam", "2", "key bits λ");
        const N: ParamSpec = ParamSpec::uint("n", "3", "qubits per register");
        const ELL: ParamSpec = ParamSpec::uint("ell", "1", "generated copies ℓ");
        const T: ParamSpec = ParamSpec::uint("t", "1", "common-state copies t");
        const P: ParamSpec = ParamSpec::uint("p", "2", "keys or commitment copies p");
        const MODE: ParamSpec = ParamSpec {
            name: "mode",
            kind: Choice(&["exact", "sampled"]),
            default: "exact",
            help: "enumerate hybrids exactly or sample them",
        };
        match self {
            Experiment::HybridScan => {
                const S: &[ParamSpec] = &[LAM, N, ELL, T, MODE];
                S
            }
            Experiment::PrsgTd => {
                const S: &[ParamSpec] = &[
                    LAM,
                    N,
                    ELL,
                    T,
                    MODE,
                    ParamSpec::uint("batches", "4", "independent batches in sampled mode"),
                ];
                S
            }
            Experiment::MultikeyTd => {
                const S: &[ParamSpec] = &[LAM, N, ELL, T, P];
                S
            }
            Experiment::Impossibility => {
                const S: &[ParamSpec] = &[
                    ParamSpec::uint("lam", "1", "key bits λ"),
                    ParamSpec::uint("n", "2", "qubits per register"),
                    ELL,
                    T,
                ];
                S
            }
            Experiment::CommitBinding => {
                const S: &[ParamSpec] = &[
                    ParamSpec::uint("lam", "1", "security parameter λ"),
                    ParamSpec::uint("n", "2", "qubits per register"),
                    P,
                    ParamSpec {
                        name: "adversary",
                        kind: Choice(&[
                            "all",
                            "honest-0",
                            "honest-1",
                            "half-angle",
                            "random-unitary",
                        ]),
                        default: "all",
                        help: "committer strategy",
                    },
                ];
                S
            }
            Experiment::CommitHiding => {
                const S: &[ParamSpec] =
                    &[LAM, N, ParamSpec::uint("p", "1", "commitment copies p"), T];
                S
            }
            Experiment::Pgm => {
                const S: &[ParamSpec] = &[
                    ParamSpec::uint("n", "2", "qubits, d = 2^n"),
                    ParamSpec::uint("m", "1", "extra copies m"),
                    ParamSpec {
                        name: "measure",
                        kind: Choice(&["both", "bound", "guess"]),
                        default: "both",
                        help: "which quantities to compute",
                    },
                ];
                S
            }
            Experiment::Typestats => {
                const S: &[ParamSpec] = &[
                    ParamSpec::uint("lam", "4", "prefix bits λ"),
                    ParamSpec::uint("m_suffix", "0", "suffix bits m′"),
                    ELL,
                    ParamSpec::uint("t", "3", "type size t"),
                ];
                S
            }
        }
    }

    pub fn spec(self, name: &str) -> Option<&'static ParamSpec> {
        self.schema().iter().find(|s| s.name == name)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
                LabError::Config(format!(
                    "unknown experiment {s:?}; expected one of {names:?}"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    UInt,
    Choice(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: Kind,
    pub default: &'static str,
    pub help: &'static str,
}

impl ParamSpec {
    const fn uint(name: &'static str, default: &'static str, help: &'static str) -> Self {
        ParamSpec {
            name,
            kind: Kind::UInt,
            default,
            help,
        }
    }

    fn validate(&self, value: &str) -> Result<()> {
        match self.kind {
            Kind::UInt => value.parse::<u32>().map(|_| ()).map_err(|_| {
                LabError::Config(format!(
                    "parameter {} = {value:?} is not a non-negative integer",
                    self.name
                ))
            }),
            Kind::Choice(options) if options.contains(&value) => Ok(()),
            Kind::Choice(options) => Err(LabError::Config(format!(
                "parameter {} = {value:?} is not one of {options:?}",
                self.name
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

impl FromStr for Format {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(LabError::Config(format!(
                "unknown format {s:?}; expected csv or json"
            ))),
        }
    }
}

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_TRIALS: u64 = 1000;

/// One experiment run. `params` holds raw values; [`ExperimentConfig::validate`]
/// checks them against the experiment's schema.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    pub trials: u64,
    pub output_path: Option<PathBuf>,
    pub format: Format,
    pub budget: Budget,
    /// Stamp wall-clock time into the report. Off by default so that reports
    /// are byte-reproducible.
    pub record_duration: bool,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            params: BTreeMap::new(),
            seed: DEFAULT_SEED,
            trials: DEFAULT_TRIALS,
            output_path: None,
            format: Format::default(),
            budget: Budget::default(),
            record_duration: false,
        }
    }

    pub fn with_param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Check every parameter against the schema and fill in defaults.
    pub fn validate(&self) -> Result<Params> {
        let schema = self.experiment.schema();
        for key in self.params.keys() {
            if !schema.iter().any(|s| s.name == key) {
                let names: Vec<_> = schema.iter().map(|s| s.name).collect();
                return Err(LabError::Config(format!(
                    "{} has no parameter {key:?}; known: {names:?}",
                    self.experiment
                )));
            }
        }
        if self.trials == 0 {
            return Err(LabError::Config("trials must be at least 1".into()));
        }
        let mut values = BTreeMap::new();
        for spec in schema {
            let v = self
                .params
                .get(spec.name)
                .map_or(spec.default, String::as_str);
            spec.validate(v)?;
            values.insert(spec.name, v.to_string());
        }
        Ok(Params { values })
    }

    /// Read a JSON config file. Missing fields take their defaults.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ConfigFile::parse(&text)?.into_config(None)
    }
}

/// Schema-checked parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    values: BTreeMap<&'static str, String>,
}

impl Params {
    pub fn str(&self, name: &str) -> &str {
        self.values
            .get(name)
            .map(String::as_str)
            .unwrap_or_else(|| panic!("{name} is not in the schema"))
    }

    pub fn u32(&self, name: &str) -> u32 {
        self.str(name).parse().expect("validated integer")
    }

    pub fn usize(&self, name: &str) -> usize {
        self.u32(name) as usize
    }
}

/// On-disk mirror of the command-line flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub output_path: Option<PathBuf>,
    pub format: Option<Format>,
    pub budget: Option<Budget>,
    pub record_duration: Option<bool>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::Config(format!("config file: {e}")))
    }

    /// Resolve into a config. `experiment` overrides the file's value.
    pub fn into_config(self, experiment: Option<Experiment>) -> Result<ExperimentConfig> {
        let exp = match (experiment, &self.experiment) {
            (Some(e), _) => e,
            (None, Some(name)) => name.parse()?,
            (None, None) => return Err(LabError::Config("config names no experiment".into())),
        };
        let mut cfg = ExperimentConfig::new(exp);
        for (k, v) in self.params {
            let s = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                other => {
                    return Err(LabError::Config(format!(
                        "parameter {k} has unsupported value {other}"
                    )))
                }
            };
            cfg.params.insert(k, s);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        cfg.output_path = self.output_path;
        if let Some(f) = self.format {
            cfg.format = f;
        }
        if let Some(b) = self.budget {
            cfg.budget = b;
        }
        if let Some(d) = self.record_duration {
            cfg.record_duration = d;
        }
        Ok(cfg)
    }
}
