//! TOML configuration with command-line overrides.
//!
//! ```toml
//! [dataset]
//! path = "argo.csv"                 # or:
//! synthetic = { n = 20000, error_rate = 0.005, seed = 7 }
//!
//! [session]
//! n_initial = 100
//! budget = 250
//! [session.classifier]
//! kind = "gbdt"
//!
//! [experiment]
//! seeds = [1, 2, 3]
//!
//! [init_compare]
//! target_f1 = 0.3
//! grid = [25, 50, 100]
//! ```

use std::path::{Path, PathBuf};

use odeal::data::{generate_synthetic_dataset, parse_observations_csv, Dataset, ProfileShape};
use odeal::eval::{InitExperimentConfig, StrategyExperimentConfig};
use serde::Deserialize;
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Debug, Default)]
pub struct Config {
    table: Table,
    base_dir: PathBuf,
}

/// Flag values that replace config entries when given.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub classifier: Option<String>,
    pub strategy: Option<String>,
    pub init: Option<String>,
    pub k: Option<usize>,
    pub budget: Option<usize>,
    pub ni: Option<Vec<usize>>,
    pub target_f1: Option<f64>,
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SynthFlags {
    pub n: Option<usize>,
    pub error_rate: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthSection {
    n: Option<usize>,
    error_rate: Option<f64>,
    seed: Option<u64>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self { table: Table::new(), base_dir: PathBuf::from(".") }) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let table: Table = text.parse().map_err(|e: toml::de::Error| CliError::config(format!("{}: {}", path.display(), e.message())))?;
        let base_dir = path.parent().map(Path::to_owned).unwrap_or_else(|| PathBuf::from("."));
        Ok(Self { table, base_dir })
    }

    fn section(&self, name: &str) -> Result<Table, CliError> {
        match self.table.get(name) {
            None => Ok(Table::new()),
            Some(Value::Table(t)) => Ok(t.clone()),
            Some(_) => Err(CliError::config(format!("`{name}` must be a table"))),
        }
    }

    fn synth_section(&self) -> Result<Option<SynthSection>, CliError> {
        match self.section("dataset")?.get("synthetic") {
            None => Ok(None),
            Some(v) => {
                v.clone().try_into().map(Some).map_err(|e: toml::de::Error| CliError::config(format!("dataset.synthetic: {}", e.message())))
            }
        }
    }

    /// Synthetic parameters from flags, falling back to `[dataset.synthetic]`.
    pub fn synth_params(&self, flags: SynthFlags) -> Result<Option<(usize, f64, u64)>, CliError> {
        let section = self.synth_section()?.unwrap_or_default();
        let n = flags.n.or(section.n);
        let rate = flags.error_rate.or(section.error_rate);
        match (n, rate) {
            (None, None) => Ok(None),
            (Some(n), Some(rate)) => Ok(Some((n, rate, flags.seed.or(section.seed).unwrap_or(0)))),
            (None, Some(_)) => Err(CliError::config("synthetic data needs `n` (--n)")),
            (Some(_), None) => Err(CliError::config("synthetic data needs `error_rate` (--error-rate)")),
        }
    }

    /// The dataset named by `--data`, `[dataset] path`, or synthetic flags.
    pub fn dataset(&self, data: Option<&Path>, flags: SynthFlags) -> Result<Dataset, CliError> {
        let path = match data {
            Some(p) => Some(p.to_owned()),
            None => match self.section("dataset")?.get("path") {
                Some(Value::String(p)) => Some(self.base_dir.join(p)),
                Some(_) => return Err(CliError::config("dataset.path must be a string")),
                None => None,
            },
        };
        if let Some(path) = path {
            return read_dataset(&path);
        }
        match self.synth_params(flags)? {
            Some((n, rate, seed)) => {
                tracing::info!(n, rate, seed, "generating synthetic dataset");
                Ok(generate_synthetic_dataset(n, rate, seed, &ProfileShape::default()).map_err(odeal::Error::from)?)
            }
            None => Err(CliError::config("no dataset: pass --data, --n with --error-rate, or a [dataset] section")),
        }
    }

    pub fn strategy_experiment(&self, o: &Overrides) -> Result<StrategyExperimentConfig, CliError> {
        let mut t = self.section("session")?;
        t.extend(self.section("experiment")?);
        apply_common(&mut t, o)?;
        if let Some(s) = &o.strategy {
            t.insert("baseline".into(), Value::String(s.clone()));
        }
        if let Some(ni) = &o.ni {
            let [n] = ni.as_slice() else { return Err(CliError::config("--ni takes a single size for `experiment`")) };
            t.insert("n_initial".into(), int(*n));
        }
        if let Some(b) = o.budget {
            t.insert("budget".into(), int(b));
        }
        if let Some(init) = &o.init {
            t.insert("init".into(), Value::String(init.clone()));
        }
        deserialize(t)
    }

    pub fn init_experiment(&self, o: &Overrides) -> Result<InitExperimentConfig, CliError> {
        let mut t = self.section("session")?;
        t.extend(self.section("init_compare")?);
        apply_common(&mut t, o)?;
        if let Some(s) = &o.strategy {
            t.insert("strategy".into(), Value::String(s.clone()));
        }
        if let Some(ni) = &o.ni {
            t.insert("grid".into(), Value::Array(ni.iter().map(|&n| int(n)).collect()));
        }
        if let Some(b) = o.budget {
            t.insert("max_queries".into(), int(b));
        }
        if let Some(init) = &o.init {
            t.insert("outlier_arm".into(), Value::String(init.clone()));
        }
        if let Some(f) = o.target_f1 {
            t.insert("target_f1".into(), Value::Float(f));
        }
        deserialize(t)
    }
}

fn int(n: impl TryInto<i64>) -> Value {
    Value::Integer(n.try_into().unwrap_or(i64::MAX))
}

fn apply_common(t: &mut Table, o: &Overrides) -> Result<(), CliError> {
    if let Some(kind) = &o.classifier {
        // keep tuned parameters when the kind is unchanged
        let same = matches!(t.get("classifier"), Some(Value::Table(c)) if c.get("kind").and_then(Value::as_str) == Some(kind.as_str()));
        if !same {
            let mut c = Table::new();
            c.insert("kind".into(), Value::String(kind.clone()));
            t.insert("classifier".into(), Value::Table(c));
        }
    }
    if let Some(k) = o.k {
        t.insert("k".into(), int(k));
    }
    if let Some(seeds) = &o.seeds {
        t.insert("seeds".into(), Value::Array(seeds.iter().map(|&s| int(s)).collect()));
    }
    Ok(())
}

fn deserialize<T: serde::de::DeserializeOwned>(t: Table) -> Result<T, CliError> {
    Value::Table(t).try_into().map_err(|e: toml::de::Error| CliError::config(e.message().to_owned()))
}

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    parse_observations_csv(path).map_err(|source| CliError::Data { path: path.to_owned(), source })
}
