//! Versioned run configuration.
//!
//! One TOML file drives every subcommand. Built-in defaults are overridden by
//! the file, and the file by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleConfig, Variant};
use crate::error::{Error, Result};
use crate::io::read_text;
use crate::simbench::{Case, ScenarioSpec};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads; `None` uses every available core. Never affects results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub variant: Variant,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            input: None,
            variant: Variant::DagwBic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub case: Case,
    pub p: usize,
    pub n: usize,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSection {
    pub scenarios: Vec<ScenarioEntry>,
    pub methods: Vec<Variant>,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            scenarios: Vec::new(),
            methods: vec![Variant::DagwBic, Variant::Dagw, Variant::Mle, Variant::Bayes],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub case: Case,
    pub p: usize,
    pub n: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            case: Case::Banded,
            p: 30,
            n: 100,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: None,
            workers: None,
            out: None,
            ensemble: EnsembleConfig::default(),
            estimate: EstimateSection::default(),
            benchmark: BenchmarkSection::default(),
            simulate: SimulateSection::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub variant: Option<Variant>,
    pub k: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0),
            msg: e.message().to_string(),
        })?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?).map_err(|e| match e {
            Error::Parse { line, msg } => Error::Parse {
                line,
                msg: format!("{}: {msg}", path.display()),
            },
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(w) = o.workers {
            self.workers = Some(w);
        }
        if let Some(v) = o.variant {
            self.estimate.variant = v;
        }
        if let Some(k) = o.k {
            self.ensemble.k = k;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.selection.validate()?;
        if self.ensemble.k < 1 {
            return Err(Error::InvalidArgument("K must be >= 1".into()));
        }
        if self.ensemble.grid_size < 1 {
            return Err(Error::InvalidArgument("grid_size must be >= 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidArgument("workers must be >= 1".into()));
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::InvalidArgument("a seed is required (--seed or `seed` in the config)".into()))
    }

    /// Scenario list with the run seed filled in.
    pub fn scenarios(&self) -> Result<Vec<ScenarioSpec>> {
        let seed = self.require_seed()?;
        if self.benchmark.scenarios.is_empty() {
            return Err(Error::InvalidArgument("no benchmark scenarios configured".into()));
        }
        if self.benchmark.methods.is_empty() {
            return Err(Error::InvalidArgument("empty method list".into()));
        }
        self.benchmark
            .scenarios
            .iter()
            .map(|e| {
                let spec = ScenarioSpec {
                    case: e.case,
                    p: e.p,
                    n: e.n,
                    reps: e.reps,
                    seed,
                };
                spec.validate()?;
                Ok(spec)
            })
            .collect()
    }

    /// Copy without the settings that cannot change results (workers, output
    /// directory).
    fn result_relevant(&self) -> Self {
        let mut c = self.clone();
        c.workers = None;
        c.out = None;
        c
    }

    /// The result-relevant configuration as TOML.
    pub fn echo(&self) -> String {
        toml::to_string(&self.result_relevant()).expect("config serializes")
    }

    /// The result-relevant configuration as JSON.
    pub fn echo_json(&self) -> serde_json::Value {
        serde_json::to_value(self.result_relevant()).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = RunConfig::parse("version = 1\n").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn full_config() {
        let text = r#"
version = 1
seed = 7
workers = 2

[ensemble]
k = 25
grid_size = 40

[ensemble.selection]
sss_iters = 10

[ensemble.prior]
shape_offset = 12.0

[estimate]
input = "data.txt"
variant = "bayes"

[benchmark]
methods = ["dagw-bic", "mle"]

[[benchmark.scenarios]]
case = "banded"
p = 30
n = 100
reps = 20
"#;
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.ensemble.k, 25);
        assert_eq!(c.ensemble.selection.sss_iters, 10);
        assert_eq!(c.ensemble.selection.cv_folds, 10);
        assert_eq!(c.ensemble.prior.shape_offset, 12.0);
        assert_eq!(c.estimate.variant, Variant::Bayes);
        let s = c.scenarios().unwrap();
        assert_eq!(s[0].seed, 7);
        assert_eq!(s[0].case, Case::Banded);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("version = 1\nfoo = 2\n").is_err());
        assert!(RunConfig::parse("version = 1\n[ensemble]\nkk = 2\n").is_err());
        assert!(RunConfig::parse("version = 1\n[ensemble.selection]\nseeed = 2\n").is_err());
    }

    #[test]
    fn version_checked() {
        assert!(RunConfig::parse("").is_err());
        assert!(RunConfig::parse("version = 2\n").is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut c = RunConfig::parse("version = 1\nseed = 1\n[ensemble]\nk = 5\n").unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            k: Some(3),
            variant: Some(Variant::Mle),
            ..Default::default()
        });
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.ensemble.k, 3);
        assert_eq!(c.estimate.variant, Variant::Mle);
    }

    #[test]
    fn benchmark_needs_seed_and_methods() {
        let mut c = RunConfig::default();
        c.benchmark.scenarios.push(ScenarioEntry {
            case: Case::Ar,
            p: 10,
            n: 50,
            reps: 1,
        });
        assert!(c.scenarios().is_err());
        c.seed = Some(1);
        assert!(c.scenarios().is_ok());
        c.benchmark.methods.clear();
        assert!(c.scenarios().is_err());
    }

    #[test]
    fn echo_omits_workers_and_round_trips() {
        let mut c = RunConfig::default();
        c.seed = Some(3);
        c.workers = Some(8);
        c.out = Some(PathBuf::from("somewhere"));
        let echo = c.echo();
        assert!(!echo.contains("workers"));
        assert!(!echo.contains("somewhere"));
        let back = RunConfig::parse(&echo).unwrap();
        assert_eq!(back.seed, Some(3));
        assert_eq!(back.workers, None);
    }
}
