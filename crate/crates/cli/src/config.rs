//! Experiment configuration files.
//!
//! Configs are TOML. Top-level keys describe the instance and the batch,
//! each `[[policy]]` table is one policy spec, and the optional `[bounds]`
//! table drives the `bounds` subcommand. A `meta.json` written by `run` is
//! accepted in place of a config; its `config` object is used.

use std::path::Path;

use serde::{Deserialize, Serialize};

use robai::{BanditInstance, Policy, PolicySpec, RewardFamily};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub family: RewardFamily,
    pub means: Vec<f64>,
    pub horizon: u64,
    pub iterations: u64,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    /// Number of log-spaced checkpoints.
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
    #[serde(default = "default_paired")]
    pub paired_streams: bool,
    #[serde(default, rename = "policy")]
    pub policies: Vec<PolicySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    /// Horizons to tabulate; the experiment horizon when empty.
    #[serde(default)]
    pub t_grid: Vec<u64>,
    /// Regret-violation exponent for the adaptive commitment lower bound.
    #[serde(default = "default_c")]
    pub c: f64,
}

fn default_seed() -> u64 {
    1
}

fn default_checkpoints() -> usize {
    100
}

fn default_paired() -> bool {
    true
}

fn default_c() -> f64 {
    0.5
}

fn field(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Invalid(format!("{name}: {msg}"))
}

impl ExperimentConfig {
    /// Parse a TOML config, or the `config` object of a `meta.json`.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config = if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct Meta {
                config: ExperimentConfig,
            }
            serde_json::from_str::<Meta>(&text)
                .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?
                .config
        } else {
            Self::from_toml(&text).map_err(|e| match e {
                CliError::Invalid(m) => CliError::Invalid(format!("{}: {m}", path.display())),
                other => other,
            })?
        };
        Ok(config)
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Invalid(e.to_string()))
    }

    pub fn instance(&self) -> CliResult<BanditInstance> {
        BanditInstance::new(self.family, self.means.clone()).map_err(|e| field("means", e))
    }

    /// Check every field against the simulator's preconditions.
    pub fn validate(&self) -> CliResult<()> {
        let instance = self.instance()?;
        if self.horizon < instance.num_arms() as u64 {
            return Err(field(
                "horizon",
                format!(
                    "{} is shorter than the {} arms",
                    self.horizon,
                    instance.num_arms()
                ),
            ));
        }
        if self.iterations == 0 {
            return Err(field("iterations", "must be at least 1"));
        }
        if self.checkpoints == 0 {
            return Err(field("checkpoints", "must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(field("policy", "at least one [[policy]] table is required"));
        }
        for (i, spec) in self.policies.iter().enumerate() {
            Policy::new(spec.clone(), self.family, instance.num_arms(), self.horizon)
                .map_err(|e| field(&format!("policy[{i}] ({})", spec.name()), e))?;
            if self.policies[..i].iter().any(|p| p.name() == spec.name()) {
                return Err(field(
                    &format!("policy[{i}]"),
                    format!("duplicate name {:?}; set a distinct label", spec.name()),
                ));
            }
        }
        if let Some(b) = &self.bounds {
            if let Some(&t) = b.t_grid.iter().find(|&&t| t < 3) {
                return Err(field(
                    "bounds.t_grid",
                    format!("horizons must be at least 3, got {t}"),
                ));
            }
            if !(b.c > 0.0 && b.c < 1.0) {
                return Err(field(
                    "bounds.c",
                    format!("must lie in (0, 1), got {}", b.c),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        family = "gaussian"
        means = [0.7, 0.2]
        horizon = 1000
        iterations = 10

        [[policy]]
        algorithm = "eocp"
        delta_lb = 0.5
    "#;

    fn err(text: &str) -> String {
        let c = ExperimentConfig::from_toml(text).and_then(|c| c.validate().map(|_| c));
        match c {
            Err(CliError::Invalid(m)) => m,
            other => panic!("expected an invalid-config error, got {other:?}"),
        }
    }

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml(BASE).unwrap();
        c.validate().unwrap();
        assert_eq!(
            (c.master_seed, c.checkpoints, c.paired_streams),
            (1, 100, true)
        );
        assert_eq!(c.policies, vec![PolicySpec::eocp(0.5)]);
    }

    #[test]
    fn errors_name_the_field() {
        assert!(err(&BASE.replace("[0.7, 0.2]", "[0.7, 0.7]")).starts_with("means"));
        assert!(err(&BASE.replace("horizon = 1000", "horizon = 1")).starts_with("horizon"));
        assert!(err(&BASE.replace("iterations = 10", "iterations = 0")).starts_with("iterations"));
        assert!(
            err(&BASE.replace("delta_lb = 0.5", "delta_lb = 2.0")).starts_with("policy[0] (eocp)")
        );
        let empty = BASE.split("[[policy]]").next().unwrap();
        assert!(err(empty).starts_with("policy"));
        let dup = format!("{BASE}\n[[policy]]\nalgorithm = \"eocp\"\ndelta_lb = 0.25\n");
        assert!(err(&dup).contains("duplicate"));
        let bad_c = format!("{BASE}\n[bounds]\nc = 1.5\n");
        assert!(err(&bad_c).starts_with("bounds.c"));
        assert!(err(&BASE.replace("eocp", "nope")).contains("nope"));
        assert!(err(&format!("colour = 3\n{BASE}")).contains("colour"));
    }
}
