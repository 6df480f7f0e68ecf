//! The experiment configuration document and its defaults.
//!
//! Every field has a default, so the CLI runs without a configuration file;
//! command-line flags override the file. The shipped `config/default.json`
//! matches `ExperimentConfig::default()` exactly (a test pins this).

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use cpumdp::scenarios::{RewardRules, ScenarioSpec};
use cpumdp::{EnergyModel, ProcessKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSection,
    pub solver: SolverSection,
    pub simulation: SimulationSection,
    pub energy: EnergyModel<f64>,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSection {
    #[serde(flatten)]
    pub spec: ScenarioSpec,
    /// Explicitly pin the built-in table probabilities; conflicts with any
    /// `p_change*` field.
    pub table_default: bool,
    pub rewards: RewardRules,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            spec: ScenarioSpec::table_default(ProcessKind::Sdr),
            table_default: false,
            rewards: RewardRules::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSection {
    pub epsilon: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            epsilon: 1e-3,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSection {
    pub runs: u64,
    pub steps: u64,
    /// Starting load state; defaults to the middle state.
    pub init_state: Option<usize>,
    pub master_seed: u64,
    /// Change probability of the single-run reward-curve output; defaults
    /// to 0.1 for SDR and 0.7 for SDN.
    pub curve_p: Option<f64>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            runs: 10_000,
            steps: 1_000,
            init_state: None,
            master_seed: 42,
            curve_p: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum OutputFormat {
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "json")]
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("out"),
            format: OutputFormat::Csv,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading configuration {}", path.display()))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing configuration {}", path.display()))?;
        config.check()?;
        Ok(config)
    }

    /// Cross-field checks that serde cannot express.
    pub fn check(&self) -> Result<()> {
        let scenario = &self.scenario;
        if scenario.table_default
            && (scenario.spec.p_change.is_some()
                || scenario.spec.p_change_add.is_some()
                || scenario.spec.p_change_remove.is_some())
        {
            bail!("scenario.table_default conflicts with explicit p_change fields");
        }
        if !(self.solver.epsilon > 0.0) || !self.solver.epsilon.is_finite() {
            bail!("solver.epsilon must be positive, got {}", self.solver.epsilon);
        }
        if self.solver.max_iter == 0 {
            bail!("solver.max_iter must be at least 1");
        }
        if self.simulation.runs == 0 {
            bail!("simulation.runs must be at least 1");
        }
        if self.simulation.steps == 0 {
            bail!("simulation.steps must be at least 1");
        }
        if let Some(init) = self.simulation.init_state {
            if init >= self.scenario.spec.n_states {
                bail!(
                    "simulation.init_state {init} out of range for {} states",
                    self.scenario.spec.n_states
                );
            }
        }
        if let Some(p) = self.simulation.curve_p {
            if !(p > 0.0 && p < 1.0) {
                bail!("simulation.curve_p must lie strictly in (0, 1), got {p}");
            }
        }
        self.energy
            .check()
            .context("energy section is invalid")?;
        Ok(())
    }

    /// Starting state for simulations: configured, or the middle load state.
    pub fn init_state_for(&self, n_states: usize) -> usize {
        self.simulation.init_state.unwrap_or(n_states / 2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let config = ExperimentConfig::default();
        config.check().unwrap();
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn empty_document_is_all_defaults() {
        let config: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(config, ExperimentConfig::default());
        assert_eq!(config.scenario.spec.kind, ProcessKind::Sdr);
        assert_eq!(config.scenario.spec.n_states, 3);
        assert_eq!(config.simulation.master_seed, 42);
        assert_eq!(config.init_state_for(3), 1);
        assert_eq!(config.init_state_for(4), 2);
    }

    #[test]
    fn scenario_fields_flatten_into_the_section() {
        let config: ExperimentConfig = serde_json::from_str(
            r#"{"scenario": {"kind": "sdn", "n_states": 4, "p_change": 0.7,
                 "rewards": {"good_move": 6.0}}}"#,
        )
        .unwrap();
        assert_eq!(config.scenario.spec.kind, ProcessKind::Sdn);
        assert_eq!(config.scenario.spec.n_states, 4);
        assert_eq!(config.scenario.spec.p_change, Some(0.7));
        assert_eq!(config.scenario.rewards.good_move, 6.0);
        assert_eq!(config.scenario.rewards.bad_move, -5.0);
    }

    #[test]
    fn conflicting_table_default_is_rejected() {
        let config: ExperimentConfig = serde_json::from_str(
            r#"{"scenario": {"table_default": true, "p_change": 0.2}}"#,
        )
        .unwrap();
        assert!(config.check().is_err());
    }

    #[test]
    fn bad_sections_are_rejected() {
        for doc in [
            r#"{"solver": {"epsilon": 0.0}}"#,
            r#"{"solver": {"max_iter": 0}}"#,
            r#"{"simulation": {"runs": 0}}"#,
            r#"{"simulation": {"steps": 0}}"#,
            r#"{"simulation": {"init_state": 7}}"#,
            r#"{"simulation": {"curve_p": 1.0}}"#,
            r#"{"energy": {"watts_per_core": -1.0}}"#,
        ] {
            let config: ExperimentConfig = serde_json::from_str(doc).unwrap();
            assert!(config.check().is_err(), "{doc}");
        }
    }
}
