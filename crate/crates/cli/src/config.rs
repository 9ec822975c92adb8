use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use jobsignal_core::counterfactual::SolverConfig;
use jobsignal_core::measurement::Era;
use jobsignal_core::simulator::generator::GeneratorConfig;
use serde::{Deserialize, Serialize};

use crate::PipelineError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Simulate,
    Measure,
    Consider,
    FitReduced,
    FitCopula,
    BuildPool,
    InvertSupply,
    FitBeliefs,
    FitDemand,
    Counterfactual,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Simulate,
        Stage::Measure,
        Stage::Consider,
        Stage::FitReduced,
        Stage::FitCopula,
        Stage::BuildPool,
        Stage::InvertSupply,
        Stage::FitBeliefs,
        Stage::FitDemand,
        Stage::Counterfactual,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Measure => "measure",
            Stage::Consider => "consider",
            Stage::FitReduced => "fit-reduced",
            Stage::FitCopula => "fit-copula",
            Stage::BuildPool => "build-pool",
            Stage::InvertSupply => "invert-supply",
            Stage::FitBeliefs => "fit-beliefs",
            Stage::FitDemand => "fit-demand",
            Stage::Counterfactual => "counterfactual",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown stage `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSection {
    /// Jobs in the simulation pool (M).
    pub pool_jobs: usize,
    pub n_bins: usize,
    /// Gradient tolerance of the likelihood fits.
    pub grad_tol: f64,
}

impl Default for EstimationSection {
    fn default() -> Self {
        Self { pool_jobs: 2000, n_bins: jobsignal_core::beliefs::DEFAULT_BINS, grad_tol: 1e-7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterfactualSection {
    pub n_jobs: usize,
    /// Type quantiles kept at each end when resampling recovered types.
    pub truncation: f64,
}

impl Default for CounterfactualSection {
    fn default() -> Self {
        Self { n_jobs: 2000, truncation: 0.005 }
    }
}

/// The whole pipeline configuration, read from one TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Stages run by `run`, in order.
    pub stages: Vec<Stage>,
    /// Raw application records; defaults to the simulate output.
    pub input: Option<PathBuf>,
    pub era: Era,
    /// Consideration size threshold for the era; computed from the data when absent.
    pub size_threshold: Option<f64>,
    pub simulate: GeneratorConfig,
    pub estimation: EstimationSection,
    pub solver: SolverConfig,
    pub counterfactual: CounterfactualSection,
    /// Structural parameter overrides applied before the counterfactual
    /// stage, by flat parameter name (`beta`, `t.<group>`, ...).
    pub overrides: BTreeMap<String, f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: GeneratorConfig::default().seed,
            out: PathBuf::from("out"),
            stages: Stage::ALL.to_vec(),
            input: None,
            era: Era::PreLLM,
            size_threshold: None,
            simulate: GeneratorConfig::default(),
            estimation: EstimationSection::default(),
            solver: SolverConfig::default(),
            counterfactual: CounterfactualSection::default(),
            overrides: BTreeMap::new(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative paths are taken from the config file's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        if let Some(i) = cfg.input.as_mut().filter(|i| i.is_relative()) {
            *i = base.join(&*i);
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ALL {
            assert_eq!(s.name().parse::<Stage>().unwrap(), s);
            let toml = format!("stages = [\"{}\"]", s.name());
            assert_eq!(PipelineConfig::from_toml(&toml).unwrap().stages, vec![s]);
        }
        assert!("fit_reduced".parse::<Stage>().is_err());
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg = PipelineConfig::from_toml("seed = 5\n[simulate]\nn_jobs = 10\n[solver]\ntol = 0.01\n").unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.simulate.n_jobs, 10);
        assert_eq!(cfg.simulate.alpha, GeneratorConfig::default().alpha);
        assert_eq!(cfg.solver.tol, 0.01);
        assert_eq!(cfg.solver.max_iter, 200);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = PipelineConfig::from_toml("[estimation]\npool_size = 3\n").unwrap_err().to_string();
        assert!(err.contains("pool_size"), "{err}");
    }
}
