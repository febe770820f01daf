use std::fs;
use std::path::{Path, PathBuf};

use roadsearch::discriminator::DiscriminatorConfig;
use roadsearch::evolution::GaConfig;
use roadsearch::simulator::{AgentConfig, RoadConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub workdir: PathBuf,
    /// The remaining paths are relative to `workdir` unless absolute.
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    pub population: PathBuf,
    pub tests: PathBuf,
    pub results: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            workdir: "run".into(),
            dataset: "dataset.jsonl".into(),
            checkpoint: "discriminator.json".into(),
            population: "population.jsonl".into(),
            tests: "tests".into(),
            results: "results".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedDataConfig {
    pub n_roads: usize,
    pub val_fraction: f64,
}

impl Default for SeedDataConfig {
    fn default() -> Self {
        Self { n_roads: 2000, val_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub budget_seconds: f64,
    pub n_samples: usize,
    pub novelty_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { budget_seconds: 7200.0, n_samples: 100, novelty_threshold: 0.2 }
    }
}

/// Everything a pipeline run needs. `seed` drives every random stream; the
/// per-module seeds below it are overwritten from it when the file is loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub geometry: RoadConfig,
    pub simulator: AgentConfig,
    pub seed_data: SeedDataConfig,
    pub discriminator: DiscriminatorConfig,
    pub ga: GaConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = Self {
            seed: 0,
            paths: Paths::default(),
            geometry: RoadConfig::default(),
            simulator: AgentConfig::default(),
            seed_data: SeedDataConfig::default(),
            discriminator: DiscriminatorConfig::desk(),
            ga: GaConfig::default(),
            analysis: AnalysisConfig::default(),
        };
        cfg.set_seed(0);
        cfg
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.set_seed(cfg.seed);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        let body = toml::to_string_pretty(self).expect("config is always representable as TOML");
        format!(
            "# Pipeline configuration. `seed` drives every random stream: the seed\n\
             # pool uses it directly, training seed + 1, the GA seed + 2 and budget\n\
             # sampling seed + 3, overwriting the per-module seeds below.\n\n{body}"
        )
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.discriminator.seed = self.train_seed();
        self.ga.rng_seed = self.ga_seed();
    }

    pub fn pool_seed(&self) -> u64 {
        self.seed
    }

    pub fn train_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn ga_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }

    pub fn analysis_seed(&self) -> u64 {
        self.seed.wrapping_add(3)
    }

    pub fn check(&self) -> Result<(), CliError> {
        self.geometry.check()?;
        self.simulator.check()?;
        self.discriminator.check()?;
        self.ga.check()?;
        if self.discriminator.block_size != self.geometry.block_size {
            return Err(CliError::Config(format!(
                "discriminator.block_size ({}) must equal geometry.block_size ({})",
                self.discriminator.block_size, self.geometry.block_size
            )));
        }
        if self.geometry.block_size < 2 * self.ga.swap_len_range[1] {
            return Err(CliError::Config("geometry.block_size must be at least twice ga.swap_len_range max".into()));
        }
        if self.seed_data.n_roads < 2 {
            return Err(CliError::Config("seed_data.n_roads must be at least 2".into()));
        }
        if !(self.seed_data.val_fraction > 0.0 && self.seed_data.val_fraction < 1.0) {
            return Err(CliError::Config("seed_data.val_fraction must lie in (0, 1)".into()));
        }
        if !(self.analysis.budget_seconds > 0.0 && self.analysis.budget_seconds.is_finite()) {
            return Err(CliError::Config("analysis.budget_seconds must be positive".into()));
        }
        if self.analysis.n_samples == 0 {
            return Err(CliError::Config("analysis.n_samples must be positive".into()));
        }
        if !(self.analysis.novelty_threshold >= 0.0) {
            return Err(CliError::Config("analysis.novelty_threshold must be non-negative".into()));
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.paths.workdir.join(p)
        }
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.resolve(&self.paths.dataset)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.resolve(&self.paths.checkpoint)
    }

    pub fn population_path(&self) -> PathBuf {
        self.resolve(&self.paths.population)
    }

    pub fn tests_dir(&self) -> PathBuf {
        self.resolve(&self.paths.tests)
    }

    pub fn results_dir(&self) -> PathBuf {
        self.resolve(&self.paths.results)
    }

    pub fn workdir_file(&self, name: &str) -> PathBuf {
        self.paths.workdir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.check().is_ok());
    }

    #[test]
    fn partial_file_fills_defaults_and_derives_seeds() {
        let mut cfg: RunConfig = toml::from_str("seed = 9\n[ga]\nepochs = 3\n").unwrap();
        cfg.set_seed(cfg.seed);
        assert_eq!(cfg.ga.epochs, 3);
        assert_eq!(cfg.ga.rng_seed, 11);
        assert_eq!(cfg.discriminator.seed, 10);
        assert_eq!(cfg.analysis.budget_seconds, 7200.0);
    }

    #[test]
    fn unknown_keys_and_bad_ranges_rejected() {
        assert!(toml::from_str::<RunConfig>("[ga]\nepoch = 3\n").is_err());
        let mut cfg = RunConfig::default();
        cfg.ga.select_f2 = cfg.ga.select_f1 + 1;
        assert!(cfg.check().is_err());
        let mut cfg = RunConfig::default();
        cfg.discriminator.block_size = 40;
        assert!(cfg.check().is_err());
    }
}
