//! Run configuration, read from TOML.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use vislit_core::qbank::BankOptions;
use vislit_core::runner::{BackendConfig, BackendKind, Experiment, OrderStrategy};
use vislit_core::stats::logistic::HyperParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default = "d_chart_seed")]
    pub chart: u64,
    #[serde(default = "d_shuffle_seed")]
    pub shuffle: u64,
    #[serde(default = "d_bootstrap_seed")]
    pub bootstrap: u64,
}

fn d_chart_seed() -> u64 {
    2024
}
fn d_shuffle_seed() -> u64 {
    17
}
fn d_bootstrap_seed() -> u64 {
    29
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { chart: d_chart_seed(), shuffle: d_shuffle_seed(), bootstrap: d_bootstrap_seed() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Experiments pooled into the logistic model.
    #[serde(default = "d_pool")]
    pub experiments: Vec<Experiment>,
    #[serde(default = "d_true")]
    pub tune: bool,
    /// Fraction of rows kept for tuning.
    #[serde(default = "d_one")]
    pub tune_fraction: f64,
    #[serde(default = "d_ten")]
    pub folds: usize,
    #[serde(default = "d_ten")]
    pub repetitions: usize,
    /// Fixed hyperparameters, used when tuning is off.
    #[serde(default)]
    pub hyper: Option<HyperParams>,
    #[serde(default = "d_resamples")]
    pub resamples: usize,
    #[serde(default = "d_mc")]
    pub mc_draws: usize,
    /// The two LLM ids compared by the difference tests.
    #[serde(default)]
    pub compare: Option<(String, String)>,
}

fn d_pool() -> Vec<Experiment> {
    vec![Experiment::E1, Experiment::E2]
}
fn d_true() -> bool {
    true
}
fn d_one() -> f64 {
    1.0
}
fn d_ten() -> usize {
    10
}
fn d_resamples() -> usize {
    1000
}
fn d_mc() -> usize {
    1_000_000
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            experiments: d_pool(),
            tune: true,
            tune_fraction: 1.0,
            folds: 10,
            repetitions: 10,
            hyper: None,
            resamples: d_resamples(),
            mc_draws: d_mc(),
            compare: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "d_experiments")]
    pub experiments: Vec<Experiment>,
    #[serde(default = "d_n")]
    pub n_per_question: usize,
    #[serde(default)]
    pub order_strategy: OrderStrategy,
    /// CSV of `surface,canonical` pairs; the built-in table when absent.
    #[serde(default)]
    pub synonyms: Option<PathBuf>,
    /// CSV of `question_id,accuracy`; the bundled human baseline when absent.
    #[serde(default)]
    pub baseline: Option<PathBuf>,
    #[serde(default)]
    pub no_baseline: bool,
    #[serde(default)]
    pub bank: BankOptions,
    #[serde(default)]
    pub backends: Vec<BackendConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    /// Extra chart-generation attempts beyond the default.
    #[serde(default)]
    pub chart_max_attempts: Option<u32>,
}

fn d_out() -> PathBuf {
    PathBuf::from("out")
}
fn d_experiments() -> Vec<Experiment> {
    Experiment::ALL.to_vec()
}
fn d_n() -> usize {
    120
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: d_out(),
            seeds: Seeds::default(),
            experiments: d_experiments(),
            n_per_question: d_n(),
            order_strategy: OrderStrategy::Rotations,
            synonyms: None,
            baseline: None,
            no_baseline: false,
            bank: BankOptions::default(),
            backends: vec![
                BackendConfig::mock(BackendKind::MockKnowledge, "gpt", 1),
                BackendConfig::mock(BackendKind::MockKnowledge, "gemini", 2),
            ],
            analysis: AnalysisConfig::default(),
            chart_max_attempts: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        let mut c = RunConfig::from_toml(&text)?;
        // Relative paths in the file are taken relative to the file.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.synonyms, &mut c.baseline].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for b in &mut c.backends {
            if let Some(f) = &b.fixtures {
                if Path::new(f).is_relative() {
                    b.fixtures = Some(base.join(f).display().to_string());
                }
            }
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.n_per_question == 0 {
            return bad("n_per_question must be positive".into());
        }
        let mut ids = BTreeMap::new();
        for b in &self.backends {
            if b.llm_id.is_empty() || b.llm_id.contains([':', '/', '\\']) {
                return bad(format!("invalid llm_id {:?}", b.llm_id));
            }
            if ids.insert(b.llm_id.clone(), ()).is_some() {
                return bad(format!("duplicate llm_id {:?}", b.llm_id));
            }
            if b.max_parallel == 0 {
                return bad(format!("{}: max_parallel must be positive", b.llm_id));
            }
            if b.kind == BackendKind::Replay && b.fixtures.is_none() {
                return bad(format!("{}: replay backend needs a fixtures file", b.llm_id));
            }
        }
        if !(self.analysis.tune_fraction > 0.0 && self.analysis.tune_fraction <= 1.0) {
            return bad("analysis.tune_fraction must be in (0, 1]".into());
        }
        if self.analysis.resamples < vislit_core::stats::hypothesis::MIN_SAMPLES {
            return bad(format!("analysis.resamples must be at least {}", vislit_core::stats::hypothesis::MIN_SAMPLES));
        }
        if self.analysis.folds < 2 || self.analysis.repetitions == 0 {
            return bad("analysis needs at least 2 folds and 1 repetition".into());
        }
        if !self.analysis.tune && self.analysis.hyper.is_none() {
            return bad("analysis.hyper is required when analysis.tune is false".into());
        }
        if let Some(h) = &self.analysis.hyper {
            h.validate().map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        }
        Ok(())
    }

    /// Replace every seed (including mock policy seeds) with one value.
    pub fn override_seed(&mut self, seed: u64) {
        self.seeds = Seeds { chart: seed, shuffle: seed, bootstrap: seed };
        for (i, b) in self.backends.iter_mut().enumerate() {
            b.seed = seed.wrapping_add(i as u64);
        }
    }

    pub fn backend(&self, llm_id: &str) -> Option<&BackendConfig> {
        self.backends.iter().find(|b| b.llm_id == llm_id)
    }

    pub fn experiment_dir(&self, e: Experiment) -> PathBuf {
        self.out_dir.join(e.id())
    }

    pub fn analysis_dir(&self) -> PathBuf {
        self.out_dir.join("analysis")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("n_per_question = 0").is_err());
        assert!(RunConfig::from_toml("unknown_key = 1").is_err());
        let dup = r#"
[[backends]]
kind = "mock-uniform"
llm_id = "a"
[[backends]]
kind = "mock-perfect"
llm_id = "a"
"#;
        assert!(matches!(RunConfig::from_toml(dup), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn minimal_file() {
        let c = RunConfig::from_toml("experiments = [\"e1\"]\n[[backends]]\nkind = \"mock-uniform\"\nllm_id = \"m\"\n").unwrap();
        assert_eq!(c.experiments, vec![Experiment::E1]);
        assert_eq!(c.backends[0].max_parallel, 1);
        assert_eq!(c.backends[0].retry.max_attempts, 3);
    }
}
