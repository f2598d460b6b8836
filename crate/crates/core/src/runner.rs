//! Trial planning, prompt construction, trial records and the pure parts of
//! the backends (mock answer policies, pricing, cost summaries).

use crate::chart::ContextMode;
use crate::qbank::{AnswerMode, BankMode, QuestionInstance};
use crate::scoring::option_letter;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const RECORD_SCHEMA_VERSION: u32 = 1;
/// Latencies above this many seconds are treated as outliers.
pub const LATENCY_OUTLIER_S: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunnerError {
    #[error("question {question} has {options} options, which does not divide {n} repetitions")]
    IndivisibleRepetition { question: u8, options: usize, n: u32 },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("transport error: {0}")]
    TransportError(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub vis_present: bool,
    pub choices_present: bool,
    pub context_mode: ContextMode,
    pub llm_id: String,
}

impl Condition {
    pub fn tag(&self) -> String {
        format!(
            "{}:{}:{}",
            if self.vis_present { "vis" } else { "novis" },
            if self.choices_present { "choices" } else { "open" },
            match self.context_mode {
                ContextMode::Contextualized => "ctx",
                ContextMode::Decontextualized => "dectx",
            }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    E1,
    E2,
    E3,
    E4,
    E5,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [Experiment::E1, Experiment::E2, Experiment::E3, Experiment::E4, Experiment::E5];

    pub fn id(self) -> &'static str {
        match self {
            Experiment::E1 => "e1",
            Experiment::E2 => "e2",
            Experiment::E3 => "e3",
            Experiment::E4 => "e4",
            Experiment::E5 => "e5",
        }
    }

    pub fn parse(s: &str) -> Option<Experiment> {
        Experiment::ALL.iter().copied().find(|e| e.id().eq_ignore_ascii_case(s))
    }

    pub fn bank_mode(self) -> BankMode {
        match self {
            Experiment::E5 => BankMode::Decontextualized,
            _ => BankMode::Full,
        }
    }

    /// (vis_present, choices_present) pairs run under this experiment.
    pub fn arms(self) -> &'static [(bool, bool)] {
        match self {
            Experiment::E1 => &[(true, true)],
            Experiment::E2 => &[(false, true)],
            Experiment::E3 => &[(true, false)],
            Experiment::E4 => &[(false, false)],
            Experiment::E5 => &[(true, true), (false, true)],
        }
    }

    pub fn conditions(self, llm_id: &str) -> Vec<Condition> {
        let ctx = match self {
            Experiment::E5 => ContextMode::Decontextualized,
            _ => ContextMode::Contextualized,
        };
        self.arms()
            .iter()
            .map(|(v, c)| Condition { vis_present: *v, choices_present: *c, context_mode: ctx, llm_id: llm_id.to_string() })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderStrategy {
    /// Cyclic rotations of the canonical order, each used n/k times.
    #[default]
    Rotations,
    /// Uniformly sampled permutations, for sensitivity studies.
    SampledPermutations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub session_id: String,
    pub experiment: String,
    pub question_id: u8,
    pub condition: Condition,
    /// `option_order[i]` is the canonical option shown at position `i`.
    pub option_order: Option<Vec<usize>>,
    pub repetition: u32,
}

pub fn session_id(experiment: &str, cond: &Condition, question: u8, rep: u32) -> String {
    format!("{experiment}:{}:{}:q{question:02}:r{rep:03}", cond.llm_id, cond.tag())
}

pub fn rotation(k: usize, r: usize) -> Vec<usize> {
    (0..k).map(|i| (i + r) % k).collect()
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, for deriving per-session seeds from ids.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Plan `n_per_question` counterbalanced trials per item, globally shuffled.
pub fn plan_trials(
    bank: &[QuestionInstance],
    condition: &Condition,
    experiment: &str,
    n_per_question: u32,
    shuffle_seed: u64,
    strategy: OrderStrategy,
) -> Result<Vec<TrialPlan>, RunnerError> {
    let mut plans = Vec::with_capacity(bank.len() * n_per_question as usize);
    for q in bank {
        let k = q.options.len();
        if condition.choices_present && strategy == OrderStrategy::Rotations && (k == 0 || n_per_question as usize % k != 0) {
            return Err(RunnerError::IndivisibleRepetition { question: q.id, options: k, n: n_per_question });
        }
        for rep in 0..n_per_question {
            let order = if condition.choices_present {
                Some(match strategy {
                    OrderStrategy::Rotations => rotation(k, rep as usize % k),
                    OrderStrategy::SampledPermutations => {
                        let mut rng = ChaCha8Rng::seed_from_u64(mix(shuffle_seed, q.id as u64, rep as u64));
                        let mut p: Vec<usize> = (0..k).collect();
                        p.shuffle(&mut rng);
                        p
                    }
                })
            } else {
                None
            };
            plans.push(TrialPlan {
                session_id: session_id(experiment, condition, q.id, rep),
                experiment: experiment.to_string(),
                question_id: q.id,
                condition: condition.clone(),
                option_order: order,
                repetition: rep,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    plans.shuffle(&mut rng);
    Ok(plans)
}

// ---------------------------------------------------------------------------
// Prompts

pub const SYSTEM_VIS_CHOICES: &str = "You are a helpful assistant for analyzing data visualizations. Please answer with the letter corresponding to the best option, or make a random guess if unsure. For example, if option (a) is correct, only reply with (a).";
pub const SYSTEM_NOVIS_CHOICES: &str = "You are a helpful assistant for answering questions. Please answer with the letter corresponding to the best option, or make a random guess if unsure. For instance, if option (a) is correct, please reply with (a).";
pub const SYSTEM_VIS_OPEN: &str = "You are a helpful assistant for analyzing data visualizations. Please answer with the best response in one word.";
pub const SYSTEM_NOVIS_OPEN: &str = "You are a helpful assistant for answering questions. Please answer with the best response in one word.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    /// Question text (and options); sent before the image.
    pub user: String,
    /// Chart file stem to attach, when the visualization is present.
    pub image: Option<String>,
}

impl Prompt {
    pub fn full_text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

pub fn system_prompt(cond: &Condition) -> &'static str {
    match (cond.vis_present, cond.choices_present) {
        (true, true) => SYSTEM_VIS_CHOICES,
        (false, true) => SYSTEM_NOVIS_CHOICES,
        (true, false) => SYSTEM_VIS_OPEN,
        (false, false) => SYSTEM_NOVIS_OPEN,
    }
}

pub fn build_prompt(plan: &TrialPlan, q: &QuestionInstance) -> Prompt {
    let mut user = q.stem.clone();
    if let Some(order) = &plan.option_order {
        for (pos, &canon) in order.iter().enumerate() {
            user.push_str(&format!("\n({}) {}", option_letter(pos), q.options[canon]));
        }
    }
    Prompt {
        system: system_prompt(&plan.condition).to_string(),
        user,
        image: plan.condition.vis_present.then(|| q.chart_file.clone()),
    }
}

// ---------------------------------------------------------------------------
// Records and backend configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub session_id: String,
    pub experiment: String,
    pub question_id: u8,
    pub condition: Condition,
    pub repetition: u32,
    pub option_order: Option<Vec<usize>>,
    pub prompt_text: String,
    pub image_attached: bool,
    pub raw_response: String,
    pub latency_s: f64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost: f64,
    pub timestamp_ms: u64,
    pub backend_id: String,
    pub model: String,
    pub attempts: u32,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    LiveHttp,
    Replay,
    MockUniform,
    MockPerfect,
    MockKnowledge,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::LiveHttp => "live-http",
            BackendKind::Replay => "replay",
            BackendKind::MockUniform => "mock-uniform",
            BackendKind::MockPerfect => "mock-perfect",
            BackendKind::MockKnowledge => "mock-knowledge",
        }
    }

    pub fn parse(s: &str) -> Option<BackendKind> {
        [
            BackendKind::LiveHttp,
            BackendKind::Replay,
            BackendKind::MockUniform,
            BackendKind::MockPerfect,
            BackendKind::MockKnowledge,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provider {
    /// Chat-completions style endpoint with an image data URL.
    #[default]
    #[serde(rename = "openai")]
    OpenAi,
    /// generateContent style endpoint with inline image data.
    Gemini,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_s: f64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, initial_backoff_s: 2.0, multiplier: 2.0 }
    }
}

impl RetryPolicy {
    /// Wait before retry `n` (1-based).
    pub fn backoff(&self, n: u32) -> f64 {
        self.initial_backoff_s * libm::pow(self.multiplier, n.saturating_sub(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Pricing {
    #[serde(default)]
    pub per_call: f64,
    #[serde(default)]
    pub per_image: f64,
    #[serde(default)]
    pub per_1k_prompt_tokens: f64,
    #[serde(default)]
    pub per_1k_completion_tokens: f64,
}

impl Pricing {
    pub fn cost(&self, image: bool, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        self.per_call
            + if image { self.per_image } else { 0.0 }
            + self.per_1k_prompt_tokens * prompt_tokens as f64 / 1000.0
            + self.per_1k_completion_tokens * completion_tokens as f64 / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockParams {
    /// Accuracy of the knowledge mock with and without the chart.
    pub p_correct_vis: f64,
    pub p_correct_novis: f64,
    /// Mean of the simulated latency in seconds.
    pub latency_mean_s: f64,
}

impl Default for MockParams {
    fn default() -> Self {
        MockParams { p_correct_vis: 0.6, p_correct_novis: 0.35, latency_mean_s: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Identifier recorded as the LLM dimension (e.g. "gpt", "gemini").
    pub llm_id: String,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Model used when the chart is attached.
    #[serde(default)]
    pub model: String,
    /// Model used for text-only trials; falls back to `model`.
    #[serde(default)]
    pub text_model: Option<String>,
    #[serde(default)]
    pub provider: Provider,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "one")]
    pub max_parallel: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub rate_limit_per_min: Option<u32>,
    #[serde(default)]
    pub pricing: Pricing,
    #[serde(default)]
    pub mock: MockParams,
    /// Seed for mock answer policies.
    #[serde(default)]
    pub seed: u64,
    /// Replay fixture file (JSON lines keyed by session id).
    #[serde(default)]
    pub fixtures: Option<String>,
    #[serde(default)]
    pub timeout_s: Option<f64>,
}

fn one() -> usize {
    1
}

impl BackendConfig {
    pub fn mock(kind: BackendKind, llm_id: &str, seed: u64) -> BackendConfig {
        BackendConfig {
            kind,
            llm_id: llm_id.to_string(),
            endpoint: None,
            model: format!("{}-{}", kind.as_str(), llm_id),
            text_model: None,
            provider: Provider::OpenAi,
            api_key_env: None,
            max_parallel: 1,
            retry: RetryPolicy::default(),
            rate_limit_per_min: None,
            pricing: Pricing { per_call: 0.01, ..Default::default() },
            mock: MockParams::default(),
            seed,
            fixtures: None,
            timeout_s: None,
        }
    }

    pub fn model_for(&self, vis: bool) -> &str {
        if vis {
            &self.model
        } else {
            self.text_model.as_deref().unwrap_or(&self.model)
        }
    }
}

// ---------------------------------------------------------------------------
// Mock answer policies

#[derive(Debug, Clone, PartialEq)]
pub struct MockReply {
    pub text: String,
    pub latency_s: f64,
}

fn correct_text(plan: &TrialPlan, q: &QuestionInstance) -> String {
    match &plan.option_order {
        Some(order) => {
            let pos = order.iter().position(|&c| c == q.correct_index).unwrap_or(0);
            format!("({})", option_letter(pos))
        }
        None => q.truth.display(),
    }
}

fn uniform_text(rng: &mut ChaCha8Rng, plan: &TrialPlan, q: &QuestionInstance) -> String {
    match &plan.option_order {
        Some(order) => format!("({})", option_letter(rng.random_range(0..order.len()))),
        None => {
            // Without choices, guess among the option texts.
            let i = rng.random_range(0..q.options.len().max(1));
            q.options.get(i).cloned().unwrap_or_default()
        }
    }
}

/// Deterministic reply of a mock backend for one planned trial.
pub fn mock_reply(kind: BackendKind, cfg: &BackendConfig, plan: &TrialPlan, q: &QuestionInstance) -> Option<MockReply> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(&plan.session_id) ^ mix(cfg.seed, 0x51, 0));
    let text = match kind {
        BackendKind::MockPerfect => correct_text(plan, q),
        BackendKind::MockUniform => uniform_text(&mut rng, plan, q),
        BackendKind::MockKnowledge => {
            let p = if plan.condition.vis_present { cfg.mock.p_correct_vis } else { cfg.mock.p_correct_novis };
            if rng.random_bool(p.clamp(0.0, 1.0)) {
                correct_text(plan, q)
            } else {
                uniform_text(&mut rng, plan, q)
            }
        }
        _ => return None,
    };
    // Simulated latency: exponential around the configured mean.
    let u: f64 = rng.random_range(1e-9..1.0);
    let latency_s = 0.2 + cfg.mock.latency_mean_s * -libm::log(u);
    Some(MockReply { text, latency_s })
}

/// Rough token estimate (four characters per token) for mocks.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

// ---------------------------------------------------------------------------
// Cost and latency accounting

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelCost {
    pub llm_id: String,
    pub trials: usize,
    pub failed: usize,
    pub total_cost: f64,
    pub mean_cost: f64,
    pub mean_latency_s: f64,
    pub mean_latency_filtered_s: f64,
    pub outliers: usize,
    pub max_latency_s: f64,
    pub distinct_questions: usize,
    /// Mean per-trial cost times the number of distinct questions.
    pub cost_per_pass: f64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostReport {
    pub trials: usize,
    pub total_cost: f64,
    pub mean_latency_s: f64,
    pub mean_latency_filtered_s: f64,
    pub outliers: usize,
    pub per_model: Vec<ModelCost>,
}

fn mean_or_zero(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

pub fn summarize_costs(records: &[TrialRecord]) -> CostReport {
    let mut by_model: BTreeMap<&str, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        by_model.entry(r.condition.llm_id.as_str()).or_default().push(r);
    }
    let lat = |rs: &[&TrialRecord]| -> (f64, f64, usize, f64) {
        let all: Vec<f64> = rs.iter().map(|r| r.latency_s).collect();
        let kept: Vec<f64> = all.iter().copied().filter(|l| *l <= LATENCY_OUTLIER_S).collect();
        let max = all.iter().copied().fold(0.0, f64::max);
        (mean_or_zero(&all), mean_or_zero(&kept), all.len() - kept.len(), max)
    };
    let per_model: Vec<ModelCost> = by_model
        .iter()
        .map(|(llm, rs)| {
            let total: f64 = rs.iter().map(|r| r.cost).sum();
            let (m, mf, out, max) = lat(rs);
            let distinct: BTreeSet<u8> = rs.iter().map(|r| r.question_id).collect();
            let mean_cost = total / rs.len() as f64;
            ModelCost {
                llm_id: llm.to_string(),
                trials: rs.len(),
                failed: rs.iter().filter(|r| r.error.is_some()).count(),
                total_cost: total,
                mean_cost,
                mean_latency_s: m,
                mean_latency_filtered_s: mf,
                outliers: out,
                max_latency_s: max,
                distinct_questions: distinct.len(),
                cost_per_pass: mean_cost * distinct.len() as f64,
                prompt_tokens: rs.iter().map(|r| r.prompt_tokens).sum(),
                completion_tokens: rs.iter().map(|r| r.completion_tokens).sum(),
            }
        })
        .collect();
    let all: Vec<&TrialRecord> = records.iter().collect();
    let (m, mf, out, _) = lat(&all);
    CostReport {
        trials: records.len(),
        total_cost: records.iter().map(|r| r.cost).sum(),
        mean_latency_s: m,
        mean_latency_filtered_s: mf,
        outliers: out,
        per_model,
    }
}

/// Whether a bank item was asked with choices in this mode.
pub fn uses_choices(mode: AnswerMode) -> bool {
    mode != AnswerMode::Open
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(llm: &str, q: u8, latency: f64, cost: f64) -> TrialRecord {
        TrialRecord {
            schema_version: RECORD_SCHEMA_VERSION,
            session_id: format!("{llm}{q}{latency}"),
            experiment: "e1".into(),
            question_id: q,
            condition: Condition { vis_present: true, choices_present: true, context_mode: ContextMode::Contextualized, llm_id: llm.into() },
            repetition: 0,
            option_order: None,
            prompt_text: String::new(),
            image_attached: true,
            raw_response: "(a)".into(),
            latency_s: latency,
            prompt_tokens: 0,
            completion_tokens: 0,
            cost,
            timestamp_ms: 0,
            backend_id: "fixture".into(),
            model: "m".into(),
            attempts: 1,
            error: None,
        }
    }

    #[test]
    fn outlier_filtered_latency() {
        let rs = vec![rec("gpt", 1, 3.0, 0.0), rec("gpt", 2, 5.0, 0.0), rec("gpt", 3, 10018.0, 0.0)];
        let r = summarize_costs(&rs);
        assert_eq!(r.per_model[0].mean_latency_filtered_s, 4.0);
        assert_eq!(r.per_model[0].outliers, 1);
    }

    #[test]
    fn cost_per_pass() {
        let rs: Vec<TrialRecord> = (1..=53).map(|q| rec("gpt", q, 2.0, 0.01)).collect();
        let r = summarize_costs(&rs);
        assert!((r.per_model[0].cost_per_pass - 0.53).abs() < 1e-12);
        assert_eq!(summarize_costs(&[]), CostReport::default());
    }

    #[test]
    fn rotations_cycle() {
        assert_eq!(rotation(4, 1), vec![1, 2, 3, 0]);
        assert_eq!(rotation(2, 3 % 2), vec![1, 0]);
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!((p.backoff(1), p.backoff(2), p.backoff(3)), (2.0, 4.0, 8.0));
    }
}
