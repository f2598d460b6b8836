//! Trial execution: retries, rate limiting, bounded parallelism and an
//! append-only record sink that makes runs resumable.

use crate::backend::{Backend, CallError};
use crate::error::{Error, Result};
use crate::io::{read_jsonl, JsonlAppender};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};
use vislit_core::qbank::QuestionInstance;
use vislit_core::runner::{build_prompt, BackendConfig, TrialPlan, TrialRecord, RECORD_SCHEMA_VERSION};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub planned: usize,
    pub already_recorded: usize,
    pub executed: usize,
    pub failed: usize,
}

/// Spaces request starts at least `interval` apart across all workers.
struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(per_min: Option<u32>) -> RateLimiter {
        let interval = per_min.filter(|r| *r > 0).map(|r| Duration::from_secs_f64(60.0 / r as f64));
        RateLimiter { interval, next: Mutex::new(None) }
    }

    fn wait(&self) {
        let Some(iv) = self.interval else { return };
        let slot = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + iv);
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Images keyed by chart file stem.
pub type ImageStore = BTreeMap<String, Vec<u8>>;

pub fn load_images(dir: &Path, bank: &[QuestionInstance]) -> Result<ImageStore> {
    let mut out = ImageStore::new();
    for q in bank {
        if out.contains_key(&q.chart_file) {
            continue;
        }
        let p = dir.join(format!("{}.png", q.chart_file));
        let bytes = std::fs::read(&p).map_err(|_| Error::MissingStageInput { stage: "run".into(), path: p.clone() })?;
        out.insert(q.chart_file.clone(), bytes);
    }
    Ok(out)
}

fn run_one(plan: &TrialPlan, q: &QuestionInstance, backend: &dyn Backend, cfg: &BackendConfig, images: &ImageStore, limiter: &RateLimiter) -> TrialRecord {
    let prompt = build_prompt(plan, q);
    let image = prompt.image.as_ref().and_then(|f| images.get(f)).map(|v| v.as_slice());
    let timestamp_ms = now_ms();
    let start = Instant::now();
    let max = cfg.retry.max_attempts.max(1);
    let mut attempts = 0;
    let mut waited = 0.0;
    let outcome = loop {
        attempts += 1;
        if backend.real_time() {
            limiter.wait();
        }
        match backend.call(plan, q, &prompt, image) {
            Ok(r) => break Ok(r),
            Err(CallError::Transient(m)) if attempts < max => {
                let b = cfg.retry.backoff(attempts);
                log::warn!("{}: attempt {attempts} failed ({m}); retrying in {b:.1} s", plan.session_id);
                if backend.real_time() {
                    std::thread::sleep(Duration::from_secs_f64(b));
                } else {
                    waited += b;
                }
            }
            Err(e) => break Err(e),
        }
    };
    let base = TrialRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        session_id: plan.session_id.clone(),
        experiment: plan.experiment.clone(),
        question_id: plan.question_id,
        condition: plan.condition.clone(),
        repetition: plan.repetition,
        option_order: plan.option_order.clone(),
        prompt_text: prompt.full_text(),
        image_attached: image.is_some(),
        raw_response: String::new(),
        latency_s: 0.0,
        prompt_tokens: 0,
        completion_tokens: 0,
        cost: 0.0,
        timestamp_ms,
        backend_id: format!("{}:{}", cfg.kind.as_str(), cfg.llm_id),
        model: cfg.model_for(plan.condition.vis_present).to_string(),
        attempts,
        error: None,
    };
    match outcome {
        Ok(r) => TrialRecord {
            raw_response: r.text,
            latency_s: r.latency_s.max(0.0),
            prompt_tokens: r.prompt_tokens,
            completion_tokens: r.completion_tokens,
            cost: cfg.pricing.cost(image.is_some(), r.prompt_tokens, r.completion_tokens).max(0.0),
            ..base
        },
        Err(e) => TrialRecord {
            latency_s: if backend.real_time() { start.elapsed().as_secs_f64() } else { waited },
            error: Some(e.message().to_string()),
            ..base
        },
    }
}

/// Run every plan not yet present in `sink`, appending one record per
/// plan as it completes.
pub fn execute(
    plans: &[TrialPlan],
    bank: &BTreeMap<u8, QuestionInstance>,
    backend: &dyn Backend,
    cfg: &BackendConfig,
    images: &ImageStore,
    sink: &Path,
) -> Result<RunSummary> {
    let done: HashSet<String> = if sink.exists() {
        read_jsonl::<TrialRecord>(sink)?.into_iter().map(|r| r.session_id).collect()
    } else {
        HashSet::new()
    };
    let todo: Vec<&TrialPlan> = plans.iter().filter(|p| !done.contains(&p.session_id)).collect();
    let mut summary = RunSummary { planned: plans.len(), already_recorded: plans.len() - todo.len(), ..Default::default() };
    for p in &todo {
        if !bank.contains_key(&p.question_id) {
            return Err(Error::MissingStageInput { stage: "run".into(), path: format!("question {}", p.question_id).into() });
        }
    }
    if todo.is_empty() {
        return Ok(summary);
    }
    let mut out = JsonlAppender::open(sink)?;
    let limiter = RateLimiter::new(cfg.rate_limit_per_min);
    let next = AtomicUsize::new(0);
    let workers = cfg.max_parallel.max(1).min(todo.len());
    let (tx, rx) = mpsc::channel::<TrialRecord>();
    let mut write_err = None;
    std::thread::scope(|s| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (todo, next, limiter) = (&todo, &next, &limiter);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(plan) = todo.get(i) else { break };
                let rec = run_one(plan, &bank[&plan.question_id], backend, cfg, images, limiter);
                if tx.send(rec).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for rec in rx {
            summary.executed += 1;
            if rec.error.is_some() {
                summary.failed += 1;
            }
            if write_err.is_none() {
                if let Err(e) = out.append(&rec) {
                    write_err = Some(e);
                    // Stop handing out work; in-flight trials finish.
                    next.store(usize::MAX / 2, Ordering::Relaxed);
                }
            }
        }
    });
    if let Some(e) = write_err {
        return Err(e);
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Reply;
    use std::sync::atomic::AtomicU32;
    use vislit_core::qbank::QuestionInstance;
    use vislit_core::runner::Prompt;

    struct Flaky {
        fails: AtomicU32,
    }

    impl Backend for Flaky {
        fn call(&self, _: &TrialPlan, _: &QuestionInstance, _: &Prompt, _: Option<&[u8]>) -> std::result::Result<Reply, CallError> {
            if self.fails.fetch_sub(1, Ordering::SeqCst) > 0 {
                Err(CallError::Transient("busy".into()))
            } else {
                self.fails.store(0, Ordering::SeqCst);
                Ok(Reply { text: "(a)".into(), latency_s: 1.0, prompt_tokens: 1, completion_tokens: 1 })
            }
        }
        fn real_time(&self) -> bool {
            false
        }
    }

    #[test]
    fn limiter_spaces_requests() {
        let l = RateLimiter::new(Some(600));
        let t = Instant::now();
        for _ in 0..4 {
            l.wait();
        }
        assert!(t.elapsed() >= Duration::from_millis(290));
    }

    #[test]
    fn retries_then_gives_up() {
        use crate::pipeline::tests_support::small_bank;
        use vislit_core::runner::{plan_trials, BackendKind, Experiment, OrderStrategy};
        let bank = small_bank();
        let cond = Experiment::E2.conditions("m").remove(0);
        let plans: Vec<TrialPlan> = plan_trials(&bank[..1], &cond, "e2", 4, 1, OrderStrategy::Rotations).unwrap();
        let map: BTreeMap<u8, QuestionInstance> = bank.iter().map(|q| (q.id, q.clone())).collect();
        let cfg = BackendConfig::mock(BackendKind::MockUniform, "m", 0);
        let dir = tempfile::tempdir().unwrap();
        let sink = dir.path().join("t.jsonl");

        let flaky = Flaky { fails: AtomicU32::new(2) };
        let s = execute(&plans[..1], &map, &flaky, &cfg, &ImageStore::new(), &sink).unwrap();
        assert_eq!((s.executed, s.failed), (1, 0));
        let recs: Vec<TrialRecord> = read_jsonl(&sink).unwrap();
        assert_eq!(recs[0].attempts, 3);

        let dead = Flaky { fails: AtomicU32::new(100) };
        let s = execute(&plans[..2], &map, &dead, &cfg, &ImageStore::new(), &sink).unwrap();
        assert_eq!((s.already_recorded, s.executed, s.failed), (1, 1, 1));
        let recs: Vec<TrialRecord> = read_jsonl(&sink).unwrap();
        assert_eq!(recs[1].attempts, 3);
        assert_eq!(recs[1].error.as_deref(), Some("busy"));
        assert_eq!(recs[1].latency_s, 2.0 + 4.0);
    }
}
