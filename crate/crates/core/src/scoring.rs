//! Response normalization, error taxonomy and correctness metrics.

use crate::chart::{ChartType, ContextMode, Unit};
use crate::numfmt::approx_eq;
use crate::qbank::{Answer, QuestionInstance, TaskType};
use crate::runner::TrialRecord;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoringError {
    #[error("relative error is undefined for a zero truth")]
    ZeroTruth,
    #[error("both intervals have zero length")]
    BothDegenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCategory {
    Random,
    Vague,
    Unknown,
    PromptEngineering,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseKind {
    OptionLetter,
    Text,
    Number,
    Range,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "kebab-case")]
pub enum Payload {
    Option(usize),
    Text(String),
    Number(f64),
    Range(f64, f64),
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedResponse {
    pub kind: ResponseKind,
    pub payload: Payload,
    pub error_category: Option<ErrorCategory>,
    pub multi_answer: bool,
    /// Unmapped free text that a human may want to adjudicate.
    pub needs_review: bool,
}

impl NormalizedResponse {
    fn error(cat: ErrorCategory, multi: bool, review: bool) -> Self {
        NormalizedResponse {
            kind: ResponseKind::Error,
            payload: Payload::None,
            error_category: Some(cat),
            multi_answer: multi,
            needs_review: review,
        }
    }
    fn ok(kind: ResponseKind, payload: Payload) -> Self {
        NormalizedResponse { kind, payload, error_category: None, multi_answer: false, needs_review: false }
    }
}

/// Ordered surface-form → canonical-token mapping; lookups are
/// case-insensitive and the first match wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynonymTable {
    pub entries: Vec<(String, String)>,
}

impl Default for SynonymTable {
    fn default() -> Self {
        let pairs: &[(&str, &str)] = &[
            ("inverse", "False"),
            ("correct", "True"),
            ("similar", "1/1"),
            ("likely", "True"),
            ("doctoral study", "Postgraduate Study"),
            ("true", "True"),
            ("false", "False"),
            ("yes", "True"),
            ("no", "False"),
            ("incorrect", "False"),
            ("increasing", "increasing"),
            ("increase", "increasing"),
            ("increased", "increasing"),
            ("rising", "increasing"),
            ("upward", "increasing"),
            ("decreasing", "decreasing"),
            ("decrease", "decreasing"),
            ("decreased", "decreasing"),
            ("declining", "decreasing"),
            ("falling", "decreasing"),
            ("downward", "decreasing"),
            ("constant", "constant"),
            ("flat", "constant"),
            ("stable", "constant"),
            ("steady", "constant"),
            ("unchanged", "constant"),
        ];
        SynonymTable { entries: pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect() }
    }
}

impl SynonymTable {
    pub fn lookup(&self, token: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(token))
            .map(|(_, v)| v.as_str())
    }
}

fn strip_wrapping(raw: &str) -> &str {
    raw.trim()
        .trim_matches(|c: char| matches!(c, '.' | '!' | '"' | '\'' | '`' | '*' | ',' | ';'))
        .trim()
}

/// Map a free-text answer to its canonical token; unmatched text passes
/// through lowercased and trimmed.
pub fn normalize_text(raw: &str, table: &SynonymTable) -> String {
    let s = strip_wrapping(raw);
    match table.lookup(s) {
        Some(t) => t.to_string(),
        None => s.to_lowercase(),
    }
}

// ---------------------------------------------------------------------------
// Option letters

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChoiceError {
    MultipleAnswers,
    Unparseable,
}

fn letters_in(raw: &str) -> Vec<char> {
    let chars: Vec<char> = raw.chars().collect();
    let mut found: Vec<char> = Vec::new();
    fn push_into(found: &mut Vec<char>, c: char) {
        let c = c.to_ascii_lowercase();
        if !found.contains(&c) {
            found.push(c);
        }
    }
    // Parenthesized letters first.
    for w in chars.windows(3) {
        if w[0] == '(' && w[1].is_ascii_alphabetic() && w[2] == ')' {
            push_into(&mut found, w[1]);
        }
    }
    if !found.is_empty() {
        return found;
    }
    let trimmed = strip_wrapping(raw);
    let tc: Vec<char> = trimmed.chars().collect();
    if tc.len() == 1 && tc[0].is_ascii_alphabetic() {
        push_into(&mut found, tc[0]);
        return found;
    }
    // Bare letter at a word start followed by ')', '.' or ':'.
    for i in 0..chars.len() {
        let c = chars[i];
        if !c.is_ascii_alphabetic() {
            continue;
        }
        let start = i == 0 || !chars[i - 1].is_alphanumeric();
        let next = chars.get(i + 1).copied();
        if start && matches!(next, Some(')') | Some(':')) {
            push_into(&mut found, c);
        } else if start && next == Some('.') && c.is_ascii_uppercase() {
            push_into(&mut found, c);
        }
    }
    found
}

/// Extract a single displayed option position from a raw response.
pub fn parse_choice(raw: &str, n_options: usize) -> Result<usize, ChoiceError> {
    let letters = letters_in(raw);
    match letters.len() {
        0 => Err(ChoiceError::Unparseable),
        1 => {
            let pos = (letters[0] as u8 - b'a') as usize;
            if pos < n_options {
                Ok(pos)
            } else {
                Err(ChoiceError::Unparseable)
            }
        }
        _ => Err(ChoiceError::MultipleAnswers),
    }
}

/// Letter for a displayed position: 0 → 'a'.
pub fn option_letter(pos: usize) -> char {
    (b'a' + pos as u8) as char
}

// ---------------------------------------------------------------------------
// Numbers

/// Numeric tokens in `text`: currency and percent signs, thousands
/// separators and `a/b` fractions are understood.
pub fn extract_numbers(text: &str) -> Vec<f64> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let neg_start = c == '-'
            && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())
            && (i == 0 || chars[i - 1].is_whitespace() || chars[i - 1] == '$' || chars[i - 1] == '(');
        if c.is_ascii_digit() || neg_start || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) && (i == 0 || !chars[i - 1].is_ascii_digit())) {
            let start = i;
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                if d.is_ascii_digit() || d == '.' {
                    i += 1;
                } else if d == ',' && chars.get(i + 1).is_some_and(|x| x.is_ascii_digit())
                    && chars.get(i + 2).is_some_and(|x| x.is_ascii_digit())
                    && chars.get(i + 3).is_some_and(|x| x.is_ascii_digit())
                    && !chars.get(i + 4).is_some_and(|x| x.is_ascii_digit())
                {
                    i += 1;
                } else {
                    break;
                }
            }
            let tok: String = chars[start..i].iter().filter(|c| **c != ',').collect();
            let tok = tok.trim_end_matches('.');
            if let Ok(mut v) = tok.parse::<f64>() {
                // a/b fraction
                if chars.get(i) == Some(&'/') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                    let s2 = i + 1;
                    let mut j = s2;
                    while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                        j += 1;
                    }
                    let den: String = chars[s2..j].iter().collect();
                    if let Ok(d) = den.trim_end_matches('.').parse::<f64>() {
                        if d != 0.0 {
                            v /= d;
                        }
                    }
                    i = j;
                }
                out.push(v);
            }
        } else {
            i += 1;
        }
    }
    out
}

fn distinct(values: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if !out.iter().any(|o| approx_eq(*o, *v)) {
            out.push(*v);
        }
    }
    out
}

fn has_range_connector(text: &str) -> bool {
    let t = text.to_lowercase();
    t.contains('-') || t.contains('–') || t.contains(" to ") || t.contains(" and ") || t.contains('~')
}

/// Bring a percent/ratio response onto the truth's scale.
fn rescale(v: f64, text: &str, unit: Unit, truth_magnitude: f64) -> f64 {
    match unit {
        Unit::Percent if !text.contains('%') && v.abs() < 1.0 && truth_magnitude >= 1.0 => v * 100.0,
        Unit::Ratio if text.contains('%') => v / 100.0,
        _ => v,
    }
}

// ---------------------------------------------------------------------------
// Error taxonomy

const PROMPT_TALK: &[&str] = &[
    "prompt", "instruction", "one word", "one-word", "single word", "as an ai", "language model", "you asked",
    "the question asks", "system message",
];
const REFUSALS: &[&str] = &[
    "unsure", "not sure", "unknown", "cannot", "can't", "can not", "don't know", "do not know", "n/a", "none",
    "no data", "sorry", "unable", "insufficient", "not possible", "impossible", "not provided", "no information",
    "not available", "unclear", "not enough", "idk", "?",
];
const QUALITY_WORDS: &[&str] = &[
    "fast", "slow", "high", "low", "large", "small", "big", "many", "few", "cheap", "expensive", "moderate",
    "medium", "average", "several", "some", "various", "good", "bad", "significant", "tall", "short", "heavy",
    "light", "wide", "narrow", "most", "more", "less", "varied", "varies", "fluctuating", "volatile",
];
const STOP_WORDS: &[&str] = &[
    "the", "a", "an", "of", "in", "is", "was", "for", "to", "and", "what", "which", "how", "that", "than",
    "with", "who", "at", "by", "on", "are",
];

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

fn contains_phrase(hay: &str, needle: &str) -> bool {
    let h = hay.to_lowercase();
    let n = needle.to_lowercase();
    if n.is_empty() {
        return false;
    }
    let hb = h.as_bytes();
    let mut from = 0;
    while let Some(pos) = h[from..].find(&n) {
        let s = from + pos;
        let e = s + n.len();
        let left_ok = s == 0 || !hb[s - 1].is_ascii_alphanumeric();
        let right_ok = e >= hb.len() || !hb[e].is_ascii_alphanumeric();
        if left_ok && right_ok {
            return true;
        }
        from = s + 1;
    }
    false
}

fn is_nonsense(text: &str) -> bool {
    let alnum = text.chars().filter(|c| c.is_alphanumeric()).count();
    let visible = text.chars().filter(|c| !c.is_whitespace()).count();
    if alnum == 0 || (visible > 0 && alnum * 2 < visible) {
        return true;
    }
    words(text).iter().any(|w| {
        w.len() > 3 && w.chars().all(|c| c.is_ascii_alphabetic()) && !w.chars().any(|c| "aeiouy".contains(c))
    })
}

fn expects_number(q: &QuestionInstance) -> bool {
    matches!(q.truth.answer, Answer::NumericValue { .. } | Answer::NumericRange { .. })
}

/// Classify an open-mode response that does not yield a valid answer.
pub fn classify_error(raw: &str, q: &QuestionInstance) -> Option<ErrorCategory> {
    classify_with(raw, q, &SynonymTable::default()).map(|(c, _)| c)
}

fn domain_hits(text: &str, q: &QuestionInstance) -> Vec<usize> {
    q.answer_domain
        .iter()
        .enumerate()
        .filter(|(_, d)| contains_phrase(text, d))
        .map(|(i, _)| i)
        .collect()
}

fn classify_with(raw: &str, q: &QuestionInstance, table: &SynonymTable) -> Option<(ErrorCategory, bool)> {
    let text = raw.trim();
    if text.is_empty() {
        return Some((ErrorCategory::Unknown, false));
    }
    let lower = text.to_lowercase();
    if PROMPT_TALK.iter().any(|p| lower.contains(p)) {
        return Some((ErrorCategory::PromptEngineering, false));
    }
    let canon = normalize_text(text, table);
    let in_domain = q.answer_domain.iter().any(|d| d.eq_ignore_ascii_case(&canon)) || !domain_hits(text, q).is_empty();
    let numeric = !extract_numbers(text).is_empty();
    if !in_domain && !numeric {
        let stripped = strip_wrapping(&lower);
        if REFUSALS.iter().any(|r| stripped == *r || (r.len() > 3 && lower.contains(r))) {
            return Some((ErrorCategory::Unknown, false));
        }
        let w = words(text);
        if w.len() == 1 && !STOP_WORDS.contains(&w[0].as_str()) && words(&q.stem).contains(&w[0]) {
            return Some((ErrorCategory::Unknown, false));
        }
    }
    if is_nonsense(text) && !numeric {
        return Some((ErrorCategory::Random, false));
    }
    if expects_number(q) {
        if numeric || in_domain {
            return None;
        }
        let quality = words(text).iter().any(|w| QUALITY_WORDS.contains(&w.as_str()));
        return Some((ErrorCategory::Vague, !quality));
    }
    if in_domain {
        return None;
    }
    let quality = words(text).iter().any(|w| QUALITY_WORDS.contains(&w.as_str()));
    Some((ErrorCategory::Vague, !quality))
}

// ---------------------------------------------------------------------------
// Metrics

/// |(response − truth) / truth|.
pub fn relative_error(response: f64, truth: f64) -> Result<f64, ScoringError> {
    if truth == 0.0 {
        return Err(ScoringError::ZeroTruth);
    }
    Ok(((response - truth) / truth).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapMetrics {
    pub percentage: f64,
    pub jaccard: f64,
    pub dice: f64,
    pub overlap_coef: f64,
}

/// Overlap between two intervals. A zero-length interval contributes no
/// measure, so Jaccard and Dice are 0 for it; containment-based metrics
/// treat a contained point as fully covered.
pub fn range_overlap_metrics(a: (f64, f64), b: (f64, f64)) -> Result<OverlapMetrics, ScoringError> {
    let (a0, a1) = if a.0 <= a.1 { a } else { (a.1, a.0) };
    let (b0, b1) = if b.0 <= b.1 { b } else { (b.1, b.0) };
    let la = a1 - a0;
    let lb = b1 - b0;
    if la <= 0.0 && lb <= 0.0 {
        return Err(ScoringError::BothDegenerate);
    }
    let inter = (a1.min(b1) - a0.max(b0)).max(0.0);
    let union = la + lb - inter;
    let jaccard = if union > 0.0 { inter / union } else { 0.0 };
    let dice = 2.0 * inter / (la + lb);
    let short = la.min(lb);
    let contain = if short > 0.0 {
        inter / short
    } else {
        // Point interval: covered iff it lies inside the other.
        let (p, lo, hi) = if la <= 0.0 { (a0, b0, b1) } else { (b0, a0, a1) };
        if p >= lo && p <= hi {
            1.0
        } else {
            0.0
        }
    };
    let c = |x: f64| x.clamp(0.0, 1.0);
    Ok(OverlapMetrics { percentage: c(contain), jaccard: c(jaccard), dice: c(dice), overlap_coef: c(contain) })
}

// ---------------------------------------------------------------------------
// Trial scoring

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub session_id: String,
    pub experiment: String,
    pub llm_id: String,
    pub question_id: u8,
    pub chart_type: ChartType,
    pub task: TaskType,
    pub vis_present: bool,
    pub choices_present: bool,
    pub context_mode: ContextMode,
    pub repetition: u32,
    pub correct: bool,
    pub response: NormalizedResponse,
    /// Canonical option index chosen, for choice trials.
    pub chosen_index: Option<usize>,
    pub relative_error: Option<f64>,
    pub overlap: Option<OverlapMetrics>,
    pub multi_answer: bool,
    pub transport_error: bool,
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol + 1e-9 * (1.0 + target.abs())
}

/// Interpret a response given with choices shown.
pub fn score_choice(raw: &str, q: &QuestionInstance, option_order: &[usize]) -> (NormalizedResponse, Option<usize>) {
    match parse_choice(raw, option_order.len()) {
        Ok(pos) => {
            let canon = option_order[pos];
            (NormalizedResponse::ok(ResponseKind::OptionLetter, Payload::Option(canon)), Some(canon))
        }
        Err(ChoiceError::MultipleAnswers) => (NormalizedResponse::error(ErrorCategory::Vague, true, false), None),
        Err(ChoiceError::Unparseable) => {
            // Accept the option text itself when it names exactly one option.
            let s = strip_wrapping(raw);
            let hits: Vec<usize> = q.options.iter().enumerate().filter(|(_, o)| o.eq_ignore_ascii_case(s)).map(|(i, _)| i).collect();
            if hits.len() == 1 {
                (NormalizedResponse::ok(ResponseKind::Text, Payload::Text(q.options[hits[0]].clone())), Some(hits[0]))
            } else {
                let cat = classify_error(raw, q).unwrap_or(ErrorCategory::Vague);
                (NormalizedResponse::error(cat, false, cat == ErrorCategory::Vague), None)
            }
        }
    }
}

/// Outcome of scoring an open response.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenScore {
    pub response: NormalizedResponse,
    pub correct: bool,
    pub relative_error: Option<f64>,
    pub overlap: Option<OverlapMetrics>,
}

pub fn score_open(raw: &str, q: &QuestionInstance, table: &SynonymTable) -> OpenScore {
    let fail = |response: NormalizedResponse| OpenScore { response, correct: false, relative_error: None, overlap: None };
    if let Some((cat, review)) = classify_with(raw, q, table) {
        return fail(NormalizedResponse::error(cat, false, review));
    }
    let gt = &q.truth;
    let text = raw.trim();
    match &gt.answer {
        Answer::NumericValue { value } => {
            let nums = distinct(&extract_numbers(text));
            if nums.len() >= 2 {
                return fail(NormalizedResponse::error(ErrorCategory::Vague, true, false));
            }
            let Some(&v) = nums.first() else {
                return fail(NormalizedResponse::error(ErrorCategory::Vague, false, true));
            };
            let v = rescale(v, text, gt.unit, *value);
            OpenScore {
                response: NormalizedResponse::ok(ResponseKind::Number, Payload::Number(v)),
                correct: within(v, *value, gt.tolerance),
                relative_error: relative_error(v, *value).ok(),
                overlap: None,
            }
        }
        Answer::NumericRange { low, high } => {
            // Exact label of the range (e.g. a legend class) counts.
            if text.eq_ignore_ascii_case(&gt.display()) {
                return OpenScore {
                    response: NormalizedResponse::ok(ResponseKind::Range, Payload::Range(*low, *high)),
                    correct: true,
                    relative_error: None,
                    overlap: range_overlap_metrics((*low, *high), (*low, *high)).ok(),
                };
            }
            let nums: Vec<f64> = extract_numbers(text).into_iter().map(|v| rescale(v, text, gt.unit, *high)).collect();
            let uniq = distinct(&nums);
            if uniq.len() >= 3 {
                return fail(NormalizedResponse::error(ErrorCategory::Vague, true, false));
            }
            if nums.len() == 2 && has_range_connector(text) {
                let (r0, r1) = if nums[0] <= nums[1] { (nums[0], nums[1]) } else { (nums[1], nums[0]) };
                let correct = if gt.membership {
                    approx_eq(r0, *low) && approx_eq(r1, *high)
                } else {
                    within(r0, *low, gt.tolerance) && within(r1, *high, gt.tolerance)
                };
                return OpenScore {
                    response: NormalizedResponse::ok(ResponseKind::Range, Payload::Range(r0, r1)),
                    correct,
                    relative_error: None,
                    overlap: range_overlap_metrics((*low, *high), (r0, r1)).ok(),
                };
            }
            if uniq.len() == 2 {
                return fail(NormalizedResponse::error(ErrorCategory::Vague, true, false));
            }
            let Some(&v) = uniq.first() else {
                return fail(NormalizedResponse::error(ErrorCategory::Vague, false, true));
            };
            if gt.membership {
                let inside = v >= *low - 1e-9 && v <= *high + 1e-9;
                return OpenScore {
                    response: NormalizedResponse::ok(ResponseKind::Number, Payload::Number(v)),
                    correct: inside,
                    relative_error: None,
                    overlap: None,
                };
            }
            // A single number is read as the width of the range.
            let span = high - low;
            OpenScore {
                response: NormalizedResponse::ok(ResponseKind::Number, Payload::Number(v)),
                correct: within(v, span, gt.tolerance),
                relative_error: relative_error(v, span).ok(),
                overlap: None,
            }
        }
        Answer::Boolean { value } => {
            let canon = normalize_text(text, table);
            let b = match canon.as_str() {
                "True" => Some(true),
                "False" => Some(false),
                _ => {
                    let w = words(text);
                    let t = w.iter().any(|x| x == "true");
                    let f = w.iter().any(|x| x == "false");
                    match (t, f) {
                        (true, false) => Some(true),
                        (false, true) => Some(false),
                        (true, true) => return fail(NormalizedResponse::error(ErrorCategory::Vague, true, false)),
                        _ => None,
                    }
                }
            };
            match b {
                Some(b) => OpenScore {
                    response: NormalizedResponse::ok(ResponseKind::Text, Payload::Text(crate::qbank::bool_label(b).into())),
                    correct: b == *value,
                    relative_error: None,
                    overlap: None,
                },
                None => fail(NormalizedResponse::error(ErrorCategory::Vague, false, true)),
            }
        }
        Answer::TrendDirection { value } => {
            let canon = normalize_text(text, table);
            let hits = domain_hits(&canon, q);
            if hits.len() > 1 {
                return fail(NormalizedResponse::error(ErrorCategory::Vague, true, false));
            }
            match hits.first() {
                Some(&i) => {
                    let label = q.answer_domain[i].clone();
                    OpenScore {
                        correct: label == value.as_answer(),
                        response: NormalizedResponse::ok(ResponseKind::Text, Payload::Text(label)),
                        relative_error: None,
                        overlap: None,
                    }
                }
                None => fail(NormalizedResponse::error(ErrorCategory::Vague, false, true)),
            }
        }
        Answer::CategoryLabel { value } => {
            let canon = normalize_text(text, table);
            let exact = q.answer_domain.iter().position(|d| d.eq_ignore_ascii_case(&canon));
            let pick = match exact {
                Some(i) => Some(i),
                None => {
                    let hits = domain_hits(text, q);
                    // Drop hits that are contained in a longer hit ("York" in "New York City").
                    let hits: Vec<usize> = hits
                        .iter()
                        .copied()
                        .filter(|&i| {
                            !hits.iter().any(|&j| j != i && q.answer_domain[j].len() > q.answer_domain[i].len() && contains_phrase(&q.answer_domain[j], &q.answer_domain[i]))
                        })
                        .collect();
                    if hits.len() > 1 {
                        return fail(NormalizedResponse::error(ErrorCategory::Vague, true, false));
                    }
                    hits.first().copied()
                }
            };
            match pick {
                Some(i) => {
                    let label = q.answer_domain[i].clone();
                    OpenScore {
                        correct: label.eq_ignore_ascii_case(value),
                        response: NormalizedResponse::ok(ResponseKind::Text, Payload::Text(label)),
                        relative_error: None,
                        overlap: None,
                    }
                }
                None => fail(NormalizedResponse::error(ErrorCategory::Vague, false, true)),
            }
        }
    }
}

/// Score one trial record against its question.
pub fn score_trial(record: &TrialRecord, q: &QuestionInstance, table: &SynonymTable) -> ScoreRecord {
    let cond = &record.condition;
    let mut out = ScoreRecord {
        session_id: record.session_id.clone(),
        experiment: record.experiment.clone(),
        llm_id: cond.llm_id.clone(),
        question_id: q.id,
        chart_type: q.chart_type,
        task: q.task,
        vis_present: cond.vis_present,
        choices_present: cond.choices_present,
        context_mode: cond.context_mode,
        repetition: record.repetition,
        correct: false,
        response: NormalizedResponse::error(ErrorCategory::Unknown, false, false),
        chosen_index: None,
        relative_error: None,
        overlap: None,
        multi_answer: false,
        transport_error: record.error.is_some(),
    };
    if record.error.is_some() {
        return out;
    }
    if cond.choices_present {
        let identity: Vec<usize> = (0..q.options.len()).collect();
        let order = record.option_order.as_deref().unwrap_or(&identity);
        let (resp, chosen) = score_choice(&record.raw_response, q, order);
        out.multi_answer = resp.multi_answer;
        out.correct = chosen == Some(q.correct_index);
        out.chosen_index = chosen;
        out.response = resp;
    } else {
        let s = score_open(&record.raw_response, q, table);
        out.multi_answer = s.response.multi_answer;
        out.correct = s.correct && !out.multi_answer;
        out.relative_error = s.relative_error;
        out.overlap = s.overlap;
        out.response = s.response;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choice_letters() {
        assert_eq!(parse_choice("(b)", 4), Ok(1));
        assert_eq!(parse_choice("The answer is (a).", 4), Ok(0));
        assert_eq!(parse_choice("(a) or (b)", 4), Err(ChoiceError::MultipleAnswers));
        assert_eq!(parse_choice("C", 4), Ok(2));
        assert_eq!(parse_choice("d)", 4), Ok(3));
        assert_eq!(parse_choice("(d)", 3), Err(ChoiceError::Unparseable));
        assert_eq!(parse_choice("I think so", 4), Err(ChoiceError::Unparseable));
    }

    #[test]
    fn permutation_inverse() {
        // Displayed order [c, a, b, d]: position b shows canonical a.
        let order = [2, 0, 1, 3];
        assert_eq!(order[parse_choice("(b)", 4).unwrap()], 0);
    }

    #[test]
    fn synonyms() {
        let t = SynonymTable::default();
        assert_eq!(normalize_text("Inverse", &t), "False");
        assert_eq!(normalize_text("TRUE", &t), "True");
        assert_eq!(normalize_text("Doctoral study", &t), "Postgraduate Study");
        assert_eq!(normalize_text("Correct.", &t), "True");
        assert_eq!(normalize_text("  Similar ", &t), "1/1");
        assert_eq!(normalize_text("likely", &t), "True");
        assert_eq!(normalize_text("Hello World", &t), "hello world");
    }

    #[test]
    fn numbers() {
        assert_eq!(extract_numbers("$1,234.5"), vec![1234.5]);
        assert_eq!(extract_numbers("25%"), vec![25.0]);
        assert_eq!(extract_numbers("12-37"), vec![12.0, 37.0]);
        assert_eq!(extract_numbers("12 to 37"), vec![12.0, 37.0]);
        assert_eq!(extract_numbers("1/1"), vec![1.0]);
        assert_eq!(extract_numbers("-3 and 4.0 - 4.2"), vec![-3.0, 4.0, 4.2]);
        assert_eq!(extract_numbers("none"), Vec::<f64>::new());
    }

    #[test]
    fn relative_errors() {
        assert_eq!(relative_error(40.0, 40.0), Ok(0.0));
        assert_eq!(relative_error(30.0, 40.0), Ok(0.25));
        assert_eq!(relative_error(1.0, 0.0), Err(ScoringError::ZeroTruth));
    }

    #[test]
    fn overlap_examples() {
        let j = range_overlap_metrics((1.0, 4.0), (3.0, 6.0)).unwrap();
        assert!((j.jaccard - 0.2).abs() < 1e-12);
        let o = range_overlap_metrics((1.0, 3.0), (2.0, 8.0)).unwrap();
        assert!((o.overlap_coef - 0.5).abs() < 1e-12);
        // 2|A∩B| / (|A| + |B|) with |A∩B| = 2 and |A| = |B| = 4.
        let d = range_overlap_metrics((0.0, 4.0), (2.0, 6.0)).unwrap();
        assert!((d.dice - 0.5).abs() < 1e-12);
        assert_eq!(range_overlap_metrics((2.0, 2.0), (2.0, 2.0)), Err(ScoringError::BothDegenerate));
        let p = range_overlap_metrics((2.0, 2.0), (1.0, 3.0)).unwrap();
        assert_eq!((p.overlap_coef, p.jaccard), (1.0, 0.0));
        let same = range_overlap_metrics((1.0, 5.0), (1.0, 5.0)).unwrap();
        assert_eq!((same.percentage, same.jaccard, same.dice, same.overlap_coef), (1.0, 1.0, 1.0, 1.0));
        let apart = range_overlap_metrics((1.0, 2.0), (3.0, 5.0)).unwrap();
        assert_eq!((apart.percentage, apart.jaccard, apart.dice, apart.overlap_coef), (0.0, 0.0, 0.0, 0.0));
    }
}
