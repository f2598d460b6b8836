//! Tables and figures computed from persisted records. Every figure comes
//! with the data table it plots.

use crate::chart::ChartType;
use crate::qbank::{GroundTruthKind, QuestionInstance};
use crate::runner::{CostReport, TrialRecord, LATENCY_OUTLIER_S};
use crate::scene::{nice_ticks, palette, text_width, Anchor, Rgb, Scale, Scene};
use crate::scoring::{OverlapMetrics, ScoreRecord};
use crate::stats::bootstrap::BootstrapSet;
use crate::stats::hypothesis::TestResult;
use crate::stats::logistic::FitResult;
use crate::stats::special::{mean, quantile_sorted, sorted, t_quantile, variance};
use crate::stats::tune::TuningResult;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Accuracy margin around the baseline for the better/worse classes.
pub const CLASS_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("no coefficients in group {0}")]
    EmptyGroup(String),
    #[error("bootstrap set is empty")]
    EmptyBootstrap,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Table {
        Table { name: name.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

fn f3(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.3}")
    }
}

fn f4(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.4}")
    }
}

// ---------------------------------------------------------------------------
// Accuracy comparison

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorClass {
    Better,
    Close,
    Worse,
}

impl ColorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ColorClass::Better => "better",
            ColorClass::Close => "close",
            ColorClass::Worse => "worse",
        }
    }
}

pub fn color_class(accuracy: f64, baseline: f64) -> ColorClass {
    // The epsilon keeps differences of exactly 0.05 in the close band
    // despite binary rounding.
    let d = accuracy - baseline;
    if d > CLASS_MARGIN + 1e-9 {
        ColorClass::Better
    } else if d < -CLASS_MARGIN - 1e-9 {
        ColorClass::Worse
    } else {
        ColorClass::Close
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemAccuracy {
    pub llm: String,
    pub correct: usize,
    pub trials: usize,
    pub accuracy: f64,
    pub class: Option<ColorClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub question_id: u8,
    pub chart_type: ChartType,
    pub task: String,
    pub stem: String,
    pub baseline: Option<f64>,
    pub random_rate: f64,
    pub cells: Vec<ItemAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub llms: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    /// (question, llm) pairs without any score.
    pub missing: Vec<(u8, String)>,
}

impl ComparisonTable {
    pub fn to_table(&self, name: &str) -> Table {
        let has_base = self.rows.iter().any(|r| r.baseline.is_some());
        let mut header: Vec<String> = ["id", "chart", "task", "question"].iter().map(|s| s.to_string()).collect();
        if has_base {
            header.push("baseline".into());
        }
        for l in &self.llms {
            header.push(l.clone());
            if has_base {
                header.push(format!("{l} class"));
            }
        }
        header.push("random".into());
        let mut t = Table { name: name.to_string(), header, rows: Vec::new() };
        for r in &self.rows {
            let mut row = vec![r.question_id.to_string(), r.chart_type.display_name().to_string(), r.task.clone(), r.stem.clone()];
            if has_base {
                row.push(r.baseline.map(|b| format!("{b:.2}")).unwrap_or_default());
            }
            for c in &r.cells {
                row.push(if c.trials > 0 { format!("{:.2}", c.accuracy) } else { String::new() });
                if has_base {
                    row.push(c.class.map(|k| k.as_str().to_string()).unwrap_or_default());
                }
            }
            row.push(format!("{:.2}", r.random_rate));
            t.rows.push(row);
        }
        t
    }
}

/// Per-item accuracy for every LLM in `scores`, against optional baselines.
pub fn accuracy_table(scores: &[ScoreRecord], bank: &[QuestionInstance], baseline: Option<&BTreeMap<u8, f64>>) -> ComparisonTable {
    let mut llms: Vec<String> = scores.iter().map(|s| s.llm_id.clone()).collect();
    llms.sort();
    llms.dedup();
    let mut tally: BTreeMap<(u8, &str), (usize, usize)> = BTreeMap::new();
    for s in scores {
        let e = tally.entry((s.question_id, s.llm_id.as_str())).or_insert((0, 0));
        e.1 += 1;
        if s.correct {
            e.0 += 1;
        }
    }
    let mut missing = Vec::new();
    let rows = bank
        .iter()
        .map(|q| {
            let base = baseline.and_then(|b| b.get(&q.id).copied());
            let cells = llms
                .iter()
                .map(|l| {
                    let (correct, trials) = tally.get(&(q.id, l.as_str())).copied().unwrap_or((0, 0));
                    if trials == 0 {
                        missing.push((q.id, l.clone()));
                    }
                    let accuracy = if trials > 0 { correct as f64 / trials as f64 } else { f64::NAN };
                    ItemAccuracy {
                        llm: l.clone(),
                        correct,
                        trials,
                        accuracy,
                        class: base.filter(|_| trials > 0).map(|b| color_class(accuracy, b)),
                    }
                })
                .collect();
            ComparisonRow {
                question_id: q.id,
                chart_type: q.chart_type,
                task: q.template().full_task_label(),
                stem: q.stem.clone(),
                baseline: base,
                random_rate: q.random_rate(),
                cells,
            }
        })
        .collect();
    ComparisonTable { llms, rows, missing }
}

// ---------------------------------------------------------------------------
// Figures

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureKind {
    Ridge,
    Box,
    Ci,
    Timeseries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure {
    pub kind: FigureKind,
    pub name: String,
    pub title: String,
    pub caption: String,
    pub data: Table,
    pub scene: Scene,
}

const FONT: f64 = 10.0;

struct Frame {
    left: f64,
    top: f64,
    right: f64,
    bottom: f64,
}

impl Frame {
    fn x(&self, d: (f64, f64)) -> Scale {
        Scale::new(d, (self.left, self.right))
    }

    fn y(&self, d: (f64, f64)) -> Scale {
        Scale::new(d, (self.bottom, self.top))
    }
}

fn y_axis(s: &mut Scene, f: &Frame, ys: &Scale, ticks: &[f64], label: &str) {
    for &t in ticks {
        let py = ys.map(t);
        s.segment((f.left, py), (f.right, py), Rgb::GRID, 1.0);
        s.text(f.left - 4.0, py + FONT / 2.0, &trim_num(t), FONT * 0.8, Anchor::End);
    }
    s.segment((f.left, f.top), (f.left, f.bottom), Rgb::AXIS, 1.0);
    s.vtext(f.left - 42.0, (f.top + f.bottom) / 2.0, label, FONT);
}

fn x_axis(s: &mut Scene, f: &Frame, xs: &Scale, ticks: &[f64], label: &str) {
    for &t in ticks {
        let px = xs.map(t);
        s.segment((px, f.bottom), (px, f.bottom + 4.0), Rgb::AXIS, 1.0);
        s.text(px, f.bottom + 6.0 + FONT, &trim_num(t), FONT * 0.8, Anchor::Middle);
    }
    s.segment((f.left, f.bottom), (f.right, f.bottom), Rgb::AXIS, 1.0);
    s.text((f.left + f.right) / 2.0, f.bottom + 2.0 * FONT + 14.0, label, FONT, Anchor::Middle);
}

fn trim_num(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn title(s: &mut Scene, text: &str) {
    s.text(s.width as f64 / 2.0, 22.0, text, FONT * 1.3, Anchor::Middle);
}

/// Dimension letters of a coefficient label such as `V=line|L=gpt`.
pub fn label_group(label: &str) -> String {
    label.split('|').filter_map(|p| p.split('=').next()).collect::<Vec<_>>().concat()
}

/// One density ridge per coefficient in `group` (e.g. "VL"), sorted by mean.
pub fn ridge_plot(set: &BootstrapSet, group: &str) -> Result<Figure, ReportError> {
    if set.coefficients.is_empty() {
        return Err(ReportError::EmptyBootstrap);
    }
    let cols: Vec<(usize, &String)> = set
        .column_labels
        .iter()
        .enumerate()
        .filter(|(_, l)| label_group(l) == group)
        .map(|(j, l)| (j + 1, l))
        .collect();
    if cols.is_empty() {
        return Err(ReportError::EmptyGroup(group.to_string()));
    }
    let mut ridges: Vec<(String, f64, Vec<f64>)> = cols
        .iter()
        .map(|(j, l)| {
            let v = set.coefficient_samples(*j);
            ((*l).clone(), mean(&v), v)
        })
        .collect();
    ridges.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(core::cmp::Ordering::Equal));
    let lo = ridges.iter().flat_map(|r| r.2.iter()).cloned().fold(f64::INFINITY, f64::min);
    let hi = ridges.iter().flat_map(|r| r.2.iter()).cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    const BINS: usize = 60;
    let w = (hi - lo) / BINS as f64;
    let mut data = Table::new(&format!("ridge_{group}"), &["coefficient", "mean", "bin_low", "bin_high", "count", "density"]);
    let mut dens: Vec<Vec<f64>> = Vec::new();
    for (label, m, v) in &ridges {
        let mut counts = vec![0usize; BINS];
        for x in v {
            let b = (((x - lo) / w) as usize).min(BINS - 1);
            counts[b] += 1;
        }
        let d: Vec<f64> = counts.iter().map(|c| *c as f64 / (v.len() as f64 * w)).collect();
        for b in 0..BINS {
            data.push(vec![
                label.clone(),
                f4(*m),
                f4(lo + b as f64 * w),
                f4(lo + (b + 1) as f64 * w),
                counts[b].to_string(),
                f4(d[b]),
            ]);
        }
        dens.push(d);
    }
    let row_h = 22.0;
    let label_w = label_margin(ridges.iter().map(|r| r.0.as_str()));
    let height = (80.0 + row_h * (ridges.len() as f64 + 2.0)).max(200.0);
    let mut s = Scene::new(900, height as u32);
    let f = Frame { left: label_w, top: 50.0, right: 870.0, bottom: height - 50.0 };
    let xs = f.x((lo, hi));
    title(&mut s, &format!("Bootstrapped coefficients: {group}"));
    let ticks = nice_ticks(lo, hi, 6);
    x_axis(&mut s, &f, &xs, &ticks, "coefficient");
    if lo < 0.0 && hi > 0.0 {
        s.segment((xs.map(0.0), f.top), (xs.map(0.0), f.bottom), Rgb::AXIS, 1.0);
    }
    // Ridges are drawn top (highest mean) to bottom, overlapping slightly.
    for (i, ((label, _, _), d)) in ridges.iter().zip(&dens).enumerate().rev() {
        let base = f.bottom - row_h * (i as f64 + 0.5);
        let peak = d.iter().cloned().fold(0.0, f64::max).max(1e-12);
        let mut pts = vec![(xs.map(lo), base)];
        for (b, v) in d.iter().enumerate() {
            pts.push((xs.map(lo + (b as f64 + 0.5) * w), base - v / peak * row_h * 1.6));
        }
        pts.push((xs.map(hi), base));
        s.polygon(pts, palette(i).mix(Rgb::WHITE, 0.3), Some(Rgb::AXIS));
        s.text(f.left - 6.0, base, label, FONT * 0.8, Anchor::End);
    }
    Ok(Figure {
        kind: FigureKind::Ridge,
        name: format!("ridge_{}", group.to_lowercase()),
        title: format!("Bootstrapped coefficients ({group})"),
        caption: format!("{} coefficients, {} resamples each, ordered by mean.", ridges.len(), set.coefficients.len()),
        data,
        scene: s,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: usize,
}

/// Quartiles (type 7) and 1.5 IQR whiskers; `None` for empty input.
pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let s = sorted(values);
    let q1 = quantile_sorted(&s, 0.25);
    let q3 = quantile_sorted(&s, 0.75);
    let iqr = q3 - q1;
    let (lo_f, hi_f) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = s.iter().copied().filter(|v| *v >= lo_f && *v <= hi_f).collect();
    Some(BoxStats {
        n: s.len(),
        min: s[0],
        q1,
        median: quantile_sorted(&s, 0.5),
        q3,
        max: s[s.len() - 1],
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: s.len() - inside.len(),
    })
}

fn group_key(s: &ScoreRecord) -> (ChartType, String, bool) {
    (s.chart_type, s.llm_id.clone(), s.vis_present)
}

fn group_label(k: &(ChartType, String, bool)) -> String {
    format!("{} / {} / {}", k.0.display_name(), k.1, if k.2 { "vis" } else { "no vis" })
}

pub const OVERLAP_PANELS: [&str; 4] = ["percentage", "jaccard", "dice", "overlap_coefficient"];

fn overlap_value(m: &OverlapMetrics, panel: usize) -> f64 {
    match panel {
        0 => m.percentage,
        1 => m.jaccard,
        2 => m.dice,
        _ => m.overlap_coef,
    }
}

/// Left margin wide enough for row labels drawn at 0.8 of the base font.
fn label_margin<'a>(labels: impl Iterator<Item = &'a str>) -> f64 {
    (labels.map(|l| text_width(l, FONT * 0.8)).fold(0.0, f64::max) + 14.0).clamp(120.0, 480.0)
}

/// Box plots of range-answer overlap by (chart, LLM, presence); one panel
/// per metric. Groups whose responses had no valid range stay in the
/// figure with an annotation.
pub fn overlap_boxplots(scores: &[ScoreRecord], bank: &[QuestionInstance]) -> Figure {
    let range_items: Vec<u8> = bank.iter().filter(|q| q.truth.kind() == GroundTruthKind::NumericRange).map(|q| q.id).collect();
    let mut groups: BTreeMap<(ChartType, String, bool), Vec<OverlapMetrics>> = BTreeMap::new();
    for s in scores.iter().filter(|s| !s.choices_present && range_items.contains(&s.question_id)) {
        let e = groups.entry(group_key(s)).or_default();
        if let Some(m) = s.overlap {
            e.push(m);
        }
    }
    let mut data = Table::new("overlap_boxplots", &["metric", "group", "n", "min", "q1", "median", "q3", "max", "whisker_low", "whisker_high", "note"]);
    let keys: Vec<_> = groups.keys().cloned().collect();
    let panel_h = 40.0 + 22.0 * keys.len().max(1) as f64;
    let height = 60.0 + 4.0 * (panel_h + 50.0);
    let left = label_margin(keys.iter().map(group_label).collect::<Vec<_>>().iter().map(String::as_str));
    let mut s = Scene::new(900, height as u32);
    title(&mut s, "Overlap between answered and true ranges");
    for (p, name) in OVERLAP_PANELS.iter().enumerate() {
        let top = 50.0 + p as f64 * (panel_h + 50.0);
        let f = Frame { left, top: top + 20.0, right: 860.0, bottom: top + panel_h };
        let xs = f.x((0.0, 1.0));
        s.text(f.left, top + 12.0, name, FONT, Anchor::Start);
        x_axis(&mut s, &f, &xs, &[0.0, 0.25, 0.5, 0.75, 1.0], "");
        for (i, k) in keys.iter().enumerate() {
            let cy = f.top + 11.0 + 22.0 * i as f64;
            s.text(f.left - 6.0, cy + 4.0, &group_label(k), FONT * 0.8, Anchor::End);
            let vals: Vec<f64> = groups[k].iter().map(|m| overlap_value(m, p)).collect();
            match box_stats(&vals) {
                None => {
                    s.text_colored(f.left + 6.0, cy + 4.0, "no valid responses", FONT * 0.8, Anchor::Start, Rgb(160, 0, 0));
                    let mut row = vec![name.to_string(), group_label(k), "0".into()];
                    row.extend(core::iter::repeat_n(String::new(), 7));
                    row.push("no valid responses".into());
                    data.push(row);
                }
                Some(b) => {
                    let c = palette(p);
                    s.segment((xs.map(b.whisker_low), cy), (xs.map(b.q1), cy), Rgb::AXIS, 1.0);
                    s.segment((xs.map(b.q3), cy), (xs.map(b.whisker_high), cy), Rgb::AXIS, 1.0);
                    let w = (xs.map(b.q3) - xs.map(b.q1)).max(1.0);
                    s.rect(xs.map(b.q1), cy - 7.0, w, 14.0, Some(c.mix(Rgb::WHITE, 0.3)), Some(Rgb::AXIS));
                    s.segment((xs.map(b.median), cy - 7.0), (xs.map(b.median), cy + 7.0), Rgb::BLACK, 2.0);
                    data.push(vec![
                        name.to_string(),
                        group_label(k),
                        b.n.to_string(),
                        f4(b.min),
                        f4(b.q1),
                        f4(b.median),
                        f4(b.q3),
                        f4(b.max),
                        f4(b.whisker_low),
                        f4(b.whisker_high),
                        String::new(),
                    ]);
                }
            }
        }
    }
    let empty = keys.iter().filter(|k| groups[*k].is_empty()).count();
    Figure {
        kind: FigureKind::Box,
        name: "overlap_boxplots".into(),
        title: "Range overlap".into(),
        caption: format!("{} groups; {} without any valid range response.", keys.len(), empty),
        data,
        scene: s,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

/// Mean with a t-based confidence interval; `None` below two values.
pub fn t_interval(values: &[f64], level: f64) -> Option<MeanCi> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values);
    let se = libm::sqrt(variance(values) / values.len() as f64);
    let h = t_quantile(0.5 + level / 2.0, (values.len() - 1) as f64) * se;
    Some(MeanCi { n: values.len(), mean: m, low: m - h, high: m + h })
}

/// Mean relative error with 95% t intervals by (chart, LLM, presence).
pub fn relative_error_ci(scores: &[ScoreRecord]) -> Figure {
    let mut groups: BTreeMap<(ChartType, String, bool), Vec<f64>> = BTreeMap::new();
    for s in scores {
        if let Some(e) = s.relative_error {
            groups.entry(group_key(s)).or_default().push(e);
        }
    }
    let mut data = Table::new("relative_error_ci", &["group", "n", "mean", "ci_low", "ci_high", "note"]);
    let cis: Vec<(String, Option<MeanCi>, usize)> = groups.iter().map(|(k, v)| (group_label(k), t_interval(v, 0.95), v.len())).collect();
    let hi = cis.iter().filter_map(|c| c.1.as_ref().map(|m| m.high)).fold(0.0f64, f64::max).max(1e-6);
    let height = 120.0 + 22.0 * cis.len().max(1) as f64;
    let mut s = Scene::new(900, height as u32);
    title(&mut s, "Relative error (95% CI)");
    let f = Frame { left: label_margin(cis.iter().map(|c| c.0.as_str())), top: 45.0, right: 860.0, bottom: height - 55.0 };
    let xs = f.x((0.0, hi * 1.05));
    x_axis(&mut s, &f, &xs, &nice_ticks(0.0, hi * 1.05, 6), "relative error");
    for (i, (label, ci, n)) in cis.iter().enumerate() {
        let cy = f.top + 11.0 + 22.0 * i as f64;
        s.text(f.left - 6.0, cy + 4.0, label, FONT * 0.8, Anchor::End);
        match ci {
            Some(c) => {
                let col = palette(i);
                s.segment((xs.map(c.low.max(0.0)), cy), (xs.map(c.high), cy), col, 2.0);
                s.circle(xs.map(c.mean), cy, 3.5, Some(col), None);
                data.push(vec![label.clone(), n.to_string(), f4(c.mean), f4(c.low), f4(c.high), String::new()]);
            }
            None => {
                s.text_colored(f.left + 6.0, cy + 4.0, "too few samples", FONT * 0.8, Anchor::Start, Rgb(160, 0, 0));
                data.push(vec![label.clone(), n.to_string(), String::new(), String::new(), String::new(), "too few samples".into()]);
            }
        }
    }
    Figure {
        kind: FigureKind::Ci,
        name: "relative_error_ci".into(),
        title: "Relative error".into(),
        caption: format!("Mean relative error with t-based 95% intervals over {} groups.", cis.len()),
        data,
        scene: s,
    }
}

/// Per-model latency over trial order; latencies above the outlier cutoff
/// are left out of the plot and counted in the caption.
pub fn latency_timeseries(records: &[TrialRecord]) -> Figure {
    let mut by: BTreeMap<&str, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        by.entry(r.condition.llm_id.as_str()).or_default().push(r);
    }
    let mut data = Table::new("latency_timeseries", &["llm", "index", "session_id", "timestamp_ms", "latency_s", "excluded"]);
    let mut series: Vec<(String, Vec<(f64, f64)>, usize)> = Vec::new();
    for (llm, rs) in by.iter_mut() {
        rs.sort_by(|a, b| a.timestamp_ms.cmp(&b.timestamp_ms).then_with(|| a.session_id.cmp(&b.session_id)));
        let mut pts = Vec::new();
        let mut excluded = 0;
        for (i, r) in rs.iter().enumerate() {
            let out = r.latency_s > LATENCY_OUTLIER_S;
            if out {
                excluded += 1;
            } else {
                pts.push((i as f64, r.latency_s));
            }
            data.push(vec![llm.to_string(), i.to_string(), r.session_id.clone(), r.timestamp_ms.to_string(), f3(r.latency_s), out.to_string()]);
        }
        series.push((llm.to_string(), pts, excluded));
    }
    let mut s = Scene::new(900, 420);
    title(&mut s, "Response latency");
    let f = Frame { left: 70.0, top: 45.0, right: 860.0, bottom: 360.0 };
    let total_excluded: usize = series.iter().map(|x| x.2).sum();
    if series.iter().all(|x| x.1.is_empty()) {
        s.text(450.0, 200.0, "no trials", FONT * 1.2, Anchor::Middle);
    } else {
        let n = series.iter().map(|x| x.1.len()).max().unwrap_or(1).max(2) as f64;
        let ymax = series.iter().flat_map(|x| x.1.iter().map(|p| p.1)).fold(0.0f64, f64::max).max(1.0) * 1.05;
        let xs = f.x((0.0, n - 1.0));
        let ys = f.y((0.0, ymax));
        y_axis(&mut s, &f, &ys, &nice_ticks(0.0, ymax, 5), "latency (s)");
        x_axis(&mut s, &f, &xs, &nice_ticks(0.0, n - 1.0, 8), "trial");
        for (i, (llm, pts, _)) in series.iter().enumerate() {
            let c = palette(i);
            s.line(pts.iter().map(|(x, y)| (xs.map(*x), ys.map(*y))).collect(), c, 1.0);
            s.rect(f.right - 150.0, f.top + 4.0 + 16.0 * i as f64, 10.0, 10.0, Some(c), None);
            s.text(f.right - 134.0, f.top + 13.0 + 16.0 * i as f64, llm, FONT * 0.8, Anchor::Start);
        }
    }
    let caption = format!(
        "{} trials; {} over {} s excluded{}.",
        records.len(),
        total_excluded,
        LATENCY_OUTLIER_S,
        series.iter().filter(|x| x.2 > 0).map(|x| format!(" ({}: {})", x.0, x.2)).collect::<Vec<_>>().concat()
    );
    s.text(450.0, 405.0, &caption, FONT * 0.8, Anchor::Middle);
    Figure { kind: FigureKind::Timeseries, name: "latency_timeseries".into(), title: "Latency".into(), caption, data, scene: s }
}

// ---------------------------------------------------------------------------
// Stats tables

/// Main-fit coefficient, bootstrap mean and test result per coefficient.
pub fn coefficient_table(main: &FitResult, set: Option<&BootstrapSet>, tests: &[TestResult], labels: &[String]) -> Table {
    let mut t = Table::new("coefficients", &["coefficient", "group", "coef", "mean_coef", "method", "p_value", "ci_low", "ci_high", "significant"]);
    let all = main.with_intercept();
    for (j, c) in all.iter().enumerate() {
        let label = if j == 0 { "intercept".to_string() } else { labels[j - 1].clone() };
        let group = if j == 0 { String::new() } else { label_group(&label) };
        let mc = set.map(|s| mean(&s.coefficient_samples(j))).unwrap_or(f64::NAN);
        let test = tests.iter().find(|r| r.target == label);
        t.push(vec![
            label,
            group,
            f4(*c),
            f4(mc),
            test.map(|r| method_name(r)).unwrap_or_default(),
            test.map(|r| format!("{:.4e}", r.p_value)).unwrap_or_default(),
            test.map(|r| f4(r.ci_low)).unwrap_or_default(),
            test.map(|r| f4(r.ci_high)).unwrap_or_default(),
            test.map(|r| r.significant.to_string()).unwrap_or_default(),
        ]);
    }
    t
}

fn method_name(r: &TestResult) -> String {
    match r.method {
        crate::stats::TestMethod::TTest => "t-test",
        crate::stats::TestMethod::WilcoxonEcdf => "wilcoxon-ecdf",
        crate::stats::TestMethod::BetaDifference => "beta-difference",
    }
    .to_string()
}

pub fn test_table(name: &str, tests: &[TestResult]) -> Table {
    let mut t = Table::new(name, &["target", "method", "sidedness", "estimate", "p_value", "ci_low", "ci_high", "significant"]);
    for r in tests {
        t.push(vec![
            r.target.clone(),
            method_name(r),
            match r.sidedness {
                crate::stats::Sidedness::TwoSided => "two-sided".into(),
                crate::stats::Sidedness::Greater => "greater".into(),
            },
            f4(r.estimate),
            format!("{:.4e}", r.p_value),
            f4(r.ci_low),
            f4(r.ci_high),
            r.significant.to_string(),
        ]);
    }
    t
}

pub fn cost_table(c: &CostReport) -> Table {
    let mut t = Table::new(
        "costs",
        &["llm", "trials", "failed", "total_cost", "mean_cost", "cost_per_pass", "mean_latency_s", "mean_latency_filtered_s", "outliers", "max_latency_s"],
    );
    for m in &c.per_model {
        t.push(vec![
            m.llm_id.clone(),
            m.trials.to_string(),
            m.failed.to_string(),
            f4(m.total_cost),
            f4(m.mean_cost),
            f4(m.cost_per_pass),
            f3(m.mean_latency_s),
            f3(m.mean_latency_filtered_s),
            m.outliers.to_string(),
            f3(m.max_latency_s),
        ]);
    }
    t
}

pub fn tuning_table(r: &TuningResult) -> Table {
    let mut t = Table::new("tuning", &["combo", "hyperparameters", "mean_ap", "mean_auprc", "sd_auprc", "mean_auroc", "mean_f1", "mean_accuracy", "nonconverged", "selected"]);
    for s in &r.summary {
        t.push(vec![
            s.combo.to_string(),
            s.hyper.label(),
            f4(s.mean.average_precision),
            f4(s.mean.auprc),
            f4(s.sd_auprc),
            f4(s.mean.auroc),
            f4(s.mean.f1),
            f4(s.mean.accuracy),
            s.nonconverged.to_string(),
            (s.combo == r.best).to_string(),
        ]);
    }
    t
}

// ---------------------------------------------------------------------------
// HTML

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HtmlSection {
    pub heading: String,
    pub paragraphs: Vec<String>,
    /// (image path, caption)
    pub images: Vec<(String, String)>,
    pub tables: Vec<Table>,
    /// Rows beyond this count are left to the CSV export.
    pub max_rows: usize,
}

const CLASS_STYLE: &str = "td.better{background:#c6e8c6}td.close{background:#f3f3f3}td.worse{background:#f4c7c3}";

pub fn html_summary(title: &str, sections: &[HtmlSection]) -> String {
    let mut h = String::new();
    h.push_str("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>");
    h.push_str(&esc(title));
    h.push_str("</title><style>body{font-family:sans-serif;margin:2em;max-width:1100px}table{border-collapse:collapse;font-size:12px;margin:1em 0}td,th{border:1px solid #ccc;padding:2px 6px;text-align:left}figure{margin:1em 0}");
    h.push_str(CLASS_STYLE);
    h.push_str("</style></head><body>\n<h1>");
    h.push_str(&esc(title));
    h.push_str("</h1>\n");
    for sec in sections {
        h.push_str(&format!("<h2>{}</h2>\n", esc(&sec.heading)));
        for p in &sec.paragraphs {
            h.push_str(&format!("<p>{}</p>\n", esc(p)));
        }
        for (img, cap) in &sec.images {
            h.push_str(&format!("<figure><img src=\"{}\" alt=\"{}\"><figcaption>{}</figcaption></figure>\n", esc(img), esc(cap), esc(cap)));
        }
        for t in &sec.tables {
            h.push_str("<table><tr>");
            for c in &t.header {
                h.push_str(&format!("<th>{}</th>", esc(c)));
            }
            h.push_str("</tr>\n");
            let limit = if sec.max_rows == 0 { t.rows.len() } else { sec.max_rows.min(t.rows.len()) };
            for r in &t.rows[..limit] {
                h.push_str("<tr>");
                for (i, c) in r.iter().enumerate() {
                    // Color the accuracy cell preceding a class column.
                    let class = r.get(i + 1).filter(|_| t.header.get(i + 1).is_some_and(|hh| hh.ends_with(" class"))).map(|n| n.as_str());
                    match class {
                        Some(k @ ("better" | "close" | "worse")) => h.push_str(&format!("<td class=\"{k}\">{}</td>", esc(c))),
                        _ => h.push_str(&format!("<td>{}</td>", esc(c))),
                    }
                }
                h.push_str("</tr>\n");
            }
            h.push_str("</table>\n");
            if limit < t.rows.len() {
                h.push_str(&format!("<p>{} more rows in {}.csv</p>\n", t.rows.len() - limit, esc(&t.name)));
            }
        }
    }
    h.push_str("</body></html>\n");
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_examples() {
        assert_eq!(color_class(104.0 / 120.0, 0.77), ColorClass::Better);
        assert_eq!(color_class(0.43, 0.47), ColorClass::Close);
        assert_eq!(color_class(0.30, 0.47), ColorClass::Worse);
        assert_eq!(color_class(0.82, 0.77), ColorClass::Close);
    }

    #[test]
    fn quartiles_match_sorting() {
        let v = [7.0, 1.0, 3.0, 9.0, 5.0];
        let b = box_stats(&v).unwrap();
        assert_eq!((b.q1, b.median, b.q3), (3.0, 5.0, 7.0));
        assert!(box_stats(&[]).is_none());
        let ones = box_stats(&[1.0; 4]).unwrap();
        assert_eq!((ones.q1, ones.median, ones.q3), (1.0, 1.0, 1.0));
    }

    #[test]
    fn t_interval_by_formula() {
        let v = [1.0, 2.0, 3.0, 4.0];
        let ci = t_interval(&v, 0.95).unwrap();
        let h = 3.182446305284263 * libm::sqrt(variance(&v) / 4.0);
        assert!((ci.low - (2.5 - h)).abs() < 1e-6 && (ci.high - (2.5 + h)).abs() < 1e-6);
        let z = t_interval(&[2.0, 2.0, 2.0], 0.95).unwrap();
        assert_eq!((z.low, z.high), (2.0, 2.0));
        assert!(t_interval(&[1.0], 0.95).is_none());
    }

    #[test]
    fn group_letters() {
        assert_eq!(label_group("V=line|L=gpt"), "VL");
        assert_eq!(label_group("V=bar|T=Retrieve Value|L=gpt|P=vis"), "VTLP");
    }
}
