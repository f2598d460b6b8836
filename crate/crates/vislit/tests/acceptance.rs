//! Acceptance checks. Prints one `criterion N: PASS|FAIL` line per
//! criterion and exits non-zero if a criterion fails unexpectedly.
//!
//! Criterion 4 carries one known conflict: the stated Dice value for
//! A=[0,4], B=[2,6] is 0.4, while 2|A∩B|/(|A|+|B|) gives 0.5. That
//! sub-check is reported as FAIL; the run only aborts if the computed value
//! stops matching the formula.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;
use vislit::io::read_jsonl;
use vislit::{Pipeline, RunConfig};
use vislit_core::chart::{ChartInstance, ChartType, TrendDirection};
use vislit_core::chartgen::{decontextualize, generate_chart, GenerationConstraints};
use vislit_core::qbank::{
    build_item_bank, derive_answer, templates, templates_for, Answer, BankMode, BankOptions, QuestionInstance, QuestionTemplate, Rule,
    MIN_STATEMENT_CORRELATION, TREND_CLEAR_RISE, TREND_FLAT_RISE, TREND_FLAT_SPREAD,
};
use vislit_core::runner::{plan_trials, rotation, summarize_costs, Condition, Experiment, OrderStrategy, TrialRecord, RECORD_SCHEMA_VERSION};
use vislit_core::scoring::{range_overlap_metrics, ScoreRecord};
use vislit_core::stats::design::{build_design_matrix, DesignMatrix, DesignSpace, ACTIVE_PER_ROW};
use vislit_core::stats::hypothesis::{test_probability_difference, DiffOptions, Sidedness};
use vislit_core::stats::logistic::{fit_logistic, FitOptions, HyperParams};
use vislit_core::stats::special::{binomial_interval, sigmoid};
use vislit_core::stats::tune::{subsample, tune_hyperparameters, CvOptions, Grid};

struct Outcome {
    pass: bool,
    /// Failure that matches a documented conflict rather than a defect.
    expected_failure: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Outcome {
        Outcome { pass, expected_failure: false, detail }
    }
}

// ---------------------------------------------------------------------------
// Criterion 1: brute-force recomputation of every template's answer

#[derive(Debug, Clone, PartialEq)]
enum Truth {
    Num(f64),
    Range(f64, f64),
    Label(String),
    Bool(bool),
    Trend(TrendDirection),
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn same(a: &Truth, b: &Truth) -> bool {
    match (a, b) {
        (Truth::Num(x), Truth::Num(y)) => close(*x, *y),
        (Truth::Range(a0, a1), Truth::Range(b0, b1)) => close(*a0, *b0) && close(*a1, *b1),
        _ => a == b,
    }
}

fn from_answer(a: &Answer) -> Truth {
    match a {
        Answer::NumericValue { value } => Truth::Num(*value),
        Answer::NumericRange { low, high } => Truth::Range(*low, *high),
        Answer::CategoryLabel { value } => Truth::Label(value.clone()),
        Answer::Boolean { value } => Truth::Bool(*value),
        Answer::TrendDirection { value } => Truth::Trend(*value),
    }
}

fn shown<'a>(c: &'a ChartInstance, name: &'a str) -> &'a str {
    for (orig, now) in &c.label_map {
        if orig == name {
            return now;
        }
    }
    name
}

fn column<'a>(c: &'a ChartInstance, s: &str) -> Option<&'a [f64]> {
    let n = shown(c, s);
    c.series.iter().find(|x| x.name == n).map(|x| x.values.as_slice())
}

fn row(c: &ChartInstance, k: &str) -> Option<usize> {
    let n = shown(c, k);
    c.categories.iter().position(|x| x == n)
}

fn at(c: &ChartInstance, s: &str, k: &str) -> Option<f64> {
    Some(column(c, s)?[row(c, k)?])
}

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

/// (slope, intercept, r) by the textbook sums.
fn line_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let vx = sxx - sx * sx / n;
    let vy = syy - sy * sy / n;
    let cxy = sxy - sx * sy / n;
    if vx <= 1e-12 {
        return None;
    }
    let slope = cxy / vx;
    let r = if vy <= 1e-12 { 0.0 } else { cxy / (vx * vy).sqrt() };
    Some((slope, (sy - slope * sx) / n, r))
}

/// Index of the strict winner, if it beats every other value by at least
/// `margin` times the spread.
fn winner(values: &[f64], max: bool, margin: f64) -> Option<usize> {
    if values.len() < 2 {
        return None;
    }
    let v: Vec<f64> = values.iter().map(|x| if max { *x } else { -*x }).collect();
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    let runner = (0..v.len()).filter(|j| *j != best).map(|j| v[j]).fold(f64::NEG_INFINITY, f64::max);
    let spread = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
    if close(v[best], runner) || v[best] - runner + 1e-9 < margin * spread {
        return None;
    }
    Some(best)
}

fn bin(bins: &[(f64, f64)], v: f64) -> Option<usize> {
    let last = bins.len().checked_sub(1)?;
    (0..bins.len()).find(|&i| {
        let (lo, hi) = bins[i];
        v >= lo - 1e-9 && (v < hi - 1e-9 || (i == last && v <= hi + 1e-9))
    })
}

fn param(c: &ChartInstance, key: &str) -> Option<f64> {
    c.shaping.params.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
}

fn point<'a>(c: &'a ChartInstance, label: &str) -> Option<&'a vislit_core::chart::DataPoint> {
    let n = shown(c, label);
    c.points.iter().find(|p| p.label.as_deref() == Some(n))
}

fn oracle(t: &QuestionTemplate, c: &ChartInstance) -> Option<Truth> {
    let margin = c.shaping.extremum_margin;
    let xs: Vec<f64> = c.points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = c.points.iter().map(|p| p.y).collect();
    const UNEMPLOYMENT: &str = "Unemployment rate";
    Some(match t.rule {
        Rule::CellValue { series, category } => Truth::Num(at(c, series, category)?),
        Rule::ShareOfTotal { series, category } => {
            let i = row(c, category)?;
            let total: f64 = c.series.iter().map(|s| s.values[i]).sum();
            if total <= 0.0 {
                return None;
            }
            Truth::Num(round_to(at(c, series, category)? / total, 0.01))
        }
        Rule::CellRatio { num, den, category } => {
            let d = at(c, den, category)?;
            if d <= 0.0 {
                return None;
            }
            Truth::Num(round_to(at(c, num, category)? / d, 0.01))
        }
        Rule::Extremum { series, max } => Truth::Label(c.categories[winner(column(c, series)?, max, margin)?].clone()),
        Rule::ValueRange { series } => {
            let v = column(c, series)?;
            Truth::Range(v.iter().cloned().fold(f64::INFINITY, f64::min), v.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        }
        Rule::PointYRange => {
            if ys.is_empty() {
                return None;
            }
            Truth::Range(ys.iter().cloned().fold(f64::INFINITY, f64::min), ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        }
        Rule::Trend { series } => {
            let tr = c.shaping.trend.as_ref()?;
            if tr.series != shown(c, series) {
                return None;
            }
            let v = column(c, series)?;
            let w = &v[tr.start..=tr.end.min(v.len() - 1)];
            let idx: Vec<f64> = (0..w.len()).map(|i| i as f64).collect();
            let (slope, _, _) = line_fit(&idx, w)?;
            let rise = slope * (w.len() - 1) as f64;
            let spread = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - w.iter().cloned().fold(f64::INFINITY, f64::min);
            let span = c.axis.y_range.1 - c.axis.y_range.0;
            if rise.abs() <= TREND_FLAT_RISE * span && spread <= TREND_FLAT_SPREAD * span {
                Truth::Trend(TrendDirection::Flat)
            } else if rise >= TREND_CLEAR_RISE * span {
                Truth::Trend(TrendDirection::Increasing)
            } else if rise <= -TREND_CLEAR_RISE * span {
                Truth::Trend(TrendDirection::Decreasing)
            } else {
                return None;
            }
        }
        Rule::Difference { series, from, to } => {
            let d = at(c, series, to)? - at(c, series, from)?;
            if d <= 0.0 {
                return None;
            }
            Truth::Num(round_to(d, c.axis.resolution))
        }
        Rule::CountBelow { series, category } => {
            let v = column(c, series)?;
            let i = row(c, category)?;
            let mut below = 0;
            for (j, x) in v.iter().enumerate() {
                if j != i && close(*x, v[i]) {
                    return None;
                }
                if *x < v[i] {
                    below += 1;
                }
            }
            Truth::Num(below as f64)
        }
        Rule::Compare { left, right, greater } => {
            let (l, r) = (at(c, left.0, left.1)?, at(c, right.0, right.1)?);
            if close(l, r) {
                return None;
            }
            Truth::Bool(if greater { l > r } else { l < r })
        }
        Rule::RatioGreater { num, den, a, b } => {
            let (da, db) = (at(c, den, a)?, at(c, den, b)?);
            if da <= 0.0 || db <= 0.0 {
                return None;
            }
            let (ra, rb) = (at(c, num, a)? / da, at(c, num, b)? / db);
            if close(ra, rb) {
                return None;
            }
            Truth::Bool(ra > rb)
        }
        Rule::AlwaysGreater { a, b } => {
            let (va, vb) = (column(c, a)?, column(c, b)?);
            let mut all = true;
            for (x, y) in va.iter().zip(vb) {
                if close(*x, *y) {
                    return None;
                }
                all &= x > y;
            }
            Truth::Bool(all)
        }
        Rule::ModalBin => {
            let i = winner(&c.series.first()?.values, true, margin)?;
            Truth::Range(c.axis.bins[i].0, c.axis.bins[i].1)
        }
        Rule::PointYAtParam { key } => {
            let x = param(c, key)?;
            let hits: Vec<f64> = c.points.iter().filter(|p| close(p.x, x)).map(|p| p.y).collect();
            if hits.len() != 1 {
                return None;
            }
            Truth::Num(hits[0])
        }
        Rule::MaxPointX => Truth::Num(xs[winner(&xs, true, margin)?]),
        Rule::MaxPointXLabel => Truth::Label(c.points[winner(&xs, true, margin)?].label.clone().unwrap_or_default()),
        Rule::AnomalyX | Rule::AnomalyLabel => {
            let multiple = c.shaping.anomaly.as_ref().map(|a| a.multiple).unwrap_or(1.0);
            let (slope, icept, _) = line_fit(&xs, &ys)?;
            let res: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| (y - icept - slope * x).abs()).collect();
            let mut top = 0;
            for i in 1..res.len() {
                if res[i] > res[top] {
                    top = i;
                }
            }
            let second = (0..res.len()).filter(|j| *j != top).map(|j| res[j]).fold(f64::NEG_INFINITY, f64::max);
            if res.len() < 2 || res[top] < multiple * second || close(res[top], second) {
                return None;
            }
            if matches!(t.rule, Rule::AnomalyX) {
                Truth::Num(xs[top])
            } else {
                Truth::Label(c.points[top].label.clone().unwrap_or_default())
            }
        }
        Rule::ClusterAtStated => {
            let cl = c.shaping.cluster.as_ref()?;
            let (x0, x1) = c.axis.x_range.unwrap_or((0.0, 1.0));
            let (y0, y1) = c.axis.y_range;
            let dx = (cl.stated.0 - cl.center.0) / (x1 - x0);
            let dy = (cl.stated.1 - cl.center.1) / (y1 - y0);
            Truth::Bool((dx * dx + dy * dy).sqrt() <= cl.radius)
        }
        Rule::SlopeStatement { negative, on_size } => {
            let resp: Vec<f64> = if on_size { c.points.iter().map(|p| p.size.unwrap_or(0.0)).collect() } else { ys.clone() };
            let (slope, _, r) = line_fit(&xs, &resp)?;
            if r.abs() < MIN_STATEMENT_CORRELATION {
                return None;
            }
            Truth::Bool(if negative { slope < 0.0 } else { slope > 0.0 })
        }
        Rule::SameXAllEqual { key } => {
            let x = param(c, key)?;
            let hits: Vec<f64> = c.points.iter().filter(|p| close(p.x, x)).map(|p| p.y).collect();
            if hits.len() < 2 {
                return None;
            }
            Truth::Bool(hits.iter().all(|y| close(*y, hits[0])))
        }
        Rule::PointY { label } => Truth::Num(point(c, label)?.y),
        Rule::PointSizeGreater { a, b } => {
            let (sa, sb) = (point(c, a)?.size?, point(c, b)?.size?);
            if close(sa, sb) {
                return None;
            }
            Truth::Bool(sa > sb)
        }
        Rule::ColorBin { state } => {
            let i = bin(&c.axis.bins, at(c, UNEMPLOYMENT, state)?)?;
            Truth::Range(c.axis.bins[i].0, c.axis.bins[i].1)
        }
        Rule::MaxState => {
            let v = column(c, UNEMPLOYMENT)?;
            let i = winner(v, true, margin)?;
            let b = bin(&c.axis.bins, v[i]);
            if (0..v.len()).any(|j| j != i && bin(&c.axis.bins, v[j]) == b) {
                return None;
            }
            let code = &c.categories[i];
            Truth::Label(vislit_core::geo::state_name(code).unwrap_or_else(|| code.clone()))
        }
        Rule::StateGreater { a, b } => {
            let (va, vb) = (at(c, UNEMPLOYMENT, a)?, at(c, UNEMPLOYMENT, b)?);
            if bin(&c.axis.bins, va) == bin(&c.axis.bins, vb) {
                return None;
            }
            Truth::Bool(va > vb)
        }
        Rule::NestedIn { leaf, parent } => Truth::Bool(c.parents.get(row(c, leaf)?)? == shown(c, parent)),
    })
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let seeds: Vec<u64> = (0..100).map(|_| rng.random::<u32>() as u64).collect();
    let constraints = GenerationConstraints::default();
    let (mut checked, mut agreed, mut defined) = (0usize, 0usize, 0usize);
    let mut first_mismatch = None;
    for &seed in &seeds {
        for ct in ChartType::ALL {
            let inst = match generate_chart(ct, seed, &constraints) {
                Ok(i) => i,
                Err(e) => {
                    first_mismatch.get_or_insert(format!("{} seed {seed}: generation failed: {e}", ct.as_str()));
                    checked += 1;
                    continue;
                }
            };
            let mut variants = vec![inst.clone()];
            if ct.decontextualizable() {
                variants.push(decontextualize(&inst).expect("decontextualizable").0);
            }
            for c in &variants {
                for t in templates_for(ct) {
                    checked += 1;
                    let got = derive_answer(t, c).ok().map(|g| from_answer(&g.answer));
                    let want = oracle(t, c);
                    let ok = match (&got, &want) {
                        (Some(a), Some(b)) => same(a, b),
                        (None, None) => true,
                        _ => false,
                    };
                    if got.is_some() {
                        defined += 1;
                    }
                    if ok {
                        agreed += 1;
                    } else {
                        first_mismatch.get_or_insert(format!("template {} seed {seed} {:?}: derive {got:?} vs oracle {want:?}", t.id, c.context_mode));
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let templates_seen = templates().len();
    let pass = agreed == checked && templates_seen == 53 && secs < 60.0;
    let mut detail = format!("{agreed}/{checked} agree ({defined} defined) over {} seeds x {templates_seen} templates incl. decontextualized charts, {secs:.1} s", seeds.len());
    if let Some(m) = first_mismatch {
        detail.push_str(&format!("; first mismatch: {m}"));
    }
    Outcome::new(pass, detail)
}

// ---------------------------------------------------------------------------
// Criterion 2: counterbalancing

fn full_bank(seed: u64) -> Vec<QuestionInstance> {
    let c = GenerationConstraints::default();
    let charts: BTreeMap<ChartType, ChartInstance> = ChartType::ALL.iter().map(|ct| (*ct, generate_chart(*ct, seed, &c).expect("chart"))).collect();
    build_item_bank(&charts, BankMode::Full, &BankOptions::default()).expect("bank")
}

fn criterion_2() -> Outcome {
    let bank = full_bank(2024);
    let mut problems = Vec::new();
    let mut by_k: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut conditions: Vec<Condition> = Vec::new();
    for e in [Experiment::E1, Experiment::E2, Experiment::E3, Experiment::E4] {
        for c in e.conditions("m") {
            if !conditions.contains(&c) {
                conditions.push(c);
            }
        }
    }
    for cond in &conditions {
        let plans = plan_trials(&bank, cond, "e", 120, 17, OrderStrategy::Rotations).expect("plans");
        if plans.len() != 6360 {
            problems.push(format!("{}: {} plans", cond.tag(), plans.len()));
        }
        if !cond.choices_present {
            if plans.iter().any(|p| p.option_order.is_some()) {
                problems.push(format!("{}: open arm carries an option order", cond.tag()));
            }
            continue;
        }
        for q in &bank {
            let k = q.options.len();
            let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
            for p in plans.iter().filter(|p| p.question_id == q.id) {
                *counts.entry(p.option_order.clone().unwrap_or_default()).or_default() += 1;
            }
            let want = 120 / k;
            let exact = counts.len() == k && counts.iter().all(|(order, n)| *n == want && (0..k).any(|r| rotation(k, r) == *order));
            if !exact {
                problems.push(format!("{} item {}: {:?}", cond.tag(), q.id, counts.values().collect::<Vec<_>>()));
            }
            let e = by_k.entry(k).or_default();
            e.0 += 1;
            e.1 = want;
        }
    }
    let per_k: Vec<String> = by_k.iter().map(|(k, (_, n))| format!("{k}-option x{n}")).collect();
    let pass = bank.len() == 53 && problems.is_empty() && by_k.get(&4).map(|v| v.1) == Some(30) && by_k.get(&3).map(|v| v.1) == Some(40) && by_k.get(&2).map(|v| v.1) == Some(60);
    let mut detail = format!("{} items, {} conditions x 6360 plans, rotations {}", bank.len(), conditions.len(), per_k.join(", "));
    if let Some(p) = problems.first() {
        detail.push_str(&format!("; {} problems, first: {p}", problems.len()));
    }
    Outcome::new(pass, detail)
}

// ---------------------------------------------------------------------------
// Criteria 3 and 7 share one mock dataset

fn mock_config(out: &Path, backends: &str, analysis: &str) -> RunConfig {
    let text = format!("experiments = [\"e1\", \"e2\"]\nn_per_question = 120\n\n[analysis]\n{analysis}\n\n{backends}");
    let mut cfg = RunConfig::from_toml(&text).expect("config");
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn pooled_scores(p: &Pipeline) -> Vec<ScoreRecord> {
    let mut all = Vec::new();
    for e in [Experiment::E1, Experiment::E2] {
        all.extend(p.load_scores(e, "acceptance").expect("scores"));
    }
    all
}

fn mock_design(dir: &Path) -> DesignMatrix {
    let backends = "[[backends]]\nkind = \"mock-knowledge\"\nllm_id = \"gpt\"\nseed = 1\n\n[[backends]]\nkind = \"mock-knowledge\"\nllm_id = \"gemini\"\nseed = 2\n";
    let cfg = mock_config(dir, backends, "tune = false\nresamples = 100\nhyper = { penalty = \"l2\", solver = \"lbfgs\", c = 1.0 }");
    let p = Pipeline::new(cfg);
    p.cmd_generate().expect("gen");
    p.cmd_bank().expect("bank");
    p.cmd_run().expect("run");
    p.cmd_score().expect("score");
    build_design_matrix(&pooled_scores(&p)).expect("design")
}

fn criterion_3(m: &DesignMatrix) -> Outcome {
    let groups = m.space.group_counts();
    let mut bad_rows = 0;
    for r in 0..m.n_rows() {
        let dense = m.dense_row(r);
        let ones = dense.iter().filter(|v| **v == 1).count();
        let mut act = m.active(r).to_vec();
        act.dedup();
        if ones != ACTIVE_PER_ROW || act.len() != ACTIVE_PER_ROW {
            bad_rows += 1;
        }
    }
    let pass = m.n_columns() == 629 && groups == [24, 133, 276, 196] && bad_rows == 0 && m.n_rows() == 25_440 && m.dropped == 0;
    Outcome::new(
        pass,
        format!(
            "{} columns ({}/{}/{}/{}), {} rows, {} rows without exactly {ACTIVE_PER_ROW} active columns, {} cells",
            m.n_columns(),
            groups[0],
            groups[1],
            groups[2],
            groups[3],
            m.n_rows(),
            bad_rows,
            m.space.n_cells()
        ),
    )
}

fn criterion_7(m: &DesignMatrix) -> Outcome {
    let start = Instant::now();
    let sub = subsample(m, 0.1, 29);
    let grid = Grid::full();
    let r = tune_hyperparameters(&sub, &grid, &CvOptions { folds: 10, repetitions: 10, seed: 29, fit: FitOptions::default() }).expect("tuning");
    let secs = start.elapsed().as_secs_f64();
    let top = r.summary.iter().map(|s| s.mean.auprc).fold(f64::NEG_INFINITY, f64::max);
    let picked = r.summary[r.best].mean.auprc;
    let by_auprc = (picked - top).abs() <= 1e-12;
    let pass = grid.combos.len() == 117 && r.scores.len() == 11_700 && by_auprc && secs < 1800.0;
    Outcome::new(
        pass,
        format!(
            "{} combos, {} CV scores on {} of {} rows, best {} (mean AUPRC {picked:.4}, max {top:.4}), {secs:.0} s",
            grid.combos.len(),
            r.scores.len(),
            sub.n_rows(),
            m.n_rows(),
            r.best_hyper().label()
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 4: interval overlap metrics

fn criterion_4() -> Outcome {
    let j = range_overlap_metrics((1.0, 4.0), (3.0, 6.0)).expect("jaccard example").jaccard;
    let d = range_overlap_metrics((0.0, 4.0), (2.0, 6.0)).expect("dice example").dice;
    let o = range_overlap_metrics((1.0, 3.0), (2.0, 8.0)).expect("overlap example").overlap_coef;
    let jaccard_ok = (j - 0.2).abs() < 1e-12;
    let dice_ok = (d - 0.4).abs() < 1e-12;
    let dice_is_formula = (d - 2.0 * 2.0 / (4.0 + 4.0)).abs() < 1e-12;
    let overlap_ok = (o - 0.5).abs() < 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    let mut pairs = 0;
    while pairs < 10_000 {
        let mut iv = || {
            let a: f64 = rng.random_range(0.0..100.0);
            let b: f64 = rng.random_range(0.0..100.0);
            (a.min(b), a.max(b))
        };
        let (a, b) = (iv(), iv());
        let (Ok(ab), Ok(ba)) = (range_overlap_metrics(a, b), range_overlap_metrics(b, a)) else { continue };
        pairs += 1;
        let commutes = ab == ba;
        let ordered = ab.jaccard <= ab.dice + 1e-12 && ab.dice <= 1.0 + 1e-12 && ab.jaccard <= ab.overlap_coef + 1e-12;
        if !commutes || !ordered {
            violations += 1;
        }
    }
    let pass = jaccard_ok && dice_ok && overlap_ok && violations == 0;
    let detail = format!(
        "jaccard {j:.4} ({}), dice {d:.4} vs stated 0.4 ({}; formula gives 0.5), overlap {o:.4} ({}), {violations} violations over {pairs} random pairs",
        if jaccard_ok { "ok" } else { "FAIL" },
        if dice_ok { "ok" } else { "FAIL" },
        if overlap_ok { "ok" } else { "FAIL" }
    );
    let known = !dice_ok && dice_is_formula && jaccard_ok && overlap_ok && violations == 0;
    Outcome { pass, expected_failure: known, detail }
}

// ---------------------------------------------------------------------------
// Criterion 5: statistical engine on synthetic data

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let space = DesignSpace::new(&["gemini".to_string(), "gpt".to_string()]);
    let cells = space.n_cells();
    // Coefficients in the span of the cell rows with zero-sum cell weights:
    // exactly the minimum-norm representation an unpenalized fit returns
    // for an overparameterized design. Presence, model and task contrasts
    // plus noise give some coefficients of both signs above 0.5.
    let sign = |b: bool| if b { 1.0 } else { -1.0 };
    let mut a: Vec<f64> = space
        .cells
        .iter()
        .map(|k| sign(k.vis) + 0.7 * sign(k.llm == "gpt") + 0.5 * sign(k.task.index() % 2 == 0) + 0.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mean_a = a.iter().sum::<f64>() / cells as f64;
    a.iter_mut().for_each(|v| *v -= mean_a);
    let mut beta = vec![0.0; space.n_columns()];
    for (ci, act) in space.cell_active.iter().enumerate() {
        for &j in act {
            beta[j as usize] += a[ci];
        }
    }
    let eta = |b: &[f64], ci: usize| space.cell_active[ci].iter().map(|&j| b[j as usize]).sum::<f64>();
    let max_eta = (0..cells).map(|ci| eta(&beta, ci).abs()).fold(0.0, f64::max);
    let scale = 2.5 / max_eta;
    beta.iter_mut().for_each(|b| *b *= scale);

    let n = 20_000;
    let mut row_cell = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let ci = rng.random_range(0..cells);
        row_cell.push(ci as u32);
        y.push(rng.random::<f64>() < sigmoid(eta(&beta, ci)));
    }
    let m = DesignMatrix { space: space.clone(), row_cell, y, dropped: 0 };
    let fit = fit_logistic(&m, &HyperParams::none(), &FitOptions::default()).expect("fit");
    let strong: Vec<usize> = (0..beta.len()).filter(|j| beta[*j].abs() >= 0.5).collect();
    let wrong = strong.iter().filter(|j| fit.coefficients[**j].signum() != beta[**j].signum()).count();
    let signs_ok = !strong.is_empty() && wrong == 0 && fit.converged;

    // Identical paired samples.
    let opts = DiffOptions { mc_draws: 200_000, grid_step: 1e-4 };
    let mut quiet = 0;
    for _ in 0..100 {
        let (p, q) = (rng.random_range(2.0..30.0), rng.random_range(2.0..30.0));
        let d = Beta::new(p, q).expect("beta");
        let s: Vec<f64> = (0..1000).map(|_| d.sample(&mut rng)).collect();
        let t = test_probability_difference(&s, &s, Sidedness::TwoSided, &opts, "identical").expect("test");
        if t.p_value >= 0.05 {
            quiet += 1;
        }
    }
    let null_ok = quiet >= 95;

    // Beta(90,10) vs Beta(10,90) against a direct Monte Carlo oracle.
    let (hi, lo) = (Beta::new(90.0, 10.0).expect("beta"), Beta::new(10.0, 90.0).expect("beta"));
    let a_s: Vec<f64> = (0..1000).map(|_| hi.sample(&mut rng)).collect();
    let b_s: Vec<f64> = (0..1000).map(|_| lo.sample(&mut rng)).collect();
    let t = test_probability_difference(&a_s, &b_s, Sidedness::TwoSided, &DiffOptions::default(), "beta").expect("test");
    let mut mc: Vec<f64> = (0..1_000_000).map(|_| hi.sample(&mut rng) - lo.sample(&mut rng)).collect();
    mc.sort_by(|x, y| x.total_cmp(y));
    let q = |p: f64| mc[((mc.len() - 1) as f64 * p).round() as usize];
    let (o_lo, o_hi) = (q(0.025), q(0.975));
    let ci_ok = t.significant && (t.ci_low - o_lo).abs() <= 0.02 && (t.ci_high - o_hi).abs() <= 0.02;

    Outcome::new(
        signs_ok && null_ok && ci_ok,
        format!(
            "signs {}/{} with |beta|>=0.5 (converged {}); identical pairs p>=0.05 in {quiet}/100; beta case p={:.2e} CI [{:.4}, {:.4}] vs oracle [{o_lo:.4}, {o_hi:.4}]",
            strong.len() - wrong,
            strong.len(),
            fit.converged,
            t.p_value,
            t.ci_low,
            t.ci_high
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 6: end-to-end determinism with a uniform guesser

fn uniform_run(dir: &Path) -> Pipeline {
    let backends = "[[backends]]\nkind = \"mock-uniform\"\nllm_id = \"uniform\"\nseed = 1\n";
    let cfg = mock_config(dir, backends, "tune = false\nresamples = 100\nmc_draws = 100000\nhyper = { penalty = \"l2\", solver = \"lbfgs\", c = 1.0 }");
    let p = Pipeline::new(cfg);
    p.cmd_all().expect("all");
    p
}

fn criterion_6() -> Outcome {
    let (d1, d2) = (tempfile::tempdir().expect("tmp"), tempfile::tempdir().expect("tmp"));
    let p1 = uniform_run(d1.path());
    uniform_run(d2.path());
    let files = ["e1/scores/scores.jsonl", "e2/scores/scores.jsonl", "analysis/bootstrap.json"];
    let mut differing = Vec::new();
    for f in files {
        let (a, b) = (std::fs::read(d1.path().join(f)), std::fs::read(d2.path().join(f)));
        match (a, b) {
            (Ok(a), Ok(b)) if a == b && !a.is_empty() => {}
            _ => differing.push(f),
        }
    }
    let bank: BTreeMap<u8, QuestionInstance> = p1.load_bank(Experiment::E1, "acceptance").expect("bank").into_iter().map(|q| (q.id, q)).collect();
    let scores: Vec<ScoreRecord> = read_jsonl(&p1.dirs(Experiment::E1).scores_file()).expect("scores");
    let mut per_item: BTreeMap<u8, (u64, u64)> = BTreeMap::new();
    for s in &scores {
        let e = per_item.entry(s.question_id).or_default();
        e.0 += 1;
        e.1 += s.correct as u64;
    }
    let mut outside = Vec::new();
    for (id, (n, k)) in &per_item {
        let rate = bank[id].random_rate();
        let (lo, hi) = binomial_interval(*n, rate, 0.99);
        if *k < lo || *k > hi {
            outside.push(format!("item {id}: {k}/{n} vs [{lo}, {hi}] at p={rate:.2}"));
        }
    }
    let pass = differing.is_empty() && outside.is_empty() && per_item.len() == 53;
    let mut detail = format!(
        "{} of {} artifacts byte-identical; {}/{} items inside the 99% binomial interval",
        files.len() - differing.len(),
        files.len(),
        per_item.len() - outside.len(),
        per_item.len()
    );
    if !differing.is_empty() {
        detail.push_str(&format!("; differing: {}", differing.join(", ")));
    }
    if !outside.is_empty() {
        detail.push_str(&format!("; outside: {}", outside.join("; ")));
    }
    Outcome::new(pass, detail)
}

// ---------------------------------------------------------------------------
// Criterion 8: cost and latency accounting

fn fixture_record(q: u8, latency: f64, cost: f64) -> TrialRecord {
    TrialRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        session_id: format!("fx-{q}-{latency}"),
        experiment: "e1".into(),
        question_id: q,
        condition: Experiment::E1.conditions("gpt").remove(0),
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
        model: "fixture".into(),
        attempts: 1,
        error: None,
    }
}

fn criterion_8() -> Outcome {
    let pass_records: Vec<TrialRecord> = (1..=53).map(|q| fixture_record(q, 4.0, 0.01)).collect();
    let r = summarize_costs(&pass_records);
    let per_pass = r.per_model[0].cost_per_pass;
    let cost_ok = (per_pass - 0.53).abs() < 1e-9 && (r.total_cost - 0.53).abs() < 1e-9;

    let mut lat = pass_records.clone();
    lat[0].latency_s = 100.0;
    lat[1].latency_s = 100.5;
    lat[2].latency_s = 10_018.0;
    let l = summarize_costs(&lat);
    let kept: Vec<f64> = lat.iter().map(|r| r.latency_s).filter(|v| *v <= 100.0).collect();
    let want = kept.iter().sum::<f64>() / kept.len() as f64;
    let lat_ok = l.outliers == 2 && (l.mean_latency_filtered_s - want).abs() < 1e-9 && l.mean_latency_s > l.mean_latency_filtered_s;
    Outcome::new(
        cost_ok && lat_ok,
        format!(
            "cost per pass ${per_pass:.2} over {} questions; {} outliers above 100 s, filtered mean {:.3} s (unfiltered {:.3} s)",
            r.per_model[0].distinct_questions, l.outliers, l.mean_latency_filtered_s, l.mean_latency_s
        ),
    )
}

// ---------------------------------------------------------------------------

fn report(n: usize, o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {n}: {tag}  {}", o.detail);
}

fn main() {
    // Ignore libtest flags such as --nocapture passed by cargo.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |n: usize| filter.is_empty() || filter.iter().any(|f| f == &n.to_string() || f == "acceptance");
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut run = |n: usize, f: &mut dyn FnMut() -> Outcome| {
        if wanted(n) {
            let o = f();
            report(n, &o);
            results.push((n, o));
        }
    };
    run(1, &mut criterion_1);
    run(2, &mut criterion_2);
    run(4, &mut criterion_4);
    run(5, &mut criterion_5);
    run(6, &mut criterion_6);
    run(8, &mut criterion_8);
    if wanted(3) || wanted(7) {
        let dir = tempfile::tempdir().expect("tmp");
        let m = mock_design(dir.path());
        run(3, &mut || criterion_3(&m));
        run(7, &mut || criterion_7(&m));
    }
    results.sort_by_key(|(n, _)| *n);
    let unexpected: Vec<usize> = results.iter().filter(|(_, o)| !o.pass && !o.expected_failure).map(|(n, _)| *n).collect();
    let known: Vec<usize> = results.iter().filter(|(_, o)| !o.pass && o.expected_failure).map(|(n, _)| *n).collect();
    println!(
        "acceptance: {} passed, {} failed as documented {:?}, {} failed unexpectedly {:?}",
        results.iter().filter(|(_, o)| o.pass).count(),
        known.len(),
        known,
        unexpected.len(),
        unexpected
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
