//! Property tests for the core invariants.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use vislit_core::chart::{ChartInstance, ChartType};
use vislit_core::chartgen::{decontextualize, generate_chart, validate, GenerationConstraints};
use vislit_core::qbank::{build_item_bank, templates_for, AnswerMode, BankMode, BankOptions, QuestionInstance};
use vislit_core::render::{nice_floor, render_chart};
use vislit_core::report::{color_class, ColorClass};
use vislit_core::runner::{build_prompt, plan_trials, rotation, Experiment, OrderStrategy, TrialRecord, RECORD_SCHEMA_VERSION};
use vislit_core::scene::Item;
use vislit_core::scoring::{extract_numbers, range_overlap_metrics, score_trial, SynonymTable};
use vislit_core::stats::bootstrap::{bootstrap, BootstrapOptions};
use vislit_core::stats::design::{DesignMatrix, DesignSpace};
use vislit_core::stats::hypothesis::{test_probability_difference, DiffOptions, Sidedness};
use vislit_core::stats::logistic::{fit_logistic, FitOptions, HyperParams};

fn chart_type() -> impl Strategy<Value = ChartType> {
    (0..ChartType::ALL.len()).prop_map(|i| ChartType::ALL[i])
}

fn bank(seed: u64) -> Vec<QuestionInstance> {
    let c = GenerationConstraints::default();
    let charts: BTreeMap<ChartType, ChartInstance> = ChartType::ALL.iter().map(|ct| (*ct, generate_chart(*ct, seed, &c).unwrap())).collect();
    build_item_bank(&charts, BankMode::Full, &BankOptions::default()).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn on_grid(v: f64, step: f64) -> bool {
    step > 0.0 && close((v / step).round() * step, v)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn generation_is_deterministic(ct in chart_type(), seed in any::<u32>()) {
        let c = GenerationConstraints::default();
        let a = generate_chart(ct, seed as u64, &c).unwrap();
        for _ in 0..3 {
            prop_assert_eq!(&generate_chart(ct, seed as u64, &c).unwrap(), &a);
        }
    }

    #[test]
    fn generated_charts_satisfy_constraints(ct in chart_type(), seed in any::<u32>()) {
        let c = GenerationConstraints::default();
        let inst = generate_chart(ct, seed as u64, &c).unwrap();
        prop_assert_eq!(validate(&inst, &c), Ok(()));
    }

    /// Numbers drawn on a chart are axis ticks or legend edges, never
    /// data values printed next to marks.
    #[test]
    fn rendered_text_carries_no_data_values(ct in chart_type(), seed in any::<u32>()) {
        let inst = generate_chart(ct, seed as u64, &GenerationConstraints::default()).unwrap();
        let mut data: Vec<f64> = inst.all_values();
        data.extend(inst.points.iter().flat_map(|p| [Some(p.x), p.size].into_iter().flatten()));
        let edges: Vec<f64> = inst.axis.bins.iter().flat_map(|(a, b)| [*a, *b]).collect();
        let steps: Vec<f64> = [Some(inst.axis.y_tick), inst.axis.x_tick].into_iter().flatten().collect();
        for item in render_chart(&inst).items {
            let Item::Text { text, .. } = item else { continue };
            let names = inst.categories.iter().chain(inst.series.iter().map(|s| &s.name)).chain(inst.points.iter().filter_map(|p| p.label.as_ref()));
            if names.into_iter().chain([&inst.title, &inst.axis.x_title, &inst.axis.y_title]).any(|n| n.contains(text.as_str())) {
                continue;
            }
            for n in extract_numbers(&text) {
                let is_data = data.iter().any(|v| close(*v, n));
                let legend = ct == ChartType::Bubble && close(nice_floor(n), n);
                let allowed = steps.iter().any(|s| on_grid(n, *s)) || edges.iter().any(|e| close(*e, n)) || legend;
                prop_assert!(!is_data || allowed, "{:?} shows data value {} in {:?}", ct, n, text);
            }
        }
    }

    #[test]
    fn decontextualization_relabels_only(ct in chart_type().prop_filter("decontextualizable", |c| c.decontextualizable()), seed in any::<u32>()) {
        let inst = generate_chart(ct, seed as u64, &GenerationConstraints::default()).unwrap();
        let (dc, map) = decontextualize(&inst).unwrap();
        let originals: BTreeSet<&String> = map.iter().map(|(o, _)| o).collect();
        let generics: BTreeSet<&String> = map.iter().map(|(_, g)| g).collect();
        prop_assert_eq!(originals.len(), map.len());
        prop_assert_eq!(generics.len(), map.len());
        let fwd: BTreeMap<&String, &String> = map.iter().map(|(o, g)| (o, g)).collect();
        let relabel = |s: &String| fwd.get(s).map(|g| (*g).clone()).unwrap_or_else(|| s.clone());
        prop_assert_eq!(dc.categories.clone(), inst.categories.iter().map(relabel).collect::<Vec<_>>());
        prop_assert_eq!(dc.series.len(), inst.series.len());
        for (a, b) in dc.series.iter().zip(&inst.series) {
            prop_assert_eq!(&a.values, &b.values);
            prop_assert_eq!(&a.name, &relabel(&b.name));
        }
        prop_assert_eq!(dc.points.len(), inst.points.len());
        for (a, b) in dc.points.iter().zip(&inst.points) {
            prop_assert_eq!((a.x, a.y, a.size), (b.x, b.y, b.size));
        }
        prop_assert_eq!(dc.axis.y_range, inst.axis.y_range);
        prop_assert_eq!(&dc.axis.bins, &inst.axis.bins);
    }

    #[test]
    fn overlap_metric_laws(a0 in 0.0..50.0f64, a1 in 0.0..50.0f64, b0 in 0.0..50.0f64, b1 in 0.0..50.0f64) {
        let a = (a0.min(a1), a0.max(a1));
        let b = (b0.min(b1), b0.max(b1));
        if let (Ok(ab), Ok(ba)) = (range_overlap_metrics(a, b), range_overlap_metrics(b, a)) {
            prop_assert_eq!(ab, ba);
            prop_assert!(ab.jaccard <= ab.dice + 1e-12 && ab.jaccard <= ab.overlap_coef + 1e-12);
            for v in [ab.percentage, ab.jaccard, ab.dice, ab.overlap_coef] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        if a.1 > a.0 {
            let same = range_overlap_metrics(a, a).unwrap();
            prop_assert_eq!((same.percentage, same.jaccard, same.dice, same.overlap_coef), (1.0, 1.0, 1.0, 1.0));
            let apart = range_overlap_metrics(a, (a.1 + 1.0, a.1 + 2.0 + b1)).unwrap();
            prop_assert_eq!((apart.percentage, apart.jaccard, apart.dice, apart.overlap_coef), (0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn color_classes_partition(acc in 0.0..1.0f64, base in 0.0..1.0f64) {
        let d = acc - base;
        let c = color_class(acc, base);
        let expected = [d > 0.05 + 1e-9, d.abs() <= 0.05 + 1e-9, d < -0.05 - 1e-9];
        prop_assert_eq!(expected.iter().filter(|b| **b).count(), 1);
        let idx = match c { ColorClass::Better => 0, ColorClass::Close => 1, ColorClass::Worse => 2 };
        prop_assert!(expected[idx]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn options_are_well_formed(seed in any::<u32>()) {
        for q in bank(seed as u64) {
            prop_assert_eq!(q.options.len(), q.answer_mode.option_count());
            let distinct: BTreeSet<&String> = q.options.iter().collect();
            prop_assert_eq!(distinct.len(), q.options.len());
            if q.answer_mode != AnswerMode::Open {
                let display = q.truth.display();
                prop_assert_eq!(&q.options[q.correct_index], &display);
                prop_assert_eq!(q.options.iter().filter(|o| **o == display).count(), 1);
            }
        }
    }

    /// Excluding the answer a seed would produce forces a different one.
    #[test]
    fn exclusions_are_respected(seed in any::<u32>(), pick in 0usize..53) {
        let base = bank(seed as u64);
        let q = &base[pick];
        let mut c = GenerationConstraints::default();
        c.exclusions.insert(q.id, vec![q.truth.display()]);
        let Ok(inst) = generate_chart(q.chart_type, seed as u64, &c) else {
            // Templates with a fixed answer domain may have no alternative.
            return Ok(());
        };
        let mut charts: BTreeMap<ChartType, ChartInstance> = BTreeMap::new();
        for ct in ChartType::ALL {
            let i = if ct == q.chart_type { inst.clone() } else { generate_chart(ct, seed as u64, &GenerationConstraints::default()).unwrap() };
            charts.insert(ct, i);
        }
        let opts = BankOptions { exclusions: c.exclusions.clone(), ..BankOptions::default() };
        let again = build_item_bank(&charts, BankMode::Full, &opts).unwrap();
        let q2 = again.iter().find(|x| x.id == q.id).unwrap();
        prop_assert_ne!(q2.truth.display(), q.truth.display());
        // True/false and trend items always list their whole domain.
        if q.answer_mode == AnswerMode::MultipleChoice4 {
            prop_assert!(!q2.options.iter().any(|o| *o == q.truth.display()));
        }
    }

    #[test]
    fn planning_is_exact_and_deterministic(reps in 1u32..6, shuffle in any::<u64>()) {
        let n = reps * 12;
        let b = bank(7);
        for cond in Experiment::E1.conditions("m").into_iter().chain(Experiment::E3.conditions("m")) {
            let plans = plan_trials(&b, &cond, "e1", n, shuffle, OrderStrategy::Rotations).unwrap();
            prop_assert_eq!(plans.len(), b.len() * n as usize);
            prop_assert_eq!(&plan_trials(&b, &cond, "e1", n, shuffle, OrderStrategy::Rotations).unwrap(), &plans);
            let ids: BTreeSet<&String> = plans.iter().map(|p| &p.session_id).collect();
            prop_assert_eq!(ids.len(), plans.len());
            if !cond.choices_present {
                continue;
            }
            for q in &b {
                let k = q.options.len();
                let mut hist: BTreeMap<Vec<usize>, u32> = BTreeMap::new();
                for p in plans.iter().filter(|p| p.question_id == q.id) {
                    *hist.entry(p.option_order.clone().unwrap()).or_default() += 1;
                }
                let expected: BTreeMap<Vec<usize>, u32> = (0..k).map(|r| (rotation(k, r), n / k as u32)).collect();
                prop_assert_eq!(hist, expected);
            }
        }
    }

    #[test]
    fn prompts_are_self_contained(seed in any::<u32>()) {
        let b = bank(seed as u64);
        let cond = Experiment::E1.conditions("m").remove(0);
        let plans = plan_trials(&b, &cond, "e1", 12, 3, OrderStrategy::Rotations).unwrap();
        for p in plans.iter().step_by(7) {
            let q = b.iter().find(|q| q.id == p.question_id).unwrap();
            let text = build_prompt(p, q).full_text();
            prop_assert!(text.contains(&q.stem));
            for other in b.iter().filter(|o| o.stem != q.stem && o.stem.len() > 30) {
                prop_assert!(!text.contains(&other.stem));
            }
        }
    }

    #[test]
    fn rescoring_is_deterministic(seed in any::<u32>(), raw in "[ a-dA-D()0-9.$%TrueFalsincresg]{0,24}") {
        let b = bank(seed as u64);
        let table = SynonymTable::default();
        for e in [Experiment::E1, Experiment::E3] {
            let cond = e.conditions("m").remove(0);
            let plans = plan_trials(&b, &cond, e.id(), 12, 1, OrderStrategy::Rotations).unwrap();
            for p in plans.iter().step_by(31) {
                let q = b.iter().find(|q| q.id == p.question_id).unwrap();
                let rec = TrialRecord {
                    schema_version: RECORD_SCHEMA_VERSION,
                    session_id: p.session_id.clone(),
                    experiment: p.experiment.clone(),
                    question_id: p.question_id,
                    condition: p.condition.clone(),
                    repetition: p.repetition,
                    option_order: p.option_order.clone(),
                    prompt_text: String::new(),
                    image_attached: true,
                    raw_response: raw.clone(),
                    latency_s: 1.0,
                    prompt_tokens: 0,
                    completion_tokens: 0,
                    cost: 0.0,
                    timestamp_ms: 0,
                    backend_id: "fixture".into(),
                    model: "m".into(),
                    attempts: 1,
                    error: None,
                };
                prop_assert_eq!(score_trial(&rec, q, &table), score_trial(&rec, q, &table));
            }
        }
    }
}

fn synthetic(seed: u64, n: usize) -> DesignMatrix {
    let space = DesignSpace::new(&["a".to_string(), "b".to_string()]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = space.n_cells();
    let p: Vec<f64> = (0..cells).map(|_| rng.random_range(0.2..0.8)).collect();
    let mut row_cell = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..cells);
        row_cell.push(c as u32);
        y.push(rng.random::<f64>() < p[c]);
    }
    DesignMatrix { space, row_cell, y, dropped: 0 }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn cell_logit_is_intercept_plus_active_sum(seed in any::<u64>(), c in prop::sample::select(vec![0.1, 1.0, 10.0])) {
        let m = synthetic(seed, 3000);
        let fit = fit_logistic(&m, &HyperParams::l2(c), &FitOptions::default()).unwrap();
        let logits = fit.cell_logits(&m.space);
        for (ci, act) in m.space.cell_active.iter().enumerate() {
            let sum = fit.intercept + act.iter().map(|j| fit.coefficients[*j as usize]).sum::<f64>();
            prop_assert!((logits[ci] - sum).abs() < 1e-9);
        }
    }

    #[test]
    fn bootstrap_is_seed_deterministic(seed in any::<u64>()) {
        let m = synthetic(seed, 1500);
        let opts = BootstrapOptions { resamples: 100, seed, ..BootstrapOptions::default() };
        let a = bootstrap(&m, &HyperParams::l2(1.0), &opts).unwrap();
        let b = bootstrap(&m, &HyperParams::l2(1.0), &opts).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn difference_test_is_dual(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..200).map(|_| rng.random_range(0.3..0.7)).collect();
        let b: Vec<f64> = (0..200).map(|_| rng.random_range(0.2..0.6)).collect();
        let opts = DiffOptions { mc_draws: 50_000, grid_step: 1e-3 };
        let same = test_probability_difference(&a, &a, Sidedness::TwoSided, &opts, "a").unwrap();
        prop_assert!(!same.significant);
        let ab = test_probability_difference(&a, &b, Sidedness::TwoSided, &opts, "ab").unwrap();
        let ba = test_probability_difference(&b, &a, Sidedness::TwoSided, &opts, "ba").unwrap();
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        prop_assert!((ab.ci_low + ba.ci_high).abs() < 1e-9 && (ab.ci_high + ba.ci_low).abs() < 1e-9);
    }
}

#[test]
fn every_template_has_a_chart() {
    let n: usize = ChartType::ALL.iter().map(|c| templates_for(*c).count()).sum();
    assert_eq!(n, 53);
}
