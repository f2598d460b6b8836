//! Pipeline stages. Each experiment gets `charts/`, `bank/`, `trials/`,
//! `scores/`, `stats/` and `report/` under `<out>/<eN>/`; the pooled
//! logistic analysis goes to `<out>/analysis/`.

use crate::backend::make_backend;
use crate::config::RunConfig;
use crate::data::{load_baseline, load_synonyms};
use crate::error::{Error, Result};
use crate::execute::{execute, load_images, ImageStore, RunSummary};
use crate::io::{ensure_dir, read_json, read_jsonl, write_atomic, write_json, write_jsonl, StageManifest};
use crate::output::{write_figure, write_table};
use crate::raster::render_png;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use vislit_core::chart::{ChartInstance, ChartType};
use vislit_core::chartgen::{decontextualize, generate_chart, GenerationConstraints};
use vislit_core::qbank::{build_item_bank, QuestionInstance};
use vislit_core::render::render_chart;
use vislit_core::report::{
    accuracy_table, coefficient_table, cost_table, html_summary, label_group, latency_timeseries, overlap_boxplots, relative_error_ci, ridge_plot,
    test_table, tuning_table, ComparisonTable, HtmlSection,
};
use vislit_core::runner::{plan_trials, summarize_costs, Condition, CostReport, Experiment, TrialPlan, TrialRecord};
use vislit_core::scoring::{score_trial, ScoreRecord};
use vislit_core::stats::bootstrap::{bootstrap, BootstrapOptions, BootstrapSet};
use vislit_core::stats::design::{build_design_matrix, DesignMatrix};
use vislit_core::stats::hypothesis::{coefficient_tests, llm_difference_tests, presence_tests, DiffOptions, TestResult};
use vislit_core::stats::logistic::{describe, fit_logistic, FitOptions, FitResult};
use vislit_core::stats::tune::{subsample, tune_hyperparameters, CvOptions, Grid, TuningResult};

pub const STAGES: [&str; 6] = ["gen", "bank", "run", "score", "analyze", "report"];

#[derive(Debug, Clone, Default)]
pub struct Selection {
    /// Experiment id (`e1`) or condition tag (`vis:choices:ctx`), optionally
    /// combined as `e1:vis:choices:ctx`.
    pub condition: Option<String>,
    /// Backend `llm_id`.
    pub backend: Option<String>,
}

impl Selection {
    fn experiment_ok(&self, e: Experiment) -> bool {
        match &self.condition {
            None => true,
            Some(f) => {
                let head = f.split(':').next().unwrap_or("");
                Experiment::parse(head).is_none_or(|x| x == e)
            }
        }
    }

    fn condition_ok(&self, e: Experiment, c: &Condition) -> bool {
        let Some(f) = &self.condition else { return true };
        let tag = c.tag();
        f.eq_ignore_ascii_case(e.id()) || *f == tag || *f == format!("{}:{tag}", e.id())
    }

    fn backend_ok(&self, llm: &str) -> bool {
        self.backend.as_deref().is_none_or(|b| b == llm)
    }
}

pub struct Pipeline {
    pub cfg: RunConfig,
    /// Skip stages whose manifest shows unchanged inputs and outputs.
    pub resume: bool,
    pub select: Selection,
}

/// Paths of one experiment's stage directories.
pub struct ExpDirs {
    pub root: PathBuf,
    pub charts: PathBuf,
    pub bank: PathBuf,
    pub trials: PathBuf,
    pub scores: PathBuf,
    pub stats: PathBuf,
    pub report: PathBuf,
}

impl ExpDirs {
    pub fn new(root: PathBuf) -> ExpDirs {
        ExpDirs {
            charts: root.join("charts"),
            bank: root.join("bank"),
            trials: root.join("trials"),
            scores: root.join("scores"),
            stats: root.join("stats"),
            report: root.join("report"),
            root,
        }
    }

    pub fn charts_file(&self) -> PathBuf {
        self.charts.join("charts.json")
    }
    pub fn bank_file(&self) -> PathBuf {
        self.bank.join("items.jsonl")
    }
    pub fn scores_file(&self) -> PathBuf {
        self.scores.join("scores.jsonl")
    }
    pub fn trial_file(&self, llm: &str) -> PathBuf {
        self.trials.join(format!("{llm}.jsonl"))
    }
    pub fn plan_file(&self, llm: &str) -> PathBuf {
        self.trials.join(format!("{llm}.plans.jsonl"))
    }

    pub fn trial_files(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        if !self.trials.exists() {
            return Ok(out);
        }
        let rd = std::fs::read_dir(&self.trials).map_err(|e| Error::io(format!("listing {}", self.trials.display()), e))?;
        for ent in rd {
            let p = ent.map_err(|e| Error::io("listing trials", e))?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.ends_with(".jsonl") && !name.ends_with(".plans.jsonl") {
                out.push(p);
            }
        }
        out.sort();
        Ok(out)
    }
}

fn need(stage: &str, p: &Path) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::MissingStageInput { stage: stage.into(), path: p.to_path_buf() })
    }
}

fn params<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("params serialize")
}

/// Experiment statistics written by the analyze stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStats {
    pub experiment: String,
    pub trials: usize,
    pub transport_errors: usize,
    /// One table per (vis, choices) arm.
    pub accuracy: Vec<(String, ComparisonTable)>,
    pub overall: BTreeMap<String, f64>,
    pub costs: CostReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub experiments: Vec<String>,
    pub llms: Vec<String>,
    pub rows: usize,
    pub columns: usize,
    pub group_counts: [usize; 4],
    pub cells: usize,
    pub positives: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainFit {
    pub labels: Vec<String>,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TestBattery {
    pub coefficients: Vec<TestResult>,
    pub llm_difference: Vec<TestResult>,
    pub presence: Vec<TestResult>,
}

fn arm_name(vis: bool, choices: bool) -> String {
    format!("{}_{}", if vis { "vis" } else { "novis" }, if choices { "choices" } else { "open" })
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Pipeline {
        Pipeline { cfg, resume: false, select: Selection::default() }
    }

    pub fn dirs(&self, e: Experiment) -> ExpDirs {
        ExpDirs::new(self.cfg.experiment_dir(e))
    }

    fn experiments(&self) -> Vec<Experiment> {
        self.cfg.experiments.iter().copied().filter(|e| self.select.experiment_ok(*e)).collect()
    }

    fn skip(&self, dir: &Path, stage: &str, p: &str, inputs: &[PathBuf]) -> bool {
        if !self.resume {
            return false;
        }
        match StageManifest::read(dir) {
            Some(m) if m.is_current(&self.cfg.out_dir, p, inputs) => {
                log::info!("{stage}: {} is up to date, skipping", dir.display());
                true
            }
            _ => false,
        }
    }

    fn seal(&self, dir: &Path, stage: &str, p: &str, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
        StageManifest::build(&self.cfg.out_dir, stage, p, inputs, outputs)?.write(dir)
    }

    // -- gen ---------------------------------------------------------------

    fn constraints(&self) -> GenerationConstraints {
        let mut c = GenerationConstraints { exclusions: self.cfg.bank.exclusions.clone(), ..Default::default() };
        if let Some(n) = self.cfg.chart_max_attempts {
            c.max_attempts = n;
        }
        c
    }

    pub fn cmd_generate(&self) -> Result<()> {
        for e in self.experiments() {
            let d = self.dirs(e);
            let p = params(&(e, self.cfg.seeds.chart, &self.cfg.bank.exclusions, self.cfg.chart_max_attempts));
            if self.skip(&d.charts, "gen", &p, &[]) {
                continue;
            }
            ensure_dir(&d.charts)?;
            let c = self.constraints();
            let mut charts = Vec::new();
            let mut outputs = Vec::new();
            for ct in ChartType::ALL {
                let inst = generate_chart(ct, self.cfg.seeds.chart, &c)?;
                let shown = if e.bank_mode() == vislit_core::qbank::BankMode::Decontextualized {
                    if !ct.decontextualizable() {
                        charts.push(inst);
                        continue;
                    }
                    decontextualize(&inst)?.0
                } else {
                    inst.clone()
                };
                let stem = shown.file_stem();
                let png = d.charts.join(format!("{stem}.png"));
                write_atomic(&png, &render_png(&render_chart(&shown))?)?;
                let sidecar = d.charts.join(format!("{stem}.json"));
                write_json(&sidecar, &shown)?;
                outputs.push(png);
                outputs.push(sidecar);
                charts.push(inst);
            }
            write_json(&d.charts_file(), &charts)?;
            outputs.push(d.charts_file());
            self.seal(&d.charts, "gen", &p, &[], &outputs)?;
            log::info!("gen {}: {} charts rendered", e.id(), (outputs.len() - 1) / 2);
        }
        Ok(())
    }

    // -- bank --------------------------------------------------------------

    pub fn cmd_bank(&self) -> Result<()> {
        for e in self.experiments() {
            let d = self.dirs(e);
            need("bank", &d.charts_file())?;
            let p = params(&(e, &self.cfg.bank));
            let inputs = vec![d.charts_file()];
            if self.skip(&d.bank, "bank", &p, &inputs) {
                continue;
            }
            let charts: Vec<ChartInstance> = read_json(&d.charts_file())?;
            let map: BTreeMap<ChartType, ChartInstance> = charts.into_iter().map(|c| (c.chart_type, c)).collect();
            let bank = build_item_bank(&map, e.bank_mode(), &self.cfg.bank)?;
            write_jsonl(&d.bank_file(), &bank)?;
            self.seal(&d.bank, "bank", &p, &inputs, &[d.bank_file()])?;
            log::info!("bank {}: {} items", e.id(), bank.len());
        }
        Ok(())
    }

    pub fn load_bank(&self, e: Experiment, stage: &str) -> Result<Vec<QuestionInstance>> {
        let d = self.dirs(e);
        need(stage, &d.bank_file())?;
        read_jsonl(&d.bank_file())
    }

    // -- run ---------------------------------------------------------------

    pub fn plans(&self, e: Experiment, llm: &str, bank: &[QuestionInstance]) -> Result<Vec<TrialPlan>> {
        let mut plans = Vec::new();
        for c in e.conditions(llm) {
            if !self.select.condition_ok(e, &c) {
                continue;
            }
            plans.extend(plan_trials(bank, &c, e.id(), self.cfg.n_per_question as u32, self.cfg.seeds.shuffle, self.cfg.order_strategy)?);
        }
        Ok(plans)
    }

    pub fn cmd_run(&self) -> Result<BTreeMap<String, RunSummary>> {
        let mut out = BTreeMap::new();
        if let Some(b) = &self.select.backend {
            if self.cfg.backend(b).is_none() {
                return Err(Error::ConfigInvalid(format!("no backend with llm_id {b:?}")));
            }
        }
        for e in self.experiments() {
            let d = self.dirs(e);
            let bank = self.load_bank(e, "run")?;
            let map: BTreeMap<u8, QuestionInstance> = bank.iter().map(|q| (q.id, q.clone())).collect();
            let needs_images = e.arms().iter().any(|(v, _)| *v);
            let images = if needs_images { load_images(&d.charts, &bank)? } else { ImageStore::new() };
            for cfg in self.cfg.backends.iter().filter(|b| self.select.backend_ok(&b.llm_id)) {
                let plans = self.plans(e, &cfg.llm_id, &bank)?;
                if plans.is_empty() {
                    continue;
                }
                let backend = make_backend(cfg)?;
                write_jsonl(&d.plan_file(&cfg.llm_id), &plans)?;
                let s = execute(&plans, &map, backend.as_ref(), cfg, &images, &d.trial_file(&cfg.llm_id))?;
                log::info!(
                    "run {} {}: {} planned, {} already recorded, {} executed, {} failed",
                    e.id(),
                    cfg.llm_id,
                    s.planned,
                    s.already_recorded,
                    s.executed,
                    s.failed
                );
                out.insert(format!("{}:{}", e.id(), cfg.llm_id), s);
            }
            let files = d.trial_files()?;
            let p = params(&(e, self.cfg.n_per_question, self.cfg.seeds.shuffle, self.cfg.order_strategy));
            self.seal(&d.trials, "run", &p, &[d.bank_file()], &files)?;
        }
        Ok(out)
    }

    // -- score -------------------------------------------------------------

    pub fn cmd_score(&self) -> Result<()> {
        let table = load_synonyms(self.cfg.synonyms.as_deref())?;
        for e in self.experiments() {
            let d = self.dirs(e);
            let bank = self.load_bank(e, "score")?;
            let files = d.trial_files()?;
            if files.is_empty() {
                return Err(Error::MissingStageInput { stage: "score".into(), path: d.trials.clone() });
            }
            let mut inputs = vec![d.bank_file()];
            inputs.extend(files.iter().cloned());
            if let Some(s) = &self.cfg.synonyms {
                inputs.push(s.clone());
            }
            let p = params(&e);
            if self.skip(&d.scores, "score", &p, &inputs) {
                continue;
            }
            let map: BTreeMap<u8, &QuestionInstance> = bank.iter().map(|q| (q.id, q)).collect();
            let mut scores = Vec::new();
            for f in &files {
                for r in read_jsonl::<TrialRecord>(f)? {
                    let q = map.get(&r.question_id).ok_or_else(|| Error::format(f.display().to_string(), format!("question {} not in the bank", r.question_id)))?;
                    scores.push(score_trial(&r, q, &table));
                }
            }
            scores.sort_by(|a, b| a.session_id.cmp(&b.session_id));
            scores.dedup_by(|a, b| a.session_id == b.session_id);
            write_jsonl(&d.scores_file(), &scores)?;
            self.seal(&d.scores, "score", &p, &inputs, &[d.scores_file()])?;
            let correct = scores.iter().filter(|s| s.correct).count();
            log::info!("score {}: {} records, {} correct", e.id(), scores.len(), correct);
        }
        Ok(())
    }

    pub fn load_scores(&self, e: Experiment, stage: &str) -> Result<Vec<ScoreRecord>> {
        let d = self.dirs(e);
        need(stage, &d.scores_file())?;
        read_jsonl(&d.scores_file())
    }

    // -- analyze -----------------------------------------------------------

    fn baseline(&self) -> Result<Option<BTreeMap<u8, f64>>> {
        if self.cfg.no_baseline {
            return Ok(None);
        }
        load_baseline(self.cfg.baseline.as_deref()).map(Some)
    }

    pub fn cmd_analyze(&self) -> Result<()> {
        let baseline = self.baseline()?;
        for e in self.experiments() {
            let d = self.dirs(e);
            let bank = self.load_bank(e, "analyze")?;
            let scores = self.load_scores(e, "analyze")?;
            let files = d.trial_files()?;
            let mut inputs = vec![d.bank_file(), d.scores_file()];
            inputs.extend(files.iter().cloned());
            let p = params(&(e, &baseline));
            if self.skip(&d.stats, "analyze", &p, &inputs) {
                continue;
            }
            let mut records = Vec::new();
            for f in &files {
                records.extend(read_jsonl::<TrialRecord>(f)?);
            }
            let mut accuracy = Vec::new();
            for (vis, choices) in e.arms() {
                let arm: Vec<ScoreRecord> = scores.iter().filter(|s| s.vis_present == *vis && s.choices_present == *choices).cloned().collect();
                accuracy.push((arm_name(*vis, *choices), accuracy_table(&arm, &bank, baseline.as_ref())));
            }
            let mut overall = BTreeMap::new();
            for s in &scores {
                let e = overall.entry(s.llm_id.clone()).or_insert((0usize, 0usize));
                e.1 += 1;
                if s.correct {
                    e.0 += 1;
                }
            }
            let st = ExperimentStats {
                experiment: e.id().into(),
                trials: scores.len(),
                transport_errors: scores.iter().filter(|s| s.transport_error).count(),
                accuracy,
                overall: overall.into_iter().map(|(k, (c, n))| (k, c as f64 / n.max(1) as f64)).collect(),
                costs: summarize_costs(&records),
            };
            let f = d.stats.join("stats.json");
            write_json(&f, &st)?;
            self.seal(&d.stats, "analyze", &p, &inputs, &[f])?;
            for (llm, acc) in &st.overall {
                log::info!("analyze {}: {llm} overall accuracy {acc:.3}", e.id());
            }
        }
        self.analyze_pooled()
    }

    fn pooled(&self) -> Vec<Experiment> {
        self.cfg.analysis.experiments.iter().copied().filter(|e| self.cfg.experiments.contains(e)).collect()
    }

    fn analyze_pooled(&self) -> Result<()> {
        let pool = self.pooled();
        if pool.is_empty() || self.select.condition.is_some() {
            return Ok(());
        }
        let dir = self.cfg.analysis_dir();
        let inputs: Vec<PathBuf> = pool.iter().map(|e| self.dirs(*e).scores_file()).collect();
        let p = params(&(&self.cfg.analysis, self.cfg.seeds.bootstrap));
        if self.skip(&dir, "analyze", &p, &inputs) {
            return Ok(());
        }
        let mut scores = Vec::new();
        for e in &pool {
            scores.extend(self.load_scores(*e, "analyze")?);
        }
        let m = build_design_matrix(&scores)?;
        let gc = m.space.group_counts();
        log::info!(
            "design matrix: {} rows x {} columns ({}/{}/{}/{}), {} cells",
            m.n_rows(),
            m.n_columns(),
            gc[0],
            gc[1],
            gc[2],
            gc[3],
            m.space.n_cells()
        );
        let summary = DesignSummary {
            experiments: pool.iter().map(|e| e.id().to_string()).collect(),
            llms: m.space.llms.clone(),
            rows: m.n_rows(),
            columns: m.n_columns(),
            group_counts: gc,
            cells: m.space.n_cells(),
            positives: m.positives(),
            dropped: m.dropped,
        };
        let mut outputs = vec![dir.join("design.json")];
        write_json(&outputs[0], &summary)?;

        let a = &self.cfg.analysis;
        let hyper = if a.tune {
            let t = self.tune(&m)?;
            let f = dir.join("tuning.json");
            write_json(&f, &t)?;
            outputs.push(f);
            t.best_hyper()
        } else {
            a.hyper.expect("validated")
        };
        let fit = fit_logistic(&m, &hyper, &FitOptions::default())?;
        log::info!("main fit: {}", describe(&fit));
        let labels: Vec<String> = m.space.columns.iter().map(|c| c.label()).collect();
        let f = dir.join("main_fit.json");
        write_json(&f, &MainFit { labels, fit })?;
        outputs.push(f);

        let set = bootstrap(&m, &hyper, &BootstrapOptions { resamples: a.resamples, seed: self.cfg.seeds.bootstrap, fit: FitOptions::default(), identity: false })?;
        log::info!("bootstrap: {} resamples, {} redraws, {} not converged", set.resamples, set.redraws, set.nonconverged);
        let f = dir.join("bootstrap.json");
        write_json(&f, &set)?;
        outputs.push(f);

        let tests = self.tests(&set, &m)?;
        let f = dir.join("tests.json");
        write_json(&f, &tests)?;
        outputs.push(f);
        self.seal(&dir, "analyze", &p, &inputs, &outputs)
    }

    fn tune(&self, m: &DesignMatrix) -> Result<TuningResult> {
        let a = &self.cfg.analysis;
        let sub = if a.tune_fraction < 1.0 { subsample(m, a.tune_fraction, self.cfg.seeds.bootstrap) } else { m.clone() };
        let grid = Grid::full();
        let opts = CvOptions { folds: a.folds, repetitions: a.repetitions, seed: self.cfg.seeds.bootstrap, fit: FitOptions::default() };
        let t = tune_hyperparameters(&sub, &grid, &opts)?;
        log::info!("tuning: {} combinations, {} CV scores on {} rows; selected {}", t.grid.combos.len(), t.scores.len(), sub.n_rows(), t.best_hyper().label());
        Ok(t)
    }

    fn tests(&self, set: &BootstrapSet, m: &DesignMatrix) -> Result<TestBattery> {
        let opts = DiffOptions { mc_draws: self.cfg.analysis.mc_draws, ..Default::default() };
        let mut b = TestBattery { coefficients: coefficient_tests(set)?, ..Default::default() };
        let pair = match &self.cfg.analysis.compare {
            Some(p) => Some(p.clone()),
            None if m.space.llms.len() >= 2 => Some((m.space.llms[0].clone(), m.space.llms[1].clone())),
            None => None,
        };
        if let Some((x, y)) = pair {
            b.llm_difference = llm_difference_tests(set, &x, &y, &opts)?;
        }
        b.presence = presence_tests(set, &opts)?;
        Ok(b)
    }

    // -- report ------------------------------------------------------------

    pub fn cmd_report(&self) -> Result<()> {
        let mut index = Vec::new();
        for e in self.experiments() {
            let d = self.dirs(e);
            let stats_file = d.stats.join("stats.json");
            need("report", &stats_file)?;
            let inputs = vec![stats_file.clone(), d.scores_file(), d.bank_file()];
            let p = params(&e);
            index.push((e.id().to_string(), format!("{}/report/summary.html", e.id())));
            if self.skip(&d.report, "report", &p, &inputs) {
                continue;
            }
            let outputs = self.report_experiment(e, &d, &stats_file)?;
            self.seal(&d.report, "report", &p, &inputs, &outputs)?;
        }
        let dir = self.cfg.analysis_dir();
        if !self.pooled().is_empty() && self.select.condition.is_none() && dir.join("bootstrap.json").exists() {
            let inputs: Vec<PathBuf> = ["design.json", "main_fit.json", "bootstrap.json", "tests.json"].iter().map(|f| dir.join(f)).collect();
            let rdir = dir.join("report");
            index.push(("analysis".into(), "analysis/report/summary.html".into()));
            if !self.skip(&rdir, "report", "analysis", &inputs) {
                let outputs = self.report_analysis(&dir, &rdir)?;
                self.seal(&rdir, "report", "analysis", &inputs, &outputs)?;
            }
        }
        let sections = vec![HtmlSection {
            heading: "Reports".into(),
            paragraphs: index.iter().map(|(n, p)| format!("{n}: {p}")).collect(),
            ..Default::default()
        }];
        let mut html = html_summary("Visualization literacy runs", &sections);
        for (n, p) in &index {
            html = html.replacen(&format!("<p>{n}: {p}</p>"), &format!("<p><a href=\"{p}\">{n}</a></p>"), 1);
        }
        write_atomic(&self.cfg.out_dir.join("index.html"), html.as_bytes())
    }

    fn report_experiment(&self, e: Experiment, d: &ExpDirs, stats_file: &Path) -> Result<Vec<PathBuf>> {
        let st: ExperimentStats = read_json(stats_file)?;
        let bank = self.load_bank(e, "report")?;
        let scores = self.load_scores(e, "report")?;
        let mut records = Vec::new();
        for f in d.trial_files()? {
            records.extend(read_jsonl::<TrialRecord>(&f)?);
        }
        ensure_dir(&d.report)?;
        let mut outputs = Vec::new();
        let mut sections = Vec::new();

        let mut overview = HtmlSection { heading: "Overview".into(), ..Default::default() };
        overview.paragraphs.push(format!("{} scored trials, {} transport errors.", st.trials, st.transport_errors));
        for (llm, acc) in &st.overall {
            overview.paragraphs.push(format!("{llm}: overall accuracy {acc:.3}"));
        }
        sections.push(overview);

        for (arm, t) in &st.accuracy {
            let table = t.to_table(&format!("accuracy_{arm}"));
            outputs.push(write_table(&d.report, &table)?);
            let mut s = HtmlSection { heading: format!("Accuracy ({})", arm.replace('_', ", ")), tables: vec![table], ..Default::default() };
            if !t.missing.is_empty() {
                s.paragraphs.push(format!("{} item/model pairs have no scored trials.", t.missing.len()));
            }
            sections.push(s);
        }

        let costs = cost_table(&st.costs);
        outputs.push(write_table(&d.report, &costs)?);
        sections.push(HtmlSection { heading: "Cost and latency".into(), tables: vec![costs], ..Default::default() });

        let mut figures = vec![latency_timeseries(&records)];
        if e.arms().iter().any(|(_, c)| !c) {
            figures.push(overlap_boxplots(&scores, &bank));
            figures.push(relative_error_ci(&scores));
        }
        let mut fig = HtmlSection { heading: "Figures".into(), ..Default::default() };
        for f in &figures {
            let (png, csv) = write_figure(&d.report, f)?;
            fig.images.push((format!("{}.png", f.name), format!("{} {}", f.title, f.caption)));
            outputs.push(png);
            outputs.push(csv);
        }
        sections.push(fig);
        let html = d.report.join("summary.html");
        write_atomic(&html, html_summary(&format!("Experiment {}", e.id().to_uppercase()), &sections).as_bytes())?;
        outputs.push(html);
        Ok(outputs)
    }

    fn report_analysis(&self, dir: &Path, rdir: &Path) -> Result<Vec<PathBuf>> {
        ensure_dir(rdir)?;
        let design: DesignSummary = read_json(&dir.join("design.json"))?;
        let main: MainFit = read_json(&dir.join("main_fit.json"))?;
        let set: BootstrapSet = read_json(&dir.join("bootstrap.json"))?;
        let tests: TestBattery = read_json(&dir.join("tests.json"))?;
        let mut outputs = Vec::new();
        let mut sections = vec![HtmlSection {
            heading: "Design".into(),
            paragraphs: vec![
                format!("Experiments {} pooled; models {}.", design.experiments.join(", "), design.llms.join(", ")),
                format!(
                    "{} rows, {} columns ({}/{}/{}/{} by interaction order), {} tested cells.",
                    design.rows, design.columns, design.group_counts[0], design.group_counts[1], design.group_counts[2], design.group_counts[3], design.cells
                ),
                format!("Main fit: {}.", describe(&main.fit)),
            ],
            ..Default::default()
        }];
        let tuning_file = dir.join("tuning.json");
        if tuning_file.exists() {
            let t: TuningResult = read_json(&tuning_file)?;
            let table = tuning_table(&t);
            outputs.push(write_table(rdir, &table)?);
            sections.push(HtmlSection { heading: "Hyperparameter search".into(), tables: vec![table], max_rows: 20, ..Default::default() });
        }
        let coef = coefficient_table(&main.fit, Some(&set), &tests.coefficients, &main.labels);
        outputs.push(write_table(rdir, &coef)?);
        sections.push(HtmlSection { heading: "Coefficients".into(), tables: vec![coef], max_rows: 40, ..Default::default() });
        for (name, heading, t) in [
            ("llm_difference_tests", "Model difference per cell", &tests.llm_difference),
            ("presence_tests", "Effect of showing the chart per cell", &tests.presence),
        ] {
            if t.is_empty() {
                continue;
            }
            let table = test_table(name, t);
            outputs.push(write_table(rdir, &table)?);
            sections.push(HtmlSection { heading: heading.into(), tables: vec![table], max_rows: 40, ..Default::default() });
        }
        let mut groups: Vec<String> = main.labels.iter().map(|l| label_group(l)).collect();
        groups.dedup();
        let mut fig = HtmlSection { heading: "Bootstrapped coefficients".into(), ..Default::default() };
        for g in groups {
            let f = ridge_plot(&set, &g)?;
            let (png, csv) = write_figure(rdir, &f)?;
            fig.images.push((format!("{}.png", f.name), f.caption.clone()));
            outputs.push(png);
            outputs.push(csv);
        }
        sections.push(fig);
        let html = rdir.join("summary.html");
        write_atomic(&html, html_summary("Pooled logistic analysis", &sections).as_bytes())?;
        outputs.push(html);
        Ok(outputs)
    }

    // -- all ---------------------------------------------------------------

    pub fn cmd_all(&self) -> Result<()> {
        self.cmd_generate()?;
        self.cmd_bank()?;
        self.cmd_run()?;
        self.cmd_score()?;
        self.cmd_analyze()?;
        self.cmd_report()?;
        self.verify_chain()
    }

    /// Check that every stage manifest under the output root still matches
    /// the files on disk, so each stage's inputs are exactly what the
    /// previous stage wrote.
    pub fn verify_chain(&self) -> Result<()> {
        let mut dirs = Vec::new();
        for e in self.experiments() {
            let d = self.dirs(e);
            dirs.extend([d.charts, d.bank, d.trials, d.scores, d.stats, d.report]);
        }
        let a = self.cfg.analysis_dir();
        dirs.extend([a.join("report"), a]);
        let root = &self.cfg.out_dir;
        for dir in dirs.into_iter().filter(|d| d.join(crate::io::MANIFEST).exists()) {
            let m = StageManifest::read(&dir).ok_or_else(|| Error::format(dir.display().to_string(), "unreadable stage manifest"))?;
            for (rel, h) in m.inputs.iter().chain(m.outputs.iter()) {
                let now = crate::io::sha256_file(&root.join(rel))?;
                if &now != h {
                    return Err(Error::format(format!("{} manifest", m.stage), format!("{rel} changed after it was recorded")));
                }
            }
        }
        Ok(())
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_matching() {
        let s = Selection { condition: Some("e5:novis:choices:dectx".into()), backend: None };
        let conds = Experiment::E5.conditions("m");
        assert!(s.experiment_ok(Experiment::E5) && !s.experiment_ok(Experiment::E1));
        assert_eq!(conds.iter().filter(|c| s.condition_ok(Experiment::E5, c)).count(), 1);
        let s = Selection { condition: Some("vis:choices:ctx".into()), backend: None };
        assert!(s.experiment_ok(Experiment::E1) && s.experiment_ok(Experiment::E2));
        assert!(s.condition_ok(Experiment::E1, &Experiment::E1.conditions("m")[0]));
        assert!(!s.condition_ok(Experiment::E2, &Experiment::E2.conditions("m")[0]));
    }
}
