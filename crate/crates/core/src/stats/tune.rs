//! Repeated k-fold cross-validation over a hyperparameter grid.

use super::design::{CellCounts, DesignMatrix};
use super::logistic::{fit_counts, Basis, FitOptions, HyperParams, Penalty, Solver};
use super::special::sigmoid;
use super::{derive_seed, StatsError};
use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const C_VALUES: [f64; 7] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];
pub const SOLVERS_L2: [Solver; 5] = [Solver::Lbfgs, Solver::Liblinear, Solver::NewtonCg, Solver::NewtonCholesky, Solver::Sag];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub combos: Vec<HyperParams>,
}

impl Grid {
    /// L1 x 7, L2 x 5 solvers x 7, none x 5 solvers, elastic net x 7 x 10.
    pub fn full() -> Grid {
        let mut combos = Vec::new();
        for c in C_VALUES {
            combos.push(HyperParams { penalty: Penalty::L1, solver: Solver::Liblinear, c, l1_ratio: None });
        }
        for s in SOLVERS_L2 {
            for c in C_VALUES {
                combos.push(HyperParams { penalty: Penalty::L2, solver: s, c, l1_ratio: None });
            }
        }
        for s in SOLVERS_L2 {
            combos.push(HyperParams { penalty: Penalty::None, solver: s, c: 1.0, l1_ratio: None });
        }
        for c in C_VALUES {
            for k in 0..10 {
                combos.push(HyperParams::elastic_net(c, k as f64 / 9.0));
            }
        }
        Grid { combos }
    }

    pub fn single(hp: HyperParams) -> Grid {
        Grid { combos: alloc::vec![hp] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub fit: FitOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions { folds: 10, repetitions: 10, seed: 0, fit: FitOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub average_precision: f64,
    pub auprc: f64,
    pub auroc: f64,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub combo: usize,
    pub repetition: usize,
    pub fold: usize,
    pub metrics: Metrics,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboSummary {
    pub combo: usize,
    pub hyper: HyperParams,
    pub mean: Metrics,
    pub sd_auprc: f64,
    pub nonconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub grid: Grid,
    pub scores: Vec<CvScore>,
    pub summary: Vec<ComboSummary>,
    pub best: usize,
}

impl TuningResult {
    pub fn best_hyper(&self) -> HyperParams {
        self.grid.combos[self.best]
    }
}

/// Ranking metrics from scored groups `(score, positives, negatives)`.
pub fn metrics_from_groups(groups: &[(f64, f64, f64)]) -> Metrics {
    let mut g: Vec<(f64, f64, f64)> = groups.iter().copied().filter(|(_, p, n)| p + n > 0.0).collect();
    g.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal));
    // Merge equal scores into one threshold.
    let mut merged: Vec<(f64, f64, f64)> = Vec::new();
    for x in g {
        match merged.last_mut() {
            Some(last) if last.0 == x.0 => {
                last.1 += x.1;
                last.2 += x.2;
            }
            _ => merged.push(x),
        }
    }
    let tp_total: f64 = merged.iter().map(|x| x.1).sum();
    let fp_total: f64 = merged.iter().map(|x| x.2).sum();
    let total = tp_total + fp_total;
    let (mut tp, mut fp) = (0.0, 0.0);
    let (mut ap, mut auprc, mut auroc) = (0.0, 0.0, 0.0);
    let (mut prev_r, mut prev_p, mut prev_fpr, mut prev_tpr) = (0.0, 1.0, 0.0, 0.0);
    for (_, p, n) in &merged {
        tp += p;
        fp += n;
        let prec = tp / (tp + fp);
        let rec = if tp_total > 0.0 { tp / tp_total } else { 0.0 };
        ap += (rec - prev_r) * prec;
        auprc += (rec - prev_r) * (prec + prev_p) / 2.0;
        let fpr = if fp_total > 0.0 { fp / fp_total } else { 0.0 };
        let tpr = rec;
        auroc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_r = rec;
        prev_p = prec;
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    // Classification at probability 0.5.
    let (mut ptp, mut pfp, mut correct) = (0.0, 0.0, 0.0);
    for (s, p, n) in &merged {
        if *s > 0.5 {
            ptp += p;
            pfp += n;
            correct += p;
        } else {
            correct += n;
        }
    }
    let f1 = if tp_total + ptp + pfp > 0.0 { 2.0 * ptp / (tp_total + ptp + pfp) } else { 0.0 };
    if tp_total == 0.0 {
        ap = f64::NAN;
        auprc = f64::NAN;
    }
    if tp_total == 0.0 || fp_total == 0.0 {
        auroc = f64::NAN;
    }
    Metrics { average_precision: ap, auprc, auroc, f1, accuracy: if total > 0.0 { correct / total } else { f64::NAN } }
}

/// Randomly keep `fraction` of the rows (deterministic for a seed).
pub fn subsample(m: &DesignMatrix, fraction: f64, seed: u64) -> DesignMatrix {
    let n = m.n_rows();
    let k = libm::round((n as f64) * fraction) as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(k);
    idx.sort_unstable();
    DesignMatrix {
        space: m.space.clone(),
        row_cell: idx.iter().map(|&i| m.row_cell[i]).collect(),
        y: idx.iter().map(|&i| m.y[i]).collect(),
        dropped: m.dropped,
    }
}

fn nan_mean(x: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in x.filter(|v| !v.is_nan()) {
        s += v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

struct FoldTask {
    repetition: usize,
    fold: usize,
    train: CellCounts,
    test: CellCounts,
}

fn make_folds(m: &DesignMatrix, opts: &CvOptions) -> Vec<FoldTask> {
    let n = m.n_rows();
    let mut tasks = Vec::new();
    for rep in 0..opts.repetitions {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, rep as u64, 0xF01D)));
        for fold in 0..opts.folds {
            let lo = fold * n / opts.folds;
            let hi = (fold + 1) * n / opts.folds;
            let test = m.counts_for(perm[lo..hi].iter().copied());
            let mut train = m.counts();
            for c in 0..train.n.len() {
                train.n[c] -= test.n[c];
                train.pos[c] -= test.pos[c];
            }
            tasks.push(FoldTask { repetition: rep, fold, train, test });
        }
    }
    tasks
}

fn run_fold(m: &DesignMatrix, task: &FoldTask, problems: &[HyperParams], fit: &FitOptions) -> Vec<(Metrics, bool)> {
    let needs_basis = problems.iter().any(|hp| hp.lambdas().0 == 0.0);
    let basis = needs_basis.then(|| Basis::new(&m.space, &task.train));
    problems
        .iter()
        .map(|hp| match fit_counts(&m.space, &task.train, hp, fit, basis.as_ref()) {
            Ok(f) => {
                let groups: Vec<(f64, f64, f64)> = (0..m.space.n_cells())
                    .map(|c| (sigmoid(f.cell_logit(&m.space, c)), task.test.pos[c], task.test.n[c] - task.test.pos[c]))
                    .collect();
                (metrics_from_groups(&groups), f.converged)
            }
            Err(_) => (
                Metrics { average_precision: f64::NAN, auprc: f64::NAN, auroc: f64::NAN, f1: f64::NAN, accuracy: f64::NAN },
                false,
            ),
        })
        .collect()
}

pub fn tune_hyperparameters(m: &DesignMatrix, grid: &Grid, opts: &CvOptions) -> Result<TuningResult, StatsError> {
    if grid.combos.is_empty() {
        return Err(StatsError::EmptyGrid);
    }
    for hp in &grid.combos {
        hp.validate()?;
    }
    if m.n_rows() < opts.folds || opts.folds < 2 {
        return Err(StatsError::EmptyDesign);
    }
    // Combos sharing an objective are fitted once per fold.
    let mut key_index: BTreeMap<(u8, u64, u64), usize> = BTreeMap::new();
    let mut problems: Vec<HyperParams> = Vec::new();
    let combo_problem: Vec<usize> = grid
        .combos
        .iter()
        .map(|hp| {
            *key_index.entry(hp.problem_key()).or_insert_with(|| {
                problems.push(*hp);
                problems.len() - 1
            })
        })
        .collect();

    let tasks = make_folds(m, opts);
    #[cfg(feature = "parallel")]
    let results: Vec<Vec<(Metrics, bool)>> = {
        use rayon::prelude::*;
        tasks.par_iter().map(|t| run_fold(m, t, &problems, &opts.fit)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Vec<(Metrics, bool)>> = tasks.iter().map(|t| run_fold(m, t, &problems, &opts.fit)).collect();

    let mut scores = Vec::with_capacity(grid.combos.len() * tasks.len());
    for (ci, &pi) in combo_problem.iter().enumerate() {
        for (t, r) in tasks.iter().zip(&results) {
            scores.push(CvScore { combo: ci, repetition: t.repetition, fold: t.fold, metrics: r[pi].0, converged: r[pi].1 });
        }
    }
    let nt = tasks.len();
    let summary: Vec<ComboSummary> = (0..grid.combos.len())
        .map(|ci| {
            let s = &scores[ci * nt..(ci + 1) * nt];
            let mean = Metrics {
                average_precision: nan_mean(s.iter().map(|x| x.metrics.average_precision)),
                auprc: nan_mean(s.iter().map(|x| x.metrics.auprc)),
                auroc: nan_mean(s.iter().map(|x| x.metrics.auroc)),
                f1: nan_mean(s.iter().map(|x| x.metrics.f1)),
                accuracy: nan_mean(s.iter().map(|x| x.metrics.accuracy)),
            };
            let sd = {
                let v: Vec<f64> = s.iter().map(|x| x.metrics.auprc).filter(|v| !v.is_nan()).collect();
                libm::sqrt(super::special::variance(&v))
            };
            ComboSummary {
                combo: ci,
                hyper: grid.combos[ci],
                mean,
                sd_auprc: sd,
                nonconverged: s.iter().filter(|x| !x.converged).count(),
            }
        })
        .collect();
    let best = select_best(&summary);
    Ok(TuningResult { grid: grid.clone(), scores, summary, best })
}

/// Highest mean AUPRC; ties go to the lighter penalty, then the earlier combo.
pub fn select_best(summary: &[ComboSummary]) -> usize {
    let mut best = 0;
    for (i, s) in summary.iter().enumerate().skip(1) {
        let b = &summary[best];
        let (a, bb) = (s.mean.auprc, b.mean.auprc);
        let better = match (a.is_nan(), bb.is_nan()) {
            (true, _) => false,
            (false, true) => true,
            _ => {
                if (a - bb).abs() <= 1e-12 {
                    s.hyper.penalty.rank() < b.hyper.penalty.rank()
                } else {
                    a > bb
                }
            }
        };
        if better {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_size() {
        let g = Grid::full();
        assert_eq!(g.combos.len(), 117);
        let by = |p: Penalty| g.combos.iter().filter(|h| h.penalty == p).count();
        assert_eq!((by(Penalty::L1), by(Penalty::L2), by(Penalty::None), by(Penalty::ElasticNet)), (7, 35, 5, 70));
    }

    #[test]
    fn perfect_ranking_metrics() {
        let m = metrics_from_groups(&[(0.9, 10.0, 0.0), (0.1, 0.0, 30.0)]);
        assert_eq!((m.average_precision, m.auprc, m.auroc, m.f1, m.accuracy), (1.0, 1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn tied_scores_give_chance_auroc() {
        let m = metrics_from_groups(&[(0.3, 10.0, 30.0)]);
        assert!((m.auroc - 0.5).abs() < 1e-12);
        assert!((m.average_precision - 0.25).abs() < 1e-12);
        assert_eq!(m.f1, 0.0);
        assert!((m.accuracy - 0.75).abs() < 1e-12);
    }

    #[test]
    fn auroc_matches_pair_counting() {
        let groups = [(0.8, 3.0, 1.0), (0.6, 2.0, 2.0), (0.4, 1.0, 4.0), (0.2, 0.0, 3.0)];
        let m = metrics_from_groups(&groups);
        let (mut wins, mut pairs) = (0.0, 0.0);
        for (sp, p, _) in groups {
            for (sn, _, n) in groups {
                let w = p * n;
                pairs += w;
                wins += w * if sp > sn { 1.0 } else if sp == sn { 0.5 } else { 0.0 };
            }
        }
        assert!((m.auroc - wins / pairs).abs() < 1e-12);
    }

    #[test]
    fn tie_breaks_toward_lighter_penalty() {
        let mk = |i: usize, hp: HyperParams, a: f64| ComboSummary {
            combo: i,
            hyper: hp,
            mean: Metrics { auprc: a, ..Default::default() },
            sd_auprc: 0.0,
            nonconverged: 0,
        };
        let s = alloc::vec![
            mk(0, HyperParams::elastic_net(1.0, 0.5), 0.7),
            mk(1, HyperParams::l1(1.0), 0.7),
            mk(2, HyperParams::l2(1.0), 0.7),
            mk(3, HyperParams::none(), 0.7),
            mk(4, HyperParams::none(), 0.7),
        ];
        assert_eq!(select_best(&s), 3);
        assert_eq!(select_best(&s[..3]), 2);
    }
}
