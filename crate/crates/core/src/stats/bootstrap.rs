//! Nonparametric bootstrap of the fitted model.

use super::design::{CellCounts, CellKey, DesignMatrix};
use super::logistic::{fit_counts, Basis, FitOptions, FitResult, HyperParams};
use super::special::sigmoid;
use super::{derive_seed, StatsError};
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MAX_REDRAWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub resamples: usize,
    pub seed: u64,
    pub fit: FitOptions,
    /// Use the original sample for every resample (degenerate check).
    pub identity: bool,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions { resamples: 1000, seed: 0, fit: FitOptions::default(), identity: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSet {
    pub resamples: usize,
    pub seed: u64,
    pub hyper: HyperParams,
    pub column_labels: Vec<alloc::string::String>,
    /// One row per resample: intercept then the column coefficients.
    pub coefficients: Vec<Vec<f64>>,
    pub cells: Vec<CellKey>,
    /// One row per resample, one entry per cell.
    pub cell_probabilities: Vec<Vec<f64>>,
    /// Resamples redrawn because the fit did not converge.
    pub redraws: usize,
    /// Resamples kept despite non-convergence after all redraws.
    pub nonconverged: usize,
}

impl BootstrapSet {
    pub fn coefficient_samples(&self, j: usize) -> Vec<f64> {
        self.coefficients.iter().map(|r| r[j]).collect()
    }

    pub fn cell_samples(&self, cell: usize) -> Vec<f64> {
        self.cell_probabilities.iter().map(|r| r[cell]).collect()
    }

    pub fn cell_position(&self, key: &CellKey) -> Option<usize> {
        self.cells.iter().position(|c| c == key)
    }
}

fn resample_counts(m: &DesignMatrix, seed: u64) -> CellCounts {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = m.n_rows();
    let mut c = CellCounts::zeros(m.space.n_cells());
    for _ in 0..n {
        let r = rng.random_range(0..n);
        let ci = m.row_cell[r] as usize;
        c.n[ci] += 1.0;
        if m.y[r] {
            c.pos[ci] += 1.0;
        }
    }
    c
}

fn mask(c: &CellCounts) -> Vec<bool> {
    c.n.iter().map(|n| *n > 0.0).collect()
}

struct Draw {
    fit: FitResult,
    redraws: usize,
}

fn one_resample(m: &DesignMatrix, hp: &HyperParams, opts: &BootstrapOptions, i: usize, full: &(Vec<bool>, Basis)) -> Result<Draw, StatsError> {
    let mut last = None;
    for attempt in 0..=MAX_REDRAWS {
        let counts = if opts.identity { m.counts() } else { resample_counts(m, derive_seed(opts.seed, i as u64, attempt as u64)) };
        let basis = (mask(&counts) == full.0).then_some(&full.1);
        let fit = fit_counts(&m.space, &counts, hp, &opts.fit, basis)?;
        if fit.converged || opts.identity {
            return Ok(Draw { fit, redraws: attempt });
        }
        last = Some(fit);
    }
    Ok(Draw { fit: last.expect("at least one attempt"), redraws: MAX_REDRAWS })
}

pub fn bootstrap(m: &DesignMatrix, hp: &HyperParams, opts: &BootstrapOptions) -> Result<BootstrapSet, StatsError> {
    if opts.resamples == 0 {
        return Err(StatsError::InsufficientSamples { needed: 1, got: 0 });
    }
    let all = m.counts();
    let full = (mask(&all), Basis::new(&m.space, &all));
    #[cfg(feature = "parallel")]
    let draws: Vec<Result<Draw, StatsError>> = {
        use rayon::prelude::*;
        (0..opts.resamples).into_par_iter().map(|i| one_resample(m, hp, opts, i, &full)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let draws: Vec<Result<Draw, StatsError>> = (0..opts.resamples).map(|i| one_resample(m, hp, opts, i, &full)).collect();

    let mut coefficients = Vec::with_capacity(opts.resamples);
    let mut cell_probabilities = Vec::with_capacity(opts.resamples);
    let (mut redraws, mut nonconverged) = (0, 0);
    for d in draws {
        let d = d?;
        redraws += d.redraws;
        if !d.fit.converged {
            nonconverged += 1;
        }
        cell_probabilities.push((0..m.space.n_cells()).map(|c| sigmoid(d.fit.cell_logit(&m.space, c))).collect());
        coefficients.push(d.fit.with_intercept());
    }
    Ok(BootstrapSet {
        resamples: opts.resamples,
        seed: opts.seed,
        hyper: *hp,
        column_labels: m.space.columns.iter().map(|c| c.label()).collect(),
        coefficients,
        cells: m.space.cells.clone(),
        cell_probabilities,
        redraws,
        nonconverged,
    })
}
