//! Tests on bootstrap samples: coefficients against zero and differences
//! of cell probabilities.

use super::bootstrap::BootstrapSet;
use super::design::vis_label;
use super::special::{beta_cdf, beta_pdf, kolmogorov_sf, mean, normal_quantile, normal_sf, quantile_sorted, sorted, t_cdf, t_quantile, variance};
use super::{derive_seed, StatsError};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

pub const ALPHA: f64 = 0.05;
pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    TTest,
    WilcoxonEcdf,
    BetaDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    TwoSided,
    /// Alternative: first minus second is positive.
    Greater,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub target: String,
    pub method: TestMethod,
    pub sidedness: Sidedness,
    pub estimate: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub significant: bool,
    /// p-values of the distribution screens that chose the method.
    pub screen_p: Vec<f64>,
}

fn finish(target: &str, method: TestMethod, sidedness: Sidedness, estimate: f64, statistic: f64, p: f64, ci: (f64, f64), screen_p: Vec<f64>) -> TestResult {
    let p = p.clamp(0.0, 1.0);
    TestResult {
        target: target.to_string(),
        method,
        sidedness,
        estimate,
        statistic,
        p_value: p,
        ci_low: ci.0,
        ci_high: ci.1,
        significant: p < ALPHA,
        screen_p,
    }
}

// ---------------------------------------------------------------------------
// Shapiro-Wilk (Royston's approximation)

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

/// Returns `(W, p)`, or `None` for fewer than 3 values or constant data.
pub fn shapiro_wilk(x: &[f64]) -> Option<(f64, f64)> {
    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
    const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
    const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
    const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
    const G: [f64; 2] = [-2.273, 0.459];
    let n = x.len();
    if n < 3 {
        return None;
    }
    let s = sorted(x);
    if s[n - 1] - s[0] <= 1e-12 * (s[0].abs() + s[n - 1].abs()).max(1e-300) {
        return None;
    }
    let nn2 = n / 2;
    let an = n as f64;
    let mut a = vec![0.0; nn2 + 1];
    if n == 3 {
        a[1] = libm::sqrt(0.5);
    } else {
        let an25 = an + 0.25;
        let mut m = vec![0.0; nn2 + 1];
        let mut summ2 = 0.0;
        for i in 1..=nn2 {
            m[i] = normal_quantile((i as f64 - 0.375) / an25);
            summ2 += m[i] * m[i];
        }
        summ2 *= 2.0;
        let ssumm2 = libm::sqrt(summ2);
        let rsn = 1.0 / libm::sqrt(an);
        let a1 = poly(&C1, rsn) - m[1] / ssumm2;
        let (i1, fac) = if n > 5 {
            let a2 = -m[2] / ssumm2 + poly(&C2, rsn);
            a[2] = a2;
            (3, libm::sqrt((summ2 - 2.0 * m[1] * m[1] - 2.0 * m[2] * m[2]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)))
        } else {
            (2, libm::sqrt((summ2 - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1)))
        };
        a[1] = a1;
        for i in i1..=nn2 {
            a[i] = -m[i] / fac;
        }
    }
    let mu = mean(&s);
    let ss: f64 = s.iter().map(|v| (v - mu) * (v - mu)).sum();
    let num: f64 = (1..=nn2).map(|i| a[i] * (s[n - i] - s[i - 1])).sum();
    let w = (num * num / ss).min(1.0);
    if n == 3 {
        let pi6 = 6.0 / core::f64::consts::PI;
        let p = pi6 * (libm::asin(libm::sqrt(w)) - libm::asin(libm::sqrt(0.75)));
        return Some((w, p.clamp(0.0, 1.0)));
    }
    let mut w1 = libm::log(1.0 - w);
    let (m, sd) = if n <= 11 {
        let gamma = poly(&G, an);
        if w1 >= gamma {
            return Some((w, 1e-99));
        }
        w1 = -libm::log(gamma - w1);
        (poly(&C3, an), libm::exp(poly(&C4, an)))
    } else {
        let xx = libm::log(an);
        (poly(&C5, xx), libm::exp(poly(&C6, xx)))
    };
    Some((w, normal_sf((w1 - m) / sd)))
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank (normal approximation, zeros dropped)

/// Returns `(min(W+, W-), z)` where z is the standardized W+.
pub fn wilcoxon_signed_rank(d: &[f64]) -> Option<(f64, f64)> {
    let mut nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return None;
    }
    nz.sort_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap_or(core::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nz[j + 1].abs() == nz[i].abs() {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in ranks.iter_mut().take(j + 1).skip(i) {
            *k = r;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let nf = n as f64;
    let total = nf * (nf + 1.0) / 2.0;
    let mu = total / 2.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = if var > 0.0 { (w_plus - mu) / libm::sqrt(var) } else { 0.0 };
    Some((w_plus.min(total - w_plus), z))
}

fn wilcoxon_p(d: &[f64], side: Sidedness) -> (f64, f64) {
    match wilcoxon_signed_rank(d) {
        None => (0.0, 1.0),
        Some((stat, z)) => {
            let p = match side {
                Sidedness::TwoSided => 2.0 * normal_sf(z.abs()),
                Sidedness::Greater => normal_sf(z),
            };
            (stat, p)
        }
    }
}

fn ecdf_bounds(x: &[f64], side: Sidedness) -> (f64, f64) {
    let s = sorted(x);
    match side {
        Sidedness::TwoSided => (quantile_sorted(&s, ALPHA / 2.0), quantile_sorted(&s, 1.0 - ALPHA / 2.0)),
        Sidedness::Greater => (quantile_sorted(&s, ALPHA), 1.0),
    }
}

// ---------------------------------------------------------------------------
// Coefficient test

pub fn test_coefficient(samples: &[f64], target: &str) -> Result<TestResult, StatsError> {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(StatsError::InsufficientSamples { needed: MIN_SAMPLES, got: n });
    }
    let m = mean(samples);
    let sw = shapiro_wilk(samples);
    let normal = matches!(sw, Some((_, p)) if p >= ALPHA);
    let screen = vec![sw.map(|(_, p)| p).unwrap_or(0.0)];
    if normal {
        let sd = libm::sqrt(variance(samples));
        let se = sd / libm::sqrt(n as f64);
        let df = (n - 1) as f64;
        let t = m / se;
        let p = 2.0 * (1.0 - t_cdf(t.abs(), df));
        let h = t_quantile(1.0 - ALPHA / 2.0, df) * se;
        Ok(finish(target, TestMethod::TTest, Sidedness::TwoSided, m, t, p, (m - h, m + h), screen))
    } else {
        let (stat, p) = wilcoxon_p(samples, Sidedness::TwoSided);
        Ok(finish(target, TestMethod::WilcoxonEcdf, Sidedness::TwoSided, m, stat, p, ecdf_bounds(samples, Sidedness::TwoSided), screen))
    }
}

// ---------------------------------------------------------------------------
// Probability differences

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffOptions {
    pub mc_draws: usize,
    /// Convolution grid step for the refinement near the decision boundary.
    pub grid_step: f64,
}

impl Default for DiffOptions {
    fn default() -> Self {
        DiffOptions { mc_draws: 1_000_000, grid_step: 1e-4 }
    }
}

/// Method-of-moments beta fit; `None` if outside (0, 1) or degenerate.
pub fn fit_beta(x: &[f64]) -> Option<(f64, f64)> {
    if x.len() < 2 || x.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
        return None;
    }
    let m = mean(x);
    let v = variance(x);
    if !(v > 0.0) || v >= m * (1.0 - m) {
        return None;
    }
    let common = m * (1.0 - m) / v - 1.0;
    Some((m * common, (1.0 - m) * common))
}

/// Kolmogorov-Smirnov p-value against a beta distribution (Stephens'
/// small-sample correction).
pub fn ks_beta(x: &[f64], a: f64, b: f64) -> f64 {
    let s = sorted(x);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, v) in s.iter().enumerate() {
        let f = beta_cdf(*v, a, b);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = libm::sqrt(n);
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

fn param_seed(a: f64, b: f64, stream: u64) -> u64 {
    derive_seed(a.to_bits() ^ b.to_bits().rotate_left(17), stream, 0xBE7A)
}

fn beta_draws(a: f64, b: f64, n: usize, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(param_seed(a, b, stream));
    let d = Beta::new(a, b).expect("positive beta parameters");
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

/// P(X <= Y) for independent betas by Simpson integration of f_Y * F_X.
pub fn beta_prob_le(pa: (f64, f64), pb: (f64, f64), step: f64) -> f64 {
    let n = {
        let k = libm::ceil(1.0 / step) as usize;
        k + (k & 1)
    };
    let h = 1.0 / n as f64;
    let f = |y: f64| beta_pdf(y, pb.0, pb.1) * beta_cdf(y, pa.0, pa.1);
    let mut s = f(0.0) + f(1.0);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    (s * h / 3.0).clamp(0.0, 1.0)
}

/// Difference distribution X - Y of two independent betas, sampled.
/// Each distribution draws from a stream keyed by its own parameters, so
/// swapping the arguments negates every draw.
pub fn beta_difference_draws(pa: (f64, f64), pb: (f64, f64), n: usize) -> Vec<f64> {
    let ka = (pa.0.to_bits(), pa.1.to_bits());
    let kb = (pb.0.to_bits(), pb.1.to_bits());
    let (sa, sb) = if ka <= kb { (1, 2) } else { (2, 1) };
    let x = beta_draws(pa.0, pa.1, n, sa);
    let y = beta_draws(pb.0, pb.1, n, sb);
    x.iter().zip(&y).map(|(a, b)| a - b).collect()
}

pub fn test_probability_difference(a: &[f64], b: &[f64], side: Sidedness, opts: &DiffOptions, target: &str) -> Result<TestResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(StatsError::InsufficientSamples { needed: 1, got: 0 });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let estimate = mean(&diffs);
    let fa = fit_beta(a);
    let fb = fit_beta(b);
    let screen: Vec<f64> = [(fa, a), (fb, b)].iter().map(|(f, x)| f.map(|(p, q)| ks_beta(x, p, q)).unwrap_or(0.0)).collect();
    if let (Some(pa), Some(pb)) = (fa, fb) {
        if screen.iter().all(|p| *p >= ALPHA) {
            let draws = opts.mc_draws.max(1000);
            let d = sorted(&beta_difference_draws(pa, pb, draws));
            let nf = d.len() as f64;
            let le = d.iter().filter(|v| **v <= 0.0).count() as f64 / nf;
            let ge = d.iter().filter(|v| **v >= 0.0).count() as f64 / nf;
            let p_of = |le: f64, ge: f64| match side {
                Sidedness::TwoSided => (2.0 * le.min(ge)).min(1.0),
                Sidedness::Greater => le,
            };
            let mut p = p_of(le, ge);
            let se = libm::sqrt(p.max(1.0 / nf) * (1.0 - p).max(1.0 / nf) / nf);
            if (p - ALPHA).abs() < 3.0 * se && pa != pb {
                let le = beta_prob_le(pa, pb, opts.grid_step);
                p = p_of(le, 1.0 - le);
            }
            let ci = match side {
                Sidedness::TwoSided => (quantile_sorted(&d, ALPHA / 2.0), quantile_sorted(&d, 1.0 - ALPHA / 2.0)),
                Sidedness::Greater => (quantile_sorted(&d, ALPHA), 1.0),
            };
            let mc_mean = d.iter().sum::<f64>() / nf;
            return Ok(finish(target, TestMethod::BetaDifference, side, mc_mean, mc_mean, p, ci, screen));
        }
    }
    let (stat, p) = wilcoxon_p(&diffs, side);
    Ok(finish(target, TestMethod::WilcoxonEcdf, side, estimate, stat, p, ecdf_bounds(&diffs, side), screen))
}

// ---------------------------------------------------------------------------
// Batteries over a bootstrap set

/// Tests every coefficient (intercept first) against zero.
pub fn coefficient_tests(set: &BootstrapSet) -> Result<Vec<TestResult>, StatsError> {
    let mut labels = vec!["intercept".to_string()];
    labels.extend(set.column_labels.iter().cloned());
    let run = |j: usize| test_coefficient(&set.coefficient_samples(j), &labels[j]);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..labels.len()).into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..labels.len()).map(run).collect()
    }
}

fn paired_tests(set: &BootstrapSet, pairs: Vec<(usize, usize, String)>, side: Sidedness, opts: &DiffOptions) -> Result<Vec<TestResult>, StatsError> {
    let run = |(i, j, label): &(usize, usize, String)| test_probability_difference(&set.cell_samples(*i), &set.cell_samples(*j), side, opts, label);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        pairs.par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        pairs.iter().map(run).collect()
    }
}

/// Two-sided comparison of two LLMs in every (chart, task, presence) cell.
pub fn llm_difference_tests(set: &BootstrapSet, first: &str, second: &str, opts: &DiffOptions) -> Result<Vec<TestResult>, StatsError> {
    let mut pairs = Vec::new();
    for (i, c) in set.cells.iter().enumerate() {
        if c.llm != first {
            continue;
        }
        if let Some(j) = set.cells.iter().position(|d| d.chart == c.chart && d.task == c.task && d.vis == c.vis && d.llm == second) {
            pairs.push((i, j, format!("{}|{}|{}|{} - {}", c.chart.as_str(), c.task.label(), vis_label(c.vis), first, second)));
        }
    }
    paired_tests(set, pairs, Sidedness::TwoSided, opts)
}

/// One-sided test that showing the chart raises the probability of a
/// correct answer, per (chart, task, LLM) cell.
pub fn presence_tests(set: &BootstrapSet, opts: &DiffOptions) -> Result<Vec<TestResult>, StatsError> {
    let mut pairs = Vec::new();
    for (i, c) in set.cells.iter().enumerate() {
        if !c.vis {
            continue;
        }
        if let Some(j) = set.cells.iter().position(|d| d.chart == c.chart && d.task == c.task && d.llm == c.llm && !d.vis) {
            pairs.push((i, j, format!("{}|{}|{}|vis - novis", c.chart.as_str(), c.task.label(), c.llm)));
        }
    }
    paired_tests(set, pairs, Sidedness::Greater, opts)
}
