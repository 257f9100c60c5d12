//! Gaussian linear-model experiments on iterated refitting.
//!
//! Every trial draws a design `X` with i.i.d. `N(0, I_d)` rows, a target
//! `w*` and noise vectors `E_1, E_2, ...`, then either
//!
//! - refits on fully regenerated labels each generation (collapse), or
//! - refits on labels where only the rows selected by a mask `M_n` are
//!   replaced by regenerated ones (editing).
//!
//! Each trial uses three independent streams (data, masks, noise) keyed by
//! the trial index, so both processes see the same `X`, `w*` and `E_n` and
//! their generation-1 estimates coincide exactly.

mod linalg;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash;

pub use linalg::{
    fit_ridgeless, inverse_gram_traces, linear_fit, test_error, LeastSquares, LinearFit,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WStarMode {
    #[default]
    UnitFirstAxis,
    RandomUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub d: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub sigma2: f64,
    #[serde(default)]
    pub w_star_mode: WStarMode,
    pub m1_size: usize,
    pub eta: f64,
    pub generations: usize,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            d: 10,
            t: 100,
            sigma2: 1.0,
            w_star_mode: WStarMode::UnitFirstAxis,
            m1_size: 20,
            eta: 0.5,
            generations: 10,
            trials: 500,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// All violated constraints, empty when valid. `sigma2 = 0` is accepted
    /// as the noiseless limit.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.d == 0 {
            out.push("d must be at least 1".into());
        }
        if self.t < self.d + 2 {
            out.push(format!(
                "T must be at least d + 2 = {}, got {}",
                self.d + 2,
                self.t
            ));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            out.push(format!(
                "sigma2 must be finite and >= 0, got {}",
                self.sigma2
            ));
        }
        if self.m1_size > self.t {
            out.push(format!("m1_size {} exceeds T {}", self.m1_size, self.t));
        }
        if !(0.0..1.0).contains(&self.eta) {
            out.push(format!("eta must lie in [0, 1), got {}", self.eta));
        }
        if self.generations == 0 {
            out.push("generations must be at least 1".into());
        }
        if self.trials == 0 {
            out.push("trials must be at least 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(v.join("; ")))
        }
    }

    /// `σ²d/(T−d−1)`, the expected generation-1 error.
    pub fn unit_error(&self) -> f64 {
        self.sigma2 * self.d as f64 / (self.t as f64 - self.d as f64 - 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub e1: DVector<f64>,
    pub w_star: DVector<f64>,
}

fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize, sd: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// Draws `X`, then `w*`, then `E_1`.
pub fn make_dataset<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Dataset {
    let (t, d) = (cfg.t, cfg.d);
    // row-major draw order so a prefix of rows does not depend on T
    let x = DMatrix::from_row_iterator(
        t,
        d,
        (0..t * d).map(|_| rng.sample::<f64, _>(StandardNormal)),
    );
    let w_star = match cfg.w_star_mode {
        WStarMode::UnitFirstAxis => {
            let mut w = DVector::zeros(d);
            w[0] = 1.0;
            w
        }
        WStarMode::RandomUnit => loop {
            let g = gaussian_vector(rng, d, 1.0);
            let n = g.norm();
            if n > 0.0 {
                break g / n;
            }
        },
    };
    let e1 = gaussian_vector(rng, t, cfg.sigma2.sqrt());
    Dataset { x, e1, w_star }
}

/// Diagonal supports of `M_1..M_n`, pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditMaskSchedule {
    pub masks: Vec<Vec<usize>>,
}

impl EditMaskSchedule {
    pub fn sizes(&self) -> Vec<usize> {
        self.masks.iter().map(Vec::len).collect()
    }

    pub fn check_disjoint(&self) -> Result<()> {
        check_disjoint(&self.masks)
    }

    /// Applies `Ỹ ← M Ŷ + (1 − M) Ỹ` for mask `i`.
    pub fn apply(&self, i: usize, regenerated: &DVector<f64>, current: &mut DVector<f64>) {
        for &row in &self.masks[i] {
            current[row] = regenerated[row];
        }
    }
}

fn check_disjoint(masks: &[Vec<usize>]) -> Result<()> {
    let mut owner = std::collections::HashMap::new();
    for (i, m) in masks.iter().enumerate() {
        for &row in m {
            if let Some(&j) = owner.get(&row) {
                return Err(Error::OverlappingMasks {
                    first: j,
                    second: i,
                });
            }
            owner.insert(row, i);
        }
    }
    Ok(())
}

/// `round(m1 · η^(i−1))` for `i = 1..=n`.
pub fn mask_sizes(m1_size: usize, eta: f64, n: usize) -> Vec<usize> {
    (0..n)
        .map(|i| (m1_size as f64 * eta.powi(i as i32)).round().max(0.0) as usize)
        .collect()
}

/// One mask per generation. Rows are drawn uniformly without replacement
/// from those not used by earlier masks.
pub fn make_edit_masks<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<EditMaskSchedule> {
    let sizes = mask_sizes(cfg.m1_size, cfg.eta, cfg.generations);
    let required: usize = sizes.iter().sum();
    if required > cfg.t {
        return Err(Error::MaskCapacity {
            required,
            available: cfg.t,
        });
    }
    let mut free: Vec<usize> = (0..cfg.t).collect();
    let mut masks = Vec::with_capacity(sizes.len());
    for size in sizes {
        let mut picked: Vec<usize> = index::sample(rng, free.len(), size).into_iter().collect();
        // remove from the back so earlier positions stay valid
        picked.sort_unstable_by(|a, b| b.cmp(a));
        let mut mask: Vec<usize> = picked.into_iter().map(|p| free.swap_remove(p)).collect();
        mask.sort_unstable();
        masks.push(mask);
    }
    Ok(EditMaskSchedule { masks })
}

/// `w* + (XᵀX)⁻¹Xᵀ(E_1 + Σᵢ MᵢE_{i+1})` through a Cholesky solve of the
/// normal equations. Uses `noise[0..=n]` and `masks[0..n]`.
pub fn closed_form_estimator(
    x: &DMatrix<f64>,
    noise: &[DVector<f64>],
    masks: &[Vec<usize>],
    w_star: &DVector<f64>,
) -> Result<DVector<f64>> {
    if noise.is_empty() || masks.len() + 1 != noise.len() {
        return Err(Error::InvalidArgument(format!(
            "need n masks and n + 1 noise vectors, got {} and {}",
            masks.len(),
            noise.len()
        )));
    }
    check_disjoint(masks)?;
    let mut combined = noise[0].clone();
    for (mask, e) in masks.iter().zip(&noise[1..]) {
        for &row in mask {
            combined[row] += e[row];
        }
    }
    let gram = x.transpose() * x;
    let chol = gram.cholesky().ok_or(Error::RankDeficient {
        rank: 0,
        cols: x.ncols(),
    })?;
    Ok(w_star + chol.solve(&(x.transpose() * combined)))
}

/// Monte-Carlo means of `tr((XᵀX)⁻¹)` and `tr((XᵀX)⁻²)` over Gaussian `X`.
pub fn estimate_trace_moments(d: usize, t: usize, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if d == 0 || t < d + 2 || trials == 0 {
        return Err(Error::InvalidArgument(format!(
            "trace moments need d >= 1, T >= d + 2 and trials >= 1 (d={d}, T={t}, trials={trials})"
        )));
    }
    let cfg = SimConfig {
        d,
        t,
        ..SimConfig::default()
    };
    let sums = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = hash::stream(seed, "sim/trace", &(i as u64).to_le_bytes());
            inverse_gram_traces(&make_dataset(&cfg, &mut rng).x)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Ok((sums.0 / trials as f64, sums.1 / trials as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    /// Slope of the collapse line, `σ²d/(T−d−1)`.
    pub collapse_slope: f64,
    /// `2σ²d/(T−d−1)`.
    pub relaxed: f64,
    /// `σ²d/(T−d−1) + σ²·√E tr((XᵀX)⁻²)·√m1/(1−η)`; absent when `η ≥ 1`.
    pub geometric: Option<f64>,
}

impl Bounds {
    pub fn collapse_line(&self, generation: usize) -> f64 {
        self.collapse_slope * generation as f64
    }
}

pub fn theoretical_bounds(cfg: &SimConfig, second_moment: f64) -> Bounds {
    let unit = cfg.unit_error();
    let geometric = (cfg.eta < 1.0).then(|| {
        unit + cfg.sigma2 * second_moment.sqrt() * (cfg.m1_size as f64).sqrt() / (1.0 - cfg.eta)
    });
    Bounds {
        collapse_slope: unit,
        relaxed: 2.0 * unit,
        geometric,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrajectory {
    pub per_generation_test_error: Vec<f64>,
    pub stderr: Vec<f64>,
    pub collapse_line: Vec<f64>,
    pub bound_relaxed: f64,
    pub bound_geometric: Option<f64>,
}

impl SimTrajectory {
    pub fn max_mean_error(&self) -> f64 {
        self.per_generation_test_error
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn trial_stream(cfg: &SimConfig, domain: &str, trial: usize) -> rand_chacha::ChaCha8Rng {
    hash::stream(cfg.seed, domain, &(trial as u64).to_le_bytes())
}

/// Everything one editing trial drew and estimated.
#[derive(Debug, Clone)]
pub struct EditingTrial {
    pub x: DMatrix<f64>,
    pub w_star: DVector<f64>,
    /// `E_1..E_n`.
    pub noise: Vec<DVector<f64>>,
    pub masks: EditMaskSchedule,
    /// `ŵ_1..ŵ_n`.
    pub estimates: Vec<DVector<f64>>,
}

struct TrialDraws {
    data: Dataset,
    noise: rand_chacha::ChaCha8Rng,
}

fn draw_trial(cfg: &SimConfig, trial: usize) -> TrialDraws {
    let data = make_dataset(cfg, &mut trial_stream(cfg, "sim/data", trial));
    TrialDraws {
        data,
        noise: trial_stream(cfg, "sim/noise", trial),
    }
}

/// Ỹ₁ = Xw*+E₁; ŵₙ = fit(X, Ỹₙ); Ŷₙ₊₁ = Xŵₙ + Eₙ₊₁; Ỹₙ₊₁ = MₙŶₙ₊₁ + (1−Mₙ)Ỹₙ.
pub fn run_editing_trial(cfg: &SimConfig, trial: usize) -> Result<EditingTrial> {
    cfg.validate()?;
    let TrialDraws {
        data,
        noise: mut noise_rng,
    } = draw_trial(cfg, trial);
    let masks = make_edit_masks(cfg, &mut trial_stream(cfg, "sim/masks", trial))?;
    let ls = LeastSquares::new(&data.x)?;
    let sd = cfg.sigma2.sqrt();

    let mut labels = &data.x * &data.w_star + &data.e1;
    let mut noise = vec![data.e1.clone()];
    let mut estimates = Vec::with_capacity(cfg.generations);
    for g in 0..cfg.generations {
        let w = ls.solve(&labels);
        if g + 1 < cfg.generations {
            let e = gaussian_vector(&mut noise_rng, cfg.t, sd);
            let regenerated = &data.x * &w + &e;
            masks.apply(g, &regenerated, &mut labels);
            noise.push(e);
        }
        estimates.push(w);
    }
    Ok(EditingTrial {
        x: data.x,
        w_star: data.w_star,
        noise,
        masks,
        estimates,
    })
}

/// Test errors of `ŵ_1..ŵ_n` under full resynthesis `ŵₙ = fit(X, Xŵₙ₋₁ + Eₙ)`.
pub fn run_collapse_trial(cfg: &SimConfig, trial: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    let TrialDraws {
        data,
        noise: mut noise_rng,
    } = draw_trial(cfg, trial);
    let ls = LeastSquares::new(&data.x)?;
    let sd = cfg.sigma2.sqrt();
    let mut w = ls.solve(&(&data.x * &data.w_star + &data.e1));
    let mut errors = vec![test_error(&w, &data.w_star, None)];
    for _ in 1..cfg.generations {
        let e = gaussian_vector(&mut noise_rng, cfg.t, sd);
        w = ls.solve(&(&data.x * &w + e));
        errors.push(test_error(&w, &data.w_star, None));
    }
    Ok(errors)
}

fn summarize(cfg: &SimConfig, per_trial: Vec<Vec<f64>>) -> Result<SimTrajectory> {
    let n = per_trial.len() as f64;
    let gens = cfg.generations;
    let mut mean = vec![0.0; gens];
    let mut stderr = vec![0.0; gens];
    for g in 0..gens {
        let m = per_trial.iter().map(|r| r[g]).sum::<f64>() / n;
        mean[g] = m;
        if per_trial.len() > 1 {
            let var = per_trial.iter().map(|r| (r[g] - m).powi(2)).sum::<f64>() / (n - 1.0);
            stderr[g] = (var / n).sqrt();
        }
    }
    let (_, second) = estimate_trace_moments(cfg.d, cfg.t, cfg.trials, cfg.seed)?;
    let bounds = theoretical_bounds(cfg, second);
    Ok(SimTrajectory {
        per_generation_test_error: mean,
        stderr,
        collapse_line: (1..=gens).map(|g| bounds.collapse_line(g)).collect(),
        bound_relaxed: bounds.relaxed,
        bound_geometric: bounds.geometric,
    })
}

pub fn run_collapse_process(cfg: &SimConfig) -> Result<SimTrajectory> {
    cfg.validate()?;
    let per_trial = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_collapse_trial(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    summarize(cfg, per_trial)
}

pub fn run_editing_process(cfg: &SimConfig) -> Result<SimTrajectory> {
    cfg.validate()?;
    let per_trial = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let trial = run_editing_trial(cfg, i)?;
            Ok(trial
                .estimates
                .iter()
                .map(|w| test_error(w, &trial.w_star, None))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(cfg, per_trial)
}

#[cfg(test)]
mod tests;
