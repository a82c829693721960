//! Paired K-fold cross-validation for the two tuning parameters.
//!
//! Both samples are shuffled and cut into K folds; fold k of A is paired
//! with fold k of B. Each block has its own loss and its own grid, so the
//! two tuning parameters are selected independently.
//!
//! A fold split is treated as a second-phase subsample: training design
//! weights are inflated by the inverse training fraction, validation
//! sampling-score weights are rescaled by the ratio of training to
//! validation B sizes, and the outcome block is fitted with the population
//! size scaled by the training fraction of B. This keeps every fit and loss
//! on the full-data scale so the same λ grid applies to all folds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, NonProbabilitySample, OutcomeFamily, ProbabilitySample};
use crate::numerics::{dot, inverse_score, DenseVector};
use crate::pee::{alpha_lambda_max, alpha_path, beta_lambda_max, beta_path, BlockFit, SolverControls, SCORE_FLOOR};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_GRID_SIZE: usize = 25;
/// Smallest grid value as a fraction of the largest.
pub const DEFAULT_GRID_RATIO: f64 = 0.01;

/// Fold assignment for both samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvPlan {
    pub k: usize,
    pub fold_a: Vec<usize>,
    pub fold_b: Vec<usize>,
    pub seed: u64,
}

fn assign_folds(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}

impl CvPlan {
    pub fn new(n_a: usize, n_b: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fold_a = assign_folds(n_a, k, &mut rng);
        let fold_b = assign_folds(n_b, k, &mut rng);
        Ok(Self { k, fold_a, fold_b, seed })
    }

    fn rows(folds: &[usize], k: usize, held_out: bool) -> Vec<usize> {
        (0..folds.len())
            .filter(|&i| (folds[i] == k) == held_out)
            .collect()
    }
}

/// Descending tuning grids, one per block.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    pub values_alpha: DenseVector,
    pub values_beta: DenseVector,
}

fn check_grid(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidInput(format!("{what} grid is empty")));
    }
    if v.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidInput(format!("{what} grid values must be positive")));
    }
    if v.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidInput(format!("{what} grid must be descending")));
    }
    Ok(())
}

impl LambdaGrid {
    pub fn new(values_alpha: Vec<f64>, values_beta: Vec<f64>) -> Result<Self> {
        check_grid(&values_alpha, "alpha")?;
        check_grid(&values_beta, "beta")?;
        Ok(Self {
            values_alpha: values_alpha.into(),
            values_beta: values_beta.into(),
        })
    }

    /// `size` log-spaced values from `max` down to `ratio * max`.
    pub fn log_spaced(max: f64, size: usize, ratio: f64) -> Vec<f64> {
        if size == 1 {
            return vec![max];
        }
        let step = ratio.ln() / (size - 1) as f64;
        (0..size).map(|i| max * (step * i as f64).exp()).collect()
    }

    /// Grids starting at each block's smallest all-zero λ on the full data.
    pub fn from_data(
        a: &ProbabilitySample,
        b: &NonProbabilitySample,
        spec: &ModelSpec,
        size: usize,
        controls: &SolverControls,
    ) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidInput("grid size must be positive".into()));
        }
        let n = spec.population_size;
        let floor = |v: f64| if v > 0.0 { v } else { 1e-8 };
        let la = floor(alpha_lambda_max(a, b, n, controls)?);
        let lb = floor(beta_lambda_max(b, spec.outcome_family, n, controls)?);
        Self::new(
            Self::log_spaced(la, size, DEFAULT_GRID_RATIO),
            Self::log_spaced(lb, size, DEFAULT_GRID_RATIO),
        )
    }
}

/// Calibration loss `Σ_j [Σ_B X_j/π_B(Xᵀα̂) − Σ_A X_j/π_A]²` on held-out rows.
pub fn loss_alpha(
    alpha_hat: &[f64],
    a_valid: &ProbabilitySample,
    b_valid: &NonProbabilitySample,
    n: f64,
) -> f64 {
    loss_alpha_scaled(alpha_hat, a_valid, b_valid, n, 1.0)
}

/// [`loss_alpha`] with inverse sampling scores multiplied by `score_scale`.
fn loss_alpha_scaled(
    alpha_hat: &[f64],
    a_valid: &ProbabilitySample,
    b_valid: &NonProbabilitySample,
    _n: f64,
    score_scale: f64,
) -> f64 {
    let p = alpha_hat.len();
    let mut imbalance = vec![0.0; p];
    for x in b_valid.covariates().row_iter() {
        let w = score_scale * inverse_score(dot(x, alpha_hat), SCORE_FLOOR).0;
        for (s, v) in imbalance.iter_mut().zip(x) {
            *s += w * v;
        }
    }
    for (x, pi) in a_valid.covariates().row_iter().zip(a_valid.inclusion_probs().iter()) {
        for (s, v) in imbalance.iter_mut().zip(x) {
            *s -= v / pi;
        }
    }
    imbalance.iter().map(|s| s * s).sum()
}

/// Prediction loss `Σ_B {Y − m(Xᵀβ̂)}²` on held-out rows.
pub fn loss_beta(beta_hat: &[f64], b_valid: &NonProbabilitySample, family: OutcomeFamily) -> f64 {
    b_valid
        .covariates()
        .row_iter()
        .zip(b_valid.outcomes().iter())
        .map(|(x, y)| (y - family.mean(dot(x, beta_hat))).powi(2))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TuningBlock {
    Alpha,
    Beta,
}

impl TuningBlock {
    pub fn name(self) -> &'static str {
        match self {
            TuningBlock::Alpha => "alpha",
            TuningBlock::Beta => "beta",
        }
    }
}

/// One (block, λ, fold) loss. `loss` is NaN when the training fit failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvRecord {
    pub block: TuningBlock,
    pub lambda: f64,
    pub fold: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub lambda_alpha: f64,
    pub lambda_beta: f64,
    pub cv_table: Vec<CvRecord>,
}

/// Training/validation data for one fold pair.
pub struct FoldSplit {
    pub a_train: ProbabilitySample,
    pub a_valid: ProbabilitySample,
    pub b_train: NonProbabilitySample,
    pub b_valid: NonProbabilitySample,
    /// Population size used for the outcome block on the training rows.
    pub n_beta_train: f64,
    /// Multiplier for validation inverse sampling scores.
    pub score_scale: f64,
}

impl FoldSplit {
    pub fn new(
        a: &ProbabilitySample,
        b: &NonProbabilitySample,
        n: f64,
        plan: &CvPlan,
        k: usize,
    ) -> Self {
        let ra_t = CvPlan::rows(&plan.fold_a, k, false);
        let ra_v = CvPlan::rows(&plan.fold_a, k, true);
        let rb_t = CvPlan::rows(&plan.fold_b, k, false);
        let rb_v = CvPlan::rows(&plan.fold_b, k, true);
        let frac = |part: usize, whole: usize| {
            if whole == 0 || part == 0 {
                1.0
            } else {
                part as f64 / whole as f64
            }
        };
        Self {
            a_train: a.subsample(&ra_t, frac(ra_t.len(), a.len())),
            a_valid: a.subsample(&ra_v, frac(ra_v.len(), a.len())),
            b_train: b.subsample(&rb_t),
            b_valid: b.subsample(&rb_v),
            n_beta_train: n * frac(rb_t.len(), b.len()),
            score_scale: if rb_v.is_empty() {
                1.0
            } else {
                rb_t.len() as f64 / rb_v.len() as f64
            },
        }
    }
}

/// Training-fold fits along both grids for fold `k`.
pub struct FoldFits {
    pub alpha: Vec<Result<BlockFit>>,
    pub beta: Vec<Result<BlockFit>>,
}

pub fn fit_fold(
    split: &FoldSplit,
    spec: &ModelSpec,
    grid: &LambdaGrid,
    controls: &SolverControls,
) -> FoldFits {
    let n = spec.population_size;
    FoldFits {
        alpha: alpha_path(&split.a_train, &split.b_train, n, &grid.values_alpha, controls, None),
        beta: beta_path(
            &split.b_train,
            spec.outcome_family,
            split.n_beta_train,
            &grid.values_beta,
            controls,
            None,
        ),
    }
}

fn usable(fit: &Result<BlockFit>) -> Option<&BlockFit> {
    fit.as_ref().ok().filter(|f| f.converged)
}

fn pick(block: TuningBlock, grid: &[f64], table: &[CvRecord], k: usize) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (idx, &lambda) in grid.iter().enumerate() {
        let losses: Vec<f64> = table
            .iter()
            .filter(|r| r.block == block)
            .skip(idx * k)
            .take(k)
            .map(|r| r.loss)
            .collect();
        if losses.iter().any(|l| l.is_nan()) {
            continue;
        }
        let total: f64 = losses.iter().sum();
        // strict comparison keeps the larger λ on ties
        if best.is_none_or(|(_, b)| total < b) {
            best = Some((lambda, total));
        }
    }
    best.map(|(l, _)| l).ok_or(Error::AllFitsFailed)
}

/// Cross-validated choice of `(λ_α, λ_β)` over the grid.
pub fn select_lambdas(
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    spec: &ModelSpec,
    grid: &LambdaGrid,
    plan: &CvPlan,
    controls: &SolverControls,
) -> Result<TuningResult> {
    if plan.fold_a.len() != a.len() || plan.fold_b.len() != b.len() {
        return Err(Error::Dimension("fold assignment does not match the samples".into()));
    }
    let n = spec.population_size;
    let family = spec.outcome_family;
    let per_fold: Vec<(Vec<f64>, Vec<f64>)> = (0..plan.k)
        .into_par_iter()
        .map(|k| {
            let split = FoldSplit::new(a, b, n, plan, k);
            let fits = fit_fold(&split, spec, grid, controls);
            let la = fits
                .alpha
                .iter()
                .map(|f| {
                    usable(f).map_or(f64::NAN, |f| {
                        loss_alpha_scaled(&f.coef, &split.a_valid, &split.b_valid, n, split.score_scale)
                    })
                })
                .collect();
            let lb = fits
                .beta
                .iter()
                .map(|f| usable(f).map_or(f64::NAN, |f| loss_beta(&f.coef, &split.b_valid, family)))
                .collect();
            (la, lb)
        })
        .collect();

    let mut cv_table = Vec::with_capacity(plan.k * (grid.values_alpha.len() + grid.values_beta.len()));
    for (block, values) in [(TuningBlock::Alpha, &grid.values_alpha), (TuningBlock::Beta, &grid.values_beta)] {
        for (idx, &lambda) in values.iter().enumerate() {
            for (fold, (la, lb)) in per_fold.iter().enumerate() {
                let loss = match block {
                    TuningBlock::Alpha => la[idx],
                    TuningBlock::Beta => lb[idx],
                };
                cv_table.push(CvRecord { block, lambda, fold, loss });
            }
        }
    }
    Ok(TuningResult {
        lambda_alpha: pick(TuningBlock::Alpha, &grid.values_alpha, &cv_table, plan.k)?,
        lambda_beta: pick(TuningBlock::Beta, &grid.values_beta, &cv_table, plan.k)?,
        cv_table,
    })
}
