//! End-to-end analysis of one pair of samples.
//!
//! Covariates are standardized on the pooled rows, tuned by cross-validation,
//! selected by the penalized estimating equations, then re-fitted jointly on
//! the union of the selected sets. Coefficients in the returned structures
//! are on the standardized scale unless a field says otherwise; every mean
//! estimate is invariant to the scaling.

use crate::drest::{
    estimate_on_support, mu_dr0, mu_ipw, mu_naive, mu_reg, Design, DrEstimate, JointControls,
    SelectedSupport,
};
use crate::error::{Error, Result};
use crate::model::{
    standardize_covariates, ModelSpec, NonProbabilitySample, ProbabilitySample, ScaleInfo,
};
use crate::pee::{alpha_path, beta_path, combine_fits, SolverControls, ThetaEstimate};
use crate::tuning::{
    select_lambdas, CvPlan, LambdaGrid, TuningResult, DEFAULT_FOLDS, DEFAULT_GRID_SIZE,
};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub spec: ModelSpec,
    pub folds: usize,
    pub grid_size: usize,
    pub seed: u64,
    pub design: Design,
    pub level: f64,
    /// Skip cross-validation and use these `(λ_α, λ_β)` directly.
    pub fixed_lambdas: Option<(f64, f64)>,
    pub solver: SolverControls,
    pub joint: JointControls,
}

impl PipelineConfig {
    pub fn new(spec: ModelSpec) -> Self {
        Self {
            spec,
            folds: DEFAULT_FOLDS,
            grid_size: DEFAULT_GRID_SIZE,
            seed: 0,
            design: Design::PoissonA,
            level: 0.95,
            fixed_lambdas: None,
            solver: SolverControls::default(),
            joint: JointControls::default(),
        }
    }
}

/// Output of the selection step.
#[derive(Debug, Clone)]
pub struct Selection {
    pub a: ProbabilitySample,
    pub b: NonProbabilitySample,
    pub scale: ScaleInfo,
    pub lambda_alpha: f64,
    pub lambda_beta: f64,
    pub tuning: Option<TuningResult>,
    pub step1: ThetaEstimate,
    pub support: SelectedSupport,
}

impl Selection {
    pub fn alpha_original(&self) -> Vec<f64> {
        self.scale.to_original(&self.step1.alpha)
    }

    pub fn beta_original(&self) -> Vec<f64> {
        self.scale.to_original(&self.step1.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baselines {
    pub naive: f64,
    pub p_ipw: f64,
    pub p_reg: f64,
    pub p_dr0: f64,
}

/// Point estimate, variance, interval and diagnostics.
///
/// Variances are on the scale of `mu_hat`, so `se = sqrt(max(v1 + v2, 0))`
/// without any sample-size factor.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub mu_hat: f64,
    pub v1_hat: f64,
    pub v2_hat: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub negative_variance: bool,
    pub theta_second_step: ThetaEstimate,
    pub baselines: Baselines,
    pub n_a: usize,
    pub n_b: usize,
    pub step1_iterations: usize,
    pub step1_converged: bool,
    pub step2_iterations: usize,
    pub clip_events: usize,
}

impl EstimateReport {
    fn new(sel: &Selection, dr: DrEstimate, baselines: Baselines) -> Self {
        Self {
            mu_hat: dr.mu_hat,
            v1_hat: dr.variance.v1_hat,
            v2_hat: dr.variance.v2_hat,
            se: dr.se,
            ci_low: dr.ci_low,
            ci_high: dr.ci_high,
            negative_variance: dr.variance.negative,
            n_a: sel.a.len(),
            n_b: sel.b.len(),
            step1_iterations: sel.step1.iterations,
            step1_converged: sel.step1.converged,
            step2_iterations: dr.theta.iterations,
            clip_events: sel.step1.clip_events + dr.theta.clip_events,
            theta_second_step: dr.theta,
            baselines,
        }
    }
}

fn prepare(
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    cfg: &PipelineConfig,
) -> Result<(ProbabilitySample, NonProbabilitySample, ScaleInfo)> {
    cfg.spec.validate(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("both samples need at least one row".into()));
    }
    if cfg.spec.standardize {
        standardize_covariates(a, b)
    } else {
        Ok((a.clone(), b.clone(), ScaleInfo::identity(a.dim())))
    }
}

/// Step 1: tuning and penalized selection.
pub fn select(
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    cfg: &PipelineConfig,
) -> Result<Selection> {
    let (a, b, scale) = prepare(a, b, cfg)?;
    let n = cfg.spec.population_size;
    let family = cfg.spec.outcome_family;
    let (grid_alpha, grid_beta, tuning) = match cfg.fixed_lambdas {
        Some((la, lb)) => {
            if !(la >= 0.0 && lb >= 0.0) {
                return Err(Error::InvalidInput("tuning parameters must be >= 0".into()));
            }
            (vec![la], vec![lb], None)
        }
        None => {
            let grid = LambdaGrid::from_data(&a, &b, &cfg.spec, cfg.grid_size, &cfg.solver)?;
            let plan = CvPlan::new(a.len(), b.len(), cfg.folds, cfg.seed)?;
            let tuned = select_lambdas(&a, &b, &cfg.spec, &grid, &plan, &cfg.solver)?;
            let upto = |values: &[f64], chosen: f64| -> Vec<f64> {
                let stop = values.iter().position(|&l| l == chosen).unwrap_or(values.len() - 1);
                values[..=stop].to_vec()
            };
            (
                upto(&grid.values_alpha, tuned.lambda_alpha),
                upto(&grid.values_beta, tuned.lambda_beta),
                Some(tuned),
            )
        }
    };
    // Warm-start along the grid so the final fit follows the same path as
    // the cross-validation fits.
    let fa = alpha_path(&a, &b, n, &grid_alpha, &cfg.solver, None)
        .pop()
        .expect("non-empty path")?;
    let fb = beta_path(&b, family, n, &grid_beta, &cfg.solver, None)
        .pop()
        .expect("non-empty path")?;
    let step1 = combine_fits(fa, fb);
    let support = SelectedSupport::union(&step1.support_alpha, &step1.support_beta);
    Ok(Selection {
        lambda_alpha: *grid_alpha.last().expect("non-empty path"),
        lambda_beta: *grid_beta.last().expect("non-empty path"),
        a,
        b,
        scale,
        tuning,
        step1,
        support,
    })
}

/// Step 2 on an existing selection.
pub fn estimate_from_selection(sel: &Selection, cfg: &PipelineConfig) -> Result<EstimateReport> {
    let n = cfg.spec.population_size;
    let family = cfg.spec.outcome_family;
    let dr = estimate_on_support(
        &sel.a,
        &sel.b,
        sel.support.clone(),
        family,
        n,
        &sel.step1,
        cfg.design,
        cfg.level,
        &cfg.joint,
    )?;
    let p_dr0 = if sel.step1.support_beta.len() + 1 == sel.support.len() {
        dr.mu_hat
    } else {
        mu_dr0(&sel.a, &sel.b, &sel.step1.support_beta, family, n, &sel.step1, &cfg.joint)?
    };
    let baselines = Baselines {
        naive: mu_naive(&sel.b),
        p_ipw: mu_ipw(&sel.step1.alpha, &sel.b, n),
        p_reg: mu_reg(&sel.step1.beta, &sel.a, family, n),
        p_dr0,
    };
    Ok(EstimateReport::new(sel, dr, baselines))
}

/// Both steps.
pub fn estimate(
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    cfg: &PipelineConfig,
) -> Result<(Selection, EstimateReport)> {
    let sel = select(a, b, cfg)?;
    let report = estimate_from_selection(&sel, cfg)?;
    Ok((sel, report))
}
