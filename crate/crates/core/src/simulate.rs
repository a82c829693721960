//! Monte Carlo harness: finite populations, Bernoulli Sample B, Poisson
//! Sample A, and selection and estimation metrics over replications.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, NonProbabilitySample, OutcomeFamily, ProbabilitySample};
use crate::numerics::{expit, DenseMatrix};
use crate::pipeline::{estimate, PipelineConfig};

/// Index set of the true outcome predictors in every scenario.
pub const BETA_SUPPORT: [usize; 4] = [3, 4, 5, 6];
const PSM2_LOGIT_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeModel {
    I,
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionModel {
    I,
    II,
}

impl SelectionModel {
    pub fn true_support(self) -> [usize; 4] {
        match self {
            SelectionModel::I => [1, 2, 3, 4],
            SelectionModel::II => [3, 4, 5, 6],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub family: OutcomeFamily,
    pub om: OutcomeModel,
    pub psm: SelectionModel,
    pub population_size: usize,
    pub p: usize,
    pub target_n_a: f64,
    pub runs: usize,
    pub seed: u64,
    pub folds: usize,
    pub grid_size: usize,
    /// Bypass cross-validation with fixed `(λ_α, λ_β)`.
    pub fixed_lambdas: Option<(f64, f64)>,
}

impl ScenarioConfig {
    pub fn new(family: OutcomeFamily, om: OutcomeModel, psm: SelectionModel) -> Self {
        Self {
            family,
            om,
            psm,
            population_size: 10_000,
            p: 50,
            target_n_a: 500.0,
            runs: 500,
            seed: 2024,
            folds: crate::tuning::DEFAULT_FOLDS,
            grid_size: crate::tuning::DEFAULT_GRID_SIZE,
            fixed_lambdas: None,
        }
    }

    /// Parses codes of the form `om1xpsm2`.
    pub fn parse_code(code: &str) -> Result<(OutcomeModel, SelectionModel)> {
        let lower = code.to_ascii_lowercase();
        let (om, psm) = lower
            .split_once('x')
            .ok_or_else(|| Error::InvalidInput(format!("unknown scenario {code:?}")))?;
        let om = match om {
            "om1" => OutcomeModel::I,
            "om2" => OutcomeModel::II,
            _ => return Err(Error::InvalidInput(format!("unknown outcome model in {code:?}"))),
        };
        let psm = match psm {
            "psm1" => SelectionModel::I,
            "psm2" => SelectionModel::II,
            _ => return Err(Error::InvalidInput(format!("unknown selection model in {code:?}"))),
        };
        Ok((om, psm))
    }

    pub fn code(&self) -> String {
        let om = match self.om {
            OutcomeModel::I => "om1",
            OutcomeModel::II => "om2",
        };
        let psm = match self.psm {
            SelectionModel::I => "psm1",
            SelectionModel::II => "psm2",
        };
        format!("{om}x{psm}")
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 7 {
            return Err(Error::InvalidInput(format!("p = {} must be at least 7", self.p)));
        }
        if self.population_size < 2 {
            return Err(Error::InvalidInput("population size must be at least 2".into()));
        }
        if !(self.target_n_a > 0.0 && self.target_n_a <= self.population_size as f64) {
            return Err(Error::InvalidInput("target n_A must lie in (0, N]".into()));
        }
        if self.runs == 0 {
            return Err(Error::InvalidInput("runs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FinitePopulation {
    /// `N × p`, intercept first.
    pub x: DenseMatrix,
    pub y: Vec<f64>,
}

impl FinitePopulation {
    pub fn mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

fn coef_beta(family: OutcomeFamily) -> f64 {
    match family {
        OutcomeFamily::LinearIdentity => 1.0,
        OutcomeFamily::BinaryLogit => 3.0,
    }
}

/// `β₀ᵀx` with `β₀ = (1, 0, 0, c, c, c, c, 0, …)`.
fn beta0_dot(x: &[f64], family: OutcomeFamily) -> f64 {
    x[0] + coef_beta(family) * BETA_SUPPORT.iter().map(|&j| x[j]).sum::<f64>()
}

/// Noise-free part of the outcome: the mean for the linear family and the
/// logit of `P(Y = 1)` for the binary one.
pub fn outcome_signal(x: &[f64], family: OutcomeFamily, om: OutcomeModel) -> f64 {
    let t = beta0_dot(x, family);
    match (family, om) {
        (_, OutcomeModel::I) => t,
        (OutcomeFamily::LinearIdentity, OutcomeModel::II) => 1.0 + (3.0 * t.sin()).exp() + x[5] + x[6],
        (OutcomeFamily::BinaryLogit, OutcomeModel::II) => {
            2.0 - (t * t).max(1e-12).ln() + 2.0 * x[5] + 2.0 * x[6]
        }
    }
}

/// Logit of the Sample B inclusion probability.
pub fn selection_logit(x: &[f64], psm: SelectionModel) -> f64 {
    match psm {
        SelectionModel::I => -2.0 + x[1] + x[2] + x[3] + x[4],
        SelectionModel::II => {
            let s: f64 = [3, 4, 5, 6].iter().map(|&j| (x[j] * x[j]).ln()).sum();
            (3.5 + 3.0 * s - (x[3] + x[4]).sin() - x[5] - x[6])
                .clamp(-PSM2_LOGIT_CLAMP, PSM2_LOGIT_CLAMP)
        }
    }
}

pub fn gen_population<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> FinitePopulation {
    let (n, p) = (cfg.population_size, cfg.p);
    let mut data = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = data.len();
        data.push(1.0);
        data.extend((1..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let s = outcome_signal(&data[start..], cfg.family, cfg.om);
        y.push(match cfg.family {
            OutcomeFamily::LinearIdentity => s + rng.sample::<f64, _>(StandardNormal),
            OutcomeFamily::BinaryLogit => f64::from(u8::from(rng.random::<f64>() < expit(s))),
        });
    }
    FinitePopulation {
        x: DenseMatrix::new(n, p, data).expect("generated values are finite"),
        y,
    }
}

/// Independent Bernoulli draws; returns the sample and the true α-support.
pub fn draw_sample_b<R: Rng + ?Sized>(
    pop: &FinitePopulation,
    psm: SelectionModel,
    rng: &mut R,
) -> Result<(NonProbabilitySample, [usize; 4])> {
    let rows: Vec<usize> = pop
        .x
        .row_iter()
        .enumerate()
        .filter(|(_, x)| rng.random::<f64>() < expit(selection_logit(x, psm)))
        .map(|(i, _)| i)
        .collect();
    if rows.is_empty() {
        return Err(Error::InvalidInput("Sample B is empty".into()));
    }
    let y: Vec<f64> = rows.iter().map(|&i| pop.y[i]).collect();
    let b = NonProbabilitySample::new(pop.x.select_rows(&rows), y.into())?;
    Ok((b, psm.true_support()))
}

/// Poisson sampling with `π ∝ 0.25 + |X₁| + 0.03|Y|` scaled to sum to
/// `target_n_a`, then capped at 1. Returns the sample and the cap count.
pub fn draw_sample_a<R: Rng + ?Sized>(
    pop: &FinitePopulation,
    target_n_a: f64,
    rng: &mut R,
) -> Result<(ProbabilitySample, usize)> {
    let (probs, clamped) = sample_a_probabilities(pop, target_n_a);
    let mut rows = Vec::new();
    let mut pis = Vec::new();
    for (i, &pi) in probs.iter().enumerate() {
        if rng.random::<f64>() < pi {
            rows.push(i);
            pis.push(pi);
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("Sample A is empty".into()));
    }
    Ok((ProbabilitySample::new(pop.x.select_rows(&rows), pis.into())?, clamped))
}

pub fn sample_a_probabilities(pop: &FinitePopulation, target_n_a: f64) -> (Vec<f64>, usize) {
    let size: Vec<f64> = pop
        .x
        .row_iter()
        .zip(&pop.y)
        .map(|(x, y)| 0.25 + x[1].abs() + 0.03 * y.abs())
        .collect();
    let c = target_n_a / size.iter().sum::<f64>();
    let mut clamped = 0;
    let probs = size
        .iter()
        .map(|s| {
            let pi = c * s;
            if pi > 1.0 {
                clamped += 1;
                1.0
            } else {
                pi
            }
        })
        .collect();
    (probs, clamped)
}

/// Independent stream for replication `run` of the master seed.
pub fn run_rng(master: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(run as u64);
    rng
}

pub const ESTIMATORS: [&str; 5] = ["naive", "p-ipw", "p-reg", "p-dr0", "p-dr"];

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRecord {
    pub estimator: &'static str,
    pub estimate: f64,
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub mu: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub support_alpha: Vec<usize>,
    pub support_beta: Vec<usize>,
    pub estimates: Vec<EstimatorRecord>,
}

impl RunRecord {
    pub fn covered(&self, estimator: &str) -> Option<bool> {
        self.estimates
            .iter()
            .find(|e| e.estimator == estimator)
            .and_then(|e| e.ci)
            .map(|(lo, hi)| lo <= self.mu && self.mu <= hi)
    }
}

pub fn run_once(cfg: &ScenarioConfig, run: usize) -> Result<RunRecord> {
    let mut rng = run_rng(cfg.seed, run);
    let pop = gen_population(cfg, &mut rng);
    let (b, _) = draw_sample_b(&pop, cfg.psm, &mut rng)?;
    let (a, _) = draw_sample_a(&pop, cfg.target_n_a, &mut rng)?;
    let pcfg = PipelineConfig {
        folds: cfg.folds,
        grid_size: cfg.grid_size,
        seed: rng.next_u64(),
        fixed_lambdas: cfg.fixed_lambdas,
        ..PipelineConfig::new(ModelSpec::new(cfg.family, cfg.population_size as f64))
    };
    let (sel, rep) = estimate(&a, &b, &pcfg)?;
    let plain = |estimator, estimate| EstimatorRecord { estimator, estimate, ci: None };
    Ok(RunRecord {
        run,
        mu: pop.mean(),
        n_a: a.len(),
        n_b: b.len(),
        support_alpha: sel.step1.support_alpha,
        support_beta: sel.step1.support_beta,
        estimates: vec![
            plain("naive", rep.baselines.naive),
            plain("p-ipw", rep.baselines.p_ipw),
            plain("p-reg", rep.baselines.p_reg),
            plain("p-dr0", rep.baselines.p_dr0),
            EstimatorRecord {
                estimator: "p-dr",
                estimate: rep.mu_hat,
                ci: Some((rep.ci_low, rep.ci_high)),
            },
        ],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SelectionMetrics {
    pub under_pct: f64,
    pub over_pct: f64,
    pub fn_avg: f64,
    pub fp_avg: f64,
}

impl SelectionMetrics {
    pub fn from_supports<'a>(supports: impl Iterator<Item = &'a [usize]>, truth: &[usize]) -> Self {
        let mut m = SelectionMetrics::default();
        let mut runs = 0usize;
        for s in supports {
            runs += 1;
            let missed = truth.iter().filter(|j| !s.contains(j)).count();
            let extra = s.iter().filter(|j| !truth.contains(j)).count();
            m.under_pct += f64::from(u8::from(missed > 0));
            m.over_pct += f64::from(u8::from(extra > 0));
            m.fn_avg += missed as f64;
            m.fp_avg += extra as f64;
        }
        if runs > 0 {
            let r = runs as f64;
            m.under_pct *= 100.0 / r;
            m.over_pct *= 100.0 / r;
            m.fn_avg /= r;
            m.fp_avg /= r;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorMetrics {
    pub estimator: &'static str,
    pub bias: f64,
    pub sd: f64,
    /// Monte Carlo standard error of `bias`.
    pub bias_mcse: f64,
    pub coverage_pct: Option<f64>,
    /// `100·sqrt(ĉ(1 − ĉ)/runs)`.
    pub coverage_mcse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McMetrics {
    pub scenario: String,
    pub family: OutcomeFamily,
    pub runs: usize,
    pub failures: usize,
    pub alpha: SelectionMetrics,
    pub beta: SelectionMetrics,
    pub estimators: Vec<EstimatorMetrics>,
}

impl McMetrics {
    /// Aggregates must rest on fewer than 1% failed runs.
    pub fn is_valid(&self) -> bool {
        (self.failures as f64) < 0.01 * (self.runs + self.failures) as f64
    }

    pub fn estimator(&self, name: &str) -> Option<&EstimatorMetrics> {
        self.estimators.iter().find(|e| e.estimator == name)
    }
}

pub fn aggregate(cfg: &ScenarioConfig, records: &[RunRecord], failures: usize) -> McMetrics {
    let alpha = SelectionMetrics::from_supports(
        records.iter().map(|r| r.support_alpha.as_slice()),
        &cfg.psm.true_support(),
    );
    let beta = SelectionMetrics::from_supports(
        records.iter().map(|r| r.support_beta.as_slice()),
        &BETA_SUPPORT,
    );
    let r = records.len() as f64;
    let estimators = ESTIMATORS
        .iter()
        .map(|&name| {
            let errs: Vec<f64> = records
                .iter()
                .filter_map(|rec| {
                    rec.estimates
                        .iter()
                        .find(|e| e.estimator == name)
                        .map(|e| e.estimate - rec.mu)
                })
                .collect();
            let bias = errs.iter().sum::<f64>() / r;
            let sd = if errs.len() > 1 {
                (errs.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / (r - 1.0)).sqrt()
            } else {
                0.0
            };
            let covered: Vec<bool> = records.iter().filter_map(|rec| rec.covered(name)).collect();
            let (coverage_pct, coverage_mcse) = if covered.is_empty() {
                (None, None)
            } else {
                let c = covered.iter().filter(|&&v| v).count() as f64 / covered.len() as f64;
                (
                    Some(100.0 * c),
                    Some(100.0 * (c * (1.0 - c) / covered.len() as f64).sqrt()),
                )
            };
            EstimatorMetrics {
                estimator: name,
                bias,
                sd,
                bias_mcse: sd / r.sqrt(),
                coverage_pct,
                coverage_mcse,
            }
        })
        .collect();
    McMetrics {
        scenario: cfg.code(),
        family: cfg.family,
        runs: records.len(),
        failures,
        alpha,
        beta,
        estimators,
    }
}

#[derive(Debug, Clone)]
pub struct McResult {
    pub metrics: McMetrics,
    pub records: Vec<RunRecord>,
    pub failed_runs: Vec<(usize, String)>,
}

/// Runs every replication on the current rayon pool; records come back in
/// run order whatever the thread count.
pub fn run_mc(cfg: &ScenarioConfig) -> Result<McResult> {
    cfg.validate()?;
    let outcomes: Vec<Result<RunRecord>> =
        (0..cfg.runs).into_par_iter().map(|run| run_once(cfg, run)).collect();
    let mut records = Vec::with_capacity(cfg.runs);
    let mut failed_runs = Vec::new();
    for (run, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(r) => records.push(r),
            Err(e) => failed_runs.push((run, e.to_string())),
        }
    }
    if records.is_empty() {
        return Err(Error::AllFitsFailed);
    }
    let metrics = aggregate(cfg, &records, failed_runs.len());
    Ok(McResult {
        metrics,
        records,
        failed_runs,
    })
}

/// [`run_mc`] on a dedicated pool of `threads` workers.
pub fn run_mc_with_threads(cfg: &ScenarioConfig, threads: usize) -> Result<McResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| run_mc(cfg))
}
