//! The two samples, the working models and covariate standardization.

use crate::error::{Error, Result};
use crate::numerics::{expit, DenseMatrix, DenseVector};

fn check_intercept(x: &DenseMatrix, what: &str) -> Result<()> {
    if x.cols() == 0 {
        return Err(Error::InvalidInput(format!("{what}: no covariate columns")));
    }
    if x.row_iter().any(|r| r[0] != 1.0) {
        return Err(Error::InvalidInput(format!(
            "{what}: first covariate column must be the intercept (all ones)"
        )));
    }
    Ok(())
}

/// Probability sample (Sample A): covariates with first-order inclusion
/// probabilities. Carries no outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilitySample {
    covariates: DenseMatrix,
    inclusion_probs: DenseVector,
}

impl ProbabilitySample {
    pub fn new(covariates: DenseMatrix, inclusion_probs: DenseVector) -> Result<Self> {
        check_intercept(&covariates, "sample A")?;
        if covariates.rows() != inclusion_probs.len() {
            return Err(Error::Dimension(format!(
                "sample A has {} rows but {} inclusion probabilities",
                covariates.rows(),
                inclusion_probs.len()
            )));
        }
        if let Some(i) = inclusion_probs
            .iter()
            .position(|&p| !(p > 0.0 && p <= 1.0))
        {
            return Err(Error::InvalidInput(format!(
                "sample A row {i}: inclusion probability {} outside (0, 1]",
                inclusion_probs[i]
            )));
        }
        Ok(Self {
            covariates,
            inclusion_probs,
        })
    }

    pub fn covariates(&self) -> &DenseMatrix {
        &self.covariates
    }

    pub fn inclusion_probs(&self) -> &DenseVector {
        &self.inclusion_probs
    }

    pub fn design_weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.inclusion_probs.iter().map(|p| 1.0 / p)
    }

    pub fn len(&self) -> usize {
        self.covariates.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.covariates.cols()
    }

    /// Second-phase subsample of the given rows. Inclusion probabilities are
    /// multiplied by `fraction`, the second-phase sampling rate, so design
    /// weights still expand to the full population.
    pub fn subsample(&self, rows: &[usize], fraction: f64) -> Self {
        Self {
            covariates: self.covariates.select_rows(rows),
            inclusion_probs: rows
                .iter()
                .map(|&i| self.inclusion_probs[i] * fraction)
                .collect(),
        }
    }
}

/// Non-probability sample (Sample B): covariates with observed outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct NonProbabilitySample {
    covariates: DenseMatrix,
    outcomes: DenseVector,
}

impl NonProbabilitySample {
    pub fn new(covariates: DenseMatrix, outcomes: DenseVector) -> Result<Self> {
        check_intercept(&covariates, "sample B")?;
        if covariates.rows() != outcomes.len() {
            return Err(Error::Dimension(format!(
                "sample B has {} rows but {} outcomes",
                covariates.rows(),
                outcomes.len()
            )));
        }
        if !outcomes.is_finite() {
            return Err(Error::NonFinite("sample B outcomes"));
        }
        Ok(Self {
            covariates,
            outcomes,
        })
    }

    pub fn covariates(&self) -> &DenseMatrix {
        &self.covariates
    }

    pub fn outcomes(&self) -> &DenseVector {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.covariates.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.covariates.cols()
    }

    /// Checks outcome values against the family: binary outcomes must be 0 or 1.
    pub fn check_family(&self, family: OutcomeFamily) -> Result<()> {
        if family == OutcomeFamily::BinaryLogit {
            if let Some(i) = self.outcomes.iter().position(|&y| y != 0.0 && y != 1.0) {
                return Err(Error::InvalidInput(format!(
                    "sample B row {i}: binary outcome must be 0 or 1, got {}",
                    self.outcomes[i]
                )));
            }
        }
        Ok(())
    }

    pub fn subsample(&self, rows: &[usize]) -> Self {
        Self {
            covariates: self.covariates.select_rows(rows),
            outcomes: rows.iter().map(|&i| self.outcomes[i]).collect(),
        }
    }

    pub fn mean_outcome(&self) -> f64 {
        if self.is_empty() {
            return f64::NAN;
        }
        self.outcomes.iter().sum::<f64>() / self.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeFamily {
    LinearIdentity,
    BinaryLogit,
}

impl OutcomeFamily {
    pub fn name(self) -> &'static str {
        match self {
            OutcomeFamily::LinearIdentity => "linear",
            OutcomeFamily::BinaryLogit => "logit",
        }
    }

    pub fn mean(self, t: f64) -> f64 {
        match self {
            OutcomeFamily::LinearIdentity => t,
            OutcomeFamily::BinaryLogit => expit(t),
        }
    }
}

/// Outcome family plus population size. The sampling-score link is always logit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub outcome_family: OutcomeFamily,
    pub population_size: f64,
    pub standardize: bool,
}

impl ModelSpec {
    pub fn new(outcome_family: OutcomeFamily, population_size: f64) -> Self {
        Self {
            outcome_family,
            population_size,
            standardize: true,
        }
    }

    pub fn validate(&self, a: &ProbabilitySample, b: &NonProbabilitySample) -> Result<()> {
        let n = self.population_size;
        if !(n.is_finite() && n >= 1.0) {
            return Err(Error::InvalidInput(format!("population size {n} must be >= 1")));
        }
        if n < a.len() as f64 || n < b.len() as f64 {
            return Err(Error::InvalidInput(format!(
                "population size {n} is smaller than a sample (n_A = {}, n_B = {})",
                a.len(),
                b.len()
            )));
        }
        if a.dim() != b.dim() {
            return Err(Error::Dimension(format!(
                "samples have {} and {} covariate columns",
                a.dim(),
                b.dim()
            )));
        }
        b.check_family(self.outcome_family)
    }
}

/// Mean function and its first two derivatives at one linear predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEval {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

pub fn eval_link(family: OutcomeFamily, t: f64) -> LinkEval {
    match family {
        OutcomeFamily::LinearIdentity => LinkEval {
            value: t,
            d1: 1.0,
            d2: 0.0,
        },
        OutcomeFamily::BinaryLogit => {
            let value = expit(t);
            let d1 = value * (1.0 - value);
            LinkEval {
                value,
                d1,
                d2: d1 * (1.0 - 2.0 * value),
            }
        }
    }
}

/// Column centers and scales from pooled standardization. Scales use the
/// population convention (divide by the pooled row count). Index 0 is the
/// intercept and keeps center 0, scale 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleInfo {
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
}

impl ScaleInfo {
    pub fn identity(p: usize) -> Self {
        Self {
            centers: vec![0.0; p],
            scales: vec![1.0; p],
        }
    }

    pub fn dim(&self) -> usize {
        self.centers.len()
    }

    /// Maps coefficients fitted on standardized covariates to the original
    /// covariate scale, preserving every linear predictor.
    pub fn to_original(&self, coef: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = coef
            .iter()
            .zip(&self.scales)
            .map(|(b, s)| b / s)
            .collect();
        let shift: f64 = (1..coef.len()).map(|j| out[j] * self.centers[j]).sum();
        out[0] = coef[0] - shift;
        out
    }

    /// Inverse of [`ScaleInfo::to_original`].
    pub fn to_standardized(&self, coef: &[f64]) -> Vec<f64> {
        let shift: f64 = (1..coef.len()).map(|j| coef[j] * self.centers[j]).sum();
        let mut out: Vec<f64> = coef
            .iter()
            .zip(&self.scales)
            .map(|(b, s)| b * s)
            .collect();
        out[0] = coef[0] + shift;
        out
    }

    pub fn apply(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut out = x.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for j in 1..row.len() {
                row[j] = (row[j] - self.centers[j]) / self.scales[j];
            }
        }
        out
    }
}

/// Centers and scales every non-intercept column to mean 0 and SD 1 over the
/// pooled rows of both samples, applying the same transform to each.
pub fn standardize_covariates(
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
) -> Result<(ProbabilitySample, NonProbabilitySample, ScaleInfo)> {
    let p = a.dim();
    if b.dim() != p {
        return Err(Error::Dimension(format!(
            "samples have {} and {} covariate columns",
            p,
            b.dim()
        )));
    }
    let n = (a.len() + b.len()) as f64;
    if n == 0.0 {
        return Err(Error::InvalidInput("both samples are empty".into()));
    }
    let mut info = ScaleInfo::identity(p);
    for j in 1..p {
        let pooled = || {
            a.covariates()
                .row_iter()
                .chain(b.covariates().row_iter())
                .map(move |r| r[j])
        };
        let mean = pooled().sum::<f64>() / n;
        let var = pooled().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        if !(sd > 1e-12) {
            return Err(Error::DegenerateColumn(j));
        }
        info.centers[j] = mean;
        info.scales[j] = sd;
    }
    let a2 = ProbabilitySample {
        covariates: info.apply(a.covariates()),
        inclusion_probs: a.inclusion_probs().clone(),
    };
    let b2 = NonProbabilitySample {
        covariates: info.apply(b.covariates()),
        outcomes: b.outcomes().clone(),
    };
    Ok((a2, b2, info))
}
