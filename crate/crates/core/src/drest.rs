//! Step 2: doubly robust estimation on the selected covariates.
//!
//! Both working models are re-fitted on `C = M̂_α ∪ M̂_β` by solving the
//! joint estimating equations that zero the gradient of the squared
//! asymptotic bias, then the doubly robust mean, the baselines and the
//! variance are formed.
//!
//! Variances are reported on the scale of `μ̂` itself: the common factor
//! `n` in the asymptotic variance cancels in the Wald interval, so
//! `se = sqrt(v1_hat + v2_hat)`.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{eval_link, NonProbabilitySample, OutcomeFamily, ProbabilitySample};
use crate::numerics::{dot, inverse_score, norm_inf, solve_linear, DenseMatrix, DenseVector};
use crate::pee::{ThetaEstimate, SCORE_FLOOR};

/// Where a selected index came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportSource {
    Intercept,
    AlphaOnly,
    BetaOnly,
    Both,
}

/// Covariates used for estimation. Always contains the intercept (index 0).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectedSupport {
    pub union_set: Vec<usize>,
    pub source: Vec<SupportSource>,
}

impl SelectedSupport {
    /// `{0} ∪ M̂_α ∪ M̂_β`, sorted.
    pub fn union(support_alpha: &[usize], support_beta: &[usize]) -> Self {
        let mut set: Vec<usize> = std::iter::once(0)
            .chain(support_alpha.iter().copied())
            .chain(support_beta.iter().copied())
            .collect();
        set.sort_unstable();
        set.dedup();
        let source = set
            .iter()
            .map(|j| match (*j == 0, support_alpha.contains(j), support_beta.contains(j)) {
                (true, _, _) => SupportSource::Intercept,
                (_, true, true) => SupportSource::Both,
                (_, true, false) => SupportSource::AlphaOnly,
                _ => SupportSource::BetaOnly,
            })
            .collect();
        Self { union_set: set, source }
    }

    pub fn len(&self) -> usize {
        self.union_set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.union_set.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.union_set.binary_search(&j).is_ok()
    }
}

/// The joint system restricted to one support, with the data pre-sliced.
struct JointSystem {
    xa: DenseMatrix,
    da: Vec<f64>,
    xb: DenseMatrix,
    y: Vec<f64>,
    family: OutcomeFamily,
    n: f64,
}

impl JointSystem {
    fn new(
        a: &ProbabilitySample,
        b: &NonProbabilitySample,
        support: &[usize],
        family: OutcomeFamily,
        n: f64,
    ) -> Result<Self> {
        if support.is_empty() || support.iter().any(|&j| j >= a.dim()) || a.dim() != b.dim() {
            return Err(Error::Dimension("support does not fit the covariates".into()));
        }
        Ok(Self {
            xa: a.covariates().select_cols(support),
            da: a.design_weights().collect(),
            xb: b.covariates().select_cols(support),
            y: b.outcomes().to_vec(),
            family,
            n,
        })
    }

    fn eval(&self, alpha: &[f64], beta: &[f64]) -> Vec<f64> {
        let c = alpha.len();
        let mut out = vec![0.0; 2 * c];
        for (x, y) in self.xb.row_iter().zip(&self.y) {
            let inv = inverse_score(dot(x, alpha), SCORE_FLOOR).0;
            let l = eval_link(self.family, dot(x, beta));
            let w1 = (inv - 1.0) * (y - l.value);
            let w2 = inv * l.d1;
            for k in 0..c {
                out[k] += w1 * x[k];
                out[c + k] += w2 * x[k];
            }
        }
        for (x, d) in self.xa.row_iter().zip(&self.da) {
            let w = d * eval_link(self.family, dot(x, beta)).d1;
            for k in 0..c {
                out[c + k] -= w * x[k];
            }
        }
        out.iter_mut().for_each(|v| *v /= self.n);
        out
    }

    fn eval_stacked(&self, z: &[f64]) -> Vec<f64> {
        let (a, b) = z.split_at(z.len() / 2);
        self.eval(a, b)
    }
}

/// Stacked `(J1; J2)` for coefficients restricted to `support`:
///
/// `J1 = N⁻¹ Σ_B {1/π_B − 1}{Y − m} X_C`,
/// `J2 = N⁻¹ [Σ_B m'(Xᵀβ) X_C / π_B − Σ_A d_A m'(Xᵀβ) X_C]`.
pub fn joint_ee(
    alpha_c: &[f64],
    beta_c: &[f64],
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    support: &[usize],
    family: OutcomeFamily,
    n: f64,
) -> Result<DenseVector> {
    if alpha_c.len() != support.len() || beta_c.len() != support.len() {
        return Err(Error::Dimension("coefficients must match the support".into()));
    }
    Ok(JointSystem::new(a, b, support, family, n)?
        .eval(alpha_c, beta_c)
        .into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointControls {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub fd_step: f64,
    pub max_halvings: usize,
}

impl Default for JointControls {
    fn default() -> Self {
        Self {
            max_iter: 100,
            rel_tol: 1e-8,
            fd_step: 1e-6,
            max_halvings: 30,
        }
    }
}

fn fd_jacobian(sys: &JointSystem, z: &[f64], h: f64) -> DenseMatrix {
    let m = z.len();
    let mut jac = DenseMatrix::zeros(m, m);
    let mut zp = z.to_vec();
    for k in 0..m {
        zp[k] = z[k] + h;
        let fp = sys.eval_stacked(&zp);
        zp[k] = z[k] - h;
        let fm = sys.eval_stacked(&zp);
        zp[k] = z[k];
        for r in 0..m {
            jac[(r, k)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    jac
}

/// Levenberg-damped direction `(JᵀJ + μI) d = −Jᵀf`.
fn damped_direction(jac: &DenseMatrix, f: &[f64], mu: f64) -> Result<DenseVector> {
    let m = f.len();
    let mut jtj = DenseMatrix::zeros(m, m);
    let mut rhs = vec![0.0; m];
    for r in 0..m {
        for c in 0..m {
            jtj[(r, c)] = (0..m).map(|i| jac[(i, r)] * jac[(i, c)]).sum();
        }
        jtj[(r, r)] += mu;
        rhs[r] = -(0..m).map(|i| jac[(i, r)] * f[i]).sum::<f64>();
    }
    solve_linear(&jtj, &rhs)
}

/// Solves the joint equations on `support` starting from `init` restricted
/// to it. Damped Newton with step halving on `‖J‖∞` and a central
/// finite-difference Jacobian; a singular Jacobian falls back to Levenberg
/// damping `μ ∈ {1e-4, 1e-3, …, 1e2}`.
///
/// Returns full-length coefficients (zero off the support).
pub fn solve_joint(
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    support: &SelectedSupport,
    family: OutcomeFamily,
    n: f64,
    init: &ThetaEstimate,
    controls: &JointControls,
) -> Result<ThetaEstimate> {
    let set = &support.union_set;
    let sys = JointSystem::new(a, b, set, family, n)?;
    let c = set.len();
    let mut z: Vec<f64> = set
        .iter()
        .map(|&j| init.alpha[j])
        .chain(set.iter().map(|&j| init.beta[j]))
        .collect();
    let mut f = sys.eval_stacked(&z);
    let mut fnorm = norm_inf(&f);
    if !fnorm.is_finite() {
        return Err(Error::NonFinite("joint estimating equations at the start"));
    }
    let tol = controls.rel_tol * (1.0 + fnorm);
    let mut iterations = 0;
    while fnorm > tol {
        if iterations == controls.max_iter {
            return Err(Error::MaxIterationsExceeded(iterations));
        }
        iterations += 1;
        let jac = fd_jacobian(&sys, &z, controls.fd_step);
        let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let mut directions = Vec::new();
        if let Ok(d) = solve_linear(&jac, &neg_f) {
            directions.push(d);
        }
        let mut mu = 1e-4;
        while mu <= 1e2 * (1.0 + 1e-9) {
            if let Ok(d) = damped_direction(&jac, &f, mu) {
                directions.push(d);
            }
            mu *= 10.0;
        }
        if directions.is_empty() {
            return Err(Error::SingularJacobian);
        }
        let mut accepted = false;
        'dirs: for d in &directions {
            let mut t = 1.0;
            for _ in 0..=controls.max_halvings {
                let trial: Vec<f64> = z.iter().zip(d.iter()).map(|(x, dx)| x + t * dx).collect();
                let ft = sys.eval_stacked(&trial);
                let nt = norm_inf(&ft);
                if nt.is_finite() && nt < fnorm {
                    z = trial;
                    f = ft;
                    fnorm = nt;
                    accepted = true;
                    break 'dirs;
                }
                t *= 0.5;
            }
        }
        if !accepted {
            return Err(Error::SingularJacobian);
        }
    }
    let p = a.dim();
    let mut alpha = DenseVector::zeros(p);
    let mut beta = DenseVector::zeros(p);
    for (k, &j) in set.iter().enumerate() {
        alpha[j] = z[k];
        beta[j] = z[c + k];
    }
    let support_nonzero: Vec<usize> = set.iter().copied().filter(|&j| j > 0).collect();
    Ok(ThetaEstimate {
        alpha,
        beta,
        support_alpha: support_nonzero.clone(),
        support_beta: support_nonzero,
        iterations,
        converged: true,
        final_update_norm: fnorm,
        clip_events: sys
            .xb
            .row_iter()
            .filter(|x| inverse_score(dot(x, &z[..c]), SCORE_FLOOR).1)
            .count(),
    })
}

/// `N⁻¹ [Σ_B {Y − m(Xᵀβ̂)}/π_B(Xᵀα̂) + Σ_A d_A m(Xᵀβ̂)]`.
pub fn mu_pee(
    alpha: &[f64],
    beta: &[f64],
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    family: OutcomeFamily,
    n: f64,
) -> f64 {
    let b_part: f64 = b
        .covariates()
        .row_iter()
        .zip(b.outcomes().iter())
        .map(|(x, y)| (y - family.mean(dot(x, beta))) * inverse_score(dot(x, alpha), SCORE_FLOOR).0)
        .sum();
    (b_part + a_part(beta, a, family)) / n
}

fn a_part(beta: &[f64], a: &ProbabilitySample, family: OutcomeFamily) -> f64 {
    a.covariates()
        .row_iter()
        .zip(a.design_weights())
        .map(|(x, d)| d * family.mean(dot(x, beta)))
        .sum()
}

/// Mean of the Sample B outcomes.
pub fn mu_naive(b: &NonProbabilitySample) -> f64 {
    b.mean_outcome()
}

/// `N⁻¹ Σ_B Y / π_B(Xᵀα̂)`.
pub fn mu_ipw(alpha: &[f64], b: &NonProbabilitySample, n: f64) -> f64 {
    b.covariates()
        .row_iter()
        .zip(b.outcomes().iter())
        .map(|(x, y)| y * inverse_score(dot(x, alpha), SCORE_FLOOR).0)
        .sum::<f64>()
        / n
}

/// `N⁻¹ Σ_A d_A m(Xᵀβ̂)`.
pub fn mu_reg(beta: &[f64], a: &ProbabilitySample, family: OutcomeFamily, n: f64) -> f64 {
    a_part(beta, a, family) / n
}

/// Design of the probability sample, needed for second-order inclusion
/// probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Design {
    /// Independent inclusions, `π_ij = π_i π_j`.
    PoissonA,
    /// Simple random sampling without replacement, `π_ij = n(n−1)/(N(N−1))`.
    SrsA,
}

impl Design {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poisson" => Ok(Design::PoissonA),
            "srs" => Ok(Design::SrsA),
            other => Err(Error::UnsupportedDesign(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Design::PoissonA => "poisson",
            Design::SrsA => "srs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub v1_hat: f64,
    pub v2_hat: f64,
    /// Set when `v1_hat + v2_hat < 0`; the raw values are kept.
    pub negative: bool,
}

impl VarianceEstimate {
    pub fn se(&self) -> f64 {
        (self.v1_hat + self.v2_hat).max(0.0).sqrt()
    }
}

/// Design-based `V̂1` of the Horvitz–Thompson total of `m(Xᵀβ̂)` over A, and
/// `V̂2 = N⁻² [Σ_B (1/π_B² − 2/π_B){Y − m}² + Σ_A d_A σ̂²(X)]`.
///
/// `σ̂²` is the mean squared Sample B residual for the identity link and
/// `m(1 − m)` for the logit link.
pub fn variance_hat(
    alpha: &[f64],
    beta: &[f64],
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    family: OutcomeFamily,
    n: f64,
    design: Design,
) -> Result<VarianceEstimate> {
    let m_a: Vec<f64> = a
        .covariates()
        .row_iter()
        .map(|x| family.mean(dot(x, beta)))
        .collect();
    let pis = a.inclusion_probs();
    let n2 = n * n;
    let v1 = match design {
        Design::PoissonA => {
            m_a.iter()
                .zip(pis.iter())
                .map(|(m, p)| (1.0 - p) * m * m / (p * p))
                .sum::<f64>()
                / n2
        }
        Design::SrsA => {
            let na = a.len() as f64;
            if na < 2.0 {
                return Err(Error::InvalidInput("SRS variance needs at least two A units".into()));
            }
            let pi = na / n;
            if pis.iter().any(|p| (p - pi).abs() > 1e-9 * pi) {
                return Err(Error::InvalidInput(
                    "SRS design requires every inclusion probability to equal n_A/N".into(),
                ));
            }
            let pij = na * (na - 1.0) / (n * (n - 1.0));
            let s1: f64 = m_a.iter().sum();
            let s2: f64 = m_a.iter().map(|m| m * m).sum();
            let diag = (1.0 - pi) / (pi * pi) * s2;
            let off = (pij - pi * pi) / (pij * pi * pi) * (s1 * s1 - s2);
            (diag + off) / n2
        }
    };

    let mut resid_ss = 0.0;
    let mut b_term = 0.0;
    for (x, y) in b.covariates().row_iter().zip(b.outcomes().iter()) {
        let e2 = (y - family.mean(dot(x, beta))).powi(2);
        let inv = inverse_score(dot(x, alpha), SCORE_FLOOR).0;
        b_term += (inv * inv - 2.0 * inv) * e2;
        resid_ss += e2;
    }
    let a_term: f64 = match family {
        OutcomeFamily::LinearIdentity => {
            let sigma2 = if b.is_empty() { 0.0 } else { resid_ss / b.len() as f64 };
            a.design_weights().map(|d| d * sigma2).sum()
        }
        OutcomeFamily::BinaryLogit => a
            .design_weights()
            .zip(&m_a)
            .map(|(d, m)| d * m * (1.0 - m))
            .sum(),
    };
    let v2 = (b_term + a_term) / n2;
    Ok(VarianceEstimate {
        v1_hat: v1,
        v2_hat: v2,
        negative: v1 + v2 < 0.0,
    })
}

/// Two-sided normal quantile for the given coverage level.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

/// `μ̂ ± z se`.
pub fn wald_ci(mu_hat: f64, se: f64, level: f64) -> (f64, f64) {
    let z = normal_quantile(level);
    (mu_hat - z * se, mu_hat + z * se)
}

/// Point estimate, variance and interval from one fitted support.
#[derive(Debug, Clone, PartialEq)]
pub struct DrEstimate {
    pub support: SelectedSupport,
    pub theta: ThetaEstimate,
    pub mu_hat: f64,
    pub variance: VarianceEstimate,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Solve the joint equations on `support`, then form the estimate,
/// variance and Wald interval.
#[allow(clippy::too_many_arguments)]
pub fn estimate_on_support(
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    support: SelectedSupport,
    family: OutcomeFamily,
    n: f64,
    init: &ThetaEstimate,
    design: Design,
    level: f64,
    controls: &JointControls,
) -> Result<DrEstimate> {
    let theta = solve_joint(a, b, &support, family, n, init, controls)?;
    let mu_hat = mu_pee(&theta.alpha, &theta.beta, a, b, family, n);
    let variance = variance_hat(&theta.alpha, &theta.beta, a, b, family, n, design)?;
    let se = variance.se();
    let (ci_low, ci_high) = wald_ci(mu_hat, se, level);
    Ok(DrEstimate {
        support,
        theta,
        mu_hat,
        variance,
        se,
        ci_low,
        ci_high,
    })
}

/// The `p-dr0` variant: the same Step 2 restricted to the outcome predictors.
#[allow(clippy::too_many_arguments)]
pub fn mu_dr0(
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    support_beta_only: &[usize],
    family: OutcomeFamily,
    n: f64,
    init: &ThetaEstimate,
    controls: &JointControls,
) -> Result<f64> {
    let support = SelectedSupport::union(&[], support_beta_only);
    let theta = solve_joint(a, b, &support, family, n, init, controls)?;
    Ok(mu_pee(&theta.alpha, &theta.beta, a, b, family, n))
}
