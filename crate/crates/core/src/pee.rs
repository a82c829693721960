//! Step 1: penalized estimating equations for the sampling score (`U1`) and
//! the outcome regression (`U2`), solved by coordinate-wise Newton updates on
//! the MM surrogate of the SCAD penalty.
//!
//! The system is block diagonal, so the sampling-score block and the outcome
//! block are solved independently. All estimating functions carry the `1/N`
//! factor; `λ` is on the same scale.

use crate::error::{Error, Result};
use crate::model::{eval_link, NonProbabilitySample, OutcomeFamily, ModelSpec, ProbabilitySample};
use crate::numerics::{dot, inverse_score, logit, norm_inf, DenseMatrix, DenseVector};
use crate::penalty::{
    scad_derivative, scad_penalty, ScadParams, DEFAULT_MM_EPSILON, DEFAULT_SCAD_A,
};

/// Sampling scores below this value are raised to it before inversion.
pub const SCORE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverControls {
    pub scad_a: f64,
    pub epsilon: f64,
    /// Stop when the largest coordinate change over a full cycle is below this.
    pub tol: f64,
    pub max_cycles: usize,
    /// Coefficients at or below this magnitude are reported as exactly zero.
    pub zero_tol: f64,
    pub penalize_intercept: bool,
    /// Largest single coordinate move per update.
    pub max_step: f64,
    pub divergence_limit: f64,
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            scad_a: DEFAULT_SCAD_A,
            epsilon: DEFAULT_MM_EPSILON,
            tol: 1e-8,
            max_cycles: 500,
            zero_tol: 1e-4,
            penalize_intercept: false,
            max_step: 2.0,
            divergence_limit: 1e6,
        }
    }
}

/// Stacked Step-1 solution with supports and solver diagnostics.
///
/// Supports list non-intercept indices only (index 0 is the intercept).
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEstimate {
    pub alpha: DenseVector,
    pub beta: DenseVector,
    pub support_alpha: Vec<usize>,
    pub support_beta: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub final_update_norm: f64,
    pub clip_events: usize,
}

impl ThetaEstimate {
    pub fn from_coefficients(alpha: DenseVector, beta: DenseVector, zero_tol: f64) -> Self {
        Self {
            support_alpha: support_of(&alpha, zero_tol),
            support_beta: support_of(&beta, zero_tol),
            alpha,
            beta,
            iterations: 0,
            converged: true,
            final_update_norm: 0.0,
            clip_events: 0,
        }
    }

    pub fn theta(&self) -> Vec<f64> {
        self.alpha.iter().chain(self.beta.iter()).copied().collect()
    }
}

/// Non-intercept indices with `|v_j| > zero_tol`.
pub fn support_of(v: &[f64], zero_tol: f64) -> Vec<usize> {
    (1..v.len()).filter(|&j| v[j].abs() > zero_tol).collect()
}

/// `U1(α) = N⁻¹ [Σ_B X / π_B(Xᵀα) − Σ_A X / π_A]`, with the number of
/// clipped sampling scores.
pub fn u1_with_clips(
    alpha: &[f64],
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    n: f64,
) -> (DenseVector, usize) {
    assert_eq!(alpha.len(), b.dim(), "u1: coefficient length mismatch");
    let mut out = vec![0.0; alpha.len()];
    let mut clips = 0;
    for x in b.covariates().row_iter() {
        let (inv, clipped) = inverse_score(dot(x, alpha), SCORE_FLOOR);
        clips += usize::from(clipped);
        for (o, v) in out.iter_mut().zip(x) {
            *o += inv * v;
        }
    }
    for (x, pi) in a.covariates().row_iter().zip(a.inclusion_probs().iter()) {
        for (o, v) in out.iter_mut().zip(x) {
            *o -= v / pi;
        }
    }
    (out.into_iter().map(|v| v / n).collect(), clips)
}

pub fn u1(alpha: &[f64], a: &ProbabilitySample, b: &NonProbabilitySample, n: f64) -> DenseVector {
    u1_with_clips(alpha, a, b, n).0
}

/// `U2(β) = N⁻¹ Σ_B {Y − m(Xᵀβ)} X`.
pub fn u2(beta: &[f64], b: &NonProbabilitySample, family: OutcomeFamily, n: f64) -> DenseVector {
    assert_eq!(beta.len(), b.dim(), "u2: coefficient length mismatch");
    let mut out = vec![0.0; beta.len()];
    for (x, y) in b.covariates().row_iter().zip(b.outcomes().iter()) {
        let r = y - family.mean(dot(x, beta));
        for (o, v) in out.iter_mut().zip(x) {
            *o += r * v;
        }
    }
    out.into_iter().map(|v| v / n).collect()
}

/// Block-diagonal `∂U/∂θᵀ` for `θ = (α, β)`, with the blocks
/// `−N⁻¹ Σ_B (1 − π_B)/π_B XXᵀ` and `−N⁻¹ Σ_B m'(Xᵀβ)² XXᵀ`.
///
/// The outcome block uses the squared first derivative of the mean function.
/// For the identity link this is the exact derivative of `U2`; for the logit
/// link it differs from it (the exact block has `m'` unsquared).
pub fn jacobian_u(
    theta: &[f64],
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    family: OutcomeFamily,
    n: f64,
) -> Result<DenseMatrix> {
    let p = a.dim();
    if theta.len() != 2 * p || b.dim() != p {
        return Err(Error::Dimension(format!(
            "theta has length {} but the samples have {p} covariates",
            theta.len()
        )));
    }
    let (alpha, beta) = theta.split_at(p);
    let mut jac = DenseMatrix::zeros(2 * p, 2 * p);
    for x in b.covariates().row_iter() {
        // (1 − π)/π = e^{−t}
        let wa = (-dot(x, alpha)).exp();
        let wb = eval_link(family, dot(x, beta)).d1.powi(2);
        for r in 0..p {
            for c in 0..p {
                let xx = x[r] * x[c];
                jac[(r, c)] -= wa * xx;
                jac[(p + r, p + c)] -= wb * xx;
            }
        }
    }
    for r in 0..2 * p {
        for c in 0..2 * p {
            jac[(r, c)] /= n;
        }
    }
    Ok(jac)
}

/// `U^p(θ) = U(θ) − q_λ(|θ|) sign(θ)`, using per-block λ and leaving the
/// intercepts unpenalized unless `penalize_intercept` is set.
pub fn penalized_score(
    theta: &ThetaEstimate,
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    spec: &ModelSpec,
    lambda_alpha: f64,
    lambda_beta: f64,
    controls: &SolverControls,
) -> Result<DenseVector> {
    let n = spec.population_size;
    let ua = u1(&theta.alpha, a, b, n);
    let ub = u2(&theta.beta, b, spec.outcome_family, n);
    let mut out = Vec::with_capacity(ua.len() + ub.len());
    for (coef, score, lambda) in [(&theta.alpha, ua, lambda_alpha), (&theta.beta, ub, lambda_beta)] {
        let lambdas = coordinate_lambdas(coef.len(), lambda, controls);
        let prm = ScadParams::new(controls.scad_a, 0.0)?;
        for j in 0..coef.len() {
            let q = scad_derivative(
                ScadParams { lambda: lambdas[j], ..prm },
                coef[j].abs(),
            );
            out.push(score[j] - q * sign(coef[j]));
        }
    }
    Ok(out.into())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn coordinate_lambdas(p: usize, lambda: f64, controls: &SolverControls) -> Vec<f64> {
    let mut l = vec![lambda; p];
    if !controls.penalize_intercept && p > 0 {
        l[0] = 0.0;
    }
    l
}

/// Equation tolerance `1e-6 (1 + ‖U(0)‖∞)` used to judge approximate roots.
pub fn ee_tolerance(
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    family: OutcomeFamily,
    n: f64,
) -> f64 {
    let zero = vec![0.0; a.dim()];
    let scale = u1(&zero, a, b, n)
        .norm_inf()
        .max(u2(&zero, b, family, n).norm_inf());
    1e-6 * (1.0 + scale)
}

/// Starting point for the sampling-score block: intercept `logit(n_B/N)`.
pub fn alpha_init(p: usize, n_b: usize, n: f64) -> Vec<f64> {
    let mut v = vec![0.0; p];
    let rate = (n_b as f64 / n).clamp(1e-6, 1.0 - 1e-6);
    v[0] = logit(rate);
    v
}

/// Starting point for the outcome block: intercept at the mean of `Y_B`
/// (on the link scale for binary outcomes).
pub fn beta_init(p: usize, b: &NonProbabilitySample, family: OutcomeFamily) -> Vec<f64> {
    let mut v = vec![0.0; p];
    let mean = if b.is_empty() { 0.0 } else { b.mean_outcome() };
    v[0] = match family {
        OutcomeFamily::LinearIdentity => mean,
        OutcomeFamily::BinaryLogit => logit(mean.clamp(1e-6, 1.0 - 1e-6)),
    };
    v
}

/// One block of the Step-1 system with cached linear predictors.
pub(crate) trait Block {
    fn coef(&self) -> &[f64];
    /// `U_j` at the current coefficients.
    fn score(&self, j: usize) -> f64;
    /// `(U_j, −∂U_j/∂θ_j)`.
    fn score_and_curvature(&self, j: usize) -> (f64, f64);
    fn shift(&mut self, j: usize, delta: f64);
    fn reset(&mut self, coef: &[f64]);
    fn clip_events(&self) -> usize {
        0
    }
}

pub(crate) struct AlphaBlock {
    cols: Vec<Vec<f64>>,
    a_totals: Vec<f64>,
    coef: Vec<f64>,
    eta: Vec<f64>,
    inv: Vec<f64>,
    n: f64,
}

impl AlphaBlock {
    pub(crate) fn new(a: &ProbabilitySample, b: &NonProbabilitySample, n: f64) -> Self {
        let p = a.dim();
        let mut a_totals = vec![0.0; p];
        for (x, pi) in a.covariates().row_iter().zip(a.inclusion_probs().iter()) {
            for (t, v) in a_totals.iter_mut().zip(x) {
                *t += v / pi;
            }
        }
        let nb = b.len();
        let mut blk = Self {
            cols: b.covariates().columns(),
            a_totals,
            coef: vec![0.0; p],
            eta: vec![0.0; nb],
            inv: vec![2.0; nb],
            n,
        };
        blk.reset(&vec![0.0; p]);
        blk
    }

    pub(crate) fn clip_count(&self) -> usize {
        self.inv.iter().filter(|&&v| v >= 1.0 / SCORE_FLOOR).count()
    }
}

impl Block for AlphaBlock {
    fn coef(&self) -> &[f64] {
        &self.coef
    }

    fn score(&self, j: usize) -> f64 {
        (dot(&self.cols[j], &self.inv) - self.a_totals[j]) / self.n
    }

    fn score_and_curvature(&self, j: usize) -> (f64, f64) {
        let (mut s, mut h) = (0.0, 0.0);
        for (x, w) in self.cols[j].iter().zip(&self.inv) {
            s += x * w;
            h += x * x * (w - 1.0);
        }
        ((s - self.a_totals[j]) / self.n, h / self.n)
    }

    fn shift(&mut self, j: usize, delta: f64) {
        self.coef[j] += delta;
        for ((e, w), x) in self.eta.iter_mut().zip(self.inv.iter_mut()).zip(&self.cols[j]) {
            *e += delta * x;
            *w = inverse_score(*e, SCORE_FLOOR).0;
        }
    }

    fn reset(&mut self, coef: &[f64]) {
        self.coef.copy_from_slice(coef);
        self.eta.iter_mut().for_each(|e| *e = 0.0);
        for (c, col) in coef.iter().zip(&self.cols) {
            if *c != 0.0 {
                for (e, x) in self.eta.iter_mut().zip(col) {
                    *e += c * x;
                }
            }
        }
        for (w, e) in self.inv.iter_mut().zip(&self.eta) {
            *w = inverse_score(*e, SCORE_FLOOR).0;
        }
    }

    fn clip_events(&self) -> usize {
        self.clip_count()
    }
}

pub(crate) struct BetaBlock {
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
    family: OutcomeFamily,
    coef: Vec<f64>,
    eta: Vec<f64>,
    mu: Vec<f64>,
    weight: Vec<f64>,
    n: f64,
}

impl BetaBlock {
    pub(crate) fn new(b: &NonProbabilitySample, family: OutcomeFamily, n: f64) -> Self {
        let p = b.dim();
        let nb = b.len();
        let mut blk = Self {
            cols: b.covariates().columns(),
            y: b.outcomes().to_vec(),
            family,
            coef: vec![0.0; p],
            eta: vec![0.0; nb],
            mu: vec![0.0; nb],
            weight: vec![1.0; nb],
            n,
        };
        blk.reset(&vec![0.0; p]);
        blk
    }

    fn refresh(&mut self, i: usize) {
        let l = eval_link(self.family, self.eta[i]);
        self.mu[i] = l.value;
        self.weight[i] = l.d1;
    }
}

impl Block for BetaBlock {
    fn coef(&self) -> &[f64] {
        &self.coef
    }

    fn score(&self, j: usize) -> f64 {
        let s: f64 = self.cols[j]
            .iter()
            .zip(self.y.iter().zip(&self.mu))
            .map(|(x, (y, m))| x * (y - m))
            .sum();
        s / self.n
    }

    fn score_and_curvature(&self, j: usize) -> (f64, f64) {
        let (mut s, mut h) = (0.0, 0.0);
        for (i, x) in self.cols[j].iter().enumerate() {
            s += x * (self.y[i] - self.mu[i]);
            h += x * x * self.weight[i];
        }
        (s / self.n, h / self.n)
    }

    fn shift(&mut self, j: usize, delta: f64) {
        for i in 0..self.eta.len() {
            self.eta[i] += delta * self.cols[j][i];
            self.refresh(i);
        }
        self.coef[j] += delta;
    }

    fn reset(&mut self, coef: &[f64]) {
        self.coef.copy_from_slice(coef);
        self.eta.iter_mut().for_each(|e| *e = 0.0);
        for (c, col) in coef.iter().zip(&self.cols) {
            if *c != 0.0 {
                for (e, x) in self.eta.iter_mut().zip(col) {
                    *e += c * x;
                }
            }
        }
        for i in 0..self.eta.len() {
            self.refresh(i);
        }
    }
}

/// Result of solving one block at one λ.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockFit {
    pub lambda: f64,
    pub coef: Vec<f64>,
    pub support: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub final_update_norm: f64,
    pub clip_events: usize,
}

/// One coordinate update. Returns the applied change.
///
/// A penalized coordinate whose local quadratic model has its zero inside
/// the SCAD subgradient band (`|U_j + h θ_j| ≤ λ`) is set to exactly zero;
/// a zero coordinate violating that condition enters at the soft-threshold
/// point. Nonzero coordinates jump to [`region_root`] when it applies and
/// otherwise take the MM Newton step
/// `θ_j += (U_j − E_jj θ_j) / (h_j + E_jj)` with `E_jj = q_λ(|θ_j|)/(ε + |θ_j|)`.
fn update_coordinate<B: Block>(
    blk: &mut B,
    j: usize,
    lambda: f64,
    epsilon: f64,
    controls: &SolverControls,
) -> Result<f64> {
    let theta = blk.coef()[j];
    if lambda > 0.0 && theta == 0.0 {
        let u = blk.score(j);
        if u.abs() <= lambda {
            return Ok(0.0);
        }
    }
    let (u, h) = blk.score_and_curvature(j);
    if !(h > 0.0) || !u.is_finite() {
        return Ok(0.0);
    }
    let target = if lambda == 0.0 {
        theta + u / h
    } else {
        let z = u + h * theta;
        if z.abs() <= lambda {
            0.0
        } else if theta == 0.0 {
            (z - lambda * sign(z)) / h
        } else if let Some(s) = region_root(z, h, lambda, controls.scad_a, theta) {
            s
        } else {
            let prm = ScadParams { a: controls.scad_a, lambda };
            let e = scad_derivative(prm, theta.abs()) / (epsilon + theta.abs());
            theta + (u - e * theta) / (h + e)
        }
    };
    let mut delta = target - theta;
    if delta.abs() > controls.max_step {
        delta = controls.max_step * sign(delta);
    }
    if delta != 0.0 {
        blk.shift(j, delta);
    }
    let now = blk.coef()[j];
    if !now.is_finite() || now.abs() > controls.divergence_limit {
        return Err(Error::DivergedUpdate { index: j, value: now });
    }
    Ok(delta.abs())
}

/// Root of the local quadratic model `z − hθ − q_λ(|θ|) sign(θ) = 0` inside
/// the SCAD region that currently holds `theta`, when that root is unique
/// and stays in the region. This is the point the MM iteration converges to
/// under the quadratic model; near the selection threshold the MM map
/// contracts at rate `λ/|z|`, so jumping there saves hundreds of cycles.
fn region_root(z: f64, h: f64, lambda: f64, a: f64, theta: f64) -> Option<f64> {
    let t = theta.abs();
    if t < lambda {
        let s = (z.abs() - lambda) / h;
        (s > 0.0 && s < lambda).then(|| s * sign(z))
    } else if t < a * lambda {
        let slope = h - 1.0 / (a - 1.0);
        if slope <= 0.0 {
            return None;
        }
        let s = (z.abs() - a * lambda / (a - 1.0)) / slope;
        (s >= lambda && s < a * lambda).then(|| s * sign(z))
    } else {
        None
    }
}

fn sweep<B: Block>(
    blk: &mut B,
    lambdas: &[f64],
    epsilon: f64,
    active_only: bool,
    controls: &SolverControls,
) -> Result<f64> {
    let mut max_delta = 0.0_f64;
    for (j, &lambda) in lambdas.iter().enumerate() {
        if active_only && lambda > 0.0 && blk.coef()[j] == 0.0 {
            continue;
        }
        max_delta = max_delta.max(update_coordinate(blk, j, lambda, epsilon, controls)?);
    }
    Ok(max_delta)
}

/// Cycles coordinates to convergence at one λ from the block's current state.
///
/// The MM surrogate with `ε = controls.epsilon` is solved first; active
/// coordinates are then refined with `ε = 0` so that nonzero coordinates
/// satisfy the unperturbed penalized equation.
pub(crate) fn solve_block<B: Block>(
    blk: &mut B,
    lambda: f64,
    controls: &SolverControls,
) -> Result<BlockFit> {
    let p = blk.coef().len();
    let lambdas = coordinate_lambdas(p, lambda, controls);
    let mut iterations = 0;
    let mut last = f64::INFINITY;
    let mut converged = false;
    for epsilon in [controls.epsilon, 0.0] {
        converged = false;
        while iterations < controls.max_cycles {
            // cycle the active set to convergence, then confirm with a full cycle
            while iterations < controls.max_cycles {
                iterations += 1;
                last = sweep(blk, &lambdas, epsilon, true, controls)?;
                if last < controls.tol {
                    break;
                }
            }
            if iterations >= controls.max_cycles {
                break;
            }
            iterations += 1;
            last = sweep(blk, &lambdas, epsilon, false, controls)?;
            if last < controls.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            break;
        }
    }
    Ok(finish(blk, lambda, iterations, last, converged, controls))
}

/// A block whose estimating function is the gradient of a concave objective.
pub(crate) trait Smooth: Block {
    fn columns(&self) -> &[Vec<f64>];
    fn scale(&self) -> f64;
    /// Row weights `w` with `−∂U/∂θ = N⁻¹ Σ w x xᵀ`.
    fn hessian_weights(&self) -> Vec<f64>;
    /// The objective whose gradient is `U`.
    fn objective(&self) -> f64;
}

/// `φ(η) = η − e^{−η}` continued linearly where the score is clipped, so
/// that `φ' = 1/max(expit(η), floor)`.
fn alpha_row_objective(eta: f64) -> f64 {
    let eta0 = logit(SCORE_FLOOR);
    if eta >= eta0 {
        eta - (-eta).exp()
    } else {
        eta0 - (-eta0).exp() + (eta - eta0) / SCORE_FLOOR
    }
}

impl Smooth for AlphaBlock {
    fn columns(&self) -> &[Vec<f64>] {
        &self.cols
    }

    fn scale(&self) -> f64 {
        self.n
    }

    fn hessian_weights(&self) -> Vec<f64> {
        self.inv
            .iter()
            .map(|&w| if w >= 1.0 / SCORE_FLOOR { 0.0 } else { w - 1.0 })
            .collect()
    }

    fn objective(&self) -> f64 {
        let b: f64 = self.eta.iter().map(|&e| alpha_row_objective(e)).sum();
        (b - dot(&self.a_totals, &self.coef)) / self.n
    }
}

impl Smooth for BetaBlock {
    fn columns(&self) -> &[Vec<f64>] {
        &self.cols
    }

    fn scale(&self) -> f64 {
        self.n
    }

    fn hessian_weights(&self) -> Vec<f64> {
        self.weight.clone()
    }

    fn objective(&self) -> f64 {
        let s: f64 = self
            .eta
            .iter()
            .zip(&self.y)
            .map(|(&e, &y)| match self.family {
                OutcomeFamily::LinearIdentity => y * e - 0.5 * e * e,
                OutcomeFamily::BinaryLogit => y * e - (e.max(0.0) + (-e.abs()).exp().ln_1p()),
            })
            .sum();
        s / self.n
    }
}

/// Second-order model of a [`Smooth`] block around a fixed point. Hessian
/// columns are formed on first use.
struct QuadModel<'a> {
    cols: &'a [Vec<f64>],
    /// `w ⊙ x_j` for every column.
    weighted: Vec<Vec<f64>>,
    n: f64,
    coef: Vec<f64>,
    grad: Vec<f64>,
    diag: Vec<f64>,
    hcols: Vec<Option<Vec<f64>>>,
}

impl<'a> QuadModel<'a> {
    fn new<S: Smooth>(blk: &'a S) -> Self {
        let cols = blk.columns();
        let w = blk.hessian_weights();
        let n = blk.scale();
        let p = cols.len();
        let weighted: Vec<Vec<f64>> = cols
            .iter()
            .map(|c| c.iter().zip(&w).map(|(x, w)| x * w).collect())
            .collect();
        let diag = cols.iter().zip(&weighted).map(|(c, wc)| dot(c, wc) / n).collect();
        Self {
            cols,
            weighted,
            n,
            coef: blk.coef().to_vec(),
            grad: (0..p).map(|j| blk.score(j)).collect(),
            diag,
            hcols: vec![None; p],
        }
    }

    fn hessian_column(&mut self, k: usize) -> &[f64] {
        if self.hcols[k].is_none() {
            let wx = &self.weighted[k];
            let col = self.cols.iter().map(|c| dot(c, wx) / self.n).collect();
            self.hcols[k] = Some(col);
        }
        self.hcols[k].as_deref().expect("column just formed")
    }
}

impl Block for QuadModel<'_> {
    fn coef(&self) -> &[f64] {
        &self.coef
    }

    fn score(&self, j: usize) -> f64 {
        self.grad[j]
    }

    fn score_and_curvature(&self, j: usize) -> (f64, f64) {
        (self.grad[j], self.diag[j])
    }

    fn shift(&mut self, j: usize, delta: f64) {
        self.coef[j] += delta;
        let mut grad = std::mem::take(&mut self.grad);
        for (g, h) in grad.iter_mut().zip(self.hessian_column(j)) {
            *g -= h * delta;
        }
        self.grad = grad;
    }

    fn reset(&mut self, coef: &[f64]) {
        for k in 0..coef.len() {
            let d = coef[k] - self.coef[k];
            if d != 0.0 {
                self.shift(k, d);
            }
        }
    }
}

const MAX_NEWTON_STEPS: usize = 50;
const MAX_HALVINGS: usize = 30;

fn penalized_objective<S: Smooth>(blk: &S, lambdas: &[f64], a: f64) -> f64 {
    let pen: f64 = blk
        .coef()
        .iter()
        .zip(lambdas)
        .filter(|(_, &l)| l > 0.0)
        .map(|(c, &lambda)| scad_penalty(ScadParams { a, lambda }, c.abs()))
        .sum();
    blk.objective() - pen
}

/// Proximal Newton: each step solves the penalized problem on the quadratic
/// model of the block with coordinate descent, then backtracks on the
/// penalized objective. Once a full step is shorter than `controls.tol` the
/// model's stationarity conditions are the block's own, and the fit is
/// returned. Otherwise the exact coordinate solver takes over from the last
/// accepted point.
pub(crate) fn solve_block_newton<S: Smooth>(
    blk: &mut S,
    lambda: f64,
    controls: &SolverControls,
) -> Result<BlockFit> {
    let lambdas = coordinate_lambdas(blk.coef().len(), lambda, controls);
    let mut steps = 0;
    while steps < MAX_NEWTON_STEPS {
        let start = blk.coef().to_vec();
        let f0 = penalized_objective(blk, &lambdas, controls.scad_a);
        let model_fit = match solve_block(&mut QuadModel::new(blk), lambda, controls) {
            Ok(f) if f.converged => f,
            _ => break,
        };
        steps += 1;
        let step: Vec<f64> = model_fit.coef.iter().zip(&start).map(|(t, s)| t - s).collect();
        let size = norm_inf(&step);
        if size < controls.tol {
            return Ok(finish(blk, lambda, steps, size, true, controls));
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = start.iter().zip(&step).map(|(s, d)| s + t * d).collect();
            blk.reset(&trial);
            let f = penalized_objective(blk, &lambdas, controls.scad_a);
            if f.is_finite() && f >= f0 - 1e-14 * f0.abs() {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            blk.reset(&start);
            break;
        }
    }
    let mut fit = solve_block(blk, lambda, controls)?;
    fit.iterations += steps;
    Ok(fit)
}

/// Hard-thresholds small coefficients and packages the fit.
fn finish<B: Block>(
    blk: &mut B,
    lambda: f64,
    iterations: usize,
    last: f64,
    converged: bool,
    controls: &SolverControls,
) -> BlockFit {
    let mut coef = blk.coef().to_vec();
    for c in coef.iter_mut().skip(1) {
        if c.abs() <= controls.zero_tol {
            *c = 0.0;
        }
    }
    if coef != blk.coef() {
        blk.reset(&coef);
    }
    BlockFit {
        lambda,
        support: support_of(&coef, controls.zero_tol),
        coef,
        iterations,
        converged,
        final_update_norm: last,
        clip_events: blk.clip_events(),
    }
}

/// Warm-started fits along a λ path (in the given order).
pub(crate) fn solve_path<B: Smooth>(
    blk: &mut B,
    init: &[f64],
    lambdas: &[f64],
    controls: &SolverControls,
) -> Vec<Result<BlockFit>> {
    blk.reset(init);
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let fit = solve_block_newton(blk, lambda, controls);
        if fit.is_err() {
            blk.reset(init);
        }
        out.push(fit);
    }
    out
}

/// Sampling-score block path. `init` defaults to [`alpha_init`].
pub fn alpha_path(
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    n: f64,
    lambdas: &[f64],
    controls: &SolverControls,
    init: Option<&[f64]>,
) -> Vec<Result<BlockFit>> {
    let start = init.map_or_else(|| alpha_init(a.dim(), b.len(), n), <[f64]>::to_vec);
    let mut blk = AlphaBlock::new(a, b, n);
    solve_path(&mut blk, &start, lambdas, controls)
}

/// Outcome block path. `init` defaults to [`beta_init`].
pub fn beta_path(
    b: &NonProbabilitySample,
    family: OutcomeFamily,
    n: f64,
    lambdas: &[f64],
    controls: &SolverControls,
    init: Option<&[f64]>,
) -> Vec<Result<BlockFit>> {
    let start = init.map_or_else(|| beta_init(b.dim(), b, family), <[f64]>::to_vec);
    let mut blk = BetaBlock::new(b, family, n);
    solve_path(&mut blk, &start, lambdas, controls)
}

/// Smallest λ for which every non-intercept coordinate stays at zero once
/// the unpenalized intercept is solved: `max_{j≥1} |U_j|` at that point.
pub fn alpha_lambda_max(
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    n: f64,
    controls: &SolverControls,
) -> Result<f64> {
    let mut blk = AlphaBlock::new(a, b, n);
    blk.reset(&alpha_init(a.dim(), b.len(), n));
    solve_block(&mut blk, f64::INFINITY, &SolverControls { penalize_intercept: false, ..controls.clone() })?;
    Ok((1..a.dim()).map(|j| blk.score(j).abs()).fold(0.0, f64::max))
}

pub fn beta_lambda_max(
    b: &NonProbabilitySample,
    family: OutcomeFamily,
    n: f64,
    controls: &SolverControls,
) -> Result<f64> {
    let mut blk = BetaBlock::new(b, family, n);
    blk.reset(&beta_init(b.dim(), b, family));
    solve_block(&mut blk, f64::INFINITY, &SolverControls { penalize_intercept: false, ..controls.clone() })?;
    Ok((1..b.dim()).map(|j| blk.score(j).abs()).fold(0.0, f64::max))
}

/// Solves `U^p(α, β) = 0` at the given tuning values.
///
/// A block that hits `max_cycles` is returned with `converged = false`.
pub fn solve_penalized(
    a: &ProbabilitySample,
    b: &NonProbabilitySample,
    spec: &ModelSpec,
    lambda_alpha: f64,
    lambda_beta: f64,
    controls: &SolverControls,
) -> Result<ThetaEstimate> {
    if !(lambda_alpha >= 0.0 && lambda_beta >= 0.0) {
        return Err(Error::InvalidInput("tuning parameters must be >= 0".into()));
    }
    if a.dim() != b.dim() {
        return Err(Error::Dimension("samples disagree on covariate count".into()));
    }
    let n = spec.population_size;
    let fa = alpha_path(a, b, n, &[lambda_alpha], controls, None)
        .pop()
        .expect("one fit per lambda")?;
    let fb = beta_path(b, spec.outcome_family, n, &[lambda_beta], controls, None)
        .pop()
        .expect("one fit per lambda")?;
    Ok(combine_fits(fa, fb))
}

pub fn combine_fits(fa: BlockFit, fb: BlockFit) -> ThetaEstimate {
    ThetaEstimate {
        alpha: fa.coef.into(),
        beta: fb.coef.into(),
        support_alpha: fa.support,
        support_beta: fb.support,
        iterations: fa.iterations + fb.iterations,
        converged: fa.converged && fb.converged,
        final_update_norm: fa.final_update_norm.max(fb.final_update_norm),
        clip_events: fa.clip_events,
    }
}
