//! CSV outputs. Numbers are written at full precision; rounding happens
//! only in the stdout summaries.

use std::fmt::Write as _;
use std::path::Path;

use drsel::drest::Design;
use drsel::model::OutcomeFamily;
use drsel::pipeline::{EstimateReport, Selection};
use drsel::simulate::{McMetrics, RunRecord};

use crate::{format_f64, CliError, CliResult};

pub const ESTIMATE_FILE: &str = "estimate.csv";
pub const SELECTION_FILE: &str = "selection.csv";
pub const CV_FILE: &str = "cv.csv";
pub const MC_METRICS_FILE: &str = "mc_metrics.csv";
pub const MC_RUNS_FILE: &str = "mc_runs.csv";
pub const INTERCEPT_NAME: &str = "(intercept)";

fn write_rows(path: &Path, rows: &[Vec<String>]) -> CliResult<()> {
    let out_err = |e: csv::Error| CliError::Output {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(out_err)?;
    for r in rows {
        w.write_record(r).map_err(out_err)?;
    }
    w.flush().map_err(|e| CliError::Output { path: path.to_path_buf(), source: e })
}

fn strings<const N: usize>(xs: [&str; N]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, format_f64)
}

pub struct EstimateContext<'a> {
    pub population_size: f64,
    pub family: OutcomeFamily,
    pub design: Design,
    pub selection: &'a Selection,
}

pub fn estimate_rows(ctx: &EstimateContext, r: &EstimateReport) -> Vec<Vec<String>> {
    let sel = ctx.selection;
    let fields: Vec<(&str, String)> = vec![
        ("mu_hat", format_f64(r.mu_hat)),
        ("se", format_f64(r.se)),
        ("ci_low", format_f64(r.ci_low)),
        ("ci_high", format_f64(r.ci_high)),
        ("v1_hat", format_f64(r.v1_hat)),
        ("v2_hat", format_f64(r.v2_hat)),
        ("negative_variance", flag(r.negative_variance)),
        ("naive", format_f64(r.baselines.naive)),
        ("p_ipw", format_f64(r.baselines.p_ipw)),
        ("p_reg", format_f64(r.baselines.p_reg)),
        ("p_dr0", format_f64(r.baselines.p_dr0)),
        ("lambda_alpha", format_f64(sel.lambda_alpha)),
        ("lambda_beta", format_f64(sel.lambda_beta)),
        ("size_m_alpha", sel.step1.support_alpha.len().to_string()),
        ("size_m_beta", sel.step1.support_beta.len().to_string()),
        ("size_c", (sel.support.len() - 1).to_string()),
        ("n_a", r.n_a.to_string()),
        ("n_b", r.n_b.to_string()),
        ("population_size", format_f64(ctx.population_size)),
        ("family", ctx.family.name().to_string()),
        ("design", ctx.design.name().to_string()),
        ("step1_iterations", r.step1_iterations.to_string()),
        ("step1_converged", flag(r.step1_converged)),
        ("step2_iterations", r.step2_iterations.to_string()),
        ("clip_events", r.clip_events.to_string()),
    ];
    vec![
        fields.iter().map(|(k, _)| k.to_string()).collect(),
        fields.into_iter().map(|(_, v)| v).collect(),
    ]
}

pub fn write_estimate(path: &Path, ctx: &EstimateContext, r: &EstimateReport) -> CliResult<()> {
    write_rows(path, &estimate_rows(ctx, r))
}

/// One row per coefficient, intercept first. Coefficients are the Step-1
/// fits mapped back to the original covariate scale.
pub fn selection_rows(sel: &Selection, names: &[String]) -> Vec<Vec<String>> {
    let alpha = sel.alpha_original();
    let beta = sel.beta_original();
    let mut rows = vec![strings(["name", "alpha_coef", "beta_coef", "in_M_alpha", "in_M_beta", "in_C"])];
    for j in 0..alpha.len() {
        let name = if j == 0 { INTERCEPT_NAME.to_string() } else { names[j - 1].clone() };
        rows.push(vec![
            name,
            format_f64(alpha[j]),
            format_f64(beta[j]),
            flag(sel.step1.support_alpha.contains(&j)),
            flag(sel.step1.support_beta.contains(&j)),
            flag(sel.support.contains(j)),
        ]);
    }
    rows
}

pub fn write_selection(path: &Path, sel: &Selection, names: &[String]) -> CliResult<()> {
    write_rows(path, &selection_rows(sel, names))
}

pub fn write_cv(path: &Path, sel: &Selection) -> CliResult<()> {
    let mut rows = vec![strings(["block", "lambda", "fold", "loss"])];
    if let Some(t) = &sel.tuning {
        for r in &t.cv_table {
            rows.push(vec![
                r.block.name().to_string(),
                format_f64(r.lambda),
                r.fold.to_string(),
                format_f64(r.loss),
            ]);
        }
    }
    write_rows(path, &rows)
}

pub fn metrics_rows(m: &McMetrics) -> Vec<Vec<String>> {
    let mut rows = vec![strings([
        "scenario",
        "family",
        "estimator",
        "runs",
        "failures",
        "bias",
        "sd",
        "bias_mcse",
        "coverage_pct",
        "coverage_mcse",
        "alpha_under_pct",
        "alpha_over_pct",
        "alpha_fn",
        "alpha_fp",
        "beta_under_pct",
        "beta_over_pct",
        "beta_fn",
        "beta_fp",
    ])];
    for e in &m.estimators {
        rows.push(vec![
            m.scenario.clone(),
            m.family.name().to_string(),
            e.estimator.to_string(),
            m.runs.to_string(),
            m.failures.to_string(),
            format_f64(e.bias),
            format_f64(e.sd),
            format_f64(e.bias_mcse),
            opt(e.coverage_pct),
            opt(e.coverage_mcse),
            format_f64(m.alpha.under_pct),
            format_f64(m.alpha.over_pct),
            format_f64(m.alpha.fn_avg),
            format_f64(m.alpha.fp_avg),
            format_f64(m.beta.under_pct),
            format_f64(m.beta.over_pct),
            format_f64(m.beta.fn_avg),
            format_f64(m.beta.fp_avg),
        ]);
    }
    rows
}

pub fn write_metrics(path: &Path, m: &McMetrics) -> CliResult<()> {
    write_rows(path, &metrics_rows(m))
}

pub fn runs_rows(records: &[RunRecord]) -> Vec<Vec<String>> {
    let mut rows = vec![strings(["run", "estimator", "estimate", "ci_low", "ci_high", "covered"])];
    for rec in records {
        for e in &rec.estimates {
            rows.push(vec![
                rec.run.to_string(),
                e.estimator.to_string(),
                format_f64(e.estimate),
                opt(e.ci.map(|c| c.0)),
                opt(e.ci.map(|c| c.1)),
                rec.covered(e.estimator).map_or_else(String::new, flag),
            ]);
        }
    }
    rows
}

pub fn write_runs(path: &Path, records: &[RunRecord]) -> CliResult<()> {
    write_rows(path, &runs_rows(records))
}

pub fn estimate_summary(r: &EstimateReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "estimate  {:.3}  se {:.3}  95% CI ({:.3}, {:.3})", r.mu_hat, r.se, r.ci_low, r.ci_high);
    let b = &r.baselines;
    let _ = writeln!(
        s,
        "naive {:.3}  p-ipw {:.3}  p-reg {:.3}  p-dr0 {:.3}",
        b.naive, b.p_ipw, b.p_reg, b.p_dr0
    );
    if r.negative_variance {
        let _ = writeln!(s, "warning: the variance estimate is negative; se set to 0");
    }
    s
}

pub fn metrics_summary(m: &McMetrics) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {}  runs {}  failures {}", m.scenario, m.family.name(), m.runs, m.failures);
    for (name, sm) in [("alpha", m.alpha), ("beta", m.beta)] {
        let _ = writeln!(
            s,
            "  {name:5} under {:5.1}%  over {:5.1}%  FN {:.2}  FP {:.2}",
            sm.under_pct, sm.over_pct, sm.fn_avg, sm.fp_avg
        );
    }
    for e in &m.estimators {
        let cov = e.coverage_pct.map_or_else(String::new, |c| format!("  coverage {c:.1}%"));
        let _ = writeln!(s, "  {:6} bias {:+.4}  sd {:.4}{cov}", e.estimator, e.bias, e.sd);
    }
    s
}
