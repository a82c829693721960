use std::path::Path;

use drsel::model::{ModelSpec, NonProbabilitySample, ProbabilitySample};
use drsel::pipeline::{estimate_from_selection, select, EstimateReport, PipelineConfig, Selection};
use drsel::simulate::{run_mc, McResult};

use crate::config::{Command, RunConfig};
use crate::ingest::{ingest_sample_a, ingest_sample_b};
use crate::report::{self, EstimateContext};
use crate::{CliError, CliResult};

/// Runs the configured command on a pool of `cfg.threads` workers and
/// returns a short human-readable summary.
pub fn run(cfg: &RunConfig) -> CliResult<String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} threads: {e}", cfg.threads)))?;
    pool.install(|| match cfg.command {
        Command::Simulate => cmd_simulate(cfg).map(|r| report::metrics_summary(&r.metrics)),
        Command::Select => cmd_select(cfg).map(|(sel, names)| {
            let picked: Vec<&str> = sel
                .support
                .union_set
                .iter()
                .skip(1)
                .map(|&j| names[j - 1].as_str())
                .collect();
            format!("selected {} covariates: {}\n", picked.len(), picked.join(", "))
        }),
        Command::Estimate => cmd_estimate(cfg).map(|(_, r)| report::estimate_summary(&r)),
    })
}

fn out_dir(cfg: &RunConfig) -> CliResult<&Path> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::Output { path: cfg.out.clone(), source: e })?;
    Ok(&cfg.out)
}

struct Inputs {
    a: ProbabilitySample,
    b: NonProbabilitySample,
    names: Vec<String>,
    pipeline: PipelineConfig,
}

fn load(cfg: &RunConfig) -> CliResult<Inputs> {
    let (pa, pb, n) = match (&cfg.sample_a, &cfg.sample_b, cfg.population_size) {
        (Some(a), Some(b), Some(n)) => (a, b, n),
        _ => return Err(CliError::Config("both samples and the population size are required".into())),
    };
    let a = ingest_sample_a(pa)?;
    let b = ingest_sample_b(pb, cfg.family, Some(&a.names))?;
    let spec = ModelSpec::new(cfg.family, n);
    spec.validate(&a.sample, &b.sample).map_err(|e| match e {
        drsel::Error::InvalidInput(m) => CliError::Config(m),
        other => other.into(),
    })?;
    let pipeline = PipelineConfig {
        folds: cfg.kfolds,
        grid_size: cfg.grid_size,
        seed: cfg.seed,
        design: cfg.design,
        fixed_lambdas: cfg.fixed_lambdas,
        ..PipelineConfig::new(spec)
    };
    Ok(Inputs { a: a.sample, b: b.sample, names: a.names, pipeline })
}

/// Step 1 only. Writes `selection.csv` and `cv.csv`.
pub fn cmd_select(cfg: &RunConfig) -> CliResult<(Selection, Vec<String>)> {
    let inp = load(cfg)?;
    let sel = select(&inp.a, &inp.b, &inp.pipeline)?;
    let dir = out_dir(cfg)?;
    report::write_selection(&dir.join(report::SELECTION_FILE), &sel, &inp.names)?;
    report::write_cv(&dir.join(report::CV_FILE), &sel)?;
    Ok((sel, inp.names))
}

/// Both steps. Writes `estimate.csv`, `selection.csv` and `cv.csv`.
pub fn cmd_estimate(cfg: &RunConfig) -> CliResult<(Selection, EstimateReport)> {
    let inp = load(cfg)?;
    let sel = select(&inp.a, &inp.b, &inp.pipeline)?;
    if !sel.step1.converged {
        eprintln!("warning: the selection step stopped at its cycle limit");
    }
    let rep = estimate_from_selection(&sel, &inp.pipeline)?;
    let dir = out_dir(cfg)?;
    let ctx = EstimateContext {
        population_size: inp.pipeline.spec.population_size,
        family: cfg.family,
        design: cfg.design,
        selection: &sel,
    };
    report::write_estimate(&dir.join(report::ESTIMATE_FILE), &ctx, &rep)?;
    report::write_selection(&dir.join(report::SELECTION_FILE), &sel, &inp.names)?;
    report::write_cv(&dir.join(report::CV_FILE), &sel)?;
    Ok((sel, rep))
}

/// Monte Carlo study. Writes `mc_metrics.csv` and `mc_runs.csv`.
pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<McResult> {
    let sc = cfg
        .scenario_config()
        .ok_or_else(|| CliError::Config("simulate needs --scenario".into()))?;
    sc.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let res = run_mc(&sc)?;
    for (run, err) in &res.failed_runs {
        eprintln!("run {run} failed: {err}");
    }
    if !res.metrics.is_valid() {
        eprintln!(
            "warning: {} of {} runs failed; the aggregate is unreliable",
            res.metrics.failures, sc.runs
        );
    }
    let dir = out_dir(cfg)?;
    report::write_metrics(&dir.join(report::MC_METRICS_FILE), &res.metrics)?;
    report::write_runs(&dir.join(report::MC_RUNS_FILE), &res.records)?;
    Ok(res)
}
