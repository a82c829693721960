//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! `DRSEL_ACCEPTANCE_RUNS` lowers the Monte Carlo size for quick local
//! checks; the criteria are defined at the default of 500 runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command as Process;
use std::time::Instant;

use drsel::drest::joint_ee;
use drsel::model::{eval_link, ModelSpec, NonProbabilitySample, OutcomeFamily, ProbabilitySample};
use drsel::numerics::{dot, expit, solve_linear, DenseMatrix};
use drsel::pee::{jacobian_u, solve_penalized, u1, u2, SolverControls};
use drsel::penalty::{scad_derivative, ScadParams, DEFAULT_SCAD_A};
use drsel::simulate::{run_mc, McMetrics, OutcomeModel, ScenarioConfig, SelectionModel};
use drsel_cli::config::Flags;
use drsel_cli::ingest::{write_sample_a, write_sample_b};
use drsel_cli::{ingest_sample_a, ingest_sample_b, run, Command, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const LINEAR: OutcomeFamily = OutcomeFamily::LinearIdentity;
const LOGIT: OutcomeFamily = OutcomeFamily::BinaryLogit;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn main() {
    let runs: usize = std::env::var("DRSEL_ACCEPTANCE_RUNS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(500);
    let started = Instant::now();
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();

    results.push((1, "SCAD derivative unit suite", scad_suite()));
    results.push((2, "Jacobian against finite differences", jacobian_suite()));
    results.push((3, "oracle equivalence", oracle_suite()));

    let mc = monte_carlo(runs);
    let tag = if runs == 500 { String::new() } else { format!(" [reduced: {runs} runs]") };
    results.push((4, "selection metrics, scenario (i) continuous", table2(&mc).tagged(&tag)));
    results.push((5, "Wald interval coverage", table3(&mc).tagged(&tag)));
    results.push((6, "double robustness of the bias", robustness(&mc).tagged(&tag)));
    results.push((7, "simulate determinism across reruns and threads", determinism()));
    results.push((8, "CSV round trips and end-to-end estimate", pipeline_suite()));

    let mut failed = 0;
    for (id, name, o) in &results {
        failed += usize::from(!o.pass);
        println!("{} {id}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!(
        "{} of {} criteria passed in {:.0} s",
        results.len() - failed,
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

impl Outcome {
    fn tagged(mut self, tag: &str) -> Self {
        self.detail.push_str(tag);
        self
    }
}

// 1 ---------------------------------------------------------------------

fn scad_suite() -> Outcome {
    let a = DEFAULT_SCAD_A;
    let mut worst = 0.0f64;
    let mut gap = 0.0f64;
    for lambda in [0.05, 0.3, 1.0, 2.7] {
        let prm = ScadParams::with_lambda(lambda).unwrap();
        for t in [0.0, lambda / 2.0, lambda, 2.0 * lambda, a * lambda, 2.0 * a * lambda] {
            let expected = if t <= lambda {
                lambda
            } else {
                (a * lambda - t).max(0.0) / (a - 1.0)
            };
            worst = worst.max((scad_derivative(prm, t) - expected).abs());
        }
        for bp in [lambda, a * lambda] {
            let left = scad_derivative(prm, bp.next_down());
            let right = scad_derivative(prm, bp.next_up());
            gap = gap.max((left - right).abs());
        }
    }
    outcome(
        worst < 1e-12 && gap < 1e-12,
        format!("max deviation {worst:.1e}, max breakpoint gap {gap:.1e} (limit 1e-12)"),
    )
}

// 2 ---------------------------------------------------------------------

struct Toy {
    a: ProbabilitySample,
    b: NonProbabilitySample,
    n: f64,
}

fn matrix(rows: &[Vec<f64>]) -> DenseMatrix {
    DenseMatrix::new(rows.len(), rows[0].len(), rows.concat()).unwrap()
}

/// Population of `n` units with `p` columns; `B` by logistic selection on
/// `alpha`, `A` by Poisson sampling of expected size `n_a`.
fn toy(seed: u64, n: usize, alpha: &[f64], beta: &[f64], family: OutcomeFamily, n_a: f64) -> Toy {
    let p = alpha.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut xa, mut pa, mut xb, mut yb) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let mut x = vec![1.0];
        x.extend((1..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let eta = dot(&x, beta);
        let y = match family {
            OutcomeFamily::LinearIdentity => eta + rng.sample::<f64, _>(StandardNormal),
            OutcomeFamily::BinaryLogit => f64::from(u8::from(rng.random::<f64>() < expit(eta))),
        };
        if rng.random::<f64>() < expit(dot(&x, alpha)) {
            xb.push(x.clone());
            yb.push(y);
        }
        let pi = (n_a / n as f64 * (0.5 + x[1].abs())).min(1.0);
        if rng.random::<f64>() < pi {
            xa.push(x);
            pa.push(pi);
        }
    }
    Toy {
        a: ProbabilitySample::new(matrix(&xa), pa.into()).unwrap(),
        b: NonProbabilitySample::new(matrix(&xb), yb.into()).unwrap(),
        n: n as f64,
    }
}

/// Twenty units per sample with random covariates and responses.
fn random_units(rng: &mut ChaCha8Rng, p: usize, family: OutcomeFamily) -> Toy {
    let row = |rng: &mut ChaCha8Rng| {
        let mut x = vec![1.0];
        x.extend((1..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        x
    };
    let xa: Vec<Vec<f64>> = (0..20).map(|_| row(rng)).collect();
    let xb: Vec<Vec<f64>> = (0..20).map(|_| row(rng)).collect();
    let pa: Vec<f64> = (0..20).map(|_| rng.random_range(0.05..1.0)).collect();
    let yb: Vec<f64> = (0..20)
        .map(|_| match family {
            OutcomeFamily::LinearIdentity => rng.sample::<f64, _>(StandardNormal) * 3.0,
            OutcomeFamily::BinaryLogit => f64::from(u8::from(rng.random::<bool>())),
        })
        .collect();
    Toy {
        a: ProbabilitySample::new(matrix(&xa), pa.into()).unwrap(),
        b: NonProbabilitySample::new(matrix(&xb), yb.into()).unwrap(),
        n: 200.0,
    }
}

/// Largest entrywise gap between `analytic` and the central difference of
/// `f`, relative to the largest entry of the difference quotient.
fn fd_gap(analytic: impl Fn(usize, usize) -> f64, f: impl Fn(&[f64]) -> Vec<f64>, at: &[f64]) -> f64 {
    let p = at.len();
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    for c in 0..p {
        let h = 1e-6 * (1.0 + at[c].abs());
        let mut up = at.to_vec();
        let mut dn = at.to_vec();
        up[c] += h;
        dn[c] -= h;
        let (fu, fd) = (f(&up), f(&dn));
        for r in 0..p {
            let q = (fu[r] - fd[r]) / (2.0 * h);
            worst = worst.max((analytic(r, c) - q).abs());
            scale = scale.max(q.abs());
        }
    }
    worst / scale
}

fn jacobian_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let p = 4;
    let (mut alpha_gap, mut beta_gap) = (0.0f64, 0.0f64);
    for _ in 0..25 {
        let t = random_units(&mut rng, p, LINEAR);
        let alpha: Vec<f64> = (0..p).map(|_| rng.random_range(-1.5..0.5)).collect();
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let theta = [alpha.clone(), beta.clone()].concat();
        let j = jacobian_u(&theta, &t.a, &t.b, LINEAR, t.n).unwrap();
        alpha_gap = alpha_gap.max(fd_gap(|r, c| j[(r, c)], |v| u1(v, &t.a, &t.b, t.n).to_vec(), &alpha));
        beta_gap = beta_gap.max(fd_gap(
            |r, c| j[(p + r, p + c)],
            |v| u2(v, &t.b, LINEAR, t.n).to_vec(),
            &beta,
        ));
    }
    outcome(
        alpha_gap < 1e-5 && beta_gap < 1e-5,
        format!(
            "sampling-score block rel. gap {alpha_gap:.1e}, identity-link outcome block {beta_gap:.1e} (limit 1e-5; logit outcome block excluded)"
        ),
    )
}

// 3 ---------------------------------------------------------------------

/// Plain Newton on the unpenalized equations with their exact derivatives.
fn dense_newton(t: &Toy, family: OutcomeFamily) -> (Vec<f64>, Vec<f64>) {
    let p = t.a.dim();
    let mut alpha = vec![0.0; p];
    let mut beta = vec![0.0; p];
    for _ in 0..200 {
        let ua = u1(&alpha, &t.a, &t.b, t.n);
        let ub = u2(&beta, &t.b, family, t.n);
        let mut ja = DenseMatrix::zeros(p, p);
        let mut jb = DenseMatrix::zeros(p, p);
        for x in t.b.covariates().row_iter() {
            let wa = 1.0 / expit(dot(x, &alpha)) - 1.0;
            let wb = eval_link(family, dot(x, &beta)).d1;
            for r in 0..p {
                for c in 0..p {
                    ja[(r, c)] += wa * x[r] * x[c] / t.n;
                    jb[(r, c)] += wb * x[r] * x[c] / t.n;
                }
            }
        }
        let da = solve_linear(&ja, &ua).unwrap();
        let db = solve_linear(&jb, &ub).unwrap();
        for j in 0..p {
            alpha[j] += da[j];
            beta[j] += db[j];
        }
        if da.norm_inf().max(db.norm_inf()) < 1e-14 {
            break;
        }
    }
    (alpha, beta)
}

fn one_column_pairs(rows: &[[f64; 2]]) -> DenseMatrix {
    DenseMatrix::new(rows.len(), 2, rows.concat()).unwrap()
}

fn oracle_suite() -> Outcome {
    let mut coef_gap = 0.0f64;
    let cases: [(OutcomeFamily, &[f64], &[f64]); 4] = [
        (LINEAR, &[-1.5, 0.6], &[1.0, 2.0]),
        (LINEAR, &[-1.5, 0.6, 0.4], &[1.0, 1.0, -0.5]),
        (LOGIT, &[-1.2, 0.3], &[0.2, -0.8]),
        (LOGIT, &[-1.5, 0.6, 0.4], &[0.3, 1.0, -0.5]),
    ];
    for (k, (family, alpha, beta)) in cases.into_iter().enumerate() {
        let t = toy(100 + k as u64, 3000, alpha, beta, family, 400.0);
        let fit = solve_penalized(&t.a, &t.b, &ModelSpec::new(family, t.n), 0.0, 0.0, &SolverControls::default())
            .unwrap();
        let (oa, ob) = dense_newton(&t, family);
        for j in 0..alpha.len() {
            coef_gap = coef_gap.max((fit.alpha[j] - oa[j]).abs()).max((fit.beta[j] - ob[j]).abs());
        }
    }

    // N = 3. A: x = (1, 2), π = 1/2. B: x = (1, 0), (1, 1); α = 0 so π_B = 1/2.
    let a = ProbabilitySample::new(one_column_pairs(&[[1.0, 2.0]]), vec![0.5].into()).unwrap();
    let xb = one_column_pairs(&[[1.0, 0.0], [1.0, 1.0]]);
    let b_lin = NonProbabilitySample::new(xb.clone(), vec![3.0, 1.0].into()).unwrap();
    let b_bin = NonProbabilitySample::new(xb, vec![1.0, 0.0].into()).unwrap();
    let hand: [(&NonProbabilitySample, OutcomeFamily, [f64; 2], [f64; 4]); 2] = [
        // m = (1, 2): J1 = {2(1,0) − (1,1)}/3, J2 = {2(1,0) + 2(1,1) − 2(1,2)}/3.
        (&b_lin, LINEAR, [1.0, 1.0], [1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0, -2.0 / 3.0]),
        // m = 1/2, m' = 1/4: J1 = {½(1,0) − ½(1,1)}/3, J2 = ¼ of the linear J2.
        (&b_bin, LOGIT, [0.0, 0.0], [0.0, -1.0 / 6.0, 1.0 / 6.0, -1.0 / 6.0]),
    ];
    let mut sum_gap = 0.0f64;
    for (b, family, beta, expected) in hand {
        let j = joint_ee(&[0.0, 0.0], &beta, &a, b, &[0, 1], family, 3.0).unwrap();
        for (got, want) in j.iter().zip(expected) {
            sum_gap = sum_gap.max((got - want).abs());
        }
    }
    outcome(
        coef_gap < 1e-6 && sum_gap < 1e-12,
        format!("unpenalized fit vs dense Newton {coef_gap:.1e} (limit 1e-6), N = 3 joint equations vs hand sums {sum_gap:.1e} (limit 1e-12)"),
    )
}

// 4-6 -------------------------------------------------------------------

type Scenarios = BTreeMap<(&'static str, &'static str), Result<McMetrics, String>>;

const LABELS: [(&str, OutcomeModel, SelectionModel); 4] = [
    ("i", OutcomeModel::I, SelectionModel::I),
    ("ii", OutcomeModel::II, SelectionModel::I),
    ("iii", OutcomeModel::I, SelectionModel::II),
    ("iv", OutcomeModel::II, SelectionModel::II),
];

fn monte_carlo(runs: usize) -> Scenarios {
    let mut out = BTreeMap::new();
    for (fname, family) in [("continuous", LINEAR), ("binary", LOGIT)] {
        for (label, om, psm) in LABELS {
            let mut cfg = ScenarioConfig::new(family, om, psm);
            cfg.runs = runs;
            let t = Instant::now();
            let res = run_mc(&cfg).map_err(|e| e.to_string()).and_then(|r| {
                if r.metrics.is_valid() {
                    Ok(r.metrics)
                } else {
                    Err(format!("{} of {runs} runs failed", r.metrics.failures))
                }
            });
            eprintln!("  scenario ({label}) {fname}: {:.0} s", t.elapsed().as_secs_f64());
            if let Ok(m) = &res {
                eprintln!("    {} of {runs} runs failed", m.failures);
                for e in &m.estimators {
                    eprintln!(
                        "    {:6} bias {:+.4} (mcse {:.4}) sd {:.4}{}",
                        e.estimator,
                        e.bias,
                        e.bias_mcse,
                        e.sd,
                        e.coverage_pct.map_or_else(String::new, |c| format!(" coverage {c:.1}%"))
                    );
                }
            }
            out.insert((label, fname), res);
        }
    }
    out
}

fn get<'a>(mc: &'a Scenarios, label: &'static str, family: &'static str) -> Result<&'a McMetrics, String> {
    mc[&(label, family)]
        .as_ref()
        .map_err(|e| format!("scenario ({label}) {family}: {e}"))
}

fn table2(mc: &Scenarios) -> Outcome {
    let m = match get(mc, "i", "continuous") {
        Ok(m) => m,
        Err(e) => return outcome(false, e),
    };
    let (a, b) = (m.alpha, m.beta);
    let pass = a.under_pct <= 2.0
        && a.over_pct <= 2.0
        && a.fn_avg <= 0.1
        && a.fp_avg <= 0.1
        && b.under_pct <= 3.0
        && b.fn_avg <= 0.1
        && (b.fp_avg - 1.4).abs() <= 1.0;
    outcome(
        pass,
        format!(
            "alpha Under {:.1}% Over {:.1}% FN {:.2} FP {:.2}; beta Under {:.1}% Over {:.1}% FN {:.2} FP {:.2}",
            a.under_pct, a.over_pct, a.fn_avg, a.fp_avg, b.under_pct, b.over_pct, b.fn_avg, b.fp_avg
        ),
    )
}

fn table3(mc: &Scenarios) -> Outcome {
    let checks: [(&str, &str, f64, f64); 4] = [
        ("i", "continuous", 92.5, 97.5),
        ("ii", "continuous", 92.0, 97.5),
        ("iv", "continuous", f64::NEG_INFINITY, 92.0),
        ("iv", "binary", f64::NEG_INFINITY, 60.0),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, family, lo, hi) in checks {
        match get(mc, label, family) {
            Ok(m) => {
                let c = m.estimator("p-dr").and_then(|e| e.coverage_pct).unwrap_or(f64::NAN);
                let ok = c > lo && c < hi;
                pass &= ok;
                parts.push(format!("({label}) {family} {c:.1}%{}", if ok { "" } else { " out of range" }));
            }
            Err(e) => {
                pass = false;
                parts.push(e);
            }
        }
    }
    outcome(pass, parts.join(", "))
}

fn robustness(mc: &Scenarios) -> Outcome {
    let mut pass = true;
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut check = |label: &'static str, family: &'static str, estimator: &str, biased: bool| {
        checked += 1;
        let ok = match get(mc, label, family) {
            Ok(m) => {
                let e = m.estimator(estimator).expect("known estimator");
                let z = e.bias.abs() / e.bias_mcse;
                let ok = if biased { z > 2.0 } else { z < 2.0 };
                if !ok {
                    failures.push(format!("{estimator} ({label}) {family} |bias|/mcse = {z:.2}"));
                }
                ok
            }
            Err(e) => {
                failures.push(e);
                false
            }
        };
        pass &= ok;
    };
    for family in ["continuous", "binary"] {
        for label in ["i", "ii", "iii"] {
            check(label, family, "p-dr", false);
        }
        for label in ["i", "ii", "iii", "iv"] {
            check(label, family, "naive", true);
        }
        check("ii", family, "p-dr0", true);
    }
    let detail = if failures.is_empty() {
        format!("{checked} bias checks hold")
    } else {
        format!("{} of {checked} bias checks fail: {}", failures.len(), failures.join("; "))
    };
    outcome(pass, detail)
}

// 7 ---------------------------------------------------------------------

fn simulate_into(out: &Path, threads: usize) -> Result<(Vec<u8>, Vec<u8>), String> {
    let flags = Flags {
        scenario: Some("om2xpsm2".into()),
        family: Some("logit".into()),
        runs: Some(6),
        seed: Some(31),
        threads: Some(threads),
        out: Some(out.to_path_buf()),
        ..Flags::default()
    };
    let cfg = RunConfig::resolve(Command::Simulate, flags).map_err(|e| e.to_string())?;
    run(&cfg).map_err(|e| e.to_string())?;
    let read = |f: &str| fs::read(out.join(f)).map_err(|e| e.to_string());
    Ok((read("mc_metrics.csv")?, read("mc_runs.csv")?))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let attempts: Vec<_> = [(1, "a"), (1, "b"), (4, "c")]
        .into_iter()
        .map(|(threads, name)| simulate_into(&dir.path().join(name), threads))
        .collect();
    match attempts.into_iter().collect::<Result<Vec<_>, _>>() {
        Ok(files) => {
            let metrics_same = files.iter().all(|f| f.0 == files[0].0);
            let runs_same = files.iter().all(|f| f.1 == files[0].1);
            outcome(
                metrics_same && runs_same,
                format!(
                    "mc_metrics.csv identical: {metrics_same}, mc_runs.csv identical: {runs_same} (two runs on 1 thread, one on 4)"
                ),
            )
        }
        Err(e) => outcome(false, e),
    }
}

// 8 ---------------------------------------------------------------------

const APP_NAMES: [&str; 16] = [
    "age", "female", "hispanic", "black", "asian", "other_race", "educ_hs", "educ_some_college",
    "educ_college", "income_k", "married", "employed", "urban", "region_ne", "region_mw", "region_s",
];

struct AppData {
    a: ProbabilitySample,
    b: NonProbabilitySample,
    n: usize,
}

/// Survey-like data: 16 demographic covariates (two numeric, the rest
/// indicators), a web-panel style non-probability sample that over-selects
/// young, educated, urban units, and a design-weighted probability sample.
fn application_like(family: OutcomeFamily, seed: u64) -> AppData {
    let n = 40_000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut xa, mut pa, mut xb, mut yb) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let bern = |rng: &mut ChaCha8Rng, p: f64| f64::from(u8::from(rng.random::<f64>() < p));
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let age = (48.0 + 17.0 * z).clamp(18.0, 90.0);
        let female = bern(&mut rng, 0.52);
        let race: f64 = rng.random();
        let (hisp, black, asian, other) = (
            f64::from(u8::from(race < 0.16)),
            f64::from(u8::from((0.16..0.28).contains(&race))),
            f64::from(u8::from((0.28..0.34).contains(&race))),
            f64::from(u8::from((0.34..0.38).contains(&race))),
        );
        let e: f64 = rng.random::<f64>() + 0.1 * z;
        let (hs, some, coll) = (
            f64::from(u8::from((0.1..0.38).contains(&e))),
            f64::from(u8::from((0.38..0.66).contains(&e))),
            f64::from(u8::from(e >= 0.66)),
        );
        let income = (25.0 + 40.0 * coll + 15.0 * some + 20.0 * rng.sample::<f64, _>(StandardNormal)).max(0.0);
        let married = bern(&mut rng, 0.3 + 0.004 * (age - 18.0).min(50.0));
        let employed = bern(&mut rng, if age < 65.0 { 0.7 } else { 0.2 });
        let urban = bern(&mut rng, 0.8);
        let region: f64 = rng.random();
        let (ne, mw, so) = (
            f64::from(u8::from(region < 0.17)),
            f64::from(u8::from((0.17..0.38).contains(&region))),
            f64::from(u8::from((0.38..0.76).contains(&region))),
        );
        let x = vec![
            1.0, age, female, hisp, black, asian, other, hs, some, coll, income, married, employed, urban, ne,
            mw, so,
        ];
        let signal = -0.5 + 0.02 * (age - 48.0) - 0.3 * female + 0.4 * black - 0.5 * coll + 0.01 * (income - 40.0)
            + 0.3 * so;
        let y = match family {
            OutcomeFamily::LinearIdentity => 5.0 + 2.0 * signal + rng.sample::<f64, _>(StandardNormal),
            OutcomeFamily::BinaryLogit => bern(&mut rng, expit(signal)),
        };
        let sel = -2.6 - 0.03 * (age - 48.0) + 0.6 * coll + 0.3 * some + 0.4 * urban - 0.3 * hisp;
        if rng.random::<f64>() < expit(sel) {
            xb.push(x.clone());
            yb.push(y);
        }
        let pi = (0.02 * (1.0 + 0.8 * female + 0.5 * (hisp + black))).min(1.0);
        if rng.random::<f64>() < pi {
            xa.push(x);
            pa.push(pi);
        }
    }
    AppData {
        a: ProbabilitySample::new(matrix(&xa), pa.into()).unwrap(),
        b: NonProbabilitySample::new(matrix(&xb), yb.into()).unwrap(),
        n,
    }
}

const GOLDEN_A: &str = "pi_a,x1,x2\n0.5,1,-2.25\n0.125,0.30000000000000004,1e-300\n1,-0,123456789\n";
const GOLDEN_B: &str = "y,x1,x2\n3.75,0,1\n-1e-7,2.5,-0.1\n";

fn round_trips(dir: &Path) -> Result<(), String> {
    let golden_a = dir.join("golden_a.csv");
    let golden_b = dir.join("golden_b.csv");
    fs::write(&golden_a, GOLDEN_A).unwrap();
    fs::write(&golden_b, GOLDEN_B).unwrap();
    let a = ingest_sample_a(&golden_a).map_err(|e| e.to_string())?;
    let b = ingest_sample_b(&golden_b, LINEAR, Some(&a.names)).map_err(|e| e.to_string())?;
    let again_a = dir.join("again_a.csv");
    let again_b = dir.join("again_b.csv");
    write_sample_a(&again_a, &a.sample, &a.names).map_err(|e| e.to_string())?;
    write_sample_b(&again_b, &b.sample, &b.names).map_err(|e| e.to_string())?;
    if fs::read_to_string(&again_a).unwrap() != GOLDEN_A || fs::read_to_string(&again_b).unwrap() != GOLDEN_B {
        return Err("golden files changed on rewrite".into());
    }
    let names: Vec<String> = APP_NAMES.iter().map(|s| s.to_string()).collect();
    for family in [LINEAR, LOGIT] {
        let d = application_like(family, 7);
        let (pa, pb) = (dir.join("rt_a.csv"), dir.join("rt_b.csv"));
        write_sample_a(&pa, &d.a, &names).map_err(|e| e.to_string())?;
        write_sample_b(&pb, &d.b, &names).map_err(|e| e.to_string())?;
        let ra = ingest_sample_a(&pa).map_err(|e| e.to_string())?;
        let rb = ingest_sample_b(&pb, family, Some(&names)).map_err(|e| e.to_string())?;
        if ra.sample != d.a || rb.sample != d.b {
            return Err(format!("{} sample changed on round trip", family.name()));
        }
    }
    Ok(())
}

fn field(text: &str, name: &str) -> Option<f64> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next()?.split(',').collect();
    let values: Vec<&str> = lines.next()?.split(',').collect();
    values.get(header.iter().position(|h| *h == name)?)?.parse().ok()
}

fn end_to_end(dir: &Path, family: OutcomeFamily) -> Result<String, String> {
    let names: Vec<String> = APP_NAMES.iter().map(|s| s.to_string()).collect();
    let d = application_like(family, 8);
    let (pa, pb) = (dir.join(format!("{}_a.csv", family.name())), dir.join(format!("{}_b.csv", family.name())));
    write_sample_a(&pa, &d.a, &names).map_err(|e| e.to_string())?;
    write_sample_b(&pb, &d.b, &names).map_err(|e| e.to_string())?;
    let out = dir.join(format!("{}_out", family.name()));
    let o = Process::new(env!("CARGO_BIN_EXE_drsel"))
        .args(["estimate", "--sample-a"])
        .arg(&pa)
        .arg("--sample-b")
        .arg(&pb)
        .args(["--population-size", &d.n.to_string(), "--family", family.name(), "--out"])
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!(
            "{} exit {:?}: {}",
            family.name(),
            o.status.code(),
            String::from_utf8_lossy(&o.stderr).trim()
        ));
    }
    let text = fs::read_to_string(out.join("estimate.csv")).map_err(|e| e.to_string())?;
    let get = |k| field(&text, k).ok_or_else(|| format!("estimate.csv lacks {k}"));
    let (mu, se, lo, hi) = (get("mu_hat")?, get("se")?, get("ci_low")?, get("ci_high")?);
    let valid = [mu, se, lo, hi].iter().all(|v| v.is_finite()) && se > 0.0 && lo < mu && mu < hi;
    let in_range = family == LINEAR || (0.0..=1.0).contains(&mu);
    if !(valid && in_range) {
        return Err(format!("{}: invalid interval {mu} ({lo}, {hi}), se {se}", family.name()));
    }
    let selected = fs::read_to_string(out.join("selection.csv"))
        .map_err(|e| e.to_string())?
        .lines()
        .skip(2)
        .filter(|l| l.ends_with(",1"))
        .count();
    Ok(format!(
        "{} {mu:.3} ({lo:.3}, {hi:.3}) with {selected}/16 covariates",
        family.name()
    ))
}

fn pipeline_suite() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    match round_trips(dir.path()) {
        Ok(()) => parts.push("golden and synthetic round trips bit-exact".to_string()),
        Err(e) => {
            pass = false;
            parts.push(e);
        }
    }
    for family in [LINEAR, LOGIT] {
        match end_to_end(dir.path(), family) {
            Ok(s) => parts.push(s),
            Err(e) => {
                pass = false;
                parts.push(e);
            }
        }
    }
    outcome(pass, parts.join("; "))
}
