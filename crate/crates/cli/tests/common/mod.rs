#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use drsel::model::{NonProbabilitySample, OutcomeFamily, ProbabilitySample};
use drsel::simulate::{
    draw_sample_a, draw_sample_b, gen_population, run_rng, OutcomeModel, ScenarioConfig, SelectionModel,
};
use drsel_cli::ingest::{write_sample_a, write_sample_b};

pub struct Synthetic {
    pub a: ProbabilitySample,
    pub b: NonProbabilitySample,
    pub names: Vec<String>,
    pub n: usize,
    pub mu: f64,
}

/// Scenario-(i)-style data with `p - 1` covariates named `x1..`.
pub fn synthetic(family: OutcomeFamily, n: usize, p: usize, target_n_a: f64, seed: u64) -> Synthetic {
    let mut cfg = ScenarioConfig::new(family, OutcomeModel::I, SelectionModel::I);
    cfg.population_size = n;
    cfg.p = p;
    cfg.target_n_a = target_n_a;
    let mut rng = run_rng(seed, 0);
    let pop = gen_population(&cfg, &mut rng);
    let (b, _) = draw_sample_b(&pop, cfg.psm, &mut rng).unwrap();
    let (a, _) = draw_sample_a(&pop, cfg.target_n_a, &mut rng).unwrap();
    Synthetic {
        a,
        b,
        names: (1..p).map(|j| format!("x{j}")).collect(),
        n,
        mu: pop.mean(),
    }
}

impl Synthetic {
    /// Writes `a.csv` and `b.csv` into `dir` and returns their paths.
    pub fn write(&self, dir: &Path) -> (PathBuf, PathBuf) {
        let pa = dir.join("a.csv");
        let pb = dir.join("b.csv");
        write_sample_a(&pa, &self.a, &self.names).unwrap();
        write_sample_b(&pb, &self.b, &self.names).unwrap();
        (pa, pb)
    }
}

pub fn write_file(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn drsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drsel")).args(args).output().unwrap()
}

/// Reads a two-row CSV (header + values) into name/value pairs.
pub fn flat_record(path: &Path) -> Vec<(String, String)> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string);
    let values = lines.next().unwrap().split(',').map(str::to_string);
    header.zip(values).collect()
}

pub fn field(rec: &[(String, String)], name: &str) -> f64 {
    rec.iter()
        .find(|(k, _)| k == name)
        .unwrap_or_else(|| panic!("no field {name}"))
        .1
        .parse()
        .unwrap()
}
