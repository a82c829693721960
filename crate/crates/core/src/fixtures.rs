//! Small synthetic data sets for unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::model::{NonProbabilitySample, OutcomeFamily, ProbabilitySample};
use crate::numerics::{dot, expit, DenseMatrix};

pub(crate) struct Toy {
    pub a: ProbabilitySample,
    pub b: NonProbabilitySample,
    pub n: f64,
}

/// Population of `n` units with `p` columns (intercept first); B drawn with
/// `logit π_B = alpha·x`, A by Poisson sampling with expected size `n_a`,
/// outcomes from `beta·x` through the family's mean plus noise.
pub(crate) fn toy(
    seed: u64,
    n: usize,
    alpha: &[f64],
    beta: &[f64],
    family: OutcomeFamily,
    n_a: f64,
) -> Toy {
    let p = alpha.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xa = Vec::new();
    let mut pa = Vec::new();
    let mut xb = Vec::new();
    let mut yb = Vec::new();
    let rate = n_a / n as f64;
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
        let pi = (rate * (0.5 + x[1].abs())).min(1.0);
        if rng.random::<f64>() < pi {
            xa.push(x);
            pa.push(pi);
        }
    }
    let mat = |rows: &[Vec<f64>]| {
        DenseMatrix::new(rows.len(), p, rows.concat()).expect("finite fixture")
    };
    Toy {
        a: ProbabilitySample::new(mat(&xa), pa.into()).unwrap(),
        b: NonProbabilitySample::new(mat(&xb), yb.into()).unwrap(),
        n: n as f64,
    }
}
