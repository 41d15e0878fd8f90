//! DE/rand/1/bin differential evolution over a box.
//!
//! Trial vectors for a whole generation are drawn before any of them is
//! evaluated, so objective evaluation can run in parallel without touching
//! the random stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeSettings {
    pub population: usize,
    pub mutation: f64,
    pub crossover: f64,
    pub generations: usize,
    pub seed: u64,
}

impl DeSettings {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(Error::InvalidConfig("population must be >= 4".into()));
        }
        if !(self.mutation > 0.0 && self.mutation <= 2.0) {
            return Err(Error::InvalidConfig("mutation factor must be in (0, 2]".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(Error::InvalidConfig("crossover rate must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub best: Vec<f64>,
    pub best_f: f64,
    /// Best objective after initialization and after every generation.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

/// Folds `v` back into `[lo, hi]` by mirroring at the bounds.
pub fn reflect(v: f64, lo: f64, hi: f64) -> f64 {
    if v >= lo && v <= hi {
        return v;
    }
    let w = hi - lo;
    let mut t = (v - lo).rem_euclid(2.0 * w);
    if t > w {
        t = 2.0 * w - t;
    }
    (lo + t).clamp(lo, hi)
}

fn evaluate<F>(objective: &F, xs: &[Vec<f64>]) -> Vec<Result<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    xs.par_iter()
        .map(|x| objective(x).and_then(|f| if f.is_nan() { Err(Error::NumericalBlowUp) } else { Ok(f) }))
        .collect()
}

/// Minimizes `objective` within `bounds`. Candidates whose evaluation fails
/// are ranked as `+inf`. `seed_point`, when given, replaces the first
/// initial candidate.
pub fn differential_evolution<F>(
    objective: F,
    bounds: &[(f64, f64)],
    settings: &DeSettings,
    seed_point: Option<&[f64]>,
) -> Result<DeResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    settings.validate()?;
    if bounds.is_empty() {
        return Err(Error::InvalidConfig("empty bounds".into()));
    }
    if let Some((i, _)) = bounds.iter().enumerate().find(|(_, (lo, hi))| !(lo < hi)) {
        return Err(Error::InvalidConfig(format!("bounds for dimension {i} must satisfy min < max")));
    }
    let dim = bounds.len();
    let np = settings.population;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);

    let mut pop: Vec<Vec<f64>> =
        (0..np).map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()).collect();
    if let Some(x0) = seed_point {
        if x0.len() != dim {
            return Err(Error::LengthMismatch(x0.len(), dim));
        }
        pop[0] = x0.iter().zip(bounds).map(|(v, &(lo, hi))| v.clamp(lo, hi)).collect();
    }

    let results = evaluate(&objective, &pop);
    let mut evaluations = np;
    if results.iter().all(|r| r.is_err()) {
        let last = results.into_iter().last().and_then(|r| r.err()).map(|e| e.to_string()).unwrap_or_default();
        return Err(Error::AllCandidatesFailed(last));
    }
    let mut fitness: Vec<f64> = results.into_iter().map(|r| r.unwrap_or(f64::INFINITY)).collect();

    let best_of = |fitness: &[f64]| {
        fitness.iter().enumerate().fold((0usize, f64::INFINITY), |b, (i, &f)| if f < b.1 { (i, f) } else { b })
    };
    let mut history = Vec::with_capacity(settings.generations + 1);
    history.push(best_of(&fitness).1);

    for _ in 0..settings.generations {
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let mut pick = |exclude: &[usize]| loop {
                    let r = rng.random_range(0..np);
                    if r != i && !exclude.contains(&r) {
                        break r;
                    }
                };
                let r1 = pick(&[]);
                let r2 = pick(&[r1]);
                let r3 = pick(&[r1, r2]);
                let j_rand = rng.random_range(0..dim);
                (0..dim)
                    .map(|j| {
                        let cross = rng.random::<f64>() < settings.crossover || j == j_rand;
                        if cross {
                            let v = pop[r1][j] + settings.mutation * (pop[r2][j] - pop[r3][j]);
                            reflect(v, bounds[j].0, bounds[j].1)
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let scores = evaluate(&objective, &trials);
        evaluations += np;
        for (i, (trial, score)) in trials.into_iter().zip(scores).enumerate() {
            let f = score.unwrap_or(f64::INFINITY);
            if f <= fitness[i] {
                pop[i] = trial;
                fitness[i] = f;
            }
        }
        history.push(best_of(&fitness).1);
    }

    let (bi, bf) = best_of(&fitness);
    Ok(DeResult { best: pop[bi].clone(), best_f: bf, history, evaluations })
}
