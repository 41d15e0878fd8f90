use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cube::{extract_cube_shaped, CoordFrame, TrainSample};
use super::net::{Mode, SeismicNet};
use crate::domain::{Grid, GridMap, MapKind};
use crate::error::{Error, Result};
use crate::ingest::SeismicVolume;

/// How validation samples are held out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Holdout {
    /// Random fraction of samples.
    Random,
    /// Whole cells of a `blocks x blocks` partition of the coordinate box,
    /// drawn at random until the fraction is reached.
    SpatialBlocks { blocks: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// RMSProp decay of the squared-gradient average.
    pub decay: f64,
    pub epsilon: f64,
    pub validation_fraction: f64,
    pub holdout: Holdout,
    pub seed: u64,
    /// Stop once the epoch training loss falls below this fraction of the
    /// first epoch's loss.
    pub stop_ratio: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            decay: 0.9,
            epsilon: 1e-8,
            validation_fraction: 0.2,
            holdout: Holdout::Random,
            seed: 7,
            stop_ratio: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean minibatch loss per epoch (standardized targets).
    pub train_loss: Vec<f64>,
    /// Inference-mode loss on the held-out samples; empty without any.
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub n_train: usize,
    pub n_val: usize,
}

fn split(samples: &[TrainSample], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let n = samples.len();
    let n_val = if n < 2 { 0 } else { ((n as f64 * cfg.validation_fraction).ceil() as usize).min(n - 1) };
    if n_val == 0 {
        return ((0..n).collect(), Vec::new());
    }
    match cfg.holdout {
        Holdout::Random => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            let (val, train) = idx.split_at(n_val);
            let (mut train, mut val) = (train.to_vec(), val.to_vec());
            train.sort_unstable();
            val.sort_unstable();
            (train, val)
        }
        Holdout::SpatialBlocks { blocks } => {
            let b = blocks.max(1);
            let cell = |v: f64| (((v + 1.0) / 2.0 * b as f64).floor() as usize).min(b - 1);
            let mut cells: Vec<usize> = (0..b * b).collect();
            cells.shuffle(rng);
            let mut held = vec![false; b * b];
            let mut count = 0;
            let members = |c: usize| samples.iter().filter(|s| cell(s.coords[0]) * b + cell(s.coords[1]) == c).count();
            for c in cells {
                if count >= n_val {
                    break;
                }
                let m = members(c);
                if count + m < n {
                    held[c] = true;
                    count += m;
                }
            }
            (0..n).partition(|&i| !held[cell(samples[i].coords[0]) * b + cell(samples[i].coords[1])])
        }
    }
}

fn batch<'a>(samples: &'a [TrainSample], idx: &[usize], net: &SeismicNet) -> (Vec<&'a [f64]>, Vec<[f64; 2]>, Vec<f64>) {
    let cubes = idx.iter().map(|&i| samples[i].cube.data.as_slice()).collect();
    let coords = idx.iter().map(|&i| samples[i].coords).collect();
    let targets = idx.iter().map(|&i| (samples[i].target - net.target_mean) / net.target_sd).collect();
    (cubes, coords, targets)
}

/// Loss on `idx` in inference mode, evaluated in chunks.
fn eval_loss(net: &SeismicNet, samples: &[TrainSample], idx: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in idx.chunks(64) {
        let (c, x, t) = batch(samples, chunk, net);
        total += net.loss(&c, &x, &t, Mode::Inference)? * chunk.len() as f64;
    }
    Ok(total / idx.len() as f64)
}

/// Trains in place with RMSProp on mean squared error of standardized
/// targets and restores the parameters of the best validation epoch.
pub fn train(net: &mut SeismicNet, samples: &[TrainSample], cfg: &TrainConfig) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.validation_fraction) || cfg.learning_rate < 0.0 {
        return Err(Error::InvalidConfig("invalid training settings".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.cube.data.len() != net.input_len()) {
        return Err(Error::SizeMismatch { expected: net.input_len(), actual: s.cube.data.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut train_idx, val_idx) = split(samples, cfg, &mut rng);

    let targets: Vec<f64> = train_idx.iter().map(|&i| samples[i].target).collect();
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let sd = (targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / targets.len() as f64).sqrt();
    net.target_mean = mean;
    net.target_sd = if sd > 0.0 { sd } else { 1.0 };

    let mut sq = vec![0.0; net.params().len()];
    let mut report = TrainReport { train_loss: Vec::new(), val_loss: Vec::new(), best_epoch: 0, n_train: train_idx.len(), n_val: val_idx.len() };
    let mut best = (f64::INFINITY, net.params().to_vec(), net.running_stats().to_vec());

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            let (c, x, t) = batch(samples, chunk, net);
            let (loss, grads, cache) = match net.loss_and_grad(&c, &x, &t, Mode::Train) {
                Ok(v) => v,
                Err(Error::NumericalBlowUp) => return Err(Error::Diverged(epoch)),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged(epoch));
            }
            let params = net.params_mut();
            for ((p, g), s) in params.iter_mut().zip(&grads).zip(sq.iter_mut()) {
                *s = cfg.decay * *s + (1.0 - cfg.decay) * g * g;
                *p -= cfg.learning_rate * g / (s.sqrt() + cfg.epsilon);
            }
            net.update_running_stats(&cache);
            total += loss * chunk.len() as f64;
        }
        let epoch_loss = total / train_idx.len() as f64;
        report.train_loss.push(epoch_loss);
        let score = if val_idx.is_empty() {
            epoch_loss
        } else {
            let v = eval_loss(net, samples, &val_idx).map_err(|_| Error::Diverged(epoch))?;
            report.val_loss.push(v);
            v
        };
        if !score.is_finite() {
            return Err(Error::Diverged(epoch));
        }
        if score < best.0 {
            best = (score, net.params().to_vec(), net.running_stats().to_vec());
            report.best_epoch = epoch;
        }
        if let Some(r) = cfg.stop_ratio {
            if epoch_loss < r * report.train_loss[0] {
                break;
            }
        }
    }
    if best.0.is_finite() {
        net.set_state(&best.1, &best.2);
    }
    Ok(report)
}

/// Largest relative difference `|a - n| / max(|a|, |n|, 1e-6)` between
/// analytic and central-difference gradients of the training-mode loss.
/// A step that moves an activation across a ReLU or max-pool switch spoils
/// the difference quotient, so each parameter is scored at two step sizes
/// and keeps the better agreement.
pub fn grad_check(net: &SeismicNet, samples: &[TrainSample]) -> Result<f64> {
    const STEPS: [f64; 2] = [1e-5, 1e-6];
    let idx: Vec<usize> = (0..samples.len()).collect();
    let (c, x, t) = batch(samples, &idx, net);
    let (_, analytic, _) = net.loss_and_grad(&c, &x, &t, Mode::Train)?;
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for (p, a) in analytic.iter().enumerate() {
        let orig = probe.params()[p];
        let mut best = f64::INFINITY;
        for h in STEPS {
            probe.params_mut()[p] = orig + h;
            let up = probe.loss(&c, &x, &t, Mode::Train)?;
            probe.params_mut()[p] = orig - h;
            let down = probe.loss(&c, &x, &t, Mode::Train)?;
            let numeric = (up - down) / (2.0 * h);
            best = best.min((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
        probe.params_mut()[p] = orig;
        worst = worst.max(best);
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
pub struct SeismicPrediction {
    /// log10 mD.
    pub map: GridMap,
    /// Grid indices whose cube could not be extracted; they carry the mean
    /// of the other predictions.
    pub failed: Vec<usize>,
}

pub fn predict_map(net: &SeismicNet, volume: &SeismicVolume, grid: &Arc<Grid>) -> Result<SeismicPrediction> {
    let frame = CoordFrame::from_grid(grid);
    let shape = net.config().input;
    let mut values = vec![f64::NAN; grid.len()];
    let mut failed = Vec::new();
    let points = grid.points();
    for start in (0..points.len()).step_by(256) {
        let end = (start + 256).min(points.len());
        let mut cubes = Vec::new();
        let mut coords = Vec::new();
        let mut at = Vec::new();
        for j in start..end {
            match extract_cube_shaped(volume, &points[j], shape) {
                Ok(c) => {
                    cubes.push(c.data);
                    coords.push(frame.normalize(&points[j]));
                    at.push(j);
                }
                Err(Error::CubeOutOfVolume) => failed.push(j),
                Err(e) => return Err(e),
            }
        }
        if at.is_empty() {
            continue;
        }
        let refs: Vec<&[f64]> = cubes.iter().map(|c| c.as_slice()).collect();
        for chunk in (0..refs.len()).collect::<Vec<_>>().chunks(64) {
            let c: Vec<&[f64]> = chunk.iter().map(|&i| refs[i]).collect();
            let x: Vec<[f64; 2]> = chunk.iter().map(|&i| coords[i]).collect();
            for (&i, v) in chunk.iter().zip(net.predict(&c, &x)?) {
                values[at[i]] = v;
            }
        }
    }
    if failed.len() == grid.len() {
        return Err(Error::NoExtractablePoints);
    }
    let ok: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    let mean = ok.iter().sum::<f64>() / ok.len() as f64;
    for &j in &failed {
        values[j] = mean;
    }
    Ok(SeismicPrediction { map: GridMap::new(grid.clone(), values, MapKind::Permeability)?, failed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Point;
    use crate::seismic::{NetConfig, RmsCube};
    use rand::Rng;

    fn toy_samples(n: usize, shape: [usize; 3], seed: u64) -> Vec<TrainSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let level: f64 = rng.random_range(-1.0..1.0);
                let data = (0..shape.iter().product::<usize>()).map(|_| level + 0.1 * rng.random_range(-1.0..1.0)).collect();
                let coords = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                TrainSample {
                    cube: RmsCube::new(shape, data, (0.0, 0.0, 0.0)).unwrap(),
                    position: Point::new(coords[0], coords[1]),
                    coords,
                    target: 1.5 + level,
                    confidence: 1.0,
                    grid_index: i,
                }
            })
            .collect()
    }

    fn small() -> NetConfig {
        NetConfig { input: [5, 5, 14], channels: vec![3, 4], hidden: vec![6, 5], ..NetConfig::default() }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let net = SeismicNet::new(small(), 21).unwrap();
        let s = toy_samples(3, [5, 5, 14], 2);
        let err = grad_check(&net, &s).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn linear_net_gradients_are_exact() {
        let cfg = NetConfig { input: [3, 3, 4], channels: vec![], hidden: vec![], ..NetConfig::default() };
        let net = SeismicNet::new(cfg, 5).unwrap();
        let s = toy_samples(4, [3, 3, 4], 9);
        let err = grad_check(&net, &s).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn zero_learning_rate_keeps_loss_constant() {
        let mut net = SeismicNet::new(small(), 1).unwrap();
        let s = toy_samples(12, [5, 5, 14], 3);
        let cfg = TrainConfig { epochs: 5, batch_size: 12, learning_rate: 0.0, validation_fraction: 0.0, ..TrainConfig::default() };
        let before = net.params().to_vec();
        let r = train(&mut net, &s, &cfg).unwrap();
        for l in &r.train_loss {
            assert!((l - r.train_loss[0]).abs() <= 1e-12 * r.train_loss[0].abs().max(1.0));
        }
        assert_eq!(net.params(), before.as_slice());
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let s = toy_samples(40, [5, 5, 14], 4);
        let cfg = TrainConfig { epochs: 40, batch_size: 8, learning_rate: 3e-3, ..TrainConfig::default() };
        let mut a = SeismicNet::new(small(), 2).unwrap();
        let mut b = SeismicNet::new(small(), 2).unwrap();
        let ra = train(&mut a, &s, &cfg).unwrap();
        let rb = train(&mut b, &s, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
        assert!(ra.train_loss.last().unwrap() < &(0.5 * ra.train_loss[0]));
        assert_eq!(ra.n_val, 8);
    }

    #[test]
    fn spatial_holdout_takes_whole_cells() {
        let s = toy_samples(60, [5, 5, 14], 6);
        let cfg = TrainConfig { holdout: Holdout::SpatialBlocks { blocks: 3 }, ..TrainConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (train_idx, val_idx) = split(&s, &cfg, &mut rng);
        assert_eq!(train_idx.len() + val_idx.len(), 60);
        assert!(!val_idx.is_empty() && !train_idx.is_empty());
        let cell = |v: f64| (((v + 1.0) / 2.0 * 3.0).floor() as usize).min(2);
        for &v in &val_idx {
            for &t in &train_idx {
                let cv = (cell(s[v].coords[0]), cell(s[v].coords[1]));
                let ct = (cell(s[t].coords[0]), cell(s[t].coords[1]));
                assert_ne!(cv, ct);
            }
        }
    }

    #[test]
    fn empty_training_set() {
        let mut net = SeismicNet::new(small(), 1).unwrap();
        assert!(matches!(train(&mut net, &[], &TrainConfig::default()), Err(Error::EmptyTrainingSet)));
    }
}
