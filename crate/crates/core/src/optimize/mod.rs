//! Kernel-parameter training: leave-one-out synthetic well tests scored by a
//! regularized R² objective and minimized with differential evolution.

mod de;
mod metrics;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use de::{differential_evolution, reflect, DeResult, DeSettings};
pub use metrics::{hist_distance_l1, metrics, r_squared, range_penalty_l2, Metrics};

use crate::domain::{Grid, GridMap, KernelParams, WellRecord};
use crate::error::{Error, Result};
use crate::fusion::{fusion_wells, FusionWell, LogKernels, DEFAULT_R_DR};

/// Search interval `[min, max]` for every kernel parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bounds {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub gamma: [f64; 2],
    pub delta: [f64; 2],
    pub r_d: [f64; 2],
    pub r_g: [f64; 2],
    pub w_s: [f64; 2],
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            alpha: [0.5, 2.0],
            beta: [1.0, 2.0],
            gamma: [0.01, 2.0],
            delta: [0.05, 1.0],
            r_d: [100.0, 300.0],
            r_g: [5.0, 50.0],
            w_s: [0.1, 0.5],
        }
    }
}

impl Bounds {
    pub fn to_array(&self) -> [[f64; 2]; 7] {
        [self.alpha, self.beta, self.gamma, self.delta, self.r_d, self.r_g, self.w_s]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in KernelParams::NAMES.iter().zip(self.to_array()) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidConfig(format!("bounds for {name} must satisfy min < max")));
            }
            if lo <= 0.0 {
                return Err(Error::InvalidConfig(format!("bounds for {name} must be positive")));
            }
        }
        Ok(())
    }

    /// Box for the search vector; `w_s` is the seventh coordinate only when
    /// seismic takes part.
    pub fn search_box(&self, with_seismic: bool) -> Vec<(f64, f64)> {
        let n = if with_seismic { 7 } else { 6 };
        self.to_array()[..n].iter().map(|b| (b[0], b[1])).collect()
    }

    pub fn contains(&self, p: &KernelParams, with_seismic: bool) -> bool {
        let v = p.to_array();
        self.search_box(with_seismic).iter().zip(v).all(|(&(lo, hi), x)| x >= lo && x <= hi)
    }
}

fn params_from_vector(x: &[f64]) -> KernelParams {
    KernelParams {
        alpha: x[0],
        beta: x[1],
        gamma: x[2],
        delta: x[3],
        r_d: x[4],
        r_g: x[5],
        w_s: x.get(6).copied().unwrap_or(0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DEConfig {
    pub population: usize,
    pub mutation: f64,
    pub crossover: f64,
    pub generations: usize,
    pub seed: u64,
    pub c1: f64,
    pub c2: f64,
    pub bins: usize,
}

impl Default for DEConfig {
    fn default() -> Self {
        Self { population: 30, mutation: 0.7, crossover: 0.9, generations: 100, seed: 42, c1: 0.1, c2: 0.1, bins: 20 }
    }
}

impl DEConfig {
    pub fn settings(&self) -> DeSettings {
        DeSettings {
            population: self.population,
            mutation: self.mutation,
            crossover: self.crossover,
            generations: self.generations,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.settings().validate()?;
        if self.bins < 2 {
            return Err(Error::InvalidConfig("histogram bins must be >= 2".into()));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::InvalidConfig("regularization coefficients must be >= 0".into()));
        }
        Ok(())
    }
}

/// One scored parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvEval {
    pub f: f64,
    pub r2: f64,
    pub l1: f64,
    pub l2: f64,
    /// Synthetic tests on the all-wells map.
    pub k: Vec<f64>,
    /// Synthetic tests on the map fused without the well itself.
    pub k_hat: Vec<f64>,
}

/// Precomputed geometry for repeated leave-one-out evaluation on a fixed
/// well set and grid. One evaluation costs O(wells * grid points).
#[derive(Debug, Clone)]
pub struct LoocvProblem {
    wells: Vec<FusionWell>,
    grid: Arc<Grid>,
    seismic: Option<Vec<f64>>,
    r_dr: f64,
    /// `ln |r_j - r_i|`, laid out `[j * n + i]`.
    ln_d: Vec<f64>,
    /// Synthetic-test weights `exp(-|r_j - r_i| / r_dr)`, same layout.
    syn_w: Vec<f64>,
    syn_den: Vec<f64>,
}

impl LoocvProblem {
    pub fn new(wells: Vec<FusionWell>, grid: Arc<Grid>, seismic: Option<&GridMap>, r_dr: f64) -> Result<Self> {
        if wells.len() < 2 {
            return Err(Error::ConstantSyntheticTests);
        }
        if wells.len() < 3 {
            return Err(Error::TooFewWells { found: wells.len(), required: 3 });
        }
        if !(r_dr > 0.0) {
            return Err(Error::NonPositive(r_dr));
        }
        if let Some(s) = seismic {
            if s.len() != grid.len() || **s.grid() != *grid {
                return Err(Error::GridMismatch);
            }
        }
        let n = wells.len();
        let g = grid.len();
        let mut ln_d = Vec::with_capacity(n * g);
        let mut syn_w = Vec::with_capacity(n * g);
        let mut syn_den = vec![0.0; n];
        for p in grid.points() {
            for (i, w) in wells.iter().enumerate() {
                let d = p.distance(&w.position);
                ln_d.push(d.ln());
                let sw = (-d / r_dr).exp();
                syn_w.push(sw);
                syn_den[i] += sw;
            }
        }
        Ok(Self { wells, grid, seismic: seismic.map(|s| s.values().to_vec()), r_dr, ln_d, syn_w, syn_den })
    }

    pub fn from_records(
        records: &[WellRecord],
        grid: Arc<Grid>,
        seismic: Option<&GridMap>,
        r_dr: f64,
    ) -> Result<Self> {
        Self::new(fusion_wells(records)?, grid, seismic, r_dr)
    }

    pub fn wells(&self) -> &[FusionWell] {
        &self.wells
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn has_seismic(&self) -> bool {
        self.seismic.is_some()
    }

    pub fn r_dr(&self) -> f64 {
        self.r_dr
    }

    /// Synthetic well tests `(k, k_hat)` on the all-wells map and on each
    /// leave-one-out map.
    pub fn synthetic_tests(&self, params: &KernelParams) -> Result<(Vec<f64>, Vec<f64>)> {
        params.validate()?;
        let n = self.wells.len();
        let lk = LogKernels::new(params);
        let seismic = self.seismic.as_deref().filter(|_| params.w_s > 0.0);
        let (seis_num_w, seis_den) = match seismic {
            Some(_) => (params.w_s, params.w_s),
            None => (0.0, 0.0),
        };

        // per-well terms and their prefix/suffix sums, reused across points
        let mut t = vec![[0.0f64; 4]; n];
        let mut pre = vec![[0.0f64; 4]; n + 1];
        let mut suf = vec![[0.0f64; 4]; n + 1];
        let mut acc_full = vec![0.0; n];
        let mut acc_loo = vec![0.0; n];

        for j in 0..self.grid.len() {
            let row = j * n;
            for (i, w) in self.wells.iter().enumerate() {
                let ld = self.ln_d[row + i];
                let (kt, kl) = (
                    w.wt.map_or(0.0, |_| lk.wt(ld)),
                    w.wl.map_or(0.0, |_| lk.wl(ld)),
                );
                t[i] = [kt * w.wt.unwrap_or(0.0), kt, kl * w.wl.unwrap_or(0.0), kl];
            }
            for i in 0..n {
                for c in 0..4 {
                    pre[i + 1][c] = pre[i][c] + t[i][c];
                }
            }
            for i in (0..n).rev() {
                for c in 0..4 {
                    suf[i][c] = t[i][c] + suf[i + 1][c];
                }
            }
            let s = seismic.map_or(0.0, |s| s[j]);
            let full_num = pre[n][0] + pre[n][2] + seis_num_w * s;
            let full_den = pre[n][1] + pre[n][3] + seis_den;
            if full_den == 0.0 {
                return Err(Error::UncoveredGridPoint { index: j });
            }
            let full = full_num / full_den;
            for i in 0..n {
                let w = self.syn_w[row + i];
                acc_full[i] += w * full;
                let num = (pre[i][0] + suf[i + 1][0]) + (pre[i][2] + suf[i + 1][2]) + seis_num_w * s;
                let den = (pre[i][1] + suf[i + 1][1]) + (pre[i][3] + suf[i + 1][3]) + seis_den;
                if den == 0.0 {
                    return Err(Error::UncoveredGridPoint { index: j });
                }
                acc_loo[i] += w * (num / den);
            }
        }
        let k = acc_full.iter().zip(&self.syn_den).map(|(a, d)| a / d).collect();
        let k_hat = acc_loo.iter().zip(&self.syn_den).map(|(a, d)| a / d).collect();
        Ok((k, k_hat))
    }

    pub fn evaluate(&self, params: &KernelParams, c1: f64, c2: f64, bins: usize) -> Result<LoocvEval> {
        let (k, k_hat) = self.synthetic_tests(params)?;
        score(k, k_hat, c1, c2, bins)
    }
}

/// `f = 1 - R²(k, k_hat) + c1 l1 + c2 l2`.
pub fn score(k: Vec<f64>, k_hat: Vec<f64>, c1: f64, c2: f64, bins: usize) -> Result<LoocvEval> {
    let r2 = r_squared(&k, &k_hat).map_err(|e| match e {
        Error::ZeroVariance => Error::ConstantSyntheticTests,
        e => e,
    })?;
    let l1 = hist_distance_l1(&k, &k_hat, bins);
    let l2 = range_penalty_l2(&k, &k_hat)?;
    let f = 1.0 - r2 + c1 * l1 + c2 * l2;
    if !f.is_finite() {
        return Err(Error::NumericalBlowUp);
    }
    Ok(LoocvEval { f, r2, l1, l2, k, k_hat })
}

/// Regularized LOOCV objective for one parameter set.
pub fn loocv_objective(
    params: &KernelParams,
    wells: &[WellRecord],
    grid: &Arc<Grid>,
    seismic_map: Option<&GridMap>,
    config: &DEConfig,
) -> Result<f64> {
    let problem = LoocvProblem::from_records(wells, grid.clone(), seismic_map, DEFAULT_R_DR)?;
    Ok(problem.evaluate(params, config.c1, config.c2, config.bins)?.f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOutcome {
    pub params: KernelParams,
    pub best_f: f64,
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub eval: LoocvEval,
}

/// Runs differential evolution on the LOOCV objective. Without seismic the
/// search covers six parameters and the returned `w_s` is 0.
pub fn optimize_kernel(
    problem: &LoocvProblem,
    bounds: &Bounds,
    config: &DEConfig,
    warm_start: Option<&KernelParams>,
) -> Result<OptimizeOutcome> {
    bounds.validate()?;
    config.validate()?;
    let with_seismic = problem.has_seismic();
    let boxes = bounds.search_box(with_seismic);
    let seed_point: Option<Vec<f64>> = warm_start.map(|p| p.to_array()[..boxes.len()].to_vec());
    let objective =
        |x: &[f64]| problem.evaluate(&params_from_vector(x), config.c1, config.c2, config.bins).map(|e| e.f);
    let result = differential_evolution(objective, &boxes, &config.settings(), seed_point.as_deref())?;
    let params = params_from_vector(&result.best);
    let eval = problem.evaluate(&params, config.c1, config.c2, config.bins)?;
    Ok(OptimizeOutcome {
        params,
        best_f: result.best_f,
        history: result.history,
        evaluations: result.evaluations,
        eval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GridSpec, MapKind, Point, Rect};
    use crate::fusion::{fuse_sources, synthetic_well_test};

    fn grid4() -> Arc<Grid> {
        Arc::new(Grid::build(GridSpec { bounds: Rect::new(0.0, 300.0, 0.0, 300.0), spacing: 100.0, boundary: None }).unwrap())
    }

    fn wells5() -> Vec<FusionWell> {
        let w = |x, y, wt: Option<f64>, wl: Option<f64>| FusionWell { position: Point::new(x, y), wt, wl };
        vec![
            w(10.0, 20.0, Some(1.2), Some(1.0)),
            w(250.0, 40.0, Some(2.1), None),
            w(130.0, 160.0, None, Some(1.7)),
            w(60.0, 280.0, Some(0.4), Some(0.6)),
            w(290.0, 290.0, Some(2.9), Some(2.5)),
        ]
    }

    fn params() -> KernelParams {
        KernelParams { alpha: 1.3, beta: 1.4, gamma: 0.3, delta: 0.6, r_d: 180.0, r_g: 25.0, w_s: 0.2 }
    }

    /// Straight-line Algorithm 1: every map fused from scratch.
    fn brute_force(wells: &[FusionWell], grid: &Arc<Grid>, seismic: Option<&GridMap>, p: &KernelParams) -> (Vec<f64>, Vec<f64>) {
        let full = fuse_sources(wells, seismic, p, grid).unwrap().perm_map;
        let mut k = Vec::new();
        let mut k_hat = Vec::new();
        for i in 0..wells.len() {
            let mut rest = wells.to_vec();
            rest.remove(i);
            let loo = fuse_sources(&rest, seismic, p, grid).unwrap().perm_map;
            k.push(synthetic_well_test(&full, &wells[i].position, DEFAULT_R_DR));
            k_hat.push(synthetic_well_test(&loo, &wells[i].position, DEFAULT_R_DR));
        }
        (k, k_hat)
    }

    #[test]
    fn matches_straight_line_reimplementation() {
        let g = grid4();
        let problem = LoocvProblem::new(wells5(), g.clone(), None, DEFAULT_R_DR).unwrap();
        let (k, k_hat) = problem.synthetic_tests(&params()).unwrap();
        let (bk, bk_hat) = brute_force(&wells5(), &g, None, &params());
        for i in 0..5 {
            assert!((k[i] - bk[i]).abs() < 1e-12);
            assert!((k_hat[i] - bk_hat[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_with_seismic() {
        let g = grid4();
        let vals: Vec<f64> = (0..g.len()).map(|j| 0.5 + 0.1 * j as f64).collect();
        let s = GridMap::new(g.clone(), vals, MapKind::Permeability).unwrap();
        let problem = LoocvProblem::new(wells5(), g.clone(), Some(&s), DEFAULT_R_DR).unwrap();
        let (k, k_hat) = problem.synthetic_tests(&params()).unwrap();
        let (bk, bk_hat) = brute_force(&wells5(), &g, Some(&s), &params());
        for i in 0..5 {
            assert!((k[i] - bk[i]).abs() < 1e-12);
            assert!((k_hat[i] - bk_hat[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn invariant_to_well_order() {
        let g = grid4();
        let mut rev = wells5();
        rev.reverse();
        let a = LoocvProblem::new(wells5(), g.clone(), None, DEFAULT_R_DR).unwrap().evaluate(&params(), 0.1, 0.1, 20).unwrap();
        let b = LoocvProblem::new(rev, g, None, DEFAULT_R_DR).unwrap().evaluate(&params(), 0.1, 0.1, 20).unwrap();
        assert!((a.f - b.f).abs() <= 1e-12 * a.f.abs().max(1.0));
    }

    #[test]
    fn score_examples() {
        let k = vec![1.0, 2.0, 3.0];
        assert_eq!(score(k.clone(), k.clone(), 0.1, 0.1, 20).unwrap().f, 0.0);
        let e = score(k.clone(), vec![2.0; 3], 0.0, 0.0, 20).unwrap();
        assert!((e.f - 1.0).abs() < 1e-15);
        assert!(matches!(score(vec![1.0; 3], k, 0.1, 0.1, 20), Err(Error::ConstantSyntheticTests)));
    }

    #[test]
    fn too_few_wells() {
        let g = grid4();
        let w = wells5();
        assert!(matches!(LoocvProblem::new(w[..1].to_vec(), g.clone(), None, 250.0), Err(Error::ConstantSyntheticTests)));
        assert!(matches!(LoocvProblem::new(w[..2].to_vec(), g, None, 250.0), Err(Error::TooFewWells { .. })));
    }

    #[test]
    fn bounds_defaults_and_search_box() {
        let b = Bounds::default();
        b.validate().unwrap();
        assert_eq!(b.search_box(false).len(), 6);
        assert_eq!(b.search_box(true)[6], (0.1, 0.5));
        let bad = Bounds { r_d: [300.0, 100.0], ..b };
        assert!(bad.validate().is_err());
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(serde_json::from_str::<Bounds>(&json).unwrap(), b);
    }

    #[test]
    fn optimizer_runs_pure_and_stays_in_bounds() {
        let g = grid4();
        let problem = LoocvProblem::new(wells5(), g, None, DEFAULT_R_DR).unwrap();
        let cfg = DEConfig { population: 8, generations: 5, ..DEConfig::default() };
        let out = optimize_kernel(&problem, &Bounds::default(), &cfg, None).unwrap();
        assert_eq!(out.params.w_s, 0.0);
        assert!(Bounds::default().contains(&out.params, false));
        assert_eq!(out.history.len(), 6);
        assert!((out.eval.f - out.best_f).abs() < 1e-15);
        let again = optimize_kernel(&problem, &Bounds::default(), &cfg, None).unwrap();
        assert_eq!(out, again);
    }
}
