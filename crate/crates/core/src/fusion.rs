//! Source kernels and Nadaraya-Watson fusion of well-test, well-log and
//! seismic permeability into a single log10 map.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Grid, GridMap, KernelParams, MapKind, Point, WellRecord};
use crate::error::{Error, Result};

/// Kernel values below this are treated as exactly zero.
pub const KERNEL_FLOOR: f64 = 1e-300;

/// Default radius of the synthetic well-test averaging kernel (m).
pub const DEFAULT_R_DR: f64 = 250.0;

#[inline]
fn floor(v: f64) -> f64 {
    if v < KERNEL_FLOOR {
        0.0
    } else {
        v
    }
}

/// Well-test kernel `(d/r_d)^alpha * exp(-(d/r_d)^beta)`.
pub fn kernel_wt(distance: f64, params: &KernelParams) -> f64 {
    let u = distance / params.r_d;
    floor(u.powf(params.alpha) * (-u.powf(params.beta)).exp())
}

/// Well-log kernel `gamma * exp(-(d/r_g)^delta)`.
pub fn kernel_wl(distance: f64, params: &KernelParams) -> f64 {
    floor(params.gamma * (-(distance / params.r_g).powf(params.delta)).exp())
}

/// Both well kernels evaluated from `ln(d)`, which the LOOCV objective
/// precomputes once per well/grid pair.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogKernels {
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    ln_rd: f64,
    ln_rg: f64,
}

impl LogKernels {
    pub(crate) fn new(p: &KernelParams) -> Self {
        Self { alpha: p.alpha, beta: p.beta, gamma: p.gamma, delta: p.delta, ln_rd: p.r_d.ln(), ln_rg: p.r_g.ln() }
    }

    #[inline]
    pub(crate) fn wt(&self, ln_d: f64) -> f64 {
        let lu = ln_d - self.ln_rd;
        floor((self.alpha * lu - (self.beta * lu).exp()).exp())
    }

    #[inline]
    pub(crate) fn wl(&self, ln_d: f64) -> f64 {
        floor(self.gamma * (-(self.delta * (ln_d - self.ln_rg)).exp()).exp())
    }
}

/// A well reduced to what fusion needs: position and log10 values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWell {
    pub position: Point,
    pub wt: Option<f64>,
    pub wl: Option<f64>,
}

impl FusionWell {
    pub fn from_record(w: &WellRecord) -> Result<Option<Self>> {
        let log = |v: Option<f64>| -> Result<Option<f64>> {
            v.map(|k| if k > 0.0 { Ok(k.log10()) } else { Err(Error::NonPositive(k)) }).transpose()
        };
        let (wt, wl) = (log(w.fusion_wt())?, log(w.fusion_wl())?);
        Ok((wt.is_some() || wl.is_some()).then_some(Self { position: w.position, wt, wl }))
    }
}

/// Converts records to fusion wells, dropping wells without any value.
pub fn fusion_wells(wells: &[WellRecord]) -> Result<Vec<FusionWell>> {
    Ok(wells.iter().map(FusionWell::from_record).collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

#[derive(Debug, Clone)]
pub struct FusionResult {
    /// log10 mD.
    pub perm_map: GridMap,
    /// Fusion denominator: total kernel weight at each point.
    pub confidence_map: GridMap,
    pub params: KernelParams,
    pub used_wt: bool,
    pub used_wl: bool,
    pub used_seismic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourcesUsed {
    pub well_test: bool,
    pub well_log: bool,
    pub seismic: bool,
}

impl FusionResult {
    pub fn sources(&self) -> SourcesUsed {
        SourcesUsed { well_test: self.used_wt, well_log: self.used_wl, seismic: self.used_seismic }
    }
}

/// Numerator and denominator of the fused estimate at one point. Terms are
/// summed wells-in-order, well-test block first, then well-log, then the
/// seismic term.
#[inline]
fn fuse_point(p: &Point, wells: &[FusionWell], seismic: Option<f64>, params: &KernelParams) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    for w in wells {
        if let Some(k) = w.wt {
            let kw = kernel_wt(p.distance(&w.position), params);
            num += kw * k;
            den += kw;
        }
    }
    for w in wells {
        if let Some(k) = w.wl {
            let kw = kernel_wl(p.distance(&w.position), params);
            num += kw * k;
            den += kw;
        }
    }
    if let Some(s) = seismic {
        num += params.w_s * s;
        den += params.w_s;
    }
    (num, den)
}

/// Fuses already-converted wells. `seismic` holds log10 values per grid
/// point; pass `None` for pure fusion.
pub fn fuse_sources(
    wells: &[FusionWell],
    seismic: Option<&GridMap>,
    params: &KernelParams,
    grid: &Arc<Grid>,
) -> Result<FusionResult> {
    params.validate()?;
    if let Some(s) = seismic {
        if s.len() != grid.len() || (!Arc::ptr_eq(s.grid(), grid) && **s.grid() != **grid) {
            return Err(Error::GridMismatch);
        }
    }
    let use_seismic = seismic.is_some() && params.w_s > 0.0;
    if wells.is_empty() && !use_seismic {
        return Err(Error::TooFewWells { found: 0, required: 1 });
    }
    let seis_vals = seismic.filter(|_| use_seismic).map(|s| s.values());
    let pairs: Vec<(f64, f64)> = grid
        .points()
        .par_iter()
        .enumerate()
        .map(|(j, p)| fuse_point(p, wells, seis_vals.map(|s| s[j]), params))
        .collect();
    if let Some(index) = pairs.iter().position(|(_, den)| *den == 0.0) {
        return Err(Error::UncoveredGridPoint { index });
    }
    let values = pairs.iter().map(|(n, d)| n / d).collect();
    let confidence = pairs.iter().map(|(_, d)| *d).collect();
    Ok(FusionResult {
        perm_map: GridMap::new(grid.clone(), values, MapKind::Permeability)?,
        confidence_map: GridMap::new(grid.clone(), confidence, MapKind::Confidence)?,
        params: *params,
        used_wt: wells.iter().any(|w| w.wt.is_some()),
        used_wl: wells.iter().any(|w| w.wl.is_some()),
        used_seismic: use_seismic,
    })
}

/// Fuses well records (Q-Q transformed well-log values preferred) and an
/// optional seismic map into a log10 permeability map.
pub fn fuse_map(
    wells: &[WellRecord],
    seismic_map: Option<&GridMap>,
    params: &KernelParams,
    grid: &Arc<Grid>,
) -> Result<FusionResult> {
    fuse_sources(&fusion_wells(wells)?, seismic_map, params, grid)
}

/// Exponentially weighted average of a map around `well_position`.
pub fn synthetic_well_test(map: &GridMap, well_position: &Point, r_dr: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (p, v) in map.grid().points().iter().zip(map.values()) {
        let w = (-p.distance(well_position) / r_dr).exp();
        num += w * v;
        den += w;
    }
    num / den
}

/// Synthetic well tests at every well position.
pub fn synthetic_well_tests(map: &GridMap, positions: &[Point], r_dr: f64) -> Vec<f64> {
    positions.iter().map(|p| synthetic_well_test(map, p, r_dr)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GridSpec, Rect};

    fn params() -> KernelParams {
        KernelParams { alpha: 1.0, beta: 1.0, gamma: 0.5, delta: 1.0, r_d: 200.0, r_g: 30.0, w_s: 0.3 }
    }

    fn grid(n: f64, spacing: f64) -> Arc<Grid> {
        Arc::new(Grid::build(GridSpec { bounds: Rect::new(0.0, n, 0.0, n), spacing, boundary: None }).unwrap())
    }

    #[test]
    fn wt_kernel_closed_forms() {
        let p = params();
        assert_eq!(kernel_wt(0.0, &p), 0.0);
        assert!((kernel_wt(p.r_d, &p) - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn wt_kernel_at_complete_fusion_optimum() {
        let p = KernelParams { alpha: 1.99, beta: 1.0, r_d: 299.0, ..params() };
        // (100/299)^1.99 * exp(-100/299), evaluated independently with mpmath at 50 digits
        let expected = 0.080940399688221796_f64;
        assert!((kernel_wt(100.0, &p) - expected).abs() < 1e-15, "{}", kernel_wt(100.0, &p));
    }

    #[test]
    fn wl_kernel_closed_forms() {
        let p = params();
        assert_eq!(kernel_wl(0.0, &p), p.gamma);
        assert!((kernel_wl(p.r_g, &p) - p.gamma * (-1f64).exp()).abs() < 1e-15);
        let q = KernelParams { gamma: 0.12, r_g: 15.6, delta: 0.73, ..p };
        // 0.12 * exp(-(50/15.6)^0.73), mpmath at 50 digits
        let expected = 0.011556122453146950_f64;
        assert!((kernel_wl(50.0, &q) - expected).abs() < 1e-15, "{}", kernel_wl(50.0, &q));
    }

    #[test]
    fn log_kernels_agree_with_direct_forms() {
        let p = KernelParams { alpha: 1.37, beta: 1.8, gamma: 0.7, delta: 0.33, r_d: 180.0, r_g: 12.0, w_s: 0.2 };
        let lk = LogKernels::new(&p);
        assert_eq!(lk.wt(f64::NEG_INFINITY), 0.0);
        assert_eq!(lk.wl(f64::NEG_INFINITY), p.gamma);
        for d in [0.5f64, 3.0, 40.0, 180.0, 900.0, 5000.0] {
            let (a, b) = (lk.wt(d.ln()), kernel_wt(d, &p));
            // far-tail exponents near -400 amplify rounding of the argument
            assert!((a - b).abs() <= 1e-11 * b.max(1e-300), "{d}: {a} {b}");
            let (a, b) = (lk.wl(d.ln()), kernel_wl(d, &p));
            assert!((a - b).abs() <= 1e-11 * b.max(1e-300), "{d}: {a} {b}");
        }
    }

    #[test]
    fn underflow_is_zero() {
        let p = KernelParams { r_d: 1.0, beta: 2.0, ..params() };
        assert_eq!(kernel_wt(1.0e4, &p), 0.0);
    }

    fn well(x: f64, y: f64, wt: Option<f64>, wl: Option<f64>) -> FusionWell {
        FusionWell { position: Point::new(x, y), wt, wl }
    }

    #[test]
    fn single_log_well_gives_constant_map() {
        let g = grid(400.0, 50.0);
        let r = fuse_sources(&[well(120.0, 80.0, None, Some(1.7))], None, &params(), &g).unwrap();
        assert!(r.perm_map.values().iter().all(|v| (v - 1.7).abs() < 1e-12));
        assert!(!r.used_wt && r.used_wl && !r.used_seismic);
    }

    #[test]
    fn wells_from_records_use_log10_and_qq() {
        let mut w = WellRecord::new("A", 0.0, 0.0);
        w.k_wl = Some(10.0);
        w.k_wl_qq = Some(100.0);
        w.k_wt_absolute = Some(1000.0);
        let f = FusionWell::from_record(&w).unwrap().unwrap();
        assert_eq!((f.wt, f.wl), (Some(3.0), Some(2.0)));
        assert!(FusionWell::from_record(&WellRecord::new("B", 0.0, 0.0)).unwrap().is_none());
    }

    #[test]
    fn midpoint_symmetry() {
        let g = Arc::new(Grid::from_points(vec![Point::new(150.0, 100.0), Point::new(10.0, 20.0)]).unwrap());
        let wells = [well(100.0, 100.0, Some(1.0), None), well(200.0, 100.0, Some(3.0), None)];
        let r = fuse_sources(&wells, None, &params(), &g).unwrap();
        assert!((r.perm_map.values()[0] - 2.0).abs() < 1e-12);
        let v = r.perm_map.values()[1];
        assert!((1.0..=3.0).contains(&v));
    }

    #[test]
    fn seismic_dominates_far_field() {
        let pts = vec![Point::new(0.0, 0.0), Point::new(1.0e5, 0.0)];
        let g = Arc::new(Grid::from_points(pts).unwrap());
        let seis = GridMap::constant(g.clone(), 0.5, MapKind::Permeability);
        let wells = [well(10.0, 0.0, Some(2.0), Some(2.0))];
        let r = fuse_sources(&wells, Some(&seis), &params(), &g).unwrap();
        assert!((r.perm_map.values()[1] - 0.5).abs() < 1e-12);
        assert!(r.used_seismic);
        assert!(r.confidence_map.values().iter().all(|c| *c >= params().w_s));
    }

    #[test]
    fn uncovered_point_in_pure_fusion() {
        let pts = vec![Point::new(0.0, 0.0), Point::new(1.0e6, 0.0)];
        let g = Arc::new(Grid::from_points(pts).unwrap());
        let p = KernelParams { r_d: 100.0, r_g: 5.0, beta: 2.0, delta: 1.0, ..params() };
        let err = fuse_sources(&[well(0.0, 0.0, Some(1.0), Some(1.0))], None, &p, &g).unwrap_err();
        assert!(matches!(err, Error::UncoveredGridPoint { index: 1 }));
    }

    #[test]
    fn seismic_on_wrong_grid() {
        let g = grid(100.0, 50.0);
        let other = grid(100.0, 25.0);
        let seis = GridMap::constant(other, 0.0, MapKind::Permeability);
        let err = fuse_sources(&[well(0.0, 0.0, Some(1.0), None)], Some(&seis), &params(), &g).unwrap_err();
        assert!(matches!(err, Error::GridMismatch));
    }

    #[test]
    fn synthetic_test_of_constant_map() {
        let g = grid(500.0, 50.0);
        let m = GridMap::constant(g, 2.25, MapKind::Permeability);
        assert!((synthetic_well_test(&m, &Point::new(33.0, 71.0), 250.0) - 2.25).abs() < 1e-12);
    }

    #[test]
    fn synthetic_test_three_points() {
        let pts = vec![Point::new(0.0, 0.0), Point::new(250.0, 0.0), Point::new(500.0, 0.0)];
        let g = Arc::new(Grid::from_points(pts).unwrap());
        let m = GridMap::new(g, vec![1.0, 2.0, 3.0], MapKind::Permeability).unwrap();
        let (e1, e2) = ((-1f64).exp(), (-2f64).exp());
        let expected = (1.0 + 2.0 * e1 + 3.0 * e2) / (1.0 + e1 + e2);
        assert!((synthetic_well_test(&m, &Point::new(0.0, 0.0), 250.0) - expected).abs() < 1e-15);
        // 1.42478961739555857 from mpmath
        assert!((expected - 1.4247896173955586).abs() < 1e-14, "{expected}");
    }
}
