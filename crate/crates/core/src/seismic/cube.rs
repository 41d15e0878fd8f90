use serde::{Deserialize, Serialize};

use crate::domain::{Grid, GridMap, Point};
use crate::error::{Error, Result};
use crate::ingest::SeismicVolume;

pub const CUBE_SHAPE: [usize; 3] = [9, 9, 46];

/// RMS amplitudes around one grid point, `[x][y][z]` with z contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsCube {
    pub shape: [usize; 3],
    pub data: Vec<f64>,
    /// Center trace position and horizon sample.
    pub center: (f64, f64, f64),
}

impl RmsCube {
    pub fn new(shape: [usize; 3], data: Vec<f64>, center: (f64, f64, f64)) -> Result<Self> {
        let expected = shape.iter().product();
        if data.len() != expected {
            return Err(Error::SizeMismatch { expected, actual: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowUp);
        }
        Ok(Self { shape, data, center })
    }

    pub fn constant(shape: [usize; 3], value: f64) -> Self {
        Self { shape, data: vec![value; shape.iter().product()], center: (0.0, 0.0, 0.0) }
    }
}

/// Cube of `shape` centered on the trace nearest `point` and on the horizon
/// sample there. Even extents put one more sample below the center.
pub fn extract_cube_shaped(volume: &SeismicVolume, point: &Point, shape: [usize; 3]) -> Result<RmsCube> {
    let (ni, nx, nz) = volume.dims();
    let (ci, cj) = volume.nearest_trace(point);
    let cz = volume.horizon.z_at(point).round() as i64;
    let start = |c: i64, n: usize| c - (n / 2) as i64;
    let (i0, j0, k0) = (start(ci, shape[0]), start(cj, shape[1]), start(cz, shape[2]));
    let fits = |s: i64, n: usize, total: usize| s >= 0 && s + n as i64 <= total as i64;
    if !(fits(i0, shape[0], ni) && fits(j0, shape[1], nx) && fits(k0, shape[2], nz)) {
        return Err(Error::CubeOutOfVolume);
    }
    let (i0, j0, k0) = (i0 as usize, j0 as usize, k0 as usize);
    let mut data = Vec::with_capacity(shape.iter().product());
    for i in i0..i0 + shape[0] {
        for j in j0..j0 + shape[1] {
            data.extend(volume.trace(i, j)[k0..k0 + shape[2]].iter().map(|&v| v as f64));
        }
    }
    let c = volume.trace_position(ci as usize, cj as usize);
    RmsCube::new(shape, data, (c.x, c.y, cz as f64))
}

pub fn extract_cube(volume: &SeismicVolume, point: &Point) -> Result<RmsCube> {
    extract_cube_shaped(volume, point, CUBE_SHAPE)
}

/// Linear map of grid coordinates onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordFrame {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl CoordFrame {
    pub fn from_grid(grid: &Grid) -> Self {
        let mut f = Self { x_min: f64::INFINITY, x_max: f64::NEG_INFINITY, y_min: f64::INFINITY, y_max: f64::NEG_INFINITY };
        for p in grid.points() {
            f.x_min = f.x_min.min(p.x);
            f.x_max = f.x_max.max(p.x);
            f.y_min = f.y_min.min(p.y);
            f.y_max = f.y_max.max(p.y);
        }
        f
    }

    pub fn normalize(&self, p: &Point) -> [f64; 2] {
        let n = |v: f64, lo: f64, hi: f64| if hi > lo { 2.0 * (v - lo) / (hi - lo) - 1.0 } else { 0.0 };
        [n(p.x, self.x_min, self.x_max), n(p.y, self.y_min, self.y_max)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub cube: RmsCube,
    pub position: Point,
    /// Normalized to `[-1, 1]` over the grid.
    pub coords: [f64; 2],
    /// log10 mD.
    pub target: f64,
    pub confidence: f64,
    pub grid_index: usize,
}

/// Type-7 (linear interpolation) sample quantile.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Grid points whose confidence lies strictly above the `percentile`
/// quantile of the confidence map, turned into training samples with the
/// fused value as target. `percentile = 0` keeps every point.
pub fn build_training_set(
    confidence_map: &GridMap,
    fused_map: &GridMap,
    volume: &SeismicVolume,
    percentile: f64,
) -> Result<Vec<TrainSample>> {
    if !confidence_map.shares_grid(fused_map) {
        return Err(Error::GridMismatch);
    }
    if !(0.0..1.0).contains(&percentile) {
        return Err(Error::InvalidConfig(format!("percentile {percentile} outside [0, 1)")));
    }
    let grid = confidence_map.grid();
    let frame = CoordFrame::from_grid(grid);
    let conf = confidence_map.values();
    let threshold = if percentile == 0.0 { f64::NEG_INFINITY } else { quantile(conf, percentile) };
    let samples: Vec<TrainSample> = grid
        .points()
        .iter()
        .enumerate()
        .filter(|&(j, _)| conf[j] > threshold)
        .filter_map(|(j, p)| {
            let cube = extract_cube(volume, p).ok()?;
            Some(TrainSample {
                cube,
                position: *p,
                coords: frame.normalize(p),
                target: fused_map.values()[j],
                confidence: conf[j],
                grid_index: j,
            })
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GridSpec, MapKind, Rect};
    use crate::ingest::{Horizon, VolumeHeader};
    use std::sync::Arc;

    fn volume(ni: usize, nx: usize, nz: usize, z: f64, f: impl Fn(usize, usize, usize) -> f32) -> SeismicVolume {
        let header = VolumeHeader { ni, nx, nz, origin_x: 0.0, origin_y: 0.0, dx: 25.0, dy: 25.0, dz_ms: 2.0 };
        let mut data = Vec::new();
        for i in 0..ni {
            for j in 0..nx {
                for k in 0..nz {
                    data.push(f(i, j, k));
                }
            }
        }
        let horizon = Horizon::flat(0.0, (ni - 1) as f64 * 25.0, 0.0, (nx - 1) as f64 * 25.0, z);
        SeismicVolume::new(header, data, horizon).unwrap()
    }

    #[test]
    fn constant_volume_gives_constant_cube() {
        let v = volume(20, 20, 60, 30.0, |_, _, _| 2.5);
        let c = extract_cube(&v, &Point::new(250.0, 250.0)).unwrap();
        assert_eq!(c.data.len(), 9 * 9 * 46);
        assert!(c.data.iter().all(|&x| x == 2.5));
    }

    #[test]
    fn exact_fit_returns_whole_volume() {
        let v = volume(9, 9, 46, 23.0, |i, j, k| (i * 10000 + j * 100 + k) as f32);
        let c = extract_cube(&v, &Point::new(100.0, 100.0)).unwrap();
        let all: Vec<f64> = v.data().iter().map(|&x| x as f64).collect();
        assert_eq!(c.data, all);
        assert_eq!(c.center, (100.0, 100.0, 23.0));
    }

    #[test]
    fn edge_point_is_out_of_volume() {
        let v = volume(20, 20, 60, 30.0, |_, _, _| 1.0);
        let e = extract_cube(&v, &Point::new(0.0, 250.0)).unwrap_err();
        assert_eq!(e.to_string(), "cube out of volume");
        let v = volume(20, 20, 60, 5.0, |_, _, _| 1.0);
        assert!(extract_cube(&v, &Point::new(250.0, 250.0)).is_err());
    }

    fn maps(conf: Vec<f64>) -> (GridMap, GridMap) {
        let g = Arc::new(Grid::build(GridSpec { bounds: Rect::new(100.0, 325.0, 100.0, 325.0), spacing: 25.0, boundary: None }).unwrap());
        let n = g.len();
        let c = GridMap::new(g.clone(), conf, MapKind::Confidence).unwrap();
        let f = GridMap::new(g, (0..n).map(|i| i as f64 * 0.01).collect(), MapKind::Permeability).unwrap();
        (c, f)
    }

    #[test]
    fn p50_keeps_upper_half() {
        let v = volume(24, 24, 60, 30.0, |i, j, _| (i + j) as f32);
        let (c, f) = maps((0..100).map(|i| ((i * 37) % 100) as f64).collect());
        let s = build_training_set(&c, &f, &v, 0.5).unwrap();
        assert_eq!(s.len(), 50);
        assert!(s.iter().all(|t| t.confidence > 49.5));
        assert!(s.iter().all(|t| t.target == f.values()[t.grid_index]));
        assert_eq!(build_training_set(&c, &f, &v, 0.0).unwrap().len(), 100);
    }

    #[test]
    fn ties_give_empty_set() {
        let v = volume(24, 24, 60, 30.0, |_, _, _| 1.0);
        let (c, f) = maps(vec![1.0; 100]);
        let e = build_training_set(&c, &f, &v, 0.5).unwrap_err();
        assert_eq!(e.to_string(), "empty training set");
    }

    #[test]
    fn coords_span_unit_box() {
        let (c, _) = maps(vec![1.0; 100]);
        let frame = CoordFrame::from_grid(c.grid());
        assert_eq!(frame.normalize(&Point::new(100.0, 325.0)), [-1.0, 1.0]);
        assert_eq!(frame.normalize(&Point::new(212.5, 212.5)), [0.0, 0.0]);
    }

    #[test]
    fn type7_quantile() {
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.5), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 1.0), 3.0);
    }
}
