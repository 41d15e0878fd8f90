//! Synthetic ground truth: a log-normal permeability field, wells sampled
//! from it with source-specific distortions, and an RMS volume linked to
//! the field.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{Grid, GridMap, GridSpec, MapKind, Point, Rect, WellRecord};
use crate::error::{Error, Result};
use crate::ingest::{write_wells, FluidProps, Horizon, RelPermTable, SeismicVolume, VolumeHeader};
use crate::pipeline::{RunConfig, SeismicPaths};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeismicLink {
    /// RMS at a trace is `exp(gain * (t - log_mean))` for truth `t`.
    pub gain: f64,
    /// Standard deviation of band-limited voxel noise.
    pub noise: f64,
    /// Standard deviation of a per-trace multiplicative static, in log units.
    pub trace_noise: f64,
    /// Box-filter half width of the voxel noise along z.
    pub smoothing: usize,
    pub nz: usize,
    /// Extra traces on each side of the grid.
    pub pad: usize,
    pub dz_ms: f64,
}

impl Default for SeismicLink {
    fn default() -> Self {
        Self { gain: 1.5, noise: 0.2, trace_noise: 0.05, smoothing: 2, nz: 64, pad: 4, dz_ms: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub grid: GridSpec,
    pub correlation_length: f64,
    pub log_mean: f64,
    pub log_sd: f64,
    pub wells: usize,
    /// Multiplicative well-log bias in mD.
    pub wl_bias: f64,
    /// Stretch of well-log deviations from the mean in log10 space, so the
    /// well-log distribution differs in shape, not only in location.
    pub wl_stretch: f64,
    /// log10 standard deviation of well-log scatter.
    pub wl_scatter: f64,
    /// Drainage radius of the well-test average (m).
    pub wt_radius: f64,
    pub wt_scatter: f64,
    pub log_only_fraction: f64,
    pub test_only_fraction: f64,
    pub s_w_range: [f64; 2],
    pub fluids: FluidProps,
    pub seismic: SeismicLink,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec { bounds: Rect::new(0.0, 5900.0, 0.0, 5900.0), spacing: 100.0, boundary: None },
            correlation_length: 800.0,
            log_mean: 1.5,
            log_sd: 0.5,
            wells: 40,
            wl_bias: 2.0,
            wl_stretch: 1.4,
            wl_scatter: 0.05,
            wt_radius: 250.0,
            wt_scatter: 0.03,
            log_only_fraction: 0.2,
            test_only_fraction: 0.05,
            s_w_range: [0.3, 0.6],
            fluids: FluidProps { mu_o: 2.0, mu_w: 0.5, mu_liq: 1.0 },
            seismic: SeismicLink::default(),
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("correlation_length", self.correlation_length),
            ("wl_bias", self.wl_bias),
            ("wt_radius", self.wt_radius),
            ("grid spacing", self.grid.spacing),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        let non_negative = [
            ("log_sd", self.log_sd),
            ("wl_scatter", self.wl_scatter),
            ("wt_scatter", self.wt_scatter),
            ("seismic noise", self.seismic.noise),
            ("trace noise", self.seismic.trace_noise),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0")));
            }
        }
        if self.wells < 3 {
            return Err(Error::InvalidConfig("well count must be >= 3".into()));
        }
        if self.log_only_fraction + self.test_only_fraction > 1.0 {
            return Err(Error::InvalidConfig("log-only and test-only fractions exceed 1".into()));
        }
        self.fluids.validate()
    }
}

/// Sum of Gaussian bumps, affinely rescaled to the requested mean and
/// standard deviation over the grid. Evaluable anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticField {
    centers: Vec<Point>,
    amplitudes: Vec<f64>,
    inv_two_l2: f64,
    raw_mean: f64,
    scale: f64,
    mean: f64,
}

impl SyntheticField {
    pub fn new(grid: &Grid, cfg: &SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let l = cfg.correlation_length;
        let b = &grid.spec().bounds;
        let margin = 3.0 * l;
        let (x0, x1, y0, y1) = (b.x_min - margin, b.x_max + margin, b.y_min - margin, b.y_max + margin);
        // about four bumps per correlation area
        let count = (((x1 - x0) * (y1 - y0) / (l * l)) * 4.0).ceil().max(8.0) as usize;
        let centers: Vec<Point> =
            (0..count).map(|_| Point::new(rng.random_range(x0..=x1), rng.random_range(y0..=y1))).collect();
        let amplitudes: Vec<f64> = (0..count).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut field = Self { centers, amplitudes, inv_two_l2: 1.0 / (2.0 * l * l), raw_mean: 0.0, scale: 0.0, mean: cfg.log_mean };
        let raw: Vec<f64> = grid.points().iter().map(|p| field.raw(p)).collect();
        let n = raw.len() as f64;
        let m = raw.iter().sum::<f64>() / n;
        let sd = (raw.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        field.raw_mean = m;
        field.scale = if sd > 0.0 { cfg.log_sd / sd } else { 0.0 };
        field
    }

    fn raw(&self, p: &Point) -> f64 {
        self.centers
            .iter()
            .zip(&self.amplitudes)
            .map(|(c, a)| {
                let d2 = (p.x - c.x).powi(2) + (p.y - c.y).powi(2);
                a * (-d2 * self.inv_two_l2).exp()
            })
            .sum()
    }

    /// log10 mD at `p`.
    pub fn value_at(&self, p: &Point) -> f64 {
        self.mean + self.scale * (self.raw(p) - self.raw_mean)
    }

    pub fn to_map(&self, grid: &Arc<Grid>) -> Result<GridMap> {
        GridMap::new(grid.clone(), grid.points().iter().map(|p| self.value_at(p)).collect(), MapKind::Permeability)
    }
}

/// Truth map (log10 mD) on the configured grid.
pub fn generate_field(config: &SynthConfig) -> Result<GridMap> {
    config.validate()?;
    let grid = Arc::new(Grid::build(config.grid.clone())?);
    SyntheticField::new(&grid, config).to_map(&grid)
}

/// Corey-type table used by the synthetic field.
pub fn synthetic_relperm() -> RelPermTable {
    let rows = (0..=6)
        .map(|i| {
            let s = 0.2 + 0.1 * i as f64;
            let se = (s - 0.2) / 0.6;
            (s, 0.9 * (1.0 - se).powi(2), 0.4 * se.powi(2))
        })
        .collect();
    RelPermTable::new("R1", rows).expect("valid synthetic table")
}

/// Wells at distinct grid points. Well logs see the local truth through a
/// biased, stretched, noisy lens; well tests see a drainage-weighted average,
/// reported as effective permeability for the well's saturation.
pub fn sample_wells(truth: &GridMap, config: &SynthConfig) -> Result<Vec<WellRecord>> {
    config.validate()?;
    let grid = truth.grid();
    if config.wells > grid.len() {
        return Err(Error::InvalidConfig(format!("{} wells on {} grid points", config.wells, grid.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let picks = rand::seq::index::sample(&mut rng, grid.len(), config.wells).into_vec();
    let table = synthetic_relperm();
    let n_log_only = (config.log_only_fraction * config.wells as f64).round() as usize;
    let n_test_only = (config.test_only_fraction * config.wells as f64).round() as usize;
    let wl_noise = Normal::new(0.0, config.wl_scatter).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let wt_noise = Normal::new(0.0, config.wt_scatter).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut wells = Vec::with_capacity(config.wells);
    for (n, &j) in picks.iter().enumerate() {
        let pos = grid.points()[j];
        let t = truth.values()[j];
        let log_wl = config.log_mean
            + config.wl_stretch * (t - config.log_mean)
            + config.wl_bias.log10()
            + wl_noise.sample(&mut rng);
        let (mut num, mut den) = (0.0, 0.0);
        for (p, v) in grid.points().iter().zip(truth.values()) {
            let w = (-p.distance(&pos) / config.wt_radius).exp();
            num += w * v;
            den += w;
        }
        let log_wt = num / den + wt_noise.sample(&mut rng);
        let s_w = rng.random_range(config.s_w_range[0]..=config.s_w_range[1]);
        let (kr_o, kr_w) = table.interp(s_w)?;
        let k_eff = 10f64.powf(log_wt) * config.fluids.mobility_factor(kr_o, kr_w);

        let mut w = WellRecord::new(format!("W{:03}", n + 1), pos.x, pos.y);
        let log_only = n < n_log_only;
        let test_only = !log_only && n < n_log_only + n_test_only;
        if !test_only {
            w.k_wl = Some(10f64.powf(log_wl));
        }
        if !log_only {
            w.k_wt_effective = Some(k_eff);
            w.s_w = Some(s_w);
            w.rock_type = Some(table.rock_type.clone());
        }
        wells.push(w);
    }
    Ok(wells)
}

/// RMS volume on traces spaced like the grid, padded by `pad` traces, with
/// a flat horizon at mid depth.
pub fn synthesize_seismic(field: &SyntheticField, grid: &Grid, config: &SynthConfig) -> Result<SeismicVolume> {
    let s = &config.seismic;
    let b = &grid.spec().bounds;
    let dx = grid.spec().spacing;
    if !(dx > 0.0) {
        return Err(Error::InvalidConfig("seismic synthesis needs a lattice grid".into()));
    }
    let (nx_grid, ny_grid) = grid.lattice_dims();
    let (ni, nj) = (nx_grid + 2 * s.pad, ny_grid + 2 * s.pad);
    let header = VolumeHeader {
        ni,
        nx: nj,
        nz: s.nz,
        origin_x: b.x_min - s.pad as f64 * dx,
        origin_y: b.y_min - s.pad as f64 * dx,
        dx,
        dy: dx,
        dz_ms: s.dz_ms,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(3);
    let width = 2 * s.smoothing + 1;
    // box filter of unit-variance white noise has variance 1/width
    let noise_scale = s.noise * (width as f64).sqrt();
    let mut data = Vec::with_capacity(ni * nj * s.nz);
    let mut white = vec![0.0f64; s.nz + 2 * s.smoothing];
    for i in 0..ni {
        for j in 0..nj {
            let p = Point::new(header.origin_x + i as f64 * dx, header.origin_y + j as f64 * dx);
            let z: f64 = StandardNormal.sample(&mut rng);
            let static_shift = s.trace_noise * z;
            let g = (s.gain * (field.value_at(&p) - config.log_mean) + static_shift).exp();
            if s.noise > 0.0 {
                white.iter_mut().for_each(|w| *w = StandardNormal.sample(&mut rng));
            }
            for k in 0..s.nz {
                let n = if s.noise > 0.0 {
                    noise_scale * white[k..k + width].iter().sum::<f64>() / width as f64
                } else {
                    0.0
                };
                data.push((g + n) as f32);
            }
        }
    }
    let horizon = Horizon::flat(
        header.origin_x,
        header.origin_x + (ni - 1) as f64 * dx,
        header.origin_y,
        header.origin_y + (nj - 1) as f64 * dx,
        (s.nz / 2) as f64,
    );
    SeismicVolume::new(header, data, horizon)
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub grid: Arc<Grid>,
    pub field: SyntheticField,
    pub truth: GridMap,
    pub wells: Vec<WellRecord>,
    pub volume: SeismicVolume,
    pub relperm: RelPermTable,
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let grid = Arc::new(Grid::build(config.grid.clone())?);
    let field = SyntheticField::new(&grid, config);
    let truth = field.to_map(&grid)?;
    let wells = sample_wells(&truth, config)?;
    let volume = synthesize_seismic(&field, &grid, config)?;
    Ok(SynthDataset { config: config.clone(), grid, field, truth, wells, volume, relperm: synthetic_relperm() })
}

impl SynthDataset {
    /// Writes every ingest-format file plus `truth_map.csv` and a run
    /// config `run.json` wired to them. Returns the run config path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        write_wells(&dir.join("wells.csv"), &self.wells)?;
        self.grid.write(&dir.join("grid.json"), &dir.join("grid.csv"))?;
        self.truth.write_csv(&dir.join("truth_map.csv"))?;
        self.volume.write(&dir.join("seismic.json"), &dir.join("horizon.csv"))?;
        std::fs::write(dir.join("fluids.json"), serde_json::to_string_pretty(&self.config.fluids)?)?;
        self.relperm.write(&dir.join("relperm_R1.csv"))?;
        std::fs::write(dir.join("synth.json"), serde_json::to_string_pretty(&self.config)?)?;
        let run = RunConfig {
            wells: "wells.csv".into(),
            grid: "grid.json".into(),
            fluids: Some("fluids.json".into()),
            relperm: BTreeMap::from([("R1".to_string(), PathBuf::from("relperm_R1.csv"))]),
            default_rock_type: "R1".into(),
            seismic: Some(SeismicPaths { header: "seismic.json".into(), horizon: "horizon.csv".into() }),
            out_dir: "out".into(),
            ..RunConfig::default()
        };
        let path = dir.join("run.json");
        std::fs::write(&path, serde_json::to_string_pretty(&run)?)?;
        Ok(path)
    }
}
