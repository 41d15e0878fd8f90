//! Core data types shared by every stage: the reservoir grid, scalar maps
//! over it, well records and the kernel parameter set.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned rectangle in map coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self { x_min, x_max, y_min, y_max }
    }
}

/// Region that clips the lattice. Polygons use the even-odd rule; circles
/// include their rim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Boundary {
    Polygon { vertices: Vec<Point> },
    Circle { center: Point, radius: f64 },
}

impl Boundary {
    pub fn contains(&self, p: &Point) -> bool {
        match self {
            Boundary::Polygon { vertices } => point_in_polygon(vertices, p),
            Boundary::Circle { center, radius } => {
                let dx = p.x - center.x;
                let dy = p.y - center.y;
                dx * dx + dy * dy <= radius * radius
            }
        }
    }
}

/// Even-odd crossing test.
pub fn point_in_polygon(vertices: &[Point], p: &Point) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (vertices[i], vertices[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Everything needed to rebuild a grid deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: Rect,
    pub spacing: f64,
    #[serde(default)]
    pub boundary: Option<Boundary>,
}

/// The reservoir grid: an ordered set of 2D points, row-major by (y, x).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: GridSpec,
    nx: usize,
    ny: usize,
    points: Vec<Point>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GridHeader {
    #[serde(flatten)]
    spec: GridSpec,
    count: usize,
}

fn lattice_len(min: f64, max: f64, spacing: f64) -> usize {
    ((max - min) / spacing + 1e-9).floor() as usize + 1
}

impl Grid {
    pub fn build(spec: GridSpec) -> Result<Self> {
        if !(spec.spacing > 0.0) || !spec.spacing.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing must be > 0, got {}", spec.spacing)));
        }
        let b = spec.bounds;
        if !(b.x_max > b.x_min) || !(b.y_max > b.y_min) {
            return Err(Error::EmptyGrid);
        }
        let nx = lattice_len(b.x_min, b.x_max, spec.spacing);
        let ny = lattice_len(b.y_min, b.y_max, spec.spacing);
        let mut points = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            let y = b.y_min + iy as f64 * spec.spacing;
            for ix in 0..nx {
                let p = Point::new(b.x_min + ix as f64 * spec.spacing, y);
                if spec.boundary.as_ref().map_or(true, |bd| bd.contains(&p)) {
                    points.push(p);
                }
            }
        }
        if points.is_empty() {
            return Err(Error::EmptyGrid);
        }
        Ok(Self { spec, nx, ny, points })
    }

    /// Grid made of arbitrary unique points, in the given order.
    pub fn from_points(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let mut sorted: Vec<(u64, u64)> = points.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidGrid("duplicate points".into()));
        }
        let (mut x_min, mut x_max, mut y_min, mut y_max) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &points {
            x_min = x_min.min(p.x);
            x_max = x_max.max(p.x);
            y_min = y_min.min(p.y);
            y_max = y_max.max(p.y);
        }
        let spec = GridSpec { bounds: Rect::new(x_min, x_max, y_min, y_max), spacing: 0.0, boundary: None };
        Ok(Self { spec, nx: 0, ny: 0, points })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Lattice dimensions before clipping (zero for point-list grids).
    pub fn lattice_dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Index of the grid point nearest to `p` (first one on ties).
    pub fn nearest_index(&self, p: &Point) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, q) in self.points.iter().enumerate() {
            let d = p.distance(q);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Writes the JSON header; the point list goes to the sibling CSV body.
    pub fn write(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        let header = GridHeader { spec: self.spec.clone(), count: self.len() };
        std::fs::write(json_path, serde_json::to_string_pretty(&header)?)?;
        let mut w = BufWriter::new(File::create(csv_path)?);
        writeln!(w, "index,x,y")?;
        for (i, p) in self.points.iter().enumerate() {
            writeln!(w, "{},{},{}", i, p.x, p.y)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuilds a lattice grid from its JSON header and checks the count.
    pub fn read(json_path: &Path) -> Result<Self> {
        let mut s = String::new();
        File::open(json_path)?.read_to_string(&mut s)?;
        let header: GridHeader = serde_json::from_str(&s)?;
        let grid = Grid::build(header.spec)?;
        if grid.len() != header.count {
            return Err(Error::InvalidGrid(format!(
                "header count {} does not match rebuilt grid ({})",
                header.count,
                grid.len()
            )));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    /// log10 of permeability in mD.
    Permeability,
    /// Total kernel weight (dimensionless).
    Confidence,
    /// Percentage difference between two permeability maps.
    Difference,
}

/// Scalar field over a grid.
#[derive(Debug, Clone)]
pub struct GridMap {
    grid: Arc<Grid>,
    values: Vec<f64>,
    kind: MapKind,
}

impl GridMap {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>, kind: MapKind) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch(values.len(), grid.len()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite map value {v}")));
        }
        Ok(Self { grid, values, kind })
    }

    pub fn constant(grid: Arc<Grid>, value: f64, kind: MapKind) -> Self {
        let values = vec![value; grid.len()];
        Self { grid, values, kind }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn shares_grid(&self, other: &GridMap) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV with columns `index,x,y,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "index,x,y,value")?;
        for (i, (p, v)) in self.grid.points().iter().zip(&self.values).enumerate() {
            writeln!(w, "{},{},{},{}", i, p.x, p.y, v)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a map written by [`GridMap::write_csv`], checking that rows line
    /// up with `grid`.
    pub fn read_csv(path: &Path, grid: Arc<Grid>, kind: MapKind) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut values = vec![f64::NAN; grid.len()];
        let mut seen = 0usize;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let field = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse { line, message: format!("bad field {k}") })
            };
            let index = field(0)? as usize;
            let (x, y, v) = (field(1)?, field(2)?, field(3)?);
            let p = grid.points().get(index).ok_or_else(|| Error::Parse {
                line,
                message: format!("index {index} outside grid of {} points", grid.len()),
            })?;
            if (p.x - x).abs() > 1e-6 || (p.y - y).abs() > 1e-6 {
                return Err(Error::GridMismatch);
            }
            values[index] = v;
            seen += 1;
        }
        if seen != grid.len() || values.iter().any(|v| v.is_nan()) {
            return Err(Error::LengthMismatch(seen, grid.len()));
        }
        GridMap::new(grid, values, kind)
    }
}

/// One well with its interpreted permeabilities (mD). Absent values are
/// `None`, never zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WellRecord {
    pub id: String,
    pub position: Point,
    pub k_wl: Option<f64>,
    pub k_wt_effective: Option<f64>,
    pub k_wt_absolute: Option<f64>,
    pub k_wl_qq: Option<f64>,
    pub s_w: Option<f64>,
    pub rock_type: Option<String>,
    pub h_wl: Option<f64>,
    pub h_wt: Option<f64>,
    pub survey_date: Option<String>,
    pub survey_type: Option<String>,
}

impl Default for Point {
    fn default() -> Self {
        Point::new(0.0, 0.0)
    }
}

impl WellRecord {
    pub fn new(id: impl Into<String>, x: f64, y: f64) -> Self {
        Self { id: id.into(), position: Point::new(x, y), ..Default::default() }
    }

    /// Well-log value used for fusion: the Q-Q transformed one when present.
    pub fn fusion_wl(&self) -> Option<f64> {
        self.k_wl_qq.or(self.k_wl)
    }

    /// Well-test value used for fusion: absolute permeability, falling back
    /// to the effective value when no conversion has been made.
    pub fn fusion_wt(&self) -> Option<f64> {
        self.k_wt_absolute.or(self.k_wt_effective)
    }

    pub fn is_usable(&self) -> bool {
        self.fusion_wl().is_some() || self.fusion_wt().is_some()
    }
}

/// The seven tunable kernel constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Locality index of the well-test kernel.
    pub alpha: f64,
    /// Radial exponent of the well-test kernel.
    pub beta: f64,
    /// Low-fidelity factor of well-log data.
    pub gamma: f64,
    /// Radial exponent of the well-log kernel.
    pub delta: f64,
    /// Drainage radius (m).
    pub r_d: f64,
    /// Geological correlation radius (m).
    pub r_g: f64,
    /// Constant seismic weight; zero disables the seismic term.
    pub w_s: f64,
}

impl KernelParams {
    pub const NAMES: [&'static str; 7] = ["alpha", "beta", "gamma", "delta", "r_d", "r_g", "w_s"];

    pub fn to_array(&self) -> [f64; 7] {
        [self.alpha, self.beta, self.gamma, self.delta, self.r_d, self.r_g, self.w_s]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self { alpha: a[0], beta: a[1], gamma: a[2], delta: a[3], r_d: a[4], r_g: a[5], w_s: a[6] }
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.to_array();
        for (name, v) in Self::NAMES.iter().zip(a.iter()).take(6) {
            if !(*v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("kernel parameter {name} must be > 0, got {v}")));
            }
        }
        if !(self.w_s >= 0.0) || !self.w_s.is_finite() {
            return Err(Error::InvalidConfig(format!("w_s must be >= 0, got {}", self.w_s)));
        }
        Ok(())
    }
}

impl Default for KernelParams {
    /// Complete-fusion optimum reported for the reference field.
    fn default() -> Self {
        Self { alpha: 1.99, beta: 1.00, gamma: 0.27, delta: 0.99, r_d: 299.0, r_g: 28.8, w_s: 0.42 }
    }
}
