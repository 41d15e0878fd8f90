//! Input parsing: well tables, relative-permeability curves, fluid
//! properties, horizons and RMS-amplitude volumes, plus the conversion of
//! well-test effective permeability to absolute permeability.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Grid, GridMap, MapKind, Point, WellRecord};
use crate::error::{Error, Result};
use std::sync::Arc;

/// Required leading columns of the well table.
pub const WELL_HEADER: [&str; 5] = ["id", "x", "y", "k_wl_mD", "k_wt_eff_mD"];

/// Optional trailing columns, recognized by name in any order.
pub const WELL_OPTIONAL: [&str; 8] =
    ["s_w", "h_wl", "h_wt", "date", "type", "rock_type", "k_wt_abs_mD", "k_wl_qq_mD"];

fn parse_opt_f64(s: Option<&str>, line: usize, col: &str) -> Result<Option<f64>> {
    match s.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => v
            .parse::<f64>()
            .map(Some)
            .map_err(|_| Error::Parse { line, message: format!("column {col}: cannot parse `{v}`") }),
    }
}

fn parse_perm(s: Option<&str>, line: usize, col: &str) -> Result<Option<f64>> {
    let v = parse_opt_f64(s, line, col)?;
    match v {
        Some(k) if !(k > 0.0) || !k.is_finite() => Err(Error::NonPositivePermeability { line }),
        _ => Ok(v),
    }
}

fn opt_string(s: Option<&str>) -> Option<String> {
    s.map(str::trim).filter(|s| !s.is_empty()).map(str::to_string)
}

/// Parses a well table from any reader.
pub fn parse_wells_from<R: Read>(reader: R) -> Result<Vec<WellRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < WELL_HEADER.len() || header.iter().zip(WELL_HEADER).any(|(h, e)| h != e) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must start with `{}`", WELL_HEADER.join(",")),
        });
    }
    let mut optional: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, name) in header.iter().enumerate().skip(WELL_HEADER.len()) {
        if !WELL_OPTIONAL.contains(&name) {
            return Err(Error::Parse { line: 1, message: format!("unknown column `{name}`") });
        }
        optional.insert(WELL_OPTIONAL.iter().find(|n| **n == name).copied().unwrap(), i);
    }

    let mut wells = Vec::new();
    let mut ids = HashSet::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse { line: row + 2, message: e.to_string() })?;
        let line = rec.position().map_or(row + 2, |p| p.line() as usize);
        if rec.len() < WELL_HEADER.len() || rec.len() > header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {}..={} fields, found {}", WELL_HEADER.len(), header.len(), rec.len()),
            });
        }
        let id = rec.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::Parse { line, message: "empty well id".into() });
        }
        let x = parse_opt_f64(rec.get(1), line, "x")?
            .ok_or_else(|| Error::Parse { line, message: "missing x".into() })?;
        let y = parse_opt_f64(rec.get(2), line, "y")?
            .ok_or_else(|| Error::Parse { line, message: "missing y".into() })?;
        let opt = |name: &str| optional.get(name).and_then(|&i| rec.get(i));

        let well = WellRecord {
            id: id.clone(),
            position: Point::new(x, y),
            k_wl: parse_perm(rec.get(3), line, "k_wl_mD")?,
            k_wt_effective: parse_perm(rec.get(4), line, "k_wt_eff_mD")?,
            k_wt_absolute: parse_perm(opt("k_wt_abs_mD"), line, "k_wt_abs_mD")?,
            k_wl_qq: parse_perm(opt("k_wl_qq_mD"), line, "k_wl_qq_mD")?,
            s_w: parse_opt_f64(opt("s_w"), line, "s_w")?,
            rock_type: opt_string(opt("rock_type")),
            h_wl: parse_opt_f64(opt("h_wl"), line, "h_wl")?,
            h_wt: parse_opt_f64(opt("h_wt"), line, "h_wt")?,
            survey_date: opt_string(opt("date")),
            survey_type: opt_string(opt("type")),
        };
        if let Some(s) = well.s_w {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Parse { line, message: format!("s_w {s} outside [0, 1]") });
            }
        }
        if !ids.insert(id.clone()) {
            return Err(Error::DuplicateWell(id));
        }
        wells.push(well);
    }
    Ok(wells)
}

pub fn parse_wells(path: &Path) -> Result<Vec<WellRecord>> {
    parse_wells_from(File::open(path)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes wells with every column, so the file can be read back losslessly.
pub fn write_wells(path: &Path, wells: &[WellRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "id,x,y,k_wl_mD,k_wt_eff_mD,s_w,h_wl,h_wt,date,type,rock_type,k_wt_abs_mD,k_wl_qq_mD")?;
    for well in wells {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            well.id,
            well.position.x,
            well.position.y,
            fmt_opt(well.k_wl),
            fmt_opt(well.k_wt_effective),
            fmt_opt(well.s_w),
            fmt_opt(well.h_wl),
            fmt_opt(well.h_wt),
            well.survey_date.as_deref().unwrap_or(""),
            well.survey_type.as_deref().unwrap_or(""),
            well.rock_type.as_deref().unwrap_or(""),
            fmt_opt(well.k_wt_absolute),
            fmt_opt(well.k_wl_qq),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Counts of wells by available measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Availability {
    pub both: usize,
    pub log_only: usize,
    pub test_only: usize,
    pub neither: usize,
}

pub fn availability(wells: &[WellRecord]) -> Availability {
    let mut a = Availability { both: 0, log_only: 0, test_only: 0, neither: 0 };
    for w in wells {
        let wt = w.k_wt_effective.is_some() || w.k_wt_absolute.is_some();
        match (w.k_wl.is_some(), wt) {
            (true, true) => a.both += 1,
            (true, false) => a.log_only += 1,
            (false, true) => a.test_only += 1,
            (false, false) => a.neither += 1,
        }
    }
    a
}

/// Relative permeability curves of one rock type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelPermTable {
    pub rock_type: String,
    /// `(s_w, kr_o, kr_w)` rows, strictly increasing in `s_w`.
    rows: Vec<(f64, f64, f64)>,
}

impl RelPermTable {
    pub fn new(rock_type: impl Into<String>, rows: Vec<(f64, f64, f64)>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidConfig("rel-perm table needs at least two rows".into()));
        }
        for (i, &(s, o, w)) in rows.iter().enumerate() {
            for v in [s, o, w] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidConfig(format!("rel-perm row {i}: value {v} outside [0, 1]")));
                }
            }
            if i > 0 {
                let (ps, po, pw) = rows[i - 1];
                if !(s > ps) {
                    return Err(Error::InvalidConfig(format!("rel-perm row {i}: s_w not strictly increasing")));
                }
                if o > po || w < pw {
                    return Err(Error::InvalidConfig(format!(
                        "rel-perm row {i}: kr_o must be non-increasing and kr_w non-decreasing"
                    )));
                }
            }
        }
        Ok(Self { rock_type: rock_type.into(), rows })
    }

    pub fn rows(&self) -> &[(f64, f64, f64)] {
        &self.rows
    }

    pub fn read(path: &Path, rock_type: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["s_w", "kr_o", "kr_w"] {
            return Err(Error::Parse { line: 1, message: "rel-perm header must be `s_w,kr_o,kr_w`".into() });
        }
        let mut rows = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let get = |k: usize, name: &str| {
                parse_opt_f64(rec.get(k), line, name)?
                    .ok_or_else(|| Error::Parse { line, message: format!("missing {name}") })
            };
            rows.push((get(0, "s_w")?, get(1, "kr_o")?, get(2, "kr_w")?));
        }
        Self::new(rock_type, rows)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "s_w,kr_o,kr_w")?;
        for (s, o, k) in &self.rows {
            writeln!(w, "{s},{o},{k}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Piecewise-linear `(kr_o, kr_w)` at `s_w`. No extrapolation.
    pub fn interp(&self, s_w: f64) -> Result<(f64, f64)> {
        let (lo, hi) = (self.rows[0].0, self.rows[self.rows.len() - 1].0);
        if !(s_w >= lo && s_w <= hi) {
            return Err(Error::SaturationOutOfRange { s_w, lo, hi });
        }
        // first knot strictly greater than s_w
        let k = self.rows.partition_point(|r| r.0 <= s_w);
        if k == self.rows.len() {
            let last = self.rows[k - 1];
            return Ok((last.1, last.2));
        }
        let (s0, o0, w0) = self.rows[k - 1];
        let (s1, o1, w1) = self.rows[k];
        let t = (s_w - s0) / (s1 - s0);
        Ok((o0 + t * (o1 - o0), w0 + t * (w1 - w0)))
    }
}

/// Viscosities in cP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidProps {
    pub mu_o: f64,
    pub mu_w: f64,
    pub mu_liq: f64,
}

impl FluidProps {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu_o", self.mu_o), ("mu_w", self.mu_w), ("mu_liq", self.mu_liq)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let f: FluidProps = serde_json::from_reader(File::open(path)?)?;
        f.validate()?;
        Ok(f)
    }

    /// Total relative mobility `kr_o/mu_o + kr_w/mu_w` scaled by `mu_liq`.
    pub fn mobility_factor(&self, kr_o: f64, kr_w: f64) -> f64 {
        self.mu_liq * (kr_o / self.mu_o + kr_w / self.mu_w)
    }
}

/// `K_abs = K_eff / (mu_liq * (kr_o/mu_o + kr_w/mu_w))`.
pub fn absolute_from_mobility(k_wt_eff: f64, kr_o: f64, kr_w: f64, fluids: &FluidProps) -> Result<f64> {
    if !(k_wt_eff > 0.0) {
        return Err(Error::NonPositive(k_wt_eff));
    }
    let denom = fluids.mobility_factor(kr_o, kr_w);
    if denom == 0.0 {
        return Err(Error::ZeroTotalMobility);
    }
    Ok(k_wt_eff / denom)
}

pub fn effective_to_absolute(k_wt_eff: f64, s_w: f64, fluids: &FluidProps, table: &RelPermTable) -> Result<f64> {
    let (kr_o, kr_w) = table.interp(s_w)?;
    absolute_from_mobility(k_wt_eff, kr_o, kr_w, fluids)
}

/// Fills `k_wt_absolute` for every well with an effective well-test value.
/// Wells without an `s_w` use `default_s_w`; wells without a rock type use
/// `default_rock_type`.
pub fn convert_well_tests(
    wells: &mut [WellRecord],
    tables: &BTreeMap<String, RelPermTable>,
    default_rock_type: &str,
    fluids: &FluidProps,
    default_s_w: f64,
) -> Result<()> {
    for w in wells.iter_mut() {
        let Some(k_eff) = w.k_wt_effective else { continue };
        let rt = w.rock_type.as_deref().unwrap_or(default_rock_type);
        let table = tables
            .get(rt)
            .ok_or_else(|| Error::InvalidConfig(format!("well {}: no rel-perm table for rock type `{rt}`", w.id)))?;
        w.k_wt_absolute = Some(effective_to_absolute(k_eff, w.s_w.unwrap_or(default_s_w), fluids, table)?);
    }
    Ok(())
}

/// Header of a raw RMS-amplitude volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub ni: usize,
    pub nx: usize,
    pub nz: usize,
    pub origin_x: f64,
    pub origin_y: f64,
    pub dx: f64,
    pub dy: f64,
    pub dz_ms: f64,
}

/// Formation-center surface on a rectilinear lattice, `z` in sample units.
#[derive(Debug, Clone, PartialEq)]
pub struct Horizon {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Row-major by (y, x).
    z: Vec<f64>,
}

impl Horizon {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || ys.is_empty() || z.len() != xs.len() * ys.len() {
            return Err(Error::InvalidConfig("horizon lattice incomplete".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) || ys.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("horizon coordinates must be strictly increasing".into()));
        }
        Ok(Self { xs, ys, z })
    }

    /// Constant horizon covering a rectangle.
    pub fn flat(x0: f64, x1: f64, y0: f64, y1: f64, z: f64) -> Self {
        Self { xs: vec![x0, x1], ys: vec![y0, y1], z: vec![z; 4] }
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    /// Reads `x,y,z_index` rows that together form a full rectilinear lattice.
    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let mut pts: Vec<(f64, f64, f64)> = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = row + 2;
            let get = |k: usize| {
                parse_opt_f64(rec.get(k), line, "horizon")?
                    .ok_or_else(|| Error::Parse { line, message: "missing horizon field".into() })
            };
            pts.push((get(0)?, get(1)?, get(2)?));
        }
        let mut xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let mut ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        for v in [&mut xs, &mut ys] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let mut z = vec![f64::NAN; xs.len() * ys.len()];
        for (x, y, zv) in pts {
            let ix = xs.partition_point(|v| *v < x);
            let iy = ys.partition_point(|v| *v < y);
            z[iy * xs.len() + ix] = zv;
        }
        if z.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidConfig("horizon points do not form a full lattice".into()));
        }
        Self::new(xs, ys, z)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "x,y,z_index")?;
        for (iy, y) in self.ys.iter().enumerate() {
            for (ix, x) in self.xs.iter().enumerate() {
                writeln!(w, "{},{},{}", x, y, self.z[iy * self.xs.len() + ix])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    fn node(&self, ix: usize, iy: usize) -> f64 {
        self.z[iy * self.xs.len() + ix]
    }

    /// Bilinear interpolation inside the lattice; nearest node outside it.
    pub fn z_at(&self, p: &Point) -> f64 {
        let locate = |axis: &[f64], v: f64| -> Option<(usize, f64)> {
            if axis.len() == 1 || v < axis[0] || v > axis[axis.len() - 1] {
                return None;
            }
            let k = axis.partition_point(|a| *a <= v).clamp(1, axis.len() - 1);
            Some((k - 1, (v - axis[k - 1]) / (axis[k] - axis[k - 1])))
        };
        match (locate(&self.xs, p.x), locate(&self.ys, p.y)) {
            (Some((ix, tx)), Some((iy, ty))) => {
                let z00 = self.node(ix, iy);
                let z10 = self.node(ix + 1, iy);
                let z01 = self.node(ix, iy + 1);
                let z11 = self.node(ix + 1, iy + 1);
                (1.0 - ty) * ((1.0 - tx) * z00 + tx * z10) + ty * ((1.0 - tx) * z01 + tx * z11)
            }
            _ => {
                let nearest = |axis: &[f64], v: f64| {
                    (0..axis.len()).min_by(|&a, &b| (axis[a] - v).abs().total_cmp(&(axis[b] - v).abs())).unwrap()
                };
                self.node(nearest(&self.xs, p.x), nearest(&self.ys, p.y))
            }
        }
    }

    pub fn resample(&self, grid: &Arc<Grid>) -> Result<GridMap> {
        let values = grid.points().iter().map(|p| self.z_at(p)).collect();
        GridMap::new(grid.clone(), values, MapKind::Confidence)
    }
}

/// 3D RMS-amplitude volume indexed `(inline, crossline, sample)`. Trace
/// `(i, j)` sits at `(origin_x + i*dx, origin_y + j*dy)`.
#[derive(Debug, Clone)]
pub struct SeismicVolume {
    pub header: VolumeHeader,
    data: Vec<f32>,
    pub horizon: Horizon,
}

impl SeismicVolume {
    pub fn new(header: VolumeHeader, data: Vec<f32>, horizon: Horizon) -> Result<Self> {
        if !(header.dx > 0.0 && header.dy > 0.0 && header.dz_ms > 0.0) {
            return Err(Error::InvalidConfig("volume spacings must be > 0".into()));
        }
        let expected = header.ni * header.nx * header.nz;
        if data.len() != expected {
            return Err(Error::SizeMismatch { expected, actual: data.len() });
        }
        let max = header.nz.saturating_sub(1);
        if let Some(&z) = horizon.values().iter().find(|z| !(**z >= 0.0 && **z <= max as f64)) {
            return Err(Error::HorizonOutOfRange { z, max });
        }
        Ok(Self { header, data, horizon })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.header.ni, self.header.nx, self.header.nz)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[(i * self.header.nx + j) * self.header.nz + k]
    }

    /// Samples of trace `(i, j)`.
    pub fn trace(&self, i: usize, j: usize) -> &[f32] {
        let start = (i * self.header.nx + j) * self.header.nz;
        &self.data[start..start + self.header.nz]
    }

    /// Nearest trace to a map position, possibly outside the volume.
    pub fn nearest_trace(&self, p: &Point) -> (i64, i64) {
        let h = &self.header;
        (((p.x - h.origin_x) / h.dx).round() as i64, ((p.y - h.origin_y) / h.dy).round() as i64)
    }

    pub fn trace_position(&self, i: usize, j: usize) -> Point {
        Point::new(self.header.origin_x + i as f64 * self.header.dx, self.header.origin_y + j as f64 * self.header.dy)
    }

    /// Writes `header_path` (JSON) and the raw little-endian f32 payload
    /// next to it with a `.bin` extension.
    pub fn write(&self, header_path: &Path, horizon_path: &Path) -> Result<()> {
        std::fs::write(header_path, serde_json::to_string_pretty(&self.header)?)?;
        let mut w = BufWriter::new(File::create(header_path.with_extension("bin"))?);
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        self.horizon.write(horizon_path)
    }
}

/// Loads a volume from its JSON header (payload at the `.bin` sibling) and a
/// horizon CSV.
pub fn load_seismic(header_path: &Path, horizon_path: &Path) -> Result<SeismicVolume> {
    let header: VolumeHeader = serde_json::from_reader(File::open(header_path)?)?;
    let mut bytes = Vec::new();
    File::open(header_path.with_extension("bin"))?.read_to_end(&mut bytes)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::SizeMismatch { expected: header.ni * header.nx * header.nz, actual: bytes.len() / 4 });
    }
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let horizon = Horizon::read(horizon_path)?;
    SeismicVolume::new(header, data, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wells(s: &str) -> Result<Vec<WellRecord>> {
        parse_wells_from(s.as_bytes())
    }

    const H: &str = "id,x,y,k_wl_mD,k_wt_eff_mD\n";

    #[test]
    fn parses_log_only_row() {
        let w = wells(&format!("{H}W1,100,200,15.0,\n")).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].k_wl, Some(15.0));
        assert_eq!(w[0].k_wt_effective, None);
        assert_eq!(w[0].position, Point::new(100.0, 200.0));
    }

    #[test]
    fn rejects_negative_permeability() {
        let err = wells(&format!("{H}W1,100,200,-3.0,\n")).unwrap_err();
        assert!(err.to_string().contains("non-positive permeability"), "{err}");
        assert!(err.to_string().starts_with("line 2"), "{err}");
    }

    #[test]
    fn rejects_zero_permeability_and_duplicates() {
        assert!(wells(&format!("{H}W1,1,2,,0\n")).is_err());
        let err = wells(&format!("{H}W1,1,2,3,\nW1,4,5,6,\n")).unwrap_err();
        assert!(matches!(err, Error::DuplicateWell(ref id) if id == "W1"));
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = wells(&format!("{H}W1,1,2,3,\nW2,abc,2,3,\n")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_header() {
        assert!(wells("id,x,y,k_wl\nW1,1,2,3\n").is_err());
        assert!(wells("id,x,y,k_wl_mD,k_wt_eff_mD,bogus\nW1,1,2,3,4,5\n").is_err());
    }

    #[test]
    fn optional_columns_by_name() {
        let w = wells("id,x,y,k_wl_mD,k_wt_eff_mD,rock_type,s_w,h_wl\nA,0,0,1,2,RT2,0.4,12.5\nB,1,1,,3,,,\n").unwrap();
        assert_eq!(w[0].rock_type.as_deref(), Some("RT2"));
        assert_eq!(w[0].s_w, Some(0.4));
        assert_eq!(w[0].h_wl, Some(12.5));
        assert_eq!(w[1].rock_type, None);
        assert_eq!(w[1].s_w, None);
    }

    #[test]
    fn availability_counts_for_reference_field_layout() {
        // 88 both / 37 log-only / 4 test-only / 18 neither
        let mut s = H.to_string();
        let mut n = 0;
        for (count, wl, wt) in [(88, "10", "20"), (37, "10", ""), (4, "", "20"), (18, "", "")] {
            for _ in 0..count {
                s.push_str(&format!("W{n},{n},0,{wl},{wt}\n"));
                n += 1;
            }
        }
        let w = wells(&s).unwrap();
        assert_eq!(w.len(), 147);
        assert_eq!(availability(&w), Availability { both: 88, log_only: 37, test_only: 4, neither: 18 });
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = WellRecord::new("A", 1.5, -2.0);
        w.k_wl = Some(3.0);
        w.k_wt_absolute = Some(4.25);
        w.survey_type = Some("build-up".into());
        let path = dir.path().join("w.csv");
        write_wells(&path, &[w.clone()]).unwrap();
        assert_eq!(parse_wells(&path).unwrap(), vec![w]);
    }

    fn two_row() -> RelPermTable {
        RelPermTable::new("rt", vec![(0.2, 1.0, 0.0), (0.8, 0.0, 1.0)]).unwrap()
    }

    #[test]
    fn interp_knots_and_midpoint() {
        let t = two_row();
        assert_eq!(t.interp(0.2).unwrap(), (1.0, 0.0));
        assert_eq!(t.interp(0.8).unwrap(), (0.0, 1.0));
        let (o, w) = t.interp(0.5).unwrap();
        assert!((o - 0.5).abs() < 1e-15 && (w - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interp_out_of_range() {
        let err = two_row().interp(0.1).unwrap_err();
        assert!(err.to_string().starts_with("saturation out of range"));
        assert!(two_row().interp(0.81).is_err());
    }

    #[test]
    fn interp_matches_brute_force_oracle() {
        let rows = vec![(0.1, 0.95, 0.0), (0.25, 0.7, 0.02), (0.4, 0.4, 0.1), (0.6, 0.15, 0.3), (0.85, 0.0, 0.7)];
        let t = RelPermTable::new("rt", rows.clone()).unwrap();
        // Oracle: scan every segment and pick the one containing s.
        let oracle = |s: f64| {
            for w in rows.windows(2) {
                if s >= w[0].0 && s <= w[1].0 {
                    let f = (s - w[0].0) / (w[1].0 - w[0].0);
                    return (w[0].1 * (1.0 - f) + w[1].1 * f, w[0].2 * (1.0 - f) + w[1].2 * f);
                }
            }
            unreachable!()
        };
        let (o, w) = t.interp(0.37).unwrap();
        let (eo, ew) = oracle(0.37);
        // 0.37 lies 0.8 of the way through [0.25, 0.4]
        assert!((eo - 0.46).abs() < 1e-12 && (ew - 0.084).abs() < 1e-12);
        assert!((o - eo).abs() < 1e-12 && (w - ew).abs() < 1e-12);
        for k in 0..=750 {
            let s = 0.1 + k as f64 * 0.001;
            let (o, w) = t.interp(s).unwrap();
            let (eo, ew) = oracle(s);
            assert!((o - eo).abs() < 1e-12 && (w - ew).abs() < 1e-12, "s={s}");
        }
    }

    #[test]
    fn relperm_table_validation() {
        assert!(RelPermTable::new("x", vec![(0.2, 1.0, 0.0)]).is_err());
        assert!(RelPermTable::new("x", vec![(0.2, 1.0, 0.0), (0.2, 0.5, 0.5)]).is_err());
        assert!(RelPermTable::new("x", vec![(0.2, 0.5, 0.0), (0.4, 0.6, 0.5)]).is_err());
        assert!(RelPermTable::new("x", vec![(0.2, 1.0, 0.0), (0.4, 0.6, 1.5)]).is_err());
    }

    #[test]
    fn absolute_permeability_substitution() {
        let fl = FluidProps { mu_o: 2.0, mu_w: 0.5, mu_liq: 1.0 };
        // denominator 1 * (0.4/2 + 0.1/0.5) = 0.4
        let k = absolute_from_mobility(50.0, 0.4, 0.1, &fl).unwrap();
        assert!((k - 125.0).abs() < 1e-12);
    }

    #[test]
    fn single_phase_identity() {
        let fl = FluidProps { mu_o: 3.1, mu_w: 0.4, mu_liq: 3.1 };
        assert!((absolute_from_mobility(42.0, 1.0, 0.0, &fl).unwrap() - 42.0).abs() < 1e-12);
        let t = RelPermTable::new("x", vec![(0.0, 1.0, 0.0), (1.0, 0.0, 1.0)]).unwrap();
        assert!((effective_to_absolute(42.0, 0.0, &fl, &t).unwrap() - 42.0).abs() < 1e-12);
    }

    #[test]
    fn zero_mobility() {
        let fl = FluidProps { mu_o: 1.0, mu_w: 1.0, mu_liq: 1.0 };
        let err = absolute_from_mobility(10.0, 0.0, 0.0, &fl).unwrap_err();
        assert_eq!(err.to_string(), "zero total mobility");
    }

    #[test]
    fn conversion_is_linear_in_effective_permeability() {
        let fl = FluidProps { mu_o: 1.7, mu_w: 0.45, mu_liq: 1.2 };
        let t = RelPermTable::new("x", vec![(0.2, 0.9, 0.0), (0.5, 0.3, 0.2), (0.8, 0.0, 0.6)]).unwrap();
        for k in [0.1, 3.0, 77.0, 1234.5] {
            let a = effective_to_absolute(k, 0.41, &fl, &t).unwrap();
            let b = effective_to_absolute(2.0 * k, 0.41, &fl, &t).unwrap();
            assert!((b - 2.0 * a).abs() <= 1e-12 * b);
        }
    }

    fn volume(ni: usize, nx: usize, nz: usize, data: Vec<f32>) -> Result<SeismicVolume> {
        let header = VolumeHeader { ni, nx, nz, origin_x: 0.0, origin_y: 0.0, dx: 25.0, dy: 25.0, dz_ms: 2.0 };
        let horizon = Horizon::flat(0.0, 25.0 * ni as f64, 0.0, 25.0 * nx as f64, (nz / 2) as f64);
        SeismicVolume::new(header, data, horizon)
    }

    #[test]
    fn volume_size_mismatch() {
        let err = volume(2, 2, 2, vec![0.0; 7]).unwrap_err();
        assert!(err.to_string().starts_with("size mismatch"));
    }

    #[test]
    fn constant_volume_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = volume(3, 4, 5, vec![2.5; 60]).unwrap();
        let (h, z) = (dir.path().join("seis.json"), dir.path().join("hor.csv"));
        v.write(&h, &z).unwrap();
        let back = load_seismic(&h, &z).unwrap();
        assert!(back.data().iter().all(|&x| x == 2.5));
        assert_eq!(back.dims(), (3, 4, 5));
        assert_eq!(back.at(2, 3, 4), 2.5);
    }

    #[test]
    fn horizon_outside_volume() {
        let header = VolumeHeader { ni: 1, nx: 1, nz: 4, origin_x: 0.0, origin_y: 0.0, dx: 1.0, dy: 1.0, dz_ms: 2.0 };
        let err = SeismicVolume::new(header, vec![0.0; 4], Horizon::flat(0.0, 1.0, 0.0, 1.0, 9.0)).unwrap_err();
        assert!(matches!(err, Error::HorizonOutOfRange { .. }));
    }

    #[test]
    fn horizon_bilinear_with_nearest_fallback() {
        let h = Horizon::new(vec![0.0, 10.0], vec![0.0, 10.0], vec![0.0, 10.0, 20.0, 30.0]).unwrap();
        assert!((h.z_at(&Point::new(5.0, 5.0)) - 15.0).abs() < 1e-12);
        assert!((h.z_at(&Point::new(10.0, 0.0)) - 10.0).abs() < 1e-12);
        // outside: nearest node (10, 10)
        assert_eq!(h.z_at(&Point::new(50.0, 12.0)), 30.0);
    }
}
