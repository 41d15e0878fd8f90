//! Workflow orchestration: pure fusion, seismic training and prediction,
//! complete fusion, the well-exclusion study, difference maps and reports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{Grid, GridMap, KernelParams, MapKind, Point, WellRecord};
use crate::error::{Error, Result};
use crate::fusion::{fuse_sources, synthetic_well_test, FusionResult, FusionWell, SourcesUsed, DEFAULT_R_DR};
use crate::ingest::{convert_well_tests, load_seismic, parse_wells, FluidProps, RelPermTable, SeismicVolume};
use crate::optimize::{metrics, optimize_kernel, Bounds, DEConfig, LoocvEval, LoocvProblem, Metrics};
use crate::preprocess::{transform_wells, QqMode};
use crate::seismic::{build_training_set, predict_map, quantile, train, NetConfig, SeismicNet, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeismicPaths {
    pub header: PathBuf,
    pub horizon: PathBuf,
}

/// Which wells the exclusion study drops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Exclusion {
    Ids { ids: Vec<String> },
    /// Wells whose representative log permeability lies strictly below the
    /// `q_lo` or strictly above the `q_hi` sample quantile.
    Quantile { q_lo: f64, q_hi: f64 },
}

impl Default for Exclusion {
    fn default() -> Self {
        Exclusion::Quantile { q_lo: 0.1, q_hi: 0.9 }
    }
}

/// One JSON file driving every stage. Relative paths resolve against the
/// directory holding the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub wells: PathBuf,
    pub grid: PathBuf,
    pub fluids: Option<PathBuf>,
    /// Rel-perm table per rock type.
    pub relperm: BTreeMap<String, PathBuf>,
    pub default_rock_type: String,
    pub default_s_w: f64,
    pub seismic: Option<SeismicPaths>,
    pub qq_mode: QqMode,
    /// Radius of the synthetic well-test average (m).
    pub r_dr: f64,
    pub bounds: Bounds,
    pub de: DEConfig,
    pub net: NetConfig,
    pub net_seed: u64,
    pub train: TrainConfig,
    /// Confidence quantile above which fused points join the training set.
    pub percentile: f64,
    /// Seed complete-fusion DE with the pure-fusion optimum.
    pub warm_start: bool,
    pub exclusion: Exclusion,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            wells: "wells.csv".into(),
            grid: "grid.json".into(),
            fluids: None,
            relperm: BTreeMap::new(),
            default_rock_type: "R1".into(),
            default_s_w: 0.4,
            seismic: None,
            qq_mode: QqMode::default(),
            r_dr: DEFAULT_R_DR,
            bounds: Bounds::default(),
            de: DEConfig::default(),
            net: NetConfig::default(),
            net_seed: 11,
            train: TrainConfig::default(),
            percentile: 0.5,
            warm_start: false,
            exclusion: Exclusion::default(),
            out_dir: "out".into(),
        }
    }
}

impl RunConfig {
    /// Reads a config and makes its paths absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.wells);
        fix(&mut self.grid);
        fix(&mut self.out_dir);
        if let Some(f) = self.fluids.as_mut() {
            fix(f);
        }
        self.relperm.values_mut().for_each(fix);
        if let Some(s) = self.seismic.as_mut() {
            fix(&mut s.header);
            fix(&mut s.horizon);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        self.de.validate()?;
        if !(self.r_dr > 0.0) {
            return Err(Error::InvalidConfig("r_dr must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.percentile) {
            return Err(Error::InvalidConfig("percentile must lie in [0, 1)".into()));
        }
        if let Exclusion::Quantile { q_lo, q_hi } = self.exclusion {
            if !(0.0 <= q_lo && q_lo <= q_hi && q_hi <= 1.0) {
                return Err(Error::InvalidConfig("exclusion quantiles must satisfy 0 <= q_lo <= q_hi <= 1".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the serialized config.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }
}

/// Ingested, converted and Q-Q transformed inputs.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub grid: Arc<Grid>,
    pub wells: Vec<WellRecord>,
    pub volume: Option<SeismicVolume>,
    pub qq_mode: QqMode,
}

impl Inputs {
    /// Runs the Q-Q stage; well-test conversion is up to the caller.
    pub fn new(grid: Arc<Grid>, mut wells: Vec<WellRecord>, volume: Option<SeismicVolume>, qq_mode: QqMode) -> Result<Self> {
        if wells.iter().any(|w| w.k_wl.is_some()) {
            transform_wells(&mut wells, qq_mode)?;
        }
        Ok(Self { grid, wells, volume, qq_mode })
    }

    /// Same inputs without the listed wells, Q-Q transform redone on the
    /// remaining ones.
    pub fn without(&self, ids: &[String]) -> Result<Self> {
        let wells: Vec<WellRecord> = self.wells.iter().filter(|w| !ids.contains(&w.id)).cloned().collect();
        if wells.len() < 3 {
            return Err(Error::TooFewWells { found: wells.len(), required: 3 });
        }
        Self::new(self.grid.clone(), wells, self.volume.clone(), self.qq_mode)
    }
}

/// Reads every input named by the config, converts effective well-test
/// permeability when fluids are given, and applies the Q-Q transform.
pub fn prepare_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let grid = Arc::new(Grid::read(&cfg.grid)?);
    let mut wells = parse_wells(&cfg.wells)?;
    if let Some(f) = &cfg.fluids {
        let fluids = FluidProps::read(f)?;
        let tables = cfg
            .relperm
            .iter()
            .map(|(rt, p)| Ok((rt.clone(), RelPermTable::read(p, rt.clone())?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        convert_well_tests(&mut wells, &tables, &cfg.default_rock_type, &fluids, cfg.default_s_w)?;
    }
    let volume = cfg.seismic.as_ref().map(|s| load_seismic(&s.header, &s.horizon)).transpose()?;
    Inputs::new(grid, wells, volume, cfg.qq_mode)
}

/// Outcome of one kernel-regression stage.
#[derive(Debug, Clone)]
pub struct StageResult {
    pub params: KernelParams,
    pub fusion: FusionResult,
    /// Leave-one-out synthetic tests against full-map synthetic tests.
    pub loocv: Metrics,
    pub eval: LoocvEval,
    pub history: Vec<f64>,
    pub evaluations: usize,
    /// Well ids and positions aligned with `eval.k`.
    pub wells: Vec<(String, Point)>,
    pub r_dr: f64,
}

#[derive(Serialize, Deserialize)]
struct StageRecord {
    params: KernelParams,
    loocv: Metrics,
    eval: LoocvEval,
    history: Vec<f64>,
    evaluations: usize,
    wells: Vec<(String, Point)>,
    r_dr: f64,
    sources: SourcesUsed,
}

impl StageResult {
    /// Writes `<prefix>_stage.json`, `<prefix>_perm.csv` and
    /// `<prefix>_confidence.csv` into `dir`.
    pub fn save(&self, dir: &Path, prefix: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let rec = StageRecord {
            params: self.params,
            loocv: self.loocv,
            eval: self.eval.clone(),
            history: self.history.clone(),
            evaluations: self.evaluations,
            wells: self.wells.clone(),
            r_dr: self.r_dr,
            sources: self.fusion.sources(),
        };
        std::fs::write(dir.join(format!("{prefix}_stage.json")), serde_json::to_string_pretty(&rec)?)?;
        self.fusion.perm_map.write_csv(&dir.join(format!("{prefix}_perm.csv")))?;
        self.fusion.confidence_map.write_csv(&dir.join(format!("{prefix}_confidence.csv")))?;
        Ok(())
    }

    pub fn load(dir: &Path, prefix: &str, grid: &Arc<Grid>) -> Result<Self> {
        let rec: StageRecord = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{prefix}_stage.json")))?)?;
        let perm = GridMap::read_csv(&dir.join(format!("{prefix}_perm.csv")), grid.clone(), MapKind::Permeability)?;
        let conf = GridMap::read_csv(&dir.join(format!("{prefix}_confidence.csv")), grid.clone(), MapKind::Confidence)?;
        Ok(Self {
            params: rec.params,
            fusion: FusionResult {
                perm_map: perm,
                confidence_map: conf,
                params: rec.params,
                used_wt: rec.sources.well_test,
                used_wl: rec.sources.well_log,
                used_seismic: rec.sources.seismic,
            },
            loocv: rec.loocv,
            eval: rec.eval,
            history: rec.history,
            evaluations: rec.evaluations,
            wells: rec.wells,
            r_dr: rec.r_dr,
        })
    }
}

fn fusion_inputs(wells: &[WellRecord]) -> Result<(Vec<FusionWell>, Vec<(String, Point)>)> {
    let mut fw = Vec::new();
    let mut ids = Vec::new();
    for w in wells {
        if let Some(f) = FusionWell::from_record(w)? {
            fw.push(f);
            ids.push((w.id.clone(), w.position));
        }
    }
    Ok((fw, ids))
}

fn run_stage(
    inputs: &Inputs,
    seismic_map: Option<&GridMap>,
    bounds: &Bounds,
    de: &DEConfig,
    r_dr: f64,
    warm_start: Option<&KernelParams>,
) -> Result<StageResult> {
    let (fw, ids) = fusion_inputs(&inputs.wells)?;
    let problem = LoocvProblem::new(fw.clone(), inputs.grid.clone(), seismic_map, r_dr)?;
    let out = optimize_kernel(&problem, bounds, de, warm_start)?;
    let fusion = fuse_sources(&fw, seismic_map, &out.params, &inputs.grid)?;
    Ok(StageResult {
        params: out.params,
        fusion,
        loocv: metrics(&out.eval.k, &out.eval.k_hat)?,
        eval: out.eval,
        history: out.history,
        evaluations: out.evaluations,
        wells: ids,
        r_dr,
    })
}

/// Kernel optimization and fusion from wells alone (`w_s = 0`).
pub fn run_pure_fusion(inputs: &Inputs, bounds: &Bounds, de: &DEConfig, r_dr: f64) -> Result<StageResult> {
    run_stage(inputs, None, bounds, de, r_dr, None)
}

/// Re-optimizes all seven parameters with the seismic map in play. With
/// `warm_start` the pure-fusion optimum seeds the population, its `w_s`
/// set to the middle of the `w_s` bounds.
pub fn run_complete_fusion(
    inputs: &Inputs,
    pure: &StageResult,
    seismic_map: &GridMap,
    bounds: &Bounds,
    de: &DEConfig,
    r_dr: f64,
    warm_start: bool,
) -> Result<StageResult> {
    let seed = KernelParams { w_s: 0.5 * (bounds.w_s[0] + bounds.w_s[1]), ..pure.params };
    run_stage(inputs, Some(seismic_map), bounds, de, r_dr, warm_start.then_some(&seed))
}

#[derive(Debug, Clone)]
pub struct SeismicStage {
    pub net: SeismicNet,
    pub report: TrainReport,
    pub n_samples: usize,
    /// log10 mD predicted at every grid point.
    pub map: GridMap,
    pub failed: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SeismicRecord {
    report: TrainReport,
    n_samples: usize,
    failed: Vec<usize>,
}

impl SeismicStage {
    /// Writes `seismic_net.json` (plus its `.bin` payload),
    /// `seismic_train.json` and `seismic_perm.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.net.save(&dir.join("seismic_net.json"))?;
        let rec = SeismicRecord { report: self.report.clone(), n_samples: self.n_samples, failed: self.failed.clone() };
        std::fs::write(dir.join("seismic_train.json"), serde_json::to_string_pretty(&rec)?)?;
        self.map.write_csv(&dir.join("seismic_perm.csv"))
    }

    /// The map is read back exactly; network weights come back at f32
    /// precision.
    pub fn load(dir: &Path, grid: &Arc<Grid>) -> Result<Self> {
        let net = SeismicNet::load(&dir.join("seismic_net.json"))?;
        let rec: SeismicRecord = serde_json::from_str(&std::fs::read_to_string(dir.join("seismic_train.json"))?)?;
        let map = GridMap::read_csv(&dir.join("seismic_perm.csv"), grid.clone(), MapKind::Permeability)?;
        Ok(Self { net, report: rec.report, n_samples: rec.n_samples, map, failed: rec.failed })
    }
}

/// Expands the training set from the pure-fusion map, trains the network
/// and predicts the whole grid.
pub fn run_seismic_stage(inputs: &Inputs, pure: &StageResult, cfg: &RunConfig) -> Result<SeismicStage> {
    let volume = inputs
        .volume
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("seismic stage needs a seismic volume".into()))?;
    let samples = build_training_set(&pure.fusion.confidence_map, &pure.fusion.perm_map, volume, cfg.percentile)?;
    let mut net = SeismicNet::new(cfg.net.clone(), cfg.net_seed)?;
    let report = train(&mut net, &samples, &cfg.train)?;
    let pred = predict_map(&net, volume, &inputs.grid)?;
    Ok(SeismicStage { net, report, n_samples: samples.len(), map: pred.map, failed: pred.failed })
}

#[derive(Debug, Clone)]
pub struct Workflow {
    pub pure: StageResult,
    pub seismic: SeismicStage,
    pub complete: StageResult,
}

/// All four stages in order.
pub fn run_workflow(inputs: &Inputs, cfg: &RunConfig) -> Result<Workflow> {
    cfg.validate()?;
    let pure = run_pure_fusion(inputs, &cfg.bounds, &cfg.de, cfg.r_dr)?;
    let seismic = run_seismic_stage(inputs, &pure, cfg)?;
    let complete = run_complete_fusion(inputs, &pure, &seismic.map, &cfg.bounds, &cfg.de, cfg.r_dr, cfg.warm_start)?;
    Ok(Workflow { pure, seismic, complete })
}

/// `100 (10^a - 10^b) / 10^b` per point for log10 maps `a` and `b`.
pub fn percentage_diff_map(a: &GridMap, b: &GridMap) -> Result<GridMap> {
    if !a.shares_grid(b) {
        return Err(Error::GridMismatch);
    }
    let mut zero = Vec::new();
    let mut values = Vec::with_capacity(a.len());
    for (j, (&x, &y)) in a.values().iter().zip(b.values()).enumerate() {
        let den = 10f64.powf(y);
        if den == 0.0 || !den.is_finite() {
            zero.push(j);
            values.push(f64::NAN);
        } else {
            values.push(100.0 * (10f64.powf(x) - den) / den);
        }
    }
    if !zero.is_empty() {
        return Err(Error::ZeroDenominator(zero));
    }
    GridMap::new(a.grid().clone(), values, MapKind::Difference)
}

/// log10 of the well-test value when present, else of the well-log value
/// used for fusion.
fn representative_log_perm(w: &WellRecord) -> Option<f64> {
    w.fusion_wt().or(w.fusion_wl()).filter(|k| *k > 0.0).map(f64::log10)
}

/// Ids of the wells an exclusion rule drops, in input order.
pub fn excluded_wells(wells: &[WellRecord], rule: &Exclusion) -> Result<Vec<String>> {
    match rule {
        Exclusion::Ids { ids } => {
            if let Some(missing) = ids.iter().find(|id| !wells.iter().any(|w| &w.id == *id)) {
                return Err(Error::InvalidConfig(format!("unknown well `{missing}` in exclusion list")));
            }
            Ok(wells.iter().filter(|w| ids.contains(&w.id)).map(|w| w.id.clone()).collect())
        }
        Exclusion::Quantile { q_lo, q_hi } => {
            let vals: Vec<f64> = wells.iter().filter_map(representative_log_perm).collect();
            if vals.is_empty() {
                return Ok(Vec::new());
            }
            let (lo, hi) = (quantile(&vals, *q_lo), quantile(&vals, *q_hi));
            Ok(wells
                .iter()
                .filter(|w| representative_log_perm(w).is_some_and(|v| v < lo || v > hi))
                .map(|w| w.id.clone())
                .collect())
        }
    }
}

/// Mean squared error and R² in the layout of the comparison table: each
/// fusion mode with all wells and with the exclusion applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub pure_all: Metrics,
    pub pure_excluded: Metrics,
    pub complete_all: Metrics,
    pub complete_excluded: Metrics,
}

/// Scores a reduced-well run against the all-wells run over every well of
/// the latter. Retained wells use their leave-one-out synthetic tests;
/// excluded wells are predicted from the reduced map.
pub fn held_out_metrics(all: &StageResult, reduced: &StageResult) -> Result<Metrics> {
    let k_hat: Vec<f64> = all
        .wells
        .iter()
        .map(|(id, p)| match reduced.wells.iter().position(|(r, _)| r == id) {
            Some(i) => reduced.eval.k_hat[i],
            None => synthetic_well_test(&reduced.fusion.perm_map, p, reduced.r_dr),
        })
        .collect();
    metrics(&all.eval.k, &k_hat)
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub excluded: Vec<String>,
    pub reduced: Workflow,
    /// Reduced-run complete map relative to the all-wells complete map.
    pub diff_complete: GridMap,
    pub diff_pure: GridMap,
    pub table: MetricsTable,
}

/// Repeats the whole workflow without the excluded wells and compares it
/// with the all-wells run `base`.
pub fn ablation_study(inputs: &Inputs, cfg: &RunConfig, base: &Workflow, rule: &Exclusion) -> Result<AblationResult> {
    let excluded = excluded_wells(&inputs.wells, rule)?;
    let reduced = if excluded.is_empty() {
        base.clone()
    } else {
        run_workflow(&inputs.without(&excluded)?, cfg)?
    };
    let table = MetricsTable {
        pure_all: base.pure.loocv,
        pure_excluded: held_out_metrics(&base.pure, &reduced.pure)?,
        complete_all: base.complete.loocv,
        complete_excluded: held_out_metrics(&base.complete, &reduced.complete)?,
    };
    Ok(AblationResult {
        diff_complete: percentage_diff_map(&reduced.complete.fusion.perm_map, &base.complete.fusion.perm_map)?,
        diff_pure: percentage_diff_map(&reduced.pure.fusion.perm_map, &base.pure.fusion.perm_map)?,
        excluded,
        reduced,
        table,
    })
}

/// Whatever stages have completed; any may be absent.
#[derive(Debug, Clone, Copy, Default)]
pub struct Results<'a> {
    pub config: Option<&'a RunConfig>,
    pub pure: Option<&'a StageResult>,
    pub seismic_map: Option<&'a GridMap>,
    pub complete: Option<&'a StageResult>,
    pub ablation: Option<&'a AblationResult>,
}

impl<'a> Results<'a> {
    pub fn from_workflow(config: &'a RunConfig, w: &'a Workflow, ablation: Option<&'a AblationResult>) -> Self {
        Self {
            config: Some(config),
            pure: Some(&w.pure),
            seismic_map: Some(&w.seismic.map),
            complete: Some(&w.complete),
            ablation,
        }
    }

    fn is_empty(&self) -> bool {
        self.pure.is_none() && self.seismic_map.is_none() && self.complete.is_none() && self.ablation.is_none()
    }
}

/// Writes `metrics.csv`, the maps, `params.json` and `summary.txt` into
/// `out_dir`. Returns the written paths.
pub fn report(results: &Results, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();

    let table = results.ablation.map(|a| a.table);
    let cell = |m: Option<Metrics>, f: fn(&Metrics) -> f64| m.map(|m| format!("{}", f(&m))).unwrap_or_default();
    let columns = [
        results.pure.map(|s| s.loocv),
        table.map(|t| t.pure_excluded),
        results.complete.map(|s| s.loocv),
        table.map(|t| t.complete_excluded),
    ];
    let path = out_dir.join("metrics.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(w, "metric,pure_all,pure_excluded,complete_all,complete_excluded")?;
    for (name, f) in [("mse", (|m: &Metrics| m.mse) as fn(&Metrics) -> f64), ("r2", |m: &Metrics| m.r2)] {
        let cells: Vec<String> = columns.iter().map(|c| cell(*c, f)).collect();
        writeln!(w, "{name},{}", cells.join(","))?;
    }
    w.flush()?;
    files.push(path);

    let mut maps: Vec<(&str, &GridMap)> = Vec::new();
    let mut params = BTreeMap::new();
    if let Some(s) = results.pure {
        maps.push(("pure_perm", &s.fusion.perm_map));
        maps.push(("pure_confidence", &s.fusion.confidence_map));
        params.insert("pure", s.params);
    }
    if let Some(m) = results.seismic_map {
        maps.push(("seismic_perm", m));
    }
    if let Some(s) = results.complete {
        maps.push(("complete_perm", &s.fusion.perm_map));
        maps.push(("complete_confidence", &s.fusion.confidence_map));
        params.insert("complete", s.params);
    }
    let diff = match (results.complete, results.pure) {
        (Some(c), Some(p)) => Some(percentage_diff_map(&c.fusion.perm_map, &p.fusion.perm_map)?),
        _ => None,
    };
    if let Some(d) = &diff {
        maps.push(("diff_complete_vs_pure", d));
    }
    if let Some(a) = results.ablation {
        maps.push(("ablation_pure_perm", &a.reduced.pure.fusion.perm_map));
        maps.push(("ablation_complete_perm", &a.reduced.complete.fusion.perm_map));
        maps.push(("ablation_diff_pure", &a.diff_pure));
        maps.push(("ablation_diff_complete", &a.diff_complete));
        params.insert("ablation_pure", a.reduced.pure.params);
        params.insert("ablation_complete", a.reduced.complete.params);
    }
    for (name, m) in maps {
        let p = out_dir.join(format!("{name}.csv"));
        m.write_csv(&p)?;
        files.push(p);
    }
    let path = out_dir.join("params.json");
    std::fs::write(&path, serde_json::to_string_pretty(&params)?)?;
    files.push(path);

    let mut s = String::new();
    if let Some(cfg) = results.config {
        s += &format!("config_sha256: {}\n", cfg.hash()?);
        s += &format!("de_seed: {}\ntrain_seed: {}\nnet_seed: {}\n", cfg.de.seed, cfg.train.seed, cfg.net_seed);
    }
    for (name, st) in [("pure", results.pure), ("complete", results.complete)] {
        if let Some(st) = st {
            s += &format!(
                "{name}: mse {:.6} r2 {:.4} objective {:.6} evaluations {}\n",
                st.loocv.mse, st.loocv.r2, st.eval.f, st.evaluations
            );
        }
    }
    if let Some(a) = results.ablation {
        s += &format!("excluded wells: {}\n", a.excluded.join(" "));
    }
    let path = out_dir.join("summary.txt");
    std::fs::write(&path, s)?;
    files.push(path);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{GridSpec, Rect};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Arc<Grid> {
        Arc::new(Grid::build(GridSpec { bounds: Rect::new(0.0, 900.0, 0.0, 900.0), spacing: 100.0, boundary: None }).unwrap())
    }

    fn map(g: &Arc<Grid>, v: Vec<f64>) -> GridMap {
        GridMap::new(g.clone(), v, MapKind::Permeability).unwrap()
    }

    #[test]
    fn percentage_diff_examples() {
        let g = grid();
        let b = map(&g, (0..100).map(|i| i as f64 * 0.02).collect());
        let d = percentage_diff_map(&b, &b).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
        let a = map(&g, b.values().iter().map(|v| v + 2f64.log10()).collect());
        let d = percentage_diff_map(&a, &b).unwrap();
        assert!(d.values().iter().all(|&v| (v - 100.0).abs() < 1e-9));
    }

    #[test]
    fn percentage_diff_matches_elementwise() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = map(&g, (0..100).map(|_| rng.random_range(-1.0..3.0)).collect());
        let b = map(&g, (0..100).map(|_| rng.random_range(-1.0..3.0)).collect());
        let d = percentage_diff_map(&a, &b).unwrap();
        for j in 0..100 {
            let (x, y) = (10f64.powf(a.values()[j]), 10f64.powf(b.values()[j]));
            assert_eq!(d.values()[j], 100.0 * (x - y) / y);
        }
    }

    #[test]
    fn percentage_diff_zero_denominator() {
        let g = grid();
        let mut v = vec![1.0; 100];
        v[7] = -500.0;
        v[42] = -400.0;
        let e = percentage_diff_map(&map(&g, vec![1.0; 100]), &map(&g, v)).unwrap_err();
        assert!(matches!(e, Error::ZeroDenominator(ref i) if i == &vec![7, 42]));
    }

    fn wells(values: &[f64]) -> Vec<WellRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let mut w = WellRecord::new(format!("W{i}"), 50.0 + 80.0 * i as f64, 50.0 + 30.0 * i as f64);
                w.k_wt_effective = Some(k);
                w
            })
            .collect()
    }

    #[test]
    fn quantile_exclusion_drops_tails() {
        let ws = wells(&(1..=20).map(|i| i as f64).collect::<Vec<_>>());
        let ids = excluded_wells(&ws, &Exclusion::default()).unwrap();
        assert_eq!(ids, vec!["W0", "W1", "W18", "W19"]);
        assert!(excluded_wells(&ws, &Exclusion::Quantile { q_lo: 0.0, q_hi: 1.0 }).unwrap().is_empty());
        let e = excluded_wells(&ws, &Exclusion::Ids { ids: vec!["nope".into()] }).unwrap_err();
        assert_eq!(e.kind(), "invalid_config");
    }

    #[test]
    fn exclusion_leaving_two_wells_fails() {
        let inputs = Inputs::new(grid(), wells(&[1.0, 2.0, 3.0, 4.0]), None, QqMode::default()).unwrap();
        let e = inputs.without(&["W0".into(), "W3".into()]).unwrap_err();
        assert!(matches!(e, Error::TooFewWells { found: 2, required: 3 }));
    }

    fn quick_de() -> DEConfig {
        DEConfig { population: 8, generations: 5, ..DEConfig::default() }
    }

    #[test]
    fn single_well_is_constant_synthetic_tests() {
        let inputs = Inputs::new(grid(), wells(&[5.0]), None, QqMode::default()).unwrap();
        let e = run_pure_fusion(&inputs, &Bounds::default(), &quick_de(), 250.0).unwrap_err();
        assert_eq!(e.kind(), "constant_synthetic_tests");
    }

    #[test]
    fn pure_fusion_deterministic_and_persistable() {
        let inputs = Inputs::new(grid(), wells(&[3.0, 10.0, 30.0, 100.0, 7.0, 50.0]), None, QqMode::default()).unwrap();
        let a = run_pure_fusion(&inputs, &Bounds::default(), &quick_de(), 250.0).unwrap();
        let b = run_pure_fusion(&inputs, &Bounds::default(), &quick_de(), 250.0).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.fusion.perm_map.values(), b.fusion.perm_map.values());
        assert_eq!(a.params.w_s, 0.0);
        assert_eq!(a.wells.len(), 6);

        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path(), "pure").unwrap();
        let c = StageResult::load(dir.path(), "pure", &inputs.grid).unwrap();
        assert_eq!(c.params, a.params);
        assert_eq!(c.eval, a.eval);
        assert_eq!(c.fusion.perm_map.values(), a.fusion.perm_map.values());

        // held-out scoring against itself is the plain LOO score
        assert_eq!(held_out_metrics(&a, &a).unwrap(), a.loocv);
    }

    #[test]
    fn report_bundle() {
        let inputs = Inputs::new(grid(), wells(&[3.0, 10.0, 30.0, 100.0, 7.0]), None, QqMode::default()).unwrap();
        let pure = run_pure_fusion(&inputs, &Bounds::default(), &quick_de(), 250.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(report(&Results::default(), dir.path()).unwrap_err().kind(), "empty_results");
        let cfg = RunConfig::default();
        let res = Results { config: Some(&cfg), pure: Some(&pure), ..Results::default() };
        report(&res, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "metric,pure_all,pure_excluded,complete_all,complete_excluded");
        assert_eq!(lines[1].split(',').count(), 5);
        assert!(lines[2].starts_with(&format!("r2,{}", pure.loocv.r2)));
        assert!(dir.path().join("pure_perm.csv").exists());
        let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
        assert!(summary.contains(&cfg.hash().unwrap()));
        assert_eq!(cfg.hash().unwrap(), RunConfig::default().hash().unwrap());
    }

    #[test]
    fn config_paths_resolve() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(&p, r#"{"wells": "w.csv", "seismic": {"header": "s.json", "horizon": "/abs/h.csv"}}"#).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.wells, dir.path().join("w.csv"));
        assert_eq!(cfg.seismic.unwrap().horizon, PathBuf::from("/abs/h.csv"));
        assert_eq!(cfg.percentile, 0.5);
    }
}
