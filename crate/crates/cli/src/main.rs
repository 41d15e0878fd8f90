use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use permfuse::fusion::fuse_map;
use permfuse::ingest::{availability, write_wells};
use permfuse::pipeline::{
    ablation_study, excluded_wells, prepare_inputs, report, run_complete_fusion, run_pure_fusion, run_seismic_stage,
    Exclusion, Inputs, Results, RunConfig, SeismicStage, StageResult, Workflow,
};
use permfuse::preprocess::ks_distance;
use permfuse::synthgen::{generate, SynthConfig};
use permfuse::{Error, GridMap, KernelParams, MapKind, Result};

#[derive(Parser)]
#[command(name = "permfuse", version, about = "Permeability map fusion of well logs, well tests and seismic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Run config (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Differential evolution seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    percentile: Option<f64>,
    /// Seed complete-fusion DE with the pure-fusion optimum.
    #[arg(long)]
    warm_start: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse wells, convert well tests to absolute permeability and
    /// summarize data availability.
    Ingest(Overrides),
    /// Apply the Q-Q transform to well-log values.
    QqTransform(Overrides),
    /// Fuse a map with fixed kernel parameters.
    Fuse {
        #[command(flatten)]
        o: Overrides,
        /// Kernel parameters (JSON); defaults to the built-in set.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Include the predicted seismic map from the output directory.
        #[arg(long)]
        with_seismic: bool,
    },
    /// Optimize kernel parameters and fuse without seismic.
    Optimize(Overrides),
    /// Train the seismic network on the expanded training set.
    TrainSeismic(Overrides),
    /// Predict a permeability map from seismic with the trained network.
    PredictSeismic(Overrides),
    /// Re-optimize with the seismic map and fuse all sources.
    CompleteFuse(Overrides),
    /// Repeat the workflow without some wells and compare.
    Ablate {
        #[command(flatten)]
        o: Overrides,
        /// Comma-separated well ids; overrides the config's exclusion rule.
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
    },
    /// Write metrics, maps, parameters and a summary for completed stages.
    Report(Overrides),
    /// Generate a synthetic dataset with its run config.
    Synth {
        /// Synthetic field config (JSON); defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_config(o: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&o.config)?;
    if let Some(d) = &o.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(s) = o.seed {
        cfg.de.seed = s;
    }
    if let Some(g) = o.generations {
        cfg.de.generations = g;
    }
    if let Some(p) = o.population {
        cfg.de.population = p;
    }
    if let Some(e) = o.epochs {
        cfg.train.epochs = e;
    }
    if let Some(p) = o.percentile {
        cfg.percentile = p;
    }
    cfg.warm_start |= o.warm_start;
    cfg.validate()?;
    Ok(cfg)
}

fn setup(o: &Overrides) -> Result<(RunConfig, Inputs)> {
    let cfg = load_config(o)?;
    let inputs = prepare_inputs(&cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok((cfg, inputs))
}

fn stage_summary(s: &StageResult) -> Value {
    json!({ "params": s.params, "mse": s.loocv.mse, "r2": s.loocv.r2, "objective": s.eval.f, "evaluations": s.evaluations })
}

fn exists(dir: &Path, name: &str) -> bool {
    dir.join(name).exists()
}

fn run(cmd: Command) -> Result<Value> {
    match cmd {
        Command::Synth { config, out, seed } => {
            let mut sc: SynthConfig = match config {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                sc.seed = s;
            }
            let data = generate(&sc)?;
            let run = data.write(&out)?;
            Ok(json!({ "run_config": run, "wells": data.wells.len(), "grid_points": data.grid.len() }))
        }
        Command::Ingest(o) => {
            let (cfg, inputs) = setup(&o)?;
            let path = cfg.out_dir.join("wells_ingested.csv");
            write_wells(&path, &inputs.wells)?;
            let a = availability(&inputs.wells);
            Ok(json!({
                "wells": inputs.wells.len(),
                "both": a.both, "log_only": a.log_only, "test_only": a.test_only, "neither": a.neither,
                "grid_points": inputs.grid.len(),
                "seismic": inputs.volume.as_ref().map(|v| v.dims()),
                "output": path,
            }))
        }
        Command::QqTransform(o) => {
            let (cfg, inputs) = setup(&o)?;
            let path = cfg.out_dir.join("wells_qq.csv");
            write_wells(&path, &inputs.wells)?;
            let wl: Vec<f64> = inputs.wells.iter().filter_map(|w| w.k_wl_qq).collect();
            let wt: Vec<f64> = inputs.wells.iter().filter_map(|w| w.fusion_wt()).collect();
            let ks = (!wl.is_empty() && !wt.is_empty()).then(|| ks_distance(&wl, &wt));
            Ok(json!({ "transformed": wl.len(), "ks_distance": ks, "output": path }))
        }
        Command::Fuse { o, params, with_seismic } => {
            let (cfg, inputs) = setup(&o)?;
            let params: KernelParams = match params {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
                None => KernelParams::default(),
            };
            let seis = if with_seismic {
                Some(GridMap::read_csv(&cfg.out_dir.join("seismic_perm.csv"), inputs.grid.clone(), MapKind::Permeability)?)
            } else {
                None
            };
            let f = fuse_map(&inputs.wells, seis.as_ref(), &params, &inputs.grid)?;
            f.perm_map.write_csv(&cfg.out_dir.join("fused_perm.csv"))?;
            f.confidence_map.write_csv(&cfg.out_dir.join("fused_confidence.csv"))?;
            Ok(json!({ "params": params, "sources": f.sources(), "min": f.perm_map.min(), "max": f.perm_map.max() }))
        }
        Command::Optimize(o) => {
            let (cfg, inputs) = setup(&o)?;
            let pure = run_pure_fusion(&inputs, &cfg.bounds, &cfg.de, cfg.r_dr)?;
            pure.save(&cfg.out_dir, "pure")?;
            Ok(stage_summary(&pure))
        }
        Command::TrainSeismic(o) => {
            let (cfg, inputs) = setup(&o)?;
            let pure = StageResult::load(&cfg.out_dir, "pure", &inputs.grid)?;
            let s = run_seismic_stage(&inputs, &pure, &cfg)?;
            s.save(&cfg.out_dir)?;
            Ok(json!({
                "samples": s.n_samples,
                "best_epoch": s.report.best_epoch,
                "train_loss": s.report.train_loss.last(),
                "val_loss": s.report.val_loss.get(s.report.best_epoch),
                "failed_points": s.failed.len(),
            }))
        }
        Command::PredictSeismic(o) => {
            let (cfg, inputs) = setup(&o)?;
            let net = permfuse::seismic::SeismicNet::load(&cfg.out_dir.join("seismic_net.json"))?;
            let volume = inputs
                .volume
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("config has no seismic volume".into()))?;
            let pred = permfuse::seismic::predict_map(&net, volume, &inputs.grid)?;
            let path = cfg.out_dir.join("seismic_predicted.csv");
            pred.map.write_csv(&path)?;
            Ok(json!({ "output": path, "failed_points": pred.failed.len(), "min": pred.map.min(), "max": pred.map.max() }))
        }
        Command::CompleteFuse(o) => {
            let (cfg, inputs) = setup(&o)?;
            let pure = StageResult::load(&cfg.out_dir, "pure", &inputs.grid)?;
            let seis = GridMap::read_csv(&cfg.out_dir.join("seismic_perm.csv"), inputs.grid.clone(), MapKind::Permeability)?;
            let complete = run_complete_fusion(&inputs, &pure, &seis, &cfg.bounds, &cfg.de, cfg.r_dr, cfg.warm_start)?;
            complete.save(&cfg.out_dir, "complete")?;
            Ok(stage_summary(&complete))
        }
        Command::Ablate { o, exclude } => {
            let (cfg, inputs) = setup(&o)?;
            let rule = if exclude.is_empty() { cfg.exclusion.clone() } else { Exclusion::Ids { ids: exclude } };
            let base = Workflow {
                pure: StageResult::load(&cfg.out_dir, "pure", &inputs.grid)?,
                seismic: SeismicStage::load(&cfg.out_dir, &inputs.grid)?,
                complete: StageResult::load(&cfg.out_dir, "complete", &inputs.grid)?,
            };
            // fail fast before the long rerun
            let ids = excluded_wells(&inputs.wells, &rule)?;
            if !ids.is_empty() {
                inputs.without(&ids)?;
            }
            let res = ablation_study(&inputs, &cfg, &base, &rule)?;
            let dir = cfg.out_dir.join("ablation");
            res.reduced.pure.save(&dir, "pure")?;
            res.reduced.seismic.save(&dir)?;
            res.reduced.complete.save(&dir, "complete")?;
            res.diff_pure.write_csv(&dir.join("diff_pure.csv"))?;
            res.diff_complete.write_csv(&dir.join("diff_complete.csv"))?;
            std::fs::write(
                dir.join("ablation.json"),
                serde_json::to_string_pretty(&json!({ "excluded": res.excluded, "table": res.table }))?,
            )?;
            report(&Results::from_workflow(&cfg, &base, Some(&res)), &cfg.out_dir.join("report"))?;
            Ok(json!({ "excluded": res.excluded, "table": res.table }))
        }
        Command::Report(o) => {
            let cfg = load_config(&o)?;
            let grid = std::sync::Arc::new(permfuse::Grid::read(&cfg.grid)?);
            let dir = &cfg.out_dir;
            let pure = exists(dir, "pure_stage.json").then(|| StageResult::load(dir, "pure", &grid)).transpose()?;
            let complete =
                exists(dir, "complete_stage.json").then(|| StageResult::load(dir, "complete", &grid)).transpose()?;
            let seis = exists(dir, "seismic_perm.csv")
                .then(|| GridMap::read_csv(&dir.join("seismic_perm.csv"), grid.clone(), MapKind::Permeability))
                .transpose()?;
            let results = Results {
                config: Some(&cfg),
                pure: pure.as_ref(),
                seismic_map: seis.as_ref(),
                complete: complete.as_ref(),
                ablation: None,
            };
            let files = report(&results, &dir.join("report"))?;
            Ok(json!({ "files": files, "config_sha256": cfg.hash()? }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
