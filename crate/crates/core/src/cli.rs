//! Command-line driver: config loading, experiment orchestration and
//! CSV/JSON emission.
//!
//! Every random stream is derived from the top-level `seed` with
//! [`derive_seed`] and a purpose string of the form `"<command>/<purpose>"`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    evaluate_reference, evaluate_simulated, layer_sensitivity_scan, predict, quantization_ablation,
    range_utilization, score, sweep, Executor, MetricReport, SweepGrid,
};
use crate::costmodel::{cost_report, CostParams, CostReport};
use crate::dataset::Dataset;
use crate::dnf::{dnf_train, estimate_noise_profile, TrainConfig, MIN_SAMPLES};
use crate::error::{Error, Result};
use crate::fixtures::{generate, FixtureKind};
use crate::model::ModelGraph;
use crate::noise::derive_seed;
use crate::photocore::{PhotocoreConfig, Placement};

pub const SWEEP_HEADER: &str = "n,gain,miou,pixel_acc,energy_rel,throughput_ips,utilization";
pub const SENSITIVITY_HEADER: &str = "layer_index,layer_kind,miou_fp32,miou_quantized,miou_drop";
pub const ABLATION_HEADER: &str = "setting,pixel_acc_pct_fp32,miou_pct_fp32";
pub const ENERGY_HEADER: &str = "n,gain,time_rel,power_rel,energy_rel,utilization";
pub const RANGEUTIL_HEADER: &str = "layer_index,output_bits,max_abs,mean,std,three_sigma_level_fraction";
pub const HISTOGRAM_HEADER: &str = "level,fraction";

#[derive(Debug, Parser)]
#[command(name = "photocore-sim", version, about = "Photonic matrix-vector engine simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the dataset through the simulated array and score it.
    Simulate(RunArgs),
    /// Accuracy and cost over a grid of tile sizes and gains.
    Sweep(RunArgs),
    /// Accuracy drop with each eligible layer alone on the array.
    Sensitivity(RunArgs),
    /// Single-stage quantization bypass on one layer.
    Ablation(RunArgs),
    /// Output-range usage of one layer.
    Rangeutil(RunArgs),
    /// Analytic time, power and energy over a grid.
    Energy(RunArgs),
    /// Write a synthetic model, dataset and config.
    Genfixture(GenArgs),
    /// Noise profiling followed by noisy fine-tuning.
    Dnf(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's top-level seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// uniform, outlier-layer, outlier-row, saturating, cnn-workload or maskformer-workload.
    #[arg(long)]
    pub kind: Option<FixtureKind>,
    /// Config with a `[genfixture]` section, used when `--kind` is absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Inferences per batch in the cost model.
    pub batch: Option<usize>,
    pub model: Option<ModelSection>,
    pub dataset: Option<DatasetSection>,
    pub photocore: PhotocoreConfig,
    pub cost: CostParams,
    pub sweep: GridSection,
    pub energy: GridSection,
    pub ablation: LayerSection,
    pub rangeutil: LayerSection,
    pub profile: ProfileSection,
    pub dnf: TrainConfig,
    pub output: OutputSection,
    pub genfixture: GenSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
    /// Training and calibration split for `dnf`.
    pub train_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub tile_sizes: Vec<usize>,
    pub gains: Vec<f64>,
    /// Noise seeds averaged per grid point (sweep only).
    pub seeds: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { tile_sizes: vec![16, 32, 64, 128, 256, 512], gains: vec![1.0, 2.0, 4.0], seeds: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayerSection {
    pub layer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    pub min_samples: usize,
}

impl Default for ProfileSection {
    fn default() -> Self {
        ProfileSection { min_samples: MIN_SAMPLES }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub kind: Option<String>,
}

impl RunConfig {
    /// Parses a config file; relative paths inside it are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::Config(format!("config file not found: {}", path.display())));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(m) = &mut cfg.model {
            fix(&mut m.path);
        }
        if let Some(d) = &mut cfg.dataset {
            fix(&mut d.path);
            if let Some(t) = &mut d.train_path {
                fix(t);
            }
        }
        match &mut cfg.output.dir {
            Some(d) => fix(d),
            None => cfg.output.dir = Some(base.join("out")),
        }
        Ok(cfg)
    }

    fn model(&self) -> Result<ModelGraph> {
        let path = &self.model.as_ref().ok_or_else(|| Error::Config("missing [model] path".into()))?.path;
        ModelGraph::load(existing(path, "model file")?)
    }

    fn dataset(&self) -> Result<Dataset> {
        let path = &self.dataset.as_ref().ok_or_else(|| Error::Config("missing [dataset] path".into()))?.path;
        let ds = Dataset::load(existing(path, "dataset directory")?)?;
        if ds.is_empty() {
            return Err(Error::Config(format!("dataset directory has no samples: {}", path.display())));
        }
        Ok(ds)
    }

    fn train_dataset(&self) -> Result<Dataset> {
        let path = self
            .dataset
            .as_ref()
            .and_then(|d| d.train_path.as_ref())
            .ok_or_else(|| Error::Config("missing [dataset] train_path".into()))?;
        let ds = Dataset::load(existing(path, "training directory")?)?;
        if ds.is_empty() {
            return Err(Error::Config(format!("training directory has no samples: {}", path.display())));
        }
        Ok(ds)
    }

    fn batch(&self) -> Result<usize> {
        match self.batch {
            Some(0) => Err(Error::Config("batch must be at least 1".into())),
            Some(b) => Ok(b),
            None => Ok(1),
        }
    }

    /// Photocore settings with the noise seed taken from the run seed.
    fn photocore(&self, command: &str) -> Result<PhotocoreConfig> {
        let cfg = PhotocoreConfig { rng_seed: derive_seed(self.seed, &format!("{command}/photocore")), ..self.photocore.clone() };
        cfg.resolve()?;
        Ok(cfg)
    }

    fn layer(section: &LayerSection, name: &str) -> Result<usize> {
        section.layer.ok_or_else(|| Error::Config(format!("missing [{name}] layer")))
    }
}

fn existing<'a>(path: &'a Path, what: &str) -> Result<&'a Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::Config(format!("{what} not found: {}", path.display())))
    }
}

/// 2 for configuration problems and missing inputs, 1 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Genfixture(a) => cmd_genfixture(a),
        Command::Simulate(a) => with_config(a, cmd_simulate),
        Command::Sweep(a) => with_config(a, cmd_sweep),
        Command::Sensitivity(a) => with_config(a, cmd_sensitivity),
        Command::Ablation(a) => with_config(a, cmd_ablation),
        Command::Rangeutil(a) => with_config(a, cmd_rangeutil),
        Command::Energy(a) => with_config(a, cmd_energy),
        Command::Dnf(a) => with_config(a, cmd_dnf),
    }
}

fn with_config(args: &RunArgs, f: impl FnOnce(&RunConfig, &Path) -> Result<()>) -> Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = match &args.out {
        Some(o) => o.clone(),
        None => cfg.output.dir.clone().expect("set by load"),
    };
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    f(&cfg, &out)
}

fn write_file(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

fn write_json(path: PathBuf, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    write_file(path, &text)
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    seed: u64,
    photocore: &'a PhotocoreConfig,
    metrics: MetricReport,
    fp32: MetricReport,
    energy: f64,
    throughput: f64,
    utilization: f64,
    cost: CostReport,
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = cfg.model()?;
    let data = cfg.dataset()?;
    let pc = cfg.photocore("simulate")?;
    let fp32 = evaluate_reference(&model, &data)?;
    let masks = predict(&model, &data, Executor::Simulated { cfg: &pc, placement: Placement::Declared })?;
    let metrics = score(&model, &data, &masks)?.relative_to(&fp32);
    let cost = cost_report(&model, pc.tile_size, pc.gain, cfg.batch()?, &cfg.cost)?;
    let pred_dir = out.join("predictions");
    fs::create_dir_all(&pred_dir).map_err(|e| Error::io(&pred_dir, e))?;
    for (i, m) in masks.iter().enumerate() {
        m.to_tensor().save(pred_dir.join(format!("pred_{i:04}.pcten")))?;
    }
    let report = SimulateReport {
        seed: cfg.seed,
        photocore: &pc,
        metrics,
        fp32,
        energy: cost.energy,
        throughput: cost.throughput,
        utilization: cost.utilization,
        cost,
    };
    write_json(out.join("report.json"), &report)
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = cfg.model()?;
    let data = cfg.dataset()?;
    let g = &cfg.sweep;
    if g.seeds == 0 {
        return Err(Error::Config("[sweep] seeds must be at least 1".into()));
    }
    let grid = SweepGrid {
        tile_sizes: g.tile_sizes.clone(),
        gains: g.gains.clone(),
        seeds: (0..g.seeds).map(|i| derive_seed(cfg.seed, &format!("sweep/photocore/{i}"))).collect(),
        batch: cfg.batch()?,
    };
    let base = cfg.photocore("sweep")?;
    let rows = sweep(&model, &data, &grid, &base, &cfg.cost)?;
    let lines = rows.iter().map(|r| {
        format!(
            "{},{},{},{},{},{},{}",
            r.n, r.gain, r.miou, r.pixel_acc, r.energy_rel, r.throughput_ips, r.utilization
        )
    });
    write_file(out.join("sweep.csv"), &csv(SWEEP_HEADER, lines))
}

pub fn cmd_sensitivity(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = cfg.model()?;
    let data = cfg.dataset()?;
    let rows = layer_sensitivity_scan(&model, &data, &cfg.photocore("sensitivity")?)?;
    let lines = rows.iter().map(|r| {
        format!(
            "{},{},{},{},{}",
            r.layer_index,
            r.layer_kind.as_str(),
            r.miou_fp32,
            r.miou_quantized,
            r.metric_drop
        )
    });
    write_file(out.join("sensitivity.csv"), &csv(SENSITIVITY_HEADER, lines))
}

pub fn cmd_ablation(cfg: &RunConfig, out: &Path) -> Result<()> {
    let layer = RunConfig::layer(&cfg.ablation, "ablation")?;
    let model = cfg.model()?;
    let data = cfg.dataset()?;
    let table = quantization_ablation(&model, &data, &cfg.photocore("ablation")?, layer)?;
    let lines = table.rows.iter().map(|r| {
        let pct = r.report.percent_of_fp32;
        format!(
            "{},{},{}",
            r.setting.as_str(),
            opt(pct.map(|p| p.pixel_accuracy)),
            opt(pct.map(|p| p.miou))
        )
    });
    write_file(out.join("ablation.csv"), &csv(ABLATION_HEADER, lines))
}

pub fn cmd_rangeutil(cfg: &RunConfig, out: &Path) -> Result<()> {
    let layer = RunConfig::layer(&cfg.rangeutil, "rangeutil")?;
    let model = cfg.model()?;
    let data = cfg.dataset()?;
    let bits = cfg.photocore.output_bits;
    let r = range_utilization(&model, &data, layer, bits)?;
    let row = format!("{},{},{},{},{},{}", r.layer_index, bits, r.max_abs, r.mean, r.std, r.three_sigma_level_fraction);
    write_file(out.join("rangeutil.csv"), &csv(RANGEUTIL_HEADER, [row]))?;
    let delta = (r.histogram.len() / 2) as i64;
    let lines = r.histogram.iter().enumerate().map(|(i, f)| format!("{},{}", i as i64 - delta, f));
    write_file(out.join("rangeutil_histogram.csv"), &csv(HISTOGRAM_HEADER, lines))
}

pub fn cmd_energy(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = cfg.model()?;
    let g = &cfg.energy;
    if g.tile_sizes.is_empty() || g.gains.is_empty() {
        return Err(Error::Config("[energy] tile_sizes and gains must be non-empty".into()));
    }
    let batch = cfg.batch()?;
    let mut ns = g.tile_sizes.clone();
    ns.sort_unstable();
    let mut gains = g.gains.clone();
    gains.sort_by(f64::total_cmp);
    let mut reports = Vec::with_capacity(ns.len() * gains.len());
    for &n in &ns {
        for &gain in &gains {
            reports.push(cost_report(&model, n, gain, batch, &cfg.cost)?);
        }
    }
    let first = reports[0];
    let rel = |v: f64, base: f64| if base > 0.0 { v / base } else { v };
    let mut body = String::new();
    writeln!(body, "{ENERGY_HEADER}").unwrap();
    for r in &reports {
        writeln!(
            body,
            "{},{},{},{},{},{}",
            r.n,
            r.gain,
            rel(r.time, first.time),
            rel(r.power, first.power),
            rel(r.energy, first.energy),
            r.utilization
        )
        .unwrap();
    }
    write_file(out.join("energy.csv"), &body)
}

#[derive(Serialize)]
struct DnfReport<'a> {
    seed: u64,
    photocore: &'a PhotocoreConfig,
    train: &'a TrainConfig,
    initial_loss: f64,
    final_loss: f64,
    epoch_losses: &'a [f64],
    fp32_before: MetricReport,
    fp32_after: MetricReport,
    simulated_before: MetricReport,
    simulated_after: MetricReport,
}

pub fn cmd_dnf(cfg: &RunConfig, out: &Path) -> Result<()> {
    let model = cfg.model()?;
    let data = cfg.dataset()?;
    let train = cfg.train_dataset()?;
    let pc = cfg.photocore("dnf")?;
    let profile_cfg = PhotocoreConfig { rng_seed: derive_seed(cfg.seed, "dnf/profile"), ..pc.clone() };
    let profile = estimate_noise_profile(&model, &train, &profile_cfg, cfg.profile.min_samples)?;
    let tc = TrainConfig { seed: derive_seed(cfg.seed, "dnf/train"), ..cfg.dnf.clone() };
    let outcome = dnf_train(&model, &train, &profile, &tc)?;
    let fp32_before = evaluate_reference(&model, &data)?;
    let fp32_after = evaluate_reference(&outcome.model, &data)?;
    let simulated_before = evaluate_simulated(&model, &data, &pc, Placement::Declared)?.relative_to(&fp32_before);
    let simulated_after =
        evaluate_simulated(&outcome.model, &data, &pc, Placement::Declared)?.relative_to(&fp32_before);
    profile.save(out.join("noise_profile.json"))?;
    outcome.model.save(out.join("model_dnf.json"))?;
    let report = DnfReport {
        seed: cfg.seed,
        photocore: &pc,
        train: &tc,
        initial_loss: outcome.initial_loss,
        final_loss: outcome.final_loss,
        epoch_losses: &outcome.epoch_losses,
        fp32_before,
        fp32_after,
        simulated_before,
        simulated_after,
    };
    write_json(out.join("dnf_report.json"), &report)
}

pub fn cmd_genfixture(args: &GenArgs) -> Result<()> {
    let from_cfg = match &args.config {
        Some(p) => Some(RunConfig::load(p)?),
        None => None,
    };
    let kind = match (args.kind, from_cfg.as_ref().and_then(|c| c.genfixture.kind.as_deref())) {
        (Some(k), _) => k,
        (None, Some(s)) => s.parse()?,
        (None, None) => return Err(Error::Config("genfixture needs --kind or a [genfixture] kind".into())),
    };
    let seed = args.seed.or(from_cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let out = match (&args.out, &from_cfg) {
        (Some(o), _) => o.clone(),
        (None, Some(c)) => c.output.dir.clone().expect("set by load"),
        (None, None) => PathBuf::from("."),
    };
    generate(kind, seed)?.write(out)
}
